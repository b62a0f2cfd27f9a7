//! Real-time simulation served over WebSocket at `/ws`.
//!
//! The simulation runs on its own thread at wall-clock rate and publishes a
//! snapshot after every broadcast period. Socket tasks forward snapshots to
//! their client and push leader inputs and commands to the simulation through
//! a queue; both are applied at the next tick boundary.
//!
//! The first client to connect while no leader is present becomes the leader.
//! Other clients receive the same state stream and have their inputs and
//! commands rejected with an error frame. With no leader connected the
//! scripted hold leader acts on the object.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};

use cotransport_core::metrics::EFFORT_EPSILON;

use crate::log::TickRecord;
use crate::protocol::{decode_client, Body, ClientMessage, Command, Frame, Role, StateFrame};
use crate::scenario::{bundled_named, ComplianceCase, Scenario};
use crate::sim::{LeaderInput, SimConfig, Simulation};

/// Scenario the live service idles in.
pub const LIVE_SCENARIO: &str = "live-hold";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub sim: SimConfig,
    pub scenario: Scenario,
    /// State broadcasts per second.
    pub broadcast_hz: f64,
    /// Window of the rolling efficiency, s.
    pub eta_window: f64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), scenario: bundled_named(LIVE_SCENARIO).expect("live scenario is bundled"), broadcast_hz: 50.0, eta_window: 7.67 }
    }
}

/// Snapshot shared with socket tasks; the role is filled in per client.
#[derive(Debug, Clone, Default)]
struct Snapshot {
    paused: bool,
    record: Option<TickRecord>,
    eta: Option<f64>,
    input: Option<LeaderInput>,
    pending_case: Option<u8>,
    resets: u64,
    fault: Option<String>,
}

impl Snapshot {
    fn frame(&self, role: Role) -> Frame {
        Frame::new(Body::State(Box::new(StateFrame {
            role,
            paused: self.paused,
            record: self.record,
            eta: self.eta,
            input: self.input,
            pending_case: self.pending_case,
            resets: self.resets,
            fault: self.fault.clone(),
        })))
    }
}

#[derive(Debug)]
enum Control {
    Input(LeaderInput),
    Cmd(Command),
    /// The leader left; fall back to the scripted leader.
    Released,
}

#[derive(Clone)]
struct AppState {
    control: mpsc::UnboundedSender<Control>,
    snapshots: watch::Receiver<Arc<Snapshot>>,
    leader: Arc<Mutex<Option<u64>>>,
    next_id: Arc<AtomicU64>,
}

/// Trailing-window efficiency from running trapezoid sums.
struct RollingEta {
    window: usize,
    terms: VecDeque<(f64, f64)>,
    net: f64,
    total: f64,
    last: Option<(f64, f64)>,
}

impl RollingEta {
    fn new(window: f64, dt: f64) -> Self {
        Self { window: (window / dt).round().max(1.0) as usize, terms: VecDeque::new(), net: 0.0, total: 0.0, last: None }
    }

    fn clear(&mut self) {
        *self = Self { window: self.window, terms: VecDeque::new(), net: 0.0, total: 0.0, last: None };
    }

    fn push(&mut self, r: &TickRecord, dt: f64) {
        let v = (r.object_vx, r.object_vy);
        let dot = |f: (f64, f64)| f.0 * v.0 + f.1 * v.1;
        let net = dot((r.fh_x + r.fr_x, r.fh_y + r.fr_y)).abs();
        let total = dot((r.fh_x, r.fh_y)).abs() + dot((r.fr_x, r.fr_y)).abs();
        if let Some((n0, s0)) = self.last {
            let term = (0.5 * dt * (n0 + net), 0.5 * dt * (s0 + total));
            self.net += term.0;
            self.total += term.1;
            self.terms.push_back(term);
            if self.terms.len() > self.window {
                let (n, s) = self.terms.pop_front().expect("non-empty");
                self.net -= n;
                self.total -= s;
            }
        }
        self.last = Some((net, total));
    }

    fn value(&self) -> Option<f64> {
        if self.terms.len() < self.window {
            None
        } else if self.total < EFFORT_EPSILON {
            Some(1.0)
        } else {
            Some((self.net / self.total).clamp(0.0, 1.0))
        }
    }
}

struct Runner {
    cfg: LiveConfig,
    sim: Simulation,
    case: ComplianceCase,
    input: Option<LeaderInput>,
    paused: bool,
    eta: RollingEta,
    record: Option<TickRecord>,
    resets: u64,
    fault: Option<String>,
}

impl Runner {
    fn new(cfg: LiveConfig) -> Result<Self, String> {
        let sim = Self::fresh(&cfg, cfg.scenario.case)?;
        Ok(Self {
            eta: RollingEta::new(cfg.eta_window, cfg.sim.gait.dt),
            case: cfg.scenario.case,
            sim,
            cfg,
            input: None,
            paused: false,
            record: None,
            resets: 0,
            fault: None,
        })
    }

    fn fresh(cfg: &LiveConfig, case: ComplianceCase) -> Result<Simulation, String> {
        let scenario = Scenario { case, ..cfg.scenario.clone() };
        let mut sim = Simulation::new(&scenario, cfg.sim).map_err(|e| e.to_string())?;
        sim.start().map_err(|e| e.to_string())?;
        Ok(sim)
    }

    fn reset(&mut self) {
        let case = self.sim.state.pending_case.unwrap_or(self.sim.state.case);
        match Self::fresh(&self.cfg, case) {
            Ok(sim) => self.sim = sim,
            Err(e) => self.fault = Some(e),
        }
        self.case = case;
        self.eta.clear();
        self.record = None;
        self.resets += 1;
    }

    fn apply(&mut self, c: Control) {
        match c {
            Control::Input(i) => {
                let (f, m) = self.sim.leader_model().saturate(cotransport_core::Vec2::new(i.f_x, i.f_y), i.m_z);
                self.input = Some(LeaderInput { f_x: f.x, f_y: f.y, m_z: m });
            }
            Control::Released => self.input = None,
            Control::Cmd(Command::Pause) => self.paused = true,
            Control::Cmd(Command::Resume) => self.paused = false,
            Control::Cmd(Command::Reset) => {
                self.input = self.input.map(|_| LeaderInput::default());
                self.fault = None;
                self.reset();
            }
            Control::Cmd(Command::SetCase { case }) => {
                if let Ok(c) = ComplianceCase::new(case) {
                    self.sim.set_case(c);
                }
            }
        }
    }

    fn tick(&mut self) {
        match self.sim.step(self.input) {
            Ok(tick) => {
                self.eta.push(&tick.record, self.cfg.sim.gait.dt);
                self.record = Some(tick.record);
            }
            Err(e) => {
                self.fault = Some(e.to_string());
                self.reset();
            }
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            paused: self.paused,
            record: self.record,
            eta: self.eta.value(),
            input: self.input,
            pending_case: self.sim.state.pending_case.map(ComplianceCase::number),
            resets: self.resets,
            fault: self.fault.clone(),
        }
    }
}

fn run_sim(mut runner: Runner, mut control: mpsc::UnboundedReceiver<Control>, snapshots: watch::Sender<Arc<Snapshot>>) {
    let dt = runner.cfg.sim.gait.dt;
    let period = Duration::from_secs_f64(1.0 / runner.cfg.broadcast_hz);
    let ticks = ((1.0 / runner.cfg.broadcast_hz) / dt).round().max(1.0) as usize;
    let mut deadline = Instant::now();
    loop {
        for _ in 0..ticks {
            loop {
                match control.try_recv() {
                    Ok(c) => runner.apply(c),
                    Err(mpsc::error::TryRecvError::Empty) => break,
                    Err(mpsc::error::TryRecvError::Disconnected) => return,
                }
            }
            if !runner.paused {
                runner.tick();
            }
        }
        snapshots.send_replace(Arc::new(runner.snapshot()));
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else {
            // running behind: do not try to catch up in a burst
            deadline = now;
        }
    }
}

/// Router for the live service, with the simulation thread started.
pub fn app(cfg: LiveConfig) -> Result<Router, String> {
    let runner = Runner::new(cfg)?;
    let (control_tx, control_rx) = mpsc::unbounded_channel();
    let (snap_tx, snap_rx) = watch::channel(Arc::new(runner.snapshot()));
    std::thread::Builder::new().name("live-sim".into()).spawn(move || run_sim(runner, control_rx, snap_tx)).map_err(|e| e.to_string())?;
    let state = AppState { control: control_tx, snapshots: snap_rx, leader: Arc::new(Mutex::new(None)), next_id: Arc::new(AtomicU64::new(0)) };
    Ok(Router::new().route("/ws", get(upgrade)).with_state(state))
}

/// Serve on an already bound listener until the future is dropped.
pub async fn serve(listener: TcpListener, cfg: LiveConfig) -> std::io::Result<()> {
    let router = app(cfg).map_err(std::io::Error::other)?;
    axum::serve(listener, router).await
}

/// Bind `0.0.0.0:port` and serve forever on a fresh runtime.
pub fn serve_blocking(port: u16, sim: SimConfig) -> std::io::Result<()> {
    let cfg = LiveConfig { sim, ..LiveConfig::default() };
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(async move {
        let listener = TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
        eprintln!("serving on ws://{}/ws", listener.local_addr()?);
        serve(listener, cfg).await
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(mut socket: WebSocket, state: AppState) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let role = {
        let mut leader = state.leader.lock().expect("leader lock");
        if leader.is_none() {
            *leader = Some(id);
            Role::Leader
        } else {
            Role::Viewer
        }
    };
    if role == Role::Leader {
        let _ = state.control.send(Control::Input(LeaderInput::default()));
    }
    let mut snapshots = state.snapshots.clone();
    snapshots.mark_changed();
    loop {
        tokio::select! {
            changed = snapshots.changed() => {
                if changed.is_err() {
                    break;
                }
                let text = snapshots.borrow_and_update().frame(role).to_json();
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        if reply(&mut socket, Frame::error("frames must be JSON text")).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let error = match decode_client(text.as_str()) {
                    Err(e) => Some(e.to_string()),
                    Ok(_) if role == Role::Viewer => Some("read-only client: another client is the leader".to_string()),
                    Ok(ClientMessage::Cmd(Command::SetCase { case })) if ComplianceCase::new(case).is_err() => {
                        Some(format!("no compliance case {case}; expected 1 to 4"))
                    }
                    Ok(ClientMessage::Input(i)) => {
                        let _ = state.control.send(Control::Input(i));
                        None
                    }
                    Ok(ClientMessage::Cmd(c)) => {
                        let _ = state.control.send(Control::Cmd(c));
                        None
                    }
                };
                if let Some(message) = error {
                    if reply(&mut socket, Frame::error(message)).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
    if role == Role::Leader {
        *state.leader.lock().expect("leader lock") = None;
        let _ = state.control.send(Control::Released);
    }
}

async fn reply(socket: &mut WebSocket, frame: Frame) -> Result<(), axum::Error> {
    socket.send(Message::Text(frame.to_json().into())).await
}
