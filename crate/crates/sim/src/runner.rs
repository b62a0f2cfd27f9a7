//! Scenario execution, summaries and output files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use cotransport_core::angle_diff;
use cotransport_core::metrics::{efficiency, load_share_series, mean_efficiency, EffortAxes, EffortWindow, MetricsError, MetricsRow};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leader::Reference;
use crate::log::{SimLog, TickRecord};
use crate::scenario::Scenario;
use crate::sim::{SimConfig, Simulation};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] cotransport_core::ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
}

/// Separation band around the desired offset used for settling, m.
pub const SETTLING_BAND: f64 = 0.05;
/// Start of the steady-state part of a run for heading and path errors, s.
pub const TRANSIENT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub case: u8,
    pub seed: u64,
    pub duration: f64,
    pub ticks: usize,
    pub strikes: usize,
    pub fault: Option<String>,
    /// Mean efficiency with planar forces and velocities.
    pub mean_eta_planar: Option<f64>,
    /// Mean efficiency along the initial forward axis only.
    pub mean_eta_forward: Option<f64>,
    pub max_abs_eps_x: f64,
    pub max_abs_eps_y: f64,
    /// First time after which the forward separation stays within the band.
    pub settling_time: Option<f64>,
    pub final_separation_error: f64,
    /// Largest stance heading error to the object yaw after the transient.
    pub max_heading_error: f64,
    /// RMS object distance to the reference path after the transient.
    pub rms_path_error: f64,
    pub max_hand_force: f64,
}

/// Result of running one scenario.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub log: SimLog,
    pub summary: Summary,
    pub metrics: Vec<MetricsRow>,
}

pub fn run_scenario(scenario: &Scenario, cfg: &SimConfig) -> Result<RunOutput, RunError> {
    let mut sim = Simulation::new(scenario, *cfg)?;
    let ticks = (scenario.duration / cfg.gait.dt).round() as usize;
    let mut log = SimLog { records: Vec::with_capacity(ticks), ..SimLog::default() };
    match sim.start() {
        Ok(p) => log.plans.push(p),
        Err(e) => log.fault = Some((e.tick, e.fault)),
    }
    if log.fault.is_none() {
        for _ in 0..ticks {
            match sim.step(None) {
                Ok(tick) => {
                    log.records.push(tick.record);
                    log.plans.extend(tick.plan);
                }
                Err(e) => {
                    log.fault = Some((e.tick, e.fault));
                    break;
                }
            }
        }
    }
    let metrics = metrics_rows(&log.records, &EffortWindow::default()).unwrap_or_default();
    let summary = summarize(scenario, cfg, sim.reference(), &log);
    Ok(RunOutput { scenario: scenario.clone(), log, summary, metrics })
}

/// Efficiency over sliding windows, with the other metric columns sampled at
/// each window end. A log shorter than one window has no rows.
pub fn metrics_rows(records: &[TickRecord], window: &EffortWindow) -> Result<Vec<MetricsRow>, MetricsError> {
    let samples: Vec<_> = records.iter().map(TickRecord::force_sample).collect();
    let shares = load_share_series(&records.iter().map(TickRecord::vertical_sample).collect::<Vec<_>>());
    let points = match efficiency(&samples, window, EffortAxes::Planar) {
        Err(MetricsError::EmptyWindow { .. }) => return Ok(Vec::new()),
        other => other?,
    };
    Ok(points
        .iter()
        .map(|p| {
            let i = records.partition_point(|r| r.t < p.t).min(records.len() - 1);
            let r = &records[i];
            MetricsRow { t: p.t, eta: p.eta, eps_x: r.eps_x, eps_y: r.eps_y, k_x_t: r.k_x_t, load_share: shares[i].1 }
        })
        .collect())
}

pub fn mean_eta(records: &[TickRecord], axes: EffortAxes) -> Option<f64> {
    let samples: Vec<_> = records.iter().map(TickRecord::force_sample).collect();
    efficiency(&samples, &EffortWindow::default(), axes).ok().and_then(|p| mean_efficiency(&p))
}

fn summarize(scenario: &Scenario, cfg: &SimConfig, reference: &Reference, log: &SimLog) -> Summary {
    let r = &log.records;
    let desired = cfg.params.desired_offset.x;
    let max_abs = |f: fn(&TickRecord) -> f64| r.iter().map(|x| f(x).abs()).fold(0.0, f64::max);

    let last_out = r.iter().rposition(|x| (x.sep_x - desired).abs() >= SETTLING_BAND);
    let settling_time = match last_out {
        None => Some(0.0),
        Some(i) if i + 1 < r.len() => Some(r[i].t),
        Some(_) => None,
    };

    let steady: Vec<_> = r.iter().filter(|x| x.t >= TRANSIENT).collect();
    let max_heading_error = steady.iter().map(|x| angle_diff(x.stance_yaw, x.object_yaw).abs()).fold(0.0, f64::max);
    let rms_path_error = if steady.is_empty() {
        0.0
    } else {
        (steady.iter().map(|x| reference.path_error(&x.object_pos(), x.t).powi(2)).sum::<f64>() / steady.len() as f64).sqrt()
    };

    let forward = EffortAxes::Along(cotransport_core::Vec2::new(1.0, 0.0));
    Summary {
        name: scenario.name.clone(),
        case: scenario.case.number(),
        seed: scenario.seed,
        duration: scenario.duration,
        ticks: r.len(),
        strikes: log.plans.len().saturating_sub(1),
        fault: log.fault.as_ref().map(|(tick, f)| format!("tick {tick}: {f}")),
        mean_eta_planar: mean_eta(r, EffortAxes::Planar),
        mean_eta_forward: mean_eta(r, forward),
        max_abs_eps_x: max_abs(|x| x.eps_x),
        max_abs_eps_y: max_abs(|x| x.eps_y),
        settling_time,
        final_separation_error: r.last().map_or(f64::NAN, |x| x.sep_x - desired),
        max_heading_error,
        rms_path_error,
        max_hand_force: r.iter().map(|x| x.fh_x.abs().max(x.fh_y.abs())).fold(0.0, f64::max),
    }
}

pub fn write_metrics<W: std::io::Write>(rows: &[MetricsRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["t", "eta", "eps_x", "eps_y", "K_x_t", "load_share"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `ticks.csv`, `metrics.csv`, `summary.json` and `plans.jsonl` into `dir`.
pub fn write_outputs(run: &RunOutput, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    run.log.write_csv(BufWriter::new(File::create(dir.join("ticks.csv"))?))?;
    write_metrics(&run.metrics, BufWriter::new(File::create(dir.join("metrics.csv"))?))?;
    run.log.write_plans(BufWriter::new(File::create(dir.join("plans.jsonl"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &run.summary)?;
    Ok(())
}
