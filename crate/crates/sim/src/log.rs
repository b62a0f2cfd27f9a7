//! Per-tick records and their file formats.
//!
//! The tick CSV has one header row and one row per tick, columns in this order:
//!
//! | column | unit | meaning |
//! |---|---|---|
//! | `t` | s | time at the end of the tick |
//! | `robot_x`, `robot_y`, `robot_vx`, `robot_vy` | m, m/s | robot CoM |
//! | `object_x`, `object_y`, `object_vx`, `object_vy` | m, m/s | object CoM |
//! | `object_yaw`, `object_yaw_rate` | rad, rad/s | object yaw |
//! | `stance_x`, `stance_y`, `stance_yaw`, `stance_side` | m, rad, `L`/`R` | stance foot |
//! | `swing_x`, `swing_y`, `swing_z` | m | swing foot |
//! | `fh_x`, `fh_y`, `mh_z` | N, N·m | leader wrench on the object |
//! | `fr_x`, `fr_y`, `mr_z` | N, N·m | robot wrench on the object |
//! | `fz_robot`, `fz_human` | N | vertical support |
//! | `ac_x`, `ac_y` | m/s² | CoM acceleration requested by the interaction QP |
//! | `k_x_t` | N/m | modulated I-LIP forward spring |
//! | `eps_x`, `eps_y` | m | modified capture point offset, stance frame |
//! | `sep_x`, `sep_y` | m | object offset from the robot, stance frame |
//! | `case` | | active compliance case |
//!
//! Plans are written as JSON lines, one per foot strike.

use std::io::Write;

use cotransport_core::metrics::{ForceSample, VerticalSample};
use cotransport_core::mpc::FootPlan;
use cotransport_core::wbc::WbcOutput;
use cotransport_core::{FootSide, Vec2};
use serde::{Deserialize, Serialize};

use crate::sim::{Fault, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub robot_x: f64,
    pub robot_y: f64,
    pub robot_vx: f64,
    pub robot_vy: f64,
    pub object_x: f64,
    pub object_y: f64,
    pub object_vx: f64,
    pub object_vy: f64,
    pub object_yaw: f64,
    pub object_yaw_rate: f64,
    pub stance_x: f64,
    pub stance_y: f64,
    pub stance_yaw: f64,
    pub stance_side: char,
    pub swing_x: f64,
    pub swing_y: f64,
    pub swing_z: f64,
    pub fh_x: f64,
    pub fh_y: f64,
    pub mh_z: f64,
    pub fr_x: f64,
    pub fr_y: f64,
    pub mr_z: f64,
    pub fz_robot: f64,
    pub fz_human: f64,
    pub ac_x: f64,
    pub ac_y: f64,
    pub k_x_t: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub sep_x: f64,
    pub sep_y: f64,
    pub case: u8,
}

impl TickRecord {
    pub fn capture(s: &SimState, dt: f64, hand_force: Vec2, hand_moment: f64, out: &WbcOutput, support: (f64, f64), eps: Vec2) -> Self {
        let sep = s.separation();
        Self {
            t: s.time(dt),
            robot_x: s.robot.pos.x,
            robot_y: s.robot.pos.y,
            robot_vx: s.robot.vel.x,
            robot_vy: s.robot.vel.y,
            object_x: s.object.pos.x,
            object_y: s.object.pos.y,
            object_vx: s.object.vel.x,
            object_vy: s.object.vel.y,
            object_yaw: s.object_yaw,
            object_yaw_rate: s.object_yaw_rate,
            stance_x: s.stance.pos.x,
            stance_y: s.stance.pos.y,
            stance_yaw: s.stance.heading,
            stance_side: match s.stance.side {
                FootSide::Left => 'L',
                FootSide::Right => 'R',
            },
            swing_x: s.swing.x,
            swing_y: s.swing.y,
            swing_z: s.swing.z,
            fh_x: hand_force.x,
            fh_y: hand_force.y,
            mh_z: hand_moment,
            // the hands push the object with the negated wrench
            fr_x: -out.wrench.f_xy.x,
            fr_y: -out.wrench.f_xy.y,
            mr_z: -out.wrench.m_z,
            fz_robot: support.0,
            fz_human: support.1,
            ac_x: out.robot_accel.x,
            ac_y: out.robot_accel.y,
            k_x_t: s.k_x,
            eps_x: eps.x,
            eps_y: eps.y,
            sep_x: sep.x,
            sep_y: sep.y,
            case: s.case.number(),
        }
    }

    pub fn object_pos(&self) -> Vec2 {
        Vec2::new(self.object_x, self.object_y)
    }

    pub fn force_sample(&self) -> ForceSample {
        ForceSample {
            t: self.t,
            hand_force: Vec2::new(self.fh_x, self.fh_y),
            robot_force: Vec2::new(self.fr_x, self.fr_y),
            object_vel: Vec2::new(self.object_vx, self.object_vy),
        }
    }

    pub fn vertical_sample(&self) -> VerticalSample {
        VerticalSample { t: self.t, robot_fz: self.fz_robot, human_fz: self.fz_human }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub tick: u64,
    pub t: f64,
    pub plan: FootPlan,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub records: Vec<TickRecord>,
    pub plans: Vec<PlanRecord>,
    /// Set when the run stopped early; records up to the fault are kept.
    pub fault: Option<(u64, Fault)>,
}

impl SimLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_records(&self.records, out)
    }

    pub fn write_plans<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.plans {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn write_records<W: Write>(records: &[TickRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a tick CSV written by [`SimLog::write_csv`].
pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<TickRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
