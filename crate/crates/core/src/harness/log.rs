//! Per-step scenario records and the versioned CSV format.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Everything logged once per control period.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub vx: f64,
    pub vy: f64,
    pub beta: f64,
    pub phi_dot: f64,
    /// Steady-state yaw-rate demand and its friction-saturated value
    pub phi_dot_d: f64,
    pub phi_dot_ref: f64,
    pub delta_f: f64,
    pub mz: f64,
    pub torque_fl: f64,
    pub torque_fr: f64,
    pub torque_rl: f64,
    pub torque_rr: f64,
    /// Y - Y_ref(X)
    pub lateral_err: f64,
    /// phi_dot - phi_dot_ref
    pub yaw_rate_err: f64,
    pub dyc_active: bool,
    pub np: usize,
    pub q_y: f64,
    pub r_delta: f64,
    pub qp_iterations: usize,
    /// 0 = solved, 1 = infeasible fallback (command held)
    pub qp_status: u8,
    pub qp_eps: f64,
    pub qp_kkt_stationarity: f64,
    pub qp_kkt_feasibility: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub records: Vec<StepRecord>,
    /// Populated when the run stopped on a plant/controller failure; the
    /// records up to the failure are kept.
    pub aborted: Option<String>,
}

impl SimLog {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }
}

pub const CSV_VERSION_LINE: &str = "# coordctl-log v1";
pub const CSV_HEADER: &str = "t,x,y,phi,vx,vy,beta,phi_dot,phi_dot_d,phi_dot_ref,delta_f,mz,\
torque_fl,torque_fr,torque_rl,torque_rr,lateral_err,yaw_rate_err,dyc_active,np,q_y,r_delta,\
qp_iterations,qp_status,qp_eps,qp_kkt_stationarity,qp_kkt_feasibility";

/// 17 significant digits: enough to round-trip any f64 exactly.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(log: &SimLog, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_VERSION_LINE}")?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in &log.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.x),
            fmt(r.y),
            fmt(r.phi),
            fmt(r.vx),
            fmt(r.vy),
            fmt(r.beta),
            fmt(r.phi_dot),
            fmt(r.phi_dot_d),
            fmt(r.phi_dot_ref),
            fmt(r.delta_f),
            fmt(r.mz),
            fmt(r.torque_fl),
            fmt(r.torque_fr),
            fmt(r.torque_rl),
            fmt(r.torque_rr),
            fmt(r.lateral_err),
            fmt(r.yaw_rate_err),
            u8::from(r.dyc_active),
            r.np,
            fmt(r.q_y),
            fmt(r.r_delta),
            r.qp_iterations,
            r.qp_status,
            fmt(r.qp_eps),
            fmt(r.qp_kkt_stationarity),
            fmt(r.qp_kkt_feasibility),
        )?;
    }
    Ok(())
}

pub fn csv_string(log: &SimLog) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(log, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Config(format!("non-utf8 log: {e}")))
}

pub fn save_csv(log: &SimLog, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(log, std::io::BufWriter::new(file))
}

pub fn read_csv<R: BufRead>(r: R) -> Result<SimLog> {
    let mut lines = r.lines();
    let version = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Config("empty log file".into()))?;
    if version.trim() != CSV_VERSION_LINE {
        return Err(Error::Config(format!(
            "unsupported log version line: {version:?}"
        )));
    }
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Config("missing header row".into()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Config("header row does not match schema v1".into()));
    }

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 27 {
            return Err(Error::Config(format!(
                "row {} has {} fields, expected 27",
                lineno + 3,
                f.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|e| Error::Config(format!("row {}: bad float {:?}: {e}", lineno + 3, f[i])))
        };
        let int = |i: usize| -> Result<usize> {
            f[i].parse()
                .map_err(|e| Error::Config(format!("row {}: bad int {:?}: {e}", lineno + 3, f[i])))
        };
        records.push(StepRecord {
            t: num(0)?,
            x: num(1)?,
            y: num(2)?,
            phi: num(3)?,
            vx: num(4)?,
            vy: num(5)?,
            beta: num(6)?,
            phi_dot: num(7)?,
            phi_dot_d: num(8)?,
            phi_dot_ref: num(9)?,
            delta_f: num(10)?,
            mz: num(11)?,
            torque_fl: num(12)?,
            torque_fr: num(13)?,
            torque_rl: num(14)?,
            torque_rr: num(15)?,
            lateral_err: num(16)?,
            yaw_rate_err: num(17)?,
            dyc_active: int(18)? != 0,
            np: int(19)?,
            q_y: num(20)?,
            r_delta: num(21)?,
            qp_iterations: int(22)?,
            qp_status: int(23)? as u8,
            qp_eps: num(24)?,
            qp_kkt_stationarity: num(25)?,
            qp_kkt_feasibility: num(26)?,
        });
    }
    Ok(SimLog {
        records,
        aborted: None,
    })
}

pub fn load_csv(path: &Path) -> Result<SimLog> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn sample_record(t: f64) -> StepRecord {
        StepRecord {
            t,
            x: 1.5 * t,
            y: 0.1,
            phi: 0.01,
            vx: 5.0,
            vy: -0.02,
            beta: -0.004,
            phi_dot: 0.3,
            phi_dot_d: 0.28,
            phi_dot_ref: 0.25,
            delta_f: 0.05,
            mz: -120.0,
            torque_fl: 10.0,
            torque_fr: 11.0,
            torque_rl: 12.0,
            torque_rr: 13.0,
            lateral_err: -0.9,
            yaw_rate_err: 0.05,
            dyc_active: true,
            np: 23,
            q_y: 600.0,
            r_delta: 1600.0,
            qp_iterations: 4,
            qp_status: 0,
            qp_eps: 1e-12,
            qp_kkt_stationarity: 3.0e-11,
            qp_kkt_feasibility: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let log = SimLog {
            records: vec![
                sample_record(0.0),
                StepRecord {
                    // exercise awkward values
                    beta: -1.0 / 3.0,
                    q_y: f64::MIN_POSITIVE,
                    dyc_active: false,
                    ..sample_record(0.05)
                },
            ],
            aborted: None,
        };
        let text = csv_string(&log).unwrap();
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(log, back);
    }

    #[test]
    fn version_line_is_enforced() {
        let bad = "# other v9\n".to_string() + CSV_HEADER + "\n";
        assert!(read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn field_count_is_enforced() {
        let bad = format!("{CSV_VERSION_LINE}\n{CSV_HEADER}\n1.0,2.0\n");
        assert!(read_csv(bad.as_bytes()).is_err());
    }
}
