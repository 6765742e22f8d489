//! CSV and JSON artifacts.
//!
//! `trajectory.csv` columns: `t`, then `x{i}_{k}` for agent i and
//! coordinate k (agent-major), then `v{i}_{k}` in the same order. Values are
//! written with 17 significant digits so a read reproduces every state bit
//! for bit.

use sflock_core::diagnostics::DiagnosticsFrame;
use sflock_core::guards::BoundReport;
use sflock_core::{ParticleState, Sample};
use std::io::{Read, Write};

/// Errors from reading or writing artifacts.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    /// Filesystem error.
    #[error("{0}")]
    Io(#[from] std::io::Error),
    /// CSV error.
    #[error("{0}")]
    Csv(#[from] csv::Error),
    /// JSON error.
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    /// The header does not describe a trajectory.
    #[error("malformed trajectory header: {0}")]
    Header(String),
    /// A value failed to parse.
    #[error("row {row}: {reason}")]
    Value {
        /// 1-based data row.
        row: usize,
        /// What went wrong.
        reason: String,
    },
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header of `trajectory.csv`.
pub fn trajectory_header(n: usize, d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["x", "v"] {
        for i in 0..n {
            for k in 0..d {
                h.push(format!("{prefix}{i}_{k}"));
            }
        }
    }
    h
}

/// Writes `trajectory.csv`.
pub fn write_trajectory<W: Write>(out: W, samples: &[Sample]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = samples.first() {
        w.write_record(trajectory_header(first.state.n_agents, first.state.dim))?;
    }
    for s in samples {
        let st = &s.state;
        let row = std::iter::once(st.time).chain(st.positions.iter().copied()).chain(st.velocities.iter().copied());
        w.write_record(row.map(num))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `trajectory.csv`, inferring N and d from the header.
pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<ParticleState>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let (n, d) = parse_header(&header)?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IoError::Value { row: row + 1, reason: e.to_string() })?;
        if vals.len() != 1 + 2 * n * d {
            return Err(IoError::Value { row: row + 1, reason: format!("expected {} fields, found {}", 1 + 2 * n * d, vals.len()) });
        }
        let st = ParticleState::new(vals[0], n, d, vals[1..1 + n * d].to_vec(), vals[1 + n * d..].to_vec())
            .map_err(|e| IoError::Value { row: row + 1, reason: e.to_string() })?;
        out.push(st);
    }
    Ok(out)
}

fn parse_header(h: &csv::StringRecord) -> Result<(usize, usize), IoError> {
    let fields: Vec<&str> = h.iter().collect();
    if fields.first() != Some(&"t") || fields.len() < 3 || !(fields.len() - 1).is_multiple_of(2) {
        return Err(IoError::Header(h.iter().collect::<Vec<_>>().join(",")));
    }
    let per = (fields.len() - 1) / 2;
    let d = fields[1..=per].iter().take_while(|f| f.starts_with("x0_")).count();
    if d == 0 || !per.is_multiple_of(d) {
        return Err(IoError::Header("cannot infer dimension".into()));
    }
    let n = per / d;
    let expected = trajectory_header(n, d);
    if expected.iter().map(String::as_str).ne(fields.iter().copied()) {
        return Err(IoError::Header("unexpected column order".into()));
    }
    Ok((n, d))
}

/// Columns of `diagnostics.csv`.
pub const DIAGNOSTICS_HEADER: [&str; 8] = ["t", "m2", "sigma_x", "sigma_v", "min_dist", "l_beta", "E_plus", "E_minus"];

/// Writes `diagnostics.csv`. Unavailable values are written as `NaN`.
pub fn write_diagnostics<W: Write>(out: W, frames: &[&DiagnosticsFrame]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTICS_HEADER)?;
    for f in frames {
        w.write_record([f.time, f.m2, f.sigma_x, f.sigma_v, f.min_dist, f.l_beta, f.lyapunov_plus, f.lyapunov_minus].map(num))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `bounds_<id>.csv` with columns time, lhs, rhs, slack.
pub fn write_bounds<W: Write>(out: W, report: &BoundReport) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "lhs", "rhs", "slack"])?;
    for r in &report.residuals {
        w.write_record([r.time, r.lhs, r.rhs, r.slack].map(num))?;
    }
    w.flush()?;
    Ok(())
}

/// JSON summary of one bound report.
pub fn bound_json(report: &BoundReport) -> serde_json::Value {
    let constants: serde_json::Map<String, serde_json::Value> =
        report.constants.iter().map(|(k, v)| (k.to_string(), json_num(*v))).collect();
    serde_json::json!({
        "inequality_id": report.inequality_id.name(),
        "min_slack": json_num(report.min_slack),
        "pass": report.pass,
        "tol": json_num(report.tol),
        "samples": report.residuals.len(),
        "constants": constants,
    })
}

/// Finite numbers as JSON numbers, others as strings ("inf", "NaN").
pub fn json_num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(x.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(trajectory_header(2, 2), ["t", "x0_0", "x0_1", "x1_0", "x1_1", "v0_0", "v0_1", "v1_0", "v1_1"]);
    }

    #[test]
    fn rejects_bad_header() {
        let text = "t,y0_0,v0_0\n0,1,2\n";
        assert!(matches!(read_trajectory(text.as_bytes()), Err(IoError::Header(_))));
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
