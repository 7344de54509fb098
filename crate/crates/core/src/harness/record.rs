//! Run trajectories and summaries, with CSV and JSON emitters.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::Phase;

pub const CSV_HEADER: &str = "k,f,l1_grad,phi,lambda,lambda_ema,sigma_dither_sq,phase";

/// One recorded step, taken before the update at step `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub k: u64,
    pub f: f64,
    pub l1_grad: f64,
    pub phi: f64,
    /// λ_k of the preceding sign-momentum step (0 before any).
    pub lambda: f64,
    pub lambda_ema: f64,
    /// σ_k² applied at step `k`.
    pub sigma_dither_sq: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub algorithm: String,
    pub steps_requested: u64,
    pub steps_completed: u64,
    pub batch_size: usize,
    pub initial_f: f64,
    pub final_f: f64,
    /// `(1/K) Σ_k Φ_k` over every executed step.
    pub mean_phi: f64,
    /// `(1/K) Σ_k ‖g_k‖₁` over every executed step.
    pub mean_l1_grad: f64,
    pub oracle_calls: u64,
    /// Sign stepsize actually used (theorem mode overrides the config).
    pub delta_used: f64,
    /// λ̄ when the hybrid left the sign phase, if it did.
    pub lambda_at_switch: Option<f64>,
    pub final_lambda_ema: f64,
    pub diverged: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
    pub summary: RunSummary,
}

impl RunRecord {
    /// Equality ignoring wall time, comparing reals by bit pattern.
    pub fn bitwise_eq(&self, other: &RunRecord) -> bool {
        fn row_bits(r: &RecordRow) -> [u64; 8] {
            [
                r.k,
                r.f.to_bits(),
                r.l1_grad.to_bits(),
                r.phi.to_bits(),
                r.lambda.to_bits(),
                r.lambda_ema.to_bits(),
                r.sigma_dither_sq.to_bits(),
                r.phase as u64,
            ]
        }
        let mut a = self.summary.clone();
        let mut b = other.summary.clone();
        a.wall_time_s = 0.0;
        b.wall_time_s = 0.0;
        let summary_bits = |s: &RunSummary| {
            (
                s.initial_f.to_bits(),
                s.final_f.to_bits(),
                s.mean_phi.to_bits(),
                s.mean_l1_grad.to_bits(),
                s.delta_used.to_bits(),
                s.lambda_at_switch.map(f64::to_bits),
                s.final_lambda_ema.to_bits(),
            )
        };
        self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(x, y)| row_bits(x) == row_bits(y))
            && summary_bits(&a) == summary_bits(&b)
            && (a.seed, &a.algorithm, a.steps_completed, a.diverged, a.oracle_calls)
                == (b.seed, &b.algorithm, b.steps_completed, b.diverged, b.oracle_calls)
    }
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_string(rows: &[RecordRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            real(r.f),
            real(r.l1_grad),
            real(r.phi),
            real(r.lambda),
            real(r.lambda_ema),
            real(r.sigma_dither_sq),
            r.phase.as_str()
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<RecordRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Record(format!("bad header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Record(format!(
                "row {}: expected 8 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse()
                .map_err(|_| Error::Record(format!("row {}: bad real `{}`", i + 1, fields[j])))
        };
        rows.push(RecordRow {
            k: fields[0]
                .parse()
                .map_err(|_| Error::Record(format!("row {}: bad step `{}`", i + 1, fields[0])))?,
            f: num(1)?,
            l1_grad: num(2)?,
            phi: num(3)?,
            lambda: num(4)?,
            lambda_ema: num(5)?,
            sigma_dither_sq: num(6)?,
            phase: fields[7]
                .parse()
                .map_err(|_| Error::Record(format!("row {}: bad phase", i + 1)))?,
        });
    }
    if rows.windows(2).any(|w| w[0].k >= w[1].k) {
        return Err(Error::Record("steps are not strictly increasing".into()));
    }
    Ok(rows)
}

pub fn emit_csv(rows: &[RecordRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, csv_string(rows)).map_err(|e| Error::io(path, e))
}

/// JSON document written next to each trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    /// Canonical config as `key → value` pairs, in emission order.
    pub config: Vec<(String, String)>,
    #[serde(flatten)]
    pub summary: RunSummary,
}

pub fn emit_json<T: Serialize>(doc: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(doc)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<RecordRow> {
        vec![
            RecordRow {
                k: 0,
                f: 0.1 + 0.2,
                l1_grad: 1.0 / 3.0,
                phi: 5e-324,
                lambda: 0.0,
                lambda_ema: -0.0,
                sigma_dither_sq: 1e300,
                phase: Phase::Sign,
            },
            RecordRow {
                k: 7,
                f: f64::MAX,
                l1_grad: std::f64::consts::PI,
                phi: 2.2250738585072014e-308,
                lambda: 0.05,
                lambda_ema: 0.049999999999999996,
                sigma_dither_sq: 0.0,
                phase: Phase::Sgd,
            },
        ]
    }

    #[test]
    fn header_is_exact() {
        let text = csv_string(&[]);
        assert_eq!(text, "k,f,l1_grad,phi,lambda,lambda_ema,sigma_dither_sq,phase\n");
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let rows = rows();
        let text = csv_string(&rows);
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(a.f.to_bits(), b.f.to_bits());
            assert_eq!(a.phi.to_bits(), b.phi.to_bits());
            assert_eq!(a.lambda_ema.to_bits(), b.lambda_ema.to_bits());
            assert_eq!(a, b);
        }
        assert!(text
            .lines()
            .skip(1)
            .all(|l| l.ends_with(",sign") || l.ends_with(",sgd")));
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(parse_csv("k,f\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,2,3\n")).is_err());
        let mut r = rows();
        r[1].k = 0;
        assert!(parse_csv(&csv_string(&r)).is_err());
        let bad_phase = csv_string(&rows()).replace(",sgd", ",adam");
        assert!(parse_csv(&bad_phase).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        emit_csv(&rows(), &path).unwrap();
        assert_eq!(parse_csv(&std::fs::read_to_string(&path).unwrap()).unwrap(), rows());
        assert!(matches!(
            emit_csv(&rows(), dir.path().join("missing/run.csv")),
            Err(Error::Io { .. })
        ));
    }
}
