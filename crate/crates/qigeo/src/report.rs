//! Serializable run artifacts: per-check residual records, the
//! aggregated verification report, and the CSV emitters for geodesic
//! traces and parameter-grid scans.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{QigError, Result};

/// One verified property: residual against tolerance at a point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    /// Human-readable statement of the verified property.
    pub property: String,
    pub theta: Vec<f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(
        check: impl Into<String>,
        property: impl Into<String>,
        theta: &[f64],
        residual: f64,
        tolerance: f64,
    ) -> Self {
        CheckRecord {
            check: check.into(),
            property: property.into(),
            theta: theta.to_vec(),
            residual,
            tolerance,
            pass: residual.is_finite() && residual <= tolerance,
        }
    }

    /// A record for a check that errored out rather than producing a
    /// residual.
    pub fn failed(check: impl Into<String>, property: impl Into<String>, err: &QigError) -> Self {
        CheckRecord {
            check: check.into(),
            property: format!("{}; error: {err}", property.into()),
            theta: Vec::new(),
            residual: f64::INFINITY,
            tolerance: 0.0,
            pass: false,
        }
    }
}

/// Aggregated result of a check suite run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub config: serde_json::Value,
    pub records: Vec<CheckRecord>,
    pub passed: usize,
    pub failed: usize,
    pub timestamp: String,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>, config: serde_json::Value, records: Vec<CheckRecord>) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        let failed = records.len() - passed;
        VerificationReport {
            suite: suite.into(),
            config,
            records,
            passed,
            failed,
            timestamp: now_utc(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(QigError::from)
    }

    /// JSON with the timestamp field blanked; two runs with identical
    /// config and seed must agree byte for byte on this form.
    pub fn comparable_json(&self) -> Result<String> {
        let mut clone = self.clone();
        clone.timestamp = String::new();
        serde_json::to_string_pretty(&clone).map_err(QigError::from)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn now_utc() -> String {
    // Seconds since the Unix epoch; precise wall-clock formatting is
    // not needed, only a field that comparison must exclude.
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// One row of a parameter-grid scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub theta: Vec<f64>,
    /// Row-major metric entries g_pq.
    pub metric: Vec<f64>,
    /// Max-norm of each holonomy component H_pq for p < q.
    pub holonomy_norms: Vec<f64>,
    pub alpha: f64,
    /// Empty when the row evaluated cleanly, else the failure text.
    pub flag: String,
}

/// Writes scan rows as CSV. An empty row set yields the header only.
/// Column counts come from the parameter dimension n.
pub fn write_scan_csv(out: &mut dyn Write, n: usize, rows: &[ScanRow]) -> Result<()> {
    let mut header: Vec<String> = (1..=n).map(|p| format!("theta_{p}")).collect();
    for p in 1..=n {
        for q in 1..=n {
            header.push(format!("g_{p}{q}"));
        }
    }
    for p in 1..=n {
        for q in (p + 1)..=n {
            header.push(format!("h_norm_{p}{q}"));
        }
    }
    header.push("alpha".into());
    header.push("flag".into());
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut cells: Vec<String> = row.theta.iter().map(|v| format!("{v:.12e}")).collect();
        cells.extend(row.metric.iter().map(|v| format!("{v:.12e}")));
        cells.extend(row.holonomy_norms.iter().map(|v| format!("{v:.12e}")));
        cells.push(format!("{:.12e}", row.alpha));
        cells.push(row.flag.replace(',', ";"));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Geodesic trace CSV: t, theta_1..theta_n, thetadot_1..thetadot_n,
/// tangent_length, residual_a.
pub fn write_trace_csv(
    out: &mut dyn Write,
    trace: &crate::geodesic::GeodesicTrace,
    residual_a: f64,
) -> Result<()> {
    let n = trace
        .states
        .first()
        .map(|s| s.theta.len())
        .unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|p| format!("theta_{p}")));
    header.extend((1..=n).map(|p| format!("thetadot_{p}")));
    header.push("tangent_length".into());
    header.push("residual_a".into());
    writeln!(out, "{}", header.join(","))?;
    for (k, state) in trace.states.iter().enumerate() {
        let mut cells = vec![format!("{:.12e}", state.time)];
        cells.extend(state.theta.iter().map(|v| format!("{v:.12e}")));
        cells.extend(state.velocity.iter().map(|v| format!("{v:.12e}")));
        cells.push(format!("{:.12e}", trace.tangent_lengths[k]));
        cells.push(format!("{residual_a:.12e}"));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
