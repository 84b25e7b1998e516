//! CSV writers for arcs, jump logs, monitor traces and Monte Carlo reports.
//!
//! Every file opens with a `#` header block naming the tool version, the
//! scenario, the master seed and a SHA-256 hash of the run configuration.
//! Numbers use shortest round-trip `f64` formatting, so equal inputs give
//! byte-identical files.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{EpsilonSweep, Outcome, TrialReport, UniformityRow};
use crate::error::{Error, Result};
use crate::foster::MonitorTrace;
use crate::hybrid::HybridArc;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    /// Header whose hash covers `config` serialized as JSON.
    pub fn new<S: Serialize>(scenario: &str, seed: u64, config: &S) -> Result<Self> {
        Ok(Header { scenario: scenario.to_string(), seed, config_hash: config_hash(config)? })
    }

    pub fn block(&self) -> String {
        format!(
            "# shds-lab version {VERSION}\n# scenario {}\n# seed {}\n# config sha256:{}\n",
            self.scenario, self.seed, self.config_hash
        )
    }
}

/// Lowercase hex SHA-256 of the compact JSON form of `config`.
pub fn config_hash<S: Serialize>(config: &S) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Strips the `#` header block.
pub fn body(csv: &str) -> &str {
    let mut rest = csv;
    while rest.starts_with('#') {
        rest = match rest.find('\n') {
            Some(i) => &rest[i + 1..],
            None => "",
        };
    }
    rest
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Serde(e.to_string())
}

struct Table {
    out: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(columns: &[String]) -> Result<Self> {
        let mut out = csv::WriterBuilder::new().from_writer(Vec::new());
        out.write_record(columns).map_err(csv_err)?;
        Ok(Table { out })
    }

    fn row(&mut self, fields: Vec<String>) -> Result<()> {
        self.out.write_record(&fields).map_err(csv_err)
    }

    fn finish(self, header: &Header) -> Result<String> {
        let bytes = self.out.into_inner().map_err(csv_err)?;
        let body = String::from_utf8(bytes).map_err(csv_err)?;
        Ok(header.block() + &body)
    }
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// Shortest round-trip form, in exponent notation for very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn dims(arc: &HybridArc<f64>) -> (usize, usize) {
    let y = &arc.segments[0].samples[0].1;
    (y.x.len(), y.z.len())
}

/// Columns `t, j, x0.., z0.., segment_id`, one row per recorded point.
pub fn arc_csv(header: &Header, arc: &HybridArc<f64>) -> Result<String> {
    let (nx, nz) = dims(arc);
    let mut cols = vec!["t".to_string(), "j".to_string()];
    cols.extend(names("x", nx));
    cols.extend(names("z", nz));
    cols.push("segment_id".into());
    let mut table = Table::new(&cols)?;
    for (k, seg) in arc.segments.iter().enumerate() {
        for (t, y) in &seg.samples {
            let mut row = vec![num(*t), seg.start.j.to_string()];
            row.extend(y.x.iter().chain(&y.z).map(|v| num(*v)));
            row.push(k.to_string());
            table.row(row)?;
        }
    }
    table.finish(header)
}

/// Columns `t, j, v0.., pre_x0.., pre_z0.., post_x0.., post_z0..`, one row
/// per jump; `j` is the jump count before the jump.
pub fn jump_log_csv(header: &Header, arc: &HybridArc<f64>) -> Result<String> {
    let (nx, nz) = dims(arc);
    let nv = arc.jumps.first().map_or(0, |jr| jr.v.len());
    let mut cols = vec!["t".to_string(), "j".to_string()];
    cols.extend(names("v", nv));
    cols.extend(names("pre_x", nx));
    cols.extend(names("pre_z", nz));
    cols.extend(names("post_x", nx));
    cols.extend(names("post_z", nz));
    let mut table = Table::new(&cols)?;
    for jr in &arc.jumps {
        let mut row = vec![num(jr.time.t), jr.time.j.to_string()];
        row.extend(jr.v.iter().chain(&jr.pre.x).chain(&jr.pre.z).chain(&jr.post.x).chain(&jr.post.z).map(|v| num(*v)));
        table.row(row)?;
    }
    table.finish(header)
}

/// Columns `t, j, e_theta, delta, flagged`. `delta` is the increment over the
/// flow step starting at the row, blank at segment ends.
pub fn monitor_csv(header: &Header, trace: &MonitorTrace) -> Result<String> {
    let cols: Vec<String> = ["t", "j", "e_theta", "delta", "flagged"].iter().map(|s| s.to_string()).collect();
    let mut table = Table::new(&cols)?;
    let mut steps = trace.flow_increments.iter().peekable();
    for &(t, j, e) in &trace.samples {
        let step = steps.next_if(|s| s.0 == t && s.1 == j);
        let (delta, flagged) = match step {
            Some(&(_, _, d, f)) => (num(d), (f as u8).to_string()),
            None => (String::new(), "0".to_string()),
        };
        table.row(vec![num(t), j.to_string(), num(e), delta, flagged])?;
    }
    table.finish(header)
}

fn outcome_name(o: Outcome) -> String {
    serde_json::to_value(o).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// One row per trial.
pub fn trial_report_csv(header: &Header, report: &TrialReport) -> Result<String> {
    let cols: Vec<String> =
        ["trial", "outcome", "hitting_time", "settling_time", "max_distance", "final_distance", "rejected_inits"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let mut table = Table::new(&cols)?;
    for r in &report.records {
        table.row(vec![
            r.trial.to_string(),
            outcome_name(r.outcome),
            opt(r.hitting_time),
            opt(r.settling_time),
            opt(r.max_distance),
            opt(r.final_distance),
            r.rejected_inits.to_string(),
        ])?;
    }
    table.finish(header)
}

/// One row per `ε`.
pub fn sweep_csv(header: &Header, sweep: &EpsilonSweep) -> Result<String> {
    let cols: Vec<String> = ["epsilon", "step_h", "value", "below_threshold"].iter().map(|s| s.to_string()).collect();
    let mut table = Table::new(&cols)?;
    for r in &sweep.rows {
        let below = r.below_threshold.map(|b| (b as u8).to_string()).unwrap_or_default();
        table.row(vec![num(r.epsilon), num(r.step_h), num(r.value), below])?;
    }
    table.finish(header)
}

/// One row per radius.
pub fn uniformity_csv(header: &Header, rows: &[UniformityRow]) -> Result<String> {
    let cols: Vec<String> = ["radius", "p95", "resolved", "resolved_lo", "resolved_hi"].iter().map(|s| s.to_string()).collect();
    let mut table = Table::new(&cols)?;
    for r in rows {
        table.row(vec![num(r.radius), opt(r.p95), num(r.resolved.value), num(r.resolved.wilson_lo), num(r.resolved.wilson_hi)])?;
    }
    table.finish(header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::by_name;
    use crate::simulate::simulate_arc;
    use crate::stochastic::RandomStream;

    fn header() -> Header {
        Header::new("example1", 7, &serde_json::json!({"a": 1})).unwrap()
    }

    #[test]
    fn header_block_layout() {
        let h = header();
        let block = h.block();
        let lines: Vec<&str> = block.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("# shds-lab version "));
        assert_eq!(lines[1], "# scenario example1");
        assert_eq!(lines[2], "# seed 7");
        assert_eq!(h.config_hash.len(), 64);
        assert_ne!(h.config_hash, config_hash(&serde_json::json!({"a": 2})).unwrap());
    }

    #[test]
    fn arc_and_jump_columns_match_the_arc() {
        let sc = by_name("example1").unwrap();
        let y0 = crate::hybrid::StateVector::new(vec![2.5], vec![0.0]);
        let cfg = crate::simulate::SimConfig { horizon_t: 3.0, ..sc.sim.clone() };
        let arc = simulate_arc(&sc.system, &y0, &RandomStream::new(3, 0), &cfg).unwrap();
        let h = header();
        let a = arc_csv(&h, &arc).unwrap();
        let rows: Vec<&str> = body(&a).lines().collect();
        assert_eq!(rows[0], "t,j,x0,z0,segment_id");
        assert_eq!(rows.len() - 1, arc.points().count());
        let jl = jump_log_csv(&h, &arc).unwrap();
        let jrows: Vec<&str> = body(&jl).lines().collect();
        assert_eq!(jrows[0], "t,j,v0,pre_x0,pre_z0,post_x0,post_z0");
        assert_eq!(jrows.len() - 1, arc.jumps.len());
        assert!(!arc.jumps.is_empty());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -0.0, 1.5, 1e-12, -3.25e-7, 2.5e17, 123456.789, f64::MIN_POSITIVE, 1.0 / 3.0] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(num(1.5e-11), "1.5e-11");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn body_strips_only_the_header() {
        assert_eq!(body("# a\n# b\nx,y\n1,2\n"), "x,y\n1,2\n");
        assert_eq!(body("x\n"), "x\n");
    }
}
