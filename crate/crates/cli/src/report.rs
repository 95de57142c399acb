//! Versioned run reports, rendered as text or JSON.

use std::fmt::Write;

use elcpd::{BootstrapResult, CritvalStudy, NodeDecision, NoiseModel, PowerTable, ScanResult, SegmentationResult};
use serde::{Deserialize, Serialize};

use crate::input::InputDigest;

/// Bumped whenever a field changes meaning. Readers ignore unknown fields.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: String,
    /// Arguments as given, program name excluded.
    pub command: Vec<String>,
    #[serde(default)]
    pub input: Option<InputDigest>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub elapsed_ms: f64,
    pub result: ReportBody,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportBody {
    Detect {
        scan: ScanResult,
        #[serde(default)]
        bootstrap: Option<BootstrapResult>,
    },
    Segment {
        segmentation: SegmentationResult,
    },
    Critval {
        table: CritvalTable,
    },
    Power {
        table: PowerTable,
    },
    Simulate {
        series: SimulatedSeries,
    },
    EmpiricalCritval {
        study: CritvalStudy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritvalEntry {
    pub alpha: f64,
    pub t_alpha: f64,
    /// `Z_n*` threshold, present when `n` was given.
    #[serde(default)]
    pub raw_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritvalTable {
    #[serde(default)]
    pub n: Option<usize>,
    pub r: usize,
    pub rows: Vec<CritvalEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSeries {
    pub n: usize,
    pub k: usize,
    pub phi_pre: Vec<f64>,
    pub phi_post: Vec<f64>,
    pub noise: NoiseModel,
    pub burn_in: usize,
    #[serde(default)]
    pub out: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports hold only finite numbers and strings")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(inp) = &self.input {
            let _ = write!(s, "input: {} column '{}', {} rows", inp.path, inp.column, inp.rows);
            if inp.dropped > 0 {
                let _ = write!(s, " ({} dropped)", inp.dropped);
            }
            if inp.demeaned {
                s.push_str(", demeaned");
            }
            s.push('\n');
        }
        match &self.result {
            ReportBody::Detect { scan, bootstrap } => {
                scan_text(&mut s, scan);
                if let Some(b) = bootstrap {
                    let _ = writeln!(
                        s,
                        "bootstrap p-value: {:.4} ({} replicates, {} failed, {} exceedances)",
                        b.p_value, b.replicates, b.failures, b.exceedances
                    );
                }
            }
            ReportBody::Segment { segmentation } => segment_text(&mut s, segmentation),
            ReportBody::Critval { table } => {
                let _ = writeln!(s, "{:>8}  {:>10}  {:>14}", "alpha", "t_alpha", "raw threshold");
                for row in &table.rows {
                    let raw = row.raw_threshold.map_or("-".to_string(), |v| format!("{v:.6}"));
                    let _ = writeln!(s, "{:>8}  {:>10.6}  {:>14}", row.alpha, row.t_alpha, raw);
                }
                if let Some(n) = table.n {
                    let _ = writeln!(s, "raw thresholds for n = {n}, r = {}", table.r);
                }
            }
            ReportBody::Power { table } => {
                let _ = writeln!(s, "power at alpha = {} over {} reps, seed {}", table.alpha, table.reps, table.seed);
                let _ = writeln!(s, "{:>6} {:>6} {:>12} {:>8} {:>8}", "n", "k", "noise", "power", "failed");
                for c in &table.cells {
                    let flag = if c.flagged { "  (over 5% failed)" } else { "" };
                    let _ =
                        writeln!(s, "{:>6} {:>6} {:>12} {:>8.3} {:>8}{flag}", c.n, c.k, c.noise, c.power, c.failures);
                }
            }
            ReportBody::Simulate { series } => {
                let _ = writeln!(
                    s,
                    "simulated AR({}) n = {}, change after k = {}, {:?} -> {:?}, {} noise",
                    series.phi_pre.len(),
                    series.n,
                    series.k,
                    series.phi_pre,
                    series.phi_post,
                    series.noise
                );
                if let Some(out) = &series.out {
                    let _ = writeln!(s, "written to {out}");
                }
            }
            ReportBody::EmpiricalCritval { study } => {
                let _ = writeln!(
                    s,
                    "empirical critical values, n = {}, {} noise, {} reps ({} failed)",
                    study.n, study.noise, study.reps, study.failures
                );
                let _ = writeln!(s, "{:>8}  {:>10}  {:>12}", "alpha", "empirical", "theoretical");
                for row in &study.rows {
                    let _ = writeln!(s, "{:>8}  {:>10.6}  {:>12.6}", row.alpha, row.empirical, row.theoretical);
                }
            }
        }
        s
    }
}

fn scan_text(s: &mut String, scan: &ScanResult) {
    let _ = writeln!(
        s,
        "n = {}, p = {}, r = {}, trim = ({}, {}), {} splits evaluated, {} failed",
        scan.n,
        scan.p,
        scan.r,
        scan.trim.0,
        scan.trim.1,
        scan.profile.len(),
        scan.failures.len()
    );
    let _ = writeln!(s, "Z_n* = {:.6} at k = {} (theta = {:.4})", scan.z_star, scan.k_hat, scan.theta_hat);
    match (scan.t_normalized, scan.p_value) {
        (Some(t), Some(p)) => {
            let _ = writeln!(
                s,
                "normalized = {t:.6}, critical value = {:.6} at alpha = {}, asymptotic p-value = {p:.4}",
                scan.critical_value, scan.alpha
            );
        }
        _ => s.push_str("asymptotic calibration undefined for this n; use --bootstrap\n"),
    }
    if let Some(thr) = scan.raw_threshold {
        let _ = writeln!(s, "raw threshold for Z_n* = {thr:.6}");
    }
    let verdict =
        if scan.reject { format!("change detected after k = {}", scan.k_hat) } else { "no change detected".into() };
    let _ = writeln!(s, "decision: {verdict}");
}

fn segment_text(s: &mut String, seg: &SegmentationResult) {
    if seg.change_points.is_empty() {
        s.push_str("change points: none\n");
    } else {
        let list: Vec<String> = seg.change_points.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "change points: {}", list.join(", "));
    }
    for node in &seg.tree {
        let indent = "  ".repeat(node.depth);
        let what = match &node.decision {
            NodeDecision::Split { at } => format!("split after {at}"),
            NodeDecision::NoChange => "no change".into(),
            NodeDecision::TooShort => "too short".into(),
            NodeDecision::Capped => "not tested, change-point cap reached".into(),
            NodeDecision::Inconclusive { reason } => format!("inconclusive: {reason}"),
        };
        let stat = node
            .scan
            .as_ref()
            .map(|sc| format!(" (Z_n* = {:.3}, alpha = {})", sc.z_star, node.alpha))
            .unwrap_or_default();
        let _ = writeln!(s, "{indent}[{}, {}] {what}{stat}", node.start, node.end);
    }
    for note in &seg.notes {
        let _ = writeln!(s, "note: {note}");
    }
}
