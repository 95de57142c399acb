//! Multiple change points by recursive binary segmentation.

use serde::{Deserialize, Serialize};

use crate::el_solver::SolverSettings;
use crate::error::{ElError, Result};
use crate::estimating::TimeSeries;
use crate::scan::{trimmed_scan, ScanOptions, ScanResult, MIN_SCAN_LEN};

pub const DEFAULT_MIN_LEN: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentOptions {
    pub alpha: f64,
    /// Intervals shorter than this are not tested.
    pub min_len: usize,
    /// Test a node at depth `d` at level `alpha / 2^d`.
    pub depth_adjust: bool,
    /// Scan settings for every node; its `alpha` and `trim` are replaced
    /// per node.
    pub scan: ScanOptions,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { alpha: 0.05, min_len: DEFAULT_MIN_LEN, depth_adjust: false, scan: ScanOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeDecision {
    /// Change detected after global index `at`.
    Split {
        at: usize,
    },
    NoChange,
    TooShort,
    /// The change-point budget `⌊n / min_len⌋` was exhausted.
    Capped,
    /// The scan failed; only this branch stops.
    Inconclusive {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentNode {
    /// Global 1-based inclusive interval.
    pub start: usize,
    pub end: usize,
    pub depth: usize,
    pub alpha: f64,
    pub decision: NodeDecision,
    pub scan: Option<ScanResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    /// Sorted global indices `k` (last index before each change).
    pub change_points: Vec<usize>,
    /// Nodes in depth-first, left-to-right order.
    pub tree: Vec<SegmentNode>,
    pub alpha: f64,
    pub min_len: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

struct Segmenter<'a> {
    series: &'a TimeSeries,
    p: usize,
    options: &'a SegmentOptions,
    settings: &'a SolverSettings,
    budget: usize,
    found: Vec<usize>,
    tree: Vec<SegmentNode>,
}

impl Segmenter<'_> {
    fn visit(&mut self, start: usize, end: usize, depth: usize) {
        let len = end - start + 1;
        let alpha =
            if self.options.depth_adjust { self.options.alpha / 2f64.powi(depth as i32) } else { self.options.alpha };
        let mut node = SegmentNode { start, end, depth, alpha, decision: NodeDecision::TooShort, scan: None };
        if len < self.options.min_len {
            self.tree.push(node);
            return;
        }
        if self.found.len() >= self.budget {
            node.decision = NodeDecision::Capped;
            self.tree.push(node);
            return;
        }
        let scan_opts = ScanOptions { alpha, trim: None, ..self.options.scan.clone() };
        let result =
            self.series.slice(start..=end).and_then(|sub| trimmed_scan(&sub, self.p, &scan_opts, self.settings));
        match result {
            Err(e) => {
                node.decision = NodeDecision::Inconclusive { reason: e.to_string() };
                self.tree.push(node);
            }
            Ok(scan) if !scan.reject => {
                node.decision = NodeDecision::NoChange;
                node.scan = Some(scan);
                self.tree.push(node);
            }
            Ok(scan) => {
                let at = start - 1 + scan.k_hat;
                node.decision = NodeDecision::Split { at };
                node.scan = Some(scan);
                self.tree.push(node);
                self.found.push(at);
                self.visit(start, at, depth + 1);
                self.visit(at + 1, end, depth + 1);
            }
        }
    }
}

/// Recursive binary segmentation driven by [`trimmed_scan`].
pub fn binary_segment(
    series: &TimeSeries,
    p: usize,
    options: &SegmentOptions,
    settings: &SolverSettings,
) -> Result<SegmentationResult> {
    if options.min_len < MIN_SCAN_LEN {
        return Err(ElError::input(format!(
            "min_len must be at least {MIN_SCAN_LEN}, the shortest series the scan calibrates"
        )));
    }
    let n = series.len();
    let mut seg =
        Segmenter { series, p, options, settings, budget: n / options.min_len, found: Vec::new(), tree: Vec::new() };
    seg.visit(1, n, 0);
    let mut change_points = seg.found;
    change_points.sort_unstable();
    let mut notes = Vec::new();
    if seg.tree.iter().all(|node| node.decision == NodeDecision::TooShort) {
        notes.push(format!("no further testable segments: series length {n} is below min_len {}", options.min_len));
    }
    if seg.tree.iter().any(|node| node.decision == NodeDecision::Capped) {
        notes.push(format!("stopped at the cap of {} change points", n / options.min_len));
    }
    Ok(SegmentationResult { change_points, tree: seg.tree, alpha: options.alpha, min_len: options.min_len, notes })
}
