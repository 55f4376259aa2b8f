//! Brute-force scans of the binary two-setting case.
//!
//! A point is a symmetric box (uniform output marginals, success probability
//! `p(x,y)` for each setting pair) together with the input marginals
//! `Pr(a_0 = 0)` and `Pr(a_1 = 0)`. Grids are inclusive: resolution `N` puts
//! `N` points on every scanned axis, both endpoints included.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nsbox::{chsh_values, is_local_2x2, is_quantum_2x2, CorrelationQuad, ARCSIN_TOL};

pub const DEFAULT_RESOLUTION: usize = 100;
/// Points within this distance of the maximum count as ties.
pub const TIE_TOL: f64 = 1e-9;
pub const CHECKPOINT_INTERVAL: u64 = 1_000_000;
const CHUNK: u64 = 250_000;
/// Ties stored in full; the rest are only counted.
pub const ARGMAX_CAP: usize = 10_000;

/// Success probability `(2 + sqrt 2) / 4` of the Tsirelson box.
pub fn tsirelson_p() -> f64 {
    (2.0 + std::f64::consts::SQRT_2) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxCase {
    I,
    II,
    III,
}

impl BoxCase {
    /// Success probabilities `(p00, p01, p10, p11)`.
    pub fn success(self) -> [f64; 4] {
        let t = tsirelson_p();
        match self {
            BoxCase::I => [1.0, 0.5, 1.0, 0.5],
            BoxCase::II => [t, t, t, t],
            BoxCase::III => [t, t, 0.5, 0.5],
        }
    }
}

impl std::str::FromStr for BoxCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(BoxCase::I),
            "ii" | "2" => Ok(BoxCase::II),
            "iii" | "3" => Ok(BoxCase::III),
            other => invalid(format!("unknown box case {other:?} (expected i, ii or iii)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scan", content = "case")]
pub enum ScanKind {
    /// Four success probabilities scanned, uniform input marginals.
    SymmetricUniform,
    /// As `SymmetricUniform`, keeping `xi_0 = xi_1`.
    Isotropic,
    /// All six axes scanned.
    General,
    /// Fixed box, both input marginals scanned.
    FixedBox(BoxCase),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v, points: 1 }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.points <= 1 {
            self.lo
        } else if i + 1 == self.points {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub kind: ScanKind,
    pub resolution: usize,
    /// Sub-box of the scanned axes, in the order `p00, p01, p10, p11, pa0, pa1`.
    pub window: Option<[(f64, f64); 6]>,
}

impl ScanConfig {
    pub fn new(kind: ScanKind, resolution: usize) -> Self {
        Self { kind, resolution, window: None }
    }

    /// Same window at `factor (N - 1) + 1` points per axis, so the old grid is a subset of the new one.
    pub fn refined(&self, window: [(f64, f64); 6], factor: usize) -> Self {
        Self { kind: self.kind, resolution: factor.max(1) * (self.resolution - 1) + 1, window: Some(window) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return invalid(format!("resolution must be at least 2, got {}", self.resolution));
        }
        if let Some(w) = &self.window {
            for &(lo, hi) in w {
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return invalid(format!("window [{lo}, {hi}] is not inside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn scanned(&self) -> [bool; 6] {
        match self.kind {
            ScanKind::SymmetricUniform | ScanKind::Isotropic => [true, true, true, true, false, false],
            ScanKind::General => [true; 6],
            ScanKind::FixedBox(_) => [false, false, false, false, true, true],
        }
    }

    pub fn axes(&self) -> [Axis; 6] {
        let fixed = match self.kind {
            ScanKind::FixedBox(c) => {
                let p = c.success();
                [p[0], p[1], p[2], p[3], 0.5, 0.5]
            }
            _ => [0.5; 6],
        };
        let scanned = self.scanned();
        std::array::from_fn(|i| {
            if scanned[i] {
                let (lo, hi) = self.window.map_or((0.0, 1.0), |w| w[i]);
                Axis { lo, hi, points: self.resolution }
            } else {
                Axis::fixed(fixed[i])
            }
        })
    }

    pub fn total_points(&self) -> u64 {
        self.axes().iter().map(|a| a.points as u64).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// `(p00, p01, p10, p11)`.
    pub p: [f64; 4],
    /// `(Pr(a_0 = 0), Pr(a_1 = 0))`.
    pub pa: [f64; 2],
    pub chsh: f64,
    pub partners: [f64; 3],
    pub quantum: bool,
    pub local: bool,
    pub i0: f64,
    pub i1: f64,
    pub i: f64,
}

pub const CSV_HEADER: &str = "p00,p01,p10,p11,pa0,pa1,chsh,chsh_p1,chsh_p2,chsh_p3,quantum,local,I0,I1,I";

impl ScanPoint {
    pub fn evaluate(p: [f64; 4], pa: [f64; 2]) -> Self {
        let q = CorrelationQuad::from_success(p);
        let s = chsh_values(&q);
        let (i0, i1) = gains(p, pa);
        ScanPoint {
            p,
            pa,
            chsh: s[0],
            partners: [s[1], s[2], s[3]],
            quantum: is_quantum_2x2(&q, ARCSIN_TOL),
            local: is_local_2x2(&q),
            i0,
            i1,
            i: i0 + i1,
        }
    }

    /// `max(|S|)` over the CHSH function and its partners.
    pub fn max_chsh(&self) -> f64 {
        self.partners.iter().fold(self.chsh, |a, b| a.max(*b))
    }

    pub fn csv_row(&self) -> String {
        let b = |v: bool| if v { "1" } else { "0" };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.p[0],
            self.p[1],
            self.p[2],
            self.p[3],
            self.pa[0],
            self.pa[1],
            self.chsh,
            self.partners[0],
            self.partners[1],
            self.partners[2],
            b(self.quantum),
            b(self.local),
            self.i0,
            self.i1,
            self.i
        )
    }
}

fn h2(p: f64) -> f64 {
    let t = |v: f64| if v <= 0.0 { 0.0 } else { -v * v.log2() };
    t(p) + t(1.0 - p)
}

/// Mutual information of a binary channel with correct-guess probabilities `c0`, `c1`.
fn binary_mi(q: f64, c0: f64, c1: f64) -> f64 {
    let out0 = q * c0 + (1.0 - q) * (1.0 - c1);
    (h2(out0) - q * h2(c0) - (1.0 - q) * h2(c1)).max(0.0)
}

/// `(I_0, I_1)` in closed form: the guess of `a_y` is right with probability
/// `p(a_0 + a_1, y)` averaged over the other input.
pub fn gains(p: [f64; 4], pa: [f64; 2]) -> (f64, f64) {
    let pr = |x: usize, y: usize| p[x * 2 + y];
    let (q0, q1) = (pa[0], pa[1]);
    let c00 = q1 * pr(0, 0) + (1.0 - q1) * pr(1, 0);
    let c01 = q1 * pr(1, 0) + (1.0 - q1) * pr(0, 0);
    let c10 = q0 * pr(0, 1) + (1.0 - q0) * pr(1, 1);
    let c11 = q0 * pr(1, 1) + (1.0 - q0) * pr(0, 1);
    (binary_mi(q0, c00, c01), binary_mi(q1, c10, c11))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub chsh_range: (f64, f64),
    pub chsh_bins: usize,
    pub i_range: (f64, f64),
    pub i_bins: usize,
    /// Row-major `[chsh bin][I bin]`.
    pub counts: Vec<Vec<u64>>,
}

impl Default for Histogram {
    fn default() -> Self {
        Self { chsh_range: (0.0, 4.0), chsh_bins: 80, i_range: (0.0, 2.0), i_bins: 100, counts: vec![vec![0; 100]; 80] }
    }
}

impl Histogram {
    fn bin(v: f64, (lo, hi): (f64, f64), n: usize) -> usize {
        (((v - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
    }

    fn add(&mut self, pt: &ScanPoint) {
        let a = Self::bin(pt.chsh, self.chsh_range, self.chsh_bins);
        let b = Self::bin(pt.i, self.i_range, self.i_bins);
        self.counts[a][b] += 1;
    }

    fn merge(&mut self, other: &Histogram) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in r.iter_mut().zip(o) {
                *c += v;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    #[serde(rename = "max_I")]
    pub max_i: f64,
    /// Retained points within [`TIE_TOL`] of the maximum, in grid order (first [`ARGMAX_CAP`]).
    pub argmax: Vec<ScanPoint>,
    pub argmax_count: u64,
    pub histogram: Histogram,
    pub visited: u64,
    pub retained: u64,
    /// Retained points flagged quantum with `I > 1 + TIE_TOL`.
    pub ic_violations: u64,
}

impl Default for ScanSummary {
    fn default() -> Self {
        Self {
            max_i: f64::NEG_INFINITY,
            argmax: Vec::new(),
            argmax_count: 0,
            histogram: Histogram::default(),
            visited: 0,
            retained: 0,
            ic_violations: 0,
        }
    }
}

impl ScanSummary {
    fn offer(&mut self, pt: &ScanPoint) {
        if pt.i > self.max_i + TIE_TOL {
            self.max_i = pt.i;
            self.argmax.clear();
            self.argmax_count = 0;
        } else if pt.i > self.max_i {
            self.max_i = pt.i;
        }
        if pt.i >= self.max_i - TIE_TOL {
            self.argmax_count += 1;
            if self.argmax.len() < ARGMAX_CAP {
                self.argmax.push(*pt);
            }
        }
    }

    fn prune(&mut self) {
        let m = self.max_i;
        let before = self.argmax.len() as u64;
        self.argmax.retain(|p| p.i >= m - TIE_TOL);
        self.argmax_count -= before - self.argmax.len() as u64;
    }

    fn add(&mut self, pt: &ScanPoint) {
        self.retained += 1;
        self.histogram.add(pt);
        if pt.quantum && pt.i > 1.0 + TIE_TOL {
            self.ic_violations += 1;
        }
        self.offer(pt);
    }

    /// Appends a later part of the grid.
    fn merge(&mut self, other: ScanSummary) {
        self.visited += other.visited;
        self.retained += other.retained;
        self.ic_violations += other.ic_violations;
        self.histogram.merge(&other.histogram);
        if other.max_i > self.max_i + TIE_TOL {
            self.max_i = other.max_i;
            self.argmax = other.argmax;
            self.argmax_count = other.argmax_count;
        } else if other.max_i >= self.max_i - TIE_TOL {
            self.max_i = self.max_i.max(other.max_i);
            self.argmax_count += other.argmax_count;
            let room = ARGMAX_CAP.saturating_sub(self.argmax.len());
            self.argmax.extend(other.argmax.into_iter().take(room));
        }
        self.prune();
    }
}

fn keep(kind: ScanKind, pt: &ScanPoint) -> bool {
    match kind {
        ScanKind::FixedBox(_) => true,
        ScanKind::Isotropic => pt.quantum && ((pt.p[0] + pt.p[2]) - (pt.p[1] + pt.p[3])).abs() <= 1e-12,
        _ => pt.quantum,
    }
}

fn point_at(axes: &[Axis; 6], mut index: u64) -> ([f64; 4], [f64; 2]) {
    let mut v = [0.0; 6];
    for i in (0..6).rev() {
        let n = axes[i].points as u64;
        v[i] = axes[i].value((index % n) as usize);
        index /= n;
    }
    ([v[0], v[1], v[2], v[3]], [v[4], v[5]])
}

fn scan_chunk(config: &ScanConfig, axes: &[Axis; 6], start: u64, end: u64, collect: bool) -> (ScanSummary, Vec<ScanPoint>) {
    let mut s = ScanSummary { visited: end - start, ..Default::default() };
    let mut pts = Vec::new();
    for idx in start..end {
        let (p, pa) = point_at(axes, idx);
        let pt = ScanPoint::evaluate(p, pa);
        if keep(config.kind, &pt) {
            s.add(&pt);
            if collect {
                pts.push(pt);
            }
        }
    }
    s.prune();
    (s, pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    config: ScanConfig,
    next_index: u64,
    summary: ScanSummary,
}

/// Full scan; retained points go to `sink` in grid order.
pub fn scan(config: &ScanConfig, sink: Option<&mut dyn FnMut(&ScanPoint)>) -> Result<ScanSummary> {
    scan_resumable(config, sink, None)
}

/// As [`scan`], writing a checkpoint every [`CHECKPOINT_INTERVAL`] points. An existing
/// checkpoint for the same configuration resumes the scan; points already
/// emitted before it are not emitted again.
pub fn scan_resumable(
    config: &ScanConfig,
    mut sink: Option<&mut dyn FnMut(&ScanPoint)>,
    checkpoint: Option<&Path>,
) -> Result<ScanSummary> {
    config.validate()?;
    let axes = config.axes();
    let total = config.total_points();
    let (mut next, mut summary) = (0u64, ScanSummary::default());
    if let Some(path) = checkpoint {
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("checkpoint: {e}")))?;
            let cp: Checkpoint = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidArgument(format!("checkpoint {}: {e}", path.display())))?;
            if cp.config != *config {
                return invalid(format!("checkpoint {} belongs to a different scan", path.display()));
            }
            next = cp.next_index;
            summary = cp.summary;
        }
    }
    let collect = sink.is_some();
    while next < total {
        let batch_end = (next + CHECKPOINT_INTERVAL).min(total);
        let starts: Vec<u64> = (next..batch_end).step_by(CHUNK as usize).collect();
        let parts: Vec<(ScanSummary, Vec<ScanPoint>)> = starts
            .par_iter()
            .map(|&s| scan_chunk(config, &axes, s, (s + CHUNK).min(batch_end), collect))
            .collect();
        for (part, pts) in parts {
            if let Some(f) = sink.as_mut() {
                pts.iter().for_each(|p| f(p));
            }
            summary.merge(part);
        }
        next = batch_end;
        if let Some(path) = checkpoint {
            let cp = Checkpoint { config: *config, next_index: next, summary: summary.clone() };
            let tmp = path.with_extension("tmp");
            let text = serde_json::to_string(&cp).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            fs::write(&tmp, text)
                .and_then(|_| fs::rename(&tmp, path))
                .map_err(|e| Error::InvalidArgument(format!("checkpoint {}: {e}", path.display())))?;
        }
    }
    Ok(summary)
}

/// Dense landscape of a fixed-box scan, row-major with `Pr(a_0 = 0)` outer.
pub fn scan_marginals_fixed_box(case: BoxCase, resolution: usize) -> Result<Vec<ScanPoint>> {
    let mut out = Vec::new();
    let mut push = |p: &ScanPoint| out.push(*p);
    scan(&ScanConfig::new(ScanKind::FixedBox(case), resolution), Some(&mut push))?;
    Ok(out)
}

/// Lowest and highest `I` over the retained points of an isotropic scan that is
/// out of CHSH order, or `None` when sorting by CHSH also sorts by `I` (ties within 1e-9).
pub fn monotonicity_violation(points: &[ScanPoint]) -> Option<(ScanPoint, ScanPoint)> {
    let mut sorted: Vec<&ScanPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.chsh.total_cmp(&b.chsh).then(a.i.total_cmp(&b.i)));
    let mut best: Option<&ScanPoint> = None;
    for p in sorted {
        if let Some(b) = best {
            if p.i < b.i - TIE_TOL && p.chsh > b.chsh + TIE_TOL {
                return Some((*b, *p));
            }
        }
        if best.map_or(true, |b| p.i > b.i) {
            best = Some(p);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let a = Axis { lo: 0.0, hi: 1.0, points: 100 };
        assert_eq!(a.value(0), 0.0);
        assert_eq!(a.value(99), 1.0);
        let c = ScanConfig::new(ScanKind::General, 3);
        assert_eq!(c.total_points(), 729);
        assert_eq!(ScanConfig::new(ScanKind::FixedBox(BoxCase::II), 5).total_points(), 25);
        assert!(ScanConfig::new(ScanKind::General, 1).validate().is_err());
    }

    #[test]
    fn tsirelson_gain() {
        let t = tsirelson_p();
        let pt = ScanPoint::evaluate([t; 4], [0.5, 0.5]);
        assert!(pt.quantum && !pt.local);
        assert!((pt.chsh - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((pt.i - 0.798_247_9).abs() < 1e-7);
    }

    #[test]
    fn case_parse() {
        assert_eq!("iii".parse::<BoxCase>().unwrap(), BoxCase::III);
        assert!("iv".parse::<BoxCase>().is_err());
    }

    #[test]
    fn merge_keeps_ties_in_order() {
        let cfg = ScanConfig::new(ScanKind::SymmetricUniform, 5);
        let axes = cfg.axes();
        let (whole, _) = scan_chunk(&cfg, &axes, 0, cfg.total_points(), false);
        let mut parts = ScanSummary::default();
        for s in (0..cfg.total_points()).step_by(37) {
            parts.merge(scan_chunk(&cfg, &axes, s, (s + 37).min(cfg.total_points()), false).0);
        }
        assert_eq!(whole.max_i, parts.max_i);
        assert_eq!(whole.argmax, parts.argmax);
        assert_eq!(whole.histogram, parts.histogram);
        assert_eq!(whole.retained, parts.retained);
    }
}
