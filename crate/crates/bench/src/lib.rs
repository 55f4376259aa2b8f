//! Benchmark fixtures.

use racbound_core::explorer::{ScanConfig, ScanKind};
use racbound_core::npa::SolveOptions;
use racbound_core::{NsBox, RacScheme};

/// Success box with every probability distinct, so no channel row is degenerate.
pub fn staggered_box(d: usize, k: usize) -> NsBox {
    let n = d.pow(k as u32 - 1) * k;
    let p: Vec<f64> = (0..n).map(|i| 0.55 + 0.4 * (i as f64 + 1.0) / (n as f64 + 1.0)).collect();
    NsBox::from_success_probs(d, k, &p).expect("valid success probabilities")
}

pub fn uniform_scheme(d: usize, k: usize) -> RacScheme {
    RacScheme::uniform(d, k).expect("valid scenario")
}

pub fn solve_options() -> SolveOptions {
    SolveOptions::default()
}

pub fn symmetric_scan(resolution: usize) -> ScanConfig {
    ScanConfig::new(ScanKind::SymmetricUniform, resolution)
}
