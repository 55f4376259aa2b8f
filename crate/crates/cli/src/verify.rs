use clap::{Args, ValueEnum};
use racbound_core::infotheory::{self, SupMode};
use racbound_core::nsbox::{self, NsBoxJson};
use racbound_core::{NsBox, RacScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::PathBuf;

use crate::output::{sig, Output};
use crate::{Failure, OutArg};

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    SignalDecay,
    Hessian,
    Monotonic,
    NoSignaling,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Noise parameter for the signal-decay check.
    #[arg(long, default_value_t = 0.5)]
    pub xi: f64,
    /// Grid resolution (signal-decay: simplex grid, monotonic: xi grid).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Random points for the Hessian check.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Box in the NsBox JSON schema for the no-signaling check.
    #[arg(long = "box")]
    pub nsbox: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    target: Target,
    pass: bool,
    summary: String,
    details: Value,
}

pub fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let report = match a.target {
        Target::SignalDecay => signal_decay(&a)?,
        Target::Hessian => hessian(&a)?,
        Target::Monotonic => monotonic(&a)?,
        Target::NoSignaling => no_signaling(&a)?,
    };
    let mut out = Output::create(a.out.out.clone(), "verify")?;
    out.write_json("report.json", &report)?;
    let manifest = out.finish("verify", json!(a))?;
    println!("{} {}", if report.pass { "PASS" } else { "FAIL" }, report.summary);
    println!("manifest: {}", manifest.display());
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verification(report.summary))
    }
}

fn signal_decay(a: &VerifyArgs) -> Result<VerifyReport, Failure> {
    let grid = a.grid.unwrap_or(if a.d == 2 { 400 } else { 90 });
    let full = infotheory::signal_decay_ratio_sup_with(a.d, a.xi, grid, SupMode::FullSimplex)?;
    let uniform = infotheory::signal_decay_ratio_sup_with(a.d, a.xi, grid, SupMode::UniformAverage)?;
    let bound = infotheory::signal_decay_bound(a.d, a.xi);
    let pass = full.sup <= bound + 2e-3;
    Ok(VerifyReport {
        target: a.target,
        pass,
        summary: format!(
            "signal decay d={} xi={}: sup I(X;Z)/I(X;Y) = {} vs xi^2 + 2e-3 = {} (ratio at the uniform average {})",
            a.d,
            sig(a.xi),
            sig(full.sup),
            sig(bound + 2e-3),
            sig(uniform.sup)
        ),
        details: json!({ "grid": grid, "bound": bound, "full_simplex": full, "uniform_average": uniform }),
    })
}

fn hessian(a: &VerifyArgs) -> Result<VerifyReport, Failure> {
    let (d, k) = (a.d, a.k);
    if d < 2 || k < 2 {
        return Err(Failure::Invalid("d and k must be at least 2".into()));
    }
    let nx = d.checked_pow(k as u32 - 1).filter(|n| n * k <= 100_000).ok_or_else(|| {
        Failure::Invalid(format!("d={d}, k={k} is too large for the finite-difference check"))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut positive_uniform = true;
    let mut samples = Vec::new();
    for _ in 0..a.points {
        let p: Vec<f64> = (0..nx * k).map(|_| rng.random_range(0.2..0.8)).collect();
        let nsbox = NsBox::from_success_probs(d, k, &p)?;
        let marginals = (0..k)
            .map(|_| {
                let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|v| v / s).collect()
            })
            .collect();
        let scheme = RacScheme::new(d, k, marginals)?;
        let f = |b: &NsBox| infotheory::information_gain(b, &scheme).map(|g| g.total);
        let fd = (f(&infotheory::perturb_v(&nsbox, h)?)? - 2.0 * f(&nsbox)? + f(&infotheory::perturb_v(&nsbox, -h)?)?)
            / (h * h);
        let analytic = infotheory::hessian_d2i(&nsbox, &scheme)?;
        let rel = (analytic - fd).abs() / analytic.abs();
        worst = worst.max(rel);
        let at_uniform = infotheory::hessian_d2i(&nsbox, &RacScheme::uniform(d, k)?)?;
        positive_uniform &= at_uniform > 0.0;
        samples.push(json!({ "analytic": analytic, "finite_difference": fd, "relative_error": rel }));
    }
    let pass = worst <= 1e-5 && positive_uniform;
    Ok(VerifyReport {
        target: a.target,
        pass,
        summary: format!(
            "hessian d={d} k={k}: {} random points, max relative deviation from central differences {} (tol 1e-5), \
             positive at uniform marginals: {positive_uniform}",
            a.points,
            sig(worst)
        ),
        details: json!({ "step": h, "max_relative_error": worst, "positive_at_uniform": positive_uniform, "samples": samples }),
    })
}

fn monotonic(a: &VerifyArgs) -> Result<VerifyReport, Failure> {
    let n = a.grid.unwrap_or(1000);
    if n < 2 {
        return Err(Failure::Invalid("grid must have at least 2 points".into()));
    }
    let values = (0..n)
        .map(|i| infotheory::gain_unbiased(a.d, a.k, i as f64 / (n - 1) as f64))
        .collect::<Result<Vec<f64>, _>>()?;
    let min_step = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let pass = min_step > 0.0;
    Ok(VerifyReport {
        target: a.target,
        pass,
        summary: format!(
            "gain_unbiased d={} k={} on {n} xi points: smallest increment {}, from {} to {}",
            a.d,
            a.k,
            sig(min_step),
            sig(values[0]),
            sig(values[n - 1])
        ),
        details: json!({ "grid": n, "min_increment": min_step, "values": values }),
    })
}

fn no_signaling(a: &VerifyArgs) -> Result<VerifyReport, Failure> {
    let boxes: Vec<(String, NsBox)> = match &a.nsbox {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
            let j: NsBoxJson = serde_json::from_str(&text)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
            vec![(path.display().to_string(), NsBox::from_json(&j)?)]
        }
        None => {
            let (d, k) = (a.d, a.k);
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let nx = d.checked_pow(k as u32 - 1).ok_or_else(|| Failure::Invalid("d^(k-1) overflows".into()))?;
            let p: Vec<f64> = (0..nx * k).map(|_| rng.random_range(0.0..1.0)).collect();
            vec![
                ("noiseless".into(), NsBox::noiseless(d, k)?),
                ("completely random".into(), NsBox::completely_random(d, k)?),
                ("random success probabilities".into(), NsBox::from_success_probs(d, k, &p)?),
            ]
        }
    };
    let reports: Vec<Value> = boxes
        .iter()
        .map(|(name, b)| {
            let r = nsbox::check_no_signaling(b);
            json!({ "box": name, "report": r })
        })
        .collect();
    let failing: Vec<&str> = boxes
        .iter()
        .filter(|(_, b)| !nsbox::check_no_signaling(b).pass)
        .map(|(n, _)| n.as_str())
        .collect();
    Ok(VerifyReport {
        target: a.target,
        pass: failing.is_empty(),
        summary: if failing.is_empty() {
            format!("no-signaling: {} box(es) within {}", boxes.len(), sig(nsbox::NO_SIGNALING_TOL))
        } else {
            format!("no-signaling violated by {}", failing.join(", "))
        },
        details: json!(reports),
    })
}
