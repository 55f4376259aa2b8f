use clap::Args;
use racbound_core::npa::{self, BoundResult, Level, RankReport, SdpForm, SolveOptions};
use racbound_core::sdp::{CertificateReport, SdpOptions};
use racbound_core::SolveStatus;
use serde::Serialize;
use serde_json::json;

use crate::output::{opt_sig, sig, Output};
use crate::{Failure, OutArg};

fn parse_form(s: &str) -> Result<SdpForm, String> {
    match s {
        "auto" => Ok(SdpForm::Auto),
        "primal" => Ok(SdpForm::Primal),
        "lmi" => Ok(SdpForm::Lmi),
        other => Err(format!("unknown form {other:?} (expected auto, primal or lmi)")),
    }
}

/// Solver flags shared by `bound` and `table`.
#[derive(Args, Debug, Clone, Serialize)]
pub struct SolverArgs {
    /// Relative gap and feasibility tolerance.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Largest moment-matrix dimension attempted.
    #[arg(long, default_value_t = npa::DEFAULT_BUDGET)]
    pub budget: usize,
    /// Which side of the SDP is handed to the interior-point engine: auto, primal or lmi.
    #[arg(long, default_value = "auto", value_parser = parse_form)]
    pub form: SdpForm,
    /// Mehrotra predictor-corrector steps.
    #[arg(long)]
    pub mehrotra: bool,
}

impl SolverArgs {
    fn options(&self) -> Result<SolveOptions, Failure> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Failure::Invalid(format!("tolerance {} outside (0, 1)", self.tol)));
        }
        Ok(SolveOptions {
            sdp: SdpOptions { tol: self.tol, max_iter: self.max_iter, mehrotra: self.mehrotra, ..Default::default() },
            budget: self.budget,
            form: self.form,
        })
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub k: usize,
    /// Hierarchy level: 1 or 1+AB.
    #[arg(long, default_value = "1")]
    pub level: Level,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TableArgs {
    /// Comma-separated hierarchy levels.
    #[arg(long, value_delimiter = ',', default_value = "1,1+AB")]
    pub levels: Vec<Level>,
    #[arg(long, default_value_t = 5)]
    pub dmax: usize,
    #[arg(long, default_value_t = 5)]
    pub kmax: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Serialize)]
struct BoundRecord {
    d: usize,
    k: usize,
    level: Level,
    status: SolveStatus,
    objective: Option<f64>,
    dual_objective: Option<f64>,
    gain: Option<f64>,
    xi: Vec<f64>,
    ic_bound: f64,
    ic_margin: Option<f64>,
    gap: f64,
    dim: Option<usize>,
    free_variables: Option<usize>,
    form: Option<SdpForm>,
    iterations: Option<usize>,
    isotropic: Option<bool>,
    certificate: Option<CertificateReport>,
    rank_loop: Option<RankReport>,
}

impl BoundRecord {
    fn new(r: &BoundResult) -> Self {
        let det = r.detail.as_deref();
        let rank_loop = if r.level == Level::OneAB && r.status == SolveStatus::Optimal {
            npa::stopping_criterion(r, npa::DEFAULT_RANK_TOL).ok()
        } else {
            None
        };
        BoundRecord {
            d: r.d,
            k: r.k,
            level: r.level,
            status: r.status,
            objective: r.objective,
            dual_objective: det.map(|d| d.dual_objective),
            gain: r.gain,
            xi: r.xi.clone(),
            ic_bound: (r.d as f64).log2(),
            ic_margin: r.ic_margin(),
            gap: r.gap,
            dim: det.map(|d| d.dim),
            free_variables: det.map(|d| d.free_variables),
            form: det.map(|d| d.form),
            iterations: det.map(|d| d.iterations),
            isotropic: det.map(|d| d.isotropic),
            certificate: det.and_then(|d| d.certificate),
            rank_loop,
        }
    }
}

pub const TABLE_HEADER: &str = "d,k,level,status,dim,objective,gain,ic_bound,margin";

fn csv_num(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v}"))
}

fn csv_row(d: usize, k: usize, level: Level, status: &str, dim: usize, r: Option<&BoundResult>) -> String {
    format!(
        "{d},{k},{},{status},{dim},{},{},{},{}",
        level.as_str(),
        csv_num(r.and_then(|r| r.objective)),
        csv_num(r.and_then(|r| r.gain)),
        (d as f64).log2(),
        csv_num(r.and_then(|r| r.ic_margin())),
    )
}

/// Moment-matrix dimension, or `None` when it does not fit in a `usize`.
fn checked_dim(d: usize, k: usize, level: Level) -> Option<usize> {
    let nx = d.checked_pow(u32::try_from(k - 1).ok()?)?;
    let base = (d - 1).checked_mul(nx.checked_add(k)?)?.checked_add(1)?;
    match level {
        Level::One => Some(base),
        Level::OneAB => base.checked_add((d - 1).checked_mul(d - 1)?.checked_mul(nx)?.checked_mul(k)?),
    }
}

pub fn bound(a: BoundArgs) -> Result<(), Failure> {
    let opts = a.solver.options()?;
    let r = npa::solve_level(a.d, a.k, a.level, &opts)?;
    let dim = r.detail.as_ref().map_or(0, |d| d.dim);
    let mut out = Output::create(a.out.out.clone(), "bound")?;
    let record = BoundRecord::new(&r);
    let name = format!("bound_d{}_k{}_{}.json", a.d, a.k, a.level.as_str().replace('+', ""));
    out.write_json(&name, &record)?;
    out.append_csv("bounds.csv", TABLE_HEADER, &[csv_row(a.d, a.k, a.level, &r.status.to_string(), dim, Some(&r))])?;
    let manifest = out.finish("bound", json!(a))?;
    println!(
        "d={} k={} level {}: objective {}, gain {}, information causality {}, margin {} ({}, {} iterations)",
        a.d,
        a.k,
        a.level,
        opt_sig(r.objective),
        opt_sig(r.gain),
        sig(record.ic_bound),
        opt_sig(r.ic_margin()),
        r.status,
        record.iterations.unwrap_or(0)
    );
    if let Some(rl) = &record.rank_loop {
        println!("rank loop at tolerance {}: {} (full rank {})", sig(rl.rank_tol), rl.rank_loop, rl.full_rank);
    }
    println!("manifest: {}", manifest.display());
    if r.status != SolveStatus::Optimal {
        return Err(Failure::Solver(format!("solver stopped with status {}", r.status)));
    }
    Ok(())
}

pub fn table(a: TableArgs) -> Result<(), Failure> {
    let opts = a.solver.options()?;
    if a.dmax < 2 || a.kmax < 2 {
        return Err(Failure::Invalid("dmax and kmax must be at least 2".into()));
    }
    if a.levels.is_empty() {
        return Err(Failure::Invalid("no levels requested".into()));
    }
    let mut out = Output::create(a.out.out.clone(), "table")?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &level in &a.levels {
        println!("level {level}");
        let head: Vec<String> = (2..=a.dmax).map(|d| format!("{:>22}", format!("d={d}"))).collect();
        println!("{:>28}{}", "", head.join(""));
        let ic: Vec<String> = (2..=a.dmax).map(|d| format!("{:>22}", sig((d as f64).log2()))).collect();
        println!("{:>28}{}", "information causality", ic.join(""));
        for k in 2..=a.kmax {
            let mut cells = Vec::new();
            for d in 2..=a.dmax {
                let dim = checked_dim(d, k, level).unwrap_or(usize::MAX);
                if dim > opts.budget {
                    rows.push(csv_row(d, k, level, "skipped", dim, None));
                    cells.push(format!("{:>22}", "skipped"));
                    continue;
                }
                let r = npa::solve_level(d, k, level, &opts)?;
                rows.push(csv_row(d, k, level, &r.status.to_string(), dim, Some(&r)));
                cells.push(format!("{:>22}", format!("{} / {}", opt_sig(r.objective), opt_sig(r.gain))));
                records.push(BoundRecord::new(&r));
            }
            println!("{:>28}{}", format!("k={k} (bound / gain)"), cells.join(""));
        }
    }
    out.append_csv("table.csv", TABLE_HEADER, &rows)?;
    out.write_json("table.json", &records)?;
    let manifest = out.finish("table", json!(a))?;
    let worst = records.iter().filter_map(|r| r.ic_margin).fold(f64::INFINITY, f64::min);
    if worst.is_finite() {
        println!("smallest information causality margin: {}", sig(worst));
    }
    println!("manifest: {}", manifest.display());
    Ok(())
}
