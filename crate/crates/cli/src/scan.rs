use clap::{Args, ValueEnum};
use racbound_core::explorer::{self, BoxCase, ScanConfig, ScanKind, ScanPoint, CSV_HEADER};
use serde::Serialize;
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use crate::output::{sig, Output};
use crate::{Failure, OutArg};

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Symmetric,
    Isotropic,
    CaseI,
    CaseIi,
    CaseIii,
    General,
}

impl Mode {
    fn kind(self) -> ScanKind {
        match self {
            Mode::Symmetric => ScanKind::SymmetricUniform,
            Mode::Isotropic => ScanKind::Isotropic,
            Mode::CaseI => ScanKind::FixedBox(BoxCase::I),
            Mode::CaseIi => ScanKind::FixedBox(BoxCase::II),
            Mode::CaseIii => ScanKind::FixedBox(BoxCase::III),
            Mode::General => ScanKind::General,
        }
    }
}

const AXES: [&str; 6] = ["p00", "p01", "p10", "p11", "pa0", "pa1"];

#[derive(Args, Debug, Clone, Serialize)]
pub struct ScanArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Grid points per scanned axis, endpoints included.
    #[arg(long, default_value_t = explorer::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// Sub-box such as `p00=0.8:1,pa0=0.4:0.6`; axes not named span [0, 1].
    #[arg(long)]
    pub window: Option<String>,
    /// Checkpoint file; an existing one for the same scan is resumed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Skip the per-point CSV and write only the aggregate.
    #[arg(long)]
    pub summary_only: bool,
    /// Also write `plot.dat`, two columns `chsh I`.
    #[arg(long)]
    pub plot_data: bool,
    #[command(flatten)]
    pub out: OutArg,
}

fn parse_window(text: &str) -> Result<[(f64, f64); 6], Failure> {
    let bad = |m: String| Failure::Invalid(format!("invalid window {text:?}: {m}"));
    let mut w = [(0.0, 1.0); 6];
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, range) = part.split_once('=').ok_or_else(|| bad(format!("{part:?} is not axis=lo:hi")))?;
        let axis = AXES
            .iter()
            .position(|a| *a == name.trim())
            .ok_or_else(|| bad(format!("unknown axis {name:?} (expected one of {})", AXES.join(", "))))?;
        let (lo, hi) = range.split_once(':').ok_or_else(|| bad(format!("{range:?} is not lo:hi")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        w[axis] = (num(lo)?, num(hi)?);
    }
    Ok(w)
}

pub fn scan(a: ScanArgs) -> Result<(), Failure> {
    let window = a.window.as_deref().map(parse_window).transpose()?;
    let config = ScanConfig { kind: a.mode.kind(), resolution: a.resolution, window };
    config.validate()?;
    let mut out = Output::create(a.out.out.clone(), "scan")?;
    let mut points = if a.summary_only { None } else { Some(writer(out.path("points.csv"))?) };
    let mut plot = if a.plot_data { Some(writer(out.path("plot.dat"))?) } else { None };
    if let Some(w) = points.as_mut() {
        writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
    }
    if let Some(w) = plot.as_mut() {
        writeln!(w, "# chsh I").map_err(io_err)?;
    }
    let mut failed: Option<std::io::Error> = None;
    let mut sink = |p: &ScanPoint| {
        if failed.is_some() {
            return;
        }
        let r = points
            .as_mut()
            .map_or(Ok(()), |w| writeln!(w, "{}", p.csv_row()))
            .and_then(|_| plot.as_mut().map_or(Ok(()), |w| writeln!(w, "{} {}", p.chsh, p.i)));
        if let Err(e) = r {
            failed = Some(e);
        }
    };
    let collect = !a.summary_only || a.plot_data;
    let summary = if collect {
        explorer::scan_resumable(&config, Some(&mut sink), a.checkpoint.as_deref())?
    } else {
        explorer::scan_resumable(&config, None, a.checkpoint.as_deref())?
    };
    if let Some(e) = failed {
        return Err(io_err(e));
    }
    for w in [points, plot].into_iter().flatten() {
        w.into_inner().map_err(|e| io_err(e.into_error()))?.sync_all().map_err(io_err)?;
    }
    out.write_json("aggregate.json", &summary)?;
    let manifest = out.finish("scan", json!(a))?;
    println!(
        "{} points visited, {} quantum-feasible retained, max I = {} on {} point(s)",
        summary.visited,
        summary.retained,
        sig(summary.max_i),
        summary.argmax_count
    );
    if let Some(p) = summary.argmax.first() {
        println!(
            "first maximiser: p = ({}, {}, {}, {}), Pr(a0=0) = {}, Pr(a1=0) = {}, CHSH = {}, I0 = {}, I1 = {}",
            sig(p.p[0]),
            sig(p.p[1]),
            sig(p.p[2]),
            sig(p.p[3]),
            sig(p.pa[0]),
            sig(p.pa[1]),
            sig(p.chsh),
            sig(p.i0),
            sig(p.i1)
        );
    }
    println!("quantum points above the information causality bound: {}", summary.ic_violations);
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn writer(path: PathBuf) -> Result<BufWriter<File>, Failure> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Invalid(format!("writing scan output: {e}"))
}
