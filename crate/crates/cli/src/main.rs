use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod bound;
mod output;
mod scan;
mod verify;

/// Exit status other than success.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Budget(String),
    Verification(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Verification(_) => 4,
            Failure::Solver(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Budget(m) | Failure::Verification(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<racbound_core::Error> for Failure {
    fn from(e: racbound_core::Error) -> Self {
        use racbound_core::Error;
        match e {
            Error::InvalidArgument(_) | Error::SingularInput(_) => Failure::Invalid(e.to_string()),
            Error::Budget { .. } => Failure::Budget(format!("refused: {e}")),
            Error::Solver(_) => Failure::Solver(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "racbound", version, about = "Information-gain bounds for random access codes over no-signaling boxes")]
struct Cli {
    /// Worker threads for scans and sweeps.
    #[arg(long, env = "RACBOUND_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one relaxation and report its bound and information gain.
    Bound(bound::BoundArgs),
    /// Sweep the bound tables over d and k.
    Table(bound::TableArgs),
    /// Brute-force scan of the binary two-position code.
    Scan(scan::ScanArgs),
    /// Run a property check.
    Verify(verify::VerifyArgs),
}

/// Output directory flag shared by every command.
#[derive(clap::Args, Debug, Clone, serde::Serialize)]
pub struct OutArg {
    /// Results directory (default: results/<command>-<timestamp>).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Invalid("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Invalid(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Bound(a) => bound::bound(a),
        Command::Table(a) => bound::table(a),
        Command::Scan(a) => scan::scan(a),
        Command::Verify(a) => verify::verify(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
