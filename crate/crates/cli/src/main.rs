use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kflow_cli::{
    cmd_analyze, cmd_report, cmd_run, cmd_verify, init_threads, termination_code, RunConfig,
};
use kflow_core::analysis::AnalysisReport;
use kflow_core::singularity::LimitMode;

#[derive(Parser)]
#[command(
    name = "kflow",
    version,
    about = "Mean curvature flow of surfaces in C^2 and blow-up analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Symplectic,
    Lagrangian,
}

#[derive(clap::Args)]
struct Common {
    /// Flat key-value config file (TOML syntax).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `resolution` from the config.
    #[arg(long)]
    resolution: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> kflow_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(n) = self.resolution {
            cfg.resolution = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Flow a scenario and write a KF-TRAJ checkpoint plus summary.csv.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blow-up analysis of a checkpoint (default: <out>/traj).
    Analyze {
        traj: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a standalone mesh as a blow-up limit.
    Verify {
        mesh: PathBuf,
        #[arg(long, value_enum, default_value = "symplectic")]
        mode: Mode,
        /// Rescale so that |A| = 1 at the vertex nearest the origin first.
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize an output directory and write plot.py.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> kflow_core::Result<i32> {
    init_threads()?;
    match cli.command {
        Command::Run { common, out } => {
            let cfg = common.load()?;
            let r = cmd_run(&cfg, &out)?;
            emit(&format!(
                "{} snapshots, t = {}, termination {}\n",
                r.snapshots,
                r.t_final,
                r.termination.label()
            ));
            Ok(termination_code(&r.termination))
        }
        Command::Analyze { traj, common, out } => {
            let cfg = common.load()?;
            let traj = traj.unwrap_or_else(|| out.join("traj"));
            match cmd_analyze(&traj, &cfg, &out)? {
                AnalysisReport::NoBlowup { reason, .. } => {
                    emit(&format!("no blow-up detected: {reason}\n"))
                }
                AnalysisReport::Blowup(b) => emit(&format!(
                    "T = {:.6}, type {:?}, m -> {:.4}; report in {}\n",
                    b.fit.t_hat,
                    b.type_report.verdict,
                    b.type_report.final_m,
                    out.join("report.json").display()
                )),
            }
            Ok(0)
        }
        Command::Verify {
            mesh,
            mode,
            normalize,
            common,
            out,
        } => {
            let cfg = common.load()?;
            let mode = match mode {
                Mode::Symplectic => LimitMode::Symplectic,
                Mode::Lagrangian => LimitMode::Lagrangian,
            };
            let rep = cmd_verify(&mesh, mode, normalize, &cfg, out.as_deref())?;
            emit(&(serde_json::to_string_pretty(&rep)? + "\n"));
            Ok(0)
        }
        Command::Report { out } => {
            emit(&cmd_report(&out)?);
            Ok(0)
        }
    }
}
