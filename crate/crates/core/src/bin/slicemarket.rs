use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slicemarket::exec::ExecMode;
use slicemarket::experiment::{self, ExperimentPlan, SweepKind, SweepPlan, CONFIG_DIR_ENV};
use slicemarket::mechanisms::Mechanism;
use slicemarket::solver::SolverSettings;
use slicemarket::Error;

const EXIT_VALIDATION: u8 = 3;
const EXIT_CONVERGENCE: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(
    name = "slicemarket",
    version,
    about = "Market-based allocation of RAN and MEC resources"
)]
struct Cli {
    /// Directory searched for configuration files.
    #[arg(long, global = true, env = CONFIG_DIR_ENV)]
    config_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Stopping tolerance on the largest KKT residual.
    #[arg(long)]
    kkt_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one instance file from a deployment.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance file with one mechanism.
    Solve {
        /// Instance file.
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ME")]
        mechanism: Mechanism,
        /// Result file; the summary is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Attach KKT and equilibrium certificates (ME only).
        #[arg(long)]
        certificates: bool,
    },
    /// Run a batch of generated instances and write CSV tables.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Repeatable; defaults to the configured mechanisms.
        #[arg(long)]
        mechanism: Vec<Mechanism>,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        instances: Option<usize>,
        /// Worker threads; one per logical core by default.
        #[arg(long)]
        workers: Option<usize>,
        /// Evaluate certificates on the equilibrium (true/false).
        #[arg(long)]
        certificates: Option<bool>,
    },
    /// Sensitivity sweep over budgets, edge nodes or cells.
    Sweep {
        /// budget, nodes or cells; falls back to the configured kind.
        kind: Option<SweepKind>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mechanism: Vec<Mechanism>,
        /// Output CSV file.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Dimension(_)
        | Error::InvalidInstance(_)
        | Error::InvalidArgument(_)
        | Error::OracleTooLarge(_)
        | Error::Parse { .. } => EXIT_VALIDATION,
        Error::Solver(_) => EXIT_CONVERGENCE,
        Error::Io { .. } | Error::Serialize(_) | Error::Csv(_) => EXIT_IO,
    }
}

fn settings(base: &SolverSettings, kkt_tol: Option<f64>) -> SolverSettings {
    let mut s = base.clone();
    if let Some(tol) = kkt_tol {
        s.kkt_tolerance = tol;
    }
    s
}

fn run(cli: Cli) -> Result<(), Error> {
    let dir = cli.config_dir.as_deref();
    match cli.command {
        Command::Generate { common, out } => {
            let config = experiment::load_config(common.config.as_deref(), dir)?;
            let seed = common
                .seed
                .unwrap_or_else(|| config.deployment.as_ref().map_or(0, |d| d.seed));
            let instance = experiment::cmd_generate(&config, seed, &out)?;
            println!(
                "wrote {} (S={} M={} C={})",
                out.display(),
                instance.provider_count(),
                instance.node_count(),
                instance.cell_count()
            );
        }
        Command::Solve {
            instance,
            common,
            mechanism,
            out,
            certificates,
        } => {
            if common.seed.is_some() {
                log::warn!("--seed has no effect on solve");
            }
            let config = experiment::load_config(common.config.as_deref(), dir)?;
            let settings = settings(&config.solver, common.kkt_tol);
            let outcome = experiment::cmd_solve(
                &instance,
                mechanism,
                &settings,
                certificates,
                out.as_deref(),
            )?;
            let doc = &outcome.document;
            println!("mechanism {} status {}", doc.mechanism, doc.status.as_str());
            println!("social welfare {}", doc.social_welfare);
            println!("nsw log {}", doc.nsw_log);
            println!("utilities {:?}", doc.utilities);
            for cert in &doc.certificates {
                println!("{cert}");
            }
            if !outcome.converged {
                let diag = doc
                    .solver
                    .as_ref()
                    .map(|s| {
                        format!(
                            " after {} iterations (primal {:.2e}, dual {:.2e}, gap {:.2e})",
                            s.iterations, s.primal_residual, s.dual_residual, s.duality_gap
                        )
                    })
                    .unwrap_or_default();
                return Err(Error::Solver(format!(
                    "{} did not converge{diag}",
                    doc.mechanism
                )));
            }
        }
        Command::Experiment {
            common,
            mechanism,
            out,
            instances,
            workers,
            certificates,
        } => {
            let config = experiment::load_config(common.config.as_deref(), dir)?;
            let mut plan = ExperimentPlan::from_config(&config);
            plan.settings = settings(&config.solver, common.kkt_tol);
            if let Some(seed) = common.seed {
                plan.seed = seed;
            }
            if !mechanism.is_empty() {
                plan.mechanisms = mechanism;
                plan.mechanisms.sort();
                plan.mechanisms.dedup();
            }
            if let Some(n) = instances {
                plan.instances = n;
            }
            if let Some(c) = certificates {
                plan.certificates = c;
            }
            plan.mode = ExecMode::best_available(workers);
            let report = experiment::cmd_experiment(&plan, &out)?;
            let failed = report.summary.failed_instances;
            println!(
                "{} instances ({} failed) written to {}",
                report.summary.instances,
                failed,
                out.display()
            );
            for m in &report.summary.mechanisms {
                println!(
                    "{:>3}: converged {}/{} mean SW {:.3} mean eta {}",
                    m.mechanism,
                    m.converged,
                    m.runs,
                    m.mean_social_welfare,
                    m.mean_efficiency
                        .map_or("-".to_string(), |e| format!("{e:.3}"))
                );
            }
            for c in &report.summary.certificates {
                println!("{}: {}/{} passed", c.name, c.passed, c.evaluated);
            }
        }
        Command::Sweep {
            kind,
            common,
            mechanism,
            out,
            workers,
        } => {
            let config = experiment::load_config(common.config.as_deref(), dir)?;
            let kind = kind.or(config.sweep.kind).ok_or_else(|| {
                Error::InvalidArgument("sweep kind missing (budget, nodes or cells)".into())
            })?;
            let mut plan = SweepPlan::from_config(&config, kind);
            plan.settings = settings(&config.solver, common.kkt_tol);
            if let Some(seed) = common.seed {
                plan.seed = seed;
            }
            if !mechanism.is_empty() {
                plan.mechanisms = mechanism;
                plan.mechanisms.sort();
                plan.mechanisms.dedup();
            }
            plan.mode = ExecMode::best_available(workers);
            let rows = experiment::cmd_sweep(&plan, &out)?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
