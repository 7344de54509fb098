use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use signlab::harness::verify::{bimodal_base, switch_base, SWITCH_GRID};
use signlab::harness::{
    noiseless_decay, run_checks, run_single, run_switch_suite, run_theorem_suite, write_run, CheckOutcome,
    ExperimentConfig,
};

/// Output root used when `--out` is not given.
const OUT_DIR_ENV: &str = "SIGNLAB_OUT_DIR";

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "signlab",
    version,
    about = "Sign-based optimizers and their verification suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write `<seed>.csv` / `<seed>.json` per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed to run; defaults to every seed listed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seed-averaged rate measures against both rate bounds on a (K, n) grid.
    TheoremSuite {
        /// Base config; defaults to the built-in 10-dimensional quadratic.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        k_grid: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
        n_grid: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hybrid over a grid of switch points against SignSGD-M and SGD.
    SwitchSuite {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the dithered-sign expectation.
    DitherVerify,
    /// Monte Carlo and grid checks of the sign-failure bound and its relaxation.
    BoundVerify,
    /// Every acceptance check.
    Selftest {
        /// Restrict to these criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
    /// Print a canonical config.
    Config {
        #[arg(long, value_enum, default_value_t = Preset::Theorem)]
        preset: Preset,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Theorem,
    Switch,
    Bimodal,
}

enum Failure {
    Usage(String),
    Checks,
    Diverged,
}

impl From<signlab::Error> for Failure {
    fn from(e: signlab::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("signlab-out"))
}

fn load(path: Option<&Path>, fallback: fn() -> ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    let cfg = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => fallback(),
    };
    cfg.validate()?;
    cfg.build_problem()?;
    Ok(cfg)
}

fn write_report<T: serde::Serialize>(out: &Path, name: &str, report: &T) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    let path = out.join(name);
    signlab::harness::emit_json(report, &path)?;
    println!("report: {}", path.display());
    Ok(())
}

fn report_checks(outcomes: &[CheckOutcome]) -> Result<(), Failure> {
    for o in outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, seed, out } => {
            let cfg = load(Some(&config), ExperimentConfig::default)?;
            let seeds = seed.map_or_else(|| cfg.run.seeds.clone(), |s| vec![s]);
            if seeds.is_empty() {
                return Err(Failure::Usage("no seeds to run".into()));
            }
            let out = out_root(out);
            let mut diverged = false;
            for s in seeds {
                let rec = run_single(&cfg, s)?;
                let (csv, _) = write_run(&cfg, &rec, &out, &format!("seed{s}"))?;
                let sm = &rec.summary;
                println!(
                    "seed {s}: f {:.6e} -> {:.6e}, mean phi {:.6e}, mean l1 {:.6e}, delta {:.6e}{} ({})",
                    sm.initial_f,
                    sm.final_f,
                    sm.mean_phi,
                    sm.mean_l1_grad,
                    sm.delta_used,
                    if sm.diverged { ", DIVERGED" } else { "" },
                    csv.display()
                );
                diverged |= sm.diverged;
            }
            if diverged {
                Err(Failure::Diverged)
            } else {
                Ok(())
            }
        }
        Command::TheoremSuite {
            config,
            seeds,
            k_grid,
            n_grid,
            out,
        } => {
            let cfg = load(config.as_deref(), ExperimentConfig::theorem_quadratic)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = run_theorem_suite(&cfg, &seeds, &k_grid, &n_grid)?;
            println!(
                "{:>7} {:>3} {:>12} {:>12} {:>12} {:>12}  pass",
                "K", "n", "mean_phi", "rhs_phi", "mean_l1", "rhs_l1"
            );
            for c in &report.cells {
                println!(
                    "{:>7} {:>3} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}  {}",
                    c.steps,
                    c.batch_size,
                    c.mean_phi,
                    c.rhs_phi,
                    c.mean_l1,
                    c.rhs_l1,
                    c.pass_phi && c.pass_l1
                );
            }
            let decay = if k_grid.len() >= 2 {
                let fit = noiseless_decay(&cfg, &seeds, &k_grid)?;
                println!(
                    "noiseless decay exponent: phi {:.4}, l1 {:.4}",
                    fit.phi_exponent, fit.l1_exponent
                );
                Some(fit)
            } else {
                None
            };
            write_report(
                &out_root(out),
                "theorem_suite.json",
                &serde_json::json!({ "config": cfg.pairs(), "report": report, "noiseless_decay": decay }),
            )?;
            let diverged = report.cells.iter().any(|c| c.diverged_runs > 0);
            if diverged {
                Err(Failure::Diverged)
            } else if report.all_phi_pass() && report.all_l1_pass() {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
        Command::SwitchSuite {
            config,
            seeds,
            t_grid,
            out,
        } => {
            let cfg = load(config.as_deref(), switch_base)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let t_grid = t_grid.unwrap_or_else(|| SWITCH_GRID.to_vec());
            let report = run_switch_suite(&cfg, &t_grid, &seeds)?;
            for e in report.hybrid.iter().chain([&report.signsgdm, &report.sgd]) {
                let t = e.t_switch.map_or_else(|| "-".to_string(), |t| t.to_string());
                let lam = e
                    .median_lambda_at_switch
                    .map_or_else(|| "-".to_string(), |l| format!("{l:.5e}"));
                println!(
                    "{:<9} T={:<6} median f {:.5e}  mean f {:.5e}  median lambda {lam}",
                    e.label, t, e.median_final_f, e.mean_final_f
                );
            }
            write_report(
                &out_root(out),
                "switch_suite.json",
                &serde_json::json!({ "config": cfg.pairs(), "report": report }),
            )?;
            if report.switch_beats_sign() {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
        Command::DitherVerify => report_checks(&run_checks(&[5])),
        Command::BoundVerify => report_checks(&run_checks(&[1, 2])),
        Command::Selftest { only } => {
            let outcomes = run_checks(&only);
            let passed = outcomes.iter().filter(|o| o.passed).count();
            let result = report_checks(&outcomes);
            println!("{passed}/{} checks passed", outcomes.len());
            result
        }
        Command::Config { preset } => {
            let cfg = match preset {
                Preset::Default => ExperimentConfig::default(),
                Preset::Theorem => ExperimentConfig::theorem_quadratic(),
                Preset::Switch => switch_base(),
                Preset::Bimodal => bimodal_base(),
            };
            print!("{}", cfg.emit());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Checks) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::Diverged) => {
            eprintln!("error: run diverged");
            ExitCode::from(EXIT_DIVERGED)
        }
    }
}
