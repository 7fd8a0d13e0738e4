use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use earl::agents::registry;
use earl::harness::{
    cmd_compare, cmd_eval, cmd_train, load_config, run_gradcheck, ExperimentConfig, HarnessError,
    SweepKind,
};

#[derive(Parser)]
#[command(
    name = "earl",
    version,
    about = "Edge allocation research lab: train, evaluate, and compare \
             bandwidth/CPU sharing methods in a deterministic simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's method.
    #[arg(long)]
    method: Option<String>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(method) = &self.method {
            cfg.method = method.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a method and write its run directory.
    Train(CommonArgs),
    /// Evaluate a method over deterministic episodes.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to restore before evaluating.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run methods across one environment parameter grid.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter to vary: delay, loss, bandwidth, or cpu.
        #[arg(long)]
        sweep: String,
        /// Comma-separated method names; defaults to every registered method.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        /// Base seed for the random probes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List registered methods.
    Methods,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let report = cmd_train(&cfg)?;
            println!("run {}", report.run_id);
            println!("episodes {}", report.episodes);
            if let Some(last) = report.episode_rewards.last() {
                println!("final episode reward {last:.6}");
            }
            if let Some(ckpt) = &report.checkpoint {
                println!("checkpoint {}", ckpt.display());
            }
            println!("artifacts {}", report.output_dir.display());
            Ok(())
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?;
            let report = cmd_eval(&cfg, checkpoint.as_deref())?;
            println!("run {}", report.run_id);
            println!("episodes {}", report.episodes);
            println!("mean cumulative reward {:.6}", report.mean_cumulative_reward);
            println!("mean qoe {:.6}", report.mean_qoe);
            println!(
                "util comm [{:.4}, {:.4}]  util comp [{:.4}, {:.4}]",
                report.util_comm_range.0,
                report.util_comm_range.1,
                report.util_comp_range.0,
                report.util_comp_range.1
            );
            Ok(())
        }
        Command::Compare { common, sweep, methods } => {
            let cfg = common.load()?;
            let kind = SweepKind::parse(&sweep)?;
            let methods = if methods.is_empty() {
                registry().iter().map(|s| s.name.to_string()).collect()
            } else {
                methods
            };
            let report = cmd_compare(&cfg, kind, &methods)?;
            for cell in &report.cells {
                println!(
                    "{} {}={} qoe {:.4} reward {:.4}",
                    cell.method,
                    cell.parameter,
                    cell.value,
                    cell.eval.mean_qoe,
                    cell.eval.mean_cumulative_reward
                );
            }
            for failure in &report.failures {
                println!("{} {}={} FAILED: {}", failure.method, failure.parameter, failure.value, failure.error);
            }
            println!("table {}", report.csv_path.display());
            if report.failures.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Runtime(format!("{} sweep cell(s) failed", report.failures.len())))
            }
        }
        Command::Gradcheck { seed } => {
            let outcomes = run_gradcheck(seed);
            let mut failed = 0;
            for o in &outcomes {
                let status = if o.passed { "ok " } else { "FAIL" };
                println!(
                    "{status} {:28} max rel err {:.3e}  ({} coords, {} draws)",
                    o.component, o.max_rel_err, o.checked, o.draws
                );
                if !o.passed {
                    failed += 1;
                }
            }
            if failed == 0 {
                Ok(())
            } else {
                Err(HarnessError::Runtime(format!("{failed} gradient check(s) failed")))
            }
        }
        Command::Methods => {
            for spec in registry() {
                let kind = if spec.learnable { "learnable " } else { "rule-based" };
                println!("{:8} {kind}  {}", spec.name, spec.summary);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
