use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use consensus_map::harness::{centralized_oracle, run_experiment, run_sweep, sweep_cells, ExperimentConfig};
use consensus_map::optimizer::Variant;
use consensus_map::verify;

const OUT_ENV: &str = "CONSENSUS_MAP_OUT";

#[derive(Parser)]
#[command(name = "consensus-map", version, about = "Multi-agent grid mapping with consensus over lossy links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(RunArgs),
    /// Run the rate × variant × agent-count grid.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<Variant>>,
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<usize>>,
    },
    /// Train a single map on the pooled data of all agents.
    Oracle(RunArgs),
    /// Gradient and quadratic-consensus self-checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and the environment.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> consensus_map::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_master_seed(seed);
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(dir) = std::env::var_os(OUT_ENV) {
            cfg.output_dir = Some(dir.into());
        }
        if let Some(dir) = &self.out {
            cfg.output_dir = Some(dir.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> consensus_map::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let result = run_experiment(cfg)?;
            let summary = result.summary();
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(match result.aborted {
                Some(a) => {
                    eprintln!("aborted: non-finite state in agent {} at round {}", a.agent, a.round);
                    ExitCode::FAILURE
                }
                None => ExitCode::SUCCESS,
            })
        }
        Command::Sweep {
            common,
            rates,
            variants,
            agents,
        } => {
            let cfg = common.load()?;
            let root = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("sweep_out"));
            let cells = sweep_cells(
                rates.as_deref().unwrap_or(&cfg.sweep.rates),
                variants.as_deref().unwrap_or(&cfg.sweep.variants),
                agents.as_deref().unwrap_or(&cfg.sweep.agent_counts),
            );
            let mut failed = false;
            for (dir, r) in run_sweep(&cfg, &cells, &root) {
                match r {
                    Ok(res) => println!(
                        "{}\tcompletion={:.4}\tmax_dual_slope={:.3e}\t{}",
                        dir.display(),
                        res.mean_final_completion(),
                        res.max_dual_tail_slope(),
                        if res.aborted.is_some() { "aborted" } else { "completed" }
                    ),
                    Err(e) => {
                        failed = true;
                        eprintln!("{}\terror: {e}", dir.display());
                    }
                }
            }
            Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Oracle(args) => {
            let cfg = args.load()?;
            let res = centralized_oracle(&cfg)?;
            if let Some(dir) = &cfg.output_dir {
                res.write(&cfg, dir)?;
            }
            println!("{}", serde_json::to_string_pretty(&res)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed } => {
            let checks = verify::run_all(seed)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
