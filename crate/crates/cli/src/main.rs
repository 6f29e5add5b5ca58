// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmis_cli::commands::{self, ReferenceStatus, DEFAULT_NT};
use dmis_cli::config::{parse_override, parse_pairs, Pairs, RunConfig};
use dmis_cli::{CmdResult, Failure, EXIT_NUMERICAL};
use dmis_core::metrics::{EVAL_NT, EVAL_NX};
use dmis_core::pde::Benchmark;

#[derive(Parser)]
#[command(name = "dmis", version, about = "PINN training with dynamic mesh-based importance sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark numerically and cache the solution grid.
    Reference {
        benchmark: Benchmark,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_NT)]
        nt: usize,
        /// Grid file (default: $DMIS_OUT/grids/<benchmark>-nx<nx>-nt<nt>.grid).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one network and write a run directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Run directory (default: $DMIS_OUT/runs/<benchmark>-<sampler>-s<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a run directory against a reference grid.
    Evaluate {
        run_dir: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Train and evaluate several samplers over several seeds.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "uniform,dmis")]
        samplers: Vec<String>,
        #[command(flatten)]
        eval: EvalArgs,
        /// Output directory (default: $DMIS_OUT/compare/<benchmark>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<Benchmark>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any configuration key, as key=value; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference grid (default: the cached grid for the run's benchmark).
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    levels: Vec<u32>,
    #[arg(long, default_value_t = EVAL_NT)]
    eval_nt: usize,
    #[arg(long, default_value_t = EVAL_NX)]
    eval_nx: usize,
}

impl RunArgs {
    fn resolve(&self) -> CmdResult<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|_| Failure::missing(format!("config file {} not found", path.display())))?;
                parse_pairs(&text)?
            }
            None => Pairs::new(),
        };
        let mut cli = Pairs::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                cli.push((k.to_string(), v));
            }
        };
        push("benchmark", self.benchmark.map(|b| b.to_string()));
        push("sampler", self.sampler.clone());
        push("max_iters", self.max_iters.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        for s in &self.set {
            cli.push(parse_override(s)?);
        }
        Ok(RunConfig::resolve(&[&file, &cli])?)
    }
}

fn default_grid(benchmark: Benchmark) -> PathBuf {
    commands::default_grid_path(benchmark, commands::default_nx(benchmark), DEFAULT_NT)
}

fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Reference { benchmark, nx, nt, out } => {
            let nx = nx.unwrap_or_else(|| commands::default_nx(benchmark));
            let out = out.unwrap_or_else(|| commands::default_grid_path(benchmark, nx, nt));
            match commands::reference(benchmark, nx, nt, &out)? {
                ReferenceStatus::Cached => println!("cached: {} is up to date", out.display()),
                ReferenceStatus::Computed => println!("wrote {}", out.display()),
            }
        }
        Command::Train { run, out } => {
            let cfg = run.resolve()?;
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| commands::default_run_dir(&cfg));
            let outcome = commands::train(&cfg, &dir, !run.quiet)?;
            let l = outcome.final_loss();
            println!(
                "{}: {} iterations, L = {:.6e} (L_f {:.3e}, L_i {:.3e}, L_b {:.3e}), {} rebuilds",
                dir.display(),
                outcome.records.len(),
                l.total,
                l.f,
                l.i,
                l.b,
                outcome.rebuilds.len()
            );
        }
        Command::Evaluate { run_dir, eval } => {
            let grid = match eval.grid {
                Some(g) => g,
                None => default_grid(commands::load_run_config(&run_dir)?.train.benchmark),
            };
            let ev = commands::evaluate(&run_dir, &grid, &eval.levels, eval.eval_nt, eval.eval_nx)?;
            print!("{}", ev.errors.summary(&run_dir.display().to_string()));
            print!("{}", ev.convergence.summary());
        }
        Command::Compare { run, seeds, samplers, eval, out } => {
            let cfg = run.resolve()?;
            let b = cfg.train.benchmark;
            let grid = eval.grid.unwrap_or_else(|| default_grid(b));
            if !grid.is_file() {
                commands::reference(b, commands::default_nx(b), DEFAULT_NT, &grid)?;
            }
            let out = out.unwrap_or_else(|| commands::out_root().join("compare").join(b.name()));
            let result = commands::compare(&cfg, &samplers, &seeds, &grid, &eval.levels, &out, !run.quiet)?;
            print!("{}", std::fs::read_to_string(out.join(commands::COMPARISON_FILE))?);
            if !result.failures.is_empty() {
                for f in &result.failures {
                    eprintln!("failed run {f}");
                }
                return Err(Failure { code: EXIT_NUMERICAL, message: format!("{} run(s) failed", result.failures.len()) });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
