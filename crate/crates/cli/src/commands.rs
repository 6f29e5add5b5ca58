// SPDX-License-Identifier: Apache-2.0

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dmis_core::metrics::{self, ConvergenceReport, ErrorReport, TracePoint};
use dmis_core::pde::{Benchmark, PdeProblem, Segment};
use dmis_core::reference::{self, SolutionGrid};
use dmis_core::sampler::{write_rebuilds_csv, RebuildEvent};
use dmis_core::trainer::{self, Observer, TrainOutcome, TrainRecord, LOG_HEADER, RECOMPUTE_EVERY};
use dmis_core::{Error, MlpParams, Result};

use crate::config::{parse_pairs, RunConfig};
use crate::{CmdResult, Failure, OUT_ENV};

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "log.csv";
pub const REBUILDS_FILE: &str = "rebuilds.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const ERRORS_FILE: &str = "errors.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

pub const DEFAULT_NT: usize = 201;
pub const DEFAULT_LEVELS: [u32; 2] = [2, 3];

pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("dmis-out"), PathBuf::from)
}

pub fn default_nx(benchmark: Benchmark) -> usize {
    match benchmark {
        Benchmark::Burgers | Benchmark::AllenCahn => 1024,
        Benchmark::Diffusion => 512,
        Benchmark::Kdv | Benchmark::Schrodinger => 256,
    }
}

pub fn default_grid_path(benchmark: Benchmark, nx: usize, nt: usize) -> PathBuf {
    out_root().join("grids").join(format!("{benchmark}-nx{nx}-nt{nt}.grid"))
}

pub fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    let t = &cfg.train;
    out_root().join("runs").join(format!("{}-{}-s{}", t.benchmark, t.sampler.name(), t.seed))
}

/// Writes through a temporary sibling so readers never see a partial file.
fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_grid(path: &Path) -> CmdResult<SolutionGrid> {
    if !path.is_file() {
        return Err(Failure::missing(format!("reference grid {} not found", path.display())));
    }
    Ok(SolutionGrid::read(BufReader::new(File::open(path)?))?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferenceStatus {
    Computed,
    Cached,
}

/// Solves the reference problem into `out`, reusing an existing file whose
/// header matches the request.
pub fn reference(benchmark: Benchmark, nx: usize, nt: usize, out: &Path) -> CmdResult<ReferenceStatus> {
    let problem = PdeProblem::new(benchmark);
    if let Ok(file) = File::open(out) {
        if let Ok(g) = SolutionGrid::read(BufReader::new(file)) {
            let d = problem.domain;
            if g.name == problem.name
                && (g.nx, g.nt) == (nx, nt)
                && (g.t_max, g.x_min, g.x_max) == (d.t_max, d.x_min, d.x_max)
            {
                return Ok(ReferenceStatus::Cached);
            }
        }
    }
    let grid = reference::solve(&problem, nx, nt)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    write_atomic(out, |w| grid.write(w))?;
    Ok(ReferenceStatus::Computed)
}

/// Streams the log and rebuild rows to disk and keeps a recent checkpoint.
struct RunWriter {
    dir: PathBuf,
    log: BufWriter<File>,
    rebuilds: Vec<RebuildEvent>,
    progress: bool,
}

impl RunWriter {
    fn checkpoint(&self, net: &MlpParams) -> Result<()> {
        write_atomic(&self.dir.join(CHECKPOINT_FILE), |w| net.write_checkpoint(w))
    }
}

impl Observer for RunWriter {
    fn on_record(&mut self, record: &TrainRecord, net: &MlpParams) -> Result<()> {
        writeln!(self.log, "{}", trainer::log_row(record))?;
        if record.iter % RECOMPUTE_EVERY == 0 {
            self.log.flush()?;
            self.checkpoint(net)?;
            if self.progress && record.iter % (10 * RECOMPUTE_EVERY) == 0 {
                eprintln!("iter {:>7}  L = {:.6e}  {:.1} s", record.iter, record.full.total, record.ms / 1e3);
            }
        }
        Ok(())
    }

    fn on_rebuild(&mut self, event: &RebuildEvent) -> Result<()> {
        self.rebuilds.push(*event);
        Ok(())
    }
}

/// Trains one configuration into `dir`. On failure the files written so far,
/// including the latest checkpoint, are left in place.
pub fn train(cfg: &RunConfig, dir: &Path, progress: bool) -> CmdResult<TrainOutcome> {
    fs::create_dir_all(dir)?;
    let mut echo = cfg.clone();
    echo.out = Some(dir.to_path_buf());
    fs::write(dir.join(CONFIG_FILE), echo.echo())?;

    let t = &cfg.train;
    let out_dim = PdeProblem::new(t.benchmark).out_dim;
    let mut writer = RunWriter {
        dir: dir.to_path_buf(),
        log: BufWriter::new(File::create(dir.join(LOG_FILE))?),
        rebuilds: Vec::new(),
        progress,
    };
    writeln!(writer.log, "{LOG_HEADER}")?;
    writer.checkpoint(&MlpParams::init(t.depth, t.width, out_dim, t.seed)?)?;

    let result = trainer::train_with(t, &mut writer);
    writer.log.flush()?;
    write_atomic(&dir.join(REBUILDS_FILE), |w| write_rebuilds_csv(&writer.rebuilds, w))?;
    let outcome = result?;
    writer.checkpoint(&outcome.params)?;
    Ok(outcome)
}

pub struct Evaluation {
    pub errors: ErrorReport,
    pub convergence: ConvergenceReport,
}

pub fn load_run_config(dir: &Path) -> CmdResult<RunConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|_| Failure::missing(format!("run config {} not found", path.display())))?;
    Ok(RunConfig::resolve(&[&parse_pairs(&text)?])?)
}

/// Scores the checkpoint in `dir` against `grid` and writes the report files.
pub fn evaluate(dir: &Path, grid_path: &Path, levels: &[u32], eval_nt: usize, eval_nx: usize) -> CmdResult<Evaluation> {
    let cfg = load_run_config(dir)?;
    let problem = PdeProblem::new(cfg.train.benchmark);
    let grid = read_grid(grid_path)?;
    if grid.name != problem.name {
        return Err(Error::Config(format!("grid {} belongs to {}, not {}", grid_path.display(), grid.name, problem.name)).into());
    }
    let ckpt = dir.join(CHECKPOINT_FILE);
    let net = File::open(&ckpt)
        .map_err(|_| Failure::missing(format!("checkpoint {} not found", ckpt.display())))
        .and_then(|f| Ok(MlpParams::read_checkpoint(BufReader::new(f))?))?;
    let log = dir.join(LOG_FILE);
    let log = fs::read_to_string(&log).map_err(|_| Failure::missing(format!("log {} not found", log.display())))?;
    let trace: Vec<TracePoint> = trainer::read_log_csv(&log)?.into_iter().map(Into::into).collect();

    let errors = metrics::error_report(&net, &problem, &grid, eval_nt, eval_nx)?;
    let convergence = metrics::convergence_report(&trace, levels)?;
    write_atomic(&dir.join(ERRORS_FILE), |w| errors.write_csv(w))?;
    write_atomic(&dir.join(CONVERGENCE_FILE), |w| convergence.write_csv(w))?;
    Ok(Evaluation { errors, convergence })
}

/// `(iter, L)` at the initial evaluation and at every full-batch recompute.
pub fn write_curve<W: Write>(outcome: &TrainOutcome, mut w: W) -> Result<()> {
    writeln!(w, "iter,L")?;
    writeln!(w, "0,{}", outcome.initial.total)?;
    let last = outcome.records.last().map_or(0, |r| r.iter);
    for r in &outcome.records {
        if r.iter % RECOMPUTE_EVERY == 0 || r.iter == last {
            writeln!(w, "{},{}", r.iter, r.full.total)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub sampler: String,
    pub runs: usize,
    pub failed: usize,
    pub me: Option<f64>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    /// Median NC and TC per level; unreached runs count as infinitely late.
    pub nc: Vec<(u32, Option<f64>)>,
    pub tc: Vec<(u32, Option<f64>)>,
}

fn median_or_late(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    let med = if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) };
    med.is_finite().then_some(med)
}

pub fn write_comparison<W: Write>(rows: &[ComparisonRow], levels: &[u32], mut w: W) -> Result<()> {
    let mut header = String::from("sampler,runs,failed,ME,MAE,RMSE");
    for k in levels {
        header += &format!(",NC_{k}");
    }
    for k in levels {
        header += &format!(",TC_{k}");
    }
    writeln!(w, "{header}")?;
    let f = |v: Option<f64>| v.map_or("NA".to_string(), |v| v.to_string());
    for r in rows {
        let mut line = format!("{},{},{},{},{},{}", r.sampler, r.runs, r.failed, f(r.me), f(r.mae), f(r.rmse));
        for (_, v) in &r.nc {
            line += &format!(",{}", f(*v));
        }
        for (_, v) in &r.tc {
            line += &format!(",{}", v.map_or("NA".to_string(), |v| format!("{v:.3}")));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub struct CompareOutcome {
    pub rows: Vec<ComparisonRow>,
    pub failures: Vec<String>,
}

/// Trains and evaluates every `(sampler, seed)` pair under `out`, then writes
/// per-sampler medians of the test-segment errors and convergence measures.
pub fn compare(
    base: &RunConfig,
    samplers: &[String],
    seeds: &[u64],
    grid_path: &Path,
    levels: &[u32],
    out: &Path,
    progress: bool,
) -> CmdResult<CompareOutcome> {
    if seeds.is_empty() || samplers.is_empty() {
        return Err(Error::Config("compare needs at least one seed and one sampler".into()).into());
    }
    read_grid(grid_path)?;
    let curves = out.join("curves");
    fs::create_dir_all(&curves)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for sampler in samplers {
        let mut errs = Vec::new();
        let mut ncs: Vec<Vec<Option<f64>>> = vec![Vec::new(); levels.len()];
        let mut tcs: Vec<Vec<Option<f64>>> = vec![Vec::new(); levels.len()];
        for &seed in seeds {
            let label = format!("{sampler}-s{seed}");
            let pairs = [("sampler".to_string(), sampler.clone()), ("seed".to_string(), seed.to_string())];
            let cfg = RunConfig::resolve(&[&parse_pairs(&base.echo())?, &pairs])?;
            let dir = out.join("runs").join(&label);
            if progress {
                eprintln!("run {label}");
            }
            let run = train(&cfg, &dir, progress).and_then(|outcome| {
                write_atomic(&curves.join(format!("{label}.csv")), |w| write_curve(&outcome, w))?;
                evaluate(&dir, grid_path, levels, metrics::EVAL_NT, metrics::EVAL_NX)
            });
            match run {
                Ok(ev) => {
                    errs.push(ev.errors.get(Segment::Test).expect("test segment"));
                    for (k, c) in ev.convergence.levels.iter().enumerate() {
                        ncs[k].push(c.nc.map(|v| v as f64));
                        tcs[k].push(c.tc_ms);
                    }
                }
                Err(e) => failures.push(format!("{label}: {e}")),
            }
        }
        let pick = |f: fn(&metrics::ErrorStats) -> f64| metrics::median(&errs.iter().map(f).collect::<Vec<_>>());
        rows.push(ComparisonRow {
            sampler: sampler.clone(),
            runs: seeds.len(),
            failed: seeds.len() - errs.len(),
            me: pick(|e| e.me),
            mae: pick(|e| e.mae),
            rmse: pick(|e| e.rmse),
            nc: levels.iter().zip(&ncs).map(|(&k, v)| (k, median_or_late(v))).collect(),
            tc: levels.iter().zip(&tcs).map(|(&k, v)| (k, median_or_late(v))).collect(),
        });
    }
    write_atomic(&out.join(COMPARISON_FILE), |w| write_comparison(&rows, levels, w))?;
    Ok(CompareOutcome { rows, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn late_runs_push_the_median() {
        assert_eq!(median_or_late(&[Some(0.1), Some(0.3), Some(0.2)]), Some(0.2));
        assert_eq!(median_or_late(&[Some(100.0), None, Some(300.0)]), Some(300.0));
        assert_eq!(median_or_late(&[Some(100.0), None, None]), None);
    }
}
