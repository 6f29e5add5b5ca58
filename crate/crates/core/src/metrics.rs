// SPDX-License-Identifier: Apache-2.0

//! Prediction error against a reference grid and convergence speed of a
//! training-loss trace.

use std::fmt::Write as _;
use std::io::Write;

use crate::ad;
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::pde::{DomainSpec, PdeProblem, Segment};
use crate::reference::SolutionGrid;
use crate::trainer::TrainRecord;

pub const EVAL_NT: usize = 201;
pub const EVAL_NX: usize = 256;

/// Length of the window a loss must stay below a level for.
pub const NC_WINDOW: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub me: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Maximum, mean absolute, and root-mean-square error of `pred` against `truth`.
pub fn error_stats(pred: &[f64], truth: &[f64]) -> Result<ErrorStats> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "{} predictions for {} reference values",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let (mut me, mut sa, mut sq) = (0.0f64, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let e = (p - t).abs();
        me = me.max(e);
        sa += e;
        sq += e * e;
    }
    Ok(ErrorStats { me, mae: sa / n, rmse: (sq / n).sqrt() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub segments: Vec<(Segment, ErrorStats)>,
}

impl ErrorReport {
    pub fn get(&self, segment: Segment) -> Option<ErrorStats> {
        self.segments.iter().find(|(s, _)| *s == segment).map(|(_, e)| *e)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "segment,me,mae,rmse")?;
        for (s, e) in &self.segments {
            writeln!(w, "{},{},{},{}", s.name(), e.me, e.mae, e.rmse)?;
        }
        Ok(())
    }

    pub fn summary(&self, title: &str) -> String {
        let mut out = format!("{title}\n{:<8}{:>14}{:>14}{:>14}\n", "segment", "ME", "MAE", "RMSE");
        for (s, e) in &self.segments {
            let _ = writeln!(out, "{:<8}{:>14.6e}{:>14.6e}{:>14.6e}", s.name(), e.me, e.mae, e.rmse);
        }
        out
    }
}

/// `n` evenly spaced values from `a` to `b` inclusive.
fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
}

/// Uniform `nt × nx` evaluation nodes covering one time segment, time-major.
pub fn eval_points(domain: &DomainSpec, segment: Segment, nt: usize, nx: usize) -> Vec<(f64, f64)> {
    let (t0, t1) = domain.segment(segment);
    let (x0, x1) = (domain.x_min, domain.x_max);
    linspace(t0, t1, nt).flat_map(|t| linspace(x0, x1, nx).map(move |x| (t, x))).collect()
}

/// Errors of `net` against `grid` on an `eval_nt × eval_nx` grid per time
/// segment. Two-component outputs are compared by modulus.
pub fn error_report(
    net: &MlpParams,
    problem: &PdeProblem,
    grid: &SolutionGrid,
    eval_nt: usize,
    eval_nx: usize,
) -> Result<ErrorReport> {
    if eval_nt < 2 || eval_nx < 2 {
        return Err(Error::Config("evaluation grid needs at least 2 × 2 nodes".into()));
    }
    let d = problem.domain;
    if grid.t_max < d.t_max || grid.x_min > d.x_min || grid.x_max < d.x_max {
        return Err(Error::Contract(format!("reference grid {} does not cover the domain", grid.name)));
    }
    let mut segments = Vec::with_capacity(3);
    for segment in Segment::ALL {
        let points = eval_points(&d, segment, eval_nt, eval_nx);
        let mut pred = Vec::with_capacity(points.len());
        for chunk in points.chunks(4096) {
            for jet in ad::eval_jets(net, chunk, 0)? {
                pred.push(if jet.u.len() == 2 { jet.u[0].hypot(jet.u[1]) } else { jet.u[0] });
            }
        }
        let truth = points.iter().map(|&(t, x)| grid.sample(t, x)).collect::<Result<Vec<_>>>()?;
        segments.push((segment, error_stats(&pred, &truth)?));
    }
    Ok(ErrorReport { segments })
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// One loss-trace sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: u64,
    pub loss: f64,
    pub ms: f64,
}

impl From<&TrainRecord> for TracePoint {
    fn from(r: &TrainRecord) -> Self {
        TracePoint { iter: r.iter, loss: r.full.total, ms: r.ms }
    }
}

impl From<(u64, f64, f64)> for TracePoint {
    fn from((iter, loss, ms): (u64, f64, f64)) -> Self {
        TracePoint { iter, loss, ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub level: u32,
    pub nc: Option<u64>,
    pub tc_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<Convergence>,
}

/// First iteration from which the loss stays below `10^-level` for a full
/// [`NC_WINDOW`], together with its wall-clock time.
fn first_stable(trace: &[TracePoint], level: u32) -> Convergence {
    let threshold = 10f64.powi(-(level as i32));
    let mut run_start: Option<usize> = None;
    for (k, p) in trace.iter().enumerate() {
        if p.loss < threshold {
            let s = *run_start.get_or_insert(k);
            if p.iter >= trace[s].iter + (NC_WINDOW - 1) {
                return Convergence { level, nc: Some(trace[s].iter), tc_ms: Some(trace[s].ms) };
            }
        } else {
            run_start = None;
        }
    }
    Convergence { level, nc: None, tc_ms: None }
}

pub fn convergence_report(trace: &[TracePoint], levels: &[u32]) -> Result<ConvergenceReport> {
    if trace.windows(2).any(|w| w[1].iter <= w[0].iter) {
        return Err(Error::Contract("trace must be ordered by strictly increasing iteration".into()));
    }
    Ok(ConvergenceReport { levels: levels.iter().map(|&k| first_stable(trace, k)).collect() })
}

impl ConvergenceReport {
    pub fn get(&self, level: u32) -> Option<Convergence> {
        self.levels.iter().find(|c| c.level == level).copied()
    }

    /// Single-row CSV with `NC_k` columns then `TC_k` columns (milliseconds);
    /// unreached levels are written as `NA`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<String> = self
            .levels
            .iter()
            .map(|c| format!("NC_{}", c.level))
            .chain(self.levels.iter().map(|c| format!("TC_{}", c.level)))
            .collect();
        writeln!(w, "{}", names.join(","))?;
        let values: Vec<String> = self
            .levels
            .iter()
            .map(|c| c.nc.map_or("NA".into(), |v| v.to_string()))
            .chain(self.levels.iter().map(|c| c.tc_ms.map_or("NA".into(), |v| format!("{v:.3}"))))
            .collect();
        writeln!(w, "{}", values.join(","))?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("level         NC        TC (s)\n");
        for c in &self.levels {
            let nc = c.nc.map_or("not reached".into(), |v| v.to_string());
            let tc = c.tc_ms.map_or("not reached".into(), |v| format!("{:.3}", v / 1e3));
            let _ = writeln!(out, "1e-{:<8}{:>12}{:>14}", c.level, nc, tc);
        }
        out
    }
}
