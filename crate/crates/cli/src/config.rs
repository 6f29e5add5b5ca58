// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use dmis_core::pde::Benchmark;
use dmis_core::sampler::DmisConfig;
use dmis_core::trainer::{SamplerKind, TrainConfig};
use dmis_core::{Error, Result};

pub const CONFIG_MAGIC: &str = "# dmis-config";
pub const CONFIG_VERSION: &str = "v1";

/// Every accepted key, in echo order.
pub const KEYS: [&str; 22] = [
    "benchmark",
    "sampler",
    "depth",
    "width",
    "learning_rate",
    "beta1",
    "beta2",
    "eps",
    "lambda_i",
    "lambda_b",
    "n_f",
    "n_i",
    "n_b",
    "batch_f",
    "batch_i",
    "batch_b",
    "max_iters",
    "seed",
    "mesh_size",
    "gamma",
    "beta",
    "out",
];

/// A resolved run: training settings plus where to put the artifacts.
/// DMIS parameters are kept for uniform runs too.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dmis: DmisConfig,
    pub out: Option<PathBuf>,
}

pub type Pairs = Vec<(String, String)>;

/// Parses `key = value` lines. `#` starts a comment; a leading
/// `# dmis-config <version>` line must name a supported version.
pub fn parse_pairs(text: &str) -> Result<Pairs> {
    let mut pairs: Pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        if let Some(rest) = raw.trim().strip_prefix(CONFIG_MAGIC) {
            let version = rest.trim();
            if version != CONFIG_VERSION {
                return Err(Error::Format(format!("unsupported config version {version:?}")));
            }
            continue;
        }
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if pairs.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

/// Splits a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

impl RunConfig {
    pub fn defaults(benchmark: Benchmark) -> Self {
        let train = TrainConfig::defaults(benchmark);
        let dmis = match train.sampler {
            SamplerKind::Dmis(c) => c,
            SamplerKind::Uniform => unreachable!("defaults use DMIS"),
        };
        RunConfig { train, dmis, out: None }
    }

    /// Starts from the benchmark defaults and applies each layer of pairs in
    /// order, later layers winning.
    pub fn resolve(layers: &[&[(String, String)]]) -> Result<Self> {
        let benchmark = layers
            .iter()
            .rev()
            .find_map(|l| l.iter().rev().find(|(k, _)| k == "benchmark"))
            .ok_or_else(|| Error::Config("no benchmark given".into()))?;
        let mut cfg = RunConfig::defaults(value::<Benchmark>("benchmark", &benchmark.1)?);
        let mut sampler = cfg.train.sampler.name().to_string();
        for (k, v) in layers.iter().flat_map(|l| l.iter()) {
            if k == "sampler" {
                sampler = v.clone();
            } else {
                cfg.set(k, v)?;
            }
        }
        cfg.train.sampler = match sampler.as_str() {
            "dmis" => SamplerKind::Dmis(cfg.dmis),
            "uniform" => SamplerKind::Uniform,
            other => return Err(Error::Config(format!("unknown sampler {other:?} (expected dmis or uniform)"))),
        };
        if let SamplerKind::Uniform = cfg.train.sampler {
            cfg.dmis.validate()?;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "benchmark" => t.benchmark = value(key, v)?,
            "depth" => t.depth = value(key, v)?,
            "width" => t.width = value(key, v)?,
            "learning_rate" => t.learning_rate = value(key, v)?,
            "beta1" => t.adam.beta1 = value(key, v)?,
            "beta2" => t.adam.beta2 = value(key, v)?,
            "eps" => t.adam.eps = value(key, v)?,
            "lambda_i" => t.lambda_i = value(key, v)?,
            "lambda_b" => t.lambda_b = value(key, v)?,
            "n_f" => t.n_f = value(key, v)?,
            "n_i" => t.n_i = value(key, v)?,
            "n_b" => t.n_b = value(key, v)?,
            "batch_f" => t.batch_f = value(key, v)?,
            "batch_i" => t.batch_i = value(key, v)?,
            "batch_b" => t.batch_b = value(key, v)?,
            "max_iters" => t.max_iters = value(key, v)?,
            "seed" => t.seed = value(key, v)?,
            "mesh_size" => self.dmis.mesh_size = value(key, v)?,
            "gamma" => self.dmis.gamma = value(key, v)?,
            "beta" => self.dmis.beta = value(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every resolved setting as a config file that parses back to `self`.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let mut s = format!("{CONFIG_MAGIC} {CONFIG_VERSION}\n");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("benchmark", t.benchmark.to_string());
        put("sampler", t.sampler.name().to_string());
        put("depth", t.depth.to_string());
        put("width", t.width.to_string());
        put("learning_rate", t.learning_rate.to_string());
        put("beta1", t.adam.beta1.to_string());
        put("beta2", t.adam.beta2.to_string());
        put("eps", t.adam.eps.to_string());
        put("lambda_i", t.lambda_i.to_string());
        put("lambda_b", t.lambda_b.to_string());
        put("n_f", t.n_f.to_string());
        put("n_i", t.n_i.to_string());
        put("n_b", t.n_b.to_string());
        put("batch_f", t.batch_f.to_string());
        put("batch_i", t.batch_i.to_string());
        put("batch_b", t.batch_b.to_string());
        put("max_iters", t.max_iters.to_string());
        put("seed", t.seed.to_string());
        put("mesh_size", self.dmis.mesh_size.to_string());
        put("gamma", self.dmis.gamma.to_string());
        put("beta", self.dmis.beta.to_string());
        if let Some(out) = &self.out {
            put("out", out.display().to_string());
        }
        s
    }
}
