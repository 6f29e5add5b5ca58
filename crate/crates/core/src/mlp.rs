// SPDX-License-Identifier: Apache-2.0

//! Fully-connected tanh network `û(t, x; θ)`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad;
use crate::error::{Error, Result};

/// Inputs are always `(t, x)`.
pub const IN_DIM: usize = 2;

const CHECKPOINT_MAGIC: &str = "dmis-mlp";
const CHECKPOINT_VERSION: &str = "v1";

/// Placement of one affine layer inside the flat parameter vector.
///
/// Weights are row-major `fan_out × fan_in`, followed by `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w_offset: usize,
    pub b_offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    depth: usize,
    width: usize,
    out_dim: usize,
    seed: u64,
    theta: Vec<f64>,
}

fn shapes_for(depth: usize, width: usize, out_dim: usize) -> Vec<LayerShape> {
    let mut shapes = Vec::with_capacity(depth + 1);
    let mut offset = 0;
    for l in 0..=depth {
        let fan_in = if l == 0 { IN_DIM } else { width };
        let fan_out = if l == depth { out_dim } else { width };
        shapes.push(LayerShape {
            fan_in,
            fan_out,
            w_offset: offset,
            b_offset: offset + fan_in * fan_out,
        });
        offset += (fan_in + 1) * fan_out;
    }
    shapes
}

/// Closed-form parameter count for `(IN_DIM, depth, width, out_dim)`.
pub fn param_count(depth: usize, width: usize, out_dim: usize) -> usize {
    if depth == 0 {
        return (IN_DIM + 1) * out_dim;
    }
    (IN_DIM + 1) * width + (depth - 1) * (width + 1) * width + (width + 1) * out_dim
}

fn check_dims(depth: usize, width: usize, out_dim: usize) -> Result<()> {
    if depth < 1 || width < 1 {
        return Err(Error::Config(format!(
            "network needs depth >= 1 and width >= 1, got depth {depth}, width {width}"
        )));
    }
    if !(1..=2).contains(&out_dim) {
        return Err(Error::Config(format!("out_dim must be 1 or 2, got {out_dim}")));
    }
    Ok(())
}

impl MlpParams {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn init(depth: usize, width: usize, out_dim: usize, seed: u64) -> Result<Self> {
        check_dims(depth, width, out_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; param_count(depth, width, out_dim)];
        for shape in shapes_for(depth, width, out_dim) {
            let limit = (6.0 / (shape.fan_in + shape.fan_out) as f64).sqrt();
            for w in &mut theta[shape.w_offset..shape.b_offset] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(MlpParams {
            depth,
            width,
            out_dim,
            seed,
            theta,
        })
    }

    /// All-zero network of the given shape.
    pub fn zeros(depth: usize, width: usize, out_dim: usize) -> Result<Self> {
        check_dims(depth, width, out_dim)?;
        Ok(MlpParams {
            depth,
            width,
            out_dim,
            seed: 0,
            theta: vec![0.0; param_count(depth, width, out_dim)],
        })
    }

    /// Wraps an explicit parameter vector. `depth = 0` gives a purely affine
    /// map, which is handy for hand-checkable cases.
    pub fn from_flat(depth: usize, width: usize, out_dim: usize, seed: u64, theta: Vec<f64>) -> Result<Self> {
        if depth > 0 {
            check_dims(depth, width, out_dim)?;
        } else if !(1..=2).contains(&out_dim) {
            return Err(Error::Config(format!("out_dim must be 1 or 2, got {out_dim}")));
        }
        let width = if depth == 0 { 0 } else { width };
        let expected = param_count(depth, width, out_dim);
        if theta.len() != expected {
            return Err(Error::Config(format!(
                "expected {expected} parameters, got {}",
                theta.len()
            )));
        }
        Ok(MlpParams {
            depth,
            width,
            out_dim,
            seed,
            theta,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        shapes_for(self.depth, self.width, self.out_dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Network output at `(t, x)`; identical to the value channel of
    /// [`ad::eval_jet`].
    pub fn forward(&self, t: f64, x: f64) -> Result<Vec<f64>> {
        Ok(ad::eval_jet(self, t, x, 0)?.u)
    }

    /// `Σ |w_last| + |b_last|` per output; bounds the output magnitude since
    /// tanh is bounded by one.
    pub fn output_bound(&self) -> Vec<f64> {
        let last = *self.layer_shapes().last().expect("at least one layer");
        (0..self.out_dim)
            .map(|k| {
                let row = &self.theta[last.w_offset + k * last.fan_in..last.w_offset + (k + 1) * last.fan_in];
                row.iter().map(|w| w.abs()).sum::<f64>() + self.theta[last.b_offset + k].abs()
            })
            .collect()
    }

    /// Header line followed by the little-endian parameter array.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {} {} {} {}",
            self.depth, self.width, self.out_dim, self.seed
        )?;
        for v in &self.theta {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        match fields.as_slice() {
            [magic, version, depth, width, out_dim, seed] if *magic == CHECKPOINT_MAGIC => {
                if *version != CHECKPOINT_VERSION {
                    return Err(Error::Format(format!("unsupported checkpoint version {version}")));
                }
                let parse = |s: &str| {
                    s.parse::<u64>()
                        .map_err(|_| Error::Format(format!("bad checkpoint header field {s:?}")))
                };
                let (depth, width, out_dim, seed) =
                    (parse(depth)? as usize, parse(width)? as usize, parse(out_dim)? as usize, parse(seed)?);
                let n = param_count(depth, width, out_dim);
                let mut bytes = Vec::new();
                r.read_to_end(&mut bytes)?;
                if bytes.len() != n * 8 {
                    return Err(Error::Format(format!(
                        "checkpoint holds {} bytes, expected {}",
                        bytes.len(),
                        n * 8
                    )));
                }
                let theta = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                MlpParams::from_flat(depth, width, out_dim, seed, theta)
            }
            _ => Err(Error::Format("not a dmis-mlp checkpoint".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_matches_closed_form() {
        let net = MlpParams::init(3, 32, 1, 7).unwrap();
        assert_eq!(net.param_count(), 2241);
        assert_eq!(net.param_count(), 3 * 32 + 2 * 33 * 32 + 33);
        let schrodinger = MlpParams::init(4, 64, 2, 1).unwrap();
        assert_eq!(schrodinger.param_count(), 3 * 64 + 3 * 65 * 64 + 65 * 2);
        assert_eq!((schrodinger.depth(), schrodinger.width(), schrodinger.out_dim()), (4, 64, 2));
    }

    #[test]
    fn init_is_reproducible_and_glorot_bounded() {
        let a = MlpParams::init(3, 16, 2, 42).unwrap();
        let b = MlpParams::init(3, 16, 2, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, MlpParams::init(3, 16, 2, 43).unwrap());
        for shape in a.layer_shapes() {
            let limit = (6.0 / (shape.fan_in + shape.fan_out) as f64).sqrt();
            let theta = a.as_slice();
            assert!(theta[shape.w_offset..shape.b_offset].iter().all(|w| w.abs() <= limit));
            assert!(theta[shape.b_offset..shape.b_offset + shape.fan_out].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn invalid_dimensions_are_config_errors() {
        assert!(matches!(MlpParams::init(0, 4, 1, 0), Err(Error::Config(_))));
        assert!(matches!(MlpParams::init(2, 0, 1, 0), Err(Error::Config(_))));
        assert!(matches!(MlpParams::init(2, 4, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpParams::zeros(3, 8, 2).unwrap();
        assert_eq!(net.forward(0.3, -0.7).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_unit_with_unit_weights() {
        let net = MlpParams::from_flat(1, 1, 1, 0, vec![1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(net.forward(0.0, 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_agrees_with_jet_value_bitwise() {
        for seed in 0..100u64 {
            let net = MlpParams::init(1 + (seed % 4) as usize, 3 + (seed % 13) as usize, 1 + (seed % 2) as usize, seed)
                .unwrap();
            let t = (seed as f64 * 0.37).sin();
            let x = (seed as f64 * 0.91).cos() * 2.0;
            let value = net.forward(t, x).unwrap();
            let jet = ad::eval_jet(&net, t, x, 0).unwrap();
            assert_eq!(value.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                       jet.u.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            for (v, bound) in value.iter().zip(net.output_bound()) {
                assert!(v.abs() <= bound);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_and_version_check() {
        let net = MlpParams::init(2, 5, 2, 9).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        assert!(buf.starts_with(b"dmis-mlp v1 2 5 2 9\n"));
        let back = MlpParams::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);

        let mut bad = b"dmis-mlp v2 2 5 2 9\n".to_vec();
        bad.extend_from_slice(&buf[20..]);
        assert!(matches!(MlpParams::read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
        assert!(MlpParams::read_checkpoint(&buf[..buf.len() - 3]).is_err());
    }
}
