// SPDX-License-Identifier: Apache-2.0

//! Batched jet propagation through the tanh network and its parameter VJP.
//!
//! Every point contributes `order + 2` channel rows (value, ∂t, ∂x, ∂²x, ∂³x
//! truncated to the requested order). All rows of a batch share one weight
//! matrix per layer, so each layer is a single GEMM followed by a pointwise
//! Faà di Bruno step through tanh.

use crate::mlp::{LayerShape, MlpParams};

pub(crate) const VAL: usize = 0;
pub(crate) const DT: usize = 1;
pub(crate) const DX: usize = 2;
pub(crate) const DXX: usize = 3;
pub(crate) const DXXX: usize = 4;

pub(crate) fn channels(order: usize) -> usize {
    order + 2
}

/// `c = a · b + beta · c` with explicit strides (row stride, column stride).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_cols: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= (m - 1) * a_strides.0 + (k.max(1) - 1) * a_strides.1 + 1);
    debug_assert!(b.len() >= (k.max(1) - 1) * b_strides.0 + (n - 1) * b_strides.1 + 1);
    debug_assert!(c.len() >= (m - 1) * c_cols + n);
    // SAFETY: the asserted extents keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_cols as isize,
            1,
        );
    }
}

/// Activations kept for one hidden layer.
#[derive(Debug, Clone)]
pub(crate) struct HiddenCache {
    /// Pre-activation channels, `rows × width`.
    pub z: Vec<f64>,
    /// Post-activation channels, `rows × width`.
    pub y: Vec<f64>,
}

/// Forward result of a batch; retains everything the VJP needs.
#[derive(Debug, Clone)]
pub(crate) struct JetPass {
    pub n_points: usize,
    pub order: usize,
    /// Input channel rows, `rows × 2`.
    pub input: Vec<f64>,
    pub hidden: Vec<HiddenCache>,
    /// Output channel rows, `rows × out_dim`.
    pub out: Vec<f64>,
}

impl JetPass {
    pub fn rows(&self) -> usize {
        self.n_points * channels(self.order)
    }
}

fn input_rows(points: &[(f64, f64)], order: usize) -> Vec<f64> {
    let nch = channels(order);
    let mut input = vec![0.0; points.len() * nch * 2];
    for (p, &(t, x)) in points.iter().enumerate() {
        let base = p * nch * 2;
        input[base + 2 * VAL] = t;
        input[base + 2 * VAL + 1] = x;
        input[base + 2 * DT] = 1.0;
        if order >= 1 {
            input[base + 2 * DX + 1] = 1.0;
        }
    }
    input
}

fn affine(net: &MlpParams, layer: &LayerShape, h: &[f64], rows: usize, nch: usize) -> Vec<f64> {
    let theta = net.as_slice();
    let w = &theta[layer.w_offset..layer.w_offset + layer.fan_out * layer.fan_in];
    let b = &theta[layer.b_offset..layer.b_offset + layer.fan_out];
    let mut z = vec![0.0; rows * layer.fan_out];
    gemm(
        rows,
        layer.fan_in,
        layer.fan_out,
        h,
        (layer.fan_in, 1),
        w,
        (1, layer.fan_in),
        0.0,
        &mut z,
        layer.fan_out,
    );
    for row in z.chunks_exact_mut(layer.fan_out * nch) {
        for (zj, bj) in row[..layer.fan_out].iter_mut().zip(b) {
            *zj += bj;
        }
    }
    z
}

/// Pushes pre-activation channels through tanh.
fn activate(z: &[f64], width: usize, order: usize) -> Vec<f64> {
    let nch = channels(order);
    let mut y = vec![0.0; z.len()];
    for (zp, yp) in z.chunks_exact(width * nch).zip(y.chunks_exact_mut(width * nch)) {
        for j in 0..width {
            let a = zp[VAL * width + j].tanh();
            let s1 = 1.0 - a * a;
            yp[VAL * width + j] = a;
            yp[DT * width + j] = s1 * zp[DT * width + j];
            if order >= 1 {
                let zx = zp[DX * width + j];
                yp[DX * width + j] = s1 * zx;
                if order >= 2 {
                    let s2 = -2.0 * a * s1;
                    let zxx = zp[DXX * width + j];
                    yp[DXX * width + j] = s2 * zx * zx + s1 * zxx;
                    if order >= 3 {
                        let s3 = (6.0 * a * a - 2.0) * s1;
                        let zxxx = zp[DXXX * width + j];
                        yp[DXXX * width + j] =
                            s3 * zx * zx * zx + 3.0 * s2 * zx * zxx + s1 * zxxx;
                    }
                }
            }
        }
    }
    y
}

/// Evaluates jets for every point. With `keep_cache` the hidden activations
/// are retained for a later [`backward`].
pub(crate) fn forward(
    net: &MlpParams,
    points: &[(f64, f64)],
    order: usize,
    keep_cache: bool,
) -> JetPass {
    let nch = channels(order);
    let rows = points.len() * nch;
    let input = input_rows(points, order);
    let shapes = net.layer_shapes();
    let (last, hidden_shapes) = shapes.split_last().expect("network has layers");

    let mut hidden = Vec::with_capacity(if keep_cache { hidden_shapes.len() } else { 0 });
    let mut h: Vec<f64> = Vec::new();
    for (l, shape) in hidden_shapes.iter().enumerate() {
        let src = if l == 0 { &input } else { &h };
        let z = affine(net, shape, src, rows, nch);
        let y = activate(&z, shape.fan_out, order);
        if keep_cache {
            hidden.push(HiddenCache { z, y: y.clone() });
        }
        h = y;
    }
    let src = if hidden_shapes.is_empty() { &input } else { &h };
    let out = affine(net, last, src, rows, nch);
    JetPass {
        n_points: points.len(),
        order,
        input,
        hidden,
        out,
    }
}

/// Pulls output-channel adjoints `dout` (same layout as `pass.out`) back to
/// the parameters, accumulating into `grad`.
pub(crate) fn backward(net: &MlpParams, pass: &JetPass, dout: &[f64], grad: &mut [f64]) {
    let order = pass.order;
    let nch = channels(order);
    let rows = pass.rows();
    let shapes = net.layer_shapes();
    let theta = net.as_slice();
    debug_assert_eq!(pass.hidden.len() + 1, shapes.len(), "pass kept no cache");

    let mut d_out = dout.to_vec();
    for l in (0..shapes.len()).rev() {
        let shape = &shapes[l];
        let (fi, fo) = (shape.fan_in, shape.fan_out);
        let h_in: &[f64] = if l == 0 { &pass.input } else { &pass.hidden[l - 1].y };

        // dW += dZᵀ · H
        gemm(
            fo,
            rows,
            fi,
            &d_out,
            (1, fo),
            h_in,
            (fi, 1),
            1.0,
            &mut grad[shape.w_offset..shape.w_offset + fo * fi],
            fi,
        );
        let db = &mut grad[shape.b_offset..shape.b_offset + fo];
        for row in d_out.chunks_exact(fo * nch) {
            for (g, d) in db.iter_mut().zip(&row[..fo]) {
                *g += d;
            }
        }
        if l == 0 {
            break;
        }

        // dH = dZ · W
        let w = &theta[shape.w_offset..shape.w_offset + fo * fi];
        let mut d_h = vec![0.0; rows * fi];
        gemm(rows, fo, fi, &d_out, (fo, 1), w, (fi, 1), 0.0, &mut d_h, fi);

        d_out = activation_vjp(&pass.hidden[l - 1], &d_h, fi, order);
    }
}

/// Adjoint of [`activate`]: maps post-activation adjoints to pre-activation
/// adjoints.
fn activation_vjp(cache: &HiddenCache, dy: &[f64], width: usize, order: usize) -> Vec<f64> {
    let nch = channels(order);
    let mut dz = vec![0.0; dy.len()];
    let blocks = cache
        .z
        .chunks_exact(width * nch)
        .zip(cache.y.chunks_exact(width * nch))
        .zip(dy.chunks_exact(width * nch))
        .zip(dz.chunks_exact_mut(width * nch));
    for (((zp, yp), dyp), dzp) in blocks {
        for j in 0..width {
            let a = yp[VAL * width + j];
            let s1 = 1.0 - a * a;
            let s2 = -2.0 * a * s1;
            let s3 = (6.0 * a * a - 2.0) * s1;
            let s4 = s1 * a * (16.0 - 24.0 * a * a);

            let dyt = dyp[DT * width + j];
            dzp[DT * width + j] = dyt * s1;
            let mut bar1 = dyt * zp[DT * width + j];
            let mut bar2 = 0.0;
            let mut bar3 = 0.0;
            if order >= 1 {
                let zx = zp[DX * width + j];
                let dyx = dyp[DX * width + j];
                let mut dzx = dyx * s1;
                bar1 += dyx * zx;
                if order >= 2 {
                    let zxx = zp[DXX * width + j];
                    let dyxx = dyp[DXX * width + j];
                    dzx += dyxx * 2.0 * s2 * zx;
                    let mut dzxx = dyxx * s1;
                    bar1 += dyxx * zxx;
                    bar2 += dyxx * zx * zx;
                    if order >= 3 {
                        let zxxx = zp[DXXX * width + j];
                        let dyxxx = dyp[DXXX * width + j];
                        dzx += dyxxx * (3.0 * s3 * zx * zx + 3.0 * s2 * zxx);
                        dzxx += dyxxx * 3.0 * s2 * zx;
                        dzp[DXXX * width + j] = dyxxx * s1;
                        bar1 += dyxxx * zxxx;
                        bar2 += dyxxx * 3.0 * zx * zxx;
                        bar3 += dyxxx * zx * zx * zx;
                    }
                    dzp[DXX * width + j] = dzxx;
                }
                dzp[DX * width + j] = dzx;
            }
            dzp[VAL * width + j] = dyp[VAL * width + j] * s1 + bar1 * s2 + bar2 * s3 + bar3 * s4;
        }
    }
    dz
}
