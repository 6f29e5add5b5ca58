// SPDX-License-Identifier: Apache-2.0

//! Input derivatives of the network and parameter gradients of anything
//! built from them.

pub(crate) mod engine;
mod jet;
mod tape;

pub use jet::{Jet, Real, MAX_X_ORDER};
pub use tape::{backprop_params, Tape, Var};

use crate::error::{Error, Result};
use crate::mlp::MlpParams;

pub(crate) fn check_inputs(net: &MlpParams, points: &[(f64, f64)], order: usize) -> Result<()> {
    if order > MAX_X_ORDER {
        return Err(Error::Contract(format!(
            "x-derivative order {order} exceeds {MAX_X_ORDER}"
        )));
    }
    if let Some(i) = net.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("network parameter {i}")));
    }
    if let Some(&(t, x)) = points.iter().find(|(t, x)| !t.is_finite() || !x.is_finite()) {
        return Err(Error::NonFinite(format!("query point ({t}, {x})")));
    }
    Ok(())
}

fn unpack(pass: &engine::JetPass, points: &[(f64, f64)], out_dim: usize) -> Vec<Jet> {
    let nch = engine::channels(pass.order);
    points
        .iter()
        .enumerate()
        .map(|(p, &(t, x))| {
            let channel = |c: usize| -> Vec<f64> {
                if c >= nch {
                    return Vec::new();
                }
                let base = (p * nch + c) * out_dim;
                pass.out[base..base + out_dim].to_vec()
            };
            Jet {
                t,
                x,
                order: pass.order,
                u: channel(engine::VAL),
                u_t: channel(engine::DT),
                u_x: channel(engine::DX),
                u_xx: channel(engine::DXX),
                u_xxx: channel(engine::DXXX),
            }
        })
        .collect()
}

/// Jets at many points without recording anything.
pub fn eval_jets(net: &MlpParams, points: &[(f64, f64)], max_x_order: usize) -> Result<Vec<Jet>> {
    check_inputs(net, points, max_x_order)?;
    let pass = engine::forward(net, points, max_x_order, false);
    Ok(unpack(&pass, points, net.out_dim()))
}

/// Jet at one point without recording anything. Use [`Tape::eval_jet`] when
/// the result feeds a loss that must be differentiated.
pub fn eval_jet(net: &MlpParams, t: f64, x: f64, max_x_order: usize) -> Result<Jet> {
    Ok(eval_jets(net, &[(t, x)], max_x_order)?.pop().expect("one jet"))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// u = w·x + b (no hidden layer).
    fn affine(w: f64, b: f64) -> MlpParams {
        MlpParams::from_flat(0, 0, 1, 0, vec![0.0, w, b]).unwrap()
    }

    /// u = tanh(x) (one hidden unit, unit output weight).
    fn tanh_unit() -> MlpParams {
        MlpParams::from_flat(1, 1, 1, 0, vec![0.0, 1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn affine_network_has_trivial_jet() {
        let jet = eval_jet(&affine(2.0, 1.0), 0.0, 3.0, 3).unwrap();
        assert_eq!(jet.u, vec![7.0]);
        assert_eq!(jet.u_x, vec![2.0]);
        assert_eq!(jet.u_xx, vec![0.0]);
        assert_eq!(jet.u_xxx, vec![0.0]);
        assert_eq!(jet.u_t, vec![0.0]);
    }

    #[test]
    fn tanh_unit_matches_taylor_coefficients() {
        let jet = eval_jet(&tanh_unit(), 0.0, 0.0, 3).unwrap();
        assert_eq!(jet.u, vec![0.0]);
        assert_eq!(jet.u_x, vec![1.0]);
        assert_eq!(jet.u_xx, vec![0.0]);
        assert_eq!(jet.u_xxx, vec![-2.0]);
        assert_eq!(jet.u_t, vec![0.0]);
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let net = tanh_unit();
        assert!(matches!(eval_jet(&net, f64::NAN, 0.0, 1), Err(Error::NonFinite(_))));
        let mut bad = net.clone();
        bad.as_mut_slice()[0] = f64::INFINITY;
        assert!(matches!(eval_jet(&bad, 0.0, 0.0, 1), Err(Error::NonFinite(_))));
        assert!(matches!(eval_jet(&net, 0.0, 0.0, 4), Err(Error::Contract(_))));
    }

    #[test]
    fn lower_orders_leave_fields_empty() {
        let net = MlpParams::init(2, 4, 1, 3).unwrap();
        let jet = eval_jet(&net, 0.2, 0.1, 1).unwrap();
        assert_eq!(jet.u_x.len(), 1);
        assert!(jet.u_xx.is_empty() && jet.u_xxx.is_empty());
        assert!(jet.dx(2).is_none());
    }

    #[test]
    fn squared_affine_output_gradient() {
        let net = affine(2.0, 1.0);
        let tape = Tape::new(&net);
        let jet = tape.eval_jet(0.0, 3.0, 0).unwrap();
        let loss = jet.u[0] * jet.u[0];
        let g = backprop_params(&tape, loss).unwrap();
        assert_eq!(g, vec![0.0, 42.0, 14.0]);
        assert_eq!(tape.gradient(loss).unwrap(), g);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let net = MlpParams::init(2, 4, 1, 1).unwrap();
        let tape = Tape::new(&net);
        let _ = tape.eval_jet(0.1, 0.2, 2).unwrap();
        let c = tape.constant(3.0);
        let g = tape.gradient(c * 2.0).unwrap();
        assert_eq!(g.len(), net.param_count());
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn foreign_loss_is_structural_error() {
        let net = MlpParams::init(1, 2, 1, 1).unwrap();
        let a = Tape::new(&net);
        let b = Tape::new(&net);
        let v = b.constant(1.0);
        assert!(matches!(a.gradient(v), Err(Error::Structural(_))));
    }
}
