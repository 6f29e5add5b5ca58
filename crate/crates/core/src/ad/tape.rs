// SPDX-License-Identifier: Apache-2.0

//! Scalar reverse-mode tape whose leaves may be jet outputs.
//!
//! Scalar arithmetic on [`Var`] is recorded as a Wengert list. Jets are
//! recorded as opaque blocks: their output channels are leaf variables and
//! their parameter VJP runs after the scalar sweep has produced the leaf
//! adjoints.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use super::engine::{self, JetPass};
use super::jet::{Jet, Real};
use crate::error::{Error, Result};
use crate::mlp::MlpParams;

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Debug)]
struct JetBlock {
    first_leaf: usize,
    pass: JetPass,
}

/// Record of the computation from network parameters to a scalar loss.
#[derive(Debug)]
pub struct Tape<'p> {
    net: &'p MlpParams,
    nodes: RefCell<Vec<Node>>,
    blocks: RefCell<Vec<JetBlock>>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape<'t>,
    idx: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.val)
    }
}

impl<'p> Tape<'p> {
    pub fn new(net: &'p MlpParams) -> Self {
        Tape {
            net,
            nodes: RefCell::new(Vec::new()),
            blocks: RefCell::new(Vec::new()),
        }
    }

    pub fn network(&self) -> &'p MlpParams {
        self.net
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, val: f64, parents: [u32; 2], partials: [f64; 2]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = u32::try_from(nodes.len()).expect("tape exceeds u32 nodes");
        nodes.push(Node { parents, partials });
        Var {
            tape: self,
            idx,
            val,
        }
    }

    /// A value with no dependence on the parameters.
    pub fn constant(&self, val: f64) -> Var<'_> {
        self.push(val, [NO_PARENT; 2], [0.0; 2])
    }

    /// Records the jet of the network at a single point.
    pub fn eval_jet(&self, t: f64, x: f64, max_x_order: usize) -> Result<Jet<Var<'_>>> {
        Ok(self.eval_jets(&[(t, x)], max_x_order)?.pop().expect("one jet"))
    }

    /// Records jets at many points as one block.
    pub fn eval_jets(&self, points: &[(f64, f64)], max_x_order: usize) -> Result<Vec<Jet<Var<'_>>>> {
        super::check_inputs(self.net, points, max_x_order)?;
        let pass = engine::forward(self.net, points, max_x_order, true);
        let out_dim = self.net.out_dim();
        let nch = engine::channels(max_x_order);
        let first_leaf = self.len();
        let leaves: Vec<Var<'_>> = pass.out.iter().map(|&v| self.constant(v)).collect();
        self.blocks.borrow_mut().push(JetBlock { first_leaf, pass });

        let jets = points
            .iter()
            .enumerate()
            .map(|(p, &(t, x))| {
                let channel = |c: usize| -> Vec<Var<'_>> {
                    if c >= nch {
                        return Vec::new();
                    }
                    let base = (p * nch + c) * out_dim;
                    leaves[base..base + out_dim].to_vec()
                };
                Jet {
                    t,
                    x,
                    order: max_x_order,
                    u: channel(engine::VAL),
                    u_t: channel(engine::DT),
                    u_x: channel(engine::DX),
                    u_xx: channel(engine::DXX),
                    u_xxx: channel(engine::DXXX),
                }
            })
            .collect();
        Ok(jets)
    }

    /// Sum of many variables as a single chain of additions.
    pub fn sum<'t>(&'t self, vars: impl IntoIterator<Item = Var<'t>>) -> Var<'t> {
        let mut iter = vars.into_iter();
        match iter.next() {
            Some(first) => iter.fold(first, |acc, v| acc + v),
            None => self.constant(0.0),
        }
    }

    /// `d loss / d θ` for every network parameter.
    ///
    /// The tape is left untouched, so repeated calls return identical
    /// gradients.
    pub fn gradient(&self, loss: Var<'_>) -> Result<Vec<f64>> {
        if !std::ptr::eq(loss.tape as *const Tape<'_> as *const (), self as *const Tape<'_> as *const ()) {
            return Err(Error::Structural("loss node was recorded on a different tape".into()));
        }
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[loss.idx as usize] = 1.0;
        for i in (0..=loss.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                if node.parents[k] != NO_PARENT {
                    adj[node.parents[k] as usize] += a * node.partials[k];
                }
            }
        }

        let mut grad = vec![0.0; self.net.param_count()];
        for block in self.blocks.borrow().iter() {
            let n_out = block.pass.out.len();
            let dout = &adj[block.first_leaf..block.first_leaf + n_out];
            if dout.iter().all(|&d| d == 0.0) {
                continue;
            }
            engine::backward(self.net, &block.pass, dout, &mut grad);
        }
        Ok(grad)
    }
}

/// Free-function form of [`Tape::gradient`].
pub fn backprop_params(tape: &Tape<'_>, loss: Var<'_>) -> Result<Vec<f64>> {
    tape.gradient(loss)
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    fn unary(self, val: f64, d: f64) -> Self {
        self.tape.push(val, [self.idx, NO_PARENT], [d, 0.0])
    }

    fn binary(self, other: Self, val: f64, da: f64, db: f64) -> Self {
        self.tape.push(val, [self.idx, other.idx], [da, db])
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val * rhs, rhs)
    }
}

impl Real for Var<'_> {
    fn value(self) -> f64 {
        self.val
    }

    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }

    fn square(self) -> Self {
        self.unary(self.val * self.val, 2.0 * self.val)
    }
}
