// SPDX-License-Identifier: Apache-2.0

use std::ops::{Add, Mul, Neg, Sub};

/// Scalar arithmetic shared by plain `f64` and tape variables, so residuals
/// and boundary losses are written once and evaluated either way.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }

    fn sin(self) -> Self {
        f64::sin(self)
    }
}

/// Highest x-derivative order a jet can carry.
pub const MAX_X_ORDER: usize = 3;

/// Network output at one `(t, x)` point with its input derivatives.
///
/// Each field holds one entry per output component. Derivative fields above
/// the requested x-order are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<S = f64> {
    pub t: f64,
    pub x: f64,
    pub order: usize,
    pub u: Vec<S>,
    pub u_t: Vec<S>,
    pub u_x: Vec<S>,
    pub u_xx: Vec<S>,
    pub u_xxx: Vec<S>,
}

impl<S: Copy> Jet<S> {
    pub fn out_dim(&self) -> usize {
        self.u.len()
    }

    /// Derivative `∂^k u / ∂x^k` for `k <= order`; `k = 0` is the value.
    pub fn dx(&self, k: usize) -> Option<&[S]> {
        let field = match k {
            0 => &self.u,
            1 => &self.u_x,
            2 => &self.u_xx,
            3 => &self.u_xxx,
            _ => return None,
        };
        (k <= self.order).then_some(field.as_slice())
    }
}
