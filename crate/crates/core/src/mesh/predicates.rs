// SPDX-License-Identifier: Apache-2.0

//! Orientation and incircle tests. The plain double-precision determinant is
//! trusted when it clears a forward error bound; otherwise it is re-evaluated
//! in double-double arithmetic.

use std::cmp::Ordering;

const EPS: f64 = f64::EPSILON * 0.5;
const CCW_BOUND: f64 = (3.0 + 16.0 * EPS) * EPS;
const ICC_BOUND: f64 = (10.0 + 96.0 * EPS) * EPS;

pub type Point = (f64, f64);

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: err }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    /// Exact difference of two doubles.
    fn diff(a: f64, b: f64) -> Dd {
        two_sum(a, -b)
    }

    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let err = self.hi.mul_add(o.hi, -p);
        let err = err + (self.hi * o.lo + self.lo * o.hi);
        quick_two_sum(p, err)
    }

    fn sign(self) -> Ordering {
        let v = if self.hi != 0.0 { self.hi } else { self.lo };
        v.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
    }
}

/// Raw orientation determinant; positive when `a, b, c` turn counter-clockwise.
#[inline]
pub fn orient_det(a: Point, b: Point, c: Point) -> f64 {
    (a.0 - c.0) * (b.1 - c.1) - (a.1 - c.1) * (b.0 - c.0)
}

/// Sign of the orientation of `a, b, c`: `Greater` for a left turn.
pub fn orient(a: Point, b: Point, c: Point) -> Ordering {
    let left = (a.0 - c.0) * (b.1 - c.1);
    let right = (a.1 - c.1) * (b.0 - c.0);
    let det = left - right;
    let bound = CCW_BOUND * (left.abs() + right.abs());
    if det > bound || -det > bound {
        return det.partial_cmp(&0.0).unwrap_or(Ordering::Equal);
    }
    let acx = Dd::diff(a.0, c.0);
    let bcy = Dd::diff(b.1, c.1);
    let acy = Dd::diff(a.1, c.1);
    let bcx = Dd::diff(b.0, c.0);
    acx.mul(bcy).sub(acy.mul(bcx)).sign()
}

/// `Greater` when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `a, b, c`.
pub fn incircle(a: Point, b: Point, c: Point, d: Point) -> Ordering {
    let adx = a.0 - d.0;
    let ady = a.1 - d.1;
    let bdx = b.0 - d.0;
    let bdy = b.1 - d.1;
    let cdx = c.0 - d.0;
    let cdy = c.1 - d.1;

    let bdxcdy = bdx * cdy;
    let cdxbdy = cdx * bdy;
    let alift = adx * adx + ady * ady;
    let cdxady = cdx * ady;
    let adxcdy = adx * cdy;
    let blift = bdx * bdx + bdy * bdy;
    let adxbdy = adx * bdy;
    let bdxady = bdx * ady;
    let clift = cdx * cdx + cdy * cdy;

    let det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
    let permanent = (bdxcdy.abs() + cdxbdy.abs()) * alift
        + (cdxady.abs() + adxcdy.abs()) * blift
        + (adxbdy.abs() + bdxady.abs()) * clift;
    let bound = ICC_BOUND * permanent;
    if det > bound || -det > bound {
        return det.partial_cmp(&0.0).unwrap_or(Ordering::Equal);
    }

    let adx = Dd::diff(a.0, d.0);
    let ady = Dd::diff(a.1, d.1);
    let bdx = Dd::diff(b.0, d.0);
    let bdy = Dd::diff(b.1, d.1);
    let cdx = Dd::diff(c.0, d.0);
    let cdy = Dd::diff(c.1, d.1);
    let alift = adx.mul(adx).add(ady.mul(ady));
    let blift = bdx.mul(bdx).add(bdy.mul(bdy));
    let clift = cdx.mul(cdx).add(cdy.mul(cdy));
    let t1 = alift.mul(bdx.mul(cdy).sub(cdx.mul(bdy)));
    let t2 = blift.mul(cdx.mul(ady).sub(adx.mul(cdy)));
    let t3 = clift.mul(adx.mul(bdy).sub(bdx.mul(ady)));
    t1.add(t2).add(t3).sign()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_signs() {
        assert_eq!(orient((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)), Ordering::Greater);
        assert_eq!(orient((0.0, 0.0), (0.0, 1.0), (1.0, 0.0)), Ordering::Less);
        assert_eq!(orient((0.0, 0.0), (1.0, 1.0), (2.0, 2.0)), Ordering::Equal);
    }

    #[test]
    fn nearly_collinear_points_resolved_by_fallback() {
        // c sits a few ulps off the line through a and b.
        let a = (0.1, 0.1);
        let b = (0.7, 0.7);
        let c = (0.4, f64::from_bits(0.4f64.to_bits() + 3));
        assert_eq!(orient(a, b, c), Ordering::Greater);
        let c = (0.4, f64::from_bits(0.4f64.to_bits() - 3));
        assert_eq!(orient(a, b, c), Ordering::Less);
    }

    #[test]
    fn incircle_on_unit_square() {
        let (a, b, c) = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0));
        assert_eq!(incircle(a, b, c, (0.0, 1.0)), Ordering::Equal);
        assert_eq!(incircle(a, b, c, (0.5, 0.5)), Ordering::Greater);
        assert_eq!(incircle(a, b, c, (2.0, 2.0)), Ordering::Less);
    }
}
