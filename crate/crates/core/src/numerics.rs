//! Shared numerical primitives: the real principal-branch Lambert W function,
//! Euclidean ball projection, subgradient step-size schedules and a bracketed
//! scalar root finder used by the closed-form allocation routines.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

/// 1/e; the left end of the principal branch's domain.
pub const INV_E: f64 = 1.0 / E;

/// Slack accepted below -1/e before an argument is rejected.
pub const BRANCH_POINT_SLACK: f64 = 1e-12;

const HALLEY_MAX_ITERS: usize = 50;

/// Principal branch `W0(x)` of the Lambert W function, the solution `w >= -1`
/// of `w * exp(w) = x`.
///
/// Halley iteration from a branch-point series guess near `-1/e`, a
/// logarithmic guess for large `x`, and Winitzki's approximation elsewhere.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E - BRANCH_POINT_SLACK {
        return Err(Error::LambertDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    // Distance to the branch point, computed without forming e*x + 1.
    let r = x + INV_E;
    if r <= 0.0 {
        return Ok(-1.0);
    }

    let mut w = initial_guess(x, r);
    for _ in 0..HALLEY_MAX_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        let next = w - dw;
        // The principal branch never goes below -1.
        let next = if next < -1.0 { 0.5 * (w - 1.0) } else { next };
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300);
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(x: f64, r: f64) -> f64 {
    if r < 0.2 {
        // Series about the branch point in p = sqrt(2(e x + 1)).
        let p = (2.0 * E * r).sqrt();
        let p2 = p * p;
        -1.0 + p - p2 / 3.0 + 11.0 / 72.0 * p2 * p - 43.0 / 540.0 * p2 * p2
            + 769.0 / 17280.0 * p2 * p2 * p
    } else if x > 3.0 {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1 + l2 * (l2 - 2.0) / (2.0 * l1 * l1)
    } else {
        let l = x.ln_1p();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    }
}

/// Projects `x` onto the closed ball of the given radius centred at the origin.
pub fn project_ball(x: Vec2, radius: f64) -> Vec2 {
    let norm = x.norm();
    if norm <= radius {
        x
    } else if norm == 0.0 || radius <= 0.0 {
        Vec2::zeros()
    } else {
        x * (radius / norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Constant,
    #[default]
    Diminishing,
}

/// Base step plus decay rule for projected subgradient ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub base_step: f64,
    pub mode: StepMode,
}

impl StepSchedule {
    pub fn constant(base_step: f64) -> Self {
        Self {
            base_step,
            mode: StepMode::Constant,
        }
    }

    pub fn diminishing(base_step: f64) -> Self {
        Self {
            base_step,
            mode: StepMode::Diminishing,
        }
    }

    /// Step length at iteration `iter` (1-based).
    pub fn step(&self, iter: usize) -> f64 {
        step(self, iter)
    }
}

pub fn step(schedule: &StepSchedule, iter: usize) -> f64 {
    let iter = iter.max(1) as f64;
    match schedule.mode {
        StepMode::Constant => schedule.base_step,
        StepMode::Diminishing => schedule.base_step / iter.sqrt(),
    }
}

/// Final bracket of a root search: `f(lo)` and `f(hi)` have opposite signs
/// (or one of them is zero).
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    /// The end point at which `f <= 0`.
    pub fn nonpositive_end(&self) -> f64 {
        if self.f_lo <= 0.0 {
            self.lo
        } else {
            self.hi
        }
    }
}

/// Illinois (modified regula falsi) search on `[lo, hi]` where `f(lo)` and
/// `f(hi)` differ in sign. Stops when the bracket width falls below
/// `xtol * max(1, |x|)` or after `max_iter` evaluations.
pub fn find_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
    max_iter: usize,
) -> Option<Bracket> {
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        return None;
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        if f_lo == 0.0 {
            hi = lo;
            f_hi = f_lo;
            break;
        }
        if f_hi == 0.0 {
            lo = hi;
            f_lo = f_hi;
            break;
        }
        if (hi - lo).abs() <= xtol * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !x.is_finite() || x <= lo.min(hi) || x >= lo.max(hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx.is_nan() {
            return None;
        }
        if fx.signum() == f_hi.signum() {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
    }
    Some(Bracket { lo, hi, f_lo, f_hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(x: f64) -> f64 {
        let w = lambert_w0(x).unwrap();
        (w * w.exp() - x).abs() / x.abs().max(1.0)
    }

    #[test]
    fn lambert_fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(-INV_E).unwrap(), -1.0);
        // Omega constant.
        assert!((lambert_w0(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
    }

    #[test]
    fn lambert_rejects_below_branch_point() {
        assert!(matches!(lambert_w0(-0.5), Err(Error::LambertDomain(_))));
        assert!(lambert_w0(-INV_E - 1e-13).is_ok());
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn lambert_near_branch_point_and_large() {
        for &x in &[-INV_E + 1e-15, -INV_E + 1e-9, -0.3, -0.1, 1e-300, 1e-8, 2.9, 3.1, 1e6, 1e15, 1e300] {
            assert!(residual(x) <= 1e-12, "x = {x}: {}", residual(x));
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_ball(Vec2::new(3.0, 4.0), 10.0), Vec2::new(3.0, 4.0));
        assert_eq!(project_ball(Vec2::new(3.0, 4.0), 5.0), Vec2::new(3.0, 4.0));
        let p = project_ball(Vec2::new(6.0, 8.0), 5.0);
        assert!((p - Vec2::new(3.0, 4.0)).norm() < 1e-15);
        assert_eq!(project_ball(Vec2::new(1.0, 0.0), 0.0), Vec2::zeros());
    }

    #[test]
    fn step_examples() {
        assert_eq!(StepSchedule::constant(0.1).step(7), 0.1);
        assert!((StepSchedule::diminishing(0.1).step(4) - 0.05).abs() < 1e-17);
        assert_eq!(StepSchedule::diminishing(1.0).step(1), 1.0);
    }

    #[test]
    fn root_finder_keeps_sign_bracket() {
        let b = find_root(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((b.lo - 2f64.sqrt()).abs() < 1e-12);
        assert!(b.nonpositive_end() * b.nonpositive_end() <= 2.0);
        assert!(find_root(|x| x + 1.0, 0.0, 1.0, 1e-12, 50).is_none());
    }

    proptest! {
        #[test]
        fn lambert_identity(e in -12.0f64..6.0, frac in 0.0f64..1.0) {
            let x = if frac < 0.3 { -INV_E * frac / 0.3 } else { 10f64.powf(e) };
            prop_assert!(residual(x) <= 1e-12);
            prop_assert!(lambert_w0(x).unwrap() >= -1.0);
        }

        #[test]
        fn projection_idempotent_nonexpansive(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0,
            bx in -50.0f64..50.0, by in -50.0f64..50.0,
            r in 0.0f64..30.0,
        ) {
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            let pa = project_ball(a, r);
            prop_assert!(pa.norm() <= r + 1e-12);
            prop_assert!((project_ball(pa, r) - pa).norm() <= 1e-12);
            prop_assert!((pa - project_ball(b, r)).norm() <= (a - b).norm() + 1e-12);
        }
    }
}
