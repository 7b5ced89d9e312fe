//! Scalar shaping functions: vector saturation, the cubic bump, the smooth
//! saturation and the line-integral Lyapunov value.

use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::math::Vec2;

/// 67.5 degrees.
const THETA_S: f64 = 3.0 * std::f64::consts::FRAC_PI_8;

/// Scales `v` down to norm `vm` if it is longer, keeping its direction.
///
/// Norms within a few ulps of `vm` pass through unchanged, so that applying
/// the saturation twice gives the same bits as applying it once.
#[inline]
pub fn vec_sat(v: Vec2, vm: f64) -> Vec2 {
    let n = v.norm();
    if n <= vm * (1.0 + 4.0 * f64::EPSILON) {
        v
    } else {
        v * (vm / n)
    }
}

/// Cubic step from 1 at `d1` to 0 at `d2`, flat outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpSpec {
    d1: f64,
    d2: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl BumpSpec {
    pub fn new(d1: f64, d2: f64) -> Result<Self> {
        if !(d1 >= 0.0 && d2 > d1 && d2.is_finite()) {
            return Err(Error::param(
                "bump",
                format!("need 0 <= d1 < d2, got d1 = {d1}, d2 = {d2}"),
            ));
        }
        let den = (d1 - d2).powi(3);
        Ok(BumpSpec {
            d1,
            d2,
            a: -2.0 / den,
            b: 3.0 * (d1 + d2) / den,
            c: -6.0 * d1 * d2 / den,
            d: d2 * d2 * (3.0 * d1 - d2) / den,
        })
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn d2(&self) -> f64 {
        self.d2
    }
    /// `(A, B, C, D)`
    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        (self.a, self.b, self.c, self.d)
    }
}

/// Evaluated in `u = (x - d1) / (d2 - d1)` as `(1 - u)^2 (1 + 2u)`, which is
/// the same cubic as the `A..D` expansion without its cancellation.
#[inline]
pub fn bump(x: f64, s: &BumpSpec) -> f64 {
    if x <= s.d1 {
        1.0
    } else if x >= s.d2 {
        0.0
    } else {
        let u = (x - s.d1) / (s.d2 - s.d1);
        let r = 1.0 - u;
        r * r * (1.0 + 2.0 * u)
    }
}

#[inline]
pub fn bump_deriv(x: f64, s: &BumpSpec) -> f64 {
    if x <= s.d1 || x >= s.d2 {
        0.0
    } else {
        let w = s.d2 - s.d1;
        let u = (x - s.d1) / w;
        -6.0 * u * (1.0 - u) / w
    }
}

/// Saturation at 1 with the corner rounded off by a circular arc of radius
/// `eps_s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothSatSpec {
    eps_s: f64,
    x1: f64,
    x2: f64,
}

impl SmoothSatSpec {
    /// Largest `eps_s` keeping the arc's start `x1` non-negative.
    pub fn max_eps() -> f64 {
        let t = THETA_S.tan();
        t / (t * FRAC_PI_4.sin() - 1.0)
    }

    pub fn new(eps_s: f64) -> Result<Self> {
        if !(eps_s > 0.0 && eps_s <= Self::max_eps()) {
            return Err(Error::param(
                "eps_s",
                format!("must lie in (0, {}], got {eps_s}", Self::max_eps()),
            ));
        }
        let x2 = 1.0 + eps_s / THETA_S.tan();
        let x1 = x2 - FRAC_PI_4.sin() * eps_s;
        Ok(SmoothSatSpec { eps_s, x1, x2 })
    }

    pub fn eps_s(&self) -> f64 {
        self.eps_s
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
}

#[inline]
fn check_nonneg(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("smooth saturation needs x >= 0, got {x}")))
    }
}

pub fn smooth_sat(x: f64, s: &SmoothSatSpec) -> Result<f64> {
    check_nonneg(x)?;
    Ok(smooth_sat_unchecked(x, s))
}

pub fn smooth_sat_deriv(x: f64, s: &SmoothSatSpec) -> Result<f64> {
    check_nonneg(x)?;
    Ok(smooth_sat_deriv_unchecked(x, s))
}

/// Branch taken by [`smooth_sat`] at a given argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SatBranch {
    Linear,
    Arc,
    Flat,
}

#[inline]
pub(crate) fn sat_branch(x: f64, s: &SmoothSatSpec) -> SatBranch {
    if x <= s.x1 {
        SatBranch::Linear
    } else if x < s.x2 {
        SatBranch::Arc
    } else {
        SatBranch::Flat
    }
}

#[inline]
pub(crate) fn smooth_sat_unchecked(x: f64, s: &SmoothSatSpec) -> f64 {
    match sat_branch(x, s) {
        SatBranch::Linear => x,
        SatBranch::Arc => {
            let dx = x - s.x2;
            (1.0 - s.eps_s) + (s.eps_s * s.eps_s - dx * dx).max(0.0).sqrt()
        }
        SatBranch::Flat => 1.0,
    }
}

#[inline]
pub(crate) fn smooth_sat_deriv_unchecked(x: f64, s: &SmoothSatSpec) -> f64 {
    match sat_branch(x, s) {
        SatBranch::Linear => 1.0,
        SatBranch::Arc => {
            let dx = x - s.x2;
            let r = (s.eps_s * s.eps_s - dx * dx).max(0.0).sqrt();
            if r > 0.0 {
                (-dx / r).min(1.0)
            } else {
                0.0
            }
        }
        SatBranch::Flat => 0.0,
    }
}

/// Line integral of `sat(k z, a)` from 0 to `norm_y` along a ray.
pub fn vli_value(norm_y: f64, k: f64, a: f64) -> f64 {
    if k * norm_y <= a {
        0.5 * k * norm_y * norm_y
    } else {
        a * a / (2.0 * k) + a * (norm_y - a / k)
    }
}
