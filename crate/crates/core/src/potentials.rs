//! Line-approach, mutual-avoidance and tube-keeping potentials with their
//! analytic gradient gains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tube_errors, TubeSpec};
use crate::math::Vec2;
use crate::shaping::{
    bump, bump_deriv, sat_branch, smooth_sat_deriv_unchecked, smooth_sat_unchecked, vli_value, BumpSpec, SatBranch,
    SmoothSatSpec,
};

/// Default for the three regularisers.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Gains, regularisers and radii shared by the potentials.
///
/// The bump and smooth-saturation specs derived from them are cached, so the
/// fields are only reachable through accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialParams {
    k1: f64,
    k2: f64,
    k3: f64,
    eps_m: f64,
    eps_t: f64,
    eps_s: f64,
    r_s: f64,
    r_a: f64,
    bump_m: BumpSpec,
    bump_t: BumpSpec,
    sat: SmoothSatSpec,
}

/// Serializable form of [`PotentialParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub eps_m: f64,
    pub eps_t: f64,
    pub eps_s: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            eps_m: DEFAULT_EPS,
            eps_t: DEFAULT_EPS,
            eps_s: DEFAULT_EPS,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::param(field, format!("must be positive and finite, got {v}")))
    }
}

impl PotentialParams {
    pub fn new(r_s: f64, r_a: f64, g: Gains) -> Result<Self> {
        positive("r_s", r_s)?;
        positive("r_a", r_a)?;
        if !(r_a > r_s) {
            return Err(Error::param("r_a", format!("must exceed r_s = {r_s}, got {r_a}")));
        }
        positive("k1", g.k1)?;
        positive("k2", g.k2)?;
        positive("k3", g.k3)?;
        positive("eps_m", g.eps_m)?;
        positive("eps_t", g.eps_t)?;
        Ok(PotentialParams {
            k1: g.k1,
            k2: g.k2,
            k3: g.k3,
            eps_m: g.eps_m,
            eps_t: g.eps_t,
            eps_s: g.eps_s,
            r_s,
            r_a,
            bump_m: BumpSpec::new(2.0 * r_s, r_s + r_a)?,
            bump_t: BumpSpec::new(r_s, r_a)?,
            sat: SmoothSatSpec::new(g.eps_s)?,
        })
    }

    pub fn gains(&self) -> Gains {
        Gains {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            eps_m: self.eps_m,
            eps_t: self.eps_t,
            eps_s: self.eps_s,
        }
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }
    pub fn k3(&self) -> f64 {
        self.k3
    }
    pub fn eps_m(&self) -> f64 {
        self.eps_m
    }
    pub fn eps_t(&self) -> f64 {
        self.eps_t
    }
    pub fn eps_s(&self) -> f64 {
        self.eps_s
    }
    pub fn r_s(&self) -> f64 {
        self.r_s
    }
    pub fn r_a(&self) -> f64 {
        self.r_a
    }
    pub fn smooth_sat_spec(&self) -> &SmoothSatSpec {
        &self.sat
    }
    /// Knots `(2 r_s, r_s + r_a)`.
    pub fn avoid_bump(&self) -> &BumpSpec {
        &self.bump_m
    }
    /// Knots `(r_s, r_a)`.
    pub fn keep_bump(&self) -> &BumpSpec {
        &self.bump_t
    }
}

/// Line-approach potential for a finishing-line error of norm `norm_xi_l`.
pub fn v_l(norm_xi_l: f64, vm: f64, p: &PotentialParams) -> f64 {
    vli_value(norm_xi_l, p.k1, vm)
}

/// Value and derivative of the avoidance denominator
/// `(1 + eps_m) d - 2 r_s s(d / 2 r_s)`.
///
/// On the linear and flat branches of `s` the expression is simplified by
/// hand; evaluating it generically loses all digits to cancellation when
/// `s(u) = u`.
#[inline]
fn avoid_den(d: f64, p: &PotentialParams) -> (f64, f64) {
    let two_rs = 2.0 * p.r_s;
    let u = d / two_rs;
    match sat_branch(u, &p.sat) {
        SatBranch::Linear => (p.eps_m * d, p.eps_m),
        SatBranch::Flat => ((1.0 + p.eps_m) * d - two_rs, 1.0 + p.eps_m),
        SatBranch::Arc => (
            (1.0 + p.eps_m) * d - two_rs * smooth_sat_unchecked(u, &p.sat),
            (1.0 + p.eps_m) - smooth_sat_deriv_unchecked(u, &p.sat),
        ),
    }
}

fn check_dist(d: f64) -> Result<()> {
    if d > 0.0 {
        Ok(())
    } else {
        Err(Error::Singularity(format!(
            "mutual-avoidance potential evaluated at distance {d}"
        )))
    }
}

/// Mutual-avoidance barrier at filtered distance `dist`.
pub fn v_m(dist: f64, p: &PotentialParams) -> Result<f64> {
    check_dist(dist)?;
    let s = bump(dist, &p.bump_m);
    if s == 0.0 {
        return Ok(0.0);
    }
    let (den, _) = avoid_den(dist, p);
    Ok(p.k2 * s / den)
}

/// `-(dV_m/d dist) / dist`, non-negative.
pub fn gain_b(dist: f64, p: &PotentialParams) -> Result<f64> {
    check_dist(dist)?;
    let s = bump(dist, &p.bump_m);
    if s == 0.0 {
        return Ok(0.0);
    }
    let ds = bump_deriv(dist, &p.bump_m);
    let (den, dden) = avoid_den(dist, p);
    let dv = p.k2 * (ds * den - s * dden) / (den * den);
    Ok(-dv / dist)
}

/// Value and derivative of the tube-keeping denominator
/// `(r_t - r_s) - n s((r_t - r_s) / (n + eps_t))`.
#[inline]
fn keep_den(n: f64, r_t: f64, p: &PotentialParams) -> (f64, f64) {
    let w0 = r_t - p.r_s;
    let ne = n + p.eps_t;
    let w = w0 / ne;
    match sat_branch(w, &p.sat) {
        SatBranch::Linear => (w0 * p.eps_t / ne, -w0 * p.eps_t / (ne * ne)),
        SatBranch::Flat => (w0 - n, -1.0),
        SatBranch::Arc => (
            w0 - n * smooth_sat_unchecked(w, &p.sat),
            -smooth_sat_unchecked(w, &p.sat) + n * smooth_sat_deriv_unchecked(w, &p.sat) * w0 / (ne * ne),
        ),
    }
}

/// Tube-keeping barrier for a centerline error of norm `norm_xi_t` in a tube
/// of half-width `r_t`. Requires `r_t > r_s`.
pub fn v_t(norm_xi_t: f64, r_t: f64, p: &PotentialParams) -> f64 {
    debug_assert!(r_t > p.r_s && norm_xi_t >= 0.0);
    let s = bump(r_t - norm_xi_t, &p.bump_t);
    if s == 0.0 {
        return 0.0;
    }
    let (den, _) = keep_den(norm_xi_t, r_t, p);
    p.k3 * s / den
}

/// `(dV_t/d norm) / norm`, non-negative. Zero on the flat core, which
/// includes `norm = 0`.
pub fn gain_c(norm_xi_t: f64, r_t: f64, p: &PotentialParams) -> f64 {
    debug_assert!(r_t > p.r_s && norm_xi_t >= 0.0);
    let x = r_t - norm_xi_t;
    let s = bump(x, &p.bump_t);
    if s == 0.0 || norm_xi_t == 0.0 {
        return 0.0;
    }
    let ds = -bump_deriv(x, &p.bump_t);
    let (den, dden) = keep_den(norm_xi_t, r_t, p);
    p.k3 * (ds * den - s * dden) / (den * den) / norm_xi_t
}

/// One live UAV's contribution to [`total_v`]: its filtered position, speed
/// limit and the tube it is currently steered through.
#[derive(Clone, Copy, Debug)]
pub struct VInput<'a> {
    pub xi: Vec2,
    pub vm: f64,
    pub tube: &'a TubeSpec,
}

/// `Σ_i (V_l,i + ½ Σ_{j≠i} V_m,ij + V_t,i)`.
pub fn total_v(uavs: &[VInput<'_>], p: &PotentialParams) -> Result<f64> {
    let mut v = 0.0;
    for (i, u) in uavs.iter().enumerate() {
        let e = tube_errors(u.xi, u.xi, u.tube);
        v += v_l(e.xi_l.norm(), u.vm, p);
        v += v_t(e.xi_t.norm(), u.tube.r_t(), p);
        // each unordered pair once, which is the same as the halved double sum
        for w in &uavs[i + 1..] {
            v += v_m(u.xi.distance(w.xi), p)?;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig_params() -> PotentialParams {
        PotentialParams::new(10.0, 20.0, Gains::default()).unwrap()
    }

    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn v_l_examples() {
        let p = fig_params();
        assert_eq!(v_l(0.0, 5.0, &p), 0.0);
        assert_eq!(v_l(400.0, 5.0, &p), 1987.5);
        assert_eq!(v_l(1.0, 5.0, &p), 0.5);
    }

    #[test]
    fn v_m_examples() {
        let p = fig_params();
        assert_eq!(v_m(30.0, &p).unwrap(), 0.0);
        assert_eq!(v_m(50.0, &p).unwrap(), 0.0);
        let v = v_m(10.0, &p).unwrap();
        let approx = 1.0 / (1e-6 * 10.0);
        assert!(v > approx / 2.0 && v < approx * 2.0, "{v}");
        // independent evaluation of the raw formula
        let s = SmoothSatSpec::new(1e-6).unwrap();
        let raw = 1.0 / ((1.0 + 1e-6) * 10.0 - 20.0 * smooth_sat_unchecked(0.5, &s));
        assert!((v - raw).abs() / raw < 1e-6);
        assert!(matches!(v_m(0.0, &p), Err(Error::Singularity(_))));
    }

    #[test]
    fn v_t_examples() {
        let p = fig_params();
        assert_eq!(v_t(20.0, 50.0, &p), 0.0);
        assert_eq!(v_t(0.0, 50.0, &p), 0.0);
        let v = v_t(45.0, 50.0, &p);
        let approx = (45.0 + 1e-6) / (1e-6 * 40.0);
        assert!(v > approx / 2.0 && v < approx * 2.0, "{v}");
    }

    #[test]
    fn gain_examples() {
        let p = fig_params();
        assert_eq!(gain_b(35.0, &p).unwrap(), 0.0);
        assert!(gain_b(15.0, &p).unwrap() > 0.0);
        let h = 1e-6 * 5.0;
        let want = -fd(|d| v_m(d, &p).unwrap(), 25.0, h) / 25.0;
        let got = gain_b(25.0, &p).unwrap();
        assert!((got - want).abs() <= 1e-5 * want.abs(), "{got} vs {want}");

        assert_eq!(gain_c(10.0, 50.0, &p), 0.0);
        assert_eq!(gain_c(0.0, 50.0, &p), 0.0);
        let want = fd(|n| v_t(n, 50.0, &p), 35.0, h) / 35.0;
        let got = gain_c(35.0, 50.0, &p);
        assert!((got - want).abs() <= 1e-5 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn gradients_in_violation_zone() {
        let p = fig_params();
        for d in [1.0, 5.0, 12.0, 19.0] {
            let h = 1e-6 * d;
            let want = -fd(|x| v_m(x, &p).unwrap(), d, h) / d;
            let got = gain_b(d, &p).unwrap();
            assert!((got - want).abs() <= 1e-5 * want.abs(), "d={d}: {got} vs {want}");
        }
        for n in [41.0_f64, 45.0, 49.0, 60.0] {
            let h = 1e-6 * (n - 40.0).min(n);
            let want = fd(|x| v_t(x, 50.0, &p), n, h) / n;
            let got = gain_c(n, 50.0, &p);
            assert!((got - want).abs() <= 1e-5 * want.abs(), "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn total_v_examples() {
        let p = fig_params();
        let tube = TubeSpec::new(Vec2::ZERO, Vec2::new(500.0, 0.0), 150.0).unwrap();
        let one = [VInput {
            xi: Vec2::new(500.0, 0.0),
            vm: 5.0,
            tube: &tube,
        }];
        assert_eq!(total_v(&one, &p).unwrap(), 0.0);
        let two = [
            VInput {
                xi: Vec2::new(100.0, 0.0),
                vm: 5.0,
                tube: &tube,
            },
            VInput {
                xi: Vec2::new(200.0, 50.0),
                vm: 6.0,
                tube: &tube,
            },
        ];
        let want = v_l(400.0, 5.0, &p) + v_l(300.0, 6.0, &p);
        assert_eq!(total_v(&two, &p).unwrap(), want);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PotentialParams::new(20.0, 20.0, Gains::default()).is_err());
        let g = Gains {
            k2: 0.0,
            ..Gains::default()
        };
        assert!(PotentialParams::new(20.0, 30.0, g).is_err());
    }

    proptest! {
        #[test]
        fn v_m_zero_iff_outside(d in 0.01..100.0f64) {
            let p = fig_params();
            let v = v_m(d, &p).unwrap();
            prop_assert_eq!(v == 0.0, d >= 30.0);
            prop_assert!(v.is_finite() && v >= 0.0);
            prop_assert!(gain_b(d, &p).unwrap() >= 0.0);
        }

        #[test]
        fn v_m_nonincreasing(d in 0.01..40.0f64, dd in 1e-3..5.0f64) {
            let p = fig_params();
            prop_assert!(v_m(d + dd, &p).unwrap() <= v_m(d, &p).unwrap());
        }

        #[test]
        fn v_t_nondecreasing(n in 0.0..70.0f64, dn in 1e-3..5.0f64) {
            let p = fig_params();
            let (a, b) = (v_t(n, 50.0, &p), v_t(n + dn, 50.0, &p));
            prop_assert!(b >= a, "{} -> {}", a, b);
            prop_assert!(a.is_finite() && gain_c(n, 50.0, &p) >= 0.0);
        }
    }
}
