//! Derivatives, closed forms and the exact step against numerical oracles.

use proptest::prelude::*;

use vtube_core::dynamics::{step_exact, UavParams, UavState};
use vtube_core::potentials::{gain_b, gain_c, v_m, v_t, Gains, PotentialParams};
use vtube_core::shaping::{bump, bump_deriv, smooth_sat, smooth_sat_deriv, vli_value, BumpSpec, SmoothSatSpec};
use vtube_core::{Region, Vec2};

/// Fourth-order central difference.
fn fd5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1e-12)
}

/// Three-point Gauss-Legendre on `[a, b]`.
fn gauss3(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    let x = (0.6f64).sqrt();
    r * (5.0 * f(m - r * x) + 8.0 * f(m) + 5.0 * f(m + r * x)) / 9.0
}

/// Adaptive bisection with a Gauss-Legendre rule.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = gauss3(f, a, b);
    let m = 0.5 * (a + b);
    let halves = gauss3(f, a, m) + gauss3(f, m, b);
    if depth == 0 || (halves - whole).abs() <= tol {
        halves
    } else {
        integrate(f, a, m, tol / 2.0, depth - 1) + integrate(f, m, b, tol / 2.0, depth - 1)
    }
}

fn rk4(p: Vec2, v: Vec2, vc: Vec2, l: f64, dt: f64, n: usize) -> (Vec2, Vec2) {
    let h = dt / n as f64;
    let f = |v: Vec2| (vc - v) * l;
    let (mut p, mut v) = (p, v);
    for _ in 0..n {
        let a1 = f(v);
        let v2 = v + a1 * (h / 2.0);
        let a2 = f(v2);
        let v3 = v + a2 * (h / 2.0);
        let a3 = f(v3);
        let v4 = v + a3 * h;
        let a4 = f(v4);
        p += (v + v2 * 2.0 + v3 * 2.0 + v4) * (h / 6.0);
        v += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    }
    (p, v)
}

fn params(r_s: f64, ratio: f64) -> PotentialParams {
    PotentialParams::new(r_s, r_s * ratio, Gains::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn bump_slope(d1 in 0.0..200.0f64, w in 0.5..200.0f64, u in 0.01..0.99f64) {
        let s = BumpSpec::new(d1, d1 + w).unwrap();
        let x = d1 + u * w;
        let fd = fd5(|x| bump(x, &s), x, 1e-4 * w);
        prop_assert!(close(bump_deriv(x, &s), fd, 1e-7), "{} vs {fd}", bump_deriv(x, &s));
    }

    #[test]
    fn smooth_sat_slope(log_eps in -3.0..0.0f64, t in 0.0..1.0f64, off_arc in any::<bool>()) {
        let s = SmoothSatSpec::new(10f64.powf(log_eps).min(SmoothSatSpec::max_eps())).unwrap();
        let (x1, x2) = (s.x1(), s.x2());
        let x = if off_arc { if t < 0.5 { 2.0 * t * x1 * 0.99 } else { x2 + 0.01 + t } } else { x1 + (x2 - x1) * (0.02 + 0.96 * t) };
        let gap = [x1, x2].iter().map(|k| (x - k).abs()).fold(f64::INFINITY, f64::min);
        let h = (gap / 4.0).min(1e-4 * s.eps_s()).min(x / 4.0).max(1e-300);
        let fd = fd5(|x| smooth_sat(x, &s).unwrap(), x, h);
        let exact = smooth_sat_deriv(x, &s).unwrap();
        prop_assert!(exact == fd || close(exact, fd, 1e-5), "x={x}: {exact} vs {fd}");
    }

    #[test]
    fn gain_b_is_scaled_slope(r_s in 5.0..40.0f64, ratio in 1.2..3.0f64, u in 0.05..1.2f64) {
        let p = params(r_s, ratio);
        let d_far = p.r_s() + p.r_a();
        let d = u * d_far;
        let gap = [2.0 * r_s, d_far].iter().map(|k| (d - k).abs()).fold(d, f64::min);
        prop_assume!(gap > 1e-3 * d);
        let fd = fd5(|d| v_m(d, &p).unwrap(), d, 1e-4 * gap);
        let exact = -gain_b(d, &p).unwrap() * d;
        prop_assert!(exact == fd || close(exact, fd, 1e-6), "d={d}: {exact} vs {fd}");
    }

    #[test]
    fn gain_c_is_scaled_slope(r_s in 5.0..40.0f64, ratio in 1.2..3.0f64, extra in 1.0..200.0f64, u in 0.0..1.1f64) {
        let p = params(r_s, ratio);
        let r_t = p.r_a() + extra;
        let n = u * r_t;
        let knots = [r_t - p.r_a(), r_t - r_s];
        let gap = knots.iter().map(|k| (n - k).abs()).fold(f64::INFINITY, f64::min).min(n.max(1e-9));
        prop_assume!(gap > 1e-3 * r_t);
        let fd = fd5(|n| v_t(n, r_t, &p), n, 1e-4 * gap);
        let exact = gain_c(n, r_t, &p) * n;
        prop_assert!(exact == fd || close(exact, fd, 1e-6), "n={n}: {exact} vs {fd}");
    }

    #[test]
    fn vli_is_the_line_integral(y in 0.0..600.0f64, k in 0.05..10.0f64, a in 0.1..30.0f64) {
        let f = |z: f64| (k * z).min(a);
        // split at the integrand's kink
        let z = (a / k).min(y);
        let tol = 1e-11 * (1.0 + a * y);
        let q = integrate(&f, 0.0, z, tol, 50) + integrate(&f, z, y, tol, 50);
        prop_assert!((vli_value(y, k, a) - q).abs() <= 1e-9 * q.abs().max(1e-12));
    }

    #[test]
    fn exact_step_matches_rk4(
        l in 0.5..10.0f64, dt in 0.001..0.3f64,
        px in -500.0..500.0f64, py in -500.0..500.0f64,
        vx in -15.0..15.0f64, vy in -15.0..15.0f64,
        cx in -15.0..15.0f64, cy in -15.0..15.0f64,
    ) {
        let (p, v, vc) = (Vec2::new(px, py), Vec2::new(vx, vy), Vec2::new(cx, cy));
        let uav = UavParams::new(1, l, 20.0).unwrap();
        let s = step_exact(&UavState::new(p, v, l, Region::TubeInterior), &uav, vc, dt);
        let (rp, rv) = rk4(p, v, vc, l, dt, 1000);
        let floor = 1e-12 * (v.norm() + vc.norm());
        prop_assert!((s.p - rp).norm() <= 1e-10 * rp.norm().max(floor));
        prop_assert!((s.v - rv).norm() <= 1e-10 * rv.norm().max(floor));
    }
}

#[test]
fn exact_step_example() {
    let uav = UavParams::new(1, 5.0, 2.0).unwrap();
    let s0 = UavState::new(Vec2::ZERO, Vec2::new(1.0, 0.0), 5.0, Region::TubeInterior);
    let s = step_exact(&s0, &uav, Vec2::ZERO, 0.2);
    assert!((s.v.x - (-1.0f64).exp()).abs() < 1e-15);
    let (_, rv) = rk4(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::ZERO, 5.0, 0.2, 1000);
    assert!((s.v - rv).norm() < 1e-12);
}
