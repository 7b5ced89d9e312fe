//! Distributed velocity command: the three control terms, the auxiliary
//! tubes that funnel UAVs from the standby and ready areas, and the
//! region-switched controller.

use crate::error::{Error, Result};
use crate::geometry::{classify_region, tube_errors, Region, Side, TubeSpec};
use crate::math::{Mat2, Vec2};
use crate::potentials::{gain_b, gain_c, PotentialParams};
use crate::shaping::vec_sat;

/// Half-width of the auxiliary tubes when a scenario does not set one.
pub const DEFAULT_AUX_RADIUS: f64 = 10_000.0;

/// Deliberate controller faults, used by the self-check suite to confirm
/// that its checks can fail.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Faults {
    /// Negate every avoidance gain, turning repulsion into attraction.
    pub flip_avoidance: bool,
    /// Never despawn arrived UAVs; they keep flying and stay visible.
    pub keep_arrived: bool,
}

/// Every controller constant.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlParams {
    pub potentials: PotentialParams,
    /// Detection radius.
    pub r_d: f64,
    /// Offset of the auxiliary finishing lines from the tube corner.
    pub r_b: f64,
    /// Half-width of the standby-to-ready tubes.
    pub r_sr: f64,
    /// Half-width of the ready-to-tube tubes.
    pub r_rt: f64,
    /// Arrival tolerance.
    pub eps_0: f64,
    #[doc(hidden)]
    pub faults: Faults,
}

impl ControlParams {
    /// Parameters with `r_b = r_a`, auxiliary half-widths of 10 km and
    /// `eps_0 = 1`.
    pub fn new(potentials: PotentialParams, r_d: f64) -> Self {
        ControlParams {
            r_b: potentials.r_a(),
            potentials,
            r_d,
            r_sr: DEFAULT_AUX_RADIUS,
            r_rt: DEFAULT_AUX_RADIUS,
            eps_0: 1.0,
            faults: Faults::default(),
        }
    }

    pub fn r_s(&self) -> f64 {
        self.potentials.r_s()
    }
    pub fn r_a(&self) -> f64 {
        self.potentials.r_a()
    }
}

/// What a UAV can observe about a neighbour. No identity is carried.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborObs {
    pub p: Vec2,
    pub v: Vec2,
    pub xi: Vec2,
}

/// The three control terms and the saturated command built from them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlTermSet {
    pub line_term: Vec2,
    pub avoid_term: Vec2,
    pub keep_term: Vec2,
    pub command: Vec2,
}

/// `-A_23 sat(k1 xi_l, vm)`
#[inline]
pub fn term_line(xi_l: Vec2, k1: f64, vm: f64, a_23: &Mat2) -> Vec2 {
    -(a_23 * vec_sat(xi_l * k1, vm))
}

/// `Σ_j b_ij (xi_i - xi_j)`, summed in the order given.
pub fn term_avoid(self_xi: Vec2, neighbors: &[NeighborObs], params: &ControlParams) -> Result<Vec2> {
    let mut acc = Vec2::ZERO;
    for n in neighbors {
        let d = self_xi - n.xi;
        let b = gain_b(d.norm(), &params.potentials)?;
        acc += d * b;
    }
    if params.faults.flip_avoidance {
        acc = -acc;
    }
    Ok(acc)
}

/// `-c_i A_12 xi_t`
#[inline]
pub fn term_keep(xi_t: Vec2, r_t: f64, p: &PotentialParams, a_12: &Mat2) -> Vec2 {
    let c = gain_c(xi_t.norm(), r_t, p);
    if c == 0.0 {
        return Vec2::ZERO;
    }
    -(a_12 * xi_t) * c
}

/// Saturated command steering a UAV with filtered position `xi` and speed
/// limit `vm` through `tube`.
pub fn tube_command(
    xi: Vec2,
    vm: f64,
    neighbors: &[NeighborObs],
    tube: &TubeSpec,
    params: &ControlParams,
) -> Result<ControlTermSet> {
    let e = tube_errors(xi, xi, tube);
    let p = &params.potentials;
    let line_term = term_line(e.xi_l, p.k1(), vm, tube.a_t23());
    let avoid_term = term_avoid(xi, neighbors, params)?;
    let keep_term = term_keep(e.xi_t, tube.r_t(), p, tube.a_t12());
    let command = vec_sat(line_term + avoid_term + keep_term, vm);
    Ok(ControlTermSet {
        line_term,
        avoid_term,
        keep_term,
        command,
    })
}

/// The four auxiliary tubes around a main tube.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxTubes {
    pub ls2r: TubeSpec,
    pub rs2r: TubeSpec,
    pub lr2t: TubeSpec,
    pub rr2t: TubeSpec,
    pub r_sr: f64,
    pub r_rt: f64,
    pub r_b: f64,
}

pub fn build_aux_tubes(tube: &TubeSpec, r_sr: f64, r_rt: f64, r_b: f64) -> Result<AuxTubes> {
    for (name, v) in [("r_sr", r_sr), ("r_rt", r_rt), ("r_b", r_b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    let r_t = tube.r_t();
    let len = tube.length();
    let w = |x: f64, y: f64| tube.from_frame(Vec2::new(x, y));
    // Left-hand tubes finish on their own left; the y-mirrored ones on the
    // right.
    let ls2r = TubeSpec::with_side(w(len, r_t + r_sr), w(-r_b, r_t + r_sr), r_sr, Side::Left)?;
    let rs2r = TubeSpec::with_side(w(len, -r_t - r_sr), w(-r_b, -r_t - r_sr), r_sr, Side::Right)?;
    let lr2t = TubeSpec::with_side(w(-r_rt, r_t + r_rt), w(-r_rt, r_t - r_b), r_rt, Side::Left)?;
    let rr2t = TubeSpec::with_side(w(-r_rt, -r_t - r_rt), w(-r_rt, -r_t + r_b), r_rt, Side::Right)?;
    Ok(AuxTubes {
        ls2r,
        rs2r,
        lr2t,
        rr2t,
        r_sr,
        r_rt,
        r_b,
    })
}

/// The tube a UAV in `region` is steered through.
pub fn active_tube<'a>(region: Region, tube: &'a TubeSpec, aux: &'a AuxTubes) -> Result<&'a TubeSpec> {
    match region {
        Region::TubeInterior | Region::TubeExtension => Ok(tube),
        Region::LeftStandby => Ok(&aux.ls2r),
        Region::RightStandby => Ok(&aux.rs2r),
        Region::LeftReady => Ok(&aux.lr2t),
        Region::RightReady => Ok(&aux.rr2t),
        Region::PastFinish => Err(Error::ContractViolation(region)),
    }
}

/// Region-switched controller.
pub fn dispatch(
    xi: Vec2,
    vm: f64,
    neighbors: &[NeighborObs],
    tube: &TubeSpec,
    aux: &AuxTubes,
    params: &ControlParams,
) -> Result<ControlTermSet> {
    let region = classify_region(xi, tube);
    tube_command(xi, vm, neighbors, active_tube(region, tube, aux)?, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Gains;
    use proptest::prelude::*;

    fn params(r_s: f64, r_a: f64) -> ControlParams {
        ControlParams::new(PotentialParams::new(r_s, r_a, Gains::default()).unwrap(), 80.0)
    }

    fn main_tube() -> TubeSpec {
        TubeSpec::new(Vec2::ZERO, Vec2::new(500.0, 0.0), 150.0).unwrap()
    }

    fn obs(xi: Vec2) -> NeighborObs {
        NeighborObs {
            p: xi,
            v: Vec2::ZERO,
            xi,
        }
    }

    #[test]
    fn line_term_examples() {
        let a = Mat2::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(term_line(Vec2::new(-400.0, 0.0), 1.0, 5.0, &a), Vec2::new(5.0, 0.0));
        assert_eq!(term_line(Vec2::ZERO, 1.0, 5.0, &a), Vec2::ZERO);
        assert_eq!(term_line(Vec2::new(-3.0, 0.0), 1.0, 5.0, &a), Vec2::new(3.0, 0.0));
    }

    #[test]
    fn avoid_term_examples() {
        let p = params(10.0, 20.0);
        let me = Vec2::new(100.0, 0.0);
        assert_eq!(term_avoid(me, &[], &p).unwrap(), Vec2::ZERO);
        assert_eq!(term_avoid(me, &[obs(Vec2::new(130.0, 0.0))], &p).unwrap(), Vec2::ZERO);
        let sym = [obs(Vec2::new(75.0, 0.0)), obs(Vec2::new(125.0, 0.0))];
        assert_eq!(term_avoid(me, &sym, &p).unwrap(), Vec2::ZERO);
        let push = term_avoid(me, &[obs(Vec2::new(110.0, 0.0))], &p).unwrap();
        assert!(push.x < 0.0 && push.y == 0.0);
        assert!(term_avoid(me, &[obs(me)], &p).is_err());
    }

    #[test]
    fn keep_term_examples() {
        let p = params(10.0, 20.0);
        let a = Mat2::new(0.0, 0.0, 0.0, 1.0);
        let pp = &p.potentials;
        assert_eq!(term_keep(Vec2::new(0.0, 30.0), 50.0, pp, &a), Vec2::ZERO);
        let k = term_keep(Vec2::new(0.0, 45.0), 50.0, pp, &a);
        assert_eq!(k.x, 0.0);
        assert!(k.y < 0.0);
        let want = gain_c(45.0, 50.0, pp) * 45.0;
        assert!((k.norm() - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn tube_command_examples() {
        let p = params(20.0, 30.0);
        let t = main_tube();
        let c = tube_command(Vec2::new(100.0, 0.0), 5.0, &[], &t, &p).unwrap();
        assert_eq!(c.command, Vec2::new(5.0, 0.0));
        let c = tube_command(t.p_t2(), 5.0, &[], &t, &p).unwrap();
        assert_eq!(c.command, Vec2::ZERO);
        let c = tube_command(Vec2::new(200.0, 149.0), 5.0, &[], &t, &p).unwrap();
        assert!(c.command.y < 0.0);
    }

    #[test]
    fn helper_form_matches_negated_outer_form() {
        let p = params(20.0, 30.0);
        let t = main_tube();
        let xi = Vec2::new(120.0, 128.0);
        let nbrs = [obs(Vec2::new(140.0, 110.0)), obs(Vec2::new(95.0, 140.0))];
        let vm = 7.0;
        let got = tube_command(xi, vm, &nbrs, &t, &p).unwrap().command;
        // -sat(A23 sat(k1 xi_l) - Σ b (xi_i - xi_j) + c A12 xi_t)
        let e = tube_errors(xi, xi, &t);
        let pp = &p.potentials;
        let mut inner = t.a_t23() * vec_sat(e.xi_l * pp.k1(), vm);
        for n in &nbrs {
            let d = xi - n.xi;
            inner -= d * gain_b(d.norm(), pp).unwrap();
        }
        inner += (t.a_t12() * e.xi_t) * gain_c(e.xi_t.norm(), t.r_t(), pp);
        let want = -vec_sat(inner, vm);
        assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn aux_tube_points() {
        let t = main_tube();
        let aux = build_aux_tubes(&t, 10_000.0, 10_000.0, 30.0).unwrap();
        assert_eq!(aux.ls2r.p_t1(), Vec2::new(500.0, 10_150.0));
        assert_eq!(aux.ls2r.p_t2(), Vec2::new(-30.0, 10_150.0));
        assert!((aux.ls2r.p_t3() - Vec2::new(-30.0, 150.0)).norm() < 1e-9);
        assert!((aux.rs2r.p_t3() - Vec2::new(-30.0, -150.0)).norm() < 1e-9);
        assert!((aux.lr2t.p_t3() - Vec2::new(0.0, 120.0)).norm() < 1e-9);
        assert!((aux.rr2t.p_t3() - Vec2::new(0.0, -120.0)).norm() < 1e-9);
        assert!(build_aux_tubes(&t, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn aux_tubes_follow_rotated_main_tube() {
        let t = TubeSpec::new(Vec2::new(10.0, 10.0), Vec2::new(10.0, 510.0), 150.0).unwrap();
        let aux = build_aux_tubes(&t, 10_000.0, 10_000.0, 30.0).unwrap();
        // tube frame x is world +y, tube frame y is world -x
        assert!((aux.ls2r.p_t3() - Vec2::new(-140.0, -20.0)).norm() < 1e-9);
        assert!((aux.lr2t.p_t3() - Vec2::new(-110.0, 10.0)).norm() < 1e-9);
    }

    #[test]
    fn standby_heads_back_towards_ready_area() {
        let p = params(20.0, 30.0);
        let t = main_tube();
        let aux = build_aux_tubes(&t, 10_000.0, 10_000.0, 30.0).unwrap();
        let c = dispatch(Vec2::new(250.0, 200.0), 5.0, &[], &t, &aux, &p).unwrap();
        assert!(c.command.x < 0.0);
        assert!(c.command.y.abs() < 1e-12);
        let c = dispatch(Vec2::new(-100.0, 300.0), 5.0, &[], &t, &aux, &p).unwrap();
        assert!(c.command.y < 0.0 && c.command.x.abs() < 1e-12);
        let c = dispatch(Vec2::new(-100.0, -300.0), 5.0, &[], &t, &aux, &p).unwrap();
        assert!(c.command.y > 0.0);
        let c = dispatch(Vec2::new(250.0, -200.0), 5.0, &[], &t, &aux, &p).unwrap();
        assert!(c.command.x < 0.0);
    }

    #[test]
    fn past_finish_is_a_contract_violation() {
        let p = params(20.0, 30.0);
        let t = main_tube();
        let aux = build_aux_tubes(&t, 10_000.0, 10_000.0, 30.0).unwrap();
        let r = dispatch(Vec2::new(600.0, 0.0), 5.0, &[], &t, &aux, &p);
        assert!(matches!(r, Err(Error::ContractViolation(Region::PastFinish))));
    }

    proptest! {
        #[test]
        fn command_within_speed_limit(
            x in -600.0..600.0f64, y in -400.0..400.0f64,
            nx in -40.0..40.0f64, ny in -40.0..40.0f64,
            vm in 0.5..20.0f64,
        ) {
            let p = params(20.0, 30.0);
            let t = main_tube();
            let aux = build_aux_tubes(&t, 10_000.0, 10_000.0, 30.0).unwrap();
            let xi = Vec2::new(x, y);
            prop_assume!(classify_region(xi, &t) != Region::PastFinish);
            prop_assume!(nx != 0.0 || ny != 0.0);
            let c = dispatch(xi, vm, &[obs(xi + Vec2::new(nx, ny))], &t, &aux, &p).unwrap();
            prop_assert!(c.command.norm() <= vm * (1.0 + 1e-15));
        }

        #[test]
        fn lone_flat_dispatch_equals_line_term(x in -500.0..500.0f64, y in -90.0..90.0f64, vm in 0.5..20.0f64) {
            let p = params(20.0, 30.0);
            let t = main_tube();
            let aux = build_aux_tubes(&t, 10_000.0, 10_000.0, 30.0).unwrap();
            let xi = Vec2::new(x, y);
            let c = dispatch(xi, vm, &[], &t, &aux, &p).unwrap();
            let e = tube_errors(xi, xi, &t);
            prop_assert_eq!(c.command, term_line(e.xi_l, 1.0, vm, t.a_t23()));
        }

        #[test]
        fn pair_contributions_are_antisymmetric(x in -50.0..50.0f64, y in -50.0..50.0f64) {
            prop_assume!(x != 0.0 || y != 0.0);
            let p = params(20.0, 30.0);
            let a = Vec2::new(10.0, 5.0);
            let b = a + Vec2::new(x, y);
            let ab = term_avoid(a, &[obs(b)], &p).unwrap();
            let ba = term_avoid(b, &[obs(a)], &p).unwrap();
            prop_assert_eq!(ab, -ba);
        }
    }
}
