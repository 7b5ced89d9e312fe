//! Tube geometry: projection operators, tube-frame coordinates, filtered
//! position errors, the finishing-line arrival test and airspace regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat2, Vec2};

/// `I - (a-b)(a-b)ᵀ / |a-b|²`: projects onto the normal of the line through
/// `a` and `b`.
pub fn projection_matrix(a: Vec2, b: Vec2) -> Result<Mat2> {
    let d = a - b;
    let n2 = d.norm_squared();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "line endpoints {a} and {b} do not define a line"
        )));
    }
    Ok(Mat2::IDENTITY.sub(&Mat2::outer(d, d).scale(1.0 / n2)))
}

/// Perpendicular distance from `p` to the infinite line through `a` and `b`.
pub fn line_distance(p: Vec2, a: Vec2, b: Vec2) -> Result<f64> {
    Ok((projection_matrix(a, b)? * (p - a)).norm())
}

/// Which side of the centerline (looking from `p_t1` towards `p_t2`) the
/// finishing line extends to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// A straight virtual tube of half-width `r_t` from `p_t1` to `p_t2`.
///
/// The finishing line is the segment `p_t2`-`p_t3`, perpendicular to the
/// centerline with length `r_t`. Projection matrices are computed once here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    p_t1: Vec2,
    p_t2: Vec2,
    r_t: f64,
    p_t3: Vec2,
    p_t4: Vec2,
    a_t12: Mat2,
    a_t23: Mat2,
    lane_count: Option<u32>,
    side: Side,
    axis: Vec2,
    normal: Vec2,
    length: f64,
}

impl TubeSpec {
    pub fn new(p_t1: Vec2, p_t2: Vec2, r_t: f64) -> Result<Self> {
        Self::with_side(p_t1, p_t2, r_t, Side::Left)
    }

    /// Tube whose finishing line extends to the given side of the centerline.
    /// The mirrored auxiliary tubes on the right of the main tube use
    /// [`Side::Right`].
    pub fn with_side(p_t1: Vec2, p_t2: Vec2, r_t: f64, side: Side) -> Result<Self> {
        if !p_t1.is_finite() || !p_t2.is_finite() {
            return Err(Error::DegenerateGeometry("non-finite tube endpoint".into()));
        }
        if !(r_t > 0.0) || !r_t.is_finite() {
            return Err(Error::param("r_t", format!("must be positive, got {r_t}")));
        }
        let a_t12 = projection_matrix(p_t1, p_t2)?;
        let length = (p_t2 - p_t1).norm();
        let axis = (p_t2 - p_t1) / length;
        let left = axis.perp();
        let normal = match side {
            Side::Left => left,
            Side::Right => -left,
        };
        let p_t3 = p_t2 + normal * r_t;
        let p_t4 = p_t1 + normal * r_t;
        let a_t23 = projection_matrix(p_t2, p_t3)?;
        Ok(TubeSpec {
            p_t1,
            p_t2,
            r_t,
            p_t3,
            p_t4,
            a_t12,
            a_t23,
            lane_count: None,
            side,
            axis,
            normal: left,
            length,
        })
    }

    /// Attach the advisory lane count `L`. Requires `r_t > L * r_a`.
    pub fn with_lanes(mut self, lanes: u32, r_a: f64) -> Result<Self> {
        if lanes == 0 {
            return Err(Error::param("lane_count", "must be at least 1"));
        }
        if !(self.r_t > f64::from(lanes) * r_a) {
            return Err(Error::param(
                "lane_count",
                format!(
                    "r_t = {} must exceed lane_count * r_a = {}",
                    self.r_t,
                    f64::from(lanes) * r_a
                ),
            ));
        }
        self.lane_count = Some(lanes);
        Ok(self)
    }

    pub fn p_t1(&self) -> Vec2 {
        self.p_t1
    }
    pub fn p_t2(&self) -> Vec2 {
        self.p_t2
    }
    /// Outer end of the finishing line.
    pub fn p_t3(&self) -> Vec2 {
        self.p_t3
    }
    /// Outer end of the starting line.
    pub fn p_t4(&self) -> Vec2 {
        self.p_t4
    }
    pub fn r_t(&self) -> f64 {
        self.r_t
    }
    pub fn a_t12(&self) -> &Mat2 {
        &self.a_t12
    }
    pub fn a_t23(&self) -> &Mat2 {
        &self.a_t23
    }
    pub fn lane_count(&self) -> Option<u32> {
        self.lane_count
    }
    pub fn side(&self) -> Side {
        self.side
    }
    /// Centerline length `|p_t2 - p_t1|`.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Coordinates in the tube frame: origin `p_t1`, x towards `p_t2`,
    /// y to the left.
    #[inline]
    pub fn to_frame(&self, w: Vec2) -> Vec2 {
        let d = w - self.p_t1;
        Vec2::new(d.dot(self.axis), d.dot(self.normal))
    }

    #[inline]
    pub fn from_frame(&self, f: Vec2) -> Vec2 {
        self.p_t1 + self.axis * f.x + self.normal * f.y
    }
}

/// Filtered and physical position errors of one UAV relative to a tube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubeErrors {
    /// `A_t23 (xi - p_t2)`: offset from the finishing line.
    pub xi_l: Vec2,
    /// `A_t12 (xi - p_t2)`: offset from the centerline.
    pub xi_t: Vec2,
    pub p_l: Vec2,
    pub p_t: Vec2,
}

pub fn tube_errors(xi: Vec2, p: Vec2, tube: &TubeSpec) -> TubeErrors {
    TubeErrors {
        xi_l: tube.a_t23 * (xi - tube.p_t2),
        xi_t: tube.a_t12 * (xi - tube.p_t2),
        p_l: tube.a_t23 * (p - tube.p_t2),
        p_t: tube.a_t12 * (p - tube.p_t2),
    }
}

/// `(p_t2 - p_t1)ᵀ A_t23 (p - p_t2) >= -eps0`.
///
/// The left-hand side is not normalised by the tube length, so `eps0` is in
/// units of m².
pub fn arrival_test(p: Vec2, tube: &TubeSpec, eps0: f64) -> bool {
    let lhs = (tube.p_t2 - tube.p_t1).dot(tube.a_t23 * (p - tube.p_t2));
    lhs >= -eps0
}

/// Airspace regions around a tube, defined in the tube frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    #[serde(rename = "tube")]
    TubeInterior,
    #[serde(rename = "extension")]
    TubeExtension,
    LeftStandby,
    RightStandby,
    LeftReady,
    RightReady,
    /// Inside the band beyond the finishing line. Treated as arrived.
    PastFinish,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::TubeInterior => "tube",
            Region::TubeExtension => "extension",
            Region::LeftStandby => "left_standby",
            Region::RightStandby => "right_standby",
            Region::LeftReady => "left_ready",
            Region::RightReady => "right_ready",
            Region::PastFinish => "past_finish",
        }
    }

    /// Tube or its extension: the band where the main-tube controller runs.
    pub fn in_band(self) -> bool {
        matches!(self, Region::TubeInterior | Region::TubeExtension)
    }
}

/// Classify a filtered position. Band edges `|y| = r_t` belong to the band,
/// and `x = 0` belongs to the extension/ready side.
pub fn classify_region(xi: Vec2, tube: &TubeSpec) -> Region {
    let f = tube.to_frame(xi);
    let r_t = tube.r_t;
    if f.y.abs() <= r_t {
        if f.x <= 0.0 {
            Region::TubeExtension
        } else if f.x <= tube.length {
            Region::TubeInterior
        } else {
            Region::PastFinish
        }
    } else if f.y > r_t {
        if f.x > 0.0 {
            Region::LeftStandby
        } else {
            Region::LeftReady
        }
    } else if f.x > 0.0 {
        Region::RightStandby
    } else {
        Region::RightReady
    }
}

/// Distance from a physical position to the side walls of the tube (the two
/// edge segments of length `|p_t1 - p_t2|`), negative when the point lies
/// beside the tube but outside the band.
pub fn wall_clearance(p: Vec2, tube: &TubeSpec) -> f64 {
    let f = tube.to_frame(p);
    let lateral = tube.r_t - f.y.abs();
    if f.x < 0.0 {
        f.x.hypot(lateral)
    } else if f.x > tube.length {
        (f.x - tube.length).hypot(lateral)
    } else {
        lateral
    }
}
