//! Angles, poses and the egocentric polar grid.
//!
//! Conventions used throughout the crate:
//!
//! * World coordinates are metres, `x` to the east and `y` to the north.
//! * Headings and world bearings are compass-style degrees: `0` faces `+y`
//!   and positive angles turn clockwise (towards `+x`).
//! * Egocentric azimuth `theta` is measured from the heading, `0` straight
//!   ahead and positive to the right, in the half-open domain `[-180, 180)`.
//!
//! The polar grid puts bin centres on integer multiples of the resolution.
//! Range bin `i` is centred on `(i + 1) * range_resolution`; azimuth bin `j`
//! is centred on `-180 + j * azimuth_resolution` and covers the interval
//! `(centre - res/2, centre + res/2]`, so `179.5` and `-180` fall into
//! different bins while `180` and `-180` coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFiniteAngle(a));
    }
    Ok(wrap_deg(a))
}

/// Infallible variant of [`wrap_angle`] for values already known to be finite.
#[inline]
pub(crate) fn wrap_deg(a: f64) -> f64 {
    if (-180.0..180.0).contains(&a) {
        return a;
    }
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid may round up to exactly 360 for tiny negative inputs
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// A point in world coordinates (metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Agent position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Compass heading in degrees, always within `[-180, 180)`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_deg(heading),
        }
    }

    pub fn position(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }

    /// Pose rotated in place; positive `delta` turns right.
    pub fn turned(&self, delta: f64) -> Pose {
        Pose::new(self.x, self.y, self.heading + delta)
    }

    /// Pose advanced `distance` metres along the heading.
    pub fn advanced(&self, distance: f64) -> Pose {
        let h = self.heading.to_radians();
        Pose::new(
            self.x + distance * h.sin(),
            self.y + distance * h.cos(),
            self.heading,
        )
    }
}

/// Wrapped heading change from `from` to `to`.
pub fn heading_change(from: &Pose, to: &Pose) -> f64 {
    wrap_deg(to.heading - from.heading)
}

/// Egocentric polar coordinates: range in metres, azimuth in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPolar {
    pub r: f64,
    pub theta: f64,
}

impl EgoPolar {
    pub fn new(r: f64, theta: f64) -> Self {
        Self {
            r,
            theta: wrap_deg(theta),
        }
    }

    /// Egocentric Cartesian coordinates `(forward, right)`.
    pub fn to_forward_right(&self) -> (f64, f64) {
        let t = self.theta.to_radians();
        (self.r * t.cos(), self.r * t.sin())
    }

    pub fn from_forward_right(forward: f64, right: f64) -> Self {
        EgoPolar::new(forward.hypot(right), right.atan2(forward).to_degrees())
    }

    /// Euclidean distance between two egocentric points.
    pub fn distance(&self, other: &EgoPolar) -> f64 {
        let (f1, r1) = self.to_forward_right();
        let (f2, r2) = other.to_forward_right();
        (f1 - f2).hypot(r1 - r2)
    }
}

pub fn world_to_ego(pose: &Pose, point: &WorldPoint) -> Result<EgoPolar> {
    let dx = point.x - pose.x;
    let dy = point.y - pose.y;
    let r = dx.hypot(dy);
    if r == 0.0 {
        return Err(Error::DegenerateRange);
    }
    let bearing = dx.atan2(dy).to_degrees();
    Ok(EgoPolar::new(r, bearing - pose.heading))
}

pub fn ego_to_world(pose: &Pose, ep: &EgoPolar) -> WorldPoint {
    let b = (pose.heading + ep.theta).to_radians();
    WorldPoint::new(pose.x + ep.r * b.sin(), pose.y + ep.r * b.cos())
}

/// Discretised egocentric range x azimuth grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolarGrid {
    pub num_range_bins: usize,
    pub num_azimuth_bins: usize,
    pub range_resolution: f64,
    pub azimuth_resolution: f64,
}

impl Default for PolarGrid {
    fn default() -> Self {
        Self {
            num_range_bins: 30,
            num_azimuth_bins: 360,
            range_resolution: 1.0,
            azimuth_resolution: 1.0,
        }
    }
}

impl PolarGrid {
    pub fn new(num_range_bins: usize, num_azimuth_bins: usize, range_resolution: f64) -> Result<Self> {
        let grid = Self {
            num_range_bins,
            num_azimuth_bins,
            range_resolution,
            azimuth_resolution: if num_azimuth_bins == 0 {
                0.0
            } else {
                360.0 / num_azimuth_bins as f64
            },
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_range_bins == 0 || self.num_azimuth_bins == 0 {
            return Err(Error::InvalidConfig("grid must have at least one bin per axis".into()));
        }
        if !(self.range_resolution > 0.0) || !(self.azimuth_resolution > 0.0) {
            return Err(Error::InvalidConfig("grid resolutions must be positive".into()));
        }
        let span = self.azimuth_resolution * self.num_azimuth_bins as f64;
        if (span - 360.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "azimuth bins must tile the circle, got {span} degrees"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.num_range_bins * self.num_azimuth_bins
    }

    /// Row-major cell index: one row per range bin, azimuth ascending from -180.
    #[inline]
    pub fn index(&self, range_bin: usize, azimuth_bin: usize) -> usize {
        range_bin * self.num_azimuth_bins + azimuth_bin
    }

    #[inline]
    pub fn split(&self, cell: usize) -> (usize, usize) {
        (cell / self.num_azimuth_bins, cell % self.num_azimuth_bins)
    }

    #[inline]
    pub fn range_center(&self, range_bin: usize) -> f64 {
        (range_bin + 1) as f64 * self.range_resolution
    }

    #[inline]
    pub fn azimuth_center(&self, azimuth_bin: usize) -> f64 {
        -180.0 + azimuth_bin as f64 * self.azimuth_resolution
    }

    pub fn cell_center(&self, cell: usize) -> EgoPolar {
        let (i, j) = self.split(cell);
        EgoPolar {
            r: self.range_center(i),
            theta: self.azimuth_center(j),
        }
    }

    pub fn max_range(&self) -> f64 {
        self.num_range_bins as f64 * self.range_resolution
    }

    /// Range bin containing `r`, or `None` outside `(0, max_range]`.
    pub fn range_bin(&self, r: f64) -> Option<usize> {
        if !(r > 0.0) || r > self.max_range() {
            return None;
        }
        let k = (r / self.range_resolution - 1.5).ceil();
        Some(if k < 0.0 { 0 } else { (k as usize).min(self.num_range_bins - 1) })
    }

    pub fn azimuth_bin(&self, theta: f64) -> usize {
        let t = wrap_deg(theta);
        let k = ((t + 180.0) / self.azimuth_resolution - 0.5).ceil() as i64;
        k.rem_euclid(self.num_azimuth_bins as i64) as usize
    }

    pub fn cell_of(&self, ep: &EgoPolar) -> Option<usize> {
        self.range_bin(ep.r)
            .map(|i| self.index(i, self.azimuth_bin(ep.theta)))
    }

    /// Number of azimuth bins equivalent to `degrees`, if it lies on the grid.
    pub fn azimuth_steps(&self, degrees: f64) -> Result<i64> {
        let steps = degrees / self.azimuth_resolution;
        let rounded = steps.round();
        if !degrees.is_finite() || (steps - rounded).abs() > 1e-9 {
            return Err(Error::RotationNotOnGrid(degrees, self.azimuth_resolution));
        }
        Ok(rounded as i64)
    }

    /// True when `theta` lies inside a symmetric field of view of `fov` degrees.
    #[inline]
    pub fn in_fov(theta: f64, fov: f64) -> bool {
        wrap_deg(theta).abs() <= fov / 2.0 + 1e-9
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(190.0).unwrap(), -170.0);
        assert_eq!(wrap_angle(-180.0).unwrap(), -180.0);
        assert_eq!(wrap_angle(180.0).unwrap(), -180.0);
        assert_eq!(wrap_angle(720.0).unwrap(), 0.0);
        assert_eq!(wrap_angle(-1e-18).unwrap(), -1e-18);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn ego_examples() {
        let p = Pose::new(0.0, 0.0, 0.0);
        let e = world_to_ego(&p, &WorldPoint::new(0.0, 5.0)).unwrap();
        assert!((e.r - 5.0).abs() < 1e-12 && e.theta.abs() < 1e-12);

        let behind = world_to_ego(&p, &WorldPoint::new(0.0, -2.0)).unwrap();
        assert_eq!(behind.theta, -180.0);

        let east = Pose::new(0.0, 0.0, 90.0);
        let e = world_to_ego(&east, &WorldPoint::new(3.0, 0.0)).unwrap();
        assert!((e.r - 3.0).abs() < 1e-12 && e.theta.abs() < 1e-12);

        assert!(matches!(
            world_to_ego(&p, &WorldPoint::new(0.0, 0.0)),
            Err(Error::DegenerateRange)
        ));

        let w = ego_to_world(&Pose::new(2.0, 3.0, 0.0), &EgoPolar::new(1.0, 0.0));
        assert!((w.x - 2.0).abs() < 1e-12 && (w.y - 4.0).abs() < 1e-12);
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let pose = Pose::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-720.0..720.0),
            );
            let ep = EgoPolar::new(rng.random_range(0.01..40.0), rng.random_range(-180.0..180.0));
            let w = ego_to_world(&pose, &ep);
            let back = world_to_ego(&pose, &w).unwrap();
            worst = worst.max((back.r - ep.r).abs());
            worst = worst.max(wrap_deg(back.theta - ep.theta).abs().to_radians() * ep.r);
            let again = ego_to_world(&pose, &back);
            worst = worst.max(again.distance(&w));
        }
        assert!(worst < 1e-9, "worst round-trip error {worst}");
    }

    #[test]
    fn every_bin_center_round_trips() {
        let g = PolarGrid::default();
        for cell in 0..g.num_cells() {
            let c = g.cell_center(cell);
            assert_eq!(g.cell_of(&c), Some(cell));
        }
        // points within half a step map back to the same bin
        for i in 0..g.num_range_bins {
            let r = g.range_center(i);
            assert_eq!(g.range_bin(r + 0.49), Some(i).filter(|_| r + 0.49 <= 30.0).or(None));
            assert_eq!(g.range_bin(r - 0.49), Some(i));
        }
    }

    #[test]
    fn azimuth_wrap_boundaries() {
        let g = PolarGrid::default();
        assert_ne!(g.azimuth_bin(179.5), g.azimuth_bin(-180.0));
        assert_eq!(g.azimuth_bin(180.0), g.azimuth_bin(-180.0));
        assert_eq!(g.azimuth_bin(0.0), 180);
        assert_eq!(g.azimuth_bin(-179.5), 0);
        assert_eq!(g.range_bin(0.0), None);
        assert_eq!(g.range_bin(30.0), Some(29));
        assert_eq!(g.range_bin(30.01), None);
    }

    #[test]
    fn azimuth_steps_must_align() {
        let g = PolarGrid::default();
        assert_eq!(g.azimuth_steps(30.0).unwrap(), 30);
        assert_eq!(g.azimuth_steps(-360.0).unwrap(), -360);
        assert!(g.azimuth_steps(0.5).is_err());
        let coarse = PolarGrid::new(3, 8, 2.0).unwrap();
        assert!(coarse.azimuth_steps(30.0).is_err());
        assert_eq!(coarse.azimuth_steps(90.0).unwrap(), 2);
    }

    proptest::proptest! {
        #[test]
        fn wrap_is_idempotent(a in -1e6f64..1e6) {
            let w = wrap_angle(a).unwrap();
            proptest::prop_assert!((-180.0..180.0).contains(&w));
            proptest::prop_assert_eq!(wrap_angle(w).unwrap(), w);
            let k = ((a - w) / 360.0).round();
            proptest::prop_assert!((a - w - 360.0 * k).abs() < 1e-6);
        }
    }
}
