//! Vectors, wrapped cosine-angle arithmetic, ULA steering vectors and
//! segment/box occlusion.
//!
//! Every angle in this crate is carried as the cosine of the physical angle
//! between an array axis and a propagation direction. Cosines live on the
//! half-open interval `[-1, 1)` and add/subtract modulo 2, which matches the
//! 2-periodicity of a half-wavelength ULA response `e^{jπkψ}`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `f64` strictly below one.
pub const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    /// Componentwise clamp into the box `[lo, hi]`.
    pub fn clamp(self, lo: Vec3, hi: Vec3) -> Vec3 {
        Vec3::new(
            self.x.clamp(lo.x, hi.x),
            self.y.clamp(lo.y, hi.y),
            self.z.clamp(lo.z, hi.z),
        )
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Cosine of a physical angle, kept in `[-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CosAngle(f64);

impl CosAngle {
    pub const ZERO: CosAngle = CosAngle(0.0);

    /// Reduces an arbitrary real onto `[-1, 1)` modulo 2.
    pub fn wrap(value: f64) -> Self {
        let mut r = (value + 1.0).rem_euclid(2.0) - 1.0;
        // rem_euclid can round up to exactly 2 for tiny negative inputs
        if r >= 1.0 {
            r -= 2.0;
        }
        CosAngle(r)
    }

    /// Takes a geometric cosine in `[-1, 1]`; an exact `+1` maps to the
    /// largest value below one instead of wrapping to `-1`.
    pub fn from_cosine(c: f64) -> Self {
        if c >= 1.0 {
            CosAngle(BELOW_ONE)
        } else if c < -1.0 {
            CosAngle(-1.0)
        } else {
            CosAngle(c)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<CosAngle> for f64 {
    fn from(a: CosAngle) -> f64 {
        a.0
    }
}

impl fmt::Display for CosAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `a ⊖ b = ((a - b + 1) mod 2) - 1`.
pub fn cos_sub(a: impl Into<f64>, b: impl Into<f64>) -> CosAngle {
    CosAngle::wrap(a.into() - b.into())
}

/// `a ⊕ b = ((a + b + 1) mod 2) - 1`.
pub fn cos_add(a: impl Into<f64>, b: impl Into<f64>) -> CosAngle {
    CosAngle::wrap(a.into() + b.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub size: usize,
    pub direction: Vec3,
}

impl ArrayGeometry {
    /// Normalizes `direction`; rejects empty arrays and zero directions.
    pub fn new(size: usize, direction: Vec3) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("array size must be at least 1".into()));
        }
        let direction = direction
            .normalized()
            .ok_or(Error::DegenerateGeometry("array direction has zero length"))?;
        Ok(Self { size, direction })
    }
}

/// ULA response `[1, e^{jπψ}, …, e^{jπ(n-1)ψ}]`.
pub fn steering_vector(n: usize, psi: impl Into<f64>) -> Vec<Complex64> {
    let psi = psi.into();
    (0..n)
        .map(|k| Complex64::from_polar(1.0, PI * k as f64 * psi))
        .collect()
}

/// Cosine between `axis` and the direction from `anchor_pos` to `p`.
pub fn cosine_of_direction(p: Vec3, anchor_pos: Vec3, axis: Vec3) -> Result<CosAngle> {
    let d = p - anchor_pos;
    let r = d.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::DegenerateGeometry("coincident points"));
    }
    Ok(CosAngle::from_cosine(d.dot(axis) / r))
}

/// Axis-aligned cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl Cuboid {
    pub fn new(center: Vec3, half_extents: Vec3) -> Result<Self> {
        if !(half_extents.x > 0.0 && half_extents.y > 0.0 && half_extents.z > 0.0) {
            return Err(Error::InvalidArgument(
                "cuboid half extents must be positive".into(),
            ));
        }
        Ok(Self {
            center,
            half_extents,
        })
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.half_extents
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.half_extents
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (0..3).all(|k| p.component(k) >= lo.component(k) && p.component(k) <= hi.component(k))
    }

    /// Overlap of the footprints on the floor plane (x/y only).
    pub fn footprint_overlaps(&self, other: &Cuboid) -> bool {
        (self.center.x - other.center.x).abs() < self.half_extents.x + other.half_extents.x
            && (self.center.y - other.center.y).abs() < self.half_extents.y + other.half_extents.y
    }
}

const SLAB_TOLERANCE: f64 = 1e-12;

/// Slab test of the open segment `(a, b)` against the closed box.
///
/// Faces are inflated by 1e-12 so grazing contacts count as blocking.
pub fn segment_intersects_box(a: Vec3, b: Vec3, cuboid: &Cuboid) -> bool {
    let d = b - a;
    let (lo, hi) = (cuboid.min(), cuboid.max());
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for k in 0..3 {
        let (ak, dk) = (a.component(k), d.component(k));
        let (lk, hk) = (lo.component(k) - SLAB_TOLERANCE, hi.component(k) + SLAB_TOLERANCE);
        if dk.abs() < f64::MIN_POSITIVE {
            if ak < lk || ak > hk {
                return false;
            }
            continue;
        }
        let (mut tn, mut tf) = ((lk - ak) / dk, (hk - ak) / dk);
        if tn > tf {
            std::mem::swap(&mut tn, &mut tf);
        }
        t0 = t0.max(tn);
        t1 = t1.min(tf);
        if t0 > t1 {
            return false;
        }
    }
    // touching only at an endpoint does not count for the open segment
    t1 > 0.0 && t0 < 1.0 && !(t0 == t1 && (t0 == 0.0 || t1 == 1.0))
}
