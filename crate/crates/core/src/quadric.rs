//! Quadric algebra: coefficient and matrix forms, evaluation, gradients,
//! polar geometry and coarse classification.
//!
//! A quadric is stored as the ten coefficients `(A, B, C, D, E, F, G, H, I, J)`
//! of
//!
//! ```text
//! A x² + B y² + C z² + 2D xy + 2E xz + 2F yz + 2G x + 2H y + 2I z + J = 0
//! ```
//!
//! and as the symmetric 4x4 matrix
//!
//! ```text
//!     | A D E G |
//! Q = | D B F H |
//!     | E F C I |
//!     | G H I J |
//! ```
//!
//! The factor-two convention belongs to the monomial vector built by the
//! fitting code; the stored coefficients are the plain matrix entries.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 3D position or direction.
pub type Point3 = Vector3<f64>;

/// Ten-vector of quadric coefficients.
pub type Coeffs = SVector<f64, 10>;

/// Relative singular-value cutoff used by [`QuadricMatrix::classify`].
pub const CLASSIFY_RANK_TOL: f64 = 1e-7;

/// Relative singular-value cutoff below which the 3x3 block counts as singular.
pub const CENTER_TOL: f64 = 1e-9;

/// Tolerance on `|n| - 1` for oriented points handed to the fitting code.
pub const NORMAL_TOL: f64 = 1e-6;

/// Homogeneous quadric coefficients `(A..J)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadricCoefficients(Coeffs);

impl QuadricCoefficients {
    /// Wraps a coefficient vector, rejecting the zero vector.
    pub fn new(q: Coeffs) -> Result<Self> {
        if q.iter().all(|&c| c == 0.0) || q.iter().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateConfiguration(
                "quadric coefficients must be finite and nonzero".into(),
            ));
        }
        Ok(QuadricCoefficients(q))
    }

    pub fn from_array(a: [f64; 10]) -> Result<Self> {
        Self::new(Coeffs::from_column_slice(&a))
    }

    pub fn from_slice(a: &[f64]) -> Result<Self> {
        if a.len() != 10 {
            return Err(Error::InvalidConfig(format!(
                "expected 10 quadric coefficients, got {}",
                a.len()
            )));
        }
        Self::new(Coeffs::from_column_slice(a))
    }

    /// `x² + y² + z² - 1 = 0`.
    pub fn unit_sphere() -> Self {
        QuadricCoefficients(Coeffs::from_column_slice(&[
            1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0,
        ]))
    }

    /// Sphere `|x - c|² - r² = 0`.
    pub fn sphere(center: &Point3, radius: f64) -> Self {
        QuadricCoefficients(Coeffs::from_column_slice(&[
            1.0,
            1.0,
            1.0,
            0.0,
            0.0,
            0.0,
            -center.x,
            -center.y,
            -center.z,
            center.norm_squared() - radius * radius,
        ]))
    }

    pub fn vector(&self) -> &Coeffs {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 10] {
        let mut out = [0.0; 10];
        out.copy_from_slice(self.0.as_slice());
        out
    }

    pub fn matrix(&self) -> QuadricMatrix {
        let [a, b, c, d, e, f, g, h, i, j] = self.to_array();
        QuadricMatrix(Matrix4::new(
            a, d, e, g, //
            d, b, f, h, //
            e, f, c, i, //
            g, h, i, j,
        ))
    }

    /// Unit Euclidean norm, sign chosen so the largest-magnitude entry is positive.
    pub fn normalized(&self) -> Self {
        QuadricCoefficients(normalize_coeffs(&self.0))
    }

    /// Value of the quadratic form at `x`.
    pub fn algebraic_distance(&self, x: &Point3) -> f64 {
        let [a, b, c, d, e, f, g, h, i, j] = self.to_array();
        let (px, py, pz) = (x.x, x.y, x.z);
        a * px * px
            + b * py * py
            + c * pz * pz
            + 2.0 * (d * px * py + e * px * pz + f * py * pz)
            + 2.0 * (g * px + h * py + i * pz)
            + j
    }

    /// Gradient of the quadratic form at `x`.
    pub fn gradient(&self, x: &Point3) -> Point3 {
        let [a, b, c, d, e, f, g, h, i, _] = self.to_array();
        Point3::new(
            2.0 * (a * x.x + d * x.y + e * x.z + g),
            2.0 * (d * x.x + b * x.y + f * x.z + h),
            2.0 * (e * x.x + f * x.y + c * x.z + i),
        )
    }

    /// Euclidean distance between the normalized forms of two quadrics.
    pub fn distance(&self, other: &Self) -> f64 {
        (self.normalized().0 - other.normalized().0).norm()
    }
}

/// Unit-norm, sign-fixed copy of a coefficient vector.
pub fn normalize_coeffs(q: &Coeffs) -> Coeffs {
    let norm = q.norm();
    if norm == 0.0 {
        return *q;
    }
    let mut pivot = 0;
    for k in 1..10 {
        if q[k].abs() > q[pivot].abs() {
            pivot = k;
        }
    }
    if q[pivot] < 0.0 {
        -q / norm
    } else {
        q / norm
    }
}

/// Symmetric 4x4 matrix form of a quadric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadricMatrix(Matrix4<f64>);

impl QuadricMatrix {
    /// Symmetrizes `m` on construction.
    pub fn new(m: Matrix4<f64>) -> Self {
        QuadricMatrix((m + m.transpose()) * 0.5)
    }

    pub fn as_matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn coefficients(&self) -> Result<QuadricCoefficients> {
        let m = &self.0;
        QuadricCoefficients::from_array([
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 2)],
            m[(0, 3)],
            m[(1, 3)],
            m[(2, 3)],
            m[(3, 3)],
        ])
    }

    pub fn algebraic_distance(&self, x: &Point3) -> f64 {
        let h = x.push(1.0);
        h.dot(&(self.0 * h))
    }

    pub fn gradient(&self, x: &Point3) -> Point3 {
        let h = x.push(1.0);
        (self.0.fixed_view::<3, 4>(0, 0) * h) * 2.0
    }

    /// Polar plane `Q p` of the homogeneous point `p`.
    pub fn polar_plane(&self, p: &Vector4<f64>) -> Result<Plane> {
        let qp = self.0 * p;
        if qp.norm() < 1e-12 * self.0.norm() * p.norm() || qp.norm() == 0.0 {
            return Err(Error::NoPolar);
        }
        Ok(Plane(qp))
    }

    /// Pole of the plane at infinity, when it is a finite point.
    pub fn center(&self) -> Result<Point3> {
        let block: Matrix3<f64> = self.0.fixed_view::<3, 3>(0, 0).into_owned();
        let sv = block.singular_values();
        let largest = sv.max();
        if largest == 0.0 || sv.min() < CENTER_TOL * largest {
            return Err(Error::NotCentral);
        }
        let rhs = -self.0.fixed_view::<3, 1>(0, 3).into_owned();
        block.lu().solve(&rhs).ok_or(Error::NotCentral)
    }

    /// Numerical rank with a relative singular-value cutoff.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let sv = self.0.singular_values();
        let largest = sv.max();
        if largest == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > rel_tol * largest).count()
    }

    pub fn classify(&self) -> QuadricClass {
        if !self.0.iter().all(|v| v.is_finite()) {
            return QuadricClass::Other;
        }
        match self.rank(CLASSIFY_RANK_TOL) {
            0 => QuadricClass::Other,
            1 => QuadricClass::Plane,
            2 => QuadricClass::PlanePair,
            _ => {
                if self.center().is_ok() {
                    QuadricClass::Central
                } else {
                    QuadricClass::NonCentralDegenerate
                }
            }
        }
    }

    /// Rank-1 quadric `Π Πᵀ` of a single plane.
    pub fn from_plane(plane: &Plane) -> Self {
        QuadricMatrix(plane.0 * plane.0.transpose())
    }
}

/// Quadric made of two planes, `Π₁Π₂ᵀ + Π₂Π₁ᵀ`.
pub fn plane_pair(first: &Plane, second: &Plane) -> QuadricMatrix {
    let m = first.0 * second.0.transpose() + second.0 * first.0.transpose();
    QuadricMatrix(m)
}

/// Homogeneous plane `(nx, ny, nz, d)`: points satisfy `n·x + d = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane(pub Vector4<f64>);

impl Plane {
    pub fn new(v: Vector4<f64>) -> Result<Self> {
        if v.iter().all(|&c| c == 0.0) {
            return Err(Error::DegenerateConfiguration("zero plane vector".into()));
        }
        Ok(Plane(v))
    }

    pub fn from_point_normal(point: &Point3, normal: &Point3) -> Self {
        let n = normal.normalize();
        Plane(Vector4::new(n.x, n.y, n.z, -n.dot(point)))
    }

    /// Plane through three points, `None` when they are collinear.
    pub fn through(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        let scale = (b - a).norm() * (c - a).norm();
        if len <= 1e-12 * scale || len == 0.0 {
            return None;
        }
        Some(Self::from_point_normal(a, &(n / len)))
    }

    pub fn vector(&self) -> &Vector4<f64> {
        &self.0
    }

    pub fn normal(&self) -> Point3 {
        self.0.xyz()
    }

    /// Signed point distance, assuming a unit normal.
    pub fn signed_distance(&self, x: &Point3) -> f64 {
        let n = self.0.xyz();
        (n.dot(x) + self.0.w) / n.norm()
    }

    /// Scale-invariant comparison (sign included in the homogeneous scale).
    pub fn same_as(&self, other: &Plane, tol: f64) -> bool {
        let a = self.0.normalize();
        let b = other.0.normalize();
        (a - b).norm() < tol || (a + b).norm() < tol
    }
}

/// A position with its unit surface normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedPoint {
    pub position: Point3,
    pub normal: Point3,
}

impl OrientedPoint {
    pub fn new(position: Point3, normal: Point3) -> Self {
        OrientedPoint { position, normal }
    }

    /// Normalizes `normal`; `None` when it has zero length.
    pub fn with_normalized(position: Point3, normal: Point3) -> Option<Self> {
        let len = normal.norm();
        if len == 0.0 || !len.is_finite() {
            return None;
        }
        Some(OrientedPoint {
            position,
            normal: normal / len,
        })
    }

    pub fn has_unit_normal(&self, tol: f64) -> bool {
        (self.normal.norm() - 1.0).abs() <= tol
    }
}

/// Oriented points plus the pre-normalization diameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<OrientedPoint>,
    pub diameter: f64,
}

impl PointCloud {
    pub fn new(points: Vec<OrientedPoint>) -> Self {
        let diameter = bounding_diameter(points.iter().map(|p| &p.position));
        PointCloud { points, diameter }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// Twice the largest distance from the centroid.
pub fn bounding_diameter<'a>(points: impl Iterator<Item = &'a Point3> + Clone) -> f64 {
    let mut n = 0usize;
    let mut sum = Point3::zeros();
    for p in points.clone() {
        sum += p;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let c = sum / n as f64;
    2.0 * points.map(|p| (p - c).norm()).fold(0.0, f64::max)
}

/// Coarse quadric classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuadricClass {
    /// Rank 1: a single (double) plane.
    Plane,
    /// Rank 2: union of two planes.
    PlanePair,
    /// Finite center: ellipsoids, hyperboloids, cones.
    Central,
    /// No finite center: cylinders, paraboloids and the like.
    NonCentralDegenerate,
    Other,
}

impl fmt::Display for QuadricClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QuadricClass::Plane => "plane",
            QuadricClass::PlanePair => "plane-pair",
            QuadricClass::Central => "central",
            QuadricClass::NonCentralDegenerate => "non-central",
            QuadricClass::Other => "other",
        };
        f.write_str(s)
    }
}
