//! Linear quadric fits from oriented points.
//!
//! Each oriented point contributes one incidence row `v(x)ᵀ q = 0` and three
//! gradient rows tying `∇Q(x)` to the normal. The full system keeps a free
//! scale `α_i` per normal and is solved homogeneously; the regularized
//! system replaces all scales by one common factor and becomes the
//! inhomogeneous `A q = n`. A five-unknown variant does the same for spheres.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{FullSvd, RANK_TOL, SOLVE_TOL};
use crate::quadric::{normalize_coeffs, Coeffs, OrientedPoint, Point3, QuadricCoefficients, NORMAL_TOL};

/// Default weight of the normal constraints.
pub const DEFAULT_OMEGA: f64 = 1.0;

/// Relative gap between the two smallest singular values below which the
/// homogeneous solution is not unique.
const UNIQUENESS_TOL: f64 = 1e-6;

/// Which unknowns a linear system solves for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// All ten quadric coefficients.
    Quadric,
    /// `(A, B, C, D, E)` of `A|x|² + 2(Bx + Cy + Dz) + E = 0`.
    Sphere,
}

impl SystemKind {
    pub fn unknowns(self) -> usize {
        match self {
            SystemKind::Quadric => 10,
            SystemKind::Sphere => 5,
        }
    }

    /// The four constraint rows of one point, gradient rows scaled by `omega`.
    /// Only the first [`unknowns`](Self::unknowns) entries of each row are used.
    #[inline]
    pub fn point_rows(self, x: &Point3, omega: f64) -> [[f64; 10]; 4] {
        match self {
            SystemKind::Quadric => {
                let [g0, g1, g2] = gradient_rows(x);
                [
                    incidence_row(x),
                    scale_row(g0, omega),
                    scale_row(g1, omega),
                    scale_row(g2, omega),
                ]
            }
            SystemKind::Sphere => {
                let w = omega;
                [
                    [x.norm_squared(), 2.0 * x.x, 2.0 * x.y, 2.0 * x.z, 1.0, 0., 0., 0., 0., 0.],
                    [w * 2.0 * x.x, w * 2.0, 0.0, 0.0, 0.0, 0., 0., 0., 0., 0.],
                    [w * 2.0 * x.y, 0.0, w * 2.0, 0.0, 0.0, 0., 0., 0., 0., 0.],
                    [w * 2.0 * x.z, 0.0, 0.0, w * 2.0, 0.0, 0., 0., 0., 0., 0.],
                ]
            }
        }
    }

    /// Right-hand side entries of one point: `(0, ω n)`.
    #[inline]
    pub fn point_rhs(self, n: &Point3, omega: f64) -> [f64; 4] {
        [0.0, omega * n.x, omega * n.y, omega * n.z]
    }
}

#[inline]
fn scale_row(mut r: [f64; 10], s: f64) -> [f64; 10] {
    for v in r.iter_mut() {
        *v *= s;
    }
    r
}

/// Monomial vector `v(x) = (x², y², z², 2xy, 2xz, 2yz, 2x, 2y, 2z, 1)`.
#[inline]
pub fn incidence_row(x: &Point3) -> [f64; 10] {
    let (a, b, c) = (x.x, x.y, x.z);
    [a * a, b * b, c * c, 2.0 * a * b, 2.0 * a * c, 2.0 * b * c, 2.0 * a, 2.0 * b, 2.0 * c, 1.0]
}

/// Jacobian of `v(x)`: row `k` gives `∂/∂x_k` of the quadratic form.
#[inline]
pub fn gradient_rows(x: &Point3) -> [[f64; 10]; 3] {
    let (a, b, c) = (2.0 * x.x, 2.0 * x.y, 2.0 * x.z);
    [
        [a, 0.0, 0.0, b, c, 0.0, 2.0, 0.0, 0.0, 0.0],
        [0.0, b, 0.0, a, 0.0, c, 0.0, 2.0, 0.0, 0.0],
        [0.0, 0.0, c, 0.0, a, b, 0.0, 0.0, 2.0, 0.0],
    ]
}

fn check_normals(points: &[OrientedPoint]) -> Result<()> {
    for (index, p) in points.iter().enumerate() {
        if !p.has_unit_normal(NORMAL_TOL) {
            return Err(Error::NonUnitNormal {
                index,
                norm: p.normal.norm(),
            });
        }
    }
    Ok(())
}

/// Homogeneous system over the coefficients and one scale per normal.
#[derive(Debug, Clone)]
pub struct FullSystem {
    /// `4N x (N + 10)`: N incidence rows, then three gradient rows per point.
    pub matrix: DMatrix<f64>,
    pub n_points: usize,
}

impl FullSystem {
    /// The coefficient columns `[M; ∇M]`, without the scale unknowns.
    pub fn coefficient_block(&self) -> DMatrix<f64> {
        self.matrix.columns(0, 10).into_owned()
    }
}

pub fn build_full_system(points: &[OrientedPoint], omega: f64) -> Result<FullSystem> {
    if points.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    check_normals(points)?;
    let n = points.len();
    let mut a = DMatrix::zeros(4 * n, n + 10);
    for (i, p) in points.iter().enumerate() {
        let inc = incidence_row(&p.position);
        for (c, v) in inc.iter().enumerate() {
            a[(i, c)] = *v;
        }
        let grad = gradient_rows(&p.position);
        for k in 0..3 {
            let row = n + 3 * i + k;
            for (c, v) in grad[k].iter().enumerate() {
                a[(row, c)] = omega * v;
            }
            a[(row, 10 + i)] = -omega * p.normal[k];
        }
    }
    Ok(FullSystem { matrix: a, n_points: n })
}

/// Output of a single fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Unit-norm, sign-fixed coefficients.
    pub q: QuadricCoefficients,
    /// Root-mean-square residual of the solved system.
    pub residual: f64,
    /// Per-point normal scales (full fit only), in the normalization of `q`.
    pub scales: Option<Vec<f64>>,
}

/// Solves the full homogeneous system by SVD.
pub fn fit_full(points: &[OrientedPoint], omega: f64) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: points.len() });
    }
    let system = build_full_system(points, omega)?;
    let svd = FullSvd::new(&system.matrix);
    let sv = &svd.singular_values;
    let k = sv.len();
    if sv[k - 2] - sv[k - 1] < UNIQUENESS_TOL * svd.largest() {
        return Err(Error::DegenerateConfiguration(
            "two smallest singular values coincide; solution is not unique".into(),
        ));
    }
    let v = svd.last_right_vector();
    let q = Coeffs::from_iterator(v.rows(0, 10).iter().copied());
    let normalized = normalize_coeffs(&q);
    // q and normalized differ by a signed scale; carry it over to the alphas.
    let scale = normalized.dot(&q) / q.norm_squared();
    let scales = v.rows(10, points.len()).iter().map(|a| a * scale).collect();
    Ok(FitResult {
        q: QuadricCoefficients::new(normalized)?,
        residual: svd.smallest() / ((4 * points.len()) as f64).sqrt(),
        scales: Some(scales),
    })
}

/// Inhomogeneous system `A q = n` with one common normal scale.
#[derive(Debug, Clone)]
pub struct ApproxSystem {
    /// `4N x 10` (or `4N x 5` for spheres).
    pub matrix: DMatrix<f64>,
    /// Zeros for the incidence rows, then `ω n_i` per point.
    pub rhs: DVector<f64>,
    pub omega: f64,
    pub kind: SystemKind,
}

impl ApproxSystem {
    fn build(points: &[OrientedPoint], omega: f64, kind: SystemKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        check_normals(points)?;
        let n = points.len();
        let cols = kind.unknowns();
        let mut a = DMatrix::zeros(4 * n, cols);
        let mut b = DVector::zeros(4 * n);
        for (i, p) in points.iter().enumerate() {
            let rows = kind.point_rows(&p.position, omega);
            let rhs = kind.point_rhs(&p.normal, omega);
            for c in 0..cols {
                a[(i, c)] = rows[0][c];
            }
            for k in 0..3 {
                let row = n + 3 * i + k;
                for c in 0..cols {
                    a[(row, c)] = rows[k + 1][c];
                }
                b[row] = rhs[k + 1];
            }
        }
        Ok(ApproxSystem { matrix: a, rhs: b, omega, kind })
    }

    pub fn rank(&self) -> usize {
        FullSvd::new(&self.matrix).rank(RANK_TOL)
    }
}

pub fn build_approx_system(points: &[OrientedPoint], omega: f64) -> Result<ApproxSystem> {
    ApproxSystem::build(points, omega, SystemKind::Quadric)
}

/// Least-squares solve of the regularized system.
pub fn fit_approx(points: &[OrientedPoint], omega: f64) -> Result<FitResult> {
    let system = build_approx_system(points, omega)?;
    let raw = solve_full_rank(&system)?;
    let residual = (&system.matrix * &raw - &system.rhs).norm() / ((4 * points.len()) as f64).sqrt();
    let q = QuadricCoefficients::new(Coeffs::from_iterator(raw.iter().copied()))?;
    Ok(FitResult {
        q: q.normalized(),
        residual,
        scales: None,
    })
}

/// Like [`fit_approx`] but keeps the solution's scale and sign, so that
/// `∇Q(x_i) ≈ n_i`.
pub fn fit_approx_oriented(points: &[OrientedPoint], omega: f64) -> Result<QuadricCoefficients> {
    let system = build_approx_system(points, omega)?;
    let raw = solve_full_rank(&system)?;
    QuadricCoefficients::new(Coeffs::from_iterator(raw.iter().copied()))
}

fn solve_full_rank(system: &ApproxSystem) -> Result<DVector<f64>> {
    let svd = FullSvd::new(&system.matrix);
    let cols = system.kind.unknowns();
    let rank = svd.rank(SOLVE_TOL);
    if rank < cols {
        return Err(Error::DegenerateConfiguration(format!(
            "system rank {rank} < {cols}"
        )));
    }
    Ok(svd.solve(&system.rhs, SOLVE_TOL))
}

/// Taubin's fit: minimizes `Σ d_q(x_i)²` subject to `Σ |∇Q(x_i)|² = 1`.
pub fn fit_taubin(points: &[Point3]) -> Result<FitResult> {
    let n = points.len();
    if n < 9 {
        return Err(Error::TooFewPoints { needed: 9, got: n });
    }
    // J has no gradient, so the constraint matrix is singular along it.
    // Minimizing over J in closed form (J = -mean of the other terms)
    // leaves a definite 9x9 pencil.
    let mut m = DMatrix::zeros(n, 9);
    let mut r = DMatrix::<f64>::zeros(9, 9);
    for (i, x) in points.iter().enumerate() {
        let v = incidence_row(x);
        for c in 0..9 {
            m[(i, c)] = v[c];
        }
        for row in gradient_rows(x) {
            for a in 0..9 {
                for b in 0..9 {
                    r[(a, b)] += row[a] * row[b];
                }
            }
        }
    }
    let mean = m.row_mean();
    let mut centered = m.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let p = centered.transpose() * &centered;
    let r_eig = SymmetricEigen::new(r.clone());
    let r_max = r_eig.eigenvalues.max();
    if r_eig.eigenvalues.min() <= 1e-12 * r_max {
        return Err(Error::DegenerateConfiguration(
            "gradient constraint matrix is singular".into(),
        ));
    }
    let chol = r
        .cholesky()
        .ok_or_else(|| Error::DegenerateConfiguration("gradient constraint matrix is not definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("singular Cholesky factor".into()))?;
    let c = &l_inv * &p * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let y = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let rest = l_inv.transpose() * y;
    let j = -(mean * &rest)[(0, 0)];
    let mut q = Coeffs::zeros();
    for k in 0..9 {
        q[k] = rest[k];
    }
    q[9] = j;
    let q = QuadricCoefficients::new(q)?.normalized();
    let residual = (points.iter().map(|x| q.algebraic_distance(x).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok(FitResult { q, residual, scales: None })
}

/// Five-unknown sphere system.
pub fn build_sphere_system(points: &[OrientedPoint], omega: f64) -> Result<ApproxSystem> {
    ApproxSystem::build(points, omega, SystemKind::Sphere)
}

/// Least-squares sphere through oriented points (needs two or more).
pub fn fit_sphere(points: &[OrientedPoint], omega: f64) -> Result<(Point3, f64)> {
    let system = build_sphere_system(points, omega)?;
    let q = solve_full_rank(&system)?;
    sphere_from_coeffs(&[q[0], q[1], q[2], q[3], q[4]])
}

/// Center and radius from `(A, B, C, D, E)`.
pub fn sphere_from_coeffs(q: &[f64; 5]) -> Result<(Point3, f64)> {
    let a = q[0];
    if a == 0.0 || !a.is_finite() {
        return Err(Error::DegenerateConfiguration("sphere with zero quadratic term".into()));
    }
    let center = -Point3::new(q[1], q[2], q[3]) / a;
    let r2 = center.norm_squared() - q[4] / a;
    if r2 < 0.0 {
        return Err(Error::ImaginaryRadius);
    }
    Ok((center, r2.sqrt()))
}

/// Embeds sphere coefficients into the general ten-coefficient form.
pub fn sphere_to_quadric(q: &[f64; 5]) -> Result<QuadricCoefficients> {
    QuadricCoefficients::from_array([q[0], q[0], q[0], 0.0, 0.0, 0.0, q[1], q[2], q[3], q[4]])
}
