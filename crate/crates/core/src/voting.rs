//! Null-space parameterization of under-determined fits and local voting.
//!
//! A basis of too few oriented points leaves the regularized system with a
//! kernel, so its solutions form the affine family `q = p + N λ`. Each
//! further scene point pins down `λ`; points on the same surface as the
//! basis agree on it, which is what the accumulator collects.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fitting::{sphere_to_quadric, ApproxSystem, SystemKind};
use crate::linalg::{FullSvd, RANK_TOL, SOLVE_TOL};
use crate::quadric::{Coeffs, OrientedPoint, QuadricCoefficients};

/// Default number of θ bins (2° each).
pub const DEFAULT_BIN_COUNT: usize = 90;

/// `p + N λ` together with the constraint setup that produced it.
#[derive(Debug, Clone)]
pub struct ParametricSolution {
    /// Minimum-norm least-squares solution.
    pub particular: DVector<f64>,
    /// Orthonormal kernel basis, one column per free parameter.
    pub null_basis: DMatrix<f64>,
    pub kind: SystemKind,
    pub omega: f64,
    p: [f64; 10],
    mu: [f64; 10],
    p_norm: f64,
}

impl ParametricSolution {
    pub fn null_dim(&self) -> usize {
        self.null_basis.ncols()
    }

    /// Solution vector at the given null-space coordinates.
    pub fn solution_at(&self, lambda: &[f64]) -> DVector<f64> {
        assert_eq!(lambda.len(), self.null_dim(), "wrong number of coefficients");
        let mut q = self.particular.clone();
        for (k, l) in lambda.iter().enumerate() {
            q.axpy(*l, &self.null_basis.column(k), 1.0);
        }
        q
    }

    /// Unnormalized ten-coefficient quadric at `λ` (1D kernel), keeping the
    /// scale and orientation the system imposes on the gradient.
    pub fn oriented_quadric(&self, lambda: f64) -> Coeffs {
        let mut q = Coeffs::zeros();
        match self.kind {
            SystemKind::Quadric => {
                for k in 0..10 {
                    q[k] = self.p[k] + lambda * self.mu[k];
                }
            }
            SystemKind::Sphere => {
                let s: Vec<f64> = (0..5).map(|k| self.p[k] + lambda * self.mu[k]).collect();
                q[0] = s[0];
                q[1] = s[0];
                q[2] = s[0];
                q[6] = s[1];
                q[7] = s[2];
                q[8] = s[3];
                q[9] = s[4];
            }
        }
        q
    }

    /// Normalized quadric at `λ` for a one-dimensional kernel.
    pub fn quadric_at(&self, lambda: f64) -> Result<QuadricCoefficients> {
        match self.kind {
            SystemKind::Quadric => Ok(QuadricCoefficients::new(self.oriented_quadric(lambda))?.normalized()),
            SystemKind::Sphere => {
                let s = self.solution_at(&[lambda]);
                Ok(sphere_to_quadric(&[s[0], s[1], s[2], s[3], s[4]])?.normalized())
            }
        }
    }

    pub fn particular_norm(&self) -> f64 {
        self.p_norm
    }
}

/// Rank a basis of `n` points must reach to be usable.
fn expected_rank(kind: SystemKind, n: usize) -> usize {
    match kind {
        SystemKind::Quadric => match n {
            1 => 4,
            2 => 7,
            3 => 9,
            _ => 10,
        },
        SystemKind::Sphere => (4 * n).min(5),
    }
}

/// Splits the solution set of an under-determined system into `p + N λ`.
pub fn decompose(system: &ApproxSystem) -> Result<ParametricSolution> {
    let cols = system.kind.unknowns();
    let n_points = system.matrix.nrows() / 4;
    let svd = FullSvd::new(&system.matrix);
    let rank = svd.rank(RANK_TOL);
    let expected = expected_rank(system.kind, n_points);
    if rank < expected {
        return Err(Error::DegenerateBasis { rank, expected });
    }
    if rank >= cols {
        return Err(Error::DegenerateConfiguration(
            "system is fully determined; nothing to parameterize".into(),
        ));
    }
    let particular = svd.solve(&system.rhs, RANK_TOL);
    let null_basis = svd.null_space(rank);
    let mut p = [0.0; 10];
    let mut mu = [0.0; 10];
    for k in 0..cols {
        p[k] = particular[k];
        mu[k] = null_basis[(k, 0)];
    }
    let p_norm = particular.norm();
    Ok(ParametricSolution {
        particular,
        null_basis,
        kind: system.kind,
        omega: system.omega,
        p,
        mu,
        p_norm,
    })
}

/// Least-squares null-space coordinates that fit `extra` as well: solves
/// `(A_k N) λ = n_k - A_k p`.
pub fn lambda_general(sol: &ParametricSolution, extra: &[OrientedPoint]) -> Result<DVector<f64>> {
    if extra.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let cols = sol.kind.unknowns();
    let mut a = DMatrix::zeros(4 * extra.len(), cols);
    let mut b = DVector::zeros(4 * extra.len());
    for (i, pt) in extra.iter().enumerate() {
        let rows = sol.kind.point_rows(&pt.position, sol.omega);
        let rhs = sol.kind.point_rhs(&pt.normal, sol.omega);
        for r in 0..4 {
            for c in 0..cols {
                a[(4 * i + r, c)] = rows[r][c];
            }
            b[4 * i + r] = rhs[r];
        }
    }
    let m = &a * &sol.null_basis;
    let r = b - &a * &sol.particular;
    let svd = FullSvd::new(&m);
    if svd.largest() < 1e-12 || svd.rank(SOLVE_TOL) < sol.null_dim() {
        return Err(Error::RankDeficient);
    }
    Ok(svd.solve(&r, SOLVE_TOL))
}

/// Closed-form `λ` for a one-dimensional kernel and one extra point:
/// `λ = (A₁μ)·(n₁ - A₁p) / |A₁μ|²`.
#[inline]
pub fn lambda_fast_1d(sol: &ParametricSolution, extra: &OrientedPoint) -> Result<f64> {
    if sol.null_dim() != 1 {
        return Err(Error::DegenerateConfiguration(format!(
            "closed-form λ needs a 1D kernel, got {}",
            sol.null_dim()
        )));
    }
    let cols = sol.kind.unknowns();
    let rows = sol.kind.point_rows(&extra.position, sol.omega);
    let rhs = sol.kind.point_rhs(&extra.normal, sol.omega);
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..4 {
        let row = &rows[r];
        let mut a_mu = 0.0;
        let mut a_p = 0.0;
        for c in 0..cols {
            a_mu += row[c] * sol.mu[c];
            a_p += row[c] * sol.p[c];
        }
        num += a_mu * (rhs[r] - a_p);
        den += a_mu * a_mu;
    }
    if den.sqrt() < 1e-12 {
        return Err(Error::RankDeficient);
    }
    Ok(num / den)
}

/// Maps `λ` to a bounded angle and its accumulator bin.
///
/// `θ` is the angle between the particular solution `p` and `p + λμ` inside
/// the plane they span (`μ ⊥ p`, `|μ| = 1`), i.e. `atan2(λ, |p|)`. It lies in
/// `(-π/2, π/2)`, is monotone in `λ`, and equal angles mean equal quadrics
/// up to scale.
pub fn theta_quantize(lambda: f64, sol: &ParametricSolution, bin_count: usize) -> (f64, usize) {
    let scale = if sol.p_norm > 0.0 { sol.p_norm } else { 1.0 };
    let theta = if lambda == 0.0 { 0.0 } else { lambda.atan2(scale) };
    (theta, theta_bin(theta, bin_count))
}

pub fn theta_bin(theta: f64, bin_count: usize) -> usize {
    let t = ((theta + FRAC_PI_2) / std::f64::consts::PI * bin_count as f64).floor();
    if t.is_nan() || t < 0.0 {
        0
    } else {
        (t as usize).min(bin_count - 1)
    }
}

/// Histogram over θ bins with the raw `λ` values behind every vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    bins: Vec<u32>,
    lambdas: Vec<Vec<f64>>,
}

/// The winning bin of an accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub bin: usize,
    pub votes: usize,
    /// Mean of the `λ` values in the bin.
    pub lambda: f64,
}

impl Accumulator {
    pub fn new(bin_count: usize) -> Self {
        assert!(bin_count > 0, "bin count must be positive");
        Accumulator {
            bins: vec![0; bin_count],
            lambdas: vec![Vec::new(); bin_count],
        }
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn vote(&mut self, bin: usize, lambda: f64) {
        self.bins[bin] += 1;
        self.lambdas[bin].push(lambda);
    }

    pub fn counts(&self) -> &[u32] {
        &self.bins
    }

    pub fn lambdas(&self, bin: usize) -> &[f64] {
        &self.lambdas[bin]
    }

    pub fn total(&self) -> usize {
        self.lambdas.iter().map(Vec::len).sum()
    }

    /// Highest bin; ties go to the lowest index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0u32);
        for (i, &c) in self.bins.iter().enumerate() {
            if c > best.1 {
                best = (i, c);
            }
        }
        (best.0, best.1 as usize)
    }

    pub fn peak(&self, s_min: usize) -> Result<Peak> {
        let (bin, votes) = self.argmax();
        if votes == 0 || votes < s_min {
            return Err(Error::NoConsensus { votes, needed: s_min });
        }
        let list = &self.lambdas[bin];
        let lambda = list.iter().sum::<f64>() / list.len() as f64;
        Ok(Peak { bin, votes, lambda })
    }
}

/// Quadric of the accumulator's consensus bin, if it has `s_min` votes.
pub fn extract_peak(acc: &Accumulator, s_min: usize, sol: &ParametricSolution) -> Result<QuadricCoefficients> {
    let peak = acc.peak(s_min)?;
    sol.quadric_at(peak.lambda)
}

/// Fixed-size subset of scene points that anchors one voting space.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub points: Vec<OrientedPoint>,
    pub indices: Vec<usize>,
    pub hash: u64,
}

impl Basis {
    pub fn new(points: Vec<OrientedPoint>, indices: Vec<usize>) -> Self {
        let hash = basis_hash(&indices);
        Basis { points, indices, hash }
    }
}

/// Order-independent 64-bit key of an index set.
pub fn basis_hash(indices: &[usize]) -> u64 {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let mut h = 0x9e37_79b9_7f4a_7c15u64 ^ sorted.len() as u64;
    for &i in &sorted {
        h = splitmix(h ^ (i as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
