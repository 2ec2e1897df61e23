//! Hypothesis distances, scoring and two-stage agglomeration.

use nalgebra::Matrix4;

use crate::linalg::{pseudo_inverse, SOLVE_TOL};
use crate::quadric::{normalize_coeffs, Coeffs, OrientedPoint, QuadricCoefficients};

use super::DetectionHypothesis;

/// Whether the fitted gradient at `pt` points along its normal: the
/// normalized gradient dotted with the normal must exceed `tau_n`.
pub fn gradient_agreement(q: &QuadricCoefficients, pt: &OrientedPoint, tau_n: f64) -> bool {
    let g = q.gradient(&pt.position);
    let len = g.norm();
    if len < 1e-12 {
        return false;
    }
    g.dot(&pt.normal) / len > tau_n
}

/// Incidence and normal compatibility of one sample with a quadric:
/// `|d_q(x)| < tau` and `|∇̂Q(x) · n| > tau_n`.
///
/// Coefficients are sign-normalized, so the gradient orientation carries no
/// information and the normal test is unsigned.
#[inline]
pub fn compatible(q: &QuadricCoefficients, pt: &OrientedPoint, tau: f64, tau_n: f64) -> bool {
    if q.algebraic_distance(&pt.position).abs() >= tau {
        return false;
    }
    let g = q.gradient(&pt.position);
    let len = g.norm();
    if len < 1e-12 {
        return false;
    }
    (g.dot(&pt.normal) / len).abs() > tau_n
}

/// Fraction of samples incident to and normal-compatible with `q`.
pub fn score(q: &QuadricCoefficients, samples: &[OrientedPoint], tau: f64, tau_n: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples.iter().filter(|s| compatible(q, s, tau, tau_n)).count();
    hits as f64 / samples.len() as f64
}

/// Indices of the samples compatible with `q`.
pub fn support(q: &QuadricCoefficients, samples: &[OrientedPoint], tau: f64, tau_n: f64) -> Vec<usize> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| compatible(q, s, tau, tau_n))
        .map(|(i, _)| i)
        .collect()
}

/// Fine distance: `‖Q₁Q₂⁺ - I‖_F` when the normalized coefficient vectors
/// are within `gate` in L1, `+∞` otherwise.
pub fn d_close(q1: &QuadricCoefficients, q2: &QuadricCoefficients, gate: f64) -> f64 {
    let a = q1.normalized();
    let b = q2.normalized();
    if (a.vector() - b.vector()).abs().sum() >= gate {
        return f64::INFINITY;
    }
    let m1 = *a.matrix().as_matrix();
    let m2 = b.matrix().as_matrix().clone_owned();
    let dyn2 = nalgebra::DMatrix::from_column_slice(4, 4, m2.as_slice());
    let pinv = pseudo_inverse(&dyn2, SOLVE_TOL);
    let pinv = Matrix4::from_column_slice(pinv.as_slice());
    (m1 * pinv - Matrix4::identity()).norm()
}

/// Coarse distance over scene samples: one minus the fraction of samples
/// that are compatible with both quadrics.
pub fn d_far(
    q1: &QuadricCoefficients,
    q2: &QuadricCoefficients,
    samples: &[OrientedPoint],
    tau: f64,
    tau_n: f64,
) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let joint = samples
        .iter()
        .filter(|s| compatible(q1, s, tau, tau_n) && compatible(q2, s, tau, tau_n))
        .count();
    1.0 - joint as f64 / samples.len() as f64
}

/// [`d_far`] evaluated on the samples compatible with at least one of the
/// two quadrics, from precomputed sorted support lists.
pub fn d_far_on_union(s1: &[usize], s2: &[usize]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut both, mut union) = (0usize, 0usize);
    while i < s1.len() || j < s2.len() {
        union += 1;
        match (s1.get(i), s2.get(j)) {
            (Some(a), Some(b)) if a == b => {
                both += 1;
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a < b => i += 1,
            (Some(_), Some(_)) => j += 1,
            (Some(_), None) => i += 1,
            (None, _) => j += 1,
        }
    }
    if union == 0 {
        1.0
    } else {
        1.0 - both as f64 / union as f64
    }
}

/// Parameters of [`cluster_hypotheses`].
#[derive(Debug, Clone, Copy)]
pub struct ClusterParams {
    pub tau: f64,
    pub tau_n: f64,
    /// L1 gate of [`d_close`].
    pub close_gate: f64,
    pub eps_close: f64,
    pub eps_far: f64,
}

/// Two-stage single-linkage agglomeration: first under [`d_close`], then
/// under [`d_far`] restricted to the union of the two supports. Cluster
/// representatives are normalized means of the member coefficients and
/// carry the summed votes. The result is scored on `samples` and sorted.
pub fn cluster_hypotheses(
    hyps: Vec<DetectionHypothesis>,
    samples: &[OrientedPoint],
    params: &ClusterParams,
) -> Vec<DetectionHypothesis> {
    if hyps.is_empty() {
        return hyps;
    }
    let n = hyps.len();
    let mut links = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if links.find(i) == links.find(j) {
                continue;
            }
            if d_close(&hyps[i].q, &hyps[j].q, params.close_gate) < params.eps_close {
                links.union(i, j);
            }
        }
    }
    let stage1 = merge(hyps, &mut links, samples, params);

    let supports: Vec<Vec<usize>> = stage1
        .iter()
        .map(|h| support(&h.q, samples, params.tau, params.tau_n))
        .collect();
    let n = stage1.len();
    let mut links = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if links.find(i) == links.find(j) {
                continue;
            }
            if d_far_on_union(&supports[i], &supports[j]) < params.eps_far {
                links.union(i, j);
            }
        }
    }
    let mut out = merge(stage1, &mut links, samples, params);
    sort_hypotheses(&mut out);
    out
}

/// Non-increasing score, then votes, then basis order.
pub fn sort_hypotheses(hyps: &mut [DetectionHypothesis]) {
    hyps.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.votes.cmp(&a.votes))
            .then(a.order.cmp(&b.order))
    });
}

fn merge(
    hyps: Vec<DetectionHypothesis>,
    links: &mut UnionFind,
    samples: &[OrientedPoint],
    params: &ClusterParams,
) -> Vec<DetectionHypothesis> {
    let n = hyps.len();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = links.find(i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    groups
        .into_iter()
        .map(|members| {
            if members.len() == 1 {
                let mut h = hyps[members[0]].clone();
                h.support_count = support(&h.q, samples, params.tau, params.tau_n).len();
                h.score = h.support_count as f64 / samples.len().max(1) as f64;
                return h;
            }
            let reference = *hyps[members[0]].q.vector();
            let mut sum = Coeffs::zeros();
            let mut votes = 0;
            let mut lead = members[0];
            for &m in &members {
                let v = hyps[m].q.vector();
                sum += if v.dot(&reference) < 0.0 { -v } else { *v };
                votes += hyps[m].votes;
                if hyps[m].votes > hyps[lead].votes {
                    lead = m;
                }
            }
            let q = QuadricCoefficients::new(normalize_coeffs(&sum)).unwrap_or(hyps[lead].q);
            let supp = support(&q, samples, params.tau, params.tau_n).len();
            DetectionHypothesis {
                q,
                votes,
                score: supp as f64 / samples.len().max(1) as f64,
                support_count: supp,
                basis: hyps[lead].basis.clone(),
                order: members.iter().map(|&m| hyps[m].order).min().unwrap_or(0),
            }
        })
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, so groups are keyed by their first member
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
