//! Multi-quadric detection: RANSAC over 3-point bases with local voting
//! along each basis's one-dimensional solution family.

pub mod basis;
pub mod cluster;
pub mod index;
pub mod preprocess;
pub mod sphere;

use nalgebra::Matrix4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{build_approx_system, fit_taubin};
use crate::quadric::{OrientedPoint, Point3, PointCloud, QuadricCoefficients, QuadricMatrix};
use crate::voting::{decompose, lambda_fast_1d, theta_quantize, Accumulator, Basis, ParametricSolution};

pub use basis::select_basis;
pub use cluster::{
    cluster_hypotheses, compatible, d_close, d_far, d_far_on_union, gradient_agreement, score, sort_hypotheses,
    support, ClusterParams,
};
pub use index::SceneIndex;
pub use preprocess::{
    don_filter, estimate_normals, normalize_unit_ball, remove_planes, voxel_downsample, NormalOrientation,
    Similarity,
};
pub use sphere::{detect_spheres, sphere_distance, sphere_point_distance, SphereDetection};

/// Detector thresholds. Distances are fractions of the cloud diameter unless
/// noted; `tau` is an algebraic distance in the unit-ball frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub tau_s: f64,
    pub omega: f64,
    pub tau: f64,
    pub tau_n: f64,
    pub s_min: usize,
    pub bin_count: usize,
    pub max_bases: usize,
    pub basis_min_dist: f64,
    pub basis_max_dist: f64,
    /// Minimum pairwise angle between basis normals, degrees.
    pub min_normal_angle: f64,
    pub max_attempts: usize,
    pub normal_k: usize,
    pub don_radius_small: f64,
    pub don_radius_large: f64,
    pub don_threshold: f64,
    pub use_don: bool,
    pub remove_planes: bool,
    pub eps_close: f64,
    pub eps_far: f64,
    /// L1 gate of the fine clustering distance.
    pub close_gate: f64,
    /// Taubin re-fits of each peak quadric to its local supporters.
    pub refine_iterations: usize,
    /// Hypotheses need this many samples not explained by better ones.
    pub min_support: usize,
    /// Share of a hypothesis's support that must be unclaimed.
    pub min_fresh_fraction: f64,
    /// Minimum score, i.e. share of all samples a hypothesis must explain.
    pub min_score: f64,
    /// Merge distance for sphere hypotheses.
    pub sphere_merge: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            tau_s: 0.03,
            omega: 1.0,
            tau: 0.03,
            tau_n: 0.85,
            s_min: 10,
            bin_count: crate::voting::DEFAULT_BIN_COUNT,
            max_bases: 400,
            basis_min_dist: 0.05,
            basis_max_dist: 0.5,
            min_normal_angle: 10.0,
            max_attempts: 20000,
            normal_k: 12,
            don_radius_small: 0.05,
            don_radius_large: 0.15,
            don_threshold: 0.25,
            use_don: false,
            remove_planes: false,
            eps_close: 0.5,
            eps_far: 0.3,
            close_gate: 0.3,
            refine_iterations: 5,
            min_support: 10,
            min_fresh_fraction: 0.5,
            min_score: 0.05,
            sphere_merge: 0.05,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_s", self.tau_s),
            ("omega", self.omega),
            ("tau", self.tau),
            ("tau_n", self.tau_n),
            ("basis_min_dist", self.basis_min_dist),
            ("basis_max_dist", self.basis_max_dist),
            ("don_radius_small", self.don_radius_small),
            ("don_radius_large", self.don_radius_large),
            ("don_threshold", self.don_threshold),
            ("eps_close", self.eps_close),
            ("eps_far", self.eps_far),
            ("close_gate", self.close_gate),
            ("sphere_merge", self.sphere_merge),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.s_min == 0 || self.bin_count == 0 || self.max_attempts == 0 {
            return Err(Error::InvalidConfig("s_min, bin_count and max_attempts must be positive".into()));
        }
        if self.normal_k < 3 {
            return Err(Error::InvalidConfig("normal_k must be at least 3".into()));
        }
        if self.basis_min_dist >= self.basis_max_dist {
            return Err(Error::InvalidConfig("basis_min_dist must be below basis_max_dist".into()));
        }
        if self.don_radius_small >= self.don_radius_large {
            return Err(Error::InvalidConfig("don_radius_small must be below don_radius_large".into()));
        }
        if !(0.0..=1.0).contains(&self.min_fresh_fraction) || !(0.0..=1.0).contains(&self.min_score) {
            return Err(Error::InvalidConfig("min_fresh_fraction and min_score must be in [0, 1]".into()));
        }
        if !(0.0..=180.0).contains(&self.min_normal_angle) {
            return Err(Error::InvalidConfig("min_normal_angle must be in [0, 180]".into()));
        }
        Ok(())
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            tau: self.tau,
            tau_n: self.tau_n,
            close_gate: self.close_gate,
            eps_close: self.eps_close,
            eps_far: self.eps_far,
        }
    }
}

/// One detected quadric.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionHypothesis {
    pub q: QuadricCoefficients,
    pub votes: usize,
    /// Fraction of scene samples supporting `q`.
    pub score: f64,
    pub basis: Basis,
    pub support_count: usize,
    /// Position of the basis in the sampling sequence.
    pub order: usize,
}

/// Quadric in the original frame given `q` in the frame
/// `x' = (x - center) / scale`: `Q = Tᵀ Q' T`.
pub fn transform_quadric(q: &QuadricCoefficients, center: &Point3, scale: f64) -> QuadricCoefficients {
    let mut t = Matrix4::identity();
    for k in 0..3 {
        t[(k, k)] = 1.0 / scale;
        t[(k, 3)] = -center[k] / scale;
    }
    let m = t.transpose() * q.matrix().as_matrix() * t;
    QuadricMatrix::new(m)
        .coefficients()
        .map(|c| c.normalized())
        .unwrap_or(*q)
}

/// Maps a normalized-frame quadric back through `similarity`.
pub fn denormalize(q: &QuadricCoefficients, similarity: &Similarity) -> QuadricCoefficients {
    transform_quadric(q, &similarity.center, similarity.scale)
}

/// A preprocessed scene: normalized, downsampled, filtered.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub cloud: PointCloud,
    pub similarity: Similarity,
}

/// Normalization, downsampling and the optional plane and DoN filters.
pub fn prepare(cloud: &PointCloud, config: &DetectorConfig) -> Result<PreparedScene> {
    config.validate()?;
    let (normalized, similarity) = normalize_unit_ball(cloud)?;
    let mut scene = voxel_downsample(&normalized, config.tau_s);
    scene.diameter = crate::quadric::bounding_diameter(scene.points.iter().map(|p| &p.position));
    if config.remove_planes {
        scene = remove_planes(&scene, config).0;
    }
    if config.use_don {
        let d = scene.diameter;
        scene = don_filter(&scene, config.don_radius_small * d, config.don_radius_large * d, config.don_threshold)?;
    }
    Ok(PreparedScene { cloud: scene, similarity })
}

/// Draws bases until `max_bases` are accepted or sampling runs dry.
pub fn sample_bases(index: &mut SceneIndex, samples: &[OrientedPoint], config: &DetectorConfig) -> Vec<(Basis, ParametricSolution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    while out.len() < config.max_bases {
        match select_basis(index, samples, config, &mut rng) {
            Ok(b) => out.push(b),
            Err(_) => break,
        }
    }
    out
}

/// Combined RANSAC and local voting over a preprocessed cloud.
///
/// Basis sampling is sequential and seeded; the per-basis voting runs in
/// parallel and is collected in sampling order, so the result does not
/// depend on the thread count.
pub fn detect(cloud: &PointCloud, config: &DetectorConfig) -> Result<Vec<DetectionHypothesis>> {
    config.validate()?;
    if cloud.len() < 3 {
        return Ok(Vec::new());
    }
    let samples = &cloud.points;
    let diameter = crate::quadric::bounding_diameter(samples.iter().map(|p| &p.position));
    let mut index = SceneIndex::new(cloud.positions(), (config.basis_max_dist * diameter / 4.0).max(1e-9));
    let bases = sample_bases(&mut index, samples, config);
    let index = index;
    let radius = config.basis_max_dist * diameter;

    let candidates: Vec<DetectionHypothesis> = bases
        .par_iter()
        .enumerate()
        .filter_map(|(order, (basis, sol))| vote_basis(&index, samples, basis, sol, radius, order, config))
        .collect();

    let clustered = cluster_hypotheses(candidates, samples, &config.cluster_params());
    Ok(verify(clustered, samples, config))
}

/// Votes of the scene points near the first basis point; returns the peak
/// quadric when it gathers `s_min` votes.
pub fn vote_basis(
    index: &SceneIndex,
    samples: &[OrientedPoint],
    basis: &Basis,
    sol: &ParametricSolution,
    radius: f64,
    order: usize,
    config: &DetectorConfig,
) -> Option<DetectionHypothesis> {
    let anchor = basis.points[0].position;
    let neighbors = index.radius(&anchor, radius);
    let mut acc = Accumulator::new(config.bin_count);
    let mut voters: Vec<(usize, usize)> = Vec::new();
    for &i in &neighbors {
        if basis.indices.contains(&i) {
            continue;
        }
        let pt = &samples[i];
        let Ok(lambda) = lambda_fast_1d(sol, pt) else { continue };
        let Ok(candidate) = QuadricCoefficients::new(sol.oriented_quadric(lambda)) else { continue };
        if !gradient_agreement(&candidate, pt, config.tau_n) {
            continue;
        }
        let (_, bin) = theta_quantize(lambda, sol, config.bin_count);
        acc.vote(bin, lambda);
        voters.push((bin, i));
    }
    let peak = acc.peak(config.s_min).ok()?;
    let mut q = sol.quadric_at(peak.lambda).ok()?;
    if config.refine_iterations > 0 {
        let mut seeds: Vec<usize> = voters.iter().filter(|(b, _)| *b == peak.bin).map(|(_, i)| *i).collect();
        seeds.extend(basis.indices.iter().copied());
        q = refine(q, &seeds, &neighbors, samples, config);
    }
    Some(DetectionHypothesis {
        q,
        votes: peak.votes,
        score: 0.0,
        basis: basis.clone(),
        support_count: 0,
        order,
    })
}

/// Taubin re-fits to the consensus set, then to the local supporters.
/// A re-fit is kept only when it does not lose local [`quality`].
fn refine(
    start: QuadricCoefficients,
    seeds: &[usize],
    neighbors: &[usize],
    samples: &[OrientedPoint],
    config: &DetectorConfig,
) -> QuadricCoefficients {
    let local_support = |q: &QuadricCoefficients| -> Vec<usize> {
        neighbors
            .iter()
            .copied()
            .filter(|&i| compatible(q, &samples[i], config.tau, config.tau_n))
            .collect()
    };
    let mut best = start;
    let mut best_quality = quality(&best, neighbors, samples, config);
    let mut fit_set = seeds.to_vec();
    for _ in 0..config.refine_iterations {
        let pts: Vec<Point3> = fit_set.iter().map(|&i| samples[i].position).collect();
        let Ok(fit) = fit_taubin(&pts) else { break };
        let q = quality(&fit.q, neighbors, samples, config);
        if q < best_quality {
            break;
        }
        best = fit.q;
        best_quality = q;
        fit_set = local_support(&best);
    }
    best
}

/// Truncated quadratic consensus: each compatible sample adds `1 - (d/τ)²`.
pub fn quality(q: &QuadricCoefficients, indices: &[usize], samples: &[OrientedPoint], config: &DetectorConfig) -> f64 {
    indices
        .iter()
        .filter(|&&i| compatible(q, &samples[i], config.tau, config.tau_n))
        .map(|&i| 1.0 - (q.algebraic_distance(&samples[i].position) / config.tau).powi(2))
        .sum()
}

/// Re-fits every hypothesis to its scene-wide support, then keeps them in
/// [`quality`] order while each still explains `min_support` samples (and
/// `min_fresh_fraction` of its support, and `min_score` of the scene) that
/// no better one has claimed.
pub fn verify(hyps: Vec<DetectionHypothesis>, samples: &[OrientedPoint], config: &DetectorConfig) -> Vec<DetectionHypothesis> {
    let everything: Vec<usize> = (0..samples.len()).collect();
    let hyps: Vec<DetectionHypothesis> = hyps
        .into_par_iter()
        .filter(|h| h.votes >= config.s_min)
        .map(|mut h| {
            if config.refine_iterations > 0 {
                let seeds = support(&h.q, samples, config.tau, config.tau_n);
                h.q = refine(h.q, &seeds, &everything, samples, config);
            }
            h.support_count = support(&h.q, samples, config.tau, config.tau_n).len();
            h.score = h.support_count as f64 / samples.len().max(1) as f64;
            h
        })
        .collect();
    let ranked: Vec<f64> = hyps.par_iter().map(|h| quality(&h.q, &everything, samples, config)).collect();
    let mut order: Vec<usize> = (0..hyps.len()).collect();
    order.sort_by(|&a, &b| ranked[b].total_cmp(&ranked[a]).then(hyps[a].order.cmp(&hyps[b].order)));
    let mut slots: Vec<Option<DetectionHypothesis>> = hyps.into_iter().map(Some).collect();
    let hyps: Vec<DetectionHypothesis> = order.iter().map(|&i| slots[i].take().unwrap()).collect();
    let mut claimed = vec![false; samples.len()];
    let mut out = Vec::new();
    for h in hyps {
        let supp = support(&h.q, samples, config.tau, config.tau_n);
        let fresh = supp.iter().filter(|&&i| !claimed[i]).count();
        if fresh < config.min_support
            || (fresh as f64) < config.min_fresh_fraction * supp.len() as f64
            || (fresh as f64) < config.min_score * samples.len() as f64
        {
            continue;
        }
        for i in supp {
            claimed[i] = true;
        }
        out.push(h);
    }
    out
}

/// Builds the regularized system of a basis and splits its solution set.
pub fn basis_solution(points: &[OrientedPoint], omega: f64) -> Result<ParametricSolution> {
    decompose(&build_approx_system(points, omega)?)
}
