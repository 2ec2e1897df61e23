//! Fit accuracy metrics, the noise sweep and detection matching.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{d_far_on_union, support};
use crate::error::{Error, Result};
use crate::fitting::{fit_approx, fit_full, fit_taubin};
use crate::quadric::{OrientedPoint, Point3, QuadricClass, QuadricCoefficients};

use super::{add_noise, geometric_distance, quadric_size, random_quadric, sample_surface};

/// d_far below which a detection counts as a ground-truth match.
pub const MATCH_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FitMethod {
    #[serde(rename = "ours-full")]
    Full,
    #[serde(rename = "ours-approx")]
    Approx,
    #[serde(rename = "taubin")]
    Taubin,
}

impl FitMethod {
    pub const ALL: [FitMethod; 3] = [FitMethod::Full, FitMethod::Approx, FitMethod::Taubin];

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Full => "ours-full",
            FitMethod::Approx => "ours-approx",
            FitMethod::Taubin => "taubin",
        }
    }

    pub fn fit(self, points: &[OrientedPoint], omega: f64) -> Result<QuadricCoefficients> {
        match self {
            FitMethod::Full => fit_full(points, omega).map(|f| f.q),
            FitMethod::Approx => fit_approx(points, omega).map(|f| f.q),
            FitMethod::Taubin => {
                let pos: Vec<Point3> = points.iter().map(|p| p.position).collect();
                fit_taubin(&pos).map(|f| f.q)
            }
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours-full" | "full" => Ok(FitMethod::Full),
            "ours-approx" | "approx" => Ok(FitMethod::Approx),
            "taubin" => Ok(FitMethod::Taubin),
            other => Err(Error::InvalidConfig(format!("unknown fit method {other:?}"))),
        }
    }
}

/// Errors of one fit against ground truth. NaN entries mark a failed fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    /// Mean distance from the ground-truth vertices to the fitted surface.
    pub geom_err: f64,
    /// Mean `1 - |n · ∇̂Q_fit|` over the vertices.
    pub ang_err: f64,
    /// Mean `| |∇Q_fit| - |∇Q_gt| |` with both quadrics normalized.
    pub gradnorm_err: f64,
    pub runtime_s: f64,
    pub failure: Option<String>,
}

impl FitMetrics {
    fn failed(reason: String, runtime_s: f64) -> Self {
        FitMetrics {
            geom_err: f64::NAN,
            ang_err: f64::NAN,
            gradnorm_err: f64::NAN,
            runtime_s,
            failure: Some(reason),
        }
    }
}

/// Fits `input` with `method` and measures the result on `vertices`, the
/// noise-free samples of `truth` with their true normals.
pub fn evaluate_fit(
    method: FitMethod,
    input: &[OrientedPoint],
    truth: &QuadricCoefficients,
    vertices: &[OrientedPoint],
    omega: f64,
) -> FitMetrics {
    let start = Instant::now();
    let fitted = method.fit(input, omega);
    let runtime_s = start.elapsed().as_secs_f64();
    let q = match fitted {
        Ok(q) => q.normalized(),
        Err(e) => return FitMetrics::failed(e.to_string(), runtime_s),
    };
    let truth = truth.normalized();
    let n = vertices.len().max(1) as f64;
    let mut geom = 0.0;
    let mut ang = 0.0;
    let mut grad = 0.0;
    for v in vertices {
        geom += geometric_distance(&q, &v.position);
        let g = q.gradient(&v.position);
        let len = g.norm();
        ang += if len > 0.0 { (1.0 - (g.dot(&v.normal) / len).abs()).max(0.0) } else { 1.0 };
        grad += (len - truth.gradient(&v.position).norm()).abs();
    }
    FitMetrics {
        geom_err: geom / n,
        ang_err: ang / n,
        gradnorm_err: grad / n,
        runtime_s,
        failure: None,
    }
}

/// Noise sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub methods: Vec<FitMethod>,
    /// Noise levels as fractions of the quadric size.
    pub sigmas: Vec<f64>,
    pub quadrics: usize,
    /// Fits per quadric and noise level.
    pub trials: usize,
    /// Points handed to each fit.
    pub fit_points: usize,
    /// Ground-truth vertices per trial; noisy copies feed normal estimation.
    pub vertices: usize,
    pub omega: f64,
    pub seed: u64,
    /// Keep wall-clock times; otherwise the runtime column is zero and the
    /// table is reproducible bit for bit.
    pub record_runtime: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            methods: FitMethod::ALL.to_vec(),
            sigmas: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05],
            quadrics: 10,
            trials: 20,
            fit_points: 9,
            vertices: 200,
            omega: crate::fitting::DEFAULT_OMEGA,
            seed: 0,
            record_runtime: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: FitMethod,
    pub sigma: f64,
    /// `quadric * trials + fit`.
    pub trial: usize,
    pub metrics: FitMetrics,
}

/// Runs every method on the same noisy samples of `quadrics` random central
/// and non-central quadrics, `trials` times per noise level. Rows come out
/// ordered by method, noise level and trial.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if config.fit_points > config.vertices {
        return Err(Error::InvalidConfig("fit_points exceeds vertices".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut quadrics = Vec::with_capacity(config.quadrics);
    for k in 0..config.quadrics {
        let class = if k % 2 == 0 {
            QuadricClass::Central
        } else {
            QuadricClass::NonCentralDegenerate
        };
        quadrics.push(random_quadric(&mut rng, Some(class))?);
    }
    let sizes: Vec<f64> = quadrics.iter().map(quadric_size).collect();

    let jobs: Vec<(usize, usize, usize)> = (0..config.sigmas.len())
        .flat_map(|s| (0..config.quadrics).flat_map(move |q| (0..config.trials).map(move |t| (s, q, t))))
        .collect();
    let per_job: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(s, qi, t)| -> Result<Vec<SweepRow>> {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(config.seed);
            trial_rng.set_stream(((s * config.quadrics + qi) * config.trials + t) as u64 + 1);
            let sigma = config.sigmas[s];
            let clean = sample_surface(&quadrics[qi], config.vertices, &mut trial_rng)?;
            let noisy = add_noise(&clean, sigma, sizes[qi], sigma > 0.0, 12, &mut trial_rng);
            let pick = sample_indices(&mut trial_rng, noisy.len(), config.fit_points);
            let input: Vec<OrientedPoint> = pick.iter().map(|i| noisy[i]).collect();
            Ok(config
                .methods
                .iter()
                .map(|&method| {
                    let mut metrics = evaluate_fit(method, &input, &quadrics[qi], &clean, config.omega);
                    if !config.record_runtime {
                        metrics.runtime_s = 0.0;
                    }
                    SweepRow {
                        method,
                        sigma,
                        trial: qi * config.trials + t,
                        metrics,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = per_job.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        let ma = config.methods.iter().position(|m| *m == a.method);
        let mb = config.methods.iter().position(|m| *m == b.method);
        ma.cmp(&mb).then(a.sigma.total_cmp(&b.sigma)).then(a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: &mut [f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with averaged ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub precision: f64,
    pub recall: f64,
    /// `(detection, ground truth)` pairs.
    pub matches: Vec<(usize, usize)>,
    /// False when there were no detections; precision is then reported as 1.
    pub precision_defined: bool,
}

/// One-to-one greedy matching by ascending d_far (on the union of the two
/// supports), accepting pairs below [`MATCH_THRESHOLD`].
pub fn match_detections(
    detected: &[QuadricCoefficients],
    truth: &[QuadricCoefficients],
    samples: &[OrientedPoint],
    tau: f64,
    tau_n: f64,
) -> MatchResult {
    let sd: Vec<Vec<usize>> = detected.iter().map(|q| support(q, samples, tau, tau_n)).collect();
    let st: Vec<Vec<usize>> = truth.iter().map(|q| support(q, samples, tau, tau_n)).collect();
    let mut pairs = Vec::new();
    for (i, a) in sd.iter().enumerate() {
        for (j, b) in st.iter().enumerate() {
            let d = d_far_on_union(a, b);
            if d < MATCH_THRESHOLD {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matches = Vec::new();
    for (_, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            matches.push((i, j));
        }
    }
    let precision_defined = !detected.is_empty();
    MatchResult {
        precision: if precision_defined {
            matches.len() as f64 / detected.len() as f64
        } else {
            1.0
        },
        recall: if truth.is_empty() {
            1.0
        } else {
            matches.len() as f64 / truth.len() as f64
        },
        matches,
        precision_defined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_ellipsoid, uniform_clutter};

    fn small(sigmas: Vec<f64>, trials: usize) -> SweepConfig {
        SweepConfig {
            sigmas,
            quadrics: 2,
            trials,
            vertices: 60,
            seed: 3,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn taubin_is_exact_on_clean_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_ellipsoid(&mut rng, 0.3, 0.7, 0.2);
        let pts = sample_surface(&q, 50, &mut rng).unwrap();
        let m = evaluate_fit(FitMethod::Taubin, &pts, &q, &pts, 1.0);
        assert!(m.geom_err < 1e-6, "{}", m.geom_err);
        assert!(m.ang_err < 1e-6);
    }

    #[test]
    fn approx_is_exact_on_spheres() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = QuadricCoefficients::sphere(&Point3::new(0.1, 0.0, -0.2), 0.5);
        let pts = sample_surface(&q, 40, &mut rng).unwrap();
        let m = evaluate_fit(FitMethod::Approx, &pts[..8], &q, &pts, 1.0);
        assert!(m.geom_err < 1e-6, "{}", m.geom_err);
    }

    #[test]
    fn failures_become_nan_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = QuadricCoefficients::unit_sphere();
        let pts = sample_surface(&q, 5, &mut rng).unwrap();
        let m = evaluate_fit(FitMethod::Taubin, &pts, &q, &pts, 1.0);
        assert!(m.failure.is_some() && m.geom_err.is_nan());
    }

    #[test]
    fn single_cell_sweep() {
        let rows = sweep(&SweepConfig {
            methods: vec![FitMethod::Taubin],
            quadrics: 1,
            ..small(vec![0.0], 1)
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].metrics.geom_err < 1e-6);
    }

    #[test]
    fn sweep_is_reproducible_and_ordered() {
        let a = sweep(&small(vec![0.0, 0.02], 3)).unwrap();
        let b = sweep(&small(vec![0.0, 0.02], 3)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.len(), 3 * 2 * 6);
        for w in a.windows(2) {
            let ka = (FitMethod::ALL.iter().position(|m| *m == w[0].method), w[0].sigma, w[0].trial);
            let kb = (FitMethod::ALL.iter().position(|m| *m == w[1].method), w[1].sigma, w[1].trial);
            assert!(ka < kb);
        }
    }

    #[test]
    fn high_noise_stays_finite() {
        let rows = sweep(&SweepConfig {
            methods: vec![FitMethod::Approx],
            ..small(vec![0.05], 20)
        })
        .unwrap();
        assert!(rows.iter().all(|r| r.metrics.geom_err.is_finite()));
    }

    #[test]
    fn rank_correlation() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(median(&mut [3.0, f64::NAN, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn matching_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = QuadricCoefficients::sphere(&Point3::new(-0.45, 0.0, 0.0), 0.3);
        let b = QuadricCoefficients::sphere(&Point3::new(0.45, 0.0, 0.0), 0.3);
        let spurious = QuadricCoefficients::sphere(&Point3::new(0.0, 0.6, 0.0), 0.2);
        let mut samples = sample_surface(&a, 100, &mut rng).unwrap();
        samples.extend(sample_surface(&b, 100, &mut rng).unwrap());
        samples.extend(uniform_clutter(50, &mut rng));
        let truth = [a, b];
        let exact = match_detections(&truth, &truth, &samples, 0.01, 0.85);
        assert_eq!((exact.precision, exact.recall), (1.0, 1.0));
        let none = match_detections(&[], &truth, &samples, 0.01, 0.85);
        assert_eq!(none.recall, 0.0);
        assert!(!none.precision_defined && none.precision == 1.0);
        let half = match_detections(&[a, spurious], &truth, &samples, 0.01, 0.85);
        assert_eq!((half.precision, half.recall), (0.5, 0.5));
    }
}
