//! Sphere detector: one oriented point leaves a one-parameter family of
//! spheres (the centers along its normal line), which the remaining scene
//! points vote on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fitting::{build_sphere_system, fit_sphere, sphere_from_coeffs};
use crate::quadric::{bounding_diameter, OrientedPoint, Point3, PointCloud};
use crate::voting::{basis_hash, decompose, lambda_fast_1d, theta_quantize, Accumulator, ParametricSolution};

use super::index::SceneIndex;
use super::{DetectorConfig, Similarity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereDetection {
    pub center: Point3,
    pub radius: f64,
    pub score: f64,
    pub votes: usize,
    pub support_count: usize,
    pub order: usize,
}

impl SphereDetection {
    /// The same sphere in the frame before `similarity` was applied.
    pub fn denormalized(&self, similarity: &Similarity) -> Self {
        SphereDetection {
            center: similarity.invert(&self.center),
            radius: self.radius * similarity.scale,
            ..*self
        }
    }
}

/// `| |p - c| - r |`.
pub fn sphere_point_distance(p: &Point3, center: &Point3, radius: f64) -> f64 {
    ((p - center).norm() - radius).abs()
}

/// `(|r₁ - r₂| + |c₁ - c₂|) / 2`.
pub fn sphere_distance(c1: &Point3, r1: f64, c2: &Point3, r2: f64) -> f64 {
    0.5 * ((r1 - r2).abs() + (c1 - c2).norm())
}

fn sphere_compatible(p: &OrientedPoint, center: &Point3, radius: f64, tau: f64, tau_n: f64) -> bool {
    let d = p.position - center;
    let len = d.norm();
    len > 1e-12 && (len - radius).abs() < tau && (d.dot(&p.normal) / len).abs() > tau_n
}

fn sphere_support(samples: &[OrientedPoint], center: &Point3, radius: f64, config: &DetectorConfig) -> Vec<usize> {
    (0..samples.len())
        .filter(|&i| sphere_compatible(&samples[i], center, radius, config.tau, config.tau_n))
        .collect()
}

/// Sphere detection over a preprocessed cloud, best first.
pub fn detect_spheres(cloud: &PointCloud, config: &DetectorConfig) -> Result<Vec<SphereDetection>> {
    config.validate()?;
    let samples = &cloud.points;
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let diameter = bounding_diameter(samples.iter().map(|p| &p.position));
    let radius = config.basis_max_dist * diameter;
    let mut index = SceneIndex::new(cloud.positions(), (radius / 4.0).max(1e-9));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bases: Vec<(usize, ParametricSolution)> = Vec::new();
    let mut attempts = 0;
    while bases.len() < config.max_bases && attempts < config.max_attempts && index.seen.len() < samples.len() {
        attempts += 1;
        let i = rng.random_range(0..samples.len());
        let hash = basis_hash(&[i]);
        if index.seen.contains(&hash) {
            continue;
        }
        index.seen.insert(hash);
        let Ok(system) = build_sphere_system(&samples[i..=i], config.omega) else { continue };
        let Ok(sol) = decompose(&system) else { continue };
        if sol.null_dim() == 1 {
            bases.push((i, sol));
        }
    }

    let candidates: Vec<SphereDetection> = bases
        .par_iter()
        .enumerate()
        .filter_map(|(order, (i, sol))| vote_sphere(&index, samples, *i, sol, radius, order, config))
        .collect();
    let merged = merge_spheres(candidates, samples, config);
    Ok(verify_spheres(merged, samples, config))
}

fn vote_sphere(
    index: &SceneIndex,
    samples: &[OrientedPoint],
    anchor: usize,
    sol: &ParametricSolution,
    radius: f64,
    order: usize,
    config: &DetectorConfig,
) -> Option<SphereDetection> {
    let neighbors = index.radius(&samples[anchor].position, radius);
    let mut acc = Accumulator::new(config.bin_count);
    let mut voters = Vec::new();
    for &i in &neighbors {
        if i == anchor {
            continue;
        }
        let pt = &samples[i];
        let Ok(lambda) = lambda_fast_1d(sol, pt) else { continue };
        let Ok(candidate) = crate::quadric::QuadricCoefficients::new(sol.oriented_quadric(lambda)) else { continue };
        if !super::gradient_agreement(&candidate, pt, config.tau_n) {
            continue;
        }
        let (_, bin) = theta_quantize(lambda, sol, config.bin_count);
        acc.vote(bin, lambda);
        voters.push((bin, i));
    }
    let peak = acc.peak(config.s_min).ok()?;
    let s = sol.solution_at(&[peak.lambda]);
    let (mut center, mut r) = sphere_from_coeffs(&[s[0], s[1], s[2], s[3], s[4]]).ok()?;
    if config.refine_iterations > 0 {
        let mut members: Vec<usize> = voters.iter().filter(|(b, _)| *b == peak.bin).map(|(_, i)| *i).collect();
        members.push(anchor);
        for _ in 0..config.refine_iterations {
            let pts: Vec<OrientedPoint> = members.iter().map(|&i| samples[i]).collect();
            let Ok((c, rr)) = fit_sphere(&pts, config.omega) else { break };
            let local: Vec<usize> = neighbors
                .iter()
                .copied()
                .filter(|&i| sphere_compatible(&samples[i], &c, rr, config.tau, config.tau_n))
                .collect();
            if local.len() < members.len() / 2 || local.len() < 4 {
                break;
            }
            center = c;
            r = rr;
            members = local;
        }
    }
    Some(SphereDetection {
        center,
        radius: r,
        score: 0.0,
        votes: peak.votes,
        support_count: 0,
        order,
    })
}

fn merge_spheres(cands: Vec<SphereDetection>, samples: &[OrientedPoint], config: &DetectorConfig) -> Vec<SphereDetection> {
    let n = cands.len();
    let mut group: Vec<usize> = (0..n).collect();
    // single linkage: relabel components until stable
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in (i + 1)..n {
                if group[i] != group[j]
                    && sphere_distance(&cands[i].center, cands[i].radius, &cands[j].center, cands[j].radius)
                        < config.sphere_merge
                {
                    let (keep, drop) = (group[i].min(group[j]), group[i].max(group[j]));
                    for g in group.iter_mut() {
                        if *g == drop {
                            *g = keep;
                        }
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::new();
    for root in 0..n {
        let members: Vec<usize> = (0..n).filter(|&i| group[i] == root).collect();
        if members.is_empty() {
            continue;
        }
        let votes: usize = members.iter().map(|&m| cands[m].votes).sum();
        let w = |m: usize| cands[m].votes as f64 / votes as f64;
        let center = members.iter().fold(Point3::zeros(), |a, &m| a + cands[m].center * w(m));
        let radius = members.iter().map(|&m| cands[m].radius * w(m)).sum();
        let supp = sphere_support(samples, &center, radius, config).len();
        out.push(SphereDetection {
            center,
            radius,
            score: supp as f64 / samples.len().max(1) as f64,
            votes,
            support_count: supp,
            order: members.iter().map(|&m| cands[m].order).min().unwrap_or(0),
        });
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.votes.cmp(&a.votes))
            .then(a.order.cmp(&b.order))
    });
    out
}

fn verify_spheres(spheres: Vec<SphereDetection>, samples: &[OrientedPoint], config: &DetectorConfig) -> Vec<SphereDetection> {
    let mut claimed = vec![false; samples.len()];
    let mut out = Vec::new();
    for s in spheres {
        let supp = sphere_support(samples, &s.center, s.radius, config);
        if supp.iter().filter(|&&i| !claimed[i]).count() < config.min_support {
            continue;
        }
        for i in supp {
            claimed[i] = true;
        }
        out.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadric::QuadricCoefficients;
    use crate::synth::{sample_surface, uniform_clutter};

    #[test]
    fn distances() {
        assert_eq!(sphere_point_distance(&Point3::new(2.0, 0.0, 0.0), &Point3::zeros(), 1.0), 1.0);
        let c = Point3::new(0.1, 0.2, 0.3);
        assert_eq!(sphere_distance(&c, 0.4, &c, 0.4), 0.0);
        assert!((sphere_distance(&Point3::zeros(), 1.0, &Point3::new(0.2, 0.0, 0.0), 0.8) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unit_sphere_in_clutter() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut pts = sample_surface(&QuadricCoefficients::unit_sphere(), 400, &mut rng).unwrap();
        pts.extend(uniform_clutter(150, &mut rng));
        let config = DetectorConfig {
            max_bases: 60,
            basis_max_dist: 0.9,
            ..DetectorConfig::default()
        };
        let found = detect_spheres(&PointCloud::new(pts), &config).unwrap();
        let top = &found[0];
        assert!(top.center.norm() < 0.01, "center {:?}", top.center);
        assert!((top.radius - 1.0).abs() < 0.01, "radius {}", top.radius);
    }

    #[test]
    fn denormalization_scales_back() {
        let s = SphereDetection {
            center: Point3::new(0.5, 0.0, 0.0),
            radius: 0.25,
            score: 1.0,
            votes: 10,
            support_count: 10,
            order: 0,
        };
        let sim = Similarity {
            center: Point3::new(1.0, 1.0, 1.0),
            scale: 4.0,
        };
        let back = s.denormalized(&sim);
        assert_eq!(back.center, Point3::new(3.0, 1.0, 1.0));
        assert_eq!(back.radius, 1.0);
    }
}
