//! Rejection sampling of 3-point bases.

use rand::Rng;

use crate::error::{Error, Result};
use crate::quadric::{bounding_diameter, OrientedPoint};
use crate::voting::{basis_hash, Basis, ParametricSolution};

use super::index::SceneIndex;
use super::{basis_solution, DetectorConfig};

/// Draws an unseen triplet with pairwise distances in
/// `[basis_min_dist, basis_max_dist] * diameter`, pairwise normal angles of
/// at least `min_normal_angle`, and a rank-9 system. The triplet's hash is
/// recorded in `index.seen`.
pub fn select_basis<R: Rng>(
    index: &mut SceneIndex,
    samples: &[OrientedPoint],
    config: &DetectorConfig,
    rng: &mut R,
) -> Result<(Basis, ParametricSolution)> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let diameter = bounding_diameter(index.positions().iter());
    let lo = config.basis_min_dist * diameter;
    let hi = config.basis_max_dist * diameter;
    let cos_max = config.min_normal_angle.to_radians().cos();
    let fits = |a: usize, b: usize| {
        let d = (samples[a].position - samples[b].position).norm();
        d >= lo && d <= hi && samples[a].normal.dot(&samples[b].normal) <= cos_max
    };
    for _ in 0..config.max_attempts {
        let i = rng.random_range(0..n);
        let near: Vec<usize> = index
            .radius(&samples[i].position, hi)
            .into_iter()
            .filter(|&j| j != i && fits(i, j))
            .collect();
        if near.len() < 2 {
            continue;
        }
        let j = near[rng.random_range(0..near.len())];
        let third: Vec<usize> = near.iter().copied().filter(|&k| k != j && fits(j, k)).collect();
        if third.is_empty() {
            continue;
        }
        let k = third[rng.random_range(0..third.len())];
        let indices = vec![i, j, k];
        let hash = basis_hash(&indices);
        if index.seen.contains(&hash) {
            continue;
        }
        let points = vec![samples[i], samples[j], samples[k]];
        let Ok(sol) = basis_solution(&points, config.omega) else { continue };
        if sol.null_dim() != 1 {
            continue;
        }
        index.seen.insert(hash);
        return Ok((Basis { points, indices, hash }, sol));
    }
    Err(Error::Exhausted {
        attempts: config.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadric::{Point3, QuadricCoefficients};
    use crate::synth::{random_quadric, sample_surface};
    use crate::voting::decompose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn index_of(points: &[OrientedPoint]) -> SceneIndex {
        SceneIndex::new(points.iter().map(|p| p.position).collect(), 0.1)
    }

    fn loose() -> DetectorConfig {
        DetectorConfig {
            basis_min_dist: 0.01,
            basis_max_dist: 2.0,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn three_points_then_exhausted() {
        let s = QuadricCoefficients::unit_sphere();
        let pts: Vec<OrientedPoint> = [Point3::x(), Point3::y(), Point3::z()]
            .iter()
            .map(|p| OrientedPoint::new(*p, s.gradient(p).normalize()))
            .collect();
        let mut index = index_of(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (basis, _) = select_basis(&mut index, &pts, &loose(), &mut rng).unwrap();
        let mut idx = basis.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2]);
        assert!(matches!(
            select_basis(&mut index, &pts, &loose(), &mut rng),
            Err(Error::Exhausted { .. })
        ));
    }

    #[test]
    fn parallel_normals_exhaust() {
        let pts: Vec<OrientedPoint> = (0..50)
            .map(|k| OrientedPoint::new(Point3::new((k % 7) as f64 * 0.1, (k / 7) as f64 * 0.1, 0.0), Point3::z()))
            .collect();
        let mut index = index_of(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            select_basis(&mut index, &pts, &loose(), &mut rng),
            Err(Error::Exhausted { .. })
        ));
    }

    #[test]
    fn bases_on_random_quadrics_have_one_free_parameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let q = random_quadric(&mut rng, None).unwrap();
            let pts = sample_surface(&q, 200, &mut rng).unwrap();
            let mut index = index_of(&pts);
            let config = DetectorConfig::default();
            for _ in 0..10 {
                let Ok((basis, _)) = select_basis(&mut index, &pts, &config, &mut rng) else { break };
                let system = crate::fitting::build_approx_system(&basis.points, config.omega).unwrap();
                assert_eq!(decompose(&system).unwrap().null_dim(), 1);
                let diam = bounding_diameter(index.positions().iter());
                for a in 0..3 {
                    for b in (a + 1)..3 {
                        let d = (basis.points[a].position - basis.points[b].position).norm();
                        assert!(d >= 0.05 * diam && d <= 0.5 * diam);
                        let angle = basis.points[a].normal.dot(&basis.points[b].normal).clamp(-1.0, 1.0).acos();
                        assert!(angle.to_degrees() >= 10.0 - 1e-9);
                    }
                }
            }
        }
    }
}
