//! Scene preparation: unit-ball normalization, voxel downsampling, normal
//! estimation, plane removal and difference-of-normals pruning.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadric::{OrientedPoint, Plane, Point3, PointCloud};

use super::index::SceneIndex;
use super::DetectorConfig;

/// Similarity that maps input coordinates into the unit ball:
/// `x' = (x - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub center: Point3,
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity {
            center: Point3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, x: &Point3) -> Point3 {
        (x - self.center) / self.scale
    }

    pub fn invert(&self, x: &Point3) -> Point3 {
        x * self.scale + self.center
    }
}

/// Centers the cloud on its centroid and scales it to a maximum radius of 1.
pub fn normalize_unit_ball(cloud: &PointCloud) -> Result<(PointCloud, Similarity)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = cloud.len() as f64;
    let center = cloud.points.iter().fold(Point3::zeros(), |acc, p| acc + p.position) / n;
    let radius = cloud
        .points
        .iter()
        .map(|p| (p.position - center).norm())
        .fold(0.0, f64::max);
    let scale = if radius > 0.0 { radius } else { 1.0 };
    let t = Similarity { center, scale };
    let points = cloud
        .points
        .iter()
        .map(|p| OrientedPoint::new(t.apply(&p.position), p.normal))
        .collect();
    let diameter = if cloud.diameter > 0.0 { cloud.diameter } else { 2.0 * radius };
    Ok((PointCloud { points, diameter }, t))
}

/// Keeps a subset of input points with pairwise distances of at least
/// `tau_s * diameter`, where `diameter` is the cloud's bounding diameter.
///
/// Points are visited voxel by voxel (voxel edge = the minimum distance) and
/// accepted greedily; survivors are original points, never averages.
pub fn voxel_downsample(cloud: &PointCloud, tau_s: f64) -> PointCloud {
    let positions: Vec<Point3> = cloud.positions();
    let diameter = crate::quadric::bounding_diameter(positions.iter());
    let min_dist = tau_s * diameter;
    if cloud.len() < 2 || min_dist <= 0.0 {
        return cloud.clone();
    }
    let mut voxels: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in positions.iter().enumerate() {
        let k = (
            (p.x / min_dist).floor() as i64,
            (p.y / min_dist).floor() as i64,
            (p.z / min_dist).floor() as i64,
        );
        voxels.entry(k).or_default().push(i);
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut grid = std::collections::HashMap::<(i64, i64, i64), Vec<usize>>::new();
    let md2 = min_dist * min_dist;
    for (key, members) in &voxels {
        for &i in members {
            let p = &positions[i];
            let mut clear = true;
            'scan: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(b) = grid.get(&(key.0 + dx, key.1 + dy, key.2 + dz)) {
                            if b.iter().any(|&j| (positions[j] - p).norm_squared() < md2) {
                                clear = false;
                                break 'scan;
                            }
                        }
                    }
                }
            }
            if clear {
                grid.entry(*key).or_default().push(i);
                kept.push(i);
            }
        }
    }
    kept.sort_unstable();
    PointCloud {
        points: kept.iter().map(|&i| cloud.points[i]).collect(),
        diameter: cloud.diameter,
    }
}

/// How estimated normals are signed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormalOrientation {
    /// Toward a sensor position.
    Viewpoint(Point3),
    /// Away from the cloud centroid.
    Outward,
}

/// Plane-fit normal of a neighborhood: eigenvector of the smallest
/// covariance eigenvalue. `None` when the neighbors are (nearly) collinear.
pub fn local_normal(points: &[Point3]) -> Option<Point3> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Point3::zeros(), |a, p| a + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if l2 <= 0.0 || l1 <= 1e-12 * l2 {
        return None;
    }
    Some(eig.eigenvectors.column(order[0]).normalize())
}

/// k-NN plane-fit normals. Points whose neighborhood is degenerate are
/// dropped.
pub fn estimate_normals(positions: &[Point3], k: usize, orientation: NormalOrientation) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidConfig("normal estimation needs k >= 3".into()));
    }
    if positions.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            got: positions.len(),
        });
    }
    let diameter = crate::quadric::bounding_diameter(positions.iter());
    let index = SceneIndex::new(positions.to_vec(), (diameter / 50.0).max(1e-9));
    let centroid = positions.iter().fold(Point3::zeros(), |a, p| a + p) / positions.len() as f64;
    let mut points = Vec::with_capacity(positions.len());
    for x in positions {
        let nbrs: Vec<Point3> = index.knn(x, k).into_iter().map(|i| positions[i]).collect();
        let Some(mut n) = local_normal(&nbrs) else { continue };
        let toward = match orientation {
            NormalOrientation::Viewpoint(v) => v - x,
            NormalOrientation::Outward => x - centroid,
        };
        if n.dot(&toward) < 0.0 {
            n = -n;
        }
        points.push(OrientedPoint::new(*x, n));
    }
    Ok(PointCloud { points, diameter })
}

/// Plane-fit normal over a radius, signed to agree with `reference`.
fn radius_normal(index: &SceneIndex, x: &Point3, r: f64, reference: &Point3) -> Option<Point3> {
    let nbrs: Vec<Point3> = index.radius(x, r).into_iter().map(|i| *index.position(i)).collect();
    let n = local_normal(&nbrs)?;
    Some(if n.dot(reference) < 0.0 { -n } else { n })
}

/// Difference-of-normals filter. Keeps point `i` when
/// `|n_small(i) - n_large(i)| / 2 <= threshold`; radii are absolute.
pub fn don_filter(cloud: &PointCloud, r_small: f64, r_large: f64, threshold: f64) -> Result<PointCloud> {
    if !(r_small < r_large) {
        return Err(Error::InvalidConfig("DoN needs r_small < r_large".into()));
    }
    let index = SceneIndex::new(cloud.positions(), r_small.max(1e-9));
    let points = cloud
        .points
        .iter()
        .filter(|p| {
            let Some(small) = radius_normal(&index, &p.position, r_small, &p.normal) else { return false };
            let Some(large) = radius_normal(&index, &p.position, r_large, &small) else { return false };
            (small - large).norm() / 2.0 <= threshold
        })
        .copied()
        .collect();
    Ok(PointCloud {
        points,
        diameter: cloud.diameter,
    })
}

/// Iteratively removes dominant planes.
///
/// A single oriented point already fixes a plane, so hypotheses are drawn
/// from random seed points; the one with most supporters (distance below
/// `tau`, `|n·n_plane| >= tau_n`) is refit to its supporters and removed
/// while it gathers at least `10 * s_min` points.
pub fn remove_planes(cloud: &PointCloud, config: &DetectorConfig) -> (PointCloud, Vec<Plane>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x706c_616e_6573);
    let mut remaining = cloud.points.clone();
    let mut planes = Vec::new();
    let needed = config.s_min * 10;
    let trials = config.max_bases.max(50);
    loop {
        if remaining.len() < needed || remaining.is_empty() {
            break;
        }
        let mut best: Option<(usize, Plane)> = None;
        for _ in 0..trials {
            let seed = &remaining[rng.random_range(0..remaining.len())];
            let plane = Plane::from_point_normal(&seed.position, &seed.normal);
            let count = remaining
                .iter()
                .filter(|p| on_plane(&plane, p, config.tau, config.tau_n))
                .count();
            if best.as_ref().is_none_or(|(c, _)| count > *c) {
                best = Some((count, plane));
            }
        }
        let Some((count, plane)) = best else { break };
        if count < needed {
            break;
        }
        let members: Vec<Point3> = remaining
            .iter()
            .filter(|p| on_plane(&plane, p, config.tau, config.tau_n))
            .map(|p| p.position)
            .collect();
        let refined = local_normal(&members)
            .map(|n| {
                let c = members.iter().fold(Point3::zeros(), |a, p| a + p) / members.len() as f64;
                Plane::from_point_normal(&c, &n)
            })
            .unwrap_or(plane);
        let before = remaining.len();
        remaining.retain(|p| !(on_plane(&refined, p, config.tau, config.tau_n) || on_plane(&plane, p, config.tau, config.tau_n)));
        planes.push(refined);
        if remaining.len() == before {
            break;
        }
    }
    (
        PointCloud {
            points: remaining,
            diameter: cloud.diameter,
        },
        planes,
    )
}

fn on_plane(plane: &Plane, p: &OrientedPoint, tau: f64, tau_n: f64) -> bool {
    plane.signed_distance(&p.position).abs() < tau && plane.normal().normalize().dot(&p.normal).abs() >= tau_n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadric::QuadricCoefficients;
    use crate::synth::sample_surface;

    fn cloud_of(points: &[Point3]) -> PointCloud {
        PointCloud::new(points.iter().map(|p| OrientedPoint::new(*p, Point3::z())).collect())
    }

    #[test]
    fn normalization_examples() {
        let c = cloud_of(&[Point3::zeros(), Point3::new(2.0, 0.0, 0.0)]);
        let (n, t) = normalize_unit_ball(&c).unwrap();
        assert_eq!(n.points[0].position, Point3::new(-1.0, 0.0, 0.0));
        assert_eq!(n.points[1].position, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(t.scale, 1.0);
        let (again, t2) = normalize_unit_ball(&n).unwrap();
        assert!((t2.center).norm() < 1e-12 && (t2.scale - 1.0).abs() < 1e-12);
        assert_eq!(again.points, n.points);
        assert!(matches!(normalize_unit_ball(&PointCloud::default()), Err(Error::EmptyCloud)));
    }

    #[test]
    fn downsampling_keeps_sparse_grid_and_merges_duplicates() {
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                pts.push(Point3::new(i as f64, j as f64, 0.0));
            }
        }
        let cloud = cloud_of(&pts);
        let diam = crate::quadric::bounding_diameter(pts.iter());
        // spacing 1 = 2 * tau_s * diam
        let tau_s = 0.5 / diam;
        assert_eq!(voxel_downsample(&cloud, tau_s).len(), pts.len());

        let dup = cloud_of(&[Point3::zeros(), Point3::zeros(), Point3::new(1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)]);
        assert_eq!(voxel_downsample(&dup, 0.1).len(), 2);
    }

    #[test]
    fn downsampled_sphere_respects_min_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_surface(&QuadricCoefficients::unit_sphere(), 3000, &mut rng).unwrap();
        let cloud = PointCloud::new(pts);
        let out = voxel_downsample(&cloud, 0.03);
        let diam = crate::quadric::bounding_diameter(cloud.points.iter().map(|p| &p.position));
        let min = 0.03 * diam;
        for i in 0..out.len() {
            for j in (i + 1)..out.len() {
                assert!((out.points[i].position - out.points[j].position).norm() >= min);
            }
        }
        assert!(out.len() > 100);
    }

    #[test]
    fn normals_of_plane_face_viewpoint() {
        let pts: Vec<Point3> = (0..100).map(|k| Point3::new((k % 10) as f64 * 0.1, (k / 10) as f64 * 0.1, 0.0)).collect();
        let out = estimate_normals(&pts, 8, NormalOrientation::Viewpoint(Point3::new(0.3, 0.2, 5.0))).unwrap();
        assert_eq!(out.len(), 100);
        for p in &out.points {
            assert!((p.normal - Point3::z()).norm() < 1e-9);
        }
    }

    #[test]
    fn normals_of_sphere_are_accurate() {
        // golden-angle lattice
        let n = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Point3> = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Point3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        let out = estimate_normals(&pts, 12, NormalOrientation::Outward).unwrap();
        for p in &out.points {
            let angle = p.normal.dot(&p.position.normalize()).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 2.0, "angle {angle}");
        }
    }

    #[test]
    fn collinear_neighborhood_is_dropped() {
        let pts = [Point3::zeros(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        let out = estimate_normals(&pts, 3, NormalOrientation::Outward).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn don_keeps_smooth_and_drops_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sphere = sample_surface(&QuadricCoefficients::unit_sphere(), 3000, &mut rng).unwrap();
        let cloud = PointCloud::new(sphere);
        let kept = don_filter(&cloud, 0.15, 0.3, 0.1).unwrap();
        assert!(kept.len() as f64 >= 0.95 * cloud.len() as f64);
        assert_eq!(don_filter(&cloud, 0.15, 0.3, 1.0).unwrap().len(), cloud.len());

        // wedge: z = 0 for x < 0 and x = 0 for z > 0
        let mut wedge = Vec::new();
        for i in 0..40 {
            for j in 0..20 {
                let s = i as f64 * 0.025;
                let y = j as f64 * 0.05;
                wedge.push(OrientedPoint::new(Point3::new(-s - 0.0125, y, 0.0), Point3::z()));
                wedge.push(OrientedPoint::new(Point3::new(0.0, y, s + 0.0125), Point3::new(-1.0, 0.0, 0.0)));
            }
        }
        let cloud = PointCloud::new(wedge);
        let kept = don_filter(&cloud, 0.06, 0.2, 0.1).unwrap();
        assert!(kept.len() < cloud.len());
        // everything near the edge is gone, far points survive
        assert!(kept.points.iter().all(|p| p.position.x.abs().max(p.position.z.abs()) > 0.05));
        assert!(kept.points.iter().any(|p| p.position.x < -0.5));
    }

    #[test]
    fn planes_are_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = Vec::new();
        for _ in 0..1500 {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            pts.push(OrientedPoint::new(Point3::new(x, y, -0.6), Point3::z()));
        }
        let sphere = QuadricCoefficients::sphere(&Point3::new(0.0, 0.0, 0.1), 0.3);
        let on_sphere = sample_surface(&sphere, 400, &mut rng).unwrap();
        pts.extend(on_sphere.iter().copied());
        let cloud = PointCloud::new(pts);
        let (out, planes) = remove_planes(&cloud, &DetectorConfig::default());
        assert_eq!(planes.len(), 1);
        let retained = out.points.iter().filter(|p| (p.position.z + 0.6).abs() > 1e-9).count();
        assert!(retained as f64 >= 0.95 * 400.0);
        assert!(out.points.iter().all(|p| (p.position.z + 0.6).abs() > 1e-9));

        let (same, none) = remove_planes(&PointCloud::new(on_sphere.clone()), &DetectorConfig::default());
        assert!(none.is_empty());
        assert_eq!(same.len(), on_sphere.len());
    }

    #[test]
    fn two_walls_are_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts = Vec::new();
        for _ in 0..1200 {
            let a = rng.random_range(-1.0..1.0);
            let b = rng.random_range(-1.0..1.0);
            pts.push(OrientedPoint::new(Point3::new(-0.8, a, b), Point3::x()));
            pts.push(OrientedPoint::new(Point3::new(a, -0.8, b), Point3::y()));
        }
        let ell = crate::synth::random_ellipsoid(&mut rng, 0.2, 0.35, 0.1);
        let on = sample_surface(&ell, 300, &mut rng).unwrap();
        pts.extend(on.iter().copied());
        let (out, planes) = remove_planes(&PointCloud::new(pts), &DetectorConfig::default());
        assert_eq!(planes.len(), 2);
        assert!(out.len() >= 285 && out.len() <= 300);
    }
}
