//! Synthetic quadrics, surface sampling, noise and scene composition.

pub mod bench;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, UnitQuaternion, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::detector::index::SceneIndex;
use crate::detector::preprocess::local_normal;
use crate::error::{Error, Result};
use crate::quadric::{
    plane_pair, OrientedPoint, Plane, Point3, QuadricClass, QuadricCoefficients, QuadricMatrix,
};

pub use bench::{
    evaluate_fit, match_detections, median, spearman, sweep, FitMethod, FitMetrics, MatchResult, SweepConfig,
    SweepRow,
};

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    loop {
        let v = Point3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Uniform random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let v = Vector4::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(v));
    q.to_rotation_matrix().into_inner()
}

/// Uniform point in the ball of radius `r` around the origin.
pub fn random_in_ball<R: Rng + ?Sized>(rng: &mut R, r: f64) -> Point3 {
    loop {
        let p = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm_squared() <= 1.0 {
            return p * r;
        }
    }
}

/// `Q(x) = Q'(Rᵀ(x - t))`.
pub fn rigid_motion(q: &Matrix4<f64>, rotation: &Matrix3<f64>, translation: &Point3) -> Matrix4<f64> {
    let mut h = Matrix4::identity();
    let rt = rotation.transpose();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    let shift = -(rt * translation);
    h.fixed_view_mut::<3, 1>(0, 3).copy_from(&shift);
    h.transpose() * q * h
}

fn from_matrix(m: Matrix4<f64>) -> Result<QuadricCoefficients> {
    Ok(QuadricMatrix::new(m).coefficients()?.normalized())
}

/// Rotated and shifted ellipsoid with semi-axes in `[min_axis, max_axis]`
/// and center within `max_offset` of the origin.
pub fn random_ellipsoid<R: Rng + ?Sized>(rng: &mut R, min_axis: f64, max_axis: f64, max_offset: f64) -> QuadricCoefficients {
    let mut d = Matrix4::zeros();
    for k in 0..3 {
        let a: f64 = rng.random_range(min_axis..=max_axis);
        d[(k, k)] = 1.0 / (a * a);
    }
    d[(3, 3)] = -1.0;
    let r = random_rotation(rng);
    let t = random_in_ball(rng, max_offset);
    from_matrix(rigid_motion(&d, &r, &t)).expect("ellipsoid is nonzero")
}

fn random_plane<R: Rng + ?Sized>(rng: &mut R) -> Plane {
    let n = random_unit_vector(rng);
    let d: f64 = rng.random_range(-0.5..0.5);
    Plane::from_point_normal(&(n * d), &n)
}

fn draw_class<R: Rng + ?Sized>(rng: &mut R, class: QuadricClass) -> Result<QuadricCoefficients> {
    let axis = |rng: &mut R| -> f64 { rng.random_range(0.3..0.8) };
    let mut d = Matrix4::zeros();
    match class {
        QuadricClass::Plane => return from_matrix(QuadricMatrix::from_plane(&random_plane(rng)).as_matrix().clone_owned()),
        QuadricClass::PlanePair => {
            let a = random_plane(rng);
            let b = random_plane(rng);
            return from_matrix(plane_pair(&a, &b).as_matrix().clone_owned());
        }
        QuadricClass::Central => {
            // ellipsoid, hyperboloid of one sheet, hyperboloid of two sheets
            let signs: [f64; 3] = match rng.random_range(0..4) {
                0 | 1 => [1.0, 1.0, 1.0],
                2 => [1.0, 1.0, -1.0],
                _ => [1.0, -1.0, -1.0],
            };
            for k in 0..3 {
                let a = axis(rng);
                d[(k, k)] = signs[k] / (a * a);
            }
            d[(3, 3)] = if signs == [1.0, -1.0, -1.0] { -0.25 } else { -1.0 };
        }
        QuadricClass::NonCentralDegenerate => {
            let a = axis(rng);
            let b = axis(rng);
            d[(0, 0)] = 1.0 / (a * a);
            d[(1, 1)] = 1.0 / (b * b);
            if rng.random_bool(0.5) {
                // elliptic cylinder
                d[(3, 3)] = -1.0;
            } else {
                // elliptic paraboloid z = x²/a² + y²/b² - h
                let h: f64 = rng.random_range(0.2..0.6);
                d[(2, 3)] = -0.5;
                d[(3, 2)] = -0.5;
                d[(3, 3)] = -h;
            }
        }
        QuadricClass::Other => return Err(Error::GenerationFailed(class.to_string())),
    }
    let r = random_rotation(rng);
    let t = random_in_ball(rng, 0.2);
    from_matrix(rigid_motion(&d, &r, &t))
}

/// Random quadric of the given coarse class (`None`: one of plane, plane
/// pair, central, non-central at random) whose surface meets the unit ball.
pub fn random_quadric<R: Rng + ?Sized>(rng: &mut R, class: Option<QuadricClass>) -> Result<QuadricCoefficients> {
    const CLASSES: [QuadricClass; 4] = [
        QuadricClass::Plane,
        QuadricClass::PlanePair,
        QuadricClass::Central,
        QuadricClass::NonCentralDegenerate,
    ];
    let wanted = class.unwrap_or_else(|| CLASSES[rng.random_range(0..4)]);
    for _ in 0..100 {
        let Ok(q) = draw_class(rng, wanted) else { break };
        if q.matrix().classify() != wanted {
            continue;
        }
        let mut probe = ChaCha8Rng::seed_from_u64(rng.random());
        if sample_surface(&q, 4, &mut probe).is_ok() {
            return Ok(q);
        }
    }
    Err(Error::GenerationFailed(wanted.to_string()))
}

/// Normal of `q` at on-surface `x`: the normalized gradient, or the
/// dominant direction of the quadratic part where the gradient vanishes.
/// Central quadrics get normals pointing away from the center; everything
/// else keeps the gradient orientation of `q`.
pub fn surface_normal(q: &QuadricCoefficients, x: &Point3) -> Point3 {
    let g = q.gradient(x);
    let m = q.matrix();
    let scale = m.as_matrix().norm().max(1e-300);
    let mut n = if g.norm() > 1e-9 * scale {
        g.normalize()
    } else {
        let block: Matrix3<f64> = m.as_matrix().fixed_view::<3, 3>(0, 0).into_owned();
        let eig = SymmetricEigen::new(block);
        let k = eig.eigenvalues.iamax();
        eig.eigenvectors.column(k).into_owned()
    };
    if let Ok(c) = m.center() {
        let at_center = q.algebraic_distance(&c);
        if at_center > 0.0 {
            n = -n;
        }
    }
    n
}

/// Random points of the surface inside the unit ball with unit normals.
///
/// Rays from random points of the ball are intersected with the surface;
/// roots are polished along the ray so that `|d_q| < 1e-10` for the
/// normalized `q`.
pub fn sample_surface<R: Rng + ?Sized>(q: &QuadricCoefficients, count: usize, rng: &mut R) -> Result<Vec<OrientedPoint>> {
    let q = q.normalized();
    let m = *q.matrix().as_matrix();
    let budget = 100 * count.max(10);
    let mut out = Vec::with_capacity(count);
    let mut trials = 0;
    while out.len() < count {
        if trials >= budget {
            return Err(Error::UnsampleableSurface);
        }
        trials += 1;
        let o = random_in_ball(rng, 1.0);
        let dir = random_unit_vector(rng);
        let oh = Vector4::new(o.x, o.y, o.z, 1.0);
        let dh = Vector4::new(dir.x, dir.y, dir.z, 0.0);
        let a = dh.dot(&(m * dh));
        let b = 2.0 * dh.dot(&(m * oh));
        let c = oh.dot(&(m * oh));
        let roots = quadratic_roots(a, b, c);
        let mut hits: Vec<Point3> = Vec::new();
        for t in roots {
            let x = polish(&q, &o, &dir, t);
            if x.norm() <= 1.0 && q.algebraic_distance(&x).abs() < 1e-10 {
                hits.push(x);
            }
        }
        if hits.is_empty() {
            continue;
        }
        let x = hits[rng.random_range(0..hits.len())];
        out.push(OrientedPoint::new(x, surface_normal(&q, &x)));
    }
    Ok(out)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b.abs() > 1e-14 * scale { vec![-c / b] } else { Vec::new() };
    }
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        // tangent rays and double planes produce a zero discriminant up to rounding
        if disc < -1e-12 * (b * b + (4.0 * a * c).abs()) {
            return Vec::new();
        }
        disc = 0.0;
    }
    let s = disc.sqrt();
    let qq = -0.5 * (b + b.signum() * s);
    if qq == 0.0 {
        return vec![0.0];
    }
    vec![qq / a, c / qq]
}

/// Newton iterations on `t ↦ d_q(o + t·dir)`.
fn polish(q: &QuadricCoefficients, o: &Point3, dir: &Point3, mut t: f64) -> Point3 {
    for _ in 0..8 {
        let x = o + dir * t;
        let f = q.algebraic_distance(&x);
        if f.abs() < 1e-15 {
            break;
        }
        let df = q.gradient(&x).dot(dir);
        if df.abs() < 1e-12 {
            break;
        }
        t -= f / df;
    }
    o + dir * t
}

/// On-surface points that share one gradient magnitude (the median over a
/// random sample). On such points the regularized fit is exact, because a
/// single scale of `q` matches every unit normal.
pub fn gradient_consistent_points<R: Rng + ?Sized>(q: &QuadricCoefficients, count: usize, rng: &mut R) -> Result<Vec<OrientedPoint>> {
    let q = q.normalized();
    let probe = sample_surface(&q, 50, rng)?;
    let mut norms: Vec<f64> = probe.iter().map(|p| q.gradient(&p.position).norm()).collect();
    let g = median(&mut norms);
    let block: Matrix3<f64> = q.matrix().as_matrix().fixed_view::<3, 3>(0, 0).into_owned();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 200 * count.max(1) {
            return Err(Error::UnsampleableSurface);
        }
        let mut x = sample_surface(&q, 1, rng)?[0].position;
        let mut ok = false;
        for _ in 0..60 {
            let grad = q.gradient(&x);
            let f = nalgebra::Vector2::new(q.algebraic_distance(&x), grad.norm_squared() - g * g);
            if f.norm() < 1e-14 {
                ok = true;
                break;
            }
            // rows: ∇d_q and ∇|∇Q|² = 4 M ∇Q
            let j = nalgebra::Matrix2x3::from_rows(&[grad.transpose(), (block * grad * 4.0).transpose()]);
            let jjt = j * j.transpose();
            let Some(inv) = jjt.try_inverse() else { break };
            x -= j.transpose() * (inv * f);
        }
        if ok && x.norm() <= 1.0 && q.algebraic_distance(&x).abs() < 1e-12 {
            out.push(OrientedPoint::new(x, surface_normal(&q, &x)));
        }
    }
    Ok(out)
}

/// Uniform points in the unit ball with random unit normals.
pub fn uniform_clutter<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<OrientedPoint> {
    (0..count)
        .map(|_| OrientedPoint::new(random_in_ball(rng, 1.0), random_unit_vector(rng)))
        .collect()
}

/// Bounding-box diagonal of the surface part inside the unit ball.
pub fn quadric_size(q: &QuadricCoefficients) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5153);
    let Ok(pts) = sample_surface(q, 500, &mut rng) else { return 0.0 };
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    for p in &pts {
        lo = lo.inf(&p.position);
        hi = hi.sup(&p.position);
    }
    (hi - lo).norm()
}

/// Gaussian position noise of std `sigma * size`. With `perturb_normals`
/// the normals are re-estimated from the `k` nearest noisy neighbors and
/// flipped toward the original normals.
pub fn add_noise<R: Rng + ?Sized>(
    points: &[OrientedPoint],
    sigma: f64,
    size: f64,
    perturb_normals: bool,
    k: usize,
    rng: &mut R,
) -> Vec<OrientedPoint> {
    if sigma == 0.0 {
        return points.to_vec();
    }
    let std = sigma * size;
    let moved: Vec<Point3> = points
        .iter()
        .map(|p| {
            let d = Point3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            p.position + d * std
        })
        .collect();
    if !perturb_normals || points.len() < 3 {
        return moved.into_iter().zip(points).map(|(x, p)| OrientedPoint::new(x, p.normal)).collect();
    }
    let diameter = crate::quadric::bounding_diameter(moved.iter());
    let index = SceneIndex::new(moved.clone(), (diameter / 50.0).max(1e-9));
    moved
        .iter()
        .zip(points)
        .map(|(x, p)| {
            let nbrs: Vec<Point3> = index.knn(x, k).into_iter().map(|i| moved[i]).collect();
            let n = match local_normal(&nbrs) {
                Some(n) if n.dot(&p.normal) < 0.0 => -n,
                Some(n) => n,
                None => p.normal,
            };
            OrientedPoint::new(*x, n)
        })
        .collect()
}

/// Distance from `x` to the zero set of `q`.
///
/// Starts with Newton projection along the gradient and alternates
/// tangent-plane projection of `x` with re-projection onto the surface
/// until `x - y` is parallel to `∇Q(y)`.
pub fn geometric_distance(q: &QuadricCoefficients, x: &Point3) -> f64 {
    let q = q.normalized();
    if q.matrix().rank(crate::quadric::CLASSIFY_RANK_TOL) == 1 {
        // (n·x - d)²: the gradient vanishes on the surface
        let eig = SymmetricEigen::new(*q.matrix().as_matrix());
        let k = eig.eigenvalues.iamax();
        let v = eig.eigenvectors.column(k);
        let n = Point3::new(v[0], v[1], v[2]);
        if n.norm() > 1e-12 {
            return (n.dot(x) + v[3]).abs() / n.norm();
        }
    }
    if q.gradient(x).norm() < 1e-12 {
        return nearest_by_sampling(&q, x);
    }
    let mut y = project(&q, x);
    for _ in 0..50 {
        let g = q.gradient(&y);
        if g.norm() < 1e-12 {
            break;
        }
        let gh = g.normalize();
        let target = x - gh * (x - y).dot(&gh);
        let next = project(&q, &target);
        let step = (next - y).norm();
        y = next;
        if step < 1e-14 {
            break;
        }
    }
    if q.algebraic_distance(&y).abs() > 1e-9 {
        return nearest_by_sampling(&q, x);
    }
    (x - y).norm()
}

fn project(q: &QuadricCoefficients, start: &Point3) -> Point3 {
    let mut y = *start;
    for _ in 0..20 {
        let f = q.algebraic_distance(&y);
        let g = q.gradient(&y);
        let g2 = g.norm_squared();
        if f.abs() < 1e-15 || g2 < 1e-24 {
            break;
        }
        y -= g * (f / g2);
    }
    y
}

fn nearest_by_sampling(q: &QuadricCoefficients, x: &Point3) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e6561);
    match sample_surface(q, 2000, &mut rng) {
        Ok(pts) => pts.iter().map(|p| (p.position - x).norm()).fold(f64::INFINITY, f64::min),
        Err(_) => f64::INFINITY,
    }
}

/// Labeled synthetic scene.
#[derive(Debug, Clone)]
pub struct GroundTruthScene {
    pub quadrics: Vec<QuadricCoefficients>,
    /// Noisy points as handed to a fit or detector.
    pub points: Vec<OrientedPoint>,
    /// Noise-free counterparts of `points` (clutter is copied).
    pub clean: Vec<OrientedPoint>,
    /// Quadric index per point; `None` marks clutter.
    pub labels: Vec<Option<usize>>,
    pub noise_sigma: f64,
}

impl GroundTruthScene {
    pub fn count_label(&self, label: Option<usize>) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }
}

/// Surface samples of every quadric (noise std `sigma` times the quadric's
/// size, normals re-estimated when `sigma > 0`) plus uniform clutter making
/// up `clutter_fraction` of the result.
pub fn compose_scene<R: Rng + ?Sized>(
    quadrics: &[QuadricCoefficients],
    per_surface: usize,
    clutter_fraction: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<GroundTruthScene> {
    if !(0.0..1.0).contains(&clutter_fraction) {
        return Err(Error::InvalidConfig("clutter fraction must lie in [0, 1)".into()));
    }
    let mut scene = GroundTruthScene {
        quadrics: quadrics.to_vec(),
        points: Vec::new(),
        clean: Vec::new(),
        labels: Vec::new(),
        noise_sigma: sigma,
    };
    for (id, q) in quadrics.iter().enumerate() {
        let clean = sample_surface(q, per_surface, rng)?;
        let noisy = add_noise(&clean, sigma, quadric_size(q), sigma > 0.0, 12, rng);
        scene.points.extend(noisy);
        scene.clean.extend(clean);
        scene.labels.extend(std::iter::repeat_n(Some(id), per_surface));
    }
    let surface = scene.points.len() as f64;
    let clutter = (surface * clutter_fraction / (1.0 - clutter_fraction)).round() as usize;
    let noise = uniform_clutter(clutter, rng);
    scene.clean.extend(noise.iter().copied());
    scene.points.extend(noise);
    scene.labels.extend(std::iter::repeat_n(None, clutter));
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::fit_approx;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn class_requests_are_honored() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for class in [
            QuadricClass::Central,
            QuadricClass::NonCentralDegenerate,
            QuadricClass::Plane,
            QuadricClass::PlanePair,
        ] {
            for _ in 0..10 {
                let q = random_quadric(&mut rng, Some(class)).unwrap();
                assert_eq!(q.matrix().classify(), class);
            }
        }
        let q = random_quadric(&mut rng, Some(QuadricClass::Plane)).unwrap();
        assert_eq!(q.matrix().rank(1e-7), 1);
    }

    #[test]
    fn any_class_covers_all_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            seen.insert(random_quadric(&mut rng, None).unwrap().matrix().classify());
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn unit_sphere_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in sample_surface(&QuadricCoefficients::unit_sphere(), 100, &mut rng).unwrap() {
            assert!((p.position.norm() - 1.0).abs() < 1e-10);
            assert!((p.normal - p.position).norm() < 1e-9);
        }
    }

    #[test]
    fn imaginary_ellipsoid_is_unsampleable() {
        let q = QuadricCoefficients::from_array([1.0, 1.0, 1.0, 0., 0., 0., 0., 0., 0., 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(sample_surface(&q, 10, &mut rng), Err(Error::UnsampleableSurface)));
    }

    #[test]
    fn samples_of_planes_and_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for class in [QuadricClass::Plane, QuadricClass::PlanePair] {
            let q = random_quadric(&mut rng, Some(class)).unwrap();
            for p in sample_surface(&q, 50, &mut rng).unwrap() {
                assert!(q.algebraic_distance(&p.position).abs() < 1e-10);
                assert!((p.normal.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn four_samples_of_consistent_points_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_quadric(&mut rng, Some(QuadricClass::Central)).unwrap();
        let pts = gradient_consistent_points(&q, 4, &mut rng).unwrap();
        let fit = fit_approx(&pts, 1.0).unwrap();
        assert!(fit.q.distance(&q) < 1e-8);
    }

    #[test]
    fn noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = sample_surface(&QuadricCoefficients::unit_sphere(), 10_000, &mut rng).unwrap();
        assert_eq!(add_noise(&pts, 0.0, 1.0, true, 12, &mut rng), pts);
        let noisy = add_noise(&pts, 0.01, 1.0, false, 12, &mut rng);
        let var: f64 = noisy
            .iter()
            .zip(&pts)
            .map(|(a, b)| (a.position - b.position).norm_squared())
            .sum::<f64>()
            / (3.0 * pts.len() as f64);
        assert!((var.sqrt() - 0.01).abs() < 0.001);
        let renormed = add_noise(&pts[..2000], 0.01, 1.0, true, 12, &mut rng);
        for (a, b) in renormed.iter().zip(&pts[..2000]) {
            assert!(a.normal.dot(&b.normal) >= 0.0);
        }
    }

    #[test]
    fn distance_examples() {
        let s = QuadricCoefficients::unit_sphere();
        assert!((geometric_distance(&s, &Point3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((geometric_distance(&s, &Point3::new(0.0, 0.3, 0.0)) - 0.7).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_ellipsoid(&mut rng, 0.3, 0.7, 0.2);
        for p in sample_surface(&q, 20, &mut rng).unwrap() {
            assert!(geometric_distance(&q, &p.position) < 1e-10);
        }
    }

    #[test]
    fn distance_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3 {
            let q = random_quadric(&mut rng, Some(QuadricClass::Central)).unwrap();
            let dense = sample_surface(&q, 200_000, &mut rng).unwrap();
            let base = sample_surface(&q, 5, &mut rng).unwrap();
            for p in base {
                let x = p.position + p.normal * Rng::random_range(&mut rng, -0.05..0.05) + random_unit_vector(&mut rng) * 0.01;
                let exact = geometric_distance(&q, &x);
                let brute = dense.iter().map(|s| (s.position - x).norm()).fold(f64::INFINITY, f64::min);
                // brute force can only overestimate
                assert!(exact <= brute + 1e-9, "{exact} > {brute}");
                assert!(brute - exact < 1e-2, "{exact} vs {brute}");
            }
        }
    }

    #[test]
    fn scene_composition_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let q = random_ellipsoid(&mut rng, 0.3, 0.5, 0.1);
        let pure = compose_scene(&[q], 200, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(pure.points.len(), 200);
        assert_eq!(pure.count_label(None), 0);
        let half = compose_scene(&[q], 200, 0.5, 0.01, &mut rng).unwrap();
        assert_eq!(half.count_label(Some(0)), 200);
        assert!((half.count_label(None) as i64 - 200).abs() <= 1);
        for (p, l) in pure.points.iter().zip(&pure.labels) {
            assert_eq!(*l, Some(0));
            assert!(q.normalized().algebraic_distance(&p.position).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn samples_lie_on_surface(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_quadric(&mut rng, None).unwrap();
            for p in sample_surface(&q, 20, &mut rng).unwrap() {
                prop_assert!(q.algebraic_distance(&p.position).abs() < 1e-10);
                prop_assert!((p.normal.norm() - 1.0).abs() < 1e-12);
                prop_assert!(p.position.norm() <= 1.0);
            }
        }
    }
}
