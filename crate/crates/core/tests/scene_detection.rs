use quadric_core::detector::{denormalize, prepare};
use quadric_core::synth::{compose_scene, match_detections, random_quadric};
use quadric_core::{detect, DetectorConfig, PointCloud, QuadricClass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run_scene(seed: u64, config: &DetectorConfig) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qs = vec![
        random_quadric(&mut rng, Some(QuadricClass::Central)).unwrap(),
        random_quadric(&mut rng, Some(QuadricClass::NonCentralDegenerate)).unwrap(),
    ];
    let scene = compose_scene(&qs, 500, 0.3, 0.005, &mut rng).unwrap();
    let prepared = prepare(&PointCloud::new(scene.points.clone()), config).unwrap();
    let found: Vec<_> = detect(&prepared.cloud, config)
        .unwrap()
        .iter()
        .map(|h| denormalize(&h.q, &prepared.similarity))
        .collect();
    let m = match_detections(&found, &qs, &scene.points, config.tau, config.tau_n);
    (m.precision, m.recall)
}

#[test]
fn two_quadrics_in_clutter() {
    let config = DetectorConfig::default();
    let seeds = 300..306;
    let n = (seeds.end - seeds.start) as f64;
    let (p, r) = seeds
        .map(|s| run_scene(s, &config))
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    assert!(p / n >= 0.75, "precision {}", p / n);
    assert!(r / n >= 0.75, "recall {}", r / n);
}

#[test]
fn clean_single_cylinder() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = random_quadric(&mut rng, Some(QuadricClass::NonCentralDegenerate)).unwrap();
    let scene = compose_scene(&[q], 600, 0.0, 0.0, &mut rng).unwrap();
    let config = DetectorConfig::default();
    let prepared = prepare(&PointCloud::new(scene.points.clone()), &config).unwrap();
    let hyps = detect(&prepared.cloud, &config).unwrap();
    assert!(!hyps.is_empty());
    let top = denormalize(&hyps[0].q, &prepared.similarity);
    let m = match_detections(&[top], &[q], &scene.points, config.tau, config.tau_n);
    assert_eq!(m.recall, 1.0);
}
