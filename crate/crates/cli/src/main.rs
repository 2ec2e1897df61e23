//! `quadric`: fit, detect, synthesize and benchmark quadrics from the shell.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quadric_core::detector::{estimate_normals, prepare, NormalOrientation};
use quadric_core::fitting::{fit_approx, fit_full, fit_sphere, fit_taubin, DEFAULT_OMEGA};
use quadric_core::io::{
    load_config, read_cloud, sweep_csv, to_json, write_cloud, write_json, CloudData, CloudFormat,
    DetectionReport, FitReport, QuadricEntry, SceneTruth, SimilarityRecord, SphereEntry, SphereFit, Timings,
    SCHEMA_VERSION,
};
use quadric_core::synth::{compose_scene, random_quadric, sweep, FitMethod, SweepConfig};
use quadric_core::{detect, detect_spheres, DetectorConfig, Point3, PointCloud, QuadricClass, QuadricCoefficients};

const EXIT_INPUT: u8 = 2;
const EXIT_TOO_FEW: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "quadric", version, about = "Quadric fitting and detection in point clouds")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record wall-clock timings in the output.
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a single quadric to a whole cloud.
    Fit(FitArgs),
    /// Detect quadrics in a cluttered cloud.
    Detect(DetectArgs),
    /// Write a synthetic scene and its ground truth.
    Synth(SynthArgs),
    /// Run the noise sweep and print a CSV table.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Full,
    Approx,
    Taubin,
    Sphere,
}

#[derive(Args, Debug)]
struct FitArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "approx")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_OMEGA)]
    omega: f64,
    /// Neighbors for normal estimation when the file has no normals.
    #[arg(long, default_value_t = 12)]
    normal_k: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DetectorKind {
    Generic,
    Sphere,
}

#[derive(Args, Debug)]
struct DetectArgs {
    input: PathBuf,
    /// Detector configuration, TOML or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau_s: Option<f64>,
    #[arg(long)]
    tau_n: Option<f64>,
    #[arg(long)]
    s_min: Option<usize>,
    #[arg(long)]
    max_bases: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "type", value_enum, default_value = "generic")]
    kind: DetectorKind,
    /// Exit with status 3 unless at least this many detections are found.
    #[arg(long)]
    expect_min: Option<usize>,
    /// Also report coefficients in the normalized working frame.
    #[arg(long)]
    debug: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SceneClass {
    /// Alternating central and non-central quadrics.
    Mixed,
    Any,
    Central,
    NonCentral,
    Sphere,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Cloud file; the format follows the extension (.ply, .xyz, .xyzn).
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    surfaces: usize,
    #[arg(long, value_enum, default_value = "mixed")]
    class: SceneClass,
    /// Samples per surface.
    #[arg(long, default_value_t = 500)]
    points: usize,
    /// Share of clutter points in the scene.
    #[arg(long, default_value_t = 0.3)]
    clutter: f64,
    /// Noise std as a fraction of each surface's size.
    #[arg(long, default_value_t = 0.005)]
    sigma: f64,
    /// Write PLY as ASCII instead of binary.
    #[arg(long)]
    ascii: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.02,0.03,0.04,0.05")]
    sigma_grid: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    quadrics: usize,
    #[arg(long, value_delimiter = ',', default_value = "ours-full,ours-approx,taubin")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 9)]
    fit_points: usize,
    #[arg(long, default_value_t = 200)]
    vertices: usize,
    #[arg(long, default_value_t = DEFAULT_OMEGA)]
    omega: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

enum Outcome {
    Done,
    TooFew { found: usize, needed: usize },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::TooFew { found, needed }) => {
            eprintln!("expected at least {needed} detections, found {found}");
            ExitCode::from(EXIT_TOO_FEW)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Detect(args) => run_detect(args, cli.timings),
        Command::Synth(args) => run_synth(args),
        Command::Bench(args) => run_bench(args, cli.timings),
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Oriented points from a file, estimating normals (viewpoint at the
/// origin) when it carries none.
fn load_oriented(path: &Path, k: usize) -> Result<(PointCloud, usize)> {
    let data = read_cloud(path)?;
    let count = data.len();
    if data.is_empty() {
        bail!("{} contains no points", path.display());
    }
    let cloud = match data.oriented() {
        Some(cloud) => cloud,
        None => estimate_normals(&data.positions, k, NormalOrientation::Viewpoint(Point3::zeros()))?,
    };
    Ok((cloud, count))
}

fn run_fit(args: &FitArgs) -> Result<Outcome> {
    let (cloud, _) = load_oriented(&args.input, args.normal_k)?;
    let points = &cloud.points;
    let mut sphere = None;
    let (name, q) = match args.method {
        Method::Full => ("ours-full", fit_full(points, args.omega)?.q),
        Method::Approx => ("ours-approx", fit_approx(points, args.omega)?.q),
        Method::Taubin => ("taubin", fit_taubin(&cloud.positions())?.q),
        Method::Sphere => {
            let (c, r) = fit_sphere(points, args.omega)?;
            sphere = Some(SphereFit {
                center: [c.x, c.y, c.z],
                radius: r,
            });
            ("sphere", QuadricCoefficients::sphere(&c, r))
        }
    };
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        method: name.into(),
        omega: args.omega,
        points: points.len(),
        q: q.to_array(),
        class: q.matrix().classify().to_string(),
        residual: mean_abs_distance(&q, points.iter().map(|p| &p.position)),
        sphere,
    };
    emit(&to_json(&report)?, args.output.as_deref())?;
    Ok(Outcome::Done)
}

fn mean_abs_distance<'a>(q: &QuadricCoefficients, points: impl ExactSizeIterator<Item = &'a Point3>) -> f64 {
    let n = points.len().max(1) as f64;
    points.map(|p| q.algebraic_distance(p).abs()).sum::<f64>() / n
}

fn effective_config(args: &DetectArgs) -> Result<DetectorConfig> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => DetectorConfig::default(),
    };
    if let Some(v) = args.tau_s {
        config.tau_s = v;
    }
    if let Some(v) = args.tau_n {
        config.tau_n = v;
    }
    if let Some(v) = args.s_min {
        config.s_min = v;
    }
    if let Some(v) = args.max_bases {
        config.max_bases = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    Ok(config)
}

fn run_detect(args: &DetectArgs, timings: bool) -> Result<Outcome> {
    let config = effective_config(args)?;
    let start = Instant::now();
    let (cloud, input_points) = load_oriented(&args.input, config.normal_k)?;
    let prepared = prepare(&cloud, &config)?;
    let prepared_at = start.elapsed().as_secs_f64();
    let sim = prepared.similarity;
    let (quadrics, spheres) = match args.kind {
        DetectorKind::Generic => {
            let hyps = detect(&prepared.cloud, &config)?;
            let entries = hyps.iter().map(|h| QuadricEntry::from_hypothesis(h, &sim, args.debug)).collect();
            (entries, Vec::new())
        }
        DetectorKind::Sphere => {
            let found = detect_spheres(&prepared.cloud, &config)?;
            (Vec::new(), found.iter().map(|s| SphereEntry::from_detection(s, &sim)).collect())
        }
    };
    let total = start.elapsed().as_secs_f64();
    let found = quadrics.len() + spheres.len();
    let report = DetectionReport {
        schema_version: SCHEMA_VERSION,
        detector: match args.kind {
            DetectorKind::Generic => "generic",
            DetectorKind::Sphere => "sphere",
        }
        .into(),
        input: args.input.display().to_string(),
        seed: config.seed,
        input_points,
        sampled_points: prepared.cloud.len(),
        normalization: SimilarityRecord::from(&sim),
        config,
        quadrics,
        spheres,
        timings: timings.then_some(Timings {
            prepare_s: prepared_at,
            detect_s: total - prepared_at,
            total_s: total,
        }),
    };
    emit(&to_json(&report)?, args.output.as_deref())?;
    match args.expect_min {
        Some(needed) if found < needed => Ok(Outcome::TooFew { found, needed }),
        _ => Ok(Outcome::Done),
    }
}

fn scene_quadric(class: SceneClass, k: usize, rng: &mut ChaCha8Rng) -> Result<QuadricCoefficients> {
    use rand::Rng;
    let class = match class {
        SceneClass::Mixed if k.is_multiple_of(2) => Some(QuadricClass::Central),
        SceneClass::Mixed => Some(QuadricClass::NonCentralDegenerate),
        SceneClass::Any => None,
        SceneClass::Central => Some(QuadricClass::Central),
        SceneClass::NonCentral => Some(QuadricClass::NonCentralDegenerate),
        SceneClass::Sphere => {
            let r = rng.random_range(0.3..0.6);
            let c = quadric_core::synth::random_in_ball(rng, 0.3);
            return Ok(QuadricCoefficients::sphere(&c, r));
        }
    };
    Ok(random_quadric(rng, class)?)
}

fn run_synth(args: &SynthArgs) -> Result<Outcome> {
    let format = match CloudFormat::from_path(&args.output)? {
        CloudFormat::PlyBinaryLittleEndian if args.ascii => CloudFormat::PlyAscii,
        f => f,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let quadrics = (0..args.surfaces)
        .map(|k| scene_quadric(args.class, k, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let scene = compose_scene(&quadrics, args.points, args.clutter, args.sigma, &mut rng)?;
    let data = match format {
        CloudFormat::Xyz => CloudData {
            positions: scene.points.iter().map(|p| p.position).collect(),
            normals: None,
        },
        _ => CloudData::from_points(&scene.points),
    };
    write_cloud(&args.output, &data, format)?;
    if let Some(path) = &args.truth {
        write_json(&SceneTruth::from_scene(&scene, args.seed), path)?;
    }
    Ok(Outcome::Done)
}

fn run_bench(args: &BenchArgs, timings: bool) -> Result<Outcome> {
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<FitMethod>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let config = SweepConfig {
        methods,
        sigmas: args.sigma_grid.clone(),
        quadrics: args.quadrics,
        trials: args.trials,
        fit_points: args.fit_points,
        vertices: args.vertices,
        omega: args.omega,
        seed: args.seed,
        record_runtime: timings,
    };
    let rows = sweep(&config)?;
    emit(&sweep_csv(&rows), args.output.as_deref())?;
    Ok(Outcome::Done)
}
