//! Python bindings: quadric fitting and detection on plain `(x, y, z)`
//! sequences.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quadric_core::detector::{denormalize, prepare};
use quadric_core::io::{load_config, read_cloud as core_read_cloud};
use quadric_core::synth::{compose_scene, random_quadric};
use quadric_core::{Error, OrientedPoint, Point3, PointCloud, QuadricClass, QuadricCoefficients};

type Triple = [f64; 3];
type Scene = (Vec<Triple>, Vec<Triple>, Vec<i64>, Vec<PyQuadric>);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn triple(v: &Point3) -> Triple {
    [v.x, v.y, v.z]
}

fn oriented(points: &[Triple], normals: &[Triple]) -> PyResult<Vec<OrientedPoint>> {
    if points.len() != normals.len() {
        return Err(PyValueError::new_err(format!(
            "{} points but {} normals",
            points.len(),
            normals.len()
        )));
    }
    points
        .iter()
        .zip(normals)
        .enumerate()
        .map(|(i, (p, n))| {
            OrientedPoint::with_normalized(Point3::from(*p), Point3::from(*n))
                .ok_or_else(|| PyValueError::new_err(format!("normal {i} has zero length")))
        })
        .collect()
}

fn class_name(class: QuadricClass) -> &'static str {
    match class {
        QuadricClass::Plane => "plane",
        QuadricClass::PlanePair => "plane-pair",
        QuadricClass::Central => "central",
        QuadricClass::NonCentralDegenerate => "non-central",
        QuadricClass::Other => "other",
    }
}

/// Quadric `Ax² + By² + Cz² + 2Dxy + 2Exz + 2Fyz + 2Gx + 2Hy + 2Iz + J = 0`.
#[pyclass(name = "Quadric", module = "quadric_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyQuadric(QuadricCoefficients);

#[pymethods]
impl PyQuadric {
    #[new]
    fn new(coefficients: Vec<f64>) -> PyResult<Self> {
        QuadricCoefficients::from_slice(&coefficients).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn sphere(center: Triple, radius: f64) -> Self {
        Self(QuadricCoefficients::sphere(&Point3::from(center), radius))
    }

    #[staticmethod]
    fn unit_sphere() -> Self {
        Self(QuadricCoefficients::unit_sphere())
    }

    #[getter]
    fn coefficients(&self) -> [f64; 10] {
        self.0.to_array()
    }

    fn normalized(&self) -> Self {
        Self(self.0.normalized())
    }

    fn algebraic_distance(&self, x: Triple) -> f64 {
        self.0.algebraic_distance(&Point3::from(x))
    }

    fn gradient(&self, x: Triple) -> Triple {
        triple(&self.0.gradient(&Point3::from(x)))
    }

    /// Distance between normalized coefficient vectors, up to sign.
    fn distance(&self, other: &PyQuadric) -> f64 {
        self.0.distance(&other.0)
    }

    fn classify(&self) -> &'static str {
        class_name(self.0.matrix().classify())
    }

    fn center(&self) -> PyResult<Triple> {
        self.0.matrix().center().map(|c| triple(&c)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let c: Vec<String> = self.0.to_array().iter().map(|v| format!("{v:.6}")).collect();
        format!("Quadric([{}])", c.join(", "))
    }
}

#[pyclass(name = "FitResult", module = "quadric_py", frozen, get_all)]
struct PyFitResult {
    quadric: PyQuadric,
    residual: f64,
    scales: Option<Vec<f64>>,
}

impl From<quadric_core::FitResult> for PyFitResult {
    fn from(fit: quadric_core::FitResult) -> Self {
        Self {
            quadric: PyQuadric(fit.q),
            residual: fit.residual,
            scales: fit.scales,
        }
    }
}

#[pyclass(name = "DetectorConfig", module = "quadric_py", skip_from_py_object)]
#[derive(Clone, Default)]
struct PyDetectorConfig(quadric_core::DetectorConfig);

#[pymethods]
impl PyDetectorConfig {
    #[new]
    #[pyo3(signature = (*, tau=None, tau_n=None, tau_s=None, omega=None, s_min=None, max_bases=None, seed=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        tau: Option<f64>,
        tau_n: Option<f64>,
        tau_s: Option<f64>,
        omega: Option<f64>,
        s_min: Option<usize>,
        max_bases: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let mut c = quadric_core::DetectorConfig::default();
        c.tau = tau.unwrap_or(c.tau);
        c.tau_n = tau_n.unwrap_or(c.tau_n);
        c.tau_s = tau_s.unwrap_or(c.tau_s);
        c.omega = omega.unwrap_or(c.omega);
        c.s_min = s_min.unwrap_or(c.s_min);
        c.max_bases = max_bases.unwrap_or(c.max_bases);
        c.seed = seed.unwrap_or(c.seed);
        c.validate().map_err(to_py)?;
        Ok(Self(c))
    }

    /// Reads a TOML or JSON config; missing keys keep their defaults.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        load_config(&path).map(Self).map_err(to_py)
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[getter]
    fn tau_n(&self) -> f64 {
        self.0.tau_n
    }

    #[getter]
    fn tau_s(&self) -> f64 {
        self.0.tau_s
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }

    #[getter]
    fn s_min(&self) -> usize {
        self.0.s_min
    }

    #[getter]
    fn max_bases(&self) -> usize {
        self.0.max_bases
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "Detection", module = "quadric_py", frozen, get_all)]
struct PyDetection {
    quadric: PyQuadric,
    score: f64,
    votes: usize,
    support_count: usize,
}

#[pyclass(name = "SphereDetection", module = "quadric_py", frozen, get_all)]
struct PySphereDetection {
    center: Triple,
    radius: f64,
    score: f64,
    votes: usize,
    support_count: usize,
}

fn config_or_default(config: Option<&PyDetectorConfig>) -> quadric_core::DetectorConfig {
    config.map(|c| c.0.clone()).unwrap_or_default()
}

#[pyfunction]
#[pyo3(signature = (points, normals, omega=1.0))]
fn fit_full(points: Vec<Triple>, normals: Vec<Triple>, omega: f64) -> PyResult<PyFitResult> {
    let pts = oriented(&points, &normals)?;
    quadric_core::fit_full(&pts, omega).map(Into::into).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (points, normals, omega=1.0))]
fn fit_approx(points: Vec<Triple>, normals: Vec<Triple>, omega: f64) -> PyResult<PyFitResult> {
    let pts = oriented(&points, &normals)?;
    quadric_core::fit_approx(&pts, omega).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn fit_taubin(points: Vec<Triple>) -> PyResult<PyFitResult> {
    let pts: Vec<Point3> = points.iter().map(|p| Point3::from(*p)).collect();
    quadric_core::fit_taubin(&pts).map(Into::into).map_err(to_py)
}

/// Returns `(center, radius)`.
#[pyfunction]
#[pyo3(signature = (points, normals, omega=1.0))]
fn fit_sphere(points: Vec<Triple>, normals: Vec<Triple>, omega: f64) -> PyResult<(Triple, f64)> {
    let pts = oriented(&points, &normals)?;
    let (c, r) = quadric_core::fit_sphere(&pts, omega).map_err(to_py)?;
    Ok((triple(&c), r))
}

/// Detected quadrics in the input frame, best first.
#[pyfunction]
#[pyo3(signature = (points, normals, config=None))]
fn detect(
    py: Python<'_>,
    points: Vec<Triple>,
    normals: Vec<Triple>,
    config: Option<PyRef<'_, PyDetectorConfig>>,
) -> PyResult<Vec<PyDetection>> {
    let cloud = PointCloud::new(oriented(&points, &normals)?);
    let config = config_or_default(config.as_deref());
    let found = py.detach(|| -> quadric_core::Result<_> {
        let prepared = prepare(&cloud, &config)?;
        let hyps = quadric_core::detect(&prepared.cloud, &config)?;
        Ok(hyps
            .into_iter()
            .map(|h| PyDetection {
                quadric: PyQuadric(denormalize(&h.q, &prepared.similarity)),
                score: h.score,
                votes: h.votes,
                support_count: h.support_count,
            })
            .collect())
    });
    found.map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (points, normals, config=None))]
fn detect_spheres(
    py: Python<'_>,
    points: Vec<Triple>,
    normals: Vec<Triple>,
    config: Option<PyRef<'_, PyDetectorConfig>>,
) -> PyResult<Vec<PySphereDetection>> {
    let cloud = PointCloud::new(oriented(&points, &normals)?);
    let config = config_or_default(config.as_deref());
    let found = py.detach(|| -> quadric_core::Result<_> {
        let prepared = prepare(&cloud, &config)?;
        let spheres = quadric_core::detect_spheres(&prepared.cloud, &config)?;
        Ok(spheres
            .into_iter()
            .map(|s| {
                let s = s.denormalized(&prepared.similarity);
                PySphereDetection {
                    center: triple(&s.center),
                    radius: s.radius,
                    score: s.score,
                    votes: s.votes,
                    support_count: s.support_count,
                }
            })
            .collect())
    });
    found.map_err(to_py)
}

/// Returns `(points, normals)`; `normals` is `None` for files without them.
#[pyfunction]
fn read_cloud(path: PathBuf) -> PyResult<(Vec<Triple>, Option<Vec<Triple>>)> {
    let data = core_read_cloud(&path).map_err(to_py)?;
    let points = data.positions.iter().map(triple).collect();
    let normals = data.normals.map(|ns| ns.iter().map(triple).collect());
    Ok((points, normals))
}

/// Synthetic scene: `(points, normals, labels, quadrics)` with label -1 for
/// clutter.
#[pyfunction]
#[pyo3(signature = (surfaces=2, points_per_surface=500, clutter=0.3, sigma=0.005, seed=0))]
fn random_scene(
    surfaces: usize,
    points_per_surface: usize,
    clutter: f64,
    sigma: f64,
    seed: u64,
) -> PyResult<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quadrics = (0..surfaces)
        .map(|k| {
            let class = if k % 2 == 0 {
                QuadricClass::Central
            } else {
                QuadricClass::NonCentralDegenerate
            };
            random_quadric(&mut rng, Some(class))
        })
        .collect::<quadric_core::Result<Vec<_>>>()
        .map_err(to_py)?;
    let scene = compose_scene(&quadrics, points_per_surface, clutter, sigma, &mut rng).map_err(to_py)?;
    Ok((
        scene.points.iter().map(|p| triple(&p.position)).collect(),
        scene.points.iter().map(|p| triple(&p.normal)).collect(),
        scene.labels.iter().map(|l| l.map_or(-1, |i| i as i64)).collect(),
        quadrics.into_iter().map(PyQuadric).collect(),
    ))
}

#[pymodule]
fn quadric_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuadric>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyDetectorConfig>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PySphereDetection>()?;
    m.add_function(wrap_pyfunction!(fit_full, m)?)?;
    m.add_function(wrap_pyfunction!(fit_approx, m)?)?;
    m.add_function(wrap_pyfunction!(fit_taubin, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sphere, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(detect_spheres, m)?)?;
    m.add_function(wrap_pyfunction!(read_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(random_scene, m)?)?;
    Ok(())
}
