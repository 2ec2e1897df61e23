//! Quadric fitting from oriented points and multi-quadric detection by
//! null-space voting.

pub mod detector;
pub mod error;
pub mod fitting;
pub mod io;
pub mod linalg;
pub mod quadric;
pub mod synth;
pub mod voting;

pub use detector::{detect, detect_spheres, DetectionHypothesis, DetectorConfig};
pub use error::{Error, Result};
pub use fitting::{fit_approx, fit_full, fit_sphere, fit_taubin, FitResult};
pub use quadric::{OrientedPoint, Plane, Point3, PointCloud, QuadricClass, QuadricCoefficients, QuadricMatrix};
