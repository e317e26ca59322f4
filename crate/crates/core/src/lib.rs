//! DDPM sampling for intrinsically low-dimensional targets.

pub mod batch;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod gaussian_exact;
pub mod linalg;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod targets;

pub use batch::{Provenance, SampleBatch, TimeLabel};
pub use error::{Error, Result};
pub use exec::Workers;
pub use sampler::SamplerVariant;
pub use noise::{Schedule, ScheduleFamily, StepCoefficients};
pub use targets::{PointCloud, ScoreOracle, SubspaceGaussian, Target};
