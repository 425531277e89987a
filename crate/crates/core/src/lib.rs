//! Numerical machinery for degenerate α-stable Ornstein–Uhlenbeck chains.
//!
//! The crate builds, from a symmetric spherical measure on the unit sphere
//! and a sub-diagonal chain matrix, the stable density of the associated
//! Ornstein–Uhlenbeck dynamics by Fourier inversion, the deterministic flow
//! and frozen proxy used by the perturbative (parametrix) solver for the
//! backward chain IPDE, anisotropic Hölder / thermic Besov norm estimators,
//! and an independent Monte Carlo oracle through the chain SDE.
//!
//! All numeric kernels are generic over the scalar type through [`Scalar`];
//! concrete `f64` aliases are exported at the crate root.

pub mod besov;
pub mod catalog;
pub mod error;
pub mod fftnd;
pub mod flow;
pub mod grid;
pub mod mc;
pub mod metric;
pub mod ou;
pub mod quad;
pub mod scalar;
pub mod solver;
pub mod stable;

pub use error::{KolmoError, Result};
pub use scalar::Scalar;

/// Default scalar used by the CLI and the concrete aliases below.
pub type Real = f64;

pub type SphericalMeasure64 = stable::SphericalMeasure<Real>;
pub type LevyModel64 = stable::LevyModel<Real>;
pub type GridDensity64 = grid::GridDensity<Real>;
pub type ChainMatrix64 = ou::ChainMatrix<Real>;
pub type ScaleOps64 = ou::ScaleOps<Real>;
pub type MetricParams64 = metric::MetricParams<Real>;
pub type StableDensityEvaluator64 = stable::StableDensityEvaluator<Real>;
pub type FrozenProxy64 = flow::FrozenProxy<Real>;
