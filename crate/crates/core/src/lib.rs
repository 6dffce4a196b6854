//! Non-Hermitian Hamiltonians with real spectra built as `H = H₀A`, with `H₀`
//! Hermitian and `A` positive semi-definite.
//!
//! The crate constructs such matrices for tight-binding chains, certifies
//! spectral reality and pseudo-Hermiticity, locates exceptional points,
//! analyses skin-effect localization, finds selective-pump lasing thresholds
//! with junction power flows, checks first-order perturbation theory in the
//! pump, and realizes the same structure with coupled oscillators.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32`, `f64`); matrix
//! assembly is generic over [`scalar::Field`], which also admits exact
//! rationals.

pub mod calibrate;
pub mod eig;
pub mod laser;
pub mod linalg;
pub mod matrix;
pub mod mech;
pub mod model;
pub mod perturb;
pub mod scalar;
pub mod skin;
pub mod spectra;
pub mod suite;
pub mod tolerances;

pub use eig::{eig_full, eigenvalues, EigenSystem, PairStatus};
pub use laser::{find_threshold, power_flows, PumpSpec, ThresholdResult};
pub use matrix::Matrix;
pub use model::{LatticeSpec, Model};
pub use tolerances::Tolerances;

/// Double-precision complex scalar.
pub type C64 = num_complex::Complex<f64>;
/// Double-precision complex matrix.
pub type ComplexMatrix = Matrix<f64>;
/// Single-precision complex matrix.
pub type ComplexMatrix32 = Matrix<f32>;
/// Exact rational complex matrix, for assembly checks.
pub type RationalMatrix = Matrix<num_rational::Rational64>;
