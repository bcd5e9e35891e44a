//! Numerical laboratory for first-order calculus on anisotropic normed grids
//! and weighted graphs.
//!
//! The crate provides, on finite metric measure models:
//!
//! * exact algebra of norms on `R^d` (evaluation, dual norms, multivalued
//!   gradient sets) — [`norm`];
//! * discrete domains, scalar/covector fields, moduli of differentials and
//!   compactly supported test families — [`space`];
//! * the one-sided pairings `D±f(∇g)` with verifiers for their calculus
//!   rules — [`dcalc`];
//! * the divergence `div(h∇g)` as a convex set of signed measures, with
//!   interval functionals, membership tests, extraction and witnesses —
//!   [`divergence`];
//! * p-energy functionals, Dirichlet minimization and sub/super/minimizer
//!   certification — [`minimize`];
//! * potential-theoretic experiments: sheaf property, composition,
//!   maximum principle, Busemann fields, Poincaré diagnostics —
//!   [`potential`].
//!
//! ```
//! use pharmlab_core::{dcalc, norm::NormSpec};
//!
//! // On the max-norm plane the dual l1 norm is not differentiable at
//! // (1,0): the covector pairs with a whole segment of gradients.
//! let linf = NormSpec::lp(2, f64::INFINITY).unwrap();
//! let (plus, minus) = dcalc::dpm_pointwise(&linf, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
//! assert_eq!((plus, minus), (1.0, -1.0));
//! ```

pub mod dcalc;
pub mod divergence;
pub mod minimize;
pub mod norm;
pub mod potential;
pub mod report;
pub mod space;

pub use dcalc::{DpmField, EpsSchedule, GridFunction, ScalarMap};
pub use divergence::{CalculusRuleReport, DivergenceInterval, MembershipReport};
pub use minimize::{
    CertificationVerdicts, CertifyReport, EnergySpec, MinimizeReport, SolverOptions,
};
pub use norm::{GradientSet, NormSpec};
pub use potential::{BusemannPair, ComposeCase, LineSpec};
pub use report::VerifierReport;
pub use space::{
    CovectorField, Domain, GraphDomain, GridDomain, ModulusField, ScalarField, SignedMeasure,
};

/// Errors shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid norm specification: {0}")]
    InvalidNorm(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("field length {got} does not match domain site count {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("subdomain has empty strict interior")]
    EmptyStrictInterior,
    #[error("test function support violates the strict interior of the subdomain")]
    SupportViolation,
    #[error("difference quotients are non-monotone beyond tolerance ({0:.3e}); norm implementation suspect")]
    NonMonotoneQuotient(f64),
    #[error("divergence extraction requires an infinitesimally strictly convex model")]
    NotStrictlyConvex,
    #[error("operation requires an infinitesimally Hilbertian model")]
    NotHilbertian,
    #[error("boundary data mismatch at site {site}: |{got} - {expected}| > 1e-12")]
    BoundaryMismatch { site: usize, got: f64, expected: f64 },
    #[error("exponent out of range (1,inf): {0}")]
    ExponentRange(f64),
    #[error("ray truncation too short: tail increment {0:.3e} above tolerance")]
    TruncationTooShort(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
