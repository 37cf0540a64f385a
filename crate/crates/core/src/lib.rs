//! Numerical laboratory for uniform L^p resolvent estimates on flat tori
//! and coordinate charts.
//!
//! The crate is organised around a handful of constructive objects:
//!
//! - [`region`]: the spectral-parameter region Ξ_δ, admissible-exponent
//!   polygons in the (1/p, 1/q) plane, and the decay function σ(d);
//! - [`bessel`]: modified Bessel potentials K_m with complex argument and
//!   the radial kernels F_ν built from them;
//! - [`torus`]: exact Fourier calculus on T^n — multipliers, resolvents,
//!   spectral cluster projectors, and grid L^p norms;
//! - [`opnorm`]: lower-bound estimation of L^p → L^q operator norms by
//!   nonlinear power iteration, with a dense small-matrix oracle;
//! - [`chart`]: metric charts, geodesic shooting, and volume Jacobians;
//! - [`parametrix`]: Hadamard parametrix assembly, transport coefficients,
//!   dyadic decomposition, and remainder operators;
//! - [`oscillatory`]: oscillatory integral operators and norm-decay fits;
//! - [`carleman`]: the conjugated operator on T × T^{n-1}, Littlewood-Paley
//!   blocks, and the Carleman-to-resolvent reduction.

pub mod bessel;
pub mod carleman;
pub mod chart;
pub mod fit;
pub mod opnorm;
pub mod oscillatory;
pub mod parametrix;
pub mod quad;
pub mod region;
pub mod torus;

pub use bessel::{bessel_k, c_nu_constant, f_nu, f_nu_regime_split, BesselEval, FNuParams};
pub use carleman::{CarlemanSymbol, LpBlockIndex};
pub use chart::MetricChart;
pub use opnorm::NormEstimate;
pub use oscillatory::OscKernelSpec;
pub use parametrix::{DyadicCutoffs, ParametrixKernel, TransportCoefficients};
pub use region::{ExponentPair, RegionLabel, RegionVertexTable, SpectralParameter};
pub use torus::{GridField, TorusGrid};

/// Complex double-precision scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
