//! Polynomial term-structure models driven by a scalar diffusion
//! `dZ = b(Z) dt + sqrt(a(Z)) dW` on a bounded interval, with short rate
//! `R(Z)` and zero-coupon bond prices that are degree-`n` polynomials in the
//! state.
//!
//! * [`model`]: parameter sets and the feasibility constraints
//! * [`feller`]: endpoint classification
//! * [`pricing`]: companion matrix, bond prices and yields
//! * [`spectral`]: invariant density, moments, eigen-expansion, long rate
//! * [`sim`]: Euler Monte Carlo
//! * [`calib`]: the one-factor example model and its calibration

pub mod calib;
pub mod error;
pub mod expm;
pub mod feller;
pub mod model;
pub mod poly;
pub mod pricing;
pub mod quad;
pub mod sim;
pub mod spectral;

pub use calib::{calibrate, example_to_general, ExampleModelParams, YieldDataset};
pub use error::{Error, Result};
pub use feller::{classify_orders, classify_simple, feller_report, Verdict};
pub use model::{in_pn, to_canonical, to_general, CanonicalParams, GeneralParams, ParamSet};
pub use poly::{Interval, Polynomial};
pub use pricing::{bond_price, build_s, pde_residual, zero_yield, CompanionMatrix, Pricer};
pub use sim::{mc_price, MCEstimate, SimConfig};
pub use spectral::{invariant_density, spectrum, InvariantDensity, SpectralData, Spectrum};
