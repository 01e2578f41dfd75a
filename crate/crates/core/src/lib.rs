//! Numerics for option pricing with a finite propagation speed.
//!
//! The classical lognormal model is the q -> infinity limit of a family of
//! elliptic pricing equations indexed by a squared-speed parameter q. The
//! modules here cover both ends and the bridge between them:
//!
//! - [`model`]: market parameters, the complex drift coefficient A, and the
//!   regime diagnostic comparing |A|^2 against the mass term q/sigma^4.
//! - [`gauge`]: the exponential substitutions linking price fields to
//!   Schrodinger and Klein-Gordon forms, plus grids, fields, and CSV I/O.
//! - [`classical`]: closed-form lognormal pricing and a heat-kernel
//!   convolution pricer used as a cross-check.
//! - [`kernel`]: the Cauchy-kernel pricer valid when the mass term is
//!   negligible, with payoff admissibility analysis.
//! - [`pde`]: finite-difference discretization of the full equation, a
//!   red-black SOR boundary-value solver, and the classical-limit study.
//! - [`symmetry`]: complex-coordinate residual evaluators, finite rotation
//!   and scale invariances, and the generator algebra behind them.
//! - [`fit`]: log-return extraction and Gaussian/Cauchy maximum-likelihood
//!   fits for tail comparisons.
//!
//! Everything numeric is generic over [`scalar::Real`]; the aliases below fix
//! the common f64 instantiations.

pub mod classical;
pub mod fit;
pub mod gauge;
pub mod kernel;
pub mod model;
pub mod pde;
pub mod quad;
pub mod scalar;
pub mod symmetry;

pub use classical::{bs_closed_form, heat_kernel_price, OptionKind, VanillaSpec};
pub use gauge::{gauge_forward, gauge_inverse, gauge_params, GaugeVariant};
pub use kernel::{price_kernel, price_kernel_clipped, Payoff};
pub use model::{drift_coefficient, regime_diagnostic, MarketParams};
pub use pde::{limit_study, solve_bvp};
pub use scalar::Real;

pub type MarketParams64 = model::MarketParams<f64>;
pub type DriftCoefficient64 = model::DriftCoefficient<f64>;
pub type RegimeDiagnostic64 = model::RegimeDiagnostic<f64>;
pub type GaugeParams64 = gauge::GaugeParams<f64>;
pub type GridSpec64 = gauge::GridSpec<f64>;
pub type Field2D64 = gauge::Field2D<f64>;
pub type VanillaSpec64 = classical::VanillaSpec<f64>;
pub type Payoff64 = kernel::Payoff<f64>;
pub type KernelQuery64 = kernel::KernelQuery<f64>;
pub type KernelPrice64 = kernel::KernelPrice<f64>;
pub type DiscreteOperator64 = pde::DiscreteOperator<f64>;
pub type BoundaryData64 = pde::BoundaryData<f64>;
pub type Solution64 = pde::Solution<f64>;
pub type LimitStudy64 = pde::LimitStudy<f64>;
pub type ComplexField64 = symmetry::ComplexField<f64>;
pub type PriceSeries64 = fit::PriceSeries<f64>;
pub type FitResult64 = fit::FitResult<f64>;
