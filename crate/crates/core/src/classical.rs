//! Infinite-q oracle pricers: the Black-Scholes closed form and an
//! independent pricer that smooths the drift-removed payoff with a Gaussian
//! kernel and undoes the gauge factor afterwards.
//!
//! Both price the same contracts; they share no numerical path, so their
//! agreement is a meaningful cross-check rather than a tautology.

use thiserror::Error;

use crate::gauge::{gauge_params, GaugeVariant};
use crate::model::MarketParams;
use crate::quad::{integrate_panels, QuadError, QuadOptions};
use crate::scalar::{normal_cdf, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassicalError {
    #[error("invalid contract: {0}")]
    InvalidContract(String),
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

/// European vanilla contract together with the spot it is priced at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanillaSpec<R: Real> {
    pub kind: OptionKind,
    pub strike: R,
    pub maturity: R,
    pub spot: R,
}

impl<R: Real> VanillaSpec<R> {
    pub fn new(kind: OptionKind, strike: R, maturity: R, spot: R) -> Result<Self, ClassicalError> {
        for (name, v) in [("strike", strike), ("maturity", maturity), ("spot", spot)] {
            if !(v.is_finite() && v > R::zero()) {
                return Err(ClassicalError::InvalidContract(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { kind, strike, maturity, spot })
    }

    pub fn intrinsic(&self) -> R {
        match self.kind {
            OptionKind::Call => (self.spot - self.strike).max(R::zero()),
            OptionKind::Put => (self.strike - self.spot).max(R::zero()),
        }
    }
}

fn check_market<R: Real>(sigma: R, rate: R) -> Result<(), ClassicalError> {
    if !(sigma.is_finite() && sigma > R::zero()) {
        return Err(ClassicalError::InvalidContract(format!("sigma must be positive, got {sigma}")));
    }
    if !(rate.is_finite() && rate >= R::zero()) {
        return Err(ClassicalError::InvalidContract(format!(
            "rate must be nonnegative and finite, got {rate}"
        )));
    }
    Ok(())
}

/// Black-Scholes closed form.
pub fn bs_closed_form<R: Real>(
    spec: &VanillaSpec<R>,
    sigma: R,
    rate: R,
) -> Result<R, ClassicalError> {
    check_market(sigma, rate)?;
    let (s, k, tau) = (spec.spot, spec.strike, spec.maturity);
    let sig_sqrt_t = sigma * tau.sqrt();
    let disc = (-rate * tau).exp();
    let d1 = ((s / k).ln() + (rate + sigma * sigma / R::of(2)) * tau) / sig_sqrt_t;
    let d2 = d1 - sig_sqrt_t;
    Ok(match spec.kind {
        OptionKind::Call => s * normal_cdf(d1) - k * disc * normal_cdf(d2),
        OptionKind::Put => k * disc * normal_cdf(-d2) - s * normal_cdf(-d1),
    })
}

/// Gaussian density with the given variance.
fn heat_kernel<R: Real>(y: R, variance: R) -> R {
    let two_pi = R::of(2) * R::PI();
    (-y * y / (R::of(2) * variance)).exp() / (two_pi * variance).sqrt()
}

/// Prices by convolving e^{-a zeta} payoff(zeta) with the heat kernel of
/// variance sigma^2 tau, then multiplying by e^{a x - b tau}.
///
/// `exponents` lists the powers k of e^{k zeta} appearing in the payoff and
/// `breaks` its kink locations; they steer truncation and panel placement.
/// The truncation window covers every Gaussian center x + (k - a) sigma^2 tau
/// padded by 12 standard deviations, so the discarded tail mass is below
/// 1e-30 of the integrand scale.
pub(crate) fn heat_convolve_price<R: Real>(
    x: R,
    tau: R,
    sigma: R,
    rate: R,
    payoff: impl Fn(R) -> R,
    exponents: &[R],
    breaks: &[R],
    tol: R,
) -> Result<R, ClassicalError> {
    let params = MarketParams::new(sigma, rate, R::one()).expect("validated upstream");
    let gp = gauge_params(&params, GaugeVariant::Schrodinger);
    let variance = sigma * sigma * tau;
    let pad = R::of(12) * variance.sqrt();

    let mut lo = x;
    let mut hi = x;
    for &k in exponents {
        let center = x + (k - gp.a) * variance;
        lo = lo.min(center);
        hi = hi.max(center);
    }
    let mut points = vec![lo - pad, hi + pad];
    for &b in breaks {
        if b > points[0] && b < points[1] {
            points.push(b);
        }
    }
    points.sort_by(|p, q| p.partial_cmp(q).unwrap());

    let prefactor = (gp.a * x - gp.b * tau).exp();
    let quad = integrate_panels(
        |zeta: R| heat_kernel(x - zeta, variance) * (-gp.a * zeta).exp() * payoff(zeta),
        &points,
        QuadOptions::with_tol(tol / (R::of(2) * prefactor)),
    )?;
    Ok(prefactor * quad.value)
}

/// Independent vanilla pricer through the gauge mapping; agrees with
/// [`bs_closed_form`] to the requested tolerance.
pub fn heat_kernel_price<R: Real>(
    spec: &VanillaSpec<R>,
    sigma: R,
    rate: R,
    tol: R,
) -> Result<R, ClassicalError> {
    check_market(sigma, rate)?;
    if !(tol.is_finite() && tol > R::zero()) {
        return Err(ClassicalError::InvalidContract(format!("tol must be positive, got {tol}")));
    }
    let x = spec.spot.ln();
    let log_k = spec.strike.ln();
    let k = spec.strike;
    let kind = spec.kind;
    let payoff = move |zeta: R| match kind {
        OptionKind::Call => (zeta.exp() - k).max(R::zero()),
        OptionKind::Put => (k - zeta.exp()).max(R::zero()),
    };
    heat_convolve_price(
        x,
        spec.maturity,
        sigma,
        rate,
        payoff,
        &[R::zero(), R::one()],
        &[log_k],
        tol,
    )
}
