//! Market parameters and the regime diagnostic.
//!
//! The model couples the usual volatility/rate pair with a finite
//! propagation-speed parameter `q` (squared speed in log-price units).
//! `q -> infinity` recovers the classical diffusive model; small `q` puts the
//! dynamics in the conformal regime where the Cauchy-kernel pricer applies.
//! The complex drift coefficient
//!
//! ```text
//! A = -(1/sigma^2) [ (sigma^2/2 - r) - i/(2 sqrt(q)) ((sigma^2/2 + r)^2 - 2q) ]
//! ```
//!
//! carries both pieces; the diagnostic compares |A|^2 against the mass term
//! q/sigma^4 to decide which regime the parameters sit in.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(String),
    #[error("q must be positive, got {0}")]
    NonPositiveQ(String),
    #[error("rate must be nonnegative, got {0}")]
    NegativeRate(String),
}

/// Validated market inputs: volatility, risk-free rate, squared speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams<R: Real> {
    sigma: R,
    rate: R,
    q: R,
}

impl<R: Real> MarketParams<R> {
    /// Rejects non-finite and out-of-domain inputs; q = infinity is not a
    /// valid member, the classical limit is reached through large finite q.
    pub fn new(sigma: R, rate: R, q: R) -> Result<Self, ModelError> {
        if !(sigma.is_finite() && sigma > R::zero()) {
            return Err(ModelError::NonPositiveSigma(format!("{sigma}")));
        }
        if !(rate.is_finite() && rate >= R::zero()) {
            return Err(ModelError::NegativeRate(format!("{rate}")));
        }
        if !(q.is_finite() && q > R::zero()) {
            return Err(ModelError::NonPositiveQ(format!("{q}")));
        }
        Ok(Self { sigma, rate, q })
    }

    pub fn sigma(&self) -> R {
        self.sigma
    }

    pub fn rate(&self) -> R {
        self.rate
    }

    pub fn q(&self) -> R {
        self.q
    }

    /// Same sigma and rate with a different q (used by the limit study).
    pub fn with_q(&self, q: R) -> Result<Self, ModelError> {
        Self::new(self.sigma, self.rate, q)
    }

    /// Effective mass 1/sigma^2 of the associated evolution problem.
    pub fn mass(&self) -> R {
        (self.sigma * self.sigma).recip()
    }

    /// Propagation speed sqrt(q) in log-price units.
    pub fn speed(&self) -> R {
        self.q.sqrt()
    }
}

/// Complex drift coefficient A of the conformal-coordinate equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCoefficient<R: Real> {
    pub re: R,
    pub im: R,
}

impl<R: Real> DriftCoefficient<R> {
    pub fn conj(&self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    /// |A|^2, written out to avoid intermediate complex machinery.
    pub fn norm_sqr(&self) -> R {
        self.re * self.re + self.im * self.im
    }

    pub fn as_complex(&self) -> num_complex::Complex<R> {
        num_complex::Complex::new(self.re, self.im)
    }
}

/// A from the closed form; continuous in q on (0, infinity).
pub fn drift_coefficient<R: Real>(p: &MarketParams<R>) -> DriftCoefficient<R> {
    let two = R::of(2);
    let s2 = p.sigma() * p.sigma();
    let half_s2 = s2 / two;
    let re = -(half_s2 - p.rate()) / s2;
    let im = ((half_s2 + p.rate()).powi(2) - two * p.q()) / (two * p.q().sqrt() * s2);
    DriftCoefficient { re, im }
}

/// Size comparison between |A|^2 and the mass term q/sigma^4.
///
/// `ratio >> 1` means the mass term is negligible and the conformal
/// (Cauchy-kernel) treatment applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeDiagnostic<R: Real> {
    pub mass_term: R,
    pub aabar: R,
    pub ratio: R,
}

impl<R: Real> RegimeDiagnostic<R> {
    pub fn is_conformal(&self, threshold: R) -> bool {
        self.ratio > threshold
    }
}

/// Threshold used by callers that do not configure their own.
pub fn default_conformal_threshold<R: Real>() -> R {
    R::of(100)
}

/// Computes the diagnostic directly from A rather than from any expanded
/// closed form; the two must agree to rounding (tested).
pub fn regime_diagnostic<R: Real>(p: &MarketParams<R>) -> RegimeDiagnostic<R> {
    let a = drift_coefficient(p);
    let mass_term = p.q() / p.sigma().powi(4);
    let aabar = a.norm_sqr();
    RegimeDiagnostic { mass_term, aabar, ratio: aabar / mass_term }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(sigma: f64, rate: f64, q: f64) -> MarketParams<f64> {
        MarketParams::new(sigma, rate, q).unwrap()
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(matches!(
            MarketParams::new(0.0, 0.05, 1.0),
            Err(ModelError::NonPositiveSigma(_))
        ));
        assert!(matches!(
            MarketParams::new(0.2, 0.05, -1.0),
            Err(ModelError::NonPositiveQ(_))
        ));
        assert!(matches!(
            MarketParams::new(0.2, -0.01, 1.0),
            Err(ModelError::NegativeRate(_))
        ));
        assert!(matches!(
            MarketParams::new(f64::NAN, 0.0, 1.0),
            Err(ModelError::NonPositiveSigma(_))
        ));
        assert!(matches!(
            MarketParams::new(0.2, 0.05, f64::INFINITY),
            Err(ModelError::NonPositiveQ(_))
        ));
        assert!(MarketParams::new(0.2, 0.0, 1.0).is_ok());
    }

    #[test]
    fn drift_matches_hand_evaluation() {
        // frozen from high-precision evaluation of the closed form
        let a = drift_coefficient(&p(0.2, 0.05, 1.0));
        assert_relative_eq!(a.re, 0.75, max_relative = 1e-12);
        assert_relative_eq!(a.im, -24.93875, max_relative = 1e-12);

        let a = drift_coefficient(&p(0.2, 0.05, 1e-6));
        assert_relative_eq!(a.re, 0.75, max_relative = 1e-12);
        assert_relative_eq!(a.im, 61.225, max_relative = 1e-12);
    }

    #[test]
    fn drift_vanishes_when_both_brackets_vanish() {
        // sigma^2/2 = r and (sigma^2/2 + r)^2 = 2q
        let r = 0.05f64;
        let sigma = (2.0 * r).sqrt();
        let q = (2.0 * r) * (2.0 * r) / 2.0;
        let a = drift_coefficient(&p(sigma, r, q));
        assert!(a.re.abs() < 1e-15 && a.im.abs() < 1e-15, "A = {a:?}");
    }

    #[test]
    fn drift_is_continuous_in_q() {
        let base = p(0.3, 0.04, 0.7);
        let a0 = drift_coefficient(&base);
        let mut prev = f64::INFINITY;
        for delta in [1e-3, 1e-5, 1e-7] {
            let a1 = drift_coefficient(&base.with_q(0.7 + delta).unwrap());
            let gap = ((a1.re - a0.re).powi(2) + (a1.im - a0.im).powi(2)).sqrt();
            assert!(gap < prev, "gap {gap} did not shrink (delta {delta})");
            prev = gap;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn regime_matches_frozen_values() {
        let d = regime_diagnostic(&p(0.2, 0.05, 1.0));
        assert_relative_eq!(d.mass_term, 625.0, max_relative = 1e-12);
        assert_relative_eq!(d.aabar, 622.503751562, max_relative = 1e-9);
        assert_relative_eq!(d.ratio, 0.9960060025, max_relative = 1e-9);
        assert!(!d.is_conformal(default_conformal_threshold()));

        let d = regime_diagnostic(&p(0.2, 0.05, 1e-6));
        assert_relative_eq!(d.mass_term, 6.25e-4, max_relative = 1e-12);
        assert_relative_eq!(d.aabar, 3749.063125, max_relative = 1e-9);
        assert_relative_eq!(d.ratio, 5.998501e6, max_relative = 1e-9);
        assert!(d.is_conformal(default_conformal_threshold()));
    }

    #[test]
    fn aabar_minus_mass_equals_expanded_form() {
        // |A|^2 - q/sigma^4 expands to
        // (1/sigma^4)[(s2/2-r)^2 - (s2/2+r)^2 + (s2/2+r)^4/(4q) + q] - q/sigma^4
        for (sigma, rate, q) in [(0.2, 0.05, 1.0), (0.37, 0.11, 0.013), (1.1, 0.0, 42.0)] {
            let pp = p(sigma, rate, q);
            let d = regime_diagnostic(&pp);
            let s2 = sigma * sigma;
            let s4 = s2 * s2;
            let expanded = ((s2 / 2.0 - rate).powi(2) - (s2 / 2.0 + rate).powi(2)
                + (s2 / 2.0 + rate).powi(4) / (4.0 * q)
                + q)
                / s4
                - q / s4;
            // the subtraction cancels, so compare at the scale of the operands
            let scale = d.aabar.max(d.mass_term);
            assert!(
                (d.aabar - d.mass_term - expanded).abs() <= 1e-12 * scale,
                "identity off: {} vs {expanded}",
                d.aabar - d.mass_term
            );
        }
    }

    #[test]
    fn f32_instantiation_works() {
        let pp = MarketParams::<f32>::new(0.2, 0.05, 1.0).unwrap();
        let a = drift_coefficient(&pp);
        assert!((a.re - 0.75).abs() < 1e-5);
        assert!((a.im + 24.93875).abs() < 1e-2);
    }
}
