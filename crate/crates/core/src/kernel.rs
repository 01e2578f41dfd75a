//! Finite-propagation-speed pricer: the Cauchy kernel, the gauged pricing
//! kernel, payoff admissibility analysis, and the convolution quadrature.
//!
//! The kernel G(u, t) = (1/pi) sqrt(q) t / (u^2 + q t^2) is the half-plane
//! Poisson kernel in the stretched coordinates (x, sqrt(q) t), so the pricer
//! computes the bounded harmonic extension of the gauged payoff. Convolutions
//! against Cauchy tails only converge for payoffs whose drift-removed form is
//! bounded, which is what [`check_integrability`] enforces; vanilla calls
//! always fail it.

use thiserror::Error;

use crate::gauge::{gauge_params, GaugeVariant};
use crate::model::MarketParams;
use crate::quad::{integrate_panels, integrate_real_line, QuadError, QuadOptions};
use crate::scalar::Real;

/// Safe magnitude for exponents fed to exp, shared with the gauge module.
const EXPONENT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid payoff: {0}")]
    BadPayoff(String),
    #[error("payoff not integrable against the kernel: {0}")]
    InadmissiblePayoff(InadmissibleReason),
    #[error("kernel exponent {exponent} exceeds the overflow guard")]
    Overflow { exponent: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Left,
    Right,
}

impl std::fmt::Display for Tail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tail::Left => "left",
            Tail::Right => "right",
        })
    }
}

/// Why a payoff cannot be priced: after removing the gauge drift its `tail`
/// still grows like e^{net_exponent |zeta|}.
#[derive(Debug, Clone, PartialEq)]
pub struct InadmissibleReason {
    pub tail: Tail,
    pub net_exponent: f64,
}

impl std::fmt::Display for InadmissibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "drift-removed payoff grows like e^{{{:.6} |zeta|}} on the {} tail",
            self.net_exponent, self.tail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admissibility {
    Admissible,
    Inadmissible(InadmissibleReason),
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Admissibility::Admissible)
    }
}

/// One c * e^{k zeta} term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm<R: Real> {
    pub coeff: R,
    pub exponent: R,
}

/// Sum of exponential terms valid on one interval of the log-price axis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PayoffPiece<R: Real> {
    pub terms: Vec<ExpTerm<R>>,
}

impl<R: Real> PayoffPiece<R> {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn of(terms: &[(R, R)]) -> Self {
        Self { terms: terms.iter().map(|&(coeff, exponent)| ExpTerm { coeff, exponent }).collect() }
    }

    pub fn eval(&self, zeta: R) -> R {
        self.terms.iter().fold(R::zero(), |acc, t| acc + t.coeff * (t.exponent * zeta).exp())
    }

    fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == R::zero())
    }

    /// Largest exponent carrying a nonzero coefficient.
    fn max_exponent(&self) -> Option<R> {
        self.terms
            .iter()
            .filter(|t| t.coeff != R::zero())
            .map(|t| t.exponent)
            .fold(None, |m, e| Some(m.map_or(e, |m: R| m.max(e))))
    }

    fn min_exponent(&self) -> Option<R> {
        self.terms
            .iter()
            .filter(|t| t.coeff != R::zero())
            .map(|t| t.exponent)
            .fold(None, |m, e| Some(m.map_or(e, |m: R| m.min(e))))
    }
}

/// Declared growth of a payoff at the ends of the log-price axis; validated
/// against the actual tail pieces on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthClass<R: Real> {
    CompactSupport,
    BoundedLeft,
    BoundedRight,
    Bounded,
    ExponentialOrder(R),
}

/// Piecewise payoff C(zeta, 0): `pieces[i]` is valid on
/// (breakpoints[i-1], breakpoints[i]], with the first piece extending to
/// -inf and the last to +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff<R: Real> {
    breakpoints: Vec<R>,
    pieces: Vec<PayoffPiece<R>>,
    growth: GrowthClass<R>,
}

impl<R: Real> Payoff<R> {
    pub fn new(
        breakpoints: Vec<R>,
        pieces: Vec<PayoffPiece<R>>,
        growth: GrowthClass<R>,
    ) -> Result<Self, KernelError> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(KernelError::BadPayoff(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(KernelError::BadPayoff("breakpoints must strictly increase".into()));
            }
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(KernelError::BadPayoff("breakpoints must be finite".into()));
        }
        for p in &pieces {
            for t in &p.terms {
                if !(t.coeff.is_finite() && t.exponent.is_finite()) {
                    return Err(KernelError::BadPayoff("non-finite term".into()));
                }
            }
        }
        let payoff = Self { breakpoints, pieces, growth };
        payoff.check_growth_consistency()?;
        Ok(payoff)
    }

    /// max(e^zeta - K, 0).
    pub fn call(strike: R) -> Self {
        Self {
            breakpoints: vec![strike.ln()],
            pieces: vec![
                PayoffPiece::zero(),
                PayoffPiece::of(&[(R::one(), R::one()), (-strike, R::zero())]),
            ],
            growth: GrowthClass::ExponentialOrder(R::one()),
        }
    }

    /// max(K - e^zeta, 0).
    pub fn put(strike: R) -> Self {
        Self {
            breakpoints: vec![strike.ln()],
            pieces: vec![
                PayoffPiece::of(&[(strike, R::zero()), (-R::one(), R::one())]),
                PayoffPiece::zero(),
            ],
            growth: GrowthClass::Bounded,
        }
    }

    /// Cash-or-nothing call: 1 above the strike.
    pub fn binary(strike: R) -> Self {
        Self {
            breakpoints: vec![strike.ln()],
            pieces: vec![PayoffPiece::zero(), PayoffPiece::of(&[(R::one(), R::zero())])],
            growth: GrowthClass::Bounded,
        }
    }

    /// Indicator of [lo, hi] in log-price.
    pub fn indicator(lo: R, hi: R) -> Result<Self, KernelError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(KernelError::BadPayoff(format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self {
            breakpoints: vec![lo, hi],
            pieces: vec![
                PayoffPiece::zero(),
                PayoffPiece::of(&[(R::one(), R::zero())]),
                PayoffPiece::zero(),
            ],
            growth: GrowthClass::CompactSupport,
        })
    }

    /// Long k1 call, short two mid calls, long k3 call; compactly supported.
    pub fn butterfly(k1: R, k3: R) -> Result<Self, KernelError> {
        if !(k1.is_finite() && k3.is_finite() && R::zero() < k1 && k1 < k3) {
            return Err(KernelError::BadPayoff(format!("need 0 < k1 < k3, got {k1}, {k3}")));
        }
        let k2 = (k1 + k3) / R::of(2);
        Ok(Self {
            breakpoints: vec![k1.ln(), k2.ln(), k3.ln()],
            pieces: vec![
                PayoffPiece::zero(),
                PayoffPiece::of(&[(R::one(), R::one()), (-k1, R::zero())]),
                PayoffPiece::of(&[(-R::one(), R::one()), (k3, R::zero())]),
                PayoffPiece::zero(),
            ],
            growth: GrowthClass::CompactSupport,
        })
    }

    pub fn constant(c: R) -> Self {
        Self {
            breakpoints: Vec::new(),
            pieces: vec![PayoffPiece::of(&[(c, R::zero())])],
            growth: GrowthClass::Bounded,
        }
    }

    pub fn zero() -> Self {
        Self {
            breakpoints: Vec::new(),
            pieces: vec![PayoffPiece::zero()],
            growth: GrowthClass::CompactSupport,
        }
    }

    pub fn breakpoints(&self) -> &[R] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[PayoffPiece<R>] {
        &self.pieces
    }

    pub fn growth(&self) -> GrowthClass<R> {
        self.growth
    }

    fn piece_index(&self, zeta: R) -> usize {
        self.breakpoints.partition_point(|b| *b < zeta)
    }

    pub fn eval(&self, zeta: R) -> R {
        self.pieces[self.piece_index(zeta)].eval(zeta)
    }

    fn left_tail(&self) -> &PayoffPiece<R> {
        &self.pieces[0]
    }

    fn right_tail(&self) -> &PayoffPiece<R> {
        self.pieces.last().unwrap()
    }

    /// The declared class must not promise more decay than the tail pieces
    /// deliver; checked on exponents, not numerically.
    fn check_growth_consistency(&self) -> Result<(), KernelError> {
        let left_ok = |max_order: R| match self.left_tail().min_exponent() {
            // e^{k zeta} with zeta -> -inf blows up for k < -max_order
            Some(k) => k >= -max_order,
            None => true,
        };
        let right_ok = |max_order: R| match self.right_tail().max_exponent() {
            Some(k) => k <= max_order,
            None => true,
        };
        let ok = match self.growth {
            GrowthClass::CompactSupport => {
                self.left_tail().is_zero() && self.right_tail().is_zero()
            }
            GrowthClass::BoundedLeft => left_ok(R::zero()),
            GrowthClass::BoundedRight => right_ok(R::zero()),
            GrowthClass::Bounded => left_ok(R::zero()) && right_ok(R::zero()),
            GrowthClass::ExponentialOrder(p) => {
                if !(p.is_finite() && p >= R::zero()) {
                    return Err(KernelError::BadPayoff(format!(
                        "exponential order must be a finite nonnegative number, got {p}"
                    )));
                }
                left_ok(p) && right_ok(p)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(KernelError::BadPayoff(format!(
                "declared growth {:?} is inconsistent with the tail pieces",
                self.growth
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelQuery<R: Real> {
    pub x: R,
    pub t: R,
    pub params: MarketParams<R>,
    pub tol: R,
}

impl<R: Real> KernelQuery<R> {
    pub fn new(x: R, t: R, params: MarketParams<R>, tol: R) -> Result<Self, KernelError> {
        if !(x.is_finite() && t.is_finite() && t >= R::zero()) {
            return Err(KernelError::NonPositiveTime(format!("need finite x and t >= 0, got t = {t}")));
        }
        if !(tol.is_finite() && tol > R::zero()) {
            return Err(KernelError::InvalidParameter(format!("tol must be positive, got {tol}")));
        }
        Ok(Self { x, t, params, tol })
    }
}

/// G(u, t) = (1/pi) sqrt(q) t / (u^2 + q t^2).
pub fn cauchy_kernel<R: Real>(u: R, t: R, q: R) -> Result<R, KernelError> {
    if !(t.is_finite() && t > R::zero()) {
        return Err(KernelError::NonPositiveTime(format!("{t}")));
    }
    if !(q.is_finite() && q > R::zero()) {
        return Err(KernelError::InvalidParameter(format!("q must be positive, got {q}")));
    }
    Ok(q.sqrt() * t / (R::PI() * (u * u + q * t * t)))
}

/// K(u, t) = e^{a u + b t} G(u, t) with the finite-speed gauge exponents.
pub fn pricing_kernel<R: Real>(u: R, t: R, p: &MarketParams<R>) -> Result<R, KernelError> {
    let gp = gauge_params(p, GaugeVariant::KleinGordon);
    let e = gp.a * u + gp.b * t;
    if e.abs() > R::of_f64(EXPONENT_LIMIT) {
        return Err(KernelError::Overflow { exponent: e.as_f64() });
    }
    Ok(e.exp() * cauchy_kernel(u, t, p.q())?)
}

/// Admissible iff e^{-a zeta} payoff(zeta) is bounded at both infinities,
/// the exact convergence condition against the kernel's 1/u^2 tails.
/// Boundary cases (net exponent exactly 0) give a Cauchy-integrable
/// constant/u^2 tail and are admissible.
pub fn check_integrability<R: Real>(payoff: &Payoff<R>, p: &MarketParams<R>) -> Admissibility {
    let a = gauge_params(p, GaugeVariant::KleinGordon).a;
    // boundary equality is admissible; allow for parameter rounding so
    // r = sigma^2/2 does not flip the verdict by one ulp
    let eps = |k: R| R::of_f64(1e-12) * (R::one() + a.abs() + k.abs());
    if let Some(k) = payoff.right_tail().max_exponent() {
        if k > a + eps(k) {
            return Admissibility::Inadmissible(InadmissibleReason {
                tail: Tail::Right,
                net_exponent: (k - a).as_f64(),
            });
        }
    }
    if let Some(k) = payoff.left_tail().min_exponent() {
        if k < a - eps(k) {
            return Admissibility::Inadmissible(InadmissibleReason {
                tail: Tail::Left,
                net_exponent: (a - k).as_f64(),
            });
        }
    }
    Admissibility::Admissible
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPrice<R: Real> {
    pub price: R,
    pub error_estimate: R,
    pub evals: usize,
}

/// Shared convolution core, integrating over theta where u = s tan(theta).
///
/// Under that substitution G du = d(theta)/pi exactly, so the integrand is
/// e^{b t} / pi times the per-term sum c e^{k x} e^{(a - k) u}; admissibility
/// keeps every factor bounded as theta approaches the ends. `theta_range`
/// restricts the window for clipped pricing.
fn convolve_kernel<R: Real>(
    payoff: &Payoff<R>,
    query: &KernelQuery<R>,
    theta_range: Option<(R, R)>,
) -> Result<KernelPrice<R>, KernelError> {
    let gp = gauge_params(&query.params, GaugeVariant::KleinGordon);
    let s = query.params.speed() * query.t;
    let bt = gp.b * query.t;
    if bt.abs() > R::of_f64(EXPONENT_LIMIT) {
        return Err(KernelError::Overflow { exponent: bt.as_f64() });
    }

    let half_pi = R::FRAC_PI_2();
    let edge = half_pi * (R::one() - R::of_f64(1e-12));
    let (theta_lo, theta_hi) = theta_range.unwrap_or((-edge, edge));
    let mut thetas = vec![theta_lo, theta_hi];
    for &b in payoff.breakpoints() {
        // zeta = b sits at u = x - b
        let theta = ((query.x - b) / s).atan();
        if theta > theta_lo && theta < theta_hi {
            thetas.push(theta);
        }
    }
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thetas.dedup_by(|a, b| (*a - *b).abs() < R::of_f64(1e-15));

    let prefactor = bt.exp() / R::PI();
    let x = query.x;
    let integrand = |theta: R| {
        let u = s * theta.tan();
        let zeta = x - u;
        let piece = &payoff.pieces()[payoff.piece_index(zeta)];
        piece.terms.iter().fold(R::zero(), |acc, term| {
            // grouped as e^{k x + (a - k) u}, bounded for admissible tails
            acc + term.coeff * (term.exponent * x + (gp.a - term.exponent) * u).exp()
        })
    };
    let quad = integrate_panels(
        integrand,
        &thetas,
        QuadOptions::with_tol(query.tol / prefactor.abs().max(R::of_f64(1e-300))),
    )?;
    Ok(KernelPrice {
        price: prefactor * quad.value,
        error_estimate: prefactor.abs() * quad.error_estimate,
        evals: quad.evals,
    })
}

/// Convolves the payoff with the pricing kernel at the query point.
///
/// Rejects payoffs that fail [`check_integrability`]; t = 0 returns the
/// payoff itself since the kernel collapses to a point mass there.
pub fn price_kernel<R: Real>(
    payoff: &Payoff<R>,
    query: &KernelQuery<R>,
) -> Result<KernelPrice<R>, KernelError> {
    if let Admissibility::Inadmissible(reason) = check_integrability(payoff, &query.params) {
        return Err(KernelError::InadmissiblePayoff(reason));
    }
    if query.t == R::zero() {
        return Ok(KernelPrice {
            price: payoff.eval(query.x),
            error_estimate: R::zero(),
            evals: 0,
        });
    }
    convolve_kernel(payoff, query, None)
}

/// Prices the payoff clipped to [-z, z] in log-price, skipping the
/// admissibility gate; the escape hatch behind the CLI truncation flag.
pub fn price_kernel_clipped<R: Real>(
    payoff: &Payoff<R>,
    query: &KernelQuery<R>,
    z: R,
) -> Result<KernelPrice<R>, KernelError> {
    if !(z.is_finite() && z > R::zero()) {
        return Err(KernelError::InvalidParameter(format!(
            "truncation half-width must be positive, got {z}"
        )));
    }
    if query.t == R::zero() {
        let v = if query.x.abs() <= z { payoff.eval(query.x) } else { R::zero() };
        return Ok(KernelPrice { price: v, error_estimate: R::zero(), evals: 0 });
    }
    let s = query.params.speed() * query.t;
    // zeta in [-z, z] maps to u in [x - z, x + z]
    let theta_lo = ((query.x - z) / s).atan();
    let theta_hi = ((query.x + z) / s).atan();
    convolve_kernel(payoff, query, Some((theta_lo, theta_hi)))
}

/// Max over a sample grid of |(G(., t1) * G(., t2))(u) - G(u, t1 + t2)|.
pub fn semigroup_check<R: Real>(t1: R, t2: R, q: R, tol: R) -> Result<R, KernelError> {
    for (name, v) in [("t1", t1), ("t2", t2), ("q", q), ("tol", tol)] {
        if !(v.is_finite() && v > R::zero()) {
            return Err(KernelError::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let spread = q.sqrt() * (t1 + t2);
    let mut worst = R::zero();
    let n = 13;
    for i in 0..n {
        let frac = R::from_usize(i).unwrap() / R::from_usize(n - 1).unwrap();
        let u = spread * (R::of(6) * frac - R::of(3));
        let conv = integrate_real_line(
            |v: R| {
                cauchy_kernel(u - v, t1, q).unwrap_or(R::zero())
                    * cauchy_kernel(v, t2, q).unwrap_or(R::zero())
            },
            &[R::zero(), u],
            QuadOptions::with_tol(tol / R::of(10)),
        )?;
        let dev = (conv.value - cauchy_kernel(u, t1 + t2, q)?).abs();
        worst = worst.max(dev);
    }
    Ok(worst)
}
