//! Adaptive Simpson quadrature on finite intervals, panel chains, and the
//! real line via the tangent substitution.
//!
//! The error control is the embedded Richardson estimate |S2 - S1| / 15 per
//! subinterval; a subinterval is accepted when that estimate meets its share
//! of the tolerance, and the corrected value S2 + (S2 - S1)/15 is accumulated.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("evaluation budget {budget} exhausted; best estimate {estimate} +/- {error_estimate}")]
    BudgetExhausted { budget: usize, estimate: f64, error_estimate: f64 },
    #[error("integrand returned a non-finite value at {at}")]
    NonFiniteSample { at: f64 },
    #[error("invalid integration range: {0}")]
    BadRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions<R: Real> {
    /// Absolute tolerance on the accumulated error estimate.
    pub tol: R,
    /// Hard cap on integrand evaluations across the whole call.
    pub max_evals: usize,
}

impl<R: Real> Default for QuadOptions<R> {
    fn default() -> Self {
        Self { tol: R::of_f64(1e-8), max_evals: 1_000_000 }
    }
}

impl<R: Real> QuadOptions<R> {
    pub fn with_tol(tol: R) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<R: Real> {
    pub value: R,
    pub error_estimate: R,
    pub evals: usize,
}

struct Workspace<'a, R: Real, F: FnMut(R) -> R> {
    f: &'a mut F,
    evals: usize,
    max_evals: usize,
    value_so_far: R,
    error_so_far: R,
}

impl<R: Real, F: FnMut(R) -> R> Workspace<'_, R, F> {
    fn eval(&mut self, x: R) -> Result<R, QuadError> {
        if self.evals >= self.max_evals {
            return Err(QuadError::BudgetExhausted {
                budget: self.max_evals,
                estimate: self.value_so_far.as_f64(),
                error_estimate: self.error_so_far.as_f64(),
            });
        }
        self.evals += 1;
        let y = (self.f)(x);
        if !y.is_finite() {
            return Err(QuadError::NonFiniteSample { at: x.as_f64() });
        }
        Ok(y)
    }
}

fn simpson<R: Real>(h: R, fa: R, fm: R, fb: R) -> R {
    h / R::of(6) * (fa + R::of(4) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<R: Real, F: FnMut(R) -> R>(
    ws: &mut Workspace<R, F>,
    a: R,
    fa: R,
    m: R,
    fm: R,
    b: R,
    fb: R,
    whole: R,
    tol: R,
) -> Result<R, QuadError> {
    let lm = (a + m) / R::of(2);
    let rm = (m + b) / R::of(2);
    // interval no longer splittable in this float format; accept as is
    if lm <= a || lm >= m || rm <= m || rm >= b {
        ws.value_so_far = ws.value_so_far + whole;
        return Ok(whole);
    }
    let flm = ws.eval(lm)?;
    let frm = ws.eval(rm)?;
    let left = simpson(m - a, fa, flm, fm);
    let right = simpson(b - m, fm, frm, fb);
    let delta = (left + right - whole) / R::of(15);
    if delta.abs() <= tol {
        let v = left + right + delta;
        ws.value_so_far = ws.value_so_far + v;
        ws.error_so_far = ws.error_so_far + delta.abs();
        Ok(v)
    } else {
        let half_tol = tol / R::of(2);
        let l = refine(ws, a, fa, lm, flm, m, fm, left, half_tol)?;
        let r = refine(ws, m, fm, rm, frm, b, fb, right, half_tol)?;
        Ok(l + r)
    }
}

/// Integrates f over [a, b].
pub fn integrate<R: Real, F: FnMut(R) -> R>(
    mut f: F,
    a: R,
    b: R,
    opts: QuadOptions<R>,
) -> Result<Quadrature<R>, QuadError> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(QuadError::BadRange(format!("bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Quadrature { value: R::zero(), error_estimate: R::zero(), evals: 0 });
    }
    if a > b {
        let flipped = integrate(f, b, a, opts)?;
        return Ok(Quadrature { value: -flipped.value, ..flipped });
    }
    let mut ws = Workspace {
        f: &mut f,
        evals: 0,
        max_evals: opts.max_evals,
        value_so_far: R::zero(),
        error_so_far: R::zero(),
    };
    let m = (a + b) / R::of(2);
    let fa = ws.eval(a)?;
    let fm = ws.eval(m)?;
    let fb = ws.eval(b)?;
    let whole = simpson(b - a, fa, fm, fb);
    let value = refine(&mut ws, a, fa, m, fm, b, fb, whole, opts.tol)?;
    Ok(Quadrature { value, error_estimate: ws.error_so_far, evals: ws.evals })
}

/// Integrates f over the chain of panels [p0, p1], [p1, p2], ...
///
/// Points must be finite and strictly increasing; the tolerance is divided
/// evenly across panels so the total honors `opts.tol`.
pub fn integrate_panels<R: Real, F: FnMut(R) -> R>(
    mut f: F,
    points: &[R],
    opts: QuadOptions<R>,
) -> Result<Quadrature<R>, QuadError> {
    if points.len() < 2 {
        return Err(QuadError::BadRange("need at least two panel points".into()));
    }
    for w in points.windows(2) {
        if !(w[0].is_finite() && w[1].is_finite() && w[0] < w[1]) {
            return Err(QuadError::BadRange(format!(
                "panel points must be finite and strictly increasing near {}",
                w[0]
            )));
        }
    }
    let panels = points.len() - 1;
    let per_panel = QuadOptions {
        tol: opts.tol / R::from_usize(panels).unwrap(),
        max_evals: opts.max_evals,
    };
    let mut total = Quadrature { value: R::zero(), error_estimate: R::zero(), evals: 0 };
    let mut budget_left = opts.max_evals;
    for w in points.windows(2) {
        let q = integrate(&mut f, w[0], w[1], QuadOptions { max_evals: budget_left, ..per_panel })
            .map_err(|e| match e {
                // report the whole-call budget, not the remainder
                QuadError::BudgetExhausted { estimate, error_estimate, .. } => {
                    QuadError::BudgetExhausted {
                        budget: opts.max_evals,
                        estimate: total.value.as_f64() + estimate,
                        error_estimate: total.error_estimate.as_f64() + error_estimate,
                    }
                }
                other => other,
            })?;
        total.value = total.value + q.value;
        total.error_estimate = total.error_estimate + q.error_estimate;
        total.evals += q.evals;
        budget_left = budget_left.saturating_sub(q.evals);
    }
    Ok(total)
}

/// Integrates f over the whole real line via u = tan(theta).
///
/// `interior_breaks` lists u values where the integrand loses smoothness
/// (payoff kinks); they become panel boundaries after the substitution. The
/// integrand must decay at least like 1/u^2 for the transformed integrand to
/// stay bounded at the ends; the endpoints are pulled in by a relative 1e-12
/// which biases the result by O(1e-12) times the tail constant.
pub fn integrate_real_line<R: Real, F: FnMut(R) -> R>(
    mut f: F,
    interior_breaks: &[R],
    opts: QuadOptions<R>,
) -> Result<Quadrature<R>, QuadError> {
    let half_pi = R::FRAC_PI_2();
    let edge = half_pi * (R::one() - R::of_f64(1e-12));
    let mut thetas = vec![-edge];
    for &u in interior_breaks {
        if !u.is_finite() {
            return Err(QuadError::BadRange(format!("non-finite breakpoint {u}")));
        }
        thetas.push(u.atan());
    }
    thetas.push(edge);
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thetas.dedup_by(|a, b| (*a - *b).abs() < R::of_f64(1e-15));
    let g = move |theta: R| {
        let c = theta.cos();
        f(theta.tan()) / (c * c)
    };
    integrate_panels(g, &thetas, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts(tol: f64) -> QuadOptions<f64> {
        QuadOptions::with_tol(tol)
    }

    #[test]
    fn polynomial_is_nearly_exact() {
        let q = integrate(|x: f64| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, opts(1e-12)).unwrap();
        // antiderivative x^4/4 - x^2 + x evaluated at the ends
        assert_relative_eq!(q.value, 16.0, max_relative = 1e-13);
    }

    #[test]
    fn oscillatory_integrand_meets_tolerance() {
        let q = integrate(|x: f64| (10.0 * x).sin(), 0.0, 2.0, opts(1e-10)).unwrap();
        let exact = (1.0 - (20.0f64).cos()) / 10.0;
        assert_relative_eq!(q.value, exact, epsilon = 1e-9);
        assert!(q.error_estimate <= 1e-10);
    }

    #[test]
    fn orientation_flip_negates() {
        let fwd = integrate(|x: f64| x.exp(), 0.0, 1.0, opts(1e-10)).unwrap();
        let rev = integrate(|x: f64| x.exp(), 1.0, 0.0, opts(1e-10)).unwrap();
        assert_eq!(fwd.value, -rev.value);
    }

    #[test]
    fn budget_exhaustion_reports_failure() {
        let r = integrate(|x: f64| (1.0 / (x + 1e-9)).sin(), 0.0, 1.0, QuadOptions {
            tol: 1e-14,
            max_evals: 101,
        });
        match r {
            Err(QuadError::BudgetExhausted { budget, .. }) => assert_eq!(budget, 101),
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_sample_is_an_error() {
        let r = integrate(|x: f64| 1.0 / x, -1.0, 1.0, opts(1e-8));
        assert!(matches!(r, Err(QuadError::NonFiniteSample { .. })));
    }

    #[test]
    fn panels_split_kinks() {
        // |x| on [-1, 2]: exact 0.5 + 2.0
        let q = integrate_panels(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], opts(1e-12)).unwrap();
        assert_relative_eq!(q.value, 2.5, max_relative = 1e-13);
        assert!(integrate_panels(|x: f64| x, &[1.0, 0.0], opts(1e-8)).is_err());
        assert!(integrate_panels(|x: f64| x, &[1.0], opts(1e-8)).is_err());
    }

    #[test]
    fn real_line_gaussian_and_lorentzian() {
        let g = integrate_real_line(|u: f64| (-u * u).exp(), &[], opts(1e-10)).unwrap();
        assert_relative_eq!(g.value, std::f64::consts::PI.sqrt(), epsilon = 1e-9);

        // Lorentzian has the slowest admissible tail (exactly 1/u^2)
        let l = integrate_real_line(|u: f64| 1.0 / (u * u + 4.0), &[], opts(1e-10)).unwrap();
        assert_relative_eq!(l.value, std::f64::consts::PI / 2.0, epsilon = 1e-8);
    }

    #[test]
    fn real_line_respects_breakpoints() {
        // kinked integrand, breakpoint keeps the adaptive effort modest
        let f = |u: f64| if u < 0.3 { 0.0 } else { (-(u - 0.3)).exp() };
        let with_bp = integrate_real_line(f, &[0.3], opts(1e-10)).unwrap();
        assert_relative_eq!(with_bp.value, 1.0, epsilon = 1e-8);
    }
}
