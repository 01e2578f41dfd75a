//! Price-series ingestion and maximum-likelihood fits of Gaussian and Cauchy
//! models to log-returns, with log-likelihood and Kolmogorov-Smirnov
//! statistics so the two tail hypotheses can be compared on the same data.

use chrono::NaiveDate;
use thiserror::Error;

use crate::scalar::{normal_cdf, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: price must be positive and finite")]
    NonPositivePrice { line: usize },
    #[error("line {line}: dates must be strictly increasing")]
    NonMonotoneDate { line: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("sample values are all identical, nothing to fit")]
    DegenerateSample,
    #[error("sample contains a non-finite value")]
    NonFiniteSample,
    #[error("likelihood maximization did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
}

/// Dated positive prices in strictly increasing date order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries<R: Real> {
    rows: Vec<(NaiveDate, R)>,
}

impl<R: Real> PriceSeries<R> {
    pub fn new(rows: Vec<(NaiveDate, R)>) -> Result<Self, FitError> {
        for (i, (date, price)) in rows.iter().enumerate() {
            let line = i + 2;
            if !(price.is_finite() && *price > R::zero()) {
                return Err(FitError::NonPositivePrice { line });
            }
            if i > 0 && rows[i - 1].0 >= *date {
                return Err(FitError::NonMonotoneDate { line });
            }
        }
        Ok(Self { rows })
    }

    /// Parses `date,price` CSV; line numbers in errors count the header as
    /// line 1. Dates are ISO yyyy-mm-dd.
    pub fn parse_csv(text: &str) -> Result<Self, FitError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "date,price" => {}
            other => {
                return Err(FitError::Parse {
                    line: 1,
                    message: format!("expected header 'date,price', got {:?}", other.map(|o| o.1)),
                })
            }
        }
        let mut rows = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let mut fields = row.split(',');
            let date_tok = fields.next().unwrap_or("");
            let date: NaiveDate = date_tok.trim().parse().map_err(|e| FitError::Parse {
                line,
                message: format!("bad date {date_tok:?}: {e}"),
            })?;
            let price_tok = fields.next().ok_or_else(|| FitError::Parse {
                line,
                message: "missing price column".into(),
            })?;
            let price = price_tok.trim().parse::<f64>().map(R::of_f64).map_err(|e| {
                FitError::Parse { line, message: format!("bad price {price_tok:?}: {e}") }
            })?;
            if fields.next().is_some() {
                return Err(FitError::Parse { line, message: "too many columns".into() });
            }
            if !(price.is_finite() && price > R::zero()) {
                return Err(FitError::NonPositivePrice { line });
            }
            if let Some((prev, _)) = rows.last() {
                if *prev >= date {
                    return Err(FitError::NonMonotoneDate { line });
                }
            }
            rows.push((date, price));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(NaiveDate, R)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// ln(P_{i+1} / P_i) for consecutive rows.
pub fn log_returns<R: Real>(series: &PriceSeries<R>) -> Result<Vec<R>, FitError> {
    if series.len() < 2 {
        return Err(FitError::TooShort { needed: 2, got: series.len() });
    }
    Ok(series.rows.windows(2).map(|w| (w[1].1 / w[0].1).ln()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitModel<R: Real> {
    Gaussian { mean: R, stdev: R },
    Cauchy { location: R, scale: R },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult<R: Real> {
    pub model: FitModel<R>,
    pub log_likelihood: R,
    pub ks_statistic: R,
    pub n: usize,
}

fn check_sample<R: Real>(xs: &[R]) -> Result<(), FitError> {
    if xs.len() < 3 {
        return Err(FitError::TooShort { needed: 3, got: xs.len() });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(FitError::NonFiniteSample);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return Err(FitError::DegenerateSample);
    }
    Ok(())
}

/// Largest distance between the sample's empirical CDF and a fitted CDF.
fn ks_statistic<R: Real>(sorted: &[R], cdf: impl Fn(R) -> R) -> R {
    let n = R::of(sorted.len() as i32);
    let mut worst = R::zero();
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        let hi = R::of(i as i32 + 1) / n - f;
        let lo = f - R::of(i as i32) / n;
        worst = worst.max(hi.abs()).max(lo.abs());
    }
    worst
}

fn sorted_copy<R: Real>(xs: &[R]) -> Vec<R> {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    s
}

/// Linearly interpolated quantile of presorted data.
fn quantile<R: Real>(sorted: &[R], p: R) -> R {
    let idx = p * R::of(sorted.len() as i32 - 1);
    let lo = idx.floor();
    let frac = idx - lo;
    let i = lo.as_f64() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] * (R::one() - frac) + sorted[i + 1] * frac
}

/// Closed-form Gaussian MLE: sample mean and the biased (1/n) standard
/// deviation, which is the likelihood maximizer.
pub fn fit_gaussian<R: Real>(xs: &[R]) -> Result<FitResult<R>, FitError> {
    check_sample(xs)?;
    let n = R::of(xs.len() as i32);
    let mean = xs.iter().fold(R::zero(), |s, x| s + *x) / n;
    let var = xs.iter().fold(R::zero(), |s, x| s + (*x - mean).powi(2)) / n;
    let stdev = var.sqrt();
    let two = R::of(2);
    let log_norm = (two * R::PI()).ln() / two + stdev.ln();
    let log_likelihood = xs
        .iter()
        .fold(R::zero(), |s, x| s - log_norm - (*x - mean).powi(2) / (two * var));
    let sorted = sorted_copy(xs);
    let ks = ks_statistic(&sorted, |x| normal_cdf((x - mean) / stdev));
    Ok(FitResult {
        model: FitModel::Gaussian { mean, stdev },
        log_likelihood,
        ks_statistic: ks,
        n: xs.len(),
    })
}

fn cauchy_log_likelihood<R: Real>(xs: &[R], location: R, scale: R) -> R {
    let n = R::of(xs.len() as i32);
    let base = n * (scale.ln() - R::PI().ln());
    xs.iter().fold(base, |s, x| {
        let d = *x - location;
        s - (scale * scale + d * d).ln()
    })
}

/// Cauchy MLE by damped Newton on the score equations, started from the
/// median and half the interquartile range. Newton directions that do not
/// ascend are replaced by scaled gradient steps, so every iteration moves
/// uphill; failure to reach score norm 1e-10 is reported, never papered over.
pub fn fit_cauchy<R: Real>(xs: &[R]) -> Result<FitResult<R>, FitError> {
    check_sample(xs)?;
    let sorted = sorted_copy(xs);
    let half = R::of_f64(0.5);
    let quarter = R::of_f64(0.25);
    let mut location = quantile(&sorted, half);
    let mut scale = (quantile(&sorted, R::of_f64(0.75)) - quantile(&sorted, quarter)) * half;
    if scale <= R::zero() {
        // heavy ties can empty the interquartile range; fall back to spread
        scale = (sorted[sorted.len() - 1] - sorted[0]) * quarter;
    }
    let tol = R::of_f64(1e-10);
    let max_iter = 200;
    let two = R::of(2);
    let four = R::of(4);
    let n = R::of(xs.len() as i32);
    let mut loglik = cauchy_log_likelihood(xs, location, scale);
    for iteration in 0..max_iter {
        let mut g_mu = R::zero();
        let mut g_ga = n / scale;
        let mut h_mumu = R::zero();
        let mut h_muga = R::zero();
        let mut h_gaga = -n / (scale * scale);
        for x in xs {
            let d = *x - location;
            let denom = scale * scale + d * d;
            let denom2 = denom * denom;
            g_mu = g_mu + two * d / denom;
            g_ga = g_ga - two * scale / denom;
            h_mumu = h_mumu + two * (d * d - scale * scale) / denom2;
            h_muga = h_muga - four * scale * d / denom2;
            h_gaga = h_gaga + two * (scale * scale - d * d) / denom2;
        }
        if g_mu.abs().max(g_ga.abs()) < tol {
            let ks = ks_statistic(&sorted, |x| {
                half + ((x - location) / scale).atan() / R::PI()
            });
            return Ok(FitResult {
                model: FitModel::Cauchy { location, scale },
                log_likelihood: loglik,
                ks_statistic: ks,
                n: xs.len(),
            });
        }
        let det = h_mumu * h_gaga - h_muga * h_muga;
        let (mut step_mu, mut step_ga) = if det.abs() > R::zero() {
            ((-g_mu * h_gaga + g_ga * h_muga) / det, (-g_ga * h_mumu + g_mu * h_muga) / det)
        } else {
            // singular curvature: fall back to a small ascent step
            (g_mu * scale / n, g_ga * scale / n)
        };
        if g_mu * step_mu + g_ga * step_ga <= R::zero() {
            // indefinite curvature can aim Newton downhill, where damping
            // only shrinks the step to nothing; take the gradient instead
            step_mu = g_mu * scale / n;
            step_ga = g_ga * scale / n;
        }
        // damp until the likelihood actually rises and the scale stays positive
        let mut accepted = false;
        for _ in 0..60 {
            let cand_loc = location + step_mu;
            let cand_scale = scale + step_ga;
            if cand_scale > R::zero() {
                let cand = cauchy_log_likelihood(xs, cand_loc, cand_scale);
                if cand >= loglik {
                    location = cand_loc;
                    scale = cand_scale;
                    loglik = cand;
                    accepted = true;
                    break;
                }
            }
            step_mu = step_mu * half;
            step_ga = step_ga * half;
        }
        if !accepted {
            return Err(FitError::NoConvergence { iterations: iteration + 1 });
        }
    }
    Err(FitError::NoConvergence { iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Cauchy, Distribution, Normal};

    fn series(text: &str) -> PriceSeries<f64> {
        PriceSeries::parse_csv(text).unwrap()
    }

    #[test]
    fn parses_a_valid_file() {
        let s = series("date,price\n2024-01-02,100.0\n2024-01-03,101.5\n");
        assert_eq!(s.len(), 2);
        assert_eq!(s.rows()[1].1, 101.5);
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let zero = PriceSeries::<f64>::parse_csv("date,price\n2024-01-02,100\n2024-01-03,0\n");
        assert_eq!(zero.unwrap_err(), FitError::NonPositivePrice { line: 3 });
        let shuffled =
            PriceSeries::<f64>::parse_csv("date,price\n2024-01-03,100\n2024-01-02,101\n");
        assert_eq!(shuffled.unwrap_err(), FitError::NonMonotoneDate { line: 3 });
        let garbled = PriceSeries::<f64>::parse_csv("date,price\n2024-13-40,100\n");
        assert!(matches!(garbled.unwrap_err(), FitError::Parse { line: 2, .. }));
        let no_header = PriceSeries::<f64>::parse_csv("time,close\n2024-01-02,100\n");
        assert!(matches!(no_header.unwrap_err(), FitError::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicate_dates_are_not_monotone() {
        let dup = PriceSeries::<f64>::parse_csv("date,price\n2024-01-02,100\n2024-01-02,101\n");
        assert_eq!(dup.unwrap_err(), FitError::NonMonotoneDate { line: 3 });
    }

    #[test]
    fn log_return_oracles() {
        let s = series("date,price\n2024-01-02,1.0\n2024-01-03,2.718281828459045\n");
        let r = log_returns(&s).unwrap();
        assert_relative_eq!(r[0], 1.0, max_relative = 1e-15);

        let s = series("date,price\n2024-01-02,100\n2024-01-03,110\n2024-01-04,99\n");
        let r = log_returns(&s).unwrap();
        assert_eq!(r.len(), 2);
        assert_relative_eq!(r[0], 0.09531017980432486, max_relative = 1e-15);
        assert_relative_eq!(r[1], -0.10536051565782628, max_relative = 1e-15);

        let flat = series("date,price\n2024-01-02,7\n2024-01-03,7\n2024-01-04,7\n");
        assert!(log_returns(&flat).unwrap().iter().all(|r| *r == 0.0));

        let short = series("date,price\n2024-01-02,7\n");
        assert_eq!(log_returns(&short).unwrap_err(), FitError::TooShort { needed: 2, got: 1 });
    }

    #[test]
    fn gaussian_mle_on_three_points() {
        let fit = fit_gaussian(&[-1.0, 0.0, 1.0]).unwrap();
        let FitModel::Gaussian { mean, stdev } = fit.model else { panic!("wrong model") };
        assert_relative_eq!(mean, 0.0, epsilon = 1e-15);
        // likelihood maximizer uses the 1/n variance: sqrt(2/3)
        assert_relative_eq!(stdev, 0.816496580927726, max_relative = 1e-12);
        assert_eq!(fit.n, 3);
        assert!(fit.ks_statistic > 0.0 && fit.ks_statistic < 1.0);
    }

    #[test]
    fn cauchy_mle_on_three_points() {
        let fit = fit_cauchy(&[-1.0, 0.0, 1.0]).unwrap();
        let FitModel::Cauchy { location, scale } = fit.model else { panic!("wrong model") };
        // score equations solve to location 0, scale 1/sqrt(3)
        assert_relative_eq!(location, 0.0, epsilon = 1e-10);
        assert_relative_eq!(scale, 0.5773502691896258, max_relative = 1e-9);
    }

    #[test]
    fn indefinite_curvature_at_the_start_still_converges() {
        // three daily log returns whose median start sits where the Hessian
        // is indefinite and the raw Newton direction points downhill; the
        // optimum below was frozen from a separate grid-plus-descent search
        let xs = [
            (101.0f64 / 100.0).ln(),
            (99.5f64 / 101.0).ln(),
            (100.8f64 / 99.5).ln(),
        ];
        let fit = fit_cauchy(&xs).unwrap();
        let FitModel::Cauchy { location, scale } = fit.model else { panic!("wrong model") };
        assert_relative_eq!(location, 0.011121439, max_relative = 1e-6);
        assert_relative_eq!(scale, 0.002590219, max_relative = 1e-6);
    }

    #[test]
    fn symmetric_samples_center_both_fits_at_zero() {
        let xs = [-2.0, -0.5, 0.0, 0.5, 2.0];
        let FitModel::Gaussian { mean, .. } = fit_gaussian(&xs).unwrap().model else {
            panic!()
        };
        let FitModel::Cauchy { location, .. } = fit_cauchy(&xs).unwrap().model else { panic!() };
        assert_relative_eq!(mean, 0.0, epsilon = 1e-10);
        assert_relative_eq!(location, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_and_short_samples_are_rejected() {
        assert_eq!(fit_gaussian(&[1.0, 2.0]).unwrap_err(), FitError::TooShort { needed: 3, got: 2 });
        assert_eq!(fit_cauchy(&[3.0, 3.0, 3.0]).unwrap_err(), FitError::DegenerateSample);
        assert_eq!(
            fit_gaussian(&[1.0, f64::NAN, 2.0]).unwrap_err(),
            FitError::NonFiniteSample
        );
    }

    fn assert_equivariant(fit: impl Fn(&[f64]) -> (f64, f64)) {
        let xs = [0.3, -1.2, 0.7, 2.1, -0.4, 0.05, 1.4, -2.3];
        let (loc0, scale0) = fit(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.37).collect();
        let (loc_s, scale_s) = fit(&shifted);
        assert_relative_eq!(loc_s, loc0 + 0.37, epsilon = 1e-9);
        assert_relative_eq!(scale_s, scale0, max_relative = 1e-9);
        let stretched: Vec<f64> = xs.iter().map(|x| x * 2.5).collect();
        let (loc_k, scale_k) = fit(&stretched);
        assert_relative_eq!(loc_k, loc0 * 2.5, epsilon = 1e-9);
        assert_relative_eq!(scale_k, scale0 * 2.5, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_fit_is_shift_and_scale_equivariant() {
        assert_equivariant(|xs| {
            let FitModel::Gaussian { mean, stdev } = fit_gaussian(xs).unwrap().model else {
                panic!()
            };
            (mean, stdev)
        });
    }

    #[test]
    fn cauchy_fit_is_shift_and_scale_equivariant() {
        assert_equivariant(|xs| {
            let FitModel::Cauchy { location, scale } = fit_cauchy(xs).unwrap().model else {
                panic!()
            };
            (location, scale)
        });
    }

    #[test]
    fn likelihood_ranks_the_generating_family_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let cauchy = Cauchy::new(0.0f64, 1.0).unwrap();
        let heavy: Vec<f64> = (0..10_000).map(|_| cauchy.sample(&mut rng)).collect();
        let g = fit_gaussian(&heavy).unwrap();
        let c = fit_cauchy(&heavy).unwrap();
        assert!(
            c.log_likelihood > g.log_likelihood,
            "cauchy {} should beat gaussian {}",
            c.log_likelihood,
            g.log_likelihood
        );
        assert!(c.ks_statistic < 0.05, "ks {}", c.ks_statistic);

        let normal = Normal::new(0.0f64, 1.0).unwrap();
        let light: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let g = fit_gaussian(&light).unwrap();
        let c = fit_cauchy(&light).unwrap();
        assert!(
            g.log_likelihood > c.log_likelihood,
            "gaussian {} should beat cauchy {}",
            g.log_likelihood,
            c.log_likelihood
        );
        assert!(g.ks_statistic < 0.05, "ks {}", g.ks_statistic);
    }

    #[test]
    fn ks_statistic_detects_a_gross_mismatch() {
        let xs: Vec<f64> = (0..50).map(|i| 10.0 + 0.01 * i as f64).collect();
        let sorted = sorted_copy(&xs);
        // fitted CDF centered far away puts nearly all mass left of the data
        let ks = ks_statistic(&sorted, |x| normal_cdf(x + 5.0));
        assert!(ks > 0.99 && ks <= 1.0);
    }

    #[test]
    fn quantile_interpolates_linearly() {
        let sorted = [-1.0, 0.0, 1.0];
        assert_eq!(quantile(&sorted, 0.5), 0.0);
        assert_eq!(quantile(&sorted, 0.25), -0.5);
        assert_eq!(quantile(&sorted, 0.75), 0.5);
        assert_eq!(quantile(&sorted, 1.0), 1.0);
    }
}
