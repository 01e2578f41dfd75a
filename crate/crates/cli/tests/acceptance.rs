//! Release gate: every blocking check in one target, one verdict line per
//! check in the harness output.  Each check pins both the numeric bar and a
//! wall-clock ceiling, so a regression in accuracy and a regression in cost
//! both turn the line red.

use std::process::Command;
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use rqf_core::classical::{bs_closed_form, heat_kernel_price, OptionKind, VanillaSpec};
use rqf_core::fit::{self, FitModel};
use rqf_core::gauge::{
    gauge_forward, gauge_inverse, gauge_params, Field2D, GaugeVariant, GridSpec,
};
use rqf_core::kernel::{cauchy_kernel, price_kernel, semigroup_check, KernelQuery, Payoff};
use rqf_core::model::{regime_diagnostic, MarketParams};
use rqf_core::pde::{
    discretize, limit_study, mass_ratio_spread, solve_bvp, BoundaryData, DifferenceScheme,
    Provenance, SolveOptions,
};
use rqf_core::quad::{integrate_real_line, QuadOptions};
use rqf_core::symmetry::witt;
use rqf_core::symmetry::{
    apply_rotation, apply_scale, harmonic_mode, massive_mode, residual_massive, residual_massless,
};

fn under(start: Instant, seconds: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < seconds, "runtime {elapsed:.2}s exceeded the {seconds}s ceiling");
}

fn mp(sigma: f64, rate: f64, q: f64) -> MarketParams<f64> {
    MarketParams::new(sigma, rate, q).unwrap()
}

#[test]
fn criterion_01_gauge_round_trip_both_variants() {
    let start = Instant::now();
    let p = mp(0.2, 0.05, 1.0);
    let grid = GridSpec::new(-1.0, 1.0, 0.0, 1.0, 21, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let values: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.5..2.0)).collect();
        let field = Field2D::new(grid, values).unwrap();
        for variant in [GaugeVariant::Schrodinger, GaugeVariant::KleinGordon] {
            let gp = gauge_params(&p, variant);
            let forward = gauge_forward(&field, &gp).unwrap();
            let back = gauge_inverse(&forward, &gp).unwrap();
            let err = back.max_abs_diff(&field).unwrap();
            assert!(err < 1e-12 * field.max_abs(), "round-trip error {err:e} ({variant:?})");
        }
    }
    under(start, 1.0);
}

#[test]
fn criterion_02_heat_kernel_matches_closed_form() {
    let start = Instant::now();
    for sigma in [0.1f64, 0.2, 0.4] {
        for rate in [0.0, 0.05, 0.15] {
            for maturity in [0.25, 1.0, 3.0] {
                for kind in [OptionKind::Call, OptionKind::Put] {
                    let spec = VanillaSpec::new(kind, 100.0, maturity, 110.0).unwrap();
                    let want = bs_closed_form(&spec, sigma, rate).unwrap();
                    let got = heat_kernel_price(&spec, sigma, rate, 1e-9).unwrap();
                    assert!(
                        (got - want).abs() < 1e-6,
                        "sigma {sigma} rate {rate} maturity {maturity} {kind:?}: {got} vs {want}"
                    );
                }
            }
        }
    }
    under(start, 10.0);
}

#[test]
fn criterion_03_classical_limit_slope_with_floor_detection() {
    let start = Instant::now();
    let p = mp(0.2, 0.05, 1.0);
    let center = 100.0f64.ln();
    let grid = GridSpec::new(center - 0.05, center + 0.05, 0.1, 0.9, 401, 401).unwrap();
    let contract = VanillaSpec::new(OptionKind::Call, 100.0, 4.0, 100.0).unwrap();
    let study = limit_study(&p, &[1e2, 1e3, 1e4, 1e5, 1e6], grid, &contract).unwrap();

    let usable: Vec<_> = study.rows.iter().filter(|r| !r.grid_limited).collect();
    assert!(usable.len() >= 2, "fewer than two rows above the floor: {:?}", study.rows);
    assert!(
        study.rows.iter().any(|r| r.grid_limited),
        "floor never detected at this spacing: {:?}",
        study.rows
    );
    for pair in usable.windows(2) {
        assert!(
            pair[1].deviation < pair[0].deviation,
            "deviation not falling above the floor: {:?}",
            study.rows
        );
    }
    let slope = study.slope.expect("no slope fitted");
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    under(start, 30.0);
}

#[test]
fn criterion_04_kernel_mass_semigroup_and_harmonicity() {
    let start = Instant::now();
    for t in [0.1f64, 1.0, 10.0] {
        for q in [0.1f64, 1.0, 10.0] {
            let mass = integrate_real_line(
                |u| cauchy_kernel(u, t, q).unwrap(),
                &[0.0],
                QuadOptions::with_tol(1e-10),
            )
            .unwrap()
            .value;
            assert!((mass - 1.0).abs() < 1e-8, "kernel mass {mass} at t {t}, q {q}");
        }
    }

    for (t1, t2) in [(1.0, 2.0), (0.5, 0.5)] {
        let dev = semigroup_check(t1, t2, 1.0, 1e-9).unwrap();
        assert!(dev < 1e-6, "semigroup deviation {dev:e} at ({t1}, {t2})");
    }

    // the bounded half-plane field built from the kernel: its hand-rolled
    // five-point residual of psi_xx + psi_tt / q must fall at second order;
    // the window sits a full unit above t = 0 so the coarsest grid is
    // already inside the asymptotic range
    let q = 0.25f64;
    let residual = |n: usize| -> f64 {
        let g = GridSpec::new(-1.0, 1.0, 1.0, 2.0, n, n).unwrap();
        let psi = |i: usize, j: usize| cauchy_kernel(g.x(i), g.t(j), q).unwrap();
        let mut worst = 0.0f64;
        for j in 1..g.nt - 1 {
            for i in 1..g.nx - 1 {
                let dxx = (psi(i + 1, j) - 2.0 * psi(i, j) + psi(i - 1, j)) / (g.hx() * g.hx());
                let dtt = (psi(i, j + 1) - 2.0 * psi(i, j) + psi(i, j - 1)) / (g.ht() * g.ht());
                worst = worst.max((dxx + dtt / q).abs());
            }
        }
        worst
    };
    let order = (residual(21) / residual(81)).log2() / 2.0;
    assert!((order - 2.0).abs() < 0.3, "harmonicity refinement order {order}");
    under(start, 20.0);
}

#[test]
fn criterion_05_mass_term_proportionality_in_the_conformal_regime() {
    let start = Instant::now();
    let p = mp(1.0, 2.0, 0.01);
    assert!(regime_diagnostic(&p).ratio > 1e4, "parameters not deep enough in the regime");
    let grid = GridSpec::new(-0.5, 0.5, 0.5, 1.0, 21, 21).unwrap();
    let payoff = Payoff::butterfly((-0.4f64).exp(), 0.4f64.exp()).unwrap();
    let field = Field2D::from_fn(grid, |x, t| {
        let query = KernelQuery::new(x, t, p, 1e-11).unwrap();
        price_kernel(&payoff, &query).unwrap().price
    })
    .unwrap();
    let op = discretize(&p, grid);
    let (mean, spread) = mass_ratio_spread(&op, &field, 1e-3).unwrap();
    let expected = -(p.q() / (2.0 * p.sigma().powi(2))
        + (p.sigma().powi(2) / 2.0 + p.rate()).powi(4) / (8.0 * p.q() * p.sigma().powi(2)));
    assert!(spread < 0.05, "ratio spread {spread}");
    assert!(
        (mean - expected).abs() < 0.05 * expected.abs(),
        "ratio {mean} vs derived constant {expected}"
    );
    under(start, 20.0);
}

#[test]
fn criterion_06_indicator_price_matches_the_arctan_closed_form() {
    let start = Instant::now();
    // a = 0 at rate sigma^2/2, so only the e^{bt} weight survives the gauge
    let p = mp(0.2, 0.02, 0.04);
    let gp = gauge_params(&p, GaugeVariant::KleinGordon);
    assert!(gp.a.abs() < 1e-15, "drift exponent not zero: {}", gp.a);
    let payoff = Payoff::indicator(-1.0, 1.0).unwrap();
    let query = KernelQuery::new(0.0, 1.0, p, 1e-10).unwrap();
    let got = price_kernel(&payoff, &query).unwrap().price;
    let want = (-0.98f64).exp() * std::f64::consts::FRAC_2_PI * 5.0f64.atan();
    assert!((got - want).abs() < 1e-8, "indicator price {got} vs closed form {want}");
    under(start, 1.0);
}

#[test]
fn criterion_07_generator_commutators_close_exactly() {
    let start = Instant::now();
    let p = mp(0.2, 0.05, 1.0);
    let a = rqf_core::model::drift_coefficient(&p);
    let a_float = Complex::new(a.re, a.im);
    let a_exact = witt::exact_complex(a_float);
    let mut worst = 0.0f64;
    for n in -3i64..=3 {
        for k in -3i64..=3 {
            for degree in 0..=6 {
                assert!(
                    witt::commutator_defect(n, k, degree, &a_exact).is_zero(),
                    "exact defect nonzero at n {n}, k {k}, degree {degree}"
                );
                worst = worst.max(witt::commutator_defect(n, k, degree, &a_float).max_coeff_norm());
            }
        }
    }
    assert!(worst < 1e-12, "float defect {worst:e}");
    under(start, 1.0);
}

#[test]
fn criterion_08_transform_invariance_with_negative_control() {
    let start = Instant::now();
    let p = mp(1.0, 0.3, 0.25);
    let rot_grid = GridSpec::new(-0.6, 0.6, 0.2, 2.2, 33, 33).unwrap();
    let scale_grid = GridSpec::new(-1.0, 1.0, 0.2, 1.2, 33, 33).unwrap();
    let k = Complex::new(1.0, 0.5);

    let massive = massive_mode(rot_grid, p, k).unwrap();
    let base = residual_massive(&massive).max_abs() / massive.interior_max_abs();
    for alpha in [0.3, 1.0] {
        let rotated = apply_rotation(&massive, alpha).unwrap();
        let moved = residual_massive(&rotated).max_abs() / rotated.interior_max_abs();
        assert!(moved < 10.0 * base, "alpha {alpha}: residual {moved:e} vs base {base:e}");
    }
    assert_eq!(apply_rotation(&massive, 0.0).unwrap(), massive, "zero rotation not bit-exact");

    let harmonic = harmonic_mode(scale_grid, p);
    let base = residual_massless(&harmonic).max_abs() / harmonic.interior_max_abs();
    for lambda in [0.5, 1.5] {
        let scaled = apply_scale(&harmonic, lambda).unwrap();
        let moved = residual_massless(&scaled).max_abs() / scaled.interior_max_abs();
        assert!(moved < 10.0 * base, "lambda {lambda}: residual {moved:e} vs base {base:e}");
    }
    assert_eq!(apply_scale(&harmonic, 1.0).unwrap(), harmonic, "unit scale not bit-exact");

    // with the mass term kept, these parameters sit outside the enlarged
    // symmetry and the same transform must blow the budget
    assert!(regime_diagnostic(&p).ratio < 1.0);
    let budget = 10.0 * base;
    let scaled = apply_scale(&harmonic, 1.5).unwrap();
    let broken = residual_massive(&scaled).max_abs() / scaled.interior_max_abs();
    assert!(broken > budget, "negative control too quiet: {broken:e} vs budget {budget:e}");
    under(start, 10.0);
}

#[test]
fn criterion_09_variation_matches_the_finite_map_at_second_order() {
    let start = Instant::now();
    let p = mp(0.2, 0.05, 1.0);
    let a = rqf_core::model::drift_coefficient(&p);
    let field = witt::SeparableField::new(vec![
        (
            witt::LaurentPoly::monomial(1, Complex::new(1.0, 0.0)),
            witt::LaurentPoly::monomial(0, Complex::new(1.0, 0.0)),
        ),
        (
            witt::LaurentPoly::monomial(2, Complex::new(1.0, 0.0)),
            witt::LaurentPoly::monomial(1, Complex::new(0.25, -0.1)),
        ),
    ]);
    let study = witt::variation_study(
        &field,
        Complex::new(a.re, a.im),
        &[1e-2, 1e-3, 1e-4],
        &witt::default_sample_points(),
    );
    assert!(
        (study.slope - 2.0).abs() < 0.2,
        "slope {} from defects {:?}",
        study.slope,
        study.defect
    );
    under(start, 5.0);
}

#[test]
fn criterion_10_solver_order_and_exact_zero() {
    let start = Instant::now();
    let p = mp(0.3, 0.1, 0.5);
    // exact exponential solutions of the printed operator, coefficients
    // written out independently of the discretization code
    let mode = |alpha: f64| -> Box<dyn Fn(f64, f64) -> f64> {
        let s2 = p.sigma() * p.sigma();
        let att = s2 / (2.0 * p.q());
        let kappa = 1.0 - (s2 / 2.0 + p.rate()).powi(2) / (2.0 * p.q());
        let c = s2 / 2.0 * alpha * alpha + (p.rate() - s2 / 2.0) * alpha - p.rate();
        let disc = kappa * kappa - 4.0 * att * c;
        assert!(disc > 0.0);
        let b1 = (-kappa + disc.sqrt()) / (2.0 * att);
        let b2 = (-kappa - disc.sqrt()) / (2.0 * att);
        let beta = if b1.abs() < b2.abs() { b1 } else { b2 };
        Box::new(move |x, t| (alpha * x + beta * t).exp())
    };
    let mode_a = mode(1.3);
    let mode_b = mode(-0.8);
    let exact = move |x: f64, t: f64| mode_a(x, t) + 0.7 * mode_b(x, t);

    let mut errors = Vec::new();
    for n in [11usize, 21, 41] {
        let grid = GridSpec::new(-1.0, 1.0, 0.2, 1.2, n, n).unwrap();
        let op = discretize(&p, grid);
        assert_eq!(op.x_scheme, DifferenceScheme::Central);
        assert_eq!(op.t_scheme, DifferenceScheme::Central);
        let bd = BoundaryData::from_fn(&grid, Provenance::UserSupplied, &exact);
        let sol = solve_bvp(
            &op,
            &bd,
            SolveOptions { tol: 1e-12, max_iter: 200_000, omega: 1.8 },
        )
        .unwrap();
        let truth = Field2D::from_fn(grid, &exact).unwrap();
        errors.push(sol.field.max_abs_diff(&truth).unwrap());
    }
    let order = (errors[0] / errors[2]).log2() / 2.0;
    assert!((order - 2.0).abs() < 0.3, "order {order} from errors {errors:?}");

    let grid = GridSpec::new(-1.0, 1.0, 0.2, 1.2, 17, 17).unwrap();
    let op = discretize(&p, grid);
    let bd = BoundaryData::from_fn(&grid, Provenance::UserSupplied, |_, _| 0.0);
    let sol = solve_bvp(&op, &bd, SolveOptions::default()).unwrap();
    assert_eq!(sol.iterations, 0);
    assert!(sol.field.values().iter().all(|v| *v == 0.0), "zero boundary left nonzero bits");
    under(start, 30.0);
}

#[test]
fn criterion_11_fit_oracles_equivariance_and_likelihood_order() {
    let start = Instant::now();
    let sample = [-1.0f64, 0.0, 1.0];
    let FitModel::Gaussian { mean, stdev } = fit::fit_gaussian(&sample).unwrap().model else {
        panic!("wrong model family")
    };
    assert!(mean.abs() < 1e-9, "gaussian mean {mean}");
    assert!((stdev - (2.0f64 / 3.0).sqrt()).abs() < 1e-9, "gaussian stdev {stdev}");
    let FitModel::Cauchy { location, scale } = fit::fit_cauchy(&sample).unwrap().model else {
        panic!("wrong model family")
    };
    assert!(location.abs() < 1e-9, "cauchy location {location}");
    assert!((scale - (1.0f64 / 3.0).sqrt()).abs() < 1e-9, "cauchy scale {scale}");

    let xs = [0.3, -1.2, 0.7, 2.1, -0.4, 0.05, 1.4, -2.3];
    let check_equivariance = |fit_loc_scale: &dyn Fn(&[f64]) -> (f64, f64)| {
        let (loc0, scale0) = fit_loc_scale(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.37).collect();
        let (loc, scale) = fit_loc_scale(&shifted);
        assert!((loc - (loc0 + 0.37)).abs() < 1e-9, "shift moved location to {loc}");
        assert!((scale - scale0).abs() < 1e-9 * scale0, "shift changed scale to {scale}");
        let stretched: Vec<f64> = xs.iter().map(|x| x * 2.5).collect();
        let (loc, scale) = fit_loc_scale(&stretched);
        assert!((loc - loc0 * 2.5).abs() < 1e-9, "stretch moved location to {loc}");
        assert!((scale - scale0 * 2.5).abs() < 1e-9 * scale0, "stretch scaled to {scale}");
    };
    check_equivariance(&|xs| {
        let FitModel::Gaussian { mean, stdev } = fit::fit_gaussian(xs).unwrap().model else {
            panic!()
        };
        (mean, stdev)
    });
    check_equivariance(&|xs| {
        let FitModel::Cauchy { location, scale } = fit::fit_cauchy(xs).unwrap().model else {
            panic!()
        };
        (location, scale)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let cauchy = rand_distr::Cauchy::new(0.0f64, 1.0).unwrap();
    let heavy: Vec<f64> = (0..10_000).map(|_| cauchy.sample(&mut rng)).collect();
    let g = fit::fit_gaussian(&heavy).unwrap();
    let c = fit::fit_cauchy(&heavy).unwrap();
    assert!(
        c.log_likelihood > g.log_likelihood,
        "heavy tails: cauchy {} vs gaussian {}",
        c.log_likelihood,
        g.log_likelihood
    );
    let normal = rand_distr::Normal::new(0.0f64, 1.0).unwrap();
    let light: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    let g = fit::fit_gaussian(&light).unwrap();
    let c = fit::fit_cauchy(&light).unwrap();
    assert!(
        g.log_likelihood > c.log_likelihood,
        "light tails: gaussian {} vs cauchy {}",
        g.log_likelihood,
        c.log_likelihood
    );
    under(start, 5.0);
}

#[test]
fn criterion_12_cli_determinism_and_error_body() {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_rqf");
    let run = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .env_remove("RQF_CONFIG")
            .output()
            .expect("binary did not run")
    };

    let cases: [&[&str]; 3] = [
        &["info", "--sigma", "0.2", "--rate", "0.05", "--q", "1e-6"],
        &[
            "price", "--method", "kernel", "--payoff", "butterfly", "--k1", "80", "--k3", "120",
            "--spot", "100", "--maturity", "1", "--sigma", "0.2", "--rate", "0.02", "--q", "0.04",
        ],
        &["limit-study", "--nx", "41", "--nt", "41", "--qs", "1e2,1e3"],
    ];
    for args in cases {
        let first = run(args);
        let second = run(args);
        assert!(
            first.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&first.stderr)
        );
        assert_eq!(first.stdout, second.stdout, "stdout differs between runs of {args:?}");
        serde_json::from_slice::<serde_json::Value>(&first.stdout).expect("stdout not JSON");
    }

    let bad = run(&[
        "price", "--method", "kernel", "--payoff", "call", "--strike", "100", "--spot", "100",
        "--maturity", "1", "--sigma", "0.2", "--rate", "0.05", "--q", "1",
    ]);
    assert_eq!(bad.status.code(), Some(1), "inadmissible payoff must exit 1");
    let body: serde_json::Value = serde_json::from_slice(&bad.stdout).expect("error body not JSON");
    let err = &body["error"];
    assert_eq!(err["kind"], "inadmissible_payoff");
    assert_eq!(err["tail"], "right");
    let net = err["net_exponent"].as_f64().expect("net_exponent missing");
    assert!((net - 1.75).abs() < 1e-9, "net exponent {net}");
    assert!(err["message"].as_str().unwrap_or("").contains("not integrable"));
    under(start, 1.0);
}
