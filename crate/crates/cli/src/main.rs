//! Command-line front end for the pricing library.
//!
//! Every successful run prints exactly one JSON object on stdout carrying the
//! command name, the fully resolved settings, the command-specific inputs,
//! and the result, so a run can be reproduced from its own output.  Domain
//! failures (inadmissible payoffs, solver divergence, unreadable input data)
//! print `{"error": {...}}` on stdout and exit 1.  Malformed invocations and
//! config files report to stderr and exit 2.  Output is deterministic: the
//! same invocation on the same inputs produces byte-identical stdout.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex;
use serde_json::{json, Value};

use config::Settings;
use rqf_core::classical::{bs_closed_form, heat_kernel_price, ClassicalError, OptionKind, VanillaSpec};
use rqf_core::gauge::{GaugeError, GridSpec};
use rqf_core::kernel::{
    check_integrability, price_kernel, price_kernel_clipped, KernelError, KernelQuery, Payoff,
};
use rqf_core::model::{
    default_conformal_threshold, drift_coefficient, regime_diagnostic, MarketParams, ModelError,
};
use rqf_core::pde::{
    discretize, limit_study, solve_bvp, BoundaryData, PdeError, Provenance, SolveOptions,
};
use rqf_core::symmetry::witt;
use rqf_core::symmetry::{
    apply_rotation, apply_scale, harmonic_mode, massive_mode, residual_massive, residual_massless,
    SymmetryError,
};
use rqf_core::fit::{self, FitError, FitModel};

#[derive(Parser)]
#[command(
    name = "rqf",
    version,
    about = "Gauge-linked option pricing: kernel pricer, elliptic solver, symmetry checks, return fits",
    after_help = "Settings precedence: built-in defaults, then the file named by RQF_CONFIG, \
                  then flags.  Config keys: sigma, rate, q, tol, solver-tol, omega, max-iter."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the drift coefficient and the regime diagnostic for the market
    Info(InfoArgs),
    /// Price one contract by closed form, heat kernel, or Cauchy kernel
    Price(PriceArgs),
    /// Solve the elliptic boundary-value problem on a log-price rectangle
    Solve(SolveArgs),
    /// Measure how fast the operator residual on the classical field decays in q
    LimitStudy(LimitStudyArgs),
    /// Run one invariance or algebra check and report a verdict
    Symmetry(SymmetryArgs),
    /// Fit return-distribution models to a date,price series
    Fit(FitArgs),
}

/// Market flags shared by every command; unset flags fall back to the config
/// file and then to built-in defaults.
#[derive(Args)]
struct MarketArgs {
    /// Volatility [default: 0.2]
    #[arg(long)]
    sigma: Option<f64>,
    /// Risk-free rate [default: 0.05]
    #[arg(long)]
    rate: Option<f64>,
    /// Squared propagation speed of the elliptic family [default: 1.0]
    #[arg(long)]
    q: Option<f64>,
}

impl MarketArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(v) = self.sigma {
            s.sigma = v;
        }
        if let Some(v) = self.rate {
            s.rate = v;
        }
        if let Some(v) = self.q {
            s.q = v;
        }
    }
}

#[derive(Args)]
struct InfoArgs {
    #[command(flatten)]
    market: MarketArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Closed-form lognormal price
    Bs,
    /// Lognormal price by heat-kernel quadrature
    Heat,
    /// Cauchy-kernel price at finite q
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Call,
    Put,
}

impl KindArg {
    fn to_core(self) -> OptionKind {
        match self {
            KindArg::Call => OptionKind::Call,
            KindArg::Put => OptionKind::Put,
        }
    }

    fn name(self) -> &'static str {
        match self {
            KindArg::Call => "call",
            KindArg::Put => "put",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PayoffArg {
    Call,
    Put,
    Binary,
    Indicator,
    Butterfly,
}

impl PayoffArg {
    fn name(self) -> &'static str {
        match self {
            PayoffArg::Call => "call",
            PayoffArg::Put => "put",
            PayoffArg::Binary => "binary",
            PayoffArg::Indicator => "indicator",
            PayoffArg::Butterfly => "butterfly",
        }
    }
}

#[derive(Args)]
struct PriceArgs {
    /// Pricing route
    #[arg(long, value_enum)]
    method: Method,
    /// Contract type for bs and heat [default: call]
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Payoff shape for the kernel route (required with --method kernel)
    #[arg(long, value_enum)]
    payoff: Option<PayoffArg>,
    /// Spot price [default: 100]
    #[arg(long)]
    spot: Option<f64>,
    /// Strike for call, put, and binary payoffs [default: 100]
    #[arg(long)]
    strike: Option<f64>,
    /// Lower edge of the indicator payoff, in log price
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    /// Upper edge of the indicator payoff, in log price
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    /// Left strike of the butterfly, in price
    #[arg(long)]
    k1: Option<f64>,
    /// Right strike of the butterfly, in price
    #[arg(long)]
    k3: Option<f64>,
    /// Time to expiry [default: 1]
    #[arg(long)]
    maturity: Option<f64>,
    /// Kernel route only: clip the payoff to log prices |zeta| <= Z and skip the
    /// admissibility gate; the result is a truncated price, not the price
    #[arg(long, value_name = "Z")]
    force_truncate: Option<f64>,
    /// Quadrature tolerance [default: 1e-8]
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    market: MarketArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundaryArg {
    /// Classical prices on all four edges, expiry beyond the grid
    Bs,
    /// Kernel prices on all four edges
    Kernel,
    /// Zero on all four edges
    Zero,
}

#[derive(Args)]
struct SolveArgs {
    /// Lower log-price bound [default: 3.6]
    #[arg(long, allow_negative_numbers = true)]
    x_min: Option<f64>,
    /// Upper log-price bound [default: 5.6]
    #[arg(long, allow_negative_numbers = true)]
    x_max: Option<f64>,
    /// Lower time bound [default: 0.1]
    #[arg(long)]
    t_min: Option<f64>,
    /// Upper time bound [default: 0.9]
    #[arg(long)]
    t_max: Option<f64>,
    /// Grid nodes along x [default: 41]
    #[arg(long)]
    nx: Option<usize>,
    /// Grid nodes along t [default: 41]
    #[arg(long)]
    nt: Option<usize>,
    /// Boundary data source [default: bs]
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
    /// Contract type for the bs boundary [default: call]
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Strike for the bs boundary and the strike-based kernel payoffs [default: 100]
    #[arg(long)]
    strike: Option<f64>,
    /// Contract expiry for the bs boundary, must exceed t-max [default: 2]
    #[arg(long)]
    maturity: Option<f64>,
    /// Payoff shape for the kernel boundary [default: put]
    #[arg(long, value_enum)]
    payoff: Option<PayoffArg>,
    /// Lower edge of the indicator payoff, in log price
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    /// Upper edge of the indicator payoff, in log price
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    /// Left strike of the butterfly, in price
    #[arg(long)]
    k1: Option<f64>,
    /// Right strike of the butterfly, in price
    #[arg(long)]
    k3: Option<f64>,
    /// Quadrature tolerance for the kernel boundary [default: 1e-8]
    #[arg(long)]
    tol: Option<f64>,
    /// Solver residual target [default: 1e-10]
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Relaxation factor in (0, 2) [default: 1.5]
    #[arg(long)]
    omega: Option<f64>,
    /// Sweep limit [default: 100000]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write the solved field as CSV to this path
    #[arg(long, value_name = "PATH")]
    dump: Option<PathBuf>,
    #[command(flatten)]
    market: MarketArgs,
}

#[derive(Args)]
struct LimitStudyArgs {
    /// Comma-separated ascending q values [default: 1e2,1e3,1e4,1e5,1e6]
    #[arg(long, value_name = "LIST")]
    qs: Option<String>,
    /// Contract type [default: call]
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Strike [default: 100]
    #[arg(long)]
    strike: Option<f64>,
    /// Spot recorded on the contract [default: 100]
    #[arg(long)]
    spot: Option<f64>,
    /// Contract expiry, must exceed t-max [default: 4]
    #[arg(long)]
    maturity: Option<f64>,
    /// Lower log-price bound [default: ln(100) - 0.05]
    #[arg(long, allow_negative_numbers = true)]
    x_min: Option<f64>,
    /// Upper log-price bound [default: ln(100) + 0.05]
    #[arg(long, allow_negative_numbers = true)]
    x_max: Option<f64>,
    /// Lower time bound [default: 0.1]
    #[arg(long)]
    t_min: Option<f64>,
    /// Upper time bound [default: 0.9]
    #[arg(long)]
    t_max: Option<f64>,
    /// Grid nodes along x [default: 401]
    #[arg(long)]
    nx: Option<usize>,
    /// Grid nodes along t [default: 401]
    #[arg(long)]
    nt: Option<usize>,
    /// Write the per-q table as CSV to this path
    #[arg(long, value_name = "PATH")]
    dump: Option<PathBuf>,
    #[command(flatten)]
    market: MarketArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckArg {
    /// Exact and floating-point closure of the generator algebra
    Witt,
    /// Residual invariance of a massive mode under grid rotation
    Rotation,
    /// Residual invariance of a massless mode under dilation
    Scale,
    /// Convergence of the finite map to its first-order variation
    Variation,
}

#[derive(Args)]
struct SymmetryArgs {
    /// Which check to run
    #[arg(long, value_enum)]
    check: CheckArg,
    /// Generator index sweep bound for witt [default: 3]
    #[arg(long)]
    nmax: Option<i64>,
    /// Monomial degree sweep bound for witt [default: 6]
    #[arg(long)]
    degree_max: Option<i64>,
    /// Rotation angle in radians [default: 0.3]
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Dilation factor [default: 1.5]
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated eps values for variation [default: 1e-2,1e-3,1e-4]
    #[arg(long, value_name = "LIST")]
    eps: Option<String>,
    /// Grid nodes per side for rotation and scale [default: 33]
    #[arg(long)]
    grid_n: Option<usize>,
    #[command(flatten)]
    market: MarketArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Gaussian,
    Cauchy,
    Both,
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with header `date,price`, ISO dates strictly increasing
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Which model family to fit [default: both]
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[command(flatten)]
    market: MarketArgs,
}

enum Failure {
    Domain(Value),
    Usage(String),
}

fn domain(kind: &str, message: impl std::fmt::Display) -> Failure {
    Failure::Domain(json!({"kind": kind, "message": message.to_string()}))
}

fn model_failure(e: ModelError) -> Failure {
    domain("invalid_parameter", e)
}

fn gauge_failure(e: GaugeError) -> Failure {
    let kind = match &e {
        GaugeError::NonPositiveSpot(_) => "invalid_parameter",
        GaugeError::GridMismatch(_) => "grid_mismatch",
        GaugeError::Overflow { .. } => "overflow",
        GaugeError::BadGrid(_) => "bad_grid",
        GaugeError::BadValues(_) => "bad_values",
        GaugeError::Csv { .. } => "parse",
    };
    domain(kind, e)
}

fn classical_failure(e: ClassicalError) -> Failure {
    let kind = match &e {
        ClassicalError::InvalidContract(_) => "invalid_contract",
        ClassicalError::Quadrature(_) => "quadrature",
    };
    domain(kind, e)
}

fn kernel_failure(e: KernelError) -> Failure {
    match e {
        KernelError::InadmissiblePayoff(ref reason) => Failure::Domain(json!({
            "kind": "inadmissible_payoff",
            "message": e.to_string(),
            "tail": reason.tail.to_string(),
            "net_exponent": reason.net_exponent,
        })),
        KernelError::NonPositiveTime(_) | KernelError::InvalidParameter(_) => {
            domain("invalid_parameter", e)
        }
        KernelError::BadPayoff(_) => domain("bad_payoff", e),
        KernelError::Overflow { .. } => domain("overflow", e),
        KernelError::Quadrature(_) => domain("quadrature", e),
    }
}

fn pde_failure(e: PdeError) -> Failure {
    match e {
        PdeError::NoConvergence { iterations, residual } => Failure::Domain(json!({
            "kind": "no_convergence",
            "message": e.to_string(),
            "iterations": iterations,
            "residual": residual,
        })),
        PdeError::GridMismatch => domain("grid_mismatch", e),
        PdeError::BadBoundary(_) => domain("bad_boundary", e),
        PdeError::BadStudy(_) => domain("bad_study", e),
        PdeError::Gauge(inner) => gauge_failure(inner),
        PdeError::Classical(inner) => classical_failure(inner),
        PdeError::Kernel(inner) => kernel_failure(inner),
    }
}

fn symmetry_failure(e: SymmetryError) -> Failure {
    let kind = match &e {
        SymmetryError::GridMismatch(_) => "grid_mismatch",
        SymmetryError::InvalidParameter(_) => "invalid_parameter",
        SymmetryError::ResampleOutOfDomain { .. } => "resample_out_of_domain",
        SymmetryError::Grid(_) => "bad_grid",
    };
    domain(kind, e)
}

fn fit_failure(e: FitError) -> Failure {
    match e {
        FitError::NoConvergence { iterations } => Failure::Domain(json!({
            "kind": "no_convergence",
            "message": e.to_string(),
            "iterations": iterations,
        })),
        FitError::Parse { .. } => domain("parse", e),
        FitError::NonPositivePrice { .. } => domain("non_positive_price", e),
        FitError::NonMonotoneDate { .. } => domain("non_monotone_date", e),
        FitError::TooShort { .. } => domain("too_short", e),
        FitError::DegenerateSample => domain("degenerate_sample", e),
        FitError::NonFiniteSample => domain("non_finite_sample", e),
    }
}

fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    domain("io", format!("{}: {e}", path.display()))
}

fn market(s: &Settings) -> Result<MarketParams<f64>, Failure> {
    MarketParams::new(s.sigma, s.rate, s.q).map_err(model_failure)
}

fn parse_list(text: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>().map_err(|_| {
                Failure::Usage(format!("--{flag}: cannot parse `{tok}` as a number"))
            })
        })
        .collect()
}

fn envelope(command: &str, settings: &Settings, inputs: Value, result: Value) -> Value {
    json!({
        "command": command,
        "settings": settings.as_json(),
        "inputs": inputs,
        "result": result,
    })
}

/// Builds a kernel payoff from the flag set shared by `price` and `solve`.
fn build_payoff(
    which: PayoffArg,
    strike: f64,
    lo: Option<f64>,
    hi: Option<f64>,
    k1: Option<f64>,
    k3: Option<f64>,
) -> Result<(Payoff<f64>, Value), Failure> {
    match which {
        PayoffArg::Call => Ok((Payoff::call(strike), json!({"strike": strike}))),
        PayoffArg::Put => Ok((Payoff::put(strike), json!({"strike": strike}))),
        PayoffArg::Binary => Ok((Payoff::binary(strike), json!({"strike": strike}))),
        PayoffArg::Indicator => {
            let (lo, hi) = match (lo, hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                _ => {
                    return Err(Failure::Usage(
                        "--lo and --hi (log-price bounds) are required with --payoff indicator"
                            .into(),
                    ))
                }
            };
            let p = Payoff::indicator(lo, hi).map_err(kernel_failure)?;
            Ok((p, json!({"lo": lo, "hi": hi})))
        }
        PayoffArg::Butterfly => {
            let (k1, k3) = match (k1, k3) {
                (Some(k1), Some(k3)) => (k1, k3),
                _ => {
                    return Err(Failure::Usage(
                        "--k1 and --k3 (price strikes) are required with --payoff butterfly".into(),
                    ))
                }
            };
            let p = Payoff::butterfly(k1, k3).map_err(kernel_failure)?;
            Ok((p, json!({"k1": k1, "k3": k3})))
        }
    }
}

fn cmd_info(args: &InfoArgs, mut s: Settings) -> Result<Value, Failure> {
    args.market.apply(&mut s);
    let p = market(&s)?;
    let a = drift_coefficient(&p);
    let d = regime_diagnostic(&p);
    let threshold: f64 = default_conformal_threshold();
    let result = json!({
        "drift": {"re": a.re, "im": a.im},
        "regime": {
            "mass_term": d.mass_term,
            "aabar": d.aabar,
            "ratio": d.ratio,
            "conformal_threshold": threshold,
            "conformal": d.is_conformal(threshold),
        },
    });
    Ok(envelope("info", &s, json!({}), result))
}

fn cmd_price(args: &PriceArgs, mut s: Settings) -> Result<Value, Failure> {
    args.market.apply(&mut s);
    if let Some(v) = args.tol {
        s.tol = v;
    }
    let spot = args.spot.unwrap_or(100.0);
    let strike = args.strike.unwrap_or(100.0);
    let maturity = args.maturity.unwrap_or(1.0);

    match args.method {
        Method::Bs | Method::Heat => {
            let kind = args.kind.unwrap_or(KindArg::Call);
            let spec = VanillaSpec::new(kind.to_core(), strike, maturity, spot)
                .map_err(classical_failure)?;
            let (label, price) = match args.method {
                Method::Bs => ("bs", bs_closed_form(&spec, s.sigma, s.rate)),
                _ => ("heat", heat_kernel_price(&spec, s.sigma, s.rate, s.tol)),
            };
            let price = price.map_err(classical_failure)?;
            let inputs = json!({
                "method": label,
                "kind": kind.name(),
                "spot": spot,
                "strike": strike,
                "maturity": maturity,
            });
            Ok(envelope("price", &s, inputs, json!({"price": price})))
        }
        Method::Kernel => {
            let which = args.payoff.ok_or_else(|| {
                Failure::Usage("--payoff is required with --method kernel".into())
            })?;
            if !(spot.is_finite() && spot > 0.0) {
                return Err(Failure::Usage(format!("--spot must be positive, got {spot}")));
            }
            let (payoff, payoff_inputs) =
                build_payoff(which, strike, args.lo, args.hi, args.k1, args.k3)?;
            let p = market(&s)?;
            let query =
                KernelQuery::new(spot.ln(), maturity, p, s.tol).map_err(kernel_failure)?;
            let admissible = check_integrability(&payoff, &p).is_admissible();
            let kp = match args.force_truncate {
                Some(z) => price_kernel_clipped(&payoff, &query, z).map_err(kernel_failure)?,
                None => price_kernel(&payoff, &query).map_err(kernel_failure)?,
            };
            let mut inputs = json!({
                "method": "kernel",
                "payoff": which.name(),
                "spot": spot,
                "x": spot.ln(),
                "maturity": maturity,
            });
            let map = inputs.as_object_mut().unwrap();
            for (k, v) in payoff_inputs.as_object().unwrap() {
                map.insert(k.clone(), v.clone());
            }
            let mut result = json!({
                "price": kp.price,
                "error_estimate": kp.error_estimate,
                "evals": kp.evals,
                "admissible": admissible,
                "truncated": args.force_truncate.is_some(),
                "conformal_ratio": regime_diagnostic(&p).ratio,
            });
            if let Some(z) = args.force_truncate {
                result
                    .as_object_mut()
                    .unwrap()
                    .insert("truncation_half_width".into(), json!(z));
            }
            Ok(envelope("price", &s, inputs, result))
        }
    }
}

fn cmd_solve(args: &SolveArgs, mut s: Settings) -> Result<Value, Failure> {
    args.market.apply(&mut s);
    if let Some(v) = args.tol {
        s.tol = v;
    }
    if let Some(v) = args.solver_tol {
        s.solver_tol = v;
    }
    if let Some(v) = args.omega {
        s.omega = v;
    }
    if let Some(v) = args.max_iter {
        s.max_iter = v;
    }
    let x_min = args.x_min.unwrap_or(3.6);
    let x_max = args.x_max.unwrap_or(5.6);
    let t_min = args.t_min.unwrap_or(0.1);
    let t_max = args.t_max.unwrap_or(0.9);
    let nx = args.nx.unwrap_or(41);
    let nt = args.nt.unwrap_or(41);
    let boundary = args.boundary.unwrap_or(BoundaryArg::Bs);
    let grid = GridSpec::new(x_min, x_max, t_min, t_max, nx, nt).map_err(gauge_failure)?;
    let p = market(&s)?;
    let op = discretize(&p, grid);

    let (bd, boundary_inputs) = match boundary {
        BoundaryArg::Bs => {
            let kind = args.kind.unwrap_or(KindArg::Call);
            let strike = args.strike.unwrap_or(100.0);
            let maturity = args.maturity.unwrap_or(2.0);
            let bd = BoundaryData::from_bs(&grid, kind.to_core(), strike, maturity, s.sigma, s.rate)
                .map_err(pde_failure)?;
            (
                bd,
                json!({"boundary": "bs", "kind": kind.name(), "strike": strike, "maturity": maturity}),
            )
        }
        BoundaryArg::Kernel => {
            let which = args.payoff.unwrap_or(PayoffArg::Put);
            let strike = args.strike.unwrap_or(100.0);
            let (payoff, payoff_inputs) =
                build_payoff(which, strike, args.lo, args.hi, args.k1, args.k3)?;
            let bd =
                BoundaryData::from_kernel(&grid, &payoff, &p, s.tol).map_err(pde_failure)?;
            let mut inputs = json!({"boundary": "kernel", "payoff": which.name()});
            let map = inputs.as_object_mut().unwrap();
            for (k, v) in payoff_inputs.as_object().unwrap() {
                map.insert(k.clone(), v.clone());
            }
            (bd, inputs)
        }
        BoundaryArg::Zero => (
            BoundaryData::from_fn(&grid, Provenance::UserSupplied, |_, _| 0.0),
            json!({"boundary": "zero"}),
        ),
    };

    let opts = SolveOptions { tol: s.solver_tol, max_iter: s.max_iter, omega: s.omega };
    let sol = solve_bvp(&op, &bd, opts).map_err(pde_failure)?;
    let values = sol.field.values();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut inputs = json!({
        "x_min": x_min, "x_max": x_max, "t_min": t_min, "t_max": t_max,
        "nx": nx, "nt": nt,
    });
    let map = inputs.as_object_mut().unwrap();
    for (k, v) in boundary_inputs.as_object().unwrap() {
        map.insert(k.clone(), v.clone());
    }
    let mut result = json!({
        "iterations": sol.iterations,
        "residual": sol.residual,
        "field_min": lo,
        "field_max": hi,
    });
    if let Some(path) = &args.dump {
        std::fs::write(path, sol.field.to_csv()).map_err(|e| io_failure(path, e))?;
        result
            .as_object_mut()
            .unwrap()
            .insert("dump".into(), json!(path.display().to_string()));
    }
    Ok(envelope("solve", &s, inputs, result))
}

fn cmd_limit_study(args: &LimitStudyArgs, mut s: Settings) -> Result<Value, Failure> {
    args.market.apply(&mut s);
    let qs_text = args.qs.as_deref().unwrap_or("1e2,1e3,1e4,1e5,1e6");
    let qs = parse_list(qs_text, "qs")?;
    let kind = args.kind.unwrap_or(KindArg::Call);
    let strike = args.strike.unwrap_or(100.0);
    let spot = args.spot.unwrap_or(100.0);
    let maturity = args.maturity.unwrap_or(4.0);
    let center = 100.0f64.ln();
    let x_min = args.x_min.unwrap_or(center - 0.05);
    let x_max = args.x_max.unwrap_or(center + 0.05);
    let t_min = args.t_min.unwrap_or(0.1);
    let t_max = args.t_max.unwrap_or(0.9);
    let nx = args.nx.unwrap_or(401);
    let nt = args.nt.unwrap_or(401);

    let grid = GridSpec::new(x_min, x_max, t_min, t_max, nx, nt).map_err(gauge_failure)?;
    let p = market(&s)?;
    let contract =
        VanillaSpec::new(kind.to_core(), strike, maturity, spot).map_err(classical_failure)?;
    let study = limit_study(&p, &qs, grid, &contract).map_err(pde_failure)?;

    let rows: Vec<Value> = study
        .rows
        .iter()
        .map(|r| json!({"q": r.q, "deviation": r.deviation, "grid_limited": r.grid_limited}))
        .collect();
    let inputs = json!({
        "qs": qs,
        "kind": kind.name(),
        "strike": strike,
        "spot": spot,
        "maturity": maturity,
        "x_min": x_min, "x_max": x_max, "t_min": t_min, "t_max": t_max,
        "nx": nx, "nt": nt,
    });
    let mut result = json!({
        "rows": rows,
        "slope": study.slope,
        "classical_floor": study.classical_floor,
    });
    if let Some(path) = &args.dump {
        std::fs::write(path, study.to_csv()).map_err(|e| io_failure(path, e))?;
        result
            .as_object_mut()
            .unwrap()
            .insert("dump".into(), json!(path.display().to_string()));
    }
    Ok(envelope("limit-study", &s, inputs, result))
}

fn cmd_symmetry(args: &SymmetryArgs, mut s: Settings) -> Result<Value, Failure> {
    args.market.apply(&mut s);
    let p = market(&s)?;
    let a = drift_coefficient(&p);
    let a_c = Complex::new(a.re, a.im);

    let (inputs, result) = match args.check {
        CheckArg::Witt => {
            let nmax = args.nmax.unwrap_or(3);
            let degree_max = args.degree_max.unwrap_or(6);
            if nmax < 0 || degree_max < 0 {
                return Err(Failure::Usage(
                    "--nmax and --degree-max must be nonnegative".into(),
                ));
            }
            let exact_a = witt::exact_complex(a_c);
            let mut exact_zero = true;
            let mut worst: f64 = 0.0;
            let mut modes = 0usize;
            for n in -nmax..=nmax {
                for k in -nmax..=nmax {
                    for degree in 0..=degree_max {
                        exact_zero &=
                            witt::commutator_defect(n, k, degree, &exact_a).is_zero();
                        worst = worst
                            .max(witt::commutator_defect(n, k, degree, &a_c).max_coeff_norm());
                        modes += 1;
                    }
                }
            }
            let pass = exact_zero && worst < 1e-12;
            (
                json!({"check": "witt", "nmax": nmax, "degree_max": degree_max, "modes": modes}),
                json!({
                    "exact_zero": exact_zero,
                    "max_float_deviation": worst,
                    "verdict": if pass { "pass" } else { "fail" },
                }),
            )
        }
        CheckArg::Rotation | CheckArg::Scale => {
            let n = args.grid_n.unwrap_or(33);
            // fixed window in (x, sqrt(q) t) so the aspect ratio seen by the
            // rotation does not degrade at extreme q
            let sq = s.q.sqrt();
            let grid = GridSpec::new(-0.6, 0.6, 0.2 / sq, 2.2 / sq, n, n)
                .map_err(gauge_failure)?;
            match args.check {
                CheckArg::Rotation => {
                    let alpha = args.alpha.unwrap_or(0.3);
                    // mode frequency balancing the z and zbar exponents keeps
                    // the field representable at large mass
                    let mass = p.mass();
                    let k_dir = Complex::new(1.0, 0.5) / Complex::new(1.0, 0.5).norm();
                    let field = massive_mode(grid, p, k_dir * (mass.sqrt() / 2.0).max(0.25))
                        .map_err(symmetry_failure)?;
                    let base = residual_massive(&field).max_abs() / field.interior_max_abs();
                    let rotated = apply_rotation(&field, alpha).map_err(symmetry_failure)?;
                    let moved =
                        residual_massive(&rotated).max_abs() / rotated.interior_max_abs();
                    let budget = 10.0;
                    let verdict = moved <= budget * base;
                    (
                        json!({"check": "rotation", "alpha": alpha, "grid_n": n}),
                        json!({
                            "base_residual": base,
                            "transformed_residual": moved,
                            "ratio": moved / base,
                            "budget": budget,
                            "verdict": if verdict { "pass" } else { "fail" },
                        }),
                    )
                }
                _ => {
                    let lambda = args.lambda.unwrap_or(1.5);
                    let field = harmonic_mode(grid, p);
                    let base = residual_massless(&field).max_abs() / field.interior_max_abs();
                    let scaled = apply_scale(&field, lambda).map_err(symmetry_failure)?;
                    let moved = residual_massless(&scaled).max_abs() / scaled.interior_max_abs();
                    let budget = 10.0;
                    let verdict = moved <= budget * base;
                    (
                        json!({"check": "scale", "lambda": lambda, "grid_n": n}),
                        json!({
                            "base_residual": base,
                            "transformed_residual": moved,
                            "ratio": moved / base,
                            "budget": budget,
                            "verdict": if verdict { "pass" } else { "fail" },
                        }),
                    )
                }
            }
        }
        CheckArg::Variation => {
            let eps_text = args.eps.as_deref().unwrap_or("1e-2,1e-3,1e-4");
            let eps = parse_list(eps_text, "eps")?;
            if eps.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
                return Err(Failure::Usage("--eps values must be positive".into()));
            }
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
            let study =
                witt::variation_study(&field, a_c, &eps, &witt::default_sample_points());
            let verdict = (study.slope - 2.0).abs() <= 0.2;
            (
                json!({"check": "variation", "eps": study.eps}),
                json!({
                    "defect": study.defect,
                    "slope": study.slope,
                    "verdict": if verdict { "pass" } else { "fail" },
                }),
            )
        }
    };
    let mut out = envelope("symmetry", &s, inputs, result);
    out.as_object_mut()
        .unwrap()
        .insert("drift".into(), json!({"re": a.re, "im": a.im}));
    Ok(out)
}

fn fit_result_json(r: &fit::FitResult<f64>) -> Value {
    match r.model {
        FitModel::Gaussian { mean, stdev } => json!({
            "model": "gaussian",
            "mean": mean,
            "stdev": stdev,
            "log_likelihood": r.log_likelihood,
            "ks_statistic": r.ks_statistic,
            "n": r.n,
        }),
        FitModel::Cauchy { location, scale } => json!({
            "model": "cauchy",
            "location": location,
            "scale": scale,
            "log_likelihood": r.log_likelihood,
            "ks_statistic": r.ks_statistic,
            "n": r.n,
        }),
    }
}

fn cmd_fit(args: &FitArgs, mut s: Settings) -> Result<Value, Failure> {
    args.market.apply(&mut s);
    let model = args.model.unwrap_or(ModelArg::Both);
    let text = std::fs::read_to_string(&args.input).map_err(|e| io_failure(&args.input, e))?;
    let series = fit::PriceSeries::<f64>::parse_csv(&text).map_err(fit_failure)?;
    let returns = fit::log_returns(&series).map_err(fit_failure)?;

    let mut result = json!({"n_returns": returns.len()});
    let map = result.as_object_mut().unwrap();
    let gaussian = match model {
        ModelArg::Gaussian | ModelArg::Both => {
            let r = fit::fit_gaussian(&returns).map_err(fit_failure)?;
            map.insert("gaussian".into(), fit_result_json(&r));
            Some(r)
        }
        _ => None,
    };
    let cauchy = match model {
        ModelArg::Cauchy | ModelArg::Both => {
            let r = fit::fit_cauchy(&returns).map_err(fit_failure)?;
            map.insert("cauchy".into(), fit_result_json(&r));
            Some(r)
        }
        _ => None,
    };
    if let (Some(g), Some(c)) = (gaussian, cauchy) {
        let preferred = if c.log_likelihood > g.log_likelihood { "cauchy" } else { "gaussian" };
        map.insert("preferred".into(), json!(preferred));
    }

    let model_name = match model {
        ModelArg::Gaussian => "gaussian",
        ModelArg::Cauchy => "cauchy",
        ModelArg::Both => "both",
    };
    let inputs = json!({"input": args.input.display().to_string(), "model": model_name});
    Ok(envelope("fit", &s, inputs, result))
}

fn run(cli: Cli) -> Result<Value, Failure> {
    let settings = Settings::load().map_err(Failure::Usage)?;
    match &cli.cmd {
        Command::Info(a) => cmd_info(a, settings),
        Command::Price(a) => cmd_price(a, settings),
        Command::Solve(a) => cmd_solve(a, settings),
        Command::LimitStudy(a) => cmd_limit_study(a, settings),
        Command::Symmetry(a) => cmd_symmetry(a, settings),
        Command::Fit(a) => cmd_fit(a, settings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(value) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Err(Failure::Domain(body)) => {
            println!("{}", json!({"error": body}));
            ExitCode::from(1)
        }
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
