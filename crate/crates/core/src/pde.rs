//! Finite-difference treatment of the generalized pricing equation in
//! log-price coordinates,
//!
//! ```text
//! (sigma^2/2q) C_tt + kappa C_t + (sigma^2/2)(C_xx - C_x) + r C_x - r C = 0
//! kappa = 1 - (1/2q) (sigma^2/2 + r)^2
//! ```
//!
//! Both second-derivative coefficients are positive, so the equation is
//! elliptic in (x, t) and posed as a Dirichlet problem on a rectangle; an
//! initial-value march would be ill-posed. Dirichlet data on all four edges
//! comes from the payoff, the classical pricer, the kernel pricer, or the
//! user.
//!
//! Fields built from the classical pricer place the payoff at the t_max edge
//! (t counts calendar time toward expiry there), while kernel-priced fields
//! place it at t = 0. Edges are therefore named by grid geometry, not by
//! role.
//!
//! Kernel-priced fields do not satisfy this equation exactly: applying the
//! operator to one returns -(q/(2 sigma^2) + (sigma^2/2 + r)^4/(8 q sigma^2))
//! times the field. The proportionality (not its particular constant) is the
//! useful regression target; see `mass_ratio_spread`.

use thiserror::Error;

use crate::classical::{bs_closed_form, ClassicalError, OptionKind, VanillaSpec};
use crate::gauge::{Field2D, GaugeError, GridSpec};
use crate::kernel::{price_kernel, KernelError, KernelQuery, Payoff};
use crate::model::MarketParams;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("field grid does not match operator grid")]
    GridMismatch,
    #[error("invalid boundary data: {0}")]
    BadBoundary(String),
    #[error("no convergence after {iterations} sweeps, residual {residual}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid study setup: {0}")]
    BadStudy(String),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifferenceScheme {
    Central,
    Upwind,
}

/// Five-point stencil for the operator on a uniform grid. Coefficients are
/// shared by every interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteOperator<R: Real> {
    /// C_tt coefficient, sigma^2/(2q); 0 selects the parabolic limit row.
    pub att: R,
    /// C_t coefficient.
    pub kappa: R,
    /// C_xx coefficient, sigma^2/2.
    pub axx: R,
    /// C_x coefficient, r - sigma^2/2.
    pub ax: R,
    /// Zeroth-order coefficient, -r.
    pub a0: R,
    pub grid: GridSpec<R>,
    pub x_scheme: DifferenceScheme,
    pub t_scheme: DifferenceScheme,
}

/// Per-node stencil weights: center, east/west (x +/- h_x), north/south
/// (t +/- h_t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil<R: Real> {
    pub center: R,
    pub east: R,
    pub west: R,
    pub north: R,
    pub south: R,
}

fn coefficients<R: Real>(p: &MarketParams<R>) -> (R, R, R, R, R) {
    let two = R::of(2);
    let s2 = p.sigma() * p.sigma();
    let att = s2 / (two * p.q());
    let kappa = R::one() - (s2 / two + p.rate()).powi(2) / (two * p.q());
    let axx = s2 / two;
    let ax = p.rate() - s2 / two;
    let a0 = -p.rate();
    (att, kappa, axx, ax, a0)
}

impl<R: Real> DiscreteOperator<R> {
    /// Picks central first differences where the resulting rows stay
    /// diagonally dominant at this spacing, upwind otherwise.
    pub fn new(p: &MarketParams<R>, grid: GridSpec<R>) -> Self {
        let (att, kappa, axx, ax, a0) = coefficients(p);
        let two = R::of(2);
        let x_scheme = if ax.abs() * grid.hx() / two <= axx {
            DifferenceScheme::Central
        } else {
            DifferenceScheme::Upwind
        };
        let t_scheme = if kappa.abs() * grid.ht() / two <= att {
            DifferenceScheme::Central
        } else {
            DifferenceScheme::Upwind
        };
        Self { att, kappa, axx, ax, a0, grid, x_scheme, t_scheme }
    }

    /// Forces a scheme choice; used by consistency studies where the upwind
    /// truncation error would drown the signal being measured.
    pub fn with_schemes(
        p: &MarketParams<R>,
        grid: GridSpec<R>,
        x_scheme: DifferenceScheme,
        t_scheme: DifferenceScheme,
    ) -> Self {
        let (att, kappa, axx, ax, a0) = coefficients(p);
        Self { att, kappa, axx, ax, a0, grid, x_scheme, t_scheme }
    }

    /// The infinite-q parabolic row: no C_tt term, unit C_t coefficient.
    /// Evaluation only; it is not elliptic and cannot be solved by
    /// [`solve_bvp`].
    pub fn classical(p: &MarketParams<R>, grid: GridSpec<R>) -> Self {
        let (_, _, axx, ax, a0) = coefficients(p);
        Self {
            att: R::zero(),
            kappa: R::one(),
            axx,
            ax,
            a0,
            grid,
            x_scheme: DifferenceScheme::Central,
            t_scheme: DifferenceScheme::Central,
        }
    }

    pub fn is_elliptic(&self) -> bool {
        self.att > R::zero() && self.axx > R::zero()
    }

    pub fn stencil(&self) -> Stencil<R> {
        let two = R::of(2);
        let hx = self.grid.hx();
        let ht = self.grid.ht();
        let dxx = self.axx / (hx * hx);
        let dtt = self.att / (ht * ht);
        let mut s = Stencil {
            center: -two * dxx - two * dtt + self.a0,
            east: dxx,
            west: dxx,
            north: dtt,
            south: dtt,
        };
        match self.x_scheme {
            DifferenceScheme::Central => {
                s.east = s.east + self.ax / (two * hx);
                s.west = s.west - self.ax / (two * hx);
            }
            // one-sided toward the sign of ax keeps off-diagonals nonnegative
            DifferenceScheme::Upwind => {
                if self.ax >= R::zero() {
                    s.east = s.east + self.ax / hx;
                    s.center = s.center - self.ax / hx;
                } else {
                    s.west = s.west - self.ax / hx;
                    s.center = s.center + self.ax / hx;
                }
            }
        }
        match self.t_scheme {
            DifferenceScheme::Central => {
                s.north = s.north + self.kappa / (two * ht);
                s.south = s.south - self.kappa / (two * ht);
            }
            DifferenceScheme::Upwind => {
                if self.kappa >= R::zero() {
                    s.north = s.north + self.kappa / ht;
                    s.center = s.center - self.kappa / ht;
                } else {
                    s.south = s.south - self.kappa / ht;
                    s.center = s.center + self.kappa / ht;
                }
            }
        }
        s
    }

    /// Residual field L(C); boundary entries are left at zero since the
    /// stencil only exists at interior nodes.
    pub fn residual(&self, field: &Field2D<R>) -> Result<Field2D<R>, PdeError> {
        if *field.grid() != self.grid {
            return Err(PdeError::GridMismatch);
        }
        let s = self.stencil();
        let (nx, nt) = (self.grid.nx, self.grid.nt);
        let mut out = vec![R::zero(); nx * nt];
        for j in 1..nt - 1 {
            for i in 1..nx - 1 {
                out[j * nx + i] = s.center * field.at(i, j)
                    + s.east * field.at(i + 1, j)
                    + s.west * field.at(i - 1, j)
                    + s.north * field.at(i, j + 1)
                    + s.south * field.at(i, j - 1);
            }
        }
        Ok(Field2D::new(self.grid, out)?)
    }

    pub fn max_interior_residual(&self, field: &Field2D<R>) -> Result<R, PdeError> {
        Ok(self.residual(field)?.max_abs())
    }
}

/// Free-function alias for [`DiscreteOperator::new`].
pub fn discretize<R: Real>(p: &MarketParams<R>, grid: GridSpec<R>) -> DiscreteOperator<R> {
    DiscreteOperator::new(p, grid)
}

/// Residual of a field under the dominance-aware operator.
pub fn residual<R: Real>(
    field: &Field2D<R>,
    p: &MarketParams<R>,
    grid: GridSpec<R>,
) -> Result<Field2D<R>, PdeError> {
    discretize(p, grid).residual(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    FromPayoff,
    FromBS,
    FromKernel,
    UserSupplied,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::FromPayoff => "payoff",
            Provenance::FromBS => "black-scholes",
            Provenance::FromKernel => "kernel",
            Provenance::UserSupplied => "user",
        }
    }
}

/// Dirichlet data on the four rectangle edges. Edge arrays run in grid
/// order and include the corners, which must agree between adjacent edges.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<R: Real> {
    pub t_min_edge: Vec<R>,
    pub t_max_edge: Vec<R>,
    pub x_min_edge: Vec<R>,
    pub x_max_edge: Vec<R>,
    pub provenance: Provenance,
}

impl<R: Real> BoundaryData<R> {
    pub fn from_fn(
        grid: &GridSpec<R>,
        provenance: Provenance,
        mut f: impl FnMut(R, R) -> R,
    ) -> Self {
        Self {
            t_min_edge: (0..grid.nx).map(|i| f(grid.x(i), grid.t_min)).collect(),
            t_max_edge: (0..grid.nx).map(|i| f(grid.x(i), grid.t_max)).collect(),
            x_min_edge: (0..grid.nt).map(|j| f(grid.x_min, grid.t(j))).collect(),
            x_max_edge: (0..grid.nt).map(|j| f(grid.x_max, grid.t(j))).collect(),
        provenance,
        }
    }

    /// Copies the edges of an existing field.
    pub fn from_field(field: &Field2D<R>, provenance: Provenance) -> Self {
        let g = field.grid();
        Self {
            t_min_edge: (0..g.nx).map(|i| field.at(i, 0)).collect(),
            t_max_edge: (0..g.nx).map(|i| field.at(i, g.nt - 1)).collect(),
            x_min_edge: (0..g.nt).map(|j| field.at(0, j)).collect(),
            x_max_edge: (0..g.nt).map(|j| field.at(g.nx - 1, j)).collect(),
            provenance,
        }
    }

    /// Classical prices with the payoff at the t_max edge: a node at grid
    /// time t is priced with time to expiry `maturity - t`, so `maturity`
    /// must exceed the grid's t_max.
    pub fn from_bs(
        grid: &GridSpec<R>,
        kind: OptionKind,
        strike: R,
        maturity: R,
        sigma: R,
        rate: R,
    ) -> Result<Self, PdeError> {
        if maturity <= grid.t_max {
            return Err(PdeError::BadBoundary(format!(
                "contract maturity {maturity} must exceed grid t_max {}",
                grid.t_max
            )));
        }
        let mut err = None;
        let mut f = |x: R, t: R| -> R {
            let spec = VanillaSpec::new(kind, strike, maturity - t, x.exp());
            match spec.and_then(|s| bs_closed_form(&s, sigma, rate)) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    R::zero()
                }
            }
        };
        let bd = Self::from_fn(grid, Provenance::FromBS, &mut f);
        match err {
            Some(e) => Err(e.into()),
            None => Ok(bd),
        }
    }

    /// Kernel prices with the payoff at t = 0; grid times are kernel times,
    /// so t_min must be nonnegative.
    pub fn from_kernel(
        grid: &GridSpec<R>,
        payoff: &Payoff<R>,
        params: &MarketParams<R>,
        tol: R,
    ) -> Result<Self, PdeError> {
        if grid.t_min < R::zero() {
            return Err(PdeError::BadBoundary(format!(
                "kernel boundary needs t_min >= 0, got {}",
                grid.t_min
            )));
        }
        let mut err = None;
        let mut f = |x: R, t: R| -> R {
            let r = KernelQuery::new(x, t, *params, tol).and_then(|q| price_kernel(payoff, &q));
            match r {
                Ok(v) => v.price,
                Err(e) => {
                    err = Some(e);
                    R::zero()
                }
            }
        };
        let bd = Self::from_fn(grid, Provenance::FromKernel, &mut f);
        match err {
            Some(e) => Err(e.into()),
            None => Ok(bd),
        }
    }

    pub fn validate(&self, grid: &GridSpec<R>) -> Result<(), PdeError> {
        if self.t_min_edge.len() != grid.nx
            || self.t_max_edge.len() != grid.nx
            || self.x_min_edge.len() != grid.nt
            || self.x_max_edge.len() != grid.nt
        {
            return Err(PdeError::BadBoundary(format!(
                "edge lengths ({}, {}, {}, {}) do not match grid {} x {}",
                self.t_min_edge.len(),
                self.t_max_edge.len(),
                self.x_min_edge.len(),
                self.x_max_edge.len(),
                grid.nx,
                grid.nt
            )));
        }
        let all = self
            .t_min_edge
            .iter()
            .chain(&self.t_max_edge)
            .chain(&self.x_min_edge)
            .chain(&self.x_max_edge);
        for v in all.clone() {
            if !v.is_finite() {
                return Err(PdeError::BadBoundary("non-finite boundary value".into()));
            }
        }
        let scale = all.fold(R::zero(), |m, v| m.max(v.abs())).max(R::one());
        let tol = R::of_f64(1e-12) * scale;
        let corners = [
            ("t_min/x_min", self.t_min_edge[0], self.x_min_edge[0]),
            ("t_min/x_max", self.t_min_edge[grid.nx - 1], self.x_max_edge[0]),
            ("t_max/x_min", self.t_max_edge[0], self.x_min_edge[grid.nt - 1]),
            ("t_max/x_max", self.t_max_edge[grid.nx - 1], self.x_max_edge[grid.nt - 1]),
        ];
        for (name, a, b) in corners {
            if (a - b).abs() > tol {
                return Err(PdeError::BadBoundary(format!(
                    "corner {name} disagrees between edges: {a} vs {b}"
                )));
            }
        }
        Ok(())
    }

    fn scale(&self) -> R {
        self.t_min_edge
            .iter()
            .chain(&self.t_max_edge)
            .chain(&self.x_min_edge)
            .chain(&self.x_max_edge)
            .fold(R::zero(), |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<R: Real> {
    /// Convergence bound on the residual max norm, relative to the largest
    /// boundary magnitude.
    pub tol: R,
    pub max_iter: usize,
    /// Relaxation factor in (0, 2).
    pub omega: R,
}

impl<R: Real> Default for SolveOptions<R> {
    fn default() -> Self {
        Self { tol: R::of_f64(1e-10), max_iter: 100_000, omega: R::of_f64(1.5) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<R: Real> {
    pub field: Field2D<R>,
    pub iterations: usize,
    pub residual: R,
}

/// Red-black successive over-relaxation for the Dirichlet problem.
///
/// Sweeps update all red nodes ((i + j) even), then all black; each color
/// only reads the other, so the result is deterministic however nodes of one
/// color are scheduled. Convergence is declared on the discrete residual,
/// not on iterate deltas.
pub fn solve_bvp<R: Real>(
    op: &DiscreteOperator<R>,
    bd: &BoundaryData<R>,
    opts: SolveOptions<R>,
) -> Result<Solution<R>, PdeError> {
    bd.validate(&op.grid)?;
    if !op.is_elliptic() {
        return Err(PdeError::BadBoundary("operator is not elliptic".into()));
    }
    if !(opts.omega > R::zero() && opts.omega < R::of(2)) {
        return Err(PdeError::BadBoundary(format!("omega must be in (0, 2), got {}", opts.omega)));
    }
    let (nx, nt) = (op.grid.nx, op.grid.nt);
    let mut values = vec![R::zero(); nx * nt];
    for i in 0..nx {
        values[i] = bd.t_min_edge[i];
        values[(nt - 1) * nx + i] = bd.t_max_edge[i];
    }
    for j in 0..nt {
        values[j * nx] = bd.x_min_edge[j];
        values[j * nx + nx - 1] = bd.x_max_edge[j];
    }

    let scale = bd.scale();
    if scale == R::zero() {
        // zero data forces the zero solution; nothing to iterate
        let field = Field2D::new(op.grid, values)?;
        return Ok(Solution { field, iterations: 0, residual: R::zero() });
    }
    let target = opts.tol * scale;

    let s = op.stencil();
    let neighbor_sum = |v: &[R], i: usize, j: usize| {
        s.east * v[j * nx + i + 1]
            + s.west * v[j * nx + i - 1]
            + s.north * v[(j + 1) * nx + i]
            + s.south * v[(j - 1) * nx + i]
    };

    let mut iterations = 0;
    let mut achieved = R::infinity();
    while iterations < opts.max_iter {
        for color in 0..2 {
            for j in 1..nt - 1 {
                for i in 1..nx - 1 {
                    if (i + j) % 2 != color {
                        continue;
                    }
                    let gs = -neighbor_sum(&values, i, j) / s.center;
                    let old = values[j * nx + i];
                    values[j * nx + i] = old + opts.omega * (gs - old);
                }
            }
        }
        iterations += 1;
        let mut worst = R::zero();
        for j in 1..nt - 1 {
            for i in 1..nx - 1 {
                let r = s.center * values[j * nx + i] + neighbor_sum(&values, i, j);
                worst = worst.max(r.abs());
            }
        }
        achieved = worst;
        if worst <= target {
            let field = Field2D::new(op.grid, values)?;
            return Ok(Solution { field, iterations, residual: achieved });
        }
    }
    Err(PdeError::NoConvergence { iterations, residual: achieved.as_f64() })
}

/// Mean of residual/field over interior nodes and the largest relative
/// deviation from that mean. Nodes where |field| is below `floor` times its
/// max are skipped since the ratio is pure noise there.
pub fn mass_ratio_spread<R: Real>(
    op: &DiscreteOperator<R>,
    field: &Field2D<R>,
    floor: R,
) -> Result<(R, R), PdeError> {
    let res = op.residual(field)?;
    let cutoff = field.max_abs() * floor;
    let mut ratios = Vec::new();
    for j in 1..op.grid.nt - 1 {
        for i in 1..op.grid.nx - 1 {
            if field.at(i, j).abs() > cutoff {
                ratios.push(res.at(i, j) / field.at(i, j));
            }
        }
    }
    if ratios.is_empty() {
        return Err(PdeError::BadStudy("no nodes above the field floor".into()));
    }
    let n = R::from_usize(ratios.len()).unwrap();
    let mean = ratios.iter().fold(R::zero(), |a, r| a + *r) / n;
    let spread = ratios
        .iter()
        .fold(R::zero(), |m, r| m.max((*r - mean).abs() / mean.abs()));
    Ok((mean, spread))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitStudyRow<R: Real> {
    pub q: R,
    pub deviation: R,
    /// Set when the q-dependent part of the residual has sunk below twice
    /// the infinite-q discretization floor; such rows measure the grid, not
    /// the operator, and are excluded from the slope fit.
    pub grid_limited: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitStudy<R: Real> {
    pub rows: Vec<LimitStudyRow<R>>,
    /// Log-log slope of deviation against q over rows not grid-limited;
    /// absent when fewer than two usable rows remain.
    pub slope: Option<R>,
    /// Max interior residual of the classical field under the parabolic
    /// operator at this spacing.
    pub classical_floor: R,
}

impl<R: Real> LimitStudy<R> {
    /// CSV rows `q,deviation,slope_estimate`; the fitted slope is global and
    /// repeated on every row, nan when no fit exists.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("q,deviation,slope_estimate\n");
        for row in &self.rows {
            match self.slope {
                Some(s) => {
                    let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", row.q, row.deviation, s);
                }
                None => {
                    let _ = writeln!(out, "{:.16e},{:.16e},nan", row.q, row.deviation);
                }
            }
        }
        out
    }
}

/// Measures how fast the operator approaches its parabolic limit by applying
/// the q-operator to the classical price field and recording the residual
/// max norm per q.
///
/// The classical field is sampled with the payoff at the t_max edge, which
/// is the orientation where the residual shrinks like 1/q; both first-order
/// terms use central differences so the measurement is not polluted by
/// upwind truncation error (nothing is solved here, so diagonal dominance
/// does not matter).
pub fn limit_study<R: Real>(
    p: &MarketParams<R>,
    q_list: &[R],
    grid: GridSpec<R>,
    contract: &VanillaSpec<R>,
) -> Result<LimitStudy<R>, PdeError> {
    if q_list.is_empty() {
        return Err(PdeError::BadStudy("empty q list".into()));
    }
    for w in q_list.windows(2) {
        if w[0] > w[1] {
            return Err(PdeError::BadStudy("q list must be ascending".into()));
        }
    }
    if contract.maturity <= grid.t_max {
        return Err(PdeError::BadStudy(format!(
            "contract maturity {} must exceed grid t_max {}",
            contract.maturity, grid.t_max
        )));
    }

    let field = Field2D::from_fn(grid, |x, t| {
        let spec = VanillaSpec::new(contract.kind, contract.strike, contract.maturity - t, x.exp())
            .expect("validated above");
        bs_closed_form(&spec, p.sigma(), p.rate()).expect("params validated")
    })?;

    let floor = DiscreteOperator::classical(p, grid).max_interior_residual(&field)?;

    let mut rows = Vec::with_capacity(q_list.len());
    for &q in q_list {
        let pq = p.with_q(q).map_err(|e| PdeError::BadStudy(e.to_string()))?;
        let op = DiscreteOperator::with_schemes(
            &pq,
            grid,
            DifferenceScheme::Central,
            DifferenceScheme::Central,
        );
        let deviation = op.max_interior_residual(&field)?;
        rows.push(LimitStudyRow { q, deviation, grid_limited: deviation < R::of(2) * floor });
    }

    let usable: Vec<_> = rows.iter().filter(|r| !r.grid_limited).collect();
    let slope = if usable.len() >= 2 {
        // least squares on (ln q, ln deviation)
        let n = R::from_usize(usable.len()).unwrap();
        let mut sx = R::zero();
        let mut sy = R::zero();
        let mut sxx = R::zero();
        let mut sxy = R::zero();
        for r in &usable {
            let lx = r.q.ln();
            let ly = r.deviation.ln();
            sx = sx + lx;
            sy = sy + ly;
            sxx = sxx + lx * lx;
            sxy = sxy + lx * ly;
        }
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    } else {
        None
    };

    Ok(LimitStudy { rows, slope, classical_floor: floor })
}
