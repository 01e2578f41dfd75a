//! Coordinate and gauge transformations between price fields and the wave
//! functions of the associated evolution equations.
//!
//! A price field C(x, t) over log-price x = ln S maps to a wave function
//! through the exponential gauge factor
//!
//! ```text
//! psi(x, t) = e^{-(a x + b t)} C(x, t)
//! ```
//!
//! with `a = (sigma^2/2 - r)/sigma^2` for both variants and `b` depending on
//! whether the target is the diffusive (Schrodinger) or finite-speed
//! (Klein-Gordon) equation; the two b values differ by exactly q/sigma^2.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::MarketParams;
use crate::scalar::Real;

/// Exponent magnitude beyond which e^{a x + b t} is treated as an overflow
/// rather than silently saturating (e^{709} is the f64 edge).
const GAUGE_EXPONENT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaugeError {
    #[error("spot price must be positive, got {0}")]
    NonPositiveSpot(String),
    #[error("field dimensions do not match: {0}")]
    GridMismatch(String),
    #[error("gauge exponent {exponent} exceeds the overflow guard at node ({i}, {j})")]
    Overflow { exponent: f64, i: usize, j: usize },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("invalid field values: {0}")]
    BadValues(String),
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Which evolution equation the gauge targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeVariant {
    Schrodinger,
    KleinGordon,
}

/// Exponent pair of the gauge factor e^{-(a x + b t)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeParams<R: Real> {
    pub a: R,
    pub b: R,
    pub variant: GaugeVariant,
}

/// x = ln S.
pub fn log_coords<R: Real>(spot: R) -> Result<R, GaugeError> {
    if !(spot.is_finite() && spot > R::zero()) {
        return Err(GaugeError::NonPositiveSpot(format!("{spot}")));
    }
    Ok(spot.ln())
}

/// S = e^x, the exact inverse direction of [`log_coords`].
pub fn exp_coords<R: Real>(x: R) -> R {
    x.exp()
}

pub fn gauge_params<R: Real>(p: &MarketParams<R>, variant: GaugeVariant) -> GaugeParams<R> {
    let two = R::of(2);
    let s2 = p.sigma() * p.sigma();
    let a = (s2 / two - p.rate()) / s2;
    let b_schrodinger = (s2 / two + p.rate()).powi(2) / (two * s2);
    let b = match variant {
        GaugeVariant::Schrodinger => b_schrodinger,
        // shares the b_schrodinger term so the difference is exactly q/sigma^2
        GaugeVariant::KleinGordon => b_schrodinger - p.q() / s2,
    };
    GaugeParams { a, b, variant }
}

/// Uniform rectangular grid over (x, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<R: Real> {
    pub x_min: R,
    pub x_max: R,
    pub t_min: R,
    pub t_max: R,
    pub nx: usize,
    pub nt: usize,
}

impl<R: Real> GridSpec<R> {
    pub fn new(
        x_min: R,
        x_max: R,
        t_min: R,
        t_max: R,
        nx: usize,
        nt: usize,
    ) -> Result<Self, GaugeError> {
        if nx < 3 || nt < 3 {
            return Err(GaugeError::BadGrid(format!("need nx, nt >= 3, got {nx} x {nt}")));
        }
        let ok = x_min.is_finite() && x_max.is_finite() && t_min.is_finite() && t_max.is_finite();
        if !ok || x_min >= x_max || t_min >= t_max {
            return Err(GaugeError::BadGrid("bounds must be finite and increasing".into()));
        }
        Ok(Self { x_min, x_max, t_min, t_max, nx, nt })
    }

    pub fn hx(&self) -> R {
        (self.x_max - self.x_min) / R::from_usize(self.nx - 1).unwrap()
    }

    pub fn ht(&self) -> R {
        (self.t_max - self.t_min) / R::from_usize(self.nt - 1).unwrap()
    }

    /// i-th node; the last node is exactly `x_max` so stored bounds survive
    /// serialization round trips bit for bit.
    pub fn x(&self, i: usize) -> R {
        if i == self.nx - 1 {
            self.x_max
        } else {
            self.x_min + R::from_usize(i).unwrap() * self.hx()
        }
    }

    pub fn t(&self, j: usize) -> R {
        if j == self.nt - 1 {
            self.t_max
        } else {
            self.t_min + R::from_usize(j).unwrap() * self.ht()
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.nt
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Scalar field sampled on a [`GridSpec`]; values stored row-major with x
/// fastest (index = j * nx + i).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D<R: Real> {
    grid: GridSpec<R>,
    values: Vec<R>,
}

impl<R: Real> Field2D<R> {
    pub fn new(grid: GridSpec<R>, values: Vec<R>) -> Result<Self, GaugeError> {
        if values.len() != grid.len() {
            return Err(GaugeError::GridMismatch(format!(
                "expected {} values for {} x {}, got {}",
                grid.len(),
                grid.nx,
                grid.nt,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(GaugeError::BadValues(format!("non-finite value at flat index {bad}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples a function of (x, t) on the grid.
    pub fn from_fn(grid: GridSpec<R>, mut f: impl FnMut(R, R) -> R) -> Result<Self, GaugeError> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.nt {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.t(j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec<R> {
        &self.grid
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> R {
        self.values[j * self.grid.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.values[j * self.grid.nx + i] = v;
    }

    pub fn max_abs(&self) -> R {
        self.values.iter().fold(R::zero(), |m, v| m.max(v.abs()))
    }

    /// Max-norm of the difference; grids must agree exactly.
    pub fn max_abs_diff(&self, other: &Self) -> Result<R, GaugeError> {
        if self.grid != other.grid {
            return Err(GaugeError::GridMismatch("differing grids in max_abs_diff".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(R::zero(), |m, (a, b)| m.max((*a - *b).abs())))
    }

    /// CSV with header `x,t,value`, row-major (x fastest), 17 significant
    /// digits so every f64 round-trips bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 16);
        out.push_str("x,t,value\n");
        for j in 0..self.grid.nt {
            for i in 0..self.grid.nx {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e}",
                    self.grid.x(i),
                    self.grid.t(j),
                    self.at(i, j)
                );
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, GaugeError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "x,t,value" => {}
            other => {
                return Err(GaugeError::Csv {
                    line: 1,
                    message: format!("expected header 'x,t,value', got {:?}", other.map(|o| o.1)),
                })
            }
        }
        let mut xs: Vec<R> = Vec::new();
        let mut ts: Vec<R> = Vec::new();
        let mut values: Vec<R> = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let mut fields = row.split(',');
            let mut next = |name: &str| -> Result<R, GaugeError> {
                let tok = fields.next().ok_or_else(|| GaugeError::Csv {
                    line,
                    message: format!("missing {name} column"),
                })?;
                tok.trim().parse::<f64>().map(R::of_f64).map_err(|e| GaugeError::Csv {
                    line,
                    message: format!("bad {name} value {tok:?}: {e}"),
                })
            };
            xs.push(next("x")?);
            ts.push(next("t")?);
            values.push(next("value")?);
            if fields.next().is_some() {
                return Err(GaugeError::Csv { line, message: "too many columns".into() });
            }
        }
        if values.len() < 9 {
            return Err(GaugeError::Csv { line: 0, message: "fewer than 3 x 3 samples".into() });
        }
        // x varies fastest: nx = first index where t moves
        let nx = ts
            .iter()
            .position(|t| *t != ts[0])
            .ok_or_else(|| GaugeError::Csv { line: 0, message: "t never changes".into() })?;
        if nx < 3 || values.len() % nx != 0 {
            return Err(GaugeError::Csv {
                line: 0,
                message: format!("row count {} not a multiple of nx {nx}", values.len()),
            });
        }
        let nt = values.len() / nx;
        let grid = GridSpec::new(xs[0], xs[nx - 1], ts[0], ts[(nt - 1) * nx], nx, nt)?;
        // structural consistency, tolerant to one rounding step in coordinates
        let tol = (grid.hx().abs() + grid.ht().abs()) * R::of_f64(1e-9);
        for j in 0..nt {
            for i in 0..nx {
                let k = j * nx + i;
                if (xs[k] - grid.x(i)).abs() > tol || (ts[k] - grid.t(j)).abs() > tol {
                    return Err(GaugeError::Csv {
                        line: k + 2,
                        message: "coordinates do not form a uniform x-fastest grid".into(),
                    });
                }
            }
        }
        Self::new(grid, values)
    }
}

fn gauge_apply<R: Real>(
    field: &Field2D<R>,
    gp: &GaugeParams<R>,
    sign: R,
) -> Result<Field2D<R>, GaugeError> {
    let grid = *field.grid();
    let limit = R::of_f64(GAUGE_EXPONENT_LIMIT);
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.nt {
        for i in 0..grid.nx {
            let e = gp.a * grid.x(i) + gp.b * grid.t(j);
            if e.abs() > limit {
                return Err(GaugeError::Overflow { exponent: e.as_f64(), i, j });
            }
            values.push(field.at(i, j) * (sign * e).exp());
        }
    }
    Field2D::new(grid, values)
}

/// psi = e^{-(a x + b t)} C.
pub fn gauge_forward<R: Real>(
    price_field: &Field2D<R>,
    gp: &GaugeParams<R>,
) -> Result<Field2D<R>, GaugeError> {
    gauge_apply(price_field, gp, -R::one())
}

/// C = e^{+(a x + b t)} psi.
pub fn gauge_inverse<R: Real>(
    wave_field: &Field2D<R>,
    gp: &GaugeParams<R>,
) -> Result<Field2D<R>, GaugeError> {
    gauge_apply(wave_field, gp, R::one())
}
