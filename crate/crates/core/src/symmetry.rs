//! Complex-coordinate form of the pricing equation and its invariance maps.
//!
//! With z = x + i sqrt(q) t the equation becomes an elliptic operator for a
//! complex field C(z, zbar): four times the mixed second derivative plus
//! drift terms weighted by A and a mass term q/sigma^4. Dropping the mass
//! term enlarges the symmetry group from rotations to all analytic maps;
//! this module evaluates both residuals and applies the finite rotation and
//! scale transformations together with their compensating prefactors.

use num_complex::Complex;
use thiserror::Error;

use crate::gauge::{gauge_params, GaugeError, GaugeVariant, GridSpec};
use crate::model::{drift_coefficient, MarketParams};
use crate::scalar::Real;

pub mod witt;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymmetryError {
    #[error("field grids are incompatible: {0}")]
    GridMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("resample point (x={x}, t={t}) falls outside the source domain")]
    ResampleOutOfDomain { x: f64, t: f64 },
    #[error(transparent)]
    Grid(#[from] GaugeError),
}

/// Complex field on an (x, t) grid, read as a function of z = x + i sqrt(q) t.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<R: Real> {
    grid: GridSpec<R>,
    params: MarketParams<R>,
    values: Vec<Complex<R>>,
}

impl<R: Real> ComplexField<R> {
    pub fn new(
        grid: GridSpec<R>,
        params: MarketParams<R>,
        values: Vec<Complex<R>>,
    ) -> Result<Self, SymmetryError> {
        if values.len() != grid.len() {
            return Err(SymmetryError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, params, values })
    }

    pub fn from_fn(
        grid: GridSpec<R>,
        params: MarketParams<R>,
        mut f: impl FnMut(Complex<R>) -> Complex<R>,
    ) -> Self {
        let speed = params.speed();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.nt {
            for i in 0..grid.nx {
                values.push(f(Complex::new(grid.x(i), speed * grid.t(j))));
            }
        }
        Self { grid, params, values }
    }

    pub fn grid(&self) -> &GridSpec<R> {
        &self.grid
    }

    pub fn params(&self) -> &MarketParams<R> {
        &self.params
    }

    pub fn values(&self) -> &[Complex<R>] {
        &self.values
    }

    /// z at node (i, j).
    pub fn z(&self, i: usize, j: usize) -> Complex<R> {
        Complex::new(self.grid.x(i), self.params.speed() * self.grid.t(j))
    }

    pub fn at(&self, i: usize, j: usize) -> Complex<R> {
        self.values[j * self.grid.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex<R>) {
        self.values[j * self.grid.nx + i] = v;
    }

    pub fn max_abs(&self) -> R {
        self.values.iter().fold(R::zero(), |m, v| m.max(v.norm()))
    }

    /// Largest magnitude over nodes with a full central stencil.
    pub fn interior_max_abs(&self) -> R {
        let mut m = R::zero();
        for j in 1..self.grid.nt - 1 {
            for i in 1..self.grid.nx - 1 {
                m = m.max(self.at(i, j).norm());
            }
        }
        m
    }
}

fn residual_impl<R: Real>(field: &ComplexField<R>, include_mass: bool) -> ComplexField<R> {
    let g = field.grid;
    let p = field.params;
    let a = drift_coefficient(&p).as_complex();
    let abar = a.conj();
    let speed = p.speed();
    let half = R::of(1) / R::of(2);
    let inv_q = R::one() / p.q();
    let hx = g.hx();
    let ht = g.ht();
    let zero_order = {
        let aabar = Complex::new(a.norm_sqr(), R::zero());
        if include_mass {
            aabar - Complex::new(p.mass(), R::zero())
        } else {
            aabar
        }
    };
    let mut out = ComplexField {
        grid: g,
        params: p,
        values: vec![Complex::new(R::zero(), R::zero()); g.len()],
    };
    for j in 1..g.nt - 1 {
        for i in 1..g.nx - 1 {
            let c = field.at(i, j);
            let e = field.at(i + 1, j);
            let w = field.at(i - 1, j);
            let n = field.at(i, j + 1);
            let s = field.at(i, j - 1);
            let two = R::of(2);
            let dxx = (e - c.scale(two) + w).unscale(hx * hx);
            let dtt = (n - c.scale(two) + s).unscale(ht * ht);
            let dx = (e - w).unscale(two * hx);
            let dt = (n - s).unscale(two * ht);
            // 4 C_{z zbar} = D_xx + D_tt / q with z = x + i sqrt(q) t
            let lap = dxx + dtt.scale(inv_q);
            let i_dt = Complex::new(R::zero(), R::one()) * dt.unscale(speed);
            let cz = (dx - i_dt).scale(half);
            let czbar = (dx + i_dt).scale(half);
            let r = lap + (abar * cz + a * czbar).scale(R::of(2)) + zero_order * c;
            out.set(i, j, r);
        }
    }
    out
}

/// Pointwise residual of the full equation, boundary ring left at zero.
pub fn residual_massive<R: Real>(field: &ComplexField<R>) -> ComplexField<R> {
    residual_impl(field, true)
}

/// Same operator with the mass term q/sigma^4 dropped.
pub fn residual_massless<R: Real>(field: &ComplexField<R>) -> ComplexField<R> {
    residual_impl(field, false)
}

/// e^{-Re(A z)}, the factor that peels the drift off the field; the remainder
/// u then satisfies 4 u_{z zbar} = (q/sigma^4) u, or Laplace's equation in the
/// massless case.
fn drift_envelope<R: Real>(a: Complex<R>, z: Complex<R>) -> R {
    (-(a * z).re).exp()
}

/// Exact solution of the full equation: the drift envelope times an
/// exponential mode u = e^{k z + (q/(4 sigma^4 k)) zbar}.
pub fn massive_mode<R: Real>(
    grid: GridSpec<R>,
    params: MarketParams<R>,
    k: Complex<R>,
) -> Result<ComplexField<R>, SymmetryError> {
    if k.norm() == R::zero() || !k.re.is_finite() || !k.im.is_finite() {
        return Err(SymmetryError::InvalidParameter("mode parameter k must be finite and nonzero".into()));
    }
    let a = drift_coefficient(&params).as_complex();
    let four = R::of(4);
    let kbar_coeff = Complex::new(params.mass(), R::zero()) / (k.scale(four));
    Ok(ComplexField::from_fn(grid, params, |z| {
        (k * z + kbar_coeff * z.conj()).exp().scale(drift_envelope(a, z))
    }))
}

/// Exact solution of the massless equation built from the harmonic function
/// u = z^2 + zbar^2.
pub fn harmonic_mode<R: Real>(grid: GridSpec<R>, params: MarketParams<R>) -> ComplexField<R> {
    let a = drift_coefficient(&params).as_complex();
    ComplexField::from_fn(grid, params, |z| {
        let u = z * z + z.conj() * z.conj();
        u.scale(drift_envelope(a, z))
    })
}

/// Cubic Lagrange weights for the nodes {-1, 0, 1, 2} around offset s in
/// [0, 1]; fourth-order for smooth data, which keeps the resampled field's
/// divided differences at the same O(h^2) as the direct discretization.
fn lagrange_weights<R: Real>(s: R) -> [R; 4] {
    let one = R::one();
    let two = R::of(2);
    let six = R::of(6);
    [
        -s * (s - one) * (s - two) / six,
        (s + one) * (s - one) * (s - two) / two,
        -(s + one) * s * (s - two) / two,
        (s + one) * s * (s - one) / six,
    ]
}

/// Resamples the field at fractional grid coordinates (u, v) in cell units.
fn sample_bicubic<R: Real>(
    field: &ComplexField<R>,
    u: R,
    v: R,
) -> Result<Complex<R>, SymmetryError> {
    let g = field.grid;
    let slack = R::of_f64(1e-9);
    let nx_max = R::of(g.nx as i32 - 1);
    let nt_max = R::of(g.nt as i32 - 1);
    if u < -slack || u > nx_max + slack || v < -slack || v > nt_max + slack {
        return Err(SymmetryError::ResampleOutOfDomain {
            x: (g.x(0) + u * g.hx()).as_f64(),
            t: (g.t(0) + v * g.ht()).as_f64(),
        });
    }
    // clamp the stencil base so the cubic is evaluated one cell inward at
    // the edges; still the interpolating cubic through four real nodes
    let base = |w: R, n: usize| -> (usize, R) {
        let mut i0 = w.floor().as_f64() as i64;
        i0 = i0.clamp(1, n as i64 - 3);
        (i0 as usize, w - R::of_f64(i0 as f64))
    };
    let (i0, su) = base(u, g.nx);
    let (j0, sv) = base(v, g.nt);
    let wu = lagrange_weights(su);
    let wv = lagrange_weights(sv);
    let mut acc = Complex::new(R::zero(), R::zero());
    for (dj, wj) in wv.iter().enumerate() {
        let mut row = Complex::new(R::zero(), R::zero());
        for (di, wi) in wu.iter().enumerate() {
            row = row + field.at(i0 - 1 + di, j0 - 1 + dj).scale(*wi);
        }
        acc = acc + row.scale(*wj);
    }
    Ok(acc)
}

/// Output window for a rotation by alpha: the largest axis-aligned rectangle
/// of the input's aspect ratio inscribed in the rotated input rectangle,
/// shrunk by a two-cell margin so every resample stencil stays interior.
fn inscribed_half_widths<R: Real>(wx: R, wt: R, alpha: R) -> (R, R) {
    let c = alpha.cos().abs();
    let s = alpha.sin().abs();
    let scale = (wx / (wx * c + wt * s)).min(wt / (wx * s + wt * c));
    (scale * wx, scale * wt)
}

/// Rotates z' = e^{i alpha} z and carries the field along with its
/// compensating prefactor, resampling on a new grid inside the image domain.
/// The output grid keeps the source spacing so the interpolation error stays
/// at the same order as the direct discretization error; a finer output grid
/// would amplify the interpolation term through the second differences.
/// A field solving the full equation keeps solving it after rotation.
pub fn apply_rotation<R: Real>(
    field: &ComplexField<R>,
    alpha: R,
) -> Result<ComplexField<R>, SymmetryError> {
    if !alpha.is_finite() {
        return Err(SymmetryError::InvalidParameter("rotation angle must be finite".into()));
    }
    if alpha == R::zero() {
        return Ok(field.clone());
    }
    let g = field.grid;
    if g.nx < 8 || g.nt < 8 {
        return Err(SymmetryError::InvalidParameter("rotation needs at least an 8x8 grid".into()));
    }
    let p = field.params;
    let speed = p.speed();
    let a = drift_coefficient(&p).as_complex();
    let two = R::of(2);
    let half = R::one() / two;
    let xc = (g.x(0) + g.x(g.nx - 1)) * half;
    let tauc = speed * (g.t(0) + g.t(g.nt - 1)) * half;
    let wx = (g.x(g.nx - 1) - g.x(0)) * half;
    let wtau = speed * (g.t(g.nt - 1) - g.t(0)) * half;
    let (win_x, win_tau) = inscribed_half_widths(wx, wtau, alpha);
    let hx_in = g.hx();
    let htau_in = speed * g.ht();
    // two-cell margin keeps every resample stencil interior; the floor snaps
    // the window to whole source cells, preserving the spacing exactly and
    // making whole-turn rotations land back on source nodes
    let cells = |hw: R, h: R| -> Result<usize, SymmetryError> {
        // fuzzy floor: cell counts must not flip on roundoff when the window
        // divides evenly, or whole-turn rotations lose node alignment
        let n = ((two * hw / h + R::of_f64(1e-9)).floor().as_f64() as i64) + 1;
        if n < 4 {
            return Err(SymmetryError::InvalidParameter(
                "rotated window is smaller than four cells at this resolution".into(),
            ));
        }
        Ok(n as usize)
    };
    let nx_out = cells(win_x - two * hx_in, hx_in)?;
    let nt_out = cells(win_tau - two * htau_in, htau_in)?;
    let hw_x = R::of(nx_out as i32 - 1) * hx_in * half;
    let hw_tau = R::of(nt_out as i32 - 1) * htau_in * half;
    let rot = Complex::new(alpha.cos(), alpha.sin());
    let center_out = rot * Complex::new(xc, tauc);
    let out_grid = GridSpec::new(
        center_out.re - hw_x,
        center_out.re + hw_x,
        (center_out.im - hw_tau) / speed,
        (center_out.im + hw_tau) / speed,
        nx_out,
        nt_out,
    )?;
    // prefactor exponent (A z (1 - e^{i alpha}) + conj)/2 is purely real
    let one_minus_rot = Complex::new(R::one(), R::zero()) - rot;
    let inv_rot = rot.conj();
    let mut out = ComplexField {
        grid: out_grid,
        params: p,
        values: vec![Complex::new(R::zero(), R::zero()); out_grid.len()],
    };
    for j in 0..out_grid.nt {
        for i in 0..out_grid.nx {
            let zp = Complex::new(out_grid.x(i), speed * out_grid.t(j));
            let z = inv_rot * zp;
            let u = (z.re - g.x(0)) / g.hx();
            let v = (z.im / speed - g.t(0)) / g.ht();
            let interp = sample_bicubic(field, u, v)?;
            let factor = (a * z * one_minus_rot).re.exp();
            out.set(i, j, interp.scale(factor));
        }
    }
    Ok(out)
}

/// Stretches x' = lambda x, t' = lambda t (so z' = lambda z) and rescales the
/// values by e^{(lambda - 1)(a x + b t)} with the Klein-Gordon gauge exponents.
/// No resampling: node (i, j) of the output is the image of node (i, j).
/// This is a symmetry of the massless equation only; the mass term breaks it.
pub fn apply_scale<R: Real>(
    field: &ComplexField<R>,
    lambda: R,
) -> Result<ComplexField<R>, SymmetryError> {
    if !(lambda.is_finite() && lambda > R::zero()) {
        return Err(SymmetryError::InvalidParameter("scale factor must be positive".into()));
    }
    if lambda == R::one() {
        return Ok(field.clone());
    }
    let g = field.grid;
    let gp = gauge_params(&field.params, GaugeVariant::KleinGordon);
    let out_grid = GridSpec::new(
        lambda * g.x(0),
        lambda * g.x(g.nx - 1),
        lambda * g.t(0),
        lambda * g.t(g.nt - 1),
        g.nx,
        g.nt,
    )?;
    let shift = lambda - R::one();
    let mut values = Vec::with_capacity(g.len());
    for j in 0..g.nt {
        for i in 0..g.nx {
            let factor = (shift * (gp.a * g.x(i) + gp.b * g.t(j))).exp();
            values.push(field.at(i, j).scale(factor));
        }
    }
    Ok(ComplexField { grid: out_grid, params: field.params, values })
}
