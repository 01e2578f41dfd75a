//! Operator algebra of the conformal generators on Laurent polynomials.
//!
//! The generators l_n = -z^{n+1}(A/2 + d/dz) close under commutation as
//! [l_n, l_k] = (n - k) l_{n+k}; the power n+1 is what makes the index
//! additive. Coefficients are generic so the commutator checks can run in
//! exact rational-complex arithmetic as well as in floating point. A barred
//! copy acts on the antiholomorphic factor of separable fields with the
//! conjugated drift, and commutes with the unbarred copy term by term.

use std::collections::BTreeMap;
use std::ops::Neg;

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num};

/// Coefficient ring: Complex<f64> for fast checks, Complex<BigRational> for
/// exact ones.
pub trait Coeff: Clone + PartialEq + Num + Neg<Output = Self> + FromPrimitive {
    fn conj_c(&self) -> Self;
}

impl Coeff for Complex<f64> {
    fn conj_c(&self) -> Self {
        self.conj()
    }
}

impl Coeff for Complex<BigRational> {
    fn conj_c(&self) -> Self {
        self.conj()
    }
}

/// Lossless embedding of a float complex number; every finite f64 is a
/// dyadic rational.
pub fn exact_complex(c: Complex<f64>) -> Complex<BigRational> {
    Complex::new(
        BigRational::from_float(c.re).expect("finite re"),
        BigRational::from_float(c.im).expect("finite im"),
    )
}

/// Finite Laurent polynomial: integer powers of z with nonzero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentPoly<C: Coeff> {
    terms: BTreeMap<i64, C>,
}

impl<C: Coeff> LaurentPoly<C> {
    pub fn zero() -> Self {
        Self { terms: BTreeMap::new() }
    }

    pub fn monomial(power: i64, coeff: C) -> Self {
        let mut p = Self::zero();
        p.insert(power, coeff);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (i64, C)>) -> Self {
        let mut p = Self::zero();
        for (n, c) in terms {
            let cur = p.coeff(n) + c;
            p.terms.remove(&n);
            p.insert(n, cur);
        }
        p
    }

    fn insert(&mut self, power: i64, coeff: C) {
        if !coeff.is_zero() {
            self.terms.insert(power, coeff);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, power: i64) -> C {
        self.terms.get(&power).cloned().unwrap_or_else(C::zero)
    }

    /// (lowest, highest) stored power.
    pub fn support(&self) -> Option<(i64, i64)> {
        let lo = self.terms.keys().next()?;
        let hi = self.terms.keys().next_back()?;
        Some((*lo, *hi))
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &C)> {
        self.terms.iter().map(|(n, c)| (*n, c))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (n, c) in &other.terms {
            let cur = out.coeff(*n) + c.clone();
            out.terms.remove(n);
            out.insert(*n, cur);
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self { terms: self.terms.iter().map(|(n, c)| (*n, -c.clone())).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, factor: &C) -> Self {
        let mut out = Self::zero();
        for (n, c) in &self.terms {
            out.insert(*n, c.clone() * factor.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut acc: BTreeMap<i64, C> = BTreeMap::new();
        for (n, cn) in &self.terms {
            for (m, cm) in &other.terms {
                let cur = acc.remove(&(n + m)).unwrap_or_else(C::zero);
                acc.insert(n + m, cur + cn.clone() * cm.clone());
            }
        }
        let mut out = Self::zero();
        for (n, c) in acc {
            out.insert(n, c);
        }
        out
    }

    /// d/dz; the z^0 term drops.
    pub fn derivative(&self) -> Self {
        let mut out = Self::zero();
        for (n, c) in &self.terms {
            out.insert(n - 1, c.clone() * C::from_i64(*n).expect("small integer"));
        }
        out
    }

    /// Multiplication by z^p.
    pub fn shift(&self, p: i64) -> Self {
        Self { terms: self.terms.iter().map(|(n, c)| (n + p, c.clone())).collect() }
    }

    /// Conjugates every coefficient; powers are untouched.
    pub fn conj_coeffs(&self) -> Self {
        Self { terms: self.terms.iter().map(|(n, c)| (*n, c.conj_c())).collect() }
    }

    /// Horner-free evaluation; negative powers divide, so z must be nonzero
    /// when the support reaches below zero.
    pub fn eval(&self, z: C) -> C {
        let mut acc = C::zero();
        for (n, c) in &self.terms {
            let mut p = C::one();
            for _ in 0..n.unsigned_abs() {
                p = p * z.clone();
            }
            if *n < 0 {
                p = C::one() / p;
            }
            acc = acc + c.clone() * p;
        }
        acc
    }
}

impl LaurentPoly<Complex<f64>> {
    pub fn max_coeff_norm(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, c| m.max(c.norm()))
    }
}

/// l_n for drift a: maps z^m to -(a/2) z^{n+1+m} - m z^{n+m}.
#[derive(Debug, Clone, PartialEq)]
pub struct WittGenerator<C: Coeff> {
    pub n: i64,
    pub a: C,
}

impl<C: Coeff> WittGenerator<C> {
    pub fn new(n: i64, a: C) -> Self {
        Self { n, a }
    }

    pub fn apply(&self, f: &LaurentPoly<C>) -> LaurentPoly<C> {
        let half_a = self.a.clone() / C::from_i64(2).expect("two");
        f.scale(&half_a).add(&f.derivative()).shift(self.n + 1).neg()
    }
}

/// ([l_n, l_k] - (n - k) l_{n+k}) z^degree; identically zero when the algebra
/// closes, and any deviation shows up as leftover coefficients.
pub fn commutator_defect<C: Coeff>(n: i64, k: i64, degree: i64, a: &C) -> LaurentPoly<C> {
    let ln = WittGenerator::new(n, a.clone());
    let lk = WittGenerator::new(k, a.clone());
    let f = LaurentPoly::monomial(degree, C::one());
    let lhs = ln.apply(&lk.apply(&f)).sub(&lk.apply(&ln.apply(&f)));
    let rhs = WittGenerator::new(n + k, a.clone())
        .apply(&f)
        .scale(&C::from_i64(n - k).expect("small integer"));
    lhs.sub(&rhs)
}

/// Sum of separable terms f(z) g(zbar), the carrier for chiral actions.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableField<C: Coeff> {
    pub terms: Vec<(LaurentPoly<C>, LaurentPoly<C>)>,
}

impl<C: Coeff> SeparableField<C> {
    pub fn new(terms: Vec<(LaurentPoly<C>, LaurentPoly<C>)>) -> Self {
        Self { terms }
    }

    pub fn eval(&self, z: C) -> C {
        let zbar = z.conj_c();
        let mut acc = C::zero();
        for (f, g) in &self.terms {
            acc = acc + f.eval(z.clone()) * g.eval(zbar.clone());
        }
        acc
    }

    /// Unbarred generator: acts on the z factor of every term.
    pub fn apply_generator(&self, gen: &WittGenerator<C>) -> Self {
        Self { terms: self.terms.iter().map(|(f, g)| (gen.apply(f), g.clone())).collect() }
    }

    /// Barred generator: same index, conjugated drift, acting on the zbar
    /// factor.
    pub fn apply_barred(&self, gen: &WittGenerator<C>) -> Self {
        let barred = WittGenerator::new(gen.n, gen.a.conj_c());
        Self { terms: self.terms.iter().map(|(f, g)| (f.clone(), barred.apply(g))).collect() }
    }
}

/// First-order change of the field under the map generated by eps(z) and
/// eps_bar(zbar): delta C = -eps (a/2 + d/dz) C - eps_bar (abar/2 + d/dzbar) C.
/// The physical one-parameter families pair eps_bar with the conjugated
/// coefficients of eps; the halves are separate arguments so each chiral
/// action can be exercised alone.
pub fn infinitesimal_variation<C: Coeff>(
    eps: &LaurentPoly<C>,
    eps_bar: &LaurentPoly<C>,
    field: &SeparableField<C>,
    a: &C,
) -> SeparableField<C> {
    let half_a = a.clone() / C::from_i64(2).expect("two");
    let half_abar = half_a.conj_c();
    let mut terms = Vec::with_capacity(2 * field.terms.len());
    for (f, g) in &field.terms {
        let zf = eps.mul(&f.scale(&half_a).add(&f.derivative())).neg();
        if !(zf.is_zero() || g.is_zero()) {
            terms.push((zf, g.clone()));
        }
        let zg = eps_bar.mul(&g.scale(&half_abar).add(&g.derivative())).neg();
        if !(f.is_zero() || zg.is_zero()) {
            terms.push((f.clone(), zg));
        }
    }
    SeparableField { terms }
}

/// Value at z of the image field under z -> (1 + eps) z with its compensating
/// prefactor. Expanding in eps reproduces [`infinitesimal_variation`] along
/// eps(z) = eps z at first order, which is what the Richardson study checks.
pub fn linear_map_value(
    field: &SeparableField<Complex<f64>>,
    a: Complex<f64>,
    eps: Complex<f64>,
    z: Complex<f64>,
) -> Complex<f64> {
    let pre = z / (Complex::new(1.0, 0.0) + eps);
    // the exponent pairs with its conjugate, leaving a real factor
    let factor = (-(a * eps * pre).re).exp();
    field.eval(pre) * factor
}

/// Richardson study of the step from finite map to first-order variation.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationStudy {
    pub eps: Vec<f64>,
    pub defect: Vec<f64>,
    /// ln-ln slope of defect against eps; 2 when the variation is the exact
    /// derivative of the finite family.
    pub slope: f64,
}

/// Fixed off-axis sample points used by the variation study and the CLI.
pub fn default_sample_points() -> Vec<Complex<f64>> {
    vec![
        Complex::new(0.9, 0.1),
        Complex::new(0.4, 0.7),
        Complex::new(-0.3, 0.8),
        Complex::new(-0.8, 0.2),
        Complex::new(-0.6, -0.5),
        Complex::new(0.1, -0.9),
        Complex::new(0.7, -0.4),
        Complex::new(0.2, 0.3),
    ]
}

/// Compares the finite map against its first-order variation at each eps and
/// fits the convergence slope; quadratic contact means slope 2.
pub fn variation_study(
    field: &SeparableField<Complex<f64>>,
    a: Complex<f64>,
    eps_values: &[f64],
    samples: &[Complex<f64>],
) -> VariationStudy {
    let mut defect = Vec::with_capacity(eps_values.len());
    for &e in eps_values {
        let eps_c = Complex::new(e, 0.0);
        let eps_poly = LaurentPoly::monomial(1, eps_c);
        let delta = infinitesimal_variation(&eps_poly, &eps_poly.conj_coeffs(), field, &a);
        let mut worst: f64 = 0.0;
        for &z in samples {
            let finite = linear_map_value(field, a, eps_c, z);
            let first = field.eval(z) + delta.eval(z);
            worst = worst.max((finite - first).norm());
        }
        defect.push(worst);
    }
    let slope = log_log_slope(eps_values, &defect);
    VariationStudy { eps: eps_values.to_vec(), defect, slope }
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}
