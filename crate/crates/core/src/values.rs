//! Numerical values of the functionals built on an operator family:
//!
//! * `A(f)`: the two-point functional on `A_{(i+j)/(2n)}(f)`;
//! * `C_m(f)`: its `m`-point generalization;
//! * `B_m(f) = L_{mn,A}(f)(mean) - sum prod_nu a_{n,i_nu}(x_nu) A_{(i_1+..+i_m)/(mn)}(f)`;
//! * the Jensen gap of `L_{mn,A}(f)` at the points.
//!
//! Every `m`-fold index sum is collapsed to coefficient extraction from a
//! product of generating series. The literal nested sums survive only in the
//! `*_brute_force` functions, which serve as independent cross-checks for
//! `m <= 3`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{OperatorFamily, DEFAULT_TAIL_TARGET, MAX_ORDER};
use crate::functional::{second_divided_differences, FunctionalFamily, Growth, TestFunction};
use crate::inequality::{check_points, mean, product_series};
use crate::series::TruncatedSeries;

/// Threshold on `|B_m(e_0)|` and `|B_m(e_1)|` before any `B_m` evaluation.
pub const MOMENT_GUARD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    Fixed(usize),
    /// Smallest order whose bound on the neglected terms
    /// `sum_{k>N} |c_k| |A_{k/h}(f)|` falls below the target; finite-support
    /// families use their full degree.
    Auto {
        tail_target: f64,
    },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Auto {
            tail_target: DEFAULT_TAIL_TARGET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Direct,
    SeriesConvolution,
    DividedDifferenceRepresentation,
    BruteForce,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Direct => "Direct",
            Method::SeriesConvolution => "SeriesConvolution",
            Method::DividedDifferenceRepresentation => "DividedDifferenceRepresentation",
            Method::BruteForce => "BruteForce",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalValue {
    pub value: f64,
    pub truncation_order: usize,
    /// Bound on the neglected terms. Automatic truncation sums
    /// `|c_k| |A_{k/h}(f)|` past `N` over the built series and extrapolates
    /// geometrically beyond it; a fixed order uses the neglected mass times
    /// the largest `|A_{k/h}(f)|` over `k <= 2N`.
    pub tail_bound: f64,
    pub method: Method,
    /// `sum_k sum_i |factor_i c_{i,k}| |A_{k/h}(f)|`; sets the roundoff scale.
    pub magnitude: f64,
}

impl FunctionalValue {
    /// Roundoff allowance for the accumulated sums.
    pub fn rounding_bound(&self) -> f64 {
        64.0 * f64::EPSILON * self.magnitude
    }
}

/// Values `A_{k/h}(f)`, evaluated on demand.
struct Nodes<'a> {
    functional: &'a FunctionalFamily,
    f: &'a TestFunction,
    denom: f64,
    values: Vec<f64>,
}

impl<'a> Nodes<'a> {
    fn new(functional: &'a FunctionalFamily, f: &'a TestFunction, denom: u32) -> Self {
        Self {
            functional,
            f,
            denom: denom as f64,
            values: Vec::new(),
        }
    }

    fn get(&mut self, k: usize) -> Result<f64> {
        while self.values.len() <= k {
            let t = self.values.len() as f64 / self.denom;
            let v = self.functional.apply(t, self.f)?;
            self.values.push(v);
        }
        Ok(self.values[k])
    }

    fn max_abs(&mut self, upto: usize) -> Result<f64> {
        self.get(upto)?;
        Ok(self.values[..=upto].iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }
}

/// One signed probability-like series in a weighted combination.
struct Term {
    factor: f64,
    series: TruncatedSeries,
}

impl Term {
    fn new(factor: f64, series: TruncatedSeries) -> Self {
        Self { factor, series }
    }
}

/// Evaluates the functionals of one operator family against one test
/// function under a fixed functional family `{A_t}`.
#[derive(Clone, Copy, Debug)]
pub struct Evaluator<'a> {
    pub family: &'a OperatorFamily,
    pub functional: &'a FunctionalFamily,
    pub f: &'a TestFunction,
    pub truncation: Truncation,
}

impl<'a> Evaluator<'a> {
    pub fn new(family: &'a OperatorFamily, functional: &'a FunctionalFamily, f: &'a TestFunction) -> Self {
        Self {
            family,
            functional,
            f,
            truncation: Truncation::default(),
        }
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    fn with_function<'b>(&self, f: &'b TestFunction) -> Evaluator<'b>
    where
        'a: 'b,
    {
        Evaluator {
            family: self.family,
            functional: self.functional,
            f,
            truncation: self.truncation,
        }
    }

    /// Order at which the input series are built before the final order is
    /// chosen.
    fn working_order(&self, degree: Option<usize>) -> usize {
        match (self.truncation, degree) {
            (Truncation::Fixed(order), _) => order,
            (Truncation::Auto { .. }, Some(d)) => d,
            (Truncation::Auto { .. }, None) => MAX_ORDER,
        }
    }

    /// Rejects exponentially growing test functions on families whose
    /// generating series cannot reach `e^{1/h}`.
    fn check_convergence(&self, denom: u32, points: &[f64]) -> Result<()> {
        if self.f.growth() != Growth::Exponential {
            return Ok(());
        }
        let needed = (1.0 / denom as f64).exp();
        for &x in points {
            if self.family.radius(x).is_some_and(|r| needed >= r) {
                return Err(Error::Divergent {
                    family: self.family.name(),
                    function: self.f.name().to_string(),
                    x,
                });
            }
        }
        Ok(())
    }

    /// Neglected mass beyond `order`, floored at zero.
    fn residual_mass(terms: &[Term], order: usize) -> f64 {
        terms
            .iter()
            .map(|t| {
                let kept: f64 = t.series.coeffs().iter().take(order + 1).sum();
                t.factor.abs() * (1.0 - kept).max(0.0)
            })
            .sum()
    }

    /// `|sum_t factor_t c_{t,k}|` bounded termwise: `sum_t |factor_t c_{t,k}|`.
    fn abs_weight(terms: &[Term], k: usize) -> f64 {
        terms.iter().map(|t| (t.factor * t.series.coeff(k)).abs()).sum()
    }

    /// Suffix sums `S_N = sum_{k > N} w_k |F_k|` over the built series plus a
    /// geometric extrapolation past its last index, for `N = 0..=K`.
    fn suffix_tails(terms: &[Term], nodes: &mut Nodes<'_>) -> Result<Vec<f64>> {
        let last = terms.iter().map(|t| t.series.order()).min().unwrap_or(0);
        let mut u = Vec::with_capacity(last + 1);
        for k in 0..=last {
            let w = Self::abs_weight(terms, k);
            u.push(if w == 0.0 { 0.0 } else { w * nodes.get(k)?.abs() });
        }
        let beyond = match (last.checked_sub(1).map(|k| u[k]), u[last]) {
            (_, 0.0) => 0.0,
            (Some(prev), cur) if cur < prev => {
                let r = cur / prev;
                cur * r / (1.0 - r)
            }
            // not decaying yet: fall back to the mass beyond the last index
            _ => Self::residual_mass(terms, last) * nodes.max_abs(2 * last)?,
        };
        let mut tails = vec![0.0; last + 1];
        let mut acc = beyond;
        for k in (0..=last).rev() {
            tails[k] = acc;
            acc += u[k];
        }
        Ok(tails)
    }

    fn combine(
        &self,
        terms: &[Term],
        denom: u32,
        degree: Option<usize>,
        method: Method,
    ) -> Result<FunctionalValue> {
        let mut nodes = Nodes::new(self.functional, self.f, denom);
        let (order, tail_bound) = match (self.truncation, degree) {
            (Truncation::Auto { .. }, Some(d)) => (d, 0.0),
            (Truncation::Fixed(order), Some(d)) if order >= d => (order, 0.0),
            (Truncation::Fixed(order), _) => {
                let mass = Self::residual_mass(terms, order);
                let bound = if mass > 0.0 {
                    mass * nodes.max_abs(2 * order)?
                } else {
                    0.0
                };
                (order, bound)
            }
            (Truncation::Auto { tail_target }, None) => {
                let tails = Self::suffix_tails(terms, &mut nodes)?;
                let order = tails
                    .iter()
                    .position(|&t| t < tail_target)
                    .unwrap_or(tails.len() - 1);
                (order, tails[order])
            }
        };
        let mut value = 0.0;
        let mut magnitude = 0.0;
        for k in 0..=order {
            let mut weight = 0.0;
            let mut abs_weight = 0.0;
            for t in terms {
                let c = t.factor * t.series.coeff(k);
                weight += c;
                abs_weight += c.abs();
            }
            if abs_weight == 0.0 {
                continue;
            }
            let node = nodes.get(k)?;
            value += weight * node;
            magnitude += abs_weight * node.abs();
        }
        Ok(FunctionalValue {
            value,
            truncation_order: order,
            tail_bound,
            method,
            magnitude,
        })
    }

    fn series(&self, n: u32, x: f64, order: usize) -> Result<TruncatedSeries> {
        self.family.generating_series(n, x, order)
    }

    /// `L_{n,A}(f)(x) = sum_k a_{n,k}(x) A_{k/n}(f)`.
    pub fn operator_value(&self, n: u32, x: f64) -> Result<FunctionalValue> {
        self.check_convergence(n, &[x])?;
        let degree = self.family.degree(n);
        let order = self.working_order(degree);
        let terms = [Term::new(1.0, self.series(n, x, order)?)];
        self.combine(&terms, n, degree, Method::Direct)
    }

    /// `A(f) = sum_k [c_k(g_x^2) + c_k(g_y^2) - 2 c_k(g_x g_y)] A_{k/(2n)}(f)`.
    pub fn rasa_functional(&self, n: u32, x: f64, y: f64) -> Result<FunctionalValue> {
        self.check_convergence(2 * n, &[x, y])?;
        let degree = self.family.degree(2 * n);
        let order = self.working_order(degree);
        let gx = self.series(n, x, order)?;
        let gy = self.series(n, y, order)?;
        let terms = [
            Term::new(1.0, gx.multiply(&gx)),
            Term::new(1.0, gy.multiply(&gy)),
            Term::new(-2.0, gx.multiply(&gy)),
        ];
        self.combine(&terms, 2 * n, degree, Method::SeriesConvolution)
    }

    /// `C_m(f)` with weights `sum_nu c_k(g_n(x_nu)^m) - m c_k(prod_nu g_n(x_nu))`.
    pub fn cm_value(&self, n: u32, xs: &[f64]) -> Result<FunctionalValue> {
        check_points(self.family, xs)?;
        let m = xs.len() as u32;
        self.check_convergence(m * n, xs)?;
        let degree = self.family.degree(m * n);
        let order = self.working_order(degree);
        let mut terms = Vec::with_capacity(xs.len() + 1);
        for &x in xs {
            terms.push(Term::new(1.0, self.series(n, x, order)?.int_pow(m)));
        }
        terms.push(Term::new(-(m as f64), product_series(self.family, n, xs, order)?));
        self.combine(&terms, m * n, degree, Method::SeriesConvolution)
    }

    /// `C_m(f) = sum_nu L_{mn,A}(f)(x_nu) - m sum prod ...`, valid for
    /// power-form families where `g_n^m = g_{mn}`.
    pub fn cm_value_via_operator(&self, n: u32, xs: &[f64]) -> Result<FunctionalValue> {
        self.require_power_form()?;
        check_points(self.family, xs)?;
        let m = xs.len() as u32;
        self.check_convergence(m * n, xs)?;
        let degree = self.family.degree(m * n);
        let order = self.working_order(degree);
        let mut terms = Vec::with_capacity(xs.len() + 1);
        for &x in xs {
            terms.push(Term::new(1.0, self.series(m * n, x, order)?));
        }
        terms.push(Term::new(-(m as f64), product_series(self.family, n, xs, order)?));
        self.combine(&terms, m * n, degree, Method::Direct)
    }

    fn require_power_form(&self) -> Result<()> {
        if self.family.power_form() {
            Ok(())
        } else {
            Err(Error::NotPowerForm {
                family: self.family.name(),
            })
        }
    }

    fn bm_terms(&self, n: u32, xs: &[f64], order: usize) -> Result<[Term; 2]> {
        let m = xs.len() as u32;
        Ok([
            Term::new(1.0, self.series(m * n, mean(xs), order)?),
            Term::new(-1.0, product_series(self.family, n, xs, order)?),
        ])
    }

    /// `(B_m(e_0), B_m(e_1))` computed on the generic path.
    pub fn bm_moments(&self, n: u32, xs: &[f64]) -> Result<(FunctionalValue, FunctionalValue)> {
        check_points(self.family, xs)?;
        let m = xs.len() as u32;
        let degree = self.family.degree(m * n);
        let order = self.working_order(degree);
        let terms = self.bm_terms(n, xs, order)?;
        let e0 = TestFunction::monomial(0);
        let e1 = TestFunction::monomial(1);
        let v0 = self
            .with_function(&e0)
            .combine(&terms, m * n, degree, Method::SeriesConvolution)?;
        let v1 = self
            .with_function(&e1)
            .combine(&terms, m * n, degree, Method::SeriesConvolution)?;
        Ok((v0, v1))
    }

    fn guard_bm(&self, n: u32, xs: &[f64]) -> Result<()> {
        let (e0, e1) = self.bm_moments(n, xs)?;
        let power_form = self.family.power_form();
        // truncation leaves a defect of at most the tail bound in each moment
        let exceeds =
            |v: &FunctionalValue| v.value.abs() >= MOMENT_GUARD_TOL + v.tail_bound + v.rounding_bound();
        if !power_form || exceeds(&e0) || exceeds(&e1) {
            return Err(Error::MomentGuard {
                family: self.family.name(),
                e0: e0.value.abs(),
                e1: e1.value.abs(),
                power_form,
            });
        }
        Ok(())
    }

    /// `B_m(f) = L_{mn,A}(f)(mean) - sum_k c_k(prod_nu g_n(x_nu)) A_{k/(mn)}(f)`.
    pub fn bm_value(&self, n: u32, xs: &[f64]) -> Result<FunctionalValue> {
        self.guard_bm(n, xs)?;
        let m = xs.len() as u32;
        self.check_convergence(m * n, &with_mean(xs))?;
        let degree = self.family.degree(m * n);
        let order = self.working_order(degree);
        let terms = self.bm_terms(n, xs, order)?;
        self.combine(&terms, m * n, degree, Method::SeriesConvolution)
    }

    /// `B_m(f) = (2/(mn)) sum_{k>=2} (1/(mn)) r_{k-2} [(k-2)/(mn), (k-1)/(mn), k/(mn); A_t(f)]`
    /// where `r` are the coefficients of `E_m / (z - 1)^2`.
    ///
    /// At order `N` the quotient is taken by synthetic division from the top
    /// coefficient down, `r_j = sum_{k>j} (k-j-1) e_k`, so each `r_j` is
    /// built only from the entries it depends on and inherits their decay.
    /// The remainder `E_m(1) + E_m'(1)(z-1)` (the truncated moment defects)
    /// contributes `E_m(1) F_0 + E_m'(1) (F_1 - F_0)`, which is added to
    /// the tail bound.
    pub fn bm_value_via_representation(&self, n: u32, xs: &[f64]) -> Result<FunctionalValue> {
        self.guard_bm(n, xs)?;
        let m = xs.len() as u32;
        let h = m * n;
        self.check_convergence(h, &with_mean(xs))?;
        let degree = self.family.degree(h);
        let terms = self.bm_terms(n, xs, self.working_order(degree))?;
        let direct = self.combine(&terms, h, degree, Method::SeriesConvolution)?;
        let [lead, prod] = terms;
        let em = TruncatedSeries::linear_combine(1.0, &lead.series, -1.0, &prod.series);
        let e = em.coeffs();

        let mut nodes = Nodes::new(self.functional, self.f, h);
        let (f0, f1) = (nodes.get(0)?, nodes.get(1)?);
        let defect = |order: usize| {
            let upto = &e[..=order.min(e.len() - 1)];
            let mass: f64 = upto.iter().sum();
            let slope: f64 = upto.iter().enumerate().map(|(k, c)| k as f64 * c).sum();
            (mass * f0 + slope * (f1 - f0)).abs()
        };
        // The remainder is driven by neglected mass, not by neglected
        // mass times |F_k|, so a decaying F can stop the direct sum early.
        let mut order = direct.truncation_order.max(2);
        if let (Truncation::Auto { tail_target }, None) = (self.truncation, degree) {
            while order + 1 < e.len() && !(defect(order) < tail_target) {
                order += 1;
            }
        }
        let (r, e_at_1, de_at_1) = divide_from_top(&e[..=order.min(e.len() - 1)]);

        let dd = second_divided_differences(self.functional, self.f, h, order - 2)?;
        let hf = h as f64;
        let mut value = 0.0;
        let mut magnitude = 0.0;
        for (rj, d) in r.iter().zip(&dd) {
            let term = (2.0 / hf) * (1.0 / hf) * rj * d;
            value += term;
            magnitude += term.abs();
        }

        let remainder = e_at_1 * f0 + de_at_1 * (f1 - f0);

        Ok(FunctionalValue {
            value,
            truncation_order: order,
            tail_bound: direct.tail_bound + remainder.abs(),
            method: Method::DividedDifferenceRepresentation,
            magnitude: magnitude.max(direct.magnitude),
        })
    }

    /// `(1/m) sum_nu L_{mn,A}(f)(x_nu) - L_{mn,A}(f)(mean)`.
    pub fn jensen_gap(&self, n: u32, xs: &[f64]) -> Result<FunctionalValue> {
        check_points(self.family, xs)?;
        let m = xs.len() as u32;
        self.check_convergence(m * n, &with_mean(xs))?;
        let degree = self.family.degree(m * n);
        let order = self.working_order(degree);
        let mut terms = Vec::with_capacity(xs.len() + 1);
        for &x in xs {
            terms.push(Term::new(1.0 / m as f64, self.series(m * n, x, order)?));
        }
        terms.push(Term::new(-1.0, self.series(m * n, mean(xs), order)?));
        self.combine(&terms, m * n, degree, Method::Direct)
    }

    /// Checks `C_m(f) = m * jensen_gap + m * B_m(f)` at a common order.
    pub fn decomposition_check(&self, n: u32, xs: &[f64]) -> Result<DecompositionReport> {
        self.require_power_form()?;
        let order = [
            self.cm_value(n, xs)?.truncation_order,
            self.jensen_gap(n, xs)?.truncation_order,
            self.bm_value(n, xs)?.truncation_order,
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let fixed = self.with_truncation(Truncation::Fixed(order));
        let cm = fixed.cm_value(n, xs)?;
        let jensen = fixed.jensen_gap(n, xs)?;
        let bm = fixed.bm_value(n, xs)?;
        let m = xs.len() as f64;
        let residual = cm.value - m * jensen.value - m * bm.value;
        let tolerance = 1e-10
            + cm.tail_bound
            + m * (jensen.tail_bound + bm.tail_bound)
            + cm.rounding_bound()
            + m * (jensen.rounding_bound() + bm.rounding_bound());
        Ok(DecompositionReport {
            cm,
            jensen,
            bm,
            residual,
            tolerance,
        })
    }

    /// Literal double sum over `i + j <= N` for `A(f)`.
    pub fn rasa_brute_force(&self, n: u32, x: f64, y: f64, order: usize) -> Result<FunctionalValue> {
        let a = self.family.coefficients(n, x, order)?;
        let b = self.family.coefficients(n, y, order)?;
        let mut nodes = Nodes::new(self.functional, self.f, 2 * n);
        let mut value = 0.0;
        let mut magnitude = 0.0;
        let mut mass = [0.0; 3];
        for i in 0..=order {
            for j in 0..=order - i {
                let w = [a[i] * a[j], b[i] * b[j], a[i] * b[j]];
                let node = nodes.get(i + j)?;
                value += (w[0] + w[1] - 2.0 * w[2]) * node;
                magnitude += (w[0] + w[1] + 2.0 * w[2]) * node.abs();
                for (acc, v) in mass.iter_mut().zip(w) {
                    *acc += v;
                }
            }
        }
        let tail = (1.0 - mass[0]).max(0.0) + (1.0 - mass[1]).max(0.0) + 2.0 * (1.0 - mass[2]).max(0.0);
        let tail_bound = if tail > 0.0 {
            tail * nodes.max_abs(2 * order)?
        } else {
            0.0
        };
        Ok(FunctionalValue {
            value,
            truncation_order: order,
            tail_bound,
            method: Method::BruteForce,
            magnitude,
        })
    }

    /// Literal `m`-fold sum over index tuples with `i_1 + .. + i_m <= N`
    /// for `C_m(f)`; `m <= 3`.
    pub fn cm_brute_force(&self, n: u32, xs: &[f64], order: usize) -> Result<FunctionalValue> {
        check_points(self.family, xs)?;
        let m = xs.len();
        if m > 3 {
            return Err(Error::InvalidInput(
                "brute-force sums are limited to m <= 3".into(),
            ));
        }
        let weights: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| self.family.coefficients(n, x, order))
            .collect::<Result<_>>()?;
        let mut nodes = Nodes::new(self.functional, self.f, m as u32 * n);
        let mut value = 0.0;
        let mut magnitude = 0.0;
        let mut mass = vec![0.0; m + 1];
        let mut failure = None;
        for_each_tuple(m, order, &mut |idx| {
            if failure.is_some() {
                return;
            }
            let total: usize = idx.iter().sum();
            let node = match nodes.get(total) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            };
            let mut diag_sum = 0.0;
            for (nu, w) in weights.iter().enumerate() {
                let p: f64 = idx.iter().map(|&i| w[i]).product();
                diag_sum += p;
                mass[nu] += p;
            }
            let cross: f64 = idx.iter().zip(&weights).map(|(&i, w)| w[i]).product();
            mass[m] += cross;
            value += (diag_sum - m as f64 * cross) * node;
            magnitude += (diag_sum + m as f64 * cross) * node.abs();
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let tail: f64 =
            mass[..m].iter().map(|s| (1.0 - s).max(0.0)).sum::<f64>() + m as f64 * (1.0 - mass[m]).max(0.0);
        let tail_bound = if tail > 0.0 {
            tail * nodes.max_abs(2 * order)?
        } else {
            0.0
        };
        Ok(FunctionalValue {
            value,
            truncation_order: order,
            tail_bound,
            method: Method::BruteForce,
            magnitude,
        })
    }

    /// Literal sums for `B_m(f)`: `sum_k a_{mn,k}(mean) A_{k/(mn)}(f)` minus
    /// the `m`-fold sum over `i_1 + .. + i_m <= N`; `m <= 3`.
    pub fn bm_brute_force(&self, n: u32, xs: &[f64], order: usize) -> Result<FunctionalValue> {
        check_points(self.family, xs)?;
        let m = xs.len();
        if m > 3 {
            return Err(Error::InvalidInput(
                "brute-force sums are limited to m <= 3".into(),
            ));
        }
        let h = m as u32 * n;
        let lead = self.family.coefficients(h, mean(xs), order)?;
        let weights: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| self.family.coefficients(n, x, order))
            .collect::<Result<_>>()?;
        let mut nodes = Nodes::new(self.functional, self.f, h);
        let mut value = 0.0;
        let mut magnitude = 0.0;
        for (k, a) in lead.iter().enumerate() {
            let node = nodes.get(k)?;
            value += a * node;
            magnitude += a * node.abs();
        }
        let mut cross_mass = 0.0;
        let mut failure = None;
        for_each_tuple(m, order, &mut |idx| {
            if failure.is_some() {
                return;
            }
            let node = match nodes.get(idx.iter().sum()) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            };
            let cross: f64 = idx.iter().zip(&weights).map(|(&i, w)| w[i]).product();
            cross_mass += cross;
            value -= cross * node;
            magnitude += cross * node.abs();
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let tail = (1.0 - lead.iter().sum::<f64>()).max(0.0) + (1.0 - cross_mass).max(0.0);
        let tail_bound = if tail > 0.0 {
            tail * nodes.max_abs(2 * order)?
        } else {
            0.0
        };
        Ok(FunctionalValue {
            value,
            truncation_order: order,
            tail_bound,
            method: Method::BruteForce,
            magnitude,
        })
    }
}

/// Outcome of the `C_m = m * jensen_gap + m * B_m` identity check.
#[derive(Clone, Copy, Debug)]
pub struct DecompositionReport {
    pub cm: FunctionalValue,
    pub jensen: FunctionalValue,
    pub bm: FunctionalValue,
    pub residual: f64,
    pub tolerance: f64,
}

impl DecompositionReport {
    pub fn passed(&self) -> bool {
        self.residual.abs() <= self.tolerance
    }
}

/// Divides the polynomial `sum e_k z^k` by `(z - 1)^2` from the top:
/// returns the quotient `r` (length `N - 1`), `E(1)` and `E'(1)`.
fn divide_from_top(e: &[f64]) -> (Vec<f64>, f64, f64) {
    let order = e.len() - 1;
    let mut q = vec![0.0; order];
    let mut acc = 0.0;
    for j in (0..order).rev() {
        acc += e[j + 1];
        q[j] = acc;
    }
    let e_at_1 = acc + e[0];
    let mut r = vec![0.0; order.saturating_sub(1)];
    acc = 0.0;
    for j in (0..r.len()).rev() {
        acc += q[j + 1];
        r[j] = acc;
    }
    let de_at_1 = acc + q.first().copied().unwrap_or(0.0);
    (r, e_at_1, de_at_1)
}

fn with_mean(xs: &[f64]) -> Vec<f64> {
    let mut pts = xs.to_vec();
    pts.push(mean(xs));
    pts
}

/// Visits every `m`-tuple of nonnegative indices with sum `<= order`.
fn for_each_tuple(m: usize, order: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(idx: &mut Vec<usize>, m: usize, left: usize, visit: &mut dyn FnMut(&[usize])) {
        if idx.len() == m {
            visit(idx);
            return;
        }
        for i in 0..=left {
            idx.push(i);
            rec(idx, m, left - i, visit);
            idx.pop();
        }
    }
    rec(&mut Vec::with_capacity(m), m, order, visit);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval<'a>(fam: &'a OperatorFamily, f: &'a TestFunction) -> Evaluator<'a> {
        static DIRAC: FunctionalFamily = FunctionalFamily::Dirac;
        Evaluator::new(fam, &DIRAC, f)
    }

    #[test]
    fn bernstein_operator_on_e2() {
        let e2 = TestFunction::monomial(2);
        let v = eval(&OperatorFamily::Bernstein, &e2)
            .operator_value(2, 0.5)
            .unwrap();
        assert_eq!(v.value, 0.375);
        assert_eq!(v.tail_bound, 0.0);
        assert_eq!(v.truncation_order, 2);
    }

    #[test]
    fn baskakov_operator_on_e2() {
        let e2 = TestFunction::monomial(2);
        let fam = OperatorFamily::Baskakov;
        let v = eval(&fam, &e2)
            .with_truncation(Truncation::Fixed(60))
            .operator_value(1, 1.0)
            .unwrap();
        assert!((v.value - 3.0).abs() < 1e-8);
        let v = eval(&fam, &e2).operator_value(1, 1.0).unwrap();
        assert!((v.value - 3.0).abs() < 1e-8);
    }

    #[test]
    fn operator_on_constant_is_retained_mass() {
        let e0 = TestFunction::monomial(0);
        let fam = OperatorFamily::Szasz;
        let v = eval(&fam, &e0)
            .with_truncation(Truncation::Fixed(5))
            .operator_value(2, 1.5)
            .unwrap();
        let tail = fam.tail_mass(2, 1.5, 5).unwrap();
        assert!((v.value - (1.0 - tail)).abs() < 1e-15);
    }

    #[test]
    fn rasa_golden_and_degenerate() {
        let e2 = TestFunction::monomial(2);
        let ev = eval(&OperatorFamily::Bernstein, &e2);
        assert_eq!(ev.rasa_functional(1, 0.0, 1.0).unwrap().value, 0.5);
        let sin = TestFunction::from_name("exp").unwrap();
        assert_eq!(
            eval(&OperatorFamily::Bernstein, &sin)
                .rasa_functional(3, 0.3, 0.3)
                .unwrap()
                .value,
            0.0
        );
        let e1 = TestFunction::monomial(1);
        let v = eval(&OperatorFamily::Bernstein, &e1)
            .rasa_functional(3, 0.2, 0.9)
            .unwrap();
        assert!(v.value.abs() < 1e-12);
    }

    #[test]
    fn cm_bm_jensen_on_bernstein_endpoints() {
        let e2 = TestFunction::monomial(2);
        let ev = eval(&OperatorFamily::Bernstein, &e2);
        let xs = [0.0, 1.0];
        assert_eq!(ev.cm_value(1, &xs).unwrap().value, 0.5);
        assert_eq!(ev.bm_value(1, &xs).unwrap().value, 0.125);
        assert_eq!(ev.bm_value_via_representation(1, &xs).unwrap().value, 0.125);
        assert_eq!(ev.jensen_gap(1, &xs).unwrap().value, 0.125);
        let d = ev.decomposition_check(1, &xs).unwrap();
        assert!(d.passed());
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn baskakov_bm_is_negative() {
        let e2 = TestFunction::monomial(2);
        let fam = OperatorFamily::Baskakov;
        let ev = eval(&fam, &e2).with_truncation(Truncation::Fixed(64));
        let v = ev.bm_value(1, &[0.0, 1.0]).unwrap();
        assert!((v.value + 0.125).abs() < 1e-8, "{}", v.value);
        let r = ev.bm_value_via_representation(1, &[0.0, 1.0]).unwrap();
        assert!((r.value + 0.125).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn schurer_trips_the_guard() {
        let e2 = TestFunction::monomial(2);
        let fam = OperatorFamily::SzaszSchurer { p: 1 };
        match eval(&fam, &e2).bm_value(1, &[0.0, 1.0]) {
            Err(Error::MomentGuard { e1, power_form, .. }) => {
                assert!(!power_form);
                // -(m-1) p mean / (mn) = -0.25
                assert!((e1 - 0.25).abs() < 1e-9);
            }
            other => panic!("expected guard failure, got {other:?}"),
        }
    }

    #[test]
    fn exponential_growth_on_baskakov_diverges() {
        let exp = TestFunction::from_name("exp").unwrap();
        let fam = OperatorFamily::Baskakov;
        assert!(matches!(
            eval(&fam, &exp).bm_value(1, &[0.5, 4.0]),
            Err(Error::Divergent { .. })
        ));
        // radius 1 + 1/x = 11 at x = 0.1 comfortably exceeds e^{1/2}
        assert!(eval(&fam, &exp).rasa_functional(1, 0.1, 0.1).is_ok());
    }

    #[test]
    fn brute_force_agrees_with_convolution() {
        let f = TestFunction::from_name("abs:c=0.5").unwrap();
        for fam in [OperatorFamily::Bernstein, OperatorFamily::Baskakov] {
            let ev = eval(&fam, &f).with_truncation(Truncation::Fixed(12));
            let a = ev.rasa_functional(2, 0.2, 0.7).unwrap();
            let b = ev.rasa_brute_force(2, 0.2, 0.7, 12).unwrap();
            assert!((a.value - b.value).abs() < 1e-13);
            let xs = [0.1, 0.5, 0.8];
            let a = ev.cm_value(2, &xs).unwrap();
            let b = ev.cm_brute_force(2, &xs, 12).unwrap();
            assert!((a.value - b.value).abs() < 1e-13);
            let a = ev.bm_value(2, &xs).unwrap();
            let b = ev.bm_brute_force(2, &xs, 12).unwrap();
            assert!((a.value - b.value).abs() < 1e-13);
        }
    }

    #[test]
    fn top_down_division_reconstructs() {
        let e = [0.25, -0.5, 0.25];
        assert_eq!(divide_from_top(&e), (vec![0.25], 0.0, 0.0));
        // 1 + 2z + 3z^2 + 4z^3 = (z-1)^2 (4z + 11) + 10 + 20 (z - 1)
        let (r, e1, de1) = divide_from_top(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((r, e1, de1), (vec![11.0, 4.0], 10.0, 20.0));
    }

    #[test]
    fn tuple_enumeration_counts() {
        let mut count = 0;
        for_each_tuple(3, 4, &mut |_| count += 1);
        // C(4 + 3, 3)
        assert_eq!(count, 35);
    }
}
