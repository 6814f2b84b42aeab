//! Coefficient sign conditions.
//!
//! * `beta`: coefficients of `(g_n(x,z) - g_n(y,z)) / (z - 1)`, computed by
//!   series division and, independently, through the `phi_n` derivatives.
//! * `E_m(x, z) = g_{mn}(mean, z) - prod_nu g_n(x_nu, z)` and its quotients
//!   by `(z - 1)` and `(z - 1)^2`. The coefficients of `E_m / (z - 1)^2`
//!   are, up to the factor `2/(mn)`, the values `B_m(|. - (k+1)/(mn)|)`, so
//!   their common sign is the sign of `B_m` on functions with nonnegative
//!   divided differences.
//! * The gap `(sum a)^m - m^m prod a` and its sum-of-squares form.

use std::fmt;

use crate::error::{Error, Result};
use crate::family::{first_order_below, OperatorFamily, DEFAULT_TAIL_TARGET, MAX_ORDER};
use crate::series::TruncatedSeries;

/// Sign tolerance for finite-support families, where coefficients are exact
/// up to roundoff.
pub const EXACT_SIGN_TOL: f64 = 1e-12;
/// Sign tolerance when truncation tails are in play.
pub const TRUNCATED_SIGN_TOL: f64 = 1e-9;

pub fn default_sign_tolerance(family: &OperatorFamily) -> f64 {
    if family.finite_support() {
        EXACT_SIGN_TOL
    } else {
        TRUNCATED_SIGN_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignVerdict {
    AllNonNegative,
    AllNonPositive,
    AllZero,
    Mixed,
}

impl fmt::Display for SignVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SignVerdict::AllNonNegative => "AllNonNegative",
            SignVerdict::AllNonPositive => "AllNonPositive",
            SignVerdict::AllZero => "AllZero",
            SignVerdict::Mixed => "Mixed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignClassification {
    pub verdict: SignVerdict,
    /// First index above `tol`.
    pub witness_positive: Option<usize>,
    /// First index below `-tol`.
    pub witness_negative: Option<usize>,
    pub tolerance: f64,
}

/// Classifies a sequence, treating entries in `[-tol, tol]` as sign-neutral.
pub fn classify_signs(seq: &[f64], tol: f64) -> SignClassification {
    let witness_positive = seq.iter().position(|&v| v > tol);
    let witness_negative = seq.iter().position(|&v| v < -tol);
    let verdict = match (witness_positive, witness_negative) {
        (Some(_), Some(_)) => SignVerdict::Mixed,
        (Some(_), None) => SignVerdict::AllNonNegative,
        (None, Some(_)) => SignVerdict::AllNonPositive,
        (None, None) => SignVerdict::AllZero,
    };
    SignClassification {
        verdict,
        witness_positive,
        witness_negative,
        tolerance: tol,
    }
}

/// A series quotient together with its divisibility defect.
#[derive(Clone, Debug)]
pub struct Quotient {
    pub series: TruncatedSeries,
    pub residual: f64,
}

fn order_for(family: &OperatorFamily, n: u32, xs: &[f64], order: Option<usize>) -> Result<usize> {
    if let Some(order) = order {
        return Ok(order);
    }
    let mut best = 0;
    for &x in xs {
        best = best.max(family.default_order(n, x, DEFAULT_TAIL_TARGET)?.0);
    }
    Ok(best.min(MAX_ORDER))
}

/// `(g_n(x,.) - g_n(y,.)) / (z - 1)`; with `order = None` the order is the
/// default one for both points. An order-`N` input gives `N` coefficients.
pub fn beta_series(
    family: &OperatorFamily,
    n: u32,
    x: f64,
    y: f64,
    order: Option<usize>,
) -> Result<Quotient> {
    let order = order_for(family, n, &[x, y], order)?.max(1);
    let gx = family.generating_series(n, x, order)?;
    let gy = family.generating_series(n, y, order)?;
    let diff = TruncatedSeries::linear_combine(1.0, &gx, -1.0, &gy);
    let (series, residual) = diff.divide_by_z_minus_1(1);
    log::debug!(
        "beta {} n={n} x={x} y={y}: order {order}, divisibility residual {residual:e}",
        family.name()
    );
    Ok(Quotient { series, residual })
}

/// `beta_k = h_{n,k}(x) - h_{n,k}(y)` with
/// `h_{n,k}(t) = -sum_{p<=k} (-1)^p t^p phi_n^{(p)}(t) / p!`, for
/// `k = 0..order-1` (matching [`beta_series`] at the same order).
pub fn beta_closed_form(
    family: &OperatorFamily,
    n: u32,
    x: f64,
    y: f64,
    order: Option<usize>,
) -> Result<Vec<f64>> {
    let order = order_for(family, n, &[x, y], order)?.max(1);
    family.check_domain(x)?;
    family.check_domain(y)?;
    let phi = family.phi_oracle();
    let hx = h_partial_sums(phi.as_ref(), n, x, order - 1)?;
    let hy = h_partial_sums(phi.as_ref(), n, y, order - 1)?;
    Ok(hx.iter().zip(&hy).map(|(a, b)| a - b).collect())
}

fn h_partial_sums(phi: &dyn crate::family::PhiOracle, n: u32, t: f64, max_k: usize) -> Result<Vec<f64>> {
    let weights = crate::family::mastroianni_weights(phi, n, t, max_k)?;
    let mut acc = 0.0;
    Ok(weights
        .iter()
        .map(|w| {
            acc -= w;
            acc
        })
        .collect())
}

/// Coefficients of `[(g_n(x,z) - g_n(y,z)) / (z - 1)]^2`.
pub fn squared_quotient_coefficients(
    family: &OperatorFamily,
    n: u32,
    x: f64,
    y: f64,
    order: Option<usize>,
) -> Result<Vec<f64>> {
    let q = beta_series(family, n, x, y, order)?.series;
    Ok(q.multiply(&q).into_coeffs())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn check_points(family: &OperatorFamily, xs: &[f64]) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two points, got {}",
            xs.len()
        )));
    }
    xs.iter().try_for_each(|&x| family.check_domain(x))
}

/// `prod_nu g_n(x_nu, .)` truncated at `order`.
pub(crate) fn product_series(
    family: &OperatorFamily,
    n: u32,
    xs: &[f64],
    order: usize,
) -> Result<TruncatedSeries> {
    let mut acc = TruncatedSeries::one(order);
    for &x in xs {
        acc = acc.multiply(&family.generating_series(n, x, order)?);
    }
    Ok(acc)
}

/// Order covering the full support (finite families) or meeting the default
/// tail target for both terms of `E_m`.
pub(crate) fn em_default_order(family: &OperatorFamily, n: u32, xs: &[f64]) -> Result<usize> {
    let m = xs.len() as u32;
    if let Some(d) = family.degree(n * m) {
        return Ok(d);
    }
    let lead = family.coefficients(n * m, mean(xs), MAX_ORDER)?;
    let prod = product_series(family, n, xs, MAX_ORDER)?;
    let a = first_order_below(&lead, DEFAULT_TAIL_TARGET).0;
    let b = first_order_below(prod.coeffs(), DEFAULT_TAIL_TARGET).0;
    Ok(a.max(b))
}

/// `E_m(x, z) = g_{mn}(mean, z) - prod_nu g_n(x_nu, z)`.
pub fn em_series(
    family: &OperatorFamily,
    n: u32,
    xs: &[f64],
    order: Option<usize>,
) -> Result<TruncatedSeries> {
    if !family.power_form() {
        return Err(Error::NotPowerForm {
            family: family.name(),
        });
    }
    check_points(family, xs)?;
    let order = match order {
        Some(o) => o,
        None => em_default_order(family, n, xs)?,
    };
    let m = xs.len() as u32;
    let lead = family.generating_series(n * m, mean(xs), order)?;
    let prod = product_series(family, n, xs, order)?;
    Ok(TruncatedSeries::linear_combine(1.0, &lead, -1.0, &prod))
}

#[derive(Clone, Debug)]
pub struct EmQuotient {
    pub series: TruncatedSeries,
    pub classification: SignClassification,
    pub residual: f64,
    /// Order of the `E_m` series that was divided.
    pub em_order: usize,
}

/// `E_m / (z - 1)^power` and its sign classification at `tol`.
pub fn em_quotient(
    family: &OperatorFamily,
    n: u32,
    xs: &[f64],
    order: Option<usize>,
    power: u32,
    tol: f64,
) -> Result<EmQuotient> {
    if !(1..=2).contains(&power) {
        return Err(Error::InvalidInput(format!(
            "quotient power must be 1 or 2, got {power}"
        )));
    }
    let em = em_series(family, n, xs, order)?;
    let em_order = em.order();
    let (series, residual) = em.divide_by_z_minus_1(power);
    let classification = classify_signs(series.coeffs(), tol);
    Ok(EmQuotient {
        series,
        classification,
        residual,
        em_order,
    })
}

/// `(sum a)^m - m^m prod a` for `m = a.len() >= 2` nonnegative entries.
pub fn gusic_gap(a: &[f64]) -> Result<f64> {
    check_gusic_input(a)?;
    let m = a.len() as i32;
    let sum: f64 = a.iter().sum();
    let prod: f64 = a.iter().product();
    Ok(sum.powi(m) - (m as f64).powi(m) * prod)
}

fn check_gusic_input(a: &[f64]) -> Result<()> {
    if a.len() < 2 {
        return Err(Error::InvalidInput("the gap needs m >= 2 entries".into()));
    }
    if let Some(v) = a.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "entries must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

/// Weights `P_{i,j}(a)` with `(sum a)^m - m^m prod a = sum_{i<j} (a_i-a_j)^2 P_{i,j}(a)`,
/// listed in lexicographic `(i, j)` order. Only `m = 2` and `m = 3`.
///
/// For `m = 3`, expanding `(a+b+c)^3 - 27abc` as
/// `(a+b+c)(a^2+b^2+c^2-ab-bc-ca) + 3[a(b-c)^2 + b(a-c)^2 + c(a-b)^2]`
/// gives `P_{i,j} = (a_i + a_j)/2 + 7 a_k / 2`, `k` the remaining index.
pub fn gusic_weights(a: &[f64]) -> Result<Vec<((usize, usize), f64)>> {
    check_gusic_input(a)?;
    match a.len() {
        2 => Ok(vec![((0, 1), 1.0)]),
        3 => {
            let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
            Ok(pairs
                .iter()
                .map(|&(i, j, k)| ((i, j), 0.5 * (a[i] + a[j]) + 3.5 * a[k]))
                .collect())
        }
        m => Err(Error::InvalidInput(format!(
            "sum-of-squares weights are only materialized for m = 2, 3 (got m = {m})"
        ))),
    }
}

/// `sum_{i<j} (a_i - a_j)^2 P_{i,j}(a)` for `m = 2, 3`.
pub fn gusic_sum_of_squares(a: &[f64]) -> Result<f64> {
    Ok(gusic_weights(a)?
        .into_iter()
        .map(|((i, j), p)| (a[i] - a[j]).powi(2) * p)
        .sum())
}
