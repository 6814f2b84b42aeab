//! Operator families given by their weights `a_{n,k}(x)` and generating
//! series `g_n(x, z) = sum_k a_{n,k}(x) z^k`.
//!
//! Every built-in family is of Mastroianni type: `g_n(x, z) = phi_n(x(1 - z))`
//! for a sequence `phi_n` with `phi_n(0) = 1` and alternating derivatives.
//! The closed-form weights are computed with multiplicative recurrences so
//! that orders in the hundreds neither overflow nor underflow prematurely.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::series::TruncatedSeries;

/// Hard cap on automatically chosen truncation orders.
pub const MAX_ORDER: usize = 256;

/// Default bound on the neglected probability mass.
pub const DEFAULT_TAIL_TARGET: f64 = 1e-10;

/// Upper end of the sampling range used for unbounded domains.
pub const UNBOUNDED_SAMPLE_CAP: f64 = 4.0;

/// Derivatives `phi_n^{(k)}(x)` of a Mastroianni sequence.
pub trait PhiOracle: Send + Sync {
    fn derivative(&self, n: u32, k: usize, x: f64) -> f64;
}

impl<F> PhiOracle for F
where
    F: Fn(u32, usize, f64) -> f64 + Send + Sync,
{
    fn derivative(&self, n: u32, k: usize, x: f64) -> f64 {
        self(n, k, x)
    }
}

/// `phi_n(x) = (1 - x)^n`.
#[derive(Clone, Copy, Debug)]
pub struct BernsteinPhi;

impl PhiOracle for BernsteinPhi {
    fn derivative(&self, n: u32, k: usize, x: f64) -> f64 {
        let n_us = n as usize;
        if k > n_us {
            return 0.0;
        }
        let falling: f64 = (0..k).map(|j| (n_us - j) as f64).product();
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * falling * (1.0 - x).powi((n_us - k) as i32)
    }
}

/// `phi_n(x) = exp(-(n + shift) x)`.
#[derive(Clone, Copy, Debug)]
pub struct ExpPhi {
    pub shift: u32,
}

impl PhiOracle for ExpPhi {
    fn derivative(&self, n: u32, k: usize, x: f64) -> f64 {
        let rate = (n + self.shift) as f64;
        (-rate).powi(k as i32) * (-rate * x).exp()
    }
}

/// `phi_n(x) = (1 + x)^{-n}`.
#[derive(Clone, Copy, Debug)]
pub struct BaskakovPhi;

impl PhiOracle for BaskakovPhi {
    fn derivative(&self, n: u32, k: usize, x: f64) -> f64 {
        let rising: f64 = (0..k).map(|j| (n as usize + j) as f64).product();
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * rising * (1.0 + x).powi(-(n as i32) - k as i32)
    }
}

/// A user-supplied Mastroianni family.
#[derive(Clone)]
pub struct MastroianniFamily {
    pub name: String,
    pub phi: Arc<dyn PhiOracle>,
    /// Whether `g_n = g_1^n` holds with an `n`-independent base.
    pub power_form: bool,
}

impl fmt::Debug for MastroianniFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MastroianniFamily")
            .field("name", &self.name)
            .field("power_form", &self.power_form)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum OperatorFamily {
    Bernstein,
    Szasz,
    Baskakov,
    SzaszSchurer { p: u32 },
    Mastroianni(MastroianniFamily),
}

/// The interval `I` on which the weights are defined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: Option<f64>,
}

impl Domain {
    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && x >= self.lo && self.hi.is_none_or(|hi| x <= hi)
    }

    /// Sampling interval: the domain itself, or `[lo, 4]` when unbounded.
    pub fn sample_range(&self) -> (f64, f64) {
        (self.lo, self.hi.unwrap_or(UNBOUNDED_SAMPLE_CAP))
    }
}

impl OperatorFamily {
    pub fn mastroianni(name: impl Into<String>, phi: Arc<dyn PhiOracle>, power_form: bool) -> Self {
        OperatorFamily::Mastroianni(MastroianniFamily {
            name: name.into(),
            phi,
            power_form,
        })
    }

    /// The four families with closed-form weights.
    pub fn builtins() -> Vec<OperatorFamily> {
        vec![
            OperatorFamily::Bernstein,
            OperatorFamily::Szasz,
            OperatorFamily::Baskakov,
            OperatorFamily::SzaszSchurer { p: 2 },
        ]
    }

    pub fn name(&self) -> String {
        match self {
            OperatorFamily::Bernstein => "bernstein".into(),
            OperatorFamily::Szasz => "szasz".into(),
            OperatorFamily::Baskakov => "baskakov".into(),
            OperatorFamily::SzaszSchurer { p } => format!("schurer:p={p}"),
            OperatorFamily::Mastroianni(m) => m.name.clone(),
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            OperatorFamily::Bernstein => Domain {
                lo: 0.0,
                hi: Some(1.0),
            },
            _ => Domain { lo: 0.0, hi: None },
        }
    }

    pub fn finite_support(&self) -> bool {
        matches!(self, OperatorFamily::Bernstein)
    }

    pub fn power_form(&self) -> bool {
        match self {
            OperatorFamily::Bernstein | OperatorFamily::Szasz | OperatorFamily::Baskakov => true,
            OperatorFamily::SzaszSchurer { .. } => false,
            OperatorFamily::Mastroianni(m) => m.power_form,
        }
    }

    /// Largest index with a nonzero weight, when the support is finite.
    pub fn degree(&self, n: u32) -> Option<usize> {
        self.finite_support().then_some(n as usize)
    }

    pub fn phi_oracle(&self) -> Arc<dyn PhiOracle> {
        match self {
            OperatorFamily::Bernstein => Arc::new(BernsteinPhi),
            OperatorFamily::Szasz => Arc::new(ExpPhi { shift: 0 }),
            OperatorFamily::Baskakov => Arc::new(BaskakovPhi),
            OperatorFamily::SzaszSchurer { p } => Arc::new(ExpPhi { shift: *p }),
            OperatorFamily::Mastroianni(m) => m.phi.clone(),
        }
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if self.domain().contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                family: self.name(),
                x,
            })
        }
    }

    /// Weights `a_{n,0}(x), ..., a_{n,N}(x)`.
    pub fn coefficients(&self, n: u32, x: f64, order: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidInput("operator index n must be positive".into()));
        }
        self.check_domain(x)?;
        let coeffs = match self {
            OperatorFamily::Bernstein => bernstein_weights(n, x, order),
            OperatorFamily::Szasz => poisson_weights(n as f64 * x, order),
            OperatorFamily::SzaszSchurer { p } => poisson_weights((n + p) as f64 * x, order),
            OperatorFamily::Baskakov => baskakov_weights(n, x, order),
            OperatorFamily::Mastroianni(m) => mastroianni_weights(m.phi.as_ref(), n, x, order)?,
        };
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("{} weight", self.name()),
                k,
            });
        }
        Ok(coeffs)
    }

    pub fn generating_series(&self, n: u32, x: f64, order: usize) -> Result<TruncatedSeries> {
        TruncatedSeries::new(self.coefficients(n, x, order)?)
    }

    /// `1 - sum_{k <= N} a_{n,k}(x)`.
    pub fn tail_mass(&self, n: u32, x: f64, order: usize) -> Result<f64> {
        if self.degree(n).is_some_and(|d| order >= d) {
            self.check_domain(x)?;
            return Ok(0.0);
        }
        let coeffs = self.coefficients(n, x, order)?;
        Ok(1.0 - coeffs.iter().sum::<f64>())
    }

    /// `sum_{k <= N} k a_{n,k}(x)`.
    pub fn first_moment(&self, n: u32, x: f64, order: usize) -> Result<f64> {
        let coeffs = self.coefficients(n, x, order)?;
        Ok(coeffs.iter().enumerate().map(|(k, a)| k as f64 * a).sum())
    }

    /// Smallest order whose tail mass is below `target`, capped at
    /// [`MAX_ORDER`]. Returns the order and the tail it achieves.
    pub fn default_order(&self, n: u32, x: f64, target: f64) -> Result<(usize, f64)> {
        if let Some(d) = self.degree(n) {
            self.check_domain(x)?;
            return Ok((d, 0.0));
        }
        let coeffs = self.coefficients(n, x, MAX_ORDER)?;
        Ok(first_order_below(&coeffs, target))
    }

    /// Radius of convergence of `g_n(x, .)` when it is finite.
    pub fn radius(&self, x: f64) -> Option<f64> {
        match self {
            OperatorFamily::Baskakov if x > 0.0 => Some((1.0 + x) / x),
            _ => None,
        }
    }

    /// Closed-form `g_n(x, z)` at a complex point. Custom families have no
    /// closed form and return `None`.
    pub fn eval_generating(&self, n: u32, x: f64, z: Complex64) -> Option<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        match self {
            OperatorFamily::Bernstein => Some((one - x + z * x).powu(n)),
            OperatorFamily::Szasz => Some((-(n as f64) * x * (one - z)).exp()),
            OperatorFamily::SzaszSchurer { p } => Some((-((n + p) as f64) * x * (one - z)).exp()),
            OperatorFamily::Baskakov => Some((one + x - z * x).powi(-(n as i32))),
            OperatorFamily::Mastroianni(_) => None,
        }
    }
}

/// Smallest `N` with `1 - sum_{k<=N} c_k < target`, or the last index.
pub(crate) fn first_order_below(coeffs: &[f64], target: f64) -> (usize, f64) {
    let mut acc = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        acc += c;
        let tail = 1.0 - acc;
        if tail < target {
            return (k, tail);
        }
    }
    (coeffs.len() - 1, 1.0 - acc)
}

fn bernstein_weights(n: u32, x: f64, order: usize) -> Vec<f64> {
    let n = n as usize;
    let mut out = vec![0.0; order + 1];
    let mut binom = 1.0;
    for (k, slot) in out.iter_mut().enumerate().take(n.min(order) + 1) {
        if k > 0 {
            binom = binom * (n + 1 - k) as f64 / k as f64;
        }
        *slot = binom * x.powi(k as i32) * (1.0 - x).powi((n - k) as i32);
    }
    out
}

fn poisson_weights(lambda: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    let mut a = (-lambda).exp();
    out.push(a);
    for k in 0..order {
        a *= lambda / (k + 1) as f64;
        out.push(a);
    }
    out
}

fn baskakov_weights(n: u32, x: f64, order: usize) -> Vec<f64> {
    let ratio = x / (1.0 + x);
    let mut out = Vec::with_capacity(order + 1);
    let mut a = (1.0 + x).powi(-(n as i32));
    out.push(a);
    for k in 0..order {
        a *= (n as usize + k) as f64 / (k + 1) as f64 * ratio;
        out.push(a);
    }
    out
}

/// `a_{n,k}(x) = (-1)^k x^k phi_n^{(k)}(x) / k!`.
pub fn mastroianni_weights(phi: &dyn PhiOracle, n: u32, x: f64, order: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(order + 1);
    let mut scaled_power = 1.0; // x^k / k!
    for k in 0..=order {
        if k > 0 {
            scaled_power *= x / k as f64;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let d = phi.derivative(n, k, x);
        let a = if scaled_power == 0.0 && d.is_finite() {
            0.0
        } else {
            sign * scaled_power * d
        };
        if !a.is_finite() {
            return Err(Error::NonFinite {
                what: "Mastroianni weight".into(),
                k,
            });
        }
        out.push(a);
    }
    Ok(out)
}

/// One failed Mastroianni axiom.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiViolation {
    /// `phi_n(0) != 1`.
    Normalization { value: f64 },
    /// `(-1)^k phi_n^{(k)}(x) < 0`.
    Alternating { k: usize, x: f64, value: f64 },
}

#[derive(Clone, Debug)]
pub struct PhiReport {
    pub n: u32,
    pub max_k: usize,
    pub samples: usize,
    pub violations: Vec<PhiViolation>,
}

impl PhiReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `phi_n(0) = 1` and `(-1)^k phi_n^{(k)}(x) >= 0` for `k <= max_k`
/// at each sample.
pub fn validate_phi(oracle: &dyn PhiOracle, n: u32, max_k: usize, sample_xs: &[f64]) -> PhiReport {
    const TOL: f64 = 1e-12;
    let mut violations = Vec::new();
    let at_zero = oracle.derivative(n, 0, 0.0);
    if !((at_zero - 1.0).abs() <= TOL) {
        violations.push(PhiViolation::Normalization { value: at_zero });
    }
    for &x in sample_xs {
        for k in 0..=max_k {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let value = sign * oracle.derivative(n, k, x);
            if !(value >= -TOL) {
                violations.push(PhiViolation::Alternating { k, x, value });
            }
        }
    }
    PhiReport {
        n,
        max_k,
        samples: sample_xs.len(),
        violations,
    }
}

impl fmt::Display for OperatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for OperatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "bernstein" => return Ok(OperatorFamily::Bernstein),
            "szasz" => return Ok(OperatorFamily::Szasz),
            "baskakov" => return Ok(OperatorFamily::Baskakov),
            "schurer" => return Ok(OperatorFamily::SzaszSchurer { p: 0 }),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("schurer:p=") {
            let p = rest.parse().map_err(|_| Error::UnknownName {
                kind: "operator family",
                name: s.to_string(),
            })?;
            return Ok(OperatorFamily::SzaszSchurer { p });
        }
        Err(Error::UnknownName {
            kind: "operator family",
            name: s.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bernstein_symmetric_binomial() {
        let c = OperatorFamily::Bernstein.coefficients(2, 0.5, 2).unwrap();
        assert_eq!(c, vec![0.25, 0.5, 0.25]);
        let c = OperatorFamily::Bernstein.coefficients(2, 0.5, 4).unwrap();
        assert_eq!(&c[3..], &[0.0, 0.0]);
    }

    #[test]
    fn baskakov_unit_point_is_geometric() {
        let c = OperatorFamily::Baskakov.coefficients(1, 1.0, 30).unwrap();
        for (k, a) in c.iter().enumerate() {
            // C(k, k) * 1 / 2^(k+1)
            let direct = 1.0 / 2f64.powi(k as i32 + 1);
            assert!(close(*a, direct, 1e-16), "k = {k}");
        }
    }

    #[test]
    fn szasz_unit_point_is_poisson() {
        let c = OperatorFamily::Szasz.coefficients(1, 1.0, 20).unwrap();
        let mut fact = 1.0;
        for (k, a) in c.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!(close(*a, (-1f64).exp() / fact, 1e-16), "k = {k}");
        }
    }

    #[test]
    fn schurer_uses_shifted_rate() {
        let c = OperatorFamily::SzaszSchurer { p: 1 }
            .coefficients(2, 1.0, 5)
            .unwrap();
        let d = OperatorFamily::Szasz.coefficients(3, 1.0, 5).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn generating_series_examples() {
        let g = OperatorFamily::Bernstein.generating_series(1, 0.3, 1).unwrap();
        assert!(close(g.coeff(0), 0.7, 1e-16) && close(g.coeff(1), 0.3, 1e-16));
        let g = OperatorFamily::Szasz.generating_series(2, 0.0, 6).unwrap();
        assert_eq!(g.coeffs(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let g = OperatorFamily::Baskakov.generating_series(1, 1.0, 2).unwrap();
        assert_eq!(g.coeffs(), &[0.5, 0.25, 0.125]);
    }

    #[test]
    fn tail_mass_examples() {
        assert_eq!(OperatorFamily::Bernstein.tail_mass(3, 0.7, 3).unwrap(), 0.0);
        let t = OperatorFamily::Szasz.tail_mass(1, 1.0, 0).unwrap();
        assert!(close(t, 1.0 - (-1f64).exp(), 1e-15));
        assert!(close(t, 0.6321, 1e-4));
        for fam in OperatorFamily::builtins() {
            assert_eq!(fam.tail_mass(3, 0.0, 0).unwrap(), 0.0, "{fam}");
        }
    }

    #[test]
    fn first_moment_examples() {
        let m = OperatorFamily::Bernstein.first_moment(4, 0.25, 4).unwrap();
        assert!(close(m, 1.0, 1e-15));
        let m = OperatorFamily::Szasz.first_moment(2, 1.5, 80).unwrap();
        assert!(close(m, 3.0, 1e-10));
        let m = OperatorFamily::SzaszSchurer { p: 1 }
            .first_moment(2, 1.0, 80)
            .unwrap();
        assert!(close(m, 3.0, 1e-10));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            OperatorFamily::Bernstein.coefficients(2, 1.5, 3),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(OperatorFamily::Baskakov.coefficients(2, -0.1, 3).is_err());
        assert!(OperatorFamily::Szasz.coefficients(2, f64::NAN, 3).is_err());
        assert!(OperatorFamily::Szasz.coefficients(0, 1.0, 3).is_err());
    }

    #[test]
    fn default_order_meets_tail_target() {
        let (n, tail) = OperatorFamily::Baskakov.default_order(2, 1.0, 1e-10).unwrap();
        assert!(tail < 1e-10 && n < MAX_ORDER);
        assert!(OperatorFamily::Baskakov.tail_mass(2, 1.0, n - 1).unwrap() >= 1e-10);
        assert_eq!(
            OperatorFamily::Bernstein.default_order(5, 0.4, 1e-10).unwrap(),
            (5, 0.0)
        );
    }

    #[test]
    fn phi_validation_examples() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        assert!(validate_phi(&BernsteinPhi, 4, 6, &xs).passed());
        assert!(validate_phi(&ExpPhi { shift: 0 }, 4, 6, &xs).passed());
        let bad = |_n: u32, k: usize, x: f64| match k {
            0 => 1.0 + x,
            1 => 1.0,
            _ => 0.0,
        };
        let report = validate_phi(&bad, 1, 3, &xs);
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .all(|v| matches!(v, PhiViolation::Alternating { k: 1, .. })));
    }

    #[test]
    fn phi_normalization_violation() {
        let shifted = |_n: u32, _k: usize, _x: f64| 2.0;
        let report = validate_phi(&shifted, 1, 0, &[]);
        assert_eq!(
            report.violations,
            vec![PhiViolation::Normalization { value: 2.0 }]
        );
    }

    #[test]
    fn custom_oracle_nonfinite_is_an_error() {
        let fam = OperatorFamily::mastroianni(
            "blowup",
            Arc::new(
                |_: u32, k: usize, _: f64| {
                    if k == 3 {
                        f64::INFINITY
                    } else {
                        1.0
                    }
                },
            ),
            false,
        );
        assert!(matches!(
            fam.coefficients(1, 0.5, 5),
            Err(Error::NonFinite { k: 3, .. })
        ));
    }

    #[test]
    fn parse_names() {
        assert!(matches!("bernstein".parse(), Ok(OperatorFamily::Bernstein)));
        assert!(matches!(
            "schurer:p=2".parse(),
            Ok(OperatorFamily::SzaszSchurer { p: 2 })
        ));
        assert!("schurer:p=x".parse::<OperatorFamily>().is_err());
        assert!("meyer".parse::<OperatorFamily>().is_err());
        assert_eq!(OperatorFamily::SzaszSchurer { p: 3 }.to_string(), "schurer:p=3");
    }
}
