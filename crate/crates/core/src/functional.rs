//! The functional families `{A_t}` feeding the operators, the registry of
//! test functions, and second divided differences of `t -> A_t(f)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute accuracy of the sliding-average quadrature.
pub const QUADRATURE_TOL: f64 = 1e-11;

/// Growth class of a test function, used to decide whether the operator
/// series of a family with a finite radius of convergence can converge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    Polynomial,
    Exponential,
}

#[derive(Clone)]
pub struct TestFunction {
    name: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    convex: bool,
    /// Points where the function is not smooth.
    breakpoints: Vec<f64>,
    growth: Growth,
    domain_hint: (f64, f64),
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("convex", &self.convex)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new<F>(name: impl Into<String>, convex: bool, eval: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            convex,
            breakpoints: Vec::new(),
            growth: Growth::Polynomial,
            domain_hint: (0.0, f64::INFINITY),
        }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = growth;
        self
    }

    pub fn with_domain_hint(mut self, lo: f64, hi: f64) -> Self {
        self.domain_hint = (lo, hi);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn convex(&self) -> bool {
        self.convex
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn domain_hint(&self) -> (f64, f64) {
        self.domain_hint
    }

    /// Monomial `e_i(x) = x^i`.
    pub fn monomial(i: u32) -> Self {
        Self::new(format!("e{i}"), true, move |x| x.powi(i as i32))
    }

    pub fn abs_shift(c: f64) -> Self {
        Self::new(format!("abs:c={c}"), true, move |x| (x - c).abs()).with_breakpoints(vec![c])
    }

    pub fn hinge(c: f64) -> Self {
        Self::new(format!("hinge:c={c}"), true, move |x| (x - c).max(0.0)).with_breakpoints(vec![c])
    }

    /// Looks a function up by its registry name.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        let unknown = || Error::UnknownName {
            kind: "test function",
            name: name.to_string(),
        };
        let f = match name {
            "e0" => Self::monomial(0),
            "e1" => Self::monomial(1),
            "e2" => Self::monomial(2),
            "e3" => Self::monomial(3),
            "exp" => Self::new("exp", true, f64::exp).with_growth(Growth::Exponential),
            "exp-neg" => Self::new("exp-neg", true, |x: f64| (-x).exp()),
            "sin" => Self::new("sin", false, f64::sin).with_domain_hint(0.0, std::f64::consts::PI),
            "neg-e2" => Self::new("neg-e2", false, |x: f64| -x * x),
            _ => {
                if let Some(c) = name.strip_prefix("abs:c=") {
                    Self::abs_shift(c.parse().map_err(|_| unknown())?)
                } else if let Some(c) = name.strip_prefix("hinge:c=") {
                    Self::hinge(c.parse().map_err(|_| unknown())?)
                } else {
                    return Err(unknown());
                }
            }
        };
        Ok(f)
    }

    /// Every registered function, convex ones first.
    pub fn registry() -> Vec<TestFunction> {
        let mut all = Self::convex_registry();
        all.push(Self::from_name("sin").unwrap());
        all.push(Self::from_name("neg-e2").unwrap());
        all
    }

    pub fn convex_registry() -> Vec<TestFunction> {
        CONVEX_NAMES
            .iter()
            .map(|n| Self::from_name(n).expect("registry names parse"))
            .collect()
    }
}

pub const CONVEX_NAMES: &[&str] = &[
    "e0",
    "e1",
    "e2",
    "e3",
    "exp",
    "exp-neg",
    "abs:c=0.25",
    "abs:c=0.5",
    "abs:c=1",
    "hinge:c=0.5",
];

/// Expands a comma-separated list of registry names; `convex` and `all`
/// stand for the corresponding registries.
pub fn parse_function_list(spec: &str) -> Result<Vec<TestFunction>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "convex" => out.extend(TestFunction::convex_registry()),
            "all" => out.extend(TestFunction::registry()),
            name => out.push(TestFunction::from_name(name)?),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("empty test-function list".into()));
    }
    Ok(out)
}

type CustomApply = dyn Fn(f64, &TestFunction) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub struct CustomFunctional {
    pub name: String,
    pub apply: Arc<CustomApply>,
    pub affine_a: f64,
    pub affine_b: f64,
    /// Absolute error of one evaluation.
    pub eval_error: f64,
}

#[derive(Clone)]
pub enum FunctionalFamily {
    /// `A_t(f) = f(t)`.
    Dirac,
    /// `A_t(f) = (1/h) int_t^{t+h} f`.
    SlidingAverage {
        width: f64,
    },
    Custom(CustomFunctional),
}

impl fmt::Debug for FunctionalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl fmt::Display for FunctionalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FunctionalFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "dirac" {
            return Ok(FunctionalFamily::Dirac);
        }
        if let Some(h) = s.strip_prefix("avg:h=") {
            let width: f64 = h.parse().map_err(|_| Error::UnknownName {
                kind: "functional",
                name: s.to_string(),
            })?;
            return FunctionalFamily::sliding_average(width);
        }
        Err(Error::UnknownName {
            kind: "functional",
            name: s.to_string(),
        })
    }
}

impl FunctionalFamily {
    pub fn sliding_average(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "averaging width must be positive, got {width}"
            )));
        }
        Ok(FunctionalFamily::SlidingAverage { width })
    }

    pub fn name(&self) -> String {
        match self {
            FunctionalFamily::Dirac => "dirac".into(),
            FunctionalFamily::SlidingAverage { width } => format!("avg:h={width}"),
            FunctionalFamily::Custom(c) => c.name.clone(),
        }
    }

    /// `(a, b)` with `A_t(e_1) = a t + b`.
    pub fn affine(&self) -> (f64, f64) {
        match self {
            FunctionalFamily::Dirac => (1.0, 0.0),
            FunctionalFamily::SlidingAverage { width } => (1.0, width / 2.0),
            FunctionalFamily::Custom(c) => (c.affine_a, c.affine_b),
        }
    }

    /// Absolute error attached to one evaluation, before roundoff.
    pub fn eval_error(&self) -> f64 {
        match self {
            FunctionalFamily::Dirac => 0.0,
            FunctionalFamily::SlidingAverage { .. } => QUADRATURE_TOL,
            FunctionalFamily::Custom(c) => c.eval_error,
        }
    }

    pub fn apply(&self, t: f64, f: &TestFunction) -> Result<f64> {
        match self {
            FunctionalFamily::Dirac => Ok(f.eval(t)),
            FunctionalFamily::SlidingAverage { width } => {
                let integral = integrate(f, t, t + width, QUADRATURE_TOL * width)?;
                Ok(integral / width)
            }
            FunctionalFamily::Custom(c) => (c.apply)(t, f),
        }
    }

    /// Largest violations of `A_t(e_0) = 1` and `A_t(e_1) = a t + b` over
    /// the sample points.
    pub fn moment_defects(&self, ts: &[f64]) -> Result<(f64, f64)> {
        let e0 = TestFunction::monomial(0);
        let e1 = TestFunction::monomial(1);
        let (a, b) = self.affine();
        let mut d0 = 0.0_f64;
        let mut d1 = 0.0_f64;
        for &t in ts {
            d0 = d0.max((self.apply(t, &e0)? - 1.0).abs());
            d1 = d1.max((self.apply(t, &e1)? - (a * t + b)).abs());
        }
        Ok((d0, d1))
    }
}

/// `d_k = [k/n, (k+1)/n, (k+2)/n; t -> A_t(f)]` for `k = 0..=max_k`.
pub fn second_divided_differences(
    functional: &FunctionalFamily,
    f: &TestFunction,
    n: u32,
    max_k: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("grid index n must be positive".into()));
    }
    let step = 1.0 / n as f64;
    let g: Vec<f64> = (0..max_k + 3)
        .map(|k| functional.apply(k as f64 * step, f))
        .collect::<Result<_>>()?;
    let scale = (n as f64) * (n as f64) / 2.0;
    Ok(g.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]) * scale).collect())
}

/// A negative divided difference beyond the evaluation noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DividedDifferenceWitness {
    pub k: usize,
    pub value: f64,
}

/// Certifies `[k/n, (k+1)/n, (k+2)/n; A_t(f)] >= 0` for `k <= max_k`, up to
/// the error of evaluating `A_t(f)`. Returns the most negative offender.
pub fn divided_difference_condition(
    functional: &FunctionalFamily,
    f: &TestFunction,
    n: u32,
    max_k: usize,
) -> Result<Option<DividedDifferenceWitness>> {
    if n == 0 {
        return Err(Error::InvalidInput("grid index n must be positive".into()));
    }
    let step = 1.0 / n as f64;
    let g: Vec<f64> = (0..max_k + 3)
        .map(|k| functional.apply(k as f64 * step, f))
        .collect::<Result<_>>()?;
    let scale = (n as f64) * (n as f64) / 2.0;
    let noise = functional.eval_error();
    let mut worst: Option<DividedDifferenceWitness> = None;
    for (k, w) in g.windows(3).enumerate() {
        let d = (w[0] - 2.0 * w[1] + w[2]) * scale;
        let slack =
            1e-12 + scale * (4.0 * noise + 4.0 * f64::EPSILON * (w[0].abs() + 2.0 * w[1].abs() + w[2].abs()));
        if d < -slack && worst.is_none_or(|wit| d < wit.value) {
            worst = Some(DividedDifferenceWitness { k, value: d });
        }
    }
    Ok(worst)
}

/// Adaptive Simpson on `[lo, hi]`, split at the function's breakpoints.
fn integrate(f: &TestFunction, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let mut cuts = vec![lo];
    cuts.extend(f.breakpoints().iter().copied().filter(|&c| c > lo && c < hi));
    cuts.push(hi);
    let pieces = (cuts.len() - 1) as f64;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += simpson(f, w[0], w[1], tol / pieces)?;
    }
    Ok(total)
}

fn simpson(f: &TestFunction, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f.eval(a);
    let fb = f.eval(b);
    let m = 0.5 * (a + b);
    let fm = f.eval(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &TestFunction,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f.eval(lm);
    let frm = f.eval(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // absolute target, relaxed to roundoff level for large integrands
    let target = tol.max(64.0 * f64::EPSILON * (left.abs() + right.abs()));
    if !delta.is_finite() {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    if delta.abs() <= 15.0 * target {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_examples() {
        let e2 = TestFunction::monomial(2);
        assert_eq!(FunctionalFamily::Dirac.apply(0.5, &e2).unwrap(), 0.25);
        let e0 = TestFunction::monomial(0);
        assert_eq!(FunctionalFamily::Dirac.apply(0.0, &e0).unwrap(), 1.0);
    }

    #[test]
    fn sliding_average_of_identity() {
        let e1 = TestFunction::monomial(1);
        for &h in &[0.1, 0.37, 2.0] {
            let a = FunctionalFamily::sliding_average(h).unwrap();
            for &t in &[0.0, 0.3, 1.7, 12.0] {
                let v = a.apply(t, &e1).unwrap();
                assert!((v - (t + h / 2.0)).abs() < 1e-12, "h = {h}, t = {t}");
            }
        }
    }

    #[test]
    fn sliding_average_across_kink() {
        // (1/h) int_{t}^{t+h} |x - c| for t < c < t + h
        let f = TestFunction::abs_shift(0.5);
        let a = FunctionalFamily::sliding_average(0.4).unwrap();
        let (t, h, c): (f64, f64, f64) = (0.3, 0.4, 0.5);
        let exact = ((c - t).powi(2) + (t + h - c).powi(2)) / (2.0 * h);
        assert!((a.apply(t, &f).unwrap() - exact).abs() < 1e-11);
    }

    #[test]
    fn sliding_average_of_large_exponential() {
        let f = TestFunction::from_name("exp").unwrap();
        let a = FunctionalFamily::sliding_average(0.1).unwrap();
        let t = 60.0_f64;
        let exact = ((t + 0.1).exp() - t.exp()) / 0.1;
        let v = a.apply(t, &f).unwrap();
        assert!(((v - exact) / exact).abs() < 1e-12);
    }

    #[test]
    fn moment_conditions() {
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let (d0, d1) = FunctionalFamily::Dirac.moment_defects(&ts).unwrap();
        assert_eq!((d0, d1), (0.0, 0.0));
        let (d0, d1) = FunctionalFamily::sliding_average(0.1)
            .unwrap()
            .moment_defects(&ts)
            .unwrap();
        assert!(d0 < 1e-10 && d1 < 1e-10);
    }

    #[test]
    fn divided_differences_of_monomials() {
        let d =
            second_divided_differences(&FunctionalFamily::Dirac, &TestFunction::monomial(2), 3, 10).unwrap();
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let d =
            second_divided_differences(&FunctionalFamily::Dirac, &TestFunction::monomial(1), 5, 10).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sine_is_rejected() {
        let sin = TestFunction::from_name("sin").unwrap();
        let d = second_divided_differences(&FunctionalFamily::Dirac, &sin, 4, 8).unwrap();
        assert!(d.iter().any(|&v| v < 0.0));
        let w = divided_difference_condition(&FunctionalFamily::Dirac, &sin, 4, 8)
            .unwrap()
            .expect("sin is concave on (0, pi)");
        assert!(w.value < 0.0);
    }

    #[test]
    fn convex_registry_passes_condition() {
        let avg = FunctionalFamily::sliding_average(0.1).unwrap();
        for f in TestFunction::convex_registry() {
            for n in [1, 2, 4, 9] {
                assert!(divided_difference_condition(&FunctionalFamily::Dirac, &f, n, 40)
                    .unwrap()
                    .is_none());
                assert!(
                    divided_difference_condition(&avg, &f, n, 20).unwrap().is_none(),
                    "{}",
                    f.name()
                );
            }
        }
    }

    #[test]
    fn kink_on_grid_point_is_exact() {
        let f = TestFunction::abs_shift(0.5);
        let d = second_divided_differences(&FunctionalFamily::Dirac, &f, 4, 4).unwrap();
        // nodes 0.25, 0.5, 0.75 straddle the kink: (0.25 - 0 + 0.25) * 8 = 4
        assert_eq!(d[1], 4.0);
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn names_round_trip() {
        for name in CONVEX_NAMES.iter().chain(&["sin", "neg-e2"]) {
            assert_eq!(TestFunction::from_name(name).unwrap().name(), *name);
        }
        assert!(TestFunction::from_name("cosh").is_err());
        assert!(TestFunction::from_name("abs:c=zz").is_err());
        assert_eq!(
            "avg:h=0.1".parse::<FunctionalFamily>().unwrap().name(),
            "avg:h=0.1"
        );
        assert!("avg:h=-1".parse::<FunctionalFamily>().is_err());
        assert!("mean".parse::<FunctionalFamily>().is_err());
        assert_eq!(
            parse_function_list("convex,sin").unwrap().len(),
            CONVEX_NAMES.len() + 1
        );
    }
}
