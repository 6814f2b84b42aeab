//! Single checks, batch sweeps, canned reproduction scenarios and report
//! emission.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{OperatorFamily, DEFAULT_TAIL_TARGET};
use crate::functional::{divided_difference_condition, parse_function_list, FunctionalFamily, TestFunction};
use crate::inequality::{default_sign_tolerance, em_quotient, gusic_gap, SignVerdict};
use crate::values::{Evaluator, FunctionalValue, Truncation};

/// Tail bounds above this make a verdict meaningless; such rows are rejected.
pub const MAX_TAIL_BOUND: f64 = 1e-6;

fn truncation_reason(v: &FunctionalValue) -> Option<String> {
    (!(v.tail_bound <= MAX_TAIL_BOUND)).then(|| {
        format!(
            "truncation: tail bound {:e} exceeds {:e}",
            v.tail_bound, MAX_TAIL_BOUND
        )
    })
}

pub const CSV_HEADER: [&str; 12] = [
    "family",
    "functional",
    "n",
    "m",
    "xs",
    "f",
    "quantity",
    "value",
    "tail_bound",
    "tolerance",
    "verdict",
    "method",
];

/// Agreement required between the two `B_m` routes.
pub const REPR_TOL_FINITE: f64 = 1e-10;
pub const REPR_TOL_TRUNCATED: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The instance lies outside the hypotheses; the reason has no commas.
    Rejected(String),
}

impl Verdict {
    fn rejected(reason: impl Into<String>) -> Self {
        Verdict::Rejected(reason.into().replace(',', ";"))
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail)
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Verdict::Rejected(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("PASS"),
            Verdict::Fail => f.write_str("FAIL"),
            Verdict::Rejected(reason) => write!(f, "REJECTED({reason})"),
        }
    }
}

/// One verification record. For rejected instances `value` holds the
/// offending witness (a negative divided difference, or the larger moment
/// defect for the `B_m` guard) or NaN when there is none.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub family: String,
    pub functional: String,
    pub n: u32,
    pub m: u32,
    pub xs: Vec<f64>,
    pub f: String,
    pub quantity: String,
    pub value: f64,
    pub tail_bound: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub method: String,
}

#[derive(Serialize)]
struct Row {
    family: String,
    functional: String,
    n: u32,
    m: u32,
    xs: String,
    f: String,
    quantity: String,
    value: f64,
    tail_bound: f64,
    tolerance: f64,
    verdict: String,
    method: String,
}

impl CheckReport {
    fn row(&self) -> Row {
        Row {
            family: self.family.clone(),
            functional: self.functional.clone(),
            n: self.n,
            m: self.m,
            xs: join_xs(&self.xs),
            f: self.f.clone(),
            quantity: self.quantity.clone(),
            value: self.value,
            tail_bound: self.tail_bound,
            tolerance: self.tolerance,
            verdict: self.verdict.to_string(),
            method: self.method.clone(),
        }
    }

    pub fn csv_fields(&self) -> [String; 12] {
        let r = self.row();
        [
            r.family,
            r.functional,
            r.n.to_string(),
            r.m.to_string(),
            r.xs,
            r.f,
            r.quantity,
            r.value.to_string(),
            r.tail_bound.to_string(),
            r.tolerance.to_string(),
            r.verdict,
            r.method,
        ]
    }

    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.family
            .cmp(&other.family)
            .then_with(|| self.functional.cmp(&other.functional))
            .then(self.n.cmp(&other.n))
            .then(self.m.cmp(&other.m))
            .then_with(|| cmp_xs(&self.xs, &other.xs))
            .then_with(|| self.f.cmp(&other.f))
            .then_with(|| self.quantity.cmp(&other.quantity))
    }
}

fn join_xs(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn cmp_xs(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    a.len().cmp(&b.len())
}

/// Sorts reports by input tuple, then quantity.
pub fn sort_reports(reports: &mut [CheckReport]) {
    reports.sort_by(|a, b| a.sort_key_cmp(b));
}

pub fn any_fail(reports: &[CheckReport]) -> bool {
    reports.iter().any(|r| r.verdict.is_fail())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(Error::UnknownName {
                kind: "format",
                name: s.to_string(),
            }),
        }
    }
}

/// Writes reports (already sorted) as CSV or JSON lines.
pub fn emit_report<W: Write>(reports: &[CheckReport], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in reports {
                w.write_record(r.csv_fields())?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut out = out;
            for r in reports {
                serde_json::to_writer(&mut out, &r.row())?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Everything needed to check one instance.
#[derive(Clone, Debug)]
pub struct CheckContext {
    pub family: OperatorFamily,
    pub functional: FunctionalFamily,
    pub truncation: Truncation,
    pub tol: f64,
}

impl CheckContext {
    pub fn new(family: OperatorFamily, functional: FunctionalFamily) -> Self {
        Self {
            family,
            functional,
            truncation: Truncation::default(),
            tol: 1e-12,
        }
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn evaluator<'a>(&'a self, f: &'a TestFunction) -> Evaluator<'a> {
        Evaluator::new(&self.family, &self.functional, f).with_truncation(self.truncation)
    }

    fn report(&self, n: u32, xs: &[f64], f: &TestFunction, quantity: &str) -> CheckReport {
        CheckReport {
            family: self.family.name(),
            functional: self.functional.name(),
            n,
            m: xs.len() as u32,
            xs: xs.to_vec(),
            f: f.name().to_string(),
            quantity: quantity.to_string(),
            value: f64::NAN,
            tail_bound: 0.0,
            tolerance: self.tol,
            verdict: Verdict::Pass,
            method: "-".to_string(),
        }
    }

    /// Rejection reason and witness when the divided differences of
    /// `A_t(f)` on the grid `k/h`, `k <= max_k + 2`, are not all nonnegative.
    fn precondition(&self, f: &TestFunction, h: u32, max_k: usize) -> Result<Option<(String, f64)>> {
        let witness = divided_difference_condition(&self.functional, f, h, max_k)?;
        Ok(witness.map(|w| {
            (
                format!(
                    "precondition: divided difference {:e} at k={} on grid 1/{h}",
                    w.value, w.k
                ),
                w.value,
            )
        }))
    }

    fn budget(&self, v: &FunctionalValue) -> f64 {
        self.tol + v.tail_bound + v.rounding_bound()
    }

    fn fill(&self, mut rep: CheckReport, v: &FunctionalValue, verdict: Verdict) -> CheckReport {
        rep.value = v.value;
        rep.tail_bound = v.tail_bound;
        rep.method = v.method.to_string();
        rep.verdict = verdict;
        rep
    }

    fn reject(rep: CheckReport, reason: String, witness: f64) -> CheckReport {
        CheckReport {
            value: witness,
            verdict: Verdict::rejected(reason),
            ..rep
        }
    }

    fn nonnegative(
        &self,
        rep: CheckReport,
        v: Result<FunctionalValue>,
        f: &TestFunction,
        h: u32,
    ) -> Result<CheckReport> {
        let v = match v {
            Ok(v) => v,
            Err(e) => return rejected_by_error(rep, e),
        };
        if let Some((reason, w)) = self.precondition(f, h, v.truncation_order)? {
            return Ok(Self::reject(rep, reason, w));
        }
        if let Some(reason) = truncation_reason(&v) {
            return Ok(Self::reject(rep, reason, v.tail_bound));
        }
        let verdict = if v.value >= -self.budget(&v) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Ok(self.fill(rep, &v, verdict))
    }

    /// `A(f) >= 0` under the divided-difference condition on the grid
    /// `1/(2n)`.
    pub fn check_a(&self, n: u32, x: f64, y: f64, f: &TestFunction) -> Result<CheckReport> {
        let rep = self.report(n, &[x, y], f, "A");
        let v = self.evaluator(f).rasa_functional(n, x, y);
        self.nonnegative(rep, v, f, 2 * n)
    }

    /// `C_m(f) >= 0` under the divided-difference condition on `1/(mn)`.
    pub fn check_cm(&self, n: u32, xs: &[f64], f: &TestFunction) -> Result<CheckReport> {
        let rep = self.report(n, xs, f, "C_m");
        let v = self.evaluator(f).cm_value(n, xs);
        self.nonnegative(rep, v, f, xs.len() as u32 * n)
    }

    /// Jensen gap of `L_{mn,A}(f)` at the points, expected `>= 0`.
    pub fn check_jensen(&self, n: u32, xs: &[f64], f: &TestFunction) -> Result<CheckReport> {
        let rep = self.report(n, xs, f, "jensen");
        let v = self.evaluator(f).jensen_gap(n, xs);
        self.nonnegative(rep, v, f, xs.len() as u32 * n)
    }

    /// `B_m(f)` against the sign of `E_m / (z-1)^2`, plus agreement of the
    /// divided-difference representation (`B_m_repr` row).
    pub fn check_bm(&self, n: u32, xs: &[f64], f: &TestFunction) -> Result<Vec<CheckReport>> {
        let rep = self.report(n, xs, f, "B_m");
        let repr_rep = self.report(n, xs, f, "B_m_repr");
        let ev = self.evaluator(f);
        let h = xs.len() as u32 * n;

        let direct = match ev.bm_value(n, xs) {
            Ok(v) => v,
            Err(e) => {
                let a = rejected_by_error(rep, clone_error(&e))?;
                let b = rejected_by_error(repr_rep, e)?;
                return Ok(vec![a, b]);
            }
        };
        if let Some((reason, w)) = self.precondition(f, h, direct.truncation_order)? {
            return Ok(vec![
                Self::reject(rep, reason.clone(), w),
                Self::reject(repr_rep, reason, w),
            ]);
        }
        if let Some(reason) = truncation_reason(&direct) {
            return Ok(vec![
                Self::reject(rep, reason.clone(), direct.tail_bound),
                Self::reject(repr_rep, reason, direct.tail_bound),
            ]);
        }

        let sign_tol = default_sign_tolerance(&self.family);
        let quotient = em_quotient(&self.family, n, xs, Some(direct.truncation_order), 2, sign_tol)?;
        let budget = self.budget(&direct);
        let verdict = match quotient.classification.verdict {
            SignVerdict::AllNonNegative => pass_if(direct.value >= -budget),
            SignVerdict::AllNonPositive => pass_if(direct.value <= budget),
            SignVerdict::AllZero => {
                if let Ok(cm) = ev.cm_value(n, xs) {
                    log::info!(
                        "{} n={n} xs={} f={}: B_m = {:e} vanishes identically while C_m = {:e}",
                        self.family.name(),
                        join_xs(xs),
                        f.name(),
                        direct.value,
                        cm.value
                    );
                }
                pass_if(direct.value.abs() <= budget)
            }
            SignVerdict::Mixed => Verdict::rejected(format!(
                "precondition: E_m/(z-1)^2 has mixed signs at k={} and k={}",
                quotient.classification.witness_positive.unwrap_or(0),
                quotient.classification.witness_negative.unwrap_or(0)
            )),
        };
        let bm_row = self.fill(rep, &direct, verdict);

        let repr_row = match ev.bm_value_via_representation(n, xs) {
            Ok(r) if truncation_reason(&r).is_some() => {
                Self::reject(repr_rep, truncation_reason(&r).unwrap(), r.tail_bound)
            }
            Ok(r) => {
                let base = if self.family.finite_support() {
                    REPR_TOL_FINITE
                } else {
                    REPR_TOL_TRUNCATED
                };
                let gap = (r.value - direct.value).abs();
                let allowed = base + r.rounding_bound() + direct.rounding_bound();
                let mut row = self.fill(repr_rep, &r, pass_if(gap <= allowed));
                row.tolerance = base;
                row
            }
            Err(e) => rejected_by_error(repr_rep, e)?,
        };
        Ok(vec![bm_row, repr_row])
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Instance-level errors that place the instance outside the hypotheses
/// become rejections; anything else propagates.
fn rejected_by_error(rep: CheckReport, e: Error) -> Result<CheckReport> {
    let (reason, witness) = match &e {
        Error::MomentGuard {
            e0, e1, power_form, ..
        } => (
            format!("guard: |B_m(e0)|={e0:e} |B_m(e1)|={e1:e} power_form={power_form}"),
            e0.max(*e1),
        ),
        Error::NotPowerForm { .. } => ("guard: not power form".to_string(), f64::NAN),
        Error::Divergent { x, .. } => (format!("divergent: operator series diverges at x={x}"), f64::NAN),
        Error::OutOfDomain { x, .. } => (format!("domain: x={x} outside the family domain"), f64::NAN),
        Error::NonFinite { .. } | Error::Quadrature { .. } => (format!("numeric: {e}"), f64::NAN),
        _ => return Err(e),
    };
    Ok(CheckContext::reject(rep, reason, witness))
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::MomentGuard {
            family,
            e0,
            e1,
            power_form,
        } => Error::MomentGuard {
            family: family.clone(),
            e0: *e0,
            e1: *e1,
            power_form: *power_form,
        },
        Error::NotPowerForm { family } => Error::NotPowerForm {
            family: family.clone(),
        },
        Error::Divergent { family, function, x } => Error::Divergent {
            family: family.clone(),
            function: function.clone(),
            x: *x,
        },
        Error::OutOfDomain { family, x } => Error::OutOfDomain {
            family: family.clone(),
            x: *x,
        },
        other => Error::InvalidInput(other.to_string()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    A,
    Cm,
    Bm,
    Jensen,
}

impl FromStr for CheckKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "check-a" => Ok(CheckKind::A),
            "cm" | "check-cm" => Ok(CheckKind::Cm),
            "bm" | "check-bm" => Ok(CheckKind::Bm),
            "jensen" => Ok(CheckKind::Jensen),
            _ => Err(Error::UnknownName {
                kind: "check",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PointSpec {
    /// Every `m`-tuple from `start, start + step, ..` up to `stop`, clipped to
    /// the family domain.
    Grid { start: f64, stop: f64, step: f64 },
    /// `count` tuples per `(family, n, m)` drawn uniformly from the family's
    /// sampling range.
    Random { count: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub checks: Vec<CheckKind>,
    pub families: Vec<String>,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<String>,
    /// Inclusive range of operator indices.
    pub n: (u32, u32),
    /// Number of points; ignored by the two-point `A` check.
    #[serde(default = "default_m")]
    pub m: Vec<u32>,
    pub points: PointSpec,
    /// Test function names, or the `convex` / `all` keywords.
    pub functions: Vec<String>,
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub tail_target: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_functionals() -> Vec<String> {
    vec!["dirac".into()]
}

fn default_m() -> Vec<u32> {
    vec![2]
}

fn default_tol() -> f64 {
    1e-12
}

fn default_parallel() -> bool {
    true
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn truncation(&self) -> Truncation {
        match (self.order, self.tail_target) {
            (Some(order), _) => Truncation::Fixed(order),
            (None, Some(t)) => Truncation::Auto { tail_target: t },
            (None, None) => Truncation::Auto {
                tail_target: DEFAULT_TAIL_TARGET,
            },
        }
    }

    /// Resolves every name and range; reports the first invalid field.
    pub fn validate(&self) -> Result<ResolvedSweep> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.checks.is_empty() {
            return bad("checks must be nonempty");
        }
        if self.families.is_empty() || self.functionals.is_empty() || self.functions.is_empty() {
            return bad("families, functionals and functions must be nonempty");
        }
        let (lo, hi) = self.n;
        if lo == 0 || lo > hi {
            return bad("n range must satisfy 1 <= start <= end");
        }
        let needs_m = self.checks.iter().any(|c| *c != CheckKind::A);
        if needs_m && (self.m.is_empty() || self.m.iter().any(|&m| m < 2)) {
            return bad("m values must be at least 2");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.tail_target.is_some_and(|t| !(t > 0.0)) {
            return bad("tail_target must be positive");
        }
        if self.order == Some(0) {
            return bad("order must be positive");
        }
        match self.points {
            PointSpec::Grid { start, stop, step } => {
                if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                    return bad("grid needs finite start <= stop and step > 0");
                }
            }
            PointSpec::Random { count, .. } => {
                if count == 0 {
                    return bad("random sample count must be positive");
                }
            }
        }
        let families = self
            .families
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<OperatorFamily>>>()?;
        let functionals = self
            .functionals
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<FunctionalFamily>>>()?;
        let functions = parse_function_list(&self.functions.join(","))?;
        if let PointSpec::Grid { .. } = self.points {
            for fam in &families {
                if grid_points(&self.points, fam).is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "grid has no points in the {} domain",
                        fam.name()
                    )));
                }
            }
        }
        Ok(ResolvedSweep {
            families,
            functionals,
            functions,
        })
    }
}

/// Parsed names of a validated [`SweepConfig`].
pub struct ResolvedSweep {
    pub families: Vec<OperatorFamily>,
    pub functionals: Vec<FunctionalFamily>,
    pub functions: Vec<TestFunction>,
}

fn grid_points(spec: &PointSpec, family: &OperatorFamily) -> Vec<f64> {
    let PointSpec::Grid { start, stop, step } = *spec else {
        return Vec::new();
    };
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    let domain = family.domain();
    (0..=count)
        .map(|i| start + i as f64 * step)
        .map(|x| if (x - stop).abs() < 1e-9 * step { stop } else { x })
        .filter(|&x| domain.contains(x))
        .collect()
}

fn cartesian(points: &[f64], m: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                points.iter().map(move |&x| {
                    let mut t = prefix.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
    }
    out
}

/// Point tuples for one `(family, n, m)` cell. Random draws come from a
/// stream seeded by the configured seed and the cell coordinates, so cells
/// are independent of iteration order.
fn point_tuples(spec: &PointSpec, family: &OperatorFamily, n: u32, m: usize) -> Vec<Vec<f64>> {
    match *spec {
        PointSpec::Grid { .. } => cartesian(&grid_points(spec, family), m),
        PointSpec::Random { count, seed } => {
            let (lo, hi) = family.domain().sample_range();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((n as u64) << 8) | m as u64);
            (0..count)
                .map(|_| (0..m).map(|_| rng.gen_range(lo..=hi)).collect())
                .collect()
        }
    }
}

struct Instance<'a> {
    check: CheckKind,
    ctx: &'a CheckContext,
    n: u32,
    xs: Vec<f64>,
    f: &'a TestFunction,
}

impl Instance<'_> {
    fn run(&self) -> Result<Vec<CheckReport>> {
        let Instance { ctx, n, f, .. } = self;
        let xs = &self.xs;
        Ok(match self.check {
            CheckKind::A => vec![ctx.check_a(*n, xs[0], xs[1], f)?],
            CheckKind::Cm => vec![ctx.check_cm(*n, xs, f)?],
            CheckKind::Jensen => vec![ctx.check_jensen(*n, xs, f)?],
            CheckKind::Bm => ctx.check_bm(*n, xs, f)?,
        })
    }
}

/// Minimum value and verdict counts per quantity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub per_quantity: BTreeMap<String, QuantitySummary>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuantitySummary {
    pub pass: usize,
    pub fail: usize,
    pub rejected: usize,
    /// Smallest value over non-rejected rows, with its row index.
    pub min: Option<(f64, usize)>,
}

impl Summary {
    pub fn of(reports: &[CheckReport]) -> Self {
        let mut per_quantity: BTreeMap<String, QuantitySummary> = BTreeMap::new();
        for (i, r) in reports.iter().enumerate() {
            let q = per_quantity.entry(r.quantity.clone()).or_default();
            match r.verdict {
                Verdict::Pass => q.pass += 1,
                Verdict::Fail => q.fail += 1,
                Verdict::Rejected(_) => {
                    q.rejected += 1;
                    continue;
                }
            }
            if q.min.is_none_or(|(v, _)| r.value < v) {
                q.min = Some((r.value, i));
            }
        }
        Self { per_quantity }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, q) in &self.per_quantity {
            write!(
                f,
                "# {name}: pass={} fail={} rejected={}",
                q.pass, q.fail, q.rejected
            )?;
            if let Some((v, _)) = q.min {
                write!(f, " min={v:e}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Runs every `(check, family, functional, n, m, points, f)` instance and
/// returns the sorted reports. Output does not depend on `parallel`.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<CheckReport>> {
    let resolved = config.validate()?;
    let truncation = config.truncation();
    let mut contexts = Vec::new();
    for fam in &resolved.families {
        for functional in &resolved.functionals {
            contexts.push(
                CheckContext::new(fam.clone(), functional.clone())
                    .with_truncation(truncation)
                    .with_tol(config.tol),
            );
        }
    }

    let mut instances = Vec::new();
    for &check in &config.checks {
        let ms: Vec<u32> = if check == CheckKind::A {
            vec![2]
        } else {
            config.m.clone()
        };
        for ctx in &contexts {
            for n in config.n.0..=config.n.1 {
                for &m in &ms {
                    for xs in point_tuples(&config.points, &ctx.family, n, m as usize) {
                        for f in &resolved.functions {
                            instances.push(Instance {
                                check,
                                ctx,
                                n,
                                xs: xs.clone(),
                                f,
                            });
                        }
                    }
                }
            }
        }
    }
    log::info!("sweep: {} instances", instances.len());

    let results: Vec<Result<Vec<CheckReport>>> = if config.parallel {
        instances.par_iter().map(Instance::run).collect()
    } else {
        instances.iter().map(Instance::run).collect()
    };
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        reports.extend(r?);
    }
    sort_reports(&mut reports);
    Ok(reports)
}

/// Claims with a canned reproduction scenario.
pub const CLAIMS: [&str; 6] = [
    "rasa",
    "miro",
    "abel-rasa",
    "szasz-zero",
    "baskakov-reverse",
    "gusic",
];

/// Seed shared by the canned random scenarios.
pub const REPRO_SEED: u64 = 20_240_601;

fn convex() -> Vec<String> {
    vec!["convex".into()]
}

/// The sweep behind a claim; `gusic` has none and is handled by [`repro`].
pub fn repro_config(claim: &str) -> Result<Option<SweepConfig>> {
    let base =
        |checks: Vec<CheckKind>, family: &str, n: (u32, u32), m: Vec<u32>, points: PointSpec| SweepConfig {
            checks,
            families: vec![family.to_string()],
            functionals: default_functionals(),
            n,
            m,
            points,
            functions: convex(),
            order: None,
            tail_target: None,
            tol: 1e-12,
            output: None,
            format: Format::Csv,
            parallel: true,
        };
    let random = |count| PointSpec::Random {
        count,
        seed: REPRO_SEED,
    };
    Ok(Some(match claim {
        "rasa" => base(
            vec![CheckKind::A],
            "bernstein",
            (1, 8),
            vec![2],
            PointSpec::Grid {
                start: 0.0,
                stop: 1.0,
                step: 0.05,
            },
        ),
        "miro" => base(vec![CheckKind::Cm], "bernstein", (1, 4), vec![3], random(100)),
        "abel-rasa" => base(vec![CheckKind::Bm], "bernstein", (1, 5), vec![2, 3], random(20)),
        "szasz-zero" => SweepConfig {
            functions: vec!["e2".into(), "abs:c=0.5".into(), "exp".into()],
            ..base(
                vec![CheckKind::Bm, CheckKind::Cm],
                "szasz",
                (1, 4),
                vec![2],
                random(12),
            )
        },
        "baskakov-reverse" => SweepConfig {
            tol: 1e-9,
            ..base(vec![CheckKind::Bm], "baskakov", (1, 3), vec![2], random(16))
        },
        "gusic" => return Ok(None),
        other => {
            return Err(Error::UnknownName {
                kind: "claim",
                name: other.to_string(),
            })
        }
    }))
}

/// Runs the canned scenario for `claim` and returns sorted reports.
pub fn repro(claim: &str) -> Result<Vec<CheckReport>> {
    match repro_config(claim)? {
        Some(config) => run_sweep(&config),
        None => gusic_reports(1000, REPRO_SEED),
    }
}

/// `gusic_gap` on seeded tuples: for `m = 2` it must equal `(a1-a2)^2`
/// relative to `(a1+a2)^2`; for `m = 3..6` it must be nonnegative.
pub fn gusic_reports(count: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for m in 2..=6u32 {
        for _ in 0..count {
            let a: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..=10.0)).collect();
            let gap = gusic_gap(&a)?;
            let (value, tolerance, ok) = if m == 2 {
                let scale = (a[0] + a[1]).powi(2).max(f64::MIN_POSITIVE);
                let rel = (gap - (a[0] - a[1]).powi(2)).abs() / scale;
                (rel, 1e-14, rel <= 1e-14)
            } else {
                (gap, 1e-12, gap >= -1e-12)
            };
            reports.push(CheckReport {
                family: "-".into(),
                functional: "-".into(),
                n: 0,
                m,
                xs: a,
                f: "-".into(),
                quantity: if m == 2 { "gusic_rel_error" } else { "gusic_gap" }.into(),
                value,
                tail_bound: 0.0,
                tolerance,
                verdict: pass_if(ok),
                method: "Direct".into(),
            });
        }
    }
    sort_reports(&mut reports);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(family: OperatorFamily) -> CheckContext {
        CheckContext::new(family, FunctionalFamily::Dirac)
    }

    #[test]
    fn golden_check_a() {
        let e2 = TestFunction::monomial(2);
        let r = ctx(OperatorFamily::Bernstein).check_a(1, 0.0, 1.0, &e2).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.csv_fields().len(), 12);
    }

    #[test]
    fn sine_is_rejected_not_failed() {
        let sin = TestFunction::from_name("sin").unwrap();
        let r = ctx(OperatorFamily::Bernstein).check_a(2, 0.1, 0.9, &sin).unwrap();
        let v = r.verdict.to_string();
        assert!(v.starts_with("REJECTED(precondition"), "{v}");
        assert!(r.value < 0.0);
        assert!(!v.contains(','));
    }

    #[test]
    fn schurer_is_guarded() {
        let e2 = TestFunction::monomial(2);
        let rows = ctx(OperatorFamily::SzaszSchurer { p: 1 })
            .check_bm(1, &[0.5, 1.5], &e2)
            .unwrap();
        assert!(rows.iter().all(|r| r.verdict.is_rejected()));
        assert!(rows[0].verdict.to_string().contains("guard"));
        assert!(rows[0].value > 1e-8);
    }

    #[test]
    fn bm_rows_for_bernstein_and_baskakov() {
        let e2 = TestFunction::monomial(2);
        let rows = ctx(OperatorFamily::Bernstein)
            .check_bm(1, &[0.0, 1.0], &e2)
            .unwrap();
        assert_eq!(rows[0].value, 0.125);
        assert!(rows.iter().all(|r| r.verdict == Verdict::Pass));
        let rows = ctx(OperatorFamily::Baskakov)
            .with_tol(1e-9)
            .check_bm(1, &[0.0, 1.0], &e2)
            .unwrap();
        assert!((rows[0].value + 0.125).abs() < 1e-8);
        assert!(rows.iter().all(|r| r.verdict == Verdict::Pass), "{rows:?}");
    }

    #[test]
    fn loose_truncation_is_rejected() {
        let exp = TestFunction::from_name("exp").unwrap();
        let rows = ctx(OperatorFamily::Baskakov)
            .check_bm(2, &[1.7048771430125256, 3.3051073544790066], &exp)
            .unwrap();
        for r in &rows {
            assert!(r.verdict.to_string().starts_with("REJECTED(truncation"), "{r:?}");
            assert!(r.value > MAX_TAIL_BOUND);
        }
    }

    #[test]
    fn any_fail_drives_the_exit_status() {
        let e2 = TestFunction::monomial(2);
        let pass = ctx(OperatorFamily::Bernstein).check_a(1, 0.0, 1.0, &e2).unwrap();
        let rejected = ctx(OperatorFamily::Bernstein)
            .check_a(1, 0.0, 1.0, &TestFunction::from_name("neg-e2").unwrap())
            .unwrap();
        assert!(!any_fail(&[pass.clone(), rejected]));
        let fail = CheckReport {
            verdict: Verdict::Fail,
            ..pass.clone()
        };
        assert!(any_fail(&[pass, fail]));
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        emit_report(&[], Format::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn config_errors_come_first() {
        let mut cfg = repro_config("rasa").unwrap().unwrap();
        cfg.tol = 0.0;
        assert!(run_sweep(&cfg).unwrap_err().is_configuration());
        let mut cfg = repro_config("rasa").unwrap().unwrap();
        cfg.families = vec!["nope".into()];
        assert!(run_sweep(&cfg).unwrap_err().is_configuration());
    }

    #[test]
    fn grid_clips_to_domain() {
        let spec = PointSpec::Grid {
            start: 0.0,
            stop: 1.0,
            step: 0.1,
        };
        let pts = grid_points(&spec, &OperatorFamily::Bernstein);
        assert_eq!(pts.len(), 11);
        assert_eq!(*pts.last().unwrap(), 1.0);
        assert_eq!(cartesian(&pts, 2).len(), 121);
    }

    #[test]
    fn parallel_matches_serial() {
        let mut cfg = repro_config("abel-rasa").unwrap().unwrap();
        cfg.n = (1, 2);
        cfg.points = PointSpec::Random { count: 3, seed: 7 };
        let par = run_sweep(&cfg).unwrap();
        cfg.parallel = false;
        let ser = run_sweep(&cfg).unwrap();
        let render = |r: &[CheckReport]| {
            let mut buf = Vec::new();
            emit_report(r, Format::Csv, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(&par), render(&ser));
    }
}
