use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opconvex::error::{Error, Result};
use opconvex::family::DEFAULT_TAIL_TARGET;
use opconvex::functional::parse_function_list;
use opconvex::harness::{
    any_fail, emit_report, repro, run_sweep, CheckContext, CheckReport, Format, PointSpec, Summary,
    SweepConfig,
};
use opconvex::inequality::{beta_series, classify_signs, default_sign_tolerance, em_quotient};
use opconvex::{FunctionalFamily, OperatorFamily, Truncation};

#[derive(Parser)]
#[command(
    name = "opconvex",
    version,
    about = "Convexity inequalities for positive linear operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator weights a_{n,k}(x).
    Coeffs {
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        x: f64,
        #[command(flatten)]
        trunc: TruncArgs,
    },
    /// Coefficients of (g_n(x) - g_n(y)) / (z - 1) and their sign.
    Beta {
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Coefficients of E_m / (z - 1)^power and their sign.
    Em {
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: u32,
        #[arg(long, value_delimiter = ',', required = true)]
        xs: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        power: u32,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Two-point functional A(f) >= 0.
    CheckA {
        #[command(flatten)]
        common: CheckArgs,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
    },
    /// m-point functional C_m(f) >= 0.
    CheckCm(PointCheck),
    /// B_m(f) against the sign of E_m / (z - 1)^2.
    CheckBm(PointCheck),
    /// Jensen gap of L_{mn,A}(f) at the points.
    Jensen(PointCheck),
    /// Batch sweep from a JSON config; flags override file values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        family: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        functional: Option<Vec<String>>,
        #[arg(long)]
        f: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        trunc: TruncArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        serial: bool,
    },
    /// Canned scenario for one claim.
    Repro {
        #[arg(long)]
        claim: String,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct TruncArgs {
    /// Fixed truncation order N.
    #[arg(long)]
    order: Option<usize>,
    /// Tail-mass target for automatic truncation.
    #[arg(long)]
    tail_target: Option<f64>,
}

impl TruncArgs {
    fn truncation(&self) -> Truncation {
        match (self.order, self.tail_target) {
            (Some(order), _) => Truncation::Fixed(order),
            (None, t) => Truncation::Auto {
                tail_target: t.unwrap_or(DEFAULT_TAIL_TARGET),
            },
        }
    }
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    family: String,
    #[arg(long, default_value = "dirac")]
    functional: String,
    #[arg(long)]
    n: u32,
    /// Test function names separated by commas, or `convex` / `all`.
    #[arg(long, default_value = "e2")]
    f: String,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[command(flatten)]
    trunc: TruncArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PointCheck {
    #[command(flatten)]
    common: CheckArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    xs: Vec<f64>,
    /// Number of points; must match --xs when given.
    #[arg(long)]
    m: Option<u32>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_configuration() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Coeffs { family, n, x, trunc } => {
            let family: OperatorFamily = family.parse()?;
            let order = match trunc.truncation() {
                Truncation::Fixed(o) => o,
                Truncation::Auto { tail_target } => family.default_order(n, x, tail_target)?.0,
            };
            let coeffs = family.coefficients(n, x, order)?;
            let mut out = io::stdout().lock();
            print_coefficients(&mut out, &coeffs)?;
            writeln!(out, "# tail_mass {:e}", family.tail_mass(n, x, order)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Beta {
            family,
            n,
            x,
            y,
            order,
            tol,
        } => {
            let family: OperatorFamily = family.parse()?;
            let q = beta_series(&family, n, x, y, order)?;
            let tol = tol.unwrap_or_else(|| default_sign_tolerance(&family));
            let c = classify_signs(q.series.coeffs(), tol);
            let mut out = io::stdout().lock();
            print_coefficients(&mut out, q.series.coeffs())?;
            writeln!(out, "# verdict {} residual {:e}", c.verdict, q.residual)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Em {
            family,
            n,
            xs,
            power,
            order,
            tol,
        } => {
            let family: OperatorFamily = family.parse()?;
            let tol = tol.unwrap_or_else(|| default_sign_tolerance(&family));
            let q = em_quotient(&family, n, &xs, order, power, tol)?;
            let mut out = io::stdout().lock();
            print_coefficients(&mut out, q.series.coeffs())?;
            writeln!(
                out,
                "# verdict {} residual {:e}",
                q.classification.verdict, q.residual
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckA { common, x, y } => {
            single_check(&common, |ctx, f| Ok(vec![ctx.check_a(common.n, x, y, f)?]))
        }
        Command::CheckCm(p) => point_check(&p, |ctx, n, xs, f| Ok(vec![ctx.check_cm(n, xs, f)?])),
        Command::CheckBm(p) => point_check(&p, |ctx, n, xs, f| ctx.check_bm(n, xs, f)),
        Command::Jensen(p) => point_check(&p, |ctx, n, xs, f| Ok(vec![ctx.check_jensen(n, xs, f)?])),
        Command::Sweep {
            config,
            family,
            functional,
            f,
            seed,
            tol,
            trunc,
            out,
            serial,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = SweepConfig::from_json(&text)?;
            if let Some(v) = family {
                cfg.families = v;
            }
            if let Some(v) = functional {
                cfg.functionals = v;
            }
            if let Some(v) = f {
                cfg.functions = vec![v];
            }
            if let Some(s) = seed {
                match &mut cfg.points {
                    PointSpec::Random { seed, .. } => *seed = s,
                    PointSpec::Grid { .. } => {
                        return Err(Error::InvalidInput("--seed needs a random point spec".into()))
                    }
                }
            }
            if let Some(t) = tol {
                cfg.tol = t;
            }
            if trunc.order.is_some() {
                cfg.order = trunc.order;
            }
            if trunc.tail_target.is_some() {
                cfg.tail_target = trunc.tail_target;
            }
            if let Some(o) = out.output {
                cfg.output = Some(o);
            }
            if let Some(fmt) = out.format {
                cfg.format = fmt.parse()?;
            }
            if serial {
                cfg.parallel = false;
            }
            let reports = run_sweep(&cfg)?;
            finish(&reports, cfg.format, cfg.output.as_ref(), true)
        }
        Command::Repro { claim, out } => {
            let format = out
                .format
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or_default();
            let reports = repro(&claim)?;
            finish(&reports, format, out.output.as_ref(), true)
        }
    }
}

fn print_coefficients(out: &mut impl Write, coeffs: &[f64]) -> Result<()> {
    writeln!(out, "k,coefficient")?;
    for (k, c) in coeffs.iter().enumerate() {
        writeln!(out, "{k},{c:e}")?;
    }
    Ok(())
}

fn context(common: &CheckArgs) -> Result<CheckContext> {
    if common.tol.is_nan() || common.tol <= 0.0 {
        return Err(Error::InvalidInput("--tol must be positive".into()));
    }
    let family: OperatorFamily = common.family.parse()?;
    let functional: FunctionalFamily = common.functional.parse()?;
    Ok(CheckContext::new(family, functional)
        .with_truncation(common.trunc.truncation())
        .with_tol(common.tol))
}

fn single_check<F>(common: &CheckArgs, check: F) -> Result<ExitCode>
where
    F: Fn(&CheckContext, &opconvex::TestFunction) -> Result<Vec<CheckReport>>,
{
    let ctx = context(common)?;
    let functions = parse_function_list(&common.f)?;
    let format = common
        .out
        .format
        .as_deref()
        .map(str::parse)
        .transpose()?
        .unwrap_or_default();
    let mut reports = Vec::new();
    for f in &functions {
        reports.extend(check(&ctx, f)?);
    }
    opconvex::harness::sort_reports(&mut reports);
    finish(&reports, format, common.out.output.as_ref(), false)
}

fn point_check<F>(p: &PointCheck, check: F) -> Result<ExitCode>
where
    F: Fn(&CheckContext, u32, &[f64], &opconvex::TestFunction) -> Result<Vec<CheckReport>>,
{
    if let Some(m) = p.m {
        if m as usize != p.xs.len() {
            return Err(Error::InvalidInput(format!(
                "--m {m} does not match {} points in --xs",
                p.xs.len()
            )));
        }
    }
    if p.xs.len() < 2 {
        return Err(Error::InvalidInput("--xs needs at least two points".into()));
    }
    single_check(&p.common, |ctx, f| check(ctx, p.common.n, &p.xs, f))
}

fn finish(
    reports: &[CheckReport],
    format: Format,
    output: Option<&PathBuf>,
    summary: bool,
) -> Result<ExitCode> {
    match output {
        Some(path) => emit_report(reports, format, BufWriter::new(File::create(path)?))?,
        None => emit_report(reports, format, io::stdout().lock())?,
    }
    if summary {
        eprint!("{}", Summary::of(reports));
    }
    Ok(if any_fail(reports) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}
