use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mgl_core::conditions::{
    check_convex_second_derivative, check_cross_condition_seeded, check_sqrt_convex, check_symmetric_sum_nondecreasing,
    ConditionVerdict, Grid, CROSS_SAMPLES,
};
use mgl_core::constants::{boundary_disagreement, sharp_bounds_with, BoundsReport, Extremum, VarClass, BOUNDARY_TOL};
use mgl_core::decompose::{decompose_centered, decompose_symmetric};
use mgl_core::verifier::{fuzz_inequality, gap_with_ratio, ratio_extremize, RATIO_TOL};
use mgl_core::{Error, FiniteDistribution, FunctionSpec};

#[derive(Parser)]
#[command(
    name = "mgl",
    version,
    about = "Sharp moment constants for sums of two independent variables"
)]
struct Cli {
    /// Worker threads for parallel searches (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Centered,
    Symmetric,
}

impl From<ClassArg> for VarClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Centered => VarClass::Centered,
            ClassArg::Symmetric => VarClass::Symmetric,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Min,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum CondArg {
    /// f'' convex (midpoint test on a grid).
    Convex,
    /// f''(t) + f''(-t) nondecreasing on (0, hi].
    Symsum,
    /// Cross condition on (lo, hi).
    Cross,
    /// f even and y -> f(sqrt y) convex on [max(lo, 0), hi].
    Sqrt,
}

#[derive(Subcommand)]
enum Command {
    /// Sharp lower and upper constants for one exponent.
    Constants {
        #[arg(long)]
        rho: f64,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long)]
        json: bool,
        /// Report the trivial constants (0, 1) for centered rho < 1.
        #[arg(long)]
        allow_trivial: bool,
    },
    /// CSV table of constants over a range of exponents.
    Table {
        #[arg(long)]
        rho_from: f64,
        #[arg(long)]
        rho_to: f64,
        #[arg(long)]
        step: f64,
        /// Both classes when omitted.
        #[arg(long, value_enum)]
        class: Option<ClassArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a function against one of the function-class conditions.
    CheckFn {
        /// Built-in function, e.g. `abs_pow:2.5`, `poly:0,0,1`, `sawtooth`.
        #[arg(long = "fn", conflicts_with = "table", required_unless_present = "table")]
        function: Option<String>,
        /// JSON array of `[y, f(y)]` pairs, evaluated piecewise linearly.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_enum)]
        cond: CondArg,
        /// `lo:hi`
        #[arg(long, default_value = "-10:10", allow_hyphen_values = true)]
        range: String,
        /// Grid points for the convex and sqrt checks.
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, env = "MGL_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Randomized search for violations of the sharp bounds.
    Fuzz {
        #[arg(long)]
        rho: f64,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, env = "MGL_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Search two-point pairs for one that attains a sharp constant.
    Sharpness {
        #[arg(long)]
        rho: f64,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long, value_enum)]
        side: SideArg,
        #[arg(long, env = "MGL_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Exact gap E f(X+Y) - E f(X) - E f(Y) for two distributions.
    Gap {
        #[arg(long = "fn")]
        function: String,
        #[arg(long)]
        d1: PathBuf,
        #[arg(long)]
        d2: PathBuf,
        /// Also report the moment ratio and check it against the sharp bounds.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Two-point mixture decomposition of a distribution.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        symmetric: bool,
    },
}

enum Failure {
    /// Bad arguments or input, exit 2.
    Input(String),
    /// A check ran and failed, exit 1.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_distribution(path: &Path) -> Result<FiniteDistribution, Failure> {
    FiniteDistribution::from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn constants(rho: f64, class: VarClass, json: bool, allow_trivial: bool) -> Outcome {
    let b = sharp_bounds_with(rho, class, allow_trivial)?;
    if json {
        return Ok(to_json(&b));
    }
    let mut out = format!("rho={} class={}\n", b.rho, class.as_str());
    writeln!(out, "lower={} ({})", b.lower, b.lower_regime.as_str()).unwrap();
    writeln!(out, "upper={} ({})", b.upper, b.upper_regime.as_str()).unwrap();
    if let Some(z) = b.psi_argopt {
        writeln!(out, "z_argopt={z}").unwrap();
    }
    Ok(out)
}

fn table(from: f64, to: f64, step: f64, class: Option<ClassArg>, out: Option<&Path>) -> Outcome {
    if !(from.is_finite() && to.is_finite() && step.is_finite() && step > 0.0 && to >= from) {
        return Err(Failure::Input(format!(
            "need finite rho-from <= rho-to and step > 0, got {from}..{to} step {step}"
        )));
    }
    let classes: Vec<VarClass> = match class {
        Some(c) => vec![c.into()],
        None => vec![VarClass::Centered, VarClass::Symmetric],
    };
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    let mut rows: Vec<BoundsReport> = Vec::new();
    let mut disagreements = Vec::new();
    for i in 0..n {
        let mut rho = from + i as f64 * step;
        for b in [2.0, 3.0] {
            if (rho - b).abs() <= 1e-12 {
                rho = b;
            }
        }
        for &c in &classes {
            rows.push(sharp_bounds_with(rho, c, false)?);
            if let Some(d) = boundary_disagreement(rho, c)? {
                if d > BOUNDARY_TOL {
                    disagreements.push(format!("rho={rho} {}: adjacent regimes differ by {d:e}", c.as_str()));
                }
            }
        }
    }
    let mut csv = String::from("rho,class,lower,upper,lower_regime,upper_regime,z_argopt\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            csv_float(r.rho),
            r.var_class.as_str(),
            csv_float(r.lower),
            csv_float(r.upper),
            r.lower_regime.as_str(),
            r.upper_regime.as_str(),
            r.psi_argopt.map(csv_float).unwrap_or_default()
        )
        .unwrap();
    }
    let text = match out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            format!("wrote {} rows to {}\n", rows.len(), path.display())
        }
        None => csv,
    };
    if disagreements.is_empty() {
        Ok(text)
    } else {
        Err(Failure::Check(disagreements.join("\n")))
    }
}

fn parse_range(range: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Input(format!("range must look like lo:hi with lo < hi, got {range:?}"));
    let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn load_function(function: Option<&str>, table: Option<&Path>) -> Result<FunctionSpec, Failure> {
    if let Some(name) = function {
        return Ok(FunctionSpec::parse(name)?);
    }
    let path = table.expect("clap requires --fn or --table");
    let points: Vec<(f64, f64)> = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Input(format!("{}: expected [[y, f], ...]: {e}", path.display())))?;
    Ok(FunctionSpec::from_table(path.display().to_string(), points)?)
}

fn check_fn(
    f: &FunctionSpec,
    cond: CondArg,
    range: (f64, f64),
    points: usize,
    seed: u64,
) -> Result<ConditionVerdict, Failure> {
    let (lo, hi) = range;
    let v = match cond {
        CondArg::Convex => check_convex_second_derivative(f, &Grid::new(lo, hi, points)?)?,
        CondArg::Symsum => check_symmetric_sum_nondecreasing(f, hi)?,
        CondArg::Cross => {
            if !(lo < 0.0 && hi > 0.0) {
                return Err(Failure::Input(format!("cross range must contain 0, got {lo}:{hi}")));
            }
            check_cross_condition_seeded(f, -lo, hi, CROSS_SAMPLES, seed)?
        }
        CondArg::Sqrt => check_sqrt_convex(f, &Grid::new(lo.max(0.0), hi, points)?)?,
    };
    Ok(v)
}

fn verdict_text(v: &ConditionVerdict) -> String {
    let mut out = format!(
        "{:?} for {}: {}\nworst_violation={:e} witness={:?} samples={}\n",
        v.condition,
        v.function,
        if v.holds { "holds" } else { "fails" },
        v.worst_violation,
        v.witness,
        v.samples
    );
    for w in &v.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    out
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Input("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Input(e.to_string()))?;
    }
    match cli.command {
        Command::Constants {
            rho,
            class,
            json,
            allow_trivial,
        } => constants(rho, class.into(), json, allow_trivial),
        Command::Table {
            rho_from,
            rho_to,
            step,
            class,
            out,
        } => table(rho_from, rho_to, step, class, out.as_deref()),
        Command::CheckFn {
            function,
            table,
            cond,
            range,
            points,
            seed,
            json,
        } => {
            let f = load_function(function.as_deref(), table.as_deref())?;
            let v = check_fn(&f, cond, parse_range(&range)?, points, seed)?;
            let text = if json { to_json(&v) } else { verdict_text(&v) };
            if v.holds {
                Ok(text)
            } else {
                Err(Failure::Check(text))
            }
        }
        Command::Fuzz {
            rho,
            class,
            trials,
            seed,
        } => {
            let rep = fuzz_inequality(rho, class.into(), trials, seed)?;
            let text = to_json(&rep);
            if rep.passed() {
                Ok(text)
            } else {
                Err(Failure::Check(text))
            }
        }
        Command::Sharpness { rho, class, side, seed } => {
            let which = match side {
                SideArg::Min => Extremum::Min,
                SideArg::Max => Extremum::Max,
            };
            let rep = ratio_extremize(rho, class.into(), which, seed)?;
            let text = to_json(&rep);
            if rep.attained {
                Ok(text)
            } else {
                Err(Failure::Check(text))
            }
        }
        Command::Gap { function, d1, d2, rho } => {
            let f = FunctionSpec::parse(&function)?;
            let (x, y) = (read_distribution(&d1)?, read_distribution(&d2)?);
            let Some(rho) = rho else {
                return Ok(to_json(&mgl_core::verifier::gap(&f, &x, &y)?));
            };
            let g = gap_with_ratio(&f, &x, &y, rho)?;
            let text = to_json(&g);
            let class = if x.is_symmetric() && y.is_symmetric() {
                Some(VarClass::Symmetric)
            } else if x.is_centered() && y.is_centered() {
                Some(VarClass::Centered)
            } else {
                None
            };
            let violated = match (class, g.ratio) {
                (Some(c), Some(r)) => {
                    let b = sharp_bounds_with(rho, c, true)?;
                    r < b.lower - RATIO_TOL || r > b.upper + RATIO_TOL
                }
                _ => false,
            };
            if violated {
                Err(Failure::Check(text))
            } else {
                Ok(text)
            }
        }
        Command::Decompose { input, symmetric } => {
            let d = read_distribution(&input)?;
            let m = if symmetric {
                decompose_symmetric(&d)?
            } else {
                decompose_centered(&d)?
            };
            Ok(to_json(&m))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Check(text)) => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
