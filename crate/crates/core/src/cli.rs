//! Command line driver. Every study writes CSV to `--output` or stdout.
//!
//! Exit codes: 0 success, 1 bad configuration, 2 numerical failure. Failures
//! print one line `error kind=<kind> message="<text>"` on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::analysis::{
    convergence_study, exact_solution, gamma_sweep, infsup_constant, norm_equivalence, run_level, validate_levels,
    ConvergenceStudy, ErrorRecord, InfsupPair,
};
use crate::forms::ProblemData;
use crate::solver::{MethodSpec, Variant};
use crate::unfitted::{interface_exact_solution, interface_study};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

pub const CONVERGE_HEADER: &str = "n,h,dofs,err_h1,err_l2,err_mult,status";

#[derive(Debug, Parser)]
#[command(name = "lmstab", version, about = "Stabilised Lagrange multiplier finite element studies")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output CSV path; stdout when omitted.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Seed for randomised checks. Every study here is deterministic, so it
    /// does not change any output.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve on one mesh and report the errors.
    Solve(SolveArgs),
    /// Convergence study over several meshes.
    Converge(ConvergeArgs),
    /// Discrete inf-sup constants.
    Infsup(InfsupArgs),
    /// Distance between Barbosa-Hughes and Nitsche solutions over γ.
    GammaSweep(GammaSweepArgs),
    /// Unfitted interface convergence study.
    Unfitted(UnfittedArgs),
    /// Equivalence bounds between the projection and jump stabilisers.
    Equivalence(EquivalenceArgs),
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long)]
    pub method: Variant,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Use a globally linear exact solution instead of the default one.
    #[arg(long)]
    pub patch: bool,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub levels: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct InfsupArgs {
    #[arg(long)]
    pub pair: InfsupPair,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    pub levels: Vec<usize>,
    #[arg(long, action = ArgAction::Set, default_value_t = false)]
    pub stabilized: bool,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct GammaSweepArgs {
    #[arg(long)]
    pub method: Variant,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Explicit list of γ values.
    #[arg(long, value_delimiter = ',', conflicts_with = "range")]
    pub gammas: Option<Vec<f64>>,
    /// `start,stop,step`; defaults to `1,4,0.05`.
    #[arg(long, value_delimiter = ',')]
    pub range: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct UnfittedArgs {
    #[arg(long, default_value_t = 0.5137)]
    pub x0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub levels: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EquivalenceArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    pub levels: Vec<usize>,
}

/// `start, start + step, ...` up to `stop` inclusive, by index to avoid drift.
pub fn gamma_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(Error::InvalidArgument("gamma range needs start <= stop and step > 0".into()));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + step * i as f64).collect())
}

fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

fn record_row(out: &mut String, n: usize, rec: Option<&ErrorRecord>, status: &str) {
    match rec {
        Some(r) => {
            let mult = r.err_mult.map(fmt_f).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                fmt_f(r.h),
                r.n_dofs,
                fmt_f(r.err_h1),
                fmt_f(r.err_l2),
                mult,
                status
            );
        }
        None => {
            let _ = writeln!(out, "{n},,,,,,{status}");
        }
    }
}

/// Rows sorted by `n`, then the slope footer.
fn study_csv(study: &ConvergenceStudy) -> String {
    let mut levels: Vec<_> = study.levels.iter().collect();
    levels.sort_by_key(|l| l.n);
    let mut out = format!("{CONVERGE_HEADER}\n");
    for l in levels {
        record_row(&mut out, l.n, l.record.as_ref(), &l.status);
    }
    let slope = |v: Option<f64>| v.map(fmt_f).unwrap_or_else(|| "nan".into());
    let _ = writeln!(out, "slope_h1={}", slope(study.rates.map(|r| r.h1)));
    let _ = writeln!(out, "slope_l2={}", slope(study.rates.map(|r| r.l2)));
    out
}

/// Exit code and error line for the first failed level, if any.
fn study_failure(study: &ConvergenceStudy) -> Option<(i32, String)> {
    study.levels.iter().find(|l| l.record.is_none()).map(|l| {
        (EXIT_NUMERICAL, format!("error kind={} message=\"level n={} failed\"", l.status, l.n))
    })
}

/// Output of one run: CSV text plus an optional failure raised after the
/// CSV was produced (a failed convergence level), as exit code and error line.
pub struct RunOutput {
    pub csv: String,
    pub failure: Option<(i32, String)>,
}

fn check_gamma(g: f64) -> Result<()> {
    if !(g >= 0.0 && g.is_finite()) {
        return Err(Error::InvalidArgument("gamma must be non-negative and finite".into()));
    }
    Ok(())
}

/// Executes a parsed configuration without touching the file system.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    let ok = |csv| Ok(RunOutput { csv, failure: None });
    match &config.command {
        Command::Solve(a) => {
            check_gamma(a.method.gamma)?;
            let spec = MethodSpec::new(a.method.method, a.method.degree, a.n, a.method.gamma);
            spec.validate()?;
            let data = if a.patch { ProblemData::linear(0.3, 1.1, -0.7) } else { exact_solution() };
            let (_, rec) = run_level(&spec, &data)?;
            let mut out = format!("{CONVERGE_HEADER}\n");
            record_row(&mut out, a.n, Some(&rec), "ok");
            ok(out)
        }
        Command::Converge(a) => {
            check_gamma(a.method.gamma)?;
            validate_levels(&a.levels)?;
            let spec = MethodSpec::new(a.method.method, a.method.degree, a.levels[0], a.method.gamma);
            let study = convergence_study(&spec, &a.levels, &exact_solution())?;
            let failure = study_failure(&study);
            Ok(RunOutput { csv: study_csv(&study), failure })
        }
        Command::Unfitted(a) => {
            check_gamma(a.gamma)?;
            let study = interface_study(&a.levels, a.x0, a.gamma, &interface_exact_solution())?;
            let failure = study_failure(&study);
            Ok(RunOutput { csv: study_csv(&study), failure })
        }
        Command::Infsup(a) => {
            check_gamma(a.gamma)?;
            validate_levels(&a.levels)?;
            let mut out = String::from("n,beta,status\n");
            for &n in &a.levels {
                let beta = infsup_constant(a.pair, n, a.stabilized, a.gamma)?;
                let _ = writeln!(out, "{n},{},ok", fmt_f(beta));
            }
            ok(out)
        }
        Command::Equivalence(a) => {
            validate_levels(&a.levels)?;
            let mut out = String::from("n,lower,upper\n");
            for &n in &a.levels {
                let (lo, hi) = norm_equivalence(n)?;
                let _ = writeln!(out, "{n},{},{}", fmt_f(lo), fmt_f(hi));
            }
            ok(out)
        }
        Command::GammaSweep(a) => {
            let gammas = match (&a.gammas, &a.range) {
                (Some(g), _) => g.clone(),
                (None, Some(r)) if r.len() == 3 => gamma_range(r[0], r[1], r[2])?,
                (None, Some(_)) => return Err(Error::InvalidArgument("--range takes start,stop,step".into())),
                (None, None) => gamma_range(1.0, 4.0, 0.05)?,
            };
            let sweep = gamma_sweep(a.method, a.degree, a.n, &gammas, &exact_solution())?;
            let mut out = String::from("gamma,distance,status,det_sign,min_pivot_ratio,negative_eigenvalues,near_singular\n");
            for r in &sweep.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_f(r.gamma),
                    r.distance.map(fmt_f).unwrap_or_default(),
                    r.status,
                    r.det_sign.map(|s| format!("{s:+}")).unwrap_or_default(),
                    r.min_pivot_ratio.map(fmt_f).unwrap_or_default(),
                    r.negative_eigenvalues.map(|v| v.to_string()).unwrap_or_default(),
                    r.near_singular
                );
            }
            let brackets: Vec<String> =
                sweep.singular_brackets().iter().map(|(lo, hi)| format!("{lo:.4}:{hi:.4}")).collect();
            let _ = writeln!(out, "near_singular_brackets={}", brackets.join(";"));
            ok(out)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('"', "'");
    format!("error kind={} message=\"{}\"", e.kind(), msg)
}

/// Parses `args`, runs the study and writes its CSV. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ").replace('"', "'");
            let _ = writeln!(stderr, "error kind=invalid-argument message=\"{first}\"");
            let _ = write!(stderr, "{text}");
            return EXIT_CONFIG;
        }
    };
    let output = match execute(&config) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_line(&e));
            return exit_code(&e);
        }
    };
    let written = match &config.output {
        Some(path) => std::fs::write(path, &output.csv).map_err(Error::from),
        None => stdout.write_all(output.csv.as_bytes()).map_err(Error::from),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "{}", error_line(&e));
        return EXIT_CONFIG;
    }
    match output.failure {
        Some((code, line)) => {
            let _ = writeln!(stderr, "{line}");
            code
        }
        None => EXIT_OK,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("lmstab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn range_includes_endpoint() {
        let g = gamma_range(1.0, 4.0, 0.05).unwrap();
        assert_eq!(g.len(), 61);
        assert!((g[60] - 4.0).abs() < 1e-12);
        assert!(gamma_range(2.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn unknown_method_is_a_config_error() {
        let (code, out, err) = run_capture(&["solve", "--method", "bogus"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(out.is_empty());
        assert!(err.starts_with("error kind=invalid-argument"), "{err}");
    }

    #[test]
    fn unsupported_degree_is_a_config_error() {
        let (code, _, err) = run_capture(&["solve", "--method", "jump", "--degree", "3"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.starts_with("error kind="), "{err}");
    }

    #[test]
    fn degenerate_cut_is_numerical() {
        let (code, _, err) = run_capture(&["unfitted", "--x0", "0.5", "--levels", "8,16,32"]);
        assert_eq!(code, EXIT_NUMERICAL);
        assert!(err.starts_with("error kind=degenerate-cut"), "{err}");
    }

    #[test]
    fn help_exits_cleanly() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("gamma-sweep"));
    }

    #[test]
    fn patch_solve_row() {
        let (code, out, _) = run_capture(&["solve", "--method", "nitsche-nonsym", "--n", "8", "--patch"]);
        assert_eq!(code, EXIT_OK);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some(CONVERGE_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "8");
        assert!(row[3].parse::<f64>().unwrap() <= 1e-10);
        assert!(row[4].parse::<f64>().unwrap() <= 1e-10);
        assert_eq!(row[6], "ok");
    }
}
