//! Command-line front end.
//!
//! Distribution grammar (whitespace is ignored):
//!
//! ```text
//! law     := pairs | "poisson(" rate ")" | "geometric(" p ")" | "delta(" k ")"
//! pairs   := value ":" prob ("," value ":" prob)*
//! ```
//!
//! `value` and `k` are non-negative integers; `prob`, `rate` and `p` are
//! decimal reals. A pair list must sum to 1 within 1e-12. `geometric(p)` has
//! support {0, 1, ...} with `P(k) = (1 - p)^k p`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Errors are
//! written to stderr as a one-line JSON object.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    criterion_scan, criterion_search, critical_markov_bound, lemma1_rate, skeleton_lemma,
    subcritical_decay_check, supercritical_certificate, thinning_pipeline, Certificate,
    CriterionOptions, PipelineOptions,
};
use crate::chain::{batch_simulate, ChainConfig};
use crate::couplings::Coupler;
use crate::error::GwError;
use crate::exact::{extinction_probability, laws_through};
use crate::offspring::{OffspringLaw, Pmf, DEFAULT_CAP};
use crate::rng::derive_seed;
use crate::stats::hoeffding_radius;

/// Parses the distribution grammar above.
pub fn parse_law(text: &str) -> Result<OffspringLaw, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.to_ascii_lowercase();
    let call = |name: &str| -> Option<&str> {
        s.strip_prefix(name)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
    };
    let real = |v: &str| -> Result<f64, String> {
        v.parse::<f64>()
            .map_err(|_| format!("not a number: {v:?}"))
    };
    let law = if let Some(arg) = call("poisson") {
        OffspringLaw::poisson(real(arg)?)
    } else if let Some(arg) = call("geometric") {
        OffspringLaw::geometric(real(arg)?)
    } else if let Some(arg) = call("delta") {
        let k = arg
            .parse::<usize>()
            .map_err(|_| format!("not a non-negative integer: {arg:?}"))?;
        Ok(OffspringLaw::delta(k))
    } else {
        if s.is_empty() {
            return Err("empty distribution".into());
        }
        let mut pairs = Vec::new();
        for item in s.split(',') {
            let (v, p) = item
                .split_once(':')
                .ok_or_else(|| format!("expected value:prob, got {item:?}"))?;
            let v = v
                .parse::<usize>()
                .map_err(|_| format!("not a non-negative integer: {v:?}"))?;
            pairs.push((v, real(p)?));
        }
        OffspringLaw::from_pairs(&pairs)
    };
    law.map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    /// Offspring law, e.g. "0:0.25,2:0.75", "poisson(1.0)", "geometric(0.5)", "delta(3)".
    #[arg(long)]
    nu: String,
    /// Master seed.
    #[arg(long, env = "GWLAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Support cap for exact pmf arithmetic.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use exact pmf computation instead of simulation where available.
    #[arg(long)]
    exact: bool,
}

const GRAMMAR: &str = "\
Offspring laws (--nu), whitespace ignored:
  0:0.25,2:0.75    value:prob pairs summing to 1 within 1e-12
  poisson(1.2)     Poisson with rate 1.2
  geometric(0.5)   P(k) = (1-p)^k p on k = 0, 1, ...
  delta(3)         point mass at 3

Exit codes: 0 ok, 1 runtime failure, 2 usage error.";

#[derive(Debug, Parser)]
#[command(
    name = "gwlab",
    version,
    about = "Galton-Watson branching process laboratory",
    after_help = GRAMMAR
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CertificateChoice {
    Subcritical,
    Supercritical,
    Lemma1,
    SkeletonLemma,
    Markov,
    Thinning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Construction {
    Superposition,
    Block,
    Thinning,
    Truncation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    /// (1 - θ/2)δ0 + (θ/2)δ2
    TwoPoint,
    /// poisson(θ)
    Poisson,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo survival curve: CSV columns t, alive_fraction, mean_pop.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        init: u64,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        /// Population above which a path is stopped and counted alive.
        #[arg(long, default_value_t = crate::chain::DEFAULT_POPULATION_CAP)]
        population_cap: u64,
        /// Also write the JSON summary to this file.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Extinction probability q, q^init, and P(τ ≤ t) with its tail bound.
    Extinction {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        init: usize,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Search (N, T) with P^N(Y_T ≥ 2N) > 1/2.
    Criterion {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        n_max: u64,
        #[arg(long, default_value_t = 64)]
        t_max: usize,
        #[arg(long, default_value_t = 16)]
        exact_n_max: u64,
        #[arg(long, default_value_t = 16)]
        exact_t_max: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
    },
    /// Emit one certificate as JSON.
    Certificate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: CertificateChoice,
        /// Growth rate a with 1 < a < m (supercritical, lemma1).
        #[arg(long, default_value_t = 1.25)]
        a: f64,
        /// Initial size n (supercritical) or block size N (others).
        #[arg(long, short = 'n', default_value_t = 1)]
        n: u64,
        #[arg(long, short = 't', default_value_t = 1)]
        t: usize,
        /// Running-maximum level M (thinning).
        #[arg(long, default_value_t = 16)]
        level: usize,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
        /// Generations checked (subcritical).
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
    },
    /// Run a coupling over many seeds and report pathwise violations.
    Couple {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        construction: Construction,
        #[arg(long, default_value_t = 10_000)]
        seeds: u64,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        init: u64,
        #[arg(long, default_value_t = 1)]
        block: u64,
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
        #[arg(long, default_value_t = 3)]
        level: u64,
        #[arg(long, default_value_t = 1_000_000)]
        population_cap: u64,
    },
    /// Survival estimates across a one-parameter family of laws.
    Sweep {
        /// Ignored unless given; the family defines the law.
        #[arg(long, default_value = "delta(1)", hide = true)]
        nu: String,
        #[arg(long, value_enum, default_value_t = Family::TwoPoint)]
        family: Family,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
        #[arg(long, default_value_t = 1)]
        init: u64,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, env = "GWLAB_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<GwError> for CliError {
    fn from(e: GwError) -> Self {
        match e {
            GwError::InvalidLaw(_) | GwError::InvalidParameter(_) | GwError::Precondition(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn law_arg(text: &str) -> CliResult<OffspringLaw> {
    parse_law(text).map_err(CliError::Usage)
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    match out {
        Some(path) => File::create(path)?.write_all(text.as_bytes())?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> CliResult<T> + Send,
) -> CliResult<T> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Usage("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(f),
    }
}

/// Runs the CLI on `args` (including the program name), writing results to
/// `stdout` or `--out` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    return 0;
                }
                _ => 2,
            };
            let _ = writeln!(
                stderr,
                "{}",
                json!({"error": "usage", "message": e.to_string().trim()})
            );
            return code;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "{}", json!({"error": "usage", "message": msg}));
            2
        }
        Err(CliError::Runtime(msg)) => {
            let _ = writeln!(stderr, "{}", json!({"error": "runtime", "message": msg}));
            1
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            common,
            init,
            horizon,
            runs,
            population_cap,
            summary,
        } => cmd_simulate(&common, init, horizon, runs, population_cap, summary, stdout),
        Command::Extinction {
            common,
            init,
            horizon,
            tol,
        } => cmd_extinction(&common, init, horizon, tol, stdout),
        Command::Criterion {
            common,
            n_max,
            t_max,
            exact_n_max,
            exact_t_max,
            runs,
            confidence,
        } => {
            let opts = CriterionOptions {
                n_max,
                t_max,
                exact_n_max,
                exact_t_max,
                force_exact: common.exact,
                cap: common.cap,
                runs,
                confidence,
                seed: common.seed,
                ..Default::default()
            };
            cmd_criterion(&common, &opts, stdout, stderr)
        }
        Command::Certificate {
            common,
            kind,
            a,
            n,
            t,
            level,
            p,
            n_max,
            runs,
        } => {
            let law = law_arg(&common.nu)?;
            let cert = with_threads(common.threads, || {
                Ok(match kind {
                    CertificateChoice::Subcritical => subcritical_decay_check(
                        &law,
                        &Pmf::delta(n as usize, common.cap),
                        n_max,
                        common.cap,
                    )?,
                    CertificateChoice::Supercritical => supercritical_certificate(&law, a, n)?,
                    CertificateChoice::Lemma1 => lemma1_rate(&law, n, a, common.cap)?,
                    CertificateChoice::SkeletonLemma => skeleton_lemma(&law, n, t, common.cap)?,
                    CertificateChoice::Markov => critical_markov_bound(&law, n, t, common.cap)?,
                    CertificateChoice::Thinning => {
                        let opts = PipelineOptions {
                            cap: common.cap,
                            runs: if common.exact { 0 } else { runs },
                            seed: common.seed,
                        };
                        thinning_pipeline(&law, n, t, level, p, &opts)?
                    }
                })
            })?;
            if common.format == Some(Format::Csv) {
                return Err(CliError::Usage("certificates are emitted as JSON only".into()));
            }
            emit(&common.out, stdout, &format!("{}\n", cert.to_json()))
        }
        Command::Couple {
            common,
            construction,
            seeds,
            horizon,
            init,
            block,
            a,
            p,
            level,
            population_cap,
        } => {
            let law = law_arg(&common.nu)?;
            let coupler = Coupler::new(&law)?.with_population_cap(population_cap);
            let summary = with_threads(common.threads, || {
                couple_summary(&coupler, construction, seeds, horizon, init, block, a, p, level, common.seed)
            })?;
            emit(&common.out, stdout, &to_json(&summary))
        }
        Command::Sweep {
            nu: _,
            family,
            from,
            to,
            step,
            init,
            horizon,
            runs,
            confidence,
            seed,
            threads,
            cap,
            format,
            out,
            exact,
        } => {
            let grid = sweep_grid(from, to, step)?;
            if !(confidence > 0.0 && confidence < 1.0) {
                return Err(CliError::Usage(format!("confidence {confidence} not in (0,1)")));
            }
            let rows = with_threads(threads, || {
                grid.iter()
                    .enumerate()
                    .map(|(i, &theta)| {
                        sweep_point(family, theta, init, horizon, runs, confidence, derive_seed(seed, i as u64), cap, exact)
                    })
                    .collect::<CliResult<Vec<_>>>()
            })?;
            let text = match format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut s = String::from("m,survival_estimate,ci_low,ci_high\n");
                    for r in &rows {
                        s.push_str(&format!(
                            "{},{},{},{}\n",
                            fmt_f64(r.m),
                            fmt_f64(r.survival_estimate),
                            fmt_f64(r.ci_low),
                            fmt_f64(r.ci_high)
                        ));
                    }
                    s
                }
                Format::Json => to_json(&rows),
            };
            emit(&out, stdout, &text)
        }
    }
}

#[derive(Debug, Serialize)]
struct SimRow {
    t: usize,
    alive_fraction: f64,
    alive_se: f64,
    mean_pop: Option<f64>,
}

fn cmd_simulate(
    common: &Common,
    init: u64,
    horizon: usize,
    runs: u64,
    population_cap: u64,
    summary_path: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let law = law_arg(&common.nu)?;
    if horizon < 1 {
        return Err(CliError::Usage("--horizon must be >= 1".into()));
    }
    if runs < 1 && !common.exact {
        return Err(CliError::Usage("--runs must be >= 1".into()));
    }
    let (rows, extra) = if common.exact {
        let laws = laws_through(&Pmf::delta(init as usize, common.cap), &law, horizon, common.cap);
        let rows: Vec<SimRow> = laws
            .iter()
            .enumerate()
            .map(|(t, pmf)| SimRow {
                t,
                alive_fraction: 1.0 - pmf.mass_at(0),
                alive_se: 0.0,
                mean_pop: (pmf.tail_mass() == 0.0).then(|| pmf.table_mean()),
            })
            .collect();
        let tail = laws.last().unwrap().tail_mass();
        (rows, json!({"method": "exact", "cap": common.cap, "tail_mass": tail}))
    } else {
        let config = ChainConfig::new(law.clone(), init, horizon)
            .with_seed(common.seed)
            .with_population_cap(population_cap);
        let stats = with_threads(common.threads, || Ok(batch_simulate(&config, runs, None)?))?;
        let rows = (0..=horizon)
            .map(|t| SimRow {
                t,
                alive_fraction: stats.survival_fraction(t),
                alive_se: stats.survival_se(t),
                mean_pop: (stats.observed[t] > 0).then(|| stats.mean_size(t)),
            })
            .collect();
        (
            rows,
            json!({
                "method": "monte-carlo",
                "runs": runs,
                "seed": common.seed,
                "population_cap": population_cap,
                "cap_exceeded": stats.cap_exceeded,
                "tau_histogram": stats.tau_histogram,
            }),
        )
    };
    let summary = json!({
        "law": law.to_string(),
        "mean": law.mean().value,
        "init": init,
        "horizon": horizon,
        "run": extra,
        "rows": rows,
    });
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("t,alive_fraction,mean_pop\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{}\n",
                    r.t,
                    fmt_f64(r.alive_fraction),
                    fmt_f64(r.mean_pop.unwrap_or(f64::NAN))
                ));
            }
            s
        }
        Format::Json => to_json(&summary),
    };
    if let Some(path) = summary_path {
        File::create(path)?.write_all(to_json(&summary).as_bytes())?;
    }
    emit(&common.out, stdout, &text)
}

fn cmd_extinction(
    common: &Common,
    init: usize,
    horizon: usize,
    tol: f64,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let law = law_arg(&common.nu)?;
    let q = extinction_probability(&law, tol)?;
    let q_pow: Vec<f64> = (1..=init.max(1)).map(|n| q.powi(n as i32)).collect();
    let limit = q.powi(init as i32);
    let laws = laws_through(&Pmf::delta(init, common.cap), &law, horizon, common.cap);
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("t,extinction_by,tail_bound,q_pow_init\n");
            for (t, pmf) in laws.iter().enumerate() {
                s.push_str(&format!(
                    "{t},{},{},{}\n",
                    pmf.mass_at(0),
                    pmf.tail_mass(),
                    limit
                ));
            }
            s
        }
        Format::Json => {
            let table: Vec<_> = laws
                .iter()
                .enumerate()
                .map(|(t, pmf)| json!({"t": t, "extinction_by": pmf.mass_at(0), "tail_bound": pmf.tail_mass()}))
                .collect();
            to_json(&json!({
                "law": law.to_string(),
                "q": q,
                "tol": tol,
                "init": init,
                "q_pow": q_pow,
                "cap": common.cap,
                "table": table,
            }))
        }
    };
    emit(&common.out, stdout, &text)
}

fn cmd_criterion(
    common: &Common,
    opts: &CriterionOptions,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<()> {
    let law = law_arg(&common.nu)?;
    if law.mass_at(0) <= 0.0 {
        writeln!(stderr, "warning: ν(0) = 0, the criterion's hypothesis does not hold")?;
    }
    let text = match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let cert: Certificate = with_threads(common.threads, || Ok(criterion_search(&law, opts)?))?;
            writeln!(stderr, "{}", criterion_line(&cert, opts))?;
            format!("{}\n", cert.to_json())
        }
        Format::Csv => {
            let scan = with_threads(common.threads, || Ok(criterion_scan(&law, opts)?))?;
            let mut s = String::from("N,T,exact,value,lower,upper\n");
            for c in &scan.cells {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.n, c.t, c.exact, c.value, c.lower, c.upper
                ));
            }
            s
        }
    };
    emit(&common.out, stdout, &text)
}

fn criterion_line(cert: &Certificate, opts: &CriterionOptions) -> String {
    if cert.passed() {
        let exact = cert.observations.get("exact") == Some(&1.0);
        format!(
            "witness N={} T={} value={} ({})",
            cert.parameters["N"],
            cert.parameters["T"],
            cert.observations["value"],
            if exact {
                "exact".to_string()
            } else {
                format!("lower confidence bound {} at {}", cert.bound_value, opts.confidence)
            }
        )
    } else {
        format!(
            "no witness ≤ ({},{}); max value {}",
            opts.n_max, opts.t_max, cert.bound_value
        )
    }
}

#[derive(Debug, Serialize)]
struct CoupleSummary {
    construction: String,
    law: String,
    seeds: u64,
    horizon: usize,
    master_seed: u64,
    violations: u64,
    first_violation_seed: Option<u64>,
    identical_paths: u64,
    capped_paths: u64,
    lower_extinct: u64,
    upper_extinct: u64,
}

#[allow(clippy::too_many_arguments)]
fn couple_summary(
    coupler: &Coupler,
    construction: Construction,
    seeds: u64,
    horizon: usize,
    init: u64,
    block: u64,
    a: f64,
    p: f64,
    level: u64,
    master: u64,
) -> CliResult<CoupleSummary> {
    use rayon::prelude::*;
    #[derive(Default, Clone, Copy)]
    struct Acc {
        violations: u64,
        first: Option<u64>,
        identical: u64,
        capped: u64,
        lower_extinct: u64,
        upper_extinct: u64,
    }
    let outcome = |i: u64| -> Result<Acc, GwError> {
        let seed = derive_seed(master, i);
        let path = match construction {
            Construction::Superposition => {
                let (x, y, s) = coupler.superposition(horizon, seed)?;
                return Ok(Acc {
                    capped: s.cap_exceeded as u64,
                    lower_extinct: (x.tau.is_some() && y.tau.is_some()) as u64,
                    upper_extinct: s.tau.is_some() as u64,
                    ..Default::default()
                });
            }
            Construction::Block => coupler.block_minorant(block, a, horizon, seed),
            Construction::Thinning => coupler.thinning(p, init, horizon, seed),
            Construction::Truncation => coupler.truncation(level, init, horizon, seed),
        };
        match path {
            Ok(c) => Ok(Acc {
                identical: c.identical() as u64,
                capped: c.upper.cap_exceeded as u64,
                lower_extinct: c.lower.tau.is_some() as u64,
                upper_extinct: c.upper.tau.is_some() as u64,
                ..Default::default()
            }),
            Err(GwError::InvariantViolation(_)) => Ok(Acc {
                violations: 1,
                first: Some(i),
                ..Default::default()
            }),
            Err(e) => Err(e),
        }
    };
    let total = (0..seeds)
        .into_par_iter()
        .map(outcome)
        .try_reduce(Acc::default, |a, b| {
            Ok(Acc {
                violations: a.violations + b.violations,
                first: match (a.first, b.first) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                },
                identical: a.identical + b.identical,
                capped: a.capped + b.capped,
                lower_extinct: a.lower_extinct + b.lower_extinct,
                upper_extinct: a.upper_extinct + b.upper_extinct,
            })
        })?;
    Ok(CoupleSummary {
        construction: format!("{construction:?}").to_lowercase(),
        law: coupler.law().to_string(),
        seeds,
        horizon,
        master_seed: master,
        violations: total.violations,
        first_violation_seed: total.first,
        identical_paths: total.identical,
        capped_paths: total.capped,
        lower_extinct: total.lower_extinct,
        upper_extinct: total.upper_extinct,
    })
}

/// `from, from + step, ..., ≤ to` (inclusive up to rounding).
fn sweep_grid(from: f64, to: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && step.is_finite()) || step <= 0.0 || to < from {
        return Err(CliError::Usage(format!(
            "empty range: from {from} to {to} step {step}"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| from + i as f64 * step).collect())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    m: f64,
    survival_estimate: f64,
    ci_low: f64,
    ci_high: f64,
}

#[allow(clippy::too_many_arguments)]
fn sweep_point(
    family: Family,
    theta: f64,
    init: u64,
    horizon: usize,
    runs: u64,
    confidence: f64,
    seed: u64,
    cap: usize,
    exact: bool,
) -> CliResult<SweepRow> {
    let law = match family {
        Family::TwoPoint => OffspringLaw::two_point(2, theta / 2.0)?,
        Family::Poisson => OffspringLaw::poisson(theta)?,
    };
    let m = law.mean().value;
    if exact {
        let pmf = laws_through(&Pmf::delta(init as usize, cap), &law, horizon, cap)
            .pop()
            .unwrap();
        let extinct = pmf.mass_at(0);
        return Ok(SweepRow {
            m,
            survival_estimate: 1.0 - extinct,
            ci_low: (1.0 - extinct - pmf.tail_mass()).max(0.0),
            ci_high: 1.0 - extinct,
        });
    }
    if runs < 1 {
        return Err(CliError::Usage("--runs must be >= 1".into()));
    }
    let config = ChainConfig::new(law, init, horizon).with_seed(seed);
    let stats = batch_simulate(&config, runs, None)?;
    let est = stats.survival_fraction(horizon);
    let r = hoeffding_radius(runs, (1.0 - confidence) / 2.0);
    Ok(SweepRow {
        m,
        survival_estimate: est,
        ci_low: (est - r).max(0.0),
        ci_high: (est + r).min(1.0),
    })
}
