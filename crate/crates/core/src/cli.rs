//! The `branchlaw` command-line interface.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::dists::{self, LawError, MixedDist};
use crate::kernel::{transform_params, ParamError, Params, RawParams};
use crate::mc::{self, McError, SuiteConfig, CHUNK};
use crate::quadrature::QuadratureConfig;
use crate::sim::{self, RngStream, SimError, DEFAULT_MAX_ATTEMPTS};
use crate::tree::{to_newick, TreeRecord};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "BRANCHLAW_SEED";

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for usage problems (including unknown check names), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Mc(McError::UnknownCheck { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "branchlaw", version, about = "Branch-length and diversity laws of reconstructed birth-death trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate a density and CDF on a grid and write CSV.
    Density(DensityArgs),
    /// Sample reconstructed trees and write Newick or NDJSON.
    Simulate(SimulateArgs),
    /// Run Monte Carlo and numerical checks; exits non-zero on failure.
    Verify(VerifyArgs),
    /// Print expected branch lengths and diversities.
    Expect(ExpectArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RateArgs {
    /// Speciation rate under complete sampling.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Extinction rate under complete sampling (may be negative).
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Raw speciation rate, used together with --mu-hat and --f.
    #[arg(long)]
    pub lambda_hat: Option<f64>,
    #[arg(long)]
    pub mu_hat: Option<f64>,
    /// Probability that an extant species is sampled.
    #[arg(long)]
    pub f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedRates {
    pub raw: Option<RawParams>,
    pub params: Params,
}

impl RateArgs {
    pub fn resolve(&self) -> Result<ResolvedRates, CliError> {
        let direct = self.lambda.is_some() || self.mu.is_some();
        let raw = self.lambda_hat.is_some() || self.mu_hat.is_some() || self.f.is_some();
        match (direct, raw) {
            (true, true) => Err(CliError::Usage(
                "give either --lambda/--mu or --lambda-hat/--mu-hat/--f, not both".into(),
            )),
            (false, false) => Err(CliError::Usage("missing rates: give --lambda (and --mu) or --lambda-hat".into())),
            (true, false) => {
                let lambda = self
                    .lambda
                    .ok_or_else(|| CliError::Usage("--mu needs --lambda".into()))?;
                Ok(ResolvedRates {
                    raw: None,
                    params: Params::new(lambda, self.mu.unwrap_or(0.0))?,
                })
            }
            (false, true) => {
                let lambda_hat = self
                    .lambda_hat
                    .ok_or_else(|| CliError::Usage("--mu-hat/--f need --lambda-hat".into()))?;
                let raw = RawParams::new(lambda_hat, self.mu_hat.unwrap_or(0.0), self.f.unwrap_or(1.0))?;
                Ok(ResolvedRates {
                    raw: Some(raw),
                    params: transform_params(&raw)?,
                })
            }
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioArg {
    GivenN,
    GivenNAge,
    GivenAge,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawArg {
    Pendant,
    Interior,
    SpeciationTime,
    RootEdge,
    Hypoexp,
    Diversity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(format!("grid must look like min:max:points, got {s:?}"));
        };
        let min: f64 = a.parse().map_err(|_| format!("bad grid minimum {a:?}"))?;
        let max: f64 = b.parse().map_err(|_| format!("bad grid maximum {b:?}"))?;
        let points: usize = c.parse().map_err(|_| format!("bad point count {c:?}"))?;
        if points < 2 {
            return Err("grid needs at least 2 points".into());
        }
        if !(min >= 0.0 && max > min && max.is_finite()) {
            return Err(format!("grid needs 0 <= min < max, got {min}:{max}"));
        }
        Ok(Grid { min, max, points })
    }
}

impl Grid {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(move |i| if i + 1 == self.points { self.max } else { self.min + step * i as f64 })
    }
}

#[derive(Args, Debug)]
pub struct DensityArgs {
    #[arg(long, value_enum)]
    pub law: LawArg,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub x1: Option<f64>,
    /// Rank of the speciation event (speciation-time) or number of lineages
    /// (hypoexp).
    #[arg(long)]
    pub k: Option<u64>,
    /// Evaluation grid as min:max:points.
    #[arg(long)]
    pub grid: Grid,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    Newick,
    Ndjson,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub x1: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "newick")]
    pub format: TreeFormat,
    /// Simulate the raw process forward and reject trees whose root age is
    /// not x1 (given-age only).
    #[arg(long)]
    pub rejection: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: u64,
    /// Buffer all trees and write them in id order.
    #[arg(long)]
    pub sorted: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the run manifest; standard error when absent.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Named suite; only "full" exists.
    #[arg(long)]
    pub suite: Option<String>,
    /// Individual checks; may be repeated.
    #[arg(long = "check")]
    pub checks: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leaf count for root_edge_mean.
    #[arg(long)]
    pub n: Option<u64>,
    /// Write the JSON reports here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// List the available checks and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct ExpectArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long, default_value_t = 10)]
    pub n: u64,
    #[arg(long, default_value_t = 1.0)]
    pub x1: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
}

/// Seed from the flag, then the environment, then the operating system.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(rand::rng().random()),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write + Send>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn need<T>(v: Option<T>, flag: &str, why: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{flag} is required {why}")))
}

fn yule_only(p: &Params, what: &str) -> Result<(), CliError> {
    if p.is_yule() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} is only available for mu = 0 (got mu = {})", p.mu)))
    }
}

fn rate_header(r: &ResolvedRates) -> String {
    let mut s = format!("lambda={} mu={}", r.params.lambda, r.params.mu);
    if let Some(raw) = r.raw {
        write!(s, " lambda_hat={} mu_hat={} f={}", raw.lambda_hat, raw.mu_hat, raw.f).unwrap();
    }
    s
}

enum DensityLaw {
    Mixed(MixedDist),
    /// Survival function only; the density column is a central difference.
    Survival(Box<dyn Fn(f64) -> Result<f64, LawError>>, f64),
}

fn density_law(a: &DensityArgs, p: &Params) -> Result<(DensityLaw, String), CliError> {
    use ScenarioArg::*;
    let scenario = a.scenario;
    let mut extra = String::new();
    let law = match (a.law, scenario) {
        (LawArg::Hypoexp, _) => {
            yule_only(p, "the hypoexponential law")?;
            let k = need(a.k, "--k", "for the hypoexponential law")?;
            write!(extra, " k={k}").unwrap();
            DensityLaw::Mixed(dists::hypoexp_dist(k, p)?)
        }
        (_, None) => return Err(CliError::Usage("--scenario is required for this law".into())),
        (LawArg::Pendant, Some(GivenN)) => DensityLaw::Mixed(dists::pendant_dist_given_n(p)),
        (LawArg::Pendant, Some(GivenNAge)) => {
            let n = need(a.n, "--n", "for given-n-age")?;
            let x1 = need(a.x1, "--x1", "for given-n-age")?;
            write!(extra, " n={n} x1={x1}").unwrap();
            DensityLaw::Mixed(dists::pendant_dist_given_n_age(n, x1, p)?)
        }
        (LawArg::Pendant, Some(GivenAge)) => {
            let x1 = need(a.x1, "--x1", "for given-age")?;
            write!(extra, " x1={x1}").unwrap();
            DensityLaw::Mixed(dists::pendant_dist_given_age(x1, p)?)
        }
        (LawArg::Interior, Some(GivenN)) => {
            yule_only(p, "the interior-edge law")?;
            DensityLaw::Mixed(dists::interior_dist_yule(p)?)
        }
        (LawArg::SpeciationTime, Some(GivenNAge)) => {
            let n = need(a.n, "--n", "for speciation times")?;
            let x1 = need(a.x1, "--x1", "for speciation times")?;
            let k = need(a.k, "--k", "for speciation times")?;
            write!(extra, " n={n} x1={x1} k={k}").unwrap();
            DensityLaw::Mixed(dists::speciation_time_dist(k, n, x1, p)?)
        }
        (LawArg::RootEdge, Some(GivenN)) => {
            yule_only(p, "the root-edge law")?;
            let n = need(a.n, "--n", "for the root-edge law")?;
            write!(extra, " n={n}").unwrap();
            DensityLaw::Mixed(dists::root_edge_dist_given_n(n, p)?)
        }
        (LawArg::RootEdge, Some(GivenAge)) => {
            yule_only(p, "the root-edge law")?;
            let x1 = need(a.x1, "--x1", "for given-age")?;
            write!(extra, " x1={x1}").unwrap();
            let p = *p;
            DensityLaw::Survival(Box::new(move |l| dists::root_edge_survival_given_age(l, x1, &p)), x1)
        }
        (LawArg::RootEdge, Some(GivenNAge)) => {
            yule_only(p, "the root-edge law")?;
            let n = need(a.n, "--n", "for given-n-age")?;
            let x1 = need(a.x1, "--x1", "for given-n-age")?;
            write!(extra, " n={n} x1={x1}").unwrap();
            let p = *p;
            DensityLaw::Survival(
                Box::new(move |l| dists::root_edge_survival_given_n_age(l, n, x1, &p)),
                x1,
            )
        }
        (LawArg::Diversity, Some(GivenN)) => {
            yule_only(p, "the diversity law")?;
            let n = need(a.n, "--n", "for the diversity law")?;
            write!(extra, " n={n}").unwrap();
            DensityLaw::Mixed(dists::diversity_dist_given_n(n, p)?)
        }
        (law, Some(sc)) => {
            return Err(CliError::Usage(format!(
                "no closed-form density for law {} under scenario {}",
                law.to_possible_value().unwrap().get_name(),
                sc.to_possible_value().unwrap().get_name()
            )))
        }
    };
    Ok((law, extra))
}

fn fmt_num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn cmd_density(a: &DensityArgs) -> Result<(), CliError> {
    let rates = a.rates.resolve()?;
    let (law, extra) = density_law(a, &rates.params)?;
    let mut w = output(&a.out)?;
    let scenario = a
        .scenario
        .map(|s| s.to_possible_value().unwrap().get_name().to_string())
        .unwrap_or_else(|| "none".into());
    let law_name = a.law.to_possible_value().unwrap().get_name().to_string();
    match law {
        DensityLaw::Mixed(d) => {
            writeln!(w, "# law={law_name} scenario={scenario} {}{extra} atom={}", rate_header(&rates), d.atom_weight())?;
            writeln!(w, "s,pdf,cdf,atom")?;
            for s in a.grid.values() {
                writeln!(w, "{},{},{},0", fmt_num(s), fmt_num(d.density(s)), fmt_num(d.continuous_cdf(s)))?;
            }
            if d.has_atom() {
                let end = d.support_end();
                writeln!(w, "{},,{},{}", fmt_num(end), fmt_num(1.0), fmt_num(d.atom_weight()))?;
            }
        }
        DensityLaw::Survival(surv, end) => {
            writeln!(
                w,
                "# law={law_name} scenario={scenario} {}{extra} pdf=numerical-derivative",
                rate_header(&rates)
            )?;
            writeln!(w, "s,pdf,cdf,atom")?;
            let h = 1e-6 * end;
            for s in a.grid.values() {
                let s_c = s.min(end);
                let cdf = 1.0 - surv(s_c)?;
                let pdf = if s >= end {
                    0.0
                } else {
                    let (lo, hi) = ((s - h).max(0.0), (s + h).min(end));
                    (surv(lo)? - surv(hi)?) / (hi - lo)
                };
                writeln!(w, "{},{},{},0", fmt_num(s), fmt_num(pdf), fmt_num(cdf))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum TreeSource {
    Yule { n: usize },
    GivenNAge { n: usize, x1: f64 },
    GivenAge { x1: f64 },
    Rejection { x1: f64, raw: RawParams, max_attempts: u64 },
}

fn tree_source(a: &SimulateArgs, rates: &ResolvedRates) -> Result<TreeSource, CliError> {
    let p = &rates.params;
    Ok(match a.scenario {
        ScenarioArg::GivenN => {
            if a.rejection {
                return Err(CliError::Usage("--rejection applies to given-age only".into()));
            }
            yule_only(p, "simulation given n")?;
            TreeSource::Yule {
                n: need(a.n, "--n", "for given-n")?,
            }
        }
        ScenarioArg::GivenNAge => {
            if a.rejection {
                return Err(CliError::Usage("--rejection applies to given-age only".into()));
            }
            TreeSource::GivenNAge {
                n: need(a.n, "--n", "for given-n-age")?,
                x1: need(a.x1, "--x1", "for given-n-age")?,
            }
        }
        ScenarioArg::GivenAge => {
            let x1 = need(a.x1, "--x1", "for given-age")?;
            if a.rejection {
                let raw = match rates.raw {
                    Some(raw) => raw,
                    None => RawParams::new(p.lambda, p.mu, 1.0).map_err(|_| {
                        CliError::Usage("--rejection needs non-negative rates; give --lambda-hat/--mu-hat/--f".into())
                    })?,
                };
                TreeSource::Rejection {
                    x1,
                    raw,
                    max_attempts: a.max_attempts,
                }
            } else {
                TreeSource::GivenAge { x1 }
            }
        }
    })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let rates = a.rates.resolve()?;
    let source = tree_source(a, &rates)?;
    let seed = resolve_seed(a.seed)?;
    let p = rates.params;
    let scenario = a.scenario.to_possible_value().unwrap().get_name().to_string();
    let manifest = json!({
        "params": {
            "raw": rates.raw,
            "transformed": { "lambda": p.lambda, "mu": p.mu },
        },
        "scenario": {
            "kind": scenario,
            "n": a.n,
            "x1": a.x1,
            "sampler": if a.rejection { "rejection" } else { "direct" },
        },
        "seed": seed,
        "count": a.reps,
        "chunk_size": CHUNK,
        "format": format!("{:?}", a.format).to_lowercase(),
    });
    let manifest_text = serde_json::to_string_pretty(&manifest)?;
    match &a.manifest {
        Some(path) => std::fs::write(path, manifest_text + "\n")?,
        None => eprintln!("{manifest_text}"),
    }

    let writer = Mutex::new(output(&a.out)?);
    if a.format == TreeFormat::Newick {
        let mut header = format!("[branchlaw simulate seed={seed} scenario={scenario} {}", rate_header(&rates));
        if let Some(n) = a.n {
            write!(header, " n={n}").unwrap();
        }
        if let Some(x1) = a.x1 {
            write!(header, " x1={x1}").unwrap();
        }
        writeln!(writer.lock().unwrap(), "{header} reps={}]", a.reps)?;
    }
    let chunks = a.reps.div_ceil(CHUNK);
    let run_chunk = |c: usize| -> Result<String, CliError> {
        let stream_id = c as u64;
        let mut rng = RngStream::new(seed, stream_id);
        let mut text = String::new();
        let lo = c * CHUNK;
        for id in lo..(lo + CHUNK).min(a.reps) {
            let tree = match source {
                TreeSource::Yule { n } => sim::sample_yule_given_n(n, &p, &mut rng)?,
                TreeSource::GivenNAge { n, x1 } => sim::sample_given_n_age(n, x1, &p, &mut rng)?,
                TreeSource::GivenAge { x1 } => sim::sample_given_age(x1, &p, &mut rng)?,
                TreeSource::Rejection { x1, raw, max_attempts } => {
                    sim::sample_rejection_given_age(x1, &raw, max_attempts, &mut rng)?.tree
                }
            };
            match a.format {
                TreeFormat::Newick => {
                    writeln!(text, "[id={id} seed={seed} stream_id={stream_id}] {}", to_newick(&tree)).unwrap()
                }
                TreeFormat::Ndjson => {
                    let rec = TreeRecord::new(id as u64, &tree, seed, stream_id);
                    writeln!(text, "{}", serde_json::to_string(&rec)?).unwrap();
                }
            }
        }
        Ok(text)
    };
    if a.sorted || chunks == 1 {
        let texts: Vec<String> = (0..chunks).into_par_iter().map(run_chunk).collect::<Result<_, _>>()?;
        let mut w = writer.lock().unwrap();
        for t in texts {
            w.write_all(t.as_bytes())?;
        }
    } else {
        // each chunk is written whole as soon as it is ready
        (0..chunks).into_par_iter().try_for_each(|c| -> Result<(), CliError> {
            let text = run_chunk(c)?;
            writer.lock().unwrap().write_all(text.as_bytes())?;
            Ok(())
        })?;
    }
    writer.into_inner().unwrap().flush()?;
    Ok(())
}

/// Returns whether every check passed.
pub fn cmd_verify(a: &VerifyArgs) -> Result<bool, CliError> {
    if a.list {
        for c in mc::CHECKS {
            println!("{c}");
        }
        return Ok(true);
    }
    let mut names = a.checks.clone();
    match a.suite.as_deref() {
        Some("full") => names.push("full".into()),
        Some(other) => {
            return Err(McError::UnknownCheck {
                name: other.into(),
                valid: mc::CHECKS.to_vec(),
            }
            .into())
        }
        None if names.is_empty() => names.push("full".into()),
        None => {}
    }
    let seed = resolve_seed(a.seed)?;
    eprintln!("seed = {seed}, reps = {}", a.reps);
    let cfg = SuiteConfig {
        seed,
        reps: a.reps,
        n: a.n,
    };
    let reports = mc::verify_suite(&names, &cfg)?;
    for r in &reports {
        eprintln!("{}", r.summary());
    }
    let mut w = output(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &reports)?;
    writeln!(w)?;
    w.flush()?;
    Ok(reports.iter().all(|r| r.passed()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpectRow {
    pub quantity: String,
    pub value: Option<f64>,
    pub note: Option<String>,
}

pub fn expectation_table(p: &Params, n: u64, x1: f64) -> Result<Vec<ExpectRow>, CliError> {
    let mut rows = Vec::new();
    let mut push = |q: String, r: Result<f64, LawError>| {
        let (value, note) = match r {
            Ok(v) => (Some(v), None),
            Err(LawError::RequiresYule { .. }) => (None, Some("pure birth only".to_string())),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(ExpectRow { quantity: q, value, note });
    };
    push("E[pendant edge | n]".into(), Ok(dists::pendant_mean_given_n(p)));
    push(format!("E[pendant edge | n={n}, x1={x1}]"), dists::pendant_mean_given_n_age(n, x1, p));
    push(format!("E[pendant edge | x1={x1}]"), dists::pendant_mean_given_age(x1, p));
    push(format!("E[root edge | n={n}]"), dists::root_edge_mean_given_n(n, p));
    push(format!("E[root edge | x1={x1}]"), dists::root_edge_mean_given_age(x1, p));
    push(format!("E[diversity | n={n}]"), dists::diversity_mean_given_n(n, p));
    push(format!("E[diversity | n={n}, x1={x1}]"), dists::diversity_mean_given_n_age(n, x1, p));
    push(format!("E[diversity | x1={x1}]"), dists::diversity_mean_given_age(x1, p));
    push(
        "c = lim lambda E[root edge | n, x1] (lambda = ln(n/2)/x1)".into(),
        dists::root_edge_limit_constant(&QuadratureConfig::tight()),
    );
    Ok(rows)
}

pub fn cmd_expect(a: &ExpectArgs) -> Result<(), CliError> {
    let rates = a.rates.resolve()?;
    let rows = expectation_table(&rates.params, a.n, a.x1)?;
    match a.format {
        TableFormat::Json => {
            let out = json!({ "params": rates, "n": a.n, "x1": a.x1, "rows": rows });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        TableFormat::Text => {
            println!("# {}", rate_header(&rates));
            let width = rows.iter().map(|r| r.quantity.len()).max().unwrap_or(0);
            for r in &rows {
                match (r.value, &r.note) {
                    (Some(v), _) => println!("{:width$}  {v:.10}", r.quantity),
                    (None, Some(note)) => println!("{:width$}  n/a ({note})", r.quantity),
                    (None, None) => println!("{:width$}  n/a", r.quantity),
                }
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Density(a) => cmd_density(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Expect(a) => cmd_expect(a).map(|_| true),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
