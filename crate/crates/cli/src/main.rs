//! Command-line front end for spectral collapse monitoring.
//!
//! `sigma monitor` ingests a checkpoint manifest (or a precomputed drift
//! table), computes per-checkpoint envelope and size-corrected log-det
//! metrics, and reports drifts against the baseline with least-squares
//! slopes.  `sigma estimate` extrapolates one observed block to its corpus
//! with a CLT confidence interval.  `sigma verify` replays the randomized
//! verification suites.  `sigma proxies` computes lexical diversity and
//! concentration statistics over tokenized corpora.  `sigma sim` drives the
//! synthetic collapse generator through the same monitoring path and can
//! emit its sampled blocks as a replayable manifest.
//!
//! Exit codes: 0 success, 1 verification property violated, 2 bad inputs or
//! flags, 3 numerical breakdown (factorization failure after jitter
//! escalation).  Reports are deterministic for fixed inputs, flags, and
//! seed; `--no-timestamp` removes the only clock-dependent field.

mod manifest;
mod report;

use std::collections::BTreeSet;
use std::fs;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};
use sigma_core::bounds::{self, BoundsError, ScalingEstimate};
use sigma_core::gram::{self, io as gram_io, GramSummary, N_TOTAL_UNKNOWN};
use sigma_core::proxies::{self, TokenizedCorpus};
use sigma_core::sigma_ub::{self, DriftPoint, DriftSeries, DriftSummary, MonitorConfig, MonitorError};
use sigma_core::simgen::{self, CollapseSchedule, CovarianceModel, ScheduleMode, SimError, SuiteOutcome};

use manifest::ConfigOverrides;
use report::ReportBuilder;

#[derive(Parser)]
#[command(
    name = "sigma",
    version,
    about = "Gram-spectrum collapse monitoring for embedding corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diagnose a checkpoint series: per-checkpoint metrics, drifts, slopes
    Monitor(MonitorArgs),
    /// Extrapolate one observed block to its corpus with a confidence interval
    Estimate(EstimateArgs),
    /// Run a randomized verification suite
    Verify(VerifyArgs),
    /// Lexical diversity and concentration proxies over a tokenized corpus
    Proxies(ProxiesArgs),
    /// Sample a scheduled covariance collapse and monitor it
    Sim(SimArgs),
}

#[derive(Args)]
struct MonitorArgs {
    /// Checkpoint manifest (JSON)
    #[arg(long, required_unless_present = "from_drift_table", conflicts_with = "from_drift_table")]
    manifest: Option<PathBuf>,
    /// Replay a per-generation drift table (generation,delta_u,delta_g)
    #[arg(long)]
    from_drift_table: Option<PathBuf>,
    /// Log-det shift δ
    #[arg(long)]
    delta: Option<f64>,
    /// Per-column energy cap ρ
    #[arg(long)]
    rho: Option<f64>,
    /// Confidence level parameter α
    #[arg(long)]
    alpha: Option<f64>,
    /// Subsample every checkpoint to this many observed columns
    #[arg(long)]
    n_observed: Option<u64>,
    /// Baseline checkpoint index
    #[arg(long)]
    baseline: Option<u64>,
    /// Subsampling seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoints ingested in parallel
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Attach a scaling estimate per checkpoint
    #[arg(long)]
    estimate: bool,
    /// Write the JSON report here ("-" for stdout)
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the drift series as CSV here
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write a line chart of both drift tracks here
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Omit the timestamp so identical runs emit identical bytes
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Embedding file (CSV or binary)
    file: PathBuf,
    /// Log-det shift δ
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Confidence level parameter α
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Corpus size the block was drawn from; omit if unknown
    #[arg(long)]
    n_total: Option<u64>,
    /// Also print the observed-column count needed for this CI half-width
    #[arg(long)]
    epsilon: Option<f64>,
    /// Write the JSON report here ("-" for stdout)
    #[arg(long)]
    json: Option<PathBuf>,
    /// Omit the timestamp so identical runs emit identical bytes
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    /// Subset-sum determinant identity on integer matrices
    Cb,
    /// Deterministic sandwich with the exact tail eigenvalue
    Thm1,
    /// Scaling-law residuals against the allowance
    Thm2,
    /// Confidence interval coverage and standardized residuals
    Thm3,
    /// Flatness of the rescaled inverse-Gram deviation
    Rate,
    /// Budget-gap bound between loose and tight envelopes
    Gap,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Cb => "cb",
            Suite::Thm1 => "thm1",
            Suite::Thm2 => "thm2",
            Suite::Thm3 => "thm3",
            Suite::Rate => "rate",
            Suite::Gap => "gap",
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Which property suite to run
    #[arg(value_enum)]
    suite: Suite,
    /// Trial count; defaults depend on the suite
    #[arg(long)]
    trials: Option<u64>,
    /// Base seed; every trial derives from it deterministically
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence level parameter α (coverage suite)
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct ProxiesArgs {
    /// Tokenized corpus, one document per line, optional [bucket] prefix
    corpus: PathBuf,
    /// n-gram order
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Bucket count exponent for the hashed concentration index
    #[arg(long, default_value_t = 20)]
    hash_bits: u32,
    /// Two numeric series files: print their Pearson and Spearman correlation
    #[arg(long, num_args = 2, value_names = ["SERIES_A", "SERIES_B"])]
    correlate: Option<Vec<PathBuf>>,
    /// Write the JSON report here ("-" for stdout)
    #[arg(long)]
    json: Option<PathBuf>,
    /// Omit the timestamp so identical runs emit identical bytes
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Damp the base spectrum once per generation
    Restart,
    /// Compound the damping factor across generations
    Carryover,
}

#[derive(Args)]
struct SimArgs {
    /// Collapse protocol
    #[arg(long, value_enum, default_value_t = Mode::Carryover)]
    mode: Mode,
    /// Per-generation contraction factor in (0, 1]
    #[arg(long, default_value_t = 0.9)]
    factor: f64,
    /// Generations after the baseline
    #[arg(long, default_value_t = 20)]
    generations: u32,
    /// Comma-separated covariance eigenvalues
    #[arg(long, default_value = "4,2,1,0.5,0.25")]
    spectrum: String,
    /// Lower clamp on scheduled eigenvalues
    #[arg(long, default_value_t = 0.0)]
    floor: f64,
    /// Observed columns per generation
    #[arg(long, default_value_t = 2000)]
    n_observed: u64,
    /// Corpus size per generation
    #[arg(long, default_value_t = 10000)]
    n_total: u64,
    /// Log-det shift δ
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Confidence level parameter α
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Per-column energy cap ρ; default is 4x the spectrum sum, which makes
    /// clipping negligible
    #[arg(long)]
    rho: Option<f64>,
    /// Sampling seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the sampled blocks and a replayable manifest into this directory
    #[arg(long)]
    emit_dir: Option<PathBuf>,
    /// Write the JSON report here ("-" for stdout)
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the drift series as CSV here
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write a line chart of both drift tracks here
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Omit the timestamp so identical runs emit identical bytes
    #[arg(long)]
    no_timestamp: bool,
}

/// Failure classified by exit code: 1 property violation, 2 bad input,
/// 3 numerical breakdown.
enum Failure {
    Violation(String),
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    fn numerical(e: impl Into<anyhow::Error>) -> Self {
        Failure::Numerical(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn monitor_failure(e: MonitorError) -> Failure {
    match e {
        MonitorError::Metric { .. } => Failure::numerical(e),
        _ => Failure::usage(e),
    }
}

fn bounds_failure(e: BoundsError) -> Failure {
    match e {
        BoundsError::SingularCovariance | BoundsError::Linalg(_) => Failure::numerical(e),
        _ => Failure::usage(e),
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::BadModel(_) | SimError::BadSchedule(_) | SimError::BadParams(_)
        | SimError::TooLarge { .. } => Failure::usage(e),
        SimError::Gram(inner) => Failure::usage(inner),
        SimError::Bounds(inner) => bounds_failure(inner),
        SimError::Monitor(inner) => monitor_failure(inner),
        SimError::Linalg(_) => Failure::numerical(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Monitor(args) => cmd_monitor(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Proxies(args) => cmd_proxies(args),
        Command::Sim(args) => cmd_sim(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
    }
}

/// Human summary printed unless the JSON report itself goes to stdout.
fn wants_stdout_json(json: &Option<PathBuf>) -> bool {
    json.as_deref() == Some(Path::new("-"))
}

fn emit_report(value: &Value, json: &Option<PathBuf>) -> CmdResult {
    match json {
        None => Ok(()),
        Some(path) if path == Path::new("-") => {
            report::write_json(value, None).map_err(Failure::usage)
        }
        Some(path) => report::write_json(value, Some(path)).map_err(Failure::usage),
    }
}

fn write_series_artifacts(
    points: &[DriftPoint],
    csv: &Option<PathBuf>,
    svg: &Option<PathBuf>,
) -> CmdResult {
    if let Some(path) = csv {
        fs::write(path, report::drift_csv(points))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::usage)?;
    }
    if let Some(path) = svg {
        fs::write(path, report::drift_svg(points))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::usage)?;
    }
    Ok(())
}

fn print_drift_summary(summary: &DriftSummary, points: usize, quiet: bool) {
    if quiet {
        return;
    }
    println!("drift points: {points}");
    println!(
        "U_LLN,cov: final drift {:+.6}, OLS slope {:+.6}",
        summary.final_drift_track2, summary.ols_slope_track2
    );
    println!(
        "G_KF:      final drift {:+.6}, OLS slope {:+.6}",
        summary.final_drift_track1, summary.ols_slope_track1
    );
}

fn series_summary(series: &DriftSeries) -> DriftSummary {
    DriftSummary {
        ols_slope_track1: series.ols_slope_track1,
        ols_slope_track2: series.ols_slope_track2,
        final_drift_track1: series.final_drift_track1,
        final_drift_track2: series.final_drift_track2,
    }
}

fn cmd_monitor(args: MonitorArgs) -> CmdResult {
    if let Some(table) = &args.from_drift_table {
        return monitor_drift_table(&args, table);
    }
    let manifest_path = args.manifest.clone().expect("clap enforces the source group");
    let manifest = manifest::load_manifest(&manifest_path).map_err(Failure::Usage)?;
    let flag_overrides = ConfigOverrides {
        delta: args.delta,
        rho: args.rho,
        alpha: args.alpha,
        n_observed: args.n_observed,
        baseline: args.baseline,
    };
    let mut config = manifest.overrides.resolve(&flag_overrides);
    let pinned_n = manifest.overrides.pins_n_observed(&flag_overrides);
    config.validate().map_err(Failure::usage)?;

    let ingested = ingest_parallel(&manifest.entries, &config, &args, pinned_n)?;
    let mut summaries = Vec::with_capacity(ingested.len());
    let mut estimates = Vec::with_capacity(ingested.len());
    for item in ingested {
        summaries.push(item.summary);
        if let Some(est) = item.estimate {
            estimates.push(est);
        }
    }
    if !pinned_n {
        config.n_observed_target = summaries[0].n_observed;
    }
    let series = sigma_ub::monitor_series(&summaries, &config).map_err(monitor_failure)?;
    let summary = series_summary(&series);

    let mut input_paths: Vec<&Path> = vec![manifest.path.as_path()];
    input_paths.extend(manifest.entries.iter().map(|e| e.path.as_path()));
    let mut builder = ReportBuilder::new("monitor", args.no_timestamp)
        .config(&config)
        .inputs(&input_paths)
        .map_err(Failure::usage)?
        .checkpoints(&series.metrics)
        .drifts(&series.points)
        .summary(&summary);
    if args.estimate {
        let list: Vec<Value> = series
            .metrics
            .iter()
            .zip(&estimates)
            .map(|(m, est)| {
                let mut map = Map::new();
                map.insert("checkpoint".to_string(), Value::from(m.checkpoint));
                map.insert("estimate".to_string(), report::estimate_value(est));
                Value::Object(map)
            })
            .collect();
        builder = builder.insert("estimates", Value::Array(list));
    }
    emit_report(&builder.finish(), &args.json)?;
    write_series_artifacts(&series.points, &args.csv, &args.svg)?;
    print_drift_summary(&summary, series.points.len(), wants_stdout_json(&args.json));
    Ok(())
}

fn monitor_drift_table(args: &MonitorArgs, table: &Path) -> CmdResult {
    let file = File::open(table)
        .with_context(|| format!("opening drift table {}", table.display()))
        .map_err(Failure::usage)?;
    let points = sigma_ub::read_drift_table(BufReader::new(file))
        .with_context(|| format!("parsing drift table {}", table.display()))
        .map_err(Failure::usage)?;
    let summary = sigma_ub::summarize_drifts(&points);
    let builder = ReportBuilder::new("monitor", args.no_timestamp)
        .inputs(&[table])
        .map_err(Failure::usage)?
        .drifts(&points)
        .summary(&summary);
    emit_report(&builder.finish(), &args.json)?;
    write_series_artifacts(&points, &args.csv, &args.svg)?;
    print_drift_summary(&summary, points.len(), wants_stdout_json(&args.json));
    Ok(())
}

struct Ingested {
    summary: GramSummary,
    estimate: Option<ScalingEstimate>,
}

/// Loads, subsamples, and summarizes all checkpoints, fanning the work out
/// over `--jobs` threads.  Results and errors are collected by checkpoint
/// index, so the outcome is identical for any thread count.
fn ingest_parallel(
    entries: &[manifest::ManifestEntry],
    config: &MonitorConfig,
    args: &MonitorArgs,
    pinned_n: bool,
) -> Result<Vec<Ingested>, Failure> {
    if args.jobs == 0 {
        return Err(Failure::usage(anyhow!("--jobs must be at least 1")));
    }
    let jobs = args.jobs.min(entries.len());
    let slots: Vec<Mutex<Option<Result<Ingested, Failure>>>> =
        (0..entries.len()).map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= entries.len() {
                    break;
                }
                let outcome = ingest_one(&entries[i], config, args, pinned_n);
                *slots[i].lock().expect("slot lock") = Some(outcome);
            });
        }
    });
    let mut out = Vec::with_capacity(entries.len());
    for slot in slots {
        out.push(slot.into_inner().expect("slot lock").expect("every slot filled")?);
    }
    Ok(out)
}

fn ingest_one(
    entry: &manifest::ManifestEntry,
    config: &MonitorConfig,
    args: &MonitorArgs,
    pinned_n: bool,
) -> Result<Ingested, Failure> {
    let label = format!("checkpoint {} ({})", entry.checkpoint, entry.path.display());
    let mut block = manifest::load_block(&entry.path)
        .with_context(|| label.clone())
        .map_err(Failure::usage)?;
    if pinned_n {
        block = manifest::subsample(block, config.n_observed_target, args.seed, entry.checkpoint)
            .with_context(|| label.clone())
            .map_err(Failure::usage)?;
    }
    let summary = gram::accumulate(&block, config.energy_cap, entry.n_total, entry.checkpoint)
        .map_err(|e| Failure::usage(anyhow!(e).context(label.clone())))?;
    let estimate = if args.estimate {
        let sigma = bounds::estimate_sigma(&block)
            .map_err(|e| annotate_bounds(e, &label))?;
        Some(
            bounds::scaling_estimate(&summary, sigma, config.alpha, config.delta)
                .map_err(|e| annotate_bounds(e, &label))?,
        )
    } else {
        None
    };
    Ok(Ingested { summary, estimate })
}

fn annotate_bounds(e: BoundsError, label: &str) -> Failure {
    match bounds_failure(e) {
        Failure::Usage(err) => Failure::Usage(err.context(label.to_string())),
        Failure::Numerical(err) => Failure::Numerical(err.context(label.to_string())),
        other => other,
    }
}

fn cmd_estimate(args: EstimateArgs) -> CmdResult {
    let block = manifest::load_block(&args.file).map_err(Failure::Usage)?;
    let n_total = match args.n_total {
        Some(t) => {
            if t < block.count() as u64 {
                return Err(Failure::usage(anyhow!(
                    "--n-total {t} is smaller than the {} observed columns",
                    block.count()
                )));
            }
            t
        }
        None => N_TOTAL_UNKNOWN,
    };
    let summary = simgen::summarize_block(&block, n_total, 0).map_err(sim_failure)?;
    let sigma_hat = bounds::estimate_sigma(&block).map_err(bounds_failure)?;
    let estimate = bounds::scaling_estimate(&summary, sigma_hat, args.alpha, args.delta)
        .map_err(bounds_failure)?;
    let required = match args.epsilon {
        Some(eps) => Some((
            eps,
            estimate.required_n_observed_for(eps).map_err(bounds_failure)?,
        )),
        None => None,
    };

    let quiet = wants_stdout_json(&args.json);
    if !quiet {
        println!(
            "observed block: m = {}, n_observed = {}",
            summary.dim(),
            estimate.n_observed
        );
        println!(
            "log det(G_A + δI) = {:.6} (δ used: {:e})",
            estimate.observed_logdet, estimate.delta_used
        );
        println!("σ̂ = {:.6}", estimate.sigma_hat);
        match (estimate.l_hat, estimate.interval()) {
            (Some(l), Some((lo, hi))) => {
                println!(
                    "L̂ = {l:.6} ± {:.6} (α = {}), interval [{lo:.6}, {hi:.6}]",
                    estimate.ci_half_width, estimate.alpha
                );
            }
            _ => {
                println!(
                    "corpus size unknown: no extrapolation; half-width at 1/√n_A scale = {:.6}",
                    estimate.ci_half_width
                );
            }
        }
        if let Some((eps, n)) = required {
            println!("observed columns for half-width ≤ {eps}: {n}");
        }
    }

    if args.json.is_some() {
        let mut builder = ReportBuilder::new("estimate", args.no_timestamp)
            .inputs(&[args.file.as_path()])
            .map_err(Failure::usage)?
            .insert("estimate", report::estimate_value(&estimate));
        if let Some((eps, n)) = required {
            let mut map = Map::new();
            map.insert("epsilon".to_string(), report::real(eps));
            map.insert("n_observed".to_string(), Value::from(n));
            builder = builder.insert("required_sample_size", Value::Object(map));
        }
        emit_report(&builder.finish(), &args.json)?;
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let outcome: SuiteOutcome = match args.suite {
        Suite::Cb => simgen::verify_cauchy_binet(args.trials.unwrap_or(200), args.seed),
        Suite::Thm1 => {
            simgen::verify_deterministic_sandwich(args.trials.unwrap_or(1000), args.seed)
        }
        Suite::Thm2 => simgen::verify_scaling_law(args.trials.unwrap_or(200), args.seed),
        Suite::Thm3 => {
            simgen::verify_coverage(args.trials.unwrap_or(500), args.alpha, args.seed)
        }
        Suite::Rate => {
            let trials = args.trials.unwrap_or(50);
            let trials = u32::try_from(trials)
                .map_err(|_| Failure::usage(anyhow!("--trials {trials} is out of range")))?;
            simgen::verify_deviation_rate(trials, args.seed)
        }
        Suite::Gap => simgen::verify_gap_bound(args.trials.unwrap_or(1000), args.seed),
    }
    .map_err(sim_failure)?;
    println!(
        "suite {}: {} trials, {} violations; {}",
        outcome.suite, outcome.trials, outcome.violations, outcome.detail
    );
    if outcome.passed {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Violation(format!(
            "FAIL: reproduce with: sigma verify {} --trials {} --seed {}",
            args.suite.name(),
            outcome.trials,
            outcome.seed
        )))
    }
}

fn parse_series(path: &Path) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading series {}", path.display()))?;
    let mut values = Vec::new();
    for token in text.split_whitespace() {
        let value: f64 = token
            .parse()
            .with_context(|| format!("bad number {token:?} in {}", path.display()))?;
        values.push(value);
    }
    Ok(values)
}

fn cmd_proxies(args: ProxiesArgs) -> CmdResult {
    let file = File::open(&args.corpus)
        .with_context(|| format!("opening corpus {}", args.corpus.display()))
        .map_err(Failure::usage)?;
    let corpus = proxies::read_corpus(BufReader::new(file))
        .with_context(|| format!("parsing corpus {}", args.corpus.display()))
        .map_err(Failure::usage)?;

    let measure = |c: &TokenizedCorpus| -> Result<(proxies::ProxyStats, proxies::ProxyStats), Failure> {
        let exact = proxies::distinct_n(c, args.n).map_err(Failure::usage)?;
        let hashed = proxies::hashed_hhi(c, args.n, args.hash_bits).map_err(Failure::usage)?;
        Ok((exact, hashed))
    };
    let (overall_exact, overall_hashed) = measure(&corpus)?;

    let buckets: BTreeSet<String> = corpus
        .labels()
        .iter()
        .flatten()
        .cloned()
        .collect();
    let mut bucket_stats = Vec::new();
    for bucket in &buckets {
        let sub = corpus.filter_by_label(bucket);
        if sub.is_empty() {
            continue;
        }
        let (exact, hashed) = measure(&sub)?;
        bucket_stats.push((bucket.clone(), exact, hashed));
    }

    let correlation = match &args.correlate {
        Some(paths) => {
            let a = parse_series(&paths[0]).map_err(Failure::usage)?;
            let b = parse_series(&paths[1]).map_err(Failure::usage)?;
            let (pearson, spearman) =
                proxies::proxy_correlations(&a, &b).map_err(Failure::usage)?;
            Some((pearson, spearman))
        }
        None => None,
    };

    let quiet = wants_stdout_json(&args.json);
    if !quiet {
        let describe = |tag: &str, exact: &proxies::ProxyStats, hashed: &proxies::ProxyStats| {
            println!(
                "{tag}: {}-grams {} (unique {}), distinct-{} = {:.6}, hhi = {:.6e}, \
                 hashed-hhi({} bits) = {:.6e}",
                exact.n,
                exact.total_ngrams,
                exact.unique_ngrams,
                exact.n,
                exact.distinct_n,
                exact.hhi,
                args.hash_bits,
                hashed.hhi
            );
        };
        describe("overall", &overall_exact, &overall_hashed);
        for (bucket, exact, hashed) in &bucket_stats {
            describe(&format!("bucket {bucket}"), exact, hashed);
        }
        if let Some((pearson, spearman)) = correlation {
            println!("correlation: pearson = {pearson:.6}, spearman = {spearman:.6}");
        }
    }

    if args.json.is_some() {
        let mut input_paths: Vec<&Path> = vec![args.corpus.as_path()];
        if let Some(paths) = &args.correlate {
            input_paths.extend(paths.iter().map(PathBuf::as_path));
        }
        let mut builder = ReportBuilder::new("proxies", args.no_timestamp)
            .inputs(&input_paths)
            .map_err(Failure::usage)?
            .insert(
                "overall",
                report::proxy_value(&overall_exact, &overall_hashed, args.hash_bits),
            );
        let mut bucket_map = Map::new();
        for (bucket, exact, hashed) in &bucket_stats {
            bucket_map.insert(
                bucket.clone(),
                report::proxy_value(exact, hashed, args.hash_bits),
            );
        }
        builder = builder.insert("buckets", Value::Object(bucket_map));
        if let Some((pearson, spearman)) = correlation {
            let mut map = Map::new();
            map.insert("pearson".to_string(), report::real(pearson));
            map.insert("spearman".to_string(), report::real(spearman));
            builder = builder.insert("correlation", Value::Object(map));
        }
        emit_report(&builder.finish(), &args.json)?;
    }
    Ok(())
}

fn parse_spectrum(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad eigenvalue {t:?} in --spectrum"))
        })
        .collect()
}

fn cmd_sim(args: SimArgs) -> CmdResult {
    let eigenvalues = parse_spectrum(&args.spectrum).map_err(Failure::usage)?;
    let model =
        CovarianceModel::diagonal(eigenvalues, args.seed).map_err(sim_failure)?;
    let schedule = CollapseSchedule {
        mode: match args.mode {
            Mode::Restart => ScheduleMode::Restart,
            Mode::Carryover => ScheduleMode::Carryover,
        },
        contraction_factor: args.factor,
        generations: args.generations,
        floor: args.floor,
    };
    let rho = args.rho.unwrap_or(4.0 * model.expected_energy());
    let config = MonitorConfig {
        delta: args.delta,
        energy_cap: rho,
        alpha: args.alpha,
        n_observed_target: args.n_observed,
        baseline_checkpoint: 0,
    };
    let series = match &args.emit_dir {
        None => run_collapse(&model, &schedule, &args, &config)?,
        Some(dir) => emit_and_monitor(&model, &schedule, &args, &config, dir)?,
    };
    let summary = series_summary(&series);

    let mut model_map = Map::new();
    model_map.insert(
        "spectrum".to_string(),
        Value::Array(model.eigenvalues().iter().map(|&l| report::real(l)).collect()),
    );
    model_map.insert(
        "mode".to_string(),
        Value::from(match args.mode {
            Mode::Restart => "restart",
            Mode::Carryover => "carryover",
        }),
    );
    model_map.insert("factor".to_string(), report::real(args.factor));
    model_map.insert("generations".to_string(), Value::from(args.generations));
    model_map.insert("floor".to_string(), report::real(args.floor));
    model_map.insert("n_total".to_string(), Value::from(args.n_total));
    model_map.insert("seed".to_string(), Value::from(args.seed));
    let builder = ReportBuilder::new("sim", args.no_timestamp)
        .config(&config)
        .insert("schedule", Value::Object(model_map))
        .checkpoints(&series.metrics)
        .drifts(&series.points)
        .summary(&summary);
    emit_report(&builder.finish(), &args.json)?;
    write_series_artifacts(&series.points, &args.csv, &args.svg)?;
    print_drift_summary(&summary, series.points.len(), wants_stdout_json(&args.json));
    Ok(())
}

fn run_collapse(
    model: &CovarianceModel,
    schedule: &CollapseSchedule,
    args: &SimArgs,
    config: &MonitorConfig,
) -> Result<DriftSeries, Failure> {
    simgen::run_collapse_sim(model, schedule, args.n_total, args.n_observed as usize, config)
        .map_err(sim_failure)
}

/// Samples the same blocks the in-memory run would, but writes each one to
/// disk along with a manifest, so `sigma monitor --manifest` replays the
/// run bit for bit.
fn emit_and_monitor(
    model: &CovarianceModel,
    schedule: &CollapseSchedule,
    args: &SimArgs,
    config: &MonitorConfig,
    dir: &Path,
) -> Result<DriftSeries, Failure> {
    schedule.validate().map_err(sim_failure)?;
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::usage)?;
    let mut summaries = Vec::with_capacity(schedule.generations as usize + 1);
    let mut checkpoint_list = Vec::new();
    for g in 0..=schedule.generations {
        let spectrum = schedule.spectrum_at(model.eigenvalues(), g);
        let scheduled = model.with_spectrum(spectrum).map_err(sim_failure)?;
        let block = simgen::sample_block_capped(
            &scheduled,
            args.n_observed as usize,
            u64::from(g),
            config.energy_cap,
        )
        .map_err(sim_failure)?;
        let name = format!("gen{g:04}.csv");
        let path = dir.join(&name);
        let mut file = File::create(&path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(Failure::usage)?;
        gram_io::write_csv(&mut file, &block)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::usage)?;
        let mut entry = Map::new();
        entry.insert("checkpoint".to_string(), Value::from(u64::from(g)));
        entry.insert("path".to_string(), Value::from(name));
        entry.insert("n_total".to_string(), Value::from(args.n_total));
        checkpoint_list.push(Value::Object(entry));
        summaries.push(
            gram::accumulate(&block, config.energy_cap, args.n_total, u64::from(g))
                .map_err(|e| Failure::usage(anyhow!(e).context(format!("generation {g}"))))?,
        );
    }
    let mut config_map = Map::new();
    config_map.insert("delta".to_string(), report::real(config.delta));
    config_map.insert("rho".to_string(), report::real(config.energy_cap));
    config_map.insert("alpha".to_string(), report::real(config.alpha));
    config_map.insert("n_observed".to_string(), Value::from(config.n_observed_target));
    config_map.insert("baseline".to_string(), Value::from(config.baseline_checkpoint));
    let mut manifest_map = Map::new();
    manifest_map.insert("schema".to_string(), Value::from(1u64));
    manifest_map.insert("config".to_string(), Value::Object(config_map));
    manifest_map.insert("checkpoints".to_string(), Value::Array(checkpoint_list));
    let manifest_path = dir.join("manifest.json");
    report::write_json(&Value::Object(manifest_map), Some(&manifest_path))
        .map_err(Failure::usage)?;
    if !wants_stdout_json(&args.json) {
        println!(
            "wrote {} embedding files and manifest.json to {}",
            schedule.generations + 1,
            dir.display()
        );
    }
    sigma_ub::monitor_series(&summaries, config).map_err(monitor_failure)
}
