//! Acceptance checks: one test per criterion. Each pins its tolerances and
//! runtime budget inline and fails with the measured numbers, so a red line
//! here identifies exactly which guarantee broke and by how much.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use sigma_core::bounds;
use sigma_core::gram;
use sigma_core::linalg::{self, Spectrum};
use sigma_core::proxies::{self, TokenizedCorpus};
use sigma_core::rng::CounterRng;
use sigma_core::sigma_ub::{self, MonitorConfig};
use sigma_core::simgen::{self, CollapseSchedule, CovarianceModel, ScheduleMode};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn within(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:.2?}, budget {budget:.2?}"
    );
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[test]
fn c01_subset_determinant_identity_on_integer_matrices() {
    let start = Instant::now();
    let outcome = simgen::verify_cauchy_binet(200, 11).unwrap();
    assert_eq!(
        outcome.violations, 0,
        "{} of {} integer instances mismatched beyond 1e-9 relative ({})",
        outcome.violations, outcome.trials, outcome.detail
    );
    assert!(outcome.worst <= 1e-9, "worst relative mismatch {}", outcome.worst);
    within(start.elapsed(), Duration::from_secs(5), "criterion 1");
}

#[test]
fn c02_deterministic_sandwich_with_exact_tail_eigenvalue() {
    let start = Instant::now();
    let outcome = simgen::verify_deterministic_sandwich(1000, 22).unwrap();
    assert_eq!(
        outcome.violations, 0,
        "sandwich violated at slack 1e-9: {}",
        outcome.detail
    );
    within(start.elapsed(), Duration::from_secs(30), "criterion 2");
}

#[test]
fn c03_confidence_interval_coverage_and_residuals() {
    let start = Instant::now();
    let outcome = simgen::verify_coverage(500, 0.05, 33).unwrap();
    assert!(
        outcome.passed,
        "coverage window [0.91, 0.985], residual mean within 0.15, sd within \
         [0.85, 1.15] not met: {}",
        outcome.detail
    );
    within(start.elapsed(), Duration::from_secs(180), "criterion 3");
}

#[test]
fn c04_sigma_hat_matches_chi_square_spread() {
    let start = Instant::now();
    let model = CovarianceModel::diagonal(vec![1.0; 5], 44).unwrap();
    let block = simgen::sample_block(&model, 20_000, 0).unwrap();
    let sigma_hat = bounds::estimate_sigma(&block).unwrap();
    let target = 10.0f64.sqrt();
    assert!(
        sigma_hat >= 0.9 * target && sigma_hat <= 1.1 * target,
        "sigma_hat {sigma_hat} outside [{}, {}]",
        0.9 * target,
        1.1 * target
    );
    within(start.elapsed(), Duration::from_secs(10), "criterion 4");
}

#[test]
fn c05_overestimation_ratio_closed_form_and_empirical() {
    let start = Instant::now();

    let isotropic = Spectrum::from_eigenvalues(vec![2.0, 2.0, 2.0]);
    assert_eq!(
        bounds::overestimation_ratio(&isotropic, 0.5).unwrap(),
        1.0,
        "isotropic spectrum must give ratio 1 exactly"
    );
    let two_level = Spectrum::from_eigenvalues(vec![4.0, 1.0]);
    assert_eq!(
        bounds::overestimation_ratio(&two_level, 0.5).unwrap(),
        2.5,
        "spectrum {{4, 1}} at fraction 0.5 must give 2.5 exactly"
    );

    let eigenvalues = vec![10.0, 5.0, 1.0];
    let n_total = 20_000usize;
    let n_observed = 5_000usize;
    let predicted =
        bounds::overestimation_ratio(&Spectrum::from_eigenvalues(eigenvalues.clone()), 0.25)
            .unwrap();
    let mut ratios = Vec::with_capacity(50);
    for trial in 0..50u64 {
        let model = CovarianceModel::diagonal(eigenvalues.clone(), 55 + trial).unwrap();
        let block = simgen::sample_block(&model, n_total, trial).unwrap();
        let (observed, unobserved) = gram::split_observed(&block, n_observed, trial).unwrap();
        let summary = simgen::summarize_block(&observed, n_total as u64, 0).unwrap();
        let beta = bounds::beta_exact(&unobserved).unwrap();
        let report = bounds::deterministic_bounds(&summary, beta).unwrap();
        let full = simgen::summarize_block(&block, n_total as u64, 0).unwrap();
        let truth = linalg::shifted_logdet(&full.gram_observed, report.delta_used).unwrap();
        ratios.push((report.logdet_upper - truth).exp());
    }
    let empirical = median(ratios);
    let factor = (empirical / predicted).max(predicted / empirical);
    assert!(
        factor <= 1.3,
        "empirical median ratio {empirical} vs predicted {predicted}: factor {factor}"
    );
    within(start.elapsed(), Duration::from_secs(60), "criterion 5");
}

#[test]
fn c06_fixture_drift_tables_regress_finals_and_slopes() {
    let start = Instant::now();
    let load = |name: &str| {
        let file = std::fs::File::open(fixture(name)).unwrap();
        sigma_ub::read_drift_table(std::io::BufReader::new(file)).unwrap()
    };
    let s1 = sigma_ub::summarize_drifts(&load("s1_drift.csv"));
    assert!(
        (s1.final_drift_track2 - -150.986).abs() <= 0.001,
        "replayed final drift {} != -150.986 +/- 0.001",
        s1.final_drift_track2
    );
    assert!(
        (s1.ols_slope_track2 - -0.941).abs() <= 0.001,
        "replayed slope {} != -0.941 +/- 0.001",
        s1.ols_slope_track2
    );
    assert!(
        (s1.final_drift_track1 - -142.051).abs() <= 0.001,
        "replayed final envelope drift {} != -142.051 +/- 0.001",
        s1.final_drift_track1
    );
    assert!(
        (s1.ols_slope_track1 - -0.918).abs() <= 0.001,
        "replayed envelope slope {} != -0.918 +/- 0.001",
        s1.ols_slope_track1
    );
    let s2 = sigma_ub::summarize_drifts(&load("s2_drift.csv"));
    assert!(
        (s2.final_drift_track2 - -1536.562).abs() <= 0.001,
        "replayed final drift {} != -1536.562 +/- 0.001",
        s2.final_drift_track2
    );
    assert!(
        (s2.ols_slope_track2 - -42.621).abs() <= 0.01,
        "replayed slope {} != -42.621 +/- 0.01",
        s2.ols_slope_track2
    );
    within(start.elapsed(), Duration::from_secs(1), "criterion 6");
}

#[test]
fn c07_budget_envelope_never_violated() {
    let start = Instant::now();
    let outcome = simgen::verify_envelope(500, 77).unwrap();
    assert_eq!(outcome.violations, 0, "envelope violated: {}", outcome.detail);
    within(start.elapsed(), Duration::from_secs(60), "criterion 7");
}

#[test]
fn c08_budget_gap_bound_never_violated() {
    let start = Instant::now();
    let outcome = simgen::verify_gap_bound(1000, 88).unwrap();
    assert_eq!(outcome.violations, 0, "gap bound violated: {}", outcome.detail);
    within(start.elapsed(), Duration::from_secs(30), "criterion 8");
}

#[test]
fn c09_carryover_contracts_at_least_five_times_restart() {
    let start = Instant::now();
    let eigenvalues = vec![4.0, 2.0, 1.0, 0.5, 0.25];
    let config = MonitorConfig {
        delta: 1e-3,
        energy_cap: 40.0,
        alpha: 0.05,
        n_observed_target: 2000,
        baseline_checkpoint: 0,
    };
    let carryover = CollapseSchedule {
        mode: ScheduleMode::Carryover,
        contraction_factor: 0.9,
        generations: 20,
        floor: 0.0,
    };
    let restart = CollapseSchedule { mode: ScheduleMode::Restart, ..carryover.clone() };
    let mut carry_finals = Vec::with_capacity(20);
    let mut restart_finals = Vec::with_capacity(20);
    for run in 0..20u64 {
        let model = CovarianceModel::diagonal(eigenvalues.clone(), 900 + run).unwrap();
        let carry_series =
            simgen::run_collapse_sim(&model, &carryover, 10_000, 2000, &config).unwrap();
        let restart_series =
            simgen::run_collapse_sim(&model, &restart, 10_000, 2000, &config).unwrap();
        carry_finals.push(carry_series.final_drift_track2);
        restart_finals.push(restart_series.final_drift_track2);
    }
    let carry_median = median(carry_finals);
    let restart_median = median(restart_finals);
    assert!(
        restart_median < 0.0,
        "restart median drift {restart_median} is not negative"
    );
    assert!(
        carry_median <= 5.0 * restart_median,
        "carryover median {carry_median} is not 5x more negative than restart \
         median {restart_median}"
    );
    within(start.elapsed(), Duration::from_secs(120), "criterion 9");
}

#[test]
fn c10_proxy_exactness_and_hashed_agreement() {
    let start = Instant::now();

    let hand = TokenizedCorpus::from_documents(vec![
        "a b a b a b".split_whitespace().map(String::from).collect(),
    ])
    .unwrap();
    let stats = proxies::distinct_n(&hand, 2).unwrap();
    assert_eq!(stats.distinct_n, 0.4, "five bigrams, two distinct");
    let fresh = TokenizedCorpus::from_documents(vec![
        "a b c d".split_whitespace().map(String::from).collect(),
    ])
    .unwrap();
    assert_eq!(proxies::distinct_n(&fresh, 2).unwrap().distinct_n, 1.0);

    let uniform = TokenizedCorpus::from_documents(
        (0..16).map(|i| vec![format!("w{i}")]).collect(),
    )
    .unwrap();
    let uniform_stats = proxies::distinct_n(&uniform, 1).unwrap();
    assert_eq!(uniform_stats.hhi, 1.0 / 16.0, "uniform 16-type concentration");

    let mut rng = CounterRng::new(1010);
    let docs: Vec<Vec<String>> = (0..250)
        .map(|_| (0..42).map(|_| format!("w{}", rng.next_index(50))).collect())
        .collect();
    let big = TokenizedCorpus::from_documents(docs).unwrap();
    let exact = proxies::distinct_n(&big, 3).unwrap();
    assert_eq!(exact.total_ngrams, 250 * 40, "corpus sized for 10k trigrams");
    let hashed = proxies::hashed_hhi(&big, 3, 20).unwrap();
    let rel = (hashed.hhi - exact.hhi).abs() / exact.hhi;
    assert!(rel <= 0.02, "hashed vs exact concentration off by {rel}");

    let (pearson, spearman) =
        proxies::proxy_correlations(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]).unwrap();
    assert!(
        (pearson - 0.9843740386976972).abs() <= 1e-12,
        "pearson {pearson}"
    );
    assert!((spearman - 1.0).abs() <= 1e-12, "spearman {spearman}");
    within(start.elapsed(), Duration::from_secs(10), "criterion 10");
}

#[test]
fn c11_rescaled_inverse_gram_deviation_is_flat() {
    let start = Instant::now();
    let outcome = simgen::verify_deviation_rate(50, 111).unwrap();
    assert!(
        outcome.passed,
        "medians spread beyond factor 3: {}",
        outcome.detail
    );
    within(start.elapsed(), Duration::from_secs(120), "criterion 11");
}

#[test]
fn c12_reports_identical_across_job_counts() {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("sigma-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let bin = env!("CARGO_BIN_EXE_sigma");

    let emit = Command::new(bin)
        .args(["sim", "--mode", "carryover", "--factor", "0.9", "--generations", "8"])
        .args(["--spectrum", "4,2,1", "--n-observed", "400", "--n-total", "2000"])
        .args(["--seed", "5", "--no-timestamp"])
        .arg("--emit-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        emit.status.success(),
        "sim --emit-dir failed: {}",
        String::from_utf8_lossy(&emit.stderr)
    );

    let manifest = dir.join("manifest.json");
    let run = |jobs: &str, out: &Path| {
        let status = Command::new(bin)
            .arg("monitor")
            .arg("--manifest")
            .arg(&manifest)
            .args(["--jobs", jobs, "--no-timestamp", "--json"])
            .arg(out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "monitor --jobs {jobs} failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    };
    let out1 = dir.join("report_jobs1.json");
    let out8 = dir.join("report_jobs8.json");
    run("1", &out1);
    run("8", &out8);
    let bytes1 = std::fs::read(&out1).unwrap();
    let bytes8 = std::fs::read(&out8).unwrap();
    assert!(!bytes1.is_empty(), "report is empty");
    assert_eq!(bytes1, bytes8, "reports differ between --jobs 1 and --jobs 8");
    let _ = std::fs::remove_dir_all(&dir);
    within(start.elapsed(), Duration::from_secs(30), "criterion 12");
}
