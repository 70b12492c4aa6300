//! End-to-end study over a range of system sizes.
//!
//! For every `N`: assemble, diagonalize or load the cached spectrum, verify,
//! run the diagnostics, level statistics and independence tests, then fit the
//! scalar series across `N` and write every artifact.

pub mod cache;
mod output;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsReport};
use crate::fitting::{fit_suite, FitRow};
use crate::indeptests::{
    run_report_tests, BlomqvistOptions, MedianRule, MedianTies, TestConfig, TestOutcome,
};
use crate::levelstats::{spacing_stats, BinRule, SpacingStats};
use crate::model::{build_hamiltonian, initial_state_vector, ModeLabels, ModelParams};
use crate::spectrum::{self, check_nondegeneracy, verify_sector_charges, Spectrum};
use crate::{Error, Result};

pub use output::write_artifacts;

/// Tolerances of the per-size verification.
pub mod tolerances {
    pub const CHARGE: f64 = 1e-10;
    pub const INITIAL_ENERGY: f64 = 1e-10;
    pub const TRACE_REL: f64 = 1e-9;
    pub const RESIDUAL_REL: f64 = 1e-8;
    pub const N_AV: f64 = 1e-10;
    pub const NORMALIZATION: f64 = 1e-12;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_min: u32,
    pub n_max: u32,
    /// 1-based memory mode `i` of the observable `n̂_i`.
    pub mode_index: usize,
    pub include_n9: bool,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub bins: BinRule,
    /// Half-width (in bins) of the moving average used for the spacing argmax.
    pub argmax_smoothing: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Study default: lower median, on-median points kept with zero sign.
    pub blomqvist: BlomqvistOptions,
    pub time_max: f64,
    pub time_step: f64,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub mem_budget_gb: f64,
    pub labels: ModeLabels,
    pub degeneracy_tol: f64,
    /// Skip writing freshly computed spectra to the cache.
    pub read_only_cache: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 8,
            mode_index: 1,
            include_n9: false,
            cache_dir: PathBuf::from("cache"),
            out_dir: PathBuf::from("out"),
            bins: BinRule::default(),
            argmax_smoothing: 0,
            replicates: 10_000,
            seed: 20_240_917,
            blomqvist: BlomqvistOptions {
                median: MedianRule::Lower,
                ties: MedianTies::Zero,
            },
            time_max: 200.0,
            time_step: 0.1,
            threads: None,
            mem_budget_gb: 5.0,
            labels: ModeLabels::default(),
            degeneracy_tol: spectrum::DEFAULT_DEGENERACY_TOL,
            read_only_cache: false,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(2 <= self.n_min && self.n_min <= self.n_max && self.n_max <= 9) {
            return bad(format!(
                "need 2 <= n_min <= n_max <= 9, got {}..{}",
                self.n_min, self.n_max
            ));
        }
        if self.n_max == 9 && !self.include_n9 {
            return bad("N = 9 needs about 15 GB; pass --include-n9 to allow it".into());
        }
        if self.replicates < 1000 {
            return bad(format!(
                "at least 1000 permutation replicates required, got {}",
                self.replicates
            ));
        }
        let modes = 2 * self.n_min as usize;
        if !(1..=modes).contains(&self.mode_index) {
            return bad(format!(
                "mode index must lie in 1..={modes} for N = {}",
                self.n_min
            ));
        }
        if !(self.time_step > 0.0) || !(self.time_max >= 0.0) {
            return bad("time grid needs time_step > 0 and time_max >= 0".into());
        }
        if !(self.mem_budget_gb > 0.0) {
            return bad("memory budget must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("thread count must be positive".into());
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<u32> {
        (self.n_min..=self.n_max).collect()
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            replicates: self.replicates,
            seed: self.seed,
            blomqvist: self.blomqvist,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value > tolerance,
        }
    }
}

/// Everything computed for one system size.
#[derive(Debug)]
pub struct SizeOutcome {
    pub params: ModelParams,
    pub report: DiagnosticsReport,
    pub spacing: SpacingStats,
    pub times: Vec<f64>,
    pub series: Vec<f64>,
    pub tests: Vec<TestOutcome>,
    pub checks: Vec<Check>,
    pub diagonalized: bool,
    pub seconds: f64,
}

impl SizeOutcome {
    pub fn verified(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug)]
pub struct StudyOutcome {
    pub config: StudyConfig,
    /// Ascending in `N`.
    pub sizes: Vec<SizeOutcome>,
    pub failures: Vec<(u32, String)>,
    pub fits: Vec<FitRow>,
    pub diagonalizations: usize,
    pub cache_hits: usize,
}

impl StudyOutcome {
    pub fn size(&self, n: u32) -> Option<&SizeOutcome> {
        self.sizes.iter().find(|s| s.params.n == n)
    }

    pub fn reports(&self) -> Vec<DiagnosticsReport> {
        self.sizes.iter().map(|s| s.report.clone()).collect()
    }

    /// True when every size ran and passed verification.
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty() && self.sizes.iter().all(SizeOutcome::verified)
    }
}

/// Rough peak footprint of one size: two dense `𝒩 × 𝒩` buffers plus `V_P`.
pub fn memory_estimate(n: u32) -> u64 {
    let d = ModelParams::for_size(n).map_or(0, |p| p.sector_dimension()) as u64;
    2 * d * d * 8 + d * d * 8 / 2
}

struct Counters {
    diagonalizations: AtomicUsize,
    cache_hits: AtomicUsize,
}

fn obtain_spectrum(
    cfg: &StudyConfig,
    model: &crate::model::ModelInstance,
    counters: &Counters,
) -> Result<(Spectrum, bool)> {
    let path = cache::cache_path(&cfg.cache_dir, &model.params);
    if path.exists() {
        match cache::read_cache(&path, &model.params) {
            Ok(s) => {
                counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                info!(
                    "N={}: loaded spectrum from {}",
                    model.params.n,
                    path.display()
                );
                return Ok((s, false));
            }
            Err(e) => warn!(
                "N={}: ignoring cache {}: {e}",
                model.params.n,
                path.display()
            ),
        }
    }
    info!(
        "N={}: diagonalizing dimension {}",
        model.params.n,
        model.dim()
    );
    let s = spectrum::diagonalize(model)?;
    counters.diagonalizations.fetch_add(1, Ordering::Relaxed);
    if !cfg.read_only_cache {
        if let Err(e) = cache::write_cache(&path, &model.params, &s) {
            warn!(
                "N={}: could not write cache {}: {e}",
                model.params.n,
                path.display()
            );
        }
    }
    Ok((s, true))
}

fn run_size(cfg: &StudyConfig, n: u32, counters: &Counters) -> Result<SizeOutcome> {
    let start = Instant::now();
    let params = ModelParams::with_labels(n, cfg.labels)?;
    let basis = params.basis()?;
    let model = build_hamiltonian(params, basis)?;
    let (spec, diagonalized) = obtain_spectrum(cfg, &model, counters)?;
    let in_vec = initial_state_vector(&params, &model.basis)?;

    let mut checks = Vec::new();
    let max_e = spec.max_abs_energy();
    checks.push(Check::at_most(
        "residual_norm",
        spec.residual_norm(),
        tolerances::RESIDUAL_REL * max_e,
    ));
    checks.push(Check::above(
        "min_normalized_gap",
        check_nondegeneracy(spec.energies())?,
        cfg.degeneracy_tol,
    ));
    let charge_err = verify_sector_charges(&spec, &model.basis)
        .into_iter()
        .map(|(q, m)| (q - n as f64).abs().max((m - params.n_m as f64).abs()))
        .fold(0.0, f64::max);
    checks.push(Check::at_most(
        "sector_charges",
        charge_err,
        tolerances::CHARGE,
    ));
    let trace = model.hamiltonian.trace();
    let sum_e: f64 = spec.energies().iter().sum();
    checks.push(Check::at_most(
        "trace_identity",
        (sum_e - trace).abs() / trace.abs().max(1.0),
        tolerances::TRACE_REL,
    ));
    let fro = model.hamiltonian.frobenius_sq();
    let sum_e2: f64 = spec.energies().iter().map(|e| e * e).sum();
    checks.push(Check::at_most(
        "frobenius_identity",
        (sum_e2 - fro).abs() / fro,
        tolerances::TRACE_REL,
    ));

    let c = diagnostics::coefficients(&spec, &in_vec)?;
    checks.push(Check::at_most(
        "coefficient_normalization",
        (c.norm_sq() - 1.0).abs(),
        tolerances::NORMALIZATION,
    ));
    let o = diagnostics::observable_matrix(&spec, &model.basis, cfg.mode_index)?;
    let report = diagnostics::report_from_parts(n, &spec, &c, &o)?;
    checks.push(Check::at_most(
        "initial_energy",
        report.e_bar.abs(),
        tolerances::INITIAL_ENERGY,
    ));
    let n_av_exact = params.n_m as f64 / (2.0 * params.k as f64);
    checks.push(Check::at_most(
        "trace_n_av",
        (report.n_av - n_av_exact).abs(),
        tolerances::N_AV,
    ));

    let times = diagnostics::time_grid(0.0, cfg.time_max, cfg.time_step);
    let series = diagnostics::expectation_series(&c, &o, &spec, &times);
    drop(o);
    drop(spec);

    let spacing = spacing_stats(&report.energies, cfg.bins, cfg.argmax_smoothing)?;
    let tests = run_report_tests(&report, &cfg.test_config());
    for t in &tests {
        if let Err(e) = &t.result {
            warn!("N={n}: {} failed: {e}", t.test);
        }
    }
    for check in checks.iter().filter(|c| !c.passed) {
        warn!(
            "N={n}: verification `{}` failed: {:e} vs tolerance {:e}",
            check.name, check.value, check.tolerance
        );
    }
    let seconds = start.elapsed().as_secs_f64();
    info!("N={n}: done in {seconds:.1} s");
    Ok(SizeOutcome {
        params,
        report,
        spacing,
        times,
        series,
        tests,
        checks,
        diagonalized,
        seconds,
    })
}

/// Runs jobs largest first, admitting a job only while its memory estimate
/// fits the remaining budget (a lone job always runs).
fn schedule<T: Send>(
    sizes: &[u32],
    workers: usize,
    budget: u64,
    run: impl Fn(u32) -> T + Sync,
) -> Vec<(u32, T)> {
    let mut queue: Vec<u32> = sizes.to_vec();
    queue.sort_by_key(|&n| std::cmp::Reverse(memory_estimate(n)));
    let queue = Mutex::new(queue.into_iter());
    let state = Mutex::new((0u64, 0usize));
    let freed = Condvar::new();
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let Some(n) = queue.lock().unwrap().next() else {
                    break;
                };
                let cost = memory_estimate(n);
                {
                    let mut s = state.lock().unwrap();
                    while s.1 > 0 && s.0 + cost > budget {
                        s = freed.wait(s).unwrap();
                    }
                    s.0 += cost;
                    s.1 += 1;
                }
                let out = run(n);
                {
                    let mut s = state.lock().unwrap();
                    s.0 -= cost;
                    s.1 -= 1;
                }
                freed.notify_all();
                results.lock().unwrap().push((n, out));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.0);
    results
}

/// Computes the whole study in memory; see [`write_artifacts`] for the files.
pub fn compute_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    let counters = Counters {
        diagonalizations: AtomicUsize::new(0),
        cache_hits: AtomicUsize::new(0),
    };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cfg.threads {
            b = b.num_threads(t);
        }
        b.build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
    };
    let workers = cfg.threads.unwrap_or_else(|| pool.current_num_threads());
    let budget = (cfg.mem_budget_gb * 1e9) as u64;
    let results = pool.install(|| {
        schedule(&cfg.sizes(), workers, budget, |n| {
            run_size(cfg, n, &counters)
        })
    });

    let mut sizes = Vec::new();
    let mut failures = Vec::new();
    for (n, r) in results {
        match r {
            Ok(s) => sizes.push(s),
            Err(e) => {
                warn!("N={n}: {e}");
                failures.push((n, e.to_string()));
            }
        }
    }
    let reports: Vec<DiagnosticsReport> = sizes.iter().map(|s| s.report.clone()).collect();
    let fits = fit_suite(&reports);
    let outcome = StudyOutcome {
        config: cfg.clone(),
        sizes,
        failures,
        fits,
        diagonalizations: counters.diagonalizations.into_inner(),
        cache_hits: counters.cache_hits.into_inner(),
    };
    info!(
        "diagonalizations performed: {}, cache hits: {}",
        outcome.diagonalizations, outcome.cache_hits
    );
    Ok(outcome)
}

/// Computes the study and writes every artifact into `cfg.out_dir`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let outcome = compute_study(cfg)?;
    write_artifacts(&outcome, &cfg.out_dir)?;
    Ok(outcome)
}
