//! Rank-based tests of independence between two paired series.
//!
//! Production p-values are asymptotic except for Hoeffding's `D`, which is
//! calibrated by permutation with a recorded seed.

mod blomqvist;
mod concordance;
mod hoeffding;
mod spearman;

use serde::{Deserialize, Serialize};

pub use blomqvist::{
    blomqvist_beta, blomqvist_beta_with, BlomqvistOptions, MedianRule, MedianTies,
};
pub use concordance::{gamma_ase0, goodman_kruskal_gamma, kendall_tau};
pub use hoeffding::{hoeffding_d, hoeffding_statistic};
pub use spearman::spearman_rank;

use crate::diagnostics::DiagnosticsReport;
use crate::Result;

/// Significance level used to summarize test outcomes.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    Blomqvist,
    GoodmanKruskal,
    Hoeffding,
    Kendall,
    Spearman,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        Self::Blomqvist,
        Self::GoodmanKruskal,
        Self::Hoeffding,
        Self::Kendall,
        Self::Spearman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Blomqvist => "blomqvist_beta",
            Self::GoodmanKruskal => "goodman_kruskal_gamma",
            Self::Hoeffding => "hoeffding_d",
            Self::Kendall => "kendall_tau",
            Self::Spearman => "spearman_rho",
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Asymptotic,
    Permutation { seed: u64, replicates: usize },
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Asymptotic => "asymptotic",
            Self::Permutation { .. } => "permutation",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Asymptotic => None,
            Self::Permutation { seed, .. } => Some(*seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub n: usize,
    /// Points excluded from the statistic (Blomqvist median ties).
    pub dropped: usize,
}

impl TestResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub replicates: usize,
    pub seed: u64,
    pub blomqvist: BlomqvistOptions,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            seed: 0x5eed,
            blomqvist: BlomqvistOptions::default(),
        }
    }
}

/// One entry per test; a failing test does not stop the others.
#[derive(Debug)]
pub struct TestOutcome {
    pub test: TestKind,
    pub result: Result<TestResult>,
}

pub fn run_all_tests(x: &[f64], y: &[f64], cfg: &TestConfig) -> Vec<TestOutcome> {
    TestKind::ALL
        .iter()
        .map(|&test| {
            let result = match test {
                TestKind::Blomqvist => blomqvist_beta_with(x, y, cfg.blomqvist),
                TestKind::GoodmanKruskal => goodman_kruskal_gamma(x, y),
                TestKind::Hoeffding => hoeffding_d(x, y, cfg.replicates, cfg.seed),
                TestKind::Kendall => kendall_tau(x, y),
                TestKind::Spearman => spearman_rank(x, y),
            };
            TestOutcome { test, result }
        })
        .collect()
}

/// All five tests on `(Δ_{n_{i,αα}}, Δ_{C_α²})`.
pub fn run_report_tests(report: &DiagnosticsReport, cfg: &TestConfig) -> Vec<TestOutcome> {
    run_all_tests(&report.delta_n, &report.delta_c2, cfg)
}

fn check_paired(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    use crate::Error;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < min {
        return Err(Error::InsufficientData(format!(
            "need at least {min} pairs, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample value".into()));
    }
    Ok(())
}
