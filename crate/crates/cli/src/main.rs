use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::error;

use emc_core::indeptests::{BlomqvistOptions, MedianRule, MedianTies};
use emc_core::levelstats::BinRule;
use emc_core::model::ModeLabels;
use emc_core::pipeline::{run_study, StudyConfig};
use emc_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Labels {
    Site,
    Local,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Median {
    Midpoint,
    Lower,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ties {
    Drop,
    Zero,
}

/// Thermalization study of a bosonic chain coupled to a memory register.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    #[arg(long, env = "EMC_N_MIN", default_value_t = 2)]
    n_min: u32,
    #[arg(long, env = "EMC_N_MAX", default_value_t = 8)]
    n_max: u32,
    /// 1-based memory mode of the observed occupation.
    #[arg(long, env = "EMC_MODE_INDEX", default_value_t = 1)]
    mode_index: usize,
    /// Allow N = 9 (dimension 30600, about 19 GB of RAM).
    #[arg(long, env = "EMC_INCLUDE_N9")]
    include_n9: bool,
    #[arg(long, env = "EMC_CACHE_DIR", default_value = "cache")]
    cache_dir: PathBuf,
    #[arg(long = "out", env = "EMC_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Histogram bins: `sqrt` or a fixed count.
    #[arg(long, env = "EMC_BINS", default_value = "sqrt")]
    bins: BinRule,
    /// Moving-average half-width (bins) for the spacing argmax.
    #[arg(long, env = "EMC_ARGMAX_SMOOTHING", default_value_t = 0)]
    argmax_smoothing: usize,
    #[arg(long, env = "EMC_PERM_REPLICATES", default_value_t = 10_000)]
    perm_replicates: usize,
    #[arg(long, env = "EMC_SEED", default_value_t = StudyConfig::default().seed)]
    seed: u64,
    #[arg(long, env = "EMC_THREADS")]
    threads: Option<usize>,
    #[arg(long, env = "EMC_MEM_BUDGET_GB", default_value_t = 5.0)]
    mem_budget_gb: f64,
    #[arg(long, env = "EMC_TIME_MAX", default_value_t = 200.0)]
    time_max: f64,
    #[arg(long, env = "EMC_TIME_STEP", default_value_t = 0.1)]
    time_step: f64,
    #[arg(long, env = "EMC_LABELS", value_enum, default_value = "site")]
    labels: Labels,
    #[arg(
        long,
        env = "EMC_BLOMQVIST_MEDIAN",
        value_enum,
        default_value = "lower"
    )]
    blomqvist_median: Median,
    #[arg(long, env = "EMC_BLOMQVIST_TIES", value_enum, default_value = "zero")]
    blomqvist_ties: Ties,
    /// Never write computed spectra to the cache.
    #[arg(long)]
    read_only_cache: bool,
}

impl Args {
    fn config(&self) -> StudyConfig {
        StudyConfig {
            n_min: self.n_min,
            n_max: self.n_max,
            mode_index: self.mode_index,
            include_n9: self.include_n9,
            cache_dir: self.cache_dir.clone(),
            out_dir: self.out_dir.clone(),
            bins: self.bins,
            argmax_smoothing: self.argmax_smoothing,
            replicates: self.perm_replicates,
            seed: self.seed,
            blomqvist: BlomqvistOptions {
                median: match self.blomqvist_median {
                    Median::Midpoint => MedianRule::Midpoint,
                    Median::Lower => MedianRule::Lower,
                },
                ties: match self.blomqvist_ties {
                    Ties::Drop => MedianTies::Drop,
                    Ties::Zero => MedianTies::Zero,
                },
            },
            time_max: self.time_max,
            time_step: self.time_step,
            threads: self.threads,
            mem_budget_gb: self.mem_budget_gb,
            labels: match self.labels {
                Labels::Site => ModeLabels::SiteIndex,
                Labels::Local => ModeLabels::SectorLocal,
            },
            read_only_cache: self.read_only_cache,
            ..StudyConfig::default()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = args.config();
    if let Err(e) = cfg.validate() {
        error!("{e}");
        return ExitCode::from(2);
    }
    match run_study(&cfg) {
        Ok(outcome) if outcome.succeeded() => ExitCode::SUCCESS,
        Ok(outcome) => {
            for (n, e) in &outcome.failures {
                error!("N={n}: {e}");
            }
            error!(
                "study finished with failures; see {}",
                cfg.out_dir.display()
            );
            ExitCode::from(1)
        }
        Err(e @ (Error::Io(_) | Error::Csv(_) | Error::Json(_))) => {
            error!("{e}");
            ExitCode::from(3)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
