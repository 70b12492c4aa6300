use serde::{Deserialize, Serialize};

use super::{check_paired, Method, TestKind, TestResult};
use crate::numeric::normal_two_sided;
use crate::{Error, Result};

/// Which order statistic serves as the median for even sample sizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MedianRule {
    /// Mean of the two central order statistics.
    #[default]
    Midpoint,
    /// Lower central order statistic.
    Lower,
}

/// Treatment of points lying exactly on a median.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MedianTies {
    /// Excluded from both the quadrant counts and the sample size.
    #[default]
    Drop,
    /// Kept in the sample size with a zero quadrant sign.
    Zero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlomqvistOptions {
    pub median: MedianRule,
    pub ties: MedianTies,
}

fn median(values: &[f64], rule: MedianRule) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        return v[n / 2];
    }
    match rule {
        MedianRule::Midpoint => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        MedianRule::Lower => v[n / 2 - 1],
    }
}

fn side(v: f64, m: f64) -> i64 {
    if v > m {
        1
    } else if v < m {
        -1
    } else {
        0
    }
}

pub fn blomqvist_beta(x: &[f64], y: &[f64]) -> Result<TestResult> {
    blomqvist_beta_with(x, y, BlomqvistOptions::default())
}

/// Medial (quadrant) correlation `β = (n₁ + n₃ - n₂ - n₄)/n` with `√n β → N(0, 1)`.
pub fn blomqvist_beta_with(x: &[f64], y: &[f64], opts: BlomqvistOptions) -> Result<TestResult> {
    check_paired(x, y, 4)?;
    let (mx, my) = (median(x, opts.median), median(y, opts.median));
    let mut agree: i64 = 0;
    let mut on_median = 0usize;
    for (a, b) in x.iter().zip(y) {
        let (sx, sy) = (side(*a, mx), side(*b, my));
        if sx == 0 || sy == 0 {
            on_median += 1;
        } else {
            agree += sx * sy;
        }
    }
    let used = match opts.ties {
        MedianTies::Drop => x.len() - on_median,
        MedianTies::Zero => x.len(),
    };
    if x.len() == on_median {
        return Err(Error::Degenerate("every point lies on a median".into()));
    }
    let beta = agree as f64 / used as f64;
    let z = (used as f64).sqrt() * beta;
    Ok(TestResult {
        test: TestKind::Blomqvist,
        statistic: beta,
        p_value: normal_two_sided(z),
        method: Method::Asymptotic,
        n: x.len(),
        dropped: if opts.ties == MedianTies::Drop {
            on_median
        } else {
            0
        },
    })
}
