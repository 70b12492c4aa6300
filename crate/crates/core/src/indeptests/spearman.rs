use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{check_paired, Method, TestKind, TestResult};
use crate::numeric::mid_ranks;
use crate::{Error, Result};

/// Spearman's `ρ` on mid-ranks; p from the t law with `n - 2` degrees of freedom.
pub fn spearman_rank(x: &[f64], y: &[f64]) -> Result<TestResult> {
    check_paired(x, y, 3)?;
    let (rx, ry) = (mid_ranks(x), mid_ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("spearman rho: constant input".into()));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let p_value = if df <= 0.0 {
        1.0
    } else if rho.abs() == 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let law = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::InvalidParameter(format!("t distribution: {e}")))?;
        (2.0 * law.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok(TestResult {
        test: TestKind::Spearman,
        statistic: rho,
        p_value,
        method: Method::Asymptotic,
        n: x.len(),
        dropped: 0,
    })
}
