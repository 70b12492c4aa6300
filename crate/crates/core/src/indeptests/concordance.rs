use rayon::prelude::*;

use super::{check_paired, Method, TestKind, TestResult};
use crate::numeric::{normal_two_sided, tie_groups};
use crate::{Error, Result};

/// Pairwise concordance counts.
struct Concordance {
    /// `C - D` over unordered pairs.
    s: i64,
    /// `C + D` over unordered pairs.
    c_plus_d: i64,
    /// Per point: concordant minus discordant partners.
    per_point: Vec<i64>,
}

#[inline]
fn sign(a: f64, b: f64) -> i64 {
    i64::from(a > b) - i64::from(a < b)
}

fn concordance(x: &[f64], y: &[f64]) -> Concordance {
    let rows: Vec<(i64, i64)> = (0..x.len())
        .into_par_iter()
        .map(|k| {
            let (xk, yk) = (x[k], y[k]);
            let mut diff = 0;
            let mut both = 0;
            for j in 0..x.len() {
                let p = sign(x[j], xk) * sign(y[j], yk);
                diff += p;
                both += p * p;
            }
            (diff, both)
        })
        .collect();
    let s = rows.iter().map(|r| r.0).sum::<i64>() / 2;
    let c_plus_d = rows.iter().map(|r| r.1).sum::<i64>() / 2;
    Concordance {
        s,
        c_plus_d,
        per_point: rows.into_iter().map(|r| r.0).collect(),
    }
}

/// Null (permutation) variance of `S = C - D` with the tie adjustments.
fn null_variance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (tx, ty) = (tie_groups(x), tie_groups(y));
    let sum = |t: &[usize], f: &dyn Fn(f64) -> f64| t.iter().map(|&g| f(g as f64)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = sum(&tx, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum(&ty, &|u| u * (u - 1.0) * (2.0 * u + 5.0));
    let v1 = sum(&tx, &|t| t * (t - 1.0)) * sum(&ty, &|u| u * (u - 1.0)) / (2.0 * n * (n - 1.0));
    let v2 = sum(&tx, &|t| t * (t - 1.0) * (t - 2.0)) * sum(&ty, &|u| u * (u - 1.0) * (u - 2.0))
        / (9.0 * n * (n - 1.0) * (n - 2.0));
    (v0 - vt - vu) / 18.0 + v1 + v2
}

/// Two-sided normal p for `S`, continuity-corrected by one unit of `S`.
fn s_p_value(s: i64, var: f64) -> f64 {
    if var <= 0.0 {
        return if s == 0 { 1.0 } else { 0.0 };
    }
    normal_two_sided(((s.abs() as f64) - 1.0).max(0.0) / var.sqrt())
}

/// Kendall's `τ_b` with the tie-adjusted normal approximation to `S = C - D`.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<TestResult> {
    check_paired(x, y, 3)?;
    let n = x.len() as f64;
    let pairs = |t: &[usize]| t.iter().map(|&g| (g * (g - 1) / 2) as f64).sum::<f64>();
    let n0 = n * (n - 1.0) / 2.0;
    let (n1, n2) = (pairs(&tie_groups(x)), pairs(&tie_groups(y)));
    if n0 == n1 || n0 == n2 {
        return Err(Error::Degenerate("kendall tau: constant input".into()));
    }
    let conc = concordance(x, y);
    let tau = conc.s as f64 / ((n0 - n1) * (n0 - n2)).sqrt();
    Ok(TestResult {
        test: TestKind::Kendall,
        statistic: tau,
        p_value: s_p_value(conc.s, null_variance(x, y)),
        method: Method::Asymptotic,
        n: x.len(),
        dropped: 0,
    })
}

/// Goodman and Kruskal's `γ = (C - D)/(C + D)`.
///
/// `γ = 0` exactly when `S = C - D = 0`, so the p-value is that of `S` under
/// its permutation null (tie-adjusted variance, continuity-corrected).
/// [`gamma_ase0`] gives the delta-method standard error for comparison.
pub fn goodman_kruskal_gamma(x: &[f64], y: &[f64]) -> Result<TestResult> {
    check_paired(x, y, 3)?;
    let conc = concordance(x, y);
    if conc.c_plus_d == 0 {
        return Err(Error::Degenerate(
            "goodman-kruskal gamma: no concordant or discordant pairs".into(),
        ));
    }
    Ok(TestResult {
        test: TestKind::GoodmanKruskal,
        statistic: conc.s as f64 / conc.c_plus_d as f64,
        p_value: s_p_value(conc.s, null_variance(x, y)),
        method: Method::Asymptotic,
        n: x.len(),
        dropped: 0,
    })
}

/// `ASE₀ = 2/(P+Q) · √(Σ_k d_k² - (P-Q)²/n)` over ordered-pair totals.
pub fn gamma_ase0(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y, 3)?;
    let conc = concordance(x, y);
    if conc.c_plus_d == 0 {
        return Err(Error::Degenerate(
            "goodman-kruskal gamma: no concordant or discordant pairs".into(),
        ));
    }
    let n = x.len() as f64;
    let p_minus_q = 2.0 * conc.s as f64;
    let p_plus_q = 2.0 * conc.c_plus_d as f64;
    let sq: f64 = conc.per_point.iter().map(|&d| (d * d) as f64).sum();
    Ok(2.0 / p_plus_q * (sq - p_minus_q * p_minus_q / n).max(0.0).sqrt())
}
