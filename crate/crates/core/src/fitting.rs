//! Weighted least-squares fits of diagnostics against the system size.
//!
//! Two-parameter families are linear and solved directly by QR. For the
//! three-parameter families the exponent `c` is nonlinear: every start on a
//! fixed `c` grid gets the exact linear `(a, b)` for that `c`, and the best of
//! the resulting Levenberg–Marquardt runs is kept.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsReport;
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;

/// Start values for the nonlinear exponent.
pub fn start_grid() -> Vec<f64> {
    (0..=12).map(|k| -3.0 + 0.5 * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitFamily {
    /// `a + b exp(c N)`
    Exp,
    /// `a + b N^c`
    Power,
    /// `a + b / N`
    InverseN,
    /// `a + b / √N`
    InverseSqrtN,
}

impl FitFamily {
    pub fn params(self) -> usize {
        match self {
            Self::Exp | Self::Power => 3,
            Self::InverseN | Self::InverseSqrtN => 2,
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            Self::Exp => "a+b*exp(c*N)",
            Self::Power => "a+b*N^c",
            Self::InverseN => "a+b*N^-1",
            Self::InverseSqrtN => "a+b*N^-1/2",
        }
    }

    /// Basis function multiplying `b`, and its derivative in `c`.
    fn basis(self, n: f64, c: f64) -> (f64, f64) {
        match self {
            Self::Exp => {
                let g = (c * n).exp();
                (g, n * g)
            }
            Self::Power => {
                let g = n.powf(c);
                (g, n.ln() * g)
            }
            Self::InverseN => (1.0 / n, 0.0),
            Self::InverseSqrtN => (1.0 / n.sqrt(), 0.0),
        }
    }

    pub fn eval(self, params: &[f64], n: f64) -> f64 {
        let c = params.get(2).copied().unwrap_or(0.0);
        params[0] + params[1] * self.basis(n, c).0
    }
}

/// Which system sizes enter a fit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mask {
    All,
    Even,
    Odd,
    Exclude(Vec<u32>),
}

impl Mask {
    pub fn keeps(&self, n: u32) -> bool {
        match self {
            Self::All => true,
            Self::Even => n.is_multiple_of(2),
            Self::Odd => n % 2 == 1,
            Self::Exclude(list) => !list.contains(&n),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::All => "all".into(),
            Self::Even => "even N".into(),
            Self::Odd => "odd N".into(),
            Self::Exclude(list) => {
                let names: Vec<String> = list.iter().map(|n| format!("N={n}")).collect();
                format!("excluding {}", names.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub n: u32,
    pub y: f64,
    /// Positive weight; `1` for unweighted fits.
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    /// `(a, b)` or `(a, b, c)`.
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub r2_adj: f64,
    pub rmse: f64,
    pub ssr: f64,
    pub mask: Mask,
    /// System sizes actually used, ascending.
    pub used: Vec<u32>,
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn a(&self) -> (f64, f64) {
        (self.params[0], self.std_errors[0])
    }

    pub fn b(&self) -> (f64, f64) {
        (self.params[1], self.std_errors[1])
    }

    pub fn c(&self) -> Option<(f64, f64)> {
        (self.params.len() > 2).then(|| (self.params[2], self.std_errors[2]))
    }
}

/// Least-squares solve of `A x ≈ b` by Householder QR; `A` is given by columns.
/// Returns `x` and the upper-triangular factor (row-major `k × k`).
fn qr_solve(mut cols: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = cols.len();
    let m = rhs.len();
    if m < k {
        return None;
    }
    for j in 0..k {
        let norm = cols[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if cols[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            let reflect = |col: &mut [f64]| {
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                col.iter_mut().zip(&v).for_each(|(c, a)| *c -= f * a);
            };
            for col in cols.iter_mut().skip(j) {
                reflect(&mut col[j..]);
            }
            reflect(&mut rhs[j..]);
        }
    }
    let scale = (0..k).map(|j| cols[j][j].abs()).fold(0.0, f64::max);
    if (0..k).any(|j| cols[j][j].abs() <= 1e-13 * scale) {
        return None;
    }
    let mut r = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            r[i * k + j] = cols[j][i];
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let tail: f64 = (i + 1..k).map(|j| r[i * k + j] * x[j]).sum();
        x[i] = (rhs[i] - tail) / r[i * k + i];
    }
    Some((x, r))
}

/// `(RᵀR)⁻¹` for upper-triangular row-major `R`.
fn inverse_normal(r: &[f64], k: usize) -> Vec<f64> {
    let mut rinv = vec![0.0; k * k];
    for j in 0..k {
        rinv[j * k + j] = 1.0 / r[j * k + j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|l| r[i * k + l] * rinv[l * k + j]).sum();
            rinv[i * k + j] = -s / r[i * k + i];
        }
    }
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = (0..k).map(|l| rinv[i * k + l] * rinv[j * k + l]).sum();
        }
    }
    out
}

struct Problem {
    family: FitFamily,
    n: Vec<f64>,
    y: Vec<f64>,
    sw: Vec<f64>,
}

impl Problem {
    fn ssr(&self, p: &[f64]) -> f64 {
        self.n
            .iter()
            .zip(&self.y)
            .zip(&self.sw)
            .map(|((&n, &y), &s)| {
                let r = s * (y - self.family.eval(p, n));
                r * r
            })
            .sum()
    }

    /// Weighted residuals and Jacobian columns at `p`.
    fn linearize(&self, p: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = self.family.params();
        let m = self.n.len();
        let mut cols = vec![vec![0.0; m]; k];
        let mut res = vec![0.0; m];
        let c = p.get(2).copied().unwrap_or(0.0);
        for i in 0..m {
            let (g, dg) = self.family.basis(self.n[i], c);
            let s = self.sw[i];
            res[i] = s * (self.y[i] - (p[0] + p[1] * g));
            cols[0][i] = s;
            cols[1][i] = s * g;
            if k == 3 {
                cols[2][i] = s * p[1] * dg;
            }
        }
        (res, cols)
    }

    /// Exact `(a, b)` for a fixed exponent.
    fn linear_at(&self, c: f64) -> Option<Vec<f64>> {
        let m = self.n.len();
        let mut cols = vec![vec![0.0; m]; 2];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let s = self.sw[i];
            cols[0][i] = s;
            cols[1][i] = s * self.family.basis(self.n[i], c).0;
            rhs[i] = s * self.y[i];
        }
        qr_solve(cols, rhs).map(|(x, _)| x)
    }

    /// Levenberg–Marquardt from `p`; returns `(params, ssr, iterations, converged)`.
    fn levenberg_marquardt(&self, mut p: Vec<f64>) -> (Vec<f64>, f64, usize, bool) {
        let k = p.len();
        let mut cost = self.ssr(&p);
        let mut lambda: f64 = 1e-3;
        for it in 1..=MAX_ITERATIONS {
            let (res, cols) = self.linearize(&p);
            let scale: Vec<f64> = cols
                .iter()
                .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300))
                .collect();
            let mut improved = false;
            while lambda < 1e16 {
                let mut aug = cols.clone();
                let mut rhs = res.clone();
                for (j, col) in aug.iter_mut().enumerate() {
                    for l in 0..k {
                        col.push(if l == j {
                            lambda.sqrt() * scale[j]
                        } else {
                            0.0
                        });
                    }
                }
                rhs.extend(std::iter::repeat_n(0.0, k));
                let Some((step, _)) = qr_solve(aug, rhs) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
                let trial_cost = self.ssr(&trial);
                if trial_cost.is_finite() && trial_cost <= cost {
                    let small_step = step
                        .iter()
                        .zip(&trial)
                        .all(|(s, v)| s.abs() <= 1e-12 * (v.abs() + 1e-12));
                    let small_gain = cost - trial_cost <= 1e-15 * cost.max(1e-300);
                    p = trial;
                    cost = trial_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = true;
                    if small_step || small_gain || cost == 0.0 {
                        return (p, cost, it, true);
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                // no descent direction left: a stationary point
                return (p, cost, it, true);
            }
        }
        (p, cost, MAX_ITERATIONS, false)
    }
}

/// Minimizes `Σ w (y - model(N))²` over the unmasked points.
pub fn fit(family: FitFamily, data: &[DataPoint], mask: &Mask) -> Result<FitResult> {
    let mut points: Vec<DataPoint> = data.iter().copied().filter(|d| mask.keeps(d.n)).collect();
    // fixed order makes the result independent of the input order
    points.sort_by(|a, b| {
        a.n.cmp(&b.n)
            .then(a.y.total_cmp(&b.y))
            .then(a.w.total_cmp(&b.w))
    });
    let k = family.params();
    let m = points.len();
    if m <= k {
        return Err(Error::InsufficientData(format!(
            "{} needs more than {k} points, got {m}",
            family.formula()
        )));
    }
    if points
        .iter()
        .any(|d| !(d.w > 0.0) || !d.y.is_finite() || !d.w.is_finite())
    {
        return Err(Error::InvalidParameter(
            "fit data needs finite values and positive weights".into(),
        ));
    }
    let problem = Problem {
        family,
        n: points.iter().map(|d| d.n as f64).collect(),
        y: points.iter().map(|d| d.y).collect(),
        sw: points.iter().map(|d| d.w.sqrt()).collect(),
    };

    let (params, ssr, iterations, converged) = if k == 2 {
        let p = problem.linear_at(0.0).ok_or(Error::SingularFit)?;
        let ssr = problem.ssr(&p);
        (p, ssr, 1, true)
    } else {
        let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
        for c0 in start_grid() {
            let Some(ab) = problem.linear_at(c0) else {
                continue;
            };
            let run = problem.levenberg_marquardt(vec![ab[0], ab[1], c0]);
            let better = match &best {
                None => true,
                Some(b) => (run.3 && !b.3) || (run.3 == b.3 && run.1 < b.1),
            };
            if better {
                best = Some(run);
            }
        }
        best.ok_or(Error::SingularFit)?
    };

    let (_, cols) = problem.linearize(&params);
    let (_, r) = qr_solve(cols, vec![0.0; m]).ok_or(Error::SingularFit)?;
    let cov = inverse_normal(&r, k);
    let dof = (m - k) as f64;
    let s2 = ssr / dof;
    let std_errors = (0..k)
        .map(|j| (s2 * cov[j * k + j]).max(0.0).sqrt())
        .collect();

    let wsum: f64 = points.iter().map(|d| d.w).sum();
    let ybar = points.iter().map(|d| d.w * d.y).sum::<f64>() / wsum;
    let sst: f64 = points
        .iter()
        .map(|d| d.w * (d.y - ybar) * (d.y - ybar))
        .sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let r2_adj = 1.0 - (1.0 - r2) * (m as f64 - 1.0) / dof;

    Ok(FitResult {
        family,
        params,
        std_errors,
        r2_adj,
        rmse: s2.sqrt(),
        ssr,
        mask: mask.clone(),
        used: points.iter().map(|d| d.n).collect(),
        weights: points.iter().map(|d| d.w).collect(),
        converged,
        iterations,
    })
}

/// Quantities that appear in the fit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    NBar,
    NMc,
    SigmaT,
    SigmaEqOverN,
    NSigmaEq,
    NAv,
    Delta,
    DeltaMc,
    DeltaMaxMc,
    OffdiagAv,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Self::NBar => "n_bar",
            Self::NMc => "n_mc",
            Self::SigmaT => "sigma_t",
            Self::SigmaEqOverN => "sigma_eq_over_n",
            Self::NSigmaEq => "n_sigma_eq",
            Self::NAv => "n_av",
            Self::Delta => "delta",
            Self::DeltaMc => "delta_mc",
            Self::DeltaMaxMc => "delta_max_mc",
            Self::OffdiagAv => "offdiag_av",
        }
    }

    pub fn value(self, r: &DiagnosticsReport) -> Option<f64> {
        match self {
            Self::NBar => Some(r.n_bar),
            Self::NMc => Some(r.n_mc),
            Self::SigmaT => Some(r.sigma_t),
            Self::SigmaEqOverN => Some(r.sigma_eq / r.n as f64),
            Self::NSigmaEq => Some(r.n_sigma_eq as f64),
            Self::NAv => Some(r.n_av),
            Self::Delta => Some(r.delta),
            Self::DeltaMc => r.delta_mc,
            Self::DeltaMaxMc => r.delta_max_mc,
            Self::OffdiagAv => Some(r.offdiag_av),
        }
    }

    /// `σ⁻²` weights for the two mean-difference quantities, 1 otherwise.
    pub fn weight(self, r: &DiagnosticsReport) -> Option<f64> {
        match self {
            Self::Delta => Some(r.sigma.powi(-2)),
            Self::DeltaMc => r.sigma_mc.map(|s| s.powi(-2)),
            _ => Some(1.0),
        }
    }
}

/// One row of the fit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitSpec {
    pub quantity: Quantity,
    pub family: FitFamily,
    /// Whether this is the headline fit for its quantity.
    pub primary: bool,
}

impl FitSpec {
    pub fn mask(&self) -> Mask {
        match self.quantity {
            Quantity::NBar => Mask::Exclude(vec![3]),
            Quantity::NMc | Quantity::Delta | Quantity::DeltaMc | Quantity::DeltaMaxMc => {
                Mask::Even
            }
            Quantity::NAv => Mask::Odd,
            _ => Mask::All,
        }
    }

    pub fn weighted(&self) -> bool {
        matches!(self.quantity, Quantity::Delta | Quantity::DeltaMc)
    }
}

/// Rows in table order.
pub fn table_specs() -> Vec<FitSpec> {
    use FitFamily::*;
    use Quantity::*;
    let row = |quantity, family, primary| FitSpec {
        quantity,
        family,
        primary,
    };
    vec![
        row(NBar, Exp, true),
        row(NBar, InverseSqrtN, false),
        row(NMc, Exp, true),
        row(NMc, InverseN, false),
        row(NMc, InverseSqrtN, false),
        row(SigmaT, Exp, true),
        row(SigmaEqOverN, Power, true),
        row(NSigmaEq, Exp, true),
        row(NSigmaEq, Power, false),
        row(NAv, InverseN, true),
        row(Delta, Exp, true),
        row(DeltaMc, Exp, true),
        row(DeltaMaxMc, Power, true),
        row(DeltaMaxMc, Exp, false),
        row(OffdiagAv, Exp, true),
    ]
}

#[derive(Debug)]
pub struct FitRow {
    pub spec: FitSpec,
    pub result: Result<FitResult>,
}

/// Collects the series for `spec` from the reports (absent values are skipped).
pub fn series(spec: &FitSpec, reports: &[DiagnosticsReport]) -> Vec<DataPoint> {
    reports
        .iter()
        .filter_map(|r| {
            let y = spec.quantity.value(r)?;
            let w = if spec.weighted() {
                spec.quantity.weight(r)?
            } else {
                1.0
            };
            Some(DataPoint { n: r.n, y, w })
        })
        .collect()
}

pub fn fit_suite(reports: &[DiagnosticsReport]) -> Vec<FitRow> {
    table_specs()
        .into_iter()
        .map(|spec| FitRow {
            spec,
            result: fit(spec.family, &series(&spec, reports), &spec.mask()),
        })
        .collect()
}
