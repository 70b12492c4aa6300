//! Thermalization and ETH diagnostics for a single-mode occupation `n̂_i`.
//!
//! All quantities are expressed in the eigenbasis. Off-diagonal elements
//! `n_{i,αβ} = Σ_{s∈P} V_{sα} V_{sβ}` (with `P` the Fock states that have
//! mode `i` occupied) are never materialized in full. They are swept in
//! square blocks of `V_Pᵀ V_P`, which bounds the working set at `N = 8`.

use serde::{Deserialize, Serialize};

use crate::fock::SectorBasis;
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::spectrum::Spectrum;
use crate::{Error, Result};

/// Working set of one off-diagonal block, in bytes.
pub const DEFAULT_BLOCK_BYTES: usize = 256 << 20;

/// Eigenbasis coefficients `C_α = <α|in>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub c: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CoefficientVector {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }
}

pub fn coefficients(spectrum: &Spectrum, in_vec: &[f64]) -> Result<CoefficientVector> {
    let n = spectrum.dim();
    if in_vec.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: in_vec.len(),
        });
    }
    let nonzero: Vec<usize> = (0..n).filter(|&s| in_vec[s] != 0.0).collect();
    let c: Vec<f64> = if nonzero.len() == 1 {
        // a basis vector just picks one row of V
        let (s, x) = (nonzero[0], in_vec[nonzero[0]]);
        (0..n).map(|alpha| x * spectrum.vector(alpha)[s]).collect()
    } else {
        let mut out = vec![0.0; n];
        if n > 0 {
            let n32 = n as i32;
            unsafe {
                blas::dgemv(
                    b'T',
                    n32,
                    n32,
                    1.0,
                    spectrum.vectors(),
                    n32,
                    in_vec,
                    1,
                    0.0,
                    &mut out,
                    1,
                );
            }
        }
        out
    };
    let weights = c.iter().map(|x| x * x).collect();
    Ok(CoefficientVector { c, weights })
}

/// `n̂_i` in the eigenbasis: diagonal elements plus a blocked off-diagonal view.
#[derive(Debug, Clone)]
pub struct EigenbasisObservable {
    mode: usize,
    dim: usize,
    diag: Vec<f64>,
    /// Fock indices with mode `i` occupied.
    support: Vec<usize>,
    /// `V_P`, column-major with `support.len()` rows.
    restricted: Vec<f64>,
    block: usize,
}

impl EigenbasisObservable {
    /// 1-based mode index.
    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `trace(n̂_i)`, the number of Fock states with mode `i` occupied.
    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn with_block_size(mut self, block: usize) -> Self {
        self.block = block.max(1);
        self
    }

    fn rows(&self) -> usize {
        self.support.len()
    }

    pub fn element(&self, alpha: usize, beta: usize) -> f64 {
        let p = self.rows();
        let a = &self.restricted[alpha * p..(alpha + 1) * p];
        let b = &self.restricted[beta * p..(beta + 1) * p];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// `n_{i,αβ}` for `α ∈ rows`, `β ∈ cols`, column-major `rows.len() × cols.len()`.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<f64> {
        let (m, n) = (rows.len(), cols.len());
        let mut out = vec![0.0; m * n];
        let p = self.rows();
        if m == 0 || n == 0 || p == 0 {
            return out;
        }
        let a = &self.restricted[rows.start * p..rows.end * p];
        let b = &self.restricted[cols.start * p..cols.end * p];
        unsafe {
            blas::dgemm(
                b'T', b'N', m as i32, n as i32, p as i32, 1.0, a, p as i32, b, p as i32, 0.0,
                &mut out, m as i32,
            );
        }
        out
    }

    /// Applies `f` to every upper-triangle block `(I, J)`, `I ≤ J`, in a fixed order.
    fn sweep<F: FnMut(std::ops::Range<usize>, std::ops::Range<usize>, &[f64])>(&self, mut f: F) {
        let b = self.block;
        let starts: Vec<usize> = (0..self.dim).step_by(b).collect();
        for (bi, &i0) in starts.iter().enumerate() {
            let rows = i0..(i0 + b).min(self.dim);
            for &j0 in &starts[bi..] {
                let cols = j0..(j0 + b).min(self.dim);
                let g = self.block(rows.clone(), cols.clone());
                f(rows.clone(), cols, &g);
            }
        }
    }
}

fn default_block(dim: usize) -> usize {
    let side = ((DEFAULT_BLOCK_BYTES / 8) as f64).sqrt() as usize;
    side.clamp(64, dim.max(64))
}

pub fn observable_matrix(
    spectrum: &Spectrum,
    basis: &SectorBasis,
    mode: usize,
) -> Result<EigenbasisObservable> {
    let modes = 2 * basis.k() as usize;
    if !(1..=modes).contains(&mode) {
        return Err(Error::InvalidParameter(format!(
            "mode index must lie in 1..={modes}, got {mode}"
        )));
    }
    if basis.len() != spectrum.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: spectrum.dim(),
        });
    }
    let bit = mode - 1;
    let support: Vec<usize> = (0..basis.len())
        .filter(|&s| basis.state(s).occupied(bit as u32))
        .collect();
    let dim = spectrum.dim();
    let p = support.len();
    let mut restricted = Vec::with_capacity(p * dim);
    let mut diag = Vec::with_capacity(dim);
    for alpha in 0..dim {
        let v = spectrum.vector(alpha);
        let start = restricted.len();
        restricted.extend(support.iter().map(|&s| v[s]));
        diag.push(restricted[start..].iter().map(|x| x * x).sum());
    }
    Ok(EigenbasisObservable {
        mode,
        dim,
        diag,
        support,
        restricted,
        block: default_block(dim),
    })
}

/// `n̄_i = Σ_α C_α² n_{i,αα}`.
pub fn infinite_time_average(c: &CoefficientVector, o: &EigenbasisObservable) -> f64 {
    compensated_sum(c.weights.iter().zip(&o.diag).map(|(w, d)| w * d))
}

/// `<n̂_i(t)>` at one time.
pub fn expectation_t(c: &CoefficientVector, o: &EigenbasisObservable, s: &Spectrum, t: f64) -> f64 {
    expectation_series(c, o, s, &[t])[0]
}

/// `<n̂_i(t)> = Σ_{s∈P} |Σ_α V_{sα} C_α e^{-i E_α t}|²` on a batch of times.
pub fn expectation_series(
    c: &CoefficientVector,
    o: &EigenbasisObservable,
    s: &Spectrum,
    times: &[f64],
) -> Vec<f64> {
    const BATCH: usize = 256;
    let n = o.dim;
    let p = o.rows();
    let mut out = Vec::with_capacity(times.len());
    if p == 0 {
        out.resize(times.len(), 0.0);
        return out;
    }
    for chunk in times.chunks(BATCH) {
        let nt = chunk.len();
        let mut re = vec![0.0; n * nt];
        let mut im = vec![0.0; n * nt];
        for (j, &t) in chunk.iter().enumerate() {
            for alpha in 0..n {
                let (sin, cos) = (s.energies()[alpha] * t).sin_cos();
                re[alpha + j * n] = c.c[alpha] * cos;
                im[alpha + j * n] = c.c[alpha] * sin;
            }
        }
        let mut pr = vec![0.0; p * nt];
        let mut pi = vec![0.0; p * nt];
        unsafe {
            blas::dgemm(
                b'N',
                b'N',
                p as i32,
                nt as i32,
                n as i32,
                1.0,
                &o.restricted,
                p as i32,
                &re,
                n as i32,
                0.0,
                &mut pr,
                p as i32,
            );
            blas::dgemm(
                b'N',
                b'N',
                p as i32,
                nt as i32,
                n as i32,
                1.0,
                &o.restricted,
                p as i32,
                &im,
                n as i32,
                0.0,
                &mut pi,
                p as i32,
            );
        }
        for j in 0..nt {
            let col = j * p..(j + 1) * p;
            out.push(compensated_sum(
                pr[col.clone()]
                    .iter()
                    .zip(&pi[col])
                    .map(|(a, b)| a * a + b * b),
            ));
        }
    }
    out
}

/// Evenly spaced times `t_0, t_0 + dt, …` not exceeding `t_max` (up to round-off).
pub fn time_grid(t_min: f64, t_max: f64, step: f64) -> Vec<f64> {
    if step <= 0.0 || t_max < t_min {
        return vec![t_min];
    }
    let count = ((t_max - t_min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| t_min + k as f64 * step).collect()
}

/// Both off-diagonal sums of one blocked sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalSums {
    /// `Σ_{α≠β} |n_{i,αβ}|`.
    pub abs_sum: f64,
    /// `Σ_{α≠β} C_α² C_β² n_{i,αβ}²`.
    pub weighted_sq_sum: f64,
}

pub fn offdiag_sums(c: &CoefficientVector, o: &EigenbasisObservable) -> OffDiagonalSums {
    let w = &c.weights;
    let mut abs_sum = CompensatedSum::default();
    let mut sq_sum = CompensatedSum::default();
    o.sweep(|rows, cols, g| {
        let m = rows.len();
        let same = rows.start == cols.start;
        let factor = if same { 1.0 } else { 2.0 };
        let mut block_abs = 0.0;
        let mut block_sq = 0.0;
        for (jj, beta) in cols.clone().enumerate() {
            let col = &g[jj * m..(jj + 1) * m];
            for (ii, alpha) in rows.clone().enumerate() {
                if same && alpha == beta {
                    continue;
                }
                let x = col[ii];
                block_abs += x.abs();
                block_sq += w[alpha] * w[beta] * x * x;
            }
        }
        abs_sum.add(factor * block_abs);
        sq_sum.add(factor * block_sq);
    });
    OffDiagonalSums {
        abs_sum: abs_sum.value(),
        weighted_sq_sum: sq_sum.value(),
    }
}

/// `σ_{i,t} = [Σ_{α≠β} C_α² C_β² n_{i,αβ}²]^{1/2}`.
pub fn temporal_fluctuation(c: &CoefficientVector, o: &EigenbasisObservable) -> f64 {
    offdiag_sums(c, o).weighted_sq_sum.max(0.0).sqrt()
}

/// `Σ_{α≠β} |n_{i,αβ}| / (𝒩(𝒩 - 1))`.
pub fn offdiag_abs_average(o: &EigenbasisObservable) -> f64 {
    let n = o.dim;
    if n < 2 {
        return 0.0;
    }
    let unit = CoefficientVector {
        c: vec![0.0; n],
        weights: vec![0.0; n],
    };
    offdiag_sums(&unit, o).abs_sum / (n as f64 * (n as f64 - 1.0))
}

/// `(Ē, σ_{E,q})` in the centered form.
pub fn energy_stats(c: &CoefficientVector, s: &Spectrum) -> (f64, f64) {
    let e = s.energies();
    let mean = compensated_sum(c.weights.iter().zip(e).map(|(w, x)| w * x));
    let var = compensated_sum(
        c.weights
            .iter()
            .zip(e)
            .map(|(w, x)| w * (x - mean) * (x - mean)),
    );
    (mean, var.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microcanonical {
    pub n_mc: f64,
    /// `𝒩_{σ_{E,q}}`.
    pub count: usize,
    pub in_window: Vec<bool>,
}

/// Unweighted mean of `n_{i,αα}` over `|Ē - E_α| < halfwidth`.
pub fn microcanonical(
    s: &Spectrum,
    o: &EigenbasisObservable,
    e_bar: f64,
    halfwidth: f64,
) -> Result<Microcanonical> {
    if !(halfwidth > 0.0) {
        return Err(Error::EmptyWindow { halfwidth });
    }
    let in_window: Vec<bool> = s
        .energies()
        .iter()
        .map(|e| (e_bar - e).abs() < halfwidth)
        .collect();
    let count = in_window.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::EmptyWindow { halfwidth });
    }
    let n_mc = compensated_sum(
        o.diag
            .iter()
            .zip(&in_window)
            .filter(|(_, &inside)| inside)
            .map(|(d, _)| *d),
    ) / count as f64;
    Ok(Microcanonical {
        n_mc,
        count,
        in_window,
    })
}

/// Neighbor-difference statistics of the diagonal elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagStatistics {
    pub n_av: f64,
    pub delta: f64,
    pub sigma: f64,
    pub delta_max: f64,
    /// Absent when fewer than two neighbor pairs lie inside the window.
    pub delta_mc: Option<f64>,
    pub sigma_mc: Option<f64>,
    pub delta_max_mc: Option<f64>,
}

pub fn diag_statistics(
    o: &EigenbasisObservable,
    n_mc: f64,
    in_window: &[bool],
) -> Result<DiagStatistics> {
    let d = &o.diag;
    let n = d.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "neighbor statistics need at least 3 levels, got {n}"
        )));
    }
    if in_window.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: in_window.len(),
        });
    }
    let n_av = compensated_sum(d.iter().copied()) / n as f64;
    let diffs: Vec<f64> = d.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mean_diff = compensated_sum(diffs.iter().copied()) / (n - 1) as f64;
    let spread = compensated_sum(diffs.iter().map(|x| (x - mean_diff) * (x - mean_diff)));
    let max_diff = diffs.iter().copied().fold(0.0, f64::max);

    let inside: Vec<f64> = diffs
        .iter()
        .enumerate()
        .filter(|&(a, _)| in_window[a] && in_window[a + 1])
        .map(|(_, x)| *x)
        .collect();
    let count = in_window.iter().filter(|&&b| b).count();
    let (delta_mc, sigma_mc, delta_max_mc) = if inside.len() >= 2 && count >= 3 {
        let mean_mc = compensated_sum(inside.iter().copied()) / (count - 1) as f64;
        let spread_mc = compensated_sum(inside.iter().map(|x| (x - mean_mc) * (x - mean_mc)));
        let max_mc = inside.iter().copied().fold(0.0, f64::max);
        (
            Some(mean_mc / n_mc),
            Some((spread_mc / (count - 2) as f64).sqrt() / n_mc),
            Some(max_mc / n_mc),
        )
    } else {
        (None, None, None)
    };
    Ok(DiagStatistics {
        n_av,
        delta: mean_diff / n_av,
        sigma: (spread / (n - 2) as f64).sqrt() / n_av,
        delta_max: max_diff / n_av,
        delta_mc,
        sigma_mc,
        delta_max_mc,
    })
}

/// `(Δ_{n_{i,αα}}, Δ_{C_α²})` = `(n_{i,αα}/n_{i,av} - 1, 𝒩 C_α² - 1)`.
pub fn normalized_fluctuations(
    o: &EigenbasisObservable,
    c: &CoefficientVector,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = o.dim as f64;
    let n_av = compensated_sum(o.diag.iter().copied()) / n;
    if !(n_av > 0.0) {
        return Err(Error::Degenerate(
            "mean diagonal element is zero; fluctuations undefined".into(),
        ));
    }
    let dn = o.diag.iter().map(|d| d / n_av - 1.0).collect();
    let dc = c.weights.iter().map(|w| w * n - 1.0).collect();
    Ok((dn, dc))
}

/// Every scalar and series diagnostic for one `N` and one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n: u32,
    pub mode: usize,
    pub dim: usize,
    pub n_bar: f64,
    pub sigma_t: f64,
    pub e_bar: f64,
    pub sigma_eq: f64,
    pub n_sigma_eq: usize,
    pub n_mc: f64,
    pub n_av: f64,
    pub delta: f64,
    pub sigma: f64,
    pub delta_mc: Option<f64>,
    pub sigma_mc: Option<f64>,
    pub delta_max: f64,
    pub delta_max_mc: Option<f64>,
    pub offdiag_av: f64,
    pub delta_n: Vec<f64>,
    pub delta_c2: Vec<f64>,
    pub energies: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub diag: Vec<f64>,
    pub in_window: Vec<bool>,
}

/// Runs every diagnostic for the initial state `in_vec`.
pub fn compute_report(
    n: u32,
    s: &Spectrum,
    basis: &SectorBasis,
    in_vec: &[f64],
    mode: usize,
) -> Result<DiagnosticsReport> {
    let c = coefficients(s, in_vec)?;
    let o = observable_matrix(s, basis, mode)?;
    report_from_parts(n, s, &c, &o)
}

pub fn report_from_parts(
    n: u32,
    s: &Spectrum,
    c: &CoefficientVector,
    o: &EigenbasisObservable,
) -> Result<DiagnosticsReport> {
    let n_bar = infinite_time_average(c, o);
    let sums = offdiag_sums(c, o);
    let dim = o.dim;
    let (e_bar, sigma_eq) = energy_stats(c, s);
    let mc = microcanonical(s, o, e_bar, sigma_eq)?;
    let stats = diag_statistics(o, mc.n_mc, &mc.in_window)?;
    let (delta_n, delta_c2) = normalized_fluctuations(o, c)?;
    Ok(DiagnosticsReport {
        n,
        mode: o.mode,
        dim,
        n_bar,
        sigma_t: sums.weighted_sq_sum.max(0.0).sqrt(),
        e_bar,
        sigma_eq,
        n_sigma_eq: mc.count,
        n_mc: mc.n_mc,
        n_av: stats.n_av,
        delta: stats.delta,
        sigma: stats.sigma,
        delta_mc: stats.delta_mc,
        sigma_mc: stats.sigma_mc,
        delta_max: stats.delta_max,
        delta_max_mc: stats.delta_max_mc,
        offdiag_av: if dim > 1 {
            sums.abs_sum / (dim as f64 * (dim as f64 - 1.0))
        } else {
            0.0
        },
        delta_n,
        delta_c2,
        energies: s.energies().to_vec(),
        coefficients: c.c.clone(),
        diag: o.diag.clone(),
        in_window: mc.in_window,
    })
}
