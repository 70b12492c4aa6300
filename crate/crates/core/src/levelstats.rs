//! Nearest-neighbor level spacings and their comparison with the Wigner surmise
//! and the Poisson law.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `argmax_s p_GOE(s) = √(2/π)`.
pub const GOE_ARGMAX: f64 = 0.797_884_560_802_865_4;

/// Number of equal-width bins over `[0, max s]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinRule {
    /// `ceil(sqrt(count))`.
    #[default]
    SqrtCount,
    Fixed(usize),
}

impl BinRule {
    pub fn bins(self, count: usize) -> usize {
        match self {
            Self::SqrtCount => ((count as f64).sqrt().ceil() as usize).max(1),
            Self::Fixed(b) => b.max(1),
        }
    }
}

impl std::str::FromStr for BinRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("sqrt") {
            return Ok(Self::SqrtCount);
        }
        match s.parse::<usize>() {
            Ok(b) if b > 0 => Ok(Self::Fixed(b)),
            _ => Err(format!(
                "expected `sqrt` or a positive bin count, got `{s}`"
            )),
        }
    }
}

impl std::fmt::Display for BinRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SqrtCount => f.write_str("sqrt"),
            Self::Fixed(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn center(&self, b: usize) -> f64 {
        0.5 * (self.edges[b] + self.edges[b + 1])
    }

    /// `Σ width × density`.
    pub fn mass(&self) -> f64 {
        (0..self.bins())
            .map(|b| self.width(b) * self.density[b])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingStats {
    pub spacings: Vec<f64>,
    pub histogram: Histogram,
    pub argmax_s: f64,
    pub goe_distance: f64,
    pub poisson_distance: f64,
}

/// `s_k = (E_{k+1} - E_k) / mean gap` for ascending energies.
pub fn normalized_spacings(energies: &[f64]) -> Result<Vec<f64>> {
    if energies.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "spacing statistics need at least 3 levels, got {}",
            energies.len()
        )));
    }
    let gaps: Vec<f64> = energies.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(k) = gaps.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::Degenerate(format!(
            "levels {k} and {} are not strictly ascending",
            k + 1
        )));
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let mut s: Vec<f64> = gaps.iter().map(|g| g / mean).collect();
    // remove the last-ulp drift so the mean is 1 to round-off
    let drift = s.iter().sum::<f64>() / s.len() as f64;
    s.iter_mut().for_each(|x| *x /= drift);
    Ok(s)
}

pub fn goe_pdf(s: f64) -> f64 {
    0.5 * PI * s * (-0.25 * PI * s * s).exp()
}

pub fn poisson_pdf(s: f64) -> f64 {
    (-s).exp()
}

pub fn goe_cdf(s: f64) -> f64 {
    -(-0.25 * PI * s * s).exp_m1()
}

pub fn poisson_cdf(s: f64) -> f64 {
    -(-s).exp_m1()
}

/// `(p_GOE(s), p_Poisson(s))`.
pub fn reference_pdfs(s: f64) -> (f64, f64) {
    (goe_pdf(s), poisson_pdf(s))
}

/// Density histogram over `[0, max s]` and the center of its highest bin.
///
/// With `smoothing = m > 0` the argmax is taken over a centered moving
/// average of `2m + 1` bins; the histogram itself is left unsmoothed.
pub fn spacing_histogram(s: &[f64], rule: BinRule, smoothing: usize) -> Result<(Histogram, f64)> {
    if s.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "histogram needs at least 10 spacings, got {}",
            s.len()
        )));
    }
    let bins = rule.bins(s.len());
    let top = s.iter().copied().fold(0.0, f64::max);
    let width = top / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|b| if b == bins { top } else { b as f64 * width })
        .collect();
    let mut counts = vec![0usize; bins];
    for &x in s {
        let b = ((x / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = s.len() as f64;
    let density: Vec<f64> = (0..bins)
        .map(|b| counts[b] as f64 / (total * width))
        .collect();
    let hist = Histogram { edges, density };

    let score: Vec<f64> = if smoothing == 0 {
        hist.density.clone()
    } else {
        (0..bins)
            .map(|b| {
                let lo = b.saturating_sub(smoothing);
                let hi = (b + smoothing).min(bins - 1);
                hist.density[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect()
    };
    // strict comparison keeps the first (smallest s) maximum
    let mut best = 0;
    for b in 1..bins {
        if score[b] > score[best] {
            best = b;
        }
    }
    let argmax = hist.center(best);
    Ok((hist, argmax))
}

/// Kolmogorov distance between the empirical CDF of `s` and `cdf`.
pub fn sup_cdf_distance(s: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let f = cdf(sorted[i]);
        d = d
            .max((f - i as f64 / n).abs())
            .max((j as f64 / n - f).abs());
        i = j;
    }
    d.min(1.0)
}

pub fn spacing_stats(energies: &[f64], rule: BinRule, smoothing: usize) -> Result<SpacingStats> {
    let spacings = normalized_spacings(energies)?;
    let (histogram, argmax_s) = spacing_histogram(&spacings, rule, smoothing)?;
    let goe_distance = sup_cdf_distance(&spacings, goe_cdf);
    let poisson_distance = sup_cdf_distance(&spacings, poisson_cdf);
    Ok(SpacingStats {
        spacings,
        histogram,
        argmax_s,
        goe_distance,
        poisson_distance,
    })
}
