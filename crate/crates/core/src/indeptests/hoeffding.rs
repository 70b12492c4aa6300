use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_paired, Method, TestKind, TestResult};
use crate::numeric::mid_ranks;
use crate::{Error, Result};

/// Dense 0-based ranks: equal values share a rank, ranks are consecutive.
fn dense_ranks(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0; v.len()];
    let mut rank = 0;
    for w in 0..order.len() {
        if w > 0 && v[order[w]] != v[order[w - 1]] {
            rank += 1;
        }
        out[order[w]] = rank;
    }
    out
}

struct Fenwick(Vec<u32>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, i: usize) -> u32 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Fixed x-side of the statistic; the y-side is supplied per pairing.
struct XSide {
    /// Point indices grouped by equal x, groups ascending.
    groups: Vec<Vec<usize>>,
    r: Vec<f64>,
}

impl XSide {
    fn new(x: &[f64]) -> Self {
        let dx = dense_ranks(x);
        let mut groups = vec![Vec::new(); dx.iter().max().map_or(0, |m| m + 1)];
        for (i, &g) in dx.iter().enumerate() {
            groups[g].push(i);
        }
        Self {
            groups,
            r: mid_ranks(x),
        }
    }

    /// `D` for y dense ranks `gy` and y mid-ranks `s`, both indexed by point.
    fn statistic(&self, gy: &[usize], s: &[f64], levels: usize) -> f64 {
        let n = gy.len();
        let mut tree = Fenwick::new(levels);
        let mut q = vec![0.0; n];
        for group in &self.groups {
            for &i in group {
                let less = tree.below(gy[i]) as f64;
                let equal = (tree.below(gy[i] + 1) - tree.below(gy[i])) as f64;
                let mut same_x_less = 0.0;
                let mut same_both = 0.0;
                for &j in group {
                    if j != i {
                        if gy[j] < gy[i] {
                            same_x_less += 1.0;
                        } else if gy[j] == gy[i] {
                            same_both += 1.0;
                        }
                    }
                }
                q[i] = 1.0 + less + 0.5 * (equal + same_x_less) + 0.25 * same_both;
            }
            for &i in group {
                tree.add(gy[i]);
            }
        }
        let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (r, s, q) = (self.r[i], s[i], q[i]);
            d1 += (q - 1.0) * (q - 2.0);
            d2 += (r - 1.0) * (r - 2.0) * (s - 1.0) * (s - 2.0);
            d3 += (r - 2.0) * (s - 2.0) * (q - 1.0);
        }
        let nf = n as f64;
        30.0 * ((nf - 2.0) * (nf - 3.0) * d1 + d2 - 2.0 * (nf - 2.0) * d3)
            / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0) * (nf - 4.0))
    }
}

/// Hoeffding's `D` (scaled so that perfect dependence without ties gives 1).
pub fn hoeffding_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y, 5)?;
    let gy = dense_ranks(y);
    let levels = gy.iter().max().map_or(0, |m| m + 1);
    Ok(XSide::new(x).statistic(&gy, &mid_ranks(y), levels))
}

/// `D` with a permutation p-value `(1 + #{D* ≥ D}) / (1 + replicates)`.
///
/// Replicate `r` shuffles with its own ChaCha stream `r` under `seed`, so the
/// result does not depend on the thread count.
pub fn hoeffding_d(x: &[f64], y: &[f64], replicates: usize, seed: u64) -> Result<TestResult> {
    check_paired(x, y, 5)?;
    if replicates == 0 {
        return Err(Error::InvalidParameter(
            "hoeffding permutation test needs at least one replicate".into(),
        ));
    }
    let xs = XSide::new(x);
    let gy = dense_ranks(y);
    let levels = gy.iter().max().map_or(0, |m| m + 1);
    let sy = mid_ranks(y);
    let observed = xs.statistic(&gy, &sy, levels);
    let slack = 1e-12 * observed.abs().max(1e-300);
    let exceed: usize = (0..replicates)
        .into_par_iter()
        .map_init(
            || {
                (
                    Vec::with_capacity(y.len()),
                    vec![0usize; y.len()],
                    vec![0.0; y.len()],
                )
            },
            |(order, pg, ps), r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                order.clear();
                order.extend(0..y.len());
                order.shuffle(&mut rng);
                for (i, &j) in order.iter().enumerate() {
                    pg[i] = gy[j];
                    ps[i] = sy[j];
                }
                usize::from(xs.statistic(pg, ps, levels) >= observed - slack)
            },
        )
        .sum();
    Ok(TestResult {
        test: TestKind::Hoeffding,
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + replicates) as f64,
        method: Method::Permutation { seed, replicates },
        n: x.len(),
        dropped: 0,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    /// Direct O(n²) transliteration of the bivariate ranks.
    fn naive_d(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (r, s) = (mid_ranks(x), mid_ranks(y));
        let q: Vec<f64> = (0..n)
            .map(|i| {
                let mut q = 1.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let cx = x[j].total_cmp(&x[i]);
                    let cy = y[j].total_cmp(&y[i]);
                    use std::cmp::Ordering::*;
                    q += match (cx, cy) {
                        (Less, Less) => 1.0,
                        (Equal, Equal) => 0.25,
                        (Equal, Less) | (Less, Equal) => 0.5,
                        _ => 0.0,
                    };
                }
                q
            })
            .collect();
        let nf = n as f64;
        let d1: f64 = q.iter().map(|q| (q - 1.0) * (q - 2.0)).sum();
        let d2: f64 = (0..n)
            .map(|i| (r[i] - 1.0) * (r[i] - 2.0) * (s[i] - 1.0) * (s[i] - 2.0))
            .sum();
        let d3: f64 = (0..n)
            .map(|i| (r[i] - 2.0) * (s[i] - 2.0) * (q[i] - 1.0))
            .sum();
        30.0 * ((nf - 2.0) * (nf - 3.0) * d1 + d2 - 2.0 * (nf - 2.0) * d3)
            / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0) * (nf - 4.0))
    }

    #[test]
    fn matches_naive_bivariate_ranks_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.gen_range(5..60);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let fast = hoeffding_statistic(&x, &y).unwrap();
            assert!((fast - naive_d(&x, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_dependence_gives_one() {
        let x: Vec<f64> = (0..30).map(|k| k as f64).collect();
        assert!((hoeffding_statistic(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_data_is_not_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x: Vec<f64> = (0..300).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..300).map(|_| rng.gen()).collect();
        let r = hoeffding_d(&x, &y, 2000, 9).unwrap();
        assert!(r.statistic.abs() < 0.01);
        assert!(r.p_value > 0.05);
    }

    #[test]
    fn detects_non_monotone_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let r = hoeffding_d(&x, &y, 2000, 9).unwrap();
        assert!(r.statistic > 0.05);
        assert!(r.p_value < 0.01);
        assert_eq!(r.p_value, 1.0 / 2001.0);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x: Vec<f64> = (0..80).map(|_| rng.gen()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.gen::<f64>()).collect();
        let a = hoeffding_d(&x, &y, 500, 3).unwrap();
        let b = hoeffding_d(&x, &y, 500, 3).unwrap();
        assert_eq!(a, b);
        assert!(hoeffding_d(&x[..4], &y[..4], 10, 0).is_err());
    }
}
