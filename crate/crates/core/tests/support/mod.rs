//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use emc_core::indeptests::{
    blomqvist_beta_with, run_all_tests, BlomqvistOptions, MedianRule, MedianTies, TestConfig,
    TestKind,
};
use emc_core::model::{build_hamiltonian, ModelInstance, ModelParams};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Discrete, Hypergeometric, Normal};

/// Row-major dense square matrix.
#[derive(Clone)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn kron(&self, other: &Dense) -> Dense {
        let n = self.n * other.n;
        let mut out = Dense::zeros(n);
        for i in 0..self.n {
            for j in 0..self.n {
                let s = self.at(i, j);
                if s == 0.0 {
                    continue;
                }
                for k in 0..other.n {
                    for l in 0..other.n {
                        out.set(i * other.n + k, j * other.n + l, s * other.at(k, l));
                    }
                }
            }
        }
        out
    }

    pub fn mul(&self, other: &Dense) -> Dense {
        let n = self.n;
        let mut out = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let s = self.at(i, k);
                if s == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += s * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Dense {
        let mut out = Dense::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(j, i, self.at(i, j));
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Dense, s: f64) {
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += s * y;
        }
    }
}

/// Operator acting on factor `site` of a tensor product of `dims`.
pub fn embed(op: &Dense, site: usize, dims: &[usize]) -> Dense {
    let mut out = Dense::identity(1);
    for (s, &d) in dims.iter().enumerate() {
        let factor = if s == site {
            op.clone()
        } else {
            Dense::identity(d)
        };
        out = out.kron(&factor);
    }
    out
}

pub fn annihilator(levels: usize) -> Dense {
    let mut m = Dense::zeros(levels);
    for n in 1..levels {
        m.set(n - 1, n, (n as f64).sqrt());
    }
    m
}

/// `frac(√2·a + √7·b)` from 30-digit integer square roots.
pub fn big_frac(a: u64, b: u64) -> f64 {
    const DIGITS: u32 = 30;
    let scale = BigUint::from(10u32).pow(DIGITS);
    let part =
        |s: u64, m: u64| (BigUint::from(s) * BigUint::from(m).pow(2) * &scale * &scale).sqrt();
    let frac = (part(2, a) + part(7, b)) % &scale;
    frac.to_string().parse::<f64>().unwrap() / 1e30
}

pub fn big_f(dk: u64, dl: u64, k: u64, l: u64) -> f64 {
    let big = big_frac((k + dk).pow(3), (l + dl).pow(5));
    if big < 0.5 {
        big - 1.0
    } else {
        big
    }
}

/// Full tensor-product Hamiltonian `a ⊗ b ⊗ m_1 ⊗ … ⊗ m_2K`, primed modes
/// labelled by their position `K + k'` in the memory chain.
pub fn tensor_hamiltonian(p: &ModelParams) -> (Dense, Vec<usize>) {
    let (n, k) = (p.n as usize, p.k as u64);
    let mut dims = vec![n + 1, n + 1];
    dims.extend(std::iter::repeat_n(2, 2 * k as usize));
    let a = embed(&annihilator(n + 1), 0, &dims);
    let b = embed(&annihilator(n + 1), 1, &dims);
    let m: Vec<Dense> = (0..2 * k as usize)
        .map(|s| embed(&annihilator(2), s + 2, &dims))
        .collect();
    let number = |x: &Dense| x.transpose().mul(x);
    let hop = |x: &Dense, y: &Dense| {
        let mut h = x.transpose().mul(y);
        h.add_scaled(&y.transpose().mul(x), 1.0);
        h
    };
    let total = a.n;
    let na = number(&a);
    let mut unprimed = Dense::zeros(total);
    let mut primed = Dense::zeros(total);
    for s in 0..k as usize {
        unprimed.add_scaled(&number(&m[s]), 1.0);
        primed.add_scaled(&number(&m[k as usize + s]), 1.0);
    }
    let mut h = Dense::zeros(total);
    let (nf, delta) = (p.n as f64, p.delta);
    let mut gap_k = Dense::identity(total);
    gap_k.add_scaled(&na, -1.0 / nf);
    h.add_scaled(&gap_k.mul(&unprimed), p.epsilon);
    let mut gap_kp = Dense::identity(total);
    gap_kp.add_scaled(&na, -1.0 / (nf - delta));
    h.add_scaled(&gap_kp.mul(&primed), p.epsilon);
    h.add_scaled(&hop(&a, &b), p.c_b);
    for kk in 1..=k {
        for kp in 1..=k {
            let f = big_f(1, k + 1, kk, k + kp);
            h.add_scaled(
                &hop(&m[kk as usize - 1], &m[(k + kp) as usize - 1]),
                p.c_m * f,
            );
        }
        for l in kk + 1..=k {
            let f = big_f(1, 1, kk, l);
            h.add_scaled(&hop(&m[kk as usize - 1], &m[l as usize - 1]), p.c_m * f);
        }
    }
    for kp in 1..=k {
        for lp in kp + 1..=k {
            let f = big_f(k + 1, k + 1, k + kp, k + lp);
            h.add_scaled(
                &hop(&m[(k + kp) as usize - 1], &m[(k + lp) as usize - 1]),
                p.c_m * f,
            );
        }
    }
    (h, dims)
}

pub fn instance(n: u32) -> ModelInstance {
    let p = ModelParams::for_size(n).unwrap();
    build_hamiltonian(p, p.basis().unwrap()).unwrap()
}

/// Cyclic Jacobi; returns ascending eigenvalues and row-major eigenvectors
/// (column `α` is eigenvector `α`).
pub fn jacobi(mut a: Dense) -> (Vec<f64>, Dense) {
    let n = a.n;
    let mut v = Dense::identity(n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.at(i, j).powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.at(k, p), a.at(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.at(p, k), a.at(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.at(k, p), v.at(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a.at(x, x).total_cmp(&a.at(y, y)));
    let values = order.iter().map(|&i| a.at(i, i)).collect();
    let mut sorted = Dense::zeros(n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            sorted.set(k, new, v.at(k, old));
        }
    }
    (values, sorted)
}

pub fn dense_hamiltonian(m: &ModelInstance) -> Dense {
    let n = m.dim();
    let mut d = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            d.set(i, j, m.hamiltonian.get(i, j));
        }
    }
    d
}

/// Every diagnostic recomputed from the Jacobi eigenvectors and the textbook
/// formulas with plain loops.
pub struct Naive {
    pub n_bar: f64,
    pub sigma_t: f64,
    pub e_bar: f64,
    pub sigma_eq: f64,
    pub count: usize,
    pub n_mc: f64,
    pub n_av: f64,
    pub delta: f64,
    pub sigma: f64,
    pub delta_max: f64,
    pub delta_mc: f64,
    pub sigma_mc: f64,
    pub delta_max_mc: f64,
    pub offdiag: f64,
    pub full: Dense,
}

pub fn naive(m: &ModelInstance, mode: usize) -> Naive {
    let (e, v) = jacobi(dense_hamiltonian(m));
    let dim = m.dim();
    let start = m.basis.rank(&m.basis.initial_state()).unwrap();
    let c: Vec<f64> = (0..dim).map(|a| v.at(start, a)).collect();
    let bit = |s: usize| f64::from(u8::from(m.basis.state(s).occupied(mode as u32 - 1)));
    let mut full = Dense::zeros(dim);
    for a in 0..dim {
        for b in 0..dim {
            let mut x = 0.0;
            for s in 0..dim {
                x += v.at(s, a) * bit(s) * v.at(s, b);
            }
            full.set(a, b, x);
        }
    }
    let d: Vec<f64> = (0..dim).map(|a| full.at(a, a)).collect();
    let n_bar: f64 = (0..dim).map(|a| c[a] * c[a] * d[a]).sum();
    let mut var_t = 0.0;
    let mut abs_sum = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            if a != b {
                var_t += c[a] * c[a] * c[b] * c[b] * full.at(a, b).powi(2);
                abs_sum += full.at(a, b).abs();
            }
        }
    }
    let e_bar: f64 = (0..dim).map(|a| c[a] * c[a] * e[a]).sum();
    let sigma_eq = (0..dim)
        .map(|a| c[a] * c[a] * (e[a] - e_bar).powi(2))
        .sum::<f64>()
        .sqrt();
    let inside: Vec<bool> = e.iter().map(|x| (e_bar - x).abs() < sigma_eq).collect();
    let count = inside.iter().filter(|&&b| b).count();
    let n_mc = (0..dim).filter(|&a| inside[a]).map(|a| d[a]).sum::<f64>() / count as f64;
    let n_av = d.iter().sum::<f64>() / dim as f64;
    let diffs: Vec<f64> = (0..dim - 1).map(|a| (d[a + 1] - d[a]).abs()).collect();
    let delta = diffs.iter().sum::<f64>() / (dim as f64 - 1.0) / n_av;
    let sigma = (diffs
        .iter()
        .map(|x| (x - n_av * delta).powi(2))
        .sum::<f64>()
        / (dim as f64 - 2.0))
        .sqrt()
        / n_av;
    let delta_max = diffs.iter().cloned().fold(0.0, f64::max) / n_av;
    let pairs: Vec<f64> = (0..dim - 1)
        .filter(|&a| inside[a] && inside[a + 1])
        .map(|a| diffs[a])
        .collect();
    let delta_mc = pairs.iter().sum::<f64>() / (count as f64 - 1.0) / n_mc;
    let sigma_mc = (pairs
        .iter()
        .map(|x| (x - n_mc * delta_mc).powi(2))
        .sum::<f64>()
        / (count as f64 - 2.0))
        .sqrt()
        / n_mc;
    let delta_max_mc = pairs.iter().cloned().fold(0.0, f64::max) / n_mc;
    Naive {
        n_bar,
        sigma_t: var_t.sqrt(),
        e_bar,
        sigma_eq,
        count,
        n_mc,
        n_av,
        delta,
        sigma,
        delta_max,
        delta_mc,
        sigma_mc,
        delta_max_mc,
        offdiag: abs_sum / (dim as f64 * (dim as f64 - 1.0)),
        full,
    }
}

/// Full-space index of every sector state in the tensor ordering of
/// [`tensor_hamiltonian`].
pub fn sector_index(m: &ModelInstance, dims: &[usize]) -> Vec<usize> {
    let memory_modes = dims.len() - 2;
    m.basis
        .states()
        .iter()
        .map(|s| {
            let mut idx = s.n_a as usize * dims[1] + s.n_b as usize;
            for bit in 0..memory_modes as u32 {
                idx = idx * 2 + usize::from(s.occupied(bit));
            }
            idx
        })
        .collect()
}

/// Kolmogorov–Smirnov distance of `p` from the uniform law.
pub fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Kolmogorov–Smirnov distance of `p` from a purely atomic law given as
/// `(value, mass)` atoms; values closer than `1e-9` relative count as equal.
pub fn ks_atomic(p: &[f64], atoms: &[(f64, f64)]) -> f64 {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
    let n = p.len() as f64;
    let mut d: f64 = 0.0;
    for &(u, _) in atoms {
        let emp = p.iter().filter(|&&v| v <= u || same(v, u)).count() as f64 / n;
        let law: f64 = atoms
            .iter()
            .filter(|a| a.0 <= u || same(a.0, u))
            .map(|a| a.1)
            .sum();
        d = d.max((emp - law).abs());
    }
    assert!(
        p.iter().all(|&v| atoms.iter().any(|a| same(a.0, v))),
        "sample value outside the support of the law"
    );
    d
}

fn hypergeometric(population: u64, successes: u64, draws: u64) -> Vec<(i64, f64)> {
    let law = Hypergeometric::new(population, successes, draws).unwrap();
    (0..=draws.min(successes))
        .map(|k| (k as i64, law.pmf(k)))
        .filter(|t| t.1 > 0.0)
        .collect()
}

fn atoms_from_differences(n: u64, diffs: Vec<(i64, f64)>) -> Vec<(f64, f64)> {
    let z = Normal::standard();
    diffs
        .into_iter()
        .map(|(d, w)| (2.0 * z.sf(d.unsigned_abs() as f64 / (n as f64).sqrt()), w))
        .collect()
}

/// Null law of the Blomqvist p-value for `n` (even) continuous points with
/// midpoint medians: the upper-right quadrant count is hypergeometric.
pub fn blomqvist_null_atoms(n: u64) -> Vec<(f64, f64)> {
    let diffs = hypergeometric(n, n / 2, n / 2)
        .into_iter()
        .map(|(k, w)| (4 * k - n as i64, w))
        .collect();
    atoms_from_differences(n, diffs)
}

/// Same for the lower median with on-median points given a zero sign. With
/// `m = n/2`, `m - 1` ranks lie below each median and `m` above. Conditioning
/// on where the x-median point lands and which point sits on the y-median
/// leaves a hypergeometric count of above/above pairs.
pub fn blomqvist_lower_zero_null_atoms(n: u64) -> Vec<(f64, f64)> {
    let m = n / 2;
    let nf = n as f64;
    let mut diffs = Vec::new();
    // the same point is on both medians
    for (a, w) in hypergeometric(n - 1, m, m) {
        diffs.push((4 * a - 2 * m as i64 - 1, w / nf));
    }
    // distinct points: j is the y-side of the x-median point, i the x-side of
    // the y-median point
    for (j_above, pj) in [(true, m as f64 / nf), (false, (m - 1) as f64 / nf)] {
        for (i_above, pi) in [
            (true, m as f64 / (nf - 1.0)),
            (false, (m - 1) as f64 / (nf - 1.0)),
        ] {
            let ax = m - u64::from(i_above);
            let bx = m - 1 - u64::from(!i_above);
            let ay = m - u64::from(j_above);
            for (a, w) in hypergeometric(n - 2, ay, ax) {
                diffs.push((4 * a + bx as i64 - ax as i64 - 2 * ay as i64, w * pj * pi));
            }
        }
    }
    atoms_from_differences(n, diffs)
}

/// Independent uniform pairs; for each replicate the p-value of every test
/// (in [`TestKind::ALL`] order), followed by Blomqvist β under the study's
/// lower-median convention.
pub fn null_p_values(replicates: usize, size: usize, seed: u64) -> Vec<Vec<f64>> {
    let cfg = TestConfig {
        replicates: 1000,
        ..TestConfig::default()
    };
    let lower_zero = BlomqvistOptions {
        median: MedianRule::Lower,
        ties: MedianTies::Zero,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![Vec::with_capacity(replicates); TestKind::ALL.len() + 1];
    for r in 0..replicates {
        let x: Vec<f64> = (0..size).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..size).map(|_| rng.gen()).collect();
        let cfg = TestConfig {
            seed: r as u64,
            ..cfg
        };
        for (k, out) in run_all_tests(&x, &y, &cfg).into_iter().enumerate() {
            p[k].push(out.result.unwrap().p_value);
        }
        p[TestKind::ALL.len()].push(blomqvist_beta_with(&x, &y, lower_zero).unwrap().p_value);
    }
    p
}
