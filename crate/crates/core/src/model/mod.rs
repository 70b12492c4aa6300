//! Model parameters, sparse Hamiltonian assembly and the initial state.
//!
//! Every parameter follows from the system size `N` (energy unit `e = 1`):
//! `K = K' = N`, `N_m = floor(N/2)`, `ε = √K`, `C_b = 1/√N`,
//! `C_m = 1/(√N_m √K)` and `Δ = N/2`.

mod coupling;
mod sparse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use coupling::{coupling_big_f, coupling_f, fold_coupling, CouplingFamily};
pub use sparse::SparseSymmetric;

use crate::fock::{FockState, SectorBasis};
use crate::{Error, Result};

/// How primed memory modes are labelled when evaluating `F_i(k, l)`.
///
/// With [`SiteIndex`](Self::SiteIndex) the primed mode `k'` enters the
/// coupling formula as its position `K + k'` in the combined `2K`-mode chain;
/// with [`SectorLocal`](Self::SectorLocal) it enters as `k'` itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeLabels {
    #[default]
    SiteIndex,
    SectorLocal,
}

impl ModeLabels {
    /// Numeric tag stored in spectrum cache files.
    pub fn tag(self) -> f64 {
        match self {
            Self::SiteIndex => 0.0,
            Self::SectorLocal => 1.0,
        }
    }

    fn primed(self, k_prime: u64, k_modes: u64) -> u64 {
        match self {
            Self::SiteIndex => k_modes + k_prime,
            Self::SectorLocal => k_prime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u32,
    /// Memory modes per sector.
    pub k: u32,
    pub n_m: u32,
    pub epsilon: f64,
    pub c_b: f64,
    pub c_m: f64,
    pub delta: f64,
    pub labels: ModeLabels,
}

impl ModelParams {
    pub fn for_size(n: u32) -> Result<Self> {
        Self::with_labels(n, ModeLabels::default())
    }

    pub fn with_labels(n: u32, labels: ModeLabels) -> Result<Self> {
        if !(2..=31).contains(&n) {
            return Err(Error::InvalidParameter(format!(
                "system size must lie in 2..=31, got {n}"
            )));
        }
        let k = n;
        let n_m = n / 2;
        Ok(Self {
            n,
            k,
            n_m,
            epsilon: (k as f64).sqrt(),
            c_b: 1.0 / (n as f64).sqrt(),
            c_m: 1.0 / ((n_m as f64).sqrt() * (k as f64).sqrt()),
            delta: n as f64 / 2.0,
            labels,
        })
    }

    /// Ratio `Δ / (N / (1 + √N_m √K))`; the primed-sector gap needs it ≫ 1.
    pub fn gap_condition_ratio(&self) -> f64 {
        let bound = self.n as f64 / (1.0 + (self.n_m as f64).sqrt() * (self.k as f64).sqrt());
        self.delta / bound
    }

    pub fn sector_dimension(&self) -> usize {
        (self.n as usize + 1) * crate::fock::binomial(2 * self.k, self.n_m) as usize
    }

    pub fn basis(&self) -> Result<SectorBasis> {
        SectorBasis::enumerate(self.n, self.k, self.n_m)
    }

    /// One hard-core hop term `C_m f (a_p† a_q + a_q† a_p)` per unordered mode pair.
    pub fn memory_hops(&self) -> Vec<MemoryHop> {
        let k_modes = self.k as u64;
        let mut hops = Vec::new();
        for k in 1..=k_modes {
            for kp in 1..=k_modes {
                let f = coupling_f(
                    CouplingFamily::Cross,
                    k,
                    self.labels.primed(kp, k_modes),
                    k_modes,
                );
                hops.push(MemoryHop::new(k - 1, k_modes + kp - 1, self.c_m * f));
            }
        }
        for k in 1..=k_modes {
            for l in k + 1..=k_modes {
                let f = coupling_f(CouplingFamily::Unprimed, k, l, k_modes);
                hops.push(MemoryHop::new(k - 1, l - 1, self.c_m * f));
            }
        }
        for kp in 1..=k_modes {
            for lp in kp + 1..=k_modes {
                let f = coupling_f(
                    CouplingFamily::Primed,
                    self.labels.primed(kp, k_modes),
                    self.labels.primed(lp, k_modes),
                    k_modes,
                );
                hops.push(MemoryHop::new(
                    k_modes + kp - 1,
                    k_modes + lp - 1,
                    self.c_m * f,
                ));
            }
        }
        hops
    }

    /// `ε(1 - n_a/N) Σ n_k + ε(1 - n_a/(N - Δ)) Σ n_k'`.
    pub fn diagonal_energy(&self, state: &FockState) -> f64 {
        let unprimed_mask = (1u64 << self.k) - 1;
        let unprimed = (state.memory & unprimed_mask).count_ones() as f64;
        let primed = (state.memory & !unprimed_mask).count_ones() as f64;
        let n_a = state.n_a as f64;
        let n = self.n as f64;
        self.epsilon * (1.0 - n_a / n) * unprimed
            + self.epsilon * (1.0 - n_a / (n - self.delta)) * primed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryHop {
    pub mask: u64,
    pub amplitude: f64,
}

impl MemoryHop {
    fn new(p: u64, q: u64, amplitude: f64) -> Self {
        Self {
            mask: 1 << p | 1 << q,
            amplitude,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub params: ModelParams,
    pub basis: SectorBasis,
    pub hamiltonian: SparseSymmetric,
}

impl ModelInstance {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn nnz(&self) -> usize {
        self.hamiltonian.nnz()
    }
}

/// Assembles the Hamiltonian row by row, each row being `H|j>` for basis ket `j`.
pub fn build_hamiltonian(params: ModelParams, basis: SectorBasis) -> Result<ModelInstance> {
    if basis.n() != params.n || basis.k() != params.k || basis.n_m() != params.n_m {
        return Err(Error::DimensionMismatch {
            expected: params.sector_dimension(),
            got: basis.len(),
        });
    }
    let hops = params.memory_hops();
    let rows: Vec<Vec<(usize, f64)>> = (0..basis.len())
        .into_par_iter()
        .map(|j| apply_to_ket(&params, &basis, &hops, j))
        .collect::<Result<_>>()?;
    let hamiltonian = SparseSymmetric::from_rows(rows);
    Ok(ModelInstance {
        params,
        basis,
        hamiltonian,
    })
}

fn apply_to_ket(
    params: &ModelParams,
    basis: &SectorBasis,
    hops: &[MemoryHop],
    j: usize,
) -> Result<Vec<(usize, f64)>> {
    let state = basis.state(j);
    let mut row = Vec::with_capacity(3 + hops.len() / 2);
    row.push((j, params.diagonal_energy(&state)));

    // a† b: one particle from b to a
    if state.n_b > 0 {
        let amp = params.c_b * (((state.n_a + 1) * state.n_b) as f64).sqrt();
        let target = FockState::new(state.n_a + 1, state.n_b - 1, state.memory);
        row.push((basis.rank(&target)?, amp));
    }
    // b† a
    if state.n_a > 0 {
        let amp = params.c_b * ((state.n_a * (state.n_b + 1)) as f64).sqrt();
        let target = FockState::new(state.n_a - 1, state.n_b + 1, state.memory);
        row.push((basis.rank(&target)?, amp));
    }
    for hop in hops {
        // exactly one of the two modes occupied: the particle moves, amplitude 1
        if (state.memory & hop.mask).count_ones() == 1 {
            let target = FockState::new(state.n_a, state.n_b, state.memory ^ hop.mask);
            row.push((basis.rank(&target)?, hop.amplitude));
        }
    }
    Ok(row)
}

/// Unit vector on the initial state `|N, 0, 1..1, 0..0>`.
pub fn initial_state_vector(params: &ModelParams, basis: &SectorBasis) -> Result<Vec<f64>> {
    if basis.n() != params.n || basis.n_m() != params.n_m {
        return Err(Error::DimensionMismatch {
            expected: params.sector_dimension(),
            got: basis.len(),
        });
    }
    let mut v = vec![0.0; basis.len()];
    v[basis.rank(&basis.initial_state())?] = 1.0;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn instance(n: u32) -> ModelInstance {
        let params = ModelParams::for_size(n).unwrap();
        build_hamiltonian(params, params.basis().unwrap()).unwrap()
    }

    #[test]
    fn derived_parameters_satisfy_their_identities() {
        for n in 2..=9 {
            let p = ModelParams::for_size(n).unwrap();
            assert_eq!(p.k, n);
            assert_eq!(p.n_m, n / 2);
            assert!((p.epsilon * p.epsilon / p.k as f64 - 1.0).abs() < 1e-14);
            assert!((p.c_b * p.c_b * n as f64 - 1.0).abs() < 1e-14);
            assert!((p.c_m * p.c_m * (p.n_m * p.k) as f64 - 1.0).abs() < 1e-14);
            assert_eq!(p.delta, n as f64 / 2.0);
            assert!(p.gap_condition_ratio() > 0.0);
        }
        assert_eq!(ModelParams::for_size(7).unwrap().delta, 3.5);
    }

    #[test]
    fn rejects_sizes_out_of_range() {
        assert!(ModelParams::for_size(1).is_err());
        assert!(ModelParams::for_size(40).is_err());
    }

    #[test]
    fn hamiltonian_is_exactly_symmetric() {
        for n in 2..=6 {
            let m = instance(n);
            let h = &m.hamiltonian;
            for r in 0..h.dim() {
                for (c, v) in h.row(r) {
                    assert_eq!(h.get(c, r), v, "N={n} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn initial_state_has_zero_energy_and_is_a_basis_vector() {
        for n in 2..=8 {
            let m = instance(n);
            let v = initial_state_vector(&m.params, &m.basis).unwrap();
            assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
            let j = v.iter().position(|&x| x == 1.0).unwrap();
            let s = m.basis.state(j);
            assert_eq!((s.n_a, s.n_b), (n, 0));
            assert_eq!(m.hamiltonian.get(j, j), 0.0);
            let hv = m.hamiltonian.mul_vec(&v);
            let energy: f64 = hv.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert_eq!(energy, 0.0);
        }
    }

    #[test]
    fn nnz_respects_hop_target_bound() {
        for n in 2..=6 {
            let m = instance(n);
            let (k, n_m) = (m.params.k as usize, m.params.n_m as usize);
            let bound = m.dim() * (1 + 2 + n_m * (2 * k - n_m));
            assert!(m.nnz() <= bound, "N={n}: {} > {bound}", m.nnz());
        }
    }

    #[test]
    fn commutes_with_conserved_charges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=5 {
            let m = instance(n);
            let charges: [Vec<f64>; 2] = [
                m.basis
                    .states()
                    .iter()
                    .map(|s| (s.n_a + s.n_b) as f64)
                    .collect(),
                m.basis
                    .states()
                    .iter()
                    .map(|s| s.memory_count() as f64)
                    .collect(),
            ];
            let v: Vec<f64> = (0..m.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for q in &charges {
                let qv: Vec<f64> = v.iter().zip(q).map(|(a, b)| a * b).collect();
                let hqv = m.hamiltonian.mul_vec(&qv);
                let qhv: Vec<f64> = m
                    .hamiltonian
                    .mul_vec(&v)
                    .iter()
                    .zip(q)
                    .map(|(a, b)| a * b)
                    .collect();
                let scale = hqv.iter().map(|x| x.abs()).fold(0.0, f64::max);
                for (a, b) in hqv.iter().zip(&qhv) {
                    assert!((a - b).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn mismatched_basis_is_rejected() {
        let params = ModelParams::for_size(4).unwrap();
        let basis = SectorBasis::enumerate(4, 4, 1).unwrap();
        assert!(matches!(
            build_hamiltonian(params, basis),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mode_labels_change_only_primed_couplings() {
        let site = ModelParams::for_size(4).unwrap();
        let local = ModelParams::with_labels(4, ModeLabels::SectorLocal).unwrap();
        let a = site.memory_hops();
        let b = local.memory_hops();
        let k = site.k as usize;
        // the unprimed family sits between the cross and the primed families
        let unprimed = k * k..k * k + k * (k - 1) / 2;
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            assert_eq!(x.mask, y.mask);
            if unprimed.contains(&i) {
                assert_eq!(x.amplitude, y.amplitude);
            }
        }
        assert_ne!(a, b);
    }
}
