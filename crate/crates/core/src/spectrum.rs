//! Full eigendecomposition of a model instance and the sector sanity checks.
//!
//! The dense solve uses LAPACK `dsyevr` (Householder tridiagonalization plus
//! MRRR). It keeps the peak footprint at two `𝒩 × 𝒩` buffers, which is what
//! makes the `N = 8` sector (`𝒩 = 16380`) fit on a 6 GB machine.

use rayon::prelude::*;

use crate::fock::SectorBasis;
use crate::model::ModelInstance;
use crate::{Error, Result};

/// Default lower bound on the normalized minimum level gap.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Spectrum {
    dim: usize,
    energies: Vec<f64>,
    /// Column-major; column `α` is eigenvector `|α>` in the Fock basis.
    vectors: Vec<f64>,
    residual_norm: f64,
}

impl Spectrum {
    /// Wraps precomputed eigenpairs; the vectors are taken as given.
    pub fn from_parts(energies: Vec<f64>, vectors: Vec<f64>, residual_norm: f64) -> Result<Self> {
        let dim = energies.len();
        if vectors.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: vectors.len(),
            });
        }
        Ok(Self {
            dim,
            energies,
            vectors,
            residual_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// All eigenvectors, column-major.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector(&self, alpha: usize) -> &[f64] {
        &self.vectors[alpha * self.dim..(alpha + 1) * self.dim]
    }

    /// `max_α ‖H v_α - E_α v_α‖₂` as measured against the sparse Hamiltonian.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn max_abs_energy(&self) -> f64 {
        self.energies.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Recomputes the residual against `model` and stores it.
    pub fn refresh_residual(&mut self, model: &ModelInstance) {
        self.residual_norm = residual_norm(model, &self.energies, &self.vectors);
    }

    /// `max |VᵀV - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim;
        let mut gram = vec![0.0; n * n];
        let n32 = n as i32;
        unsafe {
            blas::dgemm(
                b'T',
                b'N',
                n32,
                n32,
                n32,
                1.0,
                &self.vectors,
                n32,
                &self.vectors,
                n32,
                0.0,
                &mut gram,
                n32,
            );
        }
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[i + j * n] - target).abs());
            }
        }
        worst
    }

    /// `‖V diag(E) Vᵀ - H‖_F / ‖H‖_F`.
    pub fn reconstruction_error(&self, model: &ModelInstance) -> f64 {
        let n = self.dim;
        let mut scaled = self.vectors.clone();
        for (alpha, col) in scaled.chunks_mut(n).enumerate() {
            col.iter_mut().for_each(|x| *x *= self.energies[alpha]);
        }
        let mut rebuilt = model.hamiltonian.to_dense();
        let n32 = n as i32;
        unsafe {
            blas::dgemm(
                b'N',
                b'T',
                n32,
                n32,
                n32,
                1.0,
                &scaled,
                n32,
                &self.vectors,
                n32,
                -1.0,
                &mut rebuilt,
                n32,
            );
        }
        let diff: f64 = rebuilt.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / model.hamiltonian.frobenius_sq().sqrt()
    }
}

/// Diagonalizes the full sector. Eigenvalues ascend; each eigenvector's
/// largest-magnitude component is made positive.
pub fn diagonalize(model: &ModelInstance) -> Result<Spectrum> {
    let dim = model.dim();
    let dense = model.hamiltonian.to_dense();
    let (energies, mut vectors) = symmetric_eigen(dense, dim)?;
    fix_signs(&mut vectors, dim);
    let residual = residual_norm(model, &energies, &vectors);
    Ok(Spectrum {
        dim,
        energies,
        vectors,
        residual_norm: residual,
    })
}

/// `dsyevr` on a column-major symmetric matrix; consumes the input buffer.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: a.len(),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let n32 = i32::try_from(n).map_err(|_| Error::SolverFailure(format!("order {n} too large")))?;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * n];
    let mut isuppz = vec![0i32; 2 * n];
    let mut found = 0;
    let mut info = 0;
    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    unsafe {
        lapack::dsyevr(
            b'V',
            b'A',
            b'U',
            n32,
            &mut a,
            n32,
            0.0,
            0.0,
            0,
            0,
            0.0,
            &mut found,
            &mut w,
            &mut z,
            n32,
            &mut isuppz,
            &mut work_query,
            -1,
            &mut iwork_query,
            -1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::SolverFailure(format!(
            "dsyevr workspace query returned info = {info}"
        )));
    }
    let lwork = work_query[0] as usize;
    let liwork = iwork_query[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    let mut iwork = vec![0i32; liwork.max(1)];
    unsafe {
        lapack::dsyevr(
            b'V',
            b'A',
            b'U',
            n32,
            &mut a,
            n32,
            0.0,
            0.0,
            0,
            0,
            0.0,
            &mut found,
            &mut w,
            &mut z,
            n32,
            &mut isuppz,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        );
    }
    drop(a);
    if info != 0 {
        return Err(Error::SolverFailure(format!(
            "dsyevr returned info = {info} (order {n})"
        )));
    }
    if found as usize != n {
        return Err(Error::SolverFailure(format!(
            "dsyevr found {found} of {n} eigenpairs"
        )));
    }
    Ok((w, z))
}

fn fix_signs(vectors: &mut [f64], dim: usize) {
    vectors.par_chunks_mut(dim).for_each(|col| {
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    });
}

fn residual_norm(model: &ModelInstance, energies: &[f64], vectors: &[f64]) -> f64 {
    let dim = energies.len();
    let h = &model.hamiltonian;
    vectors
        .par_chunks(dim)
        .zip(energies.par_iter())
        .map(|(v, &e)| {
            (0..dim)
                .map(|r| {
                    let hv: f64 = h.row(r).map(|(c, x)| x * v[c]).sum();
                    let d = hv - e * v[r];
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

/// `min_α (E_{α+1} - E_α) / (E_max - E_min)` for ascending energies.
pub fn check_nondegeneracy(energies: &[f64]) -> Result<f64> {
    if energies.len() < 2 {
        return Err(Error::InsufficientData(
            "non-degeneracy needs at least two levels".into(),
        ));
    }
    let span = energies[energies.len() - 1] - energies[0];
    if span <= 0.0 {
        return Ok(0.0);
    }
    let min_gap = energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(min_gap / span)
}

/// `(<n_a + n_b>, <Σ memory>)` of one normalized vector in the Fock basis.
pub fn sector_charges(vector: &[f64], basis: &SectorBasis) -> (f64, f64) {
    let mut particles = 0.0;
    let mut memory = 0.0;
    for (x, s) in vector.iter().zip(basis.states()) {
        let w = x * x;
        particles += w * (s.n_a + s.n_b) as f64;
        memory += w * s.memory_count() as f64;
    }
    (particles, memory)
}

/// Charge pair of every eigenstate.
pub fn verify_sector_charges(spectrum: &Spectrum, basis: &SectorBasis) -> Vec<(f64, f64)> {
    spectrum
        .vectors
        .par_chunks(spectrum.dim)
        .map(|v| sector_charges(v, basis))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{build_hamiltonian, ModelParams};

    fn solved(n: u32) -> (ModelInstance, Spectrum) {
        let p = ModelParams::for_size(n).unwrap();
        let m = build_hamiltonian(p, p.basis().unwrap()).unwrap();
        let s = diagonalize(&m).unwrap();
        (m, s)
    }

    #[test]
    fn spectra_are_accurate_and_orthonormal() {
        for n in 2..=6 {
            let (m, s) = solved(n);
            assert!(s.energies().windows(2).all(|w| w[0] <= w[1]));
            assert!(s.orthonormality_error() < 1e-10, "N={n}");
            assert!(s.residual_norm() <= 1e-8 * s.max_abs_energy(), "N={n}");
            assert!(s.reconstruction_error(&m) <= 1e-8, "N={n}");
            let trace = m.hamiltonian.trace();
            let sum: f64 = s.energies().iter().sum();
            assert!((sum - trace).abs() <= 1e-9 * trace.abs().max(1.0));
            let sq: f64 = s.energies().iter().map(|e| e * e).sum();
            let fro = m.hamiltonian.frobenius_sq();
            assert!((sq - fro).abs() <= 1e-9 * fro);
        }
    }

    #[test]
    fn largest_component_is_positive() {
        let (_, s) = solved(4);
        for alpha in 0..s.dim() {
            let v = s.vector(alpha);
            let best = v
                .iter()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(best > 0.0);
        }
    }

    #[test]
    fn spectra_are_nondegenerate_and_in_sector() {
        for n in 2..=6 {
            let (m, s) = solved(n);
            assert!(check_nondegeneracy(s.energies()).unwrap() > DEFAULT_DEGENERACY_TOL);
            for (q, mem) in verify_sector_charges(&s, &m.basis) {
                assert!((q - n as f64).abs() < 1e-10);
                assert!((mem - (n / 2) as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nondegeneracy_edge_cases() {
        assert_eq!(check_nondegeneracy(&[0.0, 1.0, 1.0, 2.0]).unwrap(), 0.0);
        let e = [-1.0, 0.5, 0.75, 3.0];
        let shifted: Vec<f64> = e.iter().map(|x| x + 10.0).collect();
        let a = check_nondegeneracy(&e).unwrap();
        let b = check_nondegeneracy(&shifted).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(check_nondegeneracy(&[1.0]).is_err());
    }

    #[test]
    fn charges_of_fake_eigenvectors() {
        let p = ModelParams::for_size(3).unwrap();
        let basis = p.basis().unwrap();
        let mut unit = vec![0.0; basis.len()];
        unit[5] = 1.0;
        assert_eq!(sector_charges(&unit, &basis), (3.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let (q, m) = sector_charges(&v, &basis);
        assert!((q - 3.0).abs() < 1e-12 && (m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_parts_checks_shape() {
        assert!(Spectrum::from_parts(vec![0.0, 1.0], vec![1.0; 3], 0.0).is_err());
    }
}
