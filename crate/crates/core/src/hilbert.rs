//! Spin-picture states and operators.
//!
//! Site `j` (1-based) is bit `j-1` of a basis index; a set bit is the excited
//! state with `σ^z = +1`.

use crate::config::{validate_sites, ChainConfig, MAX_FULL_SITES};
use crate::error::{invalid_config, Error, Result};
use crate::linalg::{c, hermitian_eigenvalues, hermiticity_error, CMat, CVec, C64};

const STATE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;

#[inline]
pub fn bit(index: usize, site: usize) -> bool {
    (index >> (site - 1)) & 1 == 1
}

#[inline]
pub fn z_sign(index: usize, site: usize) -> f64 {
    if bit(index, site) {
        1.0
    } else {
        -1.0
    }
}

fn check_full_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_FULL_SITES {
        return Err(Error::Capacity(format!(
            "full spin picture supports 1..={MAX_FULL_SITES} sites, got {n}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    amps: CVec,
}

impl StateVector {
    pub fn new(n_sites: usize, amps: CVec) -> Result<Self> {
        if amps.len() != 1 << n_sites {
            return Err(Error::InvalidState(format!("length {} is not 2^{n_sites}", amps.len())));
        }
        if (amps.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("norm {} != 1", amps.norm())));
        }
        Ok(Self { n_sites, amps })
    }

    pub(crate) fn from_trusted(n_sites: usize, amps: CVec) -> Self {
        Self { n_sites, amps }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn expect_z(&self, j: usize) -> f64 {
        self.amps.iter().enumerate().map(|(b, a)| z_sign(b, j) * a.norm_sqr()).sum()
    }

    pub fn expect(&self, op: &CMat) -> C64 {
        self.amps.dotc(&(op * &self.amps))
    }
}

/// Spin-picture state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_sites: usize,
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(n_sites: usize, mat: CMat) -> Result<Self> {
        let rho = Self { n_sites, mat };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_trusted(n_sites: usize, mat: CMat) -> Self {
        Self { n_sites, mat }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        Self { n_sites: psi.n_sites(), mat: a * a.adjoint() }
    }

    pub fn maximally_mixed(n_sites: usize) -> Self {
        let d = 1usize << n_sites;
        Self { n_sites, mat: CMat::identity(d, d) * c(1.0 / d as f64) }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Hermiticity and trace only; no eigen-decomposition.
    pub fn check_cheap(&self, tol: f64) -> Result<()> {
        let d = 1usize << self.n_sites;
        if self.mat.nrows() != d || self.mat.ncols() != d {
            return Err(Error::InvalidState(format!("shape {:?} is not {d}x{d}", self.mat.shape())));
        }
        let herm = hermiticity_error(&self.mat);
        if herm > tol {
            return Err(Error::InvalidState(format!("hermiticity error {herm:e}")));
        }
        let tr = self.trace();
        if (tr - c(1.0)).norm() > tol {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_cheap(STATE_TOL)?;
        let min = hermitian_eigenvalues(&self.mat)[0];
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }
}

/// XX ring Hamiltonian with transverse field and optional two-site detuning.
pub fn build_hamiltonian(cfg: &ChainConfig) -> Result<CMat> {
    let n = cfg.n;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(invalid_config(format!("N must be even and >= 2, got {n}")));
    }
    if cfg.detuning != 0.0 && n < 5 {
        return Err(invalid_config("detuning requires N >= 5"));
    }
    check_full_size(n)?;
    let dim = 1usize << n;
    let mut h = CMat::zeros(dim, dim);
    for b in 0..dim {
        let mut diag: f64 = (1..=n).map(|s| cfg.g * z_sign(b, s)).sum();
        if cfg.detuning != 0.0 {
            let (p, q) = cfg.detuning_sites;
            diag += 0.5 * cfg.detuning * (z_sign(b, p) - z_sign(b, q));
        }
        h[(b, b)] += c(diag);
        // -(J/2)(XX + YY) = -J (σ+σ- + σ-σ+) on each bond.
        for s in 1..=n {
            let t = s % n + 1;
            if bit(b, s) != bit(b, t) {
                let flipped = b ^ (1 << (s - 1)) ^ (1 << (t - 1));
                h[(flipped, b)] += c(-cfg.j);
            }
        }
    }
    Ok(h)
}

/// Diagonal of `Σ_u σ^z_u`.
pub fn noise_diagonal(sites: &[usize], n: usize) -> Result<Vec<f64>> {
    if sites.is_empty() {
        return Err(invalid_config("noise site list is empty"));
    }
    validate_sites(sites, n, "noise site")?;
    check_full_size(n)?;
    Ok((0..1usize << n).map(|b| sites.iter().map(|&u| z_sign(b, u)).sum()).collect())
}

pub fn build_noise_operator(sites: &[usize], n: usize) -> Result<CMat> {
    let diag = noise_diagonal(sites, n)?;
    Ok(CMat::from_diagonal(&CVec::from_iterator(diag.len(), diag.into_iter().map(c))))
}

pub fn basis_index(excited: &[usize], n: usize) -> Result<usize> {
    validate_sites(excited, n, "excited site")?;
    Ok(excited.iter().map(|&s| 1usize << (s - 1)).sum())
}

pub fn basis_state(excited: &[usize], n: usize) -> Result<StateVector> {
    check_full_size(n)?;
    let idx = basis_index(excited, n)?;
    let mut amps = CVec::zeros(1 << n);
    amps[idx] = c(1.0);
    Ok(StateVector::from_trusted(n, amps))
}

/// Reduced state on the sorted, distinct sites in `keep`.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_sites();
    if keep.is_empty() {
        return Err(invalid_config("keep list is empty"));
    }
    validate_sites(keep, n, "kept site")?;
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid_config("keep list must be sorted"));
    }
    if keep.len() == n {
        return Ok(rho.clone());
    }
    let traced: Vec<usize> = (1..=n).filter(|s| !keep.contains(s)).collect();
    let embed = |sites: &[usize], local: usize| -> usize {
        sites.iter().enumerate().map(|(i, &s)| ((local >> i) & 1) << (s - 1)).sum()
    };
    let dk = 1usize << keep.len();
    let dt = 1usize << traced.len();
    let kept_idx: Vec<usize> = (0..dk).map(|a| embed(keep, a)).collect();
    let traced_idx: Vec<usize> = (0..dt).map(|t| embed(&traced, t)).collect();
    let m = rho.matrix();
    let out = CMat::from_fn(dk, dk, |a, b| {
        traced_idx.iter().map(|&t| m[(kept_idx[a] | t, kept_idx[b] | t)]).sum()
    });
    Ok(DensityMatrix::from_trusted(keep.len(), out))
}

pub fn expect_local_z(rho: &DensityMatrix, j: usize) -> Result<f64> {
    let n = rho.n_sites();
    if j == 0 || j > n {
        return Err(invalid_config(format!("site {j} outside 1..={n}")));
    }
    let m = rho.matrix();
    let mut acc = C64::new(0.0, 0.0);
    for b in 0..m.nrows() {
        acc += m[(b, b)] * z_sign(b, j);
    }
    if acc.im.abs() > 1e-10 {
        return Err(Error::InvalidState(format!("<σz_{j}> has imaginary part {:e}", acc.im)));
    }
    Ok(acc.re)
}

/// All local magnetizations from the diagonal of `rho`.
pub fn local_z_all(rho: &CMat, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for b in 0..rho.nrows() {
        let p = rho[(b, b)].re;
        for (s, o) in out.iter_mut().enumerate() {
            *o += z_sign(b, s + 1) * p;
        }
    }
    out
}

/// Total excitation count of each basis index.
pub fn excitation_number(index: usize) -> usize {
    index.count_ones() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, hermitian_eigen, kron, max_abs_diff, I};
    use proptest::prelude::*;

    // Reference Pauli algebra built from Kronecker products, ordered so that
    // site N is the most significant factor.
    fn pauli(axis: char, site: usize, n: usize) -> CMat {
        let one = c(1.0);
        let zero = c(0.0);
        // Local basis (|0>, |1>) with |1> excited.
        let p = match axis {
            'x' => CMat::from_row_slice(2, 2, &[zero, one, one, zero]),
            'y' => CMat::from_row_slice(2, 2, &[zero, -I, I, zero]),
            'z' => CMat::from_row_slice(2, 2, &[-one, zero, zero, one]),
            _ => unreachable!(),
        };
        let mut out = CMat::identity(1, 1);
        for s in (1..=n).rev() {
            let f = if s == site { p.clone() } else { CMat::identity(2, 2) };
            out = kron(&out, &f);
        }
        out
    }

    fn reference_hamiltonian(cfg: &ChainConfig) -> CMat {
        let n = cfg.n;
        let d = 1 << n;
        let mut h = CMat::zeros(d, d);
        for s in 1..=n {
            let t = s % n + 1;
            let xx = pauli('x', s, n) * pauli('x', t, n);
            let yy = pauli('y', s, n) * pauli('y', t, n);
            h -= (xx + yy) * c(cfg.j / 2.0);
            h += pauli('z', s, n) * c(cfg.g);
        }
        if cfg.detuning != 0.0 {
            let (p, q) = cfg.detuning_sites;
            h += (pauli('z', p, n) - pauli('z', q, n)) * c(cfg.detuning / 2.0);
        }
        h
    }

    fn cfg(n: usize, j: f64, g: f64) -> ChainConfig {
        ChainConfig { n, j, g, noise_sites: vec![1], ..Default::default() }
    }

    #[test]
    fn field_only_two_sites() {
        let h = build_hamiltonian(&cfg(2, 0.0, 1.0)).unwrap();
        // Index order |00>,|01>,|10>,|11> is the reverse of {|11>,|10>,|01>,|00>}.
        let want = [-2.0, 0.0, 0.0, 2.0];
        for (i, w) in want.iter().enumerate() {
            assert_eq!(h[(i, i)], c(*w));
        }
        assert_eq!(h.iter().filter(|v| v.norm() > 0.0).count(), 2);
    }

    #[test]
    fn matches_kronecker_reference() {
        for (n, j, g, delta) in [(2, 0.7, 1.0, 0.0), (4, 1.0, 0.5, 0.0), (6, 1.0, 1.0, 0.2)] {
            let cfg = ChainConfig { detuning: delta, ..cfg(n, j, g) };
            let h = build_hamiltonian(&cfg).unwrap();
            assert!(max_abs_diff(&h, &reference_hamiltonian(&cfg)) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn single_excitation_spectrum() {
        let h = build_hamiltonian(&cfg(6, 1.0, 1.0)).unwrap();
        let idx: Vec<usize> = (0..64).filter(|&b| excitation_number(b) == 1).collect();
        let block = CMat::from_fn(6, 6, |a, b| h[(idx[a], idx[b])]);
        let (vals, _) = hermitian_eigen(&block);
        // The one-excitation block equals the ring hopping matrix shifted by -gN.
        let want = [0.0, 1.0, 1.0, 3.0, 3.0, 4.0];
        for (v, w) in vals.iter().zip(want) {
            assert!((v + 6.0 - w).abs() < 1e-12, "{vals:?}");
        }
        for k in [2.0, 4.0] {
            let e = 2.0 - 2.0 * (k * std::f64::consts::PI / 6.0).cos();
            assert!(vals.iter().any(|v| (v + 6.0 - e).abs() < 1e-12));
        }
    }

    #[test]
    fn detuning_needs_five_sites() {
        let cfg = ChainConfig { detuning: 0.1, ..cfg(4, 1.0, 1.0) };
        assert!(matches!(build_hamiltonian(&cfg), Err(Error::InvalidConfig(_))));
        assert!(build_hamiltonian(&cfg_odd()).is_err());
    }

    fn cfg_odd() -> ChainConfig {
        ChainConfig { n: 3, ..Default::default() }
    }

    #[test]
    fn noise_operator_examples() {
        let v = build_noise_operator(&[1], 1).unwrap();
        // Index 0 is the ground state |0>.
        assert_eq!(v[(0, 0)], c(-1.0));
        assert_eq!(v[(1, 1)], c(1.0));

        let v = build_noise_operator(&[3], 6).unwrap();
        for b in 0..64 {
            let want = if (b >> 2) & 1 == 1 { 1.0 } else { -1.0 };
            assert_eq!(v[(b, b)], c(want));
        }

        let d = noise_diagonal(&[3, 6], 6).unwrap();
        assert!(d.iter().all(|x| [-2.0, 0.0, 2.0].contains(x)));
        let zeros = (0..64).filter(|b| ((b >> 2) & 1) != ((b >> 5) & 1)).count();
        assert_eq!(d.iter().filter(|&&x| x == 0.0).count(), zeros);
        assert_eq!(zeros, 32);

        assert!(build_noise_operator(&[], 6).is_err());
        let reference = pauli('z', 3, 6) + pauli('z', 6, 6);
        assert!(max_abs_diff(&build_noise_operator(&[3, 6], 6).unwrap(), &reference) < 1e-15);
    }

    #[test]
    fn basis_state_examples() {
        let rho = DensityMatrix::from_pure(&basis_state(&[1], 6).unwrap());
        assert_eq!(expect_local_z(&rho, 1).unwrap(), 1.0);
        for j in 2..=6 {
            assert_eq!(expect_local_z(&rho, j).unwrap(), -1.0);
        }

        let ground = basis_state(&[], 2).unwrap();
        for sites in [vec![1], vec![2], vec![1, 2]] {
            let v = build_noise_operator(&sites, 2).unwrap();
            assert!((ground.expect(&v).re + sites.len() as f64).abs() < 1e-15);
        }

        let full = basis_state(&[1, 2], 2).unwrap();
        let h = build_hamiltonian(&cfg(2, 0.83, 1.0)).unwrap();
        let hv = &h * full.amplitudes();
        assert!((full.amplitudes().dotc(&hv) - c(2.0)).norm() < 1e-15);

        assert!(basis_state(&[7], 6).is_err());
    }

    #[test]
    fn partial_trace_examples() {
        // |1><1| on site 1, |0><0| on site 2.
        let rho = DensityMatrix::from_pure(&basis_state(&[1], 2).unwrap());
        let r1 = partial_trace(&rho, &[1]).unwrap();
        assert_eq!(r1.matrix()[(1, 1)], c(1.0));
        assert_eq!(r1.matrix()[(0, 0)], c(0.0));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::new(2, CVec::from_vec(vec![c(s), c(0.0), c(0.0), c(s)])).unwrap();
        let r = partial_trace(&DensityMatrix::from_pure(&bell), &[2]).unwrap();
        assert!(max_abs_diff(r.matrix(), DensityMatrix::maximally_mixed(1).matrix()) < 1e-15);

        assert_eq!(partial_trace(&rho, &[1, 2]).unwrap(), rho);
        assert!(partial_trace(&rho, &[2, 1]).is_err());
        assert!(partial_trace(&rho, &[3]).is_err());
    }

    #[test]
    fn maximally_mixed_is_unpolarized() {
        let rho = DensityMatrix::maximally_mixed(4);
        for j in 1..=4 {
            assert!(expect_local_z(&rho, j).unwrap().abs() < 1e-15);
        }
    }

    fn random_state(n: usize, seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = 1 << n;
        let a = CMat::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(n, m / tr).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hamiltonian_conserves_excitations(n in prop::sample::select(vec![2usize, 4, 6]),
                                             j in -2.0f64..2.0, g in -2.0f64..2.0) {
            let h = build_hamiltonian(&cfg(n, j, g)).unwrap();
            prop_assert!(hermiticity_error(&h) < 1e-12);
            let total = build_noise_operator(&(1..=n).collect::<Vec<_>>(), n).unwrap();
            prop_assert!(commutator(&h, &total).norm() < 1e-10);
            let v = build_noise_operator(&[1], n).unwrap();
            prop_assert!(commutator(&v, &total).norm() < 1e-10);
        }

        #[test]
        fn partial_trace_composes(seed in 0u64..1000) {
            let rho = random_state(3, seed);
            let direct = partial_trace(&rho, &[1]).unwrap();
            let two = partial_trace(&rho, &[1, 2]).unwrap();
            let staged = partial_trace(&two, &[1]).unwrap();
            prop_assert!(max_abs_diff(direct.matrix(), staged.matrix()) < 1e-12);
            for keep in [vec![2], vec![1, 3], vec![2, 3]] {
                let r = partial_trace(&rho, &keep).unwrap();
                prop_assert!((r.trace() - c(1.0)).norm() < 1e-10);
                prop_assert!(r.validate().is_ok());
            }
        }

        #[test]
        fn local_z_is_bounded(seed in 0u64..1000, j in 1usize..=3) {
            let rho = random_state(3, seed);
            let z = expect_local_z(&rho, j).unwrap();
            prop_assert!((-1.0 - 1e-8..=1.0 + 1e-8).contains(&z));
            prop_assert!((local_z_all(rho.matrix(), 3)[j - 1] - z).abs() < 1e-12);
        }
    }
}
