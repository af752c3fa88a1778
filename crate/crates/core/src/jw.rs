//! Jordan-Wigner reduction: single-particle matrix `Ω`, correlation matrix
//! `Z_jk = ⟨c_j† c_k⟩` and its averaged generator
//! `dZ/dτ = i[Ω, Z] - 2γ[Y, [Y, Z]]` with `Y` the projector onto the noise
//! sites.  All noise sites share one noise process, so `Y` is a single
//! projector rather than a sum of independent channels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::{validate_sites, ChainConfig, TimeGrid};
use crate::error::{invalid_input, Error, Result};
use crate::linalg::{c, hermitian_eigenvalues, hermiticity_error, rk4_step, CMat, C64};
use crate::metrics::Trace;

const DRIFT_TOL: f64 = 1e-10;

/// Fermion-number parity; selects the sign of the ring's boundary hopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_count(excitations: usize) -> Self {
        if excitations % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// Corner entry of `Ω`.
    pub fn corner(self, j: f64) -> f64 {
        match self {
            Parity::Odd => -j,
            Parity::Even => j,
        }
    }
}

/// Ring single-particle matrix: `2g` on the diagonal, `-J` on the first off
/// diagonals and the parity-dependent corner.
pub fn build_omega(n: usize, j: f64, g: f64, parity: Parity) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        m[(a, a)] = 2.0 * g;
        if a + 1 < n {
            m[(a, a + 1)] = -j;
            m[(a + 1, a)] = -j;
        }
    }
    if n >= 2 {
        m[(0, n - 1)] += parity.corner(j);
        m[(n - 1, 0)] += parity.corner(j);
    }
    m
}

/// Adds the detuning `Δ(n_a - n_b)` to the diagonal (1-based sites).
pub fn add_detuning(omega: &mut DMatrix<f64>, delta: f64, sites: (usize, usize)) {
    omega[(sites.0 - 1, sites.0 - 1)] += delta;
    omega[(sites.1 - 1, sites.1 - 1)] -= delta;
}

pub fn omega_from_config(cfg: &ChainConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let mut omega = build_omega(cfg.n, cfg.j, cfg.g, Parity::of_count(cfg.excited.len()));
    if cfg.detuning != 0.0 {
        add_detuning(&mut omega, cfg.detuning, cfg.detuning_sites);
    }
    Ok(omega)
}

/// `Λ̃_k = 2g - 2J cos(kπ/N)`.
pub fn analytic_energy(n: usize, j: f64, g: f64, k: usize) -> f64 {
    2.0 * g - 2.0 * j * (k as f64 * PI / n as f64).cos()
}

/// `φ_k(j) = sqrt(2/N) sin(jkπ/N)` for sites `j = 1..=N`.
pub fn sine_mode(n: usize, k: usize) -> DVector<f64> {
    let s = (2.0 / n as f64).sqrt();
    DVector::from_fn(n, |i, _| s * ((i + 1) as f64 * k as f64 * PI / n as f64).sin())
}

/// `(Λ̃_k, φ_k)` for `k = 1..N-1`.
pub fn analytic_eigenpairs(n: usize, j: f64, g: f64) -> Vec<(f64, DVector<f64>)> {
    (1..n).map(|k| (analytic_energy(n, j, g, k), sine_mode(n, k))).collect()
}

/// Parity sector whose ring matrix has `φ_k` as an eigenvector.
pub fn sine_mode_sector(k: usize) -> Parity {
    if k.is_multiple_of(2) {
        Parity::Odd
    } else {
        Parity::Even
    }
}

/// Open chain on sites `1..N-1`: every `φ_k` restricted to those sites is an
/// exact eigenvector with eigenvalue `Λ̃_k`.
pub fn reference_omega(n: usize, j: f64, g: f64) -> DMatrix<f64> {
    let d = n - 1;
    DMatrix::from_fn(d, d, |a, b| {
        if a == b {
            2.0 * g
        } else if a.abs_diff(b) == 1 {
            -j
        } else {
            0.0
        }
    })
}

/// `Z_jk = ⟨c_j† c_k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(CMat);

impl CorrelationMatrix {
    pub fn new(z: CMat) -> Result<Self> {
        let m = Self(z);
        m.validate()?;
        Ok(m)
    }

    /// Product state with the listed sites occupied.
    pub fn from_excitations(sites: &[usize], n: usize) -> Result<Self> {
        validate_sites(sites, n, "excited site")?;
        let mut z = CMat::zeros(n, n);
        for &s in sites {
            z[(s - 1, s - 1)] = c(1.0);
        }
        Ok(Self(z))
    }

    pub fn validate(&self) -> Result<()> {
        let z = &self.0;
        if z.nrows() != z.ncols() {
            return Err(Error::InvalidState("correlation matrix must be square".into()));
        }
        let herm = hermiticity_error(z);
        if herm > DRIFT_TOL {
            return Err(Error::InvalidState(format!("hermiticity error {herm:e}")));
        }
        let ev = hermitian_eigenvalues(z);
        if ev.first().is_some_and(|&v| v < -1e-8) || ev.last().is_some_and(|&v| v > 1.0 + 1e-8) {
            return Err(Error::InvalidState(format!("eigenvalues outside [0, 1]: {ev:?}")));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn n_sites(&self) -> usize {
        self.0.nrows()
    }

    pub fn excitations(&self) -> f64 {
        self.0.trace().re
    }

    /// `⟨σ^z_j⟩ = 2 Re Z_jj - 1`.
    pub fn magnetizations(&self) -> Vec<f64> {
        magnetizations(&self.0)
    }
}

pub(crate) fn magnetizations(z: &CMat) -> Vec<f64> {
    (0..z.nrows()).map(|j| 2.0 * z[(j, j)].re - 1.0).collect()
}

#[derive(Debug, Clone)]
pub struct ZGenerator {
    omega: DMatrix<f64>,
    omega_c: CMat,
    /// Indicator of the noise sites.
    y: Vec<f64>,
    gamma: f64,
}

pub fn build_z_generator(omega: &DMatrix<f64>, noise_sites: &[usize], gamma: f64) -> Result<ZGenerator> {
    let n = omega.nrows();
    if omega.ncols() != n || (omega - omega.transpose()).abs().max() > 1e-14 {
        return Err(invalid_input("Ω must be square and symmetric"));
    }
    validate_sites(noise_sites, n, "noise site")?;
    if !(gamma >= 0.0) {
        return Err(invalid_input("gamma must be >= 0"));
    }
    let mut y = vec![0.0; n];
    for &u in noise_sites {
        y[u - 1] = 1.0;
    }
    Ok(ZGenerator { omega: omega.clone(), omega_c: omega.map(c), y, gamma })
}

impl ZGenerator {
    pub fn from_config(cfg: &ChainConfig) -> Result<Self> {
        build_z_generator(&omega_from_config(cfg)?, &cfg.noise_sites, cfg.gamma)
    }

    pub fn n_sites(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn noise_indicator(&self) -> &[f64] {
        &self.y
    }

    fn weight(&self, a: usize, b: usize) -> f64 {
        let d = self.y[a] - self.y[b];
        2.0 * self.gamma * d * d
    }

    pub fn apply(&self, z: &CMat) -> CMat {
        let mut out = (&self.omega_c * z - z * &self.omega_c) * C64::new(0.0, 1.0);
        for b in 0..z.ncols() {
            for a in 0..z.nrows() {
                out[(a, b)] -= z[(a, b)] * self.weight(a, b);
            }
        }
        out
    }

    /// Row-major `N²×N²` matrix: `i(Ω⊗I - I⊗Ωᵀ) - 2γ(Y⊗I - I⊗Y)²`.
    pub fn explicit(&self) -> CMat {
        let n = self.n_sites();
        let i = C64::new(0.0, 1.0);
        let mut l = CMat::zeros(n * n, n * n);
        for a in 0..n {
            for b in 0..n {
                let row = a * n + b;
                for a2 in 0..n {
                    l[(row, a2 * n + b)] += i * self.omega[(a, a2)];
                }
                for b2 in 0..n {
                    l[(row, a * n + b2)] -= i * self.omega[(b2, b)];
                }
                l[(row, row)] -= c(self.weight(a, b));
            }
        }
        l
    }
}

/// Integrates `Z` over `grid`, calling `observer(i, Z(τ_i))` at every output
/// point including `τ_0`.
pub fn evolve_z<F>(z0: &CorrelationMatrix, gen: &ZGenerator, grid: &TimeGrid, mut observer: F) -> Result<()>
where
    F: FnMut(usize, &CMat) -> Result<()>,
{
    if z0.n_sites() != gen.n_sites() {
        return Err(invalid_input("state and generator sizes differ"));
    }
    let h = grid.step();
    let tr0 = z0.matrix().trace();
    let mut z = z0.matrix().clone();
    observer(0, &z)?;
    for i in 1..grid.points {
        for _ in 0..grid.substeps {
            z = rk4_step(|x| gen.apply(x), &z, h);
        }
        let drift = (z.trace() - tr0).norm();
        let herm = hermiticity_error(&z);
        if drift > DRIFT_TOL || herm > DRIFT_TOL {
            return Err(Error::NumericalTolerance {
                context: "evolve_z".into(),
                detail: format!("at tau = {}: trace drift {drift:e}, hermiticity error {herm:e}", grid.tau(i)),
            });
        }
        observer(i, &z)?;
    }
    Ok(())
}

/// Magnetization channels `sz_1..sz_N`.
pub fn evolve_z_trace(z0: &CorrelationMatrix, gen: &ZGenerator, grid: &TimeGrid) -> Result<Trace> {
    let n = gen.n_sites();
    let mut sz = vec![Vec::with_capacity(grid.points); n];
    evolve_z(z0, gen, grid, |_, z| {
        for (ch, v) in sz.iter_mut().zip(magnetizations(z)) {
            ch.push(v);
        }
        Ok(())
    })?;
    let mut trace = Trace::from_grid(grid);
    for (j, ch) in sz.into_iter().enumerate() {
        trace.insert(format!("sz_{}", j + 1), ch)?;
    }
    Ok(trace)
}

/// JW trace for a configuration.
pub fn simulate_jw(cfg: &ChainConfig) -> Result<Trace> {
    let gen = ZGenerator::from_config(cfg)?;
    let z0 = CorrelationMatrix::from_excitations(&cfg.excited, cfg.n)?;
    evolve_z_trace(&z0, &gen, &cfg.grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;
    use proptest::prelude::*;

    #[test]
    fn ring_spectrum() {
        let omega = build_omega(6, 1.0, 1.0, Parity::Odd);
        let mut ev: Vec<f64> = omega.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = (0..6).map(|m| 2.0 - 2.0 * (2.0 * PI * m as f64 / 6.0).cos()).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((want[0] - 0.0).abs() < 1e-12 && (want[5] - 4.0).abs() < 1e-12);
        for (k, lam) in [(2, 1.0), (4, 3.0)] {
            let s = DVector::from_fn(6, |i, _| ((i + 1) as f64 * k as f64 * PI / 6.0).sin());
            assert!((&omega * &s - &s * lam).norm() < 1e-12);
        }
        for p in [Parity::Odd, Parity::Even] {
            assert_eq!(build_omega(6, 0.0, 1.5, p), DMatrix::identity(6, 6) * 3.0);
        }
    }

    #[test]
    fn omega_row_sums() {
        let (j, g) = (0.7, 1.3);
        for p in [Parity::Odd, Parity::Even] {
            let omega = build_omega(8, j, g, p);
            assert_eq!(omega, omega.transpose());
            for r in 0..8 {
                let sum: f64 = omega.row(r).iter().sum();
                let want = if r == 0 || r == 7 { 2.0 * g - j + p.corner(j) } else { 2.0 * g - 2.0 * j };
                assert!((sum - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn analytic_pairs() {
        let pairs = analytic_eigenpairs(6, 1.0, 1.0);
        assert!((pairs[1].0 - 1.0).abs() < 1e-12);
        assert!((pairs[3].0 - 3.0).abs() < 1e-12);
        assert_eq!(analytic_energy(8, 0.9, 1.1, 4), 2.2);
        for n in [4, 6, 8, 10] {
            let reference = reference_omega(n, 1.0, 1.0);
            for (k, (lam, phi)) in analytic_eigenpairs(n, 1.0, 1.0).into_iter().enumerate() {
                let k = k + 1;
                assert!((phi.norm() - 1.0).abs() < 1e-12);
                let ring = build_omega(n, 1.0, 1.0, sine_mode_sector(k));
                assert!((&ring * &phi - &phi * lam).norm() < 1e-12, "n={n} k={k}");
                let head = phi.rows(0, n - 1).into_owned();
                assert!((&reference * &head - &head * lam).norm() < 1e-12);
            }
        }
        let ring = build_omega(6, 1.0, 1.0, Parity::Odd);
        for k in [2, 4] {
            let (lam, phi) = &analytic_eigenpairs(6, 1.0, 1.0)[k - 1];
            assert!((&ring * phi - phi * *lam).norm() < 1e-12);
        }
    }

    #[test]
    fn generator_examples() {
        let omega = build_omega(6, 1.0, 1.0, Parity::Odd);
        let eig = omega.clone().symmetric_eigen();
        let v = eig.eigenvectors.column(0).map(c);
        let proj = &v * v.adjoint();
        let gen = build_z_generator(&omega, &[3], 0.0).unwrap();
        assert!(gen.apply(&proj).norm() < 1e-12);

        let gen = build_z_generator(&DMatrix::identity(2, 2), &[1], 0.25).unwrap();
        let mut z = CMat::zeros(2, 2);
        z[(0, 1)] = c(1.0);
        assert!((gen.apply(&z)[(0, 1)] - c(-0.5)).norm() < 1e-15);

        let gen = build_z_generator(&omega, &[3], 0.01).unwrap();
        let ev = eigenvalues(&gen.explicit()).unwrap();
        let dark: Vec<_> = ev.iter().filter(|z| z.im.abs() > 1e-6 && z.re.abs() < 1e-8).collect();
        assert_eq!(dark.len(), 2, "{dark:?}");
        assert!(dark.iter().all(|z| (z.im.abs() - 2.0).abs() < 1e-9));
        assert!(ev.iter().all(|z| z.re <= 1e-12));

        // Input on which a plain complex Schur iteration stalls.
        let gen = build_z_generator(&build_omega(2, 1.0, 1.0, Parity::Odd), &[1], 0.6515747309837133).unwrap();
        assert_eq!(eigenvalues(&gen.explicit()).unwrap().len(), 4);
    }

    #[test]
    fn explicit_matches_apply() {
        let omega = build_omega(4, 0.8, 1.0, Parity::Even);
        let gen = build_z_generator(&omega, &[1, 3], 0.3).unwrap();
        let z = CMat::from_fn(4, 4, |a, b| C64::new(a as f64 + 0.5 * b as f64, (a * b) as f64 - 1.0));
        let flat = crate::modes::vec_row_major(&z);
        let want = crate::modes::vec_row_major(&gen.apply(&z));
        assert!((gen.explicit() * flat - want).norm() < 1e-12);
    }

    #[test]
    fn initial_and_frozen_dynamics() {
        let cfg = ChainConfig { t_max: 1.0, ..Default::default() };
        let trace = simulate_jw(&cfg).unwrap();
        let first: Vec<f64> = (1..=6).map(|j| trace.channel(&format!("sz_{j}")).unwrap()[0]).collect();
        assert_eq!(first, vec![1.0, -1.0, -1.0, -1.0, -1.0, -1.0]);

        let frozen = ChainConfig { j: 0.0, gamma: 0.0, ..cfg };
        let trace = simulate_jw(&frozen).unwrap();
        for (_, ch) in trace.channels() {
            assert!(ch.iter().all(|&v| v == ch[0]));
        }
    }

    #[test]
    fn correlation_matrix_validation() {
        assert!(CorrelationMatrix::from_excitations(&[1, 3], 4).unwrap().validate().is_ok());
        assert_eq!(CorrelationMatrix::from_excitations(&[1, 3], 4).unwrap().excitations(), 2.0);
        assert!(CorrelationMatrix::new(CMat::identity(2, 2) * c(1.5)).is_err());
        assert!(CorrelationMatrix::from_excitations(&[5], 4).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn decay_only_spectrum(n in prop::sample::select(vec![2usize, 4, 6]), gamma in 0.0f64..1.0, u in 1usize..=2) {
            let gen = build_z_generator(&build_omega(n, 1.0, 1.0, Parity::Odd), &[u], gamma).unwrap();
            for z in eigenvalues(&gen.explicit()).unwrap() {
                prop_assert!(z.re <= 1e-12);
            }
        }

        #[test]
        fn trace_and_states_preserved(gamma in 0.0f64..1.0, seed in 0u64..100) {
            let cfg = ChainConfig { gamma, t_max: 3.0, dt: 0.1, noise_sites: vec![1 + (seed as usize % 6)], ..Default::default() };
            let gen = ZGenerator::from_config(&cfg).unwrap();
            let z0 = CorrelationMatrix::from_excitations(&[1], 6).unwrap();
            evolve_z(&z0, &gen, &cfg.grid(), |_, z| {
                assert!((z.trace().re - 1.0).abs() < 1e-10);
                CorrelationMatrix::new(z.clone()).map(|_| ())
            }).unwrap();
        }
    }
}
