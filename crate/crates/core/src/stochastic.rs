//! Noise trajectories of the Stratonovich Schrödinger equation
//! `dψ = -i (H dτ + V dW) ψ` and their ensemble averages.
//!
//! Each step applies the exact exponential of the frozen-increment
//! generator.  Averaging `exp(-i V ΔW) ρ exp(i V ΔW)` over `ΔW ~ N(0, γ dτ)`
//! gives `-(γ/2)[V, [V, ρ]] dτ`, the dephasing of the averaged generator.
//! In the fermion picture `V = Σ_u σ^z_u` becomes `2 Y` plus a constant, and
//! each occupied orbital follows `ψ ← exp(-i (Ω dτ + 2 Y ΔW)) ψ`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::{ChainConfig, TimeGrid};
use crate::error::{invalid_input, Error, Result};
use crate::hilbert::{basis_state, build_hamiltonian, build_noise_operator, z_sign, StateVector};
use crate::jw::{omega_from_config, CorrelationMatrix};
use crate::linalg::{hermitian_eigen, hermiticity_error, CMat, SparseOp, C64};
use crate::metrics::Trace;

/// Largest `‖K‖` accepted for one step; beyond this the Taylor series loses
/// accuracy to cancellation.
pub const MAX_STEP_NORM: f64 = 2.0;
/// Norm drift tolerated over a whole trajectory.
pub const NORM_TOL: f64 = 1e-10;
const TAYLOR_TOL: f64 = 1e-17;
const MAX_TERMS: usize = 60;
/// Trajectories per reduction chunk.  Fixed so that the combining order does
/// not depend on the worker count.
const CHUNK: usize = 8;

/// Seed of one trajectory: the master seed selects the ChaCha key and the
/// trajectory index selects the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct TrajectorySeed {
    pub master: u64,
    pub index: u64,
}

pub fn split(master: u64, index: u64) -> TrajectorySeed {
    TrajectorySeed { master, index }
}

impl From<u64> for TrajectorySeed {
    fn from(master: u64) -> Self {
        split(master, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: TrajectorySeed,
    pub dt: f64,
    pub increments: Vec<f64>,
}

/// One increment per internal step of `grid`, each `N(0, γ dτ)`.
pub fn sample_noise_path(seed: impl Into<TrajectorySeed>, grid: &TimeGrid, gamma: f64) -> Result<NoisePath> {
    if !(gamma >= 0.0) {
        return Err(invalid_input("gamma must be >= 0"));
    }
    let seed = seed.into();
    let count = grid.points.saturating_sub(1) * grid.substeps;
    let dt = grid.step();
    let increments = if gamma == 0.0 {
        vec![0.0; count]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.master);
        rng.set_stream(seed.index);
        let sd = (gamma * dt).sqrt();
        (0..count)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                sd * x
            })
            .collect()
    };
    Ok(NoisePath { seed, dt, increments })
}

/// `ψ ← exp(-i K) ψ` with `K` given through `apply(x, out) = K x`.
fn taylor_step<F>(psi: &mut [C64], term: &mut [C64], next: &mut [C64], k_norm: f64, mut apply: F) -> Result<()>
where
    F: FnMut(&[C64], &mut [C64]),
{
    if k_norm > MAX_STEP_NORM {
        return Err(Error::NumericalTolerance {
            context: "trajectory step".into(),
            detail: format!("step generator norm {k_norm:.3} exceeds {MAX_STEP_NORM}; reduce dt"),
        });
    }
    let scale: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    term.copy_from_slice(psi);
    for n in 1..=MAX_TERMS {
        apply(term, next);
        let f = C64::new(0.0, -1.0 / n as f64);
        let mut size = 0.0;
        for ((t, x), p) in term.iter_mut().zip(next.iter()).zip(psi.iter_mut()) {
            *t = f * x;
            *p += *t;
            size += t.norm_sqr();
        }
        if size <= TAYLOR_TOL * TAYLOR_TOL * scale {
            return Ok(());
        }
    }
    Err(Error::NumericalTolerance { context: "trajectory step".into(), detail: "Taylor series did not converge".into() })
}

fn check_path(path: &NoisePath, grid: &TimeGrid) -> Result<()> {
    if path.increments.len() != grid.points.saturating_sub(1) * grid.substeps || (path.dt - grid.step()).abs() > 1e-15 {
        return Err(invalid_input("noise path does not match the time grid"));
    }
    Ok(())
}

fn norm_error(context: &str, tau: f64, drift: f64) -> Error {
    Error::NumericalTolerance { context: context.into(), detail: format!("norm drift {drift:e} at tau = {tau}") }
}

/// Spin-picture system `(H, V)`.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    n_sites: usize,
    h: SparseOp,
    v: SparseOp,
    h_norm: f64,
    v_norm: f64,
}

fn row_sum_norm(m: &CMat) -> f64 {
    m.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

impl SpinSystem {
    pub fn new(n_sites: usize, h: &CMat, v: &CMat) -> Result<Self> {
        let d = 1usize << n_sites;
        if h.shape() != (d, d) || v.shape() != (d, d) {
            return Err(invalid_input(format!("H and V must be {d}x{d}")));
        }
        if hermiticity_error(h) > 1e-12 || hermiticity_error(v) > 1e-12 {
            return Err(invalid_input("H and V must be Hermitian"));
        }
        Ok(Self { n_sites, h: SparseOp::from_dense(h), v: SparseOp::from_dense(v), h_norm: row_sum_norm(h), v_norm: row_sum_norm(v) })
    }

    pub fn from_config(cfg: &ChainConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(cfg.n, &build_hamiltonian(cfg)?, &build_noise_operator(&cfg.noise_sites, cfg.n)?)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
}

/// Fermion-picture system: hopping matrix `Ω` and noise-site indicator.
#[derive(Debug, Clone)]
pub struct OrbitalSystem {
    /// Nonzero `(column, value)` entries of each row of `Ω`.
    rows: Vec<Vec<(usize, f64)>>,
    y: Vec<f64>,
    omega_norm: f64,
}

impl OrbitalSystem {
    pub fn new(omega: &DMatrix<f64>, noise_sites: &[usize]) -> Result<Self> {
        let n = omega.nrows();
        if omega.ncols() != n || (omega - omega.transpose()).abs().max() > 1e-14 {
            return Err(invalid_input("Ω must be square and symmetric"));
        }
        crate::config::validate_sites(noise_sites, n, "noise site")?;
        let mut y = vec![0.0; n];
        for &u in noise_sites {
            y[u - 1] = 1.0;
        }
        let omega_norm = omega.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let rows = omega.row_iter().map(|r| r.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(b, &v)| (b, v)).collect()).collect();
        Ok(Self { rows, y, omega_norm })
    }

    pub fn from_config(cfg: &ChainConfig) -> Result<Self> {
        Self::new(&omega_from_config(cfg)?, &cfg.noise_sites)
    }

    pub fn n_sites(&self) -> usize {
        self.rows.len()
    }
}

/// Occupied single-particle orbitals of a pure Gaussian state,
/// `Z = Σ_o conj(ψ_o) ψ_oᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbitals {
    n_sites: usize,
    orbitals: Vec<Vec<C64>>,
}

impl Orbitals {
    pub fn from_excitations(sites: &[usize], n: usize) -> Result<Self> {
        crate::config::validate_sites(sites, n, "excited site")?;
        let orbitals = sites
            .iter()
            .map(|&s| {
                let mut v = vec![C64::new(0.0, 0.0); n];
                v[s - 1] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        Ok(Self { n_sites: n, orbitals })
    }

    /// Requires `Z` to be a projector (a pure Gaussian state).
    pub fn from_correlation(z: &CorrelationMatrix) -> Result<Self> {
        let (vals, vecs) = hermitian_eigen(z.matrix());
        if vals.iter().any(|&v| v.abs() > 1e-8 && (v - 1.0).abs() > 1e-8) {
            return Err(Error::InvalidState("trajectories need a pure Gaussian state (Z a projector)".into()));
        }
        let orbitals = vals
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(i, _)| vecs.column(i).iter().map(|z| z.conj()).collect())
            .collect();
        Ok(Self { n_sites: z.n_sites(), orbitals })
    }

    pub fn correlation(&self) -> CMat {
        let n = self.n_sites;
        CMat::from_fn(n, n, |a, b| self.orbitals.iter().map(|o| o[a].conj() * o[b]).sum())
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        (0..self.n_sites).map(|j| 2.0 * self.orbitals.iter().map(|o| o[j].norm_sqr()).sum::<f64>() - 1.0).collect()
    }
}

fn into_trace(grid: &TimeGrid, channels: Vec<Vec<f64>>) -> Result<Trace> {
    let mut trace = Trace::from_grid(grid);
    for (j, ch) in channels.into_iter().enumerate() {
        trace.insert(format!("sz_{}", j + 1), ch)?;
    }
    Ok(trace)
}

/// Spin-picture trajectory; channels `sz_1..sz_N` at the output points.
pub fn evolve_trajectory(psi0: &StateVector, sys: &SpinSystem, path: &NoisePath, grid: &TimeGrid) -> Result<Trace> {
    if psi0.n_sites() != sys.n_sites {
        return Err(invalid_input("state and system sizes differ"));
    }
    check_path(path, grid)?;
    let n = sys.n_sites;
    let d = 1usize << n;
    let dt = grid.step();
    let mut psi: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    let (mut term, mut next, mut hv) = (vec![C64::new(0.0, 0.0); d], vec![C64::new(0.0, 0.0); d], vec![C64::new(0.0, 0.0); d]);
    let mut out = vec![Vec::with_capacity(grid.points); n];
    let record = |psi: &[C64], out: &mut Vec<Vec<f64>>| {
        for (j, ch) in out.iter_mut().enumerate() {
            ch.push(psi.iter().enumerate().map(|(b, a)| z_sign(b, j + 1) * a.norm_sqr()).sum());
        }
    };
    record(&psi, &mut out);
    let mut noise = path.increments.iter();
    for i in 1..grid.points {
        for _ in 0..grid.substeps {
            let dw = *noise.next().expect("path length checked");
            let k_norm = dt * sys.h_norm + dw.abs() * sys.v_norm;
            taylor_step(&mut psi, &mut term, &mut next, k_norm, |x, y| {
                sys.h.mul_vec(x, y);
                sys.v.mul_vec(x, &mut hv);
                for (a, b) in y.iter_mut().zip(&hv) {
                    *a = *a * dt + *b * dw;
                }
            })?;
        }
        let drift = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs();
        if drift > NORM_TOL {
            return Err(norm_error("spin trajectory", grid.tau(i), drift));
        }
        record(&psi, &mut out);
    }
    into_trace(grid, out)
}

/// Fermion-picture trajectory of every occupied orbital.
pub fn evolve_orbitals(orb0: &Orbitals, sys: &OrbitalSystem, path: &NoisePath, grid: &TimeGrid) -> Result<Trace> {
    let n = sys.n_sites();
    if orb0.n_sites != n {
        return Err(invalid_input("state and system sizes differ"));
    }
    check_path(path, grid)?;
    let dt = grid.step();
    let mut orbs = orb0.clone();
    let (mut term, mut next) = (vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]);
    let mut out = vec![Vec::with_capacity(grid.points); n];
    let push = |o: &Orbitals, out: &mut Vec<Vec<f64>>| {
        for (ch, v) in out.iter_mut().zip(o.magnetizations()) {
            ch.push(v);
        }
    };
    push(&orbs, &mut out);
    let mut noise = path.increments.iter();
    for i in 1..grid.points {
        for _ in 0..grid.substeps {
            let dw = *noise.next().expect("path length checked");
            let k_norm = dt * sys.omega_norm + 2.0 * dw.abs();
            for psi in orbs.orbitals.iter_mut() {
                taylor_step(psi, &mut term, &mut next, k_norm, |x, y| {
                    for (a, row) in sys.rows.iter().enumerate() {
                        let mut acc = x[a] * (2.0 * dw * sys.y[a]);
                        for &(b, v) in row {
                            acc += x[b] * (dt * v);
                        }
                        y[a] = acc;
                    }
                })?;
            }
        }
        for psi in &orbs.orbitals {
            let drift = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs();
            if drift > NORM_TOL {
                return Err(norm_error("orbital trajectory", grid.tau(i), drift));
            }
        }
        push(&orbs, &mut out);
    }
    into_trace(grid, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Picture {
    Spin,
    Jw,
}

/// Mean and standard error of every channel over `trajectories` runs.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub mean: Trace,
    pub stderr: Trace,
    pub trajectories: usize,
}

/// Running mean and squared-deviation sums, mergeable across chunks.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
}

impl Moments {
    fn empty(channels: usize, len: usize) -> Self {
        Self { count: 0.0, mean: vec![vec![0.0; len]; channels], m2: vec![vec![0.0; len]; channels] }
    }

    fn push(&mut self, trace: &Trace) {
        self.count += 1.0;
        for ((m, s), (_, x)) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(trace.channels()) {
            for ((m, s), &x) in m.iter_mut().zip(s.iter_mut()).zip(x) {
                let delta = x - *m;
                *m += delta / self.count;
                *s += delta * (x - *m);
            }
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        if other.count == 0.0 {
            return self;
        }
        let total = self.count + other.count;
        for c in 0..self.mean.len() {
            for t in 0..self.mean[c].len() {
                let delta = other.mean[c][t] - self.mean[c][t];
                self.mean[c][t] += delta * other.count / total;
                self.m2[c][t] += other.m2[c][t] + delta * delta * self.count * other.count / total;
            }
        }
        self.count = total;
        self
    }
}

/// Ensemble over explicit seeds; the reduction runs in seed order.
pub fn ensemble_from_seeds(cfg: &ChainConfig, picture: Picture, seeds: &[TrajectorySeed]) -> Result<EnsembleResult> {
    cfg.validate()?;
    if seeds.len() < 2 {
        return Err(invalid_input("an ensemble needs at least 2 trajectories"));
    }
    let grid = cfg.grid();
    let n = cfg.n;
    let run = match picture {
        Picture::Spin => {
            let sys = SpinSystem::from_config(cfg)?;
            let psi0 = basis_state(&cfg.excited, n)?;
            Box::new(move |s: TrajectorySeed| evolve_trajectory(&psi0, &sys, &sample_noise_path(s, &grid, cfg.gamma)?, &grid))
                as Box<dyn Fn(TrajectorySeed) -> Result<Trace> + Sync>
        }
        Picture::Jw => {
            let sys = OrbitalSystem::from_config(cfg)?;
            let orb0 = Orbitals::from_excitations(&cfg.excited, n)?;
            Box::new(move |s: TrajectorySeed| evolve_orbitals(&orb0, &sys, &sample_noise_path(s, &grid, cfg.gamma)?, &grid))
        }
    };
    let partials: Vec<Moments> = seeds
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut m = Moments::empty(n, grid.points);
            for &s in chunk {
                m.push(&run(s)?);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let total = partials.iter().fold(Moments::empty(n, grid.points), |acc, p| acc.merge(p));
    let m = total.count;
    let mut mean = Trace::from_grid(&grid);
    let mut stderr = Trace::from_grid(&grid);
    for (j, (mu, s)) in total.mean.into_iter().zip(total.m2).enumerate() {
        mean.insert(format!("sz_{}", j + 1), mu)?;
        stderr.insert(format!("sz_{}", j + 1), s.into_iter().map(|v| (v.max(0.0) / (m - 1.0) / m).sqrt()).collect())?;
    }
    Ok(EnsembleResult { mean, stderr, trajectories: seeds.len() })
}

/// `M` trajectories with seeds `split(master_seed, i)`, `i = 0..M`.
pub fn ensemble_average(cfg: &ChainConfig, picture: Picture, m: usize, master_seed: u64) -> Result<EnsembleResult> {
    let seeds: Vec<TrajectorySeed> = (0..m as u64).map(|i| split(master_seed, i)).collect();
    ensemble_from_seeds(cfg, picture, &seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jw::{build_omega, simulate_jw, Parity};
    use crate::liouville::{evolve_master_trace, initial_state, AveragedGenerator};
    use crate::linalg::c;
    use nalgebra::DVector;

    fn sigma_z() -> CMat {
        CMat::from_diagonal(&DVector::from_vec(vec![c(-1.0), c(1.0)]))
    }

    #[test]
    fn noise_path_examples() {
        let grid = TimeGrid::new(1.0, 0.1, 1e-3);
        let p = sample_noise_path(7, &grid, 0.0).unwrap();
        assert!(p.increments.iter().all(|&x| x == 0.0));
        let a = sample_noise_path(7, &grid, 0.3).unwrap();
        let b = sample_noise_path(7, &grid, 0.3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_noise_path(split(7, 1), &grid, 0.3).unwrap());
        assert!(sample_noise_path(7, &grid, -1.0).is_err());

        let long = TimeGrid::new(1000.0, 1e-3, 1e-3);
        let p = sample_noise_path(11, &long, 0.3).unwrap();
        let n = p.increments.len() as f64;
        assert_eq!(p.increments.len(), 1_000_000);
        let mean = p.increments.iter().sum::<f64>() / n;
        let var = p.increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 3e-4).abs() < 0.01 * 3e-4, "{var}");
        assert!(mean.abs() < 5.0 * (3e-4 / n).sqrt());
    }

    #[test]
    fn commuting_noise_keeps_sz() {
        let sys = SpinSystem::new(1, &sigma_z(), &sigma_z()).unwrap();
        let psi = StateVector::new(1, DVector::from_vec(vec![c(0.6), c(0.8)])).unwrap();
        let grid = TimeGrid::new(2.0, 0.1, 1e-2);
        for s in 0..4 {
            let t = evolve_trajectory(&psi, &sys, &sample_noise_path(split(3, s), &grid, 1.0).unwrap(), &grid).unwrap();
            let z = t.channel("sz_1").unwrap();
            assert!(z.iter().all(|x| (x - z[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn qubit_dephasing_ensemble() {
        // Rotated frame of H = V = σ^z acting on |+⟩: ⟨σ^z⟩ = e^{-2γτ} cos 2τ.
        let sx = CMat::from_fn(2, 2, |a, b| if a != b { c(1.0) } else { c(0.0) });
        let sys = SpinSystem::new(1, &sx, &sx).unwrap();
        let up = basis_state(&[1], 1).unwrap();
        let gamma = 0.3;
        let grid = TimeGrid::new(3.0, 0.5, 1e-3);
        let m = 5000u64;
        let mut sum = vec![0.0; grid.points];
        let mut sq = vec![0.0; grid.points];
        for i in 0..m {
            let path = sample_noise_path(split(5, i), &grid, gamma).unwrap();
            let t = evolve_trajectory(&up, &sys, &path, &grid).unwrap();
            for (k, &x) in t.channel("sz_1").unwrap().iter().enumerate() {
                sum[k] += x;
                sq[k] += x * x;
            }
        }
        let m = m as f64;
        for k in 1..grid.points {
            let tau = grid.tau(k);
            let mean = sum[k] / m;
            let se = ((sq[k] / m - mean * mean) / (m - 1.0)).sqrt();
            let exact = (-2.0 * gamma * tau).exp() * (2.0 * tau).cos();
            assert!((mean - exact).abs() <= 3.0 * se, "tau {tau}: {mean} vs {exact} (se {se})");
        }
    }

    #[test]
    fn noiseless_matches_deterministic() {
        let cfg = ChainConfig { n: 4, gamma: 0.0, noise_sites: vec![2], t_max: 5.0, dt: 0.05, ..Default::default() };
        let grid = cfg.grid();
        let path = sample_noise_path(1, &grid, 0.0).unwrap();
        let spin = evolve_trajectory(&basis_state(&[1], 4).unwrap(), &SpinSystem::from_config(&cfg).unwrap(), &path, &grid).unwrap();
        let jw = evolve_orbitals(&Orbitals::from_excitations(&[1], 4).unwrap(), &OrbitalSystem::from_config(&cfg).unwrap(), &path, &grid).unwrap();
        let master = evolve_master_trace(&initial_state(&cfg).unwrap(), &AveragedGenerator::from_config(&cfg).unwrap(), &grid, false).unwrap();
        let z = simulate_jw(&cfg).unwrap();
        for ((name, a), (_, b)) in master.channels().zip(spin.channels()) {
            let x = jw.channel(name).unwrap();
            let y = z.channel(name).unwrap();
            for i in 0..a.len() {
                assert!((a[i] - b[i]).abs() < 1e-8 && (a[i] - x[i]).abs() < 1e-8 && (y[i] - x[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn spin_and_orbital_trajectories_agree() {
        let cfg = ChainConfig { n: 4, gamma: 0.5, noise_sites: vec![2, 3], t_max: 2.0, dt: 0.1, ..Default::default() };
        let grid = cfg.grid();
        let path = sample_noise_path(9, &grid, cfg.gamma).unwrap();
        let spin = evolve_trajectory(&basis_state(&[1], 4).unwrap(), &SpinSystem::from_config(&cfg).unwrap(), &path, &grid).unwrap();
        let jw = evolve_orbitals(&Orbitals::from_excitations(&[1], 4).unwrap(), &OrbitalSystem::from_config(&cfg).unwrap(), &path, &grid).unwrap();
        for ((_, a), (_, b)) in spin.channels().zip(jw.channels()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identical_seeds_have_zero_error() {
        let cfg = ChainConfig { n: 4, noise_sites: vec![2], t_max: 1.0, dt: 0.1, ..Default::default() };
        let r = ensemble_from_seeds(&cfg, Picture::Jw, &[split(4, 0), split(4, 0)]).unwrap();
        assert!(r.stderr.channels().all(|(_, s)| s.iter().all(|&x| x == 0.0)));
        assert!(ensemble_from_seeds(&cfg, Picture::Jw, &[split(4, 0)]).is_err());
    }

    #[test]
    fn ensemble_is_deterministic_and_scales() {
        let cfg = ChainConfig { n: 6, t_max: 4.0, dt: 0.1, ..Default::default() };
        let a = ensemble_average(&cfg, Picture::Jw, 100, 2).unwrap();
        let b = ensemble_average(&cfg, Picture::Jw, 100, 2).unwrap();
        for ((_, x), (_, y)) in a.mean.channels().zip(b.mean.channels()) {
            assert_eq!(x, y);
        }
        let median = |r: &EnsembleResult| {
            let mut v: Vec<f64> = r.stderr.channels().flat_map(|(_, s)| s[1..].to_vec()).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let r2 = ensemble_average(&cfg, Picture::Jw, 200, 2).unwrap();
        let r4 = ensemble_average(&cfg, Picture::Jw, 400, 2).unwrap();
        let doubling = median(&a) / median(&r2);
        let quadrupling = median(&a) / median(&r4);
        assert!(doubling > 2f64.sqrt() / 1.5 && doubling < 2f64.sqrt() * 1.5, "{doubling}");
        assert!(quadrupling > 2.0 / 1.5 && quadrupling < 2.0 * 1.5, "{quadrupling}");
    }

    #[test]
    fn ensemble_tracks_master_equation() {
        let cfg = ChainConfig { t_max: 5.0, dt: 0.05, ..Default::default() };
        let r = ensemble_average(&cfg, Picture::Jw, 400, 1).unwrap();
        let z = simulate_jw(&cfg).unwrap();
        for (name, mean) in r.mean.channels() {
            let se = r.stderr.channel(name).unwrap();
            for (i, &x) in z.channel(name).unwrap().iter().enumerate() {
                assert!((mean[i] - x).abs() <= (3.0 * se[i]).max(0.05), "{name} at {i}");
            }
        }
    }

    #[test]
    fn orbitals_from_projector() {
        let z = CorrelationMatrix::from_excitations(&[2, 3], 4).unwrap();
        let o = Orbitals::from_correlation(&z).unwrap();
        assert!(crate::linalg::max_abs_diff(&o.correlation(), z.matrix()) < 1e-12);
        let mixed = CorrelationMatrix::new(CMat::identity(2, 2) * c(0.5)).unwrap();
        assert!(Orbitals::from_correlation(&mixed).is_err());
        let sys = OrbitalSystem::new(&build_omega(4, 1.0, 1.0, Parity::Even), &[1]).unwrap();
        let grid = TimeGrid::new(1.0, 0.5, 0.5);
        let path = sample_noise_path(1, &grid, 100.0).unwrap();
        assert!(matches!(evolve_orbitals(&o, &sys, &path, &grid), Err(Error::NumericalTolerance { .. })));
    }
}
