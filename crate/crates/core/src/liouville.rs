//! Noise-averaged master equation in the spin picture.
//!
//! `dρ/dτ = -i[H, ρ] - (γ/2)[V, [V, ρ]]`, integrated with fixed-step RK4 in
//! commutator form.  When `H` conserves the excitation number and `V` is
//! diagonal, each excitation-sector block `ρ_nm` evolves on its own and only
//! blocks present in the initial state are integrated.

use nalgebra::DMatrix;

use crate::config::{ChainConfig, TimeGrid};
use crate::error::{invalid_input, Error, Result};
use crate::hilbert::{basis_state, build_hamiltonian, build_noise_operator, excitation_number, local_z_all, DensityMatrix};
use crate::linalg::{c, commutator, hermitian_eigen, hermiticity_error, rk4_step, CMat, SparseOp, C64};
use crate::metrics::Trace;
use crate::modes::{label_spectrum, numeric_table, ModeTable, NumericMode};

/// Drift allowed in trace and Hermiticity at every output point.
const DRIFT_TOL: f64 = 1e-10;
const NEG_I: C64 = C64::new(0.0, -1.0);

#[derive(Debug, Clone)]
struct Sectors {
    /// Basis indices of each excitation number.
    members: Vec<Vec<usize>>,
    h_blocks: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub struct AveragedGenerator {
    n_sites: usize,
    h: CMat,
    v: CMat,
    gamma: f64,
    h_sparse: SparseOp,
    v_diag: Option<Vec<f64>>,
    sectors: Option<Sectors>,
}

impl AveragedGenerator {
    pub fn new(n_sites: usize, h: CMat, v: CMat, gamma: f64) -> Result<Self> {
        let d = 1usize << n_sites;
        if h.shape() != (d, d) || v.shape() != (d, d) {
            return Err(invalid_input(format!("H and V must be {d}x{d}")));
        }
        if hermiticity_error(&h) > 1e-12 || hermiticity_error(&v) > 1e-12 {
            return Err(invalid_input("H and V must be Hermitian"));
        }
        if !(gamma >= 0.0) {
            return Err(invalid_input("gamma must be >= 0"));
        }
        let is_diag = (0..d).all(|a| (0..d).all(|b| a == b || v[(a, b)] == c(0.0)));
        let v_diag = is_diag.then(|| (0..d).map(|a| v[(a, a)].re).collect::<Vec<_>>());
        let conserving = (0..d).all(|a| (0..d).all(|b| h[(a, b)] == c(0.0) || excitation_number(a) == excitation_number(b)));
        let sectors = (is_diag && conserving).then(|| {
            let mut members = vec![Vec::new(); n_sites + 1];
            for b in 0..d {
                members[excitation_number(b)].push(b);
            }
            let h_blocks = members.iter().map(|idx| CMat::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])])).collect();
            Sectors { members, h_blocks }
        });
        Ok(Self { n_sites, h_sparse: SparseOp::from_dense(&h), h, v, gamma, v_diag, sectors })
    }

    pub fn from_config(cfg: &ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let h = build_hamiltonian(cfg)?;
        let v = build_noise_operator(&cfg.noise_sites, cfg.n)?;
        Self::new(cfg.n, h, v, cfg.gamma)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn hamiltonian(&self) -> &CMat {
        &self.h
    }

    pub fn noise(&self) -> &CMat {
        &self.v
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Whether evolution runs on excitation-sector blocks.
    pub fn is_sector_resolved(&self) -> bool {
        self.sectors.is_some()
    }

    /// The generator applied to an arbitrary operator.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(rho.nrows(), rho.ncols());
        self.h_sparse.neg_i_commutator(rho, &mut out);
        let half = 0.5 * self.gamma;
        match &self.v_diag {
            Some(v) => {
                for b in 0..rho.ncols() {
                    for a in 0..rho.nrows() {
                        let dv = v[a] - v[b];
                        out[(a, b)] -= rho[(a, b)] * (half * dv * dv);
                    }
                }
            }
            None => {
                let inner = commutator(&self.v, rho);
                out -= commutator(&self.v, &inner) * c(half);
            }
        }
        out
    }

    fn block_weights(&self, n: usize, m: usize) -> DMatrix<f64> {
        let s = self.sectors.as_ref().expect("sector-resolved generator");
        let v = self.v_diag.as_ref().expect("diagonal noise");
        let (rows, cols) = (&s.members[n], &s.members[m]);
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            let dv = v[rows[i]] - v[cols[j]];
            0.5 * self.gamma * dv * dv
        })
    }

    /// Explicit row-major superoperator of block `(n, m)`.
    pub fn superoperator_block(&self, n: usize, m: usize) -> Result<CMat> {
        let s = self.sectors.as_ref().ok_or_else(|| invalid_input("generator has no sector structure"))?;
        if n > self.n_sites || m > self.n_sites {
            return Err(invalid_input(format!("sector ({n}, {m}) out of range")));
        }
        let (hn, hm) = (&s.h_blocks[n], &s.h_blocks[m]);
        let (da, db) = (hn.nrows(), hm.nrows());
        let w = self.block_weights(n, m);
        let mut l = CMat::zeros(da * db, da * db);
        for a in 0..da {
            for b in 0..db {
                let row = a * db + b;
                for a2 in 0..da {
                    l[(row, a2 * db + b)] += NEG_I * hn[(a, a2)];
                }
                for b2 in 0..db {
                    l[(row, a * db + b2)] -= NEG_I * hm[(b2, b)];
                }
                l[(row, row)] -= c(w[(a, b)]);
            }
        }
        Ok(l)
    }
}

struct Block {
    n: usize,
    m: usize,
    x: CMat,
    w: DMatrix<f64>,
}

fn block_rhs(hn: &CMat, hm: &CMat, w: &DMatrix<f64>, x: &CMat) -> CMat {
    let mut out = (hn * x - x * hm) * NEG_I;
    for (o, (xv, wv)) in out.iter_mut().zip(x.iter().zip(w.iter())) {
        *o -= xv * *wv;
    }
    out
}

fn drift_check(rho: &CMat, trace0: C64, tau: f64) -> Result<()> {
    let drift = (rho.trace() - trace0).norm();
    let herm = hermiticity_error(rho);
    if drift > DRIFT_TOL || herm > DRIFT_TOL {
        return Err(Error::NumericalTolerance {
            context: "evolve_master".into(),
            detail: format!("at tau = {tau}: trace drift {drift:e}, hermiticity error {herm:e}"),
        });
    }
    Ok(())
}

/// Integrates from `rho0` over `grid`, calling `observer(i, ρ(τ_i))` at every
/// output point including `τ_0`.
pub fn evolve_master<F>(rho0: &DensityMatrix, gen: &AveragedGenerator, grid: &TimeGrid, mut observer: F) -> Result<()>
where
    F: FnMut(usize, &DensityMatrix) -> Result<()>,
{
    if rho0.n_sites() != gen.n_sites() {
        return Err(invalid_input("state and generator sizes differ"));
    }
    let n = gen.n_sites();
    let h = grid.step();
    let trace0 = rho0.trace();
    observer(0, rho0)?;

    if let Some(sec) = &gen.sectors {
        let m0 = rho0.matrix();
        let mut blocks: Vec<Block> = Vec::new();
        for (a, ra) in sec.members.iter().enumerate() {
            for (b, rb) in sec.members.iter().enumerate() {
                let x = CMat::from_fn(ra.len(), rb.len(), |i, j| m0[(ra[i], rb[j])]);
                if x.iter().any(|z| z.norm() > 0.0) {
                    blocks.push(Block { n: a, m: b, x, w: gen.block_weights(a, b) });
                }
            }
        }
        let d = 1usize << n;
        let mut full = CMat::zeros(d, d);
        for i in 1..grid.points {
            for blk in blocks.iter_mut() {
                let (hn, hm) = (&sec.h_blocks[blk.n], &sec.h_blocks[blk.m]);
                for _ in 0..grid.substeps {
                    blk.x = rk4_step(|x| block_rhs(hn, hm, &blk.w, x), &blk.x, h);
                }
            }
            for blk in &blocks {
                let (ra, rb) = (&sec.members[blk.n], &sec.members[blk.m]);
                for (jj, &cb) in rb.iter().enumerate() {
                    for (ii, &ca) in ra.iter().enumerate() {
                        full[(ca, cb)] = blk.x[(ii, jj)];
                    }
                }
            }
            drift_check(&full, trace0, grid.tau(i))?;
            observer(i, &DensityMatrix::from_trusted(n, full.clone()))?;
        }
    } else {
        let mut rho = rho0.matrix().clone();
        for i in 1..grid.points {
            for _ in 0..grid.substeps {
                rho = rk4_step(|x| gen.apply(x), &rho, h);
            }
            drift_check(&rho, trace0, grid.tau(i))?;
            observer(i, &DensityMatrix::from_trusted(n, rho.clone()))?;
        }
    }
    Ok(())
}

/// Magnetization channels `sz_1..sz_N`, optionally with every snapshot.
pub fn evolve_master_trace(rho0: &DensityMatrix, gen: &AveragedGenerator, grid: &TimeGrid, keep_snapshots: bool) -> Result<Trace> {
    let n = gen.n_sites();
    let mut sz = vec![Vec::with_capacity(grid.points); n];
    let mut snaps = Vec::new();
    evolve_master(rho0, gen, grid, |_, rho| {
        for (ch, z) in sz.iter_mut().zip(local_z_all(rho.matrix(), n)) {
            ch.push(z);
        }
        if keep_snapshots {
            snaps.push(rho.clone());
        }
        Ok(())
    })?;
    let mut trace = Trace::from_grid(grid);
    for (j, ch) in sz.into_iter().enumerate() {
        trace.insert(format!("sz_{}", j + 1), ch)?;
    }
    if keep_snapshots {
        trace.set_snapshots(snaps)?;
    }
    Ok(trace)
}

/// Largest change of any `⟨σ^z_j⟩` when the internal step is halved.
pub fn step_halving_check(rho0: &DensityMatrix, gen: &AveragedGenerator, grid: &TimeGrid) -> Result<f64> {
    let coarse = evolve_master_trace(rho0, gen, grid, false)?;
    let fine_grid = TimeGrid { substeps: grid.substeps * 2, ..*grid };
    let fine = evolve_master_trace(rho0, gen, &fine_grid, false)?;
    let mut worst = 0.0f64;
    for ((_, a), (_, b)) in coarse.channels().zip(fine.channels()) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Product state with the configured sites excited.
pub fn initial_state(cfg: &ChainConfig) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_pure(&basis_state(&cfg.excited, cfg.n)?))
}

/// Eigen-decomposition of `H` with the frequency table `Λ_kl = Λ_k - Λ_l`.
#[derive(Debug, Clone)]
pub struct LiouvilleSpectrum {
    pub energies: Vec<f64>,
    pub vectors: CMat,
}

impl LiouvilleSpectrum {
    /// `Λ_k - Λ_l` for 1-based labels.
    pub fn freq(&self, k: usize, l: usize) -> f64 {
        self.energies[k - 1] - self.energies[l - 1]
    }

    pub fn frequency_table(&self) -> Vec<(usize, usize, f64)> {
        let d = self.energies.len();
        (1..=d).flat_map(|k| (1..=d).map(move |l| (k, l))).map(|(k, l)| (k, l, self.freq(k, l))).collect()
    }

    pub fn pairing_error(&self) -> f64 {
        let d = self.energies.len();
        (1..=d)
            .flat_map(|k| (1..=d).map(move |l| (k, l)))
            .map(|(k, l)| (self.freq(k, l) + self.freq(l, k)).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ c_kl e^{-iΛ_kl τ} |v_k⟩⟨v_l|`.
    pub fn reconstruct(&self, coeffs: &CMat, tau: f64) -> CMat {
        let d = self.energies.len();
        let phased = CMat::from_fn(d, d, |k, l| coeffs[(k, l)] * (NEG_I * (self.energies[k] - self.energies[l]) * tau).exp());
        &self.vectors * phased * self.vectors.adjoint()
    }
}

pub fn spectral_decompose(h: &CMat) -> Result<LiouvilleSpectrum> {
    if h.nrows() != h.ncols() || hermiticity_error(h) > 1e-10 {
        return Err(invalid_input("spectral_decompose needs a Hermitian matrix"));
    }
    let (energies, vectors) = hermitian_eigen(h);
    Ok(LiouvilleSpectrum { energies, vectors })
}

/// `c_kl = ⟨v_k|ρ0|v_l⟩`.
pub fn mode_overlap(rho0: &DensityMatrix, spec: &LiouvilleSpectrum) -> Result<CMat> {
    if rho0.dim() != spec.energies.len() {
        return Err(invalid_input("state and spectrum dimensions differ"));
    }
    Ok(spec.vectors.adjoint() * rho0.matrix() * &spec.vectors)
}

/// Which Liouvillian blocks to diagonalise in [`numeric_decay_rates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateScope {
    /// Every sector block; labels index the eigenbasis of the full `H`.
    Full,
    /// Block `(n, m)` only; labels index each sector's own eigenbasis.
    Sector(usize, usize),
}

/// Largest chain for which [`RateScope::Full`] is attempted.
pub const MAX_FULL_SUPEROPERATOR_SITES: usize = 6;

/// Numeric decay rates `-Re λ / γ` of the explicit superoperator, labelled by
/// nearest free frequency and overlap with `|v_k⟩⟨v_l|`.
pub fn numeric_decay_rates(gen: &AveragedGenerator, scope: RateScope) -> Result<ModeTable> {
    if !(gen.gamma > 0.0) {
        return Err(invalid_input("numeric decay rates need gamma > 0"));
    }
    let sec = gen.sectors.as_ref().ok_or_else(|| invalid_input("generator has no sector structure"))?;
    let eig: Vec<(Vec<f64>, CMat)> = sec.h_blocks.iter().map(hermitian_eigen).collect();
    let label_block = |n: usize, m: usize| -> Result<Vec<NumericMode>> {
        let l = gen.superoperator_block(n, m)?;
        let (ea, wa) = &eig[n];
        let (eb, wb) = &eig[m];
        label_spectrum(&l, ea, eb, |lam| -lam.im, |k, q| wa.column(k) * wb.column(q).adjoint())
    };
    match scope {
        RateScope::Sector(n, m) => {
            if n > gen.n_sites || m > gen.n_sites {
                return Err(invalid_input(format!("sector ({n}, {m}) out of range")));
            }
            let modes: Vec<NumericMode> =
                label_block(n, m)?.into_iter().map(|x| NumericMode { k: x.k + 1, l: x.l + 1, ..x }).collect();
            let (ea, eb) = (&eig[n].0, &eig[m].0);
            Ok(numeric_table(&modes, gen.gamma, |k, l| ea[k - 1] - eb[l - 1]))
        }
        RateScope::Full => {
            if gen.n_sites > MAX_FULL_SUPEROPERATOR_SITES {
                return Err(Error::Capacity(format!(
                    "explicit superoperator limited to N <= {MAX_FULL_SUPEROPERATOR_SITES}; use a single sector or the JW generator"
                )));
            }
            // Global ascending order over all sectors.
            let mut order: Vec<(f64, usize, usize)> = Vec::new();
            for (s, (e, _)) in eig.iter().enumerate() {
                order.extend(e.iter().enumerate().map(|(i, &x)| (x, s, i)));
            }
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut global = vec![Vec::new(); eig.len()];
            for (s, (e, _)) in eig.iter().enumerate() {
                global[s] = vec![0; e.len()];
            }
            for (g, &(_, s, i)) in order.iter().enumerate() {
                global[s][i] = g + 1;
            }
            let energies: Vec<f64> = order.iter().map(|x| x.0).collect();
            let mut modes = Vec::new();
            for n in 0..eig.len() {
                for m in 0..eig.len() {
                    for x in label_block(n, m)? {
                        modes.push(NumericMode { k: global[n][x.k], l: global[m][x.l], ..x });
                    }
                }
            }
            Ok(numeric_table(&modes, gen.gamma, |k, l| energies[k - 1] - energies[l - 1]))
        }
    }
}
