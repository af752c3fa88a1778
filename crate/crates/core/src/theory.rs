//! First-order decay rates of the magnetization modes `φ_k φ_lᵀ`, stable
//! synchronization conditions and the surviving magnetization pattern.
//!
//! The sine family `φ_k(j) = sqrt(2/N) sin(jkπ/N)` vanishes at site `N` for
//! every `k`, so noise on site `N` never enters the analytic rates.  The
//! matching numeric reference is the open chain on sites `1..N-1`
//! ([`crate::jw::reference_omega`]).

use nalgebra::DMatrix;
use serde::Serialize;
use std::f64::consts::PI;

use crate::config::validate_sites;
use crate::error::{invalid_input, Error, Result};
use crate::jw::{build_omega, build_z_generator, reference_omega, sine_mode, Parity};
use crate::linalg::c;
use crate::modes::{cluster, label_spectrum, numeric_table, ModeEntry, ModeSource, ModeTable};

/// Default tolerance for grouping equal frequencies.
pub const FREQ_TOL: f64 = 1e-9;
/// Rates at or below this are treated as exactly zero.
pub const ZERO_RATE: f64 = 1e-12;

fn s(n: usize, site: usize, k: usize) -> f64 {
    (site as f64 * k as f64 * PI / n as f64).sin()
}

/// Clamps rounding residue (order 1e-32 for exact zeros) to zero.
fn clean(rate: f64) -> f64 {
    if rate < 1e-14 {
        0.0
    } else {
        rate
    }
}

fn check_pair(n: usize, k: usize, l: usize) -> Result<()> {
    if k == 0 || l == 0 || k >= n || l >= n {
        return Err(invalid_input(format!("mode indices ({k}, {l}) outside 1..{n}")));
    }
    if k == l {
        return Err(invalid_input(format!("k = l = {k} is a zero-frequency mode")));
    }
    Ok(())
}

/// `Λ̃_kl = -2J (cos(kπ/N) - cos(lπ/N))`.
pub fn analytic_frequency(n: usize, j: f64, k: usize, l: usize) -> f64 {
    -2.0 * j * ((k as f64 * PI / n as f64).cos() - (l as f64 * PI / n as f64).cos())
}

/// The mode with the same frequency as `(k, l)`.
pub fn degenerate_partner(n: usize, k: usize, l: usize) -> (usize, usize) {
    (n - l, n - k)
}

pub fn decay_rate_one_site(n: usize, u: usize, k: usize, l: usize, degenerate: bool) -> Result<f64> {
    check_pair(n, k, l)?;
    validate_sites(&[u], n, "noise site")?;
    let (a, b) = (s(n, u, k).powi(2), s(n, u, l).powi(2));
    let nf = n as f64;
    let cross = if degenerate { 32.0 } else { 16.0 };
    Ok(clean((4.0 / nf) * (a + b) - (cross / (nf * nf)) * a * b))
}

/// Two-site rates.  For the degenerate case the cross term carries the
/// relative sign `(-1)^{u+v}` of the partner mode's sine components, which
/// is `+1` whenever `u` and `v` have equal parity.
pub fn decay_rate_two_site(n: usize, u: usize, v: usize, k: usize, l: usize, degenerate: bool) -> Result<f64> {
    check_pair(n, k, l)?;
    if u == v {
        return Err(invalid_input("two-site noise needs distinct sites"));
    }
    validate_sites(&[u, v], n, "noise site")?;
    let nf = n as f64;
    let pk = s(n, u, k).powi(2) + s(n, v, k).powi(2);
    let pl = s(n, u, l).powi(2) + s(n, v, l).powi(2);
    let non = (4.0 / nf) * (pk + pl) - (16.0 / (nf * nf)) * pk * pl;
    if !degenerate {
        return Ok(clean(non));
    }
    let sign = if (u + v).is_multiple_of(2) { 1.0 } else { -1.0 };
    let q = s(n, u, k) * s(n, u, l) + sign * s(n, v, k) * s(n, v, l);
    Ok(clean(non - (16.0 / (nf * nf)) * q * q))
}

/// Closed-form rate for one or two noise sites.
pub fn closed_form_rate(n: usize, sites: &[usize], k: usize, l: usize, degenerate: bool) -> Result<f64> {
    match sites {
        [u] => decay_rate_one_site(n, *u, k, l, degenerate),
        [u, v] => decay_rate_two_site(n, *u, *v, k, l, degenerate),
        _ => Err(invalid_input("closed forms cover one or two noise sites")),
    }
}

/// All ordered pairs `k ≠ l` in `1..N-1`, grouped by equal frequency.
fn frequency_groups(n: usize, j: f64, tol: f64) -> (Vec<(usize, usize, f64)>, Vec<usize>) {
    let pairs: Vec<(usize, usize, f64)> = (1..n)
        .flat_map(|k| (1..n).map(move |l| (k, l)))
        .filter(|(k, l)| k != l)
        .map(|(k, l)| (k, l, analytic_frequency(n, j, k, l)))
        .collect();
    let freqs: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let groups = cluster(&freqs, tol);
    (pairs, groups)
}

/// `P_ab = 2⟨⟨a|𝒴²|b⟩⟩` over modes `φ_k φ_lᵀ`, with `𝒴 X = [Y, X]` and `Y`
/// the projector onto `sites`.
pub fn perturbation_matrix(n: usize, sites: &[usize], members: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    validate_sites(sites, n, "noise site")?;
    let mut y = DMatrix::zeros(n, n);
    for &u in sites {
        y[(u - 1, u - 1)] = 1.0;
    }
    let modes: Vec<DMatrix<f64>> = members
        .iter()
        .map(|&(k, l)| {
            check_pair(n, k, l)?;
            Ok(sine_mode(n, k) * sine_mode(n, l).transpose())
        })
        .collect::<Result<_>>()?;
    let y2 = |x: &DMatrix<f64>| {
        let yx = &y * x - x * &y;
        &y * &yx - &yx * &y
    };
    let m = members.len();
    Ok(DMatrix::from_fn(m, m, |a, b| 2.0 * modes[a].dot(&y2(&modes[b]))))
}

/// First-order rates from the perturbation matrix of every frequency group.
pub fn degenerate_block_rates(n: usize, j: f64, sites: &[usize], freq_tol: f64) -> Result<ModeTable> {
    if !(freq_tol > 0.0) {
        return Err(invalid_input("freq_tol must be positive"));
    }
    validate_sites(sites, n, "noise site")?;
    let (pairs, groups) = frequency_groups(n, j, freq_tol);
    let n_groups = groups.iter().max().map_or(0, |m| m + 1);
    let mut table = ModeTable::default();
    for g in 0..n_groups {
        let members: Vec<(usize, usize, f64)> = pairs.iter().zip(&groups).filter(|(_, &x)| x == g).map(|(p, _)| *p).collect();
        let labels: Vec<(usize, usize)> = members.iter().map(|p| (p.0, p.1)).collect();
        let p = perturbation_matrix(n, sites, &labels)?;
        let eig = p.symmetric_eigen();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        // Each eigenvalue goes to the member with the largest weight in its
        // eigenvector; ties fall to the earlier member.
        let mut taken = vec![false; labels.len()];
        let source = if labels.len() == 1 { ModeSource::AnalyticNondeg } else { ModeSource::AnalyticDeg };
        for &e in &order {
            let v = eig.eigenvectors.column(e);
            let idx = (0..labels.len())
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
                .expect("one label per eigenvalue");
            taken[idx] = true;
            table.entries.push(ModeEntry {
                k: labels[idx].0,
                l: labels[idx].1,
                freq: members[idx].2,
                rate: eig.eigenvalues[e].max(0.0),
                source,
                group: g,
            });
        }
        if labels.len() > 2 {
            table.flagged_groups.push(g);
        }
    }
    table.entries.sort_by_key(|a| (a.k, a.l));
    Ok(table)
}

/// Closed-form rates for every ordered pair.  Two-member groups use the
/// degenerate form; larger (accidental) groups fall back to the smallest
/// perturbation-matrix eigenvalue and are flagged.
pub fn analytic_mode_table(n: usize, j: f64, sites: &[usize], freq_tol: f64) -> Result<ModeTable> {
    let (pairs, groups) = frequency_groups(n, j, freq_tol);
    let mut table = ModeTable::default();
    for (i, &(k, l, freq)) in pairs.iter().enumerate() {
        let g = groups[i];
        let size = groups.iter().filter(|&&x| x == g).count();
        let (rate, source) = match size {
            1 => (closed_form_rate(n, sites, k, l, false)?, ModeSource::AnalyticNondeg),
            2 => (closed_form_rate(n, sites, k, l, true)?, ModeSource::AnalyticDeg),
            _ => {
                let members: Vec<(usize, usize)> =
                    pairs.iter().zip(&groups).filter(|(_, &x)| x == g).map(|(p, _)| (p.0, p.1)).collect();
                let p = perturbation_matrix(n, sites, &members)?;
                let min = p.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
                if !table.flagged_groups.contains(&g) {
                    table.flagged_groups.push(g);
                }
                (min.max(0.0), ModeSource::AnalyticDeg)
            }
        };
        table.entries.push(ModeEntry { k, l, freq, rate, source, group: g });
    }
    Ok(table)
}

/// Numeric rates `-Re λ / γ` of the explicit correlation-matrix generator,
/// labelled by the ascending eigenbasis of `omega`.
pub fn numeric_mode_table(omega: &DMatrix<f64>, sites: &[usize], gamma: f64) -> Result<ModeTable> {
    if !(gamma > 0.0) {
        return Err(invalid_input("numeric rates need gamma > 0"));
    }
    let gen = build_z_generator(omega, sites, gamma)?;
    let eig = omega.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..omega.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w: Vec<_> = order.iter().map(|&i| eig.eigenvectors.column(i).map(c)).collect();
    let modes = label_spectrum(&gen.explicit(), &energies, &energies, |lam| lam.im, |k, l| &w[k] * w[l].transpose())?;
    let modes: Vec<_> = modes.into_iter().map(|m| crate::modes::NumericMode { k: m.k + 1, l: m.l + 1, ..m }).collect();
    Ok(numeric_table(&modes, gamma, |k, l| energies[k - 1] - energies[l - 1]))
}

/// Numeric table on the open-chain reference, whose labels coincide with the
/// analytic `(k, l)` for `J > 0`.  Noise on site `N` is dropped.
pub fn reference_mode_table(n: usize, j: f64, g: f64, sites: &[usize], gamma: f64) -> Result<ModeTable> {
    validate_sites(sites, n, "noise site")?;
    let kept: Vec<usize> = sites.iter().copied().filter(|&u| u < n).collect();
    numeric_mode_table(&reference_omega(n, j, g), &kept, gamma)
}

/// Numeric table of the physical one-excitation ring.
pub fn ring_mode_table(n: usize, j: f64, g: f64, sites: &[usize], gamma: f64) -> Result<ModeTable> {
    numeric_mode_table(&build_omega(n, j, g, Parity::Odd), sites, gamma)
}

/// Rates of one frequency group, analytic and numeric, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub freq: f64,
    pub members: Vec<(usize, usize)>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GroupComparison {
    /// Largest deviation judged by the 2% relative / 1e-6 absolute rule;
    /// `None` when the multisets have different sizes.
    pub fn worst_violation(&self, rel: f64, abs: f64) -> Option<f64> {
        if self.analytic.len() != self.numeric.len() {
            return None;
        }
        Some(
            self.analytic
                .iter()
                .zip(&self.numeric)
                .map(|(&a, &x)| rate_mismatch(a, x, rel, abs))
                .fold(0.0, f64::max),
        )
    }
}

/// Ratio of the deviation to its allowance (`<= 1` passes).
pub fn rate_mismatch(analytic: f64, numeric: f64, rel: f64, abs: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if analytic.abs() <= abs {
        d / abs
    } else {
        d / (rel * analytic.abs())
    }
}

/// Pairs each analytic frequency group with the numeric rates at the same
/// frequency (within `freq_tol`).
pub fn compare_groups(analytic: &ModeTable, numeric: &ModeTable, freq_tol: f64) -> Vec<GroupComparison> {
    let mut ids: Vec<usize> = analytic.entries.iter().map(|e| e.group).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|g| {
            let members: Vec<&ModeEntry> = analytic.group(g).collect();
            let freq = members[0].freq;
            let mut a: Vec<f64> = members.iter().map(|e| e.rate).collect();
            let mut x: Vec<f64> =
                numeric.entries.iter().filter(|e| (e.freq - freq).abs() <= freq_tol).map(|e| e.rate).collect();
            a.sort_by(f64::total_cmp);
            x.sort_by(f64::total_cmp);
            GroupComparison { freq, members: members.iter().map(|e| (e.k, e.l)).collect(), analytic: a, numeric: x }
        })
        .collect()
}

/// One row of the decay-rate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub k: usize,
    pub l: usize,
    pub freq: f64,
    pub group_size: usize,
    pub m_analytic: Option<f64>,
    pub m_numeric: Option<f64>,
    pub rel_err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    Analytic,
    Numeric,
    Both,
}

/// Per-pair rates.  The numeric value of a degenerate pair is the smallest
/// numeric rate of its group, matching what the closed form describes.
pub fn decay_table(n: usize, j: f64, g: f64, sites: &[usize], method: RateMethod, gamma: f64) -> Result<Vec<DecayRow>> {
    let analytic = analytic_mode_table(n, j, sites, FREQ_TOL)?;
    let numeric = match method {
        RateMethod::Analytic => None,
        _ => Some(reference_mode_table(n, j, g, sites, gamma)?),
    };
    let rows = analytic
        .entries
        .iter()
        .map(|e| {
            let size = analytic.group(e.group).count();
            let m_numeric = numeric.as_ref().map(|t| {
                if size == 1 {
                    t.get(e.k, e.l).map_or(f64::NAN, |x| x.rate)
                } else {
                    t.entries.iter().filter(|x| (x.freq - e.freq).abs() <= 1e-6).map(|x| x.rate).fold(f64::INFINITY, f64::min)
                }
            });
            let m_analytic = (method != RateMethod::Numeric).then_some(e.rate);
            let rel_err = match (m_analytic, m_numeric) {
                (Some(a), Some(x)) if a.abs() > 1e-6 => Some((a - x).abs() / a.abs()),
                (Some(a), Some(x)) => Some((a - x).abs()),
                _ => None,
            };
            DecayRow { k: e.k, l: e.l, freq: e.freq, group_size: size, m_analytic, m_numeric, rel_err }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncConfigResult {
    pub n: usize,
    pub noise_sites: Vec<usize>,
    pub pair: (usize, usize),
    pub mode: Vec<f64>,
    pub stable_sync: bool,
}

/// Nonzero-frequency pairs `k < l` whose analytic rate vanishes.
pub fn zero_rate_pairs(n: usize, sites: &[usize]) -> Result<Vec<(usize, usize)>> {
    let table = analytic_mode_table(n, 1.0, sites, FREQ_TOL)?;
    Ok(table
        .entries
        .iter()
        .filter(|e| e.k < e.l && e.freq.abs() > FREQ_TOL && e.rate <= ZERO_RATE)
        .map(|e| (e.k, e.l))
        .collect())
}

fn site_sets(n: usize, max_sites: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1..=n).map(|u| vec![u]).collect();
    if max_sites >= 2 {
        for u in 1..=n {
            for v in u + 1..=n {
                out.push(vec![u, v]);
            }
        }
    }
    out
}

/// Brute force over every even `N <= n_max` and every one- or two-site
/// noise set, keeping configurations with exactly one surviving
/// nonzero-frequency pair.
pub fn find_sync_configs(n_max: usize, max_sites: usize) -> Result<Vec<SyncConfigResult>> {
    if !(1..=2).contains(&max_sites) {
        return Err(invalid_input("max_sites must be 1 or 2"));
    }
    let mut out = Vec::new();
    for n in (2..=n_max).step_by(2) {
        for sites in site_sets(n, max_sites) {
            let zero = zero_rate_pairs(n, &sites)?;
            if let [(k, l)] = zero[..] {
                out.push(SyncConfigResult { n, mode: magnetization_mode(n, k, l)?, noise_sites: sites, pair: (k, l), stable_sync: true });
            }
        }
    }
    Ok(out)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Closed-form characterisation of [`find_sync_configs`]: the sine
/// components vanishing on every noise site are the multiples of
/// `N / gcd(N, sites)`, so exactly one surviving pair needs that gcd to be 3.
pub fn closed_form_sync(n: usize, sites: &[usize]) -> Option<(usize, usize)> {
    let d = sites.iter().fold(n, |acc, &u| gcd(acc, u));
    (n.is_multiple_of(2) && d == 3).then(|| (n / 3, 2 * n / 3))
}

/// `N/3 ∈ ℕ` with every site a multiple of 3.
pub fn multiples_of_three_rule(n: usize, sites: &[usize]) -> bool {
    n.is_multiple_of(3) && sites.iter().all(|u| u % 3 == 0)
}

/// `ε_j = 2 φ_k(j) φ_l(j) = (4/N) sin(jkπ/N) sin(jlπ/N)`.
pub fn magnetization_mode(n: usize, k: usize, l: usize) -> Result<Vec<f64>> {
    check_pair(n, k, l)?;
    // Components that vanish exactly come out as rounding noise of order 1e-32.
    Ok((1..=n)
        .map(|j| (4.0 / n as f64) * s(n, j, k) * s(n, j, l))
        .map(|v| if v.abs() < 1e-14 { 0.0 } else { v })
        .collect())
}

/// `(3/N)(1, -1, 0, -1, 1, 0, ...)`, exact zeros at sites `3 mod 3`.
pub fn synchronized_mode(n: usize) -> Result<Vec<f64>> {
    if n == 0 || !n.is_multiple_of(6) {
        return Err(Error::NoSyncConfig(n));
    }
    let mut mode = magnetization_mode(n, n / 3, 2 * n / 3)?;
    for (j, v) in mode.iter_mut().enumerate() {
        if (j + 1) % 3 == 0 {
            *v = 0.0;
        }
    }
    Ok(mode)
}
