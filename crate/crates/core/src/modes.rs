//! Liouvillian eigenmode tables shared by the analytic and numeric paths.

use serde::Serialize;

use crate::error::{invalid_input, Result};
use crate::linalg::{eigenvalues, eigenvector, CMat, CVec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSource {
    AnalyticNondeg,
    AnalyticDeg,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeEntry {
    pub k: usize,
    pub l: usize,
    /// Eigenfrequency `Λ_k - Λ_l`.
    pub freq: f64,
    /// Decay rate in units of γ.
    pub rate: f64,
    pub source: ModeSource,
    pub group: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModeTable {
    pub entries: Vec<ModeEntry>,
    /// Groups with more members than a plain `±` pairing explains.
    pub flagged_groups: Vec<usize>,
}

impl ModeTable {
    pub fn get(&self, k: usize, l: usize) -> Option<&ModeEntry> {
        self.entries.iter().find(|e| e.k == k && e.l == l)
    }

    pub fn group(&self, id: usize) -> impl Iterator<Item = &ModeEntry> {
        self.entries.iter().filter(move |e| e.group == id)
    }

    /// Entries with `|freq| > tol`.
    pub fn oscillating(&self, tol: f64) -> impl Iterator<Item = &ModeEntry> {
        self.entries.iter().filter(move |e| e.freq.abs() > tol)
    }

    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for e in &self.entries {
            if e.rate < -1e-12 - tol {
                return Err(invalid_input(format!("negative rate {} at ({}, {})", e.rate, e.k, e.l)));
            }
            if let Some(r) = self.get(e.l, e.k) {
                if (r.freq + e.freq).abs() > tol {
                    return Err(invalid_input(format!("frequency not antisymmetric at ({}, {})", e.k, e.l)));
                }
            }
        }
        Ok(())
    }
}

/// Group ids for values clustered within `tol` (sorted single linkage).
pub(crate) fn cluster(values: &[f64], tol: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ids = vec![0; values.len()];
    let mut id = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && values[i] - values[order[pos - 1]] > tol {
            id += 1;
        }
        ids[i] = id;
    }
    ids
}

/// One eigenvalue of a Liouvillian block together with its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericMode {
    pub eigenvalue: C64,
    pub k: usize,
    pub l: usize,
}

/// Diagonalises the row-major block superoperator `gen` (size `da·db`) and
/// labels each eigenvalue with a pair `(k, l)`.  A pair is expected at
/// `freq_of(λ) ≈ left[k] - right[l]`; the label goes to the nearest
/// frequency cluster, ties resolved by the largest overlap with
/// `pair_matrix(k, l)`.  Labels are 0-based.
pub(crate) fn label_spectrum<F, M>(
    gen: &CMat,
    left: &[f64],
    right: &[f64],
    freq_of: F,
    pair_matrix: M,
) -> Result<Vec<NumericMode>>
where
    F: Fn(C64) -> f64,
    M: Fn(usize, usize) -> CMat,
{
    let (da, db) = (left.len(), right.len());
    if gen.nrows() != da * db || gen.ncols() != da * db {
        return Err(invalid_input("superoperator size does not match the basis"));
    }
    let evals = eigenvalues(gen)?;
    let pairs: Vec<(usize, usize)> = (0..da).flat_map(|k| (0..db).map(move |l| (k, l))).collect();
    let pair_freq: Vec<f64> = pairs.iter().map(|&(k, l)| left[k] - right[l]).collect();
    let scale = left.iter().chain(right).fold(1.0f64, |a, v| a.max(v.abs()));
    let clusters = cluster(&pair_freq, 1e-9 * scale);
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);
    let mut centre = vec![0.0; n_clusters];
    for (p, &g) in clusters.iter().enumerate() {
        centre[g] = pair_freq[p];
    }

    let mats: Vec<CVec> = pairs.iter().map(|&(k, l)| vec_row_major(&pair_matrix(k, l))).collect();
    let mut nearest = Vec::with_capacity(evals.len());
    let mut overlaps: Vec<Vec<f64>> = Vec::with_capacity(evals.len());
    for &lam in &evals {
        let f = freq_of(lam);
        let g = (0..n_clusters).min_by(|&a, &b| (centre[a] - f).abs().total_cmp(&(centre[b] - f).abs()));
        nearest.push(g.unwrap_or(0));
        let x: CVec = eigenvector(gen, lam)?;
        overlaps.push(mats.iter().map(|m| m.dotc(&x).norm()).collect());
    }

    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, ov) in overlaps.iter().enumerate() {
        for (p, &o) in ov.iter().enumerate() {
            if clusters[p] == nearest[i] {
                cand.push((o, i, p));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut label = vec![usize::MAX; evals.len()];
    let mut used = vec![false; pairs.len()];
    for (_, i, p) in cand {
        if label[i] == usize::MAX && !used[p] {
            label[i] = p;
            used[p] = true;
        }
    }
    // Eigenvalues that drifted into an exhausted cluster take the closest
    // unused label.
    for i in 0..evals.len() {
        if label[i] == usize::MAX {
            let f = freq_of(evals[i]);
            let p = (0..pairs.len())
                .filter(|&p| !used[p])
                .min_by(|&a, &b| (pair_freq[a] - f).abs().total_cmp(&(pair_freq[b] - f).abs()))
                .expect("as many labels as eigenvalues");
            label[i] = p;
            used[p] = true;
        }
    }
    Ok(evals
        .iter()
        .zip(label)
        .map(|(&eigenvalue, p)| NumericMode { eigenvalue, k: pairs[p].0, l: pairs[p].1 })
        .collect())
}

/// Row-major flattening, matching the superoperator index `a·d + b`.
pub fn vec_row_major(m: &CMat) -> CVec {
    CVec::from_iterator(m.len(), (0..m.nrows()).flat_map(|a| (0..m.ncols()).map(move |b| m[(a, b)])))
}

/// Numeric table with `rate = -Re λ / γ` and `freq` taken from the labels;
/// `freq_of_label` receives the 1-based labels stored in each mode.
pub(crate) fn numeric_table<F>(modes: &[NumericMode], gamma: f64, freq_of_label: F) -> ModeTable
where
    F: Fn(usize, usize) -> f64,
{
    let freqs: Vec<f64> = modes.iter().map(|m| freq_of_label(m.k, m.l)).collect();
    let scale = freqs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let groups = cluster(&freqs, 1e-9 * scale);
    let mut entries: Vec<ModeEntry> = modes
        .iter()
        .zip(freqs.iter().zip(groups))
        .map(|(m, (&freq, group))| ModeEntry {
            k: m.k,
            l: m.l,
            freq,
            rate: -m.eigenvalue.re / gamma,
            source: ModeSource::Numeric,
            group,
        })
        .collect();
    entries.sort_by_key(|a| (a.k, a.l));
    ModeTable { entries, flagged_groups: Vec::new() }
}
