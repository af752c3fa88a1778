//! Observables and synchronization measures over traces and states.

use indexmap::IndexMap;
use rustfft::FftPlanner;

use crate::config::TimeGrid;
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::hilbert::{partial_trace, DensityMatrix};
use crate::linalg::{c, hermitian_eigen, hermitian_eigenvalues, CMat, C64};

/// Uniform time grid with named real channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    tau0: f64,
    dt: f64,
    len: usize,
    channels: IndexMap<String, Vec<f64>>,
    snapshots: Option<Vec<DensityMatrix>>,
}

impl Trace {
    pub fn new(tau0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0) || len == 0 {
            return Err(invalid_config("trace needs dt > 0 and at least one point"));
        }
        Ok(Self { tau0, dt, len, channels: IndexMap::new(), snapshots: None })
    }

    pub fn from_grid(grid: &TimeGrid) -> Self {
        Self { tau0: 0.0, dt: grid.dt, len: grid.points, channels: IndexMap::new(), snapshots: None }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.tau0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.tau(i)).collect()
    }

    /// First grid index with `τ ≥ tau` (clamped to the grid).
    pub fn index_at(&self, tau: f64) -> usize {
        let i = ((tau - self.tau0) / self.dt - 1e-9).ceil().max(0.0) as usize;
        i.min(self.len - 1)
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.len {
            return Err(invalid_input(format!(
                "channel `{name}` has {} samples, grid has {}",
                values.len(),
                self.len
            )));
        }
        self.channels.insert(name, values);
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.channels.get(name).map(Vec::as_slice).ok_or_else(|| Error::MissingChannel(name.into()))
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.contains_key(name)
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.channels.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.keys().cloned().collect()
    }

    pub fn set_snapshots(&mut self, snaps: Vec<DensityMatrix>) -> Result<()> {
        if snaps.len() != self.len {
            return Err(invalid_input("snapshot count differs from grid length"));
        }
        self.snapshots = Some(snaps);
        Ok(())
    }

    pub fn snapshots(&self) -> Option<&[DensityMatrix]> {
        self.snapshots.as_deref()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn is_flat(x: &[f64], m: f64, var: f64) -> bool {
    let scale = x.iter().fold(m.abs(), |a, v| a.max(v.abs())).max(1.0);
    var.sqrt() <= 1e-12 * scale
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid_input("pearson needs two series of equal length >= 2"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let n = x.len() as f64;
    if is_flat(x, mx, sxx / n) || is_flat(y, my, syy / n) {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Windowed correlation `r(τ_n)`; `None` marks windows with a flat channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PearsonSeries {
    pub tau0: f64,
    pub dt: f64,
    pub values: Vec<Option<f64>>,
}

impl PearsonSeries {
    pub fn tau(&self, i: usize) -> f64 {
        self.tau0 + i as f64 * self.dt
    }

    pub fn negated(&self) -> Self {
        Self { values: self.values.iter().map(|v| v.map(|r| -r)).collect(), ..self.clone() }
    }

    /// Value at the first grid point with `τ ≥ tau`.
    pub fn at(&self, tau: f64) -> Option<f64> {
        let i = ((tau - self.tau0) / self.dt - 1e-9).ceil().max(0.0) as usize;
        self.values.get(i).copied().flatten()
    }
}

pub fn windowed_pearson(trace: &Trace, ch_i: &str, ch_j: &str, window: f64) -> Result<PearsonSeries> {
    let x = trace.channel(ch_i)?;
    let y = trace.channel(ch_j)?;
    let dt = trace.dt();
    if window < 10.0 * dt * (1.0 - 1e-12) {
        return Err(invalid_config(format!("window {window} shorter than 10 grid steps")));
    }
    let w = (window / dt).round() as usize;
    if w + 1 > trace.len() {
        return Err(invalid_config(format!("window {window} exceeds the trace")));
    }
    let values = (0..trace.len() - w)
        .map(|n| match pearson(&x[n..=n + w], &y[n..=n + w]) {
            Ok(r) => Ok(Some(r)),
            Err(Error::DegenerateSeries(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(PearsonSeries { tau0: trace.tau0(), dt, values })
}

/// Smallest grid time after which every value meets `threshold`.
pub fn sync_time(series: &PearsonSeries, threshold: f64) -> Option<f64> {
    let last_fail = series.values.iter().rposition(|v| !matches!(v, Some(r) if *r >= threshold));
    match last_fail {
        None if series.values.is_empty() => None,
        None => Some(series.tau0),
        Some(i) if i + 1 < series.values.len() => Some(series.tau(i + 1)),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Taper {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub bin: usize,
    pub freq: f64,
    pub amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Cycles per unit τ.
    pub freqs: Vec<f64>,
    pub amps: Vec<f64>,
    pub bin_width: f64,
    pub peak: Option<Peak>,
}

/// One-sided magnitude spectrum of the mean-removed channel.
pub fn fft_spectrum(x: &[f64], dt: f64, taper: Taper) -> Result<Spectrum> {
    let n = x.len();
    if n < 64 {
        return Err(invalid_config(format!("FFT needs at least 64 samples, got {n}")));
    }
    let m = mean(x);
    let mut buf: Vec<C64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = match taper {
                Taper::None => 1.0,
                Taper::Hann => 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos(),
            };
            c((v - m) * w)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin_width = 1.0 / (n as f64 * dt);
    let half = n / 2;
    let freqs: Vec<f64> = (0..=half).map(|k| k as f64 * bin_width).collect();
    let amps: Vec<f64> = buf[..=half].iter().map(|z| z.norm()).collect();
    let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs())) * n as f64;
    let peak = (1..=half)
        .max_by(|&a, &b| amps[a].total_cmp(&amps[b]))
        .filter(|&k| amps[k] > 1e-12 * scale)
        .map(|k| Peak { bin: k, freq: freqs[k], amp: amps[k] });
    Ok(Spectrum { freqs, amps, bin_width, peak })
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(invalid_input(format!("dimension mismatch {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `Tr(ρ_t† ρ_0)`.
pub fn loschmidt(rho_t: &DensityMatrix, rho_0: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho_t, rho_0)?;
    Ok(loschmidt_raw(rho_t.matrix(), rho_0.matrix()).re)
}

pub(crate) fn loschmidt_raw(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    purity_raw(rho.matrix())
}

pub(crate) fn purity_raw(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let diff = a.matrix() - b.matrix();
    Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|v| v.abs()).sum::<f64>())
}

/// Von Neumann entropy in bits.
pub fn entropy(rho: &DensityMatrix) -> Result<f64> {
    let vals = rho.eigenvalues();
    if let Some(bad) = vals.iter().find(|&&v| v < -1e-8) {
        return Err(Error::InvalidState(format!("negative eigenvalue {bad:e}")));
    }
    Ok(vals.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum::<f64>().max(0.0))
}

/// `S(A) + S(B) - S(AB)` with `A` the first `split` sites.
pub fn mutual_information(rho: &DensityMatrix, split: usize) -> Result<f64> {
    let n = rho.n_sites();
    if split == 0 || split >= n {
        return Err(invalid_input(format!("split {split} must lie in 1..{n}")));
    }
    let a: Vec<usize> = (1..=split).collect();
    let b: Vec<usize> = (split + 1..=n).collect();
    let sa = entropy(&partial_trace(rho, &a)?)?;
    let sb = entropy(&partial_trace(rho, &b)?)?;
    Ok(sa + sb - entropy(rho)?)
}

fn spin_flip(m: &CMat) -> CMat {
    // σy⊗σy is real with entries ±1 on the anti-diagonal.
    let s = [-1.0, 1.0, 1.0, -1.0];
    CMat::from_fn(4, 4, |i, j| c(s[i] * s[j]) * m[(3 - i, 3 - j)].conj())
}

pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.n_sites() != 2 {
        return Err(invalid_input("concurrence needs a two-qubit state"));
    }
    let (vals, vecs) = hermitian_eigen(rho.matrix());
    let sq: Vec<C64> = vals.iter().map(|v| c(v.max(0.0).sqrt())).collect();
    let sqrt_rho = &vecs * CMat::from_diagonal(&nalgebra::DVector::from_vec(sq)) * vecs.adjoint();
    let r = &sqrt_rho * spin_flip(rho.matrix()) * &sqrt_rho;
    let r = (&r + r.adjoint()) * c(0.5);
    let mut mu: Vec<f64> = hermitian_eigenvalues(&r).iter().map(|v| v.max(0.0).sqrt()).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    Ok((mu[0] - mu[1] - mu[2] - mu[3]).max(0.0))
}

pub fn binary_entropy(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum()
}

pub fn eof_from_concurrence(conc: f64) -> f64 {
    let conc = conc.clamp(0.0, 1.0);
    binary_entropy((1.0 - (1.0 - conc * conc).sqrt()) / 2.0)
}

pub fn entanglement_of_formation(rho: &DensityMatrix) -> Result<f64> {
    concurrence(rho).map(eof_from_concurrence)
}

/// Largest central-difference `|dx/dτ|` from index `from` on.
pub fn max_abs_derivative(x: &[f64], dt: f64, from: usize) -> f64 {
    (from.max(1)..x.len().saturating_sub(1))
        .map(|i| ((x[i + 1] - x[i - 1]) / (2.0 * dt)).abs())
        .fold(0.0, f64::max)
}

/// Maximum of each consecutive block of length `period` starting at `from`;
/// a trailing partial block is dropped.
pub fn per_period_maxima(x: &[f64], dt: f64, from: usize, period: f64) -> Vec<f64> {
    let w = (period / dt).round() as usize;
    if w == 0 {
        return Vec::new();
    }
    x[from.min(x.len())..]
        .chunks_exact(w)
        .map(|ch| ch.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn peak_to_peak(x: &[f64]) -> f64 {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    hi - lo
}

/// Fundamental period from the first autocorrelation maximum that follows
/// the first negative lobe, refined by a parabola through the peak.
pub fn fundamental_period(x: &[f64], dt: f64) -> Option<f64> {
    let n = x.len();
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let r0: f64 = d.iter().map(|v| v * v).sum();
    if r0 <= 0.0 {
        return None;
    }
    let max_lag = n / 2;
    let ac: Vec<f64> = (0..=max_lag)
        .map(|k| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / r0)
        .collect();
    let neg = ac.iter().position(|&v| v < 0.0)?;
    let k = (neg.max(1)..max_lag).find(|&k| ac[k] >= ac[k - 1] && ac[k] >= ac[k + 1] && ac[k] > 0.0)?;
    let (a, b, cc) = (ac[k - 1], ac[k], ac[k + 1]);
    let denom = a - 2.0 * b + cc;
    let shift = if denom.abs() > 0.0 { 0.5 * (a - cc) / denom } else { 0.0 };
    Some((k as f64 + shift) * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{basis_state, StateVector};
    use crate::linalg::{eigenvalues, CVec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn bell() -> DensityMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StateVector::new(2, CVec::from_vec(vec![c(s), c(0.0), c(0.0), c(s)])).unwrap();
        DensityMatrix::from_pure(&psi)
    }

    fn werner(p: f64) -> DensityMatrix {
        let m = bell().matrix() * c(p) + CMat::identity(4, 4) * c((1.0 - p) / 4.0);
        DensityMatrix::new(2, m).unwrap()
    }

    // Concurrence from the non-Hermitian product ρ·ρ̃ with an explicitly
    // assembled σy⊗σy.
    fn brute_concurrence(rho: &DensityMatrix) -> f64 {
        let i = crate::linalg::I;
        let sy = CMat::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)]);
        let yy = sy.kronecker(&sy);
        let tilde = &yy * rho.matrix().map(|z| z.conj()) * &yy;
        let mut mu: Vec<f64> =
            eigenvalues(&(rho.matrix() * tilde)).unwrap().iter().map(|z| z.re.max(0.0).sqrt()).collect();
        mu.sort_by(|a, b| b.total_cmp(a));
        (mu[0] - mu[1] - mu[2] - mu[3]).max(0.0)
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // Sums of centred products: sxy = 3, sxx = 2, syy = 14/3.
        let want = 3.0 / (2.0f64.sqrt() * (14.0f64 / 3.0).sqrt());
        assert!((pearson(&x, &[1.0, 2.0, 4.0]).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.981980506).abs() < 1e-9);
        assert!(matches!(pearson(&x, &[2.0, 2.0, 2.0]), Err(Error::DegenerateSeries(_))));
        assert!(pearson(&x, &[1.0]).is_err());
    }

    fn sine_trace(phase: f64) -> Trace {
        let mut t = Trace::new(0.0, 0.01, 2001).unwrap();
        let times = t.times();
        t.insert("a", times.iter().map(|s| (2.0 * s).sin()).collect()).unwrap();
        t.insert("b", times.iter().map(|s| (2.0 * s + phase).sin()).collect()).unwrap();
        t.insert("flat", vec![0.5; 2001]).unwrap();
        t
    }

    #[test]
    fn windowed_pearson_examples() {
        let same = windowed_pearson(&sine_trace(0.0), "a", "b", 2.0 * PI).unwrap();
        assert_eq!(same.values.len(), 2001 - 628);
        assert!(same.values.iter().all(|v| (v.unwrap() - 1.0).abs() < 1e-12));
        assert_eq!(sync_time(&same, 0.999), Some(0.0));

        let anti = windowed_pearson(&sine_trace(PI), "a", "b", 2.0 * PI).unwrap();
        assert!(anti.values.iter().all(|v| (v.unwrap() + 1.0).abs() < 1e-12));
        assert_eq!(sync_time(&anti, 0.999), None);
        assert_eq!(sync_time(&anti.negated(), 0.999), Some(0.0));

        let flat = windowed_pearson(&sine_trace(0.0), "a", "flat", 2.0 * PI).unwrap();
        assert!(flat.values.iter().all(Option::is_none));

        assert!(windowed_pearson(&sine_trace(0.0), "a", "b", 0.05).is_err());
        assert!(windowed_pearson(&sine_trace(0.0), "a", "b", 100.0).is_err());
        assert!(matches!(windowed_pearson(&sine_trace(0.0), "a", "zz", 1.0), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn sync_time_examples() {
        let s = |v: Vec<Option<f64>>| PearsonSeries { tau0: 0.0, dt: 0.5, values: v };
        assert_eq!(sync_time(&s(vec![Some(1.0); 4]), 0.999), Some(0.0));
        assert_eq!(sync_time(&s(vec![Some(0.0); 4]), 0.999), None);
        assert_eq!(sync_time(&s(vec![Some(0.0), None, Some(1.0), Some(1.0)]), 0.999), Some(1.0));
    }

    #[test]
    fn fft_examples() {
        let dt = 0.01;
        let x: Vec<f64> = (0..=10_000).map(|i| (2.0 * i as f64 * dt).cos()).collect();
        let s = fft_spectrum(&x, dt, Taper::None).unwrap();
        let p = s.peak.unwrap();
        assert!((p.freq - 1.0 / PI).abs() <= s.bin_width);
        assert!((s.bin_width - 1.0 / (10_001.0 * dt)).abs() < 1e-15);
        assert!(s.amps.iter().all(|&a| a >= 0.0));

        let shifted: Vec<f64> = x.iter().map(|v| v + 3.0).collect();
        assert_eq!(fft_spectrum(&shifted, dt, Taper::None).unwrap().peak.unwrap().bin, p.bin);
        assert_eq!(fft_spectrum(&x, dt, Taper::Hann).unwrap().peak.unwrap().bin, p.bin);

        let flat = fft_spectrum(&[2.0; 128], dt, Taper::None).unwrap();
        assert!(flat.peak.is_none());
        assert!(flat.amps.iter().all(|&a| a < 1e-12));
        assert!(fft_spectrum(&[1.0; 63], dt, Taper::None).is_err());
    }

    #[test]
    fn state_metric_examples() {
        let up = DensityMatrix::from_pure(&basis_state(&[1], 1).unwrap());
        let down = DensityMatrix::from_pure(&basis_state(&[], 1).unwrap());
        assert_eq!(loschmidt(&up, &up).unwrap(), 1.0);
        assert_eq!(loschmidt(&up, &down).unwrap(), 0.0);
        assert_eq!(purity(&up), 1.0);
        assert!((purity(&DensityMatrix::maximally_mixed(1)) - 0.5).abs() < 1e-15);
        assert_eq!(trace_distance(&up, &up).unwrap(), 0.0);
        assert!((trace_distance(&up, &down).unwrap() - 1.0).abs() < 1e-15);
        assert!(trace_distance(&up, &bell()).is_err());

        assert!(entropy(&up).unwrap().abs() < 1e-12);
        assert!((entropy(&DensityMatrix::maximally_mixed(1)).unwrap() - 1.0).abs() < 1e-12);
        let d = DensityMatrix::new(1, CMat::from_diagonal(&CVec::from_vec(vec![c(0.25), c(0.75)]))).unwrap();
        let want = -0.25 * 0.25f64.log2() - 0.75 * 0.75f64.log2();
        assert!((entropy(&d).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.811278).abs() < 1e-6);
    }

    #[test]
    fn two_qubit_examples() {
        let b = bell();
        assert!((concurrence(&b).unwrap() - 1.0).abs() < 1e-10);
        assert!((entanglement_of_formation(&b).unwrap() - 1.0).abs() < 1e-10);
        assert!((mutual_information(&b, 1).unwrap() - 2.0).abs() < 1e-10);

        let w = werner(0.5);
        assert!((concurrence(&w).unwrap() - 0.25).abs() < 1e-10);
        assert!((brute_concurrence(&w) - 0.25).abs() < 1e-10);
        let ef = entanglement_of_formation(&w).unwrap();
        assert!((ef - binary_entropy((1.0 - (1.0 - 1.0f64 / 16.0).sqrt()) / 2.0)).abs() < 1e-12);
        assert!((ef - 0.117619).abs() < 1e-6);

        let prod = DensityMatrix::from_pure(&basis_state(&[2], 2).unwrap());
        assert_eq!(concurrence(&prod).unwrap(), 0.0);
        assert_eq!(entanglement_of_formation(&prod).unwrap(), 0.0);
        assert!(mutual_information(&prod, 1).unwrap().abs() < 1e-12);
        assert!(concurrence(&DensityMatrix::maximally_mixed(3)).is_err());
    }

    #[test]
    fn period_helpers() {
        let dt = 0.01;
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * i as f64 * dt).cos()).collect();
        assert!((fundamental_period(&x, dt).unwrap() - PI).abs() < dt);
        let folded: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        assert!((fundamental_period(&folded, dt).unwrap() - PI / 2.0).abs() < dt);
        let maxima = per_period_maxima(&x, dt, 0, PI);
        assert_eq!(maxima.len(), 12);
        assert!(maxima.iter().all(|m| (m - 1.0).abs() < 1e-3));
        assert!((peak_to_peak(&x) - 2.0).abs() < 1e-6);
        assert!((max_abs_derivative(&x, dt, 0) - 2.0).abs() < 1e-3);
    }

    fn random_two_qubit(seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(4, 4, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(2, m / tr).unwrap()
    }

    fn random_unitary(seed: u64) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(4, 4, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        a.qr().q()
    }

    proptest! {
        #[test]
        fn pearson_affine(x in prop::collection::vec(-10.0f64..10.0, 5..40), seed in 0u64..100,
                          a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.3 + ((i as u64 * 31 + seed) % 7) as f64).collect();
            if let Ok(r) = pearson(&x, &y) {
                let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let nx: Vec<f64> = x.iter().map(|v| -v).collect();
                prop_assert!((pearson(&ax, &y).unwrap() - r).abs() < 1e-10);
                prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
                prop_assert!((pearson(&nx, &y).unwrap() + r).abs() < 1e-12);
            }
        }

        #[test]
        fn eof_monotone(c1 in 0.0f64..1.0, c2 in 0.0f64..1.0) {
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(eof_from_concurrence(lo) <= eof_from_concurrence(hi) + 1e-15);
        }

        #[test]
        fn two_qubit_invariants(s1 in 0u64..10_000, s2 in 0u64..10_000) {
            let (r, q) = (random_two_qubit(s1), random_two_qubit(s2));
            let d = trace_distance(&r, &q).unwrap();
            prop_assert!((d - trace_distance(&q, &r).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
            prop_assert!(trace_distance(&r, &r).unwrap() < 1e-12);
            let p = random_two_qubit(s1 ^ s2 ^ 0x55);
            prop_assert!(d <= trace_distance(&r, &p).unwrap() + trace_distance(&p, &q).unwrap() + 1e-12);

            let u = random_unitary(s2);
            let rotated = DensityMatrix::new(2, &u * r.matrix() * u.adjoint()).unwrap();
            prop_assert!((entropy(&rotated).unwrap() - entropy(&r).unwrap()).abs() < 1e-10);

            let conc = concurrence(&r).unwrap();
            prop_assert!((conc - brute_concurrence(&r)).abs() < 1e-8);
            prop_assert!(mutual_information(&r, 1).unwrap() >= -1e-12);
        }
    }
}
