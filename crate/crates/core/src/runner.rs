//! Experiment orchestration: backends, file formats, sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ChainConfig, MAX_FULL_SITES};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::hilbert::{partial_trace, DensityMatrix};
use crate::jw::simulate_jw;
use crate::liouville::{evolve_master, initial_state, AveragedGenerator};
use crate::hilbert::local_z_all;
use crate::metrics::{
    entanglement_of_formation, fft_spectrum, loschmidt, mutual_information, purity, sync_time, trace_distance, windowed_pearson,
    PearsonSeries, Taper, Trace,
};
use crate::stochastic::{ensemble_average, Picture};
use crate::theory::{closed_form_sync, decay_table, find_sync_configs, DecayRow, RateMethod, SyncConfigResult};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "SPINSYNC_OUT_DIR";
/// Largest `N` for numeric decay rates (the generator has `(N-1)⁴` entries).
pub const MAX_NUMERIC_RATE_SITES: usize = 24;
pub const DEFAULT_WINDOW: f64 = 2.0 * std::f64::consts::PI;
pub const SYNC_THRESHOLD: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Full,
    Jw,
    Stochastic,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "jw" => Ok(Self::Jw),
            "stochastic" => Ok(Self::Stochastic),
            _ => Err(invalid_config(format!("unknown backend {s:?} (full, jw, stochastic)"))),
        }
    }
}

/// Extra channels computed from the full state at every output point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub loschmidt: bool,
    pub purity: bool,
    /// Pairs `(i, j)` for `ef_i_j` and `mi_i_j` of the two-site state and
    /// `td_i_j`, the trace distance of the single-site states.
    pub pairs: Vec<(usize, usize)>,
}

impl Observables {
    fn any(&self) -> bool {
        self.loschmidt || self.purity || !self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub config: ChainConfig,
    pub backend: Backend,
    pub observables: Observables,
}

impl ExperimentSpec {
    pub fn new(config: ChainConfig, backend: Backend) -> Self {
        Self { config, backend, observables: Observables::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        match self.backend {
            Backend::Full if self.config.n > MAX_FULL_SITES => {
                return Err(Error::Capacity(format!("full backend supports N <= {MAX_FULL_SITES}, got {}", self.config.n)))
            }
            Backend::Stochastic if self.config.trajectories < 2 => {
                return Err(invalid_config("stochastic backend needs at least 2 trajectories"))
            }
            _ => {}
        }
        if self.observables.any() && self.backend != Backend::Full {
            return Err(invalid_config("state observables need the full backend"));
        }
        for &(i, j) in &self.observables.pairs {
            if i == j || i == 0 || j == 0 || i > self.config.n || j > self.config.n {
                return Err(invalid_config(format!("bad site pair ({i}, {j})")));
            }
        }
        Ok(())
    }
}

fn pair_name(prefix: &str, (i, j): (usize, usize)) -> String {
    format!("{prefix}_{i}_{j}")
}

/// Two-site and single-site metrics of one state, in `pairs` order:
/// `(E_F, MI, trace distance)`.
fn pair_metrics(rho: &DensityMatrix, pairs: &[(usize, usize)]) -> Result<Vec<(f64, f64, f64)>> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let mut keep = [i, j];
            keep.sort_unstable();
            let two = partial_trace(rho, &keep)?;
            let (a, b) = (partial_trace(rho, &[i])?, partial_trace(rho, &[j])?);
            Ok((entanglement_of_formation(&two)?, mutual_information(&two, 1)?, trace_distance(&a, &b)?))
        })
        .collect()
}

fn simulate_full(spec: &ExperimentSpec) -> Result<Trace> {
    let cfg = &spec.config;
    let obs = &spec.observables;
    let gen = AveragedGenerator::from_config(cfg)?;
    let rho0 = initial_state(cfg)?;
    let grid = cfg.grid();
    let n = cfg.n;
    let mut sz = vec![Vec::with_capacity(grid.points); n];
    let mut echo = Vec::new();
    let mut pur = Vec::new();
    let mut pairs = vec![(Vec::new(), Vec::new(), Vec::new()); obs.pairs.len()];
    evolve_master(&rho0, &gen, &grid, |_, rho| {
        for (ch, z) in sz.iter_mut().zip(local_z_all(rho.matrix(), n)) {
            ch.push(z);
        }
        if obs.loschmidt {
            echo.push(loschmidt(rho, &rho0)?);
        }
        if obs.purity {
            pur.push(purity(rho));
        }
        for (dst, (ef, mi, td)) in pairs.iter_mut().zip(pair_metrics(rho, &obs.pairs)?) {
            dst.0.push(ef);
            dst.1.push(mi);
            dst.2.push(td);
        }
        Ok(())
    })?;
    let mut trace = Trace::from_grid(&grid);
    for (j, ch) in sz.into_iter().enumerate() {
        trace.insert(format!("sz_{}", j + 1), ch)?;
    }
    if obs.loschmidt {
        trace.insert("loschmidt", echo)?;
    }
    if obs.purity {
        trace.insert("purity", pur)?;
    }
    for (&p, (ef, mi, td)) in obs.pairs.iter().zip(pairs) {
        trace.insert(pair_name("ef", p), ef)?;
        trace.insert(pair_name("mi", p), mi)?;
        trace.insert(pair_name("td", p), td)?;
    }
    Ok(trace)
}

/// Runs one experiment.  The stochastic backend returns the ensemble mean
/// with standard errors as `se_sz_j`.
pub fn simulate(spec: &ExperimentSpec) -> Result<Trace> {
    spec.validate()?;
    match spec.backend {
        Backend::Full => simulate_full(spec),
        Backend::Jw => simulate_jw(&spec.config),
        Backend::Stochastic => {
            let cfg = &spec.config;
            let r = ensemble_average(cfg, Picture::Jw, cfg.trajectories, cfg.seed)?;
            let mut trace = r.mean;
            for (name, se) in r.stderr.channels() {
                trace.insert(format!("se_{name}"), se.to_vec())?;
            }
            Ok(trace)
        }
    }
}

/// `%.12g`: 12 significant digits, trailing zeros removed.
pub fn fmt_g12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let prec = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.prec$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g12).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

/// Header `tau` plus every channel in insertion order.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let names = trace.channel_names();
    let mut header = vec!["tau".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let cols: Vec<&[f64]> = names.iter().map(|n| trace.channel(n)).collect::<Result<_>>()?;
    for i in 0..trace.len() {
        let mut row = vec![fmt_g12(trace.tau(i))];
        row.extend(cols.iter().map(|c| fmt_g12(c[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_trace_csv`]; the `tau` column must be a
/// uniform grid.
pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("tau") {
        return Err(Error::MissingChannel("tau".into()));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec?;
        for (col, field) in cols.iter_mut().zip(rec.iter()) {
            col.push(field.trim().parse::<f64>().map_err(|e| invalid_input(format!("bad number {field:?}: {e}")))?);
        }
    }
    let tau = &cols[0];
    if tau.len() < 2 {
        return Err(invalid_input("trace file needs at least two rows"));
    }
    let dt = tau[1] - tau[0];
    for (i, t) in tau.iter().enumerate() {
        if (t - (tau[0] + i as f64 * dt)).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(invalid_input(format!("non-uniform tau grid at row {i}")));
        }
    }
    let mut trace = Trace::new(tau[0], dt, tau.len())?;
    for (name, col) in header.into_iter().zip(cols).skip(1) {
        trace.insert(name, col)?;
    }
    Ok(trace)
}

/// Resolved configuration stored next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub spec: &'a ExperimentSpec,
    pub master_seed: u64,
    /// How trajectory seeds derive from the master seed.
    pub seed_scheme: &'a str,
    pub channels: Vec<String>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn cmd_simulate(spec: &ExperimentSpec, dir: &Path, stem: &str) -> Result<(Trace, PathBuf, PathBuf)> {
    let trace = simulate(spec)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_trace_csv(&trace, &csv_path)?;
    let sidecar = Sidecar {
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        spec,
        master_seed: spec.config.seed,
        seed_scheme: "trajectory i uses ChaCha8 keyed by the master seed on stream i",
        channels: trace.channel_names(),
    };
    write_json(&sidecar, &json_path)?;
    Ok((trace, csv_path, json_path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMethod {
    Analytic,
    Numeric,
    Both,
}

impl std::str::FromStr for DecayMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "numeric" => Ok(Self::Numeric),
            "both" => Ok(Self::Both),
            _ => Err(invalid_config(format!("unknown method {s:?} (analytic, numeric, both)"))),
        }
    }
}

/// Decay-rate table; in `Both` mode every row must agree to 2% (nonzero
/// rates) or `1e-6` (zero rates).
pub fn cmd_decay_rates(cfg: &ChainConfig, method: DecayMethod, path: Option<&Path>) -> Result<Vec<DecayRow>> {
    if cfg.n < 2 || !cfg.n.is_multiple_of(2) {
        return Err(invalid_config(format!("N must be even and >= 2, got {}", cfg.n)));
    }
    if method != DecayMethod::Analytic && cfg.n > MAX_NUMERIC_RATE_SITES {
        return Err(Error::Capacity(format!("numeric rates support N <= {MAX_NUMERIC_RATE_SITES}, got {}", cfg.n)));
    }
    let m = match method {
        DecayMethod::Analytic => RateMethod::Analytic,
        DecayMethod::Numeric => RateMethod::Numeric,
        DecayMethod::Both => RateMethod::Both,
    };
    let gamma = if cfg.gamma > 0.0 { cfg.gamma } else { 1e-3 };
    let rows = decay_table(cfg.n, cfg.j, cfg.g, &cfg.noise_sites, m, gamma)?;
    if let Some(path) = path {
        let mut w = csv_writer(path)?;
        w.write_record(["k", "l", "freq", "m_analytic", "m_numeric", "rel_err"])?;
        for r in &rows {
            w.write_record([r.k.to_string(), r.l.to_string(), fmt_g12(r.freq), opt(r.m_analytic), opt(r.m_numeric), opt(r.rel_err)])?;
        }
        w.flush()?;
    }
    if method == DecayMethod::Both {
        for r in &rows {
            let (a, x) = (r.m_analytic.unwrap_or(0.0), r.m_numeric.unwrap_or(f64::NAN));
            let ok = if a.abs() > 1e-6 { (a - x).abs() <= 0.02 * a.abs() } else { (a - x).abs() <= 1e-6 };
            if !ok {
                return Err(Error::NumericalTolerance {
                    context: "decay-rates".into(),
                    detail: format!("({}, {}): analytic {a} vs numeric {x} at gamma {gamma}", r.k, r.l),
                });
            }
        }
    }
    Ok(rows)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// Brute-force search, cross-checked against the closed-form rule.
pub fn cmd_sync_search(n_max: usize, max_sites: usize, path: Option<&Path>) -> Result<Vec<SyncConfigResult>> {
    let rows = find_sync_configs(n_max, max_sites)?;
    for w in rows.windows(2) {
        if w[0].n == w[1].n && w[0].noise_sites == w[1].noise_sites {
            return Err(Error::NumericalTolerance { context: "sync-search".into(), detail: "duplicate row".into() });
        }
    }
    for n in (2..=n_max).step_by(2) {
        let sets: Vec<Vec<usize>> = (1..=n)
            .map(|u| vec![u])
            .chain((max_sites >= 2).then(|| (1..=n).flat_map(move |u| (u + 1..=n).map(move |v| vec![u, v]))).into_iter().flatten())
            .collect();
        for sites in sets {
            let found = rows.iter().find(|r| r.n == n && r.noise_sites == sites).map(|r| r.pair);
            if found != closed_form_sync(n, &sites) {
                return Err(Error::NumericalTolerance {
                    context: "sync-search".into(),
                    detail: format!("N = {n}, sites {sites:?}: search {found:?} vs closed form {:?}", closed_form_sync(n, &sites)),
                });
            }
        }
    }
    if let Some(path) = path {
        let mut w = csv_writer(path)?;
        w.write_record(["n", "noise_sites", "k", "l", "stable_sync", "mode"])?;
        for r in &rows {
            let mode: Vec<String> = r.mode.iter().map(|&x| fmt_g12(x)).collect();
            w.write_record([r.n.to_string(), join(&r.noise_sites), r.pair.0.to_string(), r.pair.1.to_string(), r.stable_sync.to_string(), mode.join(";")])?;
        }
        w.flush()?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRequest {
    pub pairs: Vec<(usize, usize)>,
    pub window: f64,
    pub threshold: f64,
    pub fft_channels: Vec<String>,
    /// Start of the FFT segment; the whole trace when `None`.
    pub fft_from: Option<f64>,
    /// Two-site metrics from stored snapshots.
    pub snapshot_pairs: Vec<(usize, usize)>,
}

impl Default for MetricsRequest {
    fn default() -> Self {
        Self {
            pairs: vec![(1, 5), (2, 4), (1, 2)],
            window: DEFAULT_WINDOW,
            threshold: SYNC_THRESHOLD,
            fft_channels: Vec::new(),
            fft_from: None,
            snapshot_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncRow {
    pub pair: (usize, usize),
    /// Lock with `r ≥ threshold`.
    pub sync_time: Option<f64>,
    /// Lock with `r ≤ -threshold`.
    pub antisync_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakRow {
    pub channel: String,
    pub freq: Option<f64>,
    pub amp: Option<f64>,
    pub bin_width: f64,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub pearson: Vec<((usize, usize), PearsonSeries)>,
    pub sync: Vec<SyncRow>,
    pub peaks: Vec<PeakRow>,
    pub pair_series: Option<Trace>,
}

pub fn cmd_metrics(trace: &Trace, req: &MetricsRequest) -> Result<MetricsReport> {
    let mut pearson = Vec::new();
    let mut sync = Vec::new();
    for &(i, j) in &req.pairs {
        let s = windowed_pearson(trace, &format!("sz_{i}"), &format!("sz_{j}"), req.window)?;
        sync.push(SyncRow { pair: (i, j), sync_time: sync_time(&s, req.threshold), antisync_time: sync_time(&s.negated(), req.threshold) });
        pearson.push(((i, j), s));
    }
    let from = req.fft_from.map_or(0, |t| trace.index_at(t));
    let peaks = req
        .fft_channels
        .iter()
        .map(|name| {
            let x = trace.channel(name)?;
            let spec = fft_spectrum(&x[from.min(x.len())..], trace.dt(), Taper::None)?;
            Ok(PeakRow { channel: name.clone(), freq: spec.peak.map(|p| p.freq), amp: spec.peak.map(|p| p.amp), bin_width: spec.bin_width })
        })
        .collect::<Result<_>>()?;
    let pair_series = match (trace.snapshots(), req.snapshot_pairs.is_empty()) {
        (_, true) => None,
        (None, false) => return Err(Error::MissingChannel("state snapshots".into())),
        (Some(snaps), false) => {
            let mut cols = vec![(Vec::new(), Vec::new(), Vec::new()); req.snapshot_pairs.len()];
            for rho in snaps {
                for (dst, (ef, mi, td)) in cols.iter_mut().zip(pair_metrics(rho, &req.snapshot_pairs)?) {
                    dst.0.push(ef);
                    dst.1.push(mi);
                    dst.2.push(td);
                }
            }
            let mut t = Trace::new(trace.tau0(), trace.dt(), trace.len())?;
            for (&p, (ef, mi, td)) in req.snapshot_pairs.iter().zip(cols) {
                t.insert(pair_name("ef", p), ef)?;
                t.insert(pair_name("mi", p), mi)?;
                t.insert(pair_name("td", p), td)?;
            }
            Some(t)
        }
    };
    Ok(MetricsReport { pearson, sync, peaks, pair_series })
}

/// Writes `<stem>_pearson.csv`, `<stem>_summary.csv` and, with snapshots,
/// `<stem>_pairs.csv`.
pub fn write_metrics(report: &MetricsReport, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if let Some(((_, first), _)) = report.pearson.split_first() {
        let path = dir.join(format!("{stem}_pearson.csv"));
        let mut w = csv_writer(&path)?;
        let mut header = vec!["tau".to_string()];
        header.extend(report.pearson.iter().map(|(p, _)| pair_name("r", *p)));
        w.write_record(&header)?;
        let len = report.pearson.iter().map(|(_, s)| s.values.len()).min().unwrap_or(0);
        for i in 0..len {
            let mut row = vec![fmt_g12(first.tau(i))];
            row.extend(report.pearson.iter().map(|(_, s)| opt(s.values[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        written.push(path);
    }
    let path = dir.join(format!("{stem}_summary.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["metric", "channel", "value"])?;
    for s in &report.sync {
        let name = pair_name("r", s.pair);
        w.write_record(["sync_time".to_string(), name.clone(), opt(s.sync_time)])?;
        w.write_record(["antisync_time".to_string(), name, opt(s.antisync_time)])?;
    }
    for p in &report.peaks {
        w.write_record(["fft_peak_freq".to_string(), p.channel.clone(), opt(p.freq)])?;
        w.write_record(["fft_peak_amp".to_string(), p.channel.clone(), opt(p.amp)])?;
        w.write_record(["fft_bin_width".to_string(), p.channel.clone(), fmt_g12(p.bin_width)])?;
    }
    w.flush()?;
    written.push(path);
    if let Some(t) = &report.pair_series {
        let path = dir.join(format!("{stem}_pairs.csv"));
        write_trace_csv(t, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ChainConfig,
    pub gammas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub window: f64,
    /// Start of the evaluation window.
    pub tau_eval: f64,
    pub threshold: f64,
}

impl SweepSpec {
    pub fn new(base: ChainConfig, gammas: Vec<f64>, deltas: Vec<f64>) -> Self {
        Self { base, gammas, deltas, window: DEFAULT_WINDOW, tau_eval: 4.5 * std::f64::consts::PI, threshold: SYNC_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub delta: f64,
    pub r15: Option<f64>,
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// `(γ, width)`: locked points contiguous from the first `Δ`, times the
    /// `Δ` step.
    pub widths: Vec<(f64, f64)>,
}

/// `r_15` over the window starting at `tau_eval`, one JW run per grid point.
pub fn cmd_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.gammas.is_empty() || spec.deltas.is_empty() {
        return Err(invalid_config("sweep needs non-empty gamma and detuning lists"));
    }
    if spec.deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid_config("detuning grid must be increasing"));
    }
    let grid: Vec<(f64, f64)> = spec.gammas.iter().flat_map(|&g| spec.deltas.iter().map(move |&d| (g, d))).collect();
    let t_max = spec.tau_eval + spec.window + spec.base.dt;
    let points = grid
        .par_iter()
        .map(|&(gamma, delta)| {
            let cfg = ChainConfig { gamma, detuning: delta, t_max, ..spec.base.clone() };
            let trace = simulate_jw(&cfg)?;
            let r15 = windowed_pearson(&trace, "sz_1", "sz_5", spec.window)?.at(spec.tau_eval);
            Ok(SweepPoint { gamma, delta, r15, locked: r15.is_some_and(|r| r >= spec.threshold) })
        })
        .collect::<Result<Vec<_>>>()?;
    let step = if spec.deltas.len() > 1 { spec.deltas[1] - spec.deltas[0] } else { 0.0 };
    let widths = spec
        .gammas
        .iter()
        .enumerate()
        .map(|(gi, &g)| {
            let row = &points[gi * spec.deltas.len()..(gi + 1) * spec.deltas.len()];
            (g, row.iter().take_while(|p| p.locked).count() as f64 * step)
        })
        .collect();
    Ok(SweepResult { points, widths })
}

pub fn write_sweep(result: &SweepResult, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let grid_path = dir.join(format!("{stem}.csv"));
    let mut w = csv_writer(&grid_path)?;
    w.write_record(["gamma", "delta", "r_15", "locked"])?;
    for p in &result.points {
        w.write_record([fmt_g12(p.gamma), fmt_g12(p.delta), opt(p.r15), u8::from(p.locked).to_string()])?;
    }
    w.flush()?;
    let width_path = dir.join(format!("{stem}_widths.csv"));
    let mut w = csv_writer(&width_path)?;
    w.write_record(["gamma", "width"])?;
    for &(g, width) in &result.widths {
        w.write_record([fmt_g12(g), fmt_g12(width)])?;
    }
    w.flush()?;
    Ok(vec![grid_path, width_path])
}

/// Flat key-value configuration; every key mirrors a CLI flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub j: Option<f64>,
    pub g: Option<f64>,
    pub gamma: Option<f64>,
    pub noise_sites: Option<Vec<usize>>,
    pub detuning: Option<f64>,
    pub tmax: Option<f64>,
    pub dt: Option<f64>,
    pub backend: Option<Backend>,
    pub trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub window: Option<f64>,
    pub out: Option<PathBuf>,
    pub excited: Option<Vec<usize>>,
    pub detuning_sites: Option<(usize, usize)>,
    pub max_step: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        FileConfig { $($f: $top.$f.or($base.$f),)* }
    };
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&fs::read_to_string(path)?)?)
    }

    /// Values of `top` win.
    pub fn overlay(self, top: FileConfig) -> Self {
        let base = self;
        overlay!(base, top, n, j, g, gamma, noise_sites, detuning, tmax, dt, backend, trajectories, seed, window, out, excited, detuning_sites, max_step)
    }

    pub fn chain_config(&self) -> ChainConfig {
        let d = ChainConfig::default();
        ChainConfig {
            n: self.n.unwrap_or(d.n),
            j: self.j.unwrap_or(d.j),
            g: self.g.unwrap_or(d.g),
            gamma: self.gamma.unwrap_or(d.gamma),
            noise_sites: self.noise_sites.clone().unwrap_or(d.noise_sites),
            detuning: self.detuning.unwrap_or(d.detuning),
            detuning_sites: self.detuning_sites.unwrap_or(d.detuning_sites),
            excited: self.excited.clone().unwrap_or(d.excited),
            t_max: self.tmax.unwrap_or(d.t_max),
            dt: self.dt.unwrap_or(d.dt),
            max_step: self.max_step.unwrap_or(d.max_step),
            seed: self.seed.unwrap_or(d.seed),
            trajectories: self.trajectories.unwrap_or(d.trajectories),
        }
    }

    pub fn window(&self) -> f64 {
        self.window.unwrap_or(DEFAULT_WINDOW)
    }

    /// Flag, then the environment, then the file, then `out`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
