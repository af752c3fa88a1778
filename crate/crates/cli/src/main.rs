use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use spinsync::runner::{
    cmd_decay_rates, cmd_metrics, cmd_simulate, cmd_sweep, cmd_sync_search, read_trace_csv, write_metrics, write_sweep, Backend,
    DecayMethod, ExperimentSpec, FileConfig, MetricsRequest, Observables, SweepSpec,
};

#[derive(Parser)]
#[command(name = "spinsync", version, about = "Noise-induced synchronization in periodic XX spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each mirrors a config-file key.
#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated 1-based sites.
    #[arg(long, value_delimiter = ',')]
    noise_sites: Option<Vec<usize>>,
    #[arg(long)]
    detuning: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// full, jw or stochastic.
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pearson window length.
    #[arg(long)]
    window: Option<f64>,
    /// Output directory (overrides SPINSYNC_OUT_DIR and the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<(FileConfig, PathBuf)> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => FileConfig::default(),
        };
        let flags = FileConfig {
            n: self.n,
            j: self.j,
            g: self.g,
            gamma: self.gamma,
            noise_sites: self.noise_sites.clone(),
            detuning: self.detuning,
            tmax: self.tmax,
            dt: self.dt,
            backend: self.backend,
            trajectories: self.trajectories,
            seed: self.seed,
            window: self.window,
            out: None,
            ..Default::default()
        };
        let merged = file.overlay(flags);
        let out = merged.out_dir(self.out.as_deref());
        Ok((merged, out))
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("expected i-j, got {s:?}"))?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write the magnetization trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "trace")]
        stem: String,
        /// Add the Loschmidt echo (full backend).
        #[arg(long)]
        loschmidt: bool,
        /// Add the purity (full backend).
        #[arg(long)]
        purity: bool,
        /// Site pairs such as 1-5,2-4 for E_F, mutual information and trace distance (full backend).
        #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
        pairs: Vec<(usize, usize)>,
    },
    /// Decay-rate table of the magnetization modes.
    DecayRates {
        #[command(flatten)]
        common: Common,
        /// analytic, numeric or both.
        #[arg(long, default_value = "both")]
        method: DecayMethod,
    },
    /// Enumerate noise placements with a single surviving mode.
    SyncSearch {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value_t = 2)]
        max_sites: usize,
    },
    /// Pearson series, lock times and spectral peaks of a trace file.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// CSV written by `simulate`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_pair, default_value = "1-5,2-4,1-2")]
        pairs: Vec<(usize, usize)>,
        /// Channels to transform, e.g. sz_1,sz_2.
        #[arg(long, value_delimiter = ',')]
        fft: Vec<String>,
        /// Start of the FFT segment.
        #[arg(long)]
        fft_from: Option<f64>,
        #[arg(long, default_value_t = 0.999)]
        threshold: f64,
    },
    /// r_15 over a grid of noise strengths and detunings (JW backend).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3")]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5")]
        detunings: Vec<f64>,
        /// Start of the evaluation window; 4.5π when omitted.
        #[arg(long)]
        tau_eval: Option<f64>,
    },
}

fn stem_of(path: &std::path::Path) -> String {
    path.file_stem().map_or_else(|| "metrics".into(), |s| s.to_string_lossy().into_owned())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { common, stem, loschmidt, purity, pairs } => {
            let (file, out) = common.resolve()?;
            let spec = ExperimentSpec {
                config: file.chain_config(),
                backend: file.backend.unwrap_or_default(),
                observables: Observables { loschmidt, purity, pairs },
            };
            let (_, csv, json) = cmd_simulate(&spec, &out, &stem)?;
            println!("{}\n{}", csv.display(), json.display());
        }
        Command::DecayRates { common, method } => {
            let (file, out) = common.resolve()?;
            let mut cfg = file.chain_config();
            if common.gamma.is_none() {
                cfg.gamma = 1e-3;
            }
            let path = out.join(format!("decay_rates_n{}.csv", cfg.n));
            let rows = cmd_decay_rates(&cfg, method, Some(&path))?;
            println!("{} ({} rows)", path.display(), rows.len());
        }
        Command::SyncSearch { common, n_max, max_sites } => {
            let (_, out) = common.resolve()?;
            let path = out.join(format!("sync_search_n{n_max}.csv"));
            let rows = cmd_sync_search(n_max, max_sites, Some(&path))?;
            println!("{} ({} rows)", path.display(), rows.len());
        }
        Command::Metrics { common, trace, pairs, fft, fft_from, threshold } => {
            let (file, out) = common.resolve()?;
            let data = read_trace_csv(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let req = MetricsRequest { pairs, window: file.window(), threshold, fft_channels: fft, fft_from, ..Default::default() };
            let report = cmd_metrics(&data, &req)?;
            for p in write_metrics(&report, &out, &format!("{}_metrics", stem_of(&trace)))? {
                println!("{}", p.display());
            }
        }
        Command::Sweep { common, gammas, detunings, tau_eval } => {
            let (file, out) = common.resolve()?;
            let mut spec = SweepSpec::new(file.chain_config(), gammas, detunings);
            spec.window = file.window();
            if let Some(t) = tau_eval {
                spec.tau_eval = t;
            }
            let result = cmd_sweep(&spec)?;
            for p in write_sweep(&result, &out, "sweep")? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
