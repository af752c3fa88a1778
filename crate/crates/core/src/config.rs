//! Physical and numerical parameters of a single experiment.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, Result};

/// Largest chain handled by the dense spin-picture backend.
pub const MAX_FULL_SITES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n: usize,
    /// Nearest-neighbour coupling in units of `g`.
    pub j: f64,
    pub g: f64,
    /// Reduced noise strength.
    pub gamma: f64,
    /// 1-based noise sites, ordered and distinct.
    pub noise_sites: Vec<usize>,
    pub detuning: f64,
    /// Sites carrying `+Δ/2` and `-Δ/2` respectively.
    pub detuning_sites: (usize, usize),
    /// Sites excited in the initial product state.
    pub excited: Vec<usize>,
    pub t_max: f64,
    /// Output grid step.
    pub dt: f64,
    /// Upper bound on the internal integration step.
    pub max_step: f64,
    pub seed: u64,
    pub trajectories: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n: 6,
            j: 1.0,
            g: 1.0,
            gamma: 0.3,
            noise_sites: vec![3],
            detuning: 0.0,
            detuning_sites: (1, 5),
            excited: vec![1],
            t_max: 60.0,
            dt: 1e-2,
            max_step: 1e-3,
            seed: 0,
            trajectories: 2000,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return Err(invalid_config(format!("N must be even and >= 2, got {}", self.n)));
        }
        for (name, v) in [("J", self.j), ("g", self.g), ("detuning", self.detuning)] {
            if !v.is_finite() {
                return Err(invalid_config(format!("{name} must be finite")));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid_config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        validate_sites(&self.noise_sites, self.n, "noise site")?;
        validate_sites(&self.excited, self.n, "excited site")?;
        if self.detuning != 0.0 {
            let (a, b) = self.detuning_sites;
            if self.n < 5 {
                return Err(invalid_config("detuning requires N >= 5"));
            }
            if a == b || a == 0 || b == 0 || a > self.n || b > self.n {
                return Err(invalid_config(format!("bad detuning sites ({a}, {b})")));
            }
        }
        if !(self.dt > 0.0 && self.t_max > 0.0 && self.max_step > 0.0) {
            return Err(invalid_config("dt, t_max and max_step must be positive"));
        }
        if self.dt > self.t_max {
            return Err(invalid_config("dt exceeds t_max"));
        }
        if self.trajectories < 1 {
            return Err(invalid_config("trajectories must be >= 1"));
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.t_max, self.dt, self.max_step)
    }
}

/// Checks that `sites` are distinct and lie in `1..=n`.
pub fn validate_sites(sites: &[usize], n: usize, what: &str) -> Result<()> {
    for (i, &s) in sites.iter().enumerate() {
        if s == 0 || s > n {
            return Err(invalid_config(format!("{what} {s} outside 1..={n}")));
        }
        if sites[..i].contains(&s) {
            return Err(invalid_config(format!("duplicate {what} {s}")));
        }
    }
    Ok(())
}

/// Uniform output grid `τ_n = n·dt`, each step split into equal substeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub points: usize,
    pub substeps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, dt: f64, max_step: f64) -> Self {
        let steps = (t_max / dt).round() as usize;
        let substeps = ((dt / max_step) - 1e-9).ceil().max(1.0) as usize;
        Self { dt, points: steps + 1, substeps }
    }

    pub fn step(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    pub fn tau(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.tau(self.points - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.tau(i)).collect()
    }
}
