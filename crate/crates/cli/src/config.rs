//! JSON experiment configuration.

use std::path::PathBuf;

use bscahn_core::bdf::{StartMode, MAX_ORDER};
use bscahn_core::mesh::MAX_DISK_LEVEL;
use bscahn_core::potentials::Potential;
use bscahn_core::system::ModelParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ConvergenceSpace,
    ConvergenceTime,
    Droplet,
    RandomIc,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::ConvergenceSpace => "convergence-space",
            Self::ConvergenceTime => "convergence-time",
            Self::Droplet => "droplet",
            Self::RandomIc => "random-ic",
        }
    }

    fn is_convergence(self) -> bool {
        matches!(self, Self::ConvergenceSpace | Self::ConvergenceTime)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    /// One unit-disk mesh with about `20·2^level` nodes.
    Disk { level: u32 },
    /// Several unit-disk levels, coarse to fine.
    DiskFamily { levels: Vec<u32> },
    /// `n × n` grid of `(0, 1)²`.
    Square { n: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    Exact,
    Bdf1Cascade,
}

impl From<StartKind> for StartMode {
    fn from(s: StartKind) -> Self {
        match s {
            StartKind::Exact => StartMode::Exact,
            StartKind::Bdf1Cascade => StartMode::Bdf1Cascade,
        }
    }
}

/// Reference run for temporal convergence on a fixed mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// BDF order of the reference run.
    #[serde(default = "default_reference_q")]
    pub q: usize,
    /// Reference step is the smallest `τ` divided by this.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// The reference starts this long before `t = 0` so its start-up
    /// transient has decayed when the coarse runs take their initial values.
    #[serde(default = "default_lead_in")]
    pub lead_in: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            q: default_reference_q(),
            substeps: default_substeps(),
            lead_in: default_lead_in(),
        }
    }
}

/// Elliptic droplet of the phase-field initial datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropletSpec {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
}

impl Default for DropletSpec {
    fn default() -> Self {
        Self {
            center: [0.1, 0.5],
            semi_axes: [0.3407, 0.1835],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub params: ModelParams,
    pub mesh: MeshSpec,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Step sizes of a temporal convergence study, decreasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default = "default_potential")]
    pub potential_bulk: String,
    #[serde(default = "default_potential")]
    pub potential_surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_ic_range")]
    pub ic_range: [f64; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub droplet: Option<DropletSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_q() -> usize {
    2
}

fn default_reference_q() -> usize {
    4
}

fn default_substeps() -> usize {
    16
}

fn default_lead_in() -> f64 {
    0.25
}

fn default_potential() -> String {
    "double_well_1_4".into()
}

fn default_ic_range() -> [f64; 2] {
    [0.3, 0.5]
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `x / step` as an integer, if it is one up to rounding.
fn whole_multiple(x: f64, step: f64) -> Option<usize> {
    let k = (x / step).round();
    ((x / step - k).abs() <= 1e-9 * k.max(1.0) && k >= 0.0).then_some(k as usize)
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn start_kind(&self) -> StartKind {
        self.start.unwrap_or(if self.experiment.is_convergence() {
            StartKind::Exact
        } else {
            StartKind::Bdf1Cascade
        })
    }

    pub fn potentials(&self) -> Result<(Potential, Potential), CliError> {
        let get = |n: &str| Potential::by_name(n).map_err(|e| config_err(e.to_string()));
        Ok((get(&self.potential_bulk)?, get(&self.potential_surface)?))
    }

    pub fn reference(&self) -> ReferenceSpec {
        self.reference.clone().unwrap_or_default()
    }

    pub fn droplet(&self) -> DropletSpec {
        self.droplet.clone().unwrap_or_default()
    }

    /// Final time: `t_end`, else `n_steps·τ`, else 1.
    pub fn final_time(&self) -> f64 {
        match (self.t_end, self.n_steps, self.tau) {
            (Some(t), _, _) => t,
            (None, Some(n), Some(tau)) => n as f64 * tau,
            _ => 1.0,
        }
    }

    /// Number of steps of size `tau` to the final time.
    pub fn steps_for(&self, tau: f64) -> Result<usize, CliError> {
        if self.t_end.is_none() {
            if let (Some(n), Some(t)) = (self.n_steps, self.tau) {
                if t == tau {
                    return Ok(n);
                }
            }
        }
        let t = self.final_time();
        whole_multiple(t, tau).ok_or_else(|| config_err(format!("final time {t} is not a multiple of τ = {tau}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate().map_err(|e| config_err(e.to_string()))?;
        self.potentials()?;
        if !(1..=MAX_ORDER).contains(&self.q) {
            return Err(config_err(format!("q must be in 1..={MAX_ORDER}, got {}", self.q)));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be positive, got {v}")))
            }
        };
        if let Some(t) = self.tau {
            positive("tau", t)?;
        }
        for &t in &self.taus {
            positive("taus", t)?;
        }
        if let Some(t) = self.t_end {
            positive("t_end", t)?;
        }
        let start = self.start_kind();
        if self.experiment.is_convergence() && start != StartKind::Exact {
            return Err(config_err("convergence experiments take exact starting values"));
        }
        if !self.experiment.is_convergence() && start == StartKind::Exact {
            return Err(config_err("exact starting values need a manufactured solution"));
        }
        match (self.experiment, &self.mesh) {
            (Experiment::ConvergenceSpace, MeshSpec::DiskFamily { levels }) => {
                if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_err("disk levels must be non-empty and strictly increasing"));
                }
            }
            (Experiment::ConvergenceSpace, MeshSpec::Disk { .. }) | (Experiment::ConvergenceTime, MeshSpec::Disk { .. }) => {}
            (Experiment::ConvergenceSpace | Experiment::ConvergenceTime, _) => {
                return Err(config_err("convergence experiments run on the unit disk"));
            }
            (Experiment::Droplet | Experiment::RandomIc, MeshSpec::Square { n }) => {
                if *n == 0 {
                    return Err(config_err("square mesh needs n >= 1"));
                }
            }
            (Experiment::Droplet | Experiment::RandomIc, _) => {
                return Err(config_err("droplet and random-ic experiments run on the unit square"));
            }
        }
        let too_fine = match &self.mesh {
            MeshSpec::Disk { level } => *level > MAX_DISK_LEVEL,
            MeshSpec::DiskFamily { levels } => levels.iter().any(|&l| l > MAX_DISK_LEVEL),
            MeshSpec::Square { .. } => false,
        };
        if too_fine {
            return Err(config_err(format!("disk levels are limited to {MAX_DISK_LEVEL}")));
        }
        match self.experiment {
            Experiment::ConvergenceTime => {
                if self.taus.is_empty() {
                    return Err(config_err("convergence-time needs a list `taus`"));
                }
                if self.taus.windows(2).any(|w| w[0] <= w[1]) {
                    return Err(config_err("taus must be strictly decreasing"));
                }
                let r = self.reference();
                if !(1..=MAX_ORDER).contains(&r.q) || r.substeps == 0 || !(r.lead_in >= 0.0) {
                    return Err(config_err("invalid reference settings"));
                }
                let t_ref = self.taus.last().unwrap() / r.substeps as f64;
                for &tau in &self.taus {
                    if whole_multiple(tau, t_ref).is_none() {
                        return Err(config_err(format!("τ = {tau} is not a multiple of the reference step {t_ref}")));
                    }
                    self.steps_for(tau)?;
                }
                if whole_multiple(r.lead_in, t_ref).is_none() {
                    return Err(config_err("reference lead-in must be a multiple of the reference step"));
                }
            }
            _ => {
                let tau = self.tau.ok_or_else(|| config_err("`tau` is required"))?;
                self.steps_for(tau)?;
            }
        }
        if self.experiment == Experiment::RandomIc {
            if self.seed.is_none() {
                return Err(config_err("random-ic requires a seed"));
            }
            let [lo, hi] = self.ic_range;
            if !(lo < hi) {
                return Err(config_err("ic_range must satisfy lo < hi"));
            }
        }
        if let Some(d) = &self.droplet {
            if !(d.semi_axes[0] > 0.0 && d.semi_axes[1] > 0.0) {
                return Err(config_err("droplet semi-axes must be positive"));
            }
        }
        let t_end = self.final_time();
        for &t in &self.snapshot_times {
            if !(0.0..=t_end * (1.0 + 1e-12)).contains(&t) {
                return Err(config_err(format!("snapshot time {t} outside [0, {t_end}]")));
            }
        }
        Ok(())
    }
}
