//! Run configuration, read from TOML.
//!
//! Every table is optional; missing keys fall back to the full-size
//! double-jet setup. [`Config::desk`] is a 100 x 60 version of the same
//! domain that runs on a laptop.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ModelGrid, PhysParams};
use crate::model_error::ErrorParams;
use crate::observation::{ObsErrorParams, ObsSelector};
use crate::swe::SchemeParams;

const DAY: f64 = 86_400.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 500,
            ny: 300,
            dx: 2220.0,
            dy: 2220.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelErrorConfig {
    pub q0: f64,
    pub c_omega: usize,
    /// Correlation length in meters; three quarters of a coarse cell if unset.
    pub l0: Option<f64>,
}

impl Default for ModelErrorConfig {
    fn default() -> Self {
        ModelErrorConfig {
            q0: 2.5e-4,
            c_omega: 5,
            l0: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    /// Seconds between observations.
    pub cadence: f64,
    /// Observation-error variances for `(hu, hv)`.
    pub r: [f64; 2],
    /// Drifter release lattice, `[columns, rows]`.
    pub drifters: [usize; 2],
    /// Mooring lattice, `[columns, rows]`.
    pub moorings: [usize; 2],
    /// Time at which platforms enter the truth run.
    pub insertion_time: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            cadence: 300.0,
            r: [1.0, 1.0],
            drifters: [8, 8],
            moorings: [20, 12],
            insertion_time: 2.0 * DAY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub duration: f64,
    pub snapshot_interval: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            duration: 13.0 * DAY,
            snapshot_interval: DAY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    #[default]
    TwoStage,
    OneStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble_size: usize,
    pub spinup_end: f64,
    pub da_end: f64,
    pub forecast_end: f64,
    /// One of `drifters`, `drifters:<id>+<id>...`, `moorings`,
    /// `west-moorings`, `south-moorings`, `none`.
    pub selector: String,
    /// Seconds between recorded forecast drifter positions.
    pub trajectory_interval: f64,
    pub filter: FilterMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ensemble_size: 100,
            spinup_end: 2.0 * DAY,
            da_end: 9.0 * DAY,
            forecast_end: 12.0 * DAY,
            selector: "drifters".into(),
            trajectory_interval: 900.0,
            filter: FilterMode::TwoStage,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads for particle-parallel phases; 0 means all cores.
    pub workers: usize,
    pub grid: GridConfig,
    pub physics: PhysParams,
    pub scheme: SchemeParams,
    pub model_error: ModelErrorConfig,
    pub observations: ObservationConfig,
    pub truth: TruthConfig,
    pub experiment: ExperimentConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            workers: 0,
            grid: GridConfig::default(),
            physics: PhysParams::default(),
            scheme: SchemeParams::default(),
            model_error: ModelErrorConfig::default(),
            observations: ObservationConfig::default(),
            truth: TruthConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl Config {
    /// 100 x 60 cells over the same 1110 km x 666 km domain, 16 drifters and
    /// 24 moorings, one day of spin-up, one day of assimilation and a
    /// twelve hour forecast.
    pub fn desk() -> Self {
        Config {
            grid: GridConfig {
                nx: 100,
                ny: 60,
                dx: 11_100.0,
                dy: 11_100.0,
            },
            observations: ObservationConfig {
                drifters: [4, 4],
                moorings: [6, 4],
                insertion_time: DAY,
                ..Default::default()
            },
            truth: TruthConfig {
                duration: 2.5 * DAY,
                snapshot_interval: 6.0 * 3600.0,
            },
            experiment: ExperimentConfig {
                ensemble_size: 50,
                spinup_end: DAY,
                da_end: 2.0 * DAY,
                forecast_end: 2.5 * DAY,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn model_grid(&self) -> Result<ModelGrid> {
        ModelGrid::new(self.grid.nx, self.grid.ny, self.grid.dx, self.grid.dy)
    }

    pub fn error_params(&self) -> Result<ErrorParams> {
        let g = self.model_grid()?;
        let p = ErrorParams::new(&g, self.model_error.q0, self.model_error.c_omega)?;
        match self.model_error.l0 {
            Some(l0) => ErrorParams::with_length(p.coarse, p.q0, l0),
            None => Ok(p),
        }
    }

    pub fn obs_error(&self) -> ObsErrorParams {
        ObsErrorParams {
            r: self.observations.r,
        }
    }

    pub fn selector(&self) -> Result<ObsSelector> {
        self.experiment.selector.parse()
    }

    /// Number of model steps in `duration`, which must be a whole multiple.
    pub fn steps_in(&self, duration: f64) -> Result<usize> {
        let n = duration / self.scheme.model_dt;
        if (n - n.round()).abs() > 1e-9 || n < -1e-9 {
            return Err(Error::Config(format!(
                "{duration} s is not a whole number of {} s model steps",
                self.scheme.model_dt
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.model_grid()?;
        self.physics.validate()?;
        self.scheme.validate()?;
        self.error_params()?;
        self.obs_error().validate()?;
        self.selector()?;
        let o = &self.observations;
        if !(o.cadence > 0.0) {
            return Err(Error::Config("observation cadence must be positive".into()));
        }
        self.steps_in(o.cadence)?;
        self.steps_in(o.insertion_time)?;
        self.steps_in(self.truth.duration)?;
        if o.drifters[0] * o.drifters[1] > 0 && (o.drifters[0] > g.nx || o.drifters[1] > g.ny) {
            return Err(Error::Config("more drifter columns or rows than cells".into()));
        }
        let e = &self.experiment;
        if e.ensemble_size < 2 {
            return Err(Error::Config("ensemble needs at least two members".into()));
        }
        if !(0.0 <= e.spinup_end && e.spinup_end <= e.da_end && e.da_end <= e.forecast_end) {
            return Err(Error::Config(
                "phase boundaries must satisfy spinup_end <= da_end <= forecast_end".into(),
            ));
        }
        self.steps_in(e.spinup_end)?;
        self.steps_in(e.da_end)?;
        self.steps_in(e.forecast_end)?;
        let cycles = (e.da_end - e.spinup_end) / o.cadence;
        if (cycles - cycles.round()).abs() > 1e-9 {
            return Err(Error::Config(
                "assimilation window must be a whole number of observation intervals".into(),
            ));
        }
        if !(e.trajectory_interval > 0.0) {
            return Err(Error::Config("trajectory interval must be positive".into()));
        }
        self.steps_in(e.trajectory_interval)?;
        Ok(())
    }
}
