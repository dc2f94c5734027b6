//! Experiment configuration: a single versioned JSON document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::LATTICE_EXTENT;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Final time in seconds.
    pub t_final: f64,
    /// Number of steps K; snapshots are indexed 0..=K.
    pub steps: usize,
    /// First index without real observations.
    pub k_off: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Diffusivity parameter of the evaluated (bi-material) model.
    pub mu_true: f64,
    /// Diffusivity of the uniform best-knowledge model.
    pub mu_bk: f64,
    /// Stefan-Boltzmann constant, W m^-2 K^-4.
    pub sigma: f64,
    pub emissivity: f64,
    /// Enclosure temperature, K.
    pub u_r: f64,
    /// Uniform initial temperature, K.
    pub u_0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Sensors form a side_count x side_count lattice.
    pub side_count: usize,
    /// Patch halfwidth in meters.
    pub halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub n_modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlConfig {
    pub lookback: usize,
    pub hidden: usize,
    pub dense_widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Mode {
    /// Train on the leading rows, forecast the rest of the same run.
    Future,
    /// Train on the full horizon at mu_true, assimilate a run at mu_test.
    Parametric { mu_test: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub physics: PhysicsConfig,
    pub sensors: SensorConfig,
    pub reduction: ReductionConfig,
    pub ml: MlConfig,
    pub mode: Mode,
    pub output_dir: String,
}

impl ExperimentConfig {
    /// Re-validate every sub-module precondition at parse time.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Format(msg));
        if self.version != CONFIG_VERSION {
            return fail(format!("unsupported config version {}", self.version));
        }
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return fail("mesh needs nx, ny >= 1".into());
        }
        if self.time.t_final <= 0.0 || self.time.steps == 0 {
            return fail("time grid needs t_final > 0 and steps >= 1".into());
        }
        if self.time.k_off < 1 || self.time.k_off > self.time.steps {
            return fail(format!(
                "k_off must lie in [1, {}], got {}",
                self.time.steps, self.time.k_off
            ));
        }
        if self.physics.mu_true <= 0.0 || self.physics.mu_bk <= 0.0 {
            return fail("diffusivities must be positive".into());
        }
        if let Mode::Parametric { mu_test } = self.mode {
            if mu_test <= 0.0 {
                return fail("mu_test must be positive".into());
            }
        }
        if self.physics.sigma <= 0.0
            || self.physics.emissivity <= 0.0
            || self.physics.u_r <= 0.0
            || self.physics.u_0 <= 0.0
        {
            return fail("radiation parameters and temperatures must be positive".into());
        }
        if self.sensors.side_count == 0 {
            return fail("need at least one sensor".into());
        }
        if self.sensors.halfwidth <= 0.0
            || LATTICE_EXTENT + self.sensors.halfwidth > crate::fem::mesh::DOMAIN_HALF
        {
            return fail(format!(
                "sensor halfwidth {} pushes lattice patches outside the plate",
                self.sensors.halfwidth
            ));
        }
        if self.reduction.n_modes == 0 {
            return fail("need at least one background mode".into());
        }
        if self.ml.lookback == 0 || self.ml.hidden == 0 || self.ml.epochs == 0 {
            return fail("lookback, hidden size and epochs must be positive".into());
        }
        if self.ml.learning_rate <= 0.0 {
            return fail("learning rate must be positive".into());
        }
        match self.mode {
            Mode::Future => {
                // need at least one training pair from rows 0..k_off-1
                if self.ml.lookback + 1 > self.time.k_off {
                    return fail(format!(
                        "lookback {} too large for k_off {} (need lookback <= k_off - 1)",
                        self.ml.lookback, self.time.k_off
                    ));
                }
            }
            Mode::Parametric { .. } => {
                if self.ml.lookback + 1 > self.time.steps + 1 {
                    return fail(format!(
                        "lookback {} too large for {} snapshot rows",
                        self.ml.lookback,
                        self.time.steps + 1
                    ));
                }
            }
        }
        if self.output_dir.is_empty() {
            return fail("output_dir must not be empty".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Parse and validate; rejects unknown keys, reports line/column.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// Built-in experiment presets.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = ExperimentConfig {
        version: CONFIG_VERSION,
        mesh: MeshConfig { nx: 80, ny: 80 },
        time: TimeConfig {
            t_final: 2.5,
            steps: 200,
            k_off: 50,
        },
        physics: PhysicsConfig {
            mu_true: 15.0,
            mu_bk: 15.0,
            sigma: 5.67e-8,
            emissivity: 3e-3,
            u_r: 303.15,
            u_0: 293.15,
        },
        sensors: SensorConfig {
            side_count: 11,
            halfwidth: 0.05,
        },
        reduction: ReductionConfig { n_modes: 4 },
        ml: MlConfig {
            lookback: 1,
            hidden: 32,
            dense_widths: vec![32, 32],
            learning_rate: 1e-2,
            epochs: 10000,
            seed: 42,
        },
        mode: Mode::Future,
        output_dir: "out/paper-a".into(),
    };
    match name {
        "paper-a" => Some(base),
        "paper-b" => Some(ExperimentConfig {
            mode: Mode::Parametric { mu_test: 17.0 },
            output_dir: "out/paper-b".into(),
            ..base
        }),
        "desk" => Some(ExperimentConfig {
            mesh: MeshConfig { nx: 32, ny: 32 },
            output_dir: "out/desk".into(),
            ..base
        }),
        _ => None,
    }
}
