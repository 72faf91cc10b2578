//! Run configuration: a TOML file with sections for scenario, physics,
//! integrator, grid, and output. Every field has a default; unknown keys are
//! rejected so typos cannot silently fall back to defaults.

use serde::{Deserialize, Serialize};

use crate::bench::{Arrangement, DamBreakScenario, FilterMode, GreshoScenario};
use crate::error::SphError;
use crate::integrate::{Arithmetic, IntegratorConfig, Physics, Scheme, SimState};
use crate::sphcore::{DensityMode, ParticleSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    #[default]
    DamBreak,
    Gresho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: ScenarioName,
    /// Particle spacing; `None` uses the scenario's reference resolution
    /// (dam break 0.005, Gresho 0.01).
    pub dr: Option<f64>,
    pub seed: u64,
}

/// Physical-parameter overrides; `None` keeps the scenario default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub rho0: Option<f64>,
    pub sound_speed: Option<f64>,
    pub gravity: Option<f64>,
    pub e_wall: Option<f64>,
    pub r_wall: Option<f64>,
    pub p0_anticlump: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    /// Time step; `None` uses the scenario's CFL-based default.
    pub dt: Option<f64>,
    pub arithmetic: Arithmetic,
    pub scheme: Scheme,
    pub density_mode: DensityMode,
    pub t_end: f64,
    pub reverse_at: Option<f64>,
    pub active_filter_every: Option<u64>,
    pub force_irreversible: bool,
    pub watchdog_factor: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            dt: None,
            arithmetic: Arithmetic::default(),
            scheme: Scheme::default(),
            density_mode: DensityMode::default(),
            t_end: 1.0,
            reverse_at: None,
            active_filter_every: None,
            force_irreversible: false,
            watchdog_factor: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub arrangement: Arrangement,
    pub apply_isc: bool,
    pub filter: FilterMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub diagnostics_every: u64,
    pub snapshot_every: Option<u64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            diagnostics_every: 50,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub physics: PhysicsSection,
    pub integrator: IntegratorSection,
    pub grid: GridSection,
    pub output: OutputSection,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig, SphError> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| SphError::Config(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn render(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn dr(&self) -> f64 {
        self.scenario.dr.unwrap_or(match self.scenario.name {
            ScenarioName::DamBreak => 0.005,
            ScenarioName::Gresho => 0.01,
        })
    }

    pub fn validate(&self) -> Result<(), SphError> {
        let positive = |name: &str, v: Option<f64>| -> Result<(), SphError> {
            match v {
                Some(x) if !(x > 0.0) => Err(SphError::Config(format!(
                    "{name} must be positive, got {x}"
                ))),
                _ => Ok(()),
            }
        };
        positive("scenario.dr", self.scenario.dr)?;
        positive("integrator.dt", self.integrator.dt)?;
        positive("physics.rho0", self.physics.rho0)?;
        positive("physics.sound_speed", self.physics.sound_speed)?;
        positive("physics.r_wall", self.physics.r_wall)?;
        if !(self.integrator.t_end >= 0.0) {
            return Err(SphError::Config(format!(
                "integrator.t_end must be non-negative, got {}",
                self.integrator.t_end
            )));
        }
        if let Some(t) = self.integrator.reverse_at {
            if !(t > 0.0) || t > self.integrator.t_end {
                return Err(SphError::Config(format!(
                    "integrator.reverse_at must lie in (0, t_end], got {t}"
                )));
            }
        }
        if !(self.integrator.watchdog_factor > 1.0) {
            return Err(SphError::Config(format!(
                "integrator.watchdog_factor must exceed 1, got {}",
                self.integrator.watchdog_factor
            )));
        }
        if matches!(self.physics.gravity, Some(g) if g < 0.0) {
            return Err(SphError::Config(
                "physics.gravity must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Assemble the initial particle system, physics, and integrator
    /// configuration this config describes.
    pub fn build(&self) -> Result<(ParticleSystem, Physics, IntegratorConfig), SphError> {
        let dr = self.dr();
        let (ps, mut physics, mut cfg) = match self.scenario.name {
            ScenarioName::DamBreak => {
                let mut scenario = DamBreakScenario::new(dr);
                if let Some(v) = self.physics.rho0 {
                    scenario.rho0 = v;
                }
                if let Some(v) = self.physics.sound_speed {
                    scenario.sound_speed = v;
                }
                if let Some(v) = self.physics.gravity {
                    scenario.gravity = v;
                }
                let ps = scenario.build()?;
                (ps, scenario.physics(), scenario.integrator_config())
            }
            ScenarioName::Gresho => {
                let mut scenario = GreshoScenario::new(dr, self.grid.arrangement);
                scenario.apply_isc = self.grid.apply_isc;
                scenario.isc_seed = self.scenario.seed;
                if let Some(every) = self.integrator.active_filter_every {
                    scenario.filter_every = every;
                }
                let ps = scenario.build()?;
                let cfg = scenario.integrator_config(self.grid.filter);
                (ps, scenario.physics(), cfg)
            }
        };
        if let Some(v) = self.physics.e_wall {
            physics.params.e_wall = v;
        }
        if let Some(v) = self.physics.r_wall {
            physics.params.r_wall = v;
        }
        if let Some(v) = self.physics.p0_anticlump {
            physics.params.p0_anticlump = v;
        }
        physics.params.validate()?;
        if let Some(dt) = self.integrator.dt {
            cfg.dt = dt;
        }
        cfg.arithmetic = self.integrator.arithmetic;
        cfg.scheme = self.integrator.scheme;
        cfg.density_mode = self.integrator.density_mode;
        cfg.reverse_at = self.integrator.reverse_at;
        if self.integrator.active_filter_every.is_some() {
            cfg.active_filter_every = self.integrator.active_filter_every;
        }
        cfg.force_irreversible = self.integrator.force_irreversible;
        cfg.watchdog_factor = self.integrator.watchdog_factor;
        cfg.validate(&ps)?;
        Ok((ps, physics, cfg))
    }

    pub fn build_state(&self) -> Result<(SimState, Physics, IntegratorConfig), SphError> {
        let (ps, physics, cfg) = self.build()?;
        let state = SimState::new(ps, cfg.arithmetic)?;
        Ok((state, physics, cfg))
    }
}
