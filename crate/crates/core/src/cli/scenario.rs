//! TOML scenario files.
//!
//! ```toml
//! [link]
//! frequency_hz = 2.44e9
//! tx_power_dbm = 0.0
//! tx_orientation_deg = 0.0
//! rx_orientation_deg = 90.0
//! tx_rx_distance_m = 0.24
//! tx_surface_distance_m = 0.12
//! bypass_fraction = "geometry"   # or a number in [0, 1]
//! crosspol_floor_db = -30.0
//! noise_floor_dbm = -90.0
//!
//! [surface]
//! mode = "transmissive"
//! insertion_loss_db = -5.0
//! side_m = 0.36
//! ```
//!
//! Relative file paths (rotation and loss tables) resolve against the
//! scenario file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::channel::{
    bypass_fraction_with_pattern, AntennaPattern, ExtraRay, LinkScenario, NoiseModel,
};
use crate::controller::{SweepConfig, WindowRule};
use crate::error::{Error, Result};
use crate::estimator::{AlignmentReference, EstimatorConfig, PeakMethod};
use crate::jones::RotationAngle;
use crate::metasurface::{LossTable, RotationSense, RotationTable, SurfaceMode, SurfaceModel};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub link: LinkSection,
    pub surface: Option<SurfaceSection>,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BypassSpec {
    Fixed(f64),
    Model(BypassModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BypassModel {
    Geometry,
}

impl Default for BypassSpec {
    fn default() -> Self {
        BypassSpec::Fixed(0.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub frequency_hz: f64,
    pub tx_power_dbm: f64,
    pub tx_orientation_deg: f64,
    pub rx_orientation_deg: f64,
    pub tx_rx_distance_m: f64,
    #[serde(default = "default_surface_distance")]
    pub tx_surface_distance_m: f64,
    #[serde(default)]
    pub bypass_fraction: BypassSpec,
    #[serde(default)]
    pub bypass_phase_deg: f64,
    #[serde(default = "default_floor")]
    pub crosspol_floor_db: f64,
    #[serde(default = "default_noise_floor")]
    pub noise_floor_dbm: f64,
    #[serde(default)]
    pub antenna_gains_dbi: [f64; 2],
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub noise_sigma_db: f64,
    #[serde(default = "one")]
    pub noise_samples: usize,
    pub rssi_step_db: Option<f64>,
    #[serde(default)]
    pub antenna_pattern: PatternSpec,
    pub beamwidth_deg: Option<f64>,
    #[serde(default)]
    pub extra_rays: Vec<RaySection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternSpec {
    #[default]
    Omni,
    Directional,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySection {
    pub amplitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
    pub polarization_deg: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    #[serde(default)]
    pub mode: SurfaceMode,
    #[serde(default = "default_insertion_loss")]
    pub insertion_loss_db: f64,
    #[serde(default = "default_reflective_factor")]
    pub reflective_rotation_factor: f64,
    /// Effective aperture side used by the geometric bypass model.
    pub side_m: Option<f64>,
    pub rotation_table: Option<PathBuf>,
    pub loss_table: Option<PathBuf>,
    #[serde(default)]
    pub sense: RotationSense,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub n_iterations: usize,
    pub steps_per_axis: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub settle_time_s: f64,
    pub window: WindowRule,
    pub attribution_lag: usize,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = SweepConfig::default();
        ControllerSection {
            n_iterations: c.n_iterations,
            steps_per_axis: c.steps_per_axis,
            v_min: c.v_min,
            v_max: c.v_max,
            settle_time_s: c.settle_time_s,
            window: c.window,
            attribution_lag: c.attribution_lag,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub resolution_deg: f64,
    pub bias_step_v: f64,
    pub reference: AlignmentReference,
    pub peak: PeakMethod,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        EstimatorSection {
            resolution_deg: e.resolution_deg,
            bias_step_v: e.bias_step_v,
            reference: e.reference,
            peak: e.peak,
        }
    }
}

/// Sweep axes for the experiment commands. Empty lists fall back to the
/// single value in `[link]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub distances_m: Vec<f64>,
    pub frequencies_hz: Vec<f64>,
    pub tx_powers_dbm: Vec<f64>,
    pub bandwidth_hz: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            distances_m: Vec::new(),
            frequencies_hz: Vec::new(),
            tx_powers_dbm: Vec::new(),
            bandwidth_hz: 20e6,
        }
    }
}

fn default_surface_distance() -> f64 {
    0.12
}
fn default_floor() -> f64 {
    -30.0
}
fn default_noise_floor() -> f64 {
    -90.0
}
fn one() -> usize {
    1
}
fn default_insertion_loss() -> f64 {
    -5.0
}
fn default_reflective_factor() -> f64 {
    0.3
}

/// A parsed scenario, ready to build link scenarios for any distance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub base: LinkScenario,
    pub sweep: SweepConfig,
    pub estimator: EstimatorConfig,
}

impl Scenario {
    pub fn from_path(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_str(&text, dir, seed_override).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_str(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let l = &file.link;
        let surface = match &file.surface {
            None => None,
            Some(s) => {
                let rotation_table = match &s.rotation_table {
                    Some(p) => RotationTable::from_csv_path(&base_dir.join(p))
                        .map_err(config_error("surface.rotation_table"))?,
                    None => RotationTable::prototype(),
                };
                let mut model = SurfaceModel::new(
                    rotation_table,
                    s.insertion_loss_db,
                    s.mode,
                    s.reflective_rotation_factor,
                )
                .map_err(config_error("surface"))?;
                model.sense = s.sense;
                if let Some(p) = &s.loss_table {
                    model.loss_table = Some(
                        LossTable::from_csv_path(&base_dir.join(p))
                            .map_err(config_error("surface.loss_table"))?,
                    );
                }
                Some(model)
            }
        };
        let angle =
            |v: f64, key: &'static str| RotationAngle::from_degrees(v).map_err(config_error(key));
        let extra_rays = l
            .extra_rays
            .iter()
            .map(|r| {
                Ok(ExtraRay {
                    amplitude: r.amplitude,
                    phase_rad: r.phase_deg.to_radians(),
                    polarization: angle(r.polarization_deg, "link.extra_rays.polarization_deg")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let base = LinkScenario {
            frequency: l.frequency_hz,
            tx_power_dbm: l.tx_power_dbm,
            tx_orientation: angle(l.tx_orientation_deg, "link.tx_orientation_deg")?,
            rx_orientation: angle(l.rx_orientation_deg, "link.rx_orientation_deg")?,
            tx_rx_distance: l.tx_rx_distance_m,
            surface,
            tx_surface_distance: l.tx_surface_distance_m,
            bypass_fraction: 0.0,
            bypass_phase_rad: l.bypass_phase_deg.to_radians(),
            crosspol_floor_db: l.crosspol_floor_db,
            noise_floor_dbm: l.noise_floor_dbm,
            antenna_gains_dbi: (l.antenna_gains_dbi[0], l.antenna_gains_dbi[1]),
            rng_seed: seed_override.or(l.rng_seed).unwrap_or(DEFAULT_SEED),
            noise: NoiseModel {
                sigma_db: l.noise_sigma_db,
                samples: l.noise_samples,
            },
            extra_rays,
            rssi_step_db: l.rssi_step_db,
        };
        let c = &file.controller;
        let sweep = SweepConfig {
            n_iterations: c.n_iterations,
            steps_per_axis: c.steps_per_axis,
            v_min: c.v_min,
            v_max: c.v_max,
            settle_time_s: c.settle_time_s,
            window: c.window,
            attribution_lag: c.attribution_lag,
        };
        sweep.validate().map_err(config_error("controller"))?;
        let e = &file.estimator;
        let estimator = EstimatorConfig {
            resolution_deg: e.resolution_deg,
            bias_step_v: e.bias_step_v,
            reference: e.reference,
            peak: e.peak,
            sweep,
        };
        if !(e.resolution_deg > 0.0 && e.resolution_deg <= 180.0) {
            return Err(Error::Config(format!(
                "estimator.resolution_deg: {} must be in (0, 180]",
                e.resolution_deg
            )));
        }
        if e.bias_step_v.is_nan() || e.bias_step_v <= 0.0 {
            return Err(Error::Config(format!(
                "estimator.bias_step_v: {} must be > 0",
                e.bias_step_v
            )));
        }
        let x = &file.experiment;
        if !(x.bandwidth_hz.is_finite() && x.bandwidth_hz > 0.0) {
            return Err(Error::Config(format!(
                "experiment.bandwidth_hz: {} must be > 0",
                x.bandwidth_hz
            )));
        }
        if l.antenna_pattern == PatternSpec::Directional && l.beamwidth_deg.is_none() {
            return Err(Error::Config(
                "link.beamwidth_deg is required for a directional pattern".into(),
            ));
        }
        if matches!(l.bypass_fraction, BypassSpec::Model(_)) {
            match &file.surface {
                Some(s) if s.side_m.is_some_and(|v| v > 0.0) => {}
                _ => {
                    return Err(Error::Config(
                        "link.bypass_fraction = \"geometry\" needs [surface] with side_m > 0"
                            .into(),
                    ))
                }
            }
        }
        let scenario = Scenario {
            file,
            base,
            sweep,
            estimator,
        };
        let at_base = scenario.link_at(scenario.base.tx_rx_distance);
        at_base.validate().map_err(config_error("link"))?;
        Ok(scenario)
    }

    fn pattern(&self) -> AntennaPattern {
        match self.file.link.antenna_pattern {
            PatternSpec::Omni => AntennaPattern::Omni,
            PatternSpec::Directional => AntennaPattern::Directional {
                beamwidth_deg: self.file.link.beamwidth_deg.unwrap_or(360.0),
            },
        }
    }

    pub fn bypass_at(&self, distance: f64) -> f64 {
        match self.file.link.bypass_fraction {
            BypassSpec::Fixed(b) => b,
            BypassSpec::Model(BypassModel::Geometry) => {
                let side = self
                    .file
                    .surface
                    .as_ref()
                    .and_then(|s| s.side_m)
                    .unwrap_or(0.0);
                bypass_fraction_with_pattern(
                    distance,
                    side,
                    self.base.tx_surface_distance,
                    self.pattern(),
                )
            }
        }
    }

    /// The link with the receiver at `distance`, bypass recomputed when the
    /// geometric model is on.
    pub fn link_at(&self, distance: f64) -> LinkScenario {
        LinkScenario {
            tx_rx_distance: distance,
            bypass_fraction: self.bypass_at(distance),
            ..self.base.clone()
        }
    }

    pub fn distances(&self) -> Vec<f64> {
        non_empty(&self.file.experiment.distances_m, self.base.tx_rx_distance)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        non_empty(&self.file.experiment.frequencies_hz, self.base.frequency)
    }

    pub fn tx_powers(&self) -> Vec<f64> {
        non_empty(&self.file.experiment.tx_powers_dbm, self.base.tx_power_dbm)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.file.experiment.bandwidth_hz
    }
}

fn non_empty(v: &[f64], fallback: f64) -> Vec<f64> {
    if v.is_empty() {
        vec![fallback]
    } else {
        v.to_vec()
    }
}

fn config_error(key: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Config(format!("{key}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[link]
frequency_hz = 2.44e9
tx_power_dbm = 0.0
tx_orientation_deg = 0.0
rx_orientation_deg = 90.0
tx_rx_distance_m = 0.24
"#;

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::from_str(text, Path::new("."), None)
    }

    #[test]
    fn minimal_scenario_has_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert!(s.base.surface.is_none());
        assert_eq!(s.base.rng_seed, DEFAULT_SEED);
        assert_eq!(s.sweep, SweepConfig::default());
        assert_eq!(s.distances(), vec![0.24]);
    }

    #[test]
    fn seed_precedence() {
        let with_seed = format!("{MINIMAL}rng_seed = 7\n");
        assert_eq!(parse(&with_seed).unwrap().base.rng_seed, 7);
        let s = Scenario::from_str(&with_seed, Path::new("."), Some(99)).unwrap();
        assert_eq!(s.base.rng_seed, 99);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse(&format!("{MINIMAL}colour = 3\n")).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("colour"), "{err}");
        let err = parse(&format!("{MINIMAL}[surface]\nthickness = 1\n")).unwrap_err();
        assert!(err.to_string().contains("thickness"), "{err}");
    }

    #[test]
    fn missing_and_invalid_values() {
        let err = parse("[link]\nfrequency_hz = 2.4e9\n").unwrap_err();
        assert!(
            err.is_config() && err.to_string().contains("tx_power_dbm"),
            "{err}"
        );
        let err = parse(&MINIMAL.replace("0.24", "-1.0")).unwrap_err();
        assert!(
            err.is_config() && err.to_string().contains("distance"),
            "{err}"
        );
        let err = parse(&format!("{MINIMAL}[controller]\nsteps_per_axis = 1\n")).unwrap_err();
        assert!(err.is_config(), "{err}");
    }

    #[test]
    fn geometric_bypass_needs_side() {
        let text = format!("{MINIMAL}bypass_fraction = \"geometry\"\n[surface]\n");
        assert!(parse(&text).unwrap_err().is_config());
        let text = format!("{MINIMAL}bypass_fraction = \"geometry\"\n[surface]\nside_m = 0.36\n");
        let s = parse(&text).unwrap();
        assert!(s.bypass_at(0.6) > s.bypass_at(0.24));
        assert_eq!(s.link_at(0.6).bypass_fraction, s.bypass_at(0.6));
    }

    #[test]
    fn fixed_bypass_and_surface_options() {
        let text = format!(
            "{MINIMAL}bypass_fraction = 0.25\n[surface]\nmode = \"reflective\"\ninsertion_loss_db = -3.0\nsense = \"cw\"\n"
        );
        let s = parse(&text).unwrap();
        let m = s.base.surface.as_ref().unwrap();
        assert_eq!(m.mode, SurfaceMode::Reflective);
        assert_eq!(m.sense, RotationSense::Cw);
        assert_eq!(s.bypass_at(1.0), 0.25);
    }
}
