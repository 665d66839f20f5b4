//! Link budget: path loss, polarization mismatch, through/bypass field
//! combination, noise, SNR and capacity.

mod geometry;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::jones::{fold_axis_degrees, PolarizationState, RotationAngle};
use crate::metasurface::{surface_operator_at, BiasSetting, SurfaceMode, SurfaceModel};

pub use geometry::{
    bypass_fraction_from_geometry, bypass_fraction_with_pattern, square_solid_angle, AntennaPattern,
};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// `20·log₁₀(4πdf/c)` in dB.
pub fn free_space_path_loss(distance: f64, frequency: f64) -> Result<f64> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(Error::invalid(
            "distance",
            format!("{distance} m must be > 0"),
        ));
    }
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(Error::invalid(
            "frequency",
            format!("{frequency} Hz must be > 0"),
        ));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance * frequency / SPEED_OF_LIGHT).log10())
}

/// Malus's law in dB, never below the cross-polarization floor.
pub fn mismatch_loss(delta_theta: RotationAngle, floor_db: f64) -> f64 {
    let c2 = delta_theta.radians().cos().powi(2);
    (10.0 * c2.log10()).max(floor_db)
}

/// Shannon capacity in bit/s/Hz.
pub fn capacity(snr_db: f64) -> f64 {
    (1.0 + 10f64.powf(snr_db / 10.0)).log2()
}

/// Distance multiplier that a power gain buys under free-space loss.
pub fn range_extension(power_gain_db: f64) -> f64 {
    10f64.powf(power_gain_db / 20.0)
}

/// Receiver noise around the linear received power.
///
/// Each sample is `P·(1 + σ·z)` with `z` standard normal and
/// `σ = 10^(sigma_db/10) − 1`, i.e. one standard deviation moves the reading by
/// `sigma_db`. Reported power is the mean over `samples` readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_db: f64,
    pub samples: usize,
}

impl NoiseModel {
    pub const OFF: NoiseModel = NoiseModel {
        sigma_db: 0.0,
        samples: 1,
    };

    pub fn is_off(&self) -> bool {
        self.sigma_db == 0.0
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_db: 0.5,
            samples: 30,
        }
    }
}

/// An additional propagation path, added coherently at the receiver.
/// `amplitude` is relative to the direct field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraRay {
    pub amplitude: f64,
    pub phase_rad: f64,
    pub polarization: RotationAngle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkScenario {
    pub frequency: f64,
    pub tx_power_dbm: f64,
    pub tx_orientation: RotationAngle,
    pub rx_orientation: RotationAngle,
    pub tx_rx_distance: f64,
    pub surface: Option<SurfaceModel>,
    /// Transmissive mode: distance from the transmitter to the surface along
    /// the link. Reflective mode: offset of the surface from the link axis.
    pub tx_surface_distance: f64,
    pub bypass_fraction: f64,
    /// Phase of the bypass field relative to the through-surface field.
    pub bypass_phase_rad: f64,
    pub crosspol_floor_db: f64,
    pub noise_floor_dbm: f64,
    pub antenna_gains_dbi: (f64, f64),
    pub rng_seed: u64,
    pub noise: NoiseModel,
    pub extra_rays: Vec<ExtraRay>,
    /// When set, [`measure`] reports total received power (signal plus noise
    /// floor) quantized to this step, like a receiver's RSSI register.
    pub rssi_step_db: Option<f64>,
}

impl Default for LinkScenario {
    fn default() -> Self {
        LinkScenario {
            frequency: 2.44e9,
            tx_power_dbm: 0.0,
            tx_orientation: RotationAngle::ZERO,
            rx_orientation: RotationAngle::ZERO,
            tx_rx_distance: 0.24,
            surface: None,
            tx_surface_distance: 0.12,
            bypass_fraction: 0.0,
            bypass_phase_rad: 0.0,
            crosspol_floor_db: -30.0,
            noise_floor_dbm: -90.0,
            antenna_gains_dbi: (0.0, 0.0),
            rng_seed: 42,
            noise: NoiseModel::OFF,
            extra_rays: Vec::new(),
            rssi_step_db: None,
        }
    }
}

impl LinkScenario {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &'static str, unit: &str| -> Result<()> {
            ensure_finite(v, name)?;
            if v <= 0.0 {
                return Err(Error::invalid(name, format!("{v} {unit} must be > 0")));
            }
            Ok(())
        };
        positive(self.frequency, "frequency", "Hz")?;
        positive(self.tx_rx_distance, "tx-rx distance", "m")?;
        positive(self.tx_surface_distance, "tx-surface distance", "m")?;
        ensure_finite(self.tx_power_dbm, "tx power")?;
        ensure_finite(self.noise_floor_dbm, "noise floor")?;
        ensure_finite(self.bypass_phase_rad, "bypass phase")?;
        ensure_finite(self.antenna_gains_dbi.0, "tx antenna gain")?;
        ensure_finite(self.antenna_gains_dbi.1, "rx antenna gain")?;
        let b = ensure_finite(self.bypass_fraction, "bypass fraction")?;
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::invalid(
                "bypass fraction",
                format!("{b} is outside [0, 1]"),
            ));
        }
        let floor = ensure_finite(self.crosspol_floor_db, "cross-polarization floor")?;
        if floor >= 0.0 {
            return Err(Error::invalid(
                "cross-polarization floor",
                format!("{floor} dB must be < 0"),
            ));
        }
        let sigma = ensure_finite(self.noise.sigma_db, "noise sigma")?;
        if sigma < 0.0 {
            return Err(Error::invalid("noise sigma", "must be ≥ 0"));
        }
        if self.noise.samples == 0 {
            return Err(Error::invalid("noise samples", "must be ≥ 1"));
        }
        if let Some(step) = self.rssi_step_db {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::invalid(
                    "rssi step",
                    format!("{step} dB must be > 0"),
                ));
            }
        }
        for ray in &self.extra_rays {
            if !(ray.amplitude.is_finite() && ray.amplitude >= 0.0 && ray.phase_rad.is_finite()) {
                return Err(Error::invalid(
                    "extra ray",
                    "amplitude must be ≥ 0 and phase finite",
                ));
            }
        }
        if let Some(s) = &self.surface {
            s.validate()?;
        }
        Ok(())
    }

    pub fn without_surface(&self) -> LinkScenario {
        LinkScenario {
            surface: None,
            ..self.clone()
        }
    }

    pub fn with_tx_power(&self, tx_power_dbm: f64) -> LinkScenario {
        LinkScenario {
            tx_power_dbm,
            ..self.clone()
        }
    }

    pub fn with_rx_orientation(&self, rx_orientation: RotationAngle) -> LinkScenario {
        LinkScenario {
            rx_orientation,
            ..self.clone()
        }
    }

    /// Length of the propagation path that goes via the surface.
    pub fn path_length(&self) -> f64 {
        match &self.surface {
            Some(s) if s.mode == SurfaceMode::Reflective => {
                let half = self.tx_rx_distance / 2.0;
                2.0 * (self.tx_surface_distance.powi(2) + half * half).sqrt()
            }
            _ => self.tx_rx_distance,
        }
    }

    /// Field arriving at the receiver for unit transmitted amplitude, before
    /// path loss and antenna gains.
    pub fn received_field(&self, bias: Option<BiasSetting>) -> Result<PolarizationState> {
        let jt = PolarizationState::linear(self.tx_orientation);
        let mut field = match &self.surface {
            None => jt,
            Some(model) => {
                let bias = bias.ok_or(Error::MissingBias)?;
                let op = surface_operator_at(model, bias, self.frequency);
                let b = self.bypass_fraction;
                let through = op.apply(&jt).scale(Complex64::new((1.0 - b).sqrt(), 0.0));
                let bypass = jt.scale(Complex64::from_polar(b.sqrt(), self.bypass_phase_rad));
                through + bypass
            }
        };
        for ray in &self.extra_rays {
            field = field
                + PolarizationState::linear(ray.polarization)
                    .scale(Complex64::from_polar(ray.amplitude, ray.phase_rad));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    /// Received power after noise averaging.
    pub rx_power_dbm: f64,
    /// Noise-free received power.
    pub expected_power_dbm: f64,
    pub snr_db: f64,
    pub capacity_bits_per_s_per_hz: f64,
    /// Residual angle between the received field's major axis and the receiver.
    pub mismatch_deg: f64,
}

/// Lowest power fraction reported, to keep fully cancelled fields finite in dB.
const MIN_FRACTION: f64 = 1e-30;

pub fn received_power(s: &LinkScenario, bias: Option<BiasSetting>) -> Result<LinkReport> {
    s.validate()?;
    let field = s.received_field(bias)?;
    let total = field.intensity();
    let coupled = field.project(s.rx_orientation).norm_sqr();
    let floor = 10f64.powf(s.crosspol_floor_db / 10.0);
    let fraction = coupled.max(floor * total).max(MIN_FRACTION);

    let fspl = free_space_path_loss(s.path_length(), s.frequency)?;
    let (gt, gr) = s.antenna_gains_dbi;
    let expected = s.tx_power_dbm + gt + gr - fspl + 10.0 * fraction.log10();
    let rx = if s.noise.is_off() {
        expected
    } else {
        let samples = noise_samples(s, bias, dbm_to_mw(expected));
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        mw_to_dbm(mean.max(dbm_to_mw(expected) * MIN_FRACTION))
    };
    let snr_db = rx - s.noise_floor_dbm;
    let mismatch_deg = if total > 0.0 {
        fold_axis_degrees(field.major_axis().degrees() - s.rx_orientation.degrees())
    } else {
        0.0
    };
    Ok(LinkReport {
        rx_power_dbm: rx,
        expected_power_dbm: expected,
        snr_db,
        capacity_bits_per_s_per_hz: capacity(snr_db),
        mismatch_deg,
    })
}

/// Individual noisy readings (mW) that [`received_power`] averages.
pub fn raw_samples(s: &LinkScenario, bias: Option<BiasSetting>) -> Result<Vec<f64>> {
    let report = received_power(
        &LinkScenario {
            noise: NoiseModel::OFF,
            ..s.clone()
        },
        bias,
    )?;
    let p = dbm_to_mw(report.expected_power_dbm);
    Ok(if s.noise.is_off() {
        vec![p]
    } else {
        noise_samples(s, bias, p)
    })
}

fn noise_samples(s: &LinkScenario, bias: Option<BiasSetting>, p_mw: f64) -> Vec<f64> {
    let sigma = 10f64.powf(s.noise.sigma_db / 10.0) - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(s, bias));
    (0..s.noise.samples)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (p_mw * (1.0 + sigma * z)).max(0.0)
        })
        .collect()
}

/// Per-call seed: the scenario seed mixed with everything that identifies the
/// measurement except transmit power, so power shifts see identical noise.
fn noise_seed(s: &LinkScenario, bias: Option<BiasSetting>) -> u64 {
    let (vx, vy) = bias.map_or((-1.0, -1.0), |b| (b.vx, b.vy));
    [
        vx,
        vy,
        s.tx_orientation.degrees(),
        s.rx_orientation.degrees(),
        s.tx_rx_distance,
        s.frequency,
    ]
    .iter()
    .fold(splitmix64(s.rng_seed), |acc, v| {
        splitmix64(acc ^ v.to_bits())
    })
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The reading a receiver reports for one bias state: [`LinkReport::rx_power_dbm`],
/// or the quantized RSSI of signal plus noise floor when `rssi_step_db` is set.
pub fn measure(s: &LinkScenario, bias: Option<BiasSetting>) -> Result<f64> {
    let report = received_power(s, bias)?;
    Ok(match s.rssi_step_db {
        None => report.rx_power_dbm,
        Some(step) => {
            let total = mw_to_dbm(dbm_to_mw(report.rx_power_dbm) + dbm_to_mw(s.noise_floor_dbm));
            (total / step).round() * step
        }
    })
}
