//! Estimating the rotation a surface induces from received-power sweeps alone.
//!
//! 1. With the surface contributing as little rotation as possible, rotate the
//!    receiver over 180° and take the strongest orientation θ₀.
//! 2. Fix the receiver at θ₀ and sweep the bias grid; the weakest and strongest
//!    readings give `v_min` and `v_max`.
//! 3. At each of those biases rotate the receiver again; the orientation shift
//!    from θ₀ is the rotation the surface induces there.
//!
//! Dipole patterns are 180°-periodic, so orientation shifts are folded into
//! [0°, 90°]. The two folded shifts are sorted, so the reported minimum never
//! exceeds the maximum regardless of which bias produced which.

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_mw, measure, LinkScenario};
use crate::controller::{exhaustive_sweep, MeasurementProbe, SweepConfig};
use crate::error::{Error, Result};
use crate::jones::{fold_axis_degrees, RotationAngle};
use crate::metasurface::BiasSetting;

/// Receiver orientations and their readings.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSweep {
    pub angles: Vec<RotationAngle>,
    pub powers_dbm: Vec<f64>,
}

/// How the strongest orientation is picked from a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakMethod {
    /// Sample with the largest linear power (first on ties).
    #[default]
    Argmax,
    /// Least-squares fit of `a + b·cos2θ + c·sin2θ` to the linear powers;
    /// the peak is `atan2(c, b)/2`. Robust to noisy readings on the flat top.
    Fit,
}

/// What stands in for "no rotation" in step 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentReference {
    /// Surface in place, biased for the smallest rotation in its table.
    #[default]
    MinRotationBias,
    /// Surface removed from the link.
    SurfaceAbsent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub resolution_deg: f64,
    pub bias_step_v: f64,
    pub reference: AlignmentReference,
    pub peak: PeakMethod,
    /// Voltage range and settle time of the step-2 bias sweep.
    pub sweep: SweepConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            resolution_deg: 1.0,
            bias_step_v: 1.0,
            reference: AlignmentReference::MinRotationBias,
            peak: PeakMethod::Argmax,
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationEstimate {
    pub theta0: RotationAngle,
    pub theta_min_rot: f64,
    pub theta_max_rot: f64,
    pub v_min: BiasSetting,
    pub v_max: BiasSetting,
}

/// JSON shape of a [`RotationEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta0_deg: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub v_min: BiasSetting,
    pub v_max: BiasSetting,
}

impl From<&RotationEstimate> for EstimateReport {
    fn from(e: &RotationEstimate) -> Self {
        EstimateReport {
            theta0_deg: e.theta0.degrees(),
            theta_min_deg: e.theta_min_rot,
            theta_max_deg: e.theta_max_rot,
            v_min: e.v_min,
            v_max: e.v_max,
        }
    }
}

/// Reads the probe at orientations 0, r, 2r, … up to and including 180°.
pub fn sweep_orientation(
    mut probe: impl FnMut(RotationAngle) -> Result<f64>,
    resolution_deg: f64,
) -> Result<OrientationSweep> {
    if !(resolution_deg.is_finite() && resolution_deg > 0.0 && resolution_deg <= 180.0) {
        return Err(Error::invalid(
            "resolution",
            format!("{resolution_deg}° must be in (0, 180]"),
        ));
    }
    let n = (180.0 / resolution_deg + 1e-9).floor() as usize + 1;
    let angles: Vec<RotationAngle> = (0..n)
        .map(|k| RotationAngle::from_degrees(k as f64 * resolution_deg))
        .collect::<Result<_>>()?;
    let powers_dbm = angles.iter().map(|&a| probe(a)).collect::<Result<_>>()?;
    Ok(OrientationSweep { angles, powers_dbm })
}

impl OrientationSweep {
    pub fn peak(&self, method: PeakMethod) -> Result<RotationAngle> {
        let lin: Vec<f64> = self.powers_dbm.iter().map(|&p| dbm_to_mw(p)).collect();
        let (lo, hi) = lin
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| {
                (a.min(p), b.max(p))
            });
        if hi.is_nan() || hi <= lo * (1.0 + 1e-12) {
            return Err(Error::Ambiguous(format!(
                "flat orientation profile over {} samples",
                lin.len()
            )));
        }
        match method {
            PeakMethod::Argmax => {
                let mut best = 0;
                for (i, &p) in lin.iter().enumerate() {
                    if p > lin[best] {
                        best = i;
                    }
                }
                Ok(self.angles[best])
            }
            PeakMethod::Fit => {
                let (_, b, c) = fit_double_angle(&self.angles, &lin);
                if b.hypot(c) <= 1e-12 * hi {
                    return Err(Error::Ambiguous("no orientation dependence in fit".into()));
                }
                RotationAngle::from_radians(0.5 * c.atan2(b))
            }
        }
    }
}

/// Least squares for `y ≈ a + b·cos2θ + c·sin2θ`.
fn fit_double_angle(angles: &[RotationAngle], y: &[f64]) -> (f64, f64, f64) {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (a, &v) in angles.iter().zip(y) {
        let t = 2.0 * a.radians();
        let row = [1.0, t.cos(), t.sin()];
        for i in 0..3 {
            aty[i] += row[i] * v;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let x = solve3(ata, aty);
    (x[0], x[1], x[2])
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (dst, src) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *dst -= f * src;
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    x
}

/// Step 1 helper: the strongest receiver orientation.
pub fn find_alignment(
    probe: impl FnMut(RotationAngle) -> Result<f64>,
    resolution_deg: f64,
    method: PeakMethod,
) -> Result<RotationAngle> {
    sweep_orientation(probe, resolution_deg)?.peak(method)
}

/// Step 2: exhaustive bias sweep; returns `(v_min, v_max)`, first in scan
/// order on ties.
pub fn find_extreme_biases<P: MeasurementProbe>(
    probe: &mut P,
    step: f64,
    cfg: &SweepConfig,
) -> Result<(BiasSetting, BiasSetting)> {
    let trace = exhaustive_sweep(probe, step, cfg)?;
    let weakest = trace.weakest().map(|e| e.bias).expect("non-empty sweep");
    Ok((weakest, trace.best_bias()))
}

pub fn estimate_rotation(s: &LinkScenario, cfg: &EstimatorConfig) -> Result<RotationEstimate> {
    let model = s.surface.as_ref().ok_or(Error::NoSurface)?;
    s.validate()?;

    let reference = match cfg.reference {
        AlignmentReference::MinRotationBias => {
            Some(model.min_rotation_bias(cfg.sweep.v_min, cfg.sweep.v_max, cfg.bias_step_v))
        }
        AlignmentReference::SurfaceAbsent => None,
    };
    let aligned = match reference {
        Some(_) => s.clone(),
        None => s.without_surface(),
    };
    let orientation_probe = |scenario: &LinkScenario, bias: Option<BiasSetting>| {
        let scenario = scenario.clone();
        move |a: RotationAngle| measure(&scenario.with_rx_orientation(a), bias)
    };
    let theta0 = find_alignment(
        orientation_probe(&aligned, reference),
        cfg.resolution_deg,
        cfg.peak,
    )?;

    let at_theta0 = s.with_rx_orientation(theta0);
    let mut bias_probe = |b: BiasSetting| measure(&at_theta0, Some(b));
    let (v_min, v_max) = find_extreme_biases(&mut bias_probe, cfg.bias_step_v, &cfg.sweep)?;

    let shift = |bias: BiasSetting| -> Result<f64> {
        let theta = find_alignment(
            orientation_probe(s, Some(bias)),
            cfg.resolution_deg,
            cfg.peak,
        )?;
        Ok(fold_axis_degrees(theta.degrees() - theta0.degrees()))
    };
    let (a, b) = (shift(v_min)?, shift(v_max)?);
    Ok(RotationEstimate {
        theta0,
        theta_min_rot: a.min(b),
        theta_max_rot: a.max(b),
        v_min,
        v_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::NoiseModel;
    use crate::controller::probe_fn;
    use crate::metasurface::{SurfaceMode, SurfaceModel};
    use approx::assert_abs_diff_eq;

    fn deg(d: f64) -> RotationAngle {
        RotationAngle::from_degrees(d).unwrap()
    }

    fn link(tx: f64) -> LinkScenario {
        LinkScenario {
            tx_orientation: deg(tx),
            ..Default::default()
        }
    }

    fn align(s: &LinkScenario, res: f64) -> RotationAngle {
        find_alignment(
            |a| measure(&s.with_rx_orientation(a), None),
            res,
            PeakMethod::Argmax,
        )
        .unwrap()
    }

    #[test]
    fn alignment_finds_transmitter() {
        assert_eq!(align(&link(0.0), 1.0).degrees(), 0.0);
        assert_eq!(align(&link(37.0), 1.0).degrees(), 37.0);
        assert_abs_diff_eq!(align(&link(37.4), 5.0).degrees(), 35.0);
    }

    #[test]
    fn one_degree_sweep_takes_181_readings() {
        let mut calls = 0;
        find_alignment(
            |a| {
                calls += 1;
                Ok(a.radians().cos().powi(2).max(1e-3).log10())
            },
            1.0,
            PeakMethod::Argmax,
        )
        .unwrap();
        assert_eq!(calls, 181);
    }

    #[test]
    fn flat_profile_is_ambiguous() {
        let r = find_alignment(|_| Ok(-40.0), 1.0, PeakMethod::Argmax);
        assert!(matches!(r, Err(Error::Ambiguous(_))));
        let r = find_alignment(|_| Ok(-40.0), 1.0, PeakMethod::Fit);
        assert!(matches!(r, Err(Error::Ambiguous(_))));
        assert!(find_alignment(|_| Ok(0.0), 0.0, PeakMethod::Argmax).is_err());
    }

    #[test]
    fn fit_recovers_off_grid_peak() {
        let s = link(37.4);
        let a = find_alignment(
            |a| measure(&s.with_rx_orientation(a), None),
            5.0,
            PeakMethod::Fit,
        )
        .unwrap();
        assert_abs_diff_eq!(a.degrees(), 37.4, epsilon = 1e-6);
    }

    fn table_link(rx: f64, bypass: f64) -> LinkScenario {
        LinkScenario {
            surface: Some(SurfaceModel::default()),
            rx_orientation: deg(rx),
            bypass_fraction: bypass,
            ..Default::default()
        }
    }

    #[test]
    fn extreme_biases_on_orthogonal_link() {
        let s = table_link(90.0, 0.0);
        let m = s.surface.as_ref().unwrap();
        let mut p = |b| measure(&s, Some(b));
        let (lo, hi) = find_extreme_biases(&mut p, 1.0, &SweepConfig::default()).unwrap();
        assert_eq!(m.effective_rotation(hi).degrees(), 48.7);
        assert_eq!(m.effective_rotation(lo).degrees(), 1.9);
    }

    #[test]
    fn extreme_biases_swap_on_matched_link() {
        let s = table_link(0.0, 0.0);
        let m = s.surface.as_ref().unwrap();
        let mut p = |b| measure(&s, Some(b));
        let (lo, hi) = find_extreme_biases(&mut p, 1.0, &SweepConfig::default()).unwrap();
        assert_eq!(m.effective_rotation(hi).degrees(), 1.9);
        assert_eq!(m.effective_rotation(lo).degrees(), 48.7);
    }

    #[test]
    fn extreme_biases_flat_probe() {
        let mut p = probe_fn(|_| -30.0);
        let (lo, hi) = find_extreme_biases(&mut p, 15.0, &SweepConfig::default()).unwrap();
        assert_eq!(lo, BiasSetting::new(0.0, 0.0).unwrap());
        assert_eq!(hi, lo);
    }

    #[test]
    fn recovers_table_extremes_without_bypass() {
        let s = table_link(90.0, 0.0);
        for reference in [
            AlignmentReference::MinRotationBias,
            AlignmentReference::SurfaceAbsent,
        ] {
            let cfg = EstimatorConfig {
                reference,
                ..Default::default()
            };
            let e = estimate_rotation(&s, &cfg).unwrap();
            assert!((e.theta_min_rot - 1.9).abs() <= 2.0, "{e:?}");
            assert!((e.theta_max_rot - 48.7).abs() <= 2.0, "{e:?}");
        }
    }

    #[test]
    fn full_bypass_shows_no_rotation() {
        let e = estimate_rotation(&table_link(90.0, 1.0), &EstimatorConfig::default()).unwrap();
        assert_eq!(e.theta_min_rot, 0.0);
        assert_eq!(e.theta_max_rot, 0.0);
    }

    #[test]
    fn bypass_dilutes_and_is_monotone() {
        let mut prev = f64::INFINITY;
        for b in [0.0, 0.2, 0.5, 0.8, 0.95] {
            let e = estimate_rotation(&table_link(90.0, b), &EstimatorConfig::default()).unwrap();
            assert!(e.theta_max_rot <= prev, "bypass {b}: {e:?}");
            assert!(e.theta_min_rot <= e.theta_max_rot);
            if b == 0.5 {
                assert!(e.theta_max_rot < 48.7);
            }
            prev = e.theta_max_rot;
        }
    }

    #[test]
    fn estimate_ignores_tx_power() {
        let s = table_link(90.0, 0.3);
        let a = estimate_rotation(&s, &EstimatorConfig::default()).unwrap();
        let b = estimate_rotation(&s.with_tx_power(17.0), &EstimatorConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_works_for_clockwise_surfaces() {
        let mut s = table_link(90.0, 0.0);
        s.surface.as_mut().unwrap().sense = crate::metasurface::RotationSense::Cw;
        let e = estimate_rotation(&s, &EstimatorConfig::default()).unwrap();
        assert!((e.theta_max_rot - 48.7).abs() <= 2.0, "{e:?}");
    }

    #[test]
    fn fit_tolerates_noise() {
        let s = LinkScenario {
            noise: NoiseModel::default(),
            ..table_link(90.0, 0.0)
        };
        let cfg = EstimatorConfig {
            peak: PeakMethod::Fit,
            reference: AlignmentReference::SurfaceAbsent,
            ..Default::default()
        };
        let e = estimate_rotation(&s, &cfg).unwrap();
        assert!((e.theta_max_rot - 48.7).abs() <= 2.0, "{e:?}");
    }

    #[test]
    fn reflective_estimate_is_scaled() {
        let s = LinkScenario {
            surface: Some(SurfaceModel::default().with_mode(SurfaceMode::Reflective)),
            rx_orientation: deg(90.0),
            ..Default::default()
        };
        let e = estimate_rotation(&s, &EstimatorConfig::default()).unwrap();
        assert!((e.theta_max_rot - 0.3 * 48.7).abs() <= 2.0, "{e:?}");
    }

    #[test]
    fn needs_surface() {
        assert!(matches!(
            estimate_rotation(&LinkScenario::default(), &EstimatorConfig::default()),
            Err(Error::NoSurface)
        ));
    }

    #[test]
    fn report_json_shape() {
        let e = RotationEstimate {
            theta0: deg(2.0),
            theta_min_rot: 0.0,
            theta_max_rot: 30.0,
            v_min: BiasSetting::new(10.0, 15.0).unwrap(),
            v_max: BiasSetting::new(15.0, 2.0).unwrap(),
        };
        let v = serde_json::to_value(EstimateReport::from(&e)).unwrap();
        assert_eq!(v["theta_max_deg"], 30.0);
        assert_eq!(v["v_min"]["vx"], 10.0);
        assert_eq!(v["v_max"]["vy"], 2.0);
    }
}
