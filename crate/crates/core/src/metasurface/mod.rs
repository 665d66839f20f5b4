//! Device model of the tunable polarization rotator.
//!
//! The physical stack is a quarter-wave plate, a bias-tunable birefringent
//! layer and a second quarter-wave plate. Algebraically the stack is a pure
//! rotation by half the birefringent phase ([`rotator_operator`]); the
//! simulator itself works directly in rotation degrees taken from the measured
//! [`RotationTable`], scaled by a flat or frequency-dependent insertion loss.

mod scattering;
mod table;

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::jones::{cascade, rotate_operator, rotation_matrix, JonesOperator, RotationAngle};

pub use scattering::{
    port_waves, transmission_efficiency, Polarization, PolarizedCoefficient, ScatteringMatrix,
};
pub use table::{BiasSetting, RotationTable, CAPACITANCE_RANGE_PF};

/// Orientation of a quarter-wave plate relative to the birefringent layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QwpOrientation {
    Plus45,
    Minus45,
}

/// Quarter-wave plate `diag(1, e^{jπ/2})` rotated by ±45°, with zero global phase.
pub fn qwp_operator(orientation: QwpOrientation) -> JonesOperator {
    let plate = JonesOperator::from_parts([
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [
            Complex64::new(0.0, 0.0),
            Complex64::from_polar(1.0, FRAC_PI_2),
        ],
    ]);
    let angle = match orientation {
        QwpOrientation::Plus45 => 45.0,
        QwpOrientation::Minus45 => -45.0,
    };
    rotate_operator(&plate, RotationAngle::from_degrees(angle).expect("finite"))
}

/// Birefringent layer `diag(1, e^{jδ})` with zero global phase.
pub fn bfs_operator(delta: f64) -> Result<JonesOperator> {
    let delta = ensure_finite(delta, "birefringent phase")?;
    JonesOperator::diagonal(Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, delta))
}

/// The full QWP / BFS / QWP stack, equal to `R(δ/2)` up to a global phase.
///
/// The wave meets the +45° plate first. With rotated devices written as
/// `R(θ)·M·R(θ)ᵀ`, meeting the −45° plate first yields `R(−δ/2)` instead, so
/// the plate order fixes the handedness of the rotation.
pub fn rotator_operator(delta: f64) -> Result<JonesOperator> {
    let bfs = bfs_operator(delta)?;
    cascade(&[
        qwp_operator(QwpOrientation::Plus45),
        bfs,
        qwp_operator(QwpOrientation::Minus45),
    ])
}

pub fn bias_to_rotation(table: &RotationTable, bias: BiasSetting) -> RotationAngle {
    RotationAngle::from_degrees(table.rotation_at(bias.vx, bias.vy))
        .expect("table entries are finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceMode {
    #[default]
    Transmissive,
    Reflective,
}

/// Handedness of the rotation a positive table entry produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationSense {
    #[default]
    Ccw,
    Cw,
}

/// Insertion loss sampled over frequency; linear in between, clamped at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    points: Vec<(f64, f64)>,
}

impl LossTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("loss table", "no rows"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid(
                "loss table",
                "frequencies must be strictly ascending",
            ));
        }
        if let Some((f, l)) = points
            .iter()
            .find(|(f, l)| !f.is_finite() || !l.is_finite() || *l > 0.0)
        {
            return Err(Error::invalid(
                "loss table",
                format!("row ({f}, {l}): loss must be finite and ≤ 0 dB"),
            ));
        }
        Ok(LossTable { points })
    }

    /// CSV with header `frequency_hz,insertion_loss_db`.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut points = Vec::new();
        for rec in rdr.deserialize::<(f64, f64)>() {
            points.push(rec?);
        }
        Self::new(points)
    }

    pub fn loss_db_at(&self, frequency: f64) -> f64 {
        let pts = &self.points;
        let last = pts.len() - 1;
        if frequency <= pts[0].0 {
            return pts[0].1;
        }
        if frequency >= pts[last].0 {
            return pts[last].1;
        }
        let i = pts.partition_point(|p| p.0 <= frequency) - 1;
        let (f0, l0) = pts[i];
        let (f1, l1) = pts[i + 1];
        l0 + (l1 - l0) * (frequency - f0) / (f1 - f0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceModel {
    pub rotation_table: RotationTable,
    /// Through-surface loss in dB (≤ 0), used when no loss table is loaded.
    pub insertion_loss_db: f64,
    pub mode: SurfaceMode,
    /// Share of the table rotation that survives a reflection, in [0, 1].
    pub reflective_rotation_factor: f64,
    pub loss_table: Option<LossTable>,
    pub sense: RotationSense,
}

impl Default for SurfaceModel {
    fn default() -> Self {
        SurfaceModel {
            rotation_table: RotationTable::prototype(),
            insertion_loss_db: -5.0,
            mode: SurfaceMode::Transmissive,
            reflective_rotation_factor: 0.3,
            loss_table: None,
            sense: RotationSense::Ccw,
        }
    }
}

impl SurfaceModel {
    pub fn new(
        rotation_table: RotationTable,
        insertion_loss_db: f64,
        mode: SurfaceMode,
        reflective_rotation_factor: f64,
    ) -> Result<Self> {
        let model = SurfaceModel {
            rotation_table,
            insertion_loss_db,
            mode,
            reflective_rotation_factor,
            loss_table: None,
            sense: RotationSense::Ccw,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let loss = ensure_finite(self.insertion_loss_db, "insertion loss")?;
        if loss > 0.0 {
            return Err(Error::invalid(
                "insertion loss",
                format!("{loss} dB must be ≤ 0"),
            ));
        }
        let k = ensure_finite(
            self.reflective_rotation_factor,
            "reflective rotation factor",
        )?;
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::invalid(
                "reflective rotation factor",
                format!("{k} is outside [0, 1]"),
            ));
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: SurfaceMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn insertion_loss_db_at(&self, frequency: f64) -> f64 {
        match &self.loss_table {
            Some(t) => t.loss_db_at(frequency),
            None => self.insertion_loss_db,
        }
    }

    /// Rotation seen by the wave: the table value, scaled in reflective mode
    /// and signed by the configured sense.
    pub fn effective_rotation(&self, bias: BiasSetting) -> RotationAngle {
        let table = self.rotation_table.rotation_at(bias.vx, bias.vy);
        let magnitude = match self.mode {
            SurfaceMode::Transmissive => table,
            SurfaceMode::Reflective => self.reflective_rotation_factor * table,
        };
        let signed = match self.sense {
            RotationSense::Ccw => magnitude,
            RotationSense::Cw => -magnitude,
        };
        RotationAngle::from_degrees(signed).expect("finite")
    }

    /// Bias on a uniform grid that minimizes the magnitude of the effective
    /// rotation; ties go to the first grid point in scan order.
    pub fn min_rotation_bias(&self, v_min: f64, v_max: f64, step: f64) -> BiasSetting {
        let n = grid_len(v_min, v_max, step);
        let mut best = (f64::INFINITY, BiasSetting::clamped(v_min, v_min));
        for iy in 0..n {
            for ix in 0..n {
                let b = BiasSetting::clamped(v_min + ix as f64 * step, v_min + iy as f64 * step);
                let r = self.effective_rotation(b).degrees().abs();
                if r < best.0 {
                    best = (r, b);
                }
            }
        }
        best.1
    }
}

pub(crate) fn grid_len(v_min: f64, v_max: f64, step: f64) -> usize {
    ((v_max - v_min) / step + 1e-9).floor() as usize + 1
}

/// Field amplitude factor for a power loss in dB.
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// `amplitude(loss) · R(θ_eff)` at the flat insertion loss.
pub fn surface_operator(model: &SurfaceModel, bias: BiasSetting) -> JonesOperator {
    operator_with_loss(model, bias, model.insertion_loss_db)
}

/// As [`surface_operator`], taking the insertion loss at `frequency` from the
/// loss table when one is loaded.
pub fn surface_operator_at(
    model: &SurfaceModel,
    bias: BiasSetting,
    frequency: f64,
) -> JonesOperator {
    operator_with_loss(model, bias, model.insertion_loss_db_at(frequency))
}

fn operator_with_loss(model: &SurfaceModel, bias: BiasSetting, loss_db: f64) -> JonesOperator {
    let amp = db_to_amplitude(loss_db);
    rotation_matrix(model.effective_rotation(bias)).scale(Complex64::new(amp, 0.0))
}

/// Bandwidth of a quarter-wave matching phase shifter whose substrate is λ/m thick:
///
/// `Δf = f₀ (2 − (m/π) · arccos[ Γ/√(1−Γ²) · 2√(Z_I Z_L) / |Z_L − Z_I| ])`.
pub fn phase_shifter_bandwidth(f0: f64, gamma: f64, z_in: f64, z_load: f64, m: f64) -> Result<f64> {
    for (v, name) in [
        (f0, "centre frequency"),
        (gamma, "reflection coefficient"),
        (z_in, "input impedance"),
        (z_load, "load impedance"),
        (m, "thickness divisor"),
    ] {
        ensure_finite(v, name)?;
    }
    if f0 <= 0.0 {
        return Err(Error::invalid("centre frequency", "must be > 0"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(
            "reflection coefficient",
            format!("{gamma} is outside (0, 1)"),
        ));
    }
    if z_in <= 0.0 || z_load <= 0.0 {
        return Err(Error::invalid("impedance", "must be > 0"));
    }
    if m <= 0.0 {
        return Err(Error::invalid("thickness divisor", "must be > 0"));
    }
    if z_in == z_load {
        return Err(Error::DegenerateImpedance);
    }
    let arg =
        gamma / (1.0 - gamma * gamma).sqrt() * 2.0 * (z_in * z_load).sqrt() / (z_load - z_in).abs();
    if arg > 1.0 {
        return Err(Error::OutOfDomain(format!(
            "arccos argument {arg:.6} > 1: the tolerated reflection exceeds the mismatch, so matching is trivially satisfied"
        )));
    }
    Ok(f0 * (2.0 - m / PI * arg.acos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn deg(d: f64) -> RotationAngle {
        RotationAngle::from_degrees(d).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_equal_up_to_phase(a: &JonesOperator, b: &JonesOperator, tol: f64) {
        let (d, _) = a.distance_up_to_phase(b);
        assert!(d < tol, "distance {d}: {a:?} vs {b:?}");
    }

    #[test]
    fn qwp_examples() {
        let x = crate::jones::PolarizationState::linear(RotationAngle::ZERO);
        let out = qwp_operator(QwpOrientation::Plus45).apply(&x);
        assert_abs_diff_eq!(out.intensity(), 1.0, epsilon = 1e-9);

        let both = cascade(&[
            qwp_operator(QwpOrientation::Minus45),
            qwp_operator(QwpOrientation::Plus45),
        ])
        .unwrap();
        let (hi, lo) = both.singular_values();
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);

        let plate = JonesOperator::diagonal(c(1., 0.), c(0., 1.)).unwrap();
        assert_equal_up_to_phase(
            &qwp_operator(QwpOrientation::Plus45),
            &rotate_operator(&plate, deg(45.0)),
            1e-12,
        );
    }

    #[test]
    fn bfs_examples() {
        let id = JonesOperator::IDENTITY;
        assert!(bfs_operator(0.0).unwrap().frobenius_distance(&id) < 1e-15);
        let flip = JonesOperator::diagonal(c(1., 0.), c(-1., 0.)).unwrap();
        assert!(bfs_operator(PI).unwrap().frobenius_distance(&flip) < 1e-15);
        let quarter = JonesOperator::diagonal(c(1., 0.), c(0., 1.)).unwrap();
        assert!(
            bfs_operator(FRAC_PI_2)
                .unwrap()
                .frobenius_distance(&quarter)
                < 1e-15
        );
        assert!(bfs_operator(f64::NAN).is_err());
    }

    #[test]
    fn rotator_examples() {
        assert_equal_up_to_phase(
            &rotator_operator(0.0).unwrap(),
            &JonesOperator::IDENTITY,
            1e-9,
        );
        assert_equal_up_to_phase(
            &rotator_operator(FRAC_PI_2).unwrap(),
            &rotation_matrix(deg(45.0)),
            1e-9,
        );
        assert_equal_up_to_phase(
            &rotator_operator(PI).unwrap(),
            &rotation_matrix(deg(90.0)),
            1e-9,
        );
    }

    #[test]
    fn opposite_plate_order_flips_handedness() {
        let delta = 1.1;
        let reversed = cascade(&[
            qwp_operator(QwpOrientation::Minus45),
            bfs_operator(delta).unwrap(),
            qwp_operator(QwpOrientation::Plus45),
        ])
        .unwrap();
        let rad = |r: f64| RotationAngle::from_radians(r).unwrap();
        assert_equal_up_to_phase(&reversed, &rotation_matrix(rad(-delta / 2.0)), 1e-9);
        let (d, _) = reversed.distance_up_to_phase(&rotation_matrix(rad(delta / 2.0)));
        assert!(d > 0.1);
    }

    #[test]
    fn bias_to_rotation_examples() {
        let t = RotationTable::prototype();
        let b = |vx, vy| BiasSetting::new(vx, vy).unwrap();
        assert_eq!(bias_to_rotation(&t, b(2.0, 2.0)).degrees(), 11.6);
        assert_eq!(bias_to_rotation(&t, b(15.0, 2.0)).degrees(), 48.7);
        assert_abs_diff_eq!(
            bias_to_rotation(&t, b(2.5, 2.0)).degrees(),
            18.85,
            epsilon = 1e-12
        );
    }

    #[test]
    fn surface_operator_examples() {
        let zero_table = RotationTable::new(vec![0.0], vec![0.0], vec![vec![0.0]]).unwrap();
        let lossless =
            SurfaceModel::new(zero_table.clone(), 0.0, SurfaceMode::Transmissive, 0.3).unwrap();
        let b = BiasSetting::new(7.0, 9.0).unwrap();
        assert!(
            surface_operator(&lossless, b).frobenius_distance(&JonesOperator::IDENTITY) < 1e-15
        );

        let lossy = SurfaceModel::new(
            RotationTable::prototype(),
            -5.0,
            SurfaceMode::Transmissive,
            0.3,
        )
        .unwrap();
        let (hi, lo) = surface_operator(&lossy, b).singular_values();
        assert_abs_diff_eq!(hi, 0.5623, epsilon = 1e-4);
        assert_abs_diff_eq!(lo, 0.5623, epsilon = 1e-4);

        let forty = RotationTable::new(vec![0.0], vec![0.0], vec![vec![40.0]]).unwrap();
        let refl = SurfaceModel::new(forty, 0.0, SurfaceMode::Reflective, 0.3).unwrap();
        assert_abs_diff_eq!(refl.effective_rotation(b).degrees(), 12.0, epsilon = 1e-12);
        assert!(surface_operator(&refl, b).frobenius_distance(&rotation_matrix(deg(12.0))) < 1e-12);
    }

    #[test]
    fn clockwise_sense_negates_rotation() {
        let m = SurfaceModel {
            sense: RotationSense::Cw,
            ..SurfaceModel::default()
        };
        let b = BiasSetting::new(15.0, 2.0).unwrap();
        assert_abs_diff_eq!(m.effective_rotation(b).degrees(), -48.7, epsilon = 1e-12);
    }

    #[test]
    fn model_validation() {
        let t = RotationTable::prototype();
        assert!(SurfaceModel::new(t.clone(), 1.0, SurfaceMode::Transmissive, 0.3).is_err());
        assert!(SurfaceModel::new(t.clone(), -5.0, SurfaceMode::Reflective, 1.5).is_err());
        assert!(SurfaceModel::new(t, f64::NAN, SurfaceMode::Reflective, 0.5).is_err());
    }

    #[test]
    fn min_rotation_bias_on_prototype() {
        let m = SurfaceModel::default();
        let b = m.min_rotation_bias(0.0, 30.0, 1.0);
        assert_eq!(b, BiasSetting::new(10.0, 15.0).unwrap());
        assert_eq!(m.effective_rotation(b).degrees(), 1.9);
    }

    #[test]
    fn loss_table_interpolates_and_clamps() {
        let t = LossTable::new(vec![(2.40e9, -8.0), (2.45e9, -5.0), (2.50e9, -8.0)]).unwrap();
        assert_eq!(t.loss_db_at(2.3e9), -8.0);
        assert_eq!(t.loss_db_at(2.45e9), -5.0);
        assert_abs_diff_eq!(t.loss_db_at(2.425e9), -6.5, epsilon = 1e-9);
        assert!(LossTable::new(vec![(2.4e9, 1.0)]).is_err());
        assert!(LossTable::new(vec![(2.5e9, -1.0), (2.4e9, -1.0)]).is_err());
    }

    #[test]
    fn efficiency_of_surface_matches_insertion_loss() {
        let m = SurfaceModel::default();
        let op = surface_operator(&m, BiasSetting::new(4.0, 4.0).unwrap());
        let s = ScatteringMatrix::matched_transmission(&op).unwrap();
        let expected = 10f64.powf(-0.5);
        assert_abs_diff_eq!(
            transmission_efficiency(&s, Polarization::X),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            transmission_efficiency(&s, Polarization::Y),
            expected,
            epsilon = 1e-12
        );
    }

    // Regression value from a separate scripted evaluation of the closed form
    // (f0 = 2.45 GHz, Γ = 0.316, Z_I = 50 Ω, Z_L = 100 Ω, m = 4).
    const BANDWIDTH_REFERENCE_HZ: f64 = 3_832_862_482.941074;

    #[test]
    fn bandwidth_examples() {
        let bw = phase_shifter_bandwidth(2.45e9, 0.316, 50.0, 100.0, 4.0).unwrap();
        assert!(((bw - BANDWIDTH_REFERENCE_HZ) / BANDWIDTH_REFERENCE_HZ).abs() < 1e-6);

        // Γ → 0⁺: arccos(0) = π/2, so Δf → f₀(2 − m/2).
        let tiny = phase_shifter_bandwidth(1e9, 1e-12, 50.0, 100.0, 3.0).unwrap();
        assert_abs_diff_eq!(tiny / 1e9, 0.5, epsilon = 1e-9);

        let m4 = phase_shifter_bandwidth(2.45e9, 0.316, 50.0, 100.0, 4.0).unwrap();
        let m8 = phase_shifter_bandwidth(2.45e9, 0.316, 50.0, 100.0, 8.0).unwrap();
        assert!(m8 < m4);
    }

    #[test]
    fn bandwidth_errors() {
        assert!(matches!(
            phase_shifter_bandwidth(2.45e9, 0.3, 50.0, 50.0, 4.0),
            Err(Error::DegenerateImpedance)
        ));
        assert!(matches!(
            phase_shifter_bandwidth(2.45e9, 0.6, 50.0, 100.0, 4.0),
            Err(Error::OutOfDomain(_))
        ));
        assert!(phase_shifter_bandwidth(2.45e9, 1.0, 50.0, 100.0, 4.0).is_err());
        assert!(phase_shifter_bandwidth(2.45e9, 0.3, 50.0, 100.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rotator_is_half_angle_rotation(delta in 0.0f64..(2.0 * PI)) {
            let p = rotator_operator(delta).unwrap();
            let r = rotation_matrix(RotationAngle::from_radians(delta / 2.0).unwrap());
            let (d, _) = p.distance_up_to_phase(&r);
            prop_assert!(d < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn surface_singular_values_track_loss(loss in -30.0f64..0.0, vx in 0.0f64..30.0, vy in 0.0f64..30.0) {
            let m = SurfaceModel { insertion_loss_db: loss, ..SurfaceModel::default() };
            let (hi, lo) = surface_operator(&m, BiasSetting::new(vx, vy).unwrap()).singular_values();
            let amp = 10f64.powf(loss / 20.0);
            prop_assert!((hi - amp).abs() < 1e-12 && (lo - amp).abs() < 1e-12);
        }

        #[test]
        fn bandwidth_monotone(gamma in 0.01f64..0.3, zl in 60.0f64..400.0, m1 in 0.5f64..10.0, dm in 0.1f64..5.0, dg in 0.001f64..0.02) {
            let zi = 50.0;
            if let (Ok(a), Ok(b)) = (
                phase_shifter_bandwidth(2.45e9, gamma, zi, zl, m1),
                phase_shifter_bandwidth(2.45e9, gamma, zi, zl, m1 + dm),
            ) {
                prop_assert!(b < a);
            }
            if let (Ok(a), Ok(b)) = (
                phase_shifter_bandwidth(2.45e9, gamma, zi, zl, m1),
                phase_shifter_bandwidth(2.45e9, gamma + dg, zi, zl, m1),
            ) {
                prop_assert!(b > a);
            }
        }
    }
}
