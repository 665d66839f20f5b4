//! Geometric estimate of how much of the field goes around the surface.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Radiation pattern used to normalize the captured solid angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AntennaPattern {
    /// Radiates uniformly into the half-space facing the other endpoint.
    #[default]
    Omni,
    /// Uniform inside a cone of full angle `beamwidth_deg`, nothing outside.
    Directional { beamwidth_deg: f64 },
}

impl AntennaPattern {
    fn reference_solid_angle(self) -> f64 {
        match self {
            AntennaPattern::Omni => 2.0 * PI,
            AntennaPattern::Directional { beamwidth_deg } => {
                let half = (beamwidth_deg.clamp(0.0, 180.0) / 2.0).to_radians();
                2.0 * PI * (1.0 - half.cos())
            }
        }
    }
}

/// Solid angle of a centred square of side `side` seen from distance `distance`
/// on its axis.
pub fn square_solid_angle(side: f64, distance: f64) -> f64 {
    let a2 = side * side;
    4.0 * (a2 / (a2 + 4.0 * distance * distance)).asin()
}

/// Share of the pattern's solid angle that the square intercepts, in [0, 1].
fn coverage(side: f64, distance: f64, pattern: AntennaPattern) -> f64 {
    let reference = pattern.reference_solid_angle();
    if reference <= 0.0 {
        return 1.0;
    }
    square_solid_angle(side, distance).min(reference) / reference
}

/// [`bypass_fraction_with_pattern`] for omnidirectional endpoints.
pub fn bypass_fraction_from_geometry(
    tx_rx_distance: f64,
    surface_side: f64,
    surface_distance: f64,
) -> f64 {
    bypass_fraction_with_pattern(
        tx_rx_distance,
        surface_side,
        surface_distance,
        AntennaPattern::Omni,
    )
}

/// Fraction of the received field that does not pass through a square surface
/// placed between the endpoints, `surface_distance` from the transmitter.
///
/// A ray goes through the surface only if it leaves the transmitter inside the
/// solid angle the surface subtends there, and arrives inside the solid angle
/// it subtends at the receiver. With each side normalized by the antenna
/// pattern, the through share is the product of the two coverages. Moving the
/// receiver away shrinks its coverage, so the fraction grows with
/// `tx_rx_distance`. A receiver at or in front of the surface gets no
/// through-surface field at all.
pub fn bypass_fraction_with_pattern(
    tx_rx_distance: f64,
    surface_side: f64,
    surface_distance: f64,
    pattern: AntennaPattern,
) -> f64 {
    if surface_side.is_nan() || surface_side <= 0.0 || tx_rx_distance <= surface_distance {
        return 1.0;
    }
    let d1 = surface_distance.max(0.0);
    let d2 = tx_rx_distance - d1;
    let through = coverage(surface_side, d1, pattern) * coverage(surface_side, d2, pattern);
    (1.0 - through).clamp(0.0, 1.0)
}
