//! Two-port wave amplitudes and polarization-resolved scattering parameters.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jones::JonesOperator;

/// Incident and reflected wave amplitudes at a port with reference impedance `z0`.
///
/// `a = (V + Z₀I) / 2√Z₀`, `b = (V − Z₀I) / 2√Z₀`.
pub fn port_waves(v: Complex64, i: Complex64, z0: f64) -> Result<(Complex64, Complex64)> {
    if !(z0.is_finite() && z0 > 0.0) {
        return Err(Error::invalid(
            "reference impedance",
            format!("{z0} Ω must be > 0"),
        ));
    }
    if !(v.is_finite() && i.is_finite()) {
        return Err(Error::NonFinite("port voltage/current"));
    }
    let denom = 2.0 * z0.sqrt();
    Ok(((v + i * z0) / denom, (v - i * z0) / denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    X,
    Y,
}

impl Polarization {
    fn index(self) -> usize {
        match self {
            Polarization::X => 0,
            Polarization::Y => 1,
        }
    }
}

/// One polarization-resolved S-parameter, `block[out][in]`.
///
/// `block[1][0]` is the y-polarized output excited by an x-polarized input,
/// i.e. the `yx` superscript.
pub type PolarizedCoefficient = [[Complex64; 2]; 2];

/// Scattering matrix of a two-port where every port carries both polarizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringMatrix {
    pub s11: PolarizedCoefficient,
    pub s12: PolarizedCoefficient,
    pub s21: PolarizedCoefficient,
    pub s22: PolarizedCoefficient,
}

const Z: Complex64 = Complex64::new(0.0, 0.0);
const ZERO_BLOCK: PolarizedCoefficient = [[Z, Z], [Z, Z]];

impl ScatteringMatrix {
    pub fn new(
        s11: PolarizedCoefficient,
        s12: PolarizedCoefficient,
        s21: PolarizedCoefficient,
        s22: PolarizedCoefficient,
    ) -> Result<Self> {
        let s = ScatteringMatrix { s11, s12, s21, s22 };
        // Element-wise only; does not bound total power efficiency.
        if let Some(bad) = s
            .coefficients()
            .find(|z| !z.is_finite() || z.norm() > 1.0 + 1e-9)
        {
            return Err(Error::invalid(
                "scattering matrix",
                format!("|s| = {} violates passivity", bad.norm()),
            ));
        }
        Ok(s)
    }

    /// Matched, reciprocal surface whose forward transmission is `op`.
    pub fn matched_transmission(op: &JonesOperator) -> Result<Self> {
        let m = op.matrix();
        Self::new(ZERO_BLOCK, m, m, ZERO_BLOCK)
    }

    /// Only the forward-transmission block is specified; the rest is zero.
    pub fn from_s21(s21: PolarizedCoefficient) -> Result<Self> {
        Self::new(ZERO_BLOCK, ZERO_BLOCK, s21, ZERO_BLOCK)
    }

    fn coefficients(&self) -> impl Iterator<Item = &Complex64> {
        [&self.s11, &self.s12, &self.s21, &self.s22]
            .into_iter()
            .flat_map(|b| b.iter().flatten())
    }

    /// Outgoing waves `(b1, b2)` for incoming `(a1, a2)`; each wave is `[x, y]`.
    pub fn outgoing(
        &self,
        a1: [Complex64; 2],
        a2: [Complex64; 2],
    ) -> ([Complex64; 2], [Complex64; 2]) {
        let mul = |blk: &PolarizedCoefficient, a: &[Complex64; 2]| {
            [
                blk[0][0] * a[0] + blk[0][1] * a[1],
                blk[1][0] * a[0] + blk[1][1] * a[1],
            ]
        };
        let add = |p: [Complex64; 2], q: [Complex64; 2]| [p[0] + q[0], p[1] + q[1]];
        (
            add(mul(&self.s11, &a1), mul(&self.s12, &a2)),
            add(mul(&self.s21, &a1), mul(&self.s22, &a2)),
        )
    }
}

/// Fraction of incident power transmitted to port 2 for a linearly polarized input:
/// co- plus cross-polarized `|S21|²`.
pub fn transmission_efficiency(s: &ScatteringMatrix, incident: Polarization) -> f64 {
    let col = incident.index();
    s.s21[0][col].norm_sqr() + s.s21[1][col].norm_sqr()
}
