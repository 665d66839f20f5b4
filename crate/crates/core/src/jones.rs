//! Jones calculus for fully polarized plane waves.
//!
//! A wave is a two-component complex [`PolarizationState`]; a linear device is a
//! 2×2 complex [`JonesOperator`]. Angles cross the API in degrees and are
//! converted to radians once, inside [`RotationAngle`].
//!
//! Rotated devices follow the `R(θ)·M·R(θ)ᵀ` convention. Under this convention
//! a quarter-wave / birefringent / quarter-wave stack rotates the field by
//! `+δ/2` when the wave meets the +45° plate first; listing the −45° plate first
//! gives the opposite handedness (see [`crate::metasurface::rotator_operator`]).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{ensure_finite, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Orientation angle in degrees, kept in the canonical range (−180, 180].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct RotationAngle(f64);

impl RotationAngle {
    pub const ZERO: RotationAngle = RotationAngle(0.0);

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        ensure_finite(degrees, "rotation angle")?;
        Ok(RotationAngle(canonical_degrees(degrees)))
    }

    pub fn from_radians(radians: f64) -> Result<Self> {
        Self::from_degrees(ensure_finite(radians, "rotation angle")?.to_degrees())
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// Smallest angle between two linear polarization axes, in [0, 90] degrees.
    ///
    /// Dipole axes are undirected, so orientations 180° apart are the same axis.
    pub fn axis_separation(self, other: RotationAngle) -> f64 {
        fold_axis_degrees(self.0 - other.0)
    }
}

impl fmt::Display for RotationAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

impl Add for RotationAngle {
    type Output = RotationAngle;
    fn add(self, rhs: Self) -> Self {
        RotationAngle(canonical_degrees(self.0 + rhs.0))
    }
}

impl Sub for RotationAngle {
    type Output = RotationAngle;
    fn sub(self, rhs: Self) -> Self {
        RotationAngle(canonical_degrees(self.0 - rhs.0))
    }
}

impl Neg for RotationAngle {
    type Output = RotationAngle;
    fn neg(self) -> Self {
        RotationAngle(canonical_degrees(-self.0))
    }
}

fn canonical_degrees(degrees: f64) -> f64 {
    let r = degrees.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Folds an orientation difference into [0, 90] degrees.
pub fn fold_axis_degrees(delta: f64) -> f64 {
    let r = delta.rem_euclid(180.0);
    if r > 90.0 {
        180.0 - r
    } else {
        r
    }
}

/// Jones vector of a plane wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState {
    pub ex: Complex64,
    pub ey: Complex64,
}

impl PolarizationState {
    pub fn new(ex: Complex64, ey: Complex64) -> Result<Self> {
        if !(ex.is_finite() && ey.is_finite()) {
            return Err(Error::NonFinite("polarization state"));
        }
        Ok(PolarizationState { ex, ey })
    }

    /// Unit-intensity linear polarization along `angle`.
    pub fn linear(angle: RotationAngle) -> Self {
        let (s, c) = angle.radians().sin_cos();
        PolarizationState {
            ex: Complex64::new(c, 0.0),
            ey: Complex64::new(s, 0.0),
        }
    }

    pub fn intensity(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    /// Returns `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let i = self.intensity();
        if i > 0.0 {
            let k = 1.0 / i.sqrt();
            Some(self.scale(Complex64::new(k, 0.0)))
        } else {
            None
        }
    }

    pub fn scale(&self, k: Complex64) -> Self {
        PolarizationState {
            ex: self.ex * k,
            ey: self.ey * k,
        }
    }

    /// Orientation of the polarization ellipse's major axis.
    pub fn major_axis(&self) -> RotationAngle {
        let cross = 2.0 * (self.ex * self.ey.conj()).re;
        let diff = self.ex.norm_sqr() - self.ey.norm_sqr();
        let psi = 0.5 * cross.atan2(diff);
        RotationAngle(canonical_degrees(psi.to_degrees()))
    }

    /// Complex amplitude coupled into an ideal linear antenna along `angle`.
    pub fn project(&self, angle: RotationAngle) -> Complex64 {
        let (s, c) = angle.radians().sin_cos();
        self.ex * c + self.ey * s
    }
}

impl Add for PolarizationState {
    type Output = PolarizationState;
    fn add(self, rhs: Self) -> Self {
        PolarizationState {
            ex: self.ex + rhs.ex,
            ey: self.ey + rhs.ey,
        }
    }
}

/// 2×2 complex matrix acting on a [`PolarizationState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesOperator {
    m: [[Complex64; 2]; 2],
}

impl JonesOperator {
    pub const IDENTITY: JonesOperator = JonesOperator {
        m: [[ONE, ZERO], [ZERO, ONE]],
    };

    pub fn new(m: [[Complex64; 2]; 2]) -> Result<Self> {
        if m.iter().flatten().all(|z| z.is_finite()) {
            Ok(JonesOperator { m })
        } else {
            Err(Error::NonFinite("Jones operator"))
        }
    }

    pub(crate) fn from_parts(m: [[Complex64; 2]; 2]) -> Self {
        JonesOperator { m }
    }

    pub fn diagonal(a: Complex64, b: Complex64) -> Result<Self> {
        Self::new([[a, ZERO], [ZERO, b]])
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.m[row][col]
    }

    pub fn transpose(&self) -> Self {
        let m = self.m;
        JonesOperator {
            m: [[m[0][0], m[1][0]], [m[0][1], m[1][1]]],
        }
    }

    pub fn adjoint(&self) -> Self {
        let m = self.m;
        JonesOperator {
            m: [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ],
        }
    }

    pub fn scale(&self, k: Complex64) -> Self {
        let mut m = self.m;
        m.iter_mut().flatten().for_each(|z| *z *= k);
        JonesOperator { m }
    }

    pub fn determinant(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, j: &PolarizationState) -> PolarizationState {
        PolarizationState {
            ex: self.m[0][0] * j.ex + self.m[0][1] * j.ey,
            ey: self.m[1][0] * j.ex + self.m[1][1] * j.ey,
        }
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> (f64, f64) {
        // Eigenvalues of the Hermitian AᴴA.
        let h = self.adjoint() * *self;
        let a = h.m[0][0].re;
        let d = h.m[1][1].re;
        let b = h.m[0][1].norm_sqr();
        let half_tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b).sqrt();
        let hi = (half_tr + disc).max(0.0).sqrt();
        let lo = (half_tr - disc).max(0.0).sqrt();
        (hi, lo)
    }

    pub fn frobenius_distance(&self, other: &JonesOperator) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius distance to `other` after removing the best-fit global phase.
    ///
    /// Returns `(distance, phase)` where `phase` minimizes
    /// `‖self − e^{jφ}·other‖_F`.
    pub fn distance_up_to_phase(&self, other: &JonesOperator) -> (f64, f64) {
        let overlap: Complex64 = self
            .m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| b.conj() * a)
            .sum();
        let phase = if overlap.norm() > 0.0 {
            overlap.arg()
        } else {
            0.0
        };
        let aligned = other.scale(Complex64::from_polar(1.0, phase));
        (self.frobenius_distance(&aligned), phase)
    }
}

impl Mul for JonesOperator {
    type Output = JonesOperator;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.m, rhs.m);
        JonesOperator {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
        }
    }
}

/// `R(θ) = [[cosθ, −sinθ], [sinθ, cosθ]]`.
pub fn rotation_matrix(theta: RotationAngle) -> JonesOperator {
    let (s, c) = theta.radians().sin_cos();
    JonesOperator {
        m: [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ],
    }
}

/// Device `m` rotated counterclockwise by `theta`: `R(θ)·M·R(θ)ᵀ`.
pub fn rotate_operator(m: &JonesOperator, theta: RotationAngle) -> JonesOperator {
    let r = rotation_matrix(theta);
    r * *m * r.transpose()
}

pub fn apply(m: &JonesOperator, j: &PolarizationState) -> PolarizationState {
    m.apply(j)
}

/// Composes devices in the order the wave meets them: `ops[0]` acts first, so
/// the result is `ops[n-1]·…·ops[1]·ops[0]`.
pub fn cascade(ops: &[JonesOperator]) -> Result<JonesOperator> {
    let (first, rest) = ops.split_first().ok_or(Error::EmptyCascade)?;
    Ok(rest.iter().fold(*first, |acc, op| *op * acc))
}

pub fn intensity(j: &PolarizationState) -> f64 {
    j.intensity()
}
