//! Bias-voltage → rotation lookup table with clamped bilinear interpolation.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Bias voltages of the X and Y phase-shifter layers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BiasSetting {
    pub vx: f64,
    pub vy: f64,
}

impl BiasSetting {
    /// Supply limits of the bias channels, in volts.
    pub const MIN_VOLTS: f64 = 0.0;
    pub const MAX_VOLTS: f64 = 30.0;

    pub fn new(vx: f64, vy: f64) -> Result<Self> {
        for (name, v) in [("vx", vx), ("vy", vy)] {
            if !v.is_finite() || !(Self::MIN_VOLTS..=Self::MAX_VOLTS).contains(&v) {
                return Err(Error::invalid(
                    if name == "vx" { "bias vx" } else { "bias vy" },
                    format!("{v} V is outside [0, 30] V"),
                ));
            }
        }
        Ok(BiasSetting { vx, vy })
    }

    /// Clamps both channels into the supply range. NaN maps to 0 V.
    pub fn clamped(vx: f64, vy: f64) -> Self {
        let clamp = |v: f64| {
            if v.is_nan() {
                Self::MIN_VOLTS
            } else {
                v.clamp(Self::MIN_VOLTS, Self::MAX_VOLTS)
            }
        };
        BiasSetting {
            vx: clamp(vx),
            vy: clamp(vy),
        }
    }
}

/// Simulated rotation (degrees) of the prototype over its bias grid.
/// Rows are Vy, columns are Vx.
const TABLE1_VOLTS: [f64; 7] = [2.0, 3.0, 4.0, 5.0, 6.0, 10.0, 15.0];
const TABLE1_DEGREES: [[f64; 7]; 7] = [
    [11.6, 26.1, 36.8, 41.0, 44.3, 48.3, 48.7],
    [6.5, 12.4, 26.6, 32.2, 35.2, 38.6, 39.2],
    [23.0, 4.9, 10.9, 17.3, 20.8, 25.0, 25.6],
    [27.0, 9.3, 7.4, 14.0, 18.0, 22.6, 23.2],
    [41.8, 25.0, 7.9, 2.1, 4.2, 10.2, 10.7],
    [45.8, 30.0, 13.7, 7.9, 2.8, 5.1, 5.6],
    [48.2, 33.1, 18.2, 12.9, 7.3, 1.9, 2.0],
];

/// Varactor capacitance span that produces the table's rotation range.
/// Recorded for reference only; the model never converts through capacitance.
pub const CAPACITANCE_RANGE_PF: (f64, f64) = (0.84, 2.41);

#[derive(Debug, Clone, PartialEq)]
pub struct RotationTable {
    vx_grid: Vec<f64>,
    vy_grid: Vec<f64>,
    /// Indexed `[vy][vx]`.
    theta: Vec<Vec<f64>>,
}

impl Default for RotationTable {
    fn default() -> Self {
        Self::prototype()
    }
}

impl RotationTable {
    pub fn new(vx_grid: Vec<f64>, vy_grid: Vec<f64>, theta: Vec<Vec<f64>>) -> Result<Self> {
        check_grid("vx grid", &vx_grid)?;
        check_grid("vy grid", &vy_grid)?;
        if theta.len() != vy_grid.len() || theta.iter().any(|row| row.len() != vx_grid.len()) {
            return Err(Error::invalid(
                "rotation table",
                format!("body must be {}×{} (vy × vx)", vy_grid.len(), vx_grid.len()),
            ));
        }
        if let Some(bad) = theta
            .iter()
            .flatten()
            .find(|t| !t.is_finite() || !(0.0..=90.0).contains(*t))
        {
            return Err(Error::invalid(
                "rotation table",
                format!("entry {bad} is outside [0, 90] degrees"),
            ));
        }
        Ok(RotationTable {
            vx_grid,
            vy_grid,
            theta,
        })
    }

    /// The 7×7 table measured on the 2.4 GHz prototype.
    pub fn prototype() -> Self {
        RotationTable {
            vx_grid: TABLE1_VOLTS.to_vec(),
            vy_grid: TABLE1_VOLTS.to_vec(),
            theta: TABLE1_DEGREES.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn vx_grid(&self) -> &[f64] {
        &self.vx_grid
    }

    pub fn vy_grid(&self) -> &[f64] {
        &self.vy_grid
    }

    /// Entry at grid indices `(ix, iy)`.
    pub fn entry(&self, ix: usize, iy: usize) -> f64 {
        self.theta[iy][ix]
    }

    pub fn min_degrees(&self) -> f64 {
        self.theta
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_degrees(&self) -> f64 {
        self.theta
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation; voltages outside the grid clamp to the nearest edge.
    pub fn rotation_at(&self, vx: f64, vy: f64) -> f64 {
        let (ix, tx) = locate(&self.vx_grid, vx);
        let (iy, ty) = locate(&self.vy_grid, vy);
        let ix1 = (ix + 1).min(self.vx_grid.len() - 1);
        let iy1 = (iy + 1).min(self.vy_grid.len() - 1);
        let t00 = self.theta[iy][ix];
        let t10 = self.theta[iy][ix1];
        let t01 = self.theta[iy1][ix];
        let t11 = self.theta[iy1][ix1];
        let lower = t00 + (t10 - t00) * tx;
        let upper = t01 + (t11 - t01) * tx;
        lower + (upper - lower) * ty
    }

    /// Reads the CSV layout: header row = vx grid (first cell is a label),
    /// first column = vy grid, body = degrees.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            rows.push(record.iter().map(str::to_owned).collect::<Vec<_>>());
        }
        let (header, body) = rows
            .split_first()
            .ok_or_else(|| Error::Config("rotation table CSV is empty".into()))?;
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("rotation table: bad {what} value {s:?}")))
        };
        let vx_grid = header
            .iter()
            .skip(1)
            .map(|s| parse(s, "vx"))
            .collect::<Result<Vec<_>>>()?;
        let mut vy_grid = Vec::with_capacity(body.len());
        let mut theta = Vec::with_capacity(body.len());
        for row in body {
            let (vy, cells) = row
                .split_first()
                .ok_or_else(|| Error::Config("rotation table: empty row".into()))?;
            vy_grid.push(parse(vy, "vy")?);
            theta.push(
                cells
                    .iter()
                    .map(|s| parse(s, "degree"))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::new(vx_grid, vy_grid, theta)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["vy\\vx".to_string()];
        header.extend(self.vx_grid.iter().map(|v| v.to_string()));
        w.write_record(&header)?;
        for (vy, row) in self.vy_grid.iter().zip(&self.theta) {
            let mut rec = vec![vy.to_string()];
            rec.extend(row.iter().map(|t| t.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(name: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(name, "grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(name, "grid must be strictly ascending"));
    }
    Ok(())
}

/// Lower cell index and fractional position of `v` in `grid`, clamped.
fn locate(grid: &[f64], v: f64) -> (usize, f64) {
    let last = grid.len() - 1;
    if last == 0 || v.is_nan() || v <= grid[0] {
        return (0, 0.0);
    }
    if v >= grid[last] {
        return (last, 0.0);
    }
    let i = grid.partition_point(|g| *g <= v) - 1;
    (i, (v - grid[i]) / (grid[i + 1] - grid[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_points_are_exact() {
        let t = RotationTable::prototype();
        for (iy, vy) in TABLE1_VOLTS.iter().enumerate() {
            for (ix, vx) in TABLE1_VOLTS.iter().enumerate() {
                assert_eq!(t.rotation_at(*vx, *vy), TABLE1_DEGREES[iy][ix]);
            }
        }
        assert_eq!(t.min_degrees(), 1.9);
        assert_eq!(t.max_degrees(), 48.7);
    }

    #[test]
    fn interpolation_examples() {
        let t = RotationTable::prototype();
        assert_eq!(t.rotation_at(2.0, 2.0), 11.6);
        assert_eq!(t.rotation_at(15.0, 2.0), 48.7);
        assert_abs_diff_eq!(t.rotation_at(2.5, 2.0), 18.85, epsilon = 1e-12);
        // Centre of the (2..3, 2..3) cell: mean of 11.6, 26.1, 6.5, 12.4.
        assert_abs_diff_eq!(t.rotation_at(2.5, 2.5), 14.15, epsilon = 1e-12);
    }

    #[test]
    fn clamps_outside_grid() {
        let t = RotationTable::prototype();
        assert_eq!(t.rotation_at(0.0, 0.0), 11.6);
        assert_eq!(t.rotation_at(1.2, 2.0), 11.6);
        assert_eq!(t.rotation_at(30.0, 30.0), 2.0);
        assert_eq!(t.rotation_at(30.0, 2.0), 48.7);
        assert_eq!(t.rotation_at(0.0, 15.0), 48.2);
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(RotationTable::new(vec![1.0, 1.0], vec![1.0], vec![vec![0.0, 0.0]]).is_err());
        assert!(RotationTable::new(vec![1.0, 2.0], vec![1.0], vec![vec![0.0]]).is_err());
        assert!(RotationTable::new(vec![1.0], vec![1.0], vec![vec![91.0]]).is_err());
        assert!(RotationTable::new(vec![1.0], vec![1.0], vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = RotationTable::prototype();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = RotationTable::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_errors_name_the_problem() {
        let err = RotationTable::from_csv_reader("x,1,2\n1,abc,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("abc"), "{err}");
    }

    #[test]
    fn bias_validation() {
        assert!(BiasSetting::new(0.0, 30.0).is_ok());
        assert!(BiasSetting::new(-0.1, 3.0).is_err());
        assert!(BiasSetting::new(3.0, 30.5).is_err());
        assert!(BiasSetting::new(f64::NAN, 3.0).is_err());
        assert_eq!(
            BiasSetting::clamped(-6.0, 31.0),
            BiasSetting { vx: 0.0, vy: 30.0 }
        );
    }

    proptest! {
        #[test]
        fn interpolant_bounded_by_cell_corners(vx in 0.0f64..30.0, vy in 0.0f64..30.0) {
            let t = RotationTable::prototype();
            let (ix, _) = locate(t.vx_grid(), vx);
            let (iy, _) = locate(t.vy_grid(), vy);
            let ix1 = (ix + 1).min(6);
            let iy1 = (iy + 1).min(6);
            let corners = [t.entry(ix, iy), t.entry(ix1, iy), t.entry(ix, iy1), t.entry(ix1, iy1)];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = t.rotation_at(vx, vy);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
