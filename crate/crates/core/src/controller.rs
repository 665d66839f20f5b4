//! Bias-voltage search: the coarse-to-fine grid sweep, an exhaustive oracle,
//! and the settle-time model of the bias supply.
//!
//! Each coarse-to-fine iteration evaluates a T×T grid
//! `V(τ) = V_lo + (τ−1)(V_hi − V_lo)/T`, τ = 1..T, on both axes (y outer, x
//! inner). The next window is `[V_best − W/T, V_best]` per axis, where `W` is
//! the current window width and `V_best` the strongest reading so far. The
//! window trails the optimum, so refinement is biased toward lower voltages;
//! [`WindowRule::Centered`] is the symmetric alternative.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{measure, received_power, LinkReport, LinkScenario};
use crate::error::{ensure_finite, Error, Result};
use crate::metasurface::{grid_len, BiasSetting};

/// Anything that turns a bias state into a power reading (dBm).
pub trait MeasurementProbe {
    fn measure(&mut self, bias: BiasSetting) -> std::result::Result<f64, String>;
}

impl<F, E> MeasurementProbe for F
where
    F: FnMut(BiasSetting) -> std::result::Result<f64, E>,
    E: fmt::Display,
{
    fn measure(&mut self, bias: BiasSetting) -> std::result::Result<f64, String> {
        self(bias).map_err(|e| e.to_string())
    }
}

/// Wraps an infallible function as a probe.
pub fn probe_fn(mut f: impl FnMut(BiasSetting) -> f64) -> impl MeasurementProbe {
    move |b| Ok::<f64, String>(f(b))
}

/// Reads the scenario's receiver at each bias.
pub fn link_probe(s: &LinkScenario) -> impl MeasurementProbe + '_ {
    move |b| measure(s, Some(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowRule {
    /// `[best − W/T, best]`.
    #[default]
    Trailing,
    /// `[best − W/(2T), best + W/(2T)]`.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub n_iterations: usize,
    pub steps_per_axis: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub settle_time_s: f64,
    pub window: WindowRule,
    /// Readings are attributed to the state this many steps later than the one
    /// that produced them (0 = ideal synchronization).
    pub attribution_lag: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_iterations: 2,
            steps_per_axis: 5,
            v_min: BiasSetting::MIN_VOLTS,
            v_max: BiasSetting::MAX_VOLTS,
            settle_time_s: 0.02,
            window: WindowRule::Trailing,
            attribution_lag: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations < 1 {
            return Err(Error::invalid("n_iterations", "must be ≥ 1"));
        }
        if self.steps_per_axis < 2 {
            return Err(Error::invalid("steps_per_axis", "must be ≥ 2"));
        }
        let lo = ensure_finite(self.v_min, "v_min")?;
        let hi = ensure_finite(self.v_max, "v_max")?;
        if lo < BiasSetting::MIN_VOLTS || hi > BiasSetting::MAX_VOLTS || lo >= hi {
            return Err(Error::invalid(
                "voltage range",
                format!("[{lo}, {hi}] V must be a non-empty sub-range of [0, 30] V"),
            ));
        }
        let settle = ensure_finite(self.settle_time_s, "settle_time_s")?;
        if settle <= 0.0 {
            return Err(Error::invalid("settle_time_s", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub bias: BiasSetting,
    pub power_dbm: f64,
    /// Simulated time at which the reading completes.
    pub t_s: f64,
}

/// Per-axis voltage window searched in one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepWindow {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepTrace {
    pub entries: Vec<TraceEntry>,
    pub best: Option<BiasSetting>,
    pub best_power_dbm: f64,
    pub total_time_s: f64,
    /// Windows of the coarse-to-fine iterations; empty for exhaustive sweeps.
    pub windows: Vec<SweepWindow>,
}

impl SweepTrace {
    fn new() -> Self {
        SweepTrace {
            best_power_dbm: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    /// Best bias; only `None` for an empty trace.
    pub fn best_bias(&self) -> BiasSetting {
        self.best.expect("non-empty sweep")
    }

    /// Entry with the lowest reading, first in scan order on ties.
    pub fn weakest(&self) -> Option<&TraceEntry> {
        self.entries
            .iter()
            .fold(None, |acc: Option<&TraceEntry>, e| match acc {
                Some(a) if a.power_dbm <= e.power_dbm => Some(a),
                _ => Some(e),
            })
    }

    /// CSV columns `index,vx,vy,power_dbm,t_s`.
    pub fn write_csv<W: Write>(&self, writer: W, fmt: impl Fn(f64) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "vx", "vy", "power_dbm", "t_s"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([
                i.to_string(),
                fmt(e.bias.vx),
                fmt(e.bias.vy),
                fmt(e.power_dbm),
                fmt(e.t_s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the probe over a sequence of states, applying attribution lag and
/// tracking the first-encountered maximum.
struct Recorder<'a, P: MeasurementProbe> {
    probe: &'a mut P,
    settle: f64,
    lag: usize,
    readings: Vec<f64>,
    trace: SweepTrace,
}

impl<'a, P: MeasurementProbe> Recorder<'a, P> {
    fn new(probe: &'a mut P, settle: f64, lag: usize) -> Self {
        Recorder {
            probe,
            settle,
            lag,
            readings: Vec::new(),
            trace: SweepTrace::new(),
        }
    }

    fn step(&mut self, bias: BiasSetting) -> Result<()> {
        let reading = match self.probe.measure(bias) {
            Ok(p) if p.is_finite() => p,
            Ok(p) => return Err(self.fail(format!("non-finite reading {p} at {bias:?}"))),
            Err(e) => return Err(self.fail(e)),
        };
        self.readings.push(reading);
        let k = self.readings.len() - 1;
        let power = self.readings[k.saturating_sub(self.lag)];
        let t_s = (k + 1) as f64 * self.settle;
        self.trace.entries.push(TraceEntry {
            bias,
            power_dbm: power,
            t_s,
        });
        self.trace.total_time_s = t_s;
        if power > self.trace.best_power_dbm {
            self.trace.best_power_dbm = power;
            self.trace.best = Some(bias);
        }
        Ok(())
    }

    fn fail(&mut self, message: String) -> Error {
        Error::Probe {
            message,
            partial: Box::new(std::mem::take(&mut self.trace)),
        }
    }
}

pub fn coarse_to_fine_sweep<P: MeasurementProbe>(
    probe: &mut P,
    cfg: &SweepConfig,
) -> Result<SweepTrace> {
    cfg.validate()?;
    let t = cfg.steps_per_axis;
    let mut rec = Recorder::new(probe, cfg.settle_time_s, cfg.attribution_lag);
    let mut window = SweepWindow {
        x: (cfg.v_min, cfg.v_max),
        y: (cfg.v_min, cfg.v_max),
    };
    for _ in 0..cfg.n_iterations {
        rec.trace.windows.push(window);
        let step_x = (window.x.1 - window.x.0) / t as f64;
        let step_y = (window.y.1 - window.y.0) / t as f64;
        for ty in 0..t {
            for tx in 0..t {
                let bias = BiasSetting::clamped(
                    window.x.0 + tx as f64 * step_x,
                    window.y.0 + ty as f64 * step_y,
                );
                rec.step(bias)?;
            }
        }
        let best = rec.trace.best_bias();
        window = SweepWindow {
            x: next_window(best.vx, window.x, t, cfg),
            y: next_window(best.vy, window.y, t, cfg),
        };
    }
    Ok(rec.trace)
}

fn next_window(best: f64, (lo, hi): (f64, f64), t: usize, cfg: &SweepConfig) -> (f64, f64) {
    let w = hi - lo;
    let (a, b) = match cfg.window {
        WindowRule::Trailing => (best - w / t as f64, best),
        WindowRule::Centered => (best - w / (2 * t) as f64, best + w / (2 * t) as f64),
    };
    (a.clamp(cfg.v_min, cfg.v_max), b.clamp(cfg.v_min, cfg.v_max))
}

/// Voltages of a uniform grid with `step` spacing over `[v_min, v_max]`.
pub fn voltage_grid(v_min: f64, v_max: f64, step: f64) -> Vec<f64> {
    (0..grid_len(v_min, v_max, step))
        .map(|i| (v_min + i as f64 * step).min(v_max))
        .collect()
}

/// Evaluates every point of the square grid at `step` volts over the
/// configured range, y outer and x inner.
pub fn exhaustive_sweep<P: MeasurementProbe>(
    probe: &mut P,
    step: f64,
    cfg: &SweepConfig,
) -> Result<SweepTrace> {
    Ok(exhaustive_heatmap(probe, step, cfg)?.0)
}

pub fn exhaustive_heatmap<P: MeasurementProbe>(
    probe: &mut P,
    step: f64,
    cfg: &SweepConfig,
) -> Result<(SweepTrace, Heatmap)> {
    cfg.validate()?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(
            "voltage step",
            format!("{step} V must be > 0"),
        ));
    }
    let grid = voltage_grid(cfg.v_min, cfg.v_max, step);
    let mut rec = Recorder::new(probe, cfg.settle_time_s, cfg.attribution_lag);
    for &vy in &grid {
        for &vx in &grid {
            rec.step(BiasSetting::clamped(vx, vy))?;
        }
    }
    let n = grid.len();
    let power = rec
        .trace
        .entries
        .chunks(n)
        .map(|row| row.iter().map(|e| e.power_dbm).collect())
        .collect();
    let heatmap = Heatmap {
        vx: grid.clone(),
        vy: grid,
        power_dbm: power,
    };
    Ok((rec.trace, heatmap))
}

/// Dense power grid indexed `[vy][vx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub power_dbm: Vec<Vec<f64>>,
}

impl Heatmap {
    /// Largest value and its bias, first in scan order on ties.
    pub fn max(&self) -> (f64, BiasSetting) {
        let mut best = (
            f64::NEG_INFINITY,
            BiasSetting::clamped(self.vx[0], self.vy[0]),
        );
        for (iy, row) in self.power_dbm.iter().enumerate() {
            for (ix, &p) in row.iter().enumerate() {
                if p > best.0 {
                    best = (p, BiasSetting::clamped(self.vx[ix], self.vy[iy]));
                }
            }
        }
        best
    }

    pub fn min(&self) -> f64 {
        self.power_dbm
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn spread_db(&self) -> f64 {
        self.max().0 - self.min()
    }

    /// Header `vy\vx,<vx...>`, then one row per vy with the vy value first.
    pub fn write_csv<W: Write>(&self, writer: W, fmt: impl Fn(f64) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header = std::iter::once("vy\\vx".to_string()).chain(self.vx.iter().map(|&v| fmt(v)));
        w.write_record(header)?;
        for (vy, row) in self.vy.iter().zip(&self.power_dbm) {
            w.write_record(std::iter::once(fmt(*vy)).chain(row.iter().map(|&p| fmt(p))))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut rows = rdr.records();
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid("heatmap csv", format!("bad number {s:?}")))
        };
        let header = rows
            .next()
            .ok_or_else(|| Error::invalid("heatmap csv", "empty file"))??;
        let vx = header
            .iter()
            .skip(1)
            .map(parse)
            .collect::<Result<Vec<_>>>()?;
        let (mut vy, mut power_dbm) = (Vec::new(), Vec::new());
        for rec in rows {
            let rec = rec?;
            let mut it = rec.iter();
            vy.push(parse(it.next().unwrap_or(""))?);
            let row = it.map(parse).collect::<Result<Vec<_>>>()?;
            if row.len() != vx.len() {
                return Err(Error::invalid("heatmap csv", "ragged row"));
            }
            power_dbm.push(row);
        }
        Ok(Heatmap { vx, vy, power_dbm })
    }
}

/// Runs the coarse-to-fine sweep against the scenario's receiver and reports
/// the link at the chosen bias.
pub fn optimize_link(s: &LinkScenario, cfg: &SweepConfig) -> Result<(SweepTrace, LinkReport)> {
    if s.surface.is_none() {
        return Err(Error::NoSurface);
    }
    s.validate()?;
    let mut probe = link_probe(s);
    let trace = coarse_to_fine_sweep(&mut probe, cfg)?;
    let report = received_power(s, Some(trace.best_bias()))?;
    Ok((trace, report))
}
