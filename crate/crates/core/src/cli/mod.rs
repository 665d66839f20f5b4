//! Experiment commands behind the `polarlink` binary.

mod scenario;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::channel::{dbm_to_mw, range_extension, received_power, LinkReport, LinkScenario};
use crate::controller::{exhaustive_heatmap, link_probe, optimize_link, Heatmap, SweepTrace};
use crate::error::{Error, Result};
use crate::estimator::{estimate_rotation, EstimateReport};
use crate::metasurface::{BiasSetting, SurfaceMode};

pub use scenario::{BypassSpec, Scenario, ScenarioFile, DEFAULT_SEED};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Transmissive,
    Reflective,
    Heatmap,
    Estimate,
    FrequencySweep,
    PowerSweep,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: Command,
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// Exhaustive-sweep voltage step; 1 V when unset.
    pub step: Option<f64>,
}

/// Rounds to 6 significant digits.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

pub fn fmt6(x: f64) -> String {
    round6(x).to_string()
}

/// Runs one command and returns the files it wrote.
pub fn run(manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::from_path(&manifest.scenario, manifest.seed)?;
    let step = manifest.step.unwrap_or(1.0);
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!("--step {step} must be > 0")));
    }
    fs::create_dir_all(&manifest.out)?;
    let out = manifest.out.as_path();
    match manifest.command {
        Command::Transmissive => run_comparison(&scenario, SurfaceMode::Transmissive, step, out),
        Command::Reflective => run_comparison(&scenario, SurfaceMode::Reflective, step, out),
        Command::Heatmap => run_heatmap(&scenario, step, out),
        Command::Estimate => run_estimate(&scenario, out),
        Command::FrequencySweep => run_frequency_sweep(&scenario, out),
        Command::PowerSweep => run_power_sweep(&scenario, out),
    }
}

fn tag(distance: f64) -> String {
    format!("{}mm", (distance * 1000.0).round() as i64)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn bias_json(b: BiasSetting) -> Value {
    json!({ "vx": round6(b.vx), "vy": round6(b.vy) })
}

fn report_json(r: &LinkReport) -> Value {
    json!({
        "rx_power_dbm": round6(r.rx_power_dbm),
        "expected_power_dbm": round6(r.expected_power_dbm),
        "snr_db": round6(r.snr_db),
        "capacity_bits_per_s_per_hz": round6(r.capacity_bits_per_s_per_hz),
        "mismatch_deg": round6(r.mismatch_deg),
    })
}

fn with_surface(scenario: &Scenario, mode: Option<SurfaceMode>) -> Result<Scenario> {
    let mut s = scenario.clone();
    let surface = s.base.surface.as_mut().ok_or(Error::NoSurface)?;
    if let Some(mode) = mode {
        surface.mode = mode;
    }
    Ok(s)
}

struct Comparison {
    distance: f64,
    link: LinkScenario,
    baseline: LinkReport,
    optimized: LinkReport,
    trace: SweepTrace,
    spread_db: f64,
}

/// Baseline without surface against the coarse-to-fine optimum, per distance.
pub fn run_comparison(
    scenario: &Scenario,
    mode: SurfaceMode,
    step: f64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let scenario = with_surface(scenario, Some(mode))?;
    let results = scenario
        .distances()
        .par_iter()
        .map(|&d| {
            let link = scenario.link_at(d);
            let baseline = received_power(&link.without_surface(), None)?;
            let (trace, optimized) = optimize_link(&link, &scenario.sweep)?;
            let (_, heatmap) = exhaustive_heatmap(&mut link_probe(&link), step, &scenario.sweep)?;
            Ok(Comparison {
                distance: d,
                link,
                baseline,
                optimized,
                trace,
                spread_db: heatmap.spread_db(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let bandwidth = scenario.bandwidth_hz();
    let mut written = Vec::new();
    let mut rows = Vec::new();
    for c in &results {
        let path = out.join(format!("trace_{}.csv", tag(c.distance)));
        c.trace
            .write_csv(BufWriter::new(File::create(&path)?), fmt6)?;
        written.push(path);
        let gain = c.optimized.rx_power_dbm - c.baseline.rx_power_dbm;
        let cap_gain =
            c.optimized.capacity_bits_per_s_per_hz - c.baseline.capacity_bits_per_s_per_hz;
        rows.push(json!({
            "distance_m": round6(c.distance),
            "bypass_fraction": round6(c.link.bypass_fraction),
            "baseline": report_json(&c.baseline),
            "optimized": report_json(&c.optimized),
            "best_bias": bias_json(c.trace.best_bias()),
            "probe_calls": c.trace.entries.len(),
            "sweep_time_s": round6(c.trace.total_time_s),
            "gain_db": round6(gain),
            "range_extension": round6(range_extension(gain)),
            "capacity_gain_bits_per_s_per_hz": round6(cap_gain),
            "capacity_gain_kbps": round6(cap_gain * bandwidth / 1e3),
            "bias_spread_db": round6(c.spread_db),
        }));
    }
    let path = out.join("comparison.json");
    write_json(
        &path,
        &json!({
            "schema": SCHEMA_VERSION,
            "mode": mode,
            "seed": scenario.base.rng_seed,
            "bandwidth_hz": round6(bandwidth),
            "results": rows,
        }),
    )?;
    written.push(path);
    Ok(written)
}

/// Dense bias heatmap per distance plus the estimated rotation range there.
pub fn run_heatmap(scenario: &Scenario, step: f64, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = with_surface(scenario, None)?;
    let results = scenario
        .distances()
        .par_iter()
        .map(|&d| {
            let link = scenario.link_at(d);
            let (_, heatmap) = exhaustive_heatmap(&mut link_probe(&link), step, &scenario.sweep)?;
            let estimate = estimate_rotation(&link, &scenario.estimator)?;
            Ok((d, link.bypass_fraction, heatmap, estimate))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut written = Vec::new();
    let mut rows = Vec::new();
    for (d, bypass, heatmap, estimate) in results {
        let rounded = Heatmap {
            power_dbm: heatmap
                .power_dbm
                .iter()
                .map(|r| r.iter().map(|&p| round6(p)).collect())
                .collect(),
            ..heatmap
        };
        let file = format!("heatmap_{}.csv", tag(d));
        let path = out.join(&file);
        rounded.write_csv(BufWriter::new(File::create(&path)?), fmt6)?;
        written.push(path);
        let (max, at) = rounded.max();
        rows.push(json!({
            "distance_m": round6(d),
            "file": file,
            "bypass_fraction": round6(bypass),
            "max_power_dbm": max,
            "max_bias": bias_json(at),
            "min_power_dbm": rounded.min(),
            "theta_min_deg": round6(estimate.theta_min_rot),
            "theta_max_deg": round6(estimate.theta_max_rot),
        }));
    }
    let path = out.join("heatmap_summary.json");
    write_json(
        &path,
        &json!({
            "schema": SCHEMA_VERSION,
            "seed": scenario.base.rng_seed,
            "step_v": round6(step),
            "distances": rows,
        }),
    )?;
    written.push(path);
    Ok(written)
}

pub fn run_estimate(scenario: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = with_surface(scenario, None)?;
    let link = scenario.link_at(scenario.base.tx_rx_distance);
    let e = EstimateReport::from(&estimate_rotation(&link, &scenario.estimator)?);
    let path = out.join("estimate.json");
    write_json(
        &path,
        &json!({
            "schema": SCHEMA_VERSION,
            "theta0_deg": round6(e.theta0_deg),
            "theta_min_deg": round6(e.theta_min_deg),
            "theta_max_deg": round6(e.theta_max_deg),
            "v_min": bias_json(e.v_min),
            "v_max": bias_json(e.v_max),
        }),
    )?;
    Ok(vec![path])
}

const ISM_BAND_HZ: (f64, f64) = (2.4e9, 2.5e9);

pub fn run_frequency_sweep(scenario: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = with_surface(scenario, None)?;
    let freqs = scenario.frequencies();
    for &f in &freqs {
        if !(ISM_BAND_HZ.0 - 1.0..=ISM_BAND_HZ.1 + 1.0).contains(&f) {
            eprintln!("warning: {f} Hz is outside the 2.4–2.5 GHz band");
        }
    }
    let rows = freqs
        .par_iter()
        .map(|&f| {
            let link = LinkScenario {
                frequency: f,
                ..scenario.link_at(scenario.base.tx_rx_distance)
            };
            let baseline = received_power(&link.without_surface(), None)?;
            let (_, optimized) = optimize_link(&link, &scenario.sweep)?;
            let loss = link
                .surface
                .as_ref()
                .map_or(0.0, |s| s.insertion_loss_db_at(f));
            Ok((f, loss, baseline, optimized))
        })
        .collect::<Result<Vec<_>>>()?;

    let path = out.join("frequency_sweep.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record([
        "frequency_hz",
        "insertion_loss_db",
        "baseline_dbm",
        "surface_dbm",
        "improvement_db",
    ])?;
    for (f, loss, b, o) in rows {
        w.write_record([
            fmt6(f),
            fmt6(loss),
            fmt6(b.rx_power_dbm),
            fmt6(o.rx_power_dbm),
            fmt6(o.rx_power_dbm - b.rx_power_dbm),
        ])?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Where the surface starts to help, scanning transmit powers upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossover {
    pub crossover_dbm: Option<f64>,
    pub crossover_mw: Option<f64>,
    pub helps_at_all_powers: bool,
    pub never_helps: bool,
}

/// First upward zero crossing of `gain` over ascending `powers`, linearly
/// interpolated in dBm.
pub fn find_crossover(powers_dbm: &[f64], gain: &[f64]) -> Crossover {
    let helps: Vec<bool> = gain.iter().map(|&g| g > 0.0).collect();
    let mut crossover = None;
    for i in 1..powers_dbm.len() {
        if helps[i] && !helps[i - 1] {
            let (p0, p1, g0, g1) = (powers_dbm[i - 1], powers_dbm[i], gain[i - 1], gain[i]);
            crossover = Some(p0 + (p1 - p0) * (0.0 - g0) / (g1 - g0));
            break;
        }
    }
    Crossover {
        crossover_dbm: crossover,
        crossover_mw: crossover.map(dbm_to_mw),
        helps_at_all_powers: helps.iter().all(|&h| h),
        never_helps: helps.iter().all(|&h| !h),
    }
}

pub fn run_power_sweep(scenario: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = with_surface(scenario, None)?;
    let mut powers = scenario.tx_powers();
    powers.sort_by(f64::total_cmp);
    let link = scenario.link_at(scenario.base.tx_rx_distance);
    let rows = powers
        .par_iter()
        .map(|&p| {
            let at = link.with_tx_power(p);
            let baseline = received_power(&at.without_surface(), None)?;
            let (trace, optimized) = optimize_link(&at, &scenario.sweep)?;
            Ok((p, baseline, optimized, trace.best_bias()))
        })
        .collect::<Result<Vec<_>>>()?;

    let path = out.join("power_sweep.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record([
        "tx_power_dbm",
        "tx_power_mw",
        "baseline_dbm",
        "surface_dbm",
        "baseline_capacity",
        "surface_capacity",
        "capacity_gain",
        "vx",
        "vy",
    ])?;
    let mut gains = Vec::new();
    for (p, b, o, bias) in &rows {
        let gain = o.capacity_bits_per_s_per_hz - b.capacity_bits_per_s_per_hz;
        gains.push(round6(gain));
        w.write_record([
            fmt6(*p),
            fmt6(dbm_to_mw(*p)),
            fmt6(b.rx_power_dbm),
            fmt6(o.rx_power_dbm),
            fmt6(b.capacity_bits_per_s_per_hz),
            fmt6(o.capacity_bits_per_s_per_hz),
            fmt6(gain),
            fmt6(bias.vx),
            fmt6(bias.vy),
        ])?;
    }
    w.flush()?;

    let c = find_crossover(&powers, &gains);
    let summary = out.join("power_sweep_summary.json");
    write_json(
        &summary,
        &json!({
            "schema": SCHEMA_VERSION,
            "seed": scenario.base.rng_seed,
            "crossover_dbm": c.crossover_dbm.map(round6),
            "crossover_mw": c.crossover_mw.map(round6),
            "helps_at_all_powers": c.helps_at_all_powers,
            "never_helps": c.never_helps,
        }),
    )?;
    Ok(vec![path, summary])
}
