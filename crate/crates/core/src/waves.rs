//! Front tracking and wave-speed estimation for one-sided releases.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::growth::GrowthParams;
use crate::kernels::{discretize, KernelSpec};
use crate::lattice::{DispersalSetting, LatticeConfig, LatticeField, Storage, Trajectory, Wlde};

pub const DEFAULT_LEVEL: f64 = 0.5;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;
pub const GRADIENT_EPS: f64 = 1e-9;
pub const MIN_TAIL_GENERATIONS: usize = 20;

/// Speeds at or below this count as a front that is not advancing.
pub const STALL_SPEED: f64 = 1e-3;
const STEEP_SEARCH: usize = 20;

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", format!("must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// The first-axis row scanned for fronts: the whole line, or the middle row of a plane.
fn scan_row<'a>(values: &'a [f64], config: &LatticeConfig) -> &'a [f64] {
    let [nx, ny] = config.shape().extents();
    let y = if config.dimension() == 2 { ny / 2 } else { 0 };
    &values[y * nx..(y + 1) * nx]
}

/// Fractional site index of the rightmost downward crossing `v_i > level >= v_{i+1}`.
pub fn front_index(row: &[f64], level: f64) -> Option<f64> {
    (0..row.len().saturating_sub(1))
        .rev()
        .find(|&i| row[i] > level && row[i + 1] <= level)
        .map(|i| i as f64 + (row[i] - level) / (row[i] - row[i + 1]))
}

/// Front position of a field in site units (middle row for planes).
pub fn front_position(field: &LatticeField, level: f64) -> Result<Option<f64>> {
    check_level(level)?;
    let [nx, ny] = field.shape().extents();
    let y = if field.shape().dimension() == 2 { ny / 2 } else { 0 };
    Ok(front_index(&field.values()[y * nx..(y + 1) * nx], level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrack {
    pub level: f64,
    pub generations: Vec<usize>,
    /// Fractional site index per stored generation.
    pub indices: Vec<Option<f64>>,
    /// Position `(index - origin) h` in length units.
    pub positions: Vec<Option<f64>>,
}

impl FrontTrack {
    pub fn from_trajectory(trajectory: &Trajectory, level: f64) -> Result<Self> {
        check_level(level)?;
        let config = trajectory.config();
        let origin = config.origin()[0] as f64;
        let h = config.spacing();
        let indices: Vec<Option<f64>> =
            trajectory.rows().map(|(_, row)| front_index(scan_row(row, config), level)).collect();
        Ok(Self {
            level,
            generations: trajectory.generations().to_vec(),
            positions: indices.iter().map(|i| i.map(|i| (i - origin) * h)).collect(),
            indices,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "generation,position,valid")?;
        for (t, p) in self.generations.iter().zip(&self.positions) {
            match p {
                Some(p) => writeln!(out, "{t},{},true", fmt_f64(*p))?,
                None => writeln!(out, "{t},,false")?,
            }
        }
        Ok(())
    }
}

/// Difference-quotient speed `-(v(x, t+1) - v(x, t)) / (v(x+1, t) - v(x, t)) * h`
/// in length units per generation. A site that does not change in time has
/// speed 0; a flat neighborhood (`|dv/dx| < 1e-9`) has none.
pub fn local_speed(trajectory: &Trajectory, site: usize, t: usize) -> Option<f64> {
    let config = trajectory.config();
    let now = scan_row(trajectory.at(t)?, config);
    let next = scan_row(trajectory.at(t + 1)?, config);
    if site + 1 >= now.len() {
        return None;
    }
    let dt = next[site] - now[site];
    if dt == 0.0 {
        return Some(0.0);
    }
    let dx = now[site + 1] - now[site];
    if dx.abs() < GRADIENT_EPS {
        return None;
    }
    Some(-dt / dx * config.spacing())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMethod {
    FrontRegression,
    DifferenceQuotient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    /// Least-squares slope of front position against generation (length units).
    pub c_star: f64,
    /// Median difference-quotient speed at the front site over the fit window.
    pub c_quotient: Option<f64>,
    pub method: SpeedMethod,
    /// Root-mean-square residual of the tail fit.
    pub residual: f64,
    /// First and last generation of the fit window.
    pub window: (usize, usize),
    /// The front vanished (the release collapsed); `c_star` is then 0.
    pub died: bool,
    /// `c(t)` at the steepest site of the front per generation, where defined.
    pub c_series: Vec<(usize, Option<f64>)>,
}

impl SpeedEstimate {
    /// Died, stalled or retreating.
    pub fn is_advancing(&self) -> bool {
        !self.died && self.c_star > STALL_SPEED
    }
}

/// Asymptotic speed from the front positions over the final `tail_fraction` of generations.
pub fn asymptotic_speed(trajectory: &Trajectory, level: f64, tail_fraction: f64) -> Result<SpeedEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::invalid("tail_fraction", format!("must lie in (0, 1], got {tail_fraction}")));
    }
    let track = FrontTrack::from_trajectory(trajectory, level)?;
    let last = trajectory
        .last_generation()
        .ok_or_else(|| Error::invalid("trajectory", "is empty"))?;
    let start = last - (tail_fraction * last as f64).round() as usize;
    if last - start < MIN_TAIL_GENERATIONS {
        return Err(Error::invalid(
            "trajectory",
            format!("tail window [{start}, {last}] is shorter than {MIN_TAIL_GENERATIONS} generations"),
        ));
    }

    let c_series: Vec<(usize, Option<f64>)> = track
        .generations
        .iter()
        .zip(&track.indices)
        .map(|(&t, idx)| {
            let speed = idx.and_then(|i| {
                let row = trajectory.at(t)?;
                local_speed(trajectory, steepest_site(row, i.floor() as usize), t)
            });
            (t, speed)
        })
        .collect();

    let tail: Vec<(f64, Option<f64>)> = track
        .generations
        .iter()
        .zip(&track.positions)
        .filter(|(t, _)| **t >= start)
        .map(|(&t, p)| (t as f64, *p))
        .collect();
    let died = tail.iter().any(|(_, p)| p.is_none());
    if died {
        let final_mean = trajectory.final_field().map_or(0.0, |f| f.mean());
        if final_mean > level {
            return Err(Error::Convergence(
                "front left the domain: the invasion filled the lattice before the fit window".into(),
            ));
        }
        return Ok(SpeedEstimate {
            c_star: 0.0,
            c_quotient: None,
            method: SpeedMethod::FrontRegression,
            residual: 0.0,
            window: (start, last),
            died: true,
            c_series,
        });
    }
    let points: Vec<(f64, f64)> = tail.iter().map(|(t, p)| (*t, p.unwrap_or_default())).collect();
    let (slope, intercept) = least_squares(&points);
    let residual = (points
        .iter()
        .map(|(t, p)| (p - (slope * t + intercept)).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    let mut quotients: Vec<f64> = c_series
        .iter()
        .filter(|(t, _)| *t >= start && *t < last)
        .filter_map(|(_, c)| *c)
        .collect();
    quotients.sort_by(f64::total_cmp);
    let c_quotient = (!quotients.is_empty()).then(|| {
        let m = quotients.len() / 2;
        if quotients.len() % 2 == 1 {
            quotients[m]
        } else {
            0.5 * (quotients[m - 1] + quotients[m])
        }
    });
    Ok(SpeedEstimate {
        c_star: slope,
        c_quotient,
        method: SpeedMethod::FrontRegression,
        residual,
        window: (start, last),
        died: false,
        c_series,
    })
}

/// Site of the largest downward step within `STEEP_SEARCH` cells of `near`.
/// The one-sided quotient is least biased where the profile is straightest.
fn steepest_site(row: &[f64], near: usize) -> usize {
    let lo = near.saturating_sub(STEEP_SEARCH);
    let hi = (near + STEEP_SEARCH).min(row.len().saturating_sub(2));
    (lo..=hi)
        .max_by(|&a, &b| (row[a] - row[a + 1]).total_cmp(&(row[b] - row[b + 1])))
        .unwrap_or(near)
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mp = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stp: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - mp)).sum();
    let slope = if stt > 0.0 { stp / stt } else { 0.0 };
    (slope, mp - slope * mt)
}

/// A one-sided wave experiment on a periodic line. The release is a block of
/// height `amplitude` on sites `[n/8, 3n/8)`, so the right-moving front has
/// half the domain ahead of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveSetup {
    pub s_h: f64,
    pub allee: f64,
    pub delta: f64,
    pub spacing: f64,
    pub sites: usize,
    pub generations: usize,
    pub amplitude: f64,
    pub level: f64,
    pub tail_fraction: f64,
}

impl Default for WaveSetup {
    fn default() -> Self {
        Self {
            s_h: 0.8,
            allee: 0.4,
            delta: 0.3,
            spacing: 0.1,
            sites: 4000,
            generations: 400,
            amplitude: 1.0,
            level: DEFAULT_LEVEL,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        }
    }
}

impl WaveSetup {
    pub fn lattice(&self) -> Result<LatticeConfig> {
        LatticeConfig::line(self.sites, self.spacing)
    }

    pub fn initial_field(&self) -> Result<LatticeField> {
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::invalid("amplitude", format!("must lie in (0, 1], got {}", self.amplitude)));
        }
        let n = self.sites;
        let values = (0..n)
            .map(|i| if i >= n / 8 && i < 3 * n / 8 { self.amplitude } else { 0.0 })
            .collect();
        LatticeField::new(self.lattice()?.shape(), values)
    }
}

#[derive(Debug, Clone)]
pub struct WaveRun {
    pub trajectory: Trajectory,
    pub speed: SpeedEstimate,
}

/// Runs the experiment for a kernel whose scale is in length units.
///
/// The front must stay at least `min(2R, n/8)` sites away from the right edge.
/// Heavy tails are truncated at the half-grid, so the plain `2R` guard would
/// reject every heavy-tailed run.
pub fn run_wave(setup: &WaveSetup, kernel: &KernelSpec) -> Result<WaveRun> {
    check_level(setup.level)?;
    let config = setup.lattice()?;
    let params = GrowthParams::from_allee(setup.s_h, setup.allee)?;
    let lattice_spec = kernel.with_scale_factor(1.0 / setup.spacing);
    let discrete = discretize(&lattice_spec, 1, lattice_spec.default_radius(setup.sites))?;
    let guard = (2 * discrete.radius()).min(setup.sites / 8);
    let mut model = Wlde::new(config, params, DispersalSetting::constant(setup.delta)?, &discrete)?;
    let trajectory = model.simulate(&setup.initial_field()?, setup.generations, Storage::default())?;
    for (t, row) in trajectory.rows() {
        if let Some(i) = front_index(row, setup.level) {
            if i > (setup.sites - guard) as f64 {
                return Err(Error::invalid(
                    "sites",
                    format!("front reached {i:.1} at generation {t}, within {guard} sites of the boundary"),
                ));
            }
        }
    }
    let speed = asymptotic_speed(&trajectory, setup.level, setup.tail_fraction)?;
    Ok(WaveRun { trajectory, speed })
}

/// Kernels compared in the wave experiments, with equal nominal scales in length units.
pub fn reference_kernels() -> Vec<(String, KernelSpec)> {
    vec![
        ("cauchy".into(), KernelSpec::Cauchy { gamma: 1.0 }),
        ("power_law".into(), KernelSpec::PowerLaw { exponent: 2.5, scale: 1.0 }),
        ("gaussian".into(), KernelSpec::Gaussian { sigma: 1.0 }),
        ("uniform".into(), KernelSpec::Uniform { half_width: 1.0 }),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Delta,
    Allee,
    InitialAmplitude,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::Allee => "allee",
            SweepAxis::InitialAmplitude => "initial_amplitude",
        }
    }

    fn apply(&self, setup: &WaveSetup, value: f64) -> WaveSetup {
        let mut s = *setup;
        match self {
            SweepAxis::Delta => s.delta = value,
            SweepAxis::Allee => s.allee = value,
            SweepAxis::InitialAmplitude => s.amplitude = value,
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub kernel: String,
    pub c_star: f64,
    pub died: bool,
    pub residual: f64,
    pub error: Option<String>,
}

/// One asymptotic speed per (axis value, kernel); failures are recorded in the row.
/// Rows are ordered by axis value, then kernel.
pub fn sweep(axis: SweepAxis, values: &[f64], setup: &WaveSetup, kernels: &[(String, KernelSpec)]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("range", "sweep needs at least one axis value"));
    }
    let cells: Vec<(f64, &(String, KernelSpec))> =
        values.iter().flat_map(|&v| kernels.iter().map(move |k| (v, k))).collect();
    Ok(cells
        .par_iter()
        .map(|&(value, (label, spec))| {
            let result = run_wave(&axis.apply(setup, value), spec);
            match result {
                Ok(run) => SweepRow {
                    axis,
                    value,
                    kernel: label.clone(),
                    c_star: run.speed.c_star,
                    died: run.speed.died,
                    residual: run.speed.residual,
                    error: None,
                },
                Err(e) => SweepRow {
                    axis,
                    value,
                    kernel: label.clone(),
                    c_star: f64::NAN,
                    died: false,
                    residual: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "axis,value,kernel,c_star,died,residual,error")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.axis.name(),
            fmt_f64(r.value),
            r.kernel,
            fmt_f64(r.c_star),
            r.died,
            fmt_f64(r.residual),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    Ok(())
}
