//! Release-cost minimization.
//!
//! ACM finds the smallest amplitude whose release invades by the horizon
//! (bisection on the invasion predicate). MCM finds the smallest amplitude at
//! which the spatial outbreak-size curve first turns bimodal (ascending scan,
//! then bisection between the last non-bimodal and the first bimodal point).

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::growth::GrowthParams;
use crate::kernels::{discretize, DiscreteKernel, KernelSpec};
use crate::lattice::{init_field, DispersalSetting, LatticeConfig, ProfileShape, ReleaseProfile, Storage, Trajectory, Wlde};
use crate::outbreak::{outbreak_curves, OutbreakMethod, DEFAULT_EPSILON_FIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvasionPredicate {
    /// Spatial mean of the final field.
    #[default]
    Mean,
    /// Minimum over the central half of the lattice.
    MinInterior,
    /// Value at the origin site.
    Center,
}

/// Whether the final stored field meets `beta` under `predicate`.
pub fn invasion_success(trajectory: &Trajectory, beta: f64, predicate: InvasionPredicate) -> Result<bool> {
    let last = trajectory
        .final_field()
        .ok_or_else(|| Error::invalid("trajectory", "is empty"))?;
    let config = trajectory.config();
    let [nx, ny] = config.shape().extents();
    let values = last.values();
    let score = match predicate {
        InvasionPredicate::Mean => last.mean(),
        InvasionPredicate::MinInterior => {
            let inner = |n: usize, i: usize| n < 4 || (i >= n / 4 && i < n - n / 4);
            let y_active = config.dimension() == 2;
            (0..ny)
                .flat_map(|y| (0..nx).map(move |x| (x, y)))
                .filter(|&(x, y)| inner(nx, x) && (!y_active || inner(ny, y)))
                .map(|(x, y)| values[y * nx + x])
                .fold(f64::INFINITY, f64::min)
        }
        InvasionPredicate::Center => {
            let [ox, oy] = config.origin();
            values[oy * nx + ox]
        }
    };
    Ok(score >= beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Acm,
    Mcm,
}

/// Default ACM half-width grid: 8 log-spaced values on [0.25, 4].
pub fn default_half_widths() -> Vec<f64> {
    (0..8).map(|i| 0.25 * 16f64.powf(i as f64 / 7.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    /// Kernel with its scale in length units.
    pub kernel: KernelSpec,
    pub params: GrowthParams,
    pub delta: f64,
    pub profile: ProfileShape,
    /// Candidate half-widths; the cheapest successful one is reported.
    pub half_widths: Vec<f64>,
    pub a_lo: f64,
    pub a_hi: f64,
    pub beta: f64,
    pub predicate: InvasionPredicate,
    pub sites: usize,
    pub generations: usize,
    pub spacing: f64,
    /// Outbreak sizes for MCM.
    pub ks: Vec<usize>,
    pub tolerance: f64,
    pub step: f64,
    pub method: OutbreakMethod,
    pub epsilon_fix: f64,
}

impl OptimizeConfig {
    /// The comparison setting: `delta = 0.2`, `s_f = 0.2`, `s_h = 0.9`,
    /// `beta = 0.9`, 400 sites of spacing 0.1, 200 generations, `L = 0.5`.
    pub fn comparison(kernel: KernelSpec, profile: ProfileShape) -> Result<Self> {
        Ok(Self {
            kernel,
            params: GrowthParams::new(0.2, 0.9)?,
            delta: 0.2,
            profile,
            half_widths: vec![0.5],
            a_lo: 0.05,
            a_hi: 1.0,
            beta: 0.9,
            predicate: InvasionPredicate::Mean,
            sites: 400,
            generations: 200,
            spacing: 0.1,
            ks: vec![1, 2, 3, 4],
            tolerance: 1e-3,
            step: 5e-3,
            method: OutbreakMethod::Poisson,
            epsilon_fix: DEFAULT_EPSILON_FIX,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_lo > 0.0 && self.a_lo < self.a_hi && self.a_hi <= 1.0) {
            return Err(Error::invalid(
                "OptimizeConfig",
                format!("requires 0 < a_lo < a_hi <= 1, got [{}, {}]", self.a_lo, self.a_hi),
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("OptimizeConfig", format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.tolerance > 0.0 && self.step > 0.0) {
            return Err(Error::invalid("OptimizeConfig", "tolerance and step must be positive"));
        }
        if self.half_widths.is_empty() || self.half_widths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("OptimizeConfig", "half-width grid must hold positive finite values"));
        }
        DispersalSetting::constant(self.delta)?;
        self.kernel.validate(1)?;
        Ok(())
    }

    fn lattice(&self) -> Result<LatticeConfig> {
        LatticeConfig::line(self.sites, self.spacing)
    }

    fn discrete_kernel(&self) -> Result<DiscreteKernel> {
        let spec = self.kernel.with_scale_factor(1.0 / self.spacing);
        discretize(&spec, 1, spec.default_radius(self.sites))
    }
}

/// Reusable simulator for one configuration.
struct Runner<'a> {
    config: &'a OptimizeConfig,
    lattice: LatticeConfig,
    model: Wlde,
    runs: usize,
}

impl<'a> Runner<'a> {
    fn new(config: &'a OptimizeConfig) -> Result<Self> {
        config.validate()?;
        if config.generations == 0 {
            return Err(Error::invalid("OptimizeConfig", "needs at least one generation"));
        }
        let lattice = config.lattice()?;
        let model = Wlde::new(
            lattice,
            config.params,
            DispersalSetting::constant(config.delta)?,
            &config.discrete_kernel()?,
        )?;
        Ok(Self {
            config,
            lattice,
            model,
            runs: 0,
        })
    }

    fn trajectory(&mut self, amplitude: f64, half_width: f64) -> Result<Trajectory> {
        let profile = ReleaseProfile::new(self.config.profile, amplitude, half_width)?;
        let init = init_field(&self.lattice, &profile)?;
        self.runs += 1;
        self.model.simulate(&init, self.config.generations, Storage::default())
    }

    fn invades(&mut self, amplitude: f64, half_width: f64) -> Result<bool> {
        let profile = ReleaseProfile::new(self.config.profile, amplitude, half_width)?;
        let init = init_field(&self.lattice, &profile)?;
        self.runs += 1;
        let traj = self.model.simulate(&init, self.config.generations, Storage::strided(self.config.generations))?;
        invasion_success(&traj, self.config.beta, self.config.predicate)
    }

    /// Mode counts of the outbreak curves for each requested `k`.
    fn mode_counts(&mut self, amplitude: f64, half_width: f64, ks: &[usize]) -> Result<Vec<usize>> {
        let traj = self.trajectory(amplitude, half_width)?;
        let curves = outbreak_curves(&traj, ks, self.config.method, self.config.generations, self.config.epsilon_fix)?;
        Ok(curves.iter().map(|c| c.modality.count).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub amplitude: f64,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfWidthTrial {
    pub half_width: f64,
    pub amplitude: Option<f64>,
    pub cost: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumResult {
    pub criterion: Criterion,
    pub profile: ProfileShape,
    pub k: Option<usize>,
    pub amplitude: f64,
    pub half_width: f64,
    pub cost: f64,
    /// Bisection steps at the chosen half-width.
    pub iterations: usize,
    /// Coarse scan (MCM: mode count per amplitude) at the chosen half-width.
    pub trace: Vec<ScanPoint>,
    pub half_width_trials: Vec<HalfWidthTrial>,
    pub simulations: usize,
}

fn cost_of(shape: ProfileShape, amplitude: f64, half_width: f64) -> Result<f64> {
    Ok(ReleaseProfile::new(shape, amplitude, half_width)?.cost())
}

/// Bisection on `pred` with `pred(lo) = false`, `pred(hi) = true`; returns `(lo, hi, steps)`.
fn bisect<F>(mut lo: f64, mut hi: f64, tolerance: f64, mut pred: F) -> Result<(f64, f64, usize)>
where
    F: FnMut(f64) -> Result<bool>,
{
    let mut steps = 0;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok((lo, hi, steps))
}

struct AcmAtWidth {
    amplitude: f64,
    iterations: usize,
}

fn acm_at_width(runner: &mut Runner, half_width: f64) -> Result<AcmAtWidth> {
    let cfg = runner.config;
    if runner.invades(cfg.a_lo, half_width)? {
        return Err(Error::Bracket(format!(
            "release already invades at a_lo = {} (L = {half_width})",
            cfg.a_lo
        )));
    }
    if !runner.invades(cfg.a_hi, half_width)? {
        return Err(Error::Bracket(format!(
            "release does not invade at a_hi = {} (L = {half_width})",
            cfg.a_hi
        )));
    }
    let (lo, hi, iterations) = bisect(cfg.a_lo, cfg.a_hi, cfg.tolerance, |a| runner.invades(a, half_width))?;
    if !runner.invades(hi, half_width)? || runner.invades(lo, half_width)? {
        return Err(Error::Convergence(format!(
            "invasion does not flip across [{lo}, {hi}] at L = {half_width}"
        )));
    }
    Ok(AcmAtWidth { amplitude: hi, iterations })
}

/// Smallest-cost invading release over the configured half-widths.
pub fn acm_optimize(config: &OptimizeConfig) -> Result<OptimumResult> {
    let mut runner = Runner::new(config)?;
    let mut trials = Vec::new();
    let mut best: Option<(f64, f64, usize)> = None;
    let mut first_error = None;
    for &l in &config.half_widths {
        match acm_at_width(&mut runner, l) {
            Ok(r) => {
                let cost = cost_of(config.profile, r.amplitude, l)?;
                trials.push(HalfWidthTrial {
                    half_width: l,
                    amplitude: Some(r.amplitude),
                    cost: Some(cost),
                    error: None,
                });
                if best.is_none_or(|(_, c, _)| cost < c) {
                    best = Some((l, cost, r.iterations));
                }
            }
            Err(e) => {
                trials.push(HalfWidthTrial {
                    half_width: l,
                    amplitude: None,
                    cost: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((l, cost, iterations)) = best else {
        return Err(first_error.unwrap_or_else(|| Error::Bracket("no half-width succeeded".into())));
    };
    let amplitude = trials
        .iter()
        .find(|t| t.half_width == l)
        .and_then(|t| t.amplitude)
        .unwrap_or(f64::NAN);
    Ok(OptimumResult {
        criterion: Criterion::Acm,
        profile: config.profile,
        k: None,
        amplitude,
        half_width: l,
        cost,
        iterations,
        trace: Vec::new(),
        half_width_trials: trials,
        simulations: runner.runs,
    })
}

struct McmAtWidth {
    amplitude: f64,
    iterations: usize,
    trace: Vec<ScanPoint>,
}

/// Scans one half-width for every `k` at once; returns one outcome per `k`.
fn mcm_at_width(runner: &mut Runner, half_width: f64, ks: &[usize]) -> Result<Vec<Result<McmAtWidth>>> {
    let cfg = runner.config;
    let mut found: Vec<Option<usize>> = vec![None; ks.len()];
    let mut traces: Vec<Vec<ScanPoint>> = vec![Vec::new(); ks.len()];
    let mut amplitudes = Vec::new();
    let mut i = 0usize;
    loop {
        let a = cfg.a_lo + i as f64 * cfg.step;
        if a > cfg.a_hi + 1e-12 {
            break;
        }
        let a = a.min(cfg.a_hi);
        amplitudes.push(a);
        let pending: Vec<usize> = (0..ks.len()).filter(|&j| found[j].is_none()).collect();
        let pending_ks: Vec<usize> = pending.iter().map(|&j| ks[j]).collect();
        let counts = runner.mode_counts(a, half_width, &pending_ks)?;
        for (&j, &count) in pending.iter().zip(&counts) {
            traces[j].push(ScanPoint {
                amplitude: a,
                value: count as i64,
            });
            if count == 2 {
                found[j] = Some(i);
            }
        }
        if found.iter().all(Option::is_some) {
            break;
        }
        i += 1;
    }
    let mut out = Vec::with_capacity(ks.len());
    for (j, &k) in ks.iter().enumerate() {
        let Some(idx) = found[j] else {
            out.push(Err(Error::NotFound(format!(
                "no bimodal outbreak curve for k = {k} on [{}, {}] (L = {half_width})",
                cfg.a_lo, cfg.a_hi
            ))));
            continue;
        };
        let trace = std::mem::take(&mut traces[j]);
        if idx == 0 {
            out.push(Ok(McmAtWidth {
                amplitude: amplitudes[0],
                iterations: 0,
                trace,
            }));
            continue;
        }
        let (_, hi, iterations) = bisect(amplitudes[idx - 1], amplitudes[idx], cfg.tolerance, |a| {
            Ok(runner.mode_counts(a, half_width, &[k])?[0] == 2)
        })?;
        out.push(Ok(McmAtWidth {
            amplitude: hi,
            iterations,
            trace,
        }));
    }
    Ok(out)
}

/// MCM optimum for every configured `k`, sharing one simulation per scanned amplitude.
pub fn mcm_optimize_all(config: &OptimizeConfig) -> Result<Vec<Result<OptimumResult>>> {
    if config.ks.is_empty() {
        return Err(Error::invalid("ks", "MCM needs at least one outbreak size"));
    }
    let mut runner = Runner::new(config)?;
    let mut per_width = Vec::new();
    for &l in &config.half_widths {
        per_width.push((l, mcm_at_width(&mut runner, l, &config.ks)?));
    }
    let runs = runner.runs;
    let mut results = Vec::with_capacity(config.ks.len());
    for (j, &k) in config.ks.iter().enumerate() {
        let mut trials = Vec::new();
        let mut best: Option<(usize, f64)> = None;
        let mut first_error = None;
        for (w, (l, outcomes)) in per_width.iter().enumerate() {
            match &outcomes[j] {
                Ok(r) => {
                    let cost = cost_of(config.profile, r.amplitude, *l)?;
                    trials.push(HalfWidthTrial {
                        half_width: *l,
                        amplitude: Some(r.amplitude),
                        cost: Some(cost),
                        error: None,
                    });
                    if best.is_none_or(|(_, c)| cost < c) {
                        best = Some((w, cost));
                    }
                }
                Err(e) => {
                    trials.push(HalfWidthTrial {
                        half_width: *l,
                        amplitude: None,
                        cost: None,
                        error: Some(e.to_string()),
                    });
                    first_error.get_or_insert_with(|| e.to_string());
                }
            }
        }
        results.push(match best {
            Some((w, cost)) => {
                let (l, outcomes) = &per_width[w];
                let r = outcomes[j].as_ref().expect("best width succeeded");
                Ok(OptimumResult {
                    criterion: Criterion::Mcm,
                    profile: config.profile,
                    k: Some(k),
                    amplitude: r.amplitude,
                    half_width: *l,
                    cost,
                    iterations: r.iterations,
                    trace: r.trace.clone(),
                    half_width_trials: trials,
                    simulations: runs,
                })
            }
            None => Err(Error::NotFound(first_error.unwrap_or_default())),
        });
    }
    Ok(results)
}

/// MCM optimum for the first configured `k`.
pub fn mcm_optimize(config: &OptimizeConfig) -> Result<OptimumResult> {
    let mut single = config.clone();
    single.ks.truncate(1);
    mcm_optimize_all(&single)?.remove(0)
}

/// MCM optimum per release shape under otherwise shared settings, in input order.
pub fn critical_amplitude_by_profile(profiles: &[ProfileShape], config: &OptimizeConfig) -> Result<Vec<OptimumResult>> {
    profiles
        .par_iter()
        .map(|&shape| {
            let mut cfg = config.clone();
            cfg.profile = shape;
            mcm_optimize(&cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub kernel: String,
    pub profile: ProfileShape,
    pub k: usize,
    pub mcm_amplitude: Option<f64>,
    pub mcm_cost: Option<f64>,
    pub mcm_half_width: Option<f64>,
    pub mcm_error: Option<String>,
    pub acm_amplitude: Option<f64>,
    pub acm_cost: Option<f64>,
    pub acm_half_width: Option<f64>,
    pub acm_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

/// MCM (per kernel, profile and `k`) against ACM (per kernel and profile).
/// Cells that fail are recorded and the table is still completed.
pub fn compare_table(
    kernels: &[(String, KernelSpec)],
    profiles: &[ProfileShape],
    base: &OptimizeConfig,
) -> CompareTable {
    let groups: Vec<(&(String, KernelSpec), ProfileShape)> =
        kernels.iter().flat_map(|k| profiles.iter().map(move |&p| (k, p))).collect();
    let rows = groups
        .par_iter()
        .map(|((label, spec), profile)| {
            let mut cfg = base.clone();
            cfg.kernel = *spec;
            cfg.profile = *profile;
            let acm = acm_optimize(&cfg);
            let mcm: Vec<Result<OptimumResult>> = match mcm_optimize_all(&cfg) {
                Ok(v) => v,
                Err(e) => cfg.ks.iter().map(|_| Err(Error::NotFound(e.to_string()))).collect(),
            };
            cfg.ks
                .iter()
                .zip(mcm)
                .map(|(&k, m)| CompareRow {
                    kernel: label.clone(),
                    profile: *profile,
                    k,
                    mcm_amplitude: m.as_ref().ok().map(|r| r.amplitude),
                    mcm_cost: m.as_ref().ok().map(|r| r.cost),
                    mcm_half_width: m.as_ref().ok().map(|r| r.half_width),
                    mcm_error: m.as_ref().err().map(|e| e.to_string()),
                    acm_amplitude: acm.as_ref().ok().map(|r| r.amplitude),
                    acm_cost: acm.as_ref().ok().map(|r| r.cost),
                    acm_half_width: acm.as_ref().ok().map(|r| r.half_width),
                    acm_error: acm.as_ref().err().map(|e| e.to_string()),
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    CompareTable { rows }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl CompareTable {
    pub fn row(&self, kernel: &str, profile: ProfileShape, k: usize) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.kernel == kernel && r.profile == profile && r.k == k)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "kernel,profile,k,mcm_a,acm_a,mcm_cost,acm_cost,mcm_half_width,acm_half_width,mcm_error,acm_error"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.kernel,
                r.profile.name(),
                r.k,
                opt(r.mcm_amplitude),
                opt(r.acm_amplitude),
                opt(r.mcm_cost),
                opt(r.acm_cost),
                opt(r.mcm_half_width),
                opt(r.acm_half_width),
                r.mcm_error.as_deref().unwrap_or("").replace(',', ";"),
                r.acm_error.as_deref().unwrap_or("").replace(',', ";"),
            )?;
        }
        Ok(())
    }

    /// Fixed-width layout with kernel and profile printed once per block.
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:<11} {:>3} {:>8} {:>8} {:>9} {:>9}",
            "kernel", "profile", "k", "MCM a*", "ACM a*", "MCM cost", "ACM cost"
        );
        let mut last: Option<(&str, ProfileShape)> = None;
        for r in &self.rows {
            let same_kernel = last.is_some_and(|(k, _)| k == r.kernel);
            let same_block = last.is_some_and(|(k, p)| k == r.kernel && p == r.profile);
            let kernel = if same_kernel { "" } else { r.kernel.as_str() };
            let profile = if same_block { "" } else { r.profile.name() };
            let (acm_a, acm_c) = if same_block {
                (String::new(), String::new())
            } else {
                (cell(r.acm_amplitude), cell(r.acm_cost))
            };
            let _ = writeln!(
                s,
                "{:<10} {:<11} {:>3} {:>8} {:>8} {:>9} {:>9}",
                kernel,
                profile,
                r.k,
                cell(r.mcm_amplitude),
                acm_a,
                cell(r.mcm_cost),
                acm_c
            );
            last = Some((r.kernel.as_str(), r.profile));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(profile: ProfileShape) -> OptimizeConfig {
        let mut cfg = OptimizeConfig::comparison(KernelSpec::Laplace { b: 1.0 }, profile).unwrap();
        cfg.sites = 100;
        cfg.generations = 150;
        cfg.tolerance = 1e-2;
        cfg.step = 0.02;
        cfg.ks = vec![1];
        cfg
    }

    fn constant_trajectory(value: f64) -> Trajectory {
        let mut t = Trajectory::new(LatticeConfig::line(16, 1.0).unwrap());
        t.push(0, &[value; 16]).unwrap();
        t
    }

    #[test]
    fn success_predicates() {
        for p in [InvasionPredicate::Mean, InvasionPredicate::MinInterior, InvasionPredicate::Center] {
            assert!(invasion_success(&constant_trajectory(1.0), 0.9, p).unwrap());
            assert!(!invasion_success(&constant_trajectory(0.0), 0.9, p).unwrap());
        }
        let mut t = Trajectory::new(LatticeConfig::line(16, 1.0).unwrap());
        let mut row = vec![1.0; 16];
        row[0] = 0.0;
        t.push(0, &row).unwrap();
        assert!(invasion_success(&t, 0.9, InvasionPredicate::Mean).unwrap());
        assert!(invasion_success(&t, 0.9, InvasionPredicate::MinInterior).unwrap());
        row[8] = 0.0;
        let mut t2 = Trajectory::new(LatticeConfig::line(16, 1.0).unwrap());
        t2.push(0, &row).unwrap();
        assert!(!invasion_success(&t2, 0.9, InvasionPredicate::Center).unwrap());
    }

    #[test]
    fn acm_bracket_errors() {
        let mut cfg = small(ProfileShape::Pulse);
        cfg.a_hi = 0.2;
        assert!(matches!(acm_optimize(&cfg), Err(Error::Bracket(_))));
        cfg.a_hi = 0.1;
        cfg.a_lo = 0.2;
        assert!(acm_optimize(&cfg).is_err());
    }

    #[test]
    fn acm_finds_flip() {
        let cfg = small(ProfileShape::Pulse);
        let r = acm_optimize(&cfg).unwrap();
        assert!(r.amplitude >= cfg.params.allee_threshold());
        assert!((r.cost - 2.0 * r.amplitude * 0.5).abs() < 1e-15);
        let mut runner = Runner::new(&cfg).unwrap();
        assert!(runner.invades(r.amplitude, 0.5).unwrap());
        assert!(!runner.invades(r.amplitude - cfg.tolerance, 0.5).unwrap());
    }

    #[test]
    fn mcm_not_found_below_threshold() {
        let mut cfg = small(ProfileShape::Pulse);
        cfg.a_lo = 0.01;
        cfg.a_hi = 0.05;
        cfg.ks = vec![4];
        assert!(matches!(mcm_optimize(&cfg), Err(Error::NotFound(_))));
    }

    #[test]
    fn single_profile_matches_mcm() {
        let cfg = small(ProfileShape::Quadratic);
        let by_profile = critical_amplitude_by_profile(&[ProfileShape::Quadratic], &cfg).unwrap();
        let direct = mcm_optimize(&cfg).unwrap();
        assert_eq!(by_profile.len(), 1);
        assert_eq!(by_profile[0].amplitude, direct.amplitude);
        assert_eq!(by_profile[0].cost, direct.cost);
    }

    #[test]
    fn empty_grid_gives_empty_table() {
        let cfg = small(ProfileShape::Pulse);
        let t = compare_table(&[], &[ProfileShape::Pulse], &cfg);
        assert!(t.rows.is_empty());
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1);
    }

    #[test]
    fn default_width_grid() {
        let g = default_half_widths();
        assert_eq!(g.len(), 8);
        assert!((g[0] - 0.25).abs() < 1e-15 && (g[7] - 4.0).abs() < 1e-12);
    }
}
