//! Experiment orchestration: subcommands, reproduction targets and the
//! output manifest.
//!
//! Every file goes through one [`Sink`], which hashes it and records it in
//! `manifest.json` together with the resolved config. Nothing time- or
//! host-dependent is written, so identical configs give identical bytes.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{CriterionChoice, ExperimentConfig};
use crate::error::{Error, Result};
use crate::export::{fmt_f64, write_binary, write_csv};
use crate::kernels::{discretize, DiscreteKernel};
use crate::lattice::{init_field, ProfileShape, Storage, Trajectory, Wlde};
use crate::optimize::{acm_optimize, compare_table, critical_amplitude_by_profile, mcm_optimize_all, CompareTable, OptimumResult};
use crate::outbreak::{outbreak_curves, outbreak_curve, OutbreakCurve};
use crate::stability::{classify, phase_portrait, verify_by_perturbation, PerturbationOutcome, Verdict};
use crate::waves::{front_position, run_wave, sweep, write_sweep_csv, FrontTrack, SweepAxis, SweepRow};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Reference thresholds for the comparison grid:
/// kernel, profile, MCM `a*` for `k = 1..4`, ACM `a*`.
pub const TABLE4_REFERENCE: [(&str, ProfileShape, [f64; 4], f64); 6] = [
    ("laplace", ProfileShape::Pulse, [0.200, 0.290, 0.340, 0.360], 0.395),
    ("laplace", ProfileShape::Quadratic, [0.220, 0.320, 0.380, 0.420], 0.518),
    ("laplace", ProfileShape::Triangular, [0.260, 0.380, 0.450, 0.490], 0.720),
    ("gaussian", ProfileShape::Pulse, [0.200, 0.290, 0.330, 0.360], 0.390),
    ("gaussian", ProfileShape::Quadratic, [0.220, 0.330, 0.380, 0.420], 0.493),
    ("gaussian", ProfileShape::Triangular, [0.260, 0.380, 0.450, 0.490], 0.640),
];

/// Agreement band for reference thresholds.
pub const REFERENCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Table4,
}

impl Target {
    pub const ALL: [Target; 9] = [
        Target::Fig2,
        Target::Fig3,
        Target::Fig4,
        Target::Fig5,
        Target::Fig6,
        Target::Fig7,
        Target::Fig8,
        Target::Fig9,
        Target::Table4,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Target::Fig2 => "fig2",
            Target::Fig3 => "fig3",
            Target::Fig4 => "fig4",
            Target::Fig5 => "fig5",
            Target::Fig6 => "fig6",
            Target::Fig7 => "fig7",
            Target::Fig8 => "fig8",
            Target::Fig9 => "fig9",
            Target::Table4 => "table4",
        }
    }

    /// The shipped TOML for this target.
    pub fn config_text(&self) -> &'static str {
        match self {
            Target::Fig2 => include_str!("../../../configs/fig2.toml"),
            Target::Fig3 => include_str!("../../../configs/fig3.toml"),
            Target::Fig4 => include_str!("../../../configs/fig4.toml"),
            Target::Fig5 => include_str!("../../../configs/fig5.toml"),
            Target::Fig6 => include_str!("../../../configs/fig6.toml"),
            Target::Fig7 => include_str!("../../../configs/fig7.toml"),
            Target::Fig8 => include_str!("../../../configs/fig8.toml"),
            Target::Fig9 => include_str!("../../../configs/fig9.toml"),
            Target::Table4 => include_str!("../../../configs/table4.toml"),
        }
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(self.config_text(), &format!("configs/{}.toml", self.name()))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config("target", format!("unknown reproduction target `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Stability,
    Wavespeed,
    Outbreak,
    Optimize,
    Compare,
    Reproduce(Target),
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Simulate => "simulate".into(),
            Command::Stability => "stability".into(),
            Command::Wavespeed => "wavespeed".into(),
            Command::Outbreak => "outbreak".into(),
            Command::Optimize => "optimize".into(),
            Command::Compare => "compare".into(),
            Command::Reproduce(t) => format!("reproduce {t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A comparison of a computed quantity with its expected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: Option<f64>,
    pub computed: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Check {
    fn near(name: String, expected: f64, computed: Option<f64>, tolerance: f64) -> Self {
        Self {
            pass: computed.is_some_and(|c| (c - expected).abs() <= tolerance),
            name,
            expected: Some(expected),
            computed,
            tolerance: Some(tolerance),
        }
    }

    fn holds(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            expected: None,
            computed: None,
            tolerance: None,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_sha256: String,
    pub config: Value,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub manifest_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    sha256_hex(&serde_json::to_vec(&config.to_json()).expect("config serializes"))
}

/// Single writer for an output directory.
struct Sink {
    root: PathBuf,
    files: Vec<FileEntry>,
    notes: Vec<String>,
    checks: Vec<Check>,
}

impl Sink {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            notes: Vec::new(),
            checks: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name == MANIFEST_NAME || self.files.iter().any(|f| f.path == name) {
            return Err(Error::Format(format!("output `{name}` written twice")));
        }
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn emit_with<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| Error::io(self.root.join(name), e))?;
        self.emit(name, &buf)
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        bytes.push(b'\n');
        self.emit(name, &bytes)
    }

    fn emit_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.emit(name, text.as_bytes())
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn finish(self, command: &Command, config: &ExperimentConfig, error: Option<&Error>) -> Result<RunOutcome> {
        let manifest = Manifest {
            tool: "wlde".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.name(),
            status: if error.is_some() { RunStatus::Partial } else { RunStatus::Complete },
            error: error.map(|e| e.to_string()),
            config_sha256: config_hash(config),
            config: config.to_json(),
            files: self.files,
            notes: self.notes,
            checks: self.checks,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.root.join(MANIFEST_NAME);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        Ok(RunOutcome {
            manifest,
            manifest_path: path,
            manifest_sha256: sha256_hex(&bytes),
        })
    }
}

/// Runs `command` and writes its artifacts plus `manifest.json` under `out`.
/// On failure the manifest is still written, marked partial, and the error is returned.
pub fn run(command: &Command, config: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let mut sink = Sink::new(out)?;
    let result = match command {
        Command::Simulate => simulate(config, &mut sink),
        Command::Stability => stability(config, &mut sink),
        Command::Wavespeed => wavespeed(config, &mut sink),
        Command::Outbreak => outbreak(config, &mut sink).map(|_| ()),
        Command::Optimize => optimize(config, &mut sink),
        Command::Compare => compare(config, &mut sink).map(|_| ()),
        Command::Reproduce(target) => reproduce(*target, config, &mut sink),
    };
    match result {
        Ok(()) => sink.finish(command, config, None),
        Err(e) => {
            sink.finish(command, config, Some(&e))?;
            Err(e)
        }
    }
}

fn lattice_kernel(config: &ExperimentConfig) -> Result<DiscreteKernel> {
    let spec = config.lattice_kernel();
    let shape = config.shape();
    discretize(&spec, shape.dimension(), spec.default_radius(shape.min_extent()))
}

fn model(config: &ExperimentConfig) -> Result<Wlde> {
    Wlde::new(
        config.lattice_config()?,
        config.growth_params()?,
        config.dispersal_setting()?,
        &lattice_kernel(config)?,
    )
}

fn simulate(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let lattice = config.lattice_config()?;
    let kernel = lattice_kernel(config)?;
    let mut wlde = model(config)?;
    let initial = init_field(&lattice, &config.release_profile(config.profile.amplitude)?)?;
    let trajectory = wlde.simulate(&initial, config.generations, Storage::strided(config.simulate.stride))?;
    let hash = config_hash(config);
    sink.emit_with("trajectory.csv", |w| write_csv(&trajectory, &hash, w))?;
    if config.simulate.binary && config.generations > 0 {
        sink.emit_with("trajectory.wlde", |w| write_binary(&trajectory, w))?;
    }
    let last = trajectory.final_field().expect("generation 0 is always stored");
    sink.emit_json(
        "summary.json",
        &json!({
            "generations": config.generations,
            "stored_rows": trajectory.len(),
            "kernel_radius": kernel.radius(),
            "captured_mass": kernel.captured_mass(),
            "final_mean": last.mean(),
            "final_max": last.max(),
        }),
    )
}

fn stability(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let params = config.growth_params()?;
    let delta = config.scalar_delta("stability")?;
    let kernel = lattice_kernel(config)?;
    let grid = config.shape();
    let s = &config.stability;
    let mut entries = Vec::new();
    for v in params.fixed_points() {
        let report = classify(v, &params, &kernel, delta, grid, s.margin)?;
        let perturbation = if s.verify {
            Some(verify_by_perturbation(v, &params, &kernel, delta, grid, s.epsilon, s.generations, config.seed)?)
        } else {
            None
        };
        let agrees = perturbation.as_ref().map(|p| {
            matches!(
                (report.verdict, p.outcome),
                (Verdict::Stable, PerturbationOutcome::Decays) | (Verdict::Unstable, PerturbationOutcome::Grows)
            )
        });
        entries.push(json!({ "report": report, "perturbation": perturbation, "agrees": agrees }));
    }
    sink.emit_json(
        "stability.json",
        &json!({ "params": params, "delta": delta, "kernel": config.kernel, "fixed_points": entries }),
    )?;
    let portrait = phase_portrait(&params, delta, s.resolution)?;
    sink.emit_with("phase_portrait.csv", |w| portrait.write_csv(w))?;
    if config.lattice.boundary != crate::grid::Boundary::Periodic {
        sink.note("spectral verdicts assume a periodic lattice; the perturbation check used the configured boundary");
    }
    Ok(())
}

fn row_from_run(value: f64, label: &str, speed: &crate::waves::SpeedEstimate) -> SweepRow {
    SweepRow {
        axis: SweepAxis::Delta,
        value,
        kernel: label.to_string(),
        c_star: speed.c_star,
        died: speed.died,
        residual: speed.residual,
        error: None,
    }
}

fn wavespeed(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let setup = config.wave_setup()?;
    let kernels = config.wave_kernels();
    sink.note("kernel scales are in length units; the reference set uses unit scale for every family");
    if let Some(axis) = config.waves.axis {
        let rows = sweep(axis, &config.waves.values, &setup, &kernels)?;
        sink.emit_with("wavespeed.csv", |w| write_sweep_csv(&rows, w))?;
        return sink.emit_json("wavespeed.json", &rows);
    }
    let runs: Vec<_> = kernels
        .par_iter()
        .map(|(label, spec)| (label.clone(), run_wave(&setup, spec)))
        .collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut first_error = None;
    for (label, run) in runs {
        let run = match run {
            Ok(r) => r,
            Err(e) => {
                rows.push(SweepRow {
                    axis: SweepAxis::Delta,
                    value: setup.delta,
                    kernel: label.clone(),
                    c_star: f64::NAN,
                    died: false,
                    residual: f64::NAN,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
                continue;
            }
        };
        rows.push(row_from_run(setup.delta, &label, &run.speed));
        let track = FrontTrack::from_trajectory(&run.trajectory, setup.level)?;
        sink.emit_with(&format!("front_{label}.csv"), |w| track.write_csv(w))?;
        let series = &run.speed.c_series;
        sink.emit_with(&format!("speed_{label}.csv"), |w| {
            use std::io::Write;
            writeln!(w, "generation,c")?;
            for (t, c) in series {
                writeln!(w, "{t},{}", c.map(fmt_f64).unwrap_or_default())?;
            }
            Ok(())
        })?;
        let mut snapshot_front = None;
        if let Some(t) = config.waves.snapshot {
            let field = snapshot(&run.trajectory, t)?;
            snapshot_front = front_position(&field, setup.level)?;
            let x = run.trajectory.config().axis_coordinates();
            sink.emit_with(&format!("profile_{label}.csv"), |w| {
                use std::io::Write;
                writeln!(w, "site,x,v")?;
                for (i, (x, v)) in x.iter().zip(field.values()).enumerate() {
                    writeln!(w, "{i},{},{}", fmt_f64(*x), fmt_f64(*v))?;
                }
                Ok(())
            })?;
        }
        summary.push(json!({
            "kernel": label,
            "c_star": run.speed.c_star,
            "c_quotient": run.speed.c_quotient,
            "residual": run.speed.residual,
            "window": run.speed.window,
            "died": run.speed.died,
            "snapshot_generation": config.waves.snapshot,
            "snapshot_front_index": snapshot_front,
        }));
    }
    sink.emit_with("wavespeed.csv", |w| write_sweep_csv(&rows, w))?;
    sink.emit_json("wavespeed.json", &summary)?;
    match first_error {
        Some(e) if summary.is_empty() => Err(e),
        Some(e) => {
            sink.note(format!("some kernels failed: {e}"));
            Ok(())
        }
        None => Ok(()),
    }
}

fn snapshot(trajectory: &Trajectory, t: usize) -> Result<crate::lattice::LatticeField> {
    let index = trajectory
        .generations()
        .iter()
        .position(|&g| g == t)
        .ok_or_else(|| Error::NotFound(format!("generation {t} was not stored")))?;
    Ok(trajectory.field(index))
}

fn amplitude_tag(a: f64) -> String {
    format!("{a:.3}")
}

fn outbreak_trajectory(config: &ExperimentConfig, wlde: &mut Wlde, amplitude: f64) -> Result<Trajectory> {
    let lattice = config.lattice_config()?;
    let initial = init_field(&lattice, &config.release_profile(amplitude)?)?;
    wlde.simulate(&initial, config.generations, Storage::default())
}

fn curve_summary(amplitude: f64, curve: &OutbreakCurve) -> Value {
    json!({
        "amplitude": amplitude,
        "k": curve.k,
        "modes": curve.modality.count,
        "peak_positions": curve.peak_positions(),
        "peaks": curve.modality.peaks,
    })
}

fn outbreak(config: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<(f64, Vec<OutbreakCurve>)>> {
    let o = &config.outbreak;
    let horizon = o.horizon.unwrap_or(config.generations);
    let amplitudes = if o.amplitudes.is_empty() {
        vec![config.profile.amplitude]
    } else {
        o.amplitudes.clone()
    };
    let mut wlde = model(config)?;
    let mut all = Vec::new();
    let mut summary = Vec::new();
    for &a in &amplitudes {
        let trajectory = outbreak_trajectory(config, &mut wlde, a)?;
        let curves = outbreak_curves(&trajectory, &o.ks, o.method, horizon, o.epsilon_fix)?;
        for curve in &curves {
            sink.emit_with(&format!("outbreak_a{}_k{}.csv", amplitude_tag(a), curve.k), |w| curve.write_csv(w))?;
            summary.push(curve_summary(a, curve));
        }
        all.push((a, curves));
    }
    sink.emit_json(
        "outbreak.json",
        &json!({
            "method": o.method,
            "horizon": horizon,
            "epsilon_fix": o.epsilon_fix,
            "curves": summary,
        }),
    )?;
    sink.note("outbreak probabilities treat each generation as an independent Bernoulli trial");
    sink.note("geometric-mixture q per site is 1 / (1 + N_i) with N_i the observed fixation time");
    Ok(all)
}

fn optimum_json(r: &std::result::Result<OptimumResult, Error>, criterion: &str, k: Option<usize>) -> Value {
    match r {
        Ok(r) => serde_json::to_value(r).expect("result serializes"),
        Err(e) => json!({ "criterion": criterion, "k": k, "error": e.to_string() }),
    }
}

fn optimize(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let oc = config.optimize_config(config.profile.shape)?;
    let choice = config.optimize.criterion;
    let mut results: Vec<(String, Option<usize>, std::result::Result<OptimumResult, Error>)> = Vec::new();
    if matches!(choice, CriterionChoice::Acm | CriterionChoice::Both) {
        results.push(("acm".into(), None, acm_optimize(&oc)));
    }
    if matches!(choice, CriterionChoice::Mcm | CriterionChoice::Both) {
        match mcm_optimize_all(&oc) {
            Ok(v) => {
                for (k, r) in oc.ks.iter().zip(v) {
                    results.push(("mcm".into(), Some(*k), r));
                }
            }
            Err(e) => results.push(("mcm".into(), None, Err(e))),
        }
    }
    let json: Vec<Value> = results.iter().map(|(c, k, r)| optimum_json(r, c, *k)).collect();
    sink.emit_json("optimize.json", &json)?;
    let mut csv = String::from("criterion,k,a_star,half_width,cost,error\n");
    let mut text = format!(
        "{:<9} {:>3} {:>8} {:>8} {:>8}\n",
        "criterion", "k", "a*", "L*", "cost"
    );
    for (c, k, r) in &results {
        let k_str = k.map(|k| k.to_string()).unwrap_or_default();
        match r {
            Ok(r) => {
                csv.push_str(&format!(
                    "{c},{k_str},{},{},{},\n",
                    fmt_f64(r.amplitude),
                    fmt_f64(r.half_width),
                    fmt_f64(r.cost)
                ));
                text.push_str(&format!(
                    "{c:<9} {k_str:>3} {:>8.4} {:>8.4} {:>8.4}\n",
                    r.amplitude, r.half_width, r.cost
                ));
            }
            Err(e) => {
                csv.push_str(&format!("{c},{k_str},,,,{}\n", e.to_string().replace(',', ";")));
                text.push_str(&format!("{c:<9} {k_str:>3} failed: {e}\n"));
            }
        }
    }
    sink.emit_text("optimize.csv", &csv)?;
    sink.emit_text("optimize.txt", &text)?;
    sink.note(format!("invasion predicate: {:?} >= beta at the final generation", oc.predicate));
    sink.note(format!("half-width grid: {:?}", oc.half_widths));
    match results.into_iter().find_map(|(_, _, r)| r.err()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn compare(config: &ExperimentConfig, sink: &mut Sink) -> Result<CompareTable> {
    let profiles = &config.compare.profiles;
    let base = config.optimize_config(profiles[0])?;
    let table = compare_table(&config.compare_kernels(), profiles, &base);
    sink.emit_with("compare.csv", |w| table.write_csv(w))?;
    sink.emit_text("compare.txt", &table.to_text())?;
    sink.emit_json("compare.json", &table)?;
    sink.note(format!("invasion predicate: {:?} >= beta at the final generation", base.predicate));
    sink.note(format!("half-width grid: {:?}", base.half_widths));
    Ok(table)
}

fn reproduce(target: Target, config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    match target {
        Target::Fig2 => stability(config, sink),
        Target::Fig3 | Target::Fig4 | Target::Fig5 | Target::Fig6 => wavespeed(config, sink),
        Target::Fig7 | Target::Fig8 => {
            let curves = outbreak(config, sink)?;
            modality_checks(&curves, sink);
            Ok(())
        }
        Target::Fig9 => profile_comparison(config, sink),
        Target::Table4 => {
            let table = compare(config, sink)?;
            sink.checks.extend(table4_checks(&table));
            let failed: Vec<&str> = sink.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if !failed.is_empty() {
                let line = format!("checks outside the reference band or failing: {}", failed.join(", "));
                sink.note(line);
            }
            Ok(())
        }
    }
}

fn modality_checks(curves: &[(f64, Vec<OutbreakCurve>)], sink: &mut Sink) {
    let count = |a: f64, k: usize| {
        curves
            .iter()
            .find(|(x, _)| (x - a).abs() < 1e-12)
            .and_then(|(_, cs)| cs.iter().find(|c| c.k == k))
    };
    if let Some(c) = count(0.2, 1) {
        sink.checks.push(Check {
            name: "modes_a0.200_k1".into(),
            expected: Some(1.0),
            computed: Some(c.modality.count as f64),
            tolerance: Some(0.0),
            pass: c.modality.count == 1,
        });
    }
    if let Some(c) = count(0.5, 1) {
        let off_center = c.peak_positions().iter().all(|x| x.abs() > 1e-9);
        sink.checks.push(Check {
            name: "modes_a0.500_k1".into(),
            expected: Some(2.0),
            computed: Some(c.modality.count as f64),
            tolerance: Some(0.0),
            pass: c.modality.count == 2 && off_center,
        });
    }
}

/// Reference MCM thresholds at `k = 1` per release shape for the profile comparison.
pub const PROFILE_REFERENCE: [(ProfileShape, f64); 3] = [
    (ProfileShape::Pulse, 0.250),
    (ProfileShape::Quadratic, 0.290),
    (ProfileShape::Triangular, 0.330),
];

fn profile_comparison(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let profiles = &config.compare.profiles;
    let oc = config.optimize_config(profiles[0])?;
    let results = critical_amplitude_by_profile(profiles, &oc)?;
    let mut csv = String::from("profile,a_star,half_width,cost\n");
    for r in &results {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.profile.name(),
            fmt_f64(r.amplitude),
            fmt_f64(r.half_width),
            fmt_f64(r.cost)
        ));
    }
    sink.emit_text("profiles.csv", &csv)?;
    sink.emit_json("profiles.json", &results)?;
    let k = oc.ks[0];
    let mut wlde = model(config)?;
    for r in &results {
        let mut cfg = config.clone();
        cfg.profile.shape = r.profile;
        cfg.profile.half_width = r.half_width;
        let trajectory = outbreak_trajectory(&cfg, &mut wlde, r.amplitude)?;
        let curve = outbreak_curve(&trajectory, k, oc.method, config.generations, oc.epsilon_fix)?;
        sink.emit_with(&format!("curve_{}.csv", r.profile.name()), |w| curve.write_csv(w))?;
    }
    for (shape, expected) in PROFILE_REFERENCE {
        let computed = results.iter().find(|r| r.profile == shape).map(|r| r.amplitude);
        sink.checks.push(Check::near(format!("mcm_{}", shape.name()), expected, computed, REFERENCE_TOLERANCE));
    }
    let a = |s: ProfileShape| results.iter().find(|r| r.profile == s).map(|r| r.amplitude);
    if let (Some(p), Some(q), Some(t)) = (a(ProfileShape::Pulse), a(ProfileShape::Quadratic), a(ProfileShape::Triangular)) {
        sink.checks.push(Check::holds("pulse < quadratic < triangular", p < q && q < t));
    }
    Ok(())
}

/// Reference-band checks for every cell plus the within-table orderings.
pub fn table4_checks(table: &CompareTable) -> Vec<Check> {
    let mut checks = Vec::new();
    for (kernel, profile, mcm, acm) in TABLE4_REFERENCE {
        for (j, &expected) in mcm.iter().enumerate() {
            let k = j + 1;
            let computed = table.row(kernel, profile, k).and_then(|r| r.mcm_amplitude);
            checks.push(Check::near(
                format!("{kernel}/{}/mcm_k{k}", profile.name()),
                expected,
                computed,
                REFERENCE_TOLERANCE,
            ));
        }
        let computed = table.row(kernel, profile, 1).and_then(|r| r.acm_amplitude);
        checks.push(Check::near(
            format!("{kernel}/{}/acm", profile.name()),
            acm,
            computed,
            REFERENCE_TOLERANCE,
        ));
    }
    let mcm = |kernel: &str, p: ProfileShape, k: usize| table.row(kernel, p, k).and_then(|r| r.mcm_amplitude);
    for kernel in ["laplace", "gaussian"] {
        for profile in ProfileShape::ALL {
            let series: Option<Vec<f64>> = (1..=4).map(|k| mcm(kernel, profile, k)).collect();
            let monotone = series.is_some_and(|s| s.windows(2).all(|w| w[0] <= w[1]));
            checks.push(Check::holds(format!("{kernel}/{}/mcm nondecreasing in k", profile.name()), monotone));
        }
        for k in 1..=4 {
            let ordered = match (
                mcm(kernel, ProfileShape::Pulse, k),
                mcm(kernel, ProfileShape::Quadratic, k),
                mcm(kernel, ProfileShape::Triangular, k),
            ) {
                (Some(p), Some(q), Some(t)) => p <= q && q <= t,
                _ => false,
            };
            checks.push(Check::holds(format!("{kernel}/k{k}/pulse <= quadratic <= triangular"), ordered));
        }
        let below = match table.row(kernel, ProfileShape::Pulse, 1) {
            Some(r) => matches!((r.mcm_amplitude, r.acm_amplitude), (Some(m), Some(a)) if m <= a),
            None => false,
        };
        checks.push(Check::holds(format!("{kernel}/pulse/mcm_k1 <= acm"), below));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        for t in Target::ALL {
            t.config().unwrap_or_else(|e| panic!("{t}: {e}"));
            assert_eq!(t.name().parse::<Target>().unwrap(), t);
        }
        assert!("fig10".parse::<Target>().is_err());
    }

    #[test]
    fn table4_config_matches_setting() {
        let c = Target::Table4.config().unwrap();
        let p = c.growth_params().unwrap();
        assert_eq!((p.s_f(), p.s_h()), (0.2, 0.9));
        assert_eq!(c.dispersal.delta, 0.2);
        assert_eq!(c.optimize.beta, 0.9);
        assert_eq!(c.lattice.nx, 400);
        assert_eq!(c.generations, 200);
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            "generations = 5\n[growth]\ns_f = 0.3\ns_h = 0.7\n[kernel]\nfamily = \"gaussian\"\nsigma = 1.0\n[lattice]\nnx = 32\n[profile]\nhalf_width = 4.0\namplitude = 0.9\n",
            "test",
        )
        .unwrap()
    }

    #[test]
    fn manifest_lists_every_file_once() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&Command::Simulate, &small_config(), dir.path()).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n != MANIFEST_NAME)
            .collect();
        names.sort();
        let mut listed: Vec<_> = outcome.manifest.files.iter().map(|f| f.path.clone()).collect();
        listed.sort();
        assert_eq!(names, listed);
        for f in &outcome.manifest.files {
            let bytes = std::fs::read(dir.path().join(&f.path)).unwrap();
            assert_eq!(sha256_hex(&bytes), f.sha256);
        }
    }

    #[test]
    fn zero_generations_writes_initial_field_only() {
        let mut c = small_config();
        c.generations = 0;
        c.outbreak.horizon = Some(0);
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&Command::Simulate, &c, dir.path()).unwrap();
        assert!(outcome.manifest.files.iter().all(|f| f.path != "trajectory.wlde"));
        let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("0,"));
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = small_config();
        let x = run(&Command::Stability, &c, a.path()).unwrap();
        let y = run(&Command::Stability, &c, b.path()).unwrap();
        assert_eq!(x.manifest_sha256, y.manifest_sha256);
    }

    #[test]
    fn failed_run_leaves_partial_manifest() {
        let mut c = small_config();
        c.optimize.a_hi = 0.1;
        c.optimize.half_widths = vec![1.0];
        c.optimize.criterion = CriterionChoice::Acm;
        let dir = tempfile::tempdir().unwrap();
        let err = run(&Command::Optimize, &c, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        let m: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(m.status, RunStatus::Partial);
        assert!(m.files.iter().any(|f| f.path == "optimize.json"));
    }
}
