//! TOML experiment configuration.
//!
//! Unknown keys are rejected with the offending path. After parsing,
//! [`ExperimentConfig::resolve`] validates every range and fills derived
//! defaults so the echoed config is complete.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, GridShape};
use crate::growth::GrowthParams;
use crate::kernels::KernelSpec;
use crate::lattice::{DispersalSetting, LatticeConfig, ProfileShape, ReleaseProfile};
use crate::optimize::{default_half_widths, InvasionPredicate, OptimizeConfig};
use crate::outbreak::{OutbreakMethod, DEFAULT_EPSILON_FIX};
use crate::stability::DEFAULT_MARGIN;
use crate::waves::{reference_kernels, SweepAxis, WaveSetup, DEFAULT_LEVEL, DEFAULT_TAIL_FRACTION};

pub const DEFAULT_SEED: u64 = 20240917;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSection {
    pub s_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_f: Option<f64>,
    /// Alternative to `s_f`: the Allee threshold `s_f / s_h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allee: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    #[serde(default = "defaults::nx")]
    pub nx: usize,
    /// Present for a plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default = "defaults::one")]
    pub spacing: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            nx: defaults::nx(),
            ny: None,
            spacing: 1.0,
            boundary: Boundary::Periodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersalSection {
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    /// Per-site dispersal fractions; overrides `delta` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_site: Option<Vec<f64>>,
}

impl Default for DispersalSection {
    fn default() -> Self {
        Self {
            delta: defaults::delta(),
            per_site: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(default)]
    pub shape: ProfileShape,
    #[serde(default = "defaults::one")]
    pub amplitude: f64,
    #[serde(default = "defaults::half_width")]
    pub half_width: f64,
    #[serde(default)]
    pub center: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            shape: ProfileShape::Pulse,
            amplitude: 1.0,
            half_width: defaults::half_width(),
            center: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "defaults::stride")]
    pub stride: usize,
    #[serde(default = "defaults::yes")]
    pub binary: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { stride: 1, binary: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default = "defaults::margin")]
    pub margin: f64,
    #[serde(default = "defaults::yes")]
    pub verify: bool,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::stability_generations")]
    pub generations: usize,
    #[serde(default = "defaults::resolution")]
    pub resolution: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            verify: true,
            epsilon: defaults::epsilon(),
            generations: defaults::stability_generations(),
            resolution: defaults::resolution(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSet {
    /// The configured kernel only.
    #[default]
    Config,
    /// Cauchy, power law, Gaussian and uniform at unit scale.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavesSection {
    #[serde(default = "defaults::level")]
    pub level: f64,
    #[serde(default = "defaults::tail_fraction")]
    pub tail_fraction: f64,
    #[serde(default)]
    pub kernels: KernelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<SweepAxis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    /// Generation at which front profiles are written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<usize>,
}

impl Default for WavesSection {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            kernels: KernelSet::Config,
            axis: None,
            values: Vec::new(),
            snapshot: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutbreakSection {
    #[serde(default = "defaults::ks")]
    pub ks: Vec<usize>,
    /// Release amplitudes to evaluate; empty means the profile amplitude.
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    #[serde(default = "defaults::method")]
    pub method: OutbreakMethod,
    #[serde(default = "defaults::epsilon_fix")]
    pub epsilon_fix: f64,
    /// Defaults to the run length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

impl Default for OutbreakSection {
    fn default() -> Self {
        Self {
            ks: defaults::ks(),
            amplitudes: Vec::new(),
            method: OutbreakMethod::Poisson,
            epsilon_fix: DEFAULT_EPSILON_FIX,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionChoice {
    Acm,
    Mcm,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default)]
    pub criterion: CriterionChoice,
    #[serde(default = "default_half_widths")]
    pub half_widths: Vec<f64>,
    #[serde(default = "defaults::a_lo")]
    pub a_lo: f64,
    #[serde(default = "defaults::one")]
    pub a_hi: f64,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default)]
    pub predicate: InvasionPredicate,
    #[serde(default = "defaults::optimize_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "defaults::tolerance")]
    pub tolerance: f64,
    #[serde(default = "defaults::step")]
    pub step: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            criterion: CriterionChoice::Both,
            half_widths: default_half_widths(),
            a_lo: defaults::a_lo(),
            a_hi: 1.0,
            beta: defaults::beta(),
            predicate: InvasionPredicate::Mean,
            ks: defaults::optimize_ks(),
            tolerance: defaults::tolerance(),
            step: defaults::step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedKernel {
    pub label: String,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Empty means the configured kernel, labelled by its family.
    #[serde(default)]
    pub kernels: Vec<NamedKernel>,
    #[serde(default = "defaults::profiles")]
    pub profiles: Vec<ProfileShape>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            kernels: Vec::new(),
            profiles: defaults::profiles(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Number of generations simulated (the horizon `N_t`).
    #[serde(default = "defaults::generations")]
    pub generations: usize,
    pub growth: GrowthSection,
    /// Kernel with its scale in length units.
    pub kernel: KernelSpec,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub dispersal: DispersalSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub waves: WavesSection,
    #[serde(default)]
    pub outbreak: OutbreakSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub compare: CompareSection,
}

mod defaults {
    use crate::lattice::ProfileShape;
    use crate::outbreak::{OutbreakMethod, DEFAULT_EPSILON_FIX};

    pub fn nx() -> usize {
        400
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn delta() -> f64 {
        0.2
    }
    pub fn half_width() -> f64 {
        5.0
    }
    pub fn stride() -> usize {
        1
    }
    pub fn yes() -> bool {
        true
    }
    pub fn margin() -> f64 {
        crate::stability::DEFAULT_MARGIN
    }
    pub fn epsilon() -> f64 {
        1e-4
    }
    pub fn stability_generations() -> usize {
        300
    }
    pub fn resolution() -> usize {
        100
    }
    pub fn level() -> f64 {
        crate::waves::DEFAULT_LEVEL
    }
    pub fn tail_fraction() -> f64 {
        crate::waves::DEFAULT_TAIL_FRACTION
    }
    pub fn ks() -> Vec<usize> {
        vec![1]
    }
    pub fn method() -> OutbreakMethod {
        OutbreakMethod::Poisson
    }
    pub fn epsilon_fix() -> f64 {
        DEFAULT_EPSILON_FIX
    }
    pub fn a_lo() -> f64 {
        0.05
    }
    pub fn beta() -> f64 {
        0.9
    }
    pub fn optimize_ks() -> Vec<usize> {
        vec![1, 2, 3, 4]
    }
    pub fn tolerance() -> f64 {
        1e-3
    }
    pub fn step() -> f64 {
        5e-3
    }
    pub fn profiles() -> Vec<ProfileShape> {
        ProfileShape::ALL.to_vec()
    }
    pub fn seed() -> u64 {
        super::DEFAULT_SEED
    }
    pub fn generations() -> usize {
        200
    }
}

fn range(path: &str, err: Error) -> Error {
    Error::config(path, err.to_string())
}

fn check(path: &str, ok: bool, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, reason))
    }
}

impl ExperimentConfig {
    /// Parses and resolves TOML text; `origin` names the source in errors.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config(origin, e.to_string()))?;
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { origin.to_string() } else { path }, e.inner().to_string())
        })?;
        config.resolve()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Validates ranges and fills derived fields.
    pub fn resolve(mut self) -> Result<Self> {
        let params = self.growth_params()?;
        self.growth.s_f = Some(params.s_f());
        self.growth.allee = Some(params.allee_threshold());

        let lattice = self.lattice_config()?;
        let dim = lattice.dimension();
        self.kernel.validate(dim).map_err(|e| range("kernel", e))?;
        self.dispersal_setting()?;
        self.release_profile(self.profile.amplitude)?;

        check("simulate.stride", self.simulate.stride > 0, "must be at least 1")?;
        check(
            "stability.epsilon",
            (0.0..=1e-3).contains(&self.stability.epsilon),
            "must lie in [0, 1e-3]",
        )?;
        check("stability.margin", self.stability.margin >= 0.0, "must be nonnegative")?;
        check("stability.resolution", self.stability.resolution >= 10, "must be at least 10")?;

        check(
            "waves.level",
            self.waves.level > 0.0 && self.waves.level < 1.0,
            "must lie in (0, 1)",
        )?;
        check(
            "waves.tail_fraction",
            self.waves.tail_fraction > 0.0 && self.waves.tail_fraction <= 1.0,
            "must lie in (0, 1]",
        )?;
        check(
            "waves.values",
            self.waves.axis.is_none() || !self.waves.values.is_empty(),
            "a sweep axis needs at least one value",
        )?;
        if let Some(s) = self.waves.snapshot {
            check("waves.snapshot", s <= self.generations, "must not exceed generations")?;
        }

        check("outbreak.ks", !self.outbreak.ks.is_empty(), "needs at least one outbreak size")?;
        check(
            "outbreak.epsilon_fix",
            self.outbreak.epsilon_fix > 0.0,
            "must be positive",
        )?;
        for &a in &self.outbreak.amplitudes {
            self.release_profile(a)?;
        }
        let horizon = *self.outbreak.horizon.get_or_insert(self.generations);
        check("outbreak.horizon", horizon <= self.generations, "must not exceed generations")?;

        self.optimize_config(self.profile.shape)
            .map_err(|e| match e {
                Error::Config { .. } => e,
                other => range("optimize", other),
            })?
            .validate()
            .map_err(|e| range("optimize", e))?;
        check("compare.profiles", !self.compare.profiles.is_empty(), "needs at least one profile")?;
        for (i, k) in self.compare.kernels.iter().enumerate() {
            k.kernel
                .validate(1)
                .map_err(|e| range(&format!("compare.kernels[{i}]"), e))?;
        }
        Ok(self)
    }

    pub fn growth_params(&self) -> Result<GrowthParams> {
        let g = &self.growth;
        let params = match (g.s_f, g.allee) {
            (Some(s_f), None) => GrowthParams::new(s_f, g.s_h),
            (None, Some(a)) => GrowthParams::from_allee(g.s_h, a),
            (Some(s_f), Some(a)) => {
                let p = GrowthParams::new(s_f, g.s_h).map_err(|e| range("growth", e))?;
                if (p.allee_threshold() - a).abs() > 1e-12 {
                    return Err(Error::config("growth", "s_f and allee disagree; give one of them"));
                }
                Ok(p)
            }
            (None, None) => return Err(Error::config("growth", "needs s_f or allee")),
        };
        params.map_err(|e| range("growth", e))
    }

    pub fn shape(&self) -> GridShape {
        match self.lattice.ny {
            Some(ny) => GridShape::Plane(self.lattice.nx, ny),
            None => GridShape::Line(self.lattice.nx),
        }
    }

    pub fn lattice_config(&self) -> Result<LatticeConfig> {
        Ok(LatticeConfig::new(self.shape(), self.lattice.spacing)
            .map_err(|e| range("lattice", e))?
            .with_boundary(self.lattice.boundary))
    }

    /// Kernel scale converted to lattice units.
    pub fn lattice_kernel(&self) -> KernelSpec {
        self.kernel.with_scale_factor(1.0 / self.lattice.spacing)
    }

    pub fn dispersal_setting(&self) -> Result<DispersalSetting> {
        let setting = match &self.dispersal.per_site {
            Some(v) => DispersalSetting::PerSite(v.clone()),
            None => DispersalSetting::Constant(self.dispersal.delta),
        };
        setting
            .validate(Some(self.shape().len()))
            .map_err(|e| range("dispersal", e))?;
        Ok(setting)
    }

    /// Scalar dispersal fraction; per-site settings are rejected.
    pub fn scalar_delta(&self, analysis: &str) -> Result<f64> {
        match self.dispersal.per_site {
            None => Ok(self.dispersal.delta),
            Some(_) => Err(Error::config(
                "dispersal.per_site",
                format!("{analysis} needs a scalar delta"),
            )),
        }
    }

    pub fn release_profile(&self, amplitude: f64) -> Result<ReleaseProfile> {
        Ok(ReleaseProfile::new(self.profile.shape, amplitude, self.profile.half_width)
            .map_err(|e| range("profile", e))?
            .with_center(self.profile.center))
    }

    pub fn wave_setup(&self) -> Result<WaveSetup> {
        check("lattice.ny", self.lattice.ny.is_none(), "wave experiments run on a line")?;
        let params = self.growth_params()?;
        Ok(WaveSetup {
            s_h: params.s_h(),
            allee: params.allee_threshold(),
            delta: self.scalar_delta("wavespeed")?,
            spacing: self.lattice.spacing,
            sites: self.lattice.nx,
            generations: self.generations,
            amplitude: self.profile.amplitude,
            level: self.waves.level,
            tail_fraction: self.waves.tail_fraction,
        })
    }

    pub fn wave_kernels(&self) -> Vec<(String, KernelSpec)> {
        match self.waves.kernels {
            KernelSet::Config => vec![(self.kernel.family_name().to_string(), self.kernel)],
            KernelSet::Reference => reference_kernels(),
        }
    }

    pub fn optimize_config(&self, profile: ProfileShape) -> Result<OptimizeConfig> {
        check("lattice.ny", self.lattice.ny.is_none(), "optimization runs on a line")?;
        let o = &self.optimize;
        Ok(OptimizeConfig {
            kernel: self.kernel,
            params: self.growth_params()?,
            delta: self.scalar_delta("optimize")?,
            profile,
            half_widths: o.half_widths.clone(),
            a_lo: o.a_lo,
            a_hi: o.a_hi,
            beta: o.beta,
            predicate: o.predicate,
            sites: self.lattice.nx,
            generations: self.generations,
            spacing: self.lattice.spacing,
            ks: o.ks.clone(),
            tolerance: o.tolerance,
            step: o.step,
            method: self.outbreak.method,
            epsilon_fix: self.outbreak.epsilon_fix,
        })
    }

    pub fn compare_kernels(&self) -> Vec<(String, KernelSpec)> {
        if self.compare.kernels.is_empty() {
            vec![(self.kernel.family_name().to_string(), self.kernel)]
        } else {
            self.compare.kernels.iter().map(|k| (k.label.clone(), k.kernel)).collect()
        }
    }

    /// Canonical JSON of the resolved config.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[growth]
s_f = 0.3
s_h = 0.7

[kernel]
family = "gaussian"
sigma = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL, "minimal").unwrap();
        assert_eq!(c.lattice.spacing, 1.0);
        assert_eq!(c.lattice.boundary, Boundary::Periodic);
        assert_eq!(c.waves.level, 0.5);
        assert_eq!(c.outbreak.horizon, Some(c.generations));
        assert!((c.growth.allee.unwrap() - 3.0 / 7.0).abs() < 1e-15);
        let echoed = c.to_json();
        assert_eq!(echoed["lattice"]["spacing"], 1.0);
        assert_eq!(echoed["optimize"]["half_widths"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = format!("{MINIMAL}\n[lattice]\nnx = 100\nspcing = 0.1\n");
        match ExperimentConfig::from_toml(&text, "x") {
            Err(Error::Config { path, reason }) => {
                assert_eq!(path, "lattice.spcing");
                assert!(reason.contains("spcing"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("sigma = 1.0", "sigma = 1.0\nwidth = 2");
        assert!(matches!(ExperimentConfig::from_toml(&bad, "x"), Err(Error::Config { .. })));
    }

    #[test]
    fn growth_range_error_names_invariant() {
        let text = MINIMAL.replace("s_f = 0.3", "s_f = 0.8");
        let err = ExperimentConfig::from_toml(&text, "x").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("GrowthParams") && msg.contains("s_f < s_h"), "{msg}");
    }

    #[test]
    fn allee_form_and_conflicts() {
        let text = MINIMAL.replace("s_f = 0.3", "allee = 0.4").replace("s_h = 0.7", "s_h = 0.8");
        let c = ExperimentConfig::from_toml(&text, "x").unwrap();
        assert!((c.growth.s_f.unwrap() - 0.32).abs() < 1e-15);
        let both = MINIMAL.replace("s_f = 0.3", "s_f = 0.3\nallee = 0.5");
        assert!(ExperimentConfig::from_toml(&both, "x").is_err());
    }

    #[test]
    fn optimize_ranges_checked() {
        let text = format!("{MINIMAL}\n[optimize]\nbeta = 1.5\n");
        assert!(matches!(ExperimentConfig::from_toml(&text, "x"), Err(Error::Config { .. })));
        let text = format!("{MINIMAL}\n[optimize]\na_lo = 0.6\na_hi = 0.5\n");
        assert!(ExperimentConfig::from_toml(&text, "x").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::from_toml(MINIMAL, "x").unwrap();
        let text = toml::to_string(&c).unwrap();
        let back = ExperimentConfig::from_toml(&text, "y").unwrap();
        assert_eq!(back, c);
    }
}
