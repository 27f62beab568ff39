//! Lattice state, release profiles, and the one-generation update
//!
//! ```text
//! v_i(t+1) = (1 - d_i) f(v_i(t)) + sum_j d_j K_ij f(v_j(t))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::GrowthParams;
use crate::grid::{Boundary, GridShape};
use crate::kernels::DiscreteKernel;
use crate::spectral::Convolver;

pub const MIN_EXTENT: usize = 8;

/// Stored-value ceiling for one trajectory (about 512 MiB of `f64`).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 26;

const VALUE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    shape: GridShape,
    spacing: f64,
    boundary: Boundary,
    origin: [usize; 2],
}

impl LatticeConfig {
    /// Centered lattice (`origin = extent / 2` per axis) with periodic boundaries.
    pub fn new(shape: GridShape, spacing: f64) -> Result<Self> {
        let [nx, ny] = shape.extents();
        if nx < MIN_EXTENT || (shape.dimension() == 2 && ny < MIN_EXTENT) {
            return Err(Error::invalid(
                "LatticeConfig",
                format!("every extent must be at least {MIN_EXTENT}, got {shape:?}"),
            ));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid("LatticeConfig", format!("spacing must be positive, got {spacing}")));
        }
        Ok(Self {
            shape,
            spacing,
            boundary: Boundary::Periodic,
            origin: [nx / 2, ny / 2],
        })
    }

    pub fn line(n: usize, spacing: f64) -> Result<Self> {
        Self::new(GridShape::Line(n), spacing)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_origin(mut self, origin: [usize; 2]) -> Result<Self> {
        let [nx, ny] = self.shape.extents();
        if origin[0] >= nx || origin[1] >= ny {
            return Err(Error::invalid("LatticeConfig", format!("origin {origin:?} outside {:?}", self.shape)));
        }
        self.origin = origin;
        Ok(self)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn dimension(&self) -> usize {
        self.shape.dimension()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn origin(&self) -> [usize; 2] {
        self.origin
    }

    /// Physical coordinate `(i - origin) h` of site `(x, y)`.
    pub fn coordinate(&self, x: usize, y: usize) -> [f64; 2] {
        [
            (x as f64 - self.origin[0] as f64) * self.spacing,
            (y as f64 - self.origin[1] as f64) * self.spacing,
        ]
    }

    /// Coordinates along the first axis.
    pub fn axis_coordinates(&self) -> Vec<f64> {
        (0..self.shape.extents()[0]).map(|x| self.coordinate(x, 0)[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    shape: GridShape,
    values: Vec<f64>,
    generation: usize,
}

impl LatticeField {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Shape(format!("{} values for a grid of {} sites", values.len(), shape.len())));
        }
        if let Some(&bad) = values.iter().find(|v| !(**v >= -VALUE_TOL && **v <= 1.0 + VALUE_TOL)) {
            return Err(Error::Domain { value: bad });
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { shape, values, generation: 0 })
    }

    pub fn constant(shape: GridShape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn with_generation(mut self, generation: usize) -> Self {
        self.generation = generation;
        self
    }

    /// Same shape and generation, new values (not range-checked).
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            shape: self.shape,
            values,
            generation: self.generation,
        }
    }

    /// Circular shift by `(dx, dy)` sites.
    pub fn shifted(&self, dx: i64, dy: i64) -> Self {
        let [nx, ny] = self.shape.extents();
        let mut out = vec![0.0; self.values.len()];
        for y in 0..ny {
            for x in 0..nx {
                let tx = (x as i64 + dx).rem_euclid(nx as i64) as usize;
                let ty = (y as i64 + dy).rem_euclid(ny as i64) as usize;
                out[ty * nx + tx] = self.values[y * nx + x];
            }
        }
        self.with_values(out)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    #[default]
    Pulse,
    Triangular,
    Quadratic,
}

impl ProfileShape {
    pub const ALL: [ProfileShape; 3] = [ProfileShape::Pulse, ProfileShape::Quadratic, ProfileShape::Triangular];

    pub fn name(&self) -> &'static str {
        match self {
            ProfileShape::Pulse => "pulse",
            ProfileShape::Triangular => "triangular",
            ProfileShape::Quadratic => "quadratic",
        }
    }
}

/// Initial release `v_0(x)` of amplitude `a` on `|x - center| <= L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseProfile {
    shape: ProfileShape,
    amplitude: f64,
    half_width: f64,
    center: f64,
}

impl ReleaseProfile {
    /// `half_width` may be infinite, meaning the whole lattice.
    pub fn new(shape: ProfileShape, amplitude: f64, half_width: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude <= 1.0) {
            return Err(Error::invalid("ReleaseProfile", format!("amplitude must lie in (0, 1], got {amplitude}")));
        }
        if !(half_width > 0.0) {
            return Err(Error::invalid("ReleaseProfile", format!("half-width must be positive, got {half_width}")));
        }
        Ok(Self {
            shape,
            amplitude,
            half_width,
            center: 0.0,
        })
    }

    /// Center in length units relative to the lattice origin.
    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn with_amplitude(self, amplitude: f64) -> Result<Self> {
        Self::new(self.shape, amplitude, self.half_width).map(|p| p.with_center(self.center))
    }

    pub fn shape(&self) -> ProfileShape {
        self.shape
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Profile value at distance `r >= 0` from the center. The support edge
    /// `r = L` is included (with a relative tolerance for grid round-off).
    pub fn value_at(&self, r: f64) -> f64 {
        let l = self.half_width;
        if r > l * (1.0 + 1e-12) {
            return 0.0;
        }
        let u = (r / l).min(1.0);
        let value = match self.shape {
            ProfileShape::Pulse => self.amplitude,
            ProfileShape::Triangular => self.amplitude * (1.0 - u),
            ProfileShape::Quadratic => self.amplitude * (1.0 - u * u),
        };
        value.clamp(0.0, 1.0)
    }

    /// Release cost, the integral of `v_0` over the line.
    pub fn cost(&self) -> f64 {
        let (a, l) = (self.amplitude, self.half_width);
        match self.shape {
            ProfileShape::Pulse => 2.0 * a * l,
            ProfileShape::Triangular => a * l,
            ProfileShape::Quadratic => 4.0 * a * l / 3.0,
        }
    }
}

/// Samples the profile at every site (radially in 2D).
pub fn init_field(config: &LatticeConfig, profile: &ReleaseProfile) -> Result<LatticeField> {
    let [nx, ny] = config.shape().extents();
    if profile.half_width.is_finite() {
        let lo = config.coordinate(0, 0);
        let hi = config.coordinate(nx - 1, ny - 1);
        let slack = 1e-9 * config.spacing();
        let c = profile.center;
        let l = profile.half_width;
        let fits_axis = |lo: f64, hi: f64, c: f64| c - l >= lo - slack && c + l <= hi + slack;
        let fits = fits_axis(lo[0], hi[0], c) && (config.dimension() == 1 || fits_axis(lo[1], hi[1], 0.0));
        if !fits {
            return Err(Error::invalid(
                "ReleaseProfile",
                format!("support [{}, {}] exceeds the lattice [{}, {}]", c - l, c + l, lo[0], hi[0]),
            ));
        }
    }
    let mut values = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let [px, py] = config.coordinate(x, y);
            let r = if config.dimension() == 2 {
                (px - profile.center).hypot(py)
            } else {
                (px - profile.center).abs()
            };
            values.push(profile.value_at(r));
        }
    }
    LatticeField::new(config.shape(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersalSetting {
    Constant(f64),
    PerSite(Vec<f64>),
}

impl DispersalSetting {
    pub fn constant(delta: f64) -> Result<Self> {
        let setting = DispersalSetting::Constant(delta);
        setting.validate(None)?;
        Ok(setting)
    }

    pub fn validate(&self, sites: Option<usize>) -> Result<()> {
        match self {
            DispersalSetting::Constant(d) => {
                if !(*d > 0.0 && *d <= 1.0) {
                    return Err(Error::invalid("delta", format!("constant dispersal must lie in (0, 1], got {d}")));
                }
            }
            DispersalSetting::PerSite(ds) => {
                if let Some(bad) = ds.iter().find(|d| !(**d >= 0.0 && **d <= 1.0)) {
                    return Err(Error::invalid("delta", format!("per-site dispersal must lie in [0, 1], got {bad}")));
                }
                if let Some(n) = sites {
                    if ds.len() != n {
                        return Err(Error::Shape(format!("{} dispersal entries for {n} sites", ds.len())));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            DispersalSetting::Constant(d) => Some(*d),
            DispersalSetting::PerSite(_) => None,
        }
    }
}

/// Trajectory storage policy: keep every `stride`-th generation plus the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Storage {
    pub stride: usize,
    pub memory_budget: usize,
}

impl Default for Storage {
    fn default() -> Self {
        Self {
            stride: 1,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl Storage {
    pub fn strided(stride: usize) -> Self {
        Self { stride, ..Self::default() }
    }

    fn rows(&self, generations: usize) -> usize {
        let kept = generations / self.stride + 1;
        if generations.is_multiple_of(self.stride) {
            kept
        } else {
            kept + 1
        }
    }
}

/// Stored generations of one run, row-major per generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    config: LatticeConfig,
    generations: Vec<usize>,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(config: LatticeConfig) -> Self {
        Self {
            config,
            generations: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, generation: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.config.shape().len() {
            return Err(Error::Shape(format!("row of {} values for {} sites", values.len(), self.config.shape().len())));
        }
        if self.generations.last().is_some_and(|&g| g >= generation) {
            return Err(Error::Format(format!("generation {generation} is not increasing")));
        }
        self.generations.push(generation);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn sites(&self) -> usize {
        self.config.shape().len()
    }

    /// Number of stored rows.
    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }

    pub fn generations(&self) -> &[usize] {
        &self.generations
    }

    pub fn last_generation(&self) -> Option<usize> {
        self.generations.last().copied()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let n = self.sites();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.generations.iter().copied().zip(self.data.chunks_exact(self.sites().max(1)))
    }

    /// Values at generation `t` if that generation was stored.
    pub fn at(&self, t: usize) -> Option<&[f64]> {
        self.generations.binary_search(&t).ok().map(|i| self.row(i))
    }

    pub fn field(&self, index: usize) -> LatticeField {
        LatticeField {
            shape: self.config.shape(),
            values: self.row(index).to_vec(),
            generation: self.generations[index],
        }
    }

    pub fn final_field(&self) -> Option<LatticeField> {
        (!self.is_empty()).then(|| self.field(self.len() - 1))
    }

    /// True when every generation from 0 to the last is stored.
    pub fn is_contiguous(&self) -> bool {
        self.generations.iter().enumerate().all(|(i, &g)| i == g)
    }

    /// Time series `v(t, site)` over all stored rows.
    pub fn series(&self, site: usize) -> Vec<f64> {
        let n = self.sites();
        self.data.iter().skip(site).step_by(n).copied().collect()
    }
}

/// A configured WLDE: lattice, growth map, dispersal, and kernel.
pub struct Wlde {
    config: LatticeConfig,
    params: GrowthParams,
    dispersal: DispersalSetting,
    conv: Convolver,
    grown: Vec<f64>,
    spread: Vec<f64>,
}

impl Wlde {
    pub fn new(
        config: LatticeConfig,
        params: GrowthParams,
        dispersal: DispersalSetting,
        kernel: &DiscreteKernel,
    ) -> Result<Self> {
        dispersal.validate(Some(config.shape().len()))?;
        let conv = Convolver::new(kernel, config.shape(), config.boundary())?;
        let n = config.shape().len();
        Ok(Self {
            config,
            params,
            dispersal,
            conv,
            grown: vec![0.0; n],
            spread: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn params(&self) -> &GrowthParams {
        &self.params
    }

    pub fn step(&mut self, field: &LatticeField) -> Result<LatticeField> {
        if field.shape() != self.config.shape() {
            return Err(Error::Shape(format!(
                "field shape {:?} does not match lattice {:?}",
                field.shape(),
                self.config.shape()
            )));
        }
        let mut values = field.values.clone();
        self.advance(&mut values);
        Ok(LatticeField {
            shape: field.shape,
            values,
            generation: field.generation + 1,
        })
    }

    /// Advances `values` by one generation in place.
    pub fn advance(&mut self, values: &mut [f64]) {
        for (g, &v) in self.grown.iter_mut().zip(values.iter()) {
            *g = self.params.apply(v);
        }
        match &self.dispersal {
            DispersalSetting::Constant(delta) => {
                let delta = *delta;
                self.conv.apply(&self.grown, &mut self.spread);
                for ((out, &g), &s) in values.iter_mut().zip(&self.grown).zip(&self.spread) {
                    *out = ((1.0 - delta) * g + delta * s).clamp(0.0, 1.0);
                }
            }
            DispersalSetting::PerSite(deltas) => {
                let weighted: Vec<f64> = self.grown.iter().zip(deltas).map(|(g, d)| g * d).collect();
                self.conv.apply(&weighted, &mut self.spread);
                for (((out, &g), &s), &d) in values.iter_mut().zip(&self.grown).zip(&self.spread).zip(deltas) {
                    *out = ((1.0 - d) * g + s).clamp(0.0, 1.0);
                }
            }
        }
    }

    /// Runs `generations` steps from `initial`, storing rows per `storage`.
    pub fn simulate(&mut self, initial: &LatticeField, generations: usize, storage: Storage) -> Result<Trajectory> {
        if storage.stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        let requested = storage.rows(generations).saturating_mul(self.config.shape().len());
        if requested > storage.memory_budget {
            return Err(Error::MemoryBudget {
                requested,
                budget: storage.memory_budget,
            });
        }
        let mut trajectory = Trajectory::new(self.config);
        self.run(initial, generations, |t, values| {
            if t % storage.stride == 0 || t == generations {
                trajectory.push(t, values).expect("rows are pushed in order");
            }
            true
        })?;
        Ok(trajectory)
    }

    /// Runs up to `generations` steps, calling `observe(t, values)` at every
    /// generation including 0; stops early when the observer returns false.
    /// Returns the last generation reached.
    pub fn run<F>(&mut self, initial: &LatticeField, generations: usize, mut observe: F) -> Result<usize>
    where
        F: FnMut(usize, &[f64]) -> bool,
    {
        if initial.shape() != self.config.shape() {
            return Err(Error::Shape(format!(
                "initial field {:?} does not match lattice {:?}",
                initial.shape(),
                self.config.shape()
            )));
        }
        let mut values = initial.values.clone();
        if !observe(0, &values) {
            return Ok(0);
        }
        for t in 1..=generations {
            self.advance(&mut values);
            if !observe(t, &values) {
                return Ok(t);
            }
        }
        Ok(generations)
    }
}

/// One generation of the update with a freshly built operator.
pub fn step(
    field: &LatticeField,
    config: &LatticeConfig,
    params: &GrowthParams,
    dispersal: &DispersalSetting,
    kernel: &DiscreteKernel,
) -> Result<LatticeField> {
    Wlde::new(*config, *params, dispersal.clone(), kernel)?.step(field)
}

/// Full trajectory from a release profile, every generation stored.
pub fn simulate(
    config: &LatticeConfig,
    profile: &ReleaseProfile,
    params: &GrowthParams,
    dispersal: &DispersalSetting,
    kernel: &DiscreteKernel,
    generations: usize,
) -> Result<Trajectory> {
    let initial = init_field(config, profile)?;
    Wlde::new(*config, *params, dispersal.clone(), kernel)?.simulate(&initial, generations, Storage::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{discretize, KernelSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gauss(dim: usize) -> DiscreteKernel {
        discretize(&KernelSpec::Gaussian { sigma: 1.5 }, dim, 5).unwrap()
    }

    #[test]
    fn pulse_profile() {
        let cfg = LatticeConfig::line(41, 1.0).unwrap();
        let p = ReleaseProfile::new(ProfileShape::Pulse, 0.2, 2.0).unwrap();
        let f = init_field(&cfg, &p).unwrap();
        let nonzero: Vec<usize> = (0..41).filter(|&i| f.values()[i] > 0.0).collect();
        assert_eq!(nonzero, vec![18, 19, 20, 21, 22]);
        assert!(nonzero.iter().all(|&i| f.values()[i] == 0.2));
        assert_eq!(f.generation(), 0);

        let fine = LatticeConfig::line(401, 0.1).unwrap();
        let f = init_field(&fine, &p).unwrap();
        assert_eq!(f.values().iter().filter(|v| **v > 0.0).count(), 41);
    }

    #[test]
    fn triangular_and_quadratic_profiles() {
        let cfg = LatticeConfig::line(21, 1.0).unwrap();
        let tri = init_field(&cfg, &ReleaseProfile::new(ProfileShape::Triangular, 0.4, 2.0).unwrap()).unwrap();
        assert_relative_eq!(tri.values()[10], 0.4);
        assert_relative_eq!(tri.values()[9], 0.2);
        assert_relative_eq!(tri.values()[11], 0.2);
        assert_eq!(tri.values()[8], 0.0);
        assert_eq!(tri.values()[13], 0.0);

        let quad = init_field(&cfg, &ReleaseProfile::new(ProfileShape::Quadratic, 0.3, 2.0).unwrap()).unwrap();
        assert_relative_eq!(quad.values()[11], 0.225, epsilon = 1e-15);
    }

    #[test]
    fn profile_must_fit() {
        let cfg = LatticeConfig::line(21, 1.0).unwrap();
        let wide = ReleaseProfile::new(ProfileShape::Pulse, 0.5, 15.0).unwrap();
        assert!(init_field(&cfg, &wide).is_err());
        let everywhere = ReleaseProfile::new(ProfileShape::Pulse, 1.0, f64::INFINITY).unwrap();
        assert!(init_field(&cfg, &everywhere).unwrap().values().iter().all(|v| *v == 1.0));
        assert!(ReleaseProfile::new(ProfileShape::Pulse, 0.0, 1.0).is_err());
        assert!(ReleaseProfile::new(ProfileShape::Pulse, 0.5, 0.0).is_err());
        assert!(LatticeConfig::line(7, 1.0).is_err());
        assert!(LatticeConfig::line(8, 0.0).is_err());
    }

    #[test]
    fn costs() {
        let c = |s, a, l| ReleaseProfile::new(s, a, l).unwrap().cost();
        assert_relative_eq!(c(ProfileShape::Pulse, 0.2, 0.5), 0.2, epsilon = 1e-15);
        assert_relative_eq!(c(ProfileShape::Triangular, 0.33, 1.0), 0.33, epsilon = 1e-15);
        assert_relative_eq!(c(ProfileShape::Quadratic, 0.3, 1.5), 0.6, epsilon = 1e-15);

        // Riemann sums on a fine lattice agree with the closed forms.
        let cfg = LatticeConfig::line(4001, 0.001).unwrap();
        for shape in ProfileShape::ALL {
            let p = ReleaseProfile::new(shape, 0.3, 1.5).unwrap();
            let f = init_field(&cfg, &p).unwrap();
            let integral: f64 = f.values().iter().sum::<f64>() * 0.001;
            assert!((integral - p.cost()).abs() < 2e-3, "{shape:?}");
        }
    }

    #[test]
    fn homogeneous_fixed_points_and_collapse() {
        let cfg = LatticeConfig::line(32, 1.0).unwrap();
        let params = GrowthParams::new(0.3, 0.7).unwrap();
        let k = gauss(1);
        let d = DispersalSetting::constant(0.6).unwrap();
        for c in [0.0, 1.0] {
            let f = LatticeField::constant(cfg.shape(), c).unwrap();
            let next = step(&f, &cfg, &params, &d, &k).unwrap();
            assert!(next.values().iter().all(|v| (v - c).abs() < 1e-15));
            assert_eq!(next.generation(), 1);
        }
        let f = LatticeField::constant(cfg.shape(), 0.55).unwrap();
        let next = step(&f, &cfg, &params, &d, &k).unwrap();
        let expected = params.evaluate(0.55).unwrap();
        assert!(next.values().iter().all(|v| (v - expected).abs() < 1e-12));
    }

    #[test]
    fn simulate_examples() {
        let cfg = LatticeConfig::line(64, 1.0).unwrap();
        let params = GrowthParams::from_allee(0.8, 0.4).unwrap();
        let d = DispersalSetting::constant(0.3).unwrap();
        let k = gauss(1);
        let p = ReleaseProfile::new(ProfileShape::Pulse, 0.2, 10.0).unwrap();
        let traj0 = simulate(&cfg, &p, &params, &d, &k, 0).unwrap();
        assert_eq!(traj0.len(), 1);

        let full = ReleaseProfile::new(ProfileShape::Pulse, 1.0, f64::INFINITY).unwrap();
        let ones = simulate(&cfg, &full, &params, &d, &k, 20).unwrap();
        assert!(ones.rows().all(|(_, r)| r.iter().all(|v| (v - 1.0).abs() < 1e-14)));

        let traj = simulate(&cfg, &p, &params, &d, &k, 100).unwrap();
        let maxima: Vec<f64> = traj.rows().map(|(_, r)| r.iter().copied().fold(0.0, f64::max)).collect();
        assert!(maxima.windows(2).all(|w| w[1] <= w[0]));
        assert!(*maxima.last().unwrap() < 1e-6);
    }

    #[test]
    fn strided_storage_and_budget() {
        let cfg = LatticeConfig::line(16, 1.0).unwrap();
        let params = GrowthParams::new(0.3, 0.7).unwrap();
        let mut model = Wlde::new(cfg, params, DispersalSetting::Constant(0.5), &gauss(1)).unwrap();
        let init = LatticeField::constant(cfg.shape(), 0.5).unwrap();
        let traj = model.simulate(&init, 10, Storage::strided(4)).unwrap();
        assert_eq!(traj.generations(), &[0, 4, 8, 10]);
        assert!(!traj.is_contiguous());
        let err = model
            .simulate(&init, 10, Storage { stride: 1, memory_budget: 100 })
            .unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { .. }));
    }

    #[test]
    fn deterministic_runs() {
        let cfg = LatticeConfig::line(50, 1.0).unwrap();
        let params = GrowthParams::new(0.3, 0.7).unwrap();
        let d = DispersalSetting::Constant(0.5);
        let k = discretize(&KernelSpec::Cauchy { gamma: 1.0 }, 1, 24).unwrap();
        let p = ReleaseProfile::new(ProfileShape::Quadratic, 0.9, 5.0).unwrap();
        let a = simulate(&cfg, &p, &params, &d, &k, 30).unwrap();
        let b = simulate(&cfg, &p, &params, &d, &k, 30).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_site_dispersal_matches_constant() {
        let cfg = LatticeConfig::line(30, 1.0).unwrap();
        let params = GrowthParams::new(0.2, 0.9).unwrap();
        let values: Vec<f64> = (0..30).map(|i| (i as f64 / 29.0).powi(2)).collect();
        let field = LatticeField::new(cfg.shape(), values).unwrap();
        let k = gauss(1);
        let a = step(&field, &cfg, &params, &DispersalSetting::Constant(0.4), &k).unwrap();
        let b = step(&field, &cfg, &params, &DispersalSetting::PerSite(vec![0.4; 30]), &k).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(DispersalSetting::PerSite(vec![0.4; 29]).validate(Some(30)).is_err());
        assert!(DispersalSetting::constant(0.0).is_err());
    }

    #[test]
    fn absorbing_boundary_keeps_fixed_points() {
        let cfg = LatticeConfig::line(40, 1.0).unwrap().with_boundary(Boundary::AbsorbingRenormalized);
        let params = GrowthParams::new(0.3, 0.7).unwrap();
        let f = LatticeField::constant(cfg.shape(), 1.0).unwrap();
        let next = step(&f, &cfg, &params, &DispersalSetting::Constant(0.9), &gauss(1)).unwrap();
        assert!(next.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    fn setup() -> impl Strategy<Value = (GrowthParams, f64, bool, u64)> {
        (0.01f64..0.9, 0.05f64..0.95, 0.01f64..=1.0, any::<bool>(), any::<u64>())
            .prop_filter("s_f < s_h", |(a, b, ..)| a < b)
            .prop_map(|(a, b, d, plane, seed)| (GrowthParams::new(a, b).unwrap(), d, plane, seed))
    }

    fn random_values(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn lattice(plane: bool) -> LatticeConfig {
        if plane {
            LatticeConfig::new(GridShape::Plane(12, 10), 1.0).unwrap()
        } else {
            LatticeConfig::line(48, 1.0).unwrap()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn update_stays_in_unit_interval((params, delta, plane, seed) in setup()) {
            let cfg = lattice(plane);
            let k = discretize(&KernelSpec::Laplace { b: 2.0 }, cfg.dimension(), 4).unwrap();
            let field = LatticeField::new(cfg.shape(), random_values(cfg.shape().len(), seed)).unwrap();
            let next = step(&field, &cfg, &params, &DispersalSetting::Constant(delta), &k).unwrap();
            prop_assert!(next.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn homogeneous_states_follow_the_scalar_map((params, delta, plane, seed) in setup()) {
            let cfg = lattice(plane);
            let c = random_values(1, seed)[0];
            let field = LatticeField::constant(cfg.shape(), c).unwrap();
            let next = step(&field, &cfg, &params, &DispersalSetting::Constant(delta), &gauss(cfg.dimension())).unwrap();
            let expected = params.evaluate(c).unwrap();
            prop_assert!(next.values().iter().all(|v| (v - expected).abs() < 1e-12));
        }

        #[test]
        fn update_is_monotone((params, delta, plane, seed) in setup()) {
            let cfg = lattice(plane);
            let n = cfg.shape().len();
            let lower = random_values(n, seed);
            let upper: Vec<f64> = lower.iter().zip(random_values(n, seed ^ 0x5555)).map(|(l, e)| (l + e * (1.0 - l)).min(1.0)).collect();
            let k = gauss(cfg.dimension());
            let d = DispersalSetting::Constant(delta);
            let a = step(&LatticeField::new(cfg.shape(), lower).unwrap(), &cfg, &params, &d, &k).unwrap();
            let b = step(&LatticeField::new(cfg.shape(), upper).unwrap(), &cfg, &params, &d, &k).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(*x <= *y + 1e-12);
            }
        }

        #[test]
        fn translation_equivariance((params, delta, plane, seed) in setup(), shift in 1i64..7) {
            let cfg = lattice(plane);
            let k = discretize(&KernelSpec::Cauchy { gamma: 1.0 }, cfg.dimension(), 4).unwrap();
            let mut model = Wlde::new(cfg, params, DispersalSetting::Constant(delta), &k).unwrap();
            let field = LatticeField::new(cfg.shape(), random_values(cfg.shape().len(), seed)).unwrap();
            let dy = if plane { 2 } else { 0 };
            let mut a = field.clone();
            let mut b = field.shifted(shift, dy);
            for _ in 0..5 {
                a = model.step(&a).unwrap();
                b = model.step(&b).unwrap();
            }
            for (x, y) in a.shifted(shift, dy).values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
