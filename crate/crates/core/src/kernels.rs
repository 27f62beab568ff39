//! Dispersal kernel families, their lattice discretizations, and their
//! Fourier transforms.
//!
//! A [`KernelSpec`] names an analytic density with scale parameters in
//! lattice-spacing units. [`discretize`] samples it at integer offsets inside a
//! square truncation window and renormalizes so the weights sum to exactly one
//! (every row of the dispersal matrix is stochastic). The numeric transform
//! of the embedded weights is authoritative; the closed forms are kept for
//! comparison.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{Boundary, GridShape};
use crate::lattice::LatticeField;
use crate::spectral::{fft_in_place, Convolver};

/// Kernel mass captured by the truncation window must be at least this much.
pub const MIN_CAPTURED_MASS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `gamma / (pi (gamma^2 + m^2))` on a line; the isotropic
    /// `gamma / (2 pi (gamma^2 + |m|^2)^(3/2))` on a plane.
    Cauchy { gamma: f64 },
    /// `C / (1 + |m/scale|^2)^(exponent/2)`; `scale = 1` is the textbook form.
    PowerLaw {
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Isotropic Gaussian with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// Box of equal weights on `|m| <= half_width` per axis.
    Uniform { half_width: f64 },
    /// Two-sided exponential `exp(-|m|/b) / (2b)` per axis (product form in 2D).
    Laplace { b: f64 },
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Cauchy { .. } => "cauchy",
            KernelSpec::PowerLaw { .. } => "power_law",
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Uniform { .. } => "uniform",
            KernelSpec::Laplace { .. } => "laplace",
        }
    }

    /// Heavy-tailed families default to the widest truncation window.
    pub fn is_heavy_tailed(&self) -> bool {
        matches!(self, KernelSpec::Cauchy { .. } | KernelSpec::PowerLaw { .. })
    }

    /// The family's length parameter (exponent excluded).
    pub fn scale(&self) -> f64 {
        match *self {
            KernelSpec::Cauchy { gamma } => gamma,
            KernelSpec::PowerLaw { scale, .. } => scale,
            KernelSpec::Gaussian { sigma } => sigma,
            KernelSpec::Uniform { half_width } => half_width,
            KernelSpec::Laplace { b } => b,
        }
    }

    /// Returns the same family with its length parameter multiplied by `factor`.
    /// Converting a spec given in length units to lattice units is `with_scale_factor(1/h)`.
    pub fn with_scale_factor(&self, factor: f64) -> Self {
        match *self {
            KernelSpec::Cauchy { gamma } => KernelSpec::Cauchy {
                gamma: gamma * factor,
            },
            KernelSpec::PowerLaw { exponent, scale } => KernelSpec::PowerLaw {
                exponent,
                scale: scale * factor,
            },
            KernelSpec::Gaussian { sigma } => KernelSpec::Gaussian {
                sigma: sigma * factor,
            },
            KernelSpec::Uniform { half_width } => KernelSpec::Uniform {
                half_width: half_width * factor,
            },
            KernelSpec::Laplace { b } => KernelSpec::Laplace { b: b * factor },
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if !(dimension == 1 || dimension == 2) {
            return Err(Error::invalid("dimension", format!("must be 1 or 2, got {dimension}")));
        }
        let s = self.scale();
        let positive = match self {
            // A zero half-width is the single-site box.
            KernelSpec::Uniform { .. } => s.is_finite() && s >= 0.0,
            _ => s.is_finite() && s > 0.0,
        };
        if !positive {
            return Err(Error::invalid(
                "KernelSpec",
                format!("{} scale must be positive, got {s}", self.family_name()),
            ));
        }
        if let KernelSpec::PowerLaw { exponent, .. } = *self {
            if !(exponent.is_finite() && exponent > dimension as f64) {
                return Err(Error::invalid(
                    "KernelSpec",
                    format!("power-law exponent must exceed the dimension {dimension}, got {exponent}"),
                ));
            }
        }
        Ok(())
    }

    /// Default truncation radius on a grid whose smallest extent is `min_extent`:
    /// the half-grid for heavy tails, `ceil(8 * scale)` capped at the half-grid otherwise.
    pub fn default_radius(&self, min_extent: usize) -> usize {
        let half = (min_extent.saturating_sub(1) / 2).max(1);
        if self.is_heavy_tailed() {
            return half;
        }
        let wanted = match *self {
            KernelSpec::Uniform { half_width } => half_width.floor() as usize,
            _ => (8.0 * self.scale()).ceil() as usize,
        };
        wanted.clamp(1, half)
    }

    /// Analytic density at integer offset `(m, n)`; `n` is ignored in 1D.
    pub fn density(&self, dimension: usize, m: i64, n: i64) -> f64 {
        let (m, n) = (m as f64, if dimension == 2 { n as f64 } else { 0.0 });
        let r2 = m * m + n * n;
        match *self {
            KernelSpec::Cauchy { gamma } => {
                if dimension == 2 {
                    gamma / (2.0 * PI * (gamma * gamma + r2).powf(1.5))
                } else {
                    gamma / (PI * (gamma * gamma + r2))
                }
            }
            KernelSpec::PowerLaw { exponent, scale } => {
                power_law_constant(dimension, exponent, scale)
                    * (1.0 + r2 / (scale * scale)).powf(-exponent / 2.0)
            }
            KernelSpec::Gaussian { sigma } => {
                let norm = (2.0 * PI * sigma * sigma).powf(dimension as f64 / 2.0);
                (-r2 / (2.0 * sigma * sigma)).exp() / norm
            }
            KernelSpec::Uniform { half_width } => {
                let w = uniform_cells(half_width);
                let inside = |x: f64| x.abs() <= w as f64;
                let cells = (2 * w + 1) as f64;
                let mut value = if inside(m) { 1.0 / cells } else { 0.0 };
                if dimension == 2 {
                    value *= if inside(n) { 1.0 / cells } else { 0.0 };
                }
                value
            }
            KernelSpec::Laplace { b } => {
                let axis = |x: f64| (-x.abs() / b).exp() / (2.0 * b);
                if dimension == 2 {
                    axis(m) * axis(n)
                } else {
                    axis(m)
                }
            }
        }
    }
}

/// Integer half-width of the uniform box (tolerant to representation error).
fn uniform_cells(half_width: f64) -> usize {
    (half_width + 1e-9).floor() as usize
}

// Continuous normalization of (1 + (r/l)^2)^(-g/2). Only used to report the
// captured mass; the weights themselves are renormalized.
fn power_law_constant(dimension: usize, exponent: f64, scale: f64) -> f64 {
    if dimension == 2 {
        (exponent - 2.0) / (2.0 * PI * scale * scale)
    } else {
        let ln_integral =
            0.5 * PI.ln() + ln_gamma((exponent - 1.0) / 2.0) - ln_gamma(exponent / 2.0);
        (-ln_integral).exp() / scale
    }
}

/// A normalized, symmetric lattice kernel on the square window `[-R, R]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    spec: Option<KernelSpec>,
    dimension: usize,
    radius: usize,
    weights: Vec<f64>,
    captured_mass: f64,
}

impl DiscreteKernel {
    /// The identity kernel (all mass at offset zero).
    pub fn delta(dimension: usize) -> Self {
        Self {
            spec: None,
            dimension,
            radius: 0,
            weights: vec![1.0],
            captured_mass: 1.0,
        }
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Analytic mass inside the window before renormalization.
    pub fn captured_mass(&self) -> f64 {
        self.captured_mass
    }

    fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Weight at offset `(m, n)`, zero outside the window.
    pub fn weight(&self, m: i64, n: i64) -> f64 {
        let r = self.radius as i64;
        if m.abs() > r || (self.dimension == 2 && n.abs() > r) || (self.dimension == 1 && n != 0) {
            return 0.0;
        }
        let ix = (m + r) as usize;
        if self.dimension == 1 {
            self.weights[ix]
        } else {
            self.weights[(n + r) as usize * self.side() + ix]
        }
    }

    /// Iterates `(m, n, weight)` over the window (`n = 0` in 1D).
    pub fn offsets(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        let r = self.radius as i64;
        let side = self.side();
        self.weights.iter().enumerate().map(move |(i, &w)| {
            if self.dimension == 1 {
                (i as i64 - r, 0, w)
            } else {
                ((i % side) as i64 - r, (i / side) as i64 - r, w)
            }
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sample variance of the 1D marginal offset distribution.
    pub fn marginal_variance(&self) -> f64 {
        self.offsets().map(|(m, _, w)| w * (m * m) as f64).sum()
    }

    /// Wraps the weights into a zero-filled array of the grid's size, offset
    /// `(m, n)` landing at `(m mod nx, n mod ny)`.
    pub fn embed(&self, shape: GridShape) -> Result<Vec<f64>> {
        self.check_fits(shape)?;
        let [nx, ny] = shape.extents();
        let mut out = vec![0.0; shape.len()];
        for (m, n, w) in self.offsets() {
            let x = m.rem_euclid(nx as i64) as usize;
            let y = n.rem_euclid(ny as i64) as usize;
            out[y * nx + x] += w;
        }
        Ok(out)
    }

    pub(crate) fn check_fits(&self, shape: GridShape) -> Result<()> {
        if shape.dimension() != self.dimension {
            return Err(Error::Shape(format!(
                "kernel is {}D but the grid is {}D",
                self.dimension,
                shape.dimension()
            )));
        }
        if 2 * self.radius > shape.min_extent() {
            return Err(Error::Shape(format!(
                "truncation radius {} exceeds half the grid extent {}",
                self.radius,
                shape.min_extent()
            )));
        }
        Ok(())
    }
}

/// Samples `spec` on `[-radius, radius]^dimension` and renormalizes to unit mass.
pub fn discretize(spec: &KernelSpec, dimension: usize, radius: usize) -> Result<DiscreteKernel> {
    spec.validate(dimension)?;
    if radius < 1 {
        return Err(Error::invalid("truncation_radius", "must be at least 1"));
    }
    let r = radius as i64;
    let side = 2 * radius + 1;
    let mut weights = Vec::with_capacity(side.pow(dimension as u32));
    if dimension == 1 {
        weights.extend((-r..=r).map(|m| spec.density(1, m.abs(), 0)));
    } else {
        for n in -r..=r {
            weights.extend((-r..=r).map(|m| spec.density(2, m.abs(), n.abs())));
        }
    }
    let mass: f64 = weights.iter().sum();
    if !(mass >= MIN_CAPTURED_MASS) {
        return Err(Error::Truncation { mass, radius });
    }
    weights.iter_mut().for_each(|w| *w /= mass);
    Ok(DiscreteKernel {
        spec: Some(*spec),
        dimension,
        radius,
        weights,
        captured_mass: mass,
    })
}

/// Signed frequency of DFT mode `k` on an axis of `g` sites.
fn signed_mode(k: usize, g: usize) -> f64 {
    if g <= 1 {
        0.0
    } else if 2 * k > g {
        k as f64 - g as f64
    } else {
        k as f64
    }
}

/// Closed-form transform of the infinite-support family at DFT mode `mode`
/// (`[k, l]`, `l` ignored in 1D) on `grid`.
///
/// Mode indices are folded to signed frequencies first. Uniform uses the
/// centered Dirichlet kernel of a `2w+1` box; Laplace uses the transform of
/// the normalized two-sided geometric sequence `r^|m|`, `r = exp(-1/b)`. The Cauchy
/// expression is the tabulated one with integer frequencies and does not
/// equal 1 at mode zero.
pub fn transform_closed_form(spec: &KernelSpec, mode: [usize; 2], grid: GridShape) -> Result<Complex64> {
    spec.validate(grid.dimension())?;
    let [gx, gy] = grid.extents();
    if mode[0] >= gx || (grid.dimension() == 2 && mode[1] >= gy) {
        return Err(Error::Shape(format!("mode {mode:?} outside grid {grid:?}")));
    }
    let k = signed_mode(mode[0], gx);
    let l = if grid.dimension() == 2 { signed_mode(mode[1], gy) } else { 0.0 };
    let (fx, fy) = (k / gx as f64, if grid.dimension() == 2 { l / gy as f64 } else { 0.0 });
    let value = match *spec {
        KernelSpec::Cauchy { gamma } => {
            (-2.0 * PI * gamma * (k * k + l * l).sqrt()).exp() / (1.0 + (-2.0 * PI * gamma).exp())
        }
        KernelSpec::PowerLaw { exponent, .. } => (1.0 + fx * fx + fy * fy).powf(-exponent / 2.0),
        KernelSpec::Gaussian { sigma } => (-2.0 * PI * PI * sigma * sigma * (fx * fx + fy * fy)).exp(),
        KernelSpec::Uniform { half_width } => {
            let cells = (2 * uniform_cells(half_width) + 1) as f64;
            let axis = |kk: f64, g: usize| {
                if kk == 0.0 {
                    1.0
                } else {
                    let g = g as f64;
                    (PI * kk * cells / g).sin() / (cells * (PI * kk / g).sin())
                }
            };
            axis(k, gx) * if grid.dimension() == 2 { axis(l, gy) } else { 1.0 }
        }
        KernelSpec::Laplace { b } => {
            let r = (-1.0 / b).exp();
            let axis = |f: f64| (1.0 - r).powi(2) / (1.0 - 2.0 * r * (2.0 * PI * f).cos() + r * r);
            axis(fx) * if grid.dimension() == 2 { axis(fy) } else { 1.0 }
        }
    };
    Ok(Complex64::new(value, 0.0))
}

/// Exact DFT of the kernel embedded in `grid`, in row-major mode order.
pub fn transform_numeric(kernel: &DiscreteKernel, grid: GridShape) -> Result<Vec<Complex64>> {
    let embedded = kernel.embed(grid)?;
    let mut data: Vec<Complex64> = embedded.into_iter().map(|w| Complex64::new(w, 0.0)).collect();
    fft_in_place(&mut data, grid, false);
    Ok(data)
}

/// Periodic convolution `K * field` through the FFT.
pub fn convolve(field: &LatticeField, kernel: &DiscreteKernel) -> Result<LatticeField> {
    let mut conv = Convolver::new(kernel, field.shape(), Boundary::Periodic)?;
    let mut out = vec![0.0; field.len()];
    conv.apply(field.values(), &mut out);
    Ok(field.with_values(out))
}

/// Direct-summation convolution, `O(sites * window)`.
pub fn convolve_direct(
    field: &LatticeField,
    kernel: &DiscreteKernel,
    boundary: Boundary,
) -> Result<LatticeField> {
    let shape = field.shape();
    kernel.check_fits(shape)?;
    let [nx, ny] = shape.extents();
    let values = field.values();
    let mut out = vec![0.0; values.len()];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (m, n, w) in kernel.offsets() {
                let sx = x as i64 - m;
                let sy = y as i64 - n;
                let inside = (0..nx as i64).contains(&sx) && (0..ny as i64).contains(&sy);
                match boundary {
                    Boundary::Periodic => {
                        let sx = sx.rem_euclid(nx as i64) as usize;
                        let sy = sy.rem_euclid(ny as i64) as usize;
                        acc += w * values[sy * nx + sx];
                    }
                    Boundary::AbsorbingRenormalized => {
                        if inside {
                            acc += w * values[sy as usize * nx + sx as usize];
                            mass += w;
                        }
                    }
                }
            }
            out[y * nx + x] = match boundary {
                Boundary::Periodic => acc,
                Boundary::AbsorbingRenormalized => acc / mass,
            };
        }
    }
    Ok(field.with_values(out))
}
