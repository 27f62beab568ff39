//! Linear stability of homogeneous fixed points under the lattice update.
//!
//! Mode `k` of a perturbation around `v*` is multiplied each generation by
//! `f'(v*) ((1 - d) + d K^(k))`; the fixed point is stable when the largest
//! such factor over the grid's DFT modes is below one.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::growth::GrowthParams;
use crate::kernels::{transform_numeric, DiscreteKernel};
use crate::lattice::{DispersalSetting, LatticeConfig, LatticeField, Wlde};

pub const DEFAULT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "LAS")]
    Stable,
    #[serde(rename = "UNS")]
    Unstable,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub fixed_point: f64,
    pub slope: f64,
    pub spectral_factor: f64,
    pub criterion_value: f64,
    pub verdict: Verdict,
    pub margin: f64,
    pub delta: f64,
    pub grid: GridShape,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// `max_k |(1 - d) + d K^(k)|` over every DFT mode of `grid`.
pub fn spectral_factor(kernel: &DiscreteKernel, delta: f64, grid: GridShape) -> Result<f64> {
    check_delta(delta)?;
    let spectrum = transform_numeric(kernel, grid)?;
    Ok(spectrum
        .iter()
        .map(|k| (k * delta + (1.0 - delta)).norm())
        .fold(0.0, f64::max))
}

pub fn verdict_for(criterion: f64, margin: f64) -> Verdict {
    if criterion < 1.0 - margin {
        Verdict::Stable
    } else if criterion > 1.0 + margin {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    }
}

/// Classifies one of the three homogeneous fixed points.
pub fn classify(
    fixed_point: f64,
    params: &GrowthParams,
    kernel: &DiscreteKernel,
    delta: f64,
    grid: GridShape,
    margin: f64,
) -> Result<StabilityReport> {
    if !params.fixed_points().iter().any(|p| (p - fixed_point).abs() <= 1e-12) {
        return Err(Error::invalid(
            "fixed_point",
            format!("{fixed_point} is not one of {:?}", params.fixed_points()),
        ));
    }
    let slope = params.derivative(fixed_point)?;
    let factor = spectral_factor(kernel, delta, grid)?;
    let criterion_value = slope.abs() * factor;
    Ok(StabilityReport {
        fixed_point,
        slope,
        spectral_factor: factor,
        criterion_value,
        verdict: verdict_for(criterion_value, margin),
        margin,
        delta,
        grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationOutcome {
    Decays,
    Grows,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub outcome: PerturbationOutcome,
    pub initial_deviation: f64,
    pub final_deviation: f64,
    pub generations: usize,
}

/// Simulates from `v* + eps xi`, `xi` iid uniform on `[-1, 1]` from a seeded
/// generator, and reports whether the largest deviation from `v*` falls by
/// 10x or rises by 10x within `generations` steps. At `v* = 0` and `v* = 1`
/// the perturbation is folded into `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn verify_by_perturbation(
    fixed_point: f64,
    params: &GrowthParams,
    kernel: &DiscreteKernel,
    delta: f64,
    grid: GridShape,
    epsilon: f64,
    generations: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    check_delta(delta)?;
    if !(0.0..=1e-3).contains(&epsilon) {
        return Err(Error::invalid("epsilon", format!("must lie in [0, 1e-3], got {epsilon}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..grid.len())
        .map(|_| {
            let xi: f64 = rng.random_range(-1.0..=1.0);
            let v = if fixed_point <= 0.0 {
                epsilon * xi.abs()
            } else if fixed_point >= 1.0 {
                1.0 - epsilon * xi.abs()
            } else {
                fixed_point + epsilon * xi
            };
            v.clamp(0.0, 1.0)
        })
        .collect();
    let deviation = |vs: &[f64]| vs.iter().map(|v| (v - fixed_point).abs()).fold(0.0, f64::max);
    let initial = deviation(&values);
    let mut report = PerturbationReport {
        outcome: PerturbationOutcome::Inconclusive,
        initial_deviation: initial,
        final_deviation: initial,
        generations: 0,
    };
    if initial == 0.0 {
        return Ok(report);
    }
    let config = LatticeConfig::new(grid, 1.0)?;
    let mut model = Wlde::new(config, *params, DispersalSetting::Constant(delta), kernel)?;
    let field = LatticeField::new(grid, values)?;
    model.run(&field, generations, |t, vs| {
        let dev = deviation(vs);
        report.final_deviation = dev;
        report.generations = t;
        if dev <= initial / 10.0 {
            report.outcome = PerturbationOutcome::Decays;
            return false;
        }
        if dev >= initial * 10.0 {
            report.outcome = PerturbationOutcome::Grows;
            return false;
        }
        true
    })?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub params: GrowthParams,
    pub delta: f64,
    pub fixed_points: [f64; 3],
    pub points: Vec<(f64, f64)>,
}

/// `(V, f(V) - V)` for homogeneous states on `resolution + 1` points of `[0, 1]`.
/// Dispersal leaves homogeneous states unchanged, so `delta` only labels the output.
pub fn phase_portrait(params: &GrowthParams, delta: f64, resolution: usize) -> Result<PhasePortrait> {
    check_delta(delta)?;
    if resolution < 10 {
        return Err(Error::invalid("resolution", format!("must be at least 10, got {resolution}")));
    }
    let points = (0..=resolution)
        .map(|i| {
            let v = i as f64 / resolution as f64;
            (v, params.apply(v) - v)
        })
        .collect();
    Ok(PhasePortrait {
        params: *params,
        delta,
        fixed_points: params.fixed_points(),
        points,
    })
}

impl PhasePortrait {
    /// Zeros of `dV` on the sampled grid: exact zeros plus strict sign changes.
    pub fn root_count(&self) -> usize {
        let exact = self.points.iter().filter(|(_, d)| *d == 0.0).count();
        let nonzero: Vec<f64> = self.points.iter().map(|p| p.1).filter(|d| *d != 0.0).collect();
        let crossings = nonzero.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        // A crossing whose bracketing samples straddle an exact zero was already counted.
        let straddled = self
            .points
            .windows(3)
            .filter(|w| w[1].1 == 0.0 && w[0].1 != 0.0 && w[2].1 != 0.0 && w[0].1.signum() != w[2].1.signum())
            .count();
        exact + crossings - straddled
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "v,delta_v,fixed_point")?;
        let [zero, a, one] = self.fixed_points;
        let mut rows: Vec<(f64, f64, &str)> = self.points.iter().map(|&(v, d)| (v, d, "")).collect();
        for (v, label) in [(zero, "stable"), (a, "allee"), (one, "stable")] {
            match rows.iter_mut().find(|r| r.0 == v) {
                Some(r) => r.2 = label,
                None => rows.push((v, 0.0, label)),
            }
        }
        rows.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (v, d, label) in rows {
            writeln!(out, "{v:.16e},{d:.16e},{label}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{discretize, KernelSpec};
    use approx::assert_relative_eq;

    fn gauss() -> DiscreteKernel {
        discretize(&KernelSpec::Gaussian { sigma: 1.0 }, 1, 8).unwrap()
    }

    #[test]
    fn factor_is_one_for_normalized_kernels() {
        let grid = GridShape::Line(64);
        assert_relative_eq!(spectral_factor(&gauss(), 0.6, grid).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(spectral_factor(&gauss(), 1e-9, grid).unwrap(), 1.0, epsilon = 1e-12);
        let plane = discretize(&KernelSpec::Gaussian { sigma: 1.0 }, 2, 8).unwrap();
        assert_relative_eq!(spectral_factor(&plane, 0.6, GridShape::Plane(64, 64)).unwrap(), 1.0, epsilon = 1e-12);
        assert!(spectral_factor(&gauss(), 0.0, grid).is_err());
    }

    #[test]
    fn classify_examples() {
        let grid = GridShape::Line(64);
        let p = GrowthParams::new(0.3, 0.7).unwrap();
        let r = classify(0.0, &p, &gauss(), 0.6, grid, DEFAULT_MARGIN).unwrap();
        assert_eq!(r.verdict, Verdict::Stable);
        assert_relative_eq!(r.criterion_value, 0.7, epsilon = 1e-12);

        let q = GrowthParams::new(0.2, 0.9).unwrap();
        let r = classify(q.allee_threshold(), &q, &gauss(), 0.6, grid, DEFAULT_MARGIN).unwrap();
        assert_eq!(r.verdict, Verdict::Unstable);
        assert_relative_eq!(r.criterion_value, 1.194_444_444_444_444, epsilon = 1e-12);

        let r = classify(1.0, &p, &gauss(), 0.6, grid, DEFAULT_MARGIN).unwrap();
        assert_eq!(r.verdict, Verdict::Stable);
        assert_relative_eq!(r.criterion_value, 0.3 / 0.7, epsilon = 1e-12);

        assert!(classify(0.5, &p, &gauss(), 0.6, grid, DEFAULT_MARGIN).is_err());
        assert_eq!(verdict_for(1.0 + 1e-12, DEFAULT_MARGIN), Verdict::Inconclusive);
    }

    #[test]
    fn perturbation_examples() {
        let grid = GridShape::Line(64);
        let p = GrowthParams::new(0.3, 0.7).unwrap();
        let run = |v, eps| verify_by_perturbation(v, &p, &gauss(), 0.6, grid, eps, 300, 7).unwrap();
        assert_eq!(run(0.0, 1e-4).outcome, PerturbationOutcome::Decays);
        assert_eq!(run(1.0, 1e-4).outcome, PerturbationOutcome::Decays);
        assert_eq!(run(p.allee_threshold(), 1e-4).outcome, PerturbationOutcome::Grows);
        assert_eq!(run(p.allee_threshold(), 0.0).outcome, PerturbationOutcome::Inconclusive);
        assert!(verify_by_perturbation(0.0, &p, &gauss(), 0.6, grid, 0.1, 10, 7).is_err());
    }

    #[test]
    fn phase_portrait_examples() {
        let p = GrowthParams::new(0.3, 0.7).unwrap();
        let portrait = phase_portrait(&p, 0.6, 10_000).unwrap();
        assert_eq!(portrait.points[0], (0.0, 0.0));
        assert_eq!(portrait.points[5000].0, 0.5);
        assert!(portrait.points[5000].1 > 0.0);
        assert_relative_eq!(p.apply(p.allee_threshold()) - p.allee_threshold(), 0.0, epsilon = 1e-15);
        assert_eq!(portrait.root_count(), 3);
        assert!(phase_portrait(&p, 0.6, 9).is_err());

        let mut csv = Vec::new();
        phase_portrait(&p, 0.6, 10).unwrap().write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("v,delta_v,fixed_point\n"));
        assert_eq!(text.matches("stable").count(), 2);
        assert_eq!(text.matches("allee").count(), 1);
    }
}
