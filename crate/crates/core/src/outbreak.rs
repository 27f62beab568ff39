//! Outbreak-size distributions from simulated infection frequencies.
//!
//! Each generation at site `i` is treated as an independent Bernoulli trial
//! with success probability `p_it = v(t, x_i)`, run until the site fixates.
//! The count of successes `Y_i` is Poisson-binomial given the fixation time.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::lattice::Trajectory;
use crate::modes::{count_modes, Modality, DEFAULT_MIN_SEPARATION, DEFAULT_PROMINENCE};

pub const DEFAULT_EPSILON_FIX: f64 = 1e-10;
pub const DEFAULT_HORIZON: usize = 400;

/// Neglected geometric tail mass allowed in [`geometric_mixture`].
pub const MIXTURE_TAIL: f64 = 1e-9;
/// Largest number of mixture terms evaluated before giving up.
pub const MIXTURE_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixation {
    /// First `t` with `|v(t+1) - v(t)| <= eps`.
    At(usize),
    /// No fixation before the horizon.
    Censored(usize),
}

impl Fixation {
    /// `N_i`, with censored sites counted at the horizon.
    pub fn time(&self) -> usize {
        match *self {
            Fixation::At(t) | Fixation::Censored(t) => t,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Fixation::Censored(_))
    }
}

/// Fixation time of a series `v(0), v(1), ...`, searched over `t < horizon`.
pub fn fixation_time(series: &[f64], epsilon_fix: f64, horizon: usize) -> Fixation {
    let limit = horizon.min(series.len().saturating_sub(1));
    (0..limit)
        .find(|&t| (series[t + 1] - series[t]).abs() <= epsilon_fix)
        .map_or(Fixation::Censored(horizon), Fixation::At)
}

fn check_contiguous(trajectory: &Trajectory, horizon: usize) -> Result<()> {
    if !trajectory.is_contiguous() {
        return Err(Error::invalid("trajectory", "outbreak statistics need every generation stored (stride 1)"));
    }
    let last = trajectory.last_generation().unwrap_or(0);
    if trajectory.len() < 2 || last < horizon {
        return Err(Error::invalid(
            "horizon",
            format!("trajectory ends at generation {last}, shorter than the horizon {horizon}"),
        ));
    }
    Ok(())
}

pub fn detect_fixation(trajectory: &Trajectory, site: usize, epsilon_fix: f64) -> Result<Fixation> {
    if site >= trajectory.sites() {
        return Err(Error::Shape(format!("site {site} outside {} sites", trajectory.sites())));
    }
    let last = trajectory.last_generation().unwrap_or(0);
    check_contiguous(trajectory, last.max(1))?;
    Ok(fixation_time(&trajectory.series(site), epsilon_fix, last))
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    match p.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        Some(&bad) => Err(Error::Domain { value: bad }),
        None => Ok(()),
    }
}

/// Exact PMF of a sum of independent Bernoulli(`p_j`) over `0..=m`.
pub fn poisson_binomial_pmf(p: &[f64]) -> Result<Vec<f64>> {
    check_probabilities(p)?;
    let mut pmf = vec![0.0; p.len() + 1];
    pmf[0] = 1.0;
    for (n, &q) in p.iter().enumerate() {
        for j in (1..=n + 1).rev() {
            pmf[j] = pmf[j] * (1.0 - q) + pmf[j - 1] * q;
        }
        pmf[0] *= 1.0 - q;
    }
    Ok(pmf)
}

/// `e^-l l^k / k!`, evaluated in log space.
pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-lambda + k as f64 * lambda.ln() - ln_factorial(k)).exp()
}

/// Total-variation distance between a finite PMF and Poisson(`lambda`).
pub fn tv_to_poisson(pmf: &[f64], lambda: f64) -> f64 {
    let mut covered = 0.0;
    let mut diff = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        let q = poisson_pmf(lambda, k as u64);
        covered += q;
        diff += (p - q).abs();
    }
    0.5 * (diff + (1.0 - covered).max(0.0))
}

/// Number of mixture terms `M` such that `(1 - q)^(M+1) < MIXTURE_TAIL`.
pub fn mixture_terms(q: f64) -> Result<usize> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid("q", format!("must lie in (0, 1), got {q}")));
    }
    let m = (MIXTURE_TAIL.ln() / (1.0 - q).ln()).floor();
    if !(m < MIXTURE_BUDGET as f64) {
        return Err(Error::Convergence(format!(
            "q = {q} needs {m} mixture terms, beyond the budget of {MIXTURE_BUDGET}"
        )));
    }
    Ok(m as usize)
}

/// `P(Y = k) = sum_m P(Y = k | N = m) (1 - q)^m q` with the geometric law on
/// `N` truncated at [`mixture_terms`]. Given `N = m` the successes are
/// Poisson-binomial over `p_0..p_{m-1}`; generations past the end of the
/// series repeat its last value (the site has settled there).
pub fn geometric_mixture(p_series: &[f64], q: f64, k: usize) -> Result<f64> {
    check_probabilities(p_series)?;
    let m_max = mixture_terms(q)?;
    // PMF of the first m trials, truncated to 0..=k; higher counts never feed lower ones.
    let mut pmf = vec![0.0; k + 1];
    pmf[0] = 1.0;
    let last = p_series.last().copied().unwrap_or(0.0);
    let mut weight = q;
    let mut total = 0.0;
    for m in 0..=m_max {
        total += pmf[k] * weight;
        let p = p_series.get(m).copied().unwrap_or(last);
        for j in (1..=k).rev() {
            pmf[j] = pmf[j] * (1.0 - p) + pmf[j - 1] * p;
        }
        pmf[0] *= 1.0 - p;
        weight *= 1.0 - q;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutbreakMethod {
    Poisson,
    PoissonBinomial,
    GeometricMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutbreakCurve {
    pub k: usize,
    pub method: OutbreakMethod,
    pub horizon: usize,
    /// First-axis coordinate of each site on the scanned row.
    pub x: Vec<f64>,
    /// `P(Y_i = k)` per site of the scanned row.
    pub probabilities: Vec<f64>,
    pub fixation: Vec<Fixation>,
    /// `sum_{t < min(N_i, horizon)} p_it`.
    pub lambda: Vec<f64>,
    pub modality: Modality,
}

/// Per-site inputs shared by every `k`.
struct SiteSeries {
    fixation: Fixation,
    truncated: Vec<f64>,
    lambda: f64,
}

fn site_series(trajectory: &Trajectory, horizon: usize, epsilon_fix: f64) -> Result<Vec<SiteSeries>> {
    check_contiguous(trajectory, horizon)?;
    let config = trajectory.config();
    let [nx, ny] = config.shape().extents();
    let y = if config.dimension() == 2 { ny / 2 } else { 0 };
    Ok((0..nx)
        .into_par_iter()
        .map(|x| {
            let series = trajectory.series(y * nx + x);
            let fixation = fixation_time(&series, epsilon_fix, horizon);
            let truncated = series[..fixation.time().min(horizon)].to_vec();
            let lambda = truncated.iter().sum();
            SiteSeries {
                fixation,
                truncated,
                lambda,
            }
        })
        .collect())
}

/// Outbreak curves for several `k` from one pass over the trajectory. Planes
/// are reduced to their middle row.
pub fn outbreak_curves(
    trajectory: &Trajectory,
    ks: &[usize],
    method: OutbreakMethod,
    horizon: usize,
    epsilon_fix: f64,
) -> Result<Vec<OutbreakCurve>> {
    let sites = site_series(trajectory, horizon, epsilon_fix)?;
    let x = trajectory.config().axis_coordinates();
    let per_site: Vec<Vec<f64>> = sites
        .par_iter()
        .map(|s| -> Result<Vec<f64>> {
            match method {
                OutbreakMethod::Poisson => Ok(ks.iter().map(|&k| poisson_pmf(s.lambda, k as u64)).collect()),
                OutbreakMethod::PoissonBinomial => {
                    let pmf = poisson_binomial_pmf(&s.truncated)?;
                    Ok(ks.iter().map(|&k| pmf.get(k).copied().unwrap_or(0.0)).collect())
                }
                OutbreakMethod::GeometricMixture => {
                    let n = s.fixation.time();
                    if n == 0 {
                        return Ok(ks.iter().map(|&k| if k == 0 { 1.0 } else { 0.0 }).collect());
                    }
                    let q = 1.0 / (1.0 + n as f64);
                    ks.iter().map(|&k| geometric_mixture(&s.truncated, q, k)).collect()
                }
            }
        })
        .collect::<Result<_>>()?;
    ks.iter()
        .enumerate()
        .map(|(j, &k)| {
            let probabilities: Vec<f64> = per_site.iter().map(|row| row[j]).collect();
            let modality = count_modes(&probabilities, DEFAULT_PROMINENCE, DEFAULT_MIN_SEPARATION)?;
            Ok(OutbreakCurve {
                k,
                method,
                horizon,
                x: x.clone(),
                probabilities,
                fixation: sites.iter().map(|s| s.fixation).collect(),
                lambda: sites.iter().map(|s| s.lambda).collect(),
                modality,
            })
        })
        .collect()
}

pub fn outbreak_curve(
    trajectory: &Trajectory,
    k: usize,
    method: OutbreakMethod,
    horizon: usize,
    epsilon_fix: f64,
) -> Result<OutbreakCurve> {
    Ok(outbreak_curves(trajectory, &[k], method, horizon, epsilon_fix)?.remove(0))
}

impl OutbreakCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "site,x,p")?;
        for (i, (x, p)) in self.x.iter().zip(&self.probabilities).enumerate() {
            writeln!(out, "{i},{},{}", fmt_f64(*x), fmt_f64(*p))?;
        }
        Ok(())
    }

    /// Coordinates of the detected modes.
    pub fn peak_positions(&self) -> Vec<f64> {
        self.modality.peaks.iter().map(|p| self.x[p.index]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Sum over all 2^m outcomes of the product of per-trial probabilities.
    fn enumerate(p: &[f64]) -> Vec<f64> {
        let m = p.len();
        let mut pmf = vec![0.0; m + 1];
        for mask in 0u32..(1 << m) {
            let mut prob = 1.0;
            for (j, &q) in p.iter().enumerate() {
                prob *= if mask & (1 << j) != 0 { q } else { 1.0 - q };
            }
            pmf[mask.count_ones() as usize] += prob;
        }
        pmf
    }

    #[test]
    fn pb_small_cases() {
        assert_eq!(poisson_binomial_pmf(&[0.3]).unwrap(), vec![0.7, 0.3]);
        assert_eq!(poisson_binomial_pmf(&[0.5, 0.5]).unwrap(), vec![0.25, 0.5, 0.25]);
        assert_eq!(poisson_binomial_pmf(&[]).unwrap(), vec![1.0]);
        assert!(poisson_binomial_pmf(&[1.2]).is_err());
    }

    #[test]
    fn poisson_values() {
        assert_eq!(poisson_pmf(0.0, 0), 1.0);
        assert_eq!(poisson_pmf(0.0, 3), 0.0);
        let expected = (-2.0f64).exp() * 8.0 / 6.0;
        assert_relative_eq!(poisson_pmf(2.0, 3), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 0.180_447, epsilon = 1e-6);
        // Ratio recurrence P(k+1) = P(k) l / (k+1).
        let mut p = (-7.5f64).exp();
        for k in 0..40u64 {
            assert_relative_eq!(poisson_pmf(7.5, k), p, max_relative = 1e-12);
            p *= 7.5 / (k + 1) as f64;
        }
    }

    #[test]
    fn fixation_examples() {
        let cfg = LatticeConfig::line(8, 1.0).unwrap();
        let mut traj = Trajectory::new(cfg);
        for t in 0..5 {
            let mut row = vec![0.0; 8];
            row[1] = 1.0;
            row[2] = 0.5 + 0.1 * t.min(3) as f64;
            traj.push(t, &row).unwrap();
        }
        assert_eq!(detect_fixation(&traj, 0, 1e-10).unwrap(), Fixation::At(0));
        assert_eq!(detect_fixation(&traj, 1, 1e-10).unwrap(), Fixation::At(0));
        assert_eq!(detect_fixation(&traj, 2, 1e-10).unwrap(), Fixation::At(3));
        assert_eq!(fixation_time(&[0.1, 0.2, 0.3], 1e-10, 2), Fixation::Censored(2));
        assert!(detect_fixation(&traj, 9, 1e-10).is_err());
    }

    #[test]
    fn mixture_limits() {
        let p = [0.3, 0.6, 0.2];
        let q = 1.0 - 1e-12;
        assert_relative_eq!(geometric_mixture(&p, q, 0).unwrap(), 1.0, epsilon = 1e-9);
        assert!(geometric_mixture(&p, 1.0, 0).is_err());
        // With every trial failing, the conditional PMF is a point mass at 0 for every m.
        let zeros = [0.0; 10];
        assert_relative_eq!(geometric_mixture(&zeros, 0.2, 0).unwrap(), 1.0, epsilon = 1e-8);
        assert_eq!(geometric_mixture(&zeros, 0.2, 1).unwrap(), 0.0);
        assert!(mixture_terms(1e-12).is_err());
    }

    #[test]
    fn mixture_matches_double_sum() {
        let p = [0.13, 0.52, 0.91, 0.07, 0.33, 0.68];
        let q = 0.95;
        let m_max = mixture_terms(q).unwrap();
        assert_eq!(m_max, 6);
        for k in 0..=6 {
            let mut direct = 0.0;
            for m in 0..=m_max {
                let conditional = enumerate(&p[..m]);
                direct += conditional.get(k).copied().unwrap_or(0.0) * (1.0 - q).powi(m as i32) * q;
            }
            assert!((geometric_mixture(&p, q, k).unwrap() - direct).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn intensity_grows_linearly_at_the_threshold() {
        // p frozen at A = s_f/s_h from generation N on: lambda(M) = sum_{t<N} p_t + (M + 1 - N) A.
        let a = 0.2 / 0.9;
        let head = [0.9, 0.6, 0.4, 0.3];
        let lambda = |m: usize| -> f64 {
            let series: Vec<f64> = head.iter().copied().chain(std::iter::repeat(a)).take(m + 1).collect();
            series.iter().sum()
        };
        let n = head.len();
        for m in n..60 {
            let expected = head.iter().sum::<f64>() + (m + 1 - n) as f64 * a;
            assert!((lambda(m) - expected).abs() < 1e-12);
            assert!((lambda(m + 1) - lambda(m) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trajectory_curve() {
        let cfg = LatticeConfig::line(16, 1.0).unwrap();
        let mut traj = Trajectory::new(cfg);
        for t in 0..=20 {
            traj.push(t, &[0.0; 16]).unwrap();
        }
        for method in [OutbreakMethod::Poisson, OutbreakMethod::PoissonBinomial, OutbreakMethod::GeometricMixture] {
            let c = outbreak_curve(&traj, 1, method, 20, 1e-10).unwrap();
            assert!(c.probabilities.iter().all(|p| *p == 0.0));
            let c0 = outbreak_curve(&traj, 0, method, 20, 1e-10).unwrap();
            assert!(c0.probabilities.iter().all(|p| *p == 1.0));
        }
        assert!(outbreak_curve(&traj, 1, OutbreakMethod::Poisson, 21, 1e-10).is_err());
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 0..=12)
    }

    proptest! {
        #[test]
        fn pb_matches_enumeration(p in series()) {
            let exact = poisson_binomial_pmf(&p).unwrap();
            let oracle = enumerate(&p);
            for (a, b) in exact.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pb_is_permutation_invariant(mut p in series(), seed in any::<u64>()) {
            let before = poisson_binomial_pmf(&p).unwrap();
            use rand::{seq::SliceRandom, SeedableRng};
            p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let after = poisson_binomial_pmf(&p).unwrap();
            for (a, b) in before.iter().zip(&after) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn le_cam_bound(p in prop::collection::vec(0.0f64..0.1, 1..60)) {
            let pmf = poisson_binomial_pmf(&p).unwrap();
            let lambda: f64 = p.iter().sum();
            let bound: f64 = p.iter().map(|q| q * q).sum();
            prop_assert!(tv_to_poisson(&pmf, lambda) <= bound + 1e-12);
        }
    }
}
