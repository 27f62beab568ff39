//! Peak counting on sampled curves with distance and prominence filters.
//!
//! Local maxima (flat plateaus reduced to their middle sample) are first
//! thinned so that no two are closer than `min_separation` samples, keeping
//! taller peaks; survivors must then rise at least `prominence * max(curve)`
//! above the higher of the two minima that separate them from taller ground.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PROMINENCE: f64 = 0.05;
pub const DEFAULT_MIN_SEPARATION: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub value: f64,
    pub prominence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modality {
    pub count: usize,
    pub peaks: Vec<Peak>,
}

/// Interior local maxima; a plateau yields its middle index (rounded down).
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Height of `x[peak]` above the higher of the lowest points reached walking
/// left and right until ground taller than the peak or the curve's end.
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    let mut i = peak;
    while i > 0 && x[i - 1] <= h {
        i -= 1;
        left_min = left_min.min(x[i]);
    }
    let mut right_min = h;
    let mut j = peak;
    while j + 1 < x.len() && x[j + 1] <= h {
        j += 1;
        right_min = right_min.min(x[j]);
    }
    h - left_min.max(right_min)
}

fn thin_by_distance(x: &[f64], peaks: &[usize], distance: usize) -> Vec<usize> {
    let mut keep = vec![true; peaks.len()];
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[a]].total_cmp(&x[peaks[b]]));
    for &j in order.iter().rev() {
        if !keep[j] {
            continue;
        }
        let mut k = j;
        while k > 0 && peaks[j] - peaks[k - 1] < distance {
            k -= 1;
            keep[k] = false;
        }
        let mut k = j + 1;
        while k < peaks.len() && peaks[k] - peaks[j] < distance {
            keep[k] = false;
            k += 1;
        }
    }
    peaks.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

pub fn count_modes(curve: &[f64], relative_prominence: f64, min_separation: usize) -> Result<Modality> {
    if curve.len() < 5 {
        return Err(Error::invalid("curve", format!("needs at least 5 samples, got {}", curve.len())));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("curve", "contains non-finite values"));
    }
    let global = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if global <= 0.0 {
        return Ok(Modality { count: 0, peaks: Vec::new() });
    }
    let candidates = thin_by_distance(curve, &local_maxima(curve), min_separation.max(1));
    let threshold = relative_prominence * global;
    let peaks: Vec<Peak> = candidates
        .into_iter()
        .map(|i| Peak {
            index: i,
            value: curve[i],
            prominence: prominence(curve, i),
        })
        .filter(|p| p.prominence >= threshold)
        .collect();
    Ok(Modality { count: peaks.len(), peaks })
}
