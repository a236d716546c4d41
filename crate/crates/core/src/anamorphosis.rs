//! Empirical Gaussian anamorphosis (normal-score transform).
//!
//! A map is fitted on a sample, typically the forecast ensemble's
//! model-equivalent wet surface ratios for one subdomain, and sends raw
//! values to standard-normal scores by piecewise-linear interpolation
//! between knots `(x_(i), Φ⁻¹((i - 0.5)/m))`.

use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::textio;

/// Default bound on extrapolated scores.
pub const DEFAULT_SCORE_BOUND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AnamorphosisMap {
    values: Vec<f64>,
    scores: Vec<f64>,
    score_bound: f64,
    physical_range: Option<(f64, f64)>,
    degenerate: bool,
}

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid standard normal")
}

impl AnamorphosisMap {
    /// Fits a map on `samples`. Tied values collapse to one knot at the
    /// mean of their scores. Fewer than two distinct values yields a
    /// degenerate map that acts as the identity.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        Self::fit_with_bound(samples, DEFAULT_SCORE_BOUND)
    }

    pub fn fit_with_bound(samples: &[f64], score_bound: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain(format!(
                "anamorphosis needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        crate::error::check_finite("anamorphosis samples", samples)?;
        if !(score_bound > 0.0) {
            return Err(Error::Domain("score bound must be > 0".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() as f64;
        let normal = std_normal();
        let mut values = Vec::new();
        let mut scores = Vec::new();
        let mut start = 0;
        while start < sorted.len() {
            let mut end = start + 1;
            while end < sorted.len() && sorted[end] == sorted[start] {
                end += 1;
            }
            let sum: f64 = (start..end).map(|i| normal.inverse_cdf((i as f64 + 0.5) / m)).sum();
            values.push(sorted[start]);
            scores.push(sum / (end - start) as f64);
            start = end;
        }
        let degenerate = values.len() < 2;
        if degenerate {
            log::warn!("anamorphosis fitted on a sample without spread; using identity");
        }
        Ok(Self {
            values,
            scores,
            score_bound,
            physical_range: None,
            degenerate,
        })
    }

    /// Tags the map as a wet-surface-ratio map: inverse output is clipped
    /// to `[0, 1]`.
    pub fn for_wsr(mut self) -> Self {
        self.physical_range = Some((0.0, 1.0));
        self
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Knot values (distinct, ascending).
    pub fn knot_values(&self) -> &[f64] {
        &self.values
    }

    /// Knot scores (strictly ascending).
    pub fn knot_scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn forward(&self, value: f64) -> f64 {
        if self.degenerate {
            return value;
        }
        let s = interpolate(&self.values, &self.scores, value);
        s.clamp(-self.score_bound, self.score_bound)
    }

    pub fn inverse(&self, score: f64) -> f64 {
        let raw = if self.degenerate {
            score
        } else {
            let s = score.clamp(-self.score_bound, self.score_bound);
            interpolate(&self.scores, &self.values, s)
        };
        match self.physical_range {
            Some((lo, hi)) => raw.clamp(lo, hi),
            None => raw,
        }
    }
}

/// Piecewise-linear interpolation through `(xs, ys)` with linear
/// extrapolation using the end segments. `xs` strictly ascending, len ≥ 2.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    // Index of the segment [k, k+1] used for x.
    let k = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    if x == xs[k] {
        return ys[k];
    }
    if x == xs[k + 1] {
        return ys[k + 1];
    }
    let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + w * (ys[k + 1] - ys[k])
}

/// Writes `label,knot,value,score` rows for a set of labelled maps.
pub fn write_knots(path: &Path, maps: &[(String, &AnamorphosisMap)]) -> Result<()> {
    let mut out = String::from("label,knot,value,score\n");
    for (label, map) in maps {
        for (k, (v, s)) in map.values.iter().zip(&map.scores).enumerate() {
            out.push_str(&format!("{label},{k},{v},{s}\n"));
        }
    }
    textio::write(path, &out)
}
