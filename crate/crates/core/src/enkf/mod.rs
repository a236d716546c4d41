//! Stochastic ensemble Kalman filter over the flood model's control vector:
//! friction per zone, inflow multiplier and per-subdomain depth corrections.
//!
//! [`enkf_analysis`] is model-agnostic and works on plain vectors;
//! [`run_reanalysis`] cycles it over assimilation windows of the
//! floodplain model.

mod cycle;
mod io;

pub use cycle::{
    propagate_member, run_reanalysis, CycleConfig, CycleDiagnostics, FloodModel, GaFitting, MemberForecast,
    ObservationSelection, Reanalysis, WindowControls, WsrErrorModel,
};
pub use io::{write_control_history, write_diagnostics};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Friction (Strickler, m^(1/3)/s) per zone, inflow multiplier and depth
/// correction (m) per floodplain subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    pub friction: Vec<f64>,
    pub mu: f64,
    pub delta_h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub friction_min: f64,
    pub friction_max: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Symmetric bound on depth corrections.
    pub delta_h_max: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            friction_min: 5.0,
            friction_max: 80.0,
            mu_min: 0.2,
            mu_max: 5.0,
            delta_h_max: 0.5,
        }
    }
}

impl ControlBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.friction_min < self.friction_max && self.friction_min > 0.0) {
            return Err(Error::Domain("friction bounds must satisfy 0 < min < max".into()));
        }
        if !(self.mu_min < self.mu_max && self.mu_min > 0.0) {
            return Err(Error::Domain("mu bounds must satisfy 0 < min < max".into()));
        }
        if !(self.delta_h_max > 0.0) {
            return Err(Error::Domain("delta_h bound must be > 0".into()));
        }
        Ok(())
    }
}

/// Prior standard deviations. The `mu` spread applies to `ln mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpreads {
    pub friction: f64,
    pub mu: f64,
    pub delta_h: f64,
}

impl ControlSpreads {
    pub fn validate(&self) -> Result<()> {
        if [self.friction, self.mu, self.delta_h]
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::Domain("control spreads must be finite and >= 0".into()));
        }
        Ok(())
    }
}

impl ControlVector {
    pub fn new(friction: Vec<f64>, mu: f64, delta_h: Vec<f64>) -> Self {
        Self { friction, mu, delta_h }
    }

    pub fn within(&self, b: &ControlBounds) -> bool {
        self.friction
            .iter()
            .all(|&k| (b.friction_min..=b.friction_max).contains(&k))
            && (b.mu_min..=b.mu_max).contains(&self.mu)
            && self.delta_h.iter().all(|d| d.abs() <= b.delta_h_max)
    }

    /// Clamps every component to its bounds and returns how many moved.
    pub fn clip(&mut self, b: &ControlBounds) -> usize {
        let mut n = 0;
        let mut clamp = |v: &mut f64, lo: f64, hi: f64| {
            let c = v.clamp(lo, hi);
            if c != *v {
                *v = c;
                n += 1;
            }
        };
        for k in &mut self.friction {
            clamp(k, b.friction_min, b.friction_max);
        }
        clamp(&mut self.mu, b.mu_min, b.mu_max);
        for d in &mut self.delta_h {
            clamp(d, -b.delta_h_max, b.delta_h_max);
        }
        n
    }

    /// Analysis-space coordinates: friction, `ln mu`, then (optionally) the
    /// depth corrections.
    pub fn to_analysis(&self, with_delta_h: bool) -> Vec<f64> {
        let mut v = self.friction.clone();
        v.push(self.mu.ln());
        if with_delta_h {
            v.extend_from_slice(&self.delta_h);
        }
        v
    }

    /// Inverse of [`Self::to_analysis`]. Depth corrections absent from `v`
    /// are taken from `template`.
    pub fn from_analysis(v: &[f64], template: &ControlVector, with_delta_h: bool) -> Self {
        let nz = template.friction.len();
        let delta_h = if with_delta_h {
            v[nz + 1..].to_vec()
        } else {
            template.delta_h.clone()
        };
        Self {
            friction: v[..nz].to_vec(),
            mu: v[nz].exp(),
            delta_h,
        }
    }
}

fn truncated_normal(rng: &mut impl Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    for _ in 0..10_000 {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    mean.clamp(lo, hi)
}

/// Draws `m` control vectors around `prior`. Friction and depth corrections
/// are truncated Gaussians at the bounds; `mu` is lognormal with median
/// `prior.mu`, truncated the same way.
pub fn perturb_controls(
    prior: &ControlVector,
    spreads: &ControlSpreads,
    bounds: &ControlBounds,
    m: usize,
    seed: u64,
) -> Result<Vec<ControlVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_with(prior, spreads, bounds, m, &mut rng)
}

pub(crate) fn perturb_with(
    prior: &ControlVector,
    spreads: &ControlSpreads,
    bounds: &ControlBounds,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ControlVector>> {
    if m < 2 {
        return Err(Error::Ensemble(format!("ensemble size must be >= 2, got {m}")));
    }
    bounds.validate()?;
    spreads.validate()?;
    if !prior.within(bounds) {
        return Err(Error::Domain("prior controls outside their bounds".into()));
    }
    let (lmu_lo, lmu_hi) = (bounds.mu_min.ln(), bounds.mu_max.ln());
    Ok((0..m)
        .map(|_| ControlVector {
            friction: prior
                .friction
                .iter()
                .map(|&k| truncated_normal(rng, k, spreads.friction, bounds.friction_min, bounds.friction_max))
                .collect(),
            mu: truncated_normal(rng, prior.mu.ln(), spreads.mu, lmu_lo, lmu_hi).exp(),
            delta_h: prior
                .delta_h
                .iter()
                .map(|&d| truncated_normal(rng, d, spreads.delta_h, -bounds.delta_h_max, bounds.delta_h_max))
                .collect(),
        })
        .collect())
}

/// Result of one stochastic EnKF update.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// Updated ensemble, one row per member.
    pub ensemble: Vec<Vec<f64>>,
    /// Kalman gain, state dimension × observation dimension.
    pub gain: DMatrix<f64>,
    /// Ensemble mean of the perturbed innovations `y + eps_j - H(x_j)`.
    pub mean_perturbed_innovation: Vec<f64>,
    /// `y - mean_j H(x_j)`.
    pub mean_innovation: Vec<f64>,
    /// Diagonal regularization added to `P_yy + R`, zero when none was
    /// needed.
    pub jitter: f64,
}

fn column_means(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let m = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (a, v) in mean.iter_mut().zip(r) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m);
    mean
}

/// Perturbed-observation EnKF: `x_j += K (y + eps_j - H(x_j))` with
/// `K = P_xy (P_yy + R)^-1` from sample covariances and
/// `eps_j ~ N(0, R)`, `R = diag(obs_std^2)`.
pub fn enkf_analysis(
    ensemble: &[Vec<f64>],
    predicted: &[Vec<f64>],
    observed: &[f64],
    obs_std: &[f64],
    rng: &mut impl Rng,
) -> Result<Analysis> {
    analysis_impl(ensemble, predicted, observed, obs_std, None, rng)
}

/// [`enkf_analysis`] with the cross covariance `P_xy` multiplied entrywise
/// by `localization` (n × p, usually 0/1), so that control `i` only
/// responds to the observations with nonzero weight.
pub fn localized_enkf_analysis(
    ensemble: &[Vec<f64>],
    predicted: &[Vec<f64>],
    observed: &[f64],
    obs_std: &[f64],
    localization: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<Analysis> {
    analysis_impl(ensemble, predicted, observed, obs_std, Some(localization), rng)
}

fn analysis_impl(
    ensemble: &[Vec<f64>],
    predicted: &[Vec<f64>],
    observed: &[f64],
    obs_std: &[f64],
    localization: Option<&DMatrix<f64>>,
    rng: &mut impl Rng,
) -> Result<Analysis> {
    let m = ensemble.len();
    if m < 2 {
        return Err(Error::Ensemble(format!("ensemble size must be >= 2, got {m}")));
    }
    crate::error::check_len("predicted observations", m, predicted.len())?;
    let n = ensemble[0].len();
    let p = observed.len();
    if p == 0 {
        return Err(Error::Ensemble("no observations to assimilate".into()));
    }
    crate::error::check_len("observation errors", p, obs_std.len())?;
    for (x, y) in ensemble.iter().zip(predicted) {
        crate::error::check_len("control vector", n, x.len())?;
        crate::error::check_len("predicted observations", p, y.len())?;
        crate::error::check_finite("control vector", x)?;
        crate::error::check_finite("predicted observations", y)?;
    }
    crate::error::check_finite("observations", observed)?;
    if obs_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Domain("observation errors must be > 0".into()));
    }

    let xm = column_means(ensemble, n);
    let ym = column_means(predicted, p);
    let xa = DMatrix::from_fn(n, m, |i, j| ensemble[j][i] - xm[i]);
    let ya = DMatrix::from_fn(p, m, |i, j| predicted[j][i] - ym[i]);
    let scale = 1.0 / (m as f64 - 1.0);
    let mut pxy = &xa * ya.transpose() * scale;
    if let Some(rho) = localization {
        if rho.shape() != (n, p) {
            return Err(Error::Dimension {
                what: "localization matrix",
                expected: n * p,
                got: rho.len(),
            });
        }
        pxy.component_mul_assign(rho);
    }
    let mut s = &ya * ya.transpose() * scale;
    for i in 0..p {
        s[(i, i)] += obs_std[i] * obs_std[i];
    }

    let mut jitter = 0.0;
    let trace = s.trace() / p as f64;
    let base = if trace > 0.0 { trace } else { 1.0 };
    let chol = loop {
        let mut sj = s.clone();
        for i in 0..p {
            sj[(i, i)] += jitter;
        }
        if let Some(c) = sj.cholesky() {
            break c;
        }
        jitter = if jitter == 0.0 { 1e-10 * base } else { jitter * 10.0 };
        if jitter > base {
            return Err(Error::Ensemble("innovation covariance is not positive definite".into()));
        }
        log::warn!("innovation covariance regularized with jitter {jitter:e}");
    };
    let gain = chol.solve(&pxy.transpose()).transpose();

    let mut d = DMatrix::zeros(p, m);
    for j in 0..m {
        for i in 0..p {
            let eps: f64 = StandardNormal.sample(rng);
            d[(i, j)] = observed[i] + obs_std[i] * eps - predicted[j][i];
        }
    }
    let inc = &gain * &d;
    let analyzed = (0..m)
        .map(|j| (0..n).map(|i| ensemble[j][i] + inc[(i, j)]).collect())
        .collect();
    let mean_perturbed_innovation = (0..p).map(|i| d.row(i).sum() / m as f64).collect();
    let mean_innovation = (0..p).map(|i| observed[i] - ym[i]).collect();
    Ok(Analysis {
        ensemble: analyzed,
        gain,
        mean_perturbed_innovation,
        mean_innovation,
        jitter,
    })
}

/// Deterministic seed for a sub-stream keyed by `parts`.
pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 finalizer folded over the parts
    let mut x = seed;
    for &p in parts {
        x = x.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> ControlVector {
        ControlVector::new(vec![30.0, 20.0], 1.0, vec![0.0; 3])
    }

    #[test]
    fn zero_spread_copies_prior() {
        let s = ControlSpreads {
            friction: 0.0,
            mu: 0.0,
            delta_h: 0.0,
        };
        let e = perturb_controls(&prior(), &s, &ControlBounds::default(), 5, 1).unwrap();
        assert!(e.iter().all(|c| *c == prior()));
    }

    #[test]
    fn same_seed_same_draws() {
        let s = ControlSpreads {
            friction: 5.0,
            mu: 0.25,
            delta_h: 0.1,
        };
        let b = ControlBounds::default();
        let a = perturb_controls(&prior(), &s, &b, 10, 9).unwrap();
        assert_eq!(a, perturb_controls(&prior(), &s, &b, 10, 9).unwrap());
        assert_ne!(a, perturb_controls(&prior(), &s, &b, 10, 10).unwrap());
        assert!(a.iter().all(|c| c.within(&b)));
    }

    #[test]
    fn invalid_bounds_rejected() {
        let s = ControlSpreads {
            friction: 5.0,
            mu: 0.25,
            delta_h: 0.1,
        };
        let b = ControlBounds {
            friction_min: 50.0,
            friction_max: 10.0,
            ..Default::default()
        };
        assert!(perturb_controls(&prior(), &s, &b, 10, 1).is_err());
        assert!(perturb_controls(&prior(), &s, &ControlBounds::default(), 1, 1).is_err());
    }

    #[test]
    fn clip_counts() {
        let mut c = ControlVector::new(vec![100.0, 20.0], 0.01, vec![0.0, 2.0, -2.0]);
        assert_eq!(c.clip(&ControlBounds::default()), 4);
        assert!(c.within(&ControlBounds::default()));
    }

    #[test]
    fn analysis_roundtrip() {
        let c = ControlVector::new(vec![30.0, 20.0], 1.3, vec![0.1, 0.2, 0.3]);
        let v = c.to_analysis(true);
        let back = ControlVector::from_analysis(&v, &c, true);
        assert_eq!(back.friction, c.friction);
        assert!((back.mu - 1.3).abs() < 1e-15);
        assert_eq!(back.delta_h, c.delta_h);
        let short = c.to_analysis(false);
        assert_eq!(short.len(), 3);
    }

    #[test]
    fn uncorrelated_component_unchanged() {
        // Component 1 has exactly zero sample covariance with the observable.
        let ens: Vec<Vec<f64>> = vec![vec![1.0, 5.0], vec![-1.0, 5.0], vec![2.0, 5.0], vec![-2.0, 5.0]];
        let pred: Vec<Vec<f64>> = ens.iter().map(|x| vec![x[0]]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = enkf_analysis(&ens, &pred, &[1.0], &[1.0], &mut rng).unwrap();
        assert!(a.ensemble.iter().all(|x| x[1] == 5.0));
    }

    #[test]
    fn singular_covariance_regularized() {
        let ens = vec![vec![1.0], vec![1.0], vec![1.0]];
        let pred = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Tiny observation errors with zero ensemble spread stay solvable.
        let a = enkf_analysis(&ens, &pred, &[1.0, 1.0], &[1e-200, 1e-200], &mut rng).unwrap();
        assert!(a.ensemble.iter().all(|x| x[0] == 1.0));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(7, &[3]), derive_seed(7, &[3]));
    }
}
