use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, enkf_analysis, localized_enkf_analysis, perturb_with, ControlBounds, ControlSpreads, ControlVector,
};
use crate::anamorphosis::AnamorphosisMap;
use crate::error::{Error, Result};
use crate::hydraulics::{
    apply_state_correction, simulate, BoundaryConditions, FrictionField, HydraulicState, SolverConfig, StructuredGrid,
    Trajectory,
};
use crate::observing::{extract_wse, wsr, FloodplainSubdomain, GaugeStation, ObservationSet};

/// Which observations a reanalysis assimilates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSelection {
    None,
    Wse,
    WseWsr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaFitting {
    /// Refit each subdomain's map on every window's forecast ensemble.
    PerCycle,
    /// Fit each subdomain's map on the first window that uses it.
    Once,
}

/// Error model for transformed wet surface ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WsrErrorModel {
    /// Unit variance in score space.
    UnitScore,
    /// Raw-space standard deviation mapped through the local slope of the
    /// transform at the observed value.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    /// Assimilation window length (s).
    pub window: f64,
    pub members: usize,
    pub spreads: ControlSpreads,
    #[serde(default)]
    pub bounds: ControlBounds,
    /// Multiplicative inflation of control anomalies; 1 disables it.
    #[serde(default = "one")]
    pub inflation: f64,
    pub selection: ObservationSelection,
    #[serde(default = "yes")]
    pub anamorphosis: bool,
    #[serde(default = "per_cycle")]
    pub ga_fitting: GaFitting,
    #[serde(default = "unit_score")]
    pub wsr_error: WsrErrorModel,
    /// A WSR observation is skipped when more than this fraction of the
    /// ensemble sits at 0 or 1.
    #[serde(default = "half")]
    pub saturation_fraction: f64,
    #[serde(default = "three")]
    pub max_respawn: usize,
    /// Depth corrections are updated only by the WSR of their own
    /// subdomain; without it, spurious ensemble correlations with the
    /// many gauge readings swamp the few WSR innovations.
    #[serde(default = "yes")]
    pub localize_delta_h: bool,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn per_cycle() -> GaFitting {
    GaFitting::PerCycle
}
fn unit_score() -> WsrErrorModel {
    WsrErrorModel::UnitScore
}
fn half() -> f64 {
    0.5
}
fn three() -> usize {
    3
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::Config("window must be > 0".into()));
        }
        if self.members < 2 {
            return Err(Error::Config("ensemble needs at least 2 members".into()));
        }
        if !(self.inflation >= 1.0 && self.inflation.is_finite()) {
            return Err(Error::Config("inflation must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.saturation_fraction) {
            return Err(Error::Config("saturation_fraction must lie in [0, 1]".into()));
        }
        self.spreads.validate()?;
        self.bounds.validate()
    }
}

/// Everything needed to run the floodplain model for one member.
#[derive(Debug, Clone, Copy)]
pub struct FloodModel<'a> {
    pub grid: &'a StructuredGrid,
    /// Forcing and boundary layout; `inflow_scale` is replaced by each
    /// member's multiplier.
    pub boundary: &'a BoundaryConditions,
    /// Friction zone ids, in the order of [`ControlVector::friction`].
    pub friction_zones: &'a [u32],
    pub stations: &'a [GaugeStation],
    /// Subdomains, in the order of [`ControlVector::delta_h`].
    pub subdomains: &'a [FloodplainSubdomain],
    pub solver: SolverConfig,
}

impl FloodModel<'_> {
    pub fn friction_field(&self, control: &ControlVector, bounds: &ControlBounds) -> Result<FrictionField> {
        FrictionField::new(
            self.friction_zones.to_vec(),
            control.friction.clone(),
            bounds.friction_min,
            bounds.friction_max,
        )
    }

    fn check_controls(&self, control: &ControlVector) -> Result<()> {
        crate::error::check_len("friction controls", self.friction_zones.len(), control.friction.len())?;
        crate::error::check_len("depth corrections", self.subdomains.len(), control.delta_h.len())
    }
}

/// A member's run over one window.
#[derive(Debug, Clone)]
pub struct MemberForecast {
    pub trajectory: Trajectory,
}

impl MemberForecast {
    pub fn wse(&self, model: &FloodModel<'_>, time: f64, station: usize) -> Result<f64> {
        let s = self.trajectory.at(time).ok_or(Error::MissingTime(time))?;
        Ok(extract_wse(s, model.grid, &model.stations[station], model.solver.dry_eps)?.value)
    }

    pub fn wsr(&self, model: &FloodModel<'_>, time: f64, subdomain: usize) -> Result<f64> {
        let s = self.trajectory.at(time).ok_or(Error::MissingTime(time))?;
        wsr(s, &model.subdomains[subdomain], model.solver.dry_eps)
    }
}

/// Applies the member's depth corrections to `start`, then runs the model
/// with its friction and inflow multiplier until `t_end`, keeping snapshots
/// at `output_times`.
pub fn propagate_member(
    model: &FloodModel<'_>,
    start: &HydraulicState,
    control: &ControlVector,
    bounds: &ControlBounds,
    t_end: f64,
    output_times: &[f64],
) -> Result<MemberForecast> {
    model.check_controls(control)?;
    let corrections: Vec<(u32, f64)> = model
        .subdomains
        .iter()
        .zip(&control.delta_h)
        .filter(|(_, &d)| d != 0.0)
        .map(|(s, &d)| (s.id, d))
        .collect();
    let state0 = if corrections.is_empty() {
        start.clone()
    } else {
        apply_state_correction(start, model.grid, &corrections, model.solver.dry_eps)?
    };
    let friction = model.friction_field(control, bounds)?;
    let mut bc = model.boundary.clone();
    bc.inflow_scale = control.mu;
    let trajectory = simulate(model.grid, &state0, &bc, &friction, t_end, output_times, &model.solver)?;
    Ok(MemberForecast { trajectory })
}

/// Controls used for one window of the reanalysis.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowControls {
    pub window: usize,
    pub start: f64,
    pub end: f64,
    pub controls: ControlVector,
    pub analyzed: bool,
}

/// Per-window filter diagnostics. Component vectors follow the order
/// friction per zone, `mu`, depth correction per subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDiagnostics {
    pub window: usize,
    pub start: f64,
    pub end: f64,
    pub wse_used: usize,
    pub wsr_used: usize,
    pub wsr_skipped: usize,
    pub forecast_mean: Vec<f64>,
    pub forecast_std: Vec<f64>,
    pub analysis_mean: Vec<f64>,
    pub analysis_std: Vec<f64>,
    /// Root mean square of `y - mean H(x)` over the assimilated entries.
    pub innovation_rms: f64,
    /// Same, with each entry divided by its observation error.
    pub normalized_innovation_rms: f64,
    pub clipped: usize,
    pub respawned: usize,
    pub jitter: f64,
}

#[derive(Debug, Clone)]
pub struct Reanalysis {
    /// Analysis-mean trajectory with snapshots at the requested times.
    pub trajectory: Trajectory,
    pub history: Vec<WindowControls>,
    pub diagnostics: Vec<CycleDiagnostics>,
}

fn natural_components(c: &ControlVector) -> Vec<f64> {
    let mut v = c.friction.clone();
    v.push(c.mu);
    v.extend_from_slice(&c.delta_h);
    v
}

fn mean_std(members: &[ControlVector]) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = members.iter().map(natural_components).collect();
    let n = rows[0].len();
    let m = rows.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / m).collect();
    let std = (0..n)
        .map(|i| {
            let ss: f64 = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();
    (mean, std)
}

/// Ensemble mean taken in analysis coordinates (so `mu` is a geometric
/// mean).
fn analysis_mean(members: &[ControlVector], with_delta_h: bool) -> ControlVector {
    let rows: Vec<Vec<f64>> = members.iter().map(|c| c.to_analysis(with_delta_h)).collect();
    let n = rows[0].len();
    let m = rows.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / m).collect();
    ControlVector::from_analysis(&mean, &members[0], with_delta_h)
}

/// Shifts the ensemble so its analysis-space mean equals `center`, scales
/// anomalies by `inflation`, then clips to bounds.
fn recenter(
    members: &mut [ControlVector],
    center: &ControlVector,
    inflation: f64,
    bounds: &ControlBounds,
    with_delta_h: bool,
) {
    let rows: Vec<Vec<f64>> = members.iter().map(|c| c.to_analysis(with_delta_h)).collect();
    let target = center.to_analysis(with_delta_h);
    let n = target.len();
    let m = rows.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / m).collect();
    for (c, r) in members.iter_mut().zip(&rows) {
        let v: Vec<f64> = (0..n).map(|i| target[i] + inflation * (r[i] - mean[i])).collect();
        *c = ControlVector::from_analysis(&v, c, with_delta_h);
        c.clip(bounds);
    }
}

struct Assembled {
    /// Subdomain of each WSR entry, `None` for gauge readings.
    sources: Vec<Option<u32>>,
    observed: Vec<f64>,
    predicted: Vec<Vec<f64>>,
    std: Vec<f64>,
    wse_used: usize,
    wsr_used: usize,
    wsr_skipped: usize,
}

fn assemble(
    model: &FloodModel<'_>,
    obs: &ObservationSet,
    forecasts: &[MemberForecast],
    cfg: &CycleConfig,
    station_index: &HashMap<&str, usize>,
    maps: &mut BTreeMap<u32, AnamorphosisMap>,
) -> Result<Assembled> {
    let m = forecasts.len();
    let mut a = Assembled {
        sources: Vec::new(),
        observed: Vec::new(),
        predicted: vec![Vec::new(); m],
        std: Vec::new(),
        wse_used: 0,
        wsr_used: 0,
        wsr_skipped: 0,
    };
    for o in &obs.wse {
        let s = *station_index
            .get(o.station.as_str())
            .ok_or_else(|| Error::Ensemble(format!("observation for unknown station `{}`", o.station)))?;
        for (j, f) in forecasts.iter().enumerate() {
            a.predicted[j].push(f.wse(model, o.time, s)?);
        }
        a.sources.push(None);
        a.observed.push(o.value);
        a.std.push(o.sigma);
        a.wse_used += 1;
    }
    for o in &obs.wsr {
        let k = model
            .subdomains
            .iter()
            .position(|s| s.id == o.subdomain)
            .ok_or(Error::UnknownSubdomain(o.subdomain))?;
        let values = forecasts
            .iter()
            .map(|f| f.wsr(model, o.time, k))
            .collect::<Result<Vec<f64>>>()?;
        let saturated = values.iter().filter(|&&v| v <= 0.0 || v >= 1.0).count();
        if saturated as f64 > cfg.saturation_fraction * m as f64 {
            log::info!(
                "skipping WSR of subdomain {} at t={}: {saturated}/{m} members saturated",
                o.subdomain,
                o.time
            );
            a.wsr_skipped += 1;
            continue;
        }
        if cfg.anamorphosis {
            let map = match (cfg.ga_fitting, maps.get(&o.subdomain)) {
                (GaFitting::Once, Some(map)) => map.clone(),
                _ => {
                    let map = AnamorphosisMap::fit(&values)?.for_wsr();
                    maps.insert(o.subdomain, map.clone());
                    map
                }
            };
            for (j, v) in values.iter().enumerate() {
                a.predicted[j].push(map.forward(*v));
            }
            a.observed.push(map.forward(o.value));
            a.std.push(match cfg.wsr_error {
                WsrErrorModel::UnitScore => 1.0,
                WsrErrorModel::Raw => {
                    let d = 1e-3;
                    let slope = (map.forward(o.value + d) - map.forward(o.value - d)) / (2.0 * d);
                    if slope > 0.0 {
                        o.sigma * slope
                    } else {
                        1.0
                    }
                }
            });
        } else {
            for (j, v) in values.iter().enumerate() {
                a.predicted[j].push(*v);
            }
            a.observed.push(o.value);
            a.std.push(o.sigma);
        }
        a.sources.push(Some(o.subdomain));
        a.wsr_used += 1;
    }
    Ok(a)
}

fn select(obs: &ObservationSet, selection: ObservationSelection) -> ObservationSet {
    match selection {
        ObservationSelection::None => ObservationSet::default(),
        ObservationSelection::Wse | ObservationSelection::WseWsr => ObservationSet {
            wse: obs.wse.iter().filter(|o| !o.dry).cloned().collect(),
            wsr: if selection == ObservationSelection::WseWsr {
                obs.wsr.clone()
            } else {
                Vec::new()
            },
        },
    }
}

/// Sequential windows of length `cfg.window` from `initial.t` to `t_end`.
/// In each window with observations the controls are perturbed around the
/// running analysis, members are propagated in parallel, the stochastic
/// EnKF updates the controls, and the window is rerun with the analysis
/// mean to produce the reanalysis and the next window's start state.
/// Windows without observations are run once with the running controls.
pub fn run_reanalysis(
    model: &FloodModel<'_>,
    initial: &HydraulicState,
    prior: &ControlVector,
    obs: &ObservationSet,
    cfg: &CycleConfig,
    t_end: f64,
    output_times: &[f64],
) -> Result<Reanalysis> {
    cfg.validate()?;
    model.check_controls(prior)?;
    if !prior.within(&cfg.bounds) {
        return Err(Error::Domain("prior controls outside their bounds".into()));
    }
    if output_times.iter().any(|&t| t < initial.t || t > t_end) {
        return Err(Error::Domain("output times outside the reanalysis period".into()));
    }
    let station_index: HashMap<&str, usize> = model
        .stations
        .iter()
        .enumerate()
        .map(|(k, s)| (s.name.as_str(), k))
        .collect();
    let obs = select(obs, cfg.selection);
    let mut maps = BTreeMap::new();

    let mut running = prior.clone();
    running.delta_h.iter_mut().for_each(|d| *d = 0.0);
    let mut state = initial.clone();
    let mut history = Vec::new();
    let mut diagnostics = Vec::new();
    let mut snapshots = Vec::with_capacity(output_times.len());
    let (mut vin, mut vout, mut steps) = (0.0, 0.0, 0);
    let mut window = 0usize;

    while state.t < t_end {
        let t0 = state.t;
        let t1 = (t0 + cfg.window).min(t_end);
        let w_obs = obs.window(t0, t1);
        let outputs: Vec<f64> = output_times
            .iter()
            .copied()
            .filter(|&t| (t > t0 || (window == 0 && t == t0)) && t <= t1)
            .collect();

        let mut controls = running.clone();
        let mut analyzed = false;
        if !w_obs.is_empty() {
            let with_dh = !w_obs.wsr.is_empty();
            let (ctl, diag) = analyze_window(
                model,
                &state,
                &running,
                &w_obs,
                cfg,
                window,
                t1,
                with_dh,
                &station_index,
                &mut maps,
            )?;
            if let Some(d) = diag {
                analyzed = true;
                diagnostics.push(d);
            }
            controls = ctl;
        }
        let run = propagate_member(model, &state, &controls, &cfg.bounds, t1, &outputs)?;
        let traj = run.trajectory;
        snapshots.extend(traj.snapshots);
        vin += traj.inflow_volume;
        vout += traj.outflow_volume;
        steps += traj.steps;
        state = traj.final_state;
        history.push(WindowControls {
            window,
            start: t0,
            end: t1,
            controls: controls.clone(),
            analyzed,
        });
        running = ControlVector {
            delta_h: vec![0.0; controls.delta_h.len()],
            ..controls
        };
        window += 1;
    }
    Ok(Reanalysis {
        trajectory: Trajectory {
            times: output_times.to_vec(),
            snapshots,
            final_state: state,
            inflow_volume: vin,
            outflow_volume: vout,
            steps,
        },
        history,
        diagnostics,
    })
}

#[allow(clippy::too_many_arguments)]
fn analyze_window(
    model: &FloodModel<'_>,
    start: &HydraulicState,
    running: &ControlVector,
    obs: &ObservationSet,
    cfg: &CycleConfig,
    window: usize,
    window_end: f64,
    with_dh: bool,
    station_index: &HashMap<&str, usize>,
    maps: &mut BTreeMap<u32, AnamorphosisMap>,
) -> Result<(ControlVector, Option<CycleDiagnostics>)> {
    // Members only need to reach the last observation of the window.
    let obs_times = obs.times();
    let t_last = *obs_times.last().expect("window has observations");
    let w = window as u64;
    let spreads = ControlSpreads {
        delta_h: if with_dh { cfg.spreads.delta_h } else { 0.0 },
        ..cfg.spreads
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[w, 0]));
    let mut members = perturb_with(running, &spreads, &cfg.bounds, cfg.members, &mut rng)?;
    recenter(&mut members, running, cfg.inflation, &cfg.bounds, with_dh);

    let run = |c: &ControlVector| propagate_member(model, start, c, &cfg.bounds, t_last, &obs_times);
    let mut results: Vec<Result<MemberForecast>> = members.par_iter().map(run).collect();
    let mut respawned = 0;
    let ok: Vec<ControlVector> = members
        .iter()
        .zip(&results)
        .filter(|(_, r)| r.is_ok())
        .map(|(c, _)| c.clone())
        .collect();
    if ok.len() < 2 && results.iter().any(|r| r.is_err()) {
        let err = results.into_iter().find_map(|r| r.err()).expect("a failed member");
        return Err(Error::Ensemble(format!("ensemble collapsed in window {window}: {err}")));
    }
    if ok.len() < members.len() {
        let center = analysis_mean(&ok, with_dh);
        for j in 0..members.len() {
            let mut attempt = 0;
            while let Err(e) = &results[j] {
                if attempt == cfg.max_respawn {
                    return Err(Error::Ensemble(format!(
                        "member {j} diverged {attempt} times in window {window}: {e}"
                    )));
                }
                log::warn!("member {j} diverged in window {window}, respawning: {e}");
                let mut r = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[w, 2, j as u64, attempt as u64]));
                members[j] = perturb_with(&center, &spreads, &cfg.bounds, 2, &mut r)?.remove(0);
                results[j] = run(&members[j]);
                attempt += 1;
                respawned += 1;
            }
        }
    }
    let forecasts: Vec<MemberForecast> = results.into_iter().collect::<Result<_>>()?;
    let (forecast_mean, forecast_std) = mean_std(&members);

    let a = assemble(model, obs, &forecasts, cfg, station_index, maps)?;
    if a.observed.is_empty() {
        log::warn!("window {window}: every observation unusable, analysis skipped");
        return Ok((running.clone(), None));
    }
    let ensemble: Vec<Vec<f64>> = members.iter().map(|c| c.to_analysis(with_dh)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[w, 1]));
    let analysis = if with_dh && cfg.localize_delta_h {
        let n = ensemble[0].len();
        let n_params = n - model.subdomains.len();
        let mask = DMatrix::from_fn(n, a.sources.len(), |i, k| {
            if i < n_params || a.sources[k] == Some(model.subdomains[i - n_params].id) {
                1.0
            } else {
                0.0
            }
        });
        localized_enkf_analysis(&ensemble, &a.predicted, &a.observed, &a.std, &mask, &mut rng)?
    } else {
        enkf_analysis(&ensemble, &a.predicted, &a.observed, &a.std, &mut rng)?
    };
    let mut clipped = 0;
    let updated: Vec<ControlVector> = analysis
        .ensemble
        .iter()
        .map(|v| {
            let mut c = ControlVector::from_analysis(v, running, with_dh);
            if !with_dh {
                c.delta_h.iter_mut().for_each(|d| *d = 0.0);
            }
            clipped += c.clip(&cfg.bounds);
            c
        })
        .collect();
    let (analysis_mean_v, analysis_std) = mean_std(&updated);
    let mut mean = analysis_mean(&updated, with_dh);
    mean.clip(&cfg.bounds);

    let p = a.observed.len() as f64;
    let innovation_rms = (analysis.mean_innovation.iter().map(|d| d * d).sum::<f64>() / p).sqrt();
    let normalized_innovation_rms = (analysis
        .mean_innovation
        .iter()
        .zip(&a.std)
        .map(|(d, s)| (d / s).powi(2))
        .sum::<f64>()
        / p)
        .sqrt();
    let diag = CycleDiagnostics {
        window,
        start: start.t,
        end: window_end,
        wse_used: a.wse_used,
        wsr_used: a.wsr_used,
        wsr_skipped: a.wsr_skipped,
        forecast_mean,
        forecast_std,
        analysis_mean: analysis_mean_v,
        analysis_std,
        innovation_rms,
        normalized_innovation_rms,
        clipped,
        respawned,
        jitter: analysis.jitter,
    };
    Ok((mean, Some(diag)))
}
