//! Twin experiments: builds the synthetic reach and its forcings, runs the
//! truth, synthesizes observations and evaluates OL / IDA / IGDA
//! reanalyses under observed or hydrologic forcing.

mod config;
mod output;
mod scenario;

pub use config::{
    AssimilationConfig, BiasKind, EventConfig, Experiment, ExperimentConfig, ForcingSource, ObservationConfig,
    RainEvent, RunConfig, ScenarioConfig, TruthRainConfig, CONFIG_VERSION,
};
pub use output::{write_experiment, write_matrix, write_twin, FileRecord, Manifest};
pub use scenario::{
    biased_discharge, build_scenario, initial_state, make_forcings, Forcings, Scenario, FRICTION_ZONES,
};

use rayon::prelude::*;

use crate::enkf::{run_reanalysis, FloodModel, Reanalysis};
use crate::error::{Error, Result};
use crate::hydraulics::{apply_state_correction, simulate, HydraulicState, Hydrograph, Trajectory};
use crate::metrics::{contingency, csi, rmse, summarize, ContingencyMap, MetricsReport, SummaryTable};
use crate::observing::{
    extract_wse, synthesize_observations, wet_dry_map, ObservationSet, SynthesisRequest, WetDryMap,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "FLOODCHAIN_THREADS";

/// Thread cap from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Runs `f` inside a rayon pool limited to `threads` workers (all cores
/// when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Truth run, synthetic observations and everything shared by the
/// experiments.
#[derive(Debug, Clone)]
pub struct Twin {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub forcings: Forcings,
    pub initial: HydraulicState,
    pub truth: Trajectory,
    pub observations: ObservationSet,
    pub wse_times: Vec<f64>,
    pub wsr_dates: Vec<f64>,
    /// Truth wet/dry maps at the WSR dates.
    pub truth_maps: Vec<WetDryMap>,
}

fn merge_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = a.iter().chain(b).copied().collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

impl Twin {
    /// Builds the scenario and forcings, runs the truth (observed forcing,
    /// true friction, rain on the floodplain if enabled) and synthesizes
    /// the observations.
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let scenario = build_scenario(config)?;
        let forcings = make_forcings(config)?;
        let duration = config.event.duration;
        let initial = initial_state(
            &scenario,
            config,
            forcings.observed.value_at(0.0),
            &scenario.true_controls,
        )?;
        let o = &config.observations;
        let n = (duration / o.wse_interval).floor() as usize;
        let wse_times: Vec<f64> = (1..=n).map(|k| k as f64 * o.wse_interval).collect();
        let wsr_dates = o.wsr_dates.clone();
        let outputs = merge_times(&wse_times, &wsr_dates);

        let truth = run_truth(config, &scenario, &forcings.observed, &initial, &outputs)?;
        let observations = synthesize_observations(
            &truth,
            &scenario.grid,
            &SynthesisRequest {
                stations: &scenario.stations,
                subdomains: &scenario.subdomains,
                wse_times: &wse_times,
                wsr_times: &wsr_dates,
                noise_std_wse: o.wse_noise,
                noise_std_wsr: o.wsr_noise,
                dry_eps: scenario.solver.dry_eps,
                seed: o.seed,
            },
        )?;
        let truth_maps = wsr_dates
            .iter()
            .map(|&t| {
                let s = truth.at(t).ok_or(Error::MissingTime(t))?;
                Ok(wet_dry_map(s, &scenario.grid, scenario.solver.dry_eps))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: config.clone(),
            scenario,
            forcings,
            initial,
            truth,
            observations,
            wse_times,
            wsr_dates,
            truth_maps,
        })
    }

    /// Same truth with fresh observation noise.
    pub fn with_observation_seed(&self, seed: u64) -> Result<Self> {
        let o = &self.config.observations;
        let mut out = self.clone();
        out.config.observations.seed = seed;
        out.observations = synthesize_observations(
            &self.truth,
            &self.scenario.grid,
            &SynthesisRequest {
                stations: &self.scenario.stations,
                subdomains: &self.scenario.subdomains,
                wse_times: &self.wse_times,
                wsr_times: &self.wsr_dates,
                noise_std_wse: o.wse_noise,
                noise_std_wsr: o.wsr_noise,
                dry_eps: self.scenario.solver.dry_eps,
                seed,
            },
        )?;
        Ok(out)
    }

    pub fn forcing(&self, source: ForcingSource) -> &Hydrograph {
        match source {
            ForcingSource::Observed => &self.forcings.observed,
            ForcingSource::Hydrologic => &self.forcings.hydrologic,
        }
    }

    /// Inflow volume of the truth run over the event (m³).
    pub fn truth_inflow_volume(&self) -> f64 {
        self.truth.inflow_volume
    }
}

fn run_truth(
    config: &ExperimentConfig,
    scenario: &Scenario,
    forcing: &Hydrograph,
    initial: &HydraulicState,
    outputs: &[f64],
) -> Result<Trajectory> {
    let bc = scenario.boundary(forcing.clone());
    let friction = scenario.friction(&scenario.true_controls)?;
    let mut events: Vec<&RainEvent> = config.truth_rain.events.iter().collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    // Segment ends: each rain time, then the end of the event.
    let mut ends: Vec<(f64, Option<&RainEvent>)> = events.iter().map(|e| (e.time, Some(*e))).collect();
    ends.push((config.event.duration, None));

    let mut state = initial.clone();
    let mut out = Trajectory {
        times: outputs.to_vec(),
        snapshots: Vec::with_capacity(outputs.len()),
        final_state: initial.clone(),
        inflow_volume: 0.0,
        outflow_volume: 0.0,
        steps: 0,
    };
    let mut t0 = f64::NEG_INFINITY;
    for (t1, rain) in ends {
        // Snapshots at a rain time are taken before the rain falls.
        let seg: Vec<f64> = outputs.iter().copied().filter(|&t| t > t0 && t <= t1).collect();
        let part = simulate(&scenario.grid, &state, &bc, &friction, t1, &seg, &scenario.solver)?;
        out.snapshots.extend(part.snapshots);
        out.inflow_volume += part.inflow_volume;
        out.outflow_volume += part.outflow_volume;
        out.steps += part.steps;
        state = part.final_state;
        if let Some(r) = rain {
            let corrections: Vec<(u32, f64)> = scenario
                .subdomains
                .iter()
                .zip(&r.depth)
                .map(|(s, &d)| (s.id, d))
                .collect();
            state = apply_state_correction(&state, &scenario.grid, &corrections, scenario.solver.dry_eps)?;
        }
        t0 = t1;
    }
    out.final_state = state;
    Ok(out)
}

/// Simulated and observed water levels at one gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub station: String,
    pub times: Vec<f64>,
    pub observed: Vec<f64>,
    pub simulated: Vec<f64>,
}

/// Simulated map and its comparison with the truth at one WSR date.
#[derive(Debug, Clone)]
pub struct DateMaps {
    pub time: f64,
    pub simulated: WetDryMap,
    pub contingency: ContingencyMap,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub forcing: ForcingSource,
    pub seed: u64,
    pub reanalysis: Reanalysis,
    pub stations: Vec<StationSeries>,
    pub maps: Vec<DateMaps>,
    pub report: MetricsReport,
}

impl ExperimentResult {
    /// Row label such as `IDA-R`.
    pub fn label(&self) -> String {
        label(self.experiment, self.forcing)
    }

    /// Boundary inflow volume of the reanalysis (m³).
    pub fn inflow_volume(&self) -> f64 {
        self.reanalysis.trajectory.inflow_volume
    }
}

pub fn label(experiment: Experiment, forcing: ForcingSource) -> String {
    format!("{experiment}-{}", forcing.suffix())
}

/// Runs one experiment against the twin's observations and evaluates it.
pub fn run_experiment(
    twin: &Twin,
    experiment: Experiment,
    forcing: ForcingSource,
    seed: u64,
) -> Result<ExperimentResult> {
    let cfg = &twin.config;
    cfg.validate_experiment(experiment)?;
    let sc = &twin.scenario;
    let bc = sc.boundary(twin.forcing(forcing).clone());
    let model = FloodModel {
        grid: &sc.grid,
        boundary: &bc,
        friction_zones: sc.friction_zones(),
        stations: &sc.stations,
        subdomains: &sc.subdomains,
        solver: sc.solver,
    };
    let outputs = merge_times(&twin.wse_times, &twin.wsr_dates);
    let cycle = cfg.cycle(experiment, seed);
    log::info!("running {}", label(experiment, forcing));
    let reanalysis = run_reanalysis(
        &model,
        &twin.initial,
        &sc.prior_controls,
        &twin.observations,
        &cycle,
        cfg.event.duration,
        &outputs,
    )?;
    evaluate(twin, experiment, forcing, seed, reanalysis)
}

/// Station RMSE and map CSI of a reanalysis against the twin.
pub fn evaluate(
    twin: &Twin,
    experiment: Experiment,
    forcing: ForcingSource,
    seed: u64,
    reanalysis: Reanalysis,
) -> Result<ExperimentResult> {
    let sc = &twin.scenario;
    let traj = &reanalysis.trajectory;
    let mut stations = Vec::new();
    for st in &sc.stations {
        let obs: Vec<_> = twin
            .observations
            .station_series(&st.name)
            .into_iter()
            .filter(|o| !o.dry)
            .collect();
        let simulated = obs
            .iter()
            .map(|o| {
                let s = traj.at(o.time).ok_or(Error::MissingTime(o.time))?;
                Ok(extract_wse(s, &sc.grid, st, sc.solver.dry_eps)?.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        stations.push(StationSeries {
            station: st.name.clone(),
            times: obs.iter().map(|o| o.time).collect(),
            observed: obs.iter().map(|o| o.value).collect(),
            simulated,
        });
    }
    let mask = (!twin.config.run.csi_include_channel).then(|| sc.floodplain_mask());
    let mut maps = Vec::new();
    for (&t, truth_map) in twin.wsr_dates.iter().zip(&twin.truth_maps) {
        let s = traj.at(t).ok_or(Error::MissingTime(t))?;
        let simulated = wet_dry_map(s, &sc.grid, sc.solver.dry_eps);
        let contingency = contingency(&simulated, truth_map, mask.as_deref())?;
        maps.push(DateMaps {
            time: t,
            simulated,
            contingency,
        });
    }
    let report = MetricsReport {
        experiment: label(experiment, forcing),
        station_rmse: stations
            .iter()
            .map(|s| rmse(&s.simulated, &s.observed))
            .collect::<Result<_>>()?,
        date_csi: maps.iter().map(|m| csi(&m.contingency)).collect(),
    };
    Ok(ExperimentResult {
        experiment,
        forcing,
        seed,
        reanalysis,
        stations,
        maps,
        report,
    })
}

/// The six experiments {OL, IDA, IGDA} × {observed, hydrologic} on one twin,
/// ordered observed first.
pub fn run_matrix(twin: &Twin, seed: u64) -> Result<Vec<ExperimentResult>> {
    twin.config.validate_matrix()?;
    let cells: Vec<(Experiment, ForcingSource)> = ForcingSource::ALL
        .iter()
        .flat_map(|&f| Experiment::ALL.iter().map(move |&e| (e, f)))
        .collect();
    cells
        .par_iter()
        .map(|&(e, f)| run_experiment(twin, e, f, seed))
        .collect()
}

/// Summary table over a set of results.
pub fn summary_table(twin: &Twin, results: &[ExperimentResult]) -> Result<SummaryTable> {
    let stations: Vec<String> = twin.scenario.stations.iter().map(|s| s.name.clone()).collect();
    summarize(
        &stations,
        &twin.wsr_dates,
        results.iter().map(|r| r.report.clone()).collect(),
    )
}
