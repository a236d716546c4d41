use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use floodchain::experiment::{
    biased_discharge, make_forcings, run_experiment, write_experiment, write_twin, BiasKind, Experiment,
    ExperimentConfig, ForcingSource, Manifest, Twin,
};
use floodchain::hydraulics::simulate;
use floodchain::Error;

/// Six hours of the default twin with no maps and no rain.
fn short_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_scenario();
    cfg.event.duration = 21600.0;
    cfg.observations.wsr_dates.clear();
    cfg.truth_rain.events.clear();
    cfg.run.experiment = Experiment::OL;
    cfg.validate().unwrap();
    cfg
}

fn short_twin() -> &'static Twin {
    static TWIN: OnceLock<Twin> = OnceLock::new();
    TWIN.get_or_init(|| Twin::build(&short_config()).unwrap())
}

#[test]
fn hydrologic_forcing_underestimates_the_peak() {
    let cfg = ExperimentConfig::default_scenario();
    let f = make_forcings(&cfg).unwrap();
    let (obs, hyd) = (&f.observed, &f.hydrologic);
    assert!(hyd.peak() <= 0.75 * obs.peak(), "{} vs {}", hyd.peak(), obs.peak());
    let d = cfg.event.duration;
    assert!(hyd.volume(0.0, d) < obs.volume(0.0, d));
    // Low flows pass through unchanged.
    assert_eq!(hyd.values()[0], obs.values()[0]);
    for (q, b) in obs.values().iter().zip(hyd.values()) {
        assert!(b <= q);
    }
}

#[test]
fn uniform_bias_scales_every_value() {
    let mut cfg = ExperimentConfig::default_scenario();
    cfg.event.bias = BiasKind::Uniform;
    cfg.event.factor = 0.7;
    for q in [0.0, 12.5, 400.0] {
        assert_eq!(biased_discharge(&cfg.event, q), 0.7 * q);
    }
}

#[test]
fn open_loop_equals_a_plain_windowed_simulation() {
    let twin = short_twin();
    let r = run_experiment(twin, Experiment::OL, ForcingSource::Hydrologic, 3).unwrap();
    assert!(r.reanalysis.diagnostics.is_empty());

    let sc = &twin.scenario;
    let mut bc = sc.boundary(twin.forcings.hydrologic.clone());
    bc.inflow_scale = sc.prior_controls.mu;
    let friction = sc.friction(&sc.prior_controls).unwrap();
    let window = twin.config.assimilation.window;
    let end = twin.config.event.duration;
    let mut state = twin.initial.clone();
    let mut snapshots = Vec::new();
    while state.t < end {
        let t1 = (state.t + window).min(end);
        let outs: Vec<f64> = twin
            .wse_times
            .iter()
            .copied()
            .filter(|&t| t > state.t && t <= t1)
            .collect();
        let run = simulate(&sc.grid, &state, &bc, &friction, t1, &outs, &sc.solver).unwrap();
        snapshots.extend(run.snapshots);
        state = run.final_state;
    }
    assert_eq!(r.reanalysis.trajectory.snapshots, snapshots);
    assert_eq!(r.reanalysis.trajectory.final_state, state);
}

#[test]
fn open_loop_ignores_the_seed() {
    let twin = short_twin();
    let a = run_experiment(twin, Experiment::OL, ForcingSource::Observed, 1).unwrap();
    let b = run_experiment(twin, Experiment::OL, ForcingSource::Observed, 2).unwrap();
    assert_eq!(a.report.station_rmse, b.report.station_rmse);
}

#[test]
fn igda_needs_map_dates() {
    let err = run_experiment(short_twin(), Experiment::IGDA, ForcingSource::Observed, 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = ExperimentConfig::default_scenario();
    let back = ExperimentConfig::from_toml(&cfg.to_toml(), Path::new("<round trip>"), Path::new(".")).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn parse_errors_carry_the_line() {
    let text = include_str!("../../../configs/default.toml");
    let line = text.lines().position(|l| l.starts_with("members")).unwrap() + 1;
    let broken: String = text
        .lines()
        .map(|l| {
            if l.starts_with("members") {
                "members = \"twenty\""
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    match ExperimentConfig::from_toml(&broken, Path::new("bad.toml"), Path::new(".")) {
        Err(Error::Parse { line: l, .. }) => assert_eq!(l, line),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let unknown = text.replace("[assimilation]", "[assimilation]\nmembrs = 3");
    assert!(matches!(
        ExperimentConfig::from_toml(&unknown, Path::new("bad.toml"), Path::new(".")),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn invalid_values_are_config_errors() {
    let mut cfg = ExperimentConfig::default_scenario();
    cfg.assimilation.members = 1;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = ExperimentConfig::default_scenario();
    cfg.observations.wsr_dates.push(cfg.event.duration + 1.0);
    assert!(cfg.validate().is_err());
}

#[test]
fn manifest_round_trip_and_hashes() {
    let twin = short_twin();
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(twin, Experiment::IDA, ForcingSource::Hydrologic, 5).unwrap();
    let mut files = write_twin(&dir.path().join("twin"), twin).unwrap();
    files.extend(write_experiment(&dir.path().join(r.label()), twin, &r).unwrap());
    let timings = BTreeMap::from([("experiment".to_string(), 1.5)]);
    let m = Manifest::new("run", twin, 5, vec![r.label()], dir.path(), &files, timings).unwrap();
    assert_eq!(m.files.len(), files.len());
    assert!(m.files.iter().all(|f| !f.path.starts_with('/') && f.sha256.len() == 64));
    let path = dir.path().join("manifest.toml");
    m.write(&path).unwrap();
    assert_eq!(Manifest::read(&path).unwrap(), m);

    // The embedded config rebuilds the same scenario, whatever the output path.
    let cfg = ExperimentConfig::from_toml(&m.config, Path::new("<manifest>"), Path::new(".")).unwrap();
    let mut moved = twin.clone();
    moved.config.run.output = "/elsewhere".into();
    let m2 = Manifest::new("run", &moved, 5, vec![r.label()], dir.path(), &files, BTreeMap::new()).unwrap();
    assert_eq!(m2.config_hash, m.config_hash);
    assert_eq!(
        floodchain::experiment::build_scenario(&cfg).unwrap().hash(),
        m.scenario_hash
    );
}
