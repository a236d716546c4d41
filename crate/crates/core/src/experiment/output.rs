use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::hex;
use super::{summary_table, ExperimentResult, Twin};
use crate::enkf::{write_control_history, write_diagnostics};
use crate::error::{Error, Result};
use crate::hydraulics::io::{write_grid, write_hydrograph, write_state};
use crate::metrics::write_contingency_map;
use crate::observing::{write_observations, write_stations, write_subdomains, write_wet_dry_map, MapFormat};
use crate::routing::{write_network, write_reach_series};
use crate::textio;

fn date_tag(t: f64) -> String {
    format!("t{t}")
}

/// Writes the shared twin artifacts under `dir` and returns the paths.
pub fn write_twin(dir: &Path, twin: &Twin) -> Result<Vec<PathBuf>> {
    let sc = &twin.scenario;
    let f = &twin.forcings;
    let mut files = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    write_grid(&put("grid.csv"), &sc.grid)?;
    write_stations(&put("stations.csv"), &sc.stations)?;
    write_subdomains(&put("subdomains.csv"), &sc.grid, &sc.subdomains)?;
    write_network(&put("network.csv"), &f.network, &f.params)?;
    write_reach_series(&put("lateral_inflow.csv"), &f.network, &f.lateral)?;
    write_reach_series(&put("routed_discharge.csv"), &f.network, &f.routed)?;
    write_hydrograph(&put("forcing_observed.csv"), &f.observed)?;
    write_hydrograph(&put("forcing_hydrologic.csv"), &f.hydrologic)?;
    write_observations(&put("observations.csv"), &twin.observations)?;
    write_state(&put("initial_state.csv"), &sc.grid, &twin.initial)?;
    for (&t, map) in twin.wsr_dates.iter().zip(&twin.truth_maps) {
        write_wet_dry_map(&put(&format!("truth_wetdry_{}.pgm", date_tag(t))), map, MapFormat::Pgm)?;
    }
    Ok(files)
}

/// Writes one experiment's station series, controls, diagnostics, maps and
/// summary under `dir`.
pub fn write_experiment(dir: &Path, twin: &Twin, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    let sc = &twin.scenario;
    let ids: Vec<u32> = sc.subdomains.iter().map(|s| s.id).collect();
    let mut files = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };

    let mut text = String::from("time,station,observed,simulated\n");
    for s in &result.stations {
        for k in 0..s.times.len() {
            text.push_str(&format!(
                "{},{},{},{}\n",
                s.times[k], s.station, s.observed[k], s.simulated[k]
            ));
        }
    }
    textio::write(&put("stations.csv"), &text)?;
    let history = &result.reanalysis.history;
    write_control_history(&put("controls.csv"), history, sc.friction_zones(), &ids)?;
    write_diagnostics(
        &put("diagnostics.csv"),
        &result.reanalysis.diagnostics,
        sc.friction_zones(),
        &ids,
    )?;
    for m in &result.maps {
        let tag = date_tag(m.time);
        write_contingency_map(&put(&format!("contingency_{tag}.csv")), &m.contingency)?;
        write_wet_dry_map(&put(&format!("wetdry_{tag}.pgm")), &m.simulated, MapFormat::Pgm)?;
    }
    let table = summary_table(twin, std::slice::from_ref(result))?;
    table.write(&put("summary.csv"), &put("summary.txt"))?;
    Ok(files)
}

/// Writes every experiment into a subdirectory named by its label, plus the
/// combined `summary.csv` / `summary.txt`.
pub fn write_matrix(dir: &Path, twin: &Twin, results: &[ExperimentResult]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for r in results {
        files.extend(write_experiment(&dir.join(r.label()), twin, r)?);
    }
    let table = summary_table(twin, results)?;
    let (csv, txt) = (dir.join("summary.csv"), dir.join("summary.txt"));
    table.write(&csv, &txt)?;
    files.push(csv);
    files.push(txt);
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record written as `manifest.toml` next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub floodchain_version: String,
    pub command: String,
    /// SHA-256 of the canonical config with the output directory blanked.
    pub config_hash: String,
    pub scenario_hash: String,
    pub observation_seed: u64,
    pub run_seed: u64,
    pub experiments: Vec<String>,
    pub threads: usize,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<FileRecord>,
    /// Canonical config, enough to reproduce the run.
    pub config: String,
}

impl Manifest {
    pub fn new(
        command: &str,
        twin: &Twin,
        run_seed: u64,
        experiments: Vec<String>,
        root: &Path,
        files: &[PathBuf],
        timings: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let mut cfg = twin.config.clone();
        cfg.run.output = PathBuf::new();
        let config = cfg.to_toml();
        let records = files
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                let rel = p.strip_prefix(root).unwrap_or(p);
                Ok(FileRecord {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: hex(&Sha256::digest(&bytes)),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            floodchain_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: hex(&Sha256::digest(config.as_bytes())),
            scenario_hash: twin.scenario.hash(),
            observation_seed: twin.config.observations.seed,
            run_seed,
            experiments,
            threads: rayon::current_num_threads(),
            timings,
            files: records,
            config,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        textio::write(path, &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, 0, e.message().to_string()))
    }
}
