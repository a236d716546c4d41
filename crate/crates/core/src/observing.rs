//! Gauge stations, floodplain subdomains and the observation operators that
//! map a hydraulic state to water surface elevations and wet surface ratios.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hydraulics::{HydraulicState, StructuredGrid, Trajectory};
use crate::textio::{self, parse_f64, parse_usize, split_fields};

/// In-situ water level gauge located in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeStation {
    pub name: String,
    pub i: usize,
    pub j: usize,
    /// Observation error standard deviation (m).
    pub sigma: f64,
}

impl GaugeStation {
    pub fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        if !grid.contains(self.i, self.j) {
            return Err(Error::OutsideGrid(format!(
                "station `{}` at ({},{})",
                self.name, self.i, self.j
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Domain(format!("station `{}`: sigma must be > 0", self.name)));
        }
        Ok(())
    }

    pub fn cell(&self, grid: &StructuredGrid) -> usize {
        grid.index(self.i, self.j)
    }
}

/// A labelled block of floodplain cells over which wet surface ratios are
/// computed.
#[derive(Debug, Clone, PartialEq)]
pub struct FloodplainSubdomain {
    pub id: u32,
    pub cells: Vec<usize>,
    /// Observation error standard deviation of the ratio.
    pub sigma: f64,
}

impl FloodplainSubdomain {
    /// Subdomain made of every grid cell carrying label `id`.
    pub fn from_grid(grid: &StructuredGrid, id: u32, sigma: f64) -> Result<Self> {
        let cells = grid.subdomain_cells(id).ok_or(Error::UnknownSubdomain(id))?.to_vec();
        Ok(Self { id, cells, sigma })
    }

    /// One subdomain per grid label, in ascending id order.
    pub fn all_from_grid(grid: &StructuredGrid, sigma: f64) -> Vec<Self> {
        grid.subdomain_ids()
            .map(|id| Self::from_grid(grid, id, sigma).expect("label present"))
            .collect()
    }
}

/// Checks that subdomains are non-empty, inside the grid and pairwise
/// disjoint.
pub fn validate_subdomains(grid: &StructuredGrid, subdomains: &[FloodplainSubdomain]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in subdomains {
        if s.cells.is_empty() {
            return Err(Error::EmptySubdomain(s.id));
        }
        if !(s.sigma > 0.0) {
            return Err(Error::Domain(format!("subdomain {}: sigma must be > 0", s.id)));
        }
        for &c in &s.cells {
            if c >= grid.len() {
                return Err(Error::OutsideGrid(format!("subdomain {} cell {c}", s.id)));
            }
            if !seen.insert(c) {
                return Err(Error::Domain(format!("cell {c} belongs to two subdomains")));
            }
        }
    }
    Ok(())
}

/// Water surface elevation at a gauge. Dry gauges read the bed elevation and
/// carry `dry = true`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WseReading {
    pub value: f64,
    pub dry: bool,
}

pub fn extract_wse(
    state: &HydraulicState,
    grid: &StructuredGrid,
    station: &GaugeStation,
    dry_eps: f64,
) -> Result<WseReading> {
    if !grid.contains(station.i, station.j) {
        return Err(Error::OutsideGrid(format!("station `{}`", station.name)));
    }
    let c = station.cell(grid);
    let h = state.h[c];
    Ok(if h < dry_eps {
        WseReading {
            value: grid.z()[c],
            dry: true,
        }
    } else {
        WseReading {
            value: grid.z()[c] + h,
            dry: false,
        }
    })
}

/// Binary wet/dry classification of every cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WetDryMap {
    pub nx: usize,
    pub ny: usize,
    pub wet: Vec<bool>,
}

/// A cell is wet iff `h >= threshold`.
pub fn wet_dry_map(state: &HydraulicState, grid: &StructuredGrid, threshold: f64) -> WetDryMap {
    WetDryMap {
        nx: grid.nx(),
        ny: grid.ny(),
        wet: state.h.iter().map(|&h| h >= threshold).collect(),
    }
}

/// Fraction of a subdomain's cells that are wet. Cells share one area on a
/// uniform grid, so the area weighting reduces to a count.
pub fn wsr(state: &HydraulicState, subdomain: &FloodplainSubdomain, threshold: f64) -> Result<f64> {
    if subdomain.cells.is_empty() {
        return Err(Error::EmptySubdomain(subdomain.id));
    }
    let wet = subdomain.cells.iter().filter(|&&c| state.h[c] >= threshold).count();
    Ok(wet as f64 / subdomain.cells.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WseObservation {
    pub time: f64,
    pub station: String,
    pub value: f64,
    pub sigma: f64,
    pub dry: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WsrObservation {
    pub time: f64,
    pub subdomain: u32,
    pub value: f64,
    pub sigma: f64,
}

/// Time-sorted gauge and wet-surface-ratio observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pub wse: Vec<WseObservation>,
    pub wsr: Vec<WsrObservation>,
}

impl ObservationSet {
    pub fn is_empty(&self) -> bool {
        self.wse.is_empty() && self.wsr.is_empty()
    }

    /// Observations with `t0 < time <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> ObservationSet {
        ObservationSet {
            wse: self
                .wse
                .iter()
                .filter(|o| o.time > t0 && o.time <= t1)
                .cloned()
                .collect(),
            wsr: self
                .wsr
                .iter()
                .filter(|o| o.time > t0 && o.time <= t1)
                .cloned()
                .collect(),
        }
    }

    pub fn without_wsr(&self) -> ObservationSet {
        ObservationSet {
            wse: self.wse.clone(),
            wsr: Vec::new(),
        }
    }

    /// Distinct observation times, ascending.
    pub fn times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .wse
            .iter()
            .map(|o| o.time)
            .chain(self.wsr.iter().map(|o| o.time))
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn wsr_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.wsr.iter().map(|o| o.time).collect();
        t.dedup();
        t
    }

    /// Observed series of one station, in time order.
    pub fn station_series(&self, station: &str) -> Vec<&WseObservation> {
        self.wse.iter().filter(|o| o.station == station).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.wse.windows(2).any(|w| w[1].time < w[0].time) || self.wsr.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::Domain("observation times must be sorted".into()));
        }
        if self.wse.iter().any(|o| !o.value.is_finite() || !(o.sigma > 0.0))
            || self
                .wsr
                .iter()
                .any(|o| !(0.0..=1.0).contains(&o.value) || !(o.sigma > 0.0))
        {
            return Err(Error::Domain("observation values or sigmas out of range".into()));
        }
        Ok(())
    }
}

/// Noise-perturbed twin observations extracted from a reference run.
pub struct SynthesisRequest<'a> {
    pub stations: &'a [GaugeStation],
    pub subdomains: &'a [FloodplainSubdomain],
    pub wse_times: &'a [f64],
    pub wsr_times: &'a [f64],
    pub noise_std_wse: f64,
    pub noise_std_wsr: f64,
    pub dry_eps: f64,
    pub seed: u64,
}

/// Draws WSE noise first (time-major, stations in order), then WSR noise
/// (time-major, subdomains in order), from one seeded stream.
pub fn synthesize_observations(
    truth: &Trajectory,
    grid: &StructuredGrid,
    req: &SynthesisRequest<'_>,
) -> Result<ObservationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut noise = |std: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        std * z
    };
    let mut out = ObservationSet::default();
    for &t in req.wse_times {
        let state = truth.at(t).ok_or(Error::MissingTime(t))?;
        for st in req.stations {
            let r = extract_wse(state, grid, st, req.dry_eps)?;
            out.wse.push(WseObservation {
                time: t,
                station: st.name.clone(),
                value: r.value + noise(req.noise_std_wse),
                sigma: st.sigma,
                dry: r.dry,
            });
        }
    }
    for &t in req.wsr_times {
        let state = truth.at(t).ok_or(Error::MissingTime(t))?;
        for sd in req.subdomains {
            let ratio = wsr(state, sd, req.dry_eps)?;
            out.wsr.push(WsrObservation {
                time: t,
                subdomain: sd.id,
                value: (ratio + noise(req.noise_std_wsr)).clamp(0.0, 1.0),
                sigma: sd.sigma,
            });
        }
    }
    Ok(out)
}

/// Writes `kind,time,id,value,sigma,dry` rows, WSE records first.
pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    let mut out = String::from("kind,time,id,value,sigma,dry\n");
    for o in &obs.wse {
        out.push_str(&format!(
            "wse,{},{},{},{},{}\n",
            o.time, o.station, o.value, o.sigma, o.dry as u8
        ));
    }
    for o in &obs.wsr {
        out.push_str(&format!("wsr,{},{},{},{},0\n", o.time, o.subdomain, o.value, o.sigma));
    }
    textio::write(path, &out)
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    let mut obs = ObservationSet::default();
    for (line, text) in textio::data_lines(path)? {
        let f = split_fields(&text);
        if f.len() != 6 {
            return Err(Error::parse(path, line, "expected `kind,time,id,value,sigma,dry`"));
        }
        match f[0] {
            "kind" => continue,
            "wse" => obs.wse.push(WseObservation {
                time: parse_f64(path, line, f[1])?,
                station: f[2].to_string(),
                value: parse_f64(path, line, f[3])?,
                sigma: parse_f64(path, line, f[4])?,
                dry: f[5] == "1",
            }),
            "wsr" => obs.wsr.push(WsrObservation {
                time: parse_f64(path, line, f[1])?,
                subdomain: f[2].parse().map_err(|_| Error::parse(path, line, "bad subdomain id"))?,
                value: parse_f64(path, line, f[3])?,
                sigma: parse_f64(path, line, f[4])?,
            }),
            other => return Err(Error::parse(path, line, format!("unknown kind `{other}`"))),
        }
    }
    Ok(obs)
}

pub fn write_stations(path: &Path, stations: &[GaugeStation]) -> Result<()> {
    let mut out = String::from("name,i,j,sigma\n");
    for s in stations {
        out.push_str(&format!("{},{},{},{}\n", s.name, s.i, s.j, s.sigma));
    }
    textio::write(path, &out)
}

pub fn read_stations(path: &Path) -> Result<Vec<GaugeStation>> {
    let mut out = Vec::new();
    for (line, text) in textio::data_lines(path)? {
        let f = split_fields(&text);
        if f.len() != 4 {
            return Err(Error::parse(path, line, "expected `name,i,j,sigma`"));
        }
        if f[0] == "name" {
            continue;
        }
        out.push(GaugeStation {
            name: f[0].to_string(),
            i: parse_usize(path, line, f[1])?,
            j: parse_usize(path, line, f[2])?,
            sigma: parse_f64(path, line, f[3])?,
        });
    }
    Ok(out)
}

/// One `id,sigma,i,j` row per member cell.
pub fn write_subdomains(path: &Path, grid: &StructuredGrid, subs: &[FloodplainSubdomain]) -> Result<()> {
    let mut out = String::from("id,sigma,i,j\n");
    for s in subs {
        for &c in &s.cells {
            let (i, j) = grid.coords(c);
            out.push_str(&format!("{},{},{i},{j}\n", s.id, s.sigma));
        }
    }
    textio::write(path, &out)
}

pub fn read_subdomains(path: &Path, grid: &StructuredGrid) -> Result<Vec<FloodplainSubdomain>> {
    let mut out: Vec<FloodplainSubdomain> = Vec::new();
    for (line, text) in textio::data_lines(path)? {
        let f = split_fields(&text);
        if f.len() != 4 {
            return Err(Error::parse(path, line, "expected `id,sigma,i,j`"));
        }
        if f[0] == "id" {
            continue;
        }
        let id: u32 = f[0].parse().map_err(|_| Error::parse(path, line, "bad subdomain id"))?;
        let sigma = parse_f64(path, line, f[1])?;
        let (i, j) = (parse_usize(path, line, f[2])?, parse_usize(path, line, f[3])?);
        if !grid.contains(i, j) {
            return Err(Error::parse(path, line, format!("cell ({i},{j}) outside grid")));
        }
        match out.iter_mut().find(|s| s.id == id) {
            Some(s) => s.cells.push(grid.index(i, j)),
            None => out.push(FloodplainSubdomain {
                id,
                cells: vec![grid.index(i, j)],
                sigma,
            }),
        }
    }
    validate_subdomains(grid, &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    /// Portable grey map (plain P2), wet = 1, rows written north to south.
    Pgm,
    /// Comma-separated 0/1 grid, rows written south to north.
    Csv,
}

pub fn write_wet_dry_map(path: &Path, map: &WetDryMap, format: MapFormat) -> Result<()> {
    let mut out = String::new();
    match format {
        MapFormat::Pgm => {
            out.push_str(&format!("P2\n{} {}\n1\n", map.nx, map.ny));
            for j in (0..map.ny).rev() {
                let row: Vec<&str> = (0..map.nx)
                    .map(|i| if map.wet[j * map.nx + i] { "1" } else { "0" })
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        MapFormat::Csv => {
            for j in 0..map.ny {
                let row: Vec<&str> = (0..map.nx)
                    .map(|i| if map.wet[j * map.nx + i] { "1" } else { "0" })
                    .collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
    }
    textio::write(path, &out)
}
