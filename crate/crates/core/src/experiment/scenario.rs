use std::f64::consts::PI;
use std::ops::Range;

use sha2::{Digest, Sha256};

use super::config::{BiasKind, EventConfig, ExperimentConfig, ScenarioConfig};
use crate::enkf::ControlVector;
use crate::error::{Error, Result};
use crate::hydraulics::{
    simulate, BoundaryConditions, FrictionField, HydraulicState, Hydrograph, OutletCondition, SolverConfig,
    StructuredGrid,
};
use crate::observing::{FloodplainSubdomain, GaugeStation};
use crate::routing::{
    read_network, read_reach_series, route_hydrograph, validate_config, LateralInflowSeries, MuskingumParams, Reach,
    ReachSeries, RiverNetwork,
};

/// Friction zone ids: upstream channel, downstream channel, floodplain.
pub const FRICTION_ZONES: [u32; 3] = [0, 1, 2];

/// Synthetic reach: a sloped rectangular channel between two floodplain
/// banks with micro-relief, gauges in the channel and labelled floodplain
/// subdomains.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: StructuredGrid,
    pub stations: Vec<GaugeStation>,
    pub subdomains: Vec<FloodplainSubdomain>,
    pub channel_rows: Range<usize>,
    pub true_controls: ControlVector,
    pub prior_controls: ControlVector,
    pub outlet: OutletCondition,
    pub solver: SolverConfig,
}

impl Scenario {
    pub fn friction_zones(&self) -> &'static [u32] {
        &FRICTION_ZONES
    }

    /// Channel inlet on the west edge, rating-curve outlet across the whole
    /// east edge.
    pub fn boundary(&self, inflow: Hydrograph) -> BoundaryConditions {
        BoundaryConditions {
            inflow,
            inflow_scale: 1.0,
            inlet_rows: self.channel_rows.clone().collect(),
            outlet: self.outlet,
            outlet_rows: (0..self.grid.ny()).collect(),
        }
    }

    pub fn friction(&self, controls: &ControlVector) -> Result<FrictionField> {
        FrictionField::new(FRICTION_ZONES.to_vec(), controls.friction.clone(), 1e-3, 1e3)
    }

    pub fn floodplain_mask(&self) -> Vec<bool> {
        self.grid.floodplain_mask()
    }

    /// SHA-256 over the bed, zones, labels and gauge positions.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "{} {} {} {}\n",
            self.grid.nx(),
            self.grid.ny(),
            self.grid.dx(),
            self.grid.dy()
        ));
        for c in 0..self.grid.len() {
            h.update(format!(
                "{} {} {:?}\n",
                self.grid.z()[c],
                self.grid.friction_zones()[c],
                self.grid.subdomain_labels()[c]
            ));
        }
        for s in &self.stations {
            h.update(format!("{} {} {} {}\n", s.name, s.i, s.j, s.sigma));
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the synthetic reach from its configuration.
pub fn build_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    let s: &ScenarioConfig = &cfg.scenario;
    let (nx, ny) = (s.nx, s.ny);
    let left = (ny - s.channel_rows) / 2;
    let channel = left..left + s.channel_rows;
    let length = nx as f64 * s.dx;
    let channel_bed = |i: usize| s.outlet_bed + s.slope * (length - (i as f64 + 0.5) * s.dx);

    let mut z = Vec::with_capacity(nx * ny);
    let mut zones = Vec::with_capacity(nx * ny);
    let mut labels = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            if channel.contains(&j) {
                z.push(channel_bed(i));
                zones.push(if i < nx / 2 {
                    FRICTION_ZONES[0]
                } else {
                    FRICTION_ZONES[1]
                });
                labels.push(None);
                continue;
            }
            let (rows_away, bank_count, offset) = if j < channel.start {
                (channel.start - j, s.left_subdomains, 0)
            } else {
                (j + 1 - channel.end, s.right_subdomains, s.left_subdomains)
            };
            let x = (i as f64 + 0.5) * s.dx;
            let y = (j as f64 + 0.5) * s.dy;
            let k = 2.0 * PI / s.relief_wavelength;
            let relief = s.relief_amplitude * (k * x).cos() * (k * y).cos();
            z.push(channel_bed(i) + s.bank_height + s.lateral_slope * (rows_away as f64 - 0.5) * s.dy + relief);
            zones.push(FRICTION_ZONES[2]);
            let chunk = (i * bank_count) / nx;
            labels.push(Some((offset + chunk + 1) as u32));
        }
    }
    let grid = StructuredGrid::new(nx, ny, s.dx, s.dy, z, zones, labels)?;

    let mid_row = channel.start + s.channel_rows / 2;
    let stations: Vec<GaugeStation> = s
        .station_names
        .iter()
        .zip(&s.station_positions)
        .map(|(name, &p)| GaugeStation {
            name: name.clone(),
            i: (p * (nx - 1) as f64).round() as usize,
            j: mid_row,
            sigma: s.station_sigma,
        })
        .collect();
    for st in &stations {
        st.validate(&grid)?;
    }
    let subdomains = FloodplainSubdomain::all_from_grid(&grid, cfg.observations.wsr_sigma);
    crate::observing::validate_subdomains(&grid, &subdomains)?;

    if !(s.slope > 0.0) {
        return Err(Error::Config("the rating-curve outlet needs a positive slope".into()));
    }
    // Normal-depth rating of the rectangular channel with the true
    // downstream friction: h = (Q / (K B sqrt(S)))^(3/5).
    let width = s.channel_rows as f64 * s.dy;
    let conveyance = s.true_friction[1] * width * s.slope.sqrt();
    let outlet = OutletCondition::RatingCurve {
        a: conveyance.powf(-0.6),
        b: 0.6,
        z0: channel_bed(nx - 1),
    };
    let n_sub = subdomains.len();
    Ok(Scenario {
        grid,
        stations,
        subdomains,
        channel_rows: channel,
        true_controls: ControlVector::new(s.true_friction.clone(), 1.0, vec![0.0; n_sub]),
        prior_controls: ControlVector::new(s.prior_friction.clone(), 1.0, vec![0.0; n_sub]),
        outlet,
        solver: SolverConfig {
            dry_eps: s.dry_eps,
            cfl: s.cfl,
            dt_max: s.dt_max,
            ..SolverConfig::default()
        },
    })
}

/// Channel at normal depth for `discharge` with the given friction, then a
/// spin-up of `cfg.scenario.spinup` seconds at constant inflow. The
/// returned state has `t = 0`.
pub fn initial_state(
    scenario: &Scenario,
    cfg: &ExperimentConfig,
    discharge: f64,
    controls: &ControlVector,
) -> Result<HydraulicState> {
    let s = &cfg.scenario;
    let grid = &scenario.grid;
    let t0 = -s.spinup;
    let mut state = HydraulicState::dry(grid, t0);
    let width = s.channel_rows as f64 * s.dy;
    for j in scenario.channel_rows.clone() {
        for i in 0..grid.nx() {
            let k = if i < grid.nx() / 2 {
                controls.friction[0]
            } else {
                controls.friction[1]
            };
            let h = (discharge / (k * width * s.slope.sqrt())).powf(0.6);
            let c = grid.index(i, j);
            state.h[c] = h;
            state.qx[c] = discharge / width;
        }
    }
    if s.spinup == 0.0 {
        return Ok(state);
    }
    let bc = scenario.boundary(Hydrograph::constant(discharge, t0, 0.0)?);
    let friction = scenario.friction(controls)?;
    let mut out = simulate(grid, &state, &bc, &friction, 0.0, &[], &scenario.solver)?.final_state;
    out.t = 0.0;
    Ok(out)
}

/// The routed upstream discharge and its biased hydrologic counterpart.
#[derive(Debug, Clone)]
pub struct Forcings {
    pub network: RiverNetwork,
    pub params: MuskingumParams,
    pub lateral: LateralInflowSeries,
    pub routed: ReachSeries,
    pub observed: Hydrograph,
    pub hydrologic: Hydrograph,
}

/// Built-in seven-reach tree: `(id, downstream, share of flow, pulse offset
/// in s)`.
const BUILTIN_REACHES: [(&str, Option<&str>, f64, f64); 7] = [
    ("upper_a", Some("middle_a"), 0.20, -10800.0),
    ("upper_b", Some("middle_a"), 0.15, -7200.0),
    ("upper_c", Some("middle_b"), 0.20, -9000.0),
    ("middle_a", Some("lower"), 0.10, -3600.0),
    ("middle_b", Some("lower"), 0.10, -3600.0),
    ("tributary", Some("lower"), 0.15, -1800.0),
    ("lower", None, 0.10, 0.0),
];

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Hydrologic-model bias applied to a discharge value.
pub fn biased_discharge(event: &EventConfig, q: f64) -> f64 {
    match event.bias {
        BiasKind::Peak => q * (1.0 - event.reduction * smoothstep((q - event.threshold) / event.ramp)),
        BiasKind::Uniform => q * event.factor,
    }
}

/// Routes the lateral inflows to the reach outlet; the outlet discharge is
/// the observed forcing and its biased version the hydrologic one.
pub fn make_forcings(cfg: &ExperimentConfig) -> Result<Forcings> {
    let e = &cfg.event;
    let (network, params) = match &e.network_file {
        Some(p) => read_network(p)?,
        None => {
            let reaches = BUILTIN_REACHES
                .iter()
                .map(|(id, down, _, _)| Reach {
                    id: id.to_string(),
                    downstream: down.map(str::to_string),
                })
                .collect();
            (
                RiverNetwork::new(reaches)?,
                MuskingumParams::uniform(BUILTIN_REACHES.len(), 3600.0, 0.1),
            )
        }
    };
    let lateral = match &e.lateral_inflow_file {
        Some(p) => read_reach_series(p, &network)?,
        None => {
            if e.network_file.is_some() {
                return Err(Error::Config("a custom network needs a lateral inflow file".into()));
            }
            let n = (e.duration / e.step).round() as usize;
            let times: Vec<f64> = (0..=n).map(|k| k as f64 * e.step).collect();
            let values = times
                .iter()
                .map(|&t| {
                    BUILTIN_REACHES
                        .iter()
                        .map(|(_, _, share, offset)| {
                            let s = (t - e.peak_time - offset) / e.width;
                            share * (e.baseflow + e.peak * (-s * s).exp())
                        })
                        .collect()
                })
                .collect();
            LateralInflowSeries { times, values }
        }
    };
    if lateral.times.first() != Some(&0.0) || lateral.times.last().is_none_or(|&t| t < e.duration) {
        return Err(Error::Config(
            "lateral inflow must start at 0 and cover the event".into(),
        ));
    }
    let dt = lateral.step()?;
    // Warnings are logged by the validator itself.
    validate_config(&network, &params, dt)?;
    // Steady routing state for the first lateral inflows.
    let mut q0 = vec![0.0; network.len()];
    for &i in network.topological_order() {
        q0[i] = lateral.values[0][i] + network.upstream_of(i).iter().map(|&j| q0[j]).sum::<f64>();
    }
    let routed = route_hydrograph(&network, &params, &lateral, &q0)?;
    let outlets = network.outlets();
    let outflow: Vec<f64> = routed
        .values
        .iter()
        .map(|row| outlets.iter().map(|&o| row[o]).sum::<f64>().max(0.0))
        .collect();
    let observed = Hydrograph::new(routed.times.clone(), outflow.clone())?;
    let hydrologic = Hydrograph::new(
        routed.times.clone(),
        outflow.iter().map(|&q| biased_discharge(e, q)).collect(),
    )?;
    Ok(Forcings {
        network,
        params,
        lateral,
        routed,
        observed,
        hydrologic,
    })
}
