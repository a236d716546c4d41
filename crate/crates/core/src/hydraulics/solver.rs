use serde::{Deserialize, Serialize};

use super::{BoundaryConditions, FrictionField, HydraulicState, StructuredGrid};
use crate::error::{Error, Result};

/// Numerical settings shared by the solver and the wet/dry classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub gravity: f64,
    /// Depth below which a cell is dry (m).
    pub dry_eps: f64,
    /// Courant number; `<= 0.5` keeps the unsplit 2D update positive.
    pub cfl: f64,
    /// Step used when no cell is wet, and upper bound on every step (s).
    pub dt_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            dry_eps: 1e-4,
            cfl: 0.45,
            dt_max: 30.0,
        }
    }
}

/// CFL-limited step: `cfl * min(dx, dy) / max(|u| + sqrt(g h))` over wet
/// cells, or `dt_max` when every cell is dry.
pub fn stable_dt(grid: &StructuredGrid, state: &HydraulicState, cfl: f64, cfg: &SolverConfig) -> f64 {
    let g = cfg.gravity;
    let mut smax = 0.0f64;
    for c in 0..grid.len() {
        let h = state.h[c];
        if h >= cfg.dry_eps {
            let speed = (state.qx[c] * state.qx[c] + state.qy[c] * state.qy[c]).sqrt() / h;
            smax = smax.max(speed + (g * h).sqrt());
        }
    }
    if smax > 0.0 {
        (cfl * grid.dx().min(grid.dy()) / smax).min(cfg.dt_max)
    } else {
        cfg.dt_max
    }
}

/// Water volumes that crossed the open boundaries during a step (m³).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundaryFlux {
    pub inflow: f64,
    pub outflow: f64,
}

/// Interface flux in face-normal coordinates. `left`/`right` carry the
/// normal momentum flux seen by each cell including the hydrostatic
/// reconstruction correction.
struct FaceFlux {
    mass: f64,
    left: f64,
    right: f64,
    tangential: f64,
}

#[derive(Clone, Copy)]
struct Side {
    h: f64,
    qn: f64,
    qt: f64,
    z: f64,
}

#[inline(always)]
fn face_flux(l: Side, r: Side, g: f64, eps: f64) -> FaceFlux {
    let pl = 0.5 * g * l.h * l.h;
    let pr = 0.5 * g * r.h * r.h;
    if l.h < eps && r.h < eps {
        return FaceFlux {
            mass: 0.0,
            left: pl,
            right: pr,
            tangential: 0.0,
        };
    }
    let (ul, vl) = if l.h >= eps {
        (l.qn / l.h, l.qt / l.h)
    } else {
        (0.0, 0.0)
    };
    let (ur, vr) = if r.h >= eps {
        (r.qn / r.h, r.qt / r.h)
    } else {
        (0.0, 0.0)
    };

    // hydrostatic reconstruction at the interface
    let zs = l.z.max(r.z);
    let hl = (l.h + l.z - zs).max(0.0);
    let hr = (r.h + r.z - zs).max(0.0);
    let ql = hl * ul;
    let qr = hr * ur;
    let pls = 0.5 * g * hl * hl;
    let prs = 0.5 * g * hr * hr;

    let a = (ul.abs() + (g * hl).sqrt()).max(ur.abs() + (g * hr).sqrt());
    let mass = 0.5 * (ql + qr) - 0.5 * a * (hr - hl);
    let normal = 0.5 * ((ql * ul + pls) + (qr * ur + prs)) - 0.5 * a * (qr - ql);
    let tangential = 0.5 * (ql * vl + qr * vr) - 0.5 * a * (hr * vr - hl * vl);
    FaceFlux {
        mass,
        left: (normal - pls) + pl,
        right: (normal - prs) + pr,
        tangential,
    }
}

/// Reusable scratch space for repeated steps over one grid.
pub(crate) struct Stepper<'a> {
    grid: &'a StructuredGrid,
    bc: &'a BoundaryConditions,
    cfg: SolverConfig,
    /// `g / K^2` per cell.
    friction: Vec<f64>,
    dh: Vec<f64>,
    dqx: Vec<f64>,
    dqy: Vec<f64>,
    is_inlet: Vec<bool>,
    is_outlet: Vec<bool>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(
        grid: &'a StructuredGrid,
        bc: &'a BoundaryConditions,
        friction: &FrictionField,
        cfg: SolverConfig,
    ) -> Result<Self> {
        bc.validate(grid)?;
        let k = friction.per_cell(grid)?;
        let n = grid.len();
        let mut is_inlet = vec![false; grid.ny()];
        for &j in &bc.inlet_rows {
            is_inlet[j] = true;
        }
        let mut is_outlet = vec![false; grid.ny()];
        for &j in &bc.outlet_rows {
            is_outlet[j] = true;
        }
        Ok(Self {
            grid,
            bc,
            cfg,
            friction: k.iter().map(|k| cfg.gravity / (k * k)).collect(),
            dh: vec![0.0; n],
            dqx: vec![0.0; n],
            dqy: vec![0.0; n],
            is_inlet,
            is_outlet,
        })
    }

    pub(crate) fn advance(&mut self, s: &mut HydraulicState, dt: f64) -> Result<BoundaryFlux> {
        let grid = self.grid;
        let (nx, ny) = (grid.nx(), grid.ny());
        let (dx, dy) = (grid.dx(), grid.dy());
        let (idx, idy) = (1.0 / dx, 1.0 / dy);
        let g = self.cfg.gravity;
        let eps = self.cfg.dry_eps;
        let z = grid.z();
        self.dh.fill(0.0);
        self.dqx.fill(0.0);
        self.dqy.fill(0.0);
        let mut flux = BoundaryFlux::default();

        let xside = |s: &HydraulicState, c: usize| Side {
            h: s.h[c],
            qn: s.qx[c],
            qt: s.qy[c],
            z: z[c],
        };
        let yside = |s: &HydraulicState, c: usize| Side {
            h: s.h[c],
            qn: s.qy[c],
            qt: s.qx[c],
            z: z[c],
        };

        // Inflow: scaled discharge averaged over the step, spread evenly as
        // unit discharge over the inlet faces.
        let q_in = if self.bc.inlet_rows.is_empty() {
            0.0
        } else {
            self.bc.inflow_at(s.t + 0.5 * dt) / (self.bc.inlet_rows.len() as f64 * dy)
        };
        let q_out: f64 = self
            .bc
            .outlet_rows
            .iter()
            .map(|&j| s.qx[grid.index(nx - 1, j)] * dy)
            .sum();
        let stage = self.bc.outlet.stage(q_out);

        // x-direction faces
        for j in 0..ny {
            let row = j * nx;
            // west edge
            let c = row;
            if self.is_inlet[j] {
                let h = s.h[c];
                let mom = if h >= eps { q_in * q_in / h } else { 0.0 } + 0.5 * g * h * h;
                self.dh[c] += q_in * idx;
                self.dqx[c] += mom * idx;
                flux.inflow += q_in * dy * dt;
            } else {
                let inner = xside(s, c);
                let ghost = Side { qn: -inner.qn, ..inner };
                let f = face_flux(ghost, inner, g, eps);
                self.dh[c] += f.mass * idx;
                self.dqx[c] += f.right * idx;
                self.dqy[c] += f.tangential * idx;
            }
            for i in 1..nx {
                let (cl, cr) = (row + i - 1, row + i);
                let f = face_flux(xside(s, cl), xside(s, cr), g, eps);
                self.dh[cl] -= f.mass * idx;
                self.dh[cr] += f.mass * idx;
                self.dqx[cl] -= f.left * idx;
                self.dqx[cr] += f.right * idx;
                self.dqy[cl] -= f.tangential * idx;
                self.dqy[cr] += f.tangential * idx;
            }
            // east edge
            let c = row + nx - 1;
            let inner = xside(s, c);
            let ghost = if self.is_outlet[j] {
                let hg = (stage - z[c]).max(0.0);
                let (u, v) = if inner.h >= eps {
                    (inner.qn / inner.h, inner.qt / inner.h)
                } else {
                    (0.0, 0.0)
                };
                Side {
                    h: hg,
                    qn: hg * u,
                    qt: hg * v,
                    z: z[c],
                }
            } else {
                Side { qn: -inner.qn, ..inner }
            };
            let f = face_flux(inner, ghost, g, eps);
            self.dh[c] -= f.mass * idx;
            self.dqx[c] -= f.left * idx;
            self.dqy[c] -= f.tangential * idx;
            if self.is_outlet[j] {
                flux.outflow += f.mass * dy * dt;
            }
        }

        // y-direction faces; south and north edges are walls
        for i in 0..nx {
            let c = i;
            let inner = yside(s, c);
            let f = face_flux(Side { qn: -inner.qn, ..inner }, inner, g, eps);
            self.dh[c] += f.mass * idy;
            self.dqy[c] += f.right * idy;
            self.dqx[c] += f.tangential * idy;
        }
        for j in 1..ny {
            for i in 0..nx {
                let (cl, cr) = ((j - 1) * nx + i, j * nx + i);
                let f = face_flux(yside(s, cl), yside(s, cr), g, eps);
                self.dh[cl] -= f.mass * idy;
                self.dh[cr] += f.mass * idy;
                self.dqy[cl] -= f.left * idy;
                self.dqy[cr] += f.right * idy;
                self.dqx[cl] -= f.tangential * idy;
                self.dqx[cr] += f.tangential * idy;
            }
        }
        for i in 0..nx {
            let c = (ny - 1) * nx + i;
            let inner = yside(s, c);
            let f = face_flux(inner, Side { qn: -inner.qn, ..inner }, g, eps);
            self.dh[c] -= f.mass * idy;
            self.dqy[c] -= f.left * idy;
            self.dqx[c] -= f.tangential * idy;
        }

        // conservative update, then semi-implicit friction
        let mut check = 0.0f64;
        for c in 0..grid.len() {
            let h = (s.h[c] + dt * self.dh[c]).max(0.0);
            let mut qx = s.qx[c] + dt * self.dqx[c];
            let mut qy = s.qy[c] + dt * self.dqy[c];
            if h < eps {
                qx = 0.0;
                qy = 0.0;
            } else if qx != 0.0 || qy != 0.0 {
                let speed = (qx * qx + qy * qy).sqrt() / h;
                let denom = 1.0 + dt * self.friction[c] * speed / (h * h.cbrt());
                qx /= denom;
                qy /= denom;
            }
            s.h[c] = h;
            s.qx[c] = qx;
            s.qy[c] = qy;
            check += h + qx + qy;
        }
        if !check.is_finite() {
            return Err(self.locate_instability(s));
        }
        Ok(flux)
    }

    fn locate_instability(&self, s: &HydraulicState) -> Error {
        let c = (0..self.grid.len())
            .find(|&c| !(s.h[c].is_finite() && s.qx[c].is_finite() && s.qy[c].is_finite()))
            .unwrap_or(0);
        let (i, j) = self.grid.coords(c);
        Error::Instability {
            time: s.t,
            i,
            j,
            detail: format!("h={} qx={} qy={}", s.h[c], s.qx[c], s.qy[c]),
        }
    }
}

/// One explicit first-order step of length `dt` (which must not exceed
/// [`stable_dt`] for this state).
pub fn swe_step(
    grid: &StructuredGrid,
    state: &HydraulicState,
    bc: &BoundaryConditions,
    friction: &FrictionField,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<HydraulicState> {
    state.validate(grid)?;
    let mut stepper = Stepper::new(grid, bc, friction, *cfg)?;
    let mut next = state.clone();
    stepper.advance(&mut next, dt)?;
    next.t = state.t + dt;
    Ok(next)
}

/// Snapshots at requested times plus boundary volume totals.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<HydraulicState>,
    pub final_state: HydraulicState,
    pub inflow_volume: f64,
    pub outflow_volume: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn at(&self, t: f64) -> Option<&HydraulicState> {
        self.times.iter().position(|&x| x == t).map(|k| &self.snapshots[k])
    }
}

/// Runs from `state0` to `t_end`. Steps are CFL-limited and clipped so they
/// land exactly on every hydrograph sample time. A snapshot time falling
/// inside a step is served by a separate partial step from the step's start
/// state, so the main step sequence never depends on `output_times`.
pub fn simulate(
    grid: &StructuredGrid,
    state0: &HydraulicState,
    bc: &BoundaryConditions,
    friction: &FrictionField,
    t_end: f64,
    output_times: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    state0.validate(grid)?;
    let t0 = state0.t;
    if !(t_end >= t0) {
        return Err(Error::Domain(format!("t_end {t_end} precedes start {t0}")));
    }
    if output_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("output times must be sorted".into()));
    }
    if let Some(&t) = output_times.iter().find(|&&t| t < t0 || t > t_end) {
        return Err(Error::Domain(format!("output time {t} outside [{t0}, {t_end}]")));
    }
    let mut stepper = Stepper::new(grid, bc, friction, *cfg)?;
    let mut state = state0.clone();
    let mut snapshots = Vec::with_capacity(output_times.len());
    let mut next_out = 0;
    let (mut vin, mut vout) = (0.0, 0.0);
    let mut steps = 0;

    while next_out < output_times.len() && output_times[next_out] <= state.t {
        snapshots.push(state.clone());
        next_out += 1;
    }
    while state.t < t_end {
        let t = state.t;
        let t_sync = bc.inflow.next_knot_after(t).map_or(t_end, |k| k.min(t_end));
        let dt_cfl = stable_dt(grid, &state, cfg.cfl, cfg);
        let (dt, t_new) = if t + dt_cfl >= t_sync {
            (t_sync - t, t_sync)
        } else {
            (dt_cfl, t + dt_cfl)
        };
        while next_out < output_times.len() && output_times[next_out] < t_new {
            let t_out = output_times[next_out];
            let mut partial = state.clone();
            stepper.advance(&mut partial, t_out - t)?;
            partial.t = t_out;
            snapshots.push(partial);
            next_out += 1;
        }
        let f = stepper.advance(&mut state, dt)?;
        state.t = t_new;
        vin += f.inflow;
        vout += f.outflow;
        steps += 1;
        while next_out < output_times.len() && output_times[next_out] <= state.t {
            snapshots.push(state.clone());
            next_out += 1;
        }
    }
    Ok(Trajectory {
        times: output_times.to_vec(),
        snapshots,
        final_state: state,
        inflow_volume: vin,
        outflow_volume: vout,
        steps,
    })
}
