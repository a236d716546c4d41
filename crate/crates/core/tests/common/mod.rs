//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use floodchain::enkf::enkf_analysis;
use floodchain::hydraulics::{
    simulate, stable_dt, swe_step, BoundaryConditions, FrictionField, HydraulicState, Hydrograph, OutletCondition,
    SolverConfig, StructuredGrid,
};
use floodchain::routing::{
    muskingum_coefficients, LateralInflowSeries, MuskingumParams, Reach, ReachSeries, RiverNetwork,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, StandardNormal, Uniform};
use statrs::distribution::{ContinuousCDF, Normal};

pub fn closed_bc() -> BoundaryConditions {
    BoundaryConditions {
        inflow: Hydrograph::constant(0.0, 0.0, 1.0).unwrap(),
        inflow_scale: 1.0,
        inlet_rows: vec![],
        outlet: OutletCondition::FixedStage(0.0),
        outlet_rows: vec![],
    }
}

pub fn step_n(
    grid: &StructuredGrid,
    mut s: HydraulicState,
    bc: &BoundaryConditions,
    fr: &FrictionField,
    cfg: &SolverConfig,
    n: usize,
) -> HydraulicState {
    for _ in 0..n {
        let dt = stable_dt(grid, &s, cfg.cfl, cfg);
        s = swe_step(grid, &s, bc, fr, dt, cfg).unwrap();
    }
    s
}

/// Bed elevations in [5, 10) on a 1/64 lattice: `10 - z` is exact in binary
/// floating point, so `h + z` reproduces the free surface bit for bit.
pub fn uneven_bed(nx: usize, ny: usize, seed: u64) -> StructuredGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..nx * ny)
        .map(|_| 5.0 + rng.random_range(0..320) as f64 / 64.0)
        .collect();
    StructuredGrid::new(nx, ny, 10.0, 7.5, z, vec![0; nx * ny], vec![None; nx * ny]).unwrap()
}

pub fn dam_break(grid: &StructuredGrid, center: (f64, f64), radius: f64) -> HydraulicState {
    let mut s = HydraulicState::dry(grid, 0.0);
    for c in 0..grid.len() {
        let (i, j) = grid.coords(c);
        let x = (i as f64 + 0.5) * grid.dx() - center.0;
        let y = (j as f64 + 0.5) * grid.dy() - center.1;
        s.h[c] = if (x * x + y * y).sqrt() < radius { 2.0 } else { 0.5 };
    }
    s
}

/// Straight sloping channel, one cell wide, unit inflow and a Manning rating
/// curve at the outlet.
pub fn manning_channel(k: f64) -> (StructuredGrid, BoundaryConditions, FrictionField) {
    let (nx, dx, slope) = (150, 20.0, 0.001);
    let z: Vec<f64> = (0..nx).map(|i| 10.0 - slope * dx * (i as f64 + 0.5)).collect();
    let grid = StructuredGrid::new(nx, 1, dx, 1.0, z, vec![0; nx], vec![None; nx]).unwrap();
    let a = (k * slope.sqrt()).powf(-0.6);
    let bc = BoundaryConditions {
        inflow: Hydrograph::constant(1.0, 0.0, 1.0e6).unwrap(),
        inflow_scale: 1.0,
        inlet_rows: vec![0],
        outlet: OutletCondition::RatingCurve {
            a,
            b: 0.6,
            z0: grid.z()[nx - 1],
        },
        outlet_rows: vec![0],
    };
    (grid, bc, FrictionField::uniform(k))
}

pub fn steady_depth(k: f64) -> f64 {
    let cfg = SolverConfig::default();
    let (grid, bc, fr) = manning_channel(k);
    let mut s0 = HydraulicState::dry(&grid, 0.0);
    s0.h.fill(1.3);
    let traj = simulate(&grid, &s0, &bc, &fr, 20_000.0, &[], &cfg).unwrap();
    let h = &traj.final_state.h;
    // mean over the middle third, away from both boundaries
    h[50..100].iter().sum::<f64>() / 50.0
}

/// Random forest of `n` reaches listed in shuffled order, with per-reach
/// parameters satisfying `2kx <= dt <= 2k(1-x)`.
pub fn random_case(n: usize, steps: usize, seed: u64) -> (RiverNetwork, MuskingumParams, LateralInflowSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut downstream = vec![None; n];
    for pos in 1..n {
        if rng.random_bool(0.9) {
            downstream[order[pos]] = Some(order[rng.random_range(0..pos)]);
        }
    }
    let reaches = (0..n)
        .map(|i| Reach {
            id: format!("r{i}"),
            downstream: downstream[i].map(|d| format!("r{d}")),
        })
        .collect();
    let network = RiverNetwork::new(reaches).unwrap();
    let dt = 3600.0;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.4)).collect();
    let k: Vec<f64> = x
        .iter()
        .map(|&x| {
            let lo = dt / (2.0 * (1.0 - x));
            let hi = if x > 0.0 {
                (dt / (2.0 * x)).min(4.0 * dt)
            } else {
                4.0 * dt
            };
            rng.random_range(lo..hi)
        })
        .collect();
    let inflow = LateralInflowSeries {
        times: (0..steps).map(|t| t as f64 * dt).collect(),
        values: (0..steps)
            .map(|_| (0..n).map(|_| rng.random_range(0.0..50.0)).collect())
            .collect(),
    };
    (network, MuskingumParams { k, x }, inflow)
}

/// Reach-by-reach scalar recursion `O' = C1 I' + C2 I + C3 O`, resolving
/// upstream reaches recursively from the raw downstream links.
pub fn scalar_oracle(
    network: &RiverNetwork,
    params: &MuskingumParams,
    inflow: &LateralInflowSeries,
    q0: &[f64],
) -> Vec<Vec<f64>> {
    let n = network.len();
    let ids: Vec<&str> = network.reaches().iter().map(|r| r.id.as_str()).collect();
    let parent: Vec<Option<usize>> = network
        .reaches()
        .iter()
        .map(|r| r.downstream.as_ref().map(|d| ids.iter().position(|i| i == d).unwrap()))
        .collect();
    let upstream: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| parent[j] == Some(i)).collect())
        .collect();
    let dt = inflow.times[1] - inflow.times[0];

    #[allow(clippy::too_many_arguments)]
    fn solve(
        i: usize,
        upstream: &[Vec<usize>],
        params: &MuskingumParams,
        dt: f64,
        prev: &[f64],
        qe_now: &[f64],
        qe_next: &[f64],
        out: &mut [Option<f64>],
    ) -> f64 {
        if let Some(v) = out[i] {
            return v;
        }
        let mut inflow_next = 0.0;
        for &j in &upstream[i] {
            inflow_next += solve(j, upstream, params, dt, prev, qe_now, qe_next, out);
        }
        inflow_next += qe_next[i];
        let inflow_now = upstream[i].iter().map(|&j| prev[j]).sum::<f64>() + qe_now[i];
        let c = muskingum_coefficients(params.k[i], params.x[i], dt).unwrap();
        let v = c.c1 * inflow_next + c.c2 * inflow_now + c.c3 * prev[i];
        out[i] = Some(v);
        v
    }

    let mut rows = vec![q0.to_vec()];
    for t in 1..inflow.len() {
        let mut out = vec![None; n];
        for i in 0..n {
            solve(
                i,
                &upstream,
                params,
                dt,
                &rows[t - 1],
                &inflow.values[t - 1],
                &inflow.values[t],
                &mut out,
            );
        }
        rows.push(out.into_iter().map(Option::unwrap).collect());
    }
    rows
}

/// Linear-Gaussian toy problem with a closed-form Kalman analysis.
pub struct Toy {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub obs_op: DMatrix<f64>,
    pub obs_std: Vec<f64>,
    pub y: Vec<f64>,
}

impl Toy {
    pub fn new() -> Self {
        Self {
            mean: DVector::from_vec(vec![1.0, -0.5, 2.0]),
            cov: DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 0.8, -0.2, 0.1, -0.2, 1.5]),
            obs_op: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, -1.0]),
            obs_std: vec![0.5, 0.8],
            y: vec![1.7, -1.2],
        }
    }

    pub fn kalman(&self) -> (DVector<f64>, DMatrix<f64>) {
        let h = &self.obs_op;
        let r = DMatrix::from_diagonal(&DVector::from_iterator(2, self.obs_std.iter().map(|s| s * s)));
        let s = h * &self.cov * h.transpose() + r;
        let k = &self.cov * h.transpose() * s.try_inverse().unwrap();
        let innov = DVector::from_vec(self.y.clone()) - h * &self.mean;
        let mean = &self.mean + &k * innov;
        let cov = (DMatrix::identity(3, 3) - &k * h) * &self.cov;
        (mean, cov)
    }

    pub fn ensemble(&self, m: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let l = self.cov.clone().cholesky().unwrap().l();
        let xs: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let z = DVector::from_iterator(3, (0..3).map(|_| StandardNormal.sample(&mut *rng)));
                (&self.mean + &l * z).iter().copied().collect()
            })
            .collect();
        let ys = xs
            .iter()
            .map(|x| (&self.obs_op * DVector::from_vec(x.clone())).iter().copied().collect())
            .collect();
        (xs, ys)
    }

    pub fn enkf_mean_var(&self, m: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (xs, ys) = self.ensemble(m, &mut rng);
        let a = enkf_analysis(&xs, &ys, &self.y, &self.obs_std, &mut rng).unwrap();
        let mean: Vec<f64> = (0..3)
            .map(|i| a.ensemble.iter().map(|x| x[i]).sum::<f64>() / m as f64)
            .collect();
        let var = (0..3)
            .map(|i| a.ensemble.iter().map(|x| (x[i] - mean[i]).powi(2)).sum::<f64>() / (m as f64 - 1.0))
            .collect();
        (mean, var)
    }
}

/// One-sample Kolmogorov-Smirnov statistic against N(0, 1).
pub fn ks_statistic(values: &[f64]) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = n.cdf(x);
            ((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

pub type Sampler = Box<dyn Fn(&mut ChaCha8Rng) -> f64>;

/// The three source distributions of the anamorphosis checks.
pub fn samplers() -> Vec<(&'static str, Sampler)> {
    let u = Uniform::new(0.0, 1.0).unwrap();
    let b = Beta::new(0.5, 0.5).unwrap();
    let l = LogNormal::new(0.0, 1.0).unwrap();
    vec![
        ("uniform", Box::new(move |r: &mut ChaCha8Rng| u.sample(r))),
        ("beta(0.5,0.5)", Box::new(move |r: &mut ChaCha8Rng| b.sample(r))),
        ("lognormal", Box::new(move |r: &mut ChaCha8Rng| l.sample(r))),
    ]
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(m: usize) -> f64 {
    1.628 / (m as f64).sqrt()
}

/// Storage-based mass balance of a routed series: change in Muskingum
/// storage minus net inflow, and the total lateral inflow volume.
pub fn routing_imbalance(
    net: &RiverNetwork,
    params: &MuskingumParams,
    inflow: &LateralInflowSeries,
    q: &ReachSeries,
) -> (f64, f64) {
    let n = net.len();
    let dt = inflow.times[1] - inflow.times[0];
    let outlets = net.outlets();
    let storage = |t: usize| -> f64 {
        (0..n)
            .map(|i| {
                let inflow_i = net.upstream_of(i).iter().map(|&j| q.values[t][j]).sum::<f64>() + inflow.values[t][i];
                params.k[i] * (params.x[i] * inflow_i + (1.0 - params.x[i]) * q.values[t][i])
            })
            .sum()
    };
    let mut v_in = 0.0;
    let mut v_out = 0.0;
    for t in 1..inflow.len() {
        v_in += 0.5 * dt * (inflow.values[t - 1].iter().sum::<f64>() + inflow.values[t].iter().sum::<f64>());
        v_out += 0.5
            * dt
            * outlets
                .iter()
                .map(|&o| q.values[t - 1][o] + q.values[t][o])
                .sum::<f64>();
    }
    ((storage(inflow.len() - 1) - storage(0)) - (v_in - v_out), v_in)
}
