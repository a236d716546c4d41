use floodchain::hydraulics::{
    apply_state_correction, simulate, stable_dt, swe_step, FrictionField, HydraulicState, Hydrograph, SolverConfig,
    StructuredGrid,
};
use floodchain::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

#[test]
fn stable_dt_examples() {
    let cfg = SolverConfig::default();
    let grid = StructuredGrid::flat(8, 8, 10.0, 10.0, 0.0).unwrap();
    assert_eq!(
        stable_dt(&grid, &HydraulicState::dry(&grid, 0.0), 0.9, &cfg),
        cfg.dt_max
    );

    let still = HydraulicState::lake_at_rest(&grid, 1.0, 0.0);
    let dt = stable_dt(&grid, &still, 0.9, &cfg);
    assert!((dt - 0.9 * 10.0 / 9.81f64.sqrt()).abs() < 1e-12);
    assert!((dt - 2.873).abs() < 1e-3);

    let fine = StructuredGrid::flat(8, 8, 5.0, 5.0, 0.0).unwrap();
    let dt_fine = stable_dt(&fine, &HydraulicState::lake_at_rest(&fine, 1.0, 0.0), 0.9, &cfg);
    assert!((dt_fine - 0.5 * dt).abs() < 1e-12);
}

#[test]
fn lake_at_rest_is_bit_exact() {
    let cfg = SolverConfig::default();
    let grid = uneven_bed(24, 16, 7);
    let fr = FrictionField::uniform(30.0);
    let s0 = HydraulicState::lake_at_rest(&grid, 10.0, 0.0);
    let s = step_n(&grid, s0.clone(), &closed_bc(), &fr, &cfg, 2000);
    assert_eq!(s.h, s0.h);
    assert!(s.qx.iter().chain(&s.qy).all(|&q| q == 0.0));
}

#[test]
fn lake_at_rest_with_dry_islands() {
    let cfg = SolverConfig::default();
    let mut grid = uneven_bed(20, 20, 11);
    // raise a block above the free surface
    let mut z = grid.z().to_vec();
    for j in 5..9 {
        for i in 6..12 {
            z[j * 20 + i] = 10.5;
        }
    }
    grid = StructuredGrid::new(20, 20, 10.0, 7.5, z, vec![0; 400], vec![None; 400]).unwrap();
    let s0 = HydraulicState::lake_at_rest(&grid, 10.0, 0.0);
    let s = step_n(
        &grid,
        s0.clone(),
        &closed_bc(),
        &FrictionField::uniform(25.0),
        &cfg,
        1000,
    );
    assert_eq!(s.h, s0.h);
    assert!(s.qx.iter().chain(&s.qy).all(|&q| q == 0.0));
}

#[test]
fn lake_at_rest_on_arbitrary_bed_to_machine_precision() {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..1.5)).collect();
    let grid = StructuredGrid::new(20, 15, 12.3, 9.1, z, vec![0; 300], vec![None; 300]).unwrap();
    let s0 = HydraulicState::lake_at_rest(&grid, 1.0, 0.0);
    let s = step_n(
        &grid,
        s0.clone(),
        &closed_bc(),
        &FrictionField::uniform(30.0),
        &cfg,
        1000,
    );
    for c in 0..grid.len() {
        assert!((s.h[c] - s0.h[c]).abs() < 1e-12, "cell {c}");
        assert!(s.qx[c].abs() < 1e-11 && s.qy[c].abs() < 1e-11);
    }
}

#[test]
fn closed_domain_conserves_mass() {
    let cfg = SolverConfig::default();
    let grid = uneven_bed(30, 20, 5);
    let mut s0 = dam_break(&grid, (100.0, 60.0), 50.0);
    // partially dry start to exercise wetting fronts
    for c in 0..grid.len() {
        if grid.z()[c] > 8.5 {
            s0.h[c] = 0.0;
        }
    }
    let v0 = s0.volume(&grid);
    let s = step_n(&grid, s0, &closed_bc(), &FrictionField::uniform(30.0), &cfg, 1000);
    assert!(((s.volume(&grid) - v0) / v0).abs() <= 1e-8);
    assert!(s.h.iter().all(|&h| h >= 0.0));
}

#[test]
fn symmetric_dam_break_stays_symmetric() {
    let cfg = SolverConfig::default();
    let (nx, ny) = (31, 31);
    let grid = StructuredGrid::flat(nx, ny, 5.0, 5.0, 0.0).unwrap();
    let s0 = dam_break(&grid, (77.5, 77.5), 30.0);
    let s = step_n(&grid, s0, &closed_bc(), &FrictionField::uniform(30.0), &cfg, 200);
    for j in 0..ny {
        for i in 0..nx {
            let c = grid.index(i, j);
            let mx = grid.index(nx - 1 - i, j);
            let my = grid.index(i, ny - 1 - j);
            let tr = grid.index(j, i);
            assert!((s.h[c] - s.h[mx]).abs() < 1e-12);
            assert!((s.h[c] - s.h[my]).abs() < 1e-12);
            assert!((s.h[c] - s.h[tr]).abs() < 1e-12);
            assert!((s.qx[c] + s.qx[mx]).abs() < 1e-12);
            assert!((s.qy[c] + s.qy[my]).abs() < 1e-12);
            assert!((s.qx[c] - s.qy[tr]).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_flow_reaches_manning_normal_depth() {
    let expected = (1.0 / (33.33 * 0.001f64.sqrt())).powf(0.6);
    assert!((expected - 0.969).abs() < 1e-3);
    let h = steady_depth(33.33);
    assert!(((h - expected) / expected).abs() < 0.02, "h={h} expected={expected}");
}

#[test]
fn smoother_bed_gives_shallower_flow() {
    assert!(steady_depth(45.0) < steady_depth(25.0));
}

#[test]
fn empty_horizon_returns_initial_state() {
    let cfg = SolverConfig::default();
    let (grid, bc, fr) = manning_channel(30.0);
    let s0 = HydraulicState::lake_at_rest(&grid, 10.0, 100.0);
    let traj = simulate(&grid, &s0, &bc, &fr, 100.0, &[100.0], &cfg).unwrap();
    assert_eq!(traj.snapshots, vec![s0.clone()]);
    assert_eq!(traj.final_state, s0);
    assert_eq!(traj.steps, 0);
}

#[test]
fn snapshot_density_does_not_perturb_shared_times() {
    let cfg = SolverConfig::default();
    let (grid, mut bc, fr) = manning_channel(30.0);
    bc.inflow = Hydrograph::new(vec![0.0, 600.0, 1200.0, 3000.0], vec![0.5, 2.0, 1.0, 0.8]).unwrap();
    let mut s0 = HydraulicState::dry(&grid, 0.0);
    s0.h.fill(1.0);
    let coarse: Vec<f64> = (1..=6).map(|k| k as f64 * 500.0).collect();
    let fine: Vec<f64> = (1..=24).map(|k| k as f64 * 125.0).collect();
    let a = simulate(&grid, &s0, &bc, &fr, 3000.0, &coarse, &cfg).unwrap();
    let b = simulate(&grid, &s0, &bc, &fr, 3000.0, &fine, &cfg).unwrap();
    for (k, &t) in coarse.iter().enumerate() {
        let sb = b.at(t).unwrap();
        assert_eq!(sb.t, t);
        for c in 0..grid.len() {
            assert!((a.snapshots[k].h[c] - sb.h[c]).abs() <= 1e-12);
            assert!((a.snapshots[k].qx[c] - sb.qx[c]).abs() <= 1e-12);
        }
    }
    assert_eq!(a.final_state, b.final_state);
}

#[test]
fn open_domain_volume_balance_and_steady_outflow() {
    let cfg = SolverConfig::default();
    let (grid, bc, fr) = manning_channel(33.33);
    let mut s0 = HydraulicState::dry(&grid, 0.0);
    s0.h.fill(0.5);
    let v0 = s0.volume(&grid);
    let traj = simulate(&grid, &s0, &bc, &fr, 30_000.0, &[], &cfg).unwrap();
    let v1 = traj.final_state.volume(&grid);
    let budget = traj.inflow_volume - traj.outflow_volume;
    assert!(((v1 - v0) - budget).abs() <= 1e-6 * traj.inflow_volume);
    assert!((traj.inflow_volume - 30_000.0).abs() < 1e-6);
    // steady state: outlet discharge equals inflow within 1 %
    let tail = simulate(&grid, &traj.final_state, &bc, &fr, 31_000.0, &[], &cfg).unwrap();
    let q_out = tail.outflow_volume / 1000.0;
    assert!((q_out - 1.0).abs() < 0.01, "q_out={q_out}");
}

#[test]
fn inflow_scale_halves_boundary_volume() {
    let cfg = SolverConfig::default();
    let (grid, mut bc, fr) = manning_channel(30.0);
    bc.inflow = Hydrograph::new(vec![0.0, 900.0, 1800.0], vec![1.0, 3.0, 2.0]).unwrap();
    let mut s0 = HydraulicState::dry(&grid, 0.0);
    s0.h.fill(1.0);
    let full = simulate(&grid, &s0, &bc, &fr, 1800.0, &[], &cfg).unwrap();
    bc.inflow_scale = 0.5;
    let half = simulate(&grid, &s0, &bc, &fr, 1800.0, &[], &cfg).unwrap();
    let exact = bc.inflow.volume(0.0, 1800.0);
    assert!((full.inflow_volume - exact).abs() < 1e-9 * exact);
    assert!((half.inflow_volume - 0.5 * exact).abs() < 1e-9 * exact);
}

#[test]
fn instability_is_reported_with_location() {
    let cfg = SolverConfig::default();
    let grid = StructuredGrid::flat(4, 4, 1.0, 1.0, 0.0).unwrap();
    let mut s = HydraulicState::lake_at_rest(&grid, 1.0, 5.0);
    s.qx[5] = 1e300;
    match swe_step(&grid, &s, &closed_bc(), &FrictionField::uniform(30.0), 0.1, &cfg) {
        Err(Error::Instability { time, .. }) => assert_eq!(time, 5.0),
        other => panic!("expected instability, got {other:?}"),
    }
}

fn labelled_grid() -> StructuredGrid {
    let (nx, ny) = (6, 4);
    let sub = (0..nx * ny)
        .map(|c| match c % nx {
            0 | 1 => Some(1),
            4 | 5 => Some(2),
            _ => None,
        })
        .collect();
    StructuredGrid::new(nx, ny, 10.0, 20.0, vec![0.0; nx * ny], vec![0; nx * ny], sub).unwrap()
}

#[test]
fn state_correction_examples() {
    let grid = labelled_grid();
    let mut s = HydraulicState::dry(&grid, 0.0);
    for c in 0..grid.len() {
        s.h[c] = (c % 3) as f64;
        s.qx[c] = 0.1;
    }
    let same = apply_state_correction(&s, &grid, &[(1, 0.0), (2, 0.0)], 1e-4).unwrap();
    assert_eq!(same, s);

    let dried = apply_state_correction(&s, &grid, &[(1, -10.0)], 1e-4).unwrap();
    for &c in grid.subdomain_cells(1).unwrap() {
        assert_eq!((dried.h[c], dried.qx[c]), (0.0, 0.0));
    }
    for c in grid.subdomain_cells(2).unwrap() {
        assert_eq!(dried.h[*c], s.h[*c]);
    }

    let raised = apply_state_correction(&s, &grid, &[(2, 0.5)], 1e-4).unwrap();
    let n2 = grid.subdomain_cells(2).unwrap().len() as f64;
    let dv = raised.volume(&grid) - s.volume(&grid);
    assert!((dv - 0.5 * n2 * grid.cell_area()).abs() < 1e-9);

    assert!(matches!(
        apply_state_correction(&s, &grid, &[(9, 0.1)], 1e-4),
        Err(Error::UnknownSubdomain(9))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn depth_stays_non_negative(seed in 0u64..10_000, steps in 1usize..60) {
        let cfg = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = uneven_bed(12, 9, seed);
        let mut s = HydraulicState::dry(&grid, 0.0);
        for c in 0..grid.len() {
            if rng.random_bool(0.6) {
                s.h[c] = rng.random_range(0.0..3.0);
                s.qx[c] = rng.random_range(-1.0..1.0) * s.h[c];
                s.qy[c] = rng.random_range(-1.0..1.0) * s.h[c];
            }
        }
        let s = step_n(&grid, s, &closed_bc(), &FrictionField::uniform(20.0), &cfg, steps);
        prop_assert!(s.h.iter().all(|&h| h >= 0.0 && h.is_finite()));
    }
}

#[test]
fn grid_state_and_hydrograph_files_round_trip() {
    use floodchain::hydraulics::io;
    let dir = tempfile::tempdir().unwrap();
    let grid = labelled_grid();
    io::write_grid(&dir.path().join("g.csv"), &grid).unwrap();
    assert_eq!(io::read_grid(&dir.path().join("g.csv")).unwrap(), grid);

    let mut s = HydraulicState::lake_at_rest(&grid, 0.3, 12.5);
    s.qx[3] = 0.123456789;
    io::write_state(&dir.path().join("s.csv"), &grid, &s).unwrap();
    assert_eq!(io::read_state(&dir.path().join("s.csv"), &grid).unwrap(), s);

    let hg = Hydrograph::new(vec![0.0, 900.0], vec![120.5, 333.25]).unwrap();
    io::write_hydrograph(&dir.path().join("q.csv"), &hg).unwrap();
    assert_eq!(io::read_hydrograph(&dir.path().join("q.csv")).unwrap(), hg);
}
