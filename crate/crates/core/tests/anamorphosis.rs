use floodchain::anamorphosis::{write_knots, AnamorphosisMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

#[test]
fn transformed_samples_pass_ks() {
    let m = 200;
    for (k, (name, draw)) in samplers().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let samples: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let map = AnamorphosisMap::fit(&samples).unwrap();
        let scores: Vec<f64> = samples.iter().map(|&x| map.forward(x)).collect();
        let d = ks_statistic(&scores);
        assert!(d < ks_critical_1pct(m), "{name}: D = {d}");

        // Fresh draws through the same map; the critical value widens to
        // the two-sample one since the map itself is estimated.
        let fresh: Vec<f64> = (0..m).map(|_| map.forward(draw(&mut rng))).collect();
        let d = ks_statistic(&fresh);
        assert!(d < ks_critical_1pct(m) * 2f64.sqrt(), "{name} out of sample: D = {d}");
    }
}

#[test]
fn round_trip_at_sample_points() {
    for (k, (_, draw)) in samplers().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7 + k as u64);
        let samples: Vec<f64> = (0..200).map(|_| draw(&mut rng)).collect();
        let map = AnamorphosisMap::fit(&samples).unwrap();
        for &x in &samples {
            assert!((map.inverse(map.forward(x)) - x).abs() <= 1e-12);
        }
    }
}

#[test]
fn knot_dump_lists_every_knot() {
    let dir = tempfile::tempdir().unwrap();
    let map = AnamorphosisMap::fit(&[0.0, 0.0, 0.2, 0.7, 1.0]).unwrap();
    let path = dir.path().join("knots.csv");
    write_knots(&path, &[("sub1".to_string(), &map)]).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 1 + map.knot_values().len());
    assert!(text.starts_with("label,knot,value,score\nsub1,0,0,"));
}

fn samples_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..1.0f64], 2..60)
}

proptest! {
    #[test]
    fn fit_ignores_input_order(mut s in samples_strategy(), seed in any::<u64>()) {
        let a = AnamorphosisMap::fit(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(s.as_mut_slice(), &mut rng);
        prop_assert_eq!(a, AnamorphosisMap::fit(&s).unwrap());
    }

    #[test]
    fn forward_and_inverse_are_monotone(s in samples_strategy(), a in -0.5..1.5f64, b in -0.5..1.5f64) {
        let map = AnamorphosisMap::fit(&s).unwrap().for_wsr();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(map.forward(lo) <= map.forward(hi));
        prop_assert!(map.inverse(lo * 8.0 - 4.0) <= map.inverse(hi * 8.0 - 4.0));
    }

    #[test]
    fn ranks_preserved_and_round_trip(s in samples_strategy()) {
        let map = AnamorphosisMap::fit(&s).unwrap();
        for x in &s {
            for y in &s {
                if x < y && !map.is_degenerate() {
                    prop_assert!(map.forward(*x) < map.forward(*y));
                }
            }
            if !map.is_degenerate() {
                prop_assert!((map.inverse(map.forward(*x)) - x).abs() <= 1e-12);
            }
        }
        let scores = map.knot_scores();
        prop_assert!(scores.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn round_trip_inside_sample_range(s in samples_strategy(), t in 0.0..1.0f64) {
        let map = AnamorphosisMap::fit(&s).unwrap();
        let v = map.knot_values();
        if v.len() >= 2 {
            let x = v[0] + t * (v[v.len() - 1] - v[0]);
            prop_assert!((map.inverse(map.forward(x)) - x).abs() <= 1e-12);
        }
    }
}
