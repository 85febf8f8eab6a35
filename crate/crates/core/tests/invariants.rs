//! Property tests of structural invariants.

use jmflow::action::{phi_free, straight_action, ActionOptions};
use jmflow::dynamics::flow_map;
use jmflow::harness::{read_numeric_csv, rehash, Scenario, Table};
use jmflow::horofunction::Lattice;
use jmflow::slice::box_counting_dimension;
use jmflow::{MassSystem, PhaseState};
use proptest::prelude::*;

fn three() -> MassSystem {
    MassSystem::new(vec![1.0, 2.0, 0.5], 2).unwrap()
}

fn config() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.5..1.5f64, 6)
}

fn separated(ms: &MassSystem, q: &[f64]) -> bool {
    ms.min_pair_distance(q).0 > 0.3
}

fn cheap() -> ActionOptions {
    ActionOptions {
        segments: 64,
        ..ActionOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_conserves_energy_and_is_reversible(
        q in config(), v in proptest::collection::vec(-1.0..1.0f64, 6), t in 0.1..2.0f64
    ) {
        let ms = three();
        prop_assume!(separated(&ms, &q));
        let s = PhaseState::new(&ms, q, v).unwrap();
        let e0 = s.energy(&ms).unwrap();
        let Ok(s1) = flow_map(&ms, &s, t) else { return Ok(()) };
        let e1 = s1.energy(&ms).unwrap();
        prop_assert!((e1 - e0).abs() <= 1e-8 * (1.0 + e0.abs()));
        let back = flow_map(&ms, &s1, -t).unwrap();
        for (a, b) in back.q.as_slice().iter().zip(s.q.as_slice()) {
            prop_assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn lattice_index_round_trip(hw in 0usize..4, idx in 0usize..10_000) {
        let ms = three();
        let lat = Lattice::reduced(&ms, vec![0.0; 6], 0.1, hw);
        let idx = idx % lat.len();
        let mi = lat.multi_index(idx);
        prop_assert_eq!(lat.flat_index(&mi), Some(idx));
        let p = lat.point(&mi);
        prop_assert!(ms.center_of_mass(&p).iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn box_dimension_is_translation_invariant(shift in proptest::collection::vec(-5.0..5.0f64, 2)) {
        let cloud: Vec<Vec<f64>> = (0..4096).map(|k| {
            let s = k as f64 / 4096.0;
            vec![s, 0.3 * s]
        }).collect();
        let moved: Vec<Vec<f64>> = cloud.iter().map(|p| vec![p[0] + shift[0], p[1] + shift[1]]).collect();
        let scales = [1.0 / 256.0, 1.0 / 128.0, 1.0 / 64.0, 1.0 / 32.0];
        let a = box_counting_dimension(&cloud, &scales).unwrap();
        let b = box_counting_dimension(&moved, &scales).unwrap();
        prop_assert_eq!(&a.counts, &b.counts);
        prop_assert!((a.slope - 1.0).abs() < 0.05);
        for w in a.counts.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn numeric_csv_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e6..1e6f64, 3), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(&["a", "b", "c"]);
        for r in &rows {
            t.push(r.iter().map(|x| jmflow::harness::num(*x)).collect());
        }
        t.save(&path).unwrap();
        let (header, back) = read_numeric_csv(&path).unwrap();
        prop_assert_eq!(header.unwrap(), vec!["a", "b", "c"]);
        prop_assert_eq!(back, rows);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // The potential is symmetric, bounded below by the Jacobi-Maupertuis
    // lower bound sqrt(2h)|x - y|, and above by the straight-line action.
    #[test]
    fn action_potential_bounds_and_symmetry(x in config(), y in config(), hk in 0usize..3) {
        let ms = three();
        prop_assume!(separated(&ms, &x) && separated(&ms, &y));
        let h = [0.0, 0.5, 2.0][hk];
        let xy = phi_free(&ms, h, &x, &y, &cheap()).unwrap();
        let yx = phi_free(&ms, h, &y, &x, &cheap()).unwrap();
        prop_assert!((xy.value - yx.value).abs() <= 1e-5 * (1.0 + xy.value));
        let d = ms.distance(&x, &y);
        prop_assert!(xy.value >= (2.0 * h).sqrt() * d - 1e-9);
        let straight = straight_action(&ms, &x, &y, xy.t_star, h, 256);
        prop_assert!(xy.value <= straight + 1e-6 * (1.0 + straight));
    }

    // At zero energy the potential is homogeneous of degree 1/2.
    #[test]
    fn zero_energy_potential_scales(x in config(), y in config(), lambda in 0.5..3.0f64) {
        let ms = three();
        prop_assume!(separated(&ms, &x) && separated(&ms, &y));
        let a = phi_free(&ms, 0.0, &x, &y, &cheap()).unwrap().value;
        let xs: Vec<f64> = x.iter().map(|c| c * lambda).collect();
        let ys: Vec<f64> = y.iter().map(|c| c * lambda).collect();
        let b = phi_free(&ms, 0.0, &xs, &ys, &cheap()).unwrap().value;
        prop_assert!((b - lambda.sqrt() * a).abs() <= 1e-4 * b);
    }
}

#[test]
fn scenario_hash_is_reproducible() {
    for name in Scenario::bundled_names() {
        let s = Scenario::bundled(name).unwrap();
        assert_eq!(rehash(&s.source).unwrap(), s.hash, "{name}");
    }
}
