//! Randomised invariant suites over small instances.

use derfleet_core::check::{alternatives, dominance_violations, trace_violations, Instance};
use derfleet_core::engine::{simulate_with, SimOptions};
use derfleet_core::{Fleet, Policy, PolicyKind, ReferenceSignal};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GROUP_TOL: f64 = 1e-9;

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=6, 1usize..=8).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(0.1f64..2.0, n),
            // occasional exact ties and empty devices
            prop::collection::vec(prop_oneof![4 => 0.0f64..5.0, 1 => Just(2.5), 1 => Just(0.0)], n),
            prop::collection::vec((0.1f64..2.0, 0.0f64..1.1), k),
        )
            .prop_map(|(powers, ttg, segs)| {
                let total: f64 = powers.iter().sum();
                let segments: Vec<(f64, f64)> = segs.iter().map(|&(d, f)| (d, f * total)).collect();
                Instance {
                    fleet: Fleet::from_powers_and_ttg(&powers, &ttg).unwrap(),
                    signal: ReferenceSignal::from_durations(&segments).unwrap(),
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn optimal_trajectory_dominates(inst in instance(), seed in any::<u64>()) {
        let opts = SimOptions::default();
        let state = inst.state();
        let k = inst.signal.segment_count();
        let op = simulate_with(&inst.fleet, &state, &inst.signal, &Policy::new(PolicyKind::Op, GROUP_TOL), &opts).unwrap();
        let v = trace_violations(&inst.fleet, &op, k, true, GROUP_TOL);
        prop_assert!(v.is_empty(), "op: {v:?}");

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rivals = alternatives(&mut rng, &inst.fleet);
        rivals.push(Box::new(Policy::new(PolicyKind::Lpf, GROUP_TOL)));
        rivals.push(Box::new(Policy::new(PolicyKind::Pop, GROUP_TOL)));
        for (j, rival) in rivals.iter().enumerate() {
            let tr = simulate_with(&inst.fleet, &state, &inst.signal, rival.as_ref(), &opts).unwrap();
            let v = trace_violations(&inst.fleet, &tr, k, false, GROUP_TOL);
            prop_assert!(v.is_empty(), "rival {j}: {v:?}");
            prop_assert!(op.time_to_failure() >= tr.time_to_failure() - 1e-9,
                "rival {j} lasts {} > {}", tr.time_to_failure(), op.time_to_failure());
            let v = dominance_violations(&inst.fleet, &op, &tr);
            prop_assert!(v.is_empty(), "rival {j}: {v:?}");
        }
    }
}
