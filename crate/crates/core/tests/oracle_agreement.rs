use derfleet_core::check::{random_instance, InstanceSpec};
use derfleet_core::oracle::{max_flow, DEFAULT_BISECTION_TOLERANCE};
use derfleet_core::{feasible, oracle_time_to_failure, simulate, Fleet, FlowInstance, PolicyKind, ReferenceSignal};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Min cut of the bipartite network by enumerating which devices stay on
/// the source side.
fn brute_force_min_cut(inst: &FlowInstance) -> f64 {
    let n = inst.supplies.len();
    (0u32..1 << n)
        .map(|mask| {
            let cut_sources: f64 = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| inst.supplies[i]).sum();
            let cut_sinks: f64 = (0..inst.demands.len())
                .map(|k| {
                    let through: f64 = (0..n)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| inst.capacities[i][k])
                        .sum();
                    through.min(inst.demands[k])
                })
                .sum();
            cut_sources + cut_sinks
        })
        .fold(f64::INFINITY, f64::min)
}

fn flow_instance() -> impl Strategy<Value = FlowInstance> {
    (1usize..7, 1usize..6).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0.0f64..5.0, n),
            prop::collection::vec(0.0f64..5.0, m),
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, m), n),
        )
            .prop_map(|(supplies, demands, capacities)| FlowInstance {
                supplies,
                demands,
                capacities,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn max_flow_equals_min_cut(inst in flow_instance()) {
        let flow = max_flow(&inst).unwrap().value;
        let cut = brute_force_min_cut(&inst);
        prop_assert!((flow - cut).abs() <= 1e-9 * cut.max(1.0), "flow {flow} cut {cut}");
    }

    #[test]
    fn max_flow_is_continuous_in_capacities(inst in flow_instance(), i in 0usize..6, k in 0usize..5) {
        let base = max_flow(&inst).unwrap().value;
        let mut bumped = inst.clone();
        let i = i % bumped.supplies.len();
        let k = k % bumped.demands.len();
        bumped.capacities[i][k] += 1e-9;
        bumped.supplies[i] += 1e-9;
        bumped.demands[k] += 1e-9;
        let after = max_flow(&bumped).unwrap().value;
        prop_assert!(after >= base - 1e-12);
        // max flow is 1-Lipschitz in each capacity
        prop_assert!(after - base <= 3e-9 + 1e-12);
    }

    #[test]
    fn flow_certificate_respects_capacities(inst in flow_instance()) {
        let sol = max_flow(&inst).unwrap();
        for (i, row) in sol.flows.iter().enumerate() {
            prop_assert!(row.iter().sum::<f64>() <= inst.supplies[i] + 1e-9);
            for (k, f) in row.iter().enumerate() {
                prop_assert!(*f <= inst.capacities[i][k] + 1e-9);
            }
        }
        for (k, d) in inst.demands.iter().enumerate() {
            prop_assert!(sol.flows.iter().map(|r| r[k]).sum::<f64>() <= d + 1e-9);
        }
    }
}

#[test]
fn feasibility_is_monotone_in_horizon() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let inst = random_instance(&mut rng, &InstanceSpec::default());
        let state = inst.state();
        let end = inst.signal.horizon();
        let mut seen_infeasible = false;
        for j in 0..=60 {
            let t = end * j as f64 / 60.0;
            let ok = feasible(&inst.fleet, &state, &inst.signal, t).unwrap();
            assert!(!(ok && seen_infeasible), "feasible again at t={t}");
            seen_infeasible |= !ok;
        }
    }
}

#[test]
fn engine_matches_oracle_and_baselines_never_exceed_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..300 {
        let inst = random_instance(&mut rng, &InstanceSpec::default());
        let state = inst.state();
        let oracle = oracle_time_to_failure(&inst.fleet, &state, &inst.signal, DEFAULT_BISECTION_TOLERANCE).unwrap();
        let op = simulate(&inst.fleet, &state, &inst.signal, PolicyKind::Op, 1e-9)
            .unwrap()
            .time_to_failure();
        assert!(
            (op - oracle).abs() <= 1e-6,
            "trial {trial}: engine {op} oracle {oracle}"
        );
        for kind in [PolicyKind::Lpf, PolicyKind::Pop] {
            let theta = simulate(&inst.fleet, &state, &inst.signal, kind, 1e-9)
                .unwrap()
                .time_to_failure();
            assert!(
                theta <= oracle + 1e-6,
                "trial {trial}: {kind} {theta} beats oracle {oracle}"
            );
        }
    }
}

#[test]
fn stepped_example_agrees_across_routes() {
    let fleet = Fleet::from_powers_and_ttg(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
    let state = fleet.initial_state();
    let signal = ReferenceSignal::from_durations(&[(2.0, 1.0), (10.0, 3.0)]).unwrap();
    let oracle = oracle_time_to_failure(&fleet, &state, &signal, 1e-9).unwrap();
    assert!((oracle - 8.0 / 3.0).abs() <= 2e-9);
    let expected = [
        (PolicyKind::Op, 8.0 / 3.0),
        (PolicyKind::Lpf, 2.0),
        (PolicyKind::Pop, 7.0 / 3.0),
    ];
    for (kind, theta) in expected {
        let got = simulate(&fleet, &state, &signal, kind, 1e-9).unwrap().time_to_failure();
        assert!((got - theta).abs() <= 1e-12, "{kind}: {got}");
        assert!(got <= oracle + 2e-9);
    }
}
