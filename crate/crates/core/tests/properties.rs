use std::collections::BTreeSet;

use anodyne_core::algo::{make_node, ChangeKind, DacState, NodeState};
use anodyne_core::engine::{run_simulation, run_simulation_with, DeliveryOrder, RunOptions};
use anodyne_core::faults::FaultPlan;
use anodyne_core::model::{
    build_port_numbering, Algorithm, NodeId, PortId, SimConfig, WireMessage, WIRE_MESSAGE_LEN,
};
use anodyne_core::schedule::{
    check_dyna_degree, check_dyna_degree_with, gen_dyna_degree, partition_schedule,
    AdversaryStrategy, Exclusion, NodeView, WindowAlignment,
};
use proptest::prelude::*;

/// Valid `(n, T, D, windows, seed, extra)` for the generator.
fn gen_params() -> impl Strategy<Value = (u32, u32, u32, u32, u64, f64)> {
    (
        2u32..8,
        1u32..5,
        1u32..4,
        any::<u64>(),
        prop_oneof![Just(0.0), 0.0..0.5f64],
    )
        .prop_flat_map(|(n, t, windows, seed, extra)| {
            (
                Just(n),
                Just(t),
                1..n,
                Just(windows),
                Just(seed),
                Just(extra),
            )
        })
}

fn messages() -> impl Strategy<Value = Vec<(u32, f64, u32)>> {
    prop::collection::vec((1u32..=7, 0.0..=1.0f64, 0u32..6), 0..60)
}

proptest! {
    #[test]
    fn generated_schedules_pass_the_checker((n, t, d, windows, seed, extra) in gen_params()) {
        let sched = gen_dyna_degree(n, t, d, t * windows, seed, extra).unwrap();
        let aligned = check_dyna_degree_with(&sched, t, d, &Exclusion::none(), WindowAlignment::Aligned).unwrap();
        prop_assert!(aligned.satisfied, "{:?}", aligned.witness);
        // Every sliding window of length 2T-1 covers one aligned window.
        if 2 * t - 1 <= sched.horizon() {
            let sliding = check_dyna_degree(&sched, 2 * t - 1, d, &Exclusion::none()).unwrap();
            prop_assert!(sliding.satisfied, "{:?}", sliding.witness);
        }
    }

    #[test]
    fn longer_windows_keep_the_property((n, t, d, windows, seed, extra) in gen_params(), k in 1u32..4) {
        let sched = gen_dyna_degree(n, t, d, t * (windows + 8), seed, extra).unwrap();
        let base = check_dyna_degree(&sched, t, d, &Exclusion::none()).unwrap();
        if base.satisfied && k * t <= sched.horizon() {
            prop_assert!(check_dyna_degree(&sched, k * t, d, &Exclusion::none()).unwrap().satisfied);
        }
    }

    #[test]
    fn partitions_never_cross(n in 2u32..10, cut in 1u32..9, horizon in 1u32..6) {
        let cut = cut.min(n - 1);
        let a: BTreeSet<NodeId> = (1..=cut).map(NodeId::new).collect();
        let b: BTreeSet<NodeId> = (cut + 1..=n).map(NodeId::new).collect();
        let sched = partition_schedule(n, (&a, &b), horizon).unwrap();
        for (_, edges) in sched.rounds() {
            for (src, dst) in edges.iter() {
                prop_assert_eq!(a.contains(&src), a.contains(&dst));
            }
        }
    }

    #[test]
    fn adaptive_strategies_are_deterministic(values in prop::collection::vec(0.0..=1.0f64, 3..8), t in 1u32..20) {
        let n = values.len() as u32;
        let view: Vec<NodeView> = values
            .iter()
            .map(|&value| NodeView { phase: 0, value, crashed: false, byzantine: false })
            .collect();
        let s = AdversaryStrategy::DropOne;
        prop_assert_eq!(s.choose_edges(n, t, &view), s.choose_edges(n, t, &view));
    }

    #[test]
    fn port_numbering_is_bijective(n in 1u32..20, seed in any::<u64>()) {
        let ports = build_port_numbering(n, seed);
        for r in 1..=n {
            let senders: BTreeSet<u32> = (1..=n).map(|p| ports.sender_on(NodeId::new(r), PortId::new(p)).get()).collect();
            prop_assert_eq!(senders.len(), n as usize);
        }
    }

    #[test]
    fn wire_round_trip(value in any::<f64>(), phase in any::<u32>()) {
        let m = WireMessage::new(value, phase);
        let bytes = m.to_bytes();
        prop_assert_eq!(bytes.len(), WIRE_MESSAGE_LEN);
        let back = WireMessage::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.value.to_bits(), value.to_bits());
        prop_assert_eq!(back.phase, phase);
    }

    #[test]
    fn dac_value_stays_within_its_extremes(x in 0.0..=1.0f64, msgs in messages()) {
        let mut s = DacState::new(x, 7, PortId::new(1), 4, 4);
        for (port, value, phase) in msgs {
            let before = s.p;
            let change = s.handle_message(PortId::new(port), WireMessage::new(value, phase));
            prop_assert!(s.p >= before);
            prop_assert!(s.v_min <= s.v && s.v <= s.v_max);
            if let Some(c) = change {
                prop_assert!(c.to > c.from);
                if c.kind == ChangeKind::Advance {
                    prop_assert_eq!(c.to, c.from + 1);
                }
            }
        }
    }

    #[test]
    fn dbac_never_skips_a_phase(x in 0.0..=1.0f64, msgs in messages()) {
        let mut s = make_node(Algorithm::Dbac, x, 7, 1, 0.5, PortId::new(1)).unwrap();
        for (port, value, phase) in msgs {
            let before = s.phase();
            let popcount = s.popcount();
            let was_done = s.output().is_some();
            let change = s.handle_message(PortId::new(port), WireMessage::new(value, phase));
            prop_assert!(s.phase() == before || s.phase() == before + 1);
            if let Some(c) = change {
                prop_assert_eq!(c.to, c.from + 1);
                // Threshold is (7+3)/2+1 = 6 and fires on the message that reaches it.
                prop_assert_eq!(popcount, 5);
            }
            if was_done {
                prop_assert!(change.is_none());
            }
        }
    }

    #[test]
    fn state_machines_are_deterministic(x in 0.0..=1.0f64, msgs in messages(), byz in any::<bool>()) {
        let alg = if byz { Algorithm::Dbac } else { Algorithm::Dac };
        let mut a: NodeState = make_node(alg, x, 7, 1, 0.1, PortId::new(2)).unwrap();
        let mut b = a.clone();
        for (port, value, phase) in msgs {
            let m = WireMessage::new(value, phase);
            prop_assert_eq!(a.handle_message(PortId::new(port), m), b.handle_message(PortId::new(port), m));
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.broadcast_payload(), WireMessage::new(a.value(), a.phase()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// On the complete graph every node completes one phase per round whatever
    /// order it reads its inbox in, so phase trajectories are order-invariant.
    /// Values are not: the midpoint depends on which messages land before the
    /// threshold fires.
    #[test]
    fn delivery_order_preserves_phases(
        inputs in prop::collection::vec(0.0..=1.0f64, 3..7),
        seed in any::<u64>(),
        shuffle in any::<u64>(),
        byz in any::<bool>(),
    ) {
        let n = inputs.len() as u32;
        let cfg = SimConfig {
            n,
            f: 0,
            epsilon: if byz { 0.5 } else { 0.01 },
            max_rounds: None,
            seed,
            algorithm: if byz { Algorithm::Dbac } else { Algorithm::Dac },
            inputs,
            allow_insufficient: false,
        };
        let base = run_simulation(&cfg, &AdversaryStrategy::Complete, &FaultPlan::none()).unwrap();
        for order in [DeliveryOrder::DescendingPort, DeliveryOrder::Shuffled(shuffle)] {
            let other = run_simulation_with(&cfg, &AdversaryStrategy::Complete, &FaultPlan::none(), RunOptions { delivery_order: order }).unwrap();
            prop_assert_eq!(base.rounds.len(), other.rounds.len());
            for (x, y) in base.rounds.iter().zip(&other.rounds) {
                let px: Vec<u32> = x.states_after.iter().map(|s| s.phase).collect();
                let py: Vec<u32> = y.states_after.iter().map(|s| s.phase).collect();
                prop_assert_eq!(px, py);
            }
        }
    }
}

#[test]
fn delivery_order_changes_values() {
    // Node 1 reaches its threshold of 2 on whichever neighbor it reads first.
    let cfg = SimConfig {
        n: 3,
        f: 0,
        epsilon: 0.5,
        max_rounds: None,
        seed: 0,
        algorithm: Algorithm::Dac,
        inputs: vec![0.0, 0.5, 1.0],
        allow_insufficient: false,
    };
    let values = |order| {
        let t = run_simulation_with(
            &cfg,
            &AdversaryStrategy::Complete,
            &FaultPlan::none(),
            RunOptions {
                delivery_order: order,
            },
        )
        .unwrap();
        t.rounds[0]
            .states_after
            .iter()
            .map(|s| s.value)
            .collect::<Vec<_>>()
    };
    assert_ne!(
        values(DeliveryOrder::AscendingPort),
        values(DeliveryOrder::DescendingPort)
    );
}
