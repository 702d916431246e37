//! Fault plans: crash-stop schedules and a catalog of Byzantine behaviors.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{NodeId, Phase, Round, Value, Violation, WireMessage};
use crate::rng;

/// How a Byzantine node fills the messages it sends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ByzantineBehavior {
    /// Same value at phase 0 to everyone.
    ConstantLiar { value: Value },
    /// `a` to receivers in `side_a`, `b` to everyone else, at the highest
    /// phase any fault-free node currently holds.
    Equivocator {
        a: Value,
        b: Value,
        #[serde(rename = "sideA")]
        side_a: BTreeSet<NodeId>,
    },
    /// Replays the last value it heard with the phase pushed up by `offset`.
    PhaseJumper { offset: Phase },
    /// Uniform value in `[0, 1]` and phase in `[0, round]`, per receiver.
    RandomNoise { seed: u64 },
}

/// What a Byzantine node knows when it emits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ByzView {
    pub round: Round,
    /// Highest phase held by any fault-free node at the start of the round.
    pub max_phase: Phase,
    /// Last message delivered to this node, if any.
    pub last_received: Option<WireMessage>,
    pub own_input: Value,
}

/// One message per receiver, in receiver order.
pub fn byz_emit(
    behavior: &ByzantineBehavior,
    view: &ByzView,
    receivers: &[NodeId],
) -> Vec<(NodeId, WireMessage)> {
    receivers
        .iter()
        .map(|&to| {
            let msg = match behavior {
                ByzantineBehavior::ConstantLiar { value } => WireMessage::new(*value, 0),
                ByzantineBehavior::Equivocator { a, b, side_a } => {
                    let value = if side_a.contains(&to) { *a } else { *b };
                    WireMessage::new(value, view.max_phase)
                }
                ByzantineBehavior::PhaseJumper { offset } => match view.last_received {
                    Some(last) => WireMessage::new(last.value, last.phase.saturating_add(*offset)),
                    None => WireMessage::new(view.own_input, *offset),
                },
                ByzantineBehavior::RandomNoise { seed } => {
                    let mut rng =
                        rng::stream(*seed, rng::DOMAIN_NOISE, view.round as u64, to.get() as u64);
                    let value = rng.gen_range(0.0..=1.0);
                    let phase = rng.gen_range(0..=view.round);
                    WireMessage::new(value, phase)
                }
            };
            (to, msg)
        })
        .collect()
}

/// Crash rounds and Byzantine behaviors for up to `f` nodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    /// Node is silent from this round onward.
    #[serde(default)]
    pub crashes: BTreeMap<NodeId, Round>,
    #[serde(default)]
    pub byzantine: BTreeMap<NodeId, ByzantineBehavior>,
}

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan::default()
    }

    pub fn with_crash(mut self, node: NodeId, round: Round) -> Self {
        self.crashes.insert(node, round);
        self
    }

    pub fn with_byzantine(mut self, node: NodeId, behavior: ByzantineBehavior) -> Self {
        self.byzantine.insert(node, behavior);
        self
    }

    pub fn is_faulty(&self, node: NodeId) -> bool {
        self.crashes.contains_key(&node) || self.byzantine.contains_key(&node)
    }

    pub fn is_byzantine(&self, node: NodeId) -> bool {
        self.byzantine.contains_key(&node)
    }

    pub fn faulty_count(&self) -> usize {
        self.crashes.len() + self.byzantine.len()
    }

    /// Violations of the plan's own invariants for a system of `n` nodes
    /// tolerating `f` faults.
    pub fn validate(&self, n: u32, f: u32) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.faulty_count() > f as usize {
            out.push(Violation::new(
                "faults",
                "|crashes| + |byzantine| ≤ f",
                format!("{} faulty nodes planned, f = {f}", self.faulty_count()),
            ));
        }
        for node in self.crashes.keys().chain(self.byzantine.keys()) {
            if node.get() > n {
                out.push(Violation::new(
                    "faults",
                    "1 ≤ node ≤ n",
                    format!("fault planned for node {node} but n = {n}"),
                ));
            }
        }
        for node in self.crashes.keys() {
            if self.byzantine.contains_key(node) {
                out.push(Violation::new(
                    "faults",
                    "crash and byzantine maps are disjoint",
                    format!("node {node} is both crashed and Byzantine"),
                ));
            }
        }
        for (node, round) in &self.crashes {
            if *round == 0 {
                out.push(Violation::new(
                    "faults",
                    "crash round ≥ 1",
                    format!("node {node} crashes at round 0"),
                ));
            }
        }
        for (node, behavior) in &self.byzantine {
            if let ByzantineBehavior::ConstantLiar { value } = behavior {
                if !value.is_finite() {
                    out.push(Violation::new(
                        "faults",
                        "finite values",
                        format!("node {node} lies with a non-finite value"),
                    ));
                }
            }
        }
        out
    }
}

/// True iff `node` is silent in `round`.
pub fn apply_crash(plan: &FaultPlan, node: NodeId, round: Round) -> bool {
    plan.crashes.get(&node).is_some_and(|&at| at <= round)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn view() -> ByzView {
        ByzView {
            round: 7,
            max_phase: 4,
            last_received: None,
            own_input: 0.3,
        }
    }

    #[test]
    fn equivocator_splits_by_side() {
        let side_a = (1..=4).map(NodeId::new).collect();
        let b = ByzantineBehavior::Equivocator {
            a: 0.0,
            b: 1.0,
            side_a,
        };
        let out = byz_emit(&b, &view(), &[NodeId::new(2), NodeId::new(9)]);
        assert_eq!(out[0], (NodeId::new(2), WireMessage::new(0.0, 4)));
        assert_eq!(out[1], (NodeId::new(9), WireMessage::new(1.0, 4)));
    }

    #[test]
    fn constant_liar_sends_phase_zero() {
        let out = byz_emit(
            &ByzantineBehavior::ConstantLiar { value: 0.5 },
            &view(),
            &[NodeId::new(1), NodeId::new(2), NodeId::new(3)],
        );
        assert!(out.iter().all(|(_, m)| *m == WireMessage::new(0.5, 0)));
    }

    #[test]
    fn phase_jumper_replays_with_offset() {
        let b = ByzantineBehavior::PhaseJumper { offset: 3 };
        let fresh = byz_emit(&b, &view(), &[NodeId::new(1)]);
        assert_eq!(fresh[0].1, WireMessage::new(0.3, 3));
        let heard = ByzView {
            last_received: Some(WireMessage::new(0.8, 2)),
            ..view()
        };
        assert_eq!(
            byz_emit(&b, &heard, &[NodeId::new(1)])[0].1,
            WireMessage::new(0.8, 5)
        );
    }

    #[test]
    fn random_noise_is_deterministic_and_in_range() {
        let b = ByzantineBehavior::RandomNoise { seed: 42 };
        let to: Vec<NodeId> = (1..=5).map(NodeId::new).collect();
        let first = byz_emit(&b, &view(), &to);
        assert_eq!(first, byz_emit(&b, &view(), &to));
        // A receiver's message does not depend on who else receives.
        assert_eq!(byz_emit(&b, &view(), &to[2..3])[0], first[2]);
        for (_, m) in first {
            assert!((0.0..=1.0).contains(&m.value));
            assert!(m.phase <= 7);
        }
    }

    #[test]
    fn crash_is_inclusive_of_its_round() {
        let plan = FaultPlan::none().with_crash(NodeId::new(2), 5);
        assert!(apply_crash(&plan, NodeId::new(2), 5));
        assert!(!apply_crash(&plan, NodeId::new(2), 4));
        assert!(!apply_crash(&plan, NodeId::new(1), 100));
    }

    #[test]
    fn plan_validation() {
        let plan = FaultPlan::none()
            .with_crash(NodeId::new(1), 1)
            .with_byzantine(
                NodeId::new(1),
                ByzantineBehavior::ConstantLiar { value: 0.0 },
            );
        let rules: Vec<_> = plan.validate(4, 1).into_iter().map(|v| v.rule).collect();
        assert_eq!(
            rules,
            vec![
                "|crashes| + |byzantine| ≤ f",
                "crash and byzantine maps are disjoint"
            ]
        );
        assert!(FaultPlan::none()
            .with_crash(NodeId::new(3), 2)
            .validate(3, 1)
            .is_empty());
    }
}
