//! The synchronous round loop.
//!
//! Each round: live nodes produce payloads (Byzantine nodes one per
//! receiver), the adversary picks `E(t)` from the start-of-round states,
//! messages on chosen edges from non-crashed senders are delivered on the
//! receiver's port for that sender, and every fault-free node consumes its
//! deliveries in ascending port order. A node's own value never crosses the
//! wire; it is already held in its state.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::algo::{self, ChangeKind, NodeState};
use crate::faults::{apply_crash, byz_emit, ByzView, FaultPlan};
use crate::model::{
    all_nodes, build_port_numbering, validate_config, EdgeSet, NodeId, Phase, PortId, Round,
    SimConfig, Value, WireMessage,
};
use crate::schedule::{AdversaryStrategy, NodeView};
use crate::{rng, CoreError};

/// Observable per-node state after a round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub phase: Phase,
    pub value: Value,
    pub popcount: u32,
    pub output: Option<Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub src: NodeId,
    pub dst: NodeId,
    pub message: WireMessage,
}

/// A phase change at one node, in processing order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub node: NodeId,
    pub from: Phase,
    pub to: Phase,
    pub value: Value,
    pub kind: ChangeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: Round,
    pub edges: EdgeSet,
    pub deliveries: Vec<Delivery>,
    pub transitions: Vec<Transition>,
    /// Indexed by node; crashed and Byzantine nodes are frozen.
    pub states_after: Vec<NodeSnapshot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Every fault-free node has output; `round` is the last output round.
    Terminated { round: Round },
    /// `max_rounds` elapsed first.
    NonTermination { max_rounds: Round },
}

/// Complete record of one execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Snapshot of the configuration, with `max_rounds` resolved.
    pub config: SimConfig,
    pub faults: FaultPlan,
    pub p_end: Phase,
    pub initial: Vec<NodeSnapshot>,
    pub rounds: Vec<RoundRecord>,
    pub outcome: Outcome,
    /// Output round per node; `None` for faulty nodes and non-terminated ones.
    pub output_round: Vec<Option<Round>>,
}

impl Trace {
    pub fn n(&self) -> u32 {
        self.config.n
    }

    /// Node snapshots at checkpoint `s`: `s = 0` is the initial state, `s = t`
    /// the state after round `t`.
    pub fn checkpoint(&self, s: usize) -> &[NodeSnapshot] {
        if s == 0 {
            &self.initial
        } else {
            &self.rounds[s - 1].states_after
        }
    }

    pub fn last_checkpoint(&self) -> &[NodeSnapshot] {
        self.checkpoint(self.rounds.len())
    }

    pub fn is_fault_free(&self, node: NodeId) -> bool {
        !self.faults.is_faulty(node)
    }

    pub fn terminated(&self) -> bool {
        matches!(self.outcome, Outcome::Terminated { .. })
    }
}

/// Intra-round processing order at each receiver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DeliveryOrder {
    #[default]
    AscendingPort,
    DescendingPort,
    /// Seeded shuffle, different per (round, receiver).
    Shuffled(u64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub delivery_order: DeliveryOrder,
}

/// Default round budget: 10 · T · p_end.
pub fn default_max_rounds(p_end: Phase, window_hint: u32) -> Round {
    10u32
        .saturating_mul(window_hint.max(1))
        .saturating_mul(p_end.max(1))
}

pub fn run_simulation(
    cfg: &SimConfig,
    strategy: &AdversaryStrategy,
    plan: &FaultPlan,
) -> Result<Trace, CoreError> {
    run_simulation_with(cfg, strategy, plan, RunOptions::default())
}

pub fn run_simulation_with(
    cfg: &SimConfig,
    strategy: &AdversaryStrategy,
    plan: &FaultPlan,
    options: RunOptions,
) -> Result<Trace, CoreError> {
    let mut violations = validate_config(cfg);
    violations.extend(plan.validate(cfg.n, cfg.f));
    if !violations.is_empty() {
        return Err(CoreError::InvalidConfig(violations));
    }
    let n = cfg.n;
    let ports = build_port_numbering(n, cfg.seed);
    let p_end = algo::p_end(cfg.algorithm, cfg.epsilon, n)?;
    let max_rounds = cfg
        .max_rounds
        .unwrap_or_else(|| default_max_rounds(p_end, strategy.window_hint()));

    let mut states: Vec<Option<NodeState>> = Vec::with_capacity(n as usize);
    for node in all_nodes(n) {
        states.push(if plan.is_byzantine(node) {
            None
        } else {
            Some(algo::make_node(
                cfg.algorithm,
                cfg.inputs[node.index()],
                n,
                cfg.f,
                cfg.epsilon,
                ports.self_port(node),
            )?)
        });
    }
    let mut last_heard: BTreeMap<NodeId, WireMessage> = BTreeMap::new();
    let snapshot = |states: &[Option<NodeState>]| -> Vec<NodeSnapshot> {
        states
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                Some(s) => NodeSnapshot {
                    phase: s.phase(),
                    value: s.value(),
                    popcount: s.popcount(),
                    output: s.output(),
                },
                None => NodeSnapshot {
                    phase: 0,
                    value: cfg.inputs[i],
                    popcount: 0,
                    output: None,
                },
            })
            .collect()
    };
    let initial = snapshot(&states);
    let mut output_round: Vec<Option<Round>> = alloc::vec![None; n as usize];
    let mut rounds = Vec::new();
    let honest: Vec<NodeId> = all_nodes(n).filter(|&v| !plan.is_faulty(v)).collect();

    let all_done = |states: &[Option<NodeState>]| {
        honest.iter().all(|v| {
            states[v.index()]
                .as_ref()
                .is_some_and(|s| s.output().is_some())
        })
    };

    let mut t: Round = 0;
    while !all_done(&states) && t < max_rounds {
        t += 1;
        let view: Vec<NodeView> = all_nodes(n)
            .map(|v| {
                let (phase, value) = match &states[v.index()] {
                    Some(s) => (s.phase(), s.value()),
                    None => (0, cfg.inputs[v.index()]),
                };
                NodeView {
                    phase,
                    value,
                    crashed: apply_crash(plan, v, t),
                    byzantine: plan.is_byzantine(v),
                }
            })
            .collect();
        let max_phase = all_nodes(n)
            .filter(|&v| !plan.is_faulty(v))
            .filter_map(|v| states[v.index()].as_ref().map(|s| s.phase()))
            .max()
            .unwrap_or(0);

        let edges = strategy.choose_edges(n, t, &view);

        let mut byz_out: BTreeMap<(NodeId, NodeId), WireMessage> = BTreeMap::new();
        for (&node, behavior) in &plan.byzantine {
            let receivers: Vec<NodeId> = edges.out_neighbors(node).collect();
            let byz_view = ByzView {
                round: t,
                max_phase,
                last_received: last_heard.get(&node).copied(),
                own_input: cfg.inputs[node.index()],
            };
            for (to, msg) in byz_emit(behavior, &byz_view, &receivers) {
                byz_out.insert((node, to), msg);
            }
        }

        let mut deliveries = Vec::new();
        let mut inbox: Vec<Vec<(PortId, WireMessage)>> = alloc::vec![Vec::new(); n as usize];
        for (src, dst) in edges.iter() {
            if view[src.index()].crashed || view[dst.index()].crashed {
                continue;
            }
            let message = match &states[src.index()] {
                Some(s) => s.broadcast_payload(),
                None => byz_out[&(src, dst)],
            };
            deliveries.push(Delivery { src, dst, message });
            inbox[dst.index()].push((ports.port_of(dst, src), message));
        }

        let mut transitions = Vec::new();
        for dst in all_nodes(n) {
            let mut msgs = core::mem::take(&mut inbox[dst.index()]);
            if msgs.is_empty() {
                continue;
            }
            match options.delivery_order {
                DeliveryOrder::AscendingPort => msgs.sort_by_key(|m| m.0),
                DeliveryOrder::DescendingPort => msgs.sort_by_key(|m| core::cmp::Reverse(m.0)),
                DeliveryOrder::Shuffled(seed) => {
                    msgs.sort_by_key(|m| m.0);
                    let mut r = rng::stream(seed, rng::DOMAIN_DELIVERY, t as u64, dst.get() as u64);
                    msgs.shuffle(&mut r);
                }
            }
            match &mut states[dst.index()] {
                None => {
                    let last = msgs.iter().max_by_key(|m| m.0).expect("non-empty").1;
                    last_heard.insert(dst, last);
                }
                Some(state) => {
                    for (port, msg) in msgs {
                        if let Some(change) = state.handle_message(port, msg) {
                            transitions.push(Transition {
                                node: dst,
                                from: change.from,
                                to: change.to,
                                value: change.value,
                                kind: change.kind,
                            });
                        }
                    }
                    if state.output().is_some() && output_round[dst.index()].is_none() {
                        output_round[dst.index()] = Some(t);
                    }
                }
            }
        }

        rounds.push(RoundRecord {
            t,
            edges,
            deliveries,
            transitions,
            states_after: snapshot(&states),
        });
    }

    let outcome = if all_done(&states) {
        Outcome::Terminated {
            round: honest
                .iter()
                .filter_map(|v| output_round[v.index()])
                .max()
                .unwrap_or(0),
        }
    } else {
        Outcome::NonTermination { max_rounds }
    };
    for node in all_nodes(n) {
        if plan.is_faulty(node) {
            output_round[node.index()] = None;
        }
    }
    let mut config = cfg.clone();
    config.max_rounds = Some(max_rounds);
    Ok(Trace {
        config,
        faults: plan.clone(),
        p_end,
        initial,
        rounds,
        outcome,
        output_round,
    })
}
