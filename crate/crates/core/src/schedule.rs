//! Dynamic edge schedules, the dynaDegree(T,D) stability property, and the
//! message adversaries that choose each round's edge set.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{all_nodes, EdgeSet, NodeId, Phase, Round, Value};
use crate::{rng, CoreError};

/// A materialized schedule: one edge set per round `1..=horizon`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicSchedule {
    n: u32,
    rounds: Vec<EdgeSet>,
}

impl DynamicSchedule {
    /// `rounds[0]` is round 1.
    pub fn new(n: u32, rounds: Vec<EdgeSet>) -> Result<Self, CoreError> {
        for edges in &rounds {
            let max = edges.max_node();
            if max > n {
                return Err(CoreError::NodeOutOfRange { node: max, n });
            }
        }
        Ok(DynamicSchedule { n, rounds })
    }

    /// The same edge set in every round.
    pub fn constant(n: u32, edges: EdgeSet, horizon: u32) -> Result<Self, CoreError> {
        Self::new(n, alloc::vec![edges; horizon as usize])
    }

    pub fn complete(n: u32, horizon: u32) -> Self {
        DynamicSchedule {
            n,
            rounds: alloc::vec![EdgeSet::complete(n); horizon as usize],
        }
    }

    /// The three-node example: odd rounds empty, even rounds
    /// `{(1,2),(2,1),(2,3),(3,2)}`.
    pub fn fig1(horizon: u32) -> Self {
        let even = EdgeSet::from_pairs([(1, 2), (2, 1), (2, 3), (3, 2)]).expect("valid edges");
        let rounds = (1..=horizon)
            .map(|t| {
                if t % 2 == 0 {
                    even.clone()
                } else {
                    EdgeSet::new()
                }
            })
            .collect();
        DynamicSchedule { n: 3, rounds }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn horizon(&self) -> u32 {
        self.rounds.len() as u32
    }

    /// Edges of round `t` (1-based); `None` outside `[1, horizon]`.
    pub fn edges_at(&self, t: Round) -> Option<&EdgeSet> {
        if t == 0 {
            return None;
        }
        self.rounds.get((t - 1) as usize)
    }

    pub fn rounds(&self) -> impl Iterator<Item = (Round, &EdgeSet)> {
        self.rounds
            .iter()
            .enumerate()
            .map(|(i, e)| (i as Round + 1, e))
    }
}

/// Nodes exempt from the in-degree requirement, each from a given round on.
///
/// A node excluded from round `r` is skipped for every window that ends at or
/// after `r`; crashed nodes are excluded from their crash round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Exclusion(BTreeMap<NodeId, Round>);

impl Exclusion {
    pub fn none() -> Self {
        Exclusion::default()
    }

    /// Nodes excluded for the whole schedule.
    pub fn nodes<I: IntoIterator<Item = NodeId>>(nodes: I) -> Self {
        Exclusion(nodes.into_iter().map(|n| (n, 1)).collect())
    }

    pub fn from_round(mut self, node: NodeId, round: Round) -> Self {
        let entry = self.0.entry(node).or_insert(round);
        *entry = (*entry).min(round);
        self
    }

    fn excludes(&self, node: NodeId, window_end: Round) -> bool {
        self.0.get(&node).is_some_and(|&from| from <= window_end)
    }
}

/// How window starts are enumerated when checking dynaDegree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowAlignment {
    /// Every start `t` with `t + T - 1 ≤ horizon`.
    Sliding,
    /// Only the disjoint windows `1, T+1, 2T+1, ...` that the generator targets.
    Aligned,
}

/// First window and node that falls short of the required degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeWitness {
    /// Window start round.
    pub t: Round,
    pub node: NodeId,
    /// Distinct in-neighbors actually seen in the window.
    pub count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynaDegreeReport {
    pub satisfied: bool,
    pub witness: Option<DegreeWitness>,
}

/// Checks dynaDegree(T,D) over every sliding window of `sched`.
pub fn check_dyna_degree(
    sched: &DynamicSchedule,
    window: u32,
    degree: u32,
    exclude: &Exclusion,
) -> Result<DynaDegreeReport, CoreError> {
    check_dyna_degree_with(sched, window, degree, exclude, WindowAlignment::Sliding)
}

pub fn check_dyna_degree_with(
    sched: &DynamicSchedule,
    window: u32,
    degree: u32,
    exclude: &Exclusion,
    alignment: WindowAlignment,
) -> Result<DynaDegreeReport, CoreError> {
    let n = sched.n();
    if window == 0 {
        return Err(CoreError::param("T", "window length must be at least 1"));
    }
    if degree == 0 || degree > n.saturating_sub(1) {
        return Err(CoreError::param(
            "D",
            format!("degree {degree} outside [1, {}]", n.saturating_sub(1)),
        ));
    }
    if sched.horizon() < window {
        return Err(CoreError::HorizonTooShort {
            horizon: sched.horizon(),
            window,
        });
    }
    let step = match alignment {
        WindowAlignment::Sliding => 1,
        WindowAlignment::Aligned => window as usize,
    };
    let last_start = sched.horizon() - window + 1;
    for start in (1..=last_start).step_by(step) {
        let end = start + window - 1;
        let mut senders: Vec<BTreeSet<NodeId>> = alloc::vec![BTreeSet::new(); n as usize];
        for t in start..=end {
            for (src, dst) in sched.edges_at(t).expect("t within horizon").iter() {
                senders[dst.index()].insert(src);
            }
        }
        for node in all_nodes(n) {
            if exclude.excludes(node, end) {
                continue;
            }
            let count = senders[node.index()].len() as u32;
            if count < degree {
                return Ok(DynaDegreeReport {
                    satisfied: false,
                    witness: Some(DegreeWitness {
                        t: start,
                        node,
                        count,
                    }),
                });
            }
        }
    }
    Ok(DynaDegreeReport {
        satisfied: true,
        witness: None,
    })
}

/// Parameters of the random dynaDegree generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynaDegreeParams {
    pub n: u32,
    /// Window length T.
    pub window: u32,
    /// Guaranteed distinct in-neighbors per window, D.
    pub degree: u32,
    pub seed: u64,
    pub extra_edge_prob: f64,
    /// Restricts the D guaranteed in-neighbors to these senders. Extra edges
    /// still come from every node.
    #[serde(default)]
    pub sender_pool: Option<BTreeSet<NodeId>>,
}

impl DynaDegreeParams {
    fn validate(&self) -> Result<(), CoreError> {
        if self.window == 0 {
            return Err(CoreError::param("T", "window length must be at least 1"));
        }
        if self.degree == 0 || self.degree > self.n.saturating_sub(1) {
            return Err(CoreError::param(
                "D",
                format!(
                    "degree {} outside [1, {}]",
                    self.degree,
                    self.n.saturating_sub(1)
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.extra_edge_prob) {
            return Err(CoreError::param(
                "extra_edge_prob",
                format!("{} outside [0, 1]", self.extra_edge_prob),
            ));
        }
        if let Some(pool) = &self.sender_pool {
            if let Some(bad) = pool.iter().find(|p| p.get() > self.n) {
                return Err(CoreError::NodeOutOfRange {
                    node: bad.get(),
                    n: self.n,
                });
            }
            for dst in all_nodes(self.n) {
                let available = pool.iter().filter(|&&s| s != dst).count();
                if available < self.degree as usize {
                    return Err(CoreError::param(
                        "sender_pool",
                        format!(
                            "node {dst} has {available} eligible senders, degree {} required",
                            self.degree
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Edge sets of the rounds in window `w` (0-based). Deterministic in
    /// `(params, w)`, so lazy and materialized generation agree.
    fn window_edges(&self, w: u32) -> Vec<EdgeSet> {
        let mut rng = rng::stream(self.seed, rng::DOMAIN_SCHEDULE, self.n as u64, w as u64);
        let mut rounds = alloc::vec![EdgeSet::new(); self.window as usize];
        for dst in all_nodes(self.n) {
            let candidates: Vec<NodeId> = match &self.sender_pool {
                Some(pool) => pool.iter().copied().filter(|&s| s != dst).collect(),
                None => all_nodes(self.n).filter(|&s| s != dst).collect(),
            };
            for pick in index::sample(&mut rng, candidates.len(), self.degree as usize).into_iter()
            {
                let slot = rng.gen_range(0..self.window) as usize;
                rounds[slot]
                    .insert(candidates[pick], dst)
                    .expect("candidates exclude the receiver");
            }
        }
        if self.extra_edge_prob > 0.0 {
            for edges in rounds.iter_mut() {
                for src in all_nodes(self.n) {
                    for dst in all_nodes(self.n) {
                        if src != dst && rng.gen_bool(self.extra_edge_prob) {
                            edges.insert(src, dst).expect("src != dst");
                        }
                    }
                }
            }
        }
        rounds
    }
}

/// Random schedule satisfying dynaDegree(T,D) on every aligned window.
///
/// For each disjoint T-window and each node, D distinct in-neighbors are
/// drawn uniformly and each link is placed in a uniformly random round of the
/// window; every other edge is added independently with probability
/// `extra_edge_prob` per round.
pub fn gen_dyna_degree(
    n: u32,
    window: u32,
    degree: u32,
    horizon: u32,
    seed: u64,
    extra_edge_prob: f64,
) -> Result<DynamicSchedule, CoreError> {
    gen_dyna_degree_from(
        &DynaDegreeParams {
            n,
            window,
            degree,
            seed,
            extra_edge_prob,
            sender_pool: None,
        },
        horizon,
    )
}

pub fn gen_dyna_degree_from(
    params: &DynaDegreeParams,
    horizon: u32,
) -> Result<DynamicSchedule, CoreError> {
    params.validate()?;
    if !horizon.is_multiple_of(params.window) {
        return Err(CoreError::param(
            "horizon",
            format!(
                "horizon {horizon} is not a multiple of T = {}",
                params.window
            ),
        ));
    }
    let mut rounds = Vec::with_capacity(horizon as usize);
    for w in 0..horizon / params.window {
        rounds.extend(params.window_edges(w));
    }
    DynamicSchedule::new(params.n, rounds)
}

fn check_groups(n: u32, a: &BTreeSet<NodeId>, b: &BTreeSet<NodeId>) -> Result<(), CoreError> {
    if let Some(shared) = a.intersection(b).next() {
        return Err(CoreError::InvalidPartition(format!(
            "node {shared} is in both groups"
        )));
    }
    for node in a.iter().chain(b.iter()) {
        if node.get() > n {
            return Err(CoreError::NodeOutOfRange {
                node: node.get(),
                n,
            });
        }
    }
    if let Some(missing) = all_nodes(n).find(|v| !a.contains(v) && !b.contains(v)) {
        return Err(CoreError::InvalidPartition(format!(
            "node {missing} is in neither group"
        )));
    }
    Ok(())
}

fn partition_edges(a: &BTreeSet<NodeId>, b: &BTreeSet<NodeId>) -> EdgeSet {
    let mut edges = EdgeSet::new();
    for group in [a, b] {
        for &src in group {
            for &dst in group {
                if src != dst {
                    edges.insert(src, dst).expect("src != dst");
                }
            }
        }
    }
    edges
}

/// Complete inside each group, no edge across groups, every round.
pub fn partition_schedule(
    n: u32,
    groups: (&BTreeSet<NodeId>, &BTreeSet<NodeId>),
    horizon: u32,
) -> Result<DynamicSchedule, CoreError> {
    check_groups(n, groups.0, groups.1)?;
    DynamicSchedule::constant(n, partition_edges(groups.0, groups.1), horizon)
}

/// Start-of-round view of one node, as seen by an adaptive adversary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeView {
    pub phase: Phase,
    pub value: Value,
    pub crashed: bool,
    pub byzantine: bool,
}

/// A message adversary. Every variant is a deterministic function of
/// `(round, start-of-round states, seed)`.
#[derive(Clone, Debug, PartialEq)]
pub enum AdversaryStrategy {
    Complete,
    /// Materialized schedule; rounds past the horizon deliver nothing.
    Static(DynamicSchedule),
    /// Complete graph minus, at each receiver, the link from the in-neighbor
    /// whose value is farthest from the receiver's (ties: lowest id).
    DropOne,
    /// Two non-communicating groups through round `until` (forever when
    /// `None`), complete graph afterwards.
    CrashPartition {
        groups: (BTreeSet<NodeId>, BTreeSet<NodeId>),
        until: Option<Round>,
    },
    /// A-side receivers hear only group A, everyone else hears only group B.
    ByzPartition {
        group_a: BTreeSet<NodeId>,
        group_b: BTreeSet<NodeId>,
        a_side: BTreeSet<NodeId>,
    },
    /// Lazily generated [`gen_dyna_degree_from`] schedule.
    RandomDynaDegree(DynaDegreeParams),
}

impl AdversaryStrategy {
    /// Window length the strategy guarantees, if it has one.
    pub fn window_hint(&self) -> u32 {
        match self {
            AdversaryStrategy::RandomDynaDegree(p) => p.window,
            AdversaryStrategy::CrashPartition { until: Some(r), .. } => r + 1,
            _ => 1,
        }
    }

    /// Edge set for round `t` given every node's start-of-round view
    /// (`view[i]` describes node `i + 1`).
    pub fn choose_edges(&self, n: u32, t: Round, view: &[NodeView]) -> EdgeSet {
        match self {
            AdversaryStrategy::Complete => EdgeSet::complete(n),
            AdversaryStrategy::Static(sched) => sched.edges_at(t).cloned().unwrap_or_default(),
            AdversaryStrategy::DropOne => drop_one_edges(n, view),
            AdversaryStrategy::CrashPartition { groups, until } => match until {
                Some(last) if t > *last => EdgeSet::complete(n),
                _ => partition_edges(&groups.0, &groups.1),
            },
            AdversaryStrategy::ByzPartition {
                group_a,
                group_b,
                a_side,
            } => {
                let mut edges = EdgeSet::new();
                for dst in all_nodes(n) {
                    let source = if a_side.contains(&dst) {
                        group_a
                    } else {
                        group_b
                    };
                    for &src in source {
                        if src != dst {
                            edges.insert(src, dst).expect("src != dst");
                        }
                    }
                }
                edges
            }
            AdversaryStrategy::RandomDynaDegree(params) => {
                let w = (t - 1) / params.window;
                let slot = ((t - 1) % params.window) as usize;
                params.window_edges(w).swap_remove(slot)
            }
        }
    }

    /// Materializes rounds `1..=horizon` against a fixed view; exact for every
    /// non-adaptive strategy.
    pub fn materialize(&self, n: u32, horizon: u32, view: &[NodeView]) -> DynamicSchedule {
        let rounds = (1..=horizon)
            .map(|t| self.choose_edges(n, t, view))
            .collect();
        DynamicSchedule { n, rounds }
    }
}

fn drop_one_edges(n: u32, view: &[NodeView]) -> EdgeSet {
    let mut edges = EdgeSet::complete(n);
    for dst in all_nodes(n) {
        let own = view[dst.index()].value;
        let mut victim: Option<(NodeId, f64)> = None;
        for src in all_nodes(n).filter(|&s| s != dst) {
            let distance = libm::fabs(view[src.index()].value - own);
            if victim.is_none_or(|(_, best)| distance > best) {
                victim = Some((src, distance));
            }
        }
        if let Some((src, _)) = victim {
            edges.remove(src, dst);
        }
    }
    edges
}

/// The drop-one adversary over the complete graph.
pub fn drop_one_strategy(n: u32) -> Result<AdversaryStrategy, CoreError> {
    if n < 2 {
        return Err(CoreError::param("n", "drop-one needs n ≥ 2"));
    }
    Ok(AdversaryStrategy::DropOne)
}

/// Roles of the two-group Byzantine equivocation construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByzPartitionRoles {
    pub group_a: BTreeSet<NodeId>,
    pub group_b: BTreeSet<NodeId>,
    pub byzantine: BTreeSet<NodeId>,
    /// Fault-free nodes that receive only group-A traffic.
    pub a_side: BTreeSet<NodeId>,
    /// Fault-free nodes that receive only group-B traffic.
    pub b_side: BTreeSet<NodeId>,
    pub inputs: Vec<Value>,
}

/// Groups of size ⌊(n+3f)/2⌋ overlapping in the middle, the Byzantine block
/// `⌊(n−f)/2⌋+1 ..= ⌊(n+f)/2⌋`, inputs 0 below it and 1 above it.
pub fn byz_partition_strategy(
    n: u32,
    f: u32,
) -> Result<(AdversaryStrategy, ByzPartitionRoles), CoreError> {
    if f == 0 || n < 3 * f + 1 {
        return Err(CoreError::param(
            "n",
            format!("construction needs f ≥ 1 and n ≥ 3f+1, got n = {n}, f = {f}"),
        ));
    }
    let size = (n + 3 * f) / 2;
    let group_a: BTreeSet<NodeId> = (1..=size).map(NodeId::new).collect();
    let group_b: BTreeSet<NodeId> = (n - size + 1..=n).map(NodeId::new).collect();
    let low = (n - f) / 2;
    let high = (n + f) / 2;
    let byzantine: BTreeSet<NodeId> = (low + 1..=high).map(NodeId::new).collect();
    let a_side: BTreeSet<NodeId> = (1..=low).map(NodeId::new).collect();
    let b_side: BTreeSet<NodeId> = (high + 1..=n).map(NodeId::new).collect();
    let inputs = all_nodes(n)
        .map(|v| {
            if v.get() <= low {
                0.0
            } else if v.get() > high {
                1.0
            } else {
                0.5
            }
        })
        .collect();
    let strategy = AdversaryStrategy::ByzPartition {
        group_a: group_a.clone(),
        group_b: group_b.clone(),
        a_side: a_side.clone(),
    };
    Ok((
        strategy,
        ByzPartitionRoles {
            group_a,
            group_b,
            byzantine,
            a_side,
            b_side,
            inputs,
        },
    ))
}
