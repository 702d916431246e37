//! Core domain types: node and port identifiers, wire messages, edge sets,
//! simulation configuration and port numberings.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::CoreError;

/// Synchronous round index. Traces start at round 1.
pub type Round = u32;
/// Algorithm phase index.
pub type Phase = u32;
/// Node state value in `[0, 1]`.
pub type Value = f64;

/// Presentation-only node label in `[1, n]`.
///
/// Algorithm state machines never see a `NodeId`; only the engine, the
/// adversary and the analysis use it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct NodeId(u32);

impl TryFrom<u32> for NodeId {
    type Error = &'static str;

    fn try_from(index: u32) -> Result<Self, Self::Error> {
        if index == 0 {
            Err("node ids are 1-based")
        } else {
            Ok(NodeId(index))
        }
    }
}

impl From<NodeId> for u32 {
    fn from(node: NodeId) -> u32 {
        node.0
    }
}

impl NodeId {
    /// # Panics
    ///
    /// Panics if `index` is zero.
    pub fn new(index: u32) -> Self {
        assert!(index >= 1, "node ids are 1-based");
        NodeId(index)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position for indexing per-node vectors.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(index: usize) -> Self {
        NodeId(index as u32 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// All node ids `1..=n`.
pub fn all_nodes(n: u32) -> impl Iterator<Item = NodeId> + Clone {
    (1..=n).map(NodeId)
}

/// Local label of an incoming link at one receiver, in `[1, n]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortId(u32);

impl PortId {
    /// # Panics
    ///
    /// Panics if `port` is zero.
    pub fn new(port: u32) -> Self {
        assert!(port >= 1, "ports are 1-based");
        PortId(port)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

/// Serialized size of a [`WireMessage`].
pub const WIRE_MESSAGE_LEN: usize = 12;

/// The only payload a node ever broadcasts: its current value and phase.
///
/// No sender identity is carried; receivers learn the sender's local port
/// from the delivery.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub value: Value,
    pub phase: Phase,
}

impl WireMessage {
    pub fn new(value: Value, phase: Phase) -> Self {
        WireMessage { value, phase }
    }

    /// Little-endian IEEE-754 value followed by a little-endian `u32` phase.
    pub fn to_bytes(&self) -> [u8; WIRE_MESSAGE_LEN] {
        let mut out = [0u8; WIRE_MESSAGE_LEN];
        out[..8].copy_from_slice(&self.value.to_le_bytes());
        out[8..].copy_from_slice(&self.phase.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CoreError> {
        if bytes.len() != WIRE_MESSAGE_LEN {
            return Err(CoreError::MessageLength {
                expected: WIRE_MESSAGE_LEN,
                actual: bytes.len(),
            });
        }
        let mut value = [0u8; 8];
        value.copy_from_slice(&bytes[..8]);
        let mut phase = [0u8; 4];
        phase.copy_from_slice(&bytes[8..]);
        Ok(WireMessage {
            value: f64::from_le_bytes(value),
            phase: u32::from_le_bytes(phase),
        })
    }
}

/// Directed edges `(src, dst)` chosen for one round. Never contains a self-loop.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(NodeId, NodeId)>", into = "Vec<(NodeId, NodeId)>")]
pub struct EdgeSet(BTreeSet<(NodeId, NodeId)>);

impl EdgeSet {
    pub fn new() -> Self {
        EdgeSet(BTreeSet::new())
    }

    /// Every ordered pair of distinct nodes.
    pub fn complete(n: u32) -> Self {
        let mut edges = BTreeSet::new();
        for src in all_nodes(n) {
            for dst in all_nodes(n) {
                if src != dst {
                    edges.insert((src, dst));
                }
            }
        }
        EdgeSet(edges)
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self, CoreError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut set = EdgeSet::new();
        for (src, dst) in pairs {
            if src == 0 || dst == 0 {
                return Err(CoreError::NodeOutOfRange {
                    node: 0,
                    n: src.max(dst),
                });
            }
            set.insert(NodeId::new(src), NodeId::new(dst))?;
        }
        Ok(set)
    }

    /// Returns whether the edge was newly added.
    pub fn insert(&mut self, src: NodeId, dst: NodeId) -> Result<bool, CoreError> {
        if src == dst {
            return Err(CoreError::SelfLoop(src));
        }
        Ok(self.0.insert((src, dst)))
    }

    pub fn remove(&mut self, src: NodeId, dst: NodeId) -> bool {
        self.0.remove(&(src, dst))
    }

    pub fn contains(&self, src: NodeId, dst: NodeId) -> bool {
        self.0.contains(&(src, dst))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Edges in `(src, dst)` order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.0.iter().copied()
    }

    pub fn in_neighbors(&self, dst: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().filter(move |e| e.1 == dst).map(|e| e.0)
    }

    pub fn out_neighbors(&self, src: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.0
            .range((src, NodeId(0))..=(src, NodeId(u32::MAX)))
            .map(|e| e.1)
    }

    /// Largest node id mentioned, or 0 when empty.
    pub fn max_node(&self) -> u32 {
        self.0.iter().map(|e| e.0 .0.max(e.1 .0)).max().unwrap_or(0)
    }

    pub fn extend(&mut self, other: &EdgeSet) {
        self.0.extend(other.0.iter().copied());
    }
}

impl TryFrom<Vec<(NodeId, NodeId)>> for EdgeSet {
    type Error = CoreError;

    fn try_from(pairs: Vec<(NodeId, NodeId)>) -> Result<Self, Self::Error> {
        let mut set = EdgeSet::new();
        for (src, dst) in pairs {
            if src.0 == 0 || dst.0 == 0 {
                return Err(CoreError::NodeOutOfRange { node: 0, n: 0 });
            }
            set.insert(src, dst)?;
        }
        Ok(set)
    }
}

impl From<EdgeSet> for Vec<(NodeId, NodeId)> {
    fn from(set: EdgeSet) -> Self {
        set.0.into_iter().collect()
    }
}

/// Which consensus state machine the nodes run.
///
/// The eager variants lower the phase-advance threshold by one; they exist to
/// exhibit the "decides wrongly" branch of the impossibility constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "DAC")]
    Dac,
    #[serde(rename = "DBAC")]
    Dbac,
    #[serde(rename = "EagerDAC")]
    EagerDac,
    #[serde(rename = "EagerDBAC")]
    EagerDbac,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dac => "DAC",
            Algorithm::Dbac => "DBAC",
            Algorithm::EagerDac => "EagerDAC",
            Algorithm::EagerDbac => "EagerDBAC",
        }
    }

    /// True for the Byzantine-tolerant family.
    pub fn is_byzantine(self) -> bool {
        matches!(self, Algorithm::Dbac | Algorithm::EagerDbac)
    }

    pub fn is_eager(self) -> bool {
        matches!(self, Algorithm::EagerDac | Algorithm::EagerDbac)
    }

    /// Minimum `n` for which the (non-eager) algorithm is proven correct.
    pub fn min_nodes(self, f: u32) -> u32 {
        if self.is_byzantine() {
            5 * f + 1
        } else {
            2 * f + 1
        }
    }

    fn resilience_rule(self) -> &'static str {
        if self.is_byzantine() {
            "n ≥ 5f+1"
        } else {
            "n ≥ 2f+1"
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Algorithm {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dac" => Ok(Algorithm::Dac),
            "dbac" => Ok(Algorithm::Dbac),
            "eagerdac" | "eager-dac" => Ok(Algorithm::EagerDac),
            "eagerdbac" | "eager-dbac" => Ok(Algorithm::EagerDbac),
            _ => Err(CoreError::param(
                "algorithm",
                format!("unknown algorithm `{s}`"),
            )),
        }
    }
}

/// Parameters of one simulation. The schedule and the fault plan are passed
/// to the engine separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u32,
    pub f: u32,
    pub epsilon: f64,
    /// `None` selects the engine default (10 · T · p_end).
    #[serde(default)]
    pub max_rounds: Option<u32>,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub inputs: Vec<Value>,
    /// Skip the resilience rule; used by impossibility demonstrations.
    #[serde(default)]
    pub allow_insufficient: bool,
}

/// One violated configuration rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
    pub message: String,
}

impl Violation {
    pub(crate) fn new(field: &str, rule: &str, message: String) -> Self {
        Violation {
            field: field.to_string(),
            rule: rule.to_string(),
            message,
        }
    }
}

/// Every violated invariant of `cfg`; empty iff the configuration is runnable.
pub fn validate_config(cfg: &SimConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if cfg.n < 2 {
        out.push(Violation::new(
            "n",
            "n ≥ 2",
            format!("n = {} is too small", cfg.n),
        ));
    }
    if !cfg.allow_insufficient && cfg.n < cfg.algorithm.min_nodes(cfg.f) {
        out.push(Violation::new(
            "n",
            cfg.algorithm.resilience_rule(),
            format!(
                "{} with f = {} needs n ≥ {}, got n = {}",
                cfg.algorithm,
                cfg.f,
                cfg.algorithm.min_nodes(cfg.f),
                cfg.n
            ),
        ));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        out.push(Violation::new(
            "epsilon",
            "0 < ε < 1",
            format!("epsilon = {} is outside (0, 1)", cfg.epsilon),
        ));
    }
    if cfg.inputs.len() != cfg.n as usize {
        out.push(Violation::new(
            "inputs",
            "|inputs| = n",
            format!("{} inputs for n = {}", cfg.inputs.len(), cfg.n),
        ));
    }
    for (i, x) in cfg.inputs.iter().enumerate() {
        if !(0.0..=1.0).contains(x) {
            out.push(Violation::new(
                "inputs",
                "0 ≤ x ≤ 1",
                format!("input of node {} is {}", i + 1, x),
            ));
        }
    }
    if cfg.max_rounds == Some(0) {
        out.push(Violation::new(
            "max_rounds",
            "max_rounds ≥ 1",
            "max_rounds must be positive".to_string(),
        ));
    }
    out
}

/// Per-receiver bijections between node labels and local ports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortNumbering {
    /// `port_of[receiver][sender]`
    port_of: Vec<Vec<PortId>>,
    /// `sender_on[receiver][port]`
    sender_on: Vec<Vec<NodeId>>,
}

impl PortNumbering {
    pub fn n(&self) -> u32 {
        self.port_of.len() as u32
    }

    /// Port at which `receiver` hears `sender`.
    pub fn port_of(&self, receiver: NodeId, sender: NodeId) -> PortId {
        self.port_of[receiver.index()][sender.index()]
    }

    pub fn sender_on(&self, receiver: NodeId, port: PortId) -> NodeId {
        self.sender_on[receiver.index()][port.index()]
    }

    /// The port a node uses for its own value.
    pub fn self_port(&self, node: NodeId) -> PortId {
        self.port_of(node, node)
    }
}

/// Builds an independently shuffled bijection per node, deterministic in
/// `(n, seed)`.
pub fn build_port_numbering(n: u32, seed: u64) -> PortNumbering {
    let mut port_of = Vec::with_capacity(n as usize);
    let mut sender_on = Vec::with_capacity(n as usize);
    for receiver in all_nodes(n) {
        let mut rng = rng::stream(seed, rng::DOMAIN_PORTS, n as u64, receiver.get() as u64);
        let mut ports: Vec<PortId> = (1..=n).map(PortId).collect();
        ports.shuffle(&mut rng);
        let mut inverse = alloc::vec![NodeId(0); n as usize];
        for (sender_idx, port) in ports.iter().enumerate() {
            inverse[port.index()] = NodeId::from_index(sender_idx);
        }
        port_of.push(ports);
        sender_on.push(inverse);
    }
    PortNumbering { port_of, sender_on }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg(n: u32, f: u32, algorithm: Algorithm) -> SimConfig {
        SimConfig {
            n,
            f,
            epsilon: 0.1,
            max_rounds: None,
            seed: 0,
            algorithm,
            inputs: vec![0.5; n as usize],
            allow_insufficient: false,
        }
    }

    #[test]
    fn resilience_rules() {
        assert!(validate_config(&cfg(7, 3, Algorithm::Dac)).is_empty());
        let v = validate_config(&cfg(6, 3, Algorithm::Dac));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "n ≥ 2f+1");
        assert!(validate_config(&cfg(6, 1, Algorithm::Dbac)).is_empty());
        assert_eq!(
            validate_config(&cfg(5, 1, Algorithm::Dbac))[0].rule,
            "n ≥ 5f+1"
        );

        let mut flagged = cfg(6, 3, Algorithm::Dac);
        flagged.allow_insufficient = true;
        assert!(validate_config(&flagged).is_empty());
    }

    #[test]
    fn validation_collects_every_violation() {
        let mut c = cfg(6, 3, Algorithm::Dac);
        c.epsilon = 0.0;
        c.inputs = vec![0.0, 1.5];
        let fields: Vec<_> = validate_config(&c).into_iter().map(|v| v.field).collect();
        assert_eq!(fields, ["n", "epsilon", "inputs", "inputs"]);
    }

    #[test]
    fn wire_message_layout() {
        let msg = WireMessage::new(0.5, 3);
        let bytes = msg.to_bytes();
        assert_eq!(&bytes[..8], &0.5f64.to_le_bytes());
        assert_eq!(&bytes[8..], &[3, 0, 0, 0]);
        assert_eq!(WireMessage::from_bytes(&bytes).unwrap(), msg);
        assert!(matches!(
            WireMessage::from_bytes(&bytes[..11]),
            Err(CoreError::MessageLength { actual: 11, .. })
        ));
    }

    #[test]
    fn edge_set_rejects_self_loops() {
        let mut e = EdgeSet::new();
        assert_eq!(
            e.insert(NodeId::new(2), NodeId::new(2)),
            Err(CoreError::SelfLoop(NodeId::new(2)))
        );
        assert!(EdgeSet::from_pairs([(1, 2), (3, 3)]).is_err());
        let e = EdgeSet::complete(4);
        assert_eq!(e.len(), 12);
        assert_eq!(e.in_neighbors(NodeId::new(1)).count(), 3);
        assert_eq!(
            e.out_neighbors(NodeId::new(2)).collect::<Vec<_>>(),
            [NodeId::new(1), NodeId::new(3), NodeId::new(4)]
        );
    }

    #[test]
    fn port_numbering_is_a_deterministic_bijection() {
        let ports = build_port_numbering(3, 0);
        for receiver in all_nodes(3) {
            let mut seen: Vec<u32> = all_nodes(3)
                .map(|s| ports.port_of(receiver, s).get())
                .collect();
            seen.sort();
            assert_eq!(seen, [1, 2, 3]);
            for sender in all_nodes(3) {
                assert_eq!(
                    ports.sender_on(receiver, ports.port_of(receiver, sender)),
                    sender
                );
            }
        }
        assert_eq!(ports, build_port_numbering(3, 0));
        assert_ne!(ports, build_port_numbering(3, 1));
    }
}
