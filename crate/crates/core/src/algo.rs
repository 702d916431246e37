//! Per-node consensus state machines.
//!
//! [`DacState`] tolerates crashes: it averages the extremes of ⌊n/2⌋+1
//! same-phase values, or jumps straight to any higher-phase state it hears.
//! [`DbacState`] tolerates Byzantine nodes: it collects ⌊(n+3f)/2⌋+1 values
//! from its phase or later and averages the (f+1)-st lowest and highest.
//! Both only ever look at the receiving port, never at a sender identity.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{Algorithm, Phase, PortId, Value, WireMessage};
use crate::CoreError;

fn check_epsilon(epsilon: f64) -> Result<(), CoreError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(CoreError::param(
            "epsilon",
            format!("{epsilon} outside (0, 1)"),
        ))
    }
}

/// Phases DAC needs for ε-agreement at rate 1/2: ⌈log2(1/ε)⌉.
pub fn p_end_crash(epsilon: f64) -> Result<Phase, CoreError> {
    check_epsilon(epsilon)?;
    // Powers of two are exact, so the smallest k with 2^-k ≤ ε is found exactly.
    let mut k = 0;
    let mut bound = 1.0f64;
    while bound > epsilon {
        bound *= 0.5;
        k += 1;
    }
    Ok(k)
}

/// Phases DBAC needs for ε-agreement at rate 1−2^−n: ⌈ln ε / ln(1−2^−n)⌉.
pub fn p_end_byz(epsilon: f64, n: u32) -> Result<Phase, CoreError> {
    check_epsilon(epsilon)?;
    if n == 0 {
        return Err(CoreError::param("n", "n must be at least 1"));
    }
    let shrink = libm::ldexp(1.0, -(n.min(1100) as i32));
    let log_rate = libm::log1p(-shrink);
    let estimate = libm::ceil(libm::log(epsilon) / log_rate);
    if !(estimate <= u32::MAX as f64) {
        return Err(CoreError::param(
            "epsilon",
            format!("p_end for n = {n} exceeds the phase range"),
        ));
    }
    let mut k = estimate as u32;
    if n <= 52 {
        // The rate 1 − 2^-n is exact here; settle the ceiling against
        // rounding in the logarithm ratio.
        let rate = 1.0 - shrink;
        let pow = |k: u32| libm::pow(rate, k as f64);
        while k > 0 && pow(k - 1) <= epsilon {
            k -= 1;
        }
        while pow(k) > epsilon {
            k += 1;
        }
    }
    Ok(k)
}

/// Ports heard from in the current phase. The node's own port is always set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivedPorts {
    bits: Vec<bool>,
    count: u32,
    own: PortId,
}

impl ReceivedPorts {
    pub fn new(n: u32, own: PortId) -> Self {
        let mut r = ReceivedPorts {
            bits: alloc::vec![false; n as usize],
            count: 0,
            own,
        };
        r.reset();
        r
    }

    pub fn reset(&mut self) {
        self.bits.iter_mut().for_each(|b| *b = false);
        self.bits[self.own.index()] = true;
        self.count = 1;
    }

    /// Marks `port`; false if it was already marked or is out of range.
    pub fn mark(&mut self, port: PortId) -> bool {
        match self.bits.get_mut(port.index()) {
            Some(bit) if !*bit => {
                *bit = true;
                self.count += 1;
                true
            }
            _ => false,
        }
    }

    pub fn is_marked(&self, port: PortId) -> bool {
        self.bits.get(port.index()).copied().unwrap_or(false)
    }

    /// Number of distinct ports heard, including the node's own.
    pub fn count(&self) -> u32 {
        self.count
    }
}

/// How a node left its phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    /// Threshold reached; the value was recomputed.
    Advance,
    /// Copied a higher-phase state.
    Jump,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseChange {
    pub from: Phase,
    pub to: Phase,
    pub value: Value,
    pub kind: ChangeKind,
}

/// DAC node: jump to higher phases, average the extremes of a majority.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DacState {
    pub v: Value,
    pub v_min: Value,
    pub v_max: Value,
    pub p: Phase,
    pub received: ReceivedPorts,
    pub output: Option<Value>,
    pub p_end: Phase,
    pub threshold: u32,
}

impl DacState {
    pub fn new(x: Value, n: u32, own: PortId, p_end: Phase, threshold: u32) -> Self {
        DacState {
            v: x,
            v_min: x,
            v_max: x,
            p: 0,
            received: ReceivedPorts::new(n, own),
            output: None,
            p_end,
            threshold,
        }
    }

    fn reset(&mut self) {
        self.received.reset();
        self.v_min = self.v;
        self.v_max = self.v;
    }

    fn store(&mut self, value: Value) {
        if value < self.v_min {
            self.v_min = value;
        } else if value > self.v_max {
            self.v_max = value;
        }
    }

    pub fn handle_message(&mut self, port: PortId, msg: WireMessage) -> Option<PhaseChange> {
        if self.output.is_some() {
            return None;
        }
        let from = self.p;
        let kind = if msg.phase > self.p {
            self.v = msg.value;
            self.p = msg.phase;
            self.reset();
            ChangeKind::Jump
        } else if msg.phase == self.p && self.received.mark(port) {
            self.store(msg.value);
            if self.received.count() < self.threshold {
                return None;
            }
            self.v = (self.v_min + self.v_max) / 2.0;
            self.p += 1;
            self.reset();
            ChangeKind::Advance
        } else {
            return None;
        };
        if self.p >= self.p_end {
            self.p = self.p_end;
            self.output = Some(self.v);
        }
        Some(PhaseChange {
            from,
            to: self.p,
            value: self.v,
            kind,
        })
    }
}

/// DBAC node: trimmed midpoint over values from its phase or later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbacState {
    pub v: Value,
    pub p: Phase,
    pub received: ReceivedPorts,
    /// Ascending; at most `f + 1` entries.
    pub r_low: Vec<Value>,
    /// Descending; at most `f + 1` entries.
    pub r_high: Vec<Value>,
    pub output: Option<Value>,
    pub p_end: Phase,
    pub threshold: u32,
    pub f: u32,
}

impl DbacState {
    pub fn new(x: Value, n: u32, f: u32, own: PortId, p_end: Phase, threshold: u32) -> Self {
        let mut s = DbacState {
            v: x,
            p: 0,
            received: ReceivedPorts::new(n, own),
            r_low: Vec::with_capacity(f as usize + 2),
            r_high: Vec::with_capacity(f as usize + 2),
            output: None,
            p_end,
            threshold,
            f,
        };
        s.reset();
        s
    }

    /// Clears the phase's records and stores the node's own value.
    fn reset(&mut self) {
        self.received.reset();
        self.r_low.clear();
        self.r_high.clear();
        self.store(self.v);
    }

    fn store(&mut self, value: Value) {
        let cap = self.f as usize + 1;
        let at = self.r_low.partition_point(|&x| x <= value);
        self.r_low.insert(at, value);
        self.r_low.truncate(cap);
        let at = self.r_high.partition_point(|&x| x >= value);
        self.r_high.insert(at, value);
        self.r_high.truncate(cap);
    }

    pub fn handle_message(&mut self, port: PortId, msg: WireMessage) -> Option<PhaseChange> {
        if self.output.is_some() {
            return None;
        }
        if msg.phase >= self.p && self.received.mark(port) {
            self.store(msg.value);
        }
        if self.received.count() < self.threshold {
            return None;
        }
        let low = *self.r_low.last().expect("own value is always stored");
        let high = *self.r_high.last().expect("own value is always stored");
        let from = self.p;
        self.v = (low + high) / 2.0;
        self.p += 1;
        self.reset();
        if self.p == self.p_end {
            self.output = Some(self.v);
        }
        Some(PhaseChange {
            from,
            to: self.p,
            value: self.v,
            kind: ChangeKind::Advance,
        })
    }
}

/// State of one fault-free node running either algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum NodeState {
    Dac(DacState),
    Dbac(DbacState),
}

/// Phase-advance threshold for `algorithm` with `n` nodes and `f` faults.
pub fn threshold(algorithm: Algorithm, n: u32, f: u32) -> u32 {
    match algorithm {
        Algorithm::Dac => n / 2 + 1,
        Algorithm::EagerDac => n / 2,
        Algorithm::Dbac => (n + 3 * f) / 2 + 1,
        Algorithm::EagerDbac => (n + 3 * f) / 2,
    }
}

/// Terminal phase for `algorithm` at accuracy `epsilon`.
pub fn p_end(algorithm: Algorithm, epsilon: f64, n: u32) -> Result<Phase, CoreError> {
    if algorithm.is_byzantine() {
        p_end_byz(epsilon, n)
    } else {
        p_end_crash(epsilon)
    }
}

/// Initial state of a node with input `x` that hears itself on port `own`.
pub fn make_node(
    algorithm: Algorithm,
    x: Value,
    n: u32,
    f: u32,
    epsilon: f64,
    own: PortId,
) -> Result<NodeState, CoreError> {
    if own.get() > n {
        return Err(CoreError::param(
            "port",
            format!("own port {} outside [1, {n}]", own.get()),
        ));
    }
    let p_end = p_end(algorithm, epsilon, n)?;
    let threshold = threshold(algorithm, n, f);
    Ok(if algorithm.is_byzantine() {
        NodeState::Dbac(DbacState::new(x, n, f, own, p_end, threshold))
    } else {
        NodeState::Dac(DacState::new(x, n, own, p_end, threshold))
    })
}

impl NodeState {
    pub fn phase(&self) -> Phase {
        match self {
            NodeState::Dac(s) => s.p,
            NodeState::Dbac(s) => s.p,
        }
    }

    pub fn value(&self) -> Value {
        match self {
            NodeState::Dac(s) => s.v,
            NodeState::Dbac(s) => s.v,
        }
    }

    pub fn output(&self) -> Option<Value> {
        match self {
            NodeState::Dac(s) => s.output,
            NodeState::Dbac(s) => s.output,
        }
    }

    /// Distinct ports heard in the current phase, own port included.
    pub fn popcount(&self) -> u32 {
        match self {
            NodeState::Dac(s) => s.received.count(),
            NodeState::Dbac(s) => s.received.count(),
        }
    }

    pub fn handle_message(&mut self, port: PortId, msg: WireMessage) -> Option<PhaseChange> {
        match self {
            NodeState::Dac(s) => s.handle_message(port, msg),
            NodeState::Dbac(s) => s.handle_message(port, msg),
        }
    }

    /// The broadcast payload: current value and phase, nothing else.
    pub fn broadcast_payload(&self) -> WireMessage {
        WireMessage::new(self.value(), self.phase())
    }
}
