//! Trace interpretation: per-phase multisets, consensus verdicts and the
//! convergence lemmas checked against real executions.
//!
//! `V_p` lists the phase-`p` states in the order nodes reached phase `p`
//! (ties by round, then node id). A DAC node that jumps from `p` to `q`
//! contributes its phase-`q` value to every skipped phase, ordered after all
//! nodes that actually computed that phase. `W_p` is `V_p` sorted by value.
//! In the crash model every non-Byzantine node counts, including nodes that
//! crash later; in the Byzantine model only fault-free nodes count.
//!
//! Round-indexed quantities use checkpoints: checkpoint 0 is the initial
//! state and checkpoint `t` the state after round `t`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::algo::ChangeKind;
use crate::engine::{Outcome, Trace};
use crate::faults::apply_crash;
use crate::model::{all_nodes, Algorithm, NodeId, Phase, Round, Value};
use crate::{CoreError, TOLERANCE};

/// Tolerance for comparing the two envelope forms, which are pure arithmetic.
pub const ENVELOPE_FORM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultModel {
    Crash,
    Byzantine,
}

impl FaultModel {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        if algorithm.is_byzantine() {
            FaultModel::Byzantine
        } else {
            FaultModel::Crash
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub node: NodeId,
    pub value: Value,
    /// Round in which the node entered the phase; 0 for the initial phase.
    pub round: Round,
    /// Filled in for a phase the node skipped by jumping.
    pub imputed: bool,
}

/// Per-phase multisets of one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTable {
    pub fault_model: FaultModel,
    pub n: u32,
    pub f: u32,
    pub p_end: Phase,
    /// Number of fault-free nodes.
    pub h: u32,
    pub terminated: bool,
    phases: Vec<Vec<PhaseEntry>>,
    complete: Vec<bool>,
    /// `k[s][p]`: fault-free nodes at phase ≥ p at checkpoint `s`.
    k: Vec<Vec<u32>>,
}

impl PhaseTable {
    /// Number of phases with at least one entry.
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    /// Chronological `V_p` (empty past the last reached phase).
    pub fn v(&self, p: Phase) -> &[PhaseEntry] {
        self.phases.get(p as usize).map_or(&[], Vec::as_slice)
    }

    /// `W_p`: the values of `V_p` in ascending order.
    pub fn w(&self, p: Phase) -> Vec<Value> {
        let mut w: Vec<Value> = self.v(p).iter().map(|e| e.value).collect();
        w.sort_by(f64::total_cmp);
        w
    }

    /// True when every node still alive at the end of the trace has reached
    /// phase `p`, so `V_p` is final.
    pub fn is_complete(&self, p: Phase) -> bool {
        self.complete.get(p as usize).copied().unwrap_or(false)
    }

    pub fn checkpoints(&self) -> usize {
        self.k.len()
    }

    /// `k(s, p)`.
    pub fn k(&self, s: usize, p: Phase) -> u32 {
        self.k[s].get(p as usize).copied().unwrap_or(0)
    }

    /// `V_s^(p)`: the first `k(s, p)` entries of `V_p`.
    pub fn v_at(&self, s: usize, p: Phase) -> &[PhaseEntry] {
        let v = self.v(p);
        &v[..(self.k(s, p) as usize).min(v.len())]
    }
}

pub fn build_phase_table(trace: &Trace, model: FaultModel) -> Result<PhaseTable, CoreError> {
    let n = trace.n();
    let malformed = |msg: String| Err(CoreError::MalformedTrace(msg));
    if trace.initial.len() != n as usize {
        return malformed(format!(
            "{} initial states for n = {n}",
            trace.initial.len()
        ));
    }
    for (i, r) in trace.rounds.iter().enumerate() {
        if r.t as usize != i + 1 {
            return malformed(format!("round {} recorded at position {}", r.t, i + 1));
        }
        if r.states_after.len() != n as usize {
            return malformed(format!("round {} has {} states", r.t, r.states_after.len()));
        }
        if let Some(bad) = r
            .transitions
            .iter()
            .find(|x| x.node.get() > n || x.to <= x.from)
        {
            return malformed(format!(
                "bad transition at node {} in round {}",
                bad.node, r.t
            ));
        }
    }

    let counted = |v: NodeId| match model {
        FaultModel::Crash => !trace.faults.is_byzantine(v),
        FaultModel::Byzantine => trace.is_fault_free(v),
    };

    let mut main: Vec<Vec<PhaseEntry>> = alloc::vec![Vec::new()];
    let mut skipped: Vec<Vec<PhaseEntry>> = alloc::vec![Vec::new()];
    let grow = |table: &mut Vec<Vec<PhaseEntry>>, p: Phase| {
        while table.len() <= p as usize {
            table.push(Vec::new());
        }
    };
    for node in all_nodes(n).filter(|&v| counted(v)) {
        main[0].push(PhaseEntry {
            node,
            value: trace.initial[node.index()].value,
            round: 0,
            imputed: false,
        });
    }
    for r in &trace.rounds {
        for x in r.transitions.iter().filter(|x| counted(x.node)) {
            let entry = PhaseEntry {
                node: x.node,
                value: x.value,
                round: r.t,
                imputed: false,
            };
            grow(&mut main, x.to);
            main[x.to as usize].push(entry);
            if x.kind == ChangeKind::Jump {
                grow(&mut skipped, x.to);
                for p in x.from + 1..x.to {
                    skipped[p as usize].push(PhaseEntry {
                        imputed: true,
                        ..entry
                    });
                }
            }
        }
    }
    grow(&mut skipped, main.len() as Phase - 1);
    let key = |e: &PhaseEntry| (e.round, e.node);
    let mut phases: Vec<Vec<PhaseEntry>> = Vec::with_capacity(main.len());
    for (mut real, mut imputed) in main.into_iter().zip(skipped) {
        real.sort_by_key(key);
        imputed.sort_by_key(key);
        real.extend(imputed);
        phases.push(real);
    }
    while phases.last().is_some_and(Vec::is_empty) {
        phases.pop();
    }

    let last = trace.last_checkpoint();
    let last_round = trace.rounds.len() as Round;
    let alive_phases: Vec<Phase> = all_nodes(n)
        .filter(|&v| counted(v) && !apply_crash(&trace.faults, v, last_round.max(1)))
        .map(|v| last[v.index()].phase)
        .collect();
    let complete = (0..phases.len() as Phase)
        .map(|p| alive_phases.iter().all(|&q| q >= p))
        .collect();

    let max_phase = phases.len();
    let k = (0..=trace.rounds.len())
        .map(|s| {
            let snap = trace.checkpoint(s);
            (0..max_phase as Phase)
                .map(|p| {
                    all_nodes(n)
                        .filter(|&v| trace.is_fault_free(v) && snap[v.index()].phase >= p)
                        .count() as u32
                })
                .collect()
        })
        .collect();

    Ok(PhaseTable {
        fault_model: model,
        n,
        f: trace.config.f,
        p_end: trace.p_end,
        h: all_nodes(n).filter(|&v| trace.is_fault_free(v)).count() as u32,
        terminated: matches!(trace.outcome, Outcome::Terminated { .. }),
        phases,
        complete,
        k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeInterval {
    pub min: Value,
    pub max: Value,
    pub range: Value,
}

impl RangeInterval {
    pub fn contains(&self, other: &RangeInterval, tol: f64) -> bool {
        other.min >= self.min - tol && other.max <= self.max + tol
    }
}

/// `[min, max]` and `max − min` of a non-empty multiset.
pub fn range_interval<I>(values: I) -> Result<RangeInterval, CoreError>
where
    I: IntoIterator<Item = Value>,
{
    let mut iter = values.into_iter();
    let first = iter.next().ok_or(CoreError::EmptyMultiset)?;
    let (min, max) = iter.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
    Ok(RangeInterval {
        min,
        max,
        range: max - min,
    })
}

fn entries_interval(entries: &[PhaseEntry]) -> Option<RangeInterval> {
    range_interval(entries.iter().map(|e| e.value)).ok()
}

/// First counterexample found by a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Rate {
        phase: Phase,
        range: Value,
        next_range: Value,
        rho: f64,
    },
    Inclusion {
        phase: Phase,
        k: usize,
        node: NodeId,
        value: Value,
        lo: Value,
        hi: Value,
    },
    Nesting {
        checkpoint: usize,
        p: Phase,
        q: Phase,
        outer: Option<RangeInterval>,
        inner: RangeInterval,
    },
    KNotMonotoneInTime {
        checkpoint: usize,
        phase: Phase,
        before: u32,
        after: u32,
    },
    KNotMonotoneInPhase {
        checkpoint: usize,
        phase: Phase,
        k: u32,
        k_next: u32,
    },
    Prefix {
        checkpoint: usize,
        phase: Phase,
        k: u32,
        entered: u32,
    },
    Saturation {
        phase: Phase,
        k: u32,
        h: u32,
    },
    Envelope {
        phase: Phase,
        k: usize,
        node: NodeId,
        value: Value,
        lo: Value,
        hi: Value,
    },
    EnvelopeForms {
        phase: Phase,
        k: u32,
        recursive: (Value, Value),
        explicit: (Value, Value),
    },
    Message {
        message: String,
    },
}

/// Outcome of one lemma or property check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub pass: bool,
    /// Number of individual comparisons made.
    pub checked: u64,
    pub witness: Option<Witness>,
}

impl LemmaCheck {
    fn new() -> Self {
        LemmaCheck {
            pass: true,
            checked: 0,
            witness: None,
        }
    }

    fn record(&mut self, ok: bool, witness: impl FnOnce() -> Witness) {
        self.checked += 1;
        if !ok && self.pass {
            self.pass = false;
            self.witness = Some(witness());
        }
    }

    fn failed(message: String) -> Self {
        LemmaCheck {
            pass: false,
            checked: 0,
            witness: Some(Witness::Message { message }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRate {
    pub phase: Phase,
    pub range: Value,
    pub next_range: Value,
    /// `next_range / range`, 0 when `range` is 0.
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rho: f64,
    pub phases: Vec<PhaseRate>,
    pub check: LemmaCheck,
}

/// `range(V_{p+1}) ≤ ρ · range(V_p) + tol` for every phase `p` whose `V_p`
/// is final.
pub fn check_convergence_rate(table: &PhaseTable, rho: f64) -> RateReport {
    let mut check = LemmaCheck::new();
    let mut phases = Vec::new();
    for p in 0..table.phase_count() as Phase {
        if !table.is_complete(p) {
            break;
        }
        let (Some(cur), Some(next)) = (
            entries_interval(table.v(p)),
            entries_interval(table.v(p + 1)),
        ) else {
            continue;
        };
        let pass = next.range <= rho * cur.range + TOLERANCE;
        let ratio = if cur.range > 0.0 {
            next.range / cur.range
        } else {
            0.0
        };
        phases.push(PhaseRate {
            phase: p,
            range: cur.range,
            next_range: next.range,
            ratio,
            pass,
        });
        check.record(pass, || Witness::Rate {
            phase: p,
            range: cur.range,
            next_range: next.range,
            rho,
        });
    }
    RateReport { rho, phases, check }
}

/// Bounds every phase-`(p+1)` value may take given `W_p`:
/// `[(w_1 + w_{⌊n/2⌋+1})/2, (w_{n_p−⌊n/2⌋} + w_{n_p})/2]`.
pub fn lemma1_interval(w: &[Value], n: u32) -> Option<(Value, Value)> {
    let half = (n / 2) as usize;
    let np = w.len();
    if np < half + 1 {
        return None;
    }
    Some(((w[0] + w[half]) / 2.0, (w[np - half - 1] + w[np - 1]) / 2.0))
}

/// Every entry of `V_{p+1}` lies in the DAC interval computed from `W_p`.
pub fn check_lemma1_inclusion(table: &PhaseTable, n: u32) -> LemmaCheck {
    let mut check = LemmaCheck::new();
    for p in 0..table.phase_count() as Phase {
        if !table.is_complete(p) {
            break;
        }
        let Some((lo, hi)) = lemma1_interval(&table.w(p), n) else {
            continue;
        };
        for (k, e) in table.v(p + 1).iter().enumerate() {
            check.record(
                e.value >= lo - TOLERANCE && e.value <= hi + TOLERANCE,
                || Witness::Inclusion {
                    phase: p + 1,
                    k: k + 1,
                    node: e.node,
                    value: e.value,
                    lo,
                    hi,
                },
            );
        }
    }
    check
}

/// Higher-phase states lie within lower-phase states at every checkpoint,
/// `k(s, p)` is monotone in both arguments, `V_s^(p)` is exactly the set of
/// phase-`p` entries made by checkpoint `s`, and a terminated trace ends with
/// `k = h` for every phase up to `p_end`.
pub fn check_interval_nesting(table: &PhaseTable) -> LemmaCheck {
    let mut check = LemmaCheck::new();
    let phases = table.phase_count() as Phase;
    for s in 0..table.checkpoints() {
        let intervals: Vec<Option<RangeInterval>> = (0..phases)
            .map(|p| entries_interval(table.v_at(s, p)))
            .collect();
        for q in 0..phases {
            let Some(inner) = intervals[q as usize] else {
                continue;
            };
            for p in 0..q {
                let outer = intervals[p as usize];
                check.record(outer.is_some_and(|o| o.contains(&inner, TOLERANCE)), || {
                    Witness::Nesting {
                        checkpoint: s,
                        p,
                        q,
                        outer,
                        inner,
                    }
                });
            }
        }
        for p in 0..phases {
            let k = table.k(s, p);
            if s + 1 < table.checkpoints() {
                let after = table.k(s + 1, p);
                check.record(after >= k, || Witness::KNotMonotoneInTime {
                    checkpoint: s,
                    phase: p,
                    before: k,
                    after,
                });
            }
            if p + 1 < phases {
                let k_next = table.k(s, p + 1);
                check.record(k_next <= k, || Witness::KNotMonotoneInPhase {
                    checkpoint: s,
                    phase: p,
                    k,
                    k_next,
                });
            }
            if table.fault_model == FaultModel::Byzantine {
                let entered = table.v(p).iter().filter(|e| e.round as usize <= s).count() as u32;
                check.record(entered == k, || Witness::Prefix {
                    checkpoint: s,
                    phase: p,
                    k,
                    entered,
                });
            }
        }
    }
    if table.terminated {
        let s = table.checkpoints() - 1;
        for p in 0..=table.p_end {
            let k = table.k(s, p);
            check.record(k == table.h, || Witness::Saturation {
                phase: p,
                k,
                h: table.h,
            });
        }
    }
    check
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeForm {
    Recursive,
    Explicit,
}

/// `(a_k, A_k)` for sorted fault-free phase values `w`: both start at
/// `w_{2f+1}` and halve their distance to `w_1` and `w_h` respectively.
pub fn envelope(
    w: &[Value],
    f: u32,
    k: u32,
    form: EnvelopeForm,
) -> Result<(Value, Value), CoreError> {
    let needed = 2 * f as usize + 1;
    if w.len() < needed {
        return Err(CoreError::InsufficientFaultFree {
            needed,
            available: w.len(),
        });
    }
    let low = w[0];
    let high = w[w.len() - 1];
    let mid = w[needed - 1];
    Ok(match form {
        EnvelopeForm::Recursive => {
            let (mut a, mut big_a) = (mid, mid);
            for _ in 0..k {
                a = (a + low) / 2.0;
                big_a = (big_a + high) / 2.0;
            }
            (a, big_a)
        }
        EnvelopeForm::Explicit => {
            let scale = libm::ldexp(1.0, -(k.min(2000) as i32));
            (low + scale * (mid - low), high + scale * (mid - high))
        }
    })
}

/// Recursive and explicit envelope forms agree for every `k ≤ max_k`.
pub fn check_envelope_forms(table: &PhaseTable, max_k: u32) -> LemmaCheck {
    let mut check = LemmaCheck::new();
    for p in 0..table.phase_count() as Phase {
        let w = table.w(p);
        for k in 0..=max_k {
            let (Ok(r), Ok(e)) = (
                envelope(&w, table.f, k, EnvelopeForm::Recursive),
                envelope(&w, table.f, k, EnvelopeForm::Explicit),
            ) else {
                break;
            };
            let ok = libm::fabs(r.0 - e.0) <= ENVELOPE_FORM_TOLERANCE
                && libm::fabs(r.1 - e.1) <= ENVELOPE_FORM_TOLERANCE;
            check.record(ok, || Witness::EnvelopeForms {
                phase: p,
                k,
                recursive: r,
                explicit: e,
            });
        }
    }
    check
}

/// The k-th fault-free node to reach phase `p+1` holds a value inside
/// `[a_k, A_k]` computed from `W_p`.
pub fn check_lemma3_envelope(table: &PhaseTable) -> LemmaCheck {
    let mut check = LemmaCheck::new();
    for p in 0..table.phase_count() as Phase {
        if !table.is_complete(p) {
            break;
        }
        let w = table.w(p);
        for (i, e) in table.v(p + 1).iter().enumerate() {
            let k = i as u32 + 1;
            let (lo, hi) = match envelope(&w, table.f, k, EnvelopeForm::Recursive) {
                Ok(bounds) => bounds,
                Err(err) => return LemmaCheck::failed(err.to_string()),
            };
            check.record(
                e.value >= lo - TOLERANCE && e.value <= hi + TOLERANCE,
                || Witness::Envelope {
                    phase: p + 1,
                    k: i + 1,
                    node: e.node,
                    value: e.value,
                    lo,
                    hi,
                },
            );
        }
    }
    check
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityWitness {
    pub node: NodeId,
    pub output: Value,
    pub lo: Value,
    pub hi: Value,
}

/// Consensus verdict for one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub fault_model: FaultModel,
    pub validity: bool,
    pub validity_witness: Option<ValidityWitness>,
    /// Convex hull of the inputs validity is judged against.
    pub hull: (Value, Value),
    pub eps_agreement: bool,
    /// Spread of fault-free outputs; `None` if nobody output.
    pub achieved_range: Option<Value>,
    /// Nodes holding the lowest and highest output.
    pub agreement_witness: Option<(NodeId, NodeId)>,
    /// Last output round, if every fault-free node output.
    pub termination: Option<Round>,
    pub rate_per_phase: Vec<f64>,
    pub lemma_checks: BTreeMap<String, LemmaCheck>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.validity
            && self.eps_agreement
            && self.termination.is_some()
            && self.lemma_checks.values().all(|c| c.pass)
    }

    pub fn rate_max(&self) -> f64 {
        self.rate_per_phase.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-phase contraction factor the algorithm is proven to achieve.
pub fn proven_rate(algorithm: Algorithm, n: u32) -> f64 {
    if algorithm.is_byzantine() {
        1.0 - libm::ldexp(1.0, -(n.min(2000) as i32))
    } else {
        0.5
    }
}

/// Validity, ε-agreement and termination, plus the lemma checks that apply
/// to a non-eager algorithm run within its resilience bound.
pub fn check_consensus(trace: &Trace, model: FaultModel) -> Verdict {
    let cfg = &trace.config;
    let n = cfg.n;
    let hull_nodes: Vec<NodeId> = all_nodes(n)
        .filter(|&v| match model {
            FaultModel::Crash => !trace.faults.is_byzantine(v),
            FaultModel::Byzantine => trace.is_fault_free(v),
        })
        .collect();
    let hull = range_interval(hull_nodes.iter().map(|v| cfg.inputs[v.index()]))
        .map(|r| (r.min, r.max))
        .unwrap_or((0.0, 0.0));

    let last = trace.last_checkpoint();
    let outputs: Vec<(NodeId, Value)> = all_nodes(n)
        .filter(|&v| trace.is_fault_free(v))
        .filter_map(|v| last[v.index()].output.map(|o| (v, o)))
        .collect();

    let validity_witness = outputs
        .iter()
        .find(|(_, o)| *o < hull.0 - TOLERANCE || *o > hull.1 + TOLERANCE)
        .map(|&(node, output)| ValidityWitness {
            node,
            output,
            lo: hull.0,
            hi: hull.1,
        });

    let lowest = outputs.iter().min_by(|a, b| a.1.total_cmp(&b.1)).copied();
    let highest = outputs.iter().max_by(|a, b| a.1.total_cmp(&b.1)).copied();
    let (achieved_range, agreement_witness) = match (lowest, highest) {
        (Some(lo), Some(hi)) => (Some(hi.1 - lo.1), Some((lo.0, hi.0))),
        _ => (None, None),
    };
    let eps_agreement = achieved_range.is_none_or(|r| r <= cfg.epsilon + TOLERANCE);

    let termination = match trace.outcome {
        Outcome::Terminated { round } => Some(round),
        Outcome::NonTermination { .. } => None,
    };

    let mut lemma_checks = BTreeMap::new();
    let mut rate_per_phase = Vec::new();
    match build_phase_table(trace, model) {
        Err(err) => {
            lemma_checks.insert(
                "phase_table".to_string(),
                LemmaCheck::failed(err.to_string()),
            );
        }
        Ok(table) => {
            let rate = check_convergence_rate(&table, proven_rate(cfg.algorithm, n));
            rate_per_phase = rate.phases.iter().map(|r| r.ratio).collect();
            let proven = !cfg.algorithm.is_eager()
                && n >= cfg.algorithm.min_nodes(cfg.f)
                && trace.faults.faulty_count() <= cfg.f as usize;
            if proven {
                lemma_checks.insert("convergence_rate".to_string(), rate.check);
                match model {
                    FaultModel::Crash => {
                        lemma_checks.insert(
                            "lemma1_inclusion".to_string(),
                            check_lemma1_inclusion(&table, n),
                        );
                    }
                    FaultModel::Byzantine => {
                        lemma_checks.insert(
                            "interval_nesting".to_string(),
                            check_interval_nesting(&table),
                        );
                        lemma_checks
                            .insert("lemma3_envelope".to_string(), check_lemma3_envelope(&table));
                    }
                }
            }
        }
    }

    Verdict {
        fault_model: model,
        validity: validity_witness.is_none(),
        validity_witness,
        hull,
        eps_agreement,
        achieved_range,
        agreement_witness,
        termination,
        rate_per_phase,
        lemma_checks,
    }
}
