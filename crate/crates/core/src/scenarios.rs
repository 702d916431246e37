//! Executable impossibility demonstrations.
//!
//! No simulation can range over every algorithm, so each demo pairs the real
//! algorithm with its eager (threshold minus one) variant under the same
//! adversary: the real one never decides, the eager one decides wrongly.
//! Reports carry a pass/fail line per assertion plus per-run evidence.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::{check_consensus, FaultModel, Verdict};
use crate::engine::{run_simulation, Outcome, Trace};
use crate::faults::{ByzantineBehavior, FaultPlan};
use crate::model::{all_nodes, Algorithm, NodeId, Round, SimConfig, Value};
use crate::schedule::{
    byz_partition_strategy, check_dyna_degree, AdversaryStrategy, DynamicSchedule, Exclusion,
};
use crate::CoreError;

/// Knobs shared by every demo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoParams {
    pub epsilon: f64,
    pub seed: u64,
    /// Round budget for runs expected to deadlock.
    pub deadlock_rounds: Round,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            epsilon: 0.1,
            seed: 1,
            deadlock_rounds: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Minimal evidence from one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEvidence {
    pub label: String,
    pub algorithm: Algorithm,
    pub outcome: Outcome,
    pub rounds: u32,
    /// Highest phase any fault-free node reached.
    pub max_phase: u32,
    /// Output of each node, `None` for undecided or faulty nodes.
    pub outputs: Vec<Option<Value>>,
    pub achieved_range: Option<Value>,
}

impl RunEvidence {
    fn new(label: &str, trace: &Trace, verdict: &Verdict) -> Self {
        let last = trace.last_checkpoint();
        RunEvidence {
            label: label.to_string(),
            algorithm: trace.config.algorithm,
            outcome: trace.outcome,
            rounds: trace.rounds.len() as u32,
            max_phase: all_nodes(trace.n())
                .filter(|&v| trace.is_fault_free(v))
                .map(|v| last[v.index()].phase)
                .max()
                .unwrap_or(0),
            outputs: all_nodes(trace.n())
                .map(|v| {
                    if trace.is_fault_free(v) {
                        last[v.index()].output
                    } else {
                        None
                    }
                })
                .collect(),
            achieved_range: verdict.achieved_range,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub demo: String,
    /// Always "demonstration".
    pub kind: String,
    pub n: u32,
    pub f: u32,
    pub params: DemoParams,
    pub assertions: Vec<Assertion>,
    pub runs: Vec<RunEvidence>,
}

impl DemoReport {
    fn new(demo: &str, n: u32, f: u32, params: DemoParams) -> Self {
        DemoReport {
            demo: demo.to_string(),
            kind: "demonstration".to_string(),
            n,
            f,
            params,
            assertions: Vec::new(),
            runs: Vec::new(),
        }
    }

    fn assert(&mut self, name: &str, pass: bool, detail: String) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn run(&self, label: &str) -> Option<&RunEvidence> {
        self.runs.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for DemoReport {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            out,
            "{} {} (n = {}, f = {}, epsilon = {})",
            self.kind, self.demo, self.n, self.f, self.params.epsilon
        )?;
        for a in &self.assertions {
            let mark = if a.pass { "PASS" } else { "FAIL" };
            writeln!(out, "  [{mark}] {}: {}", a.name, a.detail)?;
        }
        for r in &self.runs {
            let outcome = match r.outcome {
                Outcome::Terminated { round } => format!("terminated at round {round}"),
                Outcome::NonTermination { max_rounds } => {
                    format!("no termination within {max_rounds} rounds")
                }
            };
            let outputs: Vec<String> = r
                .outputs
                .iter()
                .map(|o| o.map_or_else(|| "-".to_string(), |v| format!("{v}")))
                .collect();
            writeln!(
                out,
                "  run {} ({}): {outcome}, max phase {}, outputs [{}]",
                r.label,
                r.algorithm,
                r.max_phase,
                outputs.join(", ")
            )?;
        }
        write!(
            out,
            "result: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn ids(range: core::ops::RangeInclusive<u32>) -> BTreeSet<NodeId> {
    range.map(NodeId::new).collect()
}

fn config(
    n: u32,
    f: u32,
    algorithm: Algorithm,
    inputs: Vec<Value>,
    p: &DemoParams,
    max_rounds: Option<Round>,
) -> SimConfig {
    SimConfig {
        n,
        f,
        epsilon: p.epsilon,
        max_rounds,
        seed: p.seed,
        algorithm,
        inputs,
        allow_insufficient: true,
    }
}

fn simulate(
    cfg: &SimConfig,
    strategy: &AdversaryStrategy,
    plan: &FaultPlan,
) -> Result<(Trace, Verdict), CoreError> {
    let trace = run_simulation(cfg, strategy, plan)?;
    let verdict = check_consensus(&trace, FaultModel::for_algorithm(cfg.algorithm));
    Ok((trace, verdict))
}

fn recorded_schedule(trace: &Trace) -> Result<DynamicSchedule, CoreError> {
    DynamicSchedule::new(
        trace.n(),
        trace.rounds.iter().map(|r| r.edges.clone()).collect(),
    )
}

/// True when no node in `nodes` ever leaves phase 0.
fn stuck_at_zero(trace: &Trace, nodes: &BTreeSet<NodeId>) -> bool {
    (0..=trace.rounds.len()).all(|s| {
        nodes
            .iter()
            .all(|v| trace.checkpoint(s)[v.index()].phase == 0)
    })
}

fn outputs_of(trace: &Trace, nodes: &BTreeSet<NodeId>) -> Vec<Option<Value>> {
    nodes
        .iter()
        .map(|v| trace.last_checkpoint()[v.index()].output)
        .collect()
}

fn all_output(trace: &Trace, nodes: &BTreeSet<NodeId>, value: Value) -> bool {
    outputs_of(trace, nodes).iter().all(|o| *o == Some(value))
}

fn degree_detail(result: &Result<crate::schedule::DynaDegreeReport, CoreError>) -> String {
    match result {
        Ok(r) => match r.witness {
            None => "satisfied".to_string(),
            Some(w) => format!(
                "violated: node {} has {} in-neighbors in the window starting at round {}",
                w.node, w.count, w.t
            ),
        },
        Err(e) => format!("check failed: {e}"),
    }
}

fn is_satisfied(result: &Result<crate::schedule::DynaDegreeReport, CoreError>) -> bool {
    matches!(result, Ok(r) if r.satisfied)
}

/// Two halves that never talk, inputs 0 and 1.
pub fn demo_crash_degree(n: u32, params: DemoParams) -> Result<DemoReport, CoreError> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(CoreError::param(
            "n",
            format!("crash-degree needs an even n ≥ 4, got {n}"),
        ));
    }
    let half = n / 2;
    let (a, b) = (ids(1..=half), ids(half + 1..=n));
    let inputs: Vec<Value> = all_nodes(n)
        .map(|v| if v.get() <= half { 0.0 } else { 1.0 })
        .collect();
    let strategy = AdversaryStrategy::CrashPartition {
        groups: (a.clone(), b.clone()),
        until: None,
    };
    let mut report = DemoReport::new("crash-degree", n, 0, params);

    let cfg = config(
        n,
        0,
        Algorithm::Dac,
        inputs.clone(),
        &params,
        Some(params.deadlock_rounds),
    );
    let (real, real_verdict) = simulate(&cfg, &strategy, &FaultPlan::none())?;
    let everyone = ids(1..=n);
    report.assert(
        "dac_deadlock",
        !real.terminated() && stuck_at_zero(&real, &everyone),
        format!(
            "each node hears {half} values including its own, threshold {}; no node leaves phase 0 in {} rounds",
            half + 1,
            real.rounds.len()
        ),
    );

    let sched = recorded_schedule(&real)?;
    let weak = check_dyna_degree(&sched, 1, half - 1, &Exclusion::none());
    report.assert(
        "schedule_satisfies_weak_degree",
        is_satisfied(&weak),
        format!("dynaDegree(1, {}) {}", half - 1, degree_detail(&weak)),
    );
    let first_ok = (1..=sched.horizon())
        .find(|&t| is_satisfied(&check_dyna_degree(&sched, t, half, &Exclusion::none())));
    report.assert(
        "schedule_fails_required_degree",
        first_ok.is_none(),
        match first_ok {
            None => format!(
                "dynaDegree(T, {half}) violated for every T ≤ {}",
                sched.horizon()
            ),
            Some(t) => format!("dynaDegree({t}, {half}) unexpectedly holds"),
        },
    );
    report
        .runs
        .push(RunEvidence::new("dac", &real, &real_verdict));

    let cfg = config(n, 0, Algorithm::EagerDac, inputs, &params, None);
    let (eager, verdict) = simulate(&cfg, &strategy, &FaultPlan::none())?;
    report.assert(
        "eager_dac_disagrees",
        eager.terminated() && all_output(&eager, &a, 0.0) && all_output(&eager, &b, 1.0) && !verdict.eps_agreement,
        format!(
            "group {{1..{half}}} outputs {:?}, group {{{}..{n}}} outputs {:?}, range {:?} > epsilon",
            outputs_of(&eager, &a),
            half + 1,
            outputs_of(&eager, &b),
            verdict.achieved_range
        ),
    );
    report
        .runs
        .push(RunEvidence::new("eager_dac", &eager, &verdict));
    Ok(report)
}

/// With `n ≤ 2f`, a half that loses the other half to crashes must decide
/// alone; partitioning for exactly that long makes both halves decide apart.
pub fn demo_crash_count(n: u32, f: u32, params: DemoParams) -> Result<DemoReport, CoreError> {
    if n < 2 || n > 2 * f {
        return Err(CoreError::param(
            "n",
            format!("crash-count needs 2 ≤ n ≤ 2f, got n = {n}, f = {f}"),
        ));
    }
    let split = n / 2;
    let (a, b) = (ids(1..=split), ids(split + 1..=n));
    let mut report = DemoReport::new("crash-count", n, f, params);

    // Scenario 1: group B crashes at round 1, group A has input 0.
    let mut crash_b = FaultPlan::none();
    for &v in &b {
        crash_b = crash_b.with_crash(v, 1);
    }
    let zeros = alloc::vec![0.0; n as usize];
    let cfg = config(
        n,
        f,
        Algorithm::Dac,
        zeros.clone(),
        &params,
        Some(params.deadlock_rounds),
    );
    let (real, real_verdict) = simulate(&cfg, &AdversaryStrategy::Complete, &crash_b)?;
    report.assert(
        "scenario1_dac_never_decides",
        !real.terminated() && stuck_at_zero(&real, &a),
        format!(
            "{} survivors against threshold {}; no survivor leaves phase 0 in {} rounds",
            a.len(),
            split + 1,
            real.rounds.len()
        ),
    );
    report
        .runs
        .push(RunEvidence::new("scenario1_dac", &real, &real_verdict));

    let cfg = config(n, f, Algorithm::EagerDac, zeros, &params, None);
    let (s1, s1_verdict) = simulate(&cfg, &AdversaryStrategy::Complete, &crash_b)?;
    let r = match s1.outcome {
        Outcome::Terminated { round } => round,
        Outcome::NonTermination { .. } => {
            report.assert(
                "scenario1_eager_decides",
                false,
                "eager variant never decides in scenario 1".to_string(),
            );
            report
                .runs
                .push(RunEvidence::new("scenario1_eager_dac", &s1, &s1_verdict));
            return Ok(report);
        }
    };
    report.assert(
        "scenario1_eager_decides",
        all_output(&s1, &a, 0.0),
        format!("survivors output 0 after R = {r} rounds"),
    );
    report
        .runs
        .push(RunEvidence::new("scenario1_eager_dac", &s1, &s1_verdict));

    // Scenario 2: nobody crashes, the halves are cut off for rounds 1..=R.
    let inputs: Vec<Value> = all_nodes(n)
        .map(|v| if v.get() <= split { 0.0 } else { 1.0 })
        .collect();
    let strategy = AdversaryStrategy::CrashPartition {
        groups: (a.clone(), b.clone()),
        until: Some(r),
    };
    let cfg = config(n, f, Algorithm::EagerDac, inputs, &params, None);
    let (s2, verdict) = simulate(&cfg, &strategy, &FaultPlan::none())?;
    let within = matches!(s2.outcome, Outcome::Terminated { round } if round <= r);
    report.assert(
        "scenario2_halves_disagree",
        within && all_output(&s2, &a, 0.0) && all_output(&s2, &b, 1.0) && !verdict.eps_agreement,
        format!(
            "outputs {:?} and {:?} by round {:?}, range {:?}",
            outputs_of(&s2, &a),
            outputs_of(&s2, &b),
            verdict.termination,
            verdict.achieved_range
        ),
    );

    let horizon = 3 * (r + 1);
    let sched = strategy.materialize(n, horizon, &[]);
    let long = check_dyna_degree(&sched, r + 1, n - 1, &Exclusion::none());
    report.assert(
        "schedule_satisfies_degree_at_r_plus_1",
        is_satisfied(&long),
        format!("dynaDegree({}, {}) {}", r + 1, n - 1, degree_detail(&long)),
    );
    let short = check_dyna_degree(&sched, r, n - 1, &Exclusion::none());
    report.assert(
        "schedule_fails_degree_at_r",
        !is_satisfied(&short),
        format!("dynaDegree({r}, {}) {}", n - 1, degree_detail(&short)),
    );
    report
        .runs
        .push(RunEvidence::new("scenario2_eager_dac", &s2, &verdict));
    Ok(report)
}

/// Byzantine nodes in the overlap of two groups equivocate so each side sees
/// a self-consistent world.
pub fn demo_byz_partition(n: u32, f: u32, params: DemoParams) -> Result<DemoReport, CoreError> {
    let (strategy, roles) = byz_partition_strategy(n, f)?;
    let mut plan = FaultPlan::none();
    for &v in &roles.byzantine {
        plan = plan.with_byzantine(
            v,
            ByzantineBehavior::Equivocator {
                a: 0.0,
                b: 1.0,
                side_a: roles.a_side.clone(),
            },
        );
    }
    let size = (n + 3 * f) / 2;
    let mut report = DemoReport::new("byz-partition", n, f, params);

    let cfg = config(
        n,
        f,
        Algorithm::EagerDbac,
        roles.inputs.clone(),
        &params,
        None,
    );
    let (eager, verdict) = simulate(&cfg, &strategy, &plan)?;
    report.assert(
        "eager_dbac_disagrees",
        eager.terminated()
            && all_output(&eager, &roles.a_side, 0.0)
            && all_output(&eager, &roles.b_side, 1.0)
            && verdict.achieved_range == Some(1.0),
        format!(
            "A side outputs {:?}, B side outputs {:?}, range {:?}",
            outputs_of(&eager, &roles.a_side),
            outputs_of(&eager, &roles.b_side),
            verdict.achieved_range
        ),
    );
    report
        .runs
        .push(RunEvidence::new("eager_dbac", &eager, &verdict));

    let cfg = config(
        n,
        f,
        Algorithm::Dbac,
        roles.inputs.clone(),
        &params,
        Some(params.deadlock_rounds),
    );
    let (real, real_verdict) = simulate(&cfg, &strategy, &plan)?;
    let honest: BTreeSet<NodeId> = roles.a_side.union(&roles.b_side).copied().collect();
    report.assert(
        "dbac_deadlock",
        !real.terminated() && stuck_at_zero(&real, &honest),
        format!(
            "each side hears {size} distinct sources including itself, threshold {}; no fault-free node leaves phase 0 in {} rounds",
            size + 1,
            real.rounds.len()
        ),
    );

    let sched = recorded_schedule(&real)?;
    let byz = Exclusion::nodes(roles.byzantine.iter().copied());
    let weak = check_dyna_degree(&sched, 1, size - 1, &byz);
    report.assert(
        "schedule_satisfies_weak_degree",
        is_satisfied(&weak),
        format!(
            "dynaDegree(1, {}) over fault-free receivers {}",
            size - 1,
            degree_detail(&weak)
        ),
    );
    let strong = check_dyna_degree(&sched, sched.horizon(), size, &byz);
    report.assert(
        "schedule_fails_required_degree",
        !is_satisfied(&strong),
        format!(
            "dynaDegree({}, {size}) {}",
            sched.horizon(),
            degree_detail(&strong)
        ),
    );
    report
        .runs
        .push(RunEvidence::new("dbac", &real, &real_verdict));
    Ok(report)
}

/// Epsilon values the drop-one illustration runs at.
pub const DROP_ONE_EPSILONS: [f64; 3] = [0.5, 0.1, 0.01];
/// Binary input assignments tried per epsilon.
pub const DROP_ONE_SEEDS: u64 = 16;

/// Binary inputs for `seed`, never all equal.
fn binary_inputs(n: u32, seed: u64) -> Vec<Value> {
    let bits = crate::sweep::random_inputs(n, seed);
    let mut inputs: Vec<Value> = bits
        .iter()
        .map(|&x| if x < 0.5 { 0.0 } else { 1.0 })
        .collect();
    inputs[0] = 0.0;
    inputs[n as usize - 1] = 1.0;
    inputs
}

/// Approximate agreement still holds when each round drops one link per
/// receiver, but the residual spread stays positive: an illustration that
/// exactness is not reached, not a proof that it cannot be.
pub fn demo_exact_drop_one(n: u32, params: DemoParams) -> Result<DemoReport, CoreError> {
    if n < 3 {
        return Err(CoreError::param(
            "n",
            format!("drop-one needs n ≥ 3, got {n}"),
        ));
    }
    let mut report = DemoReport::new("exact-drop-one", n, 0, params);
    let strategy = crate::schedule::drop_one_strategy(n)?;
    let mut positive = 0u64;
    let mut total = 0u64;
    for &epsilon in &DROP_ONE_EPSILONS {
        let mut worst: Option<(u64, Verdict)> = None;
        let mut all_pass = true;
        let mut max_spread: Value = 0.0;
        for k in 0..DROP_ONE_SEEDS {
            let seed = params.seed.wrapping_add(k);
            let cfg = SimConfig {
                epsilon,
                seed,
                ..config(n, 0, Algorithm::Dac, binary_inputs(n, seed), &params, None)
            };
            let (trace, verdict) = simulate(&cfg, &strategy, &FaultPlan::none())?;
            let spread = verdict.achieved_range.unwrap_or(0.0);
            total += 1;
            if spread > 0.0 {
                positive += 1;
            }
            max_spread = max_spread.max(spread);
            if !verdict.passed() && all_pass {
                all_pass = false;
                worst = Some((seed, verdict.clone()));
            }
            if k == 0 {
                report.runs.push(RunEvidence::new(
                    &format!("dac_eps_{epsilon}"),
                    &trace,
                    &verdict,
                ));
            }
        }
        report.assert(
            &format!("approximate_agreement_eps_{epsilon}"),
            all_pass,
            match worst {
                None => format!(
                    "all {DROP_ONE_SEEDS} binary input assignments pass, largest spread {max_spread}"
                ),
                Some((seed, v)) => format!("seed {seed} fails: range {:?}", v.achieved_range),
            },
        );
    }
    report.assert(
        "residual_spread_positive",
        positive > 0,
        format!("{positive} of {total} runs end with distinct outputs (illustration only)"),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crash_degree_six() {
        let r = demo_crash_degree(6, DemoParams::default()).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.run("eager_dac").unwrap().achieved_range, Some(1.0));
        assert_eq!(r.kind, "demonstration");
    }

    #[test]
    fn crash_degree_four_and_eight() {
        for n in [4, 8] {
            let r = demo_crash_degree(n, DemoParams::default()).unwrap();
            assert!(r.passed(), "{r}");
        }
        assert!(demo_crash_degree(5, DemoParams::default()).is_err());
    }

    #[test]
    fn crash_count() {
        for (n, f) in [(4, 2), (6, 3)] {
            let r = demo_crash_count(n, f, DemoParams::default()).unwrap();
            assert!(r.passed(), "{r}");
        }
        assert!(demo_crash_count(7, 3, DemoParams::default()).is_err());
    }

    #[test]
    fn byz_partition() {
        for (n, f) in [(10, 2), (7, 2), (4, 1)] {
            let r = demo_byz_partition(n, f, DemoParams::default()).unwrap();
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn drop_one() {
        for n in [3, 4] {
            let r = demo_exact_drop_one(n, DemoParams::default()).unwrap();
            assert!(
                r.assertions
                    .iter()
                    .filter(|a| a.name.starts_with("approximate"))
                    .all(|a| a.pass),
                "{r}"
            );
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let p = DemoParams::default();
        assert_eq!(
            demo_crash_count(6, 3, p).unwrap(),
            demo_crash_count(6, 3, p).unwrap()
        );
        assert_eq!(
            demo_byz_partition(7, 2, p).unwrap(),
            demo_byz_partition(7, 2, p).unwrap()
        );
    }
}
