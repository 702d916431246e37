//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anodyne::cli::run_cli;
use anodyne::formats::read_schedule;
use anodyne_core::algo::{p_end_byz, p_end_crash};
use anodyne_core::analysis::{
    build_phase_table, check_consensus, check_convergence_rate, check_envelope_forms,
    check_interval_nesting, check_lemma1_inclusion, check_lemma3_envelope, FaultModel, LemmaCheck,
    Verdict,
};
use anodyne_core::engine::{run_simulation, Trace};
use anodyne_core::faults::{ByzantineBehavior, FaultPlan};
use anodyne_core::model::Algorithm;
use anodyne_core::model::{EdgeSet, NodeId, SimConfig};
use anodyne_core::scenarios::{
    demo_byz_partition, demo_crash_count, demo_crash_degree, DemoParams,
};
use anodyne_core::schedule::{
    check_dyna_degree, check_dyna_degree_with, gen_dyna_degree, AdversaryStrategy, DynamicSchedule,
    Exclusion, WindowAlignment,
};
use anodyne_core::sweep::{RandomCrashes, Scenario, ScheduleSpec};

const TOL: f64 = 1e-9;

/// 60-digit evaluation of ⌈ln 0.05 / ln(1 − 2^-6)⌉.
const P_END_BYZ_6_005: u32 = 191;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn first_failure(checks: &[(u64, &LemmaCheck)]) -> Option<String> {
    checks
        .iter()
        .find(|(_, c)| !c.pass)
        .map(|(seed, c)| format!("seed {seed}: {:?}", c.witness))
}

struct DacRuns {
    runs: Vec<(u64, Trace, Verdict)>,
    elapsed: Duration,
}

fn dac_runs() -> DacRuns {
    let scenario = Scenario {
        config: SimConfig {
            n: 7,
            f: 3,
            epsilon: 1e-3,
            max_rounds: None,
            seed: 0,
            algorithm: Algorithm::Dac,
            inputs: vec![],
            allow_insufficient: false,
        },
        schedule: ScheduleSpec::DynaDegree {
            t: 3,
            d: 3,
            extra_edge_prob: 0.25,
            fault_free_senders: true,
        },
        faults: FaultPlan::none(),
        random_crashes: Some(RandomCrashes {
            max_count: 3,
            latest_round: 30,
        }),
        random_inputs: true,
    };
    let start = Instant::now();
    let runs = (1..=50u64)
        .map(|seed| {
            let r = scenario.with_seed(seed).resolve().expect("valid scenario");
            let trace = run_simulation(&r.config, &r.strategy, &r.plan).expect("runs");
            let verdict = check_consensus(&trace, FaultModel::Crash);
            (seed, trace, verdict)
        })
        .collect();
    DacRuns {
        runs,
        elapsed: start.elapsed(),
    }
}

fn byzantine_behavior(seed: u64) -> (NodeId, ByzantineBehavior) {
    let node = NodeId::new((seed % 6) as u32 + 1);
    let side_a = (1..=6)
        .map(NodeId::new)
        .filter(|&v| v != node)
        .take(2)
        .collect();
    let behavior = match seed % 4 {
        0 => ByzantineBehavior::ConstantLiar { value: 1.0 },
        1 => ByzantineBehavior::Equivocator {
            a: 0.0,
            b: 1.0,
            side_a,
        },
        2 => ByzantineBehavior::PhaseJumper { offset: 3 },
        _ => ByzantineBehavior::RandomNoise { seed },
    };
    (node, behavior)
}

fn dbac_runs() -> DacRuns {
    let start = Instant::now();
    let runs = (1..=30u64)
        .map(|seed| {
            let (node, behavior) = byzantine_behavior(seed);
            let scenario = Scenario {
                config: SimConfig {
                    n: 6,
                    f: 1,
                    epsilon: 0.05,
                    max_rounds: None,
                    seed,
                    algorithm: Algorithm::Dbac,
                    inputs: vec![],
                    allow_insufficient: false,
                },
                schedule: ScheduleSpec::DynaDegree {
                    t: 2,
                    d: 4,
                    extra_edge_prob: 0.25,
                    fault_free_senders: true,
                },
                faults: FaultPlan::none().with_byzantine(node, behavior),
                random_crashes: None,
                random_inputs: true,
            };
            let r = scenario.resolve().expect("valid scenario");
            let trace = run_simulation(&r.config, &r.strategy, &r.plan).expect("runs");
            let verdict = check_consensus(&trace, FaultModel::Byzantine);
            (seed, trace, verdict)
        })
        .collect();
    DacRuns {
        runs,
        elapsed: start.elapsed(),
    }
}

fn c1(dac: &DacRuns) -> Outcome {
    let bound = 3 * p_end_crash(1e-3).unwrap();
    let bad = dac.runs.iter().find(|(_, _, v)| {
        !v.validity || !v.eps_agreement || v.termination.is_none_or(|r| r > bound)
    });
    let worst = dac
        .runs
        .iter()
        .filter_map(|(_, _, v)| v.termination)
        .max()
        .unwrap_or(0);
    let crashes: usize = dac
        .runs
        .iter()
        .map(|(_, t, _)| t.faults.crashes.len())
        .sum();
    let fast = dac.elapsed < Duration::from_secs(10);
    match bad {
        Some((seed, _, v)) => outcome(false, format!("seed {seed}: {v:?}")),
        None => outcome(
            fast && bound == 30,
            format!(
                "50 runs, {crashes} crashes, latest output round {worst} ≤ {bound}, {:.2?}",
                dac.elapsed
            ),
        ),
    }
}

fn c2(dac: &DacRuns) -> Outcome {
    let mut phases = 0;
    let mut checks = Vec::new();
    for (seed, trace, _) in &dac.runs {
        let table = build_phase_table(trace, FaultModel::Crash).unwrap();
        let report = check_convergence_rate(&table, 0.5);
        phases += report.phases.len();
        checks.push((*seed, report.check));
    }
    let refs: Vec<_> = checks.iter().map(|(s, c)| (*s, c)).collect();
    match first_failure(&refs) {
        Some(w) => outcome(false, w),
        None => outcome(phases > 0, format!("{phases} phase pairs within rate 1/2")),
    }
}

fn c3(dac: &DacRuns) -> Outcome {
    let mut entries = 0;
    let mut checks = Vec::new();
    for (seed, trace, _) in &dac.runs {
        let table = build_phase_table(trace, FaultModel::Crash).unwrap();
        let check = check_lemma1_inclusion(&table, 7);
        entries += check.checked;
        checks.push((*seed, check));
    }
    let refs: Vec<_> = checks.iter().map(|(s, c)| (*s, c)).collect();
    match first_failure(&refs) {
        Some(w) => outcome(false, w),
        None => outcome(
            entries > 0,
            format!("{entries} entries inside their interval"),
        ),
    }
}

fn c4(byz: &DacRuns) -> Outcome {
    let p_end = p_end_byz(0.05, 6).unwrap();
    let bound = 2 * P_END_BYZ_6_005;
    let bad = byz.runs.iter().find(|(_, _, v)| {
        !v.validity || !v.eps_agreement || v.termination.is_none_or(|r| r > bound)
    });
    let worst = byz
        .runs
        .iter()
        .filter_map(|(_, _, v)| v.termination)
        .max()
        .unwrap_or(0);
    match bad {
        Some((seed, _, v)) => outcome(false, format!("seed {seed}: {v:?}")),
        None => outcome(
            p_end == P_END_BYZ_6_005 && byz.elapsed < Duration::from_secs(60),
            format!(
                "30 runs, p_end {p_end}, latest output round {worst} ≤ {bound}, {:.2?}",
                byz.elapsed
            ),
        ),
    }
}

fn byz_check(
    byz: &DacRuns,
    label: &str,
    f: impl Fn(&anodyne_core::analysis::PhaseTable) -> LemmaCheck,
) -> Outcome {
    let mut total = 0;
    let mut checks = Vec::new();
    for (seed, trace, _) in &byz.runs {
        let table = build_phase_table(trace, FaultModel::Byzantine).unwrap();
        let check = f(&table);
        total += check.checked;
        checks.push((*seed, check));
    }
    let refs: Vec<_> = checks.iter().map(|(s, c)| (*s, c)).collect();
    match first_failure(&refs) {
        Some(w) => outcome(false, w),
        None => outcome(total > 0, format!("{total} {label}")),
    }
}

fn c5(byz: &DacRuns) -> Outcome {
    let rho = 1.0 - 2f64.powi(-6);
    byz_check(byz, "phase pairs within rate 1 - 2^-6", |t| {
        check_convergence_rate(t, rho).check
    })
}

fn c6(byz: &DacRuns) -> Outcome {
    byz_check(
        byz,
        "nesting, monotonicity, prefix and saturation comparisons",
        check_interval_nesting,
    )
}

fn c7(byz: &DacRuns) -> Outcome {
    let envelope = byz_check(byz, "entries inside their envelope", check_lemma3_envelope);
    let forms = byz_check(byz, "envelope form comparisons", |t| {
        check_envelope_forms(t, 64)
    });
    outcome(
        envelope.pass && forms.pass,
        format!("{}; {}", envelope.detail, forms.detail),
    )
}

fn c8() -> Outcome {
    let fig1 = read_schedule(&fixture("fig1.json")).unwrap();
    let ok = check_dyna_degree(&fig1, 2, 1, &Exclusion::none()).unwrap();
    let bad = check_dyna_degree(&fig1, 1, 1, &Exclusion::none()).unwrap();
    let odd = bad.witness.is_some_and(|w| w.t % 2 == 1);
    let mut cases = 0;
    let mut failure = None;
    for i in 0..100u32 {
        let n = 3 + i % 6;
        let t = 1 + (i / 6) % 4;
        let d = 1 + (i * 7) % (n - 1);
        let horizon = t * (2 + i % 3);
        let extra = [0.0, 0.1, 0.3][(i % 3) as usize];
        let sched = gen_dyna_degree(n, t, d, horizon, 1000 + i as u64, extra).unwrap();
        let r = check_dyna_degree_with(&sched, t, d, &Exclusion::none(), WindowAlignment::Aligned)
            .unwrap();
        cases += 1;
        if !r.satisfied && failure.is_none() {
            failure = Some(format!("n {n} T {t} D {d}: {:?}", r.witness));
        }
    }
    outcome(
        ok.satisfied && !bad.satisfied && odd && failure.is_none(),
        match failure {
            Some(f) => f,
            None => format!(
                "fig1 (2,1) satisfied, (1,1) violated at round {}; {cases} generated schedules closed",
                bad.witness.map_or(0, |w| w.t)
            ),
        },
    )
}

fn c9() -> Outcome {
    let p = DemoParams::default();
    let degree = demo_crash_degree(6, p).unwrap();
    let byz = demo_byz_partition(10, 2, p).unwrap();
    let count = demo_crash_count(6, 3, p).unwrap();
    let gap = degree.run("eager_dac").and_then(|r| r.achieved_range) == Some(1.0);
    let deterministic = degree == demo_crash_degree(6, p).unwrap()
        && byz == demo_byz_partition(10, 2, p).unwrap()
        && count == demo_crash_count(6, 3, p).unwrap();
    let failing: Vec<String> = [&degree, &byz, &count]
        .iter()
        .flat_map(|r| {
            r.assertions
                .iter()
                .filter(|a| !a.pass)
                .map(move |a| format!("{}/{}", r.demo, a.name))
        })
        .collect();
    outcome(
        failing.is_empty() && gap && deterministic,
        if failing.is_empty() {
            format!(
                "crash-degree gap 1, byz-partition sides 0/1, crash-count R = {} rounds; deterministic {deterministic}",
                count.run("scenario1_eager_dac").map_or(0, |r| r.rounds)
            )
        } else {
            format!("failed assertions: {}", failing.join(", "))
        },
    )
}

fn c10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    for config in ["dac.json", "dbac.json"] {
        let mut bytes = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("{config}-{k}"));
            let path = fixture(config);
            let args = [
                "anodyne",
                "run",
                path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ];
            let code = run_cli(args, &mut std::io::sink(), &mut std::io::sink());
            if code != 0 {
                return outcome(false, format!("{config} exited {code}"));
            }
            bytes.push((
                fs::read(out.join("trace.jsonl")).unwrap(),
                fs::read(out.join("verdict.json")).unwrap(),
            ));
        }
        same &= bytes[0] == bytes[1];
    }
    outcome(
        same,
        "trace.jsonl and verdict.json byte-identical across repeated runs",
    )
}

/// Direct restatement of the consensus definitions over raw trace rows.
struct Brute {
    validity: bool,
    agreement: bool,
    termination: Option<u32>,
    range: Option<f64>,
}

fn brute_verdict(trace: &Trace) -> Brute {
    let n = trace.config.n as usize;
    let byzantine: Vec<bool> = (1..=n)
        .map(|i| trace.faults.byzantine.contains_key(&NodeId::new(i as u32)))
        .collect();
    let faulty: Vec<bool> = (1..=n)
        .map(|i| byzantine[i - 1] || trace.faults.crashes.contains_key(&NodeId::new(i as u32)))
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        if !byzantine[i] {
            lo = lo.min(trace.config.inputs[i]);
            hi = hi.max(trace.config.inputs[i]);
        }
    }
    let last = match trace.rounds.last() {
        Some(r) => r.states_after.clone(),
        None => trace.initial.clone(),
    };
    let mut outputs = Vec::new();
    let mut first_output = vec![None; n];
    for r in &trace.rounds {
        for i in 0..n {
            if first_output[i].is_none() && r.states_after[i].output.is_some() {
                first_output[i] = Some(r.t);
            }
        }
    }
    let mut all_out = true;
    let mut latest = 0;
    for i in 0..n {
        if faulty[i] {
            continue;
        }
        match last[i].output {
            Some(o) => {
                outputs.push(o);
                latest = latest.max(first_output[i].unwrap_or(0));
            }
            None => all_out = false,
        }
    }
    let validity = outputs.iter().all(|&o| o >= lo - TOL && o <= hi + TOL);
    let mut range = None;
    for a in &outputs {
        for b in &outputs {
            let d = (a - b).abs();
            range = Some(range.map_or(d, |r: f64| r.max(d)));
        }
    }
    Brute {
        validity,
        agreement: range.is_none_or(|r| r <= trace.config.epsilon + TOL),
        termination: all_out.then_some(latest),
        range,
    }
}

fn edge_family(n: u32) -> Vec<EdgeSet> {
    let ring: Vec<(u32, u32)> = (1..=n).map(|i| (i, i % n + 1)).collect();
    let into_one: Vec<(u32, u32)> = (2..=n).flat_map(|i| [(i, 1), (1, i)]).collect();
    vec![
        EdgeSet::new(),
        EdgeSet::complete(n),
        EdgeSet::from_pairs(ring).unwrap(),
        EdgeSet::from_pairs(into_one).unwrap(),
    ]
}

fn c11() -> Outcome {
    let mut cases = 0;
    let mut passing = 0;
    let mut mismatch = None;
    let setups: [(u32, u32, Vec<f64>, FaultPlan, f64); 2] = [
        (3, 0, vec![0.0, 0.5, 1.0], FaultPlan::none(), 0.25),
        (
            4,
            1,
            vec![0.0, 0.3, 0.6, 1.0],
            FaultPlan::none().with_crash(NodeId::new(4), 2),
            0.3,
        ),
    ];
    for (n, f, inputs, plan, epsilon) in setups {
        let family = edge_family(n);
        let k = family.len();
        for code in 0..k.pow(4) {
            let rounds: Vec<EdgeSet> = (0..4)
                .map(|j| family[(code / k.pow(j)) % k].clone())
                .collect();
            let sched = DynamicSchedule::new(n, rounds).unwrap();
            let cfg = SimConfig {
                n,
                f,
                epsilon,
                max_rounds: Some(4),
                seed: code as u64,
                algorithm: Algorithm::Dac,
                inputs: inputs.clone(),
                allow_insufficient: false,
            };
            let trace = run_simulation(&cfg, &AdversaryStrategy::Static(sched), &plan).unwrap();
            let v = check_consensus(&trace, FaultModel::Crash);
            let b = brute_verdict(&trace);
            cases += 1;
            let same_range = match (v.achieved_range, b.range) {
                (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
                (None, None) => true,
                _ => false,
            };
            let same = v.validity == b.validity
                && v.eps_agreement == b.agreement
                && v.termination == b.termination
                && same_range;
            if v.validity && v.eps_agreement && v.termination.is_some() {
                passing += 1;
            }
            if !same && mismatch.is_none() {
                mismatch = Some(format!("n {n}, schedule {code}: {v:?} vs brute force"));
            }
        }
    }
    outcome(
        mismatch.is_none() && cases >= 200,
        mismatch.unwrap_or_else(|| format!("{cases} schedules agree ({passing} full passes)")),
    )
}

fn main() -> ExitCode {
    let dac = dac_runs();
    let byz = dbac_runs();
    let results: Vec<(&str, Outcome)> = vec![
        ("DAC end-to-end", c1(&dac)),
        ("DAC convergence rate", c2(&dac)),
        ("DAC interval inclusion", c3(&dac)),
        ("DBAC end-to-end", c4(&byz)),
        ("DBAC per-phase rate", c5(&byz)),
        ("DBAC nesting and monotonicity", c6(&byz)),
        ("DBAC envelope", c7(&byz)),
        ("dynaDegree fixtures", c8()),
        ("impossibility demos", c9()),
        ("determinism", c10()),
        ("oracle equivalence", c11()),
    ];
    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        all &= o.pass;
        println!(
            "criterion {:>2} {}: {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
