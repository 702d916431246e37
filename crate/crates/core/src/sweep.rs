//! Scenario descriptions and parameter sweeps over seeds and config patches.
//!
//! A sweep is a list of cells, patch-major then seed order. Each cell is an
//! independent simulation, so callers may evaluate cells in any order or in
//! parallel and merge results by cell index.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_consensus, FaultModel, Verdict};
use crate::engine::{run_simulation, Trace};
use crate::faults::FaultPlan;
use crate::model::{all_nodes, Algorithm, NodeId, Round, SimConfig, Value};
use crate::schedule::{drop_one_strategy, AdversaryStrategy, DynaDegreeParams, DynamicSchedule};
use crate::{rng, CoreError};

/// How a scenario's message adversary is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Complete,
    Static {
        schedule: DynamicSchedule,
    },
    /// Random dynaDegree(T,D) schedule seeded by the run seed.
    DynaDegree {
        #[serde(rename = "T")]
        t: u32,
        #[serde(rename = "D")]
        d: u32,
        #[serde(default)]
        extra_edge_prob: f64,
        /// Draw the guaranteed in-neighbors from fault-free nodes only.
        #[serde(default)]
        fault_free_senders: bool,
    },
    Partition {
        group_a: BTreeSet<NodeId>,
        group_b: BTreeSet<NodeId>,
        #[serde(default)]
        until: Option<Round>,
    },
    DropOne,
}

impl ScheduleSpec {
    /// `(T, D)` the schedule is built to satisfy, when it has one.
    pub fn window_degree(&self, n: u32) -> (Option<u32>, Option<u32>) {
        match self {
            ScheduleSpec::Complete => (Some(1), Some(n.saturating_sub(1))),
            ScheduleSpec::DynaDegree { t, d, .. } => (Some(*t), Some(*d)),
            ScheduleSpec::DropOne => (Some(1), Some(n.saturating_sub(2))),
            ScheduleSpec::Static { .. } | ScheduleSpec::Partition { .. } => (None, None),
        }
    }

    pub fn strategy(
        &self,
        n: u32,
        seed: u64,
        plan: &FaultPlan,
    ) -> Result<AdversaryStrategy, CoreError> {
        Ok(match self {
            ScheduleSpec::Complete => AdversaryStrategy::Complete,
            ScheduleSpec::Static { schedule } => {
                if schedule.n() != n {
                    return Err(CoreError::param(
                        "schedule",
                        format!(
                            "schedule is for n = {} but config has n = {n}",
                            schedule.n()
                        ),
                    ));
                }
                AdversaryStrategy::Static(schedule.clone())
            }
            ScheduleSpec::DynaDegree {
                t,
                d,
                extra_edge_prob,
                fault_free_senders,
            } => AdversaryStrategy::RandomDynaDegree(DynaDegreeParams {
                n,
                window: *t,
                degree: *d,
                seed,
                extra_edge_prob: *extra_edge_prob,
                sender_pool: fault_free_senders
                    .then(|| all_nodes(n).filter(|&v| !plan.is_faulty(v)).collect()),
            }),
            ScheduleSpec::Partition {
                group_a,
                group_b,
                until,
            } => {
                // Validates the groups.
                crate::schedule::partition_schedule(n, (group_a, group_b), 0)?;
                AdversaryStrategy::CrashPartition {
                    groups: (group_a.clone(), group_b.clone()),
                    until: *until,
                }
            }
            ScheduleSpec::DropOne => drop_one_strategy(n)?,
        })
    }
}

/// Up to `max_count` crashes on distinct nodes at rounds in `[1, latest_round]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomCrashes {
    pub max_count: u32,
    pub latest_round: Round,
}

impl RandomCrashes {
    /// Adds the drawn crashes to `plan`, skipping nodes it already faults.
    pub fn draw(&self, n: u32, seed: u64, plan: &FaultPlan) -> Result<FaultPlan, CoreError> {
        if self.latest_round == 0 {
            return Err(CoreError::param("latest_round", "must be at least 1"));
        }
        let mut rng = rng::stream(seed, rng::DOMAIN_FAULTS, n as u64, 0);
        let healthy: Vec<NodeId> = all_nodes(n).filter(|&v| !plan.is_faulty(v)).collect();
        let count = rng.gen_range(0..=self.max_count).min(healthy.len() as u32) as usize;
        let mut out = plan.clone();
        for pick in index::sample(&mut rng, healthy.len(), count).into_iter() {
            out.crashes
                .insert(healthy[pick], rng.gen_range(1..=self.latest_round));
        }
        Ok(out)
    }
}

/// Everything needed to run one simulation except the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SimConfig,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub faults: FaultPlan,
    #[serde(default)]
    pub random_crashes: Option<RandomCrashes>,
    /// Draw inputs uniformly from `[0, 1]` per seed instead of using
    /// `config.inputs`.
    #[serde(default)]
    pub random_inputs: bool,
}

/// Uniform inputs in `[0, 1]` derived from `seed`.
pub fn random_inputs(n: u32, seed: u64) -> Vec<Value> {
    let mut rng = rng::stream(seed, rng::DOMAIN_INPUTS, n as u64, 0);
    (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

/// Concrete pieces of a scenario for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub config: SimConfig,
    pub strategy: AdversaryStrategy,
    pub plan: FaultPlan,
}

impl Scenario {
    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.config.seed = seed;
        s
    }

    pub fn resolve(&self) -> Result<Resolved, CoreError> {
        let mut config = self.config.clone();
        let seed = config.seed;
        if self.random_inputs {
            config.inputs = random_inputs(config.n, seed);
        }
        let plan = match &self.random_crashes {
            Some(rc) => rc.draw(config.n, seed, &self.faults)?,
            None => self.faults.clone(),
        };
        let strategy = self.schedule.strategy(config.n, seed, &plan)?;
        Ok(Resolved {
            config,
            strategy,
            plan,
        })
    }
}

/// Runs the scenario at its configured seed and judges the trace.
pub fn run_scenario(scenario: &Scenario) -> Result<(Trace, Verdict), CoreError> {
    let r = scenario.resolve()?;
    let trace = run_simulation(&r.config, &r.strategy, &r.plan)?;
    let verdict = check_consensus(&trace, FaultModel::for_algorithm(r.config.algorithm));
    Ok((trace, verdict))
}

/// Optional overrides applied to the base scenario of a sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigPatch {
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub f: Option<u32>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub max_rounds: Option<u32>,
    #[serde(default)]
    pub inputs: Option<Vec<Value>>,
    #[serde(default, rename = "T")]
    pub t: Option<u32>,
    #[serde(default, rename = "D")]
    pub d: Option<u32>,
}

impl ConfigPatch {
    pub fn apply(&self, base: &Scenario) -> Scenario {
        let mut s = base.clone();
        let c = &mut s.config;
        if let Some(n) = self.n {
            c.n = n;
        }
        if let Some(f) = self.f {
            c.f = f;
        }
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        if let Some(a) = self.algorithm {
            c.algorithm = a;
        }
        if let Some(m) = self.max_rounds {
            c.max_rounds = Some(m);
        }
        if let Some(inputs) = &self.inputs {
            c.inputs = inputs.clone();
        }
        if let ScheduleSpec::DynaDegree { t, d, .. } = &mut s.schedule {
            if let Some(v) = self.t {
                *t = v;
            }
            if let Some(v) = self.d {
                *d = v;
            }
        }
        s
    }
}

/// One row of a sweep result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub n: u32,
    pub f: u32,
    #[serde(rename = "T")]
    pub t: Option<u32>,
    #[serde(rename = "D")]
    pub d: Option<u32>,
    pub algorithm: Algorithm,
    /// Highest phase reached by a fault-free node.
    pub phases: Option<u32>,
    /// Rounds simulated.
    pub rounds: Option<u32>,
    pub final_range: Option<f64>,
    pub validity: Option<bool>,
    pub agreement: Option<bool>,
    pub rate_max: Option<f64>,
    pub termination: Option<Round>,
    pub passed: bool,
    pub error: Option<String>,
}

impl SweepSummary {
    fn blank(s: &Scenario) -> Self {
        let (t, d) = s.schedule.window_degree(s.config.n);
        SweepSummary {
            seed: s.config.seed,
            n: s.config.n,
            f: s.config.f,
            t,
            d,
            algorithm: s.config.algorithm,
            phases: None,
            rounds: None,
            final_range: None,
            validity: None,
            agreement: None,
            rate_max: None,
            termination: None,
            passed: false,
            error: None,
        }
    }

    pub fn from_run(s: &Scenario, trace: &Trace, verdict: &Verdict) -> Self {
        let phases = all_nodes(trace.n())
            .filter(|&v| trace.is_fault_free(v))
            .map(|v| trace.last_checkpoint()[v.index()].phase)
            .max();
        SweepSummary {
            phases,
            rounds: Some(trace.rounds.len() as u32),
            final_range: verdict.achieved_range,
            validity: Some(verdict.validity),
            agreement: Some(verdict.eps_agreement),
            rate_max: Some(verdict.rate_max()),
            termination: verdict.termination,
            passed: verdict.passed(),
            ..Self::blank(s)
        }
    }

    pub fn from_error(s: &Scenario, err: &CoreError) -> Self {
        SweepSummary {
            error: Some(err.to_string()),
            ..Self::blank(s)
        }
    }
}

/// One sweep cell: a fully patched scenario with its seed applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub patch: usize,
    pub scenario: Scenario,
}

/// Cells of a sweep, patch-major. An empty patch list means one identity
/// patch.
pub fn sweep_cells(base: &Scenario, seeds: &[u64], patches: &[ConfigPatch]) -> Vec<Cell> {
    let identity = [ConfigPatch::default()];
    let patches = if patches.is_empty() {
        &identity[..]
    } else {
        patches
    };
    let mut cells = Vec::with_capacity(patches.len() * seeds.len());
    for (pi, patch) in patches.iter().enumerate() {
        let patched = patch.apply(base);
        for &seed in seeds {
            cells.push(Cell {
                index: cells.len(),
                patch: pi,
                scenario: patched.with_seed(seed),
            });
        }
    }
    cells
}

/// Runs one cell; errors become a summary row.
pub fn run_cell(cell: &Cell) -> SweepSummary {
    match run_scenario(&cell.scenario) {
        Ok((trace, verdict)) => SweepSummary::from_run(&cell.scenario, &trace, &verdict),
        Err(err) => SweepSummary::from_error(&cell.scenario, &err),
    }
}

/// Sequential sweep.
pub fn run_sweep(base: &Scenario, seeds: &[u64], patches: &[ConfigPatch]) -> Vec<SweepSummary> {
    sweep_cells(base, seeds, patches)
        .iter()
        .map(run_cell)
        .collect()
}
