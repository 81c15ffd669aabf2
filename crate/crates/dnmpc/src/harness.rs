//! Closed-loop driver: repeat measure → schedule → apply, with a network
//! model degrading the cross-step exchange of predicted trajectories.
//!
//! Within one step the scheduler's own messages are always delivered; the
//! network only affects which records survive into later steps. A lost
//! message leaves the recipient's previous (stale) record in place, a
//! delayed one arrives later but keeps its original solve time, so index
//! alignment is unaffected.

use std::collections::BTreeMap;

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, InfoSet, NeighborRecord, Scenario};
use crate::numeric::CostValue;
use crate::scheduler::{Coordinator, Demotion, Hierarchy, Memory, SchedulerError};
use crate::solver::Plan;

/// Which directed communication links exist at a given step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    /// Every agent hears every other agent.
    Full,
    /// Only the listed directed edges exist, at every step.
    Fixed(Vec<(AgentId, AgentId)>),
    /// Edge sets cycled over time: step `n` uses entry `n % len`.
    Cycle(Vec<Vec<(AgentId, AgentId)>>),
}

impl Adjacency {
    pub fn connects(&self, n: usize, from: AgentId, to: AgentId) -> bool {
        match self {
            Adjacency::Full => true,
            Adjacency::Fixed(edges) => edges.contains(&(from, to)),
            Adjacency::Cycle(steps) => {
                assert!(!steps.is_empty(), "cyclic schedule must be nonempty");
                steps[n % steps.len()].contains(&(from, to))
            }
        }
    }
}

/// Cross-step message degradation: a time-varying directed graph, i.i.d.
/// per-message loss, and a fixed delivery delay. Deterministic given `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub adjacency: Adjacency,
    pub loss: f64,
    pub delay: usize,
    pub seed: u64,
}

impl NetworkModel {
    /// Full graph, no loss, no delay: the reference-table setting.
    pub fn ideal() -> Self {
        NetworkModel { adjacency: Adjacency::Full, loss: 0.0, delay: 0, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(format!("loss probability {} outside [0, 1]", self.loss));
        }
        Ok(())
    }
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel::ideal()
    }
}

/// A record in transit from `source` to `recipient`.
#[derive(Clone, Debug)]
pub struct Message<S> {
    pub source: AgentId,
    pub recipient: AgentId,
    pub record: NeighborRecord<S>,
}

/// What each agent currently knows about each other agent, plus records
/// still in transit. A stored record is only replaced by a strictly newer
/// one, so losses leave stale information behind rather than gaps.
#[derive(Clone, Debug, Default)]
pub struct InfoStore<S> {
    records: BTreeMap<(AgentId, AgentId), NeighborRecord<S>>,
    in_flight: BTreeMap<usize, Vec<(AgentId, NeighborRecord<S>)>>,
}

impl<S: Clone> InfoStore<S> {
    pub fn new() -> Self {
        InfoStore { records: BTreeMap::new(), in_flight: BTreeMap::new() }
    }

    fn accept(&mut self, recipient: AgentId, record: NeighborRecord<S>) {
        if recipient == record.source {
            return;
        }
        let key = (recipient, record.source);
        match self.records.get(&key) {
            Some(old) if old.solved_at >= record.solved_at => {}
            _ => {
                self.records.insert(key, record);
            }
        }
    }

    /// Move every in-flight record due at or before step `n` into the store.
    pub fn deliver_due(&mut self, n: usize) {
        let due: Vec<usize> = self.in_flight.range(..=n).map(|(k, _)| *k).collect();
        for at in due {
            for (recipient, record) in self.in_flight.remove(&at).unwrap() {
                self.accept(recipient, record);
            }
        }
    }

    pub fn get(&self, recipient: AgentId, source: AgentId) -> Option<&NeighborRecord<S>> {
        self.records.get(&(recipient, source))
    }

    pub fn info_for(&self, recipient: AgentId) -> InfoSet<S> {
        let mut info = InfoSet::new(recipient);
        for ((r, _), record) in &self.records {
            if *r == recipient {
                info.insert(record.clone()).unwrap();
            }
        }
        info
    }

    pub fn snapshot(&self, ids: &[AgentId]) -> BTreeMap<AgentId, InfoSet<S>> {
        ids.iter().map(|p| (*p, self.info_for(*p))).collect()
    }
}

/// Push `messages` through the network at step `n`: drop edges missing from
/// the schedule, drop lost messages, and queue the rest for delivery after
/// `delay` steps. Returns the (recipient, source) pairs that survived.
/// Deterministic: messages are processed sorted by (recipient, source) and
/// the loss draws come from a stream seeded by (seed, n).
pub fn network_apply<S: Clone>(
    store: &mut InfoStore<S>,
    mut messages: Vec<Message<S>>,
    network: &NetworkModel,
    n: usize,
) -> Vec<(AgentId, AgentId)> {
    messages.sort_by_key(|m| (m.recipient, m.source));
    let mut rng = ChaCha8Rng::seed_from_u64(network.seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let loss = Bernoulli::new(network.loss).expect("loss probability validated");
    let mut delivered = Vec::new();
    for m in messages {
        if !network.adjacency.connects(n, m.source, m.recipient) {
            continue;
        }
        if loss.sample(&mut rng) {
            continue;
        }
        delivered.push((m.recipient, m.source));
        store
            .in_flight
            .entry(n + network.delay)
            .or_default()
            .push((m.recipient, m.record));
    }
    delivered
}

/// One closed-loop step as recorded in a trace. `values` are the open-loop
/// optimal values of the final plans; `stage_costs` the running costs of the
/// applied controls. Levels are zero-based (top level = 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep<S, U, C> {
    pub n: usize,
    pub states: BTreeMap<AgentId, S>,
    pub controls: BTreeMap<AgentId, U>,
    pub values: BTreeMap<AgentId, C>,
    pub stage_costs: BTreeMap<AgentId, C>,
    pub levels: BTreeMap<AgentId, usize>,
    pub memory: Memory,
    pub demotions: Vec<Demotion>,
    pub hierarchy_before: Hierarchy,
    pub hierarchy_after: Hierarchy,
    pub plans: BTreeMap<AgentId, Plan<S, U, C>>,
    pub infos: BTreeMap<AgentId, Vec<NeighborRecord<S>>>,
}

/// A full closed-loop record: one entry per step plus the terminal states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace<S, U, C> {
    pub steps: Vec<TraceStep<S, U, C>>,
    pub final_states: BTreeMap<AgentId, S>,
}

impl<S, U, C> RunTrace<S, U, C> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Error)]
#[error("step {step}: {source}")]
pub struct RunError {
    pub step: usize,
    #[source]
    pub source: SchedulerError,
}

impl RunError {
    /// True when the failure is an empty admissible set (infeasibility)
    /// rather than a rule-contract or budget problem.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self.source,
            SchedulerError::Solve(crate::solver::SolveError::EmptyAdmissibleSet(_))
        )
    }
}

/// Run the scheduler for `t_steps` steps from the scenario's initial states.
pub fn run_closed_loop<S, U, C>(
    scenario: &Scenario<S, U, C>,
    coordinator: &Coordinator<C>,
    network: &NetworkModel,
    t_steps: usize,
) -> Result<RunTrace<S, U, C>, RunError>
where
    S: Clone + Eq + Send + Sync,
    U: Clone + Eq + Send + Sync,
    C: CostValue,
{
    assert!(t_steps >= 1, "need at least one step");
    network.validate().expect("network model validated by the caller");

    let ids = scenario.ids();
    let mut states = scenario.starts.clone();
    let mut hierarchy = Hierarchy::flat(ids.iter().copied());
    let mut memory = Memory::new();
    let mut store: InfoStore<S> = InfoStore::new();
    let mut steps = Vec::with_capacity(t_steps);

    for n in 0..t_steps {
        store.deliver_due(n);
        let infos = store.snapshot(&ids);
        let out = coordinator
            .step(scenario, &states, n, &infos, &hierarchy, &memory)
            .map_err(|source| RunError { step: n, source })?;

        let values = out.plans.iter().map(|(p, plan)| (*p, plan.value.clone())).collect();
        let stage_costs = out
            .applied
            .iter()
            .map(|(p, u)| (*p, scenario.agent(*p).stage_cost(&states[p], u)))
            .collect();
        let levels = ids
            .iter()
            .map(|p| (*p, out.hierarchy_after.level_of(*p).expect("agent in hierarchy")))
            .collect();

        // End-of-step broadcast of every final plan to every other agent.
        let messages: Vec<Message<S>> = ids
            .iter()
            .flat_map(|p| {
                let p = *p;
                let record = out.plans[&p].to_record();
                ids.iter().filter(move |q| **q != p).map(move |q| Message {
                    source: p,
                    recipient: *q,
                    record: record.clone(),
                })
            })
            .collect();
        network_apply(&mut store, messages, network, n);

        states = out.next_states.clone();
        hierarchy = out.hierarchy_after.clone();
        memory = out.memory.clone();

        steps.push(TraceStep {
            n,
            states: out.states,
            controls: out.applied,
            values,
            stage_costs,
            levels,
            memory: out.memory,
            demotions: out.demotions,
            hierarchy_before: out.hierarchy_before,
            hierarchy_after: out.hierarchy_after,
            plans: out.plans,
            infos: out.infos,
        });
    }

    Ok(RunTrace { steps, final_states: states })
}
