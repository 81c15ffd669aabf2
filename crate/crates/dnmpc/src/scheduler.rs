//! The covering scheduler: priority levels, decision memory, deordering.
//!
//! Each control step sorts the agents into an ordered list of levels.
//! Members of one level solve in parallel; levels run in series. An agent
//! lands below level one only because some higher-priority agent's plan
//! induced a constraint it violated — those inducers form the agent's
//! *decision memory*, which is exactly the set of neighbours whose plans it
//! accounts for when solving. A deordering rule may later shrink that
//! memory, flattening the hierarchy back towards fully parallel operation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{admissible, AgentId, InfoSet, NeighborRecord, Scenario};
use crate::numeric::CostValue;
use crate::solver::{solve_ocp, Plan, SolveError};

/// The priority levels, lowest index = highest priority. Order within a
/// level is the list order the rules operate on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy(pub Vec<Vec<AgentId>>);

impl Hierarchy {
    /// Everyone in the top level: the initial, fully parallel hierarchy.
    pub fn flat(ids: impl IntoIterator<Item = AgentId>) -> Self {
        Hierarchy(vec![ids.into_iter().collect()])
    }

    pub fn levels(&self) -> &[Vec<AgentId>] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Zero-based level of `id`, if present.
    pub fn level_of(&self, id: AgentId) -> Option<usize> {
        self.0.iter().position(|level| level.contains(&id))
    }

    fn compact(&mut self) {
        self.0.retain(|level| !level.is_empty());
        if self.0.is_empty() {
            self.0.push(Vec::new());
        }
    }
}

/// One remembered inducer: who forced the demotion and at which step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub neighbor: AgentId,
    pub acquired_at: usize,
}

/// Decision memory per agent; absence means empty.
pub type Memory = BTreeMap<AgentId, Vec<MemoryEntry>>;

/// Sorts the members of one level into processing order. The output must be
/// a permutation of the input.
pub trait PriorityRule<C>: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, level: &[AgentId], values: &BTreeMap<AgentId, C>) -> Vec<AgentId>;
}

/// Smallest id first.
pub struct Lexicographic;

impl<C> PriorityRule<C> for Lexicographic {
    fn name(&self) -> &'static str {
        "lexicographic"
    }
    fn apply(&self, level: &[AgentId], _values: &BTreeMap<AgentId, C>) -> Vec<AgentId> {
        let mut out = level.to_vec();
        out.sort();
        out
    }
}

/// Keep the incoming list order.
pub struct Identity;

impl<C> PriorityRule<C> for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn apply(&self, level: &[AgentId], _values: &BTreeMap<AgentId, C>) -> Vec<AgentId> {
        level.to_vec()
    }
}

/// Highest open-loop cost first: the most constrained agent plans first.
pub struct CostGreedy;

impl<C: CostValue> PriorityRule<C> for CostGreedy {
    fn name(&self) -> &'static str {
        "cost_greedy"
    }
    fn apply(&self, level: &[AgentId], values: &BTreeMap<AgentId, C>) -> Vec<AgentId> {
        let mut out = level.to_vec();
        out.sort_by(|a, b| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(b))
        });
        out
    }
}

/// Shrinks a decision memory. `None` leaves the memory untouched; `Some`
/// must be a strict subset of the input entries.
pub trait DeorderRule: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, memory: &[MemoryEntry], n: usize) -> Option<Vec<MemoryEntry>>;
}

/// Forget everything each step: retest every coupling from scratch.
pub struct DropAll;

impl DeorderRule for DropAll {
    fn name(&self) -> &'static str {
        "drop_all"
    }
    fn apply(&self, memory: &[MemoryEntry], _n: usize) -> Option<Vec<MemoryEntry>> {
        (!memory.is_empty()).then(Vec::new)
    }
}

/// Forget the entries acquired earliest.
pub struct DropOldest;

impl DeorderRule for DropOldest {
    fn name(&self) -> &'static str {
        "drop_oldest"
    }
    fn apply(&self, memory: &[MemoryEntry], _n: usize) -> Option<Vec<MemoryEntry>> {
        let oldest = memory.iter().map(|e| e.acquired_at).min()?;
        Some(memory.iter().copied().filter(|e| e.acquired_at > oldest).collect())
    }
}

/// Never forget: the hierarchy only flattens through relocation.
pub struct Never;

impl DeorderRule for Never {
    fn name(&self) -> &'static str {
        "never"
    }
    fn apply(&self, _memory: &[MemoryEntry], _n: usize) -> Option<Vec<MemoryEntry>> {
        None
    }
}

/// Look up a priority rule by its config name.
pub fn priority_rule<C: CostValue>(name: &str) -> Result<Box<dyn PriorityRule<C>>, SchedulerError> {
    match name {
        "lexicographic" | "lex" => Ok(Box::new(Lexicographic)),
        "identity" => Ok(Box::new(Identity)),
        "cost_greedy" => Ok(Box::new(CostGreedy)),
        other => Err(SchedulerError::UnknownRule(other.to_string())),
    }
}

/// Look up a deordering rule by its config name.
pub fn deorder_rule(name: &str) -> Result<Box<dyn DeorderRule>, SchedulerError> {
    match name {
        "drop_all" => Ok(Box::new(DropAll)),
        "drop_oldest" => Ok(Box::new(DropOldest)),
        "never" => Ok(Box::new(Never)),
        other => Err(SchedulerError::UnknownRule(other.to_string())),
    }
}

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("priority rule `{0}` did not return a permutation of the level")]
    PriorityContract(String),
    #[error("deordering rule `{0}` did not return a strict subset of the memory")]
    DeorderContract(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
}

/// One demotion event: `agent` violated constraints induced by `inducers`
/// and was pushed from `from_level` to `to_level` (zero-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demotion {
    pub agent: AgentId,
    pub from_level: usize,
    pub to_level: usize,
    pub inducers: Vec<AgentId>,
}

/// Everything one scheduler step produced.
#[derive(Clone, Debug)]
pub struct StepOutcome<S, U, C> {
    pub n: usize,
    pub states: BTreeMap<AgentId, S>,
    pub applied: BTreeMap<AgentId, U>,
    pub next_states: BTreeMap<AgentId, S>,
    /// Each agent's final open-loop plan for this step.
    pub plans: BTreeMap<AgentId, Plan<S, U, C>>,
    /// The neighbour records each agent's final solve actually used.
    pub infos: BTreeMap<AgentId, Vec<NeighborRecord<S>>>,
    pub hierarchy_before: Hierarchy,
    pub hierarchy_after: Hierarchy,
    pub memory: Memory,
    pub demotions: Vec<Demotion>,
}

/// Runs one full scheduler step: deordering/relocation, the parallel initial
/// solves, level-by-level conflict resolution, and the choice of the applied
/// controls.
pub struct Coordinator<C> {
    pub priority: Box<dyn PriorityRule<C>>,
    pub deorder: Box<dyn DeorderRule>,
}

/// A within-step publication: the sender's level when it published, and its
/// current plan's record. Visible to readers at the same or a lower level.
type Registry<S> = BTreeMap<AgentId, (usize, NeighborRecord<S>)>;

fn build_info<S: Clone>(
    owner: AgentId,
    owner_level: usize,
    memory: &Memory,
    registry: &Registry<S>,
    store: &InfoSet<S>,
) -> InfoSet<S> {
    let mut info = InfoSet::new(owner);
    let Some(entries) = memory.get(&owner) else { return info };
    for e in entries {
        let fresh = registry
            .get(&e.neighbor)
            .filter(|(level, _)| *level <= owner_level)
            .map(|(_, rec)| rec);
        if let Some(rec) = fresh.or_else(|| store.get(e.neighbor)) {
            info.insert(rec.clone()).expect("memory never contains the owner");
        }
    }
    info
}

impl<C: CostValue> Coordinator<C> {
    pub fn new(priority: Box<dyn PriorityRule<C>>, deorder: Box<dyn DeorderRule>) -> Self {
        Coordinator { priority, deorder }
    }

    /// Solve all `members` in parallel against their prebuilt info sets.
    /// Errors surface in member order, independent of scheduling.
    #[allow(clippy::type_complexity)]
    fn solve_level<S, U>(
        &self,
        scenario: &Scenario<S, U, C>,
        states: &BTreeMap<AgentId, S>,
        n: usize,
        jobs: Vec<(AgentId, InfoSet<S>)>,
    ) -> Result<Vec<(AgentId, InfoSet<S>, Plan<S, U, C>)>, SolveError>
    where
        S: Clone + Eq + Send + Sync,
        U: Clone + Eq + Send + Sync,
    {
        let results: Vec<_> = jobs
            .into_par_iter()
            .map(|(p, info)| {
                solve_ocp(scenario.agent(p), &states[&p], n, &info, &scenario.couplings)
                    .map(|plan| (p, info, plan))
            })
            .collect();
        results.into_iter().collect()
    }

    /// One scheduler step at time `n`. `store` holds the neighbour records
    /// each agent received over the network in previous steps; `hierarchy`
    /// and `memory` carry over from the previous step.
    pub fn step<S, U>(
        &self,
        scenario: &Scenario<S, U, C>,
        states: &BTreeMap<AgentId, S>,
        n: usize,
        store: &BTreeMap<AgentId, InfoSet<S>>,
        hierarchy: &Hierarchy,
        memory: &Memory,
    ) -> Result<StepOutcome<S, U, C>, SchedulerError>
    where
        S: Clone + Eq + Send + Sync,
        U: Clone + Eq + Send + Sync,
    {
        let hierarchy_before = hierarchy.clone();
        let mut levels = hierarchy.0.clone();
        let mut memory = memory.clone();

        // Deordering and relocation: agents below the top level may forget
        // inducers. Empty memory sends an agent back to the top; otherwise
        // it moves up to the lowest level holding a remembered inducer.
        let mut i = 1;
        while i < levels.len() {
            for p in levels[i].clone() {
                let entries = memory.get(&p).cloned().unwrap_or_default();
                let entries = match self.deorder.apply(&entries, n) {
                    None => entries,
                    Some(out) => {
                        let strict = out.len() < entries.len()
                            && out.iter().all(|e| entries.contains(e));
                        if !strict {
                            return Err(SchedulerError::DeorderContract(
                                self.deorder.name().to_string(),
                            ));
                        }
                        out
                    }
                };
                let target = if entries.is_empty() {
                    memory.remove(&p);
                    Some(0)
                } else {
                    memory.insert(p, entries.clone());
                    entries
                        .iter()
                        .filter_map(|e| levels.iter().position(|l| l.contains(&e.neighbor)))
                        .min()
                        .filter(|m| *m < i)
                };
                if let Some(m) = target {
                    levels[i].retain(|q| *q != p);
                    levels[m].push(p);
                }
            }
            i += 1;
        }
        let mut hierarchy = Hierarchy(levels);
        hierarchy.compact();
        let mut levels = hierarchy.0;

        // Initial solves: every agent in parallel, each constrained only by
        // the remembered neighbours' stored records, then publish.
        let jobs: Vec<(AgentId, InfoSet<S>)> = levels
            .iter()
            .enumerate()
            .flat_map(|(lvl, members)| members.iter().map(move |p| (*p, lvl)))
            .map(|(p, lvl)| {
                let own_store = store.get(&p).cloned().unwrap_or_else(|| InfoSet::new(p));
                (p, build_info(p, lvl, &memory, &BTreeMap::new(), &own_store))
            })
            .collect();
        let mut plans: BTreeMap<AgentId, Plan<S, U, C>> = BTreeMap::new();
        let mut infos: BTreeMap<AgentId, Vec<NeighborRecord<S>>> = BTreeMap::new();
        let mut registry: Registry<S> = BTreeMap::new();
        for (p, info, plan) in self.solve_level(scenario, states, n, jobs)? {
            let lvl = levels.iter().position(|l| l.contains(&p)).unwrap();
            registry.insert(p, (lvl, plan.to_record()));
            infos.insert(p, info.records().cloned().collect());
            plans.insert(p, plan);
        }

        // Conflict resolution, level by level: sort, demote members that
        // violate constraints induced by earlier survivors, then re-solve
        // the whole next level with the fresh publications.
        let mut demotions = Vec::new();
        let mut i = 0;
        while i < levels.len() {
            if levels[i].len() >= 2 {
                let values: BTreeMap<AgentId, C> =
                    levels[i].iter().map(|p| (*p, plans[p].value.clone())).collect();
                let sorted = self.priority.apply(&levels[i], &values);
                let mut check = sorted.clone();
                let mut orig = levels[i].clone();
                check.sort();
                orig.sort();
                if check != orig {
                    return Err(SchedulerError::PriorityContract(
                        self.priority.name().to_string(),
                    ));
                }

                let mut survivors = vec![sorted[0]];
                let mut demoted = Vec::new();
                for &p in &sorted[1..] {
                    let mut against = InfoSet::new(p);
                    for s in &survivors {
                        against.insert(registry[s].1.clone()).unwrap();
                    }
                    let verdict = admissible(
                        scenario.agent(p),
                        &states[&p],
                        n,
                        &against,
                        &scenario.couplings,
                        &plans[&p].controls,
                    )
                    .expect("solved plans have the right shape");
                    if verdict.is_ok() {
                        survivors.push(p);
                    } else {
                        let mut inducers: Vec<AgentId> = verdict
                            .violations()
                            .iter()
                            .flat_map(|v| v.inducers.iter().copied())
                            .filter(|q| survivors.contains(q))
                            .collect();
                        inducers.sort();
                        inducers.dedup();
                        debug_assert!(!inducers.is_empty(), "demotion without inducers");
                        let entries = memory.entry(p).or_default();
                        for q in &inducers {
                            entries.retain(|e| e.neighbor != *q);
                            entries.push(MemoryEntry { neighbor: *q, acquired_at: n });
                        }
                        demotions.push(Demotion {
                            agent: p,
                            from_level: i,
                            to_level: i + 1,
                            inducers,
                        });
                        demoted.push(p);
                    }
                }
                levels[i] = survivors;
                if !demoted.is_empty() {
                    if i + 1 == levels.len() {
                        levels.push(Vec::new());
                    }
                    levels[i + 1].extend(demoted);
                }
            }

            if i + 1 < levels.len() && !levels[i + 1].is_empty() {
                let jobs: Vec<(AgentId, InfoSet<S>)> = levels[i + 1]
                    .iter()
                    .map(|p| {
                        let own_store =
                            store.get(p).cloned().unwrap_or_else(|| InfoSet::new(*p));
                        (*p, build_info(*p, i + 1, &memory, &registry, &own_store))
                    })
                    .collect();
                for (p, info, plan) in self.solve_level(scenario, states, n, jobs)? {
                    registry.insert(p, (i + 1, plan.to_record()));
                    infos.insert(p, info.records().cloned().collect());
                    plans.insert(p, plan);
                }
            }
            i += 1;
        }

        memory.retain(|_, entries| !entries.is_empty());

        let applied: BTreeMap<AgentId, U> =
            plans.iter().map(|(p, plan)| (*p, plan.controls[0].clone())).collect();
        let next_states: BTreeMap<AgentId, S> =
            plans.iter().map(|(p, plan)| (*p, plan.states[1].clone())).collect();

        Ok(StepOutcome {
            n,
            states: states.clone(),
            applied,
            next_states,
            plans,
            infos,
            hierarchy_before,
            hierarchy_after: Hierarchy(levels),
            memory,
            demotions,
        })
    }
}
