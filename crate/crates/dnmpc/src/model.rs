//! Agent dynamics, joint constraints and admissibility semantics.
//!
//! An [`AgentModel`] owns one discrete-time system with a finite, totally
//! ordered control set. Agents are coupled only through [`JointConstraint`]s
//! over their states (same instant) or transitions (state pairs). What an
//! agent knows about its neighbours is an [`InfoSet`] of predicted
//! trajectories, each stamped with the time it was solved at; a neighbour
//! constrains the agent only while its stored prediction still covers the
//! queried absolute time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::CostValue;

/// Index of one agent/system, unique within a scenario.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("record from {0} is malformed: {1} states for horizon {2}")]
    MalformedRecord(AgentId, usize, usize),
    #[error("info set for {0} may not contain a record about itself")]
    SelfRecord(AgentId),
    #[error("control sequence has length {0}, expected horizon {1}")]
    LengthMismatch(usize, usize),
}

type StepFn<S, U> = Arc<dyn Fn(&S, &U) -> S + Send + Sync>;
type PredFn<S> = Arc<dyn Fn(&S) -> bool + Send + Sync>;
type CostFn<S, U, C> = Arc<dyn Fn(&S, &U) -> C + Send + Sync>;

/// One agent's system: dynamics, finite control set (in its fixed
/// tie-breaking order), local state constraint, stage cost, reference state
/// and optimization horizon.
#[derive(Clone)]
pub struct AgentModel<S, U, C> {
    pub id: AgentId,
    pub horizon: usize,
    pub reference: S,
    pub controls: Vec<U>,
    step: StepFn<S, U>,
    local_ok: PredFn<S>,
    cost: CostFn<S, U, C>,
}

impl<S, U, C> AgentModel<S, U, C> {
    pub fn new(
        id: AgentId,
        horizon: usize,
        reference: S,
        controls: Vec<U>,
        step: StepFn<S, U>,
        local_ok: PredFn<S>,
        cost: CostFn<S, U, C>,
    ) -> Self {
        assert!(horizon >= 1, "horizon must be at least 1");
        assert!(!controls.is_empty(), "control set must be nonempty");
        AgentModel { id, horizon, reference, controls, step, local_ok, cost }
    }

    pub fn step(&self, x: &S, u: &U) -> S {
        (self.step)(x, u)
    }

    pub fn local_ok(&self, x: &S) -> bool {
        (self.local_ok)(x)
    }

    pub fn stage_cost(&self, x: &S, u: &U) -> C {
        (self.cost)(x, u)
    }

    /// Same agent with a different optimization horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self
    where
        S: Clone,
        U: Clone,
        C: Clone,
    {
        let mut m = self.clone();
        assert!(horizon >= 1);
        m.horizon = horizon;
        m
    }

    /// A control that keeps the reference fixed at zero stage cost, if one
    /// exists. Needed to certify infinite-horizon values.
    pub fn neutral_control(&self) -> Option<&U>
    where
        S: PartialEq,
        C: CostValue,
    {
        self.controls
            .iter()
            .find(|u| self.step(&self.reference, u) == self.reference && self.stage_cost(&self.reference, u).is_zero())
    }
}

/// Which slice of the agents a joint constraint couples and how it is
/// evaluated.
#[derive(Clone)]
pub enum CouplingCheck<S> {
    /// Predicate over same-instant states of the scope members.
    State(Arc<dyn Fn(&BTreeMap<AgentId, &S>) -> bool + Send + Sync>),
    /// Predicate over (current, next) state pairs of the scope members.
    Transition(Arc<dyn Fn(&BTreeMap<AgentId, (&S, &S)>) -> bool + Send + Sync>),
}

/// A pure constraint coupling two or more agents.
#[derive(Clone)]
pub struct JointConstraint<S> {
    pub id: String,
    pub scope: BTreeSet<AgentId>,
    pub check: CouplingCheck<S>,
}

impl<S> JointConstraint<S> {
    pub fn state(
        id: impl Into<String>,
        scope: impl IntoIterator<Item = AgentId>,
        check: impl Fn(&BTreeMap<AgentId, &S>) -> bool + Send + Sync + 'static,
    ) -> Self {
        let scope: BTreeSet<_> = scope.into_iter().collect();
        assert!(scope.len() >= 2, "joint constraints couple at least two agents");
        JointConstraint { id: id.into(), scope, check: CouplingCheck::State(Arc::new(check)) }
    }

    pub fn transition(
        id: impl Into<String>,
        scope: impl IntoIterator<Item = AgentId>,
        check: impl Fn(&BTreeMap<AgentId, (&S, &S)>) -> bool + Send + Sync + 'static,
    ) -> Self {
        let scope: BTreeSet<_> = scope.into_iter().collect();
        assert!(scope.len() >= 2, "joint constraints couple at least two agents");
        JointConstraint { id: id.into(), scope, check: CouplingCheck::Transition(Arc::new(check)) }
    }
}

/// A neighbour's predicted state sequence: who solved it, when, and the
/// states it covers (`horizon + 1` of them).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborRecord<S> {
    pub source: AgentId,
    pub solved_at: usize,
    pub horizon: usize,
    pub states: Vec<S>,
}

impl<S> NeighborRecord<S> {
    pub fn new(source: AgentId, solved_at: usize, states: Vec<S>) -> Self {
        assert!(!states.is_empty());
        let horizon = states.len() - 1;
        NeighborRecord { source, solved_at, horizon, states }
    }

    /// Last absolute time instant this prediction covers.
    pub fn covers_until(&self) -> usize {
        self.solved_at + self.horizon
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.states.len() != self.horizon + 1 {
            return Err(ModelError::MalformedRecord(self.source, self.states.len(), self.horizon));
        }
        Ok(())
    }
}

/// Everything one agent currently knows about its neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfoSet<S> {
    pub owner: AgentId,
    records: BTreeMap<AgentId, NeighborRecord<S>>,
}

impl<S> InfoSet<S> {
    pub fn new(owner: AgentId) -> Self {
        InfoSet { owner, records: BTreeMap::new() }
    }

    /// Insert or replace the record from `record.source`.
    pub fn insert(&mut self, record: NeighborRecord<S>) -> Result<(), ModelError> {
        if record.source == self.owner {
            return Err(ModelError::SelfRecord(self.owner));
        }
        self.records.insert(record.source, record);
        Ok(())
    }

    pub fn get(&self, source: AgentId) -> Option<&NeighborRecord<S>> {
        self.records.get(&source)
    }

    pub fn records(&self) -> impl Iterator<Item = &NeighborRecord<S>> {
        self.records.values()
    }

    pub fn sources(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.records.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// A rolled-out trajectory; `states` is one longer than `controls`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory<S, U> {
    pub start_time: usize,
    pub states: Vec<S>,
    pub controls: Vec<U>,
}

/// Simulate the dynamics from `x0` under `controls`.
pub fn rollout<S: Clone, U: Clone, C>(
    model: &AgentModel<S, U, C>,
    x0: &S,
    start_time: usize,
    controls: &[U],
) -> Trajectory<S, U> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for u in controls {
        let next = model.step(states.last().unwrap(), u);
        states.push(next);
    }
    Trajectory { start_time, states: states.clone(), controls: controls.to_vec() }
}

/// The neighbours whose stored prediction still covers absolute time `n + k`.
pub fn prediction_index_set<S>(info: &InfoSet<S>, n: usize, k: usize) -> BTreeSet<AgentId> {
    info.records()
        .filter(|r| n + k <= r.covers_until())
        .map(|r| r.source)
        .collect()
}

/// The couplings fully expressible over `ids ∪ {owner}`.
pub fn project_scope<'a, S>(
    couplings: &'a [JointConstraint<S>],
    owner: AgentId,
    ids: &BTreeSet<AgentId>,
) -> Vec<&'a JointConstraint<S>> {
    couplings
        .iter()
        .filter(|c| c.scope.iter().all(|a| *a == owner || ids.contains(a)))
        .collect()
}

/// One reason a control sequence is inadmissible: the prediction offset `k`,
/// the constraint that failed, and the neighbours that induced it (empty for
/// local violations).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub constraint: String,
    pub inducers: Vec<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Violations(Vec<Violation>),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Verdict::Ok => &[],
            Verdict::Violations(v) => v,
        }
    }
}

/// Decide whether `controls` is admissible for `model` at time `n` given the
/// neighbouring information `info`.
///
/// For every offset `k` the control must come from the model's control set,
/// the predicted own state must satisfy the local constraint, and every
/// coupling whose neighbours all still constrain the agent at `n + k` must
/// hold with neighbour states read at the aligned index `k + n - n_q`.
/// Neighbours whose prediction has expired are ignored; transition couplings
/// are skipped at the last covered index of a neighbour record.
pub fn admissible<S, U, C>(
    model: &AgentModel<S, U, C>,
    x0: &S,
    n: usize,
    info: &InfoSet<S>,
    couplings: &[JointConstraint<S>],
    controls: &[U],
) -> Result<Verdict, ModelError>
where
    S: Clone + Eq,
    U: Clone + Eq,
    C: CostValue,
{
    if controls.len() != model.horizon {
        return Err(ModelError::LengthMismatch(controls.len(), model.horizon));
    }
    for rec in info.records() {
        rec.validate()?;
        // Def. 3 requires n_q <= n; negative alignment cannot occur.
        assert!(rec.solved_at <= n, "record from the future: {} > {}", rec.solved_at, n);
    }

    let me = model.id;
    let traj = rollout(model, x0, n, controls);
    let horizon = model.horizon;
    let mut violations = Vec::new();

    for k in 0..=horizon {
        if k < horizon && !model.controls.contains(&controls[k]) {
            violations.push(Violation { k, constraint: "control_set".into(), inducers: vec![] });
        }
        if !model.local_ok(&traj.states[k]) {
            violations.push(Violation { k, constraint: "local_state".into(), inducers: vec![] });
        }

        let active = prediction_index_set(info, n, k);
        for c in couplings {
            if !c.scope.contains(&me) {
                continue;
            }
            let others: Vec<AgentId> = c.scope.iter().copied().filter(|q| *q != me).collect();
            match &c.check {
                CouplingCheck::State(check) => {
                    if !others.iter().all(|q| active.contains(q)) {
                        continue;
                    }
                    let mut tuple: BTreeMap<AgentId, &S> = BTreeMap::new();
                    tuple.insert(me, &traj.states[k]);
                    for q in &others {
                        let rec = info.get(*q).unwrap();
                        tuple.insert(*q, &rec.states[k + n - rec.solved_at]);
                    }
                    if !check(&tuple) {
                        violations.push(Violation { k, constraint: c.id.clone(), inducers: others.clone() });
                    }
                }
                CouplingCheck::Transition(check) => {
                    if k >= horizon {
                        continue;
                    }
                    // Both endpoints of every neighbour transition must be
                    // inside the prediction window.
                    let next_active = prediction_index_set(info, n, k + 1);
                    if !others.iter().all(|q| next_active.contains(q)) {
                        continue;
                    }
                    let mut tuple: BTreeMap<AgentId, (&S, &S)> = BTreeMap::new();
                    tuple.insert(me, (&traj.states[k], &traj.states[k + 1]));
                    for q in &others {
                        let rec = info.get(*q).unwrap();
                        let i = k + n - rec.solved_at;
                        tuple.insert(*q, (&rec.states[i], &rec.states[i + 1]));
                    }
                    if !check(&tuple) {
                        violations.push(Violation { k, constraint: c.id.clone(), inducers: others.clone() });
                    }
                }
            }
        }
    }

    violations.sort();
    if violations.is_empty() {
        Ok(Verdict::Ok)
    } else {
        Ok(Verdict::Violations(violations))
    }
}

/// A scenario: the agents, the constraints coupling them and the initial
/// joint state.
#[derive(Clone)]
pub struct Scenario<S, U, C> {
    pub agents: Vec<AgentModel<S, U, C>>,
    pub couplings: Vec<JointConstraint<S>>,
    pub starts: BTreeMap<AgentId, S>,
}

impl<S, U, C> Scenario<S, U, C> {
    pub fn agent(&self, id: AgentId) -> &AgentModel<S, U, C> {
        self.agents
            .iter()
            .find(|a| a.id == id)
            .unwrap_or_else(|| panic!("no agent {id} in scenario"))
    }

    pub fn ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.id).collect()
    }
}
