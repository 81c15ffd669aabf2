//! Exact finite-horizon optimal control over finite control sets.
//!
//! [`solve_ocp`] runs a depth-first search over the ordered control set with
//! admissibility pruning at each depth and incumbent cost pruning;
//! [`enumerate_oracle`] is the independent brute-force reference that checks
//! it. Both return the cost-minimal admissible sequence, breaking ties by
//! the lexicographic order the model's control ordering induces.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    admissible, prediction_index_set, AgentId, AgentModel, CouplingCheck, InfoSet, JointConstraint,
    ModelError, NeighborRecord,
};
use crate::numeric::CostValue;

#[derive(Debug, Error)]
pub enum SolveError {
    /// No admissible control sequence exists; the feasibility theorem's
    /// hypothesis fails at this agent.
    #[error("agent {0}: no admissible control sequence exists")]
    EmptyAdmissibleSet(AgentId),
    #[error("enumeration budget exceeded: |U|^N = {0} sequences")]
    BudgetExceeded(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// An open-loop solution: controls, the predicted trajectory and its cost.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan<S, U, C> {
    pub owner: AgentId,
    pub solved_at: usize,
    pub horizon: usize,
    pub controls: Vec<U>,
    pub states: Vec<S>,
    pub value: C,
}

impl<S: Clone, U, C> Plan<S, U, C> {
    /// The record other agents receive about this plan.
    pub fn to_record(&self) -> NeighborRecord<S> {
        NeighborRecord::new(self.owner, self.solved_at, self.states.clone())
    }
}

/// Per-depth coupling checks, precomputed so the search only evaluates
/// predicates against already-aligned neighbour states.
struct StepChecks<'a, S> {
    /// (constraint, neighbour states at this offset, inducers)
    state: Vec<(&'a JointConstraint<S>, BTreeMap<AgentId, &'a S>, Vec<AgentId>)>,
    /// (constraint, neighbour transitions starting at this offset, inducers)
    transition: Vec<(&'a JointConstraint<S>, BTreeMap<AgentId, (&'a S, &'a S)>, Vec<AgentId>)>,
}

fn build_checks<'a, S, U, C>(
    model: &AgentModel<S, U, C>,
    n: usize,
    info: &'a InfoSet<S>,
    couplings: &'a [JointConstraint<S>],
) -> Vec<StepChecks<'a, S>>
where
    S: Clone + Eq,
{
    let me = model.id;
    (0..=model.horizon)
        .map(|k| {
            let active = prediction_index_set(info, n, k);
            let next_active = prediction_index_set(info, n, k + 1);
            let mut checks = StepChecks { state: Vec::new(), transition: Vec::new() };
            for c in couplings {
                if !c.scope.contains(&me) {
                    continue;
                }
                let others: Vec<AgentId> = c.scope.iter().copied().filter(|q| *q != me).collect();
                match &c.check {
                    CouplingCheck::State(_) => {
                        if others.iter().all(|q| active.contains(q)) {
                            let tuple = others
                                .iter()
                                .map(|q| {
                                    let rec = info.get(*q).unwrap();
                                    (*q, &rec.states[k + n - rec.solved_at])
                                })
                                .collect();
                            checks.state.push((c, tuple, others.clone()));
                        }
                    }
                    CouplingCheck::Transition(_) => {
                        if k < model.horizon && others.iter().all(|q| next_active.contains(q)) {
                            let tuple = others
                                .iter()
                                .map(|q| {
                                    let rec = info.get(*q).unwrap();
                                    let i = k + n - rec.solved_at;
                                    (*q, (&rec.states[i], &rec.states[i + 1]))
                                })
                                .collect();
                            checks.transition.push((c, tuple, others.clone()));
                        }
                    }
                }
            }
            checks
        })
        .collect()
}

fn state_ok<S: Clone + Eq, U, C>(
    model: &AgentModel<S, U, C>,
    checks: &StepChecks<'_, S>,
    x: &S,
) -> bool {
    if !model.local_ok(x) {
        return false;
    }
    checks.state.iter().all(|(c, tuple, _)| match &c.check {
        CouplingCheck::State(f) => {
            let mut t = tuple.clone();
            t.insert(model.id, x);
            f(&t)
        }
        CouplingCheck::Transition(_) => unreachable!(),
    })
}

fn transition_ok<S: Clone + Eq, U, C>(
    model: &AgentModel<S, U, C>,
    checks: &StepChecks<'_, S>,
    x: &S,
    next: &S,
) -> bool {
    checks.transition.iter().all(|(c, tuple, _)| match &c.check {
        CouplingCheck::Transition(f) => {
            let mut t = tuple.clone();
            t.insert(model.id, (x, next));
            f(&t)
        }
        CouplingCheck::State(_) => unreachable!(),
    })
}

struct Search<'a, S, U, C> {
    model: &'a AgentModel<S, U, C>,
    checks: Vec<StepChecks<'a, S>>,
    prune: bool,
    terminal: Option<&'a S>,
    incumbent: Option<(Vec<U>, Vec<S>, C)>,
}

impl<S, U, C> Search<'_, S, U, C>
where
    S: Clone + Eq,
    U: Clone + Eq,
    C: CostValue,
{
    fn dfs(&mut self, k: usize, states: &mut Vec<S>, controls: &mut Vec<U>, cost: C) {
        if k == self.model.horizon {
            let better = match &self.incumbent {
                None => true,
                Some((_, _, best)) => cost < *best,
            };
            if better {
                self.incumbent = Some((controls.clone(), states.clone(), cost));
            }
            return;
        }
        for u in &self.model.controls {
            let x = states[k].clone();
            let stage = self.model.stage_cost(&x, u);
            let partial = cost.add(&stage);
            if self.prune {
                if let Some((_, _, best)) = &self.incumbent {
                    // Stage costs are nonnegative, so the partial sum is a
                    // lower bound; equal-cost completions found later are
                    // lexicographically larger and may be pruned too.
                    if partial >= *best {
                        continue;
                    }
                }
            }
            let next = self.model.step(&x, u);
            if !state_ok(self.model, &self.checks[k + 1], &next) {
                continue;
            }
            if !transition_ok(self.model, &self.checks[k], &x, &next) {
                continue;
            }
            if k + 1 == self.model.horizon {
                if let Some(t) = self.terminal {
                    if next != *t {
                        continue;
                    }
                }
            }
            states.push(next);
            controls.push(u.clone());
            self.dfs(k + 1, states, controls, partial);
            states.pop();
            controls.pop();
        }
    }
}

/// Solve the finite-horizon problem exactly, with both pruning rules on.
pub fn solve_ocp<S, U, C>(
    model: &AgentModel<S, U, C>,
    x0: &S,
    n: usize,
    info: &InfoSet<S>,
    couplings: &[JointConstraint<S>],
) -> Result<Plan<S, U, C>, SolveError>
where
    S: Clone + Eq,
    U: Clone + Eq,
    C: CostValue,
{
    solve_ocp_with(model, x0, n, info, couplings, true, None)
}

/// Variant exposing the incumbent-pruning toggle (for soundness checks) and
/// an optional required terminal state.
pub fn solve_ocp_with<S, U, C>(
    model: &AgentModel<S, U, C>,
    x0: &S,
    n: usize,
    info: &InfoSet<S>,
    couplings: &[JointConstraint<S>],
    prune: bool,
    terminal: Option<&S>,
) -> Result<Plan<S, U, C>, SolveError>
where
    S: Clone + Eq,
    U: Clone + Eq,
    C: CostValue,
{
    for rec in info.records() {
        if rec.states.len() != rec.horizon + 1 {
            return Err(ModelError::MalformedRecord(rec.source, rec.states.len(), rec.horizon).into());
        }
        assert!(rec.solved_at <= n, "record from the future");
    }
    let checks = build_checks(model, n, info, couplings);
    if !state_ok(model, &checks[0], x0) {
        return Err(SolveError::EmptyAdmissibleSet(model.id));
    }
    let mut search = Search { model, checks, prune, terminal, incumbent: None };
    let mut states = vec![x0.clone()];
    let mut controls = Vec::new();
    search.dfs(0, &mut states, &mut controls, C::zero());
    match search.incumbent {
        Some((controls, states, value)) => Ok(Plan {
            owner: model.id,
            solved_at: n,
            horizon: model.horizon,
            controls,
            states,
            value,
        }),
        None => Err(SolveError::EmptyAdmissibleSet(model.id)),
    }
}

const ENUMERATION_BUDGET: f64 = 1e7;

/// Brute-force reference solver: enumerate every control sequence, filter by
/// [`admissible`], take the minimum under the same tie-break contract as
/// [`solve_ocp`].
pub fn enumerate_oracle<S, U, C>(
    model: &AgentModel<S, U, C>,
    x0: &S,
    n: usize,
    info: &InfoSet<S>,
    couplings: &[JointConstraint<S>],
) -> Result<Plan<S, U, C>, SolveError>
where
    S: Clone + Eq,
    U: Clone + Eq,
    C: CostValue,
{
    let combos = (model.controls.len() as f64).powi(model.horizon as i32);
    if combos > ENUMERATION_BUDGET {
        return Err(SolveError::BudgetExceeded(combos));
    }
    let mut best: Option<(Vec<U>, C)> = None;
    for seq in (0..model.horizon)
        .map(|_| model.controls.iter())
        .multi_cartesian_product()
    {
        let controls: Vec<U> = seq.into_iter().cloned().collect();
        if !admissible(model, x0, n, info, couplings, &controls)?.is_ok() {
            continue;
        }
        let traj = crate::model::rollout(model, x0, n, &controls);
        let mut value = C::zero();
        for k in 0..model.horizon {
            value = value.add(&model.stage_cost(&traj.states[k], &controls[k]));
        }
        // Enumeration is lexicographic, so a strict improvement keeps the
        // lexicographically minimal sequence among ties.
        let better = match &best {
            None => true,
            Some((_, v)) => value < *v,
        };
        if better {
            best = Some((controls, value));
        }
    }
    match best {
        Some((controls, value)) => {
            let traj = crate::model::rollout(model, x0, n, &controls);
            Ok(Plan {
                owner: model.id,
                solved_at: n,
                horizon: model.horizon,
                controls,
                states: traj.states,
                value,
            })
        }
        None => Err(SolveError::EmptyAdmissibleSet(model.id)),
    }
}

/// Estimate the infinite-horizon optimal value by growing the horizon.
///
/// Converged means: two consecutive horizon values agree, the horizon covers
/// every neighbour prediction window, and the optimum is attainable by a
/// sequence ending at the zero-cost reference. Extending such a sequence
/// with the neutral control adds no cost, so the value equals the
/// infinite-horizon optimum. Otherwise the last value is a lower estimate
/// and the flag is false.
pub fn approx_infinite_value<S, U, C>(
    model: &AgentModel<S, U, C>,
    x0: &S,
    n: usize,
    info: &InfoSet<S>,
    couplings: &[JointConstraint<S>],
    cutoff: usize,
) -> Result<(C, bool), SolveError>
where
    S: Clone + Eq,
    U: Clone + Eq,
    C: CostValue,
{
    assert!(cutoff >= 1);
    let window_end = info.records().map(|r| r.covers_until()).max();
    let has_neutral = model.neutral_control().is_some();
    let mut prev: Option<C> = None;
    for horizon in 1..=cutoff {
        let m = model.with_horizon(horizon);
        let plan = solve_ocp(&m, x0, n, info, couplings)?;
        let value = plan.value;
        let window_covered = window_end.map_or(true, |w| n + horizon >= w);
        if has_neutral && window_covered && prev.as_ref() == Some(&value) {
            if let Ok(pinned) =
                solve_ocp_with(&m, x0, n, info, couplings, true, Some(&model.reference))
            {
                if pinned.value == value {
                    return Ok((value, true));
                }
            }
        }
        prev = Some(value);
    }
    Ok((prev.expect("cutoff >= 1"), false))
}
