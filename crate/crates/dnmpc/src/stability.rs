//! Trace-level certification: relaxed-Lyapunov suboptimality degrees,
//! comparison-function bound sandwiches, feasibility, and detection of
//! persistent versus flattening couplings.
//!
//! Everything here is a read-only check over a recorded [`RunTrace`]. The
//! central quantity is the suboptimality degree α: the largest number with
//! `V(n) ≥ V(n+1) + α·ℓ(n)` along the closed loop. A valid α ∈ (0,1]
//! certifies both stability-like behaviour and that the receding-horizon
//! loop achieves at least the fraction α of the infinite-horizon optimum.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::harness::RunTrace;
use crate::model::{AgentId, CouplingCheck, InfoSet, Scenario};
use crate::numeric::CostValue;
use crate::solver::{approx_infinite_value, SolveError};

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("trace too short: need more than {needed} steps, got {got}")]
    TraceTooShort { needed: usize, got: usize },
    #[error("agent {0} does not appear in the trace")]
    UnknownAgent(AgentId),
    #[error("weights are not a valid monotone aggregation: {0}")]
    NonmonotoneWeights(String),
    #[error("closed loop did not reach a zero-cost equilibrium within the trace")]
    ClosedLoopNotConverged,
    #[error("infinite-horizon value estimate did not converge within the horizon cutoff")]
    ValueEstimateNotConverged,
    #[error("suboptimality chain violated: {0}")]
    ChainViolated(String),
    #[error("bound {bound} violated at step {n}")]
    BoundViolated { n: usize, bound: String },
    #[error("constraint `{constraint}` violated at step {n}")]
    InfeasibleAt { n: usize, constraint: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// The certified suboptimality degree of one value/cost sequence pair.
///
/// `per_step_ratios` holds the raw decrease ratios `(V(n) − V(n+1)) / ℓ(n)`
/// (absent where `ℓ(n) = 0`). `alpha` is their minimum clamped to one, or
/// `None` when some step increases the value — then `valid` is false.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaReport<C> {
    pub alpha: Option<C>,
    pub binding_index: Option<usize>,
    pub per_step_ratios: Vec<(usize, Option<C>)>,
    pub valid: bool,
}

fn alpha_from_sequences<C: CostValue>(values: &[C], costs: &[C]) -> AlphaReport<C> {
    let mut valid = true;
    let mut best: Option<(usize, C)> = None;
    let mut per_step_ratios = Vec::new();
    for n in 0..values.len().saturating_sub(1) {
        if costs[n].is_zero() {
            // The inequality degenerates to V(n+1) <= V(n).
            if values[n + 1] > values[n] {
                valid = false;
            }
            per_step_ratios.push((n, None));
        } else {
            let ratio = values[n].sub(&values[n + 1]).div(&costs[n]);
            if ratio <= C::zero() {
                valid = false;
            }
            if best.as_ref().map_or(true, |(_, b)| ratio < *b) {
                best = Some((n, ratio.clone()));
            }
            per_step_ratios.push((n, Some(ratio)));
        }
    }
    let binding_index = best.as_ref().map(|(n, _)| *n);
    let alpha = if !valid {
        None
    } else {
        match best {
            // All-zero costs: the loop sat at its equilibrium throughout.
            None => Some(C::one()),
            Some((_, ratio)) => Some(if ratio > C::one() { C::one() } else { ratio }),
        }
    };
    AlphaReport { alpha, binding_index, per_step_ratios, valid }
}

fn agent_sequences<S, U, C: Clone>(
    trace: &RunTrace<S, U, C>,
    p: AgentId,
) -> Result<(Vec<C>, Vec<C>), StabilityError> {
    let mut values = Vec::with_capacity(trace.len());
    let mut costs = Vec::with_capacity(trace.len());
    for step in &trace.steps {
        let v = step.values.get(&p).ok_or(StabilityError::UnknownAgent(p))?;
        let l = step.stage_costs.get(&p).ok_or(StabilityError::UnknownAgent(p))?;
        values.push(v.clone());
        costs.push(l.clone());
    }
    Ok((values, costs))
}

/// Largest α with `V_p(n) ≥ V_p(n+1) + α·ℓ_p(n)` along the trace.
pub fn local_alpha<S, U, C: CostValue>(
    trace: &RunTrace<S, U, C>,
    p: AgentId,
) -> Result<AlphaReport<C>, StabilityError> {
    if trace.len() < 2 {
        return Err(StabilityError::TraceTooShort { needed: 1, got: trace.len() });
    }
    let (values, costs) = agent_sequences(trace, p)?;
    Ok(alpha_from_sequences(&values, &costs))
}

type MonotoneFn<C> = Arc<dyn Fn(&C) -> C + Send + Sync>;

/// How per-agent sequences are aggregated before the α computation. The
/// linear case sums weighted components; the componentwise case pushes each
/// component through its own increasing map first.
pub enum Weighting<C> {
    Linear(BTreeMap<AgentId, C>),
    Componentwise(BTreeMap<AgentId, MonotoneFn<C>>),
}

impl<C: CostValue> Weighting<C> {
    pub fn uniform(ids: impl IntoIterator<Item = AgentId>) -> Self {
        Weighting::Linear(ids.into_iter().map(|p| (p, C::one())).collect())
    }

    fn agents(&self) -> Vec<AgentId> {
        match self {
            Weighting::Linear(w) => w.keys().copied().collect(),
            Weighting::Componentwise(w) => w.keys().copied().collect(),
        }
    }

    fn validate(&self, samples: &BTreeMap<AgentId, Vec<C>>) -> Result<(), StabilityError> {
        match self {
            Weighting::Linear(w) => {
                for (p, weight) in w {
                    if *weight <= C::zero() {
                        return Err(StabilityError::NonmonotoneWeights(format!(
                            "weight of agent {p} is not strictly positive"
                        )));
                    }
                }
            }
            Weighting::Componentwise(w) => {
                for (p, f) in w {
                    if !f(&C::zero()).is_zero() {
                        return Err(StabilityError::NonmonotoneWeights(format!(
                            "map of agent {p} is nonzero at zero"
                        )));
                    }
                    // Strict monotonicity checked on the values the trace
                    // actually visits.
                    let mut grid = samples.get(p).cloned().unwrap_or_default();
                    grid.push(C::zero());
                    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                    grid.dedup();
                    for pair in grid.windows(2) {
                        if f(&pair[0]) >= f(&pair[1]) {
                            return Err(StabilityError::NonmonotoneWeights(format!(
                                "map of agent {p} is not strictly increasing on the sampled grid"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn aggregate(&self, components: &BTreeMap<AgentId, C>) -> C {
        let mut sum = C::zero();
        match self {
            Weighting::Linear(w) => {
                for (p, weight) in w {
                    sum = sum.add(&weight.mul(&components[p]));
                }
            }
            Weighting::Componentwise(w) => {
                for (p, f) in w {
                    sum = sum.add(&f(&components[p]));
                }
            }
        }
        sum
    }
}

/// α of the aggregated sequences `γ(V(n))`, `γ(ℓ(n))`: some agents' values
/// may rise as long as the aggregate keeps decreasing fast enough.
pub fn weighted_alpha<S, U, C: CostValue>(
    trace: &RunTrace<S, U, C>,
    weighting: &Weighting<C>,
) -> Result<AlphaReport<C>, StabilityError> {
    if trace.len() < 2 {
        return Err(StabilityError::TraceTooShort { needed: 1, got: trace.len() });
    }
    let agents = weighting.agents();
    let mut samples: BTreeMap<AgentId, Vec<C>> = BTreeMap::new();
    for p in &agents {
        let (values, costs) = agent_sequences(trace, *p)?;
        samples.entry(*p).or_default().extend(values);
        samples.entry(*p).or_default().extend(costs);
    }
    weighting.validate(&samples)?;

    let mut values = Vec::with_capacity(trace.len());
    let mut costs = Vec::with_capacity(trace.len());
    for step in &trace.steps {
        values.push(weighting.aggregate(&step.values));
        costs.push(weighting.aggregate(&step.stage_costs));
    }
    Ok(alpha_from_sequences(&values, &costs))
}

fn info_from<S: Clone>(owner: AgentId, records: &[crate::model::NeighborRecord<S>]) -> InfoSet<S> {
    let mut info = InfoSet::new(owner);
    for r in records {
        info.insert(r.clone()).unwrap();
    }
    info
}

/// Verify the performance chain `α·V^∞ ≤ α·J^∞ ≤ V^N(x(0)) ≤ V^∞` exactly,
/// where `J^∞` is the realized closed-loop cost and `V^∞` the
/// infinite-horizon optimum under the information recorded at step 0.
pub fn suboptimality_check<S, U, C>(
    scenario: &Scenario<S, U, C>,
    trace: &RunTrace<S, U, C>,
    p: AgentId,
    alpha: &C,
    horizon_cutoff: usize,
) -> Result<(), StabilityError>
where
    S: Clone + Eq,
    U: Clone + Eq,
    C: CostValue,
{
    if trace.is_empty() {
        return Err(StabilityError::TraceTooShort { needed: 1, got: 0 });
    }
    let last = trace.steps.last().unwrap();
    let tail_cost = last.stage_costs.get(&p).ok_or(StabilityError::UnknownAgent(p))?;
    let tail_value = last.values.get(&p).ok_or(StabilityError::UnknownAgent(p))?;
    if !tail_cost.is_zero() || !tail_value.is_zero() {
        return Err(StabilityError::ClosedLoopNotConverged);
    }

    let mut realized = C::zero();
    for step in &trace.steps {
        realized = realized.add(&step.stage_costs[&p]);
    }

    let first = &trace.steps[0];
    let info = info_from(p, &first.infos[&p]);
    let x0 = &first.states[&p];
    let (v_inf, converged) = approx_infinite_value(
        scenario.agent(p),
        x0,
        first.n,
        &info,
        &scenario.couplings,
        horizon_cutoff,
    )?;
    if !converged {
        return Err(StabilityError::ValueEstimateNotConverged);
    }
    let v_n = first.values[&p].clone();

    let lhs = alpha.mul(&v_inf);
    let mid = alpha.mul(&realized);
    if lhs > mid {
        return Err(StabilityError::ChainViolated(format!(
            "alpha*V_inf = {lhs:?} > alpha*J_inf = {mid:?}"
        )));
    }
    if mid > v_n {
        return Err(StabilityError::ChainViolated(format!(
            "alpha*J_inf = {mid:?} > V_N(x(0)) = {v_n:?}"
        )));
    }
    if v_n > v_inf {
        return Err(StabilityError::ChainViolated(format!(
            "V_N(x(0)) = {v_n:?} > V_inf = {v_inf:?}"
        )));
    }
    Ok(())
}

/// A comparison bound: strictly increasing, zero at zero, evaluated on the
/// squared distance to the reference.
pub struct MonotoneBound<C> {
    pub name: String,
    f: MonotoneFn<C>,
}

impl<C: CostValue> MonotoneBound<C> {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&C) -> C + Send + Sync + 'static,
    ) -> Self {
        MonotoneBound { name: name.into(), f: Arc::new(f) }
    }

    /// The identity map: tight for stage costs that *are* the squared
    /// distance.
    pub fn identity(name: impl Into<String>) -> Self {
        MonotoneBound::new(name, |r: &C| r.clone())
    }

    /// The map `r ↦ factor·r`.
    pub fn scaled(name: impl Into<String>, factor: C) -> Self {
        MonotoneBound::new(name, move |r: &C| factor.mul(r))
    }

    pub fn eval(&self, r: &C) -> C {
        (self.f)(r)
    }
}

/// Assert `lower(r²) ≤ V ≤ upper(r²)` and `ℓ ≥ running(r²)` at every visited
/// state, with `r²` the squared distance `dist` to the agent's reference.
pub fn bounds_check<S, U, C: CostValue>(
    trace: &RunTrace<S, U, C>,
    p: AgentId,
    dist: impl Fn(&S) -> C,
    lower: &MonotoneBound<C>,
    upper: &MonotoneBound<C>,
    running: &MonotoneBound<C>,
) -> Result<(), StabilityError> {
    for step in &trace.steps {
        let x = step.states.get(&p).ok_or(StabilityError::UnknownAgent(p))?;
        let r = dist(x);
        let v = &step.values[&p];
        let l = &step.stage_costs[&p];
        if *v < lower.eval(&r) {
            return Err(StabilityError::BoundViolated { n: step.n, bound: lower.name.clone() });
        }
        if *v > upper.eval(&r) {
            return Err(StabilityError::BoundViolated { n: step.n, bound: upper.name.clone() });
        }
        if *l < running.eval(&r) {
            return Err(StabilityError::BoundViolated { n: step.n, bound: running.name.clone() });
        }
    }
    Ok(())
}

/// Check every visited joint state and applied transition against all local
/// and coupling constraints: the closed loop never leaves the feasible set.
pub fn feasibility_check<S, U, C>(
    scenario: &Scenario<S, U, C>,
    trace: &RunTrace<S, U, C>,
) -> Result<(), StabilityError>
where
    S: Clone + Eq,
{
    let mut joint: Vec<&BTreeMap<AgentId, S>> =
        trace.steps.iter().map(|s| &s.states).collect();
    joint.push(&trace.final_states);

    for (n, states) in joint.iter().enumerate() {
        for agent in &scenario.agents {
            let x = &states[&agent.id];
            if !agent.local_ok(x) {
                return Err(StabilityError::InfeasibleAt {
                    n,
                    constraint: format!("local_state({})", agent.id),
                });
            }
        }
        for c in &scenario.couplings {
            match &c.check {
                CouplingCheck::State(check) => {
                    let tuple: BTreeMap<AgentId, &S> =
                        c.scope.iter().map(|q| (*q, &states[q])).collect();
                    if !check(&tuple) {
                        return Err(StabilityError::InfeasibleAt { n, constraint: c.id.clone() });
                    }
                }
                CouplingCheck::Transition(check) => {
                    if n + 1 >= joint.len() {
                        continue;
                    }
                    let next = joint[n + 1];
                    let tuple: BTreeMap<AgentId, (&S, &S)> =
                        c.scope.iter().map(|q| (*q, (&states[q], &next[q]))).collect();
                    if !check(&tuple) {
                        return Err(StabilityError::InfeasibleAt { n, constraint: c.id.clone() });
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CouplingOutcome {
    /// Some lower-level agent stayed constrained by a live neighbour window
    /// at every tail step: stability cannot be concluded from the levels.
    Persistent,
    /// Every tail step was effectively parallel (no lower levels, or all
    /// their members' next-step windows empty).
    Flattened,
    Mixed,
}

/// Per tail step (`n > n_bar`): did some agent below the top level still
/// have a neighbour whose prediction covers `n + 1`?
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingReport {
    pub n_bar: usize,
    pub outcome: CouplingOutcome,
    pub coupled_steps: Vec<(usize, bool)>,
}

pub fn persistent_coupling_detector<S, U, C>(
    trace: &RunTrace<S, U, C>,
    n_bar: usize,
) -> Result<CouplingReport, StabilityError>
where
    S: Clone,
{
    if trace.len() <= n_bar + 1 {
        return Err(StabilityError::TraceTooShort { needed: n_bar + 1, got: trace.len() });
    }
    let mut coupled_steps = Vec::new();
    for step in trace.steps.iter().filter(|s| s.n > n_bar) {
        let mut coupled = false;
        for (level, members) in step.hierarchy_after.levels().iter().enumerate() {
            if level == 0 {
                continue;
            }
            for p in members {
                let info = info_from(*p, &step.infos[p]);
                if !crate::model::prediction_index_set(&info, step.n, 1).is_empty() {
                    coupled = true;
                }
            }
        }
        coupled_steps.push((step.n, coupled));
    }
    let outcome = if coupled_steps.iter().all(|(_, c)| *c) {
        CouplingOutcome::Persistent
    } else if coupled_steps.iter().all(|(_, c)| !*c) {
        CouplingOutcome::Flattened
    } else {
        CouplingOutcome::Mixed
    };
    Ok(CouplingReport { n_bar, outcome, coupled_steps })
}
