//! The two-car one-lane-bridge world and other grid scenarios.
//!
//! Cars live on an unbounded integer grid with additive dynamics. The bridge
//! is the single cell column `x1 = 0`: off the lane (`x2 != 0`) that column
//! is blocked. Two coupling constraints tie the cars together: they may not
//! occupy the same cell, and they may not swap cells in one step.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, AgentModel, CouplingCheck, JointConstraint, Scenario};
use crate::numeric::Rat;

/// Position on the integer grid.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct GridState {
    pub x1: i64,
    pub x2: i64,
}

impl From<[i64; 2]> for GridState {
    fn from(v: [i64; 2]) -> Self {
        GridState { x1: v[0], x2: v[1] }
    }
}

impl From<GridState> for [i64; 2] {
    fn from(s: GridState) -> Self {
        [s.x1, s.x2]
    }
}

/// One-step displacement; components in {-1, 0, 1}.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct GridControl {
    pub dx: i64,
    pub dy: i64,
}

impl From<[i64; 2]> for GridControl {
    fn from(v: [i64; 2]) -> Self {
        GridControl { dx: v[0], dy: v[1] }
    }
}

impl From<GridControl> for [i64; 2] {
    fn from(u: GridControl) -> Self {
        [u.dx, u.dy]
    }
}

/// Which moves the cars may make.
///
/// `Orthogonal` is the default: it reproduces the reference value tables.
/// `King` is the literal `{-1,0,1}^2` control set including diagonals.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MoveMode {
    #[default]
    Orthogonal,
    King,
}

/// How the no-passing transition constraint is read.
///
/// `SwapOnly` (default) forbids only a simultaneous position exchange and
/// reproduces the reference tables; `Strict` is the literal disjunction,
/// which additionally forbids trailing into a just-vacated cell.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SwapMode {
    #[default]
    SwapOnly,
    Strict,
}

/// Componentwise sum dynamics.
pub fn bridge_dynamics(x: GridState, u: GridControl) -> GridState {
    GridState { x1: x.x1 + u.dx, x2: x.x2 + u.dy }
}

/// Collision constraint: two cars never share a cell.
pub fn collision_ok(xa: GridState, xb: GridState) -> bool {
    xa != xb
}

/// Bridge constraint: the column `x1 = 0` is only passable on the lane row.
pub fn bridge_ok(x: GridState) -> bool {
    x.x1 != 0 || x.x2 == 0
}

/// No-passing constraint over one joint step.
pub fn swap_ok(xa: GridState, ua: GridControl, xb: GridState, ub: GridControl, mode: SwapMode) -> bool {
    let na = bridge_dynamics(xa, ua);
    let nb = bridge_dynamics(xb, ub);
    match mode {
        SwapMode::SwapOnly => !(na == xb && nb == xa),
        SwapMode::Strict => !(na == xb || nb == xa),
    }
}

/// Squared Euclidean distance to the reference cell.
pub fn bridge_cost(x: GridState, reference: GridState) -> Rat {
    let dx = x.x1 - reference.x1;
    let dy = x.x2 - reference.x2;
    Rat::int(dx * dx + dy * dy)
}

fn control_set(mode: MoveMode) -> Vec<GridControl> {
    let mut controls: Vec<GridControl> = match mode {
        MoveMode::Orthogonal => vec![[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]]
            .into_iter()
            .map(GridControl::from)
            .collect(),
        MoveMode::King => (-1..=1)
            .flat_map(|dx| (-1..=1).map(move |dy| GridControl { dx, dy }))
            .collect(),
    };
    // Fixed total order for tie-breaking: lexicographic on (dx, dy).
    controls.sort();
    controls
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAgentSpec {
    pub id: AgentId,
    pub start: GridState,
    pub reference: GridState,
    pub horizon: usize,
}

/// Optional bounding box (inclusive) for search-space control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub x1_min: i64,
    pub x1_max: i64,
    pub x2_min: i64,
    pub x2_max: i64,
}

impl Bounds {
    pub fn contains(&self, x: GridState) -> bool {
        (self.x1_min..=self.x1_max).contains(&x.x1) && (self.x2_min..=self.x2_max).contains(&x.x2)
    }
}

/// Everything needed to instantiate a grid scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub agents: Vec<GridAgentSpec>,
    pub moves: MoveMode,
    pub swap_rule: SwapMode,
    /// Wire the bridge column constraint into every agent's local set.
    pub bridge_rule: bool,
    /// Restrict all motion to the lane row `x2 = 0` (no aside cells).
    pub row_locked: bool,
    pub bounds: Option<Bounds>,
    /// Control-penalty weight in the stage cost.
    pub lambda: Rat,
}

#[derive(Debug, Error)]
#[error("unknown scenario `{0}` (expected bridge_default, corridor_deadlock or custom)")]
pub struct UnknownScenario(pub String);

fn default_agents(horizon: usize) -> Vec<GridAgentSpec> {
    vec![
        GridAgentSpec {
            id: AgentId(1),
            start: GridState { x1: 1, x2: 0 },
            reference: GridState { x1: -2, x2: 0 },
            horizon,
        },
        GridAgentSpec {
            id: AgentId(2),
            start: GridState { x1: -1, x2: 0 },
            reference: GridState { x1: 2, x2: 0 },
            horizon,
        },
    ]
}

impl GridSpec {
    /// Two cars crossing the bridge head-on; defaults match the reference
    /// tables (orthogonal moves, swap-only rule).
    pub fn bridge_default() -> Self {
        GridSpec {
            agents: default_agents(6),
            moves: MoveMode::Orthogonal,
            swap_rule: SwapMode::SwapOnly,
            bridge_rule: true,
            row_locked: false,
            bounds: None,
            lambda: Rat::int(0),
        }
    }

    /// Same head-on encounter but with motion locked to the lane row, so the
    /// cars can never pass each other: the coupling persists forever.
    pub fn corridor_deadlock() -> Self {
        GridSpec { row_locked: true, ..GridSpec::bridge_default() }
    }

    pub fn custom(agents: Vec<GridAgentSpec>) -> Self {
        GridSpec { agents, ..GridSpec::bridge_default() }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        for a in &mut self.agents {
            a.horizon = horizon;
        }
        self
    }

    /// Build the runnable scenario: agent models plus pairwise collision and
    /// no-swap couplings.
    pub fn build(&self) -> Scenario<GridState, GridControl, Rat> {
        let controls = control_set(self.moves);
        let bridge_rule = self.bridge_rule;
        let row_locked = self.row_locked;
        let bounds = self.bounds;
        let lambda = self.lambda;

        let agents: Vec<AgentModel<GridState, GridControl, Rat>> = self
            .agents
            .iter()
            .map(|spec| {
                let reference = spec.reference;
                AgentModel::new(
                    spec.id,
                    spec.horizon,
                    reference,
                    controls.clone(),
                    Arc::new(|x: &GridState, u: &GridControl| bridge_dynamics(*x, *u)),
                    Arc::new(move |x: &GridState| {
                        (!bridge_rule || bridge_ok(*x))
                            && (!row_locked || x.x2 == 0)
                            && bounds.map_or(true, |b| b.contains(*x))
                    }),
                    Arc::new(move |x: &GridState, u: &GridControl| {
                        use crate::numeric::CostValue;
                        let control_penalty = Rat::int(u.dx * u.dx + u.dy * u.dy);
                        bridge_cost(*x, reference).add(&lambda.mul(&control_penalty))
                    }),
                )
            })
            .collect();

        let mut couplings = Vec::new();
        let swap_rule = self.swap_rule;
        for (i, a) in self.agents.iter().enumerate() {
            for b in self.agents.iter().skip(i + 1) {
                let (pa, pb) = (a.id, b.id);
                couplings.push(JointConstraint::state(
                    format!("collision_{pa}_{pb}"),
                    [pa, pb],
                    move |tuple: &BTreeMap<AgentId, &GridState>| {
                        collision_ok(*tuple[&pa], *tuple[&pb])
                    },
                ));
                couplings.push(JointConstraint {
                    id: format!("swap_{pa}_{pb}"),
                    scope: [pa, pb].into_iter().collect(),
                    check: CouplingCheck::Transition(Arc::new(
                        move |tuple: &BTreeMap<AgentId, (&GridState, &GridState)>| {
                            let (xa, na) = tuple[&pa];
                            let (xb, nb) = tuple[&pb];
                            match swap_rule {
                                SwapMode::SwapOnly => !(*na == *xb && *nb == *xa),
                                SwapMode::Strict => !(*na == *xb || *nb == *xa),
                            }
                        },
                    )),
                });
            }
        }

        let starts = self.agents.iter().map(|a| (a.id, a.start)).collect();
        Scenario { agents, couplings, starts }
    }

    /// Squared distance to the reference of agent `id`, the radius measure
    /// used by the comparison-function bound checks.
    pub fn dist2(&self, id: AgentId, x: GridState) -> Rat {
        let spec = self.agents.iter().find(|a| a.id == id).expect("unknown agent");
        bridge_cost(x, spec.reference)
    }
}

/// Look up a named scenario.
pub fn build_scenario(name: &str) -> Result<GridSpec, UnknownScenario> {
    match name {
        "bridge_default" => Ok(GridSpec::bridge_default()),
        "corridor_deadlock" => Ok(GridSpec::corridor_deadlock()),
        other => Err(UnknownScenario(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dynamics_examples() {
        let s = |x1, x2| GridState { x1, x2 };
        let u = |dx, dy| GridControl { dx, dy };
        assert_eq!(bridge_dynamics(s(1, 0), u(-1, 0)), s(0, 0));
        assert_eq!(bridge_dynamics(s(-1, 0), u(0, 1)), s(-1, 1));
        assert_eq!(bridge_dynamics(s(-1, 1), u(0, -1)), s(-1, 0));
    }

    #[test]
    fn collision_examples() {
        let s = |x1, x2| GridState { x1, x2 };
        assert!(!collision_ok(s(0, 0), s(0, 0)));
        assert!(collision_ok(s(0, 0), s(1, 0)));
        assert!(collision_ok(s(-1, 1), s(-1, 0)));
    }

    #[test]
    fn bridge_examples() {
        let s = |x1, x2| GridState { x1, x2 };
        assert!(!bridge_ok(s(0, 1)));
        assert!(bridge_ok(s(0, 0)));
        assert!(bridge_ok(s(3, 2)));
    }

    #[test]
    fn swap_examples() {
        let s = |x1, x2| GridState { x1, x2 };
        let u = |dx, dy| GridControl { dx, dy };
        // pure swap: forbidden in both modes
        assert!(!swap_ok(s(0, 0), u(-1, 0), s(-1, 0), u(1, 0), SwapMode::SwapOnly));
        assert!(!swap_ok(s(0, 0), u(-1, 0), s(-1, 0), u(1, 0), SwapMode::Strict));
        // trailing into a vacated cell: allowed swap-only, forbidden strict
        assert!(swap_ok(s(-1, 0), u(-1, 0), s(-1, 1), u(0, -1), SwapMode::SwapOnly));
        assert!(!swap_ok(s(-2, 0), u(1, 0), s(-1, 0), u(1, 0), SwapMode::Strict));
        // both standing still apart: fine
        assert!(swap_ok(s(0, 0), u(0, 0), s(1, 0), u(0, 0), SwapMode::SwapOnly));
    }

    #[test]
    fn cost_examples() {
        let s = |x1, x2| GridState { x1, x2 };
        assert_eq!(bridge_cost(s(-1, 0), s(2, 0)), Rat::int(9));
        assert_eq!(bridge_cost(s(2, 0), s(2, 0)), Rat::int(0));
        assert_eq!(bridge_cost(s(-1, 1), s(2, 0)), Rat::int(10));
    }

    #[test]
    fn control_order_is_fixed() {
        let c = control_set(MoveMode::Orthogonal);
        let expect: Vec<GridControl> =
            vec![[-1, 0], [0, -1], [0, 0], [0, 1], [1, 0]].into_iter().map(Into::into).collect();
        assert_eq!(c, expect);
        assert_eq!(control_set(MoveMode::King).len(), 9);
    }

    #[test]
    fn scenario_names() {
        assert!(build_scenario("bridge_default").is_ok());
        assert!(build_scenario("corridor_deadlock").unwrap().row_locked);
        assert!(build_scenario("one_lane_roundabout").is_err());
    }
}
