//! Scenario configuration: a TOML file with fail-fast validation.
//!
//! Unknown keys are rejected. An empty file gives the default setup: the
//! two-car bridge world, horizon 6 for both agents, 8 steps, lexicographic
//! priority, drop-all deordering, ideal network, zero control penalty.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{build_scenario, GridAgentSpec, GridSpec, GridState, MoveMode, SwapMode};
use crate::harness::{Adjacency, NetworkModel};
use crate::model::AgentId;
use crate::numeric::Rat;
use crate::scheduler::{deorder_rule, priority_rule, Coordinator, DeorderRule, PriorityRule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: u32,
    pub start: [i64; 2],
    pub reference: [i64; 2],
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub loss: f64,
    pub delay: usize,
    pub adjacency: Option<Adjacency>,
}

/// The full run setup. `agents` overrides the named world's agents when
/// nonempty; `horizon` overrides every agent's horizon when set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub world: String,
    pub agents: Vec<AgentConfig>,
    pub moves: MoveMode,
    pub swap_rule: SwapMode,
    pub priority_rule: String,
    pub deorder_rule: String,
    pub steps: usize,
    pub horizon: Option<usize>,
    /// Inclusive bounding box [x1_min, x1_max, x2_min, x2_max] on every
    /// agent's position, if any.
    pub bounds: Option<[i64; 4]>,
    pub network: NetworkConfig,
    pub seed: u64,
    pub cost_weight: Rat,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            world: "bridge_default".into(),
            agents: Vec::new(),
            moves: MoveMode::default(),
            swap_rule: SwapMode::default(),
            priority_rule: "lexicographic".into(),
            deorder_rule: "drop_all".into(),
            steps: 8,
            horizon: None,
            bounds: None,
            network: NetworkConfig::default(),
            seed: 0,
            cost_weight: Rat::int(0),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.steps == 0 {
            return invalid("steps must be at least 1".into());
        }
        if self.horizon == Some(0) {
            return invalid("horizon must be at least 1".into());
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.agents.len() {
            return invalid("agent ids must be unique".into());
        }
        for a in &self.agents {
            if a.horizon == 0 {
                return invalid(format!("agent {}: horizon must be at least 1", a.id));
            }
        }
        if self.world == "custom" && self.agents.is_empty() {
            return invalid("world = \"custom\" requires an explicit agents list".into());
        }
        if !(0.0..=1.0).contains(&self.network.loss) {
            return invalid(format!("network.loss {} outside [0, 1]", self.network.loss));
        }
        if self.cost_weight < Rat::int(0) {
            return invalid("cost_weight must be nonnegative".into());
        }
        priority_rule::<Rat>(&self.priority_rule)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        deorder_rule(&self.deorder_rule).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.world != "custom" {
            build_scenario(&self.world).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// The grid world this config describes.
    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let mut spec = if self.world == "custom" {
            GridSpec::custom(Vec::new())
        } else {
            build_scenario(&self.world).map_err(|e| ConfigError::Invalid(e.to_string()))?
        };
        if !self.agents.is_empty() {
            spec.agents = self
                .agents
                .iter()
                .map(|a| GridAgentSpec {
                    id: AgentId(a.id),
                    start: GridState::from(a.start),
                    reference: GridState::from(a.reference),
                    horizon: a.horizon,
                })
                .collect();
        }
        spec.moves = self.moves;
        spec.swap_rule = self.swap_rule;
        spec.lambda = self.cost_weight;
        if let Some([x1_min, x1_max, x2_min, x2_max]) = self.bounds {
            spec.bounds = Some(crate::bridge::Bounds { x1_min, x1_max, x2_min, x2_max });
        }
        if let Some(n) = self.horizon {
            spec = spec.with_horizon(n);
        }
        Ok(spec)
    }

    pub fn coordinator(&self) -> Coordinator<Rat> {
        let priority: Box<dyn PriorityRule<Rat>> =
            priority_rule(&self.priority_rule).expect("validated");
        let deorder: Box<dyn DeorderRule> = deorder_rule(&self.deorder_rule).expect("validated");
        Coordinator::new(priority, deorder)
    }

    /// The network model, honoring the seed (possibly overridden by the
    /// caller via [`ScenarioConfig::seed`]).
    pub fn network(&self) -> NetworkModel {
        NetworkModel {
            adjacency: self.network.adjacency.clone().unwrap_or(Adjacency::Full),
            loss: self.network.loss,
            delay: self.network.delay,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default_bridge_setup() {
        let cfg = ScenarioConfig::parse("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let spec = cfg.grid_spec().unwrap();
        assert_eq!(spec.agents.len(), 2);
        assert_eq!(spec.agents[0].horizon, 6);
        assert_eq!(cfg.steps, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ScenarioConfig::parse("stepz = 8").is_err());
    }

    #[test]
    fn zero_horizon_is_rejected() {
        assert!(matches!(
            ScenarioConfig::parse("horizon = 0"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
world = "bridge_default"
horizon = 4
steps = 10
priority_rule = "cost_greedy"
deorder_rule = "never"
moves = "king"
swap_rule = "strict"
seed = 7

[[agents]]
id = 1
start = [3, 0]
reference = [-3, 0]
horizon = 2

[[agents]]
id = 2
start = [-3, 0]
reference = [3, 0]
horizon = 2

[network]
loss = 0.5
delay = 1
"#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        let spec = cfg.grid_spec().unwrap();
        assert_eq!(spec.agents[0].start, GridState { x1: 3, x2: 0 });
        // the global horizon override wins over per-agent horizons
        assert_eq!(spec.agents[0].horizon, 4);
        assert_eq!(spec.moves, MoveMode::King);
        assert_eq!(spec.swap_rule, SwapMode::Strict);
        let net = cfg.network();
        assert_eq!(net.loss, 0.5);
        assert_eq!(net.delay, 1);
        assert_eq!(net.seed, 7);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = r#"
[[agents]]
id = 1
start = [0, 0]
reference = [1, 0]
horizon = 2

[[agents]]
id = 1
start = [2, 0]
reference = [3, 0]
horizon = 2
"#;
        assert!(matches!(ScenarioConfig::parse(text), Err(ConfigError::Invalid(_))));
    }
}
