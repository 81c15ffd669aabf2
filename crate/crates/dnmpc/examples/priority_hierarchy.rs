//! Three mutually conflicting cars on one row build a three-level hierarchy
//! through two demotion rounds: car 2 is demoted below car 1, then car 3's
//! re-solved plan still collides with car 2's and it drops another level.
//! Prints the hierarchy, demotions and decision memory per step.
//!
//! Run with: cargo run --example priority_hierarchy

use dnmpc::bridge::{GridAgentSpec, GridSpec, GridState};
use dnmpc::harness::{run_closed_loop, NetworkModel};
use dnmpc::model::AgentId;
use dnmpc::scheduler::{Coordinator, DropAll, Lexicographic};

fn car(id: u32, start: (i64, i64), reference: (i64, i64)) -> GridAgentSpec {
    GridAgentSpec {
        id: AgentId(id),
        start: GridState { x1: start.0, x2: start.1 },
        reference: GridState { x1: reference.0, x2: reference.1 },
        horizon: 4,
    }
}

fn main() {
    let spec = GridSpec {
        agents: vec![car(1, (1, 0), (-3, 0)), car(2, (-1, 0), (3, 0)), car(3, (-2, 0), (2, 0))],
        bridge_rule: false,
        row_locked: true,
        ..GridSpec::bridge_default()
    };
    let scenario = spec.build();
    let coordinator = Coordinator::new(Box::new(Lexicographic), Box::new(DropAll));
    let trace = run_closed_loop(&scenario, &coordinator, &NetworkModel::ideal(), 4).unwrap();

    for step in &trace.steps {
        let levels: Vec<String> = step
            .hierarchy_after
            .levels()
            .iter()
            .map(|lvl| format!("{:?}", lvl.iter().map(|p| p.0).collect::<Vec<_>>()))
            .collect();
        println!("n = {}: hierarchy {}", step.n, levels.join(" > "));
        for d in &step.demotions {
            println!(
                "  demoted agent {} from level {} to {} (induced by {:?})",
                d.agent,
                d.from_level,
                d.to_level,
                d.inducers.iter().map(|p| p.0).collect::<Vec<_>>()
            );
        }
        for (p, entries) in &step.memory {
            let remembered: Vec<String> =
                entries.iter().map(|e| format!("{} (since n={})", e.neighbor, e.acquired_at)).collect();
            println!("  agent {p} remembers: {}", remembered.join(", "));
        }
    }
}
