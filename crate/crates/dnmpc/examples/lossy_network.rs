//! Plans travel over an explicit network with loss, delay and restricted
//! topology. Agents fall back to stale records when messages are dropped.
//! Blocking the 2 -> 1 edge changes nothing for car 1: its decisions never
//! depend on car 2 in this scenario, so the dependency graph is smaller than
//! the communication graph.
//!
//! Run with: cargo run --example lossy_network

use dnmpc::bridge::GridSpec;
use dnmpc::harness::{run_closed_loop, Adjacency, NetworkModel, RunTrace};
use dnmpc::model::AgentId;
use dnmpc::numeric::Rat;
use dnmpc::scheduler::{Coordinator, DropAll, Lexicographic};
use dnmpc::{GridControl, GridState};

type Trace = RunTrace<GridState, GridControl, Rat>;

fn run(network: &NetworkModel) -> Trace {
    let scenario = GridSpec::bridge_default().build();
    let coordinator = Coordinator::new(Box::new(Lexicographic), Box::new(DropAll));
    run_closed_loop(&scenario, &coordinator, network, 8).unwrap()
}

fn total_cost(trace: &Trace, p: AgentId) -> Rat {
    use dnmpc::numeric::CostValue;
    let mut sum = Rat::int(0);
    for step in &trace.steps {
        sum = sum.add(&step.stage_costs[&p]);
    }
    sum
}

fn main() {
    let ideal = run(&NetworkModel::ideal());

    let one_way = run(&NetworkModel {
        adjacency: Adjacency::Fixed(vec![(AgentId(1), AgentId(2))]),
        ..NetworkModel::ideal()
    });
    let same = ideal
        .steps
        .iter()
        .zip(&one_way.steps)
        .all(|(a, b)| a.states[&AgentId(1)] == b.states[&AgentId(1)]);
    println!("2 -> 1 edge blocked: car 1's closed loop identical to the ideal run: {same}");

    println!("\n{:<22} {:>7} {:>7}", "network", "J_1", "J_2");
    for (name, net) in [
        ("ideal", NetworkModel::ideal()),
        ("30% loss, seed 0", NetworkModel { loss: 0.3, ..NetworkModel::ideal() }),
        ("30% loss, seed 1", NetworkModel { loss: 0.3, seed: 1, ..NetworkModel::ideal() }),
        ("80% loss, seed 0", NetworkModel { loss: 0.8, ..NetworkModel::ideal() }),
    ] {
        let trace = run(&net);
        println!(
            "{:<22} {:>7} {:>7}",
            name,
            total_cost(&trace, AgentId(1)).to_string(),
            total_cost(&trace, AgentId(2)).to_string()
        );
    }
}
