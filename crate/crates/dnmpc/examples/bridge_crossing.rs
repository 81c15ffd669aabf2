//! Two cars cross a single-lane bridge. Car 1 has priority; car 2 yields,
//! steps aside, and follows. Prints the closed loop step by step.
//!
//! Run with: cargo run --example bridge_crossing

use dnmpc::bridge::GridSpec;
use dnmpc::harness::{run_closed_loop, NetworkModel};
use dnmpc::scheduler::{Coordinator, DropAll, Lexicographic};

fn main() {
    let scenario = GridSpec::bridge_default().build();
    let coordinator = Coordinator::new(Box::new(Lexicographic), Box::new(DropAll));
    let trace = run_closed_loop(&scenario, &coordinator, &NetworkModel::ideal(), 8)
        .expect("the default bridge scenario is feasible");

    println!("{:<3} {:<10} {:<10} {:>5} {:>5} {:>4} {:>4}  levels", "n", "car 1", "car 2", "V_1", "V_2", "l_1", "l_2");
    for step in &trace.steps {
        let pos: Vec<String> =
            step.states.values().map(|x| format!("({}, {})", x.x1, x.x2)).collect();
        let v: Vec<String> = step.values.values().map(|v| v.to_string()).collect();
        let l: Vec<String> = step.stage_costs.values().map(|l| l.to_string()).collect();
        let levels: Vec<String> = step
            .hierarchy_after
            .levels()
            .iter()
            .map(|lvl| format!("{:?}", lvl.iter().map(|p| p.0).collect::<Vec<_>>()))
            .collect();
        println!(
            "{:<3} {:<10} {:<10} {:>5} {:>5} {:>4} {:>4}  {}",
            step.n, pos[0], pos[1], v[0], v[1], l[0], l[1], levels.join(" > ")
        );
    }
    let finals: Vec<String> =
        trace.final_states.values().map(|x| format!("({}, {})", x.x1, x.x2)).collect();
    println!("final: car 1 at {}, car 2 at {}", finals[0], finals[1]);
}
