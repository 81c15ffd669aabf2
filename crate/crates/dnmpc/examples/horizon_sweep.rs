//! Sweep the prediction horizon and watch the yielding car's open-loop value
//! and suboptimality degree α change. Short horizons cannot certify descent
//! (α invalid); from N = 6 the closed loop is optimal (α = 1).
//!
//! Run with: cargo run --example horizon_sweep

use dnmpc::bridge::GridSpec;
use dnmpc::harness::{run_closed_loop, NetworkModel};
use dnmpc::model::AgentId;
use dnmpc::scheduler::{Coordinator, DropAll, Lexicographic};
use dnmpc::stability::local_alpha;

fn main() {
    let car2 = AgentId(2);
    println!("{:<3} {:>7} {:>7} {:>8}", "N", "V(x(0))", "V(x(1))", "alpha");
    for horizon in 2..=7 {
        let scenario = GridSpec::bridge_default().with_horizon(horizon).build();
        let coordinator = Coordinator::new(Box::new(Lexicographic), Box::new(DropAll));
        let trace = run_closed_loop(&scenario, &coordinator, &NetworkModel::ideal(), 8)
            .expect("feasible at every horizon");
        let report = local_alpha(&trace, car2).unwrap();
        let alpha = match (report.valid, report.alpha) {
            (true, Some(a)) => a.to_string(),
            _ => "invalid".to_string(),
        };
        println!(
            "{:<3} {:>7} {:>7} {:>8}",
            horizon,
            trace.steps[0].values[&car2].to_string(),
            trace.steps[1].values[&car2].to_string(),
            alpha
        );
    }
}
