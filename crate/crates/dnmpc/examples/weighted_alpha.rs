//! At horizon N = 2 neither car can certify descent on its own value
//! function, but the sum of the two values still decreases fast enough:
//! the weighted aggregate certifies α = 4/13.
//!
//! Run with: cargo run --example weighted_alpha

use dnmpc::bridge::GridSpec;
use dnmpc::harness::{run_closed_loop, NetworkModel};
use dnmpc::model::AgentId;
use dnmpc::scheduler::{Coordinator, DropAll, Lexicographic};
use dnmpc::stability::{local_alpha, weighted_alpha, Weighting};

fn main() {
    let scenario = GridSpec::bridge_default().with_horizon(2).build();
    let coordinator = Coordinator::new(Box::new(Lexicographic), Box::new(DropAll));
    let trace = run_closed_loop(&scenario, &coordinator, &NetworkModel::ideal(), 8).unwrap();

    for p in [AgentId(1), AgentId(2)] {
        let report = local_alpha(&trace, p).unwrap();
        let verdict = if report.valid { "valid" } else { "invalid (value rises somewhere)" };
        println!("agent {p}: local alpha {verdict}");
    }

    let weighting = Weighting::uniform([AgentId(1), AgentId(2)]);
    let report = weighted_alpha(&trace, &weighting).unwrap();
    println!(
        "uniform weights: alpha = {} (binding step {})",
        report.alpha.expect("aggregate descends"),
        report.binding_index.unwrap()
    );

    let agg: Vec<String> = trace
        .steps
        .iter()
        .map(|s| {
            use dnmpc::numeric::CostValue;
            let mut v = dnmpc::numeric::Rat::int(0);
            for x in s.values.values() {
                v = v.add(x);
            }
            v.to_string()
        })
        .collect();
    println!("aggregated values: {}", agg.join(", "));
}
