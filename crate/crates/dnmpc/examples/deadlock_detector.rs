//! The persistent-coupling detector separates transient conflicts from
//! deadlocks. On the bridge the hierarchy flattens after the cars pass; in a
//! row-locked corridor two opposed cars shuffle forever and the coupling
//! never clears.
//!
//! Run with: cargo run --example deadlock_detector

use dnmpc::bridge::GridSpec;
use dnmpc::harness::{run_closed_loop, NetworkModel};
use dnmpc::scheduler::{Coordinator, DropAll, Lexicographic};
use dnmpc::stability::persistent_coupling_detector;

fn inspect(name: &str, spec: GridSpec, steps: usize) {
    let scenario = spec.build();
    let coordinator = Coordinator::new(Box::new(Lexicographic), Box::new(DropAll));
    let trace = run_closed_loop(&scenario, &coordinator, &NetworkModel::ideal(), steps).unwrap();
    let report = persistent_coupling_detector(&trace, 2).unwrap();
    let coupled: Vec<String> = report
        .coupled_steps
        .iter()
        .map(|(n, c)| format!("{}{}", n, if *c { "*" } else { "" }))
        .collect();
    println!("{name}: {:?} after step {} (coupled steps marked *): {}", report.outcome, report.n_bar, coupled.join(" "));
}

fn main() {
    inspect("bridge  ", GridSpec::bridge_default(), 8);
    inspect("corridor", GridSpec::corridor_deadlock(), 20);
}
