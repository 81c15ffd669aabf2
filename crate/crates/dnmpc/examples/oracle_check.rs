//! The branch-and-bound solver against brute-force enumeration, plus the
//! infinite-horizon value estimate it feeds into the performance bound
//! α·V∞ ≤ α·J∞ ≤ V^N(x(0)) ≤ V∞.
//!
//! Run with: cargo run --example oracle_check

use dnmpc::bridge::GridSpec;
use dnmpc::harness::{run_closed_loop, NetworkModel};
use dnmpc::model::{AgentId, InfoSet};
use dnmpc::numeric::Rat;
use dnmpc::scheduler::{Coordinator, DropAll, Lexicographic};
use dnmpc::solver::{approx_infinite_value, enumerate_oracle, solve_ocp};
use dnmpc::stability::suboptimality_check;

fn main() {
    let scenario = GridSpec::bridge_default().with_horizon(4).build();
    let car2 = AgentId(2);

    // Exact solver vs. exhaustive enumeration at the initial state, with
    // car 1's committed plan in the information set.
    let car1_plan = solve_ocp(
        scenario.agent(AgentId(1)),
        &scenario.starts[&AgentId(1)],
        0,
        &InfoSet::new(AgentId(1)),
        &scenario.couplings,
    )
    .unwrap();
    let mut info = InfoSet::new(car2);
    info.insert(car1_plan.to_record()).unwrap();

    let fast = solve_ocp(scenario.agent(car2), &scenario.starts[&car2], 0, &info, &scenario.couplings).unwrap();
    let brute =
        enumerate_oracle(scenario.agent(car2), &scenario.starts[&car2], 0, &info, &scenario.couplings)
            .unwrap();
    assert_eq!(fast.value, brute.value);
    assert_eq!(fast.controls, brute.controls);
    println!("solver == oracle: V = {}, controls {:?}", fast.value, fast.controls.iter().map(|u| (u.dx, u.dy)).collect::<Vec<_>>());

    // Infinite-horizon value by horizon extension until the estimate settles.
    let (v_inf, converged) =
        approx_infinite_value(scenario.agent(car2), &scenario.starts[&car2], 0, &info, &scenario.couplings, 12)
            .unwrap();
    println!("V_inf = {v_inf} (converged: {converged})");

    // The full chain on the closed loop: alpha = 5/9 at N = 4.
    let coordinator = Coordinator::new(Box::new(Lexicographic), Box::new(DropAll));
    let trace = run_closed_loop(&scenario, &coordinator, &NetworkModel::ideal(), 8).unwrap();
    suboptimality_check(&scenario, &trace, car2, &Rat::new(5, 9), 12).unwrap();
    println!("performance chain holds exactly: (5/9)*{v_inf} <= {} <= {v_inf}", fast.value);
}
