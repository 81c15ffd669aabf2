//! Command-line surface.
//!
//! Verbs: `run` (simulate, write a JSONL trace), `sweep` (value/alpha table
//! over a horizon range), `alpha` (certify a trace), `verify` (randomized
//! solver-vs-oracle and feasibility checks), `export` (CSV / plot data).
//!
//! Exit codes: 0 success, 1 usage or config error, 2 infeasible subproblem,
//! 3 verification failure. `DNMPC_SEED` overrides the config seed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bridge::{GridAgentSpec, GridSpec, GridState, MoveMode};
use crate::config::ScenarioConfig;
use crate::harness::{run_closed_loop, NetworkModel};
use crate::model::{AgentId, InfoSet};
use crate::numeric::Rat;
use crate::solver::{enumerate_oracle, solve_ocp};
use crate::stability::{feasibility_check, local_alpha, weighted_alpha, AlphaReport, Weighting};
use crate::trace_io::{read_trace_file, write_trace_file, GridTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

#[derive(Parser)]
#[command(name = "dnmpc", about = "Distributed NMPC with a parallelizable agent hierarchy")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a closed loop and write the JSONL trace.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun over a horizon range and print a value/alpha CSV table.
    Sweep {
        config: PathBuf,
        /// Inclusive range, e.g. 4..7
        #[arg(long)]
        horizons: String,
        #[arg(long)]
        agent: u32,
    },
    /// Certify suboptimality degrees on a recorded trace.
    Alpha {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated positive rational weights, one per agent.
        #[arg(long)]
        weights: Option<String>,
        /// Report each agent's local alpha (the default without --weights).
        #[arg(long)]
        per_agent: bool,
    },
    /// Randomized cross-checks: exact solver vs. brute force, plus
    /// closed-loop feasibility.
    Verify {
        config: Option<PathBuf>,
        #[arg(long)]
        cases: usize,
        #[arg(long)]
        max_horizon: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Flatten a trace to CSV or per-agent plot series.
    Export {
        #[arg(long)]
        trace: PathBuf,
        /// csv | plotdata
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Run { config, out } => cmd_run(&config, &out),
        Cmd::Sweep { config, horizons, agent } => cmd_sweep(&config, &horizons, AgentId(agent)),
        Cmd::Alpha { trace, weights, per_agent } => {
            cmd_alpha(&trace, weights.as_deref(), per_agent)
        }
        Cmd::Verify { config, cases, max_horizon, seed } => {
            cmd_verify(config.as_deref(), cases, max_horizon, seed)
        }
        Cmd::Export { trace, format, out } => cmd_export(&trace, &format, out.as_deref()),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, i32> {
    let mut cfg = ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    if let Ok(seed) = std::env::var("DNMPC_SEED") {
        cfg.seed = seed.trim().parse().map_err(|_| {
            eprintln!("error: DNMPC_SEED is not an integer: `{seed}`");
            EXIT_CONFIG
        })?;
    }
    Ok(cfg)
}

fn simulate(cfg: &ScenarioConfig) -> Result<GridTrace, i32> {
    let spec = cfg.grid_spec().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    let scenario = spec.build();
    run_closed_loop(&scenario, &cfg.coordinator(), &cfg.network(), cfg.steps).map_err(|e| {
        eprintln!("error: {e}");
        if e.is_infeasible() {
            EXIT_INFEASIBLE
        } else {
            EXIT_CONFIG
        }
    })
}

fn cmd_run(config: &Path, out: &Path) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let trace = match simulate(&cfg) {
        Ok(t) => t,
        Err(code) => return code,
    };
    if let Err(e) = write_trace_file(out, &cfg, &trace) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    println!("wrote {} steps to {}", trace.len(), out.display());
    EXIT_OK
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once("..")?;
    let a: usize = a.trim().parse().ok()?;
    let b: usize = b.trim().strip_prefix('=').unwrap_or(b.trim()).trim().parse().ok()?;
    (a >= 1 && a <= b).then_some((a, b))
}

fn alpha_cell<C: std::fmt::Display>(report: &AlphaReport<C>) -> String {
    match (&report.alpha, report.valid) {
        (Some(a), true) => a.to_string(),
        _ => "invalid".into(),
    }
}

fn cmd_sweep(config: &Path, horizons: &str, agent: AgentId) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let Some((lo, hi)) = parse_range(horizons) else {
        eprintln!("error: --horizons expects an inclusive range A..B with A >= 1");
        return EXIT_CONFIG;
    };
    println!("N,V_x0,V_x1,alpha");
    let mut worst = EXIT_OK;
    for n in lo..=hi {
        let cfg_n = ScenarioConfig { horizon: Some(n), ..cfg.clone() };
        match simulate(&cfg_n) {
            Ok(trace) => {
                let v0 = trace.steps[0].values.get(&agent);
                let v1 = trace.steps.get(1).and_then(|s| s.values.get(&agent));
                let (Some(v0), Some(v1)) = (v0, v1) else {
                    eprintln!("error: agent {agent} not in trace");
                    return EXIT_CONFIG;
                };
                let report = match local_alpha(&trace, agent) {
                    Ok(r) => r,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_CONFIG;
                    }
                };
                println!("{n},{v0},{v1},{}", alpha_cell(&report));
            }
            Err(code) => {
                println!("{n},error,error,error");
                worst = worst.max(code);
            }
        }
    }
    worst
}

fn print_report(label: &str, report: &AlphaReport<Rat>) {
    if report.valid {
        let alpha = report.alpha.as_ref().expect("valid reports carry alpha");
        match report.binding_index {
            Some(n) => println!("{label}: alpha = {alpha} (binding step {n})"),
            None => println!("{label}: alpha = {alpha} (equilibrium throughout)"),
        }
    } else {
        println!("{label}: invalid (some step increases the value)");
    }
}

fn cmd_alpha(trace: &Path, weights: Option<&str>, per_agent: bool) -> i32 {
    let (_, trace) = match read_trace_file(trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if trace.is_empty() {
        eprintln!("error: empty trace");
        return EXIT_CONFIG;
    }
    let ids: Vec<AgentId> = trace.steps[0].values.keys().copied().collect();

    if let Some(weights) = weights {
        let parsed: Result<Vec<Rat>, _> =
            weights.split(',').map(|w| w.trim().parse::<Rat>()).collect();
        let parsed = match parsed {
            Ok(w) => w,
            Err(e) => {
                eprintln!("error: bad weights: {e}");
                return EXIT_CONFIG;
            }
        };
        if parsed.len() != ids.len() {
            eprintln!("error: {} weights for {} agents", parsed.len(), ids.len());
            return EXIT_CONFIG;
        }
        let weighting = Weighting::Linear(ids.iter().copied().zip(parsed).collect());
        match weighted_alpha(&trace, &weighting) {
            Ok(report) => print_report("weighted", &report),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    if per_agent || weights.is_none() {
        for p in &ids {
            match local_alpha(&trace, *p) {
                Ok(report) => print_report(&format!("agent {p}"), &report),
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            }
        }
    }
    EXIT_OK
}

fn random_cell(rng: &mut impl Rng, taken: &[GridState]) -> GridState {
    loop {
        let x = GridState { x1: rng.gen_range(-3..=3), x2: rng.gen_range(-3..=3) };
        if crate::bridge::bridge_ok(x) && !taken.contains(&x) {
            return x;
        }
    }
}

fn cmd_verify(config: Option<&Path>, cases: usize, max_horizon: usize, seed: Option<u64>) -> i32 {
    if cases == 0 {
        eprintln!("error: --cases must be at least 1");
        return EXIT_CONFIG;
    }
    let cfg = match config {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(code) => return code,
        },
        None => ScenarioConfig::default(),
    };
    let control_count: f64 = match cfg.moves {
        MoveMode::Orthogonal => 5.0,
        MoveMode::King => 9.0,
    };
    if max_horizon == 0 || control_count.powi(max_horizon as i32) > 1e7 {
        eprintln!("error: --max-horizon {max_horizon} breaks the enumeration budget");
        return EXIT_CONFIG;
    }
    let seed = seed.unwrap_or(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for case in 0..cases {
        let horizon = rng.gen_range(1..=max_horizon);
        let start1 = random_cell(&mut rng, &[]);
        let start2 = random_cell(&mut rng, &[start1]);
        let ref1 = random_cell(&mut rng, &[]);
        let ref2 = random_cell(&mut rng, &[ref1]);
        let spec = GridSpec {
            agents: vec![
                GridAgentSpec { id: AgentId(1), start: start1, reference: ref1, horizon },
                GridAgentSpec { id: AgentId(2), start: start2, reference: ref2, horizon },
            ],
            moves: cfg.moves,
            swap_rule: cfg.swap_rule,
            ..GridSpec::bridge_default()
        };
        let scenario = spec.build();
        let describe = || {
            format!(
                "case {case}: N={horizon} starts=({},{})/({},{}) refs=({},{})/({},{})",
                start1.x1, start1.x2, start2.x1, start2.x2, ref1.x1, ref1.x2, ref2.x1, ref2.x2
            )
        };

        // agent 1 unconstrained, agent 2 against agent 1's committed plan
        let empty = InfoSet::new(AgentId(1));
        let plan1 = match solve_ocp(scenario.agent(AgentId(1)), &start1, 0, &empty, &scenario.couplings) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: {} — {e}", describe());
                return EXIT_INFEASIBLE;
            }
        };
        let mut info2 = InfoSet::new(AgentId(2));
        info2.insert(plan1.to_record()).unwrap();
        let jobs = [(AgentId(1), InfoSet::new(AgentId(1))), (AgentId(2), info2)];
        for (p, info) in &jobs {
            let fast = solve_ocp(scenario.agent(*p), &scenario.starts[p], 0, info, &scenario.couplings);
            let brute =
                enumerate_oracle(scenario.agent(*p), &scenario.starts[p], 0, info, &scenario.couplings);
            match (fast, brute) {
                (Ok(a), Ok(b)) if a.value == b.value && a.controls == b.controls => {}
                (Err(crate::solver::SolveError::EmptyAdmissibleSet(_)),
                 Err(crate::solver::SolveError::EmptyAdmissibleSet(_))) => {}
                (fast, brute) => {
                    eprintln!("verification failure: {} agent {p}", describe());
                    eprintln!("  solver: {fast:?}");
                    eprintln!("  oracle: {brute:?}");
                    return EXIT_VERIFICATION;
                }
            }
        }

        // closed loop must stay feasible whenever it completes
        match run_closed_loop(&scenario, &cfg.coordinator(), &NetworkModel::ideal(), 3) {
            Ok(trace) => {
                if let Err(e) = feasibility_check(&scenario, &trace) {
                    eprintln!("verification failure: {} — {e}", describe());
                    return EXIT_VERIFICATION;
                }
            }
            Err(e) if e.is_infeasible() => {
                eprintln!("error: {} — {e}", describe());
                return EXIT_INFEASIBLE;
            }
            Err(e) => {
                eprintln!("error: {} — {e}", describe());
                return EXIT_CONFIG;
            }
        }
    }
    println!("{cases} cases passed (seed {seed}, max horizon {max_horizon})");
    EXIT_OK
}

fn cmd_export(trace: &Path, format: &str, out: Option<&Path>) -> i32 {
    let (_, trace) = match read_trace_file(trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut text = String::new();
    match format {
        "csv" => {
            text.push_str("n,agent,x1,x2,value,stage_cost,level\n");
            for step in &trace.steps {
                for (p, x) in &step.states {
                    text.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        step.n, p, x.x1, x.x2, step.values[p], step.stage_costs[p], step.levels[p]
                    ));
                }
            }
        }
        "plotdata" => {
            let ids: Vec<AgentId> = trace
                .steps
                .first()
                .map(|s| s.values.keys().copied().collect())
                .unwrap_or_default();
            for p in ids {
                text.push_str(&format!("# agent {p}\n"));
                for step in &trace.steps {
                    text.push_str(&format!("{} {}\n", step.n, step.values[&p]));
                }
                text.push('\n');
            }
        }
        other => {
            eprintln!("error: unknown format `{other}` (expected csv or plotdata)");
            return EXIT_CONFIG;
        }
    }
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("4..7"), Some((4, 7)));
        assert_eq!(parse_range("4..=7"), Some((4, 7)));
        assert_eq!(parse_range("0..7"), None);
        assert_eq!(parse_range("7..4"), None);
        assert_eq!(parse_range("x..y"), None);
    }
}
