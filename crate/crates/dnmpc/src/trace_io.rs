//! JSONL trace files: one header object, then one object per step.
//!
//! The header carries a schema tag and the config that produced the run.
//! Step objects keep a fixed key order (n, states, controls, values,
//! stage_costs, levels, memory, demotions, hierarchy_before,
//! hierarchy_after, plans, infos); rationals appear as `{"num":…,"den":…}`.
//! Final states are not stored: they replay from the last step's plans.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{GridControl, GridState};
use crate::config::ScenarioConfig;
use crate::harness::{RunTrace, TraceStep};
use crate::numeric::Rat;

pub const SCHEMA: &str = "dnmpc-trace/1";

/// The concrete trace type the file format stores.
pub type GridTrace = RunTrace<GridState, GridControl, Rat>;

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {0}: {1}")]
    Malformed(usize, serde_json::Error),
    #[error("missing header line")]
    MissingHeader,
    #[error("unsupported schema `{0}` (expected `{SCHEMA}`)")]
    BadSchema(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub config: ScenarioConfig,
}

pub fn write_trace(
    mut w: impl Write,
    config: &ScenarioConfig,
    trace: &GridTrace,
) -> Result<(), TraceIoError> {
    let header = TraceHeader { schema: SCHEMA.into(), config: config.clone() };
    serde_json::to_writer(&mut w, &header).map_err(|e| TraceIoError::Malformed(1, e))?;
    writeln!(w)?;
    for (i, step) in trace.steps.iter().enumerate() {
        serde_json::to_writer(&mut w, step).map_err(|e| TraceIoError::Malformed(i + 2, e))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_trace_file(
    path: &Path,
    config: &ScenarioConfig,
    trace: &GridTrace,
) -> Result<(), TraceIoError> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), config, trace)
}

pub fn read_trace(r: impl BufRead) -> Result<(TraceHeader, GridTrace), TraceIoError> {
    let mut lines = r.lines();
    let first = lines.next().ok_or(TraceIoError::MissingHeader)??;
    let header: TraceHeader =
        serde_json::from_str(&first).map_err(|e| TraceIoError::Malformed(1, e))?;
    if header.schema != SCHEMA {
        return Err(TraceIoError::BadSchema(header.schema));
    }
    let mut steps: Vec<TraceStep<GridState, GridControl, Rat>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        steps.push(serde_json::from_str(&line).map_err(|e| TraceIoError::Malformed(i + 2, e))?);
    }
    // Replay the terminal states from the last step's committed plans.
    let final_states = steps
        .last()
        .map(|s| s.plans.iter().map(|(p, plan)| (*p, plan.states[1])).collect())
        .unwrap_or_default();
    Ok((header, RunTrace { steps, final_states }))
}

pub fn read_trace_file(path: &Path) -> Result<(TraceHeader, GridTrace), TraceIoError> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_closed_loop, NetworkModel};

    fn sample_trace() -> (ScenarioConfig, GridTrace) {
        let cfg = ScenarioConfig { horizon: Some(4), steps: 4, ..ScenarioConfig::default() };
        let scenario = cfg.grid_spec().unwrap().build();
        let trace =
            run_closed_loop(&scenario, &cfg.coordinator(), &NetworkModel::ideal(), cfg.steps)
                .unwrap();
        (cfg, trace)
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let (cfg, trace) = sample_trace();
        let mut buf = Vec::new();
        write_trace(&mut buf, &cfg, &trace).unwrap();
        let (header, back) = read_trace(buf.as_slice()).unwrap();
        assert_eq!(header.schema, SCHEMA);
        assert_eq!(header.config, cfg);
        assert_eq!(back, trace);
    }

    #[test]
    fn step_lines_keep_the_documented_key_order() {
        let (cfg, trace) = sample_trace();
        let mut buf = Vec::new();
        write_trace(&mut buf, &cfg, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let step_line = text.lines().nth(1).unwrap();
        let keys = ["\"n\"", "\"states\"", "\"controls\"", "\"values\"", "\"stage_costs\"",
            "\"levels\"", "\"memory\"", "\"demotions\"", "\"hierarchy_before\"",
            "\"hierarchy_after\"", "\"plans\"", "\"infos\""];
        let mut last = 0;
        for key in keys {
            let at = step_line.find(key).unwrap_or_else(|| panic!("{key} missing"));
            assert!(at > last, "{key} out of order");
            last = at;
        }
    }

    #[test]
    fn bad_schema_is_rejected() {
        let line = r#"{"schema":"dnmpc-trace/99","config":{}}"#;
        assert!(matches!(
            read_trace(line.as_bytes()),
            Err(TraceIoError::BadSchema(_))
        ));
    }
}
