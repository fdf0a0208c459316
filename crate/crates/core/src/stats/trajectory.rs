//! Per-position trajectories of each sample series in a condition.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{position_summaries, PositionSummary};
use crate::error::{Error, Result};
use crate::genharness::{Stage, TrialRecord};

pub const SERIES_NAMES: [&str; 3] = ["context", "gen1", "gen2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    /// One of [`SERIES_NAMES`].
    pub series: String,
    pub positions: Vec<PositionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTrajectory {
    pub mu: i64,
    /// Context, Gen I and Gen II, in that order.
    pub series: Vec<SeriesSummary>,
}

fn to_f64(v: &[i64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Position summaries per mu (descending) for the Gen I context and both
/// generations' outputs.
pub fn bias_trajectories(gen1: &[TrialRecord], gen2: &[TrialRecord]) -> Result<Vec<ConditionTrajectory>> {
    let mut groups: BTreeMap<i64, [Vec<&TrialRecord>; 2]> = BTreeMap::new();
    for r in gen1.iter().chain(gen2) {
        let c = r
            .exp2
            .as_ref()
            .ok_or_else(|| Error::InvalidData(format!("record '{}' is not a sampling trial", r.condition)))?;
        let slot = if c.stage == Stage::Gen1 { 0 } else { 1 };
        groups.entry(c.mu).or_default()[slot].push(r);
    }
    if groups.is_empty() {
        return Err(Error::InvalidData("no records".into()));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (&mu, [g1, g2]) in groups.iter().rev() {
        if g1.is_empty() {
            return Err(Error::MissingStage { mu, stage: "gen1" });
        }
        if g2.is_empty() {
            return Err(Error::MissingStage { mu, stage: "gen2" });
        }
        let context: Vec<Vec<f64>> = g1
            .iter()
            .map(|r| to_f64(&r.exp2.as_ref().expect("grouped above").context_values))
            .collect();
        let outputs = |g: &[&TrialRecord]| -> Vec<Vec<f64>> {
            g.iter()
                .filter(|r| !r.parsed_values.is_empty())
                .map(|r| to_f64(&r.parsed_values))
                .collect()
        };
        let mut series = Vec::with_capacity(3);
        for (name, seqs) in SERIES_NAMES.iter().zip([context, outputs(g1), outputs(g2)]) {
            series.push(SeriesSummary {
                series: name.to_string(),
                positions: position_summaries(&seqs)?,
            });
        }
        out.push(ConditionTrajectory { mu, series });
    }
    Ok(out)
}

/// Long format: `mu,series,position,mean,ci95_low,ci95_high,n`.
pub fn write_trajectory_csv<W: Write>(trajectories: &[ConditionTrajectory], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mu", "series", "position", "mean", "ci95_low", "ci95_high", "n"])?;
    for t in trajectories {
        for s in &t.series {
            for p in &s.positions {
                w.write_record([
                    t.mu.to_string(),
                    s.series.clone(),
                    p.position.to_string(),
                    p.mean.to_string(),
                    p.ci95_low.to_string(),
                    p.ci95_high.to_string(),
                    p.n.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
