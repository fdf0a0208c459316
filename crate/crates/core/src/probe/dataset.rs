//! Regression datasets cut from an embedding dump.

use serde::{Deserialize, Serialize};

use super::dump::{EmbeddingDump, TokenRole, TOKENS_PER_SAMPLE};
use crate::error::{Error, Result};
use crate::lasso::DesignMatrix;

/// Largest token offset probed: 60 samples span 180 tokens.
pub const MAX_OFFSET: usize = 172;

/// Which source tokens contribute rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleFilter {
    #[default]
    All,
    Number,
    Comma,
    Space,
}

impl RoleFilter {
    pub fn admits(self, role: TokenRole) -> bool {
        match self {
            RoleFilter::All => true,
            RoleFilter::Number => role == TokenRole::NumberPart,
            RoleFilter::Comma => role == TokenRole::Comma,
            RoleFilter::Space => role == TokenRole::Space,
        }
    }
}

impl std::str::FromStr for RoleFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(RoleFilter::All),
            "number" => Ok(RoleFilter::Number),
            "comma" => Ok(RoleFilter::Comma),
            "space" => Ok(RoleFilter::Space),
            other => Err(Error::InvalidParameter(format!(
                "unknown role filter '{other}' (all, number, comma, space)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    /// `(trial_id, token index)` behind each row.
    pub origin: Vec<(i64, usize)>,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn require_layer(dump: &EmbeddingDump, layer: usize) -> Result<()> {
    if !dump.has_layer(layer) {
        return Err(Error::InvalidParameter(format!(
            "layer {layer} is not in the dump"
        )));
    }
    if let Some(t) = dump.trials.iter().find(|t| !t.matrices.contains_key(&layer)) {
        return Err(Error::InvalidParameter(format!(
            "layer {layer} was not loaded for trial {}",
            t.trial_id
        )));
    }
    Ok(())
}

fn collect(dump: &EmbeddingDump, layer: usize, picks: &[(usize, usize, f64)]) -> Result<ProbeDataset> {
    let d = dump.hidden_dim;
    let mut values = Vec::with_capacity(picks.len() * d);
    let mut y = Vec::with_capacity(picks.len());
    let mut origin = Vec::with_capacity(picks.len());
    for &(trial, t, target) in picks {
        let tr = &dump.trials[trial];
        values.extend(tr.matrices[&layer].row(t).iter().map(|&v| v as f64));
        y.push(target);
        origin.push((tr.trial_id, t));
    }
    Ok(ProbeDataset {
        x: DesignMatrix::new(picks.len(), d, values)?,
        y,
        origin,
    })
}

/// Rows are tokens `t` (passing `filter`) whose target `t + offset` exists;
/// the target is the value of the sample spanning token `t + offset`.
pub fn build_offset_dataset(
    dump: &EmbeddingDump,
    layer: usize,
    offset: usize,
    filter: RoleFilter,
) -> Result<ProbeDataset> {
    if offset > MAX_OFFSET {
        return Err(Error::InvalidParameter(format!(
            "offset {offset} outside 0..={MAX_OFFSET}"
        )));
    }
    require_layer(dump, layer)?;
    let mut picks = Vec::new();
    for (k, trial) in dump.trials.iter().enumerate() {
        let n = trial.token_count();
        for t in 0..n.saturating_sub(offset) {
            if !filter.admits(trial.token_roles[t]) {
                continue;
            }
            let target = trial.value_at(t + offset).expect("index within grid");
            picks.push((k, t, target as f64));
        }
    }
    collect(dump, layer, &picks)
}

/// One row per trial: the embedding at comma position `q` and the value
/// `horizon` tokens later. `None` when some trial is too short.
pub fn build_position_dataset(
    dump: &EmbeddingDump,
    layer: usize,
    q: usize,
    horizon: usize,
) -> Result<Option<ProbeDataset>> {
    require_layer(dump, layer)?;
    if q % TOKENS_PER_SAMPLE != 1 {
        return Err(Error::InvalidParameter(format!(
            "position {q} is not a comma token"
        )));
    }
    let mut picks = Vec::with_capacity(dump.trials.len());
    for (k, trial) in dump.trials.iter().enumerate() {
        match trial.value_at(q + horizon) {
            Some(v) => picks.push((k, q, v as f64)),
            None => return Ok(None),
        }
    }
    collect(dump, layer, &picks).map(Some)
}
