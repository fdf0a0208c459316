//! Trial records and their JSONL persistence.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Exp1,
    Exp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Gen1,
    Gen2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Gen1 => "gen1",
            Stage::Gen2 => "gen2",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gen1" => Ok(Stage::Gen1),
            "gen2" => Ok(Stage::Gen2),
            other => Err(Error::InvalidParameter(format!("unknown stage '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Condition {
    pub mu: i64,
    pub sigma: f64,
    pub context_count: usize,
    pub generate_count: usize,
    pub replicate: u32,
    pub stage: Stage,
    pub context_values: Vec<i64>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    /// Fewer values than requested were parsed.
    Incomplete,
    /// No usable values could be parsed.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Timestamps {
    pub requested_unix_ms: u64,
    pub completed_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub condition: String,
    pub model: String,
    /// Prompted starting value (Experiment 1 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_value: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp2: Option<Exp2Condition>,
    pub prompt_text: String,
    pub raw_completion: String,
    pub parsed_values: Vec<i64>,
    pub parse_warnings: Vec<String>,
    pub status: TrialStatus,
    /// SHA-256 of the record content, excluding this field and the timestamps.
    pub content_hash: String,
    pub timestamps: Timestamps,
}

/// Everything except the hash and the timestamps, in serialization order.
#[derive(Serialize)]
struct Content<'a> {
    schema_version: u32,
    experiment: Experiment,
    condition: &'a str,
    model: &'a str,
    start_value: Option<i64>,
    exp2: Option<&'a Exp2Condition>,
    prompt_text: &'a str,
    raw_completion: &'a str,
    parsed_values: &'a [i64],
    parse_warnings: &'a [String],
    status: TrialStatus,
}

impl TrialRecord {
    pub fn compute_hash(&self) -> String {
        let content = Content {
            schema_version: self.schema_version,
            experiment: self.experiment,
            condition: &self.condition,
            model: &self.model,
            start_value: self.start_value,
            exp2: self.exp2.as_ref(),
            prompt_text: &self.prompt_text,
            raw_completion: &self.raw_completion,
            parsed_values: &self.parsed_values,
            parse_warnings: &self.parse_warnings,
            status: self.status,
        };
        let bytes = serde_json::to_vec(&content).expect("record content serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn seal(mut self) -> Self {
        self.content_hash = self.compute_hash();
        self
    }

    /// Condition key ignoring the replicate index.
    pub fn condition_group(&self) -> String {
        match &self.exp2 {
            Some(c) => format!("exp2/mu={}/{}", c.mu, c.stage),
            None => "exp1".to_string(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        match self.experiment {
            Experiment::Exp1 => {
                let start = self.start_value.ok_or("exp1 record lacks start_value")?;
                if self.status != TrialStatus::Failed && self.parsed_values.first() != Some(&start) {
                    return Err(format!("first parsed value does not equal start value {start}"));
                }
            }
            Experiment::Exp2 => {
                let c = self.exp2.as_ref().ok_or("exp2 record lacks condition")?;
                if c.context_values.len() != c.context_count {
                    return Err(format!(
                        "context holds {} values, condition says {}",
                        c.context_values.len(),
                        c.context_count
                    ));
                }
                if self.parsed_values.len() > c.generate_count {
                    return Err("more parsed values than generate_count".into());
                }
            }
        }
        if self.content_hash != self.compute_hash() {
            return Err("content hash does not match record content".into());
        }
        Ok(())
    }
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_records(path: impl AsRef<Path>, records: &[TrialRecord]) -> Result<()> {
    write_records(std::fs::File::create(path)?, records)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: TrialRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        record.validate().map_err(err)?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(start: i64) -> TrialRecord {
        TrialRecord {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::Exp1,
            condition: format!("start={start}"),
            model: "m".into(),
            start_value: Some(start),
            exp2: None,
            prompt_text: "p".into(),
            raw_completion: "1, 2, ".into(),
            parsed_values: vec![start, 1, 2],
            parse_warnings: vec![],
            status: TrialStatus::Ok,
            content_hash: String::new(),
            timestamps: Timestamps {
                requested_unix_ms: 5,
                completed_unix_ms: 6,
            },
        }
        .seal()
    }

    #[test]
    fn round_trip_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let recs = vec![sample(151), sample(152), sample(153)];
        save_records(&path, &recs).unwrap();
        assert_eq!(load_records(&path).unwrap(), recs);
    }

    #[test]
    fn hash_ignores_timestamps() {
        let a = sample(160);
        let mut b = a.clone();
        b.timestamps.completed_unix_ms = 99;
        assert_eq!(a.compute_hash(), b.compute_hash());
        b.parsed_values.push(7);
        assert_ne!(a.compute_hash(), b.compute_hash());
    }

    #[test]
    fn malformed_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut text = Vec::new();
        write_records(&mut text, &[sample(151)]).unwrap();
        text.extend_from_slice(b"{not json\n");
        std::fs::write(&path, text).unwrap();
        match load_records(&path) {
            Err(Error::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut r = sample(151);
        r.schema_version = 2;
        let r = r.seal();
        save_records(&path, &[r]).unwrap();
        let err = load_records(&path).unwrap_err();
        assert!(err.to_string().contains("schema version 2"));
    }
}
