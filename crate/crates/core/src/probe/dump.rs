//! Embedding dump file format.
//!
//! ```text
//! "PLND"                      4 bytes
//! version                     u32 little-endian (currently 1)
//! header length               u64 little-endian
//! header                      UTF-8 JSON, `header length` bytes
//! data                        f32 little-endian row-major matrices
//! ```
//!
//! Each trial in the header lists one `{layer, offset, rows}` entry per
//! layer; `offset` is measured in bytes from the start of the data section
//! and the matrix holds `rows x hidden_dim` values. Every trial's tokens must
//! follow a numeral, comma, space cycle, one cycle per sample (the final
//! sample may lack its trailing comma or space). A writer that cannot align a
//! trial marks its tokens `other`; readers set such trials aside in
//! `excluded_trials` instead of failing the whole file.

use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PLND";
pub const FORMAT_VERSION: u32 = 1;
/// Tokens per sample: numeral, comma, space.
pub const TOKENS_PER_SAMPLE: usize = 3;
const PREAMBLE_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenRole {
    NumberPart,
    Comma,
    Space,
    Other,
}

impl TokenRole {
    /// Role expected at token index `t` of a conforming trial.
    pub fn expected_at(t: usize) -> TokenRole {
        match t % TOKENS_PER_SAMPLE {
            0 => TokenRole::NumberPart,
            1 => TokenRole::Comma,
            _ => TokenRole::Space,
        }
    }
}

/// Dense `rows x cols` float32 matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl LayerMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "matrix has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialEmbedding {
    pub trial_id: i64,
    pub token_texts: Vec<String>,
    pub token_roles: Vec<TokenRole>,
    pub numeric_values: Vec<i64>,
    /// Hidden states per layer, one row per token.
    pub matrices: BTreeMap<usize, LayerMatrix>,
}

impl TrialEmbedding {
    pub fn token_count(&self) -> usize {
        self.token_texts.len()
    }

    /// True when the writer could not align this trial to the token grid.
    pub fn is_flagged(&self) -> bool {
        self.token_roles.contains(&TokenRole::Other)
    }

    /// Numeric value of the sample whose token span contains token `t`.
    pub fn value_at(&self, t: usize) -> Option<i64> {
        if t >= self.token_count() {
            return None;
        }
        self.numeric_values.get(t / TOKENS_PER_SAMPLE).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub model_name: String,
    pub hidden_dim: usize,
    pub layer_indices: Vec<usize>,
    pub samples_per_trial: usize,
    pub trials: Vec<TrialEmbedding>,
    /// Ids of trials flagged non-conforming by the writer and left out.
    pub excluded_trials: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_name: String,
    hidden_dim: usize,
    layer_indices: Vec<usize>,
    samples_per_trial: usize,
    trials: Vec<TrialHeader>,
}

#[derive(Serialize, Deserialize)]
struct TrialHeader {
    trial_id: i64,
    token_texts: Vec<String>,
    token_roles: Vec<TokenRole>,
    numeric_values: Vec<i64>,
    matrices: Vec<MatrixEntry>,
}

#[derive(Serialize, Deserialize)]
struct MatrixEntry {
    layer: usize,
    offset: u64,
    rows: usize,
}

fn alignment(trial: i64, token: usize, reason: impl Into<String>) -> Error {
    Error::Alignment {
        trial,
        token,
        reason: reason.into(),
    }
}

/// Checks the numeral/comma/space grid and that numerals spell the recorded values.
pub fn validate_token_grid(trial: &TrialEmbedding, samples_per_trial: usize) -> Result<()> {
    let id = trial.trial_id;
    let n = trial.numeric_values.len();
    if n != samples_per_trial {
        return Err(alignment(
            id,
            trial.token_count(),
            format!("{n} numeric values, header declares {samples_per_trial}"),
        ));
    }
    if trial.token_roles.len() != trial.token_texts.len() {
        return Err(alignment(
            id,
            trial.token_roles.len().min(trial.token_texts.len()),
            "token_roles and token_texts differ in length",
        ));
    }
    let tokens = trial.token_count();
    let full = TOKENS_PER_SAMPLE * n;
    if n == 0 || tokens > full || tokens + 2 < full {
        return Err(alignment(
            id,
            tokens,
            format!("{tokens} tokens cannot hold {n} samples of {TOKENS_PER_SAMPLE} tokens"),
        ));
    }
    for (t, role) in trial.token_roles.iter().enumerate() {
        let want = TokenRole::expected_at(t);
        if *role != want {
            return Err(alignment(id, t, format!("role {role:?}, expected {want:?}")));
        }
        if want == TokenRole::NumberPart {
            let text = trial.token_texts[t].trim().replace('\u{2212}', "-");
            let value = trial.numeric_values[t / TOKENS_PER_SAMPLE];
            if text.parse::<i64>().ok() != Some(value) {
                return Err(alignment(
                    id,
                    t,
                    format!(
                        "numeral token '{}' does not spell value {value}",
                        trial.token_texts[t]
                    ),
                ));
            }
        }
    }
    Ok(())
}

impl EmbeddingDump {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Format("hidden_dim must be >= 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if self.layer_indices.is_empty() || !self.layer_indices.iter().all(|l| seen.insert(*l)) {
            return Err(Error::Format("layer_indices must be non-empty and unique".into()));
        }
        for trial in &self.trials {
            if trial.is_flagged() {
                if trial.token_roles.len() != trial.token_texts.len() {
                    return Err(alignment(
                        trial.trial_id,
                        0,
                        "token_roles and token_texts differ in length",
                    ));
                }
            } else {
                validate_token_grid(trial, self.samples_per_trial)?;
            }
            for (layer, m) in &trial.matrices {
                if !seen.contains(layer) {
                    return Err(Error::Format(format!(
                        "trial {} carries undeclared layer {layer}",
                        trial.trial_id
                    )));
                }
                if m.cols != self.hidden_dim || m.rows != trial.token_count() {
                    return Err(Error::Format(format!(
                        "trial {} layer {layer}: matrix is {}x{}, expected {}x{}",
                        trial.trial_id,
                        m.rows,
                        m.cols,
                        trial.token_count(),
                        self.hidden_dim
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn trial_ids(&self) -> Vec<i64> {
        self.trials.iter().map(|t| t.trial_id).collect()
    }

    pub fn has_layer(&self, layer: usize) -> bool {
        self.layer_indices.contains(&layer)
    }
}

pub fn write_dump<W: Write>(mut out: W, dump: &EmbeddingDump) -> Result<()> {
    dump.validate()?;
    for trial in &dump.trials {
        if trial.matrices.len() != dump.layer_indices.len() {
            return Err(Error::Format(format!(
                "trial {} has {} layer matrices, expected {}",
                trial.trial_id,
                trial.matrices.len(),
                dump.layer_indices.len()
            )));
        }
    }
    let mut offset = 0u64;
    let mut trials = Vec::with_capacity(dump.trials.len());
    for trial in &dump.trials {
        let mut matrices = Vec::with_capacity(dump.layer_indices.len());
        for layer in &dump.layer_indices {
            let m = &trial.matrices[layer];
            matrices.push(MatrixEntry {
                layer: *layer,
                offset,
                rows: m.rows,
            });
            offset += (m.data.len() * 4) as u64;
        }
        trials.push(TrialHeader {
            trial_id: trial.trial_id,
            token_texts: trial.token_texts.clone(),
            token_roles: trial.token_roles.clone(),
            numeric_values: trial.numeric_values.clone(),
            matrices,
        });
    }
    let header = serde_json::to_vec(&Header {
        model_name: dump.model_name.clone(),
        hidden_dim: dump.hidden_dim,
        layer_indices: dump.layer_indices.clone(),
        samples_per_trial: dump.samples_per_trial,
        trials,
    })?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut buf = Vec::new();
    for trial in &dump.trials {
        for layer in &dump.layer_indices {
            buf.clear();
            for v in &trial.matrices[layer].data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_dump(path: impl AsRef<Path>, dump: &EmbeddingDump) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dump(std::io::BufWriter::new(file), dump)
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<EmbeddingDump> {
    read_dump_layers(path, None)
}

/// Reads only the listed layers (all when `None`).
pub fn read_dump_layers(path: impl AsRef<Path>, layers: Option<&[usize]>) -> Result<EmbeddingDump> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let len = file.get_ref().metadata()?.len();
    read_dump_from(&mut file, len, layers)
}

pub fn read_dump_bytes(bytes: &[u8], layers: Option<&[usize]>) -> Result<EmbeddingDump> {
    read_dump_from(&mut std::io::Cursor::new(bytes), bytes.len() as u64, layers)
}

fn short_read(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Parses a dump from a seekable source of `len` bytes.
pub fn read_dump_from<R: Read + Seek>(
    src: &mut R,
    len: u64,
    layers: Option<&[usize]>,
) -> Result<EmbeddingDump> {
    let mut preamble = [0u8; PREAMBLE_LEN as usize];
    src.read_exact(&mut preamble).map_err(short_read)?;
    if &preamble[..4] != MAGIC {
        return Err(Error::Format("bad magic, not an embedding dump".into()));
    }
    let version = u32::from_le_bytes(preamble[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dump version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(preamble[8..16].try_into().expect("8 bytes"));
    let data_start = PREAMBLE_LEN
        .checked_add(header_len)
        .filter(|&s| s <= len)
        .ok_or_else(|| Error::Format("file is truncated inside the header".into()))?;
    let mut header_bytes = vec![0u8; header_len as usize];
    src.read_exact(&mut header_bytes).map_err(short_read)?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::Format(format!("invalid header: {e}")))?;

    let wanted: Vec<usize> = match layers {
        Some(l) => {
            if let Some(missing) = l.iter().find(|x| !header.layer_indices.contains(x)) {
                return Err(Error::InvalidParameter(format!(
                    "layer {missing} is not in the dump"
                )));
            }
            l.to_vec()
        }
        None => header.layer_indices.clone(),
    };

    // bounds before any payload is read, so a truncated file yields nothing
    let data_len = len - data_start;
    let row_bytes = (header.hidden_dim as u64) * 4;
    let mut total = 0u64;
    for trial in &header.trials {
        let mut layers_seen = std::collections::BTreeSet::new();
        for m in &trial.matrices {
            if !layers_seen.insert(m.layer) {
                return Err(Error::Format(format!(
                    "trial {} lists layer {} twice",
                    trial.trial_id, m.layer
                )));
            }
            let size = m.rows as u64 * row_bytes;
            if m.offset.checked_add(size).is_none_or(|end| end > data_len) {
                return Err(Error::Format(format!(
                    "trial {} layer {} extends past the end of the file (truncated?)",
                    trial.trial_id, m.layer
                )));
            }
            total += size;
        }
        if layers_seen.len() != header.layer_indices.len()
            || !header.layer_indices.iter().all(|l| layers_seen.contains(l))
        {
            return Err(Error::Format(format!(
                "trial {} does not carry exactly the declared layers",
                trial.trial_id
            )));
        }
    }
    if total != data_len {
        return Err(Error::Format(format!(
            "data section holds {data_len} bytes, header accounts for {total}"
        )));
    }

    let mut trials = Vec::with_capacity(header.trials.len());
    let mut raw = Vec::new();
    for th in header.trials {
        let mut matrices = BTreeMap::new();
        for m in th.matrices.iter().filter(|m| wanted.contains(&m.layer)) {
            raw.resize(m.rows * header.hidden_dim * 4, 0);
            src.seek(SeekFrom::Start(data_start + m.offset))?;
            src.read_exact(&mut raw).map_err(short_read)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "trial {} layer {} contains non-finite values",
                    th.trial_id, m.layer
                )));
            }
            matrices.insert(m.layer, LayerMatrix::new(m.rows, header.hidden_dim, data)?);
        }
        trials.push(TrialEmbedding {
            trial_id: th.trial_id,
            token_texts: th.token_texts,
            token_roles: th.token_roles,
            numeric_values: th.numeric_values,
            matrices,
        });
    }
    let mut dump = EmbeddingDump {
        model_name: header.model_name,
        hidden_dim: header.hidden_dim,
        layer_indices: header.layer_indices,
        samples_per_trial: header.samples_per_trial,
        trials,
        excluded_trials: Vec::new(),
    };
    dump.validate()?;
    let (kept, flagged): (Vec<_>, Vec<_>) = dump.trials.into_iter().partition(|t| !t.is_flagged());
    dump.trials = kept;
    dump.excluded_trials = flagged.iter().map(|t| t.trial_id).collect();
    Ok(dump)
}

/// Token texts and roles for a conforming trial with the given values.
pub fn grid_tokens(values: &[i64]) -> (Vec<String>, Vec<TokenRole>) {
    let mut texts = Vec::with_capacity(values.len() * TOKENS_PER_SAMPLE);
    let mut roles = Vec::with_capacity(values.len() * TOKENS_PER_SAMPLE);
    for v in values {
        texts.extend([v.to_string(), ",".to_string(), " ".to_string()]);
        roles.extend([TokenRole::NumberPart, TokenRole::Comma, TokenRole::Space]);
    }
    (texts, roles)
}
