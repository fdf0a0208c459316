//! Linear probes that read future values out of per-token hidden states.
//!
//! A dump holds, for each trial of 60 height samples, one hidden-state matrix
//! per layer with a row per token. Offset probes regress the value `dt`
//! tokens ahead on the current token's state; position probes fix the
//! lookahead and vary where in the sequence the state is taken.

mod curves;
mod dataset;
mod dump;
pub mod synthetic;

pub use curves::{
    export_curves, fit_offset_curve, fit_position_curve, read_curves, CurvePoint, CurveRow, ProbeConfig,
    R2Curve, DEFAULT_HORIZON, DEFAULT_PENALTY, POSITION_COUNT,
};
pub use dataset::{build_offset_dataset, build_position_dataset, ProbeDataset, RoleFilter, MAX_OFFSET};
pub use dump::{
    grid_tokens, read_dump, read_dump_bytes, read_dump_from, read_dump_layers, save_dump,
    validate_token_grid, write_dump, EmbeddingDump, LayerMatrix, TokenRole, TrialEmbedding, FORMAT_VERSION,
    MAGIC, TOKENS_PER_SAMPLE,
};
