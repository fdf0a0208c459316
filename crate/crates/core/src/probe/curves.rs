//! Probe R² curves over token offsets and over comma positions.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::dataset::{build_offset_dataset, build_position_dataset, ProbeDataset, RoleFilter, MAX_OFFSET};
use super::dump::EmbeddingDump;
use crate::error::{Error, Result};
use crate::lasso::{cross_validated_r_squared, fit, LassoParams};

pub const DEFAULT_PENALTY: f64 = 0.3;
/// Tokens between a comma at position q and the numeral it is tested on.
pub const DEFAULT_HORIZON: usize = 8;
/// Comma positions 3i+1 for i in 0..=57.
pub const POSITION_COUNT: usize = 58;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lasso: LassoParams,
    pub role_filter: RoleFilter,
    /// Out-of-fold R² with this many contiguous folds instead of in-sample.
    pub cv_folds: Option<usize>,
    pub horizon: usize,
    pub max_offset: usize,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lasso: LassoParams::new(DEFAULT_PENALTY),
            role_filter: RoleFilter::All,
            cv_folds: None,
            horizon: DEFAULT_HORIZON,
            max_offset: MAX_OFFSET,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Token offset or comma position, depending on the curve.
    pub x: usize,
    pub r_squared: f64,
    pub n_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Curve {
    pub layer: usize,
    pub points: Vec<CurvePoint>,
    /// x values with too few rows to fit.
    pub skipped: Vec<usize>,
}

impl R2Curve {
    pub fn r_squared_at(&self, x: usize) -> Option<f64> {
        self.points.iter().find(|p| p.x == x).map(|p| p.r_squared)
    }
}

fn score(ds: &ProbeDataset, config: &ProbeConfig) -> Result<f64> {
    match config.cv_folds {
        Some(folds) => cross_validated_r_squared(&ds.x, &ds.y, &config.lasso, folds),
        None => fit(&ds.x, &ds.y, &config.lasso).map(|(_, report)| report.r_squared),
    }
}

fn min_rows(config: &ProbeConfig) -> usize {
    config.cv_folds.unwrap_or(2).max(2)
}

/// Applies `f` to every item, in parallel when enabled, keeping input order.
fn ordered_map<T, F>(items: &[usize], threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || items.par_iter().map(|&i| f(i)).collect::<Result<Vec<T>>>();
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
                .install(run),
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        items.iter().map(|&i| f(i)).collect()
    }
}

fn assemble(layer: usize, results: Vec<(usize, Option<CurvePoint>)>) -> R2Curve {
    let mut curve = R2Curve {
        layer,
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for (x, point) in results {
        match point {
            Some(p) => curve.points.push(p),
            None => curve.skipped.push(x),
        }
    }
    curve
}

/// R² of predicting the value `dt` tokens ahead, for `dt` in `0..=max_offset`.
pub fn fit_offset_curve(dump: &EmbeddingDump, layer: usize, config: &ProbeConfig) -> Result<R2Curve> {
    if config.max_offset > MAX_OFFSET {
        return Err(Error::InvalidParameter(format!(
            "max_offset {} outside 0..={MAX_OFFSET}",
            config.max_offset
        )));
    }
    let offsets: Vec<usize> = (0..=config.max_offset).collect();
    let results = ordered_map(&offsets, config.threads, |dt| {
        let ds = build_offset_dataset(dump, layer, dt, config.role_filter)?;
        if ds.len() < min_rows(config) {
            return Ok((dt, None));
        }
        let r2 = score(&ds, config)?;
        Ok((
            dt,
            Some(CurvePoint {
                x: dt,
                r_squared: r2,
                n_examples: ds.len(),
            }),
        ))
    })?;
    Ok(assemble(layer, results))
}

/// R² of predicting the numeral `horizon` tokens after each comma position
/// `q = 3i + 1`, one row per trial. Positions whose target falls beyond the
/// grid are listed in `skipped`.
pub fn fit_position_curve(dump: &EmbeddingDump, layer: usize, config: &ProbeConfig) -> Result<R2Curve> {
    if dump.trials.len() < min_rows(config) {
        return Err(Error::InvalidData(format!(
            "position probe needs at least {} trials, dump has {}",
            min_rows(config),
            dump.trials.len()
        )));
    }
    let positions: Vec<usize> = (0..POSITION_COUNT).map(|i| 3 * i + 1).collect();
    let results = ordered_map(&positions, config.threads, |q| {
        let Some(ds) = build_position_dataset(dump, layer, q, config.horizon)? else {
            return Ok((q, None));
        };
        let r2 = score(&ds, config)?;
        Ok((
            q,
            Some(CurvePoint {
                x: q,
                r_squared: r2,
                n_examples: ds.len(),
            }),
        ))
    })?;
    Ok(assemble(layer, results))
}

/// Long-format row of an exported curve file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub layer: usize,
    pub x: usize,
    pub r_squared: f64,
    pub n_examples: usize,
}

/// Writes `layer,x,r_squared,n_examples`, one row per fitted point.
pub fn export_curves<W: Write>(curves: &[R2Curve], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["layer", "x", "r_squared", "n_examples"])?;
    for c in curves {
        for p in &c.points {
            w.serialize(CurveRow {
                layer: c.layer,
                x: p.x,
                r_squared: p.r_squared,
                n_examples: p.n_examples,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves<R: Read>(input: R) -> Result<Vec<R2Curve>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Format("curve file is empty".into()))??;
    for col in ["layer", "x", "r_squared", "n_examples"] {
        if !header.iter().any(|h| h == col) {
            return Err(Error::Format(format!("curve file lacks column '{col}'")));
        }
    }
    let mut curves: Vec<R2Curve> = Vec::new();
    for rec in records {
        let row: CurveRow = rec?.deserialize(Some(&header))?;
        match curves.iter_mut().find(|c| c.layer == row.layer) {
            Some(c) => c.points.push(CurvePoint {
                x: row.x,
                r_squared: row.r_squared,
                n_examples: row.n_examples,
            }),
            None => curves.push(R2Curve {
                layer: row.layer,
                points: vec![CurvePoint {
                    x: row.x,
                    r_squared: row.r_squared,
                    n_examples: row.n_examples,
                }],
                skipped: Vec::new(),
            }),
        }
    }
    if curves.is_empty() {
        return Err(Error::Format("curve file has no rows".into()));
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_csv_round_trip() {
        let curves = vec![
            R2Curve {
                layer: 15,
                points: vec![
                    CurvePoint {
                        x: 0,
                        r_squared: 0.9,
                        n_examples: 100,
                    },
                    CurvePoint {
                        x: 1,
                        r_squared: 0.5,
                        n_examples: 99,
                    },
                ],
                skipped: vec![],
            },
            R2Curve {
                layer: 20,
                points: vec![CurvePoint {
                    x: 0,
                    r_squared: 0.25,
                    n_examples: 100,
                }],
                skipped: vec![],
            },
        ];
        let mut buf = Vec::new();
        export_curves(&curves, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("layer,x,r_squared,n_examples\n15,0,0.9,100\n"));
        assert_eq!(read_curves(&buf[..]).unwrap(), curves);
        assert!(read_curves(&b""[..]).is_err());
        assert!(read_curves(&b"layer,x,n_examples\n1,2,3\n"[..]).is_err());
    }
}
