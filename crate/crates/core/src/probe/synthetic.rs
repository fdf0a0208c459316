//! Synthetic dumps with a known answer, for testing the probe end to end.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::dump::{grid_tokens, EmbeddingDump, LayerMatrix, TrialEmbedding, TOKENS_PER_SAMPLE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub trials: usize,
    pub samples: usize,
    pub hidden_dim: usize,
    /// Layer indices to emit; every layer gets the same construction.
    pub layers: Vec<usize>,
    /// Standard deviation of the isotropic noise added to each embedding.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            trials: 69,
            samples: 60,
            hidden_dim: 16,
            layers: vec![0],
            noise: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.samples == 0 || self.hidden_dim == 0 || self.layers.is_empty() {
            return Err(Error::InvalidParameter(
                "synthetic dump needs trials, samples, hidden_dim and layers".into(),
            ));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

const HEIGHT_MEAN: f64 = 170.0;
const HEIGHT_SD: f64 = 9.0;

fn heights(rng: &mut ChaCha8Rng, n: usize) -> Vec<i64> {
    let dist = Normal::new(HEIGHT_MEAN, HEIGHT_SD).expect("valid normal");
    (0..n).map(|_| dist.sample(rng).round() as i64).collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn build<F>(spec: &SyntheticSpec, name: &str, mut row: F) -> Result<EmbeddingDump>
where
    F: FnMut(&mut ChaCha8Rng, &[i64], usize, &mut [f64]),
{
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.hidden_dim;
    let mut trials = Vec::with_capacity(spec.trials);
    for id in 0..spec.trials {
        let values = heights(&mut rng, spec.samples);
        let (token_texts, token_roles) = grid_tokens(&values);
        let rows = token_texts.len();
        let mut matrices = BTreeMap::new();
        for &layer in &spec.layers {
            let mut data = Vec::with_capacity(rows * d);
            let mut buf = vec![0.0; d];
            for t in 0..rows {
                row(&mut rng, &values, t, &mut buf);
                data.extend(buf.iter().map(|&v| v as f32));
            }
            matrices.insert(layer, LayerMatrix::new(rows, d, data)?);
        }
        trials.push(TrialEmbedding {
            trial_id: id as i64,
            token_texts,
            token_roles,
            numeric_values: values,
            matrices,
        });
    }
    Ok(EmbeddingDump {
        model_name: name.into(),
        hidden_dim: d,
        layer_indices: spec.layers.clone(),
        samples_per_trial: spec.samples,
        trials,
        excluded_trials: Vec::new(),
    })
}

/// Embeddings carry no information about any value.
pub fn noise_dump(spec: &SyntheticSpec) -> Result<EmbeddingDump> {
    build(spec, "synthetic-noise", |rng, _, _, out| {
        for v in out.iter_mut() {
            *v = gauss(rng);
        }
    })
}

/// Each token's embedding is a random linear mix (fixed per token role) of
/// the standardized values of its own sample and the next `lookahead`
/// samples, plus noise. A linear probe should therefore succeed for offsets
/// up to `3 * lookahead` tokens and fail from `3 * (lookahead + 1)` on.
/// Recovering every in-horizon offset with one probe needs
/// `hidden_dim >= 3 * (lookahead + 1)`.
pub fn planted_offset_dump(spec: &SyntheticSpec, lookahead: usize) -> Result<EmbeddingDump> {
    let k = lookahead + 1;
    let mut mix_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0ff5e7);
    let block = spec.hidden_dim * k;
    let mix: Vec<f64> = (0..TOKENS_PER_SAMPLE * block)
        .map(|_| gauss(&mut mix_rng))
        .collect();
    let noise = spec.noise;
    build(spec, "synthetic-planted-offset", |rng, values, t, out| {
        let s = t / TOKENS_PER_SAMPLE;
        let code: Vec<f64> = (0..k)
            .map(|m| {
                values
                    .get(s + m)
                    .map_or(0.0, |&v| (v as f64 - HEIGHT_MEAN) / HEIGHT_SD)
            })
            .collect();
        let role_mix = &mix[(t % TOKENS_PER_SAMPLE) * block..][..block];
        for (j, o) in out.iter_mut().enumerate() {
            let signal: f64 = code
                .iter()
                .zip(&role_mix[j * k..(j + 1) * k])
                .map(|(c, w)| c * w)
                .sum();
            *o = signal + noise * gauss(rng);
        }
    })
}

/// Signal share of the first coordinate at comma position `q`.
pub fn position_signal_weight(q: usize, samples: usize) -> f64 {
    let i = q / TOKENS_PER_SAMPLE;
    let last = samples.saturating_sub(4).max(1);
    (i as f64 / last as f64).clamp(0.0, 1.0)
}

/// The first coordinate at comma position `q` mixes the value `horizon`
/// tokens ahead with noise, the signal share rising linearly along the
/// sequence; all other coordinates are noise. Probe R² should increase
/// with position.
pub fn planted_position_dump(spec: &SyntheticSpec, horizon: usize) -> Result<EmbeddingDump> {
    let samples = spec.samples;
    build(spec, "synthetic-planted-position", |rng, values, t, out| {
        for v in out.iter_mut() {
            *v = gauss(rng);
        }
        if t % TOKENS_PER_SAMPLE == 1 {
            if let Some(&v) = values.get((t + horizon) / TOKENS_PER_SAMPLE) {
                let w = position_signal_weight(t, samples);
                let z = (v as f64 - HEIGHT_MEAN) / HEIGHT_SD;
                out[0] = w.sqrt() * z + (1.0 - w).sqrt() * out[0];
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let spec = SyntheticSpec {
            trials: 3,
            samples: 10,
            hidden_dim: 4,
            ..Default::default()
        };
        let a = planted_offset_dump(&spec, 3).unwrap();
        assert_eq!(a, planted_offset_dump(&spec, 3).unwrap());
        a.validate().unwrap();
        assert_eq!(a.trials[0].token_count(), 30);
        noise_dump(&spec).unwrap().validate().unwrap();
        planted_position_dump(&spec, 8).unwrap().validate().unwrap();
        assert!(noise_dump(&SyntheticSpec { trials: 0, ..spec }).is_err());
    }

    #[test]
    fn position_weight_ramps() {
        assert_eq!(position_signal_weight(1, 60), 0.0);
        assert_eq!(position_signal_weight(3 * 56 + 1, 60), 1.0);
        assert!(position_signal_weight(3 * 20 + 1, 60) < position_signal_weight(3 * 30 + 1, 60));
    }
}
