//! Conjugate-Gaussian model of inference-time planning.
//!
//! The plan is a scalar (the centre of the next numeric emission). A domain
//! prior pulls it toward what training made typical; a planning likelihood
//! pulls it toward the value the prompt actually asks for. The likelihood
//! precision grows with every self-generated token, so the posterior starts
//! prior-biased and converges on the target as generation proceeds.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainPrior {
    pub mean: f64,
    /// Inverse variance, strictly positive.
    pub precision: f64,
}

impl DomainPrior {
    pub fn new(mean: f64, precision: f64) -> Result<Self> {
        let prior = Self { mean, precision };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("prior mean", self.mean)?;
        ensure_finite("prior precision", self.precision)?;
        if self.precision <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "prior precision must be > 0, got {}",
                self.precision
            )));
        }
        Ok(())
    }
}

/// Planning likelihood whose precision grows as self-generated context accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceModel {
    /// Plan preferred by the likelihood alone.
    pub target_estimate: f64,
    /// Likelihood precision before any self-generated token.
    pub base_gain: f64,
    /// Relative precision increment per self-generated token.
    pub gain_growth: f64,
    pub self_token_count: u64,
}

impl EvidenceModel {
    pub fn new(target_estimate: f64, base_gain: f64, gain_growth: f64) -> Result<Self> {
        let ev = Self {
            target_estimate,
            base_gain,
            gain_growth,
            self_token_count: 0,
        };
        ev.validate()?;
        Ok(ev)
    }

    /// Uses the mean of observed context samples as the target.
    pub fn from_context(samples: &[f64], base_gain: f64, gain_growth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidData("context samples are empty".into()));
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Self::new(mean, base_gain, gain_growth)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("target estimate", self.target_estimate)?;
        ensure_finite("base gain", self.base_gain)?;
        ensure_finite("gain growth", self.gain_growth)?;
        if self.base_gain <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "base gain must be > 0, got {}",
                self.base_gain
            )));
        }
        if self.gain_growth < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gain growth must be >= 0, got {}",
                self.gain_growth
            )));
        }
        Ok(())
    }

    pub fn with_self_tokens(self, count: u64) -> Self {
        Self {
            self_token_count: count,
            ..self
        }
    }

    /// Effective likelihood precision `base_gain * (1 + gain_growth * n_self)`.
    pub fn gain(&self) -> f64 {
        self.base_gain * (1.0 + self.gain_growth * self.self_token_count as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanState {
    pub posterior_mean: f64,
    pub posterior_precision: f64,
    pub step_index: u64,
}

pub fn posterior_update(prior: &DomainPrior, ev: &EvidenceModel) -> Result<PlanState> {
    prior.validate()?;
    ev.validate()?;
    let gain = ev.gain();
    ensure_finite("likelihood gain", gain)?;
    let precision = prior.precision + gain;
    let mean = (prior.precision * prior.mean + gain * ev.target_estimate) / precision;
    Ok(PlanState {
        posterior_mean: mean,
        posterior_precision: precision,
        step_index: ev.self_token_count,
    })
}

/// Share of posterior precision contributed by the likelihood, in `[0, 1]`.
pub fn planning_strength(state: &PlanState, prior: &DomainPrior) -> f64 {
    ((state.posterior_precision - prior.precision) / state.posterior_precision).clamp(0.0, 1.0)
}

/// Differential entropy (nats) of the predictive distribution of the next emission.
pub fn predictive_entropy(state: &PlanState, emission_variance: f64) -> Result<f64> {
    if !(emission_variance > 0.0) || !emission_variance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "emission variance must be finite and > 0, got {emission_variance}"
        )));
    }
    if !(state.posterior_precision > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "posterior precision must be > 0, got {}",
            state.posterior_precision
        )));
    }
    let total = emission_variance + 1.0 / state.posterior_precision;
    Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * total).ln())
}

/// Entropy of the out-of-distribution posterior minus that of the in-distribution one.
pub fn entropy_gap(
    ood: &EvidenceModel,
    ind: &EvidenceModel,
    prior: &DomainPrior,
    emission_variance: f64,
) -> Result<f64> {
    ood.validate()?;
    ind.validate()?;
    if ood.base_gain > ind.base_gain {
        return Err(Error::InvalidParameter(format!(
            "out-of-distribution gain {} exceeds in-distribution gain {}",
            ood.base_gain, ind.base_gain
        )));
    }
    if ood.gain_growth != ind.gain_growth || ood.self_token_count != ind.self_token_count {
        return Err(Error::InvalidParameter(
            "evidence models must differ only in base gain".into(),
        ));
    }
    let h_ood = predictive_entropy(&posterior_update(prior, ood)?, emission_variance)?;
    let h_ind = predictive_entropy(&posterior_update(prior, ind)?, emission_variance)?;
    Ok(h_ood - h_ind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub target_estimate: f64,
    pub plans: Vec<PlanState>,
    pub emissions: Vec<f64>,
    pub planning_strength: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Serialize)]
struct TrajectoryRow {
    step: usize,
    posterior_mean: f64,
    posterior_precision: f64,
    emission: f64,
    planning_strength: f64,
    bias: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn entropies(&self, emission_variance: f64) -> Result<Vec<f64>> {
        self.plans
            .iter()
            .map(|p| predictive_entropy(p, emission_variance))
            .collect()
    }

    /// CSV with columns step, posterior_mean, posterior_precision, emission, planning_strength, bias.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (step, plan) in self.plans.iter().enumerate() {
            w.serialize(TrajectoryRow {
                step,
                posterior_mean: plan.posterior_mean,
                posterior_precision: plan.posterior_precision,
                emission: self.emissions[step],
                planning_strength: self.planning_strength[step],
                bias: self.bias[step],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Runs `steps` generation steps. Step `t` conditions on `t` self-generated
/// values, and its emission is drawn around that step's posterior mean.
pub fn simulate_trajectory(
    prior: &DomainPrior,
    ev: &EvidenceModel,
    steps: usize,
    emission_variance: f64,
    seed: u64,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    if !(emission_variance >= 0.0) || !emission_variance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "emission variance must be finite and >= 0, got {emission_variance}"
        )));
    }
    prior.validate()?;
    ev.validate()?;

    let noise = if emission_variance > 0.0 {
        Some(Normal::new(0.0, emission_variance.sqrt()).expect("positive finite std"))
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut traj = Trajectory {
        target_estimate: ev.target_estimate,
        plans: Vec::with_capacity(steps),
        emissions: Vec::with_capacity(steps),
        planning_strength: Vec::with_capacity(steps),
        bias: Vec::with_capacity(steps),
    };
    for t in 0..steps {
        let state = posterior_update(prior, &ev.with_self_tokens(ev.self_token_count + t as u64))?;
        let emission = match &noise {
            Some(n) => state.posterior_mean + n.sample(&mut rng),
            None => state.posterior_mean,
        };
        traj.planning_strength.push(planning_strength(&state, prior));
        traj.bias.push(state.posterior_mean - ev.target_estimate);
        traj.emissions.push(emission);
        traj.plans.push(state);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prior(mean: f64, precision: f64) -> DomainPrior {
        DomainPrior::new(mean, precision).unwrap()
    }

    #[test]
    fn no_evidence_leaves_prior() {
        // base gain must stay positive; a vanishing gain is indistinguishable from none
        let p = prior(0.0, 1.0);
        let ev = EvidenceModel::new(5.0, 1e-300, 0.0).unwrap();
        let s = posterior_update(&p, &ev).unwrap();
        assert!(s.posterior_mean.abs() < 1e-290);
        assert_eq!(s.posterior_precision, 1.0);
        assert_eq!(planning_strength(&s, &p), 0.0);
    }

    #[test]
    fn precision_weighted_average() {
        let p = prior(-30.0, 1.0);
        let ev = EvidenceModel::new(0.0, 1.0, 0.0).unwrap();
        let s = posterior_update(&p, &ev).unwrap();
        assert_eq!(s.posterior_mean, -15.0);
        assert_eq!(s.posterior_precision, 2.0);
        assert_eq!(planning_strength(&s, &p), 0.5);
    }

    #[test]
    fn likelihood_dominance_limit() {
        let p = prior(-30.0, 1.0);
        let ev = EvidenceModel::new(0.0, 1e6, 0.0).unwrap();
        let s = posterior_update(&p, &ev).unwrap();
        assert!(s.posterior_mean.abs() < 1e-4);
        assert!(planning_strength(&s, &p) > 1.0 - 1e-5);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DomainPrior::new(f64::NAN, 1.0).is_err());
        assert!(DomainPrior::new(0.0, 0.0).is_err());
        assert!(EvidenceModel::new(f64::INFINITY, 1.0, 0.0).is_err());
        assert!(EvidenceModel::new(0.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn entropy_values() {
        let tiny = PlanState {
            posterior_mean: 0.0,
            posterior_precision: 1e15,
            step_index: 0,
        };
        let floor = predictive_entropy(&tiny, 1.0).unwrap();
        assert!((floor - 1.418_938_533_204_672_7).abs() < 1e-12);

        let unit = PlanState {
            posterior_precision: 1.0,
            ..tiny
        };
        let h = predictive_entropy(&unit, 1.0).unwrap();
        let expected = 0.5 * (4.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((h - expected).abs() < 1e-12);
        // total variance 2 vs 1: exactly half a log two apart
        assert!((h - floor - 0.5 * 2f64.ln()).abs() < 1e-12);

        assert!(predictive_entropy(&unit, 0.0).is_err());
        assert!(predictive_entropy(&unit, -1.0).is_err());
    }

    #[test]
    fn entropy_gap_cases() {
        let p = prior(0.0, 1.0);
        let a = EvidenceModel::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(entropy_gap(&a, &a, &p, 1.0).unwrap(), 0.0);

        let ind = EvidenceModel::new(0.0, 4.0, 0.0).unwrap();
        let gap = entropy_gap(&a, &ind, &p, 1.0).unwrap();
        // 1/2 ln((1 + 1/2) / (1 + 1/5))
        assert!((gap - 0.5 * (1.5f64 / 1.2).ln()).abs() < 1e-12);
        assert!(gap > 0.0);

        assert!(entropy_gap(&ind, &a, &p, 1.0).is_err());
        let grown = EvidenceModel::new(0.0, 4.0, 0.3).unwrap();
        assert!(entropy_gap(&a, &grown, &p, 1.0).is_err());

        let huge = EvidenceModel::new(0.0, 1e12, 0.0).unwrap();
        let limit = predictive_entropy(&posterior_update(&p, &a).unwrap(), 1.0).unwrap()
            - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((entropy_gap(&a, &huge, &p, 1.0).unwrap() - limit).abs() < 1e-9);
    }

    #[test]
    fn frozen_plan_without_growth_or_noise() {
        let p = prior(-30.0, 1.0);
        let ev = EvidenceModel::new(0.0, 0.5, 0.0).unwrap();
        let t = simulate_trajectory(&p, &ev, 16, 0.0, 3).unwrap();
        let first = t.plans[0].posterior_mean;
        assert!(t.emissions.iter().all(|&e| e == first));
    }

    #[test]
    fn bias_decays_toward_target() {
        let p = prior(-30.0, 1.0);
        let ev = EvidenceModel::new(0.0, 0.5, 0.2).unwrap();
        let t = simulate_trajectory(&p, &ev, 64, 0.0, 0).unwrap();
        // closed form: bias_t = -30 * 1 / (1 + 0.5 * (1 + 0.2 t))
        assert!((t.bias[0] - -20.0).abs() < 1e-12);
        assert!((t.bias[63] - -30.0 / 7.8).abs() < 1e-12);
        assert!(t.bias.windows(2).all(|w| w[1] > w[0]));
        assert!(t.bias[63].abs() < t.bias[0].abs());
    }

    #[test]
    fn unbiased_prior_stays_unbiased() {
        let p = prior(12.0, 3.0);
        let ev = EvidenceModel::new(12.0, 0.5, 0.2).unwrap();
        let t = simulate_trajectory(&p, &ev, 32, 4.0, 9).unwrap();
        assert!(t.bias.iter().all(|&b| b.abs() < 1e-12));
    }

    #[test]
    fn zero_steps_rejected() {
        let p = prior(0.0, 1.0);
        let ev = EvidenceModel::new(0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            simulate_trajectory(&p, &ev, 0, 1.0, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn noiseless_runs_ignore_seed() {
        let p = prior(-30.0, 0.05);
        let ev = EvidenceModel::new(0.0, 0.5, 0.2).unwrap();
        let a = simulate_trajectory(&p, &ev, 64, 0.0, 1).unwrap();
        let b = simulate_trajectory(&p, &ev, 64, 0.0, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export_header_and_rows() {
        let p = prior(-30.0, 1.0);
        let ev = EvidenceModel::new(0.0, 1.0, 0.0).unwrap();
        let t = simulate_trajectory(&p, &ev, 2, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,posterior_mean,posterior_precision,emission,planning_strength,bias"
        );
        assert_eq!(lines.next().unwrap(), "0,-15.0,2.0,-15.0,0.5,-15.0");
        assert_eq!(lines.count(), 1);
    }

    proptest! {
        #[test]
        fn posterior_is_convex_combination(
            m in -100.0f64..100.0, prec in 0.01f64..50.0,
            target in -100.0f64..100.0, gain in 0.01f64..50.0,
            growth in 0.0f64..2.0, n in 0u64..200,
        ) {
            let p = DomainPrior::new(m, prec).unwrap();
            let ev = EvidenceModel::new(target, gain, growth).unwrap().with_self_tokens(n);
            let s = posterior_update(&p, &ev).unwrap();
            let (lo, hi) = if m < target { (m, target) } else { (target, m) };
            let slack = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            prop_assert!(s.posterior_mean >= lo - slack && s.posterior_mean <= hi + slack);
            prop_assert!(s.posterior_precision >= prec);
        }

        #[test]
        fn trajectory_invariants(
            m in -60.0f64..60.0, prec in 0.01f64..5.0, gain in 0.05f64..5.0,
            growth in 0.0f64..1.0, var in 0.0f64..50.0, seed in any::<u64>(),
        ) {
            let p = DomainPrior::new(m, prec).unwrap();
            let ev = EvidenceModel::new(0.0, gain, growth).unwrap();
            let t = simulate_trajectory(&p, &ev, 40, var, seed).unwrap();
            prop_assert_eq!(t.plans.len(), 40);
            prop_assert_eq!(t.emissions.len(), 40);
            prop_assert_eq!(t.bias.len(), 40);
            prop_assert!(t.planning_strength.windows(2).all(|w| w[1] >= w[0]));
            for (plan, b) in t.plans.iter().zip(&t.bias) {
                prop_assert_eq!(*b, plan.posterior_mean - t.target_estimate);
            }
            if growth > 0.0 {
                let h = t.entropies(1.0).unwrap();
                prop_assert!(h.windows(2).all(|w| w[1] < w[0]));
            }
        }
    }
}
