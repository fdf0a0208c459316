//! Browser demo exposing a few library operations to the page in `www/`.
//! Every export returns JSON.
//!
//! The `*_report` functions do the work and are tested natively; the
//! `#[wasm_bindgen]` wrappers only serialize.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use planshift::planmodel::{entropy_gap, simulate_trajectory, DomainPrior, EvidenceModel};
use planshift::plot::{curves_figure, trajectory_figure, PlotKind, PlotSpec};
use planshift::probe::synthetic::{planted_offset_dump, SyntheticSpec};
use planshift::probe::{fit_offset_curve, ProbeConfig};
use planshift::stats::{mean, stars, welch_ttest};
use planshift::Result;

#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub svg: String,
    pub first_bias: f64,
    pub final_bias: f64,
    pub final_strength: f64,
    /// Step-0 entropy with half the evidence gain minus that at full gain.
    pub entropy_gap: f64,
}

#[derive(Debug, Serialize)]
pub struct ProbeReport {
    pub svg: String,
    pub offsets: Vec<usize>,
    pub r_squared: Vec<f64>,
    /// Largest offset whose R² stays above one half.
    pub recovered_horizon: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct TTestReport {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub stars: String,
}

#[allow(clippy::too_many_arguments)]
pub fn simulation_report(
    prior_mean: f64,
    prior_precision: f64,
    target: f64,
    base_gain: f64,
    gain_growth: f64,
    steps: usize,
    emission_sd: f64,
    seed: u64,
) -> Result<SimulationReport> {
    let prior = DomainPrior::new(prior_mean, prior_precision)?;
    let ev = EvidenceModel::new(target, base_gain, gain_growth)?;
    let var = emission_sd * emission_sd;
    let traj = simulate_trajectory(&prior, &ev, steps, var, seed)?;
    let weak = EvidenceModel::new(target, base_gain / 2.0, gain_growth)?;
    let last = traj.len() - 1;
    Ok(SimulationReport {
        svg: trajectory_figure(&traj, &PlotSpec::new(PlotKind::SimulatorTrajectory)).render()?,
        first_bias: traj.bias[0],
        final_bias: traj.bias[last],
        final_strength: traj.planning_strength[last],
        entropy_gap: entropy_gap(&weak, &ev, &prior, var)?,
    })
}

/// Probes a small planted dump whose embeddings encode `lookahead` samples ahead.
pub fn probe_report(lookahead: usize, noise: f64, alpha: f64, seed: u64) -> Result<ProbeReport> {
    let spec = SyntheticSpec {
        trials: 16,
        samples: 20,
        hidden_dim: 3 * (lookahead + 1) + 4,
        noise,
        seed,
        ..Default::default()
    };
    let dump = planted_offset_dump(&spec, lookahead)?;
    let mut config = ProbeConfig {
        max_offset: 3 * (lookahead + 3),
        threads: Some(1),
        ..Default::default()
    };
    config.lasso.penalty = alpha;
    let curve = fit_offset_curve(&dump, 0, &config)?;
    let svg = curves_figure(
        std::slice::from_ref(&curve),
        &PlotSpec::new(PlotKind::OffsetCurve),
    )
    .render()?;
    let recovered_horizon = curve
        .points
        .iter()
        .take_while(|p| p.r_squared > 0.5)
        .last()
        .map(|p| p.x);
    Ok(ProbeReport {
        svg,
        offsets: curve.points.iter().map(|p| p.x).collect(),
        r_squared: curve.points.iter().map(|p| p.r_squared).collect(),
        recovered_horizon,
    })
}

/// Numbers separated by commas, spaces or newlines.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| planshift::Error::Parse(format!("'{s}' is not a number")))
        })
        .collect()
}

pub fn ttest_report(a: &str, b: &str) -> Result<TTestReport> {
    let (a, b) = (parse_numbers(a)?, parse_numbers(b)?);
    let r = welch_ttest(&a, &b)?;
    Ok(TTestReport {
        mean_a: mean(&a),
        mean_b: mean(&b),
        t: r.t_statistic,
        df: r.degrees_of_freedom,
        p: r.p_value,
        stars: stars(r.p_value).into(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    let value = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    prior_mean: f64,
    prior_precision: f64,
    target: f64,
    base_gain: f64,
    gain_growth: f64,
    steps: u32,
    emission_sd: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(simulation_report(
        prior_mean,
        prior_precision,
        target,
        base_gain,
        gain_growth,
        steps as usize,
        emission_sd,
        seed as u64,
    ))
}

#[wasm_bindgen]
pub fn probe(lookahead: u32, noise: f64, alpha: f64, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(probe_report(lookahead as usize, noise, alpha, seed as u64))
}

#[wasm_bindgen]
pub fn ttest(a: &str, b: &str) -> std::result::Result<String, JsValue> {
    to_js(ttest_report(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_shrinks_bias() {
        let r = simulation_report(-30.0, 0.05, 0.0, 0.5, 0.2, 64, 10.0, 7).unwrap();
        assert!(r.final_bias.abs() < r.first_bias.abs());
        assert!(r.final_strength > 0.9);
        assert!(r.entropy_gap > 0.0);
        assert!(r.svg.starts_with("<svg"));
        assert!(simulation_report(0.0, -1.0, 0.0, 0.5, 0.2, 8, 1.0, 0).is_err());
    }

    #[test]
    fn probe_recovers_planted_horizon() {
        let r = probe_report(2, 0.05, 0.3, 0).unwrap();
        assert_eq!(r.offsets.len(), r.r_squared.len());
        let h = r.recovered_horizon.unwrap();
        assert!((6..=8).contains(&h), "{h}");
        assert!(r.r_squared.last().unwrap() < &0.3);
    }

    #[test]
    fn ttest_matches_library() {
        let r = ttest_report("1, 2, 3, 4", "2\n4 6 8").unwrap();
        assert_eq!(r.mean_b, 5.0);
        assert!(r.t < 0.0 && r.p > 0.05);
        assert_eq!(r.stars, "");
        assert!(ttest_report("1, x", "1 2").is_err());
        assert!(ttest_report("1", "1 2").is_err());
    }
}
