//! Statistics over generation records, from t-tests up to bias tables.

mod dist;
mod table;
mod trajectory;

pub use dist::{inc_beta, ln_gamma, t_cdf, t_quantile, t_two_sided_p};
pub use table::{
    build_bias_table, format_decimal, format_group, format_t, stars, BiasRow, BiasTable, GroupSummary,
};
pub use trajectory::{
    bias_trajectories, write_trajectory_csv, ConditionTrajectory, SeriesSummary, SERIES_NAMES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genharness::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    OneSample,
    WelchTwoSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub kind: TestKind,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (n − 1 denominator).
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

pub fn one_sample_ttest(values: &[f64], mu0: f64) -> Result<TTestResult> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "one-sample t-test needs n >= 2, got {n}"
        )));
    }
    let var = sample_variance(values);
    if var == 0.0 {
        return Err(Error::DegenerateData("sample has zero variance".into()));
    }
    let df = (n - 1) as f64;
    let t = (mean(values) - mu0) / (var / n as f64).sqrt();
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: t_two_sided_p(t, df)?,
        kind: TestKind::OneSample,
    })
}

/// Welch's unequal-variance t-test of `mean(a) − mean(b)`.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(Error::InvalidData(format!(
            "Welch test needs n >= 2 per group, got {na} and {nb}"
        )));
    }
    let (va, vb) = (sample_variance(a) / na as f64, sample_variance(b) / nb as f64);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::DegenerateData("both groups have zero variance".into()));
    }
    let se2 = va + vb;
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na as f64 - 1.0) + vb * vb / (nb as f64 - 1.0));
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: t_two_sided_p(t, df)?,
        kind: TestKind::WelchTwoSample,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionSummary {
    /// 1-based generation position.
    pub position: usize,
    pub mean: f64,
    /// NaN when n < 2.
    pub std_error: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub n: usize,
    /// Some sequences were too short to reach this position.
    pub ragged: bool,
}

/// Per-position summaries across sequences, with exact-t 95% intervals.
pub fn position_summaries<S: AsRef<[f64]>>(sequences: &[S]) -> Result<Vec<PositionSummary>> {
    if sequences.is_empty() {
        return Err(Error::InvalidData("no sequences to summarize".into()));
    }
    let longest = sequences.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
    if longest == 0 {
        return Err(Error::InvalidData("all sequences are empty".into()));
    }
    let total = sequences.len();
    let mut out = Vec::with_capacity(longest);
    for pos in 0..longest {
        let mut column: Vec<f64> = sequences
            .iter()
            .filter_map(|s| s.as_ref().get(pos).copied())
            .collect();
        // fixed summation order keeps the result independent of record order
        column.sort_by(f64::total_cmp);
        let n = column.len();
        let m = mean(&column);
        let (se, lo, hi) = if n >= 2 {
            let se = (sample_variance(&column) / n as f64).sqrt();
            let crit = t_quantile(0.975, (n - 1) as f64)?;
            (se, m - crit * se, m + crit * se)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        out.push(PositionSummary {
            position: pos + 1,
            mean: m,
            std_error: se,
            ci95_low: lo,
            ci95_high: hi,
            n,
            ragged: n < total,
        });
    }
    Ok(out)
}

/// Position summaries over the parsed values of records sharing one condition.
pub fn record_position_summaries(records: &[TrialRecord]) -> Result<Vec<PositionSummary>> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidData("no records to summarize".into()))?;
    let key = first.condition_group();
    if let Some(r) = records.iter().find(|r| r.condition_group() != key) {
        return Err(Error::InvalidData(format!(
            "records mix conditions '{}' and '{}'",
            key,
            r.condition_group()
        )));
    }
    let seqs: Vec<Vec<f64>> = records
        .iter()
        .filter(|r| !r.parsed_values.is_empty())
        .map(|r| r.parsed_values.iter().map(|&v| v as f64).collect())
        .collect();
    position_summaries(&seqs)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidData(
            "spearman needs two equal-length series of n >= 2".into(),
        ));
    }
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_sample_hand_values() {
        let r = one_sample_ttest(&[-1.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);

        let r = one_sample_ttest(&[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!((r.t_statistic - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.degrees_of_freedom, 2.0);
        // df = 2 closed form: p = 1 - t / sqrt(2 + t²)
        let t = r.t_statistic;
        assert!((r.p_value - (1.0 - t / (2.0 + t * t).sqrt())).abs() < 1e-12);

        assert!(matches!(
            one_sample_ttest(&[3.0, 3.0, 3.0], 0.0),
            Err(Error::DegenerateData(_))
        ));
        assert!(one_sample_ttest(&[1.0], 0.0).is_err());
    }

    #[test]
    fn welch_hand_values() {
        let a = [0.0, 1.0];
        let b = [10.0, 11.0];
        let r = welch_ttest(&a, &b).unwrap();
        // variances 0.5 each, se² = 0.5, t = -10 / sqrt(0.5)
        assert!((r.t_statistic + 10.0 / 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 2.0).abs() < 1e-12);

        let same = welch_ttest(&a, &a).unwrap();
        assert_eq!(same.t_statistic, 0.0);
        assert_eq!(same.p_value, 1.0);

        let swapped = welch_ttest(&b, &a).unwrap();
        assert_eq!(swapped.t_statistic, -r.t_statistic);
        assert_eq!(swapped.p_value, r.p_value);

        assert!(matches!(
            welch_ttest(&[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn summaries_hand_values() {
        let s = position_summaries(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean, 1.0);
        assert!((s[0].std_error - 1.0).abs() < 1e-15);
        // t_{0.975, 1} = 12.7062...
        assert!((s[0].ci95_high - 1.0 - 12.706_204_736_174_7).abs() < 1e-9);

        let constant: Vec<Vec<f64>> = (0..100).map(|_| vec![4.0, 5.0]).collect();
        let s = position_summaries(&constant).unwrap();
        assert!(s
            .iter()
            .all(|p| p.std_error == 0.0 && p.ci95_low == p.mean && p.ci95_high == p.mean));

        let ragged = position_summaries(&[vec![1.0, 2.0, 3.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(ragged.len(), 3);
        assert!(!ragged[1].ragged);
        assert!(ragged[2].ragged && ragged[2].n == 1 && ragged[2].std_error.is_nan());

        assert!(position_summaries::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn spearman_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 35.0, 90.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn t_cdf_symmetric_and_monotone(t in -40.0f64..40.0, dt in 0.0f64..5.0, df in 0.2f64..2000.0) {
            let lo = t_cdf(t, df).unwrap();
            let hi = t_cdf(t + dt, df).unwrap();
            prop_assert!(hi >= lo);
            prop_assert!((lo + t_cdf(-t, df).unwrap() - 1.0).abs() < 1e-14);
            prop_assert!((0.0..=1.0).contains(&lo));
        }

        #[test]
        fn welch_df_is_bracketed(
            a in prop::collection::vec(-50.0f64..50.0, 2..30),
            b in prop::collection::vec(-50.0f64..50.0, 2..30),
        ) {
            if let Ok(r) = welch_ttest(&a, &b) {
                let lo = (a.len().min(b.len()) - 1) as f64;
                let hi = (a.len() + b.len() - 2) as f64;
                prop_assert!(r.degrees_of_freedom >= lo - 1e-9 && r.degrees_of_freedom <= hi + 1e-9);
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }
        }
    }
}
