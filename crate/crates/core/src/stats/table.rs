//! First-position bias table: Gen I and Gen II means against the true mu,
//! and Gen I against Gen II.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::{mean, one_sample_ttest, sample_variance, welch_ttest, TTestResult};
use crate::error::{Error, Result};
use crate::genharness::{Stage, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    /// Test of the group mean against mu.
    pub test: TTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub mu: i64,
    pub gen1: GroupSummary,
    pub gen2: GroupSummary,
    /// Welch test of Gen I against Gen II.
    pub gen1_vs_gen2: TTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasTable {
    /// Ordered by descending mu.
    pub rows: Vec<BiasRow>,
}

fn first_values(records: &[&TrialRecord]) -> Vec<f64> {
    let mut v: Vec<f64> = records
        .iter()
        .filter_map(|r| r.parsed_values.first().map(|&x| x as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn summarize(values: &[f64], mu: i64) -> Result<GroupSummary> {
    let test = one_sample_ttest(values, mu as f64)?;
    Ok(GroupSummary {
        mean: mean(values),
        std_error: (sample_variance(values) / values.len() as f64).sqrt(),
        n: values.len(),
        test,
    })
}

/// Groups records by mu and stage and tests each stage's first generated value.
pub fn build_bias_table(gen1: &[TrialRecord], gen2: &[TrialRecord]) -> Result<BiasTable> {
    let mut groups: BTreeMap<i64, [Vec<&TrialRecord>; 2]> = BTreeMap::new();
    for r in gen1.iter().chain(gen2) {
        let c = r
            .exp2
            .as_ref()
            .ok_or_else(|| Error::InvalidData(format!("record '{}' is not a sampling trial", r.condition)))?;
        let slot = match c.stage {
            Stage::Gen1 => 0,
            Stage::Gen2 => 1,
        };
        groups.entry(c.mu).or_default()[slot].push(r);
    }
    if groups.is_empty() {
        return Err(Error::InvalidData("no records".into()));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (&mu, [g1, g2]) in groups.iter().rev() {
        if g1.is_empty() {
            return Err(Error::MissingStage { mu, stage: "gen1" });
        }
        if g2.is_empty() {
            return Err(Error::MissingStage { mu, stage: "gen2" });
        }
        let (a, b) = (first_values(g1), first_values(g2));
        rows.push(BiasRow {
            mu,
            gen1: summarize(&a, mu)?,
            gen2: summarize(&b, mu)?,
            gen1_vs_gen2: welch_ttest(&a, &b)?,
        });
    }
    Ok(BiasTable { rows })
}

/// `*` for p < .05, `**` for p < .001.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Two decimals with the leading zero dropped for |x| < 1 (`.93`, `-.25`).
pub fn format_decimal(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = if s == "-0.00" { "0.00".to_string() } else { s };
    if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else {
        s
    }
}

/// `mean (se)` followed by significance stars, e.g. `-1.91 (1.04)**`.
pub fn format_group(g: &GroupSummary) -> String {
    format!(
        "{} ({}){}",
        format_decimal(g.mean),
        format_decimal(g.std_error),
        stars(g.test.p_value)
    )
}

pub fn format_t(t: &TTestResult) -> String {
    format!("t={}{}", format_decimal(t.t_statistic), stars(t.p_value))
}

const HEADER: [&str; 4] = ["Conditions", "Gen. I", "Gen. II", "I vs. II"];

impl BiasTable {
    fn cells(&self) -> Vec<[String; 4]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    format!("\u{3bc} = {}", r.mu),
                    format_group(&r.gen1),
                    format_group(&r.gen2),
                    format_t(&r.gen1_vs_gen2),
                ]
            })
            .collect()
    }

    /// Aligned plain text with the four-column layout and a significance note.
    pub fn render_text(&self) -> String {
        let cells = self.cells();
        let mut widths = HEADER.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        let rule = "-".repeat(total);
        let line = |cols: [&str; 4]| {
            let mut s = String::new();
            for (i, (c, w)) in cols.iter().zip(widths).enumerate() {
                if i + 1 == cols.len() {
                    s.push_str(c);
                } else {
                    let pad = w - c.chars().count() + 2;
                    s.push_str(c);
                    s.push_str(&" ".repeat(pad));
                }
            }
            s
        };
        let mut out = String::new();
        writeln!(out, "{rule}").unwrap();
        writeln!(out, "{}", line(HEADER)).unwrap();
        writeln!(out, "{rule}").unwrap();
        for row in &cells {
            writeln!(out, "{}", line([&row[0], &row[1], &row[2], &row[3]])).unwrap();
        }
        writeln!(out, "{rule}").unwrap();
        writeln!(
            out,
            "Note. Standard errors are shown in parentheses. *p < .05, **p < .001"
        )
        .unwrap();
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "mu",
            "gen1_mean",
            "gen1_se",
            "gen1_n",
            "gen1_t",
            "gen1_p",
            "gen2_mean",
            "gen2_se",
            "gen2_n",
            "gen2_t",
            "gen2_p",
            "welch_t",
            "welch_df",
            "welch_p",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.mu.to_string(),
                r.gen1.mean.to_string(),
                r.gen1.std_error.to_string(),
                r.gen1.n.to_string(),
                r.gen1.test.t_statistic.to_string(),
                r.gen1.test.p_value.to_string(),
                r.gen2.mean.to_string(),
                r.gen2.std_error.to_string(),
                r.gen2.n.to_string(),
                r.gen2.test.t_statistic.to_string(),
                r.gen2.test.p_value.to_string(),
                r.gen1_vs_gen2.t_statistic.to_string(),
                r.gen1_vs_gen2.degrees_of_freedom.to_string(),
                r.gen1_vs_gen2.p_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
