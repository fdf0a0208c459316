//! Deterministic SVG figures from result CSVs.
//!
//! Every figure is a stack of panels sharing one x range. Data series are
//! drawn as `<polyline>` elements (exactly one per series); axes, ticks and
//! reference lines use `<line>` so the series count can be read off the
//! markup. Numbers are printed with fixed precision, so identical input
//! gives byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planmodel::Trajectory;
use crate::probe::R2Curve;
use crate::stats::ConditionTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    OffsetCurve,
    PositionCurve,
    BiasTrajectory,
    SimulatorTrajectory,
}

impl PlotKind {
    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            PlotKind::OffsetCurve | PlotKind::PositionCurve => &["layer", "x", "r_squared"],
            PlotKind::BiasTrajectory => &["mu", "series", "position", "mean"],
            PlotKind::SimulatorTrajectory => &["step", "posterior_mean", "emission"],
        }
    }

    fn defaults(self) -> (&'static str, &'static str, &'static str) {
        match self {
            PlotKind::OffsetCurve => ("Probe R\u{b2} by token offset", "offset (tokens)", "R\u{b2}"),
            PlotKind::PositionCurve => ("Probe R\u{b2} by comma position", "position q", "R\u{b2}"),
            PlotKind::BiasTrajectory => ("Sample means by position", "position", "mean"),
            PlotKind::SimulatorTrajectory => ("Simulated plan trajectory", "step", "value"),
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "offset_curve" => Ok(PlotKind::OffsetCurve),
            "position_curve" => Ok(PlotKind::PositionCurve),
            "bias_trajectory" => Ok(PlotKind::BiasTrajectory),
            "simulator_trajectory" => Ok(PlotKind::SimulatorTrajectory),
            other => Err(Error::InvalidParameter(format!("unknown plot kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: Option<String>,
    pub x_label: Option<String>,
    pub y_label: Option<String>,
}

impl PlotSpec {
    pub fn new(kind: PlotKind) -> Self {
        Self {
            kind,
            title: None,
            x_label: None,
            y_label: None,
        }
    }

    fn labels(&self) -> (String, String, String) {
        let (t, x, y) = self.kind.defaults();
        (
            self.title.clone().unwrap_or_else(|| t.into()),
            self.x_label.clone().unwrap_or_else(|| x.into()),
            self.y_label.clone().unwrap_or_else(|| y.into()),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: Option<String>,
    pub series: Vec<Series>,
    /// Horizontal reference lines.
    pub hlines: Vec<f64>,
    /// Vertical separators.
    pub vlines: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub panels: Vec<Panel>,
}

const WIDTH: f64 = 760.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 46.0;
const GAP: f64 = 28.0;

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10()).ceil() as usize
    };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if lo > hi {
        return None;
    }
    if lo == hi {
        Some((lo - 1.0, hi + 1.0))
    } else {
        let pad = (hi - lo) * 0.05;
        Some((lo - pad, hi + pad))
    }
}

impl Figure {
    pub fn render(&self) -> Result<String> {
        if self.panels.is_empty() || self.panels.iter().all(|p| p.series.is_empty()) {
            return Err(Error::InvalidData("figure has no data".into()));
        }
        let all = || {
            self.panels
                .iter()
                .flat_map(|p| p.series.iter().flat_map(|s| s.points.iter()))
        };
        let (x0, x1) = range(
            all()
                .map(|p| p.0)
                .chain(self.panels.iter().flat_map(|p| p.vlines.iter().copied())),
        )
        .ok_or_else(|| Error::InvalidData("figure has no finite points".into()))?;
        let panel_h = if self.panels.len() == 1 { 300.0 } else { 130.0 };
        let height = TOP + BOTTOM + self.panels.len() as f64 * panel_h + (self.panels.len() - 1) as f64 * GAP;
        let plot_w = WIDTH - LEFT - RIGHT;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
            w = num(WIDTH),
            h = num(height)
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            num(WIDTH / 2.0),
            escape(&self.title)
        );

        let (xticks, xstep) = ticks(x0, x1);
        for (k, panel) in self.panels.iter().enumerate() {
            let top = TOP + k as f64 * (panel_h + GAP);
            let bottom = top + panel_h;
            let ys = panel
                .series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1))
                .chain(panel.hlines.iter().copied());
            let (y0, y1) = range(ys).unwrap_or((0.0, 1.0));
            let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * panel_h;

            let _ = writeln!(s, r#"<g class="panel" data-index="{k}">"#);
            if let Some(t) = &panel.title {
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" font-size="12">{}</text>"#,
                    num(LEFT + 4.0),
                    num(top - 6.0),
                    escape(t)
                );
            }
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
                num(LEFT),
                num(top),
                num(plot_w),
                num(panel_h)
            );
            let (yticks, ystep) = ticks(y0, y1);
            for v in &yticks {
                let y = sy(*v);
                let _ = writeln!(
                    s,
                    r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#444"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
                    num(LEFT - 4.0),
                    num(LEFT),
                    num(LEFT - 6.0),
                    num(y + 4.0),
                    tick_label(*v, ystep),
                    y = num(y)
                );
            }
            for v in &xticks {
                let x = sx(*v);
                let _ = writeln!(
                    s,
                    r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#444"/>"##,
                    num(bottom),
                    num(bottom + 4.0),
                    x = num(x)
                );
                if k + 1 == self.panels.len() {
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                        num(x),
                        num(bottom + 16.0),
                        tick_label(*v, xstep)
                    );
                }
            }
            for h in &panel.hlines {
                let y = num(sy(*h));
                let _ = writeln!(
                    s,
                    r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#999" stroke-dasharray="4 3"/>"##,
                    num(LEFT),
                    num(LEFT + plot_w)
                );
            }
            for v in &panel.vlines {
                let x = num(sx(*v));
                let _ = writeln!(
                    s,
                    r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#bbb"/>"##,
                    num(top),
                    num(bottom)
                );
            }
            for (i, series) in panel.series.iter().enumerate() {
                let pts: Vec<String> = series
                    .points
                    .iter()
                    .filter(|p| p.0.is_finite() && p.1.is_finite())
                    .map(|p| format!("{},{}", num(sx(p.0)), num(sy(p.1))))
                    .collect();
                let dash = if series.dashed {
                    r#" stroke-dasharray="5 3""#
                } else {
                    ""
                };
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} data-series="{}" points="{}"/>"#,
                    escape(&series.color),
                    escape(&series.label),
                    pts.join(" ")
                );
                let ly = top + 12.0 + 16.0 * i as f64;
                let lx = LEFT + plot_w + 12.0;
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="14" height="3" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                    num(lx),
                    num(ly - 4.0),
                    escape(&series.color),
                    num(lx + 20.0),
                    num(ly),
                    escape(&series.label)
                );
            }
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(LEFT + plot_w / 2.0),
            num(height - 10.0),
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
            escape(&self.y_label),
            y = num(TOP + (height - TOP - BOTTOM) / 2.0)
        );
        s.push_str("</svg>\n");
        Ok(s)
    }
}

/// Light-to-dark blue ramp, `i` of `n`.
fn ramp(i: usize, n: usize) -> String {
    let t = if n <= 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(158.0, 8.0),
        lerp(202.0, 48.0),
        lerp(225.0, 107.0)
    )
}

const SERIES_COLORS: [&str; 3] = ["#7f7f7f", "#d62728", "#1f77b4"];

pub fn curves_figure(curves: &[R2Curve], spec: &PlotSpec) -> Figure {
    let (title, x_label, y_label) = spec.labels();
    let mut sorted: Vec<&R2Curve> = curves.iter().collect();
    sorted.sort_by_key(|c| c.layer);
    let series = sorted
        .iter()
        .enumerate()
        .map(|(i, c)| Series {
            label: format!("layer {}", c.layer),
            color: ramp(i, sorted.len()),
            points: c.points.iter().map(|p| (p.x as f64, p.r_squared)).collect(),
            dashed: false,
        })
        .collect();
    Figure {
        title,
        x_label,
        y_label,
        panels: vec![Panel {
            series,
            ..Default::default()
        }],
    }
}

/// One panel per condition; context, Gen I and Gen II run left to right.
pub fn bias_figure(trajectories: &[ConditionTrajectory], spec: &PlotSpec) -> Figure {
    let (title, x_label, y_label) = spec.labels();
    let panels = trajectories
        .iter()
        .map(|t| {
            let mut start = 0usize;
            let mut vlines = Vec::new();
            let mut series = Vec::new();
            for (i, s) in t.series.iter().enumerate() {
                if i > 0 {
                    vlines.push(start as f64 + 0.5);
                }
                series.push(Series {
                    label: s.series.clone(),
                    color: SERIES_COLORS[i % SERIES_COLORS.len()].into(),
                    points: s
                        .positions
                        .iter()
                        .map(|p| ((start + p.position) as f64, p.mean))
                        .collect(),
                    dashed: false,
                });
                start += s.positions.len();
            }
            Panel {
                title: Some(format!("\u{3bc} = {}", t.mu)),
                series,
                hlines: vec![t.mu as f64],
                vlines,
            }
        })
        .collect();
    Figure {
        title,
        x_label,
        y_label,
        panels,
    }
}

pub fn trajectory_figure(traj: &Trajectory, spec: &PlotSpec) -> Figure {
    let (title, x_label, y_label) = spec.labels();
    let steps = 0..traj.len();
    Figure {
        title,
        x_label,
        y_label,
        panels: vec![Panel {
            title: None,
            series: vec![
                Series {
                    label: "posterior mean".into(),
                    color: "#1f77b4".into(),
                    points: steps
                        .clone()
                        .map(|t| (t as f64, traj.plans[t].posterior_mean))
                        .collect(),
                    dashed: false,
                },
                Series {
                    label: "emission".into(),
                    color: "#d62728".into(),
                    points: steps.map(|t| (t as f64, traj.emissions[t])).collect(),
                    dashed: true,
                },
            ],
            hlines: vec![traj.target_estimate],
            vlines: vec![],
        }],
    }
}

/// Header plus string cells of a CSV, checked for the columns a kind needs.
struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read<R: Read>(input: R, required: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut it = rdr.records();
        let header: Vec<String> = match it.next() {
            Some(h) => h?.iter().map(|c| c.trim().to_string()).collect(),
            None => return Err(Error::Format("input CSV is empty".into())),
        };
        let missing: Vec<&str> = required
            .iter()
            .copied()
            .filter(|c| !header.iter().any(|h| h == c))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Format(format!(
                "input CSV is missing column(s): {}",
                missing.join(", ")
            )));
        }
        let rows = it.collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err(Error::Format("input CSV has a header but no rows".into()));
        }
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .expect("checked on read")
    }

    fn text<'a>(&self, row: &'a csv::StringRecord, name: &str) -> &'a str {
        row.get(self.col(name)).unwrap_or("").trim()
    }

    fn number(&self, row_index: usize, name: &str) -> Result<f64> {
        let cell = self.text(&self.rows[row_index], name);
        cell.parse().map_err(|_| {
            Error::Format(format!(
                "row {}: column '{name}' is not a number: '{cell}'",
                row_index + 2
            ))
        })
    }
}

/// Reads a result CSV and renders the figure `spec.kind` describes.
pub fn render_plot<R: Read>(spec: &PlotSpec, input: R) -> Result<String> {
    let table = Table::read(input, spec.kind.required_columns())?;
    let (title, x_label, y_label) = spec.labels();
    let figure = match spec.kind {
        PlotKind::OffsetCurve | PlotKind::PositionCurve => {
            let mut groups: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
            for i in 0..table.rows.len() {
                let layer = table.number(i, "layer")? as i64;
                groups
                    .entry(layer)
                    .or_default()
                    .push((table.number(i, "x")?, table.number(i, "r_squared")?));
            }
            let n = groups.len();
            Figure {
                title,
                x_label,
                y_label,
                panels: vec![Panel {
                    series: groups
                        .into_iter()
                        .enumerate()
                        .map(|(i, (layer, points))| Series {
                            label: format!("layer {layer}"),
                            color: ramp(i, n),
                            points,
                            dashed: false,
                        })
                        .collect(),
                    ..Default::default()
                }],
            }
        }
        PlotKind::BiasTrajectory => {
            // mu -> series name -> points, series kept in first-seen order
            type Named = (String, Vec<(usize, f64)>);
            let mut groups: BTreeMap<i64, Vec<Named>> = BTreeMap::new();
            for i in 0..table.rows.len() {
                let mu = table.number(i, "mu")? as i64;
                let name = table.text(&table.rows[i], "series").to_string();
                let pos = table.number(i, "position")? as usize;
                let mean = table.number(i, "mean")?;
                let entry = groups.entry(mu).or_default();
                match entry.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, pts)) => pts.push((pos, mean)),
                    None => entry.push((name, vec![(pos, mean)])),
                }
            }
            let panels = groups
                .into_iter()
                .rev()
                .map(|(mu, series)| {
                    let mut start = 0usize;
                    let mut vlines = Vec::new();
                    let mut out = Vec::new();
                    for (i, (name, pts)) in series.into_iter().enumerate() {
                        if i > 0 {
                            vlines.push(start as f64 + 0.5);
                        }
                        let width = pts.iter().map(|p| p.0).max().unwrap_or(0);
                        out.push(Series {
                            label: name,
                            color: SERIES_COLORS[i % SERIES_COLORS.len()].into(),
                            points: pts.iter().map(|&(p, m)| ((start + p) as f64, m)).collect(),
                            dashed: false,
                        });
                        start += width;
                    }
                    Panel {
                        title: Some(format!("\u{3bc} = {mu}")),
                        series: out,
                        hlines: vec![mu as f64],
                        vlines,
                    }
                })
                .collect();
            Figure {
                title,
                x_label,
                y_label,
                panels,
            }
        }
        PlotKind::SimulatorTrajectory => {
            let mut mean = Vec::with_capacity(table.rows.len());
            let mut emission = Vec::with_capacity(table.rows.len());
            for i in 0..table.rows.len() {
                let step = table.number(i, "step")?;
                mean.push((step, table.number(i, "posterior_mean")?));
                emission.push((step, table.number(i, "emission")?));
            }
            Figure {
                title,
                x_label,
                y_label,
                panels: vec![Panel {
                    series: vec![
                        Series {
                            label: "posterior mean".into(),
                            color: "#1f77b4".into(),
                            points: mean,
                            dashed: false,
                        },
                        Series {
                            label: "emission".into(),
                            color: "#d62728".into(),
                            points: emission,
                            dashed: true,
                        },
                    ],
                    ..Default::default()
                }],
            }
        }
    };
    figure.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(svg: &str, needle: &str) -> usize {
        svg.matches(needle).count()
    }

    #[test]
    fn one_polyline_per_layer() {
        let csv = "layer,x,r_squared,n_examples\n15,0,0.9,10\n15,1,0.5,10\n16,0,0.8,10\n";
        let svg = render_plot(&PlotSpec::new(PlotKind::OffsetCurve), csv.as_bytes()).unwrap();
        assert_eq!(count(&svg, "<polyline"), 2);
        assert!(svg.starts_with("<svg"));
        assert_eq!(
            svg,
            render_plot(&PlotSpec::new(PlotKind::OffsetCurve), csv.as_bytes()).unwrap()
        );
    }

    #[test]
    fn bias_panels_stack() {
        let mut csv = String::from("mu,series,position,mean\n");
        for mu in [-50, -30, -10, 0, 10, 30, 50] {
            for s in ["context", "gen1", "gen2"] {
                for p in 1..=3 {
                    csv += &format!("{mu},{s},{p},{}\n", mu + p);
                }
            }
        }
        let svg = render_plot(&PlotSpec::new(PlotKind::BiasTrajectory), csv.as_bytes()).unwrap();
        assert_eq!(count(&svg, r#"class="panel""#), 7);
        assert_eq!(count(&svg, "<polyline"), 21);
        // highest mu on top
        assert!(svg.find("\u{3bc} = 50").unwrap() < svg.find("\u{3bc} = -50").unwrap());
    }

    #[test]
    fn csv_errors_are_format_errors() {
        let spec = PlotSpec::new(PlotKind::OffsetCurve);
        assert!(matches!(render_plot(&spec, &b""[..]), Err(Error::Format(_))));
        match render_plot(&spec, &b"layer,x\n1,2\n"[..]) {
            Err(Error::Format(m)) => assert!(m.contains("r_squared")),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "layer,x,r_squared\n1,2,abc\n";
        assert!(matches!(
            render_plot(&spec, bad.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn tick_steps_are_round() {
        let (t, step) = ticks(0.0, 1.0);
        assert_eq!(step, 0.2);
        assert_eq!(t.len(), 6);
        assert_eq!(tick_label(-0.0, 0.2), "0.0");
    }
}
