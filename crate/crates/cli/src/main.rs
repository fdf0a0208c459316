//! `planshift` command line. Each subcommand writes its artifact plus a run manifest.

mod config;
mod manifest;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use planshift::genharness::{
    load_records, save_records, ApiStyle, CompletionBackend, EndpointConfig, Exp2Plan, Harness, HttpBackend,
    MockModel, MockServer, Stage, DEFAULT_CONTEXT_COUNT, DEFAULT_GENERATE_COUNT, DEFAULT_MUS,
    DEFAULT_REPLICATES, DEFAULT_SAMPLE_COUNT, DEFAULT_SIGMA, DEFAULT_START_MAX, DEFAULT_START_MIN,
};
use planshift::lasso::LassoParams;
use planshift::planmodel::{simulate_trajectory, DomainPrior, EvidenceModel};
use planshift::plot::{curves_figure, render_plot, trajectory_figure, PlotKind, PlotSpec};
use planshift::probe::{
    export_curves, fit_offset_curve, fit_position_curve, read_dump_layers, ProbeConfig, RoleFilter,
    DEFAULT_HORIZON, DEFAULT_PENALTY, MAX_OFFSET,
};
use planshift::stats::{
    bias_trajectories, build_bias_table, record_position_summaries, write_trajectory_csv,
};
use planshift::ErrorKind;

use config::ConfigFile;
use manifest::{sibling_manifest, Recorder};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_TRANSPORT: u8 = 4;
const EXIT_FORMAT: u8 = 5;

/// A bad flag value or config entry caught outside clap.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "planshift",
    version,
    about = "Study how a model's plan for a numeric sequence shifts during generation"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// key = value file with endpoint defaults (lowest precedence).
    #[arg(long, global = true, env = "PLANSHIFT_CONFIG")]
    config: Option<PathBuf>,

    /// Directory that relative output paths are placed under.
    #[arg(long, global = true, env = "PLANSHIFT_RUN_DIR")]
    run_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one plan trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Height-guessing runs over a range of prompted starting values.
    RunExp1(Exp1Args),
    /// Gaussian-context runs (Gen I) or their self-conditioned follow-up (Gen II).
    RunExp2(Exp2Args),
    /// Fit LASSO probes on an embedding dump and write R² curves.
    Probe(ProbeArgs),
    /// Bias table and trajectories from Gen I/Gen II records, or position summaries from Exp 1.
    Analyze(AnalyzeArgs),
    /// Render a CSV produced by another subcommand as SVG.
    Plot(PlotArgs),
    /// Serve the mock model on a loopback completions endpoint.
    MockServer(MockServerArgs),
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    #[arg(long)]
    prior_mean: f64,
    #[arg(long, default_value_t = 0.05)]
    prior_precision: f64,
    /// Target estimate the context supports.
    #[arg(long)]
    target: f64,
    #[arg(long, default_value_t = 0.5)]
    base_gain: f64,
    /// Per-self-token growth of the evidence gain.
    #[arg(long, default_value_t = 0.2)]
    gain_growth: f64,
    #[arg(long, default_value_t = 64)]
    steps: usize,
    #[arg(long, default_value_t = 10.0)]
    emission_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also render the trajectory as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize, Default)]
struct EndpointArgs {
    /// Base URL including the version prefix, e.g. http://127.0.0.1:8000/v1.
    #[arg(long, env = "PLANSHIFT_BASE_URL")]
    base_url: Option<String>,
    #[arg(long, env = "PLANSHIFT_MODEL")]
    model: Option<String>,
    /// completions or chat.
    #[arg(long, env = "PLANSHIFT_API_STYLE")]
    api_style: Option<String>,
    #[arg(long, env = "PLANSHIFT_TEMPERATURE")]
    temperature: Option<f64>,
    #[arg(long, env = "PLANSHIFT_MAX_TOKENS")]
    max_tokens: Option<u32>,
    #[arg(long, env = "PLANSHIFT_TIMEOUT_SECS")]
    timeout_secs: Option<u64>,
    #[arg(long, env = "PLANSHIFT_RETRIES")]
    retries: Option<u32>,
    #[arg(long, env = "PLANSHIFT_CONCURRENCY")]
    concurrency: Option<usize>,
    /// Answer with the built-in mock model instead of calling an endpoint.
    #[arg(long)]
    mock: bool,
}

impl EndpointArgs {
    fn resolve(&mut self, file: &ConfigFile) -> Result<()> {
        config::fill(&mut self.base_url, file, "base_url")?;
        config::fill(&mut self.model, file, "model")?;
        config::fill(&mut self.api_style, file, "api_style")?;
        config::fill(&mut self.temperature, file, "temperature")?;
        config::fill(&mut self.max_tokens, file, "max_tokens")?;
        config::fill(&mut self.timeout_secs, file, "timeout_secs")?;
        config::fill(&mut self.retries, file, "retries")?;
        config::fill(&mut self.concurrency, file, "concurrency")?;
        Ok(())
    }

    fn endpoint(&self) -> Result<EndpointConfig> {
        let d = EndpointConfig::default();
        let api_style = match &self.api_style {
            Some(s) => s.parse::<ApiStyle>().map_err(|e| UsageError(e.to_string()))?,
            None => d.api_style,
        };
        Ok(EndpointConfig {
            base_url: self.base_url.clone().unwrap_or(d.base_url),
            model_name: self.model_name(),
            temperature: self.temperature.unwrap_or(d.temperature),
            max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
            timeout: self.timeout_secs.map(Duration::from_secs).unwrap_or(d.timeout),
            retry_limit: self.retries.unwrap_or(d.retry_limit),
            api_style,
            backoff: d.backoff,
        })
    }

    fn model_name(&self) -> String {
        match &self.model {
            Some(m) => m.clone(),
            None if self.mock => "mock".into(),
            None => EndpointConfig::default().model_name,
        }
    }

    fn backend(&self) -> Result<Box<dyn CompletionBackend>> {
        let config = self.endpoint()?;
        if self.mock {
            Ok(Box::new(MockModel {
                max_tokens: config.max_tokens,
                ..MockModel::default()
            }))
        } else {
            Ok(Box::new(HttpBackend::new(config)))
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct Exp1Args {
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, default_value_t = DEFAULT_START_MIN)]
    start_min: i64,
    #[arg(long, default_value_t = DEFAULT_START_MAX)]
    start_max: i64,
    /// Values per trial, counting the prompted start.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct Exp2Args {
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, value_parser = parse_stage)]
    #[serde(serialize_with = "display")]
    stage: Stage,
    /// Gen I records to continue from (required for gen2).
    #[arg(long)]
    gen1: Option<PathBuf>,
    /// Comma-separated condition means.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = DEFAULT_MUS)]
    mus: Vec<i64>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_CONTEXT_COUNT)]
    context_count: usize,
    #[arg(long, default_value_t = DEFAULT_GENERATE_COUNT)]
    generate_count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum ProbeMode {
    Offset,
    Position,
}

#[derive(Args, Debug, Serialize)]
struct ProbeArgs {
    #[arg(long)]
    dump: PathBuf,
    /// LASSO penalty.
    #[arg(long, default_value_t = DEFAULT_PENALTY)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = ProbeMode::Offset)]
    mode: ProbeMode,
    /// Layers such as `15-25` or `3,7,10-12`; every dumped layer when omitted.
    #[arg(long, value_parser = parse_layers)]
    layers: Option<Layers>,
    /// Source tokens used by offset probes: all, number, comma or space.
    #[arg(long, default_value = "all", value_parser = parse_role)]
    #[serde(serialize_with = "debug_lower")]
    role: RoleFilter,
    /// Report out-of-fold R² over this many contiguous folds.
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Token distance predicted by position probes.
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long, default_value_t = MAX_OFFSET)]
    max_offset: usize,
    /// Worker threads; all cores when omitted. Results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also render the curves as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[arg(long, requires = "gen2")]
    gen1: Option<PathBuf>,
    #[arg(long, requires = "gen1")]
    gen2: Option<PathBuf>,
    #[arg(long, required_unless_present = "gen1")]
    exp1: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PlotArgs {
    /// offset-curve, position-curve, bias-trajectory or simulator-trajectory.
    #[arg(long, value_parser = parse_plot_kind)]
    #[serde(serialize_with = "debug_lower")]
    kind: PlotKind,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    x_label: Option<String>,
    #[arg(long)]
    y_label: Option<String>,
}

#[derive(Args, Debug)]
struct MockServerArgs {
    #[arg(long, default_value = "127.0.0.1:8000")]
    bind: String,
    /// Answer the first N requests with 503 to exercise client retries.
    #[arg(long, default_value_t = 0)]
    fail_first: usize,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn debug_lower<T: std::fmt::Debug, S: serde::Serializer>(
    v: &T,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:?}").to_lowercase())
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    s.parse().map_err(|e: planshift::Error| e.to_string())
}

fn parse_role(s: &str) -> std::result::Result<RoleFilter, String> {
    s.parse().map_err(|e: planshift::Error| e.to_string())
}

fn parse_plot_kind(s: &str) -> std::result::Result<PlotKind, String> {
    s.parse().map_err(|e: planshift::Error| e.to_string())
}

#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct Layers(Vec<usize>);

/// `15-25`, `3,7` and mixtures; ranges are inclusive, duplicates collapse.
fn parse_layers(s: &str) -> std::result::Result<Layers, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("bad layer '{x}'"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty layer range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no layers given".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(Layers(out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<planshift::Error>() {
            return match e.kind() {
                ErrorKind::InvalidParameter => EXIT_USAGE,
                ErrorKind::InvalidData => EXIT_DATA,
                ErrorKind::Transport => EXIT_TRANSPORT,
                ErrorKind::Format => EXIT_FORMAT,
                ErrorKind::Io => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}

struct RunContext {
    config: ConfigFile,
    run_dir: Option<PathBuf>,
}

impl RunContext {
    /// Places relative outputs under the run directory and creates parents.
    fn output(&self, path: &Path) -> Result<PathBuf> {
        let path = match &self.run_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let ctx = RunContext {
        config,
        run_dir: cli.run_dir,
    };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::RunExp1(a) => run_exp1(&ctx, a),
        Command::RunExp2(a) => run_exp2(&ctx, a),
        Command::Probe(a) => probe(&ctx, a),
        Command::Analyze(a) => analyze(&ctx, a),
        Command::Plot(a) => plot(&ctx, a),
        Command::MockServer(a) => mock_server(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn simulate(ctx: &RunContext, a: SimulateArgs) -> Result<()> {
    let rec = Recorder::start("simulate", &a)?;
    let prior = DomainPrior::new(a.prior_mean, a.prior_precision)?;
    let ev = EvidenceModel::new(a.target, a.base_gain, a.gain_growth)?;
    let traj = simulate_trajectory(&prior, &ev, a.steps, a.emission_sd * a.emission_sd, a.seed)?;
    let out = ctx.output(&a.out)?;
    traj.save_csv(&out)?;
    let mut outputs = vec![out.clone()];
    if let Some(svg) = &a.svg {
        let svg = ctx.output(svg)?;
        let text = trajectory_figure(&traj, &PlotSpec::new(PlotKind::SimulatorTrajectory)).render()?;
        fs::write(&svg, text)?;
        outputs.push(svg);
    }
    let last = traj.len() - 1;
    eprintln!(
        "simulated {} steps: bias {:.4} -> {:.4}, planning strength {:.4} -> {:.4}",
        traj.len(),
        traj.bias[0],
        traj.bias[last],
        traj.planning_strength[0],
        traj.planning_strength[last]
    );
    finish(rec, &outputs, &sibling_manifest(&out))
}

fn finish(rec: Recorder, outputs: &[PathBuf], manifest: &Path) -> Result<()> {
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let m = rec.finish(&refs, manifest)?;
    eprintln!(
        "wrote {} (content hash {})",
        manifest.display(),
        &m.content_hash[..16]
    );
    Ok(())
}

fn run_exp1(ctx: &RunContext, mut a: Exp1Args) -> Result<()> {
    a.endpoint.resolve(&ctx.config)?;
    let mut rec = Recorder::start("run-exp1", &a)?;
    if a.start_max == DEFAULT_START_MAX {
        rec.note(format!(
            "start range ends at {DEFAULT_START_MAX}: the protocol's 151 to 220 cm range holds 70 values \
             but reports 69 trials; pass --start-max 220 for all 70"
        ));
    }
    let backend = a.endpoint.backend()?;
    let harness = Harness::new(backend.as_ref(), a.endpoint.model_name())
        .with_concurrency(a.endpoint.concurrency.unwrap_or(1));
    let records = harness.run_exp1(a.start_min, a.start_max, a.count)?;
    let out = ctx.output(&a.out)?;
    save_records(&out, &records)?;
    eprintln!("{} Exp 1 records", records.len());
    finish(rec, std::slice::from_ref(&out), &sibling_manifest(&out))
}

fn run_exp2(ctx: &RunContext, mut a: Exp2Args) -> Result<()> {
    a.endpoint.resolve(&ctx.config)?;
    let mut rec = Recorder::start("run-exp2", &a)?;
    let gen1 = match (&a.gen1, a.stage) {
        (Some(p), _) => {
            rec.input(p);
            Some(load_records(p)?)
        }
        (None, Stage::Gen2) => bail!(UsageError("--stage gen2 needs --gen1 records".into())),
        (None, Stage::Gen1) => None,
    };
    let plan = Exp2Plan {
        mus: a.mus.clone(),
        replicates: a.replicates,
        stage: a.stage,
        seed: a.seed,
        sigma: a.sigma,
        context_count: a.context_count,
        generate_count: a.generate_count,
    };
    let backend = a.endpoint.backend()?;
    let harness = Harness::new(backend.as_ref(), a.endpoint.model_name())
        .with_concurrency(a.endpoint.concurrency.unwrap_or(1));
    let records = harness.run_exp2(&plan, gen1.as_deref())?;
    let out = ctx.output(&a.out)?;
    save_records(&out, &records)?;
    eprintln!("{} {} records", records.len(), a.stage);
    finish(rec, std::slice::from_ref(&out), &sibling_manifest(&out))
}

fn probe(ctx: &RunContext, a: ProbeArgs) -> Result<()> {
    let mut rec = Recorder::start("probe", &a)?;
    rec.input(&a.dump);
    let wanted = a.layers.as_ref().map(|l| l.0.as_slice());
    let dump = read_dump_layers(&a.dump, wanted)?;
    if !dump.excluded_trials.is_empty() {
        eprintln!(
            "skipping {} trials flagged as misaligned",
            dump.excluded_trials.len()
        );
    }
    let layers = wanted.map_or_else(|| dump.layer_indices.clone(), <[usize]>::to_vec);
    let config = ProbeConfig {
        lasso: LassoParams::new(a.alpha),
        role_filter: a.role,
        cv_folds: a.cv_folds,
        horizon: a.horizon,
        max_offset: a.max_offset,
        threads: a.threads,
    };
    let mut curves = Vec::with_capacity(layers.len());
    for &layer in &layers {
        let curve = match a.mode {
            ProbeMode::Offset => fit_offset_curve(&dump, layer, &config)?,
            ProbeMode::Position => fit_position_curve(&dump, layer, &config)?,
        };
        if let Some(best) = curve
            .points
            .iter()
            .max_by(|p, q| p.r_squared.total_cmp(&q.r_squared))
        {
            eprintln!("layer {layer}: peak R² {:.3} at {}", best.r_squared, best.x);
        }
        curves.push(curve);
    }
    let out = ctx.output(&a.out)?;
    let mut w = create(&out)?;
    export_curves(&curves, &mut w)?;
    w.flush()?;
    let mut outputs = vec![out.clone()];
    if let Some(svg) = &a.svg {
        let svg = ctx.output(svg)?;
        let kind = match a.mode {
            ProbeMode::Offset => PlotKind::OffsetCurve,
            ProbeMode::Position => PlotKind::PositionCurve,
        };
        fs::write(&svg, curves_figure(&curves, &PlotSpec::new(kind)).render()?)?;
        outputs.push(svg);
    }
    finish(rec, &outputs, &sibling_manifest(&out))
}

fn analyze(ctx: &RunContext, a: AnalyzeArgs) -> Result<()> {
    let mut rec = Recorder::start("analyze", &a)?;
    let dir = ctx.output(&a.out_dir.join("manifest.json"))?;
    let dir = dir.parent().expect("joined path has a parent").to_path_buf();
    let mut outputs = Vec::new();

    if let (Some(p1), Some(p2)) = (&a.gen1, &a.gen2) {
        rec.input(p1);
        rec.input(p2);
        let gen1 = load_records(p1)?;
        let gen2 = load_records(p2)?;
        let table = build_bias_table(&gen1, &gen2)?;
        let text_path = dir.join("bias_table.txt");
        fs::write(&text_path, table.render_text())?;
        let csv_path = dir.join("bias_table.csv");
        let mut w = create(&csv_path)?;
        table.write_csv(&mut w)?;
        w.flush()?;
        let traj_path = dir.join("bias_trajectories.csv");
        let mut w = create(&traj_path)?;
        write_trajectory_csv(&bias_trajectories(&gen1, &gen2)?, &mut w)?;
        w.flush()?;
        print!("{}", table.render_text());
        outputs.extend([text_path, csv_path, traj_path]);
    }
    if let Some(p) = &a.exp1 {
        rec.input(p);
        let summaries = record_position_summaries(&load_records(p)?)?;
        let path = dir.join("exp1_positions.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        for s in &summaries {
            w.serialize(s)?;
        }
        w.flush()?;
        outputs.push(path);
    }
    finish(rec, &outputs, &dir.join("manifest.json"))
}

fn plot(ctx: &RunContext, a: PlotArgs) -> Result<()> {
    let mut rec = Recorder::start("plot", &a)?;
    rec.input(&a.input);
    let spec = PlotSpec {
        kind: a.kind,
        title: a.title.clone(),
        x_label: a.x_label.clone(),
        y_label: a.y_label.clone(),
    };
    let input = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let svg = render_plot(&spec, input)?;
    let out = ctx.output(&a.out)?;
    fs::write(&out, svg)?;
    finish(rec, std::slice::from_ref(&out), &sibling_manifest(&out))
}

fn mock_server(a: MockServerArgs) -> Result<()> {
    let server = MockServer::start_with_failures(&a.bind, MockModel::default(), a.fail_first)
        .with_context(|| format!("binding {}", a.bind))?;
    println!("{}", server.base_url());
    std::io::stdout().flush()?;
    server.join();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_lists() {
        assert_eq!(parse_layers("15-25").unwrap().0, (15..=25).collect::<Vec<_>>());
        assert_eq!(parse_layers("7, 3,4-5,3").unwrap().0, vec![3, 4, 5, 7]);
        assert!(parse_layers("5-3").is_err());
        assert!(parse_layers("").is_err());
        assert!(parse_layers("a").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let code = |e: planshift::Error| exit_code(&anyhow::Error::new(e).context("outer"));
        assert_eq!(code(planshift::Error::Format("x".into())), EXIT_FORMAT);
        assert_eq!(code(planshift::Error::InvalidData("x".into())), EXIT_DATA);
        assert_eq!(
            code(planshift::Error::Transport {
                context: "c".into(),
                message: "m".into()
            }),
            EXIT_TRANSPORT
        );
        assert_eq!(exit_code(&UsageError("u".into()).into()), EXIT_USAGE);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_OTHER);
    }
}
