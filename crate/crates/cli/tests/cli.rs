use std::path::Path;
use std::process::{Command, Output};

use planshift::genharness::{load_records, MockModel, MockServer};
use planshift::probe::synthetic::{planted_offset_dump, SyntheticSpec};
use planshift::probe::{read_curves, save_dump};
use serde_json::Value;

const ENV_VARS: [&str; 11] = [
    "PLANSHIFT_CONFIG",
    "PLANSHIFT_RUN_DIR",
    "PLANSHIFT_BASE_URL",
    "PLANSHIFT_MODEL",
    "PLANSHIFT_API_STYLE",
    "PLANSHIFT_TEMPERATURE",
    "PLANSHIFT_MAX_TOKENS",
    "PLANSHIFT_TIMEOUT_SECS",
    "PLANSHIFT_RETRIES",
    "PLANSHIFT_CONCURRENCY",
    "PLANSHIFT_API_KEY",
];

/// The binary with a clean `PLANSHIFT_*` environment.
fn planshift() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_planshift"));
    for v in ENV_VARS {
        cmd.env_remove(v);
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> Output {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(path: &Path) -> Value {
    let mut name = path.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(path.with_file_name(name)).unwrap()).unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = run(&mut planshift());
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr) + String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(planshift().args(["simulate", "--bogus"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
}

#[test]
fn simulate_is_reproducible_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let svg = dir.path().join("traj.svg");
    let args = |c: &mut Command, seed: &str| {
        c.args([
            "simulate",
            "--prior-mean",
            "-30",
            "--target",
            "0",
            "--steps",
            "64",
            "--seed",
            seed,
        ])
        .arg("--out")
        .arg(&csv)
        .arg("--svg")
        .arg(&svg);
    };
    let mut cmd = planshift();
    args(&mut cmd, "7");
    ok(&mut cmd);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("step,posterior_mean,posterior_precision,emission,planning_strength,bias\n"));
    assert_eq!(text.lines().count(), 65);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));
    let first = manifest(&csv);
    assert_eq!(first["subcommand"], "simulate");
    assert_eq!(first["flags"]["prior_mean"], -30.0);
    assert_eq!(first["flags"]["seed"], 7);
    assert_eq!(first["outputs"].as_array().unwrap().len(), 2);

    let mut again = planshift();
    args(&mut again, "7");
    ok(&mut again);
    let second = manifest(&csv);
    assert_eq!(first["content_hash"], second["content_hash"]);
    assert_eq!(first["outputs"], second["outputs"]);
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), text);

    let mut other = planshift();
    args(&mut other, "8");
    ok(&mut other);
    assert_ne!(manifest(&csv)["content_hash"], first["content_hash"]);
}

#[test]
fn bad_parameter_value_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(planshift()
        .args([
            "simulate",
            "--prior-mean",
            "0",
            "--target",
            "1",
            "--prior-precision",
            "-1",
            "--out",
        ])
        .arg(dir.path().join("t.csv")));
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn probe_writes_one_curve_per_layer() {
    let dir = tempfile::tempdir().unwrap();
    let dump_path = dir.path().join("d.plnd");
    let spec = SyntheticSpec {
        trials: 6,
        samples: 12,
        hidden_dim: 12,
        layers: vec![14, 15, 16, 17, 26],
        ..Default::default()
    };
    save_dump(&dump_path, &planted_offset_dump(&spec, 2).unwrap()).unwrap();

    let out = dir.path().join("runs/curves.csv");
    ok(planshift()
        .args(["probe", "--dump"])
        .arg(&dump_path)
        .args([
            "--alpha",
            "0.3",
            "--mode",
            "offset",
            "--layers",
            "15-17",
            "--max-offset",
            "12",
            "--out",
        ])
        .arg(&out));
    let curves = read_curves(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(
        curves.iter().map(|c| c.layer).collect::<Vec<_>>(),
        vec![15, 16, 17]
    );
    assert_eq!(curves[0].points.len(), 13);
    assert!(curves[0].r_squared_at(3).unwrap() > 0.9);
    let m = manifest(&out);
    assert_eq!(m["flags"]["layers"], serde_json::json!([15, 16, 17]));
    assert_eq!(m["inputs"][0]["path"], dump_path.display().to_string());

    let pos = dir.path().join("pos.csv");
    ok(planshift()
        .args(["probe", "--mode", "position", "--layers", "15", "--dump"])
        .arg(&dump_path)
        .arg("--out")
        .arg(&pos));
    assert!(read_curves(std::fs::File::open(&pos).unwrap()).unwrap()[0]
        .points
        .iter()
        .all(|p| p.x % 3 == 1));

    // a layer the dump lacks, then a damaged file
    let missing = run(planshift()
        .args(["probe", "--layers", "3", "--dump"])
        .arg(&dump_path)
        .arg("--out")
        .arg(&out));
    assert_eq!(missing.status.code(), Some(2));
    let bytes = std::fs::read(&dump_path).unwrap();
    std::fs::write(&dump_path, &bytes[..bytes.len() / 2]).unwrap();
    let damaged = run(planshift()
        .args(["probe", "--dump"])
        .arg(&dump_path)
        .arg("--out")
        .arg(&out));
    assert_eq!(damaged.status.code(), Some(5));
}

#[test]
fn experiments_analyze_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let exp2 = |stage: &str| {
        let mut c = planshift();
        c.arg("--run-dir")
            .arg(&run_dir)
            .args([
                "run-exp2",
                "--mock",
                "--replicates",
                "4",
                "--mus",
                "-30,0,30",
                "--stage",
                stage,
            ])
            .args(["--out", &format!("{stage}.jsonl")]);
        c
    };
    ok(&mut exp2("gen1"));
    let gen1 = run_dir.join("gen1.jsonl");
    assert_eq!(load_records(&gen1).unwrap().len(), 12);

    // gen2 without its Gen I source is refused up front
    assert_eq!(run(&mut exp2("gen2")).status.code(), Some(2));
    ok(exp2("gen2").arg("--gen1").arg(&gen1));
    let gen2 = run_dir.join("gen2.jsonl");
    assert_eq!(manifest(&gen2)["inputs"][0]["path"], gen1.display().to_string());

    let table_dir = dir.path().join("tables");
    let out = ok(planshift()
        .args(["analyze", "--gen1"])
        .arg(&gen1)
        .arg("--gen2")
        .arg(&gen2)
        .arg("--out-dir")
        .arg(&table_dir));
    let text = std::fs::read_to_string(table_dir.join("bias_table.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), text);
    assert!(table_dir.join("bias_table.csv").exists());
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(table_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);

    let svg = dir.path().join("bias.svg");
    ok(planshift()
        .args(["plot", "--kind", "bias-trajectory", "--input"])
        .arg(table_dir.join("bias_trajectories.csv"))
        .arg("--out")
        .arg(&svg));
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(svg_text.matches(r#"class="panel""#).count(), 3);

    // the wrong kind for this CSV names the missing columns
    let bad = run(planshift()
        .args(["plot", "--kind", "offset-curve", "--input"])
        .arg(table_dir.join("bias_trajectories.csv"))
        .arg("--out")
        .arg(&svg));
    assert_eq!(bad.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("layer"));

    // Gen I alone cannot fill a table
    let lonely = run(planshift()
        .args(["analyze", "--gen1"])
        .arg(&gen1)
        .arg("--gen2")
        .arg(&gen1)
        .arg("--out-dir")
        .arg(&table_dir));
    assert_eq!(
        lonely.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&lonely.stderr)
    );
}

#[test]
fn exp1_positions() {
    let dir = tempfile::tempdir().unwrap();
    let recs = dir.path().join("exp1.jsonl");
    ok(planshift()
        .args([
            "run-exp1",
            "--mock",
            "--start-min",
            "151",
            "--start-max",
            "160",
            "--concurrency",
            "3",
            "--out",
        ])
        .arg(&recs));
    assert_eq!(load_records(&recs).unwrap().len(), 10);
    assert!(manifest(&recs).get("notes").is_none());
    ok(planshift()
        .args(["analyze", "--exp1"])
        .arg(&recs)
        .arg("--out-dir")
        .arg(dir.path()));
    let text = std::fs::read_to_string(dir.path().join("exp1_positions.csv")).unwrap();
    assert!(text.starts_with("position,mean,std_error,ci95_low,ci95_high,n,ragged\n"));
    assert_eq!(text.lines().count(), 61);
}

#[test]
fn endpoint_settings_follow_precedence() {
    let server = MockServer::start("127.0.0.1:0", MockModel::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("planshift.conf");
    std::fs::write(
        &config,
        format!(
            "# test endpoint\nbase_url = {}\nmodel = from-file\nretries = 1\n",
            server.base_url()
        ),
    )
    .unwrap();
    let out = dir.path().join("r.jsonl");
    let model_used = |env: Option<&str>, flag: &[&str]| {
        let mut cmd = planshift();
        if let Some(m) = env {
            cmd.env("PLANSHIFT_MODEL", m);
        }
        ok(cmd
            .arg("--config")
            .arg(&config)
            .args(["run-exp1", "--start-min", "151", "--start-max", "151", "--out"])
            .arg(&out)
            .args(flag)
            .env("PLANSHIFT_API_KEY", "sk-never-logged"));
        load_records(&out).unwrap()[0].model.clone()
    };
    assert_eq!(model_used(None, &[]), "from-file");
    assert_eq!(model_used(Some("from-env"), &[]), "from-env");
    assert_eq!(
        model_used(Some("from-env"), &["--model", "from-flag"]),
        "from-flag"
    );
    let m = std::fs::read_to_string(dir.path().join("r.jsonl.manifest.json")).unwrap();
    assert!(!m.contains("sk-never-logged"));
    assert!(m.contains(&server.base_url()));

    std::fs::write(&config, "api_key = nope\n").unwrap();
    let bad = run(planshift()
        .arg("--config")
        .arg(&config)
        .args(["run-exp1", "--mock", "--out"])
        .arg(&out));
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown key 'api_key'"));
}

#[test]
fn unreachable_endpoint_is_a_transport_failure() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run(planshift()
        .args([
            "run-exp1",
            "--start-min",
            "151",
            "--start-max",
            "151",
            "--retries",
            "0",
            "--base-url",
        ])
        .arg(format!("http://{addr}/v1"))
        .arg("--out")
        .arg(dir.path().join("r.jsonl")));
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!dir.path().join("r.jsonl").exists());
}
