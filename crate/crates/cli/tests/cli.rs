use std::path::Path;
use std::process::Command;

use hegnn::engine::{Mode, PolyPreset, Variant};
use hegnn::plain::TrainConfig;
use hegnn::Error;
use hegnn_cli::config::{BackendKind, ExperimentConfig, ParamPreset, SweepGrid};
use hegnn_cli::report::{RunReport, CSV_COLUMNS};
use hegnn_cli::runner::{cmd_ablation, cmd_inspect, cmd_keygen, cmd_run, cmd_sweep};
use hegnn_cli::CliError;
use proptest::prelude::*;
use tempfile::TempDir;

fn demo(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_graph("builtin:demo16");
    cfg.train = Some(TrainConfig::default());
    cfg.pruning_ratio = Some(0.25);
    cfg.poly_preset = Some(PolyPreset::Pset2);
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn config_field(e: CliError) -> String {
    match e {
        CliError::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn missing_weights_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg = demo(dir.path());
    cfg.train = None;
    assert_eq!(config_field(cmd_run(&cfg).unwrap_err()), "weights_path");
}

#[test]
fn binary_rejects_missing_weights_and_accepts_train_flag() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(
        &path,
        r#"{"graph_path": "builtin:demo16", "pruning_ratio": 0.25, "output_dir": "out"}"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_hegnn");
    let out = Command::new(bin).arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weights_path"));

    let out = Command::new(bin)
        .args(["run", "--train"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("out/results.csv").exists());
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg = demo(dir.path());
    cfg.sweep = Some(SweepGrid::default());
    assert_eq!(config_field(cmd_sweep(&cfg, 1).unwrap_err()), "sweep");
}

#[test]
fn depth_budget_fails_before_any_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let mut cfg = demo(&out);
    cfg.backend = BackendKind::Ckks;
    cfg.he_params = Some(ParamPreset::Toy.params(4));
    match cmd_run(&cfg).unwrap_err() {
        CliError::Core(Error::DepthBudget {
            needed, available, ..
        }) => {
            assert!(needed > available);
            assert_eq!(available, 4);
        }
        other => panic!("expected a depth budget error, got {other}"),
    }
    assert!(!out.exists());
}

#[test]
fn sim_runs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = demo(dir.path());
    let a = cmd_run(&cfg).unwrap();
    let b = cmd_run(&cfg).unwrap();
    assert_eq!(a.canonical().to_json(), b.canonical().to_json());
    assert_eq!(a.profile.mult_ct, b.profile.mult_ct);
    assert_eq!(a.logits, b.logits);
}

#[test]
fn ff_on_demo_matches_the_soft_reference() {
    let dir = TempDir::new().unwrap();
    let r = cmd_run(&demo(dir.path())).unwrap();
    assert_eq!(r.variant, Variant::Ff);
    assert!(r.profile.mult_ct > 0);
    assert_eq!(r.metrics.argmax_agreement, 1.0);
    assert_eq!(r.metrics.max_abs_error, 0.0);
    assert_eq!(r.depth.estimated, r.depth.measured);

    let saved = RunReport::load(&dir.path().join(format!("{}.json", r.experiment_id))).unwrap();
    assert_eq!(saved, r);
}

#[test]
fn bfg_under_ckks_agrees_with_plaintext() {
    let dir = TempDir::new().unwrap();
    let mut cfg = demo(dir.path());
    cfg.variant = Variant::Bfg;
    cfg.backend = BackendKind::Ckks;
    cfg.preset = Some(ParamPreset::Toy);
    let r = cmd_run(&cfg).unwrap();
    assert!(
        r.metrics.argmax_agreement >= 0.9,
        "{}",
        r.metrics.argmax_agreement
    );

    let report = dir.path().join(format!("{}.json", r.experiment_id));
    let logits = cmd_inspect(&report, None).unwrap();
    assert_eq!(logits, r.logits);
}

#[test]
fn keygen_keys_decrypt_the_run() {
    let dir = TempDir::new().unwrap();
    let keys = dir.path().join("keys.bin");
    let params = ParamPreset::Toy.params(17);
    cmd_keygen(params.clone(), 5, &keys).unwrap();

    let mut cfg = demo(dir.path());
    cfg.backend = BackendKind::Ckks;
    cfg.he_params = Some(params);
    cfg.keys_path = Some(keys.clone());
    cfg.seed = 9;
    let r = cmd_run(&cfg).unwrap();
    let report = dir.path().join(format!("{}.json", r.experiment_id));
    assert_eq!(cmd_inspect(&report, Some(&keys)).unwrap(), r.logits);

    cfg.he_params = Some(ParamPreset::Toy.params(18));
    assert_eq!(config_field(cmd_run(&cfg).unwrap_err()), "keys_path");
}

#[test]
fn ablation_orders_costs_on_demo() {
    let dir = TempDir::new().unwrap();
    let mut cfg = demo(dir.path());
    cfg.mode = Mode::Compaction;
    cfg.pruning_ratio = Some(0.3);
    cfg.experiment_id = Some("abl".into());
    let reports = cmd_ablation(&cfg).unwrap();
    let by = |v: Variant| reports.iter().find(|r| r.variant == v).unwrap();
    let (bfg, po, aao, ff) = (
        by(Variant::Bfg),
        by(Variant::Po),
        by(Variant::Aao),
        by(Variant::Ff),
    );
    assert!(4 * ff.pruned_nodes >= ff.graph.n);
    assert!(po.profile.mult_ct < bfg.profile.mult_ct);
    assert!(ff.activation.mult_ct < aao.activation.mult_ct);
    assert!(reports.iter().all(|r| r.seed == cfg.seed));
    let ids: Vec<&str> = reports.iter().map(|r| r.experiment_id.as_str()).collect();
    assert_eq!(ids, ["abl-bfg", "abl-po", "abl-aao", "abl-ff"]);
}

#[test]
fn ratio_sweep_costs_fall() {
    let dir = TempDir::new().unwrap();
    let mut cfg = demo(dir.path());
    cfg.mode = Mode::Compaction;
    cfg.pruning_ratio = None;
    cfg.sweep = Some(SweepGrid {
        ratios: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        presets: vec![],
    });
    let reports = cmd_sweep(&cfg, 4).unwrap();
    assert_eq!(reports.len(), 5);
    for pair in reports.windows(2) {
        assert!(pair[0].pruning_ratio < pair[1].pruning_ratio);
        assert!(pair[1].profile.mult_ct <= pair[0].profile.mult_ct);
    }
    let rows = csv::Reader::from_path(dir.path().join("results.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 5);
}

#[test]
fn preset_sweep_orders_activation_cost() {
    let dir = TempDir::new().unwrap();
    let mut cfg = demo(dir.path());
    cfg.sweep = Some(SweepGrid {
        ratios: vec![],
        presets: PolyPreset::ALL.to_vec(),
    });
    let reports = cmd_sweep(&cfg, 1).unwrap();
    let cost: Vec<u64> = reports.iter().map(|r| r.activation.mult_ct).collect();
    assert!(cost[0] > cost[1] && cost[1] > cost[2], "{cost:?}");
}

#[test]
fn csv_header_matches_golden() {
    let golden = include_str!("golden/results_header.csv");
    assert_eq!(golden.trim_end(), CSV_COLUMNS.join(","));

    let dir = TempDir::new().unwrap();
    let r = cmd_run(&demo(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), golden.lines().next());
    let row = lines.next().unwrap();
    assert!(row.starts_with(&r.experiment_id));
    assert_eq!(lines.next(), None);

    cmd_run(&demo(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("experiment_id"))
            .count(),
        1
    );
}

#[test]
fn toml_config_resolves_relative_paths() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(
        &path,
        r#"
experiment_id = "toml-run"
graph_path = "builtin:demo16"
thresholds = [5.0, 4.0, 1.5]
poly_preset = "pset3"
variant = "aao"
output_dir = "results"
depth_trace = true

[train]
epochs = 50
activation = "relu"
"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.variant, Variant::Aao);
    let r = cmd_run(&cfg).unwrap();
    assert_eq!(r.thresholds, [5.0, 4.0, 1.5]);
    let out = dir.path().join("results");
    assert!(out.join("toml-run.json").exists());
    assert!(out.join("toml-run.logits.bin").exists());
    let trace = std::fs::read_to_string(out.join("toml-run.depth.csv")).unwrap();
    assert!(trace.starts_with("stage,depth_added,depth_cumulative"));
    let last: usize = trace
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(last, r.depth.estimated);
}

#[test]
fn unknown_fields_name_their_path() {
    let e = ExperimentConfig::from_json_str(r#"{"graph_path": "g", "train": {"epoch": 3}}"#)
        .unwrap_err();
    assert!(e.to_string().contains("train"), "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bad_sweep_ratio_is_pinned_to_its_index(
        good in prop::collection::vec(0.0f64..0.99, 0..4),
        bad in prop_oneof![1.0f64..10.0, -10.0f64..-0.01],
    ) {
        let mut cfg = ExperimentConfig::for_graph("builtin:demo16");
        cfg.train = Some(TrainConfig::default());
        let mut ratios = good.clone();
        ratios.push(bad);
        cfg.sweep = Some(SweepGrid { ratios, presets: vec![] });
        let field = config_field(cfg.validate().unwrap_err());
        prop_assert_eq!(field, format!("sweep.ratios[{}]", good.len()));
    }
}
