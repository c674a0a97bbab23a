//! Experiment verbs: run, ablation, sweep, train, keygen, inspect.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hegnn::ckks::{CkksBackend, KeySet};
use hegnn::engine::{
    plan_circuit, run_inference, EngineConfig, MaskSource, Mode, NodeSlot, PlanInput,
    PolyActivationSet, PolyPreset, Variant,
};
use hegnn::graph::{encrypt_graph, load_graph, Layout, ModelWeights, PlainGraph};
use hegnn::he::container::{Reader, Writer};
use hegnn::he::sim::SimBackend;
use hegnn::he::{estimate_depth, DepthEstimate, HeBackend, HeParams};
use hegnn::importance::{oracle_masks, PlainMasks, Thresholds};
use hegnn::plain::{
    accuracy, argmax_agreement, forward_compaction_plain, forward_design_plain, forward_plain_with,
    max_abs_diff, train_toy, MaskMode, TrainReport,
};
use rayon::prelude::*;

use crate::config::{BackendKind, ExperimentConfig, ParamPreset};
use crate::error::{CliError, Result};
use crate::fixtures;
use crate::report::{
    self, DepthSummary, GraphSummary, Metrics, ParamsSummary, RunReport, Versions,
};

const LOGITS_MAGIC: &[u8; 4] = b"HGLG";

/// Inference only ever shifts by one slot, so one rotation key suffices.
pub fn engine_rotations() -> BTreeSet<i64> {
    BTreeSet::from([1])
}

/// Graph and weights shared by every cell of an experiment.
pub struct Prepared {
    pub graph: PlainGraph,
    pub source: String,
    pub weights: ModelWeights,
    pub train_report: Option<TrainReport>,
}

/// Everything a finished cell leaves behind.
pub struct CellOutput {
    pub report: RunReport,
    pub logits_bytes: Vec<u8>,
    pub depth_trace: Option<String>,
}

pub fn load_graph_source(cfg: &ExperimentConfig) -> Result<(PlainGraph, String)> {
    if let Some(name) = cfg.graph_path.strip_prefix("builtin:") {
        let g = fixtures::builtin(name).ok_or_else(|| {
            CliError::config(
                "graph_path",
                format!(
                    "unknown builtin graph `{name}` (have {})",
                    fixtures::NAMES.join(", ")
                ),
            )
        })??;
        return Ok((g, name.to_string()));
    }
    let path = cfg.resolve(Path::new(&cfg.graph_path));
    let g = load_graph(&path)?;
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| cfg.graph_path.clone());
    Ok((g, source))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (graph, source) = load_graph_source(cfg)?;
    let (weights, train_report) = match (&cfg.weights_path, &cfg.train) {
        (Some(p), _) => (ModelWeights::load(cfg.resolve(p))?, None),
        (None, Some(t)) => {
            let (w, r) = train_toy(&graph, t)?;
            (w, Some(r))
        }
        (None, None) => {
            return Err(CliError::config(
                "weights_path",
                "missing weights path and no train section or --train flag",
            ))
        }
    };
    weights.check_input(graph.d0())?;
    Ok(Prepared {
        graph,
        source,
        weights,
        train_report,
    })
}

pub fn load_polys(cfg: &ExperimentConfig) -> Result<PolyActivationSet> {
    match (&cfg.poly_file, cfg.poly_preset) {
        (Some(p), _) => Ok(PolyActivationSet::load(cfg.resolve(p))?),
        (None, Some(p)) => Ok(PolyActivationSet::preset(p)),
        (None, None) => Ok(PolyActivationSet::preset(PolyPreset::Pset2)),
    }
}

pub fn thresholds_for(cfg: &ExperimentConfig, g: &PlainGraph, m: usize) -> Result<Thresholds> {
    match (&cfg.thresholds, cfg.pruning_ratio) {
        (Some(t), _) => Ok(Thresholds::new(t.clone())?),
        (None, Some(r)) => Ok(Thresholds::from_ratio(&g.degrees(), r, m)?),
        (None, None) => Err(CliError::config(
            "thresholds",
            "need thresholds or pruning_ratio",
        )),
    }
}

pub fn engine_config(cfg: &ExperimentConfig, g: &PlainGraph) -> Result<EngineConfig> {
    let polys = load_polys(cfg)?;
    let tau = thresholds_for(cfg, g, polys.m())?;
    let mut e = EngineConfig::new(cfg.variant, tau, polys);
    e.delta = cfg.delta;
    e.sharpen = cfg.sharpen;
    e.mode = cfg.mode;
    e.mask_source = cfg.mask_source;
    Ok(e)
}

/// Symbolic depth of the whole run and the parameters that carry it.
///
/// Explicit parameters are checked against the plan here, before any key
/// generation or encryption.
pub fn plan_params(
    cfg: &ExperimentConfig,
    ecfg: &EngineConfig,
    weights: &ModelWeights,
    oracle: Option<&PlainMasks>,
) -> Result<(HeParams, DepthEstimate)> {
    let depth = estimate_depth(&plan_circuit(&PlanInput {
        cfg: ecfg,
        layers: weights.num_layers(),
        ones_encrypted: cfg.ones == hegnn::graph::OnesMode::Encrypted,
        oracle,
    }));
    let params = match &cfg.he_params {
        Some(p) => p.clone(),
        None => cfg
            .preset
            .unwrap_or_default()
            .params(cfg.levels.unwrap_or(depth.total.max(1))),
    };
    depth.check(params.levels())?;
    Ok((params, depth))
}

pub fn default_experiment_id(cfg: &ExperimentConfig, source: &str) -> String {
    let cut = match (&cfg.thresholds, cfg.pruning_ratio) {
        (Some(t), _) => format!(
            "t{}",
            t.iter().map(f64::to_string).collect::<Vec<_>>().join("_")
        ),
        (None, Some(r)) => format!("r{r}"),
        (None, None) => "t".into(),
    };
    let poly = match (&cfg.poly_file, cfg.poly_preset) {
        (Some(p), _) => p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        (None, Some(p)) => p.name().into(),
        (None, None) => PolyPreset::Pset2.name().into(),
    };
    let mode = match cfg.mode {
        Mode::Protocol => "protocol",
        Mode::Compaction => "compaction",
    };
    let raw = format!(
        "{source}-{}-{poly}-{cut}-{}-{mode}-s{}",
        cfg.variant.name().to_lowercase(),
        cfg.backend.name(),
        cfg.seed
    );
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs one fully specified cell on the configured backend.
pub fn run_cell(cfg: &ExperimentConfig, prep: &Prepared) -> Result<CellOutput> {
    let g = &prep.graph;
    let ecfg = engine_config(cfg, g)?;
    let partition = oracle_masks(g, &ecfg.thresholds);
    let needs_oracle = cfg.mode == Mode::Compaction || cfg.mask_source == MaskSource::Oracle;
    let oracle = needs_oracle.then_some(&partition);
    let (params, depth) = plan_params(cfg, &ecfg, &prep.weights, oracle)?;
    match cfg.backend {
        BackendKind::Sim => {
            let be = SimBackend::with_rotations(params, engine_rotations())?;
            run_on(&be, cfg, prep, &ecfg, &partition, depth)
        }
        BackendKind::Ckks => {
            let be = ckks_backend(cfg, params)?;
            run_on(&be, cfg, prep, &ecfg, &partition, depth)
        }
    }
}

fn ckks_backend(cfg: &ExperimentConfig, params: HeParams) -> Result<CkksBackend> {
    match &cfg.keys_path {
        Some(p) => {
            let path = cfg.resolve(p);
            let bytes = std::fs::read(&path).map_err(|e| CliError::file(&path, e))?;
            let keys = KeySet::from_bytes(&bytes)?;
            if keys.params != params {
                return Err(CliError::config(
                    "keys_path",
                    "key set was generated for different HE parameters",
                ));
            }
            Ok(CkksBackend::from_keys(keys, cfg.seed)?)
        }
        None => Ok(CkksBackend::with_rotations(
            params,
            cfg.seed,
            &engine_rotations(),
        )?),
    }
}

fn layout_for(mode: Mode, n: usize, slots: usize) -> Result<Layout> {
    Ok(match mode {
        Mode::Protocol => Layout::single_block(n, slots)?,
        Mode::Compaction => Layout::per_node(n, slots)?,
    })
}

fn run_on<B: HeBackend>(
    be: &B,
    cfg: &ExperimentConfig,
    prep: &Prepared,
    ecfg: &EngineConfig,
    partition: &PlainMasks,
    depth: DepthEstimate,
) -> Result<CellOutput> {
    let start = Instant::now();
    let g = &prep.graph;
    let w = &prep.weights;
    let layout = layout_for(cfg.mode, g.n, be.slots())?;
    let eg = encrypt_graph(be, g, layout, cfg.ones)?;
    let out = run_inference(be, &eg, w, ecfg, Some(partition))?;
    let logits = out.decrypt_logits(be)?;
    let logits_bytes = encode_logits(be, &out.nodes, &out.logits);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;

    let (reference, hard) = match cfg.mode {
        Mode::Compaction => {
            let r = forward_compaction_plain(g, w, ecfg, partition)?;
            (r.clone(), r)
        }
        Mode::Protocol => {
            let hard = forward_design_plain(g, w, ecfg, &layout, MaskMode::Hard)?;
            let reference = match cfg.mask_source {
                MaskSource::Oracle => hard.clone(),
                MaskSource::Computed => forward_design_plain(g, w, ecfg, &layout, MaskMode::Soft)?,
            };
            (reference, hard)
        }
    };
    let all: Vec<usize> = (0..g.n).collect();
    let retained = if cfg.variant.prunes() {
        partition.retained()
    } else {
        all.clone()
    };
    let test = match (&g.labels, &g.splits) {
        (Some(labels), Some(s)) if !s.test.is_empty() => Some((labels, &s.test)),
        _ => None,
    };
    let metrics = Metrics {
        argmax_agreement: argmax_agreement(&logits, &reference, &all),
        retained_agreement: argmax_agreement(&logits, &reference, &retained),
        max_abs_error: max_abs_diff(&logits, &reference),
        test_accuracy: test.map(|(l, t)| accuracy(&logits, l, t)),
        plaintext_test_accuracy: test.map(|(l, t)| accuracy(&hard, l, t)),
        model_test_accuracy: match test {
            Some((l, t)) => {
                let act = cfg.train.as_ref().map(|c| c.activation).unwrap_or_default();
                Some(accuracy(&forward_plain_with(g, w, |z| act.eval(z))?, l, t))
            }
            None => None,
        },
    };
    let experiment_id = cfg
        .experiment_id
        .clone()
        .unwrap_or_else(|| default_experiment_id(cfg, &prep.source));
    debug_assert_eq!(out.depth.total, depth.total);
    let measured = out.profile.max_depth_consumed;
    let trace = cfg
        .depth_trace
        .then(|| report::depth_trace(&out.depth, &out.stages))
        .transpose()?;
    let report = RunReport {
        logits_file: format!("{experiment_id}.logits.bin"),
        experiment_id,
        variant: cfg.variant,
        backend: cfg.backend,
        mode: cfg.mode,
        mask_source: cfg.mask_source,
        he_params: ParamsSummary::of(be.params()),
        graph: GraphSummary {
            source: prep.source.clone(),
            n: g.n,
            edges: g.adjacency.iter().flatten().filter(|&&x| x != 0.0).count(),
            d0: g.d0(),
            classes: w.output_dim(),
        },
        thresholds: ecfg.thresholds.as_slice().to_vec(),
        pruning_ratio: if cfg.thresholds.is_some() {
            None
        } else {
            cfg.pruning_ratio
        },
        poly_preset: cfg.poly_label(),
        poly_degrees: ecfg.polys.degrees(),
        uniform_degree: ecfg.uniform_poly().degree,
        sharpen: ecfg.sharpen,
        delta: ecfg.delta_for(g.n),
        pruned_nodes: if cfg.variant.prunes() {
            partition.pruned().len()
        } else {
            0
        },
        band_sizes: partition.band_sizes(),
        activation: out.activation_profile(),
        profile: out.profile,
        stages: out.stages,
        depth: DepthSummary {
            estimated: depth.total,
            measured,
            available: be.top_level(),
        },
        wall_time_ms,
        metrics,
        logits,
        seed: cfg.seed,
        versions: Versions::default(),
    };
    Ok(CellOutput {
        report,
        logits_bytes,
        depth_trace: trace,
    })
}

fn encode_logits<B: HeBackend>(
    be: &B,
    nodes: &[NodeSlot],
    logits: &[Vec<hegnn::he::Ct<B>>],
) -> Vec<u8> {
    let mut w = Writer::new(LOGITS_MAGIC);
    w.bytes(be.name().as_bytes());
    w.bytes(be.params().to_json().as_bytes());
    w.len(nodes.len());
    for slot in nodes {
        match slot {
            NodeSlot::Block { block, offset } => {
                w.u8(0).u64(*block as u64).u64(*offset as u64);
            }
            NodeSlot::Constant(v) => {
                w.u8(1).f64s(v);
            }
        }
    }
    w.len(logits.len());
    for col in logits {
        w.len(col.len());
        for ct in col {
            w.bytes(&be.serialize_ct(ct));
        }
    }
    w.finish()
}

/// Encrypted logits as stored on disk, still to be decrypted.
pub struct LogitsFile {
    pub backend: String,
    pub params: HeParams,
    nodes: Vec<NodeSlot>,
    cts: Vec<Vec<Vec<u8>>>,
}

impl LogitsFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, LOGITS_MAGIC)?;
        let backend = String::from_utf8_lossy(r.bytes()?).into_owned();
        let params: HeParams = serde_json::from_slice(r.bytes()?)?;
        let n = r.len()?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(match r.u8()? {
                0 => NodeSlot::Block {
                    block: r.u64()? as usize,
                    offset: r.u64()? as usize,
                },
                1 => NodeSlot::Constant(r.f64s()?),
                t => return Err(hegnn::Error::Format(format!("unknown node slot tag {t}")).into()),
            });
        }
        let k = r.len()?;
        let mut cts = Vec::with_capacity(k);
        for _ in 0..k {
            let blocks = r.len()?;
            let mut col = Vec::with_capacity(blocks);
            for _ in 0..blocks {
                col.push(r.bytes()?.to_vec());
            }
            cts.push(col);
        }
        r.finish()?;
        Ok(LogitsFile {
            backend,
            params,
            nodes,
            cts,
        })
    }

    pub fn decrypt<B: HeBackend>(&self, be: &B) -> Result<Vec<Vec<f64>>> {
        let plain = self
            .cts
            .iter()
            .map(|col| {
                col.iter()
                    .map(|b| Ok(be.decrypt(&be.deserialize_ct(b)?)?))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .nodes
            .iter()
            .map(|slot| match slot {
                NodeSlot::Block { block, offset } => {
                    plain.iter().map(|col| col[*block][*offset]).collect()
                }
                NodeSlot::Constant(v) => v.clone(),
            })
            .collect())
    }
}

fn write_outputs(cfg: &ExperimentConfig, outputs: &[CellOutput]) -> Result<()> {
    let dir = cfg.output_path();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::file(&dir, e))?;
    for o in outputs {
        o.report.save(&dir)?;
        let path = dir.join(&o.report.logits_file);
        std::fs::write(&path, &o.logits_bytes).map_err(|e| CliError::file(&path, e))?;
        if let Some(trace) = &o.depth_trace {
            let path = dir.join(format!("{}.depth.csv", o.report.experiment_id));
            std::fs::write(&path, trace).map_err(|e| CliError::file(&path, e))?;
        }
    }
    let reports: Vec<RunReport> = outputs.iter().map(|o| o.report.clone()).collect();
    report::append_csv(&dir.join("results.csv"), &reports)
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let out = run_cell(cfg, &prep)?;
    write_outputs(cfg, std::slice::from_ref(&out))?;
    Ok(out.report)
}

/// BFG, PO, AAO and FF on the same graph, weights, thresholds and seed.
pub fn cmd_ablation(cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let mut outputs = Vec::with_capacity(4);
    for v in Variant::ALL {
        let mut c = cfg.clone();
        c.variant = v;
        if let Some(id) = &cfg.experiment_id {
            c.experiment_id = Some(format!("{id}-{}", v.name().to_lowercase()));
        }
        outputs.push(run_cell(&c, &prep)?);
    }
    write_outputs(cfg, &outputs)?;
    Ok(outputs.into_iter().map(|o| o.report).collect())
}

/// Cells of the sweep grid in row-major order (ratio, then preset).
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let grid = cfg.sweep.clone().unwrap_or_default();
    if grid.ratios.is_empty() && grid.presets.is_empty() {
        return Err(CliError::config(
            "sweep",
            "grid is empty: give sweep.ratios and/or sweep.presets",
        ));
    }
    let ratios: Vec<Option<f64>> = if grid.ratios.is_empty() {
        vec![None]
    } else {
        grid.ratios.iter().copied().map(Some).collect()
    };
    let presets: Vec<Option<PolyPreset>> = if grid.presets.is_empty() {
        vec![None]
    } else {
        grid.presets.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::new();
    for r in &ratios {
        for p in &presets {
            let mut c = cfg.clone();
            c.sweep = None;
            if let Some(r) = r {
                c.pruning_ratio = Some(*r);
                c.thresholds = None;
            }
            if let Some(p) = p {
                c.poly_preset = Some(*p);
                c.poly_file = None;
            }
            if let Some(id) = &cfg.experiment_id {
                let mut suffix = String::new();
                if let Some(r) = r {
                    suffix.push_str(&format!("-r{r}"));
                }
                if let Some(p) = p {
                    suffix.push_str(&format!("-{}", p.name()));
                }
                c.experiment_id = Some(format!("{id}{suffix}"));
            }
            cells.push(c);
        }
    }
    Ok(cells)
}

/// Runs every grid cell with at most `jobs` cells in flight. Each cell owns
/// its backend, keys and profiler.
pub fn cmd_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    let cells = sweep_cells(cfg)?;
    let prep = prepare(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    let outputs: Vec<CellOutput> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(c, &prep))
            .collect::<Result<Vec<_>>>()
    })?;
    write_outputs(cfg, &outputs)?;
    Ok(outputs.into_iter().map(|o| o.report).collect())
}

/// Trains on the configured graph and writes the weights to `out`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainReport> {
    let (g, _) = load_graph_source(cfg)?;
    let tc = cfg.train.clone().unwrap_or_default();
    tc.validate()
        .map_err(|e| CliError::config("train", e.to_string()))?;
    let (w, report) = train_toy(&g, &tc)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))?;
    }
    w.save(out)?;
    Ok(report)
}

pub fn resolve_params(
    preset: Option<ParamPreset>,
    levels: usize,
    params_file: Option<&Path>,
) -> Result<HeParams> {
    match params_file {
        Some(p) => Ok(HeParams::load(p)?),
        None => Ok(preset.unwrap_or_default().params(levels)),
    }
}

/// Generates a CKKS key set with the rotation key inference needs.
pub fn cmd_keygen(params: HeParams, seed: u64, out: &Path) -> Result<()> {
    let be = CkksBackend::with_rotations(params, seed, &engine_rotations())?;
    std::fs::write(out, be.keys().to_bytes()).map_err(|e| CliError::file(out, e))
}

/// Decrypts the logits a report points at. CKKS needs the secret key: from
/// `keys`, or regenerated from the report's seed when the run derived them.
pub fn cmd_inspect(report_path: &Path, keys: Option<&Path>) -> Result<Vec<Vec<f64>>> {
    let report = RunReport::load(report_path)?;
    let dir: PathBuf = report_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let path = dir.join(&report.logits_file);
    let bytes = std::fs::read(&path).map_err(|e| CliError::file(&path, e))?;
    let file = LogitsFile::parse(&bytes)?;
    match file.backend.as_str() {
        "sim" => file.decrypt(&SimBackend::with_rotations(
            file.params.clone(),
            engine_rotations(),
        )?),
        "ckks" => {
            let be = match keys {
                Some(k) => {
                    let bytes = std::fs::read(k).map_err(|e| CliError::file(k, e))?;
                    CkksBackend::from_keys(KeySet::from_bytes(&bytes)?, 0)?
                }
                None => CkksBackend::with_rotations(
                    file.params.clone(),
                    report.seed,
                    &engine_rotations(),
                )?,
            };
            if be.params() != &file.params {
                return Err(hegnn::Error::Params(
                    "key set does not match the ciphertext parameters".into(),
                )
                .into());
            }
            file.decrypt(&be)
        }
        other => {
            Err(hegnn::Error::Format(format!("unknown backend `{other}` in logits file")).into())
        }
    }
}

pub fn format_logits(logits: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (v, row) in logits.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:>12.6}")).collect();
        out.push_str(&format!("{v:>4} {}\n", cells.join(" ")));
    }
    out
}
