//! Run reports, the aggregate CSV and the depth trace.

use std::fs::OpenOptions;
use std::path::Path;

use hegnn::engine::{MaskSource, Mode, StageProfile, Variant};
use hegnn::he::{DepthEstimate, HeParams, OpProfile};
use serde::{Deserialize, Serialize};

use crate::config::BackendKind;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsSummary {
    pub ring_degree: usize,
    pub slots: usize,
    pub levels: usize,
    pub scale_bits: u32,
    pub log_q: u32,
}

impl ParamsSummary {
    pub fn of(p: &HeParams) -> Self {
        ParamsSummary {
            ring_degree: p.ring_degree,
            slots: p.slots(),
            levels: p.levels(),
            scale_bits: p.scale_bits,
            log_q: p.data_prime_bits().iter().sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub source: String,
    pub n: usize,
    pub edges: usize,
    pub d0: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub estimated: usize,
    pub measured: usize,
    pub available: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Argmax agreement with the plaintext reference over all nodes.
    pub argmax_agreement: f64,
    /// Same, over nodes the hard partition retains.
    pub retained_agreement: f64,
    pub max_abs_error: f64,
    /// Decrypted logits against the labels on the test split.
    pub test_accuracy: Option<f64>,
    /// Hard-mask plaintext pipeline against the labels on the test split.
    pub plaintext_test_accuracy: Option<f64>,
    /// The model with its training activation, no pruning.
    pub model_test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub hegnn: String,
    pub hegnn_cli: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            hegnn: hegnn::VERSION.to_string(),
            hegnn_cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment_id: String,
    pub variant: Variant,
    pub backend: BackendKind,
    pub mode: Mode,
    pub mask_source: MaskSource,
    pub he_params: ParamsSummary,
    pub graph: GraphSummary,
    pub thresholds: Vec<f64>,
    pub pruning_ratio: Option<f64>,
    pub poly_preset: String,
    pub poly_degrees: Vec<usize>,
    pub uniform_degree: usize,
    pub sharpen: usize,
    pub delta: f64,
    pub pruned_nodes: usize,
    pub band_sizes: Vec<usize>,
    pub profile: OpProfile,
    pub activation: OpProfile,
    pub stages: Vec<StageProfile>,
    pub depth: DepthSummary,
    pub wall_time_ms: f64,
    pub metrics: Metrics,
    /// Decrypted `n x classes` logits.
    pub logits: Vec<Vec<f64>>,
    /// Encrypted logits, relative to the report.
    pub logits_file: String,
    pub seed: u64,
    pub versions: Versions,
}

impl RunReport {
    /// The report with every wall-clock field zeroed. Two runs with the same
    /// config and seed on the simulator give byte-identical canonical JSON.
    pub fn canonical(&self) -> RunReport {
        let mut r = self.clone();
        r.wall_time_ms = 0.0;
        r.profile.wall_time_ms = 0.0;
        r.activation.wall_time_ms = 0.0;
        for s in &mut r.stages {
            s.profile.wall_time_ms = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.json", self.experiment_id));
        std::fs::write(&path, self.to_json()).map_err(|e| CliError::file(&path, e))
    }

    pub fn csv_row(&self) -> CsvRow {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        CsvRow {
            experiment_id: self.experiment_id.clone(),
            variant: self.variant.name().to_string(),
            backend: self.backend.name().to_string(),
            mode: format!("{:?}", self.mode).to_lowercase(),
            graph: self.graph.source.clone(),
            n: self.graph.n,
            ring_degree: self.he_params.ring_degree,
            levels: self.he_params.levels,
            thresholds: join(&self.thresholds),
            pruning_ratio: opt(self.pruning_ratio),
            poly_preset: self.poly_preset.clone(),
            pruned_nodes: self.pruned_nodes,
            add: self.profile.add,
            add_plain: self.profile.add_plain,
            mult_ct: self.profile.mult_ct,
            mult_plain: self.profile.mult_plain,
            rotate: self.profile.rotate,
            rescale: self.profile.rescale,
            relinearize: self.profile.relinearize,
            activation_mult_ct: self.activation.mult_ct,
            depth_estimated: self.depth.estimated,
            depth_measured: self.depth.measured,
            wall_time_ms: format!("{:.3}", self.wall_time_ms),
            argmax_agreement: self.metrics.argmax_agreement,
            retained_agreement: self.metrics.retained_agreement,
            max_abs_error: self.metrics.max_abs_error,
            test_accuracy: opt(self.metrics.test_accuracy),
            plaintext_test_accuracy: opt(self.metrics.plaintext_test_accuracy),
            model_test_accuracy: opt(self.metrics.model_test_accuracy),
            seed: self.seed,
        }
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// One line of `results.csv`. The column set and order are fixed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub experiment_id: String,
    pub variant: String,
    pub backend: String,
    pub mode: String,
    pub graph: String,
    pub n: usize,
    pub ring_degree: usize,
    pub levels: usize,
    pub thresholds: String,
    pub pruning_ratio: String,
    pub poly_preset: String,
    pub pruned_nodes: usize,
    pub add: u64,
    pub add_plain: u64,
    pub mult_ct: u64,
    pub mult_plain: u64,
    pub rotate: u64,
    pub rescale: u64,
    pub relinearize: u64,
    pub activation_mult_ct: u64,
    pub depth_estimated: usize,
    pub depth_measured: usize,
    pub wall_time_ms: String,
    pub argmax_agreement: f64,
    pub retained_agreement: f64,
    pub max_abs_error: f64,
    pub test_accuracy: String,
    pub plaintext_test_accuracy: String,
    pub model_test_accuracy: String,
    pub seed: u64,
}

pub const CSV_COLUMNS: [&str; 30] = [
    "experiment_id",
    "variant",
    "backend",
    "mode",
    "graph",
    "n",
    "ring_degree",
    "levels",
    "thresholds",
    "pruning_ratio",
    "poly_preset",
    "pruned_nodes",
    "add",
    "add_plain",
    "mult_ct",
    "mult_plain",
    "rotate",
    "rescale",
    "relinearize",
    "activation_mult_ct",
    "depth_estimated",
    "depth_measured",
    "wall_time_ms",
    "argmax_agreement",
    "retained_agreement",
    "max_abs_error",
    "test_accuracy",
    "plaintext_test_accuracy",
    "model_test_accuracy",
    "seed",
];

/// Appends rows to `path`, writing the header when the file is new or empty.
pub fn append_csv(path: &Path, reports: &[RunReport]) -> Result<()> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::file(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    for r in reports {
        w.serialize(r.csv_row())?;
    }
    w.flush().map_err(|e| CliError::file(path, e))?;
    Ok(())
}

/// Per-stage depth and op counts as CSV text.
pub fn depth_trace(depth: &DepthEstimate, stages: &[StageProfile]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "stage",
        "depth_added",
        "depth_cumulative",
        "mult_ct",
        "mult_plain",
        "rotate",
        "add",
    ])?;
    for s in &depth.stages {
        let p = stages
            .iter()
            .filter(|x| x.name == s.name)
            .map(|x| &x.profile)
            .fold(OpProfile::default(), |mut acc, p| {
                acc.mult_ct += p.mult_ct;
                acc.mult_plain += p.mult_plain;
                acc.rotate += p.rotate;
                acc.add += p.add + p.add_plain;
                acc
            });
        w.write_record([
            s.name.clone(),
            s.added.to_string(),
            s.cumulative.to_string(),
            p.mult_ct.to_string(),
            p.mult_plain.to_string(),
            p.rotate.to_string(),
            p.add.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Fixed-width comparison table for `ablation`.
pub fn ablation_table(reports: &[RunReport]) -> String {
    let mut out = format!(
        "{:<8}{:>10}{:>12}{:>14}{:>8}{:>8}{:>12}\n",
        "variant", "mult_ct", "mult_plain", "act_mult_ct", "depth", "pruned", "agreement"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<8}{:>10}{:>12}{:>14}{:>8}{:>8}{:>12.4}\n",
            r.variant.name(),
            r.profile.mult_ct,
            r.profile.mult_plain,
            r.activation.mult_ct,
            r.depth.measured,
            r.pruned_nodes,
            r.metrics.argmax_agreement
        ));
    }
    out
}
