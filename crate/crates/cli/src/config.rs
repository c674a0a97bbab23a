//! Experiment configuration, loaded from JSON or TOML.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use hegnn::engine::{MaskSource, Mode, PolyPreset, Variant};
use hegnn::graph::OnesMode;
use hegnn::he::HeParams;
use hegnn::plain::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Sim,
    Ckks,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Sim => "sim",
            BackendKind::Ckks => "ckks",
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sim" => Ok(BackendKind::Sim),
            "ckks" => Ok(BackendKind::Ckks),
            other => Err(format!("unknown backend `{other}` (expected sim or ckks)")),
        }
    }
}

/// Named HE parameter sets. The chain length comes from `levels`, or from
/// the depth plan when `levels` is omitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamPreset {
    /// N = 2^10. Fast, insecure; for tests.
    Toy,
    /// N = 2^13.
    #[default]
    Desk,
    /// N = 2^15.
    Large,
}

impl ParamPreset {
    pub fn params(self, levels: usize) -> HeParams {
        match self {
            ParamPreset::Toy => HeParams::toy(1 << 10, levels),
            ParamPreset::Desk => HeParams::desk(levels),
            ParamPreset::Large => HeParams::large(levels),
        }
    }
}

impl FromStr for ParamPreset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "toy" => Ok(ParamPreset::Toy),
            "desk" => Ok(ParamPreset::Desk),
            "large" => Ok(ParamPreset::Large),
            other => Err(format!("unknown parameter preset `{other}`")),
        }
    }
}

/// Grid for `sweep`: every ratio crossed with every preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub ratios: Vec<f64>,
    #[serde(default)]
    pub presets: Vec<PolyPreset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment_id: Option<String>,
    #[serde(default)]
    pub he_params: Option<HeParams>,
    #[serde(default)]
    pub preset: Option<ParamPreset>,
    /// Rescale levels for `preset`; sized from the depth plan when absent.
    #[serde(default)]
    pub levels: Option<usize>,
    /// A graph file, or `builtin:demo16` / `builtin:karate34`.
    pub graph_path: String,
    #[serde(default)]
    pub weights_path: Option<PathBuf>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub pruning_ratio: Option<f64>,
    #[serde(default)]
    pub poly_preset: Option<PolyPreset>,
    #[serde(default)]
    pub poly_file: Option<PathBuf>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub mask_source: MaskSource,
    #[serde(default = "default_sharpen")]
    pub sharpen: usize,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub ones: OnesMode,
    /// Key set written by `keygen`; otherwise keys are derived from `seed`.
    #[serde(default)]
    pub keys_path: Option<PathBuf>,
    #[serde(default)]
    pub depth_trace: bool,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_variant() -> Variant {
    Variant::Ff
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_sharpen() -> usize {
    1
}

impl ExperimentConfig {
    /// Minimal config around a graph; everything else at its default.
    pub fn for_graph(graph_path: impl Into<String>) -> Self {
        ExperimentConfig {
            experiment_id: None,
            he_params: None,
            preset: None,
            levels: None,
            graph_path: graph_path.into(),
            weights_path: None,
            train: None,
            thresholds: None,
            pruning_ratio: None,
            poly_preset: None,
            poly_file: None,
            variant: default_variant(),
            backend: BackendKind::Sim,
            seed: 0,
            output_dir: default_output_dir(),
            mode: Mode::Protocol,
            mask_source: MaskSource::Computed,
            sharpen: default_sharpen(),
            delta: None,
            ones: OnesMode::Encrypted,
            keys_path: None,
            depth_trace: false,
            sweep: None,
            base_dir: PathBuf::from("."),
        }
    }

    /// Reads `.toml` as TOML and anything else as JSON, then validates.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating, so command-line overrides can apply first.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml_str(&text)?
        } else {
            Self::from_json_str(&text)?
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::config(field_of(e.path()), e.inner().to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::config(field_of(e.path()), e.inner().message()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.he_params.is_some() && (self.preset.is_some() || self.levels.is_some()) {
            return Err(CliError::config(
                "he_params",
                "give either he_params or preset/levels, not both",
            ));
        }
        if let Some(p) = &self.he_params {
            p.validate()
                .map_err(|e| CliError::config("he_params", e.to_string()))?;
        }
        if self.levels == Some(0) {
            return Err(CliError::config("levels", "must be >= 1"));
        }
        if self.graph_path.trim().is_empty() {
            return Err(CliError::config("graph_path", "must not be empty"));
        }
        if self.weights_path.is_some() && self.train.is_some() {
            return Err(CliError::config(
                "train",
                "weights_path is set; drop one of the two",
            ));
        }
        if self.weights_path.is_none() && self.train.is_none() {
            return Err(CliError::config(
                "weights_path",
                "missing weights path and no train section or --train flag",
            ));
        }
        if let Some(t) = &self.train {
            t.validate()
                .map_err(|e| CliError::config("train", e.to_string()))?;
        }
        match (&self.thresholds, self.pruning_ratio) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "pruning_ratio",
                    "give either thresholds or pruning_ratio",
                ))
            }
            (None, None) if !self.sweep.as_ref().is_some_and(|g| !g.ratios.is_empty()) => {
                return Err(CliError::config(
                    "thresholds",
                    "need thresholds or pruning_ratio",
                ));
            }
            (None, None) => {}
            (Some(tau), None) => check_thresholds(tau)?,
            (None, Some(r)) => check_ratio("pruning_ratio", r)?,
        }
        if self.poly_preset.is_some() && self.poly_file.is_some() {
            return Err(CliError::config(
                "poly_file",
                "give either poly_preset or poly_file",
            ));
        }
        if self.sharpen == 0 {
            return Err(CliError::config("sharpen", "must be >= 1"));
        }
        if let Some(d) = self.delta {
            if !(d.is_finite() && d > 0.0) {
                return Err(CliError::config(
                    "delta",
                    format!("must be positive, got {d}"),
                ));
            }
        }
        if let Some(grid) = &self.sweep {
            for (i, &r) in grid.ratios.iter().enumerate() {
                check_ratio(&format!("sweep.ratios[{i}]"), r)?;
            }
        }
        Ok(())
    }

    pub fn poly_label(&self) -> String {
        match (&self.poly_file, self.poly_preset) {
            (Some(p), _) => format!("file:{}", p.display()),
            (None, Some(p)) => p.name().to_string(),
            (None, None) => PolyPreset::Pset2.name().to_string(),
        }
    }
}

fn check_thresholds(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(CliError::config(
            "thresholds",
            "at least one threshold is required",
        ));
    }
    for (i, t) in tau.iter().enumerate() {
        if !t.is_finite() {
            return Err(CliError::config(
                format!("thresholds[{i}]"),
                "must be finite",
            ));
        }
        if i > 0 && *t >= tau[i - 1] {
            return Err(CliError::config(
                format!("thresholds[{i}]"),
                format!(
                    "thresholds must be strictly decreasing, {} follows {}",
                    t,
                    tau[i - 1]
                ),
            ));
        }
    }
    Ok(())
}

fn check_ratio(field: &str, r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(CliError::config(
            field,
            format!("ratio {r} is not in [0, 1)"),
        ));
    }
    Ok(())
}

fn field_of(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s.is_empty() || s == "." {
        "<root>".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> String {
        r#"{"graph_path": "builtin:demo16", "train": {}, "pruning_ratio": 0.25}"#.into()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json_str(&base()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.variant, Variant::Ff);
        assert_eq!(cfg.backend, BackendKind::Sim);
        assert_eq!(cfg.sharpen, 1);
        assert_eq!(cfg.poly_label(), "pset2");
    }

    #[test]
    fn parse_errors_name_the_field() {
        let bad = r#"{"graph_path": "g.json", "train": {"epochs": "many"}, "pruning_ratio": 0.2}"#;
        match ExperimentConfig::from_json_str(bad) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "train.epochs"),
            other => panic!("{other:?}"),
        }
        let unknown = r#"{"graph_path": "g.json", "variantt": "ff"}"#;
        assert!(matches!(
            ExperimentConfig::from_json_str(unknown),
            Err(CliError::Config { .. })
        ));
        let toml_bad = "graph_path = \"g.json\"\nvariant = \"xx\"\n";
        match ExperimentConfig::from_toml_str(toml_bad) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "variant"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_errors_name_the_field() {
        let field = |text: &str| match ExperimentConfig::from_json_str(text).unwrap().validate() {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            field(r#"{"graph_path": "g", "pruning_ratio": 0.2}"#),
            "weights_path"
        );
        assert_eq!(
            field(r#"{"graph_path": "g", "train": {}, "thresholds": [3, 4]}"#),
            "thresholds[1]"
        );
        assert_eq!(
            field(r#"{"graph_path": "g", "train": {}, "pruning_ratio": 1.5}"#),
            "pruning_ratio"
        );
        assert_eq!(
            field(r#"{"graph_path": "g", "train": {"epochs": 0}, "pruning_ratio": 0.2}"#),
            "train"
        );
        assert_eq!(
            field(
                r#"{"graph_path": "g", "train": {}, "pruning_ratio": 0.2, "preset": "toy", "he_params": {"ring_degree": 16, "prime_bits": [60, 40, 60], "scale_bits": 40}}"#
            ),
            "he_params"
        );
        assert_eq!(
            field(
                r#"{"graph_path": "g", "train": {}, "pruning_ratio": 0.2, "sweep": {"ratios": [0.1, 2.0]}}"#
            ),
            "sweep.ratios[1]"
        );
    }

    #[test]
    fn toml_and_json_agree() {
        let toml_text = r#"
graph_path = "builtin:demo16"
pruning_ratio = 0.25
variant = "bfg"
backend = "ckks"
preset = "toy"
seed = 9

[train]
epochs = 50
"#;
        let json_text = r#"{"graph_path": "builtin:demo16", "pruning_ratio": 0.25, "variant": "bfg",
            "backend": "ckks", "preset": "toy", "seed": 9, "train": {"epochs": 50}}"#;
        let a = ExperimentConfig::from_toml_str(toml_text).unwrap();
        let b = ExperimentConfig::from_json_str(json_text).unwrap();
        assert_eq!(a, b);
    }
}
