//! Run configuration: one TOML file, overridable from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vmfkd::data::{load_idx, subsample, Dataset, Split};
use vmfkd::distill::{DistillMode, ShiftConfig};
use vmfkd::nn::{Activation, Network, TrainConfig};

use crate::ConfigError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub teacher: ModelConfig,
    pub derive: DeriveConfig,
    pub student: ModelConfig,
    pub distill: DistillConfig,
    pub shifts: Vec<ShiftConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut teacher = ModelConfig::new(vec![784, 256, 128, 10]);
        teacher.train.weight_decay = 1e-3;
        teacher.train.epochs = 15;
        let mut student = ModelConfig::new(vec![784, 128, 64, 10]);
        student.train.epochs = 15;
        RunConfig {
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            teacher,
            derive: DeriveConfig::default(),
            student,
            distill: DistillConfig::default(),
            shifts: vec![ShiftConfig::none()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Stratified subset size of the training split; all of it when absent.
    pub subset: Option<usize>,
    pub subset_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let dir = Path::new("data/mnist");
        DataConfig {
            train_images: dir.join("train-images-idx3-ubyte.gz"),
            train_labels: dir.join("train-labels-idx1-ubyte.gz"),
            test_images: dir.join("t10k-images-idx3-ubyte.gz"),
            test_labels: dir.join("t10k-labels-idx1-ubyte.gz"),
            subset: Some(8000),
            subset_seed: 0,
        }
    }
}

impl DataConfig {
    pub fn train_set(&self) -> Result<Dataset> {
        let ds = load_idx(&self.train_images, &self.train_labels, Split::Train)?;
        Ok(match self.subset {
            Some(n) if n < ds.len() => subsample(&ds, n, self.subset_seed, true)?,
            _ => ds,
        })
    }

    pub fn test_set(&self) -> Result<Dataset> {
        Ok(load_idx(&self.test_images, &self.test_labels, Split::Test)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Input, hidden, penultimate and class widths.
    pub layers: Vec<usize>,
    pub activation: Activation,
    /// Overrides the activation of the last hidden layer.
    pub penultimate_activation: Option<Activation>,
    pub final_bias: bool,
    pub seed: u64,
    /// Checkpoint location; `<out_dir>/teacher.ckpt` for the teacher when absent.
    pub checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(vec![784, 128, 64, 10])
    }
}

impl ModelConfig {
    fn new(layers: Vec<usize>) -> Self {
        ModelConfig {
            layers,
            activation: Activation::Relu,
            penultimate_activation: None,
            final_bias: false,
            seed: 0,
            checkpoint: None,
            train: TrainConfig::default(),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Network> {
        let net = Network::random(&self.layers, self.activation, self.final_bias, seed)?;
        Ok(match self.penultimate_activation {
            Some(a) => net.with_penultimate_activation(a),
            None => net,
        })
    }
}

/// A fixed concentration or `"inspect"` for `mean‖a‖·mean‖w‖` on the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSetting {
    Fixed(f64),
    Named(KappaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaKeyword {
    Inspect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeriveConfig {
    pub kappa: KappaSetting,
    pub per_class_scaling: bool,
    pub samples_per_class: usize,
    /// Softmax temperature for the relation matrix; when absent,
    /// `distill.temperature · mean‖w‖ / κ`.
    pub relation_temperature: Option<f64>,
    pub seed: u64,
    /// Where the relation CSV is written and read; `<out_dir>/relations.csv` when absent.
    pub relations: Option<PathBuf>,
    /// Where the prior is written; `<out_dir>/prior.toml` when absent.
    pub prior: Option<PathBuf>,
}

impl Default for DeriveConfig {
    fn default() -> Self {
        DeriveConfig {
            kappa: KappaSetting::Named(KappaKeyword::Inspect),
            per_class_scaling: false,
            samples_per_class: vmfkd::activation_model::DEFAULT_SAMPLES_PER_CLASS,
            relation_temperature: None,
            seed: 0,
            relations: None,
            prior: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub modes: Vec<DistillMode>,
    pub temperature: f64,
    /// Distillation weight for every non-label mode; per-mode defaults when absent.
    pub alpha: Option<f64>,
    pub scale_by_t2: bool,
    pub seeds: Vec<u64>,
    pub eval_on_shifted: bool,
    pub save_students: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            modes: vec![DistillMode::Label, DistillMode::Kd, DistillMode::Ckd],
            temperature: vmfkd::distill::DEFAULT_TEMPERATURE,
            alpha: None,
            scale_by_t2: true,
            seeds: (0..5).collect(),
            eval_on_shifted: true,
            save_students: true,
        }
    }
}

impl RunConfig {
    /// Read `path` (defaults when `None`), then apply `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>().map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError(e.to_string()).into())
    }

    pub fn teacher_checkpoint(&self) -> PathBuf {
        self.teacher.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("teacher.ckpt"))
    }

    pub fn relations_path(&self) -> PathBuf {
        self.derive.relations.clone().unwrap_or_else(|| self.out_dir.join("relations.csv"))
    }

    pub fn prior_path(&self) -> PathBuf {
        self.derive.prior.clone().unwrap_or_else(|| self.out_dir.join("prior.toml"))
    }

    /// Write the effective configuration to `<dir>/resolved_<command>.toml`.
    pub fn write_resolved(&self, dir: &Path, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("resolved_{command}.toml"));
        let text = toml::to_string(self).map_err(|e| ConfigError(e.to_string()))?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `a.b.c=value`; the value is parsed as TOML, falling back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError(format!("override `{spec}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("bad override key `{key}`")).into());
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(toml::to_string(&back).unwrap(), text);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::load(
            None,
            &[
                "teacher.train.epochs=3".into(),
                "distill.modes=[\"ckd\"]".into(),
                "derive.kappa=20.0".into(),
                "out_dir=somewhere".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.teacher.train.epochs, 3);
        assert_eq!(cfg.distill.modes, vec![DistillMode::Ckd]);
        assert_eq!(cfg.derive.kappa, KappaSetting::Fixed(20.0));
        assert_eq!(cfg.out_dir, PathBuf::from("somewhere"));
        assert_eq!(cfg.derive.samples_per_class, 4096);
    }

    #[test]
    fn unknown_keys_and_bad_overrides_are_config_errors() {
        let e = RunConfig::load(None, &["teacher.nonsense=1".into()]).unwrap_err();
        assert!(e.downcast_ref::<ConfigError>().is_some());
        assert!(RunConfig::load(None, &["novalue".into()]).is_err());
        assert!(RunConfig::load(None, &["derive.kappa=\"sometimes\"".into()]).is_err());
    }
}
