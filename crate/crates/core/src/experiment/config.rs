use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::evaluation::ReportWindows;
use crate::trainer::TrainConfig;

/// Declarative description of one experiment, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// For `compare`: the FLAT baseline `1.0` plus one HC weight.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub hierarchy: HierarchySource,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub windows: ReportWindows,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_alphas() -> Vec<f64> {
    vec![1.0, 0.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Uniform,
    ClassDependent,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Uniform => "uniform",
            NoiseKind::ClassDependent => "class_dependent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: Option<f64>,
    /// Ablation grid; `compare` takes a single `ratio`.
    pub ratios: Option<Vec<f64>>,
    /// Epochs for the proxy behind class-dependent noise and learned hierarchies.
    pub proxy_epochs: usize,
    pub proxy_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            ratio: None,
            ratios: None,
            proxy_epochs: 30,
            proxy_seed: 0,
        }
    }
}

impl NoiseSpec {
    /// Ratios this spec asks for; `none` is the single ratio 0.
    pub fn ratio_list(&self) -> Vec<f64> {
        if self.kind == NoiseKind::None {
            return vec![0.0];
        }
        match (&self.ratios, self.ratio) {
            (Some(rs), _) => rs.clone(),
            (None, Some(r)) => vec![r],
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum HierarchySource {
    /// The partition planted by the synthetic generator.
    #[default]
    Dataset,
    /// `mnist`, `animal10n` or `identity(K)`.
    Builtin { name: String },
    /// Clustered from a FLAT proxy's confusion matrix.
    Learned { num_coarse: usize },
    /// JSON file holding `{"num_coarse": .., "fine_to_coarse": [..]}`.
    File { path: PathBuf },
}

/// Optional replacements for [`TrainConfig`] fields. Alpha, seed and
/// hierarchy are always set by the runner.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lr_decay_factor: Option<f64>,
    pub lr_decay_every: Option<usize>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub hidden: Option<Vec<usize>>,
}

impl TrainOverrides {
    pub fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { base.$f = v.clone(); } )* };
        }
        set!(
            epochs,
            batch_size,
            learning_rate,
            lr_decay_factor,
            lr_decay_every,
            adam_beta1,
            adam_beta2,
            adam_eps,
            hidden
        );
        base
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }

    /// Structural checks shared by every runner.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == ".." {
            return Err(Error::config("name", "must be a non-empty single path component"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "must not repeat"));
        }
        if self.alphas.is_empty() {
            return Err(Error::config("alphas", "must not be empty"));
        }
        for (i, a) in self.alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                return Err(Error::config(format!("alphas[{i}]"), format!("{a} is outside [0, 1]")));
            }
        }
        let ratios = self.noise.ratio_list();
        if ratios.is_empty() {
            return Err(Error::config("noise.ratio", "required when noise.kind is not `none`"));
        }
        for (i, r) in ratios.iter().enumerate() {
            if !(0.0..1.0).contains(r) {
                let field = if self.noise.ratios.is_some() {
                    format!("noise.ratios[{i}]")
                } else {
                    "noise.ratio".into()
                };
                return Err(Error::config(field, format!("{r} is outside [0, 1)")));
            }
        }
        if self.noise.proxy_epochs == 0 {
            return Err(Error::config("noise.proxy_epochs", "must be positive"));
        }
        if let HierarchySource::Learned { num_coarse } = self.hierarchy {
            if num_coarse < 2 {
                return Err(Error::config("hierarchy.num_coarse", "must be at least 2"));
            }
        }
        if matches!(self.dataset, DatasetSpec::Mnist { .. }) && self.hierarchy == HierarchySource::Dataset {
            return Err(Error::config(
                "hierarchy.source",
                "`dataset` needs the synthetic generator; pick builtin, learned or file",
            ));
        }
        if let DatasetSpec::Synthetic(spec) = &self.dataset {
            spec.validate()
                .map_err(|e| Error::config("dataset", e.to_string()))?;
        }
        let (lo, hi) = self.windows.early;
        if lo == 0 || lo > hi {
            return Err(Error::config("windows.early", format!("bad window [{lo}, {hi}]")));
        }
        if self.windows.final_len == 0 {
            return Err(Error::config("windows.final_len", "must be positive"));
        }
        self.train
            .apply(TrainConfig {
                alpha: 1.0,
                ..TrainConfig::default()
            })
            .validate()
            .map_err(|e| Error::config("train", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
name = "demo"
out_dir = "results"
seeds = [1, 2]
alphas = [1.0, 0.25]
threads = 2

[dataset]
kind = "synthetic"
n_train = 400
n_test = 100

[noise]
kind = "uniform"
ratio = 0.3

[hierarchy]
source = "learned"
num_coarse = 4

[train]
epochs = 5
hidden = [32]

[windows]
early = [2, 4]
final_len = 2
"#;

    #[test]
    fn parses_every_section() {
        let cfg = ExperimentConfig::from_toml_str(FULL).unwrap();
        assert_eq!(cfg.experiment_dir(), PathBuf::from("results/demo"));
        assert_eq!(cfg.noise.ratio_list(), vec![0.3]);
        assert_eq!(cfg.hierarchy, HierarchySource::Learned { num_coarse: 4 });
        match &cfg.dataset {
            DatasetSpec::Synthetic(s) => assert_eq!((s.n_train, s.dim), (400, 20)),
            other => panic!("unexpected {other:?}"),
        }
        let t = cfg.train.apply(TrainConfig::default());
        assert_eq!((t.epochs, t.hidden.clone(), t.batch_size), (5, vec![32], 64));
        assert_eq!(cfg.windows.early, (2, 4));
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("name = \"x\"\nseeds = [0]\n").unwrap();
        assert_eq!(cfg.alphas, vec![1.0, 0.5]);
        assert_eq!(cfg.noise.ratio_list(), vec![0.0]);
        assert_eq!(cfg.dataset, DatasetSpec::default());
        assert_eq!(cfg.windows, ReportWindows::default());
    }

    fn field_of(text: &str) -> String {
        match ExperimentConfig::from_toml_str(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of("name = \"x\"\nseeds = []\n"), "seeds");
        assert_eq!(field_of("name = \"x\"\nseeds = [1]\nalphas = [1.0, 1.5]\n"), "alphas[1]");
        assert_eq!(
            field_of("name = \"x\"\nseeds = [1]\n[noise]\nkind = \"uniform\"\nratio = 1.0\n"),
            "noise.ratio"
        );
        assert_eq!(
            field_of("name = \"x\"\nseeds = [1]\n[noise]\nkind = \"uniform\"\n"),
            "noise.ratio"
        );
        assert_eq!(field_of("name = \"x\"\nseeds = [1]\n[train]\nepochs = \"ten\"\n"), "train.epochs");
        assert_eq!(field_of("name = \"x\"\nseeds = [1]\n[noise]\nkind = \"pink\"\n"), "noise.kind");
        assert_eq!(field_of("name = \"x\"\nseeds = [1]\n[train]\nbatch_size = 0\n"), "train");
        assert_eq!(field_of("seeds = [1]\n"), ".");
    }
}
