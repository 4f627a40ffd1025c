//! TOML run configuration shared by all CLI commands.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs"
//!
//! [data]
//! preset = "synthetic"        # or "swissmetro", or an inline [data.ingest]
//! train = "runs/gen-…/train.csv"
//! dev = "runs/gen-…/dev.csv"
//! test = "runs/gen-…/test.csv"
//!
//! [model]
//! preset = "tastenet"
//!
//! [training]
//! reg_strength = 0.001
//! ```
//!
//! Without file paths, synthetic data is generated in memory from
//! `[generator]`; `data.source` with `data.split` loads one raw file and
//! splits it with the root seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::choice::{UtilityConfig, UtilitySpec};
use crate::data::{load_csv, split_dataset, Dataset, IngestConfig, SplitTag};
use crate::error::{Error, Result};
use crate::estimation::{GridSpace, ModelTemplate, RclSpec, TrainConfig};
use crate::indicators::{IndicatorRequest, ProbeGrid};
use crate::nn::{Activation, MlpSpec};
use crate::presets::{self, SwissmetroModel, SyntheticModel};
use crate::rng;
use crate::synth::{self, GenConfig, TrueTasteParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataPreset {
    Synthetic,
    Swissmetro,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub preset: Option<DataPreset>,
    /// Overrides the preset's ingestion rules.
    pub ingest: Option<IngestConfig>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// A single raw file to split into train, dev and test.
    pub source: Option<PathBuf>,
    pub split: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Named specification for the data preset, e.g. `tastenet`, `mnl-i`,
    /// `mnl-b`.
    pub preset: Option<String>,
    /// Explicit utility; replaces the preset's.
    pub utility: Option<UtilityConfig>,
    pub network: Option<MlpSpec>,
    pub rcl: Option<RclSpec>,
    /// Hidden units of a preset network.
    pub hidden: Option<usize>,
    pub activation: Option<Activation>,
    #[serde(default)]
    pub init_beta: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stochastic component derives its own stream from it.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub generator: Option<GenConfig>,
    pub truth: Option<TrueTasteParams>,
    #[serde(default)]
    pub data: DataSection,
    pub model: Option<ModelSection>,
    pub training: Option<TrainConfig>,
    pub grid: Option<GridSpace>,
    pub indicators: Option<IndicatorRequest>,
    pub probe: Option<ProbeGrid>,
}

/// Train, dev and test data plus the files they were read from.
pub struct Splits {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Option<Dataset>,
    pub inputs: Vec<PathBuf>,
}

impl Splits {
    pub fn get(&self, tag: SplitTag) -> Result<&Dataset> {
        match tag {
            SplitTag::Train => Ok(&self.train),
            SplitTag::Dev => Ok(&self.dev),
            SplitTag::Test => self
                .test
                .as_ref()
                .ok_or_else(|| Error::Config("the configuration has no test data".into())),
        }
    }
}

fn preset_name<T: serde::de::DeserializeOwned>(name: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| Error::Config(format!("unknown {what} model preset `{name}`")))
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("`seed` is required for this command".into()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn truth(&self) -> TrueTasteParams {
        self.truth.clone().unwrap_or_default()
    }

    pub fn generator(&self) -> Result<GenConfig> {
        Ok(GenConfig {
            seed: self.seed()?,
            ..self.generator.clone().unwrap_or_default()
        })
    }

    pub fn training(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            seed: self.seed()?,
            ..self.training.clone().unwrap_or_default()
        })
    }

    fn data_preset(&self) -> Option<DataPreset> {
        match (self.data.preset, &self.generator) {
            (Some(p), _) => Some(p),
            (None, Some(_)) if self.data.ingest.is_none() => Some(DataPreset::Synthetic),
            _ => None,
        }
    }

    pub fn ingest(&self) -> Result<IngestConfig> {
        if let Some(i) = &self.data.ingest {
            return Ok(i.clone());
        }
        match self.data_preset() {
            Some(DataPreset::Synthetic) => Ok(IngestConfig::for_written(&synth::schema())),
            Some(DataPreset::Swissmetro) => Ok(presets::swissmetro_ingest()),
            None => Err(Error::Config("set `data.preset` or give `[data.ingest]`".into())),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.data_preset() == Some(DataPreset::Synthetic)
    }

    pub fn load_data(&self) -> Result<Splits> {
        let d = &self.data;
        if let Some(train) = &d.train {
            let dev = d
                .dev
                .as_ref()
                .ok_or_else(|| Error::Config("`data.dev` is required with `data.train`".into()))?;
            let ingest = self.ingest()?;
            let load = |p: &PathBuf, tag| load_csv(p, &ingest).map(|ds| ds.with_split(tag));
            let mut inputs = vec![train.clone(), dev.clone()];
            inputs.extend(d.test.clone());
            return Ok(Splits {
                train: load(train, SplitTag::Train)?,
                dev: load(dev, SplitTag::Dev)?,
                test: d.test.as_ref().map(|p| load(p, SplitTag::Test)).transpose()?,
                inputs,
            });
        }
        if let Some(source) = &d.source {
            let all = load_csv(source, &self.ingest()?)?;
            let fractions = d.split.unwrap_or(presets::SWISSMETRO_SPLIT);
            let seed = rng::sub_seed(self.seed()?, rng::streams::SPLIT);
            let (train, dev, test) = split_dataset(&all, fractions, seed)?;
            return Ok(Splits {
                train,
                dev,
                test: Some(test),
                inputs: vec![source.clone()],
            });
        }
        if self.is_synthetic() {
            let (train, dev, test) = synth::generate_dataset(&self.generator()?, &self.truth())?;
            return Ok(Splits {
                train,
                dev,
                test: Some(test),
                inputs: Vec::new(),
            });
        }
        Err(Error::Config(
            "no data: give `data.train`/`data.dev`, `data.source`, or a synthetic generator".into(),
        ))
    }

    /// The model to train, built from `[model]` against the data schema.
    pub fn template(&self) -> Result<ModelTemplate> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("`[model]` is required for this command".into()))?;
        let schema = self.ingest()?.schema();
        let mut t = match (&m.utility, &m.preset) {
            (Some(u), _) => ModelTemplate::new(schema.clone(), UtilitySpec::parse(u, &schema)?),
            (None, Some(name)) => match self.data_preset() {
                Some(DataPreset::Synthetic) => {
                    let model: SyntheticModel = preset_name(name, "synthetic")?;
                    let mut t = presets::synthetic_template(model)?;
                    if let Some(net) = &mut t.network {
                        *net = presets::synthetic_network(
                            m.hidden.unwrap_or(net.hidden_sizes[0]),
                            m.activation.unwrap_or(Activation::Relu),
                        );
                    }
                    t
                }
                Some(DataPreset::Swissmetro) => presets::swissmetro_template(
                    preset_name::<SwissmetroModel>(name, "Swissmetro")?,
                    m.hidden.unwrap_or(presets::SWISSMETRO_HIDDEN),
                    m.activation.unwrap_or(Activation::Relu),
                )?,
                None => return Err(Error::Config("model presets need `data.preset`".into())),
            },
            (None, None) => return Err(Error::Config("`[model]` needs `preset` or `utility`".into())),
        };
        if !t.schema.same_layout(&schema) {
            return Err(Error::Config("the model preset does not match the data schema".into()));
        }
        t.schema = schema;
        if let Some(net) = &m.network {
            t.network = Some(net.clone());
        }
        if let Some(rcl) = &m.rcl {
            t.rcl = Some(rcl.clone());
        }
        t.init_beta = m.init_beta.clone();
        if t.network.as_ref().map_or(0, MlpSpec::n_outputs) != t.utility.n_net() {
            return Err(Error::Config(format!(
                "the utility uses {} network outputs but the network has {}",
                t.utility.n_net(),
                t.network.as_ref().map_or(0, MlpSpec::n_outputs)
            )));
        }
        Ok(t)
    }
}
