//! Fitted models and their likelihood on a dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{self, ChoiceOutput, UtilitySpec};
use crate::data::{Dataset, FeatureSchema, Observation};
use crate::draws::{self, DrawScheme};
use crate::error::{Error, Result};
use crate::estimation::TrainConfig;
use crate::nn::Network;

pub const MODEL_FORMAT: &str = "tastenet-model/v1";

/// Floor applied to probabilities before taking logs in [`dataset_nll`].
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TasteNet,
    Mnl,
    Rcl,
    /// Data-generating model with fixed coefficients.
    Truth,
}

/// Normally distributed coefficient added to one attribute in every
/// alternative that has it: `β_n = μ(z_n) + σ·ε_n`, with `μ` given by the
/// utility spec and `σ = exp(log_sigma)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomCoefficient {
    pub attribute: String,
    pub log_sigma: f64,
    pub draws: usize,
    pub scheme: DrawScheme,
    pub seed: u64,
}

impl RandomCoefficient {
    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// Attribute index of the random coefficient per alternative.
    pub fn attribute_slots(&self, schema: &FeatureSchema) -> Result<Vec<Option<usize>>> {
        let slots: Vec<Option<usize>> = schema
            .alternatives
            .iter()
            .map(|a| a.attribute_index(&self.attribute))
            .collect();
        if slots.iter().all(Option::is_none) {
            return Err(Error::Spec(format!(
                "random coefficient attribute `{}` is not an attribute of any alternative",
                self.attribute
            )));
        }
        Ok(slots)
    }

    pub fn draws_for(&self, obs_index: usize) -> Vec<f64> {
        draws::normal_draws(self.scheme, self.seed, obs_index, self.draws)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub dev_nll: f64,
}

/// How the parameters were obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config: TrainConfig,
    /// Restart that produced the kept parameters.
    pub restart: usize,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; 0 means the initial values.
    pub best_epoch: usize,
    pub best_dev_nll: f64,
    pub epochs_run: usize,
    /// Best dev NLL of every restart, in restart order; `None` for a
    /// restart that failed.
    pub restart_dev_nll: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format: String,
    pub kind: ModelKind,
    pub schema: FeatureSchema,
    pub utility: UtilitySpec,
    #[serde(default)]
    pub network: Option<Network>,
    /// Parametric coefficients aligned with `utility.params`.
    pub beta: Vec<f64>,
    #[serde(default)]
    pub random: Option<RandomCoefficient>,
    #[serde(default)]
    pub training: Option<TrainingRecord>,
}

/// Mean negative log-likelihood together with the observations whose
/// chosen probability fell below [`PROB_FLOOR`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NllSummary {
    pub nll: f64,
    pub clamped: Vec<usize>,
}

impl FittedModel {
    pub fn new(
        kind: ModelKind,
        schema: FeatureSchema,
        utility: UtilitySpec,
        network: Option<Network>,
        beta: Vec<f64>,
        random: Option<RandomCoefficient>,
    ) -> Result<Self> {
        let m = Self {
            format: MODEL_FORMAT.into(),
            kind,
            schema,
            utility,
            network,
            beta,
            random,
            training: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Serde(format!(
                "unsupported model format `{}` (expected `{MODEL_FORMAT}`)",
                self.format
            )));
        }
        self.schema.validate()?;
        self.utility.validate(&self.schema)?;
        if self.beta.len() != self.utility.n_params() {
            return Err(Error::Spec(format!(
                "{} parametric coefficients for {} names",
                self.beta.len(),
                self.utility.n_params()
            )));
        }
        match (&self.network, self.utility.n_net()) {
            (None, 0) => {}
            (None, k) => {
                return Err(Error::Spec(format!("utility uses {k} network outputs but the model has no network")))
            }
            (Some(net), k) => {
                if net.spec.n_outputs() != k {
                    return Err(Error::Shape(format!(
                        "network has {} outputs, utility uses {k}",
                        net.spec.n_outputs()
                    )));
                }
                if net.params.input_dim() != self.schema.n_characteristics() {
                    return Err(Error::Shape(format!(
                        "network input dimension {} differs from {} characteristics",
                        net.params.input_dim(),
                        self.schema.n_characteristics()
                    )));
                }
            }
        }
        if let Some(r) = &self.random {
            if r.draws == 0 {
                return Err(Error::Spec("random coefficient needs at least one draw".into()));
            }
            r.attribute_slots(&self.schema)?;
        }
        Ok(())
    }

    /// Checks that `data` uses the same layout as the training data.
    pub fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if !self.schema.same_layout(&data.schema) {
            return Err(Error::Schema("dataset layout differs from the model's schema".into()));
        }
        Ok(())
    }

    /// Network-predicted coefficients for one person (empty without a network).
    pub fn net_tastes(&self, z: &[f64]) -> Vec<f64> {
        self.network.as_ref().map_or_else(Vec::new, |n| n.predict(z))
    }

    /// Evaluates one observation. `obs_index` selects the simulation draws
    /// of a random-coefficient model and is ignored otherwise.
    pub fn choice_output(&self, obs: &Observation, obs_index: usize) -> Result<ChoiceOutput> {
        let beta_net = self.net_tastes(&obs.z);
        let Some(random) = &self.random else {
            return choice::evaluate(&self.utility, &beta_net, &self.beta, obs);
        };
        let slots = random.attribute_slots(&self.schema)?;
        let eps = random.draws_for(obs_index);
        let utilities = self.utility.systematic_utility(&beta_net, &self.beta, obs)?;
        let base: Vec<f64> = utilities.iter().map(|u| u.unwrap_or(0.0)).collect();
        Ok(mixed_output(&base, obs, &slots, random.sigma(), &eps, utilities))
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<ChoiceOutput>> {
        self.check_compatible(data)?;
        data.observations
            .par_iter()
            .enumerate()
            .map(|(n, obs)| self.choice_output(obs, n))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    /// SHA-256 of the serialized model, used in run metadata.
    pub fn content_hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

/// Simulated probabilities `(1/R) Σ_r softmax(V + σ ε_r x_attr)`.
fn mixed_output(
    base: &[f64],
    obs: &Observation,
    slots: &[Option<usize>],
    sigma: f64,
    eps: &[f64],
    utilities: Vec<Option<f64>>,
) -> ChoiceOutput {
    let j = base.len();
    let mut v = vec![0.0; j];
    let mut p = vec![0.0; j];
    let mut mean_p = vec![0.0; j];
    let mut log_terms = Vec::with_capacity(eps.len());
    for &e in eps {
        for i in 0..j {
            v[i] = base[i] + slots[i].map_or(0.0, |k| sigma * e * obs.x[i][k]);
        }
        let (log_sum, max) = choice::softmax_into(&v, &obs.available, &mut p).expect("validated observation");
        for (m, q) in mean_p.iter_mut().zip(&p) {
            *m += q;
        }
        log_terms.push(v[obs.chosen] - max - log_sum);
    }
    let r = eps.len() as f64;
    for m in &mut mean_p {
        *m /= r;
    }
    ChoiceOutput {
        utilities,
        probabilities: mean_p,
        chosen_logprob: log_mean_exp(&log_terms),
    }
}

pub(crate) fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + (xs.iter().map(|x| (x - max).exp()).sum::<f64>() / xs.len() as f64).ln()
}

/// Mean negative log-likelihood of `model` on `data`.
pub fn dataset_nll(model: &FittedModel, data: &Dataset) -> Result<NllSummary> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate the likelihood of an empty dataset".into()));
    }
    let outputs = model.predict(data)?;
    let floor = PROB_FLOOR.ln();
    let mut clamped = Vec::new();
    let mut total = 0.0;
    for (n, out) in outputs.iter().enumerate() {
        let lp = if out.chosen_logprob < floor || out.chosen_logprob.is_nan() {
            clamped.push(n);
            floor
        } else {
            out.chosen_logprob
        };
        total -= lp;
    }
    Ok(NllSummary {
        nll: total / data.len() as f64,
        clamped,
    })
}
