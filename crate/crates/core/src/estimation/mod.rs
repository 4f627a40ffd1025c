//! Regularized maximum-likelihood estimation.
//!
//! TasteNet-MNL, plain MNL and the random-coefficient logit share one
//! training loop: mini-batch Adam on the mean negative log-likelihood plus a
//! p-norm penalty on the network parameters, with early stopping on the dev
//! split and seeded restarts.

mod adam;
mod grid;
mod objective;
mod train;

pub use adam::Adam;
pub use grid::{grid_search, GridResult, GridRow, GridSpace};
pub use objective::{flat_params, n_free, penalty, regularized_loss, set_flat_params, LOG_SIGMA_MIN};
pub use train::{train, train_single};

use serde::{Deserialize, Serialize};

use crate::choice::UtilitySpec;
use crate::data::{Dataset, FeatureSchema};
use crate::draws::DrawScheme;
use crate::error::{Error, Result};
use crate::model::{FittedModel, ModelKind, RandomCoefficient};
use crate::nn::{self, MlpSpec, Network};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev-NLL improvement before stopping.
    pub patience: usize,
    /// 1 or 2.
    pub reg_norm: u8,
    pub reg_strength: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Abort when any parameter exceeds this magnitude.
    pub max_param_abs: f64,
    /// Abort when the training NLL drops below this value: the likelihood
    /// is saturating and some coefficient is running off to infinity.
    pub min_train_nll: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            patience: 20,
            reg_norm: 2,
            reg_strength: 0.0,
            seed: 0,
            restarts: 5,
            max_param_abs: 1e3,
            min_train_nll: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if !matches!(self.reg_norm, 1 | 2) {
            return bad("reg_norm must be 1 or 2");
        }
        if !(self.reg_strength >= 0.0 && self.reg_strength.is_finite()) {
            return bad("reg_strength must be nonnegative");
        }
        if !(self.max_param_abs > 0.0) {
            return bad("max_param_abs must be positive");
        }
        Ok(())
    }

    /// Seed of restart `r`.
    pub fn restart_seed(&self, r: usize) -> u64 {
        rng::sub_seed(self.seed, 1000 + r as u64)
    }
}

/// Random-coefficient settings. The mean of the coefficient is whatever the
/// utility spec attaches to the attribute, e.g. `param:b0 * time` plus
/// `param:b1 * inc * time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RclSpec {
    pub attribute: String,
    pub draws: usize,
    pub scheme: DrawScheme,
    pub init_sigma: f64,
}

impl Default for RclSpec {
    fn default() -> Self {
        Self {
            attribute: "time".into(),
            draws: 200,
            scheme: DrawScheme::Halton,
            init_sigma: 0.1,
        }
    }
}

/// Everything needed to initialize a model before training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    pub schema: FeatureSchema,
    pub utility: UtilitySpec,
    #[serde(default)]
    pub network: Option<MlpSpec>,
    #[serde(default)]
    pub rcl: Option<RclSpec>,
    /// Starting values of the parametric coefficients; zeros when empty.
    #[serde(default)]
    pub init_beta: Vec<f64>,
}

impl ModelTemplate {
    pub fn new(schema: FeatureSchema, utility: UtilitySpec) -> Self {
        Self {
            schema,
            utility,
            network: None,
            rcl: None,
            init_beta: Vec::new(),
        }
    }

    pub fn with_network(mut self, spec: MlpSpec) -> Self {
        self.network = Some(spec);
        self
    }

    pub fn with_rcl(mut self, rcl: RclSpec) -> Self {
        self.rcl = Some(rcl);
        self
    }

    pub fn kind(&self) -> ModelKind {
        match (&self.network, &self.rcl) {
            (_, Some(_)) => ModelKind::Rcl,
            (Some(_), None) => ModelKind::TasteNet,
            (None, None) => ModelKind::Mnl,
        }
    }

    /// Model with freshly initialized parameters.
    pub fn instantiate(&self, seed: u64) -> Result<FittedModel> {
        let network = match &self.network {
            Some(spec) => {
                let params = nn::init_params(spec, self.schema.n_characteristics(), seed)?;
                Some(Network::new(spec.clone(), params)?)
            }
            None => None,
        };
        let beta = if self.init_beta.is_empty() {
            vec![0.0; self.utility.n_params()]
        } else {
            self.init_beta.clone()
        };
        let random = match &self.rcl {
            Some(r) => {
                if r.draws == 0 {
                    return Err(Error::Argument("RCL needs at least one draw".into()));
                }
                if !(r.init_sigma > 0.0) {
                    return Err(Error::Argument("initial sigma must be positive".into()));
                }
                Some(RandomCoefficient {
                    attribute: r.attribute.clone(),
                    log_sigma: r.init_sigma.ln(),
                    draws: r.draws,
                    scheme: r.scheme,
                    seed: rng::sub_seed(seed, rng::streams::DRAWS),
                })
            }
            None => None,
        };
        FittedModel::new(self.kind(), self.schema.clone(), self.utility.clone(), network, beta, random)
    }
}

/// Plain MNL: the utility spec must not reference network outputs.
pub fn estimate_mnl(
    schema: &FeatureSchema,
    utility: &UtilitySpec,
    train_data: &Dataset,
    dev_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    if utility.n_net() > 0 {
        return Err(Error::Spec("an MNL spec cannot use network outputs".into()));
    }
    train(&ModelTemplate::new(schema.clone(), utility.clone()), train_data, dev_data, cfg)
}

/// Random-coefficient logit by simulated maximum likelihood.
pub fn estimate_rcl(
    schema: &FeatureSchema,
    utility: &UtilitySpec,
    rcl: &RclSpec,
    train_data: &Dataset,
    dev_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    if utility.n_net() > 0 {
        return Err(Error::Spec("an RCL spec cannot use network outputs".into()));
    }
    let template = ModelTemplate::new(schema.clone(), utility.clone()).with_rcl(rcl.clone());
    train(&template, train_data, dev_data, cfg)
}

#[cfg(test)]
mod tests;
