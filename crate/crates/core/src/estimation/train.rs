use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{EpochRecord, FittedModel, TrainingRecord};
use crate::rng::{self, streams};

use super::objective::{flat_params, loss_and_grad, mean_nll, set_flat_params, Mixing, LOG_SIGMA_MIN};
use super::{Adam, ModelTemplate, TrainConfig};

/// Consecutive epochs above the blow-up threshold before aborting.
const BLOWUP_EPOCHS: usize = 3;
const BLOWUP_FACTOR: f64 = 10.0;

fn check_inputs(template: &ModelTemplate, train: &Dataset, dev: &Dataset, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Data("training and dev data must be nonempty".into()));
    }
    if !template.init_beta.is_empty() && template.init_beta.len() != template.utility.n_params() {
        return Err(Error::Spec("init_beta length does not match the parametric coefficients".into()));
    }
    template.utility.validate(&template.schema)?;
    Ok(())
}

/// One training run from the initialization given by `seed`.
pub fn train_single(template: &ModelTemplate, train: &Dataset, dev: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<FittedModel> {
    check_inputs(template, train, dev, cfg)?;
    let mut model = template.instantiate(seed)?;
    model.check_compatible(train)?;
    model.check_compatible(dev)?;

    let train_mix = Mixing::for_data(&model, train)?;
    let dev_mix = Mixing::for_data(&model, dev)?;
    let sigma_slot = model.random.as_ref().map(|_| super::n_free(&model) - 1);

    let mut theta = flat_params(&model);
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    let mut shuffle_rng = rng::stream(seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = Vec::new();

    let initial_train = mean_nll(&model, train, train_mix.as_ref())?;
    let initial_dev = mean_nll(&model, dev, dev_mix.as_ref())?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_nll: initial_train,
        dev_nll: initial_dev,
    }];
    let mut best = (initial_dev, 0usize, theta.clone());
    let mut since_best = 0;
    let mut blowup = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            loss_and_grad(&model, train, batch, train_mix.as_ref(), cfg, &mut grad)?;
            adam.step(&mut theta, &grad);
            if let Some(k) = sigma_slot {
                theta[k] = theta[k].max(LOG_SIGMA_MIN);
            }
            if let Some((i, v)) = theta
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.abs() <= cfg.max_param_abs))
            {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!(
                        "parameter {i} reached {v:e}, beyond the bound {:e}",
                        cfg.max_param_abs
                    ),
                });
            }
            set_flat_params(&mut model, &theta);
        }
        epochs_run = epoch;

        let train_nll = mean_nll(&model, train, train_mix.as_ref())?;
        let dev_nll = mean_nll(&model, dev, dev_mix.as_ref())?;
        history.push(EpochRecord {
            epoch,
            train_nll,
            dev_nll,
        });
        if !train_nll.is_finite() || !dev_nll.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("non-finite NLL (train {train_nll}, dev {dev_nll})"),
            });
        }
        if train_nll < cfg.min_train_nll {
            return Err(Error::Diverged {
                epoch,
                reason: format!(
                    "training NLL {train_nll:e} is saturating; the data are perfectly separated and the estimates are unbounded"
                ),
            });
        }
        blowup = if train_nll > BLOWUP_FACTOR * initial_train { blowup + 1 } else { 0 };
        if blowup >= BLOWUP_EPOCHS {
            return Err(Error::Diverged {
                epoch,
                reason: format!(
                    "training NLL {train_nll} above {BLOWUP_FACTOR}x the initial {initial_train} for {BLOWUP_EPOCHS} epochs"
                ),
            });
        }

        if dev_nll < best.0 {
            best = (dev_nll, epoch, theta.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    set_flat_params(&mut model, &best.2);
    model.training = Some(TrainingRecord {
        config: cfg.clone(),
        restart: 0,
        seed,
        history,
        best_epoch: best.1,
        best_dev_nll: best.0,
        epochs_run,
        restart_dev_nll: vec![Some(best.0)],
    });
    Ok(model)
}

/// Trains `cfg.restarts` seeded runs and keeps the one with the lowest dev
/// NLL. Failed restarts are skipped; if all fail, the first error is
/// returned.
pub fn train(template: &ModelTemplate, train: &Dataset, dev: &Dataset, cfg: &TrainConfig) -> Result<FittedModel> {
    check_inputs(template, train, dev, cfg)?;
    let mut best: Option<FittedModel> = None;
    let mut first_err = None;
    let mut per_restart = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        match train_single(template, train, dev, cfg, cfg.restart_seed(r)) {
            Ok(mut m) => {
                let rec = m.training.as_mut().expect("training record");
                rec.restart = r;
                per_restart.push(Some(rec.best_dev_nll));
                let better = best
                    .as_ref()
                    .is_none_or(|b| rec.best_dev_nll < b.training.as_ref().expect("record").best_dev_nll);
                if better {
                    best = Some(m);
                }
            }
            Err(e) => {
                per_restart.push(None);
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(mut m) => {
            m.training.as_mut().expect("record").restart_dev_nll = per_restart;
            Ok(m)
        }
        None => Err(first_err.expect("at least one restart ran")),
    }
}
