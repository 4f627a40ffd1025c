use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::indicators::classification_metrics;
use crate::model::FittedModel;
use crate::nn::{Activation, MlpSpec, OutputTransform};

use super::{train_single, ModelTemplate, TrainConfig};

/// Hyperparameter lists whose Cartesian product is searched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub hidden_sizes: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
    /// Replaces the transform of every template output that is not
    /// `Identity`, so sign-constrained outputs stay constrained.
    pub constrained_transforms: Vec<OutputTransform>,
    pub reg_norms: Vec<u8>,
    pub reg_strengths: Vec<f64>,
}

impl GridSpace {
    fn lists_nonempty(&self) -> bool {
        !(self.hidden_sizes.is_empty()
            || self.activations.is_empty()
            || self.constrained_transforms.is_empty()
            || self.reg_norms.is_empty()
            || self.reg_strengths.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config_id: usize,
    /// Hidden sizes joined with `-`; empty for no hidden layer.
    pub hidden_sizes: String,
    pub activation: Activation,
    pub constrained_transform: OutputTransform,
    pub reg_norm: u8,
    pub reg_strength: f64,
    pub restart: usize,
    pub seed: u64,
    pub train_nll: Option<f64>,
    pub dev_nll: Option<f64>,
    pub train_acc: Option<f64>,
    pub dev_acc: Option<f64>,
    pub epochs_run: Option<usize>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct GridResult {
    /// In search order: configurations outer, restarts inner.
    pub rows: Vec<GridRow>,
    /// Row indices sorted by dev NLL, failed runs last.
    pub ranking: Vec<usize>,
    pub best: Option<FittedModel>,
}

impl GridResult {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r).map_err(crate::indicators::csv_err)?;
        }
        wtr.flush().map_err(|e| Error::Serde(e.to_string()))
    }
}

struct Combo {
    id: usize,
    hidden: Vec<usize>,
    activation: Activation,
    transform: OutputTransform,
    reg_norm: u8,
    reg_strength: f64,
}

/// Trains every configuration of `space` with `cfg.restarts` seeded runs
/// each, on `threads` workers (0 = all cores). The template must carry a
/// network spec whose output transforms mark the constrained outputs.
pub fn grid_search(
    template: &ModelTemplate,
    space: &GridSpace,
    train: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
    threads: usize,
) -> Result<GridResult> {
    let base = template
        .network
        .as_ref()
        .ok_or_else(|| Error::Argument("grid search needs a network template".into()))?;
    if !space.lists_nonempty() {
        return Err(Error::Argument("every grid dimension needs at least one value".into()));
    }
    cfg.validate()?;

    let mut combos = Vec::new();
    for hidden in &space.hidden_sizes {
        for &activation in &space.activations {
            for &transform in &space.constrained_transforms {
                for &reg_norm in &space.reg_norms {
                    for &reg_strength in &space.reg_strengths {
                        combos.push(Combo {
                            id: combos.len(),
                            hidden: hidden.clone(),
                            activation,
                            transform,
                            reg_norm,
                            reg_strength,
                        });
                    }
                }
            }
        }
    }
    let jobs: Vec<(&Combo, usize)> = combos
        .iter()
        .flat_map(|c| (0..cfg.restarts).map(move |r| (c, r)))
        .collect();

    let run = |&(c, r): &(&Combo, usize)| -> (GridRow, Option<FittedModel>) {
        let transforms = base
            .output_transforms
            .iter()
            .map(|t| if *t == OutputTransform::Identity { *t } else { c.transform })
            .collect();
        let mut t = template.clone();
        t.network = Some(MlpSpec::new(c.hidden.clone(), c.activation, transforms));
        let run_cfg = TrainConfig {
            reg_norm: c.reg_norm,
            reg_strength: c.reg_strength,
            restarts: 1,
            ..cfg.clone()
        };
        let seed = cfg.restart_seed(r);
        let mut row = GridRow {
            config_id: c.id,
            hidden_sizes: c.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
            activation: c.activation,
            constrained_transform: c.transform,
            reg_norm: c.reg_norm,
            reg_strength: c.reg_strength,
            restart: r,
            seed,
            train_nll: None,
            dev_nll: None,
            train_acc: None,
            dev_acc: None,
            epochs_run: None,
            best_epoch: None,
            error: None,
        };
        let outcome = train_single(&t, train, dev, &run_cfg, seed).and_then(|m| {
            let tr = classification_metrics(&m, train)?;
            let dv = classification_metrics(&m, dev)?;
            Ok((m, tr, dv))
        });
        match outcome {
            Ok((mut m, tr, dv)) => {
                let rec = m.training.as_mut().expect("training record");
                rec.restart = r;
                row.train_nll = Some(tr.nll);
                row.dev_nll = Some(dv.nll);
                row.train_acc = Some(tr.acc);
                row.dev_acc = Some(dv.acc);
                row.epochs_run = Some(rec.epochs_run);
                row.best_epoch = Some(rec.best_epoch);
                (row, Some(m))
            }
            Err(e) => {
                row.error = Some(e.to_string());
                (row, None)
            }
        }
    };

    let results: Vec<(GridRow, Option<FittedModel>)> = if threads == 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Argument(format!("cannot build worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };

    let mut ranking: Vec<usize> = (0..results.len()).collect();
    let key = |i: &usize| results[*i].0.dev_nll.unwrap_or(f64::INFINITY);
    ranking.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
    let best = ranking
        .first()
        .and_then(|&i| results[i].1.clone());
    let rows = results.into_iter().map(|(r, _)| r).collect();
    Ok(GridResult { rows, ranking, best })
}
