//! Regularized negative log-likelihood and its exact gradient.
//!
//! Parameters are handled as one flat vector: network parameters (per layer,
//! weights then biases), then the parametric coefficients, then `log σ` for a
//! random-coefficient model.

use rayon::prelude::*;

use crate::choice::softmax_into;
use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::model::{log_mean_exp, FittedModel};
use crate::nn::{backward_accumulate, forward_into, ForwardCache, MlpParams};

use super::TrainConfig;

/// Lower bound on `log σ`; at this value the mixture equals the plain logit
/// to well below 1e-10.
pub const LOG_SIGMA_MIN: f64 = -40.0;

pub fn n_free(model: &FittedModel) -> usize {
    model.network.as_ref().map_or(0, |n| n.params.n_params())
        + model.beta.len()
        + usize::from(model.random.is_some())
}

pub fn flat_params(model: &FittedModel) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_free(model));
    if let Some(net) = &model.network {
        out.extend(net.params.values());
    }
    out.extend(&model.beta);
    if let Some(r) = &model.random {
        out.push(r.log_sigma);
    }
    out
}

pub fn set_flat_params(model: &mut FittedModel, theta: &[f64]) {
    let mut it = theta.iter();
    if let Some(net) = &mut model.network {
        for (p, v) in net.params.values_mut().zip(&mut it) {
            *p = *v;
        }
    }
    for (b, v) in model.beta.iter_mut().zip(&mut it) {
        *b = *v;
    }
    if let Some(r) = &mut model.random {
        r.log_sigma = *it.next().expect("flat vector covers log sigma");
    }
}

fn weight_penalty(w: f64, cfg: &TrainConfig) -> f64 {
    match cfg.reg_norm {
        1 => w.abs(),
        _ => w * w,
    }
}

/// `λ Σ|w|^p` over the network weights; biases and parametric
/// coefficients are not penalized.
pub fn penalty(model: &FittedModel, cfg: &TrainConfig) -> f64 {
    let Some(net) = &model.network else { return 0.0 };
    if cfg.reg_strength == 0.0 {
        return 0.0;
    }
    let s: f64 = net
        .params
        .layers
        .iter()
        .flat_map(|l| &l.weights)
        .map(|w| weight_penalty(*w, cfg))
        .sum();
    cfg.reg_strength * s
}

fn add_penalty_grad(params: &MlpParams, cfg: &TrainConfig, grad: &mut [f64]) {
    if cfg.reg_strength == 0.0 {
        return;
    }
    let mut offset = 0;
    for layer in &params.layers {
        for (g, w) in grad[offset..].iter_mut().zip(&layer.weights) {
            *g += match cfg.reg_norm {
                1 => {
                    if *w == 0.0 {
                        0.0
                    } else {
                        cfg.reg_strength * w.signum()
                    }
                }
                _ => 2.0 * cfg.reg_strength * w,
            };
        }
        offset += layer.weights.len() + layer.bias.len();
    }
}

/// Per-observation random-coefficient state.
pub(crate) struct Mixing {
    pub slots: Vec<Option<usize>>,
    pub draws: Vec<Vec<f64>>,
}

impl Mixing {
    pub fn for_data(model: &FittedModel, data: &Dataset) -> Result<Option<Self>> {
        let Some(r) = &model.random else { return Ok(None) };
        Ok(Some(Self {
            slots: r.attribute_slots(&model.schema)?,
            draws: (0..data.len()).into_par_iter().map(|n| r.draws_for(n)).collect(),
        }))
    }
}

/// Scratch buffers reused across observations.
#[derive(Default)]
struct Scratch {
    cache: ForwardCache,
    v: Vec<f64>,
    vr: Vec<f64>,
    p: Vec<f64>,
    gv: Vec<f64>,
    g_net: Vec<f64>,
    lps: Vec<f64>,
    probs: Vec<f64>,
}

/// Log-probability of the chosen alternative and, when `want_grad`, the
/// gradient of `-log P` w.r.t. utilities (into `s.gv`) and `log σ`.
fn observation_terms(
    model: &FittedModel,
    obs: &Observation,
    draws: Option<(&[Option<usize>], &[f64])>,
    s: &mut Scratch,
    want_grad: bool,
) -> Result<(f64, f64)> {
    let j = obs.x.len();
    let beta_net = match &model.network {
        Some(net) => forward_into(&net.params, &net.spec, &obs.z, &mut s.cache),
        None => Vec::new(),
    };
    s.v.resize(j, 0.0);
    s.p.resize(j, 0.0);
    s.gv.clear();
    s.gv.resize(j, 0.0);
    model.utility.utilities_into(&beta_net, &model.beta, obs, &mut s.v);

    let Some((slots, eps)) = draws else {
        let (log_sum, max) = softmax_into(&s.v, &obs.available, &mut s.p)?;
        if want_grad {
            for i in 0..j {
                s.gv[i] = s.p[i] - f64::from(u8::from(i == obs.chosen));
            }
        }
        return Ok((s.v[obs.chosen] - max - log_sum, 0.0));
    };

    let sigma = model.random.as_ref().map_or(0.0, |r| r.sigma());
    let r = eps.len();
    s.vr.resize(j, 0.0);
    s.lps.clear();
    s.probs.clear();
    s.probs.reserve(r * j);
    for &e in eps {
        for i in 0..j {
            s.vr[i] = s.v[i] + slots[i].map_or(0.0, |k| sigma * e * obs.x[i][k]);
        }
        let (log_sum, max) = softmax_into(&s.vr, &obs.available, &mut s.p)?;
        s.lps.push(s.vr[obs.chosen] - max - log_sum);
        s.probs.extend_from_slice(&s.p);
    }
    let lp = log_mean_exp(&s.lps);
    let mut g_log_sigma = 0.0;
    if want_grad {
        // weight of draw r in the mixture posterior: P_r(y) / Σ_r P_r(y)
        let log_total = lp + (r as f64).ln();
        for (k, &e) in eps.iter().enumerate() {
            let w = (s.lps[k] - log_total).exp();
            let pk = &s.probs[k * j..(k + 1) * j];
            for i in 0..j {
                if !obs.available[i] {
                    continue;
                }
                let g = w * (pk[i] - f64::from(u8::from(i == obs.chosen)));
                s.gv[i] += g;
                if let Some(a) = slots[i] {
                    g_log_sigma += g * e * obs.x[i][a] * sigma;
                }
            }
        }
    }
    Ok((lp, g_log_sigma))
}

/// Mean NLL and its gradient over `indices`, plus the penalty term.
pub(crate) fn loss_and_grad(
    model: &FittedModel,
    data: &Dataset,
    indices: &[usize],
    mixing: Option<&Mixing>,
    cfg: &TrainConfig,
    grad: &mut Vec<f64>,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let n_net_params = model.network.as_ref().map_or(0, |n| n.params.n_params());
    let n_beta = model.beta.len();
    grad.clear();
    grad.resize(n_free(model), 0.0);

    let mut net_grads = model.network.as_ref().map(|n| n.params.zeros_like());
    let mut s = Scratch::default();
    let inv_b = 1.0 / indices.len() as f64;
    let mut nll = 0.0;
    let mut g_log_sigma = 0.0;
    let mut g_param = vec![0.0; n_beta];
    for &n in indices {
        let obs = &data.observations[n];
        let draws = mixing.map(|m| (m.slots.as_slice(), m.draws[n].as_slice()));
        let (lp, gs) = observation_terms(model, obs, draws, &mut s, true)?;
        if !lp.is_finite() {
            return Err(Error::Training(format!(
                "non-finite log-likelihood {lp} at observation {n}"
            )));
        }
        nll -= lp * inv_b;
        g_log_sigma += gs * inv_b;
        for g in &mut s.gv {
            *g *= inv_b;
        }
        s.g_net.clear();
        s.g_net.resize(model.utility.n_net(), 0.0);
        model
            .utility
            .accumulate_coef_grads(obs, &s.gv, &mut s.g_net, &mut g_param);
        if let (Some(net), Some(ng)) = (&model.network, net_grads.as_mut()) {
            backward_accumulate(&net.params, &net.spec, &s.cache, &s.g_net, ng)?;
        }
    }

    if let (Some(net), Some(ng)) = (&model.network, &net_grads) {
        for (g, v) in grad.iter_mut().zip(ng.values()) {
            *g = *v;
        }
        add_penalty_grad(&net.params, cfg, &mut grad[..n_net_params]);
    }
    grad[n_net_params..n_net_params + n_beta].copy_from_slice(&g_param);
    if model.random.is_some() {
        grad[n_net_params + n_beta] = g_log_sigma;
    }
    Ok(nll + penalty(model, cfg))
}

/// Mean NLL over a whole dataset, without penalty. Observations are
/// evaluated in parallel and summed in index order.
pub(crate) fn mean_nll(model: &FittedModel, data: &Dataset, mixing: Option<&Mixing>) -> Result<f64> {
    let lps: Vec<f64> = data
        .observations
        .par_iter()
        .enumerate()
        .map_init(Scratch::default, |s, (n, obs)| {
            let draws = mixing.map(|m| (m.slots.as_slice(), m.draws[n].as_slice()));
            observation_terms(model, obs, draws, s, false).map(|(lp, _)| lp)
        })
        .collect::<Result<_>>()?;
    let total: f64 = lps.iter().sum();
    Ok(-total / data.len() as f64)
}

/// Regularized loss over `indices` of `data` and its gradient in flat
/// parameter order (see [`flat_params`]).
pub fn regularized_loss(
    model: &FittedModel,
    data: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    model.check_compatible(data)?;
    if let Some(&bad) = indices.iter().find(|&&n| n >= data.len()) {
        return Err(Error::Argument(format!("batch index {bad} out of range")));
    }
    let mixing = Mixing::for_data(model, data)?;
    let mut grad = Vec::new();
    let loss = loss_and_grad(model, data, indices, mixing.as_ref(), cfg, &mut grad)?;
    Ok((loss, grad))
}
