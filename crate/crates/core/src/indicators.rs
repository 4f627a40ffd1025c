//! Post-estimation indicators: tastes, values of time, elasticities,
//! taste-recovery regression, error and classification metrics, hidden-unit
//! probes and what-if sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{Coef, Factor};
use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::model::{dataset_nll, FittedModel};
use crate::nn;
use crate::ols;
use crate::synth;

/// Relative step of the central difference used for numeric elasticities.
pub const FD_REL_STEP: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent; `None` when every truth value is zero.
    pub mape: Option<f64>,
    pub n: usize,
    /// Entries left out of the MAPE because their truth value is zero.
    pub mape_excluded: usize,
}

pub fn error_metrics(estimates: &[f64], truth: &[f64]) -> Result<ErrorMetrics> {
    if estimates.len() != truth.len() {
        return Err(Error::Argument(format!(
            "{} estimates vs {} truth values",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::Argument("error metrics need at least one value".into()));
    }
    let n = estimates.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut used = 0usize;
    for (e, t) in estimates.iter().zip(truth) {
        let d = e - t;
        sq += d * d;
        abs += d.abs();
        if *t != 0.0 {
            pct += (d / t).abs();
            used += 1;
        }
    }
    Ok(ErrorMetrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: (used > 0).then(|| 100.0 * pct / used as f64),
        n: estimates.len(),
        mape_excluded: estimates.len() - used,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub nll: f64,
    pub acc: f64,
    /// Macro one-vs-rest F1 over alternatives that are chosen or predicted
    /// at least once; predictions are restricted to available alternatives.
    pub macro_f1: f64,
    pub n: usize,
    /// Observations whose chosen probability was clamped in the NLL.
    pub clamped: usize,
}

/// Index of the most probable available alternative, lowest index on ties.
pub fn predicted_alternative(probabilities: &[f64], available: &[bool]) -> usize {
    let mut best = None;
    for (i, (&p, &a)) in probabilities.iter().zip(available).enumerate() {
        if a && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((i, p));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Accuracy and macro F1 from predicted and chosen indices.
pub fn accuracy_f1(predicted: &[usize], chosen: &[usize], n_alternatives: usize) -> (f64, f64) {
    let mut tp = vec![0usize; n_alternatives];
    let mut fp = vec![0usize; n_alternatives];
    let mut fneg = vec![0usize; n_alternatives];
    let mut hits = 0;
    for (&p, &c) in predicted.iter().zip(chosen) {
        if p == c {
            hits += 1;
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[c] += 1;
        }
    }
    let mut f1_sum = 0.0;
    let mut classes = 0;
    for j in 0..n_alternatives {
        let denom = 2 * tp[j] + fp[j] + fneg[j];
        if denom > 0 {
            f1_sum += 2.0 * tp[j] as f64 / denom as f64;
            classes += 1;
        }
    }
    let acc = hits as f64 / predicted.len().max(1) as f64;
    (acc, if classes > 0 { f1_sum / classes as f64 } else { 0.0 })
}

pub fn classification_metrics(model: &FittedModel, data: &Dataset) -> Result<ClassificationMetrics> {
    let nll = dataset_nll(model, data)?;
    let outputs = model.predict(data)?;
    let predicted: Vec<usize> = outputs
        .iter()
        .zip(&data.observations)
        .map(|(o, obs)| predicted_alternative(&o.probabilities, &obs.available))
        .collect();
    let chosen: Vec<usize> = data.observations.iter().map(|o| o.chosen).collect();
    let (acc, macro_f1) = accuracy_f1(&predicted, &chosen, data.schema.n_alternatives());
    Ok(ClassificationMetrics {
        nll: nll.nll,
        acc,
        macro_f1,
        n: data.len(),
        clamped: nll.clamped.len(),
    })
}

fn attribute_of(model: &FittedModel, alt: &str, attr: &str) -> Result<(usize, usize)> {
    let i = model
        .schema
        .alternative_index(alt)
        .ok_or_else(|| Error::Indicator(format!("unknown alternative `{alt}`")))?;
    let k = model.schema.alternatives[i]
        .attribute_index(attr)
        .ok_or_else(|| Error::Indicator(format!("alternative `{alt}` has no attribute `{attr}`")))?;
    Ok((i, k))
}

/// Labels of the attributes that carry money and time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VotConvention {
    pub cost_attribute: String,
    pub time_attribute: String,
}

impl Default for VotConvention {
    fn default() -> Self {
        Self {
            cost_attribute: "cost".into(),
            time_attribute: "time".into(),
        }
    }
}

/// Checks that cost enters every utility only as `-1 * cost` and returns,
/// per alternative, the `(time, cost)` attribute indices where both exist.
fn vot_slots(model: &FittedModel, conv: &VotConvention) -> Result<Vec<Option<(usize, usize)>>> {
    let mut slots = Vec::with_capacity(model.schema.n_alternatives());
    for (i, alt) in model.schema.alternatives.iter().enumerate() {
        let cost = alt.attribute_index(&conv.cost_attribute);
        let time = alt.attribute_index(&conv.time_attribute);
        if let Some(c) = cost {
            let terms: Vec<_> = model.utility.terms_with_attribute(i, c).collect();
            let fixed = terms.len() == 1
                && terms[0].coef == Coef::Fixed(-1.0)
                && terms[0].factors == [Factor::Attribute(c)];
            if !fixed {
                return Err(Error::Indicator(format!(
                    "value of time needs the cost coefficient of `{}` fixed at -1",
                    alt.name
                )));
            }
        }
        slots.push(match (time, cost) {
            (Some(t), Some(c)) => Some((t, c)),
            (Some(_), None) => {
                return Err(Error::Indicator(format!(
                    "alternative `{}` has time but no cost attribute",
                    alt.name
                )))
            }
            _ => None,
        });
    }
    if slots.iter().all(Option::is_none) {
        return Err(Error::Indicator("no alternative has both time and cost".into()));
    }
    Ok(slots)
}

/// Value of time per alternative in money per hour (time in minutes);
/// `None` for alternatives without a time attribute. Uses the mean
/// coefficient of a random-coefficient model.
pub fn value_of_time(model: &FittedModel, obs: &Observation, conv: &VotConvention) -> Result<Vec<Option<f64>>> {
    let slots = vot_slots(model, conv)?;
    vot_with_slots(model, obs, &slots)
}

fn vot_with_slots(model: &FittedModel, obs: &Observation, slots: &[Option<(usize, usize)>]) -> Result<Vec<Option<f64>>> {
    let beta_net = model.net_tastes(&obs.z);
    slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let Some((t, c)) = *s else { return Ok(None) };
            let (slope, linear) = model.utility.attribute_slope(&beta_net, &model.beta, obs, i, t);
            if !linear {
                return Err(Error::Indicator("time enters utility nonlinearly; VOT is not a single coefficient".into()));
            }
            let ratio = model.schema.attribute_scale(i, t) / model.schema.attribute_scale(i, c);
            Ok(Some(vot_per_hour(slope) * ratio))
        })
        .collect()
}

/// `-β_time · 60`, money per hour from a per-minute coefficient.
pub fn vot_per_hour(beta_time: f64) -> f64 {
    if beta_time == 0.0 {
        0.0
    } else {
        -beta_time * 60.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elasticity {
    pub value: f64,
    /// Computed by finite differences rather than the closed form.
    pub numeric: bool,
}

fn log_prob(model: &FittedModel, obs: &Observation, obs_index: usize, alt: usize) -> Result<f64> {
    Ok(model.choice_output(obs, obs_index)?.probabilities[alt].ln())
}

/// Elasticity of `P(alt)` with respect to attribute `attr` of the same
/// alternative. Closed form `(1 - P)·x·∂V/∂x` when utility is linear in the
/// attribute and the model has no random coefficient; central differences
/// of `ln P` otherwise.
pub fn point_elasticity(model: &FittedModel, obs: &Observation, obs_index: usize, alt: &str, attr: &str) -> Result<Elasticity> {
    let (i, k) = attribute_of(model, alt, attr)?;
    point_elasticity_at(model, obs, obs_index, i, k)
}

pub(crate) fn point_elasticity_at(model: &FittedModel, obs: &Observation, obs_index: usize, i: usize, k: usize) -> Result<Elasticity> {
    if !obs.available[i] {
        return Err(Error::Indicator(format!(
            "alternative `{}` is unavailable",
            model.schema.alternatives[i].name
        )));
    }
    let beta_net = model.net_tastes(&obs.z);
    let (slope, linear) = model.utility.attribute_slope(&beta_net, &model.beta, obs, i, k);
    let x = obs.x[i][k];
    if linear && model.random.is_none() {
        let p = model.choice_output(obs, obs_index)?.probabilities[i];
        return Ok(Elasticity {
            value: (1.0 - p) * x * slope,
            numeric: false,
        });
    }
    Ok(Elasticity {
        value: numeric_elasticity(model, obs, obs_index, i, k)?,
        numeric: true,
    })
}

/// `x · ∂ln P/∂x` by central differences with step `FD_REL_STEP·|x|`.
pub fn numeric_elasticity(model: &FittedModel, obs: &Observation, obs_index: usize, i: usize, k: usize) -> Result<f64> {
    let x = obs.x[i][k];
    if x == 0.0 {
        return Ok(0.0);
    }
    let h = FD_REL_STEP * x.abs();
    let mut o = obs.clone();
    o.x[i][k] = x + h;
    let up = log_prob(model, &o, obs_index, i)?;
    o.x[i][k] = x - h;
    let down = log_prob(model, &o, obs_index, i)?;
    Ok(x * (up - down) / (2.0 * h))
}

/// `Σ P·E / Σ P`; `None` when the weights sum to zero.
pub fn weighted_elasticity(pairs: &[(f64, f64)]) -> Option<f64> {
    let w: f64 = pairs.iter().map(|(p, _)| p).sum();
    (w > 0.0).then(|| pairs.iter().map(|(p, e)| p * e).sum::<f64>() / w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElasticity {
    /// Value of the grouping characteristic; `None` for the whole sample.
    pub group: Option<f64>,
    pub value: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateElasticity {
    pub groups: Vec<GroupElasticity>,
    pub warnings: Vec<String>,
}

/// Probability-weighted elasticities, per value of characteristic `group`
/// (or over the whole sample when `group` is `None`).
pub fn aggregate_elasticity(
    model: &FittedModel,
    data: &Dataset,
    group: Option<&str>,
    alt: &str,
    attr: &str,
) -> Result<AggregateElasticity> {
    model.check_compatible(data)?;
    let (i, k) = attribute_of(model, alt, attr)?;
    let d = group
        .map(|g| {
            model
                .schema
                .characteristic_index(g)
                .ok_or_else(|| Error::Indicator(format!("unknown group characteristic `{g}`")))
        })
        .transpose()?;
    let records: Vec<Option<(f64, f64, f64)>> = data
        .observations
        .par_iter()
        .enumerate()
        .map(|(n, obs)| {
            if !obs.available[i] {
                return Ok(None);
            }
            let p = model.choice_output(obs, n)?.probabilities[i];
            let e = point_elasticity_at(model, obs, n, i, k)?.value;
            Ok(Some((d.map_or(0.0, |d| obs.z[d]), p, e)))
        })
        .collect::<Result<_>>()?;

    let mut by_group: BTreeMap<u64, (f64, Vec<(f64, f64)>)> = BTreeMap::new();
    let mut skipped = 0;
    for r in records {
        match r {
            Some((g, p, e)) => by_group
                .entry(order_key(g))
                .or_insert_with(|| (g, Vec::new()))
                .1
                .push((p, e)),
            None => skipped += 1,
        }
    }
    let mut out = AggregateElasticity::default();
    if skipped > 0 {
        out.warnings.push(format!("{skipped} observations without `{alt}` available were skipped"));
    }
    for (_, (g, pairs)) in by_group {
        match weighted_elasticity(&pairs) {
            Some(value) => out.groups.push(GroupElasticity {
                group: d.map(|_| g),
                value,
                n: pairs.len(),
            }),
            None => out.warnings.push(format!("group {g} has zero total probability and was omitted")),
        }
    }
    if out.groups.is_empty() {
        out.warnings.push("no group had a positive probability weight".into());
    }
    Ok(out)
}

/// Sort key that orders finite floats numerically.
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Regresses predicted value-of-time coefficients on the synthetic taste
/// polynomial; coefficients are aligned with [`synth::TASTE_TERMS`].
pub fn taste_recovery_regression(beta_vot: &[f64], z: &[Vec<f64>]) -> Result<[f64; 7]> {
    if z.iter().any(|r| r.len() < 3) {
        return Err(Error::Argument("characteristic rows need (inc, full, flex)".into()));
    }
    let design: Vec<Vec<f64>> = z
        .iter()
        .map(|r| synth::taste_features(r[0], r[1], r[2]).to_vec())
        .collect();
    let coef = ols::ols(&design, beta_vot, &synth::TASTE_TERMS)?;
    Ok(coef.try_into().expect("seven coefficients"))
}

/// Grid of synthetic people for probing hidden units: a sweep over one
/// characteristic for each of several fixed settings of the others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub sweep: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    /// Fixed characteristic values of each group; unspecified ones are 0.
    #[serde(default)]
    pub groups: Vec<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub group: usize,
    pub z: Vec<f64>,
    /// Post-activation values, one vector per hidden layer.
    pub activations: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub characteristic_names: Vec<String>,
    pub points: Vec<ProbePoint>,
}

impl ProbeResult {
    /// Long format: one row per point, layer and unit.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["point".to_string(), "group".to_string()];
        header.extend(self.characteristic_names.iter().cloned());
        header.extend(["layer".into(), "unit".into(), "activation".into()]);
        wtr.write_record(&header).map_err(csv_err)?;
        for (p, point) in self.points.iter().enumerate() {
            for (l, layer) in point.activations.iter().enumerate() {
                for (u, a) in layer.iter().enumerate() {
                    let mut row = vec![p.to_string(), point.group.to_string()];
                    row.extend(point.z.iter().map(f64::to_string));
                    row.extend([(l + 1).to_string(), (u + 1).to_string(), a.to_string()]);
                    wtr.write_record(&row).map_err(csv_err)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::Serde(e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps)
            .map(|s| from + (to - from) * s as f64 / (steps - 1) as f64)
            .collect(),
    }
}

pub fn activation_probe(model: &FittedModel, grid: &ProbeGrid) -> Result<ProbeResult> {
    let net = model
        .network
        .as_ref()
        .filter(|n| n.spec.n_hidden_layers() > 0)
        .ok_or_else(|| Error::Probe("the model has no hidden layer to probe".into()))?;
    if grid.steps == 0 {
        return Err(Error::Probe("probe grid needs at least one step".into()));
    }
    let names = &model.schema.characteristic_names;
    let index = |c: &str| {
        model
            .schema
            .characteristic_index(c)
            .ok_or_else(|| Error::Probe(format!("unknown characteristic `{c}`")))
    };
    let sweep = index(&grid.sweep)?;
    let groups = if grid.groups.is_empty() {
        vec![BTreeMap::new()]
    } else {
        grid.groups.clone()
    };
    let mut points = Vec::new();
    for (g, fixed) in groups.iter().enumerate() {
        let mut base = vec![0.0; names.len()];
        for (c, v) in fixed {
            base[index(c)?] = *v;
        }
        for x in linspace(grid.from, grid.to, grid.steps) {
            let mut z = base.clone();
            z[sweep] = x;
            let (_, cache) = nn::forward(&net.params, &net.spec, &z);
            let activations = (0..net.spec.n_hidden_layers())
                .map(|l| cache.hidden(l).to_vec())
                .collect();
            points.push(ProbePoint {
                group: g,
                z,
                activations,
            });
        }
    }
    Ok(ProbeResult {
        characteristic_names: names.clone(),
        points,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfPoint {
    pub x: f64,
    pub probability: f64,
    pub elasticity: f64,
    pub numeric: bool,
}

/// Probability of `alt` and its point elasticity as attribute `attr` of
/// `alt` sweeps `from..=to` in `steps` points, other inputs held at `template`.
pub fn what_if_curve(
    model: &FittedModel,
    template: &Observation,
    alt: &str,
    attr: &str,
    from: f64,
    to: f64,
    steps: usize,
) -> Result<Vec<WhatIfPoint>> {
    let (i, k) = attribute_of(model, alt, attr)?;
    template.validate(&model.schema)?;
    linspace(from, to, steps)
        .into_iter()
        .map(|x| {
            let mut o = template.clone();
            o.x[i][k] = x;
            let probability = model.choice_output(&o, 0)?.probabilities[i];
            let e = point_elasticity_at(model, &o, 0, i, k)?;
            Ok(WhatIfPoint {
                x,
                probability,
                elasticity: e.value,
                numeric: e.numeric,
            })
        })
        .collect()
}

/// Mean, extremes and selected percentiles of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
}

/// Linear-interpolation percentile of a sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(name: &str, values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(Summary {
        name: name.into(),
        n: s.len(),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        min: s[0],
        p5: percentile(&s, 0.05),
        p25: percentile(&s, 0.25),
        p50: percentile(&s, 0.5),
        p75: percentile(&s, 0.75),
        p95: percentile(&s, 0.95),
        max: s[s.len() - 1],
    })
}

/// What to compute in [`indicator_report`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorRequest {
    pub vot: bool,
    pub vot_convention: VotConvention,
    pub elasticities: Vec<ElasticityRequest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityRequest {
    pub alternative: String,
    pub attribute: String,
    /// Characteristic to aggregate by; whole sample when absent.
    #[serde(default)]
    pub group: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticitySeries {
    pub alternative: String,
    pub attribute: String,
    /// Per observation; `None` where the alternative is unavailable.
    pub values: Vec<Option<f64>>,
    pub numeric: bool,
    pub aggregate: AggregateElasticity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    /// `alternative.attribute` labels of the per-person coefficients.
    pub taste_names: Vec<String>,
    /// Per observation, `∂V/∂x` of every linearly entering attribute, per
    /// raw (unscaled) attribute unit.
    pub tastes: Vec<Vec<f64>>,
    pub vot_alternatives: Vec<String>,
    /// Per observation and alternative with a time attribute, money/hour.
    pub vot: Vec<Vec<f64>>,
    pub elasticities: Vec<ElasticitySeries>,
    pub summaries: Vec<Summary>,
}

pub fn indicator_report(model: &FittedModel, data: &Dataset, request: &IndicatorRequest) -> Result<IndicatorReport> {
    model.check_compatible(data)?;
    let schema = &model.schema;
    let mut taste_slots = Vec::new();
    for (i, alt) in schema.alternatives.iter().enumerate() {
        for (k, a) in alt.attributes.iter().enumerate() {
            if model.utility.terms_with_attribute(i, k).next().is_some() {
                taste_slots.push((i, k, format!("{}.{}", alt.name, a.name)));
            }
        }
    }
    let tastes: Vec<Vec<f64>> = data
        .observations
        .par_iter()
        .map(|obs| {
            let beta_net = model.net_tastes(&obs.z);
            taste_slots
                .iter()
                .map(|&(i, k, _)| {
                    model.utility.attribute_slope(&beta_net, &model.beta, obs, i, k).0 * schema.attribute_scale(i, k)
                })
                .collect()
        })
        .collect();

    let (vot_alternatives, vot) = if request.vot {
        let slots = vot_slots(model, &request.vot_convention)?;
        let names = slots
            .iter()
            .zip(&schema.alternatives)
            .filter(|(s, _)| s.is_some())
            .map(|(_, a)| a.name.clone())
            .collect();
        let rows = data
            .observations
            .par_iter()
            .map(|obs| Ok(vot_with_slots(model, obs, &slots)?.into_iter().flatten().collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        (names, rows)
    } else {
        (Vec::new(), Vec::new())
    };

    let mut elasticities = Vec::new();
    for req in &request.elasticities {
        let (i, k) = attribute_of(model, &req.alternative, &req.attribute)?;
        let per_obs: Vec<Option<Elasticity>> = data
            .observations
            .par_iter()
            .enumerate()
            .map(|(n, obs)| {
                if obs.available[i] {
                    point_elasticity_at(model, obs, n, i, k).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        elasticities.push(ElasticitySeries {
            alternative: req.alternative.clone(),
            attribute: req.attribute.clone(),
            numeric: per_obs.iter().flatten().any(|e| e.numeric),
            values: per_obs.iter().map(|e| e.map(|e| e.value)).collect(),
            aggregate: aggregate_elasticity(model, data, req.group.as_deref(), &req.alternative, &req.attribute)?,
        });
    }

    let mut summaries = Vec::new();
    for (c, (_, _, name)) in taste_slots.iter().enumerate() {
        let col: Vec<f64> = tastes.iter().map(|r| r[c]).collect();
        summaries.extend(summarize(&format!("taste:{name}"), &col));
    }
    for (c, name) in vot_alternatives.iter().enumerate() {
        let col: Vec<f64> = vot.iter().map(|r| r[c]).collect();
        summaries.extend(summarize(&format!("vot:{name}"), &col));
    }
    for e in &elasticities {
        let col: Vec<f64> = e.values.iter().flatten().copied().collect();
        summaries.extend(summarize(&format!("elasticity:{}.{}", e.alternative, e.attribute), &col));
    }

    Ok(IndicatorReport {
        taste_names: taste_slots.into_iter().map(|(_, _, n)| n).collect(),
        tastes,
        vot_alternatives,
        vot,
        elasticities,
        summaries,
    })
}

impl IndicatorReport {
    /// One row per observation: tastes, VOTs and point elasticities.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["obs".to_string()];
        header.extend(self.taste_names.iter().map(|n| format!("taste:{n}")));
        header.extend(self.vot_alternatives.iter().map(|n| format!("vot:{n}")));
        header.extend(
            self.elasticities
                .iter()
                .map(|e| format!("elasticity:{}.{}", e.alternative, e.attribute)),
        );
        wtr.write_record(&header).map_err(csv_err)?;
        for n in 0..self.tastes.len() {
            let mut row = vec![n.to_string()];
            row.extend(self.tastes[n].iter().map(f64::to_string));
            if let Some(v) = self.vot.get(n) {
                row.extend(v.iter().map(f64::to_string));
            }
            row.extend(
                self.elasticities
                    .iter()
                    .map(|e| e.values[n].map_or_else(String::new, |v| v.to_string())),
            );
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::Serde(e.to_string()))
    }
}

pub fn write_what_if_csv<W: std::io::Write>(points: &[WhatIfPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        wtr.serialize(p).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Serde(e.to_string()))
}
