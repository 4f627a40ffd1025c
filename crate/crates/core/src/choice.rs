//! Utility specification and the availability-masked logit kernel.
//!
//! # Term grammar
//!
//! Each alternative lists its ASC and a set of terms. A term is written
//!
//! ```text
//! <coef> [* <column>]*
//! ```
//!
//! where `<coef>` is `net:<name>` (a network output), `param:<name>` (a
//! freely estimated coefficient) or a numeric literal (a fixed value). Each
//! column resolves first to an attribute of that alternative, then to a
//! characteristic; a label matching both is rejected as ambiguous. Several
//! columns form a product, so `param:b * inc * time` is an income-time
//! interaction. The ASC is a single `<coef>` with no columns.
//!
//! ```text
//! asc   = "param:asc_train"
//! terms = ["-1 * cost", "net:vot * time", "param:b_ga * ga"]
//! ```

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSchema, Observation};
use crate::error::{Error, Result};

/// Source of one coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coef {
    /// Index into the network outputs.
    Net(usize),
    /// Index into the parametric coefficient vector.
    Param(usize),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    /// Attribute index within the term's alternative.
    Attribute(usize),
    Characteristic(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: Coef,
    pub factors: Vec<Factor>,
}

impl Term {
    #[inline]
    fn product(&self, alt: usize, obs: &Observation) -> f64 {
        self.factors.iter().fold(1.0, |acc, f| {
            acc * match *f {
                Factor::Attribute(k) => obs.x[alt][k],
                Factor::Characteristic(d) => obs.z[d],
            }
        })
    }

    fn attribute_power(&self, attr: usize) -> usize {
        self.factors.iter().filter(|f| **f == Factor::Attribute(attr)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativeUtility {
    pub asc: Coef,
    pub terms: Vec<Term>,
}

/// Resolved utility specification for every alternative of a schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    /// Names of network outputs, in output order.
    pub net_outputs: Vec<String>,
    /// Names of parametric coefficients, in vector order.
    pub params: Vec<String>,
    pub alternatives: Vec<AlternativeUtility>,
}

/// Textual form of one alternative's utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativeUtilityConfig {
    pub name: String,
    pub asc: String,
    #[serde(default)]
    pub terms: Vec<String>,
}

/// Textual utility specification as written in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    /// Network output order. When empty, outputs are numbered in order of
    /// first appearance.
    #[serde(default)]
    pub net_outputs: Vec<String>,
    pub alternatives: Vec<AlternativeUtilityConfig>,
}

impl UtilityConfig {
    pub fn new(alternatives: Vec<AlternativeUtilityConfig>) -> Self {
        Self {
            net_outputs: Vec::new(),
            alternatives,
        }
    }
}

impl AlternativeUtilityConfig {
    pub fn new(name: &str, asc: &str, terms: &[&str]) -> Self {
        Self {
            name: name.into(),
            asc: asc.into(),
            terms: terms.iter().map(|t| t.to_string()).collect(),
        }
    }
}

struct Names {
    net: Vec<String>,
    net_fixed: bool,
    params: Vec<String>,
}

impl Names {
    fn coef(&mut self, token: &str) -> Result<Coef> {
        let token = token.trim();
        if let Some(name) = token.strip_prefix("net:") {
            let name = name.trim();
            check_name(name, token)?;
            if let Some(i) = self.net.iter().position(|n| n == name) {
                return Ok(Coef::Net(i));
            }
            if self.net_fixed {
                return Err(Error::Spec(format!(
                    "network output `{name}` is not among the declared outputs {:?}",
                    self.net
                )));
            }
            self.net.push(name.to_string());
            Ok(Coef::Net(self.net.len() - 1))
        } else if let Some(name) = token.strip_prefix("param:") {
            let name = name.trim();
            check_name(name, token)?;
            let i = match self.params.iter().position(|n| n == name) {
                Some(i) => i,
                None => {
                    self.params.push(name.to_string());
                    self.params.len() - 1
                }
            };
            Ok(Coef::Param(i))
        } else {
            token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Coef::Fixed)
                .ok_or_else(|| Error::Spec(format!("cannot parse coefficient `{token}`")))
        }
    }
}

fn check_name(name: &str, token: &str) -> Result<()> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(Error::Spec(format!("bad coefficient name in `{token}`")));
    }
    Ok(())
}

fn resolve_column(schema: &FeatureSchema, alt: usize, column: &str) -> Result<Factor> {
    let attr = schema.alternatives[alt].attribute_index(column);
    let ch = schema.characteristic_index(column);
    match (attr, ch) {
        (Some(_), Some(_)) => Err(Error::Spec(format!(
            "`{column}` is both an attribute of `{}` and a characteristic",
            schema.alternatives[alt].name
        ))),
        (Some(k), None) => Ok(Factor::Attribute(k)),
        (None, Some(d)) => Ok(Factor::Characteristic(d)),
        (None, None) => Err(Error::Spec(format!(
            "unknown column `{column}` in utility of `{}`",
            schema.alternatives[alt].name
        ))),
    }
}

impl UtilitySpec {
    /// Resolves a textual specification against a schema.
    pub fn parse(config: &UtilityConfig, schema: &FeatureSchema) -> Result<Self> {
        let mut names = Names {
            net: config.net_outputs.clone(),
            net_fixed: !config.net_outputs.is_empty(),
            params: Vec::new(),
        };
        if config.alternatives.len() != schema.n_alternatives() {
            return Err(Error::Spec(format!(
                "utility lists {} alternatives, schema has {}",
                config.alternatives.len(),
                schema.n_alternatives()
            )));
        }
        let mut alternatives = Vec::with_capacity(config.alternatives.len());
        for (i, (alt_cfg, alt_schema)) in config.alternatives.iter().zip(&schema.alternatives).enumerate() {
            if alt_cfg.name != alt_schema.name {
                return Err(Error::Spec(format!(
                    "utility alternative {i} is `{}` but schema has `{}`",
                    alt_cfg.name, alt_schema.name
                )));
            }
            let asc = names.coef(&alt_cfg.asc)?;
            let mut terms = Vec::with_capacity(alt_cfg.terms.len());
            for text in &alt_cfg.terms {
                let mut parts = text.split('*');
                let coef = names.coef(parts.next().unwrap_or_default())?;
                let factors = parts
                    .map(|c| {
                        let c = c.trim();
                        if c.is_empty() {
                            return Err(Error::Spec(format!("empty factor in term `{text}`")));
                        }
                        resolve_column(schema, i, c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                terms.push(Term { coef, factors });
            }
            alternatives.push(AlternativeUtility { asc, terms });
        }
        let spec = Self {
            net_outputs: names.net,
            params: names.params,
            alternatives,
        };
        spec.validate(schema)?;
        Ok(spec)
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.alternatives.len() != schema.n_alternatives() {
            return Err(Error::Spec("alternative count does not match schema".into()));
        }
        let references = self
            .alternatives
            .iter()
            .filter(|a| a.asc == Coef::Fixed(0.0))
            .count();
        if references != 1 {
            return Err(Error::Spec(format!(
                "exactly one alternative must have its ASC fixed at 0, found {references}"
            )));
        }
        for (i, alt) in self.alternatives.iter().enumerate() {
            let mut used = vec![false; self.net_outputs.len()];
            for coef in std::iter::once(&alt.asc).chain(alt.terms.iter().map(|t| &t.coef)) {
                match *coef {
                    Coef::Net(k) => {
                        let slot = used.get_mut(k).ok_or_else(|| {
                            Error::Spec(format!("network output index {k} out of range"))
                        })?;
                        if *slot {
                            return Err(Error::Spec(format!(
                                "network output `{}` used twice in alternative `{}`",
                                self.net_outputs[k], schema.alternatives[i].name
                            )));
                        }
                        *slot = true;
                    }
                    Coef::Param(p) if p >= self.params.len() => {
                        return Err(Error::Spec(format!("parametric index {p} out of range")));
                    }
                    _ => {}
                }
            }
            for term in &alt.terms {
                for f in &term.factors {
                    let ok = match *f {
                        Factor::Attribute(k) => k < schema.alternatives[i].attributes.len(),
                        Factor::Characteristic(d) => d < schema.n_characteristics(),
                    };
                    if !ok {
                        return Err(Error::Spec(format!("factor {f:?} out of range")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_net(&self) -> usize {
        self.net_outputs.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p == name)
    }

    pub fn net_index(&self, name: &str) -> Option<usize> {
        self.net_outputs.iter().position(|p| p == name)
    }

    fn check_lengths(&self, beta_net: &[f64], beta_param: &[f64]) -> Result<()> {
        if beta_net.len() != self.n_net() || beta_param.len() != self.n_params() {
            return Err(Error::Spec(format!(
                "spec needs {} network and {} parametric coefficients, got {} and {}",
                self.n_net(),
                self.n_params(),
                beta_net.len(),
                beta_param.len()
            )));
        }
        Ok(())
    }

    #[inline]
    fn coef(c: &Coef, beta_net: &[f64], beta_param: &[f64]) -> f64 {
        match *c {
            Coef::Net(k) => beta_net[k],
            Coef::Param(p) => beta_param[p],
            Coef::Fixed(v) => v,
        }
    }

    /// Utility of each available alternative; `None` where unavailable.
    pub fn systematic_utility(
        &self,
        beta_net: &[f64],
        beta_param: &[f64],
        obs: &Observation,
    ) -> Result<Vec<Option<f64>>> {
        self.check_lengths(beta_net, beta_param)?;
        let mut v = vec![0.0; self.alternatives.len()];
        self.utilities_into(beta_net, beta_param, obs, &mut v);
        Ok(v.into_iter()
            .zip(&obs.available)
            .map(|(u, a)| a.then_some(u))
            .collect())
    }

    /// Writes utilities of available alternatives into `out`; unavailable
    /// entries are set to 0 and must be ignored by the caller.
    pub(crate) fn utilities_into(&self, beta_net: &[f64], beta_param: &[f64], obs: &Observation, out: &mut [f64]) {
        for (i, alt) in self.alternatives.iter().enumerate() {
            if !obs.available[i] {
                out[i] = 0.0;
                continue;
            }
            let mut v = Self::coef(&alt.asc, beta_net, beta_param);
            for t in &alt.terms {
                v += Self::coef(&t.coef, beta_net, beta_param) * t.product(i, obs);
            }
            out[i] = v;
        }
    }

    /// Adds `Σ_i gv[i] · ∂V_i/∂β` into the coefficient gradients.
    pub(crate) fn accumulate_coef_grads(
        &self,
        obs: &Observation,
        gv: &[f64],
        grad_net: &mut [f64],
        grad_param: &mut [f64],
    ) {
        let mut add = |c: &Coef, v: f64| match *c {
            Coef::Net(k) => grad_net[k] += v,
            Coef::Param(p) => grad_param[p] += v,
            Coef::Fixed(_) => {}
        };
        for (i, alt) in self.alternatives.iter().enumerate() {
            if !obs.available[i] || gv[i] == 0.0 {
                continue;
            }
            add(&alt.asc, gv[i]);
            for t in &alt.terms {
                add(&t.coef, gv[i] * t.product(i, obs));
            }
        }
    }

    /// `∂V_alt/∂x_attr` for one person and whether utility is linear in the
    /// attribute (every term contains it at most once).
    pub fn attribute_slope(
        &self,
        beta_net: &[f64],
        beta_param: &[f64],
        obs: &Observation,
        alt: usize,
        attr: usize,
    ) -> (f64, bool) {
        let mut slope = 0.0;
        let mut linear = true;
        for t in &self.alternatives[alt].terms {
            match t.attribute_power(attr) {
                0 => {}
                1 => {
                    let rest = t
                        .factors
                        .iter()
                        .filter(|f| **f != Factor::Attribute(attr))
                        .fold(1.0, |acc, f| {
                            acc * match *f {
                                Factor::Attribute(k) => obs.x[alt][k],
                                Factor::Characteristic(d) => obs.z[d],
                            }
                        });
                    slope += Self::coef(&t.coef, beta_net, beta_param) * rest;
                }
                _ => linear = false,
            }
        }
        (slope, linear)
    }

    /// Terms of `alt` that involve attribute `attr`.
    pub fn terms_with_attribute(&self, alt: usize, attr: usize) -> impl Iterator<Item = &Term> {
        self.alternatives[alt]
            .terms
            .iter()
            .filter(move |t| t.attribute_power(attr) > 0)
    }
}

/// Softmax over the available alternatives with max subtraction. Unavailable
/// alternatives get probability exactly 0.
pub fn probabilities(utilities: &[f64], available: &[bool]) -> Result<Vec<f64>> {
    let mut p = vec![0.0; utilities.len()];
    softmax_into(utilities, available, &mut p)?;
    Ok(p)
}

/// In-place form of [`probabilities`]. Returns `ln Σ exp(V_j - max)` and the
/// max, so log-probabilities can be formed without underflow.
pub(crate) fn softmax_into(utilities: &[f64], available: &[bool], out: &mut [f64]) -> Result<(f64, f64)> {
    let max = utilities
        .iter()
        .zip(available)
        .filter(|(_, a)| **a)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Data("no available alternative".into()));
    }
    let mut sum = 0.0;
    for ((o, v), a) in out.iter_mut().zip(utilities).zip(available) {
        *o = if *a { (v - max).exp() } else { 0.0 };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok((sum.ln(), max))
}

/// Utilities, probabilities and chosen log-probability of one observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutput {
    pub utilities: Vec<Option<f64>>,
    pub probabilities: Vec<f64>,
    pub chosen_logprob: f64,
}

/// Evaluates the logit kernel for one observation.
pub fn evaluate(spec: &UtilitySpec, beta_net: &[f64], beta_param: &[f64], obs: &Observation) -> Result<ChoiceOutput> {
    let utilities = spec.systematic_utility(beta_net, beta_param, obs)?;
    let dense: Vec<f64> = utilities.iter().map(|u| u.unwrap_or(0.0)).collect();
    let mut probabilities = vec![0.0; dense.len()];
    let (log_sum, max) = softmax_into(&dense, &obs.available, &mut probabilities)?;
    Ok(ChoiceOutput {
        chosen_logprob: dense[obs.chosen] - max - log_sum,
        utilities,
        probabilities,
    })
}
