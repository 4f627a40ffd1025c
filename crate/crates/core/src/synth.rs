//! Synthetic binary-choice data with a known nonlinear value-of-time function.
//!
//! Each person has income `inc` ($/minute), a full-time dummy and a
//! flexible-schedule dummy. The true utility of alternative `i` is
//! `ASC_i - cost_i + β_vot(z)·time_i`, with `ASC_0 = 0` and `β_vot` a
//! polynomial in the characteristics with pairwise interactions.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AlternativeSchema, AttributeColumn, Dataset, FeatureSchema, Observation, SplitTag};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub const CHARACTERISTICS: [&str; 3] = ["inc", "full", "flex"];

/// Names of the seven polynomial terms, in coefficient order.
pub const TASTE_TERMS: [&str; 7] = ["1", "inc", "full", "flex", "inc*full", "inc*flex", "full*flex"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrueTasteParams {
    pub asc1: f64,
    /// Coefficients aligned with [`TASTE_TERMS`].
    pub b: [f64; 7],
}

impl Default for TrueTasteParams {
    fn default() -> Self {
        Self {
            asc1: -0.1,
            b: [-0.1, -0.5, -0.1, 0.05, -0.2, 0.05, 0.1],
        }
    }
}

impl TrueTasteParams {
    /// `asc1` followed by the seven taste coefficients.
    pub fn as_vector(&self) -> Vec<f64> {
        std::iter::once(self.asc1).chain(self.b).collect()
    }
}

/// Polynomial design row `(1, inc, full, flex, inc·full, inc·flex, full·flex)`.
pub fn taste_features(inc: f64, full: f64, flex: f64) -> [f64; 7] {
    [1.0, inc, full, flex, inc * full, inc * flex, full * flex]
}

/// How alternative attributes are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeDesign {
    /// Every attribute uniform over its range, independently per alternative.
    Independent,
    /// Times and `cost_0` uniform; `cost_1` set so that the person is close
    /// to indifferent on cost and time, plus uniform noise of the given
    /// half width. `cost_1` is not clipped to the cost range.
    IndifferencePivot { noise_half_width: f64 },
}

impl Default for AttributeDesign {
    fn default() -> Self {
        AttributeDesign::IndifferencePivot { noise_half_width: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub seed: u64,
    pub cost_range: [f64; 2],
    pub time_range: [f64; 2],
    pub design: AttributeDesign,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            n_dev: 2_000,
            n_test: 2_000,
            seed: 0,
            cost_range: [0.2, 40.0],
            time_range: [1.0, 90.0],
            design: AttributeDesign::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return Err(Error::Argument("split sizes must be positive".into()));
        }
        for (name, r) in [("cost_range", self.cost_range), ("time_range", self.time_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::Argument(format!("{name} must satisfy lo <= hi, got {r:?}")));
            }
        }
        if let AttributeDesign::IndifferencePivot { noise_half_width } = self.design {
            if !(noise_half_width.is_finite() && noise_half_width >= 0.0) {
                return Err(Error::Argument("noise_half_width must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Characteristics of one synthetic person.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Person {
    pub inc: f64,
    pub full: f64,
    pub flex: f64,
}

impl Person {
    pub fn z(&self) -> Vec<f64> {
        vec![self.inc, self.full, self.flex]
    }

    pub fn from_z(z: &[f64]) -> Self {
        Self {
            inc: z[0],
            full: z[1],
            flex: z[2],
        }
    }
}

fn draw_people<R: Rng>(n: usize, rng: &mut R) -> Vec<Person> {
    let full_time = LogNormal::new(0.5f64.ln(), 0.25).expect("valid lognormal");
    let part_time = LogNormal::new(0.25f64.ln(), 0.2).expect("valid lognormal");
    (0..n)
        .map(|_| {
            let full = rng.random_bool(0.5);
            let flex = rng.random_bool(0.5);
            let inc = if full {
                full_time.sample(rng)
            } else {
                part_time.sample(rng)
            };
            Person {
                inc,
                full: f64::from(u8::from(full)),
                flex: f64::from(u8::from(flex)),
            }
        })
        .collect()
}

/// Draws `n` characteristic vectors `(inc, full, flex)`.
pub fn draw_characteristics(n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Argument("n must be positive".into()));
    }
    let mut rng = rng::stream(seed, streams::CHARACTERISTICS);
    Ok(draw_people(n, &mut rng).iter().map(Person::z).collect())
}

/// True value-of-time coefficient (utility per minute, cost coefficient −1).
pub fn true_taste(params: &TrueTasteParams, person: &Person) -> f64 {
    taste_features(person.inc, person.full, person.flex)
        .iter()
        .zip(&params.b)
        .map(|(x, b)| x * b)
        .sum()
}

/// True systematic utilities of both alternatives.
pub fn true_utilities(params: &TrueTasteParams, person: &Person, cost: [f64; 2], time: [f64; 2]) -> [f64; 2] {
    let beta = true_taste(params, person);
    [-cost[0] + beta * time[0], params.asc1 - cost[1] + beta * time[1]]
}

/// Probability of alternative 1 under the binary logit.
pub fn prob_one(v: [f64; 2]) -> f64 {
    1.0 / (1.0 + (v[0] - v[1]).exp())
}

/// Samples a choice: 1 with probability `p1`, else 0.
pub fn draw_choice<R: Rng>(p1: f64, rng: &mut R) -> usize {
    usize::from(rng.random::<f64>() < p1)
}

/// Schema of the generated data. Attribute labels are `cost` and `time`
/// for both alternatives; columns are suffixed with the alternative index.
pub fn schema() -> FeatureSchema {
    let alt = |i: usize| AlternativeSchema {
        name: format!("alt{i}"),
        attributes: vec![
            AttributeColumn::new("cost", format!("cost_{i}")),
            AttributeColumn::new("time", format!("time_{i}")),
        ],
        availability: None,
    };
    FeatureSchema {
        characteristic_names: CHARACTERISTICS.iter().map(|s| s.to_string()).collect(),
        alternatives: vec![alt(0), alt(1)],
        choice_name: "choice".into(),
        scaling: Default::default(),
    }
}

fn uniform<R: Rng>(range: [f64; 2], rng: &mut R) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

fn generate_split(cfg: &GenConfig, params: &TrueTasteParams, n: usize, seed: u64, tag: SplitTag) -> Result<Dataset> {
    let people = draw_people(n, &mut rng::stream(seed, streams::CHARACTERISTICS));
    let mut attr_rng = rng::stream(seed, streams::ATTRIBUTES);
    let mut choice_rng = rng::stream(seed, streams::CHOICES);

    let observations = people
        .iter()
        .map(|p| {
            let time = [uniform(cfg.time_range, &mut attr_rng), uniform(cfg.time_range, &mut attr_rng)];
            let cost0 = uniform(cfg.cost_range, &mut attr_rng);
            let cost1 = match cfg.design {
                AttributeDesign::Independent => uniform(cfg.cost_range, &mut attr_rng),
                AttributeDesign::IndifferencePivot { noise_half_width: w } => {
                    let noise = uniform([-w, w], &mut attr_rng);
                    cost0 + true_taste(params, p) * (time[1] - time[0]) + noise
                }
            };
            let cost = [cost0, cost1];
            let p1 = prob_one(true_utilities(params, p, cost, time));
            Observation {
                z: p.z(),
                x: vec![vec![cost[0], time[0]], vec![cost[1], time[1]]],
                available: vec![true, true],
                chosen: draw_choice(p1, &mut choice_rng),
            }
        })
        .collect();
    Dataset::new(schema(), observations, tag)
}

/// Generates the train, dev and test splits, each from its own sub-seed.
pub fn generate_dataset(cfg: &GenConfig, params: &TrueTasteParams) -> Result<(Dataset, Dataset, Dataset)> {
    cfg.validate()?;
    let split_seed = |k: u64| rng::sub_seed(cfg.seed, 100 + k);
    Ok((
        generate_split(cfg, params, cfg.n_train, split_seed(0), SplitTag::Train)?,
        generate_split(cfg, params, cfg.n_dev, split_seed(1), SplitTag::Dev)?,
        generate_split(cfg, params, cfg.n_test, split_seed(2), SplitTag::Test)?,
    ))
}
