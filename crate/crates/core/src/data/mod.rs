//! Dataset representation: schema, observations and splits.
//!
//! An [`Observation`] holds one chooser's characteristics `z`, the attribute
//! vectors of every alternative, an availability mask and the chosen index.
//! Attribute and characteristic values are stored in model units, i.e. after
//! the schema's scaling factors have been applied.

mod csv_io;
mod split;

pub use csv_io::{
    load_csv, CellValue, write_csv, CharacteristicRule, ChoiceRule, FilterRule, IngestConfig,
};
pub use split::split_dataset;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binds an attribute label used in utility terms to a CSV column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeColumn {
    pub name: String,
    pub column: String,
}

impl AttributeColumn {
    pub fn new(name: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            column: column.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativeSchema {
    pub name: String,
    pub attributes: Vec<AttributeColumn>,
    /// Column holding the availability flag; `None` means always available.
    #[serde(default)]
    pub availability: Option<String>,
}

impl AlternativeSchema {
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }
}

/// Column layout shared by every observation of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    /// Labels of `z` after one-hot expansion.
    pub characteristic_names: Vec<String>,
    pub alternatives: Vec<AlternativeSchema>,
    pub choice_name: String,
    /// Multiplicative factor per raw column; missing entries mean 1.
    #[serde(default)]
    pub scaling: BTreeMap<String, f64>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        if self.alternatives.len() < 2 {
            return Err(Error::Schema(
                "a choice set needs at least two alternatives".into(),
            ));
        }
        unique(
            self.characteristic_names.iter().map(String::as_str),
            "characteristic",
        )?;
        unique(self.alternatives.iter().map(|a| a.name.as_str()), "alternative")?;
        for alt in &self.alternatives {
            if alt.attributes.is_empty() {
                return Err(Error::Schema(format!(
                    "alternative `{}` has no attributes",
                    alt.name
                )));
            }
            unique(
                alt.attributes.iter().map(|a| a.name.as_str()),
                &format!("attribute of `{}`", alt.name),
            )?;
        }
        for (column, factor) in &self.scaling {
            if !(factor.is_finite() && *factor > 0.0) {
                return Err(Error::Schema(format!(
                    "scaling factor for `{column}` must be strictly positive, got {factor}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    pub fn n_characteristics(&self) -> usize {
        self.characteristic_names.len()
    }

    pub fn characteristic_index(&self, name: &str) -> Option<usize> {
        self.characteristic_names.iter().position(|c| c == name)
    }

    pub fn alternative_index(&self, name: &str) -> Option<usize> {
        self.alternatives.iter().position(|a| a.name == name)
    }

    pub fn scale_of(&self, column: &str) -> f64 {
        self.scaling.get(column).copied().unwrap_or(1.0)
    }

    /// Same characteristics, alternatives and attribute labels, in order.
    /// Source columns, availability and scaling may differ.
    pub fn same_layout(&self, other: &FeatureSchema) -> bool {
        self.characteristic_names == other.characteristic_names
            && self.alternatives.len() == other.alternatives.len()
            && self.alternatives.iter().zip(&other.alternatives).all(|(x, y)| {
                x.name == y.name
                    && x.attributes.len() == y.attributes.len()
                    && x.attributes.iter().zip(&y.attributes).all(|(p, q)| p.name == q.name)
            })
    }

    /// Scaling factor of attribute `attr` of alternative `alt`.
    pub fn attribute_scale(&self, alt: usize, attr: usize) -> f64 {
        self.scale_of(&self.alternatives[alt].attributes[attr].column)
    }
}

fn unique<'a>(names: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::Schema(format!("duplicate {what} label `{n}`")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub z: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub available: Vec<bool>,
    pub chosen: usize,
}

impl Observation {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.z.len() != schema.n_characteristics() {
            return Err(Error::Data(format!(
                "expected {} characteristics, got {}",
                schema.n_characteristics(),
                self.z.len()
            )));
        }
        if self.x.len() != schema.n_alternatives() || self.available.len() != schema.n_alternatives()
        {
            return Err(Error::Data(format!(
                "expected {} alternatives",
                schema.n_alternatives()
            )));
        }
        for (i, (xi, alt)) in self.x.iter().zip(&schema.alternatives).enumerate() {
            if xi.len() != alt.attributes.len() {
                return Err(Error::Data(format!(
                    "alternative {i} expects {} attributes, got {}",
                    alt.attributes.len(),
                    xi.len()
                )));
            }
        }
        if self.chosen >= schema.n_alternatives() || !self.available[self.chosen] {
            return Err(Error::Data(format!(
                "chosen alternative {} is not available",
                self.chosen
            )));
        }
        if self.n_available() < 2 {
            return Err(Error::Data(
                "at least two alternatives must be available".into(),
            ));
        }
        Ok(())
    }

    pub fn n_available(&self) -> usize {
        self.available.iter().filter(|a| **a).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
        })
    }
}

/// An immutable collection of observations sharing one schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub observations: Vec<Observation>,
    pub split: SplitTag,
}

impl Dataset {
    /// Builds a dataset, checking the schema and every observation.
    pub fn new(schema: FeatureSchema, observations: Vec<Observation>, split: SplitTag) -> Result<Self> {
        schema.validate()?;
        for (row, obs) in observations.iter().enumerate() {
            obs.validate(&schema)
                .map_err(|e| Error::Data(format!("observation {row}: {e}")))?;
        }
        Ok(Self {
            schema,
            observations,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    /// Mean size of the available choice set; `ln` of it is the NLL of a
    /// uniform predictor.
    pub fn mean_choice_set_size(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let total: usize = self.observations.iter().map(Observation::n_available).sum();
        total as f64 / self.len() as f64
    }

    /// Content hash used in run manifests.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("dataset serializes"));
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn binary_schema() -> FeatureSchema {
        FeatureSchema {
            characteristic_names: vec!["inc".into()],
            alternatives: vec![
                AlternativeSchema {
                    name: "a".into(),
                    attributes: vec![AttributeColumn::new("cost", "cost_0")],
                    availability: None,
                },
                AlternativeSchema {
                    name: "b".into(),
                    attributes: vec![AttributeColumn::new("cost", "cost_1")],
                    availability: None,
                },
            ],
            choice_name: "choice".into(),
            scaling: BTreeMap::new(),
        }
    }

    #[test]
    fn schema_rejects_duplicates_and_bad_scaling() {
        let mut s = binary_schema();
        s.characteristic_names.push("inc".into());
        assert!(matches!(s.validate(), Err(Error::Schema(_))));

        let mut s = binary_schema();
        s.scaling.insert("cost_0".into(), 0.0);
        assert!(matches!(s.validate(), Err(Error::Schema(_))));

        let mut s = binary_schema();
        s.alternatives[0].attributes.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn observation_invariants() {
        let s = binary_schema();
        let mut obs = Observation {
            z: vec![1.0],
            x: vec![vec![1.0], vec![2.0]],
            available: vec![true, true],
            chosen: 1,
        };
        obs.validate(&s).unwrap();
        obs.available[1] = false;
        assert!(obs.validate(&s).is_err());
        obs.available = vec![true, false];
        obs.chosen = 0;
        // only one alternative left
        assert!(obs.validate(&s).is_err());
    }
}
