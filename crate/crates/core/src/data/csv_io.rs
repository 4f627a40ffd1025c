//! CSV ingestion with filtering, one-hot encoding and scaling.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AlternativeSchema, Dataset, FeatureSchema, Observation, SplitTag};
use crate::error::{Error, Result};

/// A literal in a config file; numbers and strings compare against raw cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl CellValue {
    fn as_text(&self) -> String {
        match self {
            CellValue::Int(i) => i.to_string(),
            CellValue::Float(f) => f.to_string(),
            CellValue::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRule {
    pub column: String,
    /// Raw value -> level. Level 0 is the reference and gets no dummy.
    #[serde(default)]
    pub categorical: Option<BTreeMap<String, usize>>,
}

impl CharacteristicRule {
    pub fn numeric(column: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            categorical: None,
        }
    }

    pub fn categorical<K: Into<String>>(
        column: impl Into<String>,
        levels: impl IntoIterator<Item = (K, usize)>,
    ) -> Self {
        Self {
            column: column.into(),
            categorical: Some(levels.into_iter().map(|(k, v)| (k.into(), v)).collect()),
        }
    }

    fn n_levels(&self) -> usize {
        self.categorical
            .as_ref()
            .and_then(|m| m.values().max().copied())
            .map_or(0, |m| m + 1)
    }

    fn output_names(&self) -> Vec<String> {
        match &self.categorical {
            None => vec![self.column.clone()],
            Some(_) => (1..self.n_levels())
                .map(|l| format!("{}_{l}", self.column))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRule {
    pub column: String,
    /// Raw value -> alternative index. Without a map the column holds the
    /// zero-based index directly.
    #[serde(default)]
    pub map: Option<BTreeMap<String, usize>>,
}

/// Drops every row whose `column` equals one of `drop`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    pub column: String,
    pub drop: Vec<CellValue>,
}

/// Declarative description of how a raw CSV maps onto a [`FeatureSchema`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub characteristics: Vec<CharacteristicRule>,
    pub alternatives: Vec<AlternativeSchema>,
    pub choice: ChoiceRule,
    #[serde(default)]
    pub filters: Vec<FilterRule>,
    #[serde(default)]
    pub scaling: BTreeMap<String, f64>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl IngestConfig {
    /// The schema a load with this config produces.
    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            characteristic_names: self
                .characteristics
                .iter()
                .flat_map(CharacteristicRule::output_names)
                .collect(),
            alternatives: self.alternatives.clone(),
            choice_name: self.choice.column.clone(),
            scaling: self.scaling.clone(),
        }
    }

    /// Config that reads back a file produced by [`write_csv`].
    pub fn for_written(schema: &FeatureSchema) -> Self {
        Self {
            characteristics: schema
                .characteristic_names
                .iter()
                .map(CharacteristicRule::numeric)
                .collect(),
            alternatives: schema
                .alternatives
                .iter()
                .map(|a| AlternativeSchema {
                    availability: Some(written_availability(a)),
                    ..a.clone()
                })
                .collect(),
            choice: ChoiceRule {
                column: schema.choice_name.clone(),
                map: None,
            },
            filters: Vec::new(),
            scaling: schema.scaling.clone(),
            delimiter: ',',
        }
    }
}

fn written_availability(alt: &AlternativeSchema) -> String {
    alt.availability
        .clone()
        .unwrap_or_else(|| format!("av_{}", alt.name))
}

fn cell_eq(raw: &str, key: &str) -> bool {
    let raw = raw.trim();
    let key = key.trim();
    if raw == key {
        return true;
    }
    match (raw.parse::<f64>(), key.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn lookup<'a, V>(map: &'a BTreeMap<String, V>, raw: &str) -> Option<&'a V> {
    map.get(raw.trim())
        .or_else(|| map.iter().find(|(k, _)| cell_eq(raw, k)).map(|(_, v)| v))
}

struct Columns {
    index: BTreeMap<String, usize>,
}

impl Columns {
    fn get(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    }
}

fn parse_num(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("non-numeric value `{raw}`"),
    })
}

/// Reads a delimited file into a dataset according to `config`.
///
/// Rows matching any filter are dropped before parsing. Row indices in
/// errors are 1-based and count data rows only.
pub fn load_csv(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let delimiter = u8::try_from(config.delimiter)
        .map_err(|_| Error::Config("delimiter must be a single ASCII character".into()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let cols = Columns {
        index: headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect(),
    };

    let schema = config.schema();
    schema.validate()?;

    let filter_cols = config
        .filters
        .iter()
        .map(|f| Ok((cols.get(&f.column)?, f.drop.iter().map(CellValue::as_text).collect::<Vec<_>>())))
        .collect::<Result<Vec<_>>>()?;
    let char_cols = config
        .characteristics
        .iter()
        .map(|c| cols.get(&c.column))
        .collect::<Result<Vec<_>>>()?;
    let attr_cols = config
        .alternatives
        .iter()
        .map(|a| a.attributes.iter().map(|c| cols.get(&c.column)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let avail_cols = config
        .alternatives
        .iter()
        .map(|a| a.availability.as_deref().map(|c| cols.get(c)).transpose())
        .collect::<Result<Vec<_>>>()?;
    let choice_col = cols.get(&config.choice.column)?;

    let mut observations = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |idx: usize| record.get(idx).unwrap_or("");

        if filter_cols
            .iter()
            .any(|(idx, drop)| drop.iter().any(|d| cell_eq(cell(*idx), d)))
        {
            continue;
        }

        let mut z = Vec::with_capacity(schema.n_characteristics());
        for (rule, &idx) in config.characteristics.iter().zip(&char_cols) {
            match &rule.categorical {
                None => z.push(parse_num(cell(idx), row, &rule.column)? * schema.scale_of(&rule.column)),
                Some(levels) => {
                    let level = *lookup(levels, cell(idx)).ok_or_else(|| Error::Parse {
                        row,
                        column: rule.column.clone(),
                        message: format!("unmapped categorical value `{}`", cell(idx)),
                    })?;
                    z.extend((1..rule.n_levels()).map(|l| if l == level { 1.0 } else { 0.0 }));
                }
            }
        }

        let mut x = Vec::with_capacity(schema.n_alternatives());
        for (alt, idxs) in config.alternatives.iter().zip(&attr_cols) {
            let mut xi = Vec::with_capacity(idxs.len());
            for (attr, &idx) in alt.attributes.iter().zip(idxs) {
                xi.push(parse_num(cell(idx), row, &attr.column)? * schema.scale_of(&attr.column));
            }
            x.push(xi);
        }

        let mut available = Vec::with_capacity(schema.n_alternatives());
        for (alt, idx) in config.alternatives.iter().zip(&avail_cols) {
            available.push(match idx {
                None => true,
                Some(idx) => {
                    parse_num(cell(*idx), row, alt.availability.as_deref().unwrap_or(""))? != 0.0
                }
            });
        }

        let raw_choice = cell(choice_col);
        let chosen = match &config.choice.map {
            Some(map) => *lookup(map, raw_choice).ok_or_else(|| Error::Parse {
                row,
                column: config.choice.column.clone(),
                message: format!("unmapped choice value `{raw_choice}`"),
            })?,
            None => {
                let v = parse_num(raw_choice, row, &config.choice.column)?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Parse {
                        row,
                        column: config.choice.column.clone(),
                        message: format!("choice `{raw_choice}` is not an alternative index"),
                    });
                }
                v as usize
            }
        };

        let obs = Observation {
            z,
            x,
            available,
            chosen,
        };
        obs.validate(&schema)
            .map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        observations.push(obs);
    }

    if observations.is_empty() {
        return Err(Error::Data(format!(
            "{} contains no usable rows",
            path.display()
        )));
    }
    Ok(Dataset {
        schema,
        observations,
        split: SplitTag::Train,
    })
}

/// Writes a dataset in raw units (scaling divided back out).
///
/// Columns: characteristics, per-alternative attributes, availability flags,
/// then the zero-based choice index. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let schema = &data.schema;

    let mut header: Vec<String> = schema.characteristic_names.clone();
    for alt in &schema.alternatives {
        header.extend(alt.attributes.iter().map(|a| a.column.clone()));
    }
    header.extend(schema.alternatives.iter().map(written_availability));
    header.push(schema.choice_name.clone());
    out.push_str(&header.join(","));
    out.push('\n');

    let char_scale: Vec<f64> = schema
        .characteristic_names
        .iter()
        .map(|c| schema.scale_of(c))
        .collect();
    for obs in &data.observations {
        let mut fields: Vec<String> = obs
            .z
            .iter()
            .zip(&char_scale)
            .map(|(v, s)| (v / s).to_string())
            .collect();
        for (i, xi) in obs.x.iter().enumerate() {
            fields.extend(
                xi.iter()
                    .enumerate()
                    .map(|(k, v)| (v / schema.attribute_scale(i, k)).to_string()),
            );
        }
        fields.extend(obs.available.iter().map(|a| if *a { "1" } else { "0" }.to_string()));
        fields.push(obs.chosen.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
