//! Ready-made schemas and utility specifications for the synthetic
//! experiment and the Swissmetro mode-choice data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::choice::{AlternativeUtilityConfig, UtilityConfig, UtilitySpec};
use crate::data::{Dataset, AlternativeSchema, AttributeColumn, CellValue, CharacteristicRule, ChoiceRule, FilterRule, IngestConfig};
use crate::error::Result;
use crate::estimation::{ModelTemplate, RclSpec};
use crate::indicators::{error_metrics, taste_recovery_regression, value_of_time, ErrorMetrics, VotConvention};
use crate::model::{FittedModel, ModelKind};
use crate::nn::{Activation, MlpSpec, OutputTransform};
use crate::synth::{self, TrueTasteParams};

/// Synthetic-data model families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticModel {
    #[serde(rename = "tastenet")]
    TasteNet,
    MnlI,
    MnlII,
    MnlTrue,
    RclI,
    RclII,
}

/// Names of the parametric taste coefficients, aligned with
/// [`synth::TASTE_TERMS`].
pub const TASTE_PARAM_NAMES: [&str; 7] = ["b0", "b_inc", "b_full", "b_flex", "b_inc_full", "b_inc_flex", "b_full_flex"];

fn taste_terms(n: usize) -> Vec<String> {
    let factors = ["", " * inc", " * full", " * flex", " * inc * full", " * inc * flex", " * full * flex"];
    let mut terms = vec!["-1 * cost".to_string()];
    terms.extend((0..n).map(|k| format!("param:{}{} * time", TASTE_PARAM_NAMES[k], factors[k])));
    terms
}

fn binary(terms: Vec<String>, asc1: &str) -> UtilityConfig {
    let alt = |name: &str, asc: &str| AlternativeUtilityConfig {
        name: name.into(),
        asc: asc.into(),
        terms: terms.clone(),
    };
    UtilityConfig::new(vec![alt("alt0", "0"), alt("alt1", asc1)])
}

/// Utility configuration of a synthetic-data model.
pub fn synthetic_utility(model: SyntheticModel) -> UtilityConfig {
    match model {
        SyntheticModel::TasteNet => binary(vec!["-1 * cost".into(), "net:vot * time".into()], "param:asc1"),
        SyntheticModel::MnlI | SyntheticModel::RclI => binary(taste_terms(4), "param:asc1"),
        SyntheticModel::MnlII | SyntheticModel::RclII => {
            let mut t = taste_terms(4);
            t.push("param:b_inc_full * inc * full * time".into());
            binary(t, "param:asc1")
        }
        SyntheticModel::MnlTrue => binary(taste_terms(7), "param:asc1"),
    }
}

/// Single hidden layer with a nonpositive value-of-time output.
pub fn synthetic_network(hidden: usize, activation: Activation) -> MlpSpec {
    MlpSpec::new(vec![hidden], activation, vec![OutputTransform::NonPositiveRelu])
}

/// Training template of a synthetic model; TasteNet uses `H = 7` rectifier
/// units.
pub fn synthetic_template(model: SyntheticModel) -> Result<ModelTemplate> {
    let schema = synth::schema();
    let utility = UtilitySpec::parse(&synthetic_utility(model), &schema)?;
    let t = ModelTemplate::new(schema, utility);
    Ok(match model {
        SyntheticModel::TasteNet => t.with_network(synthetic_network(7, Activation::Relu)),
        SyntheticModel::RclI | SyntheticModel::RclII => t.with_rcl(RclSpec::default()),
        _ => t,
    })
}

/// The data-generating model as a fitted model with fixed coefficients.
pub fn true_model(params: &TrueTasteParams) -> Result<FittedModel> {
    let factors = ["", " * inc", " * full", " * flex", " * inc * full", " * inc * flex", " * full * flex"];
    let mut terms = vec!["-1 * cost".to_string()];
    terms.extend(params.b.iter().zip(factors).map(|(b, f)| format!("{b:?}{f} * time")));
    let cfg = binary(terms, &format!("{:?}", params.asc1));
    let schema = synth::schema();
    let utility = UtilitySpec::parse(&cfg, &schema)?;
    FittedModel::new(ModelKind::Truth, schema, utility, None, Vec::new(), None)
}

/// Estimates aligned with [`TrueTasteParams::as_vector`]: `asc1` and the
/// seven taste coefficients. Terms a model lacks count as zero. For a
/// network model the taste coefficients come from regressing its predicted
/// `vot` output on the polynomial features over `data`.
pub fn recovered_coefficients(model: &FittedModel, data: &Dataset) -> Result<Vec<f64>> {
    let param = |name: &str| model.utility.param_index(name).map_or(0.0, |i| model.beta[i]);
    let mut out = vec![param("asc1")];
    match (&model.network, model.utility.net_index("vot")) {
        (Some(_), Some(k)) => {
            let z: Vec<Vec<f64>> = data.observations.iter().map(|o| o.z.clone()).collect();
            let beta: Vec<f64> = z.iter().map(|z| model.net_tastes(z)[k]).collect();
            out.extend(taste_recovery_regression(&beta, &z)?);
        }
        _ => out.extend(TASTE_PARAM_NAMES.iter().map(|n| param(n))),
    }
    Ok(out)
}

/// Coefficient errors of `model` against the truth, in the order of
/// [`TrueTasteParams::as_vector`].
pub fn coefficient_errors(model: &FittedModel, data: &Dataset, truth: &TrueTasteParams) -> Result<ErrorMetrics> {
    error_metrics(&recovered_coefficients(model, data)?, &truth.as_vector())
}

/// Per-person value-of-time errors (money per hour) of `model` against the
/// data-generating model over `data`.
pub fn vot_errors(model: &FittedModel, data: &Dataset, truth: &TrueTasteParams) -> Result<ErrorMetrics> {
    let truth_model = true_model(truth)?;
    let conv = VotConvention::default();
    let mut est = Vec::with_capacity(data.len());
    let mut tru = Vec::with_capacity(data.len());
    for obs in &data.observations {
        est.push(value_of_time(model, obs, &conv)?[0].unwrap_or(f64::NAN));
        tru.push(value_of_time(&truth_model, obs, &conv)?[0].unwrap_or(f64::NAN));
    }
    error_metrics(&est, &tru)
}

/// Ingestion rules for the public Swissmetro file (tab separated).
///
/// Rows with unknown age, "other" purpose or unknown choice are dropped;
/// categorical characteristics are recoded to 0-based levels and dummy
/// coded against level 0. Time, headway and cost are scaled by 1/100.
pub fn swissmetro_ingest() -> IngestConfig {
    let levels = |pairs: &[(&str, usize)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect::<Vec<_>>();
    let characteristics = vec![
        CharacteristicRule::numeric("MALE"),
        CharacteristicRule::categorical("AGE", levels(&[("1", 0), ("2", 1), ("3", 2), ("4", 3), ("5", 4)])),
        CharacteristicRule::categorical("INCOME", levels(&[("0", 0), ("1", 0), ("2", 1), ("3", 2), ("4", 3)])),
        CharacteristicRule::numeric("FIRST"),
        CharacteristicRule::categorical("WHO", levels(&[("0", 0), ("1", 0), ("2", 1), ("3", 2)])),
        CharacteristicRule::categorical(
            "PURPOSE",
            levels(&[("1", 0), ("5", 0), ("2", 1), ("6", 1), ("3", 2), ("7", 2), ("4", 3), ("8", 3)]),
        ),
        CharacteristicRule::categorical("LUGGAGE", levels(&[("0", 0), ("1", 1), ("3", 2)])),
        CharacteristicRule::numeric("GA"),
    ];
    let alt = |name: &str, attrs: &[(&str, &str)], av: &str| AlternativeSchema {
        name: name.into(),
        attributes: attrs.iter().map(|(n, c)| AttributeColumn::new(*n, *c)).collect(),
        availability: Some(av.into()),
    };
    let alternatives = vec![
        alt("TRAIN", &[("time", "TRAIN_TT"), ("headway", "TRAIN_HE"), ("cost", "TRAIN_CO")], "TRAIN_AV"),
        alt(
            "SM",
            &[("time", "SM_TT"), ("headway", "SM_HE"), ("seats", "SM_SEATS"), ("cost", "SM_CO")],
            "SM_AV",
        ),
        alt("CAR", &[("time", "CAR_TT"), ("cost", "CAR_CO")], "CAR_AV"),
    ];
    let scaling: BTreeMap<String, f64> = ["TRAIN_TT", "TRAIN_HE", "TRAIN_CO", "SM_TT", "SM_HE", "SM_CO", "CAR_TT", "CAR_CO"]
        .iter()
        .map(|c| (c.to_string(), 0.01))
        .collect();
    IngestConfig {
        characteristics,
        alternatives,
        choice: ChoiceRule {
            column: "CHOICE".into(),
            map: Some(levels(&[("1", 0), ("2", 1), ("3", 2)]).into_iter().collect()),
        },
        filters: vec![
            FilterRule {
                column: "AGE".into(),
                drop: vec![CellValue::Int(6)],
            },
            FilterRule {
                column: "PURPOSE".into(),
                drop: vec![CellValue::Int(9)],
            },
            FilterRule {
                column: "CHOICE".into(),
                drop: vec![CellValue::Int(0)],
            },
        ],
        scaling,
        delimiter: '\t',
    }
}

/// Swissmetro model families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwissmetroModel {
    MnlA,
    MnlB,
    MnlC,
    #[serde(rename = "tastenet")]
    TasteNet,
}

/// Train, dev and test fractions of the Swissmetro split.
pub const SWISSMETRO_SPLIT: [f64; 3] = [0.7, 0.15, 0.15];

/// Hidden units of the selected Swissmetro TasteNet.
pub const SWISSMETRO_HIDDEN: usize = 80;

/// Network outputs of the Swissmetro TasteNet and MNL-C, in output order.
pub const SWISSMETRO_OUTPUTS: [&str; 8] = ["train_tt", "sm_tt", "car_tt", "train_he", "sm_he", "sm_seats", "asc_train", "asc_sm"];

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

pub fn swissmetro_utility(model: SwissmetroModel) -> UtilityConfig {
    let alt = |name: &str, asc: &str, terms: Vec<String>| AlternativeUtilityConfig::new(name, asc, &strs(&terms));
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<String>>();
    match model {
        SwissmetroModel::TasteNet | SwissmetroModel::MnlC => {
            let mut cfg = UtilityConfig::new(vec![
                alt(
                    "TRAIN",
                    "net:asc_train",
                    s(&["-1 * cost", "net:train_tt * time", "net:train_he * headway"]),
                ),
                alt(
                    "SM",
                    "net:asc_sm",
                    s(&["-1 * cost", "net:sm_tt * time", "net:sm_he * headway", "net:sm_seats * seats"]),
                ),
                alt("CAR", "0", s(&["-1 * cost", "net:car_tt * time"])),
            ]);
            cfg.net_outputs = s(&SWISSMETRO_OUTPUTS);
            cfg
        }
        SwissmetroModel::MnlA | SwissmetroModel::MnlB => {
            let mut train = s(&["-1 * cost", "param:b_tt_train * time", "param:b_he_train * headway", "param:b_ga_train * GA"]);
            let mut sm = s(&[
                "-1 * cost",
                "param:b_tt_sm * time",
                "param:b_he_sm * headway",
                "param:b_seats_sm * seats",
                "param:b_ga_sm * GA",
            ]);
            let mut car = s(&[
                "-1 * cost",
                "param:b_tt_car * time",
                "param:b_lug1_car * LUGGAGE_1",
                "param:b_lug2_car * LUGGAGE_2",
            ]);
            if model == SwissmetroModel::MnlA {
                train.extend((1..=4).map(|k| format!("param:b_age{k}_train * AGE_{k}")));
            } else {
                for (mode, terms) in [("train", &mut train), ("sm", &mut sm), ("car", &mut car)] {
                    terms.extend((1..=4).map(|k| format!("param:b_tt_age{k}_{mode} * time * AGE_{k}")));
                    terms.extend((1..=3).map(|k| format!("param:b_tt_inc{k}_{mode} * time * INCOME_{k}")));
                    terms.extend((1..=3).map(|k| format!("param:b_tt_purp{k}_{mode} * time * PURPOSE_{k}")));
                }
            }
            UtilityConfig::new(vec![
                alt("TRAIN", "param:asc_train", train),
                alt("SM", "param:asc_sm", sm),
                alt("CAR", "0", car),
            ])
        }
    }
}

/// Output transforms of the Swissmetro network: time and headway tastes
/// constrained by `constrained`, seats and ASCs unconstrained.
pub fn swissmetro_transforms(constrained: OutputTransform) -> Vec<OutputTransform> {
    SWISSMETRO_OUTPUTS
        .iter()
        .map(|o| {
            if o.ends_with("_tt") || o.ends_with("_he") {
                constrained
            } else {
                OutputTransform::Identity
            }
        })
        .collect()
}

/// Training template of a Swissmetro model. TasteNet uses one hidden layer
/// of `hidden` units with negative-exponential time and headway outputs;
/// MNL-C is the same bindings with a purely linear map.
pub fn swissmetro_template(model: SwissmetroModel, hidden: usize, activation: Activation) -> Result<ModelTemplate> {
    let schema = swissmetro_ingest().schema();
    let utility = UtilitySpec::parse(&swissmetro_utility(model), &schema)?;
    let t = ModelTemplate::new(schema, utility);
    Ok(match model {
        SwissmetroModel::TasteNet => t.with_network(MlpSpec::new(
            vec![hidden],
            activation,
            swissmetro_transforms(OutputTransform::NegativeExp),
        )),
        SwissmetroModel::MnlC => t.with_network(MlpSpec::linear(vec![OutputTransform::Identity; SWISSMETRO_OUTPUTS.len()])),
        _ => t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_templates_parse() {
        for m in [
            SyntheticModel::TasteNet,
            SyntheticModel::MnlI,
            SyntheticModel::MnlII,
            SyntheticModel::MnlTrue,
            SyntheticModel::RclI,
            SyntheticModel::RclII,
        ] {
            let t = synthetic_template(m).unwrap();
            t.instantiate(1).unwrap();
        }
        let t = synthetic_template(SyntheticModel::MnlTrue).unwrap();
        assert_eq!(t.utility.n_params(), 8);
        let t = synthetic_template(SyntheticModel::MnlII).unwrap();
        assert_eq!(t.utility.n_params(), 6);
    }

    #[test]
    fn true_model_reproduces_generator() {
        let truth = TrueTasteParams::default();
        let m = true_model(&truth).unwrap();
        let person = synth::Person {
            inc: 0.5,
            full: 1.0,
            flex: 0.0,
        };
        let obs = crate::data::Observation {
            z: person.z(),
            x: vec![vec![2.0, 20.0], vec![8.0, 10.0]],
            available: vec![true, true],
            chosen: 1,
        };
        let out = m.choice_output(&obs, 0).unwrap();
        let v = synth::true_utilities(&truth, &person, [2.0, 8.0], [20.0, 10.0]);
        assert!((out.utilities[0].unwrap() - v[0]).abs() < 1e-12);
        assert!((out.utilities[1].unwrap() - v[1]).abs() < 1e-12);
        assert!((out.probabilities[1] - synth::prob_one(v)).abs() < 1e-12);
    }

    #[test]
    fn swissmetro_layout() {
        let schema = swissmetro_ingest().schema();
        assert_eq!(schema.n_characteristics(), 17);
        for m in [SwissmetroModel::MnlA, SwissmetroModel::MnlB, SwissmetroModel::MnlC, SwissmetroModel::TasteNet] {
            let t = swissmetro_template(m, 10, Activation::Relu).unwrap();
            t.instantiate(3).unwrap();
        }
        let a = swissmetro_template(SwissmetroModel::MnlA, 1, Activation::Relu).unwrap();
        assert_eq!(a.utility.n_params(), 2 + 3 + 2 + 2 + 1 + 4 + 2);
        let b = swissmetro_template(SwissmetroModel::MnlB, 1, Activation::Relu).unwrap();
        assert_eq!(b.utility.n_params(), 2 + 3 + 2 + 2 + 1 + 2 + 3 * 10);
    }
}
