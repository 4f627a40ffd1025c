//! Command-line front end: `gen`, `train`, `eval`, `indicators`, `grid`
//! and `probe`.
//!
//! Every command reads a [`RunConfig`] file (plus a few flag overrides) and
//! writes into `<output_dir>/<command>-<hash>`, where the hash covers the
//! command, the effective configuration and the contents of every input
//! file. Identical inputs therefore land in the same directory with
//! byte-identical files. Each directory holds a `manifest.json` listing
//! input and output hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::{load_csv, write_csv, Dataset, IngestConfig, SplitTag};
use crate::error::{Error, Result};
use crate::estimation::{grid_search, train};
use crate::indicators::{activation_probe, classification_metrics, indicator_report, ElasticityRequest, IndicatorRequest};
use crate::model::FittedModel;
use crate::presets::{self, TASTE_PARAM_NAMES};
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "tastenet", version, about = "Neural-network taste models for discrete choice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic train/dev/test CSVs and the true model.
    Gen(RunArgs),
    /// Train the model described by the config.
    Train(RunArgs),
    /// NLL, accuracy and macro-F1 of a model on a dataset.
    Eval(EvalArgs),
    /// Per-person tastes, values of time and elasticities.
    Indicators(IndicatorArgs),
    /// Hyperparameter grid search.
    Grid(GridArgs),
    /// Hidden-unit activations over a grid of characteristics.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides the root seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output_dir` of the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for SplitTag {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitTag::Train,
            SplitArg::Dev => SplitTag::Dev,
            SplitArg::Test => SplitTag::Test,
        }
    }
}

/// Model file plus the data to evaluate it on: either `--data`, read with
/// the model's own schema, or a split of the config's data.
#[derive(Debug, Args)]
pub struct ModelDataArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    /// CSV written by `gen` or with the same layout.
    #[arg(short, long)]
    pub data: Option<PathBuf>,
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub io: ModelDataArgs,
}

#[derive(Debug, Args)]
pub struct IndicatorArgs {
    #[command(flatten)]
    pub io: ModelDataArgs,
    /// Adds values of time to the request.
    #[arg(long)]
    pub vot: bool,
    /// Adds an elasticity, `ALT:ATTR` or `ALT:ATTR:GROUP`.
    #[arg(long = "elasticity", value_name = "ALT:ATTR[:GROUP]")]
    pub elasticities: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Worker threads; 0 uses every core.
    #[arg(short, long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    /// Config with a `[probe]` section.
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Output directory of one command invocation and the files written to it.
struct Run {
    command: &'static str,
    dir: PathBuf,
    config_hash: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    fn start(command: &'static str, config: &RunConfig, inputs: &[PathBuf]) -> Result<Self> {
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hashes.insert(p.display().to_string(), file_hash(p)?);
        }
        let config_hash = RunConfig {
            output_dir: None,
            ..config.clone()
        }
        .hash();
        let key = json!({ "command": command, "config": config_hash, "inputs": hashes.values().collect::<Vec<_>>() });
        let id = sha256_hex(key.to_string().as_bytes());
        let dir = config.output_dir().join(format!("{command}-{}", &id[..16]));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            command,
            dir,
            config_hash,
            inputs: hashes,
            outputs: BTreeMap::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let h = file_hash(&self.path(name))?;
        self.outputs.insert(name.to_string(), h);
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.record(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(self, mut summary: Value) -> Result<Value> {
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let p = self.dir.join("manifest.json");
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
        summary["command"] = json!(self.command);
        summary["output_dir"] = json!(self.dir.display().to_string());
        Ok(summary)
    }
}

fn load_config(path: &Path, seed: Option<u64>, output_dir: &Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    if let Some(d) = output_dir {
        cfg.output_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<FittedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FittedModel::from_json(&text)
}

fn cmd_gen(args: &RunArgs) -> Result<Value> {
    let cfg = load_config(&args.config, args.seed, &args.output_dir)?;
    let gen = cfg.generator()?;
    let truth = cfg.truth();
    let (train, dev, test) = synth::generate_dataset(&gen, &truth)?;
    let mut run = Run::start("gen", &cfg, &[])?;
    for (name, d) in [("train.csv", &train), ("dev.csv", &dev), ("test.csv", &test)] {
        write_csv(d, run.path(name))?;
        run.record(name)?;
    }
    run.write_json("truth.json", &json!({ "generator": gen, "truth": truth }))?;
    let model = presets::true_model(&truth)?;
    run.write("true_model.json", model.to_json()?.as_bytes())?;
    run.finish(json!({ "rows": { "train": train.len(), "dev": dev.len(), "test": test.len() } }))
}

#[derive(Serialize)]
struct Coefficients {
    params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    /// Estimates aligned with the true synthetic coefficients.
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_aligned: Option<BTreeMap<String, f64>>,
}

fn coefficients(model: &FittedModel, synthetic: bool, train: &Dataset) -> Result<Coefficients> {
    let params = model
        .utility
        .params
        .iter()
        .cloned()
        .zip(model.beta.iter().copied())
        .collect();
    let truth_aligned = if synthetic {
        let names = std::iter::once("asc1").chain(TASTE_PARAM_NAMES);
        let values = presets::recovered_coefficients(model, train)?;
        Some(names.map(String::from).zip(values).collect())
    } else {
        None
    };
    Ok(Coefficients {
        params,
        sigma: model.random.as_ref().map(|r| r.sigma()),
        truth_aligned,
    })
}

fn split_metrics(model: &FittedModel, splits: &[(&str, &Dataset)]) -> Result<Value> {
    let mut out = serde_json::Map::new();
    for (name, d) in splits {
        out.insert(name.to_string(), serde_json::to_value(classification_metrics(model, d)?)?);
    }
    Ok(Value::Object(out))
}

fn cmd_train(args: &RunArgs) -> Result<Value> {
    let cfg = load_config(&args.config, args.seed, &args.output_dir)?;
    let template = cfg.template()?;
    let tcfg = cfg.training()?;
    tcfg.validate()?;
    let data = cfg.load_data()?;
    let model = train(&template, &data.train, &data.dev, &tcfg)?;

    let mut run = Run::start("train", &cfg, &data.inputs)?;
    run.write("model.json", model.to_json()?.as_bytes())?;
    let rec = model.training.as_ref().expect("trained model has a record");
    run.write_with("history.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for e in &rec.history {
            w.serialize(e).map_err(|e| Error::Serde(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Serde(e.to_string()))
    })?;
    run.write_json("coefficients.json", &coefficients(&model, cfg.is_synthetic(), &data.train)?)?;
    let mut splits = vec![("train", &data.train), ("dev", &data.dev)];
    if let Some(t) = &data.test {
        splits.push(("test", t));
    }
    let metrics = split_metrics(&model, &splits)?;
    run.write_json("metrics.json", &metrics)?;
    run.finish(json!({
        "kind": model.kind,
        "best_epoch": rec.best_epoch,
        "best_dev_nll": rec.best_dev_nll,
        "metrics": metrics,
    }))
}

/// Model, dataset and the config (if any) of a model-plus-data command.
fn model_and_data(io: &ModelDataArgs) -> Result<(FittedModel, Dataset, RunConfig, Vec<PathBuf>)> {
    let model = load_model(&io.model)?;
    let cfg = match &io.config {
        Some(p) => load_config(p, io.seed, &io.output_dir)?,
        None => RunConfig {
            seed: io.seed,
            output_dir: io.output_dir.clone(),
            ..RunConfig::default()
        },
    };
    let mut inputs = vec![io.model.clone()];
    let data = match &io.data {
        Some(p) => {
            inputs.push(p.clone());
            let ingest = match &io.config {
                Some(_) => cfg.ingest()?,
                None => IngestConfig::for_written(&model.schema),
            };
            load_csv(p, &ingest)?
        }
        None => {
            if io.config.is_none() {
                return Err(Error::Argument("give --data or --config".into()));
            }
            let splits = cfg.load_data()?;
            inputs.extend(splits.inputs.iter().cloned());
            splits.get(io.split.into())?.clone()
        }
    };
    if data.is_empty() {
        return Err(Error::Data("the dataset is empty".into()));
    }
    model.check_compatible(&data)?;
    Ok((model, data, cfg, inputs))
}

fn cmd_eval(args: &EvalArgs) -> Result<Value> {
    let (model, data, cfg, inputs) = model_and_data(&args.io)?;
    let metrics = classification_metrics(&model, &data)?;
    let mut run = Run::start("eval", &cfg, &inputs)?;
    run.write_json("metrics.json", &metrics)?;
    run.finish(json!({ "metrics": metrics }))
}

fn parse_elasticity(s: &str) -> Result<ElasticityRequest> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, k] => Ok(ElasticityRequest {
            alternative: a.to_string(),
            attribute: k.to_string(),
            group: None,
        }),
        [a, k, g] => Ok(ElasticityRequest {
            alternative: a.to_string(),
            attribute: k.to_string(),
            group: Some(g.to_string()),
        }),
        _ => Err(Error::Argument(format!("elasticity `{s}` is not ALT:ATTR[:GROUP]"))),
    }
}

fn cmd_indicators(args: &IndicatorArgs) -> Result<Value> {
    let (model, data, mut cfg, inputs) = model_and_data(&args.io)?;
    let mut request: IndicatorRequest = cfg.indicators.clone().unwrap_or_default();
    request.vot |= args.vot;
    for e in &args.elasticities {
        request.elasticities.push(parse_elasticity(e)?);
    }
    if !request.vot && request.elasticities.is_empty() && cfg.indicators.is_none() {
        request.vot = true;
    }
    cfg.indicators = Some(request.clone());
    let report = indicator_report(&model, &data, &request)?;

    let mut run = Run::start("indicators", &cfg, &inputs)?;
    run.write_with("indicators.csv", |buf| report.write_csv(buf))?;
    let aggregates: Vec<Value> = report
        .elasticities
        .iter()
        .map(|e| json!({ "alternative": e.alternative, "attribute": e.attribute, "numeric": e.numeric, "aggregate": e.aggregate }))
        .collect();
    let mut summary = json!({ "summaries": report.summaries, "aggregate_elasticities": aggregates });
    if request.vot && model.schema.same_layout(&synth::schema()) && data.schema.same_layout(&synth::schema()) {
        summary["vot_errors_vs_truth"] = serde_json::to_value(presets::vot_errors(&model, &data, &cfg.truth())?)?;
    }
    run.write_json("indicators.json", &summary)?;
    run.finish(summary)
}

fn cmd_grid(args: &GridArgs) -> Result<Value> {
    let cfg = load_config(&args.run.config, args.run.seed, &args.run.output_dir)?;
    let space = cfg
        .grid
        .clone()
        .ok_or_else(|| Error::Config("`[grid]` is required for grid search".into()))?;
    let template = cfg.template()?;
    let tcfg = cfg.training()?;
    let data = cfg.load_data()?;
    let result = grid_search(&template, &space, &data.train, &data.dev, &tcfg, args.workers)?;

    let mut run = Run::start("grid", &cfg, &data.inputs)?;
    run.write_with("grid.csv", |buf| result.write_csv(buf))?;
    let best_row = result.ranking.first().map(|&i| &result.rows[i]);
    if let Some(best) = &result.best {
        run.write("best_model.json", best.to_json()?.as_bytes())?;
    }
    let summary = json!({
        "runs": result.rows.len(),
        "failed": result.rows.iter().filter(|r| r.error.is_some()).count(),
        "best": best_row,
    });
    run.write_json("grid.json", &json!({ "ranking": result.ranking, "best": best_row }))?;
    run.finish(summary)
}

fn cmd_probe(args: &ProbeArgs) -> Result<Value> {
    let cfg = load_config(&args.config, None, &args.output_dir)?;
    let grid = cfg
        .probe
        .clone()
        .ok_or_else(|| Error::Config("`[probe]` is required for probing".into()))?;
    let model = load_model(&args.model)?;
    let result = activation_probe(&model, &grid)?;
    let mut run = Run::start("probe", &cfg, &[args.model.clone()])?;
    run.write_with("probe.csv", |buf| result.write_csv(buf))?;
    run.finish(json!({ "points": result.points.len() }))
}

/// Runs one parsed command and returns its JSON summary.
pub fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Indicators(a) => cmd_indicators(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Probe(a) => cmd_probe(a),
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Indicators(_) => "indicators",
            Command::Grid(_) => "grid",
            Command::Probe(_) => "probe",
        }
    }
}

/// Machine-readable form of a failed command.
pub fn error_json(command: &str, e: &Error) -> Value {
    json!({ "error": { "command": command, "kind": e.kind(), "message": e.to_string() } })
}
