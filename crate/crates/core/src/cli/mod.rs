//! The `midre` command line.
//!
//! Every command writes `manifest.json` into its output directory before any
//! other artifact. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! validation error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{generate_synthetic, load_jsonl, Split, SyntheticSpec};
use crate::evalharness::{
    build_examples, evaluate, export_gate_traces, run_ablation, run_variant, write_ablation_csv, write_gate_jsonl,
    AblationVariant, Dataset, InputPlan, TrainConfig,
};
use crate::model::MidreModel;
use crate::rationale::{
    generate_all, HttpLvlmClient, ImagePayload, LvlmEndpointConfig, ParseStatus, PromptSet, RationaleCache,
    RationaleInput, Stage,
};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const GATES_FILE: &str = "gates.jsonl";

#[derive(Debug, Parser)]
#[command(name = "midre", version, about = "Dual reasoning experts for multimodal sarcasm detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Query a vision-language endpoint for image, text and joint rationales.
    GenerateRationales(GenerateArgs),
    /// Write a synthetic contextual-sarcasm corpus.
    Synth(SynthArgs),
    /// Train one model and keep the best validation epoch.
    Train(TrainArgs),
    /// Score a trained model on one split.
    Eval(EvalArgs),
    /// Retrain and score a list of ablation variants.
    Ablate(AblateArgs),
    /// Export per-sample expert gate values.
    Gates(GatesArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Directory that image references are resolved against.
    #[arg(long)]
    pub images: PathBuf,
    /// Endpoint configuration (JSON).
    #[arg(long)]
    pub endpoint: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long, default_value = "image,text,multi")]
    pub stages: String,
    /// Directory with replacement `image.txt`, `text.txt`, `multimodal.txt` prompts.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Manifest directory; defaults to the directory of the cache file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub context_fraction: Option<f64>,
    #[arg(long)]
    pub rationale_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Settings shared by the training-side commands.
#[derive(Debug, Args)]
pub struct RunFlags {
    /// Run configuration or a previous manifest (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub toy_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub variant: Option<String>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Input variant; defaults to the one recorded next to the model.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub toy_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(
        long,
        default_value = "full,only_mul_rationale,only_txt_img_rationale,wo_er,wo_ir,wo_gate,linear_gate"
    )]
    pub variants: String,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct GatesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub toy_seed: Option<u64>,
}

/// Resolved settings of a training-side run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub variant: AblationVariant,
    /// Seed of the toy embedder for data directories without feature files.
    pub toy_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            variant: AblationVariant::Full,
            toy_seed: 0,
        }
    }
}

/// Written before any other artifact of a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config: Value,
    pub args: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub version: String,
    pub out_dir: PathBuf,
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Reads a JSON file holding either the configuration itself or a manifest
/// whose `config` field holds it.
fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut value = read_json(path)?;
    if value.get("command").is_some() && value.get("config").is_some() {
        value = value["config"].take();
    }
    serde_json::from_value(value).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn resolve_run(flags: &RunFlags, variant: Option<&str>) -> Result<RunConfig> {
    let mut config = match &flags.config {
        Some(p) => read_config::<RunConfig>(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = flags.epochs {
        config.train.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        config.train.batch_size = v;
    }
    if let Some(v) = flags.lr {
        config.train.learning_rate = v;
    }
    if let Some(v) = flags.seed {
        config.train.seed = v;
    }
    if let Some(v) = flags.toy_seed {
        config.toy_seed = v;
    }
    if let Some(v) = variant {
        config.variant = AblationVariant::parse(v)?;
    }
    config.train.validate()?;
    Ok(config)
}

fn run_manifest(command: &str, config_path: Option<&PathBuf>, config: &impl Serialize, args: Value, seed: Option<u64>, out: &Path) -> Result<RunManifest> {
    let args = match args {
        Value::Object(m) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    };
    Ok(RunManifest {
        command: command.into(),
        config_path: config_path.cloned(),
        config: serde_json::to_value(config)?,
        args,
        seed,
        version: version_string(),
        out_dir: out.to_path_buf(),
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let stages = Stage::parse_list(&args.stages)?;
    let endpoint: LvlmEndpointConfig = read_config(&args.endpoint)?;
    endpoint.validate()?;
    let prompts = match &args.prompts {
        Some(dir) => PromptSet::load(dir)?,
        None => PromptSet::shipped(),
    };
    let out = args
        .out
        .clone()
        .or_else(|| args.cache.parent().map(Path::to_path_buf))
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let manifest = run_manifest(
        "generate-rationales",
        Some(&args.endpoint),
        &endpoint,
        json!({
            "samples": args.samples,
            "images": args.images,
            "cache": args.cache,
            "stages": stages,
            "prompts": args.prompts,
        }),
        endpoint.seed,
        &out,
    )?;
    write_manifest(&out, &manifest)?;

    let samples = load_jsonl(&args.samples)?;
    let needs_image = stages.iter().any(|s| s.needs_image());
    let mut inputs = Vec::with_capacity(samples.len());
    let mut failures = Vec::new();
    for s in &samples {
        let image = if needs_image {
            match ImagePayload::read(&args.images.join(&s.image_ref)) {
                Ok(img) => Some(img),
                Err(e) => {
                    failures.push(format!("{}: {e}", s.id));
                    continue;
                }
            }
        } else {
            None
        };
        inputs.push(RationaleInput {
            sample_id: s.id.clone(),
            text: Some(s.text.clone()),
            image,
        });
    }
    if let Some(parent) = args.cache.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let cache = Arc::new(RationaleCache::open(&args.cache)?);
    let client = Arc::new(HttpLvlmClient::new(endpoint.clone())?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let results = runtime.block_on(generate_all(
        client,
        &endpoint,
        inputs,
        &stages,
        Arc::new(prompts),
        cache,
    ));

    let mut counts: BTreeMap<Stage, [usize; 3]> = stages.iter().map(|&s| (s, [0; 3])).collect();
    let (mut cached, mut requests) = (0, 0);
    for (id, r) in results {
        match r {
            Ok(outcome) => {
                cached += outcome.cached as usize;
                requests += outcome.attempts;
                for (stage, status) in outcome.bundle.statuses() {
                    let slot = match status {
                        ParseStatus::Ok => 0,
                        ParseStatus::Repaired => 1,
                        ParseStatus::Failed => 2,
                    };
                    counts.entry(stage).or_default()[slot] += 1;
                }
            }
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    for (stage, [ok, repaired, failed]) in &counts {
        println!("{stage}: ok={ok} repaired={repaired} failed={failed}");
    }
    println!(
        "bundles={} cached={cached} requests={requests} failures={}",
        samples.len() - failures.len(),
        failures.len()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        for f in &failures {
            eprintln!("{f}");
        }
        Err(Error::Rationale {
            sample_id: format!("{} of {} samples", failures.len(), samples.len()),
            statuses: vec!["see messages above".into()],
        })
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => read_config::<SyntheticSpec>(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(v) = args.n_samples {
        spec.n_samples = v;
    }
    if let Some(v) = args.context_fraction {
        spec.context_fraction = v;
    }
    if let Some(v) = args.rationale_noise {
        spec.rationale_noise = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    spec.validate()?;
    let manifest = run_manifest("synth", args.spec.as_ref(), &spec, json!({}), Some(spec.seed), &args.out)?;
    write_manifest(&args.out, &manifest)?;
    let corpus = generate_synthetic(&spec)?;
    corpus.write(&args.out)?;
    let context = corpus.latents.iter().filter(|l| l.context).count();
    println!(
        "samples={} context={context} feature_only_bound={:.4} rationale_bound={:.4}",
        corpus.samples.len(),
        spec.feature_only_bound(),
        spec.rationale_bound()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = resolve_run(&args.run, args.variant.as_deref())?;
    let manifest = run_manifest(
        "train",
        args.run.config.as_ref(),
        &config,
        json!({"data": args.data}),
        Some(config.train.seed),
        &args.out,
    )?;
    write_manifest(&args.out, &manifest)?;
    let dataset = Dataset::load(&args.data, &config.train.model, config.toy_seed)?;
    let row = run_variant(&dataset, &config.train, config.variant, config.toy_seed)?;
    write_jsonl(&args.out.join(HISTORY_FILE), &row.history)?;
    std::fs::write(args.out.join(MODEL_FILE), row.model.to_json()?)?;
    std::fs::write(args.out.join(REPORT_FILE), serde_json::to_string_pretty(&row.report)? + "\n")?;
    println!(
        "variant={} best_epoch={} test_acc={:.4} macro_f1={:.4}",
        row.variant, row.best_epoch, row.report.accuracy, row.report.macro_f1
    );
    Ok(())
}

/// Variant and toy seed recorded by the `train` run that produced `model`.
fn recorded_run(model: &Path) -> Option<RunConfig> {
    let manifest = model.parent()?.join(MANIFEST_FILE);
    read_config::<RunConfig>(&manifest).ok()
}

fn load_model(path: &Path) -> Result<MidreModel<f32>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    MidreModel::from_json(&std::fs::read_to_string(path)?)
}

/// Model, examples of one split and the resolved input plan.
fn scored_inputs(
    model_path: &Path,
    data: &Path,
    split: &str,
    variant: Option<&str>,
    toy_seed: Option<u64>,
) -> Result<(MidreModel<f32>, Vec<crate::evalharness::Example>, Value)> {
    let split = Split::parse(split)?;
    let recorded = recorded_run(model_path);
    let variant = match variant {
        Some(v) => AblationVariant::parse(v)?,
        None => recorded.as_ref().map_or(AblationVariant::Full, |r| r.variant),
    };
    let toy_seed = toy_seed.or(recorded.map(|r| r.toy_seed)).unwrap_or(0);
    let model = load_model(model_path)?;
    let spec = variant.spec();
    let plan = InputPlan {
        rationale: spec.rationale,
        reverse_streams: model.config().reverse_streams,
        toy_seed,
    };
    let dataset = Dataset::load(data, model.config(), toy_seed)?;
    let examples = build_examples(&dataset, &dataset.split(split), model.config(), &plan)?;
    if examples.is_empty() {
        return Err(Error::Validation(format!("split `{split}` has no samples")));
    }
    let resolved = json!({"variant": variant, "toy_seed": toy_seed, "split": split, "model": model.config()});
    Ok((model, examples, resolved))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (model, examples, resolved) =
        scored_inputs(&args.model, &args.data, &args.split, args.variant.as_deref(), args.toy_seed)?;
    let manifest = run_manifest(
        "eval",
        None,
        &resolved,
        json!({"model": args.model, "data": args.data}),
        None,
        &args.out,
    )?;
    write_manifest(&args.out, &manifest)?;
    let evaluation = evaluate(&model, &examples)?;
    std::fs::write(args.out.join(REPORT_FILE), serde_json::to_string_pretty(&evaluation.report)? + "\n")?;
    write_jsonl(&args.out.join(PREDICTIONS_FILE), &evaluation.predictions)?;
    let r = &evaluation.report;
    println!(
        "acc={:.4} macro_p={:.4} macro_r={:.4} macro_f1={:.4} mean_gate_er={:.4} mean_gate_ir={:.4}",
        r.accuracy,
        r.macro_precision,
        r.macro_recall,
        r.macro_f1,
        r.mean_gate_er.unwrap_or(f64::NAN),
        r.mean_gate_ir.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let variants = AblationVariant::parse_list(&args.variants)?;
    let config = resolve_run(&args.run, None)?;
    let manifest = run_manifest(
        "ablate",
        args.run.config.as_ref(),
        &config,
        json!({"data": args.data, "variants": variants, "retrained_per_variant": true}),
        Some(config.train.seed),
        &args.out,
    )?;
    write_manifest(&args.out, &manifest)?;
    let rows = if variants.is_empty() {
        Vec::new()
    } else {
        let dataset = Dataset::load(&args.data, &config.train.model, config.toy_seed)?;
        run_ablation(&dataset, &config.train, &variants, config.toy_seed)?
    };
    write_ablation_csv(&args.out.join(ABLATION_FILE), &rows)?;
    for row in &rows {
        println!("{}", crate::evalharness::csv_line(row));
    }
    Ok(())
}

fn cmd_gates(args: &GatesArgs) -> Result<()> {
    let (model, examples, resolved) =
        scored_inputs(&args.model, &args.data, &args.split, args.variant.as_deref(), args.toy_seed)?;
    let manifest = run_manifest(
        "gates",
        None,
        &resolved,
        json!({"model": args.model, "data": args.data}),
        None,
        &args.out,
    )?;
    write_manifest(&args.out, &manifest)?;
    let records = export_gate_traces(&model, &examples)?;
    write_gate_jsonl(&args.out.join(GATES_FILE), &records)?;
    let n = records.len().max(1) as f64;
    println!(
        "samples={} mean_er={:.4}",
        records.len(),
        records.iter().map(|r| r.mean_er).sum::<f64>() / n
    );
    Ok(())
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::GenerateRationales(a) => cmd_generate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Gates(a) => cmd_gates(a),
    }
}

pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Validation(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
