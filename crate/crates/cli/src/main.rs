//! `iqprint`: generate synthetic captures, train fingerprinting models,
//! evaluate them and verify messages.
//!
//! Every subcommand prints one JSON document `{"command", "config",
//! "reports"}` on stdout; diagnostics go to stderr. Exit codes: 0 success,
//! 1 usage or configuration error, 2 data or format error, 3 model or
//! training error, 4 message rejected under `verify --strict`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use iqprint::datapipe::{filter_by_noise, partition_transmitters, read_records, split_dataset, write_records};
use iqprint::model::{load_checkpoint, save_checkpoint, train, FingerprintModel, ModelConfig};
use iqprint::sigcore::{noise_score, HeaderSpec};
use iqprint::synth::{generate_dataset, replay, rng_from_seed, GenConfig, MessageCount, MessageRecord};
use iqprint::verify::{
    decide, run_scenario, write_metrics_json, write_roc_csv, AnchorSet, Scenario, ScenarioConfig, ScenarioInputs,
};
use iqprint::Error;

#[derive(Parser)]
#[command(name = "iqprint", version, about = "Satellite transmitter fingerprinting toolkit", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic SIQ1 dataset.
    Synth(SynthArgs),
    /// Train a model on a SIQ1 dataset.
    Train(TrainArgs),
    /// Run an evaluation scenario.
    Eval(EvalArgs),
    /// Score messages against stored anchors.
    Verify(VerifyArgs),
    /// Replay a dataset through an attacker's radio.
    Attack(AttackArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML generation config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tx: Option<usize>,
    /// Messages per transmitter.
    #[arg(long)]
    msgs: Option<usize>,
    #[arg(long)]
    osr: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    severity: Option<f64>,
    /// Mean SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Relative echo growth per day.
    #[arg(long)]
    drift: Option<f64>,
    #[arg(long)]
    start_day: Option<f64>,
    #[arg(long)]
    first_message_id: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training records.
    #[arg(long)]
    data: PathBuf,
    /// Validation records. Without it, `--data` is split 90:5:5.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Where to write the test part of the internal split.
    #[arg(long)]
    test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Transmitter ids to leave out of training.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<u32>,
    /// Keep only this fraction of least-noisy training messages.
    #[arg(long)]
    keep: Option<f64>,
    /// TOML model config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    /// Seeds both initialization and batching.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Evaluation pool from the training era.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    scenario: String,
    #[arg(long, value_delimiter = ',')]
    anchors: Option<Vec<usize>>,
    /// Later capture for `timegap`.
    #[arg(long)]
    later: Option<PathBuf>,
    /// Held-out transmitter ids for `heldout`.
    #[arg(long, value_delimiter = ',')]
    heldout: Option<Vec<u32>>,
    /// TOML scenario config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    attacker_severity: Option<f64>,
    /// Directory for per-report metrics JSON and ROC CSV files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Records whose embeddings form each transmitter's anchor set.
    #[arg(long)]
    anchors: PathBuf,
    /// Messages to score against the anchors of the transmitter they claim.
    #[arg(long)]
    input: PathBuf,
    /// Claimed transmitter for every input message, instead of its own label.
    #[arg(long)]
    claim: Option<u32>,
    /// Accept when the mean anchor distance is at most this.
    #[arg(long)]
    threshold: f64,
    /// Exit with status 4 if any message is rejected.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    attacker_seed: Option<u64>,
    #[arg(long)]
    severity: Option<f64>,
    /// Converter bits; 0 disables quantization.
    #[arg(long)]
    bits: Option<u32>,
}

struct Failure {
    code: u8,
    message: String,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const MODEL: u8 = 3;
const REJECTED: u8 = 4;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Precondition(_) => USAGE,
            Error::TrainingFailure { .. } | Error::DegenerateEmbedding { .. } | Error::BatchStructure(_) => MODEL,
            _ => DATA,
        };
        Failure { code, message: e.to_string() }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))
}

fn load_data(path: &Path) -> CliResult<Vec<MessageRecord>> {
    read_records(path).map_err(Failure::from).map_err(|f| Failure { code: DATA.max(f.code), ..f })
}

fn load_model(path: &Path) -> CliResult<FingerprintModel> {
    load_checkpoint(path).map_err(|e| fail(MODEL, e.to_string()))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(fail(USAGE, format!("output directory {} does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn synth(a: SynthArgs) -> CliResult<Value> {
    let mut cfg: GenConfig = load_toml(a.config.as_deref())?;
    if let Some(v) = a.tx {
        cfg.n_transmitters = v;
    }
    if let Some(v) = a.msgs {
        cfg.messages = MessageCount::Fixed { count: v };
    }
    if let Some(v) = a.osr {
        cfg.oversampling = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.severity {
        cfg.severity = v;
    }
    if let Some(v) = a.snr {
        cfg.channel.snr_db = Some(v);
    }
    if let Some(v) = a.drift {
        cfg.channel.drift_rate = v;
    }
    if let Some(v) = a.start_day {
        cfg.start_day = v;
    }
    if let Some(v) = a.first_message_id {
        cfg.first_message_id = v;
    }
    ensure_parent(&a.out)?;
    let records = generate_dataset(&cfg)?;
    let n = write_records(&records, &a.out)?;
    log::info!("wrote {n} records to {}", a.out.display());
    let txs: BTreeSet<u32> = records.iter().map(|r| r.transmitter_id).collect();
    Ok(json!({
        "command": "synth",
        "config": { "generator": to_value(&cfg), "out": a.out },
        "reports": [{ "path": a.out, "records": n, "transmitters": txs.len() }],
    }))
}

fn train_cmd(a: TrainArgs) -> CliResult<Value> {
    let mut cfg: ModelConfig = match &a.config {
        Some(_) => load_toml(a.config.as_deref())?,
        None => ModelConfig::default(),
    };
    let records = load_data(&a.data)?;
    let len = records.first().ok_or_else(|| fail(DATA, format!("{} has no records", a.data.display())))?.waveform.len();
    if a.config.is_none() || cfg.input_len != len {
        let dim = a.dim.unwrap_or(cfg.embedding_dim);
        let tuned = ModelConfig::for_input_len(len, dim);
        if a.config.is_some() {
            log::warn!("config input_len {} does not match data length {len}; using default stages", cfg.input_len);
        }
        cfg = ModelConfig { input_len: len, embedding_dim: dim, stages: tuned.stages, ..cfg };
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.margin {
        cfg.margin = v;
    }
    if let Some(v) = a.seed {
        cfg.init_seed = v;
        cfg.batch_seed = v;
    }
    cfg.validate()?;
    ensure_parent(&a.out)?;
    if let Some(p) = &a.test_out {
        ensure_parent(p)?;
    }

    let exclude: BTreeSet<u32> = a.exclude.iter().copied().collect();
    let (kept, _) = partition_transmitters(records, &exclude);
    let (mut train_set, validation) = match &a.validation {
        Some(p) => {
            let (v, _) = partition_transmitters(load_data(p)?, &exclude);
            (kept, v)
        }
        None => {
            let split = split_dataset(kept, [0.9, 0.05, 0.05], a.split_seed)?;
            if let Some(p) = &a.test_out {
                write_records(&split.test, p)?;
            }
            (split.train, split.validation)
        }
    };
    if let Some(keep) = a.keep {
        train_set = filter_by_noise(train_set, keep)?;
    }
    log::info!("training on {} records, validating on {}", train_set.len(), validation.len());
    let model = train(&cfg, &train_set, &validation)?;
    save_checkpoint(&model, &a.out)?;
    Ok(json!({
        "command": "train",
        "config": {
            "model": to_value(&cfg),
            "data": a.data,
            "validation": a.validation,
            "split_seed": a.split_seed,
            "exclude": exclude,
            "keep": a.keep,
            "train_records": train_set.len(),
            "validation_records": validation.len(),
            "out": a.out,
        },
        "reports": to_value(&model.history()),
    }))
}

fn eval(a: EvalArgs) -> CliResult<Value> {
    let scenario: Scenario = a.scenario.parse()?;
    let mut cfg: ScenarioConfig = load_toml(a.config.as_deref())?;
    if let Some(v) = a.anchors.clone() {
        cfg.anchor_counts = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.attacker_severity {
        cfg.attacker_severity = v;
    }
    if scenario == Scenario::Timegap && a.later.is_none() {
        return Err(fail(USAGE, "timegap needs --later"));
    }
    if scenario == Scenario::Heldout && a.heldout.is_none() {
        return Err(fail(USAGE, "heldout needs --heldout"));
    }
    if let Some(d) = &a.out_dir {
        if !d.is_dir() {
            return Err(fail(USAGE, format!("output directory {} does not exist", d.display())));
        }
    }
    let model = load_model(&a.model)?;
    let records = load_data(&a.data)?;
    let later = a.later.as_deref().map(load_data).transpose()?;
    let heldout: Option<BTreeSet<u32>> = a.heldout.as_ref().map(|v| v.iter().copied().collect());
    let inputs = ScenarioInputs {
        records: &records,
        later: later.as_deref(),
        heldout: heldout.as_ref(),
        attacker: None,
    };
    let reports = run_scenario(&model, scenario, &cfg, &inputs)?;
    if let Some(dir) = &a.out_dir {
        for r in &reports {
            let stem = format!("{}-{}", r.metrics.scenario, r.metrics.anchors);
            write_metrics_json(&r.metrics, dir.join(format!("{stem}.json")))?;
            write_roc_csv(&r.roc, dir.join(format!("{stem}-roc.csv")))?;
        }
    }
    Ok(json!({
        "command": "eval",
        "config": {
            "scenario": scenario,
            "scenario_config": to_value(&cfg),
            "model": a.model,
            "data": a.data,
            "later": a.later,
            "heldout": heldout,
            "out_dir": a.out_dir,
        },
        "reports": reports.iter().map(|r| to_value(&r.metrics)).collect::<Vec<_>>(),
    }))
}

fn verify(a: VerifyArgs) -> CliResult<(Value, bool)> {
    if !(a.threshold >= 0.0) {
        return Err(fail(USAGE, format!("threshold must be >= 0, got {}", a.threshold)));
    }
    let model = load_model(&a.model)?;
    let anchor_records = load_data(&a.anchors)?;
    let inputs = load_data(&a.input)?;
    let mut groups: BTreeMap<u32, Vec<&MessageRecord>> = BTreeMap::new();
    for r in &anchor_records {
        groups.entry(r.transmitter_id).or_default().push(r);
    }
    let sets: BTreeMap<u32, AnchorSet> = groups
        .iter()
        .map(|(&t, recs)| AnchorSet::from_records(&model, recs).map(|s| (t, s)))
        .collect::<iqprint::Result<_>>()?;
    let waveforms: Vec<_> = inputs.iter().map(|r| &r.waveform).collect();
    let embeddings = model.encode_many(&waveforms)?;
    let mut rows = Vec::with_capacity(inputs.len());
    let mut all_accepted = true;
    for (r, e) in inputs.iter().zip(&embeddings) {
        let claimed = a.claim.unwrap_or(r.transmitter_id);
        let set = sets.get(&claimed).ok_or_else(|| {
            fail(DATA, format!("{}: no anchors for transmitter {claimed}", a.anchors.display()))
        })?;
        let score = set.score_embedding(e)?;
        let accept = decide(score, a.threshold);
        all_accepted &= accept;
        rows.push(json!({
            "transmitter_id": claimed,
            "message_id": r.message_id,
            "anchors": set.len(),
            "score": score,
            "accept": accept,
        }));
    }
    let out = json!({
        "command": "verify",
        "config": {
            "model": a.model,
            "anchors": a.anchors,
            "input": a.input,
            "claim": a.claim,
            "threshold": a.threshold,
            "strict": a.strict,
        },
        "reports": rows,
    });
    Ok((out, all_accepted))
}

fn attack(a: AttackArgs) -> CliResult<Value> {
    let mut cfg = ScenarioConfig::default();
    if let Some(v) = a.attacker_seed {
        cfg.attacker_seed = v;
    }
    if let Some(v) = a.severity {
        cfg.attacker_severity = v;
    }
    if let Some(v) = a.bits {
        cfg.attacker_quantization_bits = (v > 0).then_some(v);
    }
    ensure_parent(&a.out)?;
    let attacker = cfg.attacker()?;
    let records = load_data(&a.input)?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let mut rng = rng_from_seed(a.seed ^ (u64::from(r.transmitter_id) << 40) ^ r.message_id);
        let waveform = replay(&r.waveform, &attacker, &mut rng)?;
        let score = match waveform.len() % 8 {
            0 => noise_score(&waveform, &HeaderSpec::iridium(waveform.len() / 8)).ok().map(|s| s as f32),
            _ => None,
        };
        out.push(MessageRecord { waveform, noise_score: score, ..r });
    }
    let n = write_records(&out, &a.out)?;
    Ok(json!({
        "command": "attack",
        "config": {
            "input": a.input,
            "out": a.out,
            "seed": a.seed,
            "attacker": to_value(&attacker),
        },
        "reports": [{ "path": a.out, "records": n }],
    }))
}

fn run(cli: Cli) -> CliResult<(Value, u8)> {
    match cli.command {
        Command::Synth(a) => synth(a).map(|v| (v, 0)),
        Command::Train(a) => train_cmd(a).map(|v| (v, 0)),
        Command::Eval(a) => eval(a).map(|v| (v, 0)),
        Command::Verify(a) => {
            let strict = a.strict;
            let (v, ok) = verify(a)?;
            Ok((v, if strict && !ok { REJECTED } else { 0 }))
        }
        Command::Attack(a) => attack(a).map(|v| (v, 0)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok((value, code)) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
