use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use rotscore::eval::{labeled_pairs, outcome_scores, schema_split, Split, SplitConfig};
use rotscore::exec::Database;
use rotscore::fixtures::{toy_schemas, ToySchema};
use rotscore::gmn::{
    auc, load_checkpoint, save_checkpoint, train, GmnModel, Hyperparams, LabeledPair, Real, Schedule, TrainConfig, TrainError,
};
use rotscore::pairgen::{ingest, held_out_schemas, split_by_schema, to_jsonl, SqlPair};
use rotscore::plan::load_catalog;
use rotscore::reward::Scorer;
use rotscore::service::{Defaults, Op, ScoreRequest, ScoreResponse, Service};
use rotscore_cli::{bind, serve_stream, serve_tcp, Pool};

#[derive(Parser)]
#[command(name = "rotscore", version, about = "Execution-free SQL reward scoring")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Outcome scorer; defaults to gmn when a checkpoint is given, relpm otherwise.
    #[arg(long, global = true, value_enum)]
    scorer: Option<ScorerArg>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long = "beta-f", global = true)]
    beta_f: Option<f64>,
    #[arg(long = "beta-kl", global = true)]
    beta_kl: Option<f64>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Catalog document for a schema outside the bundled set.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Database document for --catalog.
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    /// Schema id; names the --catalog schema when one is given.
    #[arg(long, global = true)]
    schema: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Gmn,
    Relpm,
    Astpm,
    Ex,
}

impl From<ScorerArg> for Scorer {
    fn from(s: ScorerArg) -> Scorer {
        match s {
            ScorerArg::Gmn => Scorer::Gmn,
            ScorerArg::Relpm => Scorer::Relpm,
            ScorerArg::Astpm => Scorer::Astpm,
            ScorerArg::Ex => Scorer::Ex,
        }
    }
}

#[derive(Args)]
struct Input {
    /// File holding the statement, or - for standard input.
    file: Option<PathBuf>,
    #[arg(long, conflicts_with = "file")]
    sql: Option<String>,
}

#[derive(Args)]
struct PairInput {
    /// File holding the generated statement.
    #[arg(long)]
    gen: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long = "gen-sql", conflicts_with = "gen")]
    gen_sql: Option<String>,
    #[arg(long = "ref-sql", conflicts_with = "reference")]
    ref_sql: Option<String>,
}

#[derive(Args)]
struct PairsArg {
    /// Pair file (JSON lines); generated from the bundled schemas when absent.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Number of schemas held out from training.
    #[arg(long = "held-out", default_value_t = 3)]
    held_out: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Constant,
    Cosine,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a statement and print its canonical form and syntax tree.
    Parse(Input),
    /// Lower a statement to its normalized operator tree.
    Plan(Input),
    /// Outcome score of a generated statement against a reference.
    Score(PairInput),
    /// Stepwise coverage rewards of a CTE-structured statement.
    Steps(PairInput),
    /// Per-token reward trace.
    Reward {
        #[command(flatten)]
        pair: PairInput,
        /// JSON array of per-token KL values.
        #[arg(long)]
        kl: Option<PathBuf>,
        #[arg(long = "no-stepwise")]
        no_stepwise: bool,
    },
    /// Synthesize a schema-split pair set as JSON lines.
    GenPairs {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long = "held-out-n", default_value_t = 600)]
        held_out_n: usize,
        #[arg(long = "held-out", default_value_t = 3)]
        held_out: usize,
        #[arg(long = "per-schema", default_value_t = 300)]
        per_schema: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a matching network and write a checkpoint.
    Train {
        #[command(flatten)]
        pairs: PairsArg,
        #[arg(long, default_value_t = 16)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = ScheduleArg::Cosine)]
        schedule: ScheduleArg,
        #[arg(long = "batch-size", default_value_t = 16)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
        precision: PrecisionArg,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// AUC of an outcome scorer on the held-out schemas.
    EvalAuc(PairsArg),
    /// Execute a statement on a schema's database.
    Exec(Input),
    /// NDJSON scoring service on standard input or a TCP port.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Per-sample scoring latency.
    Bench {
        #[command(flatten)]
        pairs: PairsArg,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

/// Exit status 1: the run is misconfigured.
struct ConfigError(String);

impl<E: std::fmt::Display> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.to_string())
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

fn statement(input: &Input) -> Result<String> {
    match (&input.sql, &input.file) {
        (Some(s), _) => Ok(s.clone()),
        (None, Some(f)) => Ok(read_text(f)?.trim().to_string()),
        (None, None) => Ok(read_text(Path::new("-"))?.trim().to_string()),
    }
}

fn side(text: &Option<String>, file: &Option<PathBuf>, name: &str) -> Result<String> {
    match (text, file) {
        (Some(s), _) => Ok(s.clone()),
        (None, Some(f)) => Ok(read_text(f)?.trim().to_string()),
        (None, None) => Err(ConfigError(format!("--{name} or --{name}-sql is required"))),
    }
}

struct Context {
    service: Service,
    schemas: Vec<ToySchema>,
    schema: Option<String>,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let mut schemas = toy_schemas();
        let mut schema = common.schema.clone();
        if let Some(path) = &common.catalog {
            let catalog = load_catalog(&read_text(path)?)?;
            let db = match &common.db {
                Some(p) => Database::from_json(&read_text(p)?, &catalog)?,
                None => Database::from_json(r#"{"tables":{}}"#, &catalog)?,
            };
            let id: &'static str = Box::leak(schema.clone().unwrap_or_else(|| "custom".into()).into_boxed_str());
            schemas.retain(|s| s.id != id);
            schemas.push(ToySchema { id, catalog, db });
            schema = Some(id.to_string());
        } else if common.db.is_some() {
            return Err(ConfigError("--db needs --catalog".into()));
        }
        if let Some(id) = &schema {
            if !schemas.iter().any(|s| s.id == id) {
                return Err(ConfigError(format!("no schema {id}")));
            }
        }
        let model = match &common.checkpoint {
            Some(p) => Some(Arc::new(load_checkpoint(&read_text(p)?)?)),
            None => None,
        };
        let base = Defaults::default();
        let defaults = Defaults {
            scorer: common.scorer.map(Scorer::from).unwrap_or(if model.is_some() { Scorer::Gmn } else { Scorer::Relpm }),
            alpha: common.alpha.unwrap_or(base.alpha),
            beta_f: common.beta_f.unwrap_or(base.beta_f),
            beta_kl: common.beta_kl.unwrap_or(base.beta_kl),
        };
        let mut service = Service { model, defaults, ..Service::default() };
        for s in &schemas {
            service.add_schema(s.clone());
        }
        let probe = service.config(None, None);
        if defaults_need_model(&service) && probe.model.is_none() {
            return Err(ConfigError("the gmn scorer needs --checkpoint".into()));
        }
        if !(probe.beta_kl >= 0.0) || !(0.0..=1.0).contains(&probe.alpha) || !(probe.beta_f > 0.0) {
            return Err(ConfigError("need beta-kl >= 0, alpha in [0, 1] and beta-f > 0".into()));
        }
        Ok(Context { service, schemas, schema })
    }

    fn request(&self, op: Op, gen: String, reference: Option<String>) -> ScoreRequest {
        ScoreRequest {
            id: "cli".into(),
            op,
            scorer: None,
            gen: Some(gen),
            reference,
            schema: self.schema.clone(),
            kl: None,
            tokens: None,
            stepwise: None,
        }
    }

    fn split(&self, arg: &PairsArg, seed: u64) -> Result<Split> {
        match &arg.pairs {
            None => Ok(schema_split(&self.schemas, &SplitConfig { held_out: arg.held_out, seed, ..SplitConfig::default() })?),
            Some(p) => {
                let report = ingest(p)?;
                if !report.rejected.is_empty() {
                    eprintln!("skipped {} rejected lines", report.rejected.len());
                }
                let mut ids: Vec<&str> = report.pairs.iter().map(|p| p.schema_id.as_str()).collect();
                ids.sort();
                ids.dedup();
                let held = held_out_schemas(&ids, arg.held_out, seed);
                let (train, held_out) = split_by_schema(report.pairs, &held);
                Ok(Split { held_out_schemas: held, train, held_out })
            }
        }
    }
}

fn defaults_need_model(s: &Service) -> bool {
    s.defaults.scorer == Scorer::Gmn
}

fn emit(value: &Json, pretty: bool) {
    let text = if pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) }.expect("json");
    println!("{text}");
}

/// Prints a service response; configuration classes fail the process.
fn respond(resp: ScoreResponse, pretty: bool) -> Result<()> {
    match (resp.payload, resp.error) {
        (Some(p), _) => {
            emit(&p, pretty);
            Ok(())
        }
        (None, Some(e)) if matches!(e.class.as_str(), "config" | "unknown-schema" | "missing-field" | "model" | "mismatch") => {
            Err(ConfigError(e.message))
        }
        (None, e) => {
            emit(&json!({ "error": e }), pretty);
            Ok(())
        }
    }
}

fn train_typed<F: Real>(train_set: &[LabeledPair], held: &[LabeledPair], config: &TrainConfig, seed: u64) -> Result<(String, Json)> {
    let model = GmnModel::<F>::new(Hyperparams::default(), seed);
    match train(&model, train_set, (!held.is_empty()).then_some(held), config) {
        Ok(out) => Ok((save_checkpoint(&out.model), serde_json::to_value(&out.history)?)),
        Err(TrainError::Diverged { epoch, last_good, history }) => {
            eprintln!("training diverged in epoch {epoch}; keeping the last finite parameters");
            Ok((save_checkpoint(&last_good), serde_json::to_value(&history)?))
        }
        Err(e) => Err(ConfigError(e.to_string())),
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(&cli.common)?;
    let pretty = cli.common.pretty;
    match &cli.command {
        Command::Parse(input) => {
            let sql = statement(input)?;
            respond(ctx.service.handle(&ctx.request(Op::Parse, sql, None)), pretty)
        }
        Command::Plan(input) => {
            let sql = statement(input)?;
            let resp = ctx.service.handle(&ctx.request(Op::Plan, sql, None));
            if let (true, Some(p)) = (pretty, &resp.payload) {
                print!("{}", p["tree"].as_str().unwrap_or_default());
                return Ok(());
            }
            respond(resp, pretty)
        }
        Command::Exec(input) => {
            let sql = statement(input)?;
            respond(ctx.service.handle(&ctx.request(Op::Exec, sql, None)), pretty)
        }
        Command::Score(pair) | Command::Steps(pair) => {
            let op = if matches!(cli.command, Command::Score(_)) { Op::Score } else { Op::Steps };
            let req = ctx.request(op, side(&pair.gen_sql, &pair.gen, "gen")?, Some(side(&pair.ref_sql, &pair.reference, "ref")?));
            respond(ctx.service.handle(&req), pretty)
        }
        Command::Reward { pair, kl, no_stepwise } => {
            let mut req = ctx.request(Op::RewardTrace, side(&pair.gen_sql, &pair.gen, "gen")?, Some(side(&pair.ref_sql, &pair.reference, "ref")?));
            if let Some(p) = kl {
                req.kl = Some(serde_json::from_str(&read_text(p)?)?);
            }
            req.stepwise = Some(!no_stepwise);
            respond(ctx.service.handle(&req), pretty)
        }
        Command::GenPairs { n, held_out_n, held_out, per_schema, out } => {
            let config = SplitConfig { held_out: *held_out, seeds_per_schema: *per_schema, n_train: *n, n_held_out: *held_out_n, seed: cli.common.seed };
            let split = schema_split(&ctx.schemas, &config)?;
            let mut all = split.train;
            all.extend(split.held_out);
            let text = to_jsonl(&all);
            match out {
                Some(p) => fs::write(p, text)?,
                None => io::stdout().write_all(text.as_bytes())?,
            }
            eprintln!("{} pairs; held-out schemas {:?}", all.len(), split.held_out_schemas);
            Ok(())
        }
        Command::Train { pairs, epochs, lr, schedule, batch_size, precision, out } => {
            let split = ctx.split(pairs, cli.common.seed)?;
            let d_pos = Hyperparams::default().d_pos;
            let train_set = labeled_pairs(&split.train, &ctx.schemas, d_pos)?;
            let held = labeled_pairs(&split.held_out, &ctx.schemas, d_pos)?;
            let schedule = match schedule {
                ScheduleArg::Constant => Schedule::Constant { lr: *lr },
                ScheduleArg::Cosine => Schedule::Cosine { lr: *lr, min_lr: lr / 20.0 },
            };
            let config = TrainConfig { schedule, batch_size: *batch_size, epochs: *epochs, seed: cli.common.seed, ..TrainConfig::default() };
            let started = Instant::now();
            let (doc, history) = match precision {
                PrecisionArg::F32 => train_typed::<f32>(&train_set, &held, &config, cli.common.seed)?,
                PrecisionArg::F64 => train_typed::<f64>(&train_set, &held, &config, cli.common.seed)?,
            };
            fs::write(out, doc)?;
            emit(
                &json!({
                    "checkpoint": out.display().to_string(),
                    "train_pairs": train_set.len(),
                    "held_out_pairs": held.len(),
                    "held_out_schemas": split.held_out_schemas,
                    "seconds": started.elapsed().as_secs_f64(),
                    "history": history,
                }),
                pretty,
            );
            Ok(())
        }
        Command::EvalAuc(pairs) => {
            let split = ctx.split(pairs, cli.common.seed)?;
            let config = ctx.service.config(None, None);
            let scores = outcome_scores(&split.held_out, &ctx.schemas, &config)?;
            let labels: Vec<bool> = split.held_out.iter().map(|p| p.label == 1).collect();
            let value = auc(&scores, &labels)?;
            emit(
                &json!({ "auc": value, "scorer": config.scorer, "pairs": labels.len(), "held_out_schemas": split.held_out_schemas }),
                pretty,
            );
            Ok(())
        }
        Command::Bench { pairs, samples } => {
            let split = ctx.split(pairs, cli.common.seed)?;
            let pool: Vec<&SqlPair> = split.held_out.iter().chain(&split.train).take(*samples).collect();
            let config = ctx.service.config(None, None);
            let mut times = Vec::with_capacity(pool.len());
            for p in &pool {
                let t = Instant::now();
                outcome_scores(std::slice::from_ref(*p), &ctx.schemas, &config)?;
                times.push(t.elapsed().as_secs_f64());
            }
            if times.is_empty() {
                return Err(ConfigError("no pairs to time".into()));
            }
            let total: f64 = times.iter().sum();
            let mut sorted = times.clone();
            sorted.sort_by(f64::total_cmp);
            let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
            emit(
                &json!({
                    "scorer": config.scorer,
                    "samples": times.len(),
                    "mean_seconds": total / times.len() as f64,
                    "p50_seconds": q(0.5),
                    "p95_seconds": q(0.95),
                    "total_seconds": total,
                }),
                pretty,
            );
            Ok(())
        }
        Command::Serve { port, workers } => {
            let service = Arc::new(ctx.service);
            match port {
                None => {
                    let pool = Pool::new(*workers);
                    serve_stream(&service, &pool, io::BufReader::new(io::stdin()), io::stdout().lock())?;
                    Ok(())
                }
                Some(p) => {
                    let (listener, addr) = bind(*p)?;
                    println!("{}", json!({ "listening": addr.to_string() }));
                    io::stdout().flush()?;
                    serve_tcp(service, Arc::new(Pool::new(*workers)), listener)?;
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(ConfigError(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
