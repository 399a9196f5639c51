//! Command-line workflows: generate toy corpora, train, prove,
//! evaluate, run the data pipeline, and serve the toy kernel over the
//! wire protocol.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 no proof
//! found (for `prove`). Every run logs its resolved configuration and
//! seed to stderr; primary outputs are machine-readable S-expressions.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use tacgen::env::EnvironmentHandle;
use tacgen::grammar;
use tacgen::model::TacticModel;
use tacgen::pipeline::{self, ProofRecord, ProofTrace};
use tacgen::search::{self, SearchConfig};
use tacgen::sexp::{self, Sexp};
use tacgen::term::Term;
use tacgen::toy::{self, ToyEnv};
use tacgen::training::{self, ProofStepExample, TrainingConfig};
use tacgen::wire::{self, RemoteEnv};

#[derive(Parser)]
#[command(
    name = "tacgen",
    version,
    about = "Grammar-constrained tactic generation and proof search over a toy proof kernel",
    after_help = "File formats are line-delimited S-expressions throughout: theorems as \
                  (theorem NAME TERM (witness \"tactic\" ...)), training steps as (step (goal TERM) \
                  (localctx (NAME TERM)...) (env (NAME TERM)...) (tactic \"text\")), traces as \
                  (trace (init TERM) (root ID) (step \"tactic\" (IDS...) GOAL...)...), and reports \
                  as (result NAME (status ok|fail|error) (tactics N) (seconds X) (script ...))."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SearchOpts {
    /// Candidate tactics generated per proof state.
    #[arg(long, default_value_t = 20)]
    beam_width: usize,
    /// Depth limit of the depth-first search.
    #[arg(long, default_value_t = 50)]
    depth_limit: usize,
    /// Tactic-execution budget per theorem (every attempt counts).
    #[arg(long, default_value_t = 300)]
    max_tactics: usize,
    /// Wall-time budget per theorem, in seconds.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
    /// Closer tactic tried first at each step (e.g. "trivial").
    #[arg(long)]
    closer: Option<String>,
}

impl SearchOpts {
    fn to_config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            beam_width: self.beam_width,
            depth_limit: self.depth_limit,
            max_tactics: self.max_tactics,
            timeout: Duration::from_secs(self.timeout),
            closer: self.closer.clone(),
            seed,
        }
    }

    fn log_sexp(&self, seed: u64) -> Sexp {
        Sexp::list(vec![
            Sexp::atom("search-config"),
            kv("beam-width", self.beam_width.to_string()),
            kv("depth-limit", self.depth_limit.to_string()),
            kv("max-tactics", self.max_tactics.to_string()),
            kv("timeout", self.timeout.to_string()),
            kv("closer", self.closer.clone().unwrap_or_else(|| "none".into())),
            kv("seed", seed.to_string()),
        ])
    }
}

fn kv(key: &str, value: String) -> Sexp {
    Sexp::list(vec![Sexp::atom(key), Sexp::atom(value)])
}

#[derive(Subcommand)]
enum Command {
    /// Generate provable toy theorems with witness scripts, training
    /// steps, and execution traces.
    GenToyData {
        /// Number of theorems.
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Maximum proof-plan depth.
        #[arg(long, default_value_t = 4)]
        max_depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving theorems.sexp, steps.sexp, traces.sexp.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model on a step dataset.
    Train {
        /// Step dataset (line-delimited (step ...) records).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for model.ckpt, model.meta, per-epoch
        /// checkpoints, and train.log.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        /// Learning rate.
        #[arg(long, default_value_t = 3e-5)]
        lr: f64,
        #[arg(long, default_value_t = 1e-6)]
        weight_decay: f64,
        /// Embedding width.
        #[arg(long, default_value_t = 256)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Search for a proof of one theorem. Exits 3 when no proof is
    /// found within budget.
    Prove {
        /// Theorem: an S-expression, or a path to a file whose first
        /// record is the theorem.
        theorem: String,
        /// Model directory (from `train`).
        #[arg(long)]
        model: PathBuf,
        /// Proof environment: "toy" or "remote:HOST:PORT".
        #[arg(long, default_value = "toy")]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        search: SearchOpts,
    },
    /// Prove every theorem in a file and write a report.
    Evaluate {
        /// Theorem file (line-delimited (theorem NAME TERM ...)).
        #[arg(long)]
        theorems: PathBuf,
        /// Model directory (from `train`).
        #[arg(long)]
        model: PathBuf,
        /// Report output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Proof environment: "toy" or "remote:HOST:PORT".
        #[arg(long, default_value = "toy")]
        env: String,
        /// Write 0.000 for all seconds fields, making the report
        /// byte-stable for a fixed seed.
        #[arg(long)]
        no_timing: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        search: SearchOpts,
    },
    /// Extract synthetic proofs from execution traces and emit their
    /// replayed steps as additional training data.
    ExtractSynthetic {
        /// Trace file (line-delimited (trace ...) records with goal
        /// payloads).
        #[arg(long)]
        traces: PathBuf,
        /// Step-dataset output path.
        #[arg(long)]
        out: PathBuf,
        /// Synthetic proof lengths to extract.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4])]
        lengths: Vec<usize>,
        /// Also write the synthetic scripts themselves.
        #[arg(long)]
        scripts_out: Option<PathBuf>,
        /// In scripts output, close proofs with a single "auto" instead
        /// of one "apply H<k>" per premise (for external environments;
        /// the toy kernel cannot replay "auto").
        #[arg(long)]
        literal_auto: bool,
    },
    /// Rebuild proof trees from a trace file.
    ReconstructTree {
        #[arg(long)]
        traces: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate statistics over a trace file.
    Stats {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Parse one tactic and print its derivation tree.
    ParseTactic { tactic: String },
    /// Serve the toy kernel over the wire protocol.
    ServeToy {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 7171)]
        port: u16,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::GenToyData { count, max_depth, seed, out_dir } => {
            gen_toy_data(count, max_depth, seed, &out_dir)
        }
        Command::Train { data, out, epochs, lr, weight_decay, dim, batch_size, seed } => {
            let config = TrainingConfig {
                learning_rate: lr,
                weight_decay,
                epochs,
                seed,
                dim,
                batch_size,
                ..TrainingConfig::default()
            };
            train(&data, &out, &config)
        }
        Command::Prove { theorem, model, env, seed, search } => {
            prove(&theorem, &model, &env, seed, &search)
        }
        Command::Evaluate { theorems, model, out, jobs, env, no_timing, seed, search } => {
            evaluate(&theorems, &model, out.as_deref(), jobs, &env, no_timing, seed, &search)
        }
        Command::ExtractSynthetic { traces, out, lengths, scripts_out, literal_auto } => {
            extract_synthetic(&traces, &out, &lengths, scripts_out.as_deref(), literal_auto)
        }
        Command::ReconstructTree { traces, out } => reconstruct_tree(&traces, out.as_deref()),
        Command::Stats { traces } => stats(&traces),
        Command::ParseTactic { tactic } => parse_tactic(&tactic),
        Command::ServeToy { host, port } => serve_toy(&host, port),
    }
}

fn log_config(items: Vec<Sexp>) {
    let mut all = vec![Sexp::atom("config")];
    all.extend(items);
    eprintln!("{}", Sexp::List(all));
}

fn gen_toy_data(count: usize, max_depth: usize, seed: u64, out_dir: &Path) -> Result<i32, String> {
    log_config(vec![
        kv("command", "gen-toy-data".into()),
        kv("count", count.to_string()),
        kv("max-depth", max_depth.to_string()),
        kv("seed", seed.to_string()),
    ]);
    std::fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    let theorems = toy::generate_toy_theorems(seed, count, max_depth);

    let mut theorem_lines = String::new();
    let mut steps: Vec<ProofStepExample> = Vec::new();
    let mut trace_lines = String::new();
    for thm in &theorems {
        let mut items = vec![
            Sexp::atom("theorem"),
            Sexp::atom(&thm.name),
            sexp::parse(&thm.statement.to_string()).expect("term prints as sexp"),
        ];
        let mut witness = vec![Sexp::atom("witness")];
        witness.extend(thm.witness.iter().map(Sexp::string));
        items.push(Sexp::List(witness));
        theorem_lines.push_str(&Sexp::List(items).to_string());
        theorem_lines.push('\n');

        let mut extracted = training::extract_steps(&thm.statement, &thm.witness)?;
        for s in &mut extracted {
            s.provenance = Some(thm.name.clone());
        }
        steps.extend(extracted);

        let mut env = ToyEnv::start(&thm.statement).map_err(|e| e.to_string())?;
        for t in &thm.witness {
            env.execute(t).map_err(|e| e.to_string())?;
        }
        let trace =
            ProofTrace::from_recorded(env.root_goal().unwrap().clone(), env.recorded_steps());
        trace_lines.push_str(&trace.to_sexp().to_string());
        trace_lines.push('\n');
    }
    std::fs::write(out_dir.join("theorems.sexp"), theorem_lines).map_err(|e| e.to_string())?;
    training::write_steps(&out_dir.join("steps.sexp"), &steps).map_err(|e| e.to_string())?;
    std::fs::write(out_dir.join("traces.sexp"), trace_lines).map_err(|e| e.to_string())?;
    println!(
        "wrote {} theorems, {} steps to {}",
        theorems.len(),
        steps.len(),
        out_dir.display()
    );
    Ok(0)
}

fn train(data: &Path, out: &Path, config: &TrainingConfig) -> Result<i32, String> {
    log_config(vec![
        kv("command", "train".into()),
        kv("data", data.display().to_string()),
        kv("epochs", config.epochs.to_string()),
        kv("lr", format!("{:e}", config.learning_rate)),
        kv("weight-decay", format!("{:e}", config.weight_decay)),
        kv("dim", config.dim.to_string()),
        kv("batch-size", config.batch_size.to_string()),
        kv("seed", config.seed.to_string()),
    ]);
    let dataset = training::read_steps(data).map_err(|e| e.to_string())?;
    let (model, logs) = training::train(&dataset, config, Some(out)).map_err(|e| e.to_string())?;
    model.save(out).map_err(|e| e.to_string())?;
    let mut log_text = String::new();
    for entry in &logs {
        println!("{}", entry.to_sexp());
        log_text.push_str(&entry.to_sexp().to_string());
        log_text.push('\n');
    }
    std::fs::write(out.join("train.log"), log_text).map_err(|e| e.to_string())?;
    Ok(0)
}

/// Read a theorem argument: an inline S-expression or a file path.
fn read_theorem(arg: &str) -> Result<Term, String> {
    let text = if arg.trim_start().starts_with('(') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| format!("{arg}: {e}"))?
    };
    let first = sexp::parse_many(&text)
        .map_err(|e| e.to_string())?
        .into_iter()
        .next()
        .ok_or("empty theorem input")?;
    let term_sexp = match first.tagged("theorem") {
        Some(rest) if rest.len() >= 2 => rest[1].clone(),
        _ => first,
    };
    tacgen::term::parse_sexp(&term_sexp.to_string()).map_err(|e| e.to_string())
}

fn read_theorem_file(path: &Path) -> Result<Vec<(String, Term)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (i, record) in sexp::parse_many(&text).map_err(|e| e.to_string())?.iter().enumerate() {
        let rest = record
            .tagged("theorem")
            .ok_or_else(|| format!("record {i}: expected (theorem NAME TERM ...)"))?;
        if rest.len() < 2 {
            return Err(format!("record {i}: theorem needs a name and a term"));
        }
        let name = rest[0].as_atom().ok_or_else(|| format!("record {i}: bad name"))?;
        let term = tacgen::term::parse_sexp(&rest[1].to_string()).map_err(|e| e.to_string())?;
        out.push((name.to_string(), term));
    }
    Ok(out)
}

enum EnvChoice {
    Toy,
    Remote(String),
}

fn parse_env(arg: &str) -> Result<EnvChoice, String> {
    if arg == "toy" {
        Ok(EnvChoice::Toy)
    } else if let Some(addr) = arg.strip_prefix("remote:") {
        Ok(EnvChoice::Remote(addr.to_string()))
    } else {
        Err(format!("--env must be \"toy\" or \"remote:HOST:PORT\", got {arg:?}"))
    }
}

fn prove(
    theorem_arg: &str,
    model_dir: &Path,
    env_arg: &str,
    seed: u64,
    search_opts: &SearchOpts,
) -> Result<i32, String> {
    log_config(vec![
        kv("command", "prove".into()),
        kv("model", model_dir.display().to_string()),
        kv("env", env_arg.to_string()),
        search_opts.log_sexp(seed),
    ]);
    let theorem = read_theorem(theorem_arg)?;
    let model = TacticModel::load(model_dir).map_err(|e| e.to_string())?;
    let config = search_opts.to_config(seed);
    let (script, stats) = match parse_env(env_arg)? {
        EnvChoice::Toy => {
            let mut env = ToyEnv::new();
            let initial = env.init(&theorem).map_err(|e| e.to_string())?;
            search::prove(&initial, &mut env, &model, &config).map_err(|e| e.to_string())?
        }
        EnvChoice::Remote(addr) => {
            let mut env = RemoteEnv::connect(addr.as_str()).map_err(|e| e.to_string())?;
            let initial = env.init(&theorem).map_err(|e| e.to_string())?;
            search::prove(&initial, &mut env, &model, &config).map_err(|e| e.to_string())?
        }
    };
    eprintln!(
        "(search-stats (tactics {}) (expanded {}) (pruned {}) (seconds {:.3}))",
        stats.tactics_tried, stats.expanded, stats.duplicates_pruned, stats.wall_seconds
    );
    match script {
        Some(script) => {
            for tactic in &script.tactics {
                println!("{tactic}.");
            }
            Ok(0)
        }
        None => {
            eprintln!("no proof found within budget");
            Ok(3)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    theorems_path: &Path,
    model_dir: &Path,
    out: Option<&Path>,
    jobs: usize,
    env_arg: &str,
    no_timing: bool,
    seed: u64,
    search_opts: &SearchOpts,
) -> Result<i32, String> {
    log_config(vec![
        kv("command", "evaluate".into()),
        kv("theorems", theorems_path.display().to_string()),
        kv("model", model_dir.display().to_string()),
        kv("jobs", jobs.to_string()),
        kv("env", env_arg.to_string()),
        search_opts.log_sexp(seed),
    ]);
    let theorems = read_theorem_file(theorems_path)?;
    if theorems.is_empty() {
        return Err("no theorems in input".into());
    }
    let model = TacticModel::load(model_dir).map_err(|e| e.to_string())?;
    let config = search_opts.to_config(seed);
    let report = match parse_env(env_arg)? {
        EnvChoice::Toy => {
            search::evaluate(&theorems, || Ok(ToyEnv::new()), &model, &config, jobs)
        }
        EnvChoice::Remote(addr) => search::evaluate(
            &theorems,
            || RemoteEnv::connect(addr.as_str()),
            &model,
            &config,
            jobs,
        ),
    };
    let text = report.render(no_timing);
    match out {
        Some(path) => std::fs::write(path, &text).map_err(|e| e.to_string())?,
        None => print!("{text}"),
    }
    let lengths: Vec<String> = report
        .proof_length_histogram
        .iter()
        .map(|(len, n)| format!("({len} {n})"))
        .collect();
    eprintln!(
        "(summary (proved {}) (total {}) (rate {:.4}) (proof-length-histogram {}))",
        report.proved,
        report.outcomes.len(),
        report.success_rate(),
        lengths.join(" ")
    );
    Ok(0)
}

fn read_traces(path: &Path) -> Result<Vec<ProofTrace>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    sexp::parse_many(&text)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|e| ProofTrace::from_sexp(e).map_err(|e| e.to_string()))
        .collect()
}

fn extract_synthetic(
    traces_path: &Path,
    out: &Path,
    lengths: &[usize],
    scripts_out: Option<&Path>,
    literal_auto: bool,
) -> Result<i32, String> {
    log_config(vec![
        kv("command", "extract-synthetic".into()),
        kv("traces", traces_path.display().to_string()),
        kv("lengths", format!("{lengths:?}")),
        kv("literal-auto", literal_auto.to_string()),
    ]);
    let traces = read_traces(traces_path)?;
    let mut steps: Vec<ProofStepExample> = Vec::new();
    let mut scripts = String::new();
    let mut produced = 0usize;
    let mut skipped = 0usize;
    for (i, trace) in traces.iter().enumerate() {
        let tree = pipeline::reconstruct_proof_tree(trace).map_err(|e| e.to_string())?;
        let order = pipeline::expansion_order(trace);
        let (proofs, skips) = pipeline::extract_synthetic_proofs(&tree, &order, lengths);
        for (goal, len, reason) in &skips {
            eprintln!("(skip (trace {i}) (goal {goal}) (length {len}) \"{reason}\")");
        }
        skipped += skips.len();
        for p in &proofs {
            produced += 1;
            let provenance = format!("trace{i} goal {}", p.source_goal);
            // Replay in the toy kernel to recover per-step contexts.
            let mut env =
                ToyEnv::start_at_goal(p.theorem.clone(), std::sync::Arc::new(Vec::new()))
                    .map_err(|e| e.to_string())?;
            for tactic in &p.script {
                let state = env.state().map_err(|e| e.to_string())?;
                let goal = state.focused().ok_or("replay ran out of goals")?.clone();
                let ast = grammar::parse_tactic(grammar::grammar(), tactic)
                    .map_err(|e| e.to_string())?;
                steps.push(ProofStepExample {
                    goal,
                    environment: state.environment().to_vec(),
                    tactic: ast,
                    provenance: Some(provenance.clone()),
                });
                let outcome = env.execute(tactic).map_err(|e| e.to_string())?;
                if !outcome.is_success() {
                    return Err(format!("synthetic replay failed at {tactic:?} ({provenance})"));
                }
            }
            if scripts_out.is_some() {
                let script: Vec<String> = if literal_auto {
                    let mut s = p.script[..p.declared_length].to_vec();
                    s.push("auto".to_string());
                    s
                } else {
                    p.script.clone()
                };
                let mut items = vec![
                    Sexp::atom("synthetic"),
                    Sexp::atom(format!("trace{i}")),
                    kv("goal", p.source_goal.to_string()),
                    kv("length", p.declared_length.to_string()),
                ];
                let mut sc = vec![Sexp::atom("script")];
                sc.extend(script.iter().map(Sexp::string));
                items.push(Sexp::List(sc));
                scripts.push_str(&Sexp::List(items).to_string());
                scripts.push('\n');
            }
        }
    }
    training::write_steps(out, &steps).map_err(|e| e.to_string())?;
    if let Some(path) = scripts_out {
        std::fs::write(path, scripts).map_err(|e| e.to_string())?;
    }
    println!(
        "extracted {} synthetic proofs ({} skipped) into {} steps",
        produced,
        skipped,
        steps.len()
    );
    Ok(0)
}

fn reconstruct_tree(traces_path: &Path, out: Option<&Path>) -> Result<i32, String> {
    log_config(vec![
        kv("command", "reconstruct-tree".into()),
        kv("traces", traces_path.display().to_string()),
    ]);
    let traces = read_traces(traces_path)?;
    let mut text = String::new();
    for trace in &traces {
        let tree = pipeline::reconstruct_proof_tree(trace).map_err(|e| e.to_string())?;
        text.push_str(&tree.to_sexp().to_string());
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| e.to_string())?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn stats(traces_path: &Path) -> Result<i32, String> {
    log_config(vec![
        kv("command", "stats".into()),
        kv("traces", traces_path.display().to_string()),
    ]);
    let traces = read_traces(traces_path)?;
    let records: Vec<ProofRecord> = traces
        .iter()
        .map(|t| ProofRecord::from_trace(t).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let report = pipeline::dataset_stats(grammar::grammar(), &records);
    println!("{}", report.to_sexp());
    Ok(0)
}

fn parse_tactic(tactic: &str) -> Result<i32, String> {
    match grammar::parse_tactic(grammar::grammar(), tactic) {
        Ok(ast) => {
            println!("{}", ast_sexp(&ast));
            Ok(0)
        }
        Err(e) => Err(format!("cannot parse {tactic:?}: {e}")),
    }
}

/// Render a tactic tree as a nested S-expression of symbol names.
fn ast_sexp(ast: &grammar::TacticAst) -> Sexp {
    let g = grammar::grammar();
    match ast {
        grammar::TacticAst::Node { symbol, children, .. } => {
            let mut items = vec![Sexp::atom(&g.symbol(*symbol).name)];
            items.extend(children.iter().map(ast_sexp));
            Sexp::List(items)
        }
        grammar::TacticAst::Keyword(symbol) => {
            Sexp::list(vec![Sexp::atom("kw"), Sexp::string(&g.symbol(*symbol).name)])
        }
        grammar::TacticAst::Token { symbol, text } => Sexp::list(vec![
            Sexp::atom(&g.symbol(*symbol).name),
            Sexp::string(text),
        ]),
    }
}

fn serve_toy(host: &str, port: u16) -> Result<i32, String> {
    log_config(vec![
        kv("command", "serve-toy".into()),
        kv("host", host.to_string()),
        kv("port", port.to_string()),
    ]);
    let listener = TcpListener::bind((host, port)).map_err(|e| e.to_string())?;
    println!("listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
    wire::serve(listener).map_err(|e| e.to_string())?;
    Ok(0)
}
