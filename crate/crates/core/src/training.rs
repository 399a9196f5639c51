//! Teacher-forced maximum-likelihood training on proof-step records.
//!
//! The loss walks the ground-truth tactic tree in the decoder's
//! depth-first order: every nonterminal contributes the cross-entropy
//! of its production choice, every learnable token leaf the
//! cross-entropy of its argument choice; the tree always grows along
//! the ground truth regardless of the model's argmax, so argument
//! targets exist by construction. Quantified-variable leaves update the
//! state but carry no loss (that choice is unlearned).
//!
//! Examples whose true argument fell outside the encoded context (for
//! instance an environment premise beyond the cap) are skipped and
//! counted, never fatal.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::decoder::{self, ArgChoices, GenerationContext};
use crate::encoder::{self, SymbolVocab};
use crate::env::EnvironmentHandle;
use crate::grammar::{self, SymbolKind, TacticAst};
use crate::model::TacticModel;
use crate::numerics::{NumericsError, RmsProp, Session, Tensor, Value};
use crate::rng::Rng;
use crate::sexp::{self, Sexp};
use crate::term::{Goal, GoalId, NamedPremise, ProofState, Term, TermError};
use crate::toy::ToyEnv;

/// One training example: a goal in context and the tactic a prover
/// used on it.
#[derive(Clone, Debug)]
pub struct ProofStepExample {
    pub goal: Goal,
    /// Environment premises before truncation to the encoder cap.
    pub environment: Vec<NamedPremise>,
    pub tactic: TacticAst,
    /// Optional note of where the step came from.
    pub provenance: Option<String>,
}

impl ProofStepExample {
    pub fn tactic_text(&self) -> String {
        grammar::print_tactic(grammar::grammar(), &self.tactic)
    }
}

#[derive(Clone, Debug)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub dim: usize,
    pub batch_size: usize,
    pub env_cap: usize,
}

impl Default for TrainingConfig {
    fn default() -> TrainingConfig {
        TrainingConfig {
            learning_rate: 3e-5,
            weight_decay: 1e-6,
            epochs: 5,
            seed: 0,
            dim: 256,
            batch_size: 1,
            env_cap: encoder::ENV_PREMISE_CAP,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<TermError> for TrainingError {
    fn from(e: TermError) -> Self {
        TrainingError::Dataset(e.to_string())
    }
}

/// One teacher-forced decision, for metrics.
#[derive(Clone, Debug)]
pub struct Decision {
    pub is_argument: bool,
    pub correct: bool,
}

/// Outcome of a teacher-forced pass over one example.
pub enum TeacherForced {
    Loss { loss: Value, decisions: Vec<Decision> },
    Skipped(String),
}

/// Cross-entropy of the ground-truth tactic under the model, walking
/// the true tree depth-first. Returns `Skipped` when a true identifier
/// argument is absent from the encoded context.
pub fn teacher_forced_loss(
    sess: &mut Session,
    vocab: &SymbolVocab,
    dim: usize,
    example: &ProofStepExample,
    env_cap: usize,
) -> Result<TeacherForced, NumericsError> {
    let g = grammar::grammar();
    let env: std::sync::Arc<Vec<NamedPremise>> =
        std::sync::Arc::new(example.environment.clone());
    let state = ProofState::new(env, vec![example.goal.clone()])
        .map_err(|e| NumericsError::ShapeMismatch { op: "teacher_forced_loss", detail: e.to_string() })?;
    let (goal_enc, premises) =
        encoder::encode_context(sess, vocab, dim, &state, &example.goal, env_cap)?;
    let ctx = GenerationContext {
        goal: goal_enc.value,
        premises: &premises,
        goal_term: &example.goal.statement,
        seed: 0,
    };

    let mut log_terms: Vec<Value> = Vec::new();
    let mut decisions = Vec::new();
    let mut s = sess.tape.zeros(vec![dim]);
    let mut last_prod = None;
    // Depth-first worklist over the ground-truth tree, mirroring the
    // generator's visit order; keyword leaves are never visited.
    let mut stack: Vec<(&TacticAst, Option<(Value, grammar::ProductionId)>)> =
        vec![(&example.tactic, None)];
    while let Some((node, parent)) = stack.pop() {
        let s_t = decoder::decoder_step(sess, &ctx, dim, s, last_prod, parent, node.symbol())?;
        s = s_t;
        match node {
            TacticAst::Node { symbol, production, children } => {
                let dist = decoder::select_production(sess, g, s_t, *symbol)?;
                let Some(true_pos) = dist.iter().position(|(pid, _)| pid == production) else {
                    return Ok(TeacherForced::Skipped(format!(
                        "production {production:?} inapplicable for {}",
                        g.symbol(*symbol).name
                    )));
                };
                let best = argmax(sess, &dist);
                decisions.push(Decision { is_argument: false, correct: best == true_pos });
                log_terms.push(dist[true_pos].1);
                last_prod = Some(*production);
                for child in children.iter().rev() {
                    if g.symbol(child.symbol()).kind != SymbolKind::Keyword {
                        stack.push((child, Some((s_t, *production))));
                    }
                }
            }
            TacticAst::Token { symbol, text } => {
                match decoder::synth_argument(sess, &ctx, s_t, *symbol, g)? {
                    ArgChoices::Unscored(_) => {
                        // Quantified variables are picked at random at
                        // generation time; no loss term.
                    }
                    ArgChoices::Exhausted => {
                        return Ok(TeacherForced::Skipped(format!(
                            "no candidates for {} argument {text:?}",
                            g.symbol(*symbol).name
                        )));
                    }
                    ArgChoices::Scored(cands) => {
                        let Some(idx) = cands.iter().position(|(t, _)| t == text) else {
                            return Ok(TeacherForced::Skipped(format!(
                                "true argument {text:?} not in the encoded context"
                            )));
                        };
                        let best = argmax(sess, &cands);
                        decisions.push(Decision { is_argument: true, correct: best == idx });
                        log_terms.push(cands[idx].1);
                    }
                }
            }
            TacticAst::Keyword(_) => unreachable!("keyword leaves are not visited"),
        }
    }
    let total = sess.tape.add_all(&log_terms)?;
    let loss = sess.tape.scale(total, -1.0);
    Ok(TeacherForced::Loss { loss, decisions })
}

fn argmax<K>(sess: &Session, scored: &[(K, Value)]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, (_, lp)) in scored.iter().enumerate() {
        let v = sess.tape.value(*lp).item();
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Per-epoch line of the training log.
#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub examples: usize,
    pub skipped: usize,
}

impl EpochLog {
    pub fn to_sexp(&self) -> Sexp {
        Sexp::list(vec![
            Sexp::atom("epoch"),
            Sexp::atom(self.epoch.to_string()),
            Sexp::atom("loss"),
            Sexp::atom(format!("{:.6}", self.mean_loss)),
            Sexp::atom("examples"),
            Sexp::atom(self.examples.to_string()),
            Sexp::atom("skipped"),
            Sexp::atom(self.skipped.to_string()),
        ])
    }
}

/// Train a fresh model. Deterministic in the seed; when `out_dir` is
/// given, a checkpoint is written after every epoch.
pub fn train(
    dataset: &[ProofStepExample],
    config: &TrainingConfig,
    out_dir: Option<&Path>,
) -> Result<(TacticModel, Vec<EpochLog>), TrainingError> {
    if dataset.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let vocab = build_vocab(dataset);
    let mut model = TacticModel::init(vocab, config.dim, config.seed);
    let log = train_into(&mut model, dataset, config, out_dir)?;
    Ok((model, log))
}

/// Train an existing model in place (continues from its parameters).
pub fn train_into(
    model: &mut TacticModel,
    dataset: &[ProofStepExample],
    config: &TrainingConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<EpochLog>, TrainingError> {
    if dataset.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let opt = RmsProp::new(config.learning_rate, config.weight_decay);
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = Rng::new(config.seed ^ 0x7261_696e);
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut total_loss = 0.0;
        let mut seen = 0usize;
        let mut skipped = 0usize;
        for chunk in order.chunks(batch) {
            let mut grad_sum: Option<BTreeMap<String, Tensor>> = None;
            for &i in chunk {
                let example = &dataset[i];
                let mut sess = Session::new(&model.store);
                match teacher_forced_loss(
                    &mut sess,
                    &model.vocab,
                    model.dim,
                    example,
                    config.env_cap,
                )? {
                    TeacherForced::Skipped(_) => skipped += 1,
                    TeacherForced::Loss { loss, .. } => {
                        total_loss += sess.tape.value(loss).item();
                        seen += 1;
                        let grads = sess.gradients(loss)?;
                        grad_sum = Some(match grad_sum {
                            None => grads,
                            Some(mut acc) => {
                                for (name, g) in grads {
                                    let slot = acc.get_mut(&name).expect("same keys");
                                    for (a, b) in slot.data_mut().iter_mut().zip(g.data()) {
                                        *a += b;
                                    }
                                }
                                acc
                            }
                        });
                    }
                }
            }
            if let Some(grads) = grad_sum {
                model.store.rmsprop_step(&grads, &opt)?;
            }
        }
        let entry = EpochLog {
            epoch,
            mean_loss: if seen > 0 { total_loss / seen as f64 } else { 0.0 },
            examples: seen,
            skipped,
        };
        logs.push(entry);
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            model
                .store
                .save_file(&dir.join(format!("epoch-{epoch}.ckpt")))
                .map_err(TrainingError::Numerics)?;
        }
    }
    Ok(logs)
}

/// Vocabulary over every term in the dataset: goal statements, local
/// contexts, and environments.
pub fn build_vocab(dataset: &[ProofStepExample]) -> SymbolVocab {
    let terms = dataset.iter().flat_map(|e| {
        std::iter::once(&e.goal.statement)
            .chain(e.goal.local_context.iter().map(|p| &p.term))
            .chain(e.environment.iter().map(|p| &p.term))
    });
    SymbolVocab::build(terms)
}

/// Teacher-forced evaluation metrics; no parameter updates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub production_accuracy: f64,
    pub argument_accuracy: f64,
    pub exact_match_rate: f64,
    pub examples: usize,
    pub skipped: usize,
}

pub fn evaluate_steps(
    dataset: &[ProofStepExample],
    model: &TacticModel,
    env_cap: usize,
) -> Result<StepMetrics, TrainingError> {
    if dataset.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let mut prod = (0usize, 0usize);
    let mut arg = (0usize, 0usize);
    let mut exact = 0usize;
    let mut seen = 0usize;
    let mut skipped = 0usize;
    for example in dataset {
        let mut sess = Session::new(&model.store);
        match teacher_forced_loss(&mut sess, &model.vocab, model.dim, example, env_cap)? {
            TeacherForced::Skipped(_) => skipped += 1,
            TeacherForced::Loss { decisions, .. } => {
                seen += 1;
                let mut all = true;
                for d in &decisions {
                    let slot = if d.is_argument { &mut arg } else { &mut prod };
                    slot.1 += 1;
                    if d.correct {
                        slot.0 += 1;
                    } else {
                        all = false;
                    }
                }
                if all {
                    exact += 1;
                }
            }
        }
    }
    let ratio = |(num, den): (usize, usize)| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(StepMetrics {
        production_accuracy: ratio(prod),
        argument_accuracy: ratio(arg),
        exact_match_rate: if seen == 0 { 0.0 } else { exact as f64 / seen as f64 },
        examples: seen,
        skipped,
    })
}

/// Replay a witness script and record one example per executed step.
pub fn extract_steps(theorem: &Term, witness: &[String]) -> Result<Vec<ProofStepExample>, String> {
    let g = grammar::grammar();
    let mut env = ToyEnv::start(theorem).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(witness.len());
    for tactic_text in witness {
        let state = env.state().map_err(|e| e.to_string())?;
        let goal = state.focused().ok_or("no open goal")?.clone();
        let tactic = grammar::parse_tactic(g, tactic_text).map_err(|e| e.to_string())?;
        out.push(ProofStepExample {
            goal,
            environment: state.environment().to_vec(),
            tactic,
            provenance: None,
        });
        let outcome = env.execute(tactic_text).map_err(|e| e.to_string())?;
        if !outcome.is_success() {
            return Err(format!("witness step {tactic_text:?} failed"));
        }
    }
    Ok(out)
}

/// `(step (goal TERM) (localctx (NAME TERM)...) (env (NAME TERM)...) (tactic "text") (provenance "p")?)`
pub fn step_to_sexp(example: &ProofStepExample) -> Sexp {
    let term_sexp =
        |t: &Term| sexp::parse(&t.to_string()).expect("terms print as valid sexps");
    let ctx_items = |ps: &[NamedPremise], tag: &str| {
        let mut items = vec![Sexp::atom(tag)];
        items.extend(
            ps.iter().map(|p| Sexp::list(vec![Sexp::atom(&p.name), term_sexp(&p.term)])),
        );
        Sexp::List(items)
    };
    let mut items = vec![
        Sexp::atom("step"),
        Sexp::list(vec![Sexp::atom("goal"), term_sexp(&example.goal.statement)]),
        ctx_items(&example.goal.local_context, "localctx"),
        ctx_items(&example.environment, "env"),
        Sexp::list(vec![Sexp::atom("tactic"), Sexp::string(example.tactic_text())]),
    ];
    if let Some(p) = &example.provenance {
        items.push(Sexp::list(vec![Sexp::atom("provenance"), Sexp::string(p)]));
    }
    Sexp::List(items)
}

pub fn step_from_sexp(e: &Sexp) -> Result<ProofStepExample, TrainingError> {
    let items = e
        .tagged("step")
        .ok_or_else(|| TrainingError::Dataset("expected (step ...)".into()))?;
    let mut goal_term = None;
    let mut local = Vec::new();
    let mut environment = Vec::new();
    let mut tactic_text = None;
    let mut provenance = None;
    for item in items {
        if let Some(rest) = item.tagged("goal") {
            let [t] = rest else {
                return Err(TrainingError::Dataset("goal takes one term".into()));
            };
            goal_term = Some(crate::term::parse_sexp(&t.to_string())?);
        } else if let Some(rest) = item.tagged("localctx") {
            for p in rest {
                local.push(premise_from(p, true)?);
            }
        } else if let Some(rest) = item.tagged("env") {
            for p in rest {
                environment.push(premise_from(p, false)?);
            }
        } else if let Some(rest) = item.tagged("tactic") {
            tactic_text = rest.first().and_then(Sexp::as_str).map(str::to_string);
        } else if let Some(rest) = item.tagged("provenance") {
            provenance = rest.first().and_then(Sexp::as_str).map(str::to_string);
        } else {
            return Err(TrainingError::Dataset("unknown step item".into()));
        }
    }
    let statement =
        goal_term.ok_or_else(|| TrainingError::Dataset("missing (goal TERM)".into()))?;
    let text =
        tactic_text.ok_or_else(|| TrainingError::Dataset("missing (tactic \"...\")".into()))?;
    let tactic = grammar::parse_tactic(grammar::grammar(), &text)
        .map_err(|e| TrainingError::Dataset(format!("tactic {text:?}: {e}")))?;
    Ok(ProofStepExample {
        goal: Goal::new(GoalId(1), statement, local),
        environment,
        tactic,
        provenance,
    })
}

fn premise_from(e: &Sexp, local: bool) -> Result<NamedPremise, TrainingError> {
    let pair = e
        .as_list()
        .filter(|l| l.len() == 2)
        .ok_or_else(|| TrainingError::Dataset("expected (NAME TERM)".into()))?;
    let name = pair[0]
        .as_atom()
        .ok_or_else(|| TrainingError::Dataset("premise name must be an atom".into()))?;
    let term = crate::term::parse_sexp(&pair[1].to_string())?;
    Ok(if local { NamedPremise::local(name, term) } else { NamedPremise::environment(name, term) })
}

/// Write a line-delimited step dataset.
pub fn write_steps(path: &Path, examples: &[ProofStepExample]) -> Result<(), TrainingError> {
    let mut f = std::fs::File::create(path)?;
    for e in examples {
        writeln!(f, "{}", step_to_sexp(e))?;
    }
    Ok(())
}

/// Read a line-delimited step dataset.
pub fn read_steps(path: &Path) -> Result<Vec<ProofStepExample>, TrainingError> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = sexp::parse(&line).map_err(|e| TrainingError::Dataset(e.to_string()))?;
        out.push(step_from_sexp(&e)?);
    }
    Ok(out)
}
