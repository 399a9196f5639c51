//! Dataset-construction algorithms: proof-tree reconstruction from goal
//! traces, synthetic-proof extraction from intermediate goals, and
//! corpus statistics.
//!
//! A trace records, per executed tactic, the list of open goal ids
//! after execution. Reconstruction diffs consecutive lists: exactly one
//! id disappears (the expanded goal) and the fresh ids are its
//! children. Traces written by the toy kernel additionally carry the
//! new goals' statements and contexts, which extraction needs; the bare
//! id-only format reconstructs tree structure alone.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::grammar::{self, Grammar};
use crate::sexp::{self, Sexp};
use crate::term::{Goal, GoalId, NamedPremise, ProofTree, TacticEdge, Term, TermError};
use crate::toy::{self, RecordedStep};

/// One step of a proof trace: the tactic that ran and the open goal ids
/// after it. `new_goals` carries payloads for the ids that first appear
/// here, when the producer knows them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub tactic: String,
    pub goals_after: Vec<GoalId>,
    pub new_goals: Option<Vec<Goal>>,
}

/// A recorded proof: initial goal plus ordered steps. A complete proof
/// ends with an empty goal list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofTrace {
    pub init: Goal,
    pub steps: Vec<TraceStep>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("step {step}: a goal selector was used (more than one goal disappeared)")]
    GoalSelectorUsed { step: usize },
    #[error("step {step}: malformed trace: {reason}")]
    Malformed { step: usize, reason: String },
    #[error("invalid trace syntax: {0}")]
    Syntax(String),
}

impl From<TermError> for PipelineError {
    fn from(e: TermError) -> Self {
        PipelineError::Syntax(e.to_string())
    }
}

impl ProofTrace {
    /// Package the linear step records of a kernel session.
    pub fn from_recorded(init: Goal, steps: &[RecordedStep]) -> ProofTrace {
        ProofTrace {
            init,
            steps: steps
                .iter()
                .map(|s| TraceStep {
                    tactic: s.tactic.clone(),
                    goals_after: s.goals_after.clone(),
                    // A step that spawns nothing carries no payloads.
                    new_goals: if s.new_goals.is_empty() {
                        None
                    } else {
                        Some(s.new_goals.clone())
                    },
                })
                .collect(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.steps.last().is_some_and(|s| s.goals_after.is_empty())
    }

    /// `(trace (init TERM) (root ID) (step "tactic" (IDS...) GOAL...)...)`
    ///
    /// The `(root ID)` element and per-step goal payloads are optional
    /// on input; bare `(step "tactic" (IDS...))` traces reconstruct
    /// structure only.
    pub fn to_sexp(&self) -> Sexp {
        let mut items = vec![
            Sexp::atom("trace"),
            Sexp::list(vec![Sexp::atom("init"), term_sexp(&self.init.statement)]),
            Sexp::list(vec![Sexp::atom("root"), Sexp::atom(self.init.id.0.to_string())]),
        ];
        for s in &self.steps {
            let mut step = vec![
                Sexp::atom("step"),
                Sexp::string(&s.tactic),
                Sexp::list(
                    s.goals_after.iter().map(|g| Sexp::atom(g.0.to_string())).collect(),
                ),
            ];
            if let Some(goals) = &s.new_goals {
                step.extend(goals.iter().map(Goal::to_sexp));
            }
            items.push(Sexp::list(step));
        }
        Sexp::List(items)
    }

    pub fn from_sexp(e: &Sexp) -> Result<ProofTrace, PipelineError> {
        let items = e
            .tagged("trace")
            .ok_or_else(|| PipelineError::Syntax("expected (trace ...)".into()))?;
        let mut init_term = None;
        let mut root = GoalId(1);
        let mut steps = Vec::new();
        for item in items {
            if let Some(rest) = item.tagged("init") {
                let [t] = rest else {
                    return Err(PipelineError::Syntax("init takes one term".into()));
                };
                init_term = Some(term_from_sexp(t)?);
            } else if let Some(rest) = item.tagged("root") {
                let id = rest
                    .first()
                    .and_then(|a| a.as_atom())
                    .and_then(|a| a.parse::<u64>().ok())
                    .ok_or_else(|| PipelineError::Syntax("root takes an integer id".into()))?;
                root = GoalId(id);
            } else if let Some(rest) = item.tagged("step") {
                if rest.len() < 2 {
                    return Err(PipelineError::Syntax("step needs tactic and ids".into()));
                }
                let tactic = rest[0]
                    .as_str()
                    .ok_or_else(|| PipelineError::Syntax("step tactic must be a string".into()))?
                    .to_string();
                let ids = rest[1]
                    .as_list()
                    .ok_or_else(|| PipelineError::Syntax("step ids must be a list".into()))?
                    .iter()
                    .map(|a| {
                        a.as_atom()
                            .and_then(|s| s.parse::<u64>().ok())
                            .map(GoalId)
                            .ok_or_else(|| PipelineError::Syntax("bad goal id".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let new_goals = if rest.len() > 2 {
                    Some(
                        rest[2..]
                            .iter()
                            .map(Goal::from_sexp)
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                } else {
                    None
                };
                steps.push(TraceStep { tactic, goals_after: ids, new_goals });
            } else {
                return Err(PipelineError::Syntax("unknown trace item".into()));
            }
        }
        let statement =
            init_term.ok_or_else(|| PipelineError::Syntax("missing (init TERM)".into()))?;
        Ok(ProofTrace { init: Goal::new(root, statement, Vec::new()), steps })
    }
}

fn term_sexp(t: &Term) -> Sexp {
    sexp::parse(&t.to_string()).expect("terms print as valid sexps")
}

fn term_from_sexp(e: &Sexp) -> Result<Term, PipelineError> {
    crate::term::parse_sexp(&e.to_string()).map_err(PipelineError::from)
}

/// Rebuild the proof tree from a trace by tracking how goals emerge and
/// disappear. Rejects traces where a step makes more than one goal
/// disappear (goal selectors) or none.
pub fn reconstruct_proof_tree(trace: &ProofTrace) -> Result<ProofTree, PipelineError> {
    let mut nodes = BTreeMap::new();
    let mut edges = BTreeMap::new();
    nodes.insert(trace.init.id, trace.init.clone());
    let mut seen: BTreeSet<GoalId> = [trace.init.id].into();
    let mut prev: Vec<GoalId> = vec![trace.init.id];
    for (i, step) in trace.steps.iter().enumerate() {
        let cur = &step.goals_after;
        let mut counts: BTreeMap<GoalId, usize> = BTreeMap::new();
        for id in cur {
            *counts.entry(*id).or_default() += 1;
        }
        if counts.values().any(|c| *c > 1) {
            return Err(PipelineError::Malformed { step: i, reason: "duplicate goal id".into() });
        }
        let disappeared: Vec<GoalId> =
            prev.iter().copied().filter(|id| !counts.contains_key(id)).collect();
        let expanded = match disappeared.as_slice() {
            [one] => *one,
            [] => {
                return Err(PipelineError::Malformed {
                    step: i,
                    reason: "no goal disappeared".into(),
                })
            }
            _ => return Err(PipelineError::GoalSelectorUsed { step: i }),
        };
        let children: Vec<GoalId> =
            cur.iter().copied().filter(|id| !prev.contains(id)).collect();
        for c in &children {
            if !seen.insert(*c) {
                return Err(PipelineError::Malformed {
                    step: i,
                    reason: format!("goal id {c} reused"),
                });
            }
        }
        if let Some(goals) = &step.new_goals {
            let payload_ids: Vec<GoalId> = goals.iter().map(|g| g.id).collect();
            if payload_ids != children {
                return Err(PipelineError::Malformed {
                    step: i,
                    reason: "goal payloads do not match the fresh ids".into(),
                });
            }
            for g in goals {
                nodes.insert(g.id, g.clone());
            }
        }
        edges.insert(expanded, TacticEdge { tactic: step.tactic.clone(), children });
        prev = cur.clone();
    }
    Ok(ProofTree { root: trace.init.id, nodes, edges })
}

/// A shortened proof of an intermediate goal: the first `declared_length`
/// original tactics of its subtree, with every still-open subgoal turned
/// into a premise and discharged by one closing `apply` per premise.
#[derive(Clone, Debug)]
pub struct SyntheticProof {
    pub theorem: Goal,
    pub script: Vec<String>,
    pub declared_length: usize,
    pub source_goal: GoalId,
}

/// A (goal, reason) pair for extractions that had to be skipped.
pub type SkippedExtraction = (GoalId, usize, String);

/// Extract synthetic proofs for every intermediate (non-root) goal of a
/// reconstructed tree and every requested length. `order` is the goal
/// expansion order of the original proof.
pub fn extract_synthetic_proofs(
    tree: &ProofTree,
    order: &[GoalId],
    lengths: &[usize],
) -> (Vec<SyntheticProof>, Vec<SkippedExtraction>) {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for &g in order.iter().filter(|id| **id != tree.root) {
        let subtree: BTreeSet<GoalId> = tree.subtree(g).into_iter().collect();
        let subtree_steps: Vec<GoalId> =
            order.iter().copied().filter(|id| subtree.contains(id)).collect();
        for &len in lengths {
            if len > subtree_steps.len() {
                continue;
            }
            match extract_one(tree, g, &subtree_steps, len) {
                Ok(p) => out.push(p),
                Err(reason) => skipped.push((g, len, reason)),
            }
        }
    }
    (out, skipped)
}

fn extract_one(
    tree: &ProofTree,
    g: GoalId,
    subtree_steps: &[GoalId],
    len: usize,
) -> Result<SyntheticProof, String> {
    let root_goal = tree.nodes.get(&g).ok_or("missing goal payload")?;
    let mut script = Vec::with_capacity(len + 2);
    let mut open = vec![g];
    for &expanded in &subtree_steps[..len] {
        let edge = tree.edges.get(&expanded).ok_or("missing edge")?;
        let pos = open.iter().position(|id| *id == expanded).ok_or("step expands a closed goal")?;
        open.splice(pos..=pos, edge.children.iter().copied());
        script.push(edge.tactic.clone());
    }

    // Open subtree goals become premises; universally close each over
    // the variables its statement uses that are missing from g's
    // context (they were introduced later, inside the subtree).
    //
    // Injected names must not steal any name the replayed tactics will
    // introduce; those are exactly the context names appearing in the
    // subtree's recorded goals. Collisions get primes, which the
    // kernel's digit-only fresh names never use.
    let g_names: BTreeSet<&str> =
        root_goal.local_context.iter().map(|p| p.name.as_str()).collect();
    let mut forbidden: BTreeSet<String> =
        root_goal.local_context.iter().map(|p| p.name.clone()).collect();
    for id in tree.subtree(g) {
        if let Some(node) = tree.nodes.get(&id) {
            forbidden.extend(node.local_context.iter().map(|p| p.name.clone()));
        }
    }
    let mut context = root_goal.local_context.clone();
    let mut closers = Vec::with_capacity(open.len());
    for u in &open {
        let unsolved = tree.nodes.get(u).ok_or("missing goal payload for an open subgoal")?;
        let missing_vars: Vec<&str> = unsolved
            .local_context
            .iter()
            .filter(|p| {
                toy::is_variable(&p.term)
                    && !g_names.contains(p.name.as_str())
                    && term_mentions_atom(&unsolved.statement, &p.name)
            })
            .map(|p| p.name.as_str())
            .collect();
        let mut closed = unsolved.statement.clone();
        for v in missing_vars.iter().rev() {
            closed = toy::forall(v, closed);
        }
        let mut name = format!("H{}", u.0);
        while forbidden.contains(&name) {
            name.push('\'');
        }
        forbidden.insert(name.clone());
        closers.push(format!("apply {name}"));
        context.push(NamedPremise::local(name, closed));
    }
    script.extend(closers);
    Ok(SyntheticProof {
        theorem: Goal::new(root_goal.id, root_goal.statement.clone(), context),
        script,
        declared_length: len,
        source_goal: g,
    })
}

fn term_mentions_atom(t: &Term, name: &str) -> bool {
    t.nodes().any(|n| n.symbol() == "atom" && n.atom() == Some(name))
}

/// Corpus-level aggregates over reconstructed proofs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetStats {
    pub proof_count: usize,
    pub mean_steps_per_proof: Option<f64>,
    pub mean_local_premises_per_step: Option<f64>,
    pub mean_tactic_tokens: Option<f64>,
    pub mean_tactic_ast_height: Option<f64>,
    pub fraction_with_argument: Option<f64>,
}

/// One proof as the stats aggregator consumes it.
pub struct ProofRecord {
    pub tree: ProofTree,
    pub order: Vec<GoalId>,
}

impl ProofRecord {
    pub fn from_trace(trace: &ProofTrace) -> Result<ProofRecord, PipelineError> {
        let tree = reconstruct_proof_tree(trace)?;
        let order = expansion_order(trace);
        Ok(ProofRecord { tree, order })
    }
}

/// The goal expansion order of a trace (the id that disappears at each
/// step).
pub fn expansion_order(trace: &ProofTrace) -> Vec<GoalId> {
    let mut prev = vec![trace.init.id];
    let mut order = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        if let Some(gone) = prev.iter().find(|id| !step.goals_after.contains(id)) {
            order.push(*gone);
        }
        prev = step.goals_after.clone();
    }
    order
}

/// Pure aggregation; order-independent across proofs.
pub fn dataset_stats(grammar: &Grammar, records: &[ProofRecord]) -> DatasetStats {
    let mut steps = 0usize;
    let mut premise_counts: Vec<usize> = Vec::new();
    let mut token_counts: Vec<usize> = Vec::new();
    let mut heights: Vec<usize> = Vec::new();
    let mut with_arg = 0usize;
    let mut parsed = 0usize;
    for r in records {
        steps += r.order.len();
        for id in &r.order {
            if let Some(goal) = r.tree.nodes.get(id) {
                premise_counts.push(goal.local_context.len());
            }
            if let Some(edge) = r.tree.edges.get(id) {
                if let Ok(ast) = grammar::parse_tactic(grammar, &edge.tactic) {
                    token_counts.push(grammar::tactic_tokens(grammar, &ast).len());
                    heights.push(ast.height());
                    if ast.has_argument() {
                        with_arg += 1;
                    }
                    parsed += 1;
                }
            }
        }
    }
    let mean = |xs: &[usize]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<usize>() as f64 / xs.len() as f64)
        }
    };
    DatasetStats {
        proof_count: records.len(),
        mean_steps_per_proof: if records.is_empty() {
            None
        } else {
            Some(steps as f64 / records.len() as f64)
        },
        mean_local_premises_per_step: mean(&premise_counts),
        mean_tactic_tokens: mean(&token_counts),
        mean_tactic_ast_height: mean(&heights),
        fraction_with_argument: if parsed == 0 {
            None
        } else {
            Some(with_arg as f64 / parsed as f64)
        },
    }
}

impl DatasetStats {
    pub fn to_sexp(&self) -> Sexp {
        fn opt(v: Option<f64>) -> Sexp {
            match v {
                Some(x) => Sexp::atom(format!("{x:.4}")),
                None => Sexp::atom("absent"),
            }
        }
        Sexp::list(vec![
            Sexp::atom("stats"),
            Sexp::list(vec![Sexp::atom("proofs"), Sexp::atom(self.proof_count.to_string())]),
            Sexp::list(vec![Sexp::atom("mean-steps"), opt(self.mean_steps_per_proof)]),
            Sexp::list(vec![
                Sexp::atom("mean-local-premises"),
                opt(self.mean_local_premises_per_step),
            ]),
            Sexp::list(vec![Sexp::atom("mean-tactic-tokens"), opt(self.mean_tactic_tokens)]),
            Sexp::list(vec![Sexp::atom("mean-ast-height"), opt(self.mean_tactic_ast_height)]),
            Sexp::list(vec![
                Sexp::atom("fraction-with-argument"),
                opt(self.fraction_with_argument),
            ]),
        ])
    }
}
