//! Tactic generation: a GRU controller expands a tactic tree
//! depth-first under the grammar, attending over encoded premises at
//! every step and synthesizing arguments under semantic constraints.
//!
//! Each visited node (nonterminals and token-terminal leaves; keyword
//! leaves are fixed by their production and never visited) updates the
//! controller state from the concatenation of: the previous production
//! embedding, the parent's state paired with the parent's production
//! embedding, the current node's symbol embedding, the encoded goal,
//! and the attention-weighted premise sum. Production choices see only
//! the grammar-applicable rules; identifier arguments see only premises
//! actually present in the context, so generated tactics are
//! grammatically and semantically well formed by construction.

use crate::encoder::{EncodedTerm, Role};
use crate::grammar::{Grammar, ProductionId, SymbolId, SymbolKind, TacticAst};
use crate::numerics::{NumericsError, ParameterStore, Session, Tensor, Value};
use crate::rng::Rng;
use crate::term::Term;

/// Hard cap on expansion steps per tactic; the grammar's list rules can
/// recurse, this guarantees termination.
pub const MAX_EXPANSION_STEPS: usize = 128;

/// Register decoder parameters. `dim` is the shared embedding width.
pub fn init_decoder_params(
    store: &mut ParameterStore,
    grammar: &Grammar,
    dim: usize,
    rng: &mut Rng,
) {
    let gru_input = 6 * dim + 6;
    let mut mat = |store: &mut ParameterStore, name: String, r: usize, c: usize| {
        store.insert(name, Tensor::uniform(vec![r, c], -0.1, 0.1, rng));
    };
    for gate in ["z", "r", "h"] {
        mat(store, format!("dec.gru.w{gate}"), dim, gru_input);
        mat(store, format!("dec.gru.u{gate}"), dim, dim);
        store.insert(format!("dec.gru.b{gate}"), Tensor::zeros(vec![dim]));
    }
    let prods = grammar.productions().len();
    mat(store, "dec.prod".into(), prods, dim);
    mat(store, "dec.score".into(), prods, dim);
    mat(store, "dec.sym".into(), grammar.symbol_count(), dim);
    mat(store, "dec.f.w".into(), dim, dim);
    store.insert("dec.f.b", Tensor::zeros(vec![dim]));
    for head in ["att", "arg"] {
        mat(store, format!("dec.{head}.w1"), dim, 2 * dim + 3);
        store.insert(format!("dec.{head}.b1"), Tensor::zeros(vec![dim]));
        mat(store, format!("dec.{head}.w2"), 1, dim);
        store.insert(format!("dec.{head}.b2"), Tensor::zeros(vec![1]));
    }
    mat(store, "dec.int.w".into(), 4, dim);
    store.insert("dec.int.b", Tensor::zeros(vec![4]));
    mat(store, "dec.db.w".into(), crate::grammar::HINT_DBS.len(), dim);
    store.insert("dec.db.b", Tensor::zeros(vec![crate::grammar::HINT_DBS.len()]));
}

/// Everything a generation step conditions on: the tagged goal vector,
/// the encoded premises, the goal statement itself (for quantified
/// variable extraction), and the seed for the one unlearned choice.
pub struct GenerationContext<'a> {
    pub goal: Value,
    pub premises: &'a [EncodedTerm],
    pub goal_term: &'a Term,
    pub seed: u64,
}

/// Attention over premises: scores from a two-layer network on
/// [s_prev : r_i], softmax-normalized; the context vector is the
/// weighted premise sum. Empty premises yield a zero vector.
pub fn attend(
    sess: &mut Session,
    dim: usize,
    s_prev: Value,
    premises: &[EncodedTerm],
) -> Result<(Value, Vec<f64>), NumericsError> {
    scored_sum(sess, "att", dim, s_prev, premises)
}

fn scored_sum(
    sess: &mut Session,
    head: &str,
    dim: usize,
    s: Value,
    premises: &[EncodedTerm],
) -> Result<(Value, Vec<f64>), NumericsError> {
    if premises.is_empty() {
        return Ok((sess.tape.zeros(vec![dim + 3]), Vec::new()));
    }
    let scores = premise_scores(sess, head, s, premises)?;
    let weights = sess.tape.softmax(scores)?;
    let weight_data = sess.tape.value(weights).data().to_vec();
    let mut acc = sess.tape.zeros(vec![dim + 3]);
    for (i, p) in premises.iter().enumerate() {
        let w = sess.tape.pick(weights, i)?;
        let contrib = sess.tape.scalar_mul(w, p.value)?;
        acc = sess.tape.add(acc, contrib)?;
    }
    Ok((acc, weight_data))
}

/// Raw scalar scores of a two-layer fully-connected scorer applied to
/// [s : r_i] for each premise, concatenated into one vector.
fn premise_scores(
    sess: &mut Session,
    head: &str,
    s: Value,
    premises: &[EncodedTerm],
) -> Result<Value, NumericsError> {
    let w1 = sess.param(&format!("dec.{head}.w1"))?;
    let b1 = sess.param(&format!("dec.{head}.b1"))?;
    let w2 = sess.param(&format!("dec.{head}.w2"))?;
    let b2 = sess.param(&format!("dec.{head}.b2"))?;
    let mut scores = Vec::with_capacity(premises.len());
    for p in premises {
        let input = sess.tape.concat(&[s, p.value])?;
        let lin = sess.tape.matvec(w1, input)?;
        let biased = sess.tape.add(lin, b1)?;
        let hidden = sess.tape.tanh(biased);
        let out = sess.tape.matvec(w2, hidden)?;
        let score = sess.tape.add(out, b2)?;
        scores.push(score);
    }
    sess.tape.concat(&scores)
}

/// One GRU update: s_t = z * s_prev + (1 - z) * candidate.
pub fn gru_step(sess: &mut Session, s_prev: Value, x: Value) -> Result<Value, NumericsError> {
    let gate = |sess: &mut Session, name: &str, mix: Value| -> Result<Value, NumericsError> {
        let w = sess.param(&format!("dec.gru.w{name}"))?;
        let u = sess.param(&format!("dec.gru.u{name}"))?;
        let b = sess.param(&format!("dec.gru.b{name}"))?;
        let wx = sess.tape.matvec(w, x)?;
        let us = sess.tape.matvec(u, mix)?;
        let lin = sess.tape.add(wx, us)?;
        sess.tape.add(lin, b)
    };
    let z_lin = gate(sess, "z", s_prev)?;
    let z = sess.tape.sigmoid(z_lin);
    let r_lin = gate(sess, "r", s_prev)?;
    let r = sess.tape.sigmoid(r_lin);
    let rs = sess.tape.mul(r, s_prev)?;
    let h_lin = gate(sess, "h", rs)?;
    let cand = sess.tape.tanh(h_lin);
    let keep = sess.tape.mul(z, s_prev)?;
    let z_inv = sess.tape.one_minus(z);
    let update = sess.tape.mul(z_inv, cand)?;
    sess.tape.add(keep, update)
}

/// Log-probabilities over the applicable productions of a nonterminal:
/// scores every rule via the rule matrix against a transformed state,
/// restricted to the applicable set and renormalized (equivalent to
/// masking inapplicable rules to negative infinity before the softmax).
pub fn select_production(
    sess: &mut Session,
    grammar: &Grammar,
    s_t: Value,
    nt: SymbolId,
) -> Result<Vec<(ProductionId, Value)>, NumericsError> {
    let applicable = grammar
        .applicable_productions(nt)
        .map_err(|e| NumericsError::ShapeMismatch { op: "select_production", detail: e.to_string() })?;
    debug_assert!(!applicable.is_empty());
    let fw = sess.param("dec.f.w")?;
    let fb = sess.param("dec.f.b")?;
    let scores = sess.param("dec.score")?;
    let lin = sess.tape.matvec(fw, s_t)?;
    let biased = sess.tape.add(lin, fb)?;
    let f = sess.tape.tanh(biased);
    let all = sess.tape.matvec(scores, f)?;
    let mut gathered = Vec::with_capacity(applicable.len());
    for pid in applicable {
        gathered.push(sess.tape.pick(all, pid.0)?);
    }
    let subset = sess.tape.concat(&gathered)?;
    let logps = sess.tape.log_softmax(subset)?;
    applicable
        .iter()
        .enumerate()
        .map(|(i, pid)| Ok((*pid, sess.tape.pick(logps, i)?)))
        .collect()
}

/// What argument synthesis offers for a token-terminal leaf.
pub enum ArgChoices {
    /// Scored candidates: (token text, log-probability).
    Scored(Vec<(String, Value)>),
    /// Uniformly random pick among the goal's top-level universally
    /// quantified variables; unlearned, log-probability zero.
    Unscored(Vec<String>),
    /// No valid candidate exists; the caller abandons this branch.
    Exhausted,
}

/// The universally quantified variables at the top of a goal statement.
pub fn quantified_variables(goal: &Term) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = goal;
    while cur.symbol() == "forall" && cur.children().len() == 2 {
        if let Some(binder) = cur.children()[0].atom() {
            out.push(binder.to_string());
        }
        cur = &cur.children()[1];
    }
    out
}

/// Candidates for one argument leaf, constrained by class semantics:
/// local identifiers name local premises, qualified identifiers name
/// any encoded premise, integers and hint databases are closed-class
/// classifiers, quantified identifiers come from the goal's binders.
pub fn synth_argument(
    sess: &mut Session,
    ctx: &GenerationContext,
    s_t: Value,
    class: SymbolId,
    grammar: &Grammar,
) -> Result<ArgChoices, NumericsError> {
    let class_name = grammar.symbol(class).name.as_str();
    match class_name {
        "LOCAL_IDENT" | "QUALID" => {
            let eligible: Vec<&EncodedTerm> = ctx
                .premises
                .iter()
                .filter(|p| class_name == "QUALID" || p.role == Role::LocalPremise)
                .collect();
            if eligible.is_empty() {
                return Ok(ArgChoices::Exhausted);
            }
            let owned: Vec<EncodedTerm> = eligible.iter().map(|p| (*p).clone()).collect();
            let scores = premise_scores(sess, "arg", s_t, &owned)?;
            let logps = sess.tape.log_softmax(scores)?;
            let mut out = Vec::with_capacity(owned.len());
            for (i, p) in owned.iter().enumerate() {
                let name = p.name.clone().expect("premises carry names");
                out.push((name, sess.tape.pick(logps, i)?));
            }
            Ok(ArgChoices::Scored(out))
        }
        "INT" => {
            let w = sess.param("dec.int.w")?;
            let b = sess.param("dec.int.b")?;
            let lin = sess.tape.matvec(w, s_t)?;
            let scores = sess.tape.add(lin, b)?;
            let logps = sess.tape.log_softmax(scores)?;
            let mut out = Vec::with_capacity(4);
            for (i, text) in ["1", "2", "3", "4"].iter().enumerate() {
                out.push((text.to_string(), sess.tape.pick(logps, i)?));
            }
            Ok(ArgChoices::Scored(out))
        }
        "HINT_DB" => {
            let w = sess.param("dec.db.w")?;
            let b = sess.param("dec.db.b")?;
            let lin = sess.tape.matvec(w, s_t)?;
            let scores = sess.tape.add(lin, b)?;
            let logps = sess.tape.log_softmax(scores)?;
            let mut out = Vec::with_capacity(crate::grammar::HINT_DBS.len());
            for (i, name) in crate::grammar::HINT_DBS.iter().enumerate() {
                out.push((name.to_string(), sess.tape.pick(logps, i)?));
            }
            Ok(ArgChoices::Scored(out))
        }
        "QUANTIFIED_IDENT" => {
            let vars = quantified_variables(ctx.goal_term);
            if vars.is_empty() {
                return Ok(ArgChoices::Exhausted);
            }
            Ok(ArgChoices::Unscored(vars))
        }
        other => Err(NumericsError::ShapeMismatch {
            op: "synth_argument",
            detail: format!("not a token class: {other}"),
        }),
    }
}

/// Decoding step shared by generation and teacher forcing: attention
/// from the previous state, then the GRU update over
/// [a_prev : p_parent : n_sym : g : u].
#[allow(clippy::too_many_arguments)]
pub fn decoder_step(
    sess: &mut Session,
    ctx: &GenerationContext,
    dim: usize,
    s_prev: Value,
    last_prod: Option<ProductionId>,
    parent: Option<(Value, ProductionId)>,
    node_symbol: SymbolId,
) -> Result<Value, NumericsError> {
    let (u, _) = attend(sess, dim, s_prev, ctx.premises)?;
    let prod_table = sess.param("dec.prod")?;
    let sym_table = sess.param("dec.sym")?;
    let a_prev = match last_prod {
        Some(p) => sess.tape.row(prod_table, p.0)?,
        None => sess.tape.zeros(vec![dim]),
    };
    let p_t = match parent {
        Some((s_parent, prod)) => {
            let pe = sess.tape.row(prod_table, prod.0)?;
            sess.tape.concat(&[s_parent, pe])?
        }
        None => sess.tape.zeros(vec![2 * dim]),
    };
    let n_t = sess.tape.row(sym_table, node_symbol.0)?;
    let x = sess.tape.concat(&[a_prev, p_t, n_t, ctx.goal, u])?;
    gru_step(sess, s_prev, x)
}

/// How to pick among branches during generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenMode {
    /// Highest-probability choice at every step (equals beam width 1).
    Greedy,
    /// Beam search keeping the top-k partial trees by cumulative
    /// log-probability; returns up to k complete trees, best first.
    Beam(usize),
    /// Ancestral sampling with the context seed.
    Sample,
}

/// A node of a partially built tactic tree.
#[derive(Clone, Debug)]
struct BuildNode {
    symbol: SymbolId,
    production: Option<ProductionId>,
    children: Vec<usize>,
    token: Option<String>,
}

/// Work-stack entry: a node awaiting expansion, with the parent pack
/// needed for its decoder step.
#[derive(Clone, Debug)]
struct Pending {
    node: usize,
    parent: Option<(Value, ProductionId)>,
}

#[derive(Clone)]
struct Hypothesis {
    nodes: Vec<BuildNode>,
    pending: Vec<Pending>,
    state: Value,
    last_prod: Option<ProductionId>,
    score: f64,
    steps: usize,
    rng: Rng,
}

impl Hypothesis {
    fn complete(&self) -> bool {
        self.pending.is_empty()
    }

    fn extract(&self, node: usize) -> TacticAst {
        let n = &self.nodes[node];
        match (&n.production, &n.token) {
            (Some(pid), _) => TacticAst::Node {
                symbol: n.symbol,
                production: *pid,
                children: n.children.iter().map(|c| self.extract(*c)).collect(),
            },
            (None, Some(text)) => TacticAst::Token { symbol: n.symbol, text: text.clone() },
            (None, None) => TacticAst::Keyword(n.symbol),
        }
    }
}

/// Generate candidate tactics for a context. Every returned tree
/// validates under the grammar and every identifier argument names a
/// premise present in the context. Results are ordered by total
/// log-probability, best first.
pub fn generate_tactic(
    sess: &mut Session,
    grammar: &Grammar,
    ctx: &GenerationContext,
    dim: usize,
    mode: GenMode,
) -> Result<Vec<(TacticAst, f64)>, NumericsError> {
    let width = match mode {
        GenMode::Greedy => 1,
        GenMode::Beam(w) => w.max(1),
        GenMode::Sample => 1,
    };
    let sample = mode == GenMode::Sample;
    let s0 = sess.tape.zeros(vec![dim]);
    let root = Hypothesis {
        nodes: vec![BuildNode {
            symbol: grammar.start(),
            production: None,
            children: Vec::new(),
            token: None,
        }],
        pending: vec![Pending { node: 0, parent: None }],
        state: s0,
        last_prod: None,
        score: 0.0,
        steps: 0,
        rng: Rng::new(ctx.seed),
    };
    let mut active = vec![root];
    let mut completed: Vec<Hypothesis> = Vec::new();
    while !active.is_empty() {
        let mut next: Vec<Hypothesis> = Vec::new();
        for hyp in active.drain(..) {
            if hyp.complete() {
                completed.push(hyp);
                continue;
            }
            if hyp.steps >= MAX_EXPANSION_STEPS {
                continue;
            }
            expand(sess, grammar, ctx, dim, hyp, sample, &mut next)?;
        }
        // Stable sort: ties keep generation order.
        next.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
        next.truncate(width);
        active = next;
    }
    completed
        .sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    completed.truncate(width);
    Ok(completed
        .into_iter()
        .map(|h| {
            let ast = h.extract(0);
            debug_assert!(grammar.validate(&ast).is_ok());
            (ast, h.score)
        })
        .collect())
}

/// Expand the next pending node of one hypothesis, pushing every branch
/// (or the single sampled branch) onto `out`.
fn expand(
    sess: &mut Session,
    grammar: &Grammar,
    ctx: &GenerationContext,
    dim: usize,
    mut hyp: Hypothesis,
    sample: bool,
    out: &mut Vec<Hypothesis>,
) -> Result<(), NumericsError> {
    let pending = hyp.pending.pop().expect("expand on complete hypothesis");
    let node_sym = hyp.nodes[pending.node].symbol;
    let s_t = decoder_step(sess, ctx, dim, hyp.state, hyp.last_prod, pending.parent, node_sym)?;
    hyp.state = s_t;
    hyp.steps += 1;
    match grammar.symbol(node_sym).kind {
        SymbolKind::NonTerminal => {
            let dist = select_production(sess, grammar, s_t, node_sym)?;
            let choices: Vec<(ProductionId, f64)> = if sample {
                let probs: Vec<f64> =
                    dist.iter().map(|(_, lp)| sess.tape.value(*lp).item().exp()).collect();
                let idx = sample_index(&mut hyp.rng, &probs);
                vec![(dist[idx].0, sess.tape.value(dist[idx].1).item())]
            } else {
                dist.iter().map(|(p, lp)| (*p, sess.tape.value(*lp).item())).collect()
            };
            for (pid, logp) in choices {
                let mut branch = hyp.clone();
                branch.score += logp;
                branch.last_prod = Some(pid);
                branch.nodes[pending.node].production = Some(pid);
                let rhs = grammar.production(pid).rhs.clone();
                let mut child_ids = Vec::with_capacity(rhs.len());
                for sym in &rhs {
                    let id = branch.nodes.len();
                    branch.nodes.push(BuildNode {
                        symbol: *sym,
                        production: None,
                        children: Vec::new(),
                        token: None,
                    });
                    child_ids.push(id);
                }
                branch.nodes[pending.node].children = child_ids.clone();
                // Depth-first: push children in reverse so the leftmost
                // expands next. Keyword leaves are already final.
                for (sym, id) in rhs.iter().zip(&child_ids).rev() {
                    if grammar.symbol(*sym).kind != SymbolKind::Keyword {
                        branch.pending.push(Pending { node: *id, parent: Some((s_t, pid)) });
                    }
                }
                out.push(branch);
            }
        }
        SymbolKind::Token => {
            match synth_argument(sess, ctx, s_t, node_sym, grammar)? {
                ArgChoices::Exhausted => {}
                ArgChoices::Unscored(vars) => {
                    let pick = hyp.rng.below(vars.len());
                    let mut branch = hyp;
                    branch.nodes[pending.node].token = Some(vars[pick].clone());
                    out.push(branch);
                }
                ArgChoices::Scored(cands) => {
                    let choices: Vec<(String, f64)> = if sample {
                        let probs: Vec<f64> =
                            cands.iter().map(|(_, lp)| sess.tape.value(*lp).item().exp()).collect();
                        let idx = sample_index(&mut hyp.rng, &probs);
                        vec![(cands[idx].0.clone(), sess.tape.value(cands[idx].1).item())]
                    } else {
                        cands
                            .iter()
                            .map(|(t, lp)| (t.clone(), sess.tape.value(*lp).item()))
                            .collect()
                    };
                    for (text, logp) in choices {
                        let mut branch = hyp.clone();
                        branch.score += logp;
                        branch.nodes[pending.node].token = Some(text);
                        out.push(branch);
                    }
                }
            }
        }
        SymbolKind::Keyword => unreachable!("keyword leaves are never pending"),
    }
    Ok(())
}

fn sample_index(rng: &mut Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut draw = rng.next_f64() * total;
    for (i, p) in probs.iter().enumerate() {
        draw -= p;
        if draw <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{self, SymbolVocab};
    use crate::grammar::{self, print_tactic};
    use crate::numerics::ParameterStore;
    use crate::term::{parse_sexp, Goal, GoalId, NamedPremise, ProofState};
    use std::sync::Arc;

    fn test_model(dim: usize, seed: u64) -> (ParameterStore, SymbolVocab) {
        let corpus = [
            parse_sexp("(impl (atom A) (atom B))").unwrap(),
            parse_sexp("(and (or (true) (false)) (var x))").unwrap(),
            parse_sexp("(forall (atom a) (forall (atom b) (atom a)))").unwrap(),
        ];
        let vocab = SymbolVocab::build(corpus.iter());
        let mut store = ParameterStore::new();
        let mut rng = Rng::new(seed);
        encoder::init_encoder_params(&mut store, vocab.len(), dim, &mut rng);
        init_decoder_params(&mut store, grammar::grammar(), dim, &mut rng);
        (store, vocab)
    }

    fn zeroed(mut store: ParameterStore) -> ParameterStore {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for n in names {
            store.get_mut(&n).unwrap().data_mut().fill(0.0);
        }
        store
    }

    struct Ctx {
        state: ProofState,
    }

    impl Ctx {
        fn new(goal_text: &str, locals: &[(&str, &str)]) -> Ctx {
            let premises = locals
                .iter()
                .map(|(n, t)| NamedPremise::local(*n, parse_sexp(t).unwrap()))
                .collect();
            let goal = Goal::new(GoalId(1), parse_sexp(goal_text).unwrap(), premises);
            Ctx { state: ProofState::new(Arc::new(Vec::new()), vec![goal]).unwrap() }
        }

        fn encode(
            &self,
            sess: &mut Session,
            vocab: &SymbolVocab,
            dim: usize,
        ) -> (Value, Vec<EncodedTerm>) {
            let goal = self.state.focused().unwrap();
            let (g, premises) =
                encoder::encode_context(sess, vocab, dim, &self.state, goal, 10).unwrap();
            (g.value, premises)
        }
    }

    #[test]
    fn attend_single_premise_weight_one() {
        let dim = 6;
        let (store, vocab) = test_model(dim, 10);
        let ctx = Ctx::new("(atom A)", &[("H", "(atom B)")]);
        let mut sess = Session::new(&store);
        let (_, premises) = ctx.encode(&mut sess, &vocab, dim);
        let s = sess.tape.zeros(vec![dim]);
        let (u, w) = attend(&mut sess, dim, s, &premises).unwrap();
        assert_eq!(w, vec![1.0]);
        let r1 = sess.tape.value(premises[0].value).data().to_vec();
        assert_eq!(sess.tape.value(u).data(), &r1[..]);
    }

    #[test]
    fn attend_identical_premises_split_evenly() {
        let dim = 6;
        let (store, vocab) = test_model(dim, 11);
        let ctx = Ctx::new("(atom A)", &[("H1", "(atom B)"), ("H2", "(atom B)")]);
        let mut sess = Session::new(&store);
        let (_, premises) = ctx.encode(&mut sess, &vocab, dim);
        let s = sess.tape.zeros(vec![dim]);
        let (_, w) = attend(&mut sess, dim, s, &premises).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let dim = 5;
        let (store, vocab) = test_model(dim, 12);
        let ctx = Ctx::new(
            "(impl (atom A) (atom B))",
            &[("H1", "(atom A)"), ("H2", "(true)"), ("H3", "(or (atom A) (false))")],
        );
        let mut rng = Rng::new(99);
        for _ in 0..20 {
            let mut sess = Session::new(&store);
            let (_, premises) = ctx.encode(&mut sess, &vocab, dim);
            let s = sess.constant(Tensor::uniform(vec![dim], -1.0, 1.0, &mut rng));
            let (_, w) = attend(&mut sess, dim, s, &premises).unwrap();
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        // Empty premises: zero context vector, no weights.
        let mut sess = Session::new(&store);
        let s = sess.tape.zeros(vec![dim]);
        let (u, w) = attend(&mut sess, dim, s, &[]).unwrap();
        assert!(w.is_empty());
        assert!(sess.tape.value(u).data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn gru_zero_weights_halves_state() {
        let dim = 4;
        let (store, _) = test_model(dim, 13);
        let store = zeroed(store);
        let mut sess = Session::new(&store);
        let s_prev = sess.constant(Tensor::vector(vec![0.8, -0.4, 0.2, 1.0]));
        let x = sess.tape.zeros(vec![6 * dim + 6]);
        let s = gru_step(&mut sess, s_prev, x).unwrap();
        for (got, want) in sess.tape.value(s).data().iter().zip([0.4, -0.2, 0.1, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_deterministic() {
        let dim = 4;
        let (store, _) = test_model(dim, 14);
        let run = || {
            let mut sess = Session::new(&store);
            let s_prev = sess.constant(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]));
            let x = sess.constant(Tensor::vector(vec![0.05; 6 * 4 + 6]));
            let s = gru_step(&mut sess, s_prev, x).unwrap();
            sess.tape.value(s).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn uniform_distribution_at_zero_weights() {
        let g = grammar::grammar();
        let dim = 4;
        let (store, _) = test_model(dim, 15);
        let store = zeroed(store);
        let mut sess = Session::new(&store);
        let s = sess.tape.zeros(vec![dim]);
        let intro = g.symbol_named("intro").unwrap();
        let dist = select_production(&mut sess, g, s, intro).unwrap();
        assert_eq!(dist.len(), 2);
        for (_, lp) in &dist {
            assert!((sess.tape.value(*lp).item() - 0.5f64.ln()).abs() < 1e-12);
        }
        // Single-alternative nonterminal gets probability one.
        let destruct = g.symbol_named("destruct").unwrap();
        let dist = select_production(&mut sess, g, s, destruct).unwrap();
        assert_eq!(dist.len(), 1);
        assert!(sess.tape.value(dist[0].1).item().abs() < 1e-12);
    }

    #[test]
    fn masked_softmax_matches_renormalized_full_softmax() {
        let g = grammar::grammar();
        let dim = 6;
        let (store, _) = test_model(dim, 16);
        let mut sess = Session::new(&store);
        let mut rng = Rng::new(5);
        let s = sess.constant(Tensor::uniform(vec![dim], -1.0, 1.0, &mut rng));
        let nt = g.symbol_named("in_clause").unwrap();
        let dist = select_production(&mut sess, g, s, nt).unwrap();

        // Oracle: full softmax over all 98 rules, renormalized over the
        // applicable subset.
        let fw = sess.param("dec.f.w").unwrap();
        let fb = sess.param("dec.f.b").unwrap();
        let scores = sess.param("dec.score").unwrap();
        let lin = sess.tape.matvec(fw, s).unwrap();
        let biased = sess.tape.add(lin, fb).unwrap();
        let f = sess.tape.tanh(biased);
        let all = sess.tape.matvec(scores, f).unwrap();
        let full = sess.tape.softmax(all).unwrap();
        let full_probs = sess.tape.value(full).data().to_vec();
        let applicable = g.applicable_productions(nt).unwrap();
        let total: f64 = applicable.iter().map(|p| full_probs[p.0]).sum();
        for (pid, lp) in &dist {
            let want = (full_probs[pid.0] / total).ln();
            let got = sess.tape.value(*lp).item();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn single_local_premise_is_certain() {
        let g = grammar::grammar();
        let dim = 5;
        let (store, vocab) = test_model(dim, 17);
        let holder = Ctx::new("(atom A)", &[("H", "(atom A)")]);
        let mut sess = Session::new(&store);
        let (goal, premises) = holder.encode(&mut sess, &vocab, dim);
        let goal_term = holder.state.focused().unwrap().statement.clone();
        let ctx = GenerationContext { goal, premises: &premises, goal_term: &goal_term, seed: 1 };
        let s = sess.tape.zeros(vec![dim]);
        let class = g.symbol_named("LOCAL_IDENT").unwrap();
        match synth_argument(&mut sess, &ctx, s, class, g).unwrap() {
            ArgChoices::Scored(c) => {
                assert_eq!(c.len(), 1);
                assert_eq!(c[0].0, "H");
                assert!(sess.tape.value(c[0].1).item().abs() < 1e-12);
            }
            _ => panic!("expected scored candidates"),
        }
    }

    #[test]
    fn int_classifier_uniform_at_zero_weights() {
        let g = grammar::grammar();
        let dim = 4;
        let (store, vocab) = test_model(dim, 18);
        let store = zeroed(store);
        let holder = Ctx::new("(atom A)", &[]);
        let mut sess = Session::new(&store);
        let (goal, premises) = holder.encode(&mut sess, &vocab, dim);
        let goal_term = holder.state.focused().unwrap().statement.clone();
        let ctx = GenerationContext { goal, premises: &premises, goal_term: &goal_term, seed: 1 };
        let s = sess.tape.zeros(vec![dim]);
        let class = g.symbol_named("INT").unwrap();
        match synth_argument(&mut sess, &ctx, s, class, g).unwrap() {
            ArgChoices::Scored(c) => {
                assert_eq!(c.len(), 4);
                for (_, lp) in &c {
                    assert!((sess.tape.value(*lp).item() - 0.25f64.ln()).abs() < 1e-12);
                }
            }
            _ => panic!("expected scored candidates"),
        }
    }

    #[test]
    fn empty_local_context_exhausts_local_ident() {
        let g = grammar::grammar();
        let dim = 4;
        let (store, vocab) = test_model(dim, 19);
        let holder = Ctx::new("(atom A)", &[]);
        let mut sess = Session::new(&store);
        let (goal, premises) = holder.encode(&mut sess, &vocab, dim);
        let goal_term = holder.state.focused().unwrap().statement.clone();
        let ctx = GenerationContext { goal, premises: &premises, goal_term: &goal_term, seed: 1 };
        let s = sess.tape.zeros(vec![dim]);
        let class = g.symbol_named("LOCAL_IDENT").unwrap();
        assert!(matches!(
            synth_argument(&mut sess, &ctx, s, class, g).unwrap(),
            ArgChoices::Exhausted
        ));
    }

    #[test]
    fn quantified_variables_extracted_and_seeded() {
        let goal = parse_sexp("(forall (atom a) (forall (atom b) (atom a)))").unwrap();
        assert_eq!(quantified_variables(&goal), vec!["a", "b"]);
        let inner = parse_sexp("(impl (forall (atom a) (atom a)) (atom b))").unwrap();
        assert!(quantified_variables(&inner).is_empty());

        // A seeded generation over a quantified goal reproduces its
        // variable pick.
        let g = grammar::grammar();
        let dim = 5;
        let (store, vocab) = test_model(dim, 20);
        let holder = Ctx::new("(forall (atom a) (forall (atom b) (atom a)))", &[]);
        let gen = |seed: u64| -> Vec<String> {
            let mut sess = Session::new(&store);
            let (goal_v, premises) = holder.encode(&mut sess, &vocab, dim);
            let goal_term = holder.state.focused().unwrap().statement.clone();
            let ctx =
                GenerationContext { goal: goal_v, premises: &premises, goal_term: &goal_term, seed };
            let out = generate_tactic(&mut sess, g, &ctx, dim, GenMode::Sample).unwrap();
            out.iter().map(|(t, _)| print_tactic(g, t)).collect()
        };
        for seed in [1, 2, 3] {
            assert_eq!(gen(seed), gen(seed), "sampling must be seed-reproducible");
        }
    }

    #[test]
    fn beam_one_equals_greedy() {
        let g = grammar::grammar();
        let dim = 6;
        let (store, vocab) = test_model(dim, 21);
        let holder = Ctx::new("(impl (atom A) (atom B))", &[("H", "(atom A)")]);
        let mut sess = Session::new(&store);
        let (goal, premises) = holder.encode(&mut sess, &vocab, dim);
        let goal_term = holder.state.focused().unwrap().statement.clone();
        let ctx = GenerationContext { goal, premises: &premises, goal_term: &goal_term, seed: 3 };
        let greedy = generate_tactic(&mut sess, g, &ctx, dim, GenMode::Greedy).unwrap();
        let mut sess2 = Session::new(&store);
        let (goal2, premises2) = holder.encode(&mut sess2, &vocab, dim);
        let ctx2 =
            GenerationContext { goal: goal2, premises: &premises2, goal_term: &goal_term, seed: 3 };
        let beam = generate_tactic(&mut sess2, g, &ctx2, dim, GenMode::Beam(1)).unwrap();
        assert_eq!(greedy.len(), 1);
        assert_eq!(beam.len(), 1);
        assert_eq!(greedy[0].0, beam[0].0);
        assert!((greedy[0].1 - beam[0].1).abs() < 1e-12);
    }

    #[test]
    fn beam_returns_ranked_valid_tactics() {
        let g = grammar::grammar();
        let dim = 6;
        let (store, vocab) = test_model(dim, 22);
        let holder =
            Ctx::new("(impl (atom A) (atom B))", &[("H1", "(atom A)"), ("H2", "(true)")]);
        let mut sess = Session::new(&store);
        let (goal, premises) = holder.encode(&mut sess, &vocab, dim);
        let goal_term = holder.state.focused().unwrap().statement.clone();
        let ctx = GenerationContext { goal, premises: &premises, goal_term: &goal_term, seed: 5 };
        let out = generate_tactic(&mut sess, g, &ctx, dim, GenMode::Beam(12)).unwrap();
        assert!(!out.is_empty() && out.len() <= 12);
        let names: Vec<&str> = premises.iter().filter_map(|p| p.name.as_deref()).collect();
        for (ast, score) in &out {
            g.validate(ast).unwrap();
            assert!(score.is_finite() && *score <= 0.0);
            for (_, text) in ast.arguments() {
                if text.chars().next().unwrap().is_ascii_alphabetic()
                    && !crate::grammar::HINT_DBS.contains(&text)
                {
                    assert!(names.contains(&text), "argument {text} not in context");
                }
            }
        }
        // Scores are non-increasing.
        for pair in out.windows(2) {
            assert!(pair[0].1 >= pair[1].1);
        }
    }

    #[test]
    fn sampled_tactics_parse_and_respect_context() {
        let g = grammar::grammar();
        let dim = 5;
        let (store, vocab) = test_model(dim, 23);
        let holder = Ctx::new(
            "(forall (atom a) (impl (atom a) (atom B)))",
            &[("H1", "(atom A)"), ("H2", "(impl (atom A) (atom B))")],
        );
        let mut parsed = 0;
        for seed in 0..300u64 {
            let mut sess = Session::new(&store);
            let (goal, premises) = holder.encode(&mut sess, &vocab, dim);
            let goal_term = holder.state.focused().unwrap().statement.clone();
            let ctx =
                GenerationContext { goal, premises: &premises, goal_term: &goal_term, seed };
            let out = generate_tactic(&mut sess, g, &ctx, dim, GenMode::Sample).unwrap();
            for (ast, _) in out {
                let text = print_tactic(g, &ast);
                let back = grammar::parse_tactic(g, &text)
                    .unwrap_or_else(|e| panic!("sampled {text:?} does not parse: {e}"));
                assert_eq!(back, ast);
                parsed += 1;
            }
        }
        assert!(parsed >= 280, "only {parsed} of 300 samples completed");
    }
}
