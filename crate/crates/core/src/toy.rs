//! A toy proof kernel for propositional logic with atom-level universal
//! quantification.
//!
//! Formulas are [`Term`]s over the symbols `atom`, `impl`, `and`, `or`,
//! `true`, `false`, and `forall`; a `forall` node's first child `(atom
//! x)` is its binder. The kernel supports a small tactic subset (intro,
//! intros, apply, exact, assumption, split, left, right, trivial,
//! idtac, clear, generalize) with syntactic matching: `apply H` peels
//! the implication spine of `H` and, when `H` is universally
//! quantified, instantiates the binders by first-order matching of the
//! conclusion against the goal. Everything else in the grammar reports
//! an "unsupported" failure.
//!
//! The kernel doubles as the corpus factory: [`generate_toy_theorems`]
//! builds theorems backward from random proof plans, so every theorem
//! ships with a witness script that replays to completion.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::env::{EnvError, EnvironmentHandle, ExecOutcome};
use crate::grammar::{self, Grammar, TacticAst};
use crate::rng::Rng;
use crate::term::{Goal, GoalId, NamedPremise, ProofState, ProofTree, TacticEdge, Term};

/// Formula constructors.
pub fn atom(name: &str) -> Term {
    Term::with_atom("atom", name)
}

pub fn implies(a: Term, b: Term) -> Term {
    Term::branch("impl", vec![a, b])
}

pub fn conj(a: Term, b: Term) -> Term {
    Term::branch("and", vec![a, b])
}

pub fn disj(a: Term, b: Term) -> Term {
    Term::branch("or", vec![a, b])
}

pub fn truth() -> Term {
    Term::leaf("true")
}

pub fn falsity() -> Term {
    Term::leaf("false")
}

pub fn forall(var: &str, body: Term) -> Term {
    Term::branch("forall", vec![atom(var), body])
}

/// Premise term recording a universally introduced variable. Not a
/// formula, so `assumption` can never discharge a goal with it.
pub fn variable(name: &str) -> Term {
    Term::with_atom("var", name)
}

pub fn is_variable(t: &Term) -> bool {
    t.symbol() == "var" && t.atom().is_some()
}

/// Split `impl(a, b)` into its parts.
fn as_impl(t: &Term) -> Option<(&Term, &Term)> {
    if t.symbol() == "impl" && t.children().len() == 2 {
        Some((&t.children()[0], &t.children()[1]))
    } else {
        None
    }
}

fn as_binary(t: &Term, sym: &str) -> Option<(Term, Term)> {
    if t.symbol() == sym && t.children().len() == 2 {
        Some((t.children()[0].clone(), t.children()[1].clone()))
    } else {
        None
    }
}

/// Binder name of a `forall` node.
fn as_forall(t: &Term) -> Option<(&str, &Term)> {
    if t.symbol() == "forall" && t.children().len() == 2 {
        let binder = t.children()[0].atom()?;
        Some((binder, &t.children()[1]))
    } else {
        None
    }
}

/// Check the formula shape.
pub fn is_formula(t: &Term) -> bool {
    match t.symbol() {
        "atom" => t.atom().is_some() && t.children().is_empty(),
        "true" | "false" => t.atom().is_none() && t.children().is_empty(),
        "impl" | "and" | "or" => {
            t.children().len() == 2 && t.children().iter().all(is_formula)
        }
        "forall" => as_forall(t).is_some_and(|(_, body)| is_formula(body)),
        _ => false,
    }
}

/// Replace every `(atom name)` occurrence by `value`.
fn subst_atom(t: &Term, name: &str, value: &Term) -> Term {
    if t.symbol() == "atom" && t.atom() == Some(name) {
        return value.clone();
    }
    if t.children().is_empty() {
        return t.clone();
    }
    let children = t.children().iter().map(|c| subst_atom(c, name, value)).collect();
    Term::branch(t.symbol(), children)
}

/// Does `(atom name)` occur in `t`?
fn atom_occurs(t: &Term, name: &str) -> bool {
    t.nodes().any(|n| n.symbol() == "atom" && n.atom() == Some(name))
}

/// First-order matching of `pattern` (with `binders` standing for holes
/// at atom positions) against a ground term. Bindings accumulate in
/// `subst`; conflicting bindings fail the match.
fn match_term(
    pattern: &Term,
    ground: &Term,
    binders: &[String],
    subst: &mut BTreeMap<String, Term>,
) -> bool {
    if pattern.symbol() == "atom" {
        if let Some(name) = pattern.atom() {
            if binders.iter().any(|b| b == name) {
                return match subst.get(name) {
                    Some(bound) => bound == ground,
                    None => {
                        subst.insert(name.to_string(), ground.clone());
                        true
                    }
                };
            }
        }
    }
    pattern.symbol() == ground.symbol()
        && pattern.atom() == ground.atom()
        && pattern.children().len() == ground.children().len()
        && pattern
            .children()
            .iter()
            .zip(ground.children())
            .all(|(p, g)| match_term(p, g, binders, subst))
}

fn apply_subst(t: &Term, subst: &BTreeMap<String, Term>) -> Term {
    let mut out = t.clone();
    for (name, value) in subst {
        out = subst_atom(&out, name, value);
    }
    out
}

/// One successful tactic execution, as recorded by the kernel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordedStep {
    pub expanded: GoalId,
    pub tactic: String,
    pub goals_after: Vec<GoalId>,
    pub new_goals: Vec<Goal>,
}

struct Snapshot {
    state: ProofState,
    next_goal: u64,
    steps_len: usize,
}

/// In-process proof kernel holding one session.
pub struct ToyEnv {
    state: Option<ProofState>,
    root: Option<Goal>,
    next_goal: u64,
    history: Vec<Snapshot>,
    steps: Vec<RecordedStep>,
}

impl Default for ToyEnv {
    fn default() -> Self {
        ToyEnv::new()
    }
}

impl ToyEnv {
    pub fn new() -> ToyEnv {
        ToyEnv {
            state: None,
            root: None,
            next_goal: 1,
            history: Vec::new(),
            steps: Vec::new(),
        }
    }

    /// Start a session from a closed theorem statement.
    pub fn start(theorem: &Term) -> Result<ToyEnv, EnvError> {
        let mut env = ToyEnv::new();
        env.init(theorem)?;
        Ok(env)
    }

    /// Start a session from a goal that already carries a local context
    /// (used to replay synthetic proofs after premise injection) and an
    /// optional shared environment.
    pub fn start_at_goal(
        goal: Goal,
        environment: Arc<Vec<NamedPremise>>,
    ) -> Result<ToyEnv, EnvError> {
        if !is_formula(&goal.statement) {
            return Err(EnvError::InvalidTheorem(format!(
                "not a formula: {}",
                goal.statement
            )));
        }
        let mut env = ToyEnv::new();
        let root = Goal::new(GoalId(1), goal.statement.clone(), goal.local_context.clone());
        env.next_goal = 2;
        env.root = Some(root.clone());
        env.state = Some(
            ProofState::new(environment, vec![root]).map_err(|e| EnvError::InvalidTheorem(e.to_string()))?,
        );
        Ok(env)
    }

    /// Successful steps executed so far, in order.
    pub fn recorded_steps(&self) -> &[RecordedStep] {
        &self.steps
    }

    pub fn root_goal(&self) -> Option<&Goal> {
        self.root.as_ref()
    }

    /// The proof tree recorded directly during execution: an edge per
    /// successful step, nodes for every goal seen. Only meaningful for
    /// linear (undo-free) sessions, such as witness replays.
    pub fn recorded_tree(&self) -> Option<ProofTree> {
        let root = self.root.clone()?;
        let mut nodes = BTreeMap::new();
        let mut edges = BTreeMap::new();
        let root_id = root.id;
        nodes.insert(root.id, root);
        for step in &self.steps {
            for g in &step.new_goals {
                nodes.insert(g.id, g.clone());
            }
            edges.insert(
                step.expanded,
                TacticEdge {
                    tactic: step.tactic.clone(),
                    children: step.new_goals.iter().map(|g| g.id).collect(),
                },
            );
        }
        Some(ProofTree { root: root_id, nodes, edges })
    }

    fn fresh_goal_id(&mut self) -> GoalId {
        let id = GoalId(self.next_goal);
        self.next_goal += 1;
        id
    }

    /// Smallest H<k> not present in the context. Naming depends only
    /// on the goal's own context, so replaying a subtree from any goal
    /// reproduces the names the original session used there.
    fn fresh_hyp_name(ctx: &[NamedPremise]) -> String {
        let mut k = 1u32;
        loop {
            let name = format!("H{k}");
            if ctx.iter().all(|p| p.name != name) {
                return name;
            }
            k += 1;
        }
    }

    fn execute_parsed(&mut self, ast: &TacticAst, g: &Grammar) -> Result<ExecOutcome, EnvError> {
        let state = self.state.clone().ok_or(EnvError::NotInitialized)?;
        let Some(goal) = state.focused().cloned() else {
            return Ok(ExecOutcome::Failure("no open goals".into()));
        };
        let canonical = grammar::print_tactic(g, ast);

        let applied = self.apply_tactic(&state, &goal, ast, g);
        let outcome = match applied {
            Applied::Fail(msg) => ExecOutcome::Failure(msg),
            Applied::NoChange => ExecOutcome::NoChange,
            Applied::Subgoals(new_goals) => {
                let mut goals = Vec::with_capacity(state.goals.len() + new_goals.len());
                goals.extend(new_goals.iter().cloned());
                goals.extend(state.goals.iter().skip(1).cloned());
                let next = ProofState::new(state.environment_arc(), goals)
                    .map_err(|e| EnvError::Protocol(e.to_string()))?;
                if next.canonical_goal_bytes() == state.canonical_goal_bytes() {
                    ExecOutcome::NoChange
                } else {
                    self.steps.push(RecordedStep {
                        expanded: goal.id,
                        tactic: canonical,
                        goals_after: next.goals.iter().map(|g| g.id).collect(),
                        new_goals,
                    });
                    if next.goals.len() < state.goals.len() {
                        ExecOutcome::Solved(next.clone())
                    } else {
                        ExecOutcome::Progress(next.clone())
                    }
                }
            }
        };
        if let Some(s) = outcome.state() {
            self.state = Some(s.clone());
        }
        Ok(outcome)
    }

    /// Tactic semantics against the focused goal. Returns the new goals
    /// that replace it (empty means solved).
    fn apply_tactic(
        &mut self,
        state: &ProofState,
        goal: &Goal,
        ast: &TacticAst,
        g: &Grammar,
    ) -> Applied {
        match classify(ast, g) {
            Toy::Intro => self.intro(goal, 1),
            Toy::Intros => self.intro(goal, usize::MAX),
            Toy::Apply(name) => self.apply_premise(state, goal, &name),
            Toy::Exact(name) => {
                match lookup(state, goal, &name) {
                    Some(p) if p.term == goal.statement => Applied::solved(),
                    Some(_) => Applied::Fail(format!("exact {name}: statement differs from the goal")),
                    None => Applied::Fail(format!("no premise named {name}")),
                }
            }
            Toy::Assumption => {
                if goal.local_context.iter().any(|p| p.term == goal.statement) {
                    Applied::solved()
                } else {
                    Applied::Fail("assumption: no hypothesis matches the goal".into())
                }
            }
            Toy::Split => match as_binary(&goal.statement, "and") {
                Some((a, b)) => {
                    let ga = Goal::new(self.fresh_goal_id(), a, goal.local_context.clone());
                    let gb = Goal::new(self.fresh_goal_id(), b, goal.local_context.clone());
                    Applied::subgoals(vec![ga, gb])
                }
                None => Applied::Fail("split: the goal is not a conjunction".into()),
            },
            Toy::Left => match as_binary(&goal.statement, "or") {
                Some((a, _)) => {
                    let ga = Goal::new(self.fresh_goal_id(), a, goal.local_context.clone());
                    Applied::subgoals(vec![ga])
                }
                None => Applied::Fail("left: the goal is not a disjunction".into()),
            },
            Toy::Right => match as_binary(&goal.statement, "or") {
                Some((_, b)) => {
                    let gb = Goal::new(self.fresh_goal_id(), b, goal.local_context.clone());
                    Applied::subgoals(vec![gb])
                }
                None => Applied::Fail("right: the goal is not a disjunction".into()),
            },
            Toy::Trivial => {
                if goal.statement == truth()
                    || goal.local_context.iter().any(|p| p.term == goal.statement)
                {
                    Applied::solved()
                } else {
                    Applied::NoChange
                }
            }
            Toy::Idtac => Applied::NoChange,
            Toy::Clear(name) => {
                if goal.find_premise(&name).is_none() {
                    return Applied::Fail(format!("clear: no local premise named {name}"));
                }
                let ctx = goal
                    .local_context
                    .iter()
                    .filter(|p| p.name != name)
                    .cloned()
                    .collect();
                let g2 = Goal::new(self.fresh_goal_id(), goal.statement.clone(), ctx);
                Applied::subgoals(vec![g2])
            }
            Toy::Generalize(name) => match lookup(state, goal, &name) {
                None => Applied::Fail(format!("no premise named {name}")),
                Some(p) if is_variable(&p.term) => {
                    Applied::Fail("generalize: cannot generalize a variable".into())
                }
                Some(p) => {
                    let stmt = implies(p.term.clone(), goal.statement.clone());
                    let g2 = Goal::new(self.fresh_goal_id(), stmt, goal.local_context.clone());
                    Applied::subgoals(vec![g2])
                }
            },
            Toy::Unsupported(what) => Applied::Fail(format!("unsupported tactic: {what}")),
        }
    }

    /// intro / intros. `limit` bounds how many binders to strip;
    /// `usize::MAX` means "to fixpoint".
    fn intro(&mut self, goal: &Goal, limit: usize) -> Applied {
        let mut statement = goal.statement.clone();
        let mut ctx = goal.local_context.clone();
        let mut introduced = 0usize;
        while introduced < limit {
            if let Some((premise, rest)) = as_impl(&statement) {
                let name = Self::fresh_hyp_name(&ctx);
                ctx.push(NamedPremise::local(name, premise.clone()));
                statement = rest.clone();
                introduced += 1;
            } else if let Some((binder, body)) = as_forall(&statement) {
                let mut name = binder.to_string();
                let mut body = body.clone();
                // Alpha-rename on collision so the body keeps referring
                // to the premise that tracks the variable.
                while ctx.iter().any(|p| p.name == name) {
                    let renamed = format!("{name}'");
                    body = subst_atom(&body, &name, &atom(&renamed));
                    name = renamed;
                }
                ctx.push(NamedPremise::local(name.clone(), variable(&name)));
                statement = body;
                introduced += 1;
            } else {
                break;
            }
        }
        if introduced == 0 {
            if limit == 1 {
                return Applied::Fail(
                    "intro: the goal is neither an implication nor universally quantified".into(),
                );
            }
            return Applied::NoChange;
        }
        let g2 = Goal::new(self.fresh_goal_id(), statement, ctx);
        Applied::subgoals(vec![g2])
    }

    /// apply H: find the shortest premise-argument prefix whose
    /// remaining conclusion matches the goal, instantiating universal
    /// binders by first-order matching.
    fn apply_premise(&mut self, state: &ProofState, goal: &Goal, name: &str) -> Applied {
        let Some(premise) = lookup(state, goal, name) else {
            return Applied::Fail(format!("no premise named {name}"));
        };
        if is_variable(&premise.term) {
            return Applied::Fail(format!("apply {name}: not a formula"));
        }
        // Peel universal binders and implication arguments one at a
        // time, trying to match the remaining conclusion against the
        // goal at every point (the zero-peel attempt is plain syntactic
        // equality). Binders occurring in a subgoal must have been
        // pinned by the conclusion match.
        let mut binders: Vec<String> = Vec::new();
        let mut args: Vec<Term> = Vec::new();
        let mut conclusion = premise.term.clone();
        loop {
            let mut subst = BTreeMap::new();
            if match_term(&conclusion, &goal.statement, &binders, &mut subst) {
                let instantiable = args.iter().all(|a| {
                    binders.iter().all(|b| subst.contains_key(b) || !atom_occurs(a, b))
                });
                if instantiable {
                    let new_goals = args
                        .iter()
                        .map(|a| {
                            Goal::new(
                                self.fresh_goal_id(),
                                apply_subst(a, &subst),
                                goal.local_context.clone(),
                            )
                        })
                        .collect();
                    return Applied::subgoals(new_goals);
                }
            }
            if let Some((b, body)) = as_forall(&conclusion) {
                binders.push(b.to_string());
                conclusion = body.clone();
            } else if let Some((a, rest)) = as_impl(&conclusion) {
                args.push(a.clone());
                conclusion = rest.clone();
            } else {
                return Applied::Fail(format!("apply {name}: no conclusion matches the goal"));
            }
        }
    }
}

enum Applied {
    Subgoals(Vec<Goal>),
    NoChange,
    Fail(String),
}

impl Applied {
    fn solved() -> Applied {
        Applied::Subgoals(Vec::new())
    }

    fn subgoals(new_goals: Vec<Goal>) -> Applied {
        Applied::Subgoals(new_goals)
    }
}

fn lookup<'a>(state: &'a ProofState, goal: &'a Goal, name: &str) -> Option<&'a NamedPremise> {
    goal.find_premise(name)
        .or_else(|| state.environment().iter().find(|p| p.name == name))
}

/// The tactic subset the kernel understands.
enum Toy {
    Intro,
    Intros,
    Apply(String),
    Exact(String),
    Assumption,
    Split,
    Left,
    Right,
    Trivial,
    Idtac,
    Clear(String),
    Generalize(String),
    Unsupported(String),
}

fn classify(ast: &TacticAst, g: &Grammar) -> Toy {
    let TacticAst::Node { children, .. } = ast else {
        return Toy::Unsupported("not a tactic".into());
    };
    let Some(head) = children.first() else {
        return Toy::Unsupported("empty tactic".into());
    };
    match head {
        TacticAst::Keyword(sym) => {
            let name = g.symbol(*sym).name.as_str();
            match name {
                "apply" => match single_list_argument(&children[1]) {
                    Some(arg) if matches!(&children[2], TacticAst::Node { children, .. } if children.is_empty()) => {
                        Toy::Apply(arg)
                    }
                    Some(_) => Toy::Unsupported("apply with an in-clause".into()),
                    None => Toy::Unsupported("apply with multiple arguments".into()),
                },
                "exact" => match &children[1] {
                    TacticAst::Token { text, .. } => Toy::Exact(text.clone()),
                    _ => Toy::Unsupported("exact".into()),
                },
                "assumption" => Toy::Assumption,
                "split" => Toy::Split,
                "left" => Toy::Left,
                "right" => Toy::Right,
                "idtac" => Toy::Idtac,
                "generalize" => match single_list_argument(&children[1]) {
                    Some(arg) => Toy::Generalize(arg),
                    None => Toy::Unsupported("generalize with multiple arguments".into()),
                },
                other => Toy::Unsupported(other.to_string()),
            }
        }
        TacticAst::Node { symbol, children: sub, .. } => {
            let name = g.symbol(*symbol).name.as_str();
            match name {
                "intro" => match sub.first() {
                    Some(TacticAst::Keyword(k)) if g.symbol(*k).name == "intro" => Toy::Intro,
                    _ => Toy::Intros,
                },
                "trivial" => Toy::Trivial,
                "clear" => match sub.get(1).and_then(single_ident_list) {
                    Some(arg) => Toy::Clear(arg),
                    None if sub.len() == 1 => Toy::Unsupported("clear without arguments".into()),
                    None => Toy::Unsupported("clear with multiple arguments".into()),
                },
                other => Toy::Unsupported(other.to_string()),
            }
        }
        TacticAst::Token { .. } => Toy::Unsupported("unexpected argument".into()),
    }
}

/// The single QUALID of a one-element term list, if it is one-element.
fn single_list_argument(list: &TacticAst) -> Option<String> {
    let TacticAst::Node { children, .. } = list else {
        return None;
    };
    match children.as_slice() {
        [TacticAst::Token { text, .. }] => Some(text.clone()),
        _ => None,
    }
}

/// The single LOCAL_IDENT of a one-element ident list.
fn single_ident_list(list: &TacticAst) -> Option<String> {
    let TacticAst::Node { children, .. } = list else {
        return None;
    };
    match children.as_slice() {
        [TacticAst::Token { text, .. }] => Some(text.clone()),
        _ => None,
    }
}

impl EnvironmentHandle for ToyEnv {
    fn init(&mut self, theorem: &Term) -> Result<ProofState, EnvError> {
        if !is_formula(theorem) {
            return Err(EnvError::InvalidTheorem(format!("not a formula: {theorem}")));
        }
        let root = Goal::new(GoalId(1), theorem.clone(), Vec::new());
        *self = ToyEnv::new();
        self.next_goal = 2;
        self.root = Some(root.clone());
        self.state = Some(
            ProofState::new(Arc::new(Vec::new()), vec![root])
                .map_err(|e| EnvError::InvalidTheorem(e.to_string()))?,
        );
        self.state()
    }

    fn execute(&mut self, tactic: &str) -> Result<ExecOutcome, EnvError> {
        let state = self.state.clone().ok_or(EnvError::NotInitialized)?;
        // Every execution pushes history, so execute-then-undo restores
        // the prior state whatever the outcome was.
        self.history.push(Snapshot {
            state,
            next_goal: self.next_goal,
            steps_len: self.steps.len(),
        });
        let g = grammar::grammar();
        match grammar::parse_tactic(g, tactic) {
            Ok(ast) => self.execute_parsed(&ast, g),
            Err(e) => Ok(ExecOutcome::Failure(format!("unsupported tactic: {e}"))),
        }
    }

    fn undo(&mut self) -> Result<ProofState, EnvError> {
        let snap = self.history.pop().ok_or(EnvError::EmptyHistory)?;
        self.next_goal = snap.next_goal;
        self.steps.truncate(snap.steps_len);
        self.state = Some(snap.state.clone());
        Ok(snap.state)
    }

    fn state(&mut self) -> Result<ProofState, EnvError> {
        self.state.clone().ok_or(EnvError::NotInitialized)
    }
}

/// A generated theorem with its witness script.
#[derive(Clone, Debug)]
pub struct ToyTheorem {
    pub name: String,
    pub statement: Term,
    pub witness: Vec<String>,
}

/// Proof plans mirror the tactic subset; premise references are context
/// positions resolved against the live state during realization.
#[derive(Clone, Debug)]
enum Plan {
    Trivial,
    Assumption,
    Exact(usize),
    Apply(usize, Vec<Plan>),
    Intro(Box<Plan>),
    IntroVar(Box<Plan>),
    Split(Box<Plan>, Box<Plan>),
    Left(Box<Plan>),
    Right(Box<Plan>),
}

/// Entries of the generator's scope, positionally aligned with the
/// kernel's local context during replay.
#[derive(Clone, Debug)]
enum ScopeEntry {
    Hyp(Term),
    Var(String),
}

const ATOM_POOL: [&str; 5] = ["A", "B", "C", "D", "E"];
const VAR_POOL: [&str; 6] = ["x", "y", "z", "u", "v", "w"];

fn random_formula(rng: &mut Rng, scope: &[ScopeEntry], budget: usize) -> Term {
    let vars: Vec<&str> = scope
        .iter()
        .filter_map(|e| match e {
            ScopeEntry::Var(v) => Some(v.as_str()),
            _ => None,
        })
        .collect();
    if budget == 0 || rng.chance(0.45) {
        let roll = rng.next_f64();
        if roll < 0.06 {
            truth()
        } else if roll < 0.10 {
            falsity()
        } else if !vars.is_empty() && roll < 0.35 {
            atom(rng.pick(&vars))
        } else {
            atom(rng.pick(&ATOM_POOL))
        }
    } else {
        let a = random_formula(rng, scope, budget - 1);
        let b = random_formula(rng, scope, budget - 1);
        match rng.below(3) {
            0 => implies(a, b),
            1 => conj(a, b),
            _ => disj(a, b),
        }
    }
}

/// Build a provable formula and its proof plan, backward from the plan.
fn gen_provable(rng: &mut Rng, scope: &mut Vec<ScopeEntry>, depth: usize) -> (Term, Plan) {
    let hyps: Vec<usize> = scope
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e, ScopeEntry::Hyp(_)))
        .map(|(i, _)| i)
        .collect();
    if depth == 0 {
        if !hyps.is_empty() && rng.chance(0.7) {
            let i = *rng.pick(&hyps);
            let ScopeEntry::Hyp(f) = &scope[i] else { unreachable!() };
            let plan = match rng.below(3) {
                0 => Plan::Assumption,
                1 => Plan::Exact(i),
                _ => Plan::Apply(i, Vec::new()),
            };
            return (f.clone(), plan);
        }
        return (truth(), Plan::Trivial);
    }
    let roll = rng.next_f64();
    if roll < 0.28 {
        // intro on an implication
        let budget = 1 + rng.below(2);
        let premise = random_formula(rng, scope, budget);
        scope.push(ScopeEntry::Hyp(premise.clone()));
        let (body, plan) = gen_provable(rng, scope, depth - 1);
        scope.pop();
        (implies(premise, body), Plan::Intro(Box::new(plan)))
    } else if roll < 0.40 {
        // intro on a universal
        let in_scope: Vec<String> = scope
            .iter()
            .filter_map(|e| match e {
                ScopeEntry::Var(v) => Some(v.clone()),
                _ => None,
            })
            .collect();
        let fresh = VAR_POOL
            .iter()
            .find(|v| !in_scope.iter().any(|s| s == **v))
            .copied()
            .unwrap_or("x");
        scope.push(ScopeEntry::Var(fresh.to_string()));
        let (body, plan) = gen_provable(rng, scope, depth - 1);
        scope.pop();
        (forall(fresh, body), Plan::IntroVar(Box::new(plan)))
    } else if roll < 0.58 {
        let (a, pa) = gen_provable(rng, scope, depth - 1);
        let (b, pb) = gen_provable(rng, scope, depth - 1);
        (conj(a, b), Plan::Split(Box::new(pa), Box::new(pb)))
    } else if roll < 0.72 {
        let (a, pa) = gen_provable(rng, scope, depth - 1);
        let budget = 1 + rng.below(2);
        let other = random_formula(rng, scope, budget);
        if rng.chance(0.5) {
            (disj(a, other), Plan::Left(Box::new(pa)))
        } else {
            (disj(other, a), Plan::Right(Box::new(pa)))
        }
    } else if roll < 0.86 && depth >= 2 {
        // Modus-ponens chain: (A1 -> .. -> An -> G) -> A1 -> .. -> An -> G
        let n = 1 + rng.below(2);
        let goal_core = random_formula(rng, scope, 1);
        // An argument equal to the conclusion would make the apply step
        // reproduce the goal verbatim, which the kernel reports as no
        // change; keep arguments distinct from it.
        let args: Vec<Term> = (0..n)
            .map(|_| loop {
                let a = random_formula(rng, scope, 1);
                if a != goal_core {
                    break a;
                }
            })
            .collect();
        let chain = args
            .iter()
            .rev()
            .fold(goal_core.clone(), |acc, a| implies(a.clone(), acc));
        let base = scope.len();
        scope.push(ScopeEntry::Hyp(chain.clone()));
        for a in &args {
            scope.push(ScopeEntry::Hyp(a.clone()));
        }
        let subplans = (0..n).map(|i| Plan::Exact(base + 1 + i)).collect();
        scope.truncate(base);
        let mut statement = goal_core;
        let mut plan = Plan::Apply(base, subplans);
        for a in args.iter().rev() {
            statement = implies(a.clone(), statement);
            plan = Plan::Intro(Box::new(plan));
        }
        (implies(chain, statement), Plan::Intro(Box::new(plan)))
    } else {
        gen_provable(rng, scope, 0)
    }
}

/// Replay a plan against the live kernel, emitting concrete tactic text
/// with premise names resolved from the current state.
fn realize(env: &mut ToyEnv, plan: &Plan, script: &mut Vec<String>) {
    let state = env.state().expect("initialized");
    let goal = state.focused().cloned().expect("open goal");
    let (text, rest): (String, Vec<&Plan>) = match plan {
        Plan::Trivial => ("trivial".into(), vec![]),
        Plan::Assumption => ("assumption".into(), vec![]),
        Plan::Exact(i) => (format!("exact {}", goal.local_context[*i].name), vec![]),
        Plan::Apply(i, subs) => {
            (format!("apply {}", goal.local_context[*i].name), subs.iter().collect())
        }
        Plan::Intro(p) | Plan::IntroVar(p) => ("intro".into(), vec![p.as_ref()]),
        Plan::Split(a, b) => ("split".into(), vec![a.as_ref(), b.as_ref()]),
        Plan::Left(p) => ("left".into(), vec![p.as_ref()]),
        Plan::Right(p) => ("right".into(), vec![p.as_ref()]),
    };
    let outcome = env.execute(&text).expect("kernel execution");
    assert!(
        outcome.is_success(),
        "plan step {text:?} failed on {}: {outcome:?}",
        goal.statement
    );
    script.push(text);
    for sub in rest {
        realize(env, sub, script);
    }
}

/// Generate provable theorems with replayable witness scripts. Theorems
/// are built backward from random proof plans, so provability holds by
/// construction; generation is deterministic in the seed.
pub fn generate_toy_theorems(seed: u64, count: usize, max_depth: usize) -> Vec<ToyTheorem> {
    assert!(count >= 1 && max_depth >= 1);
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        // Depth 1 is a single leaf tactic; each extra level may add one
        // decomposition step.
        let depth = 1 + rng.below(max_depth);
        let mut scope = Vec::new();
        let (statement, plan) = gen_provable(&mut rng, &mut scope, depth - 1);
        let mut env = match ToyEnv::start(&statement) {
            Ok(env) => env,
            Err(_) => continue,
        };
        let mut witness = Vec::new();
        realize(&mut env, &plan, &mut witness);
        let state = env.state().expect("state");
        assert!(state.is_complete(), "witness left open goals");
        out.push(ToyTheorem {
            name: format!("thm{:04}", out.len()),
            statement,
            witness,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search;

    fn exec(env: &mut ToyEnv, t: &str) -> ExecOutcome {
        env.execute(t).unwrap()
    }

    #[test]
    fn split_produces_two_goals() {
        let thm = implies(atom("A"), conj(atom("A"), atom("A")));
        let mut env = ToyEnv::start(&thm).unwrap();
        exec(&mut env, "intro");
        let out = exec(&mut env, "split");
        let state = out.state().unwrap();
        assert_eq!(state.goals.len(), 2);
        assert_eq!(state.goals[0].statement, atom("A"));
        assert_eq!(state.goals[1].statement, atom("A"));
    }

    #[test]
    fn apply_peels_implication() {
        // H: A -> B, goal B  ==>  apply H leaves subgoal A.
        let thm = implies(implies(atom("A"), atom("B")), implies(atom("A"), atom("B")));
        let mut env = ToyEnv::start(&thm).unwrap();
        exec(&mut env, "intro"); // H1 : A -> B
        let before = env.state().unwrap().focused().unwrap().clone();
        assert_eq!(before.statement, implies(atom("A"), atom("B")));
        exec(&mut env, "intro"); // H2 : A, goal B
        let out = exec(&mut env, "apply H1");
        let state = out.state().unwrap();
        assert_eq!(state.goals[0].statement, atom("A"));
        let done = exec(&mut env, "exact H2");
        assert!(matches!(done, ExecOutcome::Solved(_)));
        assert!(env.state().unwrap().is_complete());
    }

    #[test]
    fn apply_instantiates_universals() {
        // H: forall x, atom x; goal: B.
        let mut env = ToyEnv::start_at_goal(
            Goal::new(
                GoalId(1),
                atom("B"),
                vec![NamedPremise::local("H", forall("x", atom("x")))],
            ),
            Arc::new(Vec::new()),
        )
        .unwrap();
        let out = exec(&mut env, "apply H");
        assert!(matches!(out, ExecOutcome::Solved(_)), "{out:?}");
    }

    #[test]
    fn trivial_and_assumption_edges() {
        let mut env = ToyEnv::start(&truth()).unwrap();
        assert!(matches!(exec(&mut env, "assumption"), ExecOutcome::Failure(_)));
        assert!(matches!(exec(&mut env, "trivial"), ExecOutcome::Solved(_)));
    }

    #[test]
    fn idtac_and_unsupported() {
        let mut env = ToyEnv::start(&truth()).unwrap();
        assert!(matches!(exec(&mut env, "idtac"), ExecOutcome::NoChange));
        assert!(matches!(exec(&mut env, "rewrite H"), ExecOutcome::Failure(_)));
        assert!(matches!(exec(&mut env, "auto"), ExecOutcome::Failure(_)));
    }

    #[test]
    fn execute_then_undo_restores_fingerprint() {
        let theorems = generate_toy_theorems(11, 30, 4);
        let tactics = [
            "intro", "intros", "split", "left", "right", "assumption", "trivial", "idtac",
            "apply H1", "exact H1", "clear H1", "generalize H1",
        ];
        for thm in &theorems {
            let mut env = ToyEnv::start(&thm.statement).unwrap();
            // Walk a few steps in, exercising undo at every state.
            for (i, step) in thm.witness.iter().enumerate() {
                let before = search::fingerprint(&env.state().unwrap());
                for t in tactics {
                    let _ = env.execute(t);
                    env.undo().unwrap();
                    let after = search::fingerprint(&env.state().unwrap());
                    assert_eq!(before, after, "undo after {t:?} (step {i})");
                }
                env.execute(step).unwrap();
            }
        }
    }

    #[test]
    fn undo_empty_history_errors() {
        let mut env = ToyEnv::start(&truth()).unwrap();
        assert!(matches!(env.undo(), Err(EnvError::EmptyHistory)));
    }

    #[test]
    fn witnesses_replay_to_empty_goals() {
        for thm in generate_toy_theorems(7, 50, 4) {
            let mut env = ToyEnv::start(&thm.statement).unwrap();
            for t in &thm.witness {
                let out = env.execute(t).unwrap();
                assert!(out.is_success(), "{t:?} failed in {}", thm.name);
            }
            assert!(env.state().unwrap().is_complete(), "{} incomplete", thm.name);
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = generate_toy_theorems(99, 10, 3);
        let b = generate_toy_theorems(99, 10, 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.statement, y.statement);
            assert_eq!(x.witness, y.witness);
        }
    }

    #[test]
    fn new_goals_are_prepended_keeping_order() {
        // Goal list after split: the two subgoals sit in front, the
        // prior pending goals keep their relative order.
        let thm = conj(conj(truth(), truth()), truth());
        let mut env = ToyEnv::start(&thm).unwrap();
        let s1 = exec(&mut env, "split");
        let ids1: Vec<_> = s1.state().unwrap().goals.iter().map(|g| g.id.0).collect();
        assert_eq!(ids1, vec![2, 3]);
        let s2 = exec(&mut env, "split");
        let ids2: Vec<_> = s2.state().unwrap().goals.iter().map(|g| g.id.0).collect();
        assert_eq!(ids2, vec![4, 5, 3]);
    }

    /// Truth-table evaluation over the propositional fragment; the
    /// soundness oracle for the kernel.
    fn eval(t: &Term, assign: &BTreeMap<String, bool>) -> bool {
        match t.symbol() {
            "true" => true,
            "false" => false,
            "atom" => *assign.get(t.atom().unwrap()).unwrap_or(&false),
            "impl" => !eval(&t.children()[0], assign) || eval(&t.children()[1], assign),
            "and" => eval(&t.children()[0], assign) && eval(&t.children()[1], assign),
            "or" => eval(&t.children()[0], assign) || eval(&t.children()[1], assign),
            other => panic!("eval: {other}"),
        }
    }

    fn is_tautology(t: &Term) -> bool {
        let mut atoms: Vec<String> = t
            .nodes()
            .filter(|n| n.symbol() == "atom")
            .map(|n| n.atom().unwrap().to_string())
            .collect();
        atoms.sort();
        atoms.dedup();
        assert!(atoms.len() <= 12, "too many atoms for a truth table");
        for mask in 0u32..(1 << atoms.len()) {
            let assign: BTreeMap<String, bool> = atoms
                .iter()
                .enumerate()
                .map(|(i, a)| (a.clone(), mask & (1 << i) != 0))
                .collect();
            if !eval(t, &assign) {
                return false;
            }
        }
        true
    }

    #[test]
    fn kernel_soundness_against_truth_tables() {
        // Propositional theorems the kernel proves must be tautologies.
        let theorems: Vec<ToyTheorem> = generate_toy_theorems(23, 120, 4)
            .into_iter()
            .filter(|t| t.statement.nodes().all(|n| n.symbol() != "forall"))
            .collect();
        assert!(theorems.len() > 40);
        for thm in &theorems {
            assert!(
                is_tautology(&thm.statement),
                "kernel proved a non-tautology: {}",
                thm.statement
            );
        }
    }

    #[test]
    fn depth_one_theorems_solved_by_single_tactic() {
        // Exhaustive single-tactic oracle over the enumerable tactics.
        let g = grammar::grammar();
        for thm in generate_toy_theorems(31, 25, 1) {
            let names: Vec<&str> = vec![];
            let vocab = grammar::TokenVocab::from_names(&names);
            let tactics = grammar::enumerate_tactics(g, &vocab, 200);
            let solved = tactics.iter().any(|t| {
                let mut env = ToyEnv::start(&thm.statement).unwrap();
                let text = grammar::print_tactic(g, t);
                matches!(env.execute(&text), Ok(ExecOutcome::Solved(s)) if s.is_complete())
            });
            assert!(solved, "no single tactic solves {}", thm.statement);
        }
    }
}
