//! Terms, goals, contexts, proof states, and proof trees.
//!
//! A [`Term`] is a symbol-labeled ordered tree with an optional atom
//! payload on leaves. It is deliberately generic: it carries kernel
//! terms serialized from a proof assistant just as well as the toy
//! kernel's formulas. Everything here is immutable after construction
//! and safe to share across threads.
//!
//! On-disk syntax (see [`parse_sexp`] / [`print_sexp`]):
//!
//! - `(sym child ...)` is a node labeled `sym` whose children are the
//!   parenthesized items;
//! - `(sym a)` with a single bare atom `a` is a leaf with payload `a`;
//! - a bare atom `a` on its own abbreviates `(atom a)`, a leaf tagged
//!   with the fixed leaf symbol [`LEAF_TAG`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::sexp::{self, Sexp, SexpError};

/// Symbol used for leaves denoted by a bare atom.
pub const LEAF_TAG: &str = "atom";

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("invalid term syntax: {0}")]
    Syntax(#[from] SexpError),
    #[error("invalid term structure: {0}")]
    Structure(String),
}

/// A symbol-labeled ordered tree. The atom payload, when present,
/// implies the node has no children; symbols are non-empty tokens free
/// of whitespace, parentheses, and quotes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    symbol: String,
    atom: Option<String>,
    children: Vec<Term>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| !c.is_whitespace() && c != '(' && c != ')' && c != '"')
}

impl Term {
    /// A childless node without payload, e.g. `(true)`.
    pub fn leaf(symbol: impl Into<String>) -> Term {
        let symbol = symbol.into();
        assert!(valid_token(&symbol), "invalid term symbol {symbol:?}");
        Term { symbol, atom: None, children: Vec::new() }
    }

    /// A leaf carrying an atom payload, e.g. `(var a)`.
    pub fn with_atom(symbol: impl Into<String>, atom: impl Into<String>) -> Term {
        let symbol = symbol.into();
        let atom = atom.into();
        assert!(valid_token(&symbol), "invalid term symbol {symbol:?}");
        assert!(valid_token(&atom), "invalid atom payload {atom:?}");
        Term { symbol, atom: Some(atom), children: Vec::new() }
    }

    /// An internal node with ordered children.
    pub fn branch(symbol: impl Into<String>, children: Vec<Term>) -> Term {
        let symbol = symbol.into();
        assert!(valid_token(&symbol), "invalid term symbol {symbol:?}");
        Term { symbol, atom: None, children }
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn atom(&self) -> Option<&str> {
        self.atom.as_deref()
    }

    pub fn children(&self) -> &[Term] {
        &self.children
    }

    /// Node count and height (edge count on the longest root-to-leaf
    /// path). A single leaf is `(1, 0)`.
    pub fn stats(&self) -> (usize, usize) {
        let mut size = 0;
        let mut height = 0;
        // Explicit stack: (node, depth).
        let mut stack = vec![(self, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            size += 1;
            height = height.max(depth);
            for child in &node.children {
                stack.push((child, depth + 1));
            }
        }
        (size, height)
    }

    /// Walk `self` and every descendant, preorder.
    pub fn nodes(&self) -> impl Iterator<Item = &Term> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    fn to_sexp(&self) -> Sexp {
        let mut items = vec![Sexp::atom(&self.symbol)];
        if let Some(a) = &self.atom {
            items.push(Sexp::atom(a));
        }
        items.extend(self.children.iter().map(Term::to_sexp));
        Sexp::List(items)
    }

    fn from_sexp(e: &Sexp) -> Result<Term, TermError> {
        match e {
            Sexp::Atom(a) => {
                if !valid_token(a) {
                    return Err(TermError::Structure(format!("invalid atom {a:?}")));
                }
                Ok(Term::with_atom(LEAF_TAG, a.clone()))
            }
            Sexp::Str(_) => Err(TermError::Structure(
                "quoted strings cannot appear inside terms".into(),
            )),
            Sexp::List(items) => {
                let (head, rest) = items
                    .split_first()
                    .ok_or_else(|| TermError::Structure("empty list".into()))?;
                let symbol = head
                    .as_atom()
                    .ok_or_else(|| TermError::Structure("list head must be a symbol".into()))?;
                if !valid_token(symbol) {
                    return Err(TermError::Structure(format!("invalid symbol {symbol:?}")));
                }
                // A single bare atom after the head is the payload.
                if let [Sexp::Atom(a)] = rest {
                    if !valid_token(a) {
                        return Err(TermError::Structure(format!("invalid atom {a:?}")));
                    }
                    return Ok(Term::with_atom(symbol, a.clone()));
                }
                let children = rest
                    .iter()
                    .map(Term::from_sexp)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Term::branch(symbol, children))
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexp())
    }
}

/// Parse a single term from its S-expression text.
pub fn parse_sexp(text: &str) -> Result<Term, TermError> {
    Term::from_sexp(&sexp::parse(text)?)
}

/// Canonical S-expression text of a term: single spaces between items,
/// no trailing whitespace. Inverse of [`parse_sexp`].
pub fn print_sexp(term: &Term) -> String {
    term.to_string()
}

/// Size and height of a term; see [`Term::stats`].
pub fn term_stats(term: &Term) -> (usize, usize) {
    term.stats()
}

/// Where a premise lives: shared across the whole proof, or local to
/// one goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PremiseOrigin {
    Environment,
    LocalContext,
}

/// A named term usable as a tactic argument.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedPremise {
    pub name: String,
    pub term: Term,
    pub origin: PremiseOrigin,
}

impl NamedPremise {
    pub fn local(name: impl Into<String>, term: Term) -> NamedPremise {
        NamedPremise { name: name.into(), term, origin: PremiseOrigin::LocalContext }
    }

    pub fn environment(name: impl Into<String>, term: Term) -> NamedPremise {
        NamedPremise { name: name.into(), term, origin: PremiseOrigin::Environment }
    }
}

/// Identifier of a goal, unique within one proof.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GoalId(pub u64);

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A statement to prove together with its local context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Goal {
    pub id: GoalId,
    pub statement: Term,
    pub local_context: Vec<NamedPremise>,
}

impl Goal {
    pub fn new(id: GoalId, statement: Term, local_context: Vec<NamedPremise>) -> Goal {
        assert!(
            local_context.iter().all(|p| p.origin == PremiseOrigin::LocalContext),
            "goal context premises must have local origin"
        );
        Goal { id, statement, local_context }
    }

    pub fn find_premise(&self, name: &str) -> Option<&NamedPremise> {
        self.local_context.iter().find(|p| p.name == name)
    }

    /// `(goal ID STATEMENT (ctx (NAME TERM) ...))`
    pub fn to_sexp(&self) -> Sexp {
        let mut ctx = vec![Sexp::atom("ctx")];
        ctx.extend(self.local_context.iter().map(|p| {
            Sexp::list(vec![Sexp::atom(&p.name), p.term.to_sexp()])
        }));
        Sexp::list(vec![
            Sexp::atom("goal"),
            Sexp::atom(self.id.0.to_string()),
            self.statement.to_sexp(),
            Sexp::list(ctx),
        ])
    }

    pub fn from_sexp(e: &Sexp) -> Result<Goal, TermError> {
        let items = e
            .tagged("goal")
            .ok_or_else(|| TermError::Structure("expected (goal ...)".into()))?;
        let [id, statement, ctx] = items else {
            return Err(TermError::Structure("goal needs id, statement, ctx".into()));
        };
        let id = id
            .as_atom()
            .and_then(|a| a.parse::<u64>().ok())
            .ok_or_else(|| TermError::Structure("goal id must be an integer".into()))?;
        let statement = Term::from_sexp(statement)?;
        let ctx_items = ctx
            .tagged("ctx")
            .ok_or_else(|| TermError::Structure("expected (ctx ...)".into()))?;
        let mut local_context = Vec::new();
        for item in ctx_items {
            let pair = item
                .as_list()
                .filter(|l| l.len() == 2)
                .ok_or_else(|| TermError::Structure("expected (NAME TERM)".into()))?;
            let name = pair[0]
                .as_atom()
                .ok_or_else(|| TermError::Structure("premise name must be an atom".into()))?;
            local_context.push(NamedPremise::local(name, Term::from_sexp(&pair[1])?));
        }
        Ok(Goal::new(GoalId(id), statement, local_context))
    }
}

/// Environment premises plus the ordered open goals; the first goal is
/// the focused one. An empty goal list means the proof is complete.
///
/// The environment is stored once per proof behind an `Arc` and shared
/// by every state derived from it, never copied per goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofState {
    environment: Arc<Vec<NamedPremise>>,
    pub goals: Vec<Goal>,
}

impl ProofState {
    pub fn new(
        environment: Arc<Vec<NamedPremise>>,
        goals: Vec<Goal>,
    ) -> Result<ProofState, TermError> {
        let mut seen = std::collections::BTreeSet::new();
        for g in &goals {
            if !seen.insert(g.id) {
                return Err(TermError::Structure(format!("duplicate goal id {}", g.id)));
            }
        }
        if environment.iter().any(|p| p.origin != PremiseOrigin::Environment) {
            return Err(TermError::Structure(
                "environment premises must have environment origin".into(),
            ));
        }
        Ok(ProofState { environment, goals })
    }

    pub fn environment(&self) -> &[NamedPremise] {
        &self.environment
    }

    pub fn environment_arc(&self) -> Arc<Vec<NamedPremise>> {
        Arc::clone(&self.environment)
    }

    pub fn is_complete(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn focused(&self) -> Option<&Goal> {
        self.goals.first()
    }

    /// Canonical byte serialization of the open goals and their local
    /// contexts, in goal order. Goal ids and environment premises are
    /// excluded: two states that differ only there serialize equal.
    pub fn canonical_goal_bytes(&self) -> Vec<u8> {
        let items = self
            .goals
            .iter()
            .map(|g| {
                let mut ctx = vec![Sexp::atom("ctx")];
                ctx.extend(
                    g.local_context
                        .iter()
                        .map(|p| Sexp::list(vec![Sexp::atom(&p.name), p.term.to_sexp()])),
                );
                Sexp::list(vec![g.statement.to_sexp(), Sexp::list(ctx)])
            })
            .collect();
        Sexp::List(items).to_string().into_bytes()
    }
}

/// A tactic edge of a proof tree: the tactic text and the goals it
/// produced, in order. An edge with no children marks a solved leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TacticEdge {
    pub tactic: String,
    pub children: Vec<GoalId>,
}

/// Nodes are goals, edges are tactics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofTree {
    pub root: GoalId,
    pub nodes: BTreeMap<GoalId, Goal>,
    pub edges: BTreeMap<GoalId, TacticEdge>,
}

impl ProofTree {
    /// Check the tree shape: every non-root node with a record is the
    /// child of exactly one edge.
    pub fn validate(&self) -> Result<(), TermError> {
        let mut parents: BTreeMap<GoalId, usize> = BTreeMap::new();
        for edge in self.edges.values() {
            for c in &edge.children {
                *parents.entry(*c).or_default() += 1;
            }
        }
        if parents.contains_key(&self.root) {
            return Err(TermError::Structure("root cannot be a child".into()));
        }
        for (id, count) in &parents {
            if *count != 1 {
                return Err(TermError::Structure(format!(
                    "goal {id} is the child of {count} edges"
                )));
            }
        }
        for id in self.nodes.keys().chain(self.edges.keys()) {
            if *id != self.root && !parents.contains_key(id) {
                return Err(TermError::Structure(format!("goal {id} is unreachable")));
            }
        }
        Ok(())
    }

    /// Ids of `root`'s subtree (root included), preorder.
    pub fn subtree(&self, root: GoalId) -> Vec<GoalId> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some(edge) = self.edges.get(&id) {
                stack.extend(edge.children.iter().rev().copied());
            }
        }
        out
    }

    /// `(prooftree (root ID) (node ID (statement TERM) (context (NAME TERM)...))... (edge ID "tactic" (ID...))...)`
    pub fn to_sexp(&self) -> Sexp {
        let mut items = vec![
            Sexp::atom("prooftree"),
            Sexp::list(vec![Sexp::atom("root"), Sexp::atom(self.root.0.to_string())]),
        ];
        for (id, goal) in &self.nodes {
            let mut ctx = vec![Sexp::atom("context")];
            ctx.extend(
                goal.local_context
                    .iter()
                    .map(|p| Sexp::list(vec![Sexp::atom(&p.name), p.term.to_sexp()])),
            );
            items.push(Sexp::list(vec![
                Sexp::atom("node"),
                Sexp::atom(id.0.to_string()),
                Sexp::list(vec![Sexp::atom("statement"), goal.statement.to_sexp()]),
                Sexp::list(ctx),
            ]));
        }
        for (id, edge) in &self.edges {
            items.push(Sexp::list(vec![
                Sexp::atom("edge"),
                Sexp::atom(id.0.to_string()),
                Sexp::string(&edge.tactic),
                Sexp::list(edge.children.iter().map(|c| Sexp::atom(c.0.to_string())).collect()),
            ]));
        }
        Sexp::List(items)
    }

    pub fn from_sexp(e: &Sexp) -> Result<ProofTree, TermError> {
        let items = e
            .tagged("prooftree")
            .ok_or_else(|| TermError::Structure("expected (prooftree ...)".into()))?;
        let mut root = None;
        let mut nodes = BTreeMap::new();
        let mut edges = BTreeMap::new();
        for item in items {
            if let Some(rest) = item.tagged("root") {
                let [id] = rest else {
                    return Err(TermError::Structure("root needs one id".into()));
                };
                root = Some(parse_goal_id(id)?);
            } else if let Some(rest) = item.tagged("node") {
                let [id, statement, context] = rest else {
                    return Err(TermError::Structure("node needs id, statement, context".into()));
                };
                let id = parse_goal_id(id)?;
                let st = statement
                    .tagged("statement")
                    .and_then(|r| r.first())
                    .ok_or_else(|| TermError::Structure("expected (statement TERM)".into()))?;
                let ctx_items = context
                    .tagged("context")
                    .ok_or_else(|| TermError::Structure("expected (context ...)".into()))?;
                let mut local_context = Vec::new();
                for c in ctx_items {
                    let pair = c
                        .as_list()
                        .filter(|l| l.len() == 2)
                        .ok_or_else(|| TermError::Structure("expected (NAME TERM)".into()))?;
                    let name = pair[0]
                        .as_atom()
                        .ok_or_else(|| TermError::Structure("premise name must be an atom".into()))?;
                    local_context.push(NamedPremise::local(name, Term::from_sexp(&pair[1])?));
                }
                nodes.insert(id, Goal::new(id, Term::from_sexp(st)?, local_context));
            } else if let Some(rest) = item.tagged("edge") {
                let [id, tactic, children] = rest else {
                    return Err(TermError::Structure("edge needs id, tactic, children".into()));
                };
                let id = parse_goal_id(id)?;
                let tactic = tactic
                    .as_str()
                    .ok_or_else(|| TermError::Structure("edge tactic must be a string".into()))?
                    .to_string();
                let children = children
                    .as_list()
                    .ok_or_else(|| TermError::Structure("edge children must be a list".into()))?
                    .iter()
                    .map(parse_goal_id)
                    .collect::<Result<Vec<_>, _>>()?;
                edges.insert(id, TacticEdge { tactic, children });
            } else {
                return Err(TermError::Structure("unknown prooftree item".into()));
            }
        }
        let root = root.ok_or_else(|| TermError::Structure("missing (root ID)".into()))?;
        Ok(ProofTree { root, nodes, edges })
    }
}

fn parse_goal_id(e: &Sexp) -> Result<GoalId, TermError> {
    e.as_atom()
        .and_then(|a| a.parse::<u64>().ok())
        .map(GoalId)
        .ok_or_else(|| TermError::Structure("goal id must be an integer".into()))
}
