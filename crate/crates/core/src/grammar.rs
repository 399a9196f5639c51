//! The tactic grammar: a fixed context-free grammar over atomic
//! Coq-style tactics, embedded as a data table.
//!
//! The table is the single source of truth shared by the parser, the
//! pretty-printer, the brute-force enumerator, and the decoder that
//! generates tactics under grammar constraints. Compound tactics
//! (`tac1; tac2`), goal selectors, and user-defined tactics are outside
//! the grammar and rejected by the parser.
//!
//! Surface conventions: rewrite direction arrows print as ASCII `->` /
//! `<-`; a terminating period is handled at the I/O boundary, not here.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use thiserror::Error;

/// The eleven hint database names admitted by the `HINT_DB` token class.
pub const HINT_DBS: [&str; 11] = [
    "arith", "zarith", "algebra", "real", "sets", "core", "bool", "datatypes", "coc", "set",
    "zfc",
];

/// The token classes emitted as tactic arguments.
pub const TOKEN_CLASSES: [&str; 5] =
    ["LOCAL_IDENT", "QUANTIFIED_IDENT", "INT", "QUALID", "HINT_DB"];

/// Grammar table. Quoted entries are keyword terminals, ALL-CAPS names
/// are token classes, everything else is a nonterminal. One row per
/// alternative; row order defines the dense production ids.
const RULES: &[(&str, &[&str])] = &[
    ("tactic_expr", &["intro"]),
    ("tactic_expr", &["'apply'", "term_commalist1", "reduced_in_clause"]),
    ("tactic_expr", &["'auto'", "using_clause", "with_hint_dbs"]),
    ("tactic_expr", &["'rewrite'", "rewrite_term_list1", "in_clause"]),
    ("tactic_expr", &["'simpl'", "in_clause"]),
    ("tactic_expr", &["'unfold'", "qualid_list1", "in_clause"]),
    ("tactic_expr", &["destruct"]),
    ("tactic_expr", &["induction"]),
    ("tactic_expr", &["'elim'", "QUALID"]),
    ("tactic_expr", &["'split'"]),
    ("tactic_expr", &["'assumption'"]),
    ("tactic_expr", &["trivial"]),
    ("tactic_expr", &["'reflexivity'"]),
    ("tactic_expr", &["'case'", "QUALID"]),
    ("tactic_expr", &["clear"]),
    ("tactic_expr", &["'subst'", "local_ident_list"]),
    ("tactic_expr", &["'generalize'", "term_list1"]),
    ("tactic_expr", &["'exists'", "LOCAL_IDENT"]),
    ("tactic_expr", &["'red'", "in_clause"]),
    ("tactic_expr", &["'omega'"]),
    ("tactic_expr", &["discriminate"]),
    ("tactic_expr", &["inversion"]),
    ("tactic_expr", &["simple_induction"]),
    ("tactic_expr", &["constructor"]),
    ("tactic_expr", &["'congruence'"]),
    ("tactic_expr", &["'left'"]),
    ("tactic_expr", &["'right'"]),
    ("tactic_expr", &["'ring'"]),
    ("tactic_expr", &["'symmetry'"]),
    ("tactic_expr", &["'f_equal'"]),
    ("tactic_expr", &["'tauto'"]),
    ("tactic_expr", &["'revert'", "local_ident_list1"]),
    ("tactic_expr", &["'specialize'", "'('", "LOCAL_IDENT", "QUALID", "')'"]),
    ("tactic_expr", &["'idtac'"]),
    ("tactic_expr", &["'hnf'", "in_clause"]),
    ("tactic_expr", &["inversion_clear"]),
    ("tactic_expr", &["contradiction"]),
    ("tactic_expr", &["'injection'", "LOCAL_IDENT"]),
    ("tactic_expr", &["'exfalso'"]),
    ("tactic_expr", &["'cbv'"]),
    ("tactic_expr", &["'contradict'", "LOCAL_IDENT"]),
    ("tactic_expr", &["'lia'"]),
    ("tactic_expr", &["'field'"]),
    ("tactic_expr", &["'easy'"]),
    ("tactic_expr", &["'cbn'"]),
    ("tactic_expr", &["'exact'", "QUALID"]),
    ("tactic_expr", &["'intuition'"]),
    ("tactic_expr", &["'eauto'", "using_clause", "with_hint_dbs"]),
    ("local_ident_list", &[]),
    ("local_ident_list", &["LOCAL_IDENT", "local_ident_list"]),
    ("local_ident_list1", &["LOCAL_IDENT"]),
    ("local_ident_list1", &["LOCAL_IDENT", "local_ident_list1"]),
    ("qualid_list1", &["QUALID"]),
    ("qualid_list1", &["QUALID", "','", "qualid_list1"]),
    ("term_list1", &["QUALID"]),
    ("term_list1", &["QUALID", "term_list1"]),
    ("term_commalist1", &["QUALID"]),
    ("term_commalist1", &["QUALID", "','", "term_commalist1"]),
    ("hint_db_list1", &["HINT_DB"]),
    ("hint_db_list1", &["HINT_DB", "hint_db_list1"]),
    ("reduced_in_clause", &[]),
    ("reduced_in_clause", &["'in'", "LOCAL_IDENT"]),
    ("in_clause", &[]),
    ("in_clause", &["'in'", "LOCAL_IDENT"]),
    ("in_clause", &["'in'", "'|- *'"]),
    ("in_clause", &["'in'", "'*'"]),
    // at_clause is declared by the tactic language but not referenced
    // by any tactic_expr alternative; it stays in the table, unreachable
    // from the start symbol.
    ("at_clause", &[]),
    ("at_clause", &["'at'", "INT"]),
    ("using_clause", &[]),
    ("using_clause", &["'using'", "qualid_list1"]),
    ("with_hint_dbs", &[]),
    ("with_hint_dbs", &["'with'", "hint_db_list1"]),
    ("with_hint_dbs", &["'with'", "'*'"]),
    ("intro", &["'intro'"]),
    ("intro", &["'intros'"]),
    ("rewrite_term", &["QUALID"]),
    ("rewrite_term", &["'->'", "QUALID"]),
    ("rewrite_term", &["'<-'", "QUALID"]),
    ("rewrite_term_list1", &["rewrite_term"]),
    ("rewrite_term_list1", &["rewrite_term", "','", "rewrite_term_list1"]),
    ("destruct", &["'destruct'", "term_commalist1"]),
    ("induction", &["'induction'", "LOCAL_IDENT"]),
    ("induction", &["'induction'", "INT"]),
    ("trivial", &["'trivial'"]),
    ("clear", &["'clear'"]),
    ("clear", &["'clear'", "local_ident_list1"]),
    ("discriminate", &["'discriminate'"]),
    ("discriminate", &["'discriminate'", "LOCAL_IDENT"]),
    ("inversion", &["'inversion'", "LOCAL_IDENT"]),
    ("inversion", &["'inversion'", "INT"]),
    ("simple_induction", &["'simple induction'", "QUANTIFIED_IDENT"]),
    ("simple_induction", &["'simple induction'", "INT"]),
    ("constructor", &["'constructor'"]),
    ("constructor", &["'constructor'", "INT"]),
    ("inversion_clear", &["'inversion_clear'", "LOCAL_IDENT"]),
    ("inversion_clear", &["'inversion_clear'", "INT"]),
    ("contradiction", &["'contradiction'"]),
    ("contradiction", &["'contradiction'", "LOCAL_IDENT"]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProductionId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    NonTerminal,
    Keyword,
    Token,
}

#[derive(Clone, Debug)]
pub struct SymbolInfo {
    pub name: String,
    pub kind: SymbolKind,
}

#[derive(Clone, Debug)]
pub struct Production {
    pub id: ProductionId,
    pub lhs: SymbolId,
    pub rhs: Vec<SymbolId>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("symbol {0:?} is not a nonterminal")]
    NotANonterminal(String),
    #[error("invalid tactic tree: {0}")]
    InvalidTree(String),
}

/// Why a tactic string was rejected.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TacticParseError {
    #[error("compound tactics are not supported (';' at byte {0})")]
    Compound(usize),
    #[error("goal selectors are not supported (':' at byte {0})")]
    GoalSelector(usize),
    #[error("unknown tactic head {0:?}")]
    UnknownHead(String),
    #[error("empty tactic")]
    Empty,
    #[error("unexpected character {ch:?} at byte {offset}")]
    Lex { ch: char, offset: usize },
    #[error("malformed tactic: {0}")]
    Malformed(String),
}

/// A derivation tree under the grammar. Internal nodes record the
/// production that expanded them; leaves are keyword or token
/// terminals, the latter carrying emitted argument text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TacticAst {
    Node { symbol: SymbolId, production: ProductionId, children: Vec<TacticAst> },
    Keyword(SymbolId),
    Token { symbol: SymbolId, text: String },
}

impl TacticAst {
    pub fn symbol(&self) -> SymbolId {
        match self {
            TacticAst::Node { symbol, .. }
            | TacticAst::Keyword(symbol)
            | TacticAst::Token { symbol, .. } => *symbol,
        }
    }

    /// Total node count, leaves included.
    pub fn size(&self) -> usize {
        match self {
            TacticAst::Node { children, .. } => {
                1 + children.iter().map(TacticAst::size).sum::<usize>()
            }
            _ => 1,
        }
    }

    /// Edge count on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        match self {
            TacticAst::Node { children, .. } => {
                children.iter().map(|c| 1 + c.height()).max().unwrap_or(0)
            }
            _ => 0,
        }
    }

    /// True when any token-terminal leaf occurs, i.e. the tactic takes
    /// at least one argument.
    pub fn has_argument(&self) -> bool {
        match self {
            TacticAst::Node { children, .. } => children.iter().any(TacticAst::has_argument),
            TacticAst::Token { .. } => true,
            TacticAst::Keyword(_) => false,
        }
    }

    /// Token-terminal leaves, left to right: (class symbol, text).
    pub fn arguments(&self) -> Vec<(SymbolId, &str)> {
        let mut out = Vec::new();
        self.collect_arguments(&mut out);
        out
    }

    fn collect_arguments<'a>(&'a self, out: &mut Vec<(SymbolId, &'a str)>) {
        match self {
            TacticAst::Node { children, .. } => {
                for c in children {
                    c.collect_arguments(out);
                }
            }
            TacticAst::Token { symbol, text } => out.push((*symbol, text)),
            TacticAst::Keyword(_) => {}
        }
    }
}

/// Lexical atoms of the tactic surface syntax.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Lexeme {
    Word(String),
    Int(String),
    Comma,
    LParen,
    RParen,
    Arrow,
    BackArrow,
    Turnstile,
    Star,
}

impl Lexeme {
    fn surface(&self) -> &str {
        match self {
            Lexeme::Word(w) => w,
            Lexeme::Int(i) => i,
            Lexeme::Comma => ",",
            Lexeme::LParen => "(",
            Lexeme::RParen => ")",
            Lexeme::Arrow => "->",
            Lexeme::BackArrow => "<-",
            Lexeme::Turnstile => "|-",
            Lexeme::Star => "*",
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(text: &str) -> Result<Vec<Lexeme>, TacticParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == ';' {
            return Err(TacticParseError::Compound(i));
        } else if c == ':' {
            return Err(TacticParseError::GoalSelector(i));
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            // Dots continue a qualified identifier only when followed by
            // another identifier segment.
            while i + 1 < chars.len() && chars[i] == '.' && is_ident_start(chars[i + 1]) {
                i += 1;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
            }
            out.push(Lexeme::Word(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            out.push(Lexeme::Int(chars[start..i].iter().collect()));
        } else if c == ',' {
            out.push(Lexeme::Comma);
            i += 1;
        } else if c == '(' {
            out.push(Lexeme::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Lexeme::RParen);
            i += 1;
        } else if c == '*' {
            out.push(Lexeme::Star);
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Lexeme::Arrow);
            i += 2;
        } else if c == '<' && chars.get(i + 1) == Some(&'-') {
            out.push(Lexeme::BackArrow);
            i += 2;
        } else if c == '|' && chars.get(i + 1) == Some(&'-') {
            out.push(Lexeme::Turnstile);
            i += 2;
        } else {
            return Err(TacticParseError::Lex { ch: c, offset: i });
        }
    }
    Ok(out)
}

/// The embedded grammar plus derived lookup tables.
#[derive(Debug)]
pub struct Grammar {
    symbols: Vec<SymbolInfo>,
    by_name: HashMap<String, SymbolId>,
    productions: Vec<Production>,
    by_lhs: Vec<Vec<ProductionId>>,
    keyword_lexemes: Vec<Vec<Lexeme>>,
    start: SymbolId,
    head_words: HashSet<String>,
}

/// Build the grammar from the embedded table.
pub fn load_grammar() -> Grammar {
    fn classify(raw: &str) -> (String, SymbolKind) {
        if let Some(stripped) = raw.strip_prefix('\'') {
            let name = stripped.strip_suffix('\'').expect("unterminated keyword quote");
            (name.to_string(), SymbolKind::Keyword)
        } else if raw.chars().all(|c| c.is_ascii_uppercase() || c == '_') {
            (raw.to_string(), SymbolKind::Token)
        } else {
            (raw.to_string(), SymbolKind::NonTerminal)
        }
    }

    let mut symbols: Vec<SymbolInfo> = Vec::new();
    let mut by_name: HashMap<String, SymbolId> = HashMap::new();
    let mut keywords_by_name: HashMap<String, SymbolId> = HashMap::new();
    // Keywords live in their own namespace: `clear` the nonterminal and
    // `'clear'` the keyword are distinct symbols sharing a name.
    let mut intern = |raw: &str, symbols: &mut Vec<SymbolInfo>| -> SymbolId {
        let (name, kind) = classify(raw);
        let map = if kind == SymbolKind::Keyword { &mut keywords_by_name } else { &mut by_name };
        if let Some(id) = map.get(&name) {
            return *id;
        }
        let id = SymbolId(symbols.len());
        symbols.push(SymbolInfo { name: name.clone(), kind });
        map.insert(name, id);
        id
    };

    // Intern left-hand sides first so nonterminals get stable low ids.
    for (lhs, _) in RULES {
        intern(lhs, &mut symbols);
    }
    let mut productions = Vec::new();
    for (lhs, rhs) in RULES {
        let lhs = intern(lhs, &mut symbols);
        let rhs = rhs.iter().map(|r| intern(r, &mut symbols)).collect();
        let id = ProductionId(productions.len());
        productions.push(Production { id, lhs, rhs });
    }

    let mut by_lhs = vec![Vec::new(); symbols.len()];
    for p in &productions {
        by_lhs[p.lhs.0].push(p.id);
    }

    let keyword_lexemes = symbols
        .iter()
        .map(|s| {
            if s.kind == SymbolKind::Keyword {
                lex(&s.name).expect("keyword text must lex")
            } else {
                Vec::new()
            }
        })
        .collect();

    let start = by_name["tactic_expr"];
    let mut g = Grammar {
        symbols,
        by_name,
        productions,
        by_lhs,
        keyword_lexemes,
        start,
        head_words: HashSet::new(),
    };
    g.head_words = g.first_words(g.start, &mut HashSet::new());
    g
}

/// Shared immutable grammar instance.
pub fn grammar() -> &'static Grammar {
    static GRAMMAR: OnceLock<Grammar> = OnceLock::new();
    GRAMMAR.get_or_init(load_grammar)
}

impl Grammar {
    pub fn start(&self) -> SymbolId {
        self.start
    }

    pub fn symbol(&self, id: SymbolId) -> &SymbolInfo {
        &self.symbols[id.0]
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol_named(&self, name: &str) -> Option<SymbolId> {
        self.by_name.get(name).copied()
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn production(&self, id: ProductionId) -> &Production {
        &self.productions[id.0]
    }

    /// The alternatives for a nonterminal, in table order.
    pub fn applicable_productions(&self, nt: SymbolId) -> Result<&[ProductionId], GrammarError> {
        let info = self
            .symbols
            .get(nt.0)
            .ok_or_else(|| GrammarError::UnknownSymbol(format!("#{}", nt.0)))?;
        if info.kind != SymbolKind::NonTerminal {
            return Err(GrammarError::NotANonterminal(info.name.clone()));
        }
        Ok(&self.by_lhs[nt.0])
    }

    /// First surface words reachable from `sym`, used to recognize
    /// unknown tactic heads.
    fn first_words(&self, sym: SymbolId, visiting: &mut HashSet<SymbolId>) -> HashSet<String> {
        let mut out = HashSet::new();
        if !visiting.insert(sym) {
            return out;
        }
        match self.symbols[sym.0].kind {
            SymbolKind::Keyword => {
                if let Some(Lexeme::Word(w)) = self.keyword_lexemes[sym.0].first() {
                    out.insert(w.clone());
                }
            }
            SymbolKind::Token => {}
            SymbolKind::NonTerminal => {
                for pid in &self.by_lhs[sym.0] {
                    if let Some(first) = self.productions[pid.0].rhs.first() {
                        out.extend(self.first_words(*first, visiting));
                    }
                }
            }
        }
        visiting.remove(&sym);
        out
    }

    /// True when `text` is a valid member of the token class `class`.
    pub fn token_text_valid(&self, class: SymbolId, text: &str) -> bool {
        match self.symbols[class.0].name.as_str() {
            "LOCAL_IDENT" | "QUANTIFIED_IDENT" => is_local_ident(text),
            "INT" => matches!(text, "1" | "2" | "3" | "4"),
            "QUALID" => is_qualid(text),
            "HINT_DB" => HINT_DBS.contains(&text),
            _ => false,
        }
    }

    /// Check a tree against the grammar: every internal node's children
    /// match its production symbol-for-symbol, and token leaves match
    /// their class patterns.
    pub fn validate(&self, ast: &TacticAst) -> Result<(), GrammarError> {
        match ast {
            TacticAst::Node { symbol, production, children } => {
                let p = self.productions.get(production.0).ok_or_else(|| {
                    GrammarError::InvalidTree(format!("no production {production:?}"))
                })?;
                if p.lhs != *symbol {
                    return Err(GrammarError::InvalidTree(format!(
                        "node {} expanded by a production for {}",
                        self.symbols[symbol.0].name, self.symbols[p.lhs.0].name
                    )));
                }
                if p.rhs.len() != children.len() {
                    return Err(GrammarError::InvalidTree(format!(
                        "node {} has {} children, production wants {}",
                        self.symbols[symbol.0].name,
                        children.len(),
                        p.rhs.len()
                    )));
                }
                for (want, child) in p.rhs.iter().zip(children) {
                    if child.symbol() != *want {
                        return Err(GrammarError::InvalidTree(format!(
                            "child symbol {} where {} expected",
                            self.symbols[child.symbol().0].name, self.symbols[want.0].name
                        )));
                    }
                    self.validate(child)?;
                }
                Ok(())
            }
            TacticAst::Keyword(symbol) => {
                if self.symbols[symbol.0].kind != SymbolKind::Keyword {
                    return Err(GrammarError::InvalidTree("keyword leaf on non-keyword".into()));
                }
                Ok(())
            }
            TacticAst::Token { symbol, text } => {
                if self.symbols[symbol.0].kind != SymbolKind::Token {
                    return Err(GrammarError::InvalidTree("token leaf on non-token".into()));
                }
                if !self.token_text_valid(*symbol, text) {
                    return Err(GrammarError::InvalidTree(format!(
                        "{:?} does not match token class {}",
                        text, self.symbols[symbol.0].name
                    )));
                }
                Ok(())
            }
        }
    }
}

fn is_local_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c)) && chars.all(is_ident_char)
}

fn is_qualid(s: &str) -> bool {
    !s.is_empty() && s.split('.').all(is_local_ident)
}

/// Match a single lexeme against a token class.
fn lexeme_matches_class(g: &Grammar, class: SymbolId, lexeme: &Lexeme) -> Option<String> {
    match (g.symbol(class).name.as_str(), lexeme) {
        ("LOCAL_IDENT" | "QUANTIFIED_IDENT", Lexeme::Word(w)) if is_local_ident(w) => {
            Some(w.clone())
        }
        ("QUALID", Lexeme::Word(w)) if is_qualid(w) => Some(w.clone()),
        ("HINT_DB", Lexeme::Word(w)) if HINT_DBS.contains(&w.as_str()) => Some(w.clone()),
        ("INT", Lexeme::Int(i)) if matches!(i.as_str(), "1" | "2" | "3" | "4") => Some(i.clone()),
        _ => None,
    }
}

/// Parse one atomic tactic. A trailing period is stripped before
/// lexing. Compound tactics, goal selectors, unknown head keywords, and
/// malformed arguments are rejected with a reason.
pub fn parse_tactic(g: &Grammar, text: &str) -> Result<TacticAst, TacticParseError> {
    let trimmed = text.trim();
    let trimmed = trimmed.strip_suffix('.').unwrap_or(trimmed);
    let toks = lex(trimmed)?;
    if toks.is_empty() {
        return Err(TacticParseError::Empty);
    }
    let mut furthest = 0usize;
    let parses = parse_symbol(g, &toks, 0, g.start, &mut furthest);
    if let Some((ast, _)) = parses.into_iter().find(|(_, end)| *end == toks.len()) {
        return Ok(ast);
    }
    if let Lexeme::Word(w) = &toks[0] {
        if !g.head_words.contains(w) {
            return Err(TacticParseError::UnknownHead(w.clone()));
        }
    }
    let at = furthest.min(toks.len().saturating_sub(1));
    Err(TacticParseError::Malformed(format!(
        "cannot derive {:?} (stuck near token {} {:?})",
        trimmed,
        at,
        toks[at].surface()
    )))
}

/// All derivations of `sym` starting at `pos`; `furthest` tracks the
/// deepest token reached for error messages.
fn parse_symbol(
    g: &Grammar,
    toks: &[Lexeme],
    pos: usize,
    sym: SymbolId,
    furthest: &mut usize,
) -> Vec<(TacticAst, usize)> {
    match g.symbol(sym).kind {
        SymbolKind::Keyword => {
            let want = &g.keyword_lexemes[sym.0];
            if toks.len() >= pos + want.len() && toks[pos..pos + want.len()] == want[..] {
                vec![(TacticAst::Keyword(sym), pos + want.len())]
            } else {
                *furthest = (*furthest).max(pos);
                Vec::new()
            }
        }
        SymbolKind::Token => match toks.get(pos).and_then(|l| lexeme_matches_class(g, sym, l)) {
            Some(text) => vec![(TacticAst::Token { symbol: sym, text }, pos + 1)],
            None => {
                *furthest = (*furthest).max(pos);
                Vec::new()
            }
        },
        SymbolKind::NonTerminal => {
            let mut out = Vec::new();
            for pid in &g.by_lhs[sym.0] {
                let rhs = &g.production(*pid).rhs;
                let mut partials: Vec<(Vec<TacticAst>, usize)> = vec![(Vec::new(), pos)];
                for child_sym in rhs {
                    let mut next = Vec::new();
                    for (children, at) in &partials {
                        for (child, end) in parse_symbol(g, toks, *at, *child_sym, furthest) {
                            let mut c = children.clone();
                            c.push(child);
                            next.push((c, end));
                        }
                    }
                    partials = next;
                    if partials.is_empty() {
                        break;
                    }
                }
                for (children, end) in partials {
                    out.push((TacticAst::Node { symbol: sym, production: *pid, children }, end));
                }
            }
            out
        }
    }
}

/// Canonical surface text of a tactic tree; inverse of [`parse_tactic`].
pub fn print_tactic(g: &Grammar, ast: &TacticAst) -> String {
    let mut toks: Vec<&str> = Vec::new();
    collect_frontier(g, ast, &mut toks);
    let mut out = String::new();
    for tok in toks {
        let no_space = out.is_empty() || tok == "," || tok == ")" || out.ends_with('(');
        if !no_space {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

fn collect_frontier<'g>(g: &'g Grammar, ast: &'g TacticAst, out: &mut Vec<&'g str>) {
    match ast {
        TacticAst::Node { children, .. } => {
            for c in children {
                collect_frontier(g, c, out);
            }
        }
        TacticAst::Keyword(sym) => out.push(&g.symbol(*sym).name),
        TacticAst::Token { text, .. } => out.push(text),
    }
}

/// The surface tokens of a tactic tree, in order.
pub fn tactic_tokens<'g>(g: &'g Grammar, ast: &'g TacticAst) -> Vec<&'g str> {
    let mut toks = Vec::new();
    collect_frontier(g, ast, &mut toks);
    toks
}

/// Candidate argument tokens available to the enumerator, per class.
/// `INT` and `HINT_DB` are closed classes but still configurable so an
/// empty vocabulary enumerates only argument-free tactics.
#[derive(Clone, Debug, Default)]
pub struct TokenVocab {
    pub local_idents: Vec<String>,
    pub qualids: Vec<String>,
    pub quantified_idents: Vec<String>,
    pub ints: Vec<String>,
    pub hint_dbs: Vec<String>,
}

impl TokenVocab {
    pub fn empty() -> TokenVocab {
        TokenVocab::default()
    }

    /// Vocabulary for proving in a given context: every name usable as
    /// LOCAL_IDENT/QUALID/QUANTIFIED_IDENT, plus the closed classes.
    pub fn from_names(names: &[&str]) -> TokenVocab {
        let owned: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        TokenVocab {
            local_idents: owned.clone(),
            qualids: owned.clone(),
            quantified_idents: owned,
            ints: ["1", "2", "3", "4"].iter().map(|s| s.to_string()).collect(),
            hint_dbs: HINT_DBS.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn candidates(&self, class: &str) -> &[String] {
        match class {
            "LOCAL_IDENT" => &self.local_idents,
            "QUANTIFIED_IDENT" => &self.quantified_idents,
            "QUALID" => &self.qualids,
            "INT" => &self.ints,
            "HINT_DB" => &self.hint_dbs,
            _ => &[],
        }
    }
}

/// Enumeration explores trees of at most this many nodes. Every
/// argument-free tactic fits well below it; with a non-empty vocabulary
/// `max_count` truncates the output long before the cap matters.
const MAX_ENUM_SIZE: usize = 256;

const SIZE_WORDS: usize = MAX_ENUM_SIZE / 64 + 1;

/// Set of achievable tree sizes for one symbol, as a bitset over
/// 0..=MAX_ENUM_SIZE.
#[derive(Clone, PartialEq, Eq)]
struct SizeSet {
    bits: [u64; SIZE_WORDS],
}

impl SizeSet {
    fn empty() -> SizeSet {
        SizeSet { bits: [0; SIZE_WORDS] }
    }

    fn singleton(n: usize) -> SizeSet {
        let mut s = SizeSet::empty();
        s.insert(n);
        s
    }

    fn insert(&mut self, n: usize) {
        if n <= MAX_ENUM_SIZE {
            self.bits[n / 64] |= 1 << (n % 64);
        }
    }

    fn contains(&self, n: usize) -> bool {
        n <= MAX_ENUM_SIZE && self.bits[n / 64] & (1 << (n % 64)) != 0
    }

    /// self |= other shifted up by `shift`, dropping overflow.
    fn union_shifted(&mut self, other: &SizeSet, shift: usize) {
        for n in other.ones() {
            self.insert(n + shift);
        }
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..=MAX_ENUM_SIZE).filter(|n| self.contains(*n))
    }

    /// Sizes obtainable as a + b with a from self, b from other.
    fn convolve(&self, other: &SizeSet) -> SizeSet {
        let mut out = SizeSet::empty();
        for a in self.ones() {
            out.union_shifted(other, a);
        }
        out
    }
}

/// Per-symbol achievable sizes and, per production, achievable total
/// sizes of each rhs suffix. Exact pruning tables for the enumerator.
struct SizeTables {
    by_symbol: Vec<SizeSet>,
    suffixes: Vec<Vec<SizeSet>>,
}

fn size_tables(g: &Grammar, vocab: &TokenVocab) -> SizeTables {
    let mut by_symbol: Vec<SizeSet> = g
        .symbols
        .iter()
        .map(|s| match s.kind {
            SymbolKind::Keyword => SizeSet::singleton(1),
            SymbolKind::Token => {
                if vocab.candidates(&s.name).is_empty() {
                    SizeSet::empty()
                } else {
                    SizeSet::singleton(1)
                }
            }
            SymbolKind::NonTerminal => SizeSet::empty(),
        })
        .collect();
    loop {
        let mut changed = false;
        for p in &g.productions {
            let mut total = SizeSet::singleton(0);
            for r in &p.rhs {
                total = total.convolve(&by_symbol[r.0]);
            }
            let mut with_node = SizeSet::empty();
            with_node.union_shifted(&total, 1);
            let mut merged = by_symbol[p.lhs.0].clone();
            for n in with_node.ones() {
                merged.insert(n);
            }
            if merged != by_symbol[p.lhs.0] {
                by_symbol[p.lhs.0] = merged;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let suffixes = g
        .productions
        .iter()
        .map(|p| {
            let mut suf = vec![SizeSet::singleton(0)];
            for r in p.rhs.iter().rev() {
                let next = by_symbol[r.0].convolve(suf.last().unwrap());
                suf.push(next);
            }
            suf.reverse();
            suf
        })
        .collect();
    SizeTables { by_symbol, suffixes }
}

/// Deterministically enumerate distinct valid tactic trees, smallest
/// node count first, truncated at `max_count`. Ties within one size are
/// ordered by production table order, then by size composition, then by
/// vocabulary order.
pub fn enumerate_tactics(g: &Grammar, vocab: &TokenVocab, max_count: usize) -> Vec<TacticAst> {
    let tables = size_tables(g, vocab);
    let mut out = Vec::new();
    let sizes: Vec<usize> = tables.by_symbol[g.start.0].ones().collect();
    for size in sizes {
        if out.len() >= max_count {
            break;
        }
        each_tree(g, vocab, &tables, g.start, size, &mut |t| {
            out.push(t);
            out.len() < max_count
        });
    }
    out
}

/// Yield every tree for `sym` with exactly `size` nodes, in canonical
/// order. The consumer returns false to stop; the stop propagates.
fn each_tree(
    g: &Grammar,
    vocab: &TokenVocab,
    tables: &SizeTables,
    sym: SymbolId,
    size: usize,
    f: &mut dyn FnMut(TacticAst) -> bool,
) -> bool {
    if !tables.by_symbol[sym.0].contains(size) {
        return true;
    }
    match g.symbol(sym).kind {
        SymbolKind::Keyword => f(TacticAst::Keyword(sym)),
        SymbolKind::Token => {
            for text in vocab.candidates(&g.symbol(sym).name) {
                if !f(TacticAst::Token { symbol: sym, text: text.clone() }) {
                    return false;
                }
            }
            true
        }
        SymbolKind::NonTerminal => {
            for pid in &g.by_lhs[sym.0] {
                let rhs = &g.production(*pid).rhs;
                let mut acc = Vec::new();
                let more = each_seq(
                    g,
                    vocab,
                    tables,
                    rhs,
                    &tables.suffixes[pid.0],
                    size - 1,
                    &mut acc,
                    &mut |children| {
                        f(TacticAst::Node {
                            symbol: sym,
                            production: *pid,
                            children: children.to_vec(),
                        })
                    },
                );
                if !more {
                    return false;
                }
            }
            true
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn each_seq(
    g: &Grammar,
    vocab: &TokenVocab,
    tables: &SizeTables,
    syms: &[SymbolId],
    suffix: &[SizeSet],
    size: usize,
    acc: &mut Vec<TacticAst>,
    f: &mut dyn FnMut(&[TacticAst]) -> bool,
) -> bool {
    let Some((first, rest)) = syms.split_first() else {
        return size != 0 || f(acc);
    };
    if !suffix[0].contains(size) {
        return true;
    }
    for s in tables.by_symbol[first.0].ones() {
        if s > size {
            break;
        }
        if !suffix[1].contains(size - s) {
            continue;
        }
        let more = each_tree(g, vocab, tables, *first, s, &mut |tree| {
            acc.push(tree);
            let keep_going = each_seq(g, vocab, tables, rest, &suffix[1..], size - s, acc, f);
            acc.pop();
            keep_going
        });
        if !more {
            return false;
        }
    }
    true
}
