//! Fully-automated proving: depth-first search over proof states,
//! expanding each state with beam-searched candidate tactics, with
//! duplicate-state pruning and tactic/depth/wall-time budgets.
//!
//! The search owns one environment handle. At each state an optional
//! closer tactic runs first and is accepted only when it fully solves
//! the focused goal; otherwise the model proposes up to beam-width
//! candidates, tried in rank order. Every state ever recursed into is
//! fingerprinted; children whose fingerprint was already seen anywhere
//! (current path or not) are pruned. Every execution attempt, including
//! failures and closers, counts against the tactic budget.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

/// Monotonic stopwatch. On wasm targets, where `std::time::Instant` is
/// unavailable, elapsed time reads as zero and only the tactic and
/// depth budgets bound the search.
#[cfg(not(target_arch = "wasm32"))]
#[derive(Clone, Copy)]
struct Stopwatch(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Stopwatch {
    fn start() -> Stopwatch {
        Stopwatch(std::time::Instant::now())
    }

    fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}

#[cfg(target_arch = "wasm32")]
#[derive(Clone, Copy)]
struct Stopwatch;

#[cfg(target_arch = "wasm32")]
impl Stopwatch {
    fn start() -> Stopwatch {
        Stopwatch
    }

    fn elapsed(&self) -> Duration {
        Duration::ZERO
    }
}

use crate::decoder::GenMode;
use crate::env::{EnvError, EnvironmentHandle, ExecOutcome};
use crate::grammar;
use crate::model::TacticModel;
use crate::sexp::Sexp;
use crate::term::{ProofState, Term};

/// Canonical byte string identifying a proof state up to goal ids and
/// environment premises. Equal fingerprints mean equal canonical
/// serializations of the open goals and their local contexts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateFingerprint(Vec<u8>);

impl StateFingerprint {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// Fingerprint a state. Deterministic, and independent of environment
/// premises (they never change within a proof).
pub fn fingerprint(state: &ProofState) -> StateFingerprint {
    StateFingerprint(state.canonical_goal_bytes())
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub beam_width: usize,
    pub depth_limit: usize,
    pub max_tactics: usize,
    pub timeout: Duration,
    pub closer: Option<String>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            beam_width: 20,
            depth_limit: 50,
            max_tactics: 300,
            timeout: Duration::from_secs(600),
            closer: None,
            seed: 0,
        }
    }
}

/// A successful proof: the tactic script plus how much work it took.
#[derive(Clone, Debug)]
pub struct ProofScript {
    pub tactics: Vec<String>,
    pub tactics_tried: usize,
    pub wall_seconds: f64,
}

impl ProofScript {
    /// Number of steps.
    pub fn len(&self) -> usize {
        self.tactics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tactics.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SearchStats {
    pub tactics_tried: usize,
    pub wall_seconds: f64,
    pub expanded: usize,
    pub duplicates_pruned: usize,
    /// Expansions of already-seen fingerprints; pruning keeps this at
    /// zero, the counter proves it.
    pub duplicate_expansions: usize,
    pub max_depth: usize,
}

struct Search<'a, E: EnvironmentHandle> {
    env: &'a mut E,
    model: &'a TacticModel,
    config: &'a SearchConfig,
    visited: HashSet<StateFingerprint>,
    expanded: HashSet<StateFingerprint>,
    stats: SearchStats,
    script: Vec<String>,
    started: Stopwatch,
}

impl<'a, E: EnvironmentHandle> Search<'a, E> {
    fn budget_left(&self) -> bool {
        self.stats.tactics_tried < self.config.max_tactics
            && self.started.elapsed() < self.config.timeout
    }

    /// Deterministic per-state generation seed.
    fn state_seed(&self, fp: &StateFingerprint) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in fp.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^ self.config.seed
    }

    fn dfs(&mut self, state: &ProofState, depth: usize) -> Result<bool, EnvError> {
        if state.is_complete() {
            return Ok(true);
        }
        if depth >= self.config.depth_limit {
            return Ok(false);
        }
        let fp = fingerprint(state);
        if !self.expanded.insert(fp.clone()) {
            self.stats.duplicate_expansions += 1;
        }
        self.stats.expanded += 1;
        self.stats.max_depth = self.stats.max_depth.max(depth);

        // A configured closer runs first and is kept only when it fully
        // solves the focused goal.
        if let Some(closer) = self.config.closer.clone() {
            if !self.budget_left() {
                return Ok(false);
            }
            self.stats.tactics_tried += 1;
            match self.env.execute(&closer)? {
                ExecOutcome::Solved(next) => {
                    if self.descend(&closer, next, depth)? {
                        return Ok(true);
                    }
                }
                _ => {
                    self.env.undo()?;
                }
            }
        }

        let goal = state.focused().expect("incomplete state has a goal").clone();
        let candidates = self
            .model
            .propose(state, &goal, GenMode::Beam(self.config.beam_width), self.state_seed(&fp))
            .map_err(|e| EnvError::Protocol(format!("generation failed: {e}")))?;
        for (ast, _score) in candidates {
            if !self.budget_left() {
                return Ok(false);
            }
            let text = grammar::print_tactic(grammar::grammar(), &ast);
            self.stats.tactics_tried += 1;
            match self.env.execute(&text)? {
                ExecOutcome::Solved(next) | ExecOutcome::Progress(next) => {
                    if self.descend(&text, next, depth)? {
                        return Ok(true);
                    }
                }
                ExecOutcome::NoChange | ExecOutcome::Failure(_) => {
                    self.env.undo()?;
                }
            }
        }
        Ok(false)
    }

    /// Recurse into a successor state unless its fingerprint was seen
    /// anywhere before; unwind the environment when the subtree fails.
    fn descend(&mut self, tactic: &str, next: ProofState, depth: usize) -> Result<bool, EnvError> {
        let fp = fingerprint(&next);
        if !next.is_complete() && !self.visited.insert(fp) {
            self.stats.duplicates_pruned += 1;
            self.env.undo()?;
            return Ok(false);
        }
        self.script.push(tactic.to_string());
        if self.dfs(&next, depth + 1)? {
            return Ok(true);
        }
        self.script.pop();
        self.env.undo()?;
        Ok(false)
    }
}

/// Prove the current theorem of an initialized environment. Returns the
/// script when a proof is found, plus search statistics either way.
/// Environment protocol failures surface as errors, distinct from "no
/// proof found".
pub fn prove<E: EnvironmentHandle>(
    initial: &ProofState,
    env: &mut E,
    model: &TacticModel,
    config: &SearchConfig,
) -> Result<(Option<ProofScript>, SearchStats), EnvError> {
    let mut search = Search {
        env,
        model,
        config,
        visited: HashSet::new(),
        expanded: HashSet::new(),
        stats: SearchStats::default(),
        script: Vec::new(),
        started: Stopwatch::start(),
    };
    search.visited.insert(fingerprint(initial));
    let proved = search.dfs(initial, 0)?;
    let mut stats = search.stats;
    stats.wall_seconds = search.started.elapsed().as_secs_f64();
    let script = proved.then_some(ProofScript {
        tactics: search.script,
        tactics_tried: stats.tactics_tried,
        wall_seconds: stats.wall_seconds,
    });
    Ok((script, stats))
}

/// Replay a script from scratch; true when every step succeeds and no
/// goals remain.
pub fn replay<E: EnvironmentHandle>(
    env: &mut E,
    theorem: &Term,
    script: &[String],
) -> Result<bool, EnvError> {
    let mut state = env.init(theorem)?;
    for tactic in script {
        match env.execute(tactic)? {
            ExecOutcome::Solved(next) | ExecOutcome::Progress(next) => state = next,
            ExecOutcome::NoChange | ExecOutcome::Failure(_) => return Ok(false),
        }
    }
    Ok(state.is_complete())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProofStatus {
    Proved,
    Failed,
    Error,
}

#[derive(Clone, Debug)]
pub struct TheoremOutcome {
    pub name: String,
    pub status: ProofStatus,
    pub tactics_tried: usize,
    pub wall_seconds: f64,
    pub script: Vec<String>,
    pub stats: SearchStats,
}

/// Aggregated evaluation over a theorem set.
#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    pub outcomes: Vec<TheoremOutcome>,
    pub proved: usize,
    pub proof_length_histogram: BTreeMap<usize, usize>,
    pub tactics_tried_histogram: BTreeMap<usize, usize>,
}

impl EvalReport {
    pub fn success_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.proved as f64 / self.outcomes.len() as f64
        }
    }

    /// Line-delimited report:
    /// `(result NAME (status ok|fail|error) (tactics N) (seconds X) (script "..." ...))`.
    /// `zero_timing` writes 0.000 seconds everywhere, making the report
    /// byte-stable across runs with the same seed.
    pub fn render(&self, zero_timing: bool) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            let status = match o.status {
                ProofStatus::Proved => "ok",
                ProofStatus::Failed => "fail",
                ProofStatus::Error => "error",
            };
            let seconds = if zero_timing { 0.0 } else { o.wall_seconds };
            let mut script = vec![Sexp::atom("script")];
            script.extend(o.script.iter().map(Sexp::string));
            let line = Sexp::list(vec![
                Sexp::atom("result"),
                Sexp::atom(&o.name),
                Sexp::list(vec![Sexp::atom("status"), Sexp::atom(status)]),
                Sexp::list(vec![Sexp::atom("tactics"), Sexp::atom(o.tactics_tried.to_string())]),
                Sexp::list(vec![Sexp::atom("seconds"), Sexp::atom(format!("{seconds:.3}"))]),
                Sexp::List(script),
            ]);
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Prove every theorem with a fresh environment from the factory,
/// optionally across `jobs` worker threads. Results are merged in input
/// order, so the report is deterministic for a fixed seed regardless of
/// job count (timing fields aside).
pub fn evaluate<E, F>(
    theorems: &[(String, Term)],
    env_factory: F,
    model: &TacticModel,
    config: &SearchConfig,
    jobs: usize,
) -> EvalReport
where
    E: EnvironmentHandle,
    F: Fn() -> Result<E, EnvError> + Sync,
{
    let jobs = jobs.max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TheoremOutcome>>> = Mutex::new(vec![None; theorems.len()]);
    let run_one = |index: usize| -> TheoremOutcome {
        let (name, statement) = &theorems[index];
        let attempt = || -> Result<(Option<ProofScript>, SearchStats), EnvError> {
            let mut env = env_factory()?;
            let initial = env.init(statement)?;
            prove(&initial, &mut env, model, config)
        };
        match attempt() {
            Ok((Some(script), stats)) => TheoremOutcome {
                name: name.clone(),
                status: ProofStatus::Proved,
                tactics_tried: stats.tactics_tried,
                wall_seconds: stats.wall_seconds,
                script: script.tactics,
                stats,
            },
            Ok((None, stats)) => TheoremOutcome {
                name: name.clone(),
                status: ProofStatus::Failed,
                tactics_tried: stats.tactics_tried,
                wall_seconds: stats.wall_seconds,
                script: Vec::new(),
                stats,
            },
            Err(e) => {
                eprintln!("{name}: environment error: {e}");
                TheoremOutcome {
                    name: name.clone(),
                    status: ProofStatus::Error,
                    tactics_tried: 0,
                    wall_seconds: 0.0,
                    script: Vec::new(),
                    stats: SearchStats::default(),
                }
            }
        }
    };

    if jobs == 1 {
        let mut slots = slots.lock().unwrap();
        for i in 0..theorems.len() {
            slots[i] = Some(run_one(i));
        }
    } else {
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= theorems.len() {
                        break;
                    }
                    let outcome = run_one(i);
                    slots.lock().unwrap()[i] = Some(outcome);
                });
            }
        });
    }

    let outcomes: Vec<TheoremOutcome> =
        slots.into_inner().unwrap().into_iter().map(|o| o.expect("all slots filled")).collect();
    let mut report = EvalReport::default();
    for o in &outcomes {
        if o.status == ProofStatus::Proved {
            report.proved += 1;
            *report.proof_length_histogram.entry(o.script.len()).or_default() += 1;
        }
        *report.tactics_tried_histogram.entry(o.tactics_tried).or_default() += 1;
    }
    report.outcomes = outcomes;
    report
}
