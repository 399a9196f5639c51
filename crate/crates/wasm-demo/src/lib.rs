//! Browser demo bindings: parse tactics into derivation trees, generate
//! provable toy theorems, and train a small model in the page to prove
//! theorems interactively.
//!
//! The `*_impl` functions are plain Rust and unit tested natively; the
//! `wasm-bindgen` wrappers expose them to the static page under `www/`.
//! Build with:
//!
//! ```text
//! cargo build -p tacgen-wasm --target wasm32-unknown-unknown --release
//! wasm-bindgen --target web --out-dir crates/wasm-demo/www/pkg \
//!     target/wasm32-unknown-unknown/release/tacgen_wasm.wasm
//! ```

use std::cell::RefCell;
use std::fmt::Write as _;
use std::time::Duration;

use wasm_bindgen::prelude::*;

use tacgen::env::EnvironmentHandle;
use tacgen::grammar::{self, TacticAst};
use tacgen::model::TacticModel;
use tacgen::search::{self, SearchConfig};
use tacgen::toy::{self, ToyEnv};
use tacgen::training::{self, TrainingConfig};

thread_local! {
    static MODEL: RefCell<Option<TacticModel>> = const { RefCell::new(None) };
}

/// Parse one tactic and render its derivation tree, two-space indented.
#[wasm_bindgen]
pub fn parse_tactic(text: &str) -> Result<String, JsError> {
    parse_tactic_impl(text).map_err(|e| JsError::new(&e))
}

fn parse_tactic_impl(text: &str) -> Result<String, String> {
    let g = grammar::grammar();
    let ast = grammar::parse_tactic(g, text).map_err(|e| e.to_string())?;
    let mut out = String::new();
    let canonical = grammar::print_tactic(g, &ast);
    let _ = writeln!(out, "canonical: {canonical}");
    render_ast(g, &ast, 0, &mut out);
    Ok(out)
}

fn render_ast(g: &grammar::Grammar, ast: &TacticAst, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match ast {
        TacticAst::Node { symbol, children, .. } => {
            let _ = writeln!(out, "{pad}{}", g.symbol(*symbol).name);
            for c in children {
                render_ast(g, c, indent + 1, out);
            }
        }
        TacticAst::Keyword(symbol) => {
            let _ = writeln!(out, "{pad}\"{}\"", g.symbol(*symbol).name);
        }
        TacticAst::Token { symbol, text } => {
            let _ = writeln!(out, "{pad}{} = {text}", g.symbol(*symbol).name);
        }
    }
}

/// Generate provable theorems with witness scripts.
#[wasm_bindgen]
pub fn generate_theorems(seed: u32, count: u32, max_depth: u32) -> String {
    let count = count.clamp(1, 200) as usize;
    let max_depth = max_depth.clamp(1, 6) as usize;
    let mut out = String::new();
    for thm in toy::generate_toy_theorems(seed as u64, count, max_depth) {
        let _ = writeln!(out, "{}  {}", thm.name, thm.statement);
        let _ = writeln!(out, "    witness: {}", thm.witness.join(". ") + ".");
    }
    out
}

/// Train a fresh model on a generated corpus; keeps it for
/// [`prove_theorem`] and returns the per-epoch loss log.
#[wasm_bindgen]
pub fn train_model(
    seed: u32,
    theorems: u32,
    max_depth: u32,
    epochs: u32,
    dim: u32,
) -> Result<String, JsError> {
    train_model_impl(seed, theorems, max_depth, epochs, dim).map_err(|e| JsError::new(&e))
}

fn train_model_impl(
    seed: u32,
    theorems: u32,
    max_depth: u32,
    epochs: u32,
    dim: u32,
) -> Result<String, String> {
    let theorems = theorems.clamp(1, 500) as usize;
    let epochs = epochs.clamp(1, 50) as usize;
    let dim = dim.clamp(4, 128) as usize;
    let mut steps = Vec::new();
    for thm in toy::generate_toy_theorems(seed as u64, theorems, max_depth.clamp(1, 5) as usize) {
        steps.extend(training::extract_steps(&thm.statement, &thm.witness)?);
    }
    let config = TrainingConfig {
        learning_rate: 2e-3,
        weight_decay: 0.0,
        epochs,
        seed: seed as u64,
        dim,
        ..TrainingConfig::default()
    };
    let (model, logs) = training::train(&steps, &config, None).map_err(|e| e.to_string())?;
    let mut out = String::new();
    let _ = writeln!(out, "trained on {} steps (dim {dim})", steps.len());
    for entry in &logs {
        let _ = writeln!(out, "{}", entry.to_sexp());
    }
    MODEL.with(|m| *m.borrow_mut() = Some(model));
    Ok(out)
}

/// Search for a proof of a theorem (an S-expression such as
/// `(impl (atom A) (atom A))`) with the model trained in this page.
#[wasm_bindgen]
pub fn prove_theorem(
    theorem: &str,
    beam_width: u32,
    depth_limit: u32,
    max_tactics: u32,
    seed: u32,
) -> Result<String, JsError> {
    prove_theorem_impl(theorem, beam_width, depth_limit, max_tactics, seed)
        .map_err(|e| JsError::new(&e))
}

fn prove_theorem_impl(
    theorem: &str,
    beam_width: u32,
    depth_limit: u32,
    max_tactics: u32,
    seed: u32,
) -> Result<String, String> {
    let statement = tacgen::term::parse_sexp(theorem).map_err(|e| e.to_string())?;
    MODEL.with(|slot| {
        let borrowed = slot.borrow();
        let model = borrowed.as_ref().ok_or("train a model first")?;
        let config = SearchConfig {
            beam_width: beam_width.clamp(1, 64) as usize,
            depth_limit: depth_limit.clamp(1, 100) as usize,
            max_tactics: max_tactics.clamp(1, 2000) as usize,
            timeout: Duration::from_secs(3600),
            closer: None,
            seed: seed as u64,
        };
        let mut env = ToyEnv::new();
        let initial = env.init(&statement).map_err(|e| e.to_string())?;
        let (script, stats) =
            search::prove(&initial, &mut env, model, &config).map_err(|e| e.to_string())?;
        let mut out = String::new();
        match script {
            Some(script) => {
                let _ = writeln!(out, "proved in {} steps:", script.len());
                for t in &script.tactics {
                    let _ = writeln!(out, "  {t}.");
                }
            }
            None => {
                let _ = writeln!(out, "no proof found within budget");
            }
        }
        let _ = writeln!(
            out,
            "tactics tried: {}, states expanded: {}, duplicates pruned: {}",
            stats.tactics_tried, stats.expanded, stats.duplicates_pruned
        );
        Ok(out)
    })
}
