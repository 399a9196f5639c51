//! The trainable model as a unit: encoder and decoder parameters plus
//! the term vocabulary, with checkpoint persistence and the one-call
//! tactic proposal entry point used by search and evaluation.
//!
//! On disk a model is a directory holding `model.ckpt` (the tensor
//! checkpoint) and `model.meta` (an S-expression with the format
//! version, embedding width, and vocabulary; the checkpoint format
//! itself stores tensors only).

use std::path::Path;

use thiserror::Error;

use crate::decoder::{self, GenMode, GenerationContext};
use crate::encoder::{self, SymbolVocab};
use crate::grammar::{self, TacticAst};
use crate::numerics::{NumericsError, ParameterStore, Session};
use crate::rng::Rng;
use crate::sexp::{self, Sexp};
use crate::term::{Goal, ProofState};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const META_FILE: &str = "model.meta";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("model metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct TacticModel {
    pub store: ParameterStore,
    pub vocab: SymbolVocab,
    pub dim: usize,
}

impl TacticModel {
    /// Fresh model with uniform [-0.1, 0.1] initialization, seeded.
    pub fn init(vocab: SymbolVocab, dim: usize, seed: u64) -> TacticModel {
        let mut rng = Rng::new(seed);
        let mut store = ParameterStore::new();
        encoder::init_encoder_params(&mut store, vocab.len(), dim, &mut rng);
        decoder::init_decoder_params(&mut store, grammar::grammar(), dim, &mut rng);
        TacticModel { store, vocab, dim }
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir)?;
        self.store.save_file(&dir.join(CHECKPOINT_FILE))?;
        let meta = Sexp::list(vec![
            Sexp::atom("model"),
            Sexp::list(vec![Sexp::atom("version"), Sexp::atom("1")]),
            Sexp::list(vec![Sexp::atom("dim"), Sexp::atom(self.dim.to_string())]),
            self.vocab.to_sexp(),
        ]);
        std::fs::write(dir.join(META_FILE), format!("{meta}\n"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<TacticModel, ModelError> {
        let store = ParameterStore::load_file(&dir.join(CHECKPOINT_FILE))?;
        let meta_text = std::fs::read_to_string(dir.join(META_FILE))?;
        let meta = sexp::parse(&meta_text).map_err(|e| ModelError::Meta(e.to_string()))?;
        let items = meta
            .tagged("model")
            .ok_or_else(|| ModelError::Meta("expected (model ...)".into()))?;
        let mut dim = None;
        let mut vocab = None;
        for item in items {
            if let Some(rest) = item.tagged("version") {
                if rest.first().and_then(Sexp::as_atom) != Some("1") {
                    return Err(ModelError::Meta("unsupported model version".into()));
                }
            } else if let Some(rest) = item.tagged("dim") {
                dim = rest.first().and_then(Sexp::as_atom).and_then(|a| a.parse::<usize>().ok());
            } else if item.tagged("vocab").is_some() {
                vocab = SymbolVocab::from_sexp(item);
            }
        }
        Ok(TacticModel {
            store,
            vocab: vocab.ok_or_else(|| ModelError::Meta("missing vocab".into()))?,
            dim: dim.ok_or_else(|| ModelError::Meta("missing dim".into()))?,
        })
    }

    /// Candidate tactics for the focused goal of a state, ranked by
    /// log-probability. One call builds one tape: the context is
    /// encoded once and shared by the whole beam.
    pub fn propose(
        &self,
        state: &ProofState,
        goal: &Goal,
        mode: GenMode,
        seed: u64,
    ) -> Result<Vec<(TacticAst, f64)>, NumericsError> {
        let mut sess = Session::new(&self.store);
        let (g, premises) = encoder::encode_context(
            &mut sess,
            &self.vocab,
            self.dim,
            state,
            goal,
            encoder::ENV_PREMISE_CAP,
        )?;
        let ctx = GenerationContext {
            goal: g.value,
            premises: &premises,
            goal_term: &goal.statement,
            seed,
        };
        decoder::generate_tactic(&mut sess, grammar::grammar(), &ctx, self.dim, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_sexp;

    #[test]
    fn save_load_roundtrip() {
        let corpus = [parse_sexp("(impl (atom A) (atom B))").unwrap()];
        let vocab = SymbolVocab::build(corpus.iter());
        let model = TacticModel::init(vocab, 8, 42);
        let dir = std::env::temp_dir().join(format!("model-rt-{}", std::process::id()));
        model.save(&dir).unwrap();
        let back = TacticModel::load(&dir).unwrap();
        assert_eq!(back.dim, 8);
        assert_eq!(back.vocab, model.vocab);
        assert_eq!(back.store.save_bytes(), model.store.save_bytes());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn identical_seeds_make_identical_models() {
        let corpus = [parse_sexp("(atom A)").unwrap()];
        let vocab = SymbolVocab::build(corpus.iter());
        let a = TacticModel::init(vocab.clone(), 8, 7);
        let b = TacticModel::init(vocab, 8, 7);
        assert_eq!(a.store.save_bytes(), b.store.save_bytes());
    }
}
