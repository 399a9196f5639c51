//! Term encoding: a child-sum tree LSTM embeds goal and premise terms
//! into fixed-size vectors, each tagged with a 3-way role (goal,
//! environment premise, local premise).
//!
//! Per node, the input/output/update gates read the node's symbol
//! embedding concatenated with the sum of child hidden states; a
//! separate forget gate reads the symbol embedding concatenated with
//! one child's hidden state, per child. Summing over children makes the
//! encoding invariant to child order at every node.

use std::collections::HashMap;

use crate::numerics::{NumericsError, Session, Tensor, Value};
use crate::rng::Rng;
use crate::sexp::Sexp;
use crate::term::{Goal, PremiseOrigin, ProofState, Term};

/// How many environment premises are encoded per goal: the most
/// recently introduced ones, newest last.
pub const ENV_PREMISE_CAP: usize = 10;

/// Term-node vocabulary built from a training corpus. Index 0 is the
/// unknown bucket. Leaves with atom payloads key as `symbol:payload`,
/// so distinct identifiers embed distinctly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolVocab {
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

pub const UNKNOWN_KEY: &str = "?";

impl SymbolVocab {
    /// Vocabulary key of one term node.
    pub fn node_key(node: &Term) -> String {
        match node.atom() {
            Some(a) => format!("{}:{}", node.symbol(), a),
            None => node.symbol().to_string(),
        }
    }

    /// Collect every node key of every term, sorted for determinism.
    pub fn build<'a>(terms: impl Iterator<Item = &'a Term>) -> SymbolVocab {
        let mut keys: Vec<String> = terms
            .flat_map(|t| t.nodes().map(SymbolVocab::node_key))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.insert(0, UNKNOWN_KEY.to_string());
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        SymbolVocab { keys, index }
    }

    pub fn id_of(&self, node: &Term) -> usize {
        self.index.get(&SymbolVocab::node_key(node)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn to_sexp(&self) -> Sexp {
        let mut items = vec![Sexp::atom("vocab")];
        items.extend(self.keys.iter().map(Sexp::atom));
        Sexp::List(items)
    }

    pub fn from_sexp(e: &Sexp) -> Option<SymbolVocab> {
        let items = e.tagged("vocab")?;
        let keys: Option<Vec<String>> =
            items.iter().map(|i| i.as_atom().map(str::to_string)).collect();
        let keys = keys?;
        if keys.first().map(String::as_str) != Some(UNKNOWN_KEY) {
            return None;
        }
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Some(SymbolVocab { keys, index })
    }
}

/// Whether an encoded term is the goal, an environment premise, or a
/// local-context premise. The one-hot tag order is fixed as written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Goal,
    EnvPremise,
    LocalPremise,
}

impl Role {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Role::Goal => [1.0, 0.0, 0.0],
            Role::EnvPremise => [0.0, 1.0, 0.0],
            Role::LocalPremise => [0.0, 0.0, 1.0],
        }
    }
}

/// A term embedded to `dim + 3` entries: hidden state plus role tag.
#[derive(Clone, Debug)]
pub struct EncodedTerm {
    pub value: Value,
    pub role: Role,
    pub name: Option<String>,
}

/// Register encoder parameters: symbol embeddings and the tree LSTM
/// gate weights. Initialization is uniform in [-0.1, 0.1].
pub fn init_encoder_params(
    store: &mut crate::numerics::ParameterStore,
    vocab_size: usize,
    dim: usize,
    rng: &mut Rng,
) {
    let mut mat = |store: &mut crate::numerics::ParameterStore, name: &str, r: usize, c: usize| {
        store.insert(name, Tensor::uniform(vec![r, c], -0.1, 0.1, rng));
    };
    mat(store, "enc.sym", vocab_size, dim);
    for gate in ["i", "o", "u", "f"] {
        mat(store, &format!("enc.w{gate}"), dim, 2 * dim);
        store.insert(format!("enc.b{gate}"), Tensor::zeros(vec![dim]));
    }
}

struct Gates {
    wi: Value,
    bi: Value,
    wo: Value,
    bo: Value,
    wu: Value,
    bu: Value,
    wf: Value,
    bf: Value,
    sym: Value,
}

fn bind_gates(sess: &mut Session) -> Result<Gates, NumericsError> {
    Ok(Gates {
        wi: sess.param("enc.wi")?,
        bi: sess.param("enc.bi")?,
        wo: sess.param("enc.wo")?,
        bo: sess.param("enc.bo")?,
        wu: sess.param("enc.wu")?,
        bu: sess.param("enc.bu")?,
        wf: sess.param("enc.wf")?,
        bf: sess.param("enc.bf")?,
        sym: sess.param("enc.sym")?,
    })
}

/// Bottom-up child-sum tree LSTM; returns the root hidden state
/// (`dim` entries). Unknown node symbols map to the unknown embedding
/// row.
pub fn encode_term(
    sess: &mut Session,
    vocab: &SymbolVocab,
    dim: usize,
    term: &Term,
) -> Result<Value, NumericsError> {
    let gates = bind_gates(sess)?;
    let (_, h) = encode_node(sess, &gates, vocab, dim, term)?;
    Ok(h)
}

fn encode_node(
    sess: &mut Session,
    gates: &Gates,
    vocab: &SymbolVocab,
    dim: usize,
    node: &Term,
) -> Result<(Value, Value), NumericsError> {
    let mut child_states = Vec::with_capacity(node.children().len());
    for child in node.children() {
        child_states.push(encode_node(sess, gates, vocab, dim, child)?);
    }
    let x = sess.tape.row(gates.sym, vocab.id_of(node))?;
    let h_sum = if child_states.is_empty() {
        sess.tape.zeros(vec![dim])
    } else {
        let hs: Vec<Value> = child_states.iter().map(|(_, h)| *h).collect();
        sess.tape.add_all(&hs)?
    };
    let xh = sess.tape.concat(&[x, h_sum])?;
    let gate = |sess: &mut Session, w: Value, b: Value| -> Result<Value, NumericsError> {
        let lin = sess.tape.matvec(w, xh)?;
        sess.tape.add(lin, b)
    };
    let i_lin = gate(sess, gates.wi, gates.bi)?;
    let i = sess.tape.sigmoid(i_lin);
    let o_lin = gate(sess, gates.wo, gates.bo)?;
    let o = sess.tape.sigmoid(o_lin);
    let u_lin = gate(sess, gates.wu, gates.bu)?;
    let u = sess.tape.tanh(u_lin);
    let mut cell = sess.tape.mul(i, u)?;
    for (c_child, h_child) in &child_states {
        let xh_child = sess.tape.concat(&[x, *h_child])?;
        let f_lin = sess.tape.matvec(gates.wf, xh_child)?;
        let f_bias = sess.tape.add(f_lin, gates.bf)?;
        let f = sess.tape.sigmoid(f_bias);
        let forgotten = sess.tape.mul(f, *c_child)?;
        cell = sess.tape.add(cell, forgotten)?;
    }
    let c_act = sess.tape.tanh(cell);
    let h = sess.tape.mul(o, c_act)?;
    Ok((cell, h))
}

/// Append the 3-entry role tag to a hidden state.
pub fn tag_role(sess: &mut Session, h: Value, role: Role) -> Result<Value, NumericsError> {
    let tag = sess.constant(Tensor::vector(role.one_hot().to_vec()));
    sess.tape.concat(&[h, tag])
}

/// Encode one goal in its state: the goal statement, every local
/// premise, and the last `env_cap` environment premises (the most
/// recently introduced). Premises carry their names.
pub fn encode_context(
    sess: &mut Session,
    vocab: &SymbolVocab,
    dim: usize,
    state: &ProofState,
    goal: &Goal,
    env_cap: usize,
) -> Result<(EncodedTerm, Vec<EncodedTerm>), NumericsError> {
    debug_assert!(state.goals.iter().any(|g| g.id == goal.id), "goal must belong to the state");
    let h_goal = encode_term(sess, vocab, dim, &goal.statement)?;
    let tagged = tag_role(sess, h_goal, Role::Goal)?;
    let g = EncodedTerm { value: tagged, role: Role::Goal, name: None };

    let mut premises = Vec::new();
    for p in &goal.local_context {
        debug_assert_eq!(p.origin, PremiseOrigin::LocalContext);
        let h = encode_term(sess, vocab, dim, &p.term)?;
        let v = tag_role(sess, h, Role::LocalPremise)?;
        premises.push(EncodedTerm {
            value: v,
            role: Role::LocalPremise,
            name: Some(p.name.clone()),
        });
    }
    let env = state.environment();
    let tail_start = env.len().saturating_sub(env_cap);
    for p in &env[tail_start..] {
        let h = encode_term(sess, vocab, dim, &p.term)?;
        let v = tag_role(sess, h, Role::EnvPremise)?;
        premises.push(EncodedTerm { value: v, role: Role::EnvPremise, name: Some(p.name.clone()) });
    }
    Ok((g, premises))
}
