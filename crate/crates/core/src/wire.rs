//! Wire protocol for driving a proof environment over a socket.
//!
//! Frames are a 4-byte big-endian payload length followed by a UTF-8
//! payload holding one S-expression. Requests are `(init TERM)`,
//! `(exec "tactic text")`, `(undo)`, and `(state)`; responses are
//! `(ok (goals (goal ID TERM (ctx (NAME TERM)...))...))` or
//! `(err "message")`.
//!
//! An `(err ...)` answer to `exec` means the tactic failed; on any
//! other request it is an environment error. The client reconstructs
//! the execution outcome from the state delta: unchanged canonical
//! goals mean no change, one goal gone with nothing new means the
//! focused goal was solved, anything else is progress — the same
//! classification the in-process kernel reports directly.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;

use crate::env::{EnvError, EnvironmentHandle, ExecOutcome};
use crate::sexp::{self, Sexp};
use crate::term::{Goal, ProofState, Term};
use crate::toy::ToyEnv;

/// Upper bound on accepted frame payloads.
const MAX_FRAME_LEN: u32 = 64 << 20;

pub fn write_frame(w: &mut impl Write, payload: &str) -> std::io::Result<()> {
    let bytes = payload.as_bytes();
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(bytes)?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> std::io::Result<String> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(std::io::Error::other(format!("frame of {len} bytes refused")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    String::from_utf8(payload).map_err(|_| std::io::Error::other("frame is not UTF-8"))
}

fn goals_response(state: &ProofState) -> Sexp {
    let mut goals = vec![Sexp::atom("goals")];
    goals.extend(state.goals.iter().map(Goal::to_sexp));
    Sexp::list(vec![Sexp::atom("ok"), Sexp::List(goals)])
}

fn err_response(message: &str) -> Sexp {
    Sexp::list(vec![Sexp::atom("err"), Sexp::string(message)])
}

/// Serve one connection with its own toy kernel until the peer hangs
/// up.
pub fn serve_connection(mut stream: TcpStream) {
    let mut env = ToyEnv::new();
    loop {
        let payload = match read_frame(&mut stream) {
            Ok(p) => p,
            Err(_) => return,
        };
        let reply = handle_request(&mut env, &payload);
        if write_frame(&mut stream, &reply.to_string()).is_err() {
            return;
        }
    }
}

fn handle_request(env: &mut ToyEnv, payload: &str) -> Sexp {
    let request = match sexp::parse(payload) {
        Ok(r) => r,
        Err(e) => return err_response(&format!("bad request: {e}")),
    };
    if let Some(rest) = request.tagged("init") {
        let [term] = rest else {
            return err_response("init takes one term");
        };
        let term = match crate::term::parse_sexp(&term.to_string()) {
            Ok(t) => t,
            Err(e) => return err_response(&format!("bad term: {e}")),
        };
        match env.init(&term) {
            Ok(state) => goals_response(&state),
            Err(e) => err_response(&e.to_string()),
        }
    } else if let Some(rest) = request.tagged("exec") {
        let Some(tactic) = rest.first().and_then(Sexp::as_str) else {
            return err_response("exec takes a tactic string");
        };
        match env.execute(tactic) {
            Ok(ExecOutcome::Failure(msg)) => err_response(&msg),
            Ok(_) => match env.state() {
                Ok(state) => goals_response(&state),
                Err(e) => err_response(&e.to_string()),
            },
            Err(e) => err_response(&e.to_string()),
        }
    } else if request.tagged("undo").is_some() {
        match env.undo() {
            Ok(state) => goals_response(&state),
            Err(e) => err_response(&e.to_string()),
        }
    } else if request.tagged("state").is_some() {
        match env.state() {
            Ok(state) => goals_response(&state),
            Err(e) => err_response(&e.to_string()),
        }
    } else {
        err_response("unknown request")
    }
}

/// Accept loop: one thread and one kernel per connection. Blocks
/// forever.
pub fn serve(listener: TcpListener) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        std::thread::spawn(move || serve_connection(stream));
    }
    Ok(())
}

/// Bind an ephemeral local port and serve in a background thread;
/// returns the address to dial. Used by tests and the loopback suite.
pub fn spawn_local_server() -> std::io::Result<std::net::SocketAddr> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        let _ = serve(listener);
    });
    Ok(addr)
}

/// Client handle speaking the protocol; satisfies the environment
/// contract against any conforming peer.
pub struct RemoteEnv {
    stream: TcpStream,
    last: Option<ProofState>,
}

impl RemoteEnv {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<RemoteEnv, EnvError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(RemoteEnv { stream, last: None })
    }

    fn roundtrip(&mut self, request: &Sexp) -> Result<Response, EnvError> {
        write_frame(&mut self.stream, &request.to_string())?;
        let payload = read_frame(&mut self.stream)?;
        let reply = sexp::parse(&payload)
            .map_err(|e| EnvError::Protocol(format!("malformed response: {e}")))?;
        if let Some(rest) = reply.tagged("ok") {
            let goals_list = rest
                .first()
                .and_then(|g| g.tagged("goals"))
                .ok_or_else(|| EnvError::Protocol("ok without goals".into()))?;
            let goals = goals_list
                .iter()
                .map(Goal::from_sexp)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EnvError::Protocol(format!("bad goal: {e}")))?;
            let state = ProofState::new(Arc::new(Vec::new()), goals)
                .map_err(|e| EnvError::Protocol(e.to_string()))?;
            Ok(Response::State(state))
        } else if let Some(rest) = reply.tagged("err") {
            let msg = rest.first().and_then(Sexp::as_str).unwrap_or("unspecified error");
            Ok(Response::Err(msg.to_string()))
        } else {
            Err(EnvError::Protocol(format!("unrecognized response {payload:?}")))
        }
    }
}

enum Response {
    State(ProofState),
    Err(String),
}

impl EnvironmentHandle for RemoteEnv {
    fn init(&mut self, theorem: &Term) -> Result<ProofState, EnvError> {
        let term = sexp::parse(&theorem.to_string())
            .map_err(|e| EnvError::Protocol(e.to_string()))?;
        let request = Sexp::list(vec![Sexp::atom("init"), term]);
        match self.roundtrip(&request)? {
            Response::State(state) => {
                self.last = Some(state.clone());
                Ok(state)
            }
            Response::Err(msg) => Err(EnvError::InvalidTheorem(msg)),
        }
    }

    fn execute(&mut self, tactic: &str) -> Result<ExecOutcome, EnvError> {
        let request = Sexp::list(vec![Sexp::atom("exec"), Sexp::string(tactic)]);
        let prior = self.last.clone().ok_or(EnvError::NotInitialized)?;
        match self.roundtrip(&request)? {
            Response::Err(msg) => Ok(ExecOutcome::Failure(msg)),
            Response::State(next) => {
                // Reconstruct the outcome from the state delta.
                let outcome = if next.canonical_goal_bytes() == prior.canonical_goal_bytes()
                    && ids(&next) == ids(&prior)
                {
                    ExecOutcome::NoChange
                } else if ids(&next) == prior.goals.iter().skip(1).map(|g| g.id).collect::<Vec<_>>()
                {
                    ExecOutcome::Solved(next.clone())
                } else {
                    ExecOutcome::Progress(next.clone())
                };
                if outcome.is_success() {
                    self.last = Some(next);
                }
                Ok(outcome)
            }
        }
    }

    fn undo(&mut self) -> Result<ProofState, EnvError> {
        match self.roundtrip(&Sexp::list(vec![Sexp::atom("undo")]))? {
            Response::State(state) => {
                self.last = Some(state.clone());
                Ok(state)
            }
            Response::Err(msg) => {
                if msg.contains("empty history") {
                    Err(EnvError::EmptyHistory)
                } else {
                    Err(EnvError::Protocol(msg))
                }
            }
        }
    }

    fn state(&mut self) -> Result<ProofState, EnvError> {
        match self.roundtrip(&Sexp::list(vec![Sexp::atom("state")]))? {
            Response::State(state) => {
                self.last = Some(state.clone());
                Ok(state)
            }
            Response::Err(msg) => Err(EnvError::Protocol(msg)),
        }
    }
}

fn ids(state: &ProofState) -> Vec<crate::term::GoalId> {
    state.goals.iter().map(|g| g.id).collect()
}
