//! Two-leader session with an explicit, auditable message for the vectors
//! node 1 shares with node 2.
//!
//! The channel is in-process but every shared set goes through
//! [`encode_message`] and [`decode_message`], so node 2 only ever sees what
//! was serialized.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::barrier_solver::SolverParams;
use crate::error::{Error, Result};
use crate::model::Partition;
use crate::strategies::{self, Coupling, SharedVectorSet, Strategy, StrategyOutcome};

/// Node id of the sharing leader.
pub const LEADER_ONE: u32 = 1;

/// Wire form of a [`SharedVectorSet`]:
/// `{"sender":1,"n":n,"vectors":[[...],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedVectorMessage {
    pub sender: u32,
    pub n: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl SharedVectorMessage {
    pub fn from_set(set: &SharedVectorSet) -> Self {
        Self {
            sender: LEADER_ONE,
            n: set.n(),
            vectors: set.vectors().iter().map(|g| g.iter().copied().collect()).collect(),
        }
    }

    pub fn into_set(self) -> Result<SharedVectorSet> {
        if self.sender != LEADER_ONE {
            return Err(Error::Message(format!(
                "unexpected sender {}, only node {LEADER_ONE} shares",
                self.sender
            )));
        }
        let vectors = self
            .vectors
            .into_iter()
            .map(DVector::from_vec)
            .collect();
        SharedVectorSet::new(self.n, vectors).map_err(|e| Error::Message(e.to_string()))
    }

    /// Number of transmitted scalars, `N n`.
    pub fn payload_scalars(&self) -> usize {
        self.vectors.iter().map(Vec::len).sum()
    }

    /// Payload size in bytes at 8 bytes per scalar.
    pub fn byte_budget(&self) -> usize {
        self.payload_scalars() * std::mem::size_of::<f64>()
    }
}

/// Canonical JSON bytes; numbers use the shortest round-trip rendering.
pub fn encode_message(set: &SharedVectorSet) -> Vec<u8> {
    serde_json::to_vec(&SharedVectorMessage::from_set(set))
        .expect("finite floats always serialize")
}

pub fn decode_message(bytes: &[u8]) -> Result<SharedVectorSet> {
    let msg: SharedVectorMessage =
        serde_json::from_slice(bytes).map_err(|e| Error::Message(e.to_string()))?;
    msg.into_set()
}

/// What crossed the channel during a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub strategy: Strategy,
    pub payload_vectors: usize,
    pub payload_scalars: usize,
    /// Length of the encoded message; zero when nothing was sent.
    pub message_bytes: usize,
    #[serde(skip)]
    pub message: Option<Vec<u8>>,
}

/// Runs node 1, the (possibly empty) exchange, node 2 and the central
/// evaluation. The outcome equals the corresponding `select_*` call.
pub fn run_session(
    p: &Partition,
    k: usize,
    count: usize,
    strategy: Strategy,
    params: &SolverParams,
) -> Result<(StrategyOutcome, Transcript)> {
    if strategy == Strategy::Centralized {
        return Err(Error::InvalidProblem(
            "a session needs a decentralized strategy".into(),
        ));
    }
    strategies::check_decentralized_budget(p, k)?;
    let upper = strategies::centralized_upper_bound(p, k, params)?;
    let node1 = strategies::leader_one(p, k, params)?;

    let (node2, transcript, sent) = if strategy.shares_vectors() {
        let outgoing = strategies::extract_shared_vectors(p.a1(), &node1.selection, count)?;
        let bytes = encode_message(&outgoing);
        let received = decode_message(&bytes)?;
        let coupling = match strategy {
            Strategy::Fdm => Coupling::FocusedDiversity(&received),
            _ => Coupling::LinearPenalty(&received),
        };
        let node2 = strategies::leader_two(p, k, coupling, params)?;
        let transcript = Transcript {
            strategy,
            payload_vectors: received.len(),
            payload_scalars: received.len() * received.n(),
            message_bytes: bytes.len(),
            message: Some(bytes),
        };
        (node2, transcript, received.len())
    } else {
        let node2 = strategies::leader_two(p, k, Coupling::Independent, params)?;
        let transcript = Transcript {
            strategy,
            payload_vectors: 0,
            payload_scalars: 0,
            message_bytes: 0,
            message: None,
        };
        (node2, transcript, 0)
    };

    let outcome = strategies::assemble_decentralized(strategy, p, upper, &node1, &node2, sent)?;
    Ok((outcome, transcript))
}
