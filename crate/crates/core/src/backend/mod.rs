//! Debate engines. A backend opens one session per dialogue and is asked for
//! each turn's message text in order.

use crate::error::Result;
use crate::persona::AgentSpec;
use crate::protocol::{Stance, StanceMap, Topic, Turn};

pub mod remote;
pub mod synthetic;

pub use remote::{
    remote_complete, request_body, speaker_conversation, ChatMessage, ChatRole, RemoteBackend,
    RemoteBackendConfig, RemoteClient, RetryPolicy, API_KEY_ENV,
};
pub use synthetic::{
    conversion_probabilities, sample_categorical, sample_outcome, synthetic_turn_text,
    CellProbabilities, CellKey, SyntheticBackend, SyntheticParams,
};

/// Everything fixed for one dialogue before the first turn.
#[derive(Debug, Clone, Copy)]
pub struct DialogueSetup<'a> {
    pub agent_a: &'a AgentSpec,
    pub agent_b: &'a AgentSpec,
    pub topic: &'a Topic,
    pub initial_stances: &'a StanceMap,
    pub repetition: u32,
    pub seed: u64,
    pub max_turns_per_agent: usize,
}

/// One request for the next message of a dialogue.
#[derive(Debug, Clone, Copy)]
pub struct TurnRequest<'a> {
    pub speaker: &'a AgentSpec,
    /// Speaker's stance going into this turn.
    pub stance: Stance,
    pub turn_index: usize,
    pub system_prompt: &'a str,
    pub history: &'a [Turn],
    /// Set when the previous reply for this turn had no parseable verdict.
    pub rejected_reply: Option<&'a str>,
}

pub trait DialogueSession {
    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<String>;
}

pub trait DebateBackend: Send + Sync {
    /// Short name recorded in the run manifest.
    fn kind(&self) -> &'static str;

    /// Settings that determine behaviour, hashed into the run manifest.
    fn settings(&self) -> serde_json::Value;

    fn open_session<'s>(&'s self, setup: &DialogueSetup<'_>) -> Result<Box<dyn DialogueSession + 's>>;
}
