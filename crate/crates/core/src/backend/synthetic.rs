//! Seeded generative persuasion model.
//!
//! Each dialogue has two independent conversion events: A converts B with
//! probability `a = clamp(α_A·σ_B·δ_t)` and B converts A with
//! `b = clamp(α_B·σ_A·δ_t)`. The session samples the outcome once when it
//! opens and then scripts turn texts whose final stance markers realise it.
//!
//! Cells can instead be pinned to an explicit four-outcome distribution
//! (replay calibration), which is how published tables are reproduced.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DebateBackend, DialogueSession, DialogueSetup, TurnRequest};
use crate::error::{Error, Result};
use crate::persona::{AgentSpec, Roster};
use crate::protocol::{InteractionOutcome, Stance, Topic};

pub const DEFAULT_EPSILON: f64 = 1e-6;

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub assertiveness: BTreeMap<u32, f64>,
    pub susceptibility: BTreeMap<u32, f64>,
    pub topic_difficulty: BTreeMap<String, f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl SyntheticParams {
    /// Illustrative parameters for the default six-agent roster. These are
    /// arbitrary, not estimates.
    pub fn illustrative_default() -> Self {
        let assertiveness = [(1, 0.75), (2, 0.45), (3, 0.65), (4, 0.8), (5, 0.6), (6, 0.85)];
        let susceptibility = [(1, 0.5), (2, 0.7), (3, 0.6), (4, 0.35), (5, 0.75), (6, 0.45)];
        let difficulty = [
            ("HIV", 1.0),
            ("QAnon", 0.8),
            ("5G", 0.85),
            ("MMR", 0.9),
            ("Chloride", 0.95),
            ("Superfood", 0.9),
        ];
        SyntheticParams {
            assertiveness: assertiveness.into_iter().collect(),
            susceptibility: susceptibility.into_iter().collect(),
            topic_difficulty: difficulty.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Same assertiveness and susceptibility for every agent, difficulty 1
    /// for every topic.
    pub fn uniform(roster: &Roster, topics: &[Topic], assertiveness: f64, susceptibility: f64) -> Self {
        SyntheticParams {
            assertiveness: roster.ids().map(|id| (id, assertiveness)).collect(),
            susceptibility: roster.ids().map(|id| (id, susceptibility)).collect(),
            topic_difficulty: topics.iter().map(|t| (t.abbreviation.clone(), 1.0)).collect(),
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Range checks plus the gauge `δ(first topic) = 1`. `topic_order` gives
    /// the canonical topic order.
    pub fn validate(&self, topic_order: &[String]) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..0.5).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 0.5)", self.epsilon));
        }
        for (name, map) in [("assertiveness", &self.assertiveness), ("susceptibility", &self.susceptibility)] {
            for (id, v) in map {
                if !(0.0..=1.0).contains(v) {
                    return bad(format!("{name} of agent {id} is {v}, outside [0, 1]"));
                }
            }
        }
        for (topic, v) in &self.topic_difficulty {
            if !(*v > 0.0 && *v <= 1.0) {
                return bad(format!("difficulty of topic {topic} is {v}, outside (0, 1]"));
            }
        }
        if let Some(first) = topic_order.first() {
            match self.topic_difficulty.get(first) {
                Some(v) if *v == 1.0 => {}
                Some(v) => return bad(format!("difficulty of first topic {first} must be 1, got {v}")),
                None => return bad(format!("no difficulty for first topic {first}")),
            }
        }
        Ok(())
    }

    fn agent_value(map: &BTreeMap<u32, f64>, id: u32, what: &str) -> Result<f64> {
        map.get(&id)
            .copied()
            .ok_or_else(|| Error::Config(format!("no {what} for agent {id}")))
    }

    fn difficulty(&self, topic: &str) -> Result<f64> {
        self.topic_difficulty
            .get(topic)
            .copied()
            .ok_or_else(|| Error::Config(format!("no difficulty for topic {topic}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellProbabilities {
    pub p_a_converts_b: f64,
    pub p_b_converts_a: f64,
}

impl CellProbabilities {
    pub fn new(p_a_converts_b: f64, p_b_converts_a: f64) -> Result<Self> {
        for p in [p_a_converts_b, p_b_converts_a] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(CellProbabilities {
            p_a_converts_b,
            p_b_converts_a,
        })
    }

    /// Outcome distribution in canonical order
    /// `(a(1−b), b(1−a), (1−a)(1−b), ab)`.
    pub fn distribution(&self) -> [f64; 4] {
        let (a, b) = (self.p_a_converts_b, self.p_b_converts_a);
        [a * (1.0 - b), b * (1.0 - a), (1.0 - a) * (1.0 - b), a * b]
    }
}

fn clamp(x: f64, eps: f64) -> f64 {
    x.clamp(eps, 1.0 - eps)
}

pub fn conversion_probabilities(
    params: &SyntheticParams,
    agent_a: u32,
    agent_b: u32,
    topic: &str,
) -> Result<CellProbabilities> {
    let alpha_a = SyntheticParams::agent_value(&params.assertiveness, agent_a, "assertiveness")?;
    let alpha_b = SyntheticParams::agent_value(&params.assertiveness, agent_b, "assertiveness")?;
    let sigma_a = SyntheticParams::agent_value(&params.susceptibility, agent_a, "susceptibility")?;
    let sigma_b = SyntheticParams::agent_value(&params.susceptibility, agent_b, "susceptibility")?;
    let delta = params.difficulty(topic)?;
    let eps = params.epsilon;
    Ok(CellProbabilities {
        p_a_converts_b: clamp(alpha_a * sigma_b * delta, eps),
        p_b_converts_a: clamp(alpha_b * sigma_a * delta, eps),
    })
}

/// Draws the two conversion events with independent uniforms.
pub fn sample_outcome<R: Rng + ?Sized>(probs: &CellProbabilities, rng: &mut R) -> InteractionOutcome {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let a_converts = u1 < probs.p_a_converts_b;
    let b_converts = u2 < probs.p_b_converts_a;
    // A converting B flips B.
    InteractionOutcome::from_flips(b_converts, a_converts)
}

/// Draws from an explicit distribution in canonical outcome order.
pub fn sample_categorical<R: Rng + ?Sized>(dist: &[f64; 4], rng: &mut R) -> InteractionOutcome {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (outcome, p) in InteractionOutcome::ALL.into_iter().zip(dist) {
        acc += p;
        if u < acc {
            return outcome;
        }
    }
    // u landed in rounding slack above the cumulative sum
    *InteractionOutcome::ALL
        .iter()
        .rev()
        .zip(dist.iter().rev())
        .find(|(_, p)| **p > 0.0)
        .map(|(o, _)| o)
        .unwrap_or(&InteractionOutcome::MutualResistance)
}

const OPENERS: [&str; 3] = [
    "Let me be clear about where I stand",
    "I have thought about this carefully",
    "Here is how I see it",
];

/// Scripted message for the synthetic backend. Non-final turns restate the
/// current stance; a final turn with `will_flip_at_end` declares the flipped
/// stance.
pub fn synthetic_turn_text(
    agent: &AgentSpec,
    topic: &Topic,
    stance: Stance,
    turn_index: usize,
    is_final: bool,
    will_flip_at_end: bool,
) -> String {
    let manner = agent.profile.descriptors().join(" and ");
    let opener = OPENERS[turn_index % OPENERS.len()];
    let declared = if is_final && will_flip_at_end { stance.flip() } else { stance };
    let position = |s: Stance| match s {
        Stance::Believe => "I believe",
        Stance::Reject => "I reject",
    };
    let body = if declared != stance {
        format!(
            "You have given me reason to reconsider the {} claim. I no longer hold my earlier view; \
             {} it now.",
            topic.abbreviation,
            position(declared).to_lowercase()
        )
    } else {
        format!("{} the {} claim.", position(declared), topic.abbreviation)
    };
    format!(
        "[{name}, {manner}] {opener}. {body}\nSTANCE: {token}",
        name = agent.name,
        token = declared.marker_token(),
    )
}

pub type CellKey = (u32, u32, String);

/// Synthetic debate engine: trait-parameterised cells, optionally overridden
/// by explicit per-cell outcome distributions.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    params: SyntheticParams,
    overrides: BTreeMap<CellKey, [f64; 4]>,
}

impl SyntheticBackend {
    pub fn new(params: SyntheticParams) -> Self {
        SyntheticBackend {
            params,
            overrides: BTreeMap::new(),
        }
    }

    /// Pins cells to explicit outcome distributions (canonical order). Each
    /// distribution must be non-negative and sum to 1.
    pub fn with_overrides(mut self, overrides: BTreeMap<CellKey, [f64; 4]>) -> Result<Self> {
        for (key, dist) in &overrides {
            let sum: f64 = dist.iter().sum();
            if dist.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "override for cell {key:?} is not a distribution: {dist:?}"
                )));
            }
            if key.0 >= key.1 {
                return Err(Error::Config(format!("override cell {key:?} must have A < B")));
            }
        }
        self.overrides = overrides;
        Ok(self)
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    /// Outcome distribution used for a cell.
    pub fn cell_distribution(&self, agent_a: u32, agent_b: u32, topic: &str) -> Result<[f64; 4]> {
        if let Some(d) = self.overrides.get(&(agent_a, agent_b, topic.to_string())) {
            return Ok(*d);
        }
        Ok(conversion_probabilities(&self.params, agent_a, agent_b, topic)?.distribution())
    }

    fn sample_cell(&self, agent_a: u32, agent_b: u32, topic: &str, seed: u64) -> Result<InteractionOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self.overrides.get(&(agent_a, agent_b, topic.to_string())) {
            Some(dist) => Ok(sample_categorical(dist, &mut rng)),
            None => {
                let probs = conversion_probabilities(&self.params, agent_a, agent_b, topic)?;
                Ok(sample_outcome(&probs, &mut rng))
            }
        }
    }
}

struct ScriptedSession<'a> {
    topic: Topic,
    agent_a: u32,
    initial_a: Stance,
    initial_b: Stance,
    flips: (bool, bool),
    total_turns: usize,
    _backend: std::marker::PhantomData<&'a ()>,
}

impl DialogueSession for ScriptedSession<'_> {
    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<String> {
        let is_a = request.speaker.id == self.agent_a;
        let (initial, flip) = if is_a {
            (self.initial_a, self.flips.0)
        } else {
            (self.initial_b, self.flips.1)
        };
        let is_final = request.turn_index + 2 >= self.total_turns;
        Ok(synthetic_turn_text(
            request.speaker,
            &self.topic,
            initial,
            request.turn_index,
            is_final,
            flip,
        ))
    }
}

impl DebateBackend for SyntheticBackend {
    fn kind(&self) -> &'static str {
        "synthetic"
    }

    fn settings(&self) -> serde_json::Value {
        let overrides: Vec<_> = self
            .overrides
            .iter()
            .map(|((a, b, t), d)| serde_json::json!({ "pair": [a, b], "topic": t, "distribution": d }))
            .collect();
        serde_json::json!({ "params": self.params, "overrides": overrides })
    }

    fn open_session<'s>(&'s self, setup: &DialogueSetup<'_>) -> Result<Box<dyn DialogueSession + 's>> {
        let (a, b) = (setup.agent_a.id, setup.agent_b.id);
        let topic = &setup.topic.abbreviation;
        let outcome = self.sample_cell(a, b, topic, setup.seed)?;
        let stance = |id: u32| {
            setup
                .initial_stances
                .get(&id)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no initial stance for agent {id}")))
        };
        Ok(Box::new(ScriptedSession {
            topic: setup.topic.clone(),
            agent_a: a,
            initial_a: stance(a)?,
            initial_b: stance(b)?,
            flips: outcome.flips(),
            total_turns: 2 * setup.max_turns_per_agent,
            _backend: std::marker::PhantomData,
        }))
    }
}
