//! Agent roster: trait dimensions, polarities and the persona text handed to
//! chat backends.
//!
//! The default roster is fixed to six agents, one per pole of Extraversion,
//! Agreeableness and Neuroticism. Larger rosters can be loaded from the run
//! configuration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Stance;

/// Version tag of the persona prompt template. Bump whenever the wording in
/// [`render_system_prompt`] changes so transcripts stay comparable.
pub const PROMPT_TEMPLATE_VERSION: &str = "persona-v1";

/// Marker that every agent message must end with.
pub const STANCE_MARKER: &str = "STANCE:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraitDimension {
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl TraitDimension {
    pub const ALL: [TraitDimension; 3] = [
        TraitDimension::Extraversion,
        TraitDimension::Agreeableness,
        TraitDimension::Neuroticism,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraitDimension::Extraversion => "extraversion",
            TraitDimension::Agreeableness => "agreeableness",
            TraitDimension::Neuroticism => "neuroticism",
        }
    }
}

impl fmt::Display for TraitDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    High,
    Low,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::High => "high",
            Polarity::Low => "low",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct PersonalityProfile {
    pub dimension: TraitDimension,
    pub polarity: Polarity,
    descriptors: Vec<String>,
}

#[derive(Deserialize)]
struct RawProfile {
    dimension: TraitDimension,
    polarity: Polarity,
    descriptors: Vec<String>,
}

impl TryFrom<RawProfile> for PersonalityProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        PersonalityProfile::new(raw.dimension, raw.polarity, raw.descriptors)
    }
}

impl PersonalityProfile {
    /// Builds a profile, trimming and lowercasing descriptors.
    pub fn new<I, S>(dimension: TraitDimension, polarity: Polarity, descriptors: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let descriptors: Vec<String> = descriptors
            .into_iter()
            .map(|d| d.as_ref().trim().to_lowercase())
            .collect();
        if descriptors.is_empty() || descriptors.iter().any(String::is_empty) {
            return Err(Error::InvalidArgument(
                "a personality profile needs at least one non-empty descriptor".into(),
            ));
        }
        Ok(PersonalityProfile {
            dimension,
            polarity,
            descriptors,
        })
    }

    pub fn descriptors(&self) -> &[String] {
        &self.descriptors
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u32,
    pub name: String,
    pub profile: PersonalityProfile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRoster")]
pub struct Roster {
    agents: Vec<AgentSpec>,
}

#[derive(Deserialize)]
struct RawRoster {
    agents: Vec<AgentSpec>,
}

impl TryFrom<RawRoster> for Roster {
    type Error = Error;

    fn try_from(raw: RawRoster) -> Result<Self> {
        Roster::new(raw.agents)
    }
}

impl Roster {
    /// Requires at least two agents with strictly increasing positive ids.
    pub fn new(agents: Vec<AgentSpec>) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a roster needs at least 2 agents, got {}",
                agents.len()
            )));
        }
        if agents.iter().any(|a| a.id == 0) {
            return Err(Error::InvalidArgument("agent ids must be positive".into()));
        }
        if let Some(w) = agents.windows(2).find(|w| w[0].id >= w[1].id) {
            return Err(Error::InvalidArgument(format!(
                "agent ids must be strictly increasing ({} then {})",
                w[0].id, w[1].id
            )));
        }
        Ok(Roster { agents })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&AgentSpec> {
        self.agents
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.agents[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.agents.iter().map(|a| a.id)
    }
}

fn agent(id: u32, dimension: TraitDimension, polarity: Polarity, descriptors: [&str; 2]) -> AgentSpec {
    AgentSpec {
        id,
        name: format!("Agent {id}"),
        profile: PersonalityProfile::new(dimension, polarity, descriptors)
            .expect("built-in descriptors are non-empty"),
    }
}

/// The six-agent roster used throughout the experiment.
pub fn default_roster() -> Roster {
    use Polarity::*;
    use TraitDimension::*;

    Roster {
        agents: vec![
            agent(1, Extraversion, High, ["bold", "energetic"]),
            agent(2, Extraversion, Low, ["shy", "bashful"]),
            agent(3, Agreeableness, High, ["sympathetic", "cooperative"]),
            agent(4, Agreeableness, Low, ["cold", "harsh"]),
            agent(5, Neuroticism, High, ["moody", "nervous"]),
            agent(6, Neuroticism, Low, ["relaxed", "calm"]),
        ],
    }
}

/// Persona conditioning text for a chat backend.
///
/// The wording is a fixed template (see [`PROMPT_TEMPLATE_VERSION`]); only
/// the descriptors, dimension, claim and stance vary.
pub fn render_system_prompt(agent: &AgentSpec, topic_claim: &str, stance: Stance) -> Result<String> {
    let claim = topic_claim.trim();
    if claim.is_empty() {
        return Err(Error::InvalidArgument("topic claim must not be empty".into()));
    }
    let profile = &agent.profile;
    let descriptors = profile.descriptors().join(", ");
    let pole = match profile.polarity {
        Polarity::High => "high",
        Polarity::Low => "low",
    };
    let position = match stance {
        Stance::Believe => "You currently BELIEVE this claim is true.",
        Stance::Reject => "You currently REJECT this claim as false.",
    };
    Ok(format!(
        "You are {name}, a participant in a two-person discussion.\n\
         Personality: {pole} {dimension}. You are {descriptors}. \
         Let these traits shape how you argue, how you react to pushback \
         and how easily you change your mind.\n\
         Claim under discussion: \"{claim}\"\n\
         {position}\n\
         Argue for your current position in a few sentences. You may change \
         your position if the other participant persuades you.\n\
         End every message with a final line of the form \
         \"{marker} BELIEVE\" or \"{marker} REJECT\" giving your position \
         at the end of that message.",
        name = agent.name,
        dimension = profile.dimension,
        marker = STANCE_MARKER,
    ))
}

/// Stable `<dimension>-<polarity>` slug used as a persistence key.
pub fn trait_signature(agent: &AgentSpec) -> String {
    format!(
        "{}-{}",
        agent.profile.dimension.as_str(),
        agent.profile.polarity.as_str()
    )
}
