//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::builtin_paper_dataset;
use crate::backend::{CellKey, DebateBackend, RemoteBackend, RemoteBackendConfig, RemoteClient, SyntheticBackend, SyntheticParams};
use crate::error::{Error, Result};
use crate::persona::{default_roster, Roster};
use crate::protocol::{default_topics, validate_topics, Topic, DEFAULT_MAX_TURNS_PER_AGENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Synthetic,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticMode {
    /// Every cell from trait parameters.
    #[default]
    Traits,
    /// Cells covered by the published tables replay their observed outcome
    /// frequencies; other cells fall back to trait parameters.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub mode: SyntheticMode,
    /// Defaults to the illustrative parameters for the six-agent roster.
    pub params: Option<SyntheticParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub synthetic: SyntheticConfig,
    pub remote: RemoteBackendConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Synthetic,
            synthetic: SyntheticConfig::default(),
            remote: RemoteBackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Omitted means the default six-agent roster.
    pub roster: Option<Roster>,
    /// Omitted means the six default topics.
    pub topics: Option<Vec<Topic>>,
    pub repetitions: u32,
    pub backend: BackendConfig,
    pub master_seed: u64,
    pub max_turns_per_agent: usize,
    pub parallelism: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            roster: None,
            topics: None,
            repetitions: 64,
            backend: BackendConfig::default(),
            master_seed: 42,
            max_turns_per_agent: DEFAULT_MAX_TURNS_PER_AGENT,
            parallelism: 4,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn roster(&self) -> Roster {
        self.roster.clone().unwrap_or_else(default_roster)
    }

    pub fn topics(&self) -> Vec<Topic> {
        self.topics.clone().unwrap_or_else(default_topics)
    }

    pub fn topic_order(&self) -> Vec<String> {
        self.topics().into_iter().map(|t| t.abbreviation).collect()
    }

    pub fn synthetic_params(&self) -> SyntheticParams {
        self.backend
            .synthetic
            .params
            .clone()
            .unwrap_or_else(SyntheticParams::illustrative_default)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: &str| Err(Error::Config(format!("{name}: {msg}")));
        if self.repetitions == 0 {
            return field("repetitions", "must be at least 1");
        }
        if self.parallelism == 0 {
            return field("parallelism", "must be at least 1");
        }
        if self.max_turns_per_agent == 0 {
            return field("max_turns_per_agent", "must be at least 1");
        }
        let topics = self.topics();
        validate_topics(&topics).map_err(|e| Error::Config(format!("topics: {e}")))?;
        match self.backend.kind {
            BackendKind::Synthetic => {
                let params = self.synthetic_params();
                params
                    .validate(&self.topic_order())
                    .map_err(|e| Error::Config(format!("backend.synthetic.params: {e}")))?;
            }
            BackendKind::Remote => self
                .backend
                .remote
                .validate()
                .map_err(|e| Error::Config(format!("backend.remote: {e}")))?,
        }
        Ok(())
    }

    /// Instantiates the configured backend. The remote backend reads its API
    /// key from the environment here.
    pub fn build_backend(&self) -> Result<Box<dyn DebateBackend>> {
        match self.backend.kind {
            BackendKind::Synthetic => {
                let backend = SyntheticBackend::new(self.synthetic_params());
                let backend = match self.backend.synthetic.mode {
                    SyntheticMode::Traits => backend,
                    SyntheticMode::Replay => backend.with_overrides(replay_overrides())?,
                };
                Ok(Box::new(backend))
            }
            BackendKind::Remote => {
                let client = RemoteClient::from_env(self.backend.remote.clone())?;
                Ok(Box::new(RemoteBackend::new(client)))
            }
        }
    }
}

/// Per-cell outcome distributions recomputed from the published counts.
pub fn replay_overrides() -> BTreeMap<CellKey, [f64; 4]> {
    builtin_paper_dataset()
        .rows
        .iter()
        .map(|row| {
            let n = row.counts.total() as f64;
            (
                (row.pair.0, row.pair.1, row.topic.clone()),
                row.counts.as_array().map(|c| c as f64 / n),
            )
        })
        .collect()
}
