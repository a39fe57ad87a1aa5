//! Simulator and analysis harness for debates between personality-conditioned
//! language-model agents over misinformation claims.
//!
//! The pipeline is: a [`persona::Roster`] and a list of [`protocol::Topic`]s
//! are scheduled into a round-robin tournament ([`tournament`]); each
//! interaction is a turn-based dialogue driven by a [`backend`]; transcripts
//! are adjudicated into one of four outcomes and tallied, summarised and
//! calibrated by [`analysis`]; [`report`] renders tables and charts.

pub mod analysis;
pub mod backend;
pub mod cli;
pub mod config;
pub mod error;
pub mod persona;
pub mod protocol;
pub mod report;
pub mod tournament;

pub use error::{Error, Result};
