//! Harness for simulating users of task-oriented dialog systems with a
//! prompted language model, and for scoring the resulting conversations.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod goal_metrics;
pub mod goalgen;
pub mod lexdiv;
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod prompt;
pub mod report;
pub mod shots;
pub mod system;

pub use error::*;
pub use model::{Dialog, DialogActItem, Intent, Ontology, Outcome, Speaker, Turn, UserGoal};
