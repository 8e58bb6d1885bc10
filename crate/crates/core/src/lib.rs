//! Engine and evaluation harness for knowledge-mediated agents in
//! closed-world text environments.
//!
//! The crate wires together the full decision pipeline: deterministic belief
//! tracking over observation text ([`belief`]), a three-tier rule manual
//! ([`rules`]), an episodic memory store with state-consistent filtering
//! ([`memory`]), rules-first arbitration between the two knowledge sources
//! ([`arbitration`]), and prompt assembly ([`prompt`]). A miniature household
//! simulator ([`env`]) and a deterministic prompt-driven oracle backend
//! ([`backend`]) make the whole ablation matrix reproducible offline; the
//! [`harness`] module orchestrates episodes, the learning phase, ablation
//! reports, and significance testing ([`stats`]).

pub mod action;
pub mod arbitration;
pub mod backend;
pub mod belief;
pub mod env;
pub mod episode;
pub mod fixtures;
pub mod harness;
pub mod memory;
pub mod profile;
pub mod prompt;
pub mod rules;
pub mod stats;
pub mod taskgen;

pub use action::ParsedAction;
pub use belief::{BeliefState, GoalSignature, ScienceBeliefState, StateSignature};
pub use env::{StepOutcome, TaskSpec, TaskType, WorldState};
pub use memory::{MemoryEntry, MemoryStore};
pub use profile::EnvironmentProfile;
pub use rules::{ActiveRuleSet, Rule, RuleManual};
