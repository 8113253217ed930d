//! Lifelong embodied memory for a household robot agent.
//!
//! Four memories feed a planner-critic control loop:
//!
//! - [`spatial`]: a knowledge graph of scene facts with buffered, local
//!   incremental updates and bounded K-hop retrieval;
//! - [`temporal`]: a short FIFO of step summaries with compaction;
//! - [`lifelong`]: episodic and semantic long-term stores over a vector
//!   index, maintained by an extractor/updater pair.
//!
//! The [`orchestrator`] fans updates and retrievals out to all of them in
//! parallel, the [`agent`] runs episodes against the [`sim`] kitchen
//! environment, and [`eval`] computes success metrics over task suites.
//! Every language-model role goes through the [`reasoner`] gateway, whose
//! oracle backend makes the whole system deterministic.

pub mod agent;
pub mod eval;
pub mod grammar;
pub mod lifelong;
pub mod model;
pub mod orchestrator;
pub mod preprocess;
pub mod reasoner;
pub mod sim;
pub mod spatial;
pub mod temporal;
pub mod vector;
