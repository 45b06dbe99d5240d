//! Question-driven alignment scoring between text prompts and generated
//! videos.
//!
//! The pipeline decomposes a prompt into a scene graph, turns the graph into
//! atomic yes/no questions, answers each question against sampled video
//! frames with a staged chat-model protocol, and aggregates the answers into
//! per-video alignment scores. Statistics helpers correlate those scores with
//! human ratings.

pub mod benchmark;
pub mod category;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod frames;
pub mod jsonl;
pub mod llm;
pub mod qa;
pub mod qg;
pub mod run;
pub mod scene_graph;
pub mod scoring;
pub mod stats;
pub mod templates;

pub use category::Category;
pub use error::{Error, Result};
