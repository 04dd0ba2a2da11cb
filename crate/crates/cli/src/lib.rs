//! Run-directory orchestration for the grounding pipeline: configuration
//! resolution and one command per stage.

pub mod commands;
pub mod config;
