//! Summarization of nested discussion threads.
//!
//! The pipeline extracts discourse aspects, expands each into atomic content
//! units (ACUs), then searches over ACU orderings and paragraph realizations
//! with a small Tree-of-Thoughts loop scored for coherence and coverage. All
//! model traffic goes through [`gateway::Gateway`], which caches responses
//! and can run fully offline against scripted or recorded providers.

pub mod composition;
pub mod gateway;
pub mod metrics;
pub mod planning;
pub mod prompts;
pub mod report;
pub mod run;
pub mod sentence;
pub mod session;
pub mod thread;
