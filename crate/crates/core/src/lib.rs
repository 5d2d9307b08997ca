//! Synthesis and evaluation of ambiguous natural-language-to-visualization
//! benchmarks.
//!
//! A seed chart becomes an all-explicit [`vis::VisTree`]; the [`injector`]
//! widens it into an ambiguity-aware tree; the [`solver`] enumerates every
//! valid reading of that tree; [`nl`] writes and verifies an ambiguous query
//! for it; [`reasoning`] derives the step-wise disambiguation path; [`eval`]
//! scores systems against the resulting multi-answer gold sets.

pub mod cli;
pub mod eval;
pub mod injector;
pub mod llm;
pub mod metadata;
pub mod nl;
pub mod pipeline;
pub mod reasoning;
pub mod rules;
pub mod solver;
pub mod table;
pub mod vis;
