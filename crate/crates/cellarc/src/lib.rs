//! Test-time training of neural cellular automata on ARC-style grid puzzles.
//!
//! Everything revolves around one idea: instead of learning a general solver,
//! train a small cellular automaton from scratch *per task*, on nothing but the
//! handful of demonstration pairs that task provides, then let the trained rule
//! run on the test inputs and read the answer off the lattice.
//!
//! The pipeline is split into focused modules:
//!
//! - [`dataset`] — loading and validating ARC task JSON, size filtering,
//!   maximal padding.
//! - [`codec`] — the grid ⇄ lattice encoding: colors become RGBA via an HSL
//!   wheel plus a binary color code, and decoding snaps noisy lattice states
//!   back to the nearest palette color.
//! - [`engine`] — the differentiable cellular-automaton core: perception
//!   stencils, optional neighborhood attention, the per-cell update MLP, and
//!   hand-rolled backpropagation through rollouts.
//! - [`engram`] — the model zoo: the standard single-rule automaton plus the
//!   public/private channel composites (`v1`..`v4` and the large variants),
//!   built from a small variant registry.
//! - [`trainer`] — the per-task optimization loop (AdamW, gradient
//!   normalization, the rollout-length schedule, patch training).
//! - [`eval`] — rollout-to-stability scoring, solve thresholds, unions across
//!   variants, and run-level summaries.
//! - [`report`] — Markdown/CSV rendering of run summaries.
//! - [`checkpoint`] — a small binary format for trained model weights.
//! - [`frames`] — PNG/GIF export of rollout trajectories.
//!
//! The CLI that orchestrates whole runs lives in the companion `cellarc-cli`
//! crate.

pub mod checkpoint;
pub mod codec;
pub mod dataset;
pub mod engine;
pub mod engram;
pub mod eval;
pub mod frames;
pub mod real;
pub mod report;
pub mod trainer;

pub use real::Real;
