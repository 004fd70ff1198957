//! The differentiable cellular-automaton engine.
//!
//! [`model::CellModel`] composes one or more [`model::SubNet`]s — each a
//! perception stage ([`perception`]), optional neighborhood attention
//! ([`attention`]), and a per-cell update MLP ([`mlp`]) — into a single
//! lattice update rule with stochastic per-cell firing and alpha-based alive
//! masking. Backpropagation through rollouts is hand-rolled: forward passes
//! record only states and fire masks, and the backward pass recomputes
//! activations step by step.

pub mod attention;
pub mod mlp;
pub mod model;
pub mod perception;

pub use attention::NeighborhoodAttention;
pub use mlp::{Dense, UpdateMlp};
pub use model::{CellModel, ParamVisitor, StepRecord, SubNet, Trajectory};
pub use perception::{fixed_kernels, Boundary, Perception, SensingMode, KERNEL_COUNT};
