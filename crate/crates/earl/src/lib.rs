//! earl: a deterministic sandbox for studying bandwidth/CPU allocation among
//! concurrent streaming users at an edge node.
//!
//! The crate bundles a seedable network/compute simulator ([`env`]), a
//! quality-of-experience model ([`qoe`]), a small dense-network toolkit with
//! hand-written gradients ([`nn`]), graph-attention feature builders for
//! centralized critics ([`graph`]), a set of allocation strategies behind a
//! common trait ([`agents`]), and an experiment harness ([`harness`]) driven
//! by the `earl` binary.
//!
//! Everything numeric is `f64` and every source of randomness is an explicit
//! seeded stream, so a (config, seed) pair pins down a run bit-for-bit.

pub mod agents;
pub mod env;
pub mod graph;
pub mod harness;
pub mod nn;
pub mod qoe;
pub mod seeding;
