//! A two-layer rule engine for behaviour planning.
//!
//! The maneuver layer maps a perceived scene to candidate behaviours and keeps
//! the most conservative ones; the parameter layer reconciles their
//! parameters into a single behaviour. The [`learn`] module builds and repairs
//! both rule theories from expert-labelled scenes, and [`diagnose`] supports
//! the manual repair cycle around it.

pub mod diagnose;
pub mod dsl;
pub mod eval;
pub mod learn;
pub mod model;
pub mod synth;

pub use eval::{infer, EngineConfig, EngineError, InferenceTrace};
pub use model::{
    Antecedent, Behaviour, ConservativenessOrder, Constraint, Feature, Kind, LayerId, LayerSchema,
    Maneuver, Op, Property, Rule, Scene, Theory, Value,
};
