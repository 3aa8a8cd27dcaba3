#![allow(dead_code)]

pub mod gen;
pub mod scenarios;

use std::collections::BTreeMap;

use behave_core::dsl::{
    parse_behaviour_document, parse_scene_document, Dataset, RuleDocument, SceneMode,
};
use behave_core::learn::LabelledScene;
use behave_core::{Behaviour, EngineConfig, Feature, Maneuver, Scene, Value};

pub const RULES: &[u8] = include_bytes!("../fixtures/worked.rules.json");
pub const SCENE: &[u8] = include_bytes!("../fixtures/worked.scene.json");
pub const DATASET: &[u8] = include_bytes!("../fixtures/worked.dataset.json");
pub const B5: &[u8] = include_bytes!("../fixtures/b5.behaviour.json");
pub const B6: &[u8] = include_bytes!("../fixtures/b6.behaviour.json");

pub fn f(s: &str) -> Feature {
    s.parse().unwrap()
}

pub fn sym(s: &str) -> Value {
    Value::symbol(s).unwrap()
}

pub fn num(n: f64) -> Value {
    Value::number(n).unwrap()
}

pub fn doc() -> RuleDocument {
    RuleDocument::parse(RULES).unwrap()
}

pub fn config() -> EngineConfig {
    doc().to_config().unwrap()
}

pub fn scene(cfg: &EngineConfig) -> Scene {
    parse_scene_document(SCENE, cfg.maneuver_theory().schema(), SceneMode::Strict).unwrap()
}

pub fn dataset() -> Vec<LabelledScene> {
    Dataset::parse(DATASET, Some(&doc().schemas))
        .unwrap()
        .records
}

pub fn behaviour(bytes: &[u8], cfg: &EngineConfig) -> Behaviour {
    parse_behaviour_document(bytes, Some(cfg.parameter_theory().output_schema())).unwrap()
}

pub fn b(m: Maneuver, params: &[(&str, Value)]) -> Behaviour {
    Behaviour::new(m, params.iter().map(|(k, v)| (f(k), v.clone())))
}

pub fn assignment(pairs: &[(&str, Value)]) -> BTreeMap<Feature, Value> {
    pairs.iter().map(|(k, v)| (f(k), v.clone())).collect()
}

// The behaviours of the worked example, written out by hand.
pub fn b1() -> Behaviour {
    b(
        Maneuver::TrackSpeed,
        &[("Target.Speed", sym("Road.SpeedLimit"))],
    )
}
pub fn b2() -> Behaviour {
    b(
        Maneuver::DecelerateToHalt,
        &[("Stop.AtEndOfLane", Value::Bool(true))],
    )
}
pub fn b3() -> Behaviour {
    b(
        Maneuver::DecelerateToHalt,
        &[("Stop.AtStopLine", Value::Bool(true))],
    )
}
pub fn b5() -> Behaviour {
    b(
        Maneuver::DecelerateToHalt,
        &[("Ego.StopAt", sym("EndOfLane"))],
    )
}
pub fn b6() -> Behaviour {
    b(
        Maneuver::DecelerateToHalt,
        &[("Ego.StopAt", sym("StopLine"))],
    )
}
