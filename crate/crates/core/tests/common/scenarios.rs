//! Hand-built engines for the failure and repair paths.

use std::collections::BTreeSet;
use std::sync::Arc;

use behave_core::learn::{generate_constraints, GenerateOptions, LabelledScene};
use behave_core::{
    Antecedent, Behaviour, EngineConfig, Kind, LayerId, LayerSchema, Maneuver, Op, Property, Rule,
    Theory, Value,
};

use super::*;

/// A base rule that already holds every constraint the dataset can offer,
/// for a maneuver that outranks the label.
pub fn exhausted_base() -> (EngineConfig, Vec<LabelledScene>, Rule) {
    let fixture = config();
    let man = fixture.maneuver_theory();
    let out = fixture.parameter_theory().output_schema();
    let flag = (
        behave_core::Feature::maneuver_flag(Maneuver::EmergencyStop),
        Kind::Boolean,
    );
    let par = Arc::new(
        LayerSchema::new(
            LayerId::Parameter,
            man.output_schema()
                .iter()
                .map(|(f, k)| (f.clone(), k))
                .chain([flag]),
        )
        .unwrap(),
    );
    let data = dataset();
    let props: BTreeSet<Property> = data[0].scene().properties().collect();
    let all = generate_constraints(&props, &Op::ALL, GenerateOptions::default());
    let rule = Rule::new(
        "aberrant",
        Antecedent::new(all).unwrap(),
        Behaviour::bare(Maneuver::EmergencyStop),
    );
    let base = Theory::new(
        LayerId::Maneuver,
        Arc::clone(man.schema()),
        Arc::clone(&par),
        [rule.clone()],
    )
    .unwrap();
    let cfg = EngineConfig::new(
        base,
        Theory::empty(LayerId::Parameter, par, Arc::clone(out)),
        fixture.order().clone(),
    )
    .unwrap();
    (cfg, data, rule)
}

/// An intersection without a stop line or pedestrian, where the expert wants
/// the vehicle to halt at the end of the lane.
pub fn school_zone(cfg: &EngineConfig) -> LabelledScene {
    let d = scene(cfg)
        .with(&f("Crosswalk.Obstructed"), Value::Bool(false))
        .unwrap()
        .with(&f("Road.HasStopLine"), Value::Bool(false))
        .unwrap()
        .with(&f("Road.SpeedLimit"), num(30.0))
        .unwrap();
    LabelledScene::new(d, b2(), b5()).unwrap()
}
