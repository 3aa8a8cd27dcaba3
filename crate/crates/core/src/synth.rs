//! Seeded generator of consistent labelled datasets.
//!
//! A hidden decision list over the maneuver features picks each scene's
//! maneuver. The maneuver label carries one of two parameter variants chosen
//! by a second hidden test, and the final label depends on the maneuver
//! alone, so any maneuver theory that classifies the data leaves the
//! parameter layer a consistent task.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::EngineConfig;
use crate::learn::LabelledScene;
use crate::model::{
    Behaviour, ConservativenessOrder, Feature, Kind, LayerId, LayerSchema, Maneuver, Scene, Theory,
    Value,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub scenes: usize,
    pub features: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    /// Empty theories over the generated schemas.
    pub config: EngineConfig,
    pub dataset: Vec<LabelledScene>,
}

const SYMBOLS: [&str; 3] = ["a", "b", "c"];

fn random_value(kind: Kind, rng: &mut ChaCha8Rng) -> Value {
    if rng.gen_bool(0.1) {
        return Value::Undefined;
    }
    match kind {
        Kind::Boolean => Value::Bool(rng.gen()),
        Kind::Number => Value::Number(rng.gen_range(0..5) as f64),
        _ => Value::symbol(SYMBOLS[rng.gen_range(0..SYMBOLS.len())]).expect("non-empty"),
    }
}

struct Test {
    slot: usize,
    value: Value,
    at_most: bool,
}

impl Test {
    fn random(schema: &LayerSchema, rng: &mut ChaCha8Rng) -> Self {
        let slot = rng.gen_range(0..schema.len());
        let kind = schema.kind_at(slot);
        let mut value = random_value(kind, rng);
        while value.is_undefined() {
            value = random_value(kind, rng);
        }
        Test {
            slot,
            at_most: kind == Kind::Number && rng.gen(),
            value,
        }
    }

    fn holds(&self, scene: &Scene) -> bool {
        let v = scene.value_at(self.slot);
        if self.at_most {
            matches!((v.as_number(), self.value.as_number()), (Some(a), Some(b)) if a <= b)
        } else {
            *v == self.value
        }
    }
}

fn feature(object: &str, attribute: &str) -> Feature {
    Feature::new(object, attribute).expect("generated names are identifiers")
}

fn param(m: Maneuver, variant: usize) -> Feature {
    feature("Param", &format!("{}-{variant}", m.name()))
}

pub fn generate(spec: SynthSpec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kinds = [Kind::Boolean, Kind::Number, Kind::Symbol];
    let maneuver_schema = Arc::new(
        LayerSchema::new(
            LayerId::Maneuver,
            (0..spec.features.max(1)).map(|i| {
                (
                    feature(&format!("Obj{}", i / 4), &format!("attr{}", i % 4)),
                    kinds[i % kinds.len()],
                )
            }),
        )
        .expect("distinct generated features"),
    );
    let parameter_schema = Arc::new(
        LayerSchema::new(
            LayerId::Parameter,
            Maneuver::ALL.iter().flat_map(|&m| {
                [
                    (Feature::maneuver_flag(m), Kind::Boolean),
                    (param(m, 0), Kind::Boolean),
                    (param(m, 1), Kind::Boolean),
                ]
            }),
        )
        .expect("distinct generated features"),
    );
    let plan = feature("Ego", "Plan");
    let output_schema = Arc::new(
        LayerSchema::new(LayerId::Output, [(plan.clone(), Kind::Symbol)]).expect("one feature"),
    );

    let mut maneuvers = Maneuver::ALL.to_vec();
    maneuvers.shuffle(&mut rng);
    let used = &maneuvers[..rng.gen_range(2..=4)];
    let rules: Vec<(Test, Maneuver)> = (0..rng.gen_range(2..=5))
        .map(|_| {
            (
                Test::random(&maneuver_schema, &mut rng),
                *used.choose(&mut rng).unwrap(),
            )
        })
        .collect();
    let fallback = used[0];
    let variant = Test::random(&maneuver_schema, &mut rng);

    let mut seen = HashSet::new();
    let mut dataset = Vec::with_capacity(spec.scenes);
    let mut attempts = 0;
    while dataset.len() < spec.scenes && attempts < spec.scenes * 100 {
        attempts += 1;
        let values = (0..maneuver_schema.len())
            .map(|s| random_value(maneuver_schema.kind_at(s), &mut rng))
            .collect();
        let scene = Scene::from_checked_values(&maneuver_schema, values);
        if !seen.insert(scene.clone()) {
            continue;
        }
        let m = rules
            .iter()
            .find(|(t, _)| t.holds(&scene))
            .map_or(fallback, |(_, m)| *m);
        let v = usize::from(variant.holds(&scene));
        let maneuver_label = Behaviour::new(m, [(param(m, v), Value::Bool(true))]);
        let final_label = Behaviour::new(
            m,
            [(
                plan.clone(),
                Value::symbol(format!("plan-{}", m.name())).expect("non-empty"),
            )],
        );
        dataset
            .push(LabelledScene::new(scene, maneuver_label, final_label).expect("same maneuver"));
    }

    let config = EngineConfig::new(
        Theory::empty(
            LayerId::Maneuver,
            Arc::clone(&maneuver_schema),
            Arc::clone(&parameter_schema),
        ),
        Theory::empty(LayerId::Parameter, parameter_schema, output_schema),
        ConservativenessOrder::default(),
    )
    .expect("empty theories always wire");
    Synthetic { config, dataset }
}
