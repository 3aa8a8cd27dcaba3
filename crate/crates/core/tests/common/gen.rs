//! Seeded random schemas, theories and scenes for property tests.

use std::sync::Arc;

use behave_core::{
    Antecedent, Behaviour, ConservativenessOrder, Constraint, EngineConfig, Feature, Kind, LayerId,
    LayerSchema, Maneuver, Op, Rule, Scene, Theory, Value,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

fn feat(s: &str) -> Feature {
    s.parse().unwrap()
}

pub const USED: [Maneuver; 3] = [Maneuver::Stop, Maneuver::Yield, Maneuver::TrackSpeed];

pub fn maneuver_schema() -> Arc<LayerSchema> {
    Arc::new(
        LayerSchema::new(
            LayerId::Maneuver,
            [
                (feat("A.n0"), Kind::Number),
                (feat("A.n1"), Kind::Number),
                (feat("B.b"), Kind::Boolean),
                (feat("C.s"), Kind::Symbol),
                (feat("D.a"), Kind::Any),
            ],
        )
        .unwrap(),
    )
}

pub fn parameter_schema() -> Arc<LayerSchema> {
    let mut features: Vec<(Feature, Kind)> = Maneuver::ALL
        .iter()
        .map(|&m| (Feature::maneuver_flag(m), Kind::Boolean))
        .collect();
    features.push((feat("P.x"), Kind::Number));
    features.push((feat("P.y"), Kind::Symbol));
    Arc::new(LayerSchema::new(LayerId::Parameter, features).unwrap())
}

pub fn output_schema() -> Arc<LayerSchema> {
    Arc::new(
        LayerSchema::new(
            LayerId::Output,
            [(feat("O.z"), Kind::Symbol), (feat("O.w"), Kind::Number)],
        )
        .unwrap(),
    )
}

pub fn defined(kind: Kind, rng: &mut Rng8) -> Value {
    match kind {
        Kind::Number => Value::number(rng.gen_range(0..4) as f64 * 0.5).unwrap(),
        Kind::Boolean => Value::Bool(rng.gen()),
        Kind::Symbol => Value::symbol(["a", "b", "c"].choose(rng).unwrap()).unwrap(),
        Kind::Any => {
            let k = *[Kind::Number, Kind::Boolean, Kind::Symbol]
                .choose(rng)
                .unwrap();
            defined(k, rng)
        }
    }
}

pub fn value(kind: Kind, rng: &mut Rng8) -> Value {
    if rng.gen_bool(0.15) {
        Value::Undefined
    } else {
        defined(kind, rng)
    }
}

pub fn constraint(schema: &LayerSchema, rng: &mut Rng8) -> Constraint {
    let features = schema.features();
    let pick = |rng: &mut Rng8| features.choose(rng).unwrap().clone();
    let op = *Op::ALL.choose(rng).unwrap();
    match rng.gen_range(0..10) {
        0 => Constraint::True,
        1..=3 => Constraint::feature_feature(pick(rng), op, pick(rng)),
        _ => {
            let f = pick(rng);
            let v = value(schema.kind(&f).unwrap(), rng);
            if v.is_undefined() {
                Constraint::eq(f, v)
            } else {
                Constraint::feature_value(f, op, v).unwrap()
            }
        }
    }
}

pub fn antecedent(schema: &LayerSchema, rng: &mut Rng8) -> Antecedent {
    let n = rng.gen_range(1..=3);
    Antecedent::new((0..n).map(|_| constraint(schema, rng))).unwrap()
}

pub fn behaviour(maneuvers: &[Maneuver], out: &LayerSchema, rng: &mut Rng8) -> Behaviour {
    let m = *maneuvers.choose(rng).unwrap();
    let mut params = Vec::new();
    for (f, k) in out.iter() {
        if f.object() != "Maneuver" && rng.gen_bool(0.4) {
            params.push((f.clone(), defined(k, rng)));
        }
    }
    Behaviour::new(m, params)
}

pub fn theory(
    layer: LayerId,
    schema: &Arc<LayerSchema>,
    out: &Arc<LayerSchema>,
    rules: usize,
    rng: &mut Rng8,
) -> Theory {
    let prefix = if layer == LayerId::Maneuver { "m" } else { "p" };
    let rules: Vec<Rule> = (0..rules)
        .map(|i| {
            Rule::new(
                format!("{prefix}{}", i + 1),
                antecedent(schema, rng),
                behaviour(&USED, out, rng),
            )
        })
        .collect();
    Theory::new(layer, Arc::clone(schema), Arc::clone(out), rules).unwrap()
}

pub fn config(rng: &mut Rng8) -> EngineConfig {
    let (man, par, out) = (maneuver_schema(), parameter_schema(), output_schema());
    let nm = rng.gen_range(0..8);
    let np = rng.gen_range(0..8);
    let mut order = Maneuver::ALL.to_vec();
    order.shuffle(rng);
    EngineConfig::new(
        theory(LayerId::Maneuver, &man, &par, nm, rng),
        theory(LayerId::Parameter, &par, &out, np, rng),
        ConservativenessOrder::new(&order).unwrap(),
    )
    .unwrap()
}

pub fn scene(schema: &Arc<LayerSchema>, rng: &mut Rng8) -> Scene {
    let assignment = schema
        .iter()
        .map(|(f, k)| (f.clone(), value(k, rng)))
        .collect();
    Scene::new(schema, &assignment).unwrap()
}
