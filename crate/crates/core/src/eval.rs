//! Rule evaluation and the two-layer inference pipeline.
//!
//! Two evaluation paths exist. The free functions ([`eval_constraint`],
//! [`apply_theory`], ...) look features up by name and evaluate every rule
//! independently; they are the reference semantics. [`CompiledTheory`]
//! resolves features to scene slots once and indexes rules on one equality
//! constraint each, so a scene only evaluates rules whose key matches. Both
//! must agree on every input.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::model::{
    Antecedent, Behaviour, ConservativenessOrder, Constraint, Feature, LayerId, LayerSchema,
    Maneuver, Op, Rule, Scene, Theory, Value,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown feature {0}")]
    UnknownFeature(Feature),
    #[error("scene schema does not match the {0} layer schema")]
    SchemaMismatch(LayerId),
    #[error("the maneuver layer produced no behaviour")]
    NoBehaviour,
    #[error("no behaviour resolved")]
    NoResolution,
    #[error("behaviours mix maneuvers {0} and {1}")]
    MixedManeuver(Maneuver, Maneuver),
    #[error("feature {feature} assigned both {first} and {second}")]
    ParameterConflict {
        feature: Feature,
        first: Value,
        second: Value,
    },
    #[error("parameter schema has no feature {0}")]
    MissingParameterFeature(Feature),
    #[error("parameter {feature} does not fit the parameter schema: {detail}")]
    ParameterKind { feature: Feature, detail: String },
}

impl EngineError {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::UnknownFeature(_) => "unknown-feature",
            EngineError::SchemaMismatch(_) => "schema-mismatch",
            EngineError::NoBehaviour => "no-behaviour",
            EngineError::NoResolution => "no-resolution",
            EngineError::MixedManeuver(..) => "mixed-maneuver",
            EngineError::ParameterConflict { .. } => "parameter-conflict",
            EngineError::MissingParameterFeature(_) | EngineError::ParameterKind { .. } => {
                "parameter-schema"
            }
        }
    }
}

fn compare(op: Op, lhs: &Value, rhs: &Value) -> bool {
    match op {
        Op::Eq => lhs == rhs,
        Op::Le => matches!((lhs, rhs), (Value::Number(a), Value::Number(b)) if a <= b),
        Op::Ge => matches!((lhs, rhs), (Value::Number(a), Value::Number(b)) if a >= b),
    }
}

fn lookup<'s>(scene: &'s Scene, feature: &Feature) -> Result<&'s Value, EngineError> {
    scene
        .get(feature)
        .ok_or_else(|| EngineError::UnknownFeature(feature.clone()))
}

/// `<=` and `>=` are false unless both sides are numbers; `=` is structural
/// equality, so `undefined = undefined` holds.
pub fn eval_constraint(c: &Constraint, scene: &Scene) -> Result<bool, EngineError> {
    Ok(match c {
        Constraint::True => true,
        Constraint::FeatureValue { feature, op, value } => {
            compare(*op, lookup(scene, feature)?, value)
        }
        Constraint::FeatureFeature { lhs, op, rhs } => {
            compare(*op, lookup(scene, lhs)?, lookup(scene, rhs)?)
        }
    })
}

/// Conjunction of every member. Unknown features are reported even when an
/// earlier conjunct is already false.
pub fn eval_antecedent(a: &Antecedent, scene: &Scene) -> Result<bool, EngineError> {
    let mut holds = true;
    for c in a.constraints() {
        holds &= eval_constraint(c, scene)?;
    }
    Ok(holds)
}

pub fn apply_rule<'r>(rule: &'r Rule, scene: &Scene) -> Result<Option<&'r Behaviour>, EngineError> {
    Ok(eval_antecedent(&rule.antecedent, scene)?.then_some(&rule.consequent))
}

/// Distinct consequents of the rules that fire on `scene`.
pub fn apply_theory(theory: &Theory, scene: &Scene) -> Result<BTreeSet<Behaviour>, EngineError> {
    let mut out = BTreeSet::new();
    for rule in theory.rules() {
        if let Some(b) = apply_rule(rule, scene)? {
            out.insert(b.clone());
        }
    }
    Ok(out)
}

/// Keeps the behaviours whose maneuver is maximal under `order`.
pub fn resolve_maneuver(
    behaviours: &BTreeSet<Behaviour>,
    order: &ConservativenessOrder,
) -> BTreeSet<Behaviour> {
    let Some(top) = behaviours.iter().map(|b| order.rank(b.maneuver)).min() else {
        return BTreeSet::new();
    };
    behaviours
        .iter()
        .filter(|b| order.rank(b.maneuver) == top)
        .cloned()
        .collect()
}

/// The maneuver layer reads the perceived scene as is.
pub fn transform_man(scene: &Scene) -> Scene {
    scene.clone()
}

fn common_maneuver<'a>(
    behaviours: impl IntoIterator<Item = &'a Behaviour>,
) -> Result<Maneuver, EngineError> {
    let mut it = behaviours.into_iter();
    let first = it.next().ok_or(EngineError::NoResolution)?.maneuver;
    for b in it {
        if b.maneuver != first {
            return Err(EngineError::MixedManeuver(first, b.maneuver));
        }
    }
    Ok(first)
}

/// Merges `value` into `slot`. Undefined never overrides or conflicts with a
/// defined value.
fn merge_into(slot: &mut Value, feature: &Feature, value: &Value) -> Result<(), EngineError> {
    if value.is_undefined() {
        return Ok(());
    }
    if slot.is_undefined() {
        *slot = value.clone();
        Ok(())
    } else if slot != value {
        Err(EngineError::ParameterConflict {
            feature: feature.clone(),
            first: slot.clone(),
            second: value.clone(),
        })
    } else {
        Ok(())
    }
}

/// Builds the parameter-layer scene from the resolved maneuver-layer output:
/// the union of all parameters, `Maneuver.<h> := true` for the shared
/// maneuver `h`, and undefined everywhere else.
pub fn transform_par<'a>(
    resolved: impl IntoIterator<Item = &'a Behaviour> + Clone,
    par_schema: &Arc<LayerSchema>,
) -> Result<Scene, EngineError> {
    let maneuver = common_maneuver(resolved.clone())?;
    let mut values = vec![Value::Undefined; par_schema.len()];
    let mut place = |feature: &Feature, value: &Value| -> Result<(), EngineError> {
        let slot = par_schema
            .slot(feature)
            .ok_or_else(|| EngineError::MissingParameterFeature(feature.clone()))?;
        par_schema
            .check_property(feature, value)
            .map_err(|v| EngineError::ParameterKind {
                feature: feature.clone(),
                detail: v.to_string(),
            })?;
        merge_into(&mut values[slot], feature, value)
    };
    for b in resolved {
        for (f, v) in &b.params {
            place(f, v)?;
        }
    }
    place(&Feature::maneuver_flag(maneuver), &Value::Bool(true))?;
    Ok(Scene::from_checked_values(par_schema, values))
}

/// A single behaviour whose parameter is the union of all parameters.
pub fn resolve_par<'a>(
    behaviours: impl IntoIterator<Item = &'a Behaviour> + Clone,
) -> Result<Behaviour, EngineError> {
    let maneuver = common_maneuver(behaviours.clone())?;
    let mut params: BTreeMap<Feature, Value> = BTreeMap::new();
    for b in behaviours {
        for (f, v) in &b.params {
            let slot = params.entry(f.clone()).or_insert(Value::Undefined);
            merge_into(slot, f, v)?;
        }
    }
    Ok(Behaviour { maneuver, params })
}

/// A constraint with its features resolved to scene slots.
#[derive(Debug, Clone)]
pub(crate) enum Check {
    True,
    Value { slot: usize, op: Op, value: Value },
    Feature { lhs: usize, op: Op, rhs: usize },
}

impl Check {
    pub(crate) fn new(c: &Constraint, schema: &LayerSchema) -> Result<Self, EngineError> {
        let slot_of = |f: &Feature| {
            schema
                .slot(f)
                .ok_or_else(|| EngineError::UnknownFeature(f.clone()))
        };
        Ok(match c {
            Constraint::True => Check::True,
            Constraint::FeatureValue { feature, op, value } => Check::Value {
                slot: slot_of(feature)?,
                op: *op,
                value: value.clone(),
            },
            Constraint::FeatureFeature { lhs, op, rhs } => Check::Feature {
                lhs: slot_of(lhs)?,
                op: *op,
                rhs: slot_of(rhs)?,
            },
        })
    }

    pub(crate) fn holds(&self, values: &[Value]) -> bool {
        match self {
            Check::True => true,
            Check::Value { slot, op, value } => compare(*op, &values[*slot], value),
            Check::Feature { lhs, op, rhs } => compare(*op, &values[*lhs], &values[*rhs]),
        }
    }
}

/// A theory with features resolved to scene slots and rules indexed by one
/// equality constraint each.
#[derive(Debug, Clone)]
pub struct CompiledTheory {
    schema: Arc<LayerSchema>,
    checks: Vec<Vec<Check>>,
    /// slot -> value -> rules whose key constraint is `slot = value`.
    keyed: Vec<(usize, HashMap<Value, Vec<usize>>)>,
    unkeyed: Vec<usize>,
}

impl CompiledTheory {
    pub fn new(theory: &Theory) -> Result<Self, EngineError> {
        let schema = Arc::clone(theory.schema());
        let mut checks = Vec::with_capacity(theory.len());
        let mut by_slot: BTreeMap<usize, HashMap<Value, Vec<usize>>> = BTreeMap::new();
        let mut unkeyed = Vec::new();
        for (i, rule) in theory.rules().iter().enumerate() {
            let mut rule_checks = Vec::with_capacity(rule.antecedent.len());
            let mut key = None;
            for c in rule.antecedent.constraints() {
                let check = Check::new(c, &schema)?;
                if let (
                    None,
                    Check::Value {
                        slot,
                        op: Op::Eq,
                        value,
                    },
                ) = (&key, &check)
                {
                    key = Some((*slot, value.clone()));
                }
                rule_checks.push(check);
            }
            match key {
                Some((slot, value)) => by_slot
                    .entry(slot)
                    .or_default()
                    .entry(value)
                    .or_default()
                    .push(i),
                None => unkeyed.push(i),
            }
            checks.push(rule_checks);
        }
        Ok(CompiledTheory {
            schema,
            checks,
            keyed: by_slot.into_iter().collect(),
            unkeyed,
        })
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    fn check_schema(&self, scene: &Scene) -> bool {
        Arc::ptr_eq(&self.schema, scene.schema()) || *self.schema == **scene.schema()
    }

    /// Per-rule fired flags, in theory order.
    pub fn fired(&self, scene: &Scene) -> Result<Vec<bool>, EngineError> {
        if !self.check_schema(scene) {
            return Err(EngineError::SchemaMismatch(self.schema.layer()));
        }
        Ok(self.fired_unchecked(scene.values()))
    }

    /// Like [`fired`](Self::fired) for a scene already known to match.
    pub(crate) fn fired_unchecked(&self, values: &[Value]) -> Vec<bool> {
        let mut fired = vec![false; self.checks.len()];
        let mut visit = |i: usize| {
            fired[i] = self.checks[i].iter().all(|c| c.holds(values));
        };
        for &i in &self.unkeyed {
            visit(i);
        }
        for (slot, table) in &self.keyed {
            if let Some(rules) = table.get(&values[*slot]) {
                for &i in rules {
                    visit(i);
                }
            }
        }
        fired
    }
}

/// Whether one rule fired while evaluating a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleFiring {
    pub rule: String,
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input: Scene,
    pub firings: Vec<RuleFiring>,
    /// Distinct consequents of the fired rules.
    pub output: Vec<Behaviour>,
    /// What the layer's resolution function kept; empty when it failed.
    pub resolved: Vec<Behaviour>,
}

impl LayerTrace {
    pub fn fired_ids(&self) -> impl Iterator<Item = &str> {
        self.firings
            .iter()
            .filter(|f| f.fired)
            .map(|f| f.rule.as_str())
    }
}

/// Every intermediate value of one inference. Stages after a failure are
/// absent.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTrace {
    pub maneuver: LayerTrace,
    pub transformed: Option<Scene>,
    pub parameter: Option<LayerTrace>,
}

/// The wiring of both layers.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    maneuver: Theory,
    parameter: Theory,
    order: ConservativenessOrder,
    compiled_maneuver: CompiledTheory,
    compiled_parameter: CompiledTheory,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("expected a {expected} theory, got a {found} theory")]
    WrongLayer { expected: LayerId, found: LayerId },
    #[error("maneuver rules must target the parameter layer schema")]
    OutputSchemaMismatch,
    #[error("parameter schema lacks {0}, produced by maneuver rule {1:?}")]
    MissingManeuverFeature(Feature, String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl EngineConfig {
    pub fn new(
        maneuver: Theory,
        parameter: Theory,
        order: ConservativenessOrder,
    ) -> Result<Self, ConfigError> {
        for (theory, expected) in [
            (&maneuver, LayerId::Maneuver),
            (&parameter, LayerId::Parameter),
        ] {
            if theory.layer() != expected {
                return Err(ConfigError::WrongLayer {
                    expected,
                    found: theory.layer(),
                });
            }
        }
        if **maneuver.output_schema() != **parameter.schema() {
            return Err(ConfigError::OutputSchemaMismatch);
        }
        for rule in maneuver.rules() {
            let flag = Feature::maneuver_flag(rule.consequent.maneuver);
            if parameter
                .schema()
                .check_property(&flag, &Value::Bool(true))
                .is_err()
            {
                return Err(ConfigError::MissingManeuverFeature(flag, rule.id.clone()));
            }
        }
        let compiled_maneuver = CompiledTheory::new(&maneuver)?;
        let compiled_parameter = CompiledTheory::new(&parameter)?;
        Ok(EngineConfig {
            maneuver,
            parameter,
            order,
            compiled_maneuver,
            compiled_parameter,
        })
    }

    pub fn maneuver_theory(&self) -> &Theory {
        &self.maneuver
    }

    pub fn parameter_theory(&self) -> &Theory {
        &self.parameter
    }

    pub fn order(&self) -> &ConservativenessOrder {
        &self.order
    }

    pub fn theory(&self, layer: LayerId) -> &Theory {
        match layer {
            LayerId::Maneuver => &self.maneuver,
            _ => &self.parameter,
        }
    }

    /// Same wiring with one layer's theory replaced.
    pub fn with_theory(&self, theory: Theory) -> Result<Self, ConfigError> {
        match theory.layer() {
            LayerId::Maneuver => {
                EngineConfig::new(theory, self.parameter.clone(), self.order.clone())
            }
            _ => EngineConfig::new(self.maneuver.clone(), theory, self.order.clone()),
        }
    }

    /// The maneuver layer followed by the parameter-layer transformation.
    pub fn to_parameter_scene(&self, scene: &Scene) -> Result<Scene, EngineError> {
        let fired = self.compiled_maneuver.fired(scene)?;
        let output: BTreeSet<Behaviour> = consequents(&self.maneuver, &fired).cloned().collect();
        if output.is_empty() {
            return Err(EngineError::NoBehaviour);
        }
        let resolved = resolve_maneuver(&output, &self.order);
        transform_par(&resolved, self.parameter.schema())
    }

    /// Runs the driving policy, keeping the trace even when a stage fails.
    pub fn run(&self, scene: &Scene) -> Inference {
        let input = transform_man(scene);
        let fired = match self.compiled_maneuver.fired(&input) {
            Ok(f) => f,
            Err(e) => {
                return Inference {
                    outcome: Err(e),
                    trace: InferenceTrace {
                        maneuver: LayerTrace {
                            input,
                            firings: Vec::new(),
                            output: Vec::new(),
                            resolved: Vec::new(),
                        },
                        transformed: None,
                        parameter: None,
                    },
                }
            }
        };
        let output: BTreeSet<Behaviour> = consequents(&self.maneuver, &fired).cloned().collect();
        let resolved = resolve_maneuver(&output, &self.order);
        let mut trace = InferenceTrace {
            maneuver: LayerTrace {
                firings: firings(&self.maneuver, &fired),
                input,
                output: output.into_iter().collect(),
                resolved: resolved.iter().cloned().collect(),
            },
            transformed: None,
            parameter: None,
        };
        if resolved.is_empty() {
            return Inference {
                outcome: Err(EngineError::NoBehaviour),
                trace,
            };
        }
        let par_scene = match transform_par(&resolved, self.parameter.schema()) {
            Ok(s) => s,
            Err(e) => {
                return Inference {
                    outcome: Err(e),
                    trace,
                }
            }
        };
        trace.transformed = Some(par_scene.clone());
        let fired = self.compiled_parameter.fired_unchecked(par_scene.values());
        let output: BTreeSet<Behaviour> = consequents(&self.parameter, &fired).cloned().collect();
        let outcome = resolve_par(&output);
        trace.parameter = Some(LayerTrace {
            input: par_scene,
            firings: firings(&self.parameter, &fired),
            output: output.into_iter().collect(),
            resolved: outcome.iter().cloned().collect(),
        });
        Inference { outcome, trace }
    }
}

fn consequents<'t>(theory: &'t Theory, fired: &'t [bool]) -> impl Iterator<Item = &'t Behaviour> {
    theory
        .rules()
        .iter()
        .zip(fired)
        .filter(|(_, f)| **f)
        .map(|(r, _)| &r.consequent)
}

fn firings(theory: &Theory, fired: &[bool]) -> Vec<RuleFiring> {
    theory
        .rules()
        .iter()
        .zip(fired)
        .map(|(r, f)| RuleFiring {
            rule: r.id.clone(),
            fired: *f,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub outcome: Result<Behaviour, EngineError>,
    pub trace: InferenceTrace,
}

/// The full driving policy: maneuver layer, transformation, parameter layer.
pub fn infer(
    cfg: &EngineConfig,
    scene: &Scene,
) -> Result<(Behaviour, InferenceTrace), EngineError> {
    let Inference { outcome, trace } = cfg.run(scene);
    outcome.map(|b| (b, trace))
}

/// Reference pipeline built only from the naive free functions.
pub fn infer_naive(cfg: &EngineConfig, scene: &Scene) -> Inference {
    let layer_trace =
        |theory: &Theory, input: Scene| -> Result<(LayerTrace, BTreeSet<Behaviour>), EngineError> {
            let mut firings = Vec::with_capacity(theory.len());
            for rule in theory.rules() {
                firings.push(RuleFiring {
                    rule: rule.id.clone(),
                    fired: apply_rule(rule, &input)?.is_some(),
                });
            }
            let output = apply_theory(theory, &input)?;
            Ok((
                LayerTrace {
                    input,
                    firings,
                    output: output.iter().cloned().collect(),
                    resolved: Vec::new(),
                },
                output,
            ))
        };
    let empty_trace = |input: Scene| InferenceTrace {
        maneuver: LayerTrace {
            input,
            firings: Vec::new(),
            output: Vec::new(),
            resolved: Vec::new(),
        },
        transformed: None,
        parameter: None,
    };
    if **scene.schema() != **cfg.maneuver.schema() {
        return Inference {
            outcome: Err(EngineError::SchemaMismatch(LayerId::Maneuver)),
            trace: empty_trace(transform_man(scene)),
        };
    }
    let (mut man, output) = match layer_trace(&cfg.maneuver, transform_man(scene)) {
        Ok(x) => x,
        Err(e) => {
            return Inference {
                outcome: Err(e),
                trace: empty_trace(transform_man(scene)),
            }
        }
    };
    let resolved = resolve_maneuver(&output, &cfg.order);
    man.resolved = resolved.iter().cloned().collect();
    let mut trace = InferenceTrace {
        maneuver: man,
        transformed: None,
        parameter: None,
    };
    if resolved.is_empty() {
        return Inference {
            outcome: Err(EngineError::NoBehaviour),
            trace,
        };
    }
    let par_scene = match transform_par(&resolved, cfg.parameter.schema()) {
        Ok(s) => s,
        Err(e) => {
            return Inference {
                outcome: Err(e),
                trace,
            }
        }
    };
    trace.transformed = Some(par_scene.clone());
    let (mut par, output) = match layer_trace(&cfg.parameter, par_scene) {
        Ok(x) => x,
        Err(e) => {
            return Inference {
                outcome: Err(e),
                trace,
            }
        }
    };
    let outcome = resolve_par(&output);
    par.resolved = outcome.iter().cloned().collect();
    trace.parameter = Some(par);
    Inference { outcome, trace }
}
