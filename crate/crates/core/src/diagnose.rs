//! Knowledge-engineering support: spotting a discrepancy, tracing it back to
//! the training scenes behind the responsible rules, sanitizing the scene and
//! folding it into the training set.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::eval::{EngineConfig, EngineError, InferenceTrace};
use crate::learn::{
    coverage, rule_engine_update, LabelMismatch, LabelledScene, LearnError, LearnOptions,
    TrainingView,
};
use crate::model::{Behaviour, Feature, LayerId, Scene, Value};

#[derive(Debug, Clone)]
pub struct Discrepancy {
    pub found: bool,
    pub actual: Result<Behaviour, EngineError>,
    pub trace: InferenceTrace,
}

/// Runs the engine on `scene` and compares the outcome with `desired`.
/// Engine errors always count as a discrepancy.
pub fn detect_discrepancy(cfg: &EngineConfig, scene: &Scene, desired: &Behaviour) -> Discrepancy {
    let run = cfg.run(scene);
    Discrepancy {
        found: run.outcome.as_ref() != Ok(desired),
        actual: run.outcome,
        trace: run.trace,
    }
}

/// A training scene that triggers a responsible rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictingScene {
    pub index: usize,
    pub label: Behaviour,
}

#[derive(Debug, Clone)]
pub struct DiscrepancyReport {
    pub scene: Scene,
    pub actual: Result<Behaviour, EngineError>,
    pub desired: LabelledScene,
    pub trace: InferenceTrace,
    /// The first layer whose output misses its label.
    pub layer: Option<LayerId>,
    pub fired: BTreeMap<LayerId, Vec<String>>,
    /// No rule of `layer` yields the desired label on the layer's input.
    pub no_producing_rule: bool,
    pub conflicting: BTreeMap<String, Vec<ConflictingScene>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnoseError {
    #[error(transparent)]
    Label(#[from] LabelMismatch),
    #[error("scene conflicts with training record {0}, which has the same scene and other labels")]
    LabelConflict(usize),
    #[error("feature {0} is not in the scene's schema")]
    UnknownFeature(Feature),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Forward evaluation of the discrepancy scene followed by a backward search
/// from each responsible rule into the training set.
///
/// `desired` holds the expected label of each layer. The first layer whose
/// resolved output misses its label is examined; a rule is responsible when
/// it fired there, survived resolution and yields something other than the
/// label.
pub fn find_conflicting_scenes(
    cfg: &EngineConfig,
    dataset: &[LabelledScene],
    desired: &LabelledScene,
) -> DiscrepancyReport {
    let scene = desired.scene();
    let run = cfg.run(scene);
    let mut fired = BTreeMap::new();
    fired.insert(
        LayerId::Maneuver,
        run.trace.maneuver.fired_ids().map(str::to_string).collect(),
    );
    if let Some(p) = &run.trace.parameter {
        fired.insert(
            LayerId::Parameter,
            p.fired_ids().map(str::to_string).collect(),
        );
    }

    let man = &run.trace.maneuver;
    let layer = if !man.resolved.contains(desired.maneuver_label()) {
        Some(LayerId::Maneuver)
    } else if run.outcome.as_ref() != Ok(desired.final_label()) {
        Some(LayerId::Parameter)
    } else {
        None
    };

    let mut no_producing_rule = false;
    let mut conflicting = BTreeMap::new();
    if let Some(layer) = layer {
        let label = desired.label(layer);
        let trace = match layer {
            LayerId::Maneuver => Some(man),
            _ => run.trace.parameter.as_ref(),
        };
        let theory = cfg.theory(layer);
        let view = TrainingView::new(dataset, layer, cfg);
        if let Some(trace) = trace {
            let produced: BTreeSet<&str> = trace.fired_ids().collect();
            no_producing_rule = !theory
                .rules()
                .iter()
                .any(|r| produced.contains(r.id.as_str()) && r.consequent == *label);
            for rule in theory.rules() {
                let responsible = produced.contains(rule.id.as_str())
                    && rule.consequent != *label
                    && match layer {
                        LayerId::Maneuver => trace.resolved.contains(&rule.consequent),
                        _ => true,
                    };
                if !responsible {
                    continue;
                }
                let scenes = coverage(rule, theory, &view)
                    .into_iter()
                    .filter(|&i| view.label(i) != label)
                    .map(|i| ConflictingScene {
                        index: i,
                        label: view.label(i).clone(),
                    })
                    .collect();
                conflicting.insert(rule.id.clone(), scenes);
            }
        } else {
            no_producing_rule = true;
        }
    }

    DiscrepancyReport {
        scene: scene.clone(),
        actual: run.outcome,
        desired: desired.clone(),
        trace: run.trace,
        layer,
        fired,
        no_producing_rule,
        conflicting,
    }
}

/// Keeps the values of `relevant` and sets every other feature undefined.
pub fn sanitize_scene(scene: &Scene, relevant: &BTreeSet<Feature>) -> Result<Scene, DiagnoseError> {
    if let Some(f) = relevant.iter().find(|f| !scene.schema().contains(f)) {
        return Err(DiagnoseError::UnknownFeature(f.clone()));
    }
    let mut out = scene.clone();
    for f in scene.schema().features() {
        if !relevant.contains(f) {
            out = out
                .with(f, Value::Undefined)
                .expect("undefined fits every feature");
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EngineeringOutcome {
    pub config: EngineConfig,
    /// The previous records followed by the new one.
    pub dataset: Vec<LabelledScene>,
    pub cured: bool,
    pub after: Discrepancy,
}

/// Appends `sanitized` to the training set, relearns both layers starting
/// from the current theories and checks whether `original` now gets its
/// final label.
pub fn engineering_step(
    cfg: &EngineConfig,
    dataset: &[LabelledScene],
    sanitized: LabelledScene,
    original: &LabelledScene,
    options: &LearnOptions,
) -> Result<EngineeringOutcome, DiagnoseError> {
    if let Some(i) = dataset.iter().position(|r| {
        r.scene() == sanitized.scene()
            && (r.maneuver_label() != sanitized.maneuver_label()
                || r.final_label() != sanitized.final_label())
    }) {
        return Err(DiagnoseError::LabelConflict(i));
    }
    let mut extended = dataset.to_vec();
    extended.push(sanitized);
    let update = rule_engine_update(&extended, cfg, options)?;
    let after = detect_discrepancy(&update.config, original.scene(), original.final_label());
    Ok(EngineeringOutcome {
        config: update.config,
        dataset: extended,
        cured: !after.found,
        after,
    })
}
