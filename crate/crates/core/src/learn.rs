//! Learning and repairing rule theories from labelled scenes.
//!
//! [`rule_update`] repairs one layer until every training scene's label
//! survives that layer's resolution; [`rule_engine_update`] runs it on the
//! maneuver layer and then on the parameter layer, whose training scenes are
//! produced by the freshly learned maneuver theory.
//!
//! Refinement appends one constraint at a time to a rule that takes part in a
//! misclassification. Candidates come from the properties of the scenes the
//! rule currently covers and are ranked by a [`Heuristic`] computed from two
//! counts over the training scenes on which the refined rule fires: `p`
//! scenes whose label equals the rule's consequent and which the rest of the
//! theory does not already classify, and `n` scenes whose label differs.
//! `p0` and `n0` are the same counts for the unrefined rule.
//!
//! | heuristic             | score                                 |
//! |-----------------------|---------------------------------------|
//! | `laplace`             | `(p + 1) / (p + n + 2)`               |
//! | `precision`           | `p / (p + n)`, `0` when nothing fires |
//! | `coverage-difference` | `(p - p0) + (n0 - n)`                 |
//! | `rate-difference`     | `p / p0 - n / n0`, empty ratios are 0 |
//!
//! The last two are the usual separate-and-conquer gain measures taken
//! relative to the parent rule.
//!
//! For the parameter layer a rule counts as resolved whenever it fires:
//! when the layer resolves, every fired consequent is part of the merged
//! behaviour, and when it fails to resolve, every fired rule is implicated.
//! The rule picked for refinement is always one whose consequent differs
//! from the misclassified scene's label.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::eval::{resolve_par, Check, CompiledTheory, ConfigError, EngineConfig, EngineError};
use crate::model::{
    Antecedent, Behaviour, ConservativenessOrder, Constraint, LayerId, ModelError, Op, Property,
    Rule, Scene, Theory,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("{layer} layer: base rule {rule:?} cannot be refined further")]
    BadBaseRules { layer: LayerId, rule: String },
    #[error(
        "{layer} layer: no convergence after {iterations} iterations; labels may be inconsistent"
    )]
    IterationBudget { layer: LayerId, iterations: usize },
    #[error("{layer} layer: scene {scene} cannot be transformed: {reason}")]
    Untransformable {
        layer: LayerId,
        scene: usize,
        reason: EngineError,
    },
    #[error("{layer} layer: scene {scene} does not use the layer's schema")]
    SchemaMismatch { layer: LayerId, scene: usize },
    #[error("candidate constraint pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl LearnError {
    pub fn layer(&self) -> Option<LayerId> {
        match self {
            LearnError::BadBaseRules { layer, .. }
            | LearnError::IterationBudget { layer, .. }
            | LearnError::Untransformable { layer, .. }
            | LearnError::SchemaMismatch { layer, .. } => Some(*layer),
            _ => None,
        }
    }
}

/// A training scene with the behaviour expected from each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledScene {
    scene: Scene,
    maneuver_label: Behaviour,
    final_label: Behaviour,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("maneuver label {maneuver} and final label {final_} disagree on the maneuver")]
pub struct LabelMismatch {
    pub maneuver: Behaviour,
    pub final_: Behaviour,
}

impl LabelledScene {
    pub fn new(
        scene: Scene,
        maneuver_label: Behaviour,
        final_label: Behaviour,
    ) -> Result<Self, LabelMismatch> {
        if maneuver_label.maneuver != final_label.maneuver {
            return Err(LabelMismatch {
                maneuver: maneuver_label,
                final_: final_label,
            });
        }
        Ok(LabelledScene {
            scene,
            maneuver_label,
            final_label,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn maneuver_label(&self) -> &Behaviour {
        &self.maneuver_label
    }

    pub fn final_label(&self) -> &Behaviour {
        &self.final_label
    }

    pub fn label(&self, layer: LayerId) -> &Behaviour {
        match layer {
            LayerId::Maneuver => &self.maneuver_label,
            _ => &self.final_label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heuristic {
    #[default]
    Laplace,
    Precision,
    CoverageDifference,
    RateDifference,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::Laplace,
        Heuristic::Precision,
        Heuristic::CoverageDifference,
        Heuristic::RateDifference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Laplace => "laplace",
            Heuristic::Precision => "precision",
            Heuristic::CoverageDifference => "coverage-difference",
            Heuristic::RateDifference => "rate-difference",
        }
    }

    pub fn score(self, refined: Counts, parent: Counts) -> f64 {
        let (p, n) = (refined.positive as f64, refined.negative as f64);
        let (p0, n0) = (parent.positive as f64, parent.negative as f64);
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        match self {
            Heuristic::Laplace => (p + 1.0) / (p + n + 2.0),
            Heuristic::Precision => ratio(p, p + n),
            Heuristic::CoverageDifference => (p - p0) + (n0 - n),
            Heuristic::RateDifference => ratio(p, p0) - ratio(n, n0),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| format!("unknown heuristic {s:?}"))
    }
}

/// Scenes on which a rule fires, split by whether the label matches its
/// consequent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub positive: usize,
    pub negative: usize,
}

/// The training scenes of one layer, already transformed into that layer's
/// input.
#[derive(Debug, Clone)]
pub struct TrainingView<'d> {
    layer: LayerId,
    order: ConservativenessOrder,
    scenes: Vec<Result<Scene, EngineError>>,
    labels: Vec<&'d Behaviour>,
}

impl<'d> TrainingView<'d> {
    /// For the parameter layer, scenes go through `cfg`'s maneuver layer and
    /// parameter transformation; failures are kept and count as
    /// misclassified.
    pub fn new(dataset: &'d [LabelledScene], layer: LayerId, cfg: &EngineConfig) -> Self {
        let scenes = dataset
            .iter()
            .map(|ls| match layer {
                LayerId::Maneuver => {
                    if **ls.scene.schema() == **cfg.maneuver_theory().schema() {
                        Ok(crate::eval::transform_man(&ls.scene))
                    } else {
                        Err(EngineError::SchemaMismatch(LayerId::Maneuver))
                    }
                }
                _ => cfg.to_parameter_scene(&ls.scene),
            })
            .collect();
        TrainingView {
            layer,
            order: cfg.order().clone(),
            scenes,
            labels: dataset.iter().map(|ls| ls.label(layer)).collect(),
        }
    }

    pub fn layer(&self) -> LayerId {
        self.layer
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scene(&self, index: usize) -> Option<&Scene> {
        self.scenes[index].as_ref().ok()
    }

    pub fn label(&self, index: usize) -> &Behaviour {
        self.labels[index]
    }

    fn transformed(&self) -> impl Iterator<Item = (usize, &Scene)> {
        self.scenes
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().ok().map(|s| (i, s)))
    }
}

/// How each training scene fares under one theory.
struct Snapshot {
    fired: Vec<Vec<usize>>,
    /// Fired rules whose consequent survives the layer's resolution.
    resolved: Vec<Vec<usize>>,
    classified: Vec<bool>,
}

fn snapshot(theory: &Theory, view: &TrainingView<'_>) -> Snapshot {
    let compiled =
        CompiledTheory::new(theory).expect("theory rules are checked against the schema");
    let rules = theory.rules();
    let n = view.len();
    let mut snap = Snapshot {
        fired: vec![Vec::new(); n],
        resolved: vec![Vec::new(); n],
        classified: vec![false; n],
    };
    for (i, scene) in view.transformed() {
        let fired: Vec<usize> = compiled
            .fired_unchecked(scene.values())
            .into_iter()
            .enumerate()
            .filter_map(|(r, f)| f.then_some(r))
            .collect();
        let label = view.label(i);
        let (resolved, classified) = match view.layer {
            LayerId::Maneuver => {
                let top = fired
                    .iter()
                    .map(|&r| view.order.rank(rules[r].consequent.maneuver))
                    .min();
                let resolved: Vec<usize> = fired
                    .iter()
                    .copied()
                    .filter(|&r| Some(view.order.rank(rules[r].consequent.maneuver)) == top)
                    .collect();
                let classified = resolved.iter().any(|&r| rules[r].consequent == *label);
                (resolved, classified)
            }
            _ => {
                let merged = resolve_par(fired.iter().map(|&r| &rules[r].consequent));
                let classified = merged.as_ref() == Ok(label);
                (fired.clone(), classified)
            }
        };
        snap.fired[i] = fired;
        snap.resolved[i] = resolved;
        snap.classified[i] = classified;
    }
    snap
}

/// Indices of the training scenes whose label is not among the layer's
/// resolved output.
pub fn misclassified(theory: &Theory, view: &TrainingView<'_>) -> BTreeSet<usize> {
    let snap = snapshot(theory, view);
    (0..view.len()).filter(|&i| !snap.classified[i]).collect()
}

/// Scenes that trigger `rule`: it fires and its consequent survives the
/// resolution of `theory`'s output. `rule` need not belong to `theory`.
pub fn coverage(rule: &Rule, theory: &Theory, view: &TrainingView<'_>) -> BTreeSet<usize> {
    let snap = snapshot(theory, view);
    let checks = compile_antecedent(&rule.antecedent, theory);
    view.transformed()
        .filter(|(i, scene)| {
            if !checks.iter().all(|c| c.holds(scene.values())) {
                return false;
            }
            let rules = theory.rules();
            match view.layer {
                LayerId::Maneuver => snap.resolved[*i]
                    .iter()
                    .any(|&r| rules[r].consequent == rule.consequent),
                // Every fired consequent takes part in the parameter layer's
                // resolution, the rule's own included.
                _ => true,
            }
        })
        .map(|(i, _)| i)
        .collect()
}

fn compile_antecedent(a: &Antecedent, theory: &Theory) -> Vec<Check> {
    a.constraints()
        .map(|c| Check::new(c, theory.schema()).expect("rule checked against the schema"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateOptions {
    /// Also emit feature-to-feature comparisons.
    pub feature_feature: bool,
}

/// Constraints that each hold on at least one of `props`' observations.
///
/// Every property `(f, v)` yields `f = v`; numbers also yield `f <= v` and
/// `f >= v`. With `feature_feature`, pairs of observed values of different
/// features yield the comparisons that hold between them, written with the
/// smaller feature on the left.
pub fn generate_constraints(
    props: &BTreeSet<Property>,
    ops: &[Op],
    options: GenerateOptions,
) -> BTreeSet<Constraint> {
    let mut out = BTreeSet::new();
    for p in props {
        for &op in ops {
            if op == Op::Eq || p.value.as_number().is_some() {
                out.insert(Constraint::FeatureValue {
                    feature: p.feature.clone(),
                    op,
                    value: p.value.clone(),
                });
            }
        }
    }
    if options.feature_feature {
        for a in props {
            for b in props.range(a..) {
                if a.feature >= b.feature || a.value.kind().is_none() {
                    continue;
                }
                for &op in ops {
                    let holds = match (op, a.value.as_number(), b.value.as_number()) {
                        (Op::Eq, _, _) => a.value == b.value,
                        (Op::Le, Some(x), Some(y)) => x <= y,
                        (Op::Ge, Some(x), Some(y)) => x >= y,
                        _ => false,
                    };
                    if holds {
                        out.insert(Constraint::feature_feature(
                            a.feature.clone(),
                            op,
                            b.feature.clone(),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// The candidate constraints `C` for refining a rule, with the properties `K`
/// they were generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub constraints: BTreeSet<Constraint>,
    pub source_properties: BTreeSet<Property>,
}

impl CandidatePool {
    pub fn new(source_properties: BTreeSet<Property>, options: GenerateOptions) -> Self {
        let constraints = generate_constraints(&source_properties, &Op::ALL, options);
        CandidatePool {
            constraints,
            source_properties,
        }
    }

    /// `K` = all properties of the scenes that trigger `rule`; constraints
    /// the rule already has are left out.
    pub fn for_rule(
        rule: &Rule,
        theory: &Theory,
        view: &TrainingView<'_>,
        options: GenerateOptions,
    ) -> Self {
        let covered = coverage(rule, theory, view);
        Self::from_scenes(rule, view, covered.into_iter(), options)
    }

    fn from_scenes(
        rule: &Rule,
        view: &TrainingView<'_>,
        scenes: impl Iterator<Item = usize>,
        options: GenerateOptions,
    ) -> Self {
        let props: BTreeSet<Property> = scenes
            .filter_map(|i| view.scene(i))
            .flat_map(|s| s.properties())
            .collect();
        let mut pool = CandidatePool::new(props, options);
        pool.constraints.retain(|c| !rule.antecedent.contains(c));
        pool
    }
}

/// Firing counts of `(antecedent, consequent)` over the view.
///
/// `rest` is the remainder of the layer's theory: positive scenes it already
/// classifies correctly are not counted, so the counts measure what the rule
/// contributes on its own.
pub fn coverage_counts(
    antecedent: &Antecedent,
    consequent: &Behaviour,
    rest: &Theory,
    view: &TrainingView<'_>,
) -> Counts {
    let open = snapshot(rest, view).classified;
    let checks = compile_antecedent(antecedent, rest);
    let mut counts = Counts::default();
    for (i, scene) in view.transformed() {
        if checks.iter().all(|c| c.holds(scene.values())) {
            if view.label(i) != consequent {
                counts.negative += 1;
            } else if !open[i] {
                counts.positive += 1;
            }
        }
    }
    counts
}

/// Heuristic value of refining `rule` with `c`, with `rest` as in
/// [`coverage_counts`].
pub fn score_constraint(
    c: &Constraint,
    rule: &Rule,
    rest: &Theory,
    view: &TrainingView<'_>,
    heuristic: Heuristic,
) -> f64 {
    let parent = coverage_counts(&rule.antecedent, &rule.consequent, rest, view);
    let refined = coverage_counts(
        &rule.antecedent.and(c.clone()),
        &rule.consequent,
        rest,
        view,
    );
    heuristic.score(refined, parent)
}

#[derive(Debug, Clone)]
struct Scored {
    constraint: Constraint,
    score: f64,
    keeps_positive: bool,
    holds_on_scene: bool,
}

/// Scores every candidate once. Only scenes where the parent rule fires can
/// be affected by the refinement.
fn score_pool(
    pool: &CandidatePool,
    rule: &Rule,
    scene: usize,
    rest: &Theory,
    view: &TrainingView<'_>,
    heuristic: Heuristic,
    workers: Option<&rayon::ThreadPool>,
) -> Vec<Scored> {
    let classified = snapshot(rest, view).classified;
    let parent_checks = compile_antecedent(&rule.antecedent, rest);
    let mut parent = Counts::default();
    // (scene, Some(true) positive, Some(false) negative, None ignored)
    let mut firing: Vec<(&Scene, Option<bool>)> = Vec::new();
    for (i, s) in view.transformed() {
        if parent_checks.iter().all(|c| c.holds(s.values())) {
            let class = if view.label(i) != &rule.consequent {
                parent.negative += 1;
                Some(false)
            } else if !classified[i] {
                parent.positive += 1;
                Some(true)
            } else {
                None
            };
            firing.push((s, class));
        }
    }
    let target = view.scene(scene);
    let score_one = |c: &Constraint| {
        let check = Check::new(c, rest.schema()).expect("candidates come from schema scenes");
        let mut refined = Counts::default();
        for (s, class) in &firing {
            match class {
                Some(true) if check.holds(s.values()) => refined.positive += 1,
                Some(false) if check.holds(s.values()) => refined.negative += 1,
                _ => {}
            }
        }
        Scored {
            constraint: c.clone(),
            score: heuristic.score(refined, parent),
            keeps_positive: refined.positive > 0,
            holds_on_scene: target.is_some_and(|t| check.holds(t.values())),
        }
    };
    let candidates: Vec<&Constraint> = pool.constraints.iter().collect();
    match workers {
        Some(w) => w.install(|| candidates.par_iter().map(|c| score_one(c)).collect()),
        None => candidates.iter().map(|c| score_one(c)).collect(),
    }
}

/// Index of the best candidate. Candidates whose truth on the chosen scene
/// equals `keep_scene` come first, and among those the ones that still
/// cover an open positive; the heuristic decides next and the seeded stream
/// breaks exact ties.
fn pick(scored: &[Scored], keep_scene: bool, rng: &mut ChaCha8Rng) -> Option<usize> {
    let narrow = |all: Vec<usize>, keep: &dyn Fn(&Scored) -> bool| {
        let some: Vec<usize> = all.iter().copied().filter(|&i| keep(&scored[i])).collect();
        if some.is_empty() {
            all
        } else {
            some
        }
    };
    let eligible = narrow((0..scored.len()).collect(), &|s| {
        s.holds_on_scene == keep_scene
    });
    let eligible = narrow(eligible, &|s| s.keeps_positive);
    let best = eligible
        .iter()
        .map(|&i| scored[i].score)
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = eligible
        .into_iter()
        .filter(|&i| scored[i].score == best)
        .collect();
    match ties.len() {
        0 => None,
        1 => Some(ties[0]),
        k => Some(ties[rng.gen_range(0..k)]),
    }
}

/// Mutable state of one [`rule_update`] run.
#[derive(Debug, Clone)]
pub struct LearnerState {
    theory: Theory,
    bad_rules: Vec<Rule>,
    rng_seed: u64,
    heuristic: Heuristic,
    rng: ChaCha8Rng,
}

impl LearnerState {
    pub fn new(theory: Theory, rng_seed: u64, heuristic: Heuristic) -> Self {
        LearnerState {
            theory,
            bad_rules: Vec::new(),
            rng_seed,
            heuristic,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn theory(&self) -> &Theory {
        &self.theory
    }

    pub fn bad_rules(&self) -> &[Rule] {
        &self.bad_rules
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn heuristic(&self) -> Heuristic {
        self.heuristic
    }

    fn is_bad(&self, candidate: &Rule) -> bool {
        self.bad_rules.iter().any(|r| r.same_logic(candidate))
    }

    fn is_novel(&self, candidate: &Rule) -> bool {
        !self.theory.contains_logic(candidate) && !self.is_bad(candidate)
    }
}

/// Chooses the constraint to append to `rule` while repairing training scene
/// `scene`; `rest` is the theory without `rule`.
///
/// When `rule`'s consequent is the scene's label, constraints that still hold
/// on the scene are preferred; otherwise constraints that exclude it are.
/// Within that group, constraints that keep at least one positive scene not
/// already handled by `rest` are preferred. Each preference is dropped when
/// no candidate meets it.
pub fn get_constraint(
    pool: &CandidatePool,
    rule: &Rule,
    scene: usize,
    rest: &Theory,
    view: &TrainingView<'_>,
    state: &mut LearnerState,
) -> Result<Constraint, LearnError> {
    let scored = score_pool(pool, rule, scene, rest, view, state.heuristic, None);
    let keep = view.label(scene) == &rule.consequent;
    let i = pick(&scored, keep, &mut state.rng).ok_or(LearnError::EmptyPool)?;
    Ok(scored[i].constraint.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOptions {
    pub seed: u64,
    pub heuristic: Heuristic,
    /// Outer-loop iterations allowed per layer before giving up.
    pub max_iterations: usize,
    /// Worker threads for candidate scoring; `1` scores inline.
    pub threads: usize,
    pub generate: GenerateOptions,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            seed: 0,
            heuristic: Heuristic::Laplace,
            max_iterations: 1_000_000,
            threads: 1,
            generate: GenerateOptions::default(),
        }
    }
}

/// Snapshot offered to a [`LearnObserver`] at the head of every outer
/// iteration.
pub struct IterationHead<'a> {
    pub iteration: usize,
    pub theory: &'a Theory,
    pub bad_rules: &'a [Rule],
    pub misclassified: usize,
}

/// Hooks into [`rule_update_observed`]; every method defaults to nothing.
pub trait LearnObserver {
    fn iteration(&mut self, _head: &IterationHead<'_>) {}
    /// A most-general rule was added for an uncovered label.
    fn generalized(&mut self, _rule: &Rule) {}
    /// `parent` was replaced by `child`; `accepted` is false when `child`
    /// fired nowhere and was filed as bad.
    fn refined(&mut self, _parent: &Rule, _child: &Rule, _accepted: bool) {}
    /// A learned rule that cannot be repaired was filed as bad.
    fn discarded(&mut self, _rule: &Rule) {}
}

impl LearnObserver for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleUpdateOutcome {
    pub theory: Theory,
    pub bad_rules: Vec<Rule>,
    pub iterations: usize,
}

struct IdMint {
    prefix: &'static str,
    next: usize,
    used: HashSet<String>,
}

impl IdMint {
    fn new(layer: LayerId, theory: &Theory) -> Self {
        IdMint {
            prefix: match layer {
                LayerId::Maneuver => "m",
                _ => "p",
            },
            next: 1,
            used: theory.rules().iter().map(|r| r.id.clone()).collect(),
        }
    }

    fn mint(&mut self) -> String {
        loop {
            let id = format!("{}{}", self.prefix, self.next);
            self.next += 1;
            if self.used.insert(id.clone()) {
                return id;
            }
        }
    }
}

pub fn rule_update(
    dataset: &[LabelledScene],
    base: &Theory,
    cfg: &EngineConfig,
    options: &LearnOptions,
) -> Result<RuleUpdateOutcome, LearnError> {
    rule_update_observed(dataset, base, cfg, options, &mut ())
}

/// Repairs `base` until no training scene is misclassified by its layer.
///
/// `cfg` supplies the conservativeness order and, for the parameter layer,
/// the maneuver theory that turns training scenes into parameter scenes.
///
/// A rule of `base` whose candidate constraints run out raises
/// [`LearnError::BadBaseRules`]. A rule learned during the run is filed as
/// bad instead, both when its candidates run out and when it fires on no
/// training scene except the misclassified one, since no refinement can
/// then separate it from that scene.
pub fn rule_update_observed(
    dataset: &[LabelledScene],
    base: &Theory,
    cfg: &EngineConfig,
    options: &LearnOptions,
    observer: &mut dyn LearnObserver,
) -> Result<RuleUpdateOutcome, LearnError> {
    let layer = base.layer();
    let view = TrainingView::new(dataset, layer, cfg);
    if layer == LayerId::Maneuver {
        if let Some(i) = (0..view.len()).find(|&i| view.scene(i).is_none()) {
            return Err(LearnError::SchemaMismatch { layer, scene: i });
        }
    }
    let workers = match options.threads {
        0 | 1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool"),
        ),
    };
    let mut state = LearnerState::new(base.clone(), options.seed, options.heuristic);
    let mut ids = IdMint::new(layer, base);
    let mut iterations = 0;
    loop {
        let snap = snapshot(&state.theory, &view);
        let wrong: Vec<usize> = (0..view.len()).filter(|&i| !snap.classified[i]).collect();
        observer.iteration(&IterationHead {
            iteration: iterations,
            theory: &state.theory,
            bad_rules: &state.bad_rules,
            misclassified: wrong.len(),
        });
        if wrong.is_empty() {
            return Ok(RuleUpdateOutcome {
                theory: state.theory,
                bad_rules: state.bad_rules,
                iterations,
            });
        }
        if iterations >= options.max_iterations {
            return Err(LearnError::IterationBudget { layer, iterations });
        }
        iterations += 1;

        let e = wrong[state.rng.gen_range(0..wrong.len())];
        if let Err(reason) = &view.scenes[e] {
            return Err(LearnError::Untransformable {
                layer,
                scene: e,
                reason: reason.clone(),
            });
        }
        let label = view.label(e);
        let rules = state.theory.rules();
        if !snap.fired[e].iter().any(|&r| rules[r].consequent == *label) {
            let general = Rule::new(String::new(), Antecedent::truth(), label.clone());
            if !state.is_bad(&general) {
                let general = Rule {
                    id: ids.mint(),
                    ..general
                };
                observer.generalized(&general);
                state.theory.insert(general)?;
            }
            continue;
        }

        let candidates: Vec<usize> = snap.resolved[e]
            .iter()
            .copied()
            .filter(|&r| rules[r].consequent != *label)
            .collect();
        let chosen = candidates[state.rng.gen_range(0..candidates.len())];
        let rule = rules[chosen].clone();
        let from_base = base.contains_logic(&rule);
        let lonely = (0..view.len()).all(|i| i == e || !snap.fired[i].contains(&chosen));
        let triggered = (0..view.len()).filter(|&i| snap.resolved[i].contains(&chosen));
        let pool = CandidatePool::from_scenes(&rule, &view, triggered, options.generate);
        state.theory.remove(&rule.id);

        let refined = if lonely && !from_base {
            None
        } else {
            let mut scored = score_pool(
                &pool,
                &rule,
                e,
                &state.theory,
                &view,
                state.heuristic,
                workers.as_ref(),
            );
            let keep = *label == rule.consequent;
            loop {
                let Some(i) = pick(&scored, keep, &mut state.rng) else {
                    break None;
                };
                let c = scored.swap_remove(i).constraint;
                let candidate = Rule::new(
                    String::new(),
                    rule.antecedent.and(c),
                    rule.consequent.clone(),
                );
                if state.is_novel(&candidate) {
                    break Some(candidate);
                }
            }
        };
        let Some(refined) = refined else {
            if from_base {
                return Err(LearnError::BadBaseRules {
                    layer,
                    rule: rule.id,
                });
            }
            observer.discarded(&rule);
            state.bad_rules.push(rule);
            continue;
        };
        let refined = Rule {
            id: ids.mint(),
            ..refined
        };
        let checks = compile_antecedent(&refined.antecedent, &state.theory);
        let fires_somewhere = view
            .transformed()
            .any(|(_, s)| checks.iter().all(|c| c.holds(s.values())));
        observer.refined(&rule, &refined, fires_somewhere);
        if fires_somewhere {
            state.theory.insert(refined)?;
        } else {
            state.bad_rules.push(refined);
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineUpdate {
    pub config: EngineConfig,
    pub maneuver: RuleUpdateOutcome,
    pub parameter: RuleUpdateOutcome,
}

/// Repairs the maneuver theory, then the parameter theory against the
/// repaired maneuver layer.
pub fn rule_engine_update(
    dataset: &[LabelledScene],
    base: &EngineConfig,
    options: &LearnOptions,
) -> Result<EngineUpdate, LearnError> {
    let maneuver = rule_update(dataset, base.maneuver_theory(), base, options)?;
    let mid = base.with_theory(maneuver.theory.clone())?;
    let parameter = rule_update(dataset, mid.parameter_theory(), &mid, options)?;
    let config = mid.with_theory(parameter.theory.clone())?;
    Ok(EngineUpdate {
        config,
        maneuver,
        parameter,
    })
}
