//! Domain types shared by both layers of a rule theory.
//!
//! Everything here is immutable once built. Scenes are total: a [`Scene`]
//! always carries exactly one value per feature of its [`LayerSchema`], with
//! [`Value::Undefined`] standing in for anything not observed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("invalid feature {0:?}: expected Object.Attribute")]
    InvalidFeature(String),
    #[error("symbol values must be non-empty")]
    EmptySymbol,
    #[error("number must be finite, got {0}")]
    NonFiniteNumber(f64),
    #[error("undefined may only be compared with '='")]
    UndefinedOrdering,
    #[error("antecedent must contain at least one constraint")]
    EmptyAntecedent,
    #[error("schema must declare at least one feature")]
    EmptySchema,
    #[error("feature {0} declared twice")]
    DuplicateFeature(Feature),
    #[error("unknown feature {0}")]
    UnknownFeature(Feature),
    #[error("unknown maneuver {0:?}")]
    UnknownManeuver(String),
    #[error("unknown value kind {0:?}")]
    UnknownKind(String),
    #[error("conservativeness order must list each maneuver exactly once")]
    InvalidOrder,
    #[error("duplicate rule id {0:?}")]
    DuplicateRuleId(String),
    #[error("rule {rule:?}: {detail}")]
    InvalidRule { rule: String, detail: String },
    #[error("scene does not match its schema: {}", join_violations(.0))]
    Scene(Vec<Violation>),
}

fn join_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// `[A-Za-z_][A-Za-z0-9_-]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// A scalar inhabiting the value set of a layer.
#[derive(Debug, Clone)]
pub enum Value {
    Bool(bool),
    /// Unit-free real. Never NaN or infinite.
    Number(f64),
    Symbol(Arc<str>),
    Undefined,
}

impl Value {
    pub fn number(n: f64) -> Result<Self, ModelError> {
        if n.is_finite() {
            // -0.0 and 0.0 must hash alike.
            Ok(Value::Number(if n == 0.0 { 0.0 } else { n }))
        } else {
            Err(ModelError::NonFiniteNumber(n))
        }
    }

    pub fn symbol(s: impl AsRef<str>) -> Result<Self, ModelError> {
        let s = s.as_ref();
        if s.is_empty() {
            Err(ModelError::EmptySymbol)
        } else {
            Ok(Value::Symbol(Arc::from(s)))
        }
    }

    pub fn is_undefined(&self) -> bool {
        matches!(self, Value::Undefined)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// `None` for [`Value::Undefined`].
    pub fn kind(&self) -> Option<Kind> {
        match self {
            Value::Bool(_) => Some(Kind::Boolean),
            Value::Number(_) => Some(Kind::Number),
            Value::Symbol(_) => Some(Kind::Symbol),
            Value::Undefined => None,
        }
    }

    /// Undefined conforms to every kind.
    pub fn conforms_to(&self, kind: Kind) -> bool {
        match (kind, self.kind()) {
            (_, None) | (Kind::Any, _) => true,
            (k, Some(actual)) => k == actual,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Number(_) => 1,
            Value::Symbol(_) => 2,
            Value::Undefined => 3,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Symbol(a), Value::Symbol(b)) => a.cmp(b),
            (Value::Undefined, Value::Undefined) => Ordering::Equal,
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Bool(b) => b.hash(state),
            Value::Number(n) => n.to_bits().hash(state),
            Value::Symbol(s) => s.hash(state),
            Value::Undefined => {}
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// Literal syntax of the rule language: `true`, `35`, `"Intersection"`, `undefined`.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Number(n) => write!(f, "{n}"),
            Value::Symbol(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
            Value::Undefined => f.write_str("undefined"),
        }
    }
}

/// Declared kind of a schema feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Boolean,
    Number,
    Symbol,
    Any,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Boolean => "boolean",
            Kind::Number => "number",
            Kind::Symbol => "symbol",
            Kind::Any => "any",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boolean" => Ok(Kind::Boolean),
            "number" => Ok(Kind::Number),
            "symbol" => Ok(Kind::Symbol),
            "any" => Ok(Kind::Any),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }
}

/// An (object, attribute) pair, written `Object.Attribute`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    object: Arc<str>,
    attribute: Arc<str>,
}

impl Feature {
    pub fn new(object: &str, attribute: &str) -> Result<Self, ModelError> {
        for part in [object, attribute] {
            if !is_identifier(part) {
                return Err(ModelError::InvalidIdentifier(part.to_string()));
            }
        }
        Ok(Feature {
            object: Arc::from(object),
            attribute: Arc::from(attribute),
        })
    }

    /// The feature that encodes a chosen maneuver in the parameter layer.
    pub fn maneuver_flag(m: Maneuver) -> Self {
        Feature {
            object: Arc::from("Maneuver"),
            attribute: Arc::from(m.name()),
        }
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.object, self.attribute)
    }
}

impl FromStr for Feature {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (object, attribute) = s
            .split_once('.')
            .ok_or_else(|| ModelError::InvalidFeature(s.to_string()))?;
        Feature::new(object, attribute).map_err(|_| ModelError::InvalidFeature(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Property {
    pub feature: Feature,
    pub value: Value,
}

impl Property {
    pub fn new(feature: Feature, value: Value) -> Self {
        Property { feature, value }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.feature, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerId {
    Maneuver,
    Parameter,
    /// Vocabulary of the engine's final behaviour parameters.
    Output,
}

impl LayerId {
    pub fn name(self) -> &'static str {
        match self {
            LayerId::Maneuver => "maneuver",
            LayerId::Parameter => "parameter",
            LayerId::Output => "output",
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The feature vocabulary of one layer, with a declared kind per feature.
///
/// Features are kept sorted, so a scene's slot order is stable across runs.
#[derive(Debug, Clone)]
pub struct LayerSchema {
    layer: LayerId,
    features: Vec<Feature>,
    kinds: Vec<Kind>,
    index: HashMap<Feature, usize>,
}

impl LayerSchema {
    pub fn new(
        layer: LayerId,
        declared: impl IntoIterator<Item = (Feature, Kind)>,
    ) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (feature, kind) in declared {
            if map.insert(feature.clone(), kind).is_some() {
                return Err(ModelError::DuplicateFeature(feature));
            }
        }
        if map.is_empty() {
            return Err(ModelError::EmptySchema);
        }
        let (features, kinds): (Vec<_>, Vec<_>) = map.into_iter().unzip();
        let index = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        Ok(LayerSchema {
            layer,
            features,
            kinds,
            index,
        })
    }

    pub fn layer(&self) -> LayerId {
        self.layer
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn slot(&self, feature: &Feature) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn contains(&self, feature: &Feature) -> bool {
        self.index.contains_key(feature)
    }

    pub fn kind(&self, feature: &Feature) -> Option<Kind> {
        self.slot(feature).map(|i| self.kinds[i])
    }

    pub fn kind_at(&self, slot: usize) -> Kind {
        self.kinds[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Feature, Kind)> {
        self.features.iter().zip(self.kinds.iter().copied())
    }

    /// Checks that `value` may be assigned to `feature` under this schema.
    pub fn check_property(&self, feature: &Feature, value: &Value) -> Result<(), Violation> {
        match self.kind(feature) {
            None => Err(Violation::UnknownFeature(feature.clone())),
            Some(kind) if !value.conforms_to(kind) => Err(Violation::KindMismatch {
                feature: feature.clone(),
                expected: kind,
                found: value.clone(),
            }),
            Some(_) => Ok(()),
        }
    }
}

impl PartialEq for LayerSchema {
    fn eq(&self, other: &Self) -> bool {
        self.layer == other.layer && self.features == other.features && self.kinds == other.kinds
    }
}

impl Eq for LayerSchema {}

/// One reason an assignment is not a valid scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingFeature(Feature),
    UnknownFeature(Feature),
    KindMismatch {
        feature: Feature,
        expected: Kind,
        found: Value,
    },
}

impl Violation {
    pub fn feature(&self) -> &Feature {
        match self {
            Violation::MissingFeature(f)
            | Violation::UnknownFeature(f)
            | Violation::KindMismatch { feature: f, .. } => f,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingFeature(x) => write!(f, "missing feature {x}"),
            Violation::UnknownFeature(x) => write!(f, "unknown feature {x}"),
            Violation::KindMismatch {
                feature,
                expected,
                found,
            } => write!(f, "feature {feature} expects {expected}, got {found}"),
        }
    }
}

/// Checks totality and kinds of `assignment` against `schema`.
pub fn validate_scene(
    assignment: &BTreeMap<Feature, Value>,
    schema: &LayerSchema,
) -> Result<(), Vec<Violation>> {
    let mut violations: Vec<Violation> = assignment
        .iter()
        .filter_map(|(f, v)| schema.check_property(f, v).err())
        .collect();
    violations.extend(
        schema
            .features()
            .iter()
            .filter(|f| !assignment.contains_key(*f))
            .map(|f| Violation::MissingFeature(f.clone())),
    );
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Builds a total scene, assigning [`Value::Undefined`] to every feature that
/// `partial` leaves out.
pub fn complete_scene(
    partial: &BTreeMap<Feature, Value>,
    schema: &Arc<LayerSchema>,
) -> Result<Scene, ModelError> {
    let violations: Vec<Violation> = partial
        .iter()
        .filter_map(|(f, v)| schema.check_property(f, v).err())
        .collect();
    if !violations.is_empty() {
        return Err(ModelError::Scene(violations));
    }
    let values = schema
        .features()
        .iter()
        .map(|f| partial.get(f).cloned().unwrap_or(Value::Undefined))
        .collect();
    Ok(Scene {
        schema: Arc::clone(schema),
        values,
    })
}

/// A total assignment of values to the features of one schema.
#[derive(Debug, Clone)]
pub struct Scene {
    schema: Arc<LayerSchema>,
    values: Vec<Value>,
}

impl Scene {
    /// Strict construction: `assignment` must cover the schema exactly.
    pub fn new(
        schema: &Arc<LayerSchema>,
        assignment: &BTreeMap<Feature, Value>,
    ) -> Result<Self, ModelError> {
        validate_scene(assignment, schema).map_err(ModelError::Scene)?;
        complete_scene(assignment, schema)
    }

    /// `values` must be slot-aligned with `schema` and conform to its kinds.
    pub(crate) fn from_checked_values(schema: &Arc<LayerSchema>, values: Vec<Value>) -> Self {
        debug_assert_eq!(values.len(), schema.len());
        Scene {
            schema: Arc::clone(schema),
            values,
        }
    }

    /// Scene with every feature undefined.
    pub fn undefined(schema: &Arc<LayerSchema>) -> Self {
        Scene {
            schema: Arc::clone(schema),
            values: vec![Value::Undefined; schema.len()],
        }
    }

    pub fn schema(&self) -> &Arc<LayerSchema> {
        &self.schema
    }

    pub fn get(&self, feature: &Feature) -> Option<&Value> {
        self.schema.slot(feature).map(|i| &self.values[i])
    }

    pub fn value_at(&self, slot: usize) -> &Value {
        &self.values[slot]
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Feature, &Value)> {
        self.schema.features().iter().zip(self.values.iter())
    }

    pub fn properties(&self) -> impl Iterator<Item = Property> + '_ {
        self.iter()
            .map(|(f, v)| Property::new(f.clone(), v.clone()))
    }

    pub fn to_assignment(&self) -> BTreeMap<Feature, Value> {
        self.iter().map(|(f, v)| (f.clone(), v.clone())).collect()
    }

    /// Returns a copy with `feature` reassigned.
    pub fn with(&self, feature: &Feature, value: Value) -> Result<Self, ModelError> {
        self.schema
            .check_property(feature, &value)
            .map_err(|v| ModelError::Scene(vec![v]))?;
        let mut values = self.values.clone();
        values[self.schema.slot(feature).expect("checked above")] = value;
        Ok(Scene {
            schema: Arc::clone(&self.schema),
            values,
        })
    }
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
            && (Arc::ptr_eq(&self.schema, &other.schema) || self.schema == other.schema)
    }
}

impl Eq for Scene {}

impl Hash for Scene {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.values.hash(state);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Eq,
    Le,
    Ge,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::Eq, Op::Le, Op::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Le => "<=",
            Op::Ge => ">=",
        }
    }
}

/// An atomic condition over features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    True,
    FeatureValue {
        feature: Feature,
        op: Op,
        value: Value,
    },
    FeatureFeature {
        lhs: Feature,
        op: Op,
        rhs: Feature,
    },
}

impl Constraint {
    pub fn feature_value(feature: Feature, op: Op, value: Value) -> Result<Self, ModelError> {
        if value.is_undefined() && op != Op::Eq {
            return Err(ModelError::UndefinedOrdering);
        }
        Ok(Constraint::FeatureValue { feature, op, value })
    }

    pub fn eq(feature: Feature, value: Value) -> Self {
        Constraint::FeatureValue {
            feature,
            op: Op::Eq,
            value,
        }
    }

    pub fn feature_feature(lhs: Feature, op: Op, rhs: Feature) -> Self {
        Constraint::FeatureFeature { lhs, op, rhs }
    }

    pub fn features(&self) -> impl Iterator<Item = &Feature> {
        let (a, b) = match self {
            Constraint::True => (None, None),
            Constraint::FeatureValue { feature, .. } => (Some(feature), None),
            Constraint::FeatureFeature { lhs, rhs, .. } => (Some(lhs), Some(rhs)),
        };
        a.into_iter().chain(b)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::True => f.write_str("TRUE"),
            Constraint::FeatureValue { feature, op, value } => {
                write!(f, "{feature} {} {value}", op.symbol())
            }
            Constraint::FeatureFeature { lhs, op, rhs } => {
                write!(f, "{lhs} {} {rhs}", op.symbol())
            }
        }
    }
}

/// A non-empty conjunction of constraints, held as a set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Antecedent(BTreeSet<Constraint>);

impl Antecedent {
    pub fn new(constraints: impl IntoIterator<Item = Constraint>) -> Result<Self, ModelError> {
        let set: BTreeSet<_> = constraints.into_iter().collect();
        if set.is_empty() {
            Err(ModelError::EmptyAntecedent)
        } else {
            Ok(Antecedent(set))
        }
    }

    /// The most general antecedent, `TRUE`.
    pub fn truth() -> Self {
        Antecedent(BTreeSet::from([Constraint::True]))
    }

    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: &Constraint) -> bool {
        self.0.contains(c)
    }

    /// `self AND c`.
    pub fn and(&self, c: Constraint) -> Self {
        let mut set = self.0.clone();
        set.insert(c);
        Antecedent(set)
    }

    pub fn is_strict_subset_of(&self, other: &Antecedent) -> bool {
        self.0.len() < other.0.len() && self.0.is_subset(&other.0)
    }

    pub fn features(&self) -> impl Iterator<Item = &Feature> {
        self.0.iter().flat_map(|c| c.features())
    }
}

/// The high-level maneuvers, listed from most to least conservative under the
/// default order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Maneuver {
    EmergencyStop,
    Stop,
    Yield,
    DecelerateToHalt,
    PassObstacle,
    FollowLeader,
    TrackSpeed,
}

impl Maneuver {
    pub const ALL: [Maneuver; 7] = [
        Maneuver::EmergencyStop,
        Maneuver::Stop,
        Maneuver::Yield,
        Maneuver::DecelerateToHalt,
        Maneuver::PassObstacle,
        Maneuver::FollowLeader,
        Maneuver::TrackSpeed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Maneuver::EmergencyStop => "Emergency-Stop",
            Maneuver::Stop => "Stop",
            Maneuver::Yield => "Yield",
            Maneuver::DecelerateToHalt => "Decelerate-To-Halt",
            Maneuver::PassObstacle => "Pass-Obstacle",
            Maneuver::FollowLeader => "Follow-Leader",
            Maneuver::TrackSpeed => "Track-Speed",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Maneuver {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Maneuver::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ModelError::UnknownManeuver(s.to_string()))
    }
}

/// A maneuver with its parameter properties.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Behaviour {
    pub maneuver: Maneuver,
    pub params: BTreeMap<Feature, Value>,
}

impl Behaviour {
    pub fn new(maneuver: Maneuver, params: impl IntoIterator<Item = (Feature, Value)>) -> Self {
        Behaviour {
            maneuver,
            params: params.into_iter().collect(),
        }
    }

    pub fn bare(maneuver: Maneuver) -> Self {
        Behaviour {
            maneuver,
            params: BTreeMap::new(),
        }
    }
}

impl fmt::Display for Behaviour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {{", self.maneuver)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k} := {v}")?;
        }
        f.write_str("})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub id: String,
    pub antecedent: Antecedent,
    pub consequent: Behaviour,
}

impl Rule {
    pub fn new(id: impl Into<String>, antecedent: Antecedent, consequent: Behaviour) -> Self {
        Rule {
            id: id.into(),
            antecedent,
            consequent,
        }
    }

    /// Identity of a rule ignoring its id.
    pub fn same_logic(&self, other: &Rule) -> bool {
        self.antecedent == other.antecedent && self.consequent == other.consequent
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: IF ", self.id)?;
        for (i, c) in self.antecedent.constraints().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, " THEN {}", self.consequent)
    }
}

/// The unordered rule set of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Theory {
    layer: LayerId,
    schema: Arc<LayerSchema>,
    output_schema: Arc<LayerSchema>,
    rules: Vec<Rule>,
}

impl Theory {
    pub fn new(
        layer: LayerId,
        schema: Arc<LayerSchema>,
        output_schema: Arc<LayerSchema>,
        rules: impl IntoIterator<Item = Rule>,
    ) -> Result<Self, ModelError> {
        let mut theory = Theory::empty(layer, schema, output_schema);
        for rule in rules {
            theory.insert(rule)?;
        }
        Ok(theory)
    }

    pub fn empty(
        layer: LayerId,
        schema: Arc<LayerSchema>,
        output_schema: Arc<LayerSchema>,
    ) -> Self {
        Theory {
            layer,
            schema,
            output_schema,
            rules: Vec::new(),
        }
    }

    pub fn layer(&self) -> LayerId {
        self.layer
    }

    pub fn schema(&self) -> &Arc<LayerSchema> {
        &self.schema
    }

    pub fn output_schema(&self) -> &Arc<LayerSchema> {
        &self.output_schema
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Checks that `rule` only mentions features of this theory's schemas.
    pub fn check_rule(&self, rule: &Rule) -> Result<(), ModelError> {
        let invalid = |detail: String| ModelError::InvalidRule {
            rule: rule.id.clone(),
            detail,
        };
        for c in rule.antecedent.constraints() {
            for f in c.features() {
                if !self.schema.contains(f) {
                    return Err(invalid(format!(
                        "antecedent references unknown feature {f}"
                    )));
                }
            }
            if let Constraint::FeatureValue { feature, value, .. } = c {
                self.schema
                    .check_property(feature, value)
                    .map_err(|v| invalid(v.to_string()))?;
            }
        }
        for (f, v) in &rule.consequent.params {
            self.output_schema
                .check_property(f, v)
                .map_err(|v| invalid(format!("consequent: {v}")))?;
        }
        Ok(())
    }

    pub fn insert(&mut self, rule: Rule) -> Result<(), ModelError> {
        if self.rule(&rule.id).is_some() {
            return Err(ModelError::DuplicateRuleId(rule.id));
        }
        self.check_rule(&rule)?;
        self.rules.push(rule);
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Option<Rule> {
        let pos = self.rules.iter().position(|r| r.id == id)?;
        Some(self.rules.remove(pos))
    }

    /// True when some rule has the same antecedent set and consequent.
    pub fn contains_logic(&self, rule: &Rule) -> bool {
        self.rules.iter().any(|r| r.same_logic(rule))
    }
}

/// Total order over maneuvers, most conservative first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConservativenessOrder {
    sequence: [Maneuver; 7],
    rank: [u8; 7],
}

impl ConservativenessOrder {
    pub fn new(sequence: &[Maneuver]) -> Result<Self, ModelError> {
        if sequence.len() != Maneuver::ALL.len() {
            return Err(ModelError::InvalidOrder);
        }
        let mut rank = [u8::MAX; 7];
        for (i, m) in sequence.iter().enumerate() {
            if rank[m.index()] != u8::MAX {
                return Err(ModelError::InvalidOrder);
            }
            rank[m.index()] = i as u8;
        }
        let mut seq = [Maneuver::EmergencyStop; 7];
        seq.copy_from_slice(sequence);
        Ok(ConservativenessOrder {
            sequence: seq,
            rank,
        })
    }

    pub fn sequence(&self) -> &[Maneuver] {
        &self.sequence
    }

    /// 0 is the most conservative maneuver.
    pub fn rank(&self, m: Maneuver) -> u8 {
        self.rank[m.index()]
    }

    /// True when `a` is strictly more conservative than `b`.
    pub fn more_conservative(&self, a: Maneuver, b: Maneuver) -> bool {
        self.rank(a) < self.rank(b)
    }

    /// True when `a` is at least as conservative as `b`.
    pub fn at_least_as_conservative(&self, a: Maneuver, b: Maneuver) -> bool {
        self.rank(a) <= self.rank(b)
    }
}

impl Default for ConservativenessOrder {
    fn default() -> Self {
        ConservativenessOrder::new(&Maneuver::ALL).expect("listing order is a permutation")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(s: &str) -> Feature {
        s.parse().unwrap()
    }

    fn schema3() -> Arc<LayerSchema> {
        Arc::new(
            LayerSchema::new(
                LayerId::Maneuver,
                [
                    (feat("Ego.Speed"), Kind::Number),
                    (feat("Ego.At"), Kind::Symbol),
                    (feat("Road.HasStopLine"), Kind::Boolean),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn missing_feature_is_reported_by_name() {
        let schema = schema3();
        let assignment = BTreeMap::from([
            (feat("Ego.Speed"), Value::number(35.0).unwrap()),
            (feat("Road.HasStopLine"), Value::Bool(true)),
        ]);
        let violations = validate_scene(&assignment, &schema).unwrap_err();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].to_string(), "missing feature Ego.At");
    }

    #[test]
    fn kind_mismatch_is_a_violation() {
        let schema = schema3();
        let assignment = BTreeMap::from([
            (feat("Ego.Speed"), Value::number(35.0).unwrap()),
            (feat("Ego.At"), Value::Undefined),
            (feat("Road.HasStopLine"), Value::symbol("yes").unwrap()),
        ]);
        let violations = validate_scene(&assignment, &schema).unwrap_err();
        assert!(matches!(
            &violations[..],
            [Violation::KindMismatch {
                expected: Kind::Boolean,
                ..
            }]
        ));
    }

    #[test]
    fn undefined_fits_every_kind() {
        for kind in [Kind::Boolean, Kind::Number, Kind::Symbol, Kind::Any] {
            assert!(Value::Undefined.conforms_to(kind));
        }
    }

    #[test]
    fn complete_scene_fills_undefined() {
        let schema = schema3();
        let empty = complete_scene(&BTreeMap::new(), &schema).unwrap();
        assert!(empty.values().iter().all(Value::is_undefined));

        let two = Arc::new(
            LayerSchema::new(
                LayerId::Maneuver,
                [
                    (feat("Ego.Speed"), Kind::Number),
                    (feat("Ego.At"), Kind::Symbol),
                ],
            )
            .unwrap(),
        );
        let s = complete_scene(
            &BTreeMap::from([(feat("Ego.Speed"), Value::number(35.0).unwrap())]),
            &two,
        )
        .unwrap();
        assert_eq!(s.get(&feat("Ego.Speed")), Some(&Value::Number(35.0)));
        assert_eq!(s.get(&feat("Ego.At")), Some(&Value::Undefined));
    }

    #[test]
    fn complete_scene_rejects_unknown_feature() {
        let err = complete_scene(
            &BTreeMap::from([(feat("Foo.Bar"), Value::Bool(true))]),
            &schema3(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::Scene(vec![Violation::UnknownFeature(feat("Foo.Bar"))])
        );
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert_eq!(
            LayerSchema::new(LayerId::Maneuver, []).unwrap_err(),
            ModelError::EmptySchema
        );
        assert!(matches!(
            LayerSchema::new(
                LayerId::Maneuver,
                [(feat("A.b"), Kind::Any), (feat("A.b"), Kind::Number)]
            ),
            Err(ModelError::DuplicateFeature(_))
        ));
    }

    #[test]
    fn features_need_two_identifiers() {
        assert!("Ego".parse::<Feature>().is_err());
        assert!("Ego.".parse::<Feature>().is_err());
        assert!("Ego.Speed.X".parse::<Feature>().is_err());
        assert!("1Ego.Speed".parse::<Feature>().is_err());
        assert_eq!(
            feat("Maneuver.Decelerate-To-Halt"),
            Feature::maneuver_flag(Maneuver::DecelerateToHalt)
        );
    }

    #[test]
    fn undefined_cannot_be_ordered() {
        assert_eq!(
            Constraint::feature_value(feat("Ego.At"), Op::Le, Value::Undefined),
            Err(ModelError::UndefinedOrdering)
        );
        assert!(Constraint::feature_value(feat("Ego.At"), Op::Eq, Value::Undefined).is_ok());
    }

    #[test]
    fn antecedent_is_a_set() {
        let c = Constraint::eq(feat("Ego.At"), Value::Undefined);
        let a = Antecedent::new([c.clone(), c.clone()]).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(Antecedent::new([]), Err(ModelError::EmptyAntecedent));
        let b = Antecedent::truth().and(c);
        assert!(Antecedent::truth().is_strict_subset_of(&b));
        assert!(!b.is_strict_subset_of(&b));
    }

    #[test]
    fn behaviour_equality_ignores_insertion_order() {
        let x = (feat("Stop.AtStopLine"), Value::Bool(true));
        let y = (feat("Stop.AtEndOfLane"), Value::Bool(true));
        let a = Behaviour::new(Maneuver::DecelerateToHalt, [x.clone(), y.clone()]);
        let b = Behaviour::new(Maneuver::DecelerateToHalt, [y, x]);
        assert_eq!(a, b);
        assert_ne!(a, Behaviour::new(Maneuver::Stop, a.params.clone()));
    }

    #[test]
    fn maneuver_names_round_trip() {
        for m in Maneuver::ALL {
            assert_eq!(m.name().parse::<Maneuver>().unwrap(), m);
        }
        assert!("Swerve".parse::<Maneuver>().is_err());
    }

    #[test]
    fn default_order_is_strict_and_total() {
        let order = ConservativenessOrder::default();
        assert!(order.more_conservative(Maneuver::EmergencyStop, Maneuver::TrackSpeed));
        assert!(order.more_conservative(Maneuver::DecelerateToHalt, Maneuver::TrackSpeed));
        for a in Maneuver::ALL {
            for b in Maneuver::ALL {
                if a != b {
                    assert!(order.more_conservative(a, b) ^ order.more_conservative(b, a));
                }
            }
        }
        assert!(ConservativenessOrder::new(&[Maneuver::Stop; 7]).is_err());
        assert!(ConservativenessOrder::new(&Maneuver::ALL[..6]).is_err());
    }

    #[test]
    fn theory_checks_references_and_ids() {
        let schema = schema3();
        let out = Arc::new(
            LayerSchema::new(LayerId::Parameter, [(feat("Target.Speed"), Kind::Any)]).unwrap(),
        );
        let mut t = Theory::empty(LayerId::Maneuver, Arc::clone(&schema), out);
        let good = Rule::new("r1", Antecedent::truth(), Behaviour::bare(Maneuver::Stop));
        t.insert(good.clone()).unwrap();
        assert_eq!(
            t.insert(good).unwrap_err(),
            ModelError::DuplicateRuleId("r1".into())
        );
        let bad = Rule::new(
            "r2",
            Antecedent::new([Constraint::eq(feat("Foo.Bar"), Value::Bool(true))]).unwrap(),
            Behaviour::bare(Maneuver::Stop),
        );
        assert!(matches!(t.insert(bad), Err(ModelError::InvalidRule { .. })));
        let bad_param = Rule::new(
            "r3",
            Antecedent::truth(),
            Behaviour::new(Maneuver::Stop, [(feat("Ego.StopAt"), Value::Bool(true))]),
        );
        assert!(matches!(
            t.insert(bad_param),
            Err(ModelError::InvalidRule { .. })
        ));
    }

    #[test]
    fn negative_zero_equals_zero() {
        assert_eq!(Value::number(-0.0).unwrap(), Value::number(0.0).unwrap());
        assert!(Value::number(f64::NAN).is_err());
    }
}
