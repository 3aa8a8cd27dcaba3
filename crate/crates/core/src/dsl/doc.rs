//! JSON documents: rules, scenes, datasets, behaviours and traces.
//!
//! A rules document looks like
//!
//! ```json
//! {
//!   "version": 1,
//!   "schemas": {
//!     "maneuver":  { "Ego.Speed": "number", "Road.HasStopLine": "boolean" },
//!     "parameter": { "Maneuver.Track-Speed": "boolean", "Target.Speed": "any" },
//!     "output":    { "Ego.Speed": "any" }
//!   },
//!   "order": ["Emergency-Stop", "Stop", "Yield", "Decelerate-To-Halt",
//!             "Pass-Obstacle", "Follow-Leader", "Track-Speed"],
//!   "maneuver_rules": [
//!     { "id": "m1", "if": ["TRUE"],
//!       "then": { "maneuver": "Track-Speed", "params": { "Target.Speed": "Road.SpeedLimit" } } }
//!   ],
//!   "parameter_rules": []
//! }
//! ```
//!
//! Maneuver rule parameters are checked against the parameter schema and
//! parameter rule parameters against the output schema. `order` may be
//! omitted. Literals map to JSON as booleans, numbers, strings and `null`
//! for undefined; a parameter that names another feature is just a string
//! whose meaning is up to the schema kind.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde_json::{json, Map, Number, Value as Json};
use thiserror::Error;

use super::text::parse_constraint_text;
use crate::diagnose::DiscrepancyReport;
use crate::eval::{ConfigError, EngineConfig, EngineError, InferenceTrace, LayerTrace};
use crate::learn::LabelledScene;
use crate::model::{
    complete_scene, Antecedent, Behaviour, ConservativenessOrder, Feature, Kind, LayerId,
    LayerSchema, Maneuver, ModelError, Rule, Scene, Theory, Value,
};

pub const VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DocErrorKind {
    Syntax,
    Version,
    Shape,
    Schema,
    Constraint,
    UnknownManeuver,
    DuplicateRuleId,
    Reference,
    Scene,
    Label,
    LabelConflict { first: usize, second: usize },
    Config,
}

/// A document error located by a JSON pointer and, inside rule lists, the
/// rule id.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct DocError {
    pub kind: DocErrorKind,
    pub path: String,
    pub rule: Option<String>,
    pub detail: String,
}

impl DocError {
    fn new(kind: DocErrorKind, path: impl Into<String>, detail: impl fmt::Display) -> Self {
        DocError {
            kind,
            path: path.into(),
            rule: None,
            detail: detail.to_string(),
        }
    }

    fn shape(path: impl Into<String>, expected: &str) -> Self {
        DocError::new(DocErrorKind::Shape, path, format!("expected {expected}"))
    }

    fn in_rule(mut self, id: &str) -> Self {
        self.rule = Some(id.to_string());
        self
    }

    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self.kind {
            DocErrorKind::Syntax => "syntax",
            DocErrorKind::Version => "version",
            DocErrorKind::Shape => "shape",
            DocErrorKind::Schema => "schema",
            DocErrorKind::Constraint => "constraint",
            DocErrorKind::UnknownManeuver => "unknown-maneuver",
            DocErrorKind::DuplicateRuleId => "duplicate-id",
            DocErrorKind::Reference => "reference",
            DocErrorKind::Scene => "scene",
            DocErrorKind::Label => "label",
            DocErrorKind::LabelConflict { .. } => "label-conflict",
            DocErrorKind::Config => "config",
        }
    }
}

impl fmt::Display for DocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() {
            "/"
        } else {
            &self.path
        };
        write!(f, "{path}")?;
        if let Some(id) = &self.rule {
            write!(f, " (rule {id:?})")?;
        }
        write!(f, ": {}", self.detail)
    }
}

fn escape(segment: &str) -> String {
    segment.replace('~', "~0").replace('/', "~1")
}

fn child(path: &str, segment: impl fmt::Display) -> String {
    format!("{path}/{}", escape(&segment.to_string()))
}

pub fn parse_json(bytes: &[u8]) -> Result<Json, DocError> {
    serde_json::from_slice(bytes).map_err(|e| DocError::new(DocErrorKind::Syntax, "", e))
}

fn object<'j>(j: &'j Json, path: &str) -> Result<&'j Map<String, Json>, DocError> {
    j.as_object()
        .ok_or_else(|| DocError::shape(path, "an object"))
}

fn array<'j>(j: &'j Json, path: &str) -> Result<&'j Vec<Json>, DocError> {
    j.as_array()
        .ok_or_else(|| DocError::shape(path, "an array"))
}

fn string<'j>(j: &'j Json, path: &str) -> Result<&'j str, DocError> {
    j.as_str().ok_or_else(|| DocError::shape(path, "a string"))
}

fn field<'j>(m: &'j Map<String, Json>, key: &str, path: &str) -> Result<&'j Json, DocError> {
    m.get(key)
        .ok_or_else(|| DocError::new(DocErrorKind::Shape, path, format!("missing key {key:?}")))
}

fn reject_unknown_keys(
    m: &Map<String, Json>,
    allowed: &[&str],
    path: &str,
) -> Result<(), DocError> {
    match m.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(DocError::new(
            DocErrorKind::Shape,
            child(path, k),
            format!("unexpected key {k:?}"),
        )),
        None => Ok(()),
    }
}

pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => Json::Bool(*b),
        Value::Number(n) => number_to_json(*n),
        Value::Symbol(s) => Json::String(s.to_string()),
        Value::Undefined => Json::Null,
    }
}

fn number_to_json(n: f64) -> Json {
    const EXACT: f64 = 9_007_199_254_740_992.0;
    if n.fract() == 0.0 && n.abs() < EXACT {
        Json::Number(Number::from(n as i64))
    } else {
        Number::from_f64(n).map_or(Json::Null, Json::Number)
    }
}

pub fn value_from_json(j: &Json, path: &str) -> Result<Value, DocError> {
    let model = |e: ModelError| DocError::new(DocErrorKind::Shape, path, e);
    match j {
        Json::Bool(b) => Ok(Value::Bool(*b)),
        Json::Number(n) => Value::number(n.as_f64().unwrap_or(f64::NAN)).map_err(model),
        Json::String(s) => Value::symbol(s).map_err(model),
        Json::Null => Ok(Value::Undefined),
        _ => Err(DocError::shape(path, "a boolean, number, string or null")),
    }
}

fn feature_key(key: &str, path: &str) -> Result<Feature, DocError> {
    key.parse()
        .map_err(|e: ModelError| DocError::new(DocErrorKind::Reference, child(path, key), e))
}

fn assignment_from_json(j: &Json, path: &str) -> Result<BTreeMap<Feature, Value>, DocError> {
    object(j, path)?
        .iter()
        .map(|(k, v)| Ok((feature_key(k, path)?, value_from_json(v, &child(path, k))?)))
        .collect()
}

fn assignment_to_json<'a>(pairs: impl IntoIterator<Item = (&'a Feature, &'a Value)>) -> Json {
    Json::Object(
        pairs
            .into_iter()
            .map(|(f, v)| (f.to_string(), value_to_json(v)))
            .collect(),
    )
}

pub fn behaviour_to_json(b: &Behaviour) -> Json {
    json!({
        "maneuver": b.maneuver.name(),
        "params": assignment_to_json(&b.params),
    })
}

/// Parses `{maneuver, params}`; `params` may be omitted. With a schema,
/// parameters are checked against it.
pub fn behaviour_from_json(
    j: &Json,
    path: &str,
    schema: Option<&LayerSchema>,
) -> Result<Behaviour, DocError> {
    let m = object(j, path)?;
    reject_unknown_keys(m, &["maneuver", "params"], path)?;
    let mpath = child(path, "maneuver");
    let name = string(field(m, "maneuver", path)?, &mpath)?;
    let maneuver: Maneuver = name
        .parse()
        .map_err(|e| DocError::new(DocErrorKind::UnknownManeuver, &mpath, e))?;
    let ppath = child(path, "params");
    let params = match m.get("params") {
        Some(p) => assignment_from_json(p, &ppath)?,
        None => BTreeMap::new(),
    };
    if let Some(schema) = schema {
        for (f, v) in &params {
            schema
                .check_property(f, v)
                .map_err(|viol| DocError::new(DocErrorKind::Reference, child(&ppath, f), viol))?;
        }
    }
    Ok(Behaviour::new(maneuver, params))
}

pub fn parse_behaviour_document(
    bytes: &[u8],
    schema: Option<&LayerSchema>,
) -> Result<Behaviour, DocError> {
    behaviour_from_json(&parse_json(bytes)?, "", schema)
}

pub fn schema_to_json(schema: &LayerSchema) -> Json {
    Json::Object(
        schema
            .iter()
            .map(|(f, k)| (f.to_string(), Json::String(k.name().to_string())))
            .collect(),
    )
}

pub fn schema_from_json(j: &Json, layer: LayerId, path: &str) -> Result<LayerSchema, DocError> {
    let m = object(j, path)?;
    let mut declared = Vec::with_capacity(m.len());
    for (k, v) in m {
        let kpath = child(path, k);
        let kind: Kind = string(v, &kpath)?
            .parse()
            .map_err(|e| DocError::new(DocErrorKind::Schema, &kpath, e))?;
        declared.push((feature_key(k, path)?, kind));
    }
    LayerSchema::new(layer, declared).map_err(|e| DocError::new(DocErrorKind::Schema, path, e))
}

/// The three schemas shared by rules and datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Schemas {
    pub maneuver: Arc<LayerSchema>,
    pub parameter: Arc<LayerSchema>,
    pub output: Arc<LayerSchema>,
}

impl Schemas {
    pub fn of(cfg: &EngineConfig) -> Self {
        Schemas {
            maneuver: Arc::clone(cfg.maneuver_theory().schema()),
            parameter: Arc::clone(cfg.parameter_theory().schema()),
            output: Arc::clone(cfg.parameter_theory().output_schema()),
        }
    }

    pub fn to_json(&self) -> Json {
        json!({
            "maneuver": schema_to_json(&self.maneuver),
            "parameter": schema_to_json(&self.parameter),
            "output": schema_to_json(&self.output),
        })
    }

    pub fn from_json(j: &Json, path: &str) -> Result<Self, DocError> {
        let m = object(j, path)?;
        reject_unknown_keys(m, &["maneuver", "parameter", "output"], path)?;
        let layer = |key: &str, id: LayerId| -> Result<Arc<LayerSchema>, DocError> {
            Ok(Arc::new(schema_from_json(
                field(m, key, path)?,
                id,
                &child(path, key),
            )?))
        };
        Ok(Schemas {
            maneuver: layer("maneuver", LayerId::Maneuver)?,
            parameter: layer("parameter", LayerId::Parameter)?,
            output: layer("output", LayerId::Output)?,
        })
    }
}

fn order_from_json(j: &Json, path: &str) -> Result<ConservativenessOrder, DocError> {
    let items = array(j, path)?;
    let mut seq = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let ipath = child(path, i);
        let m: Maneuver = string(item, &ipath)?
            .parse()
            .map_err(|e| DocError::new(DocErrorKind::UnknownManeuver, &ipath, e))?;
        seq.push(m);
    }
    ConservativenessOrder::new(&seq).map_err(|e| DocError::new(DocErrorKind::Schema, path, e))
}

fn order_to_json(order: &ConservativenessOrder) -> Json {
    order.sequence().iter().map(|m| json!(m.name())).collect()
}

pub fn rule_to_json(rule: &Rule) -> Json {
    let conditions: Vec<Json> = rule
        .antecedent
        .constraints()
        .map(|c| Json::String(c.to_string()))
        .collect();
    json!({
        "id": rule.id,
        "if": conditions,
        "then": behaviour_to_json(&rule.consequent),
    })
}

fn rule_from_json(j: &Json, path: &str, output: &LayerSchema) -> Result<Rule, DocError> {
    let m = object(j, path)?;
    reject_unknown_keys(m, &["id", "if", "then"], path)?;
    let id = string(field(m, "id", path)?, &child(path, "id"))?;
    let inner = || -> Result<Rule, DocError> {
        let ipath = child(path, "if");
        let items = array(field(m, "if", path)?, &ipath)?;
        let mut constraints = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let cpath = child(&ipath, i);
            let c = parse_constraint_text(string(item, &cpath)?)
                .map_err(|e| DocError::new(DocErrorKind::Constraint, &cpath, e))?;
            constraints.push(c);
        }
        let antecedent = Antecedent::new(constraints)
            .map_err(|e| DocError::new(DocErrorKind::Constraint, &ipath, e))?;
        let consequent =
            behaviour_from_json(field(m, "then", path)?, &child(path, "then"), Some(output))?;
        Ok(Rule::new(id, antecedent, consequent))
    };
    inner().map_err(|e| e.in_rule(id))
}

fn theory_from_json(
    j: &Json,
    path: &str,
    layer: LayerId,
    schema: &Arc<LayerSchema>,
    output: &Arc<LayerSchema>,
) -> Result<Theory, DocError> {
    let mut theory = Theory::empty(layer, Arc::clone(schema), Arc::clone(output));
    for (i, item) in array(j, path)?.iter().enumerate() {
        let rpath = child(path, i);
        let rule = rule_from_json(item, &rpath, output)?;
        let id = rule.id.clone();
        theory.insert(rule).map_err(|e| {
            let kind = match e {
                ModelError::DuplicateRuleId(_) => DocErrorKind::DuplicateRuleId,
                _ => DocErrorKind::Reference,
            };
            DocError::new(kind, &rpath, e).in_rule(&id)
        })?;
    }
    Ok(theory)
}

/// Both theories of an engine together with their schemas and order.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleDocument {
    pub version: u64,
    pub schemas: Schemas,
    pub order: ConservativenessOrder,
    pub maneuver_rules: Theory,
    pub parameter_rules: Theory,
}

fn check_version(m: &Map<String, Json>, path: &str) -> Result<u64, DocError> {
    let vpath = child(path, "version");
    let v = field(m, "version", path)?
        .as_u64()
        .ok_or_else(|| DocError::shape(&vpath, "an integer"))?;
    if v != VERSION {
        return Err(DocError::new(
            DocErrorKind::Version,
            vpath,
            format!("unsupported version {v}, expected {VERSION}"),
        ));
    }
    Ok(v)
}

impl RuleDocument {
    pub fn parse(bytes: &[u8]) -> Result<Self, DocError> {
        Self::from_json(&parse_json(bytes)?)
    }

    pub fn from_json(j: &Json) -> Result<Self, DocError> {
        let m = object(j, "")?;
        reject_unknown_keys(
            m,
            &[
                "version",
                "schemas",
                "order",
                "maneuver_rules",
                "parameter_rules",
            ],
            "",
        )?;
        let version = check_version(m, "")?;
        let schemas = Schemas::from_json(field(m, "schemas", "")?, "/schemas")?;
        let order = match m.get("order") {
            Some(o) => order_from_json(o, "/order")?,
            None => ConservativenessOrder::default(),
        };
        let maneuver_rules = theory_from_json(
            field(m, "maneuver_rules", "")?,
            "/maneuver_rules",
            LayerId::Maneuver,
            &schemas.maneuver,
            &schemas.parameter,
        )?;
        let parameter_rules = theory_from_json(
            field(m, "parameter_rules", "")?,
            "/parameter_rules",
            LayerId::Parameter,
            &schemas.parameter,
            &schemas.output,
        )?;
        Ok(RuleDocument {
            version,
            schemas,
            order,
            maneuver_rules,
            parameter_rules,
        })
    }

    pub fn to_json(&self) -> Json {
        json!({
            "version": self.version,
            "schemas": self.schemas.to_json(),
            "order": order_to_json(&self.order),
            "maneuver_rules": self.maneuver_rules.rules().iter().map(rule_to_json).collect::<Vec<_>>(),
            "parameter_rules": self.parameter_rules.rules().iter().map(rule_to_json).collect::<Vec<_>>(),
        })
    }

    /// Pretty-printed with a trailing newline.
    pub fn to_string_pretty(&self) -> String {
        pretty(&self.to_json())
    }

    pub fn to_config(&self) -> Result<EngineConfig, DocError> {
        EngineConfig::new(
            self.maneuver_rules.clone(),
            self.parameter_rules.clone(),
            self.order.clone(),
        )
        .map_err(|e| {
            let rule = match &e {
                ConfigError::MissingManeuverFeature(_, id) => Some(id.clone()),
                _ => None,
            };
            DocError {
                kind: DocErrorKind::Config,
                path: "/schemas/parameter".to_string(),
                rule,
                detail: e.to_string(),
            }
        })
    }

    pub fn from_config(cfg: &EngineConfig) -> Self {
        RuleDocument {
            version: VERSION,
            schemas: Schemas::of(cfg),
            order: cfg.order().clone(),
            maneuver_rules: cfg.maneuver_theory().clone(),
            parameter_rules: cfg.parameter_theory().clone(),
        }
    }
}

pub fn pretty(j: &Json) -> String {
    let mut s = serde_json::to_string_pretty(j).expect("JSON values always serialise");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SceneMode {
    /// Every schema feature must be present.
    #[default]
    Strict,
    /// Missing features become undefined.
    Completing,
}

impl std::str::FromStr for SceneMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(SceneMode::Strict),
            "completing" => Ok(SceneMode::Completing),
            _ => Err(format!(
                "unknown scene mode {s:?}, expected strict or completing"
            )),
        }
    }
}

/// A scene together with the features that completion filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScene {
    pub scene: Scene,
    pub filled: Vec<Feature>,
}

pub fn scene_from_json(
    j: &Json,
    path: &str,
    schema: &Arc<LayerSchema>,
    mode: SceneMode,
) -> Result<LoadedScene, DocError> {
    let assignment = assignment_from_json(j, path)?;
    let filled: Vec<Feature> = schema
        .features()
        .iter()
        .filter(|f| !assignment.contains_key(*f))
        .cloned()
        .collect();
    let scene = match mode {
        SceneMode::Strict => Scene::new(schema, &assignment),
        SceneMode::Completing => complete_scene(&assignment, schema),
    }
    .map_err(|e| DocError::new(DocErrorKind::Scene, path, e))?;
    Ok(LoadedScene { scene, filled })
}

pub fn load_scene_document(
    bytes: &[u8],
    schema: &Arc<LayerSchema>,
    mode: SceneMode,
) -> Result<LoadedScene, DocError> {
    scene_from_json(&parse_json(bytes)?, "", schema, mode)
}

pub fn parse_scene_document(
    bytes: &[u8],
    schema: &Arc<LayerSchema>,
    mode: SceneMode,
) -> Result<Scene, DocError> {
    load_scene_document(bytes, schema, mode).map(|l| l.scene)
}

pub fn scene_to_json(scene: &Scene) -> Json {
    assignment_to_json(scene.iter())
}

/// Training records with the schemas they were read against.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schemas: Schemas,
    pub records: Vec<LabelledScene>,
}

impl Dataset {
    /// Accepts `{version, schemas?, records}` or a bare array of records.
    /// Schemas embedded in the document win over `schemas`; one of the two
    /// must be present. Record scenes are completed with undefined.
    pub fn parse(bytes: &[u8], schemas: Option<&Schemas>) -> Result<Self, DocError> {
        Self::from_json(&parse_json(bytes)?, schemas)
    }

    pub fn from_json(j: &Json, schemas: Option<&Schemas>) -> Result<Self, DocError> {
        let (records, path, embedded) = match j {
            Json::Array(_) => (j, String::new(), None),
            _ => {
                let m = object(j, "")?;
                reject_unknown_keys(m, &["version", "schemas", "records"], "")?;
                check_version(m, "")?;
                let embedded = match m.get("schemas") {
                    Some(s) => Some(Schemas::from_json(s, "/schemas")?),
                    None => None,
                };
                (field(m, "records", "")?, "/records".to_string(), embedded)
            }
        };
        let schemas = match (embedded, schemas) {
            (Some(s), _) => s,
            (None, Some(s)) => s.clone(),
            (None, None) => {
                return Err(DocError::new(
                    DocErrorKind::Schema,
                    "",
                    "dataset declares no schemas and none were supplied",
                ))
            }
        };
        let items = array(records, &path)?;
        let mut out = Vec::with_capacity(items.len());
        let mut seen: HashMap<Scene, usize> = HashMap::new();
        for (i, item) in items.iter().enumerate() {
            let rpath = child(&path, i);
            let record = record_from_json(item, &rpath, &schemas)?;
            if let Some(&first) = seen.get(record.scene()) {
                let earlier: &LabelledScene = &out[first];
                if earlier.maneuver_label() != record.maneuver_label()
                    || earlier.final_label() != record.final_label()
                {
                    return Err(DocError::new(
                        DocErrorKind::LabelConflict { first, second: i },
                        rpath,
                        format!("records {first} and {i} have the same scene but different labels"),
                    ));
                }
            } else {
                seen.insert(record.scene().clone(), i);
            }
            out.push(record);
        }
        Ok(Dataset {
            schemas,
            records: out,
        })
    }

    pub fn to_json(&self) -> Json {
        json!({
            "version": VERSION,
            "schemas": self.schemas.to_json(),
            "records": self.records.iter().map(record_to_json).collect::<Vec<_>>(),
        })
    }

    /// Index of an earlier record with the same scene and different labels.
    pub fn conflict_with(&self, record: &LabelledScene) -> Option<usize> {
        self.records.iter().position(|r| {
            r.scene() == record.scene()
                && (r.maneuver_label() != record.maneuver_label()
                    || r.final_label() != record.final_label())
        })
    }
}

fn record_from_json(j: &Json, path: &str, schemas: &Schemas) -> Result<LabelledScene, DocError> {
    let m = object(j, path)?;
    reject_unknown_keys(m, &["scene", "maneuver_label", "final_label"], path)?;
    let scene = scene_from_json(
        field(m, "scene", path)?,
        &child(path, "scene"),
        &schemas.maneuver,
        SceneMode::Completing,
    )?
    .scene;
    let man = behaviour_from_json(
        field(m, "maneuver_label", path)?,
        &child(path, "maneuver_label"),
        Some(&schemas.parameter),
    )?;
    let fin = behaviour_from_json(
        field(m, "final_label", path)?,
        &child(path, "final_label"),
        Some(&schemas.output),
    )?;
    LabelledScene::new(scene, man, fin).map_err(|e| DocError::new(DocErrorKind::Label, path, e))
}

pub fn record_to_json(r: &LabelledScene) -> Json {
    json!({
        "scene": scene_to_json(r.scene()),
        "maneuver_label": behaviour_to_json(r.maneuver_label()),
        "final_label": behaviour_to_json(r.final_label()),
    })
}

fn layer_trace_to_json(t: &LayerTrace) -> Json {
    json!({
        "input": scene_to_json(&t.input),
        "fired": t.fired_ids().collect::<Vec<_>>(),
        "output": t.output.iter().map(behaviour_to_json).collect::<Vec<_>>(),
        "resolved": t.resolved.iter().map(behaviour_to_json).collect::<Vec<_>>(),
    })
}

pub fn trace_to_json(t: &InferenceTrace) -> Json {
    json!({
        "maneuver": layer_trace_to_json(&t.maneuver),
        "transformed": t.transformed.as_ref().map(scene_to_json),
        "parameter": t.parameter.as_ref().map(layer_trace_to_json),
    })
}

pub fn engine_error_to_json(e: &EngineError) -> Json {
    json!({ "kind": e.kind(), "detail": e.to_string() })
}

pub fn doc_error_to_json(e: &DocError) -> Json {
    let mut m = Map::new();
    m.insert("kind".into(), json!(e.kind()));
    m.insert("detail".into(), json!(e.to_string()));
    m.insert("path".into(), json!(e.path));
    if let Some(id) = &e.rule {
        m.insert("rule".into(), json!(id));
    }
    if let DocErrorKind::LabelConflict { first, second } = e.kind {
        m.insert("records".into(), json!([first, second]));
    }
    Json::Object(m)
}

/// `{"behaviour": ...}` or `{"error": ...}`, plus the trace when asked for.
pub fn inference_to_json(
    outcome: &Result<Behaviour, EngineError>,
    trace: Option<&InferenceTrace>,
) -> Json {
    let mut m = Map::new();
    match outcome {
        Ok(b) => m.insert("behaviour".into(), behaviour_to_json(b)),
        Err(e) => m.insert("error".into(), engine_error_to_json(e)),
    };
    if let Some(t) = trace {
        m.insert("trace".into(), trace_to_json(t));
    }
    Json::Object(m)
}

pub fn report_to_json(r: &DiscrepancyReport) -> Json {
    let fired: Map<String, Json> = r
        .fired
        .iter()
        .map(|(layer, ids)| (layer.to_string(), json!(ids)))
        .collect();
    let conflicting: Map<String, Json> = r
        .conflicting
        .iter()
        .map(|(id, scenes)| {
            let list: Vec<Json> = scenes
                .iter()
                .map(|c| json!({ "index": c.index, "label": behaviour_to_json(&c.label) }))
                .collect();
            (id.clone(), Json::Array(list))
        })
        .collect();
    let actual = match &r.actual {
        Ok(b) => json!({ "behaviour": behaviour_to_json(b) }),
        Err(e) => json!({ "error": engine_error_to_json(e) }),
    };
    json!({
        "discrepancy": r.layer.is_some(),
        "layer": r.layer.map(|l| l.to_string()),
        "scene": scene_to_json(&r.scene),
        "actual": actual,
        "desired": {
            "maneuver_label": behaviour_to_json(r.desired.maneuver_label()),
            "final_label": behaviour_to_json(r.desired.final_label()),
        },
        "fired": fired,
        "no_producing_rule": r.no_producing_rule,
        "conflicting": conflicting,
        "trace": trace_to_json(&r.trace),
    })
}
