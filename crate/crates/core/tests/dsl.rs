mod common;

use behave_core::dsl::{
    behaviour_from_json, behaviour_to_json, parse_constraint_text, parse_scene_document,
    scene_from_json, scene_to_json, Dataset, RuleDocument, SceneMode, Schemas,
};
use behave_core::learn::LabelledScene;
use behave_core::{Behaviour, Constraint, Op, Value};
use common::*;
use proptest::prelude::*;

#[test]
fn constraint_text_examples() {
    assert_eq!(
        parse_constraint_text(r#"Ego.Approaching = "Intersection""#).unwrap(),
        Constraint::eq(f("Ego.Approaching"), sym("Intersection"))
    );
    assert_eq!(
        parse_constraint_text("Ego.Speed >= LeadingVehicle.Speed").unwrap(),
        Constraint::feature_feature(f("Ego.Speed"), Op::Ge, f("LeadingVehicle.Speed"))
    );
    assert_eq!(
        parse_constraint_text("Stop.AtStopLine = undefined").unwrap(),
        Constraint::eq(f("Stop.AtStopLine"), Value::Undefined)
    );
    assert_eq!(parse_constraint_text("  TRUE ").unwrap(), Constraint::True);
    let err = parse_constraint_text("Ego.Speed < 5").unwrap_err();
    assert_eq!(err.offset, 10);
}

#[test]
fn worked_rules_document_drives_the_engine() {
    let cfg = config();
    assert_eq!(cfg.maneuver_theory().len(), 5);
    assert_eq!(cfg.parameter_theory().len(), 3);
    assert_eq!(cfg.run(&scene(&cfg)).outcome, Ok(b6()));
}

#[test]
fn unknown_maneuver_is_named() {
    let text = std::str::from_utf8(RULES).unwrap().replacen(
        "\"Track-Speed\", \"params\"",
        "\"Swerve\", \"params\"",
        1,
    );
    let err = RuleDocument::parse(text.as_bytes()).unwrap_err();
    assert_eq!(err.kind(), "unknown-maneuver");
    assert_eq!(err.rule.as_deref(), Some("m1"));
}

#[test]
fn unknown_version_is_rejected() {
    let text = std::str::from_utf8(RULES)
        .unwrap()
        .replacen("\"version\": 1", "\"version\": 2", 1);
    assert_eq!(
        RuleDocument::parse(text.as_bytes()).unwrap_err().kind(),
        "version"
    );
}

#[test]
fn duplicate_ids_and_dangling_features_are_rejected() {
    let text = std::str::from_utf8(RULES).unwrap();
    let dup = text.replacen("\"id\": \"m2\"", "\"id\": \"m1\"", 1);
    assert_eq!(
        RuleDocument::parse(dup.as_bytes()).unwrap_err().kind(),
        "duplicate-id"
    );
    let dangling = text.replacen("Crosswalk.Obstructed = true", "Crosswalk.Blocked = true", 1);
    let err = RuleDocument::parse(dangling.as_bytes()).unwrap_err();
    assert_eq!(err.rule.as_deref(), Some("m2"));
}

#[test]
fn rules_document_round_trip() {
    let d = doc();
    let again = RuleDocument::parse(d.to_string_pretty().as_bytes()).unwrap();
    assert_eq!(again, d);
}

#[test]
fn scene_modes() {
    let cfg = config();
    let schema = cfg.maneuver_theory().schema();
    let s = parse_scene_document(SCENE, schema, SceneMode::Strict).unwrap();
    assert_eq!(s.values().len(), 6);
    let partial = r#"{"Crosswalk.Obstructed": true, "Ego.Approaching": "Intersection",
        "Ego.Speed": 35, "Road.HasStopLine": true, "Road.SpeedLimit": 50}"#;
    let completed =
        parse_scene_document(partial.as_bytes(), schema, SceneMode::Completing).unwrap();
    assert_eq!(completed.get(&f("Ego.At")), Some(&Value::Undefined));
    assert_eq!(completed, s);
    let err = parse_scene_document(partial.as_bytes(), schema, SceneMode::Strict).unwrap_err();
    assert_eq!(err.kind(), "scene");
    let typo = r#"{"Ego.Sped": 35}"#;
    assert!(parse_scene_document(typo.as_bytes(), schema, SceneMode::Completing).is_err());
    let unit = SCENE_TEXT.replace("35", "\"35 km/h\"");
    assert!(parse_scene_document(unit.as_bytes(), schema, SceneMode::Strict).is_err());
}

const SCENE_TEXT: &str = include_str!("fixtures/worked.scene.json");

#[test]
fn dataset_documents() {
    let d = doc();
    let one = Dataset::parse(DATASET, Some(&d.schemas)).unwrap();
    assert_eq!(one.records.len(), 1);
    assert_eq!(one.records[0].maneuver_label(), &b3());
    assert_eq!(one.records[0].final_label(), &b6());

    let record = |fin: &str| {
        format!(
            r#"{{"scene": {SCENE_TEXT}, "maneuver_label": {{"maneuver": "Decelerate-To-Halt", "params": {{"Stop.AtStopLine": true}}}},
                "final_label": {{"maneuver": "Decelerate-To-Halt", "params": {{"Ego.StopAt": "{fin}"}}}}}}"#
        )
    };
    let clash = format!("[{}, {}]", record("StopLine"), record("EndOfLane"));
    let err = Dataset::parse(clash.as_bytes(), Some(&d.schemas)).unwrap_err();
    assert_eq!(err.kind(), "label-conflict");
    assert!(err.to_string().contains("records 0 and 1"));

    let same = format!("[{}, {}]", record("StopLine"), record("StopLine"));
    assert_eq!(
        Dataset::parse(same.as_bytes(), Some(&d.schemas))
            .unwrap()
            .records
            .len(),
        2
    );

    assert!(Dataset::parse(b"[]", Some(&d.schemas))
        .unwrap()
        .records
        .is_empty());
    assert_eq!(Dataset::parse(b"[]", None).unwrap_err().kind(), "schema");
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_-]{0,6}".prop_filter("keyword", |s| {
        !matches!(s.as_str(), "true" | "false" | "undefined" | "TRUE")
    })
}

fn literal() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("true".to_string()),
        Just("false".to_string()),
        "-?[0-9]{1,4}(\\.[0-9]{1,3})?",
        "[a-zA-Z0-9 ._-]{1,8}".prop_map(|s| format!("\"{s}\"")),
    ]
}

fn ws() -> impl Strategy<Value = String> {
    "[ \t]{0,2}"
}

fn valid_constraint() -> impl Strategy<Value = String> {
    let feature = || (ident(), ident()).prop_map(|(o, a)| format!("{o}.{a}"));
    let op = || prop_oneof![Just("="), Just("<="), Just(">=")];
    prop_oneof![
        (ws(), ws()).prop_map(|(a, b)| format!("{a}TRUE{b}")),
        (feature(), ws(), op(), ws(), literal())
            .prop_map(|(f, a, o, b, l)| format!("{f}{a}{o}{b}{l}")),
        (feature(), ws(), ws()).prop_map(|(f, a, b)| format!("{a}{f} ={b}undefined")),
        (feature(), ws(), op(), feature()).prop_map(|(l, a, o, r)| format!("{l}{a}{o}{a}{r}")),
    ]
}

fn any_kind_record(cfg: &behave_core::EngineConfig, rng: &mut gen::Rng8) -> LabelledScene {
    let s = gen::scene(cfg.maneuver_theory().schema(), rng);
    let m = gen::behaviour(&gen::USED, cfg.parameter_theory().schema(), rng);
    let mut fin = gen::behaviour(&[m.maneuver], cfg.parameter_theory().output_schema(), rng);
    fin.maneuver = m.maneuver;
    LabelledScene::new(s, m, fin).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn valid_productions_parse(text in valid_constraint()) {
        let c = parse_constraint_text(&text);
        prop_assert!(c.is_ok(), "{text:?}: {c:?}");
        let c = c.unwrap();
        prop_assert_eq!(parse_constraint_text(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,24}") {
        if let Err(e) = parse_constraint_text(&text) {
            prop_assert!(e.offset <= text.len());
            prop_assert!(!e.expected.is_empty());
        }
    }

    #[test]
    fn documents_round_trip(seed in any::<u64>()) {
        let mut rng = gen::rng(seed);
        let cfg = gen::config(&mut rng);

        let d = RuleDocument::from_config(&cfg);
        let again = RuleDocument::parse(d.to_string_pretty().as_bytes()).unwrap();
        prop_assert_eq!(&again, &d);
        let back = again.to_config().unwrap();
        prop_assert_eq!(back.maneuver_theory(), cfg.maneuver_theory());
        prop_assert_eq!(back.parameter_theory(), cfg.parameter_theory());

        let schema = cfg.maneuver_theory().schema();
        let s = gen::scene(schema, &mut rng);
        let j = scene_to_json(&s);
        prop_assert_eq!(scene_from_json(&j, "", schema, SceneMode::Strict).unwrap().scene, s);

        let out = cfg.parameter_theory().output_schema();
        let b: Behaviour = gen::behaviour(&gen::USED, out, &mut rng);
        prop_assert_eq!(behaviour_from_json(&behaviour_to_json(&b), "", Some(out)).unwrap(), b);

        let records: Vec<LabelledScene> = (0..4).map(|_| any_kind_record(&cfg, &mut rng)).collect();
        let mut seen = std::collections::HashSet::new();
        let records: Vec<LabelledScene> = records.into_iter().filter(|r| seen.insert(r.scene().clone())).collect();
        let ds = Dataset { schemas: Schemas::of(&cfg), records };
        let text = ds.to_json().to_string();
        prop_assert_eq!(Dataset::parse(text.as_bytes(), None).unwrap(), ds);
    }
}
