use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use behave_core::diagnose::{detect_discrepancy, find_conflicting_scenes};
use behave_core::dsl::{
    behaviour_from_json, inference_to_json, load_scene_document, parse_json, pretty,
    report_to_json, scene_from_json, Dataset, RuleDocument, SceneMode,
};
use behave_core::learn::{
    misclassified, rule_engine_update, Heuristic, LabelledScene, LearnOptions, TrainingView,
};
use behave_core::model::{Behaviour, LayerId, Scene, Theory};
use behave_core::EngineConfig;
use serde_json::{json, Value as Json};

use crate::failure::{Failure, DISCREPANCY};

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(path, e))
}

pub fn load_rules(path: &Path) -> Result<(RuleDocument, EngineConfig), Failure> {
    let doc = RuleDocument::parse(&read(path)?).map_err(|e| Failure::doc(path, &e))?;
    let cfg = doc.to_config().map_err(|e| Failure::doc(path, &e))?;
    Ok((doc, cfg))
}

fn load_dataset(path: &Path, doc: Option<&RuleDocument>) -> Result<Dataset, Failure> {
    Dataset::parse(&read(path)?, doc.map(|d| &d.schemas)).map_err(|e| Failure::doc(path, &e))
}

fn load_scene(path: &Path, cfg: &EngineConfig, mode: SceneMode) -> Result<Scene, Failure> {
    let loaded = load_scene_document(&read(path)?, cfg.maneuver_theory().schema(), mode)
        .map_err(|e| Failure::doc(path, &e))?;
    if !loaded.filled.is_empty() {
        let filled: Vec<String> = loaded.filled.iter().map(|f| f.to_string()).collect();
        eprintln!(
            "{}",
            json!({ "warning": { "kind": "completed", "filled": filled } })
        );
    }
    Ok(loaded.scene)
}

fn print(j: &Json) {
    print!("{}", pretty(j));
}

pub fn infer(rules: &Path, scene: &Path, trace: bool, mode: SceneMode) -> Result<u8, Failure> {
    let (_, cfg) = load_rules(rules)?;
    let scene = load_scene(scene, &cfg, mode)?;
    let run = cfg.run(&scene);
    print(&inference_to_json(
        &run.outcome,
        trace.then_some(&run.trace),
    ));
    match &run.outcome {
        Ok(_) => Ok(0),
        Err(e) => Err(Failure::engine(e)),
    }
}

pub fn learn(
    dataset: &Path,
    base_rules: Option<&Path>,
    out: &Path,
    seed: u64,
    heuristic: Heuristic,
) -> Result<u8, Failure> {
    let base = base_rules.map(load_rules).transpose()?;
    let data = load_dataset(dataset, base.as_ref().map(|(d, _)| d))?;
    let cfg = match base {
        Some((_, cfg)) => cfg,
        None => {
            let s = &data.schemas;
            EngineConfig::new(
                Theory::empty(
                    LayerId::Maneuver,
                    Arc::clone(&s.maneuver),
                    Arc::clone(&s.parameter),
                ),
                Theory::empty(
                    LayerId::Parameter,
                    Arc::clone(&s.parameter),
                    Arc::clone(&s.output),
                ),
                Default::default(),
            )
            .map_err(|e| Failure::input("config", e))?
        }
    };
    let options = LearnOptions {
        seed,
        heuristic,
        ..LearnOptions::default()
    };
    let update =
        rule_engine_update(&data.records, &cfg, &options).map_err(|e| Failure::learn(&e))?;
    let text = RuleDocument::from_config(&update.config).to_string_pretty();
    std::fs::write(out, text).map_err(|e| Failure::io(out, e))?;
    print(&json!({
        "maneuver_rules": update.config.maneuver_theory().len(),
        "parameter_rules": update.config.parameter_theory().len(),
        "outer_iterations": {
            "maneuver": update.maneuver.iterations,
            "parameter": update.parameter.iterations,
        },
        "bad_rules": {
            "maneuver": update.maneuver.bad_rules.len(),
            "parameter": update.parameter.bad_rules.len(),
        },
    }));
    Ok(0)
}

pub fn check(rules: &Path, dataset: &Path) -> Result<u8, Failure> {
    let (doc, cfg) = load_rules(rules)?;
    let data = load_dataset(dataset, Some(&doc))?;
    let mut report = serde_json::Map::new();
    let mut total = 0;
    for layer in [LayerId::Maneuver, LayerId::Parameter] {
        let view = TrainingView::new(&data.records, layer, &cfg);
        let wrong = misclassified(cfg.theory(layer), &view);
        total += wrong.len();
        report.insert(layer.to_string(), json!(wrong));
    }
    print(&json!({ "records": data.records.len(), "misclassified": report }));
    if total == 0 {
        Ok(0)
    } else {
        Err(Failure {
            code: DISCREPANCY,
            error: json!({ "kind": "misclassified", "detail": format!("{total} misclassification(s)") }),
        })
    }
}

/// The desired labels for `scene`. A bare behaviour is the final label; the
/// maneuver label is then taken from the resolved maneuver-layer output when
/// one has the same maneuver, or is the bare maneuver.
fn load_desired(path: &Path, cfg: &EngineConfig, scene: &Scene) -> Result<LabelledScene, Failure> {
    let bytes = read(path)?;
    let j = parse_json(&bytes).map_err(|e| Failure::doc(path, &e))?;
    let parameter = cfg.parameter_theory();
    let doc_err = |e| Failure::doc(path, &e);
    let (man, fin) = if j.get("final_label").is_some() {
        let man = j
            .get("maneuver_label")
            .ok_or_else(|| Failure::input("shape", "desired labels need maneuver_label"))?;
        (
            behaviour_from_json(man, "/maneuver_label", Some(parameter.schema()))
                .map_err(doc_err)?,
            behaviour_from_json(
                &j["final_label"],
                "/final_label",
                Some(parameter.output_schema()),
            )
            .map_err(doc_err)?,
        )
    } else {
        let fin = behaviour_from_json(&j, "", Some(parameter.output_schema())).map_err(doc_err)?;
        let resolved = cfg.run(scene).trace.maneuver.resolved;
        let man = resolved
            .into_iter()
            .find(|b| b.maneuver == fin.maneuver)
            .unwrap_or_else(|| Behaviour::bare(fin.maneuver));
        (man, fin)
    };
    LabelledScene::new(scene.clone(), man, fin).map_err(|e| Failure::input("label", e))
}

pub fn diagnose(rules: &Path, dataset: &Path, scene: &Path, desired: &Path) -> Result<u8, Failure> {
    let (doc, cfg) = load_rules(rules)?;
    let data = load_dataset(dataset, Some(&doc))?;
    let scene = load_scene(scene, &cfg, SceneMode::Strict)?;
    let desired = load_desired(desired, &cfg, &scene)?;
    let found = detect_discrepancy(&cfg, &scene, desired.final_label());
    if !found.found {
        print(&json!({
            "discrepancy": false,
            "actual": inference_to_json(&found.actual, None),
        }));
        return Ok(0);
    }
    let report = find_conflicting_scenes(&cfg, &data.records, &desired);
    print(&report_to_json(&report));
    Err(Failure {
        code: DISCREPANCY,
        error: json!({
            "kind": "discrepancy",
            "detail": "the engine does not produce the desired behaviour",
            "layer": report.layer.map(|l| l.to_string()),
        }),
    })
}

fn load_scenes(path: &Path, cfg: &EngineConfig) -> Result<Vec<Scene>, Failure> {
    let j = parse_json(&read(path)?).map_err(|e| Failure::doc(path, &e))?;
    let schema = cfg.maneuver_theory().schema();
    let one = |j: &Json, at: &str| {
        scene_from_json(j, at, schema, SceneMode::Strict)
            .map(|l| l.scene)
            .map_err(|e| Failure::doc(path, &e))
    };
    match &j {
        Json::Array(items) if items.is_empty() => {
            Err(Failure::input("scenes", "the scene list is empty"))
        }
        Json::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, s)| one(s, &format!("/{i}")))
            .collect(),
        _ => Ok(vec![one(&j, "")?]),
    }
}

/// Per-worker latencies in nanoseconds, and the first pass's outputs by scene index.
type WorkerResult = (Vec<u64>, Vec<(usize, Json)>);

fn percentile(sorted: &[u64], q: f64) -> u64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn bench(rules: &Path, scenes: &Path, iterations: u64, threads: usize) -> Result<u8, Failure> {
    let (_, cfg) = load_rules(rules)?;
    let scenes = load_scenes(scenes, &cfg)?;
    let n = iterations as usize;
    let chunk = n.div_ceil(threads);
    let started = Instant::now();
    let parts: Vec<WorkerResult> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (cfg, scenes) = (&cfg, &scenes);
                s.spawn(move || {
                    let range = (t * chunk).min(n)..((t + 1) * chunk).min(n);
                    let mut latencies = Vec::with_capacity(range.len());
                    let mut outputs = Vec::new();
                    for i in range {
                        let scene = &scenes[i % scenes.len()];
                        let t0 = Instant::now();
                        let outcome = cfg.run(scene).outcome;
                        latencies.push(t0.elapsed().as_nanos() as u64);
                        if i < scenes.len() {
                            outputs.push((i, inference_to_json(&outcome, None)));
                        }
                    }
                    (latencies, outputs)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bench worker"))
            .collect()
    });
    let wall = started.elapsed().as_secs_f64();
    let mut latencies: Vec<u64> = parts.iter().flat_map(|(l, _)| l.iter().copied()).collect();
    let mut outputs: Vec<(usize, Json)> = parts.into_iter().flat_map(|(_, o)| o).collect();
    outputs.sort_by_key(|(i, _)| *i);
    latencies.sort_unstable();
    let micros = |ns: u64| ns as f64 / 1000.0;
    let mean = latencies.iter().sum::<u64>() as f64 / latencies.len() as f64 / 1000.0;
    print(&json!({
        "iterations": n,
        "threads": threads,
        "scenes": scenes.len(),
        "total_seconds": wall,
        "per_second": n as f64 / wall,
        "latency_us": {
            "mean": mean,
            "median": micros(percentile(&latencies, 0.5)),
            "p99": micros(percentile(&latencies, 0.99)),
            "max": micros(*latencies.last().expect("at least one iteration")),
        },
        "outputs": outputs.into_iter().map(|(_, o)| o).collect::<Vec<_>>(),
    }));
    Ok(0)
}
