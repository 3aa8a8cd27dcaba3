use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::{json, Value as Json};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn behave(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_behave"));
    c.args(args);
    c
}

fn run(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut c = behave(args);
    for (flag, p) in paths {
        c.arg(flag).arg(p);
    }
    c.output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Json {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

/// The last stderr line, which carries the error object.
fn stderr_error(o: &Output) -> Json {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("stderr is not empty");
    serde_json::from_str::<Json>(line).expect("stderr is JSON")["error"].clone()
}

fn read_json(p: &Path) -> Json {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn write_json(dir: &TempDir, name: &str, j: &Json) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, j.to_string()).unwrap();
    p
}

fn rules() -> PathBuf {
    fixture("worked.rules.json")
}

fn scene() -> PathBuf {
    fixture("worked.scene.json")
}

fn dataset() -> PathBuf {
    fixture("worked.dataset.json")
}

/// The worked dataset with the rule schemas embedded, so it stands alone.
fn standalone_dataset(dir: &TempDir) -> PathBuf {
    let mut d = read_json(&dataset());
    d["schemas"] = read_json(&rules())["schemas"].clone();
    write_json(dir, "data.json", &d)
}

fn b6_response() -> Json {
    json!({ "behaviour": read_json(&fixture("b6.behaviour.json")) })
}

#[test]
fn infer_prints_the_worked_behaviour() {
    let o = run(&["infer"], &[("--rules", &rules()), ("--scene", &scene())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o), b6_response());
}

#[test]
fn infer_trace_names_fired_rules() {
    let o = run(
        &["infer", "--trace"],
        &[("--rules", &rules()), ("--scene", &scene())],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for id in ["m1", "m2", "m4", "p3"] {
        assert!(text.contains(&format!("\"{id}\"")), "{id} missing");
    }
}

#[test]
fn malformed_rules_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = run(&["infer"], &[("--rules", &bad), ("--scene", &scene())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_error(&o)["kind"].is_string());
}

#[test]
fn missing_behaviour_exits_1() {
    let dir = TempDir::new().unwrap();
    let mut r = read_json(&rules());
    r["maneuver_rules"] = json!([]);
    let empty = write_json(&dir, "empty.json", &r);
    let o = run(&["infer"], &[("--rules", &empty), ("--scene", &scene())]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_error(&o)["kind"], "no-behaviour");
}

#[test]
fn partial_scene_needs_completing_mode() {
    let dir = TempDir::new().unwrap();
    let mut s = read_json(&scene());
    s.as_object_mut().unwrap().remove("Ego.At");
    let partial = write_json(&dir, "partial.json", &s);
    let strict = run(&["infer"], &[("--rules", &rules()), ("--scene", &partial)]);
    assert_eq!(strict.status.code(), Some(2));
    let completing = run(
        &["infer", "--mode", "completing"],
        &[("--rules", &rules()), ("--scene", &partial)],
    );
    assert_eq!(completing.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&completing.stderr).contains("Ego.At"));
}

#[test]
fn learn_from_nothing_then_infer() {
    let dir = TempDir::new().unwrap();
    let data = standalone_dataset(&dir);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(
            &["learn", "--seed", "7"],
            &[("--dataset", &data), ("--out", out)],
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout_json(&o)["maneuver_rules"].as_u64().unwrap() >= 1);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let o = run(&["infer"], &[("--rules", &a), ("--scene", &scene())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o), b6_response());
}

#[test]
fn learn_rejects_conflicting_duplicates() {
    let dir = TempDir::new().unwrap();
    let mut d = read_json(&standalone_dataset(&dir));
    let mut twin = d["records"][0].clone();
    twin["final_label"] = read_json(&fixture("b5.behaviour.json"));
    twin["maneuver_label"] = json!({ "maneuver": "Decelerate-To-Halt", "params": {} });
    d["records"].as_array_mut().unwrap().push(twin);
    let data = write_json(&dir, "clash.json", &d);
    let out = dir.path().join("out.json");
    let o = run(
        &["learn", "--seed", "1"],
        &[("--dataset", &data), ("--out", &out)],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["kind"], "label-conflict");
}

#[test]
fn learn_reports_bad_base_rules() {
    let dir = TempDir::new().unwrap();
    let mut r = read_json(&rules());
    r["schemas"]["parameter"]["Maneuver.Emergency-Stop"] = json!("boolean");
    let every: Vec<String> = [
        "Crosswalk.Obstructed = true",
        "Ego.Approaching = \"Intersection\"",
        "Ego.At = undefined",
        "Ego.Speed = 35",
        "Ego.Speed <= 35",
        "Ego.Speed >= 35",
        "Road.HasStopLine = true",
        "Road.SpeedLimit = 50",
        "Road.SpeedLimit <= 50",
        "Road.SpeedLimit >= 50",
        "Ego.Speed <= Road.SpeedLimit",
        "Road.SpeedLimit >= Ego.Speed",
    ]
    .map(String::from)
    .to_vec();
    r["maneuver_rules"] = json!([{
        "id": "aberrant",
        "if": every,
        "then": { "maneuver": "Emergency-Stop", "params": {} }
    }]);
    let base = write_json(&dir, "base.json", &r);
    let out = dir.path().join("out.json");
    let o = run(
        &["learn", "--seed", "1"],
        &[
            ("--dataset", &dataset()),
            ("--base-rules", &base),
            ("--out", &out),
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let e = stderr_error(&o);
    assert_eq!(e["kind"], "bad-base-rules");
    assert_eq!(e["rule"], "aberrant");
}

#[test]
fn check_reports_misclassification() {
    let dir = TempDir::new().unwrap();
    let ok = run(
        &["check"],
        &[("--rules", &rules()), ("--dataset", &dataset())],
    );
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout_json(&ok)["records"], 1);

    let mut d = read_json(&dataset());
    d["records"][0]["final_label"] = read_json(&fixture("b5.behaviour.json"));
    let flipped = write_json(&dir, "flipped.json", &d);
    let o = run(
        &["check"],
        &[("--rules", &rules()), ("--dataset", &flipped)],
    );
    assert_eq!(o.status.code(), Some(5));
    let j = stdout_json(&o);
    assert_eq!(j["misclassified"]["parameter"], json!([0]));
    assert_eq!(j["misclassified"]["maneuver"], json!([]));

    let empty = write_json(&dir, "empty.json", &json!({ "version": 1, "records": [] }));
    let o = run(&["check"], &[("--rules", &rules()), ("--dataset", &empty)]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn diagnose_explains_the_discrepancy() {
    let paths = |desired: &Path| {
        run(
            &["diagnose"],
            &[
                ("--rules", &rules()),
                ("--dataset", &dataset()),
                ("--scene", &scene()),
                ("--desired", desired),
            ],
        )
    };
    let fine = paths(&fixture("b6.behaviour.json"));
    assert_eq!(fine.status.code(), Some(0));
    assert_eq!(stdout_json(&fine)["discrepancy"], false);

    let wrong = paths(&fixture("b5.behaviour.json"));
    assert_eq!(wrong.status.code(), Some(5));
    let report = stdout_json(&wrong);
    assert_eq!(report["layer"], "parameter");
    assert!(report["conflicting"].get("p3").is_some());
    assert_eq!(stderr_error(&wrong)["kind"], "discrepancy");

    let dir = TempDir::new().unwrap();
    let junk = write_json(&dir, "junk.json", &json!({ "maneuver": "Swerve" }));
    assert_eq!(paths(&junk).status.code(), Some(2));
}

fn bench(iterations: &str, threads: &str) -> Output {
    run(
        &["bench", "--iterations", iterations, "--threads", threads],
        &[("--rules", &rules()), ("--scenes", &scene())],
    )
}

#[test]
fn bench_reports_rate_and_latency() {
    let one = bench("2000", "1");
    assert_eq!(one.status.code(), Some(0));
    let j = stdout_json(&one);
    assert!(j["per_second"].as_f64().unwrap() >= 300.0);
    assert!(j["latency_us"]["p99"].as_f64().is_some());
    let four = stdout_json(&bench("2000", "4"));
    assert_eq!(four["outputs"], j["outputs"]);
    assert_eq!(four["threads"], 4);

    let zero = bench("0", "1");
    assert_eq!(zero.status.code(), Some(2));
    assert_eq!(stderr_error(&zero)["kind"], "usage");
}

fn request(scene: &Json) -> String {
    json!({ "scene": scene }).to_string()
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> (u16, Json) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let status = raw[9..12].parse().unwrap();
    let (_, payload) = raw.split_once("\r\n\r\n").unwrap();
    (status, serde_json::from_str(payload).unwrap())
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn http_service_answers_and_reports_health() {
    let mut child = behave(&["serve", "--listen", "127.0.0.1:0", "--rules"])
        .arg(rules())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let _server = Server(child);
    let addr = serde_json::from_str::<Json>(&line).unwrap()["listening"]
        .as_str()
        .unwrap()
        .to_string();

    let s = read_json(&scene());
    let (status, body) = http(&addr, "POST", "/infer", &request(&s));
    assert_eq!(status, 200);
    assert_eq!(body, b6_response());

    let offline = run(&["infer"], &[("--rules", &rules()), ("--scene", &scene())]);
    assert_eq!(body, stdout_json(&offline));

    let mut partial = s.clone();
    partial.as_object_mut().unwrap().remove("Ego.Speed");
    let (status, body) = http(&addr, "POST", "/infer", &request(&partial));
    assert_eq!(status, 400);
    assert!(body["error"].is_object());

    let (status, body) = http(&addr, "GET", "/health", "");
    assert_eq!(status, 200);
    assert_eq!(body["rules"], json!({ "maneuver": 5, "parameter": 3 }));
}

#[test]
fn stdio_service_keeps_request_order() {
    let s = read_json(&scene());
    let mut other = s.clone();
    other["Crosswalk.Obstructed"] = json!(false);
    other["Road.HasStopLine"] = json!(false);
    let input = format!(
        "{}\n\n{}\nnot json\n{}\n",
        request(&s),
        request(&other),
        json!({ "scene": s, "trace": true })
    );
    let mut child = behave(&["serve", "--stdio", "--rules"])
        .arg(rules())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Json> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], b6_response());
    assert_ne!(lines[1], lines[0]);
    assert!(lines[2]["error"].is_object());
    assert!(lines[3].get("trace").is_some());
}

#[test]
fn usage_errors_are_json() {
    let o = behave(&["infer"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["kind"], "usage");
    let o = behave(&["serve", "--rules", "x.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = run(
        &["infer"],
        &[
            ("--rules", Path::new("/nonexistent.json")),
            ("--scene", &scene()),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["kind"], "io");
}
