use std::path::Path;
use std::process::ExitCode;

use behave_core::dsl::{doc_error_to_json, engine_error_to_json, DocError};
use behave_core::learn::LearnError;
use behave_core::EngineError;
use serde_json::{json, Value as Json};

pub const ENGINE_ERROR: u8 = 1;
pub const INPUT_ERROR: u8 = 2;
pub const BAD_BASE_RULES: u8 = 3;
pub const ITERATION_BUDGET: u8 = 4;
pub const DISCREPANCY: u8 = 5;

/// A failed command: its exit code and the JSON error written to stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: Json,
}

impl Failure {
    pub fn usage(detail: String) -> Self {
        Failure {
            code: INPUT_ERROR,
            error: json!({ "kind": "usage", "detail": detail }),
        }
    }

    pub fn io(file: &Path, e: std::io::Error) -> Self {
        Failure {
            code: INPUT_ERROR,
            error: json!({ "kind": "io", "detail": e.to_string(), "file": file.display().to_string() }),
        }
    }

    pub fn doc(file: &Path, e: &DocError) -> Self {
        let mut error = doc_error_to_json(e);
        error["file"] = json!(file.display().to_string());
        Failure {
            code: INPUT_ERROR,
            error,
        }
    }

    pub fn input(kind: &str, detail: impl ToString) -> Self {
        Failure {
            code: INPUT_ERROR,
            error: json!({ "kind": kind, "detail": detail.to_string() }),
        }
    }

    pub fn engine(e: &EngineError) -> Self {
        Failure {
            code: ENGINE_ERROR,
            error: engine_error_to_json(e),
        }
    }

    pub fn learn(e: &LearnError) -> Self {
        let mut error =
            json!({ "detail": e.to_string(), "layer": e.layer().map(|l| l.to_string()) });
        let code = match e {
            LearnError::BadBaseRules { rule, .. } => {
                error["kind"] = json!("bad-base-rules");
                error["rule"] = json!(rule);
                BAD_BASE_RULES
            }
            LearnError::IterationBudget { iterations, .. } => {
                error["kind"] = json!("iteration-budget");
                error["iterations"] = json!(iterations);
                ITERATION_BUDGET
            }
            LearnError::Untransformable { scene, .. } => {
                error["kind"] = json!("untransformable");
                error["record"] = json!(scene);
                INPUT_ERROR
            }
            _ => {
                error["kind"] = json!("invalid-learning-input");
                INPUT_ERROR
            }
        };
        Failure { code, error }
    }

    pub fn report(self) -> ExitCode {
        eprintln!("{}", json!({ "error": self.error }));
        ExitCode::from(self.code)
    }
}
