//! Text and JSON formats for rules, scenes, datasets and reports.

mod doc;
mod text;

pub use doc::*;
pub use text::{parse_constraint_text, parse_feature_text, ParseError};
