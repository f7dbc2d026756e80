//! Prompt templates.
//!
//! The wording of every prompt fragment lives in one overridable slot. The
//! shipped defaults satisfy the clause semantics each design needs; an
//! override file replaces individual slots without touching the rest:
//!
//! ```toml
//! [task_description]
//! simple = "What is the {attribute} of this product?"
//!
//! [clause]
//! unknown = "If unsure, reply {unknown_marker}."
//! ```
//!
//! Slots may use the `{attribute}` and `{unknown_marker}` placeholders.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("failed to read template file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse template file {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
}

/// The full slot set used to render prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    /// `task_description.simple`
    pub simple: String,
    /// `task_description.request`
    pub request: String,
    /// `task_description.knowledge`
    pub knowledge: String,
    /// `task_description.open`
    pub open: String,
    /// `clause.short_answer`
    pub short_answer: String,
    /// `clause.unknown`
    pub unknown: String,
    /// `clause.output_format`
    pub output_format: String,
    /// `input.title_prefix`
    pub title_prefix: String,
    /// `demo.input_prefix`
    pub demo_input_prefix: String,
    /// `demo.output_prefix`
    pub demo_output_prefix: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            simple: "What is the {attribute} of this product?".into(),
            request: "Extract the value of the attribute \"{attribute}\" from the product title below.".into(),
            knowledge: "First, implicitly extract all attribute-value pairs from the product title below. Then use this knowledge to answer the request that follows.".into(),
            open: "Extract all attribute-value pairs from the product title below.".into(),
            short_answer: "Answer only with the attribute value.".into(),
            unknown: "If the attribute value cannot be derived from the product title, answer with \"{unknown_marker}\".".into(),
            output_format: "List one attribute-value pair per line in the format \"Attribute: Value\".".into(),
            title_prefix: "Product title: ".into(),
            demo_input_prefix: "Product title: ".into(),
            demo_output_prefix: "Output: ".into(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct OverrideFile {
    #[serde(default)]
    task_description: DescriptionSlots,
    #[serde(default)]
    clause: ClauseSlots,
    #[serde(default)]
    input: InputSlots,
    #[serde(default)]
    demo: DemoSlots,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct DescriptionSlots {
    simple: Option<String>,
    request: Option<String>,
    knowledge: Option<String>,
    open: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ClauseSlots {
    short_answer: Option<String>,
    unknown: Option<String>,
    output_format: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct InputSlots {
    title_prefix: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct DemoSlots {
    input_prefix: Option<String>,
    output_prefix: Option<String>,
}

impl TemplateSet {
    /// Loads an override file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<TemplateSet, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let overrides: OverrideFile =
            toml::from_str(&text).map_err(|source| TemplateError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        let mut set = TemplateSet::default();
        set.apply(overrides);
        Ok(set)
    }

    fn apply(&mut self, o: OverrideFile) {
        let slots = [
            (&mut self.simple, o.task_description.simple),
            (&mut self.request, o.task_description.request),
            (&mut self.knowledge, o.task_description.knowledge),
            (&mut self.open, o.task_description.open),
            (&mut self.short_answer, o.clause.short_answer),
            (&mut self.unknown, o.clause.unknown),
            (&mut self.output_format, o.clause.output_format),
            (&mut self.title_prefix, o.input.title_prefix),
            (&mut self.demo_input_prefix, o.demo.input_prefix),
            (&mut self.demo_output_prefix, o.demo.output_prefix),
        ];
        for (slot, value) in slots {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }

    /// Renders the full slot set in the override-file schema.
    pub fn to_toml_string(&self) -> String {
        let file = OverrideFile {
            task_description: DescriptionSlots {
                simple: Some(self.simple.clone()),
                request: Some(self.request.clone()),
                knowledge: Some(self.knowledge.clone()),
                open: Some(self.open.clone()),
            },
            clause: ClauseSlots {
                short_answer: Some(self.short_answer.clone()),
                unknown: Some(self.unknown.clone()),
                output_format: Some(self.output_format.clone()),
            },
            input: InputSlots {
                title_prefix: Some(self.title_prefix.clone()),
            },
            demo: DemoSlots {
                input_prefix: Some(self.demo_input_prefix.clone()),
                output_prefix: Some(self.demo_output_prefix.clone()),
            },
        };
        toml::to_string_pretty(&file).expect("template set serializes")
    }
}

/// Substitutes the `{attribute}` and `{unknown_marker}` placeholders.
pub fn fill(template: &str, attribute: Option<&str>, unknown_marker: &str) -> String {
    let mut out = template.replace("{unknown_marker}", unknown_marker);
    if let Some(attr) = attribute {
        out = out.replace("{attribute}", attr);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_substitutes_placeholders() {
        let t = TemplateSet::default();
        let s = fill(&t.unknown, Some("Capacity"), "n/a");
        assert!(s.contains("\"n/a\""));
        let r = fill(&t.request, Some("Capacity"), "n/a");
        assert!(r.contains("\"Capacity\""));
    }

    #[test]
    fn override_file_replaces_only_named_slots() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.toml");
        std::fs::write(
            &path,
            "[clause]\nunknown = \"Say {unknown_marker} if unsure.\"\n",
        )
        .unwrap();
        let set = TemplateSet::from_file(&path).unwrap();
        assert_eq!(set.unknown, "Say {unknown_marker} if unsure.");
        assert_eq!(set.request, TemplateSet::default().request);
    }

    #[test]
    fn printed_schema_round_trips() {
        let set = TemplateSet::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.toml");
        std::fs::write(&path, set.to_toml_string()).unwrap();
        assert_eq!(TemplateSet::from_file(&path).unwrap(), set);
    }
}
