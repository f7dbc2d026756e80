//! Prompt designs and assembly.
//!
//! Six designs are supported. The closed ones ask for a single named
//! attribute; the open one asks for every attribute/value pair:
//!
//! | design                        | clause set                              |
//! |-------------------------------|-----------------------------------------|
//! | `Simple`                      | simple question                         |
//! | `ExplicitNoShortNoUnknown`    | request                                 |
//! | `ExplicitNoUnknown`           | request + short answer                  |
//! | `Explicit`                    | request + short answer + unknown        |
//! | `GeneratedKnowledge`          | two-stage + request + short + unknown   |
//! | `Open`                        | open task + output format               |
//!
//! Few-shot prompts follow the layout: task description, demonstrations
//! (example input and output each), the task description again, then the task
//! input. The description therefore appears exactly twice.

mod demos;
mod templates;

pub use demos::{
    demo_seed_for_case, polarity_targets, select_demonstrations, DemoContext, DemoKind,
    DemoPayload, DemoSelection, Demonstration,
};
pub use templates::{fill, TemplateError, TemplateSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{prompt_text, Message};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("design {0:?} requires a target attribute")]
    MissingAttribute(PromptDesign),
    #[error("the open design does not take a target attribute")]
    UnexpectedAttribute,
    #[error("few-shot assembly needs at least one demonstration")]
    NoDemonstrations,
    #[error("invalid shot count {0}")]
    InvalidShots(usize),
    #[error("no same-category demonstration candidates for {category}/{attribute}")]
    EmptyPool { category: String, attribute: String },
}

/// The prompt designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptDesign {
    Simple,
    Explicit,
    ExplicitNoShortNoUnknown,
    ExplicitNoUnknown,
    GeneratedKnowledge,
    Open,
}

impl PromptDesign {
    pub const ALL: [PromptDesign; 6] = [
        PromptDesign::Simple,
        PromptDesign::Explicit,
        PromptDesign::ExplicitNoShortNoUnknown,
        PromptDesign::ExplicitNoUnknown,
        PromptDesign::GeneratedKnowledge,
        PromptDesign::Open,
    ];

    pub fn is_open(&self) -> bool {
        matches!(self, PromptDesign::Open)
    }

    /// Human-readable configuration label.
    pub fn label(&self) -> &'static str {
        match self {
            PromptDesign::Simple => "Simple",
            PromptDesign::Explicit => "Explicit",
            PromptDesign::ExplicitNoShortNoUnknown => "Explicit w/o sh.,unk.",
            PromptDesign::ExplicitNoUnknown => "Explicit w/o unk.",
            PromptDesign::GeneratedKnowledge => "Gen. Knowledge",
            PromptDesign::Open => "Open",
        }
    }

    /// The exact clause set this design renders, in order.
    pub fn clauses(&self) -> &'static [Clause] {
        match self {
            PromptDesign::Simple => &[Clause::SimpleQuestion],
            PromptDesign::ExplicitNoShortNoUnknown => &[Clause::Request],
            PromptDesign::ExplicitNoUnknown => &[Clause::Request, Clause::ShortAnswer],
            PromptDesign::Explicit => &[Clause::Request, Clause::ShortAnswer, Clause::Unknown],
            PromptDesign::GeneratedKnowledge => &[
                Clause::TwoStage,
                Clause::Request,
                Clause::ShortAnswer,
                Clause::Unknown,
            ],
            PromptDesign::Open => &[Clause::OpenTask, Clause::OutputFormat],
        }
    }
}

/// The building blocks a task description can be made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clause {
    /// Casual question naming the attribute.
    SimpleQuestion,
    /// Direct request for a specific attribute.
    Request,
    /// Two-stage instruction: gather all pairs first, then answer.
    TwoStage,
    /// Respond with the value only.
    ShortAnswer,
    /// How to answer when the value is not derivable.
    Unknown,
    /// Extract every attribute/value pair.
    OpenTask,
    /// Explicit output format so pairs can be parsed.
    OutputFormat,
}

impl Clause {
    pub const ALL: [Clause; 7] = [
        Clause::SimpleQuestion,
        Clause::Request,
        Clause::TwoStage,
        Clause::ShortAnswer,
        Clause::Unknown,
        Clause::OpenTask,
        Clause::OutputFormat,
    ];

    fn template<'a>(&self, t: &'a TemplateSet) -> &'a str {
        match self {
            Clause::SimpleQuestion => &t.simple,
            Clause::Request => &t.request,
            Clause::TwoStage => &t.knowledge,
            Clause::ShortAnswer => &t.short_answer,
            Clause::Unknown => &t.unknown,
            Clause::OpenTask => &t.open,
            Clause::OutputFormat => &t.output_format,
        }
    }
}

/// How messages are laid out on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageLayout {
    /// Everything in one user message.
    #[default]
    SingleUser,
    /// Task description as a system message, the rest as the user message.
    SystemThenUser,
}

/// A rendered prompt ready for a completion backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledPrompt {
    pub messages: Vec<Message>,
    pub design: PromptDesign,
    pub shots: usize,
    pub attribute: Option<String>,
    pub title: String,
    /// Product id of the query record, when known to the caller.
    pub query_id: Option<String>,
    /// Non-fatal assembly remarks (e.g. non-standard design/shots pairings).
    pub notes: Vec<String>,
}

impl AssembledPrompt {
    /// The concatenated prompt text (stub-script and hashing view).
    pub fn text(&self) -> String {
        prompt_text(&self.messages)
    }

    pub fn with_query_id(mut self, id: impl Into<String>) -> Self {
        self.query_id = Some(id.into());
        self
    }
}

/// Renders prompts from a template set.
#[derive(Debug, Clone)]
pub struct Prompter {
    templates: TemplateSet,
    unknown_marker: String,
    layout: MessageLayout,
}

impl Default for Prompter {
    fn default() -> Self {
        Prompter::new(TemplateSet::default())
    }
}

impl Prompter {
    pub fn new(templates: TemplateSet) -> Prompter {
        Prompter {
            templates,
            unknown_marker: "n/a".to_string(),
            layout: MessageLayout::SingleUser,
        }
    }

    pub fn with_unknown_marker(mut self, marker: impl Into<String>) -> Prompter {
        self.unknown_marker = marker.into();
        self
    }

    pub fn with_layout(mut self, layout: MessageLayout) -> Prompter {
        self.layout = layout;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn unknown_marker(&self) -> &str {
        &self.unknown_marker
    }

    /// The task-description block for a design: its clauses rendered in order,
    /// joined by single spaces.
    pub fn description_block(
        &self,
        design: PromptDesign,
        attribute: Option<&str>,
    ) -> Result<String, PromptError> {
        match (design.is_open(), attribute) {
            (false, None) => return Err(PromptError::MissingAttribute(design)),
            (true, Some(_)) => return Err(PromptError::UnexpectedAttribute),
            _ => {}
        }
        Ok(design
            .clauses()
            .iter()
            .map(|c| fill(c.template(&self.templates), attribute, &self.unknown_marker))
            .collect::<Vec<_>>()
            .join(" "))
    }

    /// Builds a zero-shot prompt. Closed designs require an attribute; the
    /// open design forbids one.
    pub fn zero_shot(
        &self,
        design: PromptDesign,
        title: &str,
        attribute: Option<&str>,
    ) -> Result<AssembledPrompt, PromptError> {
        let description = self.description_block(design, attribute)?;
        let input_line = format!("{}{}", self.templates.title_prefix, title);
        Ok(AssembledPrompt {
            messages: self.layout_messages(&description, &input_line),
            design,
            shots: 0,
            attribute: attribute.map(str::to_string),
            title: title.to_string(),
            query_id: None,
            notes: Vec::new(),
        })
    }

    /// Builds a few-shot prompt: description, demonstrations, description
    /// again, task input.
    pub fn few_shot(
        &self,
        design: PromptDesign,
        demos: &[Demonstration],
        title: &str,
        attribute: Option<&str>,
    ) -> Result<AssembledPrompt, PromptError> {
        if demos.is_empty() {
            return Err(PromptError::NoDemonstrations);
        }
        let description = self.description_block(design, attribute)?;
        let mut body = String::new();
        for demo in demos {
            body.push_str(&self.render_demo(demo));
            body.push('\n');
        }
        body.push_str(&description);
        body.push('\n');
        let input_line = format!("{}{}", self.templates.title_prefix, title);
        body.push_str(&input_line);
        let mut notes = Vec::new();
        if !matches!(
            design,
            PromptDesign::GeneratedKnowledge | PromptDesign::Open
        ) {
            notes.push(format!(
                "design {design:?} with demonstrations is a non-standard pairing"
            ));
        }
        Ok(AssembledPrompt {
            messages: self.layout_messages(&description, &body),
            design,
            shots: demos.len(),
            attribute: attribute.map(str::to_string),
            title: title.to_string(),
            query_id: None,
            notes,
        })
    }

    fn render_demo(&self, demo: &Demonstration) -> String {
        let input = format!("{}{}", self.templates.demo_input_prefix, demo.title);
        let output = match &demo.payload {
            DemoPayload::Closed { answer, .. } => {
                format!("{}{}", self.templates.demo_output_prefix, answer)
            }
            DemoPayload::Open { pairs } if pairs.is_empty() => format!(
                "{}{}",
                self.templates.demo_output_prefix, self.unknown_marker
            ),
            DemoPayload::Open { pairs } => {
                let rendered: Vec<String> =
                    pairs.iter().map(|(a, v)| format!("{a}: {v}")).collect();
                format!(
                    "{}\n{}",
                    self.templates.demo_output_prefix.trim_end(),
                    rendered.join("\n")
                )
            }
        };
        format!("{input}\n{output}")
    }

    fn layout_messages(&self, description: &str, body: &str) -> Vec<Message> {
        match self.layout {
            MessageLayout::SingleUser => vec![Message::user(format!("{description}\n{body}"))],
            MessageLayout::SystemThenUser => vec![
                Message::system(description.to_string()),
                Message::user(body.to_string()),
            ],
        }
    }
}

/// Violations found by [`verify_structure`].
pub type StructureViolations = Vec<String>;

/// Structural checker: confirms the rendered prompt carries exactly the
/// clause set its design mandates, the description the right number of times
/// (once zero-shot, twice few-shot), one rendered demonstration per shot, and
/// the task input at the end.
pub fn verify_structure(
    prompt: &AssembledPrompt,
    prompter: &Prompter,
) -> Result<(), StructureViolations> {
    let mut violations = Vec::new();
    let text = prompt.text();
    let attribute = prompt.attribute.as_deref();
    let required = prompt.design.clauses();
    for clause in Clause::ALL {
        let rendered = fill(
            clause.template(prompter.templates()),
            attribute,
            prompter.unknown_marker(),
        );
        // a clause whose placeholders stayed unfilled cannot occur
        let present = !rendered.contains("{attribute}") && text.contains(&rendered);
        let expected = required.contains(&clause);
        if present != expected {
            violations.push(format!(
                "clause {clause:?}: expected present={expected}, found present={present}"
            ));
        }
    }
    if let Ok(description) = prompter.description_block(prompt.design, attribute) {
        let occurrences = text.matches(&description).count();
        let expected = if prompt.shots == 0 { 1 } else { 2 };
        if occurrences != expected {
            violations.push(format!(
                "task description appears {occurrences} times, expected {expected}"
            ));
        }
    }
    let output_marker = prompter.templates().demo_output_prefix.trim_end();
    let demo_outputs = text
        .lines()
        .filter(|l| l.trim_start().starts_with(output_marker))
        .count();
    if demo_outputs != prompt.shots {
        violations.push(format!(
            "found {demo_outputs} demonstration outputs, expected {}",
            prompt.shots
        ));
    }
    let input_line = format!("{}{}", prompter.templates().title_prefix, prompt.title);
    if !text.ends_with(&input_line) {
        violations.push("prompt does not end with the task input".to_string());
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
