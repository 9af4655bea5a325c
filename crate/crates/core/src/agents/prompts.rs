use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{Learner, LogicPref, Persona, SubjectPref};
use crate::corpus::Exercise;

const DEFAULT_TEMPLATES: &str = include_str!("../../data/prompts.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot read prompt file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid prompt file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("prompt file: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectTemplates {
    pub humanities: String,
    pub none: String,
    pub stem: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicTemplates {
    pub deductive: String,
    pub intuitive: String,
    pub inductive: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Markers {
    pub question: String,
    pub options: String,
    pub own_draft: String,
    pub partner_draft: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplates {
    pub solo: String,
    pub draft: String,
    pub summary: String,
    #[serde(rename = "final")]
    pub final_answer: String,
}

/// Versioned prompt wording, loaded from TOML at runtime.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplates {
    pub version: u32,
    /// Must contain `{id}`; always the first line of every prompt.
    pub identity: String,
    pub neutral: String,
    pub subject: SubjectTemplates,
    pub logic: LogicTemplates,
    pub markers: Markers,
    pub tasks: TaskTemplates,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled prompt file is valid")
    }
}

impl PromptTemplates {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let t: PromptTemplates = toml::from_str(text)?;
        if !t.identity.contains("{id}") || t.identity.contains('\n') {
            return Err(PromptError::Invalid(
                "identity must be a single line containing {id}".into(),
            ));
        }
        let personas = Persona::enumerate();
        let mut rendered: Vec<String> = personas.iter().map(|p| t.render_persona(p)).collect();
        rendered.sort();
        rendered.dedup();
        if rendered.len() != personas.len() {
            return Err(PromptError::Invalid("persona descriptors are not distinct".into()));
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn subject_text(&self, s: SubjectPref) -> &str {
        match s {
            SubjectPref::Humanities => &self.subject.humanities,
            SubjectPref::None => &self.subject.none,
            SubjectPref::Stem => &self.subject.stem,
        }
    }

    pub fn logic_text(&self, l: LogicPref) -> &str {
        match l {
            LogicPref::Deductive => &self.logic.deductive,
            LogicPref::Intuitive => &self.logic.intuitive,
            LogicPref::Inductive => &self.logic.inductive,
        }
    }

    /// Persona description: subject framing followed by reasoning framing.
    pub fn render_persona(&self, p: &Persona) -> String {
        format!("{} {}", self.subject_text(p.subject), self.logic_text(p.logic))
    }

    /// Full system preamble for a learner (identity line + persona or neutral text).
    pub fn system_prompt(&self, learner: &Learner) -> String {
        let identity = self.identity.replace("{id}", &learner.id.to_string());
        let body = match &learner.persona {
            Some(p) => self.render_persona(p),
            None => self.neutral.clone(),
        };
        format!("{identity}\n{body}")
    }

    fn question_section(&self, e: &Exercise) -> String {
        let mut s = format!("{} {}\n", self.markers.question, e.stem);
        if e.has_options() {
            s.push_str(&self.markers.options);
            s.push('\n');
            for o in &e.options {
                s.push_str(&format!("{}. {}\n", o.label, o.text));
            }
        }
        s
    }

    pub fn solo_prompt(&self, system: &str, e: &Exercise) -> String {
        format!("{system}\n\n{}\n{}", self.question_section(e), self.tasks.solo)
    }

    pub fn draft_prompt(&self, system: &str, stripped: &Exercise) -> String {
        format!("{system}\n\n{}\n{}", self.question_section(stripped), self.tasks.draft)
    }

    pub fn summary_prompt(&self, system: &str, stripped: &Exercise, own: &str, partner: &str) -> String {
        format!(
            "{system}\n\n{}\n{}\n{own}\n\n{}\n{partner}\n\n{}",
            self.question_section(stripped),
            self.markers.own_draft,
            self.markers.partner_draft,
            self.tasks.summary
        )
    }

    pub fn final_prompt(&self, system: &str, e: &Exercise, summary: &str) -> String {
        format!(
            "{system}\n\n{}\n{}\n{summary}\n\n{}",
            self.question_section(e),
            self.markers.summary,
            self.tasks.final_answer
        )
    }
}
