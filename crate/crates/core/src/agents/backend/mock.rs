//! Seeded mock completion backend with a planted collaboration pattern.
//!
//! Replies are a pure function of `(seed, prompt, decode params)`. The mock
//! recognises the task from the prompt layout:
//!
//! * drafts carry a tag `[draft subject=S logic=L]` describing the author;
//! * summaries read the partner's tag and emit `[summary partner_subject=S ...]`;
//! * answers are correct with probability
//!   `clamp(base + role_bonus * affinity + bonus * complementarity, 0, 1)`,
//!   where complementarity is read from the summary tag in the prompt.
//!
//! The Bernoulli draw is keyed on the learner identity line and the stem
//! (plus the decode sampling seed), so the same learner sees the same draw on
//! an exercise whether answering alone or after a discussion.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, DecodeParams};
use crate::agents::{LogicPref, PromptTemplates, SubjectPref};
use crate::corpus::{Category, Exercise};
use crate::hashing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockProfile {
    /// Accuracy gain when the two subject preferences are opposite-signed.
    pub bonus: f64,
    /// Accuracy gain when a persona's subject preference matches the
    /// exercise category.
    pub role_bonus: f64,
    /// Per-exercise base accuracy is drawn uniformly in `[base_low, base_high)`.
    pub base_low: f64,
    pub base_high: f64,
}

impl Default for MockProfile {
    fn default() -> Self {
        Self {
            bonus: 0.3,
            role_bonus: 0.05,
            base_low: 0.15,
            base_high: 0.45,
        }
    }
}

#[derive(Debug, Clone)]
struct SheetEntry {
    key: char,
    labels: Vec<char>,
    base: f64,
    category: Category,
}

/// Answer keys and base difficulties, indexed by stem.
#[derive(Debug, Clone, Default)]
pub struct AnswerSheet {
    entries: HashMap<String, SheetEntry>,
}

impl AnswerSheet {
    pub fn from_exercises(exercises: &[Exercise], seed: u64, profile: &MockProfile) -> Self {
        let entries = exercises
            .iter()
            .filter(|e| e.has_options())
            .map(|e| {
                let u = hashing::unit_interval(&[&seed.to_le_bytes(), b"base", e.stem.as_bytes()]);
                let base = profile.base_low + (profile.base_high - profile.base_low) * u;
                (
                    e.stem.clone(),
                    SheetEntry {
                        key: e.key,
                        labels: e.labels(),
                        base,
                        category: e.category,
                    },
                )
            })
            .collect();
        Self { entries }
    }

    /// Base accuracy assigned to a stem.
    pub fn base(&self, stem: &str) -> Option<f64> {
        self.entries.get(stem).map(|e| e.base)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub struct MockBackend {
    seed: u64,
    templates: Arc<PromptTemplates>,
    sheet: AnswerSheet,
    profile: MockProfile,
    name: String,
}

fn draft_tag() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[draft subject=([+-]?\d) logic=([+-]?\d)\]").expect("static regex"))
}

fn summary_tag() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[summary partner_subject=([+-]?\d)").expect("static regex"))
}

enum Task {
    Draft,
    Summary,
    Answer { discussed: bool },
}

impl MockBackend {
    pub fn new(seed: u64, templates: Arc<PromptTemplates>, sheet: AnswerSheet, profile: MockProfile) -> Self {
        Self {
            seed,
            templates,
            sheet,
            profile,
            name: format!("mock:{seed}"),
        }
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }

    fn classify(&self, prompt: &str) -> Task {
        let m = &self.templates.markers;
        if prompt.contains(&format!("\n{}\n", m.partner_draft)) {
            Task::Summary
        } else if prompt.contains(&format!("\n{}\n", m.options)) {
            Task::Answer {
                discussed: prompt.contains(&format!("\n{}\n", m.summary)),
            }
        } else {
            Task::Draft
        }
    }

    /// Text before the question section: identity line plus persona.
    fn preamble<'a>(&self, prompt: &'a str) -> &'a str {
        let marker = format!("\n\n{} ", self.templates.markers.question);
        prompt.find(&marker).map_or(prompt, |i| &prompt[..i])
    }

    fn stem<'a>(&self, prompt: &'a str) -> Option<&'a str> {
        let marker = format!("\n\n{} ", self.templates.markers.question);
        let start = prompt.find(&marker)? + marker.len();
        let rest = &prompt[start..];
        let opts = format!("\n{}\n", self.templates.markers.options);
        let end = [rest.find(&opts), rest.find("\n\n")]
            .into_iter()
            .flatten()
            .min()?;
        Some(&rest[..end])
    }

    fn persona_axes(&self, preamble: &str) -> (i8, i8) {
        let t = &self.templates;
        let subject = [SubjectPref::Humanities, SubjectPref::None, SubjectPref::Stem]
            .into_iter()
            .find(|s| preamble.contains(t.subject_text(*s)))
            .map_or(0, SubjectPref::value);
        let logic = [LogicPref::Deductive, LogicPref::Intuitive, LogicPref::Inductive]
            .into_iter()
            .find(|l| preamble.contains(t.logic_text(*l)))
            .map_or(0, LogicPref::value);
        (subject, logic)
    }

    fn flavour(subject: i8, logic: i8) -> &'static str {
        match (subject, logic) {
            (1, _) => "Looking at the mechanism and the quantities involved,",
            (-1, _) => "Looking at the human and historical context,",
            (_, -1) => "Starting from the general principle,",
            (_, 1) => "Judging from similar cases I have seen,",
            _ => "On first impression,",
        }
    }

    fn draw(&self, identity: &str, stem: &str, params: &DecodeParams, salt: &[u8]) -> f64 {
        let sample = params.sample_seed.unwrap_or(0).to_le_bytes();
        hashing::unit_interval(&[
            &self.seed.to_le_bytes(),
            identity.as_bytes(),
            stem.as_bytes(),
            &sample,
            salt,
        ])
    }

    fn answer(&self, prompt: &str, params: &DecodeParams, discussed: bool) -> String {
        let preamble = self.preamble(prompt);
        let identity = preamble.lines().next().unwrap_or("");
        let (subject, logic) = self.persona_axes(preamble);
        let Some(stem) = self.stem(prompt) else {
            return "I cannot tell what is being asked.".into();
        };
        let Some(entry) = self.sheet.entries.get(stem) else {
            return "I am not able to settle on any of these.".into();
        };
        let affinity = match (subject, entry.category) {
            (1, Category::Stem) => 1.0,
            (-1, Category::SocialScience | Category::Humanities) => 1.0,
            _ => 0.0,
        };
        let complementary = if discussed {
            summary_tag()
                .captures(prompt)
                .and_then(|c| c[1].parse::<i8>().ok())
                .is_some_and(|partner| i32::from(partner) * i32::from(subject) < 0)
        } else {
            false
        };
        let p = (entry.base
            + self.profile.role_bonus * affinity
            + if complementary { self.profile.bonus } else { 0.0 })
        .clamp(0.0, 1.0);
        let u = self.draw(identity, stem, params, b"answer");
        let choice = if u < p {
            entry.key
        } else {
            let wrong: Vec<char> = entry.labels.iter().copied().filter(|&c| c != entry.key).collect();
            if wrong.is_empty() {
                entry.key
            } else {
                let k = (self.draw(identity, stem, params, b"wrong") * wrong.len() as f64) as usize;
                wrong[k.min(wrong.len() - 1)]
            }
        };
        let lead = if discussed {
            "Taking the discussion into account, I have settled my view."
        } else {
            "I have weighed the alternatives."
        };
        format!("{} {lead}\nAnswer: {choice}", Self::flavour(subject, logic))
    }

    fn draft(&self, prompt: &str) -> String {
        let (subject, logic) = self.persona_axes(self.preamble(prompt));
        format!(
            "[draft subject={subject:+} logic={logic:+}] {} the question turns on what is really being asked, and I would check it against what I already know.",
            Self::flavour(subject, logic)
        )
    }

    fn summary(&self, prompt: &str) -> String {
        let (subject, logic) = self.persona_axes(self.preamble(prompt));
        let marker = format!("\n{}\n", self.templates.markers.partner_draft);
        let partner_part = prompt.find(&marker).map_or("", |i| &prompt[i + marker.len()..]);
        let (ps, pl) = draft_tag()
            .captures(partner_part)
            .map(|c| (c[1].parse::<i8>().unwrap_or(0), c[2].parse::<i8>().unwrap_or(0)))
            .unwrap_or((0, 0));
        format!(
            "[summary partner_subject={ps:+} partner_logic={pl:+}] {} my partner's reading gives me another angle on the question.",
            Self::flavour(subject, logic)
        )
    }
}

impl CompletionBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<String, BackendError> {
        Ok(match self.classify(prompt) {
            Task::Draft => self.draft(prompt),
            Task::Summary => self.summary(prompt),
            Task::Answer { discussed } => self.answer(prompt, params, discussed),
        })
    }
}
