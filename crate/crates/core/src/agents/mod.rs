//! Persona-bearing learner agents, completion backends and the two
//! interaction protocols (learner–exercise and learner–learner).

mod backend;
mod parse;
mod prompts;
mod protocol;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    BackendError, CompletionBackend, DecodeParams, MockBackend, MockProfile, AnswerSheet,
    ReplayCache,
};
#[cfg(feature = "live")]
pub use backend::{LiveBackend, LiveConfig};
pub use parse::parse_choice;
pub use prompts::{PromptError, PromptTemplates};
pub use protocol::{strip_options, Protocol, TranscriptLine};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{axis} must be one of -1, 0, 1 (got {value})")]
    OutOfRange { axis: &'static str, value: i64 },
    #[error("learner {0} cannot be paired with itself")]
    SelfPairing(LearnerId),
    #[error("exercise {0} has no options to answer")]
    NoOptions(String),
    #[error("backend failure at protocol step {step}: {source}")]
    Transport {
        step: u8,
        #[source]
        source: BackendError,
    },
}

/// Subject preference axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubjectPref {
    /// Bias towards the social sciences and humanities (-1).
    Humanities,
    None,
    /// Bias towards STEM (+1).
    Stem,
}

/// Logical preference axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogicPref {
    /// -1
    Deductive,
    /// 0, no fixed chain of argument.
    Intuitive,
    /// +1
    Inductive,
}

impl SubjectPref {
    pub fn value(self) -> i8 {
        match self {
            SubjectPref::Humanities => -1,
            SubjectPref::None => 0,
            SubjectPref::Stem => 1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            -1 => Some(SubjectPref::Humanities),
            0 => Some(SubjectPref::None),
            1 => Some(SubjectPref::Stem),
            _ => None,
        }
    }
}

impl LogicPref {
    pub fn value(self) -> i8 {
        match self {
            LogicPref::Deductive => -1,
            LogicPref::Intuitive => 0,
            LogicPref::Inductive => 1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            -1 => Some(LogicPref::Deductive),
            0 => Some(LogicPref::Intuitive),
            1 => Some(LogicPref::Inductive),
            _ => None,
        }
    }
}

/// Two-axis cognitive profile of a learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Persona {
    pub subject: SubjectPref,
    pub logic: LogicPref,
}

impl Persona {
    /// Builds a persona from raw ternary values.
    pub fn new(subject_pref: i64, logic_pref: i64) -> Result<Self, AgentError> {
        let subject = SubjectPref::from_value(subject_pref).ok_or(AgentError::OutOfRange {
            axis: "subject_pref",
            value: subject_pref,
        })?;
        let logic = LogicPref::from_value(logic_pref).ok_or(AgentError::OutOfRange {
            axis: "logic_pref",
            value: logic_pref,
        })?;
        Ok(Self { subject, logic })
    }

    /// All nine personas sorted by `(subject_pref, logic_pref)`.
    pub fn enumerate() -> Vec<Persona> {
        let mut out = Vec::with_capacity(9);
        for s in -1..=1 {
            for l in -1..=1 {
                out.push(Persona::new(s, l).expect("ternary grid"));
            }
        }
        out
    }

    /// `true` iff the subject preferences are opposite-signed.
    pub fn complements(&self, other: &Persona) -> bool {
        i32::from(self.subject.value()) * i32::from(other.subject.value()) < 0
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:+}, {:+})", self.subject.value(), self.logic.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearnerId(pub u32);

impl fmt::Display for LearnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An agent with an optional assigned persona. Agents without a persona
/// answer with the neutral prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Learner {
    pub id: LearnerId,
    pub persona: Option<Persona>,
}

impl Learner {
    pub fn new(id: u32, persona: Persona) -> Self {
        Self {
            id: LearnerId(id),
            persona: Some(persona),
        }
    }

    pub fn without_role(id: u32) -> Self {
        Self {
            id: LearnerId(id),
            persona: None,
        }
    }
}

/// One learner per persona, ids `0..9` in persona order.
pub fn default_cohort() -> Vec<Learner> {
    Persona::enumerate()
        .into_iter()
        .enumerate()
        .map(|(i, p)| Learner::new(i as u32, p))
        .collect()
}

/// Outcome of a learner answering one exercise alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub learner_id: LearnerId,
    pub exercise_id: String,
    /// `None` when no option label could be extracted.
    pub chosen_option: Option<char>,
    pub response_text: String,
    pub score: u8,
    pub prompt_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Draft,
    Exchange,
    Summary,
    Answer,
}

/// One agent's contribution to a protocol step. Exchange entries have an
/// empty prompt and carry the draft the agent received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEntry {
    pub agent_id: LearnerId,
    pub prompt: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub step: u8,
    pub kind: StepKind,
    pub entries: Vec<StepEntry>,
}

/// Outcome of the four-step discussion between a learner and a partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedResponseRecord {
    pub learner_id: LearnerId,
    pub partner_id: LearnerId,
    pub exercise_id: String,
    /// Learner's and partner's option-free drafts.
    pub step1_texts: [String; 2],
    pub summary_text: String,
    pub final_choice: Option<char>,
    pub final_text: String,
    pub score: u8,
    pub decode: DecodeParams,
    pub transcript: Vec<TranscriptStep>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persona_construction() {
        let p = Persona::new(1, -1).unwrap();
        assert_eq!(p.subject, SubjectPref::Stem);
        assert_eq!(p.logic, LogicPref::Deductive);
        let p = Persona::new(0, 0).unwrap();
        assert_eq!((p.subject, p.logic), (SubjectPref::None, LogicPref::Intuitive));
        match Persona::new(2, 0) {
            Err(AgentError::OutOfRange { axis, value }) => {
                assert_eq!(axis, "subject_pref");
                assert_eq!(value, 2);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Persona::new(0, -3),
            Err(AgentError::OutOfRange { axis: "logic_pref", .. })
        ));
    }

    #[test]
    fn nine_sorted_personas() {
        let all = Persona::enumerate();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], Persona::new(-1, -1).unwrap());
        let mut sorted = all.clone();
        sorted.sort_by_key(|p| (p.subject.value(), p.logic.value()));
        sorted.dedup();
        assert_eq!(sorted, all);
    }

    #[test]
    fn complementarity_needs_opposite_signs() {
        let stem = Persona::new(1, 0).unwrap();
        let hum = Persona::new(-1, 1).unwrap();
        let none = Persona::new(0, 1).unwrap();
        assert!(stem.complements(&hum));
        assert!(hum.complements(&stem));
        assert!(!stem.complements(&none));
        assert!(!stem.complements(&stem));
    }
}
