use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    parse_choice, AgentError, CompletionBackend, DecodeParams, Learner, LearnerId,
    PairedResponseRecord, PromptTemplates, ResponseRecord, StepEntry, StepKind, TranscriptStep,
};
use crate::corpus::Exercise;
use crate::hashing;

/// Copy of `e` without options. Already option-free input comes back unchanged.
pub fn strip_options(e: &Exercise) -> Exercise {
    Exercise {
        options: Vec::new(),
        ..e.clone()
    }
}

pub(crate) fn prompt_hash(prompt: &str) -> String {
    hashing::content_hash(&[prompt.as_bytes()])
}

/// Runs the solo and paired answering protocols against one backend.
#[derive(Clone)]
pub struct Protocol {
    templates: Arc<PromptTemplates>,
    backend: Arc<dyn CompletionBackend>,
    decode: DecodeParams,
}

impl Protocol {
    pub fn new(templates: Arc<PromptTemplates>, backend: Arc<dyn CompletionBackend>, decode: DecodeParams) -> Self {
        Self {
            templates,
            backend,
            decode,
        }
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    pub fn decode(&self) -> &DecodeParams {
        &self.decode
    }

    /// Same protocol with different decode parameters (e.g. a sampling seed).
    pub fn with_decode(&self, decode: DecodeParams) -> Self {
        Self {
            decode,
            ..self.clone()
        }
    }

    fn call(&self, step: u8, prompt: &str) -> Result<String, AgentError> {
        self.backend
            .complete(prompt, &self.decode)
            .map_err(|source| AgentError::Transport { step, source })
    }

    /// The learner answers `e` alone, options visible.
    pub fn solve_exercise(&self, learner: &Learner, e: &Exercise) -> Result<ResponseRecord, AgentError> {
        if !e.has_options() {
            return Err(AgentError::NoOptions(e.id.clone()));
        }
        let system = self.templates.system_prompt(learner);
        let prompt = self.templates.solo_prompt(&system, e);
        let reply = self.call(0, &prompt)?;
        let chosen = parse_choice(&reply, &e.labels());
        Ok(ResponseRecord {
            learner_id: learner.id,
            exercise_id: e.id.clone(),
            chosen_option: chosen,
            score: u8::from(chosen == Some(e.key)),
            response_text: reply,
            prompt_hash: prompt_hash(&prompt),
        })
    }

    /// Four-step discussion: both draft on the option-free stem, drafts are
    /// swapped, the learner summarises the partner's draft through its own
    /// persona, then re-answers with options and the summary. Only the
    /// learner is scored.
    pub fn exchange_and_resolve(
        &self,
        learner: &Learner,
        partner: &Learner,
        e: &Exercise,
    ) -> Result<PairedResponseRecord, AgentError> {
        if learner.id == partner.id {
            return Err(AgentError::SelfPairing(learner.id));
        }
        if !e.has_options() {
            return Err(AgentError::NoOptions(e.id.clone()));
        }
        let t = &self.templates;
        let stripped = strip_options(e);
        let sys_l = t.system_prompt(learner);
        let sys_p = t.system_prompt(partner);

        let draft_prompt_l = t.draft_prompt(&sys_l, &stripped);
        let draft_prompt_p = t.draft_prompt(&sys_p, &stripped);
        let draft_l = self.call(1, &draft_prompt_l)?;
        let draft_p = self.call(1, &draft_prompt_p)?;

        let summary_prompt = t.summary_prompt(&sys_l, &stripped, &draft_l, &draft_p);
        let summary = self.call(3, &summary_prompt)?;

        let final_prompt = t.final_prompt(&sys_l, e, &summary);
        let final_text = self.call(4, &final_prompt)?;
        let final_choice = parse_choice(&final_text, &e.labels());

        let transcript = vec![
            TranscriptStep {
                step: 1,
                kind: StepKind::Draft,
                entries: vec![
                    StepEntry {
                        agent_id: learner.id,
                        prompt: draft_prompt_l,
                        reply: draft_l.clone(),
                    },
                    StepEntry {
                        agent_id: partner.id,
                        prompt: draft_prompt_p,
                        reply: draft_p.clone(),
                    },
                ],
            },
            TranscriptStep {
                step: 2,
                kind: StepKind::Exchange,
                entries: vec![
                    StepEntry {
                        agent_id: learner.id,
                        prompt: String::new(),
                        reply: draft_p.clone(),
                    },
                    StepEntry {
                        agent_id: partner.id,
                        prompt: String::new(),
                        reply: draft_l.clone(),
                    },
                ],
            },
            TranscriptStep {
                step: 3,
                kind: StepKind::Summary,
                entries: vec![StepEntry {
                    agent_id: learner.id,
                    prompt: summary_prompt,
                    reply: summary.clone(),
                }],
            },
            TranscriptStep {
                step: 4,
                kind: StepKind::Answer,
                entries: vec![StepEntry {
                    agent_id: learner.id,
                    prompt: final_prompt,
                    reply: final_text.clone(),
                }],
            },
        ];

        Ok(PairedResponseRecord {
            learner_id: learner.id,
            partner_id: partner.id,
            exercise_id: e.id.clone(),
            step1_texts: [draft_l, draft_p],
            summary_text: summary,
            final_choice,
            final_text,
            score: u8::from(final_choice == Some(e.key)),
            decode: self.decode.clone(),
            transcript,
        })
    }
}

/// One line of the transcript log. Step 0 is a solo answer; steps 1..=4 are
/// the discussion protocol (step 2 has no prompt).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub run_id: String,
    pub step: u8,
    pub learner_id: LearnerId,
    pub partner_id: Option<LearnerId>,
    pub exercise_id: String,
    pub prompt_hash: Option<String>,
    pub reply: String,
}

impl TranscriptLine {
    pub fn from_solo(run_id: &str, r: &ResponseRecord) -> Self {
        Self {
            run_id: run_id.to_string(),
            step: 0,
            learner_id: r.learner_id,
            partner_id: None,
            exercise_id: r.exercise_id.clone(),
            prompt_hash: Some(r.prompt_hash.clone()),
            reply: r.response_text.clone(),
        }
    }

    pub fn from_paired(run_id: &str, r: &PairedResponseRecord) -> Vec<Self> {
        r.transcript
            .iter()
            .flat_map(|step| {
                step.entries.iter().map(move |entry| Self {
                    run_id: run_id.to_string(),
                    step: step.step,
                    learner_id: entry.agent_id,
                    partner_id: Some(if entry.agent_id == r.learner_id {
                        r.partner_id
                    } else {
                        r.learner_id
                    }),
                    exercise_id: r.exercise_id.clone(),
                    prompt_hash: (!entry.prompt.is_empty()).then(|| prompt_hash(&entry.prompt)),
                    reply: entry.reply.clone(),
                })
            })
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("transcript line serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{BackendError, Persona};
    use crate::corpus::synthetic_corpus;

    fn scripted(answer: &'static str) -> Arc<dyn CompletionBackend> {
        Arc::new(move |prompt: &str, _: &DecodeParams| {
            Ok::<_, BackendError>(if prompt.contains("\nOptions:\n") {
                answer.to_string()
            } else {
                "some thoughts".to_string()
            })
        })
    }

    fn exercise_with_key(key: char) -> Exercise {
        let mut e = synthetic_corpus(&[("logical", 1)], 0).remove(0);
        e.key = key;
        e
    }

    fn protocol(backend: Arc<dyn CompletionBackend>) -> Protocol {
        Protocol::new(Arc::new(PromptTemplates::default()), backend, DecodeParams::default())
    }

    #[test]
    fn solo_scoring_follows_the_key() {
        let e = exercise_with_key('B');
        let l = Learner::new(0, Persona::new(1, -1).unwrap());
        let right = protocol(scripted("Answer: B")).solve_exercise(&l, &e).unwrap();
        assert_eq!((right.chosen_option, right.score), (Some('B'), 1));
        let wrong = protocol(scripted("Answer: C")).solve_exercise(&l, &e).unwrap();
        assert_eq!((wrong.chosen_option, wrong.score), (Some('C'), 0));
        assert!(!wrong.response_text.is_empty());
        let unsure = protocol(scripted("hard to say")).solve_exercise(&l, &e).unwrap();
        assert_eq!((unsure.chosen_option, unsure.score), (None, 0));
    }

    #[test]
    fn solo_prompt_has_persona_stem_and_options() {
        let e = exercise_with_key('A');
        let seen = Arc::new(std::sync::Mutex::new(String::new()));
        let sink = seen.clone();
        let backend: Arc<dyn CompletionBackend> = Arc::new(move |p: &str, _: &DecodeParams| {
            *sink.lock().unwrap() = p.to_string();
            Ok::<_, BackendError>("Answer: A".to_string())
        });
        let t = PromptTemplates::default();
        let l = Learner::new(3, Persona::new(-1, 1).unwrap());
        protocol(backend).solve_exercise(&l, &e).unwrap();
        let p = seen.lock().unwrap().clone();
        assert!(p.starts_with(&t.system_prompt(&l)));
        assert!(p.contains(&e.stem));
        for o in &e.options {
            assert!(p.contains(&o.text));
        }
    }

    #[test]
    fn strip_is_idempotent_and_keeps_identity() {
        let e = exercise_with_key('A');
        let s = strip_options(&e);
        assert!(s.options.is_empty());
        assert_eq!((s.id.as_str(), s.stem.as_str(), s.domain.as_str()), (e.id.as_str(), e.stem.as_str(), e.domain.as_str()));
        assert_eq!(strip_options(&s), s);
        assert_eq!(e.options.len(), 4);
    }

    #[test]
    fn four_steps_without_option_leakage() {
        let e = exercise_with_key('D');
        let l = Learner::new(0, Persona::new(1, 1).unwrap());
        let p = Learner::new(1, Persona::new(-1, 0).unwrap());
        let rec = protocol(scripted("The answer is D")).exchange_and_resolve(&l, &p, &e).unwrap();
        let steps: Vec<u8> = rec.transcript.iter().map(|s| s.step).collect();
        assert_eq!(steps, [1, 2, 3, 4]);
        assert_eq!(rec.score, 1);
        for step in rec.transcript.iter().filter(|s| s.step < 4) {
            for entry in &step.entries {
                for o in &e.options {
                    assert!(!entry.prompt.contains(&o.text), "step {} leaks {}", step.step, o.text);
                }
            }
        }
        let last = &rec.transcript[3].entries[0].prompt;
        assert!(e.options.iter().all(|o| last.contains(&o.text)));
        assert!(last.contains(&rec.summary_text));
        let lines = TranscriptLine::from_paired("r", &rec);
        assert_eq!(lines.len(), 6);
        assert!(lines.iter().filter(|l| l.step == 2).all(|l| l.prompt_hash.is_none()));
    }

    #[test]
    fn self_pairing_and_transport_failures() {
        let e = exercise_with_key('A');
        let l = Learner::new(0, Persona::new(1, 1).unwrap());
        assert!(matches!(
            protocol(scripted("A")).exchange_and_resolve(&l, &l, &e),
            Err(AgentError::SelfPairing(_))
        ));
        let failing: Arc<dyn CompletionBackend> = Arc::new(|p: &str, _: &DecodeParams| {
            if p.contains("Summary of the discussion:") {
                Err(BackendError::Transport("down".into()))
            } else {
                Ok("fine".to_string())
            }
        });
        let p = Learner::new(1, Persona::new(0, 0).unwrap());
        match protocol(failing).exchange_and_resolve(&l, &p, &e) {
            Err(AgentError::Transport { step, .. }) => assert_eq!(step, 4),
            other => panic!("{other:?}"),
        }
    }
}
