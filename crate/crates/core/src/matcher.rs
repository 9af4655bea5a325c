//! Score vectors, Pareto dominance, Global/Local fronts and partner
//! selection by predicted collaboration gain.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::agents::{Learner, LearnerId, PairedResponseRecord, ResponseRecord};
use crate::corpus::ExerciseBlock;
use crate::features::{domain_vector, sample_vector, EmbeddingProvider, FeatureError};
use crate::regressor::{Prediction, Predictor, RegressorError};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("learner {learner} has no records for {missing:?} in `{domain}`")]
    Coverage {
        learner: LearnerId,
        domain: String,
        missing: Vec<String>,
    },
    #[error("score vectors cover different domains: {0:?} vs {1:?}")]
    DomainMismatch(Vec<String>, Vec<String>),
    #[error("score {value} for `{domain}` is outside [0, 1]")]
    OutOfRange { domain: String, value: f64 },
    #[error("no candidates left for learner {0} after excluding it")]
    EmptyCandidates(LearnerId),
    #[error("front member {0} is not in the cohort")]
    UnknownLearner(LearnerId),
    #[error("non-finite predicted score for partner {0}")]
    NonFinite(LearnerId),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Regressor(#[from] RegressorError),
}

/// Per-domain accuracies of one learner over a fixed, ordered domain set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub learner_id: LearnerId,
    domains: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(learner_id: LearnerId, entries: Vec<(String, f64)>) -> Result<Self, MatchError> {
        for (domain, v) in &entries {
            if !(0.0..=1.0).contains(v) {
                return Err(MatchError::OutOfRange {
                    domain: domain.clone(),
                    value: *v,
                });
            }
        }
        let (domains, scores) = entries.into_iter().unzip();
        Ok(Self {
            learner_id,
            domains,
            scores,
        })
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn get(&self, domain: &str) -> Option<f64> {
        self.domains.iter().position(|d| d == domain).map(|i| self.scores[i])
    }

    pub fn as_map(&self) -> BTreeMap<String, f64> {
        self.domains.iter().cloned().zip(self.scores.iter().copied()).collect()
    }
}

/// Mean solo score of `learner` per block.
pub fn score_vector(learner: LearnerId, solo: &[ResponseRecord], blocks: &[ExerciseBlock]) -> Result<ScoreVector, MatchError> {
    let by_exercise: HashMap<&str, u8> = solo
        .iter()
        .filter(|r| r.learner_id == learner)
        .map(|r| (r.exercise_id.as_str(), r.score))
        .collect();
    let mut entries = Vec::with_capacity(blocks.len());
    for b in blocks {
        let mut missing = Vec::new();
        let mut total = 0u32;
        for e in b.exercises() {
            match by_exercise.get(e.id.as_str()) {
                Some(&s) => total += u32::from(s),
                None => missing.push(e.id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(MatchError::Coverage {
                learner,
                domain: b.domain().to_string(),
                missing,
            });
        }
        entries.push((b.domain().to_string(), f64::from(total) / b.len() as f64));
    }
    ScoreVector::new(learner, entries)
}

/// `a ≥ b` in every domain and `a > b` in at least one.
pub fn dominates(a: &ScoreVector, b: &ScoreVector) -> Result<bool, MatchError> {
    if a.domains != b.domains {
        return Err(MatchError::DomainMismatch(a.domains.clone(), b.domains.clone()));
    }
    Ok(dominates_unchecked(&a.scores, &b.scores))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        strict |= x > y;
    }
    strict
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrontMode {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub mode: FrontMode,
    pub anchor: LearnerId,
    /// Non-dominated candidates in ascending id order.
    pub members: Vec<ScoreVector>,
}

impl ParetoFront {
    pub fn member_ids(&self) -> Vec<LearnerId> {
        self.members.iter().map(|m| m.learner_id).collect()
    }
}

/// Non-dominated subset of `candidates` after removing `anchor`.
///
/// Candidates are visited by descending score sum, so a point can only be
/// dominated by one already archived; accepted points also evict any archived
/// point they dominate, which covers sums that tie under rounding.
pub fn pareto_front(candidates: &[ScoreVector], anchor: LearnerId, mode: FrontMode) -> Result<ParetoFront, MatchError> {
    let pool: Vec<&ScoreVector> = candidates.iter().filter(|c| c.learner_id != anchor).collect();
    let first = pool.first().ok_or(MatchError::EmptyCandidates(anchor))?;
    if let Some(bad) = pool.iter().find(|c| c.domains != first.domains) {
        return Err(MatchError::DomainMismatch(first.domains.clone(), bad.domains.clone()));
    }
    let sums: Vec<f64> = pool.iter().map(|c| c.scores.iter().sum()).collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&i, &j| sums[j].total_cmp(&sums[i]).then(pool[i].learner_id.cmp(&pool[j].learner_id)));
    let mut archive: Vec<usize> = Vec::new();
    for i in order {
        let c = &pool[i].scores;
        if archive.iter().any(|&a| dominates_unchecked(&pool[a].scores, c)) {
            continue;
        }
        archive.retain(|&a| !dominates_unchecked(c, &pool[a].scores));
        archive.push(i);
    }
    let mut members: Vec<ScoreVector> = archive.into_iter().map(|i| pool[i].clone()).collect();
    members.sort_by_key(|m| m.learner_id);
    Ok(ParetoFront { mode, anchor, members })
}

/// For each past partner of `learner`, the learner's paired accuracy with
/// that partner per block. Partners without a record in every block are
/// left out.
pub fn local_candidates(learner: LearnerId, history: &[PairedResponseRecord], blocks: &[ExerciseBlock]) -> Vec<ScoreVector> {
    let block_of: HashMap<&str, usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| b.exercises().iter().map(move |e| (e.id.as_str(), i)))
        .collect();
    let mut tallies: BTreeMap<LearnerId, Vec<(u32, u32)>> = BTreeMap::new();
    for r in history.iter().filter(|r| r.learner_id == learner) {
        let Some(&b) = block_of.get(r.exercise_id.as_str()) else { continue };
        let t = tallies.entry(r.partner_id).or_insert_with(|| vec![(0, 0); blocks.len()]);
        t[b].0 += u32::from(r.score);
        t[b].1 += 1;
    }
    tallies
        .into_iter()
        .filter(|(_, t)| t.iter().all(|&(_, n)| n > 0))
        .map(|(partner, t)| {
            let entries = blocks
                .iter()
                .zip(t)
                .map(|(b, (c, n))| (b.domain().to_string(), f64::from(c) / f64::from(n)))
                .collect();
            ScoreVector::new(partner, entries).expect("accuracies lie in [0, 1]")
        })
        .collect()
}

/// How a front member's prediction is turned into a selection score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Largest posterior mean.
    #[default]
    MeanArgmax,
    /// Largest probability of positive gain, `Φ(μ/σ)`.
    ProbabilityOfImprovement,
}

impl SelectionRule {
    pub fn score(self, p: &Prediction) -> f64 {
        match self {
            SelectionRule::MeanArgmax => p.mean,
            SelectionRule::ProbabilityOfImprovement => {
                if p.variance > 0.0 {
                    let z = p.mean / p.variance.sqrt();
                    Normal::standard().cdf(z)
                } else if p.mean > 0.0 {
                    1.0
                } else if p.mean < 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub learner_id: LearnerId,
    pub prediction: Prediction,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub learner_id: LearnerId,
    pub partner_id: LearnerId,
    pub candidates: Vec<ScoredCandidate>,
}

/// Index of the highest score, smallest id on ties.
pub fn argmax_smallest_id(scored: &[(LearnerId, f64)]) -> Option<LearnerId> {
    let mut best: Option<(LearnerId, f64)> = None;
    for &(id, s) in scored {
        match best {
            Some((bid, bs)) if s < bs || (s == bs && id > bid) => {}
            _ => best = Some((id, s)),
        }
    }
    best.map(|b| b.0)
}

/// Picks the front member with the best predicted gain for `learner` on a
/// block whose embedding is `domain_vec`.
pub fn select_partner_with_domain(
    learner: &Learner,
    front: &ParetoFront,
    cohort: &[Learner],
    model: &dyn Predictor,
    domain_vec: &[f64],
    rule: SelectionRule,
) -> Result<Selection, MatchError> {
    let mut candidates = Vec::new();
    for m in front.members.iter().filter(|m| m.learner_id != learner.id) {
        let partner = cohort
            .iter()
            .find(|c| c.id == m.learner_id)
            .ok_or(MatchError::UnknownLearner(m.learner_id))?;
        let x = sample_vector(learner, partner, domain_vec)?;
        let prediction = model.predict(&x)?;
        let score = rule.score(&prediction);
        if !score.is_finite() {
            return Err(MatchError::NonFinite(m.learner_id));
        }
        candidates.push(ScoredCandidate {
            learner_id: m.learner_id,
            prediction,
            score,
        });
    }
    let scored: Vec<(LearnerId, f64)> = candidates.iter().map(|c| (c.learner_id, c.score)).collect();
    let partner_id = argmax_smallest_id(&scored).ok_or(MatchError::EmptyCandidates(learner.id))?;
    Ok(Selection {
        learner_id: learner.id,
        partner_id,
        candidates,
    })
}

pub fn select_partner(
    learner: &Learner,
    front: &ParetoFront,
    cohort: &[Learner],
    model: &dyn Predictor,
    block: &ExerciseBlock,
    emb: &dyn EmbeddingProvider,
    rule: SelectionRule,
) -> Result<Selection, MatchError> {
    let dv = domain_vector(block, emb)?;
    select_partner_with_domain(learner, front, cohort, model, &dv, rule)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontMemberDump {
    pub learner_id: LearnerId,
    pub scores: BTreeMap<String, f64>,
    pub prediction: Option<Prediction>,
}

/// Serializable view of one front and the selection made from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontDump {
    pub mode: FrontMode,
    pub anchor: LearnerId,
    pub domain: String,
    /// True when a Local front had no history and the Global one was used.
    pub fallback: bool,
    pub members: Vec<FrontMemberDump>,
    pub selected: LearnerId,
}

impl FrontDump {
    pub fn new(front: &ParetoFront, domain: &str, fallback: bool, selection: &Selection) -> Self {
        let members = front
            .members
            .iter()
            .map(|m| FrontMemberDump {
                learner_id: m.learner_id,
                scores: m.as_map(),
                prediction: selection
                    .candidates
                    .iter()
                    .find(|c| c.learner_id == m.learner_id)
                    .map(|c| c.prediction),
            })
            .collect();
        Self {
            mode: front.mode,
            anchor: front.anchor,
            domain: domain.to_string(),
            fallback,
            members,
            selected: selection.partner_id,
        }
    }
}
