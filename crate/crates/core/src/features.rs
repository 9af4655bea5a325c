//! Sample construction for the gain regressor: learner short vectors,
//! embedded domain blocks and block-normalised collaboration gains.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Learner, LearnerId, PairedResponseRecord, Persona, ResponseRecord};
use crate::corpus::ExerciseBlock;
use crate::exec::Execution;
use crate::hashing;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("learner {0} cannot be paired with itself")]
    SelfPair(LearnerId),
    #[error("embedding failed for exercise {exercise}: {message}")]
    Embedding { exercise: String, message: String },
    #[error("records for learner {learner} (partner {partner:?}) in `{domain}` are missing exercises: {missing:?}")]
    Coverage {
        learner: LearnerId,
        partner: Option<LearnerId>,
        domain: String,
        missing: Vec<String>,
    },
    #[error("duplicate record for exercise {0}")]
    Duplicate(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Text embedding service. Implementations must be deterministic and safe
/// to call from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, String>;
}

/// Offline fallback embedder: signed feature hashing of character 1- to
/// 3-grams into `dim` buckets, L2-normalised.
///
/// Distinct texts collide only if their signed n-gram counts land on the same
/// bucket vector. For unrelated texts of a few dozen characters the chance of
/// exact equality is negligible (it requires every bucket sum to agree), but
/// texts that differ only by n-gram reordering with identical multisets map
/// to identical vectors by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 32, seed: 0 }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, String> {
        let mut v = vec![0.0; self.dim];
        let chars: Vec<char> = std::iter::once('\u{2}')
            .chain(text.chars())
            .chain(std::iter::once('\u{3}'))
            .collect();
        let mut buf = String::new();
        for n in 1..=3 {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                let h = hashing::fnv1a(self.seed.wrapping_add(n as u64), buf.as_bytes());
                let bucket = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
                v[bucket] += sign;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// `[subject_pref, logic_pref]` as reals.
pub fn learner_short_vector(p: &Persona) -> [f64; 2] {
    [f64::from(p.subject.value()), f64::from(p.logic.value())]
}

fn short_of(l: &Learner) -> [f64; 2] {
    l.persona.as_ref().map_or([0.0, 0.0], learner_short_vector)
}

/// Mean of the stem embeddings over the block.
pub fn domain_vector(block: &ExerciseBlock, emb: &dyn EmbeddingProvider) -> Result<Vec<f64>, FeatureError> {
    let mut acc = vec![0.0; emb.dimension()];
    for e in block.exercises() {
        let v = emb.embed(&e.stem).map_err(|message| FeatureError::Embedding {
            exercise: e.id.clone(),
            message,
        })?;
        if v.len() != acc.len() || v.iter().any(|x| !x.is_finite()) {
            return Err(FeatureError::Embedding {
                exercise: e.id.clone(),
                message: format!("expected {} finite values, got {}", acc.len(), v.len()),
            });
        }
        acc.iter_mut().zip(&v).for_each(|(a, x)| *a += x);
    }
    let n = block.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// `short(l) ⊕ short(partner) ⊕ domain_vec`.
pub fn sample_vector(learner: &Learner, partner: &Learner, domain_vec: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if learner.id == partner.id {
        return Err(FeatureError::SelfPair(learner.id));
    }
    let mut x = Vec::with_capacity(4 + domain_vec.len());
    x.extend(short_of(learner));
    x.extend(short_of(partner));
    x.extend_from_slice(domain_vec);
    Ok(x)
}

pub fn build_sample_vector(
    learner: &Learner,
    partner: &Learner,
    block: &ExerciseBlock,
    emb: &dyn EmbeddingProvider,
) -> Result<Vec<f64>, FeatureError> {
    if learner.id == partner.id {
        return Err(FeatureError::SelfPair(learner.id));
    }
    sample_vector(learner, partner, &domain_vector(block, emb)?)
}

/// Whose solo score is subtracted from the paired score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainBaseline {
    /// The learner's own independent score (gain semantics).
    #[default]
    Learner,
    /// The partner's independent score (literal subscript reading).
    Partner,
}

/// Score lookups over record sets.
pub struct RecordIndex<'a> {
    paired: HashMap<(LearnerId, LearnerId), HashMap<&'a str, Vec<u8>>>,
    solo: HashMap<LearnerId, HashMap<&'a str, Vec<u8>>>,
}

impl<'a> RecordIndex<'a> {
    pub fn new(paired: &'a [PairedResponseRecord], solo: &'a [ResponseRecord]) -> Self {
        let mut p: HashMap<_, HashMap<&str, Vec<u8>>> = HashMap::new();
        for r in paired {
            p.entry((r.learner_id, r.partner_id))
                .or_default()
                .entry(r.exercise_id.as_str())
                .or_default()
                .push(r.score);
        }
        let mut s: HashMap<_, HashMap<&str, Vec<u8>>> = HashMap::new();
        for r in solo {
            s.entry(r.learner_id)
                .or_default()
                .entry(r.exercise_id.as_str())
                .or_default()
                .push(r.score);
        }
        Self { paired: p, solo: s }
    }

    fn block_total(
        scores: Option<&HashMap<&str, Vec<u8>>>,
        block: &ExerciseBlock,
        learner: LearnerId,
        partner: Option<LearnerId>,
    ) -> Result<u32, FeatureError> {
        let mut missing = Vec::new();
        let mut total = 0u32;
        for e in block.exercises() {
            match scores.and_then(|m| m.get(e.id.as_str())) {
                Some(v) if v.len() == 1 => total += u32::from(v[0]),
                Some(_) => return Err(FeatureError::Duplicate(e.id.clone())),
                None => missing.push(e.id.clone()),
            }
        }
        if missing.is_empty() {
            Ok(total)
        } else {
            Err(FeatureError::Coverage {
                learner,
                partner,
                domain: block.domain().to_string(),
                missing,
            })
        }
    }

    /// Sum of paired scores of `learner` with `partner` over the block.
    pub fn paired_total(&self, learner: LearnerId, partner: LearnerId, block: &ExerciseBlock) -> Result<u32, FeatureError> {
        Self::block_total(self.paired.get(&(learner, partner)), block, learner, Some(partner))
    }

    /// Sum of solo scores of `learner` over the block.
    pub fn solo_total(&self, learner: LearnerId, block: &ExerciseBlock) -> Result<u32, FeatureError> {
        Self::block_total(self.solo.get(&learner), block, learner, None)
    }

    pub fn gain(
        &self,
        learner: LearnerId,
        partner: LearnerId,
        block: &ExerciseBlock,
        baseline: GainBaseline,
    ) -> Result<f64, FeatureError> {
        let paired = self.paired_total(learner, partner, block)?;
        let reference = match baseline {
            GainBaseline::Learner => learner,
            GainBaseline::Partner => partner,
        };
        let solo = self.solo_total(reference, block)?;
        Ok((f64::from(paired) - f64::from(solo)) / block.len() as f64)
    }
}

/// Collaboration gain of `learner` with `partner` on a block:
/// `(Σ paired − Σ solo) / |d|`.
pub fn pair_gain(
    learner: &Learner,
    partner: &Learner,
    block: &ExerciseBlock,
    paired: &[PairedResponseRecord],
    solo: &[ResponseRecord],
    baseline: GainBaseline,
) -> Result<f64, FeatureError> {
    RecordIndex::new(paired, solo).gain(learner.id, partner.id, block, baseline)
}

/// One regression sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub learner_id: LearnerId,
    pub partner_id: LearnerId,
    pub domain: String,
}

/// One sample per ordered learner pair per block, sorted by
/// `(learner, partner, domain)`.
pub fn build_dataset(
    cohort: &[Learner],
    blocks: &[ExerciseBlock],
    paired: &[PairedResponseRecord],
    solo: &[ResponseRecord],
    emb: &dyn EmbeddingProvider,
    baseline: GainBaseline,
    exec: Execution,
) -> Result<Vec<Sample>, FeatureError> {
    let domain_vecs = blocks
        .iter()
        .map(|b| domain_vector(b, emb))
        .collect::<Result<Vec<_>, _>>()?;
    let index = RecordIndex::new(paired, solo);
    let mut jobs = Vec::new();
    for l in cohort {
        for p in cohort.iter().filter(|p| p.id != l.id) {
            for b in 0..blocks.len() {
                jobs.push((l, p, b));
            }
        }
    }
    let mut samples = exec.try_map(&jobs, |&(l, p, b)| {
        let y = index.gain(l.id, p.id, &blocks[b], baseline)?;
        let x = sample_vector(l, p, &domain_vecs[b])?;
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite("sample"));
        }
        Ok(Sample {
            x,
            y,
            learner_id: l.id,
            partner_id: p.id,
            domain: blocks[b].domain().to_string(),
        })
    })?;
    samples.sort_by(|a, b| {
        (a.learner_id, a.partner_id, &a.domain).cmp(&(b.learner_id, b.partner_id, &b.domain))
    });
    Ok(samples)
}

/// Writes `l_id,ℓ_id,domain,y,x_0..x_{3+D_e}`.
pub fn write_dataset<W: Write>(samples: &[Sample], writer: W) -> Result<(), FeatureError> {
    let width = samples.first().map_or(4, |s| s.x.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["l_id".to_string(), "ℓ_id".into(), "domain".into(), "y".into()];
    header.extend((0..width).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.learner_id.to_string(), s.partner_id.to_string(), s.domain.clone(), s.y.to_string()];
        row.extend(s.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Embedding dimension implied by a dataset header.
pub fn dataset_embedding_dim(header: &str) -> usize {
    header.split(',').filter(|c| c.starts_with("x_")).count().saturating_sub(4)
}

/// Distinct domains represented in a dataset.
pub fn dataset_domains(samples: &[Sample]) -> BTreeSet<&str> {
    samples.iter().map(|s| s.domain.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{DecodeParams, StepEntry};
    use crate::corpus::{synthetic_corpus, Exercise};

    fn block(n: usize) -> ExerciseBlock {
        ExerciseBlock::new(synthetic_corpus(&[("arts", n)], 4)).unwrap()
    }

    fn solo(l: u32, e: &Exercise, score: u8) -> ResponseRecord {
        ResponseRecord {
            learner_id: LearnerId(l),
            exercise_id: e.id.clone(),
            chosen_option: None,
            response_text: String::new(),
            score,
            prompt_hash: String::new(),
        }
    }

    fn paired(l: u32, p: u32, e: &Exercise, score: u8) -> PairedResponseRecord {
        PairedResponseRecord {
            learner_id: LearnerId(l),
            partner_id: LearnerId(p),
            exercise_id: e.id.clone(),
            step1_texts: [String::new(), String::new()],
            summary_text: String::new(),
            final_choice: None,
            final_text: String::new(),
            score,
            decode: DecodeParams::default(),
            transcript: vec![crate::agents::TranscriptStep {
                step: 1,
                kind: crate::agents::StepKind::Draft,
                entries: vec![StepEntry {
                    agent_id: LearnerId(l),
                    prompt: String::new(),
                    reply: String::new(),
                }],
            }],
        }
    }

    #[test]
    fn short_vectors() {
        assert_eq!(learner_short_vector(&Persona::new(1, -1).unwrap()), [1.0, -1.0]);
        assert_eq!(learner_short_vector(&Persona::new(0, 0).unwrap()), [0.0, 0.0]);
        let all: BTreeSet<[i64; 2]> = Persona::enumerate()
            .iter()
            .map(|p| learner_short_vector(p).map(|v| v as i64))
            .collect();
        assert_eq!(all.len(), 9);
    }

    #[test]
    fn embedder_is_deterministic_normalised_and_fixed_width() {
        let emb = HashingEmbedder::default();
        let a = emb.embed("which statement holds?").unwrap();
        assert_eq!(a, emb.embed("which statement holds?").unwrap());
        assert_eq!(a.len(), 32);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_ne!(a, emb.embed("which statement fails?").unwrap());
        assert_ne!(a, HashingEmbedder::new(32, 1).embed("which statement holds?").unwrap());
        let zh = emb.embed("下列说法正确的是").unwrap();
        assert!(zh.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn domain_vector_is_an_order_free_mean() {
        let emb = HashingEmbedder::default();
        let b = block(3);
        let single = ExerciseBlock::new(vec![b.exercises()[0].clone()]).unwrap();
        assert_eq!(domain_vector(&single, &emb).unwrap(), emb.embed(&b.exercises()[0].stem).unwrap());
        let twice = ExerciseBlock::new(vec![b.exercises()[0].clone(), b.exercises()[0].clone()]).unwrap();
        let dv = domain_vector(&twice, &emb).unwrap();
        let one = domain_vector(&single, &emb).unwrap();
        for (x, y) in dv.iter().zip(&one) {
            assert!((x - y).abs() < 1e-15);
        }
        let mut rev = b.exercises().to_vec();
        rev.reverse();
        let fwd = domain_vector(&b, &emb).unwrap();
        let bwd = domain_vector(&ExerciseBlock::new(rev).unwrap(), &emb).unwrap();
        for (x, y) in fwd.iter().zip(&bwd) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_vector_shape_and_swap() {
        let emb = HashingEmbedder::new(8, 0);
        let b = block(2);
        let l = Learner::new(0, Persona::new(1, -1).unwrap());
        let p = Learner::new(1, Persona::new(-1, 0).unwrap());
        let x = build_sample_vector(&l, &p, &b, &emb).unwrap();
        assert_eq!(x.len(), 12);
        let swapped = build_sample_vector(&p, &l, &b, &emb).unwrap();
        assert_eq!(&x[..2], &swapped[2..4]);
        assert_eq!(&x[2..4], &swapped[..2]);
        assert_eq!(&x[4..], &swapped[4..]);
        assert_eq!(x, build_sample_vector(&l, &p, &b, &emb).unwrap());
        assert!(matches!(build_sample_vector(&l, &l, &b, &emb), Err(FeatureError::SelfPair(_))));
    }

    /// Direct evaluation of the gain formula over enumerated records.
    fn gain_by_hand(paired_scores: &[u8], solo_scores: &[u8]) -> f64 {
        let p: u32 = paired_scores.iter().map(|&s| u32::from(s)).sum();
        let s: u32 = solo_scores.iter().map(|&s| u32::from(s)).sum();
        (f64::from(p) - f64::from(s)) / paired_scores.len() as f64
    }

    #[test]
    fn pair_gain_cases() {
        let l = Learner::new(0, Persona::new(1, 0).unwrap());
        let p = Learner::new(1, Persona::new(-1, 0).unwrap());

        let b4 = block(4);
        let pr: Vec<_> = b4.exercises().iter().map(|e| paired(0, 1, e, 1)).collect();
        let so: Vec<_> = b4.exercises().iter().map(|e| solo(0, e, 0)).collect();
        assert_eq!(pair_gain(&l, &p, &b4, &pr, &so, GainBaseline::Learner).unwrap(), 1.0);
        let so_same: Vec<_> = b4.exercises().iter().map(|e| solo(0, e, 1)).collect();
        assert_eq!(pair_gain(&l, &p, &b4, &pr, &so_same, GainBaseline::Learner).unwrap(), 0.0);

        let b5 = block(5);
        let paired_scores = [1, 1, 0, 1, 1];
        let solo_scores = [0, 1, 0, 1, 0];
        let pr: Vec<_> = b5.exercises().iter().zip(paired_scores).map(|(e, s)| paired(0, 1, e, s)).collect();
        let so: Vec<_> = b5.exercises().iter().zip(solo_scores).map(|(e, s)| solo(0, e, s)).collect();
        let expected = gain_by_hand(&paired_scores, &solo_scores);
        assert!((expected - 0.4).abs() < 1e-15);
        assert!((pair_gain(&l, &p, &b5, &pr, &so, GainBaseline::Learner).unwrap() - 0.4).abs() < 1e-15);

        // The partner reading subtracts the partner's own solo score.
        let so_partner: Vec<_> = b5.exercises().iter().map(|e| solo(1, e, 1)).collect();
        let mut both = so.clone();
        both.extend(so_partner);
        assert!((pair_gain(&l, &p, &b5, &pr, &both, GainBaseline::Partner).unwrap() + 0.2).abs() < 1e-15);
    }

    #[test]
    fn pair_gain_reports_missing_exercises() {
        let l = Learner::new(0, Persona::new(1, 0).unwrap());
        let p = Learner::new(1, Persona::new(-1, 0).unwrap());
        let b = block(3);
        let pr: Vec<_> = b.exercises()[..2].iter().map(|e| paired(0, 1, e, 1)).collect();
        let so: Vec<_> = b.exercises().iter().map(|e| solo(0, e, 0)).collect();
        match pair_gain(&l, &p, &b, &pr, &so, GainBaseline::Learner) {
            Err(FeatureError::Coverage { missing, .. }) => assert_eq!(missing, vec![b.exercises()[2].id.clone()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_counts_bounds_and_export() {
        let cohort: Vec<Learner> = Persona::enumerate()[..4]
            .iter()
            .enumerate()
            .map(|(i, p)| Learner::new(i as u32, *p))
            .collect();
        let ex = synthetic_corpus(&[("arts", 3), ("marketing", 2)], 1);
        let blocks = crate::corpus::group_by_domain(&ex);
        let mut pr = Vec::new();
        let mut so = Vec::new();
        for l in &cohort {
            for e in &ex {
                so.push(solo(l.id.0, e, (l.id.0 % 2) as u8));
                for p in cohort.iter().filter(|p| p.id != l.id) {
                    pr.push(paired(l.id.0, p.id.0, e, ((l.id.0 + p.id.0) % 2) as u8));
                }
            }
        }
        let emb = HashingEmbedder::default();
        let ds = build_dataset(&cohort, &blocks, &pr, &so, &emb, GainBaseline::Learner, Execution::Parallel).unwrap();
        assert_eq!(ds.len(), 4 * 3 * 2);
        assert!(ds.iter().all(|s| (-1.0..=1.0).contains(&s.y) && s.x.len() == 36));
        let again = build_dataset(&cohort, &blocks, &pr, &so, &emb, GainBaseline::Learner, Execution::Sequential).unwrap();
        assert_eq!(ds, again);
        let mut out = Vec::new();
        write_dataset(&ds, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("l_id,ℓ_id,domain,y,x_0,"));
        assert!(header.ends_with(",x_35"));
        assert_eq!(dataset_embedding_dim(header), 32);
        assert_eq!(text.lines().count(), 25);
        assert_eq!(dataset_domains(&ds).len(), 2);
    }
}
