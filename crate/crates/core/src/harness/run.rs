use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{BackendChoice, ParetoMode, RegressorKind, Settings, Split, VariantConfig};
use super::metrics::{compute_metrics, gain_report, GainRow, LearnerAccuracy, MetricsTable};
use super::HarnessError;
use crate::agents::{
    AnswerSheet, CompletionBackend, DecodeParams, Learner, LearnerId, MockBackend, PairedResponseRecord, PromptTemplates,
    Protocol, ReplayCache, ResponseRecord, TranscriptLine,
};
use crate::corpus::{difficulty_profile, group_by_domain, Category, DifficultyProfile, Exercise, ExerciseBlock};
use crate::features::{build_dataset, domain_vector, HashingEmbedder, Sample};
use crate::hashing;
use crate::matcher::{
    local_candidates, pareto_front, score_vector, select_partner_with_domain, FrontDump, FrontMode, ScoreVector,
};
use crate::regressor::{fit_gp_with, fit_mlp, FittedModel, GpFitConfig, MlpConfig};

/// Records and samples produced on the training blocks: every learner alone
/// and every ordered pair together.
#[derive(Debug)]
pub struct TrainingData {
    pub blocks: Vec<ExerciseBlock>,
    pub solo: Vec<ResponseRecord>,
    pub paired: Vec<PairedResponseRecord>,
    pub samples: Vec<Sample>,
    /// Solo score vectors over the training domains, one per learner.
    pub global_candidates: Vec<ScoreVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub learner_id: LearnerId,
    pub partner_id: LearnerId,
    pub domain: String,
    pub mode: FrontMode,
    pub fallback: bool,
    pub front_size: usize,
    pub predicted_mean: f64,
    pub predicted_variance: f64,
    /// Opposite-signed subject preferences.
    pub complementary: bool,
}

/// Which code path a variant executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutedPath {
    Solo,
    RandomPairing,
    MatchedPairing,
}

#[derive(Debug)]
pub struct RunResult {
    pub config: VariantConfig,
    pub path: ExecutedPath,
    pub accuracies: Vec<LearnerAccuracy>,
    /// Test-phase solo answers (solo variants only).
    pub solo_records: Vec<ResponseRecord>,
    /// Test-phase discussions (co-learning variants only).
    pub paired_records: Vec<PairedResponseRecord>,
    pub selections: Vec<SelectionRecord>,
    pub fronts: Vec<FrontDump>,
    pub model: Option<Arc<FittedModel>>,
    pub training: Option<Arc<TrainingData>>,
    /// Local-mode rounds that fell back to the Global front.
    pub fallbacks: usize,
}

impl RunResult {
    pub fn run_id(&self) -> String {
        format!("{}-{}", self.config.name, self.config.seed)
    }

    pub fn transcript(&self) -> Vec<TranscriptLine> {
        let id = self.run_id();
        let mut lines: Vec<TranscriptLine> = self.solo_records.iter().map(|r| TranscriptLine::from_solo(&id, r)).collect();
        lines.extend(self.paired_records.iter().flat_map(|r| TranscriptLine::from_paired(&id, r)));
        lines
    }

    /// Share of selections with a complementary partner, over learners that
    /// have a nonzero subject preference.
    pub fn complementary_rate(&self, cohort: &[Learner]) -> Option<f64> {
        let eligible: Vec<&SelectionRecord> = self
            .selections
            .iter()
            .filter(|s| {
                cohort
                    .iter()
                    .find(|l| l.id == s.learner_id)
                    .and_then(|l| l.persona)
                    .is_some_and(|p| p.subject.value() != 0)
            })
            .collect();
        (!eligible.is_empty())
            .then(|| eligible.iter().filter(|s| s.complementary).count() as f64 / eligible.len() as f64)
    }
}

pub struct SuiteResult {
    pub runs: Vec<RunResult>,
    pub metrics: MetricsTable,
    pub gains: Vec<GainRow>,
    pub baseline: String,
}

type TrainingKey = (u64, BackendChoice, Vec<String>);

/// Runs variants over one corpus and cohort, sharing training data and
/// fitted models between variants with the same seed, backend and split.
pub struct Harness {
    settings: Settings,
    templates: Arc<PromptTemplates>,
    exercises: Vec<Exercise>,
    blocks: Vec<ExerciseBlock>,
    cohort: Vec<Learner>,
    embedder: HashingEmbedder,
    training: HashMap<TrainingKey, Arc<TrainingData>>,
    models: HashMap<(TrainingKey, RegressorKind), Arc<FittedModel>>,
}

impl Harness {
    pub fn new(settings: Settings, exercises: Vec<Exercise>, cohort: Vec<Learner>) -> Result<Self, HarnessError> {
        let templates = match &settings.prompts {
            Some(path) => PromptTemplates::load(path).map_err(|e| HarnessError::Config(e.to_string()))?,
            None => PromptTemplates::default(),
        };
        if cohort.len() < 2 {
            return Err(HarnessError::Config("the cohort needs at least two learners".into()));
        }
        let blocks = group_by_domain(&exercises);
        let embedder = settings.embedding.clone();
        Ok(Self {
            settings,
            templates: Arc::new(templates),
            exercises,
            blocks,
            cohort,
            embedder,
            training: HashMap::new(),
            models: HashMap::new(),
        })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn cohort(&self) -> &[Learner] {
        &self.cohort
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    fn blocks_for(&self, domains: &[String]) -> Result<Vec<ExerciseBlock>, HarnessError> {
        domains
            .iter()
            .map(|d| {
                self.blocks
                    .iter()
                    .find(|b| b.domain() == d)
                    .cloned()
                    .ok_or_else(|| HarnessError::Config(format!("split domain `{d}` is not in the corpus")))
            })
            .collect()
    }

    fn backend(&self, cfg: &VariantConfig) -> Result<Arc<dyn CompletionBackend>, HarnessError> {
        let s = &self.settings;
        let base: Arc<dyn CompletionBackend> = match cfg.backend {
            BackendChoice::Mock => Arc::new(MockBackend::new(
                cfg.seed,
                self.templates.clone(),
                AnswerSheet::from_exercises(&self.exercises, cfg.seed, &s.mock),
                s.mock.clone(),
            )),
            BackendChoice::Cache => {
                let dir = s
                    .cache_dir
                    .clone()
                    .ok_or_else(|| HarnessError::Config("backend `cache` needs settings.cache_dir".into()))?;
                return Ok(Arc::new(ReplayCache::replay(dir, self.cache_source_name(cfg.seed))));
            }
            BackendChoice::Live => self.live_backend()?,
        };
        Ok(match &s.cache_dir {
            Some(dir) => Arc::new(ReplayCache::wrap(dir.clone(), base)),
            None => base,
        })
    }

    /// Backend name whose recorded replies a replay cache serves.
    fn cache_source_name(&self, seed: u64) -> String {
        #[cfg(feature = "live")]
        if let Some(live) = &self.settings.live {
            return format!("live:{}", live.model);
        }
        format!("mock:{seed}")
    }

    #[cfg(feature = "live")]
    fn live_backend(&self) -> Result<Arc<dyn CompletionBackend>, HarnessError> {
        let cfg = self
            .settings
            .live
            .clone()
            .ok_or_else(|| HarnessError::Config("backend `live` needs a [settings.live] table".into()))?;
        Ok(Arc::new(crate::agents::LiveBackend::new(cfg)?))
    }

    #[cfg(not(feature = "live"))]
    fn live_backend(&self) -> Result<Arc<dyn CompletionBackend>, HarnessError> {
        Err(HarnessError::Config("this build has no `live` feature".into()))
    }

    fn solo_phase(&self, protocol: &Protocol, learners: &[Learner], exercises: &[&Exercise]) -> Result<Vec<ResponseRecord>, HarnessError> {
        let jobs: Vec<(&Learner, &Exercise)> = learners.iter().flat_map(|l| exercises.iter().map(move |e| (l, *e))).collect();
        Ok(self.settings.execution.try_map(&jobs, |(l, e)| protocol.solve_exercise(l, e))?)
    }

    fn paired_phase(&self, protocol: &Protocol, jobs: &[(&Learner, &Learner, &Exercise)]) -> Result<Vec<PairedResponseRecord>, HarnessError> {
        Ok(self.settings.execution.try_map(jobs, |(l, p, e)| protocol.exchange_and_resolve(l, p, e))?)
    }

    fn training_data(&mut self, cfg: &VariantConfig, protocol: &Protocol) -> Result<Arc<TrainingData>, HarnessError> {
        let key: TrainingKey = (cfg.seed, cfg.backend, cfg.split.train.clone());
        if let Some(t) = self.training.get(&key) {
            return Ok(t.clone());
        }
        let blocks = self.blocks_for(&cfg.split.train)?;
        let exercises: Vec<&Exercise> = blocks.iter().flat_map(|b| b.exercises()).collect();
        let solo = self.solo_phase(protocol, &self.cohort, &exercises)?;
        let mut jobs = Vec::new();
        for l in &self.cohort {
            for p in self.cohort.iter().filter(|p| p.id != l.id) {
                jobs.extend(exercises.iter().map(|e| (l, p, *e)));
            }
        }
        let paired = self.paired_phase(protocol, &jobs)?;
        let samples = build_dataset(
            &self.cohort,
            &blocks,
            &paired,
            &solo,
            &self.embedder,
            self.settings.gain_baseline,
            self.settings.execution,
        )?;
        let global_candidates = self
            .cohort
            .iter()
            .map(|l| score_vector(l.id, &solo, &blocks))
            .collect::<Result<Vec<_>, _>>()?;
        log::info!(
            "training data for seed {}: {} solo, {} paired records, {} samples",
            cfg.seed,
            solo.len(),
            paired.len(),
            samples.len()
        );
        let data = Arc::new(TrainingData {
            blocks,
            solo,
            paired,
            samples,
            global_candidates,
        });
        self.training.insert(key, data.clone());
        Ok(data)
    }

    fn fitted_model(&mut self, cfg: &VariantConfig, data: &TrainingData) -> Result<Arc<FittedModel>, HarnessError> {
        let key = ((cfg.seed, cfg.backend, cfg.split.train.clone()), cfg.regressor_kind);
        if let Some(m) = self.models.get(&key) {
            return Ok(m.clone());
        }
        let x: Vec<Vec<f64>> = data.samples.iter().map(|s| s.x.clone()).collect();
        let y: Vec<f64> = data.samples.iter().map(|s| s.y).collect();
        let model = match cfg.regressor_kind {
            RegressorKind::Gp => {
                let gp = GpFitConfig {
                    seed: cfg.seed,
                    ..self.settings.gp.clone()
                };
                let m = fit_gp_with(&x, &y, &gp, self.settings.execution)?;
                let p = m.params();
                log::info!(
                    "gp fit: sf2={:.4} ls={:.4} sn2={:.5} mll={:.3}",
                    p.signal_variance(),
                    p.lengthscale(),
                    p.noise_variance(),
                    m.log_marginal_likelihood()
                );
                FittedModel::Gp(m)
            }
            RegressorKind::Nn => {
                let mlp = MlpConfig {
                    seed: cfg.seed,
                    ..self.settings.mlp.clone()
                };
                FittedModel::Mlp(fit_mlp(&x, &y, &mlp)?)
            }
            RegressorKind::None => unreachable!("validated config"),
        };
        let model = Arc::new(model);
        self.models.insert(key, model.clone());
        Ok(model)
    }

    fn learners_for(&self, cfg: &VariantConfig) -> Vec<Learner> {
        if cfg.role_setting {
            self.cohort.clone()
        } else {
            self.cohort.iter().map(|l| Learner::without_role(l.id.0)).collect()
        }
    }

    pub fn run_variant(&mut self, cfg: &VariantConfig) -> Result<RunResult, HarnessError> {
        cfg.validate()?;
        let test_blocks = self.blocks_for(&cfg.split.test)?;
        if cfg.regressor_kind != RegressorKind::None {
            self.blocks_for(&cfg.split.train)?;
        }
        let protocol = Protocol::new(self.templates.clone(), self.backend(cfg)?, self.settings.decode.clone());
        let learners = self.learners_for(cfg);
        let test_ex: Vec<&Exercise> = test_blocks.iter().flat_map(|b| b.exercises()).collect();

        let mut result = RunResult {
            config: cfg.clone(),
            path: ExecutedPath::Solo,
            accuracies: Vec::new(),
            solo_records: Vec::new(),
            paired_records: Vec::new(),
            selections: Vec::new(),
            fronts: Vec::new(),
            model: None,
            training: None,
            fallbacks: 0,
        };

        if !cfg.co_learning {
            result.solo_records = self.solo_phase(&protocol, &learners, &test_ex)?;
        } else if cfg.regressor_kind == RegressorKind::None {
            result.path = ExecutedPath::RandomPairing;
            let mut rng = ChaCha8Rng::seed_from_u64(hashing::hash_u64(&[&cfg.seed.to_le_bytes(), b"random-pairing"]));
            let mut jobs = Vec::new();
            for l in &learners {
                let others: Vec<&Learner> = learners.iter().filter(|p| p.id != l.id).collect();
                for e in &test_ex {
                    jobs.push((l, others[rng.random_range(0..others.len())], *e));
                }
            }
            result.paired_records = self.paired_phase(&protocol, &jobs)?;
        } else {
            result.path = ExecutedPath::MatchedPairing;
            let data = self.training_data(cfg, &protocol)?;
            let model = self.fitted_model(cfg, &data)?;
            let mut jobs = Vec::new();
            for block in &test_blocks {
                let dv = domain_vector(block, &self.embedder)?;
                for l in &learners {
                    let (front, fallback) = match cfg.pareto_mode {
                        ParetoMode::Global => (pareto_front(&data.global_candidates, l.id, FrontMode::Global)?, false),
                        ParetoMode::Local => {
                            let local = local_candidates(l.id, &data.paired, &data.blocks);
                            if local.is_empty() {
                                log::warn!(
                                    "{}: learner {} has no interaction history; using the Global front for `{}`",
                                    cfg.name,
                                    l.id,
                                    block.domain()
                                );
                                result.fallbacks += 1;
                                (pareto_front(&data.global_candidates, l.id, FrontMode::Global)?, true)
                            } else {
                                (pareto_front(&local, l.id, FrontMode::Local)?, false)
                            }
                        }
                        ParetoMode::None => unreachable!("validated config"),
                    };
                    let sel = select_partner_with_domain(l, &front, &self.cohort, model.as_ref(), &dv, self.settings.selection)?;
                    let partner = learners
                        .iter()
                        .find(|p| p.id == sel.partner_id)
                        .ok_or(crate::matcher::MatchError::UnknownLearner(sel.partner_id))?;
                    let chosen = sel
                        .candidates
                        .iter()
                        .find(|c| c.learner_id == sel.partner_id)
                        .expect("selected partner was scored");
                    result.selections.push(SelectionRecord {
                        learner_id: l.id,
                        partner_id: partner.id,
                        domain: block.domain().to_string(),
                        mode: front.mode,
                        fallback,
                        front_size: front.members.len(),
                        predicted_mean: chosen.prediction.mean,
                        predicted_variance: chosen.prediction.variance,
                        complementary: matches!((l.persona, partner.persona), (Some(a), Some(b)) if a.complements(&b)),
                    });
                    result.fronts.push(FrontDump::new(&front, block.domain(), fallback, &sel));
                    jobs.extend(block.exercises().iter().map(|e| (l, partner, e)));
                }
            }
            result.paired_records = self.paired_phase(&protocol, &jobs)?;
            result.model = Some(model);
            result.training = Some(data);
        }

        result.accuracies = accuracies(&learners, &test_ex, &result)?;
        Ok(result)
    }

    /// Difficulty profile: a role-free learner answers every exercise
    /// `repeats` times, each repeat with its own sampling seed.
    pub fn profile(&self, cfg: &VariantConfig, repeats: usize, threshold: f64) -> Result<DifficultyProfile, HarnessError> {
        let protocol = Protocol::new(self.templates.clone(), self.backend(cfg)?, self.settings.decode.clone());
        let learner = Learner::without_role(self.cohort[0].id.0);
        let jobs: Vec<(u64, &Exercise)> = (0..repeats as u64)
            .flat_map(|r| self.exercises.iter().map(move |e| (r, e)))
            .collect();
        let records = self.settings.execution.try_map(&jobs, |(r, e)| {
            let decode = DecodeParams {
                sample_seed: Some(*r),
                ..self.settings.decode.clone()
            };
            protocol.with_decode(decode).solve_exercise(&learner, e)
        })?;
        Ok(difficulty_profile(&self.exercises, &records, repeats, threshold)?)
    }

    /// Runs every variant in order. The first role-free, solo variant is the
    /// gain baseline.
    pub fn run_suite(&mut self, configs: &[VariantConfig]) -> Result<SuiteResult, HarnessError> {
        let baseline = configs
            .iter()
            .find(|c| c.is_baseline())
            .ok_or_else(|| HarnessError::Config("the suite needs a Baseline variant (no roles, no co-learning)".into()))?
            .name
            .clone();
        for c in configs {
            c.validate()?;
        }
        let mut runs = Vec::with_capacity(configs.len());
        let mut metrics = MetricsTable::default();
        for c in configs {
            log::info!("running variant {}", c.name);
            let run = self.run_variant(c).map_err(|e| HarnessError::Variant {
                name: c.name.clone(),
                source: Box::new(e),
            })?;
            metrics.rows.push(compute_metrics(&c.name, &run.accuracies)?);
            runs.push(run);
        }
        let gains = gain_report(&metrics, &baseline)?;
        Ok(SuiteResult {
            runs,
            metrics,
            gains,
            baseline,
        })
    }
}

fn accuracies(learners: &[Learner], exercises: &[&Exercise], run: &RunResult) -> Result<Vec<LearnerAccuracy>, HarnessError> {
    let mut scores: HashMap<(LearnerId, &str), u8> = HashMap::new();
    for r in &run.solo_records {
        scores.insert((r.learner_id, r.exercise_id.as_str()), r.score);
    }
    for r in &run.paired_records {
        scores.insert((r.learner_id, r.exercise_id.as_str()), r.score);
    }
    learners
        .iter()
        .map(|l| {
            // (correct, answered) per category: STEM, Social Science, Humanities.
            let mut tally = [(0u32, 0u32); 3];
            let mut total = (0u32, 0u32);
            for e in exercises {
                let s = *scores.get(&(l.id, e.id.as_str())).ok_or_else(|| {
                    HarnessError::Metrics(format!("learner {} has no score for {}", l.id, e.id))
                })?;
                total.0 += u32::from(s);
                total.1 += 1;
                let slot = match e.category {
                    Category::Stem => Some(0),
                    Category::SocialScience => Some(1),
                    Category::Humanities => Some(2),
                    Category::Other => None,
                };
                if let Some(i) = slot {
                    tally[i].0 += u32::from(s);
                    tally[i].1 += 1;
                }
            }
            let ratio = |(c, n): (u32, u32)| (n > 0).then(|| f64::from(c) / f64::from(n));
            Ok(LearnerAccuracy {
                learner_id: l.id,
                persona: l.persona,
                stem: ratio(tally[0]),
                social_science: ratio(tally[1]),
                humanities: ratio(tally[2]),
                total: ratio(total).unwrap_or(0.0),
            })
        })
        .collect()
}

/// Splits are echoed in reports; this collects the distinct ones in order.
pub fn distinct_splits(configs: &[VariantConfig]) -> Vec<Split> {
    let mut out: Vec<Split> = Vec::new();
    for c in configs {
        if !out.contains(&c.split) {
            out.push(c.split.clone());
        }
    }
    out
}
