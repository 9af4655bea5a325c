//! CMMLU-format exercise ingestion, domain blocks, difficulty profiling and
//! seeded subset sampling.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::ResponseRecord;
use crate::hashing;

/// Option labels accepted in the answer column.
pub const OPTION_LABELS: [char; 4] = ['A', 'B', 'C', 'D'];

/// Default passing mark for difficulty profiles.
pub const DEFAULT_PASS_THRESHOLD: f64 = 0.6;

const CATEGORY_TABLE: &str = include_str!("../data/cmmlu_categories.csv");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed csv: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: row {row}: answer `{key}` is not one of A..D")]
    BadKey { file: String, row: usize, key: String },
    #[error("{file}: row {row}: empty question stem")]
    EmptyStem { file: String, row: usize },
    #[error("{file}: row {row}: empty domain")]
    EmptyDomain { file: String, row: usize },
    #[error("no csv files found under {0}")]
    NoFiles(PathBuf),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("domain `{domain}` has {available} exercises, {requested} requested")]
    NotEnough {
        domain: String,
        requested: usize,
        available: usize,
    },
    #[error("exercise {exercise}: expected {expected} records, found {found}")]
    RecordCount {
        exercise: String,
        expected: usize,
        found: usize,
    },
    #[error("difficulty profile needs at least one exercise and one repeat")]
    EmptyProfile,
    #[error("invalid block: {0}")]
    InvalidBlock(String),
}

/// Coarse subject category of a knowledge domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "STEM")]
    Stem,
    #[serde(rename = "Social Science")]
    SocialScience,
    #[serde(rename = "Humanities")]
    Humanities,
    #[serde(rename = "other")]
    Other,
}

impl Category {
    pub const REPORTED: [Category; 3] = [Category::Stem, Category::SocialScience, Category::Humanities];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Stem => "STEM",
            Category::SocialScience => "Social Science",
            Category::Humanities => "Humanities",
            Category::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "STEM" => Some(Category::Stem),
            "Social Science" => Some(Category::SocialScience),
            "Humanities" => Some(Category::Humanities),
            "other" => Some(Category::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn category_table() -> &'static HashMap<String, Category> {
    static TABLE: OnceLock<HashMap<String, Category>> = OnceLock::new();
    TABLE.get_or_init(|| {
        CATEGORY_TABLE
            .lines()
            .skip(1)
            .filter_map(|line| {
                let (domain, cat) = line.split_once(',')?;
                Some((domain.trim().to_string(), Category::parse(cat)?))
            })
            .collect()
    })
}

/// Category of a CMMLU domain; unknown domains map to `other` with a warning.
pub fn category_of(domain: &str) -> Category {
    match category_table().get(domain) {
        Some(c) => *c,
        None => {
            log::warn!("domain `{domain}` is not in the category map, using `other`");
            Category::Other
        }
    }
}

/// Number of domains in the bundled category map.
pub fn known_domain_count() -> usize {
    category_table().len()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseOption {
    pub label: char,
    pub text: String,
}

/// A single-choice exercise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exercise {
    pub id: String,
    pub stem: String,
    /// Empty once the options have been stripped for option-free discussion.
    pub options: Vec<ExerciseOption>,
    pub key: char,
    pub domain: String,
    pub category: Category,
}

impl Exercise {
    pub fn labels(&self) -> Vec<char> {
        self.options.iter().map(|o| o.label).collect()
    }

    pub fn has_options(&self) -> bool {
        !self.options.is_empty()
    }
}

/// All exercises of one knowledge domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseBlock {
    domain: String,
    category: Category,
    exercises: Vec<Exercise>,
}

impl ExerciseBlock {
    pub fn new(exercises: Vec<Exercise>) -> Result<Self, CorpusError> {
        let first = exercises
            .first()
            .ok_or_else(|| CorpusError::InvalidBlock("a block needs at least one exercise".into()))?;
        let domain = first.domain.clone();
        let category = first.category;
        if let Some(stray) = exercises.iter().find(|e| e.domain != domain) {
            return Err(CorpusError::InvalidBlock(format!(
                "exercise {} belongs to `{}`, block is `{domain}`",
                stray.id, stray.domain
            )));
        }
        Ok(Self {
            domain,
            category,
            exercises,
        })
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn exercises(&self) -> &[Exercise] {
        &self.exercises
    }

    pub fn len(&self) -> usize {
        self.exercises.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exercises.is_empty()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a corpus from a directory of per-domain CSV files (file stem = domain),
/// a single per-domain CSV file, or a consolidated CSV carrying a `domain` column.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Exercise>, CorpusError> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        if files.is_empty() {
            return Err(CorpusError::NoFiles(path.to_path_buf()));
        }
        files.sort();
        let mut out = Vec::new();
        for file in files {
            out.extend(load_file(&file)?);
        }
        Ok(out)
    } else {
        load_file(path)
    }
}

fn load_file(path: &Path) -> Result<Vec<Exercise>, CorpusError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_exercises(file, &path.display().to_string(), Some(&stem))
}

/// Parses CSV text. `default_domain` is used when the data carries no
/// `domain` column.
pub fn read_exercises<R: Read>(
    reader: R,
    file: &str,
    default_domain: Option<&str>,
) -> Result<Vec<Exercise>, CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        file: file.to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| CorpusError::MissingColumn {
            file: file.to_string(),
            column: name.to_string(),
        })
    };
    let question = need("question")?;
    let option_cols = [need("a")?, need("b")?, need("c")?, need("d")?];
    let answer = need("answer")?;
    let domain_col = col("domain");
    if domain_col.is_none() && default_domain.is_none() {
        return Err(CorpusError::MissingColumn {
            file: file.to_string(),
            column: "domain".into(),
        });
    }

    let mut per_domain: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let domain = match domain_col {
            Some(i) => field(i).trim().to_string(),
            None => default_domain.unwrap_or_default().to_string(),
        };
        if domain.is_empty() {
            return Err(CorpusError::EmptyDomain {
                file: file.to_string(),
                row,
            });
        }
        let stem = field(question);
        if stem.trim().is_empty() {
            return Err(CorpusError::EmptyStem {
                file: file.to_string(),
                row,
            });
        }
        let raw_key = field(answer);
        let key = match raw_key.trim() {
            k if k.len() == 1 && OPTION_LABELS.contains(&k.chars().next().unwrap_or(' ')) => {
                k.chars().next().unwrap_or('A')
            }
            _ => {
                return Err(CorpusError::BadKey {
                    file: file.to_string(),
                    row,
                    key: raw_key,
                })
            }
        };
        let options = OPTION_LABELS
            .iter()
            .zip(option_cols)
            .map(|(&label, i)| ExerciseOption {
                label,
                text: field(i),
            })
            .collect();
        let idx = per_domain.entry(domain.clone()).or_insert(0);
        let id = format!("{domain}/{idx}");
        *idx += 1;
        out.push(Exercise {
            id,
            stem,
            options,
            key,
            category: category_of(&domain),
            domain,
        });
    }
    Ok(out)
}

/// Writes the consolidated layout (`id,question,A,B,C,D,answer,domain`).
pub fn write_corpus<W: Write>(exercises: &[Exercise], writer: W) -> Result<(), CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        file: "<output>".into(),
        source,
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "question", "A", "B", "C", "D", "answer", "domain"])
        .map_err(csv_err)?;
    for e in exercises {
        let opt = |label: char| {
            e.options
                .iter()
                .find(|o| o.label == label)
                .map(|o| o.text.as_str())
                .unwrap_or("")
        };
        let key = e.key.to_string();
        w.write_record([
            e.id.as_str(),
            e.stem.as_str(),
            opt('A'),
            opt('B'),
            opt('C'),
            opt('D'),
            key.as_str(),
            e.domain.as_str(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| CorpusError::Io {
        path: PathBuf::from("<output>"),
        source,
    })
}

/// Partitions exercises into domain blocks, in first-appearance order.
pub fn group_by_domain(exercises: &[Exercise]) -> Vec<ExerciseBlock> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<&str, Vec<Exercise>> = HashMap::new();
    for e in exercises {
        groups
            .entry(e.domain.as_str())
            .or_insert_with(|| {
                order.push(e.domain.clone());
                Vec::new()
            })
            .push(e.clone());
    }
    order
        .iter()
        .map(|d| {
            let members = groups.remove(d.as_str()).unwrap_or_default();
            ExerciseBlock {
                domain: d.clone(),
                category: members[0].category,
                exercises: members,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyEntry {
    pub exercise_id: String,
    pub mean_accuracy: f64,
}

/// Per-exercise mean accuracy over repeated independent answering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyProfile {
    pub entries: Vec<DifficultyEntry>,
    pub repeats: usize,
    pub threshold: f64,
    /// Share of exercises whose mean accuracy is strictly below `threshold`.
    pub share_below: f64,
}

impl DifficultyProfile {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let csv_err = |source| CorpusError::Csv {
            file: "<profile>".into(),
            source,
        };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["exercise_id", "mean_accuracy", "n_repeats"])
            .map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.exercise_id.clone(),
                format!("{:.6}", e.mean_accuracy),
                self.repeats.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|source| CorpusError::Io {
            path: PathBuf::from("<profile>"),
            source,
        })
    }
}

/// Builds a difficulty profile; each exercise must have exactly `repeats` records.
pub fn difficulty_profile(
    exercises: &[Exercise],
    records: &[ResponseRecord],
    repeats: usize,
    threshold: f64,
) -> Result<DifficultyProfile, CorpusError> {
    if exercises.is_empty() || repeats == 0 {
        return Err(CorpusError::EmptyProfile);
    }
    let mut tally: HashMap<&str, (usize, usize)> = HashMap::new();
    for r in records {
        let t = tally.entry(r.exercise_id.as_str()).or_default();
        t.0 += 1;
        t.1 += usize::from(r.score);
    }
    let mut entries = Vec::with_capacity(exercises.len());
    for e in exercises {
        let (count, correct) = tally.get(e.id.as_str()).copied().unwrap_or_default();
        if count != repeats {
            return Err(CorpusError::RecordCount {
                exercise: e.id.clone(),
                expected: repeats,
                found: count,
            });
        }
        entries.push(DifficultyEntry {
            exercise_id: e.id.clone(),
            mean_accuracy: correct as f64 / repeats as f64,
        });
    }
    let below = entries.iter().filter(|e| e.mean_accuracy < threshold).count();
    Ok(DifficultyProfile {
        share_below: below as f64 / entries.len() as f64,
        entries,
        repeats,
        threshold,
    })
}

/// Seeded uniform sample without replacement per requested domain. Output
/// follows the request order; within a domain the original order is kept.
pub fn sample_subset(
    exercises: &[Exercise],
    request: &[(String, usize)],
    seed: u64,
) -> Result<Vec<Exercise>, CorpusError> {
    let mut by_domain: BTreeMap<&str, Vec<&Exercise>> = BTreeMap::new();
    for e in exercises {
        by_domain.entry(e.domain.as_str()).or_default().push(e);
    }
    let mut out = Vec::new();
    for (domain, n) in request {
        let pool = by_domain
            .get(domain.as_str())
            .ok_or_else(|| CorpusError::UnknownDomain(domain.clone()))?;
        if *n > pool.len() {
            return Err(CorpusError::NotEnough {
                domain: domain.clone(),
                requested: *n,
                available: pool.len(),
            });
        }
        let stream = hashing::fnv1a(seed, domain.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let mut picked = index::sample(&mut rng, pool.len(), *n).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    Ok(out)
}

/// Deterministic synthetic exercises in the corpus schema.
///
/// Option texts are opaque tokens that never occur in stems, so option leakage
/// into discussion prompts is detectable by substring search.
pub fn synthetic_corpus(layout: &[(&str, usize)], seed: u64) -> Vec<Exercise> {
    let mut out = Vec::new();
    for (domain, n) in layout {
        for i in 0..*n {
            let tag = |salt: &str| {
                hashing::content_hash(&[
                    &seed.to_le_bytes(),
                    domain.as_bytes(),
                    &(i as u64).to_le_bytes(),
                    salt.as_bytes(),
                ])
            };
            let key_idx = (hashing::hash_u64(&[tag("key").as_bytes()]) % 4) as usize;
            let options = OPTION_LABELS
                .iter()
                .map(|&label| ExerciseOption {
                    label,
                    text: format!("opt{}", &tag(&label.to_string())[..10]),
                })
                .collect();
            let topic = domain.replace('_', " ");
            out.push(Exercise {
                id: format!("{domain}/{i}"),
                stem: format!(
                    "Synthetic {topic} item {i}: which statement about concept {} is correct?",
                    &tag("concept")[..6]
                ),
                options,
                key: OPTION_LABELS[key_idx],
                domain: domain.to_string(),
                category: category_of(domain),
            });
        }
    }
    out
}

/// The six-domain experiment layout: name and published block size.
pub const EXPERIMENT_DOMAINS: [(&str, usize); 6] = [
    ("machine_learning", 20),
    ("college_engineering_hydrology", 20),
    ("marketing", 23),
    ("high_school_geography", 12),
    ("arts", 11),
    ("logical", 26),
];
