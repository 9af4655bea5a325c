use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use partner_match::agents::default_cohort;
use partner_match::corpus::{
    group_by_domain, load_corpus, synthetic_corpus, write_corpus, Exercise, DEFAULT_PASS_THRESHOLD,
    EXPERIMENT_DOMAINS,
};
use partner_match::harness::{
    compute_metrics, write_reports, write_suite, BackendChoice, Harness, StoredResults, SuiteConfig, VariantConfig,
};

/// Simulated inquiry learners with Gaussian-process partner matching.
#[derive(Parser)]
#[command(name = "partner-match", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a CMMLU-format corpus and store it as one CSV file.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated solo answering to estimate per-exercise difficulty.
    Profile {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = DEFAULT_PASS_THRESHOLD)]
        threshold: f64,
    },
    /// Run a single variant.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Variant name from the config (defaults to the first one).
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run every configured variant and write reports.
    Suite {
        #[command(flatten)]
        common: Common,
    },
    /// Re-render report files from a stored results.json.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Suite config (TOML). Defaults to the seven shipped variants.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    backend: Option<BackendChoice>,
    /// Corpus directory or CSV file. Defaults to a synthetic corpus with ten
    /// exercises in each experiment domain.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn suite_config(&self) -> Result<SuiteConfig> {
        let mut cfg = match &self.config {
            Some(p) => SuiteConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => SuiteConfig::default(),
        };
        cfg.override_all(self.seed, self.backend);
        Ok(cfg)
    }

    fn exercises(&self) -> Result<Vec<Exercise>> {
        match &self.corpus {
            Some(p) => load_corpus(p).with_context(|| format!("loading corpus {}", p.display())),
            None => {
                let layout: Vec<(&str, usize)> = EXPERIMENT_DOMAINS.iter().map(|(d, _)| (*d, 10)).collect();
                Ok(synthetic_corpus(&layout, 0))
            }
        }
    }

    fn harness(&self, cfg: &SuiteConfig) -> Result<Harness> {
        Ok(Harness::new(cfg.settings.clone(), self.exercises()?, default_cohort())?)
    }
}

fn ingest(corpus_path: &Path, out: &Path) -> Result<()> {
    let exercises = load_corpus(corpus_path).with_context(|| format!("loading corpus {}", corpus_path.display()))?;
    fs::create_dir_all(out)?;
    let file = out.join("corpus.csv");
    write_corpus(&exercises, fs::File::create(&file)?)?;
    for b in group_by_domain(&exercises) {
        println!("{:<40} {:>5}  {}", b.domain(), b.len(), b.category().as_str());
    }
    println!("{} exercises in {} domains -> {}", exercises.len(), group_by_domain(&exercises).len(), file.display());
    Ok(())
}

fn profile(common: &Common, repeats: usize, threshold: f64) -> Result<()> {
    let cfg = common.suite_config()?;
    let harness = common.harness(&cfg)?;
    let variant = cfg.variants.first().context("no variants configured")?;
    let p = harness.profile(variant, repeats, threshold)?;
    fs::create_dir_all(&common.out)?;
    let file = common.out.join("difficulty.csv");
    p.write_csv(fs::File::create(&file)?)?;
    println!(
        "{:.1}% of {} exercises below {threshold} over {repeats} repeats -> {}",
        100.0 * p.share_below,
        p.entries.len(),
        file.display()
    );
    Ok(())
}

fn simulate(common: &Common, name: Option<&str>) -> Result<()> {
    let cfg = common.suite_config()?;
    let variant: &VariantConfig = match name {
        Some(n) => cfg.variants.iter().find(|v| v.name == n).with_context(|| format!("no variant named `{n}`"))?,
        None => cfg.variants.first().context("no variants configured")?,
    };
    let mut harness = common.harness(&cfg)?;
    let run = harness.run_variant(variant)?;
    let row = compute_metrics(&variant.name, &run.accuracies)?;
    fs::create_dir_all(&common.out)?;
    let summary = serde_json::json!({
        "config": variant,
        "path": run.path,
        "metrics": row,
        "accuracies": run.accuracies,
        "selections": run.selections,
        "fallbacks": run.fallbacks,
    });
    fs::write(common.out.join("run.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    let mut lines = String::new();
    for l in run.transcript() {
        lines.push_str(&l.to_json_line());
        lines.push('\n');
    }
    fs::write(common.out.join("transcript.jsonl"), lines)?;
    if let Some(m) = &run.model {
        fs::write(common.out.join("model.json"), m.to_json() + "\n")?;
    }
    println!("{}: total accuracy {:.2}%", variant.name, 100.0 * row.total.mean);
    Ok(())
}

fn suite(common: &Common) -> Result<()> {
    let cfg = common.suite_config()?;
    let mut harness = common.harness(&cfg)?;
    let result = harness.run_suite(&cfg.variants)?;
    let stored = write_suite(&common.out, &result, harness.cohort())?;
    print!("{}", partner_match::harness::table2_txt(&stored));
    Ok(())
}

fn report(out: &Path) -> Result<()> {
    let stored = StoredResults::load(out.join("results.json")).with_context(|| format!("reading {}/results.json", out.display()))?;
    write_reports(out, &stored)?;
    print!("{}", partner_match::harness::table2_txt(&stored));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Ingest { corpus, out } => ingest(corpus, out),
        Command::Profile { common, repeats, threshold } => {
            if *repeats == 0 {
                bail!("--repeats must be positive");
            }
            profile(common, *repeats, *threshold)
        }
        Command::Simulate { common, variant } => simulate(common, variant.as_deref()),
        Command::Suite { common } => suite(common),
        Command::Report { out } => report(out),
    }?;
    Ok(())
}
