//! Command implementations behind the `invrat` binary: corpus synthesis,
//! attribute/environment tagging, multi-seed training with run manifests,
//! checkpoint-selected evaluation, rationale dumps, and report rendering.
//!
//! Run directories are self-contained: manifest (config snapshot + input
//! digests), vocabulary, per-step JSON log, per-epoch checkpoints and dev
//! reports, plus a copy of the lexicons for modes that need them at
//! evaluation time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attributes::{
    assign_environment, remove_lexicon_tokens, tag_dialect, tag_lexical, AttributeLexicon,
    DialectLexicon, EnvironmentKind,
};
use crate::corpus::{
    load_tsv, save_tsv, split_dataset, synth_generate, DatasetSplit, Document, SynthSpec,
    TsvColumns, Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::{
    metrics_report, rationale_dump, render_table, select_checkpoint, select_max_f1,
    MetricsReport, Selection,
};
use crate::game::{predict_label, train, TrainConfig, TrainMode};
use crate::checkpoint::Checkpoint;

pub const SIDECAR_FILE: &str = "synth_meta.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const DEV_REPORTS_FILE: &str = "dev_reports.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LEXICON_DIR: &str = "lexicons";

const SPLIT_FILES: [&str; 3] = ["train.tsv", "dev.tsv", "test.tsv"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Write-once record of a training run: multi-seed aggregation is only
/// meaningful when every run saw identical inputs, which the digests prove.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<()> {
    let text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let mut vocab: Vocabulary = read_json(path)?;
    vocab.rebuild_index();
    Ok(vocab)
}

fn mkdirs(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Generates a synthetic corpus: three TSV splits, a JSON sidecar with the
/// spec and realized statistics, and lexicon files mapping the spurious
/// tokens to nOI and the toxic-signal tokens to OnI.
pub fn run_synth(spec_path: Option<&Path>, out: &Path, seed: Option<u64>, force: bool) -> Result<()> {
    let mut spec: SynthSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }

    let marker = out.join(SIDECAR_FILE);
    if marker.exists() && !force {
        return Err(Error::OutputExists(marker));
    }
    mkdirs(out)?;

    let result = synth_generate(&spec)?;
    let split = &result.split;
    save_tsv(&split.train, &out.join("train.tsv"), TsvColumns::Tagged)?;
    save_tsv(&split.dev, &out.join("dev.tsv"), TsvColumns::Tagged)?;
    save_tsv(&split.test, &out.join("test.tsv"), TsvColumns::Tagged)?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        spec: &'a SynthSpec,
        realized: &'a crate::corpus::RealizedStats,
    }
    write_json(
        &marker,
        &Sidecar {
            spec: &spec,
            realized: &result.realized,
        },
        true,
    )?;

    let lexdir = out.join(LEXICON_DIR);
    mkdirs(&lexdir)?;
    let write_words = |name: &str, header: &str, words: &[String]| -> Result<()> {
        let path = lexdir.join(name);
        let mut text = format!("# {header}\n");
        for w in words {
            text.push_str(w);
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    };
    write_words("noi.txt", "spurious tokens (identity-mention analog)", &spec.spurious_tokens)?;
    write_words("oi.txt", "unused in synthetic corpora", &[])?;
    write_words("oni.txt", "toxic-signal tokens (swear-word analog)", &spec.toxic_tokens)?;
    for name in ["aae.txt", "wae.txt", "hispanic.txt"] {
        write_words(name, "no dialect markers in synthetic corpora", &[])?;
    }

    println!(
        "wrote {} train / {} dev / {} test documents to {}",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        out.display()
    );
    for env in &result.realized.per_environment {
        let p = env
            .p_toxic_given_spurious
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "  env {}: {} docs, realized P(toxic | spurious) = {p}",
            env.environment, env.n_docs
        );
    }
    Ok(())
}

/// Tags every split of a corpus with lexical attributes, a dialect (file
/// column wins over the proxy), and an environment id per `kind`. With
/// `preserve_env`, existing environment ids (e.g. from the synthesizer) are
/// kept.
pub fn run_tag(
    corpus: &Path,
    lexicons: &Path,
    kind: EnvironmentKind,
    out: Option<&Path>,
    preserve_env: bool,
) -> Result<()> {
    let lex = AttributeLexicon::load_dir(lexicons)?;
    let dlex = DialectLexicon::load_dir(lexicons)?;
    let out_dir = out.unwrap_or(corpus);
    mkdirs(out_dir)?;

    let mut attr_counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut env_counts: BTreeMap<u8, usize> = BTreeMap::new();
    let mut total = 0usize;

    for name in SPLIT_FILES {
        let path = corpus.join(name);
        let (mut docs, vocab) = load_tsv(&path, None)?;
        for doc in &mut docs {
            doc.attributes = tag_lexical(doc, &lex, &vocab);
            if doc.dialect.is_none() {
                doc.dialect = Some(tag_dialect(doc, &dlex, &vocab));
            }
            if !(preserve_env && doc.environment.is_some()) {
                doc.environment = Some(assign_environment(doc, kind).index);
            }
            total += 1;
            for a in doc.attributes.iter() {
                *attr_counts.entry(a.as_str()).or_insert(0) += 1;
            }
            *env_counts.entry(doc.environment.unwrap()).or_insert(0) += 1;
        }
        save_tsv(&docs, &out_dir.join(name), TsvColumns::Tagged)?;
    }

    println!("tagged {total} documents ({kind:?} environments)");
    for (attr, count) in &attr_counts {
        println!(
            "  {attr}: {count} ({:.1}%)",
            100.0 * *count as f64 / total as f64
        );
    }
    for (env, count) in &env_counts {
        println!(
            "  env {env}: {count} ({:.1}%)",
            100.0 * *count as f64 / total as f64
        );
    }
    Ok(())
}

pub struct TrainArgs<'a> {
    pub corpus: &'a Path,
    pub out: &'a Path,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub lexicons: Option<&'a Path>,
    pub force: bool,
}

fn load_corpus(dir: &Path, cfg: &TrainConfig) -> Result<(DatasetSplit, Vocabulary, Vec<FileDigest>)> {
    let split_paths: Vec<PathBuf> = SPLIT_FILES.iter().map(|n| dir.join(n)).collect();
    if split_paths.iter().all(|p| p.exists()) {
        let mut digests = Vec::new();
        for p in &split_paths {
            digests.push(FileDigest {
                name: p.file_name().unwrap().to_string_lossy().into_owned(),
                sha256: sha256_file(p)?,
            });
        }
        let (train_docs, vocab) = load_train_file(&split_paths[0], cfg)?;
        let (dev_docs, _) = load_tsv(&split_paths[1], Some(&vocab))?;
        let (test_docs, _) = load_tsv(&split_paths[2], Some(&vocab))?;
        let split = DatasetSplit {
            train: train_docs,
            dev: dev_docs,
            test: test_docs,
            fractions: [0.0, 0.0, 0.0],
            seed: cfg.seed,
        };
        return Ok((split, vocab, digests));
    }

    // Unsplit corpus: a single corpus.tsv cut by the configured fractions.
    let single = dir.join("corpus.tsv");
    if !single.exists() {
        return Err(Error::Cli(format!(
            "corpus directory {} holds neither train/dev/test.tsv nor corpus.tsv",
            dir.display()
        )));
    }
    let digests = vec![FileDigest {
        name: "corpus.tsv".into(),
        sha256: sha256_file(&single)?,
    }];
    let (docs, _) = load_tsv(&single, None)?;
    let split = split_dataset(docs, cfg.split_fractions, cfg.seed)?;
    let (train_docs, vocab) = {
        let texts: Vec<&str> = split.train.iter().map(|d| d.raw_text.as_str()).collect();
        let vocab = crate::corpus::build_vocab(&texts, cfg.min_count)?;
        let docs = retokenize(split.train.clone(), &vocab)?;
        (docs, vocab)
    };
    let dev = retokenize(split.dev.clone(), &vocab)?;
    let test = retokenize(split.test.clone(), &vocab)?;
    Ok((
        DatasetSplit {
            train: train_docs,
            dev,
            test,
            fractions: split.fractions,
            seed: split.seed,
        },
        vocab,
        digests,
    ))
}

fn load_train_file(path: &Path, cfg: &TrainConfig) -> Result<(Vec<Document>, Vocabulary)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    // Vocabulary from the train texts under the configured min_count.
    let (docs, _) = crate::corpus::load_tsv_str(&text, &path.display().to_string(), None)?;
    let texts: Vec<&str> = docs.iter().map(|d| d.raw_text.as_str()).collect();
    let vocab = crate::corpus::build_vocab(&texts, cfg.min_count)?;
    let docs = retokenize(docs, &vocab)?;
    Ok((docs, vocab))
}

fn retokenize(mut docs: Vec<Document>, vocab: &Vocabulary) -> Result<Vec<Document>> {
    for d in &mut docs {
        d.tokens = crate::corpus::tokenize(&d.raw_text, vocab)
            .map_err(|_| Error::EmptyAfterTokenization { id: d.id.clone() })?;
    }
    Ok(docs)
}

/// Trains one run directory per seed. Lexical-removal mode filters the
/// corpus through the lexicons first and copies them into each run directory
/// so evaluation can apply the same filter to the test set.
pub fn run_train(args: TrainArgs) -> Result<()> {
    args.config.validate()?;
    let (mut split, vocab, mut digests) = load_corpus(args.corpus, &args.config)?;

    let lexicon = match (args.config.mode, args.lexicons) {
        (TrainMode::LexicalRemoval, Some(dir)) => {
            for name in ["noi.txt", "oi.txt", "oni.txt"] {
                let p = dir.join(name);
                digests.push(FileDigest {
                    name: name.into(),
                    sha256: sha256_file(&p)?,
                });
            }
            Some((AttributeLexicon::load_dir(dir)?, dir))
        }
        (TrainMode::LexicalRemoval, None) => {
            return Err(Error::Cli(
                "--lexicons is required for lexical-removal mode".into(),
            ))
        }
        _ => None,
    };
    if let Some((lex, _)) = &lexicon {
        for part in [&mut split.train, &mut split.dev, &mut split.test] {
            for doc in part.iter_mut() {
                *doc = remove_lexicon_tokens(doc, lex, &vocab);
            }
        }
    }

    if args.config.mode.has_generator() {
        if let Some(d) = split.train.iter().find(|d| d.environment.is_none()) {
            return Err(Error::Cli(format!(
                "invrat mode needs a tagged corpus: document {:?} has no environment (run `invrat tag` first)",
                d.id
            )));
        }
    }

    for &seed in &args.seeds {
        let run_dir = args.out.join(format!("seed-{seed}"));
        if run_dir.exists() {
            if !args.force {
                return Err(Error::OutputExists(run_dir));
            }
            std::fs::remove_dir_all(&run_dir)
                .map_err(|e| Error::io(run_dir.display().to_string(), e))?;
        }
        mkdirs(&run_dir.join(CHECKPOINT_DIR))?;

        let cfg = TrainConfig {
            seed,
            ..args.config.clone()
        };
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seeds: args.seeds.clone(),
            inputs: digests.clone(),
            outputs: vec![
                MANIFEST_FILE.into(),
                VOCAB_FILE.into(),
                LOG_FILE.into(),
                DEV_REPORTS_FILE.into(),
                format!("{CHECKPOINT_DIR}/"),
            ],
        };
        write_json(&run_dir.join(MANIFEST_FILE), &manifest, true)?;
        write_json(&run_dir.join(VOCAB_FILE), &vocab, false)?;
        if let Some((_, dir)) = &lexicon {
            let dst = run_dir.join(LEXICON_DIR);
            mkdirs(&dst)?;
            for name in ["noi.txt", "oi.txt", "oni.txt"] {
                std::fs::copy(dir.join(name), dst.join(name))
                    .map_err(|e| Error::io(dir.join(name).display().to_string(), e))?;
            }
        }

        let output = train(&split, &vocab, &cfg)?;

        let mut log = String::new();
        for step in &output.steps {
            log.push_str(
                &serde_json::to_string(step).map_err(|e| Error::json(LOG_FILE.to_string(), e))?,
            );
            log.push('\n');
        }
        let log_path = run_dir.join(LOG_FILE);
        std::fs::write(&log_path, log).map_err(|e| Error::io(log_path.display().to_string(), e))?;

        let reports: Vec<&MetricsReport> = output.epochs.iter().map(|e| &e.dev_report).collect();
        write_json(&run_dir.join(DEV_REPORTS_FILE), &reports, true)?;
        for record in &output.epochs {
            let path = run_dir
                .join(CHECKPOINT_DIR)
                .join(format!("epoch-{:03}.json", record.epoch));
            record.checkpoint.save(&path)?;
        }

        let last = output.epochs.last().unwrap();
        println!(
            "seed {seed}: {} epochs, final dev F1 {:.3} -> {}",
            output.epochs.len(),
            last.dev_report.overall_f1,
            run_dir.display()
        );
    }
    Ok(())
}

/// Per-run evaluation result as written to the eval JSON output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEval {
    pub run_dir: String,
    pub seed: u64,
    pub mode: TrainMode,
    pub selection: Selection,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutput {
    pub test_file: String,
    pub runs: Vec<RunEval>,
}

fn select_for_mode(mode: TrainMode, reports: &[MetricsReport]) -> Result<Selection> {
    match mode {
        TrainMode::Invrat => select_checkpoint(reports, 3.0, false),
        _ => select_max_f1(reports),
    }
}

fn load_run_checkpoint(run_dir: &Path, selection: &Selection) -> Result<Checkpoint> {
    let path = run_dir
        .join(CHECKPOINT_DIR)
        .join(format!("epoch-{:03}.json", selection.checkpoint_id));
    Checkpoint::load(&path)
}

/// Applies the checkpoint-selection rule per run, evaluates on the test
/// file, prints the per-run and aggregate table, and optionally writes the
/// JSON report.
pub fn run_eval(
    runs: &[PathBuf],
    test: &Path,
    lexicons: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::Cli("eval needs at least one --runs directory".into()));
    }
    let test_digest = sha256_file(test)?;
    let test_name = test
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut evals = Vec::new();
    for run_dir in runs {
        let manifest: RunManifest = read_json(&run_dir.join(MANIFEST_FILE))?;
        if let Some(entry) = manifest.inputs.iter().find(|d| d.name == test_name) {
            if entry.sha256 != test_digest {
                return Err(Error::DigestMismatch {
                    name: test_name.clone(),
                    expected: entry.sha256.clone(),
                    actual: test_digest.clone(),
                });
            }
        } else {
            eprintln!(
                "note: {} is not among the manifest inputs of {}; digest not checked",
                test_name,
                run_dir.display()
            );
        }

        let vocab = load_vocab(&run_dir.join(VOCAB_FILE))?;
        let dev_reports: Vec<MetricsReport> = read_json(&run_dir.join(DEV_REPORTS_FILE))?;
        let selection = select_for_mode(manifest.config.mode, &dev_reports)?;
        let ckpt = load_run_checkpoint(run_dir, &selection)?;

        let (mut docs, _) = load_tsv(test, Some(&vocab))?;
        if let Some(dir) = lexicons {
            let lex = AttributeLexicon::load_dir(dir)?;
            let dlex = DialectLexicon::load_dir(dir)?;
            for doc in &mut docs {
                doc.attributes = tag_lexical(doc, &lex, &vocab);
                if doc.dialect.is_none() {
                    doc.dialect = Some(tag_dialect(doc, &dlex, &vocab));
                }
            }
        }
        if manifest.config.mode == TrainMode::LexicalRemoval {
            let lex = AttributeLexicon::load_dir(&run_dir.join(LEXICON_DIR))?;
            for doc in &mut docs {
                *doc = remove_lexicon_tokens(doc, &lex, &vocab);
            }
        }

        let generator = ckpt.generator.as_ref();
        let mut preds = Vec::with_capacity(docs.len());
        let mut golds = Vec::with_capacity(docs.len());
        for d in &docs {
            let (label, _) = predict_label(&ckpt.f_i, generator, &d.tokens)?;
            preds.push(label);
            golds.push(d.label);
        }
        let report = metrics_report(&preds, &golds, &docs, manifest.config.seed, ckpt.epoch)?;
        evals.push(RunEval {
            run_dir: run_dir.display().to_string(),
            seed: manifest.config.seed,
            mode: manifest.config.mode,
            selection,
            report,
        });
    }

    let mut rows: Vec<(String, Vec<MetricsReport>)> = evals
        .iter()
        .map(|e| {
            let label = Path::new(&e.run_dir)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| e.run_dir.clone());
            (label, vec![e.report.clone()])
        })
        .collect();
    if evals.len() > 1 {
        rows.push((
            "mean".to_string(),
            evals.iter().map(|e| e.report.clone()).collect(),
        ));
    }
    print!("{}", render_table(&rows));

    if let Some(path) = out {
        write_json(
            path,
            &EvalOutput {
                test_file: test.display().to_string(),
                runs: evals,
            },
            true,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DumpFormat {
    Text,
    Json,
}

/// Dumps deterministic rationales from a run's selected checkpoint.
pub fn run_rationales(run_dir: &Path, input: &Path, limit: usize, format: DumpFormat) -> Result<()> {
    let manifest: RunManifest = read_json(&run_dir.join(MANIFEST_FILE))?;
    if !manifest.config.mode.has_generator() {
        return Err(Error::NoGenerator {
            mode: manifest.config.mode.as_str().to_string(),
        });
    }
    let vocab = load_vocab(&run_dir.join(VOCAB_FILE))?;
    let dev_reports: Vec<MetricsReport> = read_json(&run_dir.join(DEV_REPORTS_FILE))?;
    let selection = select_for_mode(manifest.config.mode, &dev_reports)?;
    let ckpt = load_run_checkpoint(run_dir, &selection)?;
    let (docs, _) = load_tsv(input, Some(&vocab))?;

    let records = rationale_dump(&ckpt, &vocab, &docs, limit)?;
    match format {
        DumpFormat::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&records)
                    .map_err(|e| Error::json("rationales", e))?
            );
        }
        DumpFormat::Text => {
            for r in &records {
                let pred = if r.prediction == crate::corpus::Label::Toxic {
                    "toxic"
                } else {
                    "non-toxic"
                };
                let gold = if r.gold == crate::corpus::Label::Toxic {
                    "toxic"
                } else {
                    "non-toxic"
                };
                println!("[pred={pred} gold={gold}] {}", r.marked_text);
            }
        }
    }
    Ok(())
}

/// Renders a combined grid from saved eval JSON files (one row group per
/// file).
pub fn run_report(inputs: &[PathBuf]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Cli("report needs at least one eval JSON file".into()));
    }
    let mut rows = Vec::new();
    for path in inputs {
        let eval: EvalOutput = read_json(path)?;
        let label = path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push((label, eval.runs.iter().map(|r| r.report.clone()).collect()));
    }
    print!("{}", render_table(&rows));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_through_json() {
        let manifest = RunManifest {
            tool_version: "0.1.0".into(),
            config: TrainConfig::default(),
            seeds: vec![1, 2, 3],
            inputs: vec![FileDigest {
                name: "train.tsv".into(),
                sha256: "ab".into(),
            }],
            outputs: vec!["manifest.json".into()],
        };
        let text = serde_json::to_string(&manifest).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seeds, manifest.seeds);
        assert_eq!(back.inputs[0].name, "train.tsv");
    }

    #[test]
    fn synth_writes_corpus_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("corpus");
        run_synth(None, &out, Some(5), false).unwrap();
        for name in ["train.tsv", "dev.tsv", "test.tsv", SIDECAR_FILE] {
            assert!(out.join(name).exists(), "{name} missing");
        }
        assert!(out.join(LEXICON_DIR).join("noi.txt").exists());
        // Rerun without --force fails; with --force reproduces identical bytes.
        assert!(run_synth(None, &out, Some(5), false).is_err());
        let before = sha256_file(&out.join("train.tsv")).unwrap();
        run_synth(None, &out, Some(5), true).unwrap();
        let after = sha256_file(&out.join("train.tsv")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn tag_assigns_lexical_environments() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        run_synth(None, &corpus, Some(5), false).unwrap();
        run_tag(
            &corpus,
            &corpus.join(LEXICON_DIR),
            EnvironmentKind::Lexical,
            None,
            true,
        )
        .unwrap();
        let (docs, _) = load_tsv(&corpus.join("test.tsv"), None).unwrap();
        // Docs containing the spurious token are tagged nOI; signal docs OnI.
        let spurious_tagged = docs.iter().filter(|d| d.attributes.noi).count();
        assert!(spurious_tagged > 0);
        let has_tox = docs.iter().filter(|d| d.attributes.oni).count();
        assert!(has_tox > 0);
        // preserve_env kept the synthesized environments (0 or 1 only).
        assert!(docs.iter().all(|d| d.environment.unwrap() <= 1));
    }
}
