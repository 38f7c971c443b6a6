//! Data model, tokenization, TSV ingestion, dataset splitting, and the
//! synthetic biased-corpus generator.
//!
//! The on-disk corpus format is a headerless UTF-8 TSV:
//!
//! ```text
//! id<TAB>text<TAB>label[<TAB>dialect[<TAB>attributes[<TAB>environment]]]
//! ```
//!
//! where `label` is one of `0`, `1`, `toxic`, `non-toxic`; `dialect` is one of
//! `aae`, `wae`, `hispanic`, `other` (or `-` for untagged); `attributes` is a
//! comma-joined subset of `noi,oi,oni` (or `-`); and `environment` is an
//! integer in `0..=3` (or `-`).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASKED_ID: u32 = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const MASKED_TOKEN: &str = "<masked>";

/// Binary toxicity label. The positive class is `Toxic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NonToxic,
    Toxic,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::NonToxic => 0,
            Label::Toxic => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::NonToxic
        } else {
            Label::Toxic
        }
    }
}

/// Dialect class assigned by the marker-lexicon proxy (or read from the
/// corpus file when a dialect column is present).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Aae,
    Wae,
    Hispanic,
    Other,
}

impl Dialect {
    pub fn index(self) -> u8 {
        match self {
            Dialect::Aae => 0,
            Dialect::Wae => 1,
            Dialect::Hispanic => 2,
            Dialect::Other => 3,
        }
    }

    pub fn parse(s: &str) -> Option<Dialect> {
        match s.to_ascii_lowercase().as_str() {
            "aae" => Some(Dialect::Aae),
            "wae" => Some(Dialect::Wae),
            "hispanic" => Some(Dialect::Hispanic),
            "other" => Some(Dialect::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Aae => "aae",
            Dialect::Wae => "wae",
            Dialect::Hispanic => "hispanic",
            Dialect::Other => "other",
        }
    }
}

/// Lexical attribute categories: non-offensive identity mentions, offensive
/// identity words, and offensive non-identity words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    NOi,
    Oi,
    OnI,
}

impl Attribute {
    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::NOi => "noi",
            Attribute::Oi => "oi",
            Attribute::OnI => "oni",
        }
    }

    pub fn parse(s: &str) -> Option<Attribute> {
        match s.to_ascii_lowercase().as_str() {
            "noi" => Some(Attribute::NOi),
            "oi" => Some(Attribute::Oi),
            "oni" => Some(Attribute::OnI),
            _ => None,
        }
    }
}

/// Set of lexical attributes carried by a document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub noi: bool,
    pub oi: bool,
    pub oni: bool,
}

impl AttributeSet {
    pub const EMPTY: AttributeSet = AttributeSet {
        noi: false,
        oi: false,
        oni: false,
    };

    pub fn contains(&self, a: Attribute) -> bool {
        match a {
            Attribute::NOi => self.noi,
            Attribute::Oi => self.oi,
            Attribute::OnI => self.oni,
        }
    }

    pub fn insert(&mut self, a: Attribute) {
        match a {
            Attribute::NOi => self.noi = true,
            Attribute::Oi => self.oi = true,
            Attribute::OnI => self.oni = true,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.noi || self.oi || self.oni)
    }

    pub fn iter(&self) -> impl Iterator<Item = Attribute> + '_ {
        [Attribute::NOi, Attribute::Oi, Attribute::OnI]
            .into_iter()
            .filter(|a| self.contains(*a))
    }

    fn to_column(self) -> String {
        if self.is_empty() {
            "-".to_string()
        } else {
            self.iter()
                .map(|a| a.as_str())
                .collect::<Vec<_>>()
                .join(",")
        }
    }

    fn parse_column(s: &str) -> Option<AttributeSet> {
        let mut set = AttributeSet::default();
        if s == "-" || s.is_empty() {
            return Some(set);
        }
        for part in s.split(',') {
            set.insert(Attribute::parse(part)?);
        }
        Some(set)
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_column())
    }
}

/// A single text instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<u32>,
    pub label: Label,
    pub attributes: AttributeSet,
    /// `None` until a dialect has been assigned (file column or proxy).
    pub dialect: Option<Dialect>,
    /// Environment index in `0..=3`; `None` until assigned.
    pub environment: Option<u8>,
}

/// Token/id bijection with reserved entries at fixed positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    fn with_reserved() -> Vocabulary {
        let mut v = Vocabulary {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
        };
        for tok in [PAD_TOKEN, UNK_TOKEN, MASKED_TOKEN] {
            v.push(tok.to_string());
        }
        v
    }

    /// Builds a vocabulary from an explicit, already-normalized token list.
    /// Reserved entries are prepended; duplicates are rejected.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Vocabulary> {
        let mut v = Vocabulary::with_reserved();
        for tok in tokens {
            if v.token_to_id.contains_key(&tok) {
                return Err(Error::InvalidSpec(format!("duplicate vocabulary token {tok:?}")));
            }
            v.push(tok);
        }
        Ok(v)
    }

    fn push(&mut self, token: String) {
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
    }

    /// Rebuilds the token->id map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }
}

/// Lowercases and splits `raw` into surface tokens. Token characters are
/// alphanumerics plus `* ' # @ _ -`; every other character separates tokens
/// and is dropped. This keeps censored forms like `f**king` and tags like
/// `#topic`/`@user` intact as single tokens.
pub fn normalize(raw: &str) -> Vec<String> {
    let lower = raw.to_lowercase();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in lower.chars() {
        if ch.is_alphanumeric() || matches!(ch, '*' | '\'' | '#' | '@' | '_' | '-') {
            cur.push(ch);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Maps `raw_text` to token ids under `vocab`; unknown tokens become UNK.
///
/// # Errors
/// `EmptyAfterTokenization` when normalization leaves no tokens.
pub fn tokenize(raw_text: &str, vocab: &Vocabulary) -> Result<Vec<u32>> {
    let surface = normalize(raw_text);
    if surface.is_empty() {
        return Err(Error::EmptyAfterTokenization {
            id: raw_text.chars().take(32).collect(),
        });
    }
    Ok(surface
        .iter()
        .map(|t| vocab.id(t).unwrap_or(UNK_ID))
        .collect())
}

/// Builds a vocabulary from raw texts: tokens with frequency >= `min_count`,
/// ordered by frequency descending then lexicographically, after the three
/// reserved entries.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_count: usize) -> Result<Vocabulary> {
    assert!(min_count >= 1, "min_count must be >= 1");
    if texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in normalize(text.as_ref()) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t))
}

fn parse_label(s: &str) -> Option<Label> {
    match s.to_ascii_lowercase().as_str() {
        "0" | "non-toxic" => Some(Label::NonToxic),
        "1" | "toxic" => Some(Label::Toxic),
        _ => None,
    }
}

/// Loads a TSV corpus file. When `vocab` is `None`, a vocabulary is built
/// from this file's texts (min_count 1) and returned alongside the documents.
pub fn load_tsv(path: &Path, vocab: Option<&Vocabulary>) -> Result<(Vec<Document>, Vocabulary)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_tsv_str(&text, &path.display().to_string(), vocab)
}

/// As [`load_tsv`] but over an in-memory string; `path` is used in errors.
pub fn load_tsv_str(
    content: &str,
    path: &str,
    vocab: Option<&Vocabulary>,
) -> Result<(Vec<Document>, Vocabulary)> {
    struct Row {
        id: String,
        text: String,
        label: Label,
        dialect: Option<Dialect>,
        attributes: AttributeSet,
        environment: Option<u8>,
    }

    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 6 {
            return Err(Error::MalformedRow {
                path: path.to_string(),
                line: lineno,
                reason: format!("expected 3..=6 tab-separated fields, found {}", fields.len()),
            });
        }
        let label = parse_label(fields[2]).ok_or_else(|| Error::UnknownLabel {
            path: path.to_string(),
            line: lineno,
            value: fields[2].to_string(),
        })?;
        let dialect = match fields.get(3) {
            None => None,
            Some(&"-") => None,
            Some(s) => Some(Dialect::parse(s).ok_or_else(|| Error::MalformedRow {
                path: path.to_string(),
                line: lineno,
                reason: format!("unknown dialect {s:?}"),
            })?),
        };
        let attributes = match fields.get(4) {
            None => AttributeSet::default(),
            Some(s) => AttributeSet::parse_column(s).ok_or_else(|| Error::MalformedRow {
                path: path.to_string(),
                line: lineno,
                reason: format!("unknown attribute list {s:?}"),
            })?,
        };
        let environment = match fields.get(5) {
            None => None,
            Some(&"-") => None,
            Some(s) => {
                let idx: u8 = s.parse().map_err(|_| Error::MalformedRow {
                    path: path.to_string(),
                    line: lineno,
                    reason: format!("environment must be an integer in 0..=3, found {s:?}"),
                })?;
                if idx > 3 {
                    return Err(Error::MalformedRow {
                        path: path.to_string(),
                        line: lineno,
                        reason: format!("environment index {idx} out of range 0..=3"),
                    });
                }
                Some(idx)
            }
        };
        rows.push(Row {
            id: fields[0].to_string(),
            text: fields[1].to_string(),
            label,
            dialect,
            attributes,
            environment,
        });
    }

    let owned_vocab;
    let vocab_ref = match vocab {
        Some(v) => v,
        None => {
            let texts: Vec<&str> = rows.iter().map(|r| r.text.as_str()).collect();
            owned_vocab = build_vocab(&texts, 1)?;
            &owned_vocab
        }
    };

    let mut docs = Vec::with_capacity(rows.len());
    for row in &rows {
        let tokens = tokenize(&row.text, vocab_ref).map_err(|_| Error::EmptyAfterTokenization {
            id: row.id.clone(),
        })?;
        docs.push(Document {
            id: row.id.clone(),
            raw_text: row.text.clone(),
            tokens,
            label: row.label,
            attributes: row.attributes,
            dialect: row.dialect,
            environment: row.environment,
        });
    }
    Ok((docs, vocab_ref.clone()))
}

/// Which optional columns to emit when writing a TSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsvColumns {
    /// id, text, label
    Basic,
    /// id, text, label, dialect
    WithDialect,
    /// id, text, label, dialect, attributes, environment
    Tagged,
}

pub fn format_tsv(docs: &[Document], columns: TsvColumns) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&d.id);
        out.push('\t');
        out.push_str(&d.raw_text);
        out.push('\t');
        out.push_str(if d.label == Label::Toxic { "1" } else { "0" });
        if columns != TsvColumns::Basic {
            out.push('\t');
            out.push_str(d.dialect.map_or("-", Dialect::as_str));
        }
        if columns == TsvColumns::Tagged {
            out.push('\t');
            out.push_str(&d.attributes.to_column());
            out.push('\t');
            match d.environment {
                Some(e) => out.push_str(&e.to_string()),
                None => out.push('-'),
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_tsv(docs: &[Document], path: &Path, columns: TsvColumns) -> Result<()> {
    std::fs::write(path, format_tsv(docs, columns))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Train/dev/test partition of a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub test: Vec<Document>,
    pub fractions: [f64; 3],
    pub seed: u64,
}

/// Seeded shuffle followed by a contiguous cut at the rounded fraction
/// boundaries. Stable under identical seeds.
pub fn split_dataset(docs: Vec<Document>, fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(fractions));
    }
    let mut docs = docs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.shuffle(&mut rng);

    let n = docs.len();
    let cut1 = (fractions[0] * n as f64).round() as usize;
    let cut2 = ((fractions[0] + fractions[1]) * n as f64).round() as usize;
    let cut1 = cut1.min(n);
    let cut2 = cut2.clamp(cut1, n);

    let test = docs.split_off(cut2);
    let dev = docs.split_off(cut1);
    let train = docs;
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        if part.is_empty() {
            return Err(Error::EmptySplit { name });
        }
    }
    Ok(DatasetSplit {
        train,
        dev,
        test,
        fractions,
        seed,
    })
}

/// Specification for the synthetic biased corpus.
///
/// Toxic-signal tokens `T` appear (up to label noise) exactly in toxic
/// documents, in every environment alike. Spurious tokens `S` co-occur with
/// the toxic label at a rate that differs per environment, so their
/// predictive power is environment-dependent while `T`'s is not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub len_min: usize,
    pub len_max: usize,
    /// Number of filler tokens (`w000`, `w001`, ...).
    pub base_vocab: usize,
    pub toxic_tokens: Vec<String>,
    pub spurious_tokens: Vec<String>,
    /// Per-environment P(S present | label = toxic). Length 2..=4.
    pub env_correlations: Vec<f64>,
    /// P(S present | label = non-toxic). `None` means the symmetric
    /// complement `1 - env_correlations[e]` per environment.
    pub negative_spurious_rate: Option<f64>,
    pub label_prior: f64,
    /// Probability that a toxic document hides its signal token (annotation
    /// noise). Non-toxic documents never carry a signal token.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_train: 2000,
            n_dev: 400,
            n_test: 400,
            len_min: 6,
            len_max: 12,
            base_vocab: 100,
            toxic_tokens: vec!["toxsig0".into(), "toxsig1".into(), "toxsig2".into()],
            spurious_tokens: vec!["spur0".into()],
            env_correlations: vec![0.9, 0.5],
            negative_spurious_rate: None,
            label_prior: 0.5,
            noise_rate: 0.02,
            seed: 13,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidSpec(m));
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return err("all split sizes must be >= 1".into());
        }
        if self.len_min < 2 || self.len_max < self.len_min {
            return err(format!(
                "document length range must satisfy 2 <= min <= max, got {}..{}",
                self.len_min, self.len_max
            ));
        }
        if self.base_vocab == 0 {
            return err("base_vocab must be >= 1".into());
        }
        if self.toxic_tokens.is_empty() || self.spurious_tokens.is_empty() {
            return err("toxic_tokens and spurious_tokens must be non-empty".into());
        }
        if self
            .toxic_tokens
            .iter()
            .any(|t| self.spurious_tokens.contains(t))
        {
            return err("toxic_tokens and spurious_tokens must be disjoint".into());
        }
        let n_env = self.env_correlations.len();
        if !(2..=4).contains(&n_env) {
            return err(format!("need 2..=4 environments, got {n_env}"));
        }
        if self
            .env_correlations
            .windows(2)
            .all(|w| (w[0] - w[1]).abs() < 1e-12)
        {
            return err("environments must have at least two distinct correlation values".into());
        }
        let mut probs = vec![self.label_prior, self.noise_rate];
        probs.extend_from_slice(&self.env_correlations);
        if let Some(p) = self.negative_spurious_rate {
            probs.push(p);
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p) || !p.is_finite()) {
            return err("all probabilities must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Realized per-environment statistics of a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvStats {
    pub environment: u8,
    pub n_docs: usize,
    pub n_toxic: usize,
    pub n_spurious: usize,
    pub n_spurious_toxic: usize,
    /// Realized P(label = toxic | S present); `None` when S never appeared.
    pub p_toxic_given_spurious: Option<f64>,
    pub p_spurious_given_toxic: Option<f64>,
    pub p_spurious_given_non_toxic: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizedStats {
    pub n_docs: usize,
    pub label_prior: f64,
    pub per_environment: Vec<EnvStats>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub split: DatasetSplit,
    pub vocab: Vocabulary,
    pub realized: RealizedStats,
}

/// Generates a corpus according to `spec`. Deterministic under the spec seed:
/// identical specs yield byte-identical corpora.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let filler: Vec<String> = (0..spec.base_vocab).map(|i| format!("w{i:03}")).collect();
    let mut all_tokens: Vec<String> = Vec::new();
    all_tokens.extend(spec.toxic_tokens.iter().cloned());
    all_tokens.extend(spec.spurious_tokens.iter().cloned());
    all_tokens.extend(filler.iter().cloned());
    let vocab = Vocabulary::from_tokens(all_tokens)?;

    let toxic_ids: Vec<u32> = spec.toxic_tokens.iter().map(|t| vocab.id(t).unwrap()).collect();
    let spur_ids: Vec<u32> = spec.spurious_tokens.iter().map(|t| vocab.id(t).unwrap()).collect();
    let filler_ids: Vec<u32> = filler.iter().map(|t| vocab.id(t).unwrap()).collect();

    let n_env = spec.env_correlations.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let generate = |name: &str, count: usize, rng: &mut ChaCha8Rng| -> Vec<Document> {
        let mut docs = Vec::with_capacity(count);
        for i in 0..count {
            let env = rng.random_range(0..n_env) as u8;
            let toxic = rng.random_bool(spec.label_prior);
            let len = rng.random_range(spec.len_min..=spec.len_max);
            let mut tokens: Vec<u32> = (0..len)
                .map(|_| filler_ids[rng.random_range(0..filler_ids.len())])
                .collect();

            // Noise hides the signal from toxic documents; non-toxic
            // documents never carry a signal token.
            let signal_present = toxic && !rng.random_bool(spec.noise_rate);
            let mut signal_pos = None;
            if signal_present {
                let pos = rng.random_range(0..len);
                tokens[pos] = toxic_ids[rng.random_range(0..toxic_ids.len())];
                signal_pos = Some(pos);
            }

            let corr = spec.env_correlations[env as usize];
            let p_spur = if toxic {
                corr
            } else {
                spec.negative_spurious_rate.unwrap_or(1.0 - corr)
            };
            if rng.random_bool(p_spur) {
                // Avoid overwriting the signal token.
                let pos = match signal_pos {
                    Some(sp) => {
                        let mut p = rng.random_range(0..len - 1);
                        if p >= sp {
                            p += 1;
                        }
                        p
                    }
                    None => rng.random_range(0..len),
                };
                tokens[pos] = spur_ids[rng.random_range(0..spur_ids.len())];
            }

            let raw_text = tokens
                .iter()
                .map(|&t| vocab.token(t).unwrap())
                .collect::<Vec<_>>()
                .join(" ");
            docs.push(Document {
                id: format!("synth-{name}-{i:05}"),
                raw_text,
                tokens,
                label: if toxic { Label::Toxic } else { Label::NonToxic },
                attributes: AttributeSet::default(),
                dialect: None,
                environment: Some(env),
            });
        }
        docs
    };

    let train = generate("train", spec.n_train, &mut rng);
    let dev = generate("dev", spec.n_dev, &mut rng);
    let test = generate("test", spec.n_test, &mut rng);

    let spur_id_set: Vec<u32> = spur_ids.clone();
    let mut per_env: Vec<EnvStats> = (0..n_env)
        .map(|e| EnvStats {
            environment: e as u8,
            n_docs: 0,
            n_toxic: 0,
            n_spurious: 0,
            n_spurious_toxic: 0,
            p_toxic_given_spurious: None,
            p_spurious_given_toxic: None,
            p_spurious_given_non_toxic: None,
        })
        .collect();
    let mut n_toxic_total = 0usize;
    let all = train.iter().chain(dev.iter()).chain(test.iter());
    let mut n_docs = 0usize;
    for d in all {
        n_docs += 1;
        let e = d.environment.unwrap() as usize;
        let has_spur = d.tokens.iter().any(|t| spur_id_set.contains(t));
        let stats = &mut per_env[e];
        stats.n_docs += 1;
        if d.label == Label::Toxic {
            stats.n_toxic += 1;
            n_toxic_total += 1;
        }
        if has_spur {
            stats.n_spurious += 1;
            if d.label == Label::Toxic {
                stats.n_spurious_toxic += 1;
            }
        }
    }
    for s in &mut per_env {
        if s.n_spurious > 0 {
            s.p_toxic_given_spurious = Some(s.n_spurious_toxic as f64 / s.n_spurious as f64);
        }
        if s.n_toxic > 0 {
            s.p_spurious_given_toxic = Some(s.n_spurious_toxic as f64 / s.n_toxic as f64);
        }
        let n_neg = s.n_docs - s.n_toxic;
        if n_neg > 0 {
            s.p_spurious_given_non_toxic =
                Some((s.n_spurious - s.n_spurious_toxic) as f64 / n_neg as f64);
        }
    }

    Ok(SynthOutput {
        split: DatasetSplit {
            train,
            dev,
            test,
            fractions: [0.0, 0.0, 0.0],
            seed: spec.seed,
        },
        vocab,
        realized: RealizedStats {
            n_docs,
            label_prior: n_toxic_total as f64 / n_docs as f64,
            per_environment: per_env,
        },
    })
}
