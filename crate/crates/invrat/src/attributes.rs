//! Lexical attribute tagging, dialect assignment via a marker-lexicon proxy,
//! environment mapping, and the lexicon-removal baseline transform.
//!
//! Lexicon files are plain UTF-8 text, one word per line, `#` starting a
//! comment. Dialect files may carry an optional `word<TAB>weight` column.

use std::collections::BTreeSet;
use std::path::Path;

use crate::corpus::{normalize, Attribute, AttributeSet, Dialect, Document, Vocabulary, PAD_ID};
use crate::error::{Error, Result};

/// Word banks for the three lexical attributes. Sets are pairwise disjoint
/// and normalized exactly as the tokenizer normalizes.
#[derive(Debug, Clone, Default)]
pub struct AttributeLexicon {
    pub noi: BTreeSet<String>,
    pub oi: BTreeSet<String>,
    pub oni: BTreeSet<String>,
}

impl AttributeLexicon {
    pub fn new(
        noi: impl IntoIterator<Item = String>,
        oi: impl IntoIterator<Item = String>,
        oni: impl IntoIterator<Item = String>,
    ) -> Result<AttributeLexicon> {
        let lex = AttributeLexicon {
            noi: normalize_set(noi),
            oi: normalize_set(oi),
            oni: normalize_set(oni),
        };
        lex.check_disjoint()?;
        Ok(lex)
    }

    /// Loads `noi.txt`, `oi.txt`, `oni.txt` from a directory.
    pub fn load_dir(dir: &Path) -> Result<AttributeLexicon> {
        let lex = AttributeLexicon {
            noi: load_word_file(&dir.join("noi.txt"))?,
            oi: load_word_file(&dir.join("oi.txt"))?,
            oni: load_word_file(&dir.join("oni.txt"))?,
        };
        lex.check_disjoint()?;
        Ok(lex)
    }

    fn check_disjoint(&self) -> Result<()> {
        let pairs = [
            ("noi", &self.noi, "oi", &self.oi),
            ("noi", &self.noi, "oni", &self.oni),
            ("oi", &self.oi, "oni", &self.oni),
        ];
        for (na, a, nb, b) in pairs {
            if let Some(w) = a.intersection(b).next() {
                return Err(Error::InvalidLexicon {
                    path: format!("{na}/{nb}"),
                    reason: format!("word {w:?} appears in both sets"),
                });
            }
        }
        Ok(())
    }

    pub fn set(&self, a: Attribute) -> &BTreeSet<String> {
        match a {
            Attribute::NOi => &self.noi,
            Attribute::Oi => &self.oi,
            Attribute::OnI => &self.oni,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.noi.contains(word) || self.oi.contains(word) || self.oni.contains(word)
    }
}

/// Marker word sets with positive weights for the three scored dialects.
#[derive(Debug, Clone, Default)]
pub struct DialectLexicon {
    pub aae: Vec<(String, f64)>,
    pub wae: Vec<(String, f64)>,
    pub hispanic: Vec<(String, f64)>,
}

impl DialectLexicon {
    /// Loads `aae.txt`, `wae.txt`, `hispanic.txt` from a directory.
    pub fn load_dir(dir: &Path) -> Result<DialectLexicon> {
        Ok(DialectLexicon {
            aae: load_weighted_file(&dir.join("aae.txt"))?,
            wae: load_weighted_file(&dir.join("wae.txt"))?,
            hispanic: load_weighted_file(&dir.join("hispanic.txt"))?,
        })
    }

    fn markers(&self, d: Dialect) -> &[(String, f64)] {
        match d {
            Dialect::Aae => &self.aae,
            Dialect::Wae => &self.wae,
            Dialect::Hispanic => &self.hispanic,
            Dialect::Other => &[],
        }
    }
}

fn normalize_word(word: &str) -> Option<String> {
    let toks = normalize(word);
    if toks.len() == 1 {
        Some(toks.into_iter().next().unwrap())
    } else {
        None
    }
}

fn normalize_set(words: impl IntoIterator<Item = String>) -> BTreeSet<String> {
    words
        .into_iter()
        .filter_map(|w| normalize_word(&w))
        .collect()
}

fn load_word_file(path: &Path) -> Result<BTreeSet<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut set = BTreeSet::new();
    for line in text.lines() {
        let entry = line.split('#').next().unwrap_or("").trim();
        if entry.is_empty() {
            continue;
        }
        match normalize_word(entry) {
            Some(w) => {
                set.insert(w);
            }
            None => {
                return Err(Error::InvalidLexicon {
                    path: path.display().to_string(),
                    reason: format!("{entry:?} does not normalize to a single token"),
                })
            }
        }
    }
    Ok(set)
}

fn load_weighted_file(path: &Path) -> Result<Vec<(String, f64)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let entry = line.split('#').next().unwrap_or("").trim();
        if entry.is_empty() {
            continue;
        }
        let (word, weight) = match entry.split_once('\t') {
            Some((w, wt)) => {
                let weight: f64 = wt.trim().parse().map_err(|_| Error::InvalidLexicon {
                    path: path.display().to_string(),
                    reason: format!("bad weight {wt:?}"),
                })?;
                (w, weight)
            }
            None => (entry, 1.0),
        };
        if weight <= 0.0 || !weight.is_finite() {
            return Err(Error::InvalidLexicon {
                path: path.display().to_string(),
                reason: format!("weight for {word:?} must be positive"),
            });
        }
        match normalize_word(word) {
            Some(w) => out.push((w, weight)),
            None => {
                return Err(Error::InvalidLexicon {
                    path: path.display().to_string(),
                    reason: format!("{word:?} does not normalize to a single token"),
                })
            }
        }
    }
    Ok(out)
}

/// Which attribute family defines the training environments.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum EnvironmentKind {
    Lexical,
    Dialectal,
}

/// Environment identifier: an index in `0..=3` under a fixed kind.
///
/// Lexical: 0 = nOI, 1 = OI, 2 = OnI, 3 = none of the above.
/// Dialectal: 0 = AAE, 1 = WAE, 2 = Hispanic, 3 = Other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EnvironmentId {
    pub kind: EnvironmentKind,
    pub index: u8,
}

pub const NUM_ENVIRONMENTS: usize = 4;

fn doc_surfaces(doc: &Document, vocab: &Vocabulary) -> Vec<String> {
    doc.tokens
        .iter()
        .filter_map(|&t| vocab.token(t))
        .map(|s| s.to_string())
        .collect()
}

/// Attributes present in a document: an attribute applies iff any of its
/// lexicon words occurs among the document tokens. Multiple attributes may
/// apply; an empty result is valid.
pub fn tag_lexical(doc: &Document, lex: &AttributeLexicon, vocab: &Vocabulary) -> AttributeSet {
    let mut set = AttributeSet::default();
    for surface in doc_surfaces(doc, vocab) {
        if lex.noi.contains(&surface) {
            set.insert(Attribute::NOi);
        }
        if lex.oi.contains(&surface) {
            set.insert(Attribute::Oi);
        }
        if lex.oni.contains(&surface) {
            set.insert(Attribute::OnI);
        }
    }
    set
}

/// Dialect proxy: per-dialect score is the weighted count of marker hits
/// normalized by token count; argmax over AAE/WAE/Hispanic, ties broken in
/// that order; all-zero scores yield `Other`.
pub fn tag_dialect(doc: &Document, dlex: &DialectLexicon, vocab: &Vocabulary) -> Dialect {
    let surfaces = doc_surfaces(doc, vocab);
    let n = surfaces.len().max(1) as f64;
    let mut best = Dialect::Other;
    let mut best_score = 0.0f64;
    for d in [Dialect::Aae, Dialect::Wae, Dialect::Hispanic] {
        let score: f64 = dlex
            .markers(d)
            .iter()
            .map(|(w, weight)| weight * surfaces.iter().filter(|s| *s == w).count() as f64)
            .sum::<f64>()
            / n;
        if score > best_score {
            best_score = score;
            best = d;
        }
    }
    best
}

/// Maps a tagged document to its single environment.
///
/// Dialectal kind: the environment is the dialect class. Lexical kind:
/// precedence OI > nOI > OnI for multi-attribute documents; no attribute
/// means environment 3 (none of the above).
pub fn assign_environment(doc: &Document, kind: EnvironmentKind) -> EnvironmentId {
    let index = match kind {
        EnvironmentKind::Dialectal => doc.dialect.unwrap_or(Dialect::Other).index(),
        EnvironmentKind::Lexical => {
            if doc.attributes.oi {
                1
            } else if doc.attributes.noi {
                0
            } else if doc.attributes.oni {
                2
            } else {
                3
            }
        }
    };
    EnvironmentId { kind, index }
}

/// Deletes every token whose surface form appears in any lexicon set. An
/// emptied document keeps a single PAD token. Label and tags are unchanged.
pub fn remove_lexicon_tokens(
    doc: &Document,
    lex: &AttributeLexicon,
    vocab: &Vocabulary,
) -> Document {
    let mut out = doc.clone();
    out.tokens = doc
        .tokens
        .iter()
        .copied()
        .filter(|&t| match vocab.token(t) {
            Some(surface) => !lex.contains(surface),
            None => true,
        })
        .collect();
    if out.tokens.is_empty() {
        out.tokens.push(PAD_ID);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Label, Vocabulary};
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(
            ["you", "are", "sh*t", "muslim", "f*ck", "finna", "yall", "literally", "word"]
                .iter()
                .map(|s| s.to_string()),
        )
        .unwrap()
    }

    fn lexicon() -> AttributeLexicon {
        AttributeLexicon::new(
            ["muslim".to_string()],
            ["n*gga".to_string()],
            ["f*ck".to_string(), "sh*t".to_string()],
        )
        .unwrap()
    }

    fn doc(text: &str, v: &Vocabulary) -> Document {
        Document {
            id: "d".into(),
            raw_text: text.into(),
            tokens: tokenize(text, v).unwrap(),
            label: Label::NonToxic,
            attributes: AttributeSet::default(),
            dialect: None,
            environment: None,
        }
    }

    #[test]
    fn tag_lexical_finds_swear_words() {
        let v = vocab();
        let d = doc("you are f*ck", &v);
        let set = tag_lexical(&d, &lexicon(), &v);
        assert!(set.oni && !set.noi && !set.oi);
    }

    #[test]
    fn tag_lexical_unions_multiple_attributes() {
        let v = vocab();
        let d = doc("muslim sh*t", &v);
        let set = tag_lexical(&d, &lexicon(), &v);
        assert!(set.noi && set.oni && !set.oi);
    }

    #[test]
    fn tag_lexical_empty_on_no_hits() {
        let v = vocab();
        let d = doc("you are word", &v);
        assert!(tag_lexical(&d, &lexicon(), &v).is_empty());
    }

    #[test]
    fn lexicon_rejects_overlapping_sets() {
        let r = AttributeLexicon::new(
            ["gay".to_string()],
            ["gay".to_string()],
            Vec::<String>::new(),
        );
        assert!(matches!(r, Err(Error::InvalidLexicon { .. })));
    }

    fn dialect_lexicon() -> DialectLexicon {
        DialectLexicon {
            aae: vec![("finna".into(), 1.0), ("yall".into(), 1.0)],
            wae: vec![("literally".into(), 1.0)],
            hispanic: vec![("pero".into(), 1.0)],
        }
    }

    #[test]
    fn tag_dialect_argmax() {
        let v = vocab();
        let d = doc("finna yall word", &v);
        assert_eq!(tag_dialect(&d, &dialect_lexicon(), &v), Dialect::Aae);
    }

    #[test]
    fn tag_dialect_no_markers_is_other() {
        let v = vocab();
        let d = doc("you are word", &v);
        assert_eq!(tag_dialect(&d, &dialect_lexicon(), &v), Dialect::Other);
    }

    #[test]
    fn tag_dialect_tie_prefers_aae() {
        let v = vocab();
        let d = doc("finna literally", &v);
        assert_eq!(tag_dialect(&d, &dialect_lexicon(), &v), Dialect::Aae);
    }

    #[test]
    fn environment_precedence_oi_over_noi_over_oni() {
        let v = vocab();
        let mut d = doc("word", &v);
        d.attributes = AttributeSet {
            noi: true,
            oi: false,
            oni: true,
        };
        let env = assign_environment(&d, EnvironmentKind::Lexical);
        assert_eq!(env.index, 0); // nOI wins over OnI
        d.attributes.oi = true;
        assert_eq!(assign_environment(&d, EnvironmentKind::Lexical).index, 1);
    }

    #[test]
    fn environment_empty_attributes_is_none_of_the_above() {
        let v = vocab();
        let d = doc("word", &v);
        assert_eq!(assign_environment(&d, EnvironmentKind::Lexical).index, 3);
    }

    #[test]
    fn environment_dialectal_uses_dialect_index() {
        let v = vocab();
        let mut d = doc("word", &v);
        d.dialect = Some(Dialect::Aae);
        assert_eq!(assign_environment(&d, EnvironmentKind::Dialectal).index, 0);
        d.dialect = Some(Dialect::Hispanic);
        assert_eq!(assign_environment(&d, EnvironmentKind::Dialectal).index, 2);
    }

    #[test]
    fn remove_lexicon_tokens_filters_matches() {
        let v = vocab();
        let d = doc("you are sh*t", &v);
        let out = remove_lexicon_tokens(&d, &lexicon(), &v);
        assert_eq!(
            out.tokens,
            vec![v.id("you").unwrap(), v.id("are").unwrap()]
        );
        assert_eq!(out.label, d.label);
    }

    #[test]
    fn remove_lexicon_tokens_identity_when_clean() {
        let v = vocab();
        let d = doc("you are word", &v);
        let out = remove_lexicon_tokens(&d, &lexicon(), &v);
        assert_eq!(out.tokens, d.tokens);
    }

    #[test]
    fn remove_lexicon_tokens_keeps_pad_when_emptied() {
        let v = vocab();
        let d = doc("f*ck sh*t", &v);
        let out = remove_lexicon_tokens(&d, &lexicon(), &v);
        assert_eq!(out.tokens, vec![PAD_ID]);
    }

    #[test]
    fn remove_lexicon_tokens_is_idempotent() {
        let v = vocab();
        let d = doc("you are sh*t f*ck", &v);
        let once = remove_lexicon_tokens(&d, &lexicon(), &v);
        let twice = remove_lexicon_tokens(&once, &lexicon(), &v);
        assert_eq!(once.tokens, twice.tokens);
    }

    proptest! {
        // Adding a lexicon word to a document never removes an attribute.
        #[test]
        fn tag_lexical_is_monotone(extra in 0usize..3, base in proptest::collection::vec(0usize..4, 1..6)) {
            let v = vocab();
            let words = ["you", "are", "word", "muslim"];
            let text: Vec<&str> = base.iter().map(|&i| words[i]).collect();
            let d = doc(&text.join(" "), &v);
            let before = tag_lexical(&d, &lexicon(), &v);

            let lex_words = ["muslim", "sh*t", "f*ck"];
            let mut extended = text.clone();
            extended.push(lex_words[extra]);
            let d2 = doc(&extended.join(" "), &v);
            let after = tag_lexical(&d2, &lexicon(), &v);

            for a in before.iter() {
                prop_assert!(after.contains(a));
            }
        }
    }
}
