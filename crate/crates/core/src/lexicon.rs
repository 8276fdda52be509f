//! Category lexicon matching.
//!
//! A dictionary is a list of categories, each holding lowercase patterns. A
//! pattern either matches a whole token or, when marked with a trailing `*`,
//! any token that starts with its stem. Every (token occurrence, category)
//! pair is counted at most once, and category values are reported as a
//! fraction of all tokens in the story.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The bundled seed dictionary (eight categories).
pub const SEED_DICTIONARY: &str = include_str!("../data/seed_dictionary.txt");

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub stem: String,
    pub wildcard: bool,
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Pattern> {
        let lower = raw.trim().to_lowercase();
        let (stem, wildcard) = match lower.strip_suffix('*') {
            Some(stem) => (stem.to_string(), true),
            None => (lower, false),
        };
        if stem.is_empty() {
            return Err(Error::data("pattern", format!("empty pattern {raw:?}")));
        }
        if stem.contains('*') || stem.chars().any(char::is_whitespace) {
            return Err(Error::data(
                "pattern",
                format!("pattern {raw:?} must be a single word with at most a trailing '*'"),
            ));
        }
        Ok(Pattern { stem, wildcard })
    }

    /// `token` must already be lowercase.
    pub fn matches(&self, token: &str) -> bool {
        if self.wildcard {
            token.starts_with(&self.stem)
        } else {
            token == self.stem
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.wildcard {
            write!(f, "{}*", self.stem)
        } else {
            f.write_str(&self.stem)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub description: String,
    pub patterns: Vec<Pattern>,
}

#[derive(Debug, Clone)]
pub struct PrivacyDictionary {
    categories: Vec<Category>,
    version: String,
    exact: HashMap<String, Vec<usize>>,
    stems: HashMap<String, Vec<usize>>,
    max_stem_len: usize,
}

impl PartialEq for PrivacyDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.categories == other.categories && self.version == other.version
    }
}

impl PrivacyDictionary {
    pub fn new(categories: Vec<Category>, version: impl Into<String>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::data("dictionary", "no categories"));
        }
        let mut names = HashSet::new();
        let mut exact: HashMap<String, Vec<usize>> = HashMap::new();
        let mut stems: HashMap<String, Vec<usize>> = HashMap::new();
        let mut max_stem_len = 0;
        for (ci, cat) in categories.iter().enumerate() {
            if !names.insert(cat.name.as_str()) {
                return Err(Error::data(
                    "dictionary",
                    format!("duplicate category {:?}", cat.name),
                ));
            }
            if cat.patterns.is_empty() {
                return Err(Error::data(
                    "dictionary",
                    format!("empty category {:?}", cat.name),
                ));
            }
            let mut seen = HashSet::new();
            for p in &cat.patterns {
                if !seen.insert(p) {
                    return Err(Error::data(
                        "dictionary",
                        format!("duplicate pattern {p} in category {:?}", cat.name),
                    ));
                }
                let table = if p.wildcard { &mut stems } else { &mut exact };
                table.entry(p.stem.clone()).or_default().push(ci);
                if p.wildcard {
                    max_stem_len = max_stem_len.max(p.stem.len());
                }
            }
        }
        Ok(PrivacyDictionary {
            categories,
            version: version.into(),
            exact,
            stems,
            max_stem_len,
        })
    }

    pub fn seed() -> Self {
        Self::parse(SEED_DICTIONARY, "seed dictionary").expect("bundled seed dictionary is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut categories: Vec<Category> = Vec::new();
        let mut version = String::from("unversioned");
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let context = format!("{source}:{}", i + 1);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(directive) = line.strip_prefix('@') {
                match directive.split_once(char::is_whitespace) {
                    Some(("version", v)) if !v.trim().is_empty() => version = v.trim().to_string(),
                    _ => {
                        return Err(Error::data(context, format!("unknown directive {line:?}")))
                    }
                }
                continue;
            }
            if line.starts_with('[') {
                let Some(close) = line.find(']') else {
                    return Err(Error::data(context, format!("unknown section header {line:?}")));
                };
                let name = line[1..close].trim();
                if name.is_empty() || name.chars().any(char::is_whitespace) {
                    return Err(Error::data(context, format!("unknown section header {line:?}")));
                }
                if categories.iter().any(|c| c.name == name) {
                    return Err(Error::data(context, format!("duplicate category {name:?}")));
                }
                categories.push(Category {
                    name: name.to_string(),
                    description: line[close + 1..].trim().to_string(),
                    patterns: Vec::new(),
                });
                continue;
            }
            let Some(current) = categories.last_mut() else {
                return Err(Error::data(context, "pattern before any category header"));
            };
            let pattern = Pattern::parse(line).map_err(|e| Error::data(&context, e.to_string()))?;
            if current.patterns.contains(&pattern) {
                return Err(Error::data(
                    context,
                    format!("duplicate pattern {pattern} in category {:?}", current.name),
                ));
            }
            current.patterns.push(pattern);
        }
        if let Some(empty) = categories.iter().find(|c| c.patterns.is_empty()) {
            return Err(Error::data(source, format!("empty category {:?}", empty.name)));
        }
        Self::new(categories, version).map_err(|e| match e {
            Error::Data { message, .. } => Error::data(source, message),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("@version {}\n", self.version);
        for c in &self.categories {
            out.push_str(&format!("\n[{}] {}\n", c.name, c.description));
            for p in &c.patterns {
                out.push_str(&format!("{p}\n"));
            }
        }
        out
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category_names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Category indices matched by one lowercase token, ascending, without repeats.
    pub fn categories_of(&self, token: &str) -> Vec<usize> {
        let mut hits: Vec<usize> = Vec::new();
        if let Some(cats) = self.exact.get(token) {
            hits.extend(cats);
        }
        let max = self.max_stem_len.min(token.len());
        for end in 1..=max {
            if !token.is_char_boundary(end) {
                continue;
            }
            if let Some(cats) = self.stems.get(&token[..end]) {
                hits.extend(cats);
            }
        }
        hits.sort_unstable();
        hits.dedup();
        hits
    }

    /// Lowercased tokens with at least one category match, one entry per
    /// occurrence, in story order.
    pub fn privacy_words<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens
            .iter()
            .map(|t| t.as_ref().to_lowercase())
            .filter(|t| !self.categories_of(t).is_empty())
            .collect()
    }

    pub fn match_story<S: AsRef<str>>(&self, tokens: &[S]) -> LexiconFeatures {
        let mut counts = vec![0u32; self.categories.len()];
        let mut matched_words = Vec::new();
        for token in tokens {
            let lower = token.as_ref().to_lowercase();
            for ci in self.categories_of(&lower) {
                counts[ci] += 1;
                matched_words.push((lower.clone(), self.categories[ci].name.clone()));
            }
        }
        LexiconFeatures::from_counts(counts, matched_words, tokens.len())
    }
}

/// Splits raw text into word tokens for lexicon matching when no annotation
/// is available. Punctuation is dropped; inner apostrophes and hyphens stay.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
        .map(|w| w.trim_matches(|c| c == '\'' || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconFeatures {
    pub category_fractions: Vec<f64>,
    pub category_counts: Vec<u32>,
    /// (lowercase token, category name), one entry per (token occurrence, category).
    pub matched_words: Vec<(String, String)>,
    pub token_count: usize,
}

impl LexiconFeatures {
    fn from_counts(counts: Vec<u32>, matched_words: Vec<(String, String)>, token_count: usize) -> Self {
        let category_fractions = counts
            .iter()
            .map(|&c| {
                if token_count == 0 {
                    0.0
                } else {
                    c as f64 / token_count as f64
                }
            })
            .collect();
        LexiconFeatures {
            category_fractions,
            category_counts: counts,
            matched_words,
            token_count,
        }
    }

    pub fn total_matches(&self) -> u32 {
        self.category_counts.iter().sum()
    }

    /// Category fractions in dictionary order, optionally followed by the
    /// overall match fraction.
    pub fn feature_vector(&self, include_total: bool) -> Vec<f64> {
        let mut v = self.category_fractions.clone();
        if include_total {
            v.push(if self.token_count == 0 {
                0.0
            } else {
                self.total_matches() as f64 / self.token_count as f64
            });
        }
        v
    }

    /// `[[category, count]]` pairs for non-zero categories, in dictionary order.
    pub fn privacy_categories(&self, dict: &PrivacyDictionary) -> Vec<(String, u32)> {
        dict.categories
            .iter()
            .zip(&self.category_counts)
            .filter(|(_, &c)| c > 0)
            .map(|(cat, &c)| (cat.name.clone(), c))
            .collect()
    }
}

/// Recomputes privacy words and categories for every story from the dictionary.
pub fn annotate_corpus(corpus: &mut crate::corpus::Corpus, dict: &PrivacyDictionary) {
    for story in corpus.stories_mut() {
        let features = dict.match_story(&story.annotation.tokens);
        story.set_privacy(
            features.privacy_categories(dict),
            dict.privacy_words(&story.annotation.tokens),
        );
    }
}
