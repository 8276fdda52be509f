//! User-story corpora: records, annotation validation, story kinds, dataset
//! statistics and balanced fold planning.

pub mod io;
pub mod split;
pub mod tags;
mod template;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_corpus, load_corpus_with, load_manifest, save_corpus, CorpusFormat};
pub use split::{plan_balanced_split, Fold, FoldPlan, NegativeQuotas, SplitOptions};
pub use tags::TagSet;
pub use template::{normalize_sentence, parse_template, TemplateMatch, TemplateParts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NonDisclosure,
    Disclosure,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::NonDisclosure => 0,
            Label::Disclosure => 1,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::NonDisclosure),
            1 => Ok(Label::Disclosure),
            other => Err(format!("unknown label value {other} (expected 0 or 1)")),
        }
    }
}

/// Cross of dictionary-match presence and the disclosure label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StoryKind {
    #[serde(rename = "PW_AND_DI")]
    PwAndDi,
    #[serde(rename = "PW_ONLY")]
    PwOnly,
    #[serde(rename = "DI_ONLY")]
    DiOnly,
    #[serde(rename = "NONE")]
    None,
}

impl StoryKind {
    pub const ALL: [StoryKind; 4] = [
        StoryKind::PwAndDi,
        StoryKind::PwOnly,
        StoryKind::DiOnly,
        StoryKind::None,
    ];

    /// Kinds that make up the negative pool of a balanced split.
    pub const NEGATIVE: [StoryKind; 3] = [StoryKind::PwOnly, StoryKind::DiOnly, StoryKind::None];

    pub fn as_str(self) -> &'static str {
        match self {
            StoryKind::PwAndDi => "PW_AND_DI",
            StoryKind::PwOnly => "PW_ONLY",
            StoryKind::DiOnly => "DI_ONLY",
            StoryKind::None => "NONE",
        }
    }

    pub fn is_positive(self) -> bool {
        self == StoryKind::PwAndDi
    }
}

pub fn classify_kind<S: AsRef<str>>(privacy_words: &[S], label: Label) -> StoryKind {
    match (!privacy_words.is_empty(), label) {
        (true, Label::Disclosure) => StoryKind::PwAndDi,
        (true, Label::NonDisclosure) => StoryKind::PwOnly,
        (false, Label::Disclosure) => StoryKind::DiOnly,
        (false, Label::NonDisclosure) => StoryKind::None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticAnnotation {
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub dep_tags: Vec<String>,
    /// Surface tokens, with entity tokens replaced by their entity label.
    pub entity_tags: Vec<String>,
}

impl LinguisticAnnotation {
    pub fn new(
        tokens: Vec<String>,
        pos_tags: Vec<String>,
        dep_tags: Vec<String>,
        entity_tags: Vec<String>,
    ) -> Result<Self> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::data("annotation", "token list is empty"));
        }
        if pos_tags.len() != n || dep_tags.len() != n || entity_tags.len() != n {
            return Err(Error::data(
                "annotation",
                format!(
                    "annotation length mismatch: tokens={} pos={} dep={} entities={}",
                    n,
                    pos_tags.len(),
                    dep_tags.len(),
                    entity_tags.len()
                ),
            ));
        }
        Ok(LinguisticAnnotation {
            tokens,
            pos_tags,
            dep_tags,
            entity_tags,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Maps tags outside the closed sets to `UNKNOWN`.
    pub fn normalize_tags(&mut self, tags: &TagSet) {
        for p in &mut self.pos_tags {
            *p = tags.normalize_pos(p);
        }
        for d in &mut self.dep_tags {
            *d = tags.normalize_dep(d);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserStory {
    pub id: String,
    pub dataset_id: u32,
    pub text: String,
    pub template: Option<TemplateParts>,
    pub annotation: LinguisticAnnotation,
    pub label: Label,
    pub privacy_categories: Vec<(String, u32)>,
    pub privacy_words: Vec<String>,
    kind: StoryKind,
}

impl UserStory {
    pub fn new(
        id: impl Into<String>,
        dataset_id: u32,
        text: impl Into<String>,
        annotation: LinguisticAnnotation,
        label: Label,
        privacy_categories: Vec<(String, u32)>,
        privacy_words: Vec<String>,
    ) -> Result<Self> {
        let text = text.into();
        let id = id.into();
        if text.trim().is_empty() {
            return Err(Error::data(format!("story {id}"), "text is empty"));
        }
        let privacy_words: Vec<String> = privacy_words.iter().map(|w| w.to_lowercase()).collect();
        let kind = classify_kind(&privacy_words, label);
        Ok(UserStory {
            template: parse_template(&text).parts().cloned(),
            id,
            dataset_id,
            text,
            annotation,
            label,
            privacy_categories,
            privacy_words,
            kind,
        })
    }

    pub fn kind(&self) -> StoryKind {
        self.kind
    }

    pub fn role(&self) -> Option<&str> {
        self.template.as_ref().map(|t| t.role.as_str())
    }

    pub fn feature(&self) -> Option<&str> {
        self.template.as_ref().map(|t| t.feature.as_str())
    }

    pub fn reason(&self) -> Option<&str> {
        self.template.as_ref().and_then(|t| t.reason.as_deref())
    }

    /// Replaces the dictionary-derived fields and re-derives the kind.
    pub fn set_privacy(&mut self, categories: Vec<(String, u32)>, words: Vec<String>) {
        self.privacy_categories = categories;
        self.privacy_words = words;
        self.kind = classify_kind(&self.privacy_words, self.label);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset_id: u32,
    pub description: String,
    pub declared_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    stories: Vec<UserStory>,
    manifest: Vec<ManifestEntry>,
}

impl Corpus {
    pub fn new(stories: Vec<UserStory>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &stories {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::data("corpus", format!("duplicate id {:?}", s.id)));
            }
        }
        Ok(Corpus {
            stories,
            manifest: Vec::new(),
        })
    }

    /// Attaches a source manifest, checking declared sizes against the stories.
    pub fn with_manifest(mut self, manifest: Vec<ManifestEntry>) -> Result<Self> {
        let counts = self.dataset_counts();
        for entry in &manifest {
            let actual = counts.get(&entry.dataset_id).copied().unwrap_or(0);
            if actual != entry.declared_size {
                return Err(Error::data(
                    "manifest",
                    format!(
                        "dataset {} declares {} stories but corpus has {}",
                        entry.dataset_id, entry.declared_size, actual
                    ),
                ));
            }
        }
        self.manifest = manifest;
        Ok(self)
    }

    pub fn stories(&self) -> &[UserStory] {
        &self.stories
    }

    pub fn stories_mut(&mut self) -> &mut [UserStory] {
        &mut self.stories
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.stories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stories.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&UserStory> {
        self.stories.iter().find(|s| s.id == id)
    }

    /// Index from story id to position, for repeated lookups.
    pub fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.stories
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect()
    }

    pub fn select(&self, ids: &[String]) -> Result<Vec<&UserStory>> {
        let index = self.index();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| &self.stories[i])
                    .ok_or_else(|| Error::data("corpus", format!("unknown story id {id:?}")))
            })
            .collect()
    }

    fn dataset_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.stories {
            *counts.entry(s.dataset_id).or_insert(0) += 1;
        }
        counts
    }

    /// Stable content hash over ids, texts, annotations and labels.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for s in &self.stories {
            for part in [&s.id, &s.text] {
                h.update(part.as_bytes());
                h.update([0u8]);
            }
            for list in [
                &s.annotation.tokens,
                &s.annotation.pos_tags,
                &s.annotation.dep_tags,
                &s.annotation.entity_tags,
            ] {
                for t in list {
                    h.update(t.as_bytes());
                    h.update([1u8]);
                }
                h.update([2u8]);
            }
            h.update([s.label.as_u8()]);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset_id: u32,
    pub description: Option<String>,
    pub size: usize,
    pub privacy_term_count: usize,
    pub frac_pw_and_di: f64,
    pub frac_pw: f64,
    pub frac_di: f64,
    pub frac_none: f64,
}

/// Per-dataset statistics; datasets come from the manifest when present,
/// otherwise from the story records.
pub fn corpus_stats(corpus: &Corpus) -> Result<Vec<DatasetStats>> {
    let ids: Vec<(u32, Option<String>)> = if corpus.manifest.is_empty() {
        corpus
            .dataset_counts()
            .keys()
            .map(|&id| (id, None))
            .collect()
    } else {
        corpus
            .manifest
            .iter()
            .map(|e| (e.dataset_id, Some(e.description.clone())))
            .collect()
    };
    if ids.is_empty() {
        return Err(Error::Empty("empty dataset".into()));
    }
    ids.into_iter()
        .map(|(id, description)| {
            let stories: Vec<&UserStory> = corpus
                .stories
                .iter()
                .filter(|s| s.dataset_id == id)
                .collect();
            let mut stats = dataset_stats(id, &stories)?;
            stats.description = description;
            Ok(stats)
        })
        .collect()
}

pub fn dataset_stats(dataset_id: u32, stories: &[&UserStory]) -> Result<DatasetStats> {
    if stories.is_empty() {
        return Err(Error::Empty(format!("empty dataset {dataset_id}")));
    }
    let mut counts = [0usize; 4];
    let mut terms = 0;
    for s in stories {
        counts[StoryKind::ALL.iter().position(|k| *k == s.kind).unwrap()] += 1;
        terms += s.privacy_words.len();
    }
    let n = stories.len() as f64;
    Ok(DatasetStats {
        dataset_id,
        description: None,
        size: stories.len(),
        privacy_term_count: terms,
        frac_pw_and_di: counts[0] as f64 / n,
        frac_pw: counts[1] as f64 / n,
        frac_di: counts[2] as f64 / n,
        frac_none: counts[3] as f64 / n,
    })
}
