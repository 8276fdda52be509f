//! Closed tag inventories for annotations.

use std::collections::HashSet;

pub const UNKNOWN_TAG: &str = "UNKNOWN";

/// The 17 universal coarse part-of-speech tags, plus `UNKNOWN`.
pub const POS_TAGS: [&str; 18] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X", UNKNOWN_TAG,
];

/// English dependency relations in the ClearNLP style emitted by common parsers.
pub const DEFAULT_DEP_TAGS: [&str; 46] = [
    "ROOT", "acl", "acomp", "advcl", "advmod", "agent", "amod", "appos", "attr", "aux", "auxpass",
    "case", "cc", "ccomp", "compound", "conj", "csubj", "csubjpass", "dative", "dep", "det",
    "dobj", "expl", "intj", "mark", "meta", "neg", "nmod", "npadvmod", "nsubj", "nsubjpass",
    "nummod", "oprd", "parataxis", "pcomp", "pobj", "poss", "preconj", "predet", "prep", "prt",
    "punct", "quantmod", "relcl", "xcomp", UNKNOWN_TAG,
];

/// Entity labels of the usual OntoNotes inventory plus the `HEALTH` label seen
/// in disclosure-oriented entity models.
pub const DEFAULT_ENTITY_LABELS: [&str; 19] = [
    "PERSON",
    "NORP",
    "FAC",
    "ORG",
    "GPE",
    "LOC",
    "PRODUCT",
    "EVENT",
    "WORK_OF_ART",
    "LAW",
    "LANGUAGE",
    "DATE",
    "TIME",
    "PERCENT",
    "MONEY",
    "QUANTITY",
    "ORDINAL",
    "CARDINAL",
    "HEALTH",
];

/// The closed sets an annotation is validated against.
#[derive(Debug, Clone)]
pub struct TagSet {
    pos: Vec<String>,
    dep: Vec<String>,
    entity: Vec<String>,
    dep_lookup: HashSet<String>,
    entity_lookup: HashSet<String>,
}

impl Default for TagSet {
    fn default() -> Self {
        TagSet::new(
            DEFAULT_DEP_TAGS.iter().map(|s| s.to_string()).collect(),
            DEFAULT_ENTITY_LABELS.iter().map(|s| s.to_string()).collect(),
        )
    }
}

impl TagSet {
    /// Builds a tag set with custom dependency and entity inventories. `UNKNOWN`
    /// is appended to the dependency set when missing.
    pub fn new(mut dep: Vec<String>, entity: Vec<String>) -> Self {
        if !dep.iter().any(|d| d == UNKNOWN_TAG) {
            dep.push(UNKNOWN_TAG.to_string());
        }
        let dep_lookup = dep.iter().cloned().collect();
        let entity_lookup = entity.iter().cloned().collect();
        TagSet {
            pos: POS_TAGS.iter().map(|s| s.to_string()).collect(),
            dep,
            entity,
            dep_lookup,
            entity_lookup,
        }
    }

    pub fn pos(&self) -> &[String] {
        &self.pos
    }

    pub fn dep(&self) -> &[String] {
        &self.dep
    }

    pub fn entity(&self) -> &[String] {
        &self.entity
    }

    pub fn pos_index(&self, tag: &str) -> usize {
        self.pos
            .iter()
            .position(|p| p == tag)
            .unwrap_or(self.pos.len() - 1)
    }

    pub fn entity_index(&self, label: &str) -> Option<usize> {
        self.entity.iter().position(|e| e == label)
    }

    pub fn is_entity(&self, label: &str) -> bool {
        self.entity_lookup.contains(label)
    }

    pub fn normalize_pos(&self, tag: &str) -> String {
        if POS_TAGS.contains(&tag) {
            tag.to_string()
        } else {
            UNKNOWN_TAG.to_string()
        }
    }

    pub fn normalize_dep(&self, tag: &str) -> String {
        if self.dep_lookup.contains(tag) {
            tag.to_string()
        } else {
            UNKNOWN_TAG.to_string()
        }
    }
}
