//! Vocabularies, fixed-length id sequences and auxiliary histograms.
//!
//! Encoded-corpus cache layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "PSENC001"
//! seq_len      u32
//! aux_len      u32
//! lexicon_len  u32
//! count        u64
//! count × record:
//!   record_len u32      byte length of the rest of the record
//!   id_len     u16, id bytes (UTF-8)
//!   label      u8
//!   token ids  seq_len × u32
//!   dep ids    seq_len × u32
//!   aux        aux_len × f64
//!   lexicon    lexicon_len × f64
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{LinguisticAnnotation, TagSet, UserStory};
use crate::error::{Error, Result};
use crate::lexicon::PrivacyDictionary;

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
pub const PAD_SYMBOL: &str = "<PAD>";
pub const OOV_SYMBOL: &str = "<OOV>";
pub const DEFAULT_SEQ_LEN: usize = 30;

const CACHE_MAGIC: &[u8; 8] = b"PSENC001";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    Token,
    Pos,
    Dep,
    Entity,
}

impl VocabKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabKind::Token => "token",
            VocabKind::Pos => "pos",
            VocabKind::Dep => "dep",
            VocabKind::Entity => "entity",
        }
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VocabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(VocabKind::Token),
            "pos" => Ok(VocabKind::Pos),
            "dep" => Ok(VocabKind::Dep),
            "entity" => Ok(VocabKind::Entity),
            other => Err(Error::Config(format!("unknown vocabulary kind `{other}`"))),
        }
    }
}

/// Symbol to id map with `PAD = 0` and `OOV = 1` reserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    kind: VocabKind,
    min_count: usize,
    symbols: Vec<String>,
    ids: HashMap<String, u32>,
    frozen: bool,
}

impl Vocabulary {
    /// Empty, unfrozen vocabulary holding only the reserved symbols.
    pub fn new(kind: VocabKind, min_count: usize) -> Self {
        let symbols = vec![PAD_SYMBOL.to_string(), OOV_SYMBOL.to_string()];
        let ids = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Vocabulary {
            kind,
            min_count,
            symbols,
            ids,
            frozen: false,
        }
    }

    pub fn add(&mut self, symbol: &str) -> Result<u32> {
        if self.frozen {
            return Err(Error::Config(format!(
                "cannot add `{symbol}` to a frozen {} vocabulary",
                self.kind
            )));
        }
        if symbol.contains(['\t', '\n', '\r']) || symbol.is_empty() {
            return Err(Error::data("vocabulary", format!("invalid symbol {symbol:?}")));
        }
        if let Some(&id) = self.ids.get(symbol) {
            return Ok(id);
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_string());
        self.ids.insert(symbol.to_string(), id);
        Ok(id)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() <= 2
    }

    /// Id of `symbol`, or `OOV_ID` when unknown.
    pub fn id(&self, symbol: &str) -> u32 {
        self.ids.get(symbol).copied().unwrap_or(OOV_ID)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.ids.contains_key(symbol)
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    /// Non-reserved symbols in id order.
    pub fn symbols(&self) -> &[String] {
        &self.symbols[2..]
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# vocabulary kind={} min_count={} size={}\n",
            self.kind,
            self.min_count,
            self.symbols.len()
        );
        for (i, sym) in self.symbols.iter().enumerate() {
            s.push_str(&format!("{sym}\t{i}\n"));
        }
        s
    }

    /// Parses the text format; the result is frozen.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::data(source, "empty vocabulary file"))?;
        let fields: HashMap<&str, &str> = header
            .strip_prefix("# vocabulary ")
            .ok_or_else(|| Error::data(format!("{source}:1"), "missing vocabulary header"))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::data(format!("{source}:1"), format!("header lacks `{k}`")))
        };
        let kind: VocabKind = get("kind")?.parse()?;
        let min_count: usize = get("min_count")?
            .parse()
            .map_err(|_| Error::data(format!("{source}:1"), "bad min_count"))?;
        let size: usize = get("size")?
            .parse()
            .map_err(|_| Error::data(format!("{source}:1"), "bad size"))?;
        let mut vocab = Vocabulary::new(kind, min_count);
        for (i, line) in lines {
            let ctx = format!("{source}:{}", i + 1);
            let (sym, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::data(&ctx, "expected `symbol<TAB>id`"))?;
            let id: u32 = id.parse().map_err(|_| Error::data(&ctx, "bad id"))?;
            let expected = i as u32 - 1;
            if id != expected {
                return Err(Error::data(&ctx, format!("id {id} out of order (expected {expected})")));
            }
            if id < 2 {
                let reserved = [PAD_SYMBOL, OOV_SYMBOL][id as usize];
                if sym != reserved {
                    return Err(Error::data(&ctx, format!("id {id} is reserved for {reserved}")));
                }
                continue;
            }
            if vocab.contains(sym) {
                return Err(Error::data(&ctx, format!("duplicate symbol `{sym}`")));
            }
            vocab.add(sym).map_err(|e| Error::data(&ctx, e.to_string()))?;
        }
        if vocab.len() != size {
            return Err(Error::data(
                source,
                format!("header declares {size} entries, found {}", vocab.len()),
            ));
        }
        vocab.freeze();
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::parse(&text, &path.display().to_string())
    }
}

/// Token stream fed to the lexical channel: lowercased surface tokens with
/// entity tokens replaced by their entity label.
pub fn lexical_stream(annotation: &LinguisticAnnotation, tags: &TagSet) -> Vec<String> {
    annotation
        .entity_tags
        .iter()
        .map(|t| {
            if tags.is_entity(t) {
                t.clone()
            } else {
                t.to_lowercase()
            }
        })
        .collect()
}

fn symbols_of(story: &UserStory, kind: VocabKind, tags: &TagSet) -> Vec<String> {
    let a = &story.annotation;
    match kind {
        VocabKind::Token => lexical_stream(a, tags),
        VocabKind::Pos => a.pos_tags.clone(),
        VocabKind::Dep => a.dep_tags.clone(),
        VocabKind::Entity => a
            .entity_tags
            .iter()
            .filter(|t| tags.is_entity(t))
            .cloned()
            .collect(),
    }
}

/// Frozen vocabulary of symbols seen at least `min_count` times, ids ordered
/// by descending frequency then lexicographically.
pub fn build_vocab(
    stories: &[&UserStory],
    kind: VocabKind,
    min_count: usize,
    tags: &TagSet,
) -> Result<Vocabulary> {
    if stories.is_empty() {
        return Err(Error::Empty(format!("cannot build a {kind} vocabulary from no stories")));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in stories {
        for sym in symbols_of(s, kind, tags) {
            *counts.entry(sym).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(s, c)| *c >= min_count.max(1) && s != PAD_SYMBOL && s != OOV_SYMBOL)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut vocab = Vocabulary::new(kind, min_count);
    for (sym, _) in ranked {
        vocab.add(&sym)?;
    }
    vocab.freeze();
    Ok(vocab)
}

/// Maps symbols to ids, truncating to or right-padding with `PAD` up to `len`.
pub fn encode_sequence<S: AsRef<str>>(vocab: &Vocabulary, symbols: &[S], len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = symbols
        .iter()
        .take(len)
        .map(|s| vocab.id(s.as_ref()))
        .collect();
    ids.resize(len, PAD_ID);
    ids
}

/// Normalized POS histogram over the closed POS set, followed by the
/// normalized entity-label histogram over entity tokens (all zeros when the
/// story has no entities).
pub fn aux_vector(annotation: &LinguisticAnnotation, tags: &TagSet) -> Vec<f64> {
    let mut pos = vec![0.0; tags.pos().len()];
    for p in &annotation.pos_tags {
        pos[tags.pos_index(p)] += 1.0;
    }
    let n = annotation.pos_tags.len();
    if n > 0 {
        pos.iter_mut().for_each(|v| *v /= n as f64);
    }
    let mut ent = vec![0.0; tags.entity().len()];
    let mut m = 0usize;
    for e in &annotation.entity_tags {
        if let Some(i) = tags.entity_index(e) {
            ent[i] += 1.0;
            m += 1;
        }
    }
    if m > 0 {
        ent.iter_mut().for_each(|v| *v /= m as f64);
    }
    pos.extend(ent);
    pos
}

/// The token and dependency vocabularies used by the sequence channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabs {
    pub token: Vocabulary,
    pub dep: Vocabulary,
}

impl Vocabs {
    pub fn build(stories: &[&UserStory], min_count: usize, tags: &TagSet) -> Result<Self> {
        Ok(Vocabs {
            token: build_vocab(stories, VocabKind::Token, min_count, tags)?,
            dep: build_vocab(stories, VocabKind::Dep, min_count, tags)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub id: String,
    pub token_ids: Vec<u32>,
    pub dep_ids: Vec<u32>,
    pub aux: Vec<f64>,
    pub lexicon: Vec<f64>,
    pub label: u8,
}

pub fn encode_story(
    story: &UserStory,
    vocabs: &Vocabs,
    dict: &PrivacyDictionary,
    seq_len: usize,
    tags: &TagSet,
) -> EncodedSample {
    let a = &story.annotation;
    EncodedSample {
        id: story.id.clone(),
        token_ids: encode_sequence(&vocabs.token, &lexical_stream(a, tags), seq_len),
        dep_ids: encode_sequence(&vocabs.dep, &a.dep_tags, seq_len),
        aux: aux_vector(a, tags),
        lexicon: dict.match_story(&a.tokens).feature_vector(false),
        label: story.label.as_u8(),
    }
}

pub fn encode_corpus(
    stories: &[&UserStory],
    vocabs: &Vocabs,
    dict: &PrivacyDictionary,
    seq_len: usize,
    tags: &TagSet,
) -> Result<Vec<EncodedSample>> {
    if !vocabs.token.is_frozen() || !vocabs.dep.is_frozen() {
        return Err(Error::Config("vocabularies must be frozen before encoding".into()));
    }
    if seq_len == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    Ok(stories
        .iter()
        .map(|s| encode_story(s, vocabs, dict, seq_len, tags))
        .collect())
}

pub fn write_cache(path: &Path, samples: &[EncodedSample]) -> Result<()> {
    let first = samples.first();
    let seq_len = first.map_or(0, |s| s.token_ids.len());
    let aux_len = first.map_or(0, |s| s.aux.len());
    let lex_len = first.map_or(0, |s| s.lexicon.len());
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(seq_len as u32).to_le_bytes());
    out.extend_from_slice(&(aux_len as u32).to_le_bytes());
    out.extend_from_slice(&(lex_len as u32).to_le_bytes());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        if s.token_ids.len() != seq_len
            || s.dep_ids.len() != seq_len
            || s.aux.len() != aux_len
            || s.lexicon.len() != lex_len
        {
            return Err(Error::data(&s.id, "sample widths differ within the cache"));
        }
        let id = s.id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::data(&s.id, "story id longer than 65535 bytes"))?;
        let mut rec = Vec::new();
        rec.extend_from_slice(&id_len.to_le_bytes());
        rec.extend_from_slice(id);
        rec.push(s.label);
        for v in s.token_ids.iter().chain(&s.dep_ids) {
            rec.extend_from_slice(&v.to_le_bytes());
        }
        for v in s.aux.iter().chain(&s.lexicon) {
            rec.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(rec.len() as u32).to_le_bytes());
        out.extend_from_slice(&rec);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<Vec<EncodedSample>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        ctx: &ctx,
    };
    if r.take(8)? != CACHE_MAGIC {
        return Err(Error::data(&ctx, "not an encoded-corpus cache"));
    }
    let seq_len = r.u32()? as usize;
    let aux_len = r.u32()? as usize;
    let lex_len = r.u32()? as usize;
    let count = r.u64()? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let rec_len = r.u32()? as usize;
        let end = r.pos + rec_len;
        let id_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| Error::data(&ctx, "story id is not UTF-8"))?;
        let label = r.take(1)?[0];
        let token_ids = (0..seq_len).map(|_| r.u32()).collect::<Result<_>>()?;
        let dep_ids = (0..seq_len).map(|_| r.u32()).collect::<Result<_>>()?;
        let aux = (0..aux_len).map(|_| r.f64()).collect::<Result<_>>()?;
        let lexicon = (0..lex_len).map(|_| r.f64()).collect::<Result<_>>()?;
        if r.pos != end {
            return Err(Error::data(&ctx, format!("record `{id}` length mismatch")));
        }
        samples.push(EncodedSample {
            id,
            token_ids,
            dep_ids,
            aux,
            lexicon,
            label,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::data(&ctx, "trailing bytes after last record"));
    }
    Ok(samples)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    ctx: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::data(self.ctx, "cache truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_and_ordering() {
        let mut v = Vocabulary::new(VocabKind::Token, 2);
        for s in ["b", "a"] {
            v.add(s).unwrap();
        }
        v.freeze();
        assert!(v.add("c").is_err());
        assert_eq!(v.id("zzz"), OOV_ID);
        assert_eq!(v.symbol(0), Some(PAD_SYMBOL));
    }

    #[test]
    fn padding_and_truncation() {
        let mut v = Vocabulary::new(VocabKind::Dep, 1);
        v.add("x").unwrap();
        v.freeze();
        assert_eq!(encode_sequence::<&str>(&v, &[], 3), vec![0, 0, 0]);
        assert_eq!(encode_sequence(&v, &["x", "y"], 3), vec![2, 1, 0]);
        assert_eq!(encode_sequence(&v, &["x"; 40], 30).len(), 30);
    }

    #[test]
    fn text_round_trip() {
        let mut v = Vocabulary::new(VocabKind::Pos, 3);
        for s in ["NOUN", "VERB"] {
            v.add(s).unwrap();
        }
        v.freeze();
        let back = Vocabulary::parse(&v.to_text(), "mem").unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::parse("NOUN\t2\n", "mem").is_err());
        let bad = v.to_text().replace("VERB\t3", "VERB\t5");
        assert!(Vocabulary::parse(&bad, "mem").is_err());
    }
}
