use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Label, LinguisticAnnotation, ManifestEntry, TagSet, UserStory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoryRecord {
    id: String,
    dataset: u32,
    text: String,
    tokens: Vec<String>,
    pos: Vec<String>,
    dep: Vec<String>,
    entities: Vec<String>,
    #[serde(default)]
    privacy_categories: Vec<(String, u32)>,
    #[serde(default)]
    privacy_words: Vec<String>,
    label: u8,
}

/// CSV rows carry list-valued fields as JSON arrays inside cells.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    id: String,
    dataset: u32,
    text: String,
    tokens: String,
    pos: String,
    dep: String,
    entities: String,
    #[serde(default)]
    privacy_categories: String,
    #[serde(default)]
    privacy_words: String,
    label: u8,
}

impl StoryRecord {
    fn into_story(self, tags: &TagSet, context: &str) -> Result<UserStory> {
        let label = Label::try_from(self.label)
            .map_err(|m| Error::data(context, format!("field `label`: {m}")))?;
        let mut annotation = LinguisticAnnotation::new(self.tokens, self.pos, self.dep, self.entities)
            .map_err(|e| Error::data(context, e.to_string()))?;
        annotation.normalize_tags(tags);
        UserStory::new(
            self.id,
            self.dataset,
            self.text,
            annotation,
            label,
            self.privacy_categories,
            self.privacy_words,
        )
        .map_err(|e| Error::data(context, e.to_string()))
    }

    fn from_story(s: &UserStory) -> Self {
        StoryRecord {
            id: s.id.clone(),
            dataset: s.dataset_id,
            text: s.text.clone(),
            tokens: s.annotation.tokens.clone(),
            pos: s.annotation.pos_tags.clone(),
            dep: s.annotation.dep_tags.clone(),
            entities: s.annotation.entity_tags.clone(),
            privacy_categories: s.privacy_categories.clone(),
            privacy_words: s.privacy_words.clone(),
            label: s.label.as_u8(),
        }
    }
}

impl CsvRecord {
    fn into_record(self, context: &str) -> Result<StoryRecord> {
        fn list<T: serde::de::DeserializeOwned + Default>(
            cell: &str,
            field: &str,
            context: &str,
        ) -> Result<T> {
            if cell.trim().is_empty() {
                return Ok(T::default());
            }
            serde_json::from_str(cell)
                .map_err(|e| Error::data(context, format!("field `{field}`: {e}")))
        }
        Ok(StoryRecord {
            tokens: list(&self.tokens, "tokens", context)?,
            pos: list(&self.pos, "pos", context)?,
            dep: list(&self.dep, "dep", context)?,
            entities: list(&self.entities, "entities", context)?,
            privacy_categories: list(&self.privacy_categories, "privacy_categories", context)?,
            privacy_words: list(&self.privacy_words, "privacy_words", context)?,
            id: self.id,
            dataset: self.dataset,
            text: self.text,
            label: self.label,
        })
    }

    fn from_record(r: StoryRecord) -> Self {
        fn enc<T: Serialize>(v: &T) -> String {
            serde_json::to_string(v).expect("list serialization")
        }
        CsvRecord {
            tokens: enc(&r.tokens),
            pos: enc(&r.pos),
            dep: enc(&r.dep),
            entities: enc(&r.entities),
            privacy_categories: enc(&r.privacy_categories),
            privacy_words: enc(&r.privacy_words),
            id: r.id,
            dataset: r.dataset,
            text: r.text,
            label: r.label,
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    load_corpus_with(path, format, &TagSet::default())
}

pub fn load_corpus_with(path: &Path, format: CorpusFormat, tags: &TagSet) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let stories = match format {
        CorpusFormat::Jsonl => {
            let mut stories = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let context = format!("{name}:{}", i + 1);
                let record: StoryRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::data(&context, format!("malformed record: {e}")))?;
                stories.push(record.into_story(tags, &context)?);
            }
            stories
        }
        CorpusFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let mut stories = Vec::new();
            for (i, row) in reader.deserialize::<CsvRecord>().enumerate() {
                // header is line 1
                let context = format!("{name}:{}", i + 2);
                let row = row.map_err(|e| Error::data(&context, format!("malformed record: {e}")))?;
                stories.push(row.into_record(&context)?.into_story(tags, &context)?);
            }
            stories
        }
    };
    Corpus::new(stories).map_err(|e| match e {
        Error::Data { message, .. } => Error::data(name, message),
        other => other,
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        CorpusFormat::Jsonl => {
            for s in corpus.stories() {
                let line = serde_json::to_string(&StoryRecord::from_story(s))
                    .expect("record serialization");
                writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
            }
        }
        CorpusFormat::Csv => {
            let mut writer = csv::Writer::from_writer(out);
            for s in corpus.stories() {
                writer
                    .serialize(CsvRecord::from_record(StoryRecord::from_story(s)))
                    .map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
            }
            writer.flush().map_err(|e| Error::io(path, e))?;
            return Ok(());
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads `dataset_id<TAB>description<TAB>size` lines.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let context = format!("{}:{}", path.display(), i + 1);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::data(context, "expected dataset_id<TAB>description<TAB>size"));
        }
        let dataset_id = cols[0]
            .trim()
            .parse()
            .map_err(|_| Error::data(&context, format!("bad dataset id {:?}", cols[0])))?;
        let declared_size = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::data(&context, format!("bad size {:?}", cols[2])))?;
        entries.push(ManifestEntry {
            dataset_id,
            description: cols[1].to_string(),
            declared_size,
        });
    }
    Ok(entries)
}
