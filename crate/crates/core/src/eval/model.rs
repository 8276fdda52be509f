//! A fitted model bundled with everything needed to score new stories.
//!
//! On disk a model is a directory holding `model.json`, `dictionary.txt`
//! and, unless the model is constant, `weights.bin`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::{target, FeatureSet, ModelSpec, ProtocolContext};
use crate::corpus::{TagSet, UserStory};
use crate::encode::{encode_corpus, EncodedSample, Vocabs, Vocabulary};
use crate::error::{Error, Result};
use crate::lexicon::PrivacyDictionary;
use crate::nn::{predict, train, Network};
use crate::pipelines::{batch_inputs, build_cnn_nlp, build_cnn_pw, build_pd_tl, dataset, PipelineConfig};
use crate::rng::derive_seed;
use crate::shallow::{self, vectorize_nlp, vectorize_sequence, FeatureMatrix, NlpRepr, ShallowModel};

const FORMAT: u32 = 1;

#[derive(Debug, Clone)]
pub enum Fitted {
    Constant(u8),
    Shallow(ShallowModel),
    Neural(Network),
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub fitted: Fitted,
    pub dict: PrivacyDictionary,
    pub tags: TagSet,
    pub vocabs: Option<Vocabs>,
    pub seq_len: usize,
    pub nlp_repr: NlpRepr,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: u32,
    model: String,
    seed: u64,
    seq_len: usize,
    nlp_repr: NlpRepr,
    dictionary_version: String,
    dep_tags: Vec<String>,
    entity_tags: Vec<String>,
    vocab_token: Option<String>,
    vocab_dep: Option<String>,
}

fn lexicon_rows<S: AsRef<str>>(tokens: &[&[S]], dict: &PrivacyDictionary) -> Vec<Vec<f64>> {
    tokens.iter().map(|t| dict.match_story(t).feature_vector(false)).collect()
}

fn lexicon_samples(rows: Vec<Vec<f64>>) -> Vec<EncodedSample> {
    rows.into_iter()
        .enumerate()
        .map(|(i, lexicon)| EncodedSample {
            id: i.to_string(),
            token_ids: Vec::new(),
            dep_ids: Vec::new(),
            aux: Vec::new(),
            lexicon,
            label: 0,
        })
        .collect()
}

fn story_tokens<'a>(stories: &'a [&UserStory]) -> Vec<&'a [String]> {
    stories.iter().map(|s| s.annotation.tokens.as_slice()).collect()
}

fn run_network(net: &mut Network, samples: &[EncodedSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&EncodedSample> = samples.iter().collect();
    let inputs = batch_inputs(net, &refs)?;
    predict(net, &inputs)
}

impl TrainedModel {
    /// Fits `spec` on `train_set` against the protocol target.
    pub fn fit(spec: ModelSpec, ctx: &ProtocolContext, train_set: &[&UserStory], seed: u64) -> Result<Self> {
        let y: Vec<u8> = train_set.iter().map(|s| target(s)).collect();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let cfg = PipelineConfig {
            seed,
            ..ctx.pipeline.clone()
        };
        let mut model = TrainedModel {
            spec,
            fitted: Fitted::Constant(0),
            dict: ctx.dict.clone(),
            tags: ctx.tags.clone(),
            vocabs: None,
            seq_len: cfg.seq_len,
            nlp_repr: ctx.nlp_repr,
            seed,
        };
        let fit_net = |mut net: Network, samples: &[EncodedSample]| -> Result<Fitted> {
            let refs: Vec<&EncodedSample> = samples.iter().collect();
            let data = dataset(&net, &refs, &yf)?;
            train(&mut net, &data, &cfg.train_config(derive_seed(seed, 1)))?;
            Ok(Fitted::Neural(net))
        };
        model.fitted = match spec {
            ModelSpec::Constant(l) => Fitted::Constant(l),
            ModelSpec::Shallow(variant, feats) => {
                if feats == FeatureSet::Nlp {
                    model.vocabs = Some(Vocabs::build(train_set, cfg.min_count, &ctx.tags)?);
                }
                let rows = model.shallow_rows(train_set)?;
                let x = FeatureMatrix::from_rows(&rows)?;
                Fitted::Shallow(shallow::fit(variant, &x, &y, &ctx.shallow, seed)?)
            }
            ModelSpec::CnnNlp => {
                let vocabs = Vocabs::build(train_set, cfg.min_count, &ctx.tags)?;
                let aux = ctx.tags.pos().len() + ctx.tags.entity().len();
                let net = build_cnn_nlp(&cfg, &vocabs, aux)?;
                model.vocabs = Some(vocabs);
                let samples = model.encode(train_set)?;
                fit_net(net, &samples)?
            }
            ModelSpec::CnnPw => {
                let net = build_cnn_pw(&cfg, ctx.dict.len())?;
                fit_net(net, &lexicon_samples(lexicon_rows(&story_tokens(train_set), &ctx.dict)))?
            }
            ModelSpec::PdTl => {
                let pre = ctx
                    .pretrained
                    .as_ref()
                    .ok_or_else(|| Error::Config("pd_tl needs a pretrained checkpoint".into()))?;
                model.seq_len = pre.config.seq_len;
                model.vocabs = Some(pre.vocabs.clone());
                let (net, _) = build_pd_tl(pre, &cfg, ctx.dict.len())?;
                let samples = model.encode(train_set)?;
                fit_net(net, &samples)?
            }
        };
        Ok(model)
    }

    /// True when scoring needs full linguistic annotations, not just tokens.
    pub fn needs_annotations(&self) -> bool {
        matches!(
            self.spec,
            ModelSpec::Shallow(_, FeatureSet::Nlp) | ModelSpec::CnnNlp | ModelSpec::PdTl
        )
    }

    fn vocabs(&self) -> Result<&Vocabs> {
        self.vocabs
            .as_ref()
            .ok_or_else(|| Error::Checkpoint(format!("{} model has no vocabularies", self.spec)))
    }

    fn encode(&self, stories: &[&UserStory]) -> Result<Vec<EncodedSample>> {
        encode_corpus(stories, self.vocabs()?, &self.dict, self.seq_len, &self.tags)
    }

    fn shallow_rows(&self, stories: &[&UserStory]) -> Result<Vec<Vec<f64>>> {
        match self.spec {
            ModelSpec::Shallow(_, FeatureSet::Nlp) => Ok(match self.nlp_repr {
                NlpRepr::Bag => {
                    let vocabs = self.vocabs()?;
                    stories
                        .iter()
                        .map(|s| vectorize_nlp(&s.annotation, vocabs, &self.tags))
                        .collect()
                }
                NlpRepr::Sequence => self.encode(stories)?.iter().map(vectorize_sequence).collect(),
            }),
            _ => Ok(lexicon_rows(&story_tokens(stories), &self.dict)),
        }
    }

    /// Class-1 scores for annotated stories.
    pub fn score(&mut self, stories: &[&UserStory]) -> Result<Vec<f64>> {
        let samples = match self.spec {
            ModelSpec::CnnNlp | ModelSpec::PdTl => Some(self.encode(stories)?),
            ModelSpec::CnnPw => Some(lexicon_samples(lexicon_rows(&story_tokens(stories), &self.dict))),
            _ => None,
        };
        let rows = match (&self.fitted, samples.is_none()) {
            (Fitted::Shallow(_), true) => self.shallow_rows(stories)?,
            _ => Vec::new(),
        };
        match &mut self.fitted {
            Fitted::Constant(l) => Ok(vec![f64::from(*l); stories.len()]),
            Fitted::Shallow(m) => rows.iter().map(|x| m.predict(x).map(|p| p.score)).collect(),
            Fitted::Neural(net) => run_network(net, samples.as_deref().unwrap_or(&[])),
        }
    }

    /// Class-1 scores from bare token lists; only lexicon-based models qualify.
    pub fn score_tokens<S: AsRef<str>>(&mut self, tokens: &[&[S]]) -> Result<Vec<f64>> {
        if self.needs_annotations() {
            return Err(Error::Config(format!(
                "annotations required: {} reads linguistic annotations, not bare tokens",
                self.spec
            )));
        }
        let rows = lexicon_rows(tokens, &self.dict);
        match &mut self.fitted {
            Fitted::Constant(l) => Ok(vec![f64::from(*l); tokens.len()]),
            Fitted::Shallow(m) => rows.iter().map(|x| m.predict(x).map(|p| p.score)).collect(),
            Fitted::Neural(net) => run_network(net, &lexicon_samples(rows)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            format: FORMAT,
            model: self.spec.id(),
            seed: self.seed,
            seq_len: self.seq_len,
            nlp_repr: self.nlp_repr,
            dictionary_version: self.dict.version().to_string(),
            dep_tags: self.tags.dep().to_vec(),
            entity_tags: self.tags.entity().to_vec(),
            vocab_token: self.vocabs.as_ref().map(|v| v.token.to_text()),
            vocab_dep: self.vocabs.as_ref().map(|v| v.dep.to_text()),
        };
        let json = serde_json::to_string_pretty(&meta).expect("model metadata json");
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        write("model.json", json.as_bytes())?;
        write("dictionary.txt", self.dict.to_text().as_bytes())?;
        match &self.fitted {
            Fitted::Constant(_) => Ok(()),
            Fitted::Shallow(m) => write("weights.bin", &m.to_bytes()),
            Fitted::Neural(net) => write("weights.bin", &net.to_bytes(&BTreeMap::new())),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| Error::io(&p, e))
        };
        let meta: Meta = serde_json::from_slice(&read("model.json")?)
            .map_err(|e| Error::Checkpoint(format!("bad model.json: {e}")))?;
        if meta.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported model format {}", meta.format)));
        }
        let spec: ModelSpec = meta.model.parse()?;
        let dict_text = String::from_utf8(read("dictionary.txt")?)
            .map_err(|_| Error::Checkpoint("dictionary.txt is not UTF-8".into()))?;
        let dict = PrivacyDictionary::parse(&dict_text, "model dictionary")?;
        let vocabs = match (&meta.vocab_token, &meta.vocab_dep) {
            (Some(t), Some(d)) => Some(Vocabs {
                token: Vocabulary::parse(t, "model token vocabulary")?,
                dep: Vocabulary::parse(d, "model dependency vocabulary")?,
            }),
            _ => None,
        };
        let fitted = match spec {
            ModelSpec::Constant(l) => Fitted::Constant(l),
            ModelSpec::Shallow(..) => Fitted::Shallow(ShallowModel::from_bytes(&read("weights.bin")?)?),
            _ => Fitted::Neural(Network::from_bytes(&read("weights.bin")?)?.0),
        };
        Ok(TrainedModel {
            spec,
            fitted,
            dict,
            tags: TagSet::new(meta.dep_tags, meta.entity_tags),
            vocabs,
            seq_len: meta.seq_len,
            nlp_repr: meta.nlp_repr,
            seed: meta.seed,
        })
    }
}
