//! The three network pipelines, pretraining and transfer surgery.
//!
//! Layer names are part of the public contract: the transfer model truncates
//! a pretrained CNN_NLP network after [`NLP_FLATTEN`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, TagSet, UserStory};
use crate::encode::{encode_corpus, EncodedSample, Vocabs, Vocabulary, DEFAULT_SEQ_LEN};
use crate::error::{Error, Result};
use crate::lexicon::PrivacyDictionary;
use crate::nn::{
    accuracy, predict, train, Activation, AdamConfig, Dataset, Inputs, Layer, Network, Tensor,
    TrainConfig, TrainReport,
};
use crate::rng::{derive_seed, rng_from_seed};

pub const TOKEN_PORT: &str = "token_ids";
pub const DEP_PORT: &str = "dep_ids";
pub const AUX_PORT: &str = "aux";
pub const LEXICON_PORT: &str = "lexicon";
pub const NLP_FLATTEN: &str = "nlp_flatten";
pub const PW_FLATTEN: &str = "pw_flatten";
pub const MIN_PRETRAIN_SAMPLES: usize = 200;

/// Architecture and training hyperparameters, stored as `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub embedding_dim: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub dense_width: usize,
    pub lexicon_width: usize,
    pub dropout: f64,
    pub seq_len: usize,
    pub min_count: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// Pretrained parameterized layers left trainable in the transfer model,
    /// counted from the truncation point backwards.
    pub unfreeze_top: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            embedding_dim: 64,
            filters: 128,
            kernel_width: 5,
            dense_width: 64,
            lexicon_width: 64,
            dropout: 0.5,
            seq_len: DEFAULT_SEQ_LEN,
            min_count: 1,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            patience: 5,
            validation_fraction: 0.1,
            unfreeze_top: 0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Reduced widths for single-core desk runs of the full protocol.
    pub fn desk() -> Self {
        PipelineConfig {
            embedding_dim: 24,
            filters: 32,
            kernel_width: 3,
            dense_width: 32,
            lexicon_width: 16,
            learning_rate: 3e-3,
            epochs: 20,
            patience: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("filters", self.filters),
            ("kernel_width", self.kernel_width),
            ("dense_width", self.dense_width),
            ("lexicon_width", self.lexicon_width),
            ("seq_len", self.seq_len),
            ("min_count", self.min_count),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{k}` must be positive")));
        }
        if self.kernel_width > self.seq_len {
            return Err(Error::Config(format!(
                "kernel_width {} exceeds seq_len {}",
                self.kernel_width, self.seq_len
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction outside [0, 1)".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("embedding_dim", self.embedding_dim.to_string());
        kv("filters", self.filters.to_string());
        kv("kernel_width", self.kernel_width.to_string());
        kv("dense_width", self.dense_width.to_string());
        kv("lexicon_width", self.lexicon_width.to_string());
        kv("dropout", self.dropout.to_string());
        kv("seq_len", self.seq_len.to_string());
        kv("min_count", self.min_count.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("patience", self.patience.to_string());
        kv("validation_fraction", self.validation_fraction.to_string());
        kv("unfreeze_top", self.unfreeze_top.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    /// Parses `key = value` lines; `#` starts a comment. Missing keys keep
    /// their defaults.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut c = PipelineConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ctx = || format!("{source}:{}", no + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::data(ctx(), "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = |e: &dyn std::fmt::Display| Error::data(ctx(), format!("bad value for `{k}`: {e}"));
            macro_rules! set {
                ($field:ident) => {
                    c.$field = v.parse().map_err(|e| bad(&e))?
                };
            }
            match k {
                "embedding_dim" => set!(embedding_dim),
                "filters" => set!(filters),
                "kernel_width" => set!(kernel_width),
                "dense_width" => set!(dense_width),
                "lexicon_width" => set!(lexicon_width),
                "dropout" => set!(dropout),
                "seq_len" => set!(seq_len),
                "min_count" => set!(min_count),
                "learning_rate" => set!(learning_rate),
                "batch_size" => set!(batch_size),
                "epochs" => set!(epochs),
                "patience" => set!(patience),
                "validation_fraction" => set!(validation_fraction),
                "unfreeze_top" => set!(unfreeze_top),
                "seed" => set!(seed),
                _ => return Err(Error::data(ctx(), format!("unknown key `{k}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))[..16].to_string()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                lr: self.learning_rate,
                ..AdamConfig::default()
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed,
        }
    }
}

fn classifier_head(net: &mut Network, prefix: &str, features: crate::nn::Source, width: usize, cfg: &PipelineConfig) -> Result<()> {
    let h = net.add(
        &format!("{prefix}hidden"),
        Layer::dense(width, cfg.dense_width, Activation::Relu),
        &[features],
    )?;
    let d = net.add(&format!("{prefix}dropout"), Layer::dropout(cfg.dropout), &[h])?;
    let o = net.add(
        &format!("{prefix}output"),
        Layer::dense(cfg.dense_width, 1, Activation::Sigmoid),
        &[d],
    )?;
    net.set_output(o)
}

/// Token and dependency channels (embedding, convolution, max-pool,
/// flatten), concatenated and flattened, then joined with the auxiliary
/// histogram ahead of the classifier head.
pub fn build_cnn_nlp(cfg: &PipelineConfig, vocabs: &Vocabs, aux_width: usize) -> Result<Network> {
    cfg.validate()?;
    if !vocabs.token.is_frozen() || !vocabs.dep.is_frozen() {
        return Err(Error::Config("vocabularies must be frozen".into()));
    }
    let mut net = Network::new(cfg.seed);
    let channel = |net: &mut Network, port: &str, prefix: &str, vocab: &Vocabulary| {
        let ids = net.input(port, &[cfg.seq_len])?;
        let e = net.add(
            &format!("{prefix}_embedding"),
            Layer::embedding(vocab.len(), cfg.embedding_dim),
            &[ids],
        )?;
        let c = net.add(
            &format!("{prefix}_conv"),
            Layer::conv1d(cfg.embedding_dim, cfg.filters, cfg.kernel_width),
            &[e],
        )?;
        let p = net.add(&format!("{prefix}_pool"), Layer::GlobalMaxPool1d, &[c])?;
        net.add(&format!("{prefix}_flatten"), Layer::Flatten, &[p])
    };
    let a = channel(&mut net, TOKEN_PORT, "tok", &vocabs.token)?;
    let b = channel(&mut net, DEP_PORT, "dep", &vocabs.dep)?;
    let aux = net.input(AUX_PORT, &[aux_width])?;
    let ab = net.add("nlp_concat", Layer::Concatenate, &[a, b])?;
    let f = net.add(NLP_FLATTEN, Layer::Flatten, &[ab])?;
    let all = net.add("aux_concat", Layer::Concatenate, &[f, aux])?;
    classifier_head(&mut net, "", all, 2 * cfg.filters + aux_width, cfg)?;
    net.validate()?;
    Ok(net)
}

fn lexicon_branch(net: &mut Network, cfg: &PipelineConfig, n_categories: usize) -> Result<crate::nn::Source> {
    if n_categories == 0 {
        return Err(Error::Config("lexicon needs at least one category".into()));
    }
    let x = net.input(LEXICON_PORT, &[n_categories])?;
    let d = net.add(
        "pw_dense",
        Layer::dense(n_categories, cfg.lexicon_width, Activation::Relu),
        &[x],
    )?;
    net.add(PW_FLATTEN, Layer::Flatten, &[d])
}

/// Lexicon vector through a dense layer and a flatten stage, then the
/// classifier head.
pub fn build_cnn_pw(cfg: &PipelineConfig, n_categories: usize) -> Result<Network> {
    cfg.validate()?;
    let mut net = Network::new(cfg.seed);
    let f = lexicon_branch(&mut net, cfg, n_categories)?;
    classifier_head(&mut net, "", f, cfg.lexicon_width, cfg)?;
    net.validate()?;
    Ok(net)
}

/// Closed-form parameter count of [`build_cnn_nlp`].
pub fn cnn_nlp_parameter_count(cfg: &PipelineConfig, token_vocab: usize, dep_vocab: usize, aux_width: usize) -> usize {
    let (d, f, w, h) = (cfg.embedding_dim, cfg.filters, cfg.kernel_width, cfg.dense_width);
    (token_vocab + dep_vocab) * d + 2 * (f * w * d + f) + (2 * f + aux_width) * h + h + h + 1
}

/// A pretrained CNN_NLP network with the vocabularies it was trained on.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub network: Network,
    pub vocabs: Vocabs,
    pub config: PipelineConfig,
    pub corpus_hash: String,
    pub heldout_accuracy: f64,
    pub report: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedExtractor {
    pub source_checkpoint: String,
    pub truncation_layer: String,
    pub output_width: usize,
    pub frozen_layers: Vec<String>,
}

impl Pretrained {
    fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("config".to_string(), self.config.to_text()),
            ("config_hash".to_string(), self.config.hash()),
            ("corpus_hash".to_string(), self.corpus_hash.clone()),
            ("seed".to_string(), self.config.seed.to_string()),
            ("truncation_layer".to_string(), NLP_FLATTEN.to_string()),
            ("heldout_accuracy".to_string(), format!("{:.6}", self.heldout_accuracy)),
            ("vocab.token".to_string(), self.vocabs.token.to_text()),
            ("vocab.dep".to_string(), self.vocabs.dep.to_text()),
        ])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.network.to_bytes(&self.metadata())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (network, meta) = Network::from_bytes(bytes)?;
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Checkpoint(format!("manifest lacks `{k}`")))
        };
        Ok(Pretrained {
            vocabs: Vocabs {
                token: Vocabulary::parse(get("vocab.token")?, "checkpoint token vocabulary")?,
                dep: Vocabulary::parse(get("vocab.dep")?, "checkpoint dependency vocabulary")?,
            },
            config: PipelineConfig::parse(get("config")?, "checkpoint config")?,
            corpus_hash: get("corpus_hash")?.clone(),
            heldout_accuracy: get("heldout_accuracy")?.parse().unwrap_or(f64::NAN),
            report: None,
            network,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn checkpoint_id(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::container::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&crate::container::read_file(path)?)
    }
}

/// Network inputs for every port `net` declares.
pub fn batch_inputs(net: &Network, samples: &[&EncodedSample]) -> Result<Inputs> {
    let b = samples.len();
    let mut out = Inputs::new();
    for port in net.ports() {
        let width: usize = port.shape.iter().product();
        let mut data = Vec::with_capacity(b * width);
        for s in samples {
            let row: Vec<f64> = match port.name.as_str() {
                TOKEN_PORT => s.token_ids.iter().map(|&i| i as f64).collect(),
                DEP_PORT => s.dep_ids.iter().map(|&i| i as f64).collect(),
                AUX_PORT => s.aux.clone(),
                LEXICON_PORT => s.lexicon.clone(),
                other => return Err(Error::Network(format!("no sample field feeds port `{other}`"))),
            };
            if row.len() != width {
                return Err(Error::shape(
                    &port.name,
                    format!("sample `{}` provides {} values, port expects {width}", s.id, row.len()),
                ));
            }
            data.extend(row);
        }
        let mut shape = vec![b];
        shape.extend(&port.shape);
        out.insert(port.name.clone(), Tensor::new(shape, data)?);
    }
    Ok(out)
}

pub fn dataset(net: &Network, samples: &[&EncodedSample], targets: &[f64]) -> Result<Dataset> {
    Dataset::new(batch_inputs(net, samples)?, targets.to_vec())
}

/// Trains a CNN_NLP network on a labeled disclosure corpus.
///
/// A fifth of the corpus (at least one sample) is held out for the reported
/// accuracy; vocabularies come from the remaining part.
pub fn pretrain(cfg: &PipelineConfig, corpus: &Corpus, tags: &TagSet, allow_small: bool) -> Result<Pretrained> {
    cfg.validate()?;
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Empty(format!("pretraining corpus has {n} samples")));
    }
    if n < MIN_PRETRAIN_SAMPLES && !allow_small {
        return Err(Error::Config(format!(
            "pretraining corpus has {n} samples (< {MIN_PRETRAIN_SAMPLES}); set allow_small (`--allow-small`) to proceed"
        )));
    }
    let labels: Vec<u8> = corpus.stories().iter().map(|s| s.label.as_u8()).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Data {
            context: "pretraining corpus".into(),
            message: "needs both disclosure and non-disclosure samples".into(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, 100)));
    let n_test = (n / 5).max(1);
    let (test_idx, train_idx) = order.split_at(n_test);
    let pick = |idx: &[usize]| -> Vec<&UserStory> { idx.iter().map(|&i| &corpus.stories()[i]).collect() };
    let (train_s, test_s) = (pick(train_idx), pick(test_idx));

    let vocabs = Vocabs::build(&train_s, cfg.min_count, tags)?;
    let dict = PrivacyDictionary::seed();
    let enc_train = encode_corpus(&train_s, &vocabs, &dict, cfg.seq_len, tags)?;
    let enc_test = encode_corpus(&test_s, &vocabs, &dict, cfg.seq_len, tags)?;
    let aux_width = tags.pos().len() + tags.entity().len();
    let mut net = build_cnn_nlp(cfg, &vocabs, aux_width)?;

    let target = |e: &[EncodedSample]| -> Vec<f64> { e.iter().map(|s| f64::from(s.label)).collect() };
    let refs: Vec<&EncodedSample> = enc_train.iter().collect();
    let data = dataset(&net, &refs, &target(&enc_train))?;
    let report = train(&mut net, &data, &cfg.train_config(derive_seed(cfg.seed, 101)))?;
    let test_refs: Vec<&EncodedSample> = enc_test.iter().collect();
    let test_inputs = batch_inputs(&net, &test_refs)?;
    let scores = predict(&mut net, &test_inputs)?;
    Ok(Pretrained {
        network: net,
        vocabs,
        config: cfg.clone(),
        corpus_hash: corpus.content_hash(),
        heldout_accuracy: accuracy(&scores, &target(&enc_test)),
        report: Some(report),
    })
}

/// Truncates the pretrained network after [`NLP_FLATTEN`], freezes it
/// (apart from `unfreeze_top` layers) and joins it with a fresh lexicon
/// branch ahead of a new classifier head.
pub fn build_pd_tl(
    pretrained: &Pretrained,
    cfg: &PipelineConfig,
    n_categories: usize,
) -> Result<(Network, PretrainedExtractor)> {
    cfg.validate()?;
    build_pd_tl_from(&pretrained.network, &pretrained.checkpoint_id(), cfg, n_categories)
}

pub fn build_pd_tl_from(
    source: &Network,
    source_id: &str,
    cfg: &PipelineConfig,
    n_categories: usize,
) -> Result<(Network, PretrainedExtractor)> {
    if source.node(NLP_FLATTEN).is_none() {
        return Err(Error::Network(format!(
            "pretrained network has no `{NLP_FLATTEN}` layer to truncate after"
        )));
    }
    let mut net = source.truncate_after(NLP_FLATTEN)?;
    let width = net
        .output_width()
        .ok_or_else(|| Error::Network("truncated network has no output".into()))?;
    let pretrained_layers: Vec<String> = net
        .nodes()
        .iter()
        .filter(|n| !n.params.is_empty())
        .map(|n| n.name.clone())
        .collect();
    net.freeze(&pretrained_layers)?;
    let k = cfg.unfreeze_top.min(pretrained_layers.len());
    let top: Vec<String> = pretrained_layers.iter().rev().take(k).cloned().collect();
    net.unfreeze(&top)?;
    let frozen_layers: Vec<String> = net.frozen_layers().iter().map(|s| s.to_string()).collect();

    net.init_seed = cfg.seed;
    let features = net
        .node_ref(NLP_FLATTEN)
        .ok_or_else(|| Error::Network("truncation layer vanished".into()))?;
    let lex = lexicon_branch(&mut net, cfg, n_categories)?;
    let joined = net.add("tl_concat", Layer::Concatenate, &[features, lex])?;
    classifier_head(&mut net, "tl_", joined, width + cfg.lexicon_width, cfg)?;
    net.validate()?;
    Ok((
        net,
        PretrainedExtractor {
            source_checkpoint: source_id.to_string(),
            truncation_layer: NLP_FLATTEN.to_string(),
            output_width: width,
            frozen_layers,
        },
    ))
}
