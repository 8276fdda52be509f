#![allow(dead_code)]

use privstory::corpus::{Corpus, TagSet, UserStory};
use privstory::encode::{encode_corpus, EncodedSample, Vocabs};
use privstory::lexicon::PrivacyDictionary;
use privstory::nn::*;
use privstory::pipelines::*;
use privstory::rng::rng_from_seed;
use privstory::synth::{generate_stories, StoryGenConfig};
use rand::Rng;

pub const LAYER_KINDS: usize = 4;

pub fn small_corpus(n: usize, seed: u64) -> Corpus {
    generate_stories(&StoryGenConfig {
        n,
        seed,
        ..StoryGenConfig::default()
    })
    .unwrap()
}

pub fn encode(corpus: &Corpus, cfg: &PipelineConfig) -> (Vocabs, Vec<EncodedSample>) {
    let tags = TagSet::default();
    let refs: Vec<&UserStory> = corpus.stories().iter().collect();
    let vocabs = Vocabs::build(&refs, cfg.min_count, &tags).unwrap();
    let enc = encode_corpus(&refs, &vocabs, &PrivacyDictionary::seed(), cfg.seq_len, &tags).unwrap();
    (vocabs, enc)
}

pub fn aux_width() -> usize {
    let tags = TagSet::default();
    tags.pos().len() + tags.entity().len()
}

pub fn n_categories() -> usize {
    PrivacyDictionary::seed().len()
}

pub fn bits(net: &Network, layer: &str) -> Vec<u64> {
    net.params()
        .iter()
        .filter(|p| p.name.starts_with(&format!("{layer}.")))
        .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

/// Builds a random classifier exercising one layer family and returns it
/// with a random batch.
///
/// 0: dense with each activation; 1: embedding, conv, pool, flatten;
/// 2: embedding, conv, flatten; 3: concatenate and dropout.
pub fn layer_case(kind: usize, seed: u64) -> (Network, Inputs, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let batch = rng.gen_range(1..5);
    let mut net = Network::new(seed);
    let mut feed = Inputs::new();
    let targets: Vec<f64> = (0..batch).map(|_| f64::from(rng.gen_range(0..2))).collect();
    let dense_input = |net: &mut Network, feed: &mut Inputs, rng: &mut rand_chacha::ChaCha8Rng, name: &str, w: usize| {
        let src = net.input(name, &[w]).unwrap();
        let data: Vec<f64> = (0..batch * w).map(|_| rng.gen_range(-2.0..2.0)).collect();
        feed.insert(name.into(), Tensor::new(vec![batch, w], data).unwrap());
        src
    };
    let feat = match kind {
        0 => {
            let w = rng.gen_range(1..6);
            let x = dense_input(&mut net, &mut feed, &mut rng, "x", w);
            let h = rng.gen_range(1..6);
            let act = [Activation::Relu, Activation::Sigmoid, Activation::Linear][rng.gen_range(0..3)];
            net.add("hidden", Layer::dense(w, h, act), &[x]).unwrap()
        }
        1 | 2 => {
            let len = rng.gen_range(3..8);
            let vocab = rng.gen_range(2..7);
            let dim = rng.gen_range(1..4);
            let ids = net.input("ids", &[len]).unwrap();
            let data: Vec<f64> = (0..batch * len).map(|_| f64::from(rng.gen_range(0..vocab as u32))).collect();
            feed.insert("ids".into(), Tensor::new(vec![batch, len], data).unwrap());
            let e = net.add("emb", Layer::embedding(vocab, dim), &[ids]).unwrap();
            let width = rng.gen_range(1..=len.min(4));
            let filters = rng.gen_range(1..5);
            let c = net.add("conv", Layer::conv1d(dim, filters, width), &[e]).unwrap();
            if kind == 1 {
                let p = net.add("pool", Layer::GlobalMaxPool1d, &[c]).unwrap();
                net.add("flat", Layer::Flatten, &[p]).unwrap()
            } else {
                net.add("flat", Layer::Flatten, &[c]).unwrap()
            }
        }
        3 => {
            let a = rng.gen_range(1..4);
            let b = rng.gen_range(1..4);
            let xa = dense_input(&mut net, &mut feed, &mut rng, "a", a);
            let xb = dense_input(&mut net, &mut feed, &mut rng, "b", b);
            let ha = net.add("ha", Layer::dense(a, 3, Activation::Relu), &[xa]).unwrap();
            let cat = net.add("cat", Layer::Concatenate, &[ha, xb]).unwrap();
            net.add("drop", Layer::dropout(rng.gen_range(0.0..0.6)), &[cat]).unwrap()
        }
        _ => unreachable!(),
    };
    let width = net.nodes().last().unwrap().out_shape[0];
    let o = net.add("out", Layer::dense(width, 1, Activation::Sigmoid), &[feat]).unwrap();
    net.set_output(o).unwrap();
    (net, feed, targets)
}

pub fn random_pipeline_config(rng: &mut impl Rng) -> PipelineConfig {
    let seq_len = rng.gen_range(3..9);
    PipelineConfig {
        embedding_dim: rng.gen_range(1..5),
        filters: rng.gen_range(1..5),
        kernel_width: rng.gen_range(1..=seq_len.min(4)),
        dense_width: rng.gen_range(1..6),
        lexicon_width: rng.gen_range(1..6),
        dropout: rng.gen_range(0.0..0.6),
        seq_len,
        seed: rng.gen(),
        ..PipelineConfig::default()
    }
}

/// Gradient-check report for one randomly sized `pipeline` network
/// (`cnn_nlp`, `cnn_pw` or `pd_tl`) on a random batch of `corpus`.
pub fn pipeline_gradcheck(pipeline: &str, corpus: &Corpus, trial: u64) -> GradCheckReport {
    let mut rng = rng_from_seed(trial);
    let cfg = random_pipeline_config(&mut rng);
    let (vocabs, enc) = encode(corpus, &cfg);
    let mut net = match pipeline {
        "cnn_nlp" => build_cnn_nlp(&cfg, &vocabs, aux_width()).unwrap(),
        "cnn_pw" => build_cnn_pw(&cfg, n_categories()).unwrap(),
        "pd_tl" => {
            let source = build_cnn_nlp(&cfg, &vocabs, aux_width()).unwrap();
            let tl_cfg = PipelineConfig {
                unfreeze_top: rng.gen_range(0..3),
                ..cfg.clone()
            };
            build_pd_tl_from(&source, "src", &tl_cfg, n_categories()).unwrap().0
        }
        other => panic!("unknown pipeline {other}"),
    };
    let batch = rng.gen_range(1..5);
    let start = rng.gen_range(0..enc.len() - batch);
    let refs: Vec<&EncodedSample> = enc[start..start + batch].iter().collect();
    let targets: Vec<f64> = refs.iter().map(|s| f64::from(s.label)).collect();
    let inputs = batch_inputs(&net, &refs).unwrap();
    let cfg = GradCheckConfig {
        seed: trial,
        ..GradCheckConfig::default()
    };
    check_gradients(&mut net, &inputs, &targets, &cfg).unwrap()
}
