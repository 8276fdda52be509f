mod common;

use privstory::corpus::{Corpus, TagSet, UserStory};
use privstory::encode::EncodedSample;
use privstory::nn::*;
use privstory::pipelines::*;
use common::*;
use privstory::synth::generate_surrogate_corpus;

#[test]
fn cnn_nlp_parameter_count_matches_closed_form() {
    let cfg = PipelineConfig::default();
    let corpus = small_corpus(60, 1);
    let (vocabs, _) = encode(&corpus, &cfg);
    let a = aux_width();
    let net = build_cnn_nlp(&cfg, &vocabs, a).unwrap();
    let (vt, vd) = (vocabs.token.len(), vocabs.dep.len());
    // embeddings, two conv stacks, hidden over [2F + A], sigmoid output
    let expected = (vt + vd) * 64 + 2 * (128 * 5 * 64 + 128) + (2 * 128 + a) * 64 + 64 + 64 + 1;
    assert_eq!(net.parameter_count(), expected);
    assert_eq!(cnn_nlp_parameter_count(&cfg, vt, vd, a), expected);
    assert!(net.is_classifier());
}

#[test]
fn cnn_nlp_scores_lie_strictly_inside_unit_interval() {
    let cfg = PipelineConfig::desk();
    let corpus = small_corpus(50, 2);
    let (vocabs, enc) = encode(&corpus, &cfg);
    let mut net = build_cnn_nlp(&cfg, &vocabs, aux_width()).unwrap();
    let refs: Vec<&EncodedSample> = enc.iter().collect();
    let inputs = batch_inputs(&net, &refs).unwrap();
    let scores = predict(&mut net, &inputs).unwrap();
    assert_eq!(scores.len(), 50);
    assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
}

#[test]
fn kernel_wider_than_sequence_is_rejected() {
    let cfg = PipelineConfig {
        kernel_width: 31,
        seq_len: 30,
        ..PipelineConfig::default()
    };
    let corpus = small_corpus(20, 3);
    let (vocabs, _) = encode(&corpus, &PipelineConfig::default());
    let err = build_cnn_nlp(&cfg, &vocabs, aux_width()).unwrap_err();
    assert!(err.to_string().contains("kernel_width"), "{err}");
    assert!(build_cnn_pw(&cfg, 4).is_err());
}

#[test]
fn cnn_pw_with_zero_output_layer_is_neutral() {
    let cfg = PipelineConfig::default();
    let mut net = build_cnn_pw(&cfg, n_categories()).unwrap();
    assert_eq!(net.node(PW_FLATTEN).unwrap().out_shape, vec![cfg.lexicon_width]);
    net.set_param("output.weight", Tensor::zeros(&[1, cfg.dense_width])).unwrap();
    net.set_param("output.bias", Tensor::zeros(&[1])).unwrap();
    let mut feed = Inputs::new();
    feed.insert(LEXICON_PORT.into(), Tensor::zeros(&[3, n_categories()]));
    net.set_mode(Mode::Infer);
    assert!(net.forward(&feed).unwrap().data().iter().all(|&v| v == 0.5));
}

#[test]
fn batch_inputs_reject_foreign_ports_and_widths() {
    let cfg = PipelineConfig::desk();
    let corpus = small_corpus(10, 4);
    let (_, mut enc) = encode(&corpus, &cfg);
    let net = build_cnn_pw(&cfg, n_categories()).unwrap();
    enc[0].lexicon.pop();
    let refs: Vec<&EncodedSample> = enc.iter().collect();
    assert!(batch_inputs(&net, &refs).is_err());
    let mut other = Network::new(0);
    let x = other.input("pixels", &[2]).unwrap();
    let o = other.add("out", Layer::dense(2, 1, Activation::Sigmoid), &[x]).unwrap();
    other.set_output(o).unwrap();
    assert!(batch_inputs(&other, &refs[1..]).unwrap_err().to_string().contains("pixels"));
}

fn gradient_check(pipeline: &str, trials: u64) {
    let corpus = small_corpus(40, 5);
    for t in 0..trials {
        let report = pipeline_gradcheck(pipeline, &corpus, t);
        assert!(report.passed(1e-4), "{pipeline} trial {t}: {report:?}");
    }
}

#[test]
fn cnn_nlp_gradients_match_finite_differences() {
    gradient_check("cnn_nlp", 50);
}

#[test]
fn cnn_pw_gradients_match_finite_differences() {
    gradient_check("cnn_pw", 50);
}

#[test]
fn pd_tl_gradients_match_finite_differences() {
    gradient_check("pd_tl", 50);
}

#[test]
fn config_text_round_trips_and_hash_tracks_content() {
    let cfg = PipelineConfig {
        dropout: 0.25,
        seed: 99,
        ..PipelineConfig::desk()
    };
    let back = PipelineConfig::parse(&cfg.to_text(), "test").unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_eq!(cfg.hash().len(), 16);
    assert_ne!(cfg.hash(), PipelineConfig::desk().hash());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pipeline.conf");
    cfg.save(&path).unwrap();
    assert_eq!(PipelineConfig::load(&path).unwrap(), cfg);

    let partial = PipelineConfig::parse("# widths\nfilters = 8\n\nepochs = 2\n", "test").unwrap();
    assert_eq!(partial.filters, 8);
    assert_eq!(partial.epochs, 2);
    assert_eq!(partial.embedding_dim, PipelineConfig::default().embedding_dim);
    assert!(PipelineConfig::parse("widht = 3\n", "test").is_err());
    assert!(PipelineConfig::parse("filters = many\n", "test").is_err());
    assert!(PipelineConfig::parse("dropout = 1.5\n", "test").is_err());
}

#[test]
fn pretraining_guards_size_and_class_balance() {
    let cfg = PipelineConfig {
        epochs: 1,
        ..PipelineConfig::desk()
    };
    let tags = TagSet::default();
    let small = generate_surrogate_corpus(3, 120).unwrap();
    let err = pretrain(&cfg, &small, &tags, false).unwrap_err();
    assert!(err.to_string().contains("allow_small"), "{err}");
    assert!(pretrain(&cfg, &small, &tags, true).is_ok());

    let positives: Vec<UserStory> = small
        .stories()
        .iter()
        .filter(|s| s.label.as_u8() == 1)
        .cloned()
        .collect();
    let one_class = Corpus::new(positives).unwrap();
    assert!(pretrain(&cfg, &one_class, &tags, true).is_err());
}

#[test]
fn pretraining_is_reproducible_and_checkpoints_round_trip() {
    let cfg = PipelineConfig {
        epochs: 3,
        seed: 17,
        ..PipelineConfig::desk()
    };
    let corpus = generate_surrogate_corpus(11, 240).unwrap();
    let tags = TagSet::default();
    let a = pretrain(&cfg, &corpus, &tags, false).unwrap();
    let b = pretrain(&cfg, &corpus, &tags, false).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(a.checkpoint_id(), b.checkpoint_id());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pre.ckpt");
    a.save(&path).unwrap();
    let back = Pretrained::load(&path).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.vocabs, a.vocabs);
    assert_eq!(back.corpus_hash, corpus.content_hash());
    assert_eq!(back.checkpoint_id(), a.checkpoint_id());
}

#[test]
fn pretraining_on_surrogate_corpus_generalizes() {
    let cfg = PipelineConfig::desk();
    let corpus = generate_surrogate_corpus(7, 2000).unwrap();
    let pre = pretrain(&cfg, &corpus, &TagSet::default(), false).unwrap();
    assert!(pre.heldout_accuracy > 0.85, "held-out accuracy {}", pre.heldout_accuracy);
}

fn untrained_source(cfg: &PipelineConfig) -> (Network, Vec<EncodedSample>) {
    let corpus = small_corpus(80, 6);
    let (vocabs, enc) = encode(&corpus, cfg);
    (build_cnn_nlp(cfg, &vocabs, aux_width()).unwrap(), enc)
}

#[test]
fn transfer_model_taps_pretrained_features_exactly() {
    let cfg = PipelineConfig::desk();
    let (mut source, enc) = untrained_source(&cfg);
    let (mut tl, extractor) = build_pd_tl_from(&source, "abc", &cfg, n_categories()).unwrap();
    assert_eq!(extractor.truncation_layer, NLP_FLATTEN);
    assert_eq!(extractor.output_width, 2 * cfg.filters);
    assert_eq!(extractor.source_checkpoint, "abc");
    assert_eq!(
        tl.node("tl_concat").unwrap().out_shape,
        vec![2 * cfg.filters + cfg.lexicon_width]
    );
    assert!(tl.node("aux_concat").is_none());
    assert!(tl.ports().iter().all(|p| p.name != AUX_PORT));

    let refs: Vec<&EncodedSample> = enc.iter().take(12).collect();
    source.set_mode(Mode::Infer);
    source.forward(&batch_inputs(&source, &refs).unwrap()).unwrap();
    let expected = source.activation(NLP_FLATTEN).unwrap().clone();
    tl.set_mode(Mode::Infer);
    tl.forward(&batch_inputs(&tl, &refs).unwrap()).unwrap();
    assert_eq!(tl.activation(NLP_FLATTEN).unwrap(), &expected);
}

#[test]
fn zeroed_lexicon_branch_leaves_pretrained_readout() {
    let cfg = PipelineConfig::desk();
    let (source, enc) = untrained_source(&cfg);
    let (mut tl, _) = build_pd_tl_from(&source, "abc", &cfg, n_categories()).unwrap();
    let c = n_categories();
    tl.set_param("pw_dense.weight", Tensor::zeros(&[cfg.lexicon_width, c])).unwrap();
    tl.set_param("pw_dense.bias", Tensor::zeros(&[cfg.lexicon_width])).unwrap();
    let refs: Vec<&EncodedSample> = enc.iter().take(10).collect();
    tl.set_mode(Mode::Infer);
    let out = tl.forward(&batch_inputs(&tl, &refs).unwrap()).unwrap();

    let feats = tl.activation(NLP_FLATTEN).unwrap().clone();
    let p = feats.row_len();
    let full = p + cfg.lexicon_width;
    let wh = tl.param("tl_hidden.weight").unwrap().data().to_vec();
    let bh = tl.param("tl_hidden.bias").unwrap().data().to_vec();
    let wo = tl.param("tl_output.weight").unwrap().data().to_vec();
    let bo = tl.param("tl_output.bias").unwrap().data()[0];
    for (b, &got) in out.data().iter().enumerate() {
        let x = feats.row(b);
        let hidden: Vec<f64> = (0..cfg.dense_width)
            .map(|o| {
                let z: f64 = (0..p).map(|i| wh[o * full + i] * x[i]).sum::<f64>() + bh[o];
                z.max(0.0)
            })
            .collect();
        let z: f64 = hidden.iter().zip(&wo).map(|(h, w)| h * w).sum::<f64>() + bo;
        let want = 1.0 / (1.0 + (-z).exp());
        assert!((got - want).abs() < 1e-12, "row {b}: {got} vs {want}");
    }
}

#[test]
fn fine_tuning_leaves_frozen_layers_bit_identical() {
    let cfg = PipelineConfig {
        epochs: 3,
        ..PipelineConfig::desk()
    };
    let (source, enc) = untrained_source(&cfg);
    let (mut tl, extractor) = build_pd_tl_from(&source, "abc", &cfg, n_categories()).unwrap();
    let frozen = ["tok_embedding", "tok_conv", "dep_embedding", "dep_conv"];
    assert_eq!(extractor.frozen_layers, frozen);
    let before: Vec<Vec<u64>> = frozen.iter().map(|l| bits(&tl, l)).collect();
    let head_before = bits(&tl, "tl_hidden");

    let refs: Vec<&EncodedSample> = enc.iter().collect();
    let targets: Vec<f64> = refs.iter().map(|s| f64::from(s.label)).collect();
    let data = dataset(&tl, &refs, &targets).unwrap();
    train(&mut tl, &data, &cfg.train_config(5)).unwrap();
    for (layer, want) in frozen.iter().zip(&before) {
        assert_eq!(&bits(&tl, layer), want, "{layer}");
        assert_eq!(bits(&tl, layer), bits(&source, layer), "{layer}");
    }
    assert_ne!(bits(&tl, "tl_hidden"), head_before);
}

#[test]
fn unfreeze_top_releases_layers_nearest_the_cut() {
    let cfg = PipelineConfig {
        unfreeze_top: 1,
        ..PipelineConfig::desk()
    };
    let (source, _) = untrained_source(&cfg);
    let (tl, extractor) = build_pd_tl_from(&source, "abc", &cfg, n_categories()).unwrap();
    assert_eq!(extractor.frozen_layers, ["tok_embedding", "tok_conv", "dep_embedding"]);
    assert_eq!(tl.frozen_layers(), extractor.frozen_layers);
}

#[test]
fn transfer_requires_a_truncation_point() {
    let cfg = PipelineConfig::desk();
    let pw = build_cnn_pw(&cfg, n_categories()).unwrap();
    let err = build_pd_tl_from(&pw, "x", &cfg, n_categories()).unwrap_err();
    assert!(err.to_string().contains(NLP_FLATTEN));
}
