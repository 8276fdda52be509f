use std::collections::HashSet;
use std::path::Path;

use privstory::corpus::io::{load_corpus, CorpusFormat};
use privstory::corpus::split::{plan_balanced_split, SplitOptions};
use privstory::corpus::{Corpus, LinguisticAnnotation, TagSet};
use privstory::encode::*;
use privstory::lexicon::PrivacyDictionary;
use privstory::synth::{generate_stories, StoryGenConfig};
use proptest::prelude::*;

fn fixture(name: &str) -> Corpus {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    load_corpus(&path, CorpusFormat::Jsonl).unwrap()
}

#[test]
fn dependency_sequence_of_the_example_story() {
    let corpus = fixture("example_story.jsonl");
    let tags = TagSet::default();
    let stories: Vec<_> = corpus.stories().iter().collect();
    let vocab = build_vocab(&stories, VocabKind::Dep, 1, &tags).unwrap();
    // pobj/prep (4 each) lead, then the frequency-2 tags, then singletons,
    // with byte order breaking ties.
    let expected_order = [
        "pobj", "prep", "aux", "compound", "det", "mark", "nsubj", "ROOT", "advcl", "amod",
        "dobj", "poss", "xcomp",
    ];
    assert_eq!(vocab.symbols(), expected_order);
    let ids = encode_sequence(&vocab, &stories[0].annotation.dep_tags, 30);
    let mut expected = vec![
        3, 6, 5, 2, 8, 9, 4, 14, 3, 6, 5, 2, 3, 11, 2, 7, 7, 8, 4, 10, 13, 12, 3, 2,
    ];
    expected.extend([PAD_ID; 6]);
    assert_eq!(ids, expected);
}

#[test]
fn pos_histogram_of_the_example_story() {
    let corpus = fixture("example_story.jsonl");
    let tags = TagSet::default();
    let aux = aux_vector(&corpus.stories()[0].annotation, &tags);
    assert_eq!(aux.len(), tags.pos().len() + tags.entity().len());
    assert!((aux[tags.pos_index("NOUN")] - 5.0 / 24.0).abs() < 1e-12);
    let pos_sum: f64 = aux[..tags.pos().len()].iter().sum();
    assert!((pos_sum - 1.0).abs() < 1e-9);
}

#[test]
fn histogram_edge_cases() {
    let tags = TagSet::default();
    let a = LinguisticAnnotation::new(
        vec!["run".into()],
        vec!["VERB".into()],
        vec!["ROOT".into()],
        vec!["run".into()],
    )
    .unwrap();
    let aux = aux_vector(&a, &tags);
    let npos = tags.pos().len();
    assert_eq!(aux[tags.pos_index("VERB")], 1.0);
    assert_eq!(aux[..npos].iter().filter(|&&v| v != 0.0).count(), 1);
    assert!(aux[npos..].iter().all(|&v| v == 0.0));
}

#[test]
fn vocabulary_threshold_and_determinism() {
    let corpus = fixture("annotated_story.jsonl");
    let tags = TagSet::default();
    let stories: Vec<_> = corpus.stories().iter().collect();
    let a = build_vocab(&stories, VocabKind::Token, 2, &tags).unwrap();
    let b = build_vocab(&stories, VocabKind::Token, 2, &tags).unwrap();
    assert_eq!(a, b);
    // "deletions" occurs once, so it falls below the threshold.
    assert_eq!(a.id("deletions"), OOV_ID);
    assert!(a.id("want") >= 2);
    assert!(a.contains("PERSON"));
    assert!(build_vocab(&[], VocabKind::Token, 1, &tags).is_err());
}

#[test]
fn encoding_the_dataset_table() {
    let corpus = fixture("annotated_story.jsonl");
    let tags = TagSet::default();
    let stories: Vec<_> = corpus.stories().iter().collect();
    let vocabs = Vocabs::build(&stories, 1, &tags).unwrap();
    let dict = PrivacyDictionary::seed();
    let samples = encode_corpus(&stories, &vocabs, &dict, DEFAULT_SEQ_LEN, &tags).unwrap();
    assert_eq!(samples.len(), 4);
    assert_eq!(samples.iter().map(|s| s.label).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
    for s in &samples {
        assert_eq!(s.token_ids.len(), 30);
        assert_eq!(s.dep_ids.len(), 30);
        assert_eq!(s.lexicon.len(), dict.len());
    }
    assert!(encode_corpus(&[], &vocabs, &dict, 30, &tags).unwrap().is_empty());

    let mut open = vocabs.clone();
    open.token = Vocabulary::new(VocabKind::Token, 1);
    assert!(encode_corpus(&stories, &open, &dict, 30, &tags).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.bin");
    write_cache(&path, &samples).unwrap();
    assert_eq!(read_cache(&path).unwrap(), samples);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(read_cache(&path).is_err());
}

#[test]
fn vocabulary_file_round_trip() {
    let corpus = fixture("annotated_story.jsonl");
    let tags = TagSet::default();
    let stories: Vec<_> = corpus.stories().iter().collect();
    let v = build_vocab(&stories, VocabKind::Token, 1, &tags).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tok.tsv");
    v.save(&path).unwrap();
    assert_eq!(Vocabulary::load(&path).unwrap(), v);
}

#[test]
fn train_fold_vocabularies_never_see_test_only_symbols() {
    let corpus = generate_stories(&StoryGenConfig {
        n: 300,
        ..StoryGenConfig::default()
    })
    .unwrap();
    let tags = TagSet::default();
    let plan = plan_balanced_split(&corpus, 3, 2, 5, &SplitOptions::default()).unwrap();
    for (_, _, fold) in plan.cells() {
        let train = corpus.select(&fold.train).unwrap();
        let vocab = build_vocab(&train, VocabKind::Token, 1, &tags).unwrap();
        let seen: HashSet<String> = train
            .iter()
            .flat_map(|s| lexical_stream(&s.annotation, &tags))
            .collect();
        assert!(vocab.symbols().iter().all(|s| seen.contains(s)));
    }
}

proptest! {
    #[test]
    fn padding_is_idempotent(syms in prop::collection::vec("[a-c]{1,2}", 0..12), len in 12usize..20) {
        let mut v = Vocabulary::new(VocabKind::Token, 1);
        for s in ["a", "b", "ab"] { v.add(s).unwrap(); }
        v.freeze();
        let ids = encode_sequence(&v, &syms, len);
        let mut padded: Vec<String> = syms.clone();
        padded.resize(len, PAD_SYMBOL.to_string());
        prop_assert_eq!(encode_sequence(&v, &padded, len), ids);
    }

    #[test]
    fn histograms_are_normalized(
        pos in prop::collection::vec(0usize..18, 1..30),
        ent in prop::collection::vec(prop::option::of(0usize..19), 1..30),
    ) {
        let tags = TagSet::default();
        let n = pos.len().min(ent.len());
        let a = LinguisticAnnotation::new(
            vec!["w".to_string(); n],
            pos[..n].iter().map(|&i| tags.pos()[i].clone()).collect(),
            vec!["dep".to_string(); n],
            ent[..n].iter().map(|e| e.map_or("w".to_string(), |i| tags.entity()[i].clone())).collect(),
        ).unwrap();
        let aux = aux_vector(&a, &tags);
        let np = tags.pos().len();
        prop_assert!(aux.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((aux[..np].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let es: f64 = aux[np..].iter().sum();
        if ent[..n].iter().any(Option::is_some) {
            prop_assert!((es - 1.0).abs() < 1e-9);
        } else {
            prop_assert_eq!(es, 0.0);
        }
    }
}
