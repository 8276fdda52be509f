use privstory::corpus::{StoryKind, TagSet, UserStory};
use privstory::encode::Vocabs;
use privstory::shallow::{fit, vectorize_nlp, FeatureMatrix, ShallowParams, Variant};
use privstory::synth::*;

#[test]
fn surrogate_corpus_is_balanced() {
    let c = generate_surrogate_corpus(7, 10).unwrap();
    let pos = c.stories().iter().filter(|s| s.label.as_u8() == 1).count();
    assert_eq!((pos, c.len() - pos), (5, 5));
    assert!(generate_surrogate_corpus(7, 1).is_err());
}

#[test]
fn generators_are_deterministic_per_seed() {
    assert_eq!(generate_surrogate_corpus(3, 50).unwrap(), generate_surrogate_corpus(3, 50).unwrap());
    assert_ne!(
        generate_surrogate_corpus(3, 50).unwrap().content_hash(),
        generate_surrogate_corpus(4, 50).unwrap().content_hash()
    );
    let cfg = StoryGenConfig {
        n: 80,
        ..StoryGenConfig::default()
    };
    assert_eq!(generate_stories(&cfg).unwrap(), generate_stories(&cfg).unwrap());
}

#[test]
fn story_kinds_follow_configured_weights() {
    let c = generate_stories(&StoryGenConfig::default()).unwrap();
    let count = |k: StoryKind| c.stories().iter().filter(|s| s.kind() == k).count();
    assert_eq!(count(StoryKind::PwAndDi), 600);
    assert_eq!(count(StoryKind::PwOnly), 400);
    assert_eq!(count(StoryKind::DiOnly), 400);
    assert_eq!(count(StoryKind::None), 600);
    for s in c.stories() {
        assert!(s.role().is_some() && s.feature().is_some(), "{}", s.text);
        assert!((1..=4).contains(&s.dataset_id));
    }
}

#[test]
fn generator_rejects_bad_settings() {
    let bad = |cfg: StoryGenConfig| generate_stories(&cfg).is_err();
    assert!(bad(StoryGenConfig { n: 0, ..Default::default() }));
    assert!(bad(StoryGenConfig { rare_verb_rate: 1.5, ..Default::default() }));
    assert!(bad(StoryGenConfig { kind_weights: [0; 4], ..Default::default() }));
    assert!(bad(StoryGenConfig { datasets: 0, ..Default::default() }));
}

#[test]
fn bag_of_words_separates_surrogate_disclosures() {
    let c = generate_surrogate_corpus(7, 2000).unwrap();
    let tags = TagSet::default();
    let (train, test) = c.stories().split_at(1600);
    let train_refs: Vec<&UserStory> = train.iter().collect();
    let vocabs = Vocabs::build(&train_refs, 1, &tags).unwrap();
    let matrix = |s: &[UserStory]| {
        let rows: Vec<Vec<f64>> = s.iter().map(|s| vectorize_nlp(&s.annotation, &vocabs, &tags)).collect();
        let y: Vec<u8> = s.iter().map(|s| s.label.as_u8()).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    };
    let (x, y) = matrix(train);
    let (xt, yt) = matrix(test);
    let m = fit(Variant::Lr, &x, &y, &ShallowParams::default(), 0).unwrap();
    let p = m.predict_matrix(&xt).unwrap();
    let acc = p.iter().zip(&yt).filter(|(p, &y)| p.label == y).count() as f64 / yt.len() as f64;
    assert!(acc > 0.8, "held-out accuracy {acc}");
}
