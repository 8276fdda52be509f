use std::path::Path;

use privstory::lexicon::*;
use proptest::prelude::*;

const EXAMPLE_STORY: &str = "As a site member I want to access to the Facebook profiles of other members so that I can share my experiences with them";

fn brute_force(dict: &PrivacyDictionary, tokens: &[String]) -> (Vec<u32>, Vec<(String, String)>) {
    let mut counts = vec![0; dict.len()];
    let mut words = Vec::new();
    for t in tokens {
        let lower = t.to_lowercase();
        for (ci, cat) in dict.categories().iter().enumerate() {
            let hit = cat.patterns.iter().any(|p| {
                if p.wildcard {
                    lower.starts_with(&p.stem)
                } else {
                    lower == p.stem
                }
            });
            if hit {
                counts[ci] += 1;
                words.push((lower.clone(), cat.name.clone()));
            }
        }
    }
    (counts, words)
}

fn tiny() -> PrivacyDictionary {
    PrivacyDictionary::parse(
        "@version t1\n[OpenVisible] open access\naccess\nshare\n[Secret] hidden\nsecret*\nshare\n",
        "tiny",
    )
    .unwrap()
}

#[test]
fn bundled_seed_file_loads_eight_categories() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/seed_dictionary.txt");
    let dict = PrivacyDictionary::load(&path).unwrap();
    assert_eq!(dict.len(), 8);
    assert_eq!(dict.version(), "seed-1.0");
    assert_eq!(dict, PrivacyDictionary::seed());
    let patterns: usize = dict.categories().iter().map(|c| c.patterns.len()).sum();
    assert!((100..=160).contains(&patterns), "{patterns} patterns");
}

#[test]
fn dictionary_file_errors() {
    let err = |text: &str| PrivacyDictionary::parse(text, "d").unwrap_err().to_string();
    assert!(err("").contains("no categories"));
    assert!(err("[A] x\nfoo\n[A] y\nbar\n").contains("duplicate category"));
    assert!(err("[A] x\nfoo\nfoo\n").contains("duplicate pattern"));
    assert!(err("[A] x\n[B] y\nbar\n").contains("empty category"));
    assert!(err("A] x\nfoo\n").contains("before any category"));
    assert!(err("[A x\nfoo\n").contains("section header"));
}

#[test]
fn example_story_matches_two_open_visible_words() {
    let tokens: Vec<&str> = EXAMPLE_STORY.split(' ').collect();
    assert_eq!(tokens.len(), 24);
    let f = tiny().match_story(&tokens);
    assert_eq!(
        f.matched_words,
        [
            ("access".to_string(), "OpenVisible".to_string()),
            ("share".to_string(), "OpenVisible".to_string()),
            ("share".to_string(), "Secret".to_string()),
        ]
    );
    assert_eq!(f.category_counts, [2, 1]);
    assert_eq!(f.category_fractions[0], 2.0 / 24.0);
    assert!((f.category_fractions[0] - 0.08333).abs() < 1e-5);
    assert_eq!(f.feature_vector(true), vec![2.0 / 24.0, 1.0 / 24.0, 3.0 / 24.0]);
    assert_eq!(f.feature_vector(false).len(), 2);
}

#[test]
fn unmatched_tokens_give_zero_vector() {
    let f = tiny().match_story(&["plain", "words"]);
    assert!(f.matched_words.is_empty());
    assert!(f.feature_vector(true).iter().all(|&v| v == 0.0));
    assert!(tiny().match_story(&["SECRETS"]).category_counts[1] == 1);
}

fn token_strategy() -> impl Strategy<Value = String> {
    let dict = PrivacyDictionary::seed();
    let stems: Vec<String> = dict
        .categories()
        .iter()
        .flat_map(|c| c.patterns.iter().map(|p| p.stem.clone()))
        .collect();
    prop_oneof![
        prop::sample::select(stems.clone()),
        (prop::sample::select(stems), "[a-z]{1,4}").prop_map(|(s, t)| s + &t),
        (prop::sample::select(vec!["a", "pre", "x"]), prop::sample::select(vec!["share", "data", "law"]))
            .prop_map(|(a, b)| format!("{a}{b}")),
        "[a-zA-Z]{1,9}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matching_equals_brute_force(tokens in prop::collection::vec(token_strategy(), 1..40)) {
        let dict = PrivacyDictionary::seed();
        let f = dict.match_story(&tokens);
        let (counts, words) = brute_force(&dict, &tokens);
        prop_assert_eq!(&f.category_counts, &counts);
        let mut got = f.matched_words.clone();
        let mut want = words;
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
        for (c, fr) in f.category_counts.iter().zip(&f.category_fractions) {
            prop_assert_eq!(*fr, f64::from(*c) / tokens.len() as f64);
        }
    }
}

proptest! {
    #[test]
    fn duplicating_tokens_doubles_counts_not_fractions(tokens in prop::collection::vec(token_strategy(), 1..30)) {
        let dict = PrivacyDictionary::seed();
        let once = dict.match_story(&tokens);
        let doubled: Vec<String> = tokens.iter().chain(&tokens).cloned().collect();
        let twice = dict.match_story(&doubled);
        for (a, b) in once.category_counts.iter().zip(&twice.category_counts) {
            prop_assert_eq!(2 * a, *b);
        }
        for (a, b) in once.category_fractions.iter().zip(&twice.category_fractions) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adding_a_token_only_raises_its_categories(
        tokens in prop::collection::vec(token_strategy(), 1..30),
        extra in token_strategy(),
    ) {
        let dict = PrivacyDictionary::seed();
        let before = dict.match_story(&tokens).category_counts;
        let mut more = tokens.clone();
        more.push(extra.clone());
        let after = dict.match_story(&more).category_counts;
        let hits = dict.categories_of(&extra);
        for c in 0..dict.len() {
            let expect = before[c] + u32::from(hits.contains(&c));
            prop_assert_eq!(after[c], expect);
        }
    }
}

#[test]
fn text_form_round_trips() {
    let dict = PrivacyDictionary::seed();
    assert_eq!(PrivacyDictionary::parse(&dict.to_text(), "again").unwrap(), dict);
}
