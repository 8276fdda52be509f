//! Synthetic corpora with annotations.
//!
//! Both generators share one disclosure mechanism: a story or sentence
//! discloses when a first-person possessive directly precedes a sensitive
//! noun ("my salary"). Non-disclosing items carry the same words apart
//! ("my calendar ... the salary"), so the signal lives in word order.
//!
//! User stories additionally carry their privacy words in the feature verb,
//! drawn from a long-tailed set of inflected forms: dictionary stems cover
//! every form, while surface-token models only know the forms they have seen.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::split::largest_remainder;
use crate::corpus::{Corpus, Label, LinguisticAnnotation, StoryKind, UserStory};
use crate::error::{Error, Result};
use crate::lexicon::{annotate_corpus, PrivacyDictionary};
use crate::rng::{derive_seed, rng_from_seed};

pub const SENSITIVE_NOUNS: [&str; 40] = [
    "salary", "diagnosis", "address", "birthday", "medication", "religion", "income", "debts",
    "pregnancy", "therapy", "allergies", "passport", "ethnicity", "disability", "mortgage",
    "pension", "symptoms", "prescriptions", "paycheck", "biopsy", "insomnia", "divorce",
    "sexuality", "weight", "bloodtype", "vaccinations", "whereabouts", "savings", "loans",
    "diabetes", "depression", "anxiety", "arrests", "ancestry", "hometown", "phone", "birthplace",
    "addiction", "injuries", "surgery",
];

pub const NEUTRAL_NOUNS: [&str; 40] = [
    "dashboard", "calendar", "playlist", "homepage", "inbox", "settings", "workspace", "toolbar",
    "layout", "theme", "shortcuts", "bookmarks", "wallpaper", "notifications", "widgets",
    "filters", "tabs", "folders", "templates", "drafts", "comments", "icons", "fonts", "charts",
    "tasks", "tickets", "milestones", "backlog", "agenda", "recipes", "badges", "menus",
    "columns", "labels", "colors", "sidebar", "queue", "forms", "buttons", "banners",
];

/// Verbs whose every inflection matches a seed-dictionary stem.
pub const PRIVACY_VERBS: [&str; 24] = [
    "share", "access", "report", "display", "publish", "expose", "reveal", "broadcast",
    "disclose", "track", "monitor", "watch", "observe", "scan", "inspect", "protect", "restrict",
    "block", "encrypt", "lock", "secure", "mask", "guard", "limit",
];

/// Verbs with no dictionary match in any inflection.
pub const PLAIN_VERBS: [&str; 24] = [
    "edit", "update", "view", "sort", "filter", "rename", "archive", "print", "sync", "browse",
    "upload", "download", "tag", "bookmark", "search", "merge", "copy", "move", "pin", "star",
    "group", "label", "import", "highlight",
];

const REASON_VERBS: [&str; 12] = [
    "plan", "manage", "review", "compare", "organize", "remember", "finish", "check", "find",
    "fix", "improve", "follow",
];

const ROLES: [&[&str]; 16] = [
    &["site", "member"],
    &["UI", "designer"],
    &["shopper"],
    &["patient"],
    &["teacher"],
    &["student"],
    &["developer"],
    &["manager"],
    &["volunteer"],
    &["tenant"],
    &["nurse"],
    &["app", "user"],
    &["customer"],
    &["editor"],
    &["researcher"],
    &["subscriber"],
];

/// Second halves of rare compound verb forms ("sharelink", "editbox").
const COMPOUND_TAILS: [&str; 40] = [
    "link", "box", "hub", "flow", "kit", "board", "point", "spot", "desk", "zone", "pad", "base",
    "line", "page", "tab", "bar", "feed", "list", "map", "sheet", "stack", "grid", "mode", "pane",
    "wall", "dock", "deck", "tray", "tool", "log", "set", "note", "pod", "ring", "loop", "node",
    "ware", "cast", "bit", "mark",
];

const PLACES: [&str; 6] = ["app", "website", "system", "platform", "tool", "dashboard"];
const OTHER_DETS: [&str; 4] = ["the", "their", "our", "a"];
const SURROGATE_DETS: [&str; 6] = ["the", "their", "our", "a", "his", "her"];
const SURROGATE_VERBS: [&str; 8] = [
    "told", "showed", "sent", "emailed", "gave", "mentioned", "forwarded", "explained",
];
const SURROGATE_PEOPLE: [&str; 8] = [
    "doctor", "boss", "landlord", "coworker", "neighbor", "teacher", "cousin", "roommate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Base,
    Past,
    Gerund,
}

fn inflect(verb: &str, form: Form) -> String {
    let stem_e = verb.ends_with('e') && !verb.ends_with("ee");
    let doubled = matches!(verb, "scan" | "tag" | "pin" | "star" | "plan");
    match form {
        Form::Base => verb.to_string(),
        Form::Past => {
            if stem_e {
                format!("{verb}d")
            } else if doubled {
                format!("{verb}{}ed", &verb[verb.len() - 1..])
            } else if verb.ends_with('y') && !verb.ends_with("ay") {
                format!("{}ied", &verb[..verb.len() - 1])
            } else {
                format!("{verb}ed")
            }
        }
        Form::Gerund => {
            if stem_e {
                format!("{}ing", &verb[..verb.len() - 1])
            } else if doubled {
                format!("{verb}{}ing", &verb[verb.len() - 1..])
            } else {
                format!("{verb}ing")
            }
        }
    }
}

#[derive(Default)]
struct Sentence {
    tokens: Vec<String>,
    pos: Vec<String>,
    dep: Vec<String>,
    ents: Vec<String>,
    text: String,
}

impl Sentence {
    fn push(&mut self, token: &str, pos: &str, dep: &str, entity: Option<&str>) {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        self.text.push_str(token);
        self.tokens.push(token.to_string());
        self.pos.push(pos.to_string());
        self.dep.push(dep.to_string());
        self.ents.push(entity.unwrap_or(token).to_string());
    }

    fn comma(&mut self) {
        self.text.push(',');
    }

    fn noun_phrase(&mut self, det: &str, noun: &str, dep: &str) {
        let (pos, ddep) = match det {
            "my" => ("DET", "poss"),
            "their" | "our" | "his" | "her" => ("PRON", "poss"),
            _ => ("DET", "det"),
        };
        self.push(det, pos, ddep, None);
        self.push(noun, "NOUN", dep, None);
    }

    fn annotation(&self) -> Result<LinguisticAnnotation> {
        LinguisticAnnotation::new(
            self.tokens.clone(),
            self.pos.clone(),
            self.dep.clone(),
            self.ents.clone(),
        )
    }
}

/// Rank-based sampler with weights `1 / (rank + 1)^exponent`.
struct Zipf {
    dist: WeightedIndex<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let weights: Vec<f64> = (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(exponent)).collect();
        Zipf {
            dist: WeightedIndex::new(weights).expect("positive weights"),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        self.dist.sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoryGenConfig {
    pub n: usize,
    pub seed: u64,
    /// Relative frequency of `PW_AND_DI`, `PW_ONLY`, `DI_ONLY`, `NONE`.
    pub kind_weights: [usize; 4],
    /// Zipf exponent over verb stems.
    pub verb_exponent: f64,
    /// Zipf exponent over nouns.
    pub noun_exponent: f64,
    /// Share of feature verbs written as rare compounds; dictionary stems
    /// still match them but few surface forms repeat.
    pub rare_verb_rate: f64,
    pub datasets: u32,
}

impl Default for StoryGenConfig {
    fn default() -> Self {
        StoryGenConfig {
            n: 2000,
            seed: 2024,
            kind_weights: [30, 20, 20, 30],
            verb_exponent: 1.1,
            noun_exponent: 0.9,
            rare_verb_rate: 0.5,
            datasets: 4,
        }
    }
}

/// Synthetic annotated user stories with privacy words filled in from the
/// seed dictionary.
pub fn generate_stories(cfg: &StoryGenConfig) -> Result<Corpus> {
    if cfg.n == 0 {
        return Err(Error::Config("story count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.rare_verb_rate) {
        return Err(Error::Config("rare_verb_rate outside [0, 1]".into()));
    }
    if cfg.kind_weights.iter().sum::<usize>() == 0 || cfg.datasets == 0 {
        return Err(Error::Config("kind weights and dataset count must be positive".into()));
    }
    let counts = largest_remainder(cfg.n, &cfg.kind_weights);
    let mut kinds: Vec<StoryKind> = StoryKind::ALL
        .iter()
        .zip(&counts)
        .flat_map(|(&k, &c)| std::iter::repeat(k).take(c))
        .collect();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0));
    kinds.shuffle(&mut rng);

    let verbs = Zipf::new(PRIVACY_VERBS.len(), cfg.verb_exponent);
    let nouns = Zipf::new(SENSITIVE_NOUNS.len(), cfg.noun_exponent);
    let mut stories = Vec::with_capacity(cfg.n);
    for (i, kind) in kinds.into_iter().enumerate() {
        let pw = matches!(kind, StoryKind::PwAndDi | StoryKind::PwOnly);
        let di = matches!(kind, StoryKind::PwAndDi | StoryKind::DiOnly);
        let s = user_story(&mut rng, pw, di, cfg.rare_verb_rate, &verbs, &nouns);
        let label = if di { Label::Disclosure } else { Label::NonDisclosure };
        stories.push(UserStory::new(
            format!("us{i:05}"),
            1 + (i as u32 % cfg.datasets),
            format!("{}.", s.text),
            s.annotation()?,
            label,
            Vec::new(),
            Vec::new(),
        )?);
    }
    let mut corpus = Corpus::new(stories)?;
    annotate_corpus(&mut corpus, &PrivacyDictionary::seed());
    Ok(corpus)
}

fn user_story(
    rng: &mut ChaCha8Rng,
    pw: bool,
    di: bool,
    rare_rate: f64,
    verbs: &Zipf,
    nouns: &Zipf,
) -> Sentence {
    let mut s = Sentence::default();
    let role = ROLES[rng.gen_range(0..ROLES.len())];
    let article = if "aeiou".contains(role[0].chars().next().unwrap_or('x')) {
        "an"
    } else {
        "a"
    };
    s.push("As", "SCONJ", "prep", None);
    s.push(article, "DET", "det", None);
    for (k, w) in role.iter().enumerate() {
        let last = k + 1 == role.len();
        let pos = if w.chars().all(|c| c.is_ascii_uppercase()) { "PROPN" } else { "NOUN" };
        s.push(w, pos, if last { "pobj" } else { "compound" }, None);
    }
    s.comma();
    s.push("I", "PRON", "nsubj", Some("PERSON"));
    s.push("want", "VERB", "ROOT", None);
    s.push("to", "PART", "aux", None);

    let stem = if pw {
        PRIVACY_VERBS[verbs.sample(rng)]
    } else {
        PLAIN_VERBS[verbs.sample(rng)]
    };
    if rng.gen_bool(rare_rate) {
        let tail = COMPOUND_TAILS[rng.gen_range(0..COMPOUND_TAILS.len())];
        s.push(&format!("{stem}{tail}"), "VERB", "xcomp", None);
    } else {
        let form = [Form::Base, Form::Past, Form::Gerund][rng.gen_range(0..3)];
        match form {
            Form::Base => {}
            Form::Past => s.push("have", "AUX", "aux", None),
            Form::Gerund => s.push("keep", "VERB", "xcomp", None),
        }
        s.push(&inflect(stem, form), "VERB", "xcomp", None);
    }

    // Two noun phrases: one pairs "my" with a sensitive noun only when the
    // story discloses; otherwise "my" and the sensitive noun are split.
    let sensitive = SENSITIVE_NOUNS[nouns.sample(rng)];
    let neutral = NEUTRAL_NOUNS[nouns.sample(rng)];
    let other = OTHER_DETS[rng.gen_range(0..OTHER_DETS.len())];
    let mut slots = if di {
        [("my", sensitive), (other, neutral)]
    } else {
        [("my", neutral), (other, sensitive)]
    };
    if rng.gen_bool(0.5) {
        slots.swap(0, 1);
    }
    s.noun_phrase(slots[0].0, slots[0].1, "dobj");
    if rng.gen_bool(0.3) {
        s.push(["in", "on", "from"][rng.gen_range(0..3)], "ADP", "prep", None);
        s.push("the", "DET", "det", None);
        s.push(PLACES[rng.gen_range(0..PLACES.len())], "NOUN", "pobj", None);
    }
    s.comma();
    s.push("so", "SCONJ", "mark", None);
    s.push("that", "SCONJ", "mark", None);
    let subject = ["I", "we", "they"][rng.gen_range(0..3)];
    s.push(subject, "PRON", "nsubj", Some("PERSON"));
    s.push("can", "VERB", "aux", None);
    s.push(REASON_VERBS[rng.gen_range(0..REASON_VERBS.len())], "VERB", "advcl", None);
    s.noun_phrase(slots[1].0, slots[1].1, "dobj");
    s
}

/// Balanced disclosure / non-disclosure sentences for pretraining.
///
/// Positives contain "my <sensitive noun>". A quarter of the negatives are
/// hard: they contain "my" and a sensitive noun in separate phrases; the rest
/// lack at least one of the two.
pub fn generate_surrogate_corpus(seed: u64, n: usize) -> Result<Corpus> {
    if n < 2 {
        return Err(Error::Config("surrogate corpus needs at least 2 sentences".into()));
    }
    let n_pos = n / 2;
    let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    labels.shuffle(&mut rng);
    let mut stories = Vec::with_capacity(n);
    for (i, positive) in labels.into_iter().enumerate() {
        let s = surrogate_sentence(&mut rng, positive);
        let label = if positive { Label::Disclosure } else { Label::NonDisclosure };
        stories.push(UserStory::new(
            format!("sg{i:05}"),
            0,
            format!("{}.", s.text),
            s.annotation()?,
            label,
            Vec::new(),
            Vec::new(),
        )?);
    }
    let mut corpus = Corpus::new(stories)?;
    annotate_corpus(&mut corpus, &PrivacyDictionary::seed());
    Ok(corpus)
}

fn surrogate_sentence(rng: &mut ChaCha8Rng, positive: bool) -> Sentence {
    fn pick(rng: &mut ChaCha8Rng, list: &[&'static str]) -> &'static str {
        list[rng.gen_range(0..list.len())]
    }
    let sens = pick(rng, &SENSITIVE_NOUNS);
    let neutral = if rng.gen_bool(0.5) {
        pick(rng, &NEUTRAL_NOUNS)
    } else {
        pick(rng, &SURROGATE_PEOPLE)
    };
    let det = pick(rng, &SURROGATE_DETS);
    let det2 = pick(rng, &SURROGATE_DETS);
    let neutral2 = pick(rng, &NEUTRAL_NOUNS);
    let verb = pick(rng, &SURROGATE_VERBS);
    let prep = pick(rng, &["to", "about", "with"]);
    let opener = pick(rng, &["", "Yesterday", "So", "Honestly"]);
    let tail = pick(rng, &["", "today", "again", "online"]);
    let choice = rng.gen_range(0..4);

    let slots = if positive {
        [("my", sens), (det, neutral)]
    } else {
        match choice {
            0 => [("my", neutral), (det, sens)],
            1 => [(det, neutral), (det2, neutral2)],
            2 => [("my", neutral), (det2, neutral2)],
            _ => [(det, sens), (det2, neutral2)],
        }
    };
    let slots = if rng.gen_bool(0.5) { [slots[1], slots[0]] } else { slots };

    let mut s = Sentence::default();
    if !opener.is_empty() {
        s.push(opener, "ADV", "advmod", None);
    }
    s.push("I", "PRON", "nsubj", Some("PERSON"));
    s.push(verb, "VERB", "ROOT", None);
    s.noun_phrase(slots[0].0, slots[0].1, "dobj");
    s.push(prep, "ADP", "prep", None);
    s.noun_phrase(slots[1].0, slots[1].1, "pobj");
    if !tail.is_empty() {
        s.push(tail, "ADV", "advmod", None);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inflections() {
        assert_eq!(inflect("share", Form::Past), "shared");
        assert_eq!(inflect("share", Form::Gerund), "sharing");
        assert_eq!(inflect("scan", Form::Gerund), "scanning");
        assert_eq!(inflect("copy", Form::Past), "copied");
        assert_eq!(inflect("edit", Form::Past), "edited");
    }

    #[test]
    fn word_lists_respect_the_dictionary() {
        let dict = PrivacyDictionary::seed();
        for v in PRIVACY_VERBS {
            for f in [Form::Base, Form::Past, Form::Gerund] {
                let w = inflect(v, f);
                assert!(!dict.categories_of(&w).is_empty(), "{w} should match");
            }
        }
        for v in PRIVACY_VERBS {
            for t in COMPOUND_TAILS {
                assert!(!dict.categories_of(&format!("{v}{t}")).is_empty());
            }
        }
        let plain = PLAIN_VERBS
            .iter()
            .flat_map(|v| [Form::Base, Form::Past, Form::Gerund].map(|f| inflect(v, f)))
            .chain(PLAIN_VERBS.iter().flat_map(|v| COMPOUND_TAILS.map(|t| format!("{v}{t}"))));
        let fixed = SENSITIVE_NOUNS
            .iter()
            .chain(&NEUTRAL_NOUNS)
            .chain(&REASON_VERBS)
            .chain(&PLACES)
            .chain(&SURROGATE_VERBS)
            .chain(&SURROGATE_PEOPLE)
            .chain(&OTHER_DETS)
            .chain(&SURROGATE_DETS)
            .map(|s| s.to_string());
        let roles = ROLES.iter().flat_map(|r| r.iter().map(|s| s.to_lowercase()));
        let glue = [
            "as", "a", "an", "i", "want", "to", "have", "keep", "in", "on", "from", "so", "that",
            "we", "they", "can", "my", "about", "with", "yesterday", "honestly", "today", "again",
            "online",
        ]
        .map(String::from);
        for w in plain.chain(fixed).chain(roles).chain(glue) {
            assert!(dict.categories_of(&w).is_empty(), "{w} must not match");
        }
    }
}
