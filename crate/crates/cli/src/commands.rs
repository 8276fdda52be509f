use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use privstory::corpus::{
    corpus_stats, load_corpus, load_manifest, plan_balanced_split, save_corpus, Corpus,
    CorpusFormat, SplitOptions, TagSet, UserStory,
};
use privstory::encode::{encode_corpus, write_cache, Vocabs};
use privstory::eval::{
    compare, default_comparisons, read_comparisons, read_runs, read_summaries, render_report, run_protocol,
    summarize, write_comparison, write_runs, write_summary, ModelSpec, ProtocolContext, TrainedModel,
};
use privstory::lexicon::{annotate_corpus, tokenize, PrivacyDictionary};
use privstory::pipelines::{build_pd_tl, pretrain, PipelineConfig, Pretrained};
use privstory::rng::derive_seed;
use privstory::shallow::{nlp_feature_names, vectorize_nlp, vectorize_sequence, NlpRepr};
use privstory::synth::{generate_stories, generate_surrogate_corpus, StoryGenConfig};
use privstory::Error;

use crate::*;

// Plain `print!` panics when stdout is a closed pipe.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_RUN: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_DATA: u8 = 4;

/// Size of the surrogate corpus generated when pd_tl runs without a checkpoint.
const SURROGATE_SIZE: usize = 2000;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Config(_) | Error::Checkpoint(_) => EXIT_CONFIG,
        Error::Data { .. } | Error::Empty(_) | Error::InsufficientNegatives { .. } | Error::Shape { .. } => EXIT_DATA,
        Error::Training(_) => EXIT_RUN,
        Error::Network(_) => EXIT_INTERNAL,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_of(&e),
            message: e.to_string(),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// Attaches the offending flag to an error.
fn flag<T>(name: &str, r: privstory::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure {
        code: code_of(&e),
        message: format!("--{name}: {e}"),
    })
}

fn write_text(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Dict(DictCommand::Inspect(d)) => {
            out!("{}", dictionary_table(&load_dict(&d)?));
            Ok(())
        }
        Command::Dict(DictCommand::Export { dict, out }) => write_text(&out, &load_dict(&dict)?.to_text()),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Transfer(a) => transfer(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Mcnemar(a) => mcnemar(a),
        Command::Predict(a) => predict(a),
        Command::Report(a) => report(a),
        Command::GenSurrogate(a) => {
            let c = generate_surrogate_corpus(a.seed, a.n)?;
            Ok(save_corpus(&c, &a.out, CorpusFormat::from_path(&a.out))?)
        }
        Command::GenStories(a) => {
            let c = generate_stories(&StoryGenConfig {
                n: a.gen.n,
                seed: a.gen.seed,
                rare_verb_rate: a.rare_verb_rate,
                ..StoryGenConfig::default()
            })?;
            Ok(save_corpus(&c, &a.gen.out, CorpusFormat::from_path(&a.gen.out))?)
        }
    }
}

fn load_dict(d: &DictArgs) -> Outcome<PrivacyDictionary> {
    match &d.dictionary {
        None => Ok(PrivacyDictionary::seed()),
        Some(p) => flag("dictionary", PrivacyDictionary::load(p)),
    }
}

fn load(c: &CorpusArgs) -> Outcome<(Corpus, PrivacyDictionary)> {
    let dict = load_dict(&c.dict)?;
    let format = match c.format {
        FormatArg::Auto => CorpusFormat::from_path(&c.corpus),
        FormatArg::Jsonl => CorpusFormat::Jsonl,
        FormatArg::Csv => CorpusFormat::Csv,
    };
    let mut corpus = flag("corpus", load_corpus(&c.corpus, format))?;
    if let Some(m) = &c.manifest {
        let manifest = flag("manifest", load_manifest(m))?;
        corpus = flag("manifest", corpus.with_manifest(manifest))?;
    }
    if c.annotate_privacy {
        annotate_corpus(&mut corpus, &dict);
    }
    Ok((corpus, dict))
}

fn pipeline(protocol: ProtocolArg, file: &Option<std::path::PathBuf>) -> Outcome<PipelineConfig> {
    match file {
        Some(p) => flag("pipeline-config", PipelineConfig::load(p)),
        None => Ok(match protocol {
            ProtocolArg::Desk => PipelineConfig::desk(),
            ProtocolArg::Paper => PipelineConfig::default(),
        }),
    }
}

fn repr(r: ReprArg) -> NlpRepr {
    match r {
        ReprArg::Bag => NlpRepr::Bag,
        ReprArg::Sequence => NlpRepr::Sequence,
    }
}

fn parse_model(id: &str) -> Outcome<ModelSpec> {
    flag("model", id.parse())
}

fn dictionary_table(dict: &PrivacyDictionary) -> String {
    let mut s = format!("Dictionary {}\n\n", dict.version());
    let _ = writeln!(s, "{:<16} {:>8}  {:<44} Sample patterns", "Category", "Patterns", "Description");
    for c in dict.categories() {
        let samples: Vec<String> = c.patterns.iter().take(3).map(|p| p.to_string()).collect();
        let _ = writeln!(
            s,
            "{:<16} {:>8}  {:<44} {}",
            c.name,
            c.patterns.len(),
            c.description,
            samples.join(", ")
        );
    }
    s
}

fn ingest(a: IngestArgs) -> Outcome {
    let (corpus, _) = load(&a.corpus)?;
    outln!("{} stories", corpus.len());
    outln!(
        "{:<8} {:<28} {:>6} {:>8} {:>8} {:>8} {:>8} {:>6}",
        "Dataset", "Description", "Size", "PW&DI", "PW", "DI", "None", "Terms"
    );
    for d in corpus_stats(&corpus)? {
        outln!(
            "{:<8} {:<28} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>6}",
            d.dataset_id,
            d.description.as_deref().unwrap_or("-"),
            d.size,
            d.frac_pw_and_di,
            d.frac_pw,
            d.frac_di,
            d.frac_none,
            d.privacy_term_count
        );
    }
    if let Some(out) = &a.out {
        save_corpus(&corpus, out, CorpusFormat::from_path(out))?;
    }
    Ok(())
}

fn csv_rows(header: &[String], rows: impl Iterator<Item = (String, u8, Vec<f64>)>) -> Outcome<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| Failure {
        code: EXIT_INTERNAL,
        message: format!("csv: {e}"),
    };
    let mut head = vec!["id".to_string(), "target".to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head).map_err(bad)?;
    for (id, t, row) in rows {
        let mut rec = vec![id, t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(bad)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: EXIT_INTERNAL,
        message: format!("csv: {e}"),
    })?;
    Ok(String::from_utf8(bytes).expect("utf-8 input"))
}

fn featurize(a: FeaturizeArgs) -> Outcome {
    let (corpus, dict) = load(&a.corpus)?;
    let tags = TagSet::default();
    let stories: Vec<&UserStory> = corpus.stories().iter().collect();
    let target = |s: &UserStory| privstory::eval::target(s);
    match a.features {
        FeatureKind::Pw => {
            let names: Vec<String> = dict.category_names().iter().map(|n| n.to_string()).collect();
            let rows = stories.iter().map(|s| {
                let v = dict.match_story(&s.annotation.tokens).feature_vector(false);
                (s.id.clone(), target(s), v)
            });
            write_text(&a.out, &csv_rows(&names, rows)?)
        }
        FeatureKind::Nlp => {
            let vocabs = Vocabs::build(&stories, a.min_count, &tags)?;
            match repr(a.nlp_shallow_repr) {
                NlpRepr::Bag => {
                    let names = nlp_feature_names(&vocabs, &tags);
                    let rows = stories
                        .iter()
                        .map(|s| (s.id.clone(), target(s), vectorize_nlp(&s.annotation, &vocabs, &tags)));
                    write_text(&a.out, &csv_rows(&names, rows)?)
                }
                NlpRepr::Sequence => {
                    let enc = encode_corpus(&stories, &vocabs, &dict, a.seq_len, &tags)?;
                    let names: Vec<String> = (0..a.seq_len)
                        .map(|i| format!("tok{i}"))
                        .chain((0..a.seq_len).map(|i| format!("dep{i}")))
                        .collect();
                    let rows = stories
                        .iter()
                        .zip(&enc)
                        .map(|(s, e)| (s.id.clone(), target(s), vectorize_sequence(e)));
                    write_text(&a.out, &csv_rows(&names, rows)?)
                }
            }
        }
        FeatureKind::Encoded => {
            let vocabs = Vocabs::build(&stories, a.min_count, &tags)?;
            let enc = encode_corpus(&stories, &vocabs, &dict, a.seq_len, &tags)?;
            Ok(write_cache(&a.out, &enc)?)
        }
    }
}

fn context(dict: PrivacyDictionary, m: &ModelArgs) -> Outcome<ProtocolContext> {
    let mut cfg = pipeline(m.protocol, &m.pipeline_config)?;
    if let Some(u) = m.unfreeze_top {
        cfg.unfreeze_top = u;
    }
    flag("pipeline-config", cfg.validate())?;
    let mut ctx = ProtocolContext::new(dict, cfg, m.seed);
    ctx.nlp_repr = repr(m.nlp_shallow_repr);
    if let Some(p) = &m.pretrained {
        ctx.pretrained = Some(flag("pretrained", Pretrained::load(p))?);
    }
    Ok(ctx)
}

/// Pretrains on a generated surrogate corpus when pd_tl has no checkpoint.
fn ensure_pretrained(ctx: &mut ProtocolContext, save_to: Option<&Path>) -> Outcome {
    if ctx.pretrained.is_some() {
        return Ok(());
    }
    let cfg = PipelineConfig {
        seed: ctx.seed,
        ..ctx.pipeline.clone()
    };
    let surrogate = generate_surrogate_corpus(derive_seed(ctx.seed, 0x5355), SURROGATE_SIZE)?;
    eprintln!("pretraining on {SURROGATE_SIZE} surrogate stories");
    let pre = pretrain(&cfg, &surrogate, &ctx.tags, false)?;
    eprintln!("pretrained held-out accuracy {:.3}", pre.heldout_accuracy);
    if let Some(p) = save_to {
        pre.save(p)?;
    }
    ctx.pretrained = Some(pre);
    Ok(())
}

/// All positives and an equal number of negatives, as the protocol samples them.
fn balanced_pool<'a>(corpus: &'a Corpus, seed: u64) -> Outcome<Vec<&'a UserStory>> {
    let plan = plan_balanced_split(corpus, seed, 1, 2, &SplitOptions::default())?;
    let fold = plan.fold(0, 0);
    let mut ids = fold.train.clone();
    ids.extend(fold.test.iter().cloned());
    ids.sort();
    Ok(corpus.select(&ids)?)
}

fn train(a: TrainArgs) -> Outcome {
    let spec = parse_model(&a.model)?;
    let (corpus, dict) = load(&a.corpus)?;
    let mut ctx = context(dict, &a.model_args)?;
    if spec == ModelSpec::PdTl {
        ensure_pretrained(&mut ctx, None)?;
    }
    let pool = balanced_pool(&corpus, ctx.seed)?;
    let model = TrainedModel::fit(spec, &ctx, &pool, derive_seed(ctx.seed, 1))?;
    model.save(&a.out)?;
    outln!("trained {} on {} stories -> {}", spec, pool.len(), a.out.display());
    Ok(())
}

fn pretrain_cmd(a: PretrainArgs) -> Outcome {
    let mut cfg = pipeline(a.protocol, &a.pipeline_config)?;
    cfg.seed = a.seed;
    let corpus = match (&a.corpus, a.surrogate) {
        (Some(p), None) => flag("corpus", load_corpus(p, CorpusFormat::from_path(p)))?,
        (None, Some(n)) => generate_surrogate_corpus(a.seed, n)?,
        _ => return Err(Failure::usage("pass exactly one of --corpus or --surrogate")),
    };
    let pre = pretrain(&cfg, &corpus, &TagSet::default(), a.allow_small)?;
    pre.save(&a.out)?;
    outln!("samples            {}", corpus.len());
    outln!("held-out accuracy  {:.4}", pre.heldout_accuracy);
    outln!("checkpoint         {}", pre.checkpoint_id());
    Ok(())
}

fn transfer(a: TransferArgs) -> Outcome {
    let (corpus, dict) = load(&a.corpus)?;
    let margs = ModelArgs {
        protocol: a.protocol,
        pipeline_config: a.pipeline_config,
        nlp_shallow_repr: ReprArg::Bag,
        pretrained: Some(a.pretrained),
        unfreeze_top: a.unfreeze_top,
        seed: a.seed,
    };
    let ctx = context(dict, &margs)?;
    let pre = ctx.pretrained.as_ref().expect("checkpoint loaded");
    let (_, extractor) = build_pd_tl(pre, &ctx.pipeline, ctx.dict.len())?;
    outln!("source checkpoint  {}", extractor.source_checkpoint);
    outln!("truncated after    {} ({} features)", extractor.truncation_layer, extractor.output_width);
    outln!("frozen layers      {}", extractor.frozen_layers.join(", "));
    let pool = balanced_pool(&corpus, ctx.seed)?;
    let model = TrainedModel::fit(ModelSpec::PdTl, &ctx, &pool, derive_seed(ctx.seed, 1))?;
    model.save(&a.out)?;
    outln!("trained pd_tl on {} stories -> {}", pool.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let models = flag("models", ModelSpec::parse_list(&a.models))?;
    if a.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Failure::usage("--alpha must lie in (0, 1)"));
    }
    let (corpus, dict) = load(&a.corpus)?;
    let mut ctx = context(dict, &a.model_args)?;
    ctx.jobs = a.jobs;
    let repeats = a.repeats.unwrap_or(match a.model_args.protocol {
        ProtocolArg::Desk => 5,
        ProtocolArg::Paper => 40,
    });
    let plan = plan_balanced_split(&corpus, ctx.seed, repeats, a.k, &SplitOptions::default())?;
    let out = &a.out;
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    write_text(&out.join("plan.json"), &plan.to_json())?;
    write_text(&out.join("pipeline.conf"), &ctx.pipeline.to_text())?;
    if models.contains(&ModelSpec::PdTl) {
        ensure_pretrained(&mut ctx, Some(&out.join("pretrained.ckpt")))?;
    }
    let mut all = BTreeMap::new();
    for &spec in &models {
        eprintln!("{spec}: {} runs", repeats * a.k);
        let outcome = run_protocol(spec, &corpus, &plan, &ctx);
        write_runs(out, &outcome.records)?;
        if let Some(f) = &outcome.failure {
            return Err(Failure {
                code: EXIT_RUN,
                message: format!("{spec}: run {}-{} failed: {}", f.repeat, f.fold, f.message),
            });
        }
        let summary = summarize(&spec.id(), &outcome.records)?;
        write_summary(out, &summary)?;
        outln!(
            "{:<10} acc {:.3} ± {:.3}  prec {:.3}  rec {:.3}  f1 {:.3}",
            spec.display_name(),
            summary.mean.accuracy,
            summary.accuracy_std,
            summary.mean.precision,
            summary.mean.recall,
            summary.mean.f1
        );
        all.insert(spec, outcome.records);
    }
    for (x, y) in default_comparisons(&models) {
        let c = compare(&x.id(), &all[&x], &y.id(), &all[&y], a.alpha)?;
        write_comparison(out, &c)?;
    }
    let text = render_report(&read_summaries(out)?, &read_comparisons(out)?);
    write_text(&out.join("report.md"), &text)
}

fn mcnemar(a: McnemarArgs) -> Outcome {
    let x = parse_model(&a.a)?.id();
    let y = parse_model(&a.b)?.id();
    let rx = flag("a", read_runs(&a.results, &x))?;
    let ry = flag("b", read_runs(&a.results, &y))?;
    let c = compare(&x, &rx, &y, &ry, a.alpha)?;
    write_comparison(&a.results, &c)?;
    let r = &c.pooled;
    outln!("{x} vs {y}: b = {}, c = {}, {:?}", r.b, r.c, r.method);
    if let Some(stat) = r.statistic {
        outln!("statistic {stat:.4}");
    }
    outln!("p = {:.6} -> {:?} at alpha {}", r.p_value, c.decision, a.alpha);
    Ok(())
}

fn report(a: ReportArgs) -> Outcome {
    let text = render_report(
        &flag("results", read_summaries(&a.results))?,
        &flag("results", read_comparisons(&a.results))?,
    );
    let out = a.out.unwrap_or_else(|| a.results.join("report.md"));
    write_text(&out, &text)?;
    out!("{text}");
    Ok(())
}

fn matched_by_category(dict: &PrivacyDictionary, tokens: &[String]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (word, cat) in dict.match_story(tokens).matched_words {
        let words = out.entry(cat).or_default();
        if !words.contains(&word) {
            words.push(word);
        }
    }
    out
}

fn predict(a: PredictArgs) -> Outcome {
    let mut model = flag("model", TrainedModel::load(&a.model))?;
    let (ids, tokens, scores) = match (&a.annotations, &a.text) {
        (Some(p), None) => {
            let corpus = flag("annotations", load_corpus(p, CorpusFormat::from_path(p)))?;
            let stories: Vec<&UserStory> = corpus.stories().iter().collect();
            let scores = model.score(&stories)?;
            let ids = stories.iter().map(|s| s.id.clone()).collect();
            let tokens = stories.iter().map(|s| s.annotation.tokens.clone()).collect();
            (ids, tokens, scores)
        }
        (None, Some(text)) => {
            let tokens = tokenize(text);
            if tokens.is_empty() {
                return Err(Failure::usage("story text is empty"));
            }
            if model.needs_annotations() {
                return Err(Failure::usage(format!(
                    "annotations required: {} reads linguistic features; pass --annotations",
                    model.spec
                )));
            }
            let scores = model.score_tokens(&[tokens.as_slice()])?;
            (vec!["input".to_string()], vec![tokens], scores)
        }
        _ => return Err(Failure::usage("pass a story text or --annotations")),
    };
    for ((id, tokens), score) in ids.iter().zip(&tokens).zip(&scores) {
        let label = u8::from(*score > 0.5);
        let matched = matched_by_category(&model.dict, tokens);
        if a.json {
            let v = serde_json::json!({
                "id": id,
                "label": label,
                "score": score,
                "matched": matched,
            });
            outln!("{v}");
        } else {
            let name = if label == 1 { "disclosure" } else { "no disclosure" };
            outln!("{id}: {name} (label {label}, score {score:.4})");
            for (cat, words) in &matched {
                outln!("  {cat}: {}", words.join(", "));
            }
        }
    }
    Ok(())
}
