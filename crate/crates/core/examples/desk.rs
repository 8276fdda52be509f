use std::time::Instant;

use privstory::corpus::{plan_balanced_split, SplitOptions, TagSet};
use privstory::eval::*;
use privstory::lexicon::PrivacyDictionary;
use privstory::pipelines::{pretrain, PipelineConfig};
use privstory::synth::{generate_stories, generate_surrogate_corpus, StoryGenConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let repeats: usize = args.get(1).map_or(1, |s| s.parse().unwrap());
    let models = args.get(2).cloned().unwrap_or("all".into());
    let corpus = generate_stories(&StoryGenConfig::default()).unwrap();
    let plan = plan_balanced_split(&corpus, 42, repeats, 5, &SplitOptions::default()).unwrap();
    let cfg = if std::env::var("FULL").is_ok() { PipelineConfig::default() } else { PipelineConfig::desk() };
    let mut ctx = ProtocolContext::new(PrivacyDictionary::seed(), cfg.clone(), 42);
    let specs = ModelSpec::parse_list(&models).unwrap();
    if specs.contains(&ModelSpec::PdTl) {
        let t = Instant::now();
        let sur = generate_surrogate_corpus(7, 2000).unwrap();
        let pre = pretrain(&cfg, &sur, &TagSet::default(), false).unwrap();
        println!("pretrain heldout {:.3} in {:.1}s", pre.heldout_accuracy, t.elapsed().as_secs_f64());
        ctx.pretrained = Some(pre);
    }
    for spec in specs {
        let t = Instant::now();
        let recs = run_protocol(spec, &corpus, &plan, &ctx).into_result().unwrap();
        let s = summarize(&spec.id(), &recs).unwrap();
        println!("{:8} acc {:.3} f1 {:.3} ({:.1}s)", spec.id(), s.mean.accuracy, s.mean.f1, t.elapsed().as_secs_f64());
    }
}
