use privstory::corpus::{plan_balanced_split, Corpus, SplitOptions};
use privstory::eval::*;
use privstory::lexicon::PrivacyDictionary;
use privstory::pipelines::PipelineConfig;
use privstory::rng::rng_from_seed;
use privstory::synth::{generate_stories, StoryGenConfig};
use proptest::prelude::*;
use rand::Rng;
use statrs::function::erf::erfc;

fn labels(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<u8>, Vec<u8>) {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (g, p, n) in [(1, 1, tp), (0, 1, fp), (1, 0, fn_), (0, 0, tn)] {
        gold.extend(std::iter::repeat(g).take(n));
        pred.extend(std::iter::repeat(p).take(n));
    }
    (gold, pred)
}

/// `value` is the correctly rounded quotient of two integer counts.
fn is_ratio(value: f64, num: u64, den: u64) -> bool {
    value == num as f64 / den as f64
}

#[test]
fn worked_metric_example() {
    let (g, p) = labels(3, 1, 1, 5);
    let m = compute_metrics(&g, &p).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.8, 0.75, 0.75, 0.75));
    assert_eq!(m.n, 10);
    assert!(!m.degenerate.any());
}

#[test]
fn perfect_and_degenerate_predictions() {
    let (g, p) = labels(4, 0, 0, 4);
    let m = compute_metrics(&g, &p).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));

    let (g, p) = labels(0, 0, 0, 6);
    let m = compute_metrics(&g, &p).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    assert!(m.degenerate.precision && m.degenerate.recall && m.degenerate.f1);
    assert_eq!(m.accuracy, 1.0);

    assert!(compute_metrics(&[], &[]).is_err());
    assert!(compute_metrics(&[1, 0], &[1]).is_err());
}

#[test]
fn metric_identities_on_random_confusion_matrices() {
    let mut rng = rng_from_seed(77);
    for _ in 0..200 {
        let c: [usize; 4] = std::array::from_fn(|_| rng.gen_range(0..40));
        if c.iter().sum::<usize>() == 0 {
            continue;
        }
        let [tp, fp, fn_, tn] = c.map(|v| v as u64);
        let (g, p) = labels(c[0], c[1], c[2], c[3]);
        let m = compute_metrics(&g, &p).unwrap();
        assert_eq!(m.confusion, ConfusionMatrix { tp, fp, fn_, tn });
        let n = tp + fp + fn_ + tn;
        assert!(is_ratio(m.accuracy, tp + tn, n));
        if tp + fp > 0 {
            assert!(is_ratio(m.precision, tp, tp + fp));
        }
        if tp + fn_ > 0 {
            assert!(is_ratio(m.recall, tp, tp + fn_));
        }
        if tp > 0 {
            // harmonic mean of tp/(tp+fp) and tp/(tp+fn) reduces to 2tp/(2tp+fp+fn)
            let (pn, pd) = (tp, tp + fp);
            let (rn, rd) = (tp, tp + fn_);
            let (hn, hd) = (2 * pn * rn, pn * rd + rn * pd);
            assert_eq!(hn * (2 * tp + fp + fn_), 2 * tp * hd);
            assert!(is_ratio(m.f1, 2 * tp, 2 * tp + fp + fn_));
        } else {
            assert!(m.degenerate.f1 && m.f1 == 0.0);
        }
    }
}

#[test]
fn exact_mcnemar_examples() {
    assert!((exact_p_value(2, 8) - 112.0 / 1024.0).abs() < 1e-12);
    assert_eq!(exact_p_value(4, 4), 1.0);
    assert_eq!(exact_p_value(0, 0), 1.0);
    let r = mcnemar_counts(10, 3, 2, 8);
    assert_eq!(r.method, McNemarMethod::Exact);
    assert_eq!(r.statistic, None);
}

#[test]
fn corrected_chi_square_example() {
    let r = mcnemar_counts(0, 0, 60, 20);
    assert_eq!(r.method, McNemarMethod::CorrectedChi2);
    let stat = r.statistic.unwrap();
    assert!((stat - 19.0125).abs() < 1e-12);
    // one-degree-of-freedom upper tail: P[chi2 > x] = erfc(sqrt(x / 2))
    let p = erfc((stat / 2.0).sqrt());
    assert!((r.p_value - p).abs() < 1e-12, "{} vs {p}", r.p_value);
    assert!(r.p_value < 0.001);
    assert_eq!(mcnemar_counts(0, 0, 13, 13).method, McNemarMethod::CorrectedChi2);
    assert_eq!(mcnemar_counts(0, 0, 12, 13).method, McNemarMethod::Exact);
}

fn enumerated_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    let lo = b.min(c);
    let tail = (0u64..1 << n).filter(|mask| u64::from(mask.count_ones()) <= lo).count();
    (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn exact_p_matches_enumeration_up_to_sixteen() {
    for n in 0..=16u64 {
        for b in 0..=n {
            let want = enumerated_p(b, n - b);
            let got = exact_p_value(b, n - b);
            assert!((got - want).abs() < 1e-12, "b={b} c={}: {got} vs {want}", n - b);
        }
    }
}

#[test]
fn hypothesis_decisions_use_strict_inequality() {
    assert_eq!(decide_hypothesis(0.04, 0.05), Decision::Reject);
    assert_eq!(decide_hypothesis(0.05, 0.05), Decision::FailToReject);
    assert_eq!(decide_hypothesis(0.9, 0.05), Decision::FailToReject);
}

fn record(model: &str, repeat: usize, fold: usize, rows: &[(&str, u8, u8)]) -> RunRecord {
    let instances: Vec<InstanceRecord> = rows
        .iter()
        .map(|&(id, gold, predicted)| InstanceRecord {
            id: id.into(),
            gold,
            predicted,
            score: f64::from(predicted),
        })
        .collect();
    let g: Vec<u8> = rows.iter().map(|r| r.1).collect();
    let p: Vec<u8> = rows.iter().map(|r| r.2).collect();
    RunRecord {
        model: model.into(),
        repeat,
        fold,
        metrics: compute_metrics(&g, &p).unwrap(),
        instances,
        wall_clock_secs: 0.0,
    }
}

#[test]
fn pooled_mcnemar_counts_and_symmetry() {
    let a = vec![
        record("a", 0, 0, &[("x", 1, 1), ("y", 0, 0), ("z", 1, 0)]),
        record("a", 0, 1, &[("u", 0, 1), ("v", 1, 1)]),
    ];
    let b = vec![
        record("b", 0, 0, &[("x", 1, 0), ("y", 0, 0), ("z", 1, 0)]),
        record("b", 0, 1, &[("u", 0, 0), ("v", 1, 0)]),
    ];
    let ab = mcnemar(&a, &b).unwrap();
    let ba = mcnemar(&b, &a).unwrap();
    assert_eq!((ab.n00, ab.n11, ab.b, ab.c), (1, 1, 2, 1));
    assert_eq!(ab.n00 + ab.n11 + ab.b + ab.c, 5);
    assert_eq!((ba.b, ba.c), (ab.c, ab.b));
    assert_eq!(ab.p_value, ba.p_value);
    assert_eq!(mcnemar_per_run(&a, &b).unwrap().len(), 2);

    let short = vec![record("b", 0, 0, &[("x", 1, 0), ("y", 0, 0)])];
    let err = mcnemar(&a[..1], &short).unwrap_err().to_string();
    assert!(err.contains("coverage"), "{err}");
}

proptest! {
    #[test]
    fn p_value_is_symmetric_and_bounded(b in 0u64..200, c in 0u64..200) {
        let p = exact_p_value(b, c);
        prop_assert_eq!(p, exact_p_value(c, b));
        prop_assert!((0.0..=1.0).contains(&p));
        let r = mcnemar_counts(0, 0, b, c);
        prop_assert_eq!(r.p_value, mcnemar_counts(0, 0, c, b).p_value);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }
}

#[test]
fn model_ids_parse_and_display() {
    let all = ModelSpec::all();
    assert_eq!(all.len(), 15);
    for m in &all {
        assert_eq!(&m.id().parse::<ModelSpec>().unwrap(), m);
    }
    assert_eq!(ModelSpec::parse_list("lr_pw, CNN_PW").unwrap(), [
        ModelSpec::Shallow(privstory::shallow::Variant::Lr, FeatureSet::Pw),
        ModelSpec::CnnPw
    ]);
    assert_eq!(ModelSpec::PdTl.display_name(), "PD_TL");
    assert!("xgb_pw".parse::<ModelSpec>().is_err());
    assert!(ModelSpec::parse_list(" , ").is_err());
}

fn small_setup(repeats: usize) -> (Corpus, privstory::corpus::FoldPlan, ProtocolContext) {
    let corpus = generate_stories(&StoryGenConfig {
        n: 200,
        seed: 5,
        ..StoryGenConfig::default()
    })
    .unwrap();
    let plan = plan_balanced_split(&corpus, 42, repeats, 5, &SplitOptions::default()).unwrap();
    let ctx = ProtocolContext::new(PrivacyDictionary::seed(), PipelineConfig::desk(), 42);
    (corpus, plan, ctx)
}

#[test]
fn protocol_yields_one_record_per_cell_matching_plan() {
    let (corpus, plan, ctx) = small_setup(2);
    let spec: ModelSpec = "dt_pw".parse().unwrap();
    let records = run_protocol(spec, &corpus, &plan, &ctx).into_result().unwrap();
    assert_eq!(records.len(), 10);
    for r in &records {
        let ids: Vec<&str> = r.instances.iter().map(|i| i.id.as_str()).collect();
        let want: Vec<&str> = plan.fold(r.repeat, r.fold).test.iter().map(String::as_str).collect();
        assert_eq!(ids, want);
        for i in &r.instances {
            assert_eq!(i.gold, target(corpus.get(&i.id).unwrap()));
            assert_eq!(i.predicted, u8::from(i.score > 0.5));
        }
    }
}

#[test]
fn constant_baseline_scores_exactly_half() {
    let (corpus, plan, ctx) = small_setup(2);
    for label in [0, 1] {
        let records = run_protocol(ModelSpec::Constant(label), &corpus, &plan, &ctx)
            .into_result()
            .unwrap();
        assert!(records.iter().all(|r| r.metrics.accuracy == 0.5));
    }
}

fn without_clock(mut records: Vec<RunRecord>) -> String {
    for r in &mut records {
        r.wall_clock_secs = 0.0;
    }
    serde_json::to_string(&records).unwrap()
}

#[test]
fn protocol_is_deterministic_sequential_and_parallel() {
    let (corpus, plan, mut ctx) = small_setup(1);
    for spec in ["rf_nlp", "svm_pw", "cnn_pw"] {
        let spec: ModelSpec = spec.parse().unwrap();
        let a = without_clock(run_protocol(spec, &corpus, &plan, &ctx).into_result().unwrap());
        let b = without_clock(run_protocol(spec, &corpus, &plan, &ctx).into_result().unwrap());
        assert_eq!(a, b, "{spec}");
        ctx.jobs = 2;
        let c = without_clock(run_protocol(spec, &corpus, &plan, &ctx).into_result().unwrap());
        ctx.jobs = 1;
        assert_eq!(a, c, "{spec} parallel");
    }
}

#[test]
fn transfer_model_without_checkpoint_fails_at_first_cell() {
    let (corpus, plan, ctx) = small_setup(1);
    let outcome = run_protocol(ModelSpec::PdTl, &corpus, &plan, &ctx);
    let failure = outcome.failure.clone().unwrap();
    assert_eq!((failure.repeat, failure.fold), (0, 0));
    assert!(outcome.records.is_empty());
    assert!(outcome.into_result().unwrap_err().to_string().contains("pretrained"));
}

#[test]
fn results_directory_round_trip_and_report() {
    let (corpus, plan, ctx) = small_setup(1);
    let dir = tempfile::tempdir().unwrap();
    let specs: Vec<ModelSpec> = ModelSpec::parse_list("gnb_nlp,gnb_pw,const0").unwrap();
    let mut all = Vec::new();
    for &spec in &specs {
        let recs = run_protocol(spec, &corpus, &plan, &ctx).into_result().unwrap();
        write_runs(dir.path(), &recs).unwrap();
        let s = summarize(&spec.id(), &recs).unwrap();
        write_summary(dir.path(), &s).unwrap();
        assert_eq!(read_runs(dir.path(), &spec.id()).unwrap(), {
            let mut r = recs.clone();
            r.iter_mut().for_each(|x| x.wall_clock_secs = 0.0);
            r
        });
        all.push((spec, recs));
    }
    assert!(run_path(dir.path(), "gnb_pw", 0, 3).exists());
    let pairs = default_comparisons(&specs);
    assert_eq!(pairs.len(), 1);
    let find = |m: ModelSpec| &all.iter().find(|(s, _)| *s == m).unwrap().1;
    for (a, b) in &pairs {
        let c = compare(&a.id(), find(*a), &b.id(), find(*b), 0.05).unwrap();
        assert_eq!(c.per_run.len(), 5);
        write_comparison(dir.path(), &c).unwrap();
    }
    let summaries = read_summaries(dir.path()).unwrap();
    assert_eq!(summaries.len(), 3);
    let const0 = summaries.iter().find(|s| s.model == "const0").unwrap();
    assert_eq!(const0.mean.accuracy, 0.5);
    assert_eq!(const0.accuracy_std, 0.0);
    assert_eq!(const0.degenerate_runs, 5);
    let comparisons = read_comparisons(dir.path()).unwrap();
    let report = render_report(&summaries, &comparisons);
    for needle in ["GNB_NLP", "GNB_PW", "CONST0", "McNemar", "| GNB_PW | GNB_NLP |"] {
        assert!(report.contains(needle), "missing {needle}:\n{report}");
    }
}

#[test]
fn summary_means_over_runs_and_pooled() {
    let runs = vec![
        record("m", 0, 0, &[("a", 1, 1), ("b", 0, 0)]),
        record("m", 0, 1, &[("c", 1, 0), ("d", 0, 0)]),
    ];
    let s = summarize("m", &runs).unwrap();
    assert_eq!(s.mean.accuracy, 0.75);
    assert!((s.accuracy_std - (0.125f64).sqrt()).abs() < 1e-12);
    assert_eq!(s.pooled.confusion, ConfusionMatrix { tp: 1, fp: 0, fn_: 1, tn: 2 });
    assert_eq!(s.degenerate_runs, 1);
    assert!(summarize("m", &[]).is_err());
}
