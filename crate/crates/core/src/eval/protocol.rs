use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricReport};
use super::model::TrainedModel;
use crate::corpus::{Corpus, FoldPlan, TagSet, UserStory};
use crate::error::{Error, Result};
use crate::lexicon::PrivacyDictionary;
use crate::pipelines::{PipelineConfig, Pretrained};
use crate::rng::{derive_seed, label_hash};
use crate::shallow::{NlpRepr, ShallowParams, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSet {
    Pw,
    Nlp,
}

/// A model the protocol can fit per fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelSpec {
    /// Always predicts the given label.
    Constant(u8),
    Shallow(Variant, FeatureSet),
    CnnNlp,
    CnnPw,
    PdTl,
}

impl ModelSpec {
    /// Every shallow model on both feature sets, then the three networks.
    pub fn all() -> Vec<ModelSpec> {
        let mut v: Vec<ModelSpec> = Variant::ALL
            .iter()
            .flat_map(|&m| [ModelSpec::Shallow(m, FeatureSet::Nlp), ModelSpec::Shallow(m, FeatureSet::Pw)])
            .collect();
        v.extend([ModelSpec::CnnNlp, ModelSpec::CnnPw, ModelSpec::PdTl]);
        v
    }

    pub fn id(&self) -> String {
        match self {
            ModelSpec::Constant(l) => format!("const{l}"),
            ModelSpec::Shallow(v, FeatureSet::Pw) => format!("{}_pw", v.as_str()),
            ModelSpec::Shallow(v, FeatureSet::Nlp) => format!("{}_nlp", v.as_str()),
            ModelSpec::CnnNlp => "cnn_nlp".into(),
            ModelSpec::CnnPw => "cnn_pw".into(),
            ModelSpec::PdTl => "pd_tl".into(),
        }
    }

    /// Display name such as `RF_PW` or `CNN_NLP`.
    pub fn display_name(&self) -> String {
        self.id().to_uppercase()
    }

    pub fn is_neural(&self) -> bool {
        matches!(self, ModelSpec::CnnNlp | ModelSpec::CnnPw | ModelSpec::PdTl)
    }

    /// Parses a comma-separated list; `all` expands to [`ModelSpec::all`].
    pub fn parse_list(s: &str) -> Result<Vec<ModelSpec>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(ModelSpec::all());
            } else {
                out.push(part.parse()?);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_lowercase();
        match s.as_str() {
            "cnn_nlp" => return Ok(ModelSpec::CnnNlp),
            "cnn_pw" => return Ok(ModelSpec::CnnPw),
            "pd_tl" => return Ok(ModelSpec::PdTl),
            "const0" => return Ok(ModelSpec::Constant(0)),
            "const1" => return Ok(ModelSpec::Constant(1)),
            _ => {}
        }
        let unknown = || Error::Config(format!("unknown model `{s}`"));
        let (v, feats) = s.split_once('_').ok_or_else(unknown)?;
        let feats = match feats {
            "pw" => FeatureSet::Pw,
            "nlp" => FeatureSet::Nlp,
            _ => return Err(unknown()),
        };
        Ok(ModelSpec::Shallow(v.parse().map_err(|_| unknown())?, feats))
    }
}

/// Everything a protocol run needs besides the corpus and plan.
#[derive(Debug, Clone)]
pub struct ProtocolContext {
    pub dict: PrivacyDictionary,
    pub tags: TagSet,
    pub pipeline: PipelineConfig,
    pub shallow: ShallowParams,
    pub nlp_repr: NlpRepr,
    pub pretrained: Option<Pretrained>,
    pub seed: u64,
    /// Worker threads for cells; 1 runs sequentially.
    pub jobs: usize,
}

impl ProtocolContext {
    pub fn new(dict: PrivacyDictionary, pipeline: PipelineConfig, seed: u64) -> Self {
        ProtocolContext {
            dict,
            tags: TagSet::default(),
            pipeline,
            shallow: ShallowParams::default(),
            nlp_repr: NlpRepr::Bag,
            pretrained: None,
            seed,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub gold: u8,
    pub predicted: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub repeat: usize,
    pub fold: usize,
    pub instances: Vec<InstanceRecord>,
    pub metrics: MetricReport,
    pub wall_clock_secs: f64,
}

/// Protocol target: 1 for stories with both privacy words and a disclosure.
pub fn target(story: &UserStory) -> u8 {
    u8::from(story.kind().is_positive())
}

/// Fits `spec` on `train_set` and returns class-1 scores for `test_set`.
pub fn fit_predict(
    spec: ModelSpec,
    ctx: &ProtocolContext,
    train_set: &[&UserStory],
    test_set: &[&UserStory],
    seed: u64,
) -> Result<Vec<f64>> {
    TrainedModel::fit(spec, ctx, train_set, seed)?.score(test_set)
}

/// Outcome of a protocol run; `failure` names the first cell that failed,
/// in which case `records` holds the cells completed before it.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub records: Vec<RunRecord>,
    pub failure: Option<CellFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub repeat: usize,
    pub fold: usize,
    pub message: String,
}

impl ProtocolOutcome {
    pub fn into_result(self) -> Result<Vec<RunRecord>> {
        match self.failure {
            None => Ok(self.records),
            Some(f) => Err(Error::Training(format!(
                "run {}-{} failed: {}",
                f.repeat, f.fold, f.message
            ))),
        }
    }
}

fn run_cell(
    spec: ModelSpec,
    corpus: &Corpus,
    ctx: &ProtocolContext,
    repeat: usize,
    fold: usize,
    k: usize,
    fold_data: &crate::corpus::Fold,
) -> Result<RunRecord> {
    let start = Instant::now();
    let train_set = corpus.select(&fold_data.train)?;
    let test_set = corpus.select(&fold_data.test)?;
    let seed = derive_seed(ctx.seed ^ label_hash(&spec.id()), (repeat * k + fold) as u64);
    let scores = fit_predict(spec, ctx, &train_set, &test_set, seed)?;
    let instances: Vec<InstanceRecord> = test_set
        .iter()
        .zip(&scores)
        .map(|(s, &score)| InstanceRecord {
            id: s.id.clone(),
            gold: target(s),
            predicted: u8::from(score > 0.5),
            score,
        })
        .collect();
    let gold: Vec<u8> = instances.iter().map(|i| i.gold).collect();
    let pred: Vec<u8> = instances.iter().map(|i| i.predicted).collect();
    Ok(RunRecord {
        model: spec.id(),
        repeat,
        fold,
        metrics: compute_metrics(&gold, &pred)?,
        instances,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Fits and scores `spec` on every (repeat, fold) cell of `plan`.
pub fn run_protocol(spec: ModelSpec, corpus: &Corpus, plan: &FoldPlan, ctx: &ProtocolContext) -> ProtocolOutcome {
    let cells: Vec<_> = plan.cells().collect();
    let run = |&(r, f, fold): &(usize, usize, &crate::corpus::Fold)| run_cell(spec, corpus, ctx, r, f, plan.k, fold);
    let results: Vec<Result<RunRecord>> = if ctx.jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(ctx.jobs).build() {
            Ok(pool) => pool.install(|| cells.par_iter().map(run).collect()),
            Err(e) => {
                return ProtocolOutcome {
                    records: Vec::new(),
                    failure: Some(CellFailure {
                        repeat: 0,
                        fold: 0,
                        message: format!("thread pool: {e}"),
                    }),
                }
            }
        }
    } else {
        let mut out = Vec::with_capacity(cells.len());
        for c in &cells {
            let r = run(c);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    };
    let mut records = Vec::new();
    for (res, (r, f, _)) in results.into_iter().zip(&cells) {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => {
                return ProtocolOutcome {
                    records,
                    failure: Some(CellFailure {
                        repeat: *r,
                        fold: *f,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    ProtocolOutcome {
        records,
        failure: None,
    }
}
