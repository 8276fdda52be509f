//! Classical classifiers over fixed-width feature vectors.

mod bayes;
mod knn;
mod linear;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::corpus::{LinguisticAnnotation, TagSet};
use crate::encode::{aux_vector, lexical_stream, EncodedSample, Vocabs};
use crate::error::{Error, Result};

pub use bayes::GaussianNb;
pub use knn::Knn;
pub use linear::{logistic_loss, Linear};
pub use tree::{Forest, Tree, TreeNode};

pub const SHALLOW_MAGIC: &[u8; 8] = b"PSSHALLO";

/// Row-major sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "feature matrix",
                format!("{} values for {rows}x{cols}", data.len()),
            ));
        }
        if feature_names.len() != cols {
            return Err(Error::shape(
                "feature matrix",
                format!("{} names for {cols} columns", feature_names.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(
                "feature matrix",
                format!("non-finite value at row {}, column {}", i / cols.max(1), i % cols.max(1)),
            ));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            feature_names,
        })
    }

    /// Builds a matrix from equal-width rows with generated names `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let names = (0..cols).map(|i| format!("f{i}")).collect();
        Self::from_rows_named(rows, names)
    }

    pub fn from_rows_named(rows: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let cols = names.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "feature matrix",
                    format!("row {i} has {} values, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data, names)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Shallow representation of the NLP channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpRepr {
    /// Token counts, then POS, dependency and entity histograms.
    #[default]
    Bag,
    /// Padded token ids followed by padded dependency ids.
    Sequence,
}

impl FromStr for NlpRepr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag" => Ok(NlpRepr::Bag),
            "sequence" => Ok(NlpRepr::Sequence),
            _ => Err(Error::Config(format!("unknown NLP representation `{s}` (bag|sequence)"))),
        }
    }
}

pub fn nlp_feature_names(vocabs: &Vocabs, tags: &TagSet) -> Vec<String> {
    let tok = (0..vocabs.token.len() as u32).map(|i| format!("tok:{}", vocabs.token.symbol(i).unwrap_or("?")));
    let pos = tags.pos().iter().map(|t| format!("pos:{t}"));
    let dep = (0..vocabs.dep.len() as u32).map(|i| format!("dep:{}", vocabs.dep.symbol(i).unwrap_or("?")));
    let ent = tags.entity().iter().map(|t| format!("ent:{t}"));
    tok.chain(pos).chain(dep).chain(ent).collect()
}

/// Token-count bag over the token vocabulary, POS histogram, dependency
/// histogram over the dependency vocabulary and entity histogram.
pub fn vectorize_nlp(annotation: &LinguisticAnnotation, vocabs: &Vocabs, tags: &TagSet) -> Vec<f64> {
    let mut bag = vec![0.0; vocabs.token.len()];
    for sym in lexical_stream(annotation, tags) {
        bag[vocabs.token.id(&sym) as usize] += 1.0;
    }
    let aux = aux_vector(annotation, tags);
    let (pos, ent) = aux.split_at(tags.pos().len());
    let mut dep = vec![0.0; vocabs.dep.len()];
    for d in &annotation.dep_tags {
        dep[vocabs.dep.id(d) as usize] += 1.0;
    }
    let n = annotation.len();
    if n > 0 {
        dep.iter_mut().for_each(|v| *v /= n as f64);
    }
    let mut out = bag;
    out.extend_from_slice(pos);
    out.extend(dep);
    out.extend_from_slice(ent);
    out
}

pub fn vectorize_sequence(sample: &EncodedSample) -> Vec<f64> {
    sample
        .token_ids
        .iter()
        .chain(&sample.dep_ids)
        .map(|&i| i as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lr,
    Svm,
    Gnb,
    Knn,
    Dt,
    Rf,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Lr,
        Variant::Svm,
        Variant::Gnb,
        Variant::Knn,
        Variant::Dt,
        Variant::Rf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Lr => "lr",
            Variant::Svm => "svm",
            Variant::Gnb => "gnb",
            Variant::Knn => "knn",
            Variant::Dt => "dt",
            Variant::Rf => "rf",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown shallow model `{s}`")))
    }
}

/// Features considered at each tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShallowParams {
    pub lr_lambda: f64,
    pub lr_max_iter: usize,
    pub lr_tol: f64,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub gnb_var_smoothing: f64,
    pub knn_k: usize,
    pub dt_max_depth: Option<usize>,
    pub dt_min_leaf: usize,
    pub rf_trees: usize,
    pub rf_bootstrap: bool,
    pub rf_max_features: MaxFeatures,
}

impl Default for ShallowParams {
    fn default() -> Self {
        ShallowParams {
            lr_lambda: 1e-4,
            lr_max_iter: 1000,
            lr_tol: 1e-6,
            svm_lambda: 1e-4,
            svm_epochs: 20,
            gnb_var_smoothing: 1e-9,
            knn_k: 5,
            dt_max_depth: None,
            dt_min_leaf: 1,
            rf_trees: 100,
            rf_bootstrap: true,
            rf_max_features: MaxFeatures::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Learned {
    Lr(Linear),
    Svm(Linear),
    Gnb(GaussianNb),
    Knn(Knn),
    Dt(Tree),
    Rf(Forest),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub score: f64,
}

impl Prediction {
    /// Label 1 only for scores strictly above one half.
    pub fn from_score(score: f64) -> Self {
        Prediction {
            label: u8::from(score > 0.5),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowModel {
    pub variant: Variant,
    pub params: ShallowParams,
    pub seed: u64,
    pub width: usize,
    pub learned: Learned,
}

pub fn fit(
    variant: Variant,
    x: &FeatureMatrix,
    y: &[u8],
    params: &ShallowParams,
    seed: u64,
) -> Result<ShallowModel> {
    if x.rows() != y.len() {
        return Err(Error::shape(
            "fit",
            format!("{} rows but {} labels", x.rows(), y.len()),
        ));
    }
    if x.rows() < 2 {
        return Err(Error::Training("need at least 2 samples".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Training("labels must be 0 or 1".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Training(format!(
            "single-class data (all labels {})",
            y[0]
        )));
    }
    let learned = match variant {
        Variant::Lr => Learned::Lr(linear::fit_logistic(x, y, params)),
        Variant::Svm => Learned::Svm(linear::fit_pegasos(x, y, params, seed)),
        Variant::Gnb => Learned::Gnb(GaussianNb::fit(x, y, params.gnb_var_smoothing)),
        Variant::Knn => Learned::Knn(Knn::fit(x, y, params.knn_k)?),
        Variant::Dt => Learned::Dt(Tree::fit(x, y, &tree::TreeOptions::single(params), None)),
        Variant::Rf => Learned::Rf(Forest::fit(x, y, params, seed)?),
    };
    Ok(ShallowModel {
        variant,
        params: params.clone(),
        seed,
        width: x.cols(),
        learned,
    })
}

#[derive(Serialize, Deserialize)]
struct Header {
    variant: Variant,
    params: ShallowParams,
    seed: u64,
    width: usize,
    #[serde(default)]
    extra: Vec<usize>,
}

impl ShallowModel {
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.width {
            return Err(Error::shape(
                self.variant.to_string(),
                format!("expected {} features, got {}", self.width, x.len()),
            ));
        }
        let score = match &self.learned {
            Learned::Lr(m) => crate::nn::sigmoid(m.decision(x)),
            Learned::Svm(m) => crate::nn::sigmoid(m.decision(x)),
            Learned::Gnb(m) => m.posterior(x)[1],
            Learned::Knn(m) => m.vote_fraction(x),
            Learned::Dt(t) => t.score(x),
            Learned::Rf(f) => f.vote_fraction(x),
        };
        Ok(Prediction::from_score(score))
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Prediction>> {
        (0..x.rows()).map(|i| self.predict(x.row(i))).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (extra, floats) = match &self.learned {
            Learned::Lr(m) | Learned::Svm(m) => (vec![], m.to_floats()),
            Learned::Gnb(m) => (vec![], m.to_floats()),
            Learned::Knn(m) => (vec![m.k, m.len()], m.to_floats()),
            Learned::Dt(t) => (vec![t.nodes.len()], t.to_floats()),
            Learned::Rf(f) => (f.trees.iter().map(|t| t.nodes.len()).collect(), f.to_floats()),
        };
        let header = Header {
            variant: self.variant,
            params: self.params.clone(),
            seed: self.seed,
            width: self.width,
            extra,
        };
        let json = serde_json::to_string(&header).expect("header serializes");
        container::encode(SHALLOW_MAGIC, &json, &floats)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, floats) = container::decode(SHALLOW_MAGIC, bytes)?;
        let h: Header = serde_json::from_str(&json)
            .map_err(|e| Error::Checkpoint(format!("bad model header: {e}")))?;
        let d = h.width;
        let bad = |what: &str| Error::Checkpoint(format!("{what} block has the wrong size"));
        let learned = match h.variant {
            Variant::Lr | Variant::Svm => {
                let m = Linear::from_floats(d, &floats).ok_or_else(|| bad("weight"))?;
                if h.variant == Variant::Lr {
                    Learned::Lr(m)
                } else {
                    Learned::Svm(m)
                }
            }
            Variant::Gnb => Learned::Gnb(GaussianNb::from_floats(d, &floats).ok_or_else(|| bad("class statistics"))?),
            Variant::Knn => {
                let [k, n] = h.extra[..] else { return Err(bad("neighbor")) };
                Learned::Knn(Knn::from_floats(k, n, d, &floats).ok_or_else(|| bad("neighbor"))?)
            }
            Variant::Dt => {
                let n = *h.extra.first().ok_or_else(|| bad("tree"))?;
                Learned::Dt(Tree::from_floats(n, &floats).ok_or_else(|| bad("tree"))?)
            }
            Variant::Rf => Learned::Rf(Forest::from_floats(&h.extra, &floats).ok_or_else(|| bad("forest"))?),
        };
        Ok(ShallowModel {
            variant: h.variant,
            params: h.params,
            seed: h.seed,
            width: d,
            learned,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}
