use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{FeatureMatrix, MaxFeatures, ShallowParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    /// Split feature; `None` for leaves.
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Fraction of class-1 training samples that reached the node.
    pub score: f64,
}

/// CART classification tree; `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Copy)]
pub(super) struct TreeOptions {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features sampled per node; `None` uses all.
    pub max_features: Option<usize>,
}

impl TreeOptions {
    pub fn single(p: &ShallowParams) -> Self {
        TreeOptions {
            max_depth: p.dt_max_depth,
            min_leaf: p.dt_min_leaf.max(1),
            max_features: None,
        }
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// `n·gini` summed over both children.
fn weighted_gini(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        0.0
    } else {
        2.0 * n0 as f64 * n1 as f64 / n
    }
}

fn best_split(
    x: &FeatureMatrix,
    y: &[u8],
    idx: &[usize],
    features: impl Iterator<Item = usize>,
    min_leaf: usize,
) -> Option<Split> {
    let total1 = idx.iter().filter(|&&i| y[i] == 1).count();
    let total0 = idx.len() - total1;
    let mut best: Option<Split> = None;
    let mut vals: Vec<(f64, u8)> = Vec::with_capacity(idx.len());
    for f in features {
        vals.clear();
        vals.extend(idx.iter().map(|&i| (x.get(i, f), y[i])));
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut l0, mut l1) = (0usize, 0usize);
        for j in 0..vals.len() - 1 {
            if vals[j].1 == 1 {
                l1 += 1;
            } else {
                l0 += 1;
            }
            let (a, b) = (vals[j].0, vals[j + 1].0);
            if a == b || j + 1 < min_leaf || vals.len() - j - 1 < min_leaf {
                continue;
            }
            let imp = weighted_gini(l0, l1) + weighted_gini(total0 - l0, total1 - l1);
            if best.as_ref().map_or(true, |s| imp < s.impurity - 1e-12) {
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                best = Some(Split {
                    feature: f,
                    threshold: t,
                    impurity: imp,
                });
            }
        }
    }
    best
}

impl Tree {
    pub(super) fn fit(x: &FeatureMatrix, y: &[u8], opts: &TreeOptions, rng: Option<&mut ChaCha8Rng>) -> Self {
        let idx: Vec<usize> = (0..x.rows()).collect();
        Self::fit_indices(x, y, idx, opts, rng)
    }

    pub(super) fn fit_indices(
        x: &FeatureMatrix,
        y: &[u8],
        idx: Vec<usize>,
        opts: &TreeOptions,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Self {
        let d = x.cols();
        let mut nodes = Vec::new();
        let mut stack = vec![(0usize, idx, 0usize)];
        nodes.push(leaf(0.0));
        while let Some((id, idx, depth)) = stack.pop() {
            let n1 = idx.iter().filter(|&&i| y[i] == 1).count();
            let score = n1 as f64 / idx.len().max(1) as f64;
            nodes[id] = leaf(score);
            let stop = n1 == 0
                || n1 == idx.len()
                || opts.max_depth.is_some_and(|m| depth >= m)
                || idx.len() < 2 * opts.min_leaf;
            if stop {
                continue;
            }
            let split = match (opts.max_features, rng.as_deref_mut()) {
                (Some(m), Some(r)) if m < d => {
                    let mut chosen = sample(r, d, m).into_vec();
                    chosen.sort_unstable();
                    best_split(x, y, &idx, chosen.iter().copied(), opts.min_leaf).or_else(|| {
                        let rest = (0..d).filter(|f| chosen.binary_search(f).is_err());
                        best_split(x, y, &idx, rest, opts.min_leaf)
                    })
                }
                _ => best_split(x, y, &idx, 0..d, opts.min_leaf),
            };
            let Some(s) = split else { continue };
            let (li, ri): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| x.get(i, s.feature) <= s.threshold);
            let l = nodes.len();
            nodes.push(leaf(0.0));
            nodes.push(leaf(0.0));
            nodes[id] = TreeNode {
                feature: Some(s.feature),
                threshold: s.threshold,
                left: l,
                right: l + 1,
                score,
            };
            stack.push((l + 1, ri, depth + 1));
            stack.push((l, li, depth + 1));
        }
        Tree { nodes }
    }

    fn leaf_of(&self, x: &[f64]) -> &TreeNode {
        let mut n = &self.nodes[0];
        while let Some(f) = n.feature {
            n = &self.nodes[if x[f] <= n.threshold { n.left } else { n.right }];
        }
        n
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.leaf_of(x).score
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].feature {
                None => 0,
                Some(_) => 1 + go(t, t.nodes[i].left).max(go(t, t.nodes[i].right)),
            }
        }
        go(self, 0)
    }

    pub(super) fn to_floats(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .flat_map(|n| {
                [
                    n.feature.map_or(-1.0, |f| f as f64),
                    n.threshold,
                    n.left as f64,
                    n.right as f64,
                    n.score,
                ]
            })
            .collect()
    }

    pub(super) fn from_floats(n: usize, f: &[f64]) -> Option<Self> {
        if f.len() != n * 5 || n == 0 {
            return None;
        }
        let nodes: Vec<TreeNode> = f
            .chunks_exact(5)
            .map(|c| TreeNode {
                feature: (c[0] >= 0.0).then_some(c[0] as usize),
                threshold: c[1],
                left: c[2] as usize,
                right: c[3] as usize,
                score: c[4],
            })
            .collect();
        let valid = nodes
            .iter()
            .all(|nd| nd.feature.is_none() || (nd.left < n && nd.right < n));
        valid.then_some(Tree { nodes })
    }
}

fn leaf(score: f64) -> TreeNode {
    TreeNode {
        feature: None,
        threshold: 0.0,
        left: 0,
        right: 0,
        score,
    }
}

/// Bagged CART trees voting with hard labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub(super) fn fit(x: &FeatureMatrix, y: &[u8], p: &ShallowParams, seed: u64) -> Result<Self> {
        if p.rf_trees == 0 {
            return Err(Error::Config("rf_trees must be positive".into()));
        }
        let d = x.cols();
        let opts = TreeOptions {
            max_depth: p.dt_max_depth,
            min_leaf: p.dt_min_leaf.max(1),
            max_features: match p.rf_max_features {
                MaxFeatures::Sqrt => Some(((d as f64).sqrt().floor() as usize).max(1)),
                MaxFeatures::All => None,
            },
        };
        let trees = (0..p.rf_trees)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng_from_seed(derive_seed(seed, b as u64));
                let n = x.rows();
                let idx: Vec<usize> = if p.rf_bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                Tree::fit_indices(x, y, idx, &opts, Some(&mut rng))
            })
            .collect();
        Ok(Forest { trees })
    }

    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.score(x) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }

    pub(super) fn to_floats(&self) -> Vec<f64> {
        self.trees.iter().flat_map(Tree::to_floats).collect()
    }

    pub(super) fn from_floats(sizes: &[usize], f: &[f64]) -> Option<Self> {
        if sizes.is_empty() || sizes.iter().sum::<usize>() * 5 != f.len() {
            return None;
        }
        let mut trees = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for &n in sizes {
            trees.push(Tree::from_floats(n, &f[off..off + n * 5])?);
            off += n * 5;
        }
        Some(Forest { trees })
    }
}
