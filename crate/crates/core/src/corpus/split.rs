//! Balanced repeated k-fold planning.
//!
//! Positives are every `PW_AND_DI` story. Negatives are drawn from the other
//! three kinds, matched in count to the positives, with per-kind quotas
//! proportional to corpus frequency (largest-remainder rounding) unless
//! explicit quotas are supplied. Positives and negatives are each shuffled and
//! cut into `k` folds, so every train and test set is exactly balanced.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Corpus, StoryKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Number of negatives taken from `PW_ONLY`, `DI_ONLY` and `NONE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeQuotas {
    pub pw_only: usize,
    pub di_only: usize,
    pub none: usize,
}

impl NegativeQuotas {
    pub fn total(&self) -> usize {
        self.pw_only + self.di_only + self.none
    }

    fn as_array(&self) -> [usize; 3] {
        [self.pw_only, self.di_only, self.none]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOptions {
    /// Overrides the proportional allocation.
    pub quotas: Option<NegativeQuotas>,
    /// Draw a fresh negative sample every repeat (otherwise once for all repeats).
    pub resample_negatives: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            quotas: None,
            resample_negatives: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub repeats: usize,
    pub k: usize,
    pub positives: usize,
    pub quotas: NegativeQuotas,
    pub resample_negatives: bool,
    /// `folds[repeat][fold]`
    pub folds: Vec<Vec<Fold>>,
}

impl FoldPlan {
    pub fn fold(&self, repeat: usize, fold: usize) -> &Fold {
        &self.folds[repeat][fold]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &Fold)> {
        self.folds
            .iter()
            .enumerate()
            .flat_map(|(r, folds)| folds.iter().enumerate().map(move |(f, fold)| (r, f, fold)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fold plan serialization")
    }
}

pub fn plan_balanced_split(
    corpus: &Corpus,
    seed: u64,
    repeats: usize,
    k: usize,
    options: &SplitOptions,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let mut positives = Vec::new();
    let mut negatives: [Vec<&str>; 3] = Default::default();
    for s in corpus.stories() {
        match s.kind() {
            StoryKind::PwAndDi => positives.push(s.id.as_str()),
            StoryKind::PwOnly => negatives[0].push(s.id.as_str()),
            StoryKind::DiOnly => negatives[1].push(s.id.as_str()),
            StoryKind::None => negatives[2].push(s.id.as_str()),
        }
    }
    let n_pos = positives.len();
    if n_pos < k {
        return Err(Error::data(
            "corpus",
            format!("need at least {k} positive (PW_AND_DI) stories for {k} folds, have {n_pos}"),
        ));
    }
    let available: usize = negatives.iter().map(Vec::len).sum();
    if available < n_pos {
        return Err(Error::InsufficientNegatives {
            needed: n_pos,
            available,
        });
    }

    let quotas = match options.quotas {
        Some(q) => {
            if q.total() != n_pos {
                return Err(Error::Config(format!(
                    "negative quotas sum to {} but there are {n_pos} positives",
                    q.total()
                )));
            }
            for (kind, (&want, have)) in StoryKind::NEGATIVE
                .iter()
                .zip(q.as_array().iter().zip(negatives.iter()))
            {
                if want > have.len() {
                    return Err(Error::Config(format!(
                        "{} quota {want} exceeds the {} available stories",
                        kind.as_str(),
                        have.len()
                    )));
                }
            }
            q
        }
        None => {
            let counts = [negatives[0].len(), negatives[1].len(), negatives[2].len()];
            let q = largest_remainder(n_pos, &counts);
            NegativeQuotas {
                pw_only: q[0],
                di_only: q[1],
                none: q[2],
            }
        }
    };

    let global_negatives = if options.resample_negatives {
        None
    } else {
        let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
        Some(sample_negatives(&negatives, &quotas, &mut rng))
    };

    let mut folds = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let mut rng = rng_from_seed(derive_seed(seed, repeat as u64));
        let mut neg = match &global_negatives {
            Some(g) => g.clone(),
            None => sample_negatives(&negatives, &quotas, &mut rng),
        };
        let mut pos = positives.clone();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let pos_parts = partition(&pos, k);
        let neg_parts = partition(&neg, k);
        let repeat_folds = (0..k)
            .map(|f| {
                let test = pos_parts[f]
                    .iter()
                    .chain(neg_parts[f].iter())
                    .map(|s| s.to_string())
                    .collect();
                let train = (0..k)
                    .filter(|&g| g != f)
                    .flat_map(|g| pos_parts[g].iter())
                    .chain((0..k).filter(|&g| g != f).flat_map(|g| neg_parts[g].iter()))
                    .map(|s| s.to_string())
                    .collect();
                Fold { train, test }
            })
            .collect();
        folds.push(repeat_folds);
    }

    Ok(FoldPlan {
        seed,
        repeats,
        k,
        positives: n_pos,
        quotas,
        resample_negatives: options.resample_negatives,
        folds,
    })
}

fn sample_negatives<'a>(
    pools: &[Vec<&'a str>; 3],
    quotas: &NegativeQuotas,
    rng: &mut impl rand::Rng,
) -> Vec<&'a str> {
    let mut out = Vec::with_capacity(quotas.total());
    for (pool, &quota) in pools.iter().zip(quotas.as_array().iter()) {
        out.extend(pool.choose_multiple(rng, quota).copied());
    }
    out
}

/// Splits into `k` contiguous parts whose sizes differ by at most one.
fn partition<'a, 'b>(items: &'b [&'a str], k: usize) -> Vec<&'b [&'a str]> {
    let base = items.len() / k;
    let extra = items.len() % k;
    let mut parts = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        parts.push(&items[start..start + len]);
        start += len;
    }
    parts
}

/// Allocates `total` across buckets proportionally to `weights`, rounding with
/// the largest-remainder method (ties go to the earlier bucket).
pub(crate) fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut alloc: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rema: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| ((total * w) % sum, i))
        .collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = alloc.iter().sum();
    for &(_, i) in rema.iter().take(total - assigned) {
        alloc[i] += 1;
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[2, 5, 3]), vec![1, 4, 2]);
        assert_eq!(largest_remainder(0, &[2, 5]), vec![0, 0]);
        assert_eq!(largest_remainder(5, &[0, 9]), vec![0, 5]);
    }

    #[test]
    fn partition_sizes() {
        let items: Vec<&str> = vec!["a"; 12];
        let sizes: Vec<usize> = partition(&items, 5).iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2, 2]);
    }
}
