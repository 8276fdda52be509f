use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Brute-force Euclidean k-nearest neighbours. Distance ties go to the lower
/// training index.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub k: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl Knn {
    pub(super) fn fit(x: &FeatureMatrix, y: &[u8], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("knn_k must be positive".into()));
        }
        Ok(Knn {
            k,
            d: x.cols(),
            x: x.data().to_vec(),
            y: y.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Indices of the `k` nearest training rows, nearest first.
    pub fn neighbors(&self, q: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .chunks_exact(self.d.max(1))
            .take(self.y.len())
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (s, i)
            })
            .collect();
        if self.d == 0 {
            dist = (0..self.y.len()).map(|i| (0.0, i)).collect();
        }
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn vote_fraction(&self, q: &[f64]) -> f64 {
        let nb = self.neighbors(q);
        nb.iter().filter(|&&i| self.y[i] == 1).count() as f64 / nb.len() as f64
    }

    pub(super) fn to_floats(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend(self.y.iter().map(|&l| f64::from(l)));
        v
    }

    pub(super) fn from_floats(k: usize, n: usize, d: usize, f: &[f64]) -> Option<Self> {
        (f.len() == n * d + n).then(|| Knn {
            k,
            d,
            x: f[..n * d].to_vec(),
            y: f[n * d..].iter().map(|&v| v as u8).collect(),
        })
    }
}
