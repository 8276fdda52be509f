use rand::seq::SliceRandom;

use super::{FeatureMatrix, ShallowParams};
use crate::nn::sigmoid;
use crate::rng::rng_from_seed;

/// Linear decision function `w·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Linear {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }

    pub(super) fn to_floats(&self) -> Vec<f64> {
        let mut v = self.w.clone();
        v.push(self.b);
        v
    }

    pub(super) fn from_floats(d: usize, f: &[f64]) -> Option<Self> {
        (f.len() == d + 1).then(|| Linear {
            w: f[..d].to_vec(),
            b: f[d],
        })
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss plus `lambda/2·|w|²`; the bias is not penalized.
pub fn logistic_loss(m: &Linear, x: &FeatureMatrix, y: &[u8], lambda: f64) -> f64 {
    let n = x.rows() as f64;
    let data: f64 = (0..x.rows())
        .map(|i| {
            let z = m.decision(x.row(i));
            softplus(z) - f64::from(y[i]) * z
        })
        .sum();
    data / n + 0.5 * lambda * m.w.iter().map(|w| w * w).sum::<f64>()
}

/// Full-batch gradient descent with Armijo backtracking.
pub(super) fn fit_logistic(x: &FeatureMatrix, y: &[u8], p: &ShallowParams) -> Linear {
    let d = x.cols();
    let n = x.rows() as f64;
    let mut m = Linear {
        w: vec![0.0; d],
        b: 0.0,
    };
    let mut loss = logistic_loss(&m, x, y, p.lr_lambda);
    let mut step: f64 = 1.0;
    for _ in 0..p.lr_max_iter {
        let mut gw: Vec<f64> = m.w.iter().map(|w| p.lr_lambda * w).collect();
        let mut gb = 0.0;
        for i in 0..x.rows() {
            let row = x.row(i);
            let r = (sigmoid(m.decision(row)) - f64::from(y[i])) / n;
            gb += r;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        let gnorm2 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if gnorm2.sqrt() < p.lr_tol {
            break;
        }
        step = (step * 2.0).min(1e6);
        loop {
            let cand = Linear {
                w: m.w.iter().zip(&gw).map(|(w, g)| w - step * g).collect(),
                b: m.b - step * gb,
            };
            let cl = logistic_loss(&cand, x, y, p.lr_lambda);
            if cl <= loss - 0.5 * step * gnorm2 {
                m = cand;
                loss = cl;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return m;
            }
        }
    }
    m
}

/// Pegasos: stochastic subgradient steps on the hinge loss with step size
/// `1/(lambda·t)` and projection onto the ball of radius `1/sqrt(lambda)`.
/// The bias is learned as the weight of a constant feature.
pub(super) fn fit_pegasos(x: &FeatureMatrix, y: &[u8], p: &ShallowParams, seed: u64) -> Linear {
    let d = x.cols();
    let lambda = p.svm_lambda;
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut rng = rng_from_seed(seed);
    let mut t = 0u64;
    let radius = 1.0 / lambda.sqrt();
    for _ in 0..p.svm_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let row = x.row(i);
            let yi = if y[i] == 1 { 1.0 } else { -1.0 };
            let margin = yi * (row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d]);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wj, v) in w.iter_mut().zip(row) {
                    *wj += eta * yi * v;
                }
                w[d] += eta * yi;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    let b = w.pop().unwrap_or(0.0);
    Linear { w, b }
}
