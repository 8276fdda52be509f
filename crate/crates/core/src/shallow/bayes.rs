use super::FeatureMatrix;

/// Gaussian naive Bayes with per-class means and variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    pub prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl GaussianNb {
    /// Variances are smoothed by `smoothing` times the largest overall
    /// feature variance.
    pub(super) fn fit(x: &FeatureMatrix, y: &[u8], smoothing: f64) -> Self {
        let d = x.cols();
        let n = x.rows();
        let mut count = [0usize; 2];
        let mut mean = [vec![0.0; d], vec![0.0; d]];
        let mut all_mean = vec![0.0; d];
        for i in 0..n {
            let c = y[i] as usize;
            count[c] += 1;
            for (j, v) in x.row(i).iter().enumerate() {
                mean[c][j] += v;
                all_mean[j] += v;
            }
        }
        for c in 0..2 {
            mean[c].iter_mut().for_each(|m| *m /= count[c] as f64);
        }
        all_mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [vec![0.0; d], vec![0.0; d]];
        let mut all_var = vec![0.0; d];
        for i in 0..n {
            let c = y[i] as usize;
            for (j, v) in x.row(i).iter().enumerate() {
                var[c][j] += (v - mean[c][j]).powi(2);
                all_var[j] += (v - all_mean[j]).powi(2);
            }
        }
        let max_var = all_var.iter().map(|v| v / n as f64).fold(0.0, f64::max);
        let eps = (smoothing * max_var).max(1e-12);
        for c in 0..2 {
            var[c].iter_mut().for_each(|v| *v = *v / count[c] as f64 + eps);
        }
        GaussianNb {
            prior: [count[0] as f64 / n as f64, count[1] as f64 / n as f64],
            mean,
            var,
        }
    }

    pub fn log_joint(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for c in 0..2 {
            let mut s = self.prior[c].ln();
            for ((v, m), var) in x.iter().zip(&self.mean[c]).zip(&self.var[c]) {
                s -= 0.5 * (2.0 * std::f64::consts::PI * var).ln() + (v - m).powi(2) / (2.0 * var);
            }
            out[c] = s;
        }
        out
    }

    /// Class posteriors `[P(0|x), P(1|x)]`.
    pub fn posterior(&self, x: &[f64]) -> [f64; 2] {
        let [l0, l1] = self.log_joint(x);
        let p1 = 1.0 / (1.0 + (l0 - l1).exp());
        let p0 = 1.0 / (1.0 + (l1 - l0).exp());
        [p0, p1]
    }

    pub(super) fn to_floats(&self) -> Vec<f64> {
        let mut v = self.prior.to_vec();
        for c in 0..2 {
            v.extend(&self.mean[c]);
            v.extend(&self.var[c]);
        }
        v
    }

    pub(super) fn from_floats(d: usize, f: &[f64]) -> Option<Self> {
        if f.len() != 2 + 4 * d {
            return None;
        }
        let block = |k: usize| f[2 + k * d..2 + (k + 1) * d].to_vec();
        Some(GaussianNb {
            prior: [f[0], f[1]],
            mean: [block(0), block(2)],
            var: [block(1), block(3)],
        })
    }
}
