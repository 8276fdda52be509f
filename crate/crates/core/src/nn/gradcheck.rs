use rand::seq::index::sample;

use super::network::{Inputs, Mode, Network};
use crate::error::Result;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Entries checked per parameter tensor; larger tensors are sampled.
    pub max_per_param: usize,
    /// Floor on the denominator of the relative error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            max_per_param: 64,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries skipped because a ReLU or max-pool branch flipped within ±h.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

/// Compares backprop gradients with central finite differences.
///
/// Runs in train mode with the dropout stream reseeded before every pass so
/// all passes share one mask.
pub fn check_gradients(
    net: &mut Network,
    inputs: &Inputs,
    targets: &[f64],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let prev_mode = net.mode();
    net.set_mode(Mode::Train);
    let mask_seed = cfg.seed ^ 0x9e37_79b9;
    net.reseed(mask_seed);
    net.forward(inputs)?;
    let base_sig = net.activation_signature();
    let grads = net.backward(targets)?;

    let mut rng = rng_from_seed(cfg.seed);
    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for pi in 0..net.params.len() {
        if net.params[pi].frozen {
            continue;
        }
        let len = net.params[pi].value.len();
        let entries: Vec<usize> = if len <= cfg.max_per_param {
            (0..len).collect()
        } else {
            let mut e = sample(&mut rng, len, cfg.max_per_param).into_vec();
            e.sort_unstable();
            e
        };
        for k in entries {
            let orig = net.params[pi].value.data()[k];
            let probe = |delta: f64, net: &mut Network| -> Result<(f64, u64)> {
                net.params[pi].value.data_mut()[k] = orig + delta;
                net.reseed(mask_seed);
                net.forward(inputs)?;
                Ok((net.loss(targets)?, net.activation_signature()))
            };
            let (lp, sp) = probe(cfg.h, net)?;
            let (lm, sm) = probe(-cfg.h, net)?;
            net.params[pi].value.data_mut()[k] = orig;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * cfg.h);
            let analytic = grads.grads[pi].data()[k];
            let rel = (analytic - numeric).abs()
                / analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((net.params[pi].name.clone(), k));
            }
        }
    }
    net.set_mode(prev_mode);
    Ok(report)
}
