use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use super::protocol::RunRecord;
use crate::error::{Error, Result};

/// Discordant totals up to this value use the exact binomial test.
pub const EXACT_LIMIT: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    Exact,
    CorrectedChi2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Both models correct.
    pub n00: u64,
    /// Both models wrong.
    pub n11: u64,
    /// A correct, B wrong.
    pub b: u64,
    /// B correct, A wrong.
    pub c: u64,
    pub method: McNemarMethod,
    pub statistic: Option<f64>,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

/// Rejects the null hypothesis only when `p < alpha`.
pub fn decide_hypothesis(p_value: f64, alpha: f64) -> Decision {
    if p_value < alpha {
        Decision::Reject
    } else {
        Decision::FailToReject
    }
}

/// Two-sided exact p-value `min(1, 2·P[X ≤ min(b, c)])`, `X ~ Bin(b + c, 1/2)`.
pub fn exact_p_value(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n).expect("valid binomial");
    (2.0 * dist.cdf(b.min(c))).min(1.0)
}

/// Continuity-corrected statistic `(|b − c| − 1)² / (b + c)` and its
/// one-degree-of-freedom upper tail.
pub fn corrected_chi2(b: u64, c: u64) -> (f64, f64) {
    let n = (b + c) as f64;
    let d = (b as f64 - c as f64).abs() - 1.0;
    let stat = d.max(0.0).powi(2) / n;
    let p = 1.0 - ChiSquared::new(1.0).expect("valid chi2").cdf(stat);
    (stat, p.clamp(0.0, 1.0))
}

pub fn mcnemar_counts(n00: u64, n11: u64, b: u64, c: u64) -> McNemarResult {
    let (method, statistic, p_value) = if b + c <= EXACT_LIMIT {
        (McNemarMethod::Exact, None, exact_p_value(b, c))
    } else {
        let (s, p) = corrected_chi2(b, c);
        (McNemarMethod::CorrectedChi2, Some(s), p)
    };
    McNemarResult {
        n00,
        n11,
        b,
        c,
        method,
        statistic,
        p_value,
    }
}

type Key<'a> = (usize, usize, &'a str);

fn correctness(records: &[RunRecord]) -> Result<BTreeMap<Key<'_>, bool>> {
    let mut out = BTreeMap::new();
    for r in records {
        for i in &r.instances {
            if out.insert((r.repeat, r.fold, i.id.as_str()), i.gold == i.predicted).is_some() {
                return Err(Error::data(
                    format!("run {}-{}", r.repeat, r.fold),
                    format!("instance `{}` recorded twice", i.id),
                ));
            }
        }
    }
    Ok(out)
}

/// Pools per-instance correctness over every run the two record sets share.
pub fn mcnemar(a: &[RunRecord], b: &[RunRecord]) -> Result<McNemarResult> {
    let ca = correctness(a)?;
    let cb = correctness(b)?;
    if ca.len() != cb.len() || ca.keys().ne(cb.keys()) {
        let missing = ca
            .keys()
            .find(|k| !cb.contains_key(*k))
            .or_else(|| cb.keys().find(|k| !ca.contains_key(*k)));
        return Err(Error::data(
            "mcnemar",
            match missing {
                Some((r, f, id)) => format!("coverage mismatch at run {r}-{f}, instance `{id}`"),
                None => "coverage mismatch".to_string(),
            },
        ));
    }
    let (mut n00, mut n11, mut bb, mut cc) = (0, 0, 0, 0);
    for (k, &x) in &ca {
        match (x, cb[k]) {
            (true, true) => n00 += 1,
            (false, false) => n11 += 1,
            (true, false) => bb += 1,
            (false, true) => cc += 1,
        }
    }
    Ok(mcnemar_counts(n00, n11, bb, cc))
}

/// One test per (repeat, fold) cell, in plan order.
pub fn mcnemar_per_run(a: &[RunRecord], b: &[RunRecord]) -> Result<Vec<((usize, usize), McNemarResult)>> {
    let mut out = Vec::new();
    for ra in a {
        let rb = b
            .iter()
            .find(|r| r.repeat == ra.repeat && r.fold == ra.fold)
            .ok_or_else(|| Error::data("mcnemar", format!("run {}-{} missing", ra.repeat, ra.fold)))?;
        out.push((
            (ra.repeat, ra.fold),
            mcnemar(std::slice::from_ref(ra), std::slice::from_ref(rb))?,
        ));
    }
    Ok(out)
}
