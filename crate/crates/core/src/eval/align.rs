//! Edit-distance scoring of recognized label sequences.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use crate::error::{Error, Result};
use crate::hmm::Transcript;

/// Edit costs. A match costs nothing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EditCosts {
    pub substitution: f64,
    pub insertion: f64,
    pub deletion: f64,
}

impl EditCosts {
    pub const UNIT: EditCosts = EditCosts {
        substitution: 1.0,
        insertion: 1.0,
        deletion: 1.0,
    };
    /// The weights used by HTK's scoring tool.
    pub const HTK: EditCosts = EditCosts {
        substitution: 10.0,
        insertion: 7.0,
        deletion: 7.0,
    };
}

impl Default for EditCosts {
    fn default() -> Self {
        Self::UNIT
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AlignmentStats {
    pub n: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl AlignmentStats {
    pub fn hits(&self) -> usize {
        self.n - self.deletions - self.substitutions
    }

    /// `(N - D - S) / N` in percent.
    pub fn correctness(&self) -> f64 {
        100.0 * self.hits() as f64 / self.n as f64
    }

    /// `(N - D - S - I) / N` in percent.
    pub fn accuracy(&self) -> f64 {
        100.0 * (self.hits() as f64 - self.insertions as f64) / self.n as f64
    }
}

impl AddAssign for AlignmentStats {
    fn add_assign(&mut self, o: Self) {
        self.n += o.n;
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlignOp {
    Match(String),
    Substitute { reference: String, hypothesis: String },
    Delete(String),
    Insert(String),
}

/// Minimum-cost alignment; among equal costs the one with the fewest insertions plus
/// deletions wins, then substitution is preferred while tracing back.
pub fn align(reference: &Transcript, hypothesis: &Transcript, costs: &EditCosts) -> Vec<AlignOp> {
    let r = &reference.labels;
    let h = &hypothesis.labels;
    let (n, m) = (r.len(), h.len());
    let w = m + 1;
    // (cost, insertions + deletions)
    let mut dp = vec![(0.0f64, 0usize); (n + 1) * w];
    for i in 1..=n {
        dp[i * w] = (i as f64 * costs.deletion, i);
    }
    for j in 1..=m {
        dp[j] = (j as f64 * costs.insertion, j);
    }
    let better = |a: (f64, usize), b: (f64, usize)| a.0 < b.0 - 1e-9 || ((a.0 - b.0).abs() <= 1e-9 && a.1 < b.1);
    for i in 1..=n {
        for j in 1..=m {
            let diag = dp[(i - 1) * w + j - 1];
            let mut best = if r[i - 1] == h[j - 1] { diag } else { (diag.0 + costs.substitution, diag.1) };
            let del = dp[(i - 1) * w + j];
            let del = (del.0 + costs.deletion, del.1 + 1);
            if better(del, best) {
                best = del;
            }
            let ins = dp[i * w + j - 1];
            let ins = (ins.0 + costs.insertion, ins.1 + 1);
            if better(ins, best) {
                best = ins;
            }
            dp[i * w + j] = best;
        }
    }
    let same = |a: (f64, usize), b: (f64, usize)| (a.0 - b.0).abs() <= 1e-9 && a.1 == b.1;
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * w + j - 1];
            let matched = r[i - 1] == h[j - 1];
            let step = if matched { diag } else { (diag.0 + costs.substitution, diag.1) };
            if same(step, here) {
                ops.push(if matched {
                    AlignOp::Match(r[i - 1].clone())
                } else {
                    AlignOp::Substitute {
                        reference: r[i - 1].clone(),
                        hypothesis: h[j - 1].clone(),
                    }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 {
            let del = dp[(i - 1) * w + j];
            if same((del.0 + costs.deletion, del.1 + 1), here) {
                ops.push(AlignOp::Delete(r[i - 1].clone()));
                i -= 1;
                continue;
            }
        }
        ops.push(AlignOp::Insert(h[j - 1].clone()));
        j -= 1;
    }
    ops.reverse();
    ops
}

pub fn stats_of(ops: &[AlignOp]) -> AlignmentStats {
    let mut s = AlignmentStats::default();
    for op in ops {
        match op {
            AlignOp::Match(_) => s.n += 1,
            AlignOp::Substitute { .. } => {
                s.n += 1;
                s.substitutions += 1;
            }
            AlignOp::Delete(_) => {
                s.n += 1;
                s.deletions += 1;
            }
            AlignOp::Insert(_) => s.insertions += 1,
        }
    }
    s
}

/// Unit-cost alignment statistics of `hypothesis` against `reference`.
pub fn align_score(reference: &Transcript, hypothesis: &Transcript) -> Result<AlignmentStats> {
    align_score_with(reference, hypothesis, &EditCosts::UNIT)
}

pub fn align_score_with(reference: &Transcript, hypothesis: &Transcript, costs: &EditCosts) -> Result<AlignmentStats> {
    if reference.is_empty() {
        return Err(Error::invalid("empty reference transcript"));
    }
    Ok(stats_of(&align(reference, hypothesis, costs)))
}

/// Counts of `(reference, hypothesis)` label pairs over aligned positions, matches
/// included; deletions pair with `"-"` as hypothesis and insertions with `"-"` as
/// reference.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubstitutionTable {
    pub counts: BTreeMap<(String, String), usize>,
}

pub const GAP: &str = "-";

impl SubstitutionTable {
    pub fn add(&mut self, ops: &[AlignOp]) {
        for op in ops {
            let key = match op {
                AlignOp::Match(l) => (l.clone(), l.clone()),
                AlignOp::Substitute { reference, hypothesis } => (reference.clone(), hypothesis.clone()),
                AlignOp::Delete(l) => (l.clone(), GAP.to_string()),
                AlignOp::Insert(l) => (GAP.to_string(), l.clone()),
            };
            *self.counts.entry(key).or_default() += 1;
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("reference,hypothesis,count\n");
        for ((r, h), c) in &self.counts {
            out.push_str(&format!("{r},{h},{c}\n"));
        }
        out
    }
}
