use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discordant-pair count below which the exact binomial test is used.
pub const EXACT_BELOW: u64 = 25;

/// 2×2 agreement table of two classifiers on the same test set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedOutcome {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    pub both_correct: u64,
    pub both_wrong: u64,
}

impl PairedOutcome {
    pub fn total(&self) -> u64 {
        self.b + self.c + self.both_correct + self.both_wrong
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum McNemarMethod {
    NoDisagreement,
    ExactBinomial,
    ChiSquared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Continuity-corrected `(|b − c| − 1)² / (b + c)`; 0 without discordant pairs.
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
    pub outcome: PairedOutcome,
}

/// Survival function of χ² with one degree of freedom.
pub fn chi_square_survival_1df(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}

/// Two-sided exact binomial p-value for `b` successes out of `b + c` at q = 0.5.
pub fn binomial_two_sided(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    // pmf(i+1) = pmf(i)·(n−i)/(i+1), starting from 2⁻ⁿ.
    let mut pmf = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    for i in 0..=k {
        tail += pmf;
        pmf *= (n - i) as f64 / (i + 1) as f64;
    }
    (2.0 * tail).min(1.0)
}

/// McNemar's test from discordant counts.
pub fn mcnemar_from_counts(outcome: PairedOutcome) -> McNemar {
    let (b, c) = (outcome.b, outcome.c);
    let n = b + c;
    if n == 0 {
        return McNemar {
            statistic: 0.0,
            p_value: 1.0,
            method: McNemarMethod::NoDisagreement,
            outcome,
        };
    }
    let diff = ((b as f64 - c as f64).abs() - 1.0).max(0.0);
    let statistic = diff * diff / n as f64;
    let (p_value, method) = if n < EXACT_BELOW {
        (binomial_two_sided(b, c), McNemarMethod::ExactBinomial)
    } else {
        (chi_square_survival_1df(statistic), McNemarMethod::ChiSquared)
    };
    McNemar {
        statistic,
        p_value,
        method,
        outcome,
    }
}

/// McNemar's test on per-example correctness of two classifiers.
pub fn mcnemar_test(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemar> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::invalid(format!(
            "bitmaps cover {} and {} examples",
            correct_a.len(),
            correct_b.len()
        )));
    }
    let mut t = PairedOutcome {
        b: 0,
        c: 0,
        both_correct: 0,
        both_wrong: 0,
    };
    for (&a, &b) in correct_a.iter().zip(correct_b) {
        match (a, b) {
            (true, false) => t.b += 1,
            (false, true) => t.c += 1,
            (true, true) => t.both_correct += 1,
            (false, false) => t.both_wrong += 1,
        }
    }
    Ok(mcnemar_from_counts(t))
}
