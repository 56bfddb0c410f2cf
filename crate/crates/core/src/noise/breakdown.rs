//! Binary symmetric-noise analysis on a 1-D two-Gaussian problem.
//!
//! Clean model: `Y ∈ {0, 1}` with equal priors, `X | Y=1 ~ N(μ, σ²)`,
//! `X | Y=0 ~ N(−μ, σ²)`. The observed label `Z` is `Y` flipped with
//! probability `p`. All risks are integrals against the known densities.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};

/// Posterior under symmetric flips with probability `p`: `(1 − 2p)·η + p`.
/// The map is its own inverse, so it converts clean to noisy and back.
pub fn noisy_posterior(eta: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) || !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "posterior and flip probability must lie in [0, 1], got {eta} and {p}"
        )));
    }
    Ok((1.0 - 2.0 * p) * eta + p)
}

fn flip(eta: f64, p: f64) -> f64 {
    (1.0 - 2.0 * p) * eta + p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Predict 1 when `x > t`.
    Positive,
    /// Predict 1 when `x < t`.
    Negative,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub threshold: f64,
    pub direction: Direction,
}

impl ThresholdClassifier {
    pub fn predict(&self, x: f64) -> usize {
        let above = x > self.threshold;
        match self.direction {
            Direction::Positive => above as usize,
            Direction::Negative => (!above && x != self.threshold) as usize,
        }
    }
}

/// How the threshold classifier is chosen at each `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMethod {
    /// Minimize the 0-1 risk on `n` sampled `(x, z)` pairs.
    Empirical { n: usize, seed: u64 },
    /// Minimize the exact noisy risk.
    Population,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownProblem {
    pub mu: f64,
    pub sigma: f64,
    /// Candidate thresholds; each is paired with both directions.
    pub thresholds: Vec<f64>,
    pub fit: FitMethod,
}

impl Default for BreakdownProblem {
    fn default() -> Self {
        BreakdownProblem {
            mu: 1.0,
            sigma: 1.0,
            thresholds: (-200..=200).map(|i| f64::from(i) / 50.0).collect(),
            fit: FitMethod::Empirical {
                n: 1_000_000,
                seed: 0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub p: f64,
    pub threshold: f64,
    pub direction: Direction,
    pub clean_risk: f64,
    pub noisy_risk: f64,
    pub excess_clean: f64,
    pub excess_noisy: f64,
    /// `(R − R*) − 2(1 − 2p)(R̃ − R̃*)`.
    pub residual: f64,
    /// `(R̃ − ½) − (1 − 2p)(R − ½)`.
    pub residual_exact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub p: f64,
    pub classifier: ThresholdClassifier,
    pub residual: f64,
    pub residual_exact: f64,
}

const GL_ORDER: usize = 20;
const PANELS: usize = 200;
const SPAN_SIGMAS: f64 = 12.0;

fn gl_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            dp = n as f64 * (x * pn - p0) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gl_rule();
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let lo = a + h * k as f64;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

impl BreakdownProblem {
    fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "need finite mu and positive sigma, got {} and {}",
                self.mu, self.sigma
            )));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("threshold grid must be non-empty and finite"));
        }
        if let FitMethod::Empirical { n: 0, .. } = self.fit {
            return Err(Error::invalid("empirical fit needs a positive sample size"));
        }
        Ok(())
    }

    fn density(&self, x: f64, mean: f64) -> f64 {
        let z = (x - mean) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Marginal density of `X`.
    pub fn marginal(&self, x: f64) -> f64 {
        0.5 * (self.density(x, self.mu) + self.density(x, -self.mu))
    }

    /// Clean posterior `P(Y = 1 | X = x)`.
    pub fn posterior(&self, x: f64) -> f64 {
        let a = 2.0 * self.mu * x / (self.sigma * self.sigma);
        1.0 / (1.0 + (-a).exp())
    }

    fn bounds(&self) -> (f64, f64) {
        let r = self.mu.abs() + SPAN_SIGMAS * self.sigma;
        (-r, r)
    }

    fn split_at(&self, t: f64) -> f64 {
        let (lo, hi) = self.bounds();
        t.clamp(lo, hi)
    }

    /// 0-1 risk of `f` against labels with flip probability `p` (`p = 0` is the clean risk).
    pub fn risk(&self, f: &ThresholdClassifier, p: f64) -> f64 {
        let (lo, hi) = self.bounds();
        let t = self.split_at(f.threshold);
        // Left of t the classifier predicts 0 (Positive) or 1 (Negative).
        let err_if_0 = |x: f64| self.marginal(x) * flip(self.posterior(x), p);
        let err_if_1 = |x: f64| self.marginal(x) * (1.0 - flip(self.posterior(x), p));
        match f.direction {
            Direction::Positive => integrate(err_if_0, lo, t) + integrate(err_if_1, t, hi),
            Direction::Negative => integrate(err_if_1, lo, t) + integrate(err_if_0, t, hi),
        }
    }

    /// Bayes risk under flip probability `p`, `∫ m · min(η̃, 1 − η̃)`.
    pub fn bayes_risk(&self, p: f64) -> f64 {
        let (lo, hi) = self.bounds();
        let g = |x: f64| {
            let e = flip(self.posterior(x), p);
            self.marginal(x) * e.min(1.0 - e)
        };
        integrate(g, lo, 0.0) + integrate(g, 0.0, hi)
    }

    pub fn candidates(&self) -> Vec<ThresholdClassifier> {
        [Direction::Positive, Direction::Negative]
            .into_iter()
            .flat_map(|direction| {
                self.thresholds.iter().map(move |&threshold| ThresholdClassifier {
                    threshold,
                    direction,
                })
            })
            .collect()
    }

    /// Candidate with the smallest noisy risk; ties go to the earliest candidate.
    pub fn fit(&self, p: f64) -> ThresholdClassifier {
        let candidates = self.candidates();
        let scores: Vec<f64> = match self.fit {
            FitMethod::Population => candidates.iter().map(|f| self.risk(f, p)).collect(),
            FitMethod::Empirical { n, seed } => self.empirical_risks(&candidates, p, n, seed),
        };
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s < scores[best] {
                best = i;
            }
        }
        candidates[best]
    }

    fn empirical_risks(&self, candidates: &[ThresholdClassifier], p: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::for_stream(seed ^ p.to_bits(), Stream::Breakdown);
        let mut sample: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let y = rng.next_f64() < 0.5;
                let mean = if y { self.mu } else { -self.mu };
                let x = mean + self.sigma * rng.normal();
                let z = y ^ (rng.next_f64() < p);
                (x, z)
            })
            .collect();
        sample.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Cumulative count of z = 1 among the sorted prefix.
        let mut ones_prefix = Vec::with_capacity(n + 1);
        ones_prefix.push(0usize);
        for &(_, z) in &sample {
            ones_prefix.push(ones_prefix.last().unwrap() + z as usize);
        }
        let total_ones = ones_prefix[n];
        candidates
            .iter()
            .map(|f| {
                let left = sample.partition_point(|&(x, _)| x <= f.threshold);
                let ones_left = ones_prefix[left];
                let zeros_left = left - ones_left;
                let ones_right = total_ones - ones_left;
                let zeros_right = (n - left) - ones_right;
                let errors = match f.direction {
                    Direction::Positive => ones_left + zeros_right,
                    Direction::Negative => zeros_left + ones_right,
                };
                errors as f64 / n as f64
            })
            .collect()
    }

    fn row(&self, p: f64, f: ThresholdClassifier, bayes_clean: f64) -> BreakdownRow {
        let clean_risk = self.risk(&f, 0.0);
        let noisy_risk = self.risk(&f, p);
        let excess_clean = clean_risk - bayes_clean;
        let excess_noisy = noisy_risk - self.bayes_risk(p);
        BreakdownRow {
            p,
            threshold: f.threshold,
            direction: f.direction,
            clean_risk,
            noisy_risk,
            excess_clean,
            excess_noisy,
            residual: excess_clean - 2.0 * (1.0 - 2.0 * p) * excess_noisy,
            residual_exact: (noisy_risk - 0.5) - (1.0 - 2.0 * p) * (clean_risk - 0.5),
        }
    }
}

fn check_grid(p_grid: &[f64]) -> Result<()> {
    match p_grid.iter().find(|p| !(0.0..1.0).contains(*p)) {
        Some(p) => Err(Error::invalid(format!("flip probabilities must lie in [0, 1), got {p}"))),
        None => Ok(()),
    }
}

/// Fits a classifier at each `p` and reports its clean and noisy excess risks.
pub fn breakdown_experiment(p_grid: &[f64], problem: &BreakdownProblem) -> Result<Vec<BreakdownRow>> {
    problem.validate()?;
    check_grid(p_grid)?;
    let bayes_clean = problem.bayes_risk(0.0);
    Ok(p_grid
        .par_iter()
        .map(|&p| problem.row(p, problem.fit(p), bayes_clean))
        .collect())
}

/// Identity residuals for fixed classifiers across a grid of `p`.
pub fn identity_residuals(
    p_grid: &[f64],
    classifiers: &[ThresholdClassifier],
    problem: &BreakdownProblem,
) -> Result<Vec<IdentityCheck>> {
    problem.validate()?;
    check_grid(p_grid)?;
    let bayes_clean = problem.bayes_risk(0.0);
    let pairs: Vec<(f64, ThresholdClassifier)> = p_grid
        .iter()
        .flat_map(|&p| classifiers.iter().map(move |&f| (p, f)))
        .collect();
    Ok(pairs
        .par_iter()
        .map(|&(p, f)| {
            let row = problem.row(p, f, bayes_clean);
            IdentityCheck {
                p,
                classifier: f,
                residual: row.residual,
                residual_exact: row.residual_exact,
            }
        })
        .collect())
}

/// The clean risk's maximum over the candidate grid.
pub fn max_clean_risk(problem: &BreakdownProblem) -> f64 {
    problem
        .candidates()
        .iter()
        .map(|f| problem.risk(f, 0.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_cdf(z: f64) -> f64 {
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }

    // Closed form: P(X > t | Y=0) and P(X <= t | Y=1) mixed through the flip.
    fn oracle_risk(pb: &BreakdownProblem, f: &ThresholdClassifier, p: f64) -> f64 {
        let up0 = 1.0 - normal_cdf((f.threshold + pb.mu) / pb.sigma);
        let up1 = 1.0 - normal_cdf((f.threshold - pb.mu) / pb.sigma);
        let (pred1_y0, pred1_y1) = match f.direction {
            Direction::Positive => (up0, up1),
            Direction::Negative => (1.0 - up0, 1.0 - up1),
        };
        let clean = 0.5 * pred1_y0 + 0.5 * (1.0 - pred1_y1);
        p + (1.0 - 2.0 * p) * clean
    }

    fn population() -> BreakdownProblem {
        BreakdownProblem {
            fit: FitMethod::Population,
            ..BreakdownProblem::default()
        }
    }

    #[test]
    fn posterior_examples() {
        assert_eq!(noisy_posterior(0.3, 0.5).unwrap(), 0.5);
        assert_eq!(noisy_posterior(0.42, 0.0).unwrap(), 0.42);
        assert!((noisy_posterior(0.9, 0.2).unwrap() - 0.74).abs() < 1e-15);
        assert!(noisy_posterior(1.1, 0.2).is_err());
        assert!(noisy_posterior(0.5, -0.1).is_err());
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(GL_ORDER);
        for deg in 0..(2 * GL_ORDER) {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((got - want).abs() < 1e-13, "degree {deg}: {got} vs {want}");
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let pb = population();
        for p in [0.0, 0.2, 0.5, 0.8] {
            for t in [-3.1, -0.4, 0.0, 1.7] {
                for direction in [Direction::Positive, Direction::Negative] {
                    let f = ThresholdClassifier { threshold: t, direction };
                    assert!((pb.risk(&f, p) - oracle_risk(&pb, &f, p)).abs() < 1e-12);
                }
            }
        }
        // Bayes risk is Φ(−μ/σ) on clean labels.
        assert!((pb.bayes_risk(0.0) - normal_cdf(-1.0)).abs() < 1e-12);
        assert!((pb.bayes_risk(0.3) - (0.3 + 0.4 * normal_cdf(-1.0))).abs() < 1e-12);
    }

    #[test]
    fn clean_fit_is_bayes() {
        let rows = breakdown_experiment(&[0.0], &population()).unwrap();
        assert_eq!(rows[0].threshold, 0.0);
        assert_eq!(rows[0].direction, Direction::Positive);
        assert!(rows[0].residual.abs() < 1e-9);
        let empirical = breakdown_experiment(&[0.0], &BreakdownProblem::default()).unwrap();
        assert!(empirical[0].threshold.abs() <= 0.1);
        assert_eq!(empirical[0].direction, Direction::Positive);
    }

    #[test]
    fn half_noise_flattens_noisy_risk() {
        let pb = population();
        for f in pb.candidates() {
            assert!((pb.risk(&f, 0.5) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn heavy_noise_flips_the_decision() {
        for pb in [population(), BreakdownProblem::default()] {
            let row = &breakdown_experiment(&[0.7], &pb).unwrap()[0];
            assert_eq!(row.direction, Direction::Negative);
            assert!((row.clean_risk - max_clean_risk(&pb)).abs() < 1e-3);
        }
    }

    #[test]
    fn exact_relation_holds_everywhere() {
        let pb = population();
        let fs: Vec<_> = pb.candidates().into_iter().step_by(37).collect();
        let ps: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        for c in identity_residuals(&ps, &fs, &pb).unwrap() {
            assert!(c.residual_exact.abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(breakdown_experiment(&[1.0], &population()).is_err());
        let bad = BreakdownProblem { sigma: 0.0, ..population() };
        assert!(breakdown_experiment(&[0.1], &bad).is_err());
    }
}
