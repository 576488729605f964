//! Statistical ground truth for the sampling bounds: exact hypergeometric
//! tails and seeded Monte Carlo sampling-without-replacement experiments.
//!
//! Every trial draws from its own ChaCha8 stream, keyed by `(seed, trial)`,
//! so results replay bit-for-bit regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::decoy_bounds::serfling_xi;
use crate::error::{check, Result};
use crate::phase_error::{phase_error_bound, PhaseErrorInputs};

/// Identifier of the per-trial random stream, printed in reports.
pub const RNG_ALGORITHM: &str =
    "rand_chacha::ChaCha8Rng seed_from_u64(seed), stream = trial index; \
     hypergeometric by exact inverse CDF, binomial by rand_distr::Binomial";

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Support of the hypergeometric law and the ratio of consecutive masses.
struct Hypergeom {
    pop: u64,
    marked: u64,
    draw: u64,
}

impl Hypergeom {
    fn new(pop: u64, marked: u64, draw: u64) -> Result<Self> {
        check(marked <= pop, "marked", marked as f64, "must not exceed the population")?;
        check(draw <= pop, "draw", draw as f64, "must not exceed the population")?;
        Ok(Self { pop, marked, draw })
    }

    fn support(&self) -> (u64, u64) {
        let lo = (self.draw + self.marked).saturating_sub(self.pop);
        (lo, self.draw.min(self.marked))
    }

    fn mode(&self) -> u64 {
        let (lo, hi) = self.support();
        let m = (self.draw as u128 + 1) * (self.marked as u128 + 1) / (self.pop as u128 + 2);
        (m as u64).clamp(lo, hi)
    }

    /// `pmf(k + 1) / pmf(k)`.
    fn up_ratio(&self, k: u64) -> f64 {
        let (n, m, d, k) = (self.pop as f64, self.marked as f64, self.draw as f64, k as f64);
        (m - k) * (d - k) / ((k + 1.0) * (n - m - d + k + 1.0))
    }

    /// Cumulative distribution over the support, built from the mode with
    /// the ratio recurrence. Entry `i` is `P[X <= lo + i]`.
    fn cdf(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        let mode = self.mode();
        let mut mass = vec![0.0; (hi - lo + 1) as usize];
        let mut w = 1.0;
        for k in mode..=hi {
            mass[(k - lo) as usize] = w;
            w *= self.up_ratio(k);
        }
        let mut w = 1.0;
        for k in (lo..mode).rev() {
            w /= self.up_ratio(k);
            mass[(k - lo) as usize] = w;
        }
        let total: f64 = mass.iter().sum();
        let mut acc = 0.0;
        for m in mass.iter_mut() {
            acc += *m / total;
            *m = acc;
        }
        mass
    }
}

/// Draws from a hypergeometric law by inverting a precomputed CDF.
struct HypergeomSampler {
    lo: u64,
    cdf: Vec<f64>,
}

impl HypergeomSampler {
    fn new(h: &Hypergeom) -> Self {
        Self {
            lo: h.support().0,
            cdf: h.cdf(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.lo + i as u64
    }
}

/// `P[X >= threshold]` for `X` the marked count in a uniform draw without
/// replacement.
///
/// Masses are built relative to the mode with the ratio recurrence and
/// normalized by their own total, so no factorials are evaluated and the
/// result is exact up to accumulated rounding (a few ulps per term).
pub fn hypergeom_tail(pop: u64, marked: u64, draw: u64, threshold: u64) -> Result<f64> {
    let h = Hypergeom::new(pop, marked, draw)?;
    let (lo, hi) = h.support();
    let start = threshold.max(lo);
    if start > hi {
        return Ok(0.0);
    }
    if start == lo {
        return Ok(1.0);
    }
    let mode = h.mode();
    let (mut tail, mut total) = (0.0, 0.0);
    let mut w = 1.0;
    for k in mode..=hi {
        if k >= start {
            tail += w;
        }
        total += w;
        w *= h.up_ratio(k);
        if w == 0.0 {
            break;
        }
    }
    let mut w = 1.0;
    for k in (lo..mode).rev() {
        w /= h.up_ratio(k);
        if w == 0.0 {
            break;
        }
        if k >= start {
            tail += w;
        }
        total += w;
    }
    Ok((tail / total).min(1.0))
}

/// The same tail computed from the top of the support downward with log
/// weights and a log-sum-exp normalization; an independent cross-check of
/// [`hypergeom_tail`].
pub fn hypergeom_tail_backward(pop: u64, marked: u64, draw: u64, threshold: u64) -> Result<f64> {
    let h = Hypergeom::new(pop, marked, draw)?;
    let (lo, hi) = h.support();
    let start = threshold.max(lo);
    if start > hi {
        return Ok(0.0);
    }
    if start == lo {
        return Ok(1.0);
    }
    let mut logs = Vec::with_capacity((hi - lo + 1) as usize);
    let mut lw = 0.0;
    logs.push(lw);
    for k in (lo..hi).rev() {
        lw -= h.up_ratio(k).ln();
        logs.push(lw);
    }
    // logs[j] is the log weight of k = hi - j.
    let log_sum = |ws: &[f64]| {
        let top = ws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + ws.iter().map(|w| (w - top).exp()).sum::<f64>().ln()
    };
    let split = (hi - start + 1) as usize;
    Ok((log_sum(&logs[..split]) - log_sum(&logs)).exp().min(1.0))
}

/// Outcome of a Monte Carlo check: `violations` out of `trials`, compared
/// against the claimed failure probability `bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub trials: u64,
    pub violations: u64,
    pub bound: f64,
}

impl CheckReport {
    pub fn frequency(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.violations as f64 / self.trials as f64
        }
    }

    /// Upper end of the 95% Wilson score interval for the violation rate.
    pub fn upper_confidence(&self) -> f64 {
        if self.trials == 0 {
            return 1.0;
        }
        let z = 1.959_963_984_540_054_f64;
        let n = self.trials as f64;
        let p = self.frequency();
        let centre = p + z * z / (2.0 * n);
        let spread = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
        ((centre + spread) / (1.0 + z * z / n)).min(1.0)
    }

    pub fn passed(&self) -> bool {
        self.frequency() <= self.bound
    }
}

/// Splits a population of `code + sample` items, `floor(total * fraction)`
/// of them erroneous, into a random sample of `sample` items and a code part
/// of `code` items. A trial violates the phase-error bound when the code
/// part's error fraction exceeds the bound computed from the sample.
pub fn check_lemma3(
    code: u64,
    sample: u64,
    fraction: f64,
    eps_sec: f64,
    trials: u64,
    seed: u64,
) -> Result<CheckReport> {
    check((0.0..=1.0).contains(&fraction), "fraction", fraction, "must lie in [0, 1]")?;
    check(sample > 0, "sample", 0.0, "must be positive")?;
    let report = |violations| CheckReport {
        trials,
        violations,
        bound: eps_sec,
    };
    let total = code + sample;
    let marked = ((total as f64) * fraction).floor() as u64;
    if code == 0 || marked == 0 {
        return Ok(report(0));
    }

    // The bound depends on the trial only through the observed count.
    let max_c = sample.min(marked);
    let mut bound_for_count = Vec::with_capacity(max_c as usize + 1);
    for c in 0..=max_c {
        let observed = c as f64 / sample as f64;
        let bound = if observed > 0.5 {
            0.5
        } else {
            phase_error_bound(&PhaseErrorInputs::new(
                code as f64,
                sample as f64,
                observed,
                eps_sec,
            )?)?
        };
        bound_for_count.push(bound);
    }

    let dist = HypergeomSampler::new(&Hypergeom::new(total, marked, sample)?);
    let mut violations = 0;
    for t in 0..trials {
        let c = dist.sample(&mut trial_rng(seed, t));
        let code_errors = (marked - c) as f64 / code as f64;
        if code_errors > bound_for_count[c as usize] {
            violations += 1;
        }
    }
    Ok(report(violations))
}

/// Gives each of `n1 + n2` items an independent outcome with probability
/// `rate`, splits them at random into parts of sizes `n1` and `n2`, and
/// counts how often `|mean_1 - mean_2| / 2` exceeds `xi(eps, n1, n2)`.
///
/// For independent outcomes a uniformly random split leaves the two parts'
/// counts independent binomials, so those are drawn directly.
pub fn check_lemma4(
    n1: u64,
    n2: u64,
    rate: f64,
    eps: f64,
    trials: u64,
    seed: u64,
) -> Result<CheckReport> {
    check(n1 > 0, "n1", 0.0, "must be positive")?;
    check(n2 > 0, "n2", 0.0, "must be positive")?;
    check((0.0..=1.0).contains(&rate), "rate", rate, "must lie in [0, 1]")?;
    check(eps > 0.0 && eps <= 1.0, "eps", eps, "must lie in (0, 1]")?;
    let xi = serfling_xi(eps, n1 as f64, n2 as f64);
    let first = Binomial::new(n1, rate).expect("validated parameters");
    let second = Binomial::new(n2, rate).expect("validated parameters");
    let mut violations = 0;
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let mean1 = first.sample(&mut rng) as f64 / n1 as f64;
        let mean2 = second.sample(&mut rng) as f64 / n2 as f64;
        if (mean1 - mean2).abs() / 2.0 > xi {
            violations += 1;
        }
    }
    Ok(CheckReport {
        trials,
        violations,
        bound: eps,
    })
}

/// One row of the verification suite.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub check: &'static str,
    pub first: u64,
    pub second: u64,
    pub rate: f64,
    pub eps: f64,
    pub report: CheckReport,
}

/// The standard grid: the Serfling check on `(n1, n2)` in
/// `{1e2, 1e3, 1e4}^2` with outcome rate 0.1 and `eps` in `{0.1, 0.01}`,
/// and the phase-error check at `n = l = 500`, fraction 0.03,
/// `eps_sec = 1e-3`.
pub fn verify_suite(seed: u64, trials: u64) -> Result<Vec<VerifyRow>> {
    let sizes = [100u64, 1_000, 10_000];
    let mut rows = Vec::new();
    for &eps in &[0.1, 0.01] {
        for &n1 in &sizes {
            for &n2 in &sizes {
                rows.push(VerifyRow {
                    check: "lemma4",
                    first: n1,
                    second: n2,
                    rate: 0.1,
                    eps,
                    report: check_lemma4(n1, n2, 0.1, eps, trials, seed)?,
                });
            }
        }
    }
    rows.push(VerifyRow {
        check: "lemma3",
        first: 500,
        second: 500,
        rate: 0.03,
        eps: 1e-3,
        report: check_lemma3(500, 500, 0.03, 1e-3, trials, seed)?,
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tail_edges() {
        assert_eq!(hypergeom_tail(100, 10, 20, 0).unwrap(), 1.0);
        assert_eq!(hypergeom_tail(100, 10, 20, 11).unwrap(), 0.0);
        assert_eq!(hypergeom_tail(100, 30, 5, 6).unwrap(), 0.0);
        assert!(hypergeom_tail(10, 11, 5, 1).is_err());
    }

    #[test]
    fn tail_matches_brute_force_enumeration() {
        // Count subsets of a 12-item population with 5 marked items.
        let (pop, marked, draw) = (12u32, 5u32, 6u32);
        let mut counts = [0u64; 7];
        let mut subsets = 0u64;
        for mask in 0u32..(1 << pop) {
            if mask.count_ones() == draw {
                subsets += 1;
                counts[(mask & ((1 << marked) - 1)).count_ones() as usize] += 1;
            }
        }
        for t in 0..=6u64 {
            let exact: u64 = counts[t as usize..].iter().sum();
            let expected = exact as f64 / subsets as f64;
            let got = hypergeom_tail(pop as u64, marked as u64, draw as u64, t).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn forward_and_backward_agree() {
        for &(n, m, d, t) in &[
            (100u64, 10u64, 20u64, 5u64),
            (1000, 30, 500, 20),
            (20_000, 2_000, 10_000, 1_050),
            (1000, 500, 500, 260),
        ] {
            let f = hypergeom_tail(n, m, d, t).unwrap();
            let b = hypergeom_tail_backward(n, m, d, t).unwrap();
            assert!((f - b).abs() <= 1e-12 * f.max(1e-300), "{n} {m} {d} {t}: {f} vs {b}");
        }
    }

    #[test]
    fn sampler_reproduces_the_law() {
        let h = Hypergeom::new(1000, 30, 500).unwrap();
        let sampler = HypergeomSampler::new(&h);
        let mut counts = vec![0u64; 31];
        let draws = 200_000u64;
        for t in 0..draws {
            counts[sampler.sample(&mut trial_rng(9, t)) as usize] += 1;
        }
        // Compare the empirical tail with the exact one at every threshold.
        let mut above = draws;
        for k in 0..=30u64 {
            let exact = hypergeom_tail(1000, 30, 500, k).unwrap();
            let freq = above as f64 / draws as f64;
            let sd = (exact * (1.0 - exact) / draws as f64).sqrt();
            assert!((freq - exact).abs() <= 5.0 * sd + 1e-12, "k = {k}: {freq} vs {exact}");
            above -= counts[k as usize];
        }
    }

    #[test]
    fn lemma3_degenerate_cases() {
        assert_eq!(check_lemma3(500, 500, 0.0, 1e-3, 1000, 1).unwrap().violations, 0);
        assert_eq!(check_lemma3(0, 1000, 0.03, 1e-3, 1000, 1).unwrap().violations, 0);
    }

    #[test]
    fn lemma4_degenerate_cases() {
        for rate in [0.0, 1.0] {
            let r = check_lemma4(100, 300, rate, 0.01, 2000, 7).unwrap();
            assert_eq!(r.violations, 0);
        }
        let r = check_lemma4(1000, 1000, 0.3, 1.0, 2000, 7).unwrap();
        assert!(r.frequency() > 0.9);
    }

    #[test]
    fn reproducible_for_seed() {
        let a = check_lemma4(100, 1000, 0.1, 0.1, 5000, 42).unwrap();
        let b = check_lemma4(100, 1000, 0.1, 0.1, 5000, 42).unwrap();
        assert_eq!(a, b);
        let a = check_lemma3(200, 100, 0.1, 0.5, 5000, 9).unwrap();
        let b = check_lemma3(200, 100, 0.1, 0.5, 5000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wilson_interval_contains_frequency() {
        let r = CheckReport {
            trials: 1000,
            violations: 10,
            bound: 0.05,
        };
        assert!(r.upper_confidence() > r.frequency());
        assert!(r.upper_confidence() < 0.02);
        assert!(r.passed());
    }
}
