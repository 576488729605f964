//! Photon-number statistics of a heralded SPDC source.
//!
//! The source emits thermal statistics `p_n = mu^n / (1 + mu)^(n + 1)`. One
//! mode is measured by a threshold detector with efficiency `eta_a` and dark
//! count probability `dark_a`; a pulse carrying `n` photons triggers it with
//! probability `gamma_n = 1 - (1 - dark_a)(1 - eta_a)^n`.

use crate::error::{check, Error, Result};

/// Default relative tolerance for truncated series.
pub const DEFAULT_REL_TOL: f64 = 1e-14;
/// Default cap on the number of series terms.
pub const DEFAULT_MAX_TERMS: usize = 10_000;

/// SPDC intensity and heralding detector parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    pub mu: f64,
    pub eta_a: f64,
    pub dark_a: f64,
}

impl SourceModel {
    pub fn new(mu: f64, eta_a: f64, dark_a: f64) -> Result<Self> {
        check(mu.is_finite() && mu > 0.0, "mu", mu, "must be positive")?;
        check((0.0..=1.0).contains(&eta_a), "eta_a", eta_a, "must lie in [0, 1]")?;
        check((0.0..1.0).contains(&dark_a), "dark_a", dark_a, "must lie in [0, 1)")?;
        Ok(Self { mu, eta_a, dark_a })
    }

    /// Same heralding detector, different intensity.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(mu, self.eta_a, self.dark_a)
    }

    /// `p_n`, the probability that the pair source emits `n` photons per mode.
    pub fn photon_prob(&self, n: usize) -> f64 {
        let base = 1.0 / (1.0 + self.mu);
        base * (self.mu * base).powi(n as i32)
    }

    /// `gamma_n`, the probability that the heralding detector fires.
    pub fn trigger_prob(&self, n: usize) -> f64 {
        if n == 0 {
            return self.dark_a;
        }
        if self.eta_a == 1.0 {
            return 1.0;
        }
        -((-self.dark_a).ln_1p() + n as f64 * (-self.eta_a).ln_1p()).exp_m1()
    }

    /// `1 - gamma_n`, evaluated without cancellation.
    pub fn no_trigger_prob(&self, n: usize) -> f64 {
        (1.0 - self.dark_a) * (1.0 - self.eta_a).powi(n as i32)
    }

    /// `delta_n = gamma_n / (1 - gamma_n)`.
    pub fn delta(&self, n: usize) -> Result<f64> {
        let miss = self.no_trigger_prob(n);
        if miss <= 0.0 {
            return Err(Error::DegenerateDetector { n });
        }
        Ok((1.0 - miss) / miss)
    }

    /// Asymptotic ratio `mu / (1 + mu)` of consecutive `p_n`.
    pub fn photon_ratio(&self) -> f64 {
        self.mu / (1.0 + self.mu)
    }

    /// Asymptotic ratio of consecutive `delta_n p_n` terms,
    /// `mu / ((1 + mu)(1 - eta_a))`. Infinite for a perfect detector.
    pub fn delta_p_ratio(&self) -> f64 {
        if self.eta_a >= 1.0 {
            f64::INFINITY
        } else {
            self.photon_ratio() / (1.0 - self.eta_a)
        }
    }

    /// `delta_n p_n` in product form, finite even where `1 - gamma_n`
    /// underflows.
    pub fn delta_p(&self, n: usize) -> f64 {
        if n == 0 {
            return self.dark_a / ((1.0 - self.dark_a) * (1.0 + self.mu));
        }
        let ratio = self.delta_p_ratio();
        let gamma = self.trigger_prob(n);
        gamma * ratio.powi(n as i32) / ((1.0 + self.mu) * (1.0 - self.dark_a))
    }
}

/// A truncated series value and the number of terms it consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    pub terms: usize,
}

/// Truncation policy for nonnegative, eventually geometric series.
///
/// After `min_terms` terms the tail is bounded by `|t_n| r / (1 - r)` where
/// `r` is the larger of the observed ratio `|t_n / t_(n-1)|` and the supplied
/// asymptotic `ratio_bound`. Summation stops once that bound drops below
/// `rel_tol * |partial sum|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Series {
    pub rel_tol: f64,
    pub max_terms: usize,
    pub min_terms: usize,
    pub ratio_bound: f64,
}

impl Default for Series {
    fn default() -> Self {
        Self::new(DEFAULT_REL_TOL)
    }
}

impl Series {
    pub fn new(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            max_terms: DEFAULT_MAX_TERMS,
            min_terms: 8,
            ratio_bound: 0.0,
        }
    }

    pub fn ratio_bound(mut self, ratio: f64) -> Self {
        self.ratio_bound = ratio;
        self
    }

    pub fn max_terms(mut self, cap: usize) -> Self {
        self.max_terms = cap;
        self
    }

    pub fn sum<F: FnMut(usize) -> f64>(&self, mut term: F) -> Result<SeriesSum> {
        let mut total = 0.0;
        let mut prev: Option<f64> = None;
        for n in 0..self.max_terms {
            let t = term(n);
            total += t;
            if n + 1 >= self.min_terms {
                let observed = match prev {
                    Some(p) if p != 0.0 => (t / p).abs(),
                    Some(_) if t == 0.0 => 0.0,
                    _ => f64::INFINITY,
                };
                let rho = observed.max(self.ratio_bound);
                if rho < 1.0 && t.abs() * rho / (1.0 - rho) <= self.rel_tol * total.abs() {
                    return Ok(SeriesSum {
                        value: total,
                        terms: n + 1,
                    });
                }
            }
            prev = Some(t);
        }
        Err(Error::NoConvergence {
            cap: self.max_terms,
        })
    }
}

/// Sums `term(0) + term(1) + ...` with the default cap and no ratio hint.
pub fn series_sum<F: FnMut(usize) -> f64>(term: F, rel_tol: f64) -> Result<SeriesSum> {
    Series::new(rel_tol).sum(term)
}

/// `sum_k sqrt(delta_k p_k)`, the source-dependent factor of the aggregate
/// fluctuation term. Diverges unless `mu / ((1 + mu)(1 - eta_a)) < 1`.
pub fn sqrt_delta_p_sum(src: &SourceModel, rel_tol: f64) -> Result<f64> {
    let ratio = src.delta_p_ratio();
    if ratio >= 1.0 {
        return Err(Error::DivergentSeries { ratio });
    }
    Series::new(rel_tol)
        .ratio_bound(ratio.sqrt())
        .sum(|k| src.delta_p(k).sqrt())
        .map(|s| s.value)
}
