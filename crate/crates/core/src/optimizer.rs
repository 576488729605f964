//! Rate maximization over the source intensity and the sampling fraction,
//! maximal-distance search and (L, N) sweeps.
//!
//! The objective contains clamps, a min over `x` and a root finder, so the
//! search is derivative-free: a coarse grid over `(mu, p_pe)` followed by
//! shrinking-rectangle refinement around the incumbent.

use rayon::prelude::*;

use crate::channel::{simulate_observables, ChannelModel};
use crate::error::{check, Error, Result};
use crate::keylength::{
    asymptotic_rate, key_length, KeyLengthResult, ProtocolBudget, SecurityBudget, XSearch,
};
use crate::photonics::SourceModel;

/// Everything held fixed while the rate is optimized. The intensity of
/// `source` and the length of `channel` are overwritten per evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setup {
    pub source: SourceModel,
    pub channel: ChannelModel,
    pub security: SecurityBudget,
}

impl Setup {
    /// Fiber, detector and security parameters used throughout the
    /// simulations: 0.2 dB/km, f_EC = 1.16, eta_B = 0.1, e_d = 0.005,
    /// p_d = 6e-7, d_A = 1e-6, eta_A = 0.5, eps_sec = 1e-10, eps_cor = 1e-12.
    pub fn reference() -> Self {
        Self {
            source: SourceModel {
                mu: 0.5,
                eta_a: 0.5,
                dark_a: 1e-6,
            },
            channel: ChannelModel {
                alpha_db_per_km: 0.2,
                length_km: 0.0,
                eta_b: 0.1,
                dark_b: 6e-7,
                misalignment: 0.005,
            },
            security: SecurityBudget {
                eps_sec: 1e-10,
                eps_cor: 1e-12,
                f_ec: 1.16,
            },
        }
    }

    /// Key length at one operating point.
    pub fn evaluate(
        &self,
        mode: RateMode,
        length_km: f64,
        mu: f64,
        p_pe: f64,
        search: &XSearch,
    ) -> Result<KeyLengthResult> {
        let src = self.source.with_mu(mu)?;
        let ch = self.channel.at_length(length_km)?;
        let obs = simulate_observables(&src, &ch)?;
        match mode {
            RateMode::Finite { pulses } => {
                let budget = ProtocolBudget::new(pulses, p_pe, self.security)?;
                key_length(&src, &obs, &budget, search)
            }
            RateMode::Asymptotic => asymptotic_rate(&src, &obs, p_pe, &self.security, search),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMode {
    Finite { pulses: f64 },
    Asymptotic,
}

impl RateMode {
    pub fn pulses(&self) -> Option<f64> {
        match self {
            RateMode::Finite { pulses } => Some(*pulses),
            RateMode::Asymptotic => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RateMode::Finite { .. } => "finite",
            RateMode::Asymptotic => "asymptotic",
        }
    }
}

/// Search box and resolution for [`optimize_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationSpec {
    pub mu_bounds: (f64, f64),
    pub p_pe_bounds: (f64, f64),
    pub mu_points: usize,
    pub p_pe_points: usize,
    pub refine_rounds: usize,
    pub refine_points: usize,
    pub x_search: XSearch,
}

impl OptimizationSpec {
    /// Default box for a heralding detector of efficiency `eta_a`: `mu` stays
    /// 1% below the point where `sum_k sqrt(delta_k p_k)` diverges.
    pub fn for_detector(eta_a: f64) -> Self {
        let mu_max = if eta_a > 0.0 {
            0.99 * (1.0 - eta_a) / eta_a
        } else {
            10.0
        };
        Self {
            mu_bounds: (0.01, mu_max),
            p_pe_bounds: (0.01, 0.99),
            mu_points: 24,
            p_pe_points: 24,
            refine_rounds: 3,
            refine_points: 7,
            x_search: XSearch::default(),
        }
    }

    /// Pins `p_pe` so only `mu` is searched.
    pub fn with_fixed_p_pe(mut self, p_pe: f64) -> Self {
        self.p_pe_bounds = (p_pe, p_pe);
        self
    }

    pub fn validate(&self, eta_a: f64) -> Result<()> {
        let (mu_lo, mu_hi) = self.mu_bounds;
        let (p_lo, p_hi) = self.p_pe_bounds;
        check(mu_lo > 0.0 && mu_lo <= mu_hi, "mu_min", mu_lo, "need 0 < mu_min <= mu_max")?;
        if eta_a > 0.0 {
            let limit = (1.0 - eta_a) / eta_a;
            check(mu_hi < limit, "mu_max", mu_hi, "must stay below (1 - eta_a) / eta_a")?;
        }
        check(p_lo > 0.0 && p_lo <= p_hi && p_hi < 1.0, "p_pe_min", p_lo, "need 0 < p_pe_min <= p_pe_max < 1")?;
        check(self.mu_points >= 1, "mu_points", self.mu_points as f64, "must be at least 1")?;
        check(self.p_pe_points >= 1, "p_pe_points", self.p_pe_points as f64, "must be at least 1")?;
        check(self.refine_points >= 2, "refine_points", self.refine_points as f64, "must be at least 2")?;
        check(
            self.x_search.grid_points >= 2,
            "x_grid_points",
            self.x_search.grid_points as f64,
            "must be at least 2",
        )?;
        Ok(())
    }
}

/// Best operating point found by [`optimize_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimumPoint {
    pub rate: f64,
    pub mu: f64,
    pub p_pe: f64,
    pub result: KeyLengthResult,
    /// Best rate on the coarse grid alone.
    pub coarse_rate: f64,
}

fn axis(bounds: (f64, f64), points: usize) -> (Vec<f64>, f64) {
    let (lo, hi) = bounds;
    if points <= 1 || hi <= lo {
        return (vec![0.5 * (lo + hi)], 0.0);
    }
    let step = (hi - lo) / (points - 1) as f64;
    let values = (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
        .collect();
    (values, step)
}

type Candidate = (f64, f64, Option<KeyLengthResult>);

/// Evaluates every `(mu, p_pe)` pair in parallel; infeasible points score 0.
/// Returns the first strictly best pair in input order.
fn best_of(
    setup: &Setup,
    mode: RateMode,
    length_km: f64,
    points: &[(f64, f64)],
    search: &XSearch,
) -> Option<(usize, KeyLengthResult)> {
    let results: Vec<Option<KeyLengthResult>> = points
        .par_iter()
        .map(|&(mu, p)| setup.evaluate(mode, length_km, mu, p, search).ok())
        .collect();
    let mut best: Option<(usize, KeyLengthResult)> = None;
    for (i, r) in results.into_iter().enumerate() {
        if let Some(r) = r {
            if best.as_ref().is_none_or(|(_, b)| r.rate > b.rate) {
                best = Some((i, r));
            }
        }
    }
    best
}

/// Maximizes the rate over `(mu, p_pe)` at fixed distance and block size.
/// Deterministic for a fixed spec; never returns less than the coarse-grid
/// maximum.
pub fn optimize_rate(
    setup: &Setup,
    length_km: f64,
    mode: RateMode,
    spec: &OptimizationSpec,
) -> Result<OptimumPoint> {
    spec.validate(setup.source.eta_a)?;
    let (mus, mut mu_step) = axis(spec.mu_bounds, spec.mu_points);
    let (pps, mut p_step) = axis(spec.p_pe_bounds, spec.p_pe_points);
    let grid: Vec<(f64, f64)> = mus
        .iter()
        .flat_map(|&m| pps.iter().map(move |&p| (m, p)))
        .collect();

    let (idx, coarse) = best_of(setup, mode, length_km, &grid, &spec.x_search)
        .ok_or(Error::AllVacuous)?;
    if coarse.rate <= 0.0 {
        return Err(Error::AllVacuous);
    }
    let mut best: Candidate = (grid[idx].0, grid[idx].1, Some(coarse));
    let coarse_rate = coarse.rate;

    for _ in 0..spec.refine_rounds {
        let (mu0, p0) = (best.0, best.1);
        let mu_box = (
            (mu0 - mu_step).max(spec.mu_bounds.0),
            (mu0 + mu_step).min(spec.mu_bounds.1),
        );
        let p_box = (
            (p0 - p_step).max(spec.p_pe_bounds.0),
            (p0 + p_step).min(spec.p_pe_bounds.1),
        );
        let (mus, ms) = axis(mu_box, spec.refine_points);
        let (pps, ps) = axis(p_box, if p_step > 0.0 { spec.refine_points } else { 1 });
        let local: Vec<(f64, f64)> = mus
            .iter()
            .flat_map(|&m| pps.iter().map(move |&p| (m, p)))
            .collect();
        if let Some((i, r)) = best_of(setup, mode, length_km, &local, &spec.x_search) {
            let incumbent = best.2.map_or(0.0, |b| b.rate);
            if r.rate > incumbent {
                best = (local[i].0, local[i].1, Some(r));
            }
        }
        mu_step = ms;
        p_step = ps;
    }

    let result = best.2.expect("incumbent always present");
    debug_assert!(result.rate >= coarse_rate);
    Ok(OptimumPoint {
        rate: result.rate,
        mu: best.0,
        p_pe: best.1,
        result,
        coarse_rate,
    })
}

/// Positive-rate test used by the distance searches.
fn has_key(setup: &Setup, length_km: f64, mode: RateMode, spec: &OptimizationSpec) -> Result<bool> {
    match optimize_rate(setup, length_km, mode, spec) {
        Ok(p) => Ok(p.rate > 0.0),
        Err(Error::AllVacuous) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Largest distance with a positive optimized rate: the last positive point
/// of the `step_km` grid on `[0, max_km]`, refined by bisection to 0.1 km.
///
/// The rate is nonincreasing in distance, so the grid point is located by
/// binary search over grid indices instead of a linear scan.
pub fn max_distance(
    setup: &Setup,
    mode: RateMode,
    spec: &OptimizationSpec,
    step_km: f64,
    max_km: f64,
) -> Result<f64> {
    check(step_km > 0.0, "step_km", step_km, "must be positive")?;
    if !has_key(setup, 0.0, mode, spec)? {
        return Ok(0.0);
    }
    let last = (max_km / step_km).floor() as usize;
    if has_key(setup, last as f64 * step_km, mode, spec)? {
        return Ok(last as f64 * step_km);
    }
    // Invariant: index `good` has key, index `bad` does not.
    let (mut good, mut bad) = (0usize, last);
    while bad - good > 1 {
        let mid = good + (bad - good) / 2;
        if has_key(setup, mid as f64 * step_km, mode, spec)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let (mut lo, mut hi) = (good as f64 * step_km, bad as f64 * step_km);
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        if has_key(setup, mid, mode, spec)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Vacuous,
    Failed(String),
}

impl RowStatus {
    pub fn label(&self) -> &str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Vacuous => "vacuous",
            RowStatus::Failed(_) => "failed",
        }
    }
}

/// One (distance, mode) point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub length_km: f64,
    pub mode: RateMode,
    pub optimum: Option<OptimumPoint>,
    pub status: RowStatus,
}

impl SweepRow {
    pub fn rate(&self) -> f64 {
        self.optimum.map_or(0.0, |o| o.rate)
    }
}

/// Optimized rate at every `(L, mode)` pair. Rows are ordered by mode (in
/// the order given) then distance, independent of evaluation order.
pub fn sweep(
    setup: &Setup,
    distances: &[f64],
    modes: &[RateMode],
    spec: &OptimizationSpec,
) -> Vec<SweepRow> {
    let jobs: Vec<(RateMode, f64)> = modes
        .iter()
        .flat_map(|&m| distances.iter().map(move |&l| (m, l)))
        .collect();
    jobs.par_iter()
        .map(|&(mode, length_km)| match optimize_rate(setup, length_km, mode, spec) {
            Ok(o) => SweepRow {
                length_km,
                mode,
                optimum: Some(o),
                status: RowStatus::Ok,
            },
            Err(Error::AllVacuous) => SweepRow {
                length_km,
                mode,
                optimum: None,
                status: RowStatus::Vacuous,
            },
            Err(e) => SweepRow {
                length_km,
                mode,
                optimum: None,
                status: RowStatus::Failed(e.to_string()),
            },
        })
        .collect()
}
