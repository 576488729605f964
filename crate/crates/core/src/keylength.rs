//! Secret key lengths from triggered events only (`ell_T`) and from
//! triggered plus nontriggered events (`ell_B`), and the resulting rate
//! `R = ell / (2N)`.
//!
//! Both lengths are minimized over the unknown vacuum ratio `x`; the final
//! length is the larger of the two. The asymptotic reference is the same
//! chain with every fluctuation term, every log penalty and the phase-error
//! inflation removed.

use crate::channel::Observables;
use crate::decoy_bounds::{DecoyEstimator, SampleBudget, SinglePhotonBounds};
use crate::error::{check, Error, Result};
use crate::phase_error::{phase_error_bound, PhaseErrorInputs};
use crate::photonics::SourceModel;

/// Secrecy, correctness and error-correction inefficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityBudget {
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f_ec: f64,
}

impl SecurityBudget {
    pub fn new(eps_sec: f64, eps_cor: f64, f_ec: f64) -> Result<Self> {
        check(eps_sec > 0.0 && eps_sec < 1.0, "eps_sec", eps_sec, "must lie in (0, 1)")?;
        check(eps_cor > 0.0 && eps_cor < 1.0, "eps_cor", eps_cor, "must lie in (0, 1)")?;
        check(f_ec >= 1.0, "f_ec", f_ec, "must be at least 1")?;
        Ok(Self {
            eps_sec,
            eps_cor,
            f_ec,
        })
    }
}

/// Finite-size and security accounting for one run of the protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolBudget {
    pub pulses: f64,
    pub p_pe: f64,
    pub security: SecurityBudget,
}

impl ProtocolBudget {
    pub fn new(pulses: f64, p_pe: f64, security: SecurityBudget) -> Result<Self> {
        check(pulses >= 1.0, "pulses", pulses, "must be at least 1")?;
        check(p_pe > 0.0 && p_pe < 1.0, "p_pe", p_pe, "must lie in (0, 1)")?;
        Ok(Self {
            pulses,
            p_pe,
            security,
        })
    }

    /// Pulses left for key generation, `N (1 - p_pe)`.
    pub fn key_pulses(&self) -> f64 {
        self.pulses * (1.0 - self.p_pe)
    }

    /// The estimation budget used by `scheme`: `eps_pe = eps_sec / 10` for
    /// triggered-only keys and `eps_sec / 15` for the combined key.
    pub fn sample_budget(&self, scheme: Scheme) -> Result<SampleBudget> {
        SampleBudget::new(
            self.pulses,
            self.p_pe,
            self.security.eps_sec / scheme.eps_divisor(),
        )
    }
}

/// Which events feed the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Triggered events only.
    Triggered,
    /// Triggered and nontriggered events, privacy-amplified together.
    Both,
}

impl Scheme {
    fn eps_divisor(self) -> f64 {
        match self {
            Scheme::Triggered => 10.0,
            Scheme::Both => 15.0,
        }
    }

    /// Bits lost to the composable-security bookkeeping.
    pub fn penalty(self, sec: &SecurityBudget) -> f64 {
        match self {
            Scheme::Triggered => {
                6.0 * (10.0 / sec.eps_sec).log2() + (2.0 / sec.eps_cor).log2()
            }
            Scheme::Both => {
                let l = (15.0 / sec.eps_sec).log2();
                2.0 * l + 1.0 + 10.0 * l + (4.0 / sec.eps_cor).log2()
            }
        }
    }
}

/// Event class whose phase error is being bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventClass {
    Triggered,
    Nontriggered,
}

/// `h(x) = -x log2 x - (1 - x) log2 (1 - x)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Grid-plus-refinement search over `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XSearch {
    pub grid_points: usize,
    pub refine_rounds: usize,
    pub refine_points: usize,
}

impl Default for XSearch {
    fn default() -> Self {
        Self {
            grid_points: 200,
            refine_rounds: 2,
            refine_points: 21,
        }
    }
}

impl XSearch {
    /// Minimizes `f` on `[lo, hi]`, returning `(min, argmin)`. Ties keep the
    /// smallest `x`.
    pub fn minimize<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> (f64, f64) {
        if hi.is_nan() || lo.is_nan() || hi <= lo {
            return (f(lo), lo);
        }
        let mut best = (f64::INFINITY, lo);
        let mut scan = |a: f64, b: f64, points: usize, best: &mut (f64, f64)| -> f64 {
            let points = points.max(2);
            let step = (b - a) / (points - 1) as f64;
            for i in 0..points {
                let x = if i + 1 == points { b } else { a + step * i as f64 };
                let v = f(x);
                if v < best.0 {
                    *best = (v, x);
                }
            }
            step
        };
        let mut step = scan(lo, hi, self.grid_points, &mut best);
        for _ in 0..self.refine_rounds {
            let a = (best.1 - step).max(lo);
            let b = (best.1 + step).min(hi);
            step = scan(a, b, self.refine_points, &mut best);
        }
        best
    }
}

/// Code/sample sizes for one event class at `x`, built from the certified
/// single-photon gains: `Q1_t >= delta_1 Q_nt zeta(x) - chi_1` and
/// `Q1_nt >= Q_nt zeta(x)`.
pub fn phase_error_counts(
    class: EventClass,
    x: f64,
    est: &DecoyEstimator,
    budget: &ProtocolBudget,
) -> Result<PhaseErrorInputs> {
    let (gain, observed) = match class {
        EventClass::Triggered => (est.q1_triggered_lb(x), est.e1_triggered_ub(x)?),
        EventClass::Nontriggered => (est.obs.gain_nt * est.zeta(x), est.e1_nontriggered_ub(x)?),
    };
    if gain <= 0.0 {
        return Err(Error::VacuousBound("single-photon gain lower bound is not positive"));
    }
    PhaseErrorInputs::new(
        budget.key_pulses() * gain,
        budget.pulses * budget.p_pe * gain,
        observed.clamp(0.0, 0.5),
        budget.security.eps_sec,
    )
}

/// One scheme's key length at its minimizing `x`, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    /// Key length before flooring; may be negative.
    pub ell: f64,
    pub x_opt: f64,
    pub bounds: SinglePhotonBounds,
    pub phase_error_t: f64,
    /// Only populated for [`Scheme::Both`].
    pub phase_error_nt: Option<f64>,
    pub leak_ec_t: f64,
    pub leak_ec_nt: f64,
}

/// Final key length and rate. In asymptotic results the lengths are per
/// pulse (`pulses = 1`) and are not floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyLengthResult {
    pub triggered: SchemeOutcome,
    pub both: SchemeOutcome,
    pub ell: f64,
    pub rate: f64,
    pub pulses: f64,
    pub asymptotic: bool,
}

impl KeyLengthResult {
    pub fn ell_t(&self) -> f64 {
        self.triggered.ell
    }

    pub fn ell_b(&self) -> f64 {
        self.both.ell
    }

    /// The scheme attaining `ell`; triggered-only wins ties.
    pub fn chosen(&self) -> &SchemeOutcome {
        if self.both.ell > self.triggered.ell {
            &self.both
        } else {
            &self.triggered
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.ell <= 0.0
    }
}

/// Phase-error rate at `x`, or 0.5 when no bound can be certified.
fn phase_error_or_vacuous(
    class: EventClass,
    x: f64,
    est: &DecoyEstimator,
    budget: &ProtocolBudget,
    finite: bool,
) -> f64 {
    let observed = match class {
        EventClass::Triggered => est.e1_triggered_ub(x),
        EventClass::Nontriggered => est.e1_nontriggered_ub(x),
    };
    match observed {
        Ok(w) if w < 0.5 => {
            if !finite {
                return w.max(0.0);
            }
            phase_error_counts(class, x, est, budget)
                .and_then(|inputs| phase_error_bound(&inputs))
                .unwrap_or(0.5)
        }
        _ => 0.5,
    }
}

/// Evaluates one scheme's bracketed term for a fixed estimator.
struct SchemeEvaluator<'a> {
    scheme: Scheme,
    est: DecoyEstimator,
    budget: &'a ProtocolBudget,
    finite: bool,
}

struct PointValue {
    bracket: f64,
    phase_error_t: f64,
    phase_error_nt: Option<f64>,
}

impl SchemeEvaluator<'_> {
    fn point(&self, x: f64) -> PointValue {
        let est = &self.est;
        let q = est.obs.gain_nt;
        let vacuum_t = (est.delta0 * x - est.chi0 / q).max(0.0);
        let single_t = (est.delta1 * est.zeta(x) - est.chi1 / q).max(0.0);
        let phase_error_t = if single_t > 0.0 {
            phase_error_or_vacuous(EventClass::Triggered, x, est, self.budget, self.finite)
        } else {
            0.5
        };
        let mut inner = vacuum_t + single_t * (1.0 - binary_entropy(phase_error_t));
        let mut phase_error_nt = None;
        if self.scheme == Scheme::Both {
            let single_nt = est.zeta(x).max(0.0);
            let ep = if single_nt > 0.0 {
                phase_error_or_vacuous(EventClass::Nontriggered, x, est, self.budget, self.finite)
            } else {
                0.5
            };
            inner += x + single_nt * (1.0 - binary_entropy(ep));
            phase_error_nt = Some(ep);
        }
        PointValue {
            bracket: self.budget.key_pulses() * q * inner,
            phase_error_t,
            phase_error_nt,
        }
    }

    fn leaks(&self) -> (f64, f64) {
        let o = &self.est.obs;
        let m = self.budget.key_pulses() * self.budget.security.f_ec;
        let leak_t = m * o.gain_t * binary_entropy(o.qber_t);
        let leak_nt = match self.scheme {
            Scheme::Triggered => 0.0,
            Scheme::Both => m * o.gain_nt * binary_entropy(o.qber_nt),
        };
        (leak_t, leak_nt)
    }

    fn penalty(&self) -> f64 {
        if self.finite {
            self.scheme.penalty(&self.budget.security)
        } else {
            0.0
        }
    }

    fn at(&self, x: f64) -> f64 {
        let (leak_t, leak_nt) = self.leaks();
        self.point(x).bracket - leak_t - leak_nt - self.penalty()
    }

    fn optimize(&self, search: &XSearch) -> SchemeOutcome {
        let (lo, hi) = self.est.x_range();
        let (min_bracket, x_opt) = search.minimize(lo, hi, |x| self.point(x).bracket);
        let at_opt = self.point(x_opt);
        let (leak_t, leak_nt) = self.leaks();
        SchemeOutcome {
            scheme: self.scheme,
            ell: min_bracket - leak_t - leak_nt - self.penalty(),
            x_opt,
            bounds: self.est.bounds_at(x_opt),
            phase_error_t: at_opt.phase_error_t,
            phase_error_nt: at_opt.phase_error_nt,
            leak_ec_t: leak_t,
            leak_ec_nt: leak_nt,
        }
    }
}

fn evaluator<'a>(
    scheme: Scheme,
    src: &SourceModel,
    obs: &Observables,
    budget: &'a ProtocolBudget,
) -> Result<SchemeEvaluator<'a>> {
    let est = DecoyEstimator::new(src, &budget.sample_budget(scheme)?, obs)?;
    Ok(SchemeEvaluator {
        scheme,
        est,
        budget,
        finite: true,
    })
}

/// Triggered-only key length at a single `x`, before minimization.
pub fn ell_triggered_at(
    x: f64,
    src: &SourceModel,
    obs: &Observables,
    budget: &ProtocolBudget,
) -> Result<f64> {
    Ok(evaluator(Scheme::Triggered, src, obs, budget)?.at(x))
}

/// Combined key length at a single `x`, before minimization.
pub fn ell_both_at(
    x: f64,
    src: &SourceModel,
    obs: &Observables,
    budget: &ProtocolBudget,
) -> Result<f64> {
    Ok(evaluator(Scheme::Both, src, obs, budget)?.at(x))
}

/// `ell_T` minimized over `x`, with the minimizing `x`.
pub fn ell_triggered(
    src: &SourceModel,
    obs: &Observables,
    budget: &ProtocolBudget,
    search: &XSearch,
) -> Result<(f64, f64)> {
    let out = evaluator(Scheme::Triggered, src, obs, budget)?.optimize(search);
    Ok((out.ell, out.x_opt))
}

/// `ell_B` minimized over `x`, with the minimizing `x`.
pub fn ell_both(
    src: &SourceModel,
    obs: &Observables,
    budget: &ProtocolBudget,
    search: &XSearch,
) -> Result<(f64, f64)> {
    let out = evaluator(Scheme::Both, src, obs, budget)?.optimize(search);
    Ok((out.ell, out.x_opt))
}

/// `ell = max(floor(max(ell_T, ell_B)), 0)` and `R = ell / (2N)`.
pub fn key_length(
    src: &SourceModel,
    obs: &Observables,
    budget: &ProtocolBudget,
    search: &XSearch,
) -> Result<KeyLengthResult> {
    let triggered = evaluator(Scheme::Triggered, src, obs, budget)?.optimize(search);
    let both = evaluator(Scheme::Both, src, obs, budget)?.optimize(search);
    let ell = triggered.ell.max(both.ell).floor().max(0.0);
    Ok(KeyLengthResult {
        triggered,
        both,
        ell,
        rate: ell / (2.0 * budget.pulses),
        pulses: budget.pulses,
        asymptotic: false,
    })
}

/// Infinite-key rate at fixed `(mu, p_pe)`: the per-pulse limit of
/// [`key_length`] with `chi`, `chi_0`, `chi_1` and the log penalties set to
/// zero and the phase error taken equal to the single-photon error bound.
pub fn asymptotic_rate(
    src: &SourceModel,
    obs: &Observables,
    p_pe: f64,
    security: &SecurityBudget,
    search: &XSearch,
) -> Result<KeyLengthResult> {
    let budget = ProtocolBudget::new(1.0, p_pe, *security)?;
    let est = DecoyEstimator::asymptotic(src, obs)?;
    let run = |scheme| {
        SchemeEvaluator {
            scheme,
            est,
            budget: &budget,
            finite: false,
        }
        .optimize(search)
    };
    let triggered = run(Scheme::Triggered);
    let both = run(Scheme::Both);
    let ell = triggered.ell.max(both.ell).max(0.0);
    Ok(KeyLengthResult {
        triggered,
        both,
        ell,
        rate: ell / 2.0,
        pulses: 1.0,
        asymptotic: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{simulate_observables, ChannelModel};
    use approx::assert_relative_eq;

    fn setup(mu: f64, length_km: f64) -> (SourceModel, Observables) {
        let src = SourceModel::new(mu, 0.5, 1e-6).unwrap();
        let ch = ChannelModel::new(0.2, length_km, 0.1, 6e-7, 0.005).unwrap();
        (src, simulate_observables(&src, &ch).unwrap())
    }

    fn sec() -> SecurityBudget {
        SecurityBudget::new(1e-10, 1e-12, 1.16).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_eq!(binary_entropy(0.5), 1.0);
        assert_relative_eq!(binary_entropy(0.11), 0.499_915_958_164_528_1, max_relative = 1e-12);
    }

    #[test]
    fn penalties() {
        let s = sec();
        let t = 6.0 * (1e11f64).log2() + (2e12f64).log2();
        assert_relative_eq!(Scheme::Triggered.penalty(&s), t, max_relative = 1e-14);
        let l = (1.5e11f64).log2();
        let b = 12.0 * l + 1.0 + (4e12f64).log2();
        assert_relative_eq!(Scheme::Both.penalty(&s), b, max_relative = 1e-14);
    }

    #[test]
    fn x_search_handles_degenerate_and_finds_interior_minimum() {
        let search = XSearch::default();
        assert_eq!(search.minimize(0.0, 0.0, |x| x + 1.0), (1.0, 0.0));
        let (v, x) = search.minimize(0.0, 1.0, |x| (x - 0.3137).powi(2));
        assert!(v < 1e-9 && (x - 0.3137).abs() < 1e-4);
    }

    #[test]
    fn counts_are_equal_at_half_sampling() {
        let (src, obs) = setup(0.5, 50.0);
        let budget = ProtocolBudget::new(1e12, 0.5, sec()).unwrap();
        let est = DecoyEstimator::new(&src, &budget.sample_budget(Scheme::Both).unwrap(), &obs)
            .unwrap();
        for class in [EventClass::Triggered, EventClass::Nontriggered] {
            let c = phase_error_counts(class, 0.001, &est, &budget).unwrap();
            assert_relative_eq!(c.code_bits, c.sample_bits, max_relative = 1e-15);
        }
    }

    #[test]
    fn counts_vacuous_when_zeta_negative() {
        let (src, obs) = setup(0.5, 50.0);
        let budget = ProtocolBudget::new(100.0, 0.5, sec()).unwrap();
        let est = DecoyEstimator::new(&src, &budget.sample_budget(Scheme::Both).unwrap(), &obs)
            .unwrap();
        assert!(est.zeta(0.0) <= 0.0);
        assert!(matches!(
            phase_error_counts(EventClass::Nontriggered, 0.0, &est, &budget),
            Err(Error::VacuousBound(_))
        ));
    }

    #[test]
    fn tiny_block_gives_zero_key() {
        let (src, obs) = setup(0.3, 50.0);
        let budget = ProtocolBudget::new(1e3, 0.5, sec()).unwrap();
        let r = key_length(&src, &obs, &budget, &XSearch::default()).unwrap();
        assert!(r.ell_t() < 0.0 && r.ell_b() < 0.0);
        assert_eq!(r.ell, 0.0);
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn maximal_qber_leaks_everything() {
        let src = SourceModel::new(0.3, 0.5, 1e-6).unwrap();
        let obs = Observables::new(0.004, 0.002, 0.5, 0.5).unwrap();
        let budget = ProtocolBudget::new(1e12, 0.5, sec()).unwrap();
        let r = key_length(&src, &obs, &budget, &XSearch::default()).unwrap();
        assert_relative_eq!(
            r.triggered.leak_ec_t,
            budget.key_pulses() * 0.004 * 1.16,
            max_relative = 1e-14
        );
        assert_eq!(r.ell, 0.0);
    }

    #[test]
    fn minimum_is_below_every_sample() {
        let (src, obs) = setup(0.3, 50.0);
        let budget = ProtocolBudget::new(1e10, 0.3, sec()).unwrap();
        let search = XSearch::default();
        let (ell_t, _) = ell_triggered(&src, &obs, &budget, &search).unwrap();
        let (ell_b, _) = ell_both(&src, &obs, &budget, &search).unwrap();
        let est = DecoyEstimator::asymptotic(&src, &obs).unwrap();
        let (_, hi) = est.x_range();
        for i in 0..=37 {
            let x = hi * i as f64 / 37.0;
            assert!(ell_t <= ell_triggered_at(x, &src, &obs, &budget).unwrap());
            assert!(ell_b <= ell_both_at(x, &src, &obs, &budget).unwrap());
        }
    }

    #[test]
    fn smaller_eps_sec_costs_key() {
        let (src, obs) = setup(0.3, 50.0);
        let search = XSearch::default();
        let mut prev = f64::INFINITY;
        for k in 6..16 {
            let s = SecurityBudget::new(10f64.powi(-k), 1e-12, 1.16).unwrap();
            let budget = ProtocolBudget::new(1e11, 0.3, s).unwrap();
            let r = key_length(&src, &obs, &budget, &search).unwrap();
            let raw = r.ell_t().max(r.ell_b());
            assert!(raw < prev);
            prev = raw;
        }
    }

    #[test]
    fn finite_rate_below_asymptotic() {
        let search = XSearch::default();
        for &l in &[0.0, 50.0, 100.0, 150.0] {
            let (src, obs) = setup(0.3, l);
            let asym = asymptotic_rate(&src, &obs, 0.2, &sec(), &search).unwrap();
            for k in [9, 11, 13, 15] {
                let budget = ProtocolBudget::new(10f64.powi(k), 0.2, sec()).unwrap();
                let r = key_length(&src, &obs, &budget, &search).unwrap();
                assert!(r.rate <= asym.rate, "L = {l}, N = 1e{k}");
            }
        }
    }
}
