//! Finite-size bounds on single-photon gains and error rates for passive
//! decoy states.
//!
//! Triggered and nontriggered pulses play the role of signal and decoy.
//! Their `n`-photon yields agree only up to a sampling-without-replacement
//! fluctuation, which enters through the `chi` terms below. Setting all
//! `chi` terms to zero recovers the infinite-key bounds.

use crate::channel::Observables;
use crate::error::{check, Error, Result};
use crate::photonics::{sqrt_delta_p_sum, SourceModel, DEFAULT_REL_TOL};

/// Pulse count, parameter-estimation fraction and estimation failure
/// probability. `eps_pe` is shared by every photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBudget {
    pub pulses: f64,
    pub p_pe: f64,
    pub eps_pe: f64,
}

impl SampleBudget {
    pub fn new(pulses: f64, p_pe: f64, eps_pe: f64) -> Result<Self> {
        check(pulses >= 1.0, "pulses", pulses, "must be at least 1")?;
        check(p_pe > 0.0 && p_pe < 1.0, "p_pe", p_pe, "must lie in (0, 1)")?;
        check(eps_pe > 0.0 && eps_pe < 1.0, "eps_pe", eps_pe, "must lie in (0, 1)")?;
        Ok(Self {
            pulses,
            p_pe,
            eps_pe,
        })
    }

    /// `sqrt(ln(1/eps_pe) / (2 N p_pe))`, shared by every `chi` term.
    fn fluctuation_scale(&self) -> f64 {
        ((1.0 / self.eps_pe).ln() / (2.0 * self.pulses * self.p_pe)).sqrt()
    }
}

/// Serfling-type deviation between the frequencies of two parts of sizes
/// `n1` and `n2` drawn without replacement from one population:
/// `sqrt((n1 + n2)(n1 + 1) ln(1/eps) / (8 n1^2 n2))`.
pub fn serfling_xi(eps: f64, n1: f64, n2: f64) -> f64 {
    ((n1 + n2) * (n1 + 1.0) * (1.0 / eps).ln() / (8.0 * n1 * n1 * n2)).sqrt()
}

/// `delta = Q_t / Q_nt`.
pub fn overall_delta(obs: &Observables) -> Result<f64> {
    if obs.gain_nt <= 0.0 {
        return Err(Error::ZeroGain);
    }
    Ok(obs.gain_t / obs.gain_nt)
}

/// Per-order fluctuation `chi_i = sqrt(delta_i p_i ln(1/eps_pe) / (2 N p_pe))`.
pub fn chi_term(src: &SourceModel, budget: &SampleBudget, i: usize) -> Result<f64> {
    let weight = src.delta(i)? * src.photon_prob(i);
    Ok(weight.sqrt() * budget.fluctuation_scale())
}

/// Aggregate fluctuation
/// `chi = sqrt(ln(1/eps_pe) / (2 N p_pe)) * sum_k sqrt(delta_k p_k) / Q_nt`.
pub fn chi_total(src: &SourceModel, budget: &SampleBudget, obs: &Observables) -> Result<f64> {
    if obs.gain_nt <= 0.0 {
        return Err(Error::ZeroGain);
    }
    let series = sqrt_delta_p_sum(src, DEFAULT_REL_TOL)?;
    Ok(budget.fluctuation_scale() * series / obs.gain_nt)
}

/// Bounds evaluated at one value of the vacuum ratio `x = Q0_nt / Q_nt`.
/// `w_t` / `w_nt` are `None` where the corresponding bound is vacuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonBounds {
    pub x: f64,
    pub zeta: f64,
    pub q1_t_lb: f64,
    pub w_t: Option<f64>,
    pub w_nt: Option<f64>,
    pub chi: f64,
    pub chi0: f64,
    pub chi1: f64,
}

/// Everything the bounds need, precomputed once per (source, budget,
/// observables).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyEstimator {
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta: f64,
    pub chi: f64,
    pub chi0: f64,
    pub chi1: f64,
    pub obs: Observables,
}

impl DecoyEstimator {
    pub fn new(src: &SourceModel, budget: &SampleBudget, obs: &Observables) -> Result<Self> {
        let mut est = Self::asymptotic(src, obs)?;
        est.chi = chi_total(src, budget, obs)?;
        est.chi0 = chi_term(src, budget, 0)?;
        est.chi1 = chi_term(src, budget, 1)?;
        Ok(est)
    }

    /// The `N -> infinity` estimator: every fluctuation term is zero.
    pub fn asymptotic(src: &SourceModel, obs: &Observables) -> Result<Self> {
        let delta = overall_delta(obs)?;
        let delta0 = src.delta(0)?;
        let delta1 = src.delta(1)?;
        let delta2 = src.delta(2)?;
        if delta2 <= delta1 {
            return Err(Error::DegenerateDetector { n: 2 });
        }
        Ok(Self {
            delta0,
            delta1,
            delta2,
            delta,
            chi: 0.0,
            chi0: 0.0,
            chi1: 0.0,
            obs: *obs,
        })
    }

    /// Lower bound on `Q1_nt / Q_nt`. Affine and decreasing in `x`; may be
    /// negative.
    pub fn zeta(&self, x: f64) -> f64 {
        ((self.delta2 - self.delta) - (self.delta2 - self.delta0) * x - self.chi)
            / (self.delta2 - self.delta1)
    }

    /// Lower bound on the triggered single-photon gain,
    /// `delta_1 Q_nt zeta(x) - chi_1`.
    pub fn q1_triggered_lb(&self, x: f64) -> f64 {
        self.delta1 * self.obs.gain_nt * self.zeta(x) - self.chi1
    }

    /// Upper bound `W_t(x)` on the triggered single-photon error rate.
    pub fn e1_triggered_ub(&self, x: f64) -> Result<f64> {
        let q = self.obs.gain_nt;
        let den = 2.0 * self.delta1 * self.zeta(x) - 2.0 * self.chi1 / q;
        if den <= 0.0 {
            return Err(Error::VacuousBound("triggered single-photon gain not certified"));
        }
        Ok((2.0 * self.delta * self.obs.qber_t - self.delta0 * x + self.chi0 / q) / den)
    }

    /// Upper bound `W_nt(x)` on the nontriggered single-photon error rate.
    pub fn e1_nontriggered_ub(&self, x: f64) -> Result<f64> {
        let zeta = self.zeta(x);
        if zeta <= 0.0 {
            return Err(Error::VacuousBound("nontriggered single-photon gain not certified"));
        }
        Ok((2.0 * self.obs.qber_nt - x) / (2.0 * zeta))
    }

    /// `[0, min(2 E_t delta / delta_0, 2 E_nt)]`; the first limb is infinite
    /// when `delta_0 = 0`.
    pub fn x_range(&self) -> (f64, f64) {
        let triggered = if self.delta0 > 0.0 {
            2.0 * self.obs.qber_t * self.delta / self.delta0
        } else {
            f64::INFINITY
        };
        (0.0, triggered.min(2.0 * self.obs.qber_nt))
    }

    pub fn bounds_at(&self, x: f64) -> SinglePhotonBounds {
        SinglePhotonBounds {
            x,
            zeta: self.zeta(x),
            q1_t_lb: self.q1_triggered_lb(x),
            w_t: self.e1_triggered_ub(x).ok().map(|w| w.clamp(0.0, 1.0)),
            w_nt: self.e1_nontriggered_ub(x).ok().map(|w| w.clamp(0.0, 1.0)),
            chi: self.chi,
            chi0: self.chi0,
            chi1: self.chi1,
        }
    }
}

/// Infinite-key lower bound on `Q1_nt` with `Q0_nt = x Q_nt`:
/// `[(delta_2 - delta) Q_nt - (delta_2 - delta_0) Q0_nt] / (delta_2 - delta_1)`.
pub fn asymptotic_q1_nt(x: f64, src: &SourceModel, obs: &Observables) -> Result<f64> {
    let delta = overall_delta(obs)?;
    let (d0, d1, d2) = (src.delta(0)?, src.delta(1)?, src.delta(2)?);
    if d2 <= d1 {
        return Err(Error::DegenerateDetector { n: 2 });
    }
    let q0 = x * obs.gain_nt;
    Ok(((d2 - delta) * obs.gain_nt - (d2 - d0) * q0) / (d2 - d1))
}

/// The two limbs of the infinite-key single-photon error bound,
/// `(2 delta E_t Q_nt - delta_0 Q0_nt) / (2 delta_1 xi)` and
/// `(2 E_nt Q_nt - Q0_nt) / (2 xi)`, where `xi` is [`asymptotic_q1_nt`].
pub fn asymptotic_e1_limbs(x: f64, src: &SourceModel, obs: &Observables) -> Result<(f64, f64)> {
    let xi = asymptotic_q1_nt(x, src, obs)?;
    if xi <= 0.0 {
        return Err(Error::VacuousBound("single-photon gain not certified"));
    }
    let delta = overall_delta(obs)?;
    let (d0, d1) = (src.delta(0)?, src.delta(1)?);
    let q0 = x * obs.gain_nt;
    let triggered = (2.0 * delta * obs.qber_t * obs.gain_nt - d0 * q0) / (2.0 * d1 * xi);
    let nontriggered = (2.0 * obs.qber_nt * obs.gain_nt - q0) / (2.0 * xi);
    Ok((triggered, nontriggered))
}

/// Infinite-key single-photon error bound, the smaller of the two limbs.
pub fn asymptotic_e1(x: f64, src: &SourceModel, obs: &Observables) -> Result<f64> {
    asymptotic_e1_limbs(x, src, obs).map(|(t, nt)| t.min(nt))
}
