//! Phase-error upper bound from observed bit errors on a random sample
//! (hypergeometric "straightforward" bound).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{check, Error, Result};

/// Upper end of the `omega` search bracket; `Phi(40)` underflows.
pub const OMEGA_MAX: f64 = 40.0;
const OMEGA_TOL: f64 = 1e-12;
/// `1/sqrt(2) - FRAC_1_SQRT_2`.
const FRAC_1_SQRT_2_LO: f64 = -4.833_646_656_726_457e-17;
const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Sizes and observed error fraction of one event class. Counts are
/// real-valued expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorInputs {
    /// Code bits `n`, whose phase error rate is bounded.
    pub code_bits: f64,
    /// Sample bits `l`, on which errors were observed.
    pub sample_bits: f64,
    /// Error fraction `e_ob = c / l` observed on the sample.
    pub observed_error: f64,
    pub eps_sec: f64,
}

impl PhaseErrorInputs {
    pub fn new(code_bits: f64, sample_bits: f64, observed_error: f64, eps_sec: f64) -> Result<Self> {
        check(code_bits > 0.0, "code_bits", code_bits, "must be positive")?;
        check(sample_bits > 0.0, "sample_bits", sample_bits, "must be positive")?;
        check(
            (0.0..=0.5).contains(&observed_error),
            "observed_error",
            observed_error,
            "must lie in [0, 0.5]",
        )?;
        check(eps_sec > 0.0 && eps_sec < 1.0, "eps_sec", eps_sec, "must lie in (0, 1)")?;
        Ok(Self {
            code_bits,
            sample_bits,
            observed_error,
            eps_sec,
        })
    }
}

/// Standard normal upper tail `Phi(w) = P[Z >= w]`.
///
/// `erfc` is evaluated at the rounded argument `w / sqrt(2)` and then
/// corrected to first order for the rounding error, which otherwise costs
/// up to `2 x^2` ulps of relative accuracy in the far tail.
pub fn gaussian_tail(omega: f64) -> f64 {
    if omega.is_nan() {
        return f64::NAN;
    }
    if omega.is_infinite() {
        return if omega > 0.0 { 0.0 } else { 1.0 };
    }
    let x = omega * FRAC_1_SQRT_2;
    let residual = omega.mul_add(FRAC_1_SQRT_2, -x) + omega * FRAC_1_SQRT_2_LO;
    let base = libm::erfc(x);
    0.5 * (base - residual * FRAC_2_SQRT_PI * (-x * x).exp())
}

/// `ln Phi(w)`, finite beyond the point where `Phi` underflows.
fn ln_gaussian_tail(omega: f64) -> f64 {
    let tail = gaussian_tail(omega);
    if tail > 1e-300 {
        return tail.ln();
    }
    // Asymptotic Mills-ratio expansion; only reached for w > 37.
    let w2 = omega * omega;
    let series = 1.0 - 1.0 / w2 + 3.0 / (w2 * w2) - 15.0 / (w2 * w2 * w2);
    -0.5 * w2 - (omega * (2.0 * PI).sqrt()).ln() + series.ln()
}

fn ln_gaussian_density(omega: f64) -> f64 {
    -0.5 * omega * omega - 0.5 * (2.0 * PI).ln()
}

fn nu(code_bits: f64) -> f64 {
    1.0 / (6.0 * code_bits) + 1.0 / 12.0
}

/// Log of the left-hand side of the `omega` condition,
/// `sqrt((n + l)/n) sqrt((w^2 + 2 pi)/2) e^nu Phi(w)`.
pub fn omega_condition_ln(omega: f64, code_bits: f64, sample_bits: f64) -> f64 {
    0.5 * ((code_bits + sample_bits) / code_bits).ln()
        + 0.5 * ((omega * omega + 2.0 * PI) / 2.0).ln()
        + nu(code_bits)
        + ln_gaussian_tail(omega)
}

/// `ln(eps_sec^2 / 16)`.
pub fn omega_target_ln(eps_sec: f64) -> f64 {
    2.0 * eps_sec.ln() - 16f64.ln()
}

/// Smallest `omega` in `[0, 40]` meeting the tail condition
/// `... <= eps_sec^2 / 16`, to within `1e-12`.
pub fn solve_omega(inputs: &PhaseErrorInputs) -> Result<f64> {
    let target = omega_target_ln(inputs.eps_sec);
    let (n, l) = (inputs.code_bits, inputs.sample_bits);
    let excess = |w: f64| omega_condition_ln(w, n, l) - target;

    if excess(0.0) <= 0.0 {
        return Ok(0.0);
    }
    if excess(OMEGA_MAX) > 0.0 {
        return Err(Error::NoSolution { max: OMEGA_MAX });
    }

    // Safeguarded Newton on the log condition; `lo` violates, `hi` satisfies.
    let (mut lo, mut hi) = (0.0_f64, OMEGA_MAX);
    let mut w = (-2.0 * target).sqrt().clamp(1.0, OMEGA_MAX - 1.0);
    for _ in 0..200 {
        if hi - lo <= OMEGA_TOL {
            break;
        }
        let f = excess(w);
        if f > 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let slope = w / (w * w + 2.0 * PI) - (ln_gaussian_density(w) - ln_gaussian_tail(w)).exp();
        let mut next = w - f / slope;
        if (next - w).abs() < 0.25 * OMEGA_TOL {
            // Converged; pin the bracket tightly around the root.
            let (a, b) = (next - 0.5 * OMEGA_TOL, next + 0.5 * OMEGA_TOL);
            if excess(a) > 0.0 && excess(b) <= 0.0 {
                hi = hi.min(b);
                break;
            }
        }
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        w = next;
    }
    Ok(hi)
}

/// `e_hat = (e + 2 tau + 2 sqrt(tau (e (1 - e) + tau))) / (1 + 4 tau)`.
pub fn e_hat(e_ob: f64, tau: f64) -> f64 {
    let spread = (tau * (e_ob * (1.0 - e_ob) + tau)).max(0.0).sqrt();
    (e_ob + 2.0 * tau + 2.0 * spread) / (1.0 + 4.0 * tau)
}

/// Intermediate values of one phase-error evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorEstimate {
    pub phase_error: f64,
    pub omega: f64,
    pub tau: f64,
}

/// Phase error rate bound `e_p = [(n + l) e_hat(c + 2) - l e_ob(c + 2)] / n`,
/// clamped to `[0, 0.5]`.
pub fn phase_error_estimate(inputs: &PhaseErrorInputs) -> Result<PhaseErrorEstimate> {
    let (n, l) = (inputs.code_bits, inputs.sample_bits);
    let omega = solve_omega(inputs)?;
    let tau = omega * omega * n / (4.0 * l * (n + l - 1.0));
    let shifted = inputs.observed_error + 2.0 / l;
    if shifted >= 0.5 {
        return Ok(PhaseErrorEstimate {
            phase_error: 0.5,
            omega,
            tau,
        });
    }
    // (n + l) e_hat - l e = e_hat + (l / n)(e_hat - e), with the gap formed
    // without cancellation.
    let spread = (tau * (shifted * (1.0 - shifted) + tau)).max(0.0).sqrt();
    let gap = (2.0 * tau * (1.0 - 2.0 * shifted) + 2.0 * spread) / (1.0 + 4.0 * tau);
    let raw = e_hat(shifted, tau) + (l / n) * gap;
    Ok(PhaseErrorEstimate {
        phase_error: raw.clamp(0.0, 0.5),
        omega,
        tau,
    })
}

pub fn phase_error_bound(inputs: &PhaseErrorInputs) -> Result<f64> {
    phase_error_estimate(inputs).map(|e| e.phase_error)
}
