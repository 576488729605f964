//! Fiber channel model and the four observables it produces.

use crate::error::{check, Result};
use crate::photonics::{Series, SourceModel, DEFAULT_REL_TOL};

/// Fiber plus receiver. `dark_b` is Bob's per-pulse dark count probability and
/// `misalignment` the probability that a photon hits the wrong detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub alpha_db_per_km: f64,
    pub length_km: f64,
    pub eta_b: f64,
    pub dark_b: f64,
    pub misalignment: f64,
}

impl ChannelModel {
    pub fn new(
        alpha_db_per_km: f64,
        length_km: f64,
        eta_b: f64,
        dark_b: f64,
        misalignment: f64,
    ) -> Result<Self> {
        check(alpha_db_per_km >= 0.0, "alpha_db_per_km", alpha_db_per_km, "must be nonnegative")?;
        check(length_km >= 0.0, "length_km", length_km, "must be nonnegative")?;
        check(eta_b > 0.0 && eta_b <= 1.0, "eta_b", eta_b, "must lie in (0, 1]")?;
        check((0.0..1.0).contains(&dark_b), "dark_b", dark_b, "must lie in [0, 1)")?;
        check(
            (0.0..=0.5).contains(&misalignment),
            "misalignment",
            misalignment,
            "must lie in [0, 0.5]",
        )?;
        Ok(Self {
            alpha_db_per_km,
            length_km,
            eta_b,
            dark_b,
            misalignment,
        })
    }

    pub fn at_length(&self, length_km: f64) -> Result<Self> {
        Self::new(
            self.alpha_db_per_km,
            length_km,
            self.eta_b,
            self.dark_b,
            self.misalignment,
        )
    }

    /// Overall transmittance `10^(-alpha L / 10) * eta_b`.
    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.alpha_db_per_km * self.length_km / 10.0) * self.eta_b
    }

    /// Yield of an `n`-photon pulse: `1 - (1 - eta)^n (1 - p_d)^2`.
    pub fn photon_yield(&self, n: usize) -> f64 {
        let eta = self.transmittance();
        -((n as f64) * (-eta).ln_1p() + 2.0 * (-self.dark_b).ln_1p()).exp_m1()
    }

    /// Twice the error-weighted yield of an `n`-photon pulse:
    /// `Y_n - (1 - p_d)[(1 - eta e_d)^n - (1 - eta + eta e_d)^n]`.
    ///
    /// Regrouped as `[1 - (1 - p_d) A] + (1 - p_d)[B - (1 - p_d)(1 - eta)^n]`
    /// with `A = (1 - eta e_d)^n`, `B = (1 - eta + eta e_d)^n`. Both brackets
    /// are nonnegative and computed without cancellation.
    pub fn twice_error_yield(&self, n: usize) -> f64 {
        if n == 0 {
            return self.photon_yield(0);
        }
        let eta = self.transmittance();
        let nf = n as f64;
        let keep_dark = (-self.dark_b).ln_1p();
        let ln_right = (-eta * self.misalignment).ln_1p();
        let ln_wrong = (-eta * (1.0 - self.misalignment)).ln_1p();
        let first = -(keep_dark + nf * ln_right).exp_m1();
        let b = (nf * ln_wrong).exp();
        let second = if b == 0.0 {
            0.0
        } else {
            let gap = nf * ((-eta).ln_1p() - ln_wrong) + keep_dark;
            if gap.is_nan() { 0.0 } else { -b * gap.exp_m1() }
        };
        first + (1.0 - self.dark_b) * second
    }
}

/// Measured (or simulated) gains and QBERs of triggered and nontriggered
/// pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub gain_t: f64,
    pub gain_nt: f64,
    pub qber_t: f64,
    pub qber_nt: f64,
}

impl Observables {
    pub fn new(gain_t: f64, gain_nt: f64, qber_t: f64, qber_nt: f64) -> Result<Self> {
        const SLACK: f64 = 1e-12;
        check((0.0..=1.0).contains(&gain_t), "gain_t", gain_t, "must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&gain_nt), "gain_nt", gain_nt, "must lie in [0, 1]")?;
        check(
            (0.0..=0.5 + SLACK).contains(&qber_t),
            "qber_t",
            qber_t,
            "must lie in [0, 0.5]",
        )?;
        check(
            (0.0..=0.5 + SLACK).contains(&qber_nt),
            "qber_nt",
            qber_nt,
            "must lie in [0, 0.5]",
        )?;
        Ok(Self {
            gain_t,
            gain_nt,
            qber_t,
            qber_nt,
        })
    }
}

/// Expected observables for `src` sent through `ch`, ignoring finite-size
/// fluctuations of the observables themselves.
pub fn simulate_observables(src: &SourceModel, ch: &ChannelModel) -> Result<Observables> {
    let series = Series::new(DEFAULT_REL_TOL).ratio_bound(src.photon_ratio());
    let gain_t = series
        .sum(|n| src.photon_prob(n) * src.trigger_prob(n) * ch.photon_yield(n))?
        .value;
    let gain_nt = series
        .sum(|n| src.photon_prob(n) * src.no_trigger_prob(n) * ch.photon_yield(n))?
        .value;
    let err_t = series
        .sum(|n| src.photon_prob(n) * src.trigger_prob(n) * ch.twice_error_yield(n))?
        .value;
    let err_nt = series
        .sum(|n| src.photon_prob(n) * src.no_trigger_prob(n) * ch.twice_error_yield(n))?
        .value;
    let qber = |err: f64, gain: f64| if gain > 0.0 { err / (2.0 * gain) } else { 0.0 };
    Ok(Observables {
        gain_t,
        gain_nt,
        qber_t: qber(err_t, gain_t),
        qber_nt: qber(err_nt, gain_nt),
    })
}

/// Single-photon quantities of the channel model, used as ground truth when
/// checking the estimated bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonTruth {
    pub gain_t: f64,
    pub gain_nt: f64,
    pub error_rate: f64,
}

pub fn single_photon_truth(src: &SourceModel, ch: &ChannelModel) -> SinglePhotonTruth {
    let y1 = ch.photon_yield(1);
    let p1 = src.photon_prob(1);
    SinglePhotonTruth {
        gain_t: p1 * src.trigger_prob(1) * y1,
        gain_nt: p1 * src.no_trigger_prob(1) * y1,
        error_rate: if y1 > 0.0 { ch.twice_error_yield(1) / (2.0 * y1) } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fiber(length_km: f64) -> ChannelModel {
        ChannelModel::new(0.2, length_km, 0.1, 6e-7, 0.005).unwrap()
    }

    #[test]
    fn transmittance_values() {
        assert_relative_eq!(fiber(0.0).transmittance(), 0.1, max_relative = 1e-15);
        assert_relative_eq!(fiber(50.0).transmittance(), 0.01, max_relative = 1e-15);
        assert_relative_eq!(fiber(100.0).transmittance(), 1e-3, max_relative = 1e-15);
    }

    #[test]
    fn noiseless_channel_has_zero_qber() {
        let src = SourceModel::new(0.5, 0.5, 1e-6).unwrap();
        for &l in &[0.0, 25.0, 150.0] {
            let ch = ChannelModel::new(0.2, l, 0.1, 0.0, 0.0).unwrap();
            let obs = simulate_observables(&src, &ch).unwrap();
            assert_eq!(obs.qber_t, 0.0);
            assert_eq!(obs.qber_nt, 0.0);
        }
    }

    #[test]
    fn dark_channel_detects_nothing() {
        let src = SourceModel::new(0.5, 0.5, 1e-6).unwrap();
        let ch = ChannelModel::new(0.2, 20000.0, 0.1, 0.0, 0.005).unwrap();
        let obs = simulate_observables(&src, &ch).unwrap();
        assert_eq!(obs.gain_t, 0.0);
        assert_eq!(obs.gain_nt, 0.0);
    }

    #[test]
    fn detector_split_identity() {
        let a = SourceModel::new(0.4, 0.5, 1e-6).unwrap();
        let b = SourceModel::new(0.4, 0.2, 3e-4).unwrap();
        for &l in &[0.0, 50.0, 120.0] {
            let ch = fiber(l);
            let oa = simulate_observables(&a, &ch).unwrap();
            let ob = simulate_observables(&b, &ch).unwrap();
            assert!(((oa.gain_t + oa.gain_nt) - (ob.gain_t + ob.gain_nt)).abs() < 1e-12);
        }
    }

    #[test]
    fn observables_are_monotone_in_length() {
        let src = SourceModel::new(0.9, 0.5, 1e-6).unwrap();
        let mut prev = simulate_observables(&src, &fiber(0.0)).unwrap();
        for step in 1..=60 {
            let length = 5.0 * step as f64;
            let obs = simulate_observables(&src, &fiber(length)).unwrap();
            assert!(obs.gain_t <= prev.gain_t && obs.gain_nt <= prev.gain_nt);
            // Multi-photon double clicks make E_t dip slightly at short range.
            if length >= 25.0 {
                assert!(obs.qber_t >= prev.qber_t && obs.qber_nt >= prev.qber_nt);
            }
            assert!(obs.qber_t <= 0.5 && obs.qber_nt <= 0.5);
            prev = obs;
        }
    }

    #[test]
    fn qber_floor_is_misalignment_without_dark_counts() {
        let src = SourceModel::new(0.01, 0.5, 1e-6).unwrap();
        let ch = ChannelModel::new(0.2, 0.0, 0.1, 0.0, 0.005).unwrap();
        let obs = simulate_observables(&src, &ch).unwrap();
        assert!((obs.qber_t - 0.005).abs() < 1e-4);
        assert!((obs.qber_nt - 0.005).abs() < 1e-4);
    }

    #[test]
    fn observables_validate() {
        assert!(Observables::new(0.1, 0.1, 0.6, 0.0).is_err());
        assert!(Observables::new(-0.1, 0.1, 0.0, 0.0).is_err());
        assert!(Observables::new(0.1, 0.1, 0.5, 0.5).is_ok());
    }
}
