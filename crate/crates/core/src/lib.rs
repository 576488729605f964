//! Finite-key secret-key lengths and rates for passive decoy-state BB84 with
//! a heralded spontaneous parametric down-conversion source.
//!
//! The bound chain runs bottom-up:
//!
//! * [`photonics`]: thermal photon statistics and heralding probabilities.
//! * [`channel`]: fiber model producing the triggered/nontriggered gains and
//!   QBERs.
//! * [`decoy_bounds`]: single-photon gain and error bounds with
//!   sampling-fluctuation terms.
//! * [`phase_error`]: phase-error bound from sampled bit errors.
//! * [`keylength`]: the two key-length formulas and the rate.
//! * [`optimizer`]: rate maximization, reach and sweeps.
//! * [`oracle`]: Monte Carlo checks of the sampling bounds.
//! * [`cli`]: configuration, CSV output and the command-line driver.

pub mod channel;
pub mod cli;
pub mod decoy_bounds;
pub mod error;
pub mod keylength;
pub mod optimizer;
pub mod oracle;
pub mod phase_error;
pub mod photonics;

pub use channel::{simulate_observables, ChannelModel, Observables};
pub use decoy_bounds::{DecoyEstimator, SampleBudget, SinglePhotonBounds};
pub use error::{Error, Result};
pub use keylength::{key_length, KeyLengthResult, ProtocolBudget, Scheme, SecurityBudget, XSearch};
pub use optimizer::{optimize_rate, OptimizationSpec, RateMode, Setup};
pub use phase_error::PhaseErrorInputs;
pub use photonics::SourceModel;
