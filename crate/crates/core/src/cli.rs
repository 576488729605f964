//! Configuration file, command-line arguments and CSV output for the
//! `pdqkd` binary.
//!
//! The config is TOML with one table per parameter block. Every key is
//! optional; an empty file reproduces the reference setup (default fiber and
//! detectors, `eps_sec = 1e-10`, `eps_cor = 1e-12`).

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::channel::{ChannelModel, Observables};
use crate::keylength::{asymptotic_rate, key_length, KeyLengthResult, ProtocolBudget, SecurityBudget, XSearch};
use crate::optimizer::{
    max_distance, sweep, OptimizationSpec, RateMode, RowStatus, Setup, SweepRow,
};
use crate::oracle::{verify_suite, VerifyRow, RNG_ALGORITHM};
use crate::photonics::SourceModel;

/// Column order of the sweep and evaluation CSV.
pub const CSV_HEADER: [&str; 13] = [
    "L_km", "N", "mode", "mu_opt", "p_pe_opt", "x_opt", "ell_T", "ell_B", "ell", "rate", "e_p_t",
    "e_p_nt", "status",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Finite,
    Asymptotic,
    Both,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    /// Intensity used by `eval` when `mu` is not optimized.
    pub mu: f64,
    pub eta_a: f64,
    pub dark_a: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            mu: 0.5,
            eta_a: 0.5,
            dark_a: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub alpha_db_per_km: f64,
    pub eta_b: f64,
    pub dark_b: f64,
    pub misalignment: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            alpha_db_per_km: 0.2,
            eta_b: 0.1,
            dark_b: 6e-7,
            misalignment: 0.005,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SecuritySection {
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f_ec: f64,
}

impl Default for SecuritySection {
    fn default() -> Self {
        Self {
            eps_sec: 1e-10,
            eps_cor: 1e-12,
            f_ec: 1.16,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit distances; overrides the range below when present.
    pub distances: Option<Vec<f64>>,
    pub l_min: f64,
    pub l_max: f64,
    pub l_step: f64,
    /// Block sizes (total pulses) for finite-size rows.
    pub pulses: Vec<f64>,
    /// Fixed `p_pe` values, one family of rows each. Empty means optimize.
    pub p_pe: Vec<f64>,
    pub mode: ModeChoice,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            distances: None,
            l_min: 0.0,
            l_max: 220.0,
            l_step: 10.0,
            pulses: vec![1e9, 1e10, 1e11, 1e12, 1e13],
            p_pe: Vec::new(),
            mode: ModeChoice::Both,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub mu_min: f64,
    /// Defaults to 99% of the divergence threshold `(1 - eta_a) / eta_a`.
    pub mu_max: Option<f64>,
    pub p_pe_min: f64,
    pub p_pe_max: f64,
    pub mu_points: usize,
    pub p_pe_points: usize,
    pub refine_rounds: usize,
    pub refine_points: usize,
    pub x_grid_points: usize,
    pub x_refine_rounds: usize,
    pub x_refine_points: usize,
    pub step_km: f64,
    pub max_km: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let spec = OptimizationSpec::for_detector(0.5);
        Self {
            mu_min: spec.mu_bounds.0,
            mu_max: None,
            p_pe_min: spec.p_pe_bounds.0,
            p_pe_max: spec.p_pe_bounds.1,
            mu_points: spec.mu_points,
            p_pe_points: spec.p_pe_points,
            refine_rounds: spec.refine_rounds,
            refine_points: spec.refine_points,
            x_grid_points: spec.x_search.grid_points,
            x_refine_rounds: spec.x_search.refine_rounds,
            x_refine_points: spec.x_search.refine_points,
            step_km: 5.0,
            max_km: 300.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

/// Measured gains and QBERs. When present, `eval` uses them instead of the
/// channel model.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObservablesSection {
    pub gain_t: f64,
    pub gain_nt: f64,
    pub qber_t: f64,
    pub qber_nt: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub seed: u64,
    pub trials: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSection,
    pub channel: ChannelSection,
    pub security: SecuritySection,
    pub sweep: SweepSection,
    pub optimizer: OptimizerSection,
    pub output: OutputSection,
    pub observables: Option<ObservablesSection>,
    pub verify: VerifySection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks every block against the library's parameter domains.
    pub fn validate(&self) -> Result<(), CliError> {
        self.setup()?;
        self.spec()?;
        self.distances()?;
        for &n in &self.sweep.pulses {
            if !(n >= 1.0 && n.is_finite()) {
                return Err(CliError::Config(format!("sweep.pulses: {n} must be a finite count >= 1")));
            }
        }
        for &p in &self.sweep.p_pe {
            if !(p > 0.0 && p < 1.0) {
                return Err(CliError::Config(format!("sweep.p_pe: {p} must lie in (0, 1)")));
            }
        }
        if let Some(o) = &self.observables {
            Observables::new(o.gain_t, o.gain_nt, o.qber_t, o.qber_nt).map_err(config_err)?;
        }
        if !(self.optimizer.step_km > 0.0 && self.optimizer.max_km >= 0.0) {
            return Err(CliError::Config(
                "optimizer.step_km must be positive and optimizer.max_km nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn setup(&self) -> Result<Setup, CliError> {
        let s = &self.source;
        let c = &self.channel;
        let k = &self.security;
        Ok(Setup {
            source: SourceModel::new(s.mu, s.eta_a, s.dark_a).map_err(config_err)?,
            channel: ChannelModel::new(c.alpha_db_per_km, 0.0, c.eta_b, c.dark_b, c.misalignment)
                .map_err(config_err)?,
            security: SecurityBudget::new(k.eps_sec, k.eps_cor, k.f_ec).map_err(config_err)?,
        })
    }

    pub fn spec(&self) -> Result<OptimizationSpec, CliError> {
        let o = &self.optimizer;
        let mut spec = OptimizationSpec::for_detector(self.source.eta_a);
        spec.mu_bounds = (o.mu_min, o.mu_max.unwrap_or(spec.mu_bounds.1));
        spec.p_pe_bounds = (o.p_pe_min, o.p_pe_max);
        spec.mu_points = o.mu_points;
        spec.p_pe_points = o.p_pe_points;
        spec.refine_rounds = o.refine_rounds;
        spec.refine_points = o.refine_points;
        spec.x_search = XSearch {
            grid_points: o.x_grid_points,
            refine_rounds: o.x_refine_rounds,
            refine_points: o.x_refine_points,
        };
        spec.validate(self.source.eta_a).map_err(config_err)?;
        Ok(spec)
    }

    pub fn distances(&self) -> Result<Vec<f64>, CliError> {
        let list = match &self.sweep.distances {
            Some(d) => d.clone(),
            None => range(self.sweep.l_min, self.sweep.l_max, self.sweep.l_step)?,
        };
        if list.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(CliError::Config("sweep distances must be finite and nonnegative".into()));
        }
        if list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("sweep distances must be strictly ascending".into()));
        }
        Ok(list)
    }

    /// The rate modes implied by `sweep.mode` and `sweep.pulses`.
    pub fn modes(&self) -> Vec<RateMode> {
        let finite = self.sweep.pulses.iter().map(|&pulses| RateMode::Finite { pulses });
        match self.sweep.mode {
            ModeChoice::Finite => finite.collect(),
            ModeChoice::Asymptotic => vec![RateMode::Asymptotic],
            ModeChoice::Both => finite.chain(std::iter::once(RateMode::Asymptotic)).collect(),
        }
    }
}

fn range(start: f64, end: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !start.is_finite() || !end.is_finite() || step.is_nan() || step <= 0.0 || end < start {
        return Err(CliError::Config(format!(
            "invalid distance range {start}:{end}:{step}; need start <= end and step > 0"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + step * i as f64).collect())
}

/// Parses `L0:L1:step` into an inclusive list of distances.
pub fn parse_sweep(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!("--sweep expects L0:L1:step, got {text:?}")));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("--sweep: {part:?} is not a number")))?;
    }
    range(v[0], v[1], v[2])
}

#[derive(Debug, Parser)]
#[command(name = "pdqkd", version, about = "Finite-key rates for passive decoy-state QKD with heralded SPDC sources")]
pub struct Cli {
    /// TOML configuration file; missing keys take their default values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Overrides for the default sweep command.
#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeChoice>,
    /// Distance grid as L0:L1:step in km, inclusive.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Total pulse count; repeat for several block sizes.
    #[arg(long = "N", value_name = "PULSES")]
    pub pulses: Vec<f64>,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate at one distance. Optimizes (mu, p_pe) unless both are given.
    Eval {
        #[arg(long = "L", value_name = "KM", default_value_t = 50.0)]
        length_km: f64,
        #[arg(long = "N", value_name = "PULSES")]
        pulses: Vec<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        p_pe: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<ModeChoice>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest distance with a positive optimized rate.
    MaxDistance {
        #[arg(long = "N", value_name = "PULSES")]
        pulses: Vec<f64>,
        /// Pin p_pe instead of optimizing it.
        #[arg(long)]
        p_pe: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo checks of the sampling bounds.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// CSV of violation counts; the text report goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        None => {
            let a = cli.sweep;
            if let Some(m) = a.mode {
                cfg.sweep.mode = m;
            }
            if let Some(s) = &a.sweep {
                cfg.sweep.distances = Some(parse_sweep(s)?);
            }
            if !a.pulses.is_empty() {
                cfg.sweep.pulses = a.pulses;
            }
            if a.out.is_some() {
                cfg.output.path = a.out;
            }
            cfg.validate()?;
            let rows = run_sweep(&cfg)?;
            emit(cfg.output.path.as_deref(), |w| write_sweep_csv(w, &rows))?;
            match rows.iter().find_map(|r| match &r.status {
                RowStatus::Failed(msg) => Some(msg.clone()),
                _ => None,
            }) {
                Some(msg) => Err(CliError::Numerical(msg)),
                None => Ok(()),
            }
        }
        Some(Command::Eval {
            length_km,
            pulses,
            mu,
            p_pe,
            mode,
            out,
        }) => {
            if let Some(m) = mode {
                cfg.sweep.mode = m;
            }
            if !pulses.is_empty() {
                cfg.sweep.pulses = pulses;
            }
            cfg.validate()?;
            let records = run_eval(&cfg, length_km, mu, p_pe)?;
            emit(out.as_deref().or(cfg.output.path.as_deref()), |w| {
                write_records(w, &records)
            })
        }
        Some(Command::MaxDistance { pulses, p_pe, out }) => {
            if !pulses.is_empty() {
                cfg.sweep.pulses = pulses;
            }
            cfg.validate()?;
            let text = run_max_distance(&cfg, p_pe)?;
            emit(out.as_deref().or(cfg.output.path.as_deref()), |w| {
                w.write_all(text.as_bytes()).map_err(CliError::from)
            })
        }
        Some(Command::Verify { seed, trials, out }) => {
            let seed = seed.unwrap_or(cfg.verify.seed);
            let trials = trials.unwrap_or(cfg.verify.trials);
            let rows = verify_suite(seed, trials).map_err(numerical_err)?;
            print!("{}", verify_report(seed, trials, &rows));
            if let Some(path) = out {
                emit(Some(&path), |w| write_verify_csv(w, &rows))?;
            }
            Ok(())
        }
    }
}

fn emit<F>(path: Option<&Path>, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match path {
        Some(p) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(p)?);
            body(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

/// All sweep rows: one family per fixed `p_pe` (or a single optimized
/// family), each ordered by mode and then distance.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let setup = cfg.setup()?;
    let spec = cfg.spec()?;
    let distances = cfg.distances()?;
    let modes = cfg.modes();
    let specs: Vec<OptimizationSpec> = if cfg.sweep.p_pe.is_empty() {
        vec![spec]
    } else {
        cfg.sweep.p_pe.iter().map(|&p| spec.with_fixed_p_pe(p)).collect()
    };
    let mut rows = Vec::new();
    for s in &specs {
        rows.extend(sweep(&setup, &distances, &modes, s));
    }
    Ok(rows)
}

/// One output row in the sweep CSV layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub length_km: f64,
    pub pulses: f64,
    pub mode: &'static str,
    pub mu: Option<f64>,
    pub p_pe: Option<f64>,
    pub x_opt: Option<f64>,
    pub ell_t: Option<f64>,
    pub ell_b: Option<f64>,
    pub ell: f64,
    pub rate: f64,
    pub e_p_t: Option<f64>,
    pub e_p_nt: Option<f64>,
    pub status: String,
}

impl RateRecord {
    pub fn from_result(length_km: f64, mode: RateMode, mu: f64, p_pe: f64, r: &KeyLengthResult) -> Self {
        let chosen = r.chosen();
        Self {
            length_km,
            pulses: mode.pulses().unwrap_or(f64::INFINITY),
            mode: mode.label(),
            mu: Some(mu),
            p_pe: Some(p_pe),
            x_opt: Some(chosen.x_opt),
            ell_t: Some(r.ell_t()),
            ell_b: Some(r.ell_b()),
            ell: r.ell,
            rate: r.rate,
            e_p_t: Some(chosen.phase_error_t),
            e_p_nt: r.both.phase_error_nt,
            status: if r.is_vacuous() { "vacuous" } else { "ok" }.into(),
        }
    }

    pub fn from_row(row: &SweepRow) -> Self {
        match &row.optimum {
            Some(o) => Self::from_result(row.length_km, row.mode, o.mu, o.p_pe, &o.result),
            None => Self {
                length_km: row.length_km,
                pulses: row.mode.pulses().unwrap_or(f64::INFINITY),
                mode: row.mode.label(),
                mu: None,
                p_pe: None,
                x_opt: None,
                ell_t: None,
                ell_b: None,
                ell: 0.0,
                rate: 0.0,
                e_p_t: None,
                e_p_nt: None,
                status: row.status.label().into(),
            },
        }
    }

    fn fields(&self) -> Vec<String> {
        let num = |v: f64| format!("{v:.16e}");
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        vec![
            num(self.length_km),
            num(self.pulses),
            self.mode.to_string(),
            opt(self.mu),
            opt(self.p_pe),
            opt(self.x_opt),
            opt(self.ell_t),
            opt(self.ell_b),
            num(self.ell),
            num(self.rate),
            opt(self.e_p_t),
            opt(self.e_p_nt),
            self.status.clone(),
        ]
    }
}

/// Writes rows with every float in `{:.16e}` form, which reparses exactly.
pub fn write_records(w: &mut dyn Write, records: &[RateRecord]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv(w: &mut dyn Write, rows: &[SweepRow]) -> Result<(), CliError> {
    let records: Vec<RateRecord> = rows.iter().map(RateRecord::from_row).collect();
    write_records(w, &records)
}

/// Single-distance evaluation. With `[observables]` in the config the
/// measured values replace the channel model and `mu` comes from
/// `[source]` unless given.
pub fn run_eval(
    cfg: &RunConfig,
    length_km: f64,
    mu: Option<f64>,
    p_pe: Option<f64>,
) -> Result<Vec<RateRecord>, CliError> {
    if length_km.is_nan() || length_km < 0.0 {
        return Err(CliError::Config(format!("--L {length_km} must be nonnegative")));
    }
    let setup = cfg.setup()?;
    let spec = cfg.spec()?;
    let mut records = Vec::new();
    for mode in cfg.modes() {
        if let Some(o) = &cfg.observables {
            let mu = mu.unwrap_or(cfg.source.mu);
            let p = p_pe.ok_or_else(|| CliError::Config("--p-pe is required with [observables]".into()))?;
            let src = setup.source.with_mu(mu).map_err(config_err)?;
            let obs = Observables::new(o.gain_t, o.gain_nt, o.qber_t, o.qber_nt).map_err(config_err)?;
            let r = match mode {
                RateMode::Finite { pulses } => {
                    let budget = ProtocolBudget::new(pulses, p, setup.security).map_err(config_err)?;
                    key_length(&src, &obs, &budget, &spec.x_search)
                }
                RateMode::Asymptotic => asymptotic_rate(&src, &obs, p, &setup.security, &spec.x_search),
            }
            .map_err(numerical_err)?;
            records.push(RateRecord::from_result(length_km, mode, mu, p, &r));
            continue;
        }
        match (mu, p_pe) {
            (Some(mu), Some(p)) => {
                let r = setup
                    .evaluate(mode, length_km, mu, p, &spec.x_search)
                    .map_err(numerical_err)?;
                records.push(RateRecord::from_result(length_km, mode, mu, p, &r));
            }
            (None, p) => {
                let s = p.map_or(spec, |p| spec.with_fixed_p_pe(p));
                let row = sweep(&setup, &[length_km], &[mode], &s).remove(0);
                if let RowStatus::Failed(msg) = &row.status {
                    return Err(CliError::Numerical(msg.clone()));
                }
                records.push(RateRecord::from_row(&row));
            }
            (Some(_), None) => {
                return Err(CliError::Config("--mu requires --p-pe".into()));
            }
        }
    }
    Ok(records)
}

/// CSV `N,mode,p_pe,max_distance_km` for every configured mode.
pub fn run_max_distance(cfg: &RunConfig, p_pe: Option<f64>) -> Result<String, CliError> {
    let setup = cfg.setup()?;
    let mut spec = cfg.spec()?;
    if let Some(p) = p_pe {
        if !(p > 0.0 && p < 1.0) {
            return Err(CliError::Config(format!("--p-pe {p} must lie in (0, 1)")));
        }
        spec = spec.with_fixed_p_pe(p);
    }
    let mut text = String::from("N,mode,p_pe,max_distance_km\n");
    for mode in cfg.modes() {
        let d = max_distance(&setup, mode, &spec, cfg.optimizer.step_km, cfg.optimizer.max_km)
            .map_err(numerical_err)?;
        let pulses = mode.pulses().unwrap_or(f64::INFINITY);
        let p = p_pe.map(|p| format!("{p:.16e}")).unwrap_or_else(|| "opt".into());
        writeln!(text, "{pulses:.16e},{},{p},{d:.16e}", mode.label()).expect("write to string");
    }
    Ok(text)
}

pub fn verify_report(seed: u64, trials: u64, rows: &[VerifyRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "pdqkd oracle verification");
    let _ = writeln!(s, "rng: {RNG_ALGORITHM}");
    let _ = writeln!(s, "seed: {seed}");
    let _ = writeln!(s, "trials: {trials}");
    for r in rows {
        let rep = &r.report;
        let _ = writeln!(
            s,
            "{} n1={} n2={} rate={} eps={:e}: {} / {} violations, freq {:.3e}, 95% upper {:.3e} [{}]",
            r.check,
            r.first,
            r.second,
            r.rate,
            r.eps,
            rep.violations,
            rep.trials,
            rep.frequency(),
            rep.upper_confidence(),
            if rep.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed = rows.iter().filter(|r| !r.report.passed()).count();
    let _ = writeln!(s, "summary: {} checks, {failed} failed", rows.len());
    s
}

pub fn write_verify_csv(w: &mut dyn Write, rows: &[VerifyRow]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["check", "first", "second", "rate", "eps", "trials", "violations", "frequency", "upper95", "passed"])?;
    for r in rows {
        let rep = &r.report;
        out.write_record([
            r.check.to_string(),
            r.first.to_string(),
            r.second.to_string(),
            format!("{:.16e}", r.rate),
            format!("{:.16e}", r.eps),
            rep.trials.to_string(),
            rep.violations.to_string(),
            format!("{:.16e}", rep.frequency()),
            format!("{:.16e}", rep.upper_confidence()),
            rep.passed().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_reference_setup() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.setup().unwrap(), Setup::reference());
        assert_eq!(cfg.modes().len(), 6);
        assert_eq!(cfg.distances().unwrap().len(), 23);
    }

    #[test]
    fn config_errors_are_reported() {
        let err = RunConfig::from_toml("[source]\nmu = \"high\"\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(RunConfig::from_toml("[channel]\ntypo = 1\n").is_err());
        assert!(RunConfig::from_toml("[channel]\neta_b = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[sweep]\ndistances = [10.0, 5.0]\n").is_err());
        assert!(RunConfig::from_toml("[optimizer]\nmu_max = 1.0\n").is_err());
    }

    #[test]
    fn sweep_flag_parsing() {
        assert_eq!(parse_sweep("0:20:5").unwrap(), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_sweep("10:10:1").unwrap(), vec![10.0]);
        assert_eq!(parse_sweep("0:1:0.1").unwrap().len(), 11);
        for bad in ["0:20", "a:b:c", "20:0:5", "0:20:0"] {
            assert_eq!(parse_sweep(bad).unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["pdqkd", "--mode", "finite", "--N", "1e9", "--N", "1e10", "--sweep", "0:50:10"]).unwrap();
        assert!(cli.command.is_none());
        assert_eq!(cli.sweep.pulses, vec![1e9, 1e10]);
        assert_eq!(cli.sweep.mode, Some(ModeChoice::Finite));
        let cli = Cli::try_parse_from(["pdqkd", "verify", "--seed", "3", "--trials", "10"]).unwrap();
        assert!(matches!(cli.command, Some(Command::Verify { seed: Some(3), trials: Some(10), .. })));
    }
}
