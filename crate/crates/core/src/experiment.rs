//! Monte Carlo runs over channel realizations, parameter sweeps and
//! convergence traces.
//!
//! The optimizer sees only the self-interference channels, which are fixed by
//! geometry. For every case except [`RcCase::Random`] it therefore runs once
//! per scenario, and its result is evaluated on each trial's inter-device
//! channels. Both devices share one layout, so the remote coefficients `ψ`
//! solve the same problem as `φ`.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ao::{alternate_optimize, OptResult, RcCase};
use crate::error::{Error, Result};
use crate::scenario::{
    draw_realization, near_field_links, sic_channels, NearFieldLinks, ScenarioConfig,
};
use crate::system::{
    fd_capacity, fd_capacity_sic_coefficient, hd_capacity, sic_capability, sic_coefficient_from_db,
    ChannelSet, PowerAllocation,
};

/// Stream of the trial generator used for local random phases; channels use
/// stream 0 and remote random phases the next one.
const LOCAL_PHASE_STREAM: u64 = 1;
const REMOTE_PHASE_STREAM: u64 = 2;

/// Figures of merit of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub sic_db: f64,
    /// Full-duplex capacity with both surfaces, bit/s/Hz.
    pub cfd: f64,
    /// Half-duplex capacity without surfaces, bit/s/Hz.
    pub chd: f64,
    /// Full-duplex capacity without surfaces at the baseline suppression.
    pub cfd_no_ris: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl TrialOutcome {
    pub fn gain(&self) -> f64 {
        self.cfd / self.chd
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        if xs.is_empty() {
            return Self {
                mean: 0.0,
                std: 0.0,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub case: RcCase,
    pub trials: Vec<TrialOutcome>,
    pub sic_db: Summary,
    pub cfd: Summary,
    pub chd: Summary,
    pub gain: Summary,
    pub cfd_no_ris: Summary,
    pub iterations: Summary,
    /// Trials whose optimization met the tolerance.
    pub converged: usize,
}

impl ScenarioReport {
    fn from_trials(case: RcCase, trials: Vec<TrialOutcome>) -> Self {
        Self {
            case,
            sic_db: Summary::of(trials.iter().map(|t| t.sic_db)),
            cfd: Summary::of(trials.iter().map(|t| t.cfd)),
            chd: Summary::of(trials.iter().map(|t| t.chd)),
            gain: Summary::of(trials.iter().map(TrialOutcome::gain)),
            cfd_no_ris: Summary::of(trials.iter().map(|t| t.cfd_no_ris)),
            iterations: Summary::of(trials.iter().map(|t| t.iterations as f64)),
            converged: trials.iter().filter(|t| t.converged).count(),
            trials,
        }
    }
}

/// A validated configuration with its geometric links.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: ScenarioConfig,
    pub near_field: NearFieldLinks,
    sic: ChannelSet,
}

impl Prepared {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let cfg = cfg.validated()?;
        let near_field = near_field_links(&cfg)?;
        let sic = sic_channels(&cfg, &near_field)?;
        Ok(Self {
            cfg,
            near_field,
            sic,
        })
    }

    /// Self-interference channels the optimizer works on.
    pub fn sic_channels(&self) -> &ChannelSet {
        &self.sic
    }

    fn phase_rng(&self, trial: usize, stream: u64) -> ChaCha8Rng {
        let mut rng = self.cfg.trial_rng(trial);
        rng.set_stream(stream);
        rng
    }

    /// Optimizes the local and remote coefficients for `case`. `trial`
    /// seeds the random phases and is otherwise unused.
    pub fn optimize(&self, case: RcCase, trial: usize) -> Result<(OptResult, OptResult)> {
        let opts = self.cfg.ao_options();
        let (p1, noise) = (self.cfg.p1_watts(), self.cfg.noise_watts());
        let mut rng = self.phase_rng(trial, LOCAL_PHASE_STREAM);
        let local = alternate_optimize(&self.sic, p1, noise, case, &opts, &mut rng)?;
        let remote = if case == RcCase::Random {
            let mut rng = self.phase_rng(trial, REMOTE_PHASE_STREAM);
            alternate_optimize(&self.sic, p1, noise, case, &opts, &mut rng)?
        } else {
            local.clone()
        };
        Ok((local, remote))
    }

    /// Evaluates optimized coefficients on the channels of `trial`.
    pub fn evaluate(
        &self,
        trial: usize,
        local: &OptResult,
        remote: &OptResult,
    ) -> Result<TrialOutcome> {
        let cfg = &self.cfg;
        let r = draw_realization(cfg, &self.near_field, trial)?;
        let noise = cfg.noise_watts();
        let p2 = PowerAllocation::uniform(cfg.n_subcarriers, cfg.p2_watts());
        let p1_uniform = PowerAllocation::uniform(cfg.n_subcarriers, cfg.p1_watts());
        let phi = local.final_phi.values();
        let psi = remote.final_phi.values();
        let outcome = TrialOutcome {
            trial,
            sic_db: sic_capability(&r.local, phi, &local.final_p, noise)?,
            cfd: fd_capacity(&r.local, phi, psi, &local.final_p, &p2, noise, cfg.cp_len)?,
            chd: hd_capacity(&r.local, &p2, noise, cfg.cp_len)?,
            cfd_no_ris: fd_capacity_sic_coefficient(
                &r.local,
                sic_coefficient_from_db(cfg.baseline_sic_db),
                &p1_uniform,
                &p2,
                noise,
                cfg.cp_len,
            )?,
            iterations: local.iterations,
            converged: local.converged,
        };
        let values = [outcome.sic_db, outcome.cfd, outcome.chd, outcome.cfd_no_ris];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "trial {trial} produced non-finite metrics {values:?}"
            )));
        }
        Ok(outcome)
    }

    /// Runs `trials` realizations of `case`. Trials run in parallel; the
    /// report lists them in trial order.
    pub fn run_case(&self, case: RcCase) -> Result<ScenarioReport> {
        let trials = self.cfg.trials;
        let outcomes: Result<Vec<TrialOutcome>> = if case == RcCase::Random {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let (local, remote) = self.optimize(case, t)?;
                    self.evaluate(t, &local, &remote)
                })
                .collect()
        } else {
            let (local, remote) = self.optimize(case, 0)?;
            if local.rcg_capped {
                log::warn!("{case}: the unit-modulus solver hit its iteration cap");
            }
            (0..trials)
                .into_par_iter()
                .map(|t| self.evaluate(t, &local, &remote))
                .collect()
        };
        Ok(ScenarioReport::from_trials(case, outcomes?))
    }
}

/// Runs the configured case.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    Prepared::new(cfg)?.run_case(cfg.case)
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Surface cell count.
    N,
    /// Transmit power of both devices, dBm.
    P,
    /// Bandwidth, Hz.
    B,
    /// Number of discrete phase levels.
    Tau,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::P => "p",
            SweepAxis::B => "b",
            SweepAxis::Tau => "tau",
        }
    }

    /// Configuration and case for one sweep point.
    pub fn apply(
        self,
        base: &ScenarioConfig,
        case: RcCase,
        value: f64,
    ) -> Result<(ScenarioConfig, RcCase)> {
        let mut cfg = base.clone();
        let mut case = case;
        let as_count = |v: f64| -> Result<usize> {
            if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(
                    self.name(),
                    format!("{v} is not a positive integer"),
                ))
            }
        };
        match self {
            SweepAxis::N => cfg.n_cells = as_count(value)?,
            SweepAxis::P => {
                cfg.p1_dbm = value;
                cfg.p2_dbm = value;
            }
            SweepAxis::B => cfg.bandwidth_hz = value,
            SweepAxis::Tau => {
                if let RcCase::Discrete(_) = case {
                    let tau = u32::try_from(as_count(value)?)
                        .map_err(|_| Error::config("tau", format!("{value} is too large")))?;
                    case = RcCase::Discrete(tau);
                }
            }
        }
        cfg.case = case;
        Ok((cfg, case))
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" => Ok(SweepAxis::N),
            "p" => Ok(SweepAxis::P),
            "b" => Ok(SweepAxis::B),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::config(
                "axis",
                format!("`{other}` is not one of n, p, b, tau"),
            )),
        }
    }
}

/// One point of a sweep: a report, or the reason it failed.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub case: RcCase,
    pub outcome: std::result::Result<ScenarioReport, String>,
}

/// Runs every `(value, case)` pair in that order. Every point's
/// configuration is validated before any work starts; a point that then fails
/// numerically is recorded and the sweep continues.
pub fn sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    cases: &[RcCase],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    if cases.is_empty() {
        return Err(Error::config("case", "sweep needs at least one case"));
    }
    let mut points = Vec::with_capacity(values.len() * cases.len());
    for &value in values {
        for &case in cases {
            let (cfg, case) = axis.apply(base, case, value)?;
            points.push((value, cfg.validated()?, case));
        }
    }
    let mut out = Vec::with_capacity(points.len());
    for (value, cfg, case) in points {
        let outcome = Prepared::new(&cfg)
            .and_then(|p| p.run_case(case))
            .map_err(|e| e.to_string());
        if let Err(reason) = &outcome {
            log::warn!("{}={value} {case}: {reason}", axis.name());
        }
        out.push(SweepPoint {
            value,
            case,
            outcome,
        });
    }
    Ok(out)
}

/// One entry of an objective trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub case: RcCase,
    pub iteration: usize,
    pub objective: f64,
    pub sic_db: f64,
}

/// Objective per iteration for each case, from the first trial.
pub fn convergence(cfg: &ScenarioConfig, cases: &[RcCase]) -> Result<Vec<TracePoint>> {
    let prepared = Prepared::new(cfg)?;
    let mut out = Vec::new();
    for &case in cases {
        let (local, _) = prepared.optimize(case, 0)?;
        out.extend(
            local
                .objective_trace
                .iter()
                .zip(&local.sic_db_trace)
                .enumerate()
                .map(|(iteration, (objective, sic_db))| TracePoint {
                    case,
                    iteration,
                    objective: *objective,
                    sic_db: *sic_db,
                }),
        );
    }
    Ok(out)
}
