//! Alternating optimization of transmit powers and reflection coefficients.
//!
//! Each iteration refreshes the power auxiliaries `q`, water-fills `p`,
//! refreshes the reflection auxiliaries `l` and then solves the reflection
//! subproblem for the chosen feasible set. Every step maximizes a tight
//! surrogate, so the objective never decreases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::{auxiliary_q, optimal_powers, waterfill, RatioTerms};
use crate::rc::{
    assemble_quadratic, auxiliary_l, npp_project, random_rc, rcg_minimize_with, solve_ideal_from,
    ManifoldPoint, RcgOptions,
};
use crate::system::{sic_objective, ChannelSet, PowerAllocation, RcVector};

/// Feasible set of the reflection coefficients, or the random-phase baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RcCase {
    /// `|φ_n| ≤ 1`.
    Ideal,
    /// `|φ_n| = 1`.
    Continuous,
    /// `τ` uniformly spaced phases.
    Discrete(u32),
    /// Uniformly random phases drawn once and never optimized.
    Random,
}

impl std::fmt::Display for RcCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RcCase::Ideal => write!(f, "ideal"),
            RcCase::Continuous => write!(f, "continuous"),
            RcCase::Discrete(tau) => write!(f, "discrete:{tau}"),
            RcCase::Random => write!(f, "random"),
        }
    }
}

impl std::str::FromStr for RcCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "ideal" => Ok(RcCase::Ideal),
            "continuous" => Ok(RcCase::Continuous),
            "random" => Ok(RcCase::Random),
            _ => {
                let tau = s
                    .strip_prefix("discrete:")
                    .and_then(|t| t.parse::<u32>().ok())
                    .ok_or_else(|| {
                        Error::config(
                            "case",
                            format!("`{s}` is not ideal, continuous, discrete:<tau> or random"),
                        )
                    })?;
                if tau < 2 {
                    return Err(Error::config("case", "discrete phases need tau >= 2"));
                }
                Ok(RcCase::Discrete(tau))
            }
        }
    }
}

impl TryFrom<String> for RcCase {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RcCase> for String {
    fn from(case: RcCase) -> Self {
        case.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOptions {
    pub max_iters: usize,
    /// Stop when the relative objective change falls to this level.
    pub tol: f64,
    /// Settings of the unit-modulus solver; its tolerance applies to the
    /// reflection subproblem rescaled to unit largest entry.
    pub rcg: RcgOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            rcg: RcgOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub final_phi: RcVector,
    pub final_p: PowerAllocation,
    /// Sum-of-ratios objective, starting at the initial point.
    pub objective_trace: Vec<f64>,
    pub sic_db_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// True if any unit-modulus solve stopped at its iteration cap.
    pub rcg_capped: bool,
}

struct Loop<'a> {
    ch: &'a ChannelSet,
    budget: f64,
    noise: f64,
    opts: &'a AoOptions,
}

struct State {
    phi: RcVector,
    p: PowerAllocation,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    rcg_capped: bool,
}

impl State {
    fn finish(self) -> OptResult {
        let sic_db_trace = self.trace.iter().map(|v| 10.0 * v.log10()).collect();
        OptResult {
            final_phi: self.phi,
            final_p: self.p,
            objective_trace: self.trace,
            sic_db_trace,
            iterations: self.iterations,
            converged: self.converged,
            rcg_capped: self.rcg_capped,
        }
    }
}

impl Loop<'_> {
    fn objective(&self, phi: &RcVector, p: &PowerAllocation) -> Result<f64> {
        let v = sic_objective(self.ch, phi.values(), p, self.noise)?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is {v} (total power {:e} W, noise {:e} W)",
                p.total(),
                self.noise
            )));
        }
        Ok(v)
    }

    fn power_step(&self, phi: &RcVector, p: &PowerAllocation) -> Result<PowerAllocation> {
        let terms = RatioTerms::from_channels(self.ch, phi.values(), self.noise)?;
        let q = auxiliary_q(p, &terms)?;
        waterfill(&q, &terms, self.budget)
    }

    fn rc_step(
        &self,
        case: RcCase,
        phi: &RcVector,
        p: &PowerAllocation,
    ) -> Result<(RcVector, bool)> {
        let l = auxiliary_l(self.ch, phi.values(), p, self.noise)?;
        let qf = assemble_quadratic(self.ch, &l, p)?.normalized();
        let (next, capped) = match case {
            RcCase::Ideal => (solve_ideal_from(&qf, Some(phi.values()))?.rc, false),
            RcCase::Continuous => {
                let start = ManifoldPoint::project(phi.values());
                let out = rcg_minimize_with(&qf, &start, &self.opts.rcg)?;
                let capped = !out.converged && out.iterations >= self.opts.rcg.max_iters;
                (out.rc, capped)
            }
            RcCase::Discrete(_) | RcCase::Random => unreachable!("no reflection step for {case}"),
        };
        // The current point is feasible for both sets; keep it if round-off
        // made the solver's answer worse.
        let feasible = case == RcCase::Ideal || phi.set() != crate::system::FeasibleSet::Ideal;
        if feasible && qf.value(phi.values()) < qf.value(next.values()) {
            return Ok((phi.clone(), capped));
        }
        Ok((next, capped))
    }

    fn converged(&self, old: f64, new: f64) -> bool {
        (new - old).abs() <= self.opts.tol * old.abs()
    }

    /// Joint loop for the cases whose coefficients are optimized.
    fn joint(&self, case: RcCase) -> Result<State> {
        let m = self.ch.n_subcarriers();
        let mut s = State {
            phi: RcVector::ones(self.ch.n_cells()),
            p: PowerAllocation::zeros(m, self.budget),
            trace: Vec::new(),
            iterations: 0,
            converged: false,
            rcg_capped: false,
        };
        let mut obj = self.objective(&s.phi, &s.p)?;
        s.trace.push(obj);
        let mut phi_updated = false;
        while s.iterations < self.opts.max_iters {
            s.iterations += 1;
            let p = self.power_step(&s.phi, &s.p)?;
            // With zero power every ratio is 1 and the reflection surrogate is
            // flat. Give the reflection step one look at a uniform allocation
            // so the loop can leave that point.
            let kick = !phi_updated && p.total() == 0.0;
            let weights = if kick {
                PowerAllocation::uniform(m, self.budget)
            } else {
                p.clone()
            };
            let (phi, capped) = self.rc_step(case, &s.phi, &weights)?;
            phi_updated = true;
            s.rcg_capped |= capped;
            s.phi = phi;
            s.p = p;
            let next = self.objective(&s.phi, &s.p)?;
            s.trace.push(next);
            let done = !kick && self.converged(obj, next);
            obj = next;
            if done {
                s.converged = true;
                break;
            }
        }
        Ok(s)
    }

    /// Power-only loop at fixed coefficients. With `φ` fixed the power
    /// problem is concave and solved exactly, so the loop stops after the
    /// second iteration confirms the first.
    fn power_only(&self, phi: RcVector, p0: PowerAllocation) -> Result<State> {
        let mut s = State {
            phi,
            p: p0,
            trace: Vec::new(),
            iterations: 0,
            converged: false,
            rcg_capped: false,
        };
        let mut obj = self.objective(&s.phi, &s.p)?;
        s.trace.push(obj);
        while s.iterations < self.opts.max_iters {
            s.iterations += 1;
            let terms = RatioTerms::from_channels(self.ch, s.phi.values(), self.noise)?;
            let p = optimal_powers(&terms, self.budget)?.allocation;
            // Keep the incumbent if it is at least as good.
            if self.objective(&s.phi, &p)? >= obj {
                s.p = p;
            }
            let next = self.objective(&s.phi, &s.p)?;
            s.trace.push(next);
            let done = self.converged(obj, next);
            obj = next;
            if done {
                s.converged = true;
                break;
            }
        }
        Ok(s)
    }
}

/// Maximizes the sum-of-ratios objective for `case` under total power
/// `budget` (W) with noise power `noise` (W). `rng` is used only by
/// [`RcCase::Random`].
pub fn alternate_optimize<R: Rng + ?Sized>(
    ch: &ChannelSet,
    budget: f64,
    noise: f64,
    case: RcCase,
    opts: &AoOptions,
    rng: &mut R,
) -> Result<OptResult> {
    if !(noise.is_finite() && noise > 0.0) {
        return Err(Error::config("noise", "must be positive"));
    }
    if !budget.is_finite() {
        return Err(Error::config("power", "budget must be finite"));
    }
    if let RcCase::Discrete(tau) = case {
        if tau < 2 {
            return Err(Error::config("tau", "discrete phases need tau >= 2"));
        }
    }
    let m = ch.n_subcarriers();
    let n = ch.n_cells();
    let lp = Loop {
        ch,
        budget: budget.max(0.0),
        noise,
        opts,
    };

    let initial_phi = match case {
        RcCase::Random => random_rc(n, rng),
        _ => RcVector::ones(n),
    };
    if budget <= 0.0 {
        let p = PowerAllocation::zeros(m, 0.0);
        let obj = lp.objective(&initial_phi, &p)?;
        let phi = match case {
            RcCase::Discrete(tau) => npp_project(&initial_phi, tau)?,
            _ => initial_phi,
        };
        return Ok(State {
            phi,
            p,
            trace: vec![obj],
            iterations: 0,
            converged: true,
            rcg_capped: false,
        }
        .finish());
    }

    let state = match case {
        RcCase::Ideal | RcCase::Continuous => lp.joint(case)?,
        RcCase::Random => lp.power_only(initial_phi, PowerAllocation::zeros(m, budget))?,
        RcCase::Discrete(tau) => {
            let relaxed = lp.joint(RcCase::Continuous)?;
            let phi = npp_project(&relaxed.phi, tau)?;
            let mut s = lp.power_only(phi, relaxed.p)?;
            s.rcg_capped = relaxed.rcg_capped;
            s
        }
    };
    Ok(state.finish())
}
