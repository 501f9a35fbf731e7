//! Power allocation for a fixed reflection-coefficient vector.
//!
//! The sum of ratios `Σ (b_m p_m + σ²)/(v_m p_m + σ²)` is handled with the
//! quadratic transform: for fixed auxiliaries `q` the transformed objective
//! is concave and separable in `p`, and its KKT point is a water-filling
//! level found by bisection on the budget multiplier.

use crate::error::{Error, Result};
use crate::system::{CVector, ChannelSet, PowerAllocation};

const BUDGET_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

/// Per-subcarrier gains of the power subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTerms {
    /// `|h_{m,1}|²`, SI power gain before cancellation.
    pub b: Vec<f64>,
    /// `|h_{m,1} + h_{m,R}^H φ|²`, residual SI power gain.
    pub v: Vec<f64>,
    pub noise: f64,
}

impl RatioTerms {
    pub fn new(b: Vec<f64>, v: Vec<f64>, noise: f64) -> Result<Self> {
        if b.len() != v.len() {
            return Err(Error::Dimension {
                what: "residual gains",
                expected: b.len(),
                found: v.len(),
            });
        }
        if !(noise.is_finite() && noise > 0.0) {
            return Err(Error::config("noise", "must be positive"));
        }
        if b.iter()
            .chain(v.iter())
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return Err(Error::Numerical(
                "ratio gains must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { b, v, noise })
    }

    pub fn from_channels(ch: &ChannelSet, phi: &CVector, noise: f64) -> Result<Self> {
        if phi.len() != ch.n_cells() {
            return Err(Error::Dimension {
                what: "reflection coefficients",
                expected: ch.n_cells(),
                found: phi.len(),
            });
        }
        let b = ch.si_gain().iter().map(|h| h.norm_sqr()).collect();
        Self::new(b, ch.residual_si_power(phi), noise)
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    fn check(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Dimension {
                what,
                expected: self.len(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Sum-of-ratios objective for powers `p`.
pub fn ratio_objective(p: &[f64], terms: &RatioTerms) -> f64 {
    p.iter()
        .zip(terms.b.iter().zip(&terms.v))
        .map(|(pm, (b, v))| (b * pm + terms.noise) / (v * pm + terms.noise))
        .sum()
}

/// Quadratic-transform surrogate `Σ 2q√(b p + σ²) − q²(v p + σ²)`.
pub fn transformed_objective(p: &[f64], q: &[f64], terms: &RatioTerms) -> f64 {
    p.iter()
        .zip(q)
        .zip(terms.b.iter().zip(&terms.v))
        .map(|((pm, qm), (b, v))| {
            2.0 * qm * (b * pm + terms.noise).sqrt() - qm * qm * (v * pm + terms.noise)
        })
        .sum()
}

/// Optimal auxiliaries `q_m = √(b_m p_m + σ²) / (v_m p_m + σ²)` for fixed powers.
pub fn auxiliary_q(p: &PowerAllocation, terms: &RatioTerms) -> Result<Vec<f64>> {
    terms.check("power allocation", p.len())?;
    Ok(p.powers()
        .iter()
        .zip(terms.b.iter().zip(&terms.v))
        .map(|(pm, (b, v))| (b * pm + terms.noise).sqrt() / (v * pm + terms.noise))
        .collect())
}

/// Water-filling solution together with its budget multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct Waterfill {
    pub allocation: PowerAllocation,
    /// Multiplier on the total-power constraint; zero when slack.
    pub multiplier: f64,
}

fn powers_at(level: f64, q: &[f64], terms: &RatioTerms) -> Vec<f64> {
    q.iter()
        .zip(terms.b.iter().zip(&terms.v))
        .map(|(qm, (b, v))| {
            if *b <= 0.0 || *qm <= 0.0 {
                return 0.0;
            }
            let q2 = qm * qm;
            let denom = level + q2 * v;
            if denom <= 0.0 {
                return f64::INFINITY;
            }
            (q2 * b / (denom * denom) - terms.noise / b).max(0.0)
        })
        .collect()
}

/// Maximizes the transformed objective over `p ≥ 0, Σp ≤ budget` for fixed `q`.
pub fn waterfill(q: &[f64], terms: &RatioTerms, budget: f64) -> Result<PowerAllocation> {
    Ok(waterfill_with_multiplier(q, terms, budget)?.allocation)
}

pub fn waterfill_with_multiplier(q: &[f64], terms: &RatioTerms, budget: f64) -> Result<Waterfill> {
    terms.check("auxiliary q", q.len())?;
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite auxiliary variable".into()));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Ok(Waterfill {
            allocation: PowerAllocation::zeros(q.len(), budget.max(0.0)),
            multiplier: 0.0,
        });
    }

    let free = powers_at(0.0, q, terms);
    let free_total: f64 = free.iter().sum();
    if free_total.is_finite() && free_total <= budget {
        return Ok(Waterfill {
            allocation: PowerAllocation::new(free, budget)?,
            multiplier: 0.0,
        });
    }

    // Above this level every subcarrier is switched off.
    let hi = q
        .iter()
        .zip(&terms.b)
        .map(|(qm, b)| qm * b / terms.noise.sqrt())
        .fold(0.0, f64::max);
    let (p, multiplier) = bisect_level(0.0, hi, budget, |level| powers_at(level, q, terms));
    Ok(Waterfill {
        allocation: PowerAllocation::new(p, budget)?,
        multiplier,
    })
}

/// Finds the smallest level in `[lo, hi]` whose allocation fits the budget.
/// `powers` must be nonincreasing in the level and fit at `hi`.
fn bisect_level(
    mut lo: f64,
    mut hi: f64,
    budget: f64,
    powers: impl Fn(f64) -> Vec<f64>,
) -> (Vec<f64>, f64) {
    let mut p = powers(hi);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let trial = powers(mid);
        let total: f64 = trial.iter().sum();
        if total > budget {
            lo = mid;
        } else {
            hi = mid;
            p = trial;
            if budget - total <= BUDGET_TOL * budget {
                break;
            }
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    (p, hi)
}

/// Maximizes the ratio objective itself over `p ≥ 0, Σp ≤ budget`.
///
/// Each ratio is `b/v − σ²(b − v)/(v(v p + σ²))`: concave and increasing when
/// `b > v`, nonincreasing otherwise. The problem is therefore a separable
/// concave program whose KKT point is a water-filling level.
pub fn optimal_powers(terms: &RatioTerms, budget: f64) -> Result<Waterfill> {
    let m_total = terms.len();
    if !(budget.is_finite() && budget > 0.0) {
        return Ok(Waterfill {
            allocation: PowerAllocation::zeros(m_total, budget.max(0.0)),
            multiplier: 0.0,
        });
    }
    let s2 = terms.noise;
    // Marginal gain at zero power.
    let slope0: Vec<f64> = terms
        .b
        .iter()
        .zip(&terms.v)
        .map(|(b, v)| (b - v) / s2)
        .collect();
    // Subcarriers with no residual have a constant marginal `b/σ²`.
    let linear_best = (0..m_total)
        .filter(|&m| terms.v[m] == 0.0 && terms.b[m] > 0.0)
        .max_by(|&i, &j| slope0[i].total_cmp(&slope0[j]));
    let at = |level: f64| -> Vec<f64> {
        (0..m_total)
            .map(|m| {
                let (b, v) = (terms.b[m], terms.v[m]);
                if b <= v || v == 0.0 || level >= slope0[m] {
                    return 0.0;
                }
                ((s2 * (b - v) / level).sqrt() - s2) / v
            })
            .map(|p| p.max(0.0))
            .collect()
    };

    if let Some(best) = linear_best {
        let floor = slope0[best];
        let mut p = at(floor);
        let used: f64 = p.iter().sum();
        if used <= budget {
            p[best] = budget - used;
            return Ok(Waterfill {
                allocation: PowerAllocation::new(p, budget)?,
                multiplier: floor,
            });
        }
        let hi = slope0.iter().cloned().fold(0.0, f64::max);
        let (p, level) = bisect_level(floor, hi, budget, at);
        return Ok(Waterfill {
            allocation: PowerAllocation::new(p, budget)?,
            multiplier: level,
        });
    }
    let hi = slope0.iter().cloned().fold(0.0, f64::max);
    if hi <= 0.0 {
        return Ok(Waterfill {
            allocation: PowerAllocation::zeros(m_total, budget),
            multiplier: 0.0,
        });
    }
    let (p, level) = bisect_level(0.0, hi, budget, at);
    Ok(Waterfill {
        allocation: PowerAllocation::new(p, budget)?,
        multiplier: level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn terms(b: Vec<f64>, v: Vec<f64>, noise: f64) -> RatioTerms {
        RatioTerms::new(b, v, noise).unwrap()
    }

    pub(crate) fn random_instance(seed: u64, m: usize) -> (RatioTerms, Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = (0..m).map(|_| rng.gen_range(0.1..2.0)).collect();
        let v = (0..m).map(|_| rng.gen_range(0.01..1.0)).collect();
        let noise = rng.gen_range(0.05..0.5);
        let q = (0..m).map(|_| rng.gen_range(0.5..3.0)).collect();
        let budget = rng.gen_range(0.2..3.0);
        (terms(b, v, noise), q, budget)
    }

    #[test]
    fn q_at_zero_power_is_inverse_noise_amplitude() {
        let t = terms(vec![1.0, 2.0], vec![0.5, 3.0], 0.04);
        let q = auxiliary_q(&PowerAllocation::zeros(2, 1.0), &t).unwrap();
        for x in q {
            assert_relative_eq!(x, 1.0 / 0.2, max_relative = 1e-14);
        }
    }

    #[test]
    fn q_collapses_without_cancellation() {
        let t = terms(vec![1.0, 2.0], vec![1.0, 2.0], 0.04);
        let p = PowerAllocation::new(vec![0.3, 0.5], 1.0).unwrap();
        let q = auxiliary_q(&p, &t).unwrap();
        assert_relative_eq!(q[0], 1.0 / (0.3f64 + 0.04).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(q[1], 1.0 / (1.0f64 + 0.04).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn q_matches_direct_formula() {
        let (t, _, _) = random_instance(4, 6);
        let p = PowerAllocation::new(vec![0.1, 0.0, 0.2, 0.05, 0.3, 0.01], 1.0).unwrap();
        let q = auxiliary_q(&p, &t).unwrap();
        for m in 0..6 {
            let pm = p.powers()[m];
            let expect = (t.b[m] * pm + t.noise).sqrt() / (t.v[m] * pm + t.noise);
            assert_relative_eq!(q[m], expect, max_relative = 1e-15);
        }
    }

    #[test]
    fn single_subcarrier_takes_whole_budget() {
        let t = terms(vec![1.0], vec![0.01], 0.01);
        let q = vec![10.0];
        let free = powers_at(0.0, &q, &t)[0];
        assert!(free > 0.5);
        let p = waterfill(&q, &t, 0.5).unwrap();
        assert_relative_eq!(p.powers()[0], 0.5, max_relative = 1e-9);
    }

    #[test]
    fn identical_subcarriers_split_evenly() {
        let t = terms(vec![1.0, 1.0], vec![0.01, 0.01], 0.01);
        let p = waterfill(&[10.0, 10.0], &t, 0.5).unwrap();
        assert_relative_eq!(p.powers()[0], 0.25, max_relative = 1e-9);
        assert_relative_eq!(p.powers()[1], 0.25, max_relative = 1e-9);
    }

    #[test]
    fn zero_budget_allocates_nothing() {
        let (t, q, _) = random_instance(1, 4);
        for budget in [0.0, -1.0] {
            let p = waterfill(&q, &t, budget).unwrap();
            assert!(p.powers().iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn dead_subcarrier_gets_nothing() {
        let t = terms(vec![0.0, 1.0], vec![0.0, 0.01], 0.01);
        let p = waterfill(&[5.0, 5.0], &t, 1.0).unwrap();
        assert_eq!(p.powers()[0], 0.0);
        assert!(p.powers()[1] > 0.0);
    }

    #[test]
    fn perfect_cancellation_is_capped_by_budget() {
        let t = terms(vec![1.0, 1.0], vec![0.0, 0.5], 0.01);
        let p = waterfill(&[2.0, 2.0], &t, 1.0).unwrap();
        assert_relative_eq!(p.total(), 1.0, max_relative = 1e-9);
        assert!(p.powers()[0] > p.powers()[1]);
    }

    #[test]
    fn slack_budget_keeps_zero_multiplier() {
        // v > b: the ratio falls with power, so nothing is spent.
        let t = terms(vec![1.0], vec![2.0], 0.01);
        let q = auxiliary_q(&PowerAllocation::zeros(1, 1.0), &t).unwrap();
        let w = waterfill_with_multiplier(&q, &t, 1.0).unwrap();
        assert_eq!(w.multiplier, 0.0);
        assert_eq!(w.allocation.powers()[0], 0.0);
    }

    #[test]
    fn stationarity_holds_on_active_subcarriers() {
        for seed in 0..50 {
            let (t, q, budget) = random_instance(seed, 8);
            let w = waterfill_with_multiplier(&q, &t, budget).unwrap();
            let total = w.allocation.total();
            if w.multiplier > 0.0 {
                assert!((total - budget).abs() <= 1e-9 * budget);
            } else {
                assert!(total <= budget);
            }
            for m in 0..8 {
                let pm = w.allocation.powers()[m];
                let grad = q[m] * t.b[m] / (t.b[m] * pm + t.noise).sqrt() - q[m] * q[m] * t.v[m];
                if pm > 0.0 {
                    assert!((grad - w.multiplier).abs() <= 1e-8 * grad.abs().max(w.multiplier));
                } else {
                    assert!(grad <= w.multiplier * (1.0 + 1e-8));
                }
            }
        }
    }

    /// Repeats quadratic-transform rounds until they stall.
    fn fp_limit(t: &RatioTerms, budget: f64) -> PowerAllocation {
        let mut p = PowerAllocation::zeros(t.len(), budget);
        for _ in 0..20_000 {
            let q = auxiliary_q(&p, t).unwrap();
            p = waterfill(&q, t, budget).unwrap();
        }
        p
    }

    #[test]
    fn exact_solution_is_the_fp_fixed_point() {
        for seed in 0..10 {
            let (t, _, budget) = random_instance(seed, 5);
            let exact = optimal_powers(&t, budget).unwrap();
            let fp = fp_limit(&t, budget);
            let (a, b) = (
                ratio_objective(exact.allocation.powers(), &t),
                ratio_objective(fp.powers(), &t),
            );
            assert!(a >= b - 1e-9 * b, "seed {seed}: {a} < {b}");
            assert!(a <= b + 1e-6 * b, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn exact_solution_handles_perfect_cancellation() {
        let t = terms(vec![1.0, 1.0, 0.5], vec![0.0, 0.5, 0.6], 0.01);
        let w = optimal_powers(&t, 1.0).unwrap();
        assert_relative_eq!(w.allocation.total(), 1.0, max_relative = 1e-9);
        assert_eq!(w.allocation.powers()[2], 0.0);
        // A linear ratio with slope 100 beats the other's slope 50 everywhere.
        assert_relative_eq!(w.allocation.powers()[0], 1.0, max_relative = 1e-9);
    }

    #[test]
    fn exact_solution_spends_nothing_on_losing_subcarriers() {
        let t = terms(vec![1.0, 1.0], vec![2.0, 1.0], 0.01);
        let w = optimal_powers(&t, 1.0).unwrap();
        assert_eq!(w.allocation.total(), 0.0);
    }

    proptest! {
        #[test]
        fn exact_solution_beats_random_feasible_points(seed in any::<u64>(), m in 1usize..7) {
            let (t, _, budget) = random_instance(seed, m);
            let best = ratio_objective(optimal_powers(&t, budget).unwrap().allocation.powers(), &t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            for _ in 0..100 {
                let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum::<f64>().max(1e-12);
                let scale = rng.gen_range(0.0..=1.0) * budget / s;
                let p: Vec<f64> = raw.iter().map(|x| x * scale).collect();
                prop_assert!(ratio_objective(&p, &t) <= best * (1.0 + 1e-9));
            }
        }

        #[test]
        fn allocation_meets_budget(seed in any::<u64>()) {
            let (t, q, budget) = random_instance(seed, 6);
            let p = waterfill(&q, &t, budget).unwrap();
            let free: f64 = powers_at(0.0, &q, &t).iter().sum();
            prop_assert!(p.powers().iter().all(|x| *x >= 0.0));
            prop_assert!((p.total() - free.min(budget)).abs() <= 1e-9 * budget);
        }

        #[test]
        fn total_power_nonincreasing_in_level(seed in any::<u64>(), a in 0.0..5.0f64, d in 0.0..5.0f64) {
            let (t, q, _) = random_instance(seed, 6);
            let lo: f64 = powers_at(a, &q, &t).iter().sum();
            let hi: f64 = powers_at(a + d, &q, &t).iter().sum();
            prop_assert!(hi <= lo + 1e-12);
        }

        #[test]
        fn fp_round_never_decreases_ratio_objective(seed in any::<u64>(), m in 1usize..9) {
            let (t, _, budget) = random_instance(seed, m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum::<f64>().max(1e-12);
            let p0 = PowerAllocation::new(raw.iter().map(|x| x / s * budget * 0.9).collect(), budget).unwrap();
            let before = ratio_objective(p0.powers(), &t);
            let q = auxiliary_q(&p0, &t).unwrap();
            let p1 = waterfill(&q, &t, budget).unwrap();
            let after = ratio_objective(p1.powers(), &t);
            prop_assert!(after >= before - 1e-12 * before.abs());
        }
    }
}
