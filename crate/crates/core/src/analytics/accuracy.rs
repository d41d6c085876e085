//! Expected accuracy of the single-target argmax predictor.
//!
//! With every colluder reporting the full budget and the histogram rescaled by
//! that budget, the target's bucket reads `n + Y_j` and each other candidate's
//! reads `Y_i`, all noise terms i.i.d. Laplace(0, 1/epsilon). The accuracy is
//! `integral f(y) F(n + y)^(u-1) dy`, split into `y > 0` (case 1A), `-n < y < 0`
//! (case 1B), both evaluated with the midpoint rule, and `y < -n` (case 2B),
//! which has the closed form `e^(-epsilon n) / (u 2^u)`.

use rand::{Rng, SeedableRng};

use crate::aggregation::sample_laplace_unchecked;
use crate::error::{invalid, Result};
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyParams {
    pub epsilon: f64,
    /// Candidate count, including the target.
    pub users: u64,
    /// Colluding buyers.
    pub colluders: u32,
}

impl AccuracyParams {
    pub fn new(epsilon: f64, users: u64, colluders: u32) -> Result<Self> {
        let p = AccuracyParams { epsilon, users, colluders };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon must be positive"));
        }
        if self.users < 2 {
            return Err(invalid("need at least two candidate users"));
        }
        Ok(())
    }
}

/// Width of the midpoint-rule intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Unit-width intervals centred on half-integers.
    Unit,
    /// `1 / (epsilon * k)`: `k` intervals per noise scale.
    PerNoiseScale(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Stop a tail sum once the density mass still ahead falls below this.
    pub tail_cutoff: f64,
    pub max_terms: usize,
    pub step: StepRule,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            tail_cutoff: 1e-15,
            max_terms: 1_000_000,
            step: StepRule::PerNoiseScale(1000),
        }
    }
}

impl QuadratureSettings {
    pub fn unit_step() -> Self {
        QuadratureSettings { step: StepRule::Unit, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyBreakdown {
    pub case_1a: f64,
    pub case_1b: f64,
    pub case_2b: f64,
}

impl AccuracyBreakdown {
    pub fn total(&self) -> f64 {
        (self.case_1a + self.case_1b + self.case_2b).clamp(0.0, 1.0)
    }
}

/// `F(z)^(u-1)` for `z >= 0`, with `F(z) = 1 - e^(-epsilon z) / 2`.
fn cdf_power(epsilon: f64, z: f64, others: f64) -> f64 {
    (others * (-0.5 * (-epsilon * z).exp()).ln_1p()).exp()
}

pub fn theorem_breakdown(p: &AccuracyParams, q: &QuadratureSettings) -> Result<AccuracyBreakdown> {
    p.validate()?;
    if !(q.tail_cutoff > 0.0) {
        return Err(invalid("tail cutoff must be positive"));
    }
    let eps = p.epsilon;
    let n = p.colluders as f64;
    let others = (p.users - 1) as f64;

    let step_1a = match q.step {
        StepRule::Unit => 1.0,
        StepRule::PerNoiseScale(k) => 1.0 / (eps * k.max(1) as f64),
    };
    let mut case_1a = 0.0;
    for i in 0..q.max_terms {
        let left = i as f64 * step_1a;
        if 0.5 * (-eps * left).exp() < q.tail_cutoff {
            break;
        }
        let x = left + 0.5 * step_1a;
        case_1a += step_1a * 0.5 * eps * (-eps * x).exp() * cdf_power(eps, n + x, others);
    }

    // [-n, 0] is split into equal intervals, summed from 0 downwards because
    // both factors of the integrand shrink toward -n.
    let mut case_1b = 0.0;
    if p.colluders > 0 {
        let intervals = match q.step {
            StepRule::Unit => p.colluders as usize,
            StepRule::PerNoiseScale(k) => (n * eps * k.max(1) as f64).ceil().max(1.0) as usize,
        };
        let step = n / intervals as f64;
        for i in 0..intervals.min(q.max_terms) {
            let right = -(i as f64) * step;
            if 0.5 * ((eps * right).exp() - (-eps * n).exp()) < q.tail_cutoff {
                break;
            }
            let y = right - 0.5 * step;
            case_1b += step * 0.5 * eps * (eps * y).exp() * cdf_power(eps, n + y, others);
        }
    }

    let u = p.users as f64;
    let case_2b = (-eps * n - u.ln() - u * std::f64::consts::LN_2).exp();
    Ok(AccuracyBreakdown { case_1a, case_1b, case_2b })
}

/// Probability that the argmax of the noisy histogram is the target bucket.
pub fn theorem_accuracy(p: &AccuracyParams, q: &QuadratureSettings) -> Result<f64> {
    Ok(theorem_breakdown(p, q)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    /// Binomial standard error using the add-one-each-way proportion so that
    /// all-success or all-failure runs still report a non-zero error.
    pub standard_error: f64,
    pub trials: u64,
    pub successes: u64,
}

/// Above this many noise draws per run, the competitors' maximum is drawn
/// from its order-statistic distribution instead of one draw per competitor.
const DIRECT_DRAW_LIMIT: u64 = 50_000_000;

/// Simulates the argmax predictor. Ties count as failures. Accepts
/// `colluders = 0` (target indistinguishable from the rest).
pub fn monte_carlo_accuracy(p: &AccuracyParams, trials: u64, seed: u64) -> Result<McEstimate> {
    p.validate()?;
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let scale = 1.0 / p.epsilon;
    let n = p.colluders as f64;
    let others = p.users - 1;
    let mut rng = SimRng::seed_from_u64(seed);
    let direct = others.saturating_mul(trials) <= DIRECT_DRAW_LIMIT;
    let mut successes = 0u64;
    for _ in 0..trials {
        let target = n + sample_laplace_unchecked(scale, &mut rng);
        let best_other = if direct {
            (0..others)
                .map(|_| sample_laplace_unchecked(scale, &mut rng))
                .fold(f64::NEG_INFINITY, f64::max)
        } else {
            max_of_laplace(scale, others, &mut rng)
        };
        if target > best_other {
            successes += 1;
        }
    }
    let estimate = successes as f64 / trials as f64;
    let adjusted = (successes as f64 + 1.0) / (trials as f64 + 2.0);
    let standard_error = (adjusted * (1.0 - adjusted) / trials as f64).sqrt();
    Ok(McEstimate { estimate, standard_error, trials, successes })
}

/// Draws the maximum of `count` i.i.d. Laplace(0, scale) variables by
/// inverting `F(x)^count` at a uniform draw.
fn max_of_laplace<R: Rng + ?Sized>(scale: f64, count: u64, rng: &mut R) -> f64 {
    let v: f64 = loop {
        let v = rng.random::<f64>();
        if v > 0.0 {
            break v;
        }
    };
    let log_p = v.ln() / count as f64;
    let upper = -log_p.exp_m1();
    if upper <= 0.5 {
        -scale * (2.0 * upper).ln()
    } else {
        scale * (2.0 * log_p.exp()).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64, u: u64, n: u32) -> AccuracyParams {
        AccuracyParams::new(eps, u, n).unwrap()
    }

    #[test]
    fn reported_thresholds() {
        let q = QuadratureSettings::default();
        assert!(theorem_accuracy(&params(10.0, 1_000_000, 2), &q).unwrap() > 0.99);
        assert!(theorem_accuracy(&params(1.0, 1000, 13), &q).unwrap() >= 0.99);
        assert!(theorem_accuracy(&params(1.0, 1000, 12), &q).unwrap() < 0.99);
    }

    #[test]
    fn unit_step_underestimates_sharp_noise() {
        // Unit-width midpoints cannot resolve a density that decays over 1/epsilon.
        let coarse = theorem_accuracy(&params(10.0, 1_000_000, 2), &QuadratureSettings::unit_step()).unwrap();
        assert!(coarse < 0.1, "{coarse}");
        let fine = theorem_accuracy(&params(10.0, 1_000_000, 2), &QuadratureSettings::default()).unwrap();
        assert!(fine > 0.99);
    }

    #[test]
    fn unit_step_follows_half_integer_midpoints() {
        // Hand-evaluated sums for epsilon = 1, u = 2, n = 1.
        let eps: f64 = 1.0;
        let mut case_1a = 0.0;
        for i in 1..200 {
            let x = i as f64 - 0.5;
            case_1a += eps / 2.0 * (-eps * x).exp() * (1.0 - 0.5 * (-eps * (1.0 + x)).exp());
        }
        let case_1b = eps / 2.0 * (-0.5 * eps).exp() * (1.0 - 0.5 * (-0.5 * eps).exp());
        let case_2b = (-eps).exp() / (2.0 * 4.0);
        let b = theorem_breakdown(&params(1.0, 2, 1), &QuadratureSettings::unit_step()).unwrap();
        assert!((b.case_1a - case_1a).abs() < 1e-12);
        assert!((b.case_1b - case_1b).abs() < 1e-15);
        assert!((b.case_2b - case_2b).abs() < 1e-15);
    }

    #[test]
    fn case_sums_nonnegative_and_total_bounded() {
        for eps in [0.5, 1.0, 3.0, 10.0, 64.0] {
            for u in [2, 10, 1000, 100_000] {
                for n in [0, 1, 5, 15] {
                    let b = theorem_breakdown(&params(eps, u, n), &QuadratureSettings::default()).unwrap();
                    assert!(b.case_1a >= 0.0 && b.case_1b >= 0.0 && b.case_2b >= 0.0);
                    assert!((0.0..=1.0).contains(&b.total()));
                }
            }
        }
    }

    #[test]
    fn zero_colluders_is_uniform_guess() {
        for u in [2u64, 10, 1000] {
            let a = theorem_accuracy(&params(1.0, u, 0), &QuadratureSettings::default()).unwrap();
            assert!((a - 1.0 / u as f64).abs() < 1e-6, "u={u} a={a}");
            let mc = monte_carlo_accuracy(&params(1.0, u, 0), 100_000, 9).unwrap();
            assert!((mc.estimate - 1.0 / u as f64).abs() <= 3.0 * mc.standard_error);
        }
    }

    #[test]
    fn monotone_in_colluders_epsilon_and_users() {
        let q = QuadratureSettings::default();
        let acc = |e, u, n| theorem_accuracy(&params(e, u, n), &q).unwrap();
        for eps in [0.5, 1.0, 3.0] {
            for u in [10u64, 1000] {
                let mut prev = 0.0;
                for n in 0..20 {
                    let a = acc(eps, u, n);
                    assert!(a >= prev - 1e-12);
                    prev = a;
                }
            }
        }
        for n in [1, 5] {
            let mut prev = 0.0;
            for eps in [0.2, 0.5, 1.0, 2.0, 5.0] {
                let a = acc(eps, 100, n);
                assert!(a >= prev - 1e-12);
                prev = a;
            }
            let mut prev = 1.0;
            for u in [2u64, 10, 100, 10_000] {
                let a = acc(1.0, u, n);
                assert!(a <= prev + 1e-12);
                prev = a;
            }
        }
    }

    #[test]
    fn small_case_matches_monte_carlo() {
        let p = params(1.0, 2, 1);
        let exact = theorem_accuracy(&p, &QuadratureSettings::default()).unwrap();
        let mc = monte_carlo_accuracy(&p, 1_000_000, 42).unwrap();
        assert!((exact - mc.estimate).abs() <= 3.0 * mc.standard_error, "{exact} vs {mc:?}");
    }

    #[test]
    fn dominated_argmax() {
        let mc = monte_carlo_accuracy(&params(1.0, 10, 1000), 10_000, 1).unwrap();
        assert_eq!(mc.estimate, 1.0);
        assert!(mc.standard_error > 0.0);
    }

    #[test]
    fn order_statistic_shortcut_agrees_with_direct_draws() {
        // Compare empirical CDFs of the maximum of 50 draws at a few points.
        let mut rng = SimRng::seed_from_u64(5);
        let trials = 40_000;
        let mut direct = Vec::with_capacity(trials);
        let mut shortcut = Vec::with_capacity(trials);
        for _ in 0..trials {
            direct.push((0..50).map(|_| sample_laplace_unchecked(1.0, &mut rng)).fold(f64::MIN, f64::max));
            shortcut.push(max_of_laplace(1.0, 50, &mut rng));
        }
        for t in [1.0, 2.0, 3.0, 4.0, 6.0] {
            let a = direct.iter().filter(|&&x| x <= t).count() as f64 / trials as f64;
            let b = shortcut.iter().filter(|&&x| x <= t).count() as f64 / trials as f64;
            let exact = (1.0 - 0.5 * (-t).exp()).powi(50);
            assert!((a - exact).abs() < 0.012 && (b - exact).abs() < 0.012, "t={t} {a} {b} {exact}");
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(AccuracyParams::new(0.0, 10, 1).is_err());
        assert!(AccuracyParams::new(1.0, 1, 1).is_err());
        assert!(monte_carlo_accuracy(&params(1.0, 2, 1), 0, 0).is_err());
    }
}
