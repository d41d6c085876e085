use crate::error::{invalid, Result};

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("laplace scale must be positive and finite, got {scale}")))
    }
}

pub fn laplace_pdf(x: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    Ok((-x.abs() / scale).exp() / (2.0 * scale))
}

pub fn laplace_cdf(x: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    Ok(if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    })
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Posterior that an observed noisy count `x` came from a true value `c`
/// rather than zero, under equal priors.
pub fn posterior_nonzero(x: f64, c: f64, scale: f64) -> Result<f64> {
    Ok(log_posterior_nonzero(x, c, scale)?.exp())
}

/// Natural log of [`posterior_nonzero`], stable for large `|x|`.
pub fn log_posterior_nonzero(x: f64, c: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    if !(c > 0.0) {
        return Err(invalid("true value c must be positive"));
    }
    // f(x-c) / (f(x) + f(x-c)) = 1 / (1 + exp((|x-c| - |x|) / scale))
    Ok(-softplus(((x - c).abs() - x.abs()) / scale))
}

/// Log-likelihood that every position holds `c`: a sum of log posteriors,
/// order-equivalent to their product.
pub fn log_likelihood_h1(xs: &[f64], c: f64, scale: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(invalid("log_likelihood_h1 needs at least one observation"));
    }
    xs.iter().map(|&x| log_posterior_nonzero(x, c, scale)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cdf_symmetry() {
        assert_eq!(laplace_cdf(0.0, 2.0).unwrap(), 0.5);
        for i in -50..50 {
            let x = i as f64 * 0.37;
            let s = laplace_cdf(x, 1.3).unwrap() + laplace_cdf(-x, 1.3).unwrap();
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert!(laplace_cdf(1.0, 0.0).is_err());
        assert!(laplace_pdf(1.0, -1.0).is_err());
    }

    #[test]
    fn cdf_derivative_matches_pdf() {
        let h = 1e-6;
        for scale in [0.1, 1.0, 6553.6] {
            for i in -40..=40 {
                let x = scale * i as f64 / 7.0 + 1e-3 * scale;
                let numeric = (laplace_cdf(x + h * scale, scale).unwrap()
                    - laplace_cdf(x - h * scale, scale).unwrap())
                    / (2.0 * h * scale);
                let exact = laplace_pdf(x, scale).unwrap();
                assert!((numeric - exact).abs() * scale < 1e-6, "x={x} scale={scale}");
            }
        }
    }

    #[test]
    fn posterior_midpoint_and_peak() {
        let (c, s) = (65_520.0, 6_553.6);
        assert!((posterior_nonzero(c / 2.0, c, s).unwrap() - 0.5).abs() < 1e-15);
        // f(0) / (f(c) + f(0)) evaluated directly from densities.
        let direct = laplace_pdf(0.0, s).unwrap()
            / (laplace_pdf(c, s).unwrap() + laplace_pdf(0.0, s).unwrap());
        let at_c = posterior_nonzero(c, c, s).unwrap();
        assert!((at_c - direct).abs() < 1e-14);
        assert!((at_c - 1.0 / (1.0 + (-c / s).exp())).abs() < 1e-14);
        assert!(at_c > 0.5);
        assert!(posterior_nonzero(0.0, c, s).unwrap() < 0.5);
    }

    #[test]
    fn posterior_far_left_tail_is_constant() {
        let (c, s): (f64, f64) = (3.0, 2.0);
        let limit = (-c / s).exp() / (1.0 + (-c / s).exp());
        let at = posterior_nonzero(-1e6, c, s).unwrap();
        assert!((at - limit).abs() < 1e-12);
        assert!(posterior_nonzero(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn likelihood_examples() {
        let c = 10.0;
        let all_half = log_likelihood_h1(&[5.0; 20], c, 3.0).unwrap();
        assert!((all_half - 20.0 * 0.5f64.ln()).abs() < 1e-12);
        let single = log_likelihood_h1(&[7.0], c, 3.0).unwrap();
        assert!((single - posterior_nonzero(7.0, c, 3.0).unwrap().ln()).abs() < 1e-12);
        assert!(log_likelihood_h1(&[], c, 3.0).is_err());
    }

    #[test]
    fn log_posterior_is_finite_far_out() {
        assert!(log_posterior_nonzero(1e12, 1.0, 1e-3).unwrap().is_finite());
        assert!(log_posterior_nonzero(-1e12, 1.0, 1e-3).unwrap().is_finite());
    }

    proptest! {
        #[test]
        fn likelihood_monotone_toward_c(
            xs in proptest::collection::vec(-50.0f64..50.0, 1..20),
            idx in any::<proptest::sample::Index>(),
            bump in 0.0f64..1.0,
        ) {
            let c = 40.0;
            let scale = 7.0;
            let i = idx.index(xs.len());
            let mut raised = xs.clone();
            if raised[i] < c {
                raised[i] += bump * (c - raised[i]);
            }
            let before = log_likelihood_h1(&xs, c, scale).unwrap();
            let after = log_likelihood_h1(&raised, c, scale).unwrap();
            prop_assert!(after >= before - 1e-12);
        }
    }
}
