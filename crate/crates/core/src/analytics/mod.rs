//! Closed-form and numeric evaluation of the linkage attacks.

mod accuracy;
mod bloom;
mod laplace;
mod metrics;

pub use accuracy::{
    monte_carlo_accuracy, theorem_accuracy, theorem_breakdown, AccuracyBreakdown,
    AccuracyParams, McEstimate, QuadratureSettings, StepRule,
};
pub use bloom::{bloom_fpr_bound, choose_bloom_m};
pub use laplace::{laplace_cdf, laplace_pdf, log_likelihood_h1, log_posterior_nonzero, posterior_nonzero};
pub use metrics::{fpr, ppv};
