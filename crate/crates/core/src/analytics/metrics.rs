use std::collections::HashSet;

use crate::error::{invalid, Result};
use crate::model::Uid;

/// Fraction of accusations that hit a true visitor.
pub fn ppv(accused: &HashSet<Uid>, truth: &HashSet<Uid>) -> Result<f64> {
    if accused.is_empty() {
        return Err(invalid("ppv is undefined without accusations"));
    }
    Ok(accused.intersection(truth).count() as f64 / accused.len() as f64)
}

/// Fraction of non-visitors in the pool that were accused. A pool made up
/// entirely of visitors has no one to falsely accuse and yields 0.
pub fn fpr(accused: &HashSet<Uid>, truth: &HashSet<Uid>, pool_size: usize) -> Result<f64> {
    if truth.len() > pool_size {
        return Err(invalid("truth set larger than the pool"));
    }
    let negatives = pool_size - truth.len();
    if negatives == 0 {
        return Ok(0.0);
    }
    Ok(accused.difference(truth).count() as f64 / negatives as f64)
}
