//! Trusted aggregation service: opens sealed reports, sums contributions for
//! the requested buckets and releases them with Laplace noise. Each report can
//! be aggregated at most once.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::model::{BucketKey, OpeningKey, ReportId, SealedReport, CONTRIBUTION_BUDGET};

pub const DEFAULT_EPSILON: f64 = 10.0;
pub const MAX_EPSILON: f64 = 64.0;

/// Draws from Laplace(0, scale) by inverting the CDF at a uniform draw.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid(format!("laplace scale must be positive, got {scale}")));
    }
    Ok(sample_laplace_unchecked(scale, rng))
}

pub(crate) fn sample_laplace_unchecked<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        // u in [-1/2, 1/2); u = -1/2 would map to -infinity.
        let u = rng.random::<f64>() - 0.5;
        if u > -0.5 {
            return -scale * u.signum() * (-2.0 * u.abs()).ln_1p();
        }
    }
}

/// Whether released values carry noise. `Disabled` exists for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Laplace,
    Disabled,
}

/// Adds independent Laplace(0, l1/epsilon) noise to each value in place.
pub fn add_noise<R: Rng + ?Sized>(
    values: &mut [f64],
    epsilon: f64,
    l1: f64,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<()> {
    check_epsilon(epsilon)?;
    if mode == NoiseMode::Disabled {
        return Ok(());
    }
    let scale = l1 / epsilon;
    for v in values.iter_mut() {
        *v += sample_laplace(scale, rng)?;
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= MAX_EPSILON) {
        return Err(invalid(format!("epsilon must lie in (0, {MAX_EPSILON}], got {epsilon}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AggregationQuery {
    pub reports: Vec<SealedReport>,
    pub buckets: Vec<BucketKey>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub entries: Vec<(BucketKey, f64)>,
}

impl Histogram {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.1)
    }
}

#[derive(Debug)]
pub struct AggregationService {
    key: OpeningKey,
    consumed: HashSet<ReportId>,
    noise: NoiseMode,
}

impl Default for AggregationService {
    fn default() -> Self {
        Self::new(NoiseMode::Laplace)
    }
}

impl AggregationService {
    pub fn new(noise: NoiseMode) -> Self {
        AggregationService { key: OpeningKey::new(), consumed: HashSet::new(), noise }
    }

    /// Sensitivity of one report: the full per-window budget.
    pub fn l1() -> f64 {
        CONTRIBUTION_BUDGET as f64
    }

    pub fn is_consumed(&self, id: ReportId) -> bool {
        self.consumed.contains(&id)
    }

    pub fn aggregate<R: Rng + ?Sized>(&mut self, query: &AggregationQuery, rng: &mut R) -> Result<Histogram> {
        if query.buckets.is_empty() {
            return Err(invalid("aggregation query needs at least one bucket"));
        }
        check_epsilon(query.epsilon)?;
        let mut batch = HashSet::with_capacity(query.reports.len());
        for report in &query.reports {
            if self.consumed.contains(&report.id()) || !batch.insert(report.id()) {
                return Err(Error::DuplicateReport(report.id().0));
            }
        }

        let mut sums: HashMap<BucketKey, u64> = HashMap::new();
        for report in &query.reports {
            for c in report.contributions(&self.key) {
                *sums.entry(c.bucket()).or_default() += c.value() as u64;
            }
        }
        let mut values: Vec<f64> = query
            .buckets
            .iter()
            .map(|b| sums.get(b).copied().unwrap_or(0) as f64)
            .collect();
        add_noise(&mut values, query.epsilon, Self::l1(), self.noise, rng)?;

        self.consumed.extend(batch);
        Ok(Histogram { entries: query.buckets.iter().copied().zip(values).collect() })
    }
}
