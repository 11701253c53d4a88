//! Estimators that turn samples into decay rates, fitted exponents, tail rates and
//! interface statistics, each reported with a 95% confidence interval.

mod bridge;
mod conditioned;
mod fit;
mod splitting;
mod torus;
mod walks;
mod worm;
mod wulff_fit;

use std::io::Write;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::clustergeo::ClusterGeoError;
use crate::fkmodel::{cluster_labeling, BondConfiguration, FkError};
use crate::geometry::GeometryError;
use crate::lattice::{BondGraph, Site};
use crate::potts::PottsError;

pub use bridge::{bridge_covariance_test, brownian_bridge_profiles, BridgeReport};
pub use conditioned::{conditioned_cluster_sampler, ConditionedClusters, ConditionedSource};
pub use fit::{
    exact_exit_probability, exit_decay, fit_inverse_correlation_length,
    fit_inverse_correlation_length_replicates, linear_fit, oz_exponent_fit,
    oz_exponent_fit_replicates, ExitReport, LinearFit, OzFit, XiFit,
};
pub use splitting::{explore_cluster, Exploration, Level, SplittingConfig, SplittingEstimate};
pub use torus::{torus_connectivity, TorusConnectivity, TorusStudy};
pub use walks::{cone_density, hausdorff_quantiles, step_tail_fit, ConeDensity, StepTail};
pub use worm::{ising_worm_correlation, WormCorrelation, WormStudy};
pub use wulff_fit::{fit_support_from_connectivity, fit_support_function, SupportFit};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("too few samples: need {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("only {usable} usable scales, need {need}")]
    InsufficientDecades { usable: usize, need: usize },
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("too few pooled steps: {0} (need 1000)")]
    TooFewSteps(usize),
    #[error("acceptance rate below 1/{max_rejects}")]
    AcceptanceTooLow { max_rejects: usize },
    #[error("profiles are not on a common grid")]
    GridMismatch,
    #[error("cluster exploration exceeded {0} sites")]
    ClusterTooLarge(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Fk(#[from] FkError),
    #[error(transparent)]
    ClusterGeo(#[from] ClusterGeoError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Potts(#[from] PottsError),
}

/// A point estimate with a 95% confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: u64,
    pub method: String,
}

impl EstimateWithCI {
    pub fn new(estimate: f64, lo: f64, hi: f64, n: u64, method: &str) -> Self {
        EstimateWithCI {
            estimate,
            lo: lo.min(estimate),
            hi: hi.max(estimate),
            n,
            method: method.to_string(),
        }
    }

    pub fn exact(value: f64, method: &str) -> Self {
        Self::new(value, value, value, 1, method)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn overlaps(&self, other: &EstimateWithCI) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Two-sided 97.5% quantile of Student's t with `dof` degrees of freedom.
pub fn t_quantile(dof: f64) -> f64 {
    if !dof.is_finite() || dof > 1e6 {
        return 1.959_963_984_540_054;
    }
    StudentsT::new(0.0, 1.0, dof.max(1.0))
        .expect("valid dof")
        .inverse_cdf(0.975)
}

/// Wilson score interval for `k` successes out of `n` trials.
pub fn wilson(k: u64, n: u64) -> EstimateWithCI {
    assert!(n > 0, "wilson interval needs at least one trial");
    let z = 1.959_963_984_540_054;
    let (kf, nf) = (k as f64, n as f64);
    let centre = (kf + z * z / 2.0) / (nf + z * z);
    let half = z / (nf + z * z) * (kf * (nf - kf) / nf + z * z / 4.0).sqrt();
    EstimateWithCI::new(
        kf / nf,
        (centre - half).max(0.0),
        (centre + half).min(1.0),
        n,
        "wilson",
    )
}

/// Mean of independent replicate values with a t-based interval.
pub fn mean_ci(values: &[f64], method: &str) -> Result<EstimateWithCI, AnalysisError> {
    let n = values.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { need: 2, got: n });
    }
    let (mean, var) = mean_var(values);
    let half = t_quantile((n - 1) as f64) * (var / n as f64).sqrt();
    Ok(EstimateWithCI::new(
        mean,
        mean - half,
        mean + half,
        n as u64,
        method,
    ))
}

/// Sample mean and unbiased variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Jackknife interval for a smooth statistic of replicate vectors.
pub fn jackknife<F>(
    replicates: &[Vec<f64>],
    stat: F,
    method: &str,
) -> Result<EstimateWithCI, AnalysisError>
where
    F: Fn(&[f64]) -> f64,
{
    let n = replicates.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { need: 2, got: n });
    }
    let width = replicates[0].len();
    let mut total = vec![0.0; width];
    for r in replicates {
        for (t, v) in total.iter_mut().zip(r) {
            *t += v;
        }
    }
    let full = stat(&total.iter().map(|t| t / n as f64).collect::<Vec<_>>());
    let leave_out: Vec<f64> = replicates
        .iter()
        .map(|r| {
            stat(
                &total
                    .iter()
                    .zip(r)
                    .map(|(t, v)| (t - v) / (n - 1) as f64)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let (mean_lo, _) = mean_var(&leave_out);
    let var =
        (n - 1) as f64 / n as f64 * leave_out.iter().map(|v| (v - mean_lo).powi(2)).sum::<f64>();
    let half = t_quantile((n - 1) as f64) * var.sqrt();
    Ok(EstimateWithCI::new(
        full,
        full - half,
        full + half,
        n as u64,
        method,
    ))
}

/// One scale of a decay series.
#[derive(Debug, Clone)]
pub struct DecayPoint {
    pub scale: f64,
    pub probability: EstimateWithCI,
}

/// Connectivity or escape probabilities along increasing scales.
#[derive(Debug, Clone)]
pub struct DecaySeries {
    pub label: String,
    pub points: Vec<DecayPoint>,
}

impl DecaySeries {
    pub fn new(label: &str, points: Vec<DecayPoint>) -> Result<Self, AnalysisError> {
        if points.windows(2).any(|w| w[1].scale <= w[0].scale) {
            return Err(AnalysisError::Invalid(
                "scales must be strictly increasing".into(),
            ));
        }
        if points
            .iter()
            .any(|p| !(p.probability.estimate <= 1.0 && p.probability.estimate >= 0.0))
        {
            return Err(AnalysisError::Invalid(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(DecaySeries {
            label: label.to_string(),
            points,
        })
    }

    /// Builds an exact series (zero-width intervals).
    pub fn exact(
        label: &str,
        scales: &[f64],
        probabilities: &[f64],
    ) -> Result<Self, AnalysisError> {
        let points = scales
            .iter()
            .zip(probabilities)
            .map(|(&scale, &p)| DecayPoint {
                scale,
                probability: EstimateWithCI::exact(p, "exact"),
            })
            .collect();
        Self::new(label, points)
    }

    /// Points with a strictly positive estimate.
    pub fn usable(&self) -> Vec<&DecayPoint> {
        self.points
            .iter()
            .filter(|p| p.probability.estimate > 0.0)
            .collect()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        for p in &self.points {
            write_row(out, &self.label, p.scale, &p.probability)?;
        }
        Ok(())
    }
}

/// Header of the estimator CSV schema.
pub const CSV_HEADER: &str = "quantity,scale,estimate,lo,hi,n";

/// Writes one estimator row.
pub fn write_row(
    out: &mut impl Write,
    quantity: &str,
    scale: f64,
    e: &EstimateWithCI,
) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{:.12e},{:.12e},{:.12e},{}",
        quantity, scale, e.estimate, e.lo, e.hi, e.n
    )
}

/// Empirical connectivity frequencies with Wilson intervals, one per pair.
pub fn estimate_connectivity(
    graph: &BondGraph,
    samples: &[BondConfiguration],
    pairs: &[(Site, Site)],
) -> Result<Vec<EstimateWithCI>, AnalysisError> {
    if samples.len() < 100 {
        return Err(AnalysisError::TooFewSamples {
            need: 100,
            got: samples.len(),
        });
    }
    let idx: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&(x, y)| match (graph.vertex(x), graph.vertex(y)) {
            (Some(a), Some(b)) => Ok((a, b)),
            (None, _) => Err(AnalysisError::Fk(FkError::OutsideBox(x))),
            (_, None) => Err(AnalysisError::Fk(FkError::OutsideBox(y))),
        })
        .collect::<Result<_, _>>()?;
    let mut hits = vec![0u64; pairs.len()];
    for cfg in samples {
        let labels = cluster_labeling(graph, cfg);
        for (h, &(a, b)) in hits.iter_mut().zip(&idx) {
            if labels.same(a, b) {
                *h += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|k| wilson(k, samples.len() as u64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point() {
        for (k, n) in [(0, 10), (3, 10), (10, 10), (500, 1000)] {
            let e = wilson(k, n);
            assert!(e.lo <= e.estimate && e.estimate <= e.hi);
        }
    }

    #[test]
    fn jackknife_of_mean_matches_t_interval() {
        let reps: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 3.0].iter().map(|&v| vec![v]).collect();
        let j = jackknife(&reps, |m| m[0], "jk").unwrap();
        let t = mean_ci(&[1.0, 2.0, 4.0, 3.0], "t").unwrap();
        assert!((j.lo - t.lo).abs() < 1e-12 && (j.hi - t.hi).abs() < 1e-12);
    }
}
