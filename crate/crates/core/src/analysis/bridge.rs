//! Variance and covariance checks of rescaled interface profiles against a Brownian bridge.

use rand_distr::{Distribution, StandardNormal};

use super::{mean_var, t_quantile, AnalysisError, EstimateWithCI};
use crate::potts::InterfaceProfile;
use crate::rng::Rng;

/// Outcome of [`bridge_covariance_test`].
#[derive(Debug, Clone)]
pub struct BridgeReport {
    /// Fitted diffusivity in `Var phi(r) = chi r (1 - r)`.
    pub chi: EstimateWithCI,
    /// Coefficient of determination of that fit over interior grid points.
    pub r_squared: f64,
    /// Kurtosis `E[(phi - mean)^4] / Var^2` at `r = 1/2` (3 for a Gaussian).
    pub midpoint_kurtosis: f64,
    /// Largest deviation of `Cov(phi(r), phi(s)) / chi` from `min(r, s) - r s`.
    pub max_covariance_defect: f64,
    /// `(r, Var phi(r))` on the whole grid.
    pub variances: Vec<(f64, f64)>,
}

impl BridgeReport {
    /// `|chi - reference| / reference`.
    pub fn relative_deviation(&self, reference: f64) -> f64 {
        (self.chi.estimate - reference).abs() / reference
    }
}

fn fit_chi(profiles: &[InterfaceProfile], r: &[f64]) -> (f64, Vec<f64>) {
    let m = r.len() - 1;
    let vars: Vec<f64> = (0..=m)
        .map(|k| mean_var(&profiles.iter().map(|p| p.phi[k]).collect::<Vec<_>>()).1)
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..m {
        let g = r[k] * (1.0 - r[k]);
        num += g * vars[k];
        den += g * g;
    }
    (num / den, vars)
}

/// Tests profiles sharing a grid against `chi` times a standard Brownian bridge. The
/// interval on `chi` comes from `batches` contiguous batches of profiles.
pub fn bridge_covariance_test(
    profiles: &[InterfaceProfile],
    batches: usize,
) -> Result<BridgeReport, AnalysisError> {
    if profiles.len() < 1000 {
        return Err(AnalysisError::TooFewSamples {
            need: 1000,
            got: profiles.len(),
        });
    }
    let r = &profiles[0].r;
    let m = r.len().saturating_sub(1);
    if m < 2 || m % 2 != 0 || profiles.iter().any(|p| p.r != *r || p.phi.len() != r.len()) {
        return Err(AnalysisError::GridMismatch);
    }
    let (chi, vars) = fit_chi(profiles, r);
    let interior = &vars[1..m];
    let mean_interior = interior.iter().sum::<f64>() / interior.len() as f64;
    let rss: f64 = (1..m)
        .map(|k| (vars[k] - chi * r[k] * (1.0 - r[k])).powi(2))
        .sum();
    let tss: f64 = interior.iter().map(|v| (v - mean_interior).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    let batches = batches.clamp(2, profiles.len() / 2);
    let size = profiles.len() / batches;
    let per_batch: Vec<f64> = (0..batches)
        .map(|b| fit_chi(&profiles[b * size..(b + 1) * size], r).0)
        .collect();
    let (_, var_b) = mean_var(&per_batch);
    let half = t_quantile((batches - 1) as f64) * (var_b / batches as f64).sqrt();
    let chi_ci = EstimateWithCI::new(
        chi,
        chi - half,
        chi + half,
        profiles.len() as u64,
        "batch-means",
    );

    let mid = m / 2;
    let mid_vals: Vec<f64> = profiles.iter().map(|p| p.phi[mid]).collect();
    let (mean_mid, _) = mean_var(&mid_vals);
    let n = mid_vals.len() as f64;
    let m2 = mid_vals.iter().map(|v| (v - mean_mid).powi(2)).sum::<f64>() / n;
    let m4 = mid_vals.iter().map(|v| (v - mean_mid).powi(4)).sum::<f64>() / n;
    let midpoint_kurtosis = m4 / (m2 * m2);

    let means: Vec<f64> = (0..=m)
        .map(|k| profiles.iter().map(|p| p.phi[k]).sum::<f64>() / n)
        .collect();
    let mut max_defect: f64 = 0.0;
    for a in 1..m {
        for b in a..m {
            let cov = profiles
                .iter()
                .map(|p| (p.phi[a] - means[a]) * (p.phi[b] - means[b]))
                .sum::<f64>()
                / (n - 1.0);
            let target = r[a].min(r[b]) - r[a] * r[b];
            max_defect = max_defect.max((cov / chi - target).abs());
        }
    }
    Ok(BridgeReport {
        chi: chi_ci,
        r_squared,
        midpoint_kurtosis,
        max_covariance_defect: max_defect,
        variances: r.iter().copied().zip(vars).collect(),
    })
}

/// Exact samples of `sqrt(chi)` times a standard Brownian bridge on the grid `k / m`.
pub fn brownian_bridge_profiles(
    m: usize,
    count: usize,
    chi: f64,
    rng: &mut Rng,
) -> Vec<InterfaceProfile> {
    let r: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
    let sd = (chi / m as f64).sqrt();
    (0..count)
        .map(|_| {
            let mut walk = vec![0.0; m + 1];
            for k in 1..=m {
                let z: f64 = StandardNormal.sample(rng);
                walk[k] = walk[k - 1] + sd * z;
            }
            let end = walk[m];
            let phi: Vec<f64> = r.iter().zip(&walk).map(|(r, w)| w - r * end).collect();
            InterfaceProfile {
                r: r.clone(),
                raw: phi.clone(),
                phi,
                span: 1.0,
            }
        })
        .collect()
}
