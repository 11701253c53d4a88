//! Smooth square-symmetric fits of the inverse correlation length as a function of angle.

use super::fit::{linear_fit, LinearFit};
use super::{AnalysisError, EstimateWithCI};
use crate::geometry::{DirectionalNorm, FourierNorm};

const Z95: f64 = 1.959_963_984_540_054;

/// A fitted norm `h(theta) = sum_j a_j cos(4 j theta)`.
#[derive(Debug, Clone)]
pub struct SupportFit {
    pub norm: DirectionalNorm,
    pub fit: LinearFit,
    /// Largest relative half-width among the input estimates.
    pub max_relative_half_width: f64,
}

impl SupportFit {
    pub fn coefficients(&self) -> &[f64] {
        &self.fit.coefficients
    }
}

fn finish(fit: LinearFit, max_relative_half_width: f64) -> Result<SupportFit, AnalysisError> {
    let norm = DirectionalNorm::Fourier(FourierNorm::symmetric(4, &fit.coefficients)?);
    Ok(SupportFit {
        norm,
        fit,
        max_relative_half_width,
    })
}

/// Fits per-direction estimates `(theta, xi(theta))` by weighted least squares with
/// `harmonics + 1` coefficients. Fails with a geometry error if the fit is not convex.
pub fn fit_support_function(
    directional: &[(f64, EstimateWithCI)],
    harmonics: usize,
) -> Result<SupportFit, AnalysisError> {
    if directional.len() <= harmonics + 1 {
        return Err(AnalysisError::InsufficientDecades {
            usable: directional.len(),
            need: harmonics + 2,
        });
    }
    let rows: Vec<Vec<f64>> = directional
        .iter()
        .map(|(th, _)| {
            (0..=harmonics)
                .map(|j| (4.0 * j as f64 * th).cos())
                .collect()
        })
        .collect();
    let y: Vec<f64> = directional.iter().map(|(_, e)| e.estimate).collect();
    let sds: Vec<f64> = directional
        .iter()
        .map(|(_, e)| (e.hi - e.lo) / (2.0 * Z95))
        .collect();
    let w: Vec<f64> = if sds.iter().all(|&s| s > 0.0) {
        sds.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; sds.len()]
    };
    let rel = directional
        .iter()
        .map(|(_, e)| e.half_width() / e.estimate)
        .fold(0.0, f64::max);
    finish(linear_fit(&rows, &y, &w)?, rel)
}

/// Global fit of `log P(0 <-> x) = c - |x| h(theta_x) - log|x| / 2` over lattice
/// displacements with probability estimates; only points with `|x| >= min_distance` and a
/// positive estimate enter. The constant `c` is dropped from the returned norm.
pub fn fit_support_from_connectivity(
    points: &[([i64; 2], EstimateWithCI)],
    harmonics: usize,
    min_distance: f64,
) -> Result<SupportFit, AnalysisError> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for (x, e) in points {
        let len = ((x[0] * x[0] + x[1] * x[1]) as f64).sqrt();
        if len < min_distance || e.estimate <= 0.0 || e.lo <= 0.0 {
            continue;
        }
        let th = (x[1] as f64).atan2(x[0] as f64);
        let mut row = vec![1.0];
        row.extend((0..=harmonics).map(|j| -len * (4.0 * j as f64 * th).cos()));
        rows.push(row);
        y.push(e.estimate.ln() + 0.5 * len.ln());
        let sd = (e.hi.ln() - e.lo.ln()) / (2.0 * Z95);
        w.push(if sd > 0.0 { 1.0 / (sd * sd) } else { 1.0 });
    }
    if rows.len() <= harmonics + 2 {
        return Err(AnalysisError::InsufficientDecades {
            usable: rows.len(),
            need: harmonics + 3,
        });
    }
    let mut fit = linear_fit(&rows, &y, &w)?;
    fit.coefficients.remove(0);
    fit.std_errors.remove(0);
    finish(fit, 0.0)
}
