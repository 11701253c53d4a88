//! Weighted least-squares fits of decay series.

use super::{
    jackknife, mean_ci, t_quantile, AnalysisError, DecayPoint, DecaySeries, EstimateWithCI,
};
use crate::fkmodel::{
    cluster_labeling, exact_distribution, BondConfiguration, Boundary, ModelParams,
};
use crate::lattice::{BondGraph, LatticeBox};

const Z95: f64 = 1.959_963_984_540_054;

/// Result of a weighted linear least-squares fit.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// Standard errors, inflated by the reduced chi-square when it exceeds one.
    pub std_errors: Vec<f64>,
    pub dof: usize,
    pub reduced_chi2: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn interval(&self, i: usize, method: &str, n: u64) -> EstimateWithCI {
        let c = self.coefficients[i];
        let half = t_quantile(self.dof as f64) * self.std_errors[i];
        EstimateWithCI::new(c, c - half, c + half, n, method)
    }
}

/// Fits `y ~ rows * beta` with weights `w` (inverse variances).
pub fn linear_fit(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<LinearFit, AnalysisError> {
    let n = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    if n <= k || y.len() != n || w.len() != n {
        return Err(AnalysisError::IllConditioned(format!(
            "{n} points for {k} parameters"
        )));
    }
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for ((r, &yi), &wi) in rows.iter().zip(y).zip(w) {
        for a in 0..k {
            xty[a] += wi * r[a] * yi;
            for b in 0..k {
                xtx[a][b] += wi * r[a] * r[b];
            }
        }
    }
    let inv = invert(xtx)?;
    let beta: Vec<f64> = (0..k)
        .map(|a| (0..k).map(|b| inv[a][b] * xty[b]).sum())
        .collect();
    let fitted: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&beta).map(|(x, b)| x * b).sum())
        .collect();
    let chi2: f64 = y
        .iter()
        .zip(&fitted)
        .zip(w)
        .map(|((yi, fi), wi)| wi * (yi - fi).powi(2))
        .sum();
    let dof = n - k;
    let reduced = chi2 / dof as f64;
    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / wsum;
    let tss: f64 = y
        .iter()
        .zip(w)
        .map(|(yi, wi)| wi * (yi - ybar).powi(2))
        .sum();
    let r_squared = if tss > 0.0 { 1.0 - chi2 / tss } else { 1.0 };
    let scale = reduced.max(1.0);
    let std_errors = (0..k).map(|a| (inv[a][a] * scale).sqrt()).collect();
    Ok(LinearFit {
        coefficients: beta,
        std_errors,
        dof,
        reduced_chi2: reduced,
        r_squared,
    })
}

fn invert(mut a: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let k = a.len();
    let mut inv: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let scale = (0..k).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() <= 1e-13 * scale {
            return Err(AnalysisError::IllConditioned(
                "singular normal equations".into(),
            ));
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..k {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..k {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..k {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Standard deviation of `log p` implied by an interval, if it has positive width.
fn log_sd(p: &EstimateWithCI) -> Option<f64> {
    if p.hi <= p.lo {
        return None;
    }
    let sd = if p.lo > 0.0 {
        (p.hi.ln() - p.lo.ln()) / (2.0 * Z95)
    } else {
        (p.hi.ln() - p.estimate.ln()) / Z95
    };
    (sd.is_finite() && sd > 0.0).then_some(sd)
}

/// Inverse-variance weights for `log p`; exact data gets unit weights.
fn log_weights(points: &[&DecayPoint]) -> Vec<f64> {
    let sds: Vec<Option<f64>> = points.iter().map(|p| log_sd(&p.probability)).collect();
    let known: Vec<f64> = sds.iter().flatten().copied().collect();
    if known.is_empty() {
        return vec![1.0; points.len()];
    }
    let smallest = known.iter().copied().fold(f64::INFINITY, f64::min);
    sds.iter()
        .map(|s| 1.0 / s.unwrap_or(smallest).powi(2))
        .collect()
}

/// Decay rate with the Ornstein-Zernike prefactor held at `(d - 1) / 2`.
#[derive(Debug, Clone)]
pub struct XiFit {
    pub xi: EstimateWithCI,
    pub intercept: f64,
    /// The raw sequence `-log P / k` for diagnostics.
    pub naive: Vec<(f64, f64)>,
    pub fit: LinearFit,
}

pub fn fit_inverse_correlation_length(
    series: &DecaySeries,
    dim: usize,
) -> Result<XiFit, AnalysisError> {
    let pts = series.usable();
    if pts.len() < 4 {
        return Err(AnalysisError::InsufficientDecades {
            usable: pts.len(),
            need: 4,
        });
    }
    let alpha = (dim as f64 - 1.0) / 2.0;
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.0, -p.scale]).collect();
    let y: Vec<f64> = pts
        .iter()
        .map(|p| p.probability.estimate.ln() + alpha * p.scale.ln())
        .collect();
    let fit = linear_fit(&rows, &y, &log_weights(&pts))?;
    let n = pts.iter().map(|p| p.probability.n).min().unwrap_or(1);
    let naive = pts
        .iter()
        .map(|p| (p.scale, -p.probability.estimate.ln() / p.scale))
        .collect();
    Ok(XiFit {
        xi: fit.interval(1, "wls-oz-fixed", n),
        intercept: fit.coefficients[0],
        naive,
        fit,
    })
}

/// Three-parameter fit `log P = log psi - xi k - alpha log k`.
#[derive(Debug, Clone)]
pub struct OzFit {
    pub xi: EstimateWithCI,
    pub alpha: EstimateWithCI,
    pub log_psi: EstimateWithCI,
    pub expected_alpha: f64,
    pub covers_expected: bool,
    pub fit: LinearFit,
}

pub fn oz_exponent_fit(series: &DecaySeries, dim: usize) -> Result<OzFit, AnalysisError> {
    let pts = series.usable();
    if pts.len() < 6 {
        return Err(AnalysisError::InsufficientDecades {
            usable: pts.len(),
            need: 6,
        });
    }
    let span = pts.last().expect("non-empty").scale / pts[0].scale;
    if span < 4.0 {
        return Err(AnalysisError::IllConditioned(format!(
            "scales span a factor {span:.3} < 4"
        )));
    }
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| vec![1.0, -p.scale, -p.scale.ln()])
        .collect();
    let y: Vec<f64> = pts.iter().map(|p| p.probability.estimate.ln()).collect();
    let fit = linear_fit(&rows, &y, &log_weights(&pts))?;
    let n = pts.iter().map(|p| p.probability.n).min().unwrap_or(1);
    let expected = (dim as f64 - 1.0) / 2.0;
    let alpha = fit.interval(2, "wls-oz-free", n);
    Ok(OzFit {
        xi: fit.interval(1, "wls-oz-free", n),
        covers_expected: alpha.covers(expected),
        alpha,
        log_psi: fit.interval(0, "wls-oz-free", n),
        expected_alpha: expected,
        fit,
    })
}

/// Fits `log P(scale) - offset(scale)` on `columns(scale)` using the replicate means,
/// with jackknife intervals over replicates. Scales whose mean is zero are dropped.
fn replicate_fit(
    label: &str,
    scales: &[f64],
    replicates: &[Vec<f64>],
    columns: impl Fn(f64) -> Vec<f64>,
    offset: impl Fn(f64) -> f64,
) -> Result<(DecaySeries, LinearFit, Vec<EstimateWithCI>), AnalysisError> {
    if replicates.iter().any(|r| r.len() != scales.len()) {
        return Err(AnalysisError::Invalid(
            "replicate length differs from the number of scales".into(),
        ));
    }
    let mut points = Vec::with_capacity(scales.len());
    for (i, &scale) in scales.iter().enumerate() {
        points.push(DecayPoint {
            scale,
            probability: mean_ci(
                &replicates.iter().map(|r| r[i]).collect::<Vec<_>>(),
                "replicate-mean",
            )?,
        });
    }
    let series = DecaySeries::new(label, points)?;
    let keep: Vec<usize> = (0..scales.len())
        .filter(|&i| series.points[i].probability.estimate > 0.0)
        .collect();
    let pts: Vec<&DecayPoint> = keep.iter().map(|&i| &series.points[i]).collect();
    let w = log_weights(&pts);
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| columns(scales[i])).collect();
    let solve = |means: &[f64]| -> Result<LinearFit, AnalysisError> {
        let y: Vec<f64> = keep
            .iter()
            .map(|&i| means[i].ln() - offset(scales[i]))
            .collect();
        linear_fit(&rows, &y, &w)
    };
    let means: Vec<f64> = series
        .points
        .iter()
        .map(|p| p.probability.estimate)
        .collect();
    let fit = solve(&means)?;
    let intervals = (0..fit.coefficients.len())
        .map(|j| {
            jackknife(
                replicates,
                |m| solve(m).map_or(f64::NAN, |f| f.coefficients[j]),
                "jackknife-wls",
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((series, fit, intervals))
}

/// [`oz_exponent_fit`] for estimates that come as independent replicates sharing all
/// scales (so that errors at different scales are correlated); intervals are jackknife
/// intervals over replicates.
pub fn oz_exponent_fit_replicates(
    label: &str,
    scales: &[f64],
    replicates: &[Vec<f64>],
    dim: usize,
) -> Result<OzFit, AnalysisError> {
    let (series, fit, ci) = replicate_fit(
        label,
        scales,
        replicates,
        |k| vec![1.0, -k, -k.ln()],
        |_| 0.0,
    )?;
    // validates the number and span of usable scales
    oz_exponent_fit(&series, dim)?;
    let expected = (dim as f64 - 1.0) / 2.0;
    Ok(OzFit {
        xi: ci[1].clone(),
        covers_expected: ci[2].covers(expected),
        alpha: ci[2].clone(),
        log_psi: ci[0].clone(),
        expected_alpha: expected,
        fit,
    })
}

/// [`fit_inverse_correlation_length`] for replicate estimates, with jackknife intervals.
pub fn fit_inverse_correlation_length_replicates(
    label: &str,
    scales: &[f64],
    replicates: &[Vec<f64>],
    dim: usize,
) -> Result<XiFit, AnalysisError> {
    let alpha = (dim as f64 - 1.0) / 2.0;
    let (series, fit, ci) = replicate_fit(
        label,
        scales,
        replicates,
        |k| vec![1.0, -k],
        |k| -alpha * k.ln(),
    )?;
    let usable = series.usable();
    if usable.len() < 4 {
        return Err(AnalysisError::InsufficientDecades {
            usable: usable.len(),
            need: 4,
        });
    }
    let naive = usable
        .iter()
        .map(|p| (p.scale, -p.probability.estimate.ln() / p.scale))
        .collect();
    Ok(XiFit {
        xi: ci[1].clone(),
        intercept: fit.coefficients[0],
        naive,
        fit,
    })
}

/// Exact `P(0 <-> Z^d \ Lambda_n)` by enumeration of `Lambda_{n+1}` with free conditions.
pub fn exact_exit_probability(
    dim: usize,
    n: i64,
    params: &ModelParams,
) -> Result<f64, AnalysisError> {
    let bx = LatticeBox::centered(dim, n + 1).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let graph = BondGraph::nearest_neighbour(&bx);
    let exact = exact_distribution(&graph, params, Boundary::Free)?;
    let origin = graph
        .vertex(crate::lattice::Site::ORIGIN)
        .expect("origin in box");
    let outside: Vec<usize> = (0..graph.num_vertices())
        .filter(|&v| graph.site(v).sup_norm() > n)
        .collect();
    Ok(exact.probability(|mask| {
        let cfg = BondConfiguration::from_mask(&graph, Boundary::Free, mask);
        let labels = cluster_labeling(&graph, &cfg);
        outside.iter().any(|&v| labels.same(origin, v))
    }))
}

/// Escape probabilities per box size with successive-ratio rates and a log-linear fit.
#[derive(Debug, Clone)]
pub struct ExitReport {
    pub series: DecaySeries,
    /// `(N, -log(P_{N'} / P_N) / (N' - N))` for consecutive sizes.
    pub successive_rates: Vec<(i64, EstimateWithCI)>,
    pub log_linear: LinearFit,
}

impl ExitReport {
    pub fn final_rate(&self) -> &EstimateWithCI {
        &self.successive_rates.last().expect("at least two sizes").1
    }
}

/// Summarises escape probabilities given as one vector per independent replicate, each
/// indexed like `sizes`. A single replicate is treated as exact.
pub fn exit_decay(
    label: &str,
    sizes: &[i64],
    replicates: &[Vec<f64>],
) -> Result<ExitReport, AnalysisError> {
    if sizes.len() < 3 || replicates.is_empty() || replicates.iter().any(|r| r.len() != sizes.len())
    {
        return Err(AnalysisError::Invalid(
            "need at least three sizes and matching replicates".into(),
        ));
    }
    let exact = replicates.len() == 1;
    let mut points = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let probability = if exact {
            EstimateWithCI::exact(replicates[0][i], "exact")
        } else {
            mean_ci(
                &replicates.iter().map(|r| r[i]).collect::<Vec<_>>(),
                "replicate-mean",
            )?
        };
        points.push(DecayPoint {
            scale: n as f64,
            probability,
        });
    }
    let series = DecaySeries::new(label, points)?;
    let mut successive_rates = Vec::new();
    for i in 0..sizes.len() - 1 {
        let gap = (sizes[i + 1] - sizes[i]) as f64;
        let stat = move |m: &[f64]| (m[i].ln() - m[i + 1].ln()) / gap;
        let rate = if exact {
            EstimateWithCI::exact(stat(&replicates[0]), "exact")
        } else {
            jackknife(replicates, stat, "jackknife-ratio")?
        };
        successive_rates.push((sizes[i], rate));
    }
    let pts = series.usable();
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.0, -p.scale]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.probability.estimate.ln()).collect();
    let log_linear = linear_fit(&rows, &y, &log_weights(&pts))?;
    Ok(ExitReport {
        series,
        successive_rates,
        log_linear,
    })
}
