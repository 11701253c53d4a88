//! Statistics of decomposed clusters: step tails, cone-point density and the distance
//! between a cluster and its cone-point polyline.

use rand::Rng as _;

use super::fit::linear_fit;
use super::{mean_ci, AnalysisError, EstimateWithCI};
use crate::clustergeo::EffectiveWalk;
use crate::rng::stream_rng;

const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;
/// Tail points with fewer exceedances than this are left out of the survival fit.
const MIN_TAIL_COUNT: usize = 10;

/// Exponential tail rate of effective-walk step lengths.
#[derive(Debug, Clone)]
pub struct StepTail {
    pub kappa: EstimateWithCI,
    /// Set when every step has the same length, so the tail is empty and `kappa` is infinite.
    pub degenerate: bool,
    pub num_steps: usize,
}

fn step_lengths(walk: &EffectiveWalk) -> impl Iterator<Item = f64> + '_ {
    walk.steps.iter().map(|s| s.norm2())
}

/// Least-squares slope of the log empirical survival function.
fn tail_slope(lengths: &mut [f64]) -> Option<f64> {
    lengths.sort_by(f64::total_cmp);
    let n = lengths.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut i = 0;
    while i < n {
        let exceed = n - i;
        if exceed < MIN_TAIL_COUNT {
            break;
        }
        xs.push(lengths[i]);
        ys.push((exceed as f64 / n as f64).ln());
        let v = lengths[i];
        while i < n && lengths[i] == v {
            i += 1;
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
    linear_fit(&rows, &ys, &vec![1.0; xs.len()])
        .ok()
        .map(|f| f.coefficients[1])
}

pub fn step_tail_fit(walks: &[EffectiveWalk]) -> Result<StepTail, AnalysisError> {
    let mut all: Vec<f64> = walks.iter().flat_map(step_lengths).collect();
    let num_steps = all.len();
    if num_steps < 1000 {
        return Err(AnalysisError::TooFewSteps(num_steps));
    }
    let first = all[0];
    if all.iter().all(|&l| l == first) {
        let inf = f64::INFINITY;
        return Ok(StepTail {
            kappa: EstimateWithCI::new(inf, inf, inf, num_steps as u64, "degenerate"),
            degenerate: true,
            num_steps,
        });
    }
    let kappa = -tail_slope(&mut all).ok_or(AnalysisError::TooFewSteps(num_steps))?;
    let mut rng = stream_rng(BOOTSTRAP_SEED, 0);
    let mut boot = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut lengths: Vec<f64> = (0..walks.len())
            .flat_map(|_| step_lengths(&walks[rng.gen_range(0..walks.len())]))
            .collect();
        if let Some(s) = tail_slope(&mut lengths) {
            boot.push(-s);
        }
    }
    let (lo, hi) = percentile_interval(&mut boot);
    Ok(StepTail {
        kappa: EstimateWithCI::new(kappa, lo, hi, num_steps as u64, "survival-ls-bootstrap"),
        degenerate: false,
        num_steps,
    })
}

fn percentile_interval(values: &mut [f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    values.sort_by(f64::total_cmp);
    let at =
        |q: f64| values[((q * (values.len() - 1) as f64).round() as usize).min(values.len() - 1)];
    (at(0.025), at(0.975))
}

/// Cone-point counts per target distance, and the slope of counts against distance.
#[derive(Debug, Clone)]
pub struct ConeDensity {
    /// `(|x|, mean count / |x|)` per distance.
    pub densities: Vec<(f64, EstimateWithCI)>,
    pub slope: EstimateWithCI,
    pub intercept: f64,
}

/// `per_scale` holds, for each distance `|x|`, the cone-point count of every sampled cluster.
pub fn cone_density(per_scale: &[(f64, Vec<usize>)]) -> Result<ConeDensity, AnalysisError> {
    let mut densities = Vec::new();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (scale, counts) in per_scale {
        let values: Vec<f64> = counts.iter().map(|&c| c as f64 / scale).collect();
        densities.push((*scale, mean_ci(&values, "mean-count-per-length")?));
        for &c in counts {
            rows.push(vec![1.0, *scale]);
            ys.push(c as f64);
        }
    }
    let fit = linear_fit(&rows, &ys, &vec![1.0; ys.len()])?;
    let slope = fit.interval(1, "ols-counts", ys.len() as u64);
    Ok(ConeDensity {
        densities,
        slope,
        intercept: fit.coefficients[0],
    })
}

/// Upper quantile of `d_H / log|x|` per distance with a bootstrap interval, plus the
/// bootstrap interval of the least-squares slope of those quantiles against `|x|`.
pub fn hausdorff_quantiles(
    per_scale: &[(f64, Vec<f64>)],
    level: f64,
) -> Result<(Vec<(f64, EstimateWithCI)>, EstimateWithCI), AnalysisError> {
    if per_scale.len() < 3 || per_scale.iter().any(|(_, v)| v.len() < 20) {
        return Err(AnalysisError::TooFewSamples {
            need: 20,
            got: per_scale.iter().map(|(_, v)| v.len()).min().unwrap_or(0),
        });
    }
    let quantile = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[((level * v.len() as f64).ceil() as usize)
            .saturating_sub(1)
            .min(v.len() - 1)]
    };
    let normalised: Vec<(f64, Vec<f64>)> = per_scale
        .iter()
        .map(|(s, v)| (*s, v.iter().map(|d| d / s.ln()).collect()))
        .collect();
    let slope_of = |qs: &[f64]| {
        let rows: Vec<Vec<f64>> = normalised.iter().map(|(s, _)| vec![1.0, *s]).collect();
        linear_fit(&rows, qs, &vec![1.0; qs.len()]).map(|f| f.coefficients[1])
    };
    let point: Vec<f64> = normalised
        .iter()
        .map(|(_, v)| quantile(&mut v.clone()))
        .collect();
    let slope = slope_of(&point)?;
    let mut rng = stream_rng(BOOTSTRAP_SEED, 1);
    let mut boot_q: Vec<Vec<f64>> = vec![Vec::new(); normalised.len()];
    let mut boot_slope = Vec::new();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let qs: Vec<f64> = normalised
            .iter()
            .map(|(_, v)| {
                let mut r: Vec<f64> = (0..v.len()).map(|_| v[rng.gen_range(0..v.len())]).collect();
                quantile(&mut r)
            })
            .collect();
        for (b, q) in boot_q.iter_mut().zip(&qs) {
            b.push(*q);
        }
        boot_slope.push(slope_of(&qs)?);
    }
    let per = normalised
        .iter()
        .zip(point.iter().zip(boot_q.iter_mut()))
        .map(|((s, v), (&q, b))| {
            let (lo, hi) = percentile_interval(b);
            (
                *s,
                EstimateWithCI::new(q, lo, hi, v.len() as u64, "quantile-bootstrap"),
            )
        })
        .collect();
    let (lo, hi) = percentile_interval(&mut boot_slope);
    Ok((
        per,
        EstimateWithCI::new(slope, lo, hi, per_scale.len() as u64, "slope-bootstrap"),
    ))
}
