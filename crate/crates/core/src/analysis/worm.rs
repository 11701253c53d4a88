//! Worm sampler for the Ising two-point function on a periodic square lattice.
//!
//! For `q = 2` the connectivity `P(0 <-> x)` of the random-cluster measure equals the spin
//! correlation `<s_0 s_x>`, which the worm algorithm estimates from the high-temperature
//! expansion: states are bond sets whose odd-degree vertices are exactly the two worm
//! ends, weighted by `tanh(K)^{#bonds}`. The time spent at end-to-end displacement `x` is
//! proportional to `<s_0 s_x>`. A displacement-dependent bias `exp(rate * min(|x|, radius))`
//! flattens that histogram so that small correlations are sampled as often as large ones;
//! it is divided out again in [`WormCorrelation::estimate`].

use rand::Rng as _;

use super::{jackknife, AnalysisError, DecayPoint, DecaySeries, EstimateWithCI};
use crate::rng::stream_rng;

/// Parameters of a worm run. `beta` uses the Potts convention (weight `e^{beta}` per
/// agreeing pair), so the Ising coupling is `beta / 2`.
#[derive(Debug, Clone)]
pub struct WormStudy {
    pub side: i64,
    pub beta: f64,
    pub bias_rate: f64,
    pub bias_radius: f64,
    pub max_displacement: i64,
    pub burn_in: u64,
    pub steps: u64,
    pub batches: usize,
}

/// Visit counts per batch, by displacement class `(a, b)` with `0 <= b <= a`.
#[derive(Debug, Clone)]
pub struct WormCorrelation {
    max_displacement: i64,
    bias_rate: f64,
    bias_radius: f64,
    counts: Vec<Vec<f64>>,
}

fn class_index(a: i64, b: i64) -> usize {
    (a * (a + 1) / 2 + b) as usize
}

fn multiplicity(a: i64, b: i64) -> f64 {
    match (a, b) {
        (0, _) => 1.0,
        (_, 0) => 4.0,
        _ if a == b => 4.0,
        _ => 8.0,
    }
}

fn log_bias(rate: f64, radius: f64, a: i64, b: i64) -> f64 {
    rate * (((a * a + b * b) as f64).sqrt()).min(radius)
}

impl WormCorrelation {
    /// Estimate of `<s_0 s_x>` with a jackknife interval over batches.
    pub fn estimate(&self, dx: i64, dy: i64) -> Result<EstimateWithCI, AnalysisError> {
        let (a, b) = (dx.abs().max(dy.abs()), dx.abs().min(dy.abs()));
        if a > self.max_displacement {
            return Err(AnalysisError::Invalid(format!(
                "displacement ({dx},{dy}) was not recorded"
            )));
        }
        if a == 0 {
            return Ok(EstimateWithCI::exact(1.0, "trivial"));
        }
        let c = class_index(a, b);
        let unbias = (-log_bias(self.bias_rate, self.bias_radius, a, b)).exp() / multiplicity(a, b);
        let mut e = jackknife(&self.counts, |m| m[c] / m[0] * unbias, "worm-jackknife")?;
        e.lo = e.lo.max(0.0);
        Ok(e)
    }

    /// Series `<s_0 s_{k v}>` over the given multiples, with scale `|k v|`.
    pub fn series(
        &self,
        label: &str,
        v: (i64, i64),
        multiples: &[i64],
    ) -> Result<DecaySeries, AnalysisError> {
        let len = ((v.0 * v.0 + v.1 * v.1) as f64).sqrt();
        let points = multiples
            .iter()
            .map(|&k| {
                Ok(DecayPoint {
                    scale: k as f64 * len,
                    probability: self.estimate(k * v.0, k * v.1)?,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        DecaySeries::new(label, points)
    }

    /// Replicate matrix (one row per batch) of the estimates along `v`, for jackknife fits.
    pub fn batch_series(&self, v: (i64, i64), multiples: &[i64]) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|m| {
                multiples
                    .iter()
                    .map(|&k| {
                        let (x, y) = ((k * v.0).abs(), (k * v.1).abs());
                        let (a, b) = (x.max(y), x.min(y));
                        m[class_index(a, b)] / m[0]
                            * (-log_bias(self.bias_rate, self.bias_radius, a, b)).exp()
                            / multiplicity(a, b)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Runs the biased worm chain.
pub fn ising_worm_correlation(
    study: &WormStudy,
    seed: u64,
) -> Result<WormCorrelation, AnalysisError> {
    let l = study.side;
    if l < 3
        || 2 * study.max_displacement >= l
        || study.batches < 2
        || study.steps < study.batches as u64
    {
        return Err(AnalysisError::Invalid(
            "worm needs side >= 3, 2 * max_displacement <= side, steps >= batches >= 2".into(),
        ));
    }
    if !(study.beta > 0.0 && study.beta.is_finite()) {
        return Err(AnalysisError::Invalid(format!(
            "beta {} must be positive",
            study.beta
        )));
    }
    let t = (study.beta / 2.0).tanh();
    let half = l / 2;
    let width = (half + 1) as usize;
    // per (|dx|, |dy|): log bias and class slot
    let mut logw = vec![0.0; width * width];
    let mut slot = vec![u32::MAX; width * width];
    for x in 0..=half {
        for y in 0..=half {
            let (a, b) = (x.max(y), x.min(y));
            logw[x as usize * width + y as usize] =
                log_bias(study.bias_rate, study.bias_radius, a, b);
            if a <= study.max_displacement {
                slot[x as usize * width + y as usize] = class_index(a, b) as u32;
            }
        }
    }
    let wrap = |d: i64| {
        let d = d.rem_euclid(l);
        d.min(l - d) as usize
    };
    let mut rng = stream_rng(seed, 0);
    let mut bonds = vec![false; (2 * l * l) as usize];
    let (mut hx, mut hy, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    let num_classes = class_index(study.max_displacement, study.max_displacement) + 1;
    let mut counts = vec![vec![0.0; num_classes]; study.batches];
    let per_batch = study.steps / study.batches as u64;
    let total = study.burn_in + per_batch * study.batches as u64;
    let mut cur = 0usize; // table index of the current displacement
    for step in 0..total {
        if hx == tx && hy == ty {
            // a closed state may restart anywhere; the move below is then tried as usual
            hx = rng.gen_range(0..l);
            hy = rng.gen_range(0..l);
            tx = hx;
            ty = hy;
        }
        let (nx, ny, bond) = match rng.gen_range(0..4u8) {
            0 => ((hx + 1) % l, hy, 2 * (hx * l + hy)),
            1 => {
                let nx = (hx + l - 1) % l;
                (nx, hy, 2 * (nx * l + hy))
            }
            2 => (hx, (hy + 1) % l, 2 * (hx * l + hy) + 1),
            _ => {
                let ny = (hy + l - 1) % l;
                (hx, ny, 2 * (hx * l + ny) + 1)
            }
        };
        let next = wrap(nx - tx) * width + wrap(ny - ty);
        let occupied = bonds[bond as usize];
        let ratio = if occupied { 1.0 / t } else { t } * (logw[next] - logw[cur]).exp();
        if ratio >= 1.0 || rng.gen::<f64>() < ratio {
            bonds[bond as usize] = !occupied;
            hx = nx;
            hy = ny;
        }
        cur = wrap(hx - tx) * width + wrap(hy - ty);
        if step >= study.burn_in {
            let s = slot[cur];
            if s != u32::MAX {
                let batch = ((step - study.burn_in) / per_batch) as usize;
                counts[batch][s as usize] += 1.0;
            }
        }
    }
    Ok(WormCorrelation {
        max_displacement: study.max_displacement,
        bias_rate: study.bias_rate,
        bias_radius: study.bias_radius,
        counts,
    })
}
