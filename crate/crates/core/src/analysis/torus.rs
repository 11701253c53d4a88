//! Two-point connectivity on a periodic square lattice, accumulated over every pair of
//! vertices after each chain step.

use super::{mean_ci, AnalysisError, DecayPoint, DecaySeries, EstimateWithCI};
use crate::fkmodel::{cluster_labeling, Boundary, FkChain, ModelParams, Sampler};
use crate::lattice::BondGraph;
use crate::rng::stream_rng;

/// Parameters of a torus connectivity run.
#[derive(Debug, Clone)]
pub struct TorusStudy {
    pub side: i64,
    pub params: ModelParams,
    pub sampler: Sampler,
    pub burn_in: usize,
    pub sweeps: usize,
    pub batches: usize,
    /// Largest sup-norm displacement recorded; must be below `side / 2`.
    pub max_displacement: i64,
}

/// Pair counts per batch, grouped by displacement modulo the lattice symmetries.
#[derive(Debug, Clone)]
pub struct TorusConnectivity {
    side: i64,
    max_displacement: i64,
    sweeps_per_batch: usize,
    /// `counts[batch][class]` with classes `(a, b)`, `0 <= b <= a <= max`.
    counts: Vec<Vec<u64>>,
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

impl TorusConnectivity {
    /// Estimate of `P(0 <-> (dx, dy))` from batch means.
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
        let norm = 2.0
            / ((self.side * self.side) as f64 * multiplicity(a, b) * self.sweeps_per_batch as f64);
        let values: Vec<f64> = self
            .counts
            .iter()
            .map(|c| c[class_index(a, b)] as f64 * norm)
            .collect();
        let mut e = mean_ci(&values, "torus-batch-means")?;
        e.n = (self.counts.len() * self.sweeps_per_batch) as u64;
        Ok(e)
    }

    /// Replicate matrix (one row per batch) of the estimates along `v`, for jackknife fits.
    pub fn batch_series(&self, v: (i64, i64), multiples: &[i64]) -> Vec<Vec<f64>> {
        let norm = 2.0 / ((self.side * self.side) as f64 * self.sweeps_per_batch as f64);
        self.counts
            .iter()
            .map(|c| {
                multiples
                    .iter()
                    .map(|&k| {
                        let (x, y) = ((k * v.0).abs(), (k * v.1).abs());
                        let (a, b) = (x.max(y), x.min(y));
                        c[class_index(a, b)] as f64 * norm / multiplicity(a, b)
                    })
                    .collect()
            })
            .collect()
    }

    /// Series `P(0 <-> k v)` for the given multiples of a lattice vector, with scale `|k v|`.
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
}

/// Runs one chain on the torus and accumulates connected pairs by displacement.
pub fn torus_connectivity(
    study: &TorusStudy,
    seed: u64,
) -> Result<TorusConnectivity, AnalysisError> {
    let l = study.side;
    if 2 * study.max_displacement >= l || study.batches < 2 || study.sweeps < study.batches {
        return Err(AnalysisError::Invalid(
            "need 2 * max_displacement < side and sweeps >= batches >= 2".into(),
        ));
    }
    let graph = BondGraph::torus(2, l).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let mut chain = FkChain::new(
        &graph,
        study.params,
        Boundary::Free,
        study.sampler,
        stream_rng(seed, 0),
    )?;
    for _ in 0..study.burn_in {
        chain.sweep();
    }
    let max = study.max_displacement;
    let num_classes = class_index(max, max) + 1;
    let per_batch = study.sweeps / study.batches;
    let wrap = |d: i64| {
        let d = d.rem_euclid(l);
        if d > l / 2 {
            d - l
        } else {
            d
        }
    };
    let n = graph.num_vertices();
    let mut counts = vec![vec![0u64; num_classes]; study.batches];
    let mut members: Vec<u32> = vec![0; n];
    let mut start: Vec<usize> = Vec::new();
    for batch in counts.iter_mut() {
        for _ in 0..per_batch {
            chain.sweep();
            let labels = cluster_labeling(&graph, chain.state());
            // bucket vertices by cluster label
            start.clear();
            start.resize(labels.count + 1, 0);
            for &lab in &labels.labels {
                start[lab as usize + 1] += 1;
            }
            for i in 0..labels.count {
                start[i + 1] += start[i];
            }
            let mut fill = start.clone();
            for (v, &lab) in labels.labels.iter().enumerate() {
                members[fill[lab as usize]] = v as u32;
                fill[lab as usize] += 1;
            }
            for c in 0..labels.count {
                let group = &members[start[c]..start[c + 1]];
                for (i, &u) in group.iter().enumerate() {
                    let (ux, uy) = (u as i64 / l, u as i64 % l);
                    for &w in &group[i + 1..] {
                        let dx = wrap(w as i64 / l - ux).abs();
                        let dy = wrap(w as i64 % l - uy).abs();
                        let (a, b) = (dx.max(dy), dx.min(dy));
                        if a <= max {
                            batch[class_index(a, b)] += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(TorusConnectivity {
        side: l,
        max_displacement: max,
        sweeps_per_batch: per_batch,
        counts,
    })
}
