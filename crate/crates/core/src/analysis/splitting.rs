//! Infinite-volume Bernoulli cluster exploration and multilevel splitting for small
//! connection probabilities.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng as _;
use rustc_hash::{FxHashMap, FxHashSet};

use super::{mean_ci, AnalysisError, EstimateWithCI};
use crate::clustergeo::Cluster;
use crate::lattice::{Bond, Site};
use crate::rng::{stream_rng, Rng};

/// Progress coordinate used to define splitting thresholds.
#[derive(Debug, Clone, PartialEq)]
pub enum Level {
    /// A single coordinate.
    Axis(usize),
    /// Projection onto a direction (normalised internally).
    Direction(Vec<f64>),
    /// Sup-norm distance from the origin.
    SupNorm,
}

impl Level {
    fn value(&self, s: Site, dim: usize) -> f64 {
        match self {
            Level::Axis(i) => s.0[*i] as f64,
            Level::Direction(v) => {
                let len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                s.0.iter()
                    .take(dim)
                    .zip(v)
                    .map(|(&a, b)| a as f64 * b)
                    .sum::<f64>()
                    / len
            }
            Level::SupNorm => s.sup_norm() as f64,
        }
    }
}

/// Breadth-first exploration of the open cluster of the origin in independent bond
/// percolation on `Z^d`, sampling each bond the first time it is examined. Cloning an
/// exploration duplicates its whole state, which is what splitting relies on.
#[derive(Debug, Clone)]
pub struct Exploration {
    dim: usize,
    origin: Site,
    sites: FxHashSet<Site>,
    bonds: FxHashMap<(Site, u8), bool>,
    queue: VecDeque<Site>,
    max_level: f64,
}

impl Exploration {
    pub fn new(dim: usize, origin: Site, level: &Level) -> Self {
        let mut sites = FxHashSet::default();
        sites.insert(origin);
        Exploration {
            dim,
            origin,
            sites,
            bonds: FxHashMap::default(),
            queue: VecDeque::from([origin]),
            max_level: level.value(origin, dim),
        }
    }

    pub fn max_level(&self) -> f64 {
        self.max_level
    }

    pub fn is_finished(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.sites.contains(&s)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Explores until a site at level `threshold` or beyond joins the cluster (returns
    /// `true`) or the cluster is complete (returns `false`).
    pub fn advance(
        &mut self,
        p: f64,
        level: &Level,
        threshold: f64,
        max_sites: usize,
        rng: &mut Rng,
    ) -> Result<bool, AnalysisError> {
        if self.max_level >= threshold {
            return Ok(true);
        }
        while let Some(&v) = self.queue.front() {
            for axis in 0..self.dim {
                let step = Site::unit(axis);
                for forward in [true, false] {
                    let (u, key) = if forward {
                        (v.add(step), (v, axis as u8))
                    } else {
                        (v.sub(step), (v.sub(step), axis as u8))
                    };
                    if self.bonds.contains_key(&key) {
                        continue;
                    }
                    let open = rng.gen::<f64>() < p;
                    self.bonds.insert(key, open);
                    if open && self.sites.insert(u) {
                        if self.sites.len() > max_sites {
                            return Err(AnalysisError::ClusterTooLarge(max_sites));
                        }
                        self.queue.push_back(u);
                        let lv = level.value(u, self.dim);
                        if lv > self.max_level {
                            self.max_level = lv;
                        }
                        if lv >= threshold {
                            return Ok(true);
                        }
                    }
                }
            }
            self.queue.pop_front();
        }
        Ok(false)
    }

    /// Converts a finished exploration into a [`Cluster`] with the given target.
    pub fn into_cluster(self, target: Site) -> Result<Cluster, AnalysisError> {
        let mut vertices: Vec<Site> = self.sites.into_iter().collect();
        vertices.sort();
        let mut edges: Vec<Bond> = self
            .bonds
            .into_iter()
            .filter(|&(_, open)| open)
            .map(|((s, axis), _)| Bond::new(s, s.add(Site::unit(axis as usize))))
            .collect();
        edges.sort();
        Ok(Cluster::new(
            self.dim,
            vertices,
            edges,
            self.origin,
            target,
        )?)
    }
}

/// Samples the complete open cluster of the origin.
pub fn explore_cluster(
    dim: usize,
    p: f64,
    max_sites: usize,
    rng: &mut Rng,
) -> Result<Exploration, AnalysisError> {
    let level = Level::SupNorm;
    let mut e = Exploration::new(dim, Site::ORIGIN, &level);
    e.advance(p, &level, f64::INFINITY, max_sites, rng)?;
    Ok(e)
}

/// Fixed-effort multilevel splitting for Bernoulli bond percolation.
#[derive(Debug, Clone)]
pub struct SplittingConfig {
    pub dim: usize,
    pub p: f64,
    pub level: Level,
    /// Strictly increasing thresholds.
    pub thresholds: Vec<f64>,
    pub per_stage: usize,
    pub max_sites: usize,
}

/// Replicate-level output of [`SplittingConfig::run`].
#[derive(Debug, Clone)]
pub struct SplittingEstimate {
    /// `reach[r][i]`: replicate `r` estimate of `P(max level >= thresholds[i])`.
    pub reach: Vec<Vec<f64>>,
    /// `hits[r][j]`: replicate `r` estimate of `P(0 <-> targets[j])`.
    pub hits: Vec<Vec<f64>>,
}

impl SplittingEstimate {
    pub fn reach_ci(&self, i: usize) -> Result<EstimateWithCI, AnalysisError> {
        mean_ci(
            &self.reach.iter().map(|r| r[i]).collect::<Vec<_>>(),
            "splitting",
        )
    }

    pub fn hit_ci(&self, j: usize) -> Result<EstimateWithCI, AnalysisError> {
        mean_ci(
            &self.hits.iter().map(|r| r[j]).collect::<Vec<_>>(),
            "splitting",
        )
    }
}

impl SplittingConfig {
    fn validate(&self) -> Result<(), AnalysisError> {
        if !(0.0..1.0).contains(&self.p)
            || self.per_stage == 0
            || self.dim == 0
            || self.dim > crate::lattice::MAX_DIM
        {
            return Err(AnalysisError::Invalid(
                "splitting needs 0 <= p < 1, a valid dimension and per_stage > 0".into(),
            ));
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnalysisError::Invalid("thresholds must increase".into()));
        }
        Ok(())
    }

    /// One splitting run; returns reach probabilities per threshold and hit probabilities
    /// per target, both unbiased.
    pub fn run_once(
        &self,
        targets: &[Site],
        rng: &mut Rng,
    ) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
        self.validate()?;
        let n = self.per_stage;
        let mut reach = vec![0.0; self.thresholds.len()];
        let mut hits = vec![0.0; targets.len()];
        let mut weight = 1.0;
        let mut current: Vec<Exploration> =
            vec![Exploration::new(self.dim, Site::ORIGIN, &self.level); n];
        let record = |e: &Exploration, w: f64, hits: &mut Vec<f64>| {
            for (h, t) in hits.iter_mut().zip(targets) {
                if e.contains(*t) {
                    *h += w;
                }
            }
        };
        for (i, &threshold) in self.thresholds.iter().enumerate() {
            let mut survivors = Vec::new();
            for mut e in current.drain(..) {
                if e.advance(self.p, &self.level, threshold, self.max_sites, rng)? {
                    survivors.push(e);
                } else {
                    record(&e, weight / n as f64, &mut hits);
                }
            }
            weight *= survivors.len() as f64 / n as f64;
            reach[i] = weight;
            if survivors.is_empty() {
                return Ok((reach, hits));
            }
            let s = survivors.len();
            let mut next = Vec::with_capacity(n);
            for e in &survivors {
                for _ in 0..n / s {
                    next.push(e.clone());
                }
            }
            for k in sample(rng, s, n % s).into_iter() {
                next.push(survivors[k].clone());
            }
            current = next;
        }
        for mut e in current {
            e.advance(self.p, &self.level, f64::INFINITY, self.max_sites, rng)?;
            record(&e, weight / n as f64, &mut hits);
        }
        Ok((reach, hits))
    }

    /// Independent replicates on streams `0..replicates` of `seed`.
    pub fn run(
        &self,
        targets: &[Site],
        replicates: usize,
        seed: u64,
    ) -> Result<SplittingEstimate, AnalysisError> {
        let mut out = SplittingEstimate {
            reach: Vec::new(),
            hits: Vec::new(),
        };
        for r in 0..replicates {
            let mut rng = stream_rng(seed, r as u64);
            let (reach, hits) = self.run_once(targets, &mut rng)?;
            out.reach.push(reach);
            out.hits.push(hits);
        }
        Ok(out)
    }
}
