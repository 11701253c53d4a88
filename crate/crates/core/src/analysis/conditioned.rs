//! Rejection sampling of the cluster of the origin conditioned to contain a target.

use super::splitting::{explore_cluster, Exploration};
use super::AnalysisError;
use crate::clustergeo::Cluster;
use crate::fkmodel::{cluster_labeling, Boundary, FkChain, ModelParams, Sampler};
use crate::lattice::{BondGraph, Site};
use crate::rng::{stream_rng, Rng};

/// Where unconditioned configurations come from.
pub enum ConditionedSource<'g> {
    /// Independent bond percolation on `Z^d`, explored lazily around the origin.
    Bernoulli {
        dim: usize,
        p: f64,
        max_sites: usize,
    },
    /// A Markov chain on a finite box; the origin must lie in the box.
    Chain {
        graph: &'g BondGraph,
        params: ModelParams,
        boundary: Boundary,
        sampler: Sampler,
        burn_in: usize,
        thinning: usize,
    },
}

enum Engine<'g> {
    Bernoulli {
        dim: usize,
        p: f64,
        max_sites: usize,
        rng: Rng,
    },
    Chain {
        graph: &'g BondGraph,
        chain: Box<FkChain<'g>>,
        thinning: usize,
    },
}

/// Stream of clusters containing both the origin and the target. Yields an
/// [`AnalysisError::AcceptanceTooLow`] error (and then stops) when `max_rejects`
/// consecutive proposals fail.
pub struct ConditionedClusters<'g> {
    engine: Engine<'g>,
    target: Site,
    max_rejects: usize,
    pub proposals: u64,
    pub accepted: u64,
    failed: bool,
}

pub fn conditioned_cluster_sampler<'g>(
    source: ConditionedSource<'g>,
    target: Site,
    max_rejects: usize,
    seed: u64,
) -> Result<ConditionedClusters<'g>, AnalysisError> {
    if max_rejects == 0 {
        return Err(AnalysisError::Invalid(
            "max_rejects must be positive".into(),
        ));
    }
    let engine = match source {
        ConditionedSource::Bernoulli { dim, p, max_sites } => {
            if !(0.0..1.0).contains(&p) {
                return Err(AnalysisError::Invalid(format!(
                    "bond probability {p} outside [0, 1)"
                )));
            }
            Engine::Bernoulli {
                dim,
                p,
                max_sites,
                rng: stream_rng(seed, 0),
            }
        }
        ConditionedSource::Chain {
            graph,
            params,
            boundary,
            sampler,
            burn_in,
            thinning,
        } => {
            for s in [Site::ORIGIN, target] {
                if graph.vertex(s).is_none() {
                    return Err(AnalysisError::Fk(crate::fkmodel::FkError::OutsideBox(s)));
                }
            }
            let mut chain = FkChain::new(graph, params, boundary, sampler, stream_rng(seed, 0))?;
            for _ in 0..burn_in {
                chain.sweep();
            }
            Engine::Chain {
                graph,
                chain: Box::new(chain),
                thinning: thinning.max(1),
            }
        }
    };
    Ok(ConditionedClusters {
        engine,
        target,
        max_rejects,
        proposals: 0,
        accepted: 0,
        failed: false,
    })
}

impl ConditionedClusters<'_> {
    fn propose(&mut self) -> Result<Option<Cluster>, AnalysisError> {
        self.proposals += 1;
        match &mut self.engine {
            Engine::Bernoulli {
                dim,
                p,
                max_sites,
                rng,
            } => {
                let e: Exploration = explore_cluster(*dim, *p, *max_sites, rng)?;
                if e.contains(self.target) {
                    Ok(Some(e.into_cluster(self.target)?))
                } else {
                    Ok(None)
                }
            }
            Engine::Chain {
                graph,
                chain,
                thinning,
            } => {
                for _ in 0..*thinning {
                    chain.sweep();
                }
                let labels = cluster_labeling(graph, chain.state());
                let o = graph.vertex(Site::ORIGIN).expect("checked");
                let t = graph.vertex(self.target).expect("checked");
                if labels.same(o, t) {
                    Ok(Some(Cluster::from_config(
                        graph,
                        chain.state(),
                        Site::ORIGIN,
                        self.target,
                    )?))
                } else {
                    Ok(None)
                }
            }
        }
    }
}

impl Iterator for ConditionedClusters<'_> {
    type Item = Result<Cluster, AnalysisError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        for _ in 0..self.max_rejects {
            match self.propose() {
                Ok(Some(c)) => {
                    self.accepted += 1;
                    return Some(Ok(c));
                }
                Ok(None) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        self.failed = true;
        Some(Err(AnalysisError::AcceptanceTooLow {
            max_rejects: self.max_rejects,
        }))
    }
}
