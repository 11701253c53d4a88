//! Laboratory for the random-cluster (FK) model: exact and Markov chain samplers,
//! directional decay rates and Wulff shapes, cluster skeletons and cone-point
//! decompositions, planar duality, Potts interfaces and the statistical estimators
//! built on top of them.

pub mod analysis;
pub mod cli;
pub mod clustergeo;
pub mod duality2d;
pub mod fkmodel;
pub mod geometry;
pub mod lattice;
pub mod potts;
pub mod rng;
