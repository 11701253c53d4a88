//! Planar duality for nearest-neighbour models on boxes of `Z^2`.
//!
//! Dual sites are half-integer points. A [`DualSite`] `(i, j)` stands for the point
//! `(i - 1/2, j - 1/2)`, so the dual of the primal box `lo..=hi` is the integer box
//! `lo..=hi+1` in these coordinates.

use thiserror::Error;

use crate::fkmodel::{exact_distribution, BondConfiguration, Boundary, FkError, ModelParams};
use crate::lattice::{Bond, BondGraph, LatticeBox, LatticeError, Site};

#[derive(Debug, Error)]
pub enum DualityError {
    #[error("duality is implemented for planar nearest-neighbour boxes only")]
    NotPlanar,
    #[error("parameter out of range: {0}")]
    BadParameter(f64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Fk(#[from] FkError),
}

/// Integer label of a dual site; see the module documentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualSite(pub i64, pub i64);

impl DualSite {
    /// Euclidean coordinates of the dual site.
    pub fn point(self) -> [f64; 2] {
        [self.0 as f64 - 0.5, self.1 as f64 - 0.5]
    }

    pub fn as_site(self) -> Site {
        Site::xy(self.0, self.1)
    }

    pub fn from_site(s: Site) -> Self {
        DualSite(s.0[0], s.0[1])
    }

    /// Dual site at the given half-integer point.
    pub fn at(x: f64, y: f64) -> Self {
        DualSite((x + 0.5).round() as i64, (y + 0.5).round() as i64)
    }
}

/// The dual box in [`DualSite`] coordinates.
pub fn dual_box(primal: &LatticeBox) -> Result<LatticeBox, DualityError> {
    if primal.dim() != 2 {
        return Err(DualityError::NotPlanar);
    }
    Ok(LatticeBox::new(
        2,
        primal.lo(),
        primal.hi().add(Site::xy(1, 1)),
    )?)
}

/// The dual bond crossing a primal nearest-neighbour bond.
pub fn dual_bond(b: &Bond) -> Bond {
    let (x, y) = (b.a.0[0], b.a.0[1]);
    if b.b.0[0] == x + 1 {
        // horizontal primal bond: vertical dual bond at abscissa x + 1/2
        Bond::new(Site::xy(x + 1, y), Site::xy(x + 1, y + 1))
    } else {
        // vertical primal bond: horizontal dual bond at ordinate y + 1/2
        Bond::new(Site::xy(x, y + 1), Site::xy(x + 1, y + 1))
    }
}

/// The primal bond crossed by a dual bond (inverse of [`dual_bond`]).
pub fn primal_bond(d: &Bond) -> Bond {
    let (i, j) = (d.a.0[0], d.a.0[1]);
    if d.b.0[0] == i {
        Bond::new(Site::xy(i - 1, j), Site::xy(i, j))
    } else {
        Bond::new(Site::xy(i, j - 1), Site::xy(i, j))
    }
}

/// Dual configuration on the dual box under wired conditions: each dual bond crossing a
/// primal bond is open iff the primal bond is closed; dual bonds along the outer ring
/// cross no bond of the box and are open.
pub fn dual_config(
    primal: &BondGraph,
    config: &BondConfiguration,
) -> Result<(BondGraph, BondConfiguration), DualityError> {
    let dbx = dual_box(primal.lattice_box())?;
    let dual = BondGraph::nearest_neighbour(&dbx);
    let mut open = vec![true; dual.num_bonds()];
    for (e, b) in primal.bonds().iter().enumerate() {
        let k = dual
            .bond_index(&dual_bond(b))
            .expect("dual bond inside dual box");
        open[k] = !config.open[e];
    }
    Ok((
        dual,
        BondConfiguration {
            bx: dbx,
            boundary: Boundary::Wired,
            open,
        },
    ))
}

/// Recovers the primal configuration from a dual one (ring bonds are ignored).
pub fn primal_config(
    primal: &BondGraph,
    dual: &BondGraph,
    dual_cfg: &BondConfiguration,
) -> BondConfiguration {
    let open = primal
        .bonds()
        .iter()
        .map(|b| {
            !dual_cfg.open[dual
                .bond_index(&dual_bond(b))
                .expect("dual bond inside dual box")]
        })
        .collect();
    BondConfiguration {
        bx: *primal.lattice_box(),
        boundary: Boundary::Free,
        open,
    }
}

/// `p* = q (1 - p) / (p + q (1 - p))`.
pub fn dual_parameter(p: f64, q: f64) -> Result<f64, DualityError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DualityError::BadParameter(p));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(DualityError::BadParameter(q));
    }
    Ok(q * (1.0 - p) / (p + q * (1.0 - p)))
}

/// Dual inverse temperature for unit couplings.
pub fn dual_beta(beta: f64, q: f64) -> Result<f64, DualityError> {
    let p = crate::fkmodel::bond_probability(1.0, beta);
    let ps = dual_parameter(p, q)?;
    Ok(-(1.0 - ps).ln() / 2.0)
}

/// Self-dual bond probability, located by bisection on `p* - p`.
pub fn self_dual_point(q: f64) -> Result<f64, DualityError> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dual_parameter(mid, q)? > mid {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact comparison of the pushforward of the free measure on a primal box with the wired
/// dual measure at `p*`, marginalised on the bonds crossing primal bonds.
#[derive(Debug, Clone, Copy)]
pub struct DualityReport {
    pub total_variation: f64,
    pub involution_max_error: f64,
}

pub fn check_measure_duality(
    primal_box: &LatticeBox,
    p: f64,
    q: f64,
) -> Result<DualityReport, DualityError> {
    let primal = BondGraph::nearest_neighbour(primal_box);
    let params = ModelParams::from_p(p, q)?;
    let pf = exact_distribution(&primal, &params, Boundary::Free)?;
    let dbx = dual_box(primal_box)?;
    let dual = BondGraph::nearest_neighbour(&dbx);
    let dual_params = ModelParams::from_p(dual_parameter(p, q)?, q)?;
    let dw = exact_distribution(&dual, &dual_params, Boundary::Wired)?;
    let crossing: Vec<usize> = primal
        .bonds()
        .iter()
        .map(|b| dual.bond_index(&dual_bond(b)).expect("inside"))
        .collect();
    let m = primal.num_bonds();
    // dual marginal indexed by the primal mask it corresponds to
    let mut marginal = vec![0.0; 1 << m];
    for (mask, pr) in dw.probs.iter().enumerate() {
        let mut pm = 0usize;
        for (e, &k) in crossing.iter().enumerate() {
            if mask >> k & 1 == 0 {
                pm |= 1 << e;
            }
        }
        marginal[pm] += pr;
    }
    let tv = 0.5
        * pf.probs
            .iter()
            .zip(&marginal)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    let mut inv: f64 = 0.0;
    for mask in 0..(1u64 << m) {
        let c = BondConfiguration::from_mask(&primal, Boundary::Free, mask);
        let (dg, dc) = dual_config(&primal, &c)?;
        let back = primal_config(&primal, &dg, &dc);
        inv = inv.max(if back.open == c.open { 0.0 } else { 1.0 });
    }
    Ok(DualityReport {
        total_variation: tv,
        involution_max_error: inv,
    })
}
