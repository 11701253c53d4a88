//! Planar Potts model with fixed boundary spins, the Edwards-Sokal coupling, Dobrushin
//! interfaces and their rescaled height profiles.
//!
//! The Potts weight is `prod exp(beta * [s_x = s_y])` over nearest-neighbour pairs meeting
//! the box `{-N..=N}^2`, so the coupled FK bonds open with probability `1 - exp(-beta)`.
//! Spins live on `{-N-1..=N+1}^2`; the outer ring holds the fixed boundary colours.
//! Colours are `1..=q`.

use std::io::Write;

use rand::Rng as _;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::clustergeo::{cluster_cone_points, Cluster, ClusterGeoError};
use crate::duality2d::{dual_bond, DualSite};
use crate::fkmodel::UnionFind;
use crate::geometry::{dual_vector, DirectionalNorm};
use crate::lattice::{Bond, BondGraph, LatticeBox, Site};
use crate::rng::{stream_rng, Rng};

/// Largest state count accepted by [`exact_potts_distribution`].
pub const MAX_EXACT_STATES: f64 = 1e7;

#[derive(Debug, Error)]
pub enum PottsError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("exact Potts table would have {0} states")]
    TooLarge(f64),
    #[error("a cluster touches boundary spins of different colours")]
    InconsistentBoundary,
    #[error("no interface component joins the two boundary sign changes")]
    NoSpanningComponent,
    #[error("interface polyline is not a graph over the horizontal axis")]
    MultipleCrossings,
    #[error("the boundary has {0} sign changes, expected 2")]
    SignChanges(usize),
    #[error(transparent)]
    ClusterGeo(#[from] ClusterGeoError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Fixed boundary colours on the outer ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PottsBoundary {
    /// Colour 1 where `(normal, i) >= 0`, colour 2 elsewhere.
    Dobrushin {
        normal: [f64; 2],
    },
    Uniform(u8),
}

impl PottsBoundary {
    pub fn dobrushin_vertical() -> Self {
        PottsBoundary::Dobrushin { normal: [0.0, 1.0] }
    }

    pub fn colour(&self, s: Site) -> u8 {
        match *self {
            PottsBoundary::Dobrushin { normal } => {
                if normal[0] * s.0[0] as f64 + normal[1] * s.0[1] as f64 >= 0.0 {
                    1
                } else {
                    2
                }
            }
            PottsBoundary::Uniform(c) => c,
        }
    }
}

/// Geometry shared by all configurations of a given half-width.
#[derive(Debug, Clone)]
pub struct PottsLattice {
    n: i64,
    graph: BondGraph,
    interior: Vec<bool>,
    active: Vec<u32>,
}

impl PottsLattice {
    pub fn new(n: i64) -> Result<Self, PottsError> {
        if n < 0 {
            return Err(PottsError::InvalidParameter {
                name: "N",
                value: n as f64,
            });
        }
        let outer = LatticeBox::centered(2, n + 1).expect("valid box");
        let graph = BondGraph::nearest_neighbour(&outer);
        let interior: Vec<bool> = outer.sites().map(|s| s.sup_norm() <= n).collect();
        let active = (0..graph.num_bonds())
            .filter(|&e| {
                let (a, b) = graph.ends(e);
                interior[a] || interior[b]
            })
            .map(|e| e as u32)
            .collect();
        Ok(PottsLattice {
            n,
            graph,
            interior,
            active,
        })
    }

    pub fn half_width(&self) -> i64 {
        self.n
    }

    /// Graph on `{-N-1..=N+1}^2`.
    pub fn graph(&self) -> &BondGraph {
        &self.graph
    }

    pub fn is_interior(&self, v: usize) -> bool {
        self.interior[v]
    }

    /// Bonds with at least one interior endpoint, as graph bond indices.
    pub fn active_bonds(&self) -> &[u32] {
        &self.active
    }

    pub fn num_interior(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }
}

/// Spins on `{-N-1..=N+1}^2`, indexed like the vertices of [`PottsLattice::graph`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    pub n: i64,
    pub spins: Vec<u8>,
}

impl SpinConfiguration {
    /// Interior spins from `interior` (lexicographic order) with boundary colours applied.
    pub fn from_interior(lat: &PottsLattice, bc: &PottsBoundary, interior: &[u8]) -> Self {
        let g = lat.graph();
        let mut it = interior.iter();
        let spins = (0..g.num_vertices())
            .map(|v| {
                if lat.is_interior(v) {
                    *it.next().expect("enough interior spins")
                } else {
                    bc.colour(g.site(v))
                }
            })
            .collect();
        SpinConfiguration {
            n: lat.half_width(),
            spins,
        }
    }

    pub fn at(&self, lat: &PottsLattice, s: Site) -> Option<u8> {
        lat.graph().vertex(s).map(|v| self.spins[v])
    }
}

/// Number of agreeing active pairs.
pub fn agreeing_pairs(lat: &PottsLattice, sigma: &SpinConfiguration) -> usize {
    lat.active_bonds()
        .iter()
        .filter(|&&e| {
            let (a, b) = lat.graph().ends(e as usize);
            sigma.spins[a] == sigma.spins[b]
        })
        .count()
}

/// Unnormalised Potts weight `exp(beta * agreeing pairs)`.
pub fn potts_weight(lat: &PottsLattice, sigma: &SpinConfiguration, beta: f64) -> f64 {
    (beta * agreeing_pairs(lat, sigma) as f64).exp()
}

/// Exact Potts probabilities over all interior configurations; entry `k` corresponds to the
/// base-`q` digits of `k` (first interior site most significant), colours offset by one.
pub fn exact_potts_distribution(
    lat: &PottsLattice,
    beta: f64,
    q: u8,
    bc: &PottsBoundary,
) -> Result<Vec<f64>, PottsError> {
    let m = lat.num_interior();
    let states = (q as f64).powi(m as i32);
    if states > MAX_EXACT_STATES {
        return Err(PottsError::TooLarge(states));
    }
    let states = states as usize;
    let mut interior = vec![1u8; m];
    let mut logw = Vec::with_capacity(states);
    for k in 0..states {
        let mut r = k;
        for i in (0..m).rev() {
            interior[i] = (r % q as usize) as u8 + 1;
            r /= q as usize;
        }
        let sigma = SpinConfiguration::from_interior(lat, bc, &interior);
        logw.push(beta * agreeing_pairs(lat, &sigma) as f64);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logw.iter().map(|w| (w - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// Swendsen-Wang dynamics for the Edwards-Sokal coupling with fixed boundary colours.
pub struct EsChain<'a> {
    lat: &'a PottsLattice,
    bc: PottsBoundary,
    beta: f64,
    p: f64,
    q: u8,
    spins: Vec<u8>,
    open: Vec<bool>,
    uf: UnionFind,
    colour: Vec<u8>,
    rng: Rng,
    block_shifts: usize,
}

impl<'a> EsChain<'a> {
    /// Starts from the boundary colouring extended inwards.
    pub fn new(
        lat: &'a PottsLattice,
        beta: f64,
        q: u8,
        bc: PottsBoundary,
        rng: Rng,
    ) -> Result<Self, PottsError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(PottsError::InvalidParameter {
                name: "beta",
                value: beta,
            });
        }
        if q < 2 {
            return Err(PottsError::InvalidParameter {
                name: "q",
                value: q as f64,
            });
        }
        let g = lat.graph();
        let spins = (0..g.num_vertices())
            .map(|v| bc.colour(g.site(v)))
            .collect();
        Ok(EsChain {
            lat,
            bc,
            beta,
            p: -(-beta).exp_m1(),
            q,
            spins,
            open: vec![false; g.num_bonds()],
            uf: UnionFind::new(g.num_vertices()),
            colour: vec![0; g.num_vertices()],
            rng,
            block_shifts: 0,
        })
    }

    /// Number of column-block shift proposals made after every Swendsen-Wang update.
    pub fn with_block_shifts(mut self, k: usize) -> Self {
        self.block_shifts = k;
        self
    }

    pub fn spins(&self) -> SpinConfiguration {
        SpinConfiguration {
            n: self.lat.half_width(),
            spins: self.spins.clone(),
        }
    }

    /// Open state of every graph bond after the last Swendsen-Wang update (inactive bonds
    /// are always closed). Block shifts move spins but leave this state untouched.
    pub fn bonds(&self) -> &[bool] {
        &self.open
    }

    pub fn step(&mut self) -> Result<(), PottsError> {
        let g = self.lat.graph();
        for &e in self.lat.active_bonds() {
            let (a, b) = g.ends(e as usize);
            self.open[e as usize] =
                self.spins[a] == self.spins[b] && self.rng.gen::<f64>() < self.p;
        }
        self.uf.reset();
        for &e in self.lat.active_bonds() {
            if self.open[e as usize] {
                let (a, b) = g.ends(e as usize);
                self.uf.union(a, b);
            }
        }
        self.colour.iter_mut().for_each(|c| *c = 0);
        for v in 0..g.num_vertices() {
            if !self.lat.is_interior(v) {
                let r = self.uf.find(v);
                let c = self.bc.colour(g.site(v));
                if self.colour[r] != 0 && self.colour[r] != c {
                    return Err(PottsError::InconsistentBoundary);
                }
                self.colour[r] = c;
            }
        }
        for v in 0..g.num_vertices() {
            if self.lat.is_interior(v) {
                let r = self.uf.find(v);
                if self.colour[r] == 0 {
                    self.colour[r] = self.rng.gen_range(1..=self.q);
                }
                self.spins[v] = self.colour[r];
            }
        }
        for _ in 0..self.block_shifts {
            self.block_shift();
        }
        Ok(())
    }

    /// Metropolis move translating the interior spins of a block of columns by one row.
    ///
    /// Shifting up drops the top row, which must carry the colours of the ring above it,
    /// and fills the bottom row with the colours of the ring below; shifting down is the
    /// inverse map. Vertical pairs are unchanged, so only the pairs along the block's
    /// side edges and its top and bottom rows enter the energy difference.
    fn block_shift(&mut self) {
        let n = self.lat.half_width();
        let side = (2 * n + 3) as usize;
        let a = self.rng.gen_range(-n..=n);
        let b = self.rng.gen_range(-n..=n);
        let (x0, x1) = (a.min(b), a.max(b));
        let up = self.rng.gen::<bool>();
        let col = |x: i64| ((x + n + 1) as usize) * side;
        let (top, bottom) = (side - 2, 1usize);
        let (drop, ring_drop, fill, ring_fill) = if up {
            (top, side - 1, bottom, 0)
        } else {
            (bottom, 0, top, side - 1)
        };
        for x in x0..=x1 {
            if self.spins[col(x) + drop] != self.spins[col(x) + ring_drop] {
                return;
            }
        }
        let new_at = |spins: &[u8], x: i64, y: usize| -> u8 {
            let c = col(x);
            if y == fill {
                spins[c + ring_fill]
            } else if up {
                spins[c + y - 1]
            } else {
                spins[c + y + 1]
            }
        };
        let mut delta: i64 = 0;
        for y in 1..side - 1 {
            let (l, r) = (col(x0 - 1) + y, col(x1 + 1) + y);
            delta -= (self.spins[l] == self.spins[col(x0) + y]) as i64
                + (self.spins[r] == self.spins[col(x1) + y]) as i64;
            delta += (self.spins[l] == new_at(&self.spins, x0, y)) as i64
                + (self.spins[r] == new_at(&self.spins, x1, y)) as i64;
        }
        for x in x0..x1 {
            delta -= (self.spins[col(x) + drop] == self.spins[col(x + 1) + drop]) as i64;
            delta += (self.spins[col(x) + ring_fill] == self.spins[col(x + 1) + ring_fill]) as i64;
        }
        let accept = delta >= 0 || self.rng.gen::<f64>() < (self.beta * delta as f64).exp();
        if !accept {
            return;
        }
        for x in x0..=x1 {
            let c = col(x);
            if up {
                self.spins.copy_within(c + 1..c + side - 2, c + 2);
            } else {
                self.spins.copy_within(c + 2..c + side - 1, c + 1);
            }
            self.spins[c + fill] = self.spins[c + ring_fill];
        }
    }
}

/// Runs the Edwards-Sokal chain and yields `n_samples` spin configurations, one every
/// `max(thinning, 1)` steps after `burn_in` steps. Each step is one Swendsen-Wang update
/// followed by `2N + 1` column-block shift proposals.
#[allow(clippy::too_many_arguments)]
pub fn es_sample<'a>(
    lat: &'a PottsLattice,
    beta: f64,
    q: u8,
    bc: PottsBoundary,
    burn_in: usize,
    n_samples: usize,
    thinning: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Result<SpinConfiguration, PottsError>> + 'a, PottsError> {
    let shifts = 2 * lat.half_width() as usize + 1;
    let mut chain = EsChain::new(lat, beta, q, bc, stream_rng(seed, 0))?.with_block_shifts(shifts);
    for _ in 0..burn_in {
        chain.step()?;
    }
    Ok((0..n_samples).map(move |_| {
        for _ in 0..thinning.max(1) {
            chain.step()?;
        }
        Ok(chain.spins())
    }))
}

/// A Dobrushin interface: connected dual edges separating disagreeing spins, joining the
/// two boundary sign changes `left` and `right`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interface {
    pub edges: Vec<Bond>,
    pub left: DualSite,
    pub right: DualSite,
}

impl Interface {
    pub fn sites(&self) -> Vec<DualSite> {
        let mut v: Vec<DualSite> = self
            .edges
            .iter()
            .flat_map(|e| [DualSite::from_site(e.a), DualSite::from_site(e.b)])
            .collect();
        v.sort();
        v.dedup();
        v
    }

    /// The interface as a cluster in dual-site coordinates from `left` to `right`.
    pub fn as_cluster(&self) -> Result<Cluster, PottsError> {
        let v = self.sites().into_iter().map(DualSite::as_site).collect();
        Ok(Cluster::new(
            2,
            v,
            self.edges.clone(),
            self.left.as_site(),
            self.right.as_site(),
        )?)
    }
}

/// Extracts the interface of a configuration under Dobrushin conditions.
pub fn extract_interface(
    lat: &PottsLattice,
    sigma: &SpinConfiguration,
) -> Result<Interface, PottsError> {
    let g = lat.graph();
    let n = lat.half_width();
    let mut index: FxHashMap<Site, usize> = FxHashMap::default();
    let mut dual_edges = Vec::new();
    for &e in lat.active_bonds() {
        let (a, b) = g.ends(e as usize);
        if sigma.spins[a] != sigma.spins[b] {
            let d = dual_bond(&g.bonds()[e as usize]);
            for s in [d.a, d.b] {
                let k = index.len();
                index.entry(s).or_insert(k);
            }
            dual_edges.push(d);
        }
    }
    // sign changes between consecutive ring sites; the attachment is the dual endpoint
    // inside the dual box of the interior
    let inside = |s: Site| (-n..=n + 1).contains(&s.0[0]) && (-n..=n + 1).contains(&s.0[1]);
    let mut attach = Vec::new();
    for e in 0..g.num_bonds() {
        let (a, b) = g.ends(e);
        if lat.is_interior(a) || lat.is_interior(b) || sigma.spins[a] == sigma.spins[b] {
            continue;
        }
        let d = dual_bond(&g.bonds()[e]);
        attach.extend([d.a, d.b].into_iter().filter(|&s| inside(s)));
    }
    attach.sort();
    attach.dedup();
    if attach.len() != 2 {
        return Err(PottsError::SignChanges(attach.len()));
    }
    let mut uf = UnionFind::new(index.len());
    for d in &dual_edges {
        uf.union(index[&d.a], index[&d.b]);
    }
    let (l, r) = (attach[0], attach[1]);
    let (Some(&il), Some(&ir)) = (index.get(&l), index.get(&r)) else {
        return Err(PottsError::NoSpanningComponent);
    };
    if uf.find(il) != uf.find(ir) {
        return Err(PottsError::NoSpanningComponent);
    }
    let root = uf.find(il);
    let mut edges: Vec<Bond> = dual_edges
        .into_iter()
        .filter(|d| uf.find(index[&d.a]) == root)
        .collect();
    edges.sort();
    let (left, right) = if l.0[0] <= r.0[0] { (l, r) } else { (r, l) };
    Ok(Interface {
        edges,
        left: DualSite::from_site(left),
        right: DualSite::from_site(right),
    })
}

/// Heights of an interface on a grid of `m + 1` equally spaced abscissae `r = k/m` along
/// the segment between the pinning sites, after subtracting the chord and dividing by the
/// square root of the horizontal span.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceProfile {
    pub r: Vec<f64>,
    pub raw: Vec<f64>,
    pub phi: Vec<f64>,
    pub span: f64,
}

/// Profile through the cone-point polyline of the interface (cone opening `3 delta` around
/// the horizontal direction measured with `norm`).
pub fn interface_profile(
    iface: &Interface,
    m: usize,
    delta: f64,
    norm: &DirectionalNorm,
) -> Result<InterfaceProfile, PottsError> {
    let cluster = iface.as_cluster()?;
    let t = dual_vector(&[1.0, 0.0], norm, None)?;
    let cones = cluster_cone_points(&cluster, &t, delta, norm);
    let mut pts: Vec<[f64; 2]> = vec![iface.left.point()];
    for c in cones {
        let p = DualSite::from_site(c).point();
        if c != iface.left.as_site() && c != iface.right.as_site() {
            pts.push(p);
        }
    }
    pts.push(iface.right.point());
    if pts.windows(2).any(|w| w[1][0] <= w[0][0]) {
        return Err(PottsError::MultipleCrossings);
    }
    Ok(sample_profile(&pts, m))
}

/// Column-mean fallback profile: mean height of interface dual sites in each column,
/// linearly interpolated on the same grid.
pub fn column_profile(iface: &Interface, m: usize) -> InterfaceProfile {
    let mut cols: std::collections::BTreeMap<i64, (f64, usize)> = Default::default();
    for s in iface.sites() {
        let e = cols.entry(s.0).or_insert((0.0, 0));
        e.0 += s.point()[1];
        e.1 += 1;
    }
    let pts: Vec<[f64; 2]> = cols
        .iter()
        .map(|(&i, &(sum, k))| [i as f64 - 0.5, sum / k as f64])
        .collect();
    sample_profile(&pts, m)
}

fn sample_profile(pts: &[[f64; 2]], m: usize) -> InterfaceProfile {
    let x0 = pts[0][0];
    let x1 = pts[pts.len() - 1][0];
    let span = x1 - x0;
    let height = |x: f64| {
        let k = pts.partition_point(|p| p[0] <= x).clamp(1, pts.len() - 1);
        let (a, b) = (pts[k - 1], pts[k]);
        if b[0] == a[0] {
            return a[1];
        }
        a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
    };
    let r: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
    let raw: Vec<f64> = r.iter().map(|&r| height(x0 + r * span)).collect();
    let (h0, h1) = (raw[0], raw[m]);
    let phi = r
        .iter()
        .zip(&raw)
        .map(|(&r, &h)| (h - (1.0 - r) * h0 - r * h1) / span.sqrt())
        .collect();
    InterfaceProfile { r, raw, phi, span }
}

/// Writes `sample_id,r,phi` rows.
pub fn write_profiles_csv(
    out: &mut impl Write,
    profiles: &[InterfaceProfile],
) -> std::io::Result<()> {
    writeln!(out, "sample_id,r,phi")?;
    for (i, p) in profiles.iter().enumerate() {
        for (r, phi) in p.r.iter().zip(&p.phi) {
            writeln!(out, "{i},{r},{phi}")?;
        }
    }
    Ok(())
}
