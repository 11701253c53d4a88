//! Lattice geometry: sites, boxes, couplings, bonds and boundaries.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("dimension {0} unsupported (expected 1..={MAX_DIM})")]
    BadDimension(usize),
    #[error("coupling field is not symmetric at offset {0}")]
    Asymmetric(Site),
    #[error("coupling at offset {offset} is {value}, expected a finite value >= 0")]
    BadCoupling { offset: Site, value: f64 },
    #[error("nearest-neighbour coupling at {0} must be positive")]
    MissingNearestNeighbour(Site),
    #[error("coupling offset {offset} exceeds range {range}")]
    OutOfRange { offset: Site, range: f64 },
    #[error("empty box: lo {lo} exceeds hi {hi}")]
    EmptyBox { lo: Site, hi: Site },
    #[error("site {0} lies outside the box")]
    OutsideBox(Site),
}

/// A point of `Z^d` with `d <= MAX_DIM`; unused coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Site(pub [i64; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn new(coords: &[i64]) -> Site {
        assert!(coords.len() <= MAX_DIM, "too many coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    pub fn xy(x: i64, y: i64) -> Site {
        Site([x, y, 0])
    }

    /// Unit vector along axis `i`.
    pub fn unit(i: usize) -> Site {
        let mut c = [0; MAX_DIM];
        c[i] = 1;
        Site(c)
    }

    pub fn add(self, o: Site) -> Site {
        Site([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn sub(self, o: Site) -> Site {
        Site([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }

    pub fn neg(self) -> Site {
        Site([-self.0[0], -self.0[1], -self.0[2]])
    }

    pub fn scale(self, k: i64) -> Site {
        Site([k * self.0[0], k * self.0[1], k * self.0[2]])
    }

    pub fn sup_norm(self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn l1_norm(self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn norm2(self) -> f64 {
        (self.0.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt()
    }

    pub fn to_f64(self, dim: usize) -> Vec<f64> {
        self.0[..dim].iter().map(|&c| c as f64).collect()
    }

    pub fn coords(&self, dim: usize) -> &[i64] {
        &self.0[..dim]
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Finite-range, translation-invariant, symmetric couplings `J_x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingField {
    dim: usize,
    range: f64,
    offsets: Vec<(Site, f64)>,
}

impl CouplingField {
    /// Builds a coupling field from `(offset, J)` pairs. Zero couplings are dropped.
    pub fn new(dim: usize, range: f64, couplings: &[(Site, f64)]) -> Result<Self, LatticeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LatticeError::BadDimension(dim));
        }
        let mut offsets: Vec<(Site, f64)> = Vec::new();
        for &(offset, value) in couplings {
            if !value.is_finite() || value < 0.0 {
                return Err(LatticeError::BadCoupling { offset, value });
            }
            if offset.0[dim..].iter().any(|&c| c != 0) || offset == Site::ORIGIN {
                return Err(LatticeError::BadCoupling { offset, value });
            }
            if offset.norm2() > range + 1e-12 {
                return Err(LatticeError::OutOfRange { offset, range });
            }
            if value > 0.0 {
                offsets.push((offset, value));
            }
        }
        offsets.sort_by(|a, b| a.0.cmp(&b.0));
        offsets.dedup_by(|a, b| a.0 == b.0);
        for &(offset, value) in &offsets {
            let mirror = offsets.iter().find(|(o, _)| *o == offset.neg());
            match mirror {
                Some(&(_, v)) if (v - value).abs() <= 1e-12 * value.max(1.0) => {}
                _ => return Err(LatticeError::Asymmetric(offset)),
            }
        }
        for i in 0..dim {
            let e = Site::unit(i);
            if !offsets.iter().any(|(o, _)| *o == e) {
                return Err(LatticeError::MissingNearestNeighbour(e));
            }
        }
        Ok(CouplingField {
            dim,
            range,
            offsets,
        })
    }

    /// Nearest-neighbour couplings with `J = 1`.
    pub fn nearest_neighbour(dim: usize) -> Result<Self, LatticeError> {
        let mut c = Vec::new();
        for i in 0..dim.min(MAX_DIM) {
            c.push((Site::unit(i), 1.0));
            c.push((Site::unit(i).neg(), 1.0));
        }
        Self::new(dim, 1.0, &c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// All offsets with positive coupling, sorted.
    pub fn offsets(&self) -> &[(Site, f64)] {
        &self.offsets
    }

    /// Offsets that are lexicographically positive; each unordered bond is generated once.
    pub fn forward_offsets(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.offsets
            .iter()
            .copied()
            .filter(|(o, _)| *o > Site::ORIGIN)
    }

    pub fn coupling(&self, offset: Site) -> f64 {
        self.offsets
            .iter()
            .find(|(o, _)| *o == offset)
            .map_or(0.0, |&(_, v)| v)
    }

    pub fn is_nearest_neighbour(&self) -> bool {
        self.offsets.len() == 2 * self.dim && self.offsets.iter().all(|(o, _)| o.l1_norm() == 1)
    }
}

/// An axis-aligned box `lo..=hi` of `Z^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeBox {
    dim: usize,
    lo: Site,
    hi: Site,
}

impl LatticeBox {
    /// The cube `{-n..=n}^d`.
    pub fn centered(dim: usize, n: i64) -> Result<Self, LatticeError> {
        let mut lo = Site::ORIGIN;
        let mut hi = Site::ORIGIN;
        for i in 0..dim.min(MAX_DIM) {
            lo.0[i] = -n;
            hi.0[i] = n;
        }
        Self::new(dim, lo, hi)
    }

    pub fn new(dim: usize, lo: Site, hi: Site) -> Result<Self, LatticeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LatticeError::BadDimension(dim));
        }
        if (0..dim).any(|i| lo.0[i] > hi.0[i])
            || (dim..MAX_DIM).any(|i| lo.0[i] != 0 || hi.0[i] != 0)
        {
            return Err(LatticeError::EmptyBox { lo, hi });
        }
        Ok(LatticeBox { dim, lo, hi })
    }

    /// Box with the given side lengths (in sites), lower corner at the origin.
    pub fn rect(sides: &[i64]) -> Result<Self, LatticeError> {
        let hi: Vec<i64> = sides.iter().map(|s| s - 1).collect();
        Self::new(sides.len(), Site::ORIGIN, Site::new(&hi))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> Site {
        self.lo
    }

    pub fn hi(&self) -> Site {
        self.hi
    }

    /// Half-width `n` when the box is the centred cube `{-n..=n}^d`.
    pub fn half_width(&self) -> Option<i64> {
        let n = self.hi.0[0];
        let centred = (0..self.dim).all(|i| self.lo.0[i] == -n && self.hi.0[i] == n);
        centred.then_some(n)
    }

    pub fn side(&self, i: usize) -> i64 {
        self.hi.0[i] - self.lo.0[i] + 1
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|i| self.side(i) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: Site) -> bool {
        (0..self.dim).all(|i| s.0[i] >= self.lo.0[i] && s.0[i] <= self.hi.0[i])
            && (self.dim..MAX_DIM).all(|i| s.0[i] == 0)
    }

    /// Row-major index with the last coordinate varying fastest, so indices follow
    /// lexicographic order of sites.
    pub fn index_of(&self, s: Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let mut idx = 0usize;
        for i in 0..self.dim {
            idx = idx * self.side(i) as usize + (s.0[i] - self.lo.0[i]) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut c = [0i64; MAX_DIM];
        for i in (0..self.dim).rev() {
            let side = self.side(i) as usize;
            c[i] = self.lo.0[i] + (idx % side) as i64;
            idx /= side;
        }
        Site(c)
    }

    /// Sites in lexicographic order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site_at(i))
    }

    /// Grows the box by `k` in every direction.
    pub fn expand(&self, k: i64) -> LatticeBox {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for i in 0..self.dim {
            lo.0[i] -= k;
            hi.0[i] += k;
        }
        LatticeBox {
            dim: self.dim,
            lo,
            hi,
        }
    }
}

/// An unordered pair of sites, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bond {
    pub a: Site,
    pub b: Site,
}

impl Bond {
    pub fn new(x: Site, y: Site) -> Bond {
        if x <= y {
            Bond { a: x, b: y }
        } else {
            Bond { a: y, b: x }
        }
    }
}

/// All bonds with both endpoints in the box and positive coupling, in lexicographic order.
pub fn edge_set(bx: &LatticeBox, couplings: &CouplingField) -> Vec<Bond> {
    let mut bonds = Vec::new();
    for s in bx.sites() {
        for (o, _) in couplings.forward_offsets() {
            let t = s.add(o);
            if bx.contains(t) {
                bonds.push(Bond::new(s, t));
            }
        }
    }
    bonds.sort();
    bonds
}

/// Sites outside `set` within Euclidean distance `range` of some site of `set`.
pub fn outer_boundary(set: &BTreeSet<Site>, range: f64, dim: usize) -> BTreeSet<Site> {
    let offsets = ball_offsets(range, dim);
    let mut out = BTreeSet::new();
    for &s in set {
        for &o in &offsets {
            let t = s.add(o);
            if !set.contains(&t) {
                out.insert(t);
            }
        }
    }
    out
}

/// Non-zero lattice offsets of Euclidean length at most `range`.
pub fn ball_offsets(range: f64, dim: usize) -> Vec<Site> {
    let r = range.floor() as i64;
    let mut out = Vec::new();
    let span = |i: usize| if i < dim { -r..=r } else { 0..=0 };
    for x in span(0) {
        for y in span(1) {
            for z in span(2) {
                let s = Site([x, y, z]);
                if s != Site::ORIGIN && s.norm2() <= range + 1e-12 {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Precomputed bond structure of a box: bond list, endpoint indices, adjacency and the
/// set of vertices coupled to the exterior (used for wired boundary conditions).
#[derive(Debug, Clone)]
pub struct BondGraph {
    bx: LatticeBox,
    bonds: Vec<Bond>,
    ends: Vec<(u32, u32)>,
    couplings: Vec<f64>,
    adjacency: Vec<Vec<(u32, u32)>>,
    exterior: Vec<bool>,
}

impl BondGraph {
    pub fn new(bx: &LatticeBox, field: &CouplingField) -> Result<Self, LatticeError> {
        if bx.dim() != field.dim() {
            return Err(LatticeError::BadDimension(field.dim()));
        }
        let bonds = edge_set(bx, field);
        let n = bx.len();
        let mut ends = Vec::with_capacity(bonds.len());
        let mut couplings = Vec::with_capacity(bonds.len());
        let mut adjacency = vec![Vec::new(); n];
        for (k, b) in bonds.iter().enumerate() {
            let i = bx.index_of(b.a).expect("bond endpoint in box") as u32;
            let j = bx.index_of(b.b).expect("bond endpoint in box") as u32;
            ends.push((i, j));
            couplings.push(field.coupling(b.b.sub(b.a)));
            adjacency[i as usize].push((j, k as u32));
            adjacency[j as usize].push((i, k as u32));
        }
        let exterior = bx
            .sites()
            .map(|s| field.offsets().iter().any(|(o, _)| !bx.contains(s.add(*o))))
            .collect();
        Ok(BondGraph {
            bx: *bx,
            bonds,
            ends,
            couplings,
            adjacency,
            exterior,
        })
    }

    /// Nearest-neighbour torus `(Z / side Z)^dim`; no vertex touches an exterior.
    pub fn torus(dim: usize, side: i64) -> Result<Self, LatticeError> {
        if side < 3 {
            return Err(LatticeError::EmptyBox {
                lo: Site::ORIGIN,
                hi: Site::ORIGIN,
            });
        }
        let sides = vec![side; dim];
        let bx = LatticeBox::rect(&sides)?;
        let wrap = |s: Site| {
            let mut c = s.0;
            for x in c.iter_mut().take(dim) {
                *x = x.rem_euclid(side);
            }
            Site(c)
        };
        let mut bonds: Vec<Bond> = bx
            .sites()
            .flat_map(|s| (0..dim).map(move |i| Bond::new(s, wrap(s.add(Site::unit(i))))))
            .collect();
        bonds.sort();
        let n = bx.len();
        let mut ends = Vec::with_capacity(bonds.len());
        let mut adjacency = vec![Vec::new(); n];
        for (k, b) in bonds.iter().enumerate() {
            let i = bx.index_of(b.a).expect("in box") as u32;
            let j = bx.index_of(b.b).expect("in box") as u32;
            ends.push((i, j));
            adjacency[i as usize].push((j, k as u32));
            adjacency[j as usize].push((i, k as u32));
        }
        let couplings = vec![1.0; bonds.len()];
        Ok(BondGraph {
            bx,
            bonds,
            ends,
            couplings,
            adjacency,
            exterior: vec![false; n],
        })
    }

    pub fn nearest_neighbour(bx: &LatticeBox) -> Self {
        let field = CouplingField::nearest_neighbour(bx.dim()).expect("valid dimension");
        Self::new(bx, &field).expect("matching dimension")
    }

    pub fn lattice_box(&self) -> &LatticeBox {
        &self.bx
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond_index(&self, bond: &Bond) -> Option<usize> {
        self.bonds.binary_search(bond).ok()
    }

    pub fn ends(&self, bond: usize) -> (usize, usize) {
        let (i, j) = self.ends[bond];
        (i as usize, j as usize)
    }

    pub fn coupling(&self, bond: usize) -> f64 {
        self.couplings[bond]
    }

    /// `(neighbour, bond)` pairs of a vertex.
    pub fn neighbours(&self, v: usize) -> &[(u32, u32)] {
        &self.adjacency[v]
    }

    /// Whether the vertex has a coupling to a site outside the box.
    pub fn touches_exterior(&self, v: usize) -> bool {
        self.exterior[v]
    }

    pub fn site(&self, v: usize) -> Site {
        self.bx.site_at(v)
    }

    pub fn vertex(&self, s: Site) -> Option<usize> {
        self.bx.index_of(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_box_counts() {
        let b = LatticeBox::centered(2, 1).unwrap();
        assert_eq!(b.len(), 9);
        let g = BondGraph::nearest_neighbour(&b);
        assert_eq!(g.num_bonds(), 12);
        assert_eq!((0..9).filter(|&v| g.touches_exterior(v)).count(), 8);
    }

    #[test]
    fn index_roundtrip_is_lexicographic() {
        let b = LatticeBox::new(2, Site::xy(-2, -1), Site::xy(1, 3)).unwrap();
        let sites: Vec<Site> = b.sites().collect();
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(b.index_of(*s), Some(i));
        }
    }

    #[test]
    fn asymmetric_field_is_rejected() {
        let c = [
            (Site::unit(0), 1.0),
            (Site::unit(0).neg(), 1.0),
            (Site::unit(1), 1.0),
        ];
        assert!(matches!(
            CouplingField::new(2, 1.0, &c),
            Err(LatticeError::Asymmetric(_))
        ));
    }

    #[test]
    fn outer_boundary_of_point() {
        let set: BTreeSet<Site> = [Site::xy(0, 0)].into_iter().collect();
        assert_eq!(outer_boundary(&set, 1.0, 2).len(), 4);
        assert_eq!(outer_boundary(&set, 1.5, 2).len(), 8);
    }
}
