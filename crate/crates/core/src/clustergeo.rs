//! Geometry of a single cluster: coarse-grained skeletons, trunks and branches, cone
//! points at three scales, the irreducible decomposition and the effective random walk.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rustc_hash::{FxHashMap, FxHashSet};
use serde_json::{json, Value};
use thiserror::Error;

use crate::fkmodel::{cluster_labeling, BondConfiguration};
use crate::geometry::{in_forward_cone, DirectionalNorm, GeometryError};
use crate::lattice::{ball_offsets, Bond, BondGraph, Site};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterGeoError {
    #[error("site {0} is not a vertex of the cluster")]
    NotInCluster(Site),
    #[error("cluster is empty or disconnected")]
    Disconnected,
    #[error("dimension mismatch: cluster has d = {cluster}, norm has d = {norm}")]
    DimensionMismatch { cluster: usize, norm: usize },
    #[error("skeleton does not cover cluster vertex {0}")]
    CoveringViolation(Site),
    #[error("target {0} is not within 2K of any skeleton point")]
    TargetNotCovered(Site),
    #[error("decomposition is not a partition: {0}")]
    PartitionViolation(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A finite connected set of sites with its open edges, together with the two marked
/// points `origin` and `target` it connects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub dim: usize,
    pub vertices: Vec<Site>,
    pub edges: Vec<Bond>,
    pub origin: Site,
    pub target: Site,
}

impl Cluster {
    /// Validates connectivity and the presence of `origin` and `target`.
    pub fn new(
        dim: usize,
        vertices: Vec<Site>,
        edges: Vec<Bond>,
        origin: Site,
        target: Site,
    ) -> Result<Self, ClusterGeoError> {
        let mut vertices = vertices;
        vertices.sort();
        vertices.dedup();
        let mut edges = edges;
        edges.sort();
        edges.dedup();
        let c = Cluster {
            dim,
            vertices,
            edges,
            origin,
            target,
        };
        if c.vertices.is_empty() {
            return Err(ClusterGeoError::Disconnected);
        }
        for s in [origin, target] {
            if c.vertices.binary_search(&s).is_err() {
                return Err(ClusterGeoError::NotInCluster(s));
            }
        }
        for e in &c.edges {
            for s in [e.a, e.b] {
                if c.vertices.binary_search(&s).is_err() {
                    return Err(ClusterGeoError::NotInCluster(s));
                }
            }
        }
        if !c.is_connected() {
            return Err(ClusterGeoError::Disconnected);
        }
        Ok(c)
    }

    /// The cluster of `origin` in a box configuration; it must contain `target`.
    pub fn from_config(
        graph: &BondGraph,
        config: &BondConfiguration,
        origin: Site,
        target: Site,
    ) -> Result<Self, ClusterGeoError> {
        let lab = cluster_labeling(graph, config);
        let o = graph
            .vertex(origin)
            .ok_or(ClusterGeoError::NotInCluster(origin))?;
        let t = graph
            .vertex(target)
            .ok_or(ClusterGeoError::NotInCluster(target))?;
        if !lab.same(o, t) {
            return Err(ClusterGeoError::NotInCluster(target));
        }
        // follow open bonds only: under wired conditions the label may also join
        // vertices through the exterior
        let mut seen = vec![false; graph.num_vertices()];
        let mut queue = VecDeque::from([o]);
        seen[o] = true;
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        while let Some(v) = queue.pop_front() {
            vertices.push(graph.site(v));
            for &(w, e) in graph.neighbours(v) {
                if !config.open[e as usize] {
                    continue;
                }
                if v < w as usize {
                    edges.push(graph.bonds()[e as usize]);
                }
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    queue.push_back(w as usize);
                }
            }
        }
        let dim = graph.lattice_box().dim();
        Cluster::new(dim, vertices, edges, origin, target)
            .map_err(|_| ClusterGeoError::NotInCluster(target))
    }

    pub fn contains(&self, s: Site) -> bool {
        self.vertices.binary_search(&s).is_ok()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Neighbour lists along open edges, keyed by site.
    pub fn adjacency(&self) -> FxHashMap<Site, Vec<Site>> {
        let mut adj: FxHashMap<Site, Vec<Site>> =
            self.vertices.iter().map(|&v| (v, Vec::new())).collect();
        for e in &self.edges {
            adj.get_mut(&e.a).expect("vertex").push(e.b);
            adj.get_mut(&e.b).expect("vertex").push(e.a);
        }
        adj
    }

    fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = FxHashSet::default();
        let mut stack = vec![self.vertices[0]];
        seen.insert(self.vertices[0]);
        while let Some(v) = stack.pop() {
            for &w in &adj[&v] {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == self.vertices.len()
    }

    fn point(&self, s: Site) -> Vec<f64> {
        s.to_f64(self.dim)
    }
}

/// Scale parameters of the skeleton construction: balls of radius `k`, blown up by
/// `r log k`, and the interaction range used for boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonParams {
    pub k: f64,
    pub r: f64,
    pub range: f64,
}

impl Default for SkeletonParams {
    fn default() -> Self {
        SkeletonParams {
            k: 8.0,
            r: 2.0,
            range: 1.0,
        }
    }
}

impl SkeletonParams {
    fn inflated(&self, k: f64) -> f64 {
        k + self.r * k.ln()
    }
}

/// Skeleton points `x_0 = origin, x_1, ...` with the tree built on them.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub points: Vec<Site>,
    pub parent: Vec<Option<usize>>,
    pub params: SkeletonParams,
}

fn within(norm: &DirectionalNorm, dim: usize, z: Site, y: Site, radius: f64) -> bool {
    norm.eval(&z.sub(y).to_f64(dim)) <= radius * (1.0 + 1e-12)
}

/// Builds the skeleton of a cluster by repeatedly adding the lexicographically smallest
/// site on the boundary of the covered region that escapes a `K`-ball without
/// re-entering it, and checks that the `2K` balls cover the cluster.
pub fn build_skeleton(
    cluster: &Cluster,
    norm: &DirectionalNorm,
    params: SkeletonParams,
) -> Result<Skeleton, ClusterGeoError> {
    let d = cluster.dim;
    if norm.dim() != d {
        return Err(ClusterGeoError::DimensionMismatch {
            cluster: d,
            norm: norm.dim(),
        });
    }
    if !(params.k > 1.0 && params.r >= 0.0 && params.range >= 1.0) {
        return Err(ClusterGeoError::BadParameter(format!("{params:?}")));
    }
    let adj = cluster.adjacency();
    let near = ball_offsets(params.range, d);
    let big = params.inflated(params.k);
    let mut points = vec![cluster.origin];
    let mut parent = vec![None];
    let covered = |z: Site, pts: &[Site]| pts.iter().any(|&x| within(norm, d, z, x, big));
    loop {
        let mut next = None;
        for &y in &cluster.vertices {
            if covered(y, &points) || !near.iter().any(|&o| covered(y.add(o), &points)) {
                continue;
            }
            if escapes(y, &adj, norm, d, params.k, &near, &|z| covered(z, &points)) {
                next = Some(y);
                break;
            }
        }
        let Some(y) = next else { break };
        // attach to the first earlier point whose inflated ball has y on its boundary
        let j = points
            .iter()
            .position(|&x| {
                !within(norm, d, y, x, big)
                    && near.iter().any(|&o| within(norm, d, y.add(o), x, big))
            })
            .expect("boundary point is adjacent to some inflated ball");
        points.push(y);
        parent.push(Some(j));
    }
    let cover = params.inflated(2.0 * params.k);
    for &v in &cluster.vertices {
        if !points.iter().any(|&x| within(norm, d, v, x, cover)) {
            return Err(ClusterGeoError::CoveringViolation(v));
        }
    }
    Ok(Skeleton {
        points,
        parent,
        params,
    })
}

/// Whether an open path from `y` through uncovered cluster sites reaches the outer
/// boundary of the `k`-ball around `y`.
fn escapes(
    y: Site,
    adj: &FxHashMap<Site, Vec<Site>>,
    norm: &DirectionalNorm,
    d: usize,
    k: f64,
    near: &[Site],
    covered: &dyn Fn(Site) -> bool,
) -> bool {
    let on_boundary = |z: Site| {
        !within(norm, d, z, y, k) && near.iter().any(|&o| within(norm, d, z.add(o), y, k))
    };
    let mut seen = FxHashSet::default();
    seen.insert(y);
    let mut stack = vec![y];
    while let Some(v) = stack.pop() {
        for &w in &adj[&v] {
            if seen.contains(&w) || covered(w) {
                continue;
            }
            if on_boundary(w) {
                return true;
            }
            seen.insert(w);
            // beyond the k-ball the path has already crossed its boundary
            if within(norm, d, w, y, k) {
                stack.push(w);
            }
        }
    }
    false
}

/// Trunk: the tree path from `x_0` to the first skeleton point whose `2K` ball contains
/// the target. Branches: the other tree vertices grouped by the trunk vertex they hang from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrunkSplit {
    /// Skeleton indices along the trunk, starting at 0.
    pub trunk: Vec<usize>,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Position in `trunk` of the vertex the branch hangs from.
    pub root: usize,
    pub nodes: Vec<usize>,
}

pub fn split_trunk_branches(
    skeleton: &Skeleton,
    target: Site,
    norm: &DirectionalNorm,
) -> Result<TrunkSplit, ClusterGeoError> {
    let d = norm.dim();
    let cover = skeleton.params.inflated(2.0 * skeleton.params.k);
    let last = skeleton
        .points
        .iter()
        .position(|&x| within(norm, d, target, x, cover))
        .ok_or(ClusterGeoError::TargetNotCovered(target))?;
    let mut trunk = vec![last];
    while let Some(p) = skeleton.parent[*trunk.last().unwrap()] {
        trunk.push(p);
    }
    trunk.reverse();
    let pos: BTreeMap<usize, usize> = trunk.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..skeleton.points.len() {
        if pos.contains_key(&v) {
            continue;
        }
        let mut u = v;
        while let Some(p) = skeleton.parent[u] {
            if let Some(&i) = pos.get(&p) {
                groups.entry(i).or_default().push(v);
                break;
            }
            u = p;
        }
    }
    let branches = groups
        .into_iter()
        .map(|(root, nodes)| Branch { root, nodes })
        .collect();
    Ok(TrunkSplit { trunk, branches })
}

/// Cone points and marked points of a sequence of points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrunkCones {
    pub cone_points: Vec<usize>,
    pub marked: Vec<usize>,
}

/// Cone points of a sequence (every later point in the forward cone, every earlier one in
/// the backward cone) and the marked indices produced by the forward and backward scans.
pub fn trunk_cone_points(
    points: &[Vec<f64>],
    t: &[f64],
    delta: f64,
    norm: &DirectionalNorm,
) -> TrunkCones {
    let n = points.len();
    let diff = |a: usize, b: usize| -> Vec<f64> {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x - y)
            .collect()
    };
    let fwd = |i: usize, j: usize| in_forward_cone(&diff(j, i), t, delta, norm);
    let forward: Vec<bool> = (0..n).map(|i| (i + 1..n).all(|j| fwd(i, j))).collect();
    let backward: Vec<bool> = (0..n).map(|i| (0..i).all(|j| fwd(j, i))).collect();
    let cone_points = (0..n).filter(|&i| forward[i] && backward[i]).collect();
    let mut marked = BTreeSet::new();
    // forward scan
    let mut from = 0;
    while let Some(l) = (from..n).find(|&j| !forward[j]) {
        let r = (l + 1..n)
            .find(|&j| !fwd(l, j))
            .expect("a non-forward point has a witness");
        marked.extend(l..r);
        from = r;
    }
    // backward scan, mirrored
    let mut upto = n;
    while let Some(l) = (0..upto).rev().find(|&j| !backward[j]) {
        let r = (0..l)
            .rev()
            .find(|&j| !fwd(j, l))
            .expect("a non-backward point has a witness");
        marked.extend(r + 1..=l);
        upto = r + 1;
        if r == 0 {
            break;
        }
    }
    TrunkCones {
        cone_points,
        marked: marked.into_iter().collect(),
    }
}

/// Trunk cone points at opening `2 delta` whose double cone also contains every branch
/// vertex; returned as positions along the trunk.
pub fn tree_cone_points(
    skeleton: &Skeleton,
    split: &TrunkSplit,
    t: &[f64],
    delta: f64,
    norm: &DirectionalNorm,
) -> Vec<usize> {
    let d = norm.dim();
    let pts: Vec<Vec<f64>> = split
        .trunk
        .iter()
        .map(|&i| skeleton.points[i].to_f64(d))
        .collect();
    let cones = trunk_cone_points(&pts, t, 2.0 * delta, norm);
    let branch_sites: Vec<Site> = split
        .branches
        .iter()
        .flat_map(|b| b.nodes.iter().map(|&i| skeleton.points[i]))
        .collect();
    cones
        .cone_points
        .into_iter()
        .filter(|&k| {
            let c = skeleton.points[split.trunk[k]];
            branch_sites.iter().all(|&z| {
                let v = z.sub(c).to_f64(d);
                let m: Vec<f64> = v.iter().map(|x| -x).collect();
                in_forward_cone(&v, t, 2.0 * delta, norm)
                    || in_forward_cone(&m, t, 2.0 * delta, norm)
            })
        })
        .collect()
}

fn level(t: &[f64], s: Site, d: usize) -> f64 {
    (0..d).map(|i| t[i] * s.0[i] as f64).sum()
}

/// Cluster cone points at opening `3 delta` by direct pairwise checks, ordered by `(t, y)`.
pub fn cluster_cone_points_brute(
    cluster: &Cluster,
    t: &[f64],
    delta: f64,
    norm: &DirectionalNorm,
) -> Vec<Site> {
    cone_points_of(&cluster.vertices, cluster.dim, t, 3.0 * delta, norm)
}

fn cone_points_of(
    vertices: &[Site],
    d: usize,
    t: &[f64],
    opening: f64,
    norm: &DirectionalNorm,
) -> Vec<Site> {
    let mut out: Vec<Site> = vertices
        .iter()
        .copied()
        .filter(|&y| is_cone_point(vertices, d, y, t, opening, norm))
        .collect();
    out.sort_by(|a, b| level(t, *a, d).total_cmp(&level(t, *b, d)).then(a.cmp(b)));
    out
}

fn is_cone_point(
    vertices: &[Site],
    d: usize,
    y: Site,
    t: &[f64],
    opening: f64,
    norm: &DirectionalNorm,
) -> bool {
    vertices.iter().all(|&z| {
        if z == y {
            return true;
        }
        let v = z.sub(y).to_f64(d);
        let m: Vec<f64> = v.iter().map(|x| -x).collect();
        in_forward_cone(&v, t, opening, norm) || in_forward_cone(&m, t, opening, norm)
    })
}

/// Cluster cone points at opening `3 delta`, ordered by `(t, y)`. In the plane a sweep
/// with prefix and suffix extrema over a slightly widened cone filters candidates, which
/// are then confirmed exactly; other dimensions use the pairwise check.
pub fn cluster_cone_points(
    cluster: &Cluster,
    t: &[f64],
    delta: f64,
    norm: &DirectionalNorm,
) -> Vec<Site> {
    let d = cluster.dim;
    let opening = 3.0 * delta;
    if d != 2 || !(opening < 1.0) || cluster.vertices.len() < 16 {
        return cluster_cone_points_brute(cluster, t, delta, norm);
    }
    let Some((r1, r2)) = cone_rays(t, opening, norm) else {
        return cluster_cone_points_brute(cluster, t, delta, norm);
    };
    let cr = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    let mut order: Vec<(f64, Site)> = cluster
        .vertices
        .iter()
        .map(|&s| (level(t, s, 2), s))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = order.len();
    let p = |i: usize| [order[i].1 .0[0] as f64, order[i].1 .0[1] as f64];
    // a = cross(r1, z), b = cross(z, r2); z - y in the widened cone iff both increase
    let a: Vec<f64> = (0..n).map(|i| cr(r1, p(i))).collect();
    let b: Vec<f64> = (0..n).map(|i| cr(p(i), r2)).collect();
    let mut suf_a = vec![f64::INFINITY; n + 1];
    let mut suf_b = vec![f64::INFINITY; n + 1];
    for i in (0..n).rev() {
        suf_a[i] = suf_a[i + 1].min(a[i]);
        suf_b[i] = suf_b[i + 1].min(b[i]);
    }
    let tol = 1e-9;
    let mut out = Vec::new();
    let (mut pre_a, mut pre_b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let tied =
            (i > 0 && order[i - 1].0 == order[i].0) || (i + 1 < n && order[i + 1].0 == order[i].0);
        let ok = !tied
            && suf_a[i + 1] > a[i] - tol
            && suf_b[i + 1] > b[i] - tol
            && pre_a < a[i] + tol
            && pre_b < b[i] + tol;
        if ok && is_cone_point(&cluster.vertices, 2, order[i].1, t, opening, norm) {
            out.push(order[i].1);
        }
        pre_a = pre_a.max(a[i]);
        pre_b = pre_b.max(b[i]);
    }
    out
}

/// Boundary rays of the cone `{y : xi(y) - (t, y) < opening * xi(y)}`, widened slightly.
fn cone_rays(t: &[f64], opening: f64, norm: &DirectionalNorm) -> Option<([f64; 2], [f64; 2])> {
    let g = |th: f64| {
        let u = [th.cos(), th.sin()];
        t[0] * u[0] + t[1] * u[1] - (1.0 - opening) * norm.eval(&u)
    };
    let res = 4096;
    let tau = std::f64::consts::TAU;
    let centre = (0..res)
        .map(|k| tau * k as f64 / res as f64)
        .max_by(|a, b| g(*a).total_cmp(&g(*b)))?;
    if g(centre) <= 0.0 {
        return None;
    }
    let edge = |dir: f64| {
        let (mut inside, mut outside) = (centre, centre + dir * std::f64::consts::PI);
        if g(outside) > 0.0 {
            return None;
        }
        for _ in 0..100 {
            let mid = 0.5 * (inside + outside);
            if g(mid) > 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Some(outside + dir * 1e-7)
    };
    let lo = edge(-1.0)?;
    let hi = edge(1.0)?;
    Some(([lo.cos(), lo.sin()], [hi.cos(), hi.sin()]))
}

/// A piece of the decomposition with its markers: `start` for the first cone point it
/// contains, `end` for the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub vertices: Vec<Site>,
    pub edges: Vec<Bond>,
    pub start: Option<Site>,
    pub end: Option<Site>,
}

impl Piece {
    /// Displacement `end - start` of an irreducible piece.
    pub fn displacement(&self) -> Option<Site> {
        Some(self.end?.sub(self.start?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrreducibleDecomposition {
    pub cone_points: Vec<Site>,
    pub backward: Piece,
    pub pieces: Vec<Piece>,
    pub forward: Piece,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decomposition {
    Pieces(IrreducibleDecomposition),
    Undecomposable { cone_points: usize },
}

/// Splits a cluster at its cone points (opening `3 delta`) into a backward piece, the
/// irreducible pieces between consecutive cone points and a forward piece, verifying the
/// partition, marker compatibility and cone confinement.
pub fn decompose(
    cluster: &Cluster,
    t: &[f64],
    delta: f64,
    norm: &DirectionalNorm,
) -> Result<Decomposition, ClusterGeoError> {
    let d = cluster.dim;
    if norm.dim() != d {
        return Err(ClusterGeoError::DimensionMismatch {
            cluster: d,
            norm: norm.dim(),
        });
    }
    let cones = cluster_cone_points(cluster, t, delta, norm);
    let m = cones.len();
    if m < 2 {
        return Ok(Decomposition::Undecomposable { cone_points: m });
    }
    let lv: Vec<f64> = cones.iter().map(|&c| level(t, c, d)).collect();
    let cone_set: FxHashMap<Site, usize> = cones.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    // slot of a vertex: 0 = backward, i = between c_i and c_{i+1}, m = forward
    let slot = |s: Site| -> usize {
        let l = level(t, s, d);
        lv.partition_point(|&x| x < l)
    };
    let mut verts: Vec<Vec<Site>> = vec![Vec::new(); m + 1];
    for &v in &cluster.vertices {
        if let Some(&i) = cone_set.get(&v) {
            verts[i].push(v);
            verts[i + 1].push(v);
        } else {
            verts[slot(v)].push(v);
        }
    }
    let mut edges: Vec<Vec<Bond>> = vec![Vec::new(); m + 1];
    for e in &cluster.edges {
        let sa = cone_set
            .get(&e.a)
            .map(|&i| (i, i + 1))
            .unwrap_or((slot(e.a), slot(e.a)));
        let sb = cone_set
            .get(&e.b)
            .map(|&i| (i, i + 1))
            .unwrap_or((slot(e.b), slot(e.b)));
        let common = [sa.0, sa.1].into_iter().find(|s| *s == sb.0 || *s == sb.1);
        match common {
            Some(s) => edges[s].push(*e),
            None => {
                return Err(ClusterGeoError::PartitionViolation(format!(
                    "edge {:?}-{:?} crosses a cone point",
                    e.a, e.b
                )))
            }
        }
    }
    let mk = |i: usize| Piece {
        vertices: verts[i].clone(),
        edges: edges[i].clone(),
        start: (i > 0).then(|| cones[i - 1]),
        end: (i < m).then(|| cones[i]),
    };
    let dec = IrreducibleDecomposition {
        cone_points: cones.clone(),
        backward: mk(0),
        pieces: (1..m).map(mk).collect(),
        forward: mk(m),
    };
    verify(cluster, &dec, t, delta, norm)?;
    Ok(Decomposition::Pieces(dec))
}

fn verify(
    cluster: &Cluster,
    dec: &IrreducibleDecomposition,
    t: &[f64],
    delta: f64,
    norm: &DirectionalNorm,
) -> Result<(), ClusterGeoError> {
    let d = cluster.dim;
    let opening = 3.0 * delta;
    let viol = |s: String| Err(ClusterGeoError::PartitionViolation(s));
    let all: Vec<&Piece> = std::iter::once(&dec.backward)
        .chain(&dec.pieces)
        .chain(std::iter::once(&dec.forward))
        .collect();
    for w in all.windows(2) {
        if w[0].end != w[1].start {
            return viol("incompatible markers".into());
        }
    }
    let cone = |v: Site, base: Site, forward: bool| {
        let mut x = v.sub(base).to_f64(d);
        if !forward {
            x.iter_mut().for_each(|c| *c = -*c);
        }
        in_forward_cone(&x, t, opening, norm)
    };
    for p in &all {
        for &v in &p.vertices {
            if Some(v) == p.start || Some(v) == p.end {
                continue;
            }
            if p.start.is_some_and(|s| !cone(v, s, true))
                || p.end.is_some_and(|e| !cone(v, e, false))
            {
                return viol(format!("vertex {v:?} escapes its cones"));
            }
        }
        let own = cone_points_of(&p.vertices, d, t, opening, norm);
        let markers: Vec<Site> = p.start.into_iter().chain(p.end).collect();
        if own != markers {
            return viol(format!(
                "piece has cone points {own:?}, markers {markers:?}"
            ));
        }
    }
    let back = reassemble(dec);
    if back.0 != cluster.vertices || back.1 != cluster.edges {
        return viol("pieces do not reassemble the cluster".into());
    }
    Ok(())
}

/// Union of the vertex and edge sets of all pieces, sorted.
pub fn reassemble(dec: &IrreducibleDecomposition) -> (Vec<Site>, Vec<Bond>) {
    let mut v = BTreeSet::new();
    let mut e = BTreeSet::new();
    for p in std::iter::once(&dec.backward)
        .chain(&dec.pieces)
        .chain(std::iter::once(&dec.forward))
    {
        v.extend(p.vertices.iter().copied());
        e.extend(p.edges.iter().copied());
    }
    (v.into_iter().collect(), e.into_iter().collect())
}

/// Steps `V_i = c_{i+1} - c_i` between consecutive cone points, starting at `c_1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveWalk {
    pub start: Site,
    pub steps: Vec<Site>,
}

impl EffectiveWalk {
    pub fn from_decomposition(dec: &IrreducibleDecomposition) -> Self {
        EffectiveWalk {
            start: dec.cone_points[0],
            steps: dec.pieces.iter().filter_map(Piece::displacement).collect(),
        }
    }

    pub fn end(&self) -> Site {
        self.steps.iter().fold(self.start, |a, s| a.add(*s))
    }
}

/// The polyline through `origin`, the cone points and `target`.
pub fn polyline(origin: Site, cone_points: &[Site], target: Site, dim: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![origin.to_f64(dim)];
    pts.extend(
        cone_points
            .iter()
            .filter(|&&c| c != origin && c != target)
            .map(|c| c.to_f64(dim)),
    );
    pts.push(target.to_f64(dim));
    pts
}

fn point_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| y - x).collect();
    let l2: f64 = ab.iter().map(|x| x * x).sum();
    let s = if l2 == 0.0 {
        0.0
    } else {
        (ab.iter().zip(&ap).map(|(x, y)| x * y).sum::<f64>() / l2).clamp(0.0, 1.0)
    };
    ap.iter()
        .zip(&ab)
        .map(|(x, y)| (x - s * y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Hausdorff distance between a finite point set and a polyline; the polyline side is
/// sampled with spacing `1/64`.
pub fn hausdorff_to_polyline(points: &[Vec<f64>], line: &[Vec<f64>]) -> f64 {
    let to_line = |p: &Vec<f64>| {
        if line.len() == 1 {
            return point_segment(p, &line[0], &line[0]);
        }
        line.windows(2)
            .map(|w| point_segment(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min)
    };
    let mut h = points.iter().map(to_line).fold(0.0, f64::max);
    let to_set = |q: &[f64]| {
        points
            .iter()
            .map(|p| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    for w in line.windows(2) {
        let len = w[0]
            .iter()
            .zip(&w[1])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let steps = ((len * 64.0).ceil() as usize).max(1);
        for k in 0..=steps {
            let s = k as f64 / steps as f64;
            let q: Vec<f64> = w[0]
                .iter()
                .zip(&w[1])
                .map(|(x, y)| x + s * (y - x))
                .collect();
            h = h.max(to_set(&q));
        }
    }
    h
}

/// Hausdorff distance between a cluster and its cone-point polyline.
pub fn cluster_hausdorff(cluster: &Cluster, cone_points: &[Site]) -> f64 {
    let line = polyline(cluster.origin, cone_points, cluster.target, cluster.dim);
    let pts: Vec<Vec<f64>> = cluster.vertices.iter().map(|&v| cluster.point(v)).collect();
    hausdorff_to_polyline(&pts, &line)
}

fn site_json(s: Site, d: usize) -> Value {
    json!(s.coords(d))
}

fn piece_json(p: &Piece, d: usize) -> Value {
    json!({
        "start": p.start.map(|s| site_json(s, d)),
        "end": p.end.map(|s| site_json(s, d)),
        "vertices": p.vertices.iter().map(|&s| site_json(s, d)).collect::<Vec<_>>(),
        "edges": p.edges.iter().map(|e| json!([e.a.coords(d), e.b.coords(d)])).collect::<Vec<_>>(),
    })
}

/// JSON document describing a decomposition and its effective walk.
pub fn decomposition_json(cluster: &Cluster, dec: &Decomposition, t: &[f64], delta: f64) -> Value {
    let d = cluster.dim;
    let head = json!({
        "origin": site_json(cluster.origin, d),
        "target": site_json(cluster.target, d),
        "t": t,
        "delta": delta,
    });
    match dec {
        Decomposition::Undecomposable { cone_points } => {
            json!({"cluster": head, "decomposable": false, "cone_point_count": cone_points})
        }
        Decomposition::Pieces(p) => {
            let walk = EffectiveWalk::from_decomposition(p);
            json!({
                "cluster": head,
                "decomposable": true,
                "cone_points": p.cone_points.iter().map(|&c| site_json(c, d)).collect::<Vec<_>>(),
                "backward": piece_json(&p.backward, d),
                "pieces": p.pieces.iter().map(|x| piece_json(x, d)).collect::<Vec<_>>(),
                "forward": piece_json(&p.forward, d),
                "walk": {"start": site_json(walk.start, d), "steps": walk.steps.iter().map(|&s| site_json(s, d)).collect::<Vec<_>>()},
            })
        }
    }
}
