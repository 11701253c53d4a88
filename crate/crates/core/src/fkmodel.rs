//! The random-cluster (FK) measure on a box: weights, exact enumeration, cluster
//! labelling and Markov chain samplers.

use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng as _;
use thiserror::Error;

use crate::lattice::{BondGraph, LatticeBox, Site};
use crate::rng::{stream_rng, Rng};

/// Largest bond count accepted by [`exact_distribution`].
pub const MAX_EXACT_BONDS: usize = 24;

#[derive(Debug, Error)]
pub enum FkError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("exact enumeration needs at most {MAX_EXACT_BONDS} bonds, got {0}")]
    TooLarge(usize),
    #[error("Swendsen-Wang requires an integer cluster weight, got q = {0}")]
    NonIntegerQ(f64),
    #[error("configuration has {got} bonds but the box has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("site {0} is not in the box")]
    OutsideBox(Site),
    #[error("malformed configuration dump: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    Free,
    Wired,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Free => "free",
            Boundary::Wired => "wired",
        })
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "free" => Ok(Boundary::Free),
            "wired" => Ok(Boundary::Wired),
            _ => Err(format!("unknown boundary condition '{s}'")),
        }
    }
}

/// Inverse temperature and cluster weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub beta: f64,
    pub q: f64,
}

impl ModelParams {
    pub fn new(beta: f64, q: f64) -> Result<Self, FkError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(FkError::InvalidParameter {
                name: "beta",
                value: beta,
            });
        }
        if !(q.is_finite() && q >= 1.0) {
            return Err(FkError::InvalidParameter {
                name: "q",
                value: q,
            });
        }
        Ok(ModelParams { beta, q })
    }

    /// Parameters whose unit-coupling bond probability equals `p`.
    pub fn from_p(p: f64, q: f64) -> Result<Self, FkError> {
        if !(0.0..1.0).contains(&p) {
            return Err(FkError::InvalidParameter {
                name: "p",
                value: p,
            });
        }
        Self::new(-(1.0 - p).ln() / 2.0, q)
    }

    /// Bond probability for a coupling `j`.
    pub fn bond_probability(&self, j: f64) -> f64 {
        bond_probability(j, self.beta)
    }
}

/// `p = 1 - exp(-2 beta J)`.
pub fn bond_probability(j: f64, beta: f64) -> f64 {
    -(-2.0 * beta * j).exp_m1()
}

/// Per-bond open probabilities of a graph.
pub fn bond_probabilities(graph: &BondGraph, params: &ModelParams) -> Vec<f64> {
    (0..graph.num_bonds())
        .map(|e| params.bond_probability(graph.coupling(e)))
        .collect()
}

/// Open/closed state of every bond of a box, indexed like [`BondGraph::bonds`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BondConfiguration {
    pub bx: LatticeBox,
    pub boundary: Boundary,
    pub open: Vec<bool>,
}

impl BondConfiguration {
    pub fn closed(graph: &BondGraph, boundary: Boundary) -> Self {
        BondConfiguration {
            bx: *graph.lattice_box(),
            boundary,
            open: vec![false; graph.num_bonds()],
        }
    }

    /// Configuration whose bond `i` is bit `i` of `mask`.
    pub fn from_mask(graph: &BondGraph, boundary: Boundary, mask: u64) -> Self {
        let open = (0..graph.num_bonds()).map(|i| mask >> i & 1 == 1).collect();
        BondConfiguration {
            bx: *graph.lattice_box(),
            boundary,
            open,
        }
    }

    pub fn mask(&self) -> u64 {
        self.open
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &o)| m | (o as u64) << i)
    }

    pub fn num_open(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    fn check(&self, graph: &BondGraph) -> Result<(), FkError> {
        if self.open.len() != graph.num_bonds() {
            return Err(FkError::LengthMismatch {
                expected: graph.num_bonds(),
                got: self.open.len(),
            });
        }
        Ok(())
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i as u32;
        }
        self.size.iter_mut().for_each(|s| *s = 1);
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }
}

/// Cluster labels of the vertices of a box. Under wired boundary conditions every
/// vertex coupled to the exterior shares the exterior label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<u32>,
    pub count: usize,
    pub exterior: Option<u32>,
}

impl ClusterLabeling {
    pub fn same(&self, u: usize, v: usize) -> bool {
        self.labels[u] == self.labels[v]
    }

    pub fn touches_exterior(&self, v: usize) -> bool {
        self.exterior == Some(self.labels[v])
    }

    /// Cluster sizes indexed by label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }
}

fn union_open(graph: &BondGraph, open: &[bool], boundary: Boundary, uf: &mut UnionFind) {
    let n = graph.num_vertices();
    for (e, &o) in open.iter().enumerate() {
        if o {
            let (i, j) = graph.ends(e);
            uf.union(i, j);
        }
    }
    if boundary == Boundary::Wired {
        for v in 0..n {
            if graph.touches_exterior(v) {
                uf.union(v, n);
            }
        }
    }
}

/// Labels clusters; labels are assigned in order of first appearance by vertex index.
pub fn cluster_labeling(graph: &BondGraph, config: &BondConfiguration) -> ClusterLabeling {
    let n = graph.num_vertices();
    let mut uf = UnionFind::new(n + 1);
    union_open(graph, &config.open, config.boundary, &mut uf);
    let mut label_of_root = vec![u32::MAX; n + 1];
    let mut labels = Vec::with_capacity(n);
    let mut count = 0u32;
    for v in 0..n {
        let r = uf.find(v);
        if label_of_root[r] == u32::MAX {
            label_of_root[r] = count;
            count += 1;
        }
        labels.push(label_of_root[r]);
    }
    let exterior = match config.boundary {
        Boundary::Wired => {
            let r = uf.find(n);
            (label_of_root[r] != u32::MAX).then_some(label_of_root[r])
        }
        Boundary::Free => None,
    };
    ClusterLabeling {
        labels,
        count: count as usize,
        exterior,
    }
}

fn count_clusters(
    graph: &BondGraph,
    open: &[bool],
    boundary: Boundary,
    uf: &mut UnionFind,
) -> usize {
    uf.reset();
    union_open(graph, open, boundary, uf);
    let n = graph.num_vertices();
    let roots = (0..n).filter(|&v| uf.find(v) == v).count();
    match boundary {
        Boundary::Free => roots,
        Boundary::Wired => {
            let ext_root = uf.find(n);
            if ext_root == n {
                // the exterior vertex is its own root: counted only if some vertex joined it
                roots + usize::from((0..n).any(|v| graph.touches_exterior(v)))
            } else {
                roots
            }
        }
    }
}

/// Number of clusters meeting the box.
pub fn cluster_count(graph: &BondGraph, config: &BondConfiguration) -> usize {
    cluster_labeling(graph, config).count
}

/// Natural log of the unnormalised FK weight.
pub fn log_config_weight(
    graph: &BondGraph,
    config: &BondConfiguration,
    params: &ModelParams,
) -> Result<f64, FkError> {
    config.check(graph)?;
    let mut w = 0.0;
    for (e, &o) in config.open.iter().enumerate() {
        let p = params.bond_probability(graph.coupling(e));
        w += if o { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(w + cluster_count(graph, config) as f64 * params.q.ln())
}

/// Unnormalised FK weight `prod p^w (1-p)^(1-w) q^(clusters)`.
pub fn config_weight(
    graph: &BondGraph,
    config: &BondConfiguration,
    params: &ModelParams,
) -> Result<f64, FkError> {
    log_config_weight(graph, config, params).map(f64::exp)
}

/// Exact FK probabilities of all `2^m` configurations, indexed by bond mask.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub boundary: Boundary,
    pub probs: Vec<f64>,
}

impl ExactDistribution {
    /// Probability of an event given as a predicate on bond masks.
    pub fn probability(&self, mut event: impl FnMut(u64) -> bool) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(m, _)| event(*m as u64))
            .map(|(_, p)| p)
            .sum()
    }

    /// Marginal open probability of each bond.
    pub fn bond_marginals(&self, num_bonds: usize) -> Vec<f64> {
        let mut m = vec![0.0; num_bonds];
        for (mask, p) in self.probs.iter().enumerate() {
            for (e, me) in m.iter_mut().enumerate() {
                if mask >> e & 1 == 1 {
                    *me += p;
                }
            }
        }
        m
    }
}

pub fn exact_distribution(
    graph: &BondGraph,
    params: &ModelParams,
    boundary: Boundary,
) -> Result<ExactDistribution, FkError> {
    let m = graph.num_bonds();
    if m > MAX_EXACT_BONDS {
        return Err(FkError::TooLarge(m));
    }
    let probs_e = bond_probabilities(graph, params);
    let lq = params.q.ln();
    let mut uf = UnionFind::new(graph.num_vertices() + 1);
    let mut open = vec![false; m];
    let mut logw = Vec::with_capacity(1 << m);
    for mask in 0u64..(1u64 << m) {
        let mut w = 0.0;
        for e in 0..m {
            open[e] = mask >> e & 1 == 1;
            w += if open[e] {
                probs_e[e].ln()
            } else {
                (-probs_e[e]).ln_1p()
            };
        }
        w += count_clusters(graph, &open, boundary, &mut uf) as f64 * lq;
        logw.push(w);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logw.iter().map(|w| (w - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(ExactDistribution { boundary, probs })
}

/// Whether `x` and `y` lie in the same cluster (the exterior counts under wired conditions).
pub fn connected(
    graph: &BondGraph,
    config: &BondConfiguration,
    x: Site,
    y: Site,
) -> Result<bool, FkError> {
    config.check(graph)?;
    let u = graph.vertex(x).ok_or(FkError::OutsideBox(x))?;
    let v = graph.vertex(y).ok_or(FkError::OutsideBox(y))?;
    Ok(cluster_labeling(graph, config).same(u, v))
}

/// Whether `x` reaches a site of `targets` along open bonds whose interior vertices lie
/// in `allowed`. The start need not be in `allowed`; the terminal vertex must be.
pub fn restricted_connected(
    graph: &BondGraph,
    config: &BondConfiguration,
    x: Site,
    allowed: &dyn Fn(Site) -> bool,
    targets: &dyn Fn(Site) -> bool,
) -> Result<bool, FkError> {
    config.check(graph)?;
    let start = graph.vertex(x).ok_or(FkError::OutsideBox(x))?;
    let mut seen = vec![false; graph.num_vertices()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &(w, e) in graph.neighbours(v) {
            let w = w as usize;
            if !config.open[e as usize] || seen[w] {
                continue;
            }
            let s = graph.site(w);
            if !allowed(s) {
                continue;
            }
            if targets(s) {
                return Ok(true);
            }
            seen[w] = true;
            stack.push(w);
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    HeatBath,
    SwendsenWang,
}

impl std::str::FromStr for Sampler {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heat-bath" | "heatbath" => Ok(Sampler::HeatBath),
            "swendsen-wang" | "sw" => Ok(Sampler::SwendsenWang),
            _ => Err(format!("unknown sampler '{s}'")),
        }
    }
}

/// A Markov chain on bond configurations leaving the FK measure invariant.
pub struct FkChain<'g> {
    graph: &'g BondGraph,
    params: ModelParams,
    probs: Vec<f64>,
    sampler: Sampler,
    state: BondConfiguration,
    rng: Rng,
    // heat-bath scratch
    stamp: Vec<u32>,
    generation: u32,
    stack: Vec<u32>,
    exterior_vertices: Vec<u32>,
    // Swendsen-Wang scratch
    uf: UnionFind,
    colour: Vec<u8>,
    spins: Vec<u8>,
}

impl<'g> FkChain<'g> {
    pub fn new(
        graph: &'g BondGraph,
        params: ModelParams,
        boundary: Boundary,
        sampler: Sampler,
        rng: Rng,
    ) -> Result<Self, FkError> {
        if sampler == Sampler::SwendsenWang
            && (params.q.fract() != 0.0 || params.q < 1.0 || params.q > 255.0)
        {
            return Err(FkError::NonIntegerQ(params.q));
        }
        let n = graph.num_vertices();
        Ok(FkChain {
            graph,
            params,
            probs: bond_probabilities(graph, &params),
            sampler,
            state: BondConfiguration::closed(graph, boundary),
            rng,
            stamp: vec![0; n],
            generation: 0,
            stack: Vec::new(),
            exterior_vertices: (0..n as u32)
                .filter(|&v| graph.touches_exterior(v as usize))
                .collect(),
            uf: UnionFind::new(n + 1),
            colour: vec![0; n + 1],
            spins: vec![0; n],
        })
    }

    pub fn state(&self) -> &BondConfiguration {
        &self.state
    }

    pub fn set_state(&mut self, state: BondConfiguration) -> Result<(), FkError> {
        state.check(self.graph)?;
        self.state = state;
        Ok(())
    }

    /// Potts spins from the most recent Swendsen-Wang step (colour 0 is the boundary colour).
    pub fn spins(&self) -> &[u8] {
        &self.spins
    }

    pub fn sweep(&mut self) {
        match self.sampler {
            Sampler::HeatBath => self.heat_bath_sweep(),
            Sampler::SwendsenWang => self.swendsen_wang_step(),
        }
    }

    fn heat_bath_sweep(&mut self) {
        let q = self.params.q;
        for e in 0..self.graph.num_bonds() {
            let p = self.probs[e];
            let (a, b) = self.graph.ends(e);
            let p_open = if self.connected_off(e, a, b) {
                p
            } else {
                p / (p + q * (1.0 - p))
            };
            self.state.open[e] = self.rng.gen::<f64>() < p_open;
        }
    }

    /// Depth-first search from `a` to `b` avoiding bond `skip`.
    fn connected_off(&mut self, skip: usize, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let g = self.generation;
        let wired = self.state.boundary == Boundary::Wired;
        let b_ext = wired && self.graph.touches_exterior(b);
        let mut exterior_used = false;
        self.stack.clear();
        self.stack.push(a as u32);
        self.stamp[a] = g;
        while let Some(v) = self.stack.pop() {
            let v = v as usize;
            if wired && !exterior_used && self.graph.touches_exterior(v) {
                if b_ext {
                    return true;
                }
                exterior_used = true;
                for &w in &self.exterior_vertices {
                    if self.stamp[w as usize] != g {
                        self.stamp[w as usize] = g;
                        self.stack.push(w);
                    }
                }
            }
            for &(w, f) in self.graph.neighbours(v) {
                if f as usize == skip || !self.state.open[f as usize] || self.stamp[w as usize] == g
                {
                    continue;
                }
                if w as usize == b {
                    return true;
                }
                self.stamp[w as usize] = g;
                self.stack.push(w);
            }
        }
        false
    }

    fn swendsen_wang_step(&mut self) {
        let n = self.graph.num_vertices();
        let q = self.params.q as u32;
        self.uf.reset();
        union_open(
            self.graph,
            &self.state.open,
            self.state.boundary,
            &mut self.uf,
        );
        const UNSET: u8 = u8::MAX;
        self.colour.iter_mut().for_each(|c| *c = UNSET);
        if self.state.boundary == Boundary::Wired {
            let r = self.uf.find(n);
            self.colour[r] = 0;
        }
        for v in 0..n {
            let r = self.uf.find(v);
            if self.colour[r] == UNSET {
                self.colour[r] = self.rng.gen_range(0..q) as u8;
            }
            self.spins[v] = self.colour[r];
        }
        for e in 0..self.graph.num_bonds() {
            let (a, b) = self.graph.ends(e);
            self.state.open[e] =
                self.spins[a] == self.spins[b] && self.rng.gen::<f64>() < self.probs[e];
        }
    }
}

/// Runs a chain from the all-closed state and returns `n_samples` configurations, one
/// every `max(thinning, 1)` sweeps after `burn_in` sweeps.
#[allow(clippy::too_many_arguments)]
pub fn sample_chain(
    graph: &BondGraph,
    params: ModelParams,
    boundary: Boundary,
    sampler: Sampler,
    burn_in: usize,
    n_samples: usize,
    thinning: usize,
    seed: u64,
) -> Result<Vec<BondConfiguration>, FkError> {
    let mut chain = FkChain::new(graph, params, boundary, sampler, stream_rng(seed, 0))?;
    for _ in 0..burn_in {
        chain.sweep();
    }
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..thinning.max(1) {
            chain.sweep();
        }
        out.push(chain.state().clone());
    }
    Ok(out)
}

/// Header fields of a configuration dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub dim: usize,
    pub half_width: i64,
    pub q: f64,
    pub beta: f64,
    pub boundary: Boundary,
    pub seed: u64,
}

/// Writes `fk d=.. N=.. q=.. beta=.. bc=.. seed=..` followed by the bond bits as hex;
/// hex digit `k` holds bonds `4k..4k+3`, lowest bond in the least significant bit.
pub fn write_dump(
    out: &mut impl Write,
    header: &DumpHeader,
    config: &BondConfiguration,
) -> Result<(), FkError> {
    writeln!(
        out,
        "fk d={} N={} q={} beta={} bc={} seed={}",
        header.dim, header.half_width, header.q, header.beta, header.boundary, header.seed
    )?;
    let mut hex = String::with_capacity(config.open.len() / 4 + 1);
    for chunk in config.open.chunks(4) {
        let v = chunk
            .iter()
            .enumerate()
            .fold(0u32, |a, (i, &b)| a | (b as u32) << i);
        hex.push(char::from_digit(v, 16).expect("nibble"));
    }
    writeln!(out, "{hex}")?;
    Ok(())
}

/// Parses a dump produced by [`write_dump`] for nearest-neighbour couplings.
pub fn read_dump(input: &mut impl BufRead) -> Result<(DumpHeader, BondConfiguration), FkError> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let mut fields = line.split_whitespace();
    if fields.next() != Some("fk") {
        return Err(FkError::Parse("missing 'fk' tag".into()));
    }
    let mut get = |key: &str| -> Result<String, FkError> {
        let f = fields
            .next()
            .ok_or_else(|| FkError::Parse(format!("missing {key}")))?;
        f.strip_prefix(&format!("{key}="))
            .map(str::to_string)
            .ok_or_else(|| FkError::Parse(format!("expected {key}=, found '{f}'")))
    };
    let bad = |k: &str| FkError::Parse(format!("bad value for {k}"));
    let dim: usize = get("d")?.parse().map_err(|_| bad("d"))?;
    let half_width: i64 = get("N")?.parse().map_err(|_| bad("N"))?;
    let q: f64 = get("q")?.parse().map_err(|_| bad("q"))?;
    let beta: f64 = get("beta")?.parse().map_err(|_| bad("beta"))?;
    let boundary: Boundary = get("bc")?.parse().map_err(FkError::Parse)?;
    let seed: u64 = get("seed")?.parse().map_err(|_| bad("seed"))?;
    let header = DumpHeader {
        dim,
        half_width,
        q,
        beta,
        boundary,
        seed,
    };
    let bx = LatticeBox::centered(dim, half_width).map_err(|e| FkError::Parse(e.to_string()))?;
    let graph = BondGraph::nearest_neighbour(&bx);
    let mut hex = String::new();
    input.read_line(&mut hex)?;
    let hex = hex.trim();
    let m = graph.num_bonds();
    if hex.len() != m.div_ceil(4) {
        return Err(FkError::LengthMismatch {
            expected: m,
            got: hex.len() * 4,
        });
    }
    let mut open = Vec::with_capacity(m);
    for c in hex.chars() {
        let v = c
            .to_digit(16)
            .ok_or_else(|| FkError::Parse(format!("bad hex digit '{c}'")))?;
        for i in 0..4 {
            if open.len() < m {
                open.push(v >> i & 1 == 1);
            }
        }
    }
    Ok((header, BondConfiguration { bx, boundary, open }))
}
