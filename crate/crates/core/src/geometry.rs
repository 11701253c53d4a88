//! Directional norms, their unit balls and Wulff shapes, dual vectors, surcharge
//! functions, cones and boundary curvature.

use std::f64::consts::TAU;
use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("norm is not positive in direction {0:?}")]
    Degenerate(Vec<f64>),
    #[error("tabulated norm is not convex near angle {angle:.6}")]
    NonConvex { angle: f64 },
    #[error("boundary curvature needs at least {need} boundary points near t, found {have}")]
    InsufficientResolution { have: usize, need: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid norm specification: {0}")]
    Invalid(String),
    #[error("{0} is only available in two dimensions")]
    PlanarOnly(&'static str),
}

/// Piecewise-linear-in-angle interpolation of tabulated values of `xi` on unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedNorm {
    angles: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedNorm {
    /// `angles` in radians (any order, distinct modulo 2 pi) and positive `values`.
    pub fn new(angles: &[f64], values: &[f64]) -> Result<Self, GeometryError> {
        if angles.len() != values.len() || angles.len() < 3 {
            return Err(GeometryError::Invalid(
                "need at least three (angle, value) pairs".into(),
            ));
        }
        let mut pairs: Vec<(f64, f64)> = angles
            .iter()
            .map(|a| a.rem_euclid(TAU))
            .zip(values.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            if w[1].0 - w[0].0 < 1e-12 {
                return Err(GeometryError::Invalid(format!(
                    "duplicate angle {}",
                    w[0].0
                )));
            }
        }
        if let Some(&(a, v)) = pairs.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(GeometryError::Degenerate(vec![a.cos() * v, a.sin() * v]));
        }
        let norm = TabulatedNorm {
            angles: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        };
        let gaps = norm
            .angles
            .windows(2)
            .map(|w| w[1] - w[0])
            .chain([norm.angles[0] + TAU - norm.angles[norm.angles.len() - 1]]);
        if gaps.into_iter().any(|g| g >= std::f64::consts::PI) {
            return Err(GeometryError::Invalid(
                "angular gaps must be below pi".into(),
            ));
        }
        norm.check_convex()?;
        Ok(norm)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn node(&self, i: usize) -> [f64; 2] {
        let (s, c) = self.angles[i].sin_cos();
        [c / self.values[i], s / self.values[i]]
    }

    /// The linear functional `g` with `(g, P_i) = (g, P_j) = 1` for the nodes bounding sector `i`.
    fn sector_functional(&self, i: usize) -> [f64; 2] {
        let a = self.node(i);
        let b = self.node((i + 1) % self.angles.len());
        let det = a[0] * b[1] - a[1] * b[0];
        [(b[1] - a[1]) / det, (a[0] - b[0]) / det]
    }

    /// Value on the unit vector at angle `theta` and its derivative in angle. The norm is
    /// linear on each sector between consecutive nodes, so the unit ball is the polygon
    /// through the nodes; at a node the derivative is the mean of the one-sided ones.
    fn eval_angle(&self, theta: f64) -> (f64, f64) {
        let th = theta.rem_euclid(TAU);
        let n = self.angles.len();
        let k = self.angles.partition_point(|&a| a <= th);
        let i = (k + n - 1) % n;
        let (s, c) = th.sin_cos();
        let g = self.sector_functional(i);
        let value = g[0] * c + g[1] * s;
        let slope = |g: [f64; 2]| -g[0] * s + g[1] * c;
        if (th - self.angles[i]).abs() < 1e-14 {
            let h = self.sector_functional((i + n - 1) % n);
            return (value, 0.5 * (slope(g) + slope(h)));
        }
        (value, slope(g))
    }

    fn check_convex(&self) -> Result<(), GeometryError> {
        let n = self.angles.len();
        let pts: Vec<[f64; 2]> = (0..n).map(|i| self.node(i)).collect();
        let scale = pts.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        for k in 0..n {
            let (a, b, c) = (pts[k], pts[(k + 1) % n], pts[(k + 2) % n]);
            if cross(sub(b, a), sub(c, b)) < -1e-9 * scale * scale {
                return Err(GeometryError::NonConvex {
                    angle: self.angles[(k + 1) % n],
                });
            }
        }
        Ok(())
    }
}

/// Trigonometric series `h(theta) = a0 + sum a_j cos(j theta) + b_j sin(j theta)` for the
/// value of the norm on unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierNorm {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl FourierNorm {
    /// `cos[0]` is the constant term; `sin[0]` is ignored.
    pub fn new(cos: Vec<f64>, mut sin: Vec<f64>) -> Result<Self, GeometryError> {
        if cos.is_empty() {
            return Err(GeometryError::Invalid("empty coefficient list".into()));
        }
        sin.resize(cos.len(), 0.0);
        let n = FourierNorm { cos, sin };
        for k in 0..4096 {
            let th = TAU * k as f64 / 4096.0;
            let (h, _, h2) = n.derivatives(th);
            if h <= 0.0 {
                return Err(GeometryError::Degenerate(vec![th.cos(), th.sin()]));
            }
            if h + h2 < 0.0 {
                return Err(GeometryError::NonConvex { angle: th });
            }
        }
        Ok(n)
    }

    /// Series with only harmonics `0, fold, 2 fold, ...` (cosine terms).
    pub fn symmetric(fold: usize, coeffs: &[f64]) -> Result<Self, GeometryError> {
        let mut cos = vec![0.0; fold * (coeffs.len().saturating_sub(1)) + 1];
        for (j, &c) in coeffs.iter().enumerate() {
            cos[j * fold] = c;
        }
        Self::new(cos, Vec::new())
    }

    /// `(h, h', h'')` at angle `theta`.
    pub fn derivatives(&self, theta: f64) -> (f64, f64, f64) {
        let (mut h, mut h1, mut h2) = (self.cos[0], 0.0, 0.0);
        for j in 1..self.cos.len() {
            let jf = j as f64;
            let (s, c) = (jf * theta).sin_cos();
            let (a, b) = (self.cos[j], self.sin[j]);
            h += a * c + b * s;
            h1 += jf * (-a * s + b * c);
            h2 += -jf * jf * (a * c + b * s);
        }
        (h, h1, h2)
    }

    pub fn coefficients(&self) -> (&[f64], &[f64]) {
        (&self.cos, &self.sin)
    }
}

/// A norm-like directional function `xi`: positive, homogeneous of degree one, convex.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionalNorm {
    Euclidean {
        dim: usize,
        scale: f64,
    },
    /// `scale * |x|_1`.
    L1 {
        dim: usize,
        scale: f64,
    },
    /// `sqrt(x^T A x)` for a symmetric positive-definite `A` (row-major).
    Quadratic {
        dim: usize,
        matrix: Vec<f64>,
    },
    Tabulated(TabulatedNorm),
    Fourier(FourierNorm),
}

impl DirectionalNorm {
    pub fn euclidean(dim: usize) -> Self {
        DirectionalNorm::Euclidean { dim, scale: 1.0 }
    }

    /// Planar norm whose unit ball has semi-axes `1/a`, `1/b`; its Wulff shape is the
    /// ellipse with semi-axes `a`, `b`.
    pub fn elliptic(a: f64, b: f64) -> Self {
        DirectionalNorm::Quadratic {
            dim: 2,
            matrix: vec![a * a, 0.0, 0.0, b * b],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DirectionalNorm::Euclidean { dim, .. }
            | DirectionalNorm::L1 { dim, .. }
            | DirectionalNorm::Quadratic { dim, .. } => *dim,
            DirectionalNorm::Tabulated(_) | DirectionalNorm::Fourier(_) => 2,
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            DirectionalNorm::Euclidean { scale, .. } => {
                scale * v.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
            DirectionalNorm::L1 { scale, .. } => scale * v.iter().map(|x| x.abs()).sum::<f64>(),
            DirectionalNorm::Quadratic { dim, matrix } => {
                quad_form(matrix, *dim, v).max(0.0).sqrt()
            }
            DirectionalNorm::Tabulated(t) => {
                let r = v[0].hypot(v[1]);
                if r == 0.0 {
                    0.0
                } else {
                    r * t.eval_angle(v[1].atan2(v[0])).0
                }
            }
            DirectionalNorm::Fourier(f) => {
                let r = v[0].hypot(v[1]);
                if r == 0.0 {
                    0.0
                } else {
                    r * f.derivatives(v[1].atan2(v[0])).0
                }
            }
        }
    }

    pub fn eval2(&self, x: f64, y: f64) -> f64 {
        self.eval(&[x, y])
    }

    /// Gradient of `xi` at `v != 0`; at kinks the centroid of the subdifferential.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        match self {
            DirectionalNorm::Euclidean { scale, .. } => {
                let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| scale * x / r).collect()
            }
            DirectionalNorm::L1 { scale, .. } => v
                .iter()
                .map(|&x| {
                    if x > 0.0 {
                        *scale
                    } else if x < 0.0 {
                        -scale
                    } else {
                        0.0
                    }
                })
                .collect(),
            DirectionalNorm::Quadratic { dim, matrix } => {
                let xi = self.eval(v);
                (0..*dim)
                    .map(|i| (0..*dim).map(|j| matrix[i * dim + j] * v[j]).sum::<f64>() / xi)
                    .collect()
            }
            DirectionalNorm::Tabulated(_) | DirectionalNorm::Fourier(_) => {
                let th = v[1].atan2(v[0]);
                let (h, h1) = match self {
                    DirectionalNorm::Tabulated(t) => t.eval_angle(th),
                    DirectionalNorm::Fourier(f) => {
                        let d = f.derivatives(th);
                        (d.0, d.1)
                    }
                    _ => unreachable!(),
                };
                let (s, c) = th.sin_cos();
                vec![h * c - h1 * s, h * s + h1 * c]
            }
        }
    }

    /// Validates positivity on unit directions and, where relevant, the matrix.
    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            DirectionalNorm::Euclidean { dim, scale } | DirectionalNorm::L1 { dim, scale } => {
                if *dim == 0 || !(scale.is_finite() && *scale > 0.0) {
                    return Err(GeometryError::Invalid(format!(
                        "scale {scale} in dimension {dim}"
                    )));
                }
            }
            DirectionalNorm::Quadratic { dim, matrix } => {
                if matrix.len() != dim * dim {
                    return Err(GeometryError::Invalid("matrix size".into()));
                }
                for i in 0..*dim {
                    for j in 0..*dim {
                        if (matrix[i * dim + j] - matrix[j * dim + i]).abs() > 1e-12 {
                            return Err(GeometryError::Invalid("matrix not symmetric".into()));
                        }
                    }
                }
                if !cholesky_ok(matrix, *dim) {
                    return Err(GeometryError::Invalid(
                        "matrix not positive definite".into(),
                    ));
                }
            }
            DirectionalNorm::Tabulated(_) | DirectionalNorm::Fourier(_) => {}
        }
        Ok(())
    }
}

fn quad_form(m: &[f64], d: usize, v: &[f64]) -> f64 {
    (0..d)
        .map(|i| (0..d).map(|j| v[i] * m[i * d + j] * v[j]).sum::<f64>())
        .sum()
}

fn cholesky_ok(m: &[f64], d: usize) -> bool {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = m[i * d + i] - s;
                if v <= 0.0 {
                    return false;
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (m[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    true
}

pub(crate) fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A compact convex set containing the origin in its interior.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody {
    /// Planar polygon, vertices in counter-clockwise order.
    Polygon(Vec<[f64; 2]>),
    /// Body given by its support function (the Wulff shape of a norm in any dimension).
    Support(DirectionalNorm),
    /// Boundary samples of a body in dimension >= 3.
    Samples { dim: usize, points: Vec<Vec<f64>> },
}

impl ConvexBody {
    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Polygon(_) => 2,
            ConvexBody::Support(n) => n.dim(),
            ConvexBody::Samples { dim, .. } => *dim,
        }
    }

    /// Support function `max_{x in body} (x, direction)`.
    pub fn support(&self, direction: &[f64]) -> f64 {
        match self {
            ConvexBody::Polygon(v) => v
                .iter()
                .map(|p| p[0] * direction[0] + p[1] * direction[1])
                .fold(f64::NEG_INFINITY, f64::max),
            ConvexBody::Support(n) => n.eval(direction),
            ConvexBody::Samples { points, .. } => points
                .iter()
                .map(|p| dot(p, direction))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Point-in-body test with relative tolerance `tol` (planar polygons and support bodies).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConvexBody::Polygon(v) => {
                let scale = v.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
                let n = v.len();
                (0..n).all(|i| {
                    let a = v[i];
                    let b = v[(i + 1) % n];
                    let e = sub(b, a);
                    cross(e, sub([x[0], x[1]], a)) >= -tol * scale * e[0].hypot(e[1])
                })
            }
            ConvexBody::Support(n) => {
                // x in K iff (x, u) <= xi(u) for all u; for a Wulff shape this is the dual norm
                dual_norm(n, x) <= 1.0 + tol
            }
            ConvexBody::Samples { .. } => false,
        }
    }

    pub fn vertices(&self) -> Option<&[[f64; 2]]> {
        match self {
            ConvexBody::Polygon(v) => Some(v),
            _ => None,
        }
    }
}

/// `max_{u != 0} (x, u) / xi(u)` by sampling directions (planar) or by local ascent.
fn dual_norm(norm: &DirectionalNorm, x: &[f64]) -> f64 {
    if norm.dim() == 2 {
        let res = 4096;
        (0..res)
            .map(|k| {
                let th = TAU * k as f64 / res as f64;
                let u = [th.cos(), th.sin()];
                dot(x, &u) / norm.eval(&u)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        let mut u: Vec<f64> = x.to_vec();
        let mut best = dot(x, &u) / norm.eval(&u);
        let mut step = 0.1;
        for _ in 0..2000 {
            let mut improved = false;
            for i in 0..u.len() {
                for s in [-step, step] {
                    let mut w = u.clone();
                    w[i] += s;
                    let v = dot(x, &w) / norm.eval(&w);
                    if v > best {
                        best = v;
                        u = w;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
        best
    }
}

fn check_dim(norm: &DirectionalNorm, d: usize) -> Result<(), GeometryError> {
    if norm.dim() != d {
        return Err(GeometryError::DimensionMismatch {
            expected: norm.dim(),
            got: d,
        });
    }
    Ok(())
}

/// Unit ball `U = {x : xi(x) <= 1}`: the planar polygon through `u / xi(u)` for `resolution`
/// equally spaced unit vectors, or boundary samples on a sphere grid for `d >= 3`.
pub fn equi_decay_set(
    norm: &DirectionalNorm,
    resolution: usize,
) -> Result<ConvexBody, GeometryError> {
    norm.validate()?;
    match norm.dim() {
        2 => {
            let mut pts = Vec::with_capacity(resolution);
            for k in 0..resolution {
                let th = TAU * k as f64 / resolution as f64;
                let u = [th.cos(), th.sin()];
                let x = norm.eval(&u);
                if !(x.is_finite() && x > 0.0) {
                    return Err(GeometryError::Degenerate(u.to_vec()));
                }
                pts.push([u[0] / x, u[1] / x]);
            }
            Ok(ConvexBody::Polygon(pts))
        }
        d => {
            let pts = sphere_grid(d, resolution)
                .into_iter()
                .map(|u| {
                    let x = norm.eval(&u);
                    if x > 0.0 {
                        Ok(u.iter().map(|c| c / x).collect())
                    } else {
                        Err(GeometryError::Degenerate(u))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ConvexBody::Samples {
                dim: d,
                points: pts,
            })
        }
    }
}

fn sphere_grid(d: usize, resolution: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        3 => {
            // Fibonacci lattice
            let n = resolution.max(8);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => (0..resolution)
            .map(|k| {
                let th = TAU * k as f64 / resolution as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
    }
}

/// Wulff shape `K = {t : (t, u) <= xi(u) for all unit u}`: a half-plane intersection over
/// `resolution` directions in the plane, and the support-function body in `d >= 3`.
pub fn wulff_shape(norm: &DirectionalNorm, resolution: usize) -> Result<ConvexBody, GeometryError> {
    norm.validate()?;
    if norm.dim() != 2 {
        return Ok(ConvexBody::Support(norm.clone()));
    }
    let mut normals = Vec::with_capacity(resolution);
    for k in 0..resolution {
        let th = TAU * k as f64 / resolution as f64;
        let u = [th.cos(), th.sin()];
        let x = norm.eval(&u);
        if !(x.is_finite() && x > 0.0) {
            return Err(GeometryError::Degenerate(u.to_vec()));
        }
        normals.push((u, x));
    }
    Ok(ConvexBody::Polygon(halfplane_intersection(&normals)))
}

/// Polar body `{y : (y, x) <= 1 for all x in body}` of a planar polygon.
pub fn polar(body: &ConvexBody) -> Result<ConvexBody, GeometryError> {
    let v = body.vertices().ok_or(GeometryError::PlanarOnly("polar"))?;
    let normals: Vec<([f64; 2], f64)> = v
        .iter()
        .map(|p| {
            let r = p[0].hypot(p[1]);
            ([p[0] / r, p[1] / r], 1.0 / r)
        })
        .collect();
    Ok(ConvexBody::Polygon(halfplane_intersection(&normals)))
}

/// Intersection of half-planes `(x, n) <= c` with `c > 0` (Sutherland-Hodgman clipping).
fn halfplane_intersection(planes: &[([f64; 2], f64)]) -> Vec<[f64; 2]> {
    let big = 4.0 * planes.iter().map(|p| p.1).fold(1.0, f64::max) * 1e3;
    let mut poly = vec![[-big, -big], [big, -big], [big, big], [-big, big]];
    let mut order: Vec<usize> = (0..planes.len()).collect();
    // clip in angular order: keeps the working polygon small
    order.sort_by(|&a, &b| {
        planes[a].0[1]
            .atan2(planes[a].0[0])
            .total_cmp(&planes[b].0[1].atan2(planes[b].0[0]))
    });
    for &k in &order {
        let (n, c) = planes[k];
        let side = |p: [f64; 2]| p[0] * n[0] + p[1] * n[1] - c;
        let mut out = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let (sa, sb) = (side(a), side(b));
            if sa <= 0.0 {
                out.push(a);
            }
            if (sa <= 0.0) != (sb <= 0.0) {
                let t = sa / (sa - sb);
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        poly = out;
    }
    let scale = poly.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    let mut dedup: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for p in poly {
        if dedup
            .last()
            .is_none_or(|q| (p[0] - q[0]).hypot(p[1] - q[1]) > 1e-12 * scale)
        {
            dedup.push(p);
        }
    }
    while dedup.len() > 1 {
        let (f, l) = (dedup[0], dedup[dedup.len() - 1]);
        if (f[0] - l[0]).hypot(f[1] - l[1]) <= 1e-12 * scale {
            dedup.pop();
        } else {
            break;
        }
    }
    dedup
}

/// A vector `t` on the boundary of `K` with `(t, x) = xi(x)`. Analytic norms use the
/// gradient; at kinks, and for polygonal bodies, ties resolve to the centroid of the
/// maximising face.
pub fn dual_vector(
    x: &[f64],
    norm: &DirectionalNorm,
    body: Option<&ConvexBody>,
) -> Result<Vec<f64>, GeometryError> {
    check_dim(norm, x.len())?;
    if x.iter().all(|&c| c == 0.0) {
        return Err(GeometryError::Degenerate(x.to_vec()));
    }
    match body {
        Some(ConvexBody::Polygon(v)) => {
            let vals: Vec<f64> = v.iter().map(|p| p[0] * x[0] + p[1] * x[1]).collect();
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-10 * max.abs().max(1e-300);
            let face: Vec<&[f64; 2]> = v
                .iter()
                .zip(&vals)
                .filter(|(_, &s)| s >= max - tol)
                .map(|(p, _)| p)
                .collect();
            let k = face.len() as f64;
            Ok(vec![
                face.iter().map(|p| p[0]).sum::<f64>() / k,
                face.iter().map(|p| p[1]).sum::<f64>() / k,
            ])
        }
        _ => Ok(norm.gradient(x)),
    }
}

/// `s_t(y) = max(0, xi(y) - (t, y))`.
pub fn surcharge(t: &[f64], y: &[f64], norm: &DirectionalNorm) -> f64 {
    (norm.eval(y) - dot(t, y)).max(0.0)
}

/// Whether `y` lies in the forward cone `{y : s_t(y) < delta xi(y)}`.
pub fn in_forward_cone(y: &[f64], t: &[f64], delta: f64, norm: &DirectionalNorm) -> bool {
    let xi = norm.eval(y);
    xi > 0.0 && xi - dot(t, y) < delta * xi
}

pub fn in_backward_cone(y: &[f64], t: &[f64], delta: f64, norm: &DirectionalNorm) -> bool {
    let m: Vec<f64> = y.iter().map(|c| -c).collect();
    in_forward_cone(&m, t, delta, norm)
}

/// Curvature of the boundary of a planar body at the boundary point `t`.
///
/// Polygons are handled by a least-squares parabola through the `2 * half_window + 1`
/// vertices nearest to `t`, in the frame of the local tangent; support bodies use the
/// support-function identity `1 / (h + h'')` with central differences.
pub fn boundary_curvature(body: &ConvexBody, t: &[f64]) -> Result<f64, GeometryError> {
    match body {
        ConvexBody::Polygon(v) => polygon_curvature(v, [t[0], t[1]], 2),
        ConvexBody::Support(norm) => {
            check_dim(norm, 2)?;
            let theta = normal_angle(norm, [t[0], t[1]]);
            let h = |a: f64| norm.eval(&[a.cos(), a.sin()]);
            let eps = 1e-4;
            let radius =
                h(theta) + (h(theta + eps) - 2.0 * h(theta) + h(theta - eps)) / (eps * eps);
            Ok(1.0 / radius)
        }
        ConvexBody::Samples { .. } => {
            Err(GeometryError::PlanarOnly("boundary_curvature on samples"))
        }
    }
}

/// Polygon curvature with a configurable window; needs `2 * half_window + 1 >= 5` vertices.
pub fn polygon_curvature(
    v: &[[f64; 2]],
    t: [f64; 2],
    half_window: usize,
) -> Result<f64, GeometryError> {
    let need = (2 * half_window + 1).max(5);
    if v.len() < need {
        return Err(GeometryError::InsufficientResolution {
            have: v.len(),
            need,
        });
    }
    let n = v.len();
    let w = half_window.max(2);
    let i = (0..n)
        .min_by(|&a, &b| {
            let da = (v[a][0] - t[0]).hypot(v[a][1] - t[1]);
            let db = (v[b][0] - t[0]).hypot(v[b][1] - t[1]);
            da.total_cmp(&db)
        })
        .expect("non-empty");
    let pts: Vec<[f64; 2]> = (0..=2 * w).map(|k| v[(i + n + k - w) % n]).collect();
    let first = pts[0];
    let last = pts[2 * w];
    let chord = sub(last, first);
    let len = chord[0].hypot(chord[1]);
    if len == 0.0 {
        return Err(GeometryError::InsufficientResolution { have: 1, need });
    }
    let tan = [chord[0] / len, chord[1] / len];
    // inward normal for a counter-clockwise polygon
    let nor = [-tan[1], tan[0]];
    let c = v[i];
    let local: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| {
            let d = sub(*p, c);
            (d[0] * tan[0] + d[1] * tan[1], d[0] * nor[0] + d[1] * nor[1])
        })
        .collect();
    let coef = quadratic_fit(&local);
    let slope = coef[1];
    Ok(2.0 * coef[2] / (1.0 + slope * slope).powf(1.5))
}

/// Least-squares `y = c0 + c1 x + c2 x^2`.
fn quadratic_fit(pts: &[(f64, f64)]) -> [f64; 3] {
    let scale = pts
        .iter()
        .map(|p| p.0.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(x, y) in pts {
        let xs = x / scale;
        let phi = [1.0, xs, xs * xs];
        for r in 0..3 {
            b[r] += phi[r] * y;
            for c in 0..3 {
                a[r][c] += phi[r] * phi[c];
            }
        }
    }
    let s = solve3(a, b);
    [s[0], s[1] / scale, s[2] / (scale * scale)]
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Angle of the outer normal of the Wulff shape at `t`: the minimiser of `xi(u) - (t, u)`.
fn normal_angle(norm: &DirectionalNorm, t: [f64; 2]) -> f64 {
    let f = |a: f64| {
        let u = [a.cos(), a.sin()];
        norm.eval(&u) - t[0] * u[0] - t[1] * u[1]
    };
    let res = 2048;
    let mut best = (0..res)
        .map(|k| TAU * k as f64 / res as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let mut step = TAU / res as f64;
    while step > 1e-13 {
        let l = f(best - step);
        let r = f(best + step);
        let c = f(best);
        if l < c {
            best -= step;
        } else if r < c {
            best += step;
        } else {
            step *= 0.5;
        }
    }
    best
}

/// Principal curvatures of the Wulff shape of a three-dimensional norm at `t`.
pub fn principal_curvatures(norm: &DirectionalNorm, t: &[f64]) -> Result<[f64; 2], GeometryError> {
    check_dim(norm, 3)?;
    // outer normal: minimise xi(u) - (t, u) on the sphere
    let f = |u: &[f64]| {
        let r = dot(u, u).sqrt();
        norm.eval(u) / r - dot(t, u) / r
    };
    let r0 = dot(t, t).sqrt();
    if r0 == 0.0 {
        return Err(GeometryError::Degenerate(t.to_vec()));
    }
    let mut u: Vec<f64> = t.iter().map(|c| c / r0).collect();
    let mut step = 0.05;
    let mut best = f(&u);
    while step > 1e-12 {
        let mut improved = false;
        for i in 0..3 {
            for s in [-step, step] {
                let mut w = u.clone();
                w[i] += s;
                let r = dot(&w, &w).sqrt();
                w.iter_mut().for_each(|c| *c /= r);
                let v = f(&w);
                if v < best {
                    best = v;
                    u = w;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    // tangent basis
    let a = if u[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let mut e1: Vec<f64> = (0..3).map(|i| a[i] - dot(&a, &u) * u[i]).collect();
    let r = dot(&e1, &e1).sqrt();
    e1.iter_mut().for_each(|c| *c /= r);
    let e2 = vec![
        u[1] * e1[2] - u[2] * e1[1],
        u[2] * e1[0] - u[0] * e1[2],
        u[0] * e1[1] - u[1] * e1[0],
    ];
    let h = 1e-4;
    let at = |a: f64, b: f64| -> f64 {
        let p: Vec<f64> = (0..3).map(|i| u[i] + a * e1[i] + b * e2[i]).collect();
        norm.eval(&p)
    };
    let h11 = (at(h, 0.0) - 2.0 * at(0.0, 0.0) + at(-h, 0.0)) / (h * h);
    let h22 = (at(0.0, h) - 2.0 * at(0.0, 0.0) + at(0.0, -h)) / (h * h);
    let h12 = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
    let tr = h11 + h22;
    let disc = ((h11 - h22).powi(2) + 4.0 * h12 * h12).sqrt();
    let (r1, r2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    Ok([1.0 / r1, 1.0 / r2])
}

/// Largest defect `|max_{x in U} (t, x) - 1|` over the vertices `t` of `K`.
pub fn polarity_defect(unit_ball: &ConvexBody, wulff: &ConvexBody) -> Result<f64, GeometryError> {
    let k = wulff
        .vertices()
        .ok_or(GeometryError::PlanarOnly("polarity_defect"))?;
    Ok(k.iter()
        .map(|t| (unit_ball.support(t) - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Range `(lo, 1/3)` of cone openings `delta` for which some `+-e_i` lies in the interior of
/// the cone of opening `3 delta` at every sampled boundary point of `K`; `None` if empty.
pub fn feasible_delta(norm: &DirectionalNorm, resolution: usize) -> Option<(f64, f64)> {
    let d = norm.dim();
    let mut lo: f64 = 0.0;
    for u in sphere_grid(d, resolution) {
        let t = norm.gradient(&u);
        let mut best = f64::INFINITY;
        for i in 0..d {
            for s in [-1.0, 1.0] {
                let mut e = vec![0.0; d];
                e[i] = s;
                let xi = norm.eval(&e);
                best = best.min((xi - dot(&t, &e)) / (3.0 * xi));
            }
        }
        lo = lo.max(best);
    }
    (lo < 1.0 / 3.0).then_some((lo, 1.0 / 3.0))
}

/// Writes `theta,x,y` rows for the vertices of a planar body.
pub fn export_csv(body: &ConvexBody, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "theta,x,y")?;
    if let Some(v) = body.vertices() {
        for p in v {
            writeln!(out, "{},{},{}", p[1].atan2(p[0]), p[0], p[1])?;
        }
    }
    Ok(())
}
