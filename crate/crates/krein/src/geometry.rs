//! Geometric substrate: flat points, hyperboloid-model points with geodesic
//! distances, arc-length parametrized curves ingested as dense polylines, and
//! the quadrature grids used for the curve-supported interaction integrals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("hyperboloid point not normalized: <x,x> + 1/kappa^2 = {0:e}")]
    NotNormalized(f64),
    #[error("hyperboloid time component must be positive, got {0}")]
    NegativeTimeComponent(f64),
    #[error("curve needs at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("curve is self-intersecting near s = {s1} and s = {s2}")]
    SelfIntersection { s1: f64, s2: f64 },
    #[error("curve has zero length")]
    ZeroLength,
    #[error("curves overlap or touch (min distance {0:e})")]
    CurveOverlap(f64),
    #[error("curve ambient dimension {0} unsupported (need 2 or 3)")]
    BadDimension(usize),
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[inline]
fn pad3(p: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..p.len()].copy_from_slice(p);
    out
}

// ------------------------------------------------------------- hyperbolic

/// Point on the hyperboloid model of H^2 (3 coords) or H^3 (4 coords) with
/// sectional curvature -kappa^2; Minkowski signature (-,+,...,+), so
/// <x,x> = -x_0^2 + sum x_i^2 = -1/kappa^2 and x_0 > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicPoint {
    pub coords: Vec<f64>,
    pub kappa: f64,
}

impl HyperbolicPoint {
    pub fn new(coords: Vec<f64>, kappa: f64) -> Result<Self, GeometryError> {
        if coords.len() != 3 && coords.len() != 4 {
            return Err(GeometryError::BadDimension(coords.len()));
        }
        if coords[0] <= 0.0 {
            return Err(GeometryError::NegativeTimeComponent(coords[0]));
        }
        let p = Self { coords, kappa };
        let resid = p.minkowski(&p) + 1.0 / (kappa * kappa);
        if resid.abs() > 1e-12 * (1.0 / (kappa * kappa)).max(1.0) {
            return Err(GeometryError::NotNormalized(resid));
        }
        Ok(p)
    }

    /// Point at geodesic polar coordinates (rho, theta) from the base point of H^2.
    pub fn h2_polar(rho: f64, theta: f64, kappa: f64) -> Self {
        let k = kappa;
        Self {
            coords: vec![
                (k * rho).cosh() / k,
                (k * rho).sinh() * theta.cos() / k,
                (k * rho).sinh() * theta.sin() / k,
            ],
            kappa,
        }
    }

    /// Point at geodesic spherical coordinates (rho, theta, phi) from the base point of H^3.
    pub fn h3_polar(rho: f64, theta: f64, phi: f64, kappa: f64) -> Self {
        let k = kappa;
        let sr = (k * rho).sinh() / k;
        Self {
            coords: vec![
                (k * rho).cosh() / k,
                sr * theta.sin() * phi.cos(),
                sr * theta.sin() * phi.sin(),
                sr * theta.cos(),
            ],
            kappa,
        }
    }

    fn minkowski(&self, other: &Self) -> f64 {
        let mut s = -self.coords[0] * other.coords[0];
        for (a, b) in self.coords.iter().zip(&other.coords).skip(1) {
            s += a * b;
        }
        s
    }
}

/// Geodesic distance d = (1/kappa) arccosh(-kappa^2 <p,q>).
pub fn geodesic_distance(p: &HyperbolicPoint, q: &HyperbolicPoint) -> Result<f64, GeometryError> {
    if p.coords.len() != q.coords.len() {
        return Err(GeometryError::DimensionMismatch(p.coords.len(), q.coords.len()));
    }
    if (p.kappa - q.kappa).abs() > 1e-14 * p.kappa.abs() {
        return Err(GeometryError::CurvatureMismatch(p.kappa, q.kappa));
    }
    let c = (-p.kappa * p.kappa * p.minkowski(q)).max(1.0);
    Ok((c + (c * c - 1.0).sqrt()).ln() / p.kappa)
}

// ------------------------------------------------------------------ curves

/// Simple (non self-intersecting) curve of finite length in R^2 or R^3,
/// stored as a dense polyline with an arc-length table; point evaluation
/// interpolates the samples with a chordal Catmull-Rom cubic so that grid
/// quadrature sees a C^1 geometry.
#[derive(Debug, Clone)]
pub struct Curve {
    samples: Vec<Vec<f64>>,
    pts: Vec<[f64; 3]>,
    closed: bool,
    length: f64,
    /// cumulative arc length; cum[i] is the parameter of samples[i], with one
    /// extra entry for the wrap-around edge when the curve is closed
    cum: Vec<f64>,
    dim: usize,
}

impl Curve {
    /// Builds a curve from polyline samples (open: endpoints included;
    /// closed: an implicit last edge connects back to samples[0]).
    pub fn from_samples(samples: Vec<Vec<f64>>, closed: bool) -> Result<Self, GeometryError> {
        let need = 4;
        if samples.len() < need {
            return Err(GeometryError::TooFewSamples { need, got: samples.len() });
        }
        let dim = samples[0].len();
        if dim != 2 && dim != 3 {
            return Err(GeometryError::BadDimension(dim));
        }
        for s in &samples {
            if s.len() != dim {
                return Err(GeometryError::DimensionMismatch(dim, s.len()));
            }
        }
        let pts: Vec<[f64; 3]> = samples.iter().map(|p| pad3(p)).collect();
        let n = samples.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 1..n {
            cum.push(cum[i - 1] + dist3(&pts[i - 1], &pts[i]));
        }
        let length = if closed {
            let total = cum[n - 1] + dist3(&pts[n - 1], &pts[0]);
            cum.push(total);
            total
        } else {
            cum[n - 1]
        };
        if length <= 0.0 {
            return Err(GeometryError::ZeroLength);
        }
        let curve = Self { samples, pts, closed, length, cum, dim };
        curve.check_simple()?;
        Ok(curve)
    }

    /// Samples fn over [0, 1] and builds the arc-length parametrized curve.
    /// For closed curves fn(0) = fn(1) is assumed and the duplicate end
    /// sample is dropped.
    pub fn from_parametric(
        f: impl Fn(f64) -> Vec<f64>,
        n_samples: usize,
        closed: bool,
    ) -> Result<Self, GeometryError> {
        if n_samples < 16 {
            return Err(GeometryError::TooFewSamples { need: 16, got: n_samples });
        }
        let pts: Vec<Vec<f64>> = if closed {
            (0..n_samples).map(|i| f(i as f64 / n_samples as f64)).collect()
        } else {
            (0..=n_samples).map(|i| f(i as f64 / n_samples as f64)).collect()
        };
        Self::from_samples(pts, closed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    fn knot(&self, i: isize) -> f64 {
        // arc-length parameter of sample i, extended past the ends
        let n = self.samples.len() as isize;
        if self.closed {
            let m = i.rem_euclid(n);
            let wraps = ((i - m) / n) as f64;
            self.cum[m as usize] + wraps * self.length
        } else if i < 0 {
            -self.cum[(-i) as usize]
        } else if i >= n {
            let last = (n - 1) as usize;
            let j = (2 * (n - 1) - i).max(0) as usize;
            2.0 * self.cum[last] - self.cum[j]
        } else {
            self.cum[i as usize]
        }
    }

    fn sample3(&self, i: isize) -> [f64; 3] {
        let n = self.samples.len() as isize;
        if self.closed {
            self.pts[i.rem_euclid(n) as usize]
        } else if i < 0 {
            let j = (-i).min(n - 1) as usize;
            let p0 = self.pts[0];
            let pj = self.pts[j];
            [2.0 * p0[0] - pj[0], 2.0 * p0[1] - pj[1], 2.0 * p0[2] - pj[2]]
        } else if i >= n {
            let last = (n - 1) as usize;
            let j = (2 * (n - 1) - i).max(0) as usize;
            let pl = self.pts[last];
            let pj = self.pts[j];
            [2.0 * pl[0] - pj[0], 2.0 * pl[1] - pj[1], 2.0 * pl[2] - pj[2]]
        } else {
            self.pts[i as usize]
        }
    }

    /// Position at arc-length parameter s, padded to 3 components.
    pub fn point_at3(&self, s: f64) -> [f64; 3] {
        let n = self.samples.len();
        let s = if self.closed { s.rem_euclid(self.length) } else { s.clamp(0.0, self.length) };
        // active segment: cum[i] <= s <= cum[i+1]
        let seg_count = if self.closed { n } else { n - 1 };
        let mut lo = 0usize;
        let mut hi = seg_count;
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if self.cum[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let i = lo as isize;
        // chordal Catmull-Rom (pyramidal form) on knots t0..t3
        let t0 = self.knot(i - 1);
        let t1 = self.knot(i);
        let t2 = self.knot(i + 1);
        let t3 = self.knot(i + 2);
        let p0 = self.sample3(i - 1);
        let p1 = self.sample3(i);
        let p2 = self.sample3(i + 1);
        let p3 = self.sample3(i + 2);
        let t = s;
        let lerp = |a: [f64; 3], b: [f64; 3], ta: f64, tb: f64| -> [f64; 3] {
            if tb == ta {
                return a;
            }
            let w = (t - ta) / (tb - ta);
            [
                a[0] * (1.0 - w) + b[0] * w,
                a[1] * (1.0 - w) + b[1] * w,
                a[2] * (1.0 - w) + b[2] * w,
            ]
        };
        let a1 = lerp(p0, p1, t0, t1);
        let a2 = lerp(p1, p2, t1, t2);
        let a3 = lerp(p2, p3, t2, t3);
        let b1 = lerp(a1, a2, t0, t2);
        let b2 = lerp(a2, a3, t1, t3);
        lerp(b1, b2, t1, t2)
    }

    /// Position at arc-length parameter s in [0, L] (wrapped for closed curves).
    pub fn point_at(&self, s: f64) -> Vec<f64> {
        self.point_at3(s)[..self.dim].to_vec()
    }

    /// Arc-length centroid of the curve, from the polyline segments.
    pub fn centroid(&self) -> Vec<f64> {
        let n = self.samples.len();
        let mut c = [0.0; 3];
        let seg_count = if self.closed { n } else { n - 1 };
        for i in 0..seg_count {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % n];
            let len = dist3(&a, &b);
            for k in 0..3 {
                c[k] += 0.5 * (a[k] + b[k]) * len;
            }
        }
        c.iter().take(self.dim).map(|v| v / self.length).collect()
    }

    /// Largest sample distance from the centroid.
    pub fn radius(&self) -> f64 {
        let c = pad3(&self.centroid());
        self.pts.iter().map(|p| dist3(p, &c)).fold(0.0, f64::max)
    }

    /// Minimum distance between two curves (over their polyline segments).
    pub fn min_distance_to(&self, other: &Curve) -> f64 {
        let na = self.samples.len();
        let nb = other.samples.len();
        let sa = if self.closed { na } else { na - 1 };
        let sb = if other.closed { nb } else { nb - 1 };
        let mut best = f64::INFINITY;
        for i in 0..sa {
            let a0 = self.pts[i];
            let a1 = self.pts[(i + 1) % na];
            for j in 0..sb {
                let b0 = other.pts[j];
                let b1 = other.pts[(j + 1) % nb];
                // cheap bounding reject against the current best
                let cd = dist3(&a0, &b0);
                let la = dist3(&a0, &a1);
                let lb = dist3(&b0, &b1);
                if cd - la - lb >= best {
                    continue;
                }
                best = best.min(segment_distance3(&a0, &a1, &b0, &b1));
            }
        }
        best
    }

    fn check_simple(&self) -> Result<(), GeometryError> {
        let n = self.samples.len();
        let seg_count = if self.closed { n } else { n - 1 };
        let tol = 1e-9 * self.length;
        for i in 0..seg_count {
            let a0 = self.pts[i];
            let a1 = self.pts[(i + 1) % n];
            let la = dist3(&a0, &a1);
            for j in (i + 2)..seg_count {
                if self.closed && i == 0 && j == seg_count - 1 {
                    continue; // adjacent through the wrap-around
                }
                let b0 = self.pts[j];
                let b1 = self.pts[(j + 1) % n];
                let lb = dist3(&b0, &b1);
                if dist3(&a0, &b0) - la - lb >= tol {
                    continue;
                }
                if segment_distance3(&a0, &a1, &b0, &b1) < tol {
                    return Err(GeometryError::SelfIntersection {
                        s1: self.cum[i],
                        s2: self.cum[j],
                    });
                }
            }
        }
        Ok(())
    }
}

/// Minimum distance between segments [a0,a1] and [b0,b1].
fn segment_distance3(a0: &[f64; 3], a1: &[f64; 3], b0: &[f64; 3], b1: &[f64; 3]) -> f64 {
    let d1 = [a1[0] - a0[0], a1[1] - a0[1], a1[2] - a0[2]];
    let d2 = [b1[0] - b0[0], b1[1] - b0[1], b1[2] - b0[2]];
    let r = [a0[0] - b0[0], a0[1] - b0[1], a0[2] - b0[2]];
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let a = dot(&d1, &d1);
    let e = dot(&d2, &d2);
    let f = dot(&d2, &r);
    let (mut s, mut t);
    if a <= 1e-300 && e <= 1e-300 {
        return dist3(a0, b0);
    }
    if a <= 1e-300 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(&d1, &r);
        if e <= 1e-300 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(&d1, &d2);
            let denom = a * e - b * b;
            s = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
        }
    }
    let pa = [a0[0] + s * d1[0], a0[1] + s * d1[1], a0[2] + s * d1[2]];
    let pb = [b0[0] + t * d2[0], b0[1] + t * d2[1], b0[2] + t * d2[2]];
    dist3(&pa, &pb)
}

// ------------------------------------------------------------------- grids

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagScheme {
    RegularizedLog,
    PlainTensor,
}

/// Quadrature nodes (s, s', w) on a product of curves, with the evaluated
/// curve points cached alongside.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<(f64, f64, f64)>,
    pub scheme: DiagScheme,
    points_a: Vec<[f64; 3]>,
    points_b: Vec<[f64; 3]>,
}

impl QuadratureGrid {
    /// Sum of w * f(|x - y|) over the grid.
    pub fn sum_kernel(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut s = 0.0;
        for (k, (_, _, w)) in self.nodes.iter().enumerate() {
            s += w * f(dist3(&self.points_a[k], &self.points_b[k]));
        }
        s
    }

    pub fn weight_sum(&self) -> f64 {
        self.nodes.iter().map(|n| n.2).sum()
    }
}

/// Tensor Gauss-Legendre grid on c1 x c2 for disjoint curves.
pub fn build_offdiag_grid(
    c1: &Curve,
    c2: &Curve,
    order: usize,
) -> Result<QuadratureGrid, GeometryError> {
    let gap = c1.min_distance_to(c2);
    if gap <= 0.0 {
        return Err(GeometryError::CurveOverlap(gap));
    }
    let rule = quad::gauss_rule(order.max(2));
    let l1 = c1.length();
    let l2 = c2.length();
    let pa: Vec<(f64, [f64; 3])> = rule
        .nodes
        .iter()
        .map(|&x| {
            let s = 0.5 * (x + 1.0) * l1;
            (s, c1.point_at3(s))
        })
        .collect();
    let pb: Vec<(f64, [f64; 3])> = rule
        .nodes
        .iter()
        .map(|&x| {
            let s = 0.5 * (x + 1.0) * l2;
            (s, c2.point_at3(s))
        })
        .collect();
    let cap = pa.len() * pb.len();
    let mut nodes = Vec::with_capacity(cap);
    let mut points_a = Vec::with_capacity(cap);
    let mut points_b = Vec::with_capacity(cap);
    for (i, (s1, p1)) in pa.iter().enumerate() {
        for (j, (s2, p2)) in pb.iter().enumerate() {
            let w = rule.weights[i] * rule.weights[j] * 0.25 * l1 * l2;
            nodes.push((*s1, *s2, w));
            points_a.push(*p1);
            points_b.push(*p2);
        }
    }
    Ok(QuadratureGrid { nodes, scheme: DiagScheme::PlainTensor, points_a, points_b })
}

/// Diagonal grid on c x c in mean/offset coordinates, with a geometrically
/// graded offset rule that resolves the log singularity of the interaction
/// kernels at zero separation.
pub fn build_diag_grid(c: &Curve, order: usize) -> QuadratureGrid {
    let order = order.max(2);
    let l = c.length();
    let graded = quad::graded_rule(0.5 * l, order, 0.15, 1e-12);
    let rule = quad::gauss_rule(order);
    let mut nodes = Vec::new();
    let mut points_a = Vec::new();
    let mut points_b = Vec::new();
    if c.closed() {
        // int int = 2 int_0^L ds int_0^{L/2} du f(s, s+u)
        for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
            let s = 0.5 * (x + 1.0) * l;
            let ws = 0.5 * l * wx;
            let p1 = c.point_at3(s);
            for (&u, &wu) in graded.nodes.iter().zip(&graded.weights) {
                nodes.push((s, (s + u) % l, 2.0 * ws * wu));
                points_a.push(p1);
                points_b.push(c.point_at3(s + u));
            }
        }
    } else {
        // int int = 4 int_0^{L/2} deta int_eta^{L-eta} dxi f(xi-eta, xi+eta)
        for (&eta, &weta) in graded.nodes.iter().zip(&graded.weights) {
            let a = eta;
            let b = l - eta;
            for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                let xi = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let wxi = 0.5 * (b - a) * wx;
                let s1 = xi - eta;
                let s2 = xi + eta;
                nodes.push((s1, s2, 4.0 * weta * wxi));
                points_a.push(c.point_at3(s1));
                points_b.push(c.point_at3(s2));
            }
        }
    }
    // rounding at the smallest graded offsets can collapse a pair onto the
    // same point; nudge apart by the offset so singular kernels stay finite
    for (k, (s1, s2, _)) in nodes.iter().enumerate() {
        if points_a[k] == points_b[k] {
            let du = (s2 - s1).abs().max(1e-14 * l);
            points_b[k][0] += du;
        }
    }
    QuadratureGrid { nodes, scheme: DiagScheme::RegularizedLog, points_a, points_b }
}
