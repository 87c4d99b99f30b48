//! Spectral side of the principal-matrix formalism: eigenvalue flows
//! omega^k(E) of Phi(E), bound-state roots located through the strict
//! monotonicity of every flow branch, bound-state wavefunctions from the
//! free-resolvent kernels, and a contour-integral consistency check of the
//! pole structure behind the wavefunction normalization.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{jacobi_eigen, LinalgError, Matrix, SymEigen};
use crate::models::{ModelError, ModelSpec, PrincipalMatrix};
use crate::specfun::{bessel_k0, SpecFunError};

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("invalid window [{e_min}, {e_max}]: must satisfy e_min < e_max < threshold {threshold}")]
    BadWindow { e_min: f64, e_max: f64, threshold: f64 },
    #[error("wavefunction evaluation at an interaction center")]
    AtCenter,
    #[error("wavefunctions are implemented for the flat point families only, not {family}")]
    UnsupportedFamily { family: &'static str },
    #[error("contour radius {radius} reaches the nearest other root (gap {gap})")]
    ContourOverlap { radius: f64, gap: f64 },
    #[error("no bound state to check against")]
    NoState,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Eigendecomposition entry point with the symmetry contract enforced.
pub fn eig_sym(m: &Matrix) -> Result<SymEigen, SpectraError> {
    Ok(jacobi_eigen(m)?)
}

/// One continuity-tracked eigenvalue branch of Phi(E).
#[derive(Debug, Clone)]
pub struct EigenFlow {
    pub branch: usize,
    /// (E, omega^k(E), eigenvector)
    pub samples: Vec<(f64, f64, Vec<f64>)>,
    /// count of finite-difference slope sign violations (expected zero)
    pub monotonicity_violations: usize,
    /// grid steps where the best eigenvector overlap fell below 0.9
    pub ambiguous_matches: usize,
}

/// Bound state: root of one eigenvalue branch.
#[derive(Debug, Clone)]
pub struct BoundState {
    pub energy: f64,
    pub eigenvector: Vec<f64>,
    /// normalization alpha = (-d omega/dE)^{-1/2} at the root
    pub normalization: f64,
    pub branch: usize,
    /// |omega(E_k)| at the accepted root
    pub omega_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub states: Vec<BoundState>,
    /// branches still negative at the bottom of the window (root below it)
    pub below_window: Vec<usize>,
}

fn sorted_eigenvalue(pm: &PrincipalMatrix, e: f64, k: usize) -> Result<f64, SpectraError> {
    Ok(eig_sym(&pm.eval(e)?)?.values[k])
}

/// Feynman-Hellmann slope <A, dPhi/dE A> of branch k at E.
fn branch_slope(pm: &PrincipalMatrix, e: f64, vec: &[f64]) -> Result<f64, SpectraError> {
    let dphi = pm.derivative(e)?;
    let n = vec.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += vec[i] * dphi.get(i, j) * vec[j];
        }
    }
    Ok(s)
}

/// Finds all bound states with energies in [e_min, e_max_cap].
///
/// Every sorted eigenvalue branch of Phi is strictly decreasing in E, so each
/// one roots at most once; roots are bracketed by the sign change between the
/// window ends and bisected.
pub fn find_bound_states(
    pm: &PrincipalMatrix,
    e_min: f64,
    e_max_cap: f64,
) -> Result<SolveResult, SpectraError> {
    let threshold = pm.threshold();
    if !(e_min < e_max_cap && e_max_cap < threshold) {
        return Err(SpectraError::BadWindow { e_min, e_max: e_max_cap, threshold });
    }
    let n = pm.n();
    let top = eig_sym(&pm.eval(e_max_cap)?)?;
    let bottom = eig_sym(&pm.eval(e_min)?)?;
    let mut states = Vec::new();
    let mut below_window = Vec::new();
    for k in 0..n {
        let omega_top = top.values[k];
        if omega_top > 0.0 {
            continue; // branch positive on the whole window: no root
        }
        if bottom.values[k] < 0.0 {
            below_window.push(k);
            continue;
        }
        // omega(e_min) >= 0 >= omega(e_max_cap): bisect
        let mut lo = e_min;
        let mut hi = e_max_cap;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = sorted_eigenvalue(pm, mid, k)?;
            if v > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let eig = eig_sym(&pm.eval(root)?)?;
        let vec = eig.vectors.column(k);
        let slope = branch_slope(pm, root, &vec)?;
        let normalization = (-slope).max(0.0).sqrt().recip();
        states.push(BoundState {
            energy: root,
            eigenvector: vec,
            normalization,
            branch: k,
            omega_residual: eig.values[k].abs(),
        });
    }
    states.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
    Ok(SolveResult { states, below_window })
}

/// Default search: window top just below the threshold, bottom expanded by
/// doubling until no branch is left cut off (or the family floor is reached).
pub fn solve_auto(pm: &PrincipalMatrix) -> Result<SolveResult, SpectraError> {
    let threshold = pm.threshold();
    let e_max = threshold - 1e-9 * threshold.abs().max(1.0);
    let mut span = 2.0f64;
    for i in 0..pm.n() {
        if let Some(eb) = pm.model().binding_energy(i) {
            span = span.max(2.0 * (threshold - eb).abs());
        }
    }
    let floor = pm.lower_limit();
    for _ in 0..60 {
        let mut e_min = threshold - span;
        let mut capped = false;
        if e_min <= floor {
            e_min = floor + 1e-9 * floor.abs().max(1.0);
            capped = true;
        }
        let r = find_bound_states(pm, e_min, e_max)?;
        if r.below_window.is_empty() || capped {
            return Ok(r);
        }
        span *= 2.0;
    }
    find_bound_states(pm, threshold - span, e_max)
}

/// Eigenvalue flows over an energy grid, continuity-matched between adjacent
/// grid points by eigenvector overlap (threshold 0.9).
pub fn branch_flow(pm: &PrincipalMatrix, grid: &[f64]) -> Result<Vec<EigenFlow>, SpectraError> {
    let threshold = pm.threshold();
    if grid.is_empty() || grid.iter().any(|e| *e >= threshold) {
        return Err(SpectraError::BadWindow {
            e_min: grid.first().copied().unwrap_or(0.0),
            e_max: grid.last().copied().unwrap_or(0.0),
            threshold,
        });
    }
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pm.n();
    let mut flows: Vec<EigenFlow> = (0..n)
        .map(|k| EigenFlow { branch: k, samples: Vec::new(), monotonicity_violations: 0, ambiguous_matches: 0 })
        .collect();
    // branch k follows the eigenvector it had at the first grid point
    let mut prev_vectors: Vec<Vec<f64>> = Vec::new();
    for (step, &e) in grid.iter().enumerate() {
        let eig = eig_sym(&pm.eval(e)?)?;
        let mut assignment: Vec<usize> = (0..n).collect();
        if step > 0 {
            let mut used = vec![false; n];
            for (k, flow) in flows.iter_mut().enumerate() {
                let prev = &prev_vectors[k];
                let mut best = (0usize, -1.0f64);
                for l in 0..n {
                    if used[l] {
                        continue;
                    }
                    let overlap: f64 =
                        (0..n).map(|i| prev[i] * eig.vectors.get(i, l)).sum::<f64>().abs();
                    if overlap > best.1 {
                        best = (l, overlap);
                    }
                }
                if best.1 < 0.9 {
                    flow.ambiguous_matches += 1;
                }
                used[best.0] = true;
                assignment[k] = best.0;
            }
        }
        let mut new_prev = vec![Vec::new(); n];
        for k in 0..n {
            let l = assignment[k];
            let vec = eig.vectors.column(l);
            let omega = eig.values[l];
            if let Some((e_last, om_last, _)) = flows[k].samples.last() {
                if (omega - om_last) / (e - e_last) >= 0.0 {
                    flows[k].monotonicity_violations += 1;
                }
            }
            flows[k].samples.push((e, omega, vec.clone()));
            new_prev[k] = vec;
        }
        prev_vectors = new_prev;
    }
    Ok(flows)
}

/// Free-resolvent kernel superposition psi_k(x) for the flat point families.
pub fn wavefunction(
    state: &BoundState,
    model: &ModelSpec,
    x: &[f64],
) -> Result<f64, SpectraError> {
    let nu = (-state.energy).sqrt();
    let alpha = state.normalization;
    match model {
        ModelSpec::Point1d { centers, .. } => {
            let mut s = 0.0;
            for (i, a) in centers.iter().enumerate() {
                s += state.eigenvector[i] * (-nu * (x[0] - a).abs()).exp() / (2.0 * nu);
            }
            Ok(alpha * s)
        }
        ModelSpec::Point2d { centers, .. } => {
            let mut s = 0.0;
            for (i, a) in centers.iter().enumerate() {
                let r = crate::geometry::dist(x, a);
                if r < 1e-12 {
                    return Err(SpectraError::AtCenter);
                }
                s += state.eigenvector[i] * bessel_k0(nu * r)?
                    / (2.0 * std::f64::consts::PI);
            }
            Ok(alpha * s)
        }
        ModelSpec::Point3d { centers, .. } => {
            let mut s = 0.0;
            for (i, a) in centers.iter().enumerate() {
                let r = crate::geometry::dist(x, a);
                if r < 1e-12 {
                    return Err(SpectraError::AtCenter);
                }
                s += state.eigenvector[i] * (-nu * r).exp()
                    / (4.0 * std::f64::consts::PI * r);
            }
            Ok(alpha * s)
        }
        other => Err(SpectraError::UnsupportedFamily { family: other.family_name() }),
    }
}

/// Result of the contour check around one bound-state pole.
#[derive(Debug, Clone)]
pub struct RieszCheck {
    /// (1/2 pi i) contour integral of 1/omega at the base radius
    pub contour: f64,
    /// 1/omega'(E_k) from the Feynman-Hellmann derivative
    pub residue: f64,
    /// |contour - residue|
    pub residual: f64,
    /// |contour(2r) - contour(r)|
    pub radius_invariance: f64,
    pub radius: f64,
}

/// Chebyshev fit of a real function on [c - h, c + h].
struct ChebFit {
    center: f64,
    half: f64,
    coeffs: Vec<f64>,
}

impl ChebFit {
    fn build(f: &mut dyn FnMut(f64) -> f64, center: f64, half: f64, degree: usize) -> Self {
        let n = degree + 1;
        let nodes: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * n as f64)).cos())
            .collect();
        let vals: Vec<f64> = nodes.iter().map(|t| f(center + half * t)).collect();
        let mut coeffs = vec![0.0; n];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, v) in vals.iter().enumerate() {
                s += v
                    * (std::f64::consts::PI * j as f64 * (2.0 * k as f64 + 1.0)
                        / (2.0 * n as f64))
                        .cos();
            }
            *c = if j == 0 { s / n as f64 } else { 2.0 * s / n as f64 };
        }
        Self { center, half, coeffs }
    }

    fn eval_complex(&self, z: Complex64) -> Complex64 {
        let t = (z - self.center) / self.half;
        let mut b0 = Complex64::new(0.0, 0.0);
        let mut b1 = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().skip(1).rev() {
            let b2 = b1;
            b1 = b0;
            b0 = 2.0 * t * b1 - b2 + c;
        }
        t * b0 - b1 + self.coeffs[0]
    }
}

/// (1/2 pi i) oint dz / f(z) on a circle of the given radius around e0, with f
/// continued off the real axis by a local Chebyshev fit of the real samples.
pub fn contour_residue_of(
    f: &mut dyn FnMut(f64) -> f64,
    e0: f64,
    radius: f64,
) -> (f64, f64) {
    let fit = ChebFit::build(f, e0, 3.0 * radius, 16);
    let integrate = |r: f64| {
        const M: usize = 256;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..M {
            let th = 2.0 * std::f64::consts::PI * j as f64 / M as f64;
            let w = Complex64::from_polar(r, th);
            acc += w / fit.eval_complex(Complex64::new(e0, 0.0) + w);
        }
        acc / M as f64
    };
    let base = integrate(radius);
    let double = integrate(2.0 * radius);
    (base.re, (double - base).norm())
}

/// Validates the pole factor of the spectral resolution around an isolated
/// bound state: the contour integral of 1/omega^k must reproduce the residue
/// 1/omega^k'(E_k).
pub fn riesz_projection_check(
    pm: &PrincipalMatrix,
    state: &BoundState,
    radius: Option<f64>,
) -> Result<RieszCheck, SpectraError> {
    // gap to the nearest other root
    let all = solve_auto(pm)?;
    let gap = all
        .states
        .iter()
        .filter(|s| (s.energy - state.energy).abs() > 1e-10 * state.energy.abs().max(1.0))
        .map(|s| (s.energy - state.energy).abs())
        .fold(f64::INFINITY, f64::min);
    let headroom = (pm.threshold() - state.energy).abs() / 4.0;
    let r_default = (gap / 4.0).min(headroom).min(0.1 * state.energy.abs().max(1.0));
    let r = radius.unwrap_or(r_default);
    if 2.0 * r >= gap {
        return Err(SpectraError::ContourOverlap { radius: r, gap });
    }
    let k = state.branch;
    let target = state.eigenvector.clone();
    let n = pm.n();
    let mut omega = |e: f64| -> f64 {
        // pick the eigenvalue whose eigenvector follows the state's branch
        let eig = eig_sym(&pm.eval(e).unwrap()).unwrap();
        let mut best = (k, -1.0);
        for l in 0..n {
            let ov: f64 = (0..n).map(|i| target[i] * eig.vectors.get(i, l)).sum::<f64>().abs();
            if ov > best.1 {
                best = (l, ov);
            }
        }
        eig.values[best.0]
    };
    let (contour, radius_invariance) = contour_residue_of(&mut omega, state.energy, r);
    let slope = branch_slope(pm, state.energy, &state.eigenvector)?;
    let residue = 1.0 / slope;
    Ok(RieszCheck {
        contour,
        residue,
        residual: (contour - residue).abs(),
        radius_invariance,
        radius: r,
    })
}
