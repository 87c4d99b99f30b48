//! Model catalog: every supported singular-interaction family builds the same
//! object, a symmetric N x N principal matrix Phi(E) defined for real E below
//! the free continuum, together with its E-derivative, decay bounds on the
//! off-diagonal entries, and log-scaled off-diagonal magnitudes for the
//! deep-tunneling regime where the entries themselves underflow.

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{
    build_diag_grid, build_offdiag_grid, dist, geodesic_distance, Curve, GeometryError,
    HyperbolicPoint, QuadratureGrid,
};
use crate::linalg::Matrix;
use crate::quad::{self, QuadError};
use crate::specfun::{
    bessel_k0, bessel_k0_scaled, bessel_k1, digamma, legendre_q_dv, legendre_q_log,
    legendre_q_with, ln_gamma, trigamma, Accuracy, SpecFunError,
};

pub const DEFAULT_QUAD_ORDER: usize = 24;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid {family} model: {what}")]
    Invalid { family: &'static str, what: String },
    #[error("spectral parameter E = {e} must lie strictly below the continuum threshold {threshold}")]
    AboveThreshold { e: f64, threshold: f64 },
    #[error("spectral parameter E = {e} is below the validity floor {floor} of this family")]
    BelowValidityFloor { e: f64, floor: f64 },
    #[error("centers {i} and {j} coincide")]
    CoincidingCenters { i: usize, j: usize },
    #[error("degenerate parameters: {0}; use the degenerate solver path")]
    Degenerate(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Hyperbolic supports may be given as hyperboloid points or directly as the
/// geodesic distance matrix (the principal matrix needs nothing else).
#[derive(Debug, Clone)]
pub enum HyperbolicSupport {
    Points(Vec<HyperbolicPoint>),
    Distances(Vec<Vec<f64>>),
}

impl HyperbolicSupport {
    fn len(&self) -> usize {
        match self {
            Self::Points(p) => p.len(),
            Self::Distances(d) => d.len(),
        }
    }
}

/// Complete description of one singular-interaction system.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    /// N attractive point deltas on the line with bare couplings lambda_i.
    Point1d { centers: Vec<f64>, couplings: Vec<f64> },
    /// Renormalized point deltas in the plane, parametrized by per-center
    /// binding energies E_B^i < 0.
    Point2d { centers: Vec<Vec<f64>>, binding_energies: Vec<f64> },
    /// Renormalized point deltas in space, E_B^i < 0.
    Point3d { centers: Vec<Vec<f64>>, binding_energies: Vec<f64> },
    /// Point deltas on the hyperbolic plane of curvature -kappa^2, E_B^i < kappa^2/4.
    PointH2 { support: HyperbolicSupport, binding_energies: Vec<f64>, kappa: f64 },
    /// Point deltas on hyperbolic 3-space, E_B^i < kappa^2.
    PointH3 { support: HyperbolicSupport, binding_energies: Vec<f64>, kappa: f64 },
    /// Semi-relativistic (Salpeter) kinetic term on the line, -m < E_B^i < m.
    Salpeter1d { centers: Vec<f64>, binding_energies: Vec<f64>, mass: f64 },
    /// Field-theoretic relativistic point model in the plane, -m < E_B^i < m.
    Relativistic2d { centers: Vec<Vec<f64>>, binding_energies: Vec<f64>, mass: f64 },
    /// Deltas supported by disjoint simple curves in the plane, bare couplings.
    Curve2d { curves: Vec<Curve>, couplings: Vec<f64> },
    /// Renormalized deltas supported by curves in space, E_B^i < 0.
    Curve3d { curves: Vec<Curve>, binding_energies: Vec<f64> },
}

impl ModelSpec {
    pub fn n(&self) -> usize {
        match self {
            Self::Point1d { centers, .. } | Self::Salpeter1d { centers, .. } => centers.len(),
            Self::Point2d { centers, .. }
            | Self::Point3d { centers, .. }
            | Self::Relativistic2d { centers, .. } => centers.len(),
            Self::PointH2 { support, .. } | Self::PointH3 { support, .. } => support.len(),
            Self::Curve2d { curves, .. } | Self::Curve3d { curves, .. } => curves.len(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Point1d { .. } => "point_1d",
            Self::Point2d { .. } => "point_2d",
            Self::Point3d { .. } => "point_3d",
            Self::PointH2 { .. } => "point_h2",
            Self::PointH3 { .. } => "point_h3",
            Self::Salpeter1d { .. } => "salpeter_1d",
            Self::Relativistic2d { .. } => "relativistic_2d",
            Self::Curve2d { .. } => "curve_2d",
            Self::Curve3d { .. } => "curve_3d",
        }
    }

    /// Bottom of the free continuous spectrum; Phi is defined for E below it.
    pub fn threshold(&self) -> f64 {
        match self {
            Self::Point1d { .. }
            | Self::Point2d { .. }
            | Self::Point3d { .. }
            | Self::Curve2d { .. }
            | Self::Curve3d { .. } => 0.0,
            Self::PointH2 { kappa, .. } => kappa * kappa / 4.0,
            Self::PointH3 { kappa, .. } => kappa * kappa,
            Self::Salpeter1d { mass, .. } | Self::Relativistic2d { mass, .. } => *mass,
        }
    }

    /// Lower end of the admissible evaluation window (-m for the relativistic
    /// families, unbounded otherwise).
    pub fn lower_limit(&self) -> f64 {
        match self {
            Self::Salpeter1d { mass, .. } | Self::Relativistic2d { mass, .. } => -mass,
            _ => f64::NEG_INFINITY,
        }
    }

    fn couplings_or_bindings(&self) -> &[f64] {
        match self {
            Self::Point1d { couplings, .. } | Self::Curve2d { couplings, .. } => couplings,
            Self::Point2d { binding_energies, .. }
            | Self::Point3d { binding_energies, .. }
            | Self::PointH2 { binding_energies, .. }
            | Self::PointH3 { binding_energies, .. }
            | Self::Salpeter1d { binding_energies, .. }
            | Self::Relativistic2d { binding_energies, .. }
            | Self::Curve3d { binding_energies, .. } => binding_energies,
        }
    }

    /// Binding energy of support i in isolation, when the family prescribes one.
    pub fn binding_energy(&self, i: usize) -> Option<f64> {
        match self {
            Self::Point1d { couplings, .. } => Some(-couplings[i] * couplings[i] / 4.0),
            Self::Curve2d { .. } => None,
            _ => Some(self.couplings_or_bindings()[i]),
        }
    }

    pub fn validate(&self, allow_degenerate: bool) -> Result<(), ModelError> {
        let fam = self.family_name();
        let n = self.n();
        let invalid = |what: String| ModelError::Invalid { family: fam, what };
        if n == 0 {
            return Err(invalid("needs at least one interaction support".into()));
        }
        let params = self.couplings_or_bindings();
        if params.len() != n {
            return Err(invalid(format!(
                "{} parameters for {} supports",
                params.len(),
                n
            )));
        }
        // family parameter windows
        match self {
            Self::Point1d { couplings, .. } | Self::Curve2d { couplings, .. } => {
                if let Some(l) = couplings.iter().find(|l| !(**l > 0.0)) {
                    return Err(invalid(format!("coupling {l} must be positive")));
                }
            }
            Self::Point2d { binding_energies, .. }
            | Self::Point3d { binding_energies, .. }
            | Self::Curve3d { binding_energies, .. } => {
                if let Some(e) = binding_energies.iter().find(|e| !(**e < 0.0)) {
                    return Err(invalid(format!(
                        "binding energy {e} must lie below the continuum threshold 0"
                    )));
                }
            }
            Self::PointH2 { binding_energies, kappa, .. } => {
                if !(*kappa > 0.0) {
                    return Err(invalid(format!("curvature kappa {kappa} must be positive")));
                }
                let th = kappa * kappa / 4.0;
                if let Some(e) = binding_energies.iter().find(|e| !(**e < th)) {
                    return Err(invalid(format!(
                        "binding energy {e} must lie below kappa^2/4 = {th}"
                    )));
                }
            }
            Self::PointH3 { binding_energies, kappa, .. } => {
                if !(*kappa > 0.0) {
                    return Err(invalid(format!("curvature kappa {kappa} must be positive")));
                }
                let th = kappa * kappa;
                if let Some(e) = binding_energies.iter().find(|e| !(**e < th)) {
                    return Err(invalid(format!(
                        "binding energy {e} must lie below kappa^2 = {th}"
                    )));
                }
            }
            Self::Salpeter1d { binding_energies, mass, .. }
            | Self::Relativistic2d { binding_energies, mass, .. } => {
                if !(*mass > 0.0) {
                    return Err(invalid(format!("mass {mass} must be positive")));
                }
                if let Some(e) =
                    binding_energies.iter().find(|e| !(**e < *mass && **e > -*mass))
                {
                    return Err(invalid(format!(
                        "binding energy {e} must lie in (-m, m) = ({}, {})",
                        -mass, mass
                    )));
                }
            }
        }
        // geometry: distinct centers / disjoint curves
        match self {
            Self::Curve2d { curves, .. } | Self::Curve3d { curves, .. } => {
                let want_dim = if matches!(self, Self::Curve2d { .. }) { 2 } else { 3 };
                for (i, c) in curves.iter().enumerate() {
                    if c.dim() != want_dim {
                        return Err(invalid(format!(
                            "curve {i} has dimension {} (need {want_dim})",
                            c.dim()
                        )));
                    }
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        let gap = curves[i].min_distance_to(&curves[j]);
                        if gap <= 0.0 {
                            return Err(GeometryError::CurveOverlap(gap).into());
                        }
                    }
                }
            }
            _ => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        if self.pair_distance(i, j)? <= 0.0 {
                            return Err(ModelError::CoincidingCenters { i, j });
                        }
                    }
                }
            }
        }
        if let Self::PointH2 { support: HyperbolicSupport::Distances(d), .. }
        | Self::PointH3 { support: HyperbolicSupport::Distances(d), .. } = self
        {
            if d.len() != n || d.iter().any(|row| row.len() != n) {
                return Err(invalid("distance matrix must be square of size N".into()));
            }
            for i in 0..n {
                if d[i][i] != 0.0 {
                    return Err(invalid(format!("distance matrix diagonal entry {i} not zero")));
                }
                for j in 0..n {
                    if (d[i][j] - d[j][i]).abs() > 1e-12 * d[i][j].abs().max(1.0) {
                        return Err(invalid("distance matrix must be symmetric".into()));
                    }
                }
            }
        }
        if !allow_degenerate {
            for i in 0..n {
                for j in (i + 1)..n {
                    if params[i] == params[j] {
                        return Err(ModelError::Degenerate(format!(
                            "supports {i} and {j} share the parameter value {}",
                            params[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Distance between point supports i and j (geodesic for the hyperbolic
    /// families). Errors for curve families, which carry grids instead.
    pub fn pair_distance(&self, i: usize, j: usize) -> Result<f64, ModelError> {
        match self {
            Self::Point1d { centers, .. } | Self::Salpeter1d { centers, .. } => {
                Ok((centers[i] - centers[j]).abs())
            }
            Self::Point2d { centers, .. }
            | Self::Point3d { centers, .. }
            | Self::Relativistic2d { centers, .. } => Ok(dist(&centers[i], &centers[j])),
            Self::PointH2 { support, .. } | Self::PointH3 { support, .. } => match support {
                HyperbolicSupport::Points(p) => Ok(geodesic_distance(&p[i], &p[j])?),
                HyperbolicSupport::Distances(d) => Ok(d[i][j]),
            },
            Self::Curve2d { .. } | Self::Curve3d { .. } => Err(ModelError::Invalid {
                family: self.family_name(),
                what: "curve families have no point-pair distances".into(),
            }),
        }
    }
}

// ---------------------------------------------------------- Salpeter pieces

/// The paper's phi(z) building block of the Salpeter diagonal.
pub fn salpeter_varphi(m: f64, z: f64) -> f64 {
    let b = (m * m - z * z).sqrt();
    z * (std::f64::consts::FRAC_PI_2 + (z / m).asin()) / (std::f64::consts::PI * b)
}

pub fn salpeter_varphi_prime(m: f64, z: f64) -> f64 {
    let b2 = m * m - z * z;
    let b = b2.sqrt();
    (z / b2 + (std::f64::consts::FRAC_PI_2 + (z / m).asin()) * m * m / (b2 * b))
        / std::f64::consts::PI
}

/// Off-diagonal Salpeter entry: the spectral integral, plus the real
/// exponentially decaying continuation term on the 0 < E < m window.
pub fn salpeter_offdiag(m: f64, e: f64, d: f64) -> Result<f64, ModelError> {
    let (ln_mag, _) = salpeter_offdiag_log(m, e, d)?;
    Ok(-ln_mag.exp())
}

/// ln |Phi_ij| and the integral's own ln-magnitude for the Salpeter family.
fn salpeter_offdiag_log(m: f64, e: f64, d: f64) -> Result<(f64, f64), ModelError> {
    // I = (1/pi) int_m^inf e^{-mu d} sqrt(mu^2-m^2)/(mu^2-m^2+E^2) dmu,
    // substituted mu = m + u^2 to remove the sqrt endpoint:
    let u_max = (760.0 / d).sqrt();
    let integrand = move |u: f64| {
        let a = u * u * (u * u + 2.0 * m); // mu^2 - m^2
        2.0 * u * u * (u * u + 2.0 * m).sqrt() * (-u * u * d).exp() / (a + e * e)
    };
    let scaled = quad::adaptive(&integrand, 0.0, u_max, 1e-14, 1e-11)?;
    let ln_integral = -m * d + (scaled / std::f64::consts::PI).ln();
    let ln_mag = if e > 0.0 {
        let beta = (m * m - e * e).sqrt();
        let ln_extra = (e / beta).ln() - beta * d;
        // both contributions have the same (negative) sign; add magnitudes
        log_sum_exp(ln_integral, ln_extra)
    } else {
        ln_integral
    };
    Ok((ln_mag, ln_integral))
}

/// Leading large-(m d) form of the Salpeter off-diagonal integral magnitude.
pub fn salpeter_offdiag_asymptotic(m: f64, e_b: f64, d: f64) -> f64 {
    m * m * (-m * d).exp() / ((TWO_PI).sqrt() * e_b * e_b * (m * d).powf(1.5))
}

// ------------------------------------------------------ relativistic pieces

/// Off-diagonal entry of the field-theoretic relativistic planar model.
pub fn rel2d_offdiag(m: f64, e: f64, d: f64) -> Result<f64, ModelError> {
    Ok(-rel2d_offdiag_log(m, e, d)?.exp())
}

fn rel2d_offdiag_log(m: f64, e: f64, d: f64) -> Result<f64, ModelError> {
    // g(s) = m sqrt(s^2+1) - E s has minimum g_min = sqrt(m^2-E^2) at
    // s = E/sqrt(m^2-E^2) when E > 0, and g_min = m at s = 0 otherwise.
    let g_min = if e > 0.0 { (m * m - e * e).sqrt() } else { m };
    let f = move |s: f64| {
        let root = (s * s + 1.0).sqrt();
        (-d * (m * root - e * s - g_min)).exp() / root
    };
    let scaled = quad::adaptive_semi_infinite(&f, 0.0, 1e-14, 1e-11)?;
    Ok(-d * g_min + (scaled / TWO_PI).ln())
}

/// Saddle-point estimate of the relativistic off-diagonal entry.
pub fn rel2d_offdiag_saddle(m: f64, e: f64, d: f64) -> f64 {
    let beta = (m * m - e * e).sqrt();
    -(-d * beta).exp() / (TWO_PI * d * beta).sqrt()
}

#[inline]
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}

// ----------------------------------------------------------- curve kernels

/// (e^{-mu r} - e^{-nu r})/r, continuous at r = 0.
#[inline]
fn difference_kernel(mu: f64, nu: f64, r: f64) -> f64 {
    let x = (nu - mu) * r;
    if x.abs() < 1e-12 {
        (nu - mu) * (-nu * r).exp()
    } else {
        (-nu * r).exp() * x.exp_m1() / r
    }
}

// --------------------------------------------------------- PrincipalMatrix

/// Symmetric matrix-valued function E -> Phi(E) for one model, with its
/// quadrature grids built once at construction.
pub struct PrincipalMatrix<'a> {
    model: &'a ModelSpec,
    threshold: f64,
    lower: f64,
    dists: Vec<Vec<f64>>,
    diag_grids: Vec<QuadratureGrid>,
    offdiag_grids: HashMap<(usize, usize), QuadratureGrid>,
    curve_min_dists: Vec<Vec<f64>>,
    quad_order: usize,
}

impl<'a> PrincipalMatrix<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self, ModelError> {
        Self::with_quad_order(model, DEFAULT_QUAD_ORDER)
    }

    pub fn with_quad_order(model: &'a ModelSpec, quad_order: usize) -> Result<Self, ModelError> {
        model.validate(true)?;
        let n = model.n();
        let mut dists = vec![vec![0.0; n]; n];
        let mut diag_grids = Vec::new();
        let mut offdiag_grids = HashMap::new();
        let mut curve_min_dists = vec![vec![0.0; n]; n];
        match model {
            ModelSpec::Curve2d { curves, .. } | ModelSpec::Curve3d { curves, .. } => {
                for c in curves {
                    diag_grids.push(build_diag_grid(c, quad_order));
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        offdiag_grids
                            .insert((i, j), build_offdiag_grid(&curves[i], &curves[j], quad_order)?);
                        let gap = curves[i].min_distance_to(&curves[j]);
                        curve_min_dists[i][j] = gap;
                        curve_min_dists[j][i] = gap;
                    }
                }
            }
            _ => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d = model.pair_distance(i, j)?;
                        dists[i][j] = d;
                        dists[j][i] = d;
                    }
                }
            }
        }
        Ok(Self {
            model,
            threshold: model.threshold(),
            lower: model.lower_limit(),
            dists,
            diag_grids,
            offdiag_grids,
            curve_min_dists,
            quad_order,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn lower_limit(&self) -> f64 {
        self.lower
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    /// Minimum pairwise separation between supports.
    pub fn min_separation(&self) -> f64 {
        let n = self.n();
        let mat = if self.offdiag_grids.is_empty() { &self.dists } else { &self.curve_min_dists };
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.min(mat[i][j]);
            }
        }
        best
    }

    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        if self.offdiag_grids.is_empty() {
            self.dists[i][j]
        } else {
            self.curve_min_dists[i][j]
        }
    }

    fn check_window(&self, e: f64) -> Result<(), ModelError> {
        if !(e < self.threshold) {
            return Err(ModelError::AboveThreshold { e, threshold: self.threshold });
        }
        if e <= self.lower {
            return Err(ModelError::BelowValidityFloor { e, floor: self.lower });
        }
        Ok(())
    }

    /// Phi(E); symmetric by construction, all off-diagonal entries negative.
    pub fn eval(&self, e: f64) -> Result<Matrix, ModelError> {
        self.check_window(e)?;
        let n = self.n();
        let mut phi = Matrix::zeros(n);
        match self.model {
            ModelSpec::Point1d { couplings, .. } => {
                let nu = (-e).sqrt();
                for i in 0..n {
                    phi.set(i, i, 1.0 / couplings[i] - 1.0 / (2.0 * nu));
                    for j in (i + 1)..n {
                        let v = -(-nu * self.dists[i][j]).exp() / (2.0 * nu);
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Point2d { binding_energies, .. } => {
                let nu = (-e).sqrt();
                for i in 0..n {
                    phi.set(i, i, (nu / (-binding_energies[i]).sqrt()).ln() / TWO_PI);
                    for j in (i + 1)..n {
                        let v = -bessel_k0(nu * self.dists[i][j])? / TWO_PI;
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Point3d { binding_energies, .. } => {
                let nu = (-e).sqrt();
                for i in 0..n {
                    phi.set(i, i, (nu - (-binding_energies[i]).sqrt()) / FOUR_PI);
                    for j in (i + 1)..n {
                        let d = self.dists[i][j];
                        let v = -(-nu * d).exp() / (FOUR_PI * d);
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::PointH2 { binding_energies, kappa, .. } => {
                let k2 = kappa * kappa;
                let t = (0.25 - e / k2).sqrt();
                for i in 0..n {
                    let tb = (0.25 - binding_energies[i] / k2).sqrt();
                    phi.set(i, i, (digamma(0.5 + t)? - digamma(0.5 + tb)?) / TWO_PI);
                    for j in (i + 1)..n {
                        let ca = (kappa * self.dists[i][j]).cosh();
                        let q = legendre_q_with(0.5 + t, ca, 100_000, Accuracy::default())?;
                        let v = -q / TWO_PI;
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::PointH3 { binding_energies, kappa, .. } => {
                let k2 = kappa * kappa;
                let s = (k2 - e).sqrt();
                for i in 0..n {
                    let sb = (k2 - binding_energies[i]).sqrt();
                    phi.set(i, i, (s - sb) / FOUR_PI);
                    for j in (i + 1)..n {
                        let d = self.dists[i][j];
                        let v = -kappa * (-d * s).exp() / (FOUR_PI * (kappa * d).sinh());
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Salpeter1d { binding_energies, mass, .. } => {
                for i in 0..n {
                    phi.set(
                        i,
                        i,
                        salpeter_varphi(*mass, binding_energies[i]) - salpeter_varphi(*mass, e),
                    );
                    for j in (i + 1)..n {
                        let v = salpeter_offdiag(*mass, e, self.dists[i][j])?;
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Relativistic2d { binding_energies, mass, .. } => {
                for i in 0..n {
                    phi.set(i, i, ((mass - e) / (mass - binding_energies[i])).ln() / TWO_PI);
                    for j in (i + 1)..n {
                        let v = rel2d_offdiag(*mass, e, self.dists[i][j])?;
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Curve2d { curves, couplings } => {
                let nu = (-e).sqrt();
                for i in 0..n {
                    let li = curves[i].length();
                    let integral =
                        self.diag_grids[i].sum_kernel(|r| bessel_k0(nu * r).unwrap_or(f64::MAX));
                    phi.set(i, i, 1.0 / couplings[i] - integral / (FOUR_PI * li));
                    for j in (i + 1)..n {
                        let lj = curves[j].length();
                        let integral = self.offdiag_grids[&(i, j)]
                            .sum_kernel(|r| bessel_k0(nu * r).unwrap_or(f64::MAX));
                        let v = -integral / (FOUR_PI * (li * lj).sqrt());
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Curve3d { curves, binding_energies } => {
                let nu = (-e).sqrt();
                for i in 0..n {
                    let li = curves[i].length();
                    let mu = (-binding_energies[i]).sqrt();
                    let integral =
                        self.diag_grids[i].sum_kernel(|r| difference_kernel(mu, nu, r));
                    phi.set(i, i, integral / (FOUR_PI * li));
                    for j in (i + 1)..n {
                        let lj = curves[j].length();
                        let integral = self.offdiag_grids[&(i, j)]
                            .sum_kernel(|r| (-nu * r).exp() / r);
                        let v = -integral / (FOUR_PI * (li * lj).sqrt());
                        phi.set(i, j, v);
                        phi.set(j, i, v);
                    }
                }
            }
        }
        Ok(phi)
    }

    /// Analytic dPhi/dE.
    pub fn derivative(&self, e: f64) -> Result<Matrix, ModelError> {
        self.check_window(e)?;
        let n = self.n();
        let mut dphi = Matrix::zeros(n);
        match self.model {
            ModelSpec::Point1d { .. } => {
                let nu = (-e).sqrt();
                let diag = -1.0 / (4.0 * nu * nu * nu);
                for i in 0..n {
                    dphi.set(i, i, diag);
                    for j in (i + 1)..n {
                        let d = self.dists[i][j];
                        let v = -(-nu * d).exp() * (1.0 + nu * d) / (4.0 * nu * nu * nu);
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Point2d { .. } => {
                let nu = (-e).sqrt();
                let diag = 1.0 / (FOUR_PI * e);
                for i in 0..n {
                    dphi.set(i, i, diag);
                    for j in (i + 1)..n {
                        let d = self.dists[i][j];
                        let v = -d * bessel_k1(nu * d)? / (FOUR_PI * nu);
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Point3d { .. } => {
                let nu = (-e).sqrt();
                let diag = -1.0 / (8.0 * std::f64::consts::PI * nu);
                for i in 0..n {
                    dphi.set(i, i, diag);
                    for j in (i + 1)..n {
                        let d = self.dists[i][j];
                        let v = -(-nu * d).exp() / (8.0 * std::f64::consts::PI * nu);
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
            ModelSpec::PointH2 { kappa, .. } => {
                let k2 = kappa * kappa;
                let t = (0.25 - e / k2).sqrt();
                let dt_de = -1.0 / (2.0 * k2 * t);
                let diag = trigamma(0.5 + t)? * dt_de / TWO_PI;
                for i in 0..n {
                    dphi.set(i, i, diag);
                    for j in (i + 1)..n {
                        let ca = (kappa * self.dists[i][j]).cosh();
                        let dq = legendre_q_dv(0.5 + t, ca, 100_000)?;
                        let v = -dq * dt_de / TWO_PI;
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
            ModelSpec::PointH3 { kappa, .. } => {
                let k2 = kappa * kappa;
                let s = (k2 - e).sqrt();
                let ds_de = -1.0 / (2.0 * s);
                let diag = ds_de / FOUR_PI;
                for i in 0..n {
                    dphi.set(i, i, diag);
                    for j in (i + 1)..n {
                        let d = self.dists[i][j];
                        let v = kappa * d * (-d * s).exp() / (FOUR_PI * (kappa * d).sinh())
                            * (-ds_de);
                        // d/dE[-k e^{-d s}/..] = k d e^{-d s} ds/dE /.. ; ds/dE < 0
                        dphi.set(i, j, -v);
                        dphi.set(j, i, -v);
                    }
                }
            }
            ModelSpec::Salpeter1d { mass, .. } => {
                let m = *mass;
                let diag = -salpeter_varphi_prime(m, e);
                for i in 0..n {
                    dphi.set(i, i, diag);
                    for j in (i + 1)..n {
                        let v = self.salpeter_offdiag_derivative(m, e, self.dists[i][j])?;
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Relativistic2d { mass, .. } => {
                let m = *mass;
                let diag = -1.0 / (TWO_PI * (m - e));
                for i in 0..n {
                    dphi.set(i, i, diag);
                    for j in (i + 1)..n {
                        let d = self.dists[i][j];
                        // differentiate under the integral: factor d*s
                        let g_min = if e > 0.0 { (m * m - e * e).sqrt() } else { m };
                        let f = move |s: f64| {
                            let root = (s * s + 1.0).sqrt();
                            d * s * (-d * (m * root - e * s - g_min)).exp() / root
                        };
                        let scaled = quad::adaptive_semi_infinite(&f, 0.0, 1e-14, 1e-11)?;
                        let v = -(-d * g_min).exp() * scaled / TWO_PI;
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Curve2d { curves, .. } => {
                let nu = (-e).sqrt();
                for i in 0..n {
                    let li = curves[i].length();
                    // dK0(nu r)/dE = r K1(nu r)/(2 nu); r K1 is bounded at r=0
                    let integral = self.diag_grids[i]
                        .sum_kernel(|r| r * bessel_k1(nu * r).unwrap_or(f64::MAX));
                    dphi.set(i, i, -integral / (8.0 * std::f64::consts::PI * nu * li));
                    for j in (i + 1)..n {
                        let lj = curves[j].length();
                        let integral = self.offdiag_grids[&(i, j)]
                            .sum_kernel(|r| r * bessel_k1(nu * r).unwrap_or(f64::MAX));
                        let v = -integral
                            / (8.0 * std::f64::consts::PI * nu * (li * lj).sqrt());
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
            ModelSpec::Curve3d { curves, .. } => {
                let nu = (-e).sqrt();
                for i in 0..n {
                    let li = curves[i].length();
                    // d/dE[(e^{-mu r}-e^{-nu r})/r] = -e^{-nu r}/(2 nu)
                    let integral = self.diag_grids[i].sum_kernel(|r| (-nu * r).exp());
                    dphi.set(i, i, -integral / (8.0 * std::f64::consts::PI * nu * li));
                    for j in (i + 1)..n {
                        let lj = curves[j].length();
                        let integral = self.offdiag_grids[&(i, j)].sum_kernel(|r| (-nu * r).exp());
                        let v = -integral
                            / (8.0 * std::f64::consts::PI * nu * (li * lj).sqrt());
                        dphi.set(i, j, v);
                        dphi.set(j, i, v);
                    }
                }
            }
        }
        Ok(dphi)
    }

    fn salpeter_offdiag_derivative(&self, m: f64, e: f64, d: f64) -> Result<f64, ModelError> {
        // Phi_od = -(I + extra); dI/dE = -(2E/pi) int e^{-mu d} sqrt/(...)^2
        let u_max = (760.0 / d).sqrt();
        let integrand = move |u: f64| {
            let a = u * u * (u * u + 2.0 * m);
            2.0 * u * u * (u * u + 2.0 * m).sqrt() * (-u * u * d).exp()
                / ((a + e * e) * (a + e * e))
        };
        let scaled = quad::adaptive(&integrand, 0.0, u_max, 1e-14, 1e-11)?;
        let di_de = -(2.0 * e / std::f64::consts::PI) * (-m * d).exp() * scaled;
        let dextra_de = if e > 0.0 {
            let b2 = m * m - e * e;
            let b = b2.sqrt();
            (-b * d).exp() * (1.0 / b + e * e / (b2 * b) + e * e * d / b2)
        } else {
            0.0
        };
        Ok(-di_de - dextra_de)
    }

    /// Richardson-extrapolated central difference of Phi; the independent
    /// cross-check of `derivative`.
    pub fn derivative_fd(&self, e: f64) -> Result<Matrix, ModelError> {
        self.check_window(e)?;
        let h = 1e-6 * e.abs().max(1.0);
        let h = h.min(0.25 * (self.threshold - e)).min(
            if self.lower.is_finite() { 0.25 * (e - self.lower) } else { f64::INFINITY },
        );
        let n = self.n();
        let d1 = {
            let p = self.eval(e + h)?;
            let m = self.eval(e - h)?;
            let mut out = Matrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    out.set(i, j, (p.get(i, j) - m.get(i, j)) / (2.0 * h));
                }
            }
            out
        };
        let d2 = {
            let p = self.eval(e + 0.5 * h)?;
            let m = self.eval(e - 0.5 * h)?;
            let mut out = Matrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    out.set(i, j, (p.get(i, j) - m.get(i, j)) / h);
                }
            }
            out
        };
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, (4.0 * d2.get(i, j) - d1.get(i, j)) / 3.0);
            }
        }
        Ok(out)
    }

    /// Family-specific proven upper bound for max_{i != j} |Phi_ij(E)|,
    /// evaluated at the minimum separation.
    pub fn offdiag_bound(&self, e: f64) -> Result<f64, ModelError> {
        self.check_window(e)?;
        let d = self.min_separation();
        Ok(match self.model {
            ModelSpec::Point1d { .. } => {
                let nu = (-e).sqrt();
                (-nu * d).exp() / (2.0 * nu)
            }
            ModelSpec::Point2d { .. } => {
                // from K0(x) < (2/x) e^{-x/2}
                let nu = (-e).sqrt();
                (-nu * d / 2.0).exp() / (std::f64::consts::PI * nu * d)
            }
            ModelSpec::Point3d { .. } => {
                let nu = (-e).sqrt();
                (-nu * d).exp() / (FOUR_PI * d)
            }
            ModelSpec::PointH2 { kappa, .. } => {
                let t = (0.25 - e / (kappa * kappa)).sqrt();
                let v = 0.5 + t;
                let alpha = kappa * d;
                let c0 = (ln_gamma(v + 1.0)? + ln_gamma(0.5)? - ln_gamma(v + 1.5)?).exp();
                let c1 = (ln_gamma(v + 2.0)? + ln_gamma(1.5)? - ln_gamma(v + 2.5)?).exp();
                (c0 * (-alpha * (v + 1.0)).exp()
                    + c1 * (-alpha * (v + 3.0)).exp()
                    + (-alpha * (v + 5.0)).exp() / (1.0 - (-2.0 * alpha).exp()))
                    / TWO_PI
            }
            ModelSpec::PointH3 { kappa, .. } => {
                let s = (kappa * kappa - e).sqrt();
                kappa * (-d * s).exp() / (FOUR_PI * (kappa * d).sinh())
            }
            ModelSpec::Salpeter1d { mass, .. } => {
                let m = *mass;
                let mut b = bessel_k0(m * d)? / std::f64::consts::PI;
                if e > 0.0 {
                    let beta = (m * m - e * e).sqrt();
                    b += e * (-beta * d).exp() / beta;
                }
                b
            }
            ModelSpec::Relativistic2d { mass, .. } => {
                let beta = (mass * mass - e * e).sqrt();
                bessel_k0(beta * d)? / std::f64::consts::PI
            }
            ModelSpec::Curve2d { curves, .. } | ModelSpec::Curve3d { curves, .. } => {
                let nu = (-e).sqrt();
                let n = self.n();
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        let ll = (curves[i].length() * curves[j].length()).sqrt();
                        let dij = self.curve_min_dists[i][j];
                        let b = if matches!(self.model, ModelSpec::Curve2d { .. }) {
                            ll * bessel_k0(nu * dij)? / TWO_PI
                        } else {
                            ll * (-nu * dij).exp() / (FOUR_PI * dij)
                        };
                        worst = worst.max(b);
                    }
                }
                worst
            }
        })
    }

    /// ln |Phi_ij(E)| computed in scaled arithmetic; exact to ordinary
    /// precision but immune to underflow for separations where the entry
    /// itself would round to zero.
    pub fn offdiag_log_abs(&self, e: f64, i: usize, j: usize) -> Result<f64, ModelError> {
        self.check_window(e)?;
        assert!(i != j, "off-diagonal entry needs i != j");
        Ok(match self.model {
            ModelSpec::Point1d { .. } => {
                let nu = (-e).sqrt();
                -nu * self.dists[i][j] - (2.0 * nu).ln()
            }
            ModelSpec::Point2d { .. } => {
                let nu = (-e).sqrt();
                let x = nu * self.dists[i][j];
                bessel_k0_scaled(x)?.ln() - x - TWO_PI.ln()
            }
            ModelSpec::Point3d { .. } => {
                let nu = (-e).sqrt();
                let d = self.dists[i][j];
                -nu * d - (FOUR_PI * d).ln()
            }
            ModelSpec::PointH2 { kappa, .. } => {
                let t = (0.25 - e / (kappa * kappa)).sqrt();
                let ca = (kappa * self.dists[i][j]).cosh();
                legendre_q_log(0.5 + t, ca, 100_000)? - TWO_PI.ln()
            }
            ModelSpec::PointH3 { kappa, .. } => {
                let s = (kappa * kappa - e).sqrt();
                let d = self.dists[i][j];
                let kd = kappa * d;
                // ln sinh(kd) without overflow: kd + ln((1 - e^{-2kd})/2)
                let ln_sinh = kd + (0.5 * (1.0 - (-2.0 * kd).exp())).ln();
                kappa.ln() - d * s - FOUR_PI.ln() - ln_sinh
            }
            ModelSpec::Salpeter1d { mass, .. } => {
                salpeter_offdiag_log(*mass, e, self.dists[i][j])?.0
            }
            ModelSpec::Relativistic2d { mass, .. } => {
                rel2d_offdiag_log(*mass, e, self.dists[i][j])?
            }
            ModelSpec::Curve2d { curves, .. } => {
                let nu = (-e).sqrt();
                let (i, j) = (i.min(j), i.max(j));
                let dmin = self.curve_min_dists[i][j];
                let scaled = self.offdiag_grids[&(i, j)].sum_kernel(|r| {
                    bessel_k0_scaled(nu * r).unwrap_or(f64::MAX) * (-nu * (r - dmin)).exp()
                });
                -nu * dmin + scaled.ln()
                    - (FOUR_PI * (curves[i].length() * curves[j].length()).sqrt()).ln()
            }
            ModelSpec::Curve3d { curves, .. } => {
                let nu = (-e).sqrt();
                let (i, j) = (i.min(j), i.max(j));
                let dmin = self.curve_min_dists[i][j];
                let scaled = self.offdiag_grids[&(i, j)]
                    .sum_kernel(|r| (-nu * (r - dmin)).exp() / r);
                -nu * dmin + scaled.ln()
                    - (FOUR_PI * (curves[i].length() * curves[j].length()).sqrt()).ln()
            }
        })
    }
}
