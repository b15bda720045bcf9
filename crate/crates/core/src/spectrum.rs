//! Spectral analysis of the trivial branch.
//!
//! A configuration lying in the hyperplane orthogonal to the s-weighted axis
//! (all axis-0 coordinates zero) is balanced for every `s` as soon as it is
//! central. In dimension 3 these are planar configurations in `{0} x R^2`;
//! in dimension 2 they are collinear configurations on `{0} x R`. The
//! Hessian splits into a normal block `B` (axis 0) and an in-hyperplane
//! block `D`, and the normal block alone decides where branches bifurcate.

use crate::error::{Error, Result};
use crate::linalg::{self, InertiaTriple};
use crate::potential::{self, Configuration, Masses, SParameter};
use nalgebra::{DMatrix, DVector};

/// Relative gap below which two eigenvalues are merged into one cluster.
pub const CLUSTER_RTOL: f64 = 1e-7;
/// Relative tolerance for identifying the cluster at `-U`.
pub const MINUS_U_RTOL: f64 = 1e-6;
/// Residual a configuration must reach at `s = 1` to be analysed.
pub const CENTRAL_TOL: f64 = 1e-8;
const HYPERPLANE_TOL: f64 = 1e-12;

/// A configuration with every axis-0 coordinate equal to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarConfiguration {
    base: Configuration,
}

impl PlanarConfiguration {
    pub fn new(base: Configuration) -> Result<Self> {
        let d = base.dim();
        if let Some(i) = (0..base.n()).find(|&i| base.coords()[i * d].abs() >= HYPERPLANE_TOL) {
            return Err(Error::Validation(format!(
                "body {i} is off the hyperplane orthogonal to the s-axis"
            )));
        }
        base.check_collisions()?;
        Ok(Self { base })
    }

    pub fn base(&self) -> &Configuration {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Recentred copy normalised to `|q|_M = 1` (the S-norm does not depend
    /// on `s` for these configurations).
    pub fn normalized(&self, m: &Masses) -> Result<Self> {
        let centred = potential::recenter(&self.base, m);
        let one = SParameter::new(1.0)?;
        let mut q = potential::normalize_to_sphere(&centred, m, one)?;
        let d = q.dim();
        let mut coords = q.coords().to_vec();
        for i in 0..q.n() {
            coords[i * d] = 0.0;
        }
        q = Configuration::new(d, coords)?;
        Ok(Self { base: q })
    }

    /// In-hyperplane coordinates in axis-major order
    /// `(y_1..y_n, z_1..z_n)`.
    pub fn in_plane(&self) -> DVector<f64> {
        let n = self.n();
        let d = self.dim();
        let mut out = DVector::zeros(n * (d - 1));
        for a in 1..d {
            for i in 0..n {
                out[(a - 1) * n + i] = self.base.coords()[i * d + a];
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Distinct eigenvalues of `M^-1 B`, decreasing, zero excluded.
    pub mu: Vec<f64>,
    pub alpha: Vec<usize>,
    /// Position in `mu` of the cluster equal to `-U`.
    pub l: usize,
    pub potential: f64,
    /// Per cluster, mass-orthonormal eigenvectors of `M^-1 B` as columns
    /// (length `n`, one entry per body).
    pub modes: Vec<DMatrix<f64>>,
    pub bodies: usize,
    pub dim: usize,
}

impl SpectrumReport {
    /// Sum of multiplicities up to and including the `-U` cluster.
    pub fn alpha_upto_l(&self) -> usize {
        self.alpha[..=self.l].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationCandidate {
    pub s_star: f64,
    pub multiplicity: usize,
    pub eigenvalue: f64,
    /// Index of the generating cluster in the report.
    pub cluster: usize,
}

/// `b_ij = m_i m_j / r_ij^3`, `b_ii = -sum_{j != i} b_ij`.
pub fn b_matrix(qh: &PlanarConfiguration, m: &Masses) -> Result<DMatrix<f64>> {
    let q = qh.base();
    check_count(q, m)?;
    let n = q.n();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let r = q.distance(i, j);
            let v = m[i] * m[j] / (r * r * r);
            b[(i, j)] = v;
            b[(j, i)] = v;
            b[(i, i)] -= v;
            b[(j, j)] -= v;
        }
    }
    Ok(b)
}

/// In-hyperplane Hessian block in axis-major order, assembled from the
/// angle of `q_i - q_j` against axis 1.
pub fn d_matrix(qh: &PlanarConfiguration, m: &Masses) -> Result<DMatrix<f64>> {
    let q = qh.base();
    check_count(q, m)?;
    let n = q.n();
    let d = q.dim();
    let k = d - 1;
    let mut out = DMatrix::zeros(k * n, k * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (qi, qj) = (q.body(i), q.body(j));
            let r = q.distance(i, j);
            let dz = if d == 3 { qi[2] - qj[2] } else { 0.0 };
            let theta = dz.atan2(qi[1] - qj[1]);
            let (sin, cos) = theta.sin_cos();
            let c = m[i] * m[j] / (r * r * r);
            let block = [
                [1.0 - 3.0 * cos * cos, -3.0 * cos * sin],
                [-3.0 * cos * sin, 1.0 - 3.0 * sin * sin],
            ];
            for a in 0..k {
                for b in 0..k {
                    let v = c * block[a][b];
                    out[(a * n + i, b * n + j)] = v;
                    out[(a * n + i, b * n + i)] -= v;
                }
            }
        }
    }
    Ok(out)
}

/// Reorders a body-major `(n d) x (n d)` matrix into axis-major order
/// `(x_1..x_n, y_1..y_n, ...)`.
pub fn to_axis_major(h: &DMatrix<f64>, n: usize, d: usize) -> DMatrix<f64> {
    let idx = |k: usize| (k % n) * d + k / n;
    DMatrix::from_fn(n * d, n * d, |r, c| h[(idx(r), idx(c))])
}

pub use crate::linalg::inertia_indices;

/// Eigen-decomposes `M^-1 B` on the mass-orthogonal complement of
/// `(1, ..., 1)` and clusters the result.
pub fn cluster_spectrum(qh: &PlanarConfiguration, m: &Masses) -> Result<SpectrumReport> {
    let qh = checked_central(qh, m)?;
    let n = qh.n();
    let d = qh.dim();
    let u = potential::potential_value(qh.base().coords(), d, m);
    let b = b_matrix(&qh, m)?;
    let (scaled, sqrt_m) = mass_scaled(&b, m);
    let ones = DVector::from_iterator(n, sqrt_m.iter().copied());
    let basis = linalg::orthonormal_complement(&[ones], n);
    let reduced = basis.transpose() * &scaled * &basis;
    let eig = linalg::sym_eigen(&reduced);

    // decreasing order
    let values: Vec<f64> = eig.values.iter().rev().copied().collect();
    let vecs: Vec<DVector<f64>> = (0..n - 1)
        .rev()
        .map(|c| {
            let y = &basis * eig.vectors.column(c);
            DVector::from_iterator(n, y.iter().zip(sqrt_m.iter()).map(|(v, w)| v / w))
        })
        .collect();

    let gap = CLUSTER_RTOL * u.abs().max(1.0);
    let mut mu = Vec::new();
    let mut alpha = Vec::new();
    let mut modes = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k - 1] - values[k] >= gap {
            let len = k - start;
            mu.push(values[start..k].iter().sum::<f64>() / len as f64);
            alpha.push(len);
            let mut mat = DMatrix::zeros(n, len);
            for (c, v) in vecs[start..k].iter().enumerate() {
                mat.set_column(c, v);
            }
            modes.push(mat);
            start = k;
        }
    }

    let (l, dist) = mu
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (v + u).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::SpectrumInvariantViolation("empty spectrum".into()))?;
    if dist >= MINUS_U_RTOL * u {
        return Err(Error::SpectrumInvariantViolation(format!(
            "no eigenvalue equals -U (closest distance {dist:e})"
        )));
    }
    if alpha[l] < d - 1 {
        return Err(Error::SpectrumInvariantViolation(format!(
            "multiplicity of -U is {} but at least {} is required",
            alpha[l],
            d - 1
        )));
    }
    if d == 3 && n >= 4 && l + 1 == mu.len() {
        return Err(Error::SpectrumInvariantViolation(
            "no eigenvalue below -U for a planar configuration with n >= 4".into(),
        ));
    }
    Ok(SpectrumReport {
        mu,
        alpha,
        l,
        potential: u,
        modes,
        bodies: n,
        dim: d,
    })
}

/// Inertia of the normal block at parameter `s`, counted from the signs of
/// `mu_j + s U` with multiplicities.
pub fn normal_inertia_at(report: &SpectrumReport, s: f64) -> InertiaTriple {
    let mut shifted = Vec::with_capacity(report.bodies - 1);
    for (mu, &a) in report.mu.iter().zip(&report.alpha) {
        shifted.extend(std::iter::repeat_n(mu + s * report.potential, a));
    }
    let tol = linalg::default_tolerance(&shifted);
    linalg::inertia_of_values(&shifted, tol)
}

/// Inertia of `M^-1 D + U I` on the in-hyperplane tangent space of the
/// sphere (translations and the radial direction removed).
pub fn planar_inertia(qh: &PlanarConfiguration, m: &Masses) -> Result<InertiaTriple> {
    let (form, _, _) = planar_form(qh, m)?;
    Ok(linalg::inertia_default(&form))
}

/// The restricted planar form together with its tangent basis (scaled
/// coordinates, axis-major) and the normalised configuration it was
/// evaluated at.
pub(crate) fn planar_form(
    qh: &PlanarConfiguration,
    m: &Masses,
) -> Result<(DMatrix<f64>, DMatrix<f64>, PlanarConfiguration)> {
    let qh = checked_central(qh, m)?;
    let n = qh.n();
    let k = qh.dim() - 1;
    let u = potential::potential_value(qh.base().coords(), qh.dim(), m);
    let dm = d_matrix(&qh, m)?;
    let (mut scaled, sqrt_m) = mass_scaled(&dm, m);
    for i in 0..k * n {
        scaled[(i, i)] += u;
    }
    let mut constraints = Vec::new();
    for a in 0..k {
        let mut t = DVector::zeros(k * n);
        for i in 0..n {
            t[a * n + i] = sqrt_m[i % n];
        }
        constraints.push(t);
    }
    let y = qh.in_plane();
    constraints.push(DVector::from_fn(k * n, |r, _| sqrt_m[r] * y[r]));
    let basis = linalg::orthonormal_complement(&constraints, k * n);
    let form = basis.transpose() * &scaled * &basis;
    Ok((form, basis, qh))
}

/// One candidate per cluster strictly below `-U`, sorted by increasing
/// `s_star = -mu / U`.
pub fn bifurcation_candidates(report: &SpectrumReport) -> Vec<BifurcationCandidate> {
    let mut out: Vec<BifurcationCandidate> = (report.l + 1..report.mu.len())
        .map(|c| BifurcationCandidate {
            s_star: -report.mu[c] / report.potential,
            multiplicity: report.alpha[c],
            eigenvalue: report.mu[c],
            cluster: c,
        })
        .collect();
    out.sort_by(|a, b| a.s_star.total_cmp(&b.s_star));
    out
}

/// `floor((n - 1 - alpha) / beta)` where `alpha` counts eigenvalues at or
/// above `-U` and `beta` is the largest multiplicity below it.
pub fn bifurcation_lower_bound(report: &SpectrumReport) -> usize {
    let beta = report.alpha[report.l + 1..].iter().copied().max().unwrap_or(0);
    if beta == 0 {
        return 0;
    }
    (report.bodies - 1 - report.alpha_upto_l()) / beta
}

/// Direction in full body-major coordinates that moves body `i` along the
/// s-axis by `mode[i]`.
pub fn normal_direction(mode: &DVector<f64>, dim: usize) -> DVector<f64> {
    let n = mode.len();
    let mut v = DVector::zeros(n * dim);
    for i in 0..n {
        v[i * dim] = mode[i];
    }
    v
}

fn check_count(q: &Configuration, m: &Masses) -> Result<()> {
    if q.n() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            actual: q.n(),
        });
    }
    Ok(())
}

fn checked_central(qh: &PlanarConfiguration, m: &Masses) -> Result<PlanarConfiguration> {
    check_count(qh.base(), m)?;
    let q = qh.normalized(m)?;
    let one = SParameter::new(1.0)?;
    let residual = potential::balanced_residual(q.base(), m, one)?.norm();
    if residual >= CENTRAL_TOL {
        return Err(Error::NotASolution { residual });
    }
    Ok(q)
}

/// `M^-1/2 A M^-1/2` for a matrix indexed by (axis block, body), plus the
/// per-body square roots of the masses.
fn mass_scaled(a: &DMatrix<f64>, m: &Masses) -> (DMatrix<f64>, Vec<f64>) {
    let n = m.len();
    let sqrt_m: Vec<f64> = (0..a.nrows()).map(|r| m[r % n].sqrt()).collect();
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] / (sqrt_m[r] * sqrt_m[c]));
    (scaled, sqrt_m)
}
