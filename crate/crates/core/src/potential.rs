//! Newtonian potential, its first and second derivatives, the S-weighted
//! geometry and the balanced-configuration residual.
//!
//! Coordinates are stored body-major: body `i` occupies
//! `coords[i*d .. (i+1)*d]`. Axis 0 is always the axis carrying the weight
//! `s` of `S = diag(s, 1, ..., 1)`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative collision threshold: a pair closer than this fraction of the
/// configuration diameter is treated as a collision.
pub const COLLISION_RTOL: f64 = 1e-8;

/// Deviation of `|q|_S^2` from one tolerated by [`balanced_residual`].
pub const SPHERE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Masses(Vec<f64>);

impl Masses {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least two bodies, got {}",
                values.len()
            )));
        }
        if let Some((i, m)) = values
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(Error::Validation(format!("mass {i} is not positive: {m}")));
        }
        Ok(Self(values))
    }

    /// `n` unit masses.
    pub fn equal(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Per-coordinate mass vector of length `n*dim` (the diagonal of `M`).
    pub fn expanded(&self, dim: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.0.len() * dim,
            self.0.iter().flat_map(|&m| std::iter::repeat_n(m, dim)),
        )
    }
}

impl std::ops::Index<usize> for Masses {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Positions of `n` bodies in dimension 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::Validation(format!("dimension must be 2 or 3, got {dim}")));
        }
        if !coords.len().is_multiple_of(dim) || coords.len() < 2 * dim {
            return Err(Error::Validation(format!(
                "coordinate count {} is not a multiple of {dim} with at least two bodies",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_bodies(dim: usize, bodies: &[&[f64]]) -> Result<Self> {
        let mut coords = Vec::with_capacity(bodies.len() * dim);
        for b in bodies {
            if b.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: b.len(),
                });
            }
            coords.extend_from_slice(b);
        }
        Self::new(dim, coords)
    }

    pub fn from_vector(dim: usize, v: &DVector<f64>) -> Result<Self> {
        Self::new(dim, v.as_slice().to_vec())
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }

    pub fn body(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.body(i), self.body(j))
    }

    /// Pairwise distances `r_ij` for `i < j`, in lexicographic pair order.
    pub fn pairwise_distances(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.distance(i, j));
            }
        }
        out
    }

    /// Sorted pairwise distances: invariant under rigid motions and body
    /// relabelling.
    pub fn fingerprint(&self) -> Vec<f64> {
        let mut d = self.pairwise_distances();
        d.sort_by(f64::total_cmp);
        d
    }

    pub fn diameter(&self) -> f64 {
        self.pairwise_distances().into_iter().fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.iter().map(|c| c * k).collect(),
        }
    }

    pub fn translated(&self, t: &[f64]) -> Self {
        let d = self.dim;
        Self {
            dim: d,
            coords: self
                .coords
                .iter()
                .enumerate()
                .map(|(k, c)| c + t[k % d])
                .collect(),
        }
    }

    /// Checks the collision threshold `min r_ij >= 1e-8 * diameter`.
    pub fn check_collisions(&self) -> Result<()> {
        check_collisions(&self.coords, self.dim)
    }
}

/// The balanced-configuration parameter `s >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SParameter(f64);

impl SParameter {
    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 1.0) {
            return Err(Error::Validation(format!("s must be >= 1, got {s}")));
        }
        Ok(Self(s))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Diagonal weight of `S` on the given axis.
    pub fn weight(&self, axis: usize) -> f64 {
        axis_weight(self.0, axis)
    }
}

#[inline]
pub(crate) fn axis_weight(s: f64, axis: usize) -> f64 {
    if axis == 0 {
        s
    } else {
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct PotentialReport {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn check_collisions(coords: &[f64], dim: usize) -> Result<()> {
    let n = coords.len() / dim;
    let mut min = (f64::INFINITY, 0, 0);
    let mut diameter = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            let r = distance(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]);
            diameter = diameter.max(r);
            if r < min.0 {
                min = (r, i, j);
            }
        }
    }
    let threshold = COLLISION_RTOL * diameter;
    if !(min.0 >= threshold) || min.0 == 0.0 {
        return Err(Error::Collision {
            i: min.1,
            j: min.2,
            distance: min.0,
            threshold,
        });
    }
    Ok(())
}

fn check_masses(coords: &[f64], dim: usize, m: &Masses) -> Result<()> {
    if coords.len() != m.len() * dim {
        return Err(Error::DimensionMismatch {
            expected: m.len() * dim,
            actual: coords.len(),
        });
    }
    Ok(())
}

pub(crate) fn potential_value(coords: &[f64], dim: usize, m: &Masses) -> f64 {
    let n = m.len();
    let mut u = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let r = distance(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]);
            u += m[i] * m[j] / r;
        }
    }
    u
}

pub(crate) fn potential_gradient_raw(coords: &[f64], dim: usize, m: &Masses) -> DVector<f64> {
    let n = m.len();
    let mut g = DVector::zeros(n * dim);
    for i in 0..n {
        for j in i + 1..n {
            let qi = &coords[i * dim..(i + 1) * dim];
            let qj = &coords[j * dim..(j + 1) * dim];
            let r = distance(qi, qj);
            let c = m[i] * m[j] / (r * r * r);
            for a in 0..dim {
                let f = c * (qj[a] - qi[a]);
                g[i * dim + a] += f;
                g[j * dim + a] -= f;
            }
        }
    }
    g
}

/// `D^2 U` assembled from the pair blocks
/// `D_ij = m_i m_j / r^3 (I - 3 u u^T)` with `D_ii = -sum_j D_ij`.
pub(crate) fn potential_hessian_raw(coords: &[f64], dim: usize, m: &Masses) -> DMatrix<f64> {
    let n = m.len();
    let nd = n * dim;
    let mut h = DMatrix::zeros(nd, nd);
    let mut u = [0.0; 3];
    for i in 0..n {
        for j in i + 1..n {
            let qi = &coords[i * dim..(i + 1) * dim];
            let qj = &coords[j * dim..(j + 1) * dim];
            let r = distance(qi, qj);
            for a in 0..dim {
                u[a] = (qi[a] - qj[a]) / r;
            }
            let c = m[i] * m[j] / (r * r * r);
            for a in 0..dim {
                for b in 0..dim {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let v = c * (delta - 3.0 * u[a] * u[b]);
                    h[(i * dim + a, j * dim + b)] = v;
                    h[(j * dim + a, i * dim + b)] = v;
                    h[(i * dim + a, i * dim + b)] -= v;
                    h[(j * dim + a, j * dim + b)] -= v;
                }
            }
        }
    }
    h
}

/// `U(q) = sum_{i<j} m_i m_j / r_ij`.
pub fn total_potential(q: &Configuration, m: &Masses) -> Result<f64> {
    check_masses(q.coords(), q.dim(), m)?;
    q.check_collisions()?;
    Ok(potential_value(q.coords(), q.dim(), m))
}

/// `grad U(q)`; block `i` is `sum_{j != i} m_i m_j (q_j - q_i) / r_ij^3`.
pub fn potential_gradient(q: &Configuration, m: &Masses) -> Result<DVector<f64>> {
    check_masses(q.coords(), q.dim(), m)?;
    q.check_collisions()?;
    Ok(potential_gradient_raw(q.coords(), q.dim(), m))
}

pub fn potential_hessian(q: &Configuration, m: &Masses) -> Result<DMatrix<f64>> {
    check_masses(q.coords(), q.dim(), m)?;
    q.check_collisions()?;
    Ok(potential_hessian_raw(q.coords(), q.dim(), m))
}

pub fn potential_report(q: &Configuration, m: &Masses) -> Result<PotentialReport> {
    check_masses(q.coords(), q.dim(), m)?;
    q.check_collisions()?;
    Ok(PotentialReport {
        value: potential_value(q.coords(), q.dim(), m),
        gradient: potential_gradient_raw(q.coords(), q.dim(), m),
        hessian: potential_hessian_raw(q.coords(), q.dim(), m),
    })
}

/// `<a, b>_S = sum_i m_i <S a_i, b_i>`.
pub fn s_inner(a: &[f64], b: &[f64], m: &Masses, s: SParameter) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() || !a.len().is_multiple_of(m.len()) {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            actual: a.len(),
        });
    }
    let dim = a.len() / m.len();
    Ok(s_inner_raw(a, b, dim, m, s.value()))
}

pub(crate) fn s_inner_raw(a: &[f64], b: &[f64], dim: usize, m: &Masses, s: f64) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (x, y))| m[k / dim] * axis_weight(s, k % dim) * x * y)
        .sum()
}

/// Mass inner product `<M a, b>`.
pub(crate) fn mass_inner(a: &[f64], b: &[f64], dim: usize, m: &Masses) -> f64 {
    s_inner_raw(a, b, dim, m, 1.0)
}

pub fn center_of_mass(q: &Configuration, m: &Masses) -> Vec<f64> {
    center_of_mass_raw(q.coords(), q.dim(), m)
}

pub(crate) fn center_of_mass_raw(coords: &[f64], dim: usize, m: &Masses) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for (i, &mi) in m.as_slice().iter().enumerate() {
        for a in 0..dim {
            c[a] += mi * coords[i * dim + a];
        }
    }
    let total = m.total();
    c.iter_mut().for_each(|x| *x /= total);
    c
}

/// Translates the configuration so that its centre of mass is the origin.
pub fn recenter(q: &Configuration, m: &Masses) -> Configuration {
    let c = center_of_mass(q, m);
    let neg: Vec<f64> = c.iter().map(|x| -x).collect();
    q.translated(&neg)
}

/// `q / |q|_S`.
pub fn normalize_to_sphere(q: &Configuration, m: &Masses, s: SParameter) -> Result<Configuration> {
    check_masses(q.coords(), q.dim(), m)?;
    let norm_sq = s_inner_raw(q.coords(), q.coords(), q.dim(), m, s.value());
    if !(norm_sq > 0.0) {
        return Err(Error::ZeroConfiguration);
    }
    Ok(q.scaled(1.0 / norm_sq.sqrt()))
}

/// `F(q, s) = M^{-1} grad U(q) + U(q) S_hat q` without the sphere check.
pub(crate) fn balanced_field(coords: &[f64], dim: usize, m: &Masses, s: f64) -> DVector<f64> {
    let u = potential_value(coords, dim, m);
    let g = potential_gradient_raw(coords, dim, m);
    DVector::from_iterator(
        coords.len(),
        coords
            .iter()
            .enumerate()
            .map(|(k, &c)| g[k] / m[k / dim] + u * axis_weight(s, k % dim) * c),
    )
}

/// The balanced-configuration residual on the S-sphere. Vanishes exactly
/// at balanced configurations normalised to `|q|_S = 1`.
pub fn balanced_residual(q: &Configuration, m: &Masses, s: SParameter) -> Result<DVector<f64>> {
    check_masses(q.coords(), q.dim(), m)?;
    q.check_collisions()?;
    let norm_sq = s_inner_raw(q.coords(), q.coords(), q.dim(), m, s.value());
    if (norm_sq - 1.0).abs() > SPHERE_TOL {
        return Err(Error::NotNormalized { norm_sq });
    }
    Ok(balanced_field(q.coords(), q.dim(), m, s.value()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_body() -> (Configuration, Masses) {
        (
            Configuration::new(2, vec![0.0, 1.0, 0.0, -1.0]).unwrap(),
            Masses::equal(2).unwrap(),
        )
    }

    fn triangle() -> (Configuration, Masses) {
        let h = 3f64.sqrt() / 2.0;
        (
            Configuration::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.5, h]).unwrap(),
            Masses::equal(3).unwrap(),
        )
    }

    #[test]
    fn two_body_potential() {
        let (q, m) = two_body();
        assert_eq!(total_potential(&q, &m).unwrap(), 0.5);
    }

    #[test]
    fn equilateral_potential() {
        let (q, m) = triangle();
        assert!((total_potential(&q, &m).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn homogeneity_of_potential() {
        let (q, m) = triangle();
        let u = total_potential(&q, &m).unwrap();
        let u2 = total_potential(&q.scaled(2.0), &m).unwrap();
        assert!((u2 - u / 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_body_gradient() {
        let (q, m) = two_body();
        let g = potential_gradient(&q, &m).unwrap();
        let expect = [0.0, -0.25, 0.0, 0.25];
        for k in 0..4 {
            assert!((g[k] - expect[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_body_hessian_block() {
        let (q, m) = two_body();
        let h = potential_hessian(&q, &m).unwrap();
        assert!((h[(0, 2)] - 0.125).abs() < 1e-15);
        assert!((h[(1, 3)] + 0.25).abs() < 1e-15);
        assert_eq!(h[(0, 3)], 0.0);
        assert_eq!(h[(1, 2)], 0.0);
        assert_eq!(h.clone() - h.transpose(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn s_inner_examples() {
        let m = Masses::equal(2).unwrap();
        let a = [1.0, 0.0, -1.0, 0.0];
        let s2 = SParameter::new(2.0).unwrap();
        assert_eq!(s_inner(&a, &a, &m, s2).unwrap(), 4.0);
        let b = [0.3, 0.1, -0.2, 0.7];
        let one = SParameter::new(1.0).unwrap();
        let plain: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(s_inner(&a, &b, &m, one).unwrap(), plain);
        assert!(matches!(
            s_inner(&a, &b[..3], &m, one),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn center_of_mass_examples() {
        let (q, m) = two_body();
        assert_eq!(center_of_mass(&q, &m), vec![0.0, 0.0]);
        let q = Configuration::new(2, vec![0.0, 4.0, 0.0, 0.0]).unwrap();
        let m = Masses::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(center_of_mass(&q, &m), vec![0.0, 1.0]);
        let moved = center_of_mass(&q.translated(&[2.0, -1.0]), &m);
        assert!((moved[0] - 2.0).abs() < 1e-15 && moved[1].abs() < 1e-15);
    }

    #[test]
    fn normalization_examples() {
        let (q, m) = two_body();
        let s = SParameter::new(3.7).unwrap();
        let n = normalize_to_sphere(&q, &m, s).unwrap();
        let k = 1.0 / 2f64.sqrt();
        assert!((n.coords()[1] - k).abs() < 1e-15);
        let nn = normalize_to_sphere(&n, &m, s).unwrap();
        for (a, b) in n.coords().iter().zip(nn.coords()) {
            assert!((a - b).abs() < 1e-14);
        }
        let zero = Configuration::new(2, vec![0.0; 4]).unwrap();
        assert_eq!(normalize_to_sphere(&zero, &m, s), Err(Error::ZeroConfiguration));
    }

    #[test]
    fn lagrange_triangle_is_balanced_at_s_one() {
        let (q, m) = triangle();
        let q = recenter(&q, &m);
        let one = SParameter::new(1.0).unwrap();
        let q = normalize_to_sphere(&q, &m, one).unwrap();
        assert!(balanced_residual(&q, &m, one).unwrap().norm() < 1e-12);
    }

    #[test]
    fn square_orthogonal_to_s_axis_is_balanced_for_all_s() {
        let m = Masses::equal(4).unwrap();
        let q = Configuration::new(
            3,
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
        )
        .unwrap();
        for s in [1.0, 1.3, 2.0, 5.0] {
            let s = SParameter::new(s).unwrap();
            let qn = normalize_to_sphere(&q, &m, s).unwrap();
            assert!(balanced_residual(&qn, &m, s).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn residual_requires_normalization() {
        let (q, m) = triangle();
        let one = SParameter::new(1.0).unwrap();
        assert!(matches!(
            balanced_residual(&q, &m, one),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn generic_configuration_is_not_balanced() {
        let m = Masses::equal(3).unwrap();
        let q = Configuration::new(2, vec![0.0, 0.0, 1.3, 0.2, 0.4, 0.9]).unwrap();
        let q = recenter(&q, &m);
        let s = SParameter::new(1.5).unwrap();
        let q = normalize_to_sphere(&q, &m, s).unwrap();
        assert!(balanced_residual(&q, &m, s).unwrap().norm() > 1e-3);
    }

    #[test]
    fn collisions_are_rejected() {
        let m = Masses::equal(3).unwrap();
        let q = Configuration::new(2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1e-12]).unwrap();
        assert!(matches!(total_potential(&q, &m), Err(Error::Collision { .. })));
    }

    #[test]
    fn invalid_masses() {
        assert!(Masses::new(vec![1.0, -1.0]).is_err());
        assert!(Masses::new(vec![1.0]).is_err());
        assert!(SParameter::new(0.5).is_err());
    }
}
