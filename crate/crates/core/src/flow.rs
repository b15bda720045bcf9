//! Hessian forms on the tangent space of the S-sphere, reduction by the
//! symmetry kernel, and spectral flow along the trivial branch.

use crate::error::{Error, Result};
use crate::linalg::{self, InertiaTriple};
use crate::potential::{self, axis_weight, Configuration, Masses, SParameter};
use crate::spectrum::{self, BifurcationCandidate, PlanarConfiguration, SpectrumReport};
use nalgebra::{DMatrix, DVector};

/// Residual below which a configuration is accepted as a solution by
/// [`full_hessian_form`].
pub const SOLUTION_TOL: f64 = 1e-8;
/// Relative kernel residual tolerated by [`reduced_hessian`].
pub const KERNEL_RTOL: f64 = 1e-6;
/// Distance from a candidate instant under which an endpoint is nudged.
pub const NUDGE_TRIGGER: f64 = 1e-6;
pub const NUDGE: f64 = 1e-4;

/// The Hessian of `U` restricted to the S-sphere at a solution, stored in
/// mass-scaled coordinates `w = M^{1/2} v`.
#[derive(Debug, Clone)]
pub struct HessianForm {
    /// `M^-1/2 D^2U M^-1/2 + U S_hat` on the full space.
    pub operator: DMatrix<f64>,
    /// Orthonormal basis (columns) of the scaled tangent space.
    pub tangent: DMatrix<f64>,
    sqrt_m: DVector<f64>,
}

impl HessianForm {
    /// The form expressed in the tangent basis.
    pub fn restricted(&self) -> DMatrix<f64> {
        self.tangent.transpose() * &self.operator * &self.tangent
    }

    pub fn inertia(&self) -> InertiaTriple {
        linalg::inertia_default(&self.restricted())
    }

    pub fn dim(&self) -> usize {
        self.tangent.ncols()
    }

    /// `h(v) = <(M^-1 D^2U + U S_hat) v, v>_M` for `v` in original
    /// coordinates.
    pub fn value(&self, v: &DVector<f64>) -> f64 {
        let w = v.component_mul(&self.sqrt_m);
        w.dot(&(&self.operator * &w))
    }

    /// Tangential part of the operator applied to `v`, in scaled
    /// coordinates.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let w = v.component_mul(&self.sqrt_m);
        let aw = &self.operator * &w;
        &self.tangent * (self.tangent.transpose() * aw)
    }

    /// Frobenius norm of the restricted operator.
    pub fn scale(&self) -> f64 {
        self.restricted().norm()
    }

    fn scaled(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_mul(&self.sqrt_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSource {
    /// No continuous symmetry survives.
    Empty,
    RotationGenerator,
    PlanarHessianKernel,
}

/// Mass-orthonormal frame of Hessian null directions that persist along
/// the trivial branch.
#[derive(Debug, Clone)]
pub struct SymmetryKernel {
    pub basis: Vec<DVector<f64>>,
    pub source: KernelSource,
}

impl SymmetryKernel {
    pub fn empty() -> Self {
        Self {
            basis: Vec::new(),
            source: KernelSource::Empty,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Mass-orthonormalises `vectors` into a kernel frame.
    pub fn from_vectors(vectors: &[DVector<f64>], m: &Masses, source: KernelSource) -> Self {
        let dim = vectors.first().map(|v| v.len() / m.len()).unwrap_or(1);
        let sqrt_m = sqrt_masses(m, dim);
        let scaled: Vec<DVector<f64>> = vectors.iter().map(|v| v.component_mul(&sqrt_m)).collect();
        let basis = linalg::orthonormalize(&scaled, 1e-8)
            .into_iter()
            .map(|w| w.component_div(&sqrt_m))
            .collect::<Vec<_>>();
        let source = if basis.is_empty() { KernelSource::Empty } else { source };
        Self { basis, source }
    }
}

/// Symmetric form of the reduced Hessian on the complement of the kernel.
#[derive(Debug, Clone)]
pub struct ReducedForm {
    pub matrix: DMatrix<f64>,
    pub kernel_dim: usize,
}

impl ReducedForm {
    pub fn inertia(&self) -> InertiaTriple {
        linalg::inertia_default(&self.matrix)
    }
}

type PathEvaluator<'a> = Box<dyn Fn(f64) -> Result<DMatrix<f64>> + Send + Sync + 'a>;

/// A path of symmetric forms `s -> L_s` on `[a, b]`.
pub struct ReducedHessianPath<'a> {
    evaluator: PathEvaluator<'a>,
    pub interval: (f64, f64),
}

impl<'a> ReducedHessianPath<'a> {
    pub fn new<F>(interval: (f64, f64), evaluator: F) -> Self
    where
        F: Fn(f64) -> Result<DMatrix<f64>> + Send + Sync + 'a,
    {
        Self {
            evaluator: Box::new(evaluator),
            interval,
        }
    }

    pub fn evaluate(&self, s: f64) -> Result<DMatrix<f64>> {
        (self.evaluator)(s)
    }

    /// Reduced Hessian path along the trivial branch through `qh`.
    pub fn trivial_branch(
        qh: &PlanarConfiguration,
        m: &'a Masses,
        interval: (f64, f64),
    ) -> Result<Self> {
        let kernel = symmetry_kernel(qh, m)?;
        let q = qh.normalized(m)?.base().clone();
        Ok(Self::new(interval, move |s| {
            let form = full_hessian_form(&q, m, s)?;
            Ok(reduced_hessian(&form, &kernel, m)?.matrix)
        }))
    }
}

#[derive(Debug, Clone)]
pub struct FlowReport {
    pub flow: i64,
    /// Candidates strictly inside the (possibly nudged) interval.
    pub candidates: Vec<BifurcationCandidate>,
    pub lower_bound: usize,
    pub interval: (f64, f64),
    /// `(original, nudged)` endpoint pairs.
    pub nudges: Vec<(f64, f64)>,
    pub kernel_dim: usize,
    pub start_inertia: InertiaTriple,
    pub end_inertia: InertiaTriple,
}

fn sqrt_masses(m: &Masses, dim: usize) -> DVector<f64> {
    m.expanded(dim).map(f64::sqrt)
}

fn check_solution(q: &Configuration, m: &Masses, s: f64) -> Result<()> {
    let s = SParameter::new(s)?;
    let residual = potential::balanced_residual(q, m, s)?.norm();
    if residual >= SOLUTION_TOL {
        return Err(Error::NotASolution { residual });
    }
    Ok(())
}

/// The Hessian of `U` restricted to `T_q` of the S-sphere (centre of mass
/// fixed, S-radial direction removed).
pub fn full_hessian_form(q: &Configuration, m: &Masses, s: f64) -> Result<HessianForm> {
    check_solution(q, m, s)?;
    Ok(hessian_form_unchecked(q.coords(), q.dim(), m, s))
}

pub(crate) fn hessian_form_unchecked(coords: &[f64], dim: usize, m: &Masses, s: f64) -> HessianForm {
    let nd = coords.len();
    let sqrt_m = sqrt_masses(m, dim);
    let u = potential::potential_value(coords, dim, m);
    let h = potential::potential_hessian_raw(coords, dim, m);
    let mut operator = DMatrix::from_fn(nd, nd, |r, c| h[(r, c)] / (sqrt_m[r] * sqrt_m[c]));
    for k in 0..nd {
        operator[(k, k)] += u * axis_weight(s, k % dim);
    }
    let mut constraints = Vec::with_capacity(dim + 1);
    for a in 0..dim {
        constraints.push(DVector::from_fn(nd, |k, _| if k % dim == a { sqrt_m[k] } else { 0.0 }));
    }
    constraints.push(DVector::from_fn(nd, |k, _| {
        sqrt_m[k] * axis_weight(s, k % dim) * coords[k]
    }));
    let tangent = linalg::orthonormal_complement(&constraints, nd);
    HessianForm {
        operator,
        tangent,
        sqrt_m,
    }
}

/// Infinitesimal generator of rotations in the plane of axes `(a, b)`,
/// mass-normalised. `None` when the configuration is fixed by them.
pub(crate) fn plane_rotation(coords: &[f64], dim: usize, m: &Masses, a: usize, b: usize) -> Option<DVector<f64>> {
    let mut v = DVector::zeros(coords.len());
    for i in 0..coords.len() / dim {
        v[i * dim + a] = -coords[i * dim + b];
        v[i * dim + b] = coords[i * dim + a];
    }
    let norm = potential::mass_inner(v.as_slice(), v.as_slice(), dim, m).sqrt();
    let scale = potential::mass_inner(coords, coords, dim, m).sqrt();
    if !(norm > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return None;
    }
    Some(v / norm)
}

/// Generator of the rotations that fix the s-axis: body `i` maps to
/// `(0, -q_i[2], q_i[1])`, mass-normalised.
pub fn rotation_generator(q: &Configuration, m: &Masses) -> Result<DVector<f64>> {
    if q.dim() != 3 {
        return Err(Error::InvalidInput(format!(
            "rotation generator needs dimension 3, got {}",
            q.dim()
        )));
    }
    if q.n() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            actual: q.n(),
        });
    }
    plane_rotation(q.coords(), 3, m, 1, 2)
        .ok_or_else(|| Error::ZeroVector("configuration lies on the s-axis".into()))
}

/// Continuous symmetry generators at a point with parameter `s`: rotations
/// fixing the s-axis, plus every rotation once `s` is within `iso_tol` of
/// one.
pub(crate) fn symmetry_generators(
    coords: &[f64],
    dim: usize,
    m: &Masses,
    s: f64,
    iso_tol: f64,
) -> Vec<DVector<f64>> {
    let mut planes = Vec::new();
    if dim == 3 {
        planes.push((1, 2));
    }
    if s - 1.0 <= iso_tol {
        if dim == 3 {
            planes.push((0, 1));
            planes.push((0, 2));
        } else {
            planes.push((0, 1));
        }
    }
    planes
        .into_iter()
        .filter_map(|(a, b)| plane_rotation(coords, dim, m, a, b))
        .collect()
}

/// Kernel of the planar Hessian at a trivial-branch configuration,
/// embedded in full coordinates. Contains the rotation generator in
/// dimension 3; empty in dimension 2.
pub fn symmetry_kernel(qh: &PlanarConfiguration, m: &Masses) -> Result<SymmetryKernel> {
    if qh.dim() == 2 {
        return Ok(SymmetryKernel::empty());
    }
    let (form, basis, qn) = spectrum::planar_form(qh, m)?;
    let n = qn.n();
    let eig = linalg::sym_eigen(&form);
    let tol = linalg::default_tolerance(&eig.values);
    let sqrt_m: Vec<f64> = (0..n).map(|i| m[i].sqrt()).collect();
    let embed = |w: DVector<f64>| {
        let mut v = DVector::zeros(3 * n);
        for i in 0..n {
            v[i * 3 + 1] = w[i] / sqrt_m[i];
            v[i * 3 + 2] = w[n + i] / sqrt_m[i];
        }
        v
    };
    let mut vectors = vec![rotation_generator(qn.base(), m)?];
    for (k, &val) in eig.values.iter().enumerate() {
        if val.abs() <= tol {
            vectors.push(embed(&basis * eig.vectors.column(k)));
        }
    }
    let zero = eig.values.iter().filter(|v| v.abs() <= tol).count();
    if zero < 1 {
        return Err(Error::SpectrumInvariantViolation(
            "planar Hessian has no kernel although the rotation orbit is one-dimensional".into(),
        ));
    }
    let kernel = SymmetryKernel::from_vectors(&vectors, m, KernelSource::PlanarHessianKernel);
    let source = if kernel.dim() == 1 {
        KernelSource::RotationGenerator
    } else {
        KernelSource::PlanarHessianKernel
    };
    Ok(SymmetryKernel { source, ..kernel })
}

/// Restricts the form to the mass-orthogonal complement of the kernel,
/// after checking every kernel vector is annihilated.
pub fn reduced_hessian(form: &HessianForm, kernel: &SymmetryKernel, _m: &Masses) -> Result<ReducedForm> {
    let scale = form.scale().max(f64::MIN_POSITIVE);
    for (index, v) in kernel.basis.iter().enumerate() {
        let residual = form.apply(v).norm() / (form.scaled(v).norm() * scale);
        if residual >= KERNEL_RTOL {
            return Err(Error::KernelMismatch { index, residual });
        }
    }
    Ok(reduce_unchecked(form, &kernel.basis))
}

pub(crate) fn reduce_unchecked(form: &HessianForm, kernel: &[DVector<f64>]) -> ReducedForm {
    let nd = form.operator.nrows();
    let scaled: Vec<DVector<f64>> = kernel.iter().map(|v| form.scaled(v)).collect();
    let kb = linalg::orthonormalize(&scaled, 1e-8);
    let tangent: Vec<DVector<f64>> = (0..form.tangent.ncols())
        .map(|c| form.tangent.column(c).into_owned())
        .collect();
    let normal = linalg::orthonormal_complement(&tangent, nd);
    let mut constraints: Vec<DVector<f64>> =
        (0..normal.ncols()).map(|c| normal.column(c).into_owned()).collect();
    constraints.extend(kb.iter().cloned());
    let basis = linalg::orthonormal_complement(&constraints, nd);
    ReducedForm {
        matrix: basis.transpose() * &form.operator * &basis,
        kernel_dim: kb.len(),
    }
}

/// `iota^-(L_a) - iota^-(L_b)` for an admissible path.
pub fn spectral_flow(path: &ReducedHessianPath<'_>) -> Result<i64> {
    let (a, b) = path.interval;
    let start = endpoint_inertia(path, a)?;
    let end = endpoint_inertia(path, b)?;
    Ok(start.minus as i64 - end.minus as i64)
}

fn endpoint_inertia(path: &ReducedHessianPath<'_>, s: f64) -> Result<InertiaTriple> {
    let inertia = linalg::inertia_default(&path.evaluate(s)?);
    if inertia.zero > 0 {
        return Err(Error::NotAdmissible {
            endpoint: s,
            nullity: inertia.zero,
        });
    }
    Ok(inertia)
}

fn nudge(value: f64, candidates: &[BifurcationCandidate], outward: f64) -> f64 {
    if candidates
        .iter()
        .any(|c| (c.s_star - value).abs() < NUDGE_TRIGGER)
    {
        let moved = value + outward * NUDGE;
        if moved >= 1.0 {
            return moved;
        }
        return value - outward * NUDGE;
    }
    value
}

/// Spectral flow of the reduced Hessian along the trivial branch over
/// `interval`, cross-checked against the candidate instants inside it.
pub fn certify_bifurcation(
    qh: &PlanarConfiguration,
    m: &Masses,
    interval: (f64, f64),
) -> Result<FlowReport> {
    let (a0, b0) = interval;
    if !(a0 >= 1.0 && b0 > a0) {
        return Err(Error::Validation(format!("invalid interval [{a0}, {b0}]")));
    }
    let report = spectrum::cluster_spectrum(qh, m)?;
    let all = spectrum::bifurcation_candidates(&report);
    let a = nudge(a0, &all, -1.0);
    let b = nudge(b0, &all, 1.0);
    let mut nudges = Vec::new();
    if a != a0 {
        nudges.push((a0, a));
    }
    if b != b0 {
        nudges.push((b0, b));
    }
    let path = ReducedHessianPath::trivial_branch(qh, m, (a, b))?;
    let start_inertia = endpoint_inertia(&path, a)?;
    let end_inertia = endpoint_inertia(&path, b)?;
    let flow = start_inertia.minus as i64 - end_inertia.minus as i64;
    let inside: Vec<BifurcationCandidate> = all
        .into_iter()
        .filter(|c| c.s_star > a && c.s_star < b)
        .collect();
    let crossings: i64 = inside.iter().map(|c| c.multiplicity as i64).sum();
    if flow != crossings {
        return Err(Error::FlowMismatch { flow, crossings });
    }
    let kernel_dim = symmetry_kernel(qh, m)?.dim();
    Ok(FlowReport {
        flow,
        lower_bound: interval_lower_bound(flow, &inside),
        candidates: inside,
        interval: (a, b),
        nudges,
        kernel_dim,
        start_inertia,
        end_inertia,
    })
}

/// `floor(flow / beta)` with `beta` the largest multiplicity among the
/// candidates inside the interval.
fn interval_lower_bound(flow: i64, inside: &[BifurcationCandidate]) -> usize {
    match inside.iter().map(|c| c.multiplicity).max() {
        Some(beta) if flow > 0 => flow as usize / beta,
        _ => 0,
    }
}

/// Convenience: the spectrum report of the trivial configuration.
pub fn trivial_spectrum(qh: &PlanarConfiguration, m: &Masses) -> Result<SpectrumReport> {
    spectrum::cluster_spectrum(qh, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> (Configuration, Masses) {
        let m = Masses::equal(4).unwrap();
        let q = Configuration::new(
            3,
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
        )
        .unwrap();
        let one = SParameter::new(1.0).unwrap();
        (potential::normalize_to_sphere(&q, &m, one).unwrap(), m)
    }

    #[test]
    fn scalar_path_flow() {
        let path = ReducedHessianPath::new((-1.0, 1.0), |t| Ok(DMatrix::from_element(1, 1, t)));
        assert_eq!(spectral_flow(&path).unwrap(), 1);
        let flat = ReducedHessianPath::new((-1.0, 1.0), |_| Ok(DMatrix::identity(2, 2)));
        assert_eq!(spectral_flow(&flat).unwrap(), 0);
        let bad = ReducedHessianPath::new((0.0, 1.0), |t| Ok(DMatrix::from_element(1, 1, t)));
        assert!(matches!(spectral_flow(&bad), Err(Error::NotAdmissible { .. })));
    }

    #[test]
    fn rotation_generator_is_in_kernel() {
        let (q, m) = square();
        let form = full_hessian_form(&q, &m, 2.0).unwrap();
        let v = rotation_generator(&q, &m).unwrap();
        assert!(form.value(&v).abs() < 1e-9);
        assert!(form.apply(&v).norm() < 1e-8);
    }

    #[test]
    fn rotation_generator_on_axis_fails() {
        let m = Masses::equal(2).unwrap();
        let q = Configuration::new(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(rotation_generator(&q, &m), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn square_flow_reports() {
        let (q, m) = square();
        let qh = PlanarConfiguration::new(q).unwrap();
        let r = certify_bifurcation(&qh, &m, (1.05, 2.0)).unwrap();
        assert_eq!((r.flow, r.candidates.len(), r.lower_bound), (1, 1, 1));
        let r = certify_bifurcation(&qh, &m, (2.0, 5.0)).unwrap();
        assert_eq!((r.flow, r.candidates.len()), (0, 0));
    }

    #[test]
    fn non_solution_is_rejected() {
        let m = Masses::equal(3).unwrap();
        let q = Configuration::new(3, vec![0.0, 0.0, 0.0, 0.3, 1.0, 0.0, 0.0, 0.4, 0.7]).unwrap();
        let q = potential::recenter(&q, &m);
        let q = potential::normalize_to_sphere(&q, &m, SParameter::new(1.5).unwrap()).unwrap();
        assert!(matches!(
            full_hessian_form(&q, &m, 1.5),
            Err(Error::NotASolution { .. })
        ));
    }
}
