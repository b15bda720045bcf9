//! The augmented system solved at every continuation step, its Jacobian,
//! the damped Newton corrector and the tangent computation.
//!
//! Unknowns are `x = (q, s, sigma)`. `sigma` holds one unfolding
//! coefficient per gauge generator: the residual is `F(q, s) + sum sigma_k
//! xi_k`, closed by one constraint row and one gauge row
//! `<xi_k, q - q_anchor>_M = 0` per generator. At a solution the identity
//! `<M F(q, s), xi(q)>_M = 0` forces `sigma = 0`, so the square system has
//! exactly the solutions of `F = 0`.

use super::ContinuationSettings;
use crate::error::{Error, Result};
use crate::linalg;
use crate::potential::{self, axis_weight, Masses};
use nalgebra::{DMatrix, DVector};

/// Largest re-centring or re-normalisation correction accepted after
/// convergence.
pub const DRIFT_TOL: f64 = 1e-8;
/// Relative singular-value threshold used when computing tangents.
pub const TANGENT_RTOL: f64 = 1e-8;
const MIN_DAMPING: f64 = 1.0 / 1024.0;
const SVD_RCOND: f64 = 1e-7;

/// The scalar equation appended to `F = 0`.
#[derive(Debug, Clone)]
pub enum Constraint {
    /// `|(q, s) - anchor|^2 - delta^2 = 0` (plain Euclidean).
    Sphere { anchor: DVector<f64>, delta: f64 },
    /// `s - value = 0`.
    FixedS(f64),
    /// `<q - base, direction>_M - offset = 0`.
    Hyperplane {
        base: DVector<f64>,
        direction: DVector<f64>,
        offset: f64,
    },
    /// `<(q, s) - base, direction> - offset = 0` (plain Euclidean).
    Linear {
        base: DVector<f64>,
        direction: DVector<f64>,
        offset: f64,
    },
}

/// `F(q, s) = 0` augmented by a constraint and gauge rows.
#[derive(Debug, Clone)]
pub struct AugmentedSystem<'a> {
    masses: &'a Masses,
    dim: usize,
    generators: Vec<DVector<f64>>,
    gauge_anchor: DVector<f64>,
    constraint: Constraint,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    /// Converged unknowns `(q, s, sigma)`.
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl<'a> AugmentedSystem<'a> {
    /// Gauge generators are the rotations fixing the s-axis, evaluated at
    /// `gauge_anchor`.
    pub fn new(masses: &'a Masses, dim: usize, gauge_anchor: DVector<f64>, constraint: Constraint) -> Self {
        let generators = gauge_generators(gauge_anchor.as_slice(), dim, masses);
        Self {
            masses,
            dim,
            generators,
            gauge_anchor,
            constraint,
        }
    }

    /// Like [`AugmentedSystem::new`] with explicit gauge generators.
    pub fn with_generators(
        masses: &'a Masses,
        dim: usize,
        generators: Vec<DVector<f64>>,
        gauge_anchor: DVector<f64>,
        constraint: Constraint,
    ) -> Self {
        Self {
            masses,
            dim,
            generators,
            gauge_anchor,
            constraint,
        }
    }

    pub fn nd(&self) -> usize {
        self.masses.len() * self.dim
    }

    pub fn gauge_count(&self) -> usize {
        self.generators.len()
    }

    /// Number of unknowns (and equations).
    pub fn size(&self) -> usize {
        self.nd() + 1 + self.generators.len()
    }

    /// Extends `(q, s)` by zero unfolding coefficients.
    pub fn lift(&self, qs: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.size());
        x.rows_mut(0, self.nd() + 1).copy_from(qs);
        x
    }

    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let nd = self.nd();
        let q = &x.as_slice()[..nd];
        let s = x[nd];
        potential::check_collisions(q, self.dim)?;
        let mut out = DVector::zeros(self.size());
        let f = potential::balanced_field(q, self.dim, self.masses, s);
        out.rows_mut(0, nd).copy_from(&f);
        for (k, xi) in self.generators.iter().enumerate() {
            out.rows_mut(0, nd).axpy(x[nd + 1 + k], xi, 1.0);
        }
        out[nd] = match &self.constraint {
            Constraint::Sphere { anchor, delta } => {
                (x.rows(0, nd + 1) - anchor).norm_squared() - delta * delta
            }
            Constraint::FixedS(value) => s - value,
            Constraint::Hyperplane {
                base,
                direction,
                offset,
            } => {
                let diff = DVector::from_column_slice(q) - base;
                potential::mass_inner(diff.as_slice(), direction.as_slice(), self.dim, self.masses) - offset
            }
            Constraint::Linear {
                base,
                direction,
                offset,
            } => (x.rows(0, nd + 1) - base).dot(direction) - offset,
        };
        for (k, xi) in self.generators.iter().enumerate() {
            let diff = DVector::from_column_slice(q) - &self.gauge_anchor;
            out[nd + 1 + k] = potential::mass_inner(xi.as_slice(), diff.as_slice(), self.dim, self.masses);
        }
        Ok(out)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let nd = self.nd();
        let q = &x.as_slice()[..nd];
        let s = x[nd];
        potential::check_collisions(q, self.dim)?;
        let n = self.size();
        let mut j = DMatrix::zeros(n, n);
        let (fq, fs) = field_derivatives(q, self.dim, self.masses, s);
        j.view_mut((0, 0), (nd, nd)).copy_from(&fq);
        j.view_mut((0, nd), (nd, 1)).copy_from(&fs);
        let mvec = self.masses.expanded(self.dim);
        for (k, xi) in self.generators.iter().enumerate() {
            j.view_mut((0, nd + 1 + k), (nd, 1)).copy_from(xi);
            let row = xi.component_mul(&mvec).transpose();
            j.view_mut((nd + 1 + k, 0), (1, nd)).copy_from(&row);
        }
        match &self.constraint {
            Constraint::Sphere { anchor, .. } => {
                let d = (x.rows(0, nd + 1) - anchor) * 2.0;
                j.view_mut((nd, 0), (1, nd + 1)).copy_from(&d.transpose());
            }
            Constraint::FixedS(_) => j[(nd, nd)] = 1.0,
            Constraint::Hyperplane { direction, .. } => {
                let row = direction.component_mul(&mvec).transpose();
                j.view_mut((nd, 0), (1, nd)).copy_from(&row);
            }
            Constraint::Linear { direction, .. } => {
                j.view_mut((nd, 0), (1, nd + 1)).copy_from(&direction.transpose());
            }
        }
        Ok(j)
    }

    /// Damped Newton iteration from `x0`: full steps are halved until the
    /// residual norm decreases.
    pub fn solve(&self, x0: &DVector<f64>, settings: &ContinuationSettings) -> Result<NewtonOutcome> {
        let mut x = x0.clone();
        let mut g = self.residual(&x)?;
        let mut norm = g.norm();
        for it in 0..=settings.max_newton_iters {
            if norm < settings.newton_tol {
                self.check_drift(&x)?;
                return Ok(NewtonOutcome {
                    x,
                    iterations: it,
                    residual: norm,
                });
            }
            if it == settings.max_newton_iters {
                break;
            }
            let j = self.jacobian(&x)?;
            let step = j.clone().lu().solve(&(-&g)).ok_or(Error::SingularSystem)?;
            if step.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSystem);
            }
            if let Some((trial, gt, nt)) = self.backtrack(&x, &step, norm) {
                x = trial;
                g = gt;
                norm = nt;
                continue;
            }
            // Nearly singular Jacobian (close to a symmetric point): retry
            // with a truncated least-squares step.
            let svd = j.svd(true, true);
            let cutoff = SVD_RCOND * svd.singular_values.max();
            let step = svd.solve(&(-&g), cutoff).map_err(|_| Error::SingularSystem)?;
            match self.backtrack(&x, &step, norm) {
                Some((trial, gt, nt)) => {
                    x = trial;
                    g = gt;
                    norm = nt;
                }
                None => {
                    return Err(Error::NoConvergence {
                        iterations: it + 1,
                        residual: norm,
                    })
                }
            }
        }
        Err(Error::NoConvergence {
            iterations: settings.max_newton_iters,
            residual: norm,
        })
    }

    fn backtrack(
        &self,
        x: &DVector<f64>,
        step: &DVector<f64>,
        norm: f64,
    ) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let mut t = 1.0;
        while t >= MIN_DAMPING {
            let trial = x + step * t;
            if let Ok(gt) = self.residual(&trial) {
                let nt = gt.norm();
                if nt < norm {
                    return Some((trial, gt, nt));
                }
            }
            t *= 0.5;
        }
        None
    }

    /// A converged point must already be centred and on the S-sphere.
    fn check_drift(&self, x: &DVector<f64>) -> Result<()> {
        let nd = self.nd();
        let q = &x.as_slice()[..nd];
        let s = x[nd];
        let com = potential::center_of_mass_raw(q, self.dim, self.masses);
        let shift = com.iter().map(|c| c * c).sum::<f64>().sqrt();
        let norm = potential::s_inner_raw(q, q, self.dim, self.masses, s).sqrt();
        let correction = shift.max((norm - 1.0).abs());
        if correction > DRIFT_TOL {
            return Err(Error::NormalizationDrift { correction });
        }
        Ok(())
    }
}

pub(crate) fn gauge_generators(q: &[f64], dim: usize, m: &Masses) -> Vec<DVector<f64>> {
    if dim == 3 {
        crate::flow::plane_rotation(q, dim, m, 1, 2).into_iter().collect()
    } else {
        Vec::new()
    }
}

/// `dF/dq = M^-1 D^2U + U S_hat + S_hat q (grad U)^T` and
/// `dF/ds = U (axis-0 indicator) q`.
pub(crate) fn field_derivatives(q: &[f64], dim: usize, m: &Masses, s: f64) -> (DMatrix<f64>, DVector<f64>) {
    let nd = q.len();
    let u = potential::potential_value(q, dim, m);
    let g = potential::potential_gradient_raw(q, dim, m);
    let h = potential::potential_hessian_raw(q, dim, m);
    let fq = DMatrix::from_fn(nd, nd, |r, c| {
        let w = axis_weight(s, r % dim);
        let diag = if r == c { u * w } else { 0.0 };
        h[(r, c)] / m[r / dim] + diag + w * q[r] * g[c]
    });
    let fs = DVector::from_fn(nd, |r, _| if r % dim == 0 { u * q[r] } else { 0.0 });
    (fq, fs)
}

/// Unit null vector in `(q, s)` of `[dF/dq dF/ds xi; gauge 0 0]` at a
/// solution, oriented along `previous` (or towards increasing `s`).
pub fn tangent_at(
    qs: &DVector<f64>,
    dim: usize,
    m: &Masses,
    previous: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let nd = qs.len() - 1;
    let q = &qs.as_slice()[..nd];
    let s = qs[nd];
    potential::check_collisions(q, dim)?;
    let gens = gauge_generators(q, dim, m);
    let g = gens.len();
    let mut a = DMatrix::zeros(nd + g, nd + 1 + g);
    let (fq, fs) = field_derivatives(q, dim, m, s);
    a.view_mut((0, 0), (nd, nd)).copy_from(&fq);
    a.view_mut((0, nd), (nd, 1)).copy_from(&fs);
    let mvec = m.expanded(dim);
    for (k, xi) in gens.iter().enumerate() {
        a.view_mut((0, nd + 1 + k), (nd, 1)).copy_from(xi);
        let row = xi.component_mul(&mvec).transpose();
        a.view_mut((nd + k, 0), (1, nd)).copy_from(&row);
    }
    // an infinite tolerance returns every right singular vector, ascending
    let (vectors, singular) = linalg::null_space(&a, f64::INFINITY);
    let smax = singular.last().copied().unwrap_or(0.0);
    let small = singular.iter().filter(|&&v| v <= TANGENT_RTOL * smax).count();
    if small > 1 {
        return Err(Error::AmbiguousTangent { dimension: small });
    }
    let v = &vectors[0];
    let mut t = v.rows(0, nd + 1).into_owned();
    let norm = t.norm();
    if norm < 0.5 {
        return Err(Error::AmbiguousTangent { dimension: small.max(1) });
    }
    t /= norm;
    let flip = match previous {
        Some(p) => t.dot(p) < 0.0,
        None => t[nd] < 0.0,
    };
    if flip {
        t = -t;
    }
    Ok(t)
}
