//! Switching from the trivial branch onto a bifurcating branch.

use super::system::{AugmentedSystem, Constraint};
use super::{BranchPoint, ContinuationSettings};
use crate::error::{Error, Result};
use crate::potential::{self, Configuration, Masses};
use crate::spectrum::PlanarConfiguration;
use nalgebra::DVector;

/// The trivial-branch anchor and the first point on the new branch.
#[derive(Debug, Clone)]
pub struct SwitchSeed {
    pub anchor: BranchPoint,
    pub first: BranchPoint,
    /// Signed displacement along the kernel direction that succeeded.
    pub offset: f64,
    /// Signed parameter offset of the initial guess.
    pub delta_s: f64,
    pub attempts: usize,
}

/// Mass-weighted distance between two configurations modulo the rotations
/// fixing the s-axis.
pub fn orbit_distance(a: &Configuration, b: &Configuration, m: &Masses) -> f64 {
    let d = a.dim();
    let (ac, bc) = (a.coords(), b.coords());
    let n = a.n();
    if d != 3 {
        return potential::mass_inner(
            &diff(ac, bc),
            &diff(ac, bc),
            d,
            m,
        )
        .sqrt();
    }
    let (mut c, mut s) = (0.0, 0.0);
    for i in 0..n {
        let (ay, az) = (ac[i * 3 + 1], ac[i * 3 + 2]);
        let (by, bz) = (bc[i * 3 + 1], bc[i * 3 + 2]);
        c += m[i] * (ay * by + az * bz);
        s += m[i] * (az * by - ay * bz);
    }
    let theta = s.atan2(c);
    let (sin, cos) = theta.sin_cos();
    let mut rotated = bc.to_vec();
    for i in 0..n {
        let (by, bz) = (bc[i * 3 + 1], bc[i * 3 + 2]);
        rotated[i * 3 + 1] = cos * by - sin * bz;
        rotated[i * 3 + 2] = sin * by + cos * bz;
    }
    let dv = diff(ac, &rotated);
    potential::mass_inner(&dv, &dv, d, m).sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Leaves the trivial branch at `s_star` along `kernel_dir`.
///
/// The new point is found with the displacement along the kernel direction
/// fixed (`<q - q_hat, kernel_dir>_M = offset`) and `s` free, so the
/// corrector cannot fall back onto the trivial branch while the offset is
/// nonzero. Signs of the offset and the parameter guess are retried in the
/// order (+,+), (-,+), (+,-), (-,-), then once more with a tenfold offset.
pub fn branch_switch(
    qh: &PlanarConfiguration,
    s_star: f64,
    kernel_dir: &DVector<f64>,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Result<SwitchSeed> {
    let base = qh.normalized(m)?;
    let q0 = base.base().clone();
    let d = q0.dim();
    if kernel_dir.len() != q0.coords().len() {
        return Err(Error::DimensionMismatch {
            expected: q0.coords().len(),
            actual: kernel_dir.len(),
        });
    }
    let norm = potential::mass_inner(kernel_dir.as_slice(), kernel_dir.as_slice(), d, m).sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroVector("kernel direction".into()));
    }
    let phi = kernel_dir / norm;
    let anchor = BranchPoint::evaluate(q0.clone(), s_star, m, 0.0)?;
    let qhat = q0.to_vector();
    let threshold = 10.0 * settings.newton_tol;

    let eps = settings.epsilon_switch;
    let ds = settings.delta_s_switch;
    if eps == 0.0 {
        let sys = AugmentedSystem::new(m, d, qhat.clone(), Constraint::FixedS(s_star + ds));
        let mut x0 = qhat.clone().insert_row(qhat.len(), s_star + ds);
        x0 = sys.lift(&x0);
        let out = sys.solve(&x0, settings)?;
        let q = Configuration::new(d, out.x.as_slice()[..qhat.len()].to_vec())?;
        return Err(Error::FellBackToTrivial {
            distance: orbit_distance(&q, &q0, m),
        });
    }

    let signs = [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)];
    let mut last_err = Error::NoConvergence {
        iterations: 0,
        residual: f64::NAN,
    };
    let mut attempts = 0;
    for scale in [1.0, 10.0] {
        for (se, ss) in signs {
            attempts += 1;
            let offset = se * scale * eps;
            let s0 = s_star + ss * ds;
            match attempt(&q0, &qhat, &phi, offset, s0, settings, m) {
                Ok(q) => {
                    let distance = orbit_distance(&q.0, &q0, m);
                    if distance <= threshold {
                        last_err = Error::FellBackToTrivial { distance };
                        continue;
                    }
                    let arclength = (q.1 - s_star).hypot(
                        (q.0.to_vector() - &qhat).norm(),
                    );
                    let first = BranchPoint::evaluate(q.0, q.1, m, arclength)?;
                    return Ok(SwitchSeed {
                        anchor,
                        first,
                        offset,
                        delta_s: ss * ds,
                        attempts,
                    });
                }
                Err(e) => last_err = e,
            }
        }
    }
    Err(last_err)
}

fn attempt(
    q0: &Configuration,
    qhat: &DVector<f64>,
    phi: &DVector<f64>,
    offset: f64,
    s0: f64,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Result<(Configuration, f64)> {
    let d = q0.dim();
    let nd = qhat.len();
    let guess = Configuration::from_vector(d, &(qhat + phi * offset))?;
    let guess = potential::normalize_to_sphere(&guess, m, crate::SParameter::new(s0.max(1.0))?)?;
    let sys = AugmentedSystem::new(
        m,
        d,
        qhat.clone(),
        Constraint::Hyperplane {
            base: qhat.clone(),
            direction: phi.clone(),
            offset,
        },
    );
    let x0 = sys.lift(&guess.to_vector().insert_row(nd, s0));
    let out = sys.solve(&x0, settings)?;
    let q = Configuration::new(d, out.x.as_slice()[..nd].to_vec())?;
    Ok((q, out.x[nd]))
}
