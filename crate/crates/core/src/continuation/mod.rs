//! Pseudo-arclength continuation of `F(q, s) = 0`, branch switching at
//! bifurcation instants, turning-point detection and classification.

mod switch;
mod system;
mod trace;

pub use switch::{branch_switch, orbit_distance, SwitchSeed};
pub use system::{AugmentedSystem, Constraint, NewtonOutcome, DRIFT_TOL, TANGENT_RTOL};
pub use trace::{detect_turning_points, point_on_chord, refine_turning_point, trace_branch};

use crate::error::{Error, Result};
use crate::flow;
use crate::linalg::InertiaTriple;
use crate::potential::{self, Configuration, Masses};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

/// Once `s - 1` is below this the problem is treated as fully rotation
/// invariant when counting inertia.
pub const ISOTROPY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSettings {
    pub delta: f64,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub max_steps: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub collision_tol: f64,
    pub epsilon_switch: f64,
    pub delta_s_switch: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            delta: 0.01,
            newton_tol: 1e-11,
            max_newton_iters: 50,
            max_steps: 20_000,
            s_min: 1.0 + 1e-9,
            s_max: 10.0,
            collision_tol: 1e-6,
            epsilon_switch: 1e-3,
            delta_s_switch: 1e-3,
        }
    }
}

impl ContinuationSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta", self.delta),
            ("newton_tol", self.newton_tol),
            ("collision_tol", self.collision_tol),
            ("delta_s_switch", self.delta_s_switch),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.epsilon_switch.is_finite() && self.epsilon_switch >= 0.0) {
            return Err(Error::Validation("epsilon_switch must be non-negative".into()));
        }
        if self.max_newton_iters == 0 || self.max_steps == 0 {
            return Err(Error::Validation("iteration limits must be positive".into()));
        }
        if !(self.s_min >= 1.0 && self.s_max > self.s_min && self.s_max.is_finite()) {
            return Err(Error::Validation(format!(
                "need 1 <= s_min < s_max, got [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    LocalMinimum,
    Saddle,
    Degenerate,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::LocalMinimum => "local_minimum",
            Classification::Saddle => "saddle",
            Classification::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local_minimum" => Ok(Classification::LocalMinimum),
            "saddle" => Ok(Classification::Saddle),
            "degenerate" => Ok(Classification::Degenerate),
            other => Err(Error::InvalidInput(format!("unknown classification {other:?}"))),
        }
    }
}

pub fn classify_inertia(inertia: InertiaTriple) -> Classification {
    if inertia.zero > 0 {
        Classification::Degenerate
    } else if inertia.minus == 0 {
        Classification::LocalMinimum
    } else {
        Classification::Saddle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub q: Configuration,
    pub s: f64,
    pub potential: f64,
    pub residual_norm: f64,
    /// Inertia of the symmetry-reduced Hessian.
    pub inertia: InertiaTriple,
    pub arclength: f64,
}

impl BranchPoint {
    /// Evaluates diagnostics at `(q, s)`; the point is not required to be
    /// a solution.
    pub fn evaluate(q: Configuration, s: f64, m: &Masses, arclength: f64) -> Result<Self> {
        if q.n() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                actual: q.n(),
            });
        }
        q.check_collisions()?;
        let d = q.dim();
        let residual_norm = potential::balanced_field(q.coords(), d, m, s).norm();
        let potential = potential::potential_value(q.coords(), d, m);
        let inertia = reduced_inertia(q.coords(), d, m, s);
        Ok(Self {
            q,
            s,
            potential,
            residual_norm,
            inertia,
            arclength,
        })
    }

    /// `(q, s)` as one vector.
    pub fn state(&self) -> DVector<f64> {
        let nd = self.q.coords().len();
        let mut x = DVector::zeros(nd + 1);
        x.rows_mut(0, nd).copy_from_slice(self.q.coords());
        x[nd] = self.s;
        x
    }

    pub fn classification(&self) -> Classification {
        classify_inertia(self.inertia)
    }

    /// Mass-weighted size of the s-axis components: zero exactly on the
    /// trivial branch.
    pub fn normal_amplitude(&self, m: &Masses) -> f64 {
        let d = self.q.dim();
        (0..self.q.n())
            .map(|i| m[i] * self.q.coords()[i * d].powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Inertia of the Hessian form reduced by the continuous symmetries
/// present at parameter `s`.
pub(crate) fn reduced_inertia(coords: &[f64], dim: usize, m: &Masses, s: f64) -> InertiaTriple {
    let form = flow::hessian_form_unchecked(coords, dim, m, s);
    let gens = flow::symmetry_generators(coords, dim, m, s, ISOTROPY_TOL);
    flow::reduce_unchecked(&form, &gens).inertia()
}

/// `local_minimum` iff the reduced Hessian is positive definite,
/// `degenerate` iff it has a kernel, `saddle` otherwise.
pub fn classify_point(point: &BranchPoint) -> Classification {
    point.classification()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    TurningPoint,
    StartBifurcation,
    CollisionStop,
    SBound,
    MaxSteps,
    LoopClosed,
    /// The branch came back to the trivial branch.
    TrivialReturn,
    /// The corrector failed at the smallest allowed step.
    NewtonFailure,
    /// The tangent was not unique (a secondary bifurcation).
    SingularTangent,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TurningPoint => "turning_point",
            EventKind::StartBifurcation => "start_bifurcation",
            EventKind::CollisionStop => "collision_stop",
            EventKind::SBound => "s_bound",
            EventKind::MaxSteps => "max_steps",
            EventKind::LoopClosed => "loop_closed",
            EventKind::TrivialReturn => "trivial_return",
            EventKind::NewtonFailure => "newton_failure",
            EventKind::SingularTangent => "singular_tangent",
        }
    }

    /// Whether the event ends a trace.
    pub fn is_terminal(self) -> bool {
        !matches!(
            self,
            EventKind::TurningPoint | EventKind::StartBifurcation | EventKind::SingularTangent
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const ALL: [EventKind; 9] = [
            EventKind::TurningPoint,
            EventKind::StartBifurcation,
            EventKind::CollisionStop,
            EventKind::SBound,
            EventKind::MaxSteps,
            EventKind::LoopClosed,
            EventKind::TrivialReturn,
            EventKind::NewtonFailure,
            EventKind::SingularTangent,
        ];
        ALL.into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown event kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchEvent {
    pub index: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchParent {
    pub branch_id: usize,
    pub s_star: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub events: Vec<BranchEvent>,
    pub parent: Option<BranchParent>,
    /// s-component of the unit tangent at each point, when known.
    pub tangent_s: Vec<f64>,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn termination(&self) -> Option<EventKind> {
        self.events.iter().rev().map(|e| e.kind).find(|k| k.is_terminal())
    }

    pub fn events_of(&self, kind: EventKind) -> Vec<usize> {
        self.events.iter().filter(|e| e.kind == kind).map(|e| e.index).collect()
    }

    pub fn last(&self) -> Option<&BranchPoint> {
        self.points.last()
    }
}

/// Residual of the step system at `(q, s)`: `F`, the arclength equation
/// against `anchor`, and the gauge rows (generators taken at the anchor).
pub fn augmented_residual(
    x: (&Configuration, f64),
    anchor: (&Configuration, f64),
    delta: f64,
    m: &Masses,
) -> Result<DVector<f64>> {
    let (sys, lifted) = step_system(x, anchor, delta, m)?;
    sys.residual(&lifted)
}

/// Analytic Jacobian of [`augmented_residual`] with respect to
/// `(q, s, sigma)`.
pub fn augmented_jacobian(
    x: (&Configuration, f64),
    anchor: (&Configuration, f64),
    delta: f64,
    m: &Masses,
) -> Result<DMatrix<f64>> {
    let (sys, lifted) = step_system(x, anchor, delta, m)?;
    sys.jacobian(&lifted)
}

fn state_of(q: &Configuration, s: f64) -> DVector<f64> {
    let nd = q.coords().len();
    let mut x = DVector::zeros(nd + 1);
    x.rows_mut(0, nd).copy_from_slice(q.coords());
    x[nd] = s;
    x
}

fn step_system<'a>(
    x: (&Configuration, f64),
    anchor: (&Configuration, f64),
    delta: f64,
    m: &'a Masses,
) -> Result<(AugmentedSystem<'a>, DVector<f64>)> {
    let (q, s) = x;
    let (qa, sa) = anchor;
    if q.n() != m.len() || qa.n() != m.len() || q.dim() != qa.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.len() * qa.dim(),
            actual: q.coords().len(),
        });
    }
    let sys = AugmentedSystem::new(
        m,
        q.dim(),
        qa.to_vector(),
        Constraint::Sphere {
            anchor: state_of(qa, sa),
            delta,
        },
    );
    let lifted = sys.lift(&state_of(q, s));
    Ok((sys, lifted))
}

/// Corrects `x0` onto the solution curve at arclength distance `delta`
/// from `anchor`.
pub fn damped_newton(
    x0: (&Configuration, f64),
    anchor: (&Configuration, f64),
    delta: f64,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Result<(BranchPoint, usize)> {
    let (sys, lifted) = step_system(x0, anchor, delta, m)?;
    let out = sys.solve(&lifted, settings)?;
    let nd = sys.nd();
    let q = Configuration::new(x0.0.dim(), out.x.as_slice()[..nd].to_vec())?;
    Ok((BranchPoint::evaluate(q, out.x[nd], m, 0.0)?, out.iterations))
}

/// Unit tangent of the solution curve at `point` in `(q, s)` space.
pub fn tangent_vector(
    point: &BranchPoint,
    previous: Option<&DVector<f64>>,
    m: &Masses,
) -> Result<DVector<f64>> {
    system::tangent_at(&point.state(), point.q.dim(), m, previous)
}
