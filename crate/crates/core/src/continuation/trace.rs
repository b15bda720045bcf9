//! Predictor-corrector tracing of a single branch.

use super::system::{tangent_at, AugmentedSystem, Constraint};
use super::{Branch, BranchEvent, BranchParent, BranchPoint, ContinuationSettings, EventKind};
use crate::error::{Error, Result};
use crate::potential::{Configuration, Masses};
use nalgebra::DVector;

/// Tolerance in fingerprint and `s` for declaring a loop closed.
pub const LOOP_TOL: f64 = 1e-6;
const HALVINGS: usize = 3;
const FAST_ITERS: usize = 3;
const FAST_STREAK: usize = 3;

fn config_of(x: &DVector<f64>, dim: usize) -> Result<Configuration> {
    Configuration::from_vector(dim, &x.rows(0, x.len() - 1).into_owned())
}

struct Step {
    point: BranchPoint,
    iterations: usize,
    size: f64,
}

/// Traces the branch that leaves `anchor` through `first`.
///
/// The first point is recorded at index 0 with a `start_bifurcation`
/// event. Each step predicts along the unit tangent and corrects on the
/// sphere of radius `h` around the current point. Failed corrections halve
/// `h` (never below `delta / 8`); three consecutive fast corrections double
/// it again, capped at `delta`. Termination reasons are recorded as events.
pub fn trace_branch(
    anchor: &BranchPoint,
    first: &BranchPoint,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Branch {
    let dim = first.q.dim();
    let nd = first.q.coords().len();
    let mut branch = Branch {
        points: vec![first.clone()],
        events: vec![BranchEvent {
            index: 0,
            kind: EventKind::StartBifurcation,
        }],
        parent: Some(BranchParent {
            branch_id: 0,
            s_star: anchor.s,
        }),
        tangent_s: Vec::new(),
    };
    let secant = {
        let d = first.state() - anchor.state();
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            DVector::from_fn(nd + 1, |k, _| if k == nd { 1.0 } else { 0.0 })
        }
    };
    let mut tangent = match tangent_at(&first.state(), dim, m, Some(&secant)) {
        Ok(t) => t,
        Err(_) => {
            branch.events.push(BranchEvent {
                index: 0,
                kind: EventKind::SingularTangent,
            });
            secant
        }
    };
    branch.tangent_s.push(tangent[nd]);

    let mut fingerprints = vec![first.q.fingerprint()];
    let anchor_print = anchor.q.fingerprint();
    let mut h = settings.delta;
    let mut streak = 0;
    let mut amp_prev = first.normal_amplitude(m);
    let mut amp_max = amp_prev;
    let min_step = settings.delta / 8.0 * (1.0 - 1e-12);

    for _ in 0..settings.max_steps {
        let current = branch.points.last().expect("non-empty").clone();
        let index = branch.points.len();
        let step = match corrector_step(&current, &tangent, h, min_step, settings, m) {
            Some(step) => step,
            None => {
                branch.events.push(BranchEvent {
                    index: index - 1,
                    kind: EventKind::NewtonFailure,
                });
                return branch;
            }
        };
        if step.size < h {
            h = step.size;
            streak = 0;
        } else if step.iterations <= FAST_ITERS {
            streak += 1;
            if streak >= FAST_STREAK {
                h = (2.0 * h).min(settings.delta);
                streak = 0;
            }
        } else {
            streak = 0;
        }
        let mut point = step.point;
        point.arclength = current.arclength + step.size;

        if point.s < settings.s_min || point.s > settings.s_max {
            let bound = if point.s < settings.s_min {
                settings.s_min
            } else {
                settings.s_max
            };
            match solve_at_bound(&current, &point, bound, settings, m) {
                Ok(mut last) => {
                    last.arclength = current.arclength + (last.state() - current.state()).norm();
                    branch.tangent_s.push(
                        tangent_at(&last.state(), dim, m, Some(&tangent))
                            .map(|t| t[nd])
                            .unwrap_or(tangent[nd]),
                    );
                    branch.points.push(last);
                    branch.events.push(BranchEvent {
                        index,
                        kind: EventKind::SBound,
                    });
                }
                Err(_) => branch.events.push(BranchEvent {
                    index: index - 1,
                    kind: EventKind::NewtonFailure,
                }),
            }
            return branch;
        }

        let amp = point.normal_amplitude(m);
        if amp_max >= 5.0 * settings.delta && amp < 2.0 * settings.delta && amp > amp_prev {
            branch.events.push(BranchEvent {
                index: index - 1,
                kind: EventKind::TrivialReturn,
            });
            return branch;
        }
        amp_max = amp_max.max(amp);
        amp_prev = amp;

        let next_tangent = match tangent_at(&point.state(), dim, m, Some(&tangent)) {
            Ok(t) => t,
            Err(_) => {
                branch.events.push(BranchEvent {
                    index,
                    kind: EventKind::SingularTangent,
                });
                let d = point.state() - current.state();
                let n = d.norm();
                d / n
            }
        };
        if next_tangent[nd] * tangent[nd] < 0.0 {
            branch.events.push(BranchEvent {
                index,
                kind: EventKind::TurningPoint,
            });
        }
        tangent = next_tangent;
        branch.tangent_s.push(tangent[nd]);

        let print = point.q.fingerprint();
        let closes = |other: &[f64], s: f64| {
            (s - point.s).abs() < LOOP_TOL
                && other.iter().zip(&print).all(|(a, b)| (a - b).abs() < LOOP_TOL)
        };
        let looped = fingerprints
            .iter()
            .take(fingerprints.len().saturating_sub(2))
            .zip(&branch.points)
            .any(|(f, p)| closes(f, p.s))
            || (index > 2 && closes(&anchor_print, anchor.s));
        let collided = min_distance(&point.q) < settings.collision_tol;
        fingerprints.push(print);
        branch.points.push(point);
        if collided {
            branch.events.push(BranchEvent {
                index,
                kind: EventKind::CollisionStop,
            });
            return branch;
        }
        if looped {
            branch.events.push(BranchEvent {
                index,
                kind: EventKind::LoopClosed,
            });
            return branch;
        }
    }
    branch.events.push(BranchEvent {
        index: branch.points.len() - 1,
        kind: EventKind::MaxSteps,
    });
    branch
}

fn min_distance(q: &Configuration) -> f64 {
    q.pairwise_distances().into_iter().fold(f64::INFINITY, f64::min)
}

fn corrector_step(
    current: &BranchPoint,
    tangent: &DVector<f64>,
    h: f64,
    min_step: f64,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Option<Step> {
    let x = current.state();
    let dim = current.q.dim();
    let mut size = h;
    for _ in 0..=HALVINGS {
        if size < min_step {
            break;
        }
        let sys = AugmentedSystem::new(
            m,
            dim,
            current.q.to_vector(),
            Constraint::Sphere {
                anchor: x.clone(),
                delta: size,
            },
        );
        let guess = sys.lift(&(&x + tangent * size));
        if let Ok(out) = sys.solve(&guess, settings) {
            let qs = out.x.rows(0, x.len()).into_owned();
            if (&qs - &x).dot(tangent) > 0.5 * size {
                if let Ok(point) = config_of(&qs, dim)
                    .and_then(|q| BranchPoint::evaluate(q, qs[x.len() - 1], m, 0.0))
                {
                    return Some(Step {
                        point,
                        iterations: out.iterations,
                        size,
                    });
                }
            }
        }
        size *= 0.5;
    }
    None
}

fn solve_at_bound(
    current: &BranchPoint,
    overshoot: &BranchPoint,
    bound: f64,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Result<BranchPoint> {
    let a = current.state();
    let b = overshoot.state();
    let nd = a.len() - 1;
    let frac = ((bound - a[nd]) / (b[nd] - a[nd])).clamp(0.0, 1.0);
    let mut guess = &a + (&b - &a) * frac;
    guess[nd] = bound;
    let dim = current.q.dim();
    let sys = AugmentedSystem::new(m, dim, current.q.to_vector(), Constraint::FixedS(bound));
    let out = sys.solve(&sys.lift(&guess), settings)?;
    let q = config_of(&out.x.rows(0, nd + 1).into_owned(), dim)?;
    BranchPoint::evaluate(q, bound, m, 0.0)
}

/// Solves for the branch point whose projection onto the chord from `a`
/// to `b` sits at fraction `theta`.
pub fn point_on_chord(
    a: &BranchPoint,
    b: &BranchPoint,
    theta: f64,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Result<BranchPoint> {
    let xa = a.state();
    let chord = b.state() - &xa;
    let len = chord.norm();
    if !(len > 0.0) {
        return Err(Error::InvalidInput("chord endpoints coincide".into()));
    }
    let dir = &chord / len;
    let sys = AugmentedSystem::new(
        m,
        a.q.dim(),
        a.q.to_vector(),
        Constraint::Linear {
            base: xa.clone(),
            direction: dir,
            offset: theta * len,
        },
    );
    let out = sys.solve(&sys.lift(&(&xa + &chord * theta)), settings)?;
    let nd = xa.len() - 1;
    let q = config_of(&out.x.rows(0, nd + 1).into_owned(), a.q.dim())?;
    BranchPoint::evaluate(q, out.x[nd], m, a.arclength + theta * (b.arclength - a.arclength))
}

/// Locates the turning point between points `index - 1` and `index` by
/// regula falsi on the s-component of the tangent along the chord.
pub fn refine_turning_point(
    branch: &Branch,
    index: usize,
    settings: &ContinuationSettings,
    m: &Masses,
) -> Result<BranchPoint> {
    if index == 0 || index >= branch.points.len() {
        return Err(Error::InvalidInput(format!("no chord ends at index {index}")));
    }
    let a = &branch.points[index - 1];
    let b = &branch.points[index];
    let chord = b.state() - a.state();
    let nd = chord.len() - 1;
    let dim = a.q.dim();
    let ts = |p: &BranchPoint| -> Result<f64> { Ok(tangent_at(&p.state(), dim, m, Some(&chord))?[nd]) };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut glo, mut ghi) = (ts(a)?, ts(b)?);
    if glo * ghi > 0.0 {
        return Err(Error::InvalidInput(format!("no sign change of ds at index {index}")));
    }
    let mut best = if glo.abs() < ghi.abs() { a.clone() } else { b.clone() };
    let mut side = 0;
    for _ in 0..60 {
        let theta = (lo * ghi - hi * glo) / (ghi - glo);
        let p = point_on_chord(a, b, theta, settings, m)?;
        let g = ts(&p)?;
        best = p;
        if g.abs() < 1e-12 || hi - lo < 1e-14 {
            break;
        }
        if g * glo > 0.0 {
            lo = theta;
            glo = g;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = theta;
            ghi = g;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best)
}

/// Indices of turning points: each sign change of the tangent's
/// s-component, refined to whichever neighbouring point is the extremum
/// in `s`. Falls back to secant differences when tangents are missing.
pub fn detect_turning_points(branch: &Branch) -> Vec<usize> {
    let pts = &branch.points;
    if pts.len() < 3 && branch.tangent_s.len() != pts.len() {
        return Vec::new();
    }
    let mut out = Vec::new();
    if branch.tangent_s.len() == pts.len() {
        let ts = &branch.tangent_s;
        for i in 1..pts.len() {
            if ts[i - 1] * ts[i] < 0.0 {
                let pick = if ts[i - 1] > 0.0 {
                    if pts[i - 1].s >= pts[i].s { i - 1 } else { i }
                } else if pts[i - 1].s <= pts[i].s {
                    i - 1
                } else {
                    i
                };
                out.push(pick);
            }
        }
    } else {
        for i in 1..pts.len() - 1 {
            let before = pts[i].s - pts[i - 1].s;
            let after = pts[i + 1].s - pts[i].s;
            if before * after < 0.0 {
                out.push(i);
            }
        }
    }
    out.dedup();
    out
}
