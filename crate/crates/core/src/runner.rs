//! Orchestration behind the `analyze` and `trace` commands.

use crate::continuation::{
    branch_switch, detect_turning_points, orbit_distance, trace_branch, Branch, BranchPoint,
    Constraint, AugmentedSystem, EventKind, SwitchSeed,
};
use crate::error::{Error, Result};
use crate::flow::{self, FlowReport};
use crate::linalg::InertiaTriple;
use crate::parallel::Execution;
use crate::potential::{self, Configuration, Masses};
use crate::record::BranchRecord;
use crate::scenario::ScenarioSpec;
use crate::spectrum::{self, BifurcationCandidate, PlanarConfiguration, SpectrumReport};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Lower end of the flow interval; the reduced path is degenerate at
/// `s = 1` itself.
pub const FLOW_FLOOR: f64 = 1.0 + 1e-3;
/// Two switch results closer than this (in `s` and in every sorted mutual
/// distance) are treated as the same branch.
pub const DEDUP_TOL: f64 = 1e-6;

/// Formats with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub trivial: Configuration,
    pub spectrum: SpectrumReport,
    pub candidates: Vec<BifurcationCandidate>,
    pub lower_bound: usize,
    pub flow: FlowReport,
    pub planar_inertia: InertiaTriple,
    pub text: String,
}

/// Spectrum, bifurcation candidates, lower bound, spectral flow and planar
/// inertia of the scenario's trivial configuration.
pub fn run_analyze(spec: &ScenarioSpec) -> Result<AnalysisReport> {
    let m = spec.masses()?;
    let trivial = spec.initial_configuration()?;
    let qh = PlanarConfiguration::new(trivial.clone())?;
    let report = spectrum::cluster_spectrum(&qh, &m)?;
    let candidates = spectrum::bifurcation_candidates(&report);
    let lower_bound = spectrum::bifurcation_lower_bound(&report);
    let interval = (spec.s_interval.0.max(FLOW_FLOOR), spec.s_interval.1);
    let flow = flow::certify_bifurcation(&qh, &m, interval)?;
    let planar_inertia = spectrum::planar_inertia(&qh, &m)?;

    let mut t = String::new();
    let _ = writeln!(t, "scenario {} (n = {}, d = {})", spec.name, m.len(), spec.dimension);
    let _ = writeln!(t, "potential U = {}", sig6(report.potential));
    let mu: Vec<String> = report
        .mu
        .iter()
        .zip(&report.alpha)
        .map(|(v, a)| format!("{} (x{a})", sig6(*v)))
        .collect();
    let _ = writeln!(t, "spectrum of M^-1 B: {}", mu.join(", "));
    let _ = writeln!(t, "-U cluster index: {}", report.l);
    if candidates.is_empty() {
        let _ = writeln!(t, "bifurcation candidates: none");
    } else {
        let _ = writeln!(t, "bifurcation candidates:");
        for c in &candidates {
            let _ = writeln!(t, "  s* = {} (multiplicity {})", sig6(c.s_star), c.multiplicity);
        }
    }
    let _ = writeln!(t, "lower bound on bifurcation instants: {lower_bound}");
    let _ = writeln!(
        t,
        "spectral flow over [{}, {}]: {} (reduced inertia {} -> {}, kernel dim {})",
        sig6(flow.interval.0),
        sig6(flow.interval.1),
        flow.flow,
        flow.start_inertia,
        flow.end_inertia,
        flow.kernel_dim
    );
    for (from, to) in &flow.nudges {
        let _ = writeln!(t, "  endpoint {} moved to {} (on a candidate)", sig6(*from), sig6(*to));
    }
    let _ = writeln!(t, "planar inertia: {planar_inertia}");

    Ok(AnalysisReport {
        trivial,
        spectrum: report,
        candidates,
        lower_bound,
        flow,
        planar_inertia,
        text: t,
    })
}

/// One switch attempt: a candidate, a kernel vector and a sign.
#[derive(Debug, Clone)]
struct Job {
    s_star: f64,
    label: String,
    direction: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobStatus {
    /// Traced and recorded under the given file name.
    Traced { file: String },
    /// Same branch as an earlier job.
    Duplicate { of: String },
    SwitchFailed { error: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobSummary {
    pub candidate_s: f64,
    pub direction: String,
    pub status: JobStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSummary {
    pub file: String,
    pub candidate_s: f64,
    pub direction: String,
    pub points: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub end_fingerprint: Vec<f64>,
    pub events: Vec<(usize, EventKind)>,
    pub termination: Option<EventKind>,
    /// Counts of local_minimum, saddle and degenerate points.
    pub classes: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct TraceSummary {
    pub scenario: String,
    pub candidates: Vec<f64>,
    pub jobs: Vec<JobSummary>,
    pub branches: Vec<BranchSummary>,
}

impl TraceSummary {
    /// True when candidates existed but none produced a branch.
    pub fn all_failed(&self) -> bool {
        !self.candidates.is_empty() && self.branches.is_empty()
    }

    pub fn text(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(t, "scenario {}", self.scenario);
        if self.candidates.is_empty() {
            let _ = writeln!(t, "no bifurcation candidates, no branches");
            return t;
        }
        let c: Vec<String> = self.candidates.iter().map(|&s| sig6(s)).collect();
        let _ = writeln!(t, "candidates: {}", c.join(", "));
        for j in &self.jobs {
            let status = match &j.status {
                JobStatus::Traced { file } => format!("traced -> {file}"),
                JobStatus::Duplicate { of } => format!("same branch as {of}"),
                JobStatus::SwitchFailed { error } => format!("switch failed: {error}"),
            };
            let _ = writeln!(t, "  s* = {} {}: {status}", sig6(j.candidate_s), j.direction);
        }
        for b in &self.branches {
            let ev: Vec<String> = b.events.iter().map(|(i, k)| format!("{k}@{i}")).collect();
            let fp: Vec<String> = b.end_fingerprint.iter().map(|&x| sig6(x)).collect();
            let _ = writeln!(
                t,
                "branch {}: {} points, s {} -> {}, ends by {}",
                b.file,
                b.points,
                sig6(b.start_s),
                sig6(b.end_s),
                b.termination.map(|k| k.as_str()).unwrap_or("none")
            );
            let _ = writeln!(t, "  events: {}", ev.join(" "));
            let _ = writeln!(
                t,
                "  classification: {} local_minimum, {} saddle, {} degenerate",
                b.classes[0], b.classes[1], b.classes[2]
            );
            let _ = writeln!(t, "  final mutual distances: {}", fp.join(" "));
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct TraceOutcome {
    pub records: Vec<BranchRecord>,
    pub files: Vec<PathBuf>,
    pub summary: TraceSummary,
}

fn jobs_for(report: &SpectrumReport, candidates: &[BifurcationCandidate], dim: usize) -> Vec<Job> {
    let mut jobs = Vec::new();
    for c in candidates {
        let modes = &report.modes[c.cluster];
        for k in 0..modes.ncols() {
            let v = spectrum::normal_direction(&modes.column(k).into_owned(), dim);
            for (sign, name) in [(1.0, "plus"), (-1.0, "minus")] {
                let label = if modes.ncols() == 1 {
                    name.to_string()
                } else {
                    format!("k{k}_{name}")
                };
                jobs.push(Job {
                    s_star: c.s_star,
                    label,
                    direction: &v * sign,
                });
            }
        }
    }
    jobs
}

fn same_point(a: &BranchPoint, b: &BranchPoint) -> bool {
    (a.s - b.s).abs() < DEDUP_TOL
        && a.q
            .fingerprint()
            .iter()
            .zip(b.q.fingerprint())
            .all(|(x, y)| (x - y).abs() < DEDUP_TOL)
}

fn summarize(record: &BranchRecord, branch: &Branch) -> BranchSummary {
    let mut classes = [0; 3];
    for p in &branch.points {
        classes[match p.classification() {
            crate::continuation::Classification::LocalMinimum => 0,
            crate::continuation::Classification::Saddle => 1,
            crate::continuation::Classification::Degenerate => 2,
        }] += 1;
    }
    let last = branch.points.last().expect("non-empty branch");
    BranchSummary {
        file: record.file_name(),
        candidate_s: record.candidate_s,
        direction: record.direction.clone(),
        points: branch.len(),
        start_s: branch.points[0].s,
        end_s: last.s,
        end_fingerprint: last.q.fingerprint(),
        events: branch.events.iter().map(|e| (e.index, e.kind)).collect(),
        termination: branch.termination(),
        classes,
    }
}

/// Switches onto and traces every branch predicted by the candidates, in
/// both directions of every kernel vector.
///
/// Switches run concurrently, coinciding results are merged, then the
/// distinct branches are traced concurrently. Records are written to
/// `out_dir` when given. With `probe_seed`, a seeded random-direction
/// probe is attempted at every turning point and any new branch found is
/// traced too.
pub fn run_trace(
    spec: &ScenarioSpec,
    out_dir: Option<&Path>,
    exec: Execution,
    probe_seed: Option<u64>,
) -> Result<TraceOutcome> {
    let m = spec.masses()?;
    let settings = &spec.settings;
    let trivial = spec.initial_configuration()?;
    let qh = PlanarConfiguration::new(trivial)?;
    let report = spectrum::cluster_spectrum(&qh, &m)?;
    let candidates: Vec<BifurcationCandidate> = spectrum::bifurcation_candidates(&report)
        .into_iter()
        .filter(|c| c.s_star >= settings.s_min && c.s_star <= settings.s_max)
        .collect();
    let jobs = jobs_for(&report, &candidates, spec.dimension);

    let seeds: Vec<Result<SwitchSeed>> = exec.map(&jobs, |job| {
        branch_switch(&qh, job.s_star, &job.direction, settings, &m)
    });

    let mut summaries = Vec::new();
    let mut distinct: Vec<(usize, SwitchSeed)> = Vec::new();
    for (ji, (job, seed)) in jobs.iter().zip(seeds).enumerate() {
        let status = match seed {
            Err(e) => JobStatus::SwitchFailed { error: e.to_string() },
            Ok(seed) => {
                match distinct
                    .iter()
                    .find(|(_, s)| same_point(&s.first, &seed.first))
                {
                    Some((k, _)) => JobStatus::Duplicate {
                        of: jobs[*k].label.clone(),
                    },
                    None => {
                        distinct.push((ji, seed));
                        JobStatus::Traced { file: String::new() }
                    }
                }
            }
        };
        summaries.push(JobSummary {
            candidate_s: job.s_star,
            direction: job.label.clone(),
            status,
        });
    }

    let mut branches: Vec<(String, f64, Branch)> = exec
        .map(&distinct, |(_, seed)| trace_branch(&seed.anchor, &seed.first, settings, &m))
        .into_iter()
        .zip(&distinct)
        .map(|(b, (ji, _))| (jobs[*ji].label.clone(), jobs[*ji].s_star, b))
        .collect();

    if let Some(seed) = probe_seed {
        let probes: Vec<(usize, usize)> = branches
            .iter()
            .enumerate()
            .flat_map(|(bi, (_, _, b))| {
                // A turning point at the final point is where the branch ends.
                detect_turning_points(b)
                    .into_iter()
                    .filter(move |&k| k + 1 < b.len())
                    .map(move |k| (bi, k))
            })
            .collect();
        let found = exec.map(&probes, |&(bi, k)| {
            let branch = &branches[bi].2;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((bi as u64) << 32) ^ k as u64);
            probe_at(branch, k, &mut rng, settings, &m).ok().map(|b| (bi, k, b))
        });
        for (bi, k, b) in found.into_iter().flatten() {
            let (label, s_star, _) = &branches[bi];
            branches.push((format!("{label}_probe{k}"), *s_star, b));
        }
    }

    let mut records = Vec::new();
    let mut files = Vec::new();
    let mut branch_summaries = Vec::new();
    for (label, s_star, branch) in &branches {
        let record = BranchRecord::from_branch(branch, &spec.name, *s_star, label, settings, &m)?;
        if let Some(dir) = out_dir {
            files.push(record.write_to_dir(dir)?);
        }
        branch_summaries.push(summarize(&record, branch));
        if let Some(j) = summaries
            .iter_mut()
            .find(|j| j.direction == *label && j.candidate_s == *s_star)
        {
            j.status = JobStatus::Traced {
                file: record.file_name(),
            };
        }
        records.push(record);
    }

    Ok(TraceOutcome {
        records,
        files,
        summary: TraceSummary {
            scenario: spec.name.clone(),
            candidates: candidates.iter().map(|c| c.s_star).collect(),
            jobs: summaries,
            branches: branch_summaries,
        },
    })
}

/// Tries to leave `branch` at its point `index` along a random direction
/// transverse to the branch. Succeeds only if the point reached is away
/// from every point already on the branch.
fn probe_at(
    branch: &Branch,
    index: usize,
    rng: &mut ChaCha8Rng,
    settings: &crate::continuation::ContinuationSettings,
    m: &Masses,
) -> Result<Branch> {
    let at = &branch.points[index];
    let d = at.q.dim();
    let nd = at.q.coords().len();
    let base = at.q.to_vector();
    let mut v = DVector::from_fn(nd, |_, _| rng.random::<f64>() - 0.5);
    // Remove the centre-of-mass drift and the branch direction.
    let com = potential::center_of_mass_raw(v.as_slice(), d, m);
    for i in 0..m.len() {
        for a in 0..d {
            v[i * d + a] -= com[a];
        }
    }
    let neighbour = &branch.points[if index + 1 < branch.len() { index + 1 } else { index - 1 }];
    let chord = neighbour.q.to_vector() - &base;
    let cc = potential::mass_inner(chord.as_slice(), chord.as_slice(), d, m);
    if cc > 0.0 {
        v -= &chord * (potential::mass_inner(v.as_slice(), chord.as_slice(), d, m) / cc);
    }
    let norm = potential::mass_inner(v.as_slice(), v.as_slice(), d, m).sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroVector("probe direction".into()));
    }
    v /= norm;
    let offset = settings.epsilon_switch.max(1e-4);
    let sys = AugmentedSystem::new(
        m,
        d,
        base.clone(),
        Constraint::Hyperplane {
            base: base.clone(),
            direction: v.clone(),
            offset,
        },
    );
    let guess = Configuration::from_vector(d, &(&base + &v * offset))?;
    let guess = potential::normalize_to_sphere(&guess, m, crate::SParameter::new(at.s)?)?;
    let out = sys.solve(&sys.lift(&guess.to_vector().insert_row(nd, at.s)), settings)?;
    let q = Configuration::new(d, out.x.as_slice()[..nd].to_vec())?;
    let first = BranchPoint::evaluate(q, out.x[nd], m, 0.0)?;
    let away = branch
        .points
        .iter()
        .all(|p| (p.s - first.s).abs() > settings.delta || orbit_distance(&p.q, &first.q, m) > settings.delta);
    if !away {
        return Err(Error::FellBackToTrivial {
            distance: orbit_distance(&at.q, &first.q, m),
        });
    }
    let traced = trace_branch(at, &first, settings, m);
    if traced.is_empty() {
        return Err(Error::EmptyBranch);
    }
    Ok(traced)
}
