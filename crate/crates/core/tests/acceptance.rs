//! Acceptance gate: one PASS/FAIL line per criterion, then a single
//! assertion over all of them.

use balcon_core::continuation::{
    point_on_chord, BranchPoint, Classification, ContinuationSettings, EventKind,
};
use balcon_core::flow::certify_bifurcation;
use balcon_core::linalg::{block_diag, inertia_of_values, sym_eigen, InertiaTriple};
use balcon_core::potential::{
    balanced_residual, center_of_mass, potential_gradient, potential_hessian, s_inner,
    total_potential,
};
use balcon_core::presets::{preset_configuration, Preset};
use balcon_core::record::BranchRecord;
use balcon_core::runner::run_trace;
use balcon_core::scenario::{builtin, builtin_names, load_scenario, ScenarioSpec};
use balcon_core::spectrum::*;
use balcon_core::{Configuration, Execution, Masses, SParameter};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn spec(name: &str) -> ScenarioSpec {
    load_scenario(builtin(name).unwrap()).unwrap()
}

fn trivial(name: &str) -> (PlanarConfiguration, Masses) {
    let s = spec(name);
    let q = s.initial_configuration().unwrap();
    (PlanarConfiguration::new(q).unwrap(), s.masses().unwrap())
}

fn candidates_of(name: &str) -> Vec<f64> {
    let (qh, m) = trivial(name);
    bifurcation_candidates(&cluster_spectrum(&qh, &m).unwrap())
        .iter()
        .map(|c| c.s_star)
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn with_coord(q: &Configuration, k: usize, delta: f64) -> Configuration {
    let mut c = q.coords().to_vec();
    c[k] += delta;
    Configuration::new(q.dim(), c).unwrap()
}

fn derivative_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_g, mut worst_h, mut worst_e) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    while count < 20 {
        let n = 3 + count % 3;
        let d = 2 + (count / 3) % 2;
        let c: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = Configuration::new(d, c).unwrap();
        if q.pairwise_distances().iter().any(|&r| r < 0.1) {
            continue;
        }
        count += 1;
        let m = Masses::new((0..n).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap();
        let h = 1e-5;
        let fd_g: Vec<f64> = (0..n * d)
            .map(|k| {
                (total_potential(&with_coord(&q, k, h), &m).unwrap()
                    - total_potential(&with_coord(&q, k, -h), &m).unwrap())
                    / (2.0 * h)
            })
            .collect();
        let g = potential_gradient(&q, &m).unwrap();
        worst_g = worst_g.max(rel(g.as_slice(), &fd_g));
        let mut fd_h = Vec::new();
        for k in 0..n * d {
            let gp = potential_gradient(&with_coord(&q, k, h), &m).unwrap();
            let gn = potential_gradient(&with_coord(&q, k, -h), &m).unwrap();
            fd_h.extend(((gp - gn) / (2.0 * h)).iter().copied());
        }
        worst_h = worst_h.max(rel(potential_hessian(&q, &m).unwrap().as_slice(), &fd_h));
        let u = total_potential(&q, &m).unwrap();
        let dot: f64 = g.iter().zip(q.coords()).map(|(a, b)| a * b).sum();
        worst_e = worst_e.max((dot + u).abs() / u);
    }
    (
        worst_g < 1e-6 && worst_h < 1e-5 && worst_e < 1e-12,
        format!("gradient {worst_g:.1e} (< 1e-6), hessian {worst_h:.1e} (< 1e-5), euler {worst_e:.1e} (< 1e-12)"),
    )
}

fn block_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let (n, d) = (3 + k % 3, 2 + k % 2);
        let q = loop {
            let mut c = vec![0.0; n * d];
            for i in 0..n {
                for a in 1..d {
                    c[i * d + a] = rng.random_range(-1.0..1.0);
                }
            }
            let q = Configuration::new(d, c).unwrap();
            if q.pairwise_distances().iter().all(|&r| r > 0.1) {
                break q;
            }
        };
        let m = Masses::new((0..n).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap();
        let qh = PlanarConfiguration::new(q.clone()).unwrap();
        let h = to_axis_major(&potential_hessian(&q, &m).unwrap(), n, d);
        let bd = block_diag(&b_matrix(&qh, &m).unwrap(), &d_matrix(&qh, &m).unwrap());
        worst = worst.max((&h - &bd).norm() / h.norm());
    }
    (worst <= 1e-12, format!("max relative deviation {worst:.1e} (<= 1e-12)"))
}

fn spectral_structure() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in builtin_names() {
        let (qh, m) = trivial(name);
        let b = b_matrix(&qh, &m).unwrap();
        let kernel = (&b * DVector::from_element(qh.n(), 1.0)).norm();
        let rep = cluster_spectrum(&qh, &m).unwrap();
        let u = rep.potential;
        let gap = (rep.mu[rep.l] + u).abs() / u;
        // Planar configurations carry multiplicity >= 2; collinear ones in
        // the plane carry the one in-line direction only.
        let needed = qh.dim() - 1;
        let below = rep.mu.iter().filter(|&&mu| mu < -u * (1.0 + 1e-8)).count();
        let pass = kernel < 1e-10
            && gap < 1e-8
            && rep.alpha[rep.l] >= needed
            && (qh.n() < 4 || below >= 1);
        ok &= pass;
        notes.push(format!(
            "{name}: |B1| {kernel:.0e}, -U x{} (need {needed}), {below} below",
            rep.alpha[rep.l]
        ));
    }
    (ok, notes.join("; "))
}

fn direct_normal_inertia(b: &DMatrix<f64>, m: &Masses, u: f64, s: f64) -> InertiaTriple {
    let n = m.len();
    let sq: Vec<f64> = m.as_slice().iter().map(|x| x.sqrt()).collect();
    let e = DVector::from_iterator(n, sq.iter().map(|x| x / m.total().sqrt()));
    let p = DMatrix::identity(n, n) - &e * e.transpose();
    let a = &p
        * (DMatrix::from_fn(n, n, |i, j| b[(i, j)] / (sq[i] * sq[j])) + DMatrix::identity(n, n) * (s * u))
        * &p;
    let eig = sym_eigen(&a);
    let drop = (0..n)
        .max_by(|&i, &j| {
            eig.vectors.column(i).dot(&e).abs().total_cmp(&eig.vectors.column(j).dot(&e).abs())
        })
        .unwrap();
    let vals: Vec<f64> = (0..n).filter(|&i| i != drop).map(|i| eig.values[i]).collect();
    inertia_of_values(&vals, 1e-9 * a.norm())
}

fn closed_form_inertia() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut mismatches = 0;
    let mut total = 0;
    for name in builtin_names() {
        let (qh, m) = trivial(name);
        let qn = qh.normalized(&m).unwrap();
        let rep = cluster_spectrum(&qn, &m).unwrap();
        let b = b_matrix(&qn, &m).unwrap();
        for _ in 0..50 {
            let s = rng.random_range(1.0..10.0);
            total += 1;
            if normal_inertia_at(&rep, s) != direct_normal_inertia(&b, &m, rep.potential, s) {
                mismatches += 1;
            }
        }
    }
    (mismatches == 0, format!("{mismatches} mismatches in {total} samples"))
}

fn bifurcation_instants() -> Outcome {
    let near = |got: &[f64], want: &[f64], tol: f64| {
        got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() < tol)
    };
    let sq = candidates_of("square");
    let closed = 4.0 * 2f64.sqrt() / (2.0 * 2f64.sqrt() + 1.0);
    let checks = [
        ("square", sq.len() == 1 && (sq[0] - 1.4).abs() < 0.1 && (sq[0] - closed).abs() < 1e-10),
        ("triangle_center", near(&candidates_of("triangle_center"), &[2.5], 0.15)),
        ("square_center", near(&candidates_of("square_center"), &[1.2, 2.5], 0.15)),
        ("collinear [1,1,1,1]", near(&candidates_of("collinear_equal"), &[2.4, 4.15], 0.15)),
        ("collinear [.2,.2,1,1]", near(&candidates_of("collinear_02"), &[1.9, 4.9], 0.15)),
        ("collinear [.5,.5,1,1]", near(&candidates_of("collinear_05"), &[2.2, 4.3], 0.15)),
        ("collinear [.9,.9,1,1]", candidates_of("collinear_09").len() == 2),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    (
        failed.is_empty(),
        format!(
            "square s* = {:.12} vs closed form {:.12}; failed: {:?}",
            sq.first().copied().unwrap_or(f64::NAN),
            closed,
            failed
        ),
    )
}

fn flow_count() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in builtin_names() {
        let (qh, m) = trivial(name);
        let rep = cluster_spectrum(&qh, &m).unwrap();
        let cands = bifurcation_candidates(&rep);
        let a = cands.first().map_or(1.0 + 1e-3, |c| (1.0 + 1e-3f64).min(c.s_star - 1e-3));
        let b = cands.last().map_or(10.0, |c| 10.0f64.max(c.s_star + 1e-3));
        let report = certify_bifurcation(&qh, &m, (a, b)).unwrap();
        let expected = (qh.n() - 1 - rep.alpha_upto_l()) as i64;
        let bound = bifurcation_lower_bound(&rep);
        let mut pass = report.flow == expected && bound <= cands.len();
        if name == "square" {
            pass &= report.flow == 1 && bound == 1;
        }
        ok &= pass;
        notes.push(format!("{name}: flow {} = {expected}, bound {bound}", report.flow));
    }
    (ok, notes.join("; "))
}

fn critical_mass() -> Outcome {
    let m_star = (2.0 + 3.0 * 3f64.sqrt()) / (18.0 - 5.0 * 3f64.sqrt());
    let planar = |m4: f64| -> InertiaTriple {
        let m = Masses::new(vec![1.0, 1.0, 1.0, m4]).unwrap();
        let q = preset_configuration(&Preset::TriangleCenter, &m, 3).unwrap();
        planar_inertia(&PlanarConfiguration::new(q).unwrap(), &m).unwrap()
    };
    let grid: Vec<(f64, InertiaTriple)> = (0..=150).map(|k| 0.7 + 1e-3 * k as f64).map(|x| (x, planar(x))).collect();
    let grid_nullity_one = grid.iter().all(|(_, i)| i.zero == 1);
    let Some(w) = grid.windows(2).find(|w| w[0].1.minus != w[1].1.minus) else {
        return (false, "no change of planar index on the grid".into());
    };
    let (mut lo, mut hi) = (w[0].0, w[1].0);
    let lo_minus = w[0].1.minus;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if planar(mid).minus == lo_minus {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let jump = 0.5 * (lo + hi);
    let at_jump = planar(jump);
    (
        grid_nullity_one && at_jump.zero >= 2 && (jump - m_star).abs() < 1e-3,
        format!(
            "nullity 1 on the grid: {grid_nullity_one}; jump at m4 = {jump:.9} with nullity {} (m* = {m_star:.9})",
            at_jump.zero
        ),
    )
}

fn trace(name: &str) -> Vec<BranchRecord> {
    run_trace(&spec(name), None, Execution::default(), None).unwrap().records
}

fn normalized_solution(p: &BranchPoint, m: &Masses) -> bool {
    let sp = SParameter::new(p.s).unwrap();
    let norm = s_inner(p.q.coords(), p.q.coords(), m, sp).unwrap();
    let residual = balanced_residual(&p.q, m, sp).map(|r| r.norm()).unwrap_or(f64::INFINITY);
    residual < 1e-10 && (norm - 1.0).abs() <= 1e-10 && center_of_mass(&p.q, m).iter().all(|c| c.abs() <= 1e-10)
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

fn square_endpoint() -> Outcome {
    let records = trace("square");
    let Some(r) = records.first() else {
        return (false, "no branch".into());
    };
    let m = Masses::new(r.masses.clone()).unwrap();
    let points = r.to_points().unwrap();
    let last = points.last().unwrap();
    let tetra = spread(&last.q.pairwise_distances());
    let solutions = points.iter().all(|p| normalized_solution(p, &m));
    let minima = points.iter().filter(|p| p.classification() == Classification::LocalMinimum).count();
    (
        records.len() == 1 && tetra < 1e-4 && solutions && minima == points.len() && (last.s - 1.0).abs() < 1e-6,
        format!(
            "end s = {:.9}, edge spread {tetra:.1e} (< 1e-4), all points solutions: {solutions}, local minima {minima}/{}",
            last.s,
            points.len()
        ),
    )
}

/// Negative directions of `U` restricted to the mass sphere at a central
/// configuration, counted from second differences of the scale-invariant
/// function `U(q) |q|_M`.
fn sphere_index_by_differences(q: &Configuration, m: &Masses) -> usize {
    let d = q.dim();
    let nd = q.coords().len();
    let f = |c: &[f64]| -> f64 {
        let q = Configuration::new(d, c.to_vec()).unwrap();
        let norm: f64 = (0..nd).map(|k| m[k / d] * c[k] * c[k]).sum::<f64>().sqrt();
        total_potential(&q, m).unwrap() * norm
    };
    let h = 1e-4;
    let c0 = q.coords().to_vec();
    let f0 = f(&c0);
    let mut hess = DMatrix::zeros(nd, nd);
    for i in 0..nd {
        for j in i..nd {
            let e = |si: f64, sj: f64| {
                let mut c = c0.clone();
                c[i] += si * h;
                c[j] += sj * h;
                f(&c)
            };
            let v = if i == j {
                (e(1.0, 0.0) - 2.0 * f0 + e(-1.0, 0.0)) / (h * h)
            } else {
                (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h * h)
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let scaled = DMatrix::from_fn(nd, nd, |i, j| hess[(i, j)] / (m[i / d] * m[j / d]).sqrt());
    let vals = sym_eigen(&scaled).values;
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    vals.iter().filter(|&&v| v < -1e-4 * scale).count()
}

fn five_body_endpoints() -> Outcome {
    let records = trace("square_center");
    let cands = candidates_of("square_center");
    let (Some(large), Some(small)) = (
        records.iter().find(|r| (r.candidate_s - cands[1]).abs() < 1e-9),
        records.iter().find(|r| (r.candidate_s - cands[0]).abs() < 1e-9),
    ) else {
        return (false, format!("expected branches from both candidates, got {}", records.len()));
    };
    let m = Masses::new(large.masses.clone()).unwrap();

    // Square pyramid: the apex is the body whose four distances agree; the
    // base is a square.
    let end = large.to_points().unwrap().pop().unwrap();
    let q = &end.q;
    let pyramid = (0..5).any(|apex| {
        let base: Vec<usize> = (0..5).filter(|&i| i != apex).collect();
        let lateral: Vec<f64> = base.iter().map(|&i| q.distance(apex, i)).collect();
        let mut pairs: Vec<f64> = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                pairs.push(q.distance(base[a], base[b]));
            }
        }
        pairs.sort_by(f64::total_cmp);
        spread(&lateral) < 1e-3 && spread(&pairs[..4]) < 1e-3 && spread(&pairs[4..]) < 1e-3
    });
    let end_class = end.classification();
    let large_minima = large.rows.iter().filter(|r| r.class == Classification::LocalMinimum).count();
    let oracle_index = sphere_index_by_differences(q, &m);

    let small_end = small.to_points().unwrap().pop().unwrap();
    let f = small_end.q.fingerprint();
    let tetra_center = spread(&f[..4]) < 1e-3 && spread(&f[4..]) < 1e-3;
    let small_class = small_end.classification();

    (
        pyramid
            && end_class == Classification::LocalMinimum
            && tetra_center
            && small_class == Classification::Saddle,
        format!(
            "larger branch: square pyramid {pyramid}, end class {end_class} ({large_minima}/{} points local_minimum; \
             finite-difference index of the end configuration on the sphere {oracle_index}); \
             smaller branch: tetrahedron+centre {tetra_center}, end class {small_class}",
            large.len()
        ),
    )
}

/// Sides of the quadrilateral closest to a rhombus, as a relative spread.
fn rhombus_spread(q: &Configuration) -> f64 {
    [[0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3]]
        .iter()
        .map(|c| spread(&(0..4).map(|a| q.distance(c[a], c[(a + 1) % 4])).collect::<Vec<_>>()))
        .fold(f64::INFINITY, f64::min)
}

/// Golden-section search for the smallest rhombus spread on the chord
/// between two branch points.
fn best_rhombus_on_chord(a: &BranchPoint, b: &BranchPoint, m: &Masses) -> f64 {
    let settings = ContinuationSettings::default();
    let eval = |t: f64| {
        point_on_chord(a, b, t, &settings, m)
            .map(|p| rhombus_spread(&p.q))
            .unwrap_or(f64::INFINITY)
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..50 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = eval(x2);
        }
    }
    f1.min(f2).min(rhombus_spread(&a.q)).min(rhombus_spread(&b.q))
}

fn order_along_line(q: &Configuration) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..q.n()).collect();
    idx.sort_by(|&i, &j| q.body(i)[1].total_cmp(&q.body(j)[1]));
    idx
}

fn collinear_branch() -> Outcome {
    let records = trace("collinear_equal");
    let cands = candidates_of("collinear_equal");
    let Some(r) = records.iter().find(|r| (r.candidate_s - cands[1]).abs() < 1e-9) else {
        return (false, "no branch from the larger candidate".into());
    };
    let m = Masses::new(r.masses.clone()).unwrap();
    let points = r.to_points().unwrap();
    let turning = r.events.iter().filter(|e| e.kind == EventKind::TurningPoint).count();

    let k = (0..points.len())
        .min_by(|&i, &j| rhombus_spread(&points[i].q).total_cmp(&rhombus_spread(&points[j].q)))
        .unwrap();
    let mut rhombus = rhombus_spread(&points[k].q);
    if k > 0 {
        rhombus = rhombus.min(best_rhombus_on_chord(&points[k - 1], &points[k], &m));
    }
    if k + 1 < points.len() {
        rhombus = rhombus.min(best_rhombus_on_chord(&points[k], &points[k + 1], &m));
    }

    let start = spec("collinear_equal").initial_configuration().unwrap();
    let end = &points.last().unwrap().q;
    let fp_gap = start
        .fingerprint()
        .iter()
        .zip(end.fingerprint())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let (o0, o1) = (order_along_line(&start), order_along_line(end));
    let swapped = o0[0] == o1[0] && o0[3] == o1[3] && o0[1] == o1[2] && o0[2] == o1[1];
    let minima = points.iter().filter(|p| p.classification() == Classification::LocalMinimum).count();
    (
        turning >= 1 && rhombus < 1e-3 && fp_gap < 1e-3 && swapped && minima == points.len(),
        format!(
            "{turning} turning points, rhombus side spread {rhombus:.1e} (< 1e-3), end fingerprint gap {fp_gap:.1e} (< 1e-3), \
             central masses swapped {swapped}, local minima {minima}/{}, ends by {:?}",
            points.len(),
            r.events.last().map(|e| e.kind.as_str())
        ),
    )
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut contents = Vec::new();
    for (dir, exec) in dirs.iter().zip([Execution::Parallel, Execution::Sequential]) {
        let out = run_trace(&spec("square"), Some(dir.path()), exec, None).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = out
            .files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        files.sort();
        contents.push(files);
    }
    let same = !contents[0].is_empty() && contents[0] == contents[1];
    let bytes: usize = contents[0].iter().map(|f| f.1.len()).sum();
    (same, format!("{} file(s), {bytes} bytes, identical: {same}", contents[0].len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        ("derivative oracles", derivative_oracles),
        ("block identity", block_identity),
        ("spectral structure", spectral_structure),
        ("closed-form normal inertia", closed_form_inertia),
        ("bifurcation instants", bifurcation_instants),
        ("spectral flow count", flow_count),
        ("critical mass", critical_mass),
        ("square branch endpoint", square_endpoint),
        ("five-body endpoints", five_body_endpoints),
        ("collinear equal-mass branch", collinear_branch),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = check();
        println!("criterion {:>2} {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
