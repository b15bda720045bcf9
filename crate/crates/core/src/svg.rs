//! Static SVG plots of branch records.

use crate::continuation::{Classification, EventKind};
use crate::error::{Error, Result};
use crate::record::BranchRecord;
use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Trajectories,
    SProfile,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trajectories" => Ok(PlotKind::Trajectories),
            "s-profile" | "s_profile" => Ok(PlotKind::SProfile),
            other => Err(Error::InvalidInput(format!("unknown plot kind {other:?}"))),
        }
    }
}

/// Affine map from data bounds to the drawing area, equal scales when
/// `aspect` is set.
struct Frame {
    x0: f64,
    y0: f64,
    kx: f64,
    ky: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone, aspect: bool) -> Self {
        let bounds = |it: &mut dyn Iterator<Item = f64>| {
            it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
        };
        let (mut xmin, mut xmax) = bounds(&mut xs.clone());
        let (mut ymin, mut ymax) = bounds(&mut ys.clone());
        let pad = |lo: &mut f64, hi: &mut f64| {
            let w = (*hi - *lo).max(1e-9 * hi.abs().max(1.0));
            *lo -= 0.05 * w;
            *hi += 0.05 * w;
        };
        pad(&mut xmin, &mut xmax);
        pad(&mut ymin, &mut ymax);
        let (aw, ah) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let (mut kx, mut ky) = (aw / (xmax - xmin), ah / (ymax - ymin));
        if aspect {
            let k = kx.min(ky);
            xmin -= 0.5 * (aw / k - (xmax - xmin));
            ymin -= 0.5 * (ah / k - (ymax - ymin));
            kx = k;
            ky = k;
        }
        Self { x0: xmin, y0: ymin, kx, ky }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * self.kx
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) * self.ky
    }
}

fn open(title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis_labels(out: &mut String, x: &str, y: &str) {
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{x}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{y}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, class: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
        coords.join(" ")
    );
}

/// Renders `record` as a self-contained SVG document.
pub fn emit_plot(record: &BranchRecord, kind: PlotKind) -> Result<String> {
    if record.is_empty() {
        return Err(Error::EmptyBranch);
    }
    match kind {
        PlotKind::Trajectories => Ok(trajectories(record)),
        PlotKind::SProfile => Ok(s_profile(record)),
    }
}

fn trajectories(record: &BranchRecord) -> String {
    let d = record.dimension;
    let n = record.bodies();
    // In 3D the s-axis is axis 0, so the plane orthogonal to it is (y, z).
    // In 2D that complement is a line, so the whole plane is drawn.
    let (a, b, proj) = if d == 3 {
        (1, 2, "projection on the (y, z) plane orthogonal to the s-axis")
    } else {
        (0, 1, "full (x, y) plane, x is the s-axis")
    };
    let title = format!(
        "{}: body trajectories, branch from s* = {:.6} ({}), {proj}",
        record.scenario, record.candidate_s, record.direction
    );
    let rows = &record.rows;
    let all_x = rows.iter().flat_map(|r| (0..n).map(move |i| r.q[i * d + a]));
    let all_y = rows.iter().flat_map(|r| (0..n).map(move |i| r.q[i * d + b]));
    let frame = Frame::new(all_x, all_y, true);
    let mut out = open(&title);
    axis_labels(&mut out, if d == 3 { "y" } else { "x" }, if d == 3 { "z" } else { "y" });
    for i in 0..n {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (frame.px(r.q[i * d + a]), frame.py(r.q[i * d + b])))
            .collect();
        if pts.len() > 1 {
            polyline(&mut out, &pts, color, "trajectory");
        }
        let (sx, sy) = pts[0];
        let _ = writeln!(
            out,
            r#"<circle class="start" cx="{sx:.2}" cy="{sy:.2}" r="4" fill="{color}"/>"#
        );
        if pts.len() > 1 {
            let (ex, ey) = pts[pts.len() - 1];
            let _ = writeln!(
                out,
                r#"<rect class="end" x="{:.2}" y="{:.2}" width="8" height="8" fill="none" stroke="{color}" stroke-width="2"/>"#,
                ex - 4.0,
                ey - 4.0
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">filled circle: start, open square: end</text>"#,
        MARGIN,
        MARGIN - 8.0
    );
    out.push_str("</svg>\n");
    out
}

/// Turning points from the recorded events, or from sign changes of the
/// secant s-increments when none were recorded.
fn turning_indices(record: &BranchRecord) -> Vec<usize> {
    let recorded: Vec<usize> = record
        .events
        .iter()
        .filter(|e| e.kind == EventKind::TurningPoint && e.index < record.len())
        .map(|e| e.index)
        .collect();
    if !recorded.is_empty() {
        return recorded;
    }
    let ds: Vec<f64> = record.rows.windows(2).map(|w| w[1].s - w[0].s).collect();
    (1..ds.len())
        .filter(|&k| ds[k - 1] * ds[k] < 0.0)
        .collect()
}

fn class_color(c: Classification) -> &'static str {
    match c {
        Classification::LocalMinimum => "#c7e9c0",
        Classification::Saddle => "#fdd0a2",
        Classification::Degenerate => "#d9d9d9",
    }
}

fn s_profile(record: &BranchRecord) -> String {
    let title = format!(
        "{}: s against arclength, branch from s* = {:.6} ({})",
        record.scenario, record.candidate_s, record.direction
    );
    let rows = &record.rows;
    let frame = Frame::new(
        rows.iter().map(|r| r.arclength),
        rows.iter().map(|r| r.s),
        false,
    );
    let mut out = open(&title);

    // Classification bands: one rectangle per run of equal class.
    let top = MARGIN;
    let h = HEIGHT - 2.0 * MARGIN;
    let mut start = 0;
    for k in 1..=rows.len() {
        if k == rows.len() || rows[k].class != rows[start].class {
            let x0 = if start == 0 { MARGIN } else { frame.px(0.5 * (rows[start - 1].arclength + rows[start].arclength)) };
            let x1 = if k == rows.len() {
                WIDTH - MARGIN
            } else {
                frame.px(0.5 * (rows[k - 1].arclength + rows[k].arclength))
            };
            let _ = writeln!(
                out,
                r#"<rect class="band {}" x="{x0:.2}" y="{top}" width="{:.2}" height="{h}" fill="{}" opacity="0.6"/>"#,
                rows[start].class,
                (x1 - x0).max(0.5),
                class_color(rows[start].class)
            );
            start = k;
        }
    }
    axis_labels(&mut out, "arclength", "s");

    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (frame.px(r.arclength), frame.py(r.s))).collect();
    if pts.len() > 1 {
        polyline(&mut out, &pts, "#1f1f1f", "profile");
    } else {
        let (x, y) = pts[0];
        let _ = writeln!(out, r##"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="3" fill="#1f1f1f"/>"##);
    }
    for k in turning_indices(record) {
        let (x, y) = pts[k];
        let _ = writeln!(
            out,
            r##"<circle class="turning-point" cx="{x:.2}" cy="{y:.2}" r="6" fill="none" stroke="#d62728" stroke-width="2"/>"##
        );
    }
    let mut lx = MARGIN;
    for c in [Classification::LocalMinimum, Classification::Saddle, Classification::Degenerate] {
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{c}</text>"#,
            MARGIN - 18.0,
            class_color(c),
            lx + 14.0,
            MARGIN - 9.0
        );
        lx += 110.0;
    }
    let _ = writeln!(
        out,
        r##"<text x="{lx}" y="{}" font-family="sans-serif" font-size="11" fill="#d62728">o turning point</text>"##,
        MARGIN - 9.0
    );
    out.push_str("</svg>\n");
    out
}
