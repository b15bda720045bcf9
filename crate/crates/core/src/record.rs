//! Branch persistence as CSV with a `#` metadata header.
//!
//! ```text
//! # scenario: square
//! # candidate_s: 1.4775922500725170e0
//! # direction: plus
//! # settings_hash: 3f1c...
//! # dimension: 3
//! # masses: 1e0,1e0,1e0,1e0
//! # events: 0:start_bifurcation;81:s_bound
//! step,s,arclength,U,residual,iminus,izero,iplus,class,q0,...,q11
//! ```
//!
//! Floats are written with 17 significant digits, which reloads every
//! `f64` exactly.

use crate::continuation::{Branch, BranchEvent, BranchPoint, Classification, ContinuationSettings, EventKind};
use crate::error::{Error, Result};
use crate::linalg::InertiaTriple;
use crate::potential::{Configuration, Masses};
use crate::scenario::settings_text;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const FIXED_COLUMNS: [&str; 9] = [
    "step", "s", "arclength", "U", "residual", "iminus", "izero", "iplus", "class",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub step: usize,
    pub s: f64,
    pub arclength: f64,
    pub potential: f64,
    pub residual: f64,
    pub inertia: InertiaTriple,
    pub class: Classification,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub scenario: String,
    pub candidate_s: f64,
    /// Free-form label such as `plus` or `k1_minus`.
    pub direction: String,
    pub settings_hash: String,
    pub dimension: usize,
    pub masses: Vec<f64>,
    pub events: Vec<BranchEvent>,
    pub rows: Vec<RecordRow>,
}

/// SHA-256 of the canonical settings text, hex encoded.
pub fn settings_hash(settings: &ContinuationSettings) -> String {
    let digest = Sha256::digest(settings_text(settings).as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl BranchRecord {
    pub fn from_branch(
        branch: &Branch,
        scenario: &str,
        candidate_s: f64,
        direction: &str,
        settings: &ContinuationSettings,
        m: &Masses,
    ) -> Result<Self> {
        let first = branch.points.first().ok_or(Error::EmptyBranch)?;
        let rows = branch
            .points
            .iter()
            .enumerate()
            .map(|(step, p)| RecordRow {
                step,
                s: p.s,
                arclength: p.arclength,
                potential: p.potential,
                residual: p.residual_norm,
                inertia: p.inertia,
                class: p.classification(),
                q: p.q.coords().to_vec(),
            })
            .collect();
        Ok(Self {
            scenario: scenario.to_string(),
            candidate_s,
            direction: direction.to_string(),
            settings_hash: settings_hash(settings),
            dimension: first.q.dim(),
            masses: m.as_slice().to_vec(),
            events: branch.events.clone(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn bodies(&self) -> usize {
        self.masses.len()
    }

    /// `<scenario>_s<candidate>_<direction>.csv`
    pub fn file_name(&self) -> String {
        format!("{}_s{:.6}_{}.csv", self.scenario, self.candidate_s, self.direction)
    }

    pub fn configuration(&self, row: usize) -> Result<Configuration> {
        Configuration::new(self.dimension, self.rows[row].q.clone())
    }

    /// Reloads the rows as branch points, recomputing the diagnostics
    /// from the stored coordinates.
    pub fn to_points(&self) -> Result<Vec<BranchPoint>> {
        let m = Masses::new(self.masses.clone())?;
        self.rows
            .iter()
            .map(|r| {
                let q = Configuration::new(self.dimension, r.q.clone())?;
                BranchPoint::evaluate(q, r.s, &m, r.arclength)
            })
            .collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "# scenario: {}", self.scenario);
        let _ = writeln!(out, "# candidate_s: {}", fmt_f64(self.candidate_s));
        let _ = writeln!(out, "# direction: {}", self.direction);
        let _ = writeln!(out, "# settings_hash: {}", self.settings_hash);
        let _ = writeln!(out, "# dimension: {}", self.dimension);
        let masses: Vec<String> = self.masses.iter().map(|&x| fmt_f64(x)).collect();
        let _ = writeln!(out, "# masses: {}", masses.join(","));
        let events: Vec<String> = self.events.iter().map(|e| format!("{}:{}", e.index, e.kind)).collect();
        let _ = writeln!(out, "# events: {}", events.join(";"));

        let nd = self.dimension * self.masses.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = FIXED_COLUMNS
            .iter()
            .map(|c| c.to_string())
            .chain((0..nd).map(|k| format!("q{k}")))
            .collect();
        w.write_record(&header)?;
        for r in &self.rows {
            if r.q.len() != nd {
                return Err(Error::DimensionMismatch {
                    expected: nd,
                    actual: r.q.len(),
                });
            }
            let mut fields = vec![
                r.step.to_string(),
                fmt_f64(r.s),
                fmt_f64(r.arclength),
                fmt_f64(r.potential),
                fmt_f64(r.residual),
                r.inertia.minus.to_string(),
                r.inertia.zero.to_string(),
                r.inertia.plus.to_string(),
                r.class.to_string(),
            ];
            fields.extend(r.q.iter().map(|&x| fmt_f64(x)));
            w.write_record(&fields)?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        out.push_str(&String::from_utf8(body).map_err(|e| Error::Io(e.to_string()))?);
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse { line, message };
        let mut meta = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else { break };
            let (k, v) = rest
                .split_once(':')
                .ok_or_else(|| perr(i + 1, format!("malformed metadata line {line:?}")))?;
            meta.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| perr(1, format!("missing metadata field {k:?}")))
        };
        let num = |(line, v): (usize, String)| {
            v.parse::<f64>().map_err(|_| perr(line, format!("not a number: {v:?}")))
        };
        let scenario = get("scenario")?.1;
        let candidate_s = num(get("candidate_s")?)?;
        let direction = get("direction")?.1;
        let settings_hash = get("settings_hash")?.1;
        let (dline, dv) = get("dimension")?;
        let dimension = dv
            .parse::<usize>()
            .map_err(|_| perr(dline, format!("bad dimension {dv:?}")))?;
        let (mline, mv) = get("masses")?;
        let masses = mv
            .split(',')
            .map(|x| num((mline, x.trim().to_string())))
            .collect::<Result<Vec<_>>>()?;
        let (eline, ev) = get("events")?;
        let events = ev
            .split(';')
            .filter(|e| !e.trim().is_empty())
            .map(|e| {
                let (idx, kind) = e
                    .split_once(':')
                    .ok_or_else(|| perr(eline, format!("malformed event {e:?}")))?;
                Ok(BranchEvent {
                    index: idx
                        .trim()
                        .parse()
                        .map_err(|_| perr(eline, format!("bad event index {idx:?}")))?,
                    kind: kind.trim().parse::<EventKind>().map_err(|e| perr(eline, e.to_string()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let skip = meta.len();
        let nd = dimension * masses.len();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        let expected: Vec<String> = FIXED_COLUMNS
            .iter()
            .map(|c| c.to_string())
            .chain((0..nd).map(|k| format!("q{k}")))
            .collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(perr(skip + 1, "unexpected column header".into()));
        }
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = skip + 2 + k;
            let rec = rec?;
            let f = |j: usize| -> Result<f64> {
                rec[j].parse::<f64>().map_err(|_| perr(line, format!("column {j}: {:?}", &rec[j])))
            };
            let u = |j: usize| -> Result<usize> {
                rec[j].parse::<usize>().map_err(|_| perr(line, format!("column {j}: {:?}", &rec[j])))
            };
            rows.push(RecordRow {
                step: u(0)?,
                s: f(1)?,
                arclength: f(2)?,
                potential: f(3)?,
                residual: f(4)?,
                inertia: InertiaTriple::new(u(5)?, u(6)?, u(7)?),
                class: rec[8].parse().map_err(|e: Error| perr(line, e.to_string()))?,
                q: (0..nd).map(|j| f(9 + j)).collect::<Result<_>>()?,
            });
        }
        Ok(Self {
            scenario,
            candidate_s,
            direction,
            settings_hash,
            dimension,
            masses,
            events,
            rows,
        })
    }

    /// Writes into `dir` under [`BranchRecord::file_name`].
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_csv_string()?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BranchRecord {
        BranchRecord {
            scenario: "pair".into(),
            candidate_s: 1.0 / 3.0 + 1.0,
            direction: "plus".into(),
            settings_hash: settings_hash(&ContinuationSettings::default()),
            dimension: 2,
            masses: vec![1.0, 0.1],
            events: vec![
                BranchEvent { index: 0, kind: EventKind::StartBifurcation },
                BranchEvent { index: 1, kind: EventKind::SBound },
            ],
            rows: (0..2)
                .map(|k| RecordRow {
                    step: k,
                    s: 1.1 + k as f64 * 0.1,
                    arclength: std::f64::consts::PI * k as f64,
                    potential: 0.7,
                    residual: 1e-13,
                    inertia: InertiaTriple::new(0, 0, 1),
                    class: Classification::LocalMinimum,
                    q: vec![0.1, -0.3, 1e-300, 2.0f64.sqrt()],
                })
                .collect(),
        }
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let r = sample();
        let text = r.to_csv_string().unwrap();
        assert!(text.contains("\nstep,s,arclength,U,residual,iminus,izero,iplus,class,q0,q1,q2,q3\n"));
        assert_eq!(BranchRecord::parse(&text).unwrap(), r);
    }

    #[test]
    fn file_name_format() {
        assert_eq!(sample().file_name(), "pair_s1.333333_plus.csv");
    }

    #[test]
    fn hash_depends_on_settings() {
        let a = ContinuationSettings::default();
        let b = ContinuationSettings { delta: 0.02, ..a.clone() };
        assert_eq!(settings_hash(&a).len(), 64);
        assert_ne!(settings_hash(&a), settings_hash(&b));
    }

    #[test]
    fn bad_header_rejected() {
        let text = sample().to_csv_string().unwrap().replace(",class,", ",klass,");
        assert!(matches!(BranchRecord::parse(&text), Err(Error::Parse { .. })));
    }
}
