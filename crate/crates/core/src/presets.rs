//! Central configurations used as starting points of the trivial branch.

use crate::continuation::{AugmentedSystem, Constraint, ContinuationSettings};
use crate::error::{Error, Result};
use crate::flow::plane_rotation;
use crate::potential::{self, Configuration, Masses, SParameter};
use nalgebra::DVector;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

/// Residual every preset must reach at `s = 1`.
pub const PRESET_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// Four bodies on a square.
    Square,
    /// Three bodies on an equilateral triangle.
    Triangle,
    /// Equilateral triangle plus a fourth body at its centre.
    TriangleCenter,
    /// Square plus a fifth body at its centre.
    SquareCenter,
    /// Bodies on a line, in the given mass order.
    Collinear,
    /// Coordinates given verbatim (body-major).
    Explicit(Vec<f64>),
}

impl Preset {
    pub const NAMES: [&'static str; 6] = [
        "square",
        "triangle",
        "triangle_center",
        "square_center",
        "collinear",
        "explicit",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Square => "square",
            Preset::Triangle => "triangle",
            Preset::TriangleCenter => "triangle_center",
            Preset::SquareCenter => "square_center",
            Preset::Collinear => "collinear",
            Preset::Explicit(_) => "explicit",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Preset::Square => "4 bodies at the vertices of a square (d = 3)",
            Preset::Triangle => "3 bodies at the vertices of an equilateral triangle (d = 3)",
            Preset::TriangleCenter => "equilateral triangle with a 4th body at the centre (d = 3)",
            Preset::SquareCenter => "square with a 5th body at the centre (d = 3)",
            Preset::Collinear => "collinear central configuration in the given mass order (d = 2)",
            Preset::Explicit(_) => "explicit body-major coordinates",
        }
    }

    /// Body count the preset requires, if fixed.
    pub fn bodies(&self) -> Option<usize> {
        match self {
            Preset::Square | Preset::TriangleCenter => Some(4),
            Preset::Triangle => Some(3),
            Preset::SquareCenter => Some(5),
            Preset::Collinear | Preset::Explicit(_) => None,
        }
    }

    /// Dimension the preset lives in, if fixed.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Preset::Collinear => Some(2),
            Preset::Explicit(_) => None,
            _ => Some(3),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Preset::Square),
            "triangle" => Ok(Preset::Triangle),
            "triangle_center" => Ok(Preset::TriangleCenter),
            "square_center" => Ok(Preset::SquareCenter),
            "collinear" => Ok(Preset::Collinear),
            "explicit" => Ok(Preset::Explicit(Vec::new())),
            other => Err(Error::InvalidInput(format!("unknown preset {other:?}"))),
        }
    }
}

fn polygon(k: usize, center: bool) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = (0..k)
        .map(|j| {
            let a = FRAC_PI_2 + 2.0 * PI * j as f64 / k as f64;
            [a.cos(), a.sin()]
        })
        .collect();
    if center {
        out.push([0.0, 0.0]);
    }
    out
}

/// Builds the preset configuration for masses `m` in dimension `dim`,
/// centred and normalised; symmetric and collinear presets are
/// Newton-polished to a central configuration.
pub fn preset_configuration(preset: &Preset, m: &Masses, dim: usize) -> Result<Configuration> {
    if let Some(n) = preset.bodies() {
        if m.len() != n {
            return Err(Error::Validation(format!(
                "preset {} needs {n} bodies, got {}",
                preset.name(),
                m.len()
            )));
        }
    }
    if let Some(d) = preset.dimension() {
        if d != dim {
            return Err(Error::Validation(format!(
                "preset {} lives in dimension {d}, scenario has {dim}",
                preset.name()
            )));
        }
    }
    let planar = match preset {
        Preset::Square => polygon(4, false),
        Preset::Triangle => polygon(3, false),
        Preset::TriangleCenter => polygon(3, true),
        Preset::SquareCenter => polygon(4, true),
        Preset::Collinear => return collinear(m),
        Preset::Explicit(coords) => {
            let q = Configuration::new(dim, coords.clone())?;
            if q.n() != m.len() {
                return Err(Error::Validation(format!(
                    "explicit coordinates describe {} bodies but {} masses are given",
                    q.n(),
                    m.len()
                )));
            }
            q.check_collisions()
                .map_err(|e| Error::Validation(format!("explicit coordinates: {e}")))?;
            let q = potential::recenter(&q, m);
            return potential::normalize_to_sphere(&q, m, SParameter::new(1.0)?);
        }
    };
    let flat: Vec<f64> = planar.iter().flat_map(|p| [p[0], p[1]]).collect();
    let polished = polish(&flat, 2, m, true)?;
    let coords: Vec<f64> = polished.chunks(2).flat_map(|p| [0.0, p[0], p[1]]).collect();
    let q = Configuration::new(3, coords)?;
    check_central(&q, m)?;
    Ok(q)
}

/// Collinear central configuration on `{0} x R` with bodies ordered as the
/// masses, from equally spaced initial positions.
fn collinear(m: &Masses) -> Result<Configuration> {
    let n = m.len();
    let start: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect();
    let line = polish(&start, 1, m, false)?;
    let coords: Vec<f64> = line.iter().flat_map(|&y| [0.0, y]).collect();
    let q = Configuration::new(2, coords)?;
    check_central(&q, m)?;
    Ok(q)
}

fn check_central(q: &Configuration, m: &Masses) -> Result<()> {
    let residual = potential::balanced_residual(q, m, SParameter::new(1.0)?)?.norm();
    if residual >= PRESET_TOL {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual,
        });
    }
    Ok(())
}

/// Newton on `M^-1 grad U + U q = 0` in `dim` dimensions (the equation
/// fixes the scale; in the plane a rotation gauge fixes the orientation).
fn polish(start: &[f64], dim: usize, m: &Masses, rotate: bool) -> Result<Vec<f64>> {
    let q = Configuration::new(2, pad(start, dim))?;
    let q = potential::recenter(&q, m);
    let q = potential::normalize_to_sphere(&q, m, SParameter::new(1.0)?)?;
    let x: Vec<f64> = unpad(q.coords(), dim);
    let generators = if rotate {
        plane_rotation(&x, dim, m, 0, 1).into_iter().collect()
    } else {
        Vec::new()
    };
    let anchor = DVector::from_column_slice(&x);
    let sys = AugmentedSystem::with_generators(m, dim, generators, anchor.clone(), Constraint::FixedS(1.0));
    let settings = ContinuationSettings {
        newton_tol: 1e-13,
        max_newton_iters: 100,
        ..ContinuationSettings::default()
    };
    let x0 = sys.lift(&anchor.insert_row(x.len(), 1.0));
    let out = sys.solve(&x0, &settings)?;
    Ok(out.x.as_slice()[..x.len()].to_vec())
}

fn pad(coords: &[f64], dim: usize) -> Vec<f64> {
    if dim == 2 {
        coords.to_vec()
    } else {
        coords.iter().flat_map(|&y| [0.0, y]).collect()
    }
}

fn unpad(coords: &[f64], dim: usize) -> Vec<f64> {
    if dim == 2 {
        coords.to_vec()
    } else {
        coords.chunks(2).map(|p| p[1]).collect()
    }
}
