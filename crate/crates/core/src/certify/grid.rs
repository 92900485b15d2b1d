//! Grid sweeps: the definiteness certificate and the energy-rate table.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{
    closed_form_rate, demidovich_j, lyapunov_vdot, relative_deviation, PMatrix,
    RATE_COEFFICIENT_HALF, RATE_COEFFICIENT_THREE_QUARTERS,
};
use crate::error::{Error, Result};
use crate::model::{ErrorState, GainParams};
use crate::series::write_row;

/// Relative agreement required for a closed-form coefficient to match.
pub const COEFFICIENT_MATCH_TOL: f64 = 1e-10;

/// `n` uniformly spaced values on `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let axis = Self { lo, hi, n };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.n == 0 {
            return Err(Error::InvalidParams(format!("bad axis {self:?}")));
        }
        if self.n > 1 && !(self.hi > self.lo) {
            return Err(Error::InvalidParams(format!(
                "axis needs lo < hi: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let span = self.hi - self.lo;
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| self.lo + span * i as f64 / last)
            .collect()
    }
}

/// Rectangular grid plus optional extra `e1` columns crossed with the `e2` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub e1: Axis,
    pub e2: Axis,
    pub e1_refine: Vec<f64>,
}

impl Default for GridSpec {
    /// 101×101 points on `[-2, 2]²` and `±|e1|` at four points per decade
    /// over `[1e-6, 1]`.
    fn default() -> Self {
        let e1_refine = (0..=24)
            .map(|i| 10f64.powf(-6.0 + i as f64 / 4.0))
            .flat_map(|m| [-m, m])
            .collect();
        Self {
            e1: Axis {
                lo: -2.0,
                hi: 2.0,
                n: 101,
            },
            e2: Axis {
                lo: -2.0,
                hi: 2.0,
                n: 101,
            },
            e1_refine,
        }
    }
}

impl GridSpec {
    pub fn rectangular(e1: Axis, e2: Axis) -> Self {
        Self {
            e1,
            e2,
            e1_refine: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.e1.validate()?;
        self.e2.validate()?;
        if self.e1_refine.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "refinement values must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<ErrorState> {
        let e2s = self.e2.values();
        let e1s = self
            .e1
            .values()
            .into_iter()
            .chain(self.e1_refine.iter().copied());
        e1s.flat_map(|e1| e2s.iter().map(move |&e2| ErrorState::new(e1, e2)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub e1: f64,
    pub e2: f64,
    /// `eᵀ J(e) e` through the numeric matrix path.
    pub quadform: f64,
    pub closed_half: f64,
    pub closed_three_quarters: f64,
    pub eig_min: f64,
    pub eig_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub points: usize,
    pub max_quadform: f64,
    /// Points where the along-state form vanishes.
    pub zero_set: Vec<(f64, f64)>,
    /// Zeros occur exactly on the grid points with `e2 = 0`.
    pub zero_set_is_e2_axis: bool,
    pub eig_min_range: (f64, f64),
    pub eig_max_range: (f64, f64),
    /// Points where `J` has a positive eigenvalue.
    pub positive_eig_points: usize,
    /// Points where `J` has a non-negative eigenvalue.
    pub nonnegative_eig_points: usize,
    pub max_dev_half: f64,
    pub max_dev_three_quarters: f64,
    /// The closed-form coefficient reproducing the numeric path, if any.
    pub matched_coefficient: Option<f64>,
}

impl CertificateSummary {
    pub fn from_records(records: &[PointRecord]) -> Self {
        let fold_range = |it: &mut dyn Iterator<Item = f64>| {
            it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let zero_set: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.quadform == 0.0)
            .map(|r| (r.e1, r.e2))
            .collect();
        let zero_set_is_e2_axis = records.iter().all(|r| (r.quadform == 0.0) == (r.e2 == 0.0));
        let max_dev = |f: fn(&PointRecord) -> f64| {
            records
                .iter()
                .map(|r| relative_deviation(r.quadform, f(r)))
                .fold(0.0, f64::max)
        };
        let max_dev_half = max_dev(|r| r.closed_half);
        let max_dev_three_quarters = max_dev(|r| r.closed_three_quarters);
        let matched_coefficient = if max_dev_half <= COEFFICIENT_MATCH_TOL {
            Some(RATE_COEFFICIENT_HALF)
        } else if max_dev_three_quarters <= COEFFICIENT_MATCH_TOL {
            Some(RATE_COEFFICIENT_THREE_QUARTERS)
        } else {
            None
        };
        Self {
            points: records.len(),
            max_quadform: records
                .iter()
                .map(|r| r.quadform)
                .fold(f64::NEG_INFINITY, f64::max),
            zero_set,
            zero_set_is_e2_axis,
            eig_min_range: fold_range(&mut records.iter().map(|r| r.eig_min)),
            eig_max_range: fold_range(&mut records.iter().map(|r| r.eig_max)),
            positive_eig_points: records.iter().filter(|r| r.eig_max > 0.0).count(),
            nonnegative_eig_points: records.iter().filter(|r| r.eig_max >= 0.0).count(),
            max_dev_half,
            max_dev_three_quarters,
            matched_coefficient,
        }
    }

    /// Along-state form is non-positive, and zero only on `e2 = 0`.
    pub fn is_semidefinite_with_e2_zero_set(&self) -> bool {
        self.max_quadform <= 0.0 && self.zero_set_is_e2_axis
    }

    /// Matrix-level negative definiteness over the whole grid.
    pub fn is_matrix_negative_definite(&self) -> bool {
        self.nonnegative_eig_points == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub params: GainParams,
    pub weight: PMatrix,
    pub grid: GridSpec,
    pub records: Vec<PointRecord>,
    /// Grid points where the field is singular.
    pub skipped: Vec<(f64, f64)>,
    pub summary: CertificateSummary,
}

pub const CERTIFICATE_CSV_HEADER: &str =
    "e1,e2,quadform,closed_half,closed_three_quarters,lambda_min,lambda_max";

impl Certificate {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CERTIFICATE_CSV_HEADER}")?;
        for r in &self.records {
            write_row(
                &mut w,
                &[
                    r.e1,
                    r.e2,
                    r.quadform,
                    r.closed_half,
                    r.closed_three_quarters,
                    r.eig_min,
                    r.eig_max,
                ],
            )?;
        }
        w.flush()
    }
}

/// Evaluates the along-state form and the eigenvalues of `J` over `grid`.
pub fn grid_certificate(p: &GainParams, weight: &PMatrix, grid: &GridSpec) -> Result<Certificate> {
    p.validate()?;
    grid.validate()?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for e in grid.points() {
        let Ok(j) = demidovich_j(e, p, weight) else {
            skipped.push((e.e1, e.e2));
            continue;
        };
        let (eig_min, eig_max) = j.sym_eigenvalues();
        records.push(PointRecord {
            e1: e.e1,
            e2: e.e2,
            quadform: j.quadratic_form(e.as_array()),
            closed_half: closed_form_rate(e, p, RATE_COEFFICIENT_HALF)?,
            closed_three_quarters: closed_form_rate(e, p, RATE_COEFFICIENT_THREE_QUARTERS)?,
            eig_min,
            eig_max,
        });
    }
    let summary = CertificateSummary::from_records(&records);
    Ok(Certificate {
        params: *p,
        weight: *weight,
        grid: grid.clone(),
        records,
        skipped,
        summary,
    })
}

/// `|V̇|` tabulated over an `(e1, e2)` grid; `values[j][i]` is at `(e1[i], e2[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRateGrid {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl EnergyRateGrid {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[i]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "e1,e2,abs_vdot")?;
        for (j, &e2) in self.e2.iter().enumerate() {
            for (i, &e1) in self.e1.iter().enumerate() {
                write_row(&mut w, &[e1, e2, self.values[j][i]])?;
            }
        }
        w.flush()
    }
}

/// Singular points (only possible with `mu = 0`) are stored as `+inf`.
pub fn energy_rate_grid(p: &GainParams, e1: &Axis, e2: &Axis) -> Result<EnergyRateGrid> {
    p.validate()?;
    e1.validate()?;
    e2.validate()?;
    let (e1s, e2s) = (e1.values(), e2.values());
    let values = e2s
        .iter()
        .map(|&b| {
            e1s.iter()
                .map(|&a| match lyapunov_vdot(ErrorState::new(a, b), p) {
                    Ok(v) => v.abs(),
                    Err(_) if b == 0.0 => 0.0,
                    Err(_) => f64::INFINITY,
                })
                .collect()
        })
        .collect();
    Ok(EnergyRateGrid {
        e1: e1s,
        e2: e2s,
        values,
    })
}
