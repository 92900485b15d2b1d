//! Uniform-step simulation records and their CSV form.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::ErrorState;

/// Header line of every time-series CSV.
pub const CSV_HEADER: &str = "t,x1,x2,r,rdot,e1,e2,u,V,Vdot";

/// One row of a simulation record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub r: f64,
    pub rdot: f64,
    pub e1: f64,
    pub e2: f64,
    /// Control acceleration applied at `t`.
    pub u: f64,
    /// Quadratic energy `½ k e1² + ½ e2²`.
    pub v: f64,
    /// Time derivative of `v` along the true closed loop.
    pub vdot: f64,
}

impl Sample {
    pub fn error(&self) -> ErrorState {
        ErrorState::new(self.e1, self.e2)
    }

    fn fields(&self) -> [f64; 10] {
        [
            self.t, self.x1, self.x2, self.r, self.rdot, self.e1, self.e2, self.u, self.v,
            self.vdot,
        ]
    }
}

/// Samples on the grid `t[i] = t0 + i·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    t0: f64,
    dt: f64,
    samples: Vec<Sample>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64) -> Self {
        Self {
            t0,
            dt,
            samples: Vec::new(),
        }
    }

    /// Builds a series from samples whose `t` fields are ignored and
    /// replaced by the uniform grid.
    pub fn from_samples(t0: f64, dt: f64, samples: impl IntoIterator<Item = Sample>) -> Self {
        let mut ts = Self::new(t0, dt);
        for s in samples {
            ts.push(s);
        }
        ts
    }

    /// Appends a sample, stamping it with the next grid time.
    pub fn push(&mut self, mut s: Sample) {
        s.t = self.time(self.samples.len());
        self.samples.push(s);
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    /// Writes the CSV form: [`CSV_HEADER`], then one row per sample with every
    /// number in shortest round-trip exponent notation (`{:e}`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.samples {
            write_row(&mut w, &s.fields())?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Comma-joined `{:e}` row with a trailing newline.
pub fn write_row<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        write!(w, "{v:e}")?;
    }
    w.write_all(b"\n")
}
