//! Flat CSV trace format.
//!
//! One row per sample, columns in the order of [`HEADER`]. Values are written
//! with the shortest representation that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::attitude::{UnitQuat, Vec3};
use crate::sim::{SimTrace, TraceRecord};

pub const COLUMNS: usize = 44;

pub const HEADER: [&str; COLUMNS] = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "q1", "q2", "q3", "q0", "wx", "wy", "wz", "pdx",
    "pdy", "pdz", "thrust", "tau_x", "tau_y", "tau_z", "s_x", "s_y", "s_z", "f_x", "f_y", "f_z",
    "qd1", "qd2", "qd3", "qd0", "wdx", "wdy", "wdz", "theta_x", "theta_y", "theta_z", "psi_x",
    "psi_y", "psi_z", "fdx", "fdy", "fdz", "lyapunov",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header mismatch at column {column}: expected `{expected}`, found `{found}`")]
    Header {
        column: usize,
        expected: &'static str,
        found: String,
    },
    #[error("row {row}: expected {COLUMNS} fields, found {found}")]
    Width { row: usize, found: usize },
    #[error("row {row}, column `{column}`: cannot parse `{text}`")]
    Parse {
        row: usize,
        column: &'static str,
        text: String,
    },
    #[error("row {row}: time does not increase")]
    NonMonotonic { row: usize },
    #[error("trace has no samples")]
    Empty,
}

/// One CSV row, decoupled from the simulation types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    /// `[q1, q2, q3, q0]`
    pub attitude: [f64; 4],
    pub omega: Vec3,
    pub position_ref: Vec3,
    pub thrust: f64,
    pub torque: Vec3,
    pub sliding: Vec3,
    pub force: Vec3,
    pub desired_attitude: [f64; 4],
    pub desired_omega: Vec3,
    pub theta: Vec3,
    pub psi: Vec3,
    pub disturbance: Vec3,
    pub lyapunov: f64,
}

impl TraceRow {
    pub fn from_record(r: &TraceRecord) -> Self {
        let d = &r.control.diag;
        Self {
            t: r.t,
            position: r.state.position,
            velocity: r.state.velocity,
            attitude: r.state.attitude.to_array(),
            omega: r.state.omega,
            position_ref: r.reference.position,
            thrust: r.control.command.thrust,
            torque: r.control.command.torque,
            sliding: d.sliding.s,
            force: d.force,
            desired_attitude: d.desired_attitude.to_array(),
            desired_omega: d.desired_omega,
            theta: d.theta,
            psi: d.psi,
            disturbance: r.disturbance,
            lyapunov: r.lyapunov,
        }
    }

    pub fn to_fields(&self) -> [f64; COLUMNS] {
        let mut out = [0.0; COLUMNS];
        let mut i = 0;
        let mut put = |xs: &[f64]| {
            out[i..i + xs.len()].copy_from_slice(xs);
            i += xs.len();
        };
        put(&[self.t]);
        put(self.position.as_slice());
        put(self.velocity.as_slice());
        put(&self.attitude);
        put(self.omega.as_slice());
        put(self.position_ref.as_slice());
        put(&[self.thrust]);
        put(self.torque.as_slice());
        put(self.sliding.as_slice());
        put(self.force.as_slice());
        put(&self.desired_attitude);
        put(self.desired_omega.as_slice());
        put(self.theta.as_slice());
        put(self.psi.as_slice());
        put(self.disturbance.as_slice());
        put(&[self.lyapunov]);
        out
    }

    pub fn from_fields(f: &[f64; COLUMNS]) -> Self {
        let v = |i: usize| Vec3::new(f[i], f[i + 1], f[i + 2]);
        let q = |i: usize| [f[i], f[i + 1], f[i + 2], f[i + 3]];
        Self {
            t: f[0],
            position: v(1),
            velocity: v(4),
            attitude: q(7),
            omega: v(11),
            position_ref: v(14),
            thrust: f[17],
            torque: v(18),
            sliding: v(21),
            force: v(24),
            desired_attitude: q(27),
            desired_omega: v(31),
            theta: v(34),
            psi: v(37),
            disturbance: v(40),
            lyapunov: f[43],
        }
    }

    /// Attitude error `Q_d⁻¹ ⊙ Q`, when both stored quaternions are usable.
    pub fn attitude_error(&self) -> Option<UnitQuat> {
        let q = UnitQuat::from_array(self.attitude)?;
        let qd = UnitQuat::from_array(self.desired_attitude)?;
        Some(crate::attitude::quat_error(&qd, &q))
    }

    pub fn position_error(&self) -> Vec3 {
        self.position - self.position_ref
    }

    /// `Ω̃ = Θ + Ψ`.
    pub fn omega_error(&self) -> Vec3 {
        self.theta + self.psi
    }
}

pub fn write_rows<W: Write>(rows: impl IntoIterator<Item = TraceRow>, w: W) -> Result<(), TraceError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEADER)?;
    let mut buf: Vec<String> = Vec::with_capacity(COLUMNS);
    for row in rows {
        buf.clear();
        buf.extend(row.to_fields().iter().map(|x| x.to_string()));
        wtr.write_record(&buf)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(trace: &SimTrace, w: W) -> Result<(), TraceError> {
    write_rows(trace.records.iter().map(TraceRow::from_record), w)
}

pub fn write_trace_file(trace: &SimTrace, path: &Path) -> Result<(), TraceError> {
    let f = BufWriter::new(File::create(path)?);
    write_trace(trace, f)
}

/// Parses and checks a trace: exact header, full rows, finite values,
/// strictly increasing time, at least one sample.
pub fn read_rows<R: Read>(r: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let found = rdr.headers()?.clone();
    for (i, expected) in HEADER.iter().enumerate() {
        let got = found.get(i).unwrap_or("");
        if got.trim() != *expected {
            return Err(TraceError::Header {
                column: i,
                expected,
                found: got.to_string(),
            });
        }
    }
    if found.len() != COLUMNS {
        return Err(TraceError::Width {
            row: 0,
            found: found.len(),
        });
    }
    let mut rows: Vec<TraceRow> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        if rec.len() != COLUMNS {
            return Err(TraceError::Width {
                row,
                found: rec.len(),
            });
        }
        let mut fields = [0.0; COLUMNS];
        for (i, text) in rec.iter().enumerate() {
            fields[i] = match text.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => {
                    return Err(TraceError::Parse {
                        row,
                        column: HEADER[i],
                        text: text.to_string(),
                    })
                }
            };
        }
        let parsed = TraceRow::from_fields(&fields);
        if rows.last().is_some_and(|p| parsed.t <= p.t) {
            return Err(TraceError::NonMonotonic { row });
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>, TraceError> {
    read_rows(File::open(path)?)
}
