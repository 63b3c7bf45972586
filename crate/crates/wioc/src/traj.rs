//! Trajectories and uniform empirical measures.
//!
//! A trajectory is a flat real vector in `R^K`: either a state sequence or a
//! sorted list of event times. A measure is `n` trajectories of the same
//! dimension carrying uniform weight `1/n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{all_finite, sq_dist};

/// A point in `R^K`, `K >= 1`, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("trajectory must have at least one entry"));
        }
        if !all_finite(&values) {
            return Err(Error::invalid("trajectory entries must be finite"));
        }
        Ok(Trajectory { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for Trajectory {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// How the entries of a trajectory are to be read.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TrajectoryKind {
    /// Free state coordinates.
    State,
    /// Strictly increasing event times in `[0, horizon]`.
    EventTimes { horizon: f64 },
}

/// `n` same-dimension trajectories with implicit uniform weight `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    trajectories: Vec<Trajectory>,
    dim: usize,
    kind: TrajectoryKind,
}

impl EmpiricalMeasure {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        Self::with_kind(trajectories, TrajectoryKind::State)
    }

    pub fn with_kind(trajectories: Vec<Trajectory>, kind: TrajectoryKind) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::invalid("empirical measure must hold n >= 1 trajectories"));
        }
        let dim = trajectories[0].dim();
        for t in &trajectories {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.dim(),
                });
            }
            if let TrajectoryKind::EventTimes { horizon } = kind {
                validate_event_times(t.values(), horizon)?;
            }
        }
        Ok(EmpiricalMeasure {
            trajectories,
            dim,
            kind,
        })
    }

    /// Builds a measure from raw rows, all of dimension `K`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let trajectories = rows.into_iter().map(Trajectory::new).collect::<Result<_>>()?;
        Self::new(trajectories)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    /// Uniform weight of every atom.
    pub fn weight(&self) -> f64 {
        1.0 / self.trajectories.len() as f64
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    /// Writes the measure as CSV with header `id,v1,...,vK`.
    ///
    /// Values use Rust's shortest round-trip decimal formatting, so a read
    /// back recovers every `f64` bit-exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("id");
        for j in 1..=self.dim {
            write!(out, ",v{j}").unwrap();
        }
        out.push('\n');
        for (i, t) in self.trajectories.iter().enumerate() {
            write!(out, "{i}").unwrap();
            for v in t.values() {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a measure written by [`EmpiricalMeasure::write_csv`].
    ///
    /// Scientific notation in value columns is accepted.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let parse_err = |detail: String| Error::Parse {
            path: path.display().to_string(),
            detail,
        };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"id") || cols.len() < 2 {
            return Err(parse_err(format!("bad header: {header:?}")));
        }
        let dim = cols.len() - 1;
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(parse_err(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    dim + 1
                )));
            }
            let mut values = Vec::with_capacity(dim);
            for f in &fields[1..] {
                let v: f64 = f.trim().parse().map_err(|e| {
                    parse_err(format!("row {}: bad value {f:?}: {e}", lineno + 2))
                })?;
                values.push(v);
            }
            rows.push(values);
        }
        Self::from_rows(rows)
    }
}

fn validate_event_times(values: &[f64], horizon: f64) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for &v in values {
        if v < 0.0 || v > horizon {
            return Err(Error::invalid(format!(
                "event time {v} outside [0, {horizon}]"
            )));
        }
        if v <= prev {
            return Err(Error::invalid("event times must be strictly increasing"));
        }
        prev = v;
    }
    Ok(())
}

/// Euclidean distance `||a - b||`.
pub fn euclidean_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(sq_dist(a.values(), b.values()).sqrt())
}

/// Smoothed distance `sqrt(||a - b||^2 + eps^2)`.
///
/// Twice differentiable everywhere in `a`, including at `a = b`, and converges
/// to [`euclidean_distance`] as `eps -> 0`.
pub fn smoothed_distance(a: &Trajectory, b: &Trajectory, eps: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    Ok((sq_dist(a.values(), b.values()) + eps * eps).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Trajectory {
        Trajectory::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Trajectory::new(vec![]).is_err());
        assert!(Trajectory::new(vec![1.0, f64::NAN]).is_err());
        assert!(Trajectory::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn euclidean_known_values() {
        assert_eq!(euclidean_distance(&t(&[0.0, 0.0]), &t(&[0.0, 0.0])).unwrap(), 0.0);
        // sqrt(9 + 16)
        assert_eq!(euclidean_distance(&t(&[0.0, 0.0]), &t(&[3.0, 4.0])).unwrap(), 5.0);
        // |1 - (-2)|
        assert_eq!(euclidean_distance(&t(&[1.0]), &t(&[-2.0])).unwrap(), 3.0);
    }

    #[test]
    fn euclidean_rejects_dim_mismatch() {
        assert!(euclidean_distance(&t(&[1.0]), &t(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn smoothed_known_values() {
        // coincident points return eps
        let d = smoothed_distance(&t(&[1.0, 1.0]), &t(&[1.0, 1.0]), 1e-3).unwrap();
        assert!((d - 1e-3).abs() < 1e-18);
        // sqrt(9 + 16) again, with eps playing the second leg
        let d = smoothed_distance(&t(&[0.0]), &t(&[3.0]), 4.0).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn smoothed_rejects_nonpositive_eps() {
        assert!(smoothed_distance(&t(&[0.0]), &t(&[3.0]), 0.0).is_err());
        assert!(smoothed_distance(&t(&[0.0]), &t(&[3.0]), -1.0).is_err());
    }

    #[test]
    fn measure_enforces_shared_dimension() {
        let res = EmpiricalMeasure::new(vec![t(&[1.0]), t(&[1.0, 2.0])]);
        assert!(res.is_err());
    }

    #[test]
    fn event_time_validation() {
        let good = EmpiricalMeasure::with_kind(
            vec![t(&[0.5, 1.0, 2.5])],
            TrajectoryKind::EventTimes { horizon: 3.0 },
        );
        assert!(good.is_ok());
        let unsorted = EmpiricalMeasure::with_kind(
            vec![t(&[1.0, 0.5])],
            TrajectoryKind::EventTimes { horizon: 3.0 },
        );
        assert!(unsorted.is_err());
        let out_of_range = EmpiricalMeasure::with_kind(
            vec![t(&[0.5, 4.0])],
            TrajectoryKind::EventTimes { horizon: 3.0 },
        );
        assert!(out_of_range.is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("wioc_csv_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let m = EmpiricalMeasure::from_rows(vec![
            vec![0.1, -2.5e-17, 3.0],
            vec![1.0 / 3.0, 1e300, -0.0],
        ])
        .unwrap();
        m.write_csv(&path).unwrap();
        let back = EmpiricalMeasure::read_csv(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
