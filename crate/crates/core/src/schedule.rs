//! Adiabatic protocol bookkeeping: the path `lambda(t)`, its analytic rate,
//! time slicing and chunk assignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// `sin^2(pi t / 2T)`; rate vanishes at both ends.
    Sin2,
    /// `sin^2(pi/2 sin^2(pi t / 2T))`; rate and acceleration vanish at ends.
    NestedSin2,
    /// `t / T`.
    Linear,
}

impl PathKind {
    pub fn lambda(self, t: f64, total: f64) -> f64 {
        match self {
            PathKind::Sin2 => {
                let s = (std::f64::consts::FRAC_PI_2 * t / total).sin();
                s * s
            }
            PathKind::NestedSin2 => {
                let b = (std::f64::consts::FRAC_PI_2 * t / total).sin();
                let inner = std::f64::consts::FRAC_PI_2 * b * b;
                let s = inner.sin();
                s * s
            }
            PathKind::Linear => t / total,
        }
    }

    pub fn lambda_dot(self, t: f64, total: f64) -> f64 {
        let pi = std::f64::consts::PI;
        match self {
            PathKind::Sin2 => pi / (2.0 * total) * (pi * t / total).sin(),
            PathKind::NestedSin2 => {
                let b = std::f64::consts::FRAC_PI_2 * t / total;
                let a = std::f64::consts::FRAC_PI_2 * b.sin() * b.sin();
                (2.0 * a).sin() * pi * pi / (4.0 * total) * (2.0 * b).sin()
            }
            PathKind::Linear => 1.0 / total,
        }
    }
}

/// Midpoint data for one evolution slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePoint {
    pub index: usize,
    pub t: f64,
    pub lambda: f64,
    pub lambda_dot: f64,
}

/// Adiabatic protocol: total time `T`, `S` slices per unit time, a named
/// path, and `M` chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_time: f64,
    pub slices_per_unit: f64,
    pub path: PathKind,
    pub chunks: usize,
}

impl Schedule {
    pub fn new(total_time: f64, slices_per_unit: f64, path: PathKind, chunks: usize) -> Result<Self> {
        if !(total_time > 0.0) || !(slices_per_unit > 0.0) {
            return Err(Error::InvalidArgument(
                "schedule: total_time and slices_per_unit must be positive".into(),
            ));
        }
        if chunks < 1 {
            return Err(Error::InvalidArgument("schedule: chunks must be >= 1".into()));
        }
        let sched = Schedule {
            total_time,
            slices_per_unit,
            path,
            chunks,
        };
        let n = sched.n_slices();
        if n < 1 {
            return Err(Error::InvalidArgument(
                "schedule: fewer than one slice".into(),
            ));
        }
        if chunks > n {
            return Err(Error::InvalidArgument(format!(
                "schedule: {chunks} chunks but only {n} slices"
            )));
        }
        Ok(sched)
    }

    pub fn n_slices(&self) -> usize {
        (self.slices_per_unit * self.total_time).round() as usize
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.slices_per_unit
    }

    pub fn lambda(&self, t: f64) -> f64 {
        self.path.lambda(t, self.total_time)
    }

    pub fn lambda_dot(&self, t: f64) -> f64 {
        self.path.lambda_dot(t, self.total_time)
    }

    /// `(t_s, lambda_s, lambda_dot_s)` at the midpoint of every slice.
    pub fn midpoints(&self) -> Vec<SlicePoint> {
        let tau = self.tau();
        (0..self.n_slices())
            .map(|s| {
                let t = (s as f64 + 0.5) * tau;
                SlicePoint {
                    index: s,
                    t,
                    lambda: self.lambda(t),
                    lambda_dot: self.lambda_dot(t),
                }
            })
            .collect()
    }

    /// End-exclusive slice index of each chunk, balanced across `M` chunks.
    pub fn chunk_boundaries(&self) -> Vec<usize> {
        let n = self.n_slices();
        let m = self.chunks;
        (1..=m).map(|c| c * n / m).collect()
    }

    pub fn chunk_of_slice(&self, slice: usize) -> usize {
        let bounds = self.chunk_boundaries();
        bounds
            .iter()
            .position(|&end| slice < end)
            .unwrap_or(self.chunks - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin2_midpoint_is_half() {
        let sched = Schedule::new(0.3, 120.0, PathKind::Sin2, 2).unwrap();
        assert!((sched.lambda(0.15) - 0.5).abs() < 1e-14);
        assert_eq!(sched.n_slices(), 36);
    }

    #[test]
    fn sin2_rate_vanishes_at_ends() {
        let sched = Schedule::new(2.0, 8.0, PathKind::Sin2, 1).unwrap();
        assert!(sched.lambda_dot(0.0).abs() < 1e-14);
        assert!(sched.lambda_dot(2.0).abs() < 1e-12);
        assert!((sched.lambda(0.0)).abs() < 1e-14);
        assert!((sched.lambda(2.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nested_sin2_endpoints() {
        let sched = Schedule::new(64.0, 8.0, PathKind::NestedSin2, 1).unwrap();
        assert!(sched.lambda(0.0).abs() < 1e-14);
        assert!((sched.lambda(64.0) - 1.0).abs() < 1e-12);
        assert!(sched.lambda_dot(0.0).abs() < 1e-14);
        assert!(sched.lambda_dot(64.0).abs() < 1e-12);
        // finite-difference check of the analytic rate
        let t = 20.0;
        let eps = 1e-6;
        let fd = (sched.lambda(t + eps) - sched.lambda(t - eps)) / (2.0 * eps);
        assert!((sched.lambda_dot(t) - fd).abs() < 1e-8);
    }

    #[test]
    fn linear_rate_is_one_over_t() {
        let sched = Schedule::new(0.2, 120.0, PathKind::Linear, 2).unwrap();
        for p in sched.midpoints() {
            assert!((p.lambda_dot - 5.0).abs() < 1e-12);
        }
        assert_eq!(sched.n_slices(), 24);
    }

    #[test]
    fn chunk_boundaries_balanced() {
        let sched = Schedule::new(0.3, 120.0, PathKind::Sin2, 2).unwrap();
        assert_eq!(sched.chunk_boundaries(), vec![18, 36]);
        assert_eq!(sched.chunk_of_slice(0), 0);
        assert_eq!(sched.chunk_of_slice(17), 0);
        assert_eq!(sched.chunk_of_slice(18), 1);
        assert_eq!(sched.chunk_of_slice(35), 1);
    }
}
