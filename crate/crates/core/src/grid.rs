//! Uniform time grids and functions sampled on them.
//!
//! Time-dependent data is stored on the *half-step* grid `t_j = j * dt / 2`,
//! `j = 0..=2 * steps`, so that every RK4 stage (`t`, `t + dt/2`, `t + dt`)
//! reads an exact sample.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// `[0, t_end]` split into `steps` intervals of length `dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::invalid(format!("t_end must be positive, got {t_end}")));
        }
        let ratio = t_end / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::invalid(format!("t_end = {t_end} is not an integral multiple of dt = {dt}")));
        }
        Ok(Self { t_end, dt, steps: steps as usize })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Time of full step `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Spacing of the half-step grid.
    pub fn half_dt(&self) -> f64 {
        0.5 * self.dt
    }

    /// Number of half-step samples, `2 * steps + 1`.
    pub fn half_len(&self) -> usize {
        2 * self.steps + 1
    }

    pub fn half_time(&self, j: usize) -> f64 {
        j as f64 * self.half_dt()
    }

    /// Sample `f` on the half-step grid.
    pub fn sample(&self, f: impl Fn(f64) -> C64) -> Samples {
        Samples::new(self.half_dt(), (0..self.half_len()).map(|j| f(self.half_time(j))).collect())
    }
}

/// Complex samples on a uniform grid starting at `t = 0` with spacing `h`.
///
/// Evaluation between samples is linear; outside the sampled range the
/// function is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    h: f64,
    values: Vec<C64>,
}

impl Samples {
    pub fn new(h: f64, values: Vec<C64>) -> Self {
        Self { h, values }
    }

    pub fn zeros(h: f64, len: usize) -> Self {
        Self { h, values: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn get(&self, j: usize) -> C64 {
        self.values.get(j).copied().unwrap_or_default()
    }

    /// Value at `t`; snaps to the nearest sample when `t` lies on the grid.
    pub fn eval(&self, t: f64) -> C64 {
        if self.values.is_empty() || t < -1e-12 * self.h {
            return C64::default();
        }
        let x = (t / self.h).max(0.0);
        let j = x.round();
        if (x - j).abs() < 1e-9 {
            return self.get(j as usize);
        }
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return C64::default();
        }
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Samples {
        Samples { h: self.h, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Largest `|self - other|` over common samples.
    pub fn max_abs_diff(&self, other: &Samples) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Running trapezoid integral `F_0 = 0`, `F_{i+1} = F_i + h (f_i + f_{i+1}) / 2`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Trapezoid integral over all samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    cumulative_trapezoid(values, h).last().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_non_integral_span() {
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        assert!(TimeGrid::new(-1.0, 0.1).is_err());
        let g = TimeGrid::new(12.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 12_000);
        assert_eq!(g.half_len(), 24_001);
    }

    #[test]
    fn samples_snap_and_interpolate() {
        let g = TimeGrid::new(1.0, 0.25).unwrap();
        let s = g.sample(|t| C64::new(t, -t));
        assert_eq!(s.eval(0.375), C64::new(0.375, -0.375));
        assert!((s.eval(0.3) - C64::new(0.3, -0.3)).norm() < 1e-15);
        assert_eq!(s.eval(1.5), C64::default());
        assert_eq!(s.eval(-0.1), C64::default());
    }

    #[test]
    fn trapezoid_is_exact_on_linear_functions() {
        let v: Vec<f64> = (0..11).map(|i| 2.0 * i as f64 * 0.1 + 1.0).collect();
        assert!((trapezoid(&v, 0.1) - 2.0).abs() < 1e-14);
    }
}
