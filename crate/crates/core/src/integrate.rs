//! Fixed-step classical Runge–Kutta integration.

use crate::grid::TimeGrid;
use crate::{CMatrix, Result, C64};

/// A vector-space value the integrator can propagate.
pub trait OdeState: Clone {
    /// `self += a * x`.
    fn axpy(&mut self, a: f64, x: &Self);
}

impl OdeState for CMatrix {
    fn axpy(&mut self, a: f64, x: &Self) {
        crate::kernels::axpy(self, C64::from(a), x);
    }
}

impl<T: OdeState> OdeState for Vec<T> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, xi) in self.iter_mut().zip(x) {
            s.axpy(a, xi);
        }
    }
}

/// Integrate `y' = f(j, y)` over `grid` with RK4.
///
/// `f` receives the half-step index `j` of the stage time `j * dt / 2`.
/// `observe(i, y)` sees the state at every full step `i = 0..=steps`; an
/// error from either callback aborts the run.
pub fn rk4<S, F, O>(grid: &TimeGrid, y0: S, mut f: F, mut observe: O) -> Result<S>
where
    S: OdeState,
    F: FnMut(usize, &S) -> Result<S>,
    O: FnMut(usize, &S) -> Result<()>,
{
    let dt = grid.dt();
    let mut y = y0;
    observe(0, &y)?;
    for i in 0..grid.steps() {
        let j = 2 * i;
        let k1 = f(j, &y)?;
        let mut y2 = y.clone();
        y2.axpy(0.5 * dt, &k1);
        let k2 = f(j + 1, &y2)?;
        let mut y3 = y.clone();
        y3.axpy(0.5 * dt, &k2);
        let k3 = f(j + 1, &y3)?;
        let mut y4 = y.clone();
        y4.axpy(dt, &k3);
        let k4 = f(j + 2, &y4)?;
        y.axpy(dt / 6.0, &k1);
        y.axpy(dt / 3.0, &k2);
        y.axpy(dt / 3.0, &k3);
        y.axpy(dt / 6.0, &k4);
        observe(i + 1, &y)?;
    }
    Ok(y)
}

/// Richardson error estimate of the fine RK4 result from a step-halving pair.
pub fn richardson_error(coarse: f64, fine: f64) -> f64 {
    (fine - coarse).abs() / 15.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(dt: f64) -> f64 {
        let grid = TimeGrid::new(2.0, dt).unwrap();
        // y' = (cos t) y, y(0) = 1, exact y = exp(sin t).
        let y = rk4(
            &grid,
            CMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
            |j, y| Ok(y * C64::from(grid.half_time(j).cos())),
            |_, _| Ok(()),
        )
        .unwrap();
        (y[(0, 0)].re - 2f64.sin().exp()).abs()
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = solve(0.1) / solve(0.05);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
        assert!(richardson_error(1.0, 1.0 + 15e-9) < 1.1e-9);
    }

    #[test]
    fn observe_sees_every_step() {
        let grid = TimeGrid::new(1.0, 0.25).unwrap();
        let mut seen = Vec::new();
        rk4(
            &grid,
            vec![CMatrix::zeros(1, 1)],
            |_, y| Ok(y.clone()),
            |i, _| {
                seen.push(i);
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }
}
