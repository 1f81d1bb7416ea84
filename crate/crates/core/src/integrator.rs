//! Fixed-step classical Runge-Kutta integration on a uniform grid.
//!
//! Right-hand sides receive the index of the grid interval being traversed so
//! that piecewise-constant inputs (controls) are held at the left node value
//! for every stage of the step.

use crate::error::{Error, Result};

/// Uniform grid `t0, t0 + h, ..., t_end` with `n_steps` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::Scenario(format!(
                "time grid needs t_end > t0, got [{t0}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Scenario("time grid needs at least one step".into()));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    /// Grid on `[0, horizon]` whose step is the largest value not exceeding `dt`
    /// that divides the horizon evenly.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Scenario(format!("step must be positive, got {dt}")));
        }
        let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(0.0, horizon, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_end
        } else {
            self.t0 + i as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|i| self.time(i))
    }

    /// Same interval, twice as many steps.
    pub fn refined(&self) -> Self {
        TimeGrid {
            n_steps: self.n_steps * 2,
            ..*self
        }
    }
}

/// Values at every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub grid: TimeGrid,
    pub values: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    pub fn first(&self) -> &[f64; N] {
        &self.values[0]
    }

    pub fn last(&self) -> &[f64; N] {
        self.values.last().expect("trajectory has at least one node")
    }

    pub fn component(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |v| v[i])
    }
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| x[i] + a * k[i])
}

#[inline]
fn all_finite<const N: usize>(x: &[f64; N]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Integrates `x' = rhs(step, t, x)` forward with classical RK4.
///
/// `rhs` receives the interval index `i` for the step from node `i` to `i + 1`.
pub fn integrate_forward<const N: usize, F>(
    mut rhs: F,
    x0: [f64; N],
    grid: &TimeGrid,
) -> Result<Trajectory<N>>
where
    F: FnMut(usize, f64, &[f64; N]) -> Result<[f64; N]>,
{
    if !all_finite(&x0) {
        return Err(Error::NonFinite { t: grid.t0() });
    }
    let h = grid.step();
    let mut values = Vec::with_capacity(grid.n_nodes());
    values.push(x0);
    let mut x = x0;
    for i in 0..grid.n_steps() {
        let t = grid.time(i);
        let k1 = rhs(i, t, &x)?;
        let k2 = rhs(i, t + 0.5 * h, &axpy(&x, 0.5 * h, &k1))?;
        let k3 = rhs(i, t + 0.5 * h, &axpy(&x, 0.5 * h, &k2))?;
        let k4 = rhs(i, t + h, &axpy(&x, h, &k3))?;
        x = std::array::from_fn(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
        if !all_finite(&x) {
            return Err(Error::NonFinite { t: grid.time(i + 1) });
        }
        values.push(x);
    }
    Ok(Trajectory {
        grid: *grid,
        values,
    })
}

/// Integrates a costate system `λ' = rhs(step, t, λ, x(t))` backward from
/// `lambda_end` at the final node.
///
/// State values at RK4 half steps are linear interpolations of the stored nodes.
/// The returned trajectory is indexed forward in time, sharing the state grid.
pub fn integrate_backward<const N: usize, const M: usize, F>(
    mut rhs: F,
    lambda_end: [f64; N],
    state: &Trajectory<M>,
    grid: &TimeGrid,
) -> Result<Trajectory<N>>
where
    F: FnMut(usize, f64, &[f64; N], &[f64; M]) -> Result<[f64; N]>,
{
    if state.grid != *grid || state.values.len() != grid.n_nodes() {
        return Err(Error::GridMismatch(
            "state trajectory is not defined on the adjoint grid".into(),
        ));
    }
    if !all_finite(&lambda_end) {
        return Err(Error::NonFinite { t: grid.t_end() });
    }
    let h = grid.step();
    let mut values = vec![[0.0; N]; grid.n_nodes()];
    values[grid.n_steps()] = lambda_end;
    let mut lam = lambda_end;
    for i in (0..grid.n_steps()).rev() {
        let t_right = grid.time(i + 1);
        let x_right = &state.values[i + 1];
        let x_left = &state.values[i];
        let x_mid: [f64; M] = std::array::from_fn(|j| 0.5 * (x_left[j] + x_right[j]));
        // Reversed time: dλ/ds = -rhs with s = t_end - t.
        let k1 = rhs(i, t_right, &lam, x_right)?;
        let k2 = rhs(i, t_right - 0.5 * h, &axpy(&lam, -0.5 * h, &k1), &x_mid)?;
        let k3 = rhs(i, t_right - 0.5 * h, &axpy(&lam, -0.5 * h, &k2), &x_mid)?;
        let k4 = rhs(i, grid.time(i), &axpy(&lam, -h, &k3), x_left)?;
        lam = std::array::from_fn(|j| {
            lam[j] - h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        });
        if !all_finite(&lam) {
            return Err(Error::NonFinite { t: grid.time(i) });
        }
        values[i] = lam;
    }
    Ok(Trajectory {
        grid: *grid,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction() {
        assert!(TimeGrid::new(0.0, 0.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        let g = TimeGrid::with_step(50.0, 1.0 / 120.0).unwrap();
        assert_eq!(g.n_steps(), 6000);
        assert_eq!(g.time(g.n_steps()), 50.0);
        let g = TimeGrid::with_step(1.0, 0.3).unwrap();
        assert_eq!(g.n_steps(), 4);
    }

    #[test]
    fn exponential_decay_forward() {
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let traj = integrate_forward(|_, _, x: &[f64; 1]| Ok([-x[0]]), [1.0], &grid).unwrap();
        assert_eq!(traj.values.len(), 101);
        assert_eq!(traj.first(), &[1.0]);
        assert!((traj.last()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn exponential_backward() {
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let state = Trajectory::<1> {
            grid,
            values: vec![[0.0]; 101],
        };
        let lam = integrate_backward(|_, _, l: &[f64; 1], _| Ok([-l[0]]), [1.0], &state, &grid)
            .unwrap();
        assert_eq!(lam.last(), &[1.0]);
        assert!((lam.first()[0] - std::f64::consts::E).abs() < 1e-7);

        let zero = integrate_backward(|_, _, _: &[f64; 2], _| Ok([0.0; 2]), [0.0; 2], &state, &grid)
            .unwrap();
        assert!(zero.values.iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn backward_uses_interpolated_state() {
        // λ' = -x(t) with x(t) = t exactly linear, so interpolation is exact.
        let grid = TimeGrid::new(0.0, 2.0, 8).unwrap();
        let state = Trajectory::<1> {
            grid,
            values: grid.times().map(|t| [t]).collect(),
        };
        let lam =
            integrate_backward(|_, _, _: &[f64; 1], x: &[f64; 1]| Ok([-x[0]]), [0.0], &state, &grid)
                .unwrap();
        // λ(t) = (T² - t²)/2
        assert!((lam.first()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_state_reports_time() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let err = integrate_forward(|_, _, x: &[f64; 1]| Ok([x[0] * 1e300]), [1e10], &grid)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { t } if t > 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_grid() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let other = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let state = Trajectory::<1> {
            grid: other,
            values: vec![[0.0]; 21],
        };
        assert!(matches!(
            integrate_backward(|_, _, l: &[f64; 1], _| Ok(*l), [0.0], &state, &grid),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn step_index_is_constant_within_a_step() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let mut seen = Vec::new();
        integrate_forward(
            |i, _, _: &[f64; 1]| {
                seen.push(i);
                Ok([1.0])
            },
            [0.0],
            &grid,
        )
        .unwrap();
        assert_eq!(seen, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
    }
}
