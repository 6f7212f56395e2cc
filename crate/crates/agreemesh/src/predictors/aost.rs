//! Doubling-trick wrapper that lifts the fixed-horizon forecaster to an
//! unknown horizon: steps 1-2 run a fresh inner instance sized for horizon
//! 2, steps 3-4 for horizon 4, steps 5-8 for horizon 8, and so on.

use super::{AosaState, PredictorError};

/// Unknown-horizon forecaster. Each epoch with provisional horizon `T̄`
/// covers global steps T̄/2+1 ..= T̄ and runs a fresh [`AosaState`] with grid
/// resolution ceil(sqrt(T̄)).
#[derive(Debug, Clone)]
pub struct AostState {
    epoch_horizon: u64,
    completed: u64,
    inner: AosaState,
}

impl Default for AostState {
    fn default() -> Self {
        Self::new()
    }
}

impl AostState {
    pub fn new() -> Self {
        AostState {
            epoch_horizon: 2,
            completed: 0,
            inner: AosaState::new(grid_resolution(2)).expect("fixed resolution"),
        }
    }

    /// Provisional horizon of the epoch serving the next step.
    pub fn epoch_horizon(&self) -> u64 {
        epoch_of_step(self.completed + 1)
    }

    /// Grid resolution of the inner forecaster currently in use.
    pub fn grid_resolution(&self) -> usize {
        self.inner.m()
    }

    pub fn predict(&mut self) -> f64 {
        let horizon = epoch_of_step(self.completed + 1);
        if horizon != self.epoch_horizon {
            self.inner =
                AosaState::new(grid_resolution(horizon)).expect("positive resolution");
            self.epoch_horizon = horizon;
        }
        self.inner.predict()
    }

    pub fn observe(&mut self, y: f64) -> Result<(), PredictorError> {
        self.inner.observe(y)?;
        self.completed += 1;
        Ok(())
    }
}

/// Provisional horizon of the epoch containing 1-based global step `step`:
/// the smallest power of two that is at least `step`, floored at 2.
fn epoch_of_step(step: u64) -> u64 {
    step.next_power_of_two().max(2)
}

fn grid_resolution(horizon: u64) -> usize {
    let mut m = (horizon as f64).sqrt().ceil() as usize;
    while (m as u64) * (m as u64) < horizon {
        m += 1;
    }
    while m > 1 && ((m - 1) as u64) * ((m - 1) as u64) >= horizon {
        m -= 1;
    }
    m
}

/// Worst-case distance-to-calibration bound of the doubling forecaster
/// after `t` steps: the per-epoch guarantees of the inner forecaster summed
/// in closed form, log2(2T) + 2 sqrt(T) + 2 (sqrt(2T) - 1) / (sqrt(2) - 1).
pub fn aost_cal_dist_bound(t: usize) -> f64 {
    let tf = t as f64;
    (2.0 * tf).log2()
        + 2.0 * tf.sqrt()
        + 2.0 * ((2.0 * tf).sqrt() - 1.0) / (std::f64::consts::SQRT_2 - 1.0)
}
