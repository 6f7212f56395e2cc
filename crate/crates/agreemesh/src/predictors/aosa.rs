//! Scalar online forecaster that keeps a signed look-ahead bias per grid
//! point and always predicts at a sign change. Against any outcome sequence
//! of length T with grid resolution ceil(sqrt(T)), its distance to
//! calibration stays at most 2 sqrt(T) + 1.

use super::PredictorError;

/// State of the bias-balancing forecaster on the grid {0, 1/m, ..., 1}.
///
/// `alpha[i]` is the accumulated look-ahead bias of grid point i/m: the sum
/// of (i/m - y) over the steps whose look-ahead prediction landed on i/m.
/// Since alpha[0] only ever receives non-positive terms and alpha[m] only
/// non-negative ones, an adjacent pair with alpha[i] <= 0 <= alpha[i+1]
/// exists at every step, so prediction never fails.
#[derive(Debug, Clone)]
pub struct AosaState {
    m: usize,
    alpha: Vec<f64>,
    pending: Option<(usize, usize)>,
}

impl AosaState {
    pub fn new(m: usize) -> Result<Self, PredictorError> {
        if m == 0 {
            return Err(PredictorError::BadConfig(
                "grid resolution must be at least 1".into(),
            ));
        }
        Ok(AosaState {
            m,
            alpha: vec![0.0; m + 1],
            pending: None,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn grid_value(&self, i: usize) -> f64 {
        i as f64 / self.m as f64
    }

    /// Signed look-ahead bias currently accumulated on grid point i/m.
    pub fn lookahead_bias(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    /// Emits the left endpoint of the lowest-index adjacent grid pair whose
    /// biases straddle zero and remembers the pair for the next observe.
    pub fn predict(&mut self) -> f64 {
        for i in 0..self.m {
            if self.alpha[i] <= 0.0 && self.alpha[i + 1] >= 0.0 {
                self.pending = Some((i, i + 1));
                return self.grid_value(i);
            }
        }
        unreachable!("alpha[0] <= 0 <= alpha[m] guarantees a straddling pair");
    }

    /// Resolves the pending pair: the endpoint closer to `y` (ties to the
    /// lower value) becomes the look-ahead prediction and absorbs the bias
    /// increment.
    pub fn observe(&mut self, y: f64) -> Result<(), PredictorError> {
        if !(0.0..=1.0).contains(&y) {
            return Err(PredictorError::OutcomeOutOfRange(y));
        }
        let (i, j) = self
            .pending
            .take()
            .ok_or(PredictorError::ObserveWithoutPredict)?;
        let (pi, pj) = (self.grid_value(i), self.grid_value(j));
        let chosen = if (pi - y).abs() <= (pj - y).abs() { i } else { j };
        self.alpha[chosen] += self.grid_value(chosen) - y;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::cal_dist_exact;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn fresh_state_predicts_zero() {
        for m in [1, 2, 7, 32] {
            let mut state = AosaState::new(m).unwrap();
            assert_eq!(state.predict(), 0.0);
        }
    }

    #[test]
    fn zero_resolution_rejected() {
        assert!(AosaState::new(0).is_err());
    }

    #[test]
    fn walkthrough_on_half_grid_after_ones() {
        let mut state = AosaState::new(2).unwrap();
        // Step 1: pair (0, 0.5); y = 1 pulls the look-ahead to 0.5.
        assert_eq!(state.predict(), 0.0);
        state.observe(1.0).unwrap();
        assert_eq!(state.lookahead_bias(1), -0.5);
        // Step 2: the straddling pair moved to (0.5, 1).
        assert_eq!(state.predict(), 0.5);
        state.observe(1.0).unwrap();
        assert_eq!(state.lookahead_bias(2), 0.0);
        // Step 3: biases (0, -0.5, 0) still straddle at (0.5, 1).
        assert_eq!(state.predict(), 0.5);
    }

    #[test]
    fn lookahead_tie_resolves_to_lower_endpoint() {
        let mut state = AosaState::new(2).unwrap();
        assert_eq!(state.predict(), 0.0);
        state.observe(0.25).unwrap();
        assert_eq!(state.lookahead_bias(0), -0.25);
        assert_eq!(state.lookahead_bias(1), 0.0);
    }

    #[test]
    fn upper_pair_can_accumulate_positive_bias() {
        let mut state = AosaState::new(2).unwrap();
        state.predict();
        state.observe(1.0).unwrap();
        assert_eq!(state.predict(), 0.5);
        state.observe(0.0).unwrap();
        // Pair (0.5, 1) with y = 0: the look-ahead 0.5 gains +0.5.
        assert_eq!(state.lookahead_bias(1), 0.0);
    }

    #[test]
    fn observe_without_predict_is_rejected() {
        let mut state = AosaState::new(2).unwrap();
        assert!(matches!(
            state.observe(0.5),
            Err(PredictorError::ObserveWithoutPredict)
        ));
    }

    #[test]
    fn out_of_range_outcome_is_rejected() {
        let mut state = AosaState::new(2).unwrap();
        state.predict();
        assert!(matches!(
            state.observe(1.5),
            Err(PredictorError::OutcomeOutOfRange(_))
        ));
    }

    #[test]
    fn straddling_pair_survives_adversarial_play() {
        // The adversary always reports the outcome farthest from the
        // prediction; predict() panics internally if no pair exists.
        let mut state = AosaState::new(100).unwrap();
        for _ in 0..10_000 {
            let p = state.predict();
            let y = if p < 0.5 { 1.0 } else { 0.0 };
            state.observe(y).unwrap();
            assert!(state.lookahead_bias(0) <= 0.0);
            assert!(state.lookahead_bias(100) >= 0.0);
        }
    }

    #[test]
    fn deterministic_given_identical_outcomes() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let ys: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let run = |ys: &[f64]| -> Vec<f64> {
            let mut state = AosaState::new(23).unwrap();
            ys.iter()
                .map(|&y| {
                    let p = state.predict();
                    state.observe(y).unwrap();
                    p
                })
                .collect()
        };
        assert_eq!(run(&ys), run(&ys));
    }

    #[test]
    fn calibration_distance_bound_holds_at_oracle_scale() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        for t_len in [1usize, 2, 3, 5, 8, 13, 21, 34, 55, 64] {
            let m = (t_len as f64).sqrt().ceil() as usize;
            let bound = 2.0 * (t_len as f64).sqrt() + 1.0;
            for trial in 0..4 {
                let mut state = AosaState::new(m).unwrap();
                let mut ps = Vec::new();
                let mut ys = Vec::new();
                for _ in 0..t_len {
                    let p = state.predict();
                    // Trial 3 is the adversarial far-outcome sequence.
                    let y = if trial == 3 {
                        if p < 0.5 {
                            1.0
                        } else {
                            0.0
                        }
                    } else if rng.random::<f64>() < 0.5 {
                        1.0
                    } else {
                        0.0
                    };
                    state.observe(y).unwrap();
                    ps.push(p);
                    ys.push(y);
                }
                let dist = cal_dist_exact(&ps, &ys).unwrap();
                assert!(
                    dist <= bound,
                    "T={t_len} trial={trial}: {dist} > {bound}"
                );
            }
        }
    }
}
