//! Event-conditionally unbiased vector forecaster. Each step the caller
//! names the active external contexts (for example, the counterpart's last
//! action); the forecaster's own emission picks one cell of a fixed
//! partition of prediction space (the best-response region of an action, or
//! a bucket). An event is a (context, cell) pair, and the forecaster keeps
//! the running signed bias of every event near zero in every coordinate.
//!
//! Internally each step is a small zero-sum game: signed per-(event,
//! coordinate) experts are weighted exponentially by their accumulated
//! bias, each cell contributes its best grid value against those weights,
//! and the emission is sampled from the game's optimal mixture, so the
//! expected weighted bias increment is never positive.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::{games, PredictorError};
use crate::protocol::UtilitySpec;
use crate::types::Bucketing;

/// How the forecaster's own emissions partition prediction space.
#[derive(Debug, Clone)]
pub enum PredictionCells {
    /// One cell per action: the region of predictions whose utility-best
    /// response is that action (ties to the lowest index).
    BestResponse(UtilitySpec),
    /// One cell per bucket of the unit interval (scalar predictions only).
    Buckets(Bucketing),
}

impl PredictionCells {
    fn count(&self) -> usize {
        match self {
            PredictionCells::BestResponse(u) => u.n_actions(),
            PredictionCells::Buckets(b) => b.count(),
        }
    }
}

#[derive(Debug, Clone)]
struct Pending {
    contexts: Vec<usize>,
    cell: usize,
    prediction: Vec<f64>,
}

/// Online forecaster emitting d-dimensional predictions whose per-event,
/// per-coordinate bias stays within the contract bound.
#[derive(Debug, Clone)]
pub struct UnbiasedPredictor {
    dim: usize,
    horizon: usize,
    n_contexts: usize,
    cells: PredictionCells,
    alpha: f64,
    eta: f64,
    grid_m: usize,
    /// Signed bias per (context, cell, coordinate), time-ordered sums.
    ledger: Vec<f64>,
    /// Times each (context, cell) event has fired.
    counts: Vec<u64>,
    /// Completed predict/observe steps.
    steps: usize,
    rng: ChaCha12Rng,
    pending: Option<Pending>,
}

impl UnbiasedPredictor {
    pub fn new(
        dim: usize,
        horizon: usize,
        n_contexts: usize,
        cells: PredictionCells,
        alpha: f64,
        rng: ChaCha12Rng,
    ) -> Result<Self, PredictorError> {
        if dim == 0 {
            return Err(PredictorError::BadConfig("dimension must be positive".into()));
        }
        if dim > 10 {
            return Err(PredictorError::BadConfig(
                "dimension too large for outcome-corner enumeration".into(),
            ));
        }
        if horizon == 0 {
            return Err(PredictorError::BadConfig("horizon must be positive".into()));
        }
        if n_contexts == 0 {
            return Err(PredictorError::BadConfig(
                "event family needs at least one context".into(),
            ));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(PredictorError::BadConfig(format!(
                "failure budget {alpha} outside (0, 1)"
            )));
        }
        match &cells {
            PredictionCells::BestResponse(u) => {
                if u.dim() != dim {
                    return Err(PredictorError::BadConfig(format!(
                        "utility over {} coordinates, predictor over {dim}",
                        u.dim()
                    )));
                }
            }
            PredictionCells::Buckets(_) => {
                if dim != 1 {
                    return Err(PredictorError::BadConfig(
                        "bucket cells support scalar predictions only".into(),
                    ));
                }
            }
        }
        let n_cells = cells.count();
        let n_experts = (2 * dim * n_contexts * n_cells) as f64;
        let eta = (n_experts.ln() / horizon as f64).sqrt();
        let grid_m = grid_resolution(horizon);
        Ok(UnbiasedPredictor {
            dim,
            horizon,
            n_contexts,
            cells,
            alpha,
            eta,
            grid_m,
            ledger: vec![0.0; n_contexts * n_cells * dim],
            counts: vec![0; n_contexts * n_cells],
            steps: 0,
            rng,
            pending: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_cells(&self) -> usize {
        self.cells.count()
    }

    /// Size of the event family: one event per (context, cell) pair.
    pub fn n_events(&self) -> usize {
        self.n_contexts * self.n_cells()
    }

    /// Completed predict/observe steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn failure_budget(&self) -> f64 {
        self.alpha
    }

    /// Accumulated signed bias of one event coordinate.
    pub fn bias(&self, context: usize, cell: usize, coord: usize) -> f64 {
        self.ledger[self.index(context, cell, coord)]
    }

    /// Times the (context, cell) event has fired.
    pub fn count(&self, context: usize, cell: usize) -> u64 {
        self.counts[context * self.n_cells() + cell]
    }

    pub fn max_abs_bias(&self) -> f64 {
        self.ledger.iter().fold(0.0, |acc, b| acc.max(b.abs()))
    }

    /// Cell of the prediction emitted by the last `predict`, until the
    /// matching `observe` consumes it.
    pub fn last_cell(&self) -> Option<usize> {
        self.pending.as_ref().map(|p| p.cell)
    }

    fn index(&self, context: usize, cell: usize, coord: usize) -> usize {
        (context * self.n_cells() + cell) * self.dim + coord
    }

    /// Emits the next prediction given the active external contexts.
    pub fn predict(&mut self, active: &[usize]) -> Result<Vec<f64>, PredictorError> {
        if self.pending.is_some() {
            return Err(PredictorError::PredictWithoutObserve);
        }
        if active.is_empty() {
            return Err(PredictorError::BadConfig(
                "predict needs at least one active context".into(),
            ));
        }
        for (i, &ctx) in active.iter().enumerate() {
            if ctx >= self.n_contexts {
                return Err(PredictorError::UnknownContext(ctx));
            }
            if active[..i].contains(&ctx) {
                return Err(PredictorError::DuplicateContext(ctx));
            }
        }

        let chi = self.expert_pressure(active);
        let candidates = self.cell_candidates(&chi)?;

        // Cost matrix of the step game: candidate emissions against the
        // outcome corners of the unit box.
        let corners: Vec<Vec<f64>> = (0..1usize << self.dim)
            .map(|mask| {
                (0..self.dim)
                    .map(|j| if mask >> j & 1 == 1 { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let cost: Vec<Vec<f64>> = candidates
            .iter()
            .map(|(cell, v)| {
                corners
                    .iter()
                    .map(|y| {
                        (0..self.dim)
                            .map(|j| chi[*cell][j] * (v[j] - y[j]))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let solution = games::solve_zero_sum(&cost);

        let draw = self.rng.random::<f64>();
        let mut cumulative = 0.0;
        let mut chosen = candidates.len() - 1;
        for (i, p) in solution.row_mix.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                chosen = i;
                break;
            }
        }
        let (cell, prediction) = candidates[chosen].clone();
        self.pending = Some(Pending {
            contexts: active.to_vec(),
            cell,
            prediction: prediction.clone(),
        });
        Ok(prediction)
    }

    /// Resolves the pending prediction against the observed outcome,
    /// charging the bias of every active event.
    pub fn observe(&mut self, outcome: &[f64]) -> Result<(), PredictorError> {
        if outcome.len() != self.dim {
            return Err(PredictorError::DimMismatch {
                expected: self.dim,
                got: outcome.len(),
            });
        }
        for &y in outcome {
            if !(0.0..=1.0).contains(&y) {
                return Err(PredictorError::OutcomeOutOfRange(y));
            }
        }
        let pending = self
            .pending
            .take()
            .ok_or(PredictorError::ObserveWithoutPredict)?;
        let n_cells = self.n_cells();
        for &ctx in &pending.contexts {
            for j in 0..self.dim {
                let idx = self.index(ctx, pending.cell, j);
                self.ledger[idx] += pending.prediction[j] - outcome[j];
            }
            self.counts[ctx * n_cells + pending.cell] += 1;
        }
        self.steps += 1;
        Ok(())
    }

    /// Per-cell, per-coordinate expert pressure: the normalized difference
    /// between the weights of the over- and under-prediction experts of the
    /// active events. Weights are exp(eta * signed bias), computed with the
    /// largest exponent subtracted so they stay finite.
    fn expert_pressure(&self, active: &[usize]) -> Vec<Vec<f64>> {
        let n_cells = self.n_cells();
        let mut peak: f64 = 0.0;
        for &ctx in active {
            for cell in 0..n_cells {
                for j in 0..self.dim {
                    peak = peak.max(self.eta * self.bias(ctx, cell, j).abs());
                }
            }
        }
        let mut chi = vec![vec![0.0; self.dim]; n_cells];
        let mut total = 0.0;
        for &ctx in active {
            for (cell, chi_cell) in chi.iter_mut().enumerate() {
                for (j, slot) in chi_cell.iter_mut().enumerate() {
                    let b = self.eta * self.bias(ctx, cell, j);
                    let plus = (b - peak).exp();
                    let minus = (-b - peak).exp();
                    *slot += plus - minus;
                    total += plus + minus;
                }
            }
        }
        for chi_cell in &mut chi {
            for slot in chi_cell.iter_mut() {
                *slot /= total;
            }
        }
        chi
    }

    /// One near-optimal grid emission per non-empty cell, minimizing the
    /// pressure functional of that cell.
    fn cell_candidates(
        &self,
        chi: &[Vec<f64>],
    ) -> Result<Vec<(usize, Vec<f64>)>, PredictorError> {
        let mut candidates: Vec<(usize, Vec<f64>)> = Vec::new();
        match &self.cells {
            PredictionCells::Buckets(b) => {
                let n = b.count();
                let m = self.grid_m;
                for cell in 0..n {
                    let lo = cell as f64 / n as f64;
                    let hi = (cell + 1) as f64 / n as f64;
                    let Some((low_v, high_v)) = grid_span(lo, hi, cell + 1 == n, m) else {
                        continue;
                    };
                    for v in [low_v, high_v] {
                        if b.bucket_of(v).map(|i| i == cell + 1).unwrap_or(false)
                            && !candidates
                                .iter()
                                .any(|(c, cv)| *c == cell && cv[0] == v)
                        {
                            candidates.push((cell, vec![v]));
                        }
                    }
                }
            }
            PredictionCells::BestResponse(u) => {
                let margin = 1.0 / self.grid_m as f64;
                for a in 0..u.n_actions() {
                    // Closed region where action a best-responds, shrunk by
                    // one grid step against lower-indexed actions so the
                    // tie-break cannot flip the cell.
                    let mut halfspaces = Vec::new();
                    for other in 0..u.n_actions() {
                        if other == a {
                            continue;
                        }
                        let row: Vec<f64> = (0..self.dim)
                            .map(|j| u.payoff_row(other)[j] - u.payoff_row(a)[j])
                            .collect();
                        let bound = if other < a { -margin } else { 0.0 };
                        halfspaces.push((row, bound));
                    }
                    let Some(vertex) =
                        games::minimize_over_box_polytope(&chi[a], &halfspaces)
                    else {
                        continue;
                    };
                    let snapped = self.snap_into_cell(&vertex, a, &chi[a], u);
                    match snapped {
                        Some(v) => candidates.push((a, v)),
                        None if u.best_response(&vertex) == a => {
                            candidates.push((a, vertex));
                        }
                        None => {}
                    }
                }
            }
        }
        if candidates.is_empty() {
            return Err(PredictorError::NoFeasibleCell);
        }
        Ok(candidates)
    }

    /// Best grid point near the cell's optimal vertex that still
    /// best-responds to the cell's action; None when no rounding does.
    fn snap_into_cell(
        &self,
        vertex: &[f64],
        action: usize,
        pressure: &[f64],
        u: &UtilitySpec,
    ) -> Option<Vec<f64>> {
        let m = self.grid_m as f64;
        let floors: Vec<f64> = vertex
            .iter()
            .map(|&x| ((x * m).floor() / m).clamp(0.0, 1.0))
            .collect();
        let ceils: Vec<f64> = vertex
            .iter()
            .map(|&x| ((x * m).ceil() / m).clamp(0.0, 1.0))
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..1usize << self.dim {
            let v: Vec<f64> = (0..self.dim)
                .map(|j| if mask >> j & 1 == 1 { ceils[j] } else { floors[j] })
                .collect();
            if u.best_response(&v) != action {
                continue;
            }
            let value: f64 = (0..self.dim).map(|j| pressure[j] * v[j]).sum();
            let better = match &best {
                None => true,
                Some((bv, bvec)) => {
                    value < bv - 1e-12 || (value <= bv + 1e-12 && v < *bvec)
                }
            };
            if better {
                best = Some((value, v));
            }
        }
        best.map(|(_, v)| v)
    }
}

/// Lowest and highest grid points of {0, 1/m, ..., 1} inside [lo, hi), with
/// hi itself admitted for the closing bucket.
fn grid_span(lo: f64, hi: f64, closed_top: bool, m: usize) -> Option<(f64, f64)> {
    let mf = m as f64;
    let mut il = (lo * mf).ceil() as i64;
    while il as f64 / mf < lo {
        il += 1;
    }
    while il > 0 && (il - 1) as f64 / mf >= lo {
        il -= 1;
    }
    let mut ih = if closed_top {
        m as i64
    } else {
        let mut i = (hi * mf).floor() as i64;
        while i as f64 / mf >= hi {
            i -= 1;
        }
        while ((i + 1) as f64) / mf < hi {
            i += 1;
        }
        i
    };
    if ih > m as i64 {
        ih = m as i64;
    }
    if il < 0 || il > ih {
        return None;
    }
    Some((il as f64 / mf, ih as f64 / mf))
}

fn grid_resolution(horizon: usize) -> usize {
    let mut m = (horizon as f64).sqrt().ceil() as usize;
    while m * m < horizon {
        m += 1;
    }
    while m > 1 && (m - 1) * (m - 1) >= horizon {
        m -= 1;
    }
    m
}

/// Contract bound on the absolute per-event, per-coordinate bias after an
/// event has fired `tau` times within a horizon of `horizon` steps:
/// c * (ln(d |E| horizon) + sqrt(tau * ln(d |E| / alpha))).
pub fn unbiased_bias_bound(
    dim: usize,
    n_events: usize,
    horizon: usize,
    tau: usize,
    alpha: f64,
    c: f64,
) -> f64 {
    let de = (dim * n_events) as f64;
    c * ((de * horizon as f64).ln() + (tau as f64 * (de / alpha).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn scalar_cells(n: usize) -> PredictionCells {
        PredictionCells::Buckets(Bucketing::new(n).unwrap())
    }

    fn pick_coordinate_utility(d: usize) -> UtilitySpec {
        let names = (0..d).map(|a| format!("a{a}")).collect();
        let matrix = (0..d)
            .map(|a| (0..d).map(|j| if j == a { 1.0 } else { 0.0 }).collect())
            .collect();
        UtilitySpec::new(names, matrix).unwrap()
    }

    #[test]
    fn always_active_event_tracks_iid_mean() {
        let t_len = 10_000;
        let mut predictor =
            UnbiasedPredictor::new(1, t_len, 1, scalar_cells(1), 0.05, rng(5)).unwrap();
        let mut outcomes = rng(99);
        let mut sum_pred = 0.0;
        for step in 1..=t_len {
            let p = predictor.predict(&[0]).unwrap();
            sum_pred += p[0];
            let y = if outcomes.random::<f64>() < 0.6 { 1.0 } else { 0.0 };
            predictor.observe(&[y]).unwrap();
            let band = unbiased_bias_bound(1, 1, t_len, step, 0.05, 8.0);
            assert!(predictor.bias(0, 0, 0).abs() <= band);
        }
        let avg = sum_pred / t_len as f64;
        assert!((avg - 0.6).abs() <= 0.05, "average emission {avg}");
    }

    #[test]
    fn never_active_context_keeps_zero_ledger() {
        let mut predictor =
            UnbiasedPredictor::new(1, 100, 2, scalar_cells(2), 0.05, rng(1)).unwrap();
        let mut outcomes = rng(2);
        for _ in 0..100 {
            predictor.predict(&[0]).unwrap();
            let y = if outcomes.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            predictor.observe(&[y]).unwrap();
        }
        for cell in 0..predictor.n_cells() {
            assert_eq!(predictor.bias(1, cell, 0), 0.0);
            assert_eq!(predictor.count(1, cell), 0);
        }
    }

    #[test]
    fn exclusive_events_each_stay_within_bound() {
        let t_len = 10_000;
        let mut predictor =
            UnbiasedPredictor::new(1, t_len, 2, scalar_cells(1), 0.05, rng(11)).unwrap();
        let mut outcomes = rng(12);
        let mut sums = [0.0f64; 2];
        let mut counts = [0u64; 2];
        for step in 0..t_len {
            let ctx = step % 2;
            let p = predictor.predict(&[ctx]).unwrap();
            sums[ctx] += p[0];
            counts[ctx] += 1;
            let mean = if ctx == 0 { 0.2 } else { 0.8 };
            let y = if outcomes.random::<f64>() < mean { 1.0 } else { 0.0 };
            predictor.observe(&[y]).unwrap();
        }
        for ctx in 0..2 {
            let tau = predictor.count(ctx, 0) as usize;
            let band = unbiased_bias_bound(1, 2, t_len, tau, 0.05, 8.0);
            assert!(predictor.bias(ctx, 0, 0).abs() <= band);
            let mean = if ctx == 0 { 0.2 } else { 0.8 };
            let avg = sums[ctx] / counts[ctx] as f64;
            assert!((avg - mean).abs() <= 0.05, "context {ctx} average {avg}");
        }
    }

    #[test]
    fn ledger_replay_matches_exactly() {
        let u = pick_coordinate_utility(2);
        let cells = PredictionCells::BestResponse(u.clone());
        let mut predictor =
            UnbiasedPredictor::new(2, 400, 2, cells, 0.1, rng(21)).unwrap();
        let mut outcomes = rng(22);
        let mut log: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
        for step in 0..400 {
            let ctx = step % 2;
            let p = predictor.predict(&[ctx]).unwrap();
            let hot = if outcomes.random::<f64>() < 0.5 { 0 } else { 1 };
            let y: Vec<f64> = (0..2).map(|j| if j == hot { 1.0 } else { 0.0 }).collect();
            predictor.observe(&y).unwrap();
            log.push((ctx, p, y));
        }
        let mut replay = vec![0.0; 2 * 2 * 2];
        for (ctx, p, y) in &log {
            let cell = u.best_response(p);
            for j in 0..2 {
                replay[(ctx * 2 + cell) * 2 + j] += p[j] - y[j];
            }
        }
        for ctx in 0..2 {
            for cell in 0..2 {
                for j in 0..2 {
                    assert_eq!(
                        predictor.bias(ctx, cell, j),
                        replay[(ctx * 2 + cell) * 2 + j]
                    );
                }
            }
        }
    }

    #[test]
    fn emitted_cell_is_the_best_response_of_the_emission() {
        let u = pick_coordinate_utility(3);
        let cells = PredictionCells::BestResponse(u.clone());
        let mut predictor =
            UnbiasedPredictor::new(3, 300, 3, cells, 0.05, rng(31)).unwrap();
        let mut outcomes = rng(32);
        for step in 0..300 {
            let ctx = step % 3;
            let p = predictor.predict(&[ctx]).unwrap();
            assert_eq!(predictor.last_cell(), Some(u.best_response(&p)));
            let hot = (outcomes.random::<u32>() % 3) as usize;
            let y: Vec<f64> = (0..3).map(|j| if j == hot { 1.0 } else { 0.0 }).collect();
            predictor.observe(&y).unwrap();
        }
        let total: u64 = (0..3)
            .flat_map(|c| (0..3).map(move |cell| (c, cell)))
            .map(|(c, cell)| predictor.count(c, cell))
            .sum();
        assert_eq!(total, 300);
    }

    #[test]
    fn multiple_active_contexts_all_charged() {
        let mut predictor =
            UnbiasedPredictor::new(1, 50, 3, scalar_cells(2), 0.05, rng(41)).unwrap();
        predictor.predict(&[0, 2]).unwrap();
        predictor.observe(&[1.0]).unwrap();
        let charged: u64 = (0..3)
            .map(|c| predictor.count(c, 0) + predictor.count(c, 1))
            .sum();
        assert_eq!(charged, 2);
        assert_eq!(predictor.count(1, 0) + predictor.count(1, 1), 0);
    }

    #[test]
    fn misuse_is_rejected() {
        let mut predictor =
            UnbiasedPredictor::new(1, 10, 2, scalar_cells(1), 0.05, rng(51)).unwrap();
        assert!(matches!(
            predictor.observe(&[0.5]),
            Err(PredictorError::ObserveWithoutPredict)
        ));
        predictor.predict(&[0]).unwrap();
        assert!(matches!(
            predictor.predict(&[0]),
            Err(PredictorError::PredictWithoutObserve)
        ));
        assert!(matches!(
            predictor.observe(&[0.5, 0.5]),
            Err(PredictorError::DimMismatch { .. })
        ));
        assert!(matches!(
            predictor.observe(&[1.5]),
            Err(PredictorError::OutcomeOutOfRange(_))
        ));
        predictor.observe(&[1.0]).unwrap();
        assert!(matches!(
            predictor.predict(&[2]),
            Err(PredictorError::UnknownContext(2))
        ));
        assert!(matches!(
            predictor.predict(&[0, 0]),
            Err(PredictorError::DuplicateContext(0))
        ));
        assert!(matches!(
            predictor.predict(&[]),
            Err(PredictorError::BadConfig(_))
        ));
    }

    #[test]
    fn bad_configurations_are_rejected() {
        assert!(UnbiasedPredictor::new(0, 10, 1, scalar_cells(1), 0.05, rng(0)).is_err());
        assert!(UnbiasedPredictor::new(1, 0, 1, scalar_cells(1), 0.05, rng(0)).is_err());
        assert!(UnbiasedPredictor::new(1, 10, 0, scalar_cells(1), 0.05, rng(0)).is_err());
        assert!(UnbiasedPredictor::new(1, 10, 1, scalar_cells(1), 0.0, rng(0)).is_err());
        assert!(UnbiasedPredictor::new(2, 10, 1, scalar_cells(2), 0.05, rng(0)).is_err());
        let u = pick_coordinate_utility(3);
        assert!(UnbiasedPredictor::new(
            2,
            10,
            1,
            PredictionCells::BestResponse(u),
            0.05,
            rng(0)
        )
        .is_err());
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let u = pick_coordinate_utility(3);
        let run = || -> Vec<Vec<f64>> {
            let mut predictor = UnbiasedPredictor::new(
                3,
                200,
                2,
                PredictionCells::BestResponse(u.clone()),
                0.05,
                rng(61),
            )
            .unwrap();
            let mut outcomes = rng(62);
            (0..200)
                .map(|step| {
                    let p = predictor.predict(&[step % 2]).unwrap();
                    let hot = (outcomes.random::<u32>() % 3) as usize;
                    let y: Vec<f64> =
                        (0..3).map(|j| if j == hot { 1.0 } else { 0.0 }).collect();
                    predictor.observe(&y).unwrap();
                    p
                })
                .collect()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bias_bound_formula_evaluates_as_documented() {
        let by_hand = 8.0
            * ((3.0f64 * 9.0 * 20_000.0).ln()
                + (100.0f64 * (27.0f64 / 0.05).ln()).sqrt());
        assert!((unbiased_bias_bound(3, 9, 20_000, 100, 0.05, 8.0) - by_hand).abs() < 1e-12);
    }
}
