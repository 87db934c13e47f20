//! Rank reduction: once the support of the last factor has been stable for
//! a window of iterations, drop the zero components from every factor and
//! continue with an unregularized last factor.

use crate::error::{invalid, Error, Result};
use crate::solver::{random_init, Engine, PruneEvent, SolveTrace, SolverConfig, Status};
use crate::tensor::{DenseTensor, FactorSet};
use crate::Scalar;

pub use crate::solver::support;

/// Counts consecutive iterations whose support equals the previous one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportTracker {
    last_support: Option<Vec<usize>>,
    stable_count: usize,
    window: usize,
}

impl SupportTracker {
    pub fn new(window: usize) -> Self {
        Self { last_support: None, stable_count: 0, window }
    }

    /// Feeds the support after an iteration; returns the updated count.
    pub fn observe(&mut self, support: &[usize]) -> usize {
        match &self.last_support {
            Some(prev) if prev.as_slice() == support => {
                self.stable_count = (self.stable_count + 1).min(self.window);
            }
            _ => self.stable_count = 0,
        }
        self.last_support = Some(support.to_vec());
        self.stable_count
    }

    /// Forgets the history, e.g. while the support is not yet eligible.
    pub fn reset(&mut self) {
        self.last_support = None;
        self.stable_count = 0;
    }

    pub fn stable_count(&self) -> usize {
        self.stable_count
    }

    pub fn is_stable(&self) -> bool {
        self.stable_count >= self.window
    }

    pub fn last_support(&self) -> Option<&[usize]> {
        self.last_support.as_deref()
    }
}

/// Keeps only the columns in `keep` (order preserved) in every factor.
pub fn prune<T: Scalar>(fs: &FactorSet<T>, keep: &[usize]) -> Result<FactorSet<T>> {
    if keep.is_empty() {
        return Err(Error::RankCollapsed);
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("kept columns must be strictly increasing");
    }
    let factors = fs.factors().iter().map(|f| f.select_columns(keep)).collect::<Result<Vec<_>>>()?;
    FactorSet::new(factors)
}

/// Rank-reducing variant of [`crate::solver::outer_solve`].
pub fn outer_solve_rr<T: Scalar>(t: &DenseTensor<T>, cfg: &SolverConfig) -> Result<(FactorSet<T>, SolveTrace)> {
    cfg.validate()?;
    let init = random_init(t.shape(), cfg.rank_init, cfg.seed)?;
    outer_solve_rr_from(t, cfg, init)
}

pub fn outer_solve_rr_from<T: Scalar>(
    t: &DenseTensor<T>,
    cfg: &SolverConfig,
    init: FactorSet<T>,
) -> Result<(FactorSet<T>, SolveTrace)> {
    let mut engine = Engine::new(t, cfg, init)?;
    let mut tracker = SupportTracker::new(cfg.stability_window);
    let mut prune_event = None;
    // seed the tracker with the starting support
    tracker.observe(&engine.support());

    for _ in 0..cfg.max_outer {
        engine.step()?;
        if engine.regularized {
            let supp = engine.support();
            tracker.observe(&supp);
            if tracker.is_stable() && !engine.zero_column_can_enter(T::lit(cfg.lambda_min))? {
                let before = engine.rel_err.as_f64();
                engine.prune(&supp)?;
                prune_event = Some(PruneEvent {
                    k: engine.k - 1,
                    kept: supp,
                    rel_err_before: before,
                    rel_err_after: engine.rel_err.as_f64(),
                });
            }
        }
        if engine.converged() {
            return engine.finish(Status::Converged, prune_event);
        }
    }
    engine.finish(Status::MaxIters, prune_event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn tracker_counts_and_resets() {
        let mut tr = SupportTracker::new(3);
        assert_eq!(tr.observe(&[0, 1]), 0);
        assert_eq!(tr.observe(&[0, 1]), 1);
        assert_eq!(tr.observe(&[0, 1]), 2);
        assert_eq!(tr.observe(&[0, 1]), 3);
        assert!(tr.is_stable());
        assert_eq!(tr.observe(&[0, 1]), 3, "capped at the window");
        // same size, different set
        assert_eq!(tr.observe(&[0, 2]), 0);
        assert!(!tr.is_stable());
    }

    #[test]
    fn prune_shapes_and_errors() {
        let fs = FactorSet::new(vec![
            Matrix::from_fn(2, 5, |i, j| (i + j) as f64),
            Matrix::from_fn(3, 5, |i, j| (i * j) as f64 + 1.0),
            Matrix::from_fn(4, 5, |i, j| (i + 2 * j) as f64),
        ])
        .unwrap();
        let p = prune(&fs, &[0, 2, 4]).unwrap();
        assert!(p.factors().iter().all(|f| f.ncols() == 3));
        assert_eq!(prune(&fs, &[0, 1, 2, 3, 4]).unwrap(), fs);
        assert!(matches!(prune(&fs, &[]), Err(Error::RankCollapsed)));
        assert!(prune(&fs, &[2, 1]).is_err());
        assert!(prune(&fs, &[7]).is_err());
    }
}
