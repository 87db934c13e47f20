//! Double-loop block-coordinate proximal gradient solver with extrapolation.
//!
//! The outer loop sweeps the factor blocks in mode order, each block being
//! refined by a few Gauss–Seidel cycles of column-wise proximal gradient
//! steps ([`sub_bc_pgd`]). Blocks are evaluated at extrapolated points; when
//! the extrapolated sweep fails the sufficient-descent test the sweep is
//! redone from the plain iterates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::prox::{project_unit_sphere, ProxKind};
use crate::scalar::{dot, norm, Scalar};
use crate::tensor::{kr_complement_gram, kr_complement_of, reconstruct, unfold, DenseTensor, FactorSet};

/// Every tunable of the solver. Defaults are the published settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial (over-estimated) number of components `R`.
    pub rank_init: usize,
    /// Proximal regularization added to every column's Lipschitz constant.
    pub epsilon: f64,
    /// Inner cycle parameter `m`; each block runs `m + 1` cycles.
    pub inner_iters: usize,
    /// Cap on the extrapolation weight.
    pub gamma: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Geometric decay of the sparsity weight per outer iteration.
    pub kappa: f64,
    /// Stop once the relative error changes by less than this (at the λ floor).
    pub stop_tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    /// Consecutive iterations of unchanged support required before pruning.
    pub stability_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank_init: 5,
            epsilon: 1e-5,
            inner_iters: 7,
            gamma: 0.9,
            lambda_max: 1000.0,
            lambda_min: 1e-4,
            kappa: 0.97,
            stop_tol: 1e-6,
            max_outer: 2000,
            seed: 0,
            stability_window: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank_init == 0 {
            return invalid("rank_init must be positive");
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return invalid("epsilon must be positive");
        }
        if self.inner_iters == 0 {
            return invalid("inner_iters must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return invalid("gamma must lie in (0, 1)");
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return invalid("kappa must lie in (0, 1)");
        }
        if !(self.lambda_min >= 0.0 && self.lambda_min <= self.lambda_max) || !self.lambda_max.is_finite() {
            return invalid("need 0 <= lambda_min <= lambda_max < inf");
        }
        if !(self.stop_tol >= 0.0) {
            return invalid("stop_tol must be nonnegative");
        }
        if self.max_outer == 0 {
            return invalid("max_outer must be positive");
        }
        if self.stability_window == 0 {
            return invalid("stability_window must be positive");
        }
        Ok(())
    }

    /// Descent constant `τ = ε / m`.
    pub fn tau(&self) -> f64 {
        self.epsilon / self.inner_iters as f64
    }
}

/// Nesterov-style weights `w_k = min{(t_{k-1} − 1)/t_k, γ}` with
/// `t_{-1} = t_0 = 1` and `t_{k+1} = ½(1 + √(1 + 4t_k²))`.
#[derive(Debug, Clone)]
pub struct Extrapolation {
    t_prev: f64,
    t_curr: f64,
    gamma: f64,
}

impl Extrapolation {
    pub fn new(gamma: f64) -> Self {
        Self { t_prev: 1.0, t_curr: 1.0, gamma }
    }

    /// Returns `w_k` and advances the `t` sequence.
    pub fn next_weight(&mut self) -> f64 {
        let w = ((self.t_prev - 1.0) / self.t_curr).min(self.gamma);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * self.t_curr * self.t_curr).sqrt());
        self.t_prev = self.t_curr;
        self.t_curr = t_next;
        w
    }
}

/// One step of the sparsity-weight continuation: `max{λ_min, κλ}`.
pub fn lambda_step<T: Scalar>(lambda: T, cfg: &SolverConfig) -> T {
    (T::lit(cfg.kappa) * lambda).max(T::lit(cfg.lambda_min))
}

/// Inner block solver: `inner_iters + 1` Gauss–Seidel cycles of column-wise
/// proximal gradient steps on block `mode`.
///
/// `factors[mode]` is the starting value of the block; every other entry is
/// held fixed and defines `D`. Column `j` is updated as
/// `prox_{1/(ε+l_j)}(a_j − ∇_j f / (ε+l_j))` with `l_j = d_jᵀd_j`.
pub fn sub_bc_pgd<T: Scalar>(
    unfolded: &Matrix<T>,
    factors: &[&Matrix<T>],
    mode: usize,
    inner_iters: usize,
    epsilon: T,
    prox: ProxKind<T>,
) -> Result<Matrix<T>> {
    if mode >= factors.len() {
        return invalid(format!("mode {mode} out of range"));
    }
    let start = factors[mode];
    let rank = start.ncols();
    let d = kr_complement_of(factors, mode)?;
    if unfolded.nrows() != start.nrows() || unfolded.ncols() != d.nrows() {
        return crate::error::mismatch(format!(
            "block {mode}: unfolding is {}x{}, expected {}x{}",
            unfolded.nrows(),
            unfolded.ncols(),
            start.nrows(),
            d.nrows()
        ));
    }
    let gram = kr_complement_gram(factors, mode)?;
    let mttkrp = unfolded.matmul(&d)?;
    let steps: Vec<T> = (0..rank).map(|j| (epsilon + gram[(j, j)]).recip()).collect();

    let mut a = start.clone();
    let n = a.nrows();
    let mut candidate = vec![T::zero(); n];
    for _cycle in 0..=inner_iters {
        for j in 0..rank {
            // candidate = a_j − step · (A G[:, j] − M[:, j])
            let step = steps[j];
            for (c, &m) in candidate.iter_mut().zip(mttkrp.col(j)) {
                *c = -m;
            }
            for (r, &g) in gram.col(j).iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                for (c, &x) in candidate.iter_mut().zip(a.col(r)) {
                    *c += x * g;
                }
            }
            for (c, &x) in candidate.iter_mut().zip(a.col(j)) {
                *c = x - step * *c;
            }
            prox.apply(&mut candidate, step);
            a.col_mut(j).copy_from_slice(&candidate);
        }
    }
    Ok(a)
}

/// Outcome of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIters,
}

/// What happened in one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    /// Objective `F(X^{k+1})` at this iteration's λ.
    pub objective: f64,
    /// `F(X^k)` re-evaluated at this iteration's λ.
    pub prev_objective: f64,
    pub rel_err: f64,
    /// Active sparsity weight; 0 once the regularizer has been dropped.
    pub lambda: f64,
    pub weight: f64,
    pub support_size: usize,
    /// Indices of the nonzero columns of the last factor.
    pub support: Vec<usize>,
    pub rank: usize,
    pub safeguard_used: bool,
    /// `‖X^{k+1} − X^k‖²`.
    pub step_sq: f64,
    /// Largest `|‖a‖ − 1|` over the columns of the constrained factors.
    pub feasibility_gap: f64,
}

/// Records the rank-reduction prune, if one happened.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneEvent {
    /// Outer iteration after which the prune was applied.
    pub k: usize,
    pub kept: Vec<usize>,
    pub rel_err_before: f64,
    pub rel_err_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    pub status: Status,
    pub prune: Option<PruneEvent>,
}

impl SolveTrace {
    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    /// Final relative error, or `None` when no iteration ran.
    pub fn final_rel_err(&self) -> Option<f64> {
        self.last().map(|r| r.rel_err)
    }

    /// Iterations violating `F_{k+1} + (τ/2)‖ΔX‖² ≤ F_k + slack·|F_k|`.
    pub fn descent_violations(&self, tau: f64, slack: f64) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.objective + 0.5 * tau * r.step_sq > r.prev_objective + slack * r.prev_objective.abs())
            .map(|r| r.k)
            .collect()
    }
}

/// Random starting point: standard normal entries, with the columns of the
/// constrained factors projected onto the unit sphere.
pub fn random_init<T: Scalar>(shape: &[usize], rank: usize, seed: u64) -> Result<FactorSet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = shape.len().saturating_sub(1);
    let factors = shape
        .iter()
        .enumerate()
        .map(|(mode, &n)| {
            let mut m = Matrix::from_fn(n, rank, |_, _| {
                let x: f64 = StandardNormal.sample(&mut rng);
                T::lit(x)
            });
            if mode < last {
                for j in 0..rank {
                    project_unit_sphere(m.col_mut(j));
                }
            }
            m
        })
        .collect();
    FactorSet::new(factors)
}

/// Indices of the nonzero columns of `m` (exact zero test).
pub fn support<T: Scalar>(m: &Matrix<T>) -> Vec<usize> {
    m.columns()
        .enumerate()
        .filter(|(_, c)| c.iter().any(|&x| x != T::zero()))
        .map(|(j, _)| j)
        .collect()
}

/// Mutable state of the outer loop, shared by the plain and rank-reducing drivers.
pub(crate) struct Engine<'a, T: Scalar> {
    cfg: &'a SolverConfig,
    tensor: &'a DenseTensor<T>,
    unfolded: Vec<Matrix<T>>,
    norm_x: T,
    pub(crate) x: Vec<Matrix<T>>,
    pub(crate) bar: Vec<Matrix<T>>,
    extrapolation: Extrapolation,
    pub(crate) lambda: T,
    /// Whether the last factor still carries the ℓ2,0 penalty.
    pub(crate) regularized: bool,
    /// Smooth objective at the current iterate.
    pub(crate) smooth: T,
    pub(crate) rel_err: T,
    pub(crate) k: usize,
    pub(crate) records: Vec<IterRecord>,
}

impl<'a, T: Scalar> Engine<'a, T> {
    pub(crate) fn new(tensor: &'a DenseTensor<T>, cfg: &'a SolverConfig, init: FactorSet<T>) -> Result<Self> {
        cfg.validate()?;
        init.check_shape(tensor.shape())?;
        let unfolded = (0..tensor.order()).map(|i| unfold(tensor, i)).collect::<Result<Vec<_>>>()?;
        let norm_x = tensor.norm();
        let x = init.into_factors();
        let mut engine = Self {
            cfg,
            tensor,
            unfolded,
            norm_x,
            bar: x.clone(),
            x,
            extrapolation: Extrapolation::new(cfg.gamma),
            lambda: T::lit(cfg.lambda_max),
            regularized: true,
            smooth: T::zero(),
            rel_err: T::zero(),
            k: 0,
            records: Vec::new(),
        };
        engine.smooth = engine.smooth_objective(&engine.x)?;
        engine.rel_err = engine.error_metric(engine.smooth);
        Ok(engine)
    }

    fn last_mode(&self) -> usize {
        self.x.len() - 1
    }

    fn smooth_objective(&self, factors: &[Matrix<T>]) -> Result<T> {
        let fs = FactorSet::new(factors.to_vec())?;
        let recon = reconstruct(&fs)?;
        Ok(T::lit(0.5) * self.tensor.dist_sq(&recon)?)
    }

    /// Relative error from the smooth objective; absolute for a zero tensor.
    fn error_metric(&self, smooth: T) -> T {
        let abs = (T::lit(2.0) * smooth).sqrt();
        if self.norm_x > T::zero() {
            abs / self.norm_x
        } else {
            abs
        }
    }

    fn penalty(&self, factors: &[Matrix<T>]) -> T {
        if self.regularized {
            self.lambda * T::from_usize(support(&factors[self.last_mode()]).len()).unwrap()
        } else {
            T::zero()
        }
    }

    fn prox_for(&self, mode: usize) -> ProxKind<T> {
        if mode < self.last_mode() {
            ProxKind::UnitSphere
        } else if self.regularized {
            ProxKind::GroupL0 { lambda: self.lambda }
        } else {
            ProxKind::None
        }
    }

    fn block_update(&self, mode: usize, fixed: &[&Matrix<T>]) -> Result<Matrix<T>> {
        sub_bc_pgd(
            &self.unfolded[mode],
            fixed,
            mode,
            self.cfg.inner_iters,
            T::lit(self.cfg.epsilon),
            self.prox_for(mode),
        )
    }

    /// One outer iteration. Returns the record that was appended.
    pub(crate) fn step(&mut self) -> Result<&IterRecord> {
        if self.regularized {
            self.lambda = lambda_step(self.lambda, self.cfg);
        }
        let w = self.extrapolation.next_weight();
        let wt = T::lit(w);
        let n_modes = self.x.len();

        // Extrapolated sweep: blocks < i at X̃^{k+1}, blocks > i at X̄^k.
        let mut next: Vec<Matrix<T>> = Vec::with_capacity(n_modes);
        let mut tilde: Vec<Matrix<T>> = Vec::with_capacity(n_modes);
        for i in 0..n_modes {
            let fixed: Vec<&Matrix<T>> = (0..n_modes)
                .map(|p| match p.cmp(&i) {
                    std::cmp::Ordering::Less => &tilde[p],
                    std::cmp::Ordering::Equal => &self.x[i],
                    std::cmp::Ordering::Greater => &self.bar[p],
                })
                .collect();
            let xi = self.block_update(i, &fixed)?;
            tilde.push(xi.extrapolate(&self.bar[i], wt));
            next.push(xi);
        }

        let prev_objective = self.smooth + self.penalty(&self.x);
        let tau = T::lit(self.cfg.tau());
        let mut smooth = self.smooth_objective(&next)?;
        let mut step_sq = dist_sq(&next, &self.x);
        let objective = smooth + self.penalty(&next);
        let safeguard = objective > prev_objective - T::lit(0.5) * tau * step_sq;

        if safeguard {
            // Redo from the plain iterates: blocks < i at X^{k+1}, blocks > i at X^k.
            let mut redo: Vec<Matrix<T>> = Vec::with_capacity(n_modes);
            for i in 0..n_modes {
                let fixed: Vec<&Matrix<T>> =
                    (0..n_modes).map(|p| if p < i { &redo[p] } else { &self.x[p] }).collect();
                let xi = self.block_update(i, &fixed)?;
                redo.push(xi);
            }
            for (b, xi) in self.bar.iter_mut().zip(&redo) {
                *b = xi.extrapolate(b, wt);
            }
            next = redo;
            smooth = self.smooth_objective(&next)?;
            step_sq = dist_sq(&next, &self.x);
        } else {
            self.bar = tilde;
        }

        let objective = smooth + self.penalty(&next);
        self.x = next;
        self.smooth = smooth;
        self.rel_err = self.error_metric(smooth);
        let last = self.last_mode();
        let feasibility_gap = self.x[..last]
            .iter()
            .flat_map(|m| m.columns().map(|c| (norm(c).as_f64() - 1.0).abs()))
            .fold(0.0, f64::max);
        let active = support(&self.x[last]);
        self.records.push(IterRecord {
            k: self.k,
            objective: objective.as_f64(),
            prev_objective: prev_objective.as_f64(),
            rel_err: self.rel_err.as_f64(),
            lambda: if self.regularized { self.lambda.as_f64() } else { 0.0 },
            weight: w,
            support_size: active.len(),
            support: active,
            rank: self.x[last].ncols(),
            safeguard_used: safeguard,
            step_sq: step_sq.as_f64(),
            feasibility_gap,
        });
        self.k += 1;
        Ok(self.records.last().expect("just pushed"))
    }

    /// Whether the stopping rule fires after the latest iteration.
    pub(crate) fn converged(&self) -> bool {
        let n = self.records.len();
        if n < 2 {
            return false;
        }
        let at_floor = !self.regularized || self.lambda <= T::lit(self.cfg.lambda_min);
        at_floor && (self.records[n - 2].rel_err - self.records[n - 1].rel_err).abs() < self.cfg.stop_tol
    }

    /// Whether some zero column of the last factor would pass the hard
    /// threshold at weight `lambda` if it were updated now. Zero columns keep
    /// their other-mode directions frozen, so once the fit has settled this
    /// predicts whether the support can still grow as λ decays.
    pub(crate) fn zero_column_can_enter(&self, lambda: T) -> Result<bool> {
        let last = self.last_mode();
        let a = &self.x[last];
        let zero_cols: Vec<usize> = (0..a.ncols()).filter(|j| a.col(*j).iter().all(|&x| x == T::zero())).collect();
        if zero_cols.is_empty() {
            return Ok(false);
        }
        let refs: Vec<&Matrix<T>> = self.x.iter().collect();
        let d = kr_complement_of(&refs, last)?;
        let gram = kr_complement_gram(&refs, last)?;
        let eps = T::lit(self.cfg.epsilon);
        let mut candidate = vec![T::zero(); a.nrows()];
        for j in zero_cols {
            // candidate = step · (X_(N) d_j − A G[:, j]) since a_j = 0
            let dj = d.col(j);
            for (i, c) in candidate.iter_mut().enumerate() {
                *c = T::zero();
                let row = &self.unfolded[last];
                for (col, &w) in dj.iter().enumerate() {
                    *c += row[(i, col)] * w;
                }
            }
            for (r, &g) in gram.col(j).iter().enumerate() {
                for (c, &x) in candidate.iter_mut().zip(a.col(r)) {
                    *c -= x * g;
                }
            }
            let step = (eps + gram[(j, j)]).recip();
            let cand_sq = step * step * crate::scalar::norm_sq(&candidate);
            if cand_sq >= T::lit(2.0) * lambda * step {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub(crate) fn support(&self) -> Vec<usize> {
        support(&self.x[self.last_mode()])
    }

    /// Drops every column outside `keep` from the iterates and anchors and
    /// switches the last factor to an unregularized update.
    pub(crate) fn prune(&mut self, keep: &[usize]) -> Result<()> {
        for m in self.x.iter_mut().chain(self.bar.iter_mut()) {
            *m = m.select_columns(keep)?;
        }
        self.regularized = false;
        self.smooth = self.smooth_objective(&self.x)?;
        self.rel_err = self.error_metric(self.smooth);
        Ok(())
    }

    pub(crate) fn finish(self, status: Status, prune: Option<PruneEvent>) -> Result<(FactorSet<T>, SolveTrace)> {
        Ok((FactorSet::new(self.x)?, SolveTrace { records: self.records, status, prune }))
    }
}

fn dist_sq<T: Scalar>(a: &[Matrix<T>], b: &[Matrix<T>]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.dist_sq(y))
}

/// Runs the extrapolated double-loop solver from a seeded random start.
pub fn outer_solve<T: Scalar>(t: &DenseTensor<T>, cfg: &SolverConfig) -> Result<(FactorSet<T>, SolveTrace)> {
    cfg.validate()?;
    let init = random_init(t.shape(), cfg.rank_init, cfg.seed)?;
    outer_solve_from(t, cfg, init)
}

/// Same as [`outer_solve`] from a caller-supplied starting point.
pub fn outer_solve_from<T: Scalar>(
    t: &DenseTensor<T>,
    cfg: &SolverConfig,
    init: FactorSet<T>,
) -> Result<(FactorSet<T>, SolveTrace)> {
    let mut engine = Engine::new(t, cfg, init)?;
    for _ in 0..cfg.max_outer {
        engine.step()?;
        if engine.converged() {
            return engine.finish(Status::Converged, None);
        }
    }
    engine.finish(Status::MaxIters, None)
}

/// Cosine between two vectors; zero when either vanishes.
pub(crate) fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let na = norm(a);
    let nb = norm(b);
    if na == T::zero() || nb == T::zero() {
        T::zero()
    } else {
        dot(a, b) / (na * nb)
    }
}
