//! Classical CP alternating least squares, used as the comparison baseline.

use crate::error::{invalid, Result};
use crate::linalg::pinv_symmetric;
use crate::scalar::Scalar;
use crate::solver::random_init;
use crate::tensor::{kr_complement, kr_complement_gram, unfold, DenseTensor, FactorSet};

/// Relative eigenvalue cutoff of the Gram pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AlsOutput<T> {
    pub factors: FactorSet<T>,
    /// Relative error after every sweep.
    pub rel_errs: Vec<f64>,
    pub converged: bool,
}

/// CP-ALS from a seeded standard-normal start.
pub fn cp_als<T: Scalar>(t: &DenseTensor<T>, rank: usize, max_iters: usize, tol: f64, seed: u64) -> Result<AlsOutput<T>> {
    if rank == 0 {
        return invalid("rank must be positive");
    }
    let init = random_init(t.shape(), rank, seed)?;
    cp_als_from(t, init, max_iters, tol)
}

/// CP-ALS from `init`: each sweep sets `A_i ← X_(i) D (DᵀD)⁺` for every mode.
/// Stops when the relative error changes by less than `tol` or after
/// `max_iters` sweeps. Factors are left unnormalized.
pub fn cp_als_from<T: Scalar>(t: &DenseTensor<T>, init: FactorSet<T>, max_iters: usize, tol: f64) -> Result<AlsOutput<T>> {
    init.check_shape(t.shape())?;
    if init.rank() == 0 {
        return invalid("rank must be positive");
    }
    let unfolded = (0..t.order()).map(|i| unfold(t, i)).collect::<Result<Vec<_>>>()?;
    let norm_x = t.norm().as_f64();
    let mut fs = init;
    let mut rel_errs = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    for _ in 0..max_iters {
        for mode in 0..t.order() {
            let d = kr_complement(&fs, mode)?;
            let refs: Vec<_> = fs.factors().iter().collect();
            let gram = kr_complement_gram(&refs, mode)?;
            let mttkrp = unfolded[mode].matmul(&d)?;
            let updated = mttkrp.matmul(&pinv_symmetric(&gram, T::lit(PINV_CUTOFF))?)?;
            *fs.factor_mut(mode) = updated;
        }
        let resid = t.dist_sq(&crate::tensor::reconstruct(&fs)?)?.as_f64().sqrt();
        let err = if norm_x > 0.0 { resid / norm_x } else { resid };
        rel_errs.push(err);
        if (prev - err).abs() < tol {
            converged = true;
            break;
        }
        prev = err;
    }
    Ok(AlsOutput { factors: fs, rel_errs, converged })
}
