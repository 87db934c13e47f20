//! CP tensor decomposition with automatic rank estimation.
//!
//! The model minimizes `½‖X − [[A_1, …, A_N]]‖² + λ‖A_N‖_{2,0}` subject to
//! unit-length columns in `A_1 … A_{N-1}`. The number of nonzero columns of
//! `A_N` left at the solution is the rank estimate.
//!
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which is what the solvers are tuned for.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod als;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod prox;
pub mod rank_reduce;
mod scalar;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use als::{cp_als, cp_als_from, AlsOutput};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use metrics::{align_components, rel_err, rmsep, AlignmentResult, ComponentMatch};
pub use prox::{prox_group_l0, prox_unit_sphere, ProxKind};
pub use rank_reduce::{outer_solve_rr, outer_solve_rr_from, prune, SupportTracker};
pub use scalar::{dot, norm, norm_sq, Scalar};
pub use solver::{
    lambda_step, outer_solve, outer_solve_from, random_init, sub_bc_pgd, support, Extrapolation, IterRecord,
    PruneEvent, SolveTrace, SolverConfig, Status,
};
pub use synth::{synthesize, SynthSpec, Synthetic};
pub use tensor::{
    column_gradient, fold, khatri_rao, kr_complement, objective_smooth, reconstruct, unfold, DenseTensor,
    FactorMatrix, FactorSet,
};

/// Double-precision tensor.
pub type Tensor = DenseTensor<f64>;
/// Double-precision factor set.
pub type Factors = FactorSet<f64>;
/// Double-precision dense matrix.
pub type Mat = Matrix<f64>;
