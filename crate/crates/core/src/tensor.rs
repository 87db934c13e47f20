//! Dense N-way tensors, CP factor sets and the multilinear kernels the
//! solvers are built on.
//!
//! Storage is first-index-fastest. The mode-`i` unfolding places entry
//! `(i_0, …, i_{N-1})` at row `i_mode` and column `Σ_{p≠mode} i_p J_p` with
//! `J_p = ∏_{q<p, q≠mode} n_q`, which is exactly the row order of the
//! Khatri–Rao product `A_{N-1} ⊙ … ⊙ A_{mode+1} ⊙ A_{mode-1} ⊙ … ⊙ A_0`
//! returned by [`kr_complement`]. Modes are 0-based throughout the API.

use crate::error::{invalid, mismatch, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// A single CP factor `A^(i)`; column `r` is the mode-`i` vector of the
/// `r`-th rank-one term.
pub type FactorMatrix<T> = Matrix<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    /// Wraps `data` (first index fastest). Requires at least three modes,
    /// positive dimensions and a matching payload length.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.len() < 3 {
            return invalid(format!("a tensor needs at least 3 modes, got {}", shape.len()));
        }
        if shape.contains(&0) {
            return invalid("tensor dimensions must be positive");
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return mismatch(format!("shape {shape:?} needs {len} values, got {}", data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![T::zero(); len])
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            advance(&mut idx, &shape);
        }
        Self::new(shape, data)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.linear_index(index)]
    }

    pub fn linear_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut lin = 0;
        let mut stride = 1;
        for (&i, &n) in index.iter().zip(&self.shape) {
            debug_assert!(i < n);
            lin += i * stride;
            stride *= n;
        }
        lin
    }

    pub fn norm_sq(&self) -> T {
        crate::scalar::norm_sq(&self.data)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// `‖self − other‖²`.
    pub fn dist_sq(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return mismatch(format!("{:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b)))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return invalid(format!("mode {mode} out of range for an order-{} tensor", self.order()));
        }
        Ok(())
    }
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}

/// Splits the shape around `mode` into (∏ dims before, n_mode, ∏ dims after).
fn mode_split(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = shape[..mode].iter().product();
    let right = shape[mode + 1..].iter().product();
    (left, shape[mode], right)
}

/// Mode-`mode` unfolding `X_(mode)`, an `n_mode × ∏_{p≠mode} n_p` matrix.
pub fn unfold<T: Scalar>(t: &DenseTensor<T>, mode: usize) -> Result<Matrix<T>> {
    t.check_mode(mode)?;
    let (left, n, right) = mode_split(&t.shape, mode);
    let mut out = Matrix::zeros(n, left * right);
    for b in 0..right {
        for i in 0..n {
            let src = &t.data[left * (i + n * b)..left * (i + n * b + 1)];
            for (a, &x) in src.iter().enumerate() {
                out[(i, a + left * b)] = x;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold<T: Scalar>(m: &Matrix<T>, mode: usize, shape: &[usize]) -> Result<DenseTensor<T>> {
    if mode >= shape.len() {
        return invalid(format!("mode {mode} out of range for an order-{} tensor", shape.len()));
    }
    let (left, n, right) = mode_split(shape, mode);
    if m.nrows() != n || m.ncols() != left * right {
        return mismatch(format!(
            "{}x{} matrix cannot fold into {shape:?} along mode {mode}",
            m.nrows(),
            m.ncols()
        ));
    }
    let mut data = vec![T::zero(); n * left * right];
    for b in 0..right {
        for i in 0..n {
            let dst = &mut data[left * (i + n * b)..left * (i + n * b + 1)];
            for (a, x) in dst.iter_mut().enumerate() {
                *x = m[(i, a + left * b)];
            }
        }
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// Columnwise Kronecker product `A ⊙ B`: column `r` is `a_r ⊗ b_r`, with the
/// row index of `B` running fastest.
pub fn khatri_rao<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.ncols() != b.ncols() {
        return mismatch(format!("Khatri–Rao needs equal column counts ({} vs {})", a.ncols(), b.ncols()));
    }
    let (m, n) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(m * n, a.ncols());
    for r in 0..a.ncols() {
        let (ac, bc) = (a.col(r), b.col(r));
        let oc = out.col_mut(r);
        for (i, &x) in ac.iter().enumerate() {
            for (k, &y) in bc.iter().enumerate() {
                oc[i * n + k] = x * y;
            }
        }
    }
    Ok(out)
}

/// An ordered list of CP factors sharing a column count (the CP rank `R`).
///
/// A rank of zero is allowed and represents the zero tensor; it only arises
/// when rank reduction prunes every component.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet<T> {
    factors: Vec<FactorMatrix<T>>,
}

impl<T: Scalar> FactorSet<T> {
    pub fn new(factors: Vec<FactorMatrix<T>>) -> Result<Self> {
        if factors.len() < 2 {
            return invalid("a factor set needs at least two factors");
        }
        let rank = factors[0].ncols();
        if factors.iter().any(|f| f.ncols() != rank) {
            return mismatch("factor matrices disagree on the rank");
        }
        if factors.iter().any(|f| f.nrows() == 0) {
            return invalid("factor matrices need at least one row");
        }
        Ok(Self { factors })
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::nrows).collect()
    }

    #[inline]
    pub fn factor(&self, mode: usize) -> &FactorMatrix<T> {
        &self.factors[mode]
    }

    #[inline]
    pub fn factor_mut(&mut self, mode: usize) -> &mut FactorMatrix<T> {
        &mut self.factors[mode]
    }

    pub fn factors(&self) -> &[FactorMatrix<T>] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<FactorMatrix<T>> {
        self.factors
    }

    /// The last factor, `A^(N)`, which carries the component weights.
    pub fn last(&self) -> &FactorMatrix<T> {
        self.factors.last().expect("non-empty factor set")
    }

    /// Squared distance `Σ_i ‖A_i − B_i‖²_F`.
    pub fn dist_sq(&self, other: &Self) -> T {
        self.factors
            .iter()
            .zip(&other.factors)
            .fold(T::zero(), |acc, (a, b)| acc + a.dist_sq(b))
    }

    /// Errors unless this factor set's row counts equal `shape`.
    pub fn check_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape() != shape {
            return mismatch(format!(
                "factor rows {:?} do not match tensor shape {shape:?}",
                self.shape()
            ));
        }
        Ok(())
    }
}

/// `D = A_{N-1} ⊙ … ⊙ A_{mode+1} ⊙ A_{mode-1} ⊙ … ⊙ A_0`, built from the
/// given per-mode factors (the entry at `mode` is ignored).
pub fn kr_complement_of<T: Scalar>(factors: &[&Matrix<T>], mode: usize) -> Result<Matrix<T>> {
    if mode >= factors.len() {
        return invalid(format!("mode {mode} out of range for {} factors", factors.len()));
    }
    let rank = factors[0].ncols();
    let mut others = factors.iter().enumerate().filter(|&(p, _)| p != mode).map(|(_, f)| *f);
    let first = others.next().ok_or_else(|| {
        crate::error::Error::InvalidArgument("need at least two factors".into())
    })?;
    // Fold from the lowest mode upwards: new = A_p ⊙ acc keeps lower modes fastest.
    let mut acc = first.clone();
    for f in others {
        if f.ncols() != rank {
            return mismatch("factor matrices disagree on the rank");
        }
        acc = khatri_rao(f, &acc)?;
    }
    Ok(acc)
}

/// Khatri–Rao product of every factor except `mode`, in descending mode order.
pub fn kr_complement<T: Scalar>(fs: &FactorSet<T>, mode: usize) -> Result<Matrix<T>> {
    let refs: Vec<&Matrix<T>> = fs.factors.iter().collect();
    kr_complement_of(&refs, mode)
}

/// Gram matrix of [`kr_complement_of`], computed as the Hadamard product of
/// the per-factor Grams without forming the Khatri–Rao product.
pub fn kr_complement_gram<T: Scalar>(factors: &[&Matrix<T>], mode: usize) -> Result<Matrix<T>> {
    let rank = factors[0].ncols();
    let mut g = Matrix::from_fn(rank, rank, |_, _| T::one());
    for (p, f) in factors.iter().enumerate() {
        if p != mode {
            g.hadamard_assign(&f.gram())?;
        }
    }
    Ok(g)
}

/// Full tensor `[[A_0, …, A_{N-1}]] = Σ_r a_0r ∘ … ∘ a_{N-1,r}`.
pub fn reconstruct<T: Scalar>(fs: &FactorSet<T>) -> Result<DenseTensor<T>> {
    let shape = fs.shape();
    if shape.len() < 3 {
        return invalid("reconstruction needs at least three factors");
    }
    let last = shape.len() - 1;
    let d = kr_complement(fs, last)?;
    let m = fs.factors[last].matmul_t(&d)?;
    fold(&m, last, &shape)
}

/// Smooth part of the objective, `½‖X − [[A]]‖²`.
pub fn objective_smooth<T: Scalar>(t: &DenseTensor<T>, fs: &FactorSet<T>) -> Result<T> {
    fs.check_shape(t.shape())?;
    let recon = reconstruct(fs)?;
    Ok(T::lit(0.5) * t.dist_sq(&recon)?)
}

/// Gradient of `f` with respect to column `col` of `A^(mode)` together with
/// its Lipschitz constant `d_colᵀ d_col`.
///
/// `unfolded` is `X_(mode)` and `d` is [`kr_complement`] for the same mode.
/// The gradient is evaluated as `A (DᵀD)_{:,col} − X_(mode) d_col`.
pub fn column_gradient<T: Scalar>(
    unfolded: &Matrix<T>,
    fs: &FactorSet<T>,
    mode: usize,
    col: usize,
    d: &Matrix<T>,
) -> Result<(Vec<T>, T)> {
    if mode >= fs.order() || col >= fs.rank() {
        return invalid(format!("column ({mode}, {col}) out of range"));
    }
    let a = &fs.factors[mode];
    if d.ncols() != fs.rank() || unfolded.ncols() != d.nrows() || unfolded.nrows() != a.nrows() {
        return mismatch("unfolding, factor and Khatri–Rao operand disagree");
    }
    let dj = d.col(col);
    let gram_col: Vec<T> = d.columns().map(|dr| crate::scalar::dot(dr, dj)).collect();
    let mut grad = vec![T::zero(); a.nrows()];
    for (r, &g) in gram_col.iter().enumerate() {
        for (out, &x) in grad.iter_mut().zip(a.col(r)) {
            *out += x * g;
        }
    }
    for (c, &w) in dj.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        for (i, out) in grad.iter_mut().enumerate() {
            *out -= unfolded[(i, c)] * w;
        }
    }
    Ok((grad, gram_col[col]))
}
