//! Fit and separation metrics: relative reconstruction error, component
//! alignment against a reference decomposition, and RMSEP.

use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, norm_sq, Scalar};
use crate::solver::{cosine, support};
use crate::tensor::{reconstruct, DenseTensor, FactorSet};

/// `‖X − [[A]]‖ / ‖X‖`.
pub fn rel_err<T: Scalar>(t: &DenseTensor<T>, fs: &FactorSet<T>) -> Result<T> {
    let nx = t.norm();
    if nx == T::zero() {
        return Err(Error::ZeroTensor);
    }
    fs.check_shape(t.shape())?;
    if fs.rank() == 0 {
        return Ok(T::one());
    }
    Ok(t.dist_sq(&reconstruct(fs)?)?.sqrt() / nx)
}

/// One estimated component paired with a reference component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMatch<T> {
    pub estimated: usize,
    pub reference: usize,
    /// Absolute cosine between the joint signatures over the leading modes.
    pub similarity: T,
    /// Least-squares coefficient regressing the reference last-mode column
    /// on the estimated one.
    pub scale: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult<T> {
    /// Matches sorted by reference index.
    pub matches: Vec<ComponentMatch<T>>,
    pub reference_rank: usize,
}

impl<T: Scalar> AlignmentResult<T> {
    pub fn matched_rank(&self) -> usize {
        self.matches.len()
    }

    pub fn is_complete(&self) -> bool {
        self.matches.len() == self.reference_rank
    }

    /// For each estimated column, the reference column it was matched to.
    pub fn permutation(&self, estimated_rank: usize) -> Vec<Option<usize>> {
        let mut p = vec![None; estimated_rank];
        for m in &self.matches {
            p[m.estimated] = Some(m.reference);
        }
        p
    }

    /// Regressed last-mode profiles laid out in reference column order, or
    /// `None` when some reference component went unmatched.
    pub fn regressed_profiles(&self, estimated: &FactorSet<T>) -> Option<Matrix<T>> {
        if !self.is_complete() {
            return None;
        }
        let last = estimated.last();
        let cols: Vec<Vec<T>> = self
            .matches
            .iter()
            .map(|m| last.col(m.estimated).iter().map(|&x| x * m.scale).collect())
            .collect();
        Matrix::from_columns(&cols).ok()
    }
}

/// Greedy matching of the nonzero estimated components to reference
/// components by largest absolute signature cosine, without reuse.
///
/// The signature of a component is the Kronecker product of its columns in
/// every mode but the last; its cosine factorizes into per-mode cosines.
pub fn align_components<T: Scalar>(estimated: &FactorSet<T>, reference: &FactorSet<T>) -> Result<AlignmentResult<T>> {
    if estimated.shape() != reference.shape() {
        return mismatch(format!(
            "estimated factors {:?} and reference factors {:?} differ in shape",
            estimated.shape(),
            reference.shape()
        ));
    }
    let lead = estimated.order() - 1;
    let active = support(estimated.last());
    let mut candidates = Vec::with_capacity(active.len() * reference.rank());
    for &e in &active {
        for r in 0..reference.rank() {
            let sim = (0..lead)
                .map(|p| cosine(estimated.factor(p).col(e), reference.factor(p).col(r)))
                .fold(T::one(), |acc, c| acc * c)
                .abs();
            candidates.push((sim, e, r));
        }
    }
    // Highest similarity first; ties broken by index for determinism.
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_e = vec![false; estimated.rank()];
    let mut used_r = vec![false; reference.rank()];
    let mut matches = Vec::new();
    for (sim, e, r) in candidates {
        if used_e[e] || used_r[r] {
            continue;
        }
        used_e[e] = true;
        used_r[r] = true;
        let est_col = estimated.last().col(e);
        let ref_col = reference.last().col(r);
        let scale = dot(est_col, ref_col) / norm_sq(est_col);
        matches.push(ComponentMatch { estimated: e, reference: r, similarity: sim, scale });
    }
    matches.sort_by_key(|m| m.reference);
    Ok(AlignmentResult { matches, reference_rank: reference.rank() })
}

/// Root mean squared error of prediction between two profile matrices.
pub fn rmsep<T: Scalar>(reference: &Matrix<T>, regressed: &Matrix<T>) -> Result<T> {
    if reference.nrows() != regressed.nrows() || reference.ncols() != regressed.ncols() {
        return mismatch(format!(
            "{}x{} reference vs {}x{} regressed profiles",
            reference.nrows(),
            reference.ncols(),
            regressed.nrows(),
            regressed.ncols()
        ));
    }
    let count = reference.nrows() * reference.ncols();
    if count == 0 {
        return Ok(T::zero());
    }
    let sse = reference.dist_sq(regressed);
    Ok((sse / T::from_usize(count).unwrap()).sqrt())
}

/// Scales every column by its largest absolute entry (zero columns untouched).
pub fn max_normalized_profiles<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        let col = out.col_mut(j);
        let peak = col.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        if peak > T::zero() {
            col.iter_mut().for_each(|x| *x /= peak);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmsep_by_hand() {
        let z = Matrix::<f64>::zeros(2, 2);
        let ones = Matrix::from_fn(2, 2, |_, _| 1.0);
        assert_eq!(rmsep(&z, &ones).unwrap(), 1.0);
        let corner = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(rmsep(&z, &corner).unwrap(), 1.0);
        assert_eq!(rmsep(&corner, &corner).unwrap(), 0.0);
        assert!(rmsep(&z, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn rel_err_rejects_zero_tensor() {
        let t = DenseTensor::<f64>::zeros(vec![2, 2, 2]).unwrap();
        let fs = FactorSet::new(vec![Matrix::zeros(2, 1), Matrix::zeros(2, 1), Matrix::zeros(2, 1)]).unwrap();
        assert!(matches!(rel_err(&t, &fs), Err(Error::ZeroTensor)));
    }

    #[test]
    fn max_normalization() {
        let m = Matrix::from_rows(&[&[2.0, 0.0], &[-4.0, 0.0]]).unwrap();
        let n = max_normalized_profiles(&m);
        assert_eq!(n.col(0), &[0.5, -1.0]);
        assert_eq!(n.col(1), &[0.0, 0.0]);
    }
}
