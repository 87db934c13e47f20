//! Column-wise proximal mappings: projection onto the unit sphere and the
//! hard threshold of the group-ℓ0 penalty.

use crate::error::{invalid, Result};
use crate::scalar::{norm_sq, Scalar};

/// The regularizer attached to one factor's columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxKind<T> {
    /// Indicator of the unit sphere (constrained modes).
    UnitSphere,
    /// `lambda · ‖a‖⁰` on each column of the last factor.
    GroupL0 { lambda: T },
    /// No regularizer; the proximal step is the identity.
    None,
}

impl<T: Scalar> ProxKind<T> {
    pub fn group_l0(lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) {
            return invalid(format!("lambda must be nonnegative, got {lambda}"));
        }
        Ok(Self::GroupL0 { lambda })
    }

    /// Applies the proximal map with step `step` to `v` in place.
    pub fn apply(&self, v: &mut [T], step: T) {
        match *self {
            ProxKind::UnitSphere => project_unit_sphere(v),
            ProxKind::GroupL0 { lambda } => hard_threshold(v, lambda, step),
            ProxKind::None => {}
        }
    }
}

/// In-place projection onto the unit sphere; the zero vector maps to `e₁`.
pub(crate) fn project_unit_sphere<T: Scalar>(v: &mut [T]) {
    let n2 = norm_sq(v);
    if n2 > T::zero() {
        let inv = n2.sqrt().recip();
        v.iter_mut().for_each(|x| *x *= inv);
    } else if let Some((first, rest)) = v.split_first_mut() {
        *first = T::one();
        rest.iter_mut().for_each(|x| *x = T::zero());
    }
}

/// In-place prox of `step · lambda · ‖·‖⁰`: zero the vector when
/// `‖v‖ < √(2·lambda·step)`, otherwise leave it. Ties keep `v`.
pub(crate) fn hard_threshold<T: Scalar>(v: &mut [T], lambda: T, step: T) {
    let threshold_sq = T::lit(2.0) * lambda * step;
    if norm_sq(v) < threshold_sq {
        v.iter_mut().for_each(|x| *x = T::zero());
    }
}

/// Nearest point on the unit sphere; `e₁` for the zero vector.
pub fn prox_unit_sphere<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return invalid("cannot project an empty vector onto the unit sphere");
    }
    let mut out = v.to_vec();
    project_unit_sphere(&mut out);
    Ok(out)
}

/// `argmin_u ½‖u − v‖² + step·lambda·(‖u‖)⁰`, keeping `v` on the boundary.
pub fn prox_group_l0<T: Scalar>(v: &[T], lambda: T, step: T) -> Result<Vec<T>> {
    if !(lambda >= T::zero()) {
        return invalid(format!("lambda must be nonnegative, got {lambda}"));
    }
    if !(step > T::zero()) || !step.is_finite() {
        return invalid(format!("step must be positive and finite, got {step}"));
    }
    let mut out = v.to_vec();
    hard_threshold(&mut out, lambda, step);
    Ok(out)
}
