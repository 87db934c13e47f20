//! Seeded synthetic low-rank tensors with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::prox::project_unit_sphere;
use crate::scalar::Scalar;
use crate::tensor::{reconstruct, DenseTensor, FactorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub shape: Vec<usize>,
    pub rank: usize,
    /// Inclusive range the component weights are drawn from.
    pub weight_range: (f64, f64),
    /// Target `‖noise‖ / ‖signal‖`.
    pub noise_level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Synthetic<T> {
    pub tensor: DenseTensor<T>,
    pub truth: FactorSet<T>,
    /// Weights of the components (norms of the last factor's columns).
    pub weights: Vec<f64>,
}

impl SynthSpec {
    pub fn new(shape: Vec<usize>, rank: usize) -> Self {
        Self { shape, rank, weight_range: (1.0, 2.0), noise_level: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.len() < 3 || self.shape.contains(&0) {
            return invalid(format!("shape {:?} needs at least 3 positive dimensions", self.shape));
        }
        if self.rank == 0 {
            return invalid("rank must be positive");
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return invalid(format!("weight range [{lo}, {hi}] must lie in (0, inf)"));
        }
        if !(self.noise_level >= 0.0) || !self.noise_level.is_finite() {
            return invalid("noise level must be nonnegative");
        }
        Ok(())
    }

    /// True when the rank exceeds the smallest dimension.
    pub fn rank_exceeds_dims(&self) -> bool {
        self.shape.iter().any(|&n| n < self.rank)
    }
}

/// Draws a rank-`spec.rank` tensor: unit-norm columns in all modes but the
/// last, last-mode columns of uniform random length in `weight_range`, plus
/// Gaussian noise scaled to the requested relative level.
pub fn synthesize<T: Scalar>(spec: &SynthSpec) -> Result<Synthetic<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.weight_range;
    let mut factors = Vec::with_capacity(spec.shape.len());
    for &n in &spec.shape {
        let mut m = Matrix::from_fn(n, spec.rank, |_, _| {
            let x: f64 = StandardNormal.sample(&mut rng);
            T::lit(x)
        });
        for j in 0..spec.rank {
            project_unit_sphere(m.col_mut(j));
        }
        factors.push(m);
    }
    let weights: Vec<f64> = (0..spec.rank).map(|_| rng.random_range(lo..=hi)).collect();
    let last = factors.last_mut().expect("at least three modes");
    for (j, &w) in weights.iter().enumerate() {
        last.col_mut(j).iter_mut().for_each(|x| *x *= T::lit(w));
    }
    let truth = FactorSet::new(factors)?;
    let signal = reconstruct(&truth)?;
    let tensor = if spec.noise_level > 0.0 {
        let noise: Vec<T> = (0..signal.len())
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                T::lit(x)
            })
            .collect();
        let noise_norm = crate::scalar::norm(&noise);
        let scale = T::lit(spec.noise_level) * signal.norm() / noise_norm;
        let data = signal.data().iter().zip(&noise).map(|(&s, &e)| s + scale * e).collect();
        DenseTensor::new(signal.shape().to_vec(), data)?
    } else {
        signal
    };
    Ok(Synthetic { tensor, truth, weights })
}
