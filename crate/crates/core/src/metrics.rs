//! Evaluation metrics that need no pretrained feature extractor.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::sinkhorn::{entropic_ot_value, sinkhorn_annealed, CostMatrix, SinkhornOptions};

pub const DEFAULT_METRIC_EPSILON: f64 = 1e-2;

pub const METRIC_SINKHORN: SinkhornOptions = SinkhornOptions {
    tol: 1e-9,
    max_iter: 20_000,
    newton: true,
};

/// The standard-normal reference set drawn by `wasserstein_to_gaussian`.
pub fn gaussian_reference(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
}

fn sq_euclid_cost(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<CostMatrix> {
    let c = Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i).iter().zip(b.row(j)).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
    });
    CostMatrix::new(c)
}

/// Entropic OT objective `Σ γ‖y_i - z_j‖² + ε Σ γ(log γ - 1)` between the
/// uniform empirical measures on the rows of `y` and `z`.
pub fn wasserstein_to_reference(y: ArrayView2<f64>, z: ArrayView2<f64>, eps: f64) -> Result<f64> {
    let n = y.nrows();
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 points, got {n}")));
    }
    if z.dim() != y.dim() {
        return Err(Error::shape(
            "reference set",
            format!("{:?}", y.dim()),
            format!("{:?}", z.dim()),
        ));
    }
    let cost = sq_euclid_cost(y, z)?;
    let sol = sinkhorn_annealed(&cost, eps, 2.0, &METRIC_SINKHORN)?;
    Ok(entropic_ot_value(&cost, &sol.plan, eps))
}

/// Entropic OT objective against `n` fresh standard-normal points drawn with `seed`.
pub fn wasserstein_to_gaussian(y: ArrayView2<f64>, eps: f64, seed: u64) -> Result<f64> {
    if y.nrows() < 2 {
        return Err(Error::Domain(format!("need at least 2 points, got {}", y.nrows())));
    }
    let z = gaussian_reference(y.nrows(), y.ncols(), seed);
    wasserstein_to_reference(y, z.view(), eps)
}

/// `(1/n²) Σ_ij G_ij ‖y_i - y_j‖²`: the quadratic objective of the coupling
/// that pairs `x_i` with `y_i`.
pub fn gwot_eval(g: &GramMatrix, y: ArrayView2<f64>) -> Result<f64> {
    let n = g.n();
    if y.nrows() != n {
        return Err(Error::shape("embedding rows", n, y.nrows()));
    }
    let k = g.entries();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            total += k[[i, j]] * d;
        }
    }
    Ok(total / (n * n) as f64)
}

pub fn mean(runs: &[f64]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::InsufficientRuns(0));
    }
    Ok(runs.iter().sum::<f64>() / runs.len() as f64)
}

/// Mean and unbiased sample standard deviation.
pub fn aggregate(runs: &[f64]) -> Result<(f64, f64)> {
    if runs.len() < 2 {
        return Err(Error::InsufficientRuns(runs.len()));
    }
    let m = mean(runs)?;
    let var = runs.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (runs.len() - 1) as f64;
    Ok((m, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn self_distance_is_entropy_only() {
        let (n, eps) = (64, 1e-2);
        let z = gaussian_reference(n, 2, 7);
        let v = wasserstein_to_gaussian(z.view(), eps, 7).unwrap();
        let bound = eps * n as f64 * ((n * n) as f64).ln().abs() + 1e-6;
        assert!(v <= bound, "{v}");
        assert!(v <= 0.0);
    }

    #[test]
    fn translation_lower_bound() {
        let (n, eps) = (64, 1e-2);
        let mu = array![1.0, -2.0];
        let y = gaussian_reference(n, 2, 3) + &mu.view().insert_axis(ndarray::Axis(0));
        let v = wasserstein_to_gaussian(y.view(), eps, 3).unwrap();
        assert!(v >= mu.dot(&mu) - 2.0 * eps * (n as f64).ln() - 1e-3, "{v}");
    }

    #[test]
    fn single_point_is_rejected() {
        assert!(wasserstein_to_gaussian(array![[0.0, 0.0]].view(), 0.01, 0).is_err());
    }

    #[test]
    fn gwot_eval_examples() {
        let ones = GramMatrix::new(Array2::ones((2, 2))).unwrap();
        assert!((gwot_eval(&ones, array![[0.0], [1.0]].view()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gwot_eval(&ones, array![[3.0], [3.0]].view()).unwrap(), 0.0);
        let zero = GramMatrix::new(Array2::zeros((2, 2))).unwrap();
        assert_eq!(gwot_eval(&zero, array![[0.0], [1.0]].view()).unwrap(), 0.0);
        assert!(gwot_eval(&ones, array![[0.0]].view()).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[2.5, 2.5, 2.5]).unwrap(), (2.5, 0.0));
        let (m, s) = aggregate(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean(&[5.0]).unwrap(), 5.0);
        assert!(matches!(aggregate(&[5.0]), Err(Error::InsufficientRuns(1))));
    }
}
