//! Low-rank factorizations `G ≈ Φ Φᵀ` with Φ stored n×m (row i is the feature
//! vector of sample i).

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

/// Default explained-variance target for rank selection.
pub const DEFAULT_ETA: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct GramFactor {
    phi: Array2<f64>,
    weights: Array1<f64>,
    residual_trace: f64,
    clipped_mass: f64,
    eta: f64,
}

impl GramFactor {
    /// Assemble a factor from its parts; `weights` are the raw row sums of G.
    pub fn from_parts(
        phi: Array2<f64>,
        weights: Array1<f64>,
        residual_trace: f64,
        clipped_mass: f64,
        eta: f64,
    ) -> Result<Self> {
        if phi.nrows() != weights.len() {
            return Err(Error::shape("factor weights", phi.nrows(), weights.len()));
        }
        if phi.ncols() > phi.nrows() {
            return Err(Error::shape(
                "factor rank",
                format!("<= {}", phi.nrows()),
                phi.ncols(),
            ));
        }
        Ok(Self {
            phi,
            weights,
            residual_trace,
            clipped_mass,
            eta,
        })
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn rank(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    /// Row sums `w_i = Σ_j G_ij` of the exact Gram matrix.
    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    /// `w_i / n`: row sums weighted by the uniform empirical measure. This is
    /// the weight that enters the linear term of the variational objective.
    pub fn marginal_weights(&self) -> Array1<f64> {
        &self.weights / self.n() as f64
    }

    pub fn residual_trace(&self) -> f64 {
        self.residual_trace
    }

    /// Fraction of absolute spectral mass discarded as negative eigenvalues
    /// (always zero for pivoted Cholesky).
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.phi.dot(&self.phi.t())
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config {
            field: "eta",
            message: format!("must lie in (0, 1], got {eta}"),
        });
    }
    Ok(())
}

pub fn row_weights(g: &GramMatrix) -> Array1<f64> {
    g.entries().sum_axis(Axis(1))
}

/// Greedy pivoted Cholesky: pick the largest residual diagonal, append the
/// corresponding Schur column, stop once the residual trace is at most
/// `(1 - eta) · trace(G)`.
pub fn pivoted_cholesky(g: &GramMatrix, eta: f64) -> Result<GramFactor> {
    check_eta(eta)?;
    let n = g.n();
    let a = g.entries();
    let trace = g.trace();
    let neg_tol = 1e-10 * trace.abs();

    if trace <= 0.0 {
        // A PSD matrix with zero trace is the zero matrix.
        if let Some(((i, _), _)) = a.indexed_iter().find(|(_, v)| **v != 0.0) {
            return Err(Error::IndefiniteGram {
                pivot: a[[i, i]],
                index: i,
            });
        }
        return GramFactor::from_parts(Array2::zeros((n, 0)), row_weights(g), 0.0, 0.0, eta);
    }

    let mut resid: Array1<f64> = a.diag().to_owned();
    if let Some(i) = resid.iter().position(|&r| r < -neg_tol) {
        return Err(Error::IndefiniteGram {
            pivot: resid[i],
            index: i,
        });
    }
    let zero_tol = f64::EPSILON * n as f64 * resid.iter().cloned().fold(0.0, f64::max);
    let target = (1.0 - eta) * trace;
    let mut cols: Vec<Array1<f64>> = Vec::new();

    while cols.len() < n {
        if resid.sum() <= target {
            break;
        }
        let (j, &pivot) = resid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("n >= 1");
        if pivot <= zero_tol {
            break;
        }
        let mut xi = a.column(j).to_owned();
        for c in &cols {
            let cj = c[j];
            xi.scaled_add(-cj, c);
        }
        let col = xi / pivot.sqrt();
        for i in 0..n {
            resid[i] -= col[i] * col[i];
        }
        resid[j] = 0.0;
        if let Some(i) = resid.iter().position(|&r| r < -neg_tol) {
            return Err(Error::IndefiniteGram {
                pivot: resid[i],
                index: i,
            });
        }
        cols.push(col);
    }

    // entries below round-off are exact zeros of the Schur complement
    resid.mapv_inplace(|r| if r <= zero_tol { 0.0 } else { r });
    let m = cols.len();
    let mut phi = Array2::zeros((n, m));
    for (k, c) in cols.iter().enumerate() {
        phi.column_mut(k).assign(c);
    }
    GramFactor::from_parts(phi, row_weights(g), resid.sum(), 0.0, eta)
}

struct Spectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// Eigenpairs sorted by descending eigenvalue.
fn spectrum(g: &GramMatrix) -> Spectrum {
    let n = g.n();
    let m = DMatrix::from_fn(n, n, |i, j| g.entries()[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    Spectrum { values, vectors }
}

fn spectral_tol(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    scale * values.len() as f64 * f64::EPSILON
}

fn scaled_columns(sp: &Spectrum, keep: &[usize]) -> Array2<f64> {
    let n = sp.vectors.nrows();
    let mut phi = Array2::zeros((n, keep.len()));
    for (c, &k) in keep.iter().enumerate() {
        let s = sp.values[k].abs().sqrt();
        for i in 0..n {
            phi[[i, c]] = sp.vectors[(i, k)] * s;
        }
    }
    phi
}

/// Symmetric eigendecomposition with negative eigenvalues clipped to zero.
/// Works for indefinite kernels; the discarded share of spectral mass is
/// reported through [`GramFactor::clipped_mass`].
pub fn eigen_factor(g: &GramMatrix, eta: f64) -> Result<GramFactor> {
    check_eta(eta)?;
    let sp = spectrum(g);
    let tol = spectral_tol(&sp.values);
    let pos: f64 = sp.values.iter().filter(|&&v| v > 0.0).sum();
    let neg: f64 = sp.values.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let clipped_mass = if pos + neg > 0.0 { neg / (pos + neg) } else { 0.0 };

    let mut keep = Vec::new();
    let mut covered = 0.0;
    for (k, &v) in sp.values.iter().enumerate() {
        if v <= tol || covered >= eta * pos {
            break;
        }
        keep.push(k);
        covered += v;
    }
    let residual = (pos - covered).max(0.0);
    GramFactor::from_parts(scaled_columns(&sp, &keep), row_weights(g), residual, clipped_mass, eta)
}

/// Exact split `G = P Pᵀ - N Nᵀ` of a symmetric (possibly indefinite) matrix.
#[derive(Debug, Clone)]
pub struct SignedFactor {
    pub positive: Array2<f64>,
    pub negative: Array2<f64>,
    pub weights: Array1<f64>,
}

impl SignedFactor {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn marginal_weights(&self) -> Array1<f64> {
        &self.weights / self.n() as f64
    }
}

pub fn signed_eigen_factor(g: &GramMatrix) -> SignedFactor {
    let sp = spectrum(g);
    let tol = spectral_tol(&sp.values);
    let pos: Vec<usize> = (0..sp.values.len()).filter(|&k| sp.values[k] > tol).collect();
    let neg: Vec<usize> = (0..sp.values.len()).filter(|&k| sp.values[k] < -tol).collect();
    SignedFactor {
        positive: scaled_columns(&sp, &pos),
        negative: scaled_columns(&sp, &neg),
        weights: row_weights(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn gram(a: Array2<f64>) -> GramMatrix {
        GramMatrix::new(a).unwrap()
    }

    fn frob(a: &Array2<f64>) -> f64 {
        a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_full_rank() {
        let g = gram(Array2::eye(3));
        let f = pivoted_cholesky(&g, 1.0).unwrap();
        assert_eq!(f.rank(), 3);
        assert_eq!(f.reconstruct(), Array2::<f64>::eye(3));
        assert_eq!(f.residual_trace(), 0.0);
    }

    #[test]
    fn ones_is_rank_one() {
        let g = gram(Array2::ones((3, 3)));
        let f = pivoted_cholesky(&g, 1.0).unwrap();
        assert_eq!(f.rank(), 1);
        assert!(f.phi().iter().all(|v| (v.abs() - 1.0).abs() < 1e-15));
        assert_eq!(f.residual_trace(), 0.0);
    }

    #[test]
    fn diagonal_pivot_order() {
        let g = gram(Array2::from_diag(&array![4.0, 1.0, 0.01]));
        let f = pivoted_cholesky(&g, 0.95).unwrap();
        assert_eq!(f.rank(), 2);
        assert!((f.residual_trace() - 0.01).abs() < 1e-15);
        assert!(f.residual_trace() <= 0.05 * 5.01);
        // first column carries the largest pivot
        assert!((f.phi()[[0, 0]] - 2.0).abs() < 1e-15);
        assert!((f.phi()[[1, 1]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let g = gram(array![[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(pivoted_cholesky(&g, 1.0), Err(Error::IndefiniteGram { .. })));
        let g = gram(array![[0.0, -1.0], [-1.0, 0.0]]);
        assert!(matches!(pivoted_cholesky(&g, 1.0), Err(Error::IndefiniteGram { .. })));
        let g = gram(array![[-1.0, 0.0], [0.0, 2.0]]);
        assert!(matches!(pivoted_cholesky(&g, 1.0), Err(Error::IndefiniteGram { .. })));
    }

    #[test]
    fn eta_range_checked() {
        let g = gram(Array2::eye(2));
        assert!(pivoted_cholesky(&g, 0.0).is_err());
        assert!(eigen_factor(&g, 1.5).is_err());
    }

    #[test]
    fn eigen_clips_negative_mass() {
        let g = gram(array![[0.0, -1.0], [-1.0, 0.0]]);
        let f = eigen_factor(&g, 0.95).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.clipped_mass() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eigen_zero_matrix() {
        let g = gram(Array2::zeros((3, 3)));
        let f = eigen_factor(&g, 0.95).unwrap();
        assert_eq!(f.rank(), 0);
        assert!(f.weights().iter().all(|&w| w == 0.0));
        let f = pivoted_cholesky(&g, 0.95).unwrap();
        assert_eq!(f.rank(), 0);
    }

    #[test]
    fn eigen_matches_cholesky_guarantee_on_psd() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [0.3, 0.3]];
        let g = gram(x.dot(&x.t()) + Array2::<f64>::eye(4) * 0.1);
        let trace = g.trace();
        for eta in [0.8, 0.95, 1.0] {
            let e = eigen_factor(&g, eta).unwrap();
            let c = pivoted_cholesky(&g, eta).unwrap();
            assert!(e.residual_trace() <= (1.0 - eta) * trace + 1e-12);
            assert!(c.residual_trace() <= (1.0 - eta) * trace + 1e-12);
            assert_eq!(e.clipped_mass(), 0.0);
        }
        let e = eigen_factor(&g, 1.0).unwrap();
        assert!(frob(&(e.reconstruct() - g.entries())) < 1e-12);
    }

    #[test]
    fn signed_factor_is_exact() {
        let g = gram(array![[0.0, 1.0, 4.0], [1.0, 0.0, 1.0], [4.0, 1.0, 0.0]]);
        let s = signed_eigen_factor(&g);
        let r = s.positive.dot(&s.positive.t()) - s.negative.dot(&s.negative.t());
        assert!(frob(&(r - g.entries())) < 1e-12);
    }

    #[test]
    fn row_weight_examples() {
        assert_eq!(row_weights(&gram(Array2::eye(3))), array![1.0, 1.0, 1.0]);
        assert_eq!(row_weights(&gram(Array2::ones((3, 3)))), array![3.0, 3.0, 3.0]);
        assert_eq!(row_weights(&gram(array![[2.0, 1.0], [1.0, 0.0]])), array![3.0, 1.0]);
    }
}
