//! Kernel Gram matrices over the data space.
//!
//! A kernel encodes the prior a user wants the embedding to respect: pixel
//! similarity restricted to a class, structural similarity of molecules plus a
//! scalar property, or plain squared distances (which recovers standard
//! Gromov-Wasserstein).

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples with real features and optional integer labels / scalar properties.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<i64>>,
    properties: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Option<Vec<i64>>,
        properties: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let d = features.ncols().max(1);
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at row {}, column {}",
                idx / d,
                idx % d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape("labels", n, l.len()));
            }
        }
        if let Some(p) = &properties {
            if p.len() != n {
                return Err(Error::shape("properties", n, p.len()));
            }
            if let Some(i) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("non-finite property at row {i}")));
            }
        }
        Ok(Self {
            features,
            labels,
            properties,
        })
    }

    pub fn unlabeled(features: Array2<f64>) -> Result<Self> {
        Self::new(features, None, None)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn properties(&self) -> Option<&[f64]> {
        self.properties.as_deref()
    }

    /// Rows `idx` in order, keeping labels and properties aligned.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), idx);
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        let properties = self
            .properties
            .as_ref()
            .map(|p| idx.iter().map(|&i| p[i]).collect());
        Self::new(features, labels, properties)
    }
}

/// Symmetric, finite n×n kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Array2<f64>);

impl GramMatrix {
    /// Validates squareness, finiteness and symmetry to 1e-12 relative.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::shape("gram matrix", format!("{r}x{r}"), format!("{r}x{c}")));
        }
        for i in 0..r {
            for j in 0..=i {
                let a = entries[[i, j]];
                let b = entries[[j, i]];
                if !a.is_finite() {
                    return Err(Error::InvalidDataset(format!(
                        "non-finite gram entry at ({i}, {j})"
                    )));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::AsymmetricGram { row: i, col: j });
                }
            }
        }
        Ok(Self(entries))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().sum()
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Full matrix of squared Euclidean distances between rows.
pub fn pairwise_sq_dists(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for j in 0..n {
                row[j] = sq_dist(x.row(i), x.row(j));
            }
        });
    // exact symmetry regardless of summation order
    for i in 0..n {
        for j in 0..i {
            out[[j, i]] = out[[i, j]];
        }
    }
    out
}

/// Mean Euclidean distance over all n² ordered pairs (diagonal included).
pub fn gaussian_bandwidth(ds: &Dataset) -> Result<f64> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::SingletonDataset(n));
    }
    let d2 = pairwise_sq_dists(ds.features());
    let total: f64 = d2.iter().map(|v| v.sqrt()).sum();
    let sigma = total / (n * n) as f64;
    if sigma == 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(sigma)
}

fn check_bandwidth(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::NonpositiveBandwidth(sigma));
    }
    Ok(())
}

/// Heat kernel on features times the indicator of equal labels.
pub fn image_kernel(ds: &Dataset, sigma: f64) -> Result<GramMatrix> {
    let labels = ds.labels().ok_or(Error::MissingLabels)?;
    check_bandwidth(sigma)?;
    let mut g = pairwise_sq_dists(ds.features());
    let scale = 1.0 / (2.0 * sigma * sigma);
    for ((i, j), v) in g.indexed_iter_mut() {
        *v = if labels[i] == labels[j] {
            (-*v * scale).exp()
        } else {
            0.0
        };
    }
    GramMatrix::new(g)
}

/// Gaussian kernel without label gating.
pub fn rbf_kernel(ds: &Dataset, sigma: f64) -> Result<GramMatrix> {
    check_bandwidth(sigma)?;
    let scale = 1.0 / (2.0 * sigma * sigma);
    let g = pairwise_sq_dists(ds.features()).mapv(|d| (-d * scale).exp());
    GramMatrix::new(g)
}

/// `k(x, x') = -‖x - x'‖²`: the kernel under which the generalized objective
/// reduces to standard Gromov-Wasserstein. Not PSD.
pub fn neg_sqdist_kernel(ds: &Dataset) -> GramMatrix {
    GramMatrix(pairwise_sq_dists(ds.features()).mapv(|d| -d))
}

/// `k'(x, x') = ‖x - x'‖²`, the sign-flipped form used by the GW solver variant.
pub fn sqdist_kernel(ds: &Dataset) -> GramMatrix {
    GramMatrix(pairwise_sq_dists(ds.features()))
}

/// Half Tanimoto similarity of binary fingerprints plus half the absolute
/// property difference. The property term is a distance, taken as printed.
pub fn molecule_kernel(fingerprints: &Array2<u8>, properties: &[f64]) -> Result<GramMatrix> {
    let n = fingerprints.nrows();
    if properties.len() != n {
        return Err(Error::shape("properties", n, properties.len()));
    }
    if let Some(i) = properties.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidDataset(format!("non-finite property at row {i}")));
    }
    let bits: Vec<Vec<usize>> = fingerprints
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().filter(|(_, &b)| b != 0).map(|(k, _)| k).collect())
        .collect();
    if let Some(row) = bits.iter().position(|b| b.is_empty()) {
        return Err(Error::EmptyFingerprint { row });
    }
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let inter = intersection_size(&bits[i], &bits[j]) as f64;
            let union = bits[i].len() as f64 + bits[j].len() as f64 - inter;
            let v = 0.5 * inter / union + 0.5 * (properties[i] - properties[j]).abs();
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    GramMatrix::new(g)
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}
