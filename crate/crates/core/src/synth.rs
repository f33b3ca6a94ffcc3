//! Seeded synthetic inputs: labeled Gaussian mixtures, fingerprint/property
//! sets for the molecule kernel, and draws from the target embedding
//! distributions.

use std::f64::consts::TAU;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gwot::EmbeddingSet;
use crate::kernels::Dataset;

/// Balanced mixture of isotropic Gaussians. Centers are `separation·σ/√2`
/// times distinct unit vectors, so any two centers are `separation·σ` apart
/// when `classes <= d_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub classes: usize,
    pub d_x: usize,
    pub n: usize,
    /// Center separation in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            d_x: 10,
            n: 512,
            separation: 6.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

pub fn mixture_centers(spec: &MixtureSpec) -> Array2<f64> {
    let scale = spec.separation * spec.sigma / 2f64.sqrt();
    let mut centers = Array2::zeros((spec.classes, spec.d_x));
    if spec.classes == 1 {
        return centers;
    }
    if spec.classes <= spec.d_x {
        for c in 0..spec.classes {
            centers[[c, c]] = scale;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
        for mut row in centers.rows_mut() {
            let v: Array1<f64> = Array1::from_iter((0..spec.d_x).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let norm = v.dot(&v).sqrt().max(f64::MIN_POSITIVE);
            row.assign(&(v * (scale / norm)));
        }
    }
    centers
}

/// Sample i belongs to class `i % classes`.
pub fn make_synthetic(spec: &MixtureSpec) -> Result<Dataset> {
    if spec.classes == 0 || spec.d_x == 0 || spec.n == 0 {
        return Err(Error::InvalidDataset("classes, d_x and n must be positive".into()));
    }
    if !(spec.sigma > 0.0) || !(spec.separation >= 0.0) {
        return Err(Error::InvalidDataset("sigma must be positive and separation non-negative".into()));
    }
    let centers = mixture_centers(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<i64> = (0..spec.n).map(|i| (i % spec.classes) as i64).collect();
    let x = Array2::from_shape_fn((spec.n, spec.d_x), |(i, j)| {
        centers[[labels[i] as usize, j]] + spec.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(x, Some(labels), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSpec {
    pub n: usize,
    pub bits: usize,
    /// Probability of each bit being set.
    pub density: f64,
    pub seed: u64,
}

impl Default for FingerprintSpec {
    fn default() -> Self {
        Self {
            n: 256,
            bits: 128,
            density: 0.1,
            seed: 0,
        }
    }
}

/// Random bit vectors (each with at least one set bit) and a property that
/// is a fixed random linear function of the bits plus small noise.
pub fn make_fingerprints(spec: &FingerprintSpec) -> Result<(Array2<u8>, Vec<f64>)> {
    if spec.n == 0 || spec.bits == 0 {
        return Err(Error::InvalidDataset("n and bits must be positive".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::InvalidDataset(format!("density must lie in (0, 1], got {}", spec.density)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coef: Vec<f64> = (0..spec.bits).map(|_| rng.sample(StandardNormal)).collect();
    let mut fp = Array2::<u8>::zeros((spec.n, spec.bits));
    let mut props = Vec::with_capacity(spec.n);
    for mut row in fp.rows_mut() {
        for b in row.iter_mut() {
            *b = u8::from(rng.random::<f64>() < spec.density);
        }
        if row.iter().all(|b| *b == 0) {
            let k = rng.random_range(0..spec.bits);
            row[k] = 1;
        }
        let base: f64 = row.iter().zip(&coef).map(|(b, c)| f64::from(*b) * c).sum();
        props.push(base + 0.1 * rng.sample::<f64, _>(StandardNormal));
    }
    Ok((fp, props))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDist {
    #[default]
    Gaussian,
    UniformSquare,
    UnitCircle,
}

impl std::str::FromStr for TargetDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(TargetDist::Gaussian),
            "uniform_square" => Ok(TargetDist::UniformSquare),
            "unit_circle" => Ok(TargetDist::UnitCircle),
            other => Err(Error::Config {
                field: "target_dist",
                message: format!("unknown distribution `{other}`"),
            }),
        }
    }
}

/// `n` i.i.d. draws: standard normal, uniform on `[-1, 1]^{d_y}`, or uniform
/// on the unit circle (`d_y = 2` only).
pub fn draw_target(dist: TargetDist, n: usize, d_y: usize, seed: u64) -> Result<EmbeddingSet> {
    if n == 0 || d_y == 0 {
        return Err(Error::Dimension(format!("need n >= 1 and d_y >= 1, got n={n}, d_y={d_y}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = match dist {
        TargetDist::Gaussian => Array2::from_shape_simple_fn((n, d_y), || rng.sample(StandardNormal)),
        TargetDist::UniformSquare => Array2::from_shape_simple_fn((n, d_y), || rng.random_range(-1.0..=1.0)),
        TargetDist::UnitCircle => {
            if d_y != 2 {
                return Err(Error::Dimension(format!("unit_circle needs d_y = 2, got {d_y}")));
            }
            let mut y = Array2::zeros((n, 2));
            for mut row in y.rows_mut() {
                let a = rng.random_range(0.0..TAU);
                row[0] = a.cos();
                row[1] = a.sin();
            }
            y
        }
    };
    EmbeddingSet::new(y)
}
