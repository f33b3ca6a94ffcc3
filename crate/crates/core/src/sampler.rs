//! Fixed-step Euler integration of a trained drift: `p(y | x)` with the
//! y-role and `p(x | y)` with the x-role.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dcfm::{DriftNet, Role};
use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 100;

/// Anything that can play the role of the drift network during sampling.
pub trait DriftField: Sync {
    fn d_x(&self) -> usize;
    fn d_y(&self) -> usize;
    fn drift(&self, x: ArrayView1<f64>, y: ArrayView1<f64>, t: f64, role: Role) -> Result<Array1<f64>>;

    /// Row-wise drift at a common time.
    fn drift_batch(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, t: f64, role: Role) -> Result<Array2<f64>> {
        let d = match role {
            Role::X => self.d_x(),
            Role::Y => self.d_y(),
        };
        let mut out = Array2::zeros((x.nrows(), d));
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            row.assign(&self.drift(x.row(i), y.row(i), t, role)?);
        }
        Ok(out)
    }
}

impl DriftField for DriftNet {
    fn d_x(&self) -> usize {
        self.arch().d_x
    }

    fn d_y(&self) -> usize {
        self.arch().d_y
    }

    fn drift(&self, x: ArrayView1<f64>, y: ArrayView1<f64>, t: f64, role: Role) -> Result<Array1<f64>> {
        self.forward(x, y, t, role)
    }

    fn drift_batch(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, t: f64, role: Role) -> Result<Array2<f64>> {
        self.forward_batch(role, &Array1::from_elem(x.nrows(), t), x, y)
    }
}

/// Condition `c` (an x for `Role::Y`, a y for `Role::X`), the role, the
/// number of Euler steps and the seed for the base draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRequest {
    pub condition: Array1<f64>,
    pub role: Role,
    pub steps: usize,
    pub seed: u64,
}

fn dims<F: DriftField + ?Sized>(field: &F, role: Role) -> (usize, usize) {
    // (condition dimension, generated dimension)
    match role {
        Role::X => (field.d_y(), field.d_x()),
        Role::Y => (field.d_x(), field.d_y()),
    }
}

fn base_draw(seed: u64, d: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::Config {
            field: "steps_T",
            message: "need at least one Euler step".into(),
        });
    }
    Ok(())
}

/// `z_{k+1} = z_k + u(·, k/T) / T` from a standard-normal `z_0`.
pub fn euler_sample<F: DriftField + ?Sized>(field: &F, req: &SampleRequest) -> Result<Array1<f64>> {
    check_steps(req.steps)?;
    let (dc, dz) = dims(field, req.role);
    if req.condition.len() != dc {
        return Err(Error::shape("condition", dc, req.condition.len()));
    }
    let mut z = base_draw(req.seed, dz);
    let h = 1.0 / req.steps as f64;
    for k in 0..req.steps {
        let t = k as f64 * h;
        let u = match req.role {
            Role::X => field.drift(z.view(), req.condition.view(), t, Role::X)?,
            Role::Y => field.drift(req.condition.view(), z.view(), t, Role::Y)?,
        };
        if u.len() != dz {
            return Err(Error::shape("drift", dz, u.len()));
        }
        z.scaled_add(h, &u);
    }
    Ok(z)
}

/// One sample per condition row; row i uses `seeds[i]`. Equivalent to
/// calling `euler_sample` per row, but evaluates the drift in batches.
pub fn euler_sample_batch<F: DriftField + ?Sized>(
    field: &F,
    conditions: ArrayView2<f64>,
    role: Role,
    steps: usize,
    seeds: &[u64],
) -> Result<Array2<f64>> {
    check_steps(steps)?;
    let (dc, dz) = dims(field, role);
    let n = conditions.nrows();
    if conditions.ncols() != dc {
        return Err(Error::shape("condition", dc, conditions.ncols()));
    }
    if seeds.len() != n {
        return Err(Error::shape("seed list", n, seeds.len()));
    }
    let mut z = Array2::zeros((n, dz));
    for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&base_draw(seeds[i], dz));
    }
    const CHUNK: usize = 256;
    let h = 1.0 / steps as f64;
    let chunks: Vec<Result<Array2<f64>>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let cond = conditions.slice(ndarray::s![lo..hi, ..]);
            let mut zc = z.slice(ndarray::s![lo..hi, ..]).to_owned();
            for k in 0..steps {
                let t = k as f64 * h;
                let u = match role {
                    Role::X => field.drift_batch(zc.view(), cond, t, Role::X)?,
                    Role::Y => field.drift_batch(cond, zc.view(), t, Role::Y)?,
                };
                zc.scaled_add(h, &u);
            }
            Ok(zc)
        })
        .collect();
    for (c, block) in chunks.into_iter().enumerate() {
        let lo = c * CHUNK;
        let block = block?;
        z.slice_mut(ndarray::s![lo..lo + block.nrows(), ..]).assign(&block);
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub k: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: -1.5, hi: 1.5, k: 10 }
    }
}

/// The `K²` points `(lo + uΔ, lo + vΔ)`, `Δ = (hi - lo)/(K - 1)`, row-major in `(u, v)`.
pub fn grid_conditions(spec: &GridSpec) -> Result<Array2<f64>> {
    if spec.k < 2 {
        return Err(Error::Config {
            field: "K",
            message: format!("grid needs K >= 2, got {}", spec.k),
        });
    }
    if !(spec.hi > spec.lo) {
        return Err(Error::Config {
            field: "hi",
            message: format!("grid bounds must satisfy lo < hi, got [{}, {}]", spec.lo, spec.hi),
        });
    }
    let step = (spec.hi - spec.lo) / (spec.k - 1) as f64;
    Ok(Array2::from_shape_fn((spec.k * spec.k, 2), |(i, c)| {
        let idx = if c == 0 { i / spec.k } else { i % spec.k };
        spec.lo + idx as f64 * step
    }))
}

/// Decodes each grid point as an embedding with the x-role; point `i` uses
/// seed `seed + i`.
pub fn grid_generate<F: DriftField + ?Sized>(field: &F, spec: &GridSpec, steps: usize, seed: u64) -> Result<Array2<f64>> {
    if field.d_y() != 2 {
        return Err(Error::Dimension(format!("grid decoding needs d_y = 2, got {}", field.d_y())));
    }
    let cond = grid_conditions(spec)?;
    let seeds: Vec<u64> = (0..cond.nrows() as u64).map(|i| seed.wrapping_add(i)).collect();
    euler_sample_batch(field, cond.view(), Role::X, steps, &seeds)
}
