//! Drawing training pairs from a transport plan, and extending a plan computed
//! on a subset to points outside it.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::Dataset;
use crate::sinkhorn::TransportPlan;

pub const DEFAULT_MIXTURE_WEIGHT: f64 = 0.5;
pub const DEFAULT_KNN: usize = 5;

/// Plan row for an arbitrary point: a softmax(-distance) blend of the plan
/// rows of its `k` nearest subset points (same class when both sides carry
/// labels). The result is a convex combination, so it is non-negative and
/// sums to `1/n`.
pub fn interpolate_row(
    x: ArrayView1<f64>,
    label: Option<i64>,
    subset: &Dataset,
    plan: &TransportPlan,
    k: usize,
) -> Result<Array1<f64>> {
    if plan.n() != subset.len() {
        return Err(Error::shape("plan rows", subset.len(), plan.n()));
    }
    if x.len() != subset.dim() {
        return Err(Error::shape("query dimension", subset.dim(), x.len()));
    }
    if k == 0 {
        return Err(Error::InsufficientNeighbors {
            needed: 0,
            available: subset.len(),
        });
    }
    let same_class = |i: usize| match (label, subset.labels()) {
        (Some(l), Some(ls)) => ls[i] == l,
        _ => true,
    };
    let mut candidates: Vec<(f64, usize)> = (0..subset.len())
        .filter(|&i| same_class(i))
        .map(|i| {
            let d = subset.features().row(i).iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (d.sqrt(), i)
        })
        .collect();
    if candidates.len() < k {
        return Err(Error::InsufficientNeighbors {
            needed: k,
            available: candidates.len(),
        });
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(k);

    let nearest = candidates[0].0;
    let raw: Vec<f64> = candidates.iter().map(|(d, _)| (nearest - d).exp()).collect();
    let z: f64 = raw.iter().sum();
    let mut row = Array1::zeros(plan.n());
    for (w, (_, i)) in raw.iter().zip(&candidates) {
        row.scaled_add(w / z, &plan.entries().row(*i));
    }
    Ok(row)
}

/// Out-of-subset points and their interpolation neighbourhood size.
#[derive(Debug, Clone)]
pub struct InterpolationSource {
    /// Points the plan rows refer to.
    pub subset: Dataset,
    /// The full dataset, from which off-plan points are drawn.
    pub full: Dataset,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairDraw {
    /// `x` indexes the plan's rows (subset points).
    Coupled { x: usize, y: usize },
    /// `x` indexes the full dataset; `y` was drawn from its interpolated row.
    Interpolated { x: usize, y: usize },
}

impl PairDraw {
    pub fn y(&self) -> usize {
        match *self {
            PairDraw::Coupled { y, .. } | PairDraw::Interpolated { y, .. } => y,
        }
    }
}

/// Seeded sampler over a plan, optionally mixing in interpolated rows.
#[derive(Debug, Clone)]
pub struct PlanSampler {
    plan: TransportPlan,
    cdf: Vec<f64>,
    rng: ChaCha8Rng,
    mixture_weight: f64,
    interpolated: Option<InterpolationSource>,
}

fn cumulative(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn draw_index<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl PlanSampler {
    pub fn new(plan: TransportPlan, seed: u64) -> Self {
        let cdf = cumulative(plan.entries().iter().copied());
        Self {
            plan,
            cdf,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mixture_weight: 0.0,
            interpolated: None,
        }
    }

    /// With probability `mixture_weight`, draws come from interpolated rows
    /// of points in `source.full`.
    pub fn with_interpolation(mut self, source: InterpolationSource, mixture_weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mixture_weight) {
            return Err(Error::Config {
                field: "mixture_weight",
                message: format!("must lie in [0, 1], got {mixture_weight}"),
            });
        }
        if source.subset.len() != self.plan.n() {
            return Err(Error::shape("interpolation subset", self.plan.n(), source.subset.len()));
        }
        if source.full.dim() != source.subset.dim() {
            return Err(Error::shape("interpolation dimension", source.subset.dim(), source.full.dim()));
        }
        self.mixture_weight = mixture_weight;
        self.interpolated = Some(source);
        Ok(self)
    }

    pub fn plan(&self) -> &TransportPlan {
        &self.plan
    }

    pub fn mixture_weight(&self) -> f64 {
        self.mixture_weight
    }

    pub fn source(&self) -> Option<&InterpolationSource> {
        self.interpolated.as_ref()
    }

    pub fn sample_pair(&mut self) -> Result<PairDraw> {
        if let Some(src) = &self.interpolated {
            if self.mixture_weight > 0.0 && self.rng.random::<f64>() < self.mixture_weight {
                let x = self.rng.random_range(0..src.full.len());
                let label = src.full.labels().map(|l| l[x]);
                let row = interpolate_row(src.full.features().row(x), label, &src.subset, &self.plan, src.k)?;
                let cdf = cumulative(row.iter().copied());
                let y = draw_index(&cdf, &mut self.rng);
                return Ok(PairDraw::Interpolated { x, y });
            }
        }
        let n = self.plan.n();
        let cell = draw_index(&self.cdf, &mut self.rng);
        Ok(PairDraw::Coupled {
            x: cell / n,
            y: cell % n,
        })
    }
}
