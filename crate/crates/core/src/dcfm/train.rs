use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::net::{Architecture, Batch, BatchLoss, DriftNet, Role, RoleBatch};
use super::optim::{AdamW, AdamWConfig};
use crate::error::{Error, Result};
use crate::plan_ops::{PairDraw, PlanSampler};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Probability of drawing the y-direction role (r = 1).
    pub alpha: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Optimizer steps per epoch; defaults to `ceil(n / batch)` for an n-row plan.
    pub steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lr: 1e-4,
            weight_decay: 1e-4,
            batch: 128,
            epochs: 200,
            seed: 0,
            steps_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, message: String| Err(Error::Config { field, message });
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", format!("must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.lr > 0.0) {
            return bad("lr", format!("must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", format!("must be non-negative, got {}", self.weight_decay));
        }
        if self.batch == 0 {
            return bad("batch", "must be positive".into());
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch", "must be positive".into());
        }
        Ok(())
    }
}

/// Network, optimizer moments and the training random stream.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: DriftNet,
    pub optimizer: AdamW,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(net: DriftNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(
            net.num_params(),
            AdamWConfig {
                lr: config.lr,
                weight_decay: config.weight_decay,
                ..Default::default()
            },
        );
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            net,
            optimizer,
            config,
            rng,
        })
    }

    /// One AdamW update on `batch`; returns the loss before the update.
    pub fn step(&mut self, batch: &Batch) -> Result<BatchLoss> {
        let (loss, grad) = self.net.loss_and_grad(batch)?;
        self.optimizer.step(self.net.params_mut(), &grad)?;
        Ok(loss)
    }
}

/// Endpoint values for plan draws: `x` rows follow the plan rows, `y` rows
/// the plan columns.
#[derive(Debug, Clone, Copy)]
pub struct PairData<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// NaN when the epoch drew no sample of that role.
    pub mean_loss_x: f64,
    pub mean_loss_y: f64,
    pub wall_seconds: f64,
}

struct Rows {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    target: Vec<f64>,
}

impl Rows {
    fn new() -> Self {
        Self {
            t: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            target: Vec::new(),
        }
    }

    fn finish(self, d_x: usize, d_y: usize, d_out: usize) -> RoleBatch {
        let n = self.t.len();
        RoleBatch {
            t: Array1::from(self.t),
            x: Array2::from_shape_vec((n, d_x), self.x).expect("row-major"),
            y: Array2::from_shape_vec((n, d_y), self.y).expect("row-major"),
            target: Array2::from_shape_vec((n, d_out), self.target).expect("row-major"),
        }
    }
}

fn normal<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws `size` role-tagged tuples: a plan pair `(x1, y1)`, role
/// `r ~ Bernoulli(alpha)`, `t ~ U[0, 1]` and a standard-normal start point in
/// the moving space.
pub fn draw_batch<R: Rng>(
    rng: &mut R,
    arch: &Architecture,
    sampler: &mut PlanSampler,
    data: &PairData,
    alpha: f64,
    size: usize,
) -> Result<Batch> {
    let (d_x, d_y) = (arch.d_x, arch.d_y);
    if data.x.ncols() != d_x || data.y.ncols() != d_y {
        return Err(Error::shape(
            "pair data",
            format!("d_x={d_x}, d_y={d_y}"),
            format!("d_x={}, d_y={}", data.x.ncols(), data.y.ncols()),
        ));
    }
    if data.x.nrows() != sampler.plan().n() || data.y.nrows() != sampler.plan().n() {
        return Err(Error::shape("pair data rows", sampler.plan().n(), data.x.nrows().min(data.y.nrows())));
    }
    let s = arch.schedule;
    let mut xs = Rows::new();
    let mut ys = Rows::new();
    for _ in 0..size {
        let draw = sampler.sample_pair()?;
        let x1: ArrayView1<f64> = match draw {
            PairDraw::Coupled { x, .. } => data.x.row(x),
            PairDraw::Interpolated { x, .. } => sampler
                .source()
                .expect("interpolated draws need a source")
                .full
                .features()
                .row(x),
        };
        let y1 = data.y.row(draw.y());
        let role = if rng.random::<f64>() < alpha { Role::Y } else { Role::X };
        let t: f64 = rng.random();
        let (a, b, ad, bd) = (s.a(t), s.b(t), s.a_dot(t), s.b_dot(t));
        match role {
            Role::X => {
                let z0 = normal(rng, d_x);
                xs.t.push(t);
                for (z, e) in z0.iter().zip(x1.iter()) {
                    xs.x.push(a * z + b * e);
                    xs.target.push(ad * z + bd * e);
                }
                xs.y.extend(y1.iter());
            }
            Role::Y => {
                let z0 = normal(rng, d_y);
                ys.t.push(t);
                for (z, e) in z0.iter().zip(y1.iter()) {
                    ys.y.push(a * z + b * e);
                    ys.target.push(ad * z + bd * e);
                }
                ys.x.extend(x1.iter());
            }
        }
    }
    Ok(Batch {
        x_role: xs.finish(d_x, d_y, d_x),
        y_role: ys.finish(d_x, d_y, d_y),
    })
}

/// Runs the configured number of epochs, calling `on_epoch` after each.
pub fn train(
    state: &mut TrainState,
    sampler: &mut PlanSampler,
    data: &PairData,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    let cfg = state.config;
    let steps = cfg
        .steps_per_epoch
        .unwrap_or_else(|| sampler.plan().n().div_ceil(cfg.batch));
    let start = Instant::now();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut total = BatchLoss::default();
        for _ in 0..steps {
            let arch = state.net.arch().clone();
            let batch = draw_batch(&mut state.rng, &arch, sampler, data, cfg.alpha, cfg.batch)?;
            total.add(&state.step(&batch)?);
        }
        let mean = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
        let log = EpochLog {
            epoch,
            mean_loss_x: mean(total.sum_x, total.count_x),
            mean_loss_y: mean(total.sum_y, total.count_y),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

pub fn write_training_log(path: impl AsRef<Path>, logs: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let io = |e| csv_err(path, e);
    w.write_record(["epoch", "mean_loss_x", "mean_loss_y", "wall_seconds"]).map_err(io)?;
    for l in logs {
        w.write_record([
            l.epoch.to_string(),
            format!("{:.16e}", l.mean_loss_x),
            format!("{:.16e}", l.mean_loss_y),
            format!("{:.6}", l.wall_seconds),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sinkhorn::TransportPlan;
    use ndarray::array;

    #[test]
    fn alpha_one_draws_only_y_role() {
        let arch = Architecture::new(2, 1).with_hidden(vec![8]);
        let mut sampler = PlanSampler::new(TransportPlan::uniform(3), 1);
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let y = array![[0.0], [1.0], [2.0]];
        let data = PairData { x: x.view(), y: y.view() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = draw_batch(&mut rng, &arch, &mut sampler, &data, 1.0, 64).unwrap();
        assert_eq!(b.x_role.len(), 0);
        assert_eq!(b.y_role.len(), 64);
        let b = draw_batch(&mut rng, &arch, &mut sampler, &data, 0.0, 64).unwrap();
        assert_eq!(b.y_role.len(), 0);
    }

    #[test]
    fn targets_follow_the_interpolant() {
        // at t, v = x1 - x0 and x_t = (1 - t) x0 + t x1, so x_t + (1 - t) v = x1
        let arch = Architecture::new(1, 1).with_hidden(vec![4]);
        let mut sampler = PlanSampler::new(TransportPlan::from_permutation(&[0]), 2);
        let x = array![[3.0]];
        let y = array![[-2.0]];
        let data = PairData { x: x.view(), y: y.view() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = draw_batch(&mut rng, &arch, &mut sampler, &data, 0.5, 200).unwrap();
        for i in 0..b.x_role.len() {
            let t = b.x_role.t[i];
            let back = b.x_role.x[[i, 0]] + (1.0 - t) * b.x_role.target[[i, 0]];
            assert!((back - 3.0).abs() < 1e-12);
            assert_eq!(b.x_role.y[[i, 0]], -2.0);
        }
        for i in 0..b.y_role.len() {
            let t = b.y_role.t[i];
            let back = b.y_role.y[[i, 0]] + (1.0 - t) * b.y_role.target[[i, 0]];
            assert!((back + 2.0).abs() < 1e-12);
            assert_eq!(b.y_role.x[[i, 0]], 3.0);
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = TrainConfig { alpha: 1.2, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { field: "alpha", .. })));
        let bad = TrainConfig { batch: 0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { field: "batch", .. })));
    }
}
