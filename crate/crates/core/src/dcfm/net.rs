use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::schedule::{check_time, Schedule};
use crate::error::{Error, Result};

pub const TIME_EMBED_DIM: usize = 32;
pub const DEFAULT_ROLE_DIM: usize = 8;
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 256, 256];
/// Floor on `a(t)` when the endpoint parameterization divides by it.
pub const ENDPOINT_A_MIN: f64 = 0.05;

/// Which drift the network produces: `X` (r = 0) moves the x-state given a
/// fixed y, `Y` (r = 1) moves the y-state given a fixed x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    X,
    Y,
}

impl Role {
    pub fn flag(self) -> u8 {
        match self {
            Role::X => 0,
            Role::Y => 1,
        }
    }

    pub fn from_flag(r: u8) -> Result<Self> {
        match r {
            0 => Ok(Role::X),
            1 => Ok(Role::Y),
            other => Err(Error::Domain(format!("role flag must be 0 or 1, got {other}"))),
        }
    }
}

/// How the head output is turned into a drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Parameterization {
    /// The head output is the drift.
    #[default]
    Velocity,
    /// The head predicts the endpoint `ẑ1`; the drift is
    /// `(ȧ z + (a ḃ - ȧ b) ẑ1) / max(a, ENDPOINT_A_MIN)`.
    Endpoint,
}

impl Parameterization {
    pub fn id(self) -> u32 {
        match self {
            Parameterization::Velocity => 0,
            Parameterization::Endpoint => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Parameterization::Velocity),
            1 => Some(Parameterization::Endpoint),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub d_x: usize,
    pub d_y: usize,
    /// Widths of the trunk layers.
    pub hidden: Vec<usize>,
    pub time_dim: usize,
    pub role_dim: usize,
    pub schedule: Schedule,
    pub parameterization: Parameterization,
}

impl Architecture {
    pub fn new(d_x: usize, d_y: usize) -> Self {
        Self {
            d_x,
            d_y,
            hidden: DEFAULT_HIDDEN.to_vec(),
            time_dim: TIME_EMBED_DIM,
            role_dim: DEFAULT_ROLE_DIM,
            schedule: Schedule::Linear,
            parameterization: Parameterization::Velocity,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_parameterization(mut self, p: Parameterization) -> Self {
        self.parameterization = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, message: &str| {
            Err(Error::Config {
                field,
                message: message.to_string(),
            })
        };
        if self.d_x == 0 || self.d_y == 0 {
            return bad("d_x/d_y", "state dimensions must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "need at least one trunk layer of positive width");
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 {
            return bad("time_dim", "time embedding dimension must be even and at least 2");
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.d_x + self.d_y + self.time_dim + self.role_dim
    }

    pub fn out_dim(&self, role: Role) -> usize {
        match role {
            Role::X => self.d_x,
            Role::Y => self.d_y,
        }
    }

    pub fn num_params(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.b + self.out
    }
}

/// Offsets of every parameter block inside the flat parameter vector, in
/// declaration order: role embedding, trunk layers, head_x, head_y.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    role: usize,
    trunk: Vec<Dense>,
    head_x: Dense,
    head_y: Dense,
    total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let mut off = 2 * arch.role_dim;
        let mut dense = |inp: usize, out: usize| {
            let d = Dense {
                w: off,
                b: off + inp * out,
                inp,
                out,
            };
            off = d.end();
            d
        };
        let mut inp = arch.input_dim();
        let mut trunk = Vec::with_capacity(arch.hidden.len());
        for &w in &arch.hidden {
            trunk.push(dense(inp, w));
            inp = w;
        }
        let head_x = dense(inp, arch.d_x);
        let head_y = dense(inp, arch.d_y);
        Self {
            role: 0,
            trunk,
            head_x,
            head_y,
            total: off,
        }
    }

    fn head(&self, role: Role) -> Dense {
        match role {
            Role::X => self.head_x,
            Role::Y => self.head_y,
        }
    }
}

fn weights<'a>(p: &'a [f64], d: &Dense) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
    let w = ArrayView2::from_shape((d.inp, d.out), &p[d.w..d.b]).expect("layout");
    let b = ArrayView1::from(&p[d.b..d.end()]);
    (w, b)
}

fn weights_mut<'a>(p: &'a mut [f64], d: &Dense) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
    let (wp, rest) = p[d.w..d.end()].split_at_mut(d.inp * d.out);
    let w = ArrayViewMut2::from_shape((d.inp, d.out), wp).expect("layout");
    (w, ArrayViewMut1::from(rest))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn silu(v: f64) -> f64 {
    v * sigmoid(v)
}

fn silu_grad(v: f64) -> f64 {
    let s = sigmoid(v);
    s * (1.0 + v * (1.0 - s))
}

/// Sinusoidal features `sin(ω_k t), cos(ω_k t)` with frequencies spaced
/// geometrically from 1 to 100.
pub fn time_embedding(t: f64, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut e = Array1::zeros(dim);
    for k in 0..half {
        let w = if half > 1 {
            (100f64.ln() * k as f64 / (half - 1) as f64).exp()
        } else {
            1.0
        };
        e[k] = (w * t).sin();
        e[half + k] = (w * t).cos();
    }
    e
}

/// Role-tagged training tuples for one direction. For `Role::X` rows hold
/// `(x_t, y1)` and the target is `v_x`; for `Role::Y` rows hold `(x1, y_t)`
/// and the target is `v_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleBatch {
    pub t: Array1<f64>,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub target: Array2<f64>,
}

impl RoleBatch {
    pub fn empty(d_x: usize, d_y: usize, d_out: usize) -> Self {
        Self {
            t: Array1::zeros(0),
            x: Array2::zeros((0, d_x)),
            y: Array2::zeros((0, d_y)),
            target: Array2::zeros((0, d_out)),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x_role: RoleBatch,
    pub y_role: RoleBatch,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x_role.len() + self.y_role.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-direction loss sums of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    pub sum_x: f64,
    pub count_x: usize,
    pub sum_y: f64,
    pub count_y: usize,
}

impl BatchLoss {
    /// Mean per-sample loss over the whole batch.
    pub fn mean(&self) -> f64 {
        let n = self.count_x + self.count_y;
        if n == 0 {
            0.0
        } else {
            (self.sum_x + self.sum_y) / n as f64
        }
    }

    pub fn add(&mut self, other: &BatchLoss) {
        self.sum_x += other.sum_x;
        self.count_x += other.count_x;
        self.sum_y += other.sum_y;
        self.count_y += other.count_y;
    }
}

struct Trace {
    /// Inputs to each trunk layer, then the last hidden state.
    h: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    /// Per-row factor mapping the head output to the drift (endpoint mode).
    scale: Option<Array1<f64>>,
    drift: Array2<f64>,
}

/// Dual-headed drift network: a dense SiLU trunk shared by both directions
/// and one linear head per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftNet {
    arch: Architecture,
    layout: Layout,
    params: Vec<f64>,
}

impl DriftNet {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let params = vec![0.0; layout.total];
        Ok(Self { arch, layout, params })
    }

    /// Dense weights and biases uniform in `±1/√fan_in`, role embeddings
    /// standard normal.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut net.params[..2 * net.arch.role_dim] {
            *v = rng.sample(StandardNormal);
        }
        let layout = net.layout.clone();
        for d in layout.trunk.iter().chain([&layout.head_x, &layout.head_y]) {
            let bound = 1.0 / (d.inp as f64).sqrt();
            for v in &mut net.params[d.w..d.end()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        if params.len() != net.params.len() {
            return Err(Error::shape("parameter vector", net.params.len(), params.len()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Index range of the head parameters for `role` in the flat vector.
    pub fn head_range(&self, role: Role) -> std::ops::Range<usize> {
        let d = self.layout.head(role);
        d.w..d.end()
    }

    fn check_rows(&self, t: &Array1<f64>, x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<()> {
        let n = t.len();
        if x.dim() != (n, self.arch.d_x) {
            return Err(Error::shape("x-state batch", format!("{n}x{}", self.arch.d_x), format!("{:?}", x.dim())));
        }
        if y.dim() != (n, self.arch.d_y) {
            return Err(Error::shape("y-state batch", format!("{n}x{}", self.arch.d_y), format!("{:?}", y.dim())));
        }
        for &tt in t {
            check_time(tt)?;
        }
        Ok(())
    }

    fn input(&self, role: Role, t: &Array1<f64>, x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Array2<f64> {
        let a = &self.arch;
        let n = t.len();
        let mut inp = Array2::zeros((n, a.input_dim()));
        inp.slice_mut(s![.., ..a.d_x]).assign(x);
        inp.slice_mut(s![.., a.d_x..a.d_x + a.d_y]).assign(y);
        let t0 = a.d_x + a.d_y;
        for (i, &tt) in t.iter().enumerate() {
            inp.slice_mut(s![i, t0..t0 + a.time_dim]).assign(&time_embedding(tt, a.time_dim));
        }
        let r0 = t0 + a.time_dim;
        let r = role.flag() as usize * a.role_dim;
        let emb = ArrayView1::from(&self.params[self.layout.role + r..self.layout.role + r + a.role_dim]);
        inp.slice_mut(s![.., r0..]).assign(&emb.broadcast((n, a.role_dim)).expect("broadcast"));
        inp
    }

    fn run(&self, role: Role, t: &Array1<f64>, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Trace {
        let mut h = vec![self.input(role, t, &x, &y)];
        let mut pre = Vec::with_capacity(self.layout.trunk.len());
        for d in &self.layout.trunk {
            let (w, b) = weights(&self.params, d);
            let z = h.last().expect("input").dot(&w) + &b;
            h.push(z.mapv(silu));
            pre.push(z);
        }
        let (w, b) = weights(&self.params, &self.layout.head(role));
        let head = h.last().expect("hidden").dot(&w) + &b;
        let (scale, drift) = match self.arch.parameterization {
            Parameterization::Velocity => (None, head),
            Parameterization::Endpoint => {
                let s = self.arch.schedule;
                let state = match role {
                    Role::X => x,
                    Role::Y => y,
                };
                let mut drift = Array2::zeros(head.raw_dim());
                let mut scale = Array1::zeros(t.len());
                for (i, &tt) in t.iter().enumerate() {
                    let a = s.a(tt).max(ENDPOINT_A_MIN);
                    let c = s.a(tt) * s.b_dot(tt) - s.a_dot(tt) * s.b(tt);
                    scale[i] = c / a;
                    let ad = s.a_dot(tt) / a;
                    let row = &state.row(i) * ad + &head.row(i) * scale[i];
                    drift.row_mut(i).assign(&row);
                }
                (Some(scale), drift)
            }
        };
        Trace {
            h,
            pre,
            scale,
            drift,
        }
    }

    /// Drift for a batch of states; row i uses `(x[i], y[i], t[i])`.
    pub fn forward_batch(
        &self,
        role: Role,
        t: &Array1<f64>,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_rows(t, &x, &y)?;
        Ok(self.run(role, t, x, y).drift)
    }

    /// `u_θ(x, y, t, r)`: a vector in ℝ^{d_x} for `Role::X`, ℝ^{d_y} for `Role::Y`.
    pub fn forward(&self, x: ArrayView1<f64>, y: ArrayView1<f64>, t: f64, role: Role) -> Result<Array1<f64>> {
        let t = Array1::from_elem(1, t);
        let x = x.insert_axis(Axis(0));
        let y = y.insert_axis(Axis(0));
        let out = self.forward_batch(role, &t, x, y)?;
        Ok(out.row(0).to_owned())
    }

    fn check_batch(&self, role: Role, b: &RoleBatch) -> Result<()> {
        self.check_rows(&b.t, &b.x.view(), &b.y.view())?;
        let d = self.arch.out_dim(role);
        if b.target.dim() != (b.len(), d) {
            return Err(Error::shape(
                "target batch",
                format!("{}x{d}", b.len()),
                format!("{:?}", b.target.dim()),
            ));
        }
        Ok(())
    }

    /// Sum of per-sample squared residuals; gradient of `scale * sum` is
    /// accumulated into `grad` when given.
    fn role_pass(&self, role: Role, b: &RoleBatch, scale: f64, grad: Option<&mut [f64]>) -> f64 {
        if b.is_empty() {
            return 0.0;
        }
        let tr = self.run(role, &b.t, b.x.view(), b.y.view());
        let resid = &tr.drift - &b.target;
        let loss = resid.iter().map(|r| r * r).sum();
        let Some(grad) = grad else {
            return loss;
        };

        let mut d_head = resid * (2.0 * scale);
        if let Some(s) = &tr.scale {
            d_head *= &s.view().insert_axis(Axis(1));
        }
        let hd = self.layout.head(role);
        let last = tr.h.last().expect("hidden");
        {
            let (mut gw, mut gb) = weights_mut(grad, &hd);
            gw += &last.t().dot(&d_head);
            gb += &d_head.sum_axis(Axis(0));
        }
        let (w, _) = weights(&self.params, &hd);
        let mut dh = d_head.dot(&w.t());
        for (l, d) in self.layout.trunk.iter().enumerate().rev() {
            let dpre = &dh * &tr.pre[l].mapv(silu_grad);
            {
                let (mut gw, mut gb) = weights_mut(grad, d);
                gw += &tr.h[l].t().dot(&dpre);
                gb += &dpre.sum_axis(Axis(0));
            }
            let (w, _) = weights(&self.params, d);
            dh = dpre.dot(&w.t());
        }
        let a = &self.arch;
        let r0 = a.d_x + a.d_y + a.time_dim;
        let g_role = dh.slice(s![.., r0..]).sum_axis(Axis(0));
        let off = self.layout.role + role.flag() as usize * a.role_dim;
        for (g, v) in grad[off..off + a.role_dim].iter_mut().zip(g_role.iter()) {
            *g += v;
        }
        loss
    }

    pub fn loss(&self, batch: &Batch) -> Result<BatchLoss> {
        self.check_batch(Role::X, &batch.x_role)?;
        self.check_batch(Role::Y, &batch.y_role)?;
        Ok(BatchLoss {
            sum_x: self.role_pass(Role::X, &batch.x_role, 0.0, None),
            count_x: batch.x_role.len(),
            sum_y: self.role_pass(Role::Y, &batch.y_role, 0.0, None),
            count_y: batch.y_role.len(),
        })
    }

    /// Loss sums and the exact gradient of the mean batch loss.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(BatchLoss, Vec<f64>)> {
        self.check_batch(Role::X, &batch.x_role)?;
        self.check_batch(Role::Y, &batch.y_role)?;
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return Ok((BatchLoss::default(), grad));
        }
        let scale = 1.0 / batch.len() as f64;
        let sum_x = self.role_pass(Role::X, &batch.x_role, scale, Some(&mut grad));
        let sum_y = self.role_pass(Role::Y, &batch.y_role, scale, Some(&mut grad));
        Ok((
            BatchLoss {
                sum_x,
                count_x: batch.x_role.len(),
                sum_y,
                count_y: batch.y_role.len(),
            },
            grad,
        ))
    }
}

fn squared_residual(u: &Array1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("target velocity", u.len(), v.len()));
    }
    Ok(u.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `‖u(x_t, y1, t, 0) - v_x‖²`.
pub fn loss_x(net: &DriftNet, t: f64, x_t: ArrayView1<f64>, y1: ArrayView1<f64>, v_x: ArrayView1<f64>) -> Result<f64> {
    squared_residual(&net.forward(x_t, y1, t, Role::X)?, v_x)
}

/// `‖u(x1, y_t, t, 1) - v_y‖²`.
pub fn loss_y(net: &DriftNet, t: f64, x1: ArrayView1<f64>, y_t: ArrayView1<f64>, v_y: ArrayView1<f64>) -> Result<f64> {
    squared_residual(&net.forward(x1, y_t, t, Role::Y)?, v_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small(seed: u64) -> DriftNet {
        DriftNet::new(Architecture::new(3, 2).with_hidden(vec![16, 16]), seed).unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DriftNet::zeros(Architecture::new(3, 2)).unwrap();
        let u = net.forward(array![1.0, 2.0, 3.0].view(), array![0.5, -1.0].view(), 0.3, Role::X).unwrap();
        assert_eq!(u, Array1::<f64>::zeros(3));
        let u = net.forward(array![1.0, 2.0, 3.0].view(), array![0.5, -1.0].view(), 0.3, Role::Y).unwrap();
        assert_eq!(u, Array1::<f64>::zeros(2));
    }

    #[test]
    fn output_dims_and_determinism() {
        let net = small(1);
        let x = array![0.1, -0.2, 0.3];
        let y = array![1.0, 2.0];
        let a = net.forward(x.view(), y.view(), 0.4, Role::X).unwrap();
        let b = net.forward(x.view(), y.view(), 0.4, Role::X).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert_eq!(net.forward(x.view(), y.view(), 0.4, Role::Y).unwrap().len(), 2);
        assert!(net.forward(y.view(), y.view(), 0.4, Role::X).is_err());
        assert!(net.forward(x.view(), y.view(), 1.4, Role::X).is_err());
    }

    #[test]
    fn parameter_count() {
        let arch = Architecture::new(3, 2).with_hidden(vec![16, 16]);
        let inp = 3 + 2 + 32 + 8;
        let expect = 16 + (inp * 16 + 16) + (16 * 16 + 16) + (16 * 3 + 3) + (16 * 2 + 2);
        assert_eq!(arch.num_params(), expect);
    }

    #[test]
    fn loss_examples() {
        let net = DriftNet::zeros(Architecture::new(2, 2)).unwrap();
        let z = array![0.0, 0.0];
        assert_eq!(loss_x(&net, 0.5, z.view(), z.view(), z.view()).unwrap(), 0.0);
        assert_eq!(loss_x(&net, 0.5, z.view(), z.view(), array![-1.0, 1.0].view()).unwrap(), 2.0);
        assert_eq!(loss_y(&net, 0.5, z.view(), z.view(), array![3.0, 4.0].view()).unwrap(), 25.0);
    }

    #[test]
    fn role_masking_is_exact() {
        let net = small(2);
        let batch = Batch {
            x_role: RoleBatch {
                t: array![0.2, 0.7],
                x: array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.0]],
                y: array![[0.5, 0.5], [-0.5, 0.1]],
                target: array![[1.0, 0.0, 0.0], [0.0, 2.0, -1.0]],
            },
            y_role: RoleBatch::empty(3, 2, 2),
        };
        let (_, g) = net.loss_and_grad(&batch).unwrap();
        assert!(g[net.head_range(Role::Y)].iter().all(|v| *v == 0.0));
        assert!(g[net.head_range(Role::X)].iter().any(|v| *v != 0.0));
        // the y-role embedding row is untouched as well
        assert!(g[8..16].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let net = small(3);
        let t = array![0.3];
        let x = array![[0.1, 0.2, 0.3]];
        let y = array![[0.5, 0.5]];
        let target = net.forward_batch(Role::Y, &t, x.view(), y.view()).unwrap();
        let batch = Batch {
            x_role: RoleBatch::empty(3, 2, 3),
            y_role: RoleBatch { t, x, y, target },
        };
        let (loss, g) = net.loss_and_grad(&batch).unwrap();
        assert_eq!(loss.mean(), 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn endpoint_drift_is_exact_for_constant_endpoint() {
        // head_x weights zero, bias c → drift (c - z)/(1 - t) under the linear schedule
        let arch = Architecture::new(1, 1)
            .with_hidden(vec![4])
            .with_parameterization(Parameterization::Endpoint);
        let mut net = DriftNet::zeros(arch).unwrap();
        let r = net.head_range(Role::X);
        net.params_mut()[r.end - 1] = 0.7;
        let u = net.forward(array![-0.5].view(), array![0.0].view(), 0.25, Role::X).unwrap();
        assert!((u[0] - (0.7 + 0.5) / 0.75).abs() < 1e-14);
    }
}
