//! Entropic linear optimal transport between uniform marginals, solved in the
//! log domain with dual potentials.
//!
//! The plan is parameterized as
//! `log π_ij = -2 log n + (f_i + g_j - C_ij) / ε`. Kernels are only ever
//! formed shifted by the current potentials, so no unshifted `exp(-C/ε)`
//! appears.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Coupling between two n-point uniform empirical measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan(Array2<f64>);

impl TransportPlan {
    /// Checks squareness, non-negativity and that every row and column sums
    /// to `1/n` within `tol`.
    pub fn new(entries: Array2<f64>, tol: f64) -> Result<Self> {
        let plan = Self::new_unchecked(entries)?;
        let r = plan.max_marginal_residual();
        if r > tol {
            return Err(Error::Domain(format!(
                "plan marginals deviate from 1/n by {r:e} (> {tol:e})"
            )));
        }
        Ok(plan)
    }

    /// Square, finite and non-negative; marginals are not checked.
    pub fn new_unchecked(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(Error::shape("transport plan", format!("{r}x{r}"), format!("{r}x{c}")));
        }
        if let Some(v) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("invalid plan entry {v}")));
        }
        Ok(Self(entries))
    }

    pub fn uniform(n: usize) -> Self {
        Self(Array2::from_elem((n, n), 1.0 / (n * n) as f64))
    }

    /// `(1/n) P` for the permutation `i ↦ perm[i]`.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut p = Array2::zeros((n, n));
        for (i, &j) in perm.iter().enumerate() {
            p[[i, j]] = 1.0 / n as f64;
        }
        Self(p)
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

    pub fn max_marginal_residual(&self) -> f64 {
        let target = 1.0 / self.n() as f64;
        let rows = self.0.sum_axis(Axis(1));
        let cols = self.0.sum_axis(Axis(0));
        rows.iter()
            .chain(cols.iter())
            .map(|s| (s - target).abs())
            .fold(0.0, f64::max)
    }
}

/// Finite n×n cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(Error::shape("cost matrix", format!("{r}x{r}"), format!("{r}x{c}")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("cost matrix has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// L∞ bound on the marginal residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Finish with Newton steps on the dual when the scaling iterations
    /// stall (only for n up to `NEWTON_MAX_N`).
    pub newton: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            newton: true,
        }
    }
}

pub const NEWTON_MAX_N: usize = 2048;
/// Scaling iterations between checks for a stalled residual.
const STALL_WINDOW: usize = 200;
const NEWTON_STEPS: usize = 60;

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `-ε log Σ_k exp((pot_k - c_k)/ε) - ε log n`, computed with a max shift.
fn soft_min(costs: ArrayView1<f64>, pot: &Array1<f64>, eps: f64, log_n: f64) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (c, p) in costs.iter().zip(pot.iter()) {
        m = m.max((p - c) / eps);
    }
    let s: f64 = costs
        .iter()
        .zip(pot.iter())
        .map(|(c, p)| ((p - c) / eps - m).exp())
        .sum();
    -eps * (m + s.ln() - log_n)
}

fn update(cost_rows: &Array2<f64>, pot: &Array1<f64>, eps: f64, log_n: f64) -> Array1<f64> {
    let out: Vec<f64> = cost_rows
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| soft_min(row, pot, eps, log_n))
        .collect();
    Array1::from(out)
}

fn assemble(cost: &Array2<f64>, f: &Array1<f64>, g: &Array1<f64>, eps: f64) -> Array2<f64> {
    let n = cost.nrows();
    let log_mass = -2.0 * (n as f64).ln();
    let mut plan = Array2::zeros((n, n));
    plan.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for j in 0..n {
                row[j] = (log_mass + (f[i] + g[j] - cost[[i, j]]) / eps).exp();
            }
        });
    plan
}

fn precision(eps: f64, reason: impl Into<String>) -> Error {
    Error::PrecisionFailure {
        epsilon: eps,
        reason: reason.into(),
    }
}

/// Scalings beyond `e^ABSORB` are folded back into the potentials.
const ABSORB: f64 = 40.0;

struct Scaled {
    f: Array1<f64>,
    g: Array1<f64>,
    k: Array2<f64>,
    kt: Array2<f64>,
    u: Array1<f64>,
    v: Array1<f64>,
}

impl Scaled {
    fn new(c: &Array2<f64>, f: Array1<f64>, g: Array1<f64>, eps: f64) -> Self {
        let n = f.len();
        let k = assemble(c, &f, &g, eps);
        let kt = k.t().as_standard_layout().into_owned();
        Self {
            f,
            g,
            k,
            kt,
            u: Array1::ones(n),
            v: Array1::ones(n),
        }
    }

    fn potentials(&self, eps: f64) -> (Array1<f64>, Array1<f64>) {
        (
            &self.f + &self.u.mapv(|u| eps * u.ln()),
            &self.g + &self.v.mapv(|v| eps * v.ln()),
        )
    }

    /// One scaling sweep; `None` when a kernel sum under- or overflows.
    fn sweep(&mut self, inv_n: f64) -> Option<f64> {
        let v: Array1<f64> = self.kt.dot(&self.u).mapv(|s| inv_n / s);
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return None;
        }
        let kv = self.k.dot(&v);
        let residual = self
            .u
            .iter()
            .zip(kv.iter())
            .map(|(u, s)| (u * s - inv_n).abs())
            .fold(0.0, f64::max);
        let u: Array1<f64> = kv.mapv(|s| inv_n / s);
        if u.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return None;
        }
        self.v = v;
        self.u = u;
        Some(residual)
    }

    fn needs_absorb(&self) -> bool {
        self.u.iter().chain(self.v.iter()).any(|x| x.ln().abs() > ABSORB)
    }
}

/// Sinkhorn, optionally warm-started from a row potential `f` (the column
/// potential is recomputed from it first). Iterates on scalings of a kernel
/// shifted by the current potentials; whenever a scaling grows past
/// `e^ABSORB` or a kernel sum leaves the floating-point range, the scalings
/// are absorbed and a log-domain sweep restarts from the potentials.
pub fn sinkhorn_solve(
    cost: &CostMatrix,
    eps: f64,
    opts: &SinkhornOptions,
    warm: Option<&Array1<f64>>,
) -> Result<SinkhornSolution> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    let n = cost.n();
    let c = cost.entries();
    let ct = c.t().as_standard_layout().into_owned();
    let log_n = (n as f64).ln();
    let inv_n = 1.0 / n as f64;

    let f0 = match warm {
        Some(f0) if f0.len() == n => f0.clone(),
        Some(f0) => return Err(Error::shape("warm-start potential", n, f0.len())),
        None => Array1::zeros(n),
    };
    let g0 = update(&ct, &f0, eps, log_n);
    let mut state = Scaled::new(c, f0, g0, eps);

    let use_newton = opts.newton && n <= NEWTON_MAX_N;
    let mut window_start = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        residual = match state.sweep(inv_n) {
            Some(r) => r,
            None => {
                let (f, _) = state.potentials(eps);
                let g = update(&ct, &f, eps, log_n);
                let f_next = update(c, &g, eps, log_n);
                if f_next.iter().chain(g.iter()).any(|v| !v.is_finite()) {
                    return Err(precision(eps, format!("non-finite potential at iteration {it}")));
                }
                // Row sums of the plan at (f, g) are (1/n)·exp((f - f_next)/ε).
                let r = f
                    .iter()
                    .zip(f_next.iter())
                    .map(|(a, b)| (inv_n * ((a - b) / eps).exp() - inv_n).abs())
                    .fold(0.0, f64::max);
                if r <= opts.tol {
                    return finish(c, f, g, eps, it);
                }
                state = Scaled::new(c, f_next, g, eps);
                r
            }
        };
        if !residual.is_finite() {
            return Err(precision(eps, "non-finite marginal residual"));
        }
        if residual <= opts.tol {
            let (f, g) = state.potentials(eps);
            return finish(c, f, g, eps, it);
        }
        let stalled = it % STALL_WINDOW == 0 && residual > 0.5 * window_start;
        if it % STALL_WINDOW == 0 {
            window_start = residual;
        }
        if use_newton && (stalled || it == opts.max_iter) {
            let (f, g) = state.potentials(eps);
            if let Some((f, g)) = newton_polish(c, f, g, eps, opts.tol) {
                return finish(c, f, g, eps, it);
            }
        }
        if state.needs_absorb() {
            let (f, g) = state.potentials(eps);
            state = Scaled::new(c, f, g, eps);
        }
    }
    Err(precision(
        eps,
        format!(
            "marginal residual {residual:e} above {:e} after {} iterations",
            opts.tol, opts.max_iter
        ),
    ))
}

fn finish(c: &Array2<f64>, f: Array1<f64>, g: Array1<f64>, eps: f64, iterations: usize) -> Result<SinkhornSolution> {
    let plan = assemble(c, &f, &g, eps);
    if plan.iter().any(|v| !v.is_finite()) {
        return Err(precision(eps, "non-finite plan entry"));
    }
    let plan = TransportPlan(plan);
    let residual = plan.max_marginal_residual();
    Ok(SinkhornSolution {
        plan,
        f,
        g,
        iterations,
        residual,
    })
}

fn marginal_gaps(p: &Array2<f64>) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>, f64) {
    let inv_n = 1.0 / p.nrows() as f64;
    let r = p.sum_axis(Axis(1));
    let col = p.sum_axis(Axis(0));
    let ra = r.mapv(|v| v - inv_n);
    let rb = col.mapv(|v| v - inv_n);
    let worst = ra.iter().chain(rb.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    (r, col, ra, rb, worst)
}

/// Newton's method on the dual `ε Σ π_ij - ⟨f, 1/n⟩ - ⟨g, 1/n⟩`. The
/// g-block is eliminated, leaving the n×n Schur complement
/// `diag(π1) - π diag(πᵀ1)⁻¹ πᵀ`, whose null vector 1 (the potential gauge)
/// is removed by a rank-one shift. Returns `None` if the residual does not
/// reach `tol`.
fn newton_polish(c: &Array2<f64>, mut f: Array1<f64>, mut g: Array1<f64>, eps: f64, tol: f64) -> Option<(Array1<f64>, Array1<f64>)> {
    let n = c.nrows();
    let mut p = assemble(c, &f, &g, eps);
    let (mut r, mut col, mut ra, mut rb, mut worst) = marginal_gaps(&p);
    for _ in 0..NEWTON_STEPS {
        if !worst.is_finite() {
            return None;
        }
        if worst <= tol {
            return Some((f, g));
        }
        if col.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let scaled = &p / &col.view().insert_axis(Axis(0));
        let mut schur = -scaled.dot(&p.t());
        let shift = r.sum() / (n * n) as f64;
        for i in 0..n {
            schur[[i, i]] += r[i];
        }
        schur.mapv_inplace(|v| v + shift);
        let rhs = -eps * &ra + &(scaled.dot(&rb) * eps);
        let df = solve_spd(&schur, &rhs)?;
        let dg = (-eps * &rb - p.t().dot(&df)) / &col;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let f_try = &f + &(&df * t);
            let g_try = &g + &(&dg * t);
            let p_try = assemble(c, &f_try, &g_try, eps);
            let gaps = marginal_gaps(&p_try);
            if gaps.4.is_finite() && gaps.4 < worst {
                f = f_try;
                g = g_try;
                p = p_try;
                (r, col, ra, rb, worst) = gaps;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    (worst <= tol).then_some((f, g))
}

/// Cholesky solve, retried with a growing diagonal shift when the matrix is
/// numerically singular (nearly disconnected plan supports).
fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let v = DVector::from_iterator(n, b.iter().copied());
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    for shift in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += shift * scale;
        }
        if let Some(ch) = shifted.cholesky() {
            let x = ch.solve(&v);
            if x.iter().all(|v| v.is_finite()) {
                return Some(Array1::from_iter(x.iter().copied()));
            }
        }
    }
    None
}

pub fn sinkhorn(cost: &CostMatrix, eps: f64, opts: &SinkhornOptions) -> Result<TransportPlan> {
    sinkhorn_solve(cost, eps, opts, None).map(|s| s.plan)
}

/// Sinkhorn with ε-annealing: start at the cost range, divide by `factor`
/// until `eps` is reached, warm-starting each stage from the last potentials.
pub fn sinkhorn_annealed(
    cost: &CostMatrix,
    eps: f64,
    factor: f64,
    opts: &SinkhornOptions,
) -> Result<SinkhornSolution> {
    let c = cost.entries();
    let range = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - c.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut stages = Vec::new();
    let mut e = eps;
    while e < range && factor > 1.0 {
        stages.push(e);
        e *= factor;
    }
    stages.reverse();
    let mut warm: Option<Array1<f64>> = None;
    for &e in &stages {
        let stage_opts = SinkhornOptions {
            tol: opts.tol.max(1e-6 / cost.n() as f64),
            ..*opts
        };
        let s = sinkhorn_solve(cost, e, &stage_opts, warm.as_ref())?;
        warm = Some(s.f);
    }
    sinkhorn_solve(cost, eps, opts, warm.as_ref())
}

/// `⟨C, π⟩ + ε Σ π_ij (log π_ij - 1)` with `0 log 0 = 0`.
pub fn entropic_ot_value(cost: &CostMatrix, plan: &TransportPlan, eps: f64) -> f64 {
    transport_cost(cost, plan) + eps * entropy_term(plan)
}

pub fn transport_cost(cost: &CostMatrix, plan: &TransportPlan) -> f64 {
    cost.0.iter().zip(plan.0.iter()).map(|(c, p)| c * p).sum()
}

/// `Σ π_ij (log π_ij - 1)`, zero entries contributing nothing.
pub fn entropy_term(plan: &TransportPlan) -> f64 {
    plan.0
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p.ln() - 1.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cm(a: Array2<f64>) -> CostMatrix {
        CostMatrix::new(a).unwrap()
    }

    #[test]
    fn single_point() {
        let p = sinkhorn(&cm(array![[5.0]]), 0.3, &Default::default()).unwrap();
        assert_eq!(p.entries(), &array![[1.0]]);
    }

    #[test]
    fn zero_cost_is_uniform() {
        let p = sinkhorn(&cm(Array2::zeros((2, 2))), 1.0, &Default::default()).unwrap();
        for v in p.entries() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let eps = 0.1;
        let p = sinkhorn(&cm(array![[0.0, 1.0], [1.0, 0.0]]), eps, &Default::default()).unwrap();
        let diag = 0.5 / (1.0 + (-1.0 / eps).exp());
        assert!((p.entries()[[0, 0]] - diag).abs() < 1e-12);
        assert!((p.entries()[[0, 0]] - 0.4999773).abs() < 1e-7);
        assert!((p.entries()[[0, 1]] - 2.27e-5).abs() < 1e-7);
    }

    #[test]
    fn tiny_epsilon_stays_finite() {
        let c = cm(array![[0.0, 50.0, 3.0], [2.0, 0.0, 80.0], [9.0, 1.0, 0.0]]);
        let s = sinkhorn_solve(&c, 1e-3, &Default::default(), None).unwrap();
        assert!(s.plan.max_marginal_residual() <= 1e-9);
    }

    #[test]
    fn nonconvergence_is_precision_failure() {
        let c = cm(array![[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [4.0, 1.0, 0.5]]);
        let opts = SinkhornOptions {
            tol: 1e-14,
            max_iter: 2,
            newton: false,
        };
        assert!(matches!(
            sinkhorn(&c, 1.0, &opts),
            Err(Error::PrecisionFailure { .. })
        ));
        assert!(sinkhorn(&c, 0.0, &Default::default()).is_err());
    }

    #[test]
    fn stalled_scaling_is_finished_by_newton() {
        // plain scaling sits near 1e-5 residual here for tens of thousands of iterations
        let c = cm(array![[0.0, 2.0, 1.0], [1.0, 0.0, 3.0], [4.0, 1.0, 0.5]]);
        let plain = SinkhornOptions { newton: false, ..Default::default() };
        assert!(sinkhorn(&c, 0.05, &plain).is_err());
        let s = sinkhorn_solve(&c, 0.05, &Default::default(), None).unwrap();
        assert!(s.plan.max_marginal_residual() <= 1e-9);
        assert!(s.iterations < 1000);
    }

    #[test]
    fn warm_start_converges_quickly() {
        let c = cm(array![[0.0, 2.0, 1.0], [1.0, 0.0, 3.0], [4.0, 1.0, 0.5]]);
        let cold = sinkhorn_solve(&c, 0.3, &Default::default(), None).unwrap();
        let warm = sinkhorn_solve(&c, 0.3, &Default::default(), Some(&cold.f)).unwrap();
        assert!(warm.iterations <= 2);
        let annealed = sinkhorn_annealed(&c, 0.3, 4.0, &Default::default()).unwrap();
        for (a, b) in annealed.plan.entries().iter().zip(cold.plan.entries()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn entropic_value_examples() {
        let eps = 0.7;
        let v = entropic_ot_value(&cm(Array2::zeros((2, 2))), &TransportPlan::uniform(2), eps);
        assert!((v - eps * ((0.25f64).ln() - 1.0)).abs() < 1e-15);
        let c = cm(array![[0.0, 1.0], [1.0, 0.0]]);
        assert!((transport_cost(&c, &TransportPlan::uniform(2)) - 0.5).abs() < 1e-15);
        // zero entries contribute nothing
        let p = TransportPlan::from_permutation(&[1, 0]);
        let v = entropic_ot_value(&c, &p, 1.0);
        assert!((v - (1.0 + 2.0 * 0.5 * ((0.5f64).ln() - 1.0))).abs() < 1e-15);
    }

    #[test]
    fn plan_validation() {
        assert!(TransportPlan::new(array![[0.5, 0.0], [0.0, 0.5]], 1e-12).is_ok());
        assert!(TransportPlan::new(array![[0.5, 0.1], [0.0, 0.4]], 1e-12).is_err());
        assert!(TransportPlan::new_unchecked(array![[-0.1]]).is_err());
        assert!(CostMatrix::new(array![[f64::NAN]]).is_err());
    }
}
