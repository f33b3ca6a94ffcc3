//! Generalized Gromov-Wasserstein coupling by alternating minimization.
//!
//! The quadratic objective `Σ π_ij π_i'j' k(x_i, x_i') ‖y_j - y_j'‖²` is
//! linearized through an auxiliary matrix `A` (m × d_y):
//!
//! ```text
//! V(π, A) = ‖A‖² + Σ_ij π_ij (w_i ‖y_j‖² - 2 ⟨A, Φ_i y_jᵀ⟩)
//! ```
//!
//! with `w_i = (1/n) Σ_j k(x_i, x_j)`. For fixed π the minimizer is
//! `A = Φᵀ π Y`; for fixed A the problem in π is linear and is solved
//! entropically by Sinkhorn. Twice `V(π, Φᵀ π Y)` equals the quadratic
//! objective whenever `Φ Φᵀ = G` exactly.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::lowrank::{signed_eigen_factor, GramFactor, SignedFactor};
use crate::sinkhorn::{
    entropy_term, sinkhorn_solve, transport_cost, CostMatrix, SinkhornOptions, TransportPlan,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryMatrix(pub Array2<f64>);

impl AuxiliaryMatrix {
    pub fn zeros(rank: usize, d_y: usize) -> Self {
        Self(Array2::zeros((rank, d_y)))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// Embedding points `y_j` (rows) together with their squared norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    y: Array2<f64>,
    y_norm: Array1<f64>,
}

impl EmbeddingSet {
    pub fn new(y: Array2<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("embedding has non-finite entries".into()));
        }
        let y_norm = y.map_axis(Axis(1), |r| r.dot(&r));
        Ok(Self { y, y_norm })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn y_norm(&self) -> &Array1<f64> {
        &self.y_norm
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.y
    }
}

#[derive(Debug, Clone)]
pub struct GwotResult {
    pub plan: TransportPlan,
    pub aux: AuxiliaryMatrix,
    /// Entropy-regularized objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// `‖A‖² + ⟨C(A), π⟩` after each outer iteration.
    pub unregularized_trace: Vec<f64>,
    pub final_epsilon: f64,
    pub iterations: usize,
    /// Every ε tried by the adaptive schedule and whether it was accepted.
    pub epsilon_history: Vec<(f64, bool)>,
}

impl GwotResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwotOptions {
    /// Stop once the objective decreases by less than `tau`.
    pub tau: f64,
    pub max_outer: usize,
    pub sinkhorn: SinkhornOptions,
}

impl Default for GwotOptions {
    fn default() -> Self {
        Self {
            tau: 1e-6,
            max_outer: 500,
            sinkhorn: SinkhornOptions::default(),
        }
    }
}

fn check_shapes(factor: &GramFactor, aux: Option<&AuxiliaryMatrix>, emb: &EmbeddingSet) -> Result<()> {
    if factor.n() != emb.n() {
        return Err(Error::shape("embedding count", factor.n(), emb.n()));
    }
    if let Some(a) = aux {
        if a.0.dim() != (factor.rank(), emb.dim()) {
            return Err(Error::shape(
                "auxiliary matrix",
                format!("{}x{}", factor.rank(), emb.dim()),
                format!("{}x{}", a.0.nrows(), a.0.ncols()),
            ));
        }
    }
    Ok(())
}

fn check_plan(plan: &TransportPlan, n: usize) -> Result<()> {
    if plan.n() != n {
        return Err(Error::shape("transport plan", n, plan.n()));
    }
    Ok(())
}

/// `C = w Y_normᵀ - 2 Φ A Yᵀ` with the measure-weighted `w`.
pub fn build_cost(factor: &GramFactor, aux: &AuxiliaryMatrix, emb: &EmbeddingSet) -> Result<CostMatrix> {
    check_shapes(factor, Some(aux), emb)?;
    let w = factor.marginal_weights();
    let mut c = outer(&w, emb.y_norm());
    let cross = factor.phi().dot(&aux.0).dot(&emb.y().t());
    c.scaled_add(-2.0, &cross);
    CostMatrix::new(c)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    &col * &row
}

/// `A = Φᵀ π Y`, the exact minimizer of the objective over A for fixed π.
pub fn update_aux(factor: &GramFactor, plan: &TransportPlan, emb: &EmbeddingSet) -> Result<AuxiliaryMatrix> {
    check_shapes(factor, None, emb)?;
    check_plan(plan, factor.n())?;
    Ok(AuxiliaryMatrix(factor.phi().t().dot(&plan.entries().dot(emb.y()))))
}

/// `‖A‖² + ⟨C(A), π⟩`.
pub fn variational_objective(
    factor: &GramFactor,
    plan: &TransportPlan,
    aux: &AuxiliaryMatrix,
    emb: &EmbeddingSet,
) -> Result<f64> {
    check_plan(plan, factor.n())?;
    let c = build_cost(factor, aux, emb)?;
    Ok(aux.frobenius_sq() + transport_cost(&c, plan))
}

/// Literal quadruple sum `Σ π_ij π_i'j' G_ii' ‖y_j - y_j'‖²`. O(n⁴); meant for
/// small n.
pub fn quadratic_objective(g: &GramMatrix, emb: &EmbeddingSet, plan: &TransportPlan) -> Result<f64> {
    let n = g.n();
    if emb.n() != n {
        return Err(Error::shape("embedding count", n, emb.n()));
    }
    check_plan(plan, n)?;
    let p = plan.entries();
    let k = g.entries();
    let y = emb.y();
    let mut dy = Array2::zeros((n, n));
    for j in 0..n {
        for jj in 0..n {
            let d = &y.row(j) - &y.row(jj);
            dy[[j, jj]] = d.dot(&d);
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[[i, j]];
            if pij == 0.0 {
                continue;
            }
            for ii in 0..n {
                let kii = k[[i, ii]];
                for jj in 0..n {
                    total += pij * p[[ii, jj]] * kii * dy[[j, jj]];
                }
            }
        }
    }
    Ok(total)
}

/// One linearized model: how to build the cost from the auxiliary state, how
/// to refit the auxiliary state from a plan, and what objective to record.
trait Linearized {
    type Aux: Clone;
    fn cost(&self, aux: &Self::Aux) -> Result<CostMatrix>;
    fn refit(&self, plan: &TransportPlan) -> Self::Aux;
    /// Unregularized objective at `(plan, aux)`.
    fn value(&self, plan: &TransportPlan, aux: &Self::Aux) -> Result<f64>;
}

struct Standard<'a> {
    factor: &'a GramFactor,
    emb: &'a EmbeddingSet,
}

impl Linearized for Standard<'_> {
    type Aux = AuxiliaryMatrix;

    fn cost(&self, aux: &AuxiliaryMatrix) -> Result<CostMatrix> {
        build_cost(self.factor, aux, self.emb)
    }

    fn refit(&self, plan: &TransportPlan) -> AuxiliaryMatrix {
        AuxiliaryMatrix(self.factor.phi().t().dot(&plan.entries().dot(self.emb.y())))
    }

    fn value(&self, plan: &TransportPlan, aux: &AuxiliaryMatrix) -> Result<f64> {
        variational_objective(self.factor, plan, aux, self.emb)
    }
}

struct Outcome<A> {
    plan: TransportPlan,
    aux: A,
    objective_trace: Vec<f64>,
    unregularized_trace: Vec<f64>,
}

fn alternate<M: Linearized>(model: &M, eps: f64, init: M::Aux, opts: &GwotOptions) -> Result<Outcome<M::Aux>> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    if !(opts.tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {}", opts.tau)));
    }
    let mut aux = init;
    let mut potential: Option<Array1<f64>> = None;
    let mut objective_trace = Vec::new();
    let mut unregularized_trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut plan = None;
    for _ in 0..opts.max_outer.max(1) {
        let cost = model.cost(&aux)?;
        let sol = sinkhorn_solve(
            &cost,
            eps,
            &opts.sinkhorn,
            potential.as_ref(),
        )?;
        aux = model.refit(&sol.plan);
        let unreg = model.value(&sol.plan, &aux)?;
        let reg = unreg + eps * entropy_term(&sol.plan);
        objective_trace.push(reg);
        unregularized_trace.push(unreg);
        potential = Some(sol.f);
        plan = Some(sol.plan);
        if prev - reg < opts.tau {
            break;
        }
        prev = reg;
    }
    Ok(Outcome {
        plan: plan.expect("at least one outer iteration"),
        aux,
        objective_trace,
        unregularized_trace,
    })
}

fn into_result(out: Outcome<AuxiliaryMatrix>, eps: f64) -> GwotResult {
    let iterations = out.objective_trace.len();
    GwotResult {
        plan: out.plan,
        aux: out.aux,
        objective_trace: out.objective_trace,
        unregularized_trace: out.unregularized_trace,
        final_epsilon: eps,
        iterations,
        epsilon_history: vec![(eps, true)],
    }
}

/// Alternating minimization at a fixed ε starting from `A = 0`.
pub fn solve(factor: &GramFactor, emb: &EmbeddingSet, eps: f64, opts: &GwotOptions) -> Result<GwotResult> {
    solve_from(factor, emb, eps, AuxiliaryMatrix::zeros(factor.rank(), emb.dim()), opts)
}

/// Alternating minimization warm-started from `aux`.
pub fn solve_from(
    factor: &GramFactor,
    emb: &EmbeddingSet,
    eps: f64,
    aux: AuxiliaryMatrix,
    opts: &GwotOptions,
) -> Result<GwotResult> {
    check_shapes(factor, Some(&aux), emb)?;
    let model = Standard { factor, emb };
    alternate(&model, eps, aux, opts).map(|o| into_result(o, eps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub eps_init: f64,
    /// Stop once the bracket `|ε_current - ε_stable|` is below `delta`.
    pub delta: f64,
    pub gwot: GwotOptions,
    /// Test hook: treat every ε strictly below this value as a precision
    /// failure without running the solver.
    pub fail_below: Option<f64>,
}

impl AdaptiveOptions {
    pub fn new(eps_init: f64) -> Self {
        Self {
            eps_init,
            delta: eps_init / 1024.0,
            gwot: GwotOptions::default(),
            fail_below: None,
        }
    }
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self::new(0.01)
    }
}

/// Adaptive ε schedule: halve ε after every stable solve (warm-starting A),
/// and on a precision failure move ε back to the midpoint between the failed
/// value and the last stable one. Stops once the interval between the last
/// stable ε and the latest trial is narrower than `delta`, so a failure
/// threshold is bracketed to within `delta`. Returns the solve at the last
/// stable ε.
pub fn solve_adaptive(factor: &GramFactor, emb: &EmbeddingSet, opts: &AdaptiveOptions) -> Result<GwotResult> {
    if !(opts.eps_init > 0.0) || !(opts.delta > 0.0) {
        return Err(Error::Domain(format!(
            "adaptive schedule needs eps_init > 0 and delta > 0, got {} and {}",
            opts.eps_init, opts.delta
        )));
    }
    check_shapes(factor, None, emb)?;
    let mut current = opts.eps_init;
    let mut stable_eps = opts.eps_init;
    let mut stable: Option<GwotResult> = None;
    let mut aux = AuxiliaryMatrix::zeros(factor.rank(), emb.dim());
    let mut history = Vec::new();
    loop {
        let attempt = match opts.fail_below {
            Some(limit) if current < limit => Err(Error::PrecisionFailure {
                epsilon: current,
                reason: "injected failure".into(),
            }),
            _ => solve_from(factor, emb, current, aux.clone(), &opts.gwot),
        };
        match attempt {
            Ok(res) => {
                history.push((current, true));
                aux = res.aux.clone();
                stable_eps = current;
                stable = Some(res);
                current /= 2.0;
            }
            Err(Error::PrecisionFailure { .. }) => {
                history.push((current, false));
                if stable.is_none() {
                    return Err(Error::NoStableEpsilon(current));
                }
                if (stable_eps - current).abs() < opts.delta {
                    break;
                }
                current = 0.5 * (current + stable_eps);
                continue;
            }
            Err(e) => return Err(e),
        }
        if (current - stable_eps).abs() < opts.delta {
            break;
        }
    }
    let mut res = stable.expect("loop exits only after a stable solve");
    res.final_epsilon = stable_eps;
    res.epsilon_history = history;
    Ok(res)
}

struct SignFlipped<'a> {
    factor: &'a SignedFactor,
    emb: &'a EmbeddingSet,
}

#[derive(Clone)]
struct SignedAux {
    positive: Array2<f64>,
    negative: Array2<f64>,
}

impl Linearized for SignFlipped<'_> {
    type Aux = SignedAux;

    fn cost(&self, aux: &SignedAux) -> Result<CostMatrix> {
        let w = self.factor.marginal_weights();
        let mut c = outer(&w, self.emb.y_norm());
        c.mapv_inplace(|v| -v);
        let yt = self.emb.y().t();
        c.scaled_add(2.0, &self.factor.positive.dot(&aux.positive).dot(&yt));
        c.scaled_add(-2.0, &self.factor.negative.dot(&aux.negative).dot(&yt));
        CostMatrix::new(c)
    }

    fn refit(&self, plan: &TransportPlan) -> SignedAux {
        let py = plan.entries().dot(self.emb.y());
        SignedAux {
            positive: self.factor.positive.t().dot(&py),
            negative: self.factor.negative.t().dot(&py),
        }
    }

    /// `-Σ w_i ‖y_j‖² π_ij + ‖A₊‖² - ‖A₋‖²`, i.e. minus half the quadratic
    /// objective under `k'` when the auxiliaries are refit from `plan`.
    fn value(&self, plan: &TransportPlan, aux: &SignedAux) -> Result<f64> {
        let w = self.factor.marginal_weights();
        let lin = CostMatrix::new(outer(&w, self.emb.y_norm()))?;
        let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
        Ok(-transport_cost(&lin, plan) + sq(&aux.positive) - sq(&aux.negative))
    }
}

/// Standard Gromov-Wasserstein through the sign-flipped linearization:
/// with `k'(x, x') = ‖x - x'‖²`, minimize `-Σ k' ‖Δy‖² π π` using the cost
/// `C = -w Y_normᵀ + 2 Φ A Yᵀ` and the unchanged refit `A = Φᵀ π Y`.
///
/// `k'` is indefinite, so Φ A is split exactly into the contributions of the
/// positive and negative spectral parts.
pub fn gwot_sign_flipped_solve(
    dist_sq_gram: &GramMatrix,
    emb: &EmbeddingSet,
    eps: f64,
    opts: &GwotOptions,
) -> Result<GwotResult> {
    if dist_sq_gram.n() != emb.n() {
        return Err(Error::shape("embedding count", dist_sq_gram.n(), emb.n()));
    }
    let factor = signed_eigen_factor(dist_sq_gram);
    let model = SignFlipped {
        factor: &factor,
        emb,
    };
    let init = SignedAux {
        positive: Array2::zeros((factor.positive.ncols(), emb.dim())),
        negative: Array2::zeros((factor.negative.ncols(), emb.dim())),
    };
    let out = alternate(&model, eps, init, opts)?;
    let aux = AuxiliaryMatrix(out.aux.positive);
    Ok(into_result(
        Outcome {
            plan: out.plan,
            aux,
            objective_trace: out.objective_trace,
            unregularized_trace: out.unregularized_trace,
        },
        eps,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::pivoted_cholesky;
    use ndarray::array;

    fn scalar_factor() -> GramFactor {
        GramFactor::from_parts(array![[1.0]], array![1.0], 0.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn cost_scalar_case() {
        let emb = EmbeddingSet::new(array![[2.0]]).unwrap();
        let c = build_cost(&scalar_factor(), &AuxiliaryMatrix(array![[2.0]]), &emb).unwrap();
        assert_eq!(c.entries()[[0, 0]], -4.0);
    }

    #[test]
    fn cost_zero_aux_and_zero_embedding() {
        let g = GramMatrix::new(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let f = pivoted_cholesky(&g, 1.0).unwrap();
        let emb = EmbeddingSet::new(array![[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let c = build_cost(&f, &AuxiliaryMatrix::zeros(f.rank(), 2), &emb).unwrap();
        let w = f.marginal_weights();
        for i in 0..2 {
            for j in 0..2 {
                assert!((c.entries()[[i, j]] - w[i] * emb.y_norm()[j]).abs() < 1e-15);
            }
        }
        let zero = EmbeddingSet::new(Array2::zeros((2, 2))).unwrap();
        let a = AuxiliaryMatrix(Array2::ones((f.rank(), 2)));
        assert!(build_cost(&f, &a, &zero).unwrap().entries().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let emb = EmbeddingSet::new(array![[2.0], [1.0]]).unwrap();
        assert!(matches!(
            build_cost(&scalar_factor(), &AuxiliaryMatrix(array![[2.0]]), &emb),
            Err(Error::ShapeMismatch { .. })
        ));
        let emb = EmbeddingSet::new(array![[2.0]]).unwrap();
        assert!(build_cost(&scalar_factor(), &AuxiliaryMatrix::zeros(1, 2), &emb).is_err());
    }

    #[test]
    fn aux_examples() {
        let emb = EmbeddingSet::new(array![[2.0]]).unwrap();
        let a = update_aux(&scalar_factor(), &TransportPlan::uniform(1), &emb).unwrap();
        assert_eq!(a.0, array![[2.0]]);

        let f = GramFactor::from_parts(Array2::eye(2), array![1.0, 1.0], 0.0, 0.0, 1.0).unwrap();
        let emb = EmbeddingSet::new(array![[1.0], [-1.0]]).unwrap();
        let a = update_aux(&f, &TransportPlan::uniform(2), &emb).unwrap();
        assert_eq!(a.0, array![[0.0], [0.0]]);
        let zero = EmbeddingSet::new(Array2::zeros((2, 3))).unwrap();
        let a = update_aux(&f, &TransportPlan::uniform(2), &zero).unwrap();
        assert!(a.0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn variational_single_point_is_zero() {
        let emb = EmbeddingSet::new(array![[2.0]]).unwrap();
        let v = variational_objective(
            &scalar_factor(),
            &TransportPlan::uniform(1),
            &AuxiliaryMatrix(array![[2.0]]),
            &emb,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn quadratic_examples() {
        let g = GramMatrix::new(Array2::ones((2, 2))).unwrap();
        let emb = EmbeddingSet::new(array![[0.0], [1.0]]).unwrap();
        let q = quadratic_objective(&g, &emb, &TransportPlan::uniform(2)).unwrap();
        assert!((q - 0.5).abs() < 1e-15);

        let same = EmbeddingSet::new(array![[3.0], [3.0]]).unwrap();
        assert_eq!(quadratic_objective(&g, &same, &TransportPlan::uniform(2)).unwrap(), 0.0);
        let zero = GramMatrix::new(Array2::zeros((2, 2))).unwrap();
        assert_eq!(quadratic_objective(&zero, &emb, &TransportPlan::uniform(2)).unwrap(), 0.0);
    }

    #[test]
    fn factor_two_on_small_instance() {
        let g = GramMatrix::new(Array2::ones((2, 2))).unwrap();
        let f = pivoted_cholesky(&g, 1.0).unwrap();
        let emb = EmbeddingSet::new(array![[0.0], [1.0]]).unwrap();
        let plan = TransportPlan::uniform(2);
        let a = update_aux(&f, &plan, &emb).unwrap();
        let v = variational_objective(&f, &plan, &a, &emb).unwrap();
        assert!((2.0 * v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_point_solve() {
        let emb = EmbeddingSet::new(array![[0.5, -1.0]]).unwrap();
        let f = GramFactor::from_parts(array![[1.0]], array![1.0], 0.0, 0.0, 1.0).unwrap();
        let r = solve(&f, &emb, 0.01, &GwotOptions::default()).unwrap();
        assert_eq!(r.plan.entries(), &array![[1.0]]);
        assert!(r.iterations <= 2);
    }

    #[test]
    fn adaptive_rejects_failing_start() {
        let emb = EmbeddingSet::new(array![[0.0], [1.0]]).unwrap();
        let f = pivoted_cholesky(&GramMatrix::new(Array2::eye(2)).unwrap(), 1.0).unwrap();
        let mut o = AdaptiveOptions::new(0.01);
        o.fail_below = Some(1.0);
        assert!(matches!(solve_adaptive(&f, &emb, &o), Err(Error::NoStableEpsilon(_))));
    }

    #[test]
    fn sign_flipped_single_point() {
        let g = GramMatrix::new(array![[0.0]]).unwrap();
        let emb = EmbeddingSet::new(array![[1.0]]).unwrap();
        let r = gwot_sign_flipped_solve(&g, &emb, 0.01, &GwotOptions::default()).unwrap();
        assert_eq!(r.plan.entries(), &array![[1.0]]);
    }
}
