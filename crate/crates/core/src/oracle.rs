//! Brute-force references for tiny instances.
//!
//! Nothing here calls the Sinkhorn solver: entropic plans come from a Newton
//! method on an explicit parameterization of the transport polytope, random
//! feasible plans from plain matrix balancing, and permutation couplings from
//! exhaustive enumeration.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gwot::{quadratic_objective, update_aux, variational_objective, EmbeddingSet};
use crate::kernels::GramMatrix;
use crate::lowrank::pivoted_cholesky;
use crate::sinkhorn::TransportPlan;

/// Zero-marginal directions `E_ab - E_a,last - E_last,b + E_last,last`.
fn polytope_basis(n: usize) -> Vec<Array2<f64>> {
    let last = n - 1;
    let mut basis = Vec::new();
    for a in 0..last {
        for b in 0..last {
            let mut m = Array2::zeros((n, n));
            m[[a, b]] += 1.0;
            m[[a, last]] -= 1.0;
            m[[last, b]] -= 1.0;
            m[[last, last]] += 1.0;
            basis.push(m);
        }
    }
    basis
}

fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[piv, col]] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap([piv, k], [col, k]);
            }
            b.swap(piv, col);
        }
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[[row, k]] * x[k]).sum();
        x[row] = (b[row] - s) / a[[row, row]];
    }
    Some(x)
}

fn entropic_value(c: &Array2<f64>, p: &Array2<f64>, eps: f64) -> f64 {
    c.iter()
        .zip(p.iter())
        .map(|(c, p)| c * p + eps * p * (p.ln() - 1.0))
        .sum()
}

/// Minimizer of `⟨C, π⟩ + ε Σ π (log π - 1)` over the uniform transport
/// polytope for n ≤ 3, by damped Newton in the polytope's affine coordinates
/// until the reduced gradient norm is at most 1e-10.
pub fn entropic_ot_bruteforce(c: &Array2<f64>, eps: f64) -> Result<TransportPlan> {
    let n = c.nrows();
    if n == 0 || n > 3 || c.ncols() != n {
        return Err(Error::Domain(format!("brute-force OT needs 1 <= n <= 3, got {n}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    let mut p = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
    if n == 1 {
        return TransportPlan::new_unchecked(p);
    }
    let basis = polytope_basis(n);
    let k = basis.len();
    for _ in 0..500 {
        let score = c + &p.mapv(|v| eps * v.ln());
        let grad = Array1::from_iter(basis.iter().map(|b| (b * &score).sum()));
        if grad.dot(&grad).sqrt() <= 1e-10 {
            break;
        }
        let inv_p = p.mapv(|v| eps / v);
        let hess = Array2::from_shape_fn((k, k), |(a, b)| (&basis[a] * &basis[b] * &inv_p).sum());
        let step = solve_dense(hess, -&grad).ok_or_else(|| Error::Domain("singular Newton system".into()))?;
        let dir = basis
            .iter()
            .zip(step.iter())
            .fold(Array2::<f64>::zeros((n, n)), |acc, (b, s)| acc + &(b * *s));
        let f0 = entropic_value(c, &p, eps);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let trial = &p + &(&dir * t);
            if trial.iter().all(|v| *v > 0.0) && entropic_value(c, &trial, eps) <= f0 + 1e-4 * t * slope {
                p = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-30 {
                // Armijo cannot improve further at machine precision.
                return TransportPlan::new_unchecked(p);
            }
        }
    }
    TransportPlan::new_unchecked(p)
}

/// Generalized objective at the coupling `(1/n) P_σ`, evaluated directly.
pub fn permutation_objective(g: &Array2<f64>, y: &Array2<f64>, perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut total = 0.0;
    for i in 0..n {
        for ii in 0..n {
            let d: f64 = y
                .row(perm[i])
                .iter()
                .zip(y.row(perm[ii]).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += g[[i, ii]] * d;
        }
    }
    total / (n * n) as f64
}

/// Every permutation of `0..n` (Heap's algorithm), n ≤ 8.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Objective of every permutation coupling, in enumeration order.
pub fn permutation_objectives(g: &GramMatrix, y: &Array2<f64>) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = g.n();
    if n > 8 {
        return Err(Error::Domain(format!("permutation scan limited to n <= 8, got {n}")));
    }
    if y.nrows() != n {
        return Err(Error::shape("embedding count", n, y.nrows()));
    }
    Ok(permutations(n)
        .into_iter()
        .map(|p| {
            let v = permutation_objective(g.entries(), y, &p);
            (p, v)
        })
        .collect())
}

/// Best permutation coupling and its objective.
pub fn permutation_coupling_scan(g: &GramMatrix, y: &Array2<f64>) -> Result<(Vec<usize>, f64)> {
    permutation_objectives(g, y)?
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Domain("empty permutation scan".into()))
}

/// Random strictly positive matrix balanced to uniform marginals by
/// alternating row/column normalization.
pub fn random_feasible_plan<R: Rng>(n: usize, rng: &mut R) -> TransportPlan {
    let mut p = Array2::from_shape_fn((n, n), |_| {
        let z: f64 = rng.sample(StandardNormal);
        (2.0 * z).exp()
    });
    let target = 1.0 / n as f64;
    for _ in 0..10_000 {
        for mut row in p.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v * target / s);
        }
        for mut col in p.columns_mut() {
            let s = col.sum();
            col.mapv_inplace(|v| v * target / s);
        }
        let worst = p
            .rows()
            .into_iter()
            .map(|r| (r.sum() - target).abs())
            .fold(0.0, f64::max);
        if worst < 1e-15 {
            break;
        }
    }
    TransportPlan::new_unchecked(p).expect("positive finite entries")
}

/// Largest `|2 V(π, A*(π)) - Q(π)| / max(1, |Q(π)|)` over random feasible
/// plans, with `A*(π) = Φᵀ π Y` and Φ an exact pivoted Cholesky factor of G.
pub fn identity_check_factor2(g: &GramMatrix, y: &Array2<f64>, trials: usize, seed: u64) -> Result<f64> {
    let factor = pivoted_cholesky(g, 1.0)?;
    let emb = EmbeddingSet::new(y.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let plan = random_feasible_plan(g.n(), &mut rng);
        let aux = update_aux(&factor, &plan, &emb)?;
        let v = variational_objective(&factor, &plan, &aux, &emb)?;
        let q = quadratic_objective(g, &emb, &plan)?;
        worst = worst.max((2.0 * v - q).abs() / q.abs().max(1.0));
    }
    Ok(worst)
}

fn sq_dist_matrix(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        x.row(i)
            .iter()
            .zip(x.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

/// Relative gap between the squared-loss GW objective
/// `Σ (‖Δx‖² - ‖Δy‖²)² π π` and its expansion into the two marginal-only
/// quartic terms minus `2 Σ ‖Δx‖² ‖Δy‖² π π`. Requires uniform marginals.
pub fn gw_expand_check(x: &Array2<f64>, y: &Array2<f64>, plan: &TransportPlan) -> Result<f64> {
    let n = plan.n();
    if n > 6 {
        return Err(Error::Domain(format!("expansion check limited to n <= 6, got {n}")));
    }
    if x.nrows() != n || y.nrows() != n {
        return Err(Error::shape("point count", n, format!("{}/{}", x.nrows(), y.nrows())));
    }
    let dx = sq_dist_matrix(x);
    let dy = sq_dist_matrix(y);
    let p = plan.entries();
    let mu = 1.0 / n as f64;

    let mut direct = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            for ii in 0..n {
                for jj in 0..n {
                    let w = p[[i, j]] * p[[ii, jj]];
                    let diff = dx[[i, ii]] - dy[[j, jj]];
                    direct += diff * diff * w;
                    cross += dx[[i, ii]] * dy[[j, jj]] * w;
                }
            }
        }
    }
    let quartic_x: f64 = dx.iter().map(|d| d * d * mu * mu).sum();
    let quartic_y: f64 = dy.iter().map(|d| d * d * mu * mu).sum();
    let expanded = quartic_x + quartic_y - 2.0 * cross;
    Ok((direct - expanded).abs() / direct.abs().max(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

fn random_points<R: Rng>(n: usize, d: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

/// Runs every oracle on seeded random instances.
pub fn run_all(seed: u64) -> Result<Vec<OracleReport>> {
    use crate::sinkhorn::{sinkhorn, CostMatrix, SinkhornOptions};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();

    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = 2 + trial % 2;
        let eps = [1.0, 0.5, 0.2, 0.1][trial % 4];
        let c = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
        let brute = entropic_ot_bruteforce(&c, eps)?;
        let opts = SinkhornOptions {
            tol: 1e-13,
            max_iter: 100_000,
            newton: false,
        };
        let fast = sinkhorn(&CostMatrix::new(c)?, eps, &opts)?;
        for (a, b) in brute.entries().iter().zip(fast.entries()) {
            worst = worst.max((a - b).abs());
        }
    }
    reports.push(OracleReport {
        name: "sinkhorn vs brute-force entropic OT",
        max_error: worst,
        tolerance: 1e-6,
    });

    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = 2 + trial % 7;
        let d_y = 1 + trial % 3;
        let x = random_points(n, 3, &mut rng);
        let g = GramMatrix::new(x.dot(&x.t()))?;
        let y = random_points(n, d_y, &mut rng);
        worst = worst.max(identity_check_factor2(&g, &y, 50, seed.wrapping_add(trial as u64))?);
    }
    reports.push(OracleReport {
        name: "factor-2 variational identity",
        max_error: worst,
        tolerance: 1e-9,
    });

    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = 2 + trial % 5;
        let x = random_points(n, 2, &mut rng);
        let y = random_points(n, 2, &mut rng);
        let plan = random_feasible_plan(n, &mut rng);
        worst = worst.max(gw_expand_check(&x, &y, &plan)?);
    }
    reports.push(OracleReport {
        name: "GW quartic expansion",
        max_error: worst,
        tolerance: 1e-10,
    });
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bruteforce_closed_form() {
        let eps = 0.1;
        let p = entropic_ot_bruteforce(&array![[0.0, 1.0], [1.0, 0.0]], eps).unwrap();
        let diag = 0.5 / (1.0 + (-1.0 / eps).exp());
        assert!((p.entries()[[0, 0]] - diag).abs() < 1e-9);
    }

    #[test]
    fn bruteforce_trivial_cases() {
        let p = entropic_ot_bruteforce(&Array2::zeros((3, 3)), 0.5).unwrap();
        assert!(p.entries().iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-15));
        let p = entropic_ot_bruteforce(&array![[4.0]], 0.5).unwrap();
        assert_eq!(p.entries(), &array![[1.0]]);
        assert!(entropic_ot_bruteforce(&Array2::zeros((4, 4)), 0.5).is_err());
    }

    #[test]
    fn heap_permutations_are_complete() {
        let mut all = permutations(4);
        assert_eq!(all.len(), 24);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 24);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn scan_trivial_cases() {
        let g = GramMatrix::new(array![[1.0]]).unwrap();
        let (p, v) = permutation_coupling_scan(&g, &array![[3.0]]).unwrap();
        assert_eq!((p, v), (vec![0], 0.0));

        let g = GramMatrix::new(Array2::ones((3, 3))).unwrap();
        let y = Array2::from_elem((3, 2), 1.5);
        assert!(permutation_objectives(&g, &y).unwrap().iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn two_cluster_scan_prefers_class_consistent() {
        // classes {0,1} and {2,3}; y pairs {0,1} and {2,3} are far apart
        let g = GramMatrix::new(array![
            [1.0, 0.9, 0.0, 0.0],
            [0.9, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.9],
            [0.0, 0.0, 0.9, 1.0]
        ])
        .unwrap();
        let y = array![[0.0], [0.1], [10.0], [10.1]];
        let all = permutation_objectives(&g, &y).unwrap();
        let best = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let consistent = |p: &[usize]| (p[0] < 2) == (p[1] < 2) && (p[2] < 2) == (p[3] < 2);
        for (p, v) in &all {
            assert_eq!((v - best).abs() < 1e-12, consistent(p), "{p:?} {v}");
        }
    }

    #[test]
    fn factor2_trivial_cases() {
        let g = GramMatrix::new(Array2::zeros((3, 3))).unwrap();
        let y = array![[1.0], [2.0], [0.0]];
        assert_eq!(identity_check_factor2(&g, &y, 5, 1).unwrap(), 0.0);
        let g = GramMatrix::new(array![[2.0]]).unwrap();
        assert!(identity_check_factor2(&g, &array![[1.0]], 5, 1).unwrap() < 1e-12);
    }

    #[test]
    fn expansion_degenerate_cases() {
        let x = Array2::zeros((4, 2));
        let y = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 1.0]];
        let plan = TransportPlan::from_permutation(&[2, 0, 3, 1]);
        assert!(gw_expand_check(&x, &y, &plan).unwrap() <= 1e-12);
        assert!(gw_expand_check(&y, &y, &TransportPlan::uniform(4)).unwrap() <= 1e-12);
    }

    #[test]
    fn balanced_plans_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..8 {
            let p = random_feasible_plan(n, &mut rng);
            assert!(p.max_marginal_residual() < 1e-14);
        }
    }
}
