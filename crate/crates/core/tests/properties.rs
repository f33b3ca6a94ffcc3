use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cpfm::dcfm::{
    interpolate, read_checkpoint, write_checkpoint, Architecture, Batch, DriftNet, Role, RoleBatch, Schedule,
};
use cpfm::gwot::{solve, update_aux, variational_objective, AuxiliaryMatrix, EmbeddingSet, GwotOptions};
use cpfm::kernels::{rbf_kernel, Dataset, GramMatrix};
use cpfm::lowrank::pivoted_cholesky;
use cpfm::oracle::random_feasible_plan;
use cpfm::plan_ops::{interpolate_row, PlanSampler};
use cpfm::sinkhorn::{sinkhorn, CostMatrix, SinkhornOptions};

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn points(max_n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max_n).prop_flat_map(move |n| matrix(n, d, -3.0, 3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sinkhorn_plans_are_feasible(c in (2usize..12).prop_flat_map(|n| matrix(n, n, 0.0, 5.0)), eps in 0.05f64..2.0) {
        let p = sinkhorn(&CostMatrix::new(c).unwrap(), eps, &SinkhornOptions::default()).unwrap();
        prop_assert!(p.entries().iter().all(|&v| v >= 0.0));
        prop_assert!(p.max_marginal_residual() <= 1e-9);
    }

    #[test]
    fn aux_refit_minimizes_the_variational_objective(x in points(10, 3), seed in any::<u64>()) {
        let n = x.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GramMatrix::new(x.dot(&x.t())).unwrap();
        let f = pivoted_cholesky(&g, 1.0).unwrap();
        let emb = EmbeddingSet::new(Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0)).unwrap();
        let plan = random_feasible_plan(n, &mut rng);
        let best = update_aux(&f, &plan, &emb).unwrap();
        let v0 = variational_objective(&f, &plan, &best, &emb).unwrap();
        for k in 0..best.0.len() {
            for sign in [-1.0, 1.0] {
                let mut a = best.0.clone();
                a.as_slice_mut().unwrap()[k] += sign * 1e-3;
                let v = variational_objective(&f, &plan, &AuxiliaryMatrix(a), &emb).unwrap();
                prop_assert!(v >= v0 - 1e-12);
            }
        }
    }

    #[test]
    fn gwot_plans_are_feasible_and_traces_descend(x in points(16, 2), eps in 0.05f64..0.5) {
        let n = x.nrows();
        let g = rbf_kernel(&Dataset::unlabeled(x.clone()).unwrap(), 1.0).unwrap();
        let f = pivoted_cholesky(&g, 0.95).unwrap();
        let emb = EmbeddingSet::new(x.mapv(|v| v * 0.5)).unwrap();
        let res = solve(&f, &emb, eps, &GwotOptions::default()).unwrap();
        prop_assert_eq!(res.plan.n(), n);
        prop_assert!(res.plan.max_marginal_residual() <= 1e-8);
        for w in res.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-7);
        }
    }

    #[test]
    fn pivoted_cholesky_respects_eta(x in points(30, 3), sigma in 0.3f64..3.0, eta in 0.5f64..=1.0) {
        let g = rbf_kernel(&Dataset::unlabeled(x).unwrap(), sigma).unwrap();
        let f = pivoted_cholesky(&g, eta).unwrap();
        let trace = g.trace();
        let captured: f64 = f.phi().iter().map(|v| v * v).sum();
        prop_assert!(trace - captured <= (1.0 - eta) * trace + 1e-10 * trace);
        prop_assert!(f.rank() <= g.n());
    }

    #[test]
    fn interpolated_rows_are_convex(x in points(12, 2), q in prop::collection::vec(-4.0f64..4.0, 2), k in 1usize..4, seed in any::<u64>()) {
        let n = x.nrows();
        let subset = Dataset::unlabeled(x).unwrap();
        let plan = random_feasible_plan(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let row = interpolate_row(Array1::from(q).view(), None, &subset, &plan, k.min(n)).unwrap();
        prop_assert!(row.iter().all(|&v| v >= 0.0));
        prop_assert!((row.sum() - 1.0 / n as f64).abs() <= 1e-12);
    }

    #[test]
    fn interpolation_hits_the_boundaries(z0 in prop::collection::vec(-5.0f64..5.0, 3), z1 in prop::collection::vec(-5.0f64..5.0, 3)) {
        let (z0, z1) = (Array1::from(z0), Array1::from(z1));
        for s in [Schedule::Linear, Schedule::Trig] {
            let (a, _) = interpolate(s, z0.view(), z1.view(), 0.0).unwrap();
            let (b, _) = interpolate(s, z0.view(), z1.view(), 1.0).unwrap();
            for i in 0..3 {
                prop_assert!((a[i] - z0[i]).abs() < 1e-12);
                prop_assert!((b[i] - z1[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inactive_head_gets_no_gradient(seed in any::<u64>(), rows in 1usize..6) {
        let arch = Architecture::new(3, 2).with_hidden(vec![8, 8]);
        let net = DriftNet::new(arch, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let mut m = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0));
        let x_role = RoleBatch { t: Array1::linspace(0.1, 0.9, rows), x: m(rows, 3), y: m(rows, 2), target: m(rows, 3) };
        let batch = Batch { x_role, y_role: RoleBatch::empty(3, 2, 2) };
        let (loss, grad) = net.loss_and_grad(&batch).unwrap();
        prop_assert!(loss.sum_x >= 0.0);
        prop_assert!(grad[net.head_range(Role::Y)].iter().all(|&g| g == 0.0));
        prop_assert!(grad[net.head_range(Role::X)].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), width in 1usize..12, depth in 1usize..4) {
        let net = DriftNet::new(Architecture::new(2, 3).with_hidden(vec![width; depth]), seed).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net).unwrap();
        let back = read_checkpoint(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back.params(), net.params());
        prop_assert_eq!(back.arch(), net.arch());
    }

    #[test]
    fn sampler_draws_only_support_cells(perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(), seed in any::<u64>()) {
        let plan = cpfm::sinkhorn::TransportPlan::from_permutation(&perm);
        let mut s = PlanSampler::new(plan, seed);
        for _ in 0..200 {
            match s.sample_pair().unwrap() {
                cpfm::plan_ops::PairDraw::Coupled { x, y } => prop_assert_eq!(perm[x], y),
                other => prop_assert!(false, "unexpected draw {:?}", other),
            }
        }
    }
}
