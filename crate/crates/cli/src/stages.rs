use std::fmt;
use std::path::{Path, PathBuf};

use cpfm::config::{load_config, KernelChoice, RunConfig};
use cpfm::dcfm::{load_checkpoint, save_checkpoint, train as train_net, write_training_log, DriftNet, PairData, Role, TrainState};
use cpfm::gwot::{gwot_sign_flipped_solve, solve, solve_adaptive, EmbeddingSet, GwotResult};
use cpfm::io::{load_dataset, load_factor, load_fingerprints, load_matrix, load_table, save_dataset, save_factor, save_fingerprints, save_matrix, save_table, write_json};
use cpfm::kernels::{gaussian_bandwidth, image_kernel, molecule_kernel, neg_sqdist_kernel, rbf_kernel, sqdist_kernel, Dataset, GramMatrix};
use cpfm::lowrank::{eigen_factor, pivoted_cholesky, GramFactor};
use cpfm::metrics::{aggregate, gwot_eval, wasserstein_to_gaussian};
use cpfm::plan_ops::{InterpolationSource, PlanSampler};
use cpfm::sampler::{euler_sample_batch, grid_generate, GridSpec};
use cpfm::sinkhorn::TransportPlan;
use cpfm::synth::{draw_target, make_fingerprints, make_synthetic, FingerprintSpec, MixtureSpec, TargetDist};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{
    EmbedArgs, EvalArgs, FactorArgs, FactorMethod, GridArgs, GwotArgs, KernelArgs, MetricArg, PipelineArgs, ReconstructArgs,
    Stage, SynthArgs, SynthKind, TargetArg, TrainArgs,
};

/// Marginal tolerance when reading a plan back from CSV.
const PLAN_TOL: f64 = 1e-6;

pub const PLAN_FILE: &str = "plan.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const SUBSET_FILE: &str = "subset.csv";

#[derive(Debug)]
pub enum Failure {
    Core(cpfm::Error),
    Invalid(String),
    /// Oracle disagreement.
    Check(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_numerical() => 2,
            Failure::Check(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Invalid(m) | Failure::Check(m) => f.write_str(m),
        }
    }
}

impl From<cpfm::Error> for Failure {
    fn from(e: cpfm::Error) -> Self {
        Failure::Core(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn config_or_default(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    })
}

fn parse_kernel(s: &str) -> Result<KernelChoice> {
    Ok(s.parse::<KernelChoice>()?)
}

fn io_err(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::Invalid(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Input samples plus the raw fingerprints when the molecule kernel is used
/// (their bits double as features).
struct Input {
    data: Dataset,
    fingerprints: Option<Array2<u8>>,
}

fn load_input(path: &Path, kernel: KernelChoice) -> Result<Input> {
    if kernel == KernelChoice::Molecule {
        let (fp, props) = load_fingerprints(path)?;
        let features = fp.mapv(f64::from);
        let data = Dataset::new(features, None, Some(props))?;
        return Ok(Input {
            data,
            fingerprints: Some(fp),
        });
    }
    Ok(Input {
        data: load_dataset(path)?,
        fingerprints: None,
    })
}

fn bandwidth(data: &Dataset, sigma: Option<f64>) -> Result<f64> {
    Ok(match sigma {
        Some(s) => s,
        None => gaussian_bandwidth(data)?,
    })
}

fn gram_matrix(input: &Input, kernel: KernelChoice, sigma: Option<f64>) -> Result<GramMatrix> {
    let ds = &input.data;
    Ok(match kernel {
        KernelChoice::Image => image_kernel(ds, bandwidth(ds, sigma)?)?,
        KernelChoice::Rbf => rbf_kernel(ds, bandwidth(ds, sigma)?)?,
        KernelChoice::Molecule => {
            let fp = input.fingerprints.as_ref().expect("molecule input carries fingerprints");
            let props = ds.properties().ok_or(cpfm::Error::MissingProperties)?;
            molecule_kernel(fp, props)?
        }
        KernelChoice::NegSqdist => neg_sqdist_kernel(ds),
        KernelChoice::Sqdist => sqdist_kernel(ds),
    })
}

/// Pivoted Cholesky for PSD kernels, clipped eigendecomposition for the
/// indefinite ones.
fn factor_for(kernel: KernelChoice, g: &GramMatrix, eta: f64) -> Result<GramFactor> {
    let f = match kernel {
        KernelChoice::Molecule | KernelChoice::Sqdist | KernelChoice::NegSqdist => eigen_factor(g, eta)?,
        KernelChoice::Image | KernelChoice::Rbf => pivoted_cholesky(g, eta)?,
    };
    report_factor(&f);
    Ok(f)
}

fn report_factor(f: &GramFactor) {
    eprintln!(
        "factor: rank {} residual_trace {:e} clipped_mass {:e}",
        f.rank(),
        f.residual_trace(),
        f.clipped_mass()
    );
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    match a.kind {
        SynthKind::Mixture => {
            let spec = MixtureSpec {
                classes: a.classes,
                d_x: a.d_x,
                n: a.n,
                separation: a.separation,
                sigma: a.sigma,
                seed: a.seed,
            };
            save_dataset(&a.out, &make_synthetic(&spec)?)?;
        }
        SynthKind::Fingerprints => {
            let spec = FingerprintSpec {
                n: a.n,
                bits: a.bits,
                density: a.density,
                seed: a.seed,
            };
            let (fp, props) = make_fingerprints(&spec)?;
            save_fingerprints(&a.out, &fp, &props)?;
        }
    }
    Ok(())
}

pub fn kernel(a: &KernelArgs) -> Result<()> {
    let kernel = parse_kernel(&a.kernel)?;
    let input = load_input(&a.data, kernel)?;
    let g = gram_matrix(&input, kernel, a.sigma)?;
    save_matrix(&a.out, g.entries())?;
    Ok(())
}

pub fn factor(a: &FactorArgs) -> Result<()> {
    let g = GramMatrix::new(load_matrix(&a.gram)?)?;
    let f = match a.method {
        FactorMethod::Pivoted => pivoted_cholesky(&g, a.eta)?,
        FactorMethod::Eigen => eigen_factor(&g, a.eta)?,
        FactorMethod::Auto => match pivoted_cholesky(&g, a.eta) {
            Err(cpfm::Error::IndefiniteGram { .. }) => eigen_factor(&g, a.eta)?,
            other => other?,
        },
    };
    save_factor(&a.out, &f)?;
    report_factor(&f);
    Ok(())
}

#[derive(Debug, Serialize)]
struct EpsilonAttempt {
    epsilon: f64,
    stable: bool,
}

#[derive(Debug, Serialize)]
pub struct GwotSummary {
    final_epsilon: f64,
    iterations: usize,
    objective: f64,
    n: usize,
    d_y: usize,
    epsilon_history: Vec<EpsilonAttempt>,
}

fn target_dist(t: TargetArg) -> TargetDist {
    match t {
        TargetArg::Gaussian => TargetDist::Gaussian,
        TargetArg::UniformSquare => TargetDist::UniformSquare,
        TargetArg::Circle => TargetDist::UnitCircle,
    }
}

/// Seeded subset of `max` indices (sorted), or every index when `n <= max`.
fn ot_subset(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_0e7);
    let mut idx = rand::seq::index::sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

fn save_subset(path: &Path, idx: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["index"]).map_err(|e| io_err(path, e))?;
    for i in idx {
        w.write_record([i.to_string()]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn load_subset(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let raw = rec.get(0).unwrap_or("");
        let i = raw
            .trim()
            .parse()
            .map_err(|_| Failure::Invalid(format!("{}: bad index `{raw}` on line {}", path.display(), line + 2)))?;
        out.push(i);
    }
    Ok(out)
}

struct GwotInputs<'a> {
    cfg: &'a RunConfig,
    kernel: KernelChoice,
    sigma: Option<f64>,
    factor: Option<GramFactor>,
    embeddings: Option<Array2<f64>>,
    target: TargetDist,
    d_y: usize,
    fixed_epsilon: Option<f64>,
}

fn write_gwot_outputs(dir: &Path, res: &GwotResult, emb: &EmbeddingSet, subset: &[usize]) -> Result<()> {
    create_dir(dir)?;
    save_matrix(dir.join(PLAN_FILE), res.plan.entries())?;
    save_table(dir.join(EMBEDDINGS_FILE), "y", emb.y())?;
    save_subset(&dir.join(SUBSET_FILE), subset)?;
    let path = dir.join(TRACE_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(["iteration", "objective", "unregularized"]).map_err(|e| io_err(&path, e))?;
    for (i, (r, u)) in res.objective_trace.iter().zip(&res.unregularized_trace).enumerate() {
        w.write_record([(i + 1).to_string(), cpfm::io::fmt_f64(*r), cpfm::io::fmt_f64(*u)])
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    let summary = GwotSummary {
        final_epsilon: res.final_epsilon,
        iterations: res.iterations,
        objective: res.objective(),
        n: emb.n(),
        d_y: emb.dim(),
        epsilon_history: res
            .epsilon_history
            .iter()
            .map(|&(epsilon, stable)| EpsilonAttempt { epsilon, stable })
            .collect(),
    };
    write_json(dir.join(SUMMARY_FILE), &summary)?;
    Ok(())
}

fn run_gwot(input: &Input, inputs: GwotInputs, dir: &Path) -> Result<GwotResult> {
    let cfg = inputs.cfg;
    let subset = ot_subset(input.data.len(), cfg.max_ot_points, cfg.seed);
    let sub = Input {
        data: input.data.select(&subset)?,
        fingerprints: input.fingerprints.as_ref().map(|fp| fp.select(ndarray::Axis(0), &subset)),
    };
    let m = subset.len();
    let emb = match inputs.embeddings {
        Some(y) => EmbeddingSet::new(y)?,
        None => draw_target(inputs.target, m, inputs.d_y, cfg.seed)?,
    };
    if emb.n() != m {
        return Err(Failure::Invalid(format!(
            "embedding set has {} rows but the coupling has {m} data points",
            emb.n()
        )));
    }
    let mut adaptive = cfg.adaptive_options();
    if let Some(e) = inputs.fixed_epsilon {
        adaptive.eps_init = e;
    }
    let res = if inputs.kernel == KernelChoice::NegSqdist {
        let g = gram_matrix(&sub, KernelChoice::Sqdist, None)?;
        gwot_sign_flipped_solve(&g, &emb, adaptive.eps_init, &adaptive.gwot)?
    } else {
        let factor = match inputs.factor {
            Some(f) if f.n() == m => f,
            Some(f) => {
                return Err(Failure::Invalid(format!(
                    "factor has {} rows but the coupling has {m} data points",
                    f.n()
                )))
            }
            None => factor_for(inputs.kernel, &gram_matrix(&sub, inputs.kernel, inputs.sigma)?, cfg.eta)?,
        };
        match inputs.fixed_epsilon {
            Some(e) => solve(&factor, &emb, e, &adaptive.gwot)?,
            None => solve_adaptive(&factor, &emb, &adaptive)?,
        }
    };
    write_gwot_outputs(dir, &res, &emb, &subset)?;
    Ok(res)
}

fn report_gwot(res: &GwotResult) {
    println!(
        "final_epsilon {:e} iterations {} objective {:.10e}",
        res.final_epsilon,
        res.iterations,
        res.objective()
    );
}

pub fn gwot(a: &GwotArgs) -> Result<()> {
    let mut cfg = config_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let kernel = match &a.kernel {
        Some(k) => parse_kernel(k)?,
        None => cfg.kernel,
    };
    let input = load_input(&a.data, kernel)?;
    let factor = a.factor.as_deref().map(load_factor).transpose()?;
    let embeddings = a.embeddings.as_deref().map(load_table).transpose()?;
    let inputs = GwotInputs {
        cfg: &cfg,
        kernel,
        sigma: a.sigma.or(cfg.sigma),
        factor,
        embeddings,
        target: a.target.map(target_dist).unwrap_or(cfg.target_dist),
        d_y: a.dim.unwrap_or(cfg.d_y),
        fixed_epsilon: a.fixed_epsilon,
    };
    let res = run_gwot(&input, inputs, &a.out)?;
    report_gwot(&res);
    Ok(())
}

fn run_train(input: &Input, gwot_dir: &Path, cfg: &RunConfig, out: &Path, log: &Path) -> Result<DriftNet> {
    let plan = TransportPlan::new(load_matrix(gwot_dir.join(PLAN_FILE))?, PLAN_TOL)?;
    let y = load_table(gwot_dir.join(EMBEDDINGS_FILE))?;
    let subset_idx = load_subset(&gwot_dir.join(SUBSET_FILE))?;
    if subset_idx.iter().any(|&i| i >= input.data.len()) {
        return Err(Failure::Invalid(format!(
            "subset indices exceed the {} data rows",
            input.data.len()
        )));
    }
    let subset = input.data.select(&subset_idx)?;
    if plan.n() != subset.len() || y.nrows() != subset.len() {
        return Err(Failure::Invalid(format!(
            "plan ({}), embeddings ({}) and subset ({}) disagree in size",
            plan.n(),
            y.nrows(),
            subset.len()
        )));
    }
    let arch = cfg.architecture(input.data.dim());
    if arch.d_y != y.ncols() {
        return Err(Failure::Invalid(format!(
            "config d_y = {} but the embeddings have {} columns",
            arch.d_y,
            y.ncols()
        )));
    }
    let net = DriftNet::new(arch, cfg.seed)?;
    let mut tc = cfg.train_config();
    tc.seed = cfg.seed.wrapping_add(1);
    let mut state = TrainState::new(net, tc)?;
    let mut sampler = PlanSampler::new(plan, cfg.seed.wrapping_add(2));
    if subset.len() < input.data.len() {
        let source = InterpolationSource {
            subset: subset.clone(),
            full: input.data.clone(),
            k: cfg.knn_k,
        };
        sampler = sampler.with_interpolation(source, cfg.mixture_weight)?;
    }
    let data = PairData {
        x: subset.features().view(),
        y: y.view(),
    };
    let mut logs = train_net(&mut state, &mut sampler, &data, |l| {
        eprintln!("epoch {} loss_x {:.6} loss_y {:.6}", l.epoch, l.mean_loss_x, l.mean_loss_y);
    })?;
    if cfg.deterministic {
        for l in &mut logs {
            l.wall_seconds = 0.0;
        }
    }
    write_training_log(log, &logs)?;
    save_checkpoint(out, &state.net)?;
    Ok(state.net)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = config_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
        cfg.validate()?;
    }
    let input = load_input(&a.data, cfg.kernel)?;
    let log = a.log.clone().unwrap_or_else(|| a.out.with_extension("log.csv"));
    run_train(&input, &a.gwot, &cfg, &a.out, &log)?;
    Ok(())
}

fn row_seeds(n: usize, seed: u64) -> Vec<u64> {
    (0..n as u64).map(|i| seed.wrapping_add(i)).collect()
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let data = load_dataset(&a.data)?;
    let y = euler_sample_batch(&net, data.features().view(), Role::Y, a.steps, &row_seeds(data.len(), a.seed))?;
    save_table(&a.out, "y", &y)?;
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let y = load_table(&a.embeddings)?;
    let x = euler_sample_batch(&net, y.view(), Role::X, a.steps, &row_seeds(y.nrows(), a.seed))?;
    save_table(&a.out, "f", &x)?;
    Ok(())
}

pub fn grid(a: &GridArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let spec = GridSpec {
        lo: a.lo,
        hi: a.hi,
        k: a.k,
    };
    let x = grid_generate(&net, &spec, a.steps, a.seed)?;
    save_table(&a.out, "f", &x)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport<'a> {
    metric: &'static str,
    mean: f64,
    /// Absent for a single run.
    std: Option<f64>,
    #[serde(rename = "R")]
    runs: usize,
    runs_values: Vec<f64>,
    config: &'a RunConfig,
}

fn metric_name(m: MetricArg) -> &'static str {
    match m {
        MetricArg::WassersteinGaussian => "wasserstein_gaussian",
        MetricArg::Gwot => "gwot",
        MetricArg::Fid => "fid",
        MetricArg::Lpips => "lpips",
    }
}

/// Run `r` samples embeddings with row seeds `seed + r·n + i` and, for the
/// Gaussian metric, the reference with seed `seed + r`.
fn evaluate(metric: MetricArg, net: &DriftNet, input: &Input, cfg: &RunConfig, runs: usize, seed: u64) -> Result<(Vec<f64>, Option<f64>, f64)> {
    if matches!(metric, MetricArg::Fid | MetricArg::Lpips) {
        return Err(Failure::Invalid(format!(
            "metric `{}` is unavailable: it needs a pretrained image network",
            metric_name(metric)
        )));
    }
    if runs == 0 {
        return Err(Failure::Invalid("need at least one run".into()));
    }
    let n = input.data.len();
    let gram = match metric {
        MetricArg::Gwot => Some(gram_matrix(input, cfg.kernel, cfg.sigma)?),
        _ => None,
    };
    let mut values = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let base = seed.wrapping_add(r.wrapping_mul(n as u64));
        let y = euler_sample_batch(net, input.data.features().view(), Role::Y, cfg.steps_t, &row_seeds(n, base))?;
        let v = match &gram {
            Some(g) => gwot_eval(g, y.view())?,
            None => wasserstein_to_gaussian(y.view(), cfg.metric_epsilon, seed.wrapping_add(r))?,
        };
        values.push(v);
    }
    let (mean, std) = if runs >= 2 {
        let (m, s) = aggregate(&values)?;
        (m, Some(s))
    } else {
        (cpfm::metrics::mean(&values)?, None)
    };
    Ok((values, std, mean))
}

fn eval_report(metric: MetricArg, net: &DriftNet, input: &Input, cfg: &RunConfig, runs: usize, seed: u64) -> Result<String> {
    let (values, std, mean) = evaluate(metric, net, input, cfg, runs, seed)?;
    let report = EvalReport {
        metric: metric_name(metric),
        mean,
        std,
        runs,
        runs_values: values,
        config: cfg,
    };
    Ok(serde_json::to_string_pretty(&report).expect("serializable"))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut cfg = config_or_default(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let net = load_checkpoint(&a.model)?;
    let input = load_input(&a.data, cfg.kernel)?;
    let runs = a.runs.unwrap_or(cfg.eval_runs);
    let text = eval_report(a.metric, &net, &input, &cfg, runs, cfg.seed)?;
    println!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, format!("{text}\n")).map_err(|e| io_err(out, e))?;
    }
    Ok(())
}

pub fn oracle(seed: u64) -> Result<()> {
    let reports = cpfm::oracle::run_all(seed)?;
    println!("{:<40} {:>12} {:>12}  result", "oracle", "max error", "tolerance");
    let mut failed = 0;
    for r in &reports {
        let verdict = if r.passed() { "pass" } else { "FAIL" };
        println!("{:<40} {:>12.3e} {:>12.3e}  {verdict}", r.name, r.max_error, r.tolerance);
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} oracle check(s) failed")));
    }
    Ok(())
}

pub const GRAM_FILE: &str = "gram.csv";
pub const FACTOR_DIR: &str = "factor";
pub const GWOT_DIR: &str = "gwot";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_FILE: &str = "eval.json";

fn stage_path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = config_or_default(a.config.as_deref())?;
    let input = load_input(&a.data, cfg.kernel)?;
    create_dir(&a.out)?;
    std::fs::write(
        stage_path(&a.out, "config.json"),
        serde_json::to_string_pretty(&cfg).expect("serializable") + "\n",
    )
    .map_err(|e| io_err(&a.out, e))?;

    let gram_path = stage_path(&a.out, GRAM_FILE);
    let factor_dir = stage_path(&a.out, FACTOR_DIR);
    let gwot_dir = stage_path(&a.out, GWOT_DIR);
    let subset = ot_subset(input.data.len(), cfg.max_ot_points, cfg.seed);
    let indefinite = cfg.kernel == KernelChoice::NegSqdist;

    if a.from <= Stage::Kernel && !indefinite {
        let sub = Input {
            data: input.data.select(&subset)?,
            fingerprints: input.fingerprints.as_ref().map(|fp| fp.select(ndarray::Axis(0), &subset)),
        };
        let g = gram_matrix(&sub, cfg.kernel, cfg.sigma)?;
        save_matrix(&gram_path, g.entries())?;
        eprintln!("kernel: {} x {}", g.n(), g.n());
    }
    if a.from <= Stage::Factor && !indefinite {
        let g = GramMatrix::new(load_matrix(&gram_path)?)?;
        let f = factor_for(cfg.kernel, &g, cfg.eta)?;
        save_factor(&factor_dir, &f)?;
    }
    if a.from <= Stage::Gwot {
        let factor = if indefinite { None } else { Some(load_factor(&factor_dir)?) };
        let inputs = GwotInputs {
            cfg: &cfg,
            kernel: cfg.kernel,
            sigma: cfg.sigma,
            factor,
            embeddings: None,
            target: cfg.target_dist,
            d_y: cfg.d_y,
            fixed_epsilon: None,
        };
        let res = run_gwot(&input, inputs, &gwot_dir)?;
        report_gwot(&res);
    }
    let model = stage_path(&a.out, MODEL_FILE);
    let net = if a.from <= Stage::Train {
        run_train(&input, &gwot_dir, &cfg, &model, &stage_path(&a.out, TRAIN_LOG_FILE))?
    } else {
        load_checkpoint(&model)?
    };
    let mut reports = Vec::new();
    for metric in [MetricArg::WassersteinGaussian, MetricArg::Gwot] {
        let text = eval_report(metric, &net, &input, &cfg, cfg.eval_runs, cfg.seed)?;
        println!("{text}");
        reports.push(serde_json::from_str::<serde_json::Value>(&text).expect("valid json"));
    }
    let eval_path = stage_path(&a.out, EVAL_FILE);
    std::fs::write(&eval_path, serde_json::to_string_pretty(&reports).expect("serializable") + "\n")
        .map_err(|e| io_err(&eval_path, e))?;
    Ok(())
}
