//! Command-line front end: datasets, training runs, hyperparameter grids,
//! symbolic regression reports, linear-representation checks, and the
//! cross-module invariant suite.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use strupkit::bch;
use strupkit::integrate::IntegratorConfig;
use strupkit::linrep;
use strupkit::model::{
    checkpoint_from_json, checkpoint_to_json, init_model, CheckpointMeta, Hyper, Method,
    SympNetModel, DEFAULT_INIT_SCALE,
};
use strupkit::phase::{self, PhaseVector};
use strupkit::poly::{MaeSupport, MultiPoly};
use strupkit::regression;
use strupkit::testutil;
use strupkit::train::{
    grid_rows_to_csv, grid_run, loss_and_grad, mse_loss, train, GridSpec, TrainConfig,
};
use strupkit::zoo::{self, SnapshotDataset};
use strupkit::{Result, StrupError};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// config files

/// Optional JSON config; every field may instead come from a flag, and flags
/// win. Unknown keys are rejected by name.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: Option<u32>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub l2: Option<f64>,
    pub seed: Option<u64>,
    pub log_every: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_steps: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| StrupError::Config(format!("{}: {e}", path.display())))?;
    if let Some(v) = cfg.format_version {
        if v != CONFIG_FORMAT_VERSION {
            return Err(StrupError::Config(format!(
                "unsupported config format_version {v}"
            )));
        }
    }
    Ok(cfg)
}

impl RunConfig {
    fn train_config(&self, flags: &TrainFlags) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: flags.epochs.or(self.epochs).unwrap_or(d.epochs),
            learning_rate: flags.lr.or(self.lr).unwrap_or(d.learning_rate),
            l2_weight: flags.l2.or(self.l2).unwrap_or(d.l2_weight),
            seed: flags.seed.or(self.seed).unwrap_or(d.seed),
            log_every: flags.log_every.or(self.log_every).unwrap_or(d.log_every),
            ..d
        }
    }

    fn integrator_config(&self, abs_tol: Option<f64>, rel_tol: Option<f64>) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            abs_tol: abs_tol.or(self.abs_tol).unwrap_or(d.abs_tol),
            rel_tol: rel_tol.or(self.rel_tol).unwrap_or(d.rel_tol),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
        }
    }
}

fn maybe_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    path.as_ref().map(|p| load_config(p)).unwrap_or_else(|| Ok(RunConfig::default()))
}

// ---------------------------------------------------------------------------
// argument surface

#[derive(Parser)]
#[command(
    name = "strupkit",
    version,
    about = "Symplectic shear networks: train, factor, and symbolically regress Hamiltonian flow maps"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate snapshot pairs from a built-in Hamiltonian system
    GenData(GenDataArgs),
    /// Train a single model on a snapshot dataset
    Train(TrainArgs),
    /// Train every entry of a hyperparameter grid file
    Grid(GridArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Backward-error symbolic regression report for a P-SympNet checkpoint
    Regress(RegressArgs),
    /// Factor random linear symplectic flows into exact shear stacks
    Linrep(LinrepArgs),
    /// Run the cross-module invariant suite
    Check,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    /// System name, e.g. henon-heiles, double-pendulum, fpu(4), dense-linear(2, 7)
    #[arg(long)]
    system: String,
    /// Number of snapshot pairs
    #[arg(long)]
    n: usize,
    #[arg(long)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// P, R, GR, G, LA, or H
    #[arg(long)]
    method: String,
    #[arg(long)]
    layers: usize,
    #[arg(long)]
    degree: Option<u16>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    sublayers: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    data: PathBuf,
    /// Held-out set; defaults to the training set
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
    /// Output directory (checkpoint, report, loss history)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// JSON list of {method, layers, degree|width|sublayers} records
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
    /// Output directory (grid CSV, best checkpoint)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output directory for eval.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    model: PathBuf,
    /// Timestep the model was trained at
    #[arg(long)]
    h: f64,
    #[arg(long, default_value_t = 5)]
    max_order: u32,
    /// Ground-truth Hamiltonian in polynomial text form
    #[arg(long)]
    truth: Option<PathBuf>,
    /// MAE support: union or intersection of monomial supports
    #[arg(long, default_value = "union")]
    support: String,
    /// Output directory (text table, JSON report)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LinrepArgs {
    /// Degrees of freedom n (matrices are 2n x 2n)
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (summary JSON, last checkpoint)
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// dispatch

fn exit_code(e: &StrupError) -> i32 {
    match e {
        StrupError::Dimension(_)
        | StrupError::Argument(_)
        | StrupError::Capability(_)
        | StrupError::Config(_)
        | StrupError::Lookup(_)
        | StrupError::Parse(_) => 1,
        _ => 2,
    }
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if help { 0 } else { 1 };
        }
    };
    let run = match cli.cmd {
        Cmd::GenData(a) => cmd_gen_data(&a),
        Cmd::Train(a) => cmd_train(&a),
        Cmd::Grid(a) => cmd_grid(&a),
        Cmd::Eval(a) => cmd_eval(&a),
        Cmd::Regress(a) => cmd_regress(&a),
        Cmd::Linrep(a) => cmd_linrep(&a),
        Cmd::Check => cmd_check(),
    };
    match run {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

// ---------------------------------------------------------------------------
// commands

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let cfg = maybe_config(&a.config)?;
    let integ = cfg.integrator_config(a.abs_tol, a.rel_tol);
    let system = zoo::builtin_system(&a.system)?;
    let data = zoo::generate_dataset(&system, a.n, a.h, a.seed, &integ)?;
    write_file(&a.out, &data.to_csv())?;
    println!(
        "wrote {} pairs from {} (h = {}) to {}",
        a.n,
        system.name(),
        a.h,
        a.out.display()
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<SnapshotDataset> {
    SnapshotDataset::from_csv(&fs::read_to_string(path)?)
}

fn load_datasets(
    data: &Path,
    test_data: &Option<PathBuf>,
) -> Result<(SnapshotDataset, SnapshotDataset)> {
    let train_set = load_dataset(data)?;
    let test_set = match test_data {
        Some(p) => load_dataset(p)?,
        None => train_set.clone(),
    };
    Ok((train_set, test_set))
}

fn hyper_from_flags(
    layers: usize,
    degree: Option<u16>,
    width: Option<usize>,
    sublayers: Option<usize>,
    init_scale: Option<f64>,
) -> Hyper {
    Hyper {
        layers,
        width,
        degree,
        sublayers,
        init_scale: init_scale.unwrap_or(DEFAULT_INIT_SCALE),
    }
}

fn history_csv(history: &[(usize, f64, f64)]) -> String {
    let mut s = String::from("epoch,train_loss,test_loss\n");
    for (e, tr, te) in history {
        s.push_str(&format!("{e},{tr:.16e},{te:.16e}\n"));
    }
    s
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = maybe_config(&a.flags.config)?;
    let tc = cfg.train_config(&a.flags);
    let (train_set, test_set) = load_datasets(&a.data, &a.test_data)?;
    let method = Method::parse(&a.method)?;
    let hyper = hyper_from_flags(a.layers, a.degree, a.width, a.sublayers, a.init_scale);
    let model = init_model(method, train_set.dim_n, &hyper, tc.seed)?;
    let (trained, report) = train(&model, &train_set, &test_set, &tc)?;
    let meta = CheckpointMeta {
        seed: tc.seed,
        epochs_run: tc.epochs,
        final_train_loss: report.best_train_loss,
        final_test_loss: report.best_test_loss,
        wall_time_seconds: report.wall_time_seconds,
    };
    out_dir(&a.out)?;
    write_file(&a.out.join("model.ckpt.json"), &checkpoint_to_json(&trained, &meta))?;
    write_file(
        &a.out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serialization"),
    )?;
    write_file(&a.out.join("history.csv"), &history_csv(&report.loss_history))?;
    println!(
        "{}-SympNet, {} params: train MSE {:.3e}, test MSE {:.3e} ({:.1}s)",
        method.as_str(),
        trained.param_count(),
        report.best_train_loss,
        report.best_test_loss,
        report.wall_time_seconds
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridEntry {
    method: String,
    layers: usize,
    degree: Option<u16>,
    width: Option<usize>,
    sublayers: Option<usize>,
    init_scale: Option<f64>,
}

fn cmd_grid(a: &GridArgs) -> Result<()> {
    let cfg = maybe_config(&a.flags.config)?;
    let tc = cfg.train_config(&a.flags);
    let (train_set, test_set) = load_datasets(&a.data, &a.test_data)?;
    let text = fs::read_to_string(&a.grid)?;
    let entries: Vec<GridEntry> = serde_json::from_str(&text)
        .map_err(|e| StrupError::Config(format!("{}: {e}", a.grid.display())))?;
    let specs: Result<Vec<GridSpec>> = entries
        .iter()
        .map(|e| {
            Ok(GridSpec {
                method: Method::parse(&e.method)?,
                hyper: hyper_from_flags(e.layers, e.degree, e.width, e.sublayers, e.init_scale),
            })
        })
        .collect();
    let rows = grid_run(&specs?, train_set.dim_n, &train_set, &test_set, &tc)?;
    out_dir(&a.out)?;
    write_file(&a.out.join("grid.csv"), &grid_rows_to_csv(&rows))?;
    let best = rows
        .iter()
        .filter(|r| r.error.is_none() && r.model.is_some())
        .min_by(|x, y| x.test_loss.total_cmp(&y.test_loss));
    if let Some(row) = best {
        let meta = CheckpointMeta {
            seed: row.seed,
            epochs_run: tc.epochs,
            final_train_loss: row.train_loss,
            final_test_loss: row.test_loss,
            wall_time_seconds: row.wall_time_s,
        };
        let model = row.model.as_ref().expect("filtered on model presence");
        write_file(&a.out.join("best.ckpt.json"), &checkpoint_to_json(model, &meta))?;
        println!(
            "{} runs; best {} (k = {}): test MSE {:.3e}",
            rows.len(),
            row.method.as_str(),
            row.hyper.layers,
            row.test_loss
        );
    } else {
        println!("{} runs; all failed", rows.len());
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(SympNetModel, CheckpointMeta)> {
    checkpoint_from_json(&fs::read_to_string(path)?)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.model)?;
    let data = load_dataset(&a.data)?;
    let loss = mse_loss(&model, &data, data.h)?;
    #[derive(Serialize)]
    struct Eval<'a> {
        loss: f64,
        n_pairs: usize,
        h: f64,
        system: &'a str,
    }
    let eval = Eval { loss, n_pairs: data.pairs.len(), h: data.h, system: &data.system };
    out_dir(&a.out)?;
    write_file(
        &a.out.join("eval.json"),
        &serde_json::to_string_pretty(&eval).expect("eval serialization"),
    )?;
    println!("MSE {loss:.6e} on {} pairs ({})", data.pairs.len(), data.system);
    Ok(())
}

fn cmd_regress(a: &RegressArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.model)?;
    let support = match a.support.as_str() {
        "union" => MaeSupport::Union,
        "intersection" => MaeSupport::Intersection,
        other => {
            return Err(StrupError::Argument(format!(
                "unknown MAE support '{other}' (expected union or intersection)"
            )))
        }
    };
    let truth = a
        .truth
        .as_ref()
        .map(|p| -> Result<MultiPoly> {
            MultiPoly::from_text(2 * model.dim_n, &fs::read_to_string(p)?)
        })
        .transpose()?;
    let report = regression::regress(&model, a.h, a.max_order, truth.as_ref(), support)?;
    let table = report.to_table();
    out_dir(&a.out)?;
    write_file(&a.out.join("regress.txt"), &table)?;
    write_file(&a.out.join("regress.json"), &report.to_json())?;
    print!("{table}");
    Ok(())
}

fn cmd_linrep(a: &LinrepArgs) -> Result<()> {
    if a.n == 0 || a.trials == 0 {
        return Err(StrupError::Argument("n and trials must be >= 1".into()));
    }
    let mut rng = testutil::rng(a.seed);
    let d = 2 * a.n;
    let j = phase::SymplecticForm::new(a.n).matrix();
    let mut max_action = 0.0f64;
    let mut max_residual = 0.0f64;
    let mut max_layers = 0usize;
    let mut last_model = None;
    for _ in 0..a.trials {
        let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let sym = (&raw + raw.transpose()) * 0.5;
        let m = strupkit::matfun::expm(&(&j * &sym * a.h));
        let fact = linrep::factor_symplectic(&m)?;
        max_residual = max_residual.max(fact.residual);
        let model = linrep::model_from_symplectic_matrix(&m, a.h)?;
        max_layers = max_layers.max(model.layers.len());
        for _ in 0..20 {
            let x = testutil::random_point(&mut rng, d, 1.0);
            let out = model.forward(&x, a.h)?;
            let want = &m * DVector::from_column_slice(&x);
            for i in 0..d {
                max_action = max_action.max((out[i] - want[i]).abs());
            }
        }
        last_model = Some(model);
    }
    #[derive(Serialize)]
    struct Summary {
        trials: usize,
        dim: usize,
        h: f64,
        seed: u64,
        max_factorization_residual: f64,
        max_action_error: f64,
        max_layer_count: usize,
        layer_bound: usize,
    }
    let summary = Summary {
        trials: a.trials,
        dim: d,
        h: a.h,
        seed: a.seed,
        max_factorization_residual: max_residual,
        max_action_error: max_action,
        max_layer_count: max_layers,
        layer_bound: 4 * a.n,
    };
    out_dir(&a.out)?;
    write_file(
        &a.out.join("linrep.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )?;
    if let Some(model) = last_model {
        write_file(
            &a.out.join("last.ckpt.json"),
            &checkpoint_to_json(&model, &CheckpointMeta::default()),
        )?;
    }
    println!(
        "{} trials, 2n = {d}: max residual {max_residual:.3e}, max action error {max_action:.3e}, layers <= {max_layers} (bound {})",
        a.trials,
        4 * a.n
    );
    if max_action >= 1e-10 || max_residual >= 1e-10 {
        return Err(StrupError::Numeric(
            "linear-representation errors exceed 1e-10".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// invariant suite

fn check_shear_exactness() -> Result<()> {
    let mut model = init_model(Method::P, 2, &Hyper::poly(3, 2), 9)?;
    let params: Vec<f64> = {
        let mut rng = testutil::rng(10);
        (0..model.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect()
    };
    model.set_params(&params)?;
    let basis = model.extract_basis()?;
    let integ = IntegratorConfig::default();
    let mut rng = testutil::rng(11);
    for (layer, ham) in model.layers.iter().zip(&basis) {
        let sys = zoo::quadratic_system("layer", &bch::quadratic_to_matrix(ham)?);
        for _ in 0..5 {
            let x = testutil::random_point(&mut rng, 4, 0.7);
            let fast = layer.forward(&x, 0.1)?;
            let slow = zoo::reference_flow(&sys, &PhaseVector::new(x)?, 0.1, &integ)?;
            for i in 0..4 {
                if (fast[i] - slow.coords()[i]).abs() >= 1e-10 {
                    return Err(StrupError::Numeric("shear flow not exact".into()));
                }
            }
        }
    }
    Ok(())
}

fn small_model(method: Method, seed: u64) -> Result<SympNetModel> {
    let hyper = match method {
        Method::P | Method::H => Hyper::poly(3, 3),
        Method::LA => Hyper::la(2, 2),
        _ => Hyper::width(3, 4),
    };
    init_model(method, 2, &hyper, seed)
}

const METHODS: [Method; 6] =
    [Method::P, Method::R, Method::GR, Method::G, Method::LA, Method::H];

fn check_structure() -> Result<()> {
    let mut rng = testutil::rng(21);
    for method in METHODS {
        let model = small_model(method, 7)?;
        let x = testutil::random_point(&mut rng, 4, 0.5);
        let h = 0.1;
        let map = |v: &[f64]| model.forward(v, h).expect("forward");
        let pv = PhaseVector::new(x.clone())?;
        if phase::symplecticity_residual(&map, &pv, 1e-5)? >= 1e-6 {
            return Err(StrupError::Numeric(format!(
                "symplecticity violated for method {}",
                method.as_str()
            )));
        }
        let back = model.inverse(&model.forward(&x, h)?, h)?;
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err >= 1e-10 {
            return Err(StrupError::Numeric(format!(
                "inverse round-trip error {err:.3e} for method {}",
                method.as_str()
            )));
        }
    }
    Ok(())
}

fn check_gradients() -> Result<()> {
    let system = zoo::builtin_system("harmonic(2)")?;
    let data = zoo::generate_dataset(&system, 8, 0.1, 3, &IntegratorConfig::default())?;
    for method in [Method::P, Method::G] {
        let model = small_model(method, 5)?;
        let (_, grad) = loss_and_grad(&model, &data, data.h, 0.0)?;
        let mut params = model.params();
        let step = 1e-6;
        for i in (0..params.len()).step_by(params.len().div_ceil(8).max(1)) {
            let mut probe = model.clone();
            let orig = params[i];
            params[i] = orig + step;
            probe.set_params(&params)?;
            let up = mse_loss(&probe, &data, data.h)?;
            params[i] = orig - step;
            probe.set_params(&params)?;
            let down = mse_loss(&probe, &data, data.h)?;
            params[i] = orig;
            let fd = (up - down) / (2.0 * step);
            if (grad[i] - fd).abs() >= 1e-5 * (1.0 + fd.abs()) {
                return Err(StrupError::Numeric(format!(
                    "gradient mismatch at parameter {i} for method {}",
                    method.as_str()
                )));
            }
        }
    }
    Ok(())
}

fn check_bch() -> Result<()> {
    let mut rng = testutil::rng(31);
    let basis: Vec<MultiPoly> =
        (0..2).map(|_| testutil::random_quadratic(&mut rng, 2, 1.0)).collect();
    let hs = [0.2, 0.1, 0.05, 0.025];
    let order = 2;
    let errs: Result<Vec<f64>> = hs
        .iter()
        .map(|&h| {
            let approx = bch::backward_error_map(&basis, h, bch::BchOrder::new(order))?;
            let exact = bch::quad_matrix_log_oracle(&basis, h)?;
            Ok(approx.coeff_max_diff(&exact))
        })
        .collect();
    let slope = testutil::fit_loglog_slope(&hs, &errs?);
    let want = (order + 1) as f64;
    if (slope - want).abs() >= 0.3 {
        return Err(StrupError::Numeric(format!(
            "BCH error slope {slope:.2} far from {want}"
        )));
    }
    Ok(())
}

fn check_factorization() -> Result<()> {
    let mut rng = testutil::rng(41);
    let j = phase::SymplecticForm::new(2).matrix();
    for _ in 0..5 {
        let raw = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let sym = (&raw + raw.transpose()) * 0.5;
        let m = strupkit::matfun::expm(&(&j * sym * 0.1));
        let fact = linrep::factor_symplectic(&m)?;
        if fact.residual >= 1e-10 {
            return Err(StrupError::Numeric(format!(
                "factorization residual {:.3e}",
                fact.residual
            )));
        }
        let model = linrep::model_from_symplectic_matrix(&m, 0.1)?;
        let x = testutil::random_point(&mut rng, 4, 1.0);
        let out = model.forward(&x, 0.1)?;
        let want = &m * DVector::from_column_slice(&x);
        for i in 0..4 {
            if (out[i] - want[i]).abs() >= 1e-10 {
                return Err(StrupError::Numeric("linear action mismatch".into()));
            }
        }
    }
    Ok(())
}

fn cmd_check() -> Result<()> {
    let checks: [(&str, fn() -> Result<()>); 5] = [
        ("shear-exactness", check_shear_exactness),
        ("structural-invariants", check_structure),
        ("gradient-fd", check_gradients),
        ("bch-vs-matrix-log", check_bch),
        ("factorization", check_factorization),
    ];
    let mut failed = false;
    for (name, f) in checks {
        match f() {
            Ok(()) => println!("ok   {name}"),
            Err(e) => {
                failed = true;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed {
        Err(StrupError::Numeric("invariant suite failed".into()))
    } else {
        println!("all checks passed");
        Ok(())
    }
}
