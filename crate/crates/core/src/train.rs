//! Full-batch MSE training with Adam, and the hyperparameter grid runner.
//!
//! The loss is the plain sum of squared residuals over the dataset (not the
//! mean), mirroring the objective it implements; learning rates therefore
//! scale inversely with the dataset size.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StrupError};
use crate::model::{init_model, Hyper, Method, SympNetModel};
use crate::zoo::SnapshotDataset;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// History granularity; the final epoch is always logged.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50_000,
            learning_rate: 0.002,
            l2_weight: 0.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(StrupError::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(StrupError::Config("learning_rate must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(StrupError::Config("log_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    /// `(epoch, train_loss, test_loss)` at each logged epoch.
    pub loss_history: Vec<(usize, f64, f64)>,
    pub best_train_loss: f64,
    pub best_test_loss: f64,
    pub wall_time_seconds: f64,
    /// `(mean, min, max)` of the returned parameters.
    pub param_stats: (f64, f64, f64),
}

fn check_dims(model: &SympNetModel, dataset: &SnapshotDataset) -> Result<()> {
    if model.dim_n != dataset.dim_n {
        return Err(StrupError::Dimension(format!(
            "model has {} dof, dataset has {}",
            model.dim_n, dataset.dim_n
        )));
    }
    Ok(())
}

/// `sum_i || Phi(x_i, h) - y_i ||^2`.
pub fn mse_loss(model: &SympNetModel, dataset: &SnapshotDataset, h: f64) -> Result<f64> {
    check_dims(model, dataset)?;
    let mut acc = 0.0;
    for (x, y) in &dataset.pairs {
        let out = model.forward(x, h)?;
        acc += out.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(acc)
}

/// Loss plus `l2_weight ||theta||^2`, and its gradient via one reverse sweep
/// per pair through the layer vector-Jacobian products.
pub fn loss_and_grad(
    model: &SympNetModel,
    dataset: &SnapshotDataset,
    h: f64,
    l2_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    check_dims(model, dataset)?;
    let nparams = model.param_count();
    let mut grad = vec![0.0; nparams];
    let mut loss = 0.0;
    let k = model.layers.len();
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    for (x, y) in &dataset.pairs {
        states.clear();
        states.push(x.clone());
        for l in &model.layers {
            let z = l.forward(states.last().expect("nonempty"), h)?;
            states.push(z);
        }
        let out = states.last().expect("nonempty");
        loss += out.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut cot: Vec<f64> = out.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect();
        let mut offset = nparams;
        for (i, l) in model.layers.iter().enumerate().rev() {
            let c = l.param_count();
            offset -= c;
            let (xbar, pbar) = l.vjp(&states[i], h, &cot)?;
            for (g, p) in grad[offset..offset + c].iter_mut().zip(&pbar) {
                *g += p;
            }
            cot = xbar;
        }
    }
    if l2_weight != 0.0 {
        let theta = model.params();
        loss += l2_weight * theta.iter().map(|t| t * t).sum::<f64>();
        for (g, t) in grad.iter_mut().zip(&theta) {
            *g += 2.0 * l2_weight * t;
        }
    }
    Ok((loss, grad))
}

/// Adam first/second-moment state.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub t: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(nparams: usize) -> Self {
        Self { t: 0, m: vec![0.0; nparams], v: vec![0.0; nparams] }
    }
}

/// Standard Adam update with bias correction, in place on `params`.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], config: &TrainConfig) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let b1t = 1.0 - config.beta1.powi(state.t as i32);
    let b2t = 1.0 - config.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grad[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        let mhat = state.m[i] / b1t;
        let vhat = state.v[i] / b2t;
        params[i] -= config.learning_rate * mhat / (vhat.sqrt() + config.eps);
    }
}

/// Full-batch training. Returns the parameters of the epoch with the lowest
/// training loss (not the final epoch).
pub fn train(
    model: &SympNetModel,
    train_set: &SnapshotDataset,
    test_set: &SnapshotDataset,
    config: &TrainConfig,
) -> Result<(SympNetModel, TrainReport)> {
    config.validate()?;
    check_dims(model, train_set)?;
    check_dims(model, test_set)?;
    if (train_set.h - test_set.h).abs() > 1e-15 {
        return Err(StrupError::Config("train/test timestep mismatch".into()));
    }
    let h = train_set.h;
    let start = Instant::now();
    let mut current = model.clone();
    let mut params = current.params();
    let mut adam = AdamState::new(params.len());
    let mut best_params = params.clone();
    let mut best_train = f64::INFINITY;
    let mut best_test = f64::INFINITY;
    let mut history = Vec::new();
    for epoch in 1..=config.epochs {
        let (loss, grad) = loss_and_grad(&current, train_set, h, config.l2_weight)?;
        if !loss.is_finite() {
            return Err(StrupError::Divergence(epoch));
        }
        if loss < best_train {
            best_train = loss;
            best_params.copy_from_slice(&params);
        }
        if epoch % config.log_every == 0 || epoch == config.epochs {
            let test = mse_loss(&current, test_set, h)?;
            best_test = best_test.min(test);
            history.push((epoch, loss, test));
        }
        adam_step(&mut adam, &mut params, &grad, config);
        current.set_params(&params)?;
    }
    current.set_params(&best_params)?;
    let final_test = mse_loss(&current, test_set, h)?;
    best_test = best_test.min(final_test);
    let report = TrainReport {
        loss_history: history,
        best_train_loss: best_train,
        best_test_loss: best_test,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        param_stats: current.param_stats(),
    };
    Ok((current, report))
}

// ---------------------------------------------------------------------------
// grid runner

#[derive(Clone, Debug)]
pub struct GridSpec {
    pub method: Method,
    pub hyper: Hyper,
}

#[derive(Clone, Debug)]
pub struct GridRow {
    pub method: Method,
    pub hyper: Hyper,
    pub param_count: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub wall_time_s: f64,
    pub seed: u64,
    /// Failure message when the run errored; losses are NaN in that case.
    pub error: Option<String>,
    pub model: Option<SympNetModel>,
}

/// Worker-thread cap: `STRUPKIT_THREADS`, else available parallelism.
fn thread_cap(njobs: usize) -> usize {
    let env = std::env::var("STRUPKIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let avail = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1);
    env.unwrap_or(avail).min(njobs.max(1))
}

/// Train every spec on the shared datasets; failures are recorded per row
/// and do not abort the grid. Rows come back in spec order.
pub fn grid_run(
    specs: &[GridSpec],
    dim_n: usize,
    train_set: &SnapshotDataset,
    test_set: &SnapshotDataset,
    config: &TrainConfig,
) -> Result<Vec<GridRow>> {
    if specs.is_empty() {
        return Err(StrupError::Argument("empty hyperparameter grid".into()));
    }
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<GridRow>>> = Mutex::new(vec![None; specs.len()]);
    let nthreads = thread_cap(specs.len());
    std::thread::scope(|scope| {
        for _ in 0..nthreads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let spec = &specs[i];
                let row = run_one(spec, dim_n, train_set, test_set, config);
                rows.lock().expect("grid row lock").get_mut(i).map(|slot| *slot = Some(row));
            });
        }
    });
    Ok(rows
        .into_inner()
        .expect("grid rows")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect())
}

fn run_one(
    spec: &GridSpec,
    dim_n: usize,
    train_set: &SnapshotDataset,
    test_set: &SnapshotDataset,
    config: &TrainConfig,
) -> GridRow {
    let mut row = GridRow {
        method: spec.method,
        hyper: spec.hyper.clone(),
        param_count: 0,
        train_loss: f64::NAN,
        test_loss: f64::NAN,
        wall_time_s: 0.0,
        seed: config.seed,
        error: None,
        model: None,
    };
    let outcome = init_model(spec.method, dim_n, &spec.hyper, config.seed)
        .and_then(|m| {
            row.param_count = m.param_count();
            train(&m, train_set, test_set, config)
        });
    match outcome {
        Ok((model, report)) => {
            row.train_loss = report.best_train_loss;
            row.test_loss = report.best_test_loss;
            row.wall_time_s = report.wall_time_seconds;
            row.model = Some(model);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

pub const GRID_CSV_HEADER: &str =
    "method,layers,width_or_degree,sublayers,param_count,train_loss,test_loss,wall_time_s,seed";

pub fn grid_rows_to_csv(rows: &[GridRow]) -> String {
    let mut s = String::from(GRID_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let wd = r
            .hyper
            .width
            .map(|w| w.to_string())
            .or_else(|| r.hyper.degree.map(|d| d.to_string()))
            .unwrap_or_default();
        let sub = r.hyper.sublayers.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{:e},{:.3},{}",
            r.method.as_str(),
            r.hyper.layers,
            wd,
            sub,
            r.param_count,
            r.train_loss,
            r.test_loss,
            r.wall_time_s,
            r.seed
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, Hyper, Method};
    use crate::testutil;
    use crate::zoo::SnapshotDataset;

    fn identity_dataset(dim_n: usize, npairs: usize, seed: u64) -> SnapshotDataset {
        let mut rng = testutil::rng(seed);
        let pairs = (0..npairs)
            .map(|_| {
                let x = testutil::random_point(&mut rng, 2 * dim_n, 0.5);
                (x.clone(), x)
            })
            .collect();
        SnapshotDataset { dim_n, h: 0.1, system: "identity".into(), seed, pairs }
    }

    fn toy_dataset(npairs: usize, h: f64, seed: u64) -> SnapshotDataset {
        let sys = crate::zoo::builtin_system("toy-quadratic").unwrap();
        crate::zoo::generate_dataset(&sys, npairs, h, seed, &Default::default()).unwrap()
    }

    #[test]
    fn loss_hand_examples() {
        let m = init_model(Method::P, 1, &Hyper::poly(2, 2), 1).unwrap();
        let mut zero = m.clone();
        zero.set_params(&vec![0.0; m.param_count()]).unwrap();
        let d = identity_dataset(1, 5, 2);
        assert_eq!(mse_loss(&zero, &d, 0.1).unwrap(), 0.0);
        // single pair with a unit residual in one coordinate
        let mut d1 = identity_dataset(1, 1, 3);
        d1.pairs[0].1[0] += 1.0;
        assert!((mse_loss(&zero, &d1, 0.1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_fd_every_method() {
        let mut cases = vec![
            init_model(Method::P, 2, &Hyper::poly(3, 3), 5).unwrap(),
            init_model(Method::R, 2, &Hyper::width(2, 3), 5).unwrap(),
            init_model(Method::GR, 2, &Hyper::width(2, 3), 5).unwrap(),
            init_model(Method::G, 2, &Hyper::width(3, 3), 5).unwrap(),
            init_model(Method::LA, 2, &Hyper::la(2, 2), 5).unwrap(),
            init_model(Method::H, 2, &Hyper::poly(3, 3), 5).unwrap(),
        ];
        // move away from the near-identity init so gradients are generic
        let mut rng = testutil::rng(6);
        let d = identity_dataset(2, 4, 7);
        for m in cases.iter_mut() {
            let p: Vec<f64> = (0..m.param_count())
                .map(|_| testutil::random_point(&mut rng, 1, 0.5)[0])
                .collect();
            m.set_params(&p).unwrap();
            let (_, grad) = loss_and_grad(m, &d, 0.2, 0.0).unwrap();
            let fd = 1e-6;
            for i in 0..p.len() {
                let mut mp = m.clone();
                let mut pp = p.clone();
                pp[i] += fd;
                mp.set_params(&pp).unwrap();
                let fp = mse_loss(&mp, &d, 0.2).unwrap();
                pp[i] -= 2.0 * fd;
                mp.set_params(&pp).unwrap();
                let fm = mse_loss(&mp, &d, 0.2).unwrap();
                let dnum = (fp - fm) / (2.0 * fd);
                assert!(
                    (grad[i] - dnum).abs() < 1e-6 * (1.0 + dnum.abs()),
                    "{:?} param {i}: {} vs {dnum}",
                    m.method,
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn l2_regularizer_is_exact() {
        let m = init_model(Method::P, 1, &Hyper::poly(2, 3), 8).unwrap();
        let d = identity_dataset(1, 3, 9);
        let (l0, g0) = loss_and_grad(&m, &d, 0.1, 0.0).unwrap();
        let (l1, g1) = loss_and_grad(&m, &d, 0.1, 0.01).unwrap();
        let theta = m.params();
        let norm2: f64 = theta.iter().map(|t| t * t).sum();
        assert!((l1 - l0 - 0.01 * norm2).abs() < 1e-14);
        for i in 0..theta.len() {
            assert!((g1[i] - g0[i] - 0.02 * theta[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn adam_hand_step() {
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        adam_step(&mut st, &mut p, &[1.0], &cfg);
        assert!((p[0] + 0.002 / (1.0 + 1e-8)).abs() < 1e-12);
        // zero gradient leaves parameters unchanged
        let mut st = AdamState::new(1);
        let mut p = vec![0.7];
        adam_step(&mut st, &mut p, &[0.0], &cfg);
        assert_eq!(p[0], 0.7);
    }

    #[test]
    fn identity_target_trains_to_zero() {
        let m = init_model(Method::P, 1, &Hyper::poly(2, 2), 10).unwrap();
        let d = identity_dataset(1, 10, 11);
        let cfg = TrainConfig { epochs: 300, log_every: 30, ..Default::default() };
        let (_, report) = train(&m, &d, &d, &cfg).unwrap();
        assert!(report.best_train_loss < 1e-20, "{}", report.best_train_loss);
        assert_eq!(report.loss_history.len(), 10);
        assert!(report.wall_time_seconds > 0.0);
    }

    #[test]
    fn toy_quadratic_paper_example() {
        // P model k=4 d=2 on the toy system reaches ~machine precision fast
        let m = init_model(Method::P, 1, &Hyper::poly(4, 2), 12).unwrap();
        let train_d = toy_dataset(50, 0.1, 13);
        let test_d = toy_dataset(50, 0.1, 14);
        let cfg = TrainConfig { epochs: 1000, log_every: 100, ..Default::default() };
        let (_, report) = train(&m, &train_d, &test_d, &cfg).unwrap();
        assert!(report.best_train_loss < 1e-15, "{}", report.best_train_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let m = init_model(Method::G, 1, &Hyper::width(2, 3), 15).unwrap();
        let d = toy_dataset(10, 0.1, 16);
        let cfg = TrainConfig { epochs: 50, log_every: 10, ..Default::default() };
        let (m1, r1) = train(&m, &d, &d, &cfg).unwrap();
        let (m2, r2) = train(&m, &d, &d, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.loss_history, r2.loss_history);
    }

    #[test]
    fn inverse_consistency_near_identity() {
        let m = init_model(Method::P, 1, &Hyper::poly(3, 2), 17).unwrap();
        let d = toy_dataset(10, 0.1, 18);
        let fwd = mse_loss(&m, &d, d.h).unwrap();
        // swapped pairs through the inverse map
        let mut err_inv = 0.0;
        for (x, y) in &d.pairs {
            let back = m.inverse(y, d.h).unwrap();
            err_inv += back.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        assert!(err_inv < 10.0 * fwd && fwd < 10.0 * err_inv, "{fwd} vs {err_inv}");
    }

    #[test]
    fn grid_single_cell_matches_direct_train() {
        let d_train = toy_dataset(10, 0.1, 19);
        let d_test = toy_dataset(10, 0.1, 20);
        let cfg = TrainConfig { epochs: 30, log_every: 10, ..Default::default() };
        let specs = [GridSpec { method: Method::P, hyper: Hyper::poly(2, 2) }];
        let rows = grid_run(&specs, 1, &d_train, &d_test, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let m = init_model(Method::P, 1, &Hyper::poly(2, 2), cfg.seed).unwrap();
        let (_, report) = train(&m, &d_train, &d_test, &cfg).unwrap();
        assert_eq!(rows[0].train_loss, report.best_train_loss);
        assert!(rows[0].error.is_none());
        let csv = grid_rows_to_csv(&rows);
        assert!(csv.starts_with(GRID_CSV_HEADER));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn grid_records_failures_and_continues() {
        let d = toy_dataset(5, 0.1, 21);
        let cfg = TrainConfig { epochs: 5, log_every: 5, ..Default::default() };
        let specs = [
            GridSpec { method: Method::P, hyper: Hyper::poly(2, 1) }, // invalid degree
            GridSpec { method: Method::P, hyper: Hyper::poly(2, 2) },
        ];
        let rows = grid_run(&specs, 1, &d, &d, &cfg).unwrap();
        assert!(rows[0].error.is_some());
        assert!(rows[0].train_loss.is_nan());
        assert!(rows[1].error.is_none());
    }
}
