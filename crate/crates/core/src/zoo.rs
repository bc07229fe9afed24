//! Benchmark Hamiltonian systems, the reference flow map, and snapshot
//! dataset generation.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, StrupError};
use crate::integrate::{dopri5, IntegratorConfig};
use crate::phase::{apply_j, PhaseVector};
use crate::poly::MultiPoly;

enum Kind {
    /// Polynomial Hamiltonian with precomputed gradient.
    Poly { h: MultiPoly, grad: Vec<MultiPoly> },
    DoublePendulum,
}

pub struct HamiltonianSystem {
    name: String,
    dim_n: usize,
    kind: Kind,
}

impl HamiltonianSystem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn eval_h(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Poly { h, .. } => h.eval(x),
            Kind::DoublePendulum => {
                let (p1, p2, q1, q2) = (x[0], x[1], x[2], x[3]);
                let c = (q1 - q2).cos();
                let s = (q1 - q2).sin();
                let num = p1 * p1 + 2.0 * p2 * p2 - 2.0 * p1 * p2 * c;
                num / (2.0 * (1.0 + s * s)) - 2.0 * q1.cos() - q2.cos()
            }
        }
    }

    pub fn grad_h(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Poly { grad, .. } => grad.iter().map(|g| g.eval(x)).collect(),
            Kind::DoublePendulum => {
                let (p1, p2, q1, q2) = (x[0], x[1], x[2], x[3]);
                let c = (q1 - q2).cos();
                let s = (q1 - q2).sin();
                let d = 2.0 * (1.0 + s * s);
                let n = p1 * p1 + 2.0 * p2 * p2 - 2.0 * p1 * p2 * c;
                // d/du of the kinetic term, u = q1 - q2 (quotient rule)
                let du = (2.0 * p1 * p2 * s * d - n * 4.0 * s * c) / (d * d);
                vec![
                    (2.0 * p1 - 2.0 * p2 * c) / d,
                    (4.0 * p2 - 2.0 * p1 * c) / d,
                    du + 2.0 * q1.sin(),
                    -du + q2.sin(),
                ]
            }
        }
    }

    /// Symbolic form, present for polynomial systems.
    pub fn poly_form(&self) -> Option<&MultiPoly> {
        match &self.kind {
            Kind::Poly { h, .. } => Some(h),
            Kind::DoublePendulum => None,
        }
    }
}

fn poly_system(name: impl Into<String>, dim_n: usize, h: MultiPoly) -> HamiltonianSystem {
    let grad = h.grad();
    HamiltonianSystem { name: name.into(), dim_n, kind: Kind::Poly { h, grad } }
}

fn mono(nvars: usize, pairs: &[(usize, u16)], c: f64) -> MultiPoly {
    let mut e = vec![0u16; nvars];
    for &(i, k) in pairs {
        e[i] += k;
    }
    MultiPoly::monomial(nvars, &e, c).expect("index in range")
}

fn henon_heiles() -> HamiltonianSystem {
    // H = (p1^2 + p2^2 + q1^2 + q2^2)/2 + q1^2 q2 + q2^3
    let mut h = MultiPoly::zero(4);
    for i in 0..4 {
        h = h.add(&mono(4, &[(i, 2)], 0.5)).unwrap();
    }
    h = h.add(&mono(4, &[(2, 2), (3, 1)], 1.0)).unwrap();
    h = h.add(&mono(4, &[(3, 3)], 1.0)).unwrap();
    poly_system("henon-heiles", 2, h)
}

fn fpu(n: usize) -> HamiltonianSystem {
    // H = sum_i p_i^2/2 + (q_{i+1} - q_i)^2/2 + (q_{i+1} - q_i)^4/4, q_{n+1} := 0
    let nv = 2 * n;
    let mut h = MultiPoly::zero(nv);
    for i in 0..n {
        h = h.add(&mono(nv, &[(i, 2)], 0.5)).unwrap();
        let mut w = vec![0.0; nv];
        w[n + i] = -1.0;
        if i + 1 < n {
            w[n + i + 1] = 1.0;
        }
        let diff = MultiPoly::linear_form(&w);
        h = h.add(&diff.pow(2).scale(0.5)).unwrap();
        h = h.add(&diff.pow(4).scale(0.25)).unwrap();
    }
    poly_system(format!("fpu({n})"), n, h)
}

/// Quadratic Hamiltonian `x^T A x / 2` for a full `2n x 2n` matrix `A`.
pub fn quadratic_system(name: impl Into<String>, a: &DMatrix<f64>) -> HamiltonianSystem {
    let n = a.nrows() / 2;
    poly_system(name, n, crate::bch::matrix_to_quadratic(a))
}

/// Symmetric `A = I + S` with `S_ij` Uniform(0,1); the whole matrix
/// (diagonal included) is drawn, seeded.
pub fn dense_linear_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2 * n;
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v: f64 = rng.random_range(0.0..1.0);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    DMatrix::identity(d, d) + s
}

fn wave(n: usize) -> HamiltonianSystem {
    // H = p^T p / 2 + q^T A q / 2, A the 1D Laplacian stencil
    let nv = 2 * n;
    let mut h = MultiPoly::zero(nv);
    for i in 0..n {
        h = h.add(&mono(nv, &[(i, 2)], 0.5)).unwrap();
        h = h.add(&mono(nv, &[(n + i, 2)], -1.0)).unwrap();
        if i + 1 < n {
            h = h.add(&mono(nv, &[(n + i, 1), (n + i + 1, 1)], 1.0)).unwrap();
        }
    }
    poly_system(format!("wave({n})"), n, h)
}

fn double_mass_spring() -> HamiltonianSystem {
    let mut h = mono(4, &[(0, 2)], 0.5);
    h = h.add(&mono(4, &[(1, 2)], 0.5)).unwrap();
    h = h.add(&mono(4, &[(2, 2)], 0.6)).unwrap();
    h = h.add(&mono(4, &[(2, 1), (3, 1)], -0.4)).unwrap();
    h = h.add(&mono(4, &[(3, 2)], 0.6)).unwrap();
    poly_system("double-mass-spring", 2, h)
}

fn harmonic(n: usize) -> HamiltonianSystem {
    let nv = 2 * n;
    let mut h = MultiPoly::zero(nv);
    for i in 0..nv {
        h = h.add(&mono(nv, &[(i, 2)], 0.5)).unwrap();
    }
    poly_system(format!("harmonic({n})"), n, h)
}

fn toy_quadratic() -> HamiltonianSystem {
    // H = (p^2 + 2 p q + 3 q^2) / 2
    let h = mono(2, &[(0, 2)], 0.5)
        .add(&mono(2, &[(0, 1), (1, 1)], 1.0))
        .unwrap()
        .add(&mono(2, &[(1, 2)], 1.5))
        .unwrap();
    poly_system("toy-quadratic", 1, h)
}

/// Parse names like `fpu(4)` or `dense-linear(2, 7)`.
fn parse_args(name: &str) -> Option<(&str, Vec<u64>)> {
    let open = name.find('(')?;
    let close = name.rfind(')')?;
    let args: Option<Vec<u64>> = name[open + 1..close]
        .split(',')
        .map(|t| t.trim().parse::<u64>().ok())
        .collect();
    Some((&name[..open], args?))
}

/// Look up a benchmark system by name.
///
/// Names: `henon-heiles`, `fpu(n)`, `dense-linear(n, seed)`, `wave(n)`,
/// `double-pendulum`, `double-mass-spring`, `harmonic(n)`, `toy-quadratic`.
pub fn builtin_system(name: &str) -> Result<HamiltonianSystem> {
    let unknown = || StrupError::Lookup(format!("unknown system '{name}'"));
    match name {
        "henon-heiles" => return Ok(henon_heiles()),
        "double-pendulum" => {
            return Ok(HamiltonianSystem {
                name: name.into(),
                dim_n: 2,
                kind: Kind::DoublePendulum,
            })
        }
        "double-mass-spring" => return Ok(double_mass_spring()),
        "toy-quadratic" => return Ok(toy_quadratic()),
        _ => {}
    }
    let (base, args) = parse_args(name).ok_or_else(unknown)?;
    let dof = |args: &[u64]| -> Result<usize> {
        match args.first() {
            Some(&n) if n >= 1 => Ok(n as usize),
            _ => Err(StrupError::Argument(format!("'{name}': need degrees of freedom >= 1"))),
        }
    };
    match (base, args.len()) {
        ("fpu", 1) => Ok(fpu(dof(&args)?)),
        ("wave", 1) => Ok(wave(dof(&args)?)),
        ("harmonic", 1) => Ok(harmonic(dof(&args)?)),
        ("dense-linear", 2) => {
            let n = dof(&args)?;
            Ok(quadratic_system(name, &dense_linear_matrix(n, args[1])))
        }
        _ => Err(unknown()),
    }
}

/// High-precision solve of `xdot = J grad H` over timestep `h` (either sign).
pub fn reference_flow(
    system: &HamiltonianSystem,
    x: &PhaseVector,
    h: f64,
    config: &IntegratorConfig,
) -> Result<PhaseVector> {
    if x.dim_n() != system.dim_n {
        return Err(StrupError::Dimension(format!(
            "point has {} dof, system '{}' has {}",
            x.dim_n(),
            system.name,
            system.dim_n
        )));
    }
    let field = |v: &[f64]| apply_j(&system.grad_h(v)).expect("even length");
    PhaseVector::new(dopri5(field, x.coords(), h, config)?)
}

/// Snapshot pairs `(x_i, phi_h(x_i))` at a fixed timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotDataset {
    pub dim_n: usize,
    pub h: f64,
    pub system: String,
    pub seed: u64,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Sample `x_i ~ Uniform([-1/2, 1/2]^{2n})` and integrate each with the
/// reference flow. Deterministic per seed.
pub fn generate_dataset(
    system: &HamiltonianSystem,
    n_data: usize,
    h: f64,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<SnapshotDataset> {
    if n_data == 0 {
        return Err(StrupError::Argument("n_data must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2 * system.dim_n;
    let mut pairs = Vec::with_capacity(n_data);
    for _ in 0..n_data {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let y = reference_flow(system, &PhaseVector::new(x.clone())?, h, config)?;
        pairs.push((x, y.into_coords()));
    }
    Ok(SnapshotDataset { dim_n: system.dim_n, h, system: system.name.clone(), seed, pairs })
}

impl SnapshotDataset {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# dim={} h={:?} system={} seed={}\n",
            2 * self.dim_n,
            self.h,
            self.system,
            self.seed
        );
        for (x, y) in &self.pairs {
            let mut first = true;
            for v in x.iter().chain(y) {
                if !first {
                    s.push(',');
                }
                let _ = write!(s, "{:.16e}", v);
                first = false;
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| StrupError::Parse("empty dataset file".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| StrupError::Parse("missing '#' header line".into()))?;
        let mut dim = None;
        let mut h = None;
        let mut system = String::new();
        let mut seed = 0u64;
        for field in header.split_whitespace() {
            let (key, val) = field
                .split_once('=')
                .ok_or_else(|| StrupError::Parse(format!("bad header field '{field}'")))?;
            match key {
                "dim" => {
                    dim = Some(val.parse::<usize>().map_err(|_| {
                        StrupError::Parse(format!("bad dim '{val}'"))
                    })?)
                }
                "h" => {
                    h = Some(val.parse::<f64>().map_err(|_| {
                        StrupError::Parse(format!("bad h '{val}'"))
                    })?)
                }
                "system" => system = val.to_string(),
                "seed" => {
                    seed = val
                        .parse()
                        .map_err(|_| StrupError::Parse(format!("bad seed '{val}'")))?
                }
                other => return Err(StrupError::Parse(format!("unknown header key '{other}'"))),
            }
        }
        let dim = dim.ok_or_else(|| StrupError::Parse("header missing dim".into()))?;
        let h = h.ok_or_else(|| StrupError::Parse("header missing h".into()))?;
        if dim == 0 || dim % 2 != 0 {
            return Err(StrupError::Dimension(format!("bad dataset dim {dim}")));
        }
        let mut pairs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| {
                        StrupError::Parse(format!("line {}: bad float '{t}'", lineno + 2))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != 2 * dim {
                return Err(StrupError::Dimension(format!(
                    "line {}: {} values, expected {}",
                    lineno + 2,
                    row.len(),
                    2 * dim
                )));
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(StrupError::Parse(format!("line {}: non-finite value", lineno + 2)));
            }
            pairs.push((row[..dim].to_vec(), row[dim..].to_vec()));
        }
        Ok(Self { dim_n: dim / 2, h, system, seed, pairs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;

    const ALL: &[&str] = &[
        "henon-heiles",
        "fpu(4)",
        "dense-linear(2, 7)",
        "wave(4)",
        "double-pendulum",
        "double-mass-spring",
        "harmonic(1)",
        "toy-quadratic",
    ];

    #[test]
    fn henon_heiles_hand_values() {
        let s = builtin_system("henon-heiles").unwrap();
        assert_eq!(s.eval_h(&[0.0; 4]), 0.0);
        assert!((s.eval_h(&[0.0, 0.0, 1.0, 1.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn double_mass_spring_hand_value() {
        let s = builtin_system("double-mass-spring").unwrap();
        assert!((s.eval_h(&[1.0, 1.0, 1.0, 1.0]) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn unknown_names_rejected() {
        for bad in ["nope", "fpu", "fpu(0)", "dense-linear(2)", "fpu(x)"] {
            assert!(builtin_system(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn grad_matches_fd_all_systems() {
        let mut rng = testutil::rng(41);
        for name in ALL {
            let s = builtin_system(name).unwrap();
            for _ in 0..50 {
                let x = testutil::random_point(&mut rng, 2 * s.dim_n(), 0.5);
                let g = s.grad_h(&x);
                let scale = 1.0 + g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for i in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += 1e-6;
                    xm[i] -= 1e-6;
                    let fd = (s.eval_h(&xp) - s.eval_h(&xm)) / 2e-6;
                    assert!(
                        (g[i] - fd).abs() < 1e-7 * scale,
                        "{name} grad[{i}]: {} vs fd {fd}",
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn poly_form_consistency() {
        let mut rng = testutil::rng(42);
        for name in ALL {
            let s = builtin_system(name).unwrap();
            let Some(p) = s.poly_form() else {
                assert_eq!(*name, "double-pendulum");
                continue;
            };
            for _ in 0..10 {
                let x = testutil::random_point(&mut rng, 2 * s.dim_n(), 0.8);
                assert!((p.eval(&x) - s.eval_h(&x)).abs() < 1e-12);
                let pg = p.eval_grad(&x);
                let sg = s.grad_h(&x);
                for (a, b) in pg.iter().zip(&sg) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn harmonic_quarter_turn() {
        let s = builtin_system("harmonic(1)").unwrap();
        let x = PhaseVector::new(vec![1.0, 0.0]).unwrap();
        let y = reference_flow(&s, &x, std::f64::consts::FRAC_PI_2, &IntegratorConfig::default())
            .unwrap();
        assert!(y.coords()[0].abs() < 1e-11);
        assert!((y.coords()[1] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn dense_linear_matches_matrix_exponential() {
        let n = 2;
        let a = dense_linear_matrix(n, 7);
        let s = builtin_system("dense-linear(2, 7)").unwrap();
        let j = crate::phase::SymplecticForm::new(n).matrix();
        let h = 0.3;
        let flow = crate::matfun::expm(&((&j * &a) * h));
        let mut rng = testutil::rng(43);
        for _ in 0..5 {
            let x = testutil::random_point(&mut rng, 2 * n, 0.5);
            let y = reference_flow(
                &s,
                &PhaseVector::new(x.clone()).unwrap(),
                h,
                &IntegratorConfig::default(),
            )
            .unwrap();
            let xe = nalgebra::DVector::from_vec(x);
            let ye = &flow * xe;
            for i in 0..2 * n {
                assert!((y.coords()[i] - ye[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn energy_and_reversibility() {
        let mut rng = testutil::rng(44);
        let cfg = IntegratorConfig::default();
        for name in ALL {
            let s = builtin_system(name).unwrap();
            let x = PhaseVector::new(testutil::random_point(&mut rng, 2 * s.dim_n(), 0.4)).unwrap();
            let y = reference_flow(&s, &x, 1.0, &cfg).unwrap();
            assert!(
                (s.eval_h(y.coords()) - s.eval_h(x.coords())).abs() < 1e-9,
                "{name}: energy drift"
            );
            let back = reference_flow(&s, &y, -1.0, &cfg).unwrap();
            for (a, b) in back.coords().iter().zip(x.coords()) {
                assert!((a - b).abs() < 1e-9, "{name}: not reversible");
            }
        }
    }

    #[test]
    fn dataset_deterministic_and_in_hypercube() {
        let s = builtin_system("harmonic(1)").unwrap();
        let cfg = IntegratorConfig::default();
        let d1 = generate_dataset(&s, 20, 0.1, 5, &cfg).unwrap();
        let d2 = generate_dataset(&s, 20, 0.1, 5, &cfg).unwrap();
        assert_eq!(d1, d2);
        for (x, y) in &d1.pairs {
            assert!(x.iter().all(|v| (-0.5..0.5).contains(v)));
            let rx: f64 = x.iter().map(|v| v * v).sum();
            let ry: f64 = y.iter().map(|v| v * v).sum();
            assert!((rx.sqrt() - ry.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = builtin_system("henon-heiles").unwrap();
        let d = generate_dataset(&s, 5, 0.01, 9, &IntegratorConfig::default()).unwrap();
        let text = d.to_csv();
        let back = SnapshotDataset::from_csv(&text).unwrap();
        assert_eq!(back.dim_n, d.dim_n);
        assert_eq!(back.h, d.h);
        assert_eq!(back.system, d.system);
        assert_eq!(back.seed, d.seed);
        for ((x1, y1), (x2, y2)) in d.pairs.iter().zip(&back.pairs) {
            for (a, b) in x1.iter().zip(x2).chain(y1.iter().zip(y2)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        assert!(SnapshotDataset::from_csv("no header").is_err());
    }
}
