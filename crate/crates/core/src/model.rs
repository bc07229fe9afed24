//! SympNet models: layer compositions, initialization, inversion, and
//! checkpoint serialization.
//!
//! Layer index 0 is applied first (rightmost in composition notation); the
//! timestep is a call argument, not a stored constant, so one trained model
//! can be iterated or probed at other steps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StrupError};
use crate::layers::{
    packed_len, FixedDirectionLayer, FixedKind, GenRidgeLayer, HenonLayer, LayerSpec,
    OneHiddenNet, Orientation, RidgeKind, ScalarRidgeLayer, ShearDirection,
};
use crate::poly::MultiPoly;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    P,
    R,
    GR,
    G,
    LA,
    H,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::P => "P",
            Method::R => "R",
            Method::GR => "GR",
            Method::G => "G",
            Method::LA => "LA",
            Method::H => "H",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "P" => Ok(Method::P),
            "R" => Ok(Method::R),
            "GR" => Ok(Method::GR),
            "G" => Ok(Method::G),
            "LA" => Ok(Method::LA),
            "H" => Ok(Method::H),
            other => Err(StrupError::Lookup(format!("unknown method '{other}'"))),
        }
    }
}

/// Architecture hyperparameters. Which fields apply depends on the method:
/// `degree` for P/H, `width` for R/GR/G, `sublayers` for LA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Number of layers `k` (for LA: number of activation layers).
    pub layers: usize,
    pub width: Option<usize>,
    pub degree: Option<u16>,
    pub sublayers: Option<usize>,
    /// Standard deviation of the near-identity coefficient initialization.
    pub init_scale: f64,
}

pub const DEFAULT_INIT_SCALE: f64 = 0.01;

impl Hyper {
    pub fn poly(layers: usize, degree: u16) -> Self {
        Self { layers, width: None, degree: Some(degree), sublayers: None, init_scale: DEFAULT_INIT_SCALE }
    }

    pub fn width(layers: usize, width: usize) -> Self {
        Self { layers, width: Some(width), degree: None, sublayers: None, init_scale: DEFAULT_INIT_SCALE }
    }

    pub fn la(layers: usize, sublayers: usize) -> Self {
        Self { layers, width: None, degree: None, sublayers: Some(sublayers), init_scale: DEFAULT_INIT_SCALE }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SympNetModel {
    pub dim_n: usize,
    pub method: Method,
    pub hyper: Hyper,
    pub layers: Vec<LayerSpec>,
}

struct Init {
    rng: ChaCha8Rng,
    scale: f64,
    spare: Option<f64>,
}

impl Init {
    fn uniform(&mut self, len: usize, half_width: f64) -> Vec<f64> {
        (0..len)
            .map(|_| self.rng.random_range(-half_width..half_width))
            .collect()
    }

    /// Box-Muller standard normal scaled by the init scale.
    fn small_normal(&mut self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|_| {
                if let Some(z) = self.spare.take() {
                    return self.scale * z;
                }
                let u1: f64 = self.rng.random_range(f64::EPSILON..1.0);
                let u2: f64 = self.rng.random_range(0.0..std::f64::consts::TAU);
                let r = (-2.0 * u1.ln()).sqrt();
                self.spare = Some(r * u2.sin());
                self.scale * r * u2.cos()
            })
            .collect()
    }
}

fn validated_width(hyper: &Hyper, method: Method) -> Result<usize> {
    match hyper.width {
        Some(m) if m >= 1 => Ok(m),
        _ => Err(StrupError::Config(format!(
            "method {} requires width >= 1",
            method.as_str()
        ))),
    }
}

fn validated_degree(hyper: &Hyper, method: Method) -> Result<u16> {
    match hyper.degree {
        Some(d) if d >= 2 => Ok(d),
        _ => Err(StrupError::Config(format!(
            "method {} requires degree >= 2",
            method.as_str()
        ))),
    }
}

fn small_net(init: &mut Init, dim_in: usize, m: usize) -> OneHiddenNet {
    OneHiddenNet {
        dim_in,
        w: init.uniform(m * dim_in, 1.0 / (dim_in as f64).sqrt()),
        b: init.uniform(m, 1.0),
        a: init.small_normal(m),
    }
}

fn alternating(i: usize) -> ShearDirection {
    if i % 2 == 0 {
        ShearDirection::PShear
    } else {
        ShearDirection::QShear
    }
}

/// Deterministic seeded initialization. Direction vectors are
/// `Uniform(-1,1)^{2n} / sqrt(2n)`; output coefficients are
/// `Normal(0, init_scale^2)`, so every layer starts near the identity.
pub fn init_model(method: Method, dim_n: usize, hyper: &Hyper, seed: u64) -> Result<SympNetModel> {
    if dim_n == 0 {
        return Err(StrupError::Config("dim_n must be >= 1".into()));
    }
    if hyper.layers == 0 {
        return Err(StrupError::Config("layer count must be >= 1".into()));
    }
    if !(hyper.init_scale > 0.0) {
        return Err(StrupError::Config("init_scale must be positive".into()));
    }
    let k = hyper.layers;
    let mut init = Init { rng: ChaCha8Rng::seed_from_u64(seed), scale: hyper.init_scale, spare: None };
    let dir_width = 1.0 / ((2 * dim_n) as f64).sqrt();
    let mut layers = Vec::new();
    match method {
        Method::P => {
            let d = validated_degree(hyper, method)?;
            for _ in 0..k {
                layers.push(LayerSpec::ScalarRidge(ScalarRidgeLayer {
                    w: init.uniform(2 * dim_n, dir_width),
                    kind: RidgeKind::Poly {
                        coeffs: init.small_normal(d as usize - 1),
                        sigmoid_wrap: false,
                    },
                }));
            }
        }
        Method::R => {
            let m = validated_width(hyper, method)?;
            for _ in 0..k {
                layers.push(LayerSpec::ScalarRidge(ScalarRidgeLayer {
                    w: init.uniform(2 * dim_n, dir_width),
                    kind: RidgeKind::Net { a: init.small_normal(m), b: init.uniform(m, 1.0) },
                }));
            }
        }
        Method::GR => {
            let m = validated_width(hyper, method)?;
            // orientation alternates A-side/B-side by layer index
            for i in 0..k {
                let s_width = 1.0 / (dim_n as f64).sqrt();
                layers.push(LayerSpec::GenRidge(GenRidgeLayer {
                    dim_n,
                    s1: init.uniform(packed_len(dim_n), s_width),
                    s2: init.uniform(packed_len(dim_n), s_width),
                    s3: init.uniform(packed_len(dim_n), s_width),
                    orientation: if i % 2 == 0 { Orientation::ASide } else { Orientation::BSide },
                    net: small_net(&mut init, dim_n, m),
                }));
            }
        }
        Method::G => {
            let m = validated_width(hyper, method)?;
            // the V-module (a p-update from the q block) comes first
            for i in 0..k {
                layers.push(LayerSpec::Fixed(FixedDirectionLayer {
                    dim_n,
                    direction: alternating(i),
                    kind: FixedKind::G(small_net(&mut init, dim_n, m)),
                }));
            }
        }
        Method::LA => {
            let k_sub = match hyper.sublayers {
                Some(s) if s >= 1 => s,
                _ => return Err(StrupError::Config("method LA requires sublayers >= 1".into())),
            };
            // k+1 linear blocks of k_sub alternating sublayers, with an
            // alternating activation layer between consecutive blocks
            let mut flip = 0usize;
            for block in 0..=k {
                for _ in 0..k_sub {
                    layers.push(LayerSpec::Fixed(FixedDirectionLayer {
                        dim_n,
                        direction: alternating(flip),
                        kind: FixedKind::LaLinear { s: init.small_normal(packed_len(dim_n)) },
                    }));
                    flip += 1;
                }
                if block < k {
                    layers.push(LayerSpec::Fixed(FixedDirectionLayer {
                        dim_n,
                        direction: alternating(block),
                        kind: FixedKind::LaActivation { a: init.small_normal(dim_n) },
                    }));
                }
            }
        }
        Method::H => {
            let d = validated_degree(hyper, method)?;
            let exps = HenonLayer::monomial_basis(dim_n, d);
            for _ in 0..k {
                layers.push(LayerSpec::Henon(HenonLayer {
                    dim_n,
                    exps: exps.clone(),
                    coeffs: init.small_normal(exps.len()),
                }));
            }
        }
    }
    Ok(SympNetModel { dim_n, method, hyper: hyper.clone(), layers })
}

impl SympNetModel {
    pub fn forward(&self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        let mut z = x.to_vec();
        for layer in &self.layers {
            z = layer.forward(&z, h)?;
        }
        Ok(z)
    }

    /// Layers in reversed order with timestep `-h`; exact group inverse.
    pub fn inverse(&self, y: &[f64], h: f64) -> Result<Vec<f64>> {
        let mut z = y.to_vec();
        for layer in self.layers.iter().rev() {
            z = layer.inverse_apply(&z, h)?;
        }
        Ok(z)
    }

    /// Sum of the layer Hamiltonians as a polynomial (Definition 1);
    /// polynomial-basis (P) models only.
    pub fn inverse_modified_hamiltonian(&self) -> Result<MultiPoly> {
        let basis = self.extract_basis()?;
        let mut acc = MultiPoly::zero(2 * self.dim_n);
        for b in &basis {
            acc = acc.add(b)?;
        }
        Ok(acc)
    }

    /// One polynomial per layer, layer order preserved; P models only.
    pub fn extract_basis(&self) -> Result<Vec<MultiPoly>> {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::ScalarRidge(r) => r.to_poly(),
                other => Err(StrupError::Capability(format!(
                    "layer kind '{}' has no polynomial Hamiltonian",
                    other.kind_tag()
                ))),
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.params());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(StrupError::Dimension(format!(
                "model takes {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let c = l.param_count();
            l.set_params(&p[offset..offset + c])?;
            offset += c;
        }
        Ok(())
    }

    /// `(mean, min, max)` over every trainable scalar.
    pub fn param_stats(&self) -> (f64, f64, f64) {
        let p = self.params();
        if p.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let sum: f64 = p.iter().sum();
        let min = p.iter().copied().fold(f64::INFINITY, f64::min);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (sum / p.len() as f64, min, max)
    }
}

// ---------------------------------------------------------------------------
// checkpoints

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub wall_time_seconds: f64,
}

/// Per-layer checkpoint record: kind tag, orientation when the kind has one,
/// and the flat parameter vector in the order defined by
/// [`LayerSpec::params`] (struct field order per kind).
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointLayer {
    kind: String,
    orientation: Option<String>,
    params: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    method: Method,
    dim: usize,
    hyper: Hyper,
    layers: Vec<CheckpointLayer>,
    metadata: CheckpointMeta,
}

fn layer_orientation(l: &LayerSpec) -> Option<String> {
    match l {
        LayerSpec::GenRidge(g) => Some(
            match g.orientation {
                Orientation::ASide => "A-side",
                Orientation::BSide => "B-side",
            }
            .into(),
        ),
        LayerSpec::Fixed(f) => Some(
            match f.direction {
                ShearDirection::PShear => "p-shear",
                ShearDirection::QShear => "q-shear",
            }
            .into(),
        ),
        _ => None,
    }
}

/// Serialize a model plus metadata to the versioned JSON checkpoint format.
/// Parameters round-trip bit-exactly.
pub fn checkpoint_to_json(model: &SympNetModel, meta: &CheckpointMeta) -> String {
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        method: model.method,
        dim: 2 * model.dim_n,
        hyper: model.hyper.clone(),
        layers: model
            .layers
            .iter()
            .map(|l| CheckpointLayer {
                kind: l.kind_tag().into(),
                orientation: layer_orientation(l),
                params: l.params(),
            })
            .collect(),
        metadata: meta.clone(),
    };
    serde_json::to_string_pretty(&file).expect("checkpoint serialization")
}

/// Rebuild a model from its checkpoint: the architecture skeleton is
/// reconstructed from (method, dim, hyper) and the stored parameters are
/// written into it, with kind tags cross-checked.
pub fn checkpoint_from_json(text: &str) -> Result<(SympNetModel, CheckpointMeta)> {
    let file: CheckpointFile = serde_json::from_str(text)
        .map_err(|e| StrupError::Parse(format!("checkpoint: {e}")))?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(StrupError::Parse(format!(
            "unsupported checkpoint format_version {}",
            file.format_version
        )));
    }
    if file.dim == 0 || file.dim % 2 != 0 {
        return Err(StrupError::Dimension(format!("bad checkpoint dim {}", file.dim)));
    }
    let mut model = init_model(file.method, file.dim / 2, &file.hyper, 0)?;
    if model.layers.len() != file.layers.len() {
        return Err(StrupError::Parse(format!(
            "checkpoint has {} layers, architecture expects {}",
            file.layers.len(),
            model.layers.len()
        )));
    }
    for (layer, rec) in model.layers.iter_mut().zip(&file.layers) {
        if layer.kind_tag() != rec.kind {
            return Err(StrupError::Parse(format!(
                "checkpoint layer kind '{}' does not match architecture kind '{}'",
                rec.kind,
                layer.kind_tag()
            )));
        }
        layer.set_params(&rec.params)?;
    }
    Ok((model, file.metadata))
}
