//! SNNK layers: a feedforward layer `x ↦ f(Wx + b)` rewritten as
//! `x ↦ Re(A Φ(x))`, with `A = Ψ(W, b)` derived from the weights or trained
//! directly.

mod arccos;
mod polynomial;

pub use arccos::{arc_cosine_exact, arc_cosine_mc, gaussian_projection, relu_features_batch, relu_snnk_features};
pub use polynomial::{
    kar_karnick_estimate, kar_karnick_features, tanh_series_coeffs, DegreeSampling, SplitFeatures,
    TaylorSplitKernel,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::{decomposition_for, Activation, Axis};
use crate::error::{shape_err, Result, SnnkError};
use crate::rng::{mix64, stream_rng};
use crate::urf::{phi_batch, psi_batch, sample_draws, Layout, Segment, UrfConfig, UrfDraws};

/// A feedforward layer `x ↦ f(Wx + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FflSpec {
    /// `l × d`.
    pub w: DMatrix<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl FflSpec {
    pub fn new(w: DMatrix<f64>, b: Vec<f64>, activation: Activation) -> Result<Self> {
        let spec = FflSpec { w, b, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.len() != self.w.nrows() {
            return shape_err(format!("W has {} rows, b has {} entries", self.w.nrows(), self.b.len()));
        }
        if self.w.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(SnnkError::InvalidConfig("FFL weights must be finite".into()));
        }
        self.activation.validate()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Stable hash of the weights, recorded as provenance of derived layers.
    pub fn fingerprint(&self) -> u64 {
        let dims = [self.w.nrows() as u64, self.w.ncols() as u64];
        dims.iter()
            .copied()
            .chain(self.w.iter().chain(&self.b).map(|v| v.to_bits()))
            .fold(0x5f17, |h, v| mix64(h ^ v))
    }

    /// Random spec with `N(0, 1/d)` weights and `U(-1, 1)` biases.
    pub fn random(input_dim: usize, output_dim: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = stream_rng(seed, &[0x6666_6c]);
        let s = 1.0 / (input_dim as f64).sqrt();
        let w: Vec<f64> = (0..output_dim * input_dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let b = (0..output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        FflSpec { w: DMatrix::from_row_slice(output_dim, input_dim, &w), b, activation }
    }
}

/// Exact `f(Wx + b)`.
pub fn ffl_forward(x: &[f64], spec: &FflSpec) -> Result<Vec<f64>> {
    if x.len() != spec.input_dim() {
        return shape_err(format!("layer expects dim {}, got {}", spec.input_dim(), x.len()));
    }
    Ok(spec
        .w
        .row_iter()
        .zip(&spec.b)
        .map(|(row, b)| spec.activation.eval(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b))
        .collect())
}

/// Input-side feature map of a layer. Random draws are not stored: a URF
/// map is rebuilt from its config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    Urf { activation: Activation, config: UrfConfig, input_dim: usize },
    /// ReLU features `max(0, G x / √l′)` with `G` of shape `l′ × d`.
    Relu { g: DMatrix<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// `A = Ψ(W, b)` for the FFL with this fingerprint.
    Derived { ffl_fingerprint: u64, seed: u64 },
    /// `A` is a free parameter, initialized from `init_seed`.
    Learnable { init_seed: u64 },
}

#[derive(Debug, Clone)]
enum Realized {
    Urf(Box<UrfDraws>),
    Relu,
}

/// `x ↦ Re(A Φ(x))` with `A` of shape `l × M`.
#[derive(Debug, Clone)]
pub struct SnnkLayer {
    map: FeatureMap,
    realized: Realized,
    a: DMatrix<Complex64>,
    layout: Layout,
    provenance: Provenance,
}

fn relu_layout(len: usize) -> Layout {
    Layout { segments: vec![Segment { axis: Axis::RePlus, atom: None, len }] }
}

impl SnnkLayer {
    fn realize(map: &FeatureMap) -> Result<(Realized, Layout)> {
        match map {
            FeatureMap::Urf { activation, config, input_dim } => {
                let d = decomposition_for(activation)?;
                let draws = sample_draws(&d, config, *input_dim)?;
                let layout = draws.layout.clone();
                Ok((Realized::Urf(Box::new(draws)), layout))
            }
            FeatureMap::Relu { g } => Ok((Realized::Relu, relu_layout(g.nrows()))),
        }
    }

    fn assemble(map: FeatureMap, a: DMatrix<Complex64>, provenance: Provenance) -> Result<Self> {
        let (realized, layout) = Self::realize(&map)?;
        if a.ncols() != layout.total() {
            return shape_err(format!("A has {} columns, features have {}", a.ncols(), layout.total()));
        }
        Ok(SnnkLayer { map, realized, a, layout, provenance })
    }

    /// Layer with trainable `A ~ N(0, 1/M)` (real and imaginary parts for URF maps).
    pub fn learnable(map: FeatureMap, output_dim: usize, init_seed: u64) -> Result<Self> {
        let (realized, layout) = Self::realize(&map)?;
        let m = layout.total();
        let s = 1.0 / (m as f64).sqrt();
        let mut rng = stream_rng(init_seed, &[0x696e_6974]);
        let complex = matches!(map, FeatureMap::Urf { .. });
        let a = DMatrix::from_fn(output_dim, m, |_, _| {
            let re = s * rng.sample::<f64, _>(StandardNormal);
            let im = if complex { s * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            Complex64::new(re, im)
        });
        Ok(SnnkLayer { map, realized, a, layout, provenance: Provenance::Learnable { init_seed } })
    }

    /// ReLU-SNNK layer for weight rows `w`: `A = 2 Φ(W)`, so each output is
    /// an estimate of the arc-cosine kernel `K₁(w_i, x)`.
    pub fn relu_from_weights(w: &DMatrix<f64>, g: DMatrix<f64>, seed: u64) -> Result<Self> {
        let feats = relu_features_batch(w, &g)?;
        let a = feats.map(|v| Complex64::new(2.0 * v, 0.0));
        let spec = FflSpec { w: w.clone(), b: vec![0.0; w.nrows()], activation: Activation::Sine };
        Self::assemble(FeatureMap::Relu { g }, a, Provenance::Derived { ffl_fingerprint: spec.fingerprint(), seed })
    }

    pub fn map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn a(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    pub fn set_a(&mut self, a: DMatrix<Complex64>) -> Result<()> {
        if a.shape() != self.a.shape() {
            return shape_err(format!("A must stay {:?}, got {:?}", self.a.shape(), a.shape()));
        }
        self.a = a;
        Ok(())
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// URF draws behind `Φ`, if this is a URF layer.
    pub fn draws(&self) -> Option<&UrfDraws> {
        match &self.realized {
            Realized::Urf(d) => Some(d),
            Realized::Relu => None,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.map {
            FeatureMap::Urf { input_dim, .. } => *input_dim,
            FeatureMap::Relu { g } => g.ncols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Feature length `M`.
    pub fn feature_len(&self) -> usize {
        self.layout.total()
    }

    /// Whether `Φ` is real (ReLU features).
    pub fn is_real(&self) -> bool {
        matches!(self.realized, Realized::Relu)
    }

    /// Real scalars in `A`: `l·M` for real features, `2·l·M` for complex ones.
    pub fn trainable_parameters(&self) -> usize {
        let n = self.a.nrows() * self.a.ncols();
        if self.is_real() {
            n
        } else {
            2 * n
        }
    }

    /// `Φ(x)` for each row of `x` (`n × M`).
    pub fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
        match (&self.realized, &self.map) {
            (Realized::Urf(d), _) => phi_batch(x, d),
            (Realized::Relu, FeatureMap::Relu { g }) => Ok(relu_features_batch(x, g)?.map(|v| Complex64::new(v, 0.0))),
            _ => unreachable!("realization follows the map"),
        }
    }

    /// `Re(Φ(x) Aᵀ)` for cached features (`n × l`).
    pub fn forward_features(&self, feats: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
        if feats.ncols() != self.feature_len() {
            return shape_err(format!("expected {} features, got {}", self.feature_len(), feats.ncols()));
        }
        Ok((feats * self.a.transpose()).map(|v| v.re))
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.forward_features(&self.features(x)?)
    }

    /// Multiply-adds of one forward pass: `Φ` costs `M·d`, the product `M·l`
    /// complex multiplies (4 real each, 1 for real features).
    pub fn forward_flops(&self) -> usize {
        let (m, l, d) = (self.feature_len(), self.output_dim(), self.input_dim());
        let per = if self.is_real() { 1 } else { 4 };
        m * d + per * m * l
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = LayerRecord {
            feature_map: self.map.clone(),
            a: self.a.clone(),
            layout: self.layout.clone(),
            provenance: self.provenance,
        };
        Ok(serde_json::to_string(&rec)?)
    }

    /// Rebuilds a layer; URF draws are re-sampled from the stored seed and
    /// must reproduce the stored layout.
    pub fn from_json(s: &str) -> Result<Self> {
        let rec: LayerRecord = serde_json::from_str(s)?;
        let layer = Self::assemble(rec.feature_map, rec.a, rec.provenance)?;
        if layer.layout != rec.layout {
            return Err(SnnkError::LayoutMismatch);
        }
        Ok(layer)
    }
}

impl PartialEq for SnnkLayer {
    fn eq(&self, other: &Self) -> bool {
        self.map == other.map && self.a == other.a && self.layout == other.layout && self.provenance == other.provenance
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    feature_map: FeatureMap,
    a: DMatrix<Complex64>,
    layout: Layout,
    provenance: Provenance,
}

/// Derived layer with rows `A_i = Ψ(w_i, b_i)` under shared draws.
pub fn snnk_from_ffl(spec: &FflSpec, cfg: &UrfConfig) -> Result<SnnkLayer> {
    spec.validate()?;
    let map = FeatureMap::Urf { activation: spec.activation, config: *cfg, input_dim: spec.input_dim() };
    let (realized, layout) = SnnkLayer::realize(&map)?;
    let Realized::Urf(draws) = &realized else { unreachable!() };
    let a = psi_batch(&spec.w, &spec.b, draws)?;
    Ok(SnnkLayer {
        map,
        realized,
        a,
        layout,
        provenance: Provenance::Derived { ffl_fingerprint: spec.fingerprint(), seed: cfg.seed },
    })
}

/// `Re(A Φ(x))`.
pub fn snnk_forward(x: &[f64], layer: &SnnkLayer) -> Result<Vec<f64>> {
    if x.len() != layer.input_dim() {
        return shape_err(format!("layer expects dim {}, got {}", layer.input_dim(), x.len()));
    }
    let out = layer.forward_batch(&DMatrix::from_row_slice(1, x.len(), x))?;
    Ok(out.iter().copied().collect())
}

/// `Y = X + (v ⊙ SNNK(X))` rowwise. Columns with `v_j = 0` pass `X` through
/// untouched.
pub fn gated_residual_block(x: &DMatrix<f64>, layer: &SnnkLayer, v: &[f64]) -> Result<DMatrix<f64>> {
    let d = x.ncols();
    if layer.input_dim() != d || layer.output_dim() != d || v.len() != d {
        return shape_err(format!(
            "gated block needs d = input = output = gate length, got {d}, {}, {}, {}",
            layer.input_dim(),
            layer.output_dim(),
            v.len()
        ));
    }
    if v.iter().all(|&g| g == 0.0) {
        return Ok(x.clone());
    }
    let s = layer.forward_batch(x)?;
    let mut y = x.clone();
    for (j, &g) in v.iter().enumerate() {
        if g != 0.0 {
            for r in 0..x.nrows() {
                y[(r, j)] += g * s[(r, j)];
            }
        }
    }
    Ok(y)
}

/// Trainable parameters of a gated block with `m` random features.
pub fn gated_block_parameters(d: usize, m: usize) -> usize {
    (d + 1) * m
}
