//! Bundling: collapsing a stack of feedforward layers into one matrix acting
//! on chained random features.
//!
//! Bundling the first layer of `x ↦ f₂(W₁ f₁(W₀x + b₀) + b₁)` replaces
//! `f₁(W₀x + b₀)` by `Re(Ψ_{f₁}(W₀, b₀) Φ_{f₁}(x))`, so the next layer sees
//! the weight `W₁ Ψ_{f₁}(W₀, b₀)` applied to `Φ_{f₁}(x)`. Repeating this
//! until one layer is left and replacing it by its own `Ψ` gives
//! `y ≈ Re(W̄ x̄)` with `x̄ = Φ_{f_L}(…Φ_{f₁}(x)…)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::activations::{decomposition_for, Activation};
use crate::error::{shape_err, Result, SnnkError};
use crate::snnk::{FflSpec, SnnkLayer};
use crate::urf::{phi_batch, phi_complex_batch, psi_complex_batch, sample_draws, UrfConfig, UrfDraws};

/// One `Φ_f` map of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiStage {
    pub activation: Activation,
    pub config: UrfConfig,
    pub input_dim: usize,
    pub draws: UrfDraws,
}

impl PhiStage {
    pub fn new(activation: Activation, config: UrfConfig, input_dim: usize) -> Result<Self> {
        let d = decomposition_for(&activation).map_err(|e| match e {
            SnnkError::UnsupportedClosedForm(s) => SnnkError::UnsupportedActivation(s),
            other => other,
        })?;
        let draws = sample_draws(&d, &config, input_dim)?;
        Ok(PhiStage { activation, config, input_dim, draws })
    }

    pub fn output_dim(&self) -> usize {
        self.draws.len()
    }

    fn spec(&self) -> StageSpec {
        StageSpec { activation: self.activation, config: self.config, input_dim: self.input_dim }
    }
}

/// Applies a chain to real inputs (one per row).
fn apply_chain(chain: &[PhiStage], x: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    let Some((first, rest)) = chain.split_first() else {
        return Ok(x.map(|v| Complex64::new(v, 0.0)));
    };
    let mut h = phi_batch(x, &first.draws)?;
    for stage in rest {
        h = phi_complex_batch(&h, &stage.draws)?;
    }
    Ok(h)
}

/// Layer acting on the (possibly complex) output of the preprocessing chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLayer {
    pub w: DMatrix<Complex64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

/// `x ↦ f_L(W_{L-1} … f₁(W₀ Φ(x) + b₀) …)` with a chain `Φ` of already
/// bundled stages in front.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredNetwork {
    pub input_dim: usize,
    pub preprocess: Vec<PhiStage>,
    pub layers: Vec<ChainLayer>,
}

impl LayeredNetwork {
    pub fn from_ffls(layers: &[FflSpec]) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(SnnkError::InvalidConfig("network needs at least one layer".into()));
        };
        let mut prev = first.input_dim();
        let mut out = Vec::with_capacity(layers.len());
        for (i, l) in layers.iter().enumerate() {
            l.validate()?;
            if l.input_dim() != prev {
                return shape_err(format!("layer {i} expects dim {}, previous layer gives {prev}", l.input_dim()));
            }
            prev = l.output_dim();
            out.push(ChainLayer { w: l.w.map(|v| Complex64::new(v, 0.0)), b: l.b.clone(), activation: l.activation });
        }
        Ok(LayeredNetwork { input_dim: first.input_dim(), preprocess: Vec::new(), layers: out })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.w.nrows())
    }

    /// Real parameters of the remaining layers (complex weights count twice).
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let per = if l.w.iter().all(|v| v.im == 0.0) { 1 } else { 2 };
                per * l.w.len() + l.b.len()
            })
            .sum()
    }

    /// Forward pass, one input per row. Activations see the real part of
    /// their (complex once bundled) pre-activation.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            return shape_err(format!("network expects dim {}, got {}", self.input_dim, x.ncols()));
        }
        let h = apply_chain(&self.preprocess, x)?;
        let mut h = h;
        for l in &self.layers {
            let z = &h * l.w.transpose();
            h = DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| Complex64::new(l.activation.eval(z[(r, c)].re + l.b[c]), 0.0));
        }
        Ok(h.map(|v| v.re))
    }

    /// Flops of the exact forward pass: one multiply-add per real weight
    /// (four per complex one) plus the chain.
    pub fn flops(&self) -> usize {
        chain_flops(&self.preprocess)
            + self
                .layers
                .iter()
                .map(|l| if l.w.iter().all(|v| v.im == 0.0) { l.w.len() } else { 4 * l.w.len() })
                .sum::<usize>()
    }
}

fn chain_flops(chain: &[PhiStage]) -> usize {
    // stage 0 sees real inputs, later stages complex ones
    chain.iter().enumerate().map(|(k, s)| if k == 0 { 1 } else { 2 } * s.output_dim() * s.input_dim).sum()
}

fn chain_input_dim(net: &LayeredNetwork) -> usize {
    net.preprocess.last().map_or(net.input_dim, |s| s.output_dim())
}

/// Bundles the first remaining layer into the next one.
pub fn bundle_once(net: &LayeredNetwork, cfg: &UrfConfig) -> Result<LayeredNetwork> {
    if net.layers.len() < 2 {
        return Err(SnnkError::InvalidConfig("bundle_once needs at least two layers; use finalize".into()));
    }
    let first = &net.layers[0];
    let stage = PhiStage::new(first.activation, *cfg, chain_input_dim(net))?;
    let psi = psi_complex_batch(&first.w, &first.b, &stage.draws)?;
    let next = &net.layers[1];
    let merged = ChainLayer { w: &next.w * psi, b: next.b.clone(), activation: next.activation };
    let mut preprocess = net.preprocess.clone();
    preprocess.push(stage);
    let mut layers = vec![merged];
    layers.extend(net.layers[2..].iter().cloned());
    Ok(LayeredNetwork { input_dim: net.input_dim, preprocess, layers })
}

/// Chain of `Φ` maps and the single matrix `W̄` (`d_L × M`): `y ≈ Re(W̄ x̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundledNetwork {
    pub input_dim: usize,
    pub phi_chain: Vec<PhiStage>,
    pub w_bar: DMatrix<Complex64>,
}

/// Turns a single-layer network into a bundled one.
pub fn finalize(net: &LayeredNetwork, cfg: &UrfConfig) -> Result<BundledNetwork> {
    if net.layers.len() != 1 {
        return Err(SnnkError::InvalidConfig(format!(
            "finalize needs exactly one layer, got {}",
            net.layers.len()
        )));
    }
    let last = &net.layers[0];
    let stage = PhiStage::new(last.activation, *cfg, chain_input_dim(net))?;
    let w_bar = psi_complex_batch(&last.w, &last.b, &stage.draws)?;
    let mut phi_chain = net.preprocess.clone();
    phi_chain.push(stage);
    Ok(BundledNetwork { input_dim: net.input_dim, phi_chain, w_bar })
}

/// Builds `W̄ = Ψ_{L}(W_{L-1} Ψ_{L-1}(… W₁ Ψ₁(W₀, b₀) …, b_{L-2}), b_{L-1})`
/// directly, with `cfgs[k]` for stage `k`.
pub fn bundle_full(net: &LayeredNetwork, cfgs: &[UrfConfig]) -> Result<BundledNetwork> {
    if cfgs.len() != net.layers.len() {
        return shape_err(format!("{} layers but {} configs", net.layers.len(), cfgs.len()));
    }
    if net.layers.is_empty() {
        return Err(SnnkError::InvalidConfig("network has no layers".into()));
    }
    // stage inputs: chain output, then the feature length of each new stage
    let mut stages: Vec<PhiStage> = Vec::with_capacity(cfgs.len());
    let mut dim = chain_input_dim(net);
    for (l, cfg) in net.layers.iter().zip(cfgs) {
        let s = PhiStage::new(l.activation, *cfg, dim)?;
        dim = s.output_dim();
        stages.push(s);
    }

    fn nested(layers: &[ChainLayer], stages: &[PhiStage], k: usize) -> Result<DMatrix<Complex64>> {
        // weight fed into stage k's Ψ
        let w = if k == 0 { layers[0].w.clone() } else { &layers[k].w * nested(layers, stages, k - 1)? };
        psi_complex_batch(&w, &layers[k].b, &stages[k].draws)
    }
    let w_bar = nested(&net.layers, &stages, net.layers.len() - 1)?;
    let mut phi_chain = net.preprocess.clone();
    phi_chain.extend(stages);
    Ok(BundledNetwork { input_dim: net.input_dim, phi_chain, w_bar })
}

impl BundledNetwork {
    pub fn feature_len(&self) -> usize {
        self.w_bar.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_bar.nrows()
    }

    /// `x̄` for each row of `x`.
    pub fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
        if x.ncols() != self.input_dim {
            return shape_err(format!("network expects dim {}, got {}", self.input_dim, x.ncols()));
        }
        apply_chain(&self.phi_chain, x)
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok((self.features(x)? * self.w_bar.transpose()).map(|v| v.re))
    }

    /// Real parameters of `W̄` (complex entries count twice).
    pub fn parameter_count(&self) -> usize {
        2 * self.w_bar.len()
    }

    /// Multiply-adds of one forward pass: the chain plus two per entry of
    /// `W̄` (only the real part of the product is needed).
    pub fn flops(&self) -> usize {
        chain_flops(&self.phi_chain) + 2 * self.w_bar.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = BundledRecord {
            input_dim: self.input_dim,
            stages: self.phi_chain.iter().map(|s| s.spec()).collect(),
            w_bar: self.w_bar.clone(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    /// Rebuilds the chain from the stored configs.
    pub fn from_json(s: &str) -> Result<Self> {
        let rec: BundledRecord = serde_json::from_str(s)?;
        let phi_chain = rec
            .stages
            .iter()
            .map(|s| PhiStage::new(s.activation, s.config, s.input_dim))
            .collect::<Result<Vec<_>>>()?;
        let bn = BundledNetwork { input_dim: rec.input_dim, phi_chain, w_bar: rec.w_bar };
        if bn.phi_chain.last().map_or(bn.input_dim, |s| s.output_dim()) != bn.w_bar.ncols() {
            return Err(SnnkError::LayoutMismatch);
        }
        Ok(bn)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageSpec {
    activation: Activation,
    config: UrfConfig,
    input_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct BundledRecord {
    input_dim: usize,
    stages: Vec<StageSpec>,
    w_bar: DMatrix<Complex64>,
}

/// `Re(W̄ x̄)`.
pub fn bundled_forward(x: &[f64], bn: &BundledNetwork) -> Result<Vec<f64>> {
    Ok(bn.forward_batch(&DMatrix::from_row_slice(1, x.len(), x))?.iter().copied().collect())
}

/// An SNNK layer followed by an affine map, stored as one `M × d_out` matrix
/// on `Φ(x)`.
#[derive(Debug, Clone)]
pub struct FoldedLinear {
    pub layer: SnnkLayer,
    /// `Aᵀ W₂ᵀ`.
    pub f: DMatrix<Complex64>,
    pub bias: Vec<f64>,
}

impl FoldedLinear {
    /// `Re(Φ(x) F) + b₂` for each row of `x`.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.layer.features(x)? * &self.f;
        Ok(DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| z[(r, c)].re + self.bias[c]))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&DMatrix::from_row_slice(1, x.len(), x))?.iter().copied().collect())
    }

    /// Stored entries: `M·d_out` matrix entries plus `d_out` biases.
    pub fn parameter_count(&self) -> usize {
        self.f.len() + self.bias.len()
    }
}

/// Precomposes `x ↦ W₂ snnk(x) + b₂` into a single matrix on `Φ(x)`.
pub fn fold_following_linear(layer: &SnnkLayer, w2: &DMatrix<f64>, b2: &[f64]) -> Result<FoldedLinear> {
    if w2.ncols() != layer.output_dim() {
        return shape_err(format!("W2 has {} columns, layer outputs {}", w2.ncols(), layer.output_dim()));
    }
    if b2.len() != w2.nrows() {
        return shape_err(format!("W2 has {} rows, b2 has {} entries", w2.nrows(), b2.len()));
    }
    let f = layer.a().transpose() * w2.transpose().map(|v| Complex64::new(v, 0.0));
    Ok(FoldedLinear { layer: layer.clone(), f, bias: b2.to_vec() })
}

/// Tanh pooler `d × d` followed by a classifier `c × d`, merged.
#[derive(Debug, Clone)]
pub struct MergedPooler {
    pub folded: FoldedLinear,
    /// `(d·d + d·c) / (M·c)`.
    pub storage_ratio: f64,
}

pub fn bundle_pooler_classifier(
    wp: &DMatrix<f64>,
    bp: &[f64],
    wc: &DMatrix<f64>,
    bc: &[f64],
    cfg: &UrfConfig,
) -> Result<MergedPooler> {
    if wc.nrows() == 0 {
        return shape_err("classifier needs at least one class");
    }
    let pooler = FflSpec::new(wp.clone(), bp.to_vec(), Activation::Tanh)?;
    let layer = crate::snnk::snnk_from_ffl(&pooler, cfg)?;
    let folded = fold_following_linear(&layer, wc, bc)?;
    let (d, c, m) = (wp.ncols() as f64, wc.nrows() as f64, layer.feature_len() as f64);
    let storage_ratio = (d * d + d * c) / (m * c);
    Ok(MergedPooler { folded, storage_ratio })
}

/// Ridge least squares `argmin ‖X W - Y‖² + ridge ‖W‖²` via the normal
/// equations with one step of iterative refinement.
pub fn closed_form_regression(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if x.nrows() == 0 || x.nrows() != y.nrows() {
        return shape_err(format!("X has {} rows, Y has {}", x.nrows(), y.nrows()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(SnnkError::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
    }
    let xt = x.transpose();
    let mut gram = &xt * x;
    let scale = gram.diagonal().iter().copied().fold(0.0, f64::max);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = &xt * y;
    let chol = gram.clone().cholesky().ok_or(SnnkError::SingularSystem)?;
    if ridge == 0.0 {
        let min_pivot = chol.l_dirty().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-13 * scale) {
            return Err(SnnkError::SingularSystem);
        }
    }
    let mut w = chol.solve(&rhs);
    let residual = &rhs - &gram * &w;
    w += chol.solve(&residual);
    Ok(w)
}

/// `1e-8 · trace(XᵀX) / M`.
pub fn default_ridge(x: &DMatrix<f64>) -> f64 {
    1e-8 * x.norm_squared() / x.ncols().max(1) as f64
}

/// Objective `‖X W - Y‖² + ridge ‖W‖²`.
pub fn ridge_objective(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, ridge: f64) -> f64 {
    (x * w - y).norm_squared() + ridge * w.norm_squared()
}

/// Gradient `2(Xᵀ(XW - Y) + ridge W)`.
pub fn ridge_gradient(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    (x.transpose() * (x * w - y) + w * ridge) * 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationBound {
    /// `depth · 2 exp(-ε² / (8 m c²))`, as printed.
    pub printed: f64,
    /// `depth · 2 exp(-m ε² / (8 c²))`, the standard Azuma form.
    pub corrected: f64,
    /// `ε + δ(ε) + δ(δ(ε)) + …` with `depth - 1` compositions.
    pub accumulated_eps: f64,
}

/// Failure-probability bounds for a depth-`depth` bundle whose per-stage
/// summands are bounded by `c`.
pub fn error_propagation_bound(eps: f64, m: usize, c: f64, depth: usize, delta: impl Fn(f64) -> f64) -> PropagationBound {
    let (m, k) = (m as f64, depth as f64);
    let mut term = eps;
    let mut accumulated_eps = eps;
    for _ in 1..depth {
        term = delta(term);
        accumulated_eps += term;
    }
    PropagationBound {
        printed: k * 2.0 * (-eps * eps / (8.0 * m * c * c)).exp(),
        corrected: k * 2.0 * (-m * eps * eps / (8.0 * c * c)).exp(),
        accumulated_eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, trial_seed};
    use crate::snnk::{snnk_forward, snnk_from_ffl};
    use crate::stats::MeanSe;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sine_net(seed: u64) -> LayeredNetwork {
        let l0 = FflSpec::random(3, 4, Activation::Sine, seed);
        let l1 = FflSpec::random(4, 2, Activation::Sine, seed + 1);
        LayeredNetwork::from_ffls(&[l0, l1]).unwrap()
    }

    fn cfg(m: usize, seed: u64) -> UrfConfig {
        UrfConfig { m, a: 0.0, seed, ..Default::default() }
    }

    #[test]
    fn bundle_once_shapes_and_count() {
        let net = sine_net(1);
        let once = bundle_once(&net, &cfg(16, 3)).unwrap();
        assert_eq!(once.layer_count(), 1);
        assert_eq!(once.layers[0].w.shape(), (2, 32));
        assert!(bundle_once(&once, &cfg(16, 4)).is_err());
        let bn = finalize(&once, &cfg(16, 4)).unwrap();
        assert_eq!(bn.phi_chain.len(), 2);
        assert_eq!(bn.w_bar.shape(), (2, 32));
    }

    #[test]
    fn iterative_and_nested_agree() {
        let l0 = FflSpec::random(3, 4, Activation::Sine, 5);
        let l1 = FflSpec::random(4, 3, Activation::Tanh, 6);
        let l2 = FflSpec::random(3, 2, Activation::Sine, 7);
        let net = LayeredNetwork::from_ffls(&[l0, l1, l2]).unwrap();
        let cfgs = [cfg(8, 1), cfg(8, 2), cfg(8, 3)];
        let it = finalize(&bundle_once(&bundle_once(&net, &cfgs[0]).unwrap(), &cfgs[1]).unwrap(), &cfgs[2]).unwrap();
        let full = bundle_full(&net, &cfgs).unwrap();
        let scale = full.w_bar.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for (a, b) in it.w_bar.iter().zip(full.w_bar.iter()) {
            assert!((a - b).norm() <= 1e-12 * scale);
        }
        assert_eq!(bundle_full(&net, &cfgs).unwrap().w_bar, full.w_bar);
    }

    #[test]
    fn single_layer_matches_snnk_layer() {
        let spec = FflSpec::random(3, 2, Activation::Tanh, 2);
        let net = LayeredNetwork::from_ffls(std::slice::from_ref(&spec)).unwrap();
        let c = UrfConfig { m: 16, seed: 9, ..Default::default() };
        let bn = bundle_full(&net, &[c]).unwrap();
        let layer = snnk_from_ffl(&spec, &c).unwrap();
        let x = [0.2, -0.5, 0.1];
        let (a, b) = (bundled_forward(&x, &bn).unwrap(), snnk_forward(&x, &layer).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn bundled_sine_net_is_consistent() {
        let net = sine_net(11);
        let x = [0.3, -0.2, 0.4];
        let exact = net.forward(&DMatrix::from_row_slice(1, 3, &x)).unwrap();
        let mut outs = vec![Vec::new(); 2];
        for t in 0..500 {
            let bn = bundle_full(&net, &[cfg(256, trial_seed(3, 2 * t)), cfg(256, trial_seed(3, 2 * t + 1))]).unwrap();
            let y = bundled_forward(&x, &bn).unwrap();
            outs[0].push(y[0]);
            outs[1].push(y[1]);
        }
        for i in 0..2 {
            let s = MeanSe::of(&outs[i]);
            assert!(s.z_score(exact[(0, i)]) <= 3.0, "{s:?} vs {}", exact[(0, i)]);
        }
    }

    #[test]
    fn zero_w_bar_gives_zero_and_round_trips() {
        let mut bn = bundle_full(&sine_net(2), &[cfg(8, 1), cfg(8, 2)]).unwrap();
        let back = BundledNetwork::from_json(&bn.to_json().unwrap()).unwrap();
        assert_eq!(back, bn);
        bn.w_bar.fill(Complex64::new(0.0, 0.0));
        assert_eq!(bundled_forward(&[1.0, 2.0, 3.0], &bn).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn bundling_saves_flops_for_small_m() {
        let net = LayeredNetwork::from_ffls(&[
            FflSpec::random(256, 256, Activation::Sine, 1),
            FflSpec::random(256, 256, Activation::Sine, 2),
        ])
        .unwrap();
        let bn = bundle_full(&net, &[cfg(8, 1), cfg(8, 2)]).unwrap();
        assert!(bn.flops() < net.flops());
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, &[0]);
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn fold_matches_two_paths() {
        let spec = FflSpec::random(5, 3, Activation::Sine, 4);
        let layer = snnk_from_ffl(&spec, &UrfConfig { m: 4, ..Default::default() }).unwrap();
        assert_eq!(layer.feature_len(), 8);
        let w2 = random_matrix(16, 3, 2);
        let b2: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let folded = fold_following_linear(&layer, &w2, &b2).unwrap();
        assert_eq!(folded.parameter_count(), 8 * 16 + 16);
        let x = [0.1, 0.2, -0.3, 0.4, 0.0];
        let h = snnk_forward(&x, &layer).unwrap();
        let two = &w2 * nalgebra::DVector::from_vec(h);
        let one = folded.forward(&x).unwrap();
        for i in 0..16 {
            assert!((one[i] - (two[i] + b2[i])).abs() <= 1e-12);
        }
        let id = fold_following_linear(&layer, &DMatrix::identity(3, 3), &[0.0; 3]).unwrap();
        assert_eq!(id.f, layer.a().transpose());
        assert!(fold_following_linear(&layer, &random_matrix(2, 4, 1), &[0.0; 2]).is_err());
    }

    #[test]
    fn pooler_storage_ratio() {
        let wp = random_matrix(32, 32, 1) / 32.0;
        let wc = random_matrix(4, 32, 2);
        let cfg = UrfConfig { m: 4, ..Default::default() };
        let merged = bundle_pooler_classifier(&wp, &[0.0; 32], &wc, &[0.0; 4], &cfg).unwrap();
        assert_eq!(merged.folded.layer.feature_len(), 8);
        assert_eq!(merged.storage_ratio, 36.0);
    }

    #[test]
    fn regression_examples() {
        let w = closed_form_regression(&DMatrix::identity(2, 2), &DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), 0.0).unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 1, &[1.0, 2.0]));
        let x = random_matrix(50, 8, 3);
        let y = random_matrix(50, 2, 4);
        let w = closed_form_regression(&x, &y, 0.0).unwrap();
        let resid = &x * &w - &y;
        assert!((x.transpose() * resid).norm() <= 1e-8 * (1.0 + y.norm()));
        let w = closed_form_regression(&x, &y, 1e12).unwrap();
        assert!(w.norm() < 1e-8);
        let mut singular = x.clone();
        let c0 = singular.column(0).clone_owned();
        singular.set_column(1, &c0);
        assert!(matches!(closed_form_regression(&singular, &y, 0.0), Err(SnnkError::SingularSystem)));
        assert!(closed_form_regression(&singular, &y, 1e-3).is_ok());
    }

    #[test]
    fn ridge_solution_is_a_minimum() {
        let x = random_matrix(40, 6, 7);
        let y = random_matrix(40, 2, 8);
        let ridge = default_ridge(&x);
        let w = closed_form_regression(&x, &y, ridge).unwrap();
        assert!(ridge_gradient(&x, &y, &w, ridge).norm() <= 1e-8 * (1.0 + y.norm()));
        let base = ridge_objective(&x, &y, &w, ridge);
        for t in 0..20 {
            let dir = random_matrix(6, 2, 100 + t);
            let dir = &dir / dir.norm();
            assert!(ridge_objective(&x, &y, &(&w + dir * 1e-3), ridge) >= base);
        }
    }

    #[test]
    fn pooler_single_class_is_one_kernel_estimate() {
        let wp = random_matrix(3, 3, 5) / 3.0;
        let bp = [0.1, -0.2, 0.3];
        let cfg = UrfConfig { m: 16, seed: 2, ..Default::default() };
        let wc = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let merged = bundle_pooler_classifier(&wp, &bp, &wc, &[0.5], &cfg).unwrap();
        let x = [0.2, 0.1, -0.4];
        let direct = snnk_forward(&x, &merged.folded.layer).unwrap()[1] + 0.5;
        assert!((merged.folded.forward(&x).unwrap()[0] - direct).abs() <= 1e-12);
    }

    #[test]
    fn pooler_merge_is_unbiased() {
        let wp = random_matrix(4, 4, 1) / 4.0;
        let bp = [0.1, 0.0, -0.2, 0.3];
        let wc = random_matrix(2, 4, 2);
        let bc = [0.5, -0.5];
        let x = [0.3, -0.1, 0.2, 0.4];
        let pooled = ffl_exact(&wp, &bp, &x);
        let exact: Vec<f64> = (0..2).map(|c| (0..4).map(|j| wc[(c, j)] * pooled[j]).sum::<f64>() + bc[c]).collect();
        let mut outs = vec![Vec::new(); 2];
        for t in 0..400 {
            let cfg = UrfConfig { m: 64, seed: trial_seed(9, t), ..Default::default() };
            let y = bundle_pooler_classifier(&wp, &bp, &wc, &bc, &cfg).unwrap().folded.forward(&x).unwrap();
            outs[0].push(y[0]);
            outs[1].push(y[1]);
        }
        for c in 0..2 {
            assert!(MeanSe::of(&outs[c]).z_score(exact[c]) <= 3.0);
        }
    }

    fn ffl_exact(w: &DMatrix<f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
        let spec = FflSpec::new(w.clone(), b.to_vec(), Activation::Tanh).unwrap();
        crate::snnk::ffl_forward(x, &spec).unwrap()
    }

    #[test]
    fn error_shrinks_with_m() {
        let net = sine_net(3);
        let probes = random_matrix(10, 3, 12) * 0.3;
        let exact = net.forward(&probes).unwrap();
        let mut maes = Vec::new();
        for m in [64, 256, 1024] {
            let errs: Vec<f64> = (0..20)
                .map(|t| {
                    let bn = bundle_full(&net, &[cfg(m, trial_seed(m as u64, 2 * t)), cfg(m, trial_seed(m as u64, 2 * t + 1))]).unwrap();
                    (bn.forward_batch(&probes).unwrap() - &exact).abs().mean()
                })
                .collect();
            maes.push(MeanSe::of(&errs));
        }
        for w in maes.windows(2) {
            assert!(w[1].mean <= w[0].mean + w[0].se, "{maes:?}");
        }
    }

    #[test]
    fn bundled_forward_matches_construction() {
        let net = sine_net(4);
        let bn = bundle_full(&net, &[cfg(8, 1), cfg(8, 2)]).unwrap();
        let probes = random_matrix(5, 3, 3);
        let batch = bn.forward_batch(&probes).unwrap();
        for r in 0..5 {
            let x: Vec<f64> = probes.row(r).iter().copied().collect();
            let y = bundled_forward(&x, &bn).unwrap();
            for c in 0..2 {
                assert!((y[c] - batch[(r, c)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn propagation_bound_examples() {
        let b = error_propagation_bound(1.0, 1, 1.0, 1, |a| a);
        assert!((b.printed - 2.0 * (-0.125f64).exp()).abs() < 1e-15);
        assert_eq!(b.printed, b.corrected);
        assert!((error_propagation_bound(0.1, 4, 1.0, 3, |a| a).accumulated_eps - 0.3).abs() < 1e-15);
        let ms = [1, 2, 4, 8, 16];
        let bs: Vec<PropagationBound> = ms.iter().map(|&m| error_propagation_bound(0.5, m, 1.0, 2, |a| a)).collect();
        for w in bs.windows(2) {
            assert!(w[1].corrected <= w[0].corrected);
            assert!(w[1].printed >= w[0].printed);
        }
    }
}
