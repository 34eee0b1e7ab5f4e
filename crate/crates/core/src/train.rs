//! Training the feature-weight matrix `A` of an SNNK layer with frozen
//! features, plus a toy data generator and gradient checks.
//!
//! With `Φ(x)` cached, `Re(Φ(x) Aᵀ) = [Re Φ, -Im Φ] [Re A, Im A]ᵀ`, so the
//! layer is linear in the real parameters `P = [Re A, Im A]` (only `Re A` for
//! real features) and gradients are exact matrix products.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, SnnkError};
use crate::rng::stream_rng;
use crate::snnk::SnnkLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(DMatrix<f64>),
    Classes { labels: Vec<usize>, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Targets,
    pub split: Split,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Targets, split: Split) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(SnnkError::InvalidConfig("dataset needs at least one row".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SnnkError::InvalidConfig("inputs must be finite".into()));
        }
        match &y {
            Targets::Regression(t) => {
                if t.nrows() != x.nrows() {
                    return shape_err(format!("{} inputs but {} targets", x.nrows(), t.nrows()));
                }
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(SnnkError::InvalidConfig("targets must be finite".into()));
                }
            }
            Targets::Classes { labels, k } => {
                if labels.len() != x.nrows() {
                    return shape_err(format!("{} inputs but {} labels", x.nrows(), labels.len()));
                }
                if let Some(bad) = labels.iter().find(|&&c| c >= *k) {
                    return Err(SnnkError::InvalidConfig(format!("label {bad} out of range for {k} classes")));
                }
            }
        }
        Ok(Dataset { x, y, split })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Output width the model must produce: target columns or class count.
    pub fn target_dim(&self) -> usize {
        match &self.y {
            Targets::Regression(t) => t.ncols(),
            Targets::Classes { k, .. } => *k,
        }
    }

    fn rows(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select_rows(idx);
        let y = match &self.y {
            Targets::Regression(t) => Targets::Regression(t.select_rows(idx)),
            Targets::Classes { labels, k } => Targets::Classes { labels: idx.iter().map(|&i| labels[i]).collect(), k: *k },
        };
        Dataset { x, y, split: self.split }
    }

    /// First `n_train` rows as the training split, the rest as validation.
    pub fn split_at(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(SnnkError::InvalidConfig(format!("cannot split {} rows at {n_train}", self.len())));
        }
        let train: Vec<usize> = (0..n_train).collect();
        let val: Vec<usize> = (n_train..self.len()).collect();
        let mut a = self.rows(&train);
        let mut b = self.rows(&val);
        a.split = Split::Train;
        b.split = Split::Validation;
        Ok((a, b))
    }
}

/// `k` unit-variance Gaussian clusters in `d` dimensions whose means are at
/// least `separation` apart. Row `i` belongs to class `i mod k`.
pub fn generate_blobs(n: usize, d: usize, k: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || d == 0 || n == 0 {
        return Err(SnnkError::InvalidConfig(format!("need n >= 1, d >= 1, k >= 2; got n={n} d={d} k={k}")));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(SnnkError::InvalidConfig(format!("separation must be positive, got {separation}")));
    }
    let mut rng = stream_rng(seed, &[0x626c_6f62]);
    let mut means = DMatrix::from_fn(k, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut min_dist = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            min_dist = min_dist.min((means.row(i) - means.row(j)).norm());
        }
    }
    means *= separation / min_dist;
    let x = DMatrix::from_fn(n, d, |r, c| means[(r % k, c)] + rng.sample::<f64, _>(StandardNormal));
    let labels = (0..n).map(|i| i % k).collect();
    Dataset::new(x, Targets::Classes { labels, k }, Split::Train)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    pub seed: u64,
    pub l2: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.1, epochs: 50, batch_size: 32, loss: Loss::Mse, seed: 0, l2: 0.0, momentum: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(SnnkError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(format!("batch_size must be in 1..={n}, got {}", self.batch_size));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be >= 0, got {}", self.l2));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}

/// `h ↦ W h + b` on the layer output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineHead {
    pub w: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl AffineHead {
    /// `W ~ N(0, 1/in)`, `b = 0`.
    pub fn random(input: usize, output: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, &[0x6865_6164]);
        let s = 1.0 / (input.max(1) as f64).sqrt();
        AffineHead { w: DMatrix::from_fn(output, input, |_, _| s * rng.sample::<f64, _>(StandardNormal)), b: vec![0.0; output] }
    }

    pub fn parameter_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Frozen features in realified form plus the trainable state.
struct Problem {
    feats: DMatrix<f64>,
    complex: bool,
    m: usize,
}

impl Problem {
    fn new(layer: &SnnkLayer, x: &DMatrix<f64>) -> Result<Self> {
        let phi = layer.features(x)?;
        let m = phi.ncols();
        let complex = !layer.is_real();
        let feats = if complex {
            DMatrix::from_fn(phi.nrows(), 2 * m, |r, c| if c < m { phi[(r, c)].re } else { -phi[(r, c - m)].im })
        } else {
            phi.map(|v| v.re)
        };
        Ok(Problem { feats, complex, m })
    }
}

fn params_of(layer: &SnnkLayer) -> DMatrix<f64> {
    let a = layer.a();
    if layer.is_real() {
        a.map(|v| v.re)
    } else {
        let m = a.ncols();
        DMatrix::from_fn(a.nrows(), 2 * m, |r, c| if c < m { a[(r, c)].re } else { a[(r, c - m)].im })
    }
}

fn a_of(p: &DMatrix<f64>, complex: bool, m: usize) -> DMatrix<Complex64> {
    if complex {
        DMatrix::from_fn(p.nrows(), m, |r, c| Complex64::new(p[(r, c)], p[(r, c + m)]))
    } else {
        p.map(|v| Complex64::new(v, 0.0))
    }
}

/// Loss value and gradient with respect to the model output (`n × k`).
fn loss_and_grad(out: &DMatrix<f64>, y: &Targets, loss: Loss) -> Result<(f64, DMatrix<f64>)> {
    let n = out.nrows() as f64;
    match (loss, y) {
        (Loss::Mse, Targets::Regression(t)) => {
            if t.shape() != out.shape() {
                return shape_err(format!("model outputs {:?}, targets are {:?}", out.shape(), t.shape()));
            }
            let diff = out - t;
            Ok((diff.norm_squared() / n, diff * (2.0 / n)))
        }
        (Loss::Mse, Targets::Classes { labels, k }) => {
            if out.ncols() != *k {
                return shape_err(format!("model outputs {} columns for {k} classes", out.ncols()));
            }
            let t = DMatrix::from_fn(out.nrows(), *k, |r, c| if labels[r] == c { 1.0 } else { 0.0 });
            let diff = out - t;
            Ok((diff.norm_squared() / n, diff * (2.0 / n)))
        }
        (Loss::CrossEntropy, Targets::Classes { labels, k }) => {
            if out.ncols() != *k {
                return shape_err(format!("model outputs {} columns for {k} classes", out.ncols()));
            }
            let mut grad = DMatrix::zeros(out.nrows(), *k);
            let mut total = 0.0;
            for r in 0..out.nrows() {
                let row = out.row(r);
                let mx = row.max();
                let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                total += lse - row[labels[r]];
                for c in 0..*k {
                    let p = (row[c] - lse).exp();
                    grad[(r, c)] = (p - if labels[r] == c { 1.0 } else { 0.0 }) / n;
                }
            }
            Ok((total / n, grad))
        }
        (Loss::CrossEntropy, Targets::Regression(_)) => {
            Err(SnnkError::InvalidConfig("cross-entropy needs class labels".into()))
        }
    }
}

fn accuracy(out: &DMatrix<f64>, y: &Targets) -> Option<f64> {
    let Targets::Classes { labels, .. } = y else { return None };
    let hits = (0..out.nrows()).filter(|&r| out.row(r).transpose().argmax().0 == labels[r]).count();
    Some(hits as f64 / out.nrows() as f64)
}

struct Grads {
    p: DMatrix<f64>,
    head: Option<(DMatrix<f64>, Vec<f64>)>,
}

/// Loss (with the l2 penalty on `P` and the head weights) and its gradient.
fn objective(
    feats: &DMatrix<f64>,
    y: &Targets,
    p: &DMatrix<f64>,
    head: Option<&AffineHead>,
    loss: Loss,
    l2: f64,
) -> Result<(f64, DMatrix<f64>, Grads)> {
    let h = feats * p.transpose();
    let out = match head {
        Some(hd) => {
            let mut o = &h * hd.w.transpose();
            for mut row in o.row_iter_mut() {
                for (v, b) in row.iter_mut().zip(&hd.b) {
                    *v += b;
                }
            }
            o
        }
        None => h.clone(),
    };
    let (mut value, g) = loss_and_grad(&out, y, loss)?;
    let (dh, head_grad) = match head {
        Some(hd) => {
            let mut gw = g.transpose() * &h;
            let gb: Vec<f64> = g.column_iter().map(|c| c.sum()).collect();
            if l2 > 0.0 {
                value += l2 * hd.w.norm_squared();
                gw += &hd.w * (2.0 * l2);
            }
            (&g * &hd.w, Some((gw, gb)))
        }
        None => (g, None),
    };
    let mut gp = dh.transpose() * feats;
    if l2 > 0.0 {
        value += l2 * p.norm_squared();
        gp += p * (2.0 * l2);
    }
    Ok((value, out, Grads { p: gp, head: head_grad }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub layer: SnnkLayer,
    pub head: Option<AffineHead>,
    /// Epoch 0 is the initial state; each epoch has a train record and, if
    /// validation data was given, a validation record.
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn final_loss(&self, split: Split) -> Option<f64> {
        self.history.iter().rev().find(|r| r.split == split).map(|r| r.loss)
    }

    pub fn final_accuracy(&self, split: Split) -> Option<f64> {
        self.history.iter().rev().find(|r| r.split == split).and_then(|r| r.accuracy)
    }
}

fn check_shapes(layer: &SnnkLayer, head: Option<&AffineHead>, data: &Dataset) -> Result<()> {
    if data.dim() != layer.input_dim() {
        return shape_err(format!("layer expects dim {}, data has {}", layer.input_dim(), data.dim()));
    }
    let width = match head {
        Some(h) => {
            if h.w.ncols() != layer.output_dim() || h.b.len() != h.w.nrows() {
                return shape_err(format!("head {:?} does not fit layer output {}", h.w.shape(), layer.output_dim()));
            }
            h.w.nrows()
        }
        None => layer.output_dim(),
    };
    if width != data.target_dim() {
        return shape_err(format!("model outputs {width} columns, targets need {}", data.target_dim()));
    }
    Ok(())
}

/// Mini-batch SGD (with optional momentum) on `A` and the head. Batches are
/// reshuffled every epoch from `cfg.seed`.
pub fn fit_a(
    layer: &SnnkLayer,
    head: Option<&AffineHead>,
    train: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate(train.len())?;
    check_shapes(layer, head, train)?;
    let prob = Problem::new(layer, &train.x)?;
    let val = match validation {
        Some(v) => {
            check_shapes(layer, head, v)?;
            Some((Problem::new(layer, &v.x)?, v))
        }
        None => None,
    };
    let mut p = params_of(layer);
    let mut head = head.cloned();
    let mut vel_p = DMatrix::zeros(p.nrows(), p.ncols());
    let mut vel_head = head.as_ref().map(|h| (DMatrix::zeros(h.w.nrows(), h.w.ncols()), vec![0.0; h.b.len()]));
    let mut history = Vec::new();

    let record = |epoch: usize, p: &DMatrix<f64>, head: Option<&AffineHead>, history: &mut Vec<EpochRecord>| -> Result<f64> {
        let (loss, out, _) = objective(&prob.feats, &train.y, p, head, cfg.loss, cfg.l2)?;
        history.push(EpochRecord { epoch, split: Split::Train, loss, accuracy: accuracy(&out, &train.y) });
        if let Some((vp, vd)) = &val {
            let (vl, vo, _) = objective(&vp.feats, &vd.y, p, head, cfg.loss, cfg.l2)?;
            history.push(EpochRecord { epoch, split: Split::Validation, loss: vl, accuracy: accuracy(&vo, &vd.y) });
        }
        Ok(loss)
    };

    let initial = record(0, &p, head.as_ref(), &mut history)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = stream_rng(cfg.seed, &[0x7368_7566, epoch as u64]);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.rows(chunk);
            let feats = prob.feats.select_rows(chunk);
            let (_, _, g) = objective(&feats, &batch.y, &p, head.as_ref(), cfg.loss, cfg.l2)?;
            vel_p = &vel_p * cfg.momentum - g.p * cfg.learning_rate;
            p += &vel_p;
            if let (Some(h), Some((vw, vb)), Some((gw, gb))) = (head.as_mut(), vel_head.as_mut(), g.head) {
                *vw = &*vw * cfg.momentum - gw * cfg.learning_rate;
                h.w += &*vw;
                for ((b, v), g) in h.b.iter_mut().zip(vb.iter_mut()).zip(&gb) {
                    *v = *v * cfg.momentum - cfg.learning_rate * g;
                    *b += *v;
                }
            }
        }
        let loss = record(epoch, &p, head.as_ref(), &mut history)?;
        if !loss.is_finite() || loss > 10.0 * initial {
            return Err(SnnkError::DivergenceDetected { epoch, loss, initial });
        }
    }
    let mut layer = layer.clone();
    layer.set_a(a_of(&p, prob.complex, prob.m))?;
    Ok(TrainOutcome { layer, head, history })
}

/// Largest relative difference between the analytic gradient (over `A` and
/// the head) and central differences with step `1e-5`. Each entry is
/// compared relative to `max(|analytic|, |numeric|, 1e-3 · largest analytic
/// entry)` so near-zero entries do not dominate.
pub fn grad_check(layer: &SnnkLayer, head: Option<&AffineHead>, data: &Dataset, loss: Loss) -> Result<f64> {
    check_shapes(layer, head, data)?;
    let prob = Problem::new(layer, &data.x)?;
    let p0 = params_of(layer);
    let (_, _, g) = objective(&prob.feats, &data.y, &p0, head, loss, 0.0)?;
    let h = 1e-5;
    let f = |p: &DMatrix<f64>, hd: Option<&AffineHead>| objective(&prob.feats, &data.y, p, hd, loss, 0.0).map(|r| r.0);

    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for i in 0..p0.len() {
        let (mut up, mut dn) = (p0.clone(), p0.clone());
        up[i] += h;
        dn[i] -= h;
        pairs.push((g.p[i], (f(&up, head)? - f(&dn, head)?) / (2.0 * h)));
    }
    if let (Some(hd), Some((gw, gb))) = (head, &g.head) {
        for i in 0..hd.w.len() {
            let (mut up, mut dn) = (hd.clone(), hd.clone());
            up.w[i] += h;
            dn.w[i] -= h;
            pairs.push((gw[i], (f(&p0, Some(&up))? - f(&p0, Some(&dn))?) / (2.0 * h)));
        }
        for i in 0..hd.b.len() {
            let (mut up, mut dn) = (hd.clone(), hd.clone());
            up.b[i] += h;
            dn.b[i] -= h;
            pairs.push((gb[i], (f(&p0, Some(&up))? - f(&p0, Some(&dn))?) / (2.0 * h)));
        }
    }
    let scale = pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    Ok(pairs
        .iter()
        .map(|&(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max))
}

/// Least-squares `W̄` for a bundled network on data: regresses `Y` on the
/// realified chain features and writes the result back as a complex `W̄`.
pub fn fit_bundled(
    bn: &crate::bundling::BundledNetwork,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ridge: Option<f64>,
) -> Result<crate::bundling::BundledNetwork> {
    let phi = bn.features(x)?;
    let m = phi.ncols();
    let feats = DMatrix::from_fn(phi.nrows(), 2 * m, |r, c| if c < m { phi[(r, c)].re } else { -phi[(r, c - m)].im });
    let ridge = ridge.unwrap_or_else(|| crate::bundling::default_ridge(&feats));
    let w = crate::bundling::closed_form_regression(&feats, y, ridge)?;
    let mut out = bn.clone();
    out.w_bar = DMatrix::from_fn(y.ncols(), m, |r, c| Complex64::new(w[(c, r)], w[(c + m, r)]));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::bundling::{bundle_full, closed_form_regression, LayeredNetwork};
    use crate::snnk::gaussian_projection;
    use crate::snnk::{FeatureMap, FflSpec};
    use crate::urf::UrfConfig;

    fn urf_layer(d: usize, l: usize, m: usize, seed: u64) -> SnnkLayer {
        let map = FeatureMap::Urf { activation: Activation::Tanh, config: UrfConfig { m, seed, ..Default::default() }, input_dim: d };
        SnnkLayer::learnable(map, l, seed + 1).unwrap()
    }

    fn regression_data(n: usize, d: usize, k: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, &[1]);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, k, |r, c| (x.row(r).sum() * (c + 1) as f64).sin());
        Dataset::new(x, Targets::Regression(y), Split::Train).unwrap()
    }

    #[test]
    fn blobs_shapes_and_determinism() {
        let a = generate_blobs(100, 3, 4, 2.0, 5).unwrap();
        assert_eq!(a.len(), 100);
        let Targets::Classes { labels, k } = &a.y else { panic!() };
        assert_eq!(*k, 4);
        assert!(labels.iter().all(|&c| c < 4));
        assert_eq!(a, generate_blobs(100, 3, 4, 2.0, 5).unwrap());
        assert!(generate_blobs(10, 2, 1, 1.0, 0).is_err());
    }

    #[test]
    fn separated_blobs_are_linearly_separable() {
        // LDA with the true equal-covariance model: sign of the projection
        // onto the difference of class means.
        let data = generate_blobs(400, 2, 2, 10.0, 3).unwrap();
        let Targets::Classes { labels, .. } = &data.y else { panic!() };
        let mean = |c: usize| {
            let rows: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == c).collect();
            data.x.select_rows(&rows).row_mean()
        };
        let (m0, m1) = (mean(0), mean(1));
        assert!((&m1 - &m0).norm() > 8.0);
        let dir = &m1 - &m0;
        let mid = (&m0 + &m1) * 0.5;
        let hits = (0..data.len()).filter(|&i| ((data.x.row(i) - &mid).dot(&dir) > 0.0) == (labels[i] == 1)).count();
        assert!(hits as f64 / data.len() as f64 >= 0.99);
    }

    #[test]
    fn zero_epochs_leave_layer_unchanged() {
        let layer = urf_layer(3, 2, 8, 1);
        let data = regression_data(20, 3, 2, 2);
        let cfg = TrainConfig { epochs: 0, batch_size: 20, ..Default::default() };
        let out = fit_a(&layer, None, &data, None, &cfg).unwrap();
        assert_eq!(out.layer, layer);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn full_batch_gd_reaches_normal_equations() {
        let layer = SnnkLayer::learnable(FeatureMap::Relu { g: gaussian_projection(8, 3, 1) }, 1, 5).unwrap();
        let data = regression_data(60, 3, 1, 5);
        let prob = Problem::new(&layer, &data.x).unwrap();
        let Targets::Regression(y) = &data.y else { panic!() };
        let w = closed_form_regression(&prob.feats, y, crate::bundling::default_ridge(&prob.feats)).unwrap();
        let best = (&prob.feats * &w - y).norm_squared() / data.len() as f64;
        // step 1/L for L the largest curvature of the mean squared loss
        let gram = prob.feats.transpose() * &prob.feats * (2.0 / data.len() as f64);
        let lmax = gram.symmetric_eigenvalues().max();
        let cfg = TrainConfig { learning_rate: 1.0 / lmax, epochs: 100, batch_size: 60, momentum: 0.9, ..Default::default() };
        let out = fit_a(&layer, None, &data, None, &cfg).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|r| r.loss).collect();
        assert!(out.final_loss(Split::Train).unwrap() <= best + 1e-3, "{losses:?} vs {best}");
        let plain = TrainConfig { momentum: 0.0, ..cfg };
        let out = fit_a(&layer, None, &data, None, &plain).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-15);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let layer = urf_layer(3, 1, 8, 4);
        let data = regression_data(30, 3, 1, 5);
        let cfg = TrainConfig { learning_rate: 1e3, epochs: 20, batch_size: 30, ..Default::default() };
        assert!(matches!(fit_a(&layer, None, &data, None, &cfg), Err(SnnkError::DivergenceDetected { .. })));
    }

    #[test]
    fn training_is_deterministic() {
        let layer = urf_layer(3, 2, 8, 6);
        let data = regression_data(40, 3, 2, 7);
        let cfg = TrainConfig { epochs: 5, batch_size: 8, learning_rate: 0.05, momentum: 0.5, ..Default::default() };
        let a = fit_a(&layer, None, &data, None, &cfg).unwrap();
        let b = fit_a(&layer, None, &data, None, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.layer, b.layer);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let layer = urf_layer(3, 4, 4, 8);
        let reg = regression_data(10, 3, 2, 9);
        let head = AffineHead::random(4, 2, 3);
        assert!(grad_check(&layer, Some(&head), &reg, Loss::Mse).unwrap() <= 1e-5);
        let blobs = generate_blobs(12, 3, 3, 1.0, 2).unwrap();
        let head3 = AffineHead::random(4, 3, 4);
        assert!(grad_check(&layer, Some(&head3), &blobs, Loss::CrossEntropy).unwrap() <= 1e-4);
        let mut zero = layer.clone();
        zero.set_a(DMatrix::zeros(4, layer.feature_len())).unwrap();
        assert!(grad_check(&zero, Some(&head), &reg, Loss::Mse).unwrap() <= 1e-5);
        let g = gaussian_projection(6, 3, 1);
        let relu = SnnkLayer::learnable(FeatureMap::Relu { g }, 3, 5).unwrap();
        assert!(grad_check(&relu, None, &blobs, Loss::CrossEntropy).unwrap() <= 1e-4);
    }

    #[test]
    fn relu_layer_classifies_blobs() {
        let data = generate_blobs(600, 4, 3, 10.0, 11).unwrap();
        let (train, val) = data.split_at(400).unwrap();
        let g = gaussian_projection(32, 4, 2);
        let layer = SnnkLayer::learnable(FeatureMap::Relu { g }, 8, 3).unwrap();
        let head = AffineHead::random(8, 3, 4);
        let cfg = TrainConfig { loss: Loss::CrossEntropy, epochs: 30, batch_size: 32, learning_rate: 0.05, momentum: 0.9, ..Default::default() };
        let out = fit_a(&layer, Some(&head), &train, Some(&val), &cfg).unwrap();
        assert!(out.final_accuracy(Split::Validation).unwrap() >= 0.95, "{:?}", out.history.last());
        assert_eq!(out.layer.trainable_parameters(), 8 * 32);
        // Im A stays zero for real features
        assert!(out.layer.a().iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn compression_counts() {
        let g = gaussian_projection(32, 512, 1);
        let layer = SnnkLayer::learnable(FeatureMap::Relu { g }, 512, 2).unwrap();
        assert_eq!(layer.trainable_parameters(), 16384);
        assert_eq!(512 * 512, 262_144);
    }

    #[test]
    fn fitted_bundle_beats_random_bundle() {
        let net = LayeredNetwork::from_ffls(&[
            FflSpec::random(3, 4, Activation::Sine, 1),
            FflSpec::random(4, 2, Activation::Sine, 2),
        ])
        .unwrap();
        let cfg = |s| UrfConfig { m: 32, a: 0.0, seed: s, ..Default::default() };
        let bn = bundle_full(&net, &[cfg(1), cfg(2)]).unwrap();
        let data = regression_data(200, 3, 1, 3);
        let y = net.forward(&data.x).unwrap();
        let fitted = fit_bundled(&bn, &data.x, &y, None).unwrap();
        let err = |b: &crate::bundling::BundledNetwork| (b.forward_batch(&data.x).unwrap() - &y).norm();
        assert!(err(&fitted) <= err(&bn));
    }
}
