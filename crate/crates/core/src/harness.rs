//! Experiment drivers behind the command-line tool. Every run is a pure
//! function of its config, so output is identical for any thread count.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::{decomposition_for, Activation, Support};
use crate::bundling::{bundle_full, LayeredNetwork};
use crate::error::{Result, SnnkError};
use crate::rng::{derive_seed, stream_rng, trial_seed};
use crate::snnk::{arc_cosine_exact, ffl_forward, gaussian_projection, relu_snnk_features, snnk_forward, snnk_from_ffl, FeatureMap, FflSpec, SnnkLayer};
use crate::stats::MeanSe;
use crate::train::{fit_a, generate_blobs, AffineHead, Split, TrainConfig};
use crate::urf::{sample_draws, Proposal, Strategy, UrfConfig};

/// Function being estimated: an activation through a URF layer, or the
/// first-order arc-cosine kernel through ReLU features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Activation(Activation),
    ArcCosine,
}

impl Target {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arccos" | "arc_cosine" | "arc-cosine" => Ok(Target::ArcCosine),
            _ => Ok(Target::Activation(s.parse()?)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Target::Activation(a) => a.name(),
            Target::ArcCosine => "arc_cosine".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub activation: String,
    pub d: usize,
    /// Output units of the layer.
    pub l: usize,
    pub b: f64,
    /// Total feature lengths to try.
    pub p: Vec<usize>,
    /// Instantiations per feature length.
    pub s: usize,
    pub seed: u64,
    pub a: f64,
    pub strategy: Strategy,
    pub proposal: Proposal,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            activation: "sine".into(),
            d: 200,
            l: 1,
            b: 0.5,
            p: vec![8, 16, 32, 64, 128, 256, 512],
            s: 100,
            seed: 0,
            // the Λ prefactor (1 - 4A)^{d/4} makes the variance grow
            // exponentially in d for A < 0
            a: 0.0,
            strategy: Strategy::Iid,
            proposal: Proposal::Auto,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<Target> {
        let bad = |m: String| Err(SnnkError::InvalidConfig(m));
        if self.d == 0 || self.l == 0 {
            return bad(format!("d and l must be positive, got d={} l={}", self.d, self.l));
        }
        if self.p.is_empty() || self.p.contains(&0) {
            return bad("p must be a nonempty list of positive lengths".into());
        }
        if self.s < 2 {
            return bad(format!("s must be at least 2, got {}", self.s));
        }
        if !self.b.is_finite() {
            return bad("b must be finite".into());
        }
        let target = Target::parse(&self.activation)?;
        if let Target::Activation(act) = target {
            decomposition_for(&act)?;
            let block = match self.strategy {
                Strategy::Block { block_size } => block_size,
                Strategy::Iid => 1,
            };
            self.urf(block, 0).validate()?;
        }
        Ok(target)
    }

    fn urf(&self, m: usize, seed: u64) -> UrfConfig {
        UrfConfig { m, a: self.a, proposal: self.proposal, strategy: self.strategy, seed, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub activation: String,
    pub d: usize,
    /// Realized total feature length.
    pub p: usize,
    pub trial: usize,
    pub unit: usize,
    pub estimate: f64,
    pub exact: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub activation: String,
    pub p: usize,
    pub mean_rel_error: f64,
    pub std_rel_error: f64,
    pub se_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub rows: Vec<EstimateRow>,
    pub aggregates: Vec<Aggregate>,
}

pub fn rel_error(estimate: f64, exact: f64) -> f64 {
    (estimate - exact).abs() / exact.abs().max(1e-12)
}

/// Uniform(0, 1)/√d entries, the input law of the pointwise benchmark.
fn scaled_uniform(rows: usize, d: usize, seed: u64, tag: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, &[tag]);
    let s = 1.0 / (d as f64).sqrt();
    DMatrix::from_fn(rows, d, |_, _| s * rng.random::<f64>())
}

/// Feature blocks per unit of `m` (axes times atoms under concatenation).
fn blocks_per_m(act: &Activation, cfg: &UrfConfig) -> Result<usize> {
    let d = decomposition_for(act)?;
    Ok(sample_draws(&d, &UrfConfig { m: 1, strategy: Strategy::Iid, ..*cfg }, 1)?.len())
}

/// Per-block length for a total budget `p`, kept a multiple of the block size.
fn per_block(p: usize, blocks: usize, strategy: Strategy) -> usize {
    let step = match strategy {
        Strategy::Iid => 1,
        Strategy::Block { block_size } => block_size.max(1),
    };
    ((p / blocks) / step).max(1) * step
}

/// Pointwise estimation benchmark: one fixed `(x, W)` drawn from the config
/// seed, `s` independent feature instantiations per feature length.
pub fn run_pointwise(cfg: &EstimateConfig) -> Result<EstimateReport> {
    let target = cfg.validate()?;
    let x = scaled_uniform(1, cfg.d, cfg.seed, 0x78);
    let w = scaled_uniform(cfg.l, cfg.d, cfg.seed, 0x77);
    let xs: Vec<f64> = x.iter().copied().collect();

    let (exact, plan): (Vec<f64>, Vec<(usize, usize)>) = match target {
        Target::Activation(act) => {
            let spec = FflSpec::new(w.clone(), vec![cfg.b; cfg.l], act)?;
            let blocks = blocks_per_m(&act, &cfg.urf(1, 0))?;
            let plan = cfg.p.iter().map(|&p| (per_block(p, blocks, cfg.strategy), per_block(p, blocks, cfg.strategy) * blocks)).collect();
            (ffl_forward(&xs, &spec)?, plan)
        }
        Target::ArcCosine => {
            let exact = (0..cfg.l)
                .map(|j| arc_cosine_exact(1, &w.row(j).iter().copied().collect::<Vec<_>>(), &xs))
                .collect::<Result<Vec<_>>>()?;
            (exact, cfg.p.iter().map(|&p| (p, p)).collect())
        }
    };

    let jobs: Vec<(usize, usize, usize)> =
        plan.iter().flat_map(|&(m, p)| (0..cfg.s).map(move |t| (m, p, t))).collect();
    let name = target.name();
    let per_job: Vec<Vec<EstimateRow>> = jobs
        .par_iter()
        .map(|&(m, p, t)| -> Result<Vec<EstimateRow>> {
            let seed = trial_seed(derive_seed(cfg.seed, &[p as u64]), t as u64);
            let est = match target {
                Target::Activation(act) => {
                    let spec = FflSpec::new(w.clone(), vec![cfg.b; cfg.l], act)?;
                    snnk_forward(&xs, &snnk_from_ffl(&spec, &cfg.urf(m, seed))?)?
                }
                Target::ArcCosine => {
                    let g = gaussian_projection(p, cfg.d, seed);
                    let fx = relu_snnk_features(&xs, &g)?;
                    (0..cfg.l)
                        .map(|j| {
                            let fw = relu_snnk_features(&w.row(j).iter().copied().collect::<Vec<_>>(), &g)?;
                            Ok(2.0 * fw.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>())
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            Ok(est
                .iter()
                .zip(&exact)
                .enumerate()
                .map(|(unit, (&e, &x))| EstimateRow {
                    activation: name.clone(),
                    d: cfg.d,
                    p,
                    trial: t,
                    unit,
                    estimate: e,
                    exact: x,
                    rel_error: rel_error(e, x),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<EstimateRow> = per_job.into_iter().flatten().collect();
    let aggregates = aggregate(&rows);
    Ok(EstimateReport { rows, aggregates })
}

/// Per-`p` summary; the unit errors of one trial are averaged first so the
/// standard error is over independent instantiations.
fn aggregate(rows: &[EstimateRow]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let p = rows[i].p;
        let mut per_trial: Vec<f64> = Vec::new();
        while i < rows.len() && rows[i].p == p {
            let t = rows[i].trial;
            let (mut sum, mut n) = (0.0, 0);
            while i < rows.len() && rows[i].p == p && rows[i].trial == t {
                sum += rows[i].rel_error;
                n += 1;
                i += 1;
            }
            per_trial.push(sum / n as f64);
        }
        let s = MeanSe::of(&per_trial);
        out.push(Aggregate {
            activation: rows[i - 1].activation.clone(),
            p,
            mean_rel_error: s.mean,
            std_rel_error: s.std,
            se_rel_error: s.se,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    A(Vec<f64>),
    Strategy(Vec<Strategy>),
    Activation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub base: EstimateConfig,
    pub sweep: SweepAxis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// `(sweep label, report)` in the order of the values.
    pub reports: Vec<(String, EstimateReport)>,
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let variants: Vec<(String, EstimateConfig)> = match &cfg.sweep {
        SweepAxis::A(v) => v.iter().map(|&a| (format!("a={a}"), EstimateConfig { a, ..cfg.base.clone() })).collect(),
        SweepAxis::Strategy(v) => v
            .iter()
            .map(|&s| (format!("strategy={}", strategy_label(&s)), EstimateConfig { strategy: s, ..cfg.base.clone() }))
            .collect(),
        SweepAxis::Activation(v) => v
            .iter()
            .map(|a| (format!("activation={a}"), EstimateConfig { activation: a.clone(), ..cfg.base.clone() }))
            .collect(),
    };
    if variants.is_empty() {
        return Err(SnnkError::InvalidConfig("sweep needs at least one value".into()));
    }
    let reports = variants
        .into_iter()
        .map(|(label, c)| Ok((label, run_pointwise(&c)?)))
        .collect::<Result<_>>()?;
    Ok(SweepReport { reports })
}

fn strategy_label(s: &Strategy) -> String {
    match s {
        Strategy::Iid => "iid".into(),
        Strategy::Block { block_size } => format!("block:{block_size}"),
    }
}

const ROW_HEADER: [&str; 8] = ["activation", "d", "p", "trial", "unit", "estimate", "exact", "rel_error"];
const AGG_HEADER: [&str; 5] = ["activation", "p", "mean_rel_error", "std_rel_error", "se_rel_error"];

fn row_fields(r: &EstimateRow) -> Vec<String> {
    vec![
        r.activation.clone(),
        r.d.to_string(),
        r.p.to_string(),
        r.trial.to_string(),
        r.unit.to_string(),
        r.estimate.to_string(),
        r.exact.to_string(),
        r.rel_error.to_string(),
    ]
}

fn agg_fields(a: &Aggregate) -> Vec<String> {
    vec![
        a.activation.clone(),
        a.p.to_string(),
        a.mean_rel_error.to_string(),
        a.std_rel_error.to_string(),
        a.se_rel_error.to_string(),
    ]
}

fn write_table<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

impl EstimateReport {
    pub fn write_rows<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, &ROW_HEADER, self.rows.iter().map(row_fields))
    }

    pub fn write_aggregates<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, &AGG_HEADER, self.aggregates.iter().map(agg_fields))
    }
}

impl SweepReport {
    pub fn write_rows<W: Write>(&self, out: W) -> Result<()> {
        let header: Vec<&str> = std::iter::once("sweep").chain(ROW_HEADER).collect();
        let rows = self.reports.iter().flat_map(|(label, r)| {
            r.rows.iter().map(move |row| std::iter::once(label.clone()).chain(row_fields(row)).collect())
        });
        write_table(out, &header, rows)
    }

    pub fn write_aggregates<W: Write>(&self, out: W) -> Result<()> {
        let header: Vec<&str> = std::iter::once("sweep").chain(AGG_HEADER).collect();
        let rows = self.reports.iter().flat_map(|(label, r)| {
            r.aggregates.iter().map(move |a| std::iter::once(label.clone()).chain(agg_fields(a)).collect())
        });
        write_table(out, &header, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtTableConfig {
    pub activations: Vec<String>,
    pub xi_max: f64,
    pub points: usize,
    /// Unused by the table itself; accepted so every config carries a seed.
    pub seed: u64,
}

impl Default for FtTableConfig {
    fn default() -> Self {
        FtTableConfig {
            activations: ["sine", "cosine", "tanh", "sigmoid", "gelu", "swish", "smoothed_relu"].map(String::from).to_vec(),
            xi_max: 2.0,
            points: 81,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtRow {
    pub activation: String,
    pub xi: f64,
    pub re: f64,
    pub im: f64,
    /// RePlus, ReMinus, ImPlus, ImMinus.
    pub parts: [f64; 4],
}

/// Transform and its four nonnegative parts on a uniform grid. Atomic
/// transforms are listed as their atoms, with point masses in place of
/// density values.
pub fn run_ft_table(cfg: &FtTableConfig) -> Result<Vec<FtRow>> {
    if cfg.points < 2 || !(cfg.xi_max > 0.0 && cfg.xi_max.is_finite()) {
        return Err(SnnkError::InvalidConfig("ft-table needs points >= 2 and xi_max > 0".into()));
    }
    let mut rows = Vec::new();
    for name in &cfg.activations {
        let act: Activation = name.parse()?;
        let dec = decomposition_for(&act)?;
        let assemble = |xi: f64, parts: [f64; 4]| FtRow {
            activation: act.name(),
            xi,
            re: parts[0] - parts[1],
            im: parts[2] - parts[3],
            parts,
        };
        if dec.is_atomic() {
            let mut atoms: Vec<(f64, [f64; 4])> = Vec::new();
            for comp in &dec.components {
                if let Support::Atomic { atoms: list } = &comp.support {
                    for a in list {
                        let slot = match atoms.iter().position(|(x, _)| *x == a.xi) {
                            Some(i) => i,
                            None => {
                                atoms.push((a.xi, [0.0; 4]));
                                atoms.len() - 1
                            }
                        };
                        atoms[slot].1[comp.axis.index()] += a.weight;
                    }
                }
            }
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            rows.extend(atoms.into_iter().map(|(xi, p)| assemble(xi, p)));
        } else {
            let n = cfg.points;
            for i in 0..n {
                let xi = -cfg.xi_max + 2.0 * cfg.xi_max * i as f64 / (n - 1) as f64;
                rows.push(assemble(xi, dec.densities_at(xi)));
            }
        }
    }
    Ok(rows)
}

pub fn write_ft_table<W: Write>(rows: &[FtRow], out: W) -> Result<()> {
    let header = ["activation", "xi", "re", "im", "re_plus", "re_minus", "im_plus", "im_minus"];
    write_table(
        out,
        &header,
        rows.iter().map(|r| {
            let mut v = vec![r.activation.clone(), r.xi.to_string(), r.re.to_string(), r.im.to_string()];
            v.extend(r.parts.iter().map(|p| p.to_string()));
            v
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDescription {
    pub output_dim: usize,
    pub activation: String,
    /// Explicit weights (rows); drawn `N(0, 1/d)` when absent.
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
    /// Explicit biases; drawn `U(-1, 1)` when absent.
    #[serde(default)]
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    pub input_dim: usize,
    pub layers: Vec<LayerDescription>,
    pub seed: u64,
    /// Features per axis; one bundle per value.
    pub m: Vec<usize>,
    pub a: f64,
    pub probes: usize,
    /// Probe entries are `U(-probe_scale, probe_scale)`.
    pub probe_scale: f64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        BundleConfig {
            input_dim: 3,
            layers: vec![
                LayerDescription { output_dim: 4, activation: "sine".into(), weights: None, bias: None },
                LayerDescription { output_dim: 2, activation: "sine".into(), weights: None, bias: None },
            ],
            seed: 0,
            m: vec![64, 256, 1024],
            a: 0.0,
            probes: 32,
            probe_scale: 0.5,
        }
    }
}

impl BundleConfig {
    pub fn network(&self) -> Result<Vec<FflSpec>> {
        if self.layers.is_empty() {
            return Err(SnnkError::InvalidConfig("network needs at least one layer".into()));
        }
        let mut dim = self.input_dim;
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let act: Activation = l.activation.parse()?;
            let mut spec = FflSpec::random(dim, l.output_dim, act, derive_seed(self.seed, &[0x6c, i as u64]));
            if let Some(w) = &l.weights {
                if w.len() != l.output_dim || w.iter().any(|r| r.len() != dim) {
                    return Err(SnnkError::ShapeMismatch(format!("layer {i} weights must be {}x{dim}", l.output_dim)));
                }
                spec.w = DMatrix::from_fn(l.output_dim, dim, |r, c| w[r][c]);
            }
            if let Some(b) = &l.bias {
                spec.b = b.clone();
            }
            spec.validate()?;
            dim = l.output_dim;
            out.push(spec);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleRow {
    pub m: usize,
    pub layer_count_before: usize,
    pub layer_count_after: usize,
    pub params_before: usize,
    pub params_after: usize,
    pub probe_mae: f64,
}

#[derive(Debug, Clone)]
pub struct BundleReport {
    pub rows: Vec<BundleRow>,
    /// JSON artifact holding the bundled network for each `m`.
    pub artifact: serde_json::Value,
}

/// Bundles the described network for each `m` and measures the mean
/// absolute error against the exact forward pass on random probes.
pub fn run_bundle(cfg: &BundleConfig) -> Result<BundleReport> {
    if cfg.m.is_empty() || cfg.m.contains(&0) || cfg.probes == 0 {
        return Err(SnnkError::InvalidConfig("bundle needs positive m values and probes".into()));
    }
    let specs = cfg.network()?;
    let net = LayeredNetwork::from_ffls(&specs)?;
    let mut rng = stream_rng(cfg.seed, &[0x7072]);
    let s = cfg.probe_scale;
    let probes = DMatrix::from_fn(cfg.probes, cfg.input_dim, |_, _| rng.random_range(-s..=s));
    let exact = net.forward(&probes)?;
    let params_before = specs.iter().map(|l| l.w.len() + l.b.len()).sum();

    let built: Vec<(BundleRow, serde_json::Value)> = cfg
        .m
        .par_iter()
        .map(|&m| -> Result<_> {
            let cfgs: Vec<UrfConfig> = (0..specs.len())
                .map(|k| UrfConfig { m, a: cfg.a, seed: derive_seed(cfg.seed, &[0x62, m as u64, k as u64]), ..Default::default() })
                .collect();
            let bn = bundle_full(&net, &cfgs)?;
            let mae = (bn.forward_batch(&probes)? - &exact).abs().mean();
            let row = BundleRow {
                m,
                layer_count_before: specs.len(),
                layer_count_after: 1,
                params_before,
                params_after: bn.parameter_count(),
                probe_mae: mae,
            };
            let json: serde_json::Value = serde_json::from_str(&bn.to_json()?)?;
            Ok((row, serde_json::json!({ "m": m, "network": json })))
        })
        .collect::<Result<_>>()?;
    let (rows, nets): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    Ok(BundleReport { rows, artifact: serde_json::json!({ "bundles": nets }) })
}

impl BundleReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let header = ["m", "layer_count_before", "layer_count_after", "params_before", "params_after", "probe_mae"];
        write_table(
            out,
            &header,
            self.rows.iter().map(|r| {
                vec![
                    r.m.to_string(),
                    r.layer_count_before.to_string(),
                    r.layer_count_after.to_string(),
                    r.params_before.to_string(),
                    r.params_after.to_string(),
                    r.probe_mae.to_string(),
                ]
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobsConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub separation: f64,
    /// Rows used for training; the rest are validation.
    pub n_train: usize,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        BlobsConfig { n: 600, d: 4, k: 3, separation: 10.0, n_train: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerChoice {
    /// ReLU features with a projection of `features` rows.
    Relu { features: usize, output_dim: usize },
    /// URF features of an activation with `m` features per axis.
    Urf { activation: String, m: usize, a: f64, output_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub data: BlobsConfig,
    pub layer: LayerChoice,
    pub head: bool,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            seed: 0,
            data: BlobsConfig::default(),
            layer: LayerChoice::Relu { features: 32, output_dim: 8 },
            head: true,
            train: TrainConfig {
                learning_rate: 0.05,
                epochs: 30,
                batch_size: 32,
                loss: crate::train::Loss::CrossEntropy,
                seed: 0,
                l2: 0.0,
                momentum: 0.9,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Blobs classification with a learnable-`A` layer; the run seed drives the
/// data, the features, the initialization and the batch order.
pub fn run_train(cfg: &TrainRunConfig) -> Result<Vec<TrainRow>> {
    let data = generate_blobs(cfg.data.n, cfg.data.d, cfg.data.k, cfg.data.separation, derive_seed(cfg.seed, &[0x64]))?;
    let (train, val) = data.split_at(cfg.data.n_train)?;
    let d = cfg.data.d;
    let layer = match &cfg.layer {
        LayerChoice::Relu { features, output_dim } => {
            let g = gaussian_projection(*features, d, derive_seed(cfg.seed, &[0x67]));
            SnnkLayer::learnable(FeatureMap::Relu { g }, *output_dim, derive_seed(cfg.seed, &[0x61]))?
        }
        LayerChoice::Urf { activation, m, a, output_dim } => {
            let config = UrfConfig { m: *m, a: *a, seed: derive_seed(cfg.seed, &[0x67]), ..Default::default() };
            let map = FeatureMap::Urf { activation: activation.parse()?, config, input_dim: d };
            SnnkLayer::learnable(map, *output_dim, derive_seed(cfg.seed, &[0x61]))?
        }
    };
    let head = cfg.head.then(|| AffineHead::random(layer.output_dim(), cfg.data.k, derive_seed(cfg.seed, &[0x68])));
    let tc = TrainConfig { seed: derive_seed(cfg.seed, &[0x74]), ..cfg.train };
    let out = fit_a(&layer, head.as_ref(), &train, Some(&val), &tc)?;
    Ok(out
        .history
        .into_iter()
        .map(|r| TrainRow { epoch: r.epoch, split: r.split, loss: r.loss, accuracy: r.accuracy })
        .collect())
}

pub fn write_train_rows<W: Write>(rows: &[TrainRow], out: W) -> Result<()> {
    write_table(
        out,
        &["epoch", "split", "loss", "accuracy"],
        rows.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                r.split.as_str().to_string(),
                r.loss.to_string(),
                r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            ]
        }),
    )
}
