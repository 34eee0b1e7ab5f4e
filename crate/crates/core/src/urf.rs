//! Universal random features.
//!
//! For an activation with transform split into parts `p_j` and masses `c_j`,
//! `f(wᵀx + b) = Σ_j c_j E_{xi~p_j}[exp(2πi xi b) exp(2πi xi wᵀx)]`, and the
//! inner exponential is linearized with the positive softmax-kernel feature
//! `Λ_g`. Feature `i` on axis `j` is
//!
//! * `Φ_i(x)      = Λ_{g_i}(2πi xi_i x) / √m`
//! * `Ψ_i(w, b)   = c_j r_i exp(2πi xi_i b) Λ_{g_i}(w) / √m`
//!
//! and `Re Σ_i Φ_i Ψ_i` is an unbiased estimate of `f(wᵀx + b)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::activations::{Axis, FourierDecomposition, Support};
use crate::error::{shape_err, Result, SnnkError};
use crate::rng::stream_rng;

const TAG_XI: u64 = 0;
const TAG_G: u64 = 1;

/// Sampling distribution for the frequencies of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    /// Exact for atoms and closed-form densities, grid-categorical for
    /// tabulated ones.
    #[default]
    Auto,
    /// Draw from the component itself (ratio 1).
    Exact,
    /// Categorical over the nodes of a tabulated density, weighted by the
    /// trapezoid masses (ratio 1).
    Grid,
    /// `N(0, sigma²)` with importance ratio `p(xi) / N(xi; 0, sigma²)`.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Iid,
    /// One frequency per block of `block_size` consecutive draws, fresh `g` each.
    Block { block_size: usize },
}

/// How atomic axes are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AtomMode {
    /// One block of `m` features per atom, frequency fixed, ratio = atom probability.
    #[default]
    Concat,
    /// `m` features per axis with atoms drawn by probability.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UrfConfig {
    /// Features per axis (per atom under [`AtomMode::Concat`]).
    pub m: usize,
    /// Shape parameter of `Λ_g`, `a <= 0`.
    pub a: f64,
    pub proposal: Proposal,
    pub strategy: Strategy,
    pub atoms: AtomMode,
    pub seed: u64,
}

impl Default for UrfConfig {
    fn default() -> Self {
        UrfConfig {
            m: 64,
            a: -0.1,
            proposal: Proposal::Auto,
            strategy: Strategy::Iid,
            atoms: AtomMode::Concat,
            seed: 0,
        }
    }
}

impl UrfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(SnnkError::InvalidConfig("m must be at least 1".into()));
        }
        if !(self.a <= 0.0 && self.a.is_finite()) {
            return Err(SnnkError::InvalidConfig(format!("A must be <= 0, got {}", self.a)));
        }
        if let Strategy::Block { block_size } = self.strategy {
            if block_size == 0 || !self.m.is_multiple_of(block_size) {
                return Err(SnnkError::InvalidConfig(format!(
                    "block size {block_size} must divide m = {}",
                    self.m
                )));
            }
        }
        if let Proposal::Gaussian { sigma } = self.proposal {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(SnnkError::InvalidConfig("gaussian proposal needs sigma > 0".into()));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }
}

/// Contiguous run of features belonging to one axis (and one atom).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub axis: Axis,
    pub atom: Option<usize>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    /// `(segment, start)` pairs.
    pub fn ranges(&self) -> impl Iterator<Item = (&Segment, std::ops::Range<usize>)> {
        self.segments.iter().scan(0, |start, s| {
            let r = *start..*start + s.len;
            *start += s.len;
            Some((s, r))
        })
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        self.segments.iter().filter(|s| s.axis == axis).map(|s| s.len).sum()
    }
}

/// One instantiation of the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct UrfDraws {
    pub dim: usize,
    pub a: f64,
    pub m: usize,
    pub layout: Layout,
    /// Frequency of each feature.
    pub xi: Vec<f64>,
    /// Importance ratio of each feature.
    pub ratio: Vec<f64>,
    /// Gaussian vectors, one row per feature.
    pub g: DMatrix<f64>,
    /// Complex mass `c_j` of each feature's axis.
    pub coeff: Vec<Complex64>,
    g_norm2: Vec<f64>,
}

impl UrfDraws {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// `(xi, g)` pairs of one axis, in feature order.
    pub fn axis_pairs(&self, axis: Axis) -> Vec<(f64, Vec<f64>)> {
        self.layout
            .ranges()
            .filter(|(s, _)| s.axis == axis)
            .flat_map(|(_, r)| r)
            .map(|i| (self.xi[i], self.g.row(i).iter().copied().collect()))
            .collect()
    }

    fn scale(&self) -> f64 {
        1.0 / (self.m as f64).sqrt()
    }

    fn log_prefactor(&self) -> f64 {
        self.dim as f64 / 4.0 * (1.0 - 4.0 * self.a).ln()
    }
}

/// Complex embedding together with the layout that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<Complex64>,
    pub layout: Layout,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Estimate of `f(wᵀx + b)` and the discarded imaginary part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub value: f64,
    pub imag: f64,
}

/// `Λ_g(z) = (1-4A)^{d/4} exp(A‖g‖² + √(1-4A) gᵀz - zᵀz/2)` with the
/// bilinear square `zᵀz`.
pub fn lambda_feature(g: &[f64], z: &[Complex64], a: f64) -> Result<Complex64> {
    if g.len() != z.len() {
        return shape_err(format!("g has dim {}, z has dim {}", g.len(), z.len()));
    }
    let g2: f64 = g.iter().map(|v| v * v).sum();
    let gz: Complex64 = g.iter().zip(z).map(|(gi, zi)| zi * *gi).sum();
    let zz: Complex64 = z.iter().map(|zi| zi * zi).sum();
    let d = g.len() as f64;
    Ok(log_lambda(d / 4.0 * (1.0 - 4.0 * a).ln(), a, g2, gz, zz).exp())
}

fn log_lambda(log_pref: f64, a: f64, g2: f64, gz: Complex64, zz: Complex64) -> Complex64 {
    Complex64::new(log_pref + a * g2, 0.0) + gz * (1.0 - 4.0 * a).sqrt() - zz * 0.5
}

fn gaussian_pdf(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Frequency sampler for one segment.
enum XiSource<'a> {
    Fixed(f64, f64),
    Atoms { atoms: &'a [crate::activations::Atom], index: WeightedIndex<f64> },
    Nodes { grid: &'a [f64], index: WeightedIndex<f64> },
    Csch(&'a crate::activations::CschDensity),
    Gaussian { sigma: f64, density: &'a Support, mass: f64 },
}

impl XiSource<'_> {
    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            XiSource::Fixed(xi, r) => (*xi, *r),
            XiSource::Atoms { atoms, index } => (atoms[index.sample(rng)].xi, 1.0),
            XiSource::Nodes { grid, index } => (grid[index.sample(rng)], 1.0),
            XiSource::Csch(c) => (c.sample(rng.random::<f64>()), 1.0),
            XiSource::Gaussian { sigma, density, mass } => {
                let z: f64 = rng.sample(StandardNormal);
                let xi = sigma * z;
                (xi, density.density(xi) / mass / gaussian_pdf(xi, *sigma))
            }
        }
    }
}

fn mismatch(axis: Axis, what: &str) -> SnnkError {
    SnnkError::ProposalMismatch(format!("{axis:?}: {what}"))
}

/// Draws one instantiation for inputs of dimension `dim`.
pub fn sample_draws(d: &FourierDecomposition, cfg: &UrfConfig, dim: usize) -> Result<UrfDraws> {
    cfg.validate()?;
    let coeffs = d.coefficients();
    let mut segments = Vec::new();
    let (mut xi, mut ratio, mut coeff) = (Vec::new(), Vec::new(), Vec::new());
    let mut g_rows: Vec<f64> = Vec::new();

    for comp in d.components.iter().filter(|c| c.is_active()) {
        let axis = comp.axis;
        let mut blocks: Vec<(Option<usize>, XiSource)> = Vec::new();
        match (&comp.support, cfg.proposal) {
            (Support::Empty, _) => continue,
            (Support::Atomic { atoms }, Proposal::Auto | Proposal::Exact) => match cfg.atoms {
                AtomMode::Concat => {
                    for (k, at) in atoms.iter().enumerate() {
                        blocks.push((Some(k), XiSource::Fixed(at.xi, at.weight / comp.mass)));
                    }
                }
                AtomMode::Sample => {
                    let index = WeightedIndex::new(atoms.iter().map(|a| a.weight))
                        .map_err(|e| mismatch(axis, &e.to_string()))?;
                    blocks.push((None, XiSource::Atoms { atoms, index }));
                }
            },
            (Support::Atomic { .. }, _) => {
                return Err(mismatch(axis, "atomic components need the exact proposal"))
            }
            (Support::Analytic(c), Proposal::Auto | Proposal::Exact) => {
                blocks.push((None, XiSource::Csch(c)))
            }
            (Support::Analytic(_), Proposal::Grid) => {
                return Err(mismatch(axis, "grid proposal needs a tabulated density"))
            }
            (Support::Tabulated(t), Proposal::Auto | Proposal::Grid) => {
                let index = WeightedIndex::new(t.node_masses())
                    .map_err(|e| mismatch(axis, &e.to_string()))?;
                blocks.push((None, XiSource::Nodes { grid: &t.grid, index }));
            }
            (Support::Tabulated(_), Proposal::Exact) => {
                return Err(mismatch(axis, "no exact sampler for a tabulated density"))
            }
            (s @ (Support::Analytic(_) | Support::Tabulated(_)), Proposal::Gaussian { sigma }) => {
                blocks.push((None, XiSource::Gaussian { sigma, density: s, mass: comp.mass }))
            }
        }

        for (atom, source) in blocks {
            let tag_atom = atom.unwrap_or(0) as u64;
            let mut xi_rng = stream_rng(cfg.seed, &[axis.index() as u64, tag_atom, TAG_XI]);
            let mut g_rng = stream_rng(cfg.seed, &[axis.index() as u64, tag_atom, TAG_G]);
            let block = match cfg.strategy {
                Strategy::Iid => 1,
                Strategy::Block { block_size } => block_size,
            };
            let mut current = (0.0, 0.0);
            for i in 0..cfg.m {
                if i % block == 0 {
                    current = source.draw(&mut xi_rng);
                }
                xi.push(current.0);
                ratio.push(current.1);
                coeff.push(coeffs[axis.index()]);
                g_rows.extend((0..dim).map(|_| g_rng.sample::<f64, _>(StandardNormal)));
            }
            segments.push(Segment { axis, atom, len: cfg.m });
        }
    }

    let n = xi.len();
    let g = DMatrix::from_row_slice(n, dim, &g_rows);
    let g_norm2 = (0..n).map(|i| g.row(i).norm_squared()).collect();
    Ok(UrfDraws { dim, a: cfg.a, m: cfg.m, layout: Layout { segments }, xi, ratio, g, coeff, g_norm2 })
}

fn check_dim(draws: &UrfDraws, got: usize) -> Result<()> {
    if got != draws.dim {
        return shape_err(format!("draws expect dim {}, got {got}", draws.dim));
    }
    Ok(())
}

/// `Φ` rows for a batch of real inputs (one per row of `x`).
pub fn phi_batch(x: &DMatrix<f64>, draws: &UrfDraws) -> Result<DMatrix<Complex64>> {
    check_dim(draws, x.ncols())?;
    let gx = x * draws.g.transpose();
    let x2: Vec<f64> = x.row_iter().map(|r| r.norm_squared()).collect();
    let (lp, s, root) = (draws.log_prefactor(), draws.scale(), (1.0 - 4.0 * draws.a).sqrt());
    Ok(DMatrix::from_fn(x.nrows(), draws.len(), |r, i| {
        let w = 2.0 * PI * draws.xi[i];
        // z = i w x: gᵀz = i w gᵀx, zᵀz = -w² ‖x‖²
        let re = lp + draws.a * draws.g_norm2[i] + 0.5 * w * w * x2[r];
        let im = root * w * gx[(r, i)];
        Complex64::from_polar(s * re.exp(), im)
    }))
}

/// `Φ` rows for complex inputs, using the bilinear extension of `Λ_g`.
pub fn phi_complex_batch(x: &DMatrix<Complex64>, draws: &UrfDraws) -> Result<DMatrix<Complex64>> {
    check_dim(draws, x.ncols())?;
    let gt = draws.g.transpose();
    let gx_re = x.map(|v| v.re) * &gt;
    let gx_im = x.map(|v| v.im) * &gt;
    let x2: Vec<Complex64> = x.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let (lp, s) = (draws.log_prefactor(), draws.scale());
    Ok(DMatrix::from_fn(x.nrows(), draws.len(), |r, i| {
        let rho = Complex64::new(0.0, 2.0 * PI * draws.xi[i]);
        let gz = rho * Complex64::new(gx_re[(r, i)], gx_im[(r, i)]);
        let zz = rho * rho * x2[r];
        log_lambda(lp, draws.a, draws.g_norm2[i], gz, zz).exp() * s
    }))
}

/// `Ψ` rows for a batch of weight rows `w` and biases `b`.
pub fn psi_batch(w: &DMatrix<f64>, b: &[f64], draws: &UrfDraws) -> Result<DMatrix<Complex64>> {
    check_dim(draws, w.ncols())?;
    if b.len() != w.nrows() {
        return shape_err(format!("{} weight rows but {} biases", w.nrows(), b.len()));
    }
    let gw = w * draws.g.transpose();
    let w2: Vec<f64> = w.row_iter().map(|r| r.norm_squared()).collect();
    let (lp, s, root) = (draws.log_prefactor(), draws.scale(), (1.0 - 4.0 * draws.a).sqrt());
    Ok(DMatrix::from_fn(w.nrows(), draws.len(), |r, i| {
        let log_mag = lp + draws.a * draws.g_norm2[i] + root * gw[(r, i)] - 0.5 * w2[r];
        let phase = 2.0 * PI * draws.xi[i] * b[r];
        draws.coeff[i] * Complex64::from_polar(s * draws.ratio[i] * log_mag.exp(), phase)
    }))
}

/// `Ψ` rows for complex weight rows, using the bilinear extension of `Λ_g`.
pub fn psi_complex_batch(w: &DMatrix<Complex64>, b: &[f64], draws: &UrfDraws) -> Result<DMatrix<Complex64>> {
    check_dim(draws, w.ncols())?;
    if b.len() != w.nrows() {
        return shape_err(format!("{} weight rows but {} biases", w.nrows(), b.len()));
    }
    let gt = draws.g.transpose();
    let gw_re = w.map(|v| v.re) * &gt;
    let gw_im = w.map(|v| v.im) * &gt;
    let w2: Vec<Complex64> = w.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let (lp, s) = (draws.log_prefactor(), draws.scale());
    Ok(DMatrix::from_fn(w.nrows(), draws.len(), |r, i| {
        let gz = Complex64::new(gw_re[(r, i)], gw_im[(r, i)]);
        let lam = log_lambda(lp, draws.a, draws.g_norm2[i], gz, w2[r]).exp();
        let phase = Complex64::from_polar(s * draws.ratio[i], 2.0 * PI * draws.xi[i] * b[r]);
        draws.coeff[i] * phase * lam
    }))
}

fn row_vector(m: DMatrix<Complex64>, layout: &Layout) -> FeatureVector {
    FeatureVector { entries: m.iter().copied().collect(), layout: layout.clone() }
}

pub fn phi(x: &[f64], draws: &UrfDraws) -> Result<FeatureVector> {
    let m = phi_batch(&DMatrix::from_row_slice(1, x.len(), x), draws)?;
    Ok(row_vector(m, &draws.layout))
}

pub fn phi_complex(x: &[Complex64], draws: &UrfDraws) -> Result<FeatureVector> {
    let m = phi_complex_batch(&DMatrix::from_row_slice(1, x.len(), x), draws)?;
    Ok(row_vector(m, &draws.layout))
}

pub fn psi(w: &[f64], b: f64, draws: &UrfDraws) -> Result<FeatureVector> {
    let m = psi_batch(&DMatrix::from_row_slice(1, w.len(), w), &[b], draws)?;
    Ok(row_vector(m, &draws.layout))
}

/// `Re Σ_k px_k pw_k` (no conjugation).
pub fn kernel_estimate(px: &FeatureVector, pw: &FeatureVector) -> Result<KernelEstimate> {
    if px.layout != pw.layout || px.entries.len() != pw.entries.len() {
        return Err(SnnkError::LayoutMismatch);
    }
    let s: Complex64 = px.entries.iter().zip(&pw.entries).map(|(a, b)| a * b).sum();
    Ok(KernelEstimate { value: s.re, imag: s.im })
}

/// What [`atoms_concat_features`] embeds.
#[derive(Debug, Clone, Copy)]
pub enum FeatureInput<'a> {
    Input(&'a [f64]),
    Weight(&'a [f64], f64),
}

/// Per-atom concatenated features of an atomic decomposition.
pub fn atoms_concat_features(
    input: FeatureInput<'_>,
    d: &FourierDecomposition,
    cfg: &UrfConfig,
) -> Result<FeatureVector> {
    if !d.is_atomic() {
        return Err(SnnkError::NotAtomic);
    }
    let cfg = UrfConfig { atoms: AtomMode::Concat, ..*cfg };
    match input {
        FeatureInput::Input(x) => phi(x, &sample_draws(d, &cfg, x.len())?),
        FeatureInput::Weight(w, b) => psi(w, b, &sample_draws(d, &cfg, w.len())?),
    }
}

/// Closed-form bounds on feature magnitudes for `‖x‖, ‖w‖ <= radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryBounds {
    /// Bound on every `|Φ_i(x)|`.
    pub phi: f64,
    /// Bound on every `|Ψ_i(w, b)|`.
    pub psi: f64,
    /// Bound `c` on the per-draw summand `|m Φ_i Ψ_i|` summed over segments.
    pub per_draw: f64,
}

/// Largest importance ratio a segment can produce under `cfg`.
fn ratio_bound(support: &Support, mass: f64, atom: Option<usize>, cfg: &UrfConfig) -> f64 {
    match (support, cfg.proposal) {
        (Support::Atomic { atoms }, _) => atom.map_or(1.0, |k| atoms[k].weight / mass),
        (_, Proposal::Gaussian { sigma }) => {
            let peak = match support {
                Support::Analytic(c) => c.core_height.max(c.eval(c.side * c.xi_min)),
                Support::Tabulated(t) => t.values.iter().copied().fold(0.0, f64::max),
                _ => 0.0,
            };
            let reach = support.max_abs_xi();
            peak / mass / gaussian_pdf(reach, sigma)
        }
        _ => 1.0,
    }
}

/// Bounds of every feature entry for `a < 0`. With `a = 0` the `Ψ` side is
/// unbounded and the result is infinite.
pub fn entry_bounds(d: &FourierDecomposition, cfg: &UrfConfig, dim: usize, radius: f64) -> EntryBounds {
    let a = cfg.a;
    let s = 1.0 / (cfg.m as f64).sqrt();
    let log_pref = dim as f64 / 4.0 * (1.0 - 4.0 * a).ln();
    let r2 = radius * radius;
    // Φ: A‖g‖² <= 0 and only -zᵀz/2 = 2π²xi²‖x‖² has a positive real part
    // Ψ: max_g A‖g‖² + √(1-4A) gᵀw = -(1-4A)‖w‖²/(4A)
    let psi_exp = if a < 0.0 { r2 * (0.5 - 0.25 / a) } else { f64::INFINITY };
    let mut out = EntryBounds { phi: 0.0, psi: 0.0, per_draw: 0.0 };
    for comp in d.components.iter().filter(|c| c.is_active()) {
        let xi_max = match (&comp.support, cfg.proposal) {
            (Support::Atomic { .. }, _) => comp.support.max_abs_xi(),
            (_, Proposal::Gaussian { .. }) => f64::INFINITY,
            _ => comp.support.max_abs_xi(),
        };
        let phi_exp = log_pref + 2.0 * PI * PI * xi_max * xi_max * r2;
        out.phi = out.phi.max(s * phi_exp.exp());
        let atoms: Vec<Option<usize>> = match (&comp.support, cfg.atoms) {
            (Support::Atomic { atoms }, AtomMode::Concat) => (0..atoms.len()).map(Some).collect(),
            _ => vec![None],
        };
        for atom in atoms {
            let r = ratio_bound(&comp.support, comp.mass, atom, cfg);
            let psi = s * comp.mass * r * (log_pref + psi_exp).exp();
            out.psi = out.psi.max(psi);
            out.per_draw += comp.mass * r * (log_pref + psi_exp + phi_exp).exp();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{closed_form_ft, decomposition_for, Activation};
    use crate::rng::{stream_rng, trial_seed};
    use crate::stats::MeanSe;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lambda_examples() {
        let v = lambda_feature(&[0.7, -1.2], &[c(0.0, 0.0), c(0.0, 0.0)], 0.0).unwrap();
        assert_eq!(v, c(1.0, 0.0));
        let v = lambda_feature(&[0.0], &[c(0.0, 0.0)], -0.25).unwrap();
        assert!((v.re - 2f64.powf(0.25)).abs() < 1e-15 && v.im == 0.0);
        assert!(lambda_feature(&[0.0], &[c(0.0, 0.0), c(1.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn softmax_identity_by_monte_carlo() {
        // E_g[Λ_g(x) Λ_g(y)] = exp(xᵀy) for imaginary and real arguments
        let mut rng = stream_rng(11, &[0]);
        for (x, y, a) in [(c(0.0, 0.3), c(0.0, 0.3), 0.0), (c(0.4, 0.0), c(-0.2, 0.0), -0.1)] {
            let n = 1_000_000;
            let vals: Vec<Complex64> = (0..n)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    lambda_feature(&[g], &[x], a).unwrap() * lambda_feature(&[g], &[y], a).unwrap()
                })
                .collect();
            let re = MeanSe::of(&vals.iter().map(|v| v.re).collect::<Vec<_>>());
            let target = (x * y).exp();
            assert!(re.z_score(target.re) <= 3.0, "{x} {y}: {re:?} vs {target}");
        }
    }

    #[test]
    fn complex_psi_agrees_with_real_psi() {
        let d = closed_form_ft(&Activation::Tanh).unwrap();
        let draws = sample_draws(&d, &UrfConfig { m: 8, ..Default::default() }, 3).unwrap();
        let w = DMatrix::from_row_slice(2, 3, &[0.1, -0.4, 0.3, 0.2, 0.5, -0.1]);
        let b = [0.3, -0.7];
        let real = psi_batch(&w, &b, &draws).unwrap();
        let cplx = psi_complex_batch(&w.map(|v| c(v, 0.0)), &b, &draws).unwrap();
        for (u, v) in real.iter().zip(cplx.iter()) {
            assert!((u - v).norm() <= 1e-12 * u.norm().max(1.0));
        }
    }

    #[test]
    fn sine_draws_use_atoms() {
        let d = closed_form_ft(&Activation::Sine).unwrap();
        let cfg = UrfConfig { m: 4, ..Default::default() };
        let draws = sample_draws(&d, &cfg, 3).unwrap();
        assert_eq!(draws.layout.axis_len(Axis::ImPlus), 4);
        assert_eq!(draws.layout.axis_len(Axis::ImMinus), 4);
        assert_eq!(draws.len(), 8);
        for (x, r) in draws.xi.iter().zip(&draws.ratio) {
            assert!((x.abs() - 1.0 / (2.0 * PI)).abs() < 1e-15);
            assert_eq!(*r, 1.0);
        }
        let cfg = UrfConfig { m: 4, atoms: AtomMode::Sample, ..Default::default() };
        let draws = sample_draws(&d, &cfg, 3).unwrap();
        assert_eq!(draws.len(), 8);
    }

    #[test]
    fn block_strategy_reuses_frequencies() {
        let d = closed_form_ft(&Activation::Tanh).unwrap();
        let cfg = UrfConfig { m: 8, strategy: super::Strategy::Block { block_size: 4 }, ..Default::default() };
        let draws = sample_draws(&d, &cfg, 2).unwrap();
        for axis in [Axis::ImPlus, Axis::ImMinus] {
            let mut xs: Vec<f64> = draws.axis_pairs(axis).iter().map(|p| p.0).collect();
            xs.dedup();
            assert_eq!(xs.len(), 2);
        }
        let bad = UrfConfig { m: 8, strategy: super::Strategy::Block { block_size: 3 }, ..Default::default() };
        assert!(sample_draws(&d, &bad, 2).is_err());
    }

    #[test]
    fn gaussian_proposal_ratios_are_finite() {
        let d = closed_form_ft(&Activation::Tanh).unwrap();
        let cfg = UrfConfig { m: 512, proposal: Proposal::Gaussian { sigma: 1.0 }, ..Default::default() };
        let draws = sample_draws(&d, &cfg, 2).unwrap();
        assert!(draws.ratio.iter().all(|r| r.is_finite() && *r >= 0.0));
        assert!(draws.ratio.iter().any(|r| *r > 0.0));
    }

    #[test]
    fn proposal_mismatches() {
        let sine = closed_form_ft(&Activation::Sine).unwrap();
        let tanh = closed_form_ft(&Activation::Tanh).unwrap();
        let gelu = decomposition_for(&Activation::Gelu).unwrap();
        let with = |p| UrfConfig { proposal: p, ..Default::default() };
        assert!(matches!(
            sample_draws(&sine, &with(Proposal::Gaussian { sigma: 1.0 }), 2),
            Err(SnnkError::ProposalMismatch(_))
        ));
        assert!(matches!(sample_draws(&tanh, &with(Proposal::Grid), 2), Err(SnnkError::ProposalMismatch(_))));
        assert!(matches!(sample_draws(&gelu, &with(Proposal::Exact), 2), Err(SnnkError::ProposalMismatch(_))));
        assert!(sample_draws(&gelu, &with(Proposal::Grid), 2).is_ok());
    }

    #[test]
    fn phi_examples() {
        let d = closed_form_ft(&Activation::Sine).unwrap();
        let cfg = UrfConfig { m: 4, a: -0.1, ..Default::default() };
        let draws = sample_draws(&d, &cfg, 3).unwrap();
        let p = phi(&[0.0; 3], &draws).unwrap();
        for (i, v) in p.entries.iter().enumerate() {
            let expect = 0.5 * 1.4f64.powf(0.75) * (-0.1 * draws.g.row(i).norm_squared()).exp();
            assert!((v.re - expect).abs() < 1e-14 && v.im.abs() < 1e-15);
        }
        assert_eq!(p.len(), p.layout.total());
        assert_eq!(p.len(), 8);

        // d = 1, x = 1, xi = 1/2π, A = 0, g = 0: entry e^{1/2} / √m
        let mut one = sample_draws(&d, &UrfConfig { m: 1, a: 0.0, ..Default::default() }, 1).unwrap();
        one.g.fill(0.0);
        one.g_norm2.fill(0.0);
        let p = phi(&[1.0], &one).unwrap();
        for v in &p.entries {
            assert!((v - c(0.5f64.exp(), 0.0)).norm() < 1e-15);
        }
        let w = psi(&[0.0], 0.0, &one).unwrap();
        assert_eq!(w.entries, vec![c(0.0, 0.5), c(0.0, -0.5)]);
    }

    #[test]
    fn complex_phi_agrees_with_real_phi() {
        let d = closed_form_ft(&Activation::Tanh).unwrap();
        let draws = sample_draws(&d, &UrfConfig::default(), 3).unwrap();
        let x = [0.2, -0.1, 0.3];
        let xc: Vec<Complex64> = x.iter().map(|&v| c(v, 0.0)).collect();
        let a = phi(&x, &draws).unwrap();
        let b = phi_complex(&xc, &draws).unwrap();
        for (u, v) in a.entries.iter().zip(&b.entries) {
            assert!((u - v).norm() <= 1e-12 * u.norm().max(1.0));
        }
    }

    #[test]
    fn zero_features_give_zero() {
        let z = FeatureVector { entries: vec![c(0.0, 0.0); 4], layout: Layout::default() };
        assert_eq!(kernel_estimate(&z, &z).unwrap().value, 0.0);
        let d = closed_form_ft(&Activation::Sine).unwrap();
        let draws = sample_draws(&d, &UrfConfig::default(), 2).unwrap();
        let p = phi(&[0.1, 0.2], &draws).unwrap();
        assert!(matches!(kernel_estimate(&p, &z), Err(SnnkError::LayoutMismatch)));
    }

    fn estimates(a: &Activation, cfg: &UrfConfig, x: &[f64], w: &[f64], b: f64, n: u64) -> (MeanSe, MeanSe) {
        let d = decomposition_for(a).unwrap();
        let (mut re, mut im) = (Vec::new(), Vec::new());
        for t in 0..n {
            let draws = sample_draws(&d, &cfg.with_seed(trial_seed(cfg.seed, t)), x.len()).unwrap();
            let e = kernel_estimate(&phi(x, &draws).unwrap(), &psi(w, b, &draws).unwrap()).unwrap();
            re.push(e.value);
            im.push(e.imag);
        }
        (MeanSe::of(&re), MeanSe::of(&im))
    }

    #[test]
    fn sine_probe_at_half_pi() {
        let cfg = UrfConfig { m: 1, seed: 5, ..Default::default() };
        let (re, _) = estimates(&Activation::Sine, &cfg, &[0.0], &[0.0], PI / 2.0, 100_000);
        assert!(re.z_score(1.0) <= 3.0, "{re:?}");
    }

    #[test]
    fn sine_estimate_is_unbiased_with_vanishing_imaginary_part() {
        let mut rng = stream_rng(3, &[9]);
        let d = 8;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) / (d as f64).sqrt()).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) / (d as f64).sqrt()).collect();
        let b = 0.3;
        let target = (w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b).sin();
        let cfg = UrfConfig { m: 16, seed: 8, ..Default::default() };
        let (re, im) = estimates(&Activation::Sine, &cfg, &x, &w, b, 2000);
        assert!(re.z_score(target) <= 3.0, "{re:?} vs {target}");
        assert!(im.z_score(0.0) <= 3.0, "{im:?}");
    }

    #[test]
    fn cosine_concat_at_origin() {
        let d = closed_form_ft(&Activation::Cosine).unwrap();
        let mut vals = Vec::new();
        for t in 0..4000 {
            let cfg = UrfConfig { m: 8, seed: t, ..Default::default() };
            let p = atoms_concat_features(FeatureInput::Input(&[0.0, 0.0]), &d, &cfg).unwrap();
            let q = atoms_concat_features(FeatureInput::Weight(&[0.0, 0.0], 0.0), &d, &cfg).unwrap();
            assert_eq!(p.len(), 16);
            vals.push(kernel_estimate(&p, &q).unwrap().value);
        }
        assert!(MeanSe::of(&vals).z_score(1.0) <= 3.0);
        let tanh = closed_form_ft(&Activation::Tanh).unwrap();
        assert!(matches!(
            atoms_concat_features(FeatureInput::Input(&[0.0]), &tanh, &UrfConfig::default()),
            Err(SnnkError::NotAtomic)
        ));
    }

    #[test]
    fn single_atom_concat_matches_sampled_mode_bitwise() {
        let d = crate::activations::decompose(&crate::activations::FtInput::Atomic(vec![(0.3, c(0.0, 0.7))]));
        let x = [0.1, -0.4];
        {
            let mode_cfg = UrfConfig { m: 16, seed: 4, ..Default::default() };
            let concat = sample_draws(&d, &UrfConfig { atoms: AtomMode::Concat, ..mode_cfg }, 2).unwrap();
            let sampled = sample_draws(&d, &UrfConfig { atoms: AtomMode::Sample, ..mode_cfg }, 2).unwrap();
            assert_eq!(phi(&x, &concat).unwrap().entries, phi(&x, &sampled).unwrap().entries);
            assert_eq!(psi(&x, 0.2, &concat).unwrap().entries, psi(&x, 0.2, &sampled).unwrap().entries);
        }
    }

    #[test]
    fn variance_scales_inversely_with_m() {
        let x = [0.3, -0.2, 0.1];
        let w = [0.2, 0.4, -0.3];
        let ms = [8.0, 32.0, 128.0, 512.0];
        let vars: Vec<f64> = ms
            .iter()
            .map(|&m| {
                let cfg = UrfConfig { m: m as usize, seed: 21, ..Default::default() };
                estimates(&Activation::Tanh, &cfg, &x, &w, 0.2, 1500).0.variance()
            })
            .collect();
        let slope = crate::stats::log_log_slope(&ms, &vars);
        assert!((slope + 1.0).abs() <= 0.15, "slope {slope}");
    }

    #[test]
    fn draws_are_deterministic() {
        let d = closed_form_ft(&Activation::Sigmoid).unwrap();
        let cfg = UrfConfig { seed: 77, ..Default::default() };
        let a = sample_draws(&d, &cfg, 5).unwrap();
        let b = sample_draws(&d, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_draws(&d, &cfg.with_seed(78), 5).unwrap());
    }

    #[test]
    fn entries_respect_bounds() {
        let mut rng = stream_rng(99, &[1]);
        for act in [Activation::Sine, Activation::Tanh, Activation::Sigmoid, Activation::Gelu] {
            let d = decomposition_for(&act).unwrap();
            let cfg = UrfConfig { m: 32, a: -0.1, seed: 3, ..Default::default() };
            let dim = 4;
            let bounds = entry_bounds(&d, &cfg, dim, 1.0);
            for t in 0..50 {
                let draws = sample_draws(&d, &cfg.with_seed(t), dim).unwrap();
                let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
                v.iter_mut().for_each(|a| *a /= n);
                for e in phi(&v, &draws).unwrap().entries {
                    assert!(e.norm() <= bounds.phi * (1.0 + 1e-12));
                }
                for e in psi(&v, rng.random_range(-1.0..1.0), &draws).unwrap().entries {
                    assert!(e.norm() <= bounds.psi * (1.0 + 1e-12));
                }
            }
            assert!(bounds.per_draw.is_finite());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn feature_lengths_follow_layout(m in 1usize..20, dim in 1usize..6, seed in any::<u64>()) {
            for act in [Activation::Sine, Activation::Cosine, Activation::Tanh, Activation::Sigmoid] {
                let d = closed_form_ft(&act).unwrap();
                let cfg = UrfConfig { m, seed, ..Default::default() };
                let draws = sample_draws(&d, &cfg, dim).unwrap();
                let p = phi(&vec![0.1; dim], &draws).unwrap();
                prop_assert_eq!(p.len(), p.layout.total());
                prop_assert!(p.entries.iter().all(|e| e.re.is_finite() && e.im.is_finite()));
                prop_assert!(draws.ratio.iter().all(|r| r.is_finite() && *r >= 0.0));
            }
        }

        #[test]
        fn lambda_zero_arg_is_prefactor(g in prop::collection::vec(-3.0f64..3.0, 1..5), a in -1.0f64..=0.0) {
            let z = vec![Complex64::new(0.0, 0.0); g.len()];
            let v = lambda_feature(&g, &z, a).unwrap();
            let g2: f64 = g.iter().map(|x| x * x).sum();
            let expect = (1.0 - 4.0 * a).powf(g.len() as f64 / 4.0) * (a * g2).exp();
            prop_assert!((v.re - expect).abs() <= 1e-12 * expect && v.im == 0.0);
        }
    }
}
