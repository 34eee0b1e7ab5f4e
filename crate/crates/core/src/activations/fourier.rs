use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::quadrature::{numeric_ft, FrequencyGrid, QuadratureOptions, Taper};
use super::Activation;
use crate::error::{Result, SnnkError};

/// Tabulated transform values below this fraction of the peak are dropped.
pub const TAIL_FLOOR: f64 = 1e-12;

/// One of the four nonnegative parts of a transform:
/// `FT = RePlus - ReMinus + i ImPlus - i ImMinus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    RePlus,
    ReMinus,
    ImPlus,
    ImMinus,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::RePlus, Axis::ReMinus, Axis::ImPlus, Axis::ImMinus];

    /// Unit factor the axis carries in the reassembled transform.
    pub fn unit(self) -> Complex64 {
        match self {
            Axis::RePlus => Complex64::new(1.0, 0.0),
            Axis::ReMinus => Complex64::new(-1.0, 0.0),
            Axis::ImPlus => Complex64::new(0.0, 1.0),
            Axis::ImMinus => Complex64::new(0.0, -1.0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn split(v: Complex64) -> [f64; 4] {
        [v.re.max(0.0), (-v.re).max(0.0), v.im.max(0.0), (-v.im).max(0.0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub xi: f64,
    pub weight: f64,
}

/// Nonnegative density sampled on a grid; integrals use the trapezoid rule,
/// so the density acts as a discrete measure on the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    /// Trapezoid node weights of the grid.
    pub fn node_weights(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = g.len();
        (0..n)
            .map(|k| {
                let left = if k > 0 { g[k] - g[k - 1] } else { 0.0 };
                let right = if k + 1 < n { g[k + 1] - g[k] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }

    /// Discrete masses `node_weight * value` per node.
    pub fn node_masses(&self) -> Vec<f64> {
        self.node_weights().iter().zip(&self.values).map(|(w, v)| w * v).collect()
    }

    pub fn mass(&self) -> f64 {
        self.node_masses().iter().sum()
    }

    /// Piecewise-linear interpolation, zero outside the grid.
    pub fn eval(&self, xi: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || xi < g[0] || xi > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&p| p <= xi).saturating_sub(1).min(g.len() - 2);
        let t = (xi - g[k]) / (g[k + 1] - g[k]);
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }

    pub fn second_moment(&self) -> f64 {
        let m = self.mass();
        if m == 0.0 {
            return 0.0;
        }
        self.node_masses().iter().zip(&self.grid).map(|(w, x)| w * x * x).sum::<f64>() / m
    }
}

/// Settings for the principal-value densities of tanh and sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CschOptions {
    /// Half-width of the interval around 0 replaced by a flat core.
    pub xi_min: f64,
    /// Bound on the reconstruction error from truncating the tail.
    pub tail_tolerance: f64,
}

impl Default for CschOptions {
    fn default() -> Self {
        CschOptions { xi_min: 1e-3, tail_tolerance: 5e-5 }
    }
}

/// One half of an odd transform `Im FT(xi) = -amplitude * csch(rate * xi)`.
///
/// The density lives on the half line of sign `side`. Its `1/|xi|`
/// singularity is replaced on `|xi| < xi_min` by a constant `core_height`
/// with the same first moment, which is all the odd (sine) reconstruction
/// sees to within O(xi_min^3). The tail beyond `xi_max` is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CschDensity {
    pub amplitude: f64,
    pub rate: f64,
    pub side: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub core_height: f64,
}

fn x_over_sinh(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0
    } else {
        t / t.sinh()
    }
}

fn ln_tanh_half(t: f64) -> f64 {
    (0.5 * t).tanh().ln()
}

impl CschDensity {
    pub fn new(amplitude: f64, rate: f64, side: f64, opts: &CschOptions) -> Result<Self> {
        if !(opts.xi_min > 0.0 && opts.tail_tolerance > 0.0) {
            return Err(SnnkError::InvalidConfig("xi_min and tail_tolerance must be positive".into()));
        }
        // tail of ∫ 2a csch(r xi) dxi beyond t is at most 4a exp(-r t) / r
        let xi_max = ((4.0 * amplitude / (rate * opts.tail_tolerance)).ln() / rate).max(2.0 * opts.xi_min);
        // first moment of the excised piece, Simpson on a smooth integrand
        let n = 64;
        let h = opts.xi_min / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * amplitude * x_over_sinh(rate * k as f64 * h) / rate;
        }
        let first_moment = acc * h / 3.0;
        let core_height = 2.0 * first_moment / (opts.xi_min * opts.xi_min);
        Ok(CschDensity {
            amplitude,
            rate,
            side: side.signum(),
            xi_min: opts.xi_min,
            xi_max,
            core_height,
        })
    }

    /// The untruncated closed form `amplitude * csch(rate * |xi|)` on `side`.
    pub fn closed_form(&self, xi: f64) -> f64 {
        if xi * self.side <= 0.0 {
            0.0
        } else {
            self.amplitude / (self.rate * xi.abs()).sinh()
        }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        if xi * self.side < 0.0 || (xi == 0.0) {
            return if xi == 0.0 { self.core_height } else { 0.0 };
        }
        let a = xi.abs();
        if a < self.xi_min {
            self.core_height
        } else if a <= self.xi_max {
            self.amplitude / (self.rate * a).sinh()
        } else {
            0.0
        }
    }

    fn core_mass(&self) -> f64 {
        self.core_height * self.xi_min
    }

    fn log_span(&self) -> (f64, f64) {
        (ln_tanh_half(self.rate * self.xi_min), ln_tanh_half(self.rate * self.xi_max))
    }

    fn main_mass(&self) -> f64 {
        let (l0, l1) = self.log_span();
        self.amplitude / self.rate * (l1 - l0)
    }

    pub fn mass(&self) -> f64 {
        self.core_mass() + self.main_mass()
    }

    /// Inverse-CDF draw from the normalized density for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        let p_core = self.core_mass() / self.mass();
        let a = if u < p_core {
            self.xi_min * u / p_core
        } else {
            let v = ((u - p_core) / (1.0 - p_core)).clamp(0.0, 1.0);
            let (l0, l1) = self.log_span();
            (2.0 / self.rate) * (l0 + v * (l1 - l0)).exp().min(1.0 - 1e-16).atanh()
        };
        self.side * a.clamp(0.0, self.xi_max)
    }

    /// `∫ density(xi) exp(2πi xi z) dxi`.
    fn inverse_transform(&self, z: f64) -> Complex64 {
        let s = self.side;
        let core = if z == 0.0 {
            Complex64::new(self.core_mass(), 0.0)
        } else {
            let w = 2.0 * PI * z * s;
            // ∫_0^xi_min exp(i w t) dt
            Complex64::new((w * self.xi_min).sin() / w, (1.0 - (w * self.xi_min).cos()) / w)
                * self.core_height
        };
        // xi = exp(u), composite Simpson in u
        let (u0, u1) = (self.xi_min.ln(), self.xi_max.ln());
        let n = 4000;
        let h = (u1 - u0) / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..=n {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let xi = (u0 + k as f64 * h).exp();
            let dens = self.amplitude * x_over_sinh(self.rate * xi) / self.rate;
            let phase = 2.0 * PI * xi * z * s;
            acc += Complex64::new(phase.cos(), phase.sin()) * (w * dens);
        }
        core + acc * (h / 3.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Empty,
    Atomic { atoms: Vec<Atom> },
    Tabulated(TabulatedDensity),
    Analytic(CschDensity),
}

impl Support {
    pub fn mass(&self) -> f64 {
        match self {
            Support::Empty => 0.0,
            Support::Atomic { atoms } => atoms.iter().map(|a| a.weight).sum(),
            Support::Tabulated(t) => t.mass(),
            Support::Analytic(c) => c.mass(),
        }
    }

    /// Density value; atoms have none and report 0.
    pub fn density(&self, xi: f64) -> f64 {
        match self {
            Support::Empty | Support::Atomic { .. } => 0.0,
            Support::Tabulated(t) => t.eval(xi),
            Support::Analytic(c) => c.eval(xi),
        }
    }

    /// Largest |xi| carrying mass.
    pub fn max_abs_xi(&self) -> f64 {
        match self {
            Support::Empty => 0.0,
            Support::Atomic { atoms } => atoms.iter().map(|a| a.xi.abs()).fold(0.0, f64::max),
            Support::Tabulated(t) => t
                .grid
                .iter()
                .zip(&t.values)
                .filter(|(_, v)| **v > 0.0)
                .map(|(x, _)| x.abs())
                .fold(0.0, f64::max),
            Support::Analytic(c) => c.xi_max,
        }
    }

    fn inverse_transform(&self, z: f64) -> Complex64 {
        let e = |xi: f64| {
            let p = 2.0 * PI * xi * z;
            Complex64::new(p.cos(), p.sin())
        };
        match self {
            Support::Empty => Complex64::new(0.0, 0.0),
            Support::Atomic { atoms } => atoms.iter().map(|a| e(a.xi) * a.weight).sum(),
            Support::Tabulated(t) => t
                .node_masses()
                .iter()
                .zip(&t.grid)
                .map(|(w, &xi)| e(xi) * *w)
                .sum(),
            Support::Analytic(c) => c.inverse_transform(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierComponent {
    pub axis: Axis,
    pub support: Support,
    pub mass: f64,
}

impl FourierComponent {
    fn new(axis: Axis, support: Support) -> Self {
        let mass = support.mass();
        FourierComponent { axis, support, mass }
    }

    pub fn is_active(&self) -> bool {
        self.mass > 0.0
    }
}

/// Four-way nonnegative split of an activation's transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierDecomposition {
    /// Indexed by [`Axis::index`].
    pub components: Vec<FourierComponent>,
    pub source: Option<Activation>,
}

impl FourierDecomposition {
    fn from_supports(supports: [Support; 4], source: Option<Activation>) -> Self {
        let components = Axis::ALL
            .iter()
            .zip(supports)
            .map(|(&axis, s)| FourierComponent::new(axis, s))
            .collect();
        FourierDecomposition { components, source }
    }

    pub fn component(&self, axis: Axis) -> &FourierComponent {
        &self.components[axis.index()]
    }

    /// Complex masses `c_j`: `mass`, `-mass`, `i mass`, `-i mass`.
    pub fn coefficients(&self) -> [Complex64; 4] {
        let mut c = [Complex64::new(0.0, 0.0); 4];
        for comp in &self.components {
            c[comp.axis.index()] = comp.axis.unit() * comp.mass;
        }
        c
    }

    pub fn active_axes(&self) -> Vec<Axis> {
        self.components.iter().filter(|c| c.is_active()).map(|c| c.axis).collect()
    }

    pub fn is_atomic(&self) -> bool {
        self.components
            .iter()
            .all(|c| matches!(c.support, Support::Atomic { .. } | Support::Empty) || !c.is_active())
    }

    /// Density values of the four parts at `xi`.
    pub fn densities_at(&self, xi: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for c in &self.components {
            out[c.axis.index()] = c.support.density(xi);
        }
        out
    }

    /// `RePlus - ReMinus + i (ImPlus - ImMinus)` at the nodes of tabulated
    /// components (all tabulated components share one grid).
    pub fn reassemble_tabulated(&self) -> Option<(Vec<f64>, Vec<Complex64>)> {
        let grid = self.components.iter().find_map(|c| match &c.support {
            Support::Tabulated(t) => Some(t.grid.clone()),
            _ => None,
        })?;
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut parts = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for c in &self.components {
            parts[c.axis.index()] = match &c.support {
                Support::Tabulated(t) => t.values.clone(),
                _ => vec![0.0; grid.len()],
            };
        }
        for (k, v) in out.iter_mut().enumerate() {
            *v = Complex64::new(parts[0][k] - parts[1][k], parts[2][k] - parts[3][k]);
        }
        Some((grid, out))
    }

    /// `f̂(z) = Σ_j unit_j ∫ density_j(xi) exp(2πi xi z) dxi`.
    pub fn reconstruct(&self, z: f64) -> Complex64 {
        self.components
            .iter()
            .filter(|c| c.is_active())
            .map(|c| c.axis.unit() * c.support.inverse_transform(z))
            .sum()
    }
}

/// Input accepted by [`decompose`].
#[derive(Debug, Clone, PartialEq)]
pub enum FtInput {
    Tabulated { grid: Vec<f64>, values: Vec<Complex64> },
    Atomic(Vec<(f64, Complex64)>),
}

/// Splits a transform into its four nonnegative parts.
pub fn decompose(ft: &FtInput) -> FourierDecomposition {
    match ft {
        FtInput::Tabulated { grid, values } => {
            let mut parts: [Vec<f64>; 4] = Default::default();
            for v in values {
                for (p, x) in parts.iter_mut().zip(Axis::split(*v)) {
                    p.push(x);
                }
            }
            let supports = parts.map(|values| {
                if values.iter().all(|&v| v == 0.0) {
                    Support::Empty
                } else {
                    Support::Tabulated(TabulatedDensity { grid: grid.clone(), values })
                }
            });
            FourierDecomposition::from_supports(supports, None)
        }
        FtInput::Atomic(atoms) => {
            let mut parts: [Vec<Atom>; 4] = Default::default();
            for &(xi, c) in atoms {
                for (p, weight) in parts.iter_mut().zip(Axis::split(c)) {
                    if weight > 0.0 {
                        p.push(Atom { xi, weight });
                    }
                }
            }
            let supports = parts.map(|atoms| {
                if atoms.is_empty() {
                    Support::Empty
                } else {
                    Support::Atomic { atoms }
                }
            });
            FourierDecomposition::from_supports(supports, None)
        }
    }
}

pub fn closed_form_ft(a: &Activation) -> Result<FourierDecomposition> {
    closed_form_ft_with(a, &CschOptions::default())
}

/// Closed-form decompositions for sine, cosine, tanh and sigmoid.
pub fn closed_form_ft_with(a: &Activation, opts: &CschOptions) -> Result<FourierDecomposition> {
    let f0 = 1.0 / (2.0 * PI);
    let mut d = match a {
        // sin z = (i/2) e^{-iz} - (i/2) e^{iz}
        Activation::Sine => decompose(&FtInput::Atomic(vec![
            (-f0, Complex64::new(0.0, 0.5)),
            (f0, Complex64::new(0.0, -0.5)),
        ])),
        Activation::Cosine => decompose(&FtInput::Atomic(vec![
            (-f0, Complex64::new(0.5, 0.0)),
            (f0, Complex64::new(0.5, 0.0)),
        ])),
        // FT[tanh](xi) = -iπ csch(π² xi)
        Activation::Tanh => csch_pair(PI, PI * PI, None, opts)?,
        // sigmoid = 1/2 + tanh(z/2)/2: ½δ(xi) - iπ csch(2π² xi)
        Activation::Sigmoid => csch_pair(PI, 2.0 * PI * PI, Some(0.5), opts)?,
        other => return Err(SnnkError::UnsupportedClosedForm(other.to_string())),
    };
    d.source = Some(*a);
    Ok(d)
}

fn csch_pair(amplitude: f64, rate: f64, dc: Option<f64>, opts: &CschOptions) -> Result<FourierDecomposition> {
    let re_plus = match dc {
        Some(w) => Support::Atomic { atoms: vec![Atom { xi: 0.0, weight: w }] },
        None => Support::Empty,
    };
    // Im FT = -a csch(r xi) is positive for xi < 0
    let im_plus = Support::Analytic(CschDensity::new(amplitude, rate, -1.0, opts)?);
    let im_minus = Support::Analytic(CschDensity::new(amplitude, rate, 1.0, opts)?);
    Ok(FourierDecomposition::from_supports([re_plus, Support::Empty, im_plus, im_minus], None))
}

/// Closed form where one is vetted, otherwise a tabulated decomposition of
/// the tapered transform on the default grid.
pub fn decomposition_for(a: &Activation) -> Result<FourierDecomposition> {
    a.validate()?;
    match closed_form_ft(a) {
        Ok(d) => Ok(d),
        Err(SnnkError::UnsupportedClosedForm(_)) => {
            let grid = FrequencyGrid::default();
            let mut values = numeric_ft(a, &grid, &Taper::default_growing(), &QuadratureOptions::default())?;
            // far tails are quadrature noise, and every frequency kept there
            // inflates Φ by exp(2π² xi² ‖x‖²)
            let peak = values.iter().map(|v| v.re.abs().max(v.im.abs())).fold(0.0, f64::max);
            let floor = TAIL_FLOOR * peak;
            for v in values.iter_mut() {
                if v.re.abs() < floor {
                    v.re = 0.0;
                }
                if v.im.abs() < floor {
                    v.im = 0.0;
                }
            }
            let mut d = decompose(&FtInput::Tabulated { grid: grid.points().to_vec(), values });
            d.source = Some(*a);
            Ok(d)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub max_error: f64,
    pub max_imag_residue: f64,
}

/// Worst-case reconstruction error of `d` against `a` over `zs`.
pub fn validate_decomposition(d: &FourierDecomposition, a: &Activation, zs: &[f64]) -> Validation {
    zs.iter().fold(Validation { max_error: 0.0, max_imag_residue: 0.0 }, |acc, &z| {
        let r = d.reconstruct(z);
        Validation {
            max_error: acc.max_error.max((r.re - a.eval(z)).abs()),
            max_imag_residue: acc.max_imag_residue.max(r.im.abs()),
        }
    })
}
