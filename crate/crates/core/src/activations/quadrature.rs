//! Windowed trapezoid quadrature for Fourier transforms of activations.
//!
//! The trapezoid rule converges spectrally for smooth, rapidly decaying
//! integrands, so activations are first made decaying: saturating ones have
//! an `erf` asymptote with known transform subtracted, growing ones are
//! multiplied by a smooth flat-top taper.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erf;
use std::f64::consts::{PI, SQRT_2};

use super::Activation;
use crate::error::{Result, SnnkError};

/// Strictly increasing frequency grid, symmetric about zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(SnnkError::InvalidConfig("grid needs at least two points".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SnnkError::InvalidConfig("grid must be strictly increasing".into()));
        }
        let n = points.len();
        let scale = points[n - 1].abs().max(points[0].abs());
        for i in 0..n / 2 {
            if (points[i] + points[n - 1 - i]).abs() > 1e-12 * scale {
                return Err(SnnkError::InvalidConfig("grid must be symmetric about 0".into()));
            }
        }
        if n % 2 == 1 && points[n / 2].abs() > 1e-12 * scale {
            return Err(SnnkError::InvalidConfig("grid must be symmetric about 0".into()));
        }
        Ok(FrequencyGrid { points })
    }

    /// `n` equispaced points on `[-max, max]`; an even `n` excludes 0.
    pub fn symmetric(max: f64, n: usize) -> Result<Self> {
        if !(max > 0.0) || n < 2 {
            return Err(SnnkError::InvalidConfig("grid needs max > 0 and n >= 2".into()));
        }
        let step = 2.0 * max / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| -max + step * i as f64).collect();
        // force exact mirror symmetry
        for i in 0..n / 2 {
            points[n - 1 - i] = -points[i];
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        Ok(FrequencyGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains_zero(&self) -> bool {
        self.points.contains(&0.0)
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid::symmetric(8.0, 4096).expect("valid default grid")
    }
}

/// Multiplicative window applied to the activation before integrating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Taper {
    None,
    /// Box of half-width `radius` convolved with a Gaussian of std `width`.
    SmoothBox { radius: f64, width: f64 },
}

impl Taper {
    pub fn weight(&self, z: f64) -> f64 {
        match *self {
            Taper::None => 1.0,
            Taper::SmoothBox { radius, width } => {
                let s = SQRT_2 * width;
                0.5 * (erf((z + radius) / s) - erf((z - radius) / s))
            }
        }
    }

    /// Default window for activations with linear growth: flat to 1e-6 on [-5, 5].
    pub fn default_growing() -> Self {
        Taper::SmoothBox { radius: 7.5, width: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Coarse trapezoid step in z; the refined pass halves it.
    pub step: f64,
    /// Integration range `[-half_width, half_width]`; `None` picks one from the taper.
    pub half_width: Option<f64>,
    /// Maximum tolerated refinement disagreement, relative to `1 + |FT|`.
    pub tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { step: 0.02, half_width: None, tolerance: 1e-8 }
    }
}

/// Trapezoid estimate of `∫ f(z) exp(-2πi xi z) dz` at every grid point.
pub fn numeric_ft_fn<F>(f: F, grid: &FrequencyGrid, opts: &QuadratureOptions) -> Result<Vec<Complex64>>
where
    F: Fn(f64) -> f64 + Sync,
{
    let half_width = opts.half_width.unwrap_or(20.0);
    let fine = opts.step / 2.0;
    let nodes = (half_width / fine).ceil() as usize;
    // even/odd parts on the positive half line
    let mut even = Vec::with_capacity(nodes + 1);
    let mut odd = Vec::with_capacity(nodes + 1);
    even.push(f(0.0));
    odd.push(0.0);
    for k in 1..=nodes {
        let z = k as f64 * fine;
        let (a, b) = (f(z), f(-z));
        even.push(a + b);
        odd.push(a - b);
    }

    grid.points()
        .par_iter()
        .map(|&xi| {
            let (mut re_f, mut im_f) = (even[0], 0.0);
            let (mut re_c, mut im_c) = (even[0], 0.0);
            for k in 1..=nodes {
                let (s, c) = (2.0 * PI * xi * k as f64 * fine).sin_cos();
                let re = even[k] * c;
                let im = odd[k] * s;
                re_f += re;
                im_f -= im;
                if k % 2 == 0 {
                    re_c += re;
                    im_c -= im;
                }
            }
            let t_fine = Complex64::new(re_f, im_f) * fine;
            let t_coarse = Complex64::new(re_c, im_c) * opts.step;
            let richardson = t_fine + (t_fine - t_coarse) / 3.0;
            let disagreement = (richardson - t_fine).norm();
            if disagreement > opts.tolerance * (1.0 + richardson.norm()) {
                return Err(SnnkError::QuadratureNonConvergent {
                    xi,
                    disagreement,
                    tolerance: opts.tolerance,
                });
            }
            Ok(richardson)
        })
        .collect()
}

/// Regular part of the Fourier transform of an activation on `grid`.
///
/// Saturating activations (tanh, sigmoid) are handled by subtracting an
/// `erf` asymptote; the returned values exclude the Dirac mass at 0 of the
/// sigmoid, and the grid must not contain 0. Growing activations (GELU,
/// Swish, smoothed ReLU) require a [`Taper::SmoothBox`], and the result is the
/// transform of the tapered function.
pub fn numeric_ft(
    a: &Activation,
    grid: &FrequencyGrid,
    taper: &Taper,
    opts: &QuadratureOptions,
) -> Result<Vec<Complex64>> {
    a.validate()?;
    if matches!(a, Activation::Sine | Activation::Cosine) {
        return Err(SnnkError::InvalidConfig(format!(
            "{a} has a purely atomic transform; use closed_form_ft"
        )));
    }
    if let Taper::SmoothBox { radius, width } = *taper {
        if !(radius > 0.0 && width > 0.0) {
            return Err(SnnkError::InvalidConfig("taper radius and width must be positive".into()));
        }
        let opts = QuadratureOptions {
            half_width: Some(opts.half_width.unwrap_or(radius + 9.0 * width)),
            ..*opts
        };
        let act = *a;
        let t = *taper;
        return numeric_ft_fn(move |z| act.eval(z) * t.weight(z), grid, &opts);
    }

    // erf(z) has transform -i/(πxi) exp(-π² xi²)
    let erf_ft = |xi: f64| Complex64::new(0.0, -1.0 / (PI * xi)) * (-(PI * xi).powi(2)).exp();
    let (scale, regular): (f64, Box<dyn Fn(f64) -> f64 + Sync>) = match a {
        Activation::Tanh => (1.0, Box::new(|z: f64| z.tanh() - erf(z))),
        Activation::Sigmoid => {
            let s = Activation::Sigmoid;
            (0.5, Box::new(move |z: f64| s.eval(z) - 0.5 - 0.5 * erf(z)))
        }
        other => {
            return Err(SnnkError::InvalidConfig(format!(
                "{other} grows without bound; numeric_ft needs a SmoothBox taper"
            )))
        }
    };
    if grid.contains_zero() {
        return Err(SnnkError::InvalidConfig(format!(
            "the transform of {a} is singular at xi = 0; use a grid that excludes 0"
        )));
    }
    let mut out = numeric_ft_fn(regular, grid, opts)?;
    for (v, &xi) in out.iter_mut().zip(grid.points()) {
        *v += erf_ft(xi) * scale;
    }
    Ok(out)
}

/// Re-expresses a transform stated against `exp(-i k z)` in the
/// `exp(-2πi xi z)` convention. Forward transforms only need `k = 2π xi`;
/// the `2π` Jacobian lives in the inverse measure `dk = 2π dxi`.
pub fn angular_to_two_pi<F>(ft_angular: F) -> impl Fn(f64) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    move |xi| ft_angular(2.0 * PI * xi)
}

/// Inverse of [`angular_to_two_pi`].
pub fn two_pi_to_angular<F>(ft_two_pi: F) -> impl Fn(f64) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    move |k| ft_two_pi(k / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_self_dual() {
        let grid = FrequencyGrid::default();
        let ft = numeric_ft_fn(|z| (-PI * z * z).exp(), &grid, &QuadratureOptions::default()).unwrap();
        let worst = grid
            .points()
            .iter()
            .zip(&ft)
            .map(|(&xi, v)| (v - Complex64::new((-PI * xi * xi).exp(), 0.0)).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "worst {worst:e}");
    }

    #[test]
    fn tanh_transform_is_imaginary_and_odd() {
        let grid = FrequencyGrid::symmetric(3.0, 256).unwrap();
        let ft = numeric_ft(&Activation::Tanh, &grid, &Taper::None, &QuadratureOptions::default()).unwrap();
        let n = ft.len();
        for i in 0..n {
            assert!(ft[i].re.abs() <= 1e-8);
            assert!((ft[i].im + ft[n - 1 - i].im).abs() <= 1e-12);
        }
    }

    #[test]
    fn tanh_matches_converted_closed_form() {
        // stated in angular frequency: -iπ csch(πk/2)
        let angular = |k: f64| Complex64::new(0.0, -PI / (PI * k / 2.0).sinh());
        let two_pi = angular_to_two_pi(angular);
        let pts: Vec<f64> = (0..60).map(|i| 0.05 + i as f64 * 2.95 / 59.0).collect();
        let mut sym: Vec<f64> = pts.iter().rev().map(|x| -x).collect();
        sym.extend(&pts);
        let grid = FrequencyGrid::new(sym).unwrap();
        let ft = numeric_ft(&Activation::Tanh, &grid, &Taper::None, &QuadratureOptions::default()).unwrap();
        for (&xi, v) in grid.points().iter().zip(&ft).filter(|(x, _)| **x > 0.0) {
            let exact = two_pi(xi);
            let err = (v - exact).norm();
            // relative 1e-4, with an absolute floor at the rounding level of the sum
            assert!(err <= 1e-4 * exact.norm() + 1e-14, "xi {xi}: {v} vs {exact}");
        }
    }

    #[test]
    fn convention_round_trip_is_identity() {
        let ft = |xi: f64| Complex64::new((-xi * xi).exp(), xi.sin());
        let back = angular_to_two_pi(two_pi_to_angular(ft));
        for &xi in FrequencyGrid::symmetric(8.0, 101).unwrap().points() {
            let (a, b) = (back(xi), ft(xi));
            assert!((a - b).norm() <= 1e-15 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn grids_are_validated() {
        assert!(FrequencyGrid::new(vec![-1.0, 0.5, 1.0]).is_err());
        assert!(FrequencyGrid::new(vec![-1.0, 1.0, 0.0]).is_err());
        assert!(!FrequencyGrid::default().contains_zero());
        let grid = FrequencyGrid::symmetric(1.0, 5).unwrap();
        assert!(numeric_ft(&Activation::Tanh, &grid, &Taper::None, &QuadratureOptions::default()).is_err());
        assert!(numeric_ft(&Activation::Gelu, &grid, &Taper::None, &QuadratureOptions::default()).is_err());
        assert!(numeric_ft(&Activation::Sine, &grid, &Taper::None, &QuadratureOptions::default()).is_err());
    }

    #[test]
    fn coarse_step_fails_to_converge() {
        let grid = FrequencyGrid::symmetric(8.0, 64).unwrap();
        let opts = QuadratureOptions { step: 0.5, half_width: Some(20.0), tolerance: 1e-10 };
        let r = numeric_ft_fn(|z| (-PI * z * z).exp(), &grid, &opts);
        assert!(matches!(r, Err(SnnkError::QuadratureNonConvergent { .. })));
    }
}
