//! ReLU features and the arc-cosine kernels they linearize.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{shape_err, Result, SnnkError};
use crate::rng::stream_rng;
use crate::stats::MeanSe;

/// `max(0, G v / √l′)` for a projection `G` of shape `l′ × d`.
pub fn relu_snnk_features(v: &[f64], g: &DMatrix<f64>) -> Result<Vec<f64>> {
    if v.len() != g.ncols() {
        return shape_err(format!("projection has {} columns, input has {}", g.ncols(), v.len()));
    }
    let s = 1.0 / (g.nrows() as f64).sqrt();
    Ok(g.row_iter()
        .map(|row| (s * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()).max(0.0))
        .collect())
}

/// Batched [`relu_snnk_features`], one input per row.
pub fn relu_features_batch(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != g.ncols() {
        return shape_err(format!("projection has {} columns, input has {}", g.ncols(), x.ncols()));
    }
    let s = 1.0 / (g.nrows() as f64).sqrt();
    Ok((x * g.transpose()).map(|v| (s * v).max(0.0)))
}

/// `l′ × d` standard normal projection.
pub fn gaussian_projection(rows: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, &[0x6172_63]);
    let vals: Vec<f64> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, dim, &vals)
}

fn j(n: u32, t: f64) -> f64 {
    let (s, c) = t.sin_cos();
    match n {
        0 => PI - t,
        1 => s + (PI - t) * c,
        _ => 3.0 * s * c + (PI - t) * (1.0 + 2.0 * c * c),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Angle in `[0, π]`; unlike `acos` of the cosine it stays accurate near 0 and π.
fn angle(x: &[f64], y: &[f64], nx: f64, ny: f64) -> f64 {
    let (mut d, mut s) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a / nx, b / ny);
        d += (u - v) * (u - v);
        s += (u + v) * (u + v);
    }
    2.0 * d.sqrt().atan2(s.sqrt())
}

/// `K_n(x, y) = ‖x‖ⁿ‖y‖ⁿ J_n(α) / π` for `n <= 2`.
pub fn arc_cosine_exact(n: u32, x: &[f64], y: &[f64]) -> Result<f64> {
    if n > 2 {
        return Err(SnnkError::InvalidConfig(format!("arc-cosine order {n} is not supported")));
    }
    if x.len() != y.len() {
        return shape_err(format!("dims {} and {}", x.len(), y.len()));
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(SnnkError::ZeroVector);
    }
    Ok((nx * ny).powi(n as i32) * j(n, angle(x, y, nx, ny)) / PI)
}

fn gamma(n: u32, t: f64) -> f64 {
    match n {
        0 => {
            if t > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        _ => t.max(0.0).powi(n as i32),
    }
}

/// Monte Carlo estimate `2 E_ω[Γ_n(ωᵀx) Γ_n(ωᵀy)]`, `ω ~ N(0, I)`.
///
/// With `antithetic`, draws come in pairs `(ω, -ω)` and each pair counts as
/// one sample of the pair mean.
pub fn arc_cosine_mc(n: u32, x: &[f64], y: &[f64], num_draws: usize, seed: u64, antithetic: bool) -> Result<MeanSe> {
    if n > 2 {
        return Err(SnnkError::InvalidConfig(format!("arc-cosine order {n} is not supported")));
    }
    if x.len() != y.len() {
        return shape_err(format!("dims {} and {}", x.len(), y.len()));
    }
    let mut rng = stream_rng(seed, &[0x6d63]);
    let mut omega = vec![0.0; x.len()];
    let samples: Vec<f64> = if antithetic {
        (0..num_draws / 2)
            .map(|_| {
                omega.iter_mut().for_each(|w| *w = rng.sample(StandardNormal));
                let (px, py) = projections(&omega, x, y);
                gamma(n, px) * gamma(n, py) + gamma(n, -px) * gamma(n, -py)
            })
            .collect()
    } else {
        (0..num_draws)
            .map(|_| {
                omega.iter_mut().for_each(|w| *w = rng.sample(StandardNormal));
                let (px, py) = projections(&omega, x, y);
                2.0 * gamma(n, px) * gamma(n, py)
            })
            .collect()
    };
    Ok(MeanSe::of(&samples))
}

fn projections(omega: &[f64], x: &[f64], y: &[f64]) -> (f64, f64) {
    omega.iter().zip(x.iter().zip(y)).fold((0.0, 0.0), |(a, b), (w, (u, v))| (a + w * u, b + w * v))
}
