//! Activation functions and their Fourier decompositions.
//!
//! All transforms use the convention `FT_f(xi) = ∫ f(z) exp(-2πi xi z) dz`,
//! so `f(z) = ∫ FT_f(xi) exp(2πi xi z) dxi`.

mod fourier;
mod quadrature;

pub use fourier::{
    closed_form_ft, closed_form_ft_with, decompose, decomposition_for, validate_decomposition,
    Atom, Axis, CschDensity, CschOptions, FourierComponent, FourierDecomposition, FtInput,
    Support, TabulatedDensity, Validation,
};
pub use quadrature::{
    angular_to_two_pi, numeric_ft, numeric_ft_fn, two_pi_to_angular, FrequencyGrid,
    QuadratureOptions, Taper,
};

use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SnnkError};

/// Elementwise activation of a feedforward layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Sine,
    Cosine,
    Tanh,
    Sigmoid,
    Gelu,
    Swish { beta: f64 },
    /// ReLU convolved with a centered Gaussian of standard deviation `width`.
    SmoothedRelu { width: f64 },
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::Swish { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                SnnkError::InvalidConfig(format!("swish beta must be positive, got {beta}")),
            ),
            Activation::SmoothedRelu { width } if !(width > 0.0 && width.is_finite()) => {
                Err(SnnkError::InvalidConfig(format!(
                    "smoothed relu width must be positive, got {width}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Activation::Sine => z.sin(),
            Activation::Cosine => z.cos(),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => logistic(z),
            Activation::Gelu => z * normal_cdf(z),
            Activation::Swish { beta } => z * logistic(beta * z),
            Activation::SmoothedRelu { width } => {
                let t = z / width;
                z * normal_cdf(t) + width * normal_pdf(t)
            }
        }
    }

    /// Parity of the function: `Some(true)` odd, `Some(false)` even.
    pub fn parity(&self) -> Option<bool> {
        match self {
            Activation::Sine | Activation::Tanh => Some(true),
            Activation::Cosine => Some(false),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Sine => write!(f, "sine"),
            Activation::Cosine => write!(f, "cosine"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Sigmoid => write!(f, "sigmoid"),
            Activation::Gelu => write!(f, "gelu"),
            Activation::Swish { beta } => write!(f, "swish:{beta}"),
            Activation::SmoothedRelu { width } => write!(f, "smoothed_relu:{width}"),
        }
    }
}

/// Parses `sine`, `cos`, `tanh`, `sigmoid`, `gelu`, `swish[:beta]`,
/// `smoothed_relu[:width]`.
impl FromStr for Activation {
    type Err = SnnkError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (head, param) = match lower.split_once(':') {
            Some((h, p)) => (h.to_string(), Some(p.to_string())),
            None => (lower.clone(), None),
        };
        let parse_param = |default: f64| -> Result<f64> {
            match &param {
                None => Ok(default),
                Some(p) => p
                    .parse::<f64>()
                    .map_err(|_| SnnkError::InvalidConfig(format!("bad parameter in {s:?}"))),
            }
        };
        let a = match head.as_str() {
            "sin" | "sine" => Activation::Sine,
            "cos" | "cosine" => Activation::Cosine,
            "tanh" => Activation::Tanh,
            "sigmoid" | "logistic" => Activation::Sigmoid,
            "gelu" => Activation::Gelu,
            "swish" | "silu" => Activation::Swish { beta: parse_param(1.0)? },
            "smoothed_relu" | "relu" => Activation::SmoothedRelu { width: parse_param(0.5)? },
            _ => return Err(SnnkError::UnsupportedActivation(s.to_string())),
        };
        a.validate()?;
        Ok(a)
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        assert_eq!(Activation::Sine.eval(PI / 2.0), 1.0);
        assert_eq!(Activation::Tanh.eval(0.0), 0.0);
        let s = Activation::Swish { beta: 1.0 }.eval(1.0);
        assert!((s - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((Activation::Gelu.eval(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((Activation::Sigmoid.eval(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn smoothed_relu_approaches_relu() {
        let a = Activation::SmoothedRelu { width: 1e-3 };
        assert!((a.eval(2.0) - 2.0).abs() < 1e-12);
        assert!(a.eval(-2.0).abs() < 1e-12);
    }

    #[test]
    fn parse_round_trip() {
        for a in [
            Activation::Sine,
            Activation::Cosine,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Gelu,
            Activation::Swish { beta: 1.5 },
            Activation::SmoothedRelu { width: 0.25 },
        ] {
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
        assert!("swish:-1".parse::<Activation>().is_err());
        assert!("mish".parse::<Activation>().is_err());
    }

    proptest! {
        #[test]
        fn parity_holds(z in -20.0f64..20.0) {
            prop_assert_eq!(Activation::Sine.eval(-z), -Activation::Sine.eval(z));
            prop_assert_eq!(Activation::Tanh.eval(-z), -Activation::Tanh.eval(z));
            prop_assert_eq!(Activation::Cosine.eval(-z), Activation::Cosine.eval(z));
        }

        #[test]
        fn sigmoid_is_shifted_tanh(z in -30.0f64..30.0) {
            let lhs = Activation::Sigmoid.eval(z);
            let rhs = 0.5 + 0.5 * (z / 2.0).tanh();
            prop_assert!((lhs - rhs).abs() < 1e-15);
        }
    }
}
