//! Smoothing kernels `K_h(u) = K(u / h) / h`.
//!
//! Base kernels integrate to one, are symmetric and peak at zero. The compact
//! families use closed support: `K_h(h) > 0`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{AbcError, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Uniform,
    Gaussian,
    Epanechnikov,
    Triangular,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Uniform,
        KernelFamily::Gaussian,
        KernelFamily::Epanechnikov,
        KernelFamily::Triangular,
    ];

    pub fn compact_support(self) -> bool {
        !matches!(self, KernelFamily::Gaussian)
    }

    /// The unit-scale kernel `K(x)` for `x >= 0`.
    pub fn base(self, x: f64) -> f64 {
        match self {
            KernelFamily::Uniform => {
                if x <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            KernelFamily::Epanechnikov => {
                if x <= 1.0 {
                    0.75 * (1.0 - x * x)
                } else {
                    0.0
                }
            }
            KernelFamily::Triangular => {
                if x <= 1.0 {
                    1.0 - x
                } else {
                    0.0
                }
            }
        }
    }

    fn log_base(self, x: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => -0.5 * x * x - LN_SQRT_2PI,
            _ => {
                let v = self.base(x);
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// The smallest scale `h` at which a draw at distance `d` has
    /// `K_h(d) / K_h(0) >= v`, for `v` in `(0, 1]`. Infinite when no scale
    /// reaches `v`.
    pub fn threshold_scale(self, d: f64, v: f64) -> f64 {
        if v > 1.0 {
            return f64::INFINITY;
        }
        if v <= 0.0 || d == 0.0 {
            return 0.0;
        }
        let x_max = match self {
            KernelFamily::Uniform => 1.0,
            KernelFamily::Gaussian => (-2.0 * v.ln()).sqrt(),
            KernelFamily::Epanechnikov => (1.0 - v).sqrt(),
            KernelFamily::Triangular => 1.0 - v,
        };
        if x_max > 0.0 {
            d / x_max
        } else {
            f64::INFINITY
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Uniform => "uniform",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Triangular => "triangular",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = AbcError;
    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AbcError::Config(format!("unknown kernel family '{s}'")))
    }
}

/// A kernel family at scale `h`. `h = +∞` is allowed as the sentinel for an
/// infinite initial tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel {
    family: KernelFamily,
    scale: f64,
}

impl SmoothingKernel {
    pub fn new(family: KernelFamily, scale: f64) -> Result<Self> {
        if scale.is_nan() || scale <= 0.0 {
            return Err(AbcError::Config(format!("kernel scale must be > 0, got {scale}")));
        }
        Ok(Self { family, scale })
    }

    pub fn infinite(family: KernelFamily) -> Self {
        Self {
            family,
            scale: f64::INFINITY,
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_infinite(&self) -> bool {
        self.scale.is_infinite()
    }

    pub fn compact_support(&self) -> bool {
        self.family.compact_support()
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(self.family, scale)
    }

    /// `K_h(u)` for a distance `u >= 0`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(AbcError::InvalidInput(format!("kernel argument must be finite, got {u}")));
        }
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: f64) -> f64 {
        self.family.base(u.abs() / self.scale) / self.scale
    }

    /// `ln K_h(u)`, `-∞` outside a compact support. Stays finite for the
    /// gaussian family where `eval` would underflow.
    pub fn log_eval(&self, u: f64) -> f64 {
        self.family.log_base(u.abs() / self.scale) - self.scale.ln()
    }

    /// `K_h(u) / K_h(0)`, the acceptance probability of a draw at distance `u`.
    pub fn relative(&self, u: f64) -> f64 {
        let x = u.abs() / self.scale;
        match self.family {
            KernelFamily::Uniform => {
                if x <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => (-0.5 * x * x).exp(),
            KernelFamily::Epanechnikov => {
                if x <= 1.0 {
                    1.0 - x * x
                } else {
                    0.0
                }
            }
            KernelFamily::Triangular => {
                if x <= 1.0 {
                    1.0 - x
                } else {
                    0.0
                }
            }
        }
    }

    /// `ln(K_h(u) / K_h(0))`, `-∞` outside a compact support.
    pub fn log_relative(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let x = u.abs() / self.scale;
                -0.5 * x * x
            }
            _ => {
                let r = self.relative(u);
                if r > 0.0 {
                    r.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `K_h(0)`, the kernel maximum.
    pub fn at_zero(&self) -> Result<f64> {
        if self.is_infinite() {
            return Err(AbcError::InvalidInput(
                "K_h(0) is undefined for infinite tolerance".into(),
            ));
        }
        Ok(self.family.base(0.0) / self.scale)
    }
}

/// `K_h(u)` as a free function.
pub fn kernel_eval(kernel: &SmoothingKernel, u: f64) -> Result<f64> {
    kernel.eval(u)
}

/// `K_h(0)` as a free function.
pub fn kernel_at_zero(kernel: &SmoothingKernel) -> Result<f64> {
    kernel.at_zero()
}
