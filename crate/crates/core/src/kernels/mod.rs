//! Finite-time kernels: `F_k`, the Warren density, the biorthogonal pair `Psi`/`Phi`,
//! the finite-N kernel, the flat kernel with its alternative contour forms, and the
//! explicit Airy_1 kernel.

mod airy1;
mod finite;
mod flat;
mod heat;

pub use airy1::eval_airy1_kernel;
pub use finite::{
    biphi_polynomial, eval_biphi, eval_finite_kernel, eval_phi_conv, finite_kernel_double_contour, finite_kernel_matrix,
    finite_kernel_sum_matrix,
    phi_conv_circle, phi_conv_conjugated, phi_conv_line, psi_extended, shifted_finite_kernel,
};
pub use flat::{
    eval_conjugated_kernel, eval_flat_kernel, flat_kernel_k2, flat_kernel_multisheet, FlatKernel, KernelBox,
    Normalization, Resolution,
};
pub use heat::{eval_fk, eval_psi, eval_psi_on_line, heat_kernel, hermite_fk, psi_closed, transition_density};

use crate::airy::AiryError;
use crate::lambert::LambertError;
use thiserror::Error;

/// `2^{5/3}`.
pub const TWO_5_3: f64 = 3.174_802_103_936_399;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("time must be positive, got t = {0}")]
    Time(f64),
    #[error("label out of range: {0}")]
    Label(String),
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("contour quadrature did not settle: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Lambert(#[from] LambertError),
    #[error(transparent)]
    Airy(#[from] AiryError),
}

pub fn check_time(t: f64) -> Result<(), KernelError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Time(t))
    }
}

/// Space-label coordinate `(x, n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    pub x: f64,
    pub n: i64,
}

impl KernelPoint {
    pub fn new(x: f64, n: i64) -> Self {
        Self { x, n }
    }
}

/// Airy-scale coordinate `(s, r)` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPoint {
    pub s: f64,
    pub r: f64,
    pub t: f64,
}

impl ScaledPoint {
    pub fn new(s: f64, r: f64, t: f64) -> Self {
        Self { s, r, t }
    }

    /// `n = floor(-t + 2^{5/3} t^{2/3} r)`.
    pub fn label(&self) -> i64 {
        (-self.t + TWO_5_3 * self.t.powf(2.0 / 3.0) * self.r).floor() as i64
    }

    /// `x = -2^{5/3} t^{2/3} r - (2t)^{1/3} s`.
    pub fn position(&self) -> f64 {
        -TWO_5_3 * self.t.powf(2.0 / 3.0) * self.r - (2.0 * self.t).cbrt() * self.s
    }

    pub fn to_kernel_point(&self) -> KernelPoint {
        KernelPoint { x: self.position(), n: self.label() }
    }

    /// Inverse of `position` for fixed `r`.
    pub fn s_of_position(x: f64, r: f64, t: f64) -> f64 {
        -(x + TWO_5_3 * t.powf(2.0 / 3.0) * r) / (2.0 * t).cbrt()
    }
}

/// Initial positions `x_k(0)`, indexed by label `k = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `x_k(0) = -k`.
    Flat,
    /// All particles at the origin.
    Step,
    /// Explicit positions for labels `1..=len`, weakly decreasing.
    Custom(Vec<f64>),
}

impl InitialCondition {
    /// Position of label `k`.
    pub fn position(&self, k: i64) -> Result<f64, KernelError> {
        match self {
            InitialCondition::Flat => Ok(-(k as f64)),
            InitialCondition::Step => Ok(0.0),
            InitialCondition::Custom(v) => {
                if k < 1 || k as usize > v.len() {
                    Err(KernelError::Label(format!("label {k} outside custom initial condition of size {}", v.len())))
                } else {
                    Ok(v[k as usize - 1])
                }
            }
        }
    }

    /// Positions of labels `1..=n`.
    pub fn positions(&self, n: usize) -> Result<Vec<f64>, KernelError> {
        let v: Vec<f64> = (1..=n as i64).map(|k| self.position(k)).collect::<Result<_, _>>()?;
        self.validate(&v)?;
        Ok(v)
    }

    fn validate(&self, v: &[f64]) -> Result<(), KernelError> {
        if v.windows(2).any(|w| w[1] > w[0]) {
            return Err(KernelError::Domain("initial positions must be weakly decreasing in the label".into()));
        }
        Ok(())
    }
}

/// Time and finite-window size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeParams {
    pub t: f64,
    pub m: usize,
}

impl TimeParams {
    pub fn new(t: f64, m: usize) -> Result<Self, KernelError> {
        check_time(t)?;
        Ok(Self { t, m })
    }
}
