//! Truncated power series in one variable with real coefficients.
//!
//! A [`TruncatedSeries`] of order `N` stores `c_0, ..., c_N` and represents
//! `sum_k c_k z^k + O(z^(N+1))`. Binary operations zero-pad the shorter
//! operand, so the result carries the larger of the two orders.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(Error::NonFiniteCoefficient { index, value });
        }
        Ok(Self { coeffs })
    }

    /// Internal constructor for results of arithmetic on finite inputs.
    pub(crate) fn from_vec(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self::from_vec(vec![0.0; order + 1])
    }

    pub fn one(order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = 1.0;
        Self::from_vec(coeffs)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of `z^k`; zero beyond the stored order.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Re-truncates (or zero-pads) to the given order.
    pub fn with_order(&self, order: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order + 1, 0.0);
        Self::from_vec(coeffs)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// `alpha * s + beta * t`, coefficientwise.
    pub fn linear_combine(alpha: f64, s: &Self, beta: f64, t: &Self) -> Self {
        let order = s.order().max(t.order());
        let coeffs = (0..=order)
            .map(|k| alpha * s.coeff(k) + beta * t.coeff(k))
            .collect();
        Self::from_vec(coeffs)
    }

    /// Cauchy product truncated at the common (padded) order.
    pub fn multiply(&self, other: &Self) -> Self {
        let order = self.order().max(other.order());
        let mut out = vec![0.0; order + 1];
        for (i, &a) in self.coeffs.iter().enumerate().take(order + 1) {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate().take(order + 1 - i) {
                out[i + j] += a * b;
            }
        }
        Self::from_vec(out)
    }

    /// `self^m` by binary exponentiation; `m = 0` gives the series `1`.
    pub fn int_pow(&self, m: u32) -> Self {
        let mut result = Self::one(self.order());
        let mut base = self.clone();
        let mut e = m;
        while e > 0 {
            if e & 1 == 1 {
                result = result.multiply(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.multiply(&base);
            }
        }
        result
    }

    /// Horner evaluation at a real point.
    pub fn eval_real(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Divides by `(z - 1)^power`.
    ///
    /// Each division maps an order-`N` series to the order-`N-1` quotient
    /// `q_0 = -s_0, q_k = q_{k-1} - s_k`. The returned residual is the
    /// largest divisibility defect `|sum_k s_k|` met along the way; it is
    /// zero exactly when the truncated input vanishes at `z = 1` to the
    /// required order. An order-0 input collapses to the zero series with
    /// residual `|s_0|`.
    pub fn divide_by_z_minus_1(&self, power: u32) -> (Self, f64) {
        let mut current = self.clone();
        let mut residual = 0.0_f64;
        for _ in 0..power {
            let (q, defect) = current.divide_once();
            residual = residual.max(defect);
            current = q;
        }
        (current, residual)
    }

    fn divide_once(&self) -> (Self, f64) {
        let order = self.order();
        if order == 0 {
            return (Self::zero(0), self.coeffs[0].abs());
        }
        let mut q = Vec::with_capacity(order);
        let mut acc = 0.0;
        for &s in &self.coeffs[..order] {
            acc -= s;
            q.push(acc);
        }
        let defect = (acc - self.coeffs[order]).abs();
        (Self::from_vec(q), defect)
    }

    /// `k`-th derivative at `z = 0`, i.e. `k! c_k`.
    pub fn coeff_as_derivative(&self, k: usize) -> Result<f64> {
        let c = *self.coeffs.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            order: self.order(),
        })?;
        Ok((1..=k).fold(c, |acc, j| acc * j as f64))
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.coeffs.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}*z")?,
                _ => write!(f, "{c}*z^{k}")?,
            }
        }
        write!(f, " + O(z^{})", self.coeffs.len())
    }
}

/// Coefficients recovered from boundary values on the unit circle.
#[derive(Clone, Debug)]
pub struct ContourCoefficients {
    pub coeffs: Vec<f64>,
    /// Largest imaginary part discarded; tiny for real-coefficient inputs.
    pub max_imag: f64,
}

/// Recovers `c_0..c_N` of an analytic function from its trace `theta ->
/// F(e^{i theta})` with the trapezoidal rule on `samples` equispaced nodes.
pub fn contour_coefficients<F>(trace: F, order: usize, samples: usize) -> Result<ContourCoefficients>
where
    F: Fn(f64) -> Complex64,
{
    if samples < 4 * (order + 1) {
        return Err(Error::InvalidInput(format!(
            "contour extraction of order {order} needs at least {} samples, got {samples}",
            4 * (order + 1)
        )));
    }
    let values: Vec<Complex64> = (0..samples)
        .map(|j| trace(TAU * j as f64 / samples as f64))
        .collect();
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut max_imag = 0.0_f64;
    for k in 0..=order {
        let sum: Complex64 = values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                // reduce k*j mod samples to keep the angle small
                let phase = TAU * ((k * j) % samples) as f64 / samples as f64;
                v * Complex64::from_polar(1.0, -phase)
            })
            .sum();
        let c = sum / samples as f64;
        max_imag = max_imag.max(c.im.abs());
        coeffs.push(c.re);
    }
    Ok(ContourCoefficients { coeffs, max_imag })
}
