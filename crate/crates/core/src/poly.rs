//! Dense real-coefficient univariate polynomials and state-space intervals.
//!
//! Every model coefficient function (short-rate map `R`, drift `b`, squared
//! volatility `a`) and every pricing coefficient is carried as a
//! [`Polynomial`]. Degrees never exceed a handful, so the representation is a
//! plain dense coefficient vector in ascending order.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real polynomial `sum_k coeffs[k] z^k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// The monomial `c z^k`.
    pub fn monomial(k: usize, c: f64) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `z^k`, zero beyond the stored range.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Index of the last nonzero coefficient; `-1` for the zero polynomial.
    pub fn degree(&self) -> isize {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(-1, |k| k as isize)
    }

    pub fn is_zero(&self) -> bool {
        self.degree() < 0
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Coefficients padded (or truncated, when the tail is zero) to length `len`.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        (0..len).map(|k| self.coeff(k)).collect()
    }

    /// Horner evaluation.
    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Polynomial {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Polynomial { coeffs }
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Returns `q` with `q(z) = p(s z + t)`, expanded binomially.
    pub fn compose_affine(&self, s: f64, t: f64) -> Result<Polynomial> {
        if s == 0.0 || !s.is_finite() || !t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "affine map z -> {s} z + {t} is degenerate"
            )));
        }
        let len = self.coeffs.len();
        let mut out = vec![0.0; len];
        // binomial row C(k, j), updated in place per power k
        let mut binom = vec![0.0; len];
        for (k, &pk) in self.coeffs.iter().enumerate() {
            binom[k] = 1.0;
            for j in (1..k).rev() {
                binom[j] += binom[j - 1];
            }
            if pk == 0.0 {
                continue;
            }
            for (j, &c) in binom.iter().enumerate().take(k + 1) {
                out[j] += pk * c * s.powi(j as i32) * t.powi((k - j) as i32);
            }
        }
        Ok(Polynomial { coeffs: out })
    }

    /// Euclidean division, `self = q * divisor + r` with `deg r < deg divisor`.
    pub fn div_rem(&self, divisor: &Polynomial) -> Result<(Polynomial, Polynomial)> {
        let dd = divisor.degree();
        if dd < 0 {
            return Err(Error::InvalidInput("division by the zero polynomial".into()));
        }
        let dd = dd as usize;
        let lead = divisor.coeffs[dd];
        let mut rem = self.coeffs.clone();
        let nd = self.degree();
        if nd < dd as isize {
            return Ok((Polynomial::zero(), self.clone()));
        }
        let nd = nd as usize;
        let mut quot = vec![0.0; nd - dd + 1];
        for k in (0..=nd - dd).rev() {
            let c = rem[k + dd] / lead;
            quot[k] = c;
            for j in 0..=dd {
                rem[k + j] -= c * divisor.coeffs[j];
            }
        }
        rem.truncate(dd);
        Ok((Polynomial { coeffs: quot }, Polynomial { coeffs: rem }))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c} z")?,
                _ => write!(f, "{c} z^{k}")?,
            }
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial {
            coeffs: (0..len).map(|k| self.coeff(k) + rhs.coeff(k)).collect(),
        }
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial {
            coeffs: (0..len).map(|k| self.coeff(k) - rhs.coeff(k)).collect(),
        }
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.coeffs.is_empty() || rhs.coeffs.is_empty() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &p) in self.coeffs.iter().enumerate() {
            for (j, &q) in rhs.coeffs.iter().enumerate() {
                out[i + j] += p * q;
            }
        }
        Polynomial { coeffs: out }
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Open state-space interval `(lo, hi)` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::DegenerateInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// The canonical state space `(-1, 1)`.
    pub fn canonical() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains_closed(&self, z: f64) -> bool {
        self.lo <= z && z <= self.hi
    }

    pub fn contains_open(&self, z: f64) -> bool {
        self.lo < z && z < self.hi
    }

    /// `k` equally spaced points strictly inside the interval.
    pub fn interior_grid(&self, k: usize) -> Vec<f64> {
        let h = self.width() / (k as f64 + 1.0);
        (1..=k).map(|i| self.lo + h * i as f64).collect()
    }
}
