//! Zero-coupon bond pricing through the linear ODE system `G' = S G`.
//!
//! The price of a bond with time to maturity `x` in state `z` is
//! `H(x, z) = sum_k g_k(x) z^k`, where `G = (g_0, ..., g_n)` solves
//! `G' = S G`, `G(0) = e_0`. Column `j` of the companion matrix `S` holds the
//! coefficients of `j b z^(j-1) + j(j-1)/2 a z^(j-2) - R z^j`, so the band is
//! `S[j+k][j] = j b_(k+1) + j(j-1)/2 a_(k+2) - R_k` for `k in -2..=2`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::model::GeneralParams;
use crate::poly::Polynomial;

/// Below this maturity the yield is reported as its limit `R(z)`.
pub const YIELD_X_MIN: f64 = 1e-8;

/// Relative tolerance on the entries that would fall outside the matrix.
pub const BAND_RTOL: f64 = 1e-10;

/// The `(n+1) x (n+1)` generator of the coefficient system.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionMatrix {
    n: usize,
    entries: DMatrix<f64>,
}

fn band_entry(j: usize, k: i32, r: &Polynomial, b: &Polynomial, a: &Polynomial) -> f64 {
    let coeff = |p: &Polynomial, idx: i32| if idx < 0 { 0.0 } else { p.coeff(idx as usize) };
    let jf = j as f64;
    jf * coeff(b, k + 1) + 0.5 * jf * (jf - 1.0) * coeff(a, k + 2) - coeff(r, k)
}

impl CompanionMatrix {
    /// Builds `S` from raw coefficient polynomials, rejecting coefficient sets
    /// whose generator would leak outside degree `n`.
    pub fn from_coefficients(
        n: usize,
        r: &Polynomial,
        b: &Polynomial,
        a: &Polynomial,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("degree n must be at least 1".into()));
        }
        for (name, p, max) in [("R", r, 2), ("b", b, 3), ("a", a, 4)] {
            if p.degree() > max {
                return Err(Error::InvalidInput(format!("{name} has degree {} > {max}", p.degree())));
            }
        }
        let nf = n as f64;
        let scale = r
            .max_abs_coeff()
            .max(nf * b.max_abs_coeff())
            .max(0.5 * nf * nf * a.max_abs_coeff());
        let mut entries = DMatrix::zeros(n + 1, n + 1);
        for j in 0..=n {
            for k in -2i32..=2 {
                let row = j as i32 + k;
                if row < 0 {
                    continue;
                }
                let value = band_entry(j, k, r, b, a);
                if row as usize > n {
                    if value.abs() > BAND_RTOL * scale {
                        return Err(Error::ConstraintViolated(format!(
                            "generator entry S[{row}][{j}] = {value:e} lies outside degree {n}"
                        )));
                    }
                } else {
                    entries[(row as usize, j)] = value;
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `S G` for a coefficient vector.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let v = &self.entries * DVector::from_column_slice(g);
        v.iter().copied().collect()
    }
}

pub fn build_s(g: &GeneralParams) -> Result<CompanionMatrix> {
    CompanionMatrix::from_coefficients(g.n(), g.r(), g.b(), g.a())
}

/// Pricing coefficients at one maturity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GVector {
    pub x: f64,
    pub g: Vec<f64>,
}

impl GVector {
    /// `H(x, z) = sum_k g_k z^k`.
    pub fn price_at(&self, z: f64) -> f64 {
        self.g.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    pub fn as_polynomial(&self) -> Polynomial {
        Polynomial::new(self.g.clone())
    }
}

/// `G(x) = exp(S x) e_0`.
pub fn solve_g(s: &CompanionMatrix, x: f64) -> Result<GVector> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidInput(format!("maturity must be finite and >= 0, got {x}")));
    }
    let e = expm(&(s.matrix() * x));
    Ok(GVector {
        x,
        g: e.column(0).iter().copied().collect(),
    })
}

/// Bond pricer holding the model and its companion matrix.
#[derive(Clone, Debug)]
pub struct Pricer {
    params: GeneralParams,
    s: CompanionMatrix,
}

impl Pricer {
    pub fn new(params: &GeneralParams) -> Result<Self> {
        Ok(Self {
            s: build_s(params)?,
            params: params.clone(),
        })
    }

    pub fn params(&self) -> &GeneralParams {
        &self.params
    }

    pub fn companion(&self) -> &CompanionMatrix {
        &self.s
    }

    pub fn g_vector(&self, x: f64) -> Result<GVector> {
        solve_g(&self.s, x)
    }

    fn check_state(&self, z: f64) -> Result<()> {
        let iv = self.params.interval();
        if !iv.contains_closed(z) {
            return Err(Error::OutOfDomain {
                z,
                lo: iv.lo(),
                hi: iv.hi(),
            });
        }
        Ok(())
    }

    pub fn price(&self, x: f64, z: f64) -> Result<f64> {
        self.check_state(z)?;
        Ok(self.g_vector(x)?.price_at(z))
    }

    /// Continuously compounded yield `-log(H) / x`.
    pub fn yield_at(&self, x: f64, z: f64) -> Result<f64> {
        self.check_state(z)?;
        if !(x > 0.0) {
            return Err(Error::InvalidInput(format!("yield needs a positive maturity, got {x}")));
        }
        if x <= YIELD_X_MIN {
            return Ok(self.params.r().eval(z));
        }
        let gv = self.g_vector(x)?;
        yield_from(&gv, z)
    }
}

/// Yield from precomputed coefficients, for repeated evaluation across states.
pub fn yield_from(gv: &GVector, z: f64) -> Result<f64> {
    let price = gv.price_at(z);
    if !(price > 0.0) {
        return Err(Error::NonPositivePrice { x: gv.x, z, price });
    }
    Ok(-price.ln() / gv.x)
}

pub fn bond_price(g: &GeneralParams, x: f64, z: f64) -> Result<f64> {
    Pricer::new(g)?.price(x, z)
}

pub fn zero_yield(g: &GeneralParams, x: f64, z: f64) -> Result<f64> {
    Pricer::new(g)?.yield_at(x, z)
}

/// Max over the grid of `|H_x - b H_z - a/2 H_zz + R H|`, with `H_x` taken
/// from `S G` and the state derivatives from the polynomial form.
pub fn pde_residual(g: &GeneralParams, grid: &[(f64, f64)]) -> Result<f64> {
    let s = build_s(g)?;
    pde_residual_of(g.r(), g.b(), g.a(), grid, |x| {
        let gv = solve_g(&s, x)?;
        let dg = s.apply(&gv.g);
        Ok((gv.g, dg))
    })
}

/// PDE residual for any coefficient path `x -> (G(x), G'(x))`.
pub fn pde_residual_of<F>(
    r: &Polynomial,
    b: &Polynomial,
    a: &Polynomial,
    grid: &[(f64, f64)],
    coefficients: F,
) -> Result<f64>
where
    F: Fn(f64) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let mut worst = 0.0f64;
    for &(x, z) in grid {
        let (g, dg) = coefficients(x)?;
        let h = Polynomial::new(g);
        let hz = h.derivative();
        let hzz = hz.derivative();
        let lhs = Polynomial::new(dg).eval(z);
        let rhs = b.eval(z) * hz.eval(z) + 0.5 * a.eval(z) * hzz.eval(z) - r.eval(z) * h.eval(z);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}
