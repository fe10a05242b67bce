//! Non-explosion classification of `dZ = b(Z) dt + sqrt(a(Z)) dW` on a
//! bounded interval whose endpoints are roots of `a`.
//!
//! Two independent routes are provided:
//!
//! * [`classify_simple`] evaluates the endpoint derivative test
//!   `2b(lo) - a'(lo) >= 0 >= 2b(hi) - a'(hi)`;
//! * [`classify_orders`] extracts the leading orders of `a` and `b` at each
//!   endpoint ([`boundary_orders`]) and looks them up in the case table of
//!   Feller's scale-function integral.
//!
//! Order extraction always works in the inward variable `t >= 0`
//! (`z = lo + t` on the left, `z = hi - t` on the right), with the drift
//! sign flipped on the right so that `beta > 0` means "pointing inside".

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{eval_scale, GeneralParams};
use crate::poly::Polynomial;

/// Ties on the boundary inequalities within this fraction of the
/// coefficient scale count as satisfied.
pub const TIE_RTOL: f64 = 1e-12;

/// Coefficients below this fraction of the scale are treated as zero when
/// reading off leading orders.
pub const ORDER_RTOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    NonExplosive,
    Explosive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign of `dz/dt` for the inward variable.
    fn inward(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Leading behaviour at one endpoint: `a = alpha t^(A+1) + ...`,
/// inward drift `= beta t^B + ...`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryOrders {
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a_order: u32,
    pub beta: f64,
    #[serde(rename = "B")]
    pub b_order: u32,
    pub vanishing_b: bool,
}

/// Polynomial in the inward variable `t` at `endpoint`.
pub(crate) fn inward_shift(p: &Polynomial, endpoint: f64, side: Side) -> Result<Polynomial> {
    p.compose_affine(side.inward(), endpoint)
}

fn leading(p: &Polynomial, tol: f64) -> Option<(usize, f64)> {
    p.coeffs()
        .iter()
        .enumerate()
        .find(|(_, c)| c.abs() > tol)
        .map(|(k, &c)| (k, c))
}

/// Leading orders of `a` and of the inward drift at `endpoint`.
pub fn boundary_orders(
    a: &Polynomial,
    b: &Polynomial,
    endpoint: f64,
    side: Side,
) -> Result<BoundaryOrders> {
    let a_t = inward_shift(a, endpoint, side)?;
    let a_tol = ORDER_RTOL * eval_scale(a, endpoint).max(a.max_abs_coeff());
    if a_t.coeff(0).abs() > a_tol {
        return Err(Error::EndpointNotRoot {
            endpoint,
            value: a_t.coeff(0),
        });
    }
    let mut trimmed = a_t.coeffs().to_vec();
    if let Some(c0) = trimmed.first_mut() {
        *c0 = 0.0;
    }
    let (ka, alpha) = leading(&Polynomial::new(trimmed), a_tol).ok_or_else(|| {
        Error::InvalidInput(format!("a vanishes identically near endpoint {endpoint}"))
    })?;
    if alpha < 0.0 {
        return Err(Error::NotPositiveInside {
            z: endpoint,
            value: alpha,
        });
    }
    let b_t = inward_shift(b, endpoint, side)?.scale(side.inward());
    let b_tol = ORDER_RTOL * eval_scale(b, endpoint).max(b.max_abs_coeff());
    let (b_order, beta, vanishing_b) = match leading(&b_t, b_tol) {
        Some((k, c)) => (k as u32, c, false),
        None => (0, 0.0, true),
    };
    Ok(BoundaryOrders {
        alpha,
        a_order: (ka - 1) as u32,
        beta,
        b_order,
        vanishing_b,
    })
}

/// Case table for a single endpoint.
///
/// Non-explosive on `{A > 0, B = 0, beta > 0} u {A > 0, B > 0} u
/// {A = 0, B = 0, 2 beta >= alpha}`. A drift vanishing identically near the
/// endpoint is read as the `B -> infinity` limit.
pub fn classify_endpoint(o: &BoundaryOrders) -> Verdict {
    let ok = if o.vanishing_b {
        o.a_order > 0
    } else {
        match (o.a_order, o.b_order) {
            (0, 0) => 2.0 * o.beta - o.alpha >= -TIE_RTOL * (2.0 * o.beta.abs() + o.alpha),
            (0, _) => false,
            (_, 0) => o.beta > 0.0,
            (_, _) => true,
        }
    };
    if ok {
        Verdict::NonExplosive
    } else {
        Verdict::Explosive
    }
}

pub fn classify_orders(left: &BoundaryOrders, right: &BoundaryOrders) -> Verdict {
    match (classify_endpoint(left), classify_endpoint(right)) {
        (Verdict::NonExplosive, Verdict::NonExplosive) => Verdict::NonExplosive,
        _ => Verdict::Explosive,
    }
}

/// Values of `2b - a'` at the two endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimpleTest {
    pub left_value: f64,
    pub right_value: f64,
    #[serde(skip)]
    pub verdict: Verdict,
}

fn tie_scale(a: &Polynomial, b: &Polynomial, z: f64) -> f64 {
    2.0 * eval_scale(b, z) + eval_scale(&a.derivative(), z)
}

/// Endpoint derivative test `2b(lo) - a'(lo) >= 0 >= 2b(hi) - a'(hi)`.
pub fn classify_simple(g: &GeneralParams) -> Result<SimpleTest> {
    let iv = g.interval();
    let (a, b) = (g.a(), g.b());
    let da = a.derivative();
    let left_value = 2.0 * b.eval(iv.lo()) - da.eval(iv.lo());
    let right_value = 2.0 * b.eval(iv.hi()) - da.eval(iv.hi());
    let left_ok = left_value >= -TIE_RTOL * tie_scale(a, b, iv.lo());
    let right_ok = right_value <= TIE_RTOL * tie_scale(a, b, iv.hi());
    let verdict = if left_ok && right_ok {
        Verdict::NonExplosive
    } else {
        Verdict::Explosive
    };
    Ok(SimpleTest {
        left_value,
        right_value,
        verdict,
    })
}

/// Both classifications plus the extracted orders.
#[derive(Clone, Debug, Serialize)]
pub struct FellerReport {
    pub verdict: Verdict,
    pub orders_verdict: Verdict,
    pub left: BoundaryOrders,
    pub right: BoundaryOrders,
    pub simple_test: SimpleTest,
}

pub fn feller_report(g: &GeneralParams) -> Result<FellerReport> {
    let iv = g.interval();
    let simple_test = classify_simple(g)?;
    let left = boundary_orders(g.a(), g.b(), iv.lo(), Side::Left)?;
    let right = boundary_orders(g.a(), g.b(), iv.hi(), Side::Right)?;
    Ok(FellerReport {
        verdict: simple_test.verdict,
        orders_verdict: classify_orders(&left, &right),
        left,
        right,
        simple_test,
    })
}
