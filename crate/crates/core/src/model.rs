//! Model parameter containers and the feasible parameter sets.
//!
//! A model is described either on the canonical state space `(-1, 1)` by
//! [`CanonicalParams`], where the squared volatility is factored as
//! `a(z) = (1 - z^2)(c0 + c1 z + c2 z^2)`, or on an arbitrary bounded interval
//! by [`GeneralParams`]. The two are related by the affine change of state
//! `rho(z) = (2z - lo - hi) / (hi - lo)`.

use serde::{Deserialize, Serialize};

use crate::calib::ExampleModelParams;
use crate::error::{Error, Result};
use crate::poly::{Interval, Polynomial};

/// Relative tolerance for the equality constraints between coefficients.
pub const CONSTRAINT_RTOL: f64 = 1e-10;

/// Relative tolerance for `a` vanishing at the interval endpoints.
pub const ENDPOINT_RTOL: f64 = 1e-10;

const POSITIVITY_GRID: usize = 400;

/// Parameters on the canonical state space `(-1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "CanonicalJson", into = "CanonicalJson")]
pub struct CanonicalParams {
    pub n: usize,
    /// `(R0, R1, R2)`
    pub r: [f64; 3],
    /// `(b0, b1, b2, b3)`
    pub b: [f64; 4],
    /// `(c0, c1, c2)`
    pub c: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalJson {
    n: usize,
    #[serde(rename = "R0")]
    r0: f64,
    #[serde(rename = "R1")]
    r1: f64,
    #[serde(rename = "R2")]
    r2: f64,
    b0: f64,
    b1: f64,
    b2: f64,
    b3: f64,
    c0: f64,
    c1: f64,
    c2: f64,
}

impl From<CanonicalJson> for CanonicalParams {
    fn from(j: CanonicalJson) -> Self {
        Self {
            n: j.n,
            r: [j.r0, j.r1, j.r2],
            b: [j.b0, j.b1, j.b2, j.b3],
            c: [j.c0, j.c1, j.c2],
        }
    }
}

impl From<CanonicalParams> for CanonicalJson {
    fn from(p: CanonicalParams) -> Self {
        Self {
            n: p.n,
            r0: p.r[0],
            r1: p.r[1],
            r2: p.r[2],
            b0: p.b[0],
            b1: p.b[1],
            b2: p.b[2],
            b3: p.b[3],
            c0: p.c[0],
            c1: p.c[1],
            c2: p.c[2],
        }
    }
}

impl CanonicalParams {
    pub fn r_poly(&self) -> Polynomial {
        Polynomial::new(self.r.to_vec())
    }

    pub fn b_poly(&self) -> Polynomial {
        Polynomial::new(self.b.to_vec())
    }

    pub fn c_poly(&self) -> Polynomial {
        Polynomial::new(self.c.to_vec())
    }

    /// `a(z) = (1 - z^2) c(z)`.
    pub fn a_poly(&self) -> Polynomial {
        &Polynomial::new(vec![1.0, 0.0, -1.0]) * &self.c_poly()
    }

    fn coefficient_scale(&self) -> f64 {
        self.r
            .iter()
            .chain(&self.b)
            .chain(&self.c)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Parameters on an arbitrary bounded interval, `a = sigma^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeneralJson", into = "GeneralJson")]
pub struct GeneralParams {
    n: usize,
    interval: Interval,
    r: Polynomial,
    b: Polynomial,
    a: Polynomial,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneralJson {
    n: usize,
    lo: f64,
    hi: f64,
    #[serde(rename = "R")]
    r: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
}

impl TryFrom<GeneralJson> for GeneralParams {
    type Error = Error;
    fn try_from(j: GeneralJson) -> Result<Self> {
        GeneralParams::new(
            j.n,
            Interval::new(j.lo, j.hi)?,
            Polynomial::new(j.r),
            Polynomial::new(j.b),
            Polynomial::new(j.a),
        )
    }
}

impl From<GeneralParams> for GeneralJson {
    fn from(g: GeneralParams) -> Self {
        Self {
            n: g.n,
            lo: g.interval.lo(),
            hi: g.interval.hi(),
            r: g.r.padded(3),
            b: g.b.padded(4),
            a: g.a.padded(5),
        }
    }
}

/// Scale used to judge whether `p(z)` is numerically zero.
pub(crate) fn eval_scale(p: &Polynomial, z: f64) -> f64 {
    p.coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c.abs() * z.abs().powi(k as i32))
        .sum()
}

impl GeneralParams {
    /// Validates degrees (`R` quadratic, `b` cubic, `a` quartic), that `a`
    /// vanishes at both endpoints and that `a > 0` on an interior grid.
    pub fn new(
        n: usize,
        interval: Interval,
        r: Polynomial,
        b: Polynomial,
        a: Polynomial,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("degree n must be at least 1".into()));
        }
        for (name, p, max) in [("R", &r, 2), ("b", &b, 3), ("a", &a, 4)] {
            if p.coeffs().iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} has non-finite coefficients")));
            }
            if p.degree() > max {
                return Err(Error::InvalidInput(format!(
                    "{name} has degree {} > {max}",
                    p.degree()
                )));
            }
        }
        for e in [interval.lo(), interval.hi()] {
            let value = a.eval(e);
            if value.abs() > ENDPOINT_RTOL * eval_scale(&a, e).max(a.max_abs_coeff()) {
                return Err(Error::EndpointNotRoot { endpoint: e, value });
            }
        }
        for z in interval.interior_grid(POSITIVITY_GRID) {
            let value = a.eval(z);
            if value.is_nan() || value <= 0.0 {
                return Err(Error::NotPositiveInside { z, value });
            }
        }
        Ok(Self { n, interval, r, b, a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn r(&self) -> &Polynomial {
        &self.r
    }

    pub fn b(&self) -> &Polynomial {
        &self.b
    }

    pub fn a(&self) -> &Polynomial {
        &self.a
    }

    /// Same model with the short-rate map shifted by a constant.
    pub fn with_rate_shift(&self, delta: f64) -> Self {
        let r = &self.r + &Polynomial::constant(delta);
        Self { r, ..self.clone() }
    }
}

/// Membership of `(c0, c1, c2)` in the set of quadratics positive on `(-1, 1)`.
pub fn in_c(c: [f64; 3]) -> bool {
    in_c_within(c, 0.0)
}

/// Membership of the drift in the boundary set: `|b0 + b2 + c1| <= -(b1 + b3 + c0 + c2)`.
pub fn in_b(b: [f64; 4], c: [f64; 3]) -> bool {
    in_b_within(b, c, 0.0)
}

/// `in_c` with slack `tol` on the non-strict inequalities.
fn in_c_within(c: [f64; 3], tol: f64) -> bool {
    let [c0, c1, c2] = c;
    if !(c0 > 0.0) {
        return false;
    }
    if -c0 - tol <= c2 && c2 <= c0 + tol {
        c1.abs() <= c0 + c2 + tol
    } else if c2 > c0 {
        c1.abs() < 2.0 * (c0 * c2).sqrt()
    } else {
        false
    }
}

fn in_b_within(b: [f64; 4], c: [f64; 3], tol: f64) -> bool {
    (b[0] + b[2] + c[1]).abs() <= -(b[1] + b[3] + c[0] + c[2]) + tol
}

/// Individual outcomes of the feasibility test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityChecks {
    pub in_c: bool,
    pub in_b: bool,
    /// `R2 = (n/2) b3`
    pub r2_drift: bool,
    /// `R2 = n(n-1)/2 c2`
    pub r2_volatility: bool,
    /// `R1 = n b2 - n(n-1)/2 c1`
    pub r1: bool,
}

impl FeasibilityChecks {
    pub fn all(&self) -> bool {
        self.in_c && self.in_b && self.r2_drift && self.r2_volatility && self.r1
    }
}

fn close(lhs: f64, rhs: f64, scale: f64) -> bool {
    (lhs - rhs).abs() <= CONSTRAINT_RTOL * lhs.abs().max(rhs.abs()).max(scale)
}

/// Evaluates each feasibility condition separately.
pub fn feasibility_checks(p: &CanonicalParams) -> Result<FeasibilityChecks> {
    if p.n < 1 {
        return Err(Error::InvalidInput("degree n must be at least 1".into()));
    }
    let n = p.n as f64;
    let half_nn1 = 0.5 * n * (n - 1.0);
    let scale = p.coefficient_scale();
    Ok(FeasibilityChecks {
        // boundary cases such as a double root at an endpoint land a few ulps
        // outside after the change of interval
        in_c: in_c_within(p.c, CONSTRAINT_RTOL * scale),
        in_b: in_b_within(p.b, p.c, CONSTRAINT_RTOL * scale),
        r2_drift: close(p.r[2], 0.5 * n * p.b[3], scale),
        r2_volatility: close(p.r[2], half_nn1 * p.c[2], scale),
        r1: close(p.r[1], n * p.b[2] - half_nn1 * p.c[1], scale),
    })
}

/// Membership in the full feasible set for degree `n`.
///
/// For `n = 1` the same formulas reduce to `R1 = b2`, `R2 = b3 = 0`.
pub fn in_pn(p: &CanonicalParams) -> Result<bool> {
    Ok(feasibility_checks(p)?.all())
}

/// Maps canonical parameters onto `interval` via the inverse of `rho`.
pub fn to_general(p: &CanonicalParams, interval: Interval) -> Result<GeneralParams> {
    if p.n < 1 {
        return Err(Error::InvalidInput("degree n must be at least 1".into()));
    }
    let (lo, hi) = (interval.lo(), interval.hi());
    // canonical coordinate as a function of the general one
    let s = 2.0 / (hi - lo);
    let t = -(lo + hi) / (hi - lo);
    let r = p.r_poly().compose_affine(s, t)?;
    let b = p.b_poly().compose_affine(s, t)?.scale(1.0 / s);
    let a = p.a_poly().compose_affine(s, t)?.scale(1.0 / (s * s));
    GeneralParams::new(p.n, interval, r, b, a)
}

/// Maps a general-interval model onto the canonical state space.
pub fn to_canonical(g: &GeneralParams) -> Result<CanonicalParams> {
    let iv = g.interval();
    let s = 2.0 / iv.width();
    let back = 1.0 / s;
    let mid = iv.midpoint();
    let r = g.r().compose_affine(back, mid)?;
    let b = g.b().compose_affine(back, mid)?.scale(s);
    let a = g.a().compose_affine(back, mid)?.scale(s * s);
    let (c, rem) = a.div_rem(&Polynomial::new(vec![1.0, 0.0, -1.0]))?;
    let scale = a.max_abs_coeff();
    if rem.max_abs_coeff() > ENDPOINT_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::EndpointNotRoot {
            endpoint: if (rem.coeff(0) - rem.coeff(1)).abs() > (rem.coeff(0) + rem.coeff(1)).abs() {
                iv.lo()
            } else {
                iv.hi()
            },
            value: rem.max_abs_coeff(),
        });
    }
    if c.degree() > 2 {
        return Err(Error::InvalidInput("squared volatility has degree above 4".into()));
    }
    Ok(CanonicalParams {
        n: g.n(),
        r: [r.coeff(0), r.coeff(1), r.coeff(2)],
        b: [b.coeff(0), b.coeff(1), b.coeff(2), b.coeff(3)],
        c: [c.coeff(0), c.coeff(1), c.coeff(2)],
    })
}

/// Any of the accepted parameter-file shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSet {
    Canonical(CanonicalParams),
    General(GeneralParams),
    Example(ExampleModelParams),
}

impl ParamSet {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| {
            Error::InvalidInput(format!(
                "parameter file matches neither the canonical (n, R0..R2, b0..b3, c0..c2), \
                 general (n, lo, hi, R, b, a) nor example (alpha, beta, gamma, n) schema: {e}"
            ))
        })
    }

    /// Model on its natural interval; canonical sets live on `(-1, 1)`.
    pub fn to_general(&self) -> Result<GeneralParams> {
        match self {
            ParamSet::Canonical(p) => to_general(p, Interval::canonical()),
            ParamSet::General(g) => Ok(g.clone()),
            ParamSet::Example(e) => e.to_general(),
        }
    }

    pub fn to_canonical(&self) -> Result<CanonicalParams> {
        match self {
            ParamSet::Canonical(p) => Ok(p.clone()),
            other => to_canonical(&other.to_general()?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canon(n: usize, r: [f64; 3], b: [f64; 4], c: [f64; 3]) -> CanonicalParams {
        CanonicalParams { n, r, b, c }
    }

    #[test]
    fn in_c_examples() {
        assert!(in_c([1.0, 0.0, 0.0]));
        assert!(!in_c([1.0, 3.0, 1.0]));
        assert!(in_c([1.0, 0.0, 2.0]));
        assert!(!in_c([0.0, 0.0, 0.0]));
        assert!(!in_c([1.0, 0.0, -1.5]));
    }

    #[test]
    fn boundary_membership_survives_interval_change() {
        // n = 2: a = r (gamma - r)^2 maps to c proportional to 1 - z, on the
        // edge |c1| = c0 + c2
        for n in [2, 3, 4] {
            let g = crate::calib::ExampleModelParams::new(0.3, 0.02, 0.1, n).to_general().unwrap();
            assert!(in_pn(&to_canonical(&g).unwrap()).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn in_b_examples() {
        assert!(in_b([0.0, -2.0, 0.0, 0.0], [1.0, 0.0, 0.0]));
        assert!(!in_b([0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0]));
        assert!(in_b([0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0]));
    }

    #[test]
    fn in_pn_examples() {
        let p = canon(2, [0.05, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        assert!(in_pn(&p).unwrap());
        let p = canon(2, [0.05, 1.0, 0.0], [0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        assert!(!in_pn(&p).unwrap());
        let p = canon(2, [0.0, 0.0, 0.5], [0.0, -2.0, 0.0, 0.5], [1.0, 0.0, 0.5]);
        assert!(in_pn(&p).unwrap());
        let p = canon(0, [0.0; 3], [0.0; 4], [1.0, 0.0, 0.0]);
        assert!(in_pn(&p).is_err());
    }

    #[test]
    fn n_one_requires_r1_equal_b2() {
        let ok = canon(1, [0.02, 0.3, 0.0], [0.0, -2.0, 0.3, 0.0], [1.0, 0.0, 0.0]);
        assert!(in_pn(&ok).unwrap());
        let bad = canon(1, [0.02, 0.1, 0.0], [0.0, -2.0, 0.3, 0.0], [1.0, 0.0, 0.0]);
        assert!(!in_pn(&bad).unwrap());
    }

    #[test]
    fn canonical_identity_on_canonical_interval() {
        let p = canon(2, [0.05, 0.0, 0.0], [0.1, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let g = to_general(&p, Interval::canonical()).unwrap();
        assert_eq!(g.r().padded(3), p.r.to_vec());
        assert_eq!(g.b().padded(4), p.b.to_vec());
        assert_eq!(g.a().padded(5), vec![1.0, 0.0, -1.0, 0.0, 0.0]);
        assert_eq!(to_canonical(&g).unwrap(), p);
    }

    #[test]
    fn example_model_round_trip() {
        let (alpha, beta, gamma) = (0.3, 0.02, 0.1);
        let g = GeneralParams::new(
            2,
            Interval::new(0.0, gamma).unwrap(),
            Polynomial::new(vec![0.0, 1.0]),
            Polynomial::new(vec![alpha * beta, -alpha]),
            Polynomial::new(vec![0.0, gamma * gamma, -2.0 * gamma, 1.0]),
        )
        .unwrap();
        let c = to_canonical(&g).unwrap();
        // the example model satisfies the degree-2 constraints
        assert!(feasibility_checks(&c).unwrap().r1);
        let back = to_general(&c, g.interval()).unwrap();
        for (x, y) in [(g.r(), back.r()), (g.b(), back.b()), (g.a(), back.a())] {
            for k in 0..5 {
                assert!((x.coeff(k) - y.coeff(k)).abs() <= 1e-10 * x.max_abs_coeff().max(1e-3));
            }
        }
    }

    #[test]
    fn rejects_degenerate_interval_and_nonvanishing_a() {
        assert!(Interval::new(0.3, 0.3).is_err());
        let err = GeneralParams::new(
            2,
            Interval::new(-1.0, 1.0).unwrap(),
            Polynomial::zero(),
            Polynomial::zero(),
            Polynomial::new(vec![1.0, 0.0, -0.5]),
        );
        assert!(matches!(err, Err(Error::EndpointNotRoot { .. })));
        let err = GeneralParams::new(
            2,
            Interval::new(-1.0, 1.0).unwrap(),
            Polynomial::zero(),
            Polynomial::zero(),
            Polynomial::new(vec![-1.0, 0.0, 1.0]),
        );
        assert!(matches!(err, Err(Error::NotPositiveInside { .. })));
    }

    #[test]
    fn json_shapes() {
        let s = r#"{"n":2,"R0":0.05,"R1":0,"R2":0,"b0":0,"b1":-1,"b2":0,"b3":0,"c0":1,"c1":0,"c2":0}"#;
        let p = ParamSet::from_json(s).unwrap();
        assert!(matches!(p, ParamSet::Canonical(_)));
        let back: CanonicalParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back.r, [0.05, 0.0, 0.0]);

        let s = r#"{"n":2,"lo":0,"hi":0.1,"R":[0,1],"b":[0.006,-0.3],"a":[0,0.01,-0.2,1]}"#;
        assert!(matches!(ParamSet::from_json(s).unwrap(), ParamSet::General(_)));

        let s = r#"{"alpha":0.3,"beta":0.02,"gamma":0.1,"n":2}"#;
        assert!(matches!(ParamSet::from_json(s).unwrap(), ParamSet::Example(_)));

        assert!(ParamSet::from_json(r#"{"n":2,"R0":1}"#).is_err());
        // a not vanishing at hi
        let s = r#"{"n":2,"lo":0,"hi":0.2,"R":[0,1],"b":[0.006,-0.3],"a":[0,0.01,-0.2,1]}"#;
        assert!(ParamSet::from_json(s).is_err());
    }

    fn random_c() -> impl Strategy<Value = [f64; 3]> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c)| [a, b, c])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn in_c_matches_dense_grid(c in random_c()) {
            let grid_min = (0..2001)
                .map(|i| -0.999 + 1.998 * i as f64 / 2000.0)
                .map(|z| c[0] + c[1] * z + c[2] * z * z)
                .fold(f64::INFINITY, f64::min);
            if grid_min.abs() > 1e-9 {
                // grid positivity is necessary for membership
                if in_c(c) {
                    prop_assert!(grid_min > 0.0);
                }
                // grid negativity excludes membership outright
                if grid_min < 0.0 {
                    prop_assert!(!in_c(c));
                }
            }
            if in_c(c) {
                prop_assert!(grid_min >= -1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn in_b_matches_endpoint_signs(
            b in prop::array::uniform4(-3.0..3.0f64),
            c in random_c(),
        ) {
            let cp = canon(2, [0.0; 3], b, c);
            let a = cp.a_poly();
            let bp = cp.b_poly();
            let da = a.derivative();
            let left = 2.0 * bp.eval(-1.0) - da.eval(-1.0);
            let right = 2.0 * bp.eval(1.0) - da.eval(1.0);
            prop_assert_eq!(in_b(b, c), left >= -1e-12 && right <= 1e-12,
                "left {} right {}", left, right);
        }

        #[test]
        fn canonical_general_round_trip(
            r in prop::array::uniform3(-1.0..1.0f64),
            b in prop::array::uniform4(-1.0..1.0f64),
            c0 in 0.2..2.0f64,
            // monomial coefficients lose about (|lo| / width)^4 ulps in the
            // affine map, so far off-centre narrow intervals cannot meet 1e-10
            lo in -2.0..2.0f64,
            width in 0.5..5.0f64,
        ) {
            let p = canon(3, r, b, [c0, 0.1 * c0, 0.5 * c0]);
            let iv = Interval::new(lo, lo + width).unwrap();
            let back = to_canonical(&to_general(&p, iv).unwrap()).unwrap();
            let scale = p.coefficient_scale();
            for (x, y) in p.r.iter().chain(&p.b).chain(&p.c).zip(back.r.iter().chain(&back.b).chain(&back.c)) {
                prop_assert!((x - y).abs() <= 1e-10 * scale, "{} vs {}", x, y);
            }
        }
    }
}
