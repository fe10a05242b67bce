//! Invariant density, stationary moment matrix and the spectral form of the
//! bond price.
//!
//! With `f` the invariant density and `M_ij = int z^(i+j) f`, the companion
//! matrix satisfies `S^T M = M S`. Factoring `M = L L^T` turns the problem
//! into the ordinary symmetric eigenproblem for `L^T S L^-T`, whose
//! eigenvalues are real by construction. Right eigenvectors are normalised
//! by `u^T M u = 1`, left eigenvectors are `v = u^T M`, and
//!
//! ```text
//! H(x, z) = sum_i Q_i(z) exp(lambda_i x),   Q_i(z) = u_i(z) * int u_i f.
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feller::{boundary_orders, classify_simple, inward_shift, BoundaryOrders, Side};
use crate::model::GeneralParams;
use crate::poly::Polynomial;
use crate::pricing::{build_s, CompanionMatrix};
use crate::quad::{integrate, integrate_vec, Tolerance};

/// Condition number of `M` beyond which the eigensolve is refused.
pub const MAX_MOMENT_CONDITION: f64 = 1e12;

/// Integrability margin `e + 1` of the endpoint power `t^e` below which the
/// density is treated as a boundary case.
const MIN_INTEGRABILITY: f64 = 1e-3;

const EXPONENT_TOL: Tolerance = Tolerance {
    abs: 1e-14,
    rel: 1e-14,
    max_intervals: 2000,
};

const DENSITY_TOL: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-12,
    max_intervals: 4000,
};

/// One half of the interval, parametrised by the inward distance `t` to
/// its endpoint, `0 < t <= half_width`.
#[derive(Clone, Debug)]
struct HalfLine {
    endpoint: f64,
    side: Side,
    half_width: f64,
    a_t: Polynomial,
    drift_t: Polynomial,
    /// substitution `t = half_width * u^power`
    power: f64,
}

impl HalfLine {
    fn new(g: &GeneralParams, side: Side) -> Result<Self> {
        let iv = g.interval();
        let endpoint = match side {
            Side::Left => iv.lo(),
            Side::Right => iv.hi(),
        };
        let orders = boundary_orders(g.a(), g.b(), endpoint, side)?;
        let a_t = inward_shift(g.a(), endpoint, side)?;
        let sign = if side == Side::Left { 1.0 } else { -1.0 };
        let drift_t = inward_shift(g.b(), endpoint, side)?.scale(sign);
        let power = endpoint_power(&orders, endpoint)?;
        Ok(Self {
            endpoint,
            side,
            half_width: 0.5 * iv.width(),
            a_t,
            drift_t,
            power,
        })
    }

    fn z(&self, t: f64) -> f64 {
        match self.side {
            Side::Left => self.endpoint + t,
            Side::Right => self.endpoint - t,
        }
    }

    /// `log(a f)` up to the global constant: `-int_t^w 2 drift / a ds`,
    /// integrated in `log s` so the `1/s` endpoint behaviour is flat.
    fn log_scale_density(&self, t: f64) -> Result<f64> {
        let integrand = |w: f64| {
            let s = w.exp();
            2.0 * self.drift_t.eval(s) * s / self.a_t.eval(s)
        };
        let i = integrate(integrand, t.ln(), self.half_width.ln(), EXPONENT_TOL)?;
        Ok(-i)
    }

    fn log_density(&self, t: f64) -> Result<f64> {
        Ok(self.log_scale_density(t)? - self.a_t.eval(t).ln())
    }

    /// `int_0^w h(z(t)) f~(t) dt` after the power substitution.
    fn integrate<H>(&self, dim: usize, log_norm: f64, h: &H) -> Result<Vec<f64>>
    where
        H: Fn(f64, &mut [f64]),
    {
        let w = self.half_width;
        let p = self.power;
        let failure = std::cell::Cell::new(None);
        let mut scratch = vec![0.0; dim];
        let scratch_cell = std::cell::RefCell::new(&mut scratch);
        let result = integrate_vec(
            |u, out| {
                let t = w * u.powf(p);
                if t <= 0.0 {
                    out.fill(0.0);
                    return;
                }
                let log_f = match self.log_density(t) {
                    Ok(v) => v - log_norm,
                    Err(e) => {
                        failure.set(Some(e.to_string()));
                        out.fill(0.0);
                        return;
                    }
                };
                let jac = w * p * u.powf(p - 1.0);
                let weight = (log_f).exp() * jac;
                let mut buf = scratch_cell.borrow_mut();
                h(self.z(t), &mut buf);
                for (o, v) in out.iter_mut().zip(buf.iter()) {
                    *o = if weight == 0.0 { 0.0 } else { weight * v };
                }
            },
            0.0,
            1.0,
            dim,
            DENSITY_TOL,
        )?;
        if let Some(msg) = failure.take() {
            return Err(Error::Quadrature(msg));
        }
        Ok(result)
    }
}

/// Substitution power from the endpoint behaviour `f ~ t^e`, rejecting
/// non-integrable endpoints.
fn endpoint_power(o: &BoundaryOrders, endpoint: f64) -> Result<f64> {
    let fail = |why: String| Err(Error::NoInvariantDensity(format!("endpoint {endpoint}: {why}")));
    if o.vanishing_b || o.b_order > o.a_order {
        return fail("drift too weak, density behaves like t^-(A+1)".into());
    }
    if o.b_order < o.a_order {
        if o.beta > 0.0 {
            // density decays like exp(-c t^-(A-B))
            return Ok(1.0);
        }
        return fail("outward drift dominates, density not integrable".into());
    }
    let margin = 2.0 * o.beta / o.alpha - o.a_order as f64;
    if margin < MIN_INTEGRABILITY {
        return fail(format!("density ~ t^({:.6}) is not integrable", margin - 1.0));
    }
    Ok((2.0 / margin).max(1.0))
}

/// Normalised stationary density `f(z) = C / a(z) exp(int_c^z 2b/a)`.
#[derive(Clone, Debug)]
pub struct InvariantDensity {
    params: GeneralParams,
    log_norm: f64,
    left: HalfLine,
    right: HalfLine,
    feller_interior: bool,
}

impl InvariantDensity {
    pub fn params(&self) -> &GeneralParams {
        &self.params
    }

    /// The constant `C`.
    pub fn normalization(&self) -> f64 {
        (-self.log_norm).exp()
    }

    /// `false` when the parameters sit on (or outside) the boundary of the
    /// strict endpoint inequalities; the density is still valid but the
    /// parameters are not interior.
    pub fn feller_interior(&self) -> bool {
        self.feller_interior
    }

    fn locate(&self, z: f64) -> (&HalfLine, f64) {
        let iv = self.params.interval();
        if z <= iv.midpoint() {
            (&self.left, z - iv.lo())
        } else {
            (&self.right, iv.hi() - z)
        }
    }

    pub fn log_eval(&self, z: f64) -> Result<f64> {
        let iv = self.params.interval();
        if !iv.contains_open(z) {
            return Err(Error::OutOfDomain { z, lo: iv.lo(), hi: iv.hi() });
        }
        let (half, t) = self.locate(z);
        Ok(half.log_density(t)? - self.log_norm)
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        Ok(self.log_eval(z)?.exp())
    }

    /// `int_I h(z) f(z) dz` for a vector-valued `h`.
    pub fn integrate_vec<H>(&self, dim: usize, h: H) -> Result<Vec<f64>>
    where
        H: Fn(f64, &mut [f64]),
    {
        let l = self.left.integrate(dim, self.log_norm, &h)?;
        let r = self.right.integrate(dim, self.log_norm, &h)?;
        Ok(l.iter().zip(&r).map(|(a, b)| a + b).collect())
    }

    pub fn integrate<H>(&self, h: H) -> Result<f64>
    where
        H: Fn(f64) -> f64,
    {
        self.integrate_vec(1, |z, out| out[0] = h(z)).map(|v| v[0])
    }
}

pub fn invariant_density(g: &GeneralParams) -> Result<InvariantDensity> {
    let left = HalfLine::new(g, Side::Left)?;
    let right = HalfLine::new(g, Side::Right)?;
    let simple = classify_simple(g)?;
    let feller_interior = simple.left_value > 0.0 && simple.right_value < 0.0;
    let mut density = InvariantDensity {
        params: g.clone(),
        log_norm: 0.0,
        left,
        right,
        feller_interior,
    };
    let total = density.integrate(|_| 1.0)?;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Quadrature(format!("density normalisation failed: {total}")));
    }
    density.log_norm = total.ln();
    Ok(density)
}

/// `M_ij = int z^(i+j) f(z) dz`, checked positive definite.
pub fn moment_matrix(f: &InvariantDensity, n: usize) -> Result<DMatrix<f64>> {
    let dim = 2 * n + 1;
    let moments = f.integrate_vec(dim, |z, out| {
        let mut p = 1.0;
        for o in out.iter_mut() {
            *o = p;
            p *= z;
        }
    })?;
    let m = DMatrix::from_fn(n + 1, n + 1, |i, j| moments[i + j]);
    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::Quadrature("moment matrix is not positive definite".into()));
    }
    Ok(m)
}

/// Eigen-structure of `S` in the `M` inner product.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Eigenvalues, descending.
    pub lambdas: Vec<f64>,
    /// Right eigenvectors as columns, `u_i^T M u_i = 1`.
    pub u: DMatrix<f64>,
    /// Left eigenvectors as rows, `v_i = u_i^T M`.
    pub v: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// Weight polynomials; empty until [`weight_polynomials`] has run.
    pub q: Vec<Polynomial>,
    /// `||S^T M - M S||_F / (||S||_F ||M||_F)`.
    pub symmetry_defect: f64,
}

impl SpectralData {
    /// `u_i` as a polynomial.
    pub fn eigen_polynomial(&self, i: usize) -> Polynomial {
        Polynomial::new(self.u.column(i).iter().copied().collect())
    }

    /// `H(x, z) = sum_i Q_i(z) exp(lambda_i x)`.
    pub fn price(&self, x: f64, z: f64) -> f64 {
        self.q
            .iter()
            .zip(&self.lambdas)
            .map(|(q, l)| q.eval(z) * (l * x).exp())
            .sum()
    }

    /// `sum_i lambda_i u_i v_i`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let k = self.lambdas.len();
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.lambdas));
        debug_assert_eq!(lam.nrows(), k);
        &self.u * lam * &self.v
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric reduction `L^T S L^-T` with `M = L L^T`.
pub fn eigendecompose(s: &CompanionMatrix, m: &DMatrix<f64>) -> Result<SpectralData> {
    let dim = s.n() + 1;
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::InvalidInput(format!(
            "moment matrix is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    let cond = condition_number(m);
    if cond > MAX_MOMENT_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Quadrature("moment matrix is not positive definite".into()))?;
    let l = chol.l();
    let lt = l.transpose();
    // L^-T
    let lt_inv = lt
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned(f64::INFINITY))?;
    let sm = s.matrix();
    let b = &lt * sm * &lt_inv;
    let sym = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = DMatrix::zeros(dim, dim);
    for (col, &i) in order.iter().enumerate() {
        let mut ui = &lt_inv * eig.eigenvectors.column(i);
        let scale = ui.amax();
        if let Some(first) = ui.iter().find(|v| v.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                ui *= -1.0;
            }
        }
        u.set_column(col, &ui);
    }
    let v = u.transpose() * m;
    let defect = (sm.transpose() * m - m * sm).norm() / (sm.norm() * m.norm()).max(f64::MIN_POSITIVE);
    Ok(SpectralData {
        lambdas,
        u,
        v,
        m: m.clone(),
        q: Vec::new(),
        symmetry_defect: defect,
    })
}

/// `Q_i(z) = u_i(z) int u_i f`, with the integral by density quadrature.
pub fn weight_polynomials(sd: &SpectralData, f: &InvariantDensity) -> Result<Vec<Polynomial>> {
    let k = sd.lambdas.len();
    let polys: Vec<Polynomial> = (0..k).map(|i| sd.eigen_polynomial(i)).collect();
    let integrals = f.integrate_vec(k, |z, out| {
        for (o, p) in out.iter_mut().zip(&polys) {
            *o = p.eval(z);
        }
    })?;
    Ok(polys
        .iter()
        .zip(&integrals)
        .map(|(p, w)| p.scale(*w))
        .collect())
}

/// Asymptotic yield `-max_i lambda_i`.
pub fn long_rate(sd: &SpectralData) -> f64 {
    -sd.lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Full analysis of one parameter set.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub density: InvariantDensity,
    pub data: SpectralData,
}

impl Spectrum {
    pub fn long_rate(&self) -> f64 {
        long_rate(&self.data)
    }

    /// `true` when the weight of the top eigenvalue is numerically zero on
    /// the interior grid, in which case the long rate may be lower.
    pub fn top_weight_degenerate(&self) -> bool {
        let iv = self.density.params().interval();
        let q0 = &self.data.q[0];
        iv.interior_grid(101)
            .into_iter()
            .all(|z| q0.eval(z).abs() <= 1e-10)
    }
}

#[derive(Serialize)]
pub struct SpectrumReport {
    pub lambdas: Vec<f64>,
    pub long_rate: f64,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub feller_interior: bool,
    pub top_weight_degenerate: bool,
}

impl From<&Spectrum> for SpectrumReport {
    fn from(s: &Spectrum) -> Self {
        let k = s.data.lambdas.len();
        Self {
            lambdas: s.data.lambdas.clone(),
            long_rate: s.long_rate(),
            q: s.data.q.iter().map(|q| q.padded(k)).collect(),
            feller_interior: s.density.feller_interior(),
            top_weight_degenerate: s.top_weight_degenerate(),
        }
    }
}

pub fn spectrum(g: &GeneralParams) -> Result<Spectrum> {
    let s = build_s(g)?;
    let density = invariant_density(g)?;
    let m = moment_matrix(&density, g.n())?;
    let mut data = eigendecompose(&s, &m)?;
    data.q = weight_polynomials(&data, &density)?;
    Ok(Spectrum { density, data })
}
