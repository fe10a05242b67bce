//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector-valued
//! integrands on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-13,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    priority: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn gk15<F>(f: &F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(c, buf);
    for d in 0..dim {
        kron[d] = WGK[7] * buf[d];
        gauss[d] = WG[3] * buf[d];
    }
    for i in 0..7 {
        let dx = h * XGK[i];
        for x in [c - dx, c + dx] {
            f(x, buf);
            for d in 0..dim {
                kron[d] += WGK[i] * buf[d];
                if i % 2 == 1 {
                    gauss[d] += WG[i / 2] * buf[d];
                }
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|k| k * h).collect();
    let error = kron
        .iter()
        .zip(&gauss)
        .map(|(k, g)| ((k - g) * h).abs())
        .collect();
    (value, error)
}

/// Integrates a vector-valued `f` over `[a, b]`; `f(x, out)` fills `out`.
///
/// Subdivision continues until every component meets
/// `err_d <= max(abs, rel * |I_d|)`.
pub fn integrate_vec<F>(f: F, a: f64, b: f64, dim: usize, tol: Tolerance) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite limits [{a}, {b}]")));
    }
    if a == b {
        return Ok(vec![0.0; dim]);
    }
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let (value, error) = gk15(&f, a, b, dim, &mut buf);
    let mut total = value.clone();
    let mut total_err = error.clone();
    heap.push(Segment {
        a,
        b,
        value,
        error,
        priority: f64::INFINITY,
    });
    let mut count = 1;
    loop {
        if total.iter().chain(&total_err).any(|v| !v.is_finite()) {
            return Err(Error::Quadrature("integrand produced non-finite values".into()));
        }
        let target: Vec<f64> = total.iter().map(|v| tol.abs.max(tol.rel * v.abs())).collect();
        let converged = total_err.iter().zip(&target).all(|(e, t)| e <= t);
        if converged && count > 1 {
            return Ok(total);
        }
        if count >= tol.max_intervals {
            let worst = total_err
                .iter()
                .zip(&target)
                .map(|(e, t)| e / t)
                .fold(0.0, f64::max);
            if converged {
                return Ok(total);
            }
            return Err(Error::Quadrature(format!(
                "no convergence after {count} subintervals (error/target = {worst:.3e})"
            )));
        }
        let seg = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (seg.a + seg.b);
        if !(seg.a < mid && mid < seg.b) {
            return Err(Error::Quadrature(format!("interval [{}, {}] cannot be split", seg.a, seg.b)));
        }
        for d in 0..dim {
            total[d] -= seg.value[d];
            total_err[d] -= seg.error[d];
        }
        for (lo, hi) in [(seg.a, mid), (mid, seg.b)] {
            let (value, error) = gk15(&f, lo, hi, dim, &mut buf);
            for d in 0..dim {
                total[d] += value[d];
                total_err[d] += error[d];
            }
            let priority = error
                .iter()
                .zip(&target)
                .map(|(e, t)| e / t)
                .fold(0.0, f64::max);
            heap.push(Segment {
                a: lo,
                b: hi,
                value,
                error,
                priority,
            });
        }
        count += 1;
        // running error sums drift; recompute from the segments occasionally
        if count % 64 == 0 {
            total_err = vec![0.0; dim];
            total = vec![0.0; dim];
            for s in heap.iter() {
                for d in 0..dim {
                    total[d] += s.value[d];
                    total_err[d] += s.error[d];
                }
            }
        }
    }
}

pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, tol).map(|v| v[0])
}
