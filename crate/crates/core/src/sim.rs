//! Euler paths of `dZ = b(Z) dt + sqrt(a(Z)) dW` on the bounded interval and
//! Monte Carlo bond prices `E[exp(-int_0^x R(Z_s) ds)]`.
//!
//! Every path draws from its own ChaCha8 stream `(seed, path index)`, so
//! results do not depend on how the paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feller::{feller_report, Verdict};
use crate::model::GeneralParams;
use crate::poly::Polynomial;

/// Relative width of the projection guard at each endpoint.
pub const PROJECTION_EPS: f64 = 1e-12;

/// Grid points closer than this (relative to `dt`) are merged.
const GRID_MERGE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Scheme {
    #[default]
    EulerFullTruncation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            dt,
            horizon,
            n_paths,
            seed,
            scheme: Scheme::EulerFullTruncation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be finite and >= 0, got {}",
                self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

/// Monte Carlo mean with its standard error `sd / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// steps where the state had to be projected back inside the interval
    pub projected_steps: u64,
    pub total_steps: u64,
}

impl MCEstimate {
    /// Standard error is 0 for a single sample.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let stderr = if n > 1 {
            let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            stderr,
            n_paths: n,
            projected_steps: 0,
            total_steps: 0,
        }
    }

    /// `|mean - reference| / stderr`; infinite when `stderr == 0` and the
    /// values differ.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.mean - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub projections: u64,
}

/// Uniform grid `k dt` up to `horizon` with every mark inserted as a node.
/// Returns the nodes and, for each mark, its node index.
fn time_grid(dt: f64, horizon: f64, marks: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let merge = GRID_MERGE * dt;
    let mut nodes: Vec<f64> = Vec::new();
    let steps = (horizon / dt - GRID_MERGE).ceil().max(0.0) as usize;
    for k in 0..=steps {
        nodes.push((k as f64 * dt).min(horizon));
    }
    if (nodes[nodes.len() - 1] - horizon).abs() > merge {
        nodes.push(horizon);
    }
    for &m in marks {
        nodes.push(m);
    }
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() <= merge);
    let idx = marks
        .iter()
        .map(|&m| {
            nodes
                .iter()
                .position(|t| (t - m).abs() <= merge)
                .expect("mark inserted into grid")
        })
        .collect();
    (nodes, idx)
}

/// One Euler full-truncation step with projection onto the guarded interval.
struct Stepper {
    b: [f64; 4],
    a: [f64; 5],
    r: [f64; 3],
    lo: f64,
    hi: f64,
}

#[inline]
fn horner<const N: usize>(c: &[f64; N], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * z + v)
}

fn fixed<const N: usize>(p: &Polynomial) -> [f64; N] {
    std::array::from_fn(|k| p.coeff(k))
}

impl Stepper {
    fn new(g: &GeneralParams) -> Self {
        let iv = g.interval();
        let eps = PROJECTION_EPS * iv.width();
        Self {
            b: fixed(g.b()),
            a: fixed(g.a()),
            r: fixed(g.r()),
            lo: iv.lo() + eps,
            hi: iv.hi() - eps,
        }
    }

    #[inline]
    fn raw_step(&self, z: f64, h: f64, dw: f64) -> f64 {
        z + horner(&self.b, z) * h + horner(&self.a, z).max(0.0).sqrt() * dw
    }

    #[inline]
    fn step(&self, z: f64, h: f64, dw: f64) -> (f64, bool) {
        let next = self.raw_step(z, h, dw);
        if next < self.lo {
            (self.lo, true)
        } else if next > self.hi {
            (self.hi, true)
        } else {
            (next, false)
        }
    }

    #[inline]
    fn rate(&self, z: f64) -> f64 {
        horner(&self.r, z)
    }
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_start(g: &GeneralParams, z0: f64) -> Result<()> {
    let iv = g.interval();
    if !iv.contains_open(z0) {
        return Err(Error::OutOfDomain {
            z: z0,
            lo: iv.lo(),
            hi: iv.hi(),
        });
    }
    Ok(())
}

/// `true` when the model is classified explosive; simulation still runs.
pub fn explosive_warning(g: &GeneralParams) -> bool {
    matches!(feller_report(g).map(|r| r.verdict), Ok(Verdict::Explosive))
}

fn run_path(stepper: &Stepper, z0: f64, nodes: &[f64], rng: &mut ChaCha8Rng) -> Path {
    let mut states = Vec::with_capacity(nodes.len());
    let mut z = z0;
    let mut projections = 0;
    states.push(z);
    for w in nodes.windows(2) {
        let h = w[1] - w[0];
        let xi: f64 = StandardNormal.sample(rng);
        let (next, projected) = stepper.step(z, h, h.sqrt() * xi);
        projections += projected as u64;
        z = next;
        states.push(z);
    }
    Path {
        times: nodes.to_vec(),
        states,
        projections,
    }
}

/// Path with index `index` of the `(seed, index)` family.
pub fn simulate_path_indexed(g: &GeneralParams, z0: f64, cfg: &SimConfig, index: usize) -> Result<Path> {
    cfg.validate()?;
    check_start(g, z0)?;
    let (nodes, _) = time_grid(cfg.dt, cfg.horizon, &[]);
    Ok(run_path(&Stepper::new(g), z0, &nodes, &mut path_rng(cfg.seed, index)))
}

pub fn simulate_path(g: &GeneralParams, z0: f64, cfg: &SimConfig) -> Result<Path> {
    simulate_path_indexed(g, z0, cfg, 0)
}

/// All `cfg.n_paths` paths, in index order.
pub fn simulate_paths(g: &GeneralParams, z0: f64, cfg: &SimConfig) -> Result<Vec<Path>> {
    cfg.validate()?;
    check_start(g, z0)?;
    let (nodes, _) = time_grid(cfg.dt, cfg.horizon, &[]);
    let stepper = Stepper::new(g);
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|i| run_path(&stepper, z0, &nodes, &mut path_rng(cfg.seed, i)))
        .collect())
}

/// Monte Carlo prices at several maturities from one set of paths.
pub fn mc_prices(g: &GeneralParams, xs: &[f64], z0: f64, cfg: &SimConfig) -> Result<Vec<MCEstimate>> {
    cfg.validate()?;
    check_start(g, z0)?;
    for &x in xs {
        if !(x >= 0.0 && x <= cfg.horizon * (1.0 + GRID_MERGE)) {
            return Err(Error::InvalidInput(format!(
                "maturity {x} outside [0, horizon = {}]",
                cfg.horizon
            )));
        }
    }
    let x_max = xs.iter().copied().fold(0.0, f64::max);
    let (nodes, marks) = time_grid(cfg.dt, x_max, xs);
    let steps: Vec<(f64, f64)> = nodes
        .windows(2)
        .map(|w| {
            let h = w[1] - w[0];
            (h, h.sqrt())
        })
        .collect();
    let mut records = vec![Vec::new(); nodes.len()];
    for (j, &m) in marks.iter().enumerate() {
        records[m].push(j);
    }
    let stepper = Stepper::new(g);
    let blocks: Vec<(Vec<f64>, u64)> = (0..cfg.n_paths.div_ceil(LANES))
        .into_par_iter()
        .map(|blk| {
            let first = blk * LANES;
            let count = LANES.min(cfg.n_paths - first);
            discount_block(&stepper, z0, &steps, &records, cfg.seed, first, count, xs.len())
        })
        .collect();
    let projected_steps: u64 = blocks.iter().map(|(_, p)| p).sum();
    let total_steps = steps.len() as u64 * cfg.n_paths as u64;
    let mut estimates = Vec::with_capacity(xs.len());
    let mut column = Vec::with_capacity(cfg.n_paths);
    for j in 0..xs.len() {
        column.clear();
        for (values, _) in &blocks {
            column.extend(values.chunks(xs.len()).map(|v| v[j]));
        }
        let mut est = MCEstimate::from_samples(&column);
        est.projected_steps = projected_steps;
        est.total_steps = total_steps;
        estimates.push(est);
    }
    Ok(estimates)
}

/// Paths advanced in lockstep per block.
const LANES: usize = 8;

/// Discount factors `exp(-int R)` for paths `first..first + count`, laid
/// out path-major, plus the number of projected steps.
#[allow(clippy::too_many_arguments)]
fn discount_block(
    stepper: &Stepper,
    z0: f64,
    steps: &[(f64, f64)],
    records: &[Vec<usize>],
    seed: u64,
    first: usize,
    count: usize,
    nx: usize,
) -> (Vec<f64>, u64) {
    let mut rngs: Vec<ChaCha8Rng> = (first..first + count).map(|i| path_rng(seed, i)).collect();
    let mut out = vec![0.0; count * nx];
    let mut z = [z0; LANES];
    let mut rate = [stepper.rate(z0); LANES];
    let mut integral = [0.0f64; LANES];
    let mut projections = 0u64;
    let record = |k: usize, integral: &[f64; LANES], out: &mut Vec<f64>| {
        for &j in &records[k] {
            for l in 0..count {
                out[l * nx + j] = (-integral[l]).exp();
            }
        }
    };
    record(0, &integral, &mut out);
    for (k, &(h, sqrt_h)) in steps.iter().enumerate() {
        let mut xi = [0.0f64; LANES];
        for (x, rng) in xi.iter_mut().zip(rngs.iter_mut()) {
            *x = StandardNormal.sample(rng);
        }
        let mut hits = [0u64; LANES];
        for l in 0..LANES {
            let raw = stepper.raw_step(z[l], h, sqrt_h * xi[l]);
            let next = raw.clamp(stepper.lo, stepper.hi);
            hits[l] = (raw != next) as u64;
            z[l] = next;
            let r_next = stepper.rate(next);
            integral[l] += 0.5 * h * (rate[l] + r_next);
            rate[l] = r_next;
        }
        projections += hits[..count].iter().sum::<u64>();
        if !records[k + 1].is_empty() {
            record(k + 1, &integral, &mut out);
        }
    }
    (out, projections)
}

pub fn mc_price(g: &GeneralParams, x: f64, z0: f64, cfg: &SimConfig) -> Result<MCEstimate> {
    Ok(mc_prices(g, &[x], z0, cfg)?[0])
}

// Unbounded example on (0, inf): a = z^2, b = -z^2/2, R = -z, for which
// Z_t = z Y_t / (1 + z/2 int_0^t Y_s ds) with Y_t = exp(W_t - t/2).

fn check_positive_state(z: f64) -> Result<()> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::OutOfDomain {
            z,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(())
}

/// Coefficients `(R, b, a)` of the unbounded example.
pub fn unbounded_example_coefficients() -> (Polynomial, Polynomial, Polynomial) {
    (
        Polynomial::new(vec![0.0, -1.0]),
        Polynomial::new(vec![0.0, 0.0, -0.5]),
        Polynomial::new(vec![0.0, 0.0, 1.0]),
    )
}

/// `(g(x), g'(x))` with `H = g_0 + g_1 z + g_2 z^2`.
pub fn unbounded_example_g(x: f64) -> (Vec<f64>, Vec<f64>) {
    let ex = x.exp();
    (
        vec![1.0, x, 0.5 * (ex - x - 1.0)],
        vec![0.0, 1.0, 0.5 * (ex - 1.0)],
    )
}

/// `H(x, z) = 1 + x z + (e^x - x - 1) z^2 / 2`.
pub fn unbounded_example_h(x: f64, z: f64) -> Result<f64> {
    check_positive_state(z)?;
    if !(x >= 0.0) {
        return Err(Error::InvalidInput(format!("maturity must be >= 0, got {x}")));
    }
    Ok(1.0 + x * z + 0.5 * (x.exp_m1() - x) * z * z)
}

/// Walks a Brownian path on the grid, calling `visit(t, Y_t, int_0^t Y)`.
fn brownian_functional<F: FnMut(f64, f64, f64)>(nodes: &[f64], rng: &mut ChaCha8Rng, mut visit: F) {
    let mut w = 0.0;
    let mut y = 1.0;
    let mut integral = 0.0;
    visit(nodes[0], y, integral);
    for win in nodes.windows(2) {
        let h = win[1] - win[0];
        let xi: f64 = StandardNormal.sample(rng);
        w += h.sqrt() * xi;
        let y_next = (w - 0.5 * win[1]).exp();
        integral += 0.5 * h * (y + y_next);
        y = y_next;
        visit(win[1], y, integral);
    }
}

/// Path of the unbounded example from the explicit solution.
pub fn unbounded_example_path(z0: f64, cfg: &SimConfig) -> Result<Path> {
    cfg.validate()?;
    check_positive_state(z0)?;
    let (nodes, _) = time_grid(cfg.dt, cfg.horizon, &[]);
    let mut states = Vec::with_capacity(nodes.len());
    brownian_functional(&nodes, &mut path_rng(cfg.seed, 0), |_, y, i| {
        states.push(z0 * y / (1.0 + 0.5 * z0 * i));
    });
    Ok(Path {
        times: nodes,
        states,
        projections: 0,
    })
}

/// Monte Carlo of `E[exp(int_0^x Z_s ds)] = E[(1 + z/2 int_0^x Y_s ds)^2]`.
pub fn unbounded_example_mc(x: f64, z0: f64, cfg: &SimConfig) -> Result<MCEstimate> {
    cfg.validate()?;
    check_positive_state(z0)?;
    if !(x >= 0.0 && x <= cfg.horizon * (1.0 + GRID_MERGE)) {
        return Err(Error::InvalidInput(format!(
            "maturity {x} outside [0, horizon = {}]",
            cfg.horizon
        )));
    }
    let (nodes, _) = time_grid(cfg.dt, x, &[]);
    let samples: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut last = 0.0;
            brownian_functional(&nodes, &mut path_rng(cfg.seed, i), |_, _, int| last = int);
            let f = 1.0 + 0.5 * z0 * last;
            f * f
        })
        .collect();
    let mut est = MCEstimate::from_samples(&samples);
    est.total_steps = (nodes.len() as u64 - 1) * cfg.n_paths as u64;
    Ok(est)
}
