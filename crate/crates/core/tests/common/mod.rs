#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use polyterm::poly::Interval;
use polyterm::{ExampleModelParams, GeneralParams, Polynomial};

/// Tanh-sinh quadrature on a finite interval, halving the step until two
/// successive levels agree to `rel`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64) -> f64 {
    let half = 0.5 * (b - a);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let eval = |t: f64| {
        let u = pi2 * t.sinh();
        let w = pi2 * t.cosh() / u.cosh().powi(2);
        // distance to the nearer endpoint without cancellation
        let d = half * (-u.abs()).exp() / u.cosh();
        if w == 0.0 || d == 0.0 {
            return 0.0;
        }
        let x = if u > 0.0 { b - d } else { a + d };
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let tmax = 6.5;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= tmax {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut prev = sum * h * half;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= tmax {
            sum += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        let est = sum * h * half;
        if (est - prev).abs() <= rel * est.abs() {
            return est;
        }
        prev = est;
    }
    prev
}

/// Classical RK4 for `G' = S G`, `G(0) = e_0`.
pub fn rk4_g(s: &DMatrix<f64>, x: f64, dt: f64) -> Vec<f64> {
    let dim = s.nrows();
    let mut g = DVector::zeros(dim);
    g[0] = 1.0;
    let steps = (x / dt).round().max(1.0) as usize;
    let h = x / steps as f64;
    for _ in 0..steps {
        let k1 = s * &g;
        let k2 = s * (&g + &k1 * (0.5 * h));
        let k3 = s * (&g + &k2 * (0.5 * h));
        let k4 = s * (&g + &k3 * h);
        g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    g.iter().copied().collect()
}

/// Companion matrix entries computed directly from the generator: column
/// `j` holds the coefficients of `L z^j = b j z^(j-1) + a/2 j(j-1) z^(j-2) - R z^j`.
pub fn generator_columns(n: usize, r: &Polynomial, b: &Polynomial, a: &Polynomial) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n + 1, n + 1);
    for j in 0..=n {
        let mut col = vec![0.0; n + 5];
        for (k, c) in r.coeffs().iter().enumerate() {
            col[j + k] -= c;
        }
        if j >= 1 {
            for (k, c) in b.coeffs().iter().enumerate() {
                col[j - 1 + k] += j as f64 * c;
            }
        }
        if j >= 2 {
            for (k, c) in a.coeffs().iter().enumerate() {
                col[j - 2 + k] += 0.5 * (j * (j - 1)) as f64 * c;
            }
        }
        for i in 0..=n {
            s[(i, j)] = col[i];
        }
    }
    s
}

pub fn poly(c: &[f64]) -> Polynomial {
    Polynomial::new(c.to_vec())
}

pub fn example(alpha: f64, beta: f64, gamma: f64, n: usize) -> GeneralParams {
    ExampleModelParams::new(alpha, beta, gamma, n).to_general().unwrap()
}

/// Canonical `(-1, 1)` model from `(R, b, c)`.
pub fn canonical(n: usize, r: &[f64], b: &[f64], c: &[f64]) -> GeneralParams {
    let cp = poly(c);
    let a = &poly(&[1.0, 0.0, -1.0]) * &cp;
    GeneralParams::new(n, Interval::canonical(), poly(r), poly(b), a).unwrap()
}

/// Strictly feasible sets of the one-factor example, `2 alpha beta > gamma^2`
/// and `beta < gamma`.
pub const STRICT_EXAMPLES: [(f64, f64, f64); 5] = [
    (0.3, 0.02, 0.1),
    (0.5, 0.03, 0.15),
    (1.0, 0.05, 0.2),
    (0.25, 0.04, 0.12),
    (0.8, 0.01, 0.1),
];

/// Treasury fit reported for the n = 2 example, 2015 to 2016 data.
pub const REPORTED_FIT: (f64, f64, f64) = (0.248, 0.031, 0.129);
