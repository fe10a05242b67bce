//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3, 5, 7, 9 or 13, selected from the 1-norm
//! (Higham, "The scaling and squaring method for the matrix exponential
//! revisited", 2005).

use nalgebra::DMatrix;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub(crate) fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(U, V)` for the low-degree approximants, built from even powers.
fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::<f64>::identity(dim, dim);
    let mut u = DMatrix::<f64>::zeros(dim, dim);
    let mut v = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..b.len() / 2 {
        v += &power * b[2 * k];
        u += &power * b[2 * k + 1];
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade_13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE_13;
    let dim = a.nrows();
    let id = DMatrix::<f64>::identity(dim, dim);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let p = &v + &u;
    let q = &v - &u;
    // Q is well conditioned for norms within the theta bounds
    q.lu().solve(&p).expect("Pade denominator is singular")
}

/// `exp(a)` for a square matrix with finite entries.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "matrix exponential of a non-square matrix");
    let dim = a.nrows();
    if dim == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = norm1(a);
    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let (u, v) = pade_low(a, b);
            return solve_pade(u, v);
        }
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);
    let (u, v) = pade_13(&scaled);
    let mut e = solve_pade(u, v);
    for _ in 0..s {
        e = &e * &e;
    }
    e
}
