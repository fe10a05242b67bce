//! Acceptance gate. Runs every criterion at its pinned tolerance and prints
//! one line per criterion; exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use polyterm::calib::{calibrate, model_yields, ExampleModelParams, YieldDataset, FRED_COLUMNS};
use polyterm::feller::{classify_orders, classify_simple, feller_report, Verdict};
use polyterm::model::{in_pn, to_general, CanonicalParams};
use polyterm::poly::Interval;
use polyterm::pricing::{build_s, pde_residual, pde_residual_of, Pricer};
use polyterm::sim::{mc_prices, unbounded_example_coefficients, unbounded_example_g, unbounded_example_h, unbounded_example_mc, SimConfig};
use polyterm::spectral::{invariant_density, spectrum};
use polyterm::GeneralParams;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Random member of the feasible canonical set with rates kept positive on
/// `[-1, 1]`.
fn random_feasible(rng: &mut ChaCha8Rng, n: usize) -> CanonicalParams {
    let nf = n as f64;
    let c0 = rng.gen_range(0.05..0.5);
    let c2 = rng.gen_range(-0.9..0.9) * c0;
    let c1 = rng.gen_range(-0.9..0.9) * (c0 + c2);
    let b3 = (nf - 1.0) * c2;
    let b0 = rng.gen_range(-0.2..0.2);
    let b2 = rng.gen_range(-0.2..0.2);
    let b1 = -(b3 + c0 + c2) - (b0 + b2 + c1).abs() - rng.gen_range(0.0..0.5);
    let r2 = nf * (nf - 1.0) / 2.0 * c2;
    let r1 = nf * b2 - nf * (nf - 1.0) / 2.0 * c1;
    let r0 = r1.abs() + r2.abs() + rng.gen_range(0.0..0.1);
    CanonicalParams {
        n,
        r: [r0, r1, r2],
        b: [b0, b1, b2, b3],
        c: [c0, c1, c2],
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    for k in 0..100 {
        let n = 1 + k % 6;
        let p = random_feasible(&mut rng, n);
        if !in_pn(&p).unwrap() {
            infeasible += 1;
        }
        let g = to_general(&p, Interval::canonical()).unwrap();
        let mut grid = Vec::with_capacity(400);
        for i in 1..=20 {
            for z in g.interval().interior_grid(20) {
                grid.push((10.0 * i as f64 / 20.0, z));
            }
        }
        worst = worst.max(pde_residual(&g, &grid).unwrap());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && infeasible == 0 && elapsed < Duration::from_secs(10),
        format!("max residual {worst:.2e} (tol 1e-9), {infeasible} generator misses, {elapsed:.2?} (limit 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (a, b, g) = (rng.gen_range(0.05..1.0), rng.gen_range(0.005..0.1), rng.gen_range(0.02..0.2));
        let s = build_s(&example(a, b, g, 2)).unwrap();
        let expected = [
            [0.0, a * b, 0.0],
            [-1.0, -a, 2.0 * a * b + g * g],
            [0.0, -1.0, -2.0 * (a + g)],
        ];
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((s.matrix()[(i, j)] - expected[i][j]).abs());
            }
        }
    }
    outcome(worst <= 1e-14, format!("max entry error {worst:.2e} over 20 draws (tol 1e-14)"))
}

fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
}

fn criterion_3() -> Outcome {
    // Grid points where a condition holds with equality in exact arithmetic
    // land a few ulps either side after rounding.
    let holds = |lhs: f64, rhs: f64, scale: f64| lhs - rhs >= -1e-12 * scale;
    let mut cases = 0;
    let mut formula_miss = 0;
    let mut corrected_miss = 0;
    let mut orders_miss = 0;
    let mut first_miss = None;
    for n in [2usize, 3, 4] {
        let nf = n as f64;
        for &alpha in &linspace(0.05, 1.0, 10) {
            for &beta in &linspace(0.005, 0.1, 10) {
                for &gamma in &linspace(0.02, 0.2, 10) {
                    cases += 1;
                    let g = example(alpha, beta, gamma, n);
                    let simple = classify_simple(&g).unwrap().verdict;
                    let report = feller_report(&g).unwrap();
                    let scale = gamma * gamma;
                    let left = holds(2.0 * alpha * beta, gamma * gamma, scale);
                    let lhs = alpha * (gamma * nf - 2.0 * beta);
                    let printed = left && holds(lhs, gamma * gamma * (nf - 2.0) / (nf - 1.0), scale);
                    let corrected = left && holds(lhs, gamma * gamma * (nf - 2.0) / (2.0 * (nf - 1.0)), scale);
                    let ours = simple == Verdict::NonExplosive;
                    if ours != printed {
                        formula_miss += 1;
                        first_miss.get_or_insert((alpha, beta, gamma, n));
                    }
                    if ours != corrected {
                        corrected_miss += 1;
                    }
                    if classify_orders(&report.left, &report.right) != simple {
                        orders_miss += 1;
                    }
                }
            }
        }
    }
    outcome(
        formula_miss == 0 && orders_miss == 0,
        format!(
            "{cases} cases: {formula_miss} disagree with gamma^2 (n-2)/(n-1){}, {corrected_miss} with gamma^2 (n-2)/(2(n-1)), \
             {orders_miss} order/simple disagreements",
            first_miss.map_or(String::new(), |m| format!(" (first at {m:?})"))
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for &(alpha, beta, gamma) in &STRICT_EXAMPLES {
        let g = example(alpha, beta, gamma, 2);
        let f = invariant_density(&g).unwrap();
        let zeta = 2.0 * alpha * beta / (gamma * gamma);
        let theta = 2.0 * alpha * (1.0 - beta / gamma);
        let shape = |r: f64| {
            ((zeta - 1.0) * r.ln() - (zeta + 2.0) * (gamma - r).ln() - theta / (gamma - r)).exp()
        };
        let total = tanh_sinh(shape, 0.0, gamma, 1e-14);
        for r in g.interval().interior_grid(50) {
            let exact = shape(r) / total;
            let rel = (f.eval(r).unwrap() - exact).abs() / exact;
            worst = worst.max(rel);
        }
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e} at 50 points x 5 sets (tol 1e-6)"))
}

fn spectral_sets() -> Vec<(&'static str, GeneralParams)> {
    let (a, b, g) = REPORTED_FIT;
    vec![
        ("fitted n=2", example(a, b, g, 2)),
        ("(0.3,0.02,0.1) n=2", example(0.3, 0.02, 0.1, 2)),
        ("(0.5,0.03,0.15) n=3", example(0.5, 0.03, 0.15, 3)),
        ("(1,0.05,0.2) n=4", example(1.0, 0.05, 0.2, 4)),
        ("canonical n=3", canonical_n3()),
    ]
}

fn canonical_n3() -> GeneralParams {
    let c = [0.3f64, 0.05, 0.1];
    let b3 = 2.0 * c[2];
    let (b0, b2) = (0.01f64, 0.02f64);
    let b1 = -(b3 + c[0] + c[2]) - (b0 + b2 + c[1]).abs() - 0.2;
    let r = [0.5, 3.0 * b2 - 3.0 * c[1], 3.0 * c[2]];
    let p = CanonicalParams {
        n: 3,
        r,
        b: [b0, b1, b2, b3],
        c,
    };
    assert!(in_pn(&p).unwrap());
    to_general(&p, Interval::canonical()).unwrap()
}

/// `inf R` over the closed interval for `deg R <= 2`.
fn inf_rate(g: &GeneralParams) -> f64 {
    let iv = g.interval();
    let r = g.r();
    let mut m = r.eval(iv.lo()).min(r.eval(iv.hi()));
    if r.coeff(2) != 0.0 {
        let v = -r.coeff(1) / (2.0 * r.coeff(2));
        if iv.contains_closed(v) {
            m = m.min(r.eval(v));
        }
    }
    m
}

fn criterion_5() -> Outcome {
    let mut sym = 0.0f64;
    let mut bound = f64::NEG_INFINITY;
    let mut sum_q = 0.0f64;
    let mut pricing = 0.0f64;
    let mut q1_min = f64::NAN;
    for (name, g) in spectral_sets() {
        let sp = spectrum(&g).unwrap();
        sym = sym.max(sp.data.symmetry_defect);
        bound = bound.max(sp.data.lambdas[0] + inf_rate(&g));
        let iv = g.interval();
        for z in iv.interior_grid(101) {
            let s: f64 = sp.data.q.iter().map(|q| q.eval(z)).sum();
            sum_q = sum_q.max((s - 1.0).abs());
        }
        let pricer = Pricer::new(&g).unwrap();
        for x in 0..=30 {
            let x = x as f64;
            for z in iv.interior_grid(21) {
                let d = (sp.data.price(x, z) - pricer.price(x, z).unwrap()).abs();
                pricing = pricing.max(d);
            }
        }
        if name.starts_with("fitted") {
            q1_min = iv
                .interior_grid(1001)
                .into_iter()
                .map(|z| sp.data.q[1].eval(z))
                .fold(f64::INFINITY, f64::min);
        }
    }
    outcome(
        sym <= 1e-8 && bound <= 1e-8 && sum_q <= 1e-8 && pricing <= 1e-7 && q1_min < 0.0,
        format!(
            "symmetry {sym:.1e} (1e-8), max lambda + inf R {bound:.2e} (<= 1e-8), |sum Q - 1| {sum_q:.1e} (1e-8), \
             spectral vs expm {pricing:.1e} (1e-7), fitted min Q1 {q1_min:.4} (< 0)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (a, b, g) = REPORTED_FIT;
    let sets = [
        (example(a, b, g, 2), 0.02),
        (example(0.3, 0.02, 0.1, 2), 0.03),
        (example(0.5, 0.03, 0.15, 3), 0.04),
        (example(1.0, 0.05, 0.2, 4), 0.05),
        (canonical_n3(), 0.2),
    ];
    let xs = [1.0, 5.0, 10.0];
    let mut worst = 0.0f64;
    let mut projected = 0.0f64;
    for (i, (g, z0)) in sets.iter().enumerate() {
        let cfg = SimConfig::new(1e-3, 10.0, 100_000, 100 + i as u64).unwrap();
        let est = mc_prices(g, &xs, *z0, &cfg).unwrap();
        let pricer = Pricer::new(g).unwrap();
        for (x, e) in xs.iter().zip(&est) {
            worst = worst.max(e.z_score(pricer.price(*x, *z0).unwrap()));
        }
        projected = projected.max(est[0].projected_steps as f64 / est[0].total_steps as f64);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 3.0 && elapsed < Duration::from_secs(120),
        format!(
            "max |MC - H| / stderr {worst:.2} (<= 3) over 5 sets x 3 maturities, projected steps {:.3}%, {elapsed:.1?} (limit 2 min)",
            100.0 * projected
        ),
    )
}

fn criterion_7() -> Outcome {
    let (r, b, a) = unbounded_example_coefficients();
    let mut grid = Vec::new();
    for i in 0..=20 {
        for j in 1..=20 {
            grid.push((0.1 * i as f64, 0.1 * j as f64));
        }
    }
    let residual = pde_residual_of(&r, &b, &a, &grid, |x| Ok(unbounded_example_g(x))).unwrap();
    let mut worst = 0.0f64;
    for (k, (x, z)) in [(1.0, 1.0), (2.0, 0.5)].into_iter().enumerate() {
        let cfg = SimConfig::new(1e-3, x, 100_000, 200 + k as u64).unwrap();
        let e = unbounded_example_mc(x, z, &cfg).unwrap();
        worst = worst.max(e.z_score(unbounded_example_h(x, z).unwrap()));
    }
    outcome(
        residual <= 1e-10 && worst <= 3.0,
        format!("PDE residual {residual:.1e} (1e-10), max |MC - H| / stderr {worst:.2} (<= 3)"),
    )
}

fn criterion_8() -> Outcome {
    let (a, b, g) = REPORTED_FIT;
    let params = example(a, b, g, 2);
    let sp = spectrum(&params).unwrap();
    let long = sp.long_rate();
    let pricer = Pricer::new(&params).unwrap();
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for z in params.interval().interior_grid(5) {
        let d = (pricer.yield_at(60.0, z).unwrap() - long).abs();
        if d > 1e-3 {
            misses.push(format!("{z:.4}"));
        }
        worst = worst.max(d);
    }
    outcome(
        worst <= 1e-3,
        format!(
            "long rate {long:.6}, max |Y(60, z) - long rate| {worst:.2e} (tol 1e-3) at 5 evenly spaced states; misses at z = [{}]",
            misses.join(", ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let truth = ExampleModelParams::new(0.3, 0.02, 0.10, 2);
    let maturities: Vec<f64> = FRED_COLUMNS.iter().map(|c| c.1).collect();
    let spots: Vec<f64> = linspace(0.005, 0.08, 30);
    let clean = model_yields(&truth, &maturities, &spots).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 1e-4).unwrap();
    let noisy: Vec<Vec<f64>> = clean
        .iter()
        .map(|row| row.iter().map(|y| y + noise.sample(&mut rng)).collect())
        .collect();
    let dates = (0..30).map(|i| format!("d{i:02}")).collect();
    let data = YieldDataset::new(dates, maturities, noisy).unwrap();
    let init = ExampleModelParams::new(0.2, 0.03, 0.12, 2);
    let fit = match calibrate(&data, &init) {
        Ok(fit) => fit,
        Err(e) => return outcome(false, format!("calibration failed: {e}")),
    };
    let p = fit.params;
    let rel = [
        (p.alpha - truth.alpha).abs() / truth.alpha,
        (p.beta - truth.beta).abs() / truth.beta,
        (p.gamma - truth.gamma).abs() / truth.gamma,
    ];
    let worst = rel.iter().copied().fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        worst <= 0.05 && p.is_feasible() && elapsed < Duration::from_secs(60),
        format!(
            "fitted ({:.4}, {:.5}, {:.4}), max relative error {:.2}% (5%), feasible {}, {} evaluations, {elapsed:.1?} (limit 1 min)",
            p.alpha,
            p.beta,
            p.gamma,
            100.0 * worst,
            p.is_feasible(),
            fit.evaluations
        ),
    )
}

fn criterion_10() -> String {
    let (a, b, g) = REPORTED_FIT;
    let p = ExampleModelParams::new(a, b, g, 2);
    format!(
        "historical treasury fit needs a data snapshot that is not bundled; reported fit has sqrt(2 alpha beta) = {:.5} vs gamma = {g}, feasible {}",
        (2.0 * a * b).sqrt(),
        p.is_feasible()
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("algebraic converse", criterion_1),
        ("companion matrix reproduction", criterion_2),
        ("closed-form endpoint conditions", criterion_3),
        ("invariant density closed form", criterion_4),
        ("spectral identities", criterion_5),
        ("Monte Carlo oracle", criterion_6),
        ("unbounded example", criterion_7),
        ("long rate", criterion_8),
        ("calibration round trip", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<32} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("criterion 10 {:<32} N/A   {}", "historical fit", criterion_10());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
