//! The one-factor example model
//!
//! ```text
//! dr = alpha (beta - r) dt + sqrt(r (gamma - 2r/n)(gamma - r/(n-1))) dW,   r in (0, gamma n / 2)
//! ```
//!
//! with `R(r) = r`, treasury yield ingestion and least-squares calibration.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GeneralParams;
use crate::poly::{Interval, Polynomial};
use crate::pricing::{yield_from, Pricer};

/// Implied spots are kept this far inside the state space.
pub const SPOT_EPS: f64 = 1e-6;

pub const PENALTY_WEIGHT: f64 = 1e6;
pub const MAX_EVALUATIONS: usize = 10_000;
pub const SIMPLEX_TOL: f64 = 1e-8;

/// Objective value used where the model cannot be priced at all.
const UNPRICEABLE: f64 = 1e10;

/// Column names of the treasury constant-maturity export and their
/// maturities in years.
pub const FRED_COLUMNS: [(&str, f64); 11] = [
    ("DGS1MO", 1.0 / 12.0),
    ("DGS3MO", 3.0 / 12.0),
    ("DGS6MO", 6.0 / 12.0),
    ("DGS1", 1.0),
    ("DGS2", 2.0),
    ("DGS3", 3.0),
    ("DGS5", 5.0),
    ("DGS7", 7.0),
    ("DGS10", 10.0),
    ("DGS20", 20.0),
    ("DGS30", 30.0),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n: usize,
}

impl ExampleModelParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, n: usize) -> Self {
        Self { alpha, beta, gamma, n }
    }

    /// Upper end `gamma n / 2` of the state space.
    pub fn upper(&self) -> f64 {
        0.5 * self.gamma * self.n as f64
    }

    /// `2 alpha beta - gamma^2`, non-negative iff the lower endpoint is
    /// unattainable.
    pub fn left_margin(&self) -> f64 {
        2.0 * self.alpha * self.beta - self.gamma * self.gamma
    }

    /// `alpha (gamma n - 2 beta) - gamma^2 (n - 2) / (2 (n - 1))`,
    /// non-negative iff the upper endpoint is unattainable.
    pub fn right_margin(&self) -> f64 {
        let n = self.n as f64;
        self.alpha * (self.gamma * n - 2.0 * self.beta)
            - self.gamma * self.gamma * (n - 2.0) / (2.0 * (n - 1.0))
    }

    pub fn domain_ok(&self) -> bool {
        self.n >= 2
            && [self.alpha, self.beta, self.gamma]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn is_feasible(&self) -> bool {
        self.domain_ok() && self.left_margin() >= 0.0 && self.right_margin() >= 0.0
    }

    /// Sum of the constraint shortfalls, 0 exactly on the feasible set.
    pub fn violation(&self) -> f64 {
        let pos = |v: f64| v.max(0.0);
        pos(-self.alpha)
            + pos(-self.beta)
            + pos(-self.gamma)
            + pos(-self.left_margin())
            + pos(-self.right_margin())
    }

    pub fn to_general(&self) -> Result<GeneralParams> {
        example_to_general(self)
    }
}

/// `R = r`, `b = alpha beta - alpha r`,
/// `a = r (gamma - 2r/n)(gamma - r/(n-1))` on `(0, gamma n / 2)`.
pub fn example_to_general(p: &ExampleModelParams) -> Result<GeneralParams> {
    if !p.domain_ok() {
        return Err(Error::InvalidInput(format!(
            "example model needs alpha, beta, gamma > 0 and n >= 2, got {p:?}"
        )));
    }
    let n = p.n as f64;
    let g = p.gamma;
    let a = Polynomial::new(vec![
        0.0,
        g * g,
        -g * (2.0 / n + 1.0 / (n - 1.0)),
        2.0 / (n * (n - 1.0)),
    ]);
    GeneralParams::new(
        p.n,
        Interval::new(0.0, p.upper())?,
        Polynomial::new(vec![0.0, 1.0]),
        Polynomial::new(vec![p.alpha * p.beta, -p.alpha]),
        a,
    )
}

/// Observed yields, one row per date, as decimal fractions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YieldDataset {
    pub dates: Vec<String>,
    pub maturities: Vec<f64>,
    pub yields: Vec<Vec<f64>>,
    pub implied_spots: Vec<f64>,
    /// Rows skipped at ingestion because of missing values.
    pub dropped_rows: usize,
}

impl YieldDataset {
    /// Spots are derived from the two shortest yields.
    pub fn new(dates: Vec<String>, maturities: Vec<f64>, yields: Vec<Vec<f64>>) -> Result<Self> {
        let spots = yields
            .iter()
            .map(|row| implied_spot(&maturities, row))
            .collect::<Result<Vec<_>>>()?;
        Self::with_spots(dates, maturities, yields, spots)
    }

    /// Explicit spots, e.g. the true states of synthetic data.
    pub fn with_spots(
        dates: Vec<String>,
        maturities: Vec<f64>,
        yields: Vec<Vec<f64>>,
        implied_spots: Vec<f64>,
    ) -> Result<Self> {
        if maturities.is_empty() {
            return Err(Error::Data("no maturities".into()));
        }
        if maturities.windows(2).any(|w| !(w[0] < w[1])) || !(maturities[0] > 0.0) {
            return Err(Error::Data("maturities must be positive and strictly increasing".into()));
        }
        if dates.len() != yields.len() || dates.len() != implied_spots.len() {
            return Err(Error::Data(format!(
                "{} dates, {} yield rows, {} spots",
                dates.len(),
                yields.len(),
                implied_spots.len()
            )));
        }
        for (d, row) in dates.iter().zip(&yields) {
            if row.len() != maturities.len() {
                return Err(Error::Data(format!("row {d} has {} yields", row.len())));
            }
            if row.iter().any(|y| !y.is_finite()) {
                return Err(Error::Data(format!("row {d} has non-finite yields")));
            }
        }
        Ok(Self {
            dates,
            maturities,
            yields,
            implied_spots,
            dropped_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

fn maturity_index(maturities: &[f64], m: f64) -> Option<usize> {
    maturities.iter().position(|x| (x - m).abs() < 1e-12)
}

/// `r = 3/2 Y(1/12) - 1/2 Y(3/12)`, the line through the two shortest
/// yields extrapolated to zero maturity.
pub fn implied_spot(maturities: &[f64], yields: &[f64]) -> Result<f64> {
    let one = maturity_index(maturities, 1.0 / 12.0);
    let three = maturity_index(maturities, 3.0 / 12.0);
    match (one, three) {
        (Some(i), Some(j)) if i < yields.len() && j < yields.len() => Ok(1.5 * yields[i] - 0.5 * yields[j]),
        _ => Err(Error::Data("implied spot needs the 1-month and 3-month yields".into())),
    }
}

/// Reads the treasury constant-maturity CSV layout (`DATE` followed by
/// `DGS*` columns in percent, `.` for missing).
pub fn parse_fred_csv<R: Read>(reader: R) -> Result<YieldDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut date_col = None;
    let mut cols: Vec<(usize, f64)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim_start_matches('\u{feff}');
        if h.eq_ignore_ascii_case("DATE") || h.eq_ignore_ascii_case("observation_date") {
            date_col = Some(i);
        } else if let Some((_, m)) = FRED_COLUMNS.iter().find(|(name, _)| *name == h) {
            cols.push((i, *m));
        } else {
            return Err(Error::Data(format!("unknown column {h:?}")));
        }
    }
    let date_col = date_col.ok_or_else(|| Error::Data("missing DATE column".into()))?;
    if cols.is_empty() {
        return Err(Error::Data("no yield columns".into()));
    }
    cols.sort_by(|a, b| a.1.total_cmp(&b.1));
    let maturities: Vec<f64> = cols.iter().map(|c| c.1).collect();

    let mut dates = Vec::new();
    let mut yields = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record?;
        let mut row = Vec::with_capacity(cols.len());
        let mut missing = false;
        for &(i, _) in &cols {
            let cell = record.get(i).unwrap_or("");
            if cell.is_empty() || cell == "." {
                missing = true;
                break;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Data(format!("bad value {cell:?} on {}", &record[date_col])))?;
            row.push(v / 100.0);
        }
        if missing {
            dropped += 1;
            continue;
        }
        dates.push(record[date_col].to_string());
        yields.push(row);
    }
    let mut ds = YieldDataset::new(dates, maturities, yields)?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

pub fn read_fred_csv(path: impl AsRef<Path>) -> Result<YieldDataset> {
    parse_fred_csv(std::fs::File::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObjectiveReport {
    pub value: f64,
    /// Spots moved inside `(eps, gamma n / 2 - eps)`.
    pub clamped_spots: usize,
    pub rms_by_maturity: Vec<f64>,
}

fn clamp_spot(r: f64, upper: f64) -> (f64, bool) {
    let lo = SPOT_EPS;
    let hi = upper - SPOT_EPS;
    if r < lo {
        (lo, true)
    } else if r > hi {
        (hi, true)
    } else {
        (r, false)
    }
}

/// Sum over dates and maturities of squared yield residuals.
pub fn objective_report(p: &ExampleModelParams, data: &YieldDataset) -> Result<ObjectiveReport> {
    let g = example_to_general(p)?;
    let pricer = Pricer::new(&g)?;
    let upper = p.upper();
    let spots: Vec<(f64, bool)> = data.implied_spots.iter().map(|&r| clamp_spot(r, upper)).collect();
    let mut per_maturity = vec![0.0; data.maturities.len()];
    for (k, &x) in data.maturities.iter().enumerate() {
        let gv = pricer.g_vector(x)?;
        for (row, &(r, _)) in data.yields.iter().zip(&spots) {
            let d = row[k] - yield_from(&gv, r)?;
            per_maturity[k] += d * d;
        }
    }
    let m = data.len().max(1) as f64;
    Ok(ObjectiveReport {
        value: per_maturity.iter().sum(),
        clamped_spots: spots.iter().filter(|s| s.1).count(),
        rms_by_maturity: per_maturity.iter().map(|s| (s / m).sqrt()).collect(),
    })
}

pub fn objective(p: &ExampleModelParams, data: &YieldDataset) -> Result<f64> {
    Ok(objective_report(p, data)?.value)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub params: ExampleModelParams,
    pub objective: f64,
    pub clamped_spots: usize,
    pub rms_by_maturity: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

struct Search<'a> {
    data: &'a YieldDataset,
    n: usize,
    evaluations: usize,
    best: Option<(f64, [f64; 3])>,
}

impl Search<'_> {
    fn penalized(&mut self, x: [f64; 3]) -> f64 {
        self.evaluations += 1;
        let p = ExampleModelParams::new(x[0], x[1], x[2], self.n);
        let v = p.violation();
        let base = match objective(&p, self.data) {
            Ok(f) if f.is_finite() => f,
            _ => UNPRICEABLE,
        };
        if v == 0.0 && p.is_feasible() && base < UNPRICEABLE {
            if self.best.map_or(true, |(b, _)| base < b) {
                self.best = Some((base, x));
            }
        }
        base + PENALTY_WEIGHT * v * v
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= MAX_EVALUATIONS
    }
}

fn diameter(simplex: &[[f64; 3]; 4]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..4 {
        for j in i + 1..4 {
            let s: f64 = (0..3).map(|k| (simplex[i][k] - simplex[j][k]).powi(2)).sum();
            d = d.max(s.sqrt());
        }
    }
    d
}

fn lerp(a: &[f64; 3], b: &[f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// Nelder–Mead from `start`; returns whether the simplex collapsed below
/// the tolerance before the evaluation budget ran out.
fn nelder_mead(search: &mut Search, start: [f64; 3]) -> bool {
    let mut simplex = [start; 4];
    for k in 0..3 {
        let step = if start[k] != 0.0 { 0.05 * start[k] } else { 2.5e-4 };
        simplex[k + 1][k] += step;
    }
    let mut values: [f64; 4] = std::array::from_fn(|i| search.penalized(simplex[i]));
    loop {
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if diameter(&simplex) < SIMPLEX_TOL {
            return true;
        }
        if search.exhausted() {
            return false;
        }
        let mut centroid = [0.0; 3];
        for v in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += v[k] / 3.0;
            }
        }
        let worst = simplex[3];
        let reflected = lerp(&centroid, &worst, -1.0);
        let fr = search.penalized(reflected);
        if fr < values[0] {
            let expanded = lerp(&centroid, &worst, -2.0);
            let fe = search.penalized(expanded);
            if fe < fr {
                simplex[3] = expanded;
                values[3] = fe;
            } else {
                simplex[3] = reflected;
                values[3] = fr;
            }
            continue;
        }
        if fr < values[2] {
            simplex[3] = reflected;
            values[3] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[3] {
            let c = lerp(&centroid, &reflected, 0.5);
            (c, search.penalized(c))
        } else {
            let c = lerp(&centroid, &worst, 0.5);
            (c, search.penalized(c))
        };
        if fc < values[3].min(fr) {
            simplex[3] = contracted;
            values[3] = fc;
            continue;
        }
        for i in 1..4 {
            simplex[i] = lerp(&simplex[0], &simplex[i], 0.5);
            values[i] = search.penalized(simplex[i]);
        }
    }
}

/// Penalised Nelder–Mead on `(alpha, beta, gamma)` with `n` held fixed,
/// restarted from the incumbent until a restart no longer improves it.
pub fn calibrate(data: &YieldDataset, init: &ExampleModelParams) -> Result<CalibrationResult> {
    if !init.domain_ok() {
        return Err(Error::Infeasible(format!(
            "initial point {init:?} needs positive alpha, beta, gamma and n >= 2"
        )));
    }
    if data.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let mut search = Search {
        data,
        n: init.n,
        evaluations: 0,
        best: None,
    };
    let mut start = [init.alpha, init.beta, init.gamma];
    let mut converged = false;
    for _ in 0..5 {
        let before = search.best.map(|b| b.0);
        converged = nelder_mead(&mut search, start);
        let Some((f, x)) = search.best else { break };
        start = x;
        let improved = before.map_or(true, |b| f < b * (1.0 - 1e-10));
        if !improved || search.exhausted() {
            break;
        }
    }
    let (_, x) = search
        .best
        .ok_or_else(|| Error::Infeasible("no feasible point was visited".into()))?;
    let params = ExampleModelParams::new(x[0], x[1], x[2], init.n);
    let report = objective_report(&params, data)?;
    Ok(CalibrationResult {
        params,
        objective: report.value,
        clamped_spots: report.clamped_spots,
        rms_by_maturity: report.rms_by_maturity,
        evaluations: search.evaluations,
        converged,
    })
}

/// Model yields `Y(x_k, r_j)` for each spot, one row per spot.
pub fn model_yields(p: &ExampleModelParams, maturities: &[f64], spots: &[f64]) -> Result<Vec<Vec<f64>>> {
    let pricer = Pricer::new(&example_to_general(p)?)?;
    let gvs = maturities
        .iter()
        .map(|&x| pricer.g_vector(x))
        .collect::<Result<Vec<_>>>()?;
    spots
        .iter()
        .map(|&r| gvs.iter().map(|gv| yield_from(gv, r)).collect())
        .collect()
}
