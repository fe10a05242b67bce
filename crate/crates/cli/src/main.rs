use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use polyterm::calib::{calibrate, read_fred_csv, CalibrationResult, ExampleModelParams};
use polyterm::feller::feller_report;
use polyterm::model::{feasibility_checks, GeneralParams, ParamSet};
use polyterm::pricing::Pricer;
use polyterm::sim::{explosive_warning, mc_price, simulate_paths, SimConfig};
use polyterm::spectral::{spectrum, SpectrumReport};
use polyterm::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "polyterm", version, about = "Polynomial term-structure models")]
struct Cli {
    /// Parameter file (canonical, general or example JSON form)
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    output: Format,

    /// Seed for Monte Carlo
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the coefficient constraints on the canonical state space
    Feasibility,
    /// Classify both endpoints
    Feller,
    /// Zero-coupon bond price H(x, z)
    Price {
        #[arg(long)]
        maturity: f64,
        #[arg(long)]
        state: f64,
    },
    /// Prices and yields over a maturity grid
    Curve {
        #[arg(long)]
        state: f64,
        /// Comma-separated maturities; defaults to an even grid on (0, max-maturity]
        #[arg(long, value_delimiter = ',')]
        maturities: Option<Vec<f64>>,
        #[arg(long, default_value_t = 30.0)]
        max_maturity: f64,
        #[arg(long, default_value_t = 30)]
        points: usize,
    },
    /// Eigenvalues, weight polynomials and long rate
    Spectrum,
    /// Invariant density on an interior grid
    Density {
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Euler paths, or a Monte Carlo price with --price
    Simulate {
        #[arg(long)]
        z0: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        paths: usize,
        /// Maturity to price instead of printing paths
        #[arg(long)]
        price: Option<f64>,
    },
    /// Fit the example model to a treasury CSV
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        /// Initial alpha,beta,gamma
        #[arg(long, value_parser = parse_triple)]
        init: [f64; 3],
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected alpha,beta,gamma, got {} values", v.len()))
}

enum Payload {
    Object(Value),
    Table { header: Vec<String>, rows: Vec<Vec<Value>> },
}

fn load_params(cli: &Cli) -> Result<ParamSet> {
    let Some(path) = &cli.params else {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "this subcommand needs --params <FILE>",
            )
            .exit()
    };
    ParamSet::from_json(&std::fs::read_to_string(path)?)
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn general(cli: &Cli) -> Result<GeneralParams> {
    let set = load_params(cli)?;
    if let ParamSet::Example(e) = &set {
        if !e.is_feasible() {
            warn("example parameters violate the endpoint conditions");
        }
    }
    set.to_general()
}

fn run(cli: &Cli) -> Result<Payload> {
    match &cli.command {
        Command::Feasibility => {
            let set = load_params(cli)?;
            let canonical = set.to_canonical()?;
            let checks = feasibility_checks(&canonical)?;
            let mut out = json!({ "feasible": checks.all(), "checks": checks });
            if let ParamSet::Example(e) = &set {
                out["example"] = json!({
                    "feasible": e.is_feasible(),
                    "left_margin": e.left_margin(),
                    "right_margin": e.right_margin(),
                });
            }
            Ok(Payload::Object(out))
        }
        Command::Feller => Ok(Payload::Object(serde_json::to_value(feller_report(&general(cli)?)?)?)),
        Command::Price { maturity, state } => {
            let price = Pricer::new(&general(cli)?)?.price(*maturity, *state)?;
            Ok(Payload::Object(json!({ "price": price })))
        }
        Command::Curve {
            state,
            maturities,
            max_maturity,
            points,
        } => {
            let xs = match maturities {
                Some(xs) => xs.clone(),
                None => {
                    if *points == 0 || !(*max_maturity > 0.0) {
                        return Err(Error::InvalidInput("need points >= 1 and max-maturity > 0".into()));
                    }
                    (1..=*points).map(|k| max_maturity * k as f64 / *points as f64).collect()
                }
            };
            let pricer = Pricer::new(&general(cli)?)?;
            let mut rows = Vec::with_capacity(xs.len());
            for x in xs {
                let price = pricer.price(x, *state)?;
                let y = pricer.yield_at(x, *state)?;
                rows.push(vec![json!(x), json!(price), json!(y)]);
            }
            Ok(Payload::Table {
                header: vec!["maturity".into(), "price".into(), "yield".into()],
                rows,
            })
        }
        Command::Spectrum => {
            let sp = spectrum(&general(cli)?)?;
            if !sp.density.feller_interior() {
                warn("parameters are on or outside the boundary of the strict endpoint conditions");
            }
            if sp.top_weight_degenerate() {
                warn("weight of the top eigenvalue vanishes; long rate may differ");
            }
            Ok(Payload::Object(serde_json::to_value(SpectrumReport::from(&sp))?))
        }
        Command::Density { points } => {
            let g = general(cli)?;
            let f = polyterm::invariant_density(&g)?;
            if !f.feller_interior() {
                warn("parameters are on or outside the boundary of the strict endpoint conditions");
            }
            let mut rows = Vec::with_capacity(*points);
            for z in g.interval().interior_grid(*points) {
                rows.push(vec![json!(z), json!(f.eval(z)?)]);
            }
            Ok(Payload::Table {
                header: vec!["z".into(), "f".into()],
                rows,
            })
        }
        Command::Simulate {
            z0,
            dt,
            horizon,
            paths,
            price,
        } => {
            let g = general(cli)?;
            if explosive_warning(&g) {
                warn("model is classified explosive; paths are projected at the boundary");
            }
            let cfg = SimConfig::new(*dt, *horizon, *paths, cli.seed)?;
            if let Some(x) = price {
                let est = mc_price(&g, *x, *z0, &cfg)?;
                return Ok(Payload::Object(serde_json::to_value(est)?));
            }
            let all = simulate_paths(&g, *z0, &cfg)?;
            let mut rows = Vec::new();
            for (i, p) in all.iter().enumerate() {
                for (t, z) in p.times.iter().zip(&p.states) {
                    rows.push(vec![json!(i), json!(t), json!(z)]);
                }
            }
            Ok(Payload::Table {
                header: vec!["path".into(), "t".into(), "z".into()],
                rows,
            })
        }
        Command::Calibrate { data, init, n } => {
            let ds = read_fred_csv(data)?;
            if ds.dropped_rows > 0 {
                warn(&format!("{} rows with missing values dropped", ds.dropped_rows));
            }
            let init = ExampleModelParams::new(init[0], init[1], init[2], *n);
            let res: CalibrationResult = calibrate(&ds, &init)?;
            let mut out = serde_json::to_value(&res)?;
            out["maturities"] = json!(ds.maturities);
            out["dates"] = json!(ds.len());
            out["dropped_rows"] = json!(ds.dropped_rows);
            Ok(Payload::Object(out))
        }
    }
}

/// `key,value` rows with dotted paths for nested objects and arrays.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn render(payload: Payload, format: Format) -> Result<String> {
    match (payload, format) {
        (Payload::Object(v), Format::Json) => Ok(serde_json::to_string_pretty(&v)? + "\n"),
        (Payload::Table { header, rows }, Format::Json) => {
            let records: Vec<Value> = rows
                .into_iter()
                .map(|r| Value::Object(header.iter().cloned().zip(r).collect()))
                .collect();
            Ok(serde_json::to_string_pretty(&records)? + "\n")
        }
        (Payload::Object(v), Format::Csv) => {
            let mut flat = Vec::new();
            flatten("", &v, &mut flat);
            let rows = flat.into_iter().map(|(k, v)| vec![Value::String(k), v]).collect();
            write_csv(&["key".to_string(), "value".to_string()], rows)
        }
        (Payload::Table { header, rows }, Format::Csv) => write_csv(&header, rows),
    }
}

fn write_csv(header: &[String], rows: Vec<Vec<Value>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(cell))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|p| render(p, cli.output)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
