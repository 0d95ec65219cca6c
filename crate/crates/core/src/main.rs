use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nondiv_fem::cli::{parse_pairs, run, OutputFormat, RunConfig};

/// Convergence study for -A:D^2 u = f on the unit square.
#[derive(Debug, Parser)]
#[command(name = "nondiv", version)]
struct Args {
    /// Flat key = value file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `<coefficient>-<solution>`, e.g. smooth-sin or hoelder-power.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// c0 or dg.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<i32>,
    #[arg(long)]
    gamma0: Option<f64>,
    /// Comma-separated subdivisions per side, strictly increasing.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Also compute the discrete stability constants on every level.
    #[arg(long)]
    probe: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
    #[arg(long)]
    dump_solution: Option<PathBuf>,
}

impl Args {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("problem", self.problem.clone());
        put("degree", self.degree.map(|v| v.to_string()));
        put("method", self.method.clone());
        put("epsilon", self.epsilon.map(|v| v.to_string()));
        put("gamma0", self.gamma0.map(|v| v.to_string()));
        put("levels", self.levels.clone());
        put("out", path(&self.out));
        put("format", self.format.clone());
        put("probe", self.probe.then(|| "true".to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("dump_mesh", path(&self.dump_mesh));
        put("dump_matrix", path(&self.dump_matrix));
        put("dump_solution", path(&self.dump_solution));
        m
    }
}

fn load_config(args: &Args) -> nondiv_fem::Result<RunConfig> {
    let mut pairs = match &args.config {
        Some(p) => parse_pairs(&std::fs::read_to_string(p)?)?,
        None => BTreeMap::new(),
    };
    pairs.extend(args.overrides());
    RunConfig::from_pairs(&pairs)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("nondiv: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("nondiv: {e}");
            return ExitCode::from(1);
        }
    };
    let e = report.expected;
    eprintln!(
        "expected orders: h1 {} (literal min(r+1,s) = {}), broken h2 {}",
        e.h1,
        e.h1_literal,
        e.h2.map_or("n/a".to_string(), |v| v.to_string())
    );
    for row in &report.rows {
        if let Some(f) = &row.failure {
            eprintln!("level n={} failed at {}: {}", row.n, f.stage, f.message);
        }
    }
    for v in &report.verdicts {
        if !v.pass {
            eprintln!("verdict {} failed (observed {:?})", v.name, v.observed);
        }
    }
    let text = match config.format {
        OutputFormat::Csv => Ok(report.to_csv()),
        OutputFormat::Json => report.to_json(),
    };
    let written = text.and_then(|t| match &config.out {
        Some(p) => std::fs::write(p, t).map_err(Into::into),
        None => std::io::stdout().write_all(t.as_bytes()).map_err(Into::into),
    });
    if let Err(e) = written {
        eprintln!("nondiv: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(report.exit_code() as u8)
}
