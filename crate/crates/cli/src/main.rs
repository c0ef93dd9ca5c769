mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lastzero::sim::{estimate_prediction_errors, BoundaryRule, SimConfig, StoppingRule};
use lastzero::validation::{applicable, Suite};
use lastzero::{solve, validate, Error, GainSpec, MomentOrder, Solution};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("output: {0}")]
    Output(String),
    #[error("{0}")]
    Usage(String),
    #[error("model rejected: {0}")]
    Rejected(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("{0}")]
    Other(String),
    #[error("unreliable estimate under --strict: {0}")]
    Unreliable(String),
    #[error("validation failed: criteria {0}")]
    Validation(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Rejected(r) => CliError::Rejected(r.to_string()),
            Error::NonConvergence(_) | Error::Bracket(_) | Error::Invariant(_) | Error::SeriesNonConvergence { .. } => {
                CliError::Solver(e.to_string())
            }
            Error::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Rejected(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Unreliable(_) => 4,
            CliError::Validation(_) => 5,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lastzero", version, about = "Predicting the last zero of a spectrally negative Levy process")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides `out` in the config; default: current directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// master seed for simulation and the solver's kernel tables
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the exponent derivatives and the admissibility verdict
    ModelCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Solve for b(u) and V(0,0); writes boundary.csv, value.csv and report.txt
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Solve, write value.csv, and print V at the given `u,x` points
    Value {
        #[command(flatten)]
        common: Common,
        points: Vec<String>,
    },
    /// Estimate E|tau - g|^p for stopping rules; writes sim.csv
    Simulate {
        #[command(flatten)]
        common: Common,
        /// boundary:<boundary.csv>, barrier:<a>[,<a>...], immediate or oracle; repeatable
        #[arg(long, required = true)]
        rule: Vec<String>,
        /// exit 4 if any estimate is flagged unreliable by censoring
        #[arg(long)]
        strict: bool,
    },
    /// Run the acceptance checks that apply to the configured family
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
        cfg.solver.seed = seed;
    }
    let out = common.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

fn solved(cfg: &RunConfig) -> Result<Solution, CliError> {
    let spec = GainSpec::new(cfg.model, cfg.p)?;
    Ok(solve(&spec, &cfg.solver)?)
}

fn model_check(cfg: &RunConfig) -> Result<(), CliError> {
    let m = cfg.model;
    let (d1, d2) = m.phi_derivatives_at_zero();
    println!("family = {}", m.name());
    println!("psi'(0+) = {}  [closed form]", output::num(m.mean())?);
    println!("variation = {}", m.variation());
    let p = MomentOrder::new(cfg.p)?;
    match validate(&m, p) {
        Ok(()) => {
            println!("Phi'(0) = {}  [closed form]", output::num(d1)?);
            println!("Phi''(0) = {}  [closed form]", output::num(d2)?);
            println!("verdict = admissible for p = {}", cfg.p);
            Ok(())
        }
        Err(r) => {
            println!("verdict = rejected: {r}");
            Err(CliError::Rejected(r.to_string()))
        }
    }
}

fn parse_rules(specs: &[String]) -> Result<Vec<(String, StoppingRule)>, CliError> {
    let mut out = Vec::new();
    for s in specs {
        let (kind, arg) = s.split_once(':').unwrap_or((s.as_str(), ""));
        match kind {
            "immediate" => out.push(("immediate".into(), StoppingRule::Immediate)),
            "oracle" => out.push(("oracle".into(), StoppingRule::OracleG)),
            "barrier" => {
                for a in arg.split(',') {
                    let a: f64 = a.trim().parse().map_err(|_| CliError::Usage(format!("bad barrier level in `{s}`")))?;
                    let rule = StoppingRule::ConstantBarrier(a);
                    out.push((rule.label(), rule));
                }
            }
            "boundary" => out.push(("boundary".into(), StoppingRule::Boundary(read_boundary(arg)?))),
            _ => return Err(CliError::Usage(format!("unknown rule `{s}`"))),
        }
    }
    Ok(out)
}

fn read_boundary(path: &str) -> Result<BoundaryRule, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("u,b,h") {
        return Err(CliError::Usage(format!("{path}: expected header u,b,h")));
    }
    let (mut u, mut b) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let parsed: Option<(f64, f64)> = match cols.as_slice() {
            [uu, bb, _] => uu.parse().ok().zip(bb.parse().ok()),
            _ => None,
        };
        let (uu, bb) = parsed.ok_or_else(|| CliError::Usage(format!("{path}: bad row {}", i + 2)))?;
        u.push(uu);
        b.push(bb);
    }
    Ok(BoundaryRule::new(u, b)?)
}

fn simulate(cfg: &RunConfig, out: &std::path::Path, specs: &[String], strict: bool) -> Result<(), CliError> {
    let rules = parse_rules(specs)?;
    let sim = SimConfig::new(cfg.sim.n_paths, cfg.sim.horizon, cfg.sim.dt, cfg.sim.seed);
    GainSpec::new(cfg.model, cfg.p)?;
    let only: Vec<StoppingRule> = rules.iter().map(|r| r.1.clone()).collect();
    let est = estimate_prediction_errors(&cfg.model, &only, cfg.p, cfg.x0, &sim)?;
    let rows: Vec<(String, _)> = rules.into_iter().map(|r| r.0).zip(est).collect();
    for (label, e) in &rows {
        println!("{label}: {} +- {}  [MC]", output::num(e.mean)?, output::num(e.stderr)?);
    }
    output::save(out, "sim.csv", &output::sim_csv(&rows)?)?;
    let flagged: Vec<&str> = rows.iter().filter(|r| r.1.unreliable).map(|r| r.0.as_str()).collect();
    if strict && !flagged.is_empty() {
        return Err(CliError::Unreliable(flagged.join(", ")));
    }
    Ok(())
}

fn run_validate(cfg: &RunConfig) -> Result<(), CliError> {
    GainSpec::new(cfg.model, cfg.p)?;
    let suite = Suite::for_model(cfg.model, cfg.solver.clone(), cfg.sim);
    let mut failed = Vec::new();
    for id in applicable(&cfg.model.family()) {
        let o = suite.run(id);
        println!("{}", o.line());
        if !o.pass {
            failed.push(id.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::ModelCheck { common } => model_check(&load(&common)?.0),
        Cmd::Solve { common } => {
            let (cfg, out) = load(&common)?;
            let sol = solved(&cfg)?;
            output::save(&out, "boundary.csv", &output::boundary_csv(&sol)?)?;
            output::save(&out, "value.csv", &output::value_csv(&sol.surface, 40)?)?;
            let rep = output::report(&sol)?;
            print!("{rep}");
            output::save(&out, "report.txt", &rep)
        }
        Cmd::Value { common, points } => {
            let (cfg, out) = load(&common)?;
            let pts = points
                .iter()
                .map(|p| {
                    let xy = p.split_once(',').and_then(|(a, b)| a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()));
                    xy.ok_or_else(|| CliError::Usage(format!("expected u,x but got `{p}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let sol = solved(&cfg)?;
            output::save(&out, "value.csv", &output::value_csv(&sol.surface, 40)?)?;
            for (u, x) in pts {
                let v = sol.surface.value(u, x)?;
                println!("{},{},{}", output::num(u)?, output::num(x)?, output::num(v)?);
            }
            Ok(())
        }
        Cmd::Simulate { common, rule, strict } => {
            let (cfg, out) = load(&common)?;
            simulate(&cfg, &out, &rule, strict)
        }
        Cmd::Validate { common } => run_validate(&load(&common)?.0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
