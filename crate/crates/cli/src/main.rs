use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use battery_poa::config::{ConfigError, InstanceConfig, DEFAULT_SEED};
use battery_poa::demand::{GpModel, TimeGrid};
use battery_poa::export::{sample_demand_csv, solve_csv, sweep_csv, sweep_summary};
use battery_poa::feasible::FeasibleError;
use battery_poa::poa::{sweep_counterexample, sweep_monomial, sweep_theorem5, PoaError, PoaReport};
use battery_poa::solvers::{Battery, SolveError, SolveResult};
use battery_poa::verify::{run_check, Suite};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// Battery dispatch and the price of anarchy of storage arbitrage.
#[derive(Parser)]
#[command(name = "battery-poa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and write per-node CSV.
    Solve {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Objective::Both)]
        objective: Objective,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the PoA case and value of an instance.
    Poa {
        config: PathBuf,
        /// Also write a one-row CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one of the step-instance families.
    Sweep {
        #[arg(long, value_enum)]
        family: Family,
        /// Monomial degree.
        #[arg(long, default_value_t = 2)]
        d: u32,
        #[arg(long, default_value_t = 100)]
        nx: usize,
        #[arg(long, default_value_t = 100)]
        neps: usize,
        /// Comma-separated δ values for the counterexample family.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3, 1e-4])]
        deltas: Vec<f64>,
        /// Largest degree for the theorem5 family.
        #[arg(long, default_value_t = 10)]
        dmax: u32,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean, ±3σ envelope and seeded sample paths of the GP demand model.
    SampleDemand {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        paths: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        base: Option<f64>,
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        length_scale: Option<f64>,
        #[arg(long)]
        sigma_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance checks.
    Verify {
        #[arg(long, default_value = "all", value_parser = parse_suite)]
        suite: Suite,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Cb,
    Dcb,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Monomial,
    Counterexample,
    Theorem5,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

fn feasible_code(e: &FeasibleError) -> u8 {
    match e {
        FeasibleError::ZeroInfeasible { .. } => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        let code = match &e {
            SolveError::AverageOutsideBox { .. } => EXIT_INFEASIBLE,
            SolveError::Feasible(f) => feasible_code(f),
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<PoaError> for Failure {
    fn from(e: PoaError) -> Self {
        match e {
            PoaError::Solve(s) => s.into(),
            other => Failure::input(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match &e {
            ConfigError::Feasible(f) => feasible_code(f),
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load(path: &Path) -> Result<InstanceConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    InstanceConfig::from_json(&text).map_err(|e| Failure {
        message: format!("{}: {e}", path.display()),
        ..Failure::from(e)
    })
}

/// Writes to a sibling temp file and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::input(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn describe(name: &str, r: &SolveResult) -> String {
    let mut s = format!(
        "{name}: wel={} rev={} converged={} iterations={}",
        r.wel, r.rev, r.converged, r.iterations
    );
    if let Some(c) = r.certificate_residual {
        s.push_str(&format!(" certificate={c:.3e}"));
    }
    s
}

fn cmd_solve(config: &Path, objective: Objective, out: Option<&Path>) -> Result<u8, Failure> {
    let instance = load(config)?.build()?;
    let which: &[Battery] = match objective {
        Objective::Cb => &[Battery::Cb],
        Objective::Dcb => &[Battery::Dcb],
        Objective::Both => &[Battery::Cb, Battery::Dcb],
    };
    let results: Vec<(Battery, SolveResult)> = which
        .iter()
        .map(|&b| instance.solve(b).map(|r| (b, r)))
        .collect::<Result<_, _>>()?;
    for (b, r) in &results {
        eprintln!("{}", describe(battery_name(*b), r));
    }
    let refs: Vec<(Battery, &SolveResult)> = results.iter().map(|(b, r)| (*b, r)).collect();
    let text = solve_csv(&instance.demand, &instance.price, &refs).map_err(|e| Failure::input(e.to_string()))?;
    emit(out, &text)?;
    Ok(if results.iter().all(|(_, r)| r.converged) {
        0
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn battery_name(b: Battery) -> &'static str {
    match b {
        Battery::Cb => "cb",
        Battery::Dcb => "dcb",
    }
}

fn poa_csv(rep: &PoaReport) -> String {
    let p = &rep.poa;
    let cert = |r: &SolveResult| r.certificate_residual.map(|c| c.to_string()).unwrap_or_default();
    let infinite = p.infinite.map(|k| format!("{k:?}").to_lowercase()).unwrap_or_default();
    format!(
        "case,value,wel_cb,wel_dcb_min,tol,infinite,near_optimal,cb_certificate,dcb_certificate\n{:?},{},{},{},{},{},{},{},{}\n",
        p.case,
        p.ratio(),
        p.wel_cb,
        p.wel_dcb_min,
        p.tol,
        infinite,
        p.near_optimal_count,
        cert(&rep.cb),
        cert(&rep.dcb)
    )
    .to_lowercase()
}

fn cmd_poa(config: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let instance = load(config)?.build()?;
    let rep = instance.poa()?;
    println!("{}", rep.poa);
    println!("{}", describe("cb", &rep.cb));
    println!("{}", describe("dcb", &rep.dcb));
    if let Some(p) = out {
        write_atomic(p, &poa_csv(&rep))?;
    }
    Ok(if rep.cb.converged && rep.dcb.converged {
        0
    } else {
        EXIT_NOT_CONVERGED
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    family: Family,
    d: u32,
    nx: usize,
    neps: usize,
    deltas: &[f64],
    dmax: u32,
    eps: f64,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let table = match family {
        Family::Monomial => sweep_monomial(d, nx, neps)?,
        Family::Counterexample => sweep_counterexample(deltas)?,
        Family::Theorem5 => sweep_theorem5(dmax, eps)?,
    };
    eprintln!("{}", sweep_summary(&table));
    emit(out, &sweep_csv(&table).map_err(|e| Failure::input(e.to_string()))?)?;
    Ok(0)
}

fn cmd_verify(suite: Suite) -> u8 {
    let mut failed = 0;
    let ids = suite.ids();
    for &id in ids {
        let c = run_check(id);
        println!("{c}");
        failed += usize::from(!c.passed);
    }
    println!("{} of {} checks passed", ids.len() - failed, ids.len());
    if failed == 0 {
        0
    } else {
        EXIT_VERIFY
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("POA_STORAGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("POA_STORAGE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::input(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    configure_threads()?;
    match cli.command {
        Command::Solve { config, objective, out } => cmd_solve(&config, objective, out.as_deref()),
        Command::Poa { config, out } => cmd_poa(&config, out.as_deref()),
        Command::Sweep {
            family,
            d,
            nx,
            neps,
            deltas,
            dmax,
            eps,
            out,
        } => cmd_sweep(family, d, nx, neps, &deltas, dmax, eps, out.as_deref()),
        Command::SampleDemand {
            n,
            paths,
            seed,
            base,
            amplitude,
            length_scale,
            sigma_max,
            out,
        } => {
            let mut model = GpModel::default();
            model.base = base.unwrap_or(model.base);
            model.amplitude = amplitude.unwrap_or(model.amplitude);
            model.length_scale = length_scale.unwrap_or(model.length_scale);
            model.sigma_max = sigma_max.unwrap_or(model.sigma_max);
            let grid = TimeGrid::new(n).map_err(|e| Failure::input(e.to_string()))?;
            let text = sample_demand_csv(model, grid, paths, seed).map_err(|e| Failure::input(e.to_string()))?;
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Verify { suite } => Ok(cmd_verify(suite)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => {
            if code == EXIT_NOT_CONVERGED {
                eprintln!("warning: solver did not converge");
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
