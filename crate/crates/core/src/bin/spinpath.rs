use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spinpath::harness::{self, compare, parse_config, parse_rho0, preset, Method, Overrides, TimeSeries};
use spinpath::pathgrid::MemoryReport;
use spinpath::{Error, Result};

#[derive(Parser)]
#[command(name = "spinpath", about = "Spin-boson reduced dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a sigma_z time series as CSV.
    Run(RunArgs),
    /// Compare two CSV series, or run two methods on one preset and compare.
    Compare(CompareArgs),
    /// Print degree-of-freedom counts as JSON.
    Memory(MemoryArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    preset: Option<String>,
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Four complex entries: "rho++,rho+-,rho-+,rho--".
    #[arg(long)]
    rho0: Option<String>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    memory_steps: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    memory_time: Option<f64>,
    #[arg(long)]
    omega_c: Option<f64>,
    /// `simplex` or `rectangle`.
    #[arg(long)]
    quadrature: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two CSV files. Without them both methods are run on the preset.
    files: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MemoryArgs {
    #[command(flatten)]
    common: Common,
}

/// Settings resolved from the config file and the flags.
struct Resolved {
    preset: Option<String>,
    method: Option<String>,
    out: Option<PathBuf>,
    overrides: Overrides,
}

fn resolve(c: &Common, method: Option<String>, out: Option<PathBuf>) -> Result<Resolved> {
    let mut r = Resolved {
        preset: None,
        method: None,
        out: None,
        overrides: Overrides::default(),
    };
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path)?;
        for (k, v) in parse_config(&text)? {
            match k.as_str() {
                "preset" => r.preset = Some(v),
                "method" => r.method = Some(v),
                "out" => r.out = Some(PathBuf::from(v)),
                _ => {
                    if !r.overrides.set(&k, &v)? {
                        return Err(Error::Parse(format!("unknown config key `{k}`")));
                    }
                }
            }
        }
    }
    let mut flags = Overrides {
        dmax: c.dmax,
        grid_n: c.grid_n,
        dt: c.dt,
        steps: c.steps,
        rho0: c.rho0.as_deref().map(parse_rho0).transpose()?,
        xi: c.xi,
        delta: c.delta,
        epsilon: c.epsilon,
        beta: c.beta,
        memory_steps: c.memory_steps,
        horizon: c.horizon,
        memory_time: c.memory_time,
        omega_c: c.omega_c,
        ..Default::default()
    };
    if let Some(q) = &c.quadrature {
        flags.set("quadrature", q)?;
    }
    r.overrides.merge(&flags);
    if c.preset.is_some() {
        r.preset = c.preset.clone();
    }
    if method.is_some() {
        r.method = method;
    }
    if out.is_some() {
        r.out = out;
    }
    Ok(r)
}

fn load_preset(r: &Resolved) -> Result<harness::ExperimentPreset> {
    let name = r.preset.as_deref().unwrap_or("bias-eps0");
    preset(name)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => {
            let r = resolve(&a.common, a.method, a.out)?;
            let p = load_preset(&r)?;
            let method: Method = r.method.as_deref().unwrap_or("debpi").parse()?;
            let csv = harness::run(&p, method, &r.overrides)?.to_csv();
            match r.out {
                Some(path) => fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Compare(a) => {
            let r = resolve(&a.common, None, None)?;
            let (sa, sb) = match a.files.as_slice() {
                [fa, fb] => (
                    TimeSeries::from_csv(&fs::read_to_string(fa)?)?,
                    TimeSeries::from_csv(&fs::read_to_string(fb)?)?,
                ),
                [] => {
                    let p = load_preset(&r)?;
                    let mut q = r.overrides.clone();
                    q.steps = None;
                    (
                        harness::run(&p, Method::Debpi, &r.overrides)?,
                        harness::run(&p, Method::Quapi, &q)?,
                    )
                }
                _ => return Err(Error::Parse("compare takes zero or two CSV files".into())),
            };
            let report = compare(&sa, &sb)?;
            println!("{}", serde_json::to_string(&report).expect("report serialises"));
        }
        Command::Memory(a) => {
            let r = resolve(&a.common, None, None)?;
            let p = load_preset(&r)?.with(&r.overrides);
            println!("{}", MemoryReport::new(p.grid_n, p.dmax, p.memory_steps).to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
