use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conjset_cli::{
    analyze, render, simulate, AnalyzeConfig, CliError, ConditionInput, SimulateConfig,
};
use conjset_core::bootstrap::Studentize;
use conjset_core::simharness::{Scenario, SimulationSpec, Snr};
use conjset_core::{CombineMode, Sign};

/// Simultaneous confidence regions for conjunctions and disjunctions of
/// excursion sets on a 2D lattice.
#[derive(Parser)]
#[command(name = "conjset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit each condition, calibrate by wild t-bootstrap and write the
    /// nested regions.
    ///
    /// Inputs per condition: a field stack (JSON header {"width","height",
    /// "n","dtype":"f64","order":"row-major","endianness":"little"} next to a
    /// raw payload of n*width*height little-endian f64, default path
    /// <header>.bin), an optional design CSV (rows = observations, an
    /// optional non-numeric header row) and a contrast CSV. Repeat --stack
    /// once per condition; --design, --contrast, --c and --sign take one
    /// value for all conditions or one per condition.
    ///
    /// Writes upper/point/lower .png (0/255) and .csv (row,col,value),
    /// overlay.png, boundary.csv, report.json, timing.json and, with
    /// --dump-boot, h_tilde.csv. Exit 2 on invalid input, 3 when the
    /// estimated set is empty or fills the lattice.
    Analyze(AnalyzeArgs),
    /// Monte Carlo coverage study on synthetic signals. Grid flags take
    /// comma-separated lists; every combination is run.
    Simulate(SimulateArgs),
    /// Draw three masks (PNG or CSV) as one colour overlay PNG.
    Render(RenderArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON config with the same fields as the flags; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stack: Vec<PathBuf>,
    #[arg(long)]
    design: Vec<PathBuf>,
    #[arg(long)]
    contrast: Vec<PathBuf>,
    /// Threshold c.
    #[arg(long = "c", allow_negative_numbers = true)]
    c: Vec<f64>,
    /// +1 or -1 (also pos/neg).
    #[arg(long, allow_negative_numbers = true)]
    sign: Vec<Sign>,
    /// conjunction (and) or disjunction (or).
    #[arg(long)]
    mode: Option<CombineMode>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bootstrap realizations B.
    #[arg(long)]
    boot: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Active-set tolerance; defaults to 2/sqrt(n).
    #[arg(long)]
    eta: Option<f64>,
    /// pixels or boundary_points.
    #[arg(long)]
    studentize: Option<Studentize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the bootstrap sample to h_tilde.csv.
    #[arg(long)]
    dump_boot: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "circles")]
    scenario: Scenario,
    #[arg(long, default_value = "high")]
    snr: Snr,
    /// Observation counts.
    #[arg(long, value_delimiter = ',', default_value = "300")]
    n: Vec<usize>,
    /// Shape centre separations in pixels.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    sep: Vec<f64>,
    /// Ramp gradient multipliers.
    #[arg(long = "ramp-k", value_delimiter = ',', default_value = "1")]
    ramp_k: Vec<f64>,
    /// Between-condition noise correlations.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0",
        allow_negative_numbers = true
    )]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    conditions: usize,
    /// Circle radius or square half-width.
    #[arg(long, default_value_t = 25.0)]
    radius: f64,
    #[arg(long, default_value_t = 5.0)]
    fwhm: f64,
    #[arg(long, default_value_t = 100)]
    width: usize,
    #[arg(long, default_value_t = 100)]
    height: usize,
    #[arg(long, default_value_t = 500)]
    instances: usize,
    #[arg(long, default_value_t = 1000)]
    boot: usize,
    /// Levels; all share each instance's bootstrap sample.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value = "pixels")]
    studentize: Studentize,
    /// Also score the intersection of separately calibrated regions.
    #[arg(long)]
    naive: bool,
    /// JSON array of reports; timings go to <out stem>.timing.json.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// One CSV row per report.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    upper: PathBuf,
    #[arg(long)]
    point: PathBuf,
    #[arg(long)]
    lower: PathBuf,
    #[arg(long, default_value = "overlay.png")]
    out: PathBuf,
}

/// One value for all conditions or one per condition.
fn per_condition<T: Clone>(values: &[T], m: usize, flag: &str) -> Result<Vec<Option<T>>, CliError> {
    match values.len() {
        0 => Ok(vec![None; m]),
        1 => Ok(vec![Some(values[0].clone()); m]),
        k if k == m => Ok(values.iter().cloned().map(Some).collect()),
        k => Err(CliError::Validation(format!(
            "{flag}: got {k} values for {m} conditions (give 1 or {m})"
        ))),
    }
}

fn analyze_config(args: AnalyzeArgs) -> Result<AnalyzeConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => AnalyzeConfig::from_json_file(p)?,
        None => AnalyzeConfig::default(),
    };
    if !args.stack.is_empty() {
        let old = std::mem::take(&mut cfg.conditions);
        cfg.conditions = args
            .stack
            .iter()
            .enumerate()
            .map(|(i, stack)| {
                let prev = old.get(i);
                ConditionInput {
                    stack: stack.clone(),
                    design: prev.and_then(|p| p.design.clone()),
                    contrast: prev.and_then(|p| p.contrast.clone()),
                    c: prev.map_or(f64::NAN, |p| p.c),
                    sign: prev.map_or(Sign::Positive, |p| p.sign),
                }
            })
            .collect();
    }
    let m = cfg.conditions.len();
    let design = per_condition(&args.design, m, "design")?;
    let contrast = per_condition(&args.contrast, m, "contrast")?;
    let c = per_condition(&args.c, m, "c")?;
    let sign = per_condition(&args.sign, m, "sign")?;
    for (i, cond) in cfg.conditions.iter_mut().enumerate() {
        if let Some(d) = design[i].clone() {
            cond.design = Some(d);
        }
        if let Some(k) = contrast[i].clone() {
            cond.contrast = Some(k);
        }
        if let Some(v) = c[i] {
            cond.c = v;
        }
        if let Some(s) = sign[i] {
            cond.sign = s;
        }
        if cond.c.is_nan() {
            return Err(CliError::Validation(format!(
                "c: no threshold given for condition {}",
                i + 1
            )));
        }
    }
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.boot {
        cfg.boot = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.eta.is_some() {
        cfg.eta = args.eta;
    }
    if let Some(v) = args.studentize {
        cfg.studentize = v;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    cfg.dump_boot |= args.dump_boot;
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    Ok(cfg)
}

fn simulate_config(a: SimulateArgs) -> SimulateConfig {
    let base = SimulationSpec {
        scenario: a.scenario,
        snr: a.snr,
        width: a.width,
        height: a.height,
        n: a.n[0],
        conditions: a.conditions,
        separation: a.sep[0],
        radius: a.radius,
        ramp_k: a.ramp_k[0],
        noise_rho: a.rho[0],
        fwhm: a.fwhm,
        instances: a.instances,
        boot: conjset_core::BootstrapConfig {
            realizations: a.boot,
            alpha: a.alpha[0],
            seed: a.seed,
            studentize: a.studentize,
        },
        eta: a.eta,
    };
    SimulateConfig {
        base,
        n: a.n,
        separation: a.sep,
        ramp_k: a.ramp_k,
        noise_rho: a.rho,
        alphas: a.alpha,
        naive: a.naive,
        out: a.out,
        csv: a.csv,
        threads: a.threads,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => {
            let cfg = analyze_config(args)?;
            let r = analyze(&cfg)?;
            println!(
                "a = {:.6}; {} {} / {} {} / {} {} pixels; {} boundary points; written to {}",
                r.a,
                r.labels.upper,
                r.counts.upper,
                r.labels.point,
                r.counts.point,
                r.labels.lower,
                r.counts.lower,
                r.boundary_points,
                cfg.out.display()
            );
        }
        Command::Simulate(args) => {
            let cfg = simulate_config(args);
            simulate(&cfg, |r| {
                for w in &r.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "n={} sep={} k={} rho={} alpha={}: {}",
                    r.spec.n,
                    r.spec.separation,
                    r.spec.ramp_k,
                    r.spec.noise_rho,
                    r.alpha,
                    r.summary()
                );
            })?;
        }
        Command::Render(a) => render(&a.upper, &a.point, &a.lower, &a.out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
