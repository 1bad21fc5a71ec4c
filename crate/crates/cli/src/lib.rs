//! Command implementations behind the `conjset` binary.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use conjset_core::bootstrap::{BootstrapConfig, Execution, Studentize};
use conjset_core::field::{load_field_stack, load_mask, save_mask, save_overlay_png};
use conjset_core::pipeline::{analyze_with, Analysis};
use conjset_core::simharness::{run_study, CoverageReport, Method, SimulationSpec, CSV_HEADER};
use conjset_core::{CombineMode, CombineSpec, DesignSpec, Error, FieldStack, Sign};
use serde::{Deserialize, Serialize};

/// Exit status for input and configuration problems.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status when the estimated combined set is empty or full.
pub const EXIT_EMPTY: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    EmptyEstimate(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::EmptyEstimate(_) => EXIT_EMPTY,
            CliError::Runtime(_) => 1,
        }
    }

    fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::EmptyEstimate(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::EmptyEstimate => CliError::EmptyEstimate(e.to_string()),
            Error::DegenerateBootstrap { .. } | Error::Io(_) | Error::Png(_) => {
                CliError::Runtime(e.into())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Input for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionInput {
    /// JSON header of the field stack.
    pub stack: PathBuf,
    /// Design matrix CSV, one row per observation; intercept-only if absent.
    #[serde(default)]
    pub design: Option<PathBuf>,
    /// Contrast CSV, one value per design column; `[1]` if absent.
    #[serde(default)]
    pub contrast: Option<PathBuf>,
    /// Threshold `c`.
    pub c: f64,
    #[serde(default = "positive")]
    pub sign: Sign,
}

fn positive() -> Sign {
    Sign::Positive
}

/// Everything `analyze` needs. Loaded from a JSON file and/or flags; flags
/// take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub conditions: Vec<ConditionInput>,
    pub mode: CombineMode,
    pub alpha: f64,
    pub boot: usize,
    pub seed: u64,
    pub eta: Option<f64>,
    pub studentize: Studentize,
    pub out: PathBuf,
    pub dump_boot: bool,
    pub threads: Option<usize>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            conditions: Vec::new(),
            mode: CombineMode::Conjunction,
            alpha: 0.05,
            boot: 5000,
            seed: 0,
            eta: None,
            studentize: Studentize::default(),
            out: PathBuf::from("out"),
            dump_boot: false,
            threads: None,
        }
    }
}

impl AnalyzeConfig {
    pub fn from_json_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.conditions.is_empty() {
            return Err(CliError::invalid(
                "conditions: at least one --stack is required",
            ));
        }
        BootstrapConfig::new(self.boot, self.alpha, self.seed).map_err(|e| match e {
            Error::InvalidParameter(m) if m.contains("alpha") => {
                CliError::invalid(format!("alpha: {m}"))
            }
            other => CliError::invalid(format!("boot: {other}")),
        })?;
        if let Some(e) = self.eta {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(CliError::invalid(format!("eta: must be >= 0, got {e}")));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::invalid("threads: must be at least 1"));
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if !c.c.is_finite() {
                return Err(CliError::invalid(format!(
                    "c: threshold of condition {} is not finite",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn combine_spec(&self) -> CliResult<CombineSpec> {
        Ok(CombineSpec::new(
            self.conditions.iter().map(|c| c.c).collect(),
            self.conditions.iter().map(|c| c.sign).collect(),
            self.mode,
        )?)
    }
}

/// Region labels in output order upper, point, lower.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Labels {
    pub upper: String,
    pub point: String,
    pub lower: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnalyzeReport {
    pub labels: Labels,
    pub a: f64,
    pub alpha: f64,
    pub mode: CombineMode,
    pub conditions: usize,
    pub thresholds: Vec<f64>,
    pub signs: Vec<Sign>,
    pub width: usize,
    pub height: usize,
    pub n: Vec<usize>,
    pub boot: usize,
    pub seed: u64,
    pub eta: f64,
    pub studentize: Studentize,
    pub quantile_index: usize,
    pub counts: conjset_core::regions::RegionCounts,
    pub boundary_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

/// Reads a numeric CSV. A first row that does not parse as numbers is taken
/// as a header and skipped.
pub fn read_numeric_csv(path: &Path, what: &str) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::invalid(format!("{what}: cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::invalid(format!("{what}: {}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(_) => {
                return Err(CliError::invalid(format!(
                    "{what}: {} line {} is not numeric",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::invalid(format!(
            "{what}: {} has no numeric rows",
            path.display()
        )));
    }
    Ok(rows)
}

fn load_design(input: &ConditionInput, n: usize, index: usize) -> CliResult<DesignSpec> {
    let which = format!("condition {}", index + 1);
    let rows = match &input.design {
        Some(p) => read_numeric_csv(p, "design")?,
        None => vec![vec![1.0]; n],
    };
    let contrast = match &input.contrast {
        Some(p) => read_numeric_csv(p, "contrast")?.concat(),
        None if input.design.is_none() => vec![1.0],
        None => {
            return Err(CliError::invalid(format!(
                "contrast: {which} has a design matrix but no contrast"
            )))
        }
    };
    if rows.len() != n {
        return Err(CliError::invalid(format!(
            "design: {which} has {} rows but its stack has n = {n}",
            rows.len()
        )));
    }
    DesignSpec::new(&rows, contrast).map_err(|e| CliError::invalid(format!("design: {which}: {e}")))
}

fn load_inputs(cfg: &AnalyzeConfig) -> CliResult<Vec<(FieldStack, DesignSpec)>> {
    let mut stacks = Vec::with_capacity(cfg.conditions.len());
    for (i, c) in cfg.conditions.iter().enumerate() {
        let stack = load_field_stack(&c.stack).map_err(|e| match e {
            Error::Io(io) => {
                CliError::invalid(format!("stack: cannot read {}: {io}", c.stack.display()))
            }
            other => CliError::invalid(format!("stack: {}: {other}", c.stack.display())),
        })?;
        if let Some(first) = stacks.first().map(|s: &FieldStack| s.lattice()) {
            if stack.lattice() != first {
                return Err(CliError::invalid(format!(
                    "stack: condition {} is {}x{} but condition 1 is {}x{}",
                    i + 1,
                    stack.lattice().width(),
                    stack.lattice().height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        stacks.push(stack);
    }
    stacks
        .into_iter()
        .zip(&cfg.conditions)
        .enumerate()
        .map(|(i, (stack, c))| {
            let design = load_design(c, stack.n(), i)?;
            Ok((stack, design))
        })
        .collect()
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Runtime(e.into()))?;
            Ok(pool.install(f))
        }
    }
}

fn runtime(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(anyhow::anyhow!("{context}: {e}"))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(runtime(&path.display().to_string()))
}

/// Runs the analysis and writes every artifact into `cfg.out`.
pub fn analyze(cfg: &AnalyzeConfig) -> CliResult<AnalyzeReport> {
    cfg.validate()?;
    let spec = cfg.combine_spec()?;
    let data = load_inputs(cfg)?;
    let n: Vec<usize> = data.iter().map(|(s, _)| s.n()).collect();
    let lattice = data[0].0.lattice();
    let boot = BootstrapConfig {
        realizations: cfg.boot,
        alpha: cfg.alpha,
        seed: cfg.seed,
        studentize: cfg.studentize,
    };
    let start = Instant::now();
    let analysis: Analysis = with_threads(cfg.threads, || {
        analyze_with(data, &spec, &boot, cfg.eta, Execution::Parallel)
    })??;
    let seconds = start.elapsed().as_secs_f64();
    analysis.regions.ensure_nested()?;

    let out = &cfg.out;
    fs::create_dir_all(out).map_err(runtime(&out.display().to_string()))?;
    let r = &analysis.regions;
    for (name, mask) in [
        ("upper", &r.upper),
        ("point", &r.point),
        ("lower", &r.lower),
    ] {
        save_mask(out.join(format!("{name}.png")), mask)?;
        save_mask(out.join(format!("{name}.csv")), mask)?;
    }
    save_overlay_png(out.join("overlay.png"), &r.upper, &r.point, &r.lower)?;

    let boundary = out.join("boundary.csv");
    let mut w = BufWriter::new(fs::File::create(&boundary).map_err(runtime("boundary.csv"))?);
    analysis.segmentation.write_csv(&mut w, lattice)?;
    w.flush().map_err(runtime("boundary.csv"))?;

    if cfg.dump_boot {
        let mut w = BufWriter::new(
            fs::File::create(out.join("h_tilde.csv")).map_err(runtime("h_tilde.csv"))?,
        );
        let mut dump = || -> std::io::Result<()> {
            writeln!(w, "realization,h_tilde")?;
            for (b, h) in analysis.quantile.h_tilde.iter().enumerate() {
                writeln!(w, "{b},{h:?}")?;
            }
            w.flush()
        };
        dump().map_err(runtime("h_tilde.csv"))?;
    }

    let [upper, point, lower] = r.labels();
    let report = AnalyzeReport {
        labels: Labels {
            upper: upper.into(),
            point: point.into(),
            lower: lower.into(),
        },
        a: analysis.quantile.a,
        alpha: cfg.alpha,
        mode: cfg.mode,
        conditions: cfg.conditions.len(),
        thresholds: spec.thresholds().to_vec(),
        signs: spec.signs().to_vec(),
        width: lattice.width(),
        height: lattice.height(),
        n,
        boot: cfg.boot,
        seed: cfg.seed,
        eta: analysis.segmentation.eta,
        studentize: cfg.studentize,
        quantile_index: analysis.quantile.index,
        counts: r.counts(),
        boundary_points: analysis.segmentation.len(),
    };
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timing.json"), &Timing { seconds })?;
    Ok(report)
}

/// A grid of simulation settings; every combination is run.
#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub base: SimulationSpec,
    pub n: Vec<usize>,
    pub separation: Vec<f64>,
    pub ramp_k: Vec<f64>,
    pub noise_rho: Vec<f64>,
    pub alphas: Vec<f64>,
    pub naive: bool,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl SimulateConfig {
    fn grid(&self) -> Vec<SimulationSpec> {
        let pick = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let ns = if self.n.is_empty() {
            vec![self.base.n]
        } else {
            self.n.clone()
        };
        let mut out = Vec::new();
        for &n in &ns {
            for &separation in &pick(&self.separation, self.base.separation) {
                for &ramp_k in &pick(&self.ramp_k, self.base.ramp_k) {
                    for &noise_rho in &pick(&self.noise_rho, self.base.noise_rho) {
                        out.push(SimulationSpec {
                            n,
                            separation,
                            ramp_k,
                            noise_rho,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Runs every grid point and writes the reports as a JSON array to
/// `cfg.out`, timings next to it, and optional CSV rows.
pub fn simulate(
    cfg: &SimulateConfig,
    mut progress: impl FnMut(&CoverageReport),
) -> CliResult<Vec<CoverageReport>> {
    let alphas = if cfg.alphas.is_empty() {
        vec![cfg.base.boot.alpha]
    } else {
        cfg.alphas.clone()
    };
    let mut methods = vec![Method::Proposed];
    if cfg.naive {
        methods.push(Method::Naive);
    }
    let grid = cfg.grid();
    for spec in &grid {
        spec.validate()?;
    }
    let mut reports = Vec::new();
    for spec in grid {
        let per_method = with_threads(cfg.threads, || run_study(&spec, &methods, &alphas))??;
        for r in per_method.into_iter().flatten() {
            progress(&r);
            reports.push(r);
        }
    }
    if let Some(parent) = cfg.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime(&parent.display().to_string()))?;
    }
    write_json(&cfg.out, &reports)?;
    let timings: Vec<_> = reports.iter().map(|r| r.runtime).collect();
    write_json(&cfg.out.with_extension("timing.json"), &timings)?;
    if let Some(path) = &cfg.csv {
        let mut text = String::from(CSV_HEADER);
        text.push('\n');
        for r in &reports {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        fs::write(path, text).map_err(runtime(&path.display().to_string()))?;
    }
    Ok(reports)
}

/// Reads three masks (PNG or CSV) and writes the tri-colour overlay.
pub fn render(upper: &Path, point: &Path, lower: &Path, out: &Path) -> CliResult<()> {
    let load = |p: &Path, what: &str| {
        load_mask(p).map_err(|e| CliError::invalid(format!("{what}: {}: {e}", p.display())))
    };
    let (u, p, l) = (
        load(upper, "upper")?,
        load(point, "point")?,
        load(lower, "lower")?,
    );
    if u.lattice() != p.lattice() || p.lattice() != l.lattice() {
        return Err(CliError::invalid("masks differ in size"));
    }
    save_overlay_png(out, &u, &p, &l)?;
    Ok(())
}
