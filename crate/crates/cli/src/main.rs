use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use flatmeasure::cascade::{
    check_schedule, decay_exponent, default_r1, kappa_search, make_schedule, predicted_exponent, run_cascade_with,
    terminal_scale, BoundConstants, DEFAULT_A,
};
use flatmeasure::doubling::{
    density_estimate, doubling_profile, reliable_radii, write_doubling_csv, write_ratio_csv, DEFAULT_T,
    MIN_BALL_SAMPLES,
};
use flatmeasure::fit::radius_grid;
use flatmeasure::flatness::{classify_points, flatness_profile, profile_json, DEFAULT_RESOLUTION};
use flatmeasure::generators::{generate, GeneratorKind, GeneratorParams, GeneratorSpec};
use flatmeasure::io::{load_cloud, save_cloud, CloudFormat};
use flatmeasure::moments::{moment_form, spectrum_report};
use flatmeasure::{Error, WeightedCloud};

const SCHEMA_VERSION: u32 = 1;

/// Multiscale flatness and doubling statistics for weighted point clouds.
#[derive(Parser, Debug)]
#[command(name = "flatmeasure", version)]
struct Cli {
    /// Worker threads; defaults to all cores. Output does not depend on it.
    #[arg(long, global = true, env = "FLATMEASURE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a reference measure and write it with a sidecar.
    Generate(GenerateArgs),
    /// Flatness, doubling, density and moment profiles at given centers.
    Analyze(AnalyzeArgs),
    /// Run the normal-frame cascade at one center.
    Cascade(CascadeArgs),
    /// Label centers regular or singular.
    Classify(ClassifyArgs),
    /// Print the exponent ledger of a schedule.
    Schedule(ScheduleArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// plane, sphere, kp_cone, holder_graph or perturbed_density.
    #[arg(long)]
    kind: GeneratorKind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Number of samples.
    #[arg(long = "N", default_value_t = 100_000)]
    count: usize,
    #[arg(long, default_value_t = 1.0)]
    extent: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    density_c: Option<f64>,
    #[arg(long)]
    density_alpha: Option<f64>,
    /// Output path; `.jsonl` or `.ndjson` selects JSON lines, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Intrinsic dimension, when the file has no sidecar.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, default_value_t = 0.5)]
    r_max: f64,
    /// Smallest radius; by default the grid stops where a ball holds fewer
    /// than 500 samples.
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated coordinates; repeat for several centers.
    #[arg(long = "center", required = true, value_parser = parse_point)]
    centers: Vec<Point>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for plot-ready CSV files.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CascadeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_point)]
    center: Point,
    /// Defaults to the best feasible κ for `alpha`.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Starting radius; defaults to half the largest radius with density ratio within 10% of 1.
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    r_max: f64,
    #[arg(long, default_value_t = 1.0)]
    constant: f64,
    #[arg(long, default_value_t = 1.0)]
    c_k: f64,
    #[arg(long, default_value_t = DEFAULT_A)]
    a: f64,
    /// Run even when the exponent ledger has failing inequalities.
    #[arg(long)]
    allow_failing_ledger: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long = "center", required = true, value_parser = parse_point)]
    centers: Vec<Point>,
    #[arg(long, default_value_t = 0.3)]
    eta: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[arg(long)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A point given on the command line as comma-separated coordinates.
#[derive(Debug, Clone)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad coordinate '{t}': {e}")))
        .collect::<Result<_, _>>()
        .map(Point)
}

fn coords(points: &[Point]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.0.clone()).collect()
}

/// A failure with its exit code: 2 usage/config, 3 data, 4 numerical.
struct Failure {
    code: u8,
    message: String,
    report: Option<Value>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_)
            | Error::KappaTooLarge(_)
            | Error::AlphaTooSmall { .. }
            | Error::LedgerFailed(_)
            | Error::EmptyFeasibleRegion(_) => 2,
            Error::InvalidData(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::DimensionMismatch { .. } => 3,
            _ => 4,
        };
        Failure {
            code,
            message: e.to_string(),
            report: None,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e).into()
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Cascade(a) => cmd_cascade(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Schedule(a) => cmd_schedule(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(r) = f.report {
                if let Ok(s) = serde_json::to_string_pretty(&r) {
                    let _ = writeln!(io::stdout().lock(), "{s}");
                }
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn report(command: &str, config: impl Serialize, results: Value) -> Result<Value, Failure> {
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": serde_json::to_value(config)?,
        "results": results,
    }))
}

fn emit(value: &Value, out: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            writeln!(w, "{text}")?;
        }
    }
    Ok(())
}

fn check_output(out: Option<&Path>) -> CliResult {
    if let Some(dir) = out.and_then(Path::parent).filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(Error::InvalidParameter(format!("output directory {} does not exist", dir.display())).into());
        }
    }
    Ok(())
}

fn load(input: &InputArgs) -> Result<WeightedCloud, Failure> {
    if !input.input.is_file() {
        return Err(Failure {
            code: 2,
            message: format!("input file {} not found", input.input.display()),
            report: None,
        });
    }
    Ok(load_cloud(&input.input, input.n)?)
}

fn check_centers(cloud: &WeightedCloud, centers: &[Vec<f64>]) -> CliResult {
    for c in centers {
        if c.len() != cloud.dim() {
            return Err(Error::InvalidParameter(format!(
                "center has {} coordinates, cloud lives in dimension {}",
                c.len(),
                cloud.dim()
            ))
            .into());
        }
    }
    Ok(())
}

fn center_radii(cloud: &WeightedCloud, x: &[f64], grid: &GridArgs) -> flatmeasure::Result<Vec<f64>> {
    match grid.r_min {
        Some(r_min) => Ok(radius_grid(grid.r_max, r_min)),
        None => reliable_radii(cloud, x, grid.r_max, MIN_BALL_SAMPLES),
    }
}

fn cmd_generate(a: GenerateArgs) -> CliResult {
    check_output(Some(&a.out))?;
    let mut spec = GeneratorSpec::new(a.kind, a.count, a.extent, a.seed);
    if a.n.is_some() || a.m.is_some() {
        let (n, m) = (a.n.unwrap_or(spec.n), a.m.unwrap_or(spec.m));
        spec = spec.with_dims(n, m);
    }
    let defaults = GeneratorParams::default();
    spec = spec.with_params(GeneratorParams {
        beta0: a.beta0.unwrap_or(defaults.beta0),
        amplitude: a.amplitude.unwrap_or(defaults.amplitude),
        density_c: a.density_c.unwrap_or(defaults.density_c),
        density_alpha: a.density_alpha.unwrap_or(defaults.density_alpha),
    });
    spec.validate()?;
    let cloud = generate(&spec)?;
    save_cloud(&cloud, &a.out, CloudFormat::from_path(&a.out))?;
    eprintln!("wrote {} points to {}", cloud.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeConfig<'a> {
    input: &'a Path,
    n: usize,
    m: usize,
    centers: &'a [Vec<f64>],
    r_max: f64,
    r_min: Option<f64>,
    resolution: usize,
    t_values: &'a [f64],
}

fn analyze_center(cloud: &WeightedCloud, id: usize, x: &[f64], grid: &GridArgs) -> Value {
    let radii = match center_radii(cloud, x, grid) {
        Ok(r) if r.len() >= 2 => r,
        Ok(r) => {
            return json!({"center_id": id, "center": x, "warning": format!("only {} usable radii", r.len())});
        }
        Err(e) => return json!({"center_id": id, "center": x, "warning": e.to_string()}),
    };
    let mut entry = json!({"center_id": id, "center": x, "radii": radii});
    let mut warnings = Vec::new();
    match flatness_profile(cloud, x, &radii, grid.resolution) {
        Ok(p) => {
            entry["flat"] = json!(!p.non_flat);
            entry["flatness"] = profile_json(id, &p);
        }
        Err(e) => warnings.push(format!("flatness: {e}")),
    }
    match doubling_profile(cloud, x, &radii, &DEFAULT_T) {
        Ok(p) => entry["doubling"] = json!(p),
        Err(e) => warnings.push(format!("doubling: {e}")),
    }
    match density_estimate(cloud, x, &radii) {
        Ok(d) => entry["density"] = json!(d),
        Err(e) => warnings.push(format!("density: {e}")),
    }
    let moments: Vec<Value> = radii
        .iter()
        .map(|&r| match moment_form(cloud, x, r) {
            Ok(p) => json!({"pair": p, "spectrum": spectrum_report(&p, None)}),
            Err(e) => json!({"radius": r, "warning": e.to_string()}),
        })
        .collect();
    entry["moments"] = json!(moments);
    if !warnings.is_empty() {
        entry["warnings"] = json!(warnings);
    }
    entry
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult {
    check_output(a.out.as_deref())?;
    if let Some(d) = &a.csv_dir {
        fs::create_dir_all(d)?;
    }
    let cloud = load(&a.input)?;
    let centers = coords(&a.centers);
    check_centers(&cloud, &centers)?;
    let entries: Vec<Value> = centers
        .iter()
        .enumerate()
        .map(|(i, c)| analyze_center(&cloud, i, c, &a.grid))
        .collect();
    let all_flat = entries.iter().all(|e| e["flat"] == json!(true));
    if let Some(dir) = &a.csv_dir {
        write_csvs(&cloud, &centers, &a.grid, dir)?;
    }
    let config = AnalyzeConfig {
        input: &a.input.input,
        n: cloud.n(),
        m: cloud.dim(),
        centers: &centers,
        r_max: a.grid.r_max,
        r_min: a.grid.r_min,
        resolution: a.grid.resolution,
        t_values: &DEFAULT_T,
    };
    let value = report("analyze", config, json!({"summary": {"flat": all_flat}, "centers": entries}))?;
    emit(&value, a.out.as_deref())
}

fn write_csvs(cloud: &WeightedCloud, centers: &[Vec<f64>], grid: &GridArgs, dir: &Path) -> CliResult {
    let mut doubling = Vec::new();
    let mut density = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        let Ok(radii) = center_radii(cloud, c, grid) else { continue };
        if radii.len() < 2 {
            continue;
        }
        if let Ok(p) = doubling_profile(cloud, c, &radii, &DEFAULT_T) {
            doubling.push((i, p));
        }
        if let Ok(d) = density_estimate(cloud, c, &radii) {
            density.push((i, d));
        }
    }
    let mut w = BufWriter::new(File::create(dir.join("doubling.csv"))?);
    write_doubling_csv(&mut w, &doubling.iter().map(|(i, p)| (*i, p)).collect::<Vec<_>>())?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("density.csv"))?);
    write_ratio_csv(&mut w, &density.iter().map(|(i, d)| (*i, d)).collect::<Vec<_>>())?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CascadeConfig<'a> {
    input: &'a Path,
    n: usize,
    m: usize,
    center: &'a [f64],
    kappa: f64,
    alpha: f64,
    r1: f64,
    r_max: f64,
    constants: BoundConstants,
    allow_failing_ledger: bool,
}

fn cmd_cascade(a: CascadeArgs) -> CliResult {
    check_output(a.out.as_deref())?;
    let cloud = load(&a.input)?;
    let center = a.center.0.clone();
    check_centers(&cloud, std::slice::from_ref(&center))?;
    let k = cloud.dim() - cloud.n();
    let kappa = match a.kappa {
        Some(v) => v,
        None => kappa_search(a.alpha, k)?.kappa,
    };
    let schedule = make_schedule(kappa, a.alpha, k)?;
    let ledger = check_schedule(&schedule);
    if !ledger.all_hold && !a.allow_failing_ledger {
        return Err(Failure {
            code: 2,
            message: format!("schedule κ = {kappa}, α = {} fails its exponent ledger", a.alpha),
            report: Some(json!({"schema_version": SCHEMA_VERSION, "command": "cascade", "ledger": ledger})),
        });
    }
    let r1 = match a.r1 {
        Some(r) => r,
        None => default_r1(&cloud, &center, a.r_max, a.r_max * 1e-3)?,
    };
    let constants = BoundConstants {
        c: a.constant,
        c_k: a.c_k,
        a: a.a,
    };
    let result = run_cascade_with(&cloud, &center, r1, &schedule, &constants)?;
    let config = CascadeConfig {
        input: &a.input.input,
        n: cloud.n(),
        m: cloud.dim(),
        center: &center,
        kappa,
        alpha: a.alpha,
        r1,
        r_max: a.r_max,
        constants,
        allow_failing_ledger: a.allow_failing_ledger,
    };
    let value = report("cascade", config, json!({"cascade": result, "ledger": ledger}))?;
    emit(&value, a.out.as_deref())
}

#[derive(Serialize)]
struct ClassifyConfig<'a> {
    input: &'a Path,
    n: usize,
    m: usize,
    centers: &'a [Vec<f64>],
    eta: f64,
    r_max: f64,
    r_min: f64,
    resolution: usize,
}

fn cmd_classify(a: ClassifyArgs) -> CliResult {
    check_output(a.out.as_deref())?;
    let cloud = load(&a.input)?;
    let centers = coords(&a.centers);
    check_centers(&cloud, &centers)?;
    let r_min = a.grid.r_min.unwrap_or(a.grid.r_max * 1e-3);
    let radii = radius_grid(a.grid.r_max, r_min);
    let result = classify_points(&cloud, &centers, a.eta, &radii, a.grid.resolution)?;
    let config = ClassifyConfig {
        input: &a.input.input,
        n: cloud.n(),
        m: cloud.dim(),
        centers: &centers,
        eta: a.eta,
        r_max: a.grid.r_max,
        r_min,
        resolution: a.grid.resolution,
    };
    let value = report("classify", config, json!(result))?;
    emit(&value, a.out.as_deref())
}

#[derive(Serialize)]
struct ScheduleConfig {
    kappa: f64,
    alpha: f64,
    k: usize,
}

fn cmd_schedule(a: ScheduleArgs) -> CliResult {
    check_output(a.out.as_deref())?;
    let schedule = make_schedule(a.kappa, a.alpha, a.k)?;
    let ledger = check_schedule(&schedule);
    let results = json!({
        "schedule": schedule,
        "ledger": ledger,
        "exponent": predicted_exponent(&schedule).ok(),
        "exponent_formula": decay_exponent(a.kappa),
        "terminal_scale_at_half": terminal_scale(&schedule, 0.5),
    });
    let value = report(
        "schedule",
        ScheduleConfig {
            kappa: a.kappa,
            alpha: a.alpha,
            k: a.k,
        },
        results,
    )?;
    if ledger.all_hold {
        emit(&value, a.out.as_deref())
    } else {
        Err(Failure {
            code: 2,
            message: format!("ledger fails for κ = {}, α = {}", a.kappa, a.alpha),
            report: Some(value),
        })
    }
}
