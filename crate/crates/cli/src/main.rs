use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pecsim::control::ControllerKind;
use pecsim::datagen::{distance_span, gen_occupancy, gen_weather, OccupancyProfile, WeatherProfile};
use pecsim::engine::{assemble_days, run_sweep, Manifest, ScenarioResult, SweepResult, SweepSpec};
use pecsim::io::{self, RobustnessRow, SummaryRow, WeatherSeries};
use pecsim::{Error, ErrorMatrix, OccupancyString, Season, SimConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Building HVAC simulator for studying occupancy forecast errors.
#[derive(Debug, Parser)]
#[command(name = "pecsim", version)]
struct Cli {
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic weather and occupancy data.
    Datagen(DatagenArgs),
    /// Pairwise Hamming distances between all occupancy strings.
    ErrorMatrix(ErrorMatrixArgs),
    /// Run one controller on one day, with optional erroneous forecasts.
    Simulate(SimulateArgs),
    /// Run controllers over days and error levels and compute robustness.
    Sweep(SweepArgs),
    /// Summarize a sweep or simulate output directory.
    Report(ReportArgs),
    /// Check a configuration file.
    ValidateConfig(ValidateArgs),
}

#[derive(Debug, Args)]
struct DatagenArgs {
    #[arg(long, value_parser = parse_season)]
    season: Season,
    /// Days with weather; these are the simulated days.
    #[arg(long)]
    days: usize,
    #[arg(long, default_value_t = 5)]
    rooms: usize,
    /// Extra occupancy-only days that enlarge the forecast pool.
    #[arg(long, default_value_t = 0)]
    history_days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ErrorMatrixArgs {
    #[arg(long)]
    occupancy: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    occupancy: PathBuf,
    #[arg(long)]
    weather: PathBuf,
    #[arg(long, value_parser = parse_season)]
    season: Season,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Day id as it appears in the occupancy file.
    #[arg(long)]
    day: String,
    #[arg(long)]
    controller: ControllerKind,
    /// Target forecast error; 0 runs the perfect-forecast baseline only.
    #[arg(long, default_value_t = 0.0)]
    error: f64,
    #[arg(long, default_value_t = 15)]
    replicates: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "ns,sa")]
    controllers: Vec<ControllerKind>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2")]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 15)]
    replicates: usize,
    /// Level whose per-day robustness is written separately.
    #[arg(long, default_value_t = 0.2)]
    day_level: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    /// Config whose robustness box is used; defaults to the built-in one.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    path: PathBuf,
}

fn parse_season(s: &str) -> Result<Season, String> {
    s.parse::<Season>().map_err(|e| e.to_string())
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn data(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.into(),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    data(format!("{}: {e}", path.display()))
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_INTERNAL,
                message: format!("worker pool: {e}"),
            })?;
    }
    let command_line = std::env::args().collect::<Vec<_>>().join(" ");
    match cli.command {
        Command::Datagen(a) => datagen(&a, &command_line),
        Command::ErrorMatrix(a) => error_matrix(&a),
        Command::Simulate(a) => simulate(&a, &command_line),
        Command::Sweep(a) => sweep(&a, &command_line),
        Command::Report(a) => report(&a),
        Command::ValidateConfig(a) => validate_config(&a),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            SimConfig::from_text(&text).map_err(|e| data(format!("{}: {e}", p.display())))
        }
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| io_err(path, e))
}

fn with_path<T>(path: &Path, r: pecsim::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn datagen(a: &DatagenArgs, command_line: &str) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    if a.days == 0 {
        return Err(usage("--days must be at least 1"));
    }
    if a.rooms == 0 {
        return Err(usage("--rooms must be at least 1"));
    }
    let occ_days = (a.days + a.history_days).max(2);
    let occ_profile = OccupancyProfile::with_seed(a.seed);
    let weather_profile = WeatherProfile::for_season(a.season, a.seed.wrapping_add(1));
    let strings = gen_occupancy(&occ_profile, occ_days, a.rooms, cfg.timebase.tau_fine)?;
    let weather = WeatherSeries {
        tau: cfg.timebase.tau_coarse,
        t_ex: gen_weather(&weather_profile, a.days, cfg.timebase.tau_coarse)?,
    };
    let (lo, hi) = distance_span(&strings)?;
    if lo > 0.02 || hi < 0.25 {
        eprintln!(
            "warning: pairwise distances span [{lo:.3}, {hi:.3}], which does not cover [0.02, 0.25]; \
             some error levels may lack forecast candidates"
        );
    }

    ensure_dir(&a.out)?;
    let occ_path = a.out.join("occupancy.csv");
    with_path(&occ_path, io::write_occupancy_csv(create(&occ_path)?, &strings))?;
    let weather_path = a.out.join("weather.csv");
    with_path(&weather_path, io::write_weather_csv(create(&weather_path)?, &weather))?;
    let manifest = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command_line,
        "season": a.season,
        "master_seed": a.seed,
        "config_hash": cfg.hash_hex(),
        "days": a.days,
        "occupancy_days": occ_days,
        "rooms": a.rooms,
        "occupancy_profile": occ_profile,
        "weather_profile": weather_profile,
        "distance_span": [lo, hi],
    });
    let path = a.out.join("manifest.json");
    with_path(&path, io::write_json(&path, &manifest))?;
    println!(
        "wrote {} occupancy rows and {} weather days to {}",
        strings.len(),
        a.days,
        a.out.display()
    );
    Ok(())
}

fn read_occupancy(path: &Path) -> CliResult<Vec<OccupancyString>> {
    with_path(path, io::read_occupancy_csv(open(path)?))
}

fn error_matrix(a: &ErrorMatrixArgs) -> CliResult<()> {
    let strings = read_occupancy(&a.occupancy)?;
    let matrix = with_path(&a.occupancy, ErrorMatrix::build(strings))?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    with_path(&a.out, io::write_error_matrix_csv(create(&a.out)?, &matrix))?;
    println!("wrote {0}x{0} matrix to {1}", matrix.n(), a.out.display());
    Ok(())
}

struct Loaded {
    cfg: SimConfig,
    strings: Vec<OccupancyString>,
    days: Vec<pecsim::engine::DayData>,
}

fn load_data(d: &DataArgs) -> CliResult<Loaded> {
    let cfg = load_config(d.config.as_deref())?;
    let strings = read_occupancy(&d.occupancy)?;
    let weather = with_path(&d.weather, io::read_weather_csv(open(&d.weather)?))?;
    if weather.tau != cfg.timebase.tau_coarse {
        return Err(data(format!(
            "{}: weather interval {} s differs from the configured {} s",
            d.weather.display(),
            weather.tau,
            cfg.timebase.tau_coarse
        )));
    }
    let days = assemble_days(&strings, &weather.t_ex, &cfg)?;
    Ok(Loaded { cfg, strings, days })
}

fn result_name(r: &ScenarioResult, baseline: bool) -> String {
    if baseline {
        format!("{}_{}_baseline.csv", r.controller, r.day_id)
    } else {
        format!("{}_{}_e{:.2}_r{:02}.csv", r.controller, r.day_id, r.error_level, r.replicate + 1)
    }
}

fn summary_rows(sweep: &SweepResult) -> Vec<SummaryRow> {
    sweep
        .baselines
        .iter()
        .map(SummaryRow::baseline)
        .chain(sweep.cells.iter().flat_map(|c| c.replicates.iter().map(SummaryRow::replicate)))
        .collect()
}

fn write_summary(dir: &Path, sweep: &SweepResult) -> CliResult<()> {
    let path = dir.join("summary.csv");
    with_path(&path, io::write_summary_csv(create(&path)?, &summary_rows(sweep)))
}

fn simulate(a: &SimulateArgs, command_line: &str) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.error) {
        return Err(usage("--error must lie in [0, 1]"));
    }
    if a.replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    let loaded = load_data(&a.data)?;
    let day = loaded
        .days
        .iter()
        .find(|d| d.day_id == a.day)
        .cloned()
        .ok_or_else(|| data(format!("day {} has no weather or is not in the occupancy file", a.day)))?;
    let matrix = with_path(&a.data.occupancy, ErrorMatrix::build(loaded.strings))?;
    let spec = SweepSpec {
        season: a.data.season,
        days: vec![day.clone()],
        controllers: vec![a.controller],
        error_levels: if a.error > 0.0 { vec![a.error] } else { vec![] },
        replicates: a.replicates,
        master_seed: a.data.seed,
        jobs: None,
        record_trace: true,
    };
    let result = run_sweep(&spec, &matrix, &loaded.cfg)?;
    if let Some(s) = result.skipped.first().filter(|_| a.controller.is_predictive()) {
        return Err(data(format!("day {} at error {}: {}", s.day_id, s.error_level, s.reason)));
    }

    ensure_dir(&a.data.out)?;
    let plans = a.data.out.join("plans");
    ensure_dir(&plans)?;
    let room_ids: Vec<String> = day.truth.iter().map(|s| s.room_id.clone()).collect();
    let runs = result
        .baselines
        .iter()
        .map(|r| (r, true))
        .chain(result.cells.iter().flat_map(|c| c.replicates.iter().map(|r| (r, false))));
    for (r, baseline) in runs {
        let name = result_name(r, baseline);
        let path = a.data.out.join(&name);
        with_path(&path, io::write_result_csv(create(&path)?, r, &room_ids))?;
        let path = plans.join(&name);
        with_path(&path, io::write_plan_csv(create(&path)?, r))?;
    }
    write_summary(&a.data.out, &result)?;
    let manifest = Manifest::for_sweep(command_line, &result, &loaded.cfg, vec![day.day_id.clone()]);
    let path = a.data.out.join("manifest.json");
    with_path(&path, io::write_json(&path, &manifest))?;

    let base = &result.baselines[0];
    println!(
        "{} {}: baseline E = {:.2} kWh, D = {:.2}%",
        base.controller, base.day_id, base.energy_kwh, base.discomfort_pct
    );
    for c in &result.cells {
        println!(
            "error {:.2}: {} replicates, robustness {:.1}%",
            c.error_level,
            c.replicates.len(),
            c.robustness
        );
    }
    Ok(())
}

fn level_tag(level: f64) -> String {
    format!("e{level:.2}")
}

fn sweep(a: &SweepArgs, command_line: &str) -> CliResult<()> {
    if a.controllers.is_empty() {
        return Err(usage("--controllers must name at least one controller"));
    }
    let loaded = load_data(&a.data)?;
    let matrix = with_path(&a.data.occupancy, ErrorMatrix::build(loaded.strings))?;
    // Level 0 is covered by the baselines.
    let levels: Vec<f64> = a.levels.iter().copied().filter(|&l| l != 0.0).collect();
    let spec = SweepSpec {
        season: a.data.season,
        days: loaded.days.clone(),
        controllers: a.controllers.clone(),
        error_levels: levels,
        replicates: a.replicates,
        master_seed: a.data.seed,
        jobs: None,
        record_trace: false,
    };
    let result = run_sweep(&spec, &matrix, &loaded.cfg)?;
    for s in &result.skipped {
        eprintln!("warning: skipped day {} at error {}: {}", s.day_id, s.error_level, s.reason);
    }

    let out = &a.data.out;
    ensure_dir(out)?;
    let mut plotted = a.levels.clone();
    plotted.sort_by(f64::total_cmp);
    plotted.dedup();
    for &level in &plotted {
        let path = out.join(format!("scatter_{}.csv", level_tag(level)));
        with_path(&path, io::write_rows(create(&path)?, &io::scatter_rows(&result, level)))?;
    }
    write_summary(out, &result)?;
    let (table, per_day) = with_path(out, io::robustness_from_summary(&summary_rows(&result), &loaded.cfg.robustness))?;
    let path = out.join("robustness.csv");
    with_path(&path, io::write_rows(create(&path)?, &table))?;
    let path = out.join("robustness_by_day.csv");
    with_path(&path, io::write_rows(create(&path)?, &per_day))?;
    let chosen: Vec<_> = per_day.iter().filter(|r| r.error_level == a.day_level).cloned().collect();
    let path = out.join(format!("robustness_by_day_{}.csv", level_tag(a.day_level)));
    with_path(&path, io::write_rows(create(&path)?, &chosen))?;
    let days = loaded.days.iter().map(|d| d.day_id.clone()).collect();
    let manifest = Manifest::for_sweep(command_line, &result, &loaded.cfg, days);
    let path = out.join("manifest.json");
    with_path(&path, io::write_json(&path, &manifest))?;
    print!("{}", render_markdown(&table));
    Ok(())
}

fn render_markdown(rows: &[RobustnessRow]) -> String {
    let mut s = String::from("| controller | error level | robustness % | std | days |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.2} | {:.2} | {} |",
            r.controller, r.error_level, r.mean, r.std, r.n_days
        );
    }
    s
}

fn report(a: &ReportArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let path = a.dir.join("summary.csv");
    let rows = if path.exists() {
        with_path(&path, io::read_summary_csv(open(&path)?))?
    } else {
        Vec::new()
    };
    let (table, _) = with_path(&path, io::robustness_from_summary(&rows, &cfg.robustness))?;
    if table.is_empty() {
        return Err(data(format!("no results in {}", a.dir.display())));
    }
    match a.format {
        Format::Md => print!("{}", render_markdown(&table)),
        Format::Csv => with_path(&path, io::write_rows(std::io::stdout().lock(), &table))?,
    }
    Ok(())
}

fn validate_config(a: &ValidateArgs) -> CliResult<()> {
    let cfg = load_config(Some(&a.path))?;
    println!("ok {}", cfg.hash_hex());
    Ok(())
}
