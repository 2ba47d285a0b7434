//! `odpc` command-line tool: fit, forecast, select lags, evaluate and run
//! Monte Carlo comparisons.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use odpc::selection::{
    rolling_origin_evaluate, select_lags_stepwise_bic, select_lags_stepwise_cv, EvaluationConfig, ForecastMethod,
    SelectionOptions, TargetMode,
};
use odpc::simulate::{run_monte_carlo, DgpKind, MonteCarloConfig};
use odpc::{fit_odpc, forecast_panel, AUpdate, FitOptions, LagSpec, ODPCModel, OdpcError, TimeSeriesPanel};
use serde_json::{json, Value};

const DEFAULTS: &str = "Defaults: tolerance (delta) = 1e-4, max iterations = 500, max AR order = 10, K_max = 5.\n\
Exit status: 0 success, 1 numerical or runtime failure, 2 configuration or input error.";

#[derive(Parser, Debug)]
#[command(name = "odpc", version, about = "One-sided dynamic principal components", after_help = DEFAULTS)]
struct Cli {
    /// Worker threads for simulate, evaluate and select-lags (0 = all cores).
    #[arg(long, global = true, env = "ODPC_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a sequence of components and write the model as JSON.
    Fit(FitArgs),
    /// Forecast every series from a fitted model.
    Forecast(ForecastArgs),
    /// Monte Carlo PMSE comparison on simulated panels.
    Simulate(SimulateArgs),
    /// Rolling-origin out-of-sample evaluation.
    Evaluate(EvaluateArgs),
    /// Stepwise choice of the number of components and their lags.
    SelectLags(SelectArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Panel CSV: one row per period, one column per series.
    #[arg(long)]
    input: PathBuf,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

impl InputArgs {
    fn load(&self) -> Result<TimeSeriesPanel, OdpcError> {
        if !self.delimiter.is_ascii() {
            return Err(OdpcError::InvalidParameter("delimiter must be an ASCII character".into()));
        }
        TimeSeriesPanel::load_csv(
            &self.input,
            odpc::panel::CsvOptions {
                header: !self.no_header,
                delimiter: self.delimiter as u8,
            },
        )
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AUpdateArg {
    Auto,
    Full,
    Cd,
}

#[derive(Args, Debug, Clone)]
struct FitArgsCommon {
    /// Relative MSE decrease at which iteration stops.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Weight update: full least squares, coordinate descent, or chosen by size.
    #[arg(long, value_enum, default_value_t = AUpdateArg::Auto)]
    a_update: AUpdateArg,
}

impl FitArgsCommon {
    fn options(&self) -> FitOptions {
        FitOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            a_update: match self.a_update {
                AUpdateArg::Auto => AUpdate::Auto,
                AUpdateArg::Full => AUpdate::FullLeastSquares,
                AUpdateArg::Cd => AUpdate::CoordinateDescent,
            },
            ..FitOptions::default()
        }
    }

    fn describe(&self) -> String {
        format!(
            "tolerance={} max_iterations={} a_update={:?}",
            self.tolerance, self.max_iterations, self.a_update
        )
        .to_lowercase()
    }
}

fn parse_lag_spec(s: &str) -> Result<LagSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected k1,k2 but got '{s}'"));
    }
    let parse = |name: &str, v: &str| -> Result<usize, String> {
        let n: i64 = v.parse().map_err(|_| format!("{name} must be an integer, got '{v}'"))?;
        usize::try_from(n).map_err(|_| format!("{name} must be ≥ 0"))
    };
    Ok(LagSpec::new(parse("k1", parts[0])?, parse("k2", parts[1])?))
}

fn specs_label(specs: &[LagSpec]) -> String {
    specs.iter().map(|s| format!("{},{}", s.k1, s.k2)).collect::<Vec<_>>().join(";")
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Lags `k1,k2` of one component; repeat for further components.
    #[arg(long, required = true, allow_hyphen_values = true, value_parser = parse_lag_spec)]
    lags: Vec<LagSpec>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgsCommon,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Maximum AR order for component forecasts.
    #[arg(long, default_value_t = 10)]
    max_order: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid_cell(s: &str) -> Result<(usize, usize), String> {
    let (t, m) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected TxM, got '{s}'"))?;
    let t = t.trim().parse().map_err(|_| format!("bad T in '{s}'"))?;
    let m = m.trim().parse().map_err(|_| format!("bad m in '{s}'"))?;
    Ok((t, m))
}

fn parse_dgp(s: &str) -> Result<DgpKind, String> {
    s.parse().map_err(|e: OdpcError| e.to_string())
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// DGPs: DFM1, DFM1AR, DFM2, DFM2AR, VARMA (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_dgp, required = true)]
    dgp: Vec<DgpKind>,
    /// `TxM` cells (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_grid_cell, default_value = "100x100")]
    grid: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    max_order: usize,
    /// Report CSV (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the formatted table here.
    #[arg(long)]
    table: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgsCommon,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Odpc,
    Sw,
    Ar,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    LevelSum,
    LastValue,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Odpc)]
    method: MethodArg,
    /// Component lags for `--method odpc`; repeat for further components.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_lag_spec, default_value = "1,1")]
    lags: Vec<LagSpec>,
    /// Static factors for `--method sw`.
    #[arg(long, default_value_t = 2)]
    factors: usize,
    /// Trailing window length.
    #[arg(long)]
    window: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    horizons: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    origins: usize,
    /// Target series by name (comma separated; all when omitted).
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::LevelSum)]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    max_order: usize,
    /// Long-format error CSV (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary with RMSE and relative RMSE per series and horizon.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgsCommon,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Criterion {
    Cv,
    Bic,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = Criterion::Cv)]
    criterion: Criterion,
    /// Largest candidate k (k1 = k2 = k).
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    /// Forecast horizon of the cross-validation error.
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Cross-validation origins.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    max_components: usize,
    #[arg(long, default_value_t = 10)]
    max_order: usize,
    /// Result JSON (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgsCommon,
}

/// Provenance lines: version and the effective configuration. The thread
/// count is deliberately left out so reports do not depend on it.
fn provenance(command: &str, config: &str) -> String {
    format!(
        "# odpc {} {command}\n# config: {config}\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn provenance_json(command: &str, config: &str) -> Value {
    json!({ "version": env!("CARGO_PKG_VERSION"), "command": command, "config": config })
}

fn with_provenance(mut v: Value, command: &str, config: &str) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("provenance".into(), provenance_json(command, config));
    }
    v
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), OdpcError> {
    match path {
        Some(p) => fs::write(p, content).map_err(OdpcError::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> Result<String, OdpcError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn cmd_fit(args: &FitArgs) -> Result<(), OdpcError> {
    let panel = args.input.load()?;
    let options = args.fit.options();
    let model = fit_odpc(&panel, &args.lags, &options)?;
    let config = format!(
        "input={} lags={} {}",
        args.input.input.display(),
        specs_label(&args.lags),
        args.fit.describe()
    );
    let v: Value = serde_json::from_str(&model.to_json()?)?;
    fs::write(&args.out, pretty(&with_provenance(v, "fit", &config))?)?;
    println!("fitted {} component(s) on T={} m={}", model.components().len(), panel.periods(), panel.series());
    println!("component,k1,k2,mse,iterations,converged");
    for (i, c) in model.components().iter().enumerate() {
        println!("{},{},{},{},{},{}", i + 1, c.k1, c.k2, c.mse, c.iterations, c.converged);
    }
    Ok(())
}

fn cmd_forecast(args: &ForecastArgs) -> Result<(), OdpcError> {
    let panel = args.input.load()?;
    let text = fs::read_to_string(&args.model)?;
    let model = ODPCModel::from_json(&text, &panel)?;
    let fc = forecast_panel(&model, args.horizon, args.max_order)?;
    let config = format!(
        "input={} model={} horizon={} max_order={}",
        args.input.input.display(),
        args.model.display(),
        args.horizon,
        args.max_order
    );
    let content = match args.format {
        Format::Json => {
            let v = serde_json::to_value(&fc)?;
            pretty(&with_provenance(v, "forecast", &config))?
        }
        Format::Csv => {
            let mut out = provenance("forecast", &config);
            out.push_str("step,");
            out.push_str(&fc.series_names.join(","));
            out.push('\n');
            for (s, row) in fc.values.row_iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("{},{}\n", s + 1, cells.join(",")));
            }
            out
        }
    };
    write_output(args.out.as_deref(), &content)
}

fn cmd_simulate(args: &SimulateArgs, threads: usize) -> Result<(), OdpcError> {
    let config = MonteCarloConfig {
        dgps: args.dgp.clone(),
        grid: args.grid.clone(),
        replications: args.reps,
        base_seed: args.seed,
        threads,
        method_groups: None,
        fit: args.fit.options(),
        max_order: args.max_order,
    };
    let label = format!(
        "dgp={} grid={} reps={} seed={} max_order={} {}",
        args.dgp.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        args.grid.iter().map(|(t, m)| format!("{t}x{m}")).collect::<Vec<_>>().join(","),
        args.reps,
        args.seed,
        args.max_order,
        args.fit.describe()
    );
    info!("running {label}");
    let report = run_monte_carlo(&config)?;
    let header = provenance("simulate", &label);
    let table = report.to_table();
    if let Some(path) = &args.table {
        fs::write(path, format!("{header}{table}"))?;
    }
    write_output(args.out.as_deref(), &format!("{header}{}", report.to_csv()))?;
    if args.out.is_some() {
        print!("{table}");
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), OdpcError> {
    let panel = args.input.load()?;
    let targets = args
        .targets
        .iter()
        .map(|name| {
            panel
                .series_names()
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| OdpcError::InvalidParameter(format!("unknown target series '{name}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let method = match args.method {
        MethodArg::Odpc => ForecastMethod::Odpc {
            lag_specs: args.lags.clone(),
            fit: args.fit.options(),
            max_order: args.max_order,
        },
        MethodArg::Sw => ForecastMethod::StaticFactors {
            factors: args.factors,
            max_order: args.max_order,
        },
        MethodArg::Ar => ForecastMethod::UnivariateAr {
            max_order: args.max_order,
        },
    };
    let config = EvaluationConfig {
        window: args.window,
        horizons: args.horizons.clone(),
        n_origins: args.origins,
        targets,
        mode: match args.mode {
            ModeArg::LevelSum => TargetMode::LevelSum,
            ModeArg::LastValue => TargetMode::LastValue,
        },
        baseline_max_order: args.max_order,
    };
    let report = rolling_origin_evaluate(&panel, &method, &config)?;
    let label = format!(
        "input={} method={:?} lags={} factors={} window={} horizons={:?} origins={} mode={:?} max_order={} {}",
        args.input.input.display(),
        args.method,
        specs_label(&args.lags),
        args.factors,
        args.window,
        args.horizons,
        args.origins,
        args.mode,
        args.max_order,
        args.fit.describe()
    )
    .to_lowercase();
    if let Some(path) = &args.summary {
        let v = serde_json::to_value(&report.summary)?;
        let v = json!({ "method": report.method, "summary": v });
        fs::write(path, pretty(&with_provenance(v, "evaluate", &label))?)?;
    }
    write_output(
        args.out.as_deref(),
        &format!("{}{}", provenance("evaluate", &label), report.errors_csv()),
    )
}

fn cmd_select(args: &SelectArgs) -> Result<(), OdpcError> {
    let panel = args.input.load()?;
    let options = SelectionOptions {
        fit: args.fit.options(),
        max_order: args.max_order,
        max_components: args.max_components,
    };
    let result = match args.criterion {
        Criterion::Cv => select_lags_stepwise_cv(&panel, args.k_max, args.horizon, args.folds, &options)?,
        Criterion::Bic => select_lags_stepwise_bic(&panel, args.k_max, &options)?,
    };
    let label = format!(
        "input={} criterion={:?} k_max={} horizon={} folds={} max_components={} max_order={} {}",
        args.input.input.display(),
        args.criterion,
        args.k_max,
        args.horizon,
        args.folds,
        args.max_components,
        args.max_order,
        args.fit.describe()
    )
    .to_lowercase();
    let v = with_provenance(serde_json::to_value(&result)?, "select-lags", &label);
    write_output(args.out.as_deref(), &pretty(&v)?)
}

fn run(cli: &Cli) -> Result<(), OdpcError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Simulate(a) => cmd_simulate(a, cli.threads),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::SelectLags(a) => cmd_select(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Only fails if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
