use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mondrian_core::bayesopt::{run_bayesopt, BoConfig, CandidateGrid, TableObjective};
use mondrian_core::benchmarks::{sine_dataset, Benchmark};
use mondrian_core::eval::{evaluate, DEFAULT_LEVELS};
use mondrian_core::io::{apply_log_cols, format_float, load_csv, read_table, write_csv, write_table, DatasetSpec, LabelColumn};
use mondrian_core::persist::{load_model_from_path, save_model_to_path};
use mondrian_core::{ForestConfig, ForestModel, PosteriorMode, Scaler, TrainingSlice};

#[derive(Parser)]
#[command(name = "mondrian", version, about = "Mondrian forest regression and grid Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest on a labelled CSV file and write the model file.
    Train(TrainArgs),
    /// Per-row predictive mean and standard deviation (and NLPD with labels).
    Predict(PredictArgs),
    /// RMSE, NLPD and the calibration table on a labelled CSV file.
    Evaluate(EvaluateArgs),
    /// Maximize an objective over a candidate grid.
    Bayesopt(BayesoptArgs),
    /// Write a synthetic dataset or a benchmark grid.
    Benchgen(BenchgenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Fast,
}

impl From<Mode> for PosteriorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => PosteriorMode::ExactBp,
            Mode::Fast => PosteriorMode::FastEmpirical,
        }
    }
}

#[derive(Args)]
struct TableFormat {
    /// Field delimiter (a single character).
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// The first line holds data rather than column names.
    #[arg(long)]
    no_header: bool,
}

impl TableFormat {
    fn delimiter(&self) -> Result<u8> {
        u8::try_from(self.delimiter).ok().filter(u8::is_ascii).context("delimiter must be a single ASCII character")
    }

    fn dataset(&self, path: &Path, label: &str) -> Result<DatasetSpec> {
        Ok(DatasetSpec {
            path: path.to_path_buf(),
            label: LabelColumn::parse(label),
            delimiter: self.delimiter()?,
            header: !self.no_header,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training data.
    #[arg(long)]
    data: PathBuf,
    /// Label column, by header name or 0-based index.
    #[arg(long, default_value = "y")]
    label: String,
    /// Where to write the model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 10)]
    min_samples_split: usize,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Master seed; drawn from the OS and reported on stderr when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    format: TableFormat,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Rows to predict.
    #[arg(long)]
    input: PathBuf,
    /// Label column in the input; adds a per-row `nlpd` column.
    #[arg(long)]
    label: Option<String>,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    format: TableFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    /// One `level,observed,delta` row per level.
    Rows,
    /// Levels as columns, with a single row of deltas.
    Columns,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    label: String,
    /// Comma-separated interval levels in (0, 1).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Layout::Rows)]
    layout: Layout,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    format: TableFormat,
}

#[derive(Args)]
struct BayesoptArgs {
    /// Grid file: one candidate per row.
    #[arg(long, required_unless_present = "benchmark")]
    grid: Option<PathBuf>,
    /// Column of the grid file holding precomputed objective values.
    #[arg(long, requires = "grid", conflicts_with = "benchmark")]
    objective_col: Option<String>,
    /// Built-in objective (branin or hartmann6), evaluated on unit-cube points.
    #[arg(long, value_parser = parse_benchmark)]
    benchmark: Option<Benchmark>,
    /// Size of the random grid used when no grid file is given.
    #[arg(long, default_value_t = 10_000, conflicts_with = "grid")]
    grid_size: usize,
    /// Seed of the random grid used when no grid file is given.
    #[arg(long, default_value_t = 0, conflicts_with = "grid")]
    grid_seed: u64,
    /// Comma-separated 0-based feature columns to log-transform first.
    #[arg(long, value_delimiter = ',', requires = "grid")]
    log_cols: Vec<usize>,
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 2)]
    n_init: usize,
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    #[arg(long, value_enum, default_value_t = Mode::Fast)]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    format: TableFormat,
}

#[derive(Args)]
struct BenchgenArgs {
    #[command(subcommand)]
    what: BenchgenKind,
}

#[derive(Subcommand)]
enum BenchgenKind {
    /// Noisy `sin(x)` on `[lo, hi]`, columns `x0,y`.
    Sine {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Uniform unit-cube grid for a built-in benchmark, with its negated
    /// objective as the last column.
    Grid {
        #[arg(long, value_parser = parse_benchmark)]
        benchmark: Benchmark,
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_benchmark(s: &str) -> std::result::Result<Benchmark, String> {
    Benchmark::parse(s).ok_or_else(|| format!("unknown benchmark '{s}' (expected branin or hartmann6)"))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn train(args: TrainArgs) -> Result<()> {
    let slice = load_csv(&args.format.dataset(&args.data, &args.label)?)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let config = ForestConfig {
        num_trees: args.trees,
        min_samples_split: args.min_samples_split,
        mode: args.mode.into(),
        master_seed: resolve_seed(args.seed),
    };
    let model = ForestModel::train(&slice, config)?;
    save_model_to_path(&model, &args.model).with_context(|| format!("writing {}", args.model.display()))?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = load_model_from_path(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let (slice, labelled) = match &args.label {
        Some(label) => (load_csv(&args.format.dataset(&args.input, label)?)?, true),
        None => {
            let table = read_table(&args.input, args.format.delimiter()?, !args.format.no_header)?;
            let zeros = vec![0.0; table.rows()];
            (TrainingSlice::new(table.width, table.cells, zeros)?, false)
        }
    };
    if slice.dim() != model.dim() {
        bail!("input has {} feature columns but the model expects {}", slice.dim(), model.dim());
    }
    model.refresh_posteriors()?;
    let mut rows = Vec::with_capacity(slice.len());
    for (i, x) in slice.rows().enumerate() {
        let mixture = model.predict(x)?;
        let (mean, var) = mixture.moments();
        let mut row = vec![mean, var.sqrt()];
        if labelled {
            row.push(-mixture.log_density(slice.label(i)));
        }
        rows.push(row);
    }
    let header: &[&str] = if labelled { &["mean", "std", "nlpd"] } else { &["mean", "std"] };
    write_table(sink(&args.output)?, b',', header, &rows)?;
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let model = load_model_from_path(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let slice = load_csv(&args.format.dataset(&args.data, &args.label)?)?;
    let levels = args.levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let report = evaluate(&model, &slice, &levels)?;
    let mut out = sink(&args.output)?;
    writeln!(out, "metric,value")?;
    writeln!(out, "rmse,{}", format_float(report.rmse))?;
    writeln!(out, "nlpd,{}", format_float(report.nlpd))?;
    writeln!(out)?;
    match args.layout {
        Layout::Rows => {
            let rows: Vec<[f64; 3]> = report.calibration.iter().map(|r| [r.level, r.observed, r.delta]).collect();
            write_table(out, b',', &["level", "observed", "delta"], &rows)?;
        }
        Layout::Columns => {
            let names: Vec<String> = report.calibration.iter().map(|r| r.level.to_string()).collect();
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let deltas: Vec<f64> = report.calibration.iter().map(|r| r.delta).collect();
            write_table(out, b',', &names, &[deltas])?;
        }
    }
    Ok(())
}

fn bayesopt(args: BayesoptArgs) -> Result<()> {
    let config = BoConfig {
        num_trees: args.trees,
        min_samples_split: args.min_samples_split,
        beta: args.beta,
        n_init: args.n_init,
        seed: resolve_seed(args.seed),
        mode: args.mode.into(),
    };
    let history = match &args.grid {
        Some(path) => {
            let table = read_table(path, args.format.delimiter()?, !args.format.no_header)
                .with_context(|| format!("reading {}", path.display()))?;
            let objective_col = args.objective_col.as_deref().map(|c| table.resolve(&LabelColumn::parse(c))).transpose()?;
            let dim = table.width - usize::from(objective_col.is_some());
            if dim == 0 {
                bail!("grid file has no feature columns");
            }
            let mut points = table.without_column(objective_col);
            apply_log_cols(&mut points, dim, &args.log_cols)?;
            match (objective_col, args.benchmark) {
                (Some(c), _) => {
                    let labels = vec![0.0; table.rows()];
                    let scaler = Scaler::fit(&TrainingSlice::new(dim, points.clone(), labels)?)?;
                    let scaled: Vec<f64> =
                        points.chunks_exact(dim).map(|x| scaler.scale(x)).collect::<Result<Vec<_>, _>>()?.concat();
                    let mut grid = CandidateGrid::new(dim, scaled)?;
                    run_bayesopt(&mut TableObjective(table.column(c)), &mut grid, args.budget, &config)?
                }
                (None, Some(b)) => {
                    if dim != b.dim() {
                        bail!("{} needs {} grid columns, found {dim}", b.name(), b.dim());
                    }
                    let mut grid = CandidateGrid::new(dim, points)?;
                    run_bayesopt(&mut |_: usize, z: &[f64]| b.value_unit(z), &mut grid, args.budget, &config)?
                }
                (None, None) => bail!("a grid file needs --objective-col or --benchmark"),
            }
        }
        None => {
            let b = args.benchmark.context("--benchmark is required without --grid")?;
            let (mut grid, values) = b.random_grid(args.grid_size, args.grid_seed);
            run_bayesopt(&mut TableObjective(values), &mut grid, args.budget, &config)?
        }
    };
    let mut out = sink(&args.output)?;
    writeln!(out, "iter,index,value,best")?;
    for r in &history.records {
        writeln!(out, "{},{},{},{}", r.iteration, r.index, format_float(r.value), format_float(r.best))?;
    }
    out.flush()?;
    Ok(())
}

fn benchgen(args: BenchgenArgs) -> Result<()> {
    match args.what {
        BenchgenKind::Sine { n, lo, hi, noise, seed, output } => {
            if !(lo < hi) {
                bail!("--lo must be below --hi");
            }
            let slice = sine_dataset(n, lo, hi, noise, resolve_seed(seed))?;
            write_csv(sink(&output)?, &slice)?;
        }
        BenchgenKind::Grid { benchmark, size, seed, output } => {
            let (grid, values) = benchmark.random_grid(size, resolve_seed(seed));
            let mut header: Vec<String> = (0..grid.dim()).map(|d| format!("x{d}")).collect();
            header.push("value".into());
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> =
                (0..grid.len()).map(|i| grid.point(i).iter().copied().chain([values[i]]).collect()).collect();
            write_table(sink(&output)?, b',', &header, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Bayesopt(a) => bayesopt(a),
        Command::Benchgen(a) => benchgen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
