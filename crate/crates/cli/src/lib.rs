//! Command-line driver: dataset generation, training, evaluation, ablation
//! sweeps and inspection.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
//! error, 3 numeric failure during training.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use tdanet::data::{self, LabeledDataset, LoadOptions};
use tdanet::metrics::{write_metric_csv, MetricRow};
use tdanet::model::{load_checkpoint, save_checkpoint, AttentionScale};
use tdanet::numerics::PrecisionMode;
use tdanet::spectral::{self, DecompositionMethod};
use tdanet::training::{self, Axis, TrainConfig};
use tdanet::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tdanet",
    version,
    about = "Noisy-signal fault diagnosis by period decomposition"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset in the directory format.
    Gen(GenArgs),
    /// Train a model and write its per-epoch CSV and checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run one training per point of a configuration grid.
    Ablate(AblateArgs),
    /// Summarize a dataset, a record's decomposition, or a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum DatasetKind {
    Bearing,
    Flight,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Flat key=value file of defaults; command-line flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Generator to run.
    #[arg(long, value_enum, default_value = "bearing")]
    dataset: DatasetKind,
    /// Number of classes (bearing only; flight always has 6).
    #[arg(long, value_name = "INT", default_value_t = 4)]
    classes: usize,
    /// Records per class.
    #[arg(long, value_name = "INT", default_value_t = 100)]
    per_class: usize,
    /// Samples per record.
    #[arg(long, value_name = "INT", default_value_t = 256)]
    length: usize,
    #[arg(long, value_name = "INT", default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory (manifest.csv plus data files).
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Window length for segmenting long files; 0 keeps files whole.
    #[arg(long, value_name = "INT", default_value_t = 4096)]
    window: usize,
    /// Stride between windows; defaults to the window length.
    #[arg(long, value_name = "INT")]
    stride: Option<usize>,
}

impl DataArgs {
    fn load(&self, split_seed: u64, train_fraction: f64) -> tdanet::Result<LabeledDataset> {
        let opts = LoadOptions {
            window: (self.window > 0).then_some(self.window),
            stride: self.stride,
        };
        let mut ds = data::load_cwru_format(&self.data, opts)?;
        ds.split_seed = split_seed;
        ds.train_fraction = train_fraction;
        Ok(ds)
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Training epochs.
    #[arg(long, value_name = "INT", default_value_t = 50)]
    epochs: usize,
    #[arg(long, value_name = "INT", default_value_t = 32)]
    batch_size: usize,
    /// Adam learning rate.
    #[arg(long, value_name = "FLOAT", default_value_t = 1e-3)]
    lr: f64,
    /// Master seed; every random choice derives from it.
    #[arg(long, value_name = "INT", default_value_t = 0)]
    seed: u64,
    /// Noise level in dB, or "clean".
    #[arg(
        long,
        value_name = "FLOAT|clean",
        default_value = "clean",
        allow_negative_numbers = true
    )]
    snr_db: String,
    /// Add noise to training inputs when --snr-db is set.
    #[arg(long, value_name = "BOOL", default_value_t = true, action = clap::ArgAction::Set)]
    noise_train: bool,
    /// Add noise to test inputs when --snr-db is set.
    #[arg(long, value_name = "BOOL", default_value_t = true, action = clap::ArgAction::Set)]
    noise_test: bool,
    /// Fraction of each class used for training.
    #[arg(long, value_name = "FLOAT", default_value_t = 0.8)]
    train_fraction: f64,
    /// Number of periods (branches).
    #[arg(long, value_name = "INT", default_value_t = 4)]
    k: usize,
    /// Number of TVD blocks.
    #[arg(long, value_name = "INT", default_value_t = 2)]
    layers: usize,
    #[arg(long, value_name = "INT", default_value_t = 32)]
    d_model: usize,
    /// Attention heads; must divide d_model.
    #[arg(long, value_name = "INT", default_value_t = 4)]
    heads: usize,
    /// Sensors; channels are split into this many equal consecutive groups.
    #[arg(long, value_name = "INT", default_value_t = 1)]
    sensors: usize,
    /// fft or stft.
    #[arg(long, value_name = "fft|stft", default_value = "stft")]
    decomposition: String,
    #[arg(long, value_name = "BOOL", default_value_t = true, action = clap::ArgAction::Set)]
    use_tvd: bool,
    #[arg(long, value_name = "BOOL", default_value_t = true, action = clap::ArgAction::Set)]
    use_maf: bool,
    /// Attention score divisor: linear (d_attn) or sqrt (√d_attn).
    #[arg(long, value_name = "linear|sqrt", default_value = "linear")]
    attention_scale: String,
    /// single, double or mixed.
    #[arg(long, value_name = "single|double|mixed", default_value = "mixed")]
    precision: String,
}

impl ModelArgs {
    fn train_config(&self) -> tdanet::Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            snr_db: parse_snr(&self.snr_db)?,
            noise_train: self.noise_train,
            noise_test: self.noise_test,
            train_fraction: self.train_fraction,
            k: self.k,
            layers: self.layers,
            d_model: self.d_model,
            heads: self.heads,
            sensors: self.sensors,
            decomposition: self.decomposition.parse()?,
            use_tvd: self.use_tvd,
            use_maf: self.use_maf,
            attention_scale: self.attention_scale.parse::<AttentionScale>()?,
            precision: self.precision.parse::<PrecisionMode>()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Flat key=value file of defaults; command-line flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Flat key=value file of defaults; command-line flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Noise level in dB, or "clean".
    #[arg(
        long,
        value_name = "FLOAT|clean",
        default_value = "clean",
        allow_negative_numbers = true
    )]
    snr_db: String,
    /// Seed for the split and the noise; use the training seed to reproduce its test split.
    #[arg(long, value_name = "INT", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FLOAT", default_value_t = 0.8)]
    train_fraction: f64,
    /// Which records to evaluate.
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Flat key=value file of defaults; command-line flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Sweep axis NAME=VALUES, repeatable. Names: decomposition, k, use-tvd,
    /// use-maf, snr-db. VALUES is comma-separated; snr-db also accepts an
    /// inclusive range a..b:step.
    #[arg(long = "axis", value_name = "NAME=VALUES", required = true)]
    axes: Vec<String>,
    /// Worker threads for independent runs.
    #[arg(long, value_name = "INT", default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Dataset directory to summarize.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Record index whose decomposition to print.
    #[arg(long, value_name = "INT")]
    record: Option<usize>,
    #[arg(long, value_name = "INT", default_value_t = 4)]
    k: usize,
    #[arg(long, value_name = "fft|stft", default_value = "stft")]
    decomposition: String,
    #[arg(long, value_name = "INT", default_value_t = 4096)]
    window: usize,
    /// Checkpoint to summarize.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command, and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config_file(argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Inspect(a) => inspect(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Dimension(_) => EXIT_USAGE,
        Error::Data(_) | Error::Io { .. } => EXIT_DATA,
        Error::Numeric(_) | Error::Training(_) => EXIT_NUMERIC,
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("tdanet: {e}");
    exit_code(e)
}

/// Inserts `--key value` pairs from a `--config` file directly after the
/// subcommand, so that flags given on the command line (later) win.
fn expand_config_file(argv: Vec<OsString>) -> tdanet::Result<Vec<OsString>> {
    let pos = argv.iter().position(|a| a == "--config");
    let path = match pos {
        Some(i) => match argv.get(i + 1) {
            Some(p) => PathBuf::from(p),
            None => return Ok(argv),
        },
        None => match argv
            .iter()
            .find_map(|a| a.to_str()?.strip_prefix("--config="))
        {
            Some(p) => PathBuf::from(p),
            None => return Ok(argv),
        },
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected key=value, got '{line}'",
                path.display(),
                n + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(Error::Config(format!(
                "{}:{}: nested config files are not supported",
                path.display(),
                n + 1
            )));
        }
        injected.push(OsString::from(format!("--{key}={}", value.trim())));
    }
    let mut out = argv;
    let at = 2.min(out.len());
    out.splice(at..at, injected);
    Ok(out)
}

fn parse_snr(s: &str) -> tdanet::Result<Option<f64>> {
    match s.trim() {
        "clean" | "none" => Ok(None),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| {
                Error::Config(format!("invalid SNR '{v}' (expected a number or 'clean')"))
            }),
    }
}

/// Comma-separated SNR values and inclusive `a..b:step` ranges.
pub fn parse_snr_list(s: &str) -> tdanet::Result<Vec<Option<f64>>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((range, step)) = part.split_once(':') {
            let (a, b) = range.split_once("..").ok_or_else(|| {
                Error::Config(format!("invalid SNR range '{part}' (expected a..b:step)"))
            })?;
            let num = |x: &str| {
                x.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("invalid number '{x}' in SNR range '{part}'"))
                })
            };
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(Error::Config(format!(
                    "SNR range '{part}' needs a <= b and step > 0"
                )));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            out.extend((0..=n).map(|i| Some(a + i as f64 * step)));
        } else {
            out.push(parse_snr(part)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty SNR list".into()));
    }
    Ok(out)
}

fn parse_bool(v: &str) -> tdanet::Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("invalid boolean '{other}'"))),
    }
}

/// Parses one `--axis NAME=VALUES` specification.
pub fn parse_axis(spec: &str) -> tdanet::Result<Axis> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("axis '{spec}' must look like NAME=VALUES")))?;
    let items = || values.split(',').map(str::trim).filter(|v| !v.is_empty());
    let axis = match name.trim().replace('_', "-").as_str() {
        "decomposition" => Axis::Decomposition(
            items()
                .map(str::parse::<DecompositionMethod>)
                .collect::<Result<_, _>>()?,
        ),
        "k" => Axis::K(
            items()
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|_| Error::Config(format!("invalid k '{v}'")))
                })
                .collect::<Result<_, _>>()?,
        ),
        "use-tvd" => Axis::UseTvd(items().map(parse_bool).collect::<Result<_, _>>()?),
        "use-maf" => Axis::UseMaf(items().map(parse_bool).collect::<Result<_, _>>()?),
        "snr-db" => Axis::SnrDb(parse_snr_list(values)?),
        other => {
            return Err(Error::Config(format!(
                "unknown axis '{other}' (expected decomposition, k, use-tvd, use-maf or snr-db)"
            )))
        }
    };
    if axis.is_empty() {
        return Err(Error::Config(format!("axis '{name}' has no values")));
    }
    Ok(axis)
}

fn create_dir(dir: &Path) -> tdanet::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, contents: &str) -> tdanet::Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Prints the resolved configuration to stderr and saves it as `config.txt`.
fn echo_config(out: &Path, pairs: &[(String, String)]) -> tdanet::Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        let _ = writeln!(text, "{k}={v}");
    }
    eprint!("{text}");
    write_file(&out.join("config.txt"), &text)
}

fn write_metadata(out: &Path, mut value: serde_json::Value) -> tdanet::Result<()> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    value["finished_unix_seconds"] = serde_json::json!(now);
    let text = serde_json::to_string_pretty(&value).expect("json value serializes");
    write_file(&out.join("metadata.json"), &text)
}

fn data_pairs(d: &DataArgs) -> Vec<(String, String)> {
    vec![
        ("data".into(), d.data.display().to_string()),
        ("window".into(), d.window.to_string()),
        (
            "stride".into(),
            d.stride.map_or("window".into(), |s| s.to_string()),
        ),
    ]
}

fn gen(a: &GenArgs) -> tdanet::Result<()> {
    let ds = match a.dataset {
        DatasetKind::Bearing => {
            data::synth_bearing_dataset(a.classes, a.per_class, a.length, a.seed)?
        }
        DatasetKind::Flight => data::synth_flight_dataset(a.per_class, a.length, a.seed)?,
    };
    data::write_dataset(&ds, &a.out)?;
    let kind = match a.dataset {
        DatasetKind::Bearing => "bearing",
        DatasetKind::Flight => "flight",
    };
    let classes = ds.n_classes.to_string();
    let pairs: Vec<(String, String)> = [
        ("dataset", kind),
        ("classes", classes.as_str()),
        ("per_class", &a.per_class.to_string()),
        ("length", &a.length.to_string()),
        ("seed", &a.seed.to_string()),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    echo_config(&a.out, &pairs)?;
    eprintln!("wrote {} records to {}", ds.len(), a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> tdanet::Result<()> {
    let cfg = a.model.train_config()?;
    let ds = a.data.load(cfg.seed, cfg.train_fraction)?;
    create_dir(&a.out)?;
    let mut pairs = data_pairs(&a.data);
    pairs.extend(cfg.echo());
    echo_config(&a.out, &pairs)?;
    let mut model = cfg.build_model(&ds)?;
    let report = training::train(&mut model, &ds, &cfg)?;
    report.save_csv(&a.out.join("run.csv"))?;
    save_checkpoint(&model, &a.out.join("checkpoint.json"))?;
    write_metadata(&a.out, report.metadata_json())?;
    let m = report.final_metrics();
    eprintln!(
        "final: overall_accuracy={} accuracy={} precision={} recall={} f1={}",
        m.overall_accuracy, m.accuracy, m.precision, m.recall, m.f1
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> tdanet::Result<()> {
    let snr = parse_snr(&a.snr_db)?;
    let ds = a.data.load(a.seed, a.train_fraction)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let subset = match a.split {
        Split::All => ds,
        Split::Train => ds.split()?.0,
        Split::Test => ds.split()?.1,
    };
    create_dir(&a.out)?;
    let mut pairs = data_pairs(&a.data);
    pairs.extend([
        ("checkpoint".into(), a.checkpoint.display().to_string()),
        (
            "snr_db".into(),
            snr.map_or("clean".into(), |s| s.to_string()),
        ),
        ("seed".into(), a.seed.to_string()),
        ("train_fraction".into(), a.train_fraction.to_string()),
        ("split".into(), format!("{:?}", a.split).to_lowercase()),
    ]);
    echo_config(&a.out, &pairs)?;
    let noise_seed = a.seed.wrapping_add(training::TEST_NOISE_SEED_OFFSET);
    let (cm, report) = training::evaluate(&model, &subset, snr, noise_seed)?;
    let path = a.out.join("metrics.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    write_metric_csv(
        file,
        &[MetricRow {
            epoch: 0,
            snr_db: snr,
            report,
        }],
    )?;
    let mut text = String::new();
    for row in cm.rows() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    write_file(&a.out.join("confusion.csv"), &text)?;
    eprintln!(
        "overall_accuracy={} on {} records",
        report.overall_accuracy,
        subset.len()
    );
    Ok(())
}

fn ablate(a: &AblateArgs) -> tdanet::Result<()> {
    let cfg = a.model.train_config()?;
    let axes = a
        .axes
        .iter()
        .map(|s| parse_axis(s))
        .collect::<tdanet::Result<Vec<_>>>()?;
    let ds = a.data.load(cfg.seed, cfg.train_fraction)?;
    create_dir(&a.out)?;
    let mut pairs = data_pairs(&a.data);
    pairs.extend(cfg.echo());
    pairs.extend(a.axes.iter().map(|s| ("axis".to_string(), s.clone())));
    pairs.push(("jobs".into(), a.jobs.to_string()));
    echo_config(&a.out, &pairs)?;
    let table = training::ablation_sweep(&ds, &cfg, &axes, a.jobs)?;
    table.save(&a.out)?;
    let runs: Vec<serde_json::Value> = table
        .runs
        .iter()
        .map(|r| serde_json::json!({ "file": format!("{}.csv", r.file_stem()), "meta": r.report.metadata_json() }))
        .collect();
    write_metadata(&a.out, serde_json::json!({ "runs": runs }))?;
    eprintln!("{} runs written to {}", table.runs.len(), a.out.display());
    Ok(())
}

fn inspect(a: &InspectArgs) -> tdanet::Result<()> {
    if a.data.is_none() && a.checkpoint.is_none() {
        return Err(Error::Config(
            "inspect needs --data and/or --checkpoint".into(),
        ));
    }
    if let Some(path) = &a.checkpoint {
        let model = load_checkpoint(path)?;
        let c = &model.config;
        println!("checkpoint {}", path.display());
        println!(
            "classes={} sensors={} channels_per_sensor={} k={} layers={} d_model={} heads={}",
            c.n_classes, c.sensors, c.channels_per_sensor, c.k, c.layers, c.d_model, c.heads
        );
        println!(
            "decomposition={} use_tvd={} use_maf={} precision={}",
            c.decomposition, c.use_tvd, c.use_maf, c.precision
        );
        println!("parameters={}", model.parameter_count());
        for (name, t) in model.parameter_names().iter().zip(model.parameters()) {
            println!("  {name} {:?}", t.shape());
        }
    }
    if let Some(dir) = &a.data {
        let opts = LoadOptions {
            window: (a.window > 0).then_some(a.window),
            stride: None,
        };
        let ds = data::load_cwru_format(dir, opts)?;
        println!("dataset {}", dir.display());
        println!(
            "records={} classes={} channels={}",
            ds.len(),
            ds.n_classes,
            ds.channels().map_or("mixed".into(), |c| c.to_string())
        );
        println!("class_counts={:?}", ds.class_counts());
        if let Some(i) = a.record {
            let rec = ds.records.get(i).ok_or_else(|| {
                Error::Config(format!(
                    "record {i} out of range (dataset has {})",
                    ds.len()
                ))
            })?;
            let method: DecompositionMethod = a.decomposition.parse()?;
            let x = tdanet::model::center_channels(&data::minmax_normalize(&rec.samples)?);
            let dec = spectral::decompose(&x, method, None, a.k)?;
            println!("record {i}: label={} length={}", rec.label, rec.length());
            for ((f, p), amp) in dec
                .frequencies
                .iter()
                .zip(&dec.periods)
                .zip(&dec.amplitudes)
            {
                println!("  frequency={f} period={p} amplitude={amp}");
            }
        }
    }
    Ok(())
}
