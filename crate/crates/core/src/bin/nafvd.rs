//! Pipeline driver: generate traffic, train a baseline, extract per-window
//! scores, diagnose the score series, run the detector, and evaluate the
//! event log against ground-truth labels.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage error.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use nafvd::baseline::{self, Baseline};
use nafvd::detector::{self, DetectionEvent, DetectorConfig};
use nafvd::features::{self, WeightVector};
use nafvd::flow;
use nafvd::metrics;
use nafvd::scenario::{
    self, AttackConfig, FlashCrowdConfig, NoiseConfig, ScenarioConfig, SourcePool,
};
use nafvd::timeseries::{ArimaSpec, DiagnosticsReport};

#[derive(Parser)]
#[command(name = "nafvd", version, about = "Flood-attack detector over flow records")]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// JSON config file; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sampling window length in seconds.
    #[arg(long, global = true)]
    unit_time: Option<f64>,
    /// Outlier threshold on the fused score.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Consecutive outliers required to activate the predictor.
    #[arg(long, global = true)]
    beta: Option<usize>,
    /// Sliding-window size for the alarm decision.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Abnormal fraction y/w that raises the alarm, in (0, 1].
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Fusion weights: `equal`, `pca`, or `w1,w2,w3,w4`.
    #[arg(long, global = true)]
    weights: Option<String>,
    /// Skip the many-to-one prefilter (ablation).
    #[arg(long, global = true)]
    no_filter: bool,
    /// RNG seed for generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

/// JSON config mirroring the global flags; any field may be omitted.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    format: Option<u32>,
    unit_time: Option<f64>,
    alpha: Option<f64>,
    beta: Option<usize>,
    window: Option<usize>,
    rho: Option<f64>,
    weights: Option<String>,
    no_filter: Option<bool>,
    seed: Option<u64>,
    refit_interval: Option<usize>,
    ipd_bits: Option<u32>,
}

/// Flags merged over the config file, with defaults filled in.
struct Settings {
    unit_time: f64,
    alpha: f64,
    beta: usize,
    window: usize,
    rho: f64,
    /// None = plain fused score; Some = apply these weights.
    weights: Option<WeightSpec>,
    filter: bool,
    seed: u64,
    refit_interval: usize,
    ipd_bits: u32,
}

#[derive(Clone)]
enum WeightSpec {
    Equal,
    Pca,
    Fixed(WeightVector),
}

fn parse_weight_spec(s: &str) -> Result<WeightSpec> {
    match s {
        "equal" => Ok(WeightSpec::Equal),
        "pca" => Ok(WeightSpec::Pca),
        _ => {
            let parts: Vec<&str> = s.split(',').collect();
            if parts.len() != 4 {
                bail!("--weights expects `equal`, `pca`, or four comma-separated values, got `{s}`");
            }
            let mut w = [0.0f64; 4];
            for (i, p) in parts.iter().enumerate() {
                w[i] = p
                    .trim()
                    .parse()
                    .with_context(|| format!("bad weight component `{p}`"))?;
            }
            Ok(WeightSpec::Fixed(WeightVector::new_lenient(
                w[0], w[1], w[2], w[3],
            )?))
        }
    }
}

impl Settings {
    fn resolve(globals: &GlobalArgs) -> Result<Self> {
        let file: FileConfig = match &globals.config {
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let cfg: FileConfig = serde_json::from_str(&raw)
                    .with_context(|| format!("parsing config {}", path.display()))?;
                if let Some(f) = cfg.format {
                    if f != 1 {
                        bail!("unsupported config format {f}, expected 1");
                    }
                }
                cfg
            }
            None => FileConfig::default(),
        };
        let weights = match globals.weights.as_deref().or(file.weights.as_deref()) {
            Some(s) => Some(parse_weight_spec(s)?),
            None => None,
        };
        Ok(Settings {
            unit_time: globals.unit_time.or(file.unit_time).unwrap_or(0.8),
            alpha: globals.alpha.or(file.alpha).unwrap_or(25.0),
            beta: globals.beta.or(file.beta).unwrap_or(2),
            window: globals.window.or(file.window).unwrap_or(10),
            rho: globals.rho.or(file.rho).unwrap_or(0.5),
            weights,
            filter: !(globals.no_filter || file.no_filter.unwrap_or(false)),
            seed: globals.seed.or(file.seed).unwrap_or(0),
            refit_interval: file.refit_interval.unwrap_or(16),
            ipd_bits: file.ipd_bits.unwrap_or(24),
        })
    }

    fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            alpha: self.alpha,
            beta: self.beta,
            w: self.window,
            rho: self.rho,
            refit_interval: self.refit_interval,
            min_history: None,
            arima: ArimaSpec::default(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic flow stream.
    Gen(GenArgs),
    /// Train a baseline from a trusted-normal flow stream.
    Train(TrainArgs),
    /// Score a flow stream per window against a baseline.
    Features(FeaturesArgs),
    /// Autocorrelation / whiteness report over a feature CSV column.
    Diagnose(DiagnoseArgs),
    /// Run the detector over a flow stream and emit the event log.
    Detect(DetectArgs),
    /// Score an event log against ground-truth labels.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Recurring users plus background churn only.
    Normal,
    /// Flood attack starting at 40% of the stream.
    Flood,
    /// Flash crowd starting at 40% of the stream.
    Flashcrowd,
}

#[derive(Args)]
struct GenArgs {
    /// Built-in scenario shape; ignored when --scenario is given.
    #[arg(long, value_enum, default_value = "normal")]
    preset: Preset,
    /// Scenario config JSON; overrides --preset and --duration.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Stream length in seconds (presets only).
    #[arg(long, default_value_t = 240.0)]
    duration: f64,
    /// Output flow CSV path.
    #[arg(long)]
    out_flows: PathBuf,
    /// Output per-window label CSV path.
    #[arg(long)]
    out_labels: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Trusted-normal flow CSV (optionally .gz).
    #[arg(long)]
    flows: PathBuf,
    /// Baseline output path (a sibling .ipd snapshot is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Flow CSV (optionally .gz).
    #[arg(long)]
    flows: PathBuf,
    /// Trained baseline path.
    #[arg(long)]
    baseline: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Feature CSV produced by `features`.
    #[arg(long)]
    input: PathBuf,
    /// Column to analyze.
    #[arg(long, default_value = "nafv")]
    column: String,
    /// Differencing order applied before the diagnostics.
    #[arg(long, default_value_t = 0)]
    diff: usize,
    /// Largest autocorrelation lag.
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    /// Output prefix: writes <out>.json and <out>.csv; stdout JSON when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Flow CSV (optionally .gz).
    #[arg(long)]
    flows: PathBuf,
    /// Trained baseline path.
    #[arg(long)]
    baseline: PathBuf,
    /// Event-log JSON-lines output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Event-log JSON-lines from `detect`.
    #[arg(long)]
    events: PathBuf,
    /// Ground-truth label CSV (`k,label`).
    #[arg(long)]
    labels: PathBuf,
    /// Metrics JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.globals)?;
    match cli.command {
        Command::Gen(args) => cmd_gen(&settings, &args),
        Command::Train(args) => cmd_train(&settings, &args),
        Command::Features(args) => cmd_features(&settings, &args),
        Command::Diagnose(args) => cmd_diagnose(&args),
        Command::Detect(args) => cmd_detect(&settings, &args),
        Command::Eval(args) => cmd_eval(&args),
    }
}

fn preset_scenario(preset: Preset, duration: f64, unit_time: f64) -> ScenarioConfig {
    let onset = (duration * 0.4 / unit_time).floor() * unit_time;
    let mut cfg = ScenarioConfig {
        duration,
        unit_time,
        normal_population: 200,
        normal_rate: 1.25,
        churn_mean: 5.0,
        victim_ip: scenario::DEFAULT_VICTIM,
        attack: None,
        flashcrowd: None,
        noise: Some(NoiseConfig {
            sources_per_window: 20,
            multi_dst_fraction: 0.3,
        }),
    };
    match preset {
        Preset::Normal => {}
        Preset::Flood => {
            cfg.attack = Some(AttackConfig {
                onset,
                bot_count: 400,
                per_bot_rate: 20.0,
                source_pool: SourcePool::SpoofedRandom,
                old_user_suppression: 0.1,
            });
        }
        Preset::Flashcrowd => {
            cfg.flashcrowd = Some(FlashCrowdConfig {
                onset,
                crowd_size: 150,
                per_user_rate: 1.25,
                old_user_boost: 3.0,
            });
        }
    }
    cfg
}

fn cmd_gen(settings: &Settings, args: &GenArgs) -> Result<()> {
    let cfg = match &args.scenario {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading scenario {}", path.display()))?;
            serde_json::from_str(&raw)
                .with_context(|| format!("parsing scenario {}", path.display()))?
        }
        None => preset_scenario(args.preset, args.duration, settings.unit_time),
    };
    let dataset = scenario::gen_scenario(&cfg, settings.seed)?;
    let flows = BufWriter::new(File::create(&args.out_flows)?);
    scenario::write_flow_csv(&dataset.records, flows)?;
    if let Some(labels_path) = &args.out_labels {
        let labels = BufWriter::new(File::create(labels_path)?);
        scenario::write_labels_csv(&dataset.labels, labels)?;
    }
    eprintln!(
        "wrote {} records over {} windows",
        dataset.records.len(),
        dataset.labels.len()
    );
    Ok(())
}

fn read_flows(path: &Path) -> Result<Vec<flow::PacketRecord>> {
    flow::read_flow_file(path).with_context(|| format!("reading flows {}", path.display()))
}

fn cmd_train(settings: &Settings, args: &TrainArgs) -> Result<()> {
    let records = read_flows(&args.flows)?;
    let cfg = flow::SamplingConfig::new(settings.unit_time, flow::StreamRole::Training)?;
    let windows = flow::window_stream(&records, &cfg);
    let filtered: Vec<_> = windows
        .iter()
        .map(|w| {
            if settings.filter {
                nafvd::prefilter::filter_window(w)
            } else {
                nafvd::prefilter::unfiltered_window(w)
            }
        })
        .collect();
    let (mut baseline, rows) =
        baseline::train_with_feature_rows(&filtered, settings.unit_time, settings.ipd_bits)?;
    baseline.weights = match &settings.weights {
        Some(WeightSpec::Pca) => features::pca_weights(&rows)?,
        Some(WeightSpec::Fixed(w)) => *w,
        Some(WeightSpec::Equal) | None => WeightVector::EQUAL,
    };
    baseline.save(&args.out)?;
    eprintln!(
        "trained on {} windows: max_old={} mean_new={:.3} weights={:?}",
        baseline.window_count,
        baseline.max_old_users,
        baseline.mean_new_users,
        baseline.weights.as_array()
    );
    Ok(())
}

/// Resolve the weights used for the weighted score column / detection input.
fn effective_weights(settings: &Settings, baseline: &Baseline) -> Result<Option<WeightVector>> {
    Ok(match &settings.weights {
        None => None,
        Some(WeightSpec::Equal) => Some(WeightVector::EQUAL),
        Some(WeightSpec::Fixed(w)) => Some(*w),
        // `pca` at scoring time means "use what training stored".
        Some(WeightSpec::Pca) => Some(baseline.weights),
    })
}

fn out_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_features(settings: &Settings, args: &FeaturesArgs) -> Result<()> {
    let records = read_flows(&args.flows)?;
    let baseline = Baseline::load(&args.baseline)?;
    let weights = effective_weights(settings, &baseline)?.unwrap_or(baseline.weights);
    let points = features::score_stream(&records, &baseline, None, settings.filter)?;
    let mut w = out_writer(args.out.as_deref())?;
    writeln!(w, "k,start,n,a,f,v,nafv,nafv_weighted")?;
    for p in &points {
        let fv = &p.features;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.index,
            p.start,
            fv.n,
            fv.a,
            fv.f,
            fv.v,
            p.value,
            features::nafv_weighted(fv, &weights)
        )?;
    }
    Ok(())
}

fn read_feature_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut raw = String::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_string(&mut raw)?;
    let mut lines = raw.lines();
    let header = lines.next().context("empty feature CSV")?;
    let col = header
        .split(',')
        .position(|h| h.trim() == column)
        .with_context(|| format!("column `{column}` not in header `{header}`"))?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(col)
            .with_context(|| format!("line {} lacks column {column}", i + 2))?;
        values.push(
            field
                .trim()
                .parse()
                .with_context(|| format!("line {}: bad value `{field}`", i + 2))?,
        );
    }
    Ok(values)
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let mut series = read_feature_column(&args.input, &args.column)?;
    if args.diff > 0 {
        series = nafvd::timeseries::difference(&series, args.diff)?;
    }
    let max_lag = args.max_lag.min(series.len().saturating_sub(1));
    let report = DiagnosticsReport::compute(&series, max_lag, 0)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(prefix) => {
            std::fs::write(prefix.with_extension("json"), &json)?;
            let mut csv = String::from("lag,acf,pacf\n");
            for lag in 0..report.acf.len() {
                csv.push_str(&format!(
                    "{lag},{},{}\n",
                    report.acf[lag], report.pacf[lag]
                ));
            }
            std::fs::write(prefix.with_extension("csv"), csv)?;
            eprintln!(
                "ljung-box Q={:.3} dof={} p={:.4} (band +-{:.4})",
                report.ljung_box.statistic,
                report.ljung_box.dof,
                report.ljung_box.p_value,
                report.confidence_band
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_detect(settings: &Settings, args: &DetectArgs) -> Result<()> {
    let records = read_flows(&args.flows)?;
    let baseline = Baseline::load(&args.baseline)?;
    let weights = effective_weights(settings, &baseline)?;
    let points = features::score_stream(&records, &baseline, weights.as_ref(), settings.filter)?;
    let (events, _log) = detector::run(&points, settings.detector_config())?;
    let mut w = out_writer(args.out.as_deref())?;
    for e in &events {
        writeln!(w, "{}", serde_json::to_string(e)?)?;
    }
    let alarms = events
        .iter()
        .filter(|e| e.kind == detector::EventKind::DdosAlarm)
        .count();
    eprintln!("{} windows, {} events, {} alarms", points.len(), events.len(), alarms);
    Ok(())
}

fn read_events(path: &Path) -> Result<Vec<DetectionEvent>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading events {}", path.display()))?;
    let mut events = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(line)
                .with_context(|| format!("event log line {}: bad record", i + 1))?,
        );
    }
    Ok(events)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let events = read_events(&args.events)?;
    let labels = scenario::read_labels_csv(&args.labels)?;
    let m = metrics::evaluate(&events, &labels)?;
    let json = serde_json::to_string_pretty(&m)?;
    match &args.out {
        Some(p) => std::fs::write(p, &json)?,
        None => println!("{json}"),
    }
    fn fmt(v: Option<f64>) -> String {
        v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
    }
    eprintln!("dr={} mr={} fr={}", fmt(m.dr), fmt(m.mr), fmt(m.fr));
    Ok(())
}
