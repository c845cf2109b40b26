use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use evgraph::attention::{layer_forward, params_from_json, standardized_features, AttentionParams};
use evgraph::denoise::{denoise_voxel, optimal_threshold};
use evgraph::graph::{build_graph, WeightParams};
use evgraph::pipeline::{self, PipelineConfig, REPORT_SCHEMA_VERSION};
use evgraph::segment::{segment, SegmentationConfig};
use evgraph::synth::{
    evaluate, generate, kept_indices_by_matching, EventLabel, LabeledEventStream, ObjectKind,
    SynthConfig,
};
use evgraph::{parse_event_csv, write_event_csv, EventStream};

/// Event-stream segmentation, weighted-graph denoising, and attention
/// diagnostics with reproducible, scriptable outputs.
#[derive(Parser)]
#[command(name = "evgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic scene (event CSV plus a 0/1 label file).
    Synth(SynthArgs),
    /// Segment a stream and dump its voxels as JSON lines.
    Segment(SegmentCmdArgs),
    /// Run the full denoising pipeline: segmentation, per-voxel graphs,
    /// adaptive thresholding, and filtering.
    Denoise(DenoiseArgs),
    /// Per-voxel graph and edge-weight diagnostics.
    Stats(StatsArgs),
    /// Attention forward pass over denoised voxels, emitting aggregated
    /// features.
    Attend(AttendArgs),
    /// Score a denoised stream against ground-truth labels.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Comb1,
    Comb2,
    Comb3,
    Comb4,
}

impl PresetArg {
    fn name(self) -> &'static str {
        match self {
            PresetArg::Comb1 => "comb1",
            PresetArg::Comb2 => "comb2",
            PresetArg::Comb3 => "comb3",
            PresetArg::Comb4 => "comb4",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectArg {
    Bar,
    Disc,
}

#[derive(Args, Default)]
struct ConfigFileArg {
    /// Key-value configuration file (`key = value` lines); explicit
    /// command-line flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct SegArgs {
    /// Minimum events per window.
    #[arg(long)]
    n_min: Option<usize>,
    /// Density scale factor for the adaptive window capacity.
    #[arg(long)]
    c_scale: Option<f64>,
    /// Lower clamp on the per-window voxel count.
    #[arg(long)]
    min_vox: Option<usize>,
    /// Upper clamp on the per-window voxel count.
    #[arg(long)]
    max_vox: Option<usize>,
}

#[derive(Args, Default)]
struct WeightArgs {
    /// Named weight preset.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Distance coefficient; overrides the preset value.
    #[arg(long)]
    alpha: Option<f64>,
    /// Speed-difference coefficient; overrides the preset value.
    #[arg(long)]
    beta: Option<f64>,
    /// Angular-difference coefficient; overrides the preset value.
    #[arg(long)]
    gamma: Option<f64>,
    /// Polarity-consistency coefficient; overrides the preset value.
    #[arg(long)]
    delta: Option<f64>,
    /// Mix raw factor values instead of per-voxel normalized ones.
    #[arg(long)]
    no_normalize_factors: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output event CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Output label file path (one 0/1 per line, 1 = signal).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 64)]
    width: i64,
    #[arg(long, default_value_t = 64)]
    height: i64,
    /// Scene duration in microseconds.
    #[arg(long, default_value_t = 1000)]
    duration: i64,
    /// Signal events per microsecond.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = 0.3)]
    noise_fraction: f64,
    #[arg(long, value_enum, default_value = "bar")]
    object: ObjectArg,
    /// Object velocity, pixels per microsecond.
    #[arg(long, default_value_t = 0.25)]
    vx: f64,
    #[arg(long, default_value_t = 0.1)]
    vy: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SegmentCmdArgs {
    /// Input event CSV.
    #[arg(long)]
    input: PathBuf,
    /// Voxel dump destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seg: SegArgs,
    #[command(flatten)]
    config: ConfigFileArg,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Input event CSV.
    #[arg(long)]
    input: PathBuf,
    /// Denoised event CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// JSON report destination.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker pool size; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    seg: SegArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    config: ConfigFileArg,
}

#[derive(Args)]
struct StatsArgs {
    /// Input event CSV.
    #[arg(long)]
    input: PathBuf,
    /// JSON report destination; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Edge-list dump destination ("nodes N edges M" header plus one
    /// "i j w" line per edge, per voxel).
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    #[command(flatten)]
    seg: SegArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    config: ConfigFileArg,
}

#[derive(Args)]
struct AttendArgs {
    /// Input event CSV.
    #[arg(long)]
    input: PathBuf,
    /// Aggregated feature CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Attention parameter JSON file; generated from --seed when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Seed for generated parameters.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output feature dimension for generated parameters.
    #[arg(long, default_value_t = 8)]
    d_out: usize,
    #[command(flatten)]
    seg: SegArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    config: ConfigFileArg,
}

#[derive(Args)]
struct EvalArgs {
    /// Original event CSV.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth label file (one 0/1 per line).
    #[arg(long)]
    labels: PathBuf,
    /// Denoised event CSV.
    #[arg(long)]
    denoised: PathBuf,
    /// Metrics JSON destination; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_usage_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Configuration and malformed-input problems exit with code 2; runtime
/// failures (I/O and the like) exit with code 1.
fn is_usage_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<evgraph::Error>(),
            Some(
                evgraph::Error::EmptyStream
                    | evgraph::Error::Config(_)
                    | evgraph::Error::InvalidArgument(_)
                    | evgraph::Error::Parse { .. }
                    | evgraph::Error::Polarity { .. }
                    | evgraph::Error::DimensionMismatch { .. }
            )
        )
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Segment(args) => cmd_segment(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Attend(args) => cmd_attend(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

/// Flat `key = value` file; `#` starts a comment.
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            for (idx, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    bail!(evgraph::Error::Config(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        idx + 1
                    )));
                };
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                anyhow::Error::new(evgraph::Error::Config(format!(
                    "config key {key:?} has unparsable value {raw:?}"
                )))
            }),
        }
    }
}

fn resolve_segmentation(args: &SegArgs, file: &FileConfig) -> Result<SegmentationConfig> {
    let defaults = SegmentationConfig::default();
    let config = SegmentationConfig {
        n_min: args.n_min.or(file.get("n-min")?).unwrap_or(defaults.n_min),
        c_scale: args
            .c_scale
            .or(file.get("c-scale")?)
            .unwrap_or(defaults.c_scale),
        n_min_vox: args
            .min_vox
            .or(file.get("min-vox")?)
            .unwrap_or(defaults.n_min_vox),
        n_max_vox: args
            .max_vox
            .or(file.get("max-vox")?)
            .unwrap_or(defaults.n_max_vox),
    };
    config.validate()?;
    Ok(config)
}

fn resolve_weights(args: &WeightArgs, file: &FileConfig) -> Result<WeightParams> {
    let preset_name = match args.preset {
        Some(p) => Some(p.name().to_string()),
        None => file.get::<String>("preset")?,
    };
    let mut params = match preset_name.as_deref() {
        Some(name) => WeightParams::preset(name).ok_or_else(|| {
            evgraph::Error::Config(format!("unknown preset {name:?}; expected comb1..comb4"))
        })?,
        None => WeightParams::default(),
    };
    if let Some(v) = args.alpha.or(file.get("alpha")?) {
        params.alpha = v;
    }
    if let Some(v) = args.beta.or(file.get("beta")?) {
        params.beta = v;
    }
    if let Some(v) = args.gamma.or(file.get("gamma")?) {
        params.gamma = v;
    }
    if let Some(v) = args.delta.or(file.get("delta")?) {
        params.delta = v;
    }
    if args.no_normalize_factors {
        params.normalize_factors = false;
    } else if let Some(v) = file.get::<bool>("normalize-factors")? {
        params.normalize_factors = v;
    }
    params.validate()?;
    Ok(params)
}

fn read_stream(path: &Path) -> Result<EventStream> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read event CSV {}", path.display()))?;
    let stream = parse_event_csv(&text)
        .with_context(|| format!("cannot parse event CSV {}", path.display()))?;
    Ok(stream)
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(path) => fs::write(path, contents)
            .with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        width: args.width,
        height: args.height,
        duration: args.duration,
        signal_rate: args.rate,
        noise_fraction: args.noise_fraction,
        object: match args.object {
            ObjectArg::Bar => ObjectKind::MovingBar,
            ObjectArg::Disc => ObjectKind::MovingDisc,
        },
        velocity: (args.vx, args.vy),
        seed: args.seed,
    };
    let labeled = generate(&config)?;
    fs::write(&args.out, write_event_csv(&labeled.stream))
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    let mut label_text = String::with_capacity(labeled.labels.len() * 2);
    for label in &labeled.labels {
        label_text.push(if *label == EventLabel::Signal { '1' } else { '0' });
        label_text.push('\n');
    }
    fs::write(&args.labels, label_text)
        .with_context(|| format!("cannot write {}", args.labels.display()))?;
    Ok(())
}

fn cmd_segment(args: SegmentCmdArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let seg = resolve_segmentation(&args.seg, &file)?;
    let stream = read_stream(&args.input)?;
    let voxels = segment(&stream, &seg)?;
    let mut out = String::new();
    for v in &voxels {
        let line = json!({
            "window_index": v.window_index,
            "voxel_index": v.voxel_index,
            "t_lo": v.t_lo,
            "t_hi": v.t_hi,
            "events": v.events(),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    write_output(args.out.as_deref(), &out)
}

fn cmd_denoise(args: DenoiseArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let config = PipelineConfig {
        segmentation: resolve_segmentation(&args.seg, &file)?,
        weights: resolve_weights(&args.weights, &file)?,
        threads: args.threads,
    };
    let stream = read_stream(&args.input)?;
    let output = pipeline::run(&stream, &config)?;
    fs::write(&args.out, write_event_csv(&output.kept))
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    if let Some(report_path) = &args.report {
        let mut report = serde_json::to_string_pretty(&output.report)?;
        report.push('\n');
        fs::write(report_path, report)
            .with_context(|| format!("cannot write {}", report_path.display()))?;
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let seg = resolve_segmentation(&args.seg, &file)?;
    let weights = resolve_weights(&args.weights, &file)?;
    let stream = read_stream(&args.input)?;
    let voxels = segment(&stream, &seg)?;

    let mut voxel_stats = Vec::with_capacity(voxels.len());
    let mut dump = args.dump_graph.is_some().then(String::new);
    for v in &voxels {
        let graph = build_graph(v, &weights);
        let search = optimal_threshold(&graph);
        let (w_min, w_max, w_sum) = graph.edges.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, 0.0),
            |(lo, hi, sum), e| (lo.min(e.w), hi.max(e.w), sum + e.w),
        );
        let n_edges = graph.n_edges();
        voxel_stats.push(json!({
            "window": v.window_index,
            "voxel": v.voxel_index,
            "n_nodes": graph.n_nodes(),
            "n_edges": n_edges,
            "w_min": if n_edges == 0 { 0.0 } else { w_min },
            "w_max": if n_edges == 0 { 0.0 } else { w_max },
            "w_mean": if n_edges == 0 { 0.0 } else { w_sum / n_edges as f64 },
            "mst_max": search.mst_max,
            "t_opt": search.t_opt,
        }));
        if let Some(text) = dump.as_mut() {
            writeln!(text, "nodes {} edges {}", graph.n_nodes(), n_edges)?;
            for e in &graph.edges {
                writeln!(text, "{} {} {}", e.i, e.j, e.w)?;
            }
        }
    }
    if let (Some(path), Some(text)) = (&args.dump_graph, &dump) {
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }

    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "weights": weights,
        "segmentation": seg,
        "events_in": stream.len(),
        "n_voxels": voxels.len(),
        "voxels": voxel_stats,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_output(args.report.as_deref(), &text)
}

fn load_attention_params(args: &AttendArgs) -> Result<AttentionParams> {
    match &args.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read parameter file {}", path.display()))?;
            let params = params_from_json(&text)?;
            if params.d_in != 4 {
                bail!(evgraph::Error::Config(format!(
                    "attention layer expects d_in = 4 event features, parameter file has {}",
                    params.d_in
                )));
            }
            Ok(params)
        }
        None => Ok(AttentionParams::from_seed(4, args.d_out, args.seed)),
    }
}

fn cmd_attend(args: AttendArgs) -> Result<()> {
    let file = FileConfig::load(args.config.config.as_deref())?;
    let seg = resolve_segmentation(&args.seg, &file)?;
    let weights = resolve_weights(&args.weights, &file)?;
    let params = load_attention_params(&args)?;
    let stream = read_stream(&args.input)?;
    let voxels = segment(&stream, &seg)?;

    let mut out = String::from("window,voxel,node,kept");
    for c in 0..params.d_out {
        write!(out, ",f{c}")?;
    }
    out.push('\n');
    for v in &voxels {
        if v.is_empty() {
            continue;
        }
        let denoised = denoise_voxel(v, &weights);
        let feats = standardized_features(v.events());
        let aggregated = layer_forward(&denoised.graph, &feats, &params)?;
        let kept: std::collections::HashSet<usize> = denoised.kept.iter().copied().collect();
        for node in 0..denoised.graph.n_nodes() {
            write!(
                out,
                "{},{},{},{}",
                v.window_index,
                v.voxel_index,
                node,
                u8::from(kept.contains(&node))
            )?;
            for value in aggregated.get(node).expect("total output") {
                write!(out, ",{value}")?;
            }
            out.push('\n');
        }
    }
    fs::write(&args.out, out).with_context(|| format!("cannot write {}", args.out.display()))
}

fn read_labels(path: &Path, expected_len: usize) -> Result<Vec<EventLabel>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read label file {}", path.display()))?;
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "1" => labels.push(EventLabel::Signal),
            "0" => labels.push(EventLabel::Noise),
            other => bail!(evgraph::Error::Config(format!(
                "{}:{}: label must be 0 or 1, got {other:?}",
                path.display(),
                idx + 1
            ))),
        }
    }
    if labels.len() != expected_len {
        bail!(evgraph::Error::Config(format!(
            "label file {} has {} entries for {} events",
            path.display(),
            labels.len(),
            expected_len
        )));
    }
    Ok(labels)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let stream = read_stream(&args.input)?;
    let labels = read_labels(&args.labels, stream.len())?;
    let denoised = read_stream(&args.denoised)?;
    let labeled = LabeledEventStream {
        stream: stream.clone(),
        labels,
    };
    let kept = kept_indices_by_matching(&labeled.stream, &denoised)?;
    let metrics = evaluate(&labeled, &kept)?;
    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "events_in": labeled.stream.len(),
        "events_kept": kept.len(),
        "metrics": metrics,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_output(args.report.as_deref(), &text)
}
