use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use focalvid::blur_inference::{binarize_sequence, estimate_blur_maps};
use focalvid::blur_synth::{
    build_davis_blur, build_with_schedule, generate_training_sample, max_depth, FocusSchedule, SynthesizedDataset,
    BENCHMARK_FOCAL_RANGE, BENCHMARK_INITIAL_FOCAL_POINT, BENCHMARK_N_MAX, DEFAULT_SIGMA,
};
use focalvid::config::PipelineConfig;
use focalvid::fixtures::{complementary_fixture, standard_fixture};
use focalvid::flow_prop::{complete_flows, propagate_to_saturation};
use focalvid::image::MaskSequence;
use focalvid::io::{
    frame_file_name, load_depth, load_flows, load_frames, load_masks, save_sequence, write_atomic, write_blur_map,
    write_depth, write_frame, write_mask, write_provenance, BlurMapEncoding,
};
use focalvid::manifest::{write_dataset, DatasetManifest};
use focalvid::metrics::{evaluate, BlockMatcher};
use focalvid::mgst::{BlockStats, ModelWeights};
use focalvid::pipeline::{ablate, refocus, FlowSource, Variant};

#[derive(Parser)]
#[command(name = "focalvid", version, about = "Synthetic focal blur, blur-map estimation, propagation and refocusing")]
struct Cli {
    /// TOML pipeline configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blur a sharp sequence with a moving focal plane and write a dataset directory.
    Synth(SynthArgs),
    /// Estimate blur maps and focus masks from blurred frames and depth.
    Estimate(EstimateArgs),
    /// Copy sharp content into masked pixels along optical flow.
    Propagate(PropagateArgs),
    /// Run the refocusing transformer on the low-resolution split of a dataset.
    #[command(visible_alias = "dabit-forward")]
    Forward(ForwardArgs),
    /// PSNR, SSIM and tOF of a predicted sequence against ground truth.
    Metrics(MetricsArgs),
    /// Compare the model with and without propagation and blur maps.
    Ablate(AblateArgs),
    /// Write a deterministic synthetic sequence (frames and depth).
    Fixture(FixtureArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    #[arg(long, value_name = "DIR")]
    depth: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Benchmark recipe: whole sequence, focus from 0 to the deepest value, n_max 7, range 100.
    #[arg(long, conflicts_with_all = ["df_dt", "f0", "fr", "n_max", "sigma"])]
    davis_blur: bool,
    /// Focus rate in depth units per frame (default: deepest value / frame count).
    #[arg(long)]
    df_dt: Option<f64>,
    /// Initial focal point (default 0).
    #[arg(long)]
    f0: Option<f64>,
    /// Focal range (default 100).
    #[arg(long)]
    fr: Option<f64>,
    /// Largest kernel size (default 7).
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Sequence identifier stored in the manifest.
    #[arg(long, default_value = "sequence")]
    id: String,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    #[arg(long, value_name = "DIR")]
    depth: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
#[group(multiple = false)]
struct FlowArgs {
    /// Directory of `fwd_*.flo` and `bwd_*.flo` files.
    #[arg(long, value_name = "DIR")]
    flows: Option<PathBuf>,
    /// Exact flows of a global translation, e.g. `translation=1,0`.
    #[arg(long, value_name = "SPEC")]
    synthetic_flows: Option<String>,
}

impl FlowArgs {
    /// Without either option the flows are estimated by block matching.
    fn source(&self) -> Result<FlowSource> {
        if let Some(dir) = &self.flows {
            return Ok(FlowSource::Given(load_flows(dir, "fwd")?, load_flows(dir, "bwd")?));
        }
        if let Some(spec) = &self.synthetic_flows {
            return parse_translation(spec).map(|(dx, dy)| FlowSource::Translation(dx, dy));
        }
        Ok(FlowSource::Estimated(BlockMatcher::default()))
    }
}

fn parse_translation(spec: &str) -> Result<(f64, f64)> {
    let rest = spec
        .strip_prefix("translation=")
        .with_context(|| format!("unsupported synthetic flow `{spec}`, expected translation=DX,DY"))?;
    let (dx, dy) = rest
        .split_once(',')
        .with_context(|| format!("expected translation=DX,DY, got `{spec}`"))?;
    Ok((dx.trim().parse()?, dy.trim().parse()?))
}

#[derive(Args)]
struct PropagateArgs {
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    #[arg(long, value_name = "DIR")]
    masks: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    flow: FlowArgs,
    /// Forward-backward consistency threshold in pixels.
    #[arg(long)]
    tau_c: Option<f64>,
    #[arg(long)]
    max_passes: Option<usize>,
}

#[derive(Args)]
struct WeightArgs {
    /// Load weights from a safetensors file instead of seeding them.
    #[arg(long, value_name = "FILE")]
    weights: Option<PathBuf>,
    /// Write the weights that were used.
    #[arg(long, value_name = "FILE")]
    save_weights: Option<PathBuf>,
}

#[derive(Args)]
struct ForwardArgs {
    /// Dataset directory written by `synth`.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    weights: WeightArgs,
    /// Replace the blur maps with all-ones maps.
    #[arg(long)]
    ones_maps: bool,
    /// Propagate before the transformer.
    #[arg(long)]
    propagate: bool,
    #[command(flatten)]
    flow: FlowArgs,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long, value_name = "DIR")]
    pred: PathBuf,
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    /// Restrict the masked scores to pixels where these masks are 1.
    #[arg(long, value_name = "DIR")]
    masks: Option<PathBuf>,
    /// Write the report as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    flow: FlowArgs,
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// Translating texture over a left-to-right depth ramp with a near block.
    Standard,
    /// Depth halves swap every frame, giving complementary masks under fixed focus.
    Complementary,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "standard")]
    kind: FixtureKind,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    config.validate()?;
    Ok(config)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn ensure_dir(dir: &Path, what: &str) -> Result<()> {
    if !dir.is_dir() {
        bail!("{what} directory {} does not exist", dir.display());
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, config: &PipelineConfig) -> Result<()> {
    ensure_dir(&args.frames, "frames")?;
    ensure_dir(&args.depth, "depth")?;
    let frames = load_frames(&args.frames)?;
    let depth = load_depth(&args.depth)?;
    let explicit = args.df_dt.is_some() || args.f0.is_some() || args.fr.is_some() || args.n_max.is_some() || args.sigma.is_some();
    let data: SynthesizedDataset = if args.davis_blur {
        build_davis_blur(&frames, &depth)?
    } else if explicit {
        let schedule = FocusSchedule {
            initial_focal_point: args.f0.unwrap_or(BENCHMARK_INITIAL_FOCAL_POINT),
            focal_range: args.fr.unwrap_or(BENCHMARK_FOCAL_RANGE),
            focus_rate: args.df_dt.unwrap_or(max_depth(&depth) / frames.len() as f64),
            n_max: args.n_max.unwrap_or(BENCHMARK_N_MAX),
            sigma: args.sigma.unwrap_or(DEFAULT_SIGMA),
            length: frames.len(),
            reference_count: 0,
        };
        build_with_schedule(&frames, &depth, schedule)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        generate_training_sample(&mut rng, &frames, &depth, &config.schedule).context(
            "random schedules need more frames than schedule.clip_length; use --davis-blur or explicit schedule flags for short sequences",
        )?
    };
    let manifest = write_dataset(&args.out, &args.id, &data)?;
    println!(
        "wrote {} frames to {} (n_max {}, focus {:.3} -> {:.3})",
        manifest.frame_count,
        args.out.display(),
        manifest.schedule.n_max,
        manifest.focal_points.first().copied().unwrap_or_default(),
        manifest.focal_points.last().copied().unwrap_or_default()
    );
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs, config: &PipelineConfig) -> Result<()> {
    ensure_dir(&args.frames, "frames")?;
    ensure_dir(&args.depth, "depth")?;
    let est = &config.estimate;
    let frames = load_frames(&args.frames)?;
    let depth = load_depth(&args.depth)?;
    let maps = estimate_blur_maps(
        &frames,
        &depth,
        args.levels.unwrap_or(est.levels),
        args.bins.unwrap_or(est.depth_bins),
    )?;
    let masks = binarize_sequence(&maps, args.tolerance.unwrap_or(est.tolerance))?;
    save_sequence(&args.out.join("blur_maps"), maps.frames(), |p, m| write_blur_map(p, m, BlurMapEncoding::Unit))?;
    save_sequence(&args.out.join("masks"), masks.frames(), write_mask)?;
    println!("estimated {} blur maps into {}", maps.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct PropagationSummary {
    frames: usize,
    passes: usize,
    masked_before: usize,
    masked_after: usize,
    filled_pixels: usize,
}

fn count_masked(masks: &MaskSequence) -> usize {
    masks.iter().flat_map(|m| m.data()).filter(|&&v| v >= 0.5).count()
}

fn cmd_propagate(args: &PropagateArgs, config: &PipelineConfig) -> Result<()> {
    ensure_dir(&args.frames, "frames")?;
    ensure_dir(&args.masks, "masks")?;
    let frames = load_frames(&args.frames)?;
    let masks = load_masks(&args.masks)?;
    let mut prop = config.propagation.clone();
    if let Some(t) = args.tau_c {
        prop.consistency_threshold = t;
    }
    if let Some(n) = args.max_passes {
        prop.max_passes = n;
    }
    let (fwd, bwd) = args.flow.source()?.resolve(&frames)?;
    let (fwd, bwd, _) = complete_flows(&fwd, &bwd, &masks, &prop.completion)?;
    let (result, passes) =
        propagate_to_saturation(&frames, &masks, &fwd, &bwd, prop.consistency_threshold, prop.max_passes)?;
    save_sequence(&args.out.join("frames"), result.frames.frames(), write_frame)?;
    save_sequence(&args.out.join("masks"), result.masks.frames(), write_mask)?;
    let (w, h) = frames.dims();
    let prov_dir = args.out.join("provenance");
    std::fs::create_dir_all(&prov_dir).with_context(|| format!("creating {}", prov_dir.display()))?;
    for (t, p) in result.provenance.iter().enumerate() {
        write_provenance(&prov_dir.join(frame_file_name(t, "png")), w, h, p)?;
    }
    let summary = PropagationSummary {
        frames: frames.len(),
        passes,
        masked_before: count_masked(&masks),
        masked_after: count_masked(&result.masks),
        filled_pixels: count_masked(&masks) - count_masked(&result.masks),
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    println!(
        "filled {} of {} masked pixels in {} pass(es)",
        summary.filled_pixels, summary.masked_before, passes
    );
    Ok(())
}

fn model_weights(args: &WeightArgs, config: &PipelineConfig) -> Result<ModelWeights> {
    let weights = match &args.weights {
        Some(path) => ModelWeights::load(&config.transformer, path)
            .with_context(|| format!("loading weights {}", path.display()))?,
        None => ModelWeights::seeded(&config.transformer, config.seed)?,
    };
    if let Some(path) = &args.save_weights {
        weights.save(path)?;
    }
    Ok(weights)
}

#[derive(Serialize)]
struct ForwardSummary {
    frames: usize,
    width: usize,
    height: usize,
    filled_pixels: usize,
    active_windows: usize,
    skipped_windows: usize,
    blocks: Vec<BlockStats>,
}

fn cmd_forward(args: &ForwardArgs, config: &PipelineConfig) -> Result<()> {
    let manifest = DatasetManifest::load(&args.dataset)?;
    let lr = manifest.load_low(&args.dataset)?;
    let weights = model_weights(&args.weights, config)?;
    let flows = args.flow.source()?.resolve(&lr.blurred)?;
    let variant = Variant {
        propagation: args.propagate,
        blur_maps: !args.ones_maps,
    };
    let out = refocus(&weights, &lr, &flows, variant, &config.propagation)?;
    save_sequence(&args.out.join("frames"), out.frames.frames(), write_frame)?;
    let (width, height) = out.frames.dims();
    let summary = ForwardSummary {
        frames: out.frames.len(),
        width,
        height,
        filled_pixels: out.filled_pixels,
        active_windows: out.active_windows,
        skipped_windows: out.skipped_windows,
        blocks: out.blocks,
    };
    write_json(&args.out.join("stats.json"), &summary)?;
    println!(
        "refocused {} frames to {}x{}: {} active, {} skipped windows",
        summary.frames, width, height, summary.active_windows, summary.skipped_windows
    );
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    ensure_dir(&args.pred, "prediction")?;
    ensure_dir(&args.gt, "ground truth")?;
    let pred = load_frames(&args.pred)?;
    let gt = load_frames(&args.gt)?;
    let masks = args.masks.as_deref().map(load_masks).transpose()?;
    let report = evaluate(&pred, &gt, masks.as_ref())?;
    print!("{}", report.to_table());
    if let Some(path) = &args.json {
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_ablate(args: &AblateArgs, config: &PipelineConfig) -> Result<()> {
    let manifest = DatasetManifest::load(&args.dataset)?;
    let full = manifest.load_full(&args.dataset)?;
    let lr = manifest.load_low(&args.dataset)?;
    let weights = model_weights(&args.weights, config)?;
    let flows = args.flow.source()?.resolve(&lr.blurred)?;
    let report = ablate(&weights, &full, &lr, &flows, &config.propagation)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.json {
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_fixture(args: &FixtureArgs, config: &PipelineConfig) -> Result<()> {
    let fx = match args.kind {
        FixtureKind::Standard => standard_fixture(args.width, args.height, args.frames, config.seed)?,
        FixtureKind::Complementary => complementary_fixture(args.width, args.height, args.frames, config.seed)?,
    };
    save_sequence(&args.out.join("frames"), fx.frames.frames(), write_frame)?;
    save_sequence(&args.out.join("depth"), fx.depth.frames(), write_depth)?;
    println!(
        "wrote {} frames of {}x{} to {} (motion {},{} px/frame)",
        fx.frames.len(),
        args.width,
        args.height,
        args.out.display(),
        fx.step.0,
        fx.step.1
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    if let Some(n) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, &config),
        Command::Estimate(a) => cmd_estimate(a, &config),
        Command::Propagate(a) => cmd_propagate(a, &config),
        Command::Forward(a) => cmd_forward(a, &config),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Ablate(a) => cmd_ablate(a, &config),
        Command::Fixture(a) => cmd_fixture(a, &config),
        Command::Config => {
            print!("{}", config.to_toml_string()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
