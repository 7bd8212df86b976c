//! Command-line front end: `train`, `paint`, `synth`, `eval` and `replay`.
//!
//! Every subcommand also reads an optional TOML file (`--config`) with one
//! table per subcommand using the long flag names (dashes become
//! underscores). Flags given on the command line win over the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::brush::{generate_brush, BrushPrimitive};
use crate::canvas::CanvasImage;
use crate::datagen::{dump_samples, generate_samples, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{
    benchmark_timing, evaluate_images, evaluate_synthetic, hardware_note, EvalReport,
    SyntheticEvalConfig,
};
use crate::inference::{paint, BlankCanvas, FrameMode, InferenceConfig};
use crate::nn::{PredictorConfig, StrokeNet};
use crate::record::StrokeRecordFile;
use crate::render::AlphaMode;
use crate::stroke::LossWeights;
use crate::train::{run_training, Checkpoint, RunOptions, TrainConfig};

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "BRUSHWORK_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "brushwork",
    version,
    about = "Stroke-based painting with a feed-forward stroke predictor"
)]
pub struct Cli {
    /// TOML file with defaults for the chosen subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the stroke predictor on synthetic data (resumable).
    Train(TrainArgs),
    /// Paint an image with a trained model.
    Paint(PaintArgs),
    /// Dump synthetic training samples.
    Synth(SynthArgs),
    /// Evaluate a model: pixel error on images, stroke metrics on synthetic
    /// scenes, or wall-clock timing.
    Eval(EvalArgs),
    /// Re-render a stroke record.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Default,
    Small,
    Tiny,
}

impl Arch {
    pub fn config(self) -> PredictorConfig {
        match self {
            Arch::Default => PredictorConfig::default(),
            Arch::Small => PredictorConfig::small(),
            Arch::Tiny => PredictorConfig::tiny(),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Directory for checkpoint.bin and metrics.jsonl.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Network size.
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub log_every: Option<u64>,
    /// Global gradient-norm clip, 0 disables.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Procedural brush: oil, rectangle or circle.
    #[arg(long)]
    pub brush: Option<String>,
    #[arg(long)]
    pub brush_size: Option<usize>,
    #[arg(long)]
    pub lambda_r: Option<f64>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    #[arg(long)]
    pub lambda_w: Option<f64>,
    #[arg(long)]
    pub lambda_bce: Option<f64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long, action = ArgAction::SetTrue)]
    pub resume: bool,
    /// Print every n-th logged record to stderr (0 = quiet).
    #[arg(long)]
    pub print_every: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaintArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Brush name; defaults to the brush the model was trained with.
    #[arg(long)]
    pub brush: Option<String>,
    /// Brush texture image (grayscale + alpha) instead of a named brush.
    #[arg(long)]
    pub brush_image: Option<PathBuf>,
    /// Highest scale index to paint.
    #[arg(long)]
    pub scales_cap: Option<usize>,
    #[arg(long, value_enum)]
    pub frames: Option<FrameArg>,
    /// Stroke record path (default: <output-dir>/strokes.json).
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub blank: Option<BlankArg>,
    /// Threshold coverage for crisp strokes.
    #[arg(long, action = ArgAction::SetTrue)]
    pub binary_alpha: bool,
    /// Patches per forward pass.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Foreground strokes per block.
    #[arg(long)]
    pub strokes: Option<usize>,
    #[arg(long)]
    pub overlap_threshold: Option<f64>,
    #[arg(long)]
    pub brush: Option<String>,
    #[arg(long)]
    pub brush_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Pixel,
    Stroke,
    Timing,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<EvalMode>,
    /// Images (or directories of PNGs) for pixel mode.
    #[arg(long, num_args = 1..)]
    pub input: Option<Vec<PathBuf>>,
    /// Synthetic images for stroke mode.
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub strokes: Option<usize>,
    #[arg(long)]
    pub overlap_threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Square sizes for timing mode.
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Option<Vec<usize>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub brush: Option<String>,
    #[arg(long)]
    pub scales_cap: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Write the JSON report here as well as printing the text summary.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayArgs {
    /// Stroke record written by `paint`.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Output PNG.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Brush image, required when the record used a custom brush.
    #[arg(long)]
    pub brush_image: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub frames: Option<FrameArg>,
    /// Frame directory (default: next to the output).
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameArg {
    None,
    Scale,
    Stroke,
}

impl From<FrameArg> for FrameMode {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::None => FrameMode::None,
            FrameArg::Scale => FrameMode::Scale,
            FrameArg::Stroke => FrameMode::Stroke,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlankArg {
    Black,
    White,
}

impl From<BlankArg> for BlankCanvas {
    fn from(b: BlankArg) -> Self {
        match b {
            BlankArg::Black => BlankCanvas::Black,
            BlankArg::White => BlankCanvas::White,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    train: TrainArgs,
    paint: PaintArgs,
    synth: SynthArgs,
    eval: EvalArgs,
    replay: ReplayArgs,
}

/// Field-wise merge: values already set (from flags) take precedence.
trait Merge {
    fn merge(self, file: Self) -> Self;
}

macro_rules! merge_impl {
    ($ty:ty { $($opt:ident),* } flags { $($flag:ident),* }) => {
        impl Merge for $ty {
            fn merge(self, file: Self) -> Self {
                Self {
                    $($opt: self.$opt.or(file.$opt),)*
                    $($flag: self.$flag || file.$flag,)*
                }
            }
        }
    };
}

merge_impl!(TrainArgs {
    output_dir, arch, iterations, batch_size, learning_rate, seed, checkpoint_every, log_every,
    grad_clip, brush, brush_size, lambda_r, lambda_l1, lambda_w, lambda_bce, print_every
} flags { resume });
merge_impl!(PaintArgs {
    input, output_dir, model, brush, brush_image, scales_cap, frames, record, blank, batch_size
} flags { binary_alpha });
merge_impl!(SynthArgs {
    output_dir, count, seed, patch_size, strokes, overlap_threshold, brush, brush_size
} flags {});
merge_impl!(EvalArgs {
    model, mode, input, images, strokes, overlap_threshold, seed, resolutions, runs, brush,
    scales_cap, batch_size, report
} flags {});
merge_impl!(ReplayArgs { record, output, brush_image, frames, frames_dir } flags {});

/// Failure carrying the exit status it maps to.
#[derive(Debug)]
enum Failure {
    /// Missing or contradictory arguments; usage goes to stderr.
    Usage {
        subcommand: &'static str,
        message: String,
    },
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Image(_) | Error::Malformed { .. } | Error::Json(_) => EXIT_IO,
        Error::ModelMismatch(_) | Error::Version { .. } => EXIT_MISMATCH,
        _ => EXIT_INVALID,
    }
}

fn required<T>(v: Option<T>, subcommand: &'static str, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::Usage {
        subcommand,
        message: format!("missing required argument --{flag}"),
    })
}

fn usage_text(subcommand: &str) -> String {
    let mut cmd = Cli::command();
    match cmd.find_subcommand_mut(subcommand) {
        Some(sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage {
            subcommand,
            message,
        }) => {
            eprintln!("error: {message}\n\n{}", usage_text(subcommand));
            EXIT_INVALID
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "{WORKERS_ENV} must be a positive integer, got `{v}`"
        ))
    })?;
    // A pool that is already initialized (e.g. in tests) is left as is.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => train(a.merge(file.train)),
        Command::Paint(a) => paint_cmd(a.merge(file.paint)),
        Command::Synth(a) => synth(a.merge(file.synth)),
        Command::Eval(a) => eval(a.merge(file.eval)),
        Command::Replay(a) => replay(a.merge(file.replay)),
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    let output_dir = required(a.output_dir, "train", "output-dir")?;
    let d = TrainConfig::default();
    let w = LossWeights::default();
    let cfg = TrainConfig {
        iterations: a.iterations.unwrap_or(d.iterations),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        weights: LossWeights {
            lambda_r: a.lambda_r.unwrap_or(w.lambda_r),
            lambda_l1: a.lambda_l1.unwrap_or(w.lambda_l1),
            lambda_w: a.lambda_w.unwrap_or(w.lambda_w),
            lambda_bce: a.lambda_bce.unwrap_or(w.lambda_bce),
        },
        seed: a.seed.unwrap_or(d.seed),
        checkpoint_every: a.checkpoint_every.unwrap_or(d.checkpoint_every),
        log_every: a.log_every.unwrap_or(d.log_every),
        grad_clip: a.grad_clip.unwrap_or(d.grad_clip),
        brush: a.brush.unwrap_or(d.brush),
        brush_size: a.brush_size.unwrap_or(d.brush_size),
    };
    let predictor = a.arch.unwrap_or(Arch::Default).config();
    let opts = RunOptions {
        output_dir,
        resume: a.resume,
        print_every: a.print_every.unwrap_or(10),
    };
    let summary = run_training(predictor, cfg, &opts)?;
    if let Some(last) = summary.history.last() {
        eprintln!(
            "finished at iteration {}, last total loss {:.4}",
            summary.iteration, last.total
        );
    }
    println!("{}", summary.checkpoint_path.display());
    Ok(())
}

/// Network plus the brush it was trained with.
fn load_model(path: &Path) -> Result<(StrokeNet, BrushPrimitive)> {
    let ck = Checkpoint::load(path)?;
    let net = StrokeNet::from_checkpoint(&ck)?;
    let brush = generate_brush(&ck.train.brush, ck.train.brush_size, ck.train.brush_size)?;
    Ok((net, brush))
}

fn pick_brush(
    default: BrushPrimitive,
    name: Option<&str>,
    image: Option<&Path>,
) -> Result<BrushPrimitive> {
    match (name, image) {
        (_, Some(path)) => BrushPrimitive::load(path),
        (Some(name), None) => BrushPrimitive::resolve(name, None),
        (None, None) => Ok(default),
    }
}

fn paint_cmd(a: PaintArgs) -> CliResult<()> {
    let input = required(a.input, "paint", "input")?;
    let output_dir = required(a.output_dir, "paint", "output-dir")?;
    let model = required(a.model, "paint", "model")?;
    let (net, trained_brush) = load_model(&model)?;
    let brush = pick_brush(trained_brush, a.brush.as_deref(), a.brush_image.as_deref())?;
    let target = CanvasImage::load(&input)?;
    let cfg = InferenceConfig {
        max_scales: a.scales_cap,
        blank: a.blank.map_or(BlankCanvas::Black, Into::into),
        record_strokes: true,
        frames: a.frames.map_or(FrameMode::None, Into::into),
        alpha_mode: if a.binary_alpha {
            AlphaMode::Binary
        } else {
            AlphaMode::Continuous
        },
        batch_size: a
            .batch_size
            .unwrap_or(InferenceConfig::default().batch_size),
    };
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()).into());
    }
    let result = paint(&target, &net, &brush, &cfg)?;
    std::fs::create_dir_all(&output_dir).map_err(Error::from)?;
    result.final_image.save(output_dir.join("final.png"))?;
    let record = StrokeRecordFile::from_painting(&result, brush.name(), cfg.blank, cfg.alpha_mode);
    let record_path = a.record.unwrap_or_else(|| output_dir.join("strokes.json"));
    record.save(&record_path)?;
    if !result.frames.is_empty() {
        write_frames(&result.frames, &output_dir.join("frames"))?;
    }
    eprintln!(
        "painted {}x{} with {} strokes over {} scale(s)",
        target.width(),
        target.height(),
        record.stroke_count(),
        record.scales.len()
    );
    Ok(())
}

fn write_frames(frames: &[CanvasImage], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        f.save(dir.join(format!("frame_{i:05}.png")))?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let output_dir = required(a.output_dir, "synth", "output-dir")?;
    let d = SynthConfig::default();
    let patch = a
        .patch_size
        .unwrap_or(PredictorConfig::default().patch_size);
    let cfg = SynthConfig {
        overlap_threshold: a.overlap_threshold.unwrap_or(d.overlap_threshold),
        seed: a.seed.unwrap_or(d.seed),
        ..SynthConfig::for_patch(patch, a.strokes.unwrap_or(d.foreground_strokes_per_block))
    };
    cfg.validate()?;
    let size = a.brush_size.unwrap_or(TrainConfig::default().brush_size);
    let brush = generate_brush(a.brush.as_deref().unwrap_or("oil"), size, size)?;
    let samples = generate_samples(&cfg, &brush, a.count.unwrap_or(16))?;
    dump_samples(&samples, &output_dir)?;
    eprintln!(
        "wrote {} samples to {}",
        samples.len(),
        output_dir.display()
    );
    Ok(())
}

fn collect_pngs(inputs: &[PathBuf]) -> Result<Vec<(String, CanvasImage)>> {
    let mut paths = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
            found.sort();
            paths.extend(found);
        } else {
            paths.push(p.clone());
        }
    }
    paths
        .into_iter()
        .map(|p| Ok((p.display().to_string(), CanvasImage::load(&p)?)))
        .collect()
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let model = required(a.model, "eval", "model")?;
    let (net, trained_brush) = load_model(&model)?;
    let brush = pick_brush(trained_brush, a.brush.as_deref(), None)?;
    let cfg = InferenceConfig {
        max_scales: a.scales_cap,
        batch_size: a
            .batch_size
            .unwrap_or(InferenceConfig::default().batch_size)
            .max(1),
        ..InferenceConfig::default()
    };
    let report = match a.mode.unwrap_or(EvalMode::Stroke) {
        EvalMode::Pixel => {
            let inputs = required(a.input, "eval", "input")?;
            let images = collect_pngs(&inputs)?;
            if images.is_empty() {
                return Err(Error::InvalidConfig("no PNG images found".into()).into());
            }
            evaluate_images(&images, &net, &brush, &cfg)?
        }
        EvalMode::Stroke => {
            let d = SyntheticEvalConfig::default();
            let sc = SyntheticEvalConfig {
                images: a.images.unwrap_or(d.images),
                strokes_per_image: a.strokes.unwrap_or(d.strokes_per_image),
                overlap_threshold: a.overlap_threshold.unwrap_or(d.overlap_threshold),
                seed: a.seed.unwrap_or(d.seed),
            };
            evaluate_synthetic(&sc, &net, &brush, cfg.batch_size)?
        }
        EvalMode::Timing => {
            let res = a.resolutions.unwrap_or_else(|| vec![128, 256, 512]);
            let timings = benchmark_timing(&net, &brush, &res, a.runs.unwrap_or(5), &cfg)?;
            let mut r = EvalReport::from_items(Vec::new());
            r.timings = timings;
            r.notes.push(hardware_note());
            r
        }
    };
    print!("{}", report.to_text());
    if let Some(path) = a.report {
        std::fs::write(&path, report.to_json()?).map_err(Error::from)?;
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> CliResult<()> {
    let record_path = required(a.record, "replay", "record")?;
    let output = required(a.output, "replay", "output")?;
    let record = StrokeRecordFile::load(&record_path)?;
    let brush = match a.brush_image {
        Some(path) => BrushPrimitive::load(path)?,
        None => BrushPrimitive::resolve(&record.brush, None)?,
    };
    let frames = a.frames.map_or(FrameMode::None, Into::into);
    let (image, frame_images) = record.replay(&brush, frames)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(Error::from)?;
    }
    image.save(&output)?;
    if !frame_images.is_empty() {
        let dir = a
            .frames_dir
            .unwrap_or_else(|| output.with_file_name("frames"));
        write_frames(&frame_images, &dir)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let file: ConfigFile = toml::from_str(
            "[train]\niterations = 50\nseed = 3\nresume = true\n[paint]\nscales_cap = 2\nframes = \"scale\"\n",
        )
        .unwrap();
        let flags = TrainArgs {
            seed: Some(9),
            ..Default::default()
        };
        let merged = flags.merge(file.train);
        assert_eq!(merged.iterations, Some(50));
        assert_eq!(merged.seed, Some(9));
        assert!(merged.resume);
        let paint = PaintArgs::default().merge(file.paint);
        assert_eq!(paint.scales_cap, Some(2));
        assert_eq!(paint.frames, Some(FrameArg::Scale));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[train]\nitrations = 5\n").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), EXIT_INVALID);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_IO);
        assert_eq!(exit_code(&Error::ModelMismatch("x".into())), EXIT_MISMATCH);
        assert_eq!(
            exit_code(&Error::Version {
                found: 2,
                expected: 1
            }),
            EXIT_MISMATCH
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
