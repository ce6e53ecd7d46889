//! `perfnet` command-line interface.
//!
//! Exit codes: 0 success, 1 user error (bad flags, missing or malformed
//! input, unknown instrument), 2 internal error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dsp::{write_wav, StftGeometry};
use crate::midi::{parse_midi, score_to_pianoroll};
use crate::model::ModelConfig;
use crate::pipeline::{render_roll, DEFAULT_GL_ITERS};
use crate::service::{serve, ServiceConfig};
use crate::train::{
    build_dataset, evaluate, load_checkpoint, save_checkpoint, write_metrics_csv, DatasetManifest, DatasetOptions,
    LossWeights, TrainConfig, TrainError, Trainer,
};
use crate::nn::AdamConfig;
use crate::{Error, ModelError};

#[derive(Debug, Parser)]
#[command(name = "perfnet", version, about = "Render expressive audio from a score with a two-stage spectrogram model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a MIDI file and show its notes or pianoroll.
    Ingest(IngestArgs),
    /// Train a model on a manifest of (MIDI, WAV, label) entries.
    Train(TrainArgs),
    /// Render a MIDI file to WAV with a checkpoint.
    Synth(SynthArgs),
    /// Report log-spectral distance of a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Run the built-in numerical property suites.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub midi: PathBuf,
    /// Print the sparse pianoroll JSON instead of a note summary.
    #[arg(long)]
    pub print_roll: bool,
    /// Emit the summary as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value_t = StftGeometry::default().frame_rate())]
    pub frame_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub pitch_min: u8,
    #[arg(long, default_value_t = 127)]
    pub pitch_max: u8,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint written at the end (and every --checkpoint-every steps).
    #[arg(long)]
    pub out: PathBuf,
    /// Total number of optimizer steps, counted from the start of training.
    #[arg(long)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 256)]
    pub segment_frames: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_coarse: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_refined: f64,
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Metrics CSV path; defaults to `<out>.metrics.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Continue from a checkpoint saved with optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub pitch_min: u8,
    #[arg(long, default_value_t = 127)]
    pub pitch_max: u8,
    /// Comma-separated ContourNet encoder widths.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long)]
    pub blocks_per_band: Option<usize>,
    #[arg(long)]
    pub texture_hidden: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub midi: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Instrument label; defaults to the checkpoint's first label.
    #[arg(long)]
    pub instrument: Option<String>,
    #[arg(long, default_value_t = DEFAULT_GL_ITERS)]
    pub gl_iters: usize,
    /// Seed of the initial Griffin-Lim phase.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Checkpoint to load; repeatable.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub persist_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub gl_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let internal = match &e {
            Error::Model(m) => is_internal_model(m),
            Error::Train(t) => is_internal_train(t),
            _ => false,
        };
        if internal {
            CliError::Internal(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        Error::from(e).into()
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Error::from(e).into()
    }
}

impl From<crate::train::CheckpointError> for CliError {
    fn from(e: crate::train::CheckpointError) -> Self {
        Error::from(e).into()
    }
}

fn is_internal_model(e: &ModelError) -> bool {
    matches!(e, ModelError::NonFinite(_))
}

fn is_internal_train(e: &TrainError) -> bool {
    match e {
        TrainError::NonFiniteLoss { .. } => true,
        TrainError::Model(m) => is_internal_model(m),
        _ => false,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn print(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Internal(format!("writing output: {e}")))
}

fn to_json(value: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(a, out),
        Command::Train(a) => train(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Serve(a) => serve_cmd(a),
        Command::Selftest(a) => selftest(a, out),
    }
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    notes: usize,
    duration_s: f64,
    frames: usize,
    dropped_notes: usize,
    ticks_per_quarter: u16,
    tempo_changes: usize,
    warnings: &'a [crate::midi::IngestWarning],
}

fn ingest(a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = read_file(&a.midi)?;
    let score = parse_midi(&bytes).map_err(|e| CliError::User(format!("{}: {e}", a.midi.display())))?;
    let conv = score_to_pianoroll(&score, a.frame_rate, a.pitch_min, a.pitch_max)
        .map_err(|e| CliError::User(e.to_string()))?;
    if a.print_roll {
        return print(out, to_json(&conv.roll.to_sparse())?);
    }
    let summary = IngestSummary {
        notes: score.notes.len(),
        duration_s: score.duration_s,
        frames: conv.roll.frames(),
        dropped_notes: conv.dropped_notes,
        ticks_per_quarter: score.ticks_per_quarter,
        tempo_changes: score.tempo_map.len().saturating_sub(1),
        warnings: &score.warnings,
    };
    if a.json {
        return print(out, to_json(&summary)?);
    }
    print(
        out,
        format!(
            "notes: {}\nduration: {:.3} s\nframes: {} at {} fps\ndropped (out of range): {}\nwarnings: {}",
            summary.notes,
            summary.duration_s,
            summary.frames,
            a.frame_rate,
            summary.dropped_notes,
            summary.warnings.len()
        ),
    )?;
    for n in &score.notes {
        print(out, format!("  pitch {:3}  onset {:8.3} s  duration {:7.3} s", n.pitch, n.onset_s, n.duration_s))?;
    }
    Ok(())
}

fn model_config(a: &TrainArgs, labels: usize) -> ModelConfig {
    let mut config = ModelConfig::new(StftGeometry::default(), a.pitch_min, a.pitch_max, labels);
    if let Some(w) = &a.widths {
        config.contour.encoder_widths = w.clone();
    }
    if let Some(b) = a.bands {
        config.texture.num_bands = b;
    }
    if let Some(b) = a.blocks_per_band {
        config.texture.blocks_per_band = b;
    }
    if let Some(h) = a.texture_hidden {
        config.texture.hidden = h;
    }
    config
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let resumed = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let config = match &resumed {
        Some(ck) => ck.model.config().clone(),
        None => model_config(&a, manifest.labels().len()),
    };
    config.validate()?;
    let options = DatasetOptions {
        geometry: config.geometry,
        pitch_min: config.pitch_min,
        pitch_max: config.pitch_max,
    };
    let dataset = build_dataset(&manifest, &options)?;
    if let Some(ck) = &resumed {
        if ck.model.labels() != dataset.labels.as_slice() {
            return Err(CliError::User(format!(
                "manifest labels {:?} differ from checkpoint labels {:?}",
                dataset.labels,
                ck.model.labels()
            )));
        }
    }
    let train_config = TrainConfig {
        steps: a.steps,
        batch_size: a.batch_size,
        segment_frames: a.segment_frames,
        seed: a.seed,
        loss_weights: LossWeights {
            coarse: a.lambda_coarse,
            refined: a.lambda_refined,
        },
        adam: AdamConfig {
            learning_rate: a.learning_rate,
            ..AdamConfig::default()
        },
        checkpoint_every: a.checkpoint_every,
    };
    let mut trainer = match resumed {
        Some(ck) => Trainer::resume(&dataset, ck, train_config)?,
        None => Trainer::new(&dataset, config, train_config)?,
    };
    let start = trainer.step_count();
    let rows = trainer.run_until(a.steps, |ck| save_checkpoint(ck, &a.out).map_err(TrainError::from))?;
    save_checkpoint(trainer.checkpoint(), &a.out)?;
    let metrics_path = a.metrics.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".metrics.csv");
        PathBuf::from(p)
    });
    let mut csv = Vec::new();
    write_metrics_csv(&rows, &mut csv).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&metrics_path, &csv)?;
    print(
        out,
        format!(
            "trained steps {}..{} on {} pair(s); checkpoint {}; metrics {}",
            start,
            trainer.step_count(),
            dataset.len(),
            a.out.display(),
            metrics_path.display()
        ),
    )?;
    match rows.last() {
        Some(r) => print(
            out,
            format!(
                "final loss {} (coarse {}, refined {})",
                r.loss.total, r.loss.coarse, r.loss.refined
            ),
        ),
        None => print(out, "no steps run"),
    }
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let midi = read_file(&a.midi)?;
    if !a.checkpoint.exists() {
        return Err(CliError::User(format!("{}: no such file", a.checkpoint.display())));
    }
    let ck = load_checkpoint(&a.checkpoint)?;
    let model = ck.model;
    let index = model.label_index(a.instrument.as_deref())?;
    let score = parse_midi(&midi).map_err(|e| CliError::User(format!("{}: {e}", a.midi.display())))?;
    let cfg = model.config();
    let conv = score_to_pianoroll(&score, model.frame_rate(), cfg.pitch_min, cfg.pitch_max)
        .map_err(|e| CliError::User(e.to_string()))?;
    let rendered = render_roll(&model, &conv.roll, index, a.gl_iters, a.seed)?;
    write_file(&a.output, &write_wav(&rendered.audio))?;
    let t = rendered.timings;
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    print(
        out,
        format!(
            "wrote {}\nduration: {:.4} s\nframes: {}\ninstrument: {}\ntiming: contour {:.1} ms, texture {:.1} ms, griffin-lim {:.1} ms ({} iterations), total {:.1} ms",
            a.output.display(),
            rendered.audio.duration_s(),
            rendered.frames,
            model.labels().get(index).map(String::as_str).unwrap_or("-"),
            ms(t.contour),
            ms(t.texture),
            ms(t.griffin_lim),
            a.gl_iters,
            ms(t.total())
        ),
    )
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let cfg = ck.model.config();
    let mut dataset = build_dataset(
        &manifest,
        &DatasetOptions {
            geometry: cfg.geometry,
            pitch_min: cfg.pitch_min,
            pitch_max: cfg.pitch_max,
        },
    )?;
    // Condition indices must follow the checkpoint's label order.
    let manifest_labels = dataset.labels.clone();
    for pair in &mut dataset.pairs {
        let label = &manifest_labels[pair.instrument];
        pair.instrument = ck.model.label_index(Some(label))?;
    }
    let report = evaluate(&ck.model, &dataset)?;
    if a.json {
        return print(out, to_json(&report)?);
    }
    for row in &report.rows {
        print(out, format!("{:.6}\t{}\t{}", row.lsd, row.frames, row.source))?;
    }
    print(
        out,
        format!("LSD {:.6} ± {:.6} over {} pair(s)", report.mean, report.std_dev, report.rows.len()),
    )
}

fn serve_cmd(a: ServeArgs) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => ServiceConfig::load(p).map_err(|e| CliError::User(e.to_string()))?,
        None => ServiceConfig::default(),
    };
    if let Some(h) = a.host {
        config.host = h;
    }
    if let Some(p) = a.port {
        config.port = p;
    }
    if !a.checkpoints.is_empty() {
        config.checkpoints = a.checkpoints;
    }
    if a.persist_dir.is_some() {
        config.persist_dir = a.persist_dir;
    }
    if let Some(w) = a.workers {
        config.workers = w;
    }
    if let Some(g) = a.gl_iters {
        config.gl_iters = g;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    runtime.block_on(serve(config)).map_err(|e| match e {
        crate::service::ServiceError::Io(e) => CliError::Internal(e.to_string()),
        other => CliError::User(other.to_string()),
    })
}

fn selftest(a: SelftestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let results = crate::selftest::run_all();
    if a.json {
        print(out, to_json(&results)?)?;
    } else {
        for r in &results {
            print(
                out,
                format!("{} {:<24} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail),
            )?;
        }
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Internal(format!("{failed} self-test suite(s) failed")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["perfnet", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("synth"));
    }

    #[test]
    fn unknown_flag_is_user_error() {
        let (code, _, err) = run_capture(&["perfnet", "ingest", "--midi", "x.mid", "--bogus"]);
        assert_eq!(code, 1);
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn missing_file_names_the_path() {
        let (code, _, err) = run_capture(&["perfnet", "ingest", "--midi", "/nonexistent/file.mid"]);
        assert_eq!(code, 1);
        assert!(err.contains("/nonexistent/file.mid"));
    }
}
