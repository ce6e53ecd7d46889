use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use perfnet::dsp::{read_wav, StftGeometry};
use perfnet::midi::{write_midi, MidiScore, NoteEvent};
use perfnet::train::synthetic::write_synthetic_corpus;
use perfnet::train::{load_checkpoint, save_checkpoint, Checkpoint};
use perfnet::{Model, ModelConfig};

fn perfnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perfnet")).args(args).output().expect("run perfnet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn one_note(dir: &Path) -> PathBuf {
    let mut score = MidiScore::empty();
    score.notes.push(NoteEvent { pitch: 60, onset_s: 0.0, duration_s: 0.5, track: 0, program: None });
    score.duration_s = 0.5;
    let path = dir.join("one.mid");
    std::fs::write(&path, write_midi(&score)).unwrap();
    path
}

fn untrained_checkpoint(dir: &Path) -> PathBuf {
    let mut config = ModelConfig::new(StftGeometry::default(), 48, 83, 2);
    config.contour.encoder_widths = vec![16, 16];
    config.texture.hidden = 4;
    let model = Model::init(config, vec!["cello".into(), "violin".into()], 7).unwrap();
    let path = dir.join("untrained.pnet");
    save_checkpoint(&Checkpoint::from_model(model), &path).unwrap();
    path
}

#[test]
fn synth_duration_follows_frame_count() {
    let dir = tempfile::tempdir().unwrap();
    let (midi, ck) = (one_note(dir.path()), untrained_checkpoint(dir.path()));
    let wav = dir.path().join("out.wav");
    let o = perfnet(&["synth", "--midi", s(&midi), "--checkpoint", s(&ck), "--gl-iters", "8", "-o", s(&wav)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("duration:") && text.contains("frames:") && text.contains("timing:"), "{text}");
    assert!(text.contains("instrument: cello"));

    let bytes = std::fs::read(&wav).unwrap();
    assert_eq!(&bytes[..4], b"RIFF");
    let audio = read_wav(&bytes).unwrap();
    // 0.5 s at 62.5 fps is 31.25 frames, rounded up to 32.
    let frames = 32.0;
    assert!(text.contains("frames: 32"), "{text}");
    assert!((audio.duration_s() - frames / 62.5).abs() <= 256.0 / 16_000.0 + 1e-9);
}

#[test]
fn synth_with_zero_iterations_still_writes_wav() {
    let dir = tempfile::tempdir().unwrap();
    let (midi, ck) = (one_note(dir.path()), untrained_checkpoint(dir.path()));
    let wav = dir.path().join("zero.wav");
    let args = ["synth", "--midi", s(&midi), "--checkpoint", s(&ck), "--instrument", "violin", "--gl-iters", "0", "-o", s(&wav)];
    let o = perfnet(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(&wav).unwrap();
    assert!(read_wav(&first).is_ok());
    assert!(perfnet(&args).status.success());
    assert_eq!(std::fs::read(&wav).unwrap(), first);
}

#[test]
fn synth_unknown_label_lists_available() {
    let dir = tempfile::tempdir().unwrap();
    let (midi, ck) = (one_note(dir.path()), untrained_checkpoint(dir.path()));
    let wav = dir.path().join("x.wav");
    let o = perfnet(&["synth", "--midi", s(&midi), "--checkpoint", s(&ck), "--instrument", "tuba", "-o", s(&wav)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("tuba") && err.contains("cello") && err.contains("violin"), "{err}");
    assert!(!wav.exists());
}

#[test]
fn missing_files_exit_one_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let ck = untrained_checkpoint(dir.path());
    let missing = dir.path().join("absent.mid");
    let o = perfnet(&["synth", "--midi", s(&missing), "--checkpoint", s(&ck), "-o", "x.wav"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.mid"));

    let midi = one_note(dir.path());
    let o = perfnet(&["synth", "--midi", s(&midi), "--checkpoint", "/nonexistent/ck.pnet", "-o", "x.wav"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/ck.pnet"));
}

#[test]
fn unknown_flags_are_rejected() {
    let o = perfnet(&["synth", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = perfnet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = perfnet(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["ingest", "train", "synth", "eval", "serve", "selftest"] {
        assert!(stdout(&o).contains(sub), "{sub}");
    }
}

#[test]
fn ingest_prints_sparse_roll() {
    let dir = tempfile::tempdir().unwrap();
    let midi = one_note(dir.path());
    let o = perfnet(&["ingest", "--midi", s(&midi), "--print-roll"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let roll: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(roll["frame_rate"], 62.5);
    assert_eq!(roll["pitch_min"], 0);
    assert_eq!(roll["pitch_max"], 127);
    assert_eq!(roll["notes"], serde_json::json!([{"pitch": 60, "onset_frame": 0, "offset_frame": 31}]));

    let o = perfnet(&["ingest", "--midi", s(&midi), "--json"]);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["notes"], 1);

    std::fs::write(dir.path().join("bad.mid"), b"nope").unwrap();
    let o = perfnet(&["ingest", "--midi", s(&dir.path().join("bad.mid"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MalformedHeader"));
}

fn train_args<'a>(manifest: &'a str, out: &'a str, steps: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--manifest", manifest, "--out", out, "--steps", steps, "--seed", "3", "--batch-size", "1",
        "--segment-frames", "32", "--pitch-min", "48", "--pitch-max", "83", "--widths", "8,8", "--texture-hidden",
        "3",
    ]
}

#[test]
fn train_is_reproducible_and_eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic_corpus(dir.path(), 1, 0.6, 16_000).unwrap();
    let (a, b) = (dir.path().join("a.pnet"), dir.path().join("b.pnet"));
    for out in [&a, &b] {
        let o = perfnet(&train_args(s(&manifest), s(out), "4"));
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("final loss"));
    }
    let csv_a = std::fs::read(dir.path().join("a.pnet.metrics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(dir.path().join("b.pnet.metrics.csv")).unwrap());
    assert!(String::from_utf8_lossy(&csv_a).starts_with("step,loss,loss_coarse,loss_refined"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let o = perfnet(&["eval", "--checkpoint", s(&a), "--manifest", s(&manifest), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
    assert!(report["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn train_zero_steps_writes_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic_corpus(dir.path(), 1, 0.6, 16_000).unwrap();
    let out = dir.path().join("init.pnet");
    let o = perfnet(&train_args(s(&manifest), s(&out), "0"));
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = load_checkpoint(&out).unwrap();
    assert_eq!(ck.step, 0);
    let init = Model::init(ck.model.config().clone(), vec!["synth".into()], 3).unwrap();
    assert_eq!(ck.model, init);
}

#[test]
fn train_reports_alignment_errors_with_entry() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic_corpus(dir.path(), 1, 1.0, 16_000).unwrap();
    let wav = dir.path().join("phrase000.wav");
    let audio = read_wav(&std::fs::read(&wav).unwrap()).unwrap();
    let half = perfnet::dsp::AudioBuffer::new(16_000, audio.samples[..audio.samples.len() / 2].to_vec()).unwrap();
    std::fs::write(&wav, perfnet::dsp::write_wav(&half)).unwrap();
    let out = dir.path().join("x.pnet");
    let o = perfnet(&train_args(s(&manifest), s(&out), "1"));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("AlignmentError") && err.contains("phrase000"), "{err}");
}

#[test]
fn selftest_passes() {
    let o = perfnet(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}
