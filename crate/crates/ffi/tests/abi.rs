use std::ffi::{CStr, CString};
use std::ptr;

use perfnet::dsp::{read_wav, StftGeometry};
use perfnet::midi::{write_midi, MidiScore, NoteEvent};
use perfnet::train::{save_checkpoint, Checkpoint};
use perfnet::{Model, ModelConfig};
use perfnet_ffi::*;

fn one_note_midi() -> Vec<u8> {
    let mut score = MidiScore::empty();
    score.notes.push(NoteEvent { pitch: 60, onset_s: 0.0, duration_s: 0.5, track: 0, program: None });
    score.duration_s = 0.5;
    write_midi(&score)
}

fn tiny_checkpoint(dir: &std::path::Path) -> CString {
    let geometry = StftGeometry { sample_rate: 8000, n_fft: 64, hop: 16 };
    let mut config = ModelConfig::new(geometry, 48, 71, 2);
    config.contour.encoder_widths = vec![8, 8];
    config.texture.hidden = 4;
    let model = Model::init(config, vec!["flute".into(), "piano".into()], 3).unwrap();
    let path = dir.join("tiny.pnet");
    save_checkpoint(&Checkpoint::from_model(model), &path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pnet_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn load_render_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny_checkpoint(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { pnet_model_load(path.as_ptr(), &mut model) }, PnetStatus::Ok);
    assert!(!model.is_null());
    assert_eq!(unsafe { pnet_model_instrument_count(model) }, 2);
    let label = unsafe { CStr::from_ptr(pnet_model_label(model, 1)) };
    assert_eq!(label.to_str().unwrap(), "piano");
    assert!(unsafe { pnet_model_label(model, 2) }.is_null());

    let midi = one_note_midi();
    let inst = CString::new("piano").unwrap();
    let (mut wav, mut len) = (ptr::null_mut(), 0usize);
    let status = unsafe { pnet_render_midi(model, midi.as_ptr(), midi.len(), inst.as_ptr(), 4, 7, &mut wav, &mut len) };
    assert_eq!(status, PnetStatus::Ok, "{}", last_error());
    let bytes = unsafe { std::slice::from_raw_parts(wav, len) }.to_vec();
    assert_eq!(&bytes[..4], b"RIFF");
    let audio = read_wav(&bytes).unwrap();
    assert_eq!(audio.sample_rate, 8000);
    assert!(!audio.samples.is_empty());
    unsafe {
        pnet_buffer_free(wav, len);
        pnet_model_free(model);
    }
}

#[test]
fn unknown_instrument_sets_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny_checkpoint(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { pnet_model_load(path.as_ptr(), &mut model) }, PnetStatus::Ok);
    let midi = one_note_midi();
    let inst = CString::new("tuba").unwrap();
    let (mut wav, mut len) = (ptr::null_mut(), 0usize);
    let status = unsafe { pnet_render_midi(model, midi.as_ptr(), midi.len(), inst.as_ptr(), 0, 0, &mut wav, &mut len) };
    assert_eq!(status, PnetStatus::UnknownInstrument);
    assert!(wav.is_null());
    let msg = last_error();
    assert!(msg.contains("tuba") && msg.contains("flute"), "{msg}");
    unsafe { pnet_model_free(model) };
}

#[test]
fn load_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("none.pnet").to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { pnet_model_load(missing.as_ptr(), &mut model) }, PnetStatus::Io);
    assert!(model.is_null());

    let junk = dir.path().join("junk.pnet");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { pnet_model_load(junk.as_ptr(), &mut model) }, PnetStatus::CorruptCheckpoint);

    let path = tiny_checkpoint(dir.path());
    let mut bytes = std::fs::read(path.to_str().unwrap()).unwrap();
    bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
    std::fs::write(path.to_str().unwrap(), bytes).unwrap();
    assert_eq!(unsafe { pnet_model_load(path.as_ptr(), &mut model) }, PnetStatus::VersionMismatch);

    assert_eq!(unsafe { pnet_model_load(ptr::null(), &mut model) }, PnetStatus::NullArgument);
    assert_eq!(unsafe { pnet_model_load(path.as_ptr(), ptr::null_mut()) }, PnetStatus::NullArgument);
}

#[test]
fn roll_json_round_trip() {
    let midi = one_note_midi();
    let mut json = ptr::null_mut();
    let status = unsafe { pnet_midi_to_roll_json(midi.as_ptr(), midi.len(), 62.5, &mut json) };
    assert_eq!(status, PnetStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { pnet_string_free(json) };
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let notes = value["notes"].as_array().unwrap();
    assert_eq!(notes.len(), 1);
    assert_eq!(notes[0]["pitch"], 60);

    let garbage = b"MThd\0\0";
    let status = unsafe { pnet_midi_to_roll_json(garbage.as_ptr(), garbage.len(), 62.5, &mut json) };
    assert_eq!(status, PnetStatus::MalformedMidi);
    assert!(json.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_frees_are_ignored() {
    unsafe {
        pnet_model_free(ptr::null_mut());
        pnet_buffer_free(ptr::null_mut(), 0);
        pnet_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { pnet_model_instrument_count(ptr::null()) }, 0);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/perfnet.h");
    for name in [
        "pnet_last_error",
        "pnet_model_load",
        "pnet_model_free",
        "pnet_model_instrument_count",
        "pnet_model_label",
        "pnet_render_midi",
        "pnet_midi_to_roll_json",
        "pnet_buffer_free",
        "pnet_string_free",
        "PNET_STATUS_VERSION_MISMATCH",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
