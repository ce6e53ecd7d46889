//! C ABI over the perfnet renderer.
//!
//! Every function returns a [`PnetStatus`]. On failure the message is kept
//! per thread and can be read with [`pnet_last_error`]. Buffers and strings
//! handed out by the library must be released with [`pnet_buffer_free`] and
//! [`pnet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use perfnet::dsp::write_wav;
use perfnet::midi::{parse_midi, score_to_pianoroll};
use perfnet::train::Checkpoint;
use perfnet::{render_roll, Model};

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    CorruptCheckpoint = 4,
    VersionMismatch = 5,
    MalformedMidi = 6,
    UnknownInstrument = 7,
    InvalidArgument = 8,
    Internal = 9,
}

/// Opaque handle to a loaded checkpoint.
pub struct PnetModel {
    model: Model<f32>,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: PnetStatus, msg: impl Into<String>) -> PnetStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting panics into [`PnetStatus::Internal`].
fn guard(f: impl FnOnce() -> PnetStatus) -> PnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == PnetStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(PnetStatus::Internal, "panic inside perfnet"),
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, PnetStatus> {
    if p.is_null() {
        return Err(fail(PnetStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PnetStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// # Safety
/// `data` must be null with `len == 0`, or point to `len` readable bytes.
unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Result<&'a [u8], PnetStatus> {
    if data.is_null() {
        if len == 0 {
            return Ok(&[]);
        }
        return Err(fail(PnetStatus::NullArgument, "null buffer with non-zero length"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn hand_out(bytes: Vec<u8>, out_data: *mut *mut u8, out_len: *mut usize) {
    let boxed = bytes.into_boxed_slice();
    let len = boxed.len();
    let raw = Box::into_raw(boxed) as *mut u8;
    // SAFETY: callers check both out-pointers for null before producing output.
    unsafe {
        *out_data = raw;
        *out_len = len;
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file into a new handle stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnet_model_load(path: *const c_char, out: *mut *mut PnetModel) -> PnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(PnetStatus::NullArgument, "null output pointer");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => return fail(PnetStatus::Io, format!("{path}: {e}")),
        };
        let ck = match Checkpoint::from_bytes(&bytes) {
            Ok(ck) => ck,
            Err(e @ perfnet::train::CheckpointError::VersionMismatch { .. }) => {
                return fail(PnetStatus::VersionMismatch, e.to_string())
            }
            Err(e) => return fail(PnetStatus::CorruptCheckpoint, e.to_string()),
        };
        let labels = ck
            .model
            .labels()
            .iter()
            .map(|l| CString::new(l.replace('\0', " ")).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(PnetModel { model: ck.model, labels }));
        PnetStatus::Ok
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`pnet_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pnet_model_free(model: *mut PnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of instrument labels in the checkpoint.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnet_model_instrument_count(model: *const PnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.labels.len())
}

/// Label at `index`, or null when out of range. Owned by the handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnet_model_label(model: *const PnetModel, index: usize) -> *const c_char {
    match model.as_ref().and_then(|m| m.labels.get(index)) {
        Some(l) => l.as_ptr(),
        None => ptr::null(),
    }
}

/// Renders SMF bytes to a 16-bit PCM WAV file in memory.
///
/// `instrument` may be null to use the first label. On success `*out_wav`
/// and `*out_len` describe a buffer to release with [`pnet_buffer_free`].
///
/// # Safety
/// `model` must be a live handle, `midi` must point to `midi_len` bytes,
/// `instrument` must be null or NUL-terminated, and the out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn pnet_render_midi(
    model: *const PnetModel,
    midi: *const u8,
    midi_len: usize,
    instrument: *const c_char,
    gl_iters: u32,
    seed: u64,
    out_wav: *mut *mut u8,
    out_len: *mut usize,
) -> PnetStatus {
    guard(|| {
        let Some(handle) = model.as_ref() else {
            return fail(PnetStatus::NullArgument, "null model handle");
        };
        if out_wav.is_null() || out_len.is_null() {
            return fail(PnetStatus::NullArgument, "null output pointer");
        }
        *out_wav = ptr::null_mut();
        *out_len = 0;
        let bytes = match bytes_arg(midi, midi_len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let label = if instrument.is_null() {
            None
        } else {
            match str_arg(instrument) {
                Ok(l) => Some(l),
                Err(s) => return s,
            }
        };
        let m = &handle.model;
        let index = match m.label_index(label) {
            Ok(i) => i,
            Err(e) => return fail(PnetStatus::UnknownInstrument, e.to_string()),
        };
        let score = match parse_midi(bytes) {
            Ok(s) => s,
            Err(e) => return fail(PnetStatus::MalformedMidi, e.to_string()),
        };
        let cfg = m.config();
        let roll = match score_to_pianoroll(&score, m.frame_rate(), cfg.pitch_min, cfg.pitch_max) {
            Ok(c) => c.roll,
            Err(e) => return fail(PnetStatus::InvalidArgument, e.to_string()),
        };
        match render_roll(m, &roll, index, gl_iters as usize, seed) {
            Ok(r) => {
                hand_out(write_wav(&r.audio), out_wav, out_len);
                PnetStatus::Ok
            }
            Err(e) => fail(PnetStatus::Internal, e.to_string()),
        }
    })
}

/// Converts SMF bytes to the sparse pianoroll JSON at `frame_rate`, covering
/// all 128 pitches. Release the string with [`pnet_string_free`].
///
/// # Safety
/// `midi` must point to `midi_len` bytes and `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pnet_midi_to_roll_json(
    midi: *const u8,
    midi_len: usize,
    frame_rate: f64,
    out_json: *mut *mut c_char,
) -> PnetStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(PnetStatus::NullArgument, "null output pointer");
        }
        *out_json = ptr::null_mut();
        let bytes = match bytes_arg(midi, midi_len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let score = match parse_midi(bytes) {
            Ok(s) => s,
            Err(e) => return fail(PnetStatus::MalformedMidi, e.to_string()),
        };
        let roll = match score_to_pianoroll(&score, frame_rate, 0, 127) {
            Ok(c) => c.roll.to_sparse(),
            Err(e) => return fail(PnetStatus::InvalidArgument, e.to_string()),
        };
        let json = match serde_json::to_string(&roll) {
            Ok(j) => j,
            Err(e) => return fail(PnetStatus::Internal, e.to_string()),
        };
        match CString::new(json) {
            Ok(c) => {
                *out_json = c.into_raw();
                PnetStatus::Ok
            }
            Err(e) => fail(PnetStatus::Internal, e.to_string()),
        }
    })
}

/// Frees a buffer from [`pnet_render_midi`]. Null is ignored.
///
/// # Safety
/// `data`/`len` must come from one successful call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pnet_buffer_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

/// Frees a string from [`pnet_midi_to_roll_json`]. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
