/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef PERFNET_H
#define PERFNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all entry points.
typedef enum PnetStatus {
  PNET_STATUS_OK = 0,
  PNET_STATUS_NULL_ARGUMENT = 1,
  PNET_STATUS_INVALID_UTF8 = 2,
  PNET_STATUS_IO = 3,
  PNET_STATUS_CORRUPT_CHECKPOINT = 4,
  PNET_STATUS_VERSION_MISMATCH = 5,
  PNET_STATUS_MALFORMED_MIDI = 6,
  PNET_STATUS_UNKNOWN_INSTRUMENT = 7,
  PNET_STATUS_INVALID_ARGUMENT = 8,
  PNET_STATUS_INTERNAL = 9,
} PnetStatus;

// Opaque handle to a loaded checkpoint.
typedef struct PnetModel PnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *pnet_last_error(void);

// Loads a checkpoint file into a new handle stored in `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PnetStatus pnet_model_load(const char *path, struct PnetModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from [`pnet_model_load`] not yet freed.
void pnet_model_free(struct PnetModel *model);

// Number of instrument labels in the checkpoint.
//
// # Safety
// `model` must be null or a live handle.
size_t pnet_model_instrument_count(const struct PnetModel *model);

// Label at `index`, or null when out of range. Owned by the handle.
//
// # Safety
// `model` must be null or a live handle.
const char *pnet_model_label(const struct PnetModel *model, size_t index);

// Renders SMF bytes to a 16-bit PCM WAV file in memory.
//
// `instrument` may be null to use the first label. On success `*out_wav`
// and `*out_len` describe a buffer to release with [`pnet_buffer_free`].
//
// # Safety
// `model` must be a live handle, `midi` must point to `midi_len` bytes,
// `instrument` must be null or NUL-terminated, and the out-pointers valid.
enum PnetStatus pnet_render_midi(const struct PnetModel *model,
                                 const uint8_t *midi,
                                 size_t midi_len,
                                 const char *instrument,
                                 uint32_t gl_iters,
                                 uint64_t seed,
                                 uint8_t **out_wav,
                                 size_t *out_len);

// Converts SMF bytes to the sparse pianoroll JSON at `frame_rate`, covering
// all 128 pitches. Release the string with [`pnet_string_free`].
//
// # Safety
// `midi` must point to `midi_len` bytes and `out_json` must be valid.
enum PnetStatus pnet_midi_to_roll_json(const uint8_t *midi,
                                       size_t midi_len,
                                       double frame_rate,
                                       char **out_json);

// Frees a buffer from [`pnet_render_midi`]. Null is ignored.
//
// # Safety
// `data`/`len` must come from one successful call and not be freed twice.
void pnet_buffer_free(uint8_t *data, size_t len);

// Frees a string from [`pnet_midi_to_roll_json`]. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void pnet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERFNET_H */
