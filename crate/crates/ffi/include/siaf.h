/* SPDX-License-Identifier: Apache-2.0 */

#ifndef SIAF_H
#define SIAF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a library call. Values match the `siaf` command exit codes
// where they overlap.
typedef enum SiafStatus {
  SIAF_STATUS_OK = 0,
  // Reference and simulator traces differ.
  SIAF_STATUS_MISMATCH = 1,
  // Unreadable or malformed file, or invalid configuration.
  SIAF_STATUS_INPUT_ERROR = 2,
  // Simulation failed: overflow, capacity or unsupported layer.
  SIAF_STATUS_SIMULATION_ERROR = 3,
  // Null pointer, bad UTF-8 or a too-small output buffer.
  SIAF_STATUS_INVALID_ARGUMENT = 4,
  // A Rust panic was caught at the boundary.
  SIAF_STATUS_PANIC = 5,
} SiafStatus;

// Opaque model handle.
typedef struct SiafModel SiafModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a model from a TOML config and a weight file.
//
// # Safety
// Paths must be nul-terminated strings; `out` must be writable.
enum SiafStatus siaf_model_load(const char *config_path,
                                const char *weights_path,
                                struct SiafModel **out);

// Generates a random model: `size` is `tiny`, `small` or `paper-384`.
//
// # Safety
// `size` must be a nul-terminated string; `out` must be writable.
enum SiafStatus siaf_model_generate(const char *size,
                                    uint64_t seed,
                                    uint32_t time_steps,
                                    struct SiafModel **out);

// Frees a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void siaf_model_free(struct SiafModel *model);

// Writes `[channels, height, width]` of the model input.
//
// # Safety
// `out` must point to three writable `size_t`.
enum SiafStatus siaf_model_input_shape(const struct SiafModel *model, size_t *out);

// Number of logits the model produces.
//
// # Safety
// `model` must be a live handle or null (returns 0).
size_t siaf_model_classes(const struct SiafModel *model);

// Simulates one inference. Logits go to `logits` (capacity `logits_cap`);
// the JSON report goes to `*report_json` when that pointer is non-null.
//
// # Safety
// `image` must hold `image_len` bytes in `[c][h][w]` order; `logits` must
// hold `logits_cap` values; `report_json` may be null.
enum SiafStatus siaf_run(const struct SiafModel *model,
                         const uint8_t *image,
                         size_t image_len,
                         const char *schedule,
                         int32_t *logits,
                         size_t logits_cap,
                         char **report_json);

// Runs reference and simulator and compares every trace entry. Returns
// `Mismatch` on difference; the error message names the first one.
//
// # Safety
// As for [`siaf_run`].
enum SiafStatus siaf_verify(const struct SiafModel *model,
                            const uint8_t *image,
                            size_t image_len,
                            const char *schedule);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void siaf_string_free(char *s);

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *siaf_last_error_message(void);

// Processing elements of the default array configuration.
size_t siaf_total_pes(void);

// Peak giga synaptic operations per second of the default configuration.
double siaf_peak_gsops(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIAF_H */
