#ifndef LMULM_H
#define LMULM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success; every failure is negative.
typedef enum LmuStatus {
  LMU_STATUS_OK = 0,
  LMU_STATUS_NULL_POINTER = -1,
  LMU_STATUS_INVALID_ARGUMENT = -2,
  LMU_STATUS_DOMAIN = -3,
  LMU_STATUS_NUMERIC = -4,
  LMU_STATUS_IO = -5,
  LMU_STATUS_CHECKPOINT = -6,
  LMU_STATUS_PANIC = -7,
} LmuStatus;

// Memory evaluation strategy for [`lmu_system_run`].
typedef enum LmuBackend {
  LMU_BACKEND_STATE_SPACE = 0,
  LMU_BACKEND_RUNGE_KUTTA1 = 1,
  LMU_BACKEND_RUNGE_KUTTA2 = 2,
  LMU_BACKEND_RUNGE_KUTTA4 = 4,
  LMU_BACKEND_FFT = 8,
} LmuBackend;

// A trained model loaded from a checkpoint.
typedef struct LmuModel LmuModel;

// A continuous Legendre system together with its ZOH discretization.
typedef struct LmuSystem LmuSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The most recent error message on this thread, or NULL if none. The
// pointer stays valid until the next failing call on the same thread.
const char *lmu_last_error(void);

// Library version as a static NUL-terminated string.
const char *lmu_version(void);

// Builds the order-`q` Legendre system with window `theta` (in steps) and
// discretizes it.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum LmuStatus lmu_system_new(double theta, size_t q, struct LmuSystem **out);

// Releases a system. NULL is ignored.
//
// # Safety
// `sys` must come from [`lmu_system_new`] and not be freed twice.
void lmu_system_free(struct LmuSystem *sys);

// Memory order q, or 0 for NULL.
//
// # Safety
// `sys` must be NULL or a live handle.
size_t lmu_system_order(const struct LmuSystem *sys);

// Copies the discrete matrices: `a_bar` receives q·q values row-major,
// `b_bar` q values and `spectral_radius` one. Any output may be NULL.
//
// # Safety
// `sys` must be a live handle; non-NULL outputs must have room for the
// stated number of values.
enum LmuStatus lmu_system_discrete(const struct LmuSystem *sys,
                                   double *a_bar,
                                   double *b_bar,
                                   double *spectral_radius);

// Impulse response of length `n` into `out`, q rows of n values.
//
// # Safety
// `sys` must be a live handle and `out` must hold q·n values.
enum LmuStatus lmu_system_impulse(const struct LmuSystem *sys, size_t n, double *out);

// Runs the memory over an n×d input (row-major) and writes every state
// into `out` as n·q·d values: entry `(t·q + i)·d + c` is state `i` of
// channel `c` after step `t`.
//
// # Safety
// `sys` must be a live handle, `x` must hold n·d values and `out` n·q·d.
enum LmuStatus lmu_system_run(const struct LmuSystem *sys,
                              int32_t backend,
                              const double *x,
                              size_t n,
                              size_t d,
                              double *out);

// Analytic FLOPs per token for one component (`"ss"`, `"rk"`, `"fft"`,
// `"transform"`, `"qkv"`, `"qk"`, `"mprime"`, `"m"`, `"ffn"`).
//
// # Safety
// `component` must be a NUL-terminated string and `out` writable.
enum LmuStatus lmu_predict_flops(const char *component,
                                 size_t n,
                                 size_t d,
                                 size_t d_prime,
                                 size_t q,
                                 size_t q_prime,
                                 size_t r,
                                 double *out);

// Loads a checkpoint written by the trainer, in either precision.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum LmuStatus lmu_model_load(const char *path, struct LmuModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from [`lmu_model_load`] and not be freed twice.
void lmu_model_free(struct LmuModel *model);

// Vocabulary size (257 for byte models), or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t lmu_model_vocab(const struct LmuModel *model);

// Longest sequence the model accepts, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t lmu_model_context(const struct LmuModel *model);

// Next-byte loss in nats over `len` bytes: `len − 1` predictions, so
// 2 ≤ len ≤ context + 1. `per_position` may be NULL or hold len − 1 values.
//
// # Safety
// `model` must be a live handle, `bytes` must hold `len` bytes and the
// outputs must be writable.
enum LmuStatus lmu_model_loss(const struct LmuModel *model,
                              const uint8_t *bytes,
                              size_t len,
                              double *mean,
                              double *per_position);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LMULM_H */
