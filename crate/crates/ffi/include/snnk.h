#ifndef SNNK_H
#define SNNK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SnnkStatus {
  SNNK_STATUS_OK = 0,
  SNNK_STATUS_NULL_POINTER = 1,
  SNNK_STATUS_INVALID_ARGUMENT = 2,
  SNNK_STATUS_SHAPE_MISMATCH = 3,
  SNNK_STATUS_UNSUPPORTED = 4,
  SNNK_STATUS_NUMERICAL = 5,
  SNNK_STATUS_SERIALIZATION = 6,
  SNNK_STATUS_PANIC = 7,
} SnnkStatus;

// Opaque SNNK layer.
typedef struct SnnkLayerHandle SnnkLayerHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. The pointer stays valid
// until the next failing call on the same thread.
const char *snnk_last_error(void);

// Library version as a static string.
const char *snnk_version(void);

// SNNK layer replacing `x ↦ f(W x + b)` with `W` of shape
// `out_dim × in_dim`. `m` features per axis, shape parameter `a <= 0`.
//
// # Safety
// `weights` must hold `out_dim * in_dim` values, `bias` `out_dim`, and
// `activation` must be a NUL-terminated string.
enum SnnkStatus snnk_layer_from_ffl(const double *weights,
                                    size_t out_dim,
                                    size_t in_dim,
                                    const double *bias,
                                    const char *activation,
                                    size_t m,
                                    double a,
                                    uint64_t seed,
                                    struct SnnkLayerHandle **out);

// ReLU-SNNK layer for weight rows `W` (`out_dim × in_dim`) with a Gaussian
// projection of `features` rows. Outputs estimate the first-order
// arc-cosine kernel between each row and the input.
//
// # Safety
// `weights` must hold `out_dim * in_dim` values.
enum SnnkStatus snnk_layer_relu(const double *weights,
                                size_t out_dim,
                                size_t in_dim,
                                size_t features,
                                uint64_t seed,
                                struct SnnkLayerHandle **out);

// Applies the layer to `rows` inputs of length `in_dim`; writes
// `rows * output_dim` values to `out`.
//
// # Safety
// `layer` must be a live handle, `x` must hold `rows * in_dim` values and
// `out` must have room for `out_len` values.
enum SnnkStatus snnk_layer_forward(const struct SnnkLayerHandle *layer,
                                   const double *x,
                                   size_t rows,
                                   size_t in_dim,
                                   double *out,
                                   size_t out_len);

// Writes input dimension, output dimension and feature length.
//
// # Safety
// `layer` must be a live handle; each non-null pointer must be writable.
enum SnnkStatus snnk_layer_shape(const struct SnnkLayerHandle *layer,
                                 size_t *input_dim,
                                 size_t *output_dim,
                                 size_t *feature_len);

// Number of real trainable scalars in the feature-weight matrix.
//
// # Safety
// `layer` must be a live handle and `out` writable.
enum SnnkStatus snnk_layer_parameters(const struct SnnkLayerHandle *layer, size_t *out);

// Serializes the layer; free the string with [`snnk_string_free`].
//
// # Safety
// `layer` must be a live handle and `out` writable.
enum SnnkStatus snnk_layer_to_json(const struct SnnkLayerHandle *layer, char **out);

// Rebuilds a layer from [`snnk_layer_to_json`] output.
//
// # Safety
// `json` must be NUL-terminated and `out` writable.
enum SnnkStatus snnk_layer_from_json(const char *json, struct SnnkLayerHandle **out);

// # Safety
// `layer` must come from this library and not be freed twice. Null is a
// no-op.
void snnk_layer_free(struct SnnkLayerHandle *layer);

// # Safety
// `s` must come from this library and not be freed twice. Null is a no-op.
void snnk_string_free(char *s);

// Exact `f(W x + b)` for one input, for comparison with a layer.
//
// # Safety
// Buffers must hold `out_dim * in_dim`, `out_dim`, `in_dim` and `out_dim`
// values respectively; `activation` must be NUL-terminated.
enum SnnkStatus snnk_ffl_forward(const double *weights,
                                 size_t out_dim,
                                 size_t in_dim,
                                 const double *bias,
                                 const char *activation,
                                 const double *x,
                                 double *out);

// Arc-cosine kernel `K_n(x, y)` for `n <= 2`.
//
// # Safety
// `x` and `y` must hold `dim` values; `out` must be writable.
enum SnnkStatus snnk_arc_cosine(uint32_t n,
                                const double *x,
                                const double *y,
                                size_t dim,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SNNK_H */
