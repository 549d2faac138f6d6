#ifndef MIXQ_H
#define MIXQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MixqStatus {
  MIXQ_STATUS_OK = 0,
  MIXQ_STATUS_NULL_POINTER = 1,
  MIXQ_STATUS_INVALID_ARGUMENT = 2,
  MIXQ_STATUS_NO_FEASIBLE_PLAN = 3,
  MIXQ_STATUS_INFEASIBLE_PLAN = 4,
  MIXQ_STATUS_FIELD_OVERFLOW = 5,
  MIXQ_STATUS_DEGENERATE_SYSTEM = 6,
  MIXQ_STATUS_BUFFER_TOO_SMALL = 7,
  MIXQ_STATUS_INTERNAL = 99,
} MixqStatus;

typedef enum MixqValidation {
  MIXQ_VALIDATION_TRUST = 0,
  MIXQ_VALIDATION_SHADOW = 1,
  MIXQ_VALIDATION_SHADOW_ALLOW_ILLEGAL = 2,
} MixqValidation;

typedef enum MixqVariant {
  MIXQ_VARIANT_NAIVE = 0,
  MIXQ_VARIANT_REORDERED = 1,
} MixqVariant;

/**
 * Opaque emulator context.
 */
typedef struct MixqEmulator MixqEmulator;

/**
 * Instruction tallies; `segmentation` is a subset of `bit_ops`.
 */
typedef struct MixqCounts {
  uint64_t sisd_arith;
  uint64_t simd_mul;
  uint64_t simd_addsub;
  uint64_t bit_ops;
  uint64_t loads_stores;
  uint64_t segmentation;
} MixqCounts;

typedef struct MixqPlan {
  uint32_t seq_bits;
  uint32_t ker_bits;
  uint32_t seq_per_lane;
  uint32_t ker_per_lane;
  uint32_t slot_bits;
  uint32_t register_bits;
  uint32_t lane_bits;
  uint32_t accum_rounds;
} MixqPlan;

typedef struct MixqCostParams {
  double alpha;
  double beta;
} MixqCostParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread; empty if none. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *mixq_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mixq_version(void);

enum MixqStatus mixq_emulator_new(enum MixqValidation validation, struct MixqEmulator **out);

/**
 * Releases a handle from [`mixq_emulator_new`]; null is ignored.
 */
void mixq_emulator_free(struct MixqEmulator *emu);

enum MixqStatus mixq_emulator_reset(struct MixqEmulator *emu);

enum MixqStatus mixq_emulator_read_counters(const struct MixqEmulator *emu, struct MixqCounts *out);

/**
 * Densest legal plan on one shape, packing the whole kernel in a lane when
 * possible.
 */
enum MixqStatus mixq_derive_plan(uint32_t seq_bits,
                                 uint32_t ker_bits,
                                 uint32_t register_bits,
                                 uint32_t lane_bits,
                                 uint32_t accum_rounds,
                                 size_t kernel_len,
                                 struct MixqPlan *out);

/**
 * Cheapest plan and kernel over all shapes. `params` may be null for the
 * uncalibrated defaults. Any of the outputs except `plan` may be null.
 */
enum MixqStatus mixq_select_plan(uint32_t seq_bits,
                                 uint32_t ker_bits,
                                 size_t kernel_len,
                                 size_t seq_len,
                                 const struct MixqCostParams *params,
                                 struct MixqPlan *plan,
                                 enum MixqVariant *variant,
                                 double *cost);

/**
 * Packed convolution of `seq` with `ker`. Writes `seq_len + ker_len - 1`
 * outputs; `out_cap` smaller than that fails with `BufferTooSmall` and
 * still stores the required length in `out_len`. Counters accumulate on
 * `emu`.
 */
enum MixqStatus mixq_conv(struct MixqEmulator *emu,
                          const struct MixqPlan *plan,
                          enum MixqVariant variant,
                          const uint32_t *seq,
                          size_t seq_len,
                          const uint32_t *ker,
                          size_t ker_len,
                          uint64_t *out,
                          size_t out_cap,
                          size_t *out_len);

/**
 * Exact wide-integer convolution, for checking [`mixq_conv`].
 */
enum MixqStatus mixq_reference_conv(const uint32_t *seq,
                                    size_t seq_len,
                                    const uint32_t *ker,
                                    size_t ker_len,
                                    uint64_t *out,
                                    size_t out_cap);

/**
 * Weighted cost of `counts`; `params` may be null for the defaults.
 */
enum MixqStatus mixq_score(const struct MixqCounts *counts,
                           const struct MixqCostParams *params,
                           double *out);

/**
 * Least-squares fit over `n_rows` rows of `[c_sisd, c_simd, c_bit, cost]`
 * stored contiguously. `rss` may be null.
 */
enum MixqStatus mixq_calibrate(const double *rows,
                               size_t n_rows,
                               struct MixqCostParams *out,
                               double *rss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXQ_H */
