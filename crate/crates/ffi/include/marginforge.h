#ifndef MARGINFORGE_H
#define MARGINFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MfObjective {
  MF_OBJECTIVE_CE_HARD = 0,
  MF_OBJECTIVE_CE_SOFT = 1,
  MF_OBJECTIVE_KL = 2,
} MfObjective;

typedef enum MfScheduleKind {
  MF_SCHEDULE_KIND_CONST = 0,
  MF_SCHEDULE_KIND_LINEAR = 1,
  MF_SCHEDULE_KIND_CURIOUS = 2,
} MfScheduleKind;

typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_ARGUMENT = 2,
  MF_STATUS_SHAPE = 3,
  MF_STATUS_INVALID_LABEL = 4,
  MF_STATUS_NON_FINITE = 5,
  MF_STATUS_IO = 6,
  MF_STATUS_CHECKPOINT = 7,
  MF_STATUS_PANIC = 8,
} MfStatus;

/*
 Opaque classifier handle.
 */
typedef struct MfModel MfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failure on this thread; empty if none. Valid until
 the next failing call on the same thread.
 */
const char *mf_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *mf_version(void);

/*
 He-initialized ReLU MLP with layer widths `sizes[0..n_sizes]`.

 # Safety
 `sizes` must point to `n_sizes` values and `out_model` to writable storage.
 */
enum MfStatus mf_model_new(const size_t *sizes,
                           size_t n_sizes,
                           uint64_t seed,
                           struct MfModel **out_model);

/*
 # Safety
 `model` must come from this library and not be used afterwards. Null is
 ignored.
 */
void mf_model_free(struct MfModel *model);

/*
 # Safety
 `path` must be a NUL-terminated string and `out_model` writable.
 */
enum MfStatus mf_model_load(const char *path, struct MfModel **out_model);

/*
 Write a checkpoint atomically.

 # Safety
 `model` must be a live handle and `path` NUL-terminated.
 */
enum MfStatus mf_model_save(const struct MfModel *model, const char *path);

/*
 Input width and class count.

 # Safety
 `model` must be a live handle; both outputs writable.
 */
enum MfStatus mf_model_dims(const struct MfModel *model,
                            size_t *out_input_dim,
                            size_t *out_classes);

/*
 Logits for `rows` inputs into `out_logits` (`rows * classes` values).

 # Safety
 `x` holds `rows * cols` values; `out_logits` has room for `out_len`.
 */
enum MfStatus mf_model_forward(const struct MfModel *model,
                               const double *x,
                               size_t rows,
                               size_t cols,
                               double *out_logits,
                               size_t out_len);

/*
 Arg-max classes, ties to the lowest index.

 # Safety
 `x` holds `rows * cols` values; `out_classes` has room for `rows`.
 */
enum MfStatus mf_model_predict(const struct MfModel *model,
                               const double *x,
                               size_t rows,
                               size_t cols,
                               size_t *out_classes);

/*
 ℓ∞ PGD against one-hot `labels`. `step_size <= 0` selects `epsilon / 4`;
 `lo > hi` disables the domain clamp.

 # Safety
 `x` and `out_x_adv` hold `rows * cols` values, `labels` holds `rows`.
 */
enum MfStatus mf_pgd(const struct MfModel *model,
                     const double *x,
                     size_t rows,
                     size_t cols,
                     const size_t *labels,
                     double epsilon,
                     size_t steps,
                     double step_size,
                     enum MfObjective objective,
                     size_t restarts,
                     double lo,
                     double hi,
                     uint64_t seed,
                     double *out_x_adv);

/*
 Per-row bisection for the interpolation coefficient whose margin first
 reaches `rho`, with `steps` probes at temperature `tau`.

 # Safety
 `x`, `x_pgd` and `out_x_adv` hold `rows * cols` values; `labels` and
 `out_alpha` hold `rows`. `out_x_adv` may be null.
 */
enum MfStatus mf_binary_search_alpha(const struct MfModel *model,
                                     const double *x,
                                     const double *x_pgd,
                                     size_t rows,
                                     size_t cols,
                                     const size_t *labels,
                                     double rho,
                                     double tau,
                                     size_t steps,
                                     double *out_alpha,
                                     double *out_x_adv);

/*
 Margin of the temperature-`tau` softmax against one-hot `labels`.

 # Safety
 `x` holds `rows * cols` values; `labels` and `out_margin` hold `rows`.
 */
enum MfStatus mf_margin(const struct MfModel *model,
                        const double *x,
                        size_t rows,
                        size_t cols,
                        const size_t *labels,
                        double tau,
                        double *out_margin);

/*
 Budget upper bound at a 1-based `epoch`. `gamma` and `ramp_epochs` are
 ignored where the kind does not use them.

 # Safety
 `out_eps` must be writable.
 */
enum MfStatus mf_eps_at(enum MfScheduleKind kind,
                        double gamma,
                        size_t ramp_epochs,
                        double eps_base,
                        size_t total_epochs,
                        size_t epoch,
                        double *out_eps);

/*
 Margin threshold at `epoch`; `double_at_epoch == 0` never doubles.

 # Safety
 `out_rho` must be writable.
 */
enum MfStatus mf_rho_at(double rho_initial,
                        size_t double_at_epoch,
                        size_t total_epochs,
                        size_t epoch,
                        double *out_rho);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARGINFORGE_H */
