#ifndef WATERMARK_H
#define WATERMARK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WmStatus {
  WM_STATUS_OK = 0,
  WM_STATUS_NULL_POINTER = 1,
  WM_STATUS_INVALID_ARGUMENT = 2,
  WM_STATUS_DIMENSION_MISMATCH = 3,
  WM_STATUS_UNSTABLE = 4,
  WM_STATUS_NUMERICAL = 5,
  WM_STATUS_IO = 6,
  WM_STATUS_PARSE = 7,
  WM_STATUS_PANIC = 8,
} WmStatus;

typedef struct WmDesign WmDesign;

typedef struct WmLearner WmLearner;

typedef struct WmModel WmModel;

// Scalar outputs of an offline design.
typedef struct WmDesignInfo {
  double delta;
  double j0;
  double lambda_max;
  double expected_kl;
} WmDesignInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *wm_last_error(void);

// Builds a plant from row-major `A` (n x n), `B` (n x p), `C` (m x n),
// `Q` (n x n) and `R` (m x m).
//
// # Safety
// Each pointer must reference the stated number of doubles; `out` must be
// a valid handle slot.
enum WmStatus wm_model_new(size_t n,
                           size_t m,
                           size_t p,
                           const double *a,
                           const double *b,
                           const double *c,
                           const double *q,
                           const double *r,
                           struct WmModel **out);

// Parses a plant from its JSON description.
//
// # Safety
// `json` must be NUL-terminated; `out` must be a valid handle slot.
enum WmStatus wm_model_from_json(const char *json, struct WmModel **out);

// Random stable plant with spectral radius `rho` and unit noise.
//
// # Safety
// `out` must be a valid handle slot.
enum WmStatus wm_model_random(uint64_t seed,
                              size_t n,
                              size_t m,
                              size_t p,
                              double rho,
                              struct WmModel **out);

// # Safety
// `model` must be a handle from this library or NULL; the out pointers
// must be writable.
enum WmStatus wm_model_dims(const struct WmModel *model, size_t *n, size_t *m, size_t *p);

// # Safety
// `model` must be a handle from this library or NULL.
void wm_model_free(struct WmModel *model);

// Offline optimal design with identity LQG weights. `budget` is absolute,
// or a fraction of the watermark-free cost when `budget_is_fraction` is
// non-zero.
//
// # Safety
// `model` must be a handle from this library; `out` a valid handle slot.
enum WmStatus wm_design_new(const struct WmModel *model,
                            double budget,
                            int32_t budget_is_fraction,
                            struct WmDesign **out);

// # Safety
// `design` must be a handle from this library; `out` must be writable.
enum WmStatus wm_design_info(const struct WmDesign *design, struct WmDesignInfo *out);

// Copies the optimal watermark covariance (p x p, row-major) into `out`.
//
// # Safety
// `out` must hold `len` writable doubles.
enum WmStatus wm_design_u_star(const struct WmDesign *design, double *out, size_t len);

// # Safety
// `design` must be a handle from this library or NULL.
void wm_design_free(struct WmDesign *design);

// Online learner for an `m`-output, `p`-input plant with identity LQG
// weights.
//
// # Safety
// `out` must be a valid handle slot.
enum WmStatus wm_learner_new(size_t m,
                             size_t p,
                             size_t nbar,
                             double beta,
                             double delta,
                             size_t fit_every,
                             struct WmLearner **out);

// Draws this step's watermark from the standard normal vector `zeta`
// (length p) and writes it to `phi` (length p).
//
// # Safety
// `zeta` and `phi` must hold `p` doubles.
enum WmStatus wm_learner_next_watermark(struct WmLearner *learner,
                                        const double *zeta,
                                        double *phi,
                                        size_t p);

// Feeds the measurement `y` (length m) for the current watermark. Writes
// the estimated detection statistic and whether a Schur-stable fit is in
// use; either output pointer may be NULL.
//
// # Safety
// `y` must hold `m` doubles.
enum WmStatus wm_learner_observe(struct WmLearner *learner,
                                 const double *y,
                                 size_t m,
                                 double *g_hat,
                                 int32_t *gate);

// Copies the current optimal covariance estimate (p x p) into `out`.
//
// # Safety
// `out` must hold `len` writable doubles.
enum WmStatus wm_learner_u_star(const struct WmLearner *learner, double *out, size_t len);

// Serializes the learner. Release the string with `wm_string_free`.
//
// # Safety
// `out` must be a writable pointer slot.
enum WmStatus wm_learner_checkpoint(const struct WmLearner *learner, char **out);

// Restores a learner from `wm_learner_checkpoint` output.
//
// # Safety
// `json` must be NUL-terminated; `out` a valid handle slot.
enum WmStatus wm_learner_restore(const char *json, struct WmLearner **out);

// # Safety
// `learner` must be a handle from this library or NULL.
void wm_learner_free(struct WmLearner *learner);

// # Safety
// `s` must come from this library or be NULL.
void wm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WATERMARK_H */
