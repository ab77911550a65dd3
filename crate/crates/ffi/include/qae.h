/* Generated by cbindgen. Do not edit. */

#ifndef QAE_H
#define QAE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QaeStatus {
  QAE_STATUS_OK = 0,
  QAE_STATUS_INVALID_ARGUMENT = 1,
  QAE_STATUS_NULL_POINTER = 2,
  QAE_STATUS_FISHER_DIVERGENCE = 3,
  QAE_STATUS_SCHEDULE_TOO_LARGE = 4,
  QAE_STATUS_OBSERVATION_MISMATCH = 5,
  QAE_STATUS_POSTERIOR_UNDERFLOW = 6,
  QAE_STATUS_NOT_COPRIME = 7,
  QAE_STATUS_INFEASIBLE_MODULI = 8,
  QAE_STATUS_SAMPLE_BUDGET_EXCEEDED = 9,
  QAE_STATUS_EMPTY_INTERSECTION = 10,
  QAE_STATUS_DEGENERATE_DATA = 11,
  QAE_STATUS_IO = 12,
  QAE_STATUS_FORMAT = 13,
  QAE_STATUS_PANIC = 14,
} QaeStatus;

// Opaque estimate report.
typedef struct QaeReport QaeReport;

// Result of a `(k, q)` search.
typedef struct QaeOptimized {
  uint32_t k;
  uint32_t q;
  // Predicted oracle calls without the constant prefactor.
  double predicted_calls;
  double predicted_depth;
} QaeOptimized;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *qae_version(void);

// Message of the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *qae_last_error_message(void);

// Probability of outcome "1" for a circuit of `depth` Grover iterations.
// Returns NaN for `theta` outside `[0, π/2]` or negative `gamma`.
double qae_outcome_probability(double theta,
                               double gamma,
                               uint64_t depth,
                               bool hadamard,
                               bool shifted);

// # Safety
// `out` must be valid for a write of `f64`.
enum QaeStatus qae_select_beta(double epsilon, double gamma, double *out);

// Unique `M < Π moduli` with `M ≡ residues[i] (mod moduli[i])`.
//
// # Safety
// `residues` and `moduli` must point to `len` readable values and `out` must
// be valid for a write of `u64`.
enum QaeStatus qae_crt_reconstruct(const uint64_t *residues,
                                   const uint64_t *moduli,
                                   size_t len,
                                   uint64_t *out);

// Choose QoPrime's `(k, q)`. With `realized` the actual coprime products
// are priced instead of the closed form.
//
// # Safety
// `out` must be valid for a write of [`QaeOptimized`].
enum QaeStatus qae_optimize_params(double epsilon,
                                   double gamma,
                                   double delta,
                                   bool realized,
                                   struct QaeOptimized *out);

// Power-law estimate. A negative `beta` selects it from `(epsilon, gamma)`.
//
// # Safety
// `out` must be valid for a pointer write.
enum QaeStatus qae_estimate_powerlaw(double theta,
                                     double gamma,
                                     double epsilon,
                                     double beta,
                                     uint64_t n_shot,
                                     bool noise_aware,
                                     uint64_t seed,
                                     struct QaeReport **out);

// QoPrime estimate. `k = 0` or `q = 0` lets the optimizer choose.
// `exact_budget` selects exact binomial shot counts over the Chernoff ones;
// a non-positive `sample_cap` keeps the default cap.
//
// # Safety
// `out` must be valid for a pointer write.
enum QaeStatus qae_estimate_qoprime(double theta,
                                    double gamma,
                                    double epsilon,
                                    double delta,
                                    uint32_t k,
                                    uint32_t q,
                                    bool exact_budget,
                                    double sample_cap,
                                    uint64_t seed,
                                    struct QaeReport **out);

// # Safety
// `out` must be valid for a pointer write.
enum QaeStatus qae_estimate_classical(double theta,
                                      double gamma,
                                      double epsilon,
                                      double delta,
                                      uint64_t seed,
                                      struct QaeReport **out);

// # Safety
// `out` must be valid for a pointer write.
enum QaeStatus qae_estimate_exponential_mle(double theta,
                                            double gamma,
                                            double epsilon,
                                            uint64_t n_shot,
                                            bool noise_aware,
                                            uint64_t seed,
                                            struct QaeReport **out);

// Estimated angle, or NaN for a null handle.
//
// # Safety
// `r` must be null or a live handle.
double qae_report_theta_hat(const struct QaeReport *r);

// # Safety
// `r` must be null or a live handle.
uint64_t qae_report_oracle_calls(const struct QaeReport *r);

// # Safety
// `r` must be null or a live handle.
uint64_t qae_report_max_depth(const struct QaeReport *r);

// `1` if the estimate is within epsilon of the truth, `0` if not, `-1` if
// unknown.
//
// # Safety
// `r` must be null or a live handle.
int32_t qae_report_success(const struct QaeReport *r);

// Report as JSON; release with [`qae_string_free`]. Null for a null handle.
//
// # Safety
// `r` must be null or a live handle.
char *qae_report_to_json(const struct QaeReport *r);

// # Safety
// `r` must be null or a handle from this library not yet freed.
void qae_report_free(struct QaeReport *r);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void qae_string_free(char *s);

// Copy the last error message into `buf` (NUL-terminated, truncated to
// `len`). Returns the full message length, or 0 if there is none.
//
// # Safety
// `buf` must be null or valid for `len` byte writes.
size_t qae_last_error_copy(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QAE_H */
