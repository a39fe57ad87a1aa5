#ifndef PERSONA_DEBATE_H
#define PERSONA_DEBATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every fallible entry point.
typedef enum PdStatus {
  PD_STATUS_OK = 0,
  // A required pointer argument was NULL.
  PD_STATUS_NULL_POINTER = 1,
  // An argument or configuration value was rejected.
  PD_STATUS_INVALID_ARGUMENT = 2,
  // A file could not be read or written.
  PD_STATUS_IO = 3,
  // Input could not be parsed.
  PD_STATUS_PARSE = 4,
  // Required data is missing or a quantity is undefined.
  PD_STATUS_MISSING_DATA = 5,
  // The language-model backend or its environment failed.
  PD_STATUS_BACKEND = 6,
  // An output buffer was too small; the required size was reported.
  PD_STATUS_BUFFER_TOO_SMALL = 7,
  // An internal panic was caught.
  PD_STATUS_PANIC = 8,
} PdStatus;

// Opaque result of a trait-parameter fit.
typedef struct PdFit PdFit;

// Opaque set of outcome tallies.
typedef struct PdTallySet PdTallySet;

// Outcome counts of one (agent pair, topic) cell in canonical order:
// A convinces B, B convinces A, mutual resistance, bilateral influence.
typedef struct PdCell {
  uint32_t agent_a;
  uint32_t agent_b;
  uint64_t counts[4];
} PdCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL if none. The pointer
// stays valid until the next failing call on the same thread; do not free
// it.
const char *pd_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pd_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library that has not
// been freed.
void pd_string_free(char *s);

// Tallies of the eighteen built-in published table rows.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum PdStatus pd_tallies_from_paper(struct PdTallySet **out);

// Reads, validates, adjudicates and tallies a JSONL transcript file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum PdStatus pd_tallies_from_jsonl(const char *path, struct PdTallySet **out);

// Releases a tally set. NULL is ignored.
//
// # Safety
// `set` must be NULL or a handle from this library that has not been freed.
void pd_tallies_free(struct PdTallySet *set);

// Number of cells in the set; 0 for NULL.
//
// # Safety
// `set` must be NULL or a live handle.
size_t pd_tallies_len(const struct PdTallySet *set);

// Pair and counts of cell `index`.
//
// # Safety
// `set` must be a live handle; `out` must be valid for writes.
enum PdStatus pd_tallies_get(const struct PdTallySet *set, size_t index, struct PdCell *out);

// Topic abbreviation of cell `index`; free with [`pd_string_free`].
//
// # Safety
// `set` must be a live handle; `out` must be valid for writes.
enum PdStatus pd_tallies_topic(const struct PdTallySet *set, size_t index, char **out);

// Non-transitive dominance triads. Writes up to `capacity` triads as
// consecutive id triples into `out` (3 · capacity values) and the total
// number found into `count`. Returns `PD_STATUS_BUFFER_TOO_SMALL` when
// `capacity` is short; `out` may be NULL when `capacity` is 0.
//
// # Safety
// `set` must be a live handle; `out` must hold `3 * capacity` values;
// `count` must be valid for writes.
enum PdStatus pd_tallies_triads(const struct PdTallySet *set,
                                uint32_t *out,
                                size_t capacity,
                                size_t *count);

// Closed-form maximum-likelihood conversion probabilities of one cell.
//
// # Safety
// `counts` must point to four values; `a` and `b` must be valid for writes.
enum PdStatus pd_cell_mle(const uint64_t *counts, double *a, double *b);

// G statistic (1 degree of freedom) of one cell against the independence
// model with conversion probabilities `a` and `b`.
//
// # Safety
// `counts` must point to four values; `g` must be valid for writes.
enum PdStatus pd_g_statistic(const uint64_t *counts, double a, double b, double *g);

// Outcome distribution of the independence model in canonical order.
//
// # Safety
// `out` must be valid for writing four values.
enum PdStatus pd_cell_distribution(double a, double b, double *out);

// Fits assertiveness, susceptibility and topic difficulty to a tally set
// with default settings. Topics are ordered as in the default topic list,
// then by name; the first present topic has difficulty 1.
//
// # Safety
// `set` must be a live handle; `out` must be valid for writes.
enum PdStatus pd_fit(const struct PdTallySet *set, struct PdFit **out);

// Log-likelihood of the fitted parameters; NaN for NULL.
//
// # Safety
// `fit` must be NULL or a live handle.
double pd_fit_log_likelihood(const struct PdFit *fit);

// Whether the fit converged before the iteration cap; false for NULL.
//
// # Safety
// `fit` must be NULL or a live handle.
bool pd_fit_converged(const struct PdFit *fit);

// Full fit result as JSON; free with [`pd_string_free`].
//
// # Safety
// `fit` must be a live handle; `out` must be valid for writes.
enum PdStatus pd_fit_to_json(const struct PdFit *fit, char **out);

// Releases a fit. NULL is ignored.
//
// # Safety
// `fit` must be NULL or a handle from this library that has not been freed.
void pd_fit_free(struct PdFit *fit);

// Runs a tournament and writes its transcripts and manifest. `config_path`
// may be NULL for the defaults; a non-NULL `out_dir` overrides the
// configured output directory. On success the manifest JSON is returned
// through `manifest_json` (free with [`pd_string_free`]).
//
// # Safety
// String arguments must be NULL or NUL-terminated; `manifest_json` must be
// valid for writes.
enum PdStatus pd_run(const char *config_path, const char *out_dir, char **manifest_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERSONA_DEBATE_H */
