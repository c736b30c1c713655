#ifndef GRAPHON_SDE_H
#define GRAPHON_SDE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_UTF8 = 2,
  GS_STATUS_INVALID_PARAMETER = 3,
  // Mismatched dimensions, masses, shapes or time grids.
  GS_STATUS_SHAPE = 4,
  // The kernel is infinite on the grid; pick another singular policy.
  GS_STATUS_SINGULAR = 5,
  // Input exceeds the exact solver's support cap.
  GS_STATUS_SUPPORT_TOO_LARGE = 6,
  // A numerical abort: non-finite state, divergent norm, degenerate fit.
  GS_STATUS_NUMERICAL = 7,
  // Malformed JSON, text or configuration.
  GS_STATUS_PARSE = 8,
  GS_STATUS_IO = 9,
  GS_STATUS_PANIC = 10,
} GsStatus;

// How kernels that are infinite on the grid are discretized.
typedef enum GsSingularPolicy {
  GS_SINGULAR_POLICY_REJECT = 0,
  GS_SINGULAR_POLICY_MIDPOINT_SHIFT = 1,
  GS_SINGULAR_POLICY_CLAMP = 2,
} GsSingularPolicy;

typedef enum GsGraphMode {
  GS_GRAPH_MODE_DIRECTED = 0,
  GS_GRAPH_MODE_SYMMETRIC = 1,
} GsGraphMode;

// A weighted interaction graph on `N` vertices.
typedef struct GsGraph GsGraph;

// A graphon `g: [0,1]^2 -> [0, inf]`.
typedef struct GsGraphon GsGraphon;

// A finite nonnegative measure on `R^d`.
typedef struct GsMeasure GsMeasure;

// A step graphon on a partition of `[0, 1]`.
typedef struct GsStepGraphon GsStepGraphon;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful call. Valid until the next call on the same thread.
const char *gs_last_error(void);

// Library version as a static NUL-terminated string.
const char *gs_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed already.
void gs_string_free(char *s);

// Parses a graphon descriptor such as `{"kind": "power_law", "a": 0.2}`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum GsStatus gs_graphon_from_json(const char *json, struct GsGraphon **out_graphon);

// Kernel value at `(x, y)`; NaN for a null handle.
//
// # Safety
// `g` must be null or a live graphon handle.
double gs_graphon_eval(const struct GsGraphon *g, double x, double y);

// `||g||_p`. Closed forms are used when known unless `numeric` is set.
//
// # Safety
// `g` must be a live graphon handle and `out_norm` a valid pointer.
enum GsStatus gs_graphon_lp_norm(const struct GsGraphon *g,
                                 double p,
                                 bool numeric,
                                 double *out_norm);

// # Safety
// `g` must be null or a handle not yet freed.
void gs_graphon_free(struct GsGraphon *g);

// Discretizes `g` on the regular `N`-point grid. `cap` is only read for
// the clamp policy.
//
// # Safety
// `g` must be a live graphon handle and `out_step` a valid pointer.
enum GsStatus gs_graphon_discretize(const struct GsGraphon *g,
                                    size_t n,
                                    enum GsSingularPolicy policy,
                                    double cap,
                                    struct GsStepGraphon **out_step);

// Number of blocks; 0 for a null handle.
//
// # Safety
// `s` must be null or a live step graphon handle.
size_t gs_step_graphon_blocks(const struct GsStepGraphon *s);

// Block value `(i, j)`.
//
// # Safety
// `s` must be a live step graphon handle and `out_value` a valid pointer.
enum GsStatus gs_step_graphon_value(const struct GsStepGraphon *s,
                                    size_t i,
                                    size_t j,
                                    double *out_value);

// # Safety
// `s` must be null or a handle not yet freed.
void gs_step_graphon_free(struct GsStepGraphon *s);

// W-random graph on the regular grid with edge probabilities
// `min(beta g(x_i, x_j), 1)`.
//
// # Safety
// `g` must be a live graphon handle and `out_graph` a valid pointer.
enum GsStatus gs_graph_sample(const struct GsGraphon *g,
                              size_t n,
                              double beta,
                              enum GsGraphMode mode,
                              uint64_t seed,
                              struct GsGraph **out_graph);

// Weighted graph `zeta_ij = beta g_N(x_i, x_j)`.
//
// # Safety
// `s` must be a live step graphon handle and `out_graph` a valid pointer.
enum GsStatus gs_graph_deterministic(const struct GsStepGraphon *s,
                                     size_t n,
                                     double beta,
                                     struct GsGraph **out_graph);

// Vertex count; 0 for a null handle.
//
// # Safety
// `g` must be null or a live graph handle.
size_t gs_graph_vertices(const struct GsGraph *g);

// Number of nonzero weights; 0 for a null handle.
//
// # Safety
// `g` must be null or a live graph handle.
size_t gs_graph_nnz(const struct GsGraph *g);

// Weight of `(i, j)`.
//
// # Safety
// `g` must be a live graph handle and `out_weight` a valid pointer.
enum GsStatus gs_graph_weight(const struct GsGraph *g, size_t i, size_t j, double *out_weight);

// Text form (`N beta mode` header, then `i j w` lines). Free the result
// with [`gs_string_free`].
//
// # Safety
// `g` must be a live graph handle and `out_text` a valid pointer.
enum GsStatus gs_graph_to_text(const struct GsGraph *g, char **out_text);

// # Safety
// `g` must be null or a handle not yet freed.
void gs_graph_free(struct GsGraph *g);

// Measure with `len` atoms in `R^dim`. `atoms` holds `len * dim` values,
// row-major; `weights` holds `len` nonnegative masses.
//
// # Safety
// `atoms` and `weights` must point to arrays of the stated lengths (they
// may be null when `len` is 0) and `out_measure` must be valid.
enum GsStatus gs_measure_new(size_t dim,
                             const double *atoms,
                             const double *weights,
                             size_t len,
                             struct GsMeasure **out_measure);

// Atom count; 0 for a null handle.
//
// # Safety
// `m` must be null or a live measure handle.
size_t gs_measure_len(const struct GsMeasure *m);

// Ambient dimension; 0 for a null handle.
//
// # Safety
// `m` must be null or a live measure handle.
size_t gs_measure_dim(const struct GsMeasure *m);

// # Safety
// `m` must be null or a handle not yet freed.
void gs_measure_free(struct GsMeasure *m);

// Exact bounded-Lipschitz distance.
//
// # Safety
// `mu` and `nu` must be live measure handles and `out_distance` valid.
enum GsStatus gs_dbl_exact(const struct GsMeasure *mu,
                           const struct GsMeasure *nu,
                           double *out_distance);

// Lower estimate of the bounded-Lipschitz distance over a seeded
// dictionary of test functions, for supports too large to solve exactly.
//
// # Safety
// `mu` and `nu` must be live measure handles and `out_distance` valid.
enum GsStatus gs_dbl_estimate(const struct GsMeasure *mu,
                              const struct GsMeasure *nu,
                              uint64_t seed,
                              double *out_distance);

// Runs the experiment described by `config_json` and writes report.csv,
// meta.json, summary.json and plot.svg into `out_dir`.
//
// # Safety
// Both arguments must be NUL-terminated strings.
enum GsStatus gs_experiment_run(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPHON_SDE_H */
