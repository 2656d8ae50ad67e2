#ifndef MACML_H
#define MACML_H

/* C interface to the macml library.
 *
 * Every function returns a macml_status. On failure the message is available
 * from macml_last_error() on the same thread until the next call. Strings
 * returned through char** are owned by the caller and released with
 * macml_free(). Alternatives and processing orders are 1-based.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MACML_API __declspec(dllexport)
#else
#define MACML_API __attribute__((visibility("default")))
#endif

typedef enum macml_status {
  MACML_OK = 0,
  MACML_ERR_INVALID_ARGUMENT = 1, /* bad input or config */
  MACML_ERR_DIMENSION = 2,        /* problem larger than a routine supports */
  MACML_ERR_NUMERICAL = 3,        /* singular matrix, zero mass, ... */
  MACML_ERR_IO = 4,
  MACML_ERR_INTERNAL = 5
} macml_status;

MACML_API const char* macml_version(void);
MACML_API const char* macml_last_error(void);
MACML_API const char* macml_status_name(macml_status s);
MACML_API void macml_free(char* s);

/* Scalars. */
MACML_API macml_status macml_normal_cdf(double x, double* out);
MACML_API macml_status macml_bvn_cdf(double b1, double b2, double rho, double* out);

/* P(X <= b) for X ~ N(0, R), R a k x k row-major correlation matrix.
 * method: "SJ-1", "SJ-A", "ME", "bME" or "oracle". order (length k, 1-based)
 * is the processing order of SJ-1/ME/bME; NULL means 1..k. */
MACML_API macml_status macml_orthant(const char* method, size_t k, const double* b, const double* r,
                                     const int* order, double* out);
MACML_API macml_status macml_reference_cdf(size_t k, const double* b, const double* r, double tol,
                                           double* out);

/* problem_json: {"b": [...], "R": [[...]], "order": [...]?}. methods is a
 * comma-separated list or NULL for all four approximations. The report holds
 * each value, the oracle (k <= 4) and absolute errors. */
MACML_API macml_status macml_approx_report(const char* problem_json, const char* methods, char** report_json);

/* One pseudo-likelihood fit described by a JSON document; see README. */
MACML_API macml_status macml_fit(const char* fit_json, char** result_json);

/* Compares the oracle with a Monte Carlo estimate on `count` random problems. */
MACML_API macml_status macml_oracle_check(size_t count, size_t k, uint64_t seed, int64_t draws,
                                          char** report_json);

/* Studies. */
typedef struct macml_study macml_study;
typedef void (*macml_log_fn)(const char* line, void* user);

/* Accepts a study config or a manifest written by macml_study_manifest. */
MACML_API macml_status macml_study_create(const char* config_json, macml_study** out);
MACML_API void macml_study_destroy(macml_study* study);

MACML_API macml_status macml_study_set_seed(macml_study* study, uint64_t seed);
MACML_API macml_status macml_study_set_threads(macml_study* study, unsigned threads);
MACML_API macml_status macml_study_set_methods(macml_study* study, const char* methods);
/* Finite-sample studies: fit at this tolerance only. */
MACML_API macml_status macml_study_set_grad_tol(macml_study* study, double grad_tol);

MACML_API macml_status macml_study_config(const macml_study* study, char** config_json);
MACML_API macml_status macml_study_config_hash(const macml_study* study, char** hash);

/* Validates the resolved config, listing every problem, then runs. */
MACML_API macml_status macml_study_run(macml_study* study, macml_log_fn log, void* user);

/* After a run. Units are (model, method) or (dataset, tolerance, method). */
MACML_API macml_status macml_study_counts(const macml_study* study, size_t* units, size_t* failed,
                                          size_t* nonconverged);
MACML_API macml_status macml_study_table_csv(const macml_study* study, char** csv);
MACML_API macml_status macml_study_manifest(const macml_study* study, const char* csv_path, char** manifest_json);

#ifdef __cplusplus
}
#endif

#endif
