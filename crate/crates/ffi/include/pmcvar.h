#ifndef PMCVAR_H
#define PMCVAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmcvarStatus {
  PMCVAR_STATUS_OK = 0,
  PMCVAR_STATUS_NULL_POINTER = 1,
  PMCVAR_STATUS_INVALID_ARGUMENT = 2,
  PMCVAR_STATUS_INPUT = 3,
  PMCVAR_STATUS_INFEASIBLE = 4,
  PMCVAR_STATUS_SOLVER = 5,
  PMCVAR_STATUS_BUFFER_TOO_SMALL = 6,
  PMCVAR_STATUS_INTERNAL = 7,
} PmcvarStatus;

typedef enum PmcvarStrategy {
  PMCVAR_STRATEGY_UNIFIED = 0,
  PMCVAR_STRATEGY_CVAR_CC = 1,
  PMCVAR_STRATEGY_PURE_CVAR = 2,
  PMCVAR_STRATEGY_INDEX = 3,
} PmcvarStrategy;

typedef struct PmcvarPanel PmcvarPanel;

typedef struct PmcvarPortfolio PmcvarPortfolio;

typedef struct PmcvarReport PmcvarReport;

/**
 * Model and solver settings. Obtain defaults from
 * [`pmcvar_model_options_default`].
 */
typedef struct PmcvarModelOptions {
  uintptr_t p;
  double beta;
  /**
   * Used when `mu0_index` is 0; `-INFINITY` drops the return floor.
   */
  double mu0;
  /**
   * Nonzero: floor at the equal-weighted in-sample mean return.
   */
  int32_t mu0_index;
  double gamma;
  /**
   * Seconds per MILP solve.
   */
  double time_limit;
  double gap_tol;
} PmcvarModelOptions;

/**
 * Scalar results of a solve.
 */
typedef struct PmcvarSolveSummary {
  double objective;
  double cvar;
  double mean_return;
  double fp_value;
  double gap;
  uintptr_t nodes;
  /**
   * 0 optimal, 1 feasible at a limit.
   */
  int32_t status;
} PmcvarSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *pmcvar_last_error_message(void);

/**
 * Defaults: p = 5, beta = 0.05, index return floor, gamma = 1, one hour
 * per solve, relative gap 1e-6.
 */
struct PmcvarModelOptions pmcvar_model_options_default(void);

/**
 * Loads a price CSV (`date,asset...` header, one row per date).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PmcvarStatus pmcvar_panel_from_csv(const char *path, struct PmcvarPanel **out);

/**
 * Synthetic block-factor market: `n` assets in `blocks` near-equal blocks,
 * `t` weekly returns (`t + 1` prices).
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum PmcvarStatus pmcvar_panel_synthetic(uintptr_t n,
                                         uintptr_t t,
                                         uintptr_t blocks,
                                         uint64_t seed,
                                         struct PmcvarPanel **out);

/**
 * # Safety
 * `panel` must be a live handle; `n_assets` and `n_prices` writable (either may be NULL).
 */
enum PmcvarStatus pmcvar_panel_dims(const struct PmcvarPanel *panel,
                                    uintptr_t *n_assets,
                                    uintptr_t *n_prices);

/**
 * # Safety
 * `panel` must come from this library and not be used afterwards. NULL is ignored.
 */
void pmcvar_panel_free(struct PmcvarPanel *panel);

/**
 * Solves one model on the whole panel.
 *
 * # Safety
 * `panel` must be a live handle, `opts` readable and `out` writable.
 */
enum PmcvarStatus pmcvar_solve(const struct PmcvarPanel *panel,
                               enum PmcvarStrategy strategy,
                               const struct PmcvarModelOptions *opts,
                               struct PmcvarPortfolio **out);

/**
 * Copies the `n` weights into `buf` (capacity `len`).
 *
 * # Safety
 * `portfolio` must be a live handle and `buf` valid for `len` writes.
 */
enum PmcvarStatus pmcvar_portfolio_weights(const struct PmcvarPortfolio *portfolio,
                                           double *buf,
                                           uintptr_t len);

/**
 * Writes the representative indices into `buf` (capacity `len`) and their
 * count into `count`. With `buf` NULL only the count is written.
 *
 * # Safety
 * `portfolio` must be a live handle, `count` writable, `buf` NULL or valid for `len` writes.
 */
enum PmcvarStatus pmcvar_portfolio_representatives(const struct PmcvarPortfolio *portfolio,
                                                   uintptr_t *buf,
                                                   uintptr_t len,
                                                   uintptr_t *count);

/**
 * # Safety
 * `portfolio` must be a live handle and `out` writable.
 */
enum PmcvarStatus pmcvar_portfolio_summary(const struct PmcvarPortfolio *portfolio,
                                           struct PmcvarSolveSummary *out);

/**
 * Portfolio as JSON; release with [`pmcvar_string_free`].
 *
 * # Safety
 * `portfolio` must be a live handle and `out` writable.
 */
enum PmcvarStatus pmcvar_portfolio_to_json(const struct PmcvarPortfolio *portfolio, char **out);

/**
 * # Safety
 * `portfolio` must come from this library and not be used afterwards. NULL is ignored.
 */
void pmcvar_portfolio_free(struct PmcvarPortfolio *portfolio);

/**
 * Rolling-window backtest, single-threaded.
 *
 * # Safety
 * `panel` must be a live handle, `opts` readable and `out` writable.
 */
enum PmcvarStatus pmcvar_backtest(const struct PmcvarPanel *panel,
                                  enum PmcvarStrategy strategy_kind,
                                  const struct PmcvarModelOptions *opts,
                                  uintptr_t in_len,
                                  uintptr_t out_len,
                                  struct PmcvarReport **out);

/**
 * Average out-of-sample return, problem count and Sharpe ratio. `sharpe` is
 * set to NaN when the out-of-sample series has zero variance. Any output may be NULL.
 *
 * # Safety
 * `report` must be a live handle; non-NULL outputs writable.
 */
enum PmcvarStatus pmcvar_report_measures(const struct PmcvarReport *report,
                                         double *av,
                                         double *sharpe,
                                         uintptr_t *n_problems);

/**
 * Full report as JSON; release with [`pmcvar_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum PmcvarStatus pmcvar_report_to_json(const struct PmcvarReport *report, char **out);

/**
 * # Safety
 * `report` must come from this library and not be used afterwards. NULL is ignored.
 */
void pmcvar_report_free(struct PmcvarReport *report);

/**
 * # Safety
 * `s` must be a string returned by this library, or NULL.
 */
void pmcvar_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMCVAR_H */
