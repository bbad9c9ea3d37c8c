#ifndef CONTAGION_H
#define CONTAGION_H

/* Generated by cbindgen from contagion-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CONTAGION_OK 0

#define CONTAGION_ERR_INVALID 1

#define CONTAGION_ERR_RUNTIME 2

#define CONTAGION_ERR_NULL 3

/**
 * Price-impact functional form.
 */
typedef enum ContagionImpact {
  CONTAGION_IMPACT_LINEAR = 0,
  CONTAGION_IMPACT_EXPONENTIAL = 1,
} ContagionImpact;

/**
 * Initial fire-sale stress scenario.
 */
typedef enum ContagionShockKind {
  /**
   * Devalue the asset at `target_index` by `haircut`.
   */
  CONTAGION_SHOCK_KIND_ASSET_DEVALUATION = 0,
  /**
   * Default the bank at `target_index`.
   */
  CONTAGION_SHOCK_KIND_BANK_DEFAULT = 1,
  /**
   * Devalue one seeded-random asset by `haircut`.
   */
  CONTAGION_SHOCK_KIND_RANDOM_ASSET = 2,
  /**
   * Default one seeded-random solvent bank.
   */
  CONTAGION_SHOCK_KIND_RANDOM_BANK = 3,
} ContagionShockKind;

/**
 * Opaque bipartite bank-asset network.
 */
typedef struct ContagionBipartite ContagionBipartite;

/**
 * Opaque interbank exposure network.
 */
typedef struct ContagionInterbank ContagionInterbank;

/**
 * Terminal summary of one contagion run.
 */
typedef struct ContagionCascadeStats {
  uint32_t n_defaults;
  uint32_t rounds;
  double fraction_defaulted;
  double total_equity_loss;
  bool converged;
} ContagionCascadeStats;

/**
 * Monte Carlo probability and extent of contagion. `extent` is NaN when
 * no trial was systemic.
 */
typedef struct ContagionMonteCarloStats {
  double probability;
  double extent;
  uint32_t trials;
} ContagionMonteCarloStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *contagion_version(void);

/**
 * Message for the last failure on this thread. Valid until the next FFI
 * call from the same thread.
 */
const char *contagion_last_error(void);

/**
 * Generate an interbank network. `degree_exponent <= 0` selects the
 * homogeneous random graph; positive values select the power-law degree
 * construction with that exponent. `size_exponent` works the same way for
 * bank sizes.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
int32_t contagion_interbank_generate(uint32_t n_banks,
                                     double avg_degree,
                                     double degree_exponent,
                                     double size_exponent,
                                     double capital_ratio,
                                     double interbank_fraction,
                                     double total_asset_scale,
                                     uint64_t seed,
                                     struct ContagionInterbank **out);

/**
 * Load an interbank network from `banks.csv` plus an optional
 * `exposures.csv` (NULL for an edgeless network).
 *
 * # Safety
 * Path pointers must be NUL-terminated strings; `out` must be writable.
 */
int32_t contagion_interbank_load(const char *banks_path,
                                 const char *exposures_path,
                                 struct ContagionInterbank **out);

/**
 * # Safety
 * `net` must come from a `contagion_interbank_*` constructor and not be
 * freed twice.
 */
void contagion_interbank_free(struct ContagionInterbank *net);

/**
 * Number of banks, or 0 for a null handle.
 *
 * # Safety
 * `net` must be a live handle or NULL.
 */
uint32_t contagion_interbank_n_banks(const struct ContagionInterbank *net);

/**
 * Copy the id of the bank at `index` into `buf` (NUL-terminated).
 *
 * # Safety
 * `net` must be a live handle; `buf` must hold `buf_len` writable bytes.
 */
int32_t contagion_interbank_bank_id(const struct ContagionInterbank *net,
                                    uint32_t index,
                                    char *buf,
                                    size_t buf_len);

/**
 * Default the bank at `shocked_index` (wiping its assets) and run the
 * loss cascade with the given recovery rate on defaulted exposures.
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
int32_t contagion_cascade_run(const struct ContagionInterbank *net,
                              uint32_t shocked_index,
                              double recovery_rate,
                              struct ContagionCascadeStats *out);

/**
 * Monte Carlo contagion statistics: regenerate a network per trial, shock
 * one uniformly random bank, and run the cascade. Parameters mirror
 * [`contagion_interbank_generate`].
 *
 * # Safety
 * `out` must be writable.
 */
int32_t contagion_monte_carlo(uint32_t n_banks,
                              double avg_degree,
                              double degree_exponent,
                              double size_exponent,
                              double capital_ratio,
                              double interbank_fraction,
                              double total_asset_scale,
                              uint32_t trials,
                              double systemic_threshold,
                              uint64_t seed,
                              struct ContagionMonteCarloStats *out);

/**
 * Solve the self-consistent settlement problem for `n` banks.
 * `liabilities` is row-major n-by-n (`liabilities[i*n + j]` owed by `i` to
 * `j`); `externals` has length `n`. `payments_out` (length `n`) receives
 * the greatest clearing vector; `equity_out` and `defaulted_out` are
 * optional (pass NULL to skip).
 *
 * # Safety
 * All non-null pointers must reference arrays of the stated lengths.
 */
int32_t contagion_clearing_solve(uint32_t n,
                                 const double *liabilities,
                                 const double *externals,
                                 double *payments_out,
                                 double *equity_out,
                                 uint8_t *defaulted_out);

/**
 * Generate a bipartite bank-asset network (`size_exponent <= 0` for
 * homogeneous sizes).
 *
 * # Safety
 * `out` must be writable.
 */
int32_t contagion_bipartite_generate(uint32_t n_banks,
                                     uint32_t n_assets,
                                     double bank_avg_degree,
                                     double size_exponent,
                                     double capital_ratio,
                                     double depth_factor,
                                     uint64_t seed,
                                     struct ContagionBipartite **out);

/**
 * Synthetic 90-bank, 140-asset dataset (see the library docs; this is not
 * real supervisory data).
 *
 * # Safety
 * `out` must be writable.
 */
int32_t contagion_bipartite_synthetic_eba(uint64_t seed, struct ContagionBipartite **out);

/**
 * Load a bipartite network from `banks.csv`, `holdings.csv`, and
 * `assets.csv`.
 *
 * # Safety
 * Path pointers must be NUL-terminated strings; `out` must be writable.
 */
int32_t contagion_bipartite_load(const char *banks_path,
                                 const char *holdings_path,
                                 const char *assets_path,
                                 struct ContagionBipartite **out);

/**
 * # Safety
 * `net` must come from a `contagion_bipartite_*` constructor and not be
 * freed twice.
 */
void contagion_bipartite_free(struct ContagionBipartite *net);

/**
 * # Safety
 * `net` must be a live handle or NULL.
 */
uint32_t contagion_bipartite_n_banks(const struct ContagionBipartite *net);

/**
 * # Safety
 * `net` must be a live handle or NULL.
 */
uint32_t contagion_bipartite_n_assets(const struct ContagionBipartite *net);

/**
 * Copy the id of the bank at `index` into `buf` (NUL-terminated).
 *
 * # Safety
 * `net` must be a live handle; `buf` must hold `buf_len` writable bytes.
 */
int32_t contagion_bipartite_bank_id(const struct ContagionBipartite *net,
                                    uint32_t index,
                                    char *buf,
                                    size_t buf_len);

/**
 * Copy the id of the asset at `index` into `buf` (NUL-terminated).
 *
 * # Safety
 * `net` must be a live handle; `buf` must hold `buf_len` writable bytes.
 */
int32_t contagion_bipartite_asset_id(const struct ContagionBipartite *net,
                                     uint32_t index,
                                     char *buf,
                                     size_t buf_len);

/**
 * Guarantee the bank at `index` against default and liquidation (bail-out
 * padding). Mutates the handle.
 *
 * # Safety
 * `net` must be a live handle with no concurrent use.
 */
int32_t contagion_bipartite_pad_bank(struct ContagionBipartite *net, uint32_t index);

/**
 * Guarantee the price of the asset at `index` against endogenous
 * fire-sale impact (buy-out padding). Mutates the handle.
 *
 * # Safety
 * `net` must be a live handle with no concurrent use.
 */
int32_t contagion_bipartite_pad_asset(struct ContagionBipartite *net, uint32_t index);

/**
 * Apply the shock and run fire-sale rounds to quiescence. `target_index`
 * addresses the shocked asset or bank for the deterministic shock kinds
 * and is ignored for the random ones, which resolve from `seed`.
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
int32_t contagion_firesale_run(const struct ContagionBipartite *net,
                               enum ContagionShockKind shock_kind,
                               uint32_t target_index,
                               double haircut,
                               enum ContagionImpact impact,
                               uint64_t seed,
                               struct ContagionCascadeStats *out);

/**
 * Count of padded banks in the handle (sanity helper for bindings).
 *
 * # Safety
 * `net` must be a live handle or NULL.
 */
uint32_t contagion_bipartite_n_padded(const struct ContagionBipartite *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTAGION_H */
