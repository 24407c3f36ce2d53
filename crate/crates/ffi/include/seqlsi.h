#ifndef SEQLSI_H
#define SEQLSI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of average treatment effects reported, in the order
 * 11.00, 11.01, 11.10, 10.00, 01.10, 01.00.
 */
#define SEQLSI_N_ATES 6

/**
 * Number of principal strata, in the order 00, 01, 10, 11.
 */
#define SEQLSI_N_STRATA 4

/**
 * Number of assignment-probability pairings compared by the sensitivity
 * analysis.
 */
#define SEQLSI_N_PAIRINGS 4

typedef enum SeqlsiStatus {
  SEQLSI_STATUS_OK = 0,
  SEQLSI_STATUS_NULL_POINTER = 1,
  /**
   * Out-of-range argument or violated precondition.
   */
  SEQLSI_STATUS_INVALID_ARGUMENT = 2,
  /**
   * File, parse or format failure.
   */
  SEQLSI_STATUS_IO = 3,
  /**
   * The sampler reached a non-finite or degenerate state.
   */
  SEQLSI_STATUS_NUMERICAL = 4,
  SEQLSI_STATUS_PANIC = 5,
} SeqlsiStatus;

typedef enum SeqlsiScenario {
  /**
   * Assignment depends on the latent stratum.
   */
  SEQLSI_SCENARIO_REFERENCE_LSI = 0,
  /**
   * Assignment depends only on the observed intermediate outcome.
   */
  SEQLSI_SCENARIO_REFERENCE_SI = 1,
} SeqlsiScenario;

typedef enum SeqlsiSpec {
  SEQLSI_SPEC_LSI = 0,
  SEQLSI_SPEC_SI1 = 1,
  SEQLSI_SPEC_SI2 = 2,
} SeqlsiSpec;

typedef struct SeqlsiChain SeqlsiChain;

typedef struct SeqlsiDataset SeqlsiDataset;

/**
 * Posterior summary of one scalar functional.
 */
typedef struct SeqlsiSummary {
  double mean;
  double sd;
  double q025;
  double q975;
} SeqlsiSummary;

/**
 * Posterior summary of one assignment-probability gap.
 */
typedef struct SeqlsiGap {
  double mean;
  double sd;
  double lower;
  double upper;
  /**
   * 1 when the credible interval excludes zero.
   */
  uint8_t excludes_zero;
} SeqlsiGap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the length of the
 * full message excluding the terminator; 0 means no error is recorded.
 */
size_t seqlsi_last_error_message(char *buf, size_t len);

/**
 * True effects of a reference scenario, `SEQLSI_N_ATES` values.
 */
enum SeqlsiStatus seqlsi_reference_true_ates(enum SeqlsiScenario scenario, double *out);

/**
 * Simulate `n` units from a reference scenario with the given seed.
 */
enum SeqlsiStatus seqlsi_dataset_simulate(enum SeqlsiScenario scenario,
                                          size_t n,
                                          uint64_t seed,
                                          struct SeqlsiDataset **out);

/**
 * Read a dataset CSV.
 */
enum SeqlsiStatus seqlsi_dataset_load_csv(const char *path, struct SeqlsiDataset **out);

/**
 * Write a dataset CSV with observed columns only.
 */
enum SeqlsiStatus seqlsi_dataset_save_csv(const struct SeqlsiDataset *data, const char *path);

/**
 * Number of units, or 0 for a null handle.
 */
size_t seqlsi_dataset_len(const struct SeqlsiDataset *data);

void seqlsi_dataset_free(struct SeqlsiDataset *data);

/**
 * Run one Gibbs chain with default priors.
 */
enum SeqlsiStatus seqlsi_fit(const struct SeqlsiDataset *data,
                             enum SeqlsiSpec spec,
                             size_t burn_in,
                             size_t kept,
                             size_t thin,
                             uint64_t seed,
                             struct SeqlsiChain **out);

/**
 * Number of stored draws, or 0 for a null handle.
 */
size_t seqlsi_chain_len(const struct SeqlsiChain *chain);

/**
 * Save a chain as CSV with its JSON metadata sidecar.
 */
enum SeqlsiStatus seqlsi_chain_save(const struct SeqlsiChain *chain, const char *path);

void seqlsi_chain_free(struct SeqlsiChain *chain);

/**
 * Posterior summaries of the six effects into `out[SEQLSI_N_ATES]`.
 */
enum SeqlsiStatus seqlsi_chain_ate_summary(const struct SeqlsiChain *chain,
                                           struct SeqlsiSummary *out);

/**
 * Posterior summaries of the stratum probabilities into
 * `out[SEQLSI_N_STRATA]`. Fails for an SI-2 chain, which has no strata.
 */
enum SeqlsiStatus seqlsi_chain_strata_probs(const struct SeqlsiChain *chain,
                                            struct SeqlsiSummary *out);

/**
 * Assignment-probability gaps of an LSI chain into `out[SEQLSI_N_PAIRINGS]`,
 * with equal-tailed intervals at `level` (for example 0.95).
 */
enum SeqlsiStatus seqlsi_chain_gap_summary(const struct SeqlsiChain *chain,
                                           double level,
                                           struct SeqlsiGap *out);

/**
 * Inverse-probability-weighted effects and bootstrap standard errors into
 * `estimates[SEQLSI_N_ATES]` and `std_errors[SEQLSI_N_ATES]`. Effects that
 * need an empty observed cell are NaN.
 */
enum SeqlsiStatus seqlsi_ipw(const struct SeqlsiDataset *data,
                             size_t bootstrap_reps,
                             uint64_t seed,
                             double *estimates,
                             double *std_errors);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEQLSI_H */
