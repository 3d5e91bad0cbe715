#ifndef UNIPRED_H
#define UNIPRED_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum UpStatus {
  UP_STATUS_OK = 0,
  UP_STATUS_NULL_POINTER = 1,
  UP_STATUS_INVALID_ARGUMENT = 2,
  UP_STATUS_PARSE = 3,
  UP_STATUS_BUDGET_EXCEEDED = 4,
  UP_STATUS_IMPOSSIBLE_SEQUENCE = 5,
  UP_STATUS_BUFFER_TOO_SMALL = 6,
  UP_STATUS_FAILURE = 7,
  UP_STATUS_PANIC = 8,
} UpStatus;

/**
 * A hidden Markov model or renewal law.
 */
typedef struct UpModel UpModel;

/**
 * A next-symbol predictor.
 */
typedef struct UpPredictor UpPredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *up_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *up_version(void);

/**
 * Parses a model from JSON (`{"k","l","trans","emit"}` or `{"mu"}`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UpStatus up_model_from_json(const char *json, struct UpModel **out);

/**
 * Random `k`-state HMM over `l` symbols.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum UpStatus up_model_random_hmm(size_t k, size_t l, uint64_t seed, struct UpModel **out);

/**
 * Random renewal law on `{1..support}`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum UpStatus up_model_random_renewal(size_t support, uint64_t seed, struct UpModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void up_model_free(struct UpModel *model);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum UpStatus up_model_alphabet(const struct UpModel *model, size_t *out);

/**
 * Writes a sampled path of length `n` into `buf`, which holds `buf_len`
 * symbols.
 *
 * # Safety
 * `model` must be valid and `buf` must hold `buf_len` elements.
 */
enum UpStatus up_model_sample(const struct UpModel *model,
                              size_t n,
                              uint64_t seed,
                              size_t *buf,
                              size_t buf_len);

/**
 * Natural log-probability of `x` under the model.
 *
 * # Safety
 * `model` and `out` must be valid; `x` must hold `n` elements.
 */
enum UpStatus up_model_log_prob(const struct UpModel *model,
                                const size_t *x,
                                size_t n,
                                double *out);

/**
 * Builds a predictor from a JSON spec such as
 * `{"kind":"markov-approx","l":2,"d":"auto"}`. `model` may be null except
 * for the oracle predictor.
 *
 * # Safety
 * `spec` must be a NUL-terminated string, `model` null or valid, `out` valid.
 */
enum UpStatus up_predictor_from_json(const char *spec,
                                     const struct UpModel *model,
                                     struct UpPredictor **out);

/**
 * Releases a predictor; null is ignored.
 *
 * # Safety
 * `predictor` must come from this library and not be used afterwards.
 */
void up_predictor_free(struct UpPredictor *predictor);

/**
 * # Safety
 * `predictor` and `out` must be valid pointers.
 */
enum UpStatus up_predictor_alphabet(const struct UpPredictor *predictor, size_t *out);

/**
 * Writes the next-symbol distribution after `x` into `probs`, which must
 * hold at least the predictor's alphabet size.
 *
 * # Safety
 * `predictor` must be valid, `x` must hold `n` elements and `probs`
 * `probs_len` elements.
 */
enum UpStatus up_predict(const struct UpPredictor *predictor,
                         const size_t *x,
                         size_t n,
                         double *probs,
                         size_t probs_len);

/**
 * Log-probability of `x` under the `k`-state marginal add-one assignment
 * over `l` symbols.
 *
 * # Safety
 * `x` must hold `n` elements and `out` must be valid.
 */
enum UpStatus up_marginal_log_prob(size_t k, size_t l, const size_t *x, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNIPRED_H */
