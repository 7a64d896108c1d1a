/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef AVSEARCH_H
#define AVSEARCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AvsStatus {
  AVS_STATUS_OK = 0,
  AVS_STATUS_NULL_ARGUMENT = 1,
  AVS_STATUS_INVALID_ARGUMENT = 2,
  AVS_STATUS_INVALID_CONFIG = 3,
  AVS_STATUS_INVALID_MAP = 4,
  AVS_STATUS_IO = 5,
  AVS_STATUS_EPISODE_DONE = 6,
  AVS_STATUS_BUFFER_TOO_SMALL = 7,
  AVS_STATUS_PANIC = 8,
  AVS_STATUS_INTERNAL = 9,
} AvsStatus;

/**
 * How an episode ended; `AVS_OUTCOME_NONE` while it is running.
 */
typedef enum AvsOutcome {
  AVS_OUTCOME_NONE = 0,
  AVS_OUTCOME_COMMITTED_CORRECT = 1,
  AVS_OUTCOME_COMMITTED_WRONG = 2,
  AVS_OUTCOME_COLLISION = 3,
  AVS_OUTCOME_TIMEOUT = 4,
} AvsOutcome;

/**
 * Opaque environment handle.
 */
typedef struct AvsEnv AvsEnv;

/**
 * Opaque policy handle. Holds its own random stream.
 */
typedef struct AvsPolicy AvsPolicy;

typedef struct AvsTransition {
  double reward;
  bool done;
  enum AvsOutcome outcome;
} AvsTransition;

/**
 * Observation without the posterior; see [`avs_env_posterior`].
 */
typedef struct AvsObservation {
  double est_theta;
  double est_r;
  double theta_uncertainty;
  double r_uncertainty;
  /**
   * Oldest first; 0 where no action was taken yet.
   */
  uint8_t last_actions[4];
  double posterior_entropy;
  uint32_t elapsed_steps;
} AvsObservation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *avs_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *avs_version(void);

/**
 * Creates an environment from a map in JSON and starts an episode.
 * `config_toml` may be null for the defaults.
 *
 * # Safety
 * String arguments are null or valid nul-terminated strings; `out` is null
 * or writable.
 */
enum AvsStatus avs_env_new(const char *map_json,
                           const char *config_toml,
                           uint64_t seed,
                           struct AvsEnv **out);

/**
 * # Safety
 * `env` is null or a handle from [`avs_env_new`] not yet freed.
 */
void avs_env_free(struct AvsEnv *env);

/**
 * Starts a new episode on the same map.
 *
 * # Safety
 * `env` is null or a live handle.
 */
enum AvsStatus avs_env_reset(struct AvsEnv *env, uint64_t seed);

/**
 * Applies an action by wire code (1 turn left, 2 turn right, 3 forward,
 * 4 stay, 5 commit). `out` may be null.
 *
 * # Safety
 * `env` is null or a live handle; `out` is null or writable.
 */
enum AvsStatus avs_env_step(struct AvsEnv *env, uint8_t action, struct AvsTransition *out);

/**
 * # Safety
 * `env` is null or a live handle; `out` is null or writable.
 */
enum AvsStatus avs_env_observe(const struct AvsEnv *env, struct AvsObservation *out);

/**
 * Posterior grid shape: range bins and azimuth bins.
 *
 * # Safety
 * `env` is null or a live handle; the outputs are null or writable.
 */
enum AvsStatus avs_env_posterior_shape(const struct AvsEnv *env, size_t *rows, size_t *cols);

/**
 * Copies the posterior probabilities, row-major, into `buf`. Returns
 * `BufferTooSmall` (copying nothing) when `len` is short; `written` always
 * receives the required length when non-null.
 *
 * # Safety
 * `env` is null or a live handle; `buf` is null or valid for `len` doubles;
 * `written` is null or writable.
 */
enum AvsStatus avs_env_posterior(const struct AvsEnv *env,
                                 double *buf,
                                 size_t len,
                                 size_t *written);

/**
 * # Safety
 * `env` is null or a live handle.
 */
bool avs_env_is_done(const struct AvsEnv *env);

/**
 * The episode log as JSON lines. Release with [`avs_string_free`].
 *
 * # Safety
 * `env` is null or a live handle; `out` is null or writable.
 */
enum AvsStatus avs_env_log_jsonl(const struct AvsEnv *env, char **out);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void avs_string_free(char *s);

/**
 * Creates a policy by name (`greedy`, `heuristic`, `random`). The policy's
 * random stream is seeded with `seed`.
 *
 * # Safety
 * String arguments are null or valid nul-terminated strings; `out` is null
 * or writable.
 */
enum AvsStatus avs_policy_new(const char *name,
                              const char *config_toml,
                              uint64_t seed,
                              struct AvsPolicy **out);

/**
 * # Safety
 * `policy` is null or a handle from [`avs_policy_new`] not yet freed.
 */
void avs_policy_free(struct AvsPolicy *policy);

/**
 * Chooses the next action code for the environment's current state.
 *
 * # Safety
 * Handles are null or live; `action` is null or writable.
 */
enum AvsStatus avs_policy_decide(struct AvsPolicy *policy,
                                 const struct AvsEnv *env,
                                 uint8_t *action);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVSEARCH_H */
