#ifndef PFLP_H
#define PFLP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum PflpStatus {
  PFLP_STATUS_OK = 0,
  PFLP_STATUS_NULL_POINTER = 1,
  PFLP_STATUS_INVALID_UTF8 = 2,
  PFLP_STATUS_INVALID_INPUT = 3,
  PFLP_STATUS_UNKNOWN_FEATURE = 4,
  PFLP_STATUS_UNKNOWN_CANDIDATE = 5,
  PFLP_STATUS_UNKNOWN_ALGORITHM = 6,
  PFLP_STATUS_FIXATION_CONFLICT = 7,
  PFLP_STATUS_PARSE = 8,
  PFLP_STATUS_IO = 9,
  PFLP_STATUS_INTERNAL = 10,
  PFLP_STATUS_PANIC = 11,
} PflpStatus;

/**
 * Opaque session: one dataset, its editable candidate store, the last solver
 * result and the labeling currently shown.
 */
typedef struct PflpSession PflpSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a session from GeoJSON or simple JSON text; `format` may be null to
 * detect it from the content.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be valid for a write.
 */
enum PflpStatus pflp_session_from_json(const char *json,
                                       const char *format,
                                       double font_size,
                                       struct PflpSession **out);

/**
 * Creates a session over a generated jittered grid of point features.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum PflpStatus pflp_session_from_grid(uint32_t rows,
                                       uint32_t cols,
                                       double spacing_px,
                                       double jitter_px,
                                       uint32_t name_length,
                                       uint64_t seed,
                                       double font_size,
                                       struct PflpSession **out);

/**
 * # Safety
 * `session` must come from a constructor here and not be used afterwards.
 */
void pflp_session_free(struct PflpSession *session);

/**
 * Live candidate and conflict counts.
 *
 * # Safety
 * `session` must be a live handle; outputs may be null.
 */
enum PflpStatus pflp_graph_size(struct PflpSession *session,
                                size_t *out_candidates,
                                size_t *out_conflicts);

/**
 * Computes a fresh labeling. `algorithm` is one of greedy, mis, falp, chain,
 * popmusic, exact; `time_limit_s` only affects exact and is ignored when not positive.
 *
 * # Safety
 * `session` must be a live handle and `algorithm` NUL-terminated; `out_labeled` may be null.
 */
enum PflpStatus pflp_solve(struct PflpSession *session,
                           const char *algorithm,
                           uint64_t seed,
                           double time_limit_s,
                           size_t *out_labeled);

/**
 * Applies one edit given as JSON, e.g. `{"kind":"DeleteFeature","feature":"a"}`.
 *
 * # Safety
 * `session` must be a live handle and `edit_json` NUL-terminated.
 */
enum PflpStatus pflp_apply_edit(struct PflpSession *session, const char *edit_json);

/**
 * Reverts the latest edit; `out_undone` tells whether there was one.
 *
 * # Safety
 * `session` must be a live handle; `out_undone` may be null.
 */
enum PflpStatus pflp_undo(struct PflpSession *session, bool *out_undone);

/**
 * Re-optimizes after edits, favoring labels of the last solution by
 * `epsilon` (or the strict weight-first choice), and reports the stability ratio.
 *
 * # Safety
 * `session` must be a live handle and `algorithm` NUL-terminated; outputs may be null.
 */
enum PflpStatus pflp_update(struct PflpSession *session,
                            const char *algorithm,
                            double epsilon,
                            bool strict,
                            uint64_t seed,
                            double *out_ratio,
                            size_t *out_labeled);

/**
 * The shown labeling as JSON: dataset name, selected ids, total weight and
 * the label rectangles. Free the string with [`pflp_string_free`].
 *
 * # Safety
 * `session` must be a live handle and `out` valid for a write.
 */
enum PflpStatus pflp_labeling_json(struct PflpSession *session, char **out);

/**
 * Message of the last failure on this thread, or null. Free with [`pflp_string_free`].
 */
char *pflp_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed at most once.
 */
void pflp_string_free(char *s);

/**
 * Library version, statically allocated.
 */
const char *pflp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PFLP_H */
