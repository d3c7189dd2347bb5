#ifndef TOASEL_H
#define TOASEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum ToaselStatus {
  TOASEL_STATUS_OK = 0,
  TOASEL_STATUS_NULL_POINTER = 1,
  TOASEL_STATUS_INVALID_UTF8 = 2,
  TOASEL_STATUS_PARSE = 3,
  TOASEL_STATUS_INVALID = 4,
  TOASEL_STATUS_NO_PATH = 5,
  TOASEL_STATUS_INSUFFICIENT_MEASUREMENTS = 6,
  TOASEL_STATUS_DISCONNECTED = 7,
  TOASEL_STATUS_IO = 8,
  // A panic was caught at the boundary.
  TOASEL_STATUS_INTERNAL = 9,
} ToaselStatus;

// Opaque scene handle.
typedef struct ToaselScene ToaselScene;

// Opaque neighborhood table handle.
typedef struct ToaselTable ToaselTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *toasel_last_error_message(void);

// Parses a scene JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum ToaselStatus toasel_scene_load(const char *json, struct ToaselScene **out);

// Reads and parses a scene file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ToaselStatus toasel_scene_load_file(const char *path, struct ToaselScene **out);

// # Safety
// `scene` must come from a scene loader and not be freed twice. Null is a no-op.
void toasel_scene_free(struct ToaselScene *scene);

// # Safety
// `scene` must be a live handle; `out` must be writable.
enum ToaselStatus toasel_scene_ap_count(const struct ToaselScene *scene, size_t *out);

// Minimum-delay ToA between two points. `tx` and `rx` point to `[x, y, z]`.
// Returns `NoPath` when nothing connects them within `max_order`.
//
// # Safety
// Pointers must be valid; `out_interactions` may be null.
enum ToaselStatus toasel_min_delay_toa(const struct ToaselScene *scene,
                                       const double *tx,
                                       const double *rx,
                                       uint32_t max_order,
                                       double *out_toa_s,
                                       size_t *out_interactions);

// Builds the neighborhood table for a scene.
//
// # Safety
// `scene` must be a live handle; `out` must be writable.
enum ToaselStatus toasel_table_build(const struct ToaselScene *scene,
                                     uint32_t max_order,
                                     struct ToaselTable **out);

// Parses a table JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum ToaselStatus toasel_table_load(const char *json, struct ToaselTable **out);

// Serializes a table to JSON. Release the string with [`toasel_string_free`].
//
// # Safety
// `table` must be a live handle; `out` must be writable.
enum ToaselStatus toasel_table_save(const struct ToaselTable *table, char **out);

// Number of neighbors `k` kept for `ap_id`.
//
// # Safety
// `table` must be a live handle; `out` must be writable.
enum ToaselStatus toasel_table_k(const struct ToaselTable *table, uint32_t ap_id, size_t *out);

// # Safety
// `table` must come from a table constructor and not be freed twice. Null is a no-op.
void toasel_table_free(struct ToaselTable *table);

// # Safety
// `s` must come from this library and not be freed twice. Null is a no-op.
void toasel_string_free(char *s);

// Simulates one ToA set at `ue` (`[x, y, z]`). `len` must equal the AP
// count. Entry `i` of `out_toas_s` / `out_valid` belongs to AP `i`;
// unreachable APs get NaN and 0.
//
// # Safety
// Output arrays must hold `len` elements.
enum ToaselStatus toasel_measure(const struct ToaselScene *scene,
                                 const double *ue,
                                 uint32_t max_order,
                                 double noise_sigma_s,
                                 uint64_t seed,
                                 double *out_toas_s,
                                 uint8_t *out_valid,
                                 size_t len);

// Selects measurements with `strategy` (e.g. `"union"`, `"fixed:5"`) and
// estimates the position into `out_xyz`. `table` may be null for
// strategies that do not consult it. `out_n_selected` may be null.
//
// # Safety
// Input arrays must hold `len` elements; `out_xyz` must hold 3.
enum ToaselStatus toasel_estimate(const struct ToaselScene *scene,
                                  const struct ToaselTable *table,
                                  const char *strategy,
                                  const double *toas_s,
                                  const uint8_t *valid,
                                  size_t len,
                                  double *out_xyz,
                                  size_t *out_n_selected);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOASEL_H */
