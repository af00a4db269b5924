#ifndef LPV_DFSM_H
#define LPV_DFSM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status code returned by every function.
 */
typedef enum LpvStatus {
  LPV_STATUS_OK = 0,
  LPV_STATUS_NULL_POINTER = 1,
  LPV_STATUS_INVALID_ARGUMENT = 2,
  LPV_STATUS_IO = 3,
  LPV_STATUS_PARSE = 4,
  LPV_STATUS_DIVERGED = 5,
  LPV_STATUS_UNSTABLE_MODEL = 6,
  LPV_STATUS_NOT_FOUND = 7,
  LPV_STATUS_BUFFER_TOO_SMALL = 8,
  LPV_STATUS_PANIC = 99,
} LpvStatus;

/*
 Loaded surrogate model.
 */
typedef struct LpvModelHandle LpvModelHandle;

/*
 Closed-loop simulation result.
 */
typedef struct LpvRecordHandle LpvRecordHandle;

/*
 Load-case settings for a simulation.
 */
typedef struct LpvLoadCase {
  /*
   Mean hub-height wind speed [m/s].
   */
  double w_bar;
  double turbulence_intensity;
  /*
   Significant wave height [m].
   */
  double hs;
  /*
   Peak wave period [s].
   */
  double tp;
  /*
   [s]
   */
  double duration;
  /*
   [s]
   */
  double dt;
  uint64_t seed;
} LpvLoadCase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next failing call on the same thread.
 */
const char *lpv_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *lpv_version(void);

/*
 Default load case: 14 m/s, 10 % turbulence, 700 s at 0.01 s.
 */
struct LpvLoadCase lpv_load_case_default(void);

/*
 Loads a model JSON file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpvStatus lpv_model_load(const char *path, struct LpvModelHandle **out);

/*
 Parses a model from a JSON string.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpvStatus lpv_model_from_json(const char *json, struct LpvModelHandle **out);

/*
 Releases a model; NULL is ignored.

 # Safety
 `model` must come from a `lpv_model_*` constructor and not be used again.
 */
void lpv_model_free(struct LpvModelHandle *model);

/*
 Number of anchor models.

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum LpvStatus lpv_model_anchor_count(const struct LpvModelHandle *model, size_t *out);

/*
 Largest real part of the eigenvalues of any anchor `A` matrix [1/s].

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum LpvStatus lpv_model_stability_margin(const struct LpvModelHandle *model, double *out);

/*
 Row-major `A` matrix interpolated at scheduling wind speed `w`. `len`
 must be at least `n_states²`; the required length is written to
 `needed` when it is not NULL.

 # Safety
 `model` must be a live handle; `buf` must hold `len` doubles.
 */
enum LpvStatus lpv_model_state_matrix(const struct LpvModelHandle *model,
                                      double w,
                                      double *buf,
                                      size_t len,
                                      size_t *needed);

/*
 Closed-loop surrogate simulation of one load case with controller
 tuning `(omega_pc, zeta_pc)`.

 # Safety
 `model` must be a live handle; `case` and `out` valid pointers.
 */
enum LpvStatus lpv_simulate_surrogate(const struct LpvModelHandle *model,
                                      const struct LpvLoadCase *case_,
                                      double omega_pc,
                                      double zeta_pc,
                                      struct LpvRecordHandle **out);

/*
 Closed-loop simulation of the built-in reference plant.

 # Safety
 `case` and `out` must be valid pointers.
 */
enum LpvStatus lpv_simulate_truth(const struct LpvLoadCase *case_,
                                  double omega_pc,
                                  double zeta_pc,
                                  struct LpvRecordHandle **out);

/*
 Releases a record; NULL is ignored.

 # Safety
 `record` must come from a simulate call and not be used again.
 */
void lpv_record_free(struct LpvRecordHandle *record);

/*
 Sample count, time step [s] and simulation wall time [s]; any out
 pointer may be NULL.

 # Safety
 `record` must be a live handle.
 */
enum LpvStatus lpv_record_info(const struct LpvRecordHandle *record,
                               size_t *len,
                               double *dt,
                               double *wall_time);

/*
 Copies channel `name` (e.g. "beta", "omega_g", "M_ty") into `buf`.

 # Safety
 `record` must be a live handle, `name` NUL-terminated and `buf` able to
 hold `len` doubles.
 */
enum LpvStatus lpv_record_channel(const struct LpvRecordHandle *record,
                                  const char *name,
                                  double *buf,
                                  size_t len);

/*
 Damage-equivalent load of a signal of `duration` seconds with Wöhler
 exponent `wohler_m`, referenced to `duration` cycles.

 # Safety
 `signal` must hold `n` doubles and `out` be a valid pointer.
 */
enum LpvStatus lpv_damage_equivalent_load(const double *signal,
                                          size_t n,
                                          double duration,
                                          double wohler_m,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPV_DFSM_H */
