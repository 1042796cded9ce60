#ifndef MOTT_H
#define MOTT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum MottStatus {
  MOTT_STATUS_OK = 0,
  MOTT_STATUS_NULL_POINTER = 1,
  MOTT_STATUS_INVALID_PARAM = 2,
  MOTT_STATUS_PRECONDITION = 3,
  MOTT_STATUS_DOMAIN = 4,
  MOTT_STATUS_NUMERICAL = 5,
  MOTT_STATUS_IO = 6,
  MOTT_STATUS_PANIC = 7,
} MottStatus;

// Opaque environment handle.
typedef struct MottEnvironment MottEnvironment;

// Opaque network handle.
typedef struct MottNetwork MottNetwork;

// Model parameters. A `kappa` outside (0, 1), e.g. 0, means no holding times.
typedef struct MottParams {
  double rho;
  double beta;
  double lambda;
  double kappa;
} MottParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mott_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`) and returns its full length.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
uintptr_t mott_last_error_message(char *buf, uintptr_t len);

// Generates an environment on labels -half_width..=half_width.
//
// # Safety
// `params` must point to a valid struct and `out` to writable storage.
enum MottStatus mott_environment_generate(const struct MottParams *params,
                                          uintptr_t half_width,
                                          uint64_t seed,
                                          uint64_t stream_id,
                                          struct MottEnvironment **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum MottStatus mott_environment_load(const char *path, struct MottEnvironment **out);

// # Safety
// `env` must be a live handle and `path` a NUL-terminated string.
enum MottStatus mott_environment_save(const struct MottEnvironment *env, const char *path);

// # Safety
// `env` must be null or a handle not yet freed.
void mott_environment_free(struct MottEnvironment *env);

// # Safety
// `env` must be a live handle and `out` writable.
enum MottStatus mott_environment_half_width(const struct MottEnvironment *env, uintptr_t *out);

// Position omega_i of site i.
//
// # Safety
// `env` must be a live handle and `out` writable.
enum MottStatus mott_environment_omega(const struct MottEnvironment *env, int64_t i, double *out);

// Builds the truncated network on [-Kn, Kn]. `cutoff = 0` picks the default.
// The network keeps its own reference to the environment.
//
// # Safety
// `env` must be a live handle and `out` writable.
enum MottStatus mott_network_build(const struct MottEnvironment *env,
                                   uintptr_t k,
                                   uintptr_t n,
                                   uintptr_t cutoff,
                                   struct MottNetwork **out);

// # Safety
// `net` must be null or a handle not yet freed.
void mott_network_free(struct MottNetwork *net);

// Number of nodes 2Kn + 1.
//
// # Safety
// `net` must be a live handle and `out` writable.
enum MottStatus mott_network_node_count(const struct MottNetwork *net, uintptr_t *out);

// # Safety
// `net` must be a live handle and `out` writable.
enum MottStatus mott_network_conductance(const struct MottNetwork *net,
                                         int64_t i,
                                         int64_t j,
                                         double *out);

// Effective resistance between labels i and j.
//
// # Safety
// `net` must be a live handle and `out` writable.
enum MottStatus mott_network_effective_resistance(const struct MottNetwork *net,
                                                  int64_t i,
                                                  int64_t j,
                                                  double *out);

// Invariant mass of (floor(an), floor(bn)] divided by n.
//
// # Safety
// `net` must be a live handle and `out` writable.
enum MottStatus mott_network_measure_interval(const struct MottNetwork *net,
                                              double a,
                                              double b,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTT_H */
