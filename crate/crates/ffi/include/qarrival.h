#ifndef QARRIVAL_H
#define QARRIVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Batch pipeline selector for [`qa_run`].
typedef enum QaCommand {
  QA_COMMAND_FREE = 0,
  QA_COMMAND_BARRIER = 1,
  QA_COMMAND_COMPARE = 2,
  QA_COMMAND_UNCERTAINTY = 3,
} QaCommand;

typedef enum QaFormat {
  QA_FORMAT_CSV = 0,
  QA_FORMAT_JSON = 1,
} QaFormat;

// Result of every fallible call. `Ok` is zero.
typedef enum QaStatus {
  QA_STATUS_OK = 0,
  QA_STATUS_NULL_POINTER = 1,
  QA_STATUS_INVALID_UTF8 = 2,
  QA_STATUS_INVALID_ARGUMENT = 3,
  QA_STATUS_CONFIG = 4,
  // Packet is not confined to one half-line of momentum.
  QA_STATUS_NOT_DIRECTED = 5,
  // Time window or grid could not capture the distribution.
  QA_STATUS_WINDOW = 6,
  // Detector sits inside the interaction region.
  QA_STATUS_NOT_ASYMPTOTIC = 7,
  QA_STATUS_NUMERICAL = 8,
  QA_STATUS_IO = 9,
  // Caller's buffer is shorter than the data; nothing was written.
  QA_STATUS_BUFFER_TOO_SMALL = 10,
  QA_STATUS_PANIC = 11,
} QaStatus;

// Output of a batch pipeline run.
typedef struct QaBundle QaBundle;

// Parsed experiment config.
typedef struct QaConfig QaConfig;

// Sampled arrival-time density at one detector.
typedef struct QaDistribution QaDistribution;

// Free-evolving momentum-space packet.
typedef struct QaPacket QaPacket;

// Arrival-time and energy moments of a distribution.
typedef struct QaMoments {
  double mean;
  double spread;
  double energy_mean;
  double energy_spread;
  // `ΔE·Δt`.
  double product;
} QaMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *qa_version(void);

// Copies the calling thread's last error message into `buf` (truncated and
// always NUL-terminated when `len > 0`). Returns the full message length in
// bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t qa_last_error(char *buf, size_t len);

// Gaussian packet centred at `x0` with mean momentum `p0` and width
// `sigma_p`, sampled on `points` momenta spanning `p0 ± 8 sigma_p`.
//
// # Safety
// `out` must be a valid pointer; on success it receives a packet to be
// released with [`qa_packet_free`].
enum QaStatus qa_packet_gaussian(double p0,
                                 double sigma_p,
                                 double x0,
                                 double hbar,
                                 double mass,
                                 size_t points,
                                 struct QaPacket **out);

// Probability carried by the packet, `Σ w |ψ̃|²`.
//
// # Safety
// `packet` must be null or a live packet handle.
double qa_packet_norm(const struct QaPacket *packet);

// # Safety
// `packet` must be null or a handle not yet freed.
void qa_packet_free(struct QaPacket *packet);

// Transmitted part of a right-moving `packet` behind a piecewise-constant
// potential: segment `i` has height `heights[i]` on `[lefts[i], rights[i])`.
// The result is unnormalized; its norm is the transmittance.
//
// # Safety
// The three arrays must each hold `n` values; `out` as in
// [`qa_packet_gaussian`].
enum QaStatus qa_packet_transmit(const struct QaPacket *packet,
                                 const double *lefts,
                                 const double *rights,
                                 const double *heights,
                                 size_t n,
                                 struct QaPacket **out);

// Arrival-time density of a free `packet` at `detector` on an automatically
// sized window of at least `samples` points.
//
// # Safety
// `packet` must be a live handle; `out` as in [`qa_packet_gaussian`].
enum QaStatus qa_distribution_from_packet(const struct QaPacket *packet,
                                          double detector,
                                          size_t samples,
                                          struct QaDistribution **out);

// Transmitted arrival-time density of the incoming `packet` at `detector`
// behind a piecewise-constant potential (segments as in
// [`qa_packet_transmit`]). Its total is the transmittance.
//
// # Safety
// As for [`qa_packet_transmit`].
enum QaStatus qa_distribution_barrier(const struct QaPacket *packet,
                                      const double *lefts,
                                      const double *rights,
                                      const double *heights,
                                      size_t n,
                                      double detector,
                                      size_t samples,
                                      struct QaDistribution **out);

// Number of time samples.
//
// # Safety
// `dist` must be null or a live handle.
size_t qa_distribution_len(const struct QaDistribution *dist);

// `Σ w Π`, the captured probability.
//
// # Safety
// `dist` must be null or a live handle.
double qa_distribution_total(const struct QaDistribution *dist);

// Copies physical arrival times and densities into `times` and `values`,
// each of capacity `len`. Either pointer may be null to skip it.
//
// # Safety
// Non-null buffers must hold `len` writable doubles.
enum QaStatus qa_distribution_copy(const struct QaDistribution *dist,
                                   double *times,
                                   double *values,
                                   size_t len);

// Mean physical arrival time of the conditional distribution.
//
// # Safety
// `dist` must be a live handle and `mean` a valid pointer.
enum QaStatus qa_distribution_mean(const struct QaDistribution *dist, double *mean);

// Arrival and energy moments; `packet` must be the packet `dist` was
// computed from (the transmitted one behind a barrier).
//
// # Safety
// Handles must be live and `out` a valid pointer.
enum QaStatus qa_distribution_moments(const struct QaPacket *packet,
                                      const struct QaDistribution *dist,
                                      struct QaMoments *out);

// # Safety
// `dist` must be null or a handle not yet freed.
void qa_distribution_free(struct QaDistribution *dist);

// Parses a TOML experiment config.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` as in [`qa_packet_gaussian`].
enum QaStatus qa_config_from_toml(const char *toml, struct QaConfig **out);

// # Safety
// `cfg` must be null or a handle not yet freed.
void qa_config_free(struct QaConfig *cfg);

// Runs a batch pipeline. `seed` overrides the ensemble seed when
// `use_seed` is nonzero.
//
// # Safety
// `cfg` must be a live handle; `out` as in [`qa_packet_gaussian`].
enum QaStatus qa_run(const struct QaConfig *cfg,
                     enum QaCommand command,
                     int32_t use_seed,
                     uint64_t seed,
                     struct QaBundle **out);

// 1 when every verdict passed, 0 otherwise (also for a null handle).
//
// # Safety
// `bundle` must be null or a live handle.
int32_t qa_bundle_passed(const struct QaBundle *bundle);

// Number of verdicts in the bundle.
//
// # Safety
// `bundle` must be null or a live handle.
size_t qa_bundle_verdict_count(const struct QaBundle *bundle);

// Value and outcome of verdict `index`.
//
// # Safety
// `bundle` must be a live handle; `value` and `pass` valid pointers.
enum QaStatus qa_bundle_verdict(const struct QaBundle *bundle,
                                size_t index,
                                double *value,
                                int32_t *pass);

// Writes the bundle's tables into directory `dir`, creating it if needed.
//
// # Safety
// `bundle` must be a live handle and `dir` a NUL-terminated path.
enum QaStatus qa_bundle_write(const struct QaBundle *bundle, const char *dir, enum QaFormat format);

// # Safety
// `bundle` must be null or a handle not yet freed.
void qa_bundle_free(struct QaBundle *bundle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QARRIVAL_H */
