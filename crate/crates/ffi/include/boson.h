#ifndef BOSON_H
#define BOSON_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_NULL_POINTER = 1,
  BS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Size or enumeration limit exceeded.
   */
  BS_STATUS_LIMIT = 3,
  /**
   * Input data rejected: not unitary, not Hermitian, inconsistent counts.
   */
  BS_STATUS_INVALID_DATA = 4,
  BS_STATUS_IO = 5,
  BS_STATUS_PANIC = 6,
} BsStatus;

typedef enum BsPermanentAlgorithm {
  BS_PERMANENT_ALGORITHM_NAIVE = 0,
  BS_PERMANENT_ALGORITHM_RYSER = 1,
  BS_PERMANENT_ALGORITHM_GLYNN = 2,
} BsPermanentAlgorithm;

typedef enum BsSamplerKind {
  /**
   * Indistinguishable photons.
   */
  BS_SAMPLER_KIND_BOSON = 0,
  BS_SAMPLER_KIND_DISTINGUISHABLE = 1,
  BS_SAMPLER_KIND_UNIFORM = 2,
  /**
   * Partial distinguishability; uses the `indistinguishability` argument.
   */
  BS_SAMPLER_KIND_MIXTURE = 3,
} BsSamplerKind;

typedef enum BsNull {
  /**
   * W_k counter, boson sampling vs uniform.
   */
  BS_NULL_UNIFORM = 0,
  /**
   * C_k counter, boson sampling vs distinguishable.
   */
  BS_NULL_DISTINGUISHABLE = 1,
} BsNull;

/**
 * Opaque extracted bit stream with its extraction summary.
 */
typedef struct BsBits BsBits;

/**
 * Opaque device model.
 */
typedef struct BsDevice BsDevice;

/**
 * Opaque batch of sampled output events.
 */
typedef struct BsSamples BsSamples;

/**
 * Opaque unitary matrix.
 */
typedef struct BsUnitary BsUnitary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bs_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bs_last_error_message(void);

/**
 * Permanent of an `n x n` complex matrix given as `2 n^2` interleaved doubles.
 *
 * # Safety
 * `data` must point to `2 * n * n` doubles; `out_re` and `out_im` must be writable.
 */
enum BsStatus bs_permanent(const double *data,
                           size_t n,
                           enum BsPermanentAlgorithm algorithm,
                           double *out_re,
                           double *out_im);

/**
 * Haar-random `m x m` unitary.
 *
 * # Safety
 * `out` must be writable.
 */
enum BsStatus bs_unitary_haar(size_t m, uint64_t seed, struct BsUnitary **out);

/**
 * Unitary from `2 m^2` interleaved doubles; rejected when not unitary.
 *
 * # Safety
 * `data` must point to `2 * m * m` doubles; `out` must be writable.
 */
enum BsStatus bs_unitary_from_interleaved(const double *data, size_t m, struct BsUnitary **out);

/**
 * Number of modes, or 0 for NULL.
 *
 * # Safety
 * `u` must be NULL or a live handle.
 */
size_t bs_unitary_dim(const struct BsUnitary *u);

/**
 * Copies the matrix into `out` as interleaved doubles; `len` must be `2 m^2`.
 *
 * # Safety
 * `u` must be a live handle and `out` must hold `len` doubles.
 */
enum BsStatus bs_unitary_copy(const struct BsUnitary *u, double *out, size_t len);

/**
 * # Safety
 * `u` must be NULL or a handle not yet freed.
 */
void bs_unitary_free(struct BsUnitary *u);

/**
 * Device model built into the library.
 *
 * # Safety
 * `out` must be writable.
 */
enum BsStatus bs_device_bundled(struct BsDevice **out);

/**
 * Device model from a JSON config file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum BsStatus bs_device_load(const char *path, struct BsDevice **out);

/**
 * Waveguide count, or 0 for NULL.
 *
 * # Safety
 * `d` must be NULL or a live handle.
 */
size_t bs_device_mode_count(const struct BsDevice *d);

/**
 * Heater count (length of a power vector), or 0 for NULL.
 *
 * # Safety
 * `d` must be NULL or a live handle.
 */
size_t bs_device_heater_count(const struct BsDevice *d);

/**
 * Random power vector with `n_active` heaters drawn uniformly in `[0, p_max_mw]`.
 *
 * # Safety
 * `d` must be a live handle and `out` must hold `len` doubles, `len` equal to the heater count.
 */
enum BsStatus bs_device_random_powers(const struct BsDevice *d,
                                      size_t n_active,
                                      double p_max_mw,
                                      uint64_t seed,
                                      double *out,
                                      size_t len);

/**
 * Device unitary under the power vector `powers` (mW, one per heater).
 *
 * # Safety
 * `d` must be a live handle, `powers` must hold `len` doubles and `out` must be writable.
 */
enum BsStatus bs_device_evolve(const struct BsDevice *d,
                               const double *powers,
                               size_t len,
                               struct BsUnitary **out);

/**
 * # Safety
 * `d` must be NULL or a handle not yet freed.
 */
void bs_device_free(struct BsDevice *d);

/**
 * Draws `count` output events for single photons in `inputs`. Trials and
 * seeding match the `boson sample` command for the same seed.
 *
 * # Safety
 * `u` must be a live handle, `inputs` must hold `n_inputs` values and `out` must be writable.
 */
enum BsStatus bs_sample(const struct BsUnitary *u,
                        const size_t *inputs,
                        size_t n_inputs,
                        enum BsSamplerKind kind,
                        double indistinguishability,
                        uint64_t count,
                        uint64_t seed,
                        struct BsSamples **out);

/**
 * Number of events, or 0 for NULL.
 *
 * # Safety
 * `s` must be NULL or a live handle.
 */
size_t bs_samples_len(const struct BsSamples *s);

/**
 * Photon count of event `index`, or 0 when out of range.
 *
 * # Safety
 * `s` must be NULL or a live handle.
 */
size_t bs_samples_photons(const struct BsSamples *s, size_t index);

/**
 * Occupied output modes of event `index` in ascending order, repeated per
 * photon. `len` must equal [`bs_samples_photons`] for that event.
 *
 * # Safety
 * `s` must be a live handle and `out` must hold `len` values.
 */
enum BsStatus bs_samples_modes(const struct BsSamples *s, size_t index, size_t *out, size_t len);

/**
 * Clears the kept flag of every event with two or more photons in one
 * mode. The W_k counter needs this; the C_k counter does not.
 *
 * # Safety
 * `s` must be a live handle.
 */
enum BsStatus bs_samples_post_select(struct BsSamples *s);

/**
 * Number of events with the kept flag set, or 0 for NULL.
 *
 * # Safety
 * `s` must be NULL or a live handle.
 */
size_t bs_samples_kept(const struct BsSamples *s);

/**
 * # Safety
 * `s` must be NULL or a handle not yet freed.
 */
void bs_samples_free(struct BsSamples *s);

/**
 * Runs one validation counter over the kept events. Writes the final counter
 * value and whether the null hypothesis is rejected.
 *
 * # Safety
 * `u` and `s` must be live handles, `inputs` must hold `n_inputs` values and
 * the out-pointers must be writable.
 */
enum BsStatus bs_validate(const struct BsUnitary *u,
                          const size_t *inputs,
                          size_t n_inputs,
                          const struct BsSamples *s,
                          enum BsNull null,
                          int64_t *out_final,
                          bool *out_rejects);

/**
 * Simulates `shots` single and pair counts from `u` on the listed inputs
 * and outputs, reconstructs the submatrix and writes its gauge distance to
 * the column-normalized truth. When `out_matrix` is not NULL it receives the
 * reconstruction as `2 * n_outputs * n_inputs` interleaved doubles.
 *
 * # Safety
 * `u` must be a live handle, `inputs`/`outputs` must hold the given counts,
 * `out_distance` must be writable and `out_matrix` must be NULL or hold
 * `2 * n_outputs * n_inputs` doubles.
 */
enum BsStatus bs_reconstruct_simulated(const struct BsUnitary *u,
                                       const size_t *inputs,
                                       size_t n_inputs,
                                       const size_t *outputs,
                                       size_t n_outputs,
                                       uint64_t shots,
                                       uint64_t seed,
                                       double *out_distance,
                                       double *out_matrix);

/**
 * Occupancy encoding, Von Neumann unbiasing, min-entropy estimate and
 * SHA-256 conditioning of every kept event, followed by the SP 800-22
 * battery at threshold `p_threshold`.
 *
 * # Safety
 * `s` must be a live handle and `out` must be writable.
 */
enum BsStatus bs_extract(const struct BsSamples *s,
                         size_t block_size,
                         double p_threshold,
                         struct BsBits **out);

/**
 * Number of conditioned bits, or 0 for NULL.
 *
 * # Safety
 * `b` must be NULL or a live handle.
 */
size_t bs_bits_len(const struct BsBits *b);

/**
 * Estimated min-entropy per Von Neumann bit, or NaN for NULL.
 *
 * # Safety
 * `b` must be NULL or a live handle.
 */
double bs_bits_min_entropy(const struct BsBits *b);

/**
 * Whether every SP 800-22 test long enough to run passed; false for NULL.
 *
 * # Safety
 * `b` must be NULL or a live handle.
 */
bool bs_bits_tests_passed(const struct BsBits *b);

/**
 * Copies the bits, one per byte with values 0 or 1; `len` must equal [`bs_bits_len`].
 *
 * # Safety
 * `b` must be a live handle and `out` must hold `len` bytes.
 */
enum BsStatus bs_bits_copy(const struct BsBits *b, uint8_t *out, size_t len);

/**
 * # Safety
 * `b` must be NULL or a handle not yet freed.
 */
void bs_bits_free(struct BsBits *b);

/**
 * SP 800-22 battery on `len` bits (one per byte, 0 or 1). Writes how many
 * tests were long enough to run and how many of those passed.
 *
 * # Safety
 * `bits` must hold `len` bytes; the out-pointers must be writable.
 */
enum BsStatus bs_nist(const uint8_t *bits,
                      size_t len,
                      double p_threshold,
                      size_t *out_computed,
                      size_t *out_passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOSON_H */
