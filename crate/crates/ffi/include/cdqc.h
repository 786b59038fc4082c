#ifndef CDQC_H
#define CDQC_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  CDQC_STATUS_OK = 0,
  CDQC_STATUS_NULL_POINTER = 1,
  CDQC_STATUS_INVALID_ARGUMENT = 2,
  CDQC_STATUS_VALIDATION = 3,
  CDQC_STATUS_RESOURCE_CAP = 4,
  CDQC_STATUS_SOLVER = 5,
  CDQC_STATUS_IO = 6,
  CDQC_STATUS_UNKNOWN = 7,
} CdqcStatus;

/**
 * Opaque matrix product operator handle.
 */
typedef struct CdqcMpo CdqcMpo;

/**
 * Opaque matrix product state handle.
 */
typedef struct CdqcMps CdqcMps;

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdqc_version(void);

/**
 * Copy the last error message (NUL-terminated, possibly truncated) into
 * `buf`; returns the full message length in bytes.
 */
uintptr_t cdqc_last_error_message(char *buf, uintptr_t len);

/**
 * Build the nearest-neighbour quantum Ising Hamiltonian MPO:
 * couplings `j` (length `n - 1`), transverse fields `g` and longitudinal
 * fields `h` (length `n`).
 */
CdqcStatus cdqc_ising_hamiltonian(uintptr_t n,
                                  const double *j,
                                  const double *g,
                                  const double *h,
                                  CdqcMpo **out);

/**
 * Parse the one-term-per-line Pauli text format (`re im STRING`) into an
 * MPO compressed at `cutoff`.
 */
CdqcStatus cdqc_pauli_sum_to_mpo(const char *text, double cutoff, CdqcMpo **out);

void cdqc_mpo_free(CdqcMpo *mpo);

uintptr_t cdqc_mpo_n_sites(const CdqcMpo *mpo);

uintptr_t cdqc_mpo_max_bond(const CdqcMpo *mpo);

/**
 * Save an MPO as a JSON manifest plus packed float64 payload.
 */
CdqcStatus cdqc_mpo_save(const CdqcMpo *mpo, const char *manifest_path);

CdqcStatus cdqc_mpo_load(const char *manifest_path, CdqcMpo **out);

/**
 * Computational basis state from one bit per site.
 */
CdqcStatus cdqc_basis_state(uintptr_t n, const uint8_t *bits, CdqcMps **out);

void cdqc_mps_free(CdqcMps *mps);

uintptr_t cdqc_mps_n_sites(const CdqcMps *mps);

uintptr_t cdqc_mps_max_bond(const CdqcMps *mps);

/**
 * DMRG ground state; writes the energy and hands back the state.
 */
CdqcStatus cdqc_ground_state(const CdqcMpo *h,
                             uintptr_t max_bond,
                             uintptr_t sweeps,
                             double *energy_out,
                             CdqcMps **state_out);

/**
 * `<s|O|s>` split into real and imaginary parts.
 */
CdqcStatus cdqc_expectation(const CdqcMps *s, const CdqcMpo *o, double *re, double *im);

/**
 * `<a|b>` split into real and imaginary parts.
 */
CdqcStatus cdqc_overlap(const CdqcMps *a, const CdqcMps *b, double *re, double *im);

/**
 * Von Neumann entanglement entropy across the bond between `bond` and
 * `bond + 1`.
 */
CdqcStatus cdqc_entanglement_entropy(const CdqcMps *s, uintptr_t bond, double *out);

/**
 * Variational MPO gauge potential for `[H, A] = -i dH`; returns the solved
 * operator and its quality metrics.
 */
CdqcStatus cdqc_solve_agp(const CdqcMpo *h,
                          const CdqcMpo *dh,
                          uintptr_t chi,
                          double eta,
                          uintptr_t sweeps,
                          CdqcMpo **a_out,
                          double *cost_out,
                          double *error_out,
                          double *defect_out);

/**
 * Run one experiment from a TOML config file into `out_dir`.
 */
CdqcStatus cdqc_run_experiment(const char *config_path, const char *out_dir);

#endif  /* CDQC_H */
