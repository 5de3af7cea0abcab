#ifndef HOMOTOMO_H
#define HOMOTOMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the first three match the command-line exit codes.
#define HOMOTOMO_OK 0

// Numerical or coverage failure during a computation.
#define HOMOTOMO_ERR_RUNTIME 1

// Invalid arguments, configuration, or file contents.
#define HOMOTOMO_ERR_INVALID 2

// A required pointer argument was NULL.
#define HOMOTOMO_ERR_NULL 4

// An internal panic was caught at the boundary.
#define HOMOTOMO_ERR_PANIC 5

// Sum-field dataset loaded from disk.
typedef struct HomotomoDataset HomotomoDataset;

// Density matrix in the field-strength basis on an output grid.
typedef struct HomotomoMatrix HomotomoMatrix;

// Truncated N-mode density operator in the Fock basis.
typedef struct HomotomoState HomotomoState;

// Reconstruction settings. Zero or negative fields select defaults.
typedef struct HomotomoReconstructOptions {
  // Efficiency to compensate for; defaults to the data's.
  double eta;
  // Radial filter cutoff; no filter when <= 0.
  double y_cut;
  // Outer quadrature nodes per axis.
  size_t nodes;
  // Half-width of the outer quadrature box.
  double y_max;
} HomotomoReconstructOptions;

// Invariant residuals of a matrix; NaN when the grid has no zero offset.
typedef struct HomotomoResiduals {
  double hermiticity;
  double diagonal_imag_max;
  double diagonal_negativity;
  double diagonal_normalization;
} HomotomoResiduals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the last error on this thread, or NULL if none occurred.
// The string stays valid until the next failing call on the same thread.
const char *homotomo_last_error(void);

// Library version as a static NUL-terminated string.
const char *homotomo_version(void);

// Builds a state from a JSON state spec, e.g.
// `{"n_modes":2,"truncation_dim":8,"kind":{"type":"vacuum"}}`.
int32_t homotomo_state_from_json(const char *json, struct HomotomoState **out);

void homotomo_state_free(struct HomotomoState *state);

size_t homotomo_state_n_modes(const struct HomotomoState *state);

// Ψ(z, ψ) = Tr[ρ̂ Π_k D_k(i z_k |F| e^{iψ_k})] for `n` modes.
int32_t homotomo_characteristic_function(const struct HomotomoState *state,
                                         const double *z,
                                         const double *psi,
                                         size_t n,
                                         double field_scale,
                                         double *out_re,
                                         double *out_im);

// Exact ⟨ℱ−ℱ′, φ|ρ̂|ℱ+ℱ′, φ⟩ for one point with `n` modes.
int32_t homotomo_oracle_element(const struct HomotomoState *state,
                                const double *center,
                                const double *offset,
                                const double *phases,
                                size_t n,
                                double field_scale,
                                double *out_re,
                                double *out_im);

// Exact matrix on an output grid. `grid_json` is an object with `centers`
// and `offsets` (one axis per mode) or NULL for the default grid;
// `phases` has one entry per mode or is NULL for zeros.
int32_t homotomo_oracle_grid(const struct HomotomoState *state,
                             const char *grid_json,
                             const double *phases,
                             double field_scale,
                             struct HomotomoMatrix **out);

// Reconstruction from the exact characteristic function of a state. With
// `opts->eta` < 1 the data are degraded by that efficiency and compensated.
// `opts` may be NULL for defaults.
int32_t homotomo_reconstruct_analytic(const struct HomotomoState *state,
                                      const char *grid_json,
                                      const double *phases,
                                      double field_scale,
                                      const struct HomotomoReconstructOptions *opts,
                                      struct HomotomoMatrix **out);

// Loads a dataset directory written by `homotomo simulate`.
int32_t homotomo_dataset_read(const char *dir, struct HomotomoDataset **out);

void homotomo_dataset_free(struct HomotomoDataset *ds);

size_t homotomo_dataset_n_settings(const struct HomotomoDataset *ds);

// Reconstruction from measured sum-field data. `grid_json` and `phases`
// follow [`homotomo_oracle_grid`]; `opts` may be NULL.
int32_t homotomo_reconstruct_dataset(const struct HomotomoDataset *ds,
                                     const char *grid_json,
                                     const double *phases,
                                     const struct HomotomoReconstructOptions *opts,
                                     struct HomotomoMatrix **out);

int32_t homotomo_matrix_read(const char *path, struct HomotomoMatrix **out);

int32_t homotomo_matrix_write(const struct HomotomoMatrix *m, const char *path);

void homotomo_matrix_free(struct HomotomoMatrix *m);

size_t homotomo_matrix_n_centers(const struct HomotomoMatrix *m);

size_t homotomo_matrix_n_offsets(const struct HomotomoMatrix *m);

// Copies all elements, `re[c * n_offsets + o]`, into caller arrays of
// length `len` (which must equal n_centers * n_offsets).
int32_t homotomo_matrix_elements(const struct HomotomoMatrix *m,
                                 double *re,
                                 double *im,
                                 size_t len);

int32_t homotomo_matrix_residuals(const struct HomotomoMatrix *m, struct HomotomoResiduals *out);

// Largest elementwise |a − b|; `HOMOTOMO_ERR_INVALID` if the grids differ.
int32_t homotomo_matrix_compare(const struct HomotomoMatrix *a,
                                const struct HomotomoMatrix *b,
                                double *out_linf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMOTOMO_H */
