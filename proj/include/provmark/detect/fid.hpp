#pragma once

#include <cstdint>
#include <vector>

#include "provmark/core/tensor.hpp"

namespace provmark::detect {

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// `a` is row-major d x d; eigenvalues come back ascending with matching
// eigenvectors as columns of `evecs`. Exposed for oracle tests.
void sym_eig(std::vector<double> a, int64_t d, std::vector<double>& evals,
             std::vector<double>& evecs);

// Frechet distance between Gaussian fits of two feature matrices (N x D,
// one row per image): |mu_a - mu_b|^2 + tr(Ca + Cb - 2 (Ca Cb)^{1/2}).
// The matrix square root is taken through the symmetric congruence
// Ca^{1/2} Cb Ca^{1/2}; eigenvalues above -1e-6 (relative) are clipped to
// zero, anything more negative aborts with the residual magnitude.
double fid(const Tensor<float>& features_a, const Tensor<float>& features_b);

}  // namespace provmark::detect
