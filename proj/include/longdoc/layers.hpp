#pragma once

// Differentiable building blocks of the encoder. Forward functions fill an
// optional cache; backward functions accumulate parameter gradients (+=) and
// return the input gradient.

#include <span>
#include <vector>

#include "longdoc/matrix.hpp"

namespace longdoc {

// y = x W^T + b with W stored out × in and b a 1 × out row.
Matrix linear_forward(const Matrix& x, const Matrix& w, const Matrix& b);
// Returns dL/dx; accumulates into dw and db.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db);

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

// Row-wise layer norm with 1 × d gain and bias.
Matrix layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                          LayerNormCache* cache);
Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache, Matrix& dgain,
                           Matrix& dbias);

// Exact (erf) GELU.
double gelu(double x);
double gelu_derivative(double x);

}  // namespace longdoc
