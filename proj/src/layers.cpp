#include "longdoc/layers.hpp"

#include <cassert>
#include <cmath>
#include <numbers>

#include "longdoc/kernels.hpp"

namespace longdoc {

Matrix linear_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  assert(x.cols() == w.cols() && b.cols() == w.rows());
  Matrix y(x.rows(), w.rows());
  auto bias = b.row(0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) yr[o] = kernels::dot(xr, w.row(o)) + bias[o];
  }
  return y;
}

Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db) {
  Matrix dx(x.rows(), x.cols());
  auto dbias = db.row(0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto dxr = dx.row(r);
    auto dyr = dy.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      kernels::axpy(g, w.row(o), dxr);
      kernels::axpy(g, xr, dw.row(o));
      dbias[o] += g;
    }
  }
  return dx;
}

Matrix layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                          LayerNormCache* cache) {
  const std::size_t d = x.cols();
  Matrix y(x.rows(), d);
  if (cache != nullptr) {
    cache->xhat = Matrix(x.rows(), d);
    cache->inv_std.assign(x.rows(), 0.0);
  }
  auto g = gain.row(0);
  auto b = bias.row(0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto yr = y.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (xr[c] - mean) * inv;
      yr[c] = xh * g[c] + b[c];
      if (cache != nullptr) cache->xhat(r, c) = xh;
    }
    if (cache != nullptr) cache->inv_std[r] = inv;
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache, Matrix& dgain,
                           Matrix& dbias) {
  const std::size_t d = dy.cols();
  Matrix dx(dy.rows(), d);
  auto g = gain.row(0);
  auto dg = dgain.row(0);
  auto db = dbias.row(0);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto dyr = dy.row(r);
    auto xh = cache.xhat.row(r);
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dg[c] += dyr[c] * xh[c];
      db[c] += dyr[c];
      dxhat[c] = dyr[c] * g[c];
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * xh[c];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    auto dxr = dx.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      dxr[c] = cache.inv_std[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
    }
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace longdoc
