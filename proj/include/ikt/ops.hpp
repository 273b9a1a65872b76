#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ikt/rng.hpp"
#include "ikt/tensor.hpp"

// Forward/backward primitives for the attention model. Backward functions
// ACCUMULATE into the provided gradient tensors so shared inputs (a stream
// feeding several projections) collect contributions from every consumer.

namespace ikt::num {

inline constexpr double kBceEps = 1e-7;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw NumericError("shape", "matmul: inner dimensions disagree (" +
                                    std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a.v[i * k];
    double* crow = &c.v[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.v[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// dA = dC * B^T, dB = A^T * dC; both accumulated.
inline void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& d_c,
                            Tensor& d_a, Tensor& d_b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (d_c.rows() != m || d_c.cols() != n)
    throw NumericError("shape", "matmul_backward: dC shape mismatch");
  for (std::size_t i = 0; i < m; ++i) {
    const double* dcrow = &d_c.v[i * n];
    double* darow = &d_a.v[i * k];
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = &b.v[p * n];
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      darow[p] += acc;
    }
    const double* arow = &a.v[i * k];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* dbrow = &d_b.v[p * n];
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

enum class EmptyRowPolicy {
  error,  // a fully masked row violates the contract
  zero,   // emit an all-zero probability row (attention rows with no keys)
};

// Row-wise softmax over unmasked entries, max-subtracted for stability.
// Masked entries get probability exactly 0.
inline Tensor masked_softmax_rows(const Tensor& s,
                                  const std::vector<std::uint8_t>& mask,
                                  EmptyRowPolicy policy = EmptyRowPolicy::error) {
  const std::size_t m = s.rows(), n = s.cols();
  if (mask.size() != m * n)
    throw NumericError("shape", "masked_softmax_rows: mask size mismatch");
  Tensor p({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) mx = std::max(mx, s.at(i, j));
    if (mx == -std::numeric_limits<double>::infinity()) {
      if (policy == EmptyRowPolicy::error)
        throw NumericError("degenerate-row",
                           "masked_softmax_rows: row " + std::to_string(i) +
                               " is fully masked");
      continue;  // leave the row at zero
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[i * n + j]) continue;
      double e = std::exp(s.at(i, j) - mx);
      p.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) p.at(i, j) /= z;
  }
  return p;
}

// dS[i][j] = P[i][j] * (dP[i][j] - sum_k dP[i][k] * P[i][k]).
// Masked and empty rows fall out naturally because their P entries are 0.
inline void masked_softmax_backward(const Tensor& probs, const Tensor& d_probs,
                                    Tensor& d_s) {
  const std::size_t m = probs.rows(), n = probs.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += d_probs.at(i, j) * probs.at(i, j);
    for (std::size_t j = 0; j < n; ++j)
      d_s.at(i, j) += probs.at(i, j) * (d_probs.at(i, j) - dot);
  }
}

struct LayerNormCache {
  Tensor xhat;                  // normalized rows before gain/bias
  std::vector<double> inv_std;  // per-row 1/sqrt(var + eps)
};

inline constexpr double kLayerNormEps = 1e-5;

// Per-row zero-mean unit-variance normalization followed by affine gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = kLayerNormEps,
                         LayerNormCache* cache = nullptr) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d)
    throw NumericError("shape", "layer_norm: gain/bias width mismatch");
  Tensor y({n, d});
  Tensor xhat({n, d});
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      double h = (x.at(i, j) - mean) * is;
      xhat.at(i, j) = h;
      y.at(i, j) = h * gain.v[j] + bias.v[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

inline void layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                                const Tensor& d_y, Tensor& d_x, Tensor& d_gain,
                                Tensor& d_bias) {
  const std::size_t n = cache.xhat.rows(), d = cache.xhat.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double dxh = d_y.at(i, j) * gain.v[j];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * cache.xhat.at(i, j);
      d_gain.v[j] += d_y.at(i, j) * cache.xhat.at(i, j);
      d_bias.v[j] += d_y.at(i, j);
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      double dxh = d_y.at(i, j) * gain.v[j];
      d_x.at(i, j) += cache.inv_std[i] *
                      (dxh - inv_d * sum_dxhat -
                       inv_d * cache.xhat.at(i, j) * sum_dxhat_xhat);
    }
  }
}

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& e : y.v) e = std::max(0.0, e);
  return y;
}

inline void relu_backward(const Tensor& x, const Tensor& d_y, Tensor& d_x) {
  for (std::size_t i = 0; i < x.v.size(); ++i)
    if (x.v[i] > 0.0) d_x.v[i] += d_y.v[i];
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (double& e : y.v) e = 1.0 / (1.0 + std::exp(-e));
  return y;
}

// Takes the forward output y = sigmoid(x).
inline void sigmoid_backward(const Tensor& y, const Tensor& d_y, Tensor& d_x) {
  for (std::size_t i = 0; i < y.v.size(); ++i)
    d_x.v[i] += d_y.v[i] * y.v[i] * (1.0 - y.v[i]);
}

// Row gather; ids index the table's first dimension.
inline Tensor embedding_lookup(const Tensor& table,
                               const std::vector<std::size_t>& ids) {
  const std::size_t r = table.rows(), d = table.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= r)
      throw NumericError("index", "embedding_lookup: id " +
                                      std::to_string(ids[i]) +
                                      " out of range (table rows " +
                                      std::to_string(r) + ")");
    const double* src = &table.v[ids[i] * d];
    std::copy(src, src + d, &out.v[i * d]);
  }
  return out;
}

// Scatter-add of row gradients back into the table gradient.
inline void embedding_backward(const std::vector<std::size_t>& ids,
                               const Tensor& d_rows, Tensor& d_table) {
  const std::size_t d = d_table.cols();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double* dst = &d_table.v[ids[i] * d];
    const double* src = &d_rows.v[i * d];
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
  }
}

inline std::size_t mask_count(const std::vector<std::uint8_t>& mask) {
  std::size_t n = 0;
  for (std::uint8_t m : mask) n += (m != 0);
  return n;
}

// Mean binary cross-entropy over mask-true positions. Probabilities are
// clamped to [eps, 1-eps] so the loss stays finite at the boundary.
inline double bce_masked(const Tensor& p, const Tensor& y,
                         const std::vector<std::uint8_t>& mask) {
  if (p.size() != y.size() || p.size() != mask.size())
    throw NumericError("shape", "bce_masked: size mismatch");
  const std::size_t n = mask_count(mask);
  if (n == 0) throw NumericError("empty-batch", "bce_masked: no scored positions");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    double pc = std::clamp(p.v[i], kBceEps, 1.0 - kBceEps);
    total += y.v[i] > 0.5 ? -std::log(pc) : -std::log(1.0 - pc);
  }
  return total / static_cast<double>(n);
}

// Gradient of the clamped mean: zero where the clamp engaged, matching the
// derivative of the value actually computed above.
inline void bce_masked_backward(const Tensor& p, const Tensor& y,
                                const std::vector<std::uint8_t>& mask,
                                Tensor& d_p) {
  const std::size_t n = mask_count(mask);
  if (n == 0) throw NumericError("empty-batch", "bce_masked: no scored positions");
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    if (p.v[i] <= kBceEps || p.v[i] >= 1.0 - kBceEps) continue;
    double pc = p.v[i];
    d_p.v[i] += inv_n * (pc - y.v[i]) / (pc * (1.0 - pc));
  }
}

// Inverted dropout: zeros entries with probability `rate` and scales the
// survivors by 1/(1-rate). Identity in inference mode. The survivor mask is
// written to `mask_out` for the backward pass.
inline Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training,
                      std::vector<std::uint8_t>* mask_out = nullptr) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("parameter", "dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) {
    if (mask_out) mask_out->assign(x.size(), 1);
    return x;
  }
  Tensor y = x;
  std::vector<std::uint8_t> mask(x.size());
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    bool keep = rng.uniform() >= rate;
    mask[i] = keep ? 1 : 0;
    y.v[i] = keep ? x.v[i] * scale : 0.0;
  }
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

inline void dropout_backward(const Tensor& d_y,
                             const std::vector<std::uint8_t>& mask, double rate,
                             bool training, Tensor& d_x) {
  if (!training || rate == 0.0) {
    add_inplace(d_x, d_y);
    return;
  }
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < d_y.v.size(); ++i)
    if (mask[i]) d_x.v[i] += d_y.v[i] * scale;
}

// Column slice [from, to) of a 2D tensor; used for attention head views.
inline Tensor slice_cols(const Tensor& x, std::size_t from, std::size_t to) {
  const std::size_t n = x.rows(), w = to - from;
  Tensor out({n, w});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(&x.v[i * x.cols() + from], &x.v[i * x.cols() + to],
              &out.v[i * w]);
  return out;
}

inline void add_cols(Tensor& dst, const Tensor& src, std::size_t from) {
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j)
      dst.at(i, from + j) += src.at(i, j);
}

inline Tensor transpose(const Tensor& x) {
  Tensor out({x.cols(), x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(j, i) = x.at(i, j);
  return out;
}

}  // namespace ikt::num
