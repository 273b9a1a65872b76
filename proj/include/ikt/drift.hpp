#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ikt/error.hpp"
#include "ikt/ingest.hpp"
#include "ikt/rng.hpp"
#include "ikt/seqgen.hpp"
#include "ikt/tensor.hpp"

namespace ikt::drift {

using num::Tensor;

// Binary problem-incidence rows, one per (school, learner), columns indexed
// by the registry's dense problem ids.
struct FeatureMatrix {
  std::vector<std::pair<std::string, std::string>> row_labels;
  Tensor incidence;
};

inline FeatureMatrix build_features(
    const std::map<std::string, ingest::TaskDataset>& datasets,
    const seqgen::ProblemRegistry& registry) {
  FeatureMatrix fm;
  for (const auto& [school, ds] : datasets)
    for (const auto& [user, _] : ds.users) fm.row_labels.emplace_back(school, user);

  fm.incidence = Tensor({fm.row_labels.size(), registry.size()});
  std::size_t row = 0;
  for (const auto& [school, ds] : datasets) {
    for (const auto& [user, recs] : ds.users) {
      for (const auto& r : recs) {
        const std::size_t idx = registry.lookup(r.problem_id);
        if (idx == 0 || idx > registry.size())
          throw NumericError("index", "problem '" + r.problem_id +
                                          "' is not covered by the registry");
        fm.incidence.at(row, idx - 1) = 1.0;
      }
      ++row;
    }
  }
  return fm;
}

inline Tensor center_columns(const Tensor& x) {
  const std::size_t n = x.rows(), p = x.cols();
  Tensor out = x;
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x.at(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out.at(i, j) -= mean;
  }
  return out;
}

struct PcaResult {
  Tensor scores;  // n x effective
  std::vector<double> eigenvalues;
  std::vector<double> explained_ratio;
  std::size_t requested = 0;
  std::size_t effective = 0;
};

namespace detail {

// Cyclic Jacobi diagonalization of a small symmetric matrix; used to rotate
// the Rayleigh-Ritz projection below.
inline void jacobi_small(Tensor m, std::vector<double>& values, Tensor& vecs) {
  const std::size_t n = m.rows();
  vecs = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) vecs.at(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += m.at(i, j) * m.at(i, j);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (m.at(p, q) == 0.0) continue;
        const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * m.at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m.at(k, p), mkq = m.at(k, q);
          m.at(k, p) = c * mkp - s * mkq;
          m.at(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m.at(p, k), mqk = m.at(q, k);
          m.at(p, k) = c * mpk - s * mqk;
          m.at(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vecs.at(k, p), vkq = vecs.at(k, q);
          vecs.at(k, p) = c * vkp - s * vkq;
          vecs.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = m.at(i, i);
}

// Modified Gram-Schmidt; numerically dependent columns are dropped.
inline void orthonormalize(std::vector<std::vector<double>>& basis) {
  std::vector<std::vector<double>> kept;
  for (auto& col : basis) {
    double n0 = 0.0;
    for (double e : col) n0 += e * e;
    n0 = std::sqrt(n0);
    for (const auto& prev : kept) {
      double dot = 0.0;
      for (std::size_t i = 0; i < col.size(); ++i) dot += prev[i] * col[i];
      for (std::size_t i = 0; i < col.size(); ++i) col[i] -= dot * prev[i];
    }
    double n1 = 0.0;
    for (double e : col) n1 += e * e;
    n1 = std::sqrt(n1);
    if (n1 <= 1e-13 * std::max(n0, 1e-300)) continue;
    for (double& e : col) e /= n1;
    kept.push_back(std::move(col));
  }
  basis = std::move(kept);
}

// Leading eigenpairs of a symmetric PSD matrix via block orthogonal
// iteration (seeded start, fixed iteration cap) finished with a
// Rayleigh-Ritz rotation, so clustered eigenvalues are resolved exactly
// within the converged subspace.
inline void top_eigenpairs(const Tensor& m, std::size_t want,
                           std::uint64_t seed,
                           std::vector<double>& eigenvalues,
                           std::vector<std::vector<double>>& eigenvectors) {
  const std::size_t n = m.rows();
  want = std::min(want, n);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += m.at(i, i);
  const double floor = std::max(trace * 1e-12, 1e-12);

  std::vector<std::vector<double>> basis(want, std::vector<double>(n));
  Rng root(seed);
  for (std::size_t c = 0; c < want; ++c) {
    Rng rng = root.fork(c);
    for (double& e : basis[c]) e = rng.uniform(-1.0, 1.0);
  }
  orthonormalize(basis);

  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += m.at(i, j) * v[j];
      w[i] = acc;
    }
    return w;
  };

  for (int iter = 0; iter < 300 && !basis.empty(); ++iter) {
    for (auto& col : basis) col = apply(col);
    orthonormalize(basis);
  }
  if (basis.empty()) return;

  const std::size_t k = basis.size();
  std::vector<std::vector<double>> mb(k);
  for (std::size_t c = 0; c < k; ++c) mb[c] = apply(basis[c]);
  Tensor projected({k, k});
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += basis[a][i] * mb[b][i];
      projected.at(a, b) = acc;
    }
  // symmetrize against round-off before rotating
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      const double avg = 0.5 * (projected.at(a, b) + projected.at(b, a));
      projected.at(a, b) = projected.at(b, a) = avg;
    }

  std::vector<double> ritz;
  Tensor rot;
  jacobi_small(projected, ritz, rot);
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ritz[a] > ritz[b]; });

  for (std::size_t r = 0; r < k; ++r) {
    const double lambda = ritz[order[r]];
    if (lambda <= floor) break;  // effective rank exhausted
    std::vector<double> v(n, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      const double weight = rot.at(c, order[r]);
      for (std::size_t i = 0; i < n; ++i) v[i] += weight * basis[c][i];
    }
    // canonical sign: largest-magnitude coordinate is positive
    std::size_t arg = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
    if (v[arg] < 0.0)
      for (double& e : v) e = -e;
    eigenvalues.push_back(lambda);
    eigenvectors.push_back(std::move(v));
  }
}

}  // namespace detail

// Projection onto the top-d principal directions. Works through the smaller
// of the two scatter matrices, so wide incidence matrices (problems >>
// learners) stay cheap. If d exceeds the effective rank the output narrows.
inline PcaResult pca_reduce(const Tensor& x, std::size_t d,
                            std::uint64_t seed = 0x9c0ffee) {
  const std::size_t n = x.rows(), p = x.cols();
  if (d == 0 || d > std::min(n, p))
    throw ConfigError("parameter",
                      "pca dimension must be in [1, min(rows, cols)]");
  Tensor cx = center_columns(x);

  const bool gram = p > n;  // n x n scatter instead of p x p
  const std::size_t m = gram ? n : p;
  Tensor scatter({m, m});
  if (gram) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < p; ++k) acc += cx.at(i, k) * cx.at(j, k);
        scatter.at(i, j) = scatter.at(j, i) = acc;
      }
  } else {
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i; j < p; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += cx.at(k, i) * cx.at(k, j);
        scatter.at(i, j) = scatter.at(j, i) = acc;
      }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < m; ++i) trace += scatter.at(i, i);

  std::vector<double> eigenvalues;
  std::vector<std::vector<double>> eigenvectors;
  detail::top_eigenpairs(scatter, d, seed, eigenvalues, eigenvectors);

  PcaResult out;
  out.requested = d;
  out.effective = eigenvalues.size();
  out.eigenvalues = eigenvalues;
  for (double l : eigenvalues)
    out.explained_ratio.push_back(trace > 0.0 ? l / trace : 0.0);

  out.scores = Tensor({n, out.effective});
  for (std::size_t c = 0; c < out.effective; ++c) {
    if (gram) {
      const double sigma = std::sqrt(eigenvalues[c]);
      for (std::size_t i = 0; i < n; ++i)
        out.scores.at(i, c) = eigenvectors[c][i] * sigma;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < p; ++k)
          acc += cx.at(i, k) * eigenvectors[c][k];
        out.scores.at(i, c) = acc;
      }
    }
  }
  return out;
}

inline Tensor pairwise_sq_dists(const Tensor& x) {
  const std::size_t n = x.rows(), p = x.cols();
  Tensor d({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < p; ++k) {
        const double diff = x.at(i, k) - x.at(j, k);
        acc += diff * diff;
      }
      d.at(i, j) = d.at(j, i) = acc;
    }
  return d;
}

struct BandwidthResult {
  std::vector<double> sigma;
  std::vector<std::uint8_t> converged;
};

namespace detail {

// Conditional neighbor distribution of point i at precision beta, and its
// Shannon entropy in bits. Distances are shifted by the row minimum before
// exponentiation; the distribution is shift-invariant.
inline double conditional_row(const Tensor& sq_dist, std::size_t i, double beta,
                              std::vector<double>* out_row) {
  const std::size_t n = sq_dist.rows();
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, sq_dist.at(i, j));
  double z = 0.0;
  std::vector<double> w(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    w[j] = std::exp(-beta * (sq_dist.at(i, j) - dmin));
    z += w[j];
  }
  double entropy = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i || w[j] <= 0.0) continue;
    const double pj = w[j] / z;
    entropy -= pj * std::log2(pj);
    if (out_row) (*out_row)[j] = pj;
  }
  return entropy;
}

}  // namespace detail

// Per-point Gaussian bandwidths such that each conditional distribution's
// entropy hits log2(perplexity), by binary search on the precision.
inline BandwidthResult calibrate_bandwidths(const Tensor& sq_dist,
                                            double perplexity) {
  const std::size_t n = sq_dist.rows();
  if (n < 4) throw ConfigError("parameter", "need at least 4 points");
  if (perplexity < 1.0)
    throw ConfigError("parameter", "perplexity must be at least 1");
  if (perplexity >= (static_cast<double>(n) - 1.0) / 3.0)
    throw ConfigError("parameter",
                      "perplexity too large for " + std::to_string(n) +
                          " points (needs perplexity < (n-1)/3)");

  const double target = std::log2(perplexity);
  BandwidthResult out;
  out.sigma.resize(n);
  out.converged.assign(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 64; ++iter) {
      const double entropy = detail::conditional_row(sq_dist, i, beta, nullptr);
      const double diff = entropy - target;
      if (std::fabs(diff) <= 1e-5) {
        out.converged[i] = 1;
        break;
      }
      if (diff > 0.0) {  // too spread out: sharpen
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta * 0.5 : 0.5 * (beta + lo);
      }
    }
    out.sigma[i] = std::sqrt(1.0 / (2.0 * beta));
  }
  return out;
}

// Symmetrized joint affinities: p_ij = (p_{j|i} + p_{i|j}) / 2n. Nonnegative,
// symmetric, sums to one.
inline Tensor joint_affinities(const Tensor& sq_dist, double perplexity) {
  const std::size_t n = sq_dist.rows();
  auto bw = calibrate_bandwidths(sq_dist, perplexity);
  Tensor cond({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n, 0.0);
    const double beta = 1.0 / (2.0 * bw.sigma[i] * bw.sigma[i]);
    detail::conditional_row(sq_dist, i, beta, &row);
    for (std::size_t j = 0; j < n; ++j) cond.at(i, j) = row[j];
  }
  Tensor p({n, n});
  const double inv = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p.at(i, j) = (cond.at(i, j) + cond.at(j, i)) * inv;
  return p;
}

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t pca_dim = 50;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double momentum_start = 0.5;
  double momentum_late = 0.8;
  std::size_t momentum_switch = 250;
  std::uint64_t seed = 1;

  void validate(std::size_t n) const {
    if (n < 4) throw ConfigError("parameter", "need at least 4 points");
    if (perplexity < 1.0 ||
        perplexity >= (static_cast<double>(n) - 1.0) / 3.0)
      throw ConfigError("parameter",
                        "perplexity must satisfy 1 <= perplexity < (n-1)/3");
    if (iterations < 250)
      throw ConfigError("parameter", "need at least 250 iterations");
    if (learning_rate <= 0.0)
      throw ConfigError("parameter", "learning rate must be positive");
    if (early_exaggeration < 1.0)
      throw ConfigError("parameter", "early exaggeration must be >= 1");
  }
};

struct Embedding2D {
  Tensor points;  // n x 2
  std::vector<double> kl_trace;
  std::vector<std::pair<std::string, std::string>> labels;
};

namespace detail {

// Canonical processing order: rows sorted by content hash (ties broken
// lexicographically). All reductions run in this order, so permuting the
// input rows permutes the output bit-exactly.
inline std::vector<std::size_t> canonical_order(
    const Tensor& x, std::vector<std::uint64_t>& hashes) {
  const std::size_t n = x.rows(), p = x.cols();
  hashes.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    hashes[i] = fnv1a64_bytes(&x.v[i * p], p * sizeof(double));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
    for (std::size_t k = 0; k < p; ++k) {
      if (x.at(a, k) != x.at(b, k)) return x.at(a, k) < x.at(b, k);
    }
    return false;
  });
  return order;
}

}  // namespace detail

// Exact O(n^2) t-SNE: gradient descent on KL(P||Q) with a Student-t kernel,
// early exaggeration and the classic momentum schedule. kl_trace records the
// unexaggerated divergence after every iteration. Initial coordinates are
// seeded Gaussians keyed by each row's content hash.
inline Embedding2D tsne_embed(
    const Tensor& x, const TsneConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& labels = {}) {
  const std::size_t n = x.rows();
  cfg.validate(n);
  if (!labels.empty() && labels.size() != n)
    throw ConfigError("parameter", "label count must match row count");

  std::vector<std::uint64_t> hashes;
  const auto order = detail::canonical_order(x, hashes);
  Tensor cx({n, x.cols()});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t k = 0; k < x.cols(); ++k)
      cx.at(a, k) = x.at(order[a], k);

  const Tensor dists = pairwise_sq_dists(cx);
  const Tensor p = joint_affinities(dists, cfg.perplexity);

  Tensor y({n, 2});
  for (std::size_t a = 0; a < n; ++a) {
    Rng rng(cfg.seed, hashes[order[a]]);
    y.at(a, 0) = rng.normal() * 1e-4;
    y.at(a, 1) = rng.normal() * 1e-4;
  }
  Tensor vel({n, 2});
  Tensor w({n, n});

  std::vector<double> kl_trace;
  kl_trace.reserve(cfg.iterations);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double exag = it < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    const double momentum =
        it < cfg.momentum_switch ? cfg.momentum_start : cfg.momentum_late;

    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) {
          w.at(i, j) = 0.0;
          continue;
        }
        const double dx = y.at(i, 0) - y.at(j, 0);
        const double dy = y.at(i, 1) - y.at(j, 1);
        const double k = 1.0 / (1.0 + dx * dx + dy * dy);
        w.at(i, j) = k;
        z += k;
      }

    for (std::size_t i = 0; i < n; ++i) {
      double g0 = 0.0, g1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = w.at(i, j) / z;
        const double mult = 4.0 * (exag * p.at(i, j) - q) * w.at(i, j);
        g0 += mult * (y.at(i, 0) - y.at(j, 0));
        g1 += mult * (y.at(i, 1) - y.at(j, 1));
      }
      vel.at(i, 0) = momentum * vel.at(i, 0) - cfg.learning_rate * g0;
      vel.at(i, 1) = momentum * vel.at(i, 1) - cfg.learning_rate * g1;
    }
    double mean0 = 0.0, mean1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y.at(i, 0) += vel.at(i, 0);
      y.at(i, 1) += vel.at(i, 1);
      mean0 += y.at(i, 0);
      mean1 += y.at(i, 1);
    }
    mean0 /= static_cast<double>(n);
    mean1 /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y.at(i, 0) -= mean0;
      y.at(i, 1) -= mean1;
      if (!std::isfinite(y.at(i, 0)) || !std::isfinite(y.at(i, 1)))
        throw NumericError("overflow", "t-SNE diverged at iteration " +
                                           std::to_string(it));
    }

    // unexaggerated KL against the fresh Q
    double zkl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double dx = y.at(i, 0) - y.at(j, 0);
        const double dy = y.at(i, 1) - y.at(j, 1);
        zkl += 1.0 / (1.0 + dx * dx + dy * dy);
      }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || p.at(i, j) <= 0.0) continue;
        const double dx = y.at(i, 0) - y.at(j, 0);
        const double dy = y.at(i, 1) - y.at(j, 1);
        const double q = (1.0 / (1.0 + dx * dx + dy * dy)) / zkl;
        kl += p.at(i, j) * std::log(p.at(i, j) / q);
      }
    kl_trace.push_back(kl);
  }

  Embedding2D out;
  out.points = Tensor({n, 2});
  for (std::size_t a = 0; a < n; ++a) {
    out.points.at(order[a], 0) = y.at(a, 0);
    out.points.at(order[a], 1) = y.at(a, 1);
  }
  out.kl_trace = std::move(kl_trace);
  out.labels = labels;
  return out;
}

namespace detail {

inline std::vector<std::size_t> nearest_neighbors(const Tensor& points,
                                                  std::size_t i,
                                                  std::size_t k,
                                                  const std::vector<std::size_t>& pool) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(pool.size());
  for (std::size_t j : pool) {
    if (j == i) continue;
    const double dx = points.at(i, 0) - points.at(j, 0);
    const double dy = points.at(i, 1) - points.at(j, 1);
    dist.emplace_back(dx * dx + dy * dy, j);
  }
  std::sort(dist.begin(), dist.end());
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < std::min(k, dist.size()); ++t)
    out.push_back(dist[t].second);
  return out;
}

}  // namespace detail

// Mean fraction of each point's k nearest neighbors sharing its label.
inline double knn_label_purity(const Tensor& points,
                               const std::vector<std::string>& labels,
                               std::size_t k) {
  const std::size_t n = points.rows();
  if (labels.size() != n || n < 2)
    throw ConfigError("parameter", "need matching labels for >= 2 points");
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto nn = detail::nearest_neighbors(points, i, k, all);
    double same = 0.0;
    for (std::size_t j : nn) same += labels[j] == labels[i] ? 1.0 : 0.0;
    total += same / static_cast<double>(nn.size());
  }
  return total / static_cast<double>(n);
}

// Mean fraction of cross-school points among the k nearest neighbors,
// restricted to the two schools. Higher means the clouds interleave more.
inline double school_mixing_rate(const Embedding2D& emb, const std::string& a,
                                 const std::string& b, std::size_t k) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < emb.labels.size(); ++i)
    if (emb.labels[i].first == a || emb.labels[i].first == b) pool.push_back(i);
  if (pool.size() < 2)
    throw ConfigError("parameter", "not enough points in schools '" + a +
                                       "' and '" + b + "'");
  double total = 0.0;
  for (std::size_t i : pool) {
    auto nn = detail::nearest_neighbors(emb.points, i, k, pool);
    double other = 0.0;
    for (std::size_t j : nn)
      other += emb.labels[j].first != emb.labels[i].first ? 1.0 : 0.0;
    total += other / static_cast<double>(nn.size());
  }
  return total / static_cast<double>(pool.size());
}

}  // namespace ikt::drift
