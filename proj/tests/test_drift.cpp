#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ikt/drift.hpp"
#include "ikt/ingest.hpp"
#include "ikt/rng.hpp"

using namespace ikt;
using namespace ikt::drift;
using num::Tensor;

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix; the dense oracle
// for the power-iteration implementation.
void jacobi_eigen(Tensor m, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors) {
  const std::size_t n = m.rows();
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += m.at(i, j) * m.at(i, j);
    if (off < 1e-22) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(m.at(p, q)) < 1e-300) continue;
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
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return m.at(a, a) > m.at(b, b); });
  values.clear();
  vectors.clear();
  for (std::size_t r = 0; r < n; ++r) {
    values.push_back(m.at(idx[r], idx[r]));
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v.at(k, idx[r]);
    vectors.push_back(std::move(col));
  }
}

double reconstruction_error(const Tensor& centered, const PcaResult& pca) {
  // V = X^T * scores * diag(1/lambda); Xhat = scores * V^T
  const std::size_t n = centered.rows(), p = centered.cols();
  const std::size_t d = pca.effective;
  Tensor v({p, d});
  for (std::size_t k = 0; k < p; ++k)
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += centered.at(i, k) * pca.scores.at(i, c);
      v.at(k, c) = acc / pca.eigenvalues[c];
    }
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c)
        acc += pca.scores.at(i, c) * v.at(k, c);
      const double diff = centered.at(i, k) - acc;
      err += diff * diff;
    }
  return std::sqrt(err);
}

Tensor random_matrix(std::size_t n, std::size_t p, Rng& rng, double scale = 1.0) {
  Tensor t({n, p});
  for (double& e : t.v) e = rng.normal() * scale;
  return t;
}

// Three spherical Gaussian clusters with pairwise center distance 10.
Tensor cluster_fixture(std::vector<std::string>& labels, std::size_t per_cluster,
                       std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({3 * per_cluster, dim});
  labels.clear();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < per_cluster; ++i) {
      const std::size_t row = c * per_cluster + i;
      for (std::size_t k = 0; k < dim; ++k)
        x.at(row, k) = rng.normal() + (k == c ? 10.0 : 0.0);
      labels.push_back("c" + std::to_string(c));
    }
  return x;
}

}  // namespace

TEST_CASE("build_features marks incidence") {
  ingest::SyntheticSpec spec;
  spec.num_schools = 2;
  spec.users_per_school = 5;
  spec.problems_per_school = 8;
  spec.responses_per_user = 12;
  spec.overlap_fraction = 0.5;
  spec.seed = 4;
  auto datasets = ingest::generate_synthetic(spec);

  seqgen::ProblemRegistry reg(64);
  for (const auto& [_, ds] : datasets) seqgen::extend_registry(reg, ds);
  auto fm = build_features(datasets, reg);

  CHECK(fm.row_labels.size() == 10);
  CHECK(fm.incidence.rows() == 10);
  CHECK(fm.incidence.cols() == reg.size());

  SECTION("entries are binary and rows nonzero") {
    for (double e : fm.incidence.v) CHECK((e == 0.0 || e == 1.0));
    for (std::size_t i = 0; i < fm.incidence.rows(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < fm.incidence.cols(); ++j)
        row += fm.incidence.at(i, j);
      CHECK(row >= 1.0);
    }
  }
  SECTION("a row matches the learner's attempted set") {
    std::size_t row = 0;
    for (const auto& [school, ds] : datasets) {
      for (const auto& [user, recs] : ds.users) {
        for (const auto& r : recs)
          CHECK(fm.incidence.at(row, reg.lookup(r.problem_id) - 1) == 1.0);
        ++row;
      }
    }
  }
  SECTION("identical attempt sets give identical rows") {
    ingest::TaskDataset twin;
    twin.school_id = "T";
    twin.users.emplace("a", std::vector<ingest::InteractionRecord>{
                                {"a", "q1", "T", 1, 0}, {"a", "q2", "T", 0, 1}});
    twin.users.emplace("b", std::vector<ingest::InteractionRecord>{
                                {"b", "q2", "T", 1, 0}, {"b", "q1", "T", 1, 1}});
    seqgen::ProblemRegistry reg2(16);
    seqgen::extend_registry(reg2, twin);
    auto fm2 = build_features({{"T", twin}}, reg2);
    for (std::size_t j = 0; j < fm2.incidence.cols(); ++j)
      CHECK(fm2.incidence.at(0, j) == fm2.incidence.at(1, j));
  }
}

TEST_CASE("pca_reduce") {
  Rng rng(41);

  SECTION("full-dimensional request reconstructs losslessly") {
    Tensor x = random_matrix(12, 4, rng);
    auto pca = pca_reduce(x, 4);
    CHECK(pca.effective == 4);
    CHECK(reconstruction_error(center_columns(x), pca) < 1e-8);
  }
  SECTION("explained ratios are non-increasing and bounded") {
    Tensor x = random_matrix(40, 10, rng);
    auto pca = pca_reduce(x, 6);
    double total = 0.0;
    for (std::size_t i = 0; i < pca.explained_ratio.size(); ++i) {
      if (i) CHECK(pca.explained_ratio[i] <= pca.explained_ratio[i - 1] + 1e-12);
      total += pca.explained_ratio[i];
    }
    CHECK(total <= 1.0 + 1e-9);
  }
  SECTION("matches the dense eigendecomposition oracle at top-5") {
    Tensor x = random_matrix(100, 20, rng);
    auto pca = pca_reduce(x, 5);
    REQUIRE(pca.effective == 5);

    Tensor cx = center_columns(x);
    Tensor cov({20, 20});
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 20; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 100; ++k) acc += cx.at(k, i) * cx.at(k, j);
        cov.at(i, j) = acc;
      }
    std::vector<double> values;
    std::vector<std::vector<double>> vectors;
    jacobi_eigen(cov, values, vectors);

    for (std::size_t c = 0; c < 5; ++c)
      CHECK(pca.eigenvalues[c] ==
            Catch::Approx(values[c]).epsilon(1e-8).margin(1e-10));

    // oracle reconstruction with Jacobi scores
    PcaResult oracle;
    oracle.effective = 5;
    oracle.eigenvalues.assign(values.begin(), values.begin() + 5);
    oracle.scores = Tensor({100, 5});
    for (std::size_t c = 0; c < 5; ++c)
      for (std::size_t i = 0; i < 100; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 20; ++k)
          acc += cx.at(i, k) * vectors[c][k];
        oracle.scores.at(i, c) = acc;
      }
    CHECK(reconstruction_error(cx, pca) ==
          Catch::Approx(reconstruction_error(cx, oracle)).margin(1e-6));
  }
  SECTION("rank-deficient input narrows the output") {
    Tensor x({10, 4});
    for (std::size_t i = 0; i < 10; ++i) {
      x.at(i, 0) = static_cast<double>(i);
      x.at(i, 1) = 2.0 * static_cast<double>(i);  // collinear
      x.at(i, 2) = rng.normal();
      x.at(i, 3) = 0.0;  // constant
    }
    auto pca = pca_reduce(x, 4);
    CHECK(pca.effective < 4);
  }
  SECTION("wide matrices use the gram route consistently") {
    Tensor x = random_matrix(8, 30, rng);
    auto pca = pca_reduce(x, 3);
    CHECK(pca.scores.rows() == 8);
    CHECK(pca.scores.cols() == pca.effective);
    CHECK(reconstruction_error(center_columns(x), pca) >= 0.0);
  }
}

TEST_CASE("bandwidth calibration hits the target entropy") {
  Rng rng(43);
  Tensor x = random_matrix(30, 5, rng);
  auto d = pairwise_sq_dists(x);
  const double perplexity = 8.0;
  auto bw = calibrate_bandwidths(d, perplexity);

  for (std::size_t i = 0; i < 30; ++i) {
    REQUIRE(bw.converged[i] == 1);
    const double beta = 1.0 / (2.0 * bw.sigma[i] * bw.sigma[i]);
    const double entropy = drift::detail::conditional_row(d, i, beta, nullptr);
    CHECK(std::fabs(entropy - std::log2(perplexity)) <= 1e-5);
  }

  SECTION("doubling distances doubles sigma") {
    Tensor d4 = d;
    num::scale_inplace(d4, 4.0);
    auto bw4 = calibrate_bandwidths(d4, perplexity);
    for (std::size_t i = 0; i < 30; ++i)
      CHECK(bw4.sigma[i] == Catch::Approx(2.0 * bw.sigma[i]).epsilon(1e-3));
  }
  SECTION("equidistant points share one bandwidth") {
    // simplex vertices: all pairwise distances equal, so symmetry forces a
    // single sigma (n = 7 keeps the perplexity bound satisfiable)
    Tensor simplex({7, 7});
    for (std::size_t i = 0; i < 7; ++i) simplex.at(i, i) = 1.0;
    auto ds = pairwise_sq_dists(simplex);
    auto bws = calibrate_bandwidths(ds, 1.9);
    for (std::size_t i = 1; i < 7; ++i)
      CHECK(bws.sigma[i] == Catch::Approx(bws.sigma[0]).epsilon(1e-9));
  }
  SECTION("perplexity bound enforced") {
    CHECK_THROWS_AS(calibrate_bandwidths(d, 10.0), ConfigError);
  }
}

TEST_CASE("joint affinities are a symmetric distribution") {
  Rng rng(47);
  Tensor x = random_matrix(25, 6, rng);
  auto p = joint_affinities(pairwise_sq_dists(x), 6.0);
  double total = 0.0;
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t j = 0; j < 25; ++j) {
      CHECK(p.at(i, j) >= 0.0);
      CHECK(p.at(i, j) == p.at(j, i));
      total += p.at(i, j);
    }
  CHECK(std::fabs(total - 1.0) < 1e-12);
}

TEST_CASE("tsne embeds cluster structure") {
  std::vector<std::string> labels;
  Tensor x = cluster_fixture(labels, 50, 12, 51);

  TsneConfig cfg;
  cfg.perplexity = 20.0;
  cfg.iterations = 500;
  cfg.seed = 3;
  std::vector<std::pair<std::string, std::string>> row_labels;
  for (std::size_t i = 0; i < labels.size(); ++i)
    row_labels.emplace_back(labels[i], "u" + std::to_string(i));
  auto emb = tsne_embed(x, cfg, row_labels);

  SECTION("kl trace is finite, nonnegative, and improves after exaggeration") {
    REQUIRE(emb.kl_trace.size() == cfg.iterations);
    for (double kl : emb.kl_trace) {
      CHECK(std::isfinite(kl));
      CHECK(kl >= 0.0);
    }
    CHECK(emb.kl_trace.back() < emb.kl_trace[249]);
  }
  SECTION("ten-nearest-neighbor purity is at least 0.9") {
    CHECK(knn_label_purity(emb.points, labels, 10) >= 0.9);
  }
  SECTION("mixing rate separates near from far clusters") {
    // clusters are all equidistant here; just sanity-check the range
    double mix = school_mixing_rate(emb, "c0", "c1", 10);
    CHECK(mix >= 0.0);
    CHECK(mix <= 1.0);
  }
}

TEST_CASE("tsne is permutation-equivariant bit-exactly") {
  Rng rng(53);
  Tensor x = random_matrix(20, 6, rng);
  TsneConfig cfg;
  cfg.perplexity = 5.0;
  cfg.iterations = 260;
  cfg.seed = 9;

  auto base = tsne_embed(x, cfg);

  auto perm = Rng(77).permutation(20);
  Tensor shuffled({20, 6});
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t k = 0; k < 6; ++k) shuffled.at(i, k) = x.at(perm[i], k);
  auto moved = tsne_embed(shuffled, cfg);

  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(moved.points.at(i, 0) == base.points.at(perm[i], 0));
    CHECK(moved.points.at(i, 1) == base.points.at(perm[i], 1));
  }
  CHECK(moved.kl_trace == base.kl_trace);
}

TEST_CASE("tsne keeps duplicated points together") {
  Rng rng(59);
  Tensor x = random_matrix(24, 5, rng);
  // rows 3 and 17 are duplicates
  for (std::size_t k = 0; k < 5; ++k) x.at(17, k) = x.at(3, k);

  TsneConfig cfg;
  cfg.perplexity = 6.0;
  cfg.iterations = 300;
  cfg.seed = 2;
  auto emb = tsne_embed(x, cfg);

  std::vector<double> pairdist;
  for (std::size_t i = 0; i < 24; ++i)
    for (std::size_t j = i + 1; j < 24; ++j) {
      const double dx = emb.points.at(i, 0) - emb.points.at(j, 0);
      const double dy = emb.points.at(i, 1) - emb.points.at(j, 1);
      pairdist.push_back(std::sqrt(dx * dx + dy * dy));
    }
  std::sort(pairdist.begin(), pairdist.end());
  const double dup = std::hypot(emb.points.at(3, 0) - emb.points.at(17, 0),
                                emb.points.at(3, 1) - emb.points.at(17, 1));
  CHECK(dup <= pairdist[pairdist.size() / 20]);  // below the 5th percentile
}

TEST_CASE("tsne config validation") {
  Rng rng(61);
  Tensor x = random_matrix(10, 3, rng);
  TsneConfig cfg;
  cfg.perplexity = 4.0;  // needs < (10-1)/3 = 3
  CHECK_THROWS_AS(tsne_embed(x, cfg), ConfigError);
  cfg.perplexity = 2.0;
  cfg.iterations = 100;
  CHECK_THROWS_AS(tsne_embed(x, cfg), ConfigError);
}
