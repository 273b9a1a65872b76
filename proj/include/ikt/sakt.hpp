#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ikt/error.hpp"
#include "ikt/ops.hpp"
#include "ikt/rng.hpp"
#include "ikt/seqgen.hpp"
#include "ikt/tensor.hpp"

namespace ikt::sakt {

using json = nlohmann::json;
using num::Parameter;
using num::Tensor;
using seqgen::ProblemRegistry;
using seqgen::TrainingInstance;

struct SAKTConfig {
  std::size_t d_model = 128;
  std::size_t num_heads = 8;
  std::size_t num_blocks = 2;
  std::size_t max_seq_len = 30;
  double dropout_rate = 0.2;
  std::size_t v_cap = 65536;   // fixed interaction-token stride
  std::size_t ffn_hidden = 0;  // 0 selects d_model

  std::size_t ffn() const { return ffn_hidden ? ffn_hidden : d_model; }
  std::size_t window() const { return max_seq_len - 1; }
  std::size_t head_dim() const { return d_model / num_heads; }

  // Embedding table extents. The interaction table carries two rows past the
  // packed (exercise, response) range so histories containing never-seen
  // exercises remain encodable when checkpoints are evaluated across tasks.
  std::size_t interaction_rows() const { return 2 * v_cap + 3; }
  std::size_t exercise_rows() const { return v_cap + 2; }

  void validate() const {
    if (d_model == 0 || num_heads == 0 || d_model % num_heads != 0)
      throw ConfigError("parameter", "d_model must be divisible by num_heads");
    if (max_seq_len < 2)
      throw ConfigError("parameter", "max_seq_len must be at least 2");
    if (num_blocks < 1)
      throw ConfigError("parameter", "num_blocks must be at least 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("parameter", "dropout_rate must be in [0, 1)");
    if (v_cap == 0) throw ConfigError("parameter", "v_cap must be positive");
  }

  json to_json() const {
    return json{{"d_model", d_model},       {"dropout_rate", dropout_rate},
                {"ffn_hidden", ffn_hidden}, {"max_seq_len", max_seq_len},
                {"num_blocks", num_blocks}, {"num_heads", num_heads},
                {"v_cap", v_cap}};
  }

  static SAKTConfig from_json(const json& j) {
    SAKTConfig c;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.num_blocks = j.at("num_blocks").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.v_cap = j.at("v_cap").get<std::size_t>();
    c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
    c.validate();
    return c;
  }

  bool operator==(const SAKTConfig&) const = default;
};

struct BlockParams {
  Parameter wq, wk, wv, wo;
  Parameter ln1_gain, ln1_bias;
  Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Parameter ln2_gain, ln2_bias;
};

struct SAKTModel {
  SAKTConfig config;
  Parameter interaction_table;
  Parameter exercise_table;
  Parameter position_table;
  std::vector<BlockParams> blocks;
  Parameter head_w, head_b;

  // Canonical parameter order; init, optimizer steps and checkpoints all
  // iterate this list so runs replay bit-identically.
  std::vector<std::pair<std::string, Parameter*>> parameters() {
    std::vector<std::pair<std::string, Parameter*>> out;
    out.reserve(3 + blocks.size() * 12 + 2);
    out.emplace_back("interaction_table", &interaction_table);
    out.emplace_back("exercise_table", &exercise_table);
    out.emplace_back("position_table", &position_table);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const std::string p = "block" + std::to_string(b) + ".";
      out.emplace_back(p + "wq", &blocks[b].wq);
      out.emplace_back(p + "wk", &blocks[b].wk);
      out.emplace_back(p + "wv", &blocks[b].wv);
      out.emplace_back(p + "wo", &blocks[b].wo);
      out.emplace_back(p + "ln1_gain", &blocks[b].ln1_gain);
      out.emplace_back(p + "ln1_bias", &blocks[b].ln1_bias);
      out.emplace_back(p + "ffn_w1", &blocks[b].ffn_w1);
      out.emplace_back(p + "ffn_b1", &blocks[b].ffn_b1);
      out.emplace_back(p + "ffn_w2", &blocks[b].ffn_w2);
      out.emplace_back(p + "ffn_b2", &blocks[b].ffn_b2);
      out.emplace_back(p + "ln2_gain", &blocks[b].ln2_gain);
      out.emplace_back(p + "ln2_bias", &blocks[b].ln2_bias);
    }
    out.emplace_back("head_w", &head_w);
    out.emplace_back("head_b", &head_b);
    return out;
  }

  std::size_t parameter_count() const {
    const std::size_t d = config.d_model, f = config.ffn(), w = config.window();
    return config.interaction_rows() * d + config.exercise_rows() * d + w * d +
           config.num_blocks * (4 * d * d + 4 * d + 2 * d * f + f + d) + d + 1;
  }

  void zero_grads() {
    for (auto& [_, p] : parameters()) p->zero_grad();
  }

  void zero_velocity() {
    for (auto& [_, p] : parameters()) p->zero_velocity();
  }
};

inline SAKTModel init_model(const SAKTConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.d_model, f = config.ffn(), w = config.window();

  SAKTModel m;
  m.config = config;
  m.interaction_table = Parameter({config.interaction_rows(), d});
  m.exercise_table = Parameter({config.exercise_rows(), d});
  m.position_table = Parameter({w, d});
  m.blocks.resize(config.num_blocks);
  for (auto& b : m.blocks) {
    b.wq = Parameter({d, d});
    b.wk = Parameter({d, d});
    b.wv = Parameter({d, d});
    b.wo = Parameter({d, d});
    b.ln1_gain = Parameter({d});
    b.ln1_bias = Parameter({d});
    b.ffn_w1 = Parameter({d, f});
    b.ffn_b1 = Parameter({f});
    b.ffn_w2 = Parameter({f, d});
    b.ffn_b2 = Parameter({d});
    b.ln2_gain = Parameter({d});
    b.ln2_bias = Parameter({d});
  }
  m.head_w = Parameter({d, 1});
  m.head_b = Parameter({1});

  Rng root(seed);
  std::size_t total = 0;
  for (auto& [name, p] : m.parameters()) {
    total += p->value.size();
    if (name.find("ln") != std::string::npos) {
      if (name.ends_with("gain")) p->value.fill(1.0);
      continue;  // layer-norm biases stay zero
    }
    if (name.ends_with("_b1") || name.ends_with("_b2") || name == "head_b")
      continue;  // biases stay zero
    // scaled uniform: bound 1/sqrt(fan_in); embeddings use the model width
    double fan_in = static_cast<double>(
        p->value.shape.size() == 2 && !name.ends_with("table")
            ? p->value.shape[0]
            : d);
    const double bound = 1.0 / std::sqrt(fan_in);
    Rng rng = root.fork(name);
    for (double& e : p->value.v) e = rng.uniform(-bound, bound);
  }
  // padding rows are identically zero and stay that way
  for (std::size_t j = 0; j < d; ++j) {
    m.interaction_table.value.at(0, j) = 0.0;
    m.exercise_table.value.at(0, j) = 0.0;
  }
  if (total != m.parameter_count())
    throw NumericError("shape", "parameter count mismatch against closed form");
  return m;
}

// Caches of every intermediate the backward pass needs.
struct LnCacheWrap {
  num::LayerNormCache cache;
};

struct BlockCache {
  Tensor q_stream, kv_stream;
  Tensor q_proj, k_proj, v_proj;
  std::vector<Tensor> attn;  // per-head probability matrices, T x T
  Tensor heads;              // concatenated head outputs
  std::vector<std::uint8_t> drop1;
  num::LayerNormCache ln1;
  Tensor x1;
  Tensor ffn_pre, ffn_act;
  std::vector<std::uint8_t> drop2;
  num::LayerNormCache ln2;
  Tensor x2;
};

struct InstanceCache {
  std::vector<std::size_t> history_tokens, query_exercises;
  std::vector<std::uint8_t> attn_mask;  // T x T, query-major
  Tensor q_in, k_in;
  std::vector<BlockCache> blocks;
  Tensor logits;  // 1 x T
  Tensor probs;   // 1 x T
};

// One attention block: multi-head causal attention over the kv stream,
// queried by the q stream, then a position-wise feed-forward sublayer; both
// use post-norm residuals. Rows whose mask admits no key pass through on the
// residual path (their attention contribution is zero).
inline Tensor attention_block(const BlockParams& p, const Tensor& q_stream,
                              const Tensor& kv_stream,
                              const std::vector<std::uint8_t>& mask,
                              const SAKTConfig& cfg, Rng* rng, bool training,
                              BlockCache* cache = nullptr) {
  const std::size_t t_len = q_stream.rows(), d = cfg.d_model;
  const std::size_t heads = cfg.num_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q_proj = num::matmul(q_stream, p.wq.value);
  Tensor k_proj = num::matmul(kv_stream, p.wk.value);
  Tensor v_proj = num::matmul(kv_stream, p.wv.value);

  Tensor heads_out({t_len, d});
  std::vector<Tensor> attn(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = num::slice_cols(q_proj, h * dh, (h + 1) * dh);
    Tensor kh = num::slice_cols(k_proj, h * dh, (h + 1) * dh);
    Tensor vh = num::slice_cols(v_proj, h * dh, (h + 1) * dh);
    Tensor scores = num::matmul(qh, num::transpose(kh));
    num::scale_inplace(scores, scale);
    attn[h] = num::masked_softmax_rows(scores, mask, num::EmptyRowPolicy::zero);
    Tensor av = num::matmul(attn[h], vh);
    num::add_cols(heads_out, av, h * dh);
  }

  Tensor out = num::matmul(heads_out, p.wo.value);
  std::vector<std::uint8_t> drop1;
  Rng null_rng(0);
  Tensor out_d = num::dropout(out, cfg.dropout_rate, rng ? *rng : null_rng,
                              training, &drop1);
  Tensor r1 = num::add(q_stream, out_d);
  num::LayerNormCache ln1;
  Tensor x1 = num::layer_norm(r1, p.ln1_gain.value, p.ln1_bias.value,
                              num::kLayerNormEps, &ln1);

  Tensor pre = num::matmul(x1, p.ffn_w1.value);
  num::add_row_vector(pre, p.ffn_b1.value);
  Tensor act = num::relu(pre);
  Tensor ffn_out = num::matmul(act, p.ffn_w2.value);
  num::add_row_vector(ffn_out, p.ffn_b2.value);
  std::vector<std::uint8_t> drop2;
  Tensor ffn_d = num::dropout(ffn_out, cfg.dropout_rate, rng ? *rng : null_rng,
                              training, &drop2);
  Tensor r2 = num::add(x1, ffn_d);
  num::LayerNormCache ln2;
  Tensor x2 = num::layer_norm(r2, p.ln2_gain.value, p.ln2_bias.value,
                              num::kLayerNormEps, &ln2);

  if (cache) {
    cache->q_stream = q_stream;
    cache->kv_stream = kv_stream;
    cache->q_proj = std::move(q_proj);
    cache->k_proj = std::move(k_proj);
    cache->v_proj = std::move(v_proj);
    cache->attn = std::move(attn);
    cache->heads = std::move(heads_out);
    cache->drop1 = std::move(drop1);
    cache->ln1 = std::move(ln1);
    cache->x1 = x1;
    cache->ffn_pre = std::move(pre);
    cache->ffn_act = std::move(act);
    cache->drop2 = std::move(drop2);
    cache->ln2 = std::move(ln2);
    cache->x2 = x2;
  }
  return x2;
}

// Returns (d_q_stream, d_kv_stream); accumulates parameter gradients.
inline std::pair<Tensor, Tensor> attention_block_backward(
    BlockParams& p, const BlockCache& c, const Tensor& d_x2,
    const SAKTConfig& cfg, bool training) {
  const std::size_t heads = cfg.num_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor d_r2 = num::zeros_like(d_x2);
  num::layer_norm_backward(c.ln2, p.ln2_gain.value, d_x2, d_r2,
                           p.ln2_gain.grad, p.ln2_bias.grad);

  Tensor d_x1 = d_r2;  // residual branch
  Tensor d_ffn = num::zeros_like(d_r2);
  num::dropout_backward(d_r2, c.drop2, cfg.dropout_rate, training, d_ffn);

  for (std::size_t i = 0; i < d_ffn.rows(); ++i)
    for (std::size_t j = 0; j < d_ffn.cols(); ++j)
      p.ffn_b2.grad.v[j] += d_ffn.at(i, j);
  Tensor d_act = num::zeros_like(c.ffn_act);
  num::matmul_backward(c.ffn_act, p.ffn_w2.value, d_ffn, d_act, p.ffn_w2.grad);
  Tensor d_pre = num::zeros_like(c.ffn_pre);
  num::relu_backward(c.ffn_pre, d_act, d_pre);
  for (std::size_t i = 0; i < d_pre.rows(); ++i)
    for (std::size_t j = 0; j < d_pre.cols(); ++j)
      p.ffn_b1.grad.v[j] += d_pre.at(i, j);
  num::matmul_backward(c.x1, p.ffn_w1.value, d_pre, d_x1, p.ffn_w1.grad);

  Tensor d_r1 = num::zeros_like(d_x1);
  num::layer_norm_backward(c.ln1, p.ln1_gain.value, d_x1, d_r1,
                           p.ln1_gain.grad, p.ln1_bias.grad);

  Tensor d_q_stream = d_r1;  // residual branch
  Tensor d_out = num::zeros_like(d_r1);
  num::dropout_backward(d_r1, c.drop1, cfg.dropout_rate, training, d_out);

  Tensor d_heads = num::zeros_like(c.heads);
  num::matmul_backward(c.heads, p.wo.value, d_out, d_heads, p.wo.grad);

  Tensor d_q_proj = num::zeros_like(c.q_proj);
  Tensor d_k_proj = num::zeros_like(c.k_proj);
  Tensor d_v_proj = num::zeros_like(c.v_proj);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor d_av = num::slice_cols(d_heads, h * dh, (h + 1) * dh);
    Tensor kh = num::slice_cols(c.k_proj, h * dh, (h + 1) * dh);
    Tensor vh = num::slice_cols(c.v_proj, h * dh, (h + 1) * dh);
    Tensor qh = num::slice_cols(c.q_proj, h * dh, (h + 1) * dh);

    Tensor d_attn = num::matmul(d_av, num::transpose(vh));
    Tensor d_vh = num::matmul(num::transpose(c.attn[h]), d_av);
    Tensor d_scores = num::zeros_like(d_attn);
    num::masked_softmax_backward(c.attn[h], d_attn, d_scores);
    num::scale_inplace(d_scores, scale);
    Tensor d_qh = num::matmul(d_scores, kh);
    Tensor d_kh = num::matmul(num::transpose(d_scores), qh);

    num::add_cols(d_q_proj, d_qh, h * dh);
    num::add_cols(d_k_proj, d_kh, h * dh);
    num::add_cols(d_v_proj, d_vh, h * dh);
  }

  num::matmul_backward(c.q_stream, p.wq.value, d_q_proj, d_q_stream, p.wq.grad);
  Tensor d_kv = num::zeros_like(c.kv_stream);
  num::matmul_backward(c.kv_stream, p.wk.value, d_k_proj, d_kv, p.wk.grad);
  num::matmul_backward(c.kv_stream, p.wv.value, d_v_proj, d_kv, p.wv.grad);
  return {std::move(d_q_stream), std::move(d_kv)};
}

// Forward over one instance. The query stream starts as exercise embeddings
// plus learned positions; keys/values are interaction embeddings plus the
// same positions and stay fixed while the query stream flows through the
// block stack. Query position t attends history positions <= t only.
inline void forward_instance(SAKTModel& m, const TrainingInstance& inst,
                             bool training, Rng* rng, InstanceCache& cache) {
  const SAKTConfig& cfg = m.config;
  const std::size_t t_len = cfg.window();
  if (inst.history_tokens.size() != t_len ||
      inst.query_exercises.size() != t_len)
    throw NumericError("shape", "instance window does not match config");

  cache.history_tokens = inst.history_tokens;
  cache.query_exercises = inst.query_exercises;

  Tensor ex = num::embedding_lookup(m.exercise_table.value, inst.query_exercises);
  Tensor in = num::embedding_lookup(m.interaction_table.value, inst.history_tokens);
  cache.q_in = num::add(ex, m.position_table.value);
  cache.k_in = num::add(in, m.position_table.value);

  cache.attn_mask.assign(t_len * t_len, 0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j <= t; ++j)
      cache.attn_mask[t * t_len + j] = inst.history_tokens[j] != 0;

  cache.blocks.resize(cfg.num_blocks);
  const Tensor* stream = &cache.q_in;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    attention_block(m.blocks[b], *stream, cache.k_in, cache.attn_mask, cfg,
                    rng, training, &cache.blocks[b]);
    stream = &cache.blocks[b].x2;
  }

  cache.logits = Tensor({1, t_len});
  for (std::size_t t = 0; t < t_len; ++t) {
    double z = m.head_b.value.v[0];
    for (std::size_t j = 0; j < cfg.d_model; ++j)
      z += stream->at(t, j) * m.head_w.value.v[j];
    cache.logits.v[t] = z;
  }
  cache.probs = num::sigmoid(cache.logits);
}

// Batch forward; rows follow instance order. Inference needs no rng.
inline Tensor forward(SAKTModel& m, std::span<const TrainingInstance> batch,
                      bool training = false, Rng* rng = nullptr,
                      std::vector<InstanceCache>* caches = nullptr) {
  const std::size_t t_len = m.config.window();
  Tensor probs({batch.size(), t_len});
  std::vector<InstanceCache> local;
  auto& cs = caches ? *caches : local;
  cs.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_instance(m, batch[i], training, rng, cs[i]);
    for (std::size_t t = 0; t < t_len; ++t)
      probs.at(i, t) = cs[i].probs.v[t];
  }
  return probs;
}

struct LossResult {
  double loss = 0.0;
  std::size_t positions = 0;
};

// Mean masked BCE over the batch plus gradients for every parameter. The
// logit gradient uses the fused sigmoid/BCE form (p - y). Gradients
// accumulate into the model's grad buffers; pad embedding rows are re-zeroed
// after accumulation.
inline LossResult loss_and_gradients(SAKTModel& m,
                                     std::span<const TrainingInstance> batch,
                                     bool training = true, Rng* rng = nullptr) {
  const SAKTConfig& cfg = m.config;
  const std::size_t t_len = cfg.window();

  std::size_t total = 0;
  for (const auto& inst : batch) total += inst.valid_positions();
  if (total == 0)
    throw NumericError("empty-batch", "batch has no scorable positions");

  std::vector<InstanceCache> caches;
  Tensor probs = forward(m, batch, training, rng, &caches);

  Tensor labels({batch.size(), t_len});
  std::vector<std::uint8_t> mask(batch.size() * t_len, 0);
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t t = 0; t < t_len; ++t) {
      labels.at(i, t) = batch[i].labels[t];
      mask[i * t_len + t] = batch[i].valid_mask[t];
    }
  const double loss = num::bce_masked(probs, labels, mask);
  if (!std::isfinite(loss))
    throw NumericError("non-finite", "loss is not finite");

  const double inv_total = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    InstanceCache& c = caches[i];
    Tensor dz({1, t_len});
    for (std::size_t t = 0; t < t_len; ++t)
      if (batch[i].valid_mask[t])
        dz.v[t] = (c.probs.v[t] - static_cast<double>(batch[i].labels[t])) *
                  inv_total;

    const Tensor& final_stream = c.blocks.back().x2;
    Tensor d_stream({t_len, cfg.d_model});
    for (std::size_t t = 0; t < t_len; ++t) {
      const double g = dz.v[t];
      if (g == 0.0) continue;
      m.head_b.grad.v[0] += g;
      for (std::size_t j = 0; j < cfg.d_model; ++j) {
        m.head_w.grad.v[j] += final_stream.at(t, j) * g;
        d_stream.at(t, j) = g * m.head_w.value.v[j];
      }
    }

    Tensor d_k_in({t_len, cfg.d_model});
    for (std::size_t b = cfg.num_blocks; b-- > 0;) {
      auto [d_q, d_kv] = attention_block_backward(m.blocks[b], c.blocks[b],
                                                  d_stream, cfg, training);
      num::add_inplace(d_k_in, d_kv);
      d_stream = std::move(d_q);
    }

    num::embedding_backward(c.query_exercises, d_stream, m.exercise_table.grad);
    num::embedding_backward(c.history_tokens, d_k_in, m.interaction_table.grad);
    num::add_inplace(m.position_table.grad, d_stream);
    num::add_inplace(m.position_table.grad, d_k_in);
  }

  for (std::size_t j = 0; j < cfg.d_model; ++j) {
    m.interaction_table.grad.at(0, j) = 0.0;
    m.exercise_table.grad.at(0, j) = 0.0;
  }
  return {loss, total};
}

struct Prediction {
  double p = 0.0;
  bool used_oov = false;
};

// Probability that the learner answers `next_exercise` correctly given their
// interaction history (most recent window if longer than the model's).
inline Prediction predict_next(
    SAKTModel& m, const std::vector<std::pair<std::string, int>>& history,
    const std::string& next_exercise, const ProblemRegistry& registry) {
  if (history.empty())
    throw ConfigError("parameter",
                      "prediction requires at least one past interaction");
  const std::size_t keep = std::min(history.size(), m.config.window());
  const std::size_t start = history.size() - keep;

  seqgen::EncodedSequence seq;
  seq.user_id = "query";
  seq.exercises.assign(m.config.max_seq_len, 0);
  seq.responses.assign(m.config.max_seq_len, 0);
  seq.valid_len = keep + 1;

  Prediction out;
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& [ex, resp] = history[start + i];
    seq.exercises[i] = registry.lookup(ex);
    out.used_oov = out.used_oov || seq.exercises[i] == registry.oov_index();
    seq.responses[i] = resp;
  }
  seq.exercises[keep] = registry.lookup(next_exercise);
  out.used_oov = out.used_oov || seq.exercises[keep] == registry.oov_index();

  auto inst = seqgen::make_instances(seq, m.config.v_cap);
  InstanceCache cache;
  forward_instance(m, inst, false, nullptr, cache);
  out.p = cache.probs.v[keep - 1];
  return out;
}

}  // namespace ikt::sakt
