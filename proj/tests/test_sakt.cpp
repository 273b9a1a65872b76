#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ikt/gradcheck.hpp"
#include "ikt/metrics.hpp"
#include "ikt/sakt.hpp"

using namespace ikt;
using namespace ikt::sakt;
using seqgen::TrainingInstance;

namespace {

SAKTConfig tiny_config() {
  SAKTConfig cfg;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.num_blocks = 2;
  cfg.max_seq_len = 6;
  cfg.dropout_rate = 0.0;
  cfg.v_cap = 12;
  cfg.ffn_hidden = 8;
  return cfg;
}

// Instances over a fixed exercise alphabet; label rule: correct iff the
// exercise index is even.
TrainingInstance rule_instance(Rng& rng, const SAKTConfig& cfg,
                               std::size_t valid_len) {
  seqgen::EncodedSequence seq;
  seq.user_id = "u";
  seq.exercises.assign(cfg.max_seq_len, 0);
  seq.responses.assign(cfg.max_seq_len, 0);
  seq.valid_len = valid_len;
  for (std::size_t i = 0; i < valid_len; ++i) {
    seq.exercises[i] = 1 + rng.below(cfg.v_cap);
    seq.responses[i] = seq.exercises[i] % 2 == 0 ? 1 : 0;
  }
  return seqgen::make_instances(seq, cfg.v_cap);
}

std::vector<double> flatten_probs(const num::Tensor& probs,
                                  const TrainingInstance& inst,
                                  std::size_t row) {
  std::vector<double> out;
  for (std::size_t t = 0; t < inst.valid_mask.size(); ++t)
    if (inst.valid_mask[t]) out.push_back(probs.at(row, t));
  return out;
}

}  // namespace

TEST_CASE("init_model is deterministic and structured") {
  auto cfg = tiny_config();
  auto m1 = init_model(cfg, 7);
  auto m2 = init_model(cfg, 7);
  auto p1 = m1.parameters(), p2 = m2.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].first == p2[i].first);
    CHECK(p1[i].second->value.v == p2[i].second->value.v);
  }

  SECTION("different seeds differ") {
    auto m3 = init_model(cfg, 8);
    CHECK(m3.blocks[0].wq.value.v != m1.blocks[0].wq.value.v);
  }
  SECTION("pad rows are zero") {
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      CHECK(m1.interaction_table.value.at(0, j) == 0.0);
      CHECK(m1.exercise_table.value.at(0, j) == 0.0);
    }
  }
  SECTION("parameter count matches an independent enumeration") {
    std::size_t by_sum = 0;
    for (auto& [_, p] : m1.parameters()) by_sum += p->value.size();
    // enumerate the expected shapes directly
    const std::size_t d = cfg.d_model, f = cfg.ffn(), w = cfg.max_seq_len - 1;
    std::size_t expected = 0;
    expected += (2 * cfg.v_cap + 3) * d;       // interaction embeddings
    expected += (cfg.v_cap + 2) * d;           // exercise embeddings
    expected += w * d;                         // positions
    expected += cfg.num_blocks *
                (4 * d * d + 2 * d + d * f + f + f * d + d + 2 * d);
    expected += d + 1;                         // head
    CHECK(by_sum == expected);
    CHECK(m1.parameter_count() == expected);
  }
  SECTION("layer norm gains start at one") {
    for (double g : m1.blocks[0].ln1_gain.value.v) CHECK(g == 1.0);
    for (double b : m1.blocks[0].ln1_bias.value.v) CHECK(b == 0.0);
  }
}

TEST_CASE("forward is pure and batch-independent") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 11);
  Rng rng(3);
  std::vector<TrainingInstance> batch{rule_instance(rng, cfg, 6),
                                      rule_instance(rng, cfg, 4),
                                      rule_instance(rng, cfg, 2)};

  auto p1 = forward(m, batch);
  auto p2 = forward(m, batch);
  CHECK(p1.v == p2.v);
  CHECK(p1.all_finite());
  for (double p : p1.v) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  SECTION("permuting the batch permutes the rows") {
    std::vector<TrainingInstance> swapped{batch[2], batch[0], batch[1]};
    auto ps = forward(m, swapped);
    for (std::size_t t = 0; t < cfg.window(); ++t) {
      CHECK(ps.at(0, t) == p1.at(2, t));
      CHECK(ps.at(1, t) == p1.at(0, t));
      CHECK(ps.at(2, t) == p1.at(1, t));
    }
  }
}

TEST_CASE("causality: later history cannot move earlier predictions") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 13);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = rule_instance(rng, cfg, cfg.max_seq_len);
    std::vector<TrainingInstance> batch{inst};
    auto base = forward(m, batch);

    const std::size_t cut = 1 + rng.below(cfg.window() - 1);
    auto perturbed = inst;
    // replace the interaction at a history position past the cut
    const std::size_t pos = cut + rng.below(cfg.window() - cut);
    std::size_t new_e = 1 + rng.below(cfg.v_cap);
    int new_r = static_cast<int>(rng.below(2));
    perturbed.history_tokens[pos] =
        seqgen::interaction_token(new_e, new_r, cfg.v_cap);
    std::vector<TrainingInstance> pbatch{perturbed};
    auto moved = forward(m, pbatch);

    for (std::size_t t = 0; t < pos; ++t)
      CHECK(moved.at(0, t) == base.at(0, t));
  }
}

TEST_CASE("pad neutrality: all-pad instances do not disturb the batch") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 17);
  Rng rng(7);
  std::vector<TrainingInstance> batch{rule_instance(rng, cfg, 5),
                                      rule_instance(rng, cfg, 3)};
  auto base = forward(m, batch);

  seqgen::EncodedSequence empty;
  empty.exercises.assign(cfg.max_seq_len, 0);
  empty.responses.assign(cfg.max_seq_len, 0);
  empty.valid_len = 0;
  auto padded = batch;
  padded.push_back(seqgen::make_instances(empty, cfg.v_cap));

  auto with_pad = forward(m, padded);
  CHECK(with_pad.all_finite());
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t t = 0; t < cfg.window(); ++t)
      CHECK(with_pad.at(i, t) == base.at(i, t));

  SECTION("loss ignores the all-pad instance") {
    auto l1 = loss_and_gradients(m, batch, false);
    auto m2 = init_model(cfg, 17);
    auto l2 = loss_and_gradients(m2, padded, false);
    CHECK(l1.loss == l2.loss);
    CHECK(l1.positions == l2.positions);
  }
}

TEST_CASE("attention probabilities honor the mask") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 19);
  Rng rng(9);
  auto inst = rule_instance(rng, cfg, 3);  // 2 valid history positions

  std::vector<InstanceCache> caches;
  std::vector<TrainingInstance> batch{inst};
  forward(m, batch, false, nullptr, &caches);

  const std::size_t t_len = cfg.window();
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const auto& a = caches[0].blocks[0].attn[h];
    // first query row has a single admissible key
    CHECK(a.at(0, 0) == 1.0);
    for (std::size_t j = 1; j < t_len; ++j) CHECK(a.at(0, j) == 0.0);
    // every row sums to one over its admissible keys; pad queries still
    // attend to the valid history but are excluded from the loss
    for (std::size_t t = 0; t < t_len; ++t) {
      double row = 0.0;
      for (std::size_t j = 0; j < t_len; ++j) {
        if (!caches[0].attn_mask[t * t_len + j]) CHECK(a.at(t, j) == 0.0);
        row += a.at(t, j);
      }
      CHECK(std::fabs(row - 1.0) < 1e-12);
    }
  }

  SECTION("an instance with no history yields zero attention rows") {
    seqgen::EncodedSequence empty;
    empty.exercises.assign(cfg.max_seq_len, 0);
    empty.responses.assign(cfg.max_seq_len, 0);
    empty.valid_len = 0;
    std::vector<TrainingInstance> pad_batch{
        seqgen::make_instances(empty, cfg.v_cap)};
    std::vector<InstanceCache> pad_caches;
    auto probs = forward(m, pad_batch, false, nullptr, &pad_caches);
    CHECK(probs.all_finite());
    for (std::size_t h = 0; h < cfg.num_heads; ++h)
      for (double e : pad_caches[0].blocks[0].attn[h].v) CHECK(e == 0.0);
  }
}

TEST_CASE("untrained loss on balanced labels is near ln 2") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 23);
  Rng rng(11);
  std::vector<TrainingInstance> batch;
  for (int i = 0; i < 16; ++i) batch.push_back(rule_instance(rng, cfg, 6));
  auto res = loss_and_gradients(m, batch, false);
  CHECK(std::fabs(res.loss - std::log(2.0)) < 0.15);

  SECTION("loss is invariant to batch order") {
    std::vector<TrainingInstance> rev(batch.rbegin(), batch.rend());
    auto m2 = init_model(cfg, 23);
    auto res2 = loss_and_gradients(m2, rev, false);
    CHECK(res.loss == Catch::Approx(res2.loss).margin(1e-12));
  }
}

TEST_CASE("empty batch is an error") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 29);
  seqgen::EncodedSequence seq;
  seq.exercises.assign(cfg.max_seq_len, 0);
  seq.responses.assign(cfg.max_seq_len, 0);
  seq.valid_len = 1;
  seq.exercises[0] = 3;
  std::vector<TrainingInstance> batch{seqgen::make_instances(seq, cfg.v_cap)};
  CHECK_THROWS_AS(loss_and_gradients(m, batch, false), NumericError);
}

TEST_CASE("full model gradients match finite differences") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 31);
  Rng rng(13);
  std::vector<TrainingInstance> batch{rule_instance(rng, cfg, 6),
                                      rule_instance(rng, cfg, 3)};
  // include an out-of-vocabulary history interaction and query
  batch[1].history_tokens[0] =
      seqgen::interaction_token(cfg.v_cap + 1, 1, cfg.v_cap);
  batch[1].query_exercises[1] = cfg.v_cap + 1;

  m.zero_grads();
  loss_and_gradients(m, batch, false);

  auto value = [&]() {
    auto probs = forward(m, batch);
    num::Tensor labels({batch.size(), cfg.window()});
    std::vector<std::uint8_t> mask(batch.size() * cfg.window(), 0);
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t t = 0; t < cfg.window(); ++t) {
        labels.at(i, t) = batch[i].labels[t];
        mask[i * cfg.window() + t] = batch[i].valid_mask[t];
      }
    return num::bce_masked(probs, labels, mask);
  };

  double worst = 0.0;
  for (auto& [name, p] : m.parameters()) {
    double err = num::grad_check(value, p->value.v, p->grad.v);
    INFO(name);
    CHECK(err < 1e-4);
    worst = std::max(worst, err);
  }
  INFO("worst over all parameters: " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("training determinism: identical seeds give identical gradients") {
  auto cfg = tiny_config();
  cfg.dropout_rate = 0.3;
  Rng data_rng(17);
  std::vector<TrainingInstance> batch{rule_instance(data_rng, cfg, 6),
                                      rule_instance(data_rng, cfg, 5)};

  auto run = [&](std::uint64_t seed) {
    auto m = init_model(cfg, 41);
    Rng drop(seed, fnv1a64("dropout"));
    auto r = loss_and_gradients(m, batch, true, &drop);
    std::vector<double> grads;
    for (auto& [_, p] : m.parameters())
      grads.insert(grads.end(), p->grad.v.begin(), p->grad.v.end());
    return std::pair{r.loss, grads};
  };
  auto a = run(99), b = run(99), c = run(100);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.second != c.second);  // dropout mask actually changed
}

TEST_CASE("predict_next matches forward on the encoded equivalent") {
  auto cfg = tiny_config();
  auto m = init_model(cfg, 43);
  seqgen::ProblemRegistry reg(cfg.v_cap);
  ingest::TaskDataset ds;
  ds.school_id = "A";
  std::vector<ingest::InteractionRecord> recs;
  for (std::size_t i = 0; i < 10; ++i)
    recs.push_back({"u0", "p" + std::to_string(i), "A", 1, i});
  ds.users.emplace("u0", recs);
  seqgen::extend_registry(reg, ds);

  SECTION("history of one equals position-0 forward output") {
    auto pred = predict_next(m, {{"p0", 1}}, "p1", reg);
    seqgen::EncodedSequence seq;
    seq.exercises.assign(cfg.max_seq_len, 0);
    seq.responses.assign(cfg.max_seq_len, 0);
    seq.exercises[0] = reg.lookup("p0");
    seq.responses[0] = 1;
    seq.exercises[1] = reg.lookup("p1");
    seq.valid_len = 2;
    std::vector<TrainingInstance> batch{seqgen::make_instances(seq, cfg.v_cap)};
    auto probs = forward(m, batch);
    CHECK(pred.p == probs.at(0, 0));
    CHECK(!pred.used_oov);
  }
  SECTION("long histories keep only the most recent window") {
    std::vector<std::pair<std::string, int>> history;
    for (int i = 0; i < 12; ++i)
      history.emplace_back("p" + std::to_string(i % 10), i % 2);
    auto full = predict_next(m, history, "p3", reg);
    std::vector<std::pair<std::string, int>> recent(
        history.end() - static_cast<long>(cfg.window()), history.end());
    auto trimmed = predict_next(m, recent, "p3", reg);
    CHECK(full.p == trimmed.p);
  }
  SECTION("empty history is an error") {
    CHECK_THROWS_AS(predict_next(m, {}, "p1", reg), ConfigError);
  }
  SECTION("unknown exercises are flagged as OOV") {
    auto pred = predict_next(m, {{"p0", 1}}, "mystery", reg);
    CHECK(pred.used_oov);
    CHECK(pred.p > 0.0);
    CHECK(pred.p < 1.0);
  }
}

TEST_CASE("overfit sanity: the model can memorize a small batch") {
  SAKTConfig cfg;
  cfg.d_model = 32;
  cfg.num_heads = 4;
  cfg.num_blocks = 2;
  cfg.max_seq_len = 10;
  cfg.dropout_rate = 0.0;
  cfg.v_cap = 24;
  auto m = init_model(cfg, 47);

  Rng rng(19);
  std::vector<TrainingInstance> batch;
  for (int i = 0; i < 20; ++i) batch.push_back(rule_instance(rng, cfg, 10));

  // plain momentum descent, fixed rate: independent of the train module
  const double lr = 0.005, mu = 0.9;
  for (int step = 0; step < 500; ++step) {
    m.zero_grads();
    loss_and_gradients(m, batch, false);
    for (auto& [_, p] : m.parameters()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->velocity.v[i] = mu * p->velocity.v[i] + p->grad.v[i];
        p->value.v[i] -= lr * p->velocity.v[i];
      }
    }
  }

  auto probs = forward(m, batch);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto s = flatten_probs(probs, batch[i], i);
    scores.insert(scores.end(), s.begin(), s.end());
    for (std::size_t t = 0; t < batch[i].valid_mask.size(); ++t)
      if (batch[i].valid_mask[t]) labels.push_back(batch[i].labels[t]);
  }
  auto auc = metrics::auroc(scores, labels);
  REQUIRE(auc.has_value());
  CHECK(*auc > 0.95);
}
