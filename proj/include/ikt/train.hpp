#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikt/error.hpp"
#include "ikt/ingest.hpp"
#include "ikt/metrics.hpp"
#include "ikt/rng.hpp"
#include "ikt/sakt.hpp"
#include "ikt/seqgen.hpp"

namespace ikt::train {

using json = nlohmann::json;
using num::Parameter;
using num::Tensor;

struct TrainConfig {
  double lr_start = 0.001;
  double lr_peak = 0.002;
  std::size_t warmup_steps = 50;
  double momentum = 0.99;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  bool shuffle = true;
  bool per_task_warmup = false;  // restart the warmup counter at each task

  void validate() const {
    if (!(lr_start > 0.0) || lr_start > lr_peak)
      throw ConfigError("parameter", "need 0 < lr_start <= lr_peak");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("parameter", "momentum must be in [0, 1)");
    if (batch_size == 0)
      throw ConfigError("parameter", "batch_size must be positive");
  }

  json to_json() const {
    return json{{"batch_size", batch_size},
                {"epochs", epochs},
                {"lr_peak", lr_peak},
                {"lr_start", lr_start},
                {"momentum", momentum},
                {"per_task_warmup", per_task_warmup},
                {"seed", seed},
                {"shuffle", shuffle},
                {"warmup_steps", warmup_steps}};
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.lr_peak = j.at("lr_peak").get<double>();
    c.lr_start = j.at("lr_start").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.per_task_warmup = j.at("per_task_warmup").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.shuffle = j.at("shuffle").get<bool>();
    c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
    c.validate();
    return c;
  }

  bool operator==(const TrainConfig&) const = default;
};

struct FoldSpec {
  std::size_t k = 5;
  std::size_t test_fold = 0;

  void validate() const {
    if (k < 2) throw ConfigError("parameter", "fold count must be at least 2");
    if (test_fold >= k)
      throw ConfigError("parameter", "test_fold must be below the fold count");
  }

  json to_json() const { return json{{"k", k}, {"test_fold", test_fold}}; }
  bool operator==(const FoldSpec&) const = default;
};

// Linear ramp from lr_start at step 0 to lr_peak at warmup_steps, constant
// afterwards.
inline double lr_at_step(std::uint64_t step, const TrainConfig& cfg) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.lr_peak;
  const double frac =
      static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * frac;
}

// v <- momentum * v + g;  theta <- theta - lr * v;  g <- 0.
inline void sgd_momentum_step(
    std::vector<std::pair<std::string, Parameter*>>& params, double lr,
    double momentum) {
  for (auto& [name, p] : params) {
    double max_abs = 0.0;
    bool finite = true;
    for (double g : p->grad.v) {
      if (!std::isfinite(g)) finite = false;
      max_abs = std::max(max_abs, std::fabs(g));
    }
    if (!finite)
      throw NumericError("non-finite",
                         "non-finite gradient in '" + name +
                             "' (max |g| = " + metrics::format_double(max_abs) +
                             "); aborting step");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->velocity.v[i] = momentum * p->velocity.v[i] + p->grad.v[i];
      p->value.v[i] -= lr * p->velocity.v[i];
      p->grad.v[i] = 0.0;
    }
  }
}

struct ProvenanceEntry {
  std::string task;
  std::string config_hash;
  std::string train_data_hash;

  json to_json() const {
    return json{{"config_hash", config_hash},
                {"task", task},
                {"train_data_hash", train_data_hash}};
  }
  static ProvenanceEntry from_json(const json& j) {
    return {j.at("task").get<std::string>(),
            j.at("config_hash").get<std::string>(),
            j.at("train_data_hash").get<std::string>()};
  }
  bool operator==(const ProvenanceEntry&) const = default;
};

// The only artifact handed between tasks: model weights, the problem
// registry, the step counter and the training provenance. Raw data never
// travels with it.
struct Checkpoint {
  std::uint32_t format_version = 1;
  sakt::SAKTConfig config;
  seqgen::ProblemRegistry registry{1};
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::uint64_t global_step = 0;
  std::vector<ProvenanceEntry> provenance;
};

inline Checkpoint checkpoint_from_model(
    sakt::SAKTModel& model, const seqgen::ProblemRegistry& registry,
    std::uint64_t global_step, std::vector<ProvenanceEntry> provenance) {
  Checkpoint c;
  c.config = model.config;
  c.registry = registry;
  c.global_step = global_step;
  c.provenance = std::move(provenance);
  for (auto& [name, p] : model.parameters()) c.tensors.emplace_back(name, p->value);
  return c;
}

inline sakt::SAKTModel model_from_checkpoint(const Checkpoint& c) {
  sakt::SAKTModel model = sakt::init_model(c.config, 0);
  auto params = model.parameters();
  if (params.size() != c.tensors.size())
    throw IoError("format", "checkpoint tensor manifest does not fit config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != c.tensors[i].first ||
        params[i].second->value.shape != c.tensors[i].second.shape)
      throw IoError("format", "checkpoint tensor '" + c.tensors[i].first +
                                  "' does not match the expected layout");
    params[i].second->value = c.tensors[i].second;
    params[i].second->zero_grad();
    params[i].second->zero_velocity();
  }
  return model;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i)
    v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}
inline std::uint64_t get_u64(const std::string& s, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i)
    v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}

inline constexpr char kMagic[9] = "IKTCKPT1";

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  json tensors = json::array();
  for (const auto& [name, t] : c.tensors)
    tensors.push_back({{"name", name}, {"shape", t.shape}});
  json prov = json::array();
  for (const auto& p : c.provenance) prov.push_back(p.to_json());
  json header{{"config", c.config.to_json()},
              {"global_step", c.global_step},
              {"provenance", std::move(prov)},
              {"registry", c.registry.to_json()},
              {"tensors", std::move(tensors)}};
  const std::string header_bytes = header.dump();

  std::string payload;
  std::size_t doubles = 0;
  for (const auto& [_, t] : c.tensors) doubles += t.size();
  payload.reserve(doubles * sizeof(double));
  for (const auto& [_, t] : c.tensors) {
    const char* raw = reinterpret_cast<const char*>(t.v.data());
    payload.append(raw, t.v.size() * sizeof(double));
  }

  std::string out;
  out.reserve(8 + 4 + 8 + header_bytes.size() + 8 + payload.size() + 8);
  out.append(detail::kMagic, 8);
  detail::put_u32(out, c.format_version);
  detail::put_u64(out, header_bytes.size());
  out += header_bytes;
  detail::put_u64(out, payload.size());
  out += payload;
  std::uint64_t checksum = fnv1a64(header_bytes);
  checksum = fnv1a64_bytes(payload.data(), payload.size(), checksum);
  detail::put_u64(out, checksum);
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  auto need = [&](std::size_t at, std::size_t n) {
    if (at + n > bytes.size())
      throw IoError("integrity", "checkpoint truncated");
  };
  need(0, 12);
  if (std::memcmp(bytes.data(), detail::kMagic, 8) != 0)
    throw IoError("format", "not a checkpoint file (bad magic)");
  const std::uint32_t version = detail::get_u32(bytes, 8);
  if (version != 1)
    throw IoError("version", "unsupported checkpoint version " +
                                 std::to_string(version));
  need(12, 8);
  const std::size_t header_len = detail::get_u64(bytes, 12);
  need(20, header_len);
  const std::string header_bytes = bytes.substr(20, header_len);
  std::size_t at = 20 + header_len;
  need(at, 8);
  const std::size_t payload_len = detail::get_u64(bytes, at);
  at += 8;
  need(at, payload_len);
  const char* payload = bytes.data() + at;
  at += payload_len;
  need(at, 8);
  std::uint64_t checksum = fnv1a64(header_bytes);
  checksum = fnv1a64_bytes(payload, payload_len, checksum);
  if (checksum != detail::get_u64(bytes, at))
    throw IoError("integrity", "checkpoint checksum mismatch");

  json header;
  try {
    header = json::parse(header_bytes);
  } catch (const json::exception& e) {
    throw IoError("format", std::string("bad checkpoint header: ") + e.what());
  }

  Checkpoint c;
  c.format_version = version;
  c.config = sakt::SAKTConfig::from_json(header.at("config"));
  c.registry = seqgen::ProblemRegistry::from_json(header.at("registry"));
  c.global_step = header.at("global_step").get<std::uint64_t>();
  for (const auto& p : header.at("provenance"))
    c.provenance.push_back(ProvenanceEntry::from_json(p));

  std::size_t offset = 0;
  for (const auto& tj : header.at("tensors")) {
    const auto name = tj.at("name").get<std::string>();
    const auto shape = tj.at("shape").get<std::vector<std::size_t>>();
    Tensor t(shape);
    const std::size_t nbytes = t.size() * sizeof(double);
    if (offset + nbytes > payload_len)
      throw IoError("integrity", "checkpoint payload shorter than manifest");
    std::memcpy(t.v.data(), payload + offset, nbytes);
    offset += nbytes;
    c.tensors.emplace_back(name, std::move(t));
  }
  if (offset != payload_len)
    throw IoError("integrity", "checkpoint payload longer than manifest");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("io", "cannot write '" + p.string() + "'");
  const std::string bytes = serialize_checkpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("io", "short write to '" + p.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("io", "cannot open '" + p.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

struct TrainHistory {
  std::vector<std::uint64_t> step;
  std::vector<std::size_t> epoch;
  std::vector<double> loss;
  std::vector<double> lr;
  std::vector<double> epoch_mean_loss;

  std::string to_csv() const {
    std::string out = "step,epoch,loss,lr\n";
    for (std::size_t i = 0; i < step.size(); ++i)
      out += std::to_string(step[i]) + "," + std::to_string(epoch[i]) + "," +
             metrics::format_double(loss[i]) + "," +
             metrics::format_double(lr[i]) + "\n";
    return out;
  }
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

inline std::string run_config_hash(const sakt::SAKTConfig& model_cfg,
                                   const TrainConfig& train_cfg,
                                   const FoldSpec& folds) {
  json j{{"folds", folds.to_json()},
         {"model", model_cfg.to_json()},
         {"train", train_cfg.to_json()}};
  return hash_hex(fnv1a64(j.dump()));
}

// Digest of the exact training rows a stage consumes; the continual harness
// recomputes this independently to assert data isolation.
inline std::string training_fold_digest(const ingest::TaskDataset& dataset,
                                        const seqgen::FoldAssignment& folds,
                                        std::size_t test_fold) {
  std::vector<std::string> lines;
  for (const auto& [user, recs] : dataset.users) {
    if (folds.fold_of.at(user) == test_fold) continue;
    for (const auto& r : recs) lines.push_back(ingest::record_line(r));
  }
  return ingest::records_digest(std::move(lines));
}

namespace detail {

// Gathers the training-fold instances of one task (and the digest lines of
// the rows consumed) in canonical order: users sorted, chunks chronological.
inline void collect_training_instances(
    const ingest::TaskDataset& dataset, const seqgen::ProblemRegistry& registry,
    const sakt::SAKTConfig& model_cfg, const seqgen::FoldAssignment& folds,
    std::size_t test_fold, std::vector<seqgen::TrainingInstance>& instances,
    std::vector<std::string>& hash_lines) {
  for (const auto& [user, recs] : dataset.users) {
    if (folds.fold_of.at(user) == test_fold) continue;
    for (const auto& r : recs) hash_lines.push_back(ingest::record_line(r));
    for (const auto& seq :
         seqgen::encode_user(recs, registry, model_cfg.max_seq_len)) {
      auto inst = seqgen::make_instances(seq, model_cfg.v_cap);
      if (inst.valid_positions() > 0) instances.push_back(std::move(inst));
    }
  }
}

// The epoch/batch/update loop. Momentum starts from rest; shuffle order and
// dropout streams derive from (seed, epoch) and (seed, global step).
inline TrainHistory train_core(
    sakt::SAKTModel& model,
    const std::vector<seqgen::TrainingInstance>& instances,
    const TrainConfig& cfg, std::uint64_t& global_step) {
  model.zero_grads();
  model.zero_velocity();

  TrainHistory history;
  Rng base(cfg.seed);
  auto params = model.parameters();
  std::uint64_t local_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.shuffle)
      order = base.fork("shuffle").fork(epoch).permutation(order.size());

    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - at);
      std::vector<seqgen::TrainingInstance> batch;
      batch.reserve(len);
      for (std::size_t i = 0; i < len; ++i)
        batch.push_back(instances[order[at + i]]);

      Rng drop = base.fork("dropout").fork(global_step);
      auto res = sakt::loss_and_gradients(model, batch, true, &drop);
      const double lr =
          lr_at_step(cfg.per_task_warmup ? local_step : global_step, cfg);
      sgd_momentum_step(params, lr, cfg.momentum);

      history.step.push_back(global_step);
      history.epoch.push_back(epoch);
      history.loss.push_back(res.loss);
      history.lr.push_back(lr);
      epoch_loss += res.loss;
      ++epoch_batches;
      ++global_step;
      ++local_step;
    }
    history.epoch_mean_loss.push_back(epoch_loss /
                                      static_cast<double>(epoch_batches));
  }
  return history;
}

inline TrainResult train_task_impl(sakt::SAKTModel model,
                                   seqgen::ProblemRegistry registry,
                                   std::uint64_t global_step,
                                   std::vector<ProvenanceEntry> provenance,
                                   const ingest::TaskDataset& dataset,
                                   const FoldSpec& fold_spec,
                                   const TrainConfig& cfg) {
  cfg.validate();
  fold_spec.validate();
  seqgen::extend_registry(registry, dataset);
  const auto folds = seqgen::task_folds(dataset, fold_spec.k, cfg.seed);

  std::vector<seqgen::TrainingInstance> instances;
  std::vector<std::string> hash_lines;
  collect_training_instances(dataset, registry, model.config, folds,
                             fold_spec.test_fold, instances, hash_lines);
  if (instances.empty())
    throw DataError("empty-task", "task '" + dataset.school_id +
                                      "' has no trainable positions");

  TrainHistory history = train_core(model, instances, cfg, global_step);

  provenance.push_back({dataset.school_id,
                        run_config_hash(model.config, cfg, fold_spec),
                        ingest::records_digest(std::move(hash_lines))});

  TrainResult out;
  out.checkpoint =
      checkpoint_from_model(model, registry, global_step, std::move(provenance));
  out.history = std::move(history);
  return out;
}

}  // namespace detail

// Train a fresh model on one task.
inline TrainResult train_task(const sakt::SAKTConfig& model_cfg,
                              const ingest::TaskDataset& dataset,
                              const FoldSpec& fold_spec,
                              const TrainConfig& cfg) {
  model_cfg.validate();
  return detail::train_task_impl(sakt::init_model(model_cfg, cfg.seed),
                                 seqgen::ProblemRegistry(model_cfg.v_cap), 0,
                                 {}, dataset, fold_spec, cfg);
}

// Continue training from a checkpoint (weights carry over, momentum resets,
// the warmup counter keeps running unless per_task_warmup is set).
inline TrainResult train_task(const Checkpoint& start,
                              const ingest::TaskDataset& dataset,
                              const FoldSpec& fold_spec,
                              const TrainConfig& cfg) {
  return detail::train_task_impl(model_from_checkpoint(start), start.registry,
                                 start.global_step, start.provenance, dataset,
                                 fold_spec, cfg);
}

}  // namespace ikt::train
