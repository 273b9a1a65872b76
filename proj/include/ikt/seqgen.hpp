#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikt/error.hpp"
#include "ikt/ingest.hpp"
#include "ikt/rng.hpp"

namespace ikt::seqgen {

using json = nlohmann::json;

// Append-only map from raw problem ids to dense indices in [1..capacity].
// Index 0 is padding and capacity+1 is the shared out-of-vocabulary slot, so
// indices assigned in one task stay valid in every later task.
class ProblemRegistry {
 public:
  explicit ProblemRegistry(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0)
      throw ConfigError("parameter", "registry capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return forward_.size(); }
  std::size_t oov_index() const { return capacity_ + 1; }

  bool contains(const std::string& raw) const { return forward_.count(raw) > 0; }

  // Registered index, or the OOV slot for ids never seen in training.
  std::size_t lookup(const std::string& raw) const {
    auto it = forward_.find(raw);
    return it == forward_.end() ? oov_index() : it->second;
  }

  std::size_t add(const std::string& raw) {
    auto it = forward_.find(raw);
    if (it != forward_.end()) return it->second;
    if (forward_.size() >= capacity_)
      throw ConfigError(
          "capacity",
          "problem registry is full (" + std::to_string(capacity_) +
              " ids); configure a larger token-space stride (--v-cap)");
    std::size_t idx = forward_.size() + 1;
    forward_.emplace(raw, idx);
    return idx;
  }

  const std::map<std::string, std::size_t>& forward() const { return forward_; }

  json to_json() const {
    json fwd = json::object();
    for (const auto& [raw, idx] : forward_) fwd[raw] = idx;
    return json{{"capacity", capacity_},
                {"format", "ikt.registry.v1"},
                {"forward", std::move(fwd)}};
  }

  static ProblemRegistry from_json(const json& j) {
    if (!j.is_object() || j.value("format", "") != "ikt.registry.v1")
      throw IoError("format", "not an ikt.registry.v1 document");
    ProblemRegistry reg(j.at("capacity").get<std::size_t>());
    std::vector<std::pair<std::size_t, std::string>> by_index;
    for (const auto& [raw, idx] : j.at("forward").items())
      by_index.emplace_back(idx.get<std::size_t>(), raw);
    std::sort(by_index.begin(), by_index.end());
    for (const auto& [idx, raw] : by_index) {
      if (idx != reg.forward_.size() + 1 || idx > reg.capacity_)
        throw IoError("format", "registry indices are not dense from 1");
      reg.forward_.emplace(raw, idx);
    }
    return reg;
  }

 private:
  std::map<std::string, std::size_t> forward_;
  std::size_t capacity_;
};

// Assigns indices to every problem of the task that is not yet registered,
// in the dataset's canonical first-seen order (users sorted, rows in order).
// Existing assignments never change.
inline void extend_registry(ProblemRegistry& registry,
                            const ingest::TaskDataset& dataset) {
  for (const auto& [_, recs] : dataset.users)
    for (const auto& r : recs) registry.add(r.problem_id);
}

// Fixed-length window of one learner's history. Positions at or beyond
// valid_len hold zeros.
struct EncodedSequence {
  std::string user_id;
  std::vector<std::size_t> exercises;  // length L, dense indices, 0 = pad
  std::vector<int> responses;          // length L, {0,1}, 0 = pad
  std::size_t valid_len = 0;
};

// Greedy non-overlapping chunking into windows of length L; every chunk but
// possibly the last is full, the last is zero-padded.
inline std::vector<EncodedSequence> encode_user(
    const std::vector<ingest::InteractionRecord>& records,
    const ProblemRegistry& registry, std::size_t seq_len) {
  if (seq_len < 2)
    throw ConfigError("parameter", "sequence length must be at least 2");
  std::vector<EncodedSequence> out;
  for (std::size_t start = 0; start < records.size(); start += seq_len) {
    const std::size_t len = std::min(seq_len, records.size() - start);
    EncodedSequence seq;
    seq.user_id = records[start].user_id;
    seq.exercises.assign(seq_len, 0);
    seq.responses.assign(seq_len, 0);
    seq.valid_len = len;
    for (std::size_t i = 0; i < len; ++i) {
      seq.exercises[i] = registry.lookup(records[start + i].problem_id);
      seq.responses[i] = records[start + i].correct;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// Interaction token packing an (exercise, response) pair. Registered
// exercises use e + r*v_cap; the OOV exercise gets the two rows past that
// range so unseen-task histories stay encodable.
inline std::size_t interaction_token(std::size_t exercise_index, int response,
                                     std::size_t v_cap) {
  if (exercise_index == 0) return 0;
  if (exercise_index == v_cap + 1)
    return 2 * v_cap + 1 + static_cast<std::size_t>(response);
  return exercise_index + static_cast<std::size_t>(response) * v_cap;
}

inline std::size_t decode_token_exercise(std::size_t token, std::size_t v_cap) {
  if (token == 0) return 0;
  if (token > 2 * v_cap) return v_cap + 1;
  return (token - 1) % v_cap + 1;
}

inline int decode_token_response(std::size_t token, std::size_t v_cap) {
  if (token == 0) return 0;
  if (token > 2 * v_cap) return static_cast<int>(token - (2 * v_cap + 1));
  return static_cast<int>((token - 1) / v_cap);
}

// One model input: position t predicts the response to query_exercises[t]
// given the interaction history tokens at positions <= t.
struct TrainingInstance {
  std::string user_id;
  std::vector<std::size_t> history_tokens;   // length L-1, 0 = pad
  std::vector<std::size_t> query_exercises;  // length L-1, 0 = pad
  std::vector<int> labels;                   // length L-1
  std::vector<std::uint8_t> valid_mask;      // length L-1

  std::size_t valid_positions() const {
    std::size_t n = 0;
    for (auto m : valid_mask) n += (m != 0);
    return n;
  }
};

inline TrainingInstance make_instances(const EncodedSequence& seq,
                                       std::size_t v_cap) {
  const std::size_t w = seq.exercises.size() - 1;
  TrainingInstance inst;
  inst.user_id = seq.user_id;
  inst.history_tokens.assign(w, 0);
  inst.query_exercises.assign(w, 0);
  inst.labels.assign(w, 0);
  inst.valid_mask.assign(w, 0);
  if (seq.valid_len < 2) return inst;
  for (std::size_t t = 1; t < seq.valid_len; ++t) {
    inst.history_tokens[t - 1] =
        interaction_token(seq.exercises[t - 1], seq.responses[t - 1], v_cap);
    inst.query_exercises[t - 1] = seq.exercises[t];
    inst.labels[t - 1] = seq.responses[t];
    inst.valid_mask[t - 1] = 1;
  }
  return inst;
}

struct FoldAssignment {
  std::map<std::string, std::size_t> fold_of;
  std::size_t k = 0;

  std::vector<std::string> users_in_fold(std::size_t fold) const {
    std::vector<std::string> out;
    for (const auto& [user, f] : fold_of)
      if (f == fold) out.push_back(user);
    return out;
  }

  std::vector<std::string> users_not_in_fold(std::size_t fold) const {
    std::vector<std::string> out;
    for (const auto& [user, f] : fold_of)
      if (f != fold) out.push_back(user);
    return out;
  }
};

// Seeded shuffle then round-robin deal, so fold sizes differ by at most one
// and all of a learner's sequences stay on one side of the split.
inline FoldAssignment assign_folds(const std::vector<std::string>& user_ids,
                                   std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("parameter", "fold count must be at least 2");
  if (user_ids.empty())
    throw ConfigError("parameter", "cannot assign folds to zero users");
  if (k > user_ids.size())
    throw ConfigError("parameter",
                      "fold count " + std::to_string(k) + " exceeds " +
                          std::to_string(user_ids.size()) + " users");
  std::vector<std::string> sorted = user_ids;
  std::sort(sorted.begin(), sorted.end());
  Rng rng(seed, fnv1a64("folds"));
  auto perm = rng.permutation(sorted.size());
  FoldAssignment fa;
  fa.k = k;
  for (std::size_t i = 0; i < perm.size(); ++i)
    fa.fold_of[sorted[perm[i]]] = i % k;
  return fa;
}

// Fold seed shared by every protocol touching one task within a run, so the
// same learners land in the same folds across scenario/disjoint/joint runs.
inline std::uint64_t fold_seed_for(std::uint64_t run_seed,
                                   const std::string& school_id) {
  return fnv1a64(school_id, fnv1a64_u64(run_seed));
}

inline FoldAssignment task_folds(const ingest::TaskDataset& dataset,
                                 std::size_t k, std::uint64_t run_seed) {
  std::vector<std::string> users;
  users.reserve(dataset.users.size());
  for (const auto& [user, _] : dataset.users) users.push_back(user);
  return assign_folds(users, k, fold_seed_for(run_seed, dataset.school_id));
}

}  // namespace ikt::seqgen
