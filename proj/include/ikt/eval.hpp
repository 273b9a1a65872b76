#pragma once

#include <string>
#include <vector>

#include "ikt/ingest.hpp"
#include "ikt/metrics.hpp"
#include "ikt/sakt.hpp"
#include "ikt/seqgen.hpp"
#include "ikt/train.hpp"

namespace ikt::metrics {

// Scores the held-out fold of one task under a frozen model: every mask-true
// position of every test-fold learner contributes one (probability, label)
// pair. Deterministic: learners in sorted order, positions in sequence order.
inline EvalReport evaluate(sakt::SAKTModel& model,
                           const seqgen::ProblemRegistry& registry,
                           const ingest::TaskDataset& dataset,
                           const seqgen::FoldAssignment& folds,
                           std::size_t test_fold) {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<seqgen::TrainingInstance> batch;

  auto flush = [&]() {
    if (batch.empty()) return;
    auto probs = sakt::forward(model, batch);
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t t = 0; t < batch[i].valid_mask.size(); ++t)
        if (batch[i].valid_mask[t]) {
          scores.push_back(probs.at(i, t));
          labels.push_back(batch[i].labels[t]);
        }
    batch.clear();
  };

  for (const auto& [user, recs] : dataset.users) {
    auto it = folds.fold_of.find(user);
    if (it == folds.fold_of.end() || it->second != test_fold) continue;
    for (const auto& seq :
         seqgen::encode_user(recs, registry, model.config.max_seq_len)) {
      auto inst = seqgen::make_instances(seq, model.config.v_cap);
      if (inst.valid_positions() == 0) continue;
      batch.push_back(std::move(inst));
      if (batch.size() >= 128) flush();
    }
  }
  flush();

  if (scores.empty())
    throw NumericError("empty-eval",
                       "no scorable positions in the test fold of task '" +
                           dataset.school_id + "'");
  return score_predictions(scores, labels);
}

// Same, but straight from a checkpoint: folds are re-derived from the run
// seed so every protocol sees the same split.
inline EvalReport evaluate_checkpoint(const train::Checkpoint& checkpoint,
                                      const ingest::TaskDataset& dataset,
                                      const train::FoldSpec& fold_spec,
                                      std::uint64_t run_seed) {
  auto model = train::model_from_checkpoint(checkpoint);
  auto folds = seqgen::task_folds(dataset, fold_spec.k, run_seed);
  return evaluate(model, checkpoint.registry, dataset, folds,
                  fold_spec.test_fold);
}

}  // namespace ikt::metrics
