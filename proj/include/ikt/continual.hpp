#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikt/error.hpp"
#include "ikt/eval.hpp"
#include "ikt/ingest.hpp"
#include "ikt/metrics.hpp"
#include "ikt/train.hpp"

namespace ikt::continual {

using json = nlohmann::json;
using ingest::TaskDataset;
using metrics::EvalReport;

struct ScenarioSpec {
  std::vector<std::string> tasks;
  sakt::SAKTConfig model;
  train::TrainConfig train_cfg;
  train::FoldSpec folds;

  void validate() const {
    if (tasks.empty())
      throw ConfigError("parameter", "scenario needs at least one task");
    std::set<std::string> seen(tasks.begin(), tasks.end());
    if (seen.size() != tasks.size())
      throw ConfigError("parameter", "scenario tasks must be distinct");
    model.validate();
    train_cfg.validate();
    folds.validate();
  }

  json to_json() const {
    return json{{"folds", folds.to_json()},
                {"model", model.to_json()},
                {"tasks", tasks},
                {"train", train_cfg.to_json()}};
  }

  static ScenarioSpec from_json(const json& j) {
    ScenarioSpec s;
    s.tasks = j.at("tasks").get<std::vector<std::string>>();
    s.model = sakt::SAKTConfig::from_json(j.at("model"));
    s.train_cfg = train::TrainConfig::from_json(j.at("train"));
    s.folds.k = j.at("folds").at("k").get<std::size_t>();
    s.folds.test_fold = j.at("folds").at("test_fold").get<std::size_t>();
    return s;
  }
};

struct StageInfo {
  std::string task;
  std::string config_hash;
  std::string train_data_hash;     // digest of the rows training consumed
  std::string expected_data_hash;  // digest the harness derived on its own
  std::uint64_t global_step_after = 0;
};

// One evaluation cell: after training through `stage` (1-based), the test
// fold of `eval_task` was scored under the stage checkpoint.
struct Cell {
  std::size_t stage = 0;
  std::string trained_task;
  std::string eval_task;
  EvalReport report;
};

inline const char* kReportCsvHeader =
    "task,trained_through,acc,auroc,auprc,tp,fp,tn,fn,n";

inline std::string cells_to_csv(const std::vector<Cell>& cells) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& c : cells)
    out += c.eval_task + "," + c.trained_task + "," + c.report.csv_fields() +
           "\n";
  return out;
}

struct ScenarioResult {
  ScenarioSpec spec;
  std::vector<StageInfo> stages;
  std::vector<Cell> cells;  // stage ascending, eval task index ascending
  std::vector<train::Checkpoint> checkpoints;  // one per stage
  std::vector<train::TrainHistory> histories;  // one per stage

  const EvalReport* find(std::size_t stage, const std::string& eval_task) const {
    for (const auto& c : cells)
      if (c.stage == stage && c.eval_task == eval_task) return &c.report;
    return nullptr;
  }

  json to_json() const {
    json stages_j = json::array();
    for (const auto& s : stages)
      stages_j.push_back({{"config_hash", s.config_hash},
                          {"expected_data_hash", s.expected_data_hash},
                          {"global_step_after", s.global_step_after},
                          {"task", s.task},
                          {"train_data_hash", s.train_data_hash}});
    json cells_j = json::array();
    for (const auto& c : cells)
      cells_j.push_back({{"eval_task", c.eval_task},
                         {"report", c.report.to_json()},
                         {"stage", c.stage},
                         {"trained_task", c.trained_task}});
    return json{{"format", "ikt.scenario.v1"},
                {"reports", std::move(cells_j)},
                {"spec", spec.to_json()},
                {"stages", std::move(stages_j)}};
  }

  static ScenarioResult from_json(const json& j) {
    if (!j.is_object() || j.value("format", "") != "ikt.scenario.v1")
      throw IoError("format", "not an ikt.scenario.v1 document");
    ScenarioResult r;
    r.spec = ScenarioSpec::from_json(j.at("spec"));
    for (const auto& s : j.at("stages"))
      r.stages.push_back({s.at("task").get<std::string>(),
                          s.at("config_hash").get<std::string>(),
                          s.at("train_data_hash").get<std::string>(),
                          s.at("expected_data_hash").get<std::string>(),
                          s.at("global_step_after").get<std::uint64_t>()});
    for (const auto& c : j.at("reports"))
      r.cells.push_back({c.at("stage").get<std::size_t>(),
                         c.at("trained_task").get<std::string>(),
                         c.at("eval_task").get<std::string>(),
                         EvalReport::from_json(c.at("report"))});
    return r;
  }

  std::string to_csv() const { return cells_to_csv(cells); }
};

namespace detail {

inline const TaskDataset& require_task(
    const std::map<std::string, TaskDataset>& datasets,
    const std::string& id) {
  auto it = datasets.find(id);
  if (it == datasets.end())
    throw DataError("missing-task", "task '" + id + "' not in datasets");
  return it->second;
}

}  // namespace detail

// Sequential continual learning: stage i trains on task i starting from the
// stage i-1 checkpoint, then the held-out folds of tasks 1..i are scored.
// Each stage's consumed-row digest is checked against an independently
// derived digest of that task's training folds: earlier tasks' data is never
// read again.
inline ScenarioResult run_scenario(
    const ScenarioSpec& spec, const std::map<std::string, TaskDataset>& datasets) {
  spec.validate();
  for (const auto& t : spec.tasks) detail::require_task(datasets, t);

  ScenarioResult result;
  result.spec = spec;
  for (std::size_t i = 0; i < spec.tasks.size(); ++i) {
    const TaskDataset& ds = detail::require_task(datasets, spec.tasks[i]);
    train::TrainResult tr;
    try {
      tr = i == 0 ? train::train_task(spec.model, ds, spec.folds, spec.train_cfg)
                  : train::train_task(result.checkpoints.back(), ds, spec.folds,
                                      spec.train_cfg);
    } catch (const DataError& e) {
      throw DataError(e.kind(), "stage " + std::to_string(i + 1) + " (task '" +
                                    spec.tasks[i] + "'): " + e.what());
    }

    const std::string expected = train::training_fold_digest(
        ds, seqgen::task_folds(ds, spec.folds.k, spec.train_cfg.seed),
        spec.folds.test_fold);
    const std::string got = tr.checkpoint.provenance.back().train_data_hash;
    if (got != expected)
      throw DataError("data-isolation",
                      "stage " + std::to_string(i + 1) +
                          " consumed rows outside its training folds");

    result.stages.push_back({spec.tasks[i],
                             tr.checkpoint.provenance.back().config_hash, got,
                             expected, tr.checkpoint.global_step});
    for (std::size_t j = 0; j <= i; ++j) {
      const TaskDataset& eval_ds = detail::require_task(datasets, spec.tasks[j]);
      EvalReport report = metrics::evaluate_checkpoint(
          tr.checkpoint, eval_ds, spec.folds, spec.train_cfg.seed);
      result.cells.push_back({i + 1, spec.tasks[i], spec.tasks[j], report});
    }
    result.histories.push_back(std::move(tr.history));
    result.checkpoints.push_back(std::move(tr.checkpoint));
  }
  return result;
}

struct DisjointResult {
  std::vector<Cell> cells;  // train task major, eval task minor
  std::vector<train::Checkpoint> checkpoints;

  const EvalReport* find(const std::string& trained,
                         const std::string& eval_task) const {
    for (const auto& c : cells)
      if (c.trained_task == trained && c.eval_task == eval_task)
        return &c.report;
    return nullptr;
  }

  std::string to_csv() const { return cells_to_csv(cells); }
};

// One fresh model per task, each evaluated on every task's held-out fold.
inline DisjointResult run_disjoint(
    const std::vector<std::string>& tasks,
    const std::map<std::string, TaskDataset>& datasets,
    const sakt::SAKTConfig& model_cfg, const train::TrainConfig& train_cfg,
    const train::FoldSpec& folds) {
  if (tasks.empty())
    throw ConfigError("parameter", "disjoint run needs at least one task");
  DisjointResult result;
  for (const auto& train_id : tasks) {
    const TaskDataset& train_ds = detail::require_task(datasets, train_id);
    auto tr = train::train_task(model_cfg, train_ds, folds, train_cfg);
    for (const auto& eval_id : tasks) {
      const TaskDataset& eval_ds = detail::require_task(datasets, eval_id);
      EvalReport report = metrics::evaluate_checkpoint(tr.checkpoint, eval_ds,
                                                       folds, train_cfg.seed);
      result.cells.push_back({1, train_id, eval_id, report});
    }
    result.checkpoints.push_back(std::move(tr.checkpoint));
  }
  return result;
}

struct JointResult {
  train::Checkpoint checkpoint;
  std::vector<Cell> cells;  // one per task

  std::string to_csv() const { return cells_to_csv(cells); }
};

// Upper-bound baseline: one model over the union of every task's training
// folds (a single shuffled pool per epoch), scored per task.
inline JointResult run_joint(const std::vector<std::string>& tasks,
                             const std::map<std::string, TaskDataset>& datasets,
                             const sakt::SAKTConfig& model_cfg,
                             const train::TrainConfig& train_cfg,
                             const train::FoldSpec& folds) {
  if (tasks.empty())
    throw ConfigError("parameter", "joint run needs at least one task");
  model_cfg.validate();
  train_cfg.validate();
  folds.validate();

  seqgen::ProblemRegistry registry(model_cfg.v_cap);
  for (const auto& id : tasks)
    seqgen::extend_registry(registry, detail::require_task(datasets, id));

  std::vector<seqgen::TrainingInstance> instances;
  std::vector<std::string> hash_lines;
  std::string pooled_name;
  for (const auto& id : tasks) {
    const TaskDataset& ds = detail::require_task(datasets, id);
    auto fa = seqgen::task_folds(ds, folds.k, train_cfg.seed);
    train::detail::collect_training_instances(ds, registry, model_cfg, fa,
                                              folds.test_fold, instances,
                                              hash_lines);
    pooled_name += (pooled_name.empty() ? "" : "+") + id;
  }
  if (instances.empty())
    throw DataError("empty-task", "joint pool has no trainable positions");

  auto model = sakt::init_model(model_cfg, train_cfg.seed);
  std::uint64_t global_step = 0;
  train::detail::train_core(model, instances, train_cfg, global_step);

  JointResult result;
  result.checkpoint = train::checkpoint_from_model(
      model, registry, global_step,
      {{"joint(" + pooled_name + ")",
        train::run_config_hash(model_cfg, train_cfg, folds),
        ingest::records_digest(std::move(hash_lines))}});
  for (const auto& id : tasks) {
    const TaskDataset& ds = detail::require_task(datasets, id);
    EvalReport report = metrics::evaluate_checkpoint(result.checkpoint, ds,
                                                     folds, train_cfg.seed);
    result.cells.push_back({1, "joint(" + pooled_name + ")", id, report});
  }
  return result;
}

// Pairwise transfer probes: each pair runs as a two-stage scenario.
inline std::vector<ScenarioResult> run_ablation(
    const std::vector<std::pair<std::string, std::string>>& pairs,
    const std::map<std::string, TaskDataset>& datasets,
    const sakt::SAKTConfig& model_cfg, const train::TrainConfig& train_cfg,
    const train::FoldSpec& folds) {
  std::vector<ScenarioResult> out;
  for (const auto& [first, second] : pairs) {
    if (first == second)
      throw ConfigError("parameter",
                        "ablation pair tasks must be distinct ('" + first +
                            "' repeated)");
    ScenarioSpec spec;
    spec.tasks = {first, second};
    spec.model = model_cfg;
    spec.train_cfg = train_cfg;
    spec.folds = folds;
    out.push_back(run_scenario(spec, datasets));
  }
  return out;
}

struct ForgettingDelta {
  std::string task;
  std::size_t stage = 0;  // later stage the deltas refer to
  std::optional<double> d_acc, d_auroc, d_auprc;
};

// Per task: metric movement at every later stage relative to that task's
// first post-training evaluation.
inline std::vector<ForgettingDelta> forgetting_summary(
    const ScenarioResult& result) {
  std::vector<ForgettingDelta> out;
  const auto& tasks = result.spec.tasks;
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    const EvalReport* base = result.find(j + 1, tasks[j]);
    if (!base) continue;
    for (std::size_t i = j + 1; i < tasks.size(); ++i) {
      const EvalReport* later = result.find(i + 1, tasks[j]);
      if (!later) continue;
      ForgettingDelta d;
      d.task = tasks[j];
      d.stage = i + 1;
      d.d_acc = later->acc - base->acc;
      if (base->auroc && later->auroc) d.d_auroc = *later->auroc - *base->auroc;
      if (base->auprc && later->auprc) d.d_auprc = *later->auprc - *base->auprc;
      out.push_back(std::move(d));
    }
  }
  return out;
}

inline std::string forgetting_to_csv(const std::vector<ForgettingDelta>& deltas) {
  auto opt = [](const std::optional<double>& v) {
    return v ? metrics::format_double(*v) : std::string{};
  };
  std::string out = "task,stage,delta_acc,delta_auroc,delta_auprc\n";
  for (const auto& d : deltas)
    out += d.task + "," + std::to_string(d.stage) + "," + opt(d.d_acc) + "," +
           opt(d.d_auroc) + "," + opt(d.d_auprc) + "\n";
  return out;
}

}  // namespace ikt::continual
