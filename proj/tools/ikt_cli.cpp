// ikt: incremental knowledge tracing workbench.
//
// Subcommands: ingest, stats, train, scenario, disjoint, joint, ablation,
// tsne, report. Every command writes a manifest.json (resolved config, config
// hash, seed, input hashes) sufficient to reproduce its outputs byte for
// byte.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikt/continual.hpp"
#include "ikt/drift.hpp"
#include "ikt/error.hpp"
#include "ikt/eval.hpp"
#include "ikt/ingest.hpp"
#include "ikt/metrics.hpp"
#include "ikt/svg.hpp"
#include "ikt/train.hpp"
#include "ikt/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ikt;

namespace {

struct Options {
  // sources
  std::vector<std::string> data_files;
  bool synthetic = false;
  std::string cache_dir;
  std::string out_dir;
  std::string schools_csv;
  std::string scenario_csv;
  std::string pairs_csv;
  std::string checkpoint_path;
  std::string school;
  std::string scenario_json;

  // parsing
  std::string delimiter = ",";
  bool lenient = false;
  ingest::ColumnMap columns;

  // synthetic spec
  ingest::SyntheticSpec synth;

  // model / training
  sakt::SAKTConfig model;
  train::TrainConfig train_cfg;
  train::FoldSpec folds;
  bool average_folds = false;
  bool no_shuffle = false;
  std::uint64_t seed = 1;

  // tsne
  drift::TsneConfig tsne;

  std::map<std::string, std::string> input_hashes;

  void finalize() {
    train_cfg.seed = seed;
    train_cfg.shuffle = !no_shuffle;
    synth.seed = seed;
    tsne.seed = seed;
  }
};

std::vector<std::string> split_csv(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("io", "cannot write '" + path.string() + "'");
  out << content;
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("io", "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return hash_hex(fnv1a64(bytes));
}

fs::path ensure_out_dir(const Options& opt) {
  if (opt.out_dir.empty())
    throw ConfigError("parameter", "--out is required for this command");
  fs::path dir(opt.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("io", "cannot create '" + dir.string() + "'");
  return dir;
}

json model_train_json(const Options& opt) {
  return json{{"folds", opt.folds.to_json()},
              {"model", opt.model.to_json()},
              {"train", opt.train_cfg.to_json()}};
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const json& config, const Options& opt) {
  json inputs = json::object();
  for (const auto& [path, digest] : opt.input_hashes) inputs[path] = digest;
  json manifest{{"command", command},
                {"config", config},
                {"config_hash", hash_hex(fnv1a64(config.dump()))},
                {"inputs", std::move(inputs)},
                {"seed", opt.seed},
                {"version", ikt::kVersion}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string stats_csv(const std::vector<std::string>& order,
                      const std::map<std::string, ingest::TaskDataset>& sets) {
  std::string out = "school,learners,unique_problems,responses\n";
  for (const auto& id : order) {
    auto s = ingest::dataset_stats(sets.at(id));
    out += id + "," + std::to_string(s.num_learners) + "," +
           std::to_string(s.num_unique_problems) + "," +
           std::to_string(s.num_responses) + "\n";
  }
  return out;
}

// Dataset cache: dataset_<school>.json files in one directory.
std::map<std::string, ingest::TaskDataset> load_cache(
    Options& opt, const std::vector<std::string>& wanted) {
  if (opt.cache_dir.empty())
    throw ConfigError("parameter", "--cache is required for this command");
  fs::path dir(opt.cache_dir);
  std::map<std::string, ingest::TaskDataset> sets;
  if (wanted.empty()) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir))
      throw IoError("io", "cache directory '" + dir.string() + "' not found");
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("dataset_", 0) == 0 && name.ends_with(".json"))
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto ds = ingest::load_dataset(f);
      opt.input_hashes[f.string()] = file_digest(f);
      sets.emplace(ds.school_id, std::move(ds));
    }
    if (sets.empty())
      throw IoError("io", "no dataset_*.json files in '" + dir.string() + "'");
  } else {
    for (const auto& id : wanted) {
      fs::path f = dir / ("dataset_" + id + ".json");
      if (!fs::exists(f))
        throw DataError("missing-task",
                        "no cached dataset for school '" + id + "' (" +
                            f.string() + ")");
      auto ds = ingest::load_dataset(f);
      opt.input_hashes[f.string()] = file_digest(f);
      sets.emplace(ds.school_id, std::move(ds));
    }
  }
  return sets;
}

std::vector<std::string> cache_school_order(
    const std::map<std::string, ingest::TaskDataset>& sets) {
  std::vector<std::string> out;
  for (const auto& [id, _] : sets) out.push_back(id);
  return out;
}

json cells_json(const std::vector<continual::Cell>& cells) {
  json arr = json::array();
  for (const auto& c : cells)
    arr.push_back({{"eval_task", c.eval_task},
                   {"report", c.report.to_json()},
                   {"stage", c.stage},
                   {"trained_task", c.trained_task}});
  return arr;
}

// --- command bodies -------------------------------------------------------

int cmd_ingest(Options& opt) {
  auto dir = ensure_out_dir(opt);
  std::map<std::string, ingest::TaskDataset> sets;
  std::vector<std::string> order = split_csv(opt.schools_csv);

  if (opt.synthetic) {
    auto all = ingest::generate_synthetic(opt.synth);
    if (order.empty()) {
      sets = std::move(all);
      order = cache_school_order(sets);
    } else {
      for (const auto& id : order) {
        auto it = all.find(id);
        if (it == all.end())
          throw DataError("missing-task",
                          "synthetic school '" + id + "' does not exist");
        sets.emplace(id, it->second);
      }
    }
  } else {
    if (opt.data_files.empty())
      throw ConfigError("parameter", "need --data <csv> or --synthetic");
    std::vector<ingest::InteractionRecord> records;
    std::size_t skipped = 0;
    ingest::ParseOptions popt;
    popt.delimiter = opt.delimiter.empty() ? ',' : opt.delimiter[0];
    popt.lenient = opt.lenient;
    popt.columns = opt.columns;
    for (const auto& f : opt.data_files) {
      auto res = ingest::parse_records_file(f, popt);
      opt.input_hashes[f] = file_digest(f);
      skipped += res.skipped_rows;
      records.insert(records.end(), res.records.begin(), res.records.end());
    }
    if (skipped > 0)
      std::cerr << "note: skipped " << skipped << " malformed row(s)\n";
    if (order.empty())
      throw ConfigError("parameter", "--schools is required with --data");
    sets = ingest::partition_by_school(records, order);
  }

  for (const auto& [id, ds] : sets)
    ingest::save_dataset(ds, dir / ("dataset_" + id + ".json"));
  const std::string csv = stats_csv(order, sets);
  write_file(dir / "stats.csv", csv);
  std::cout << csv;

  json config{{"columns",
               {{"correct", opt.columns.correct},
                {"problem", opt.columns.problem},
                {"school", opt.columns.school},
                {"user", opt.columns.user}}},
              {"delimiter", opt.delimiter},
              {"lenient", opt.lenient},
              {"schools", order},
              {"synthetic", opt.synthetic}};
  if (opt.synthetic)
    config["synthetic_spec"] =
        json{{"noise_rate", opt.synth.noise_rate},
             {"num_schools", opt.synth.num_schools},
             {"overlap_fraction", opt.synth.overlap_fraction},
             {"problems_per_school", opt.synth.problems_per_school},
             {"responses_per_user", opt.synth.responses_per_user},
             {"rule", opt.synth.rule},
             {"seed", opt.synth.seed},
             {"users_per_school", opt.synth.users_per_school}};
  write_manifest(dir, "ingest", config, opt);
  return 0;
}

int cmd_stats(Options& opt) {
  auto sets = load_cache(opt, split_csv(opt.schools_csv));
  auto order = cache_school_order(sets);
  const std::string csv = stats_csv(order, sets);
  std::cout << csv;
  if (!opt.out_dir.empty()) {
    auto dir = ensure_out_dir(opt);
    write_file(dir / "stats.csv", csv);
    write_manifest(dir, "stats", json{{"schools", order}}, opt);
  }
  return 0;
}

int cmd_train(Options& opt) {
  if (opt.school.empty())
    throw ConfigError("parameter", "--school is required");
  auto dir = ensure_out_dir(opt);
  auto sets = load_cache(opt, {opt.school});
  const auto& ds = sets.at(opt.school);

  std::optional<train::Checkpoint> start;
  if (!opt.checkpoint_path.empty()) {
    start = train::load_checkpoint(opt.checkpoint_path);
    opt.input_hashes[opt.checkpoint_path] = file_digest(opt.checkpoint_path);
  }

  auto run_fold = [&](std::size_t fold) {
    train::FoldSpec fspec = opt.folds;
    fspec.test_fold = fold;
    return start ? train::train_task(*start, ds, fspec, opt.train_cfg)
                 : train::train_task(opt.model, ds, fspec, opt.train_cfg);
  };

  auto primary = run_fold(opt.folds.test_fold);
  metrics::EvalReport report = metrics::evaluate_checkpoint(
      primary.checkpoint, ds, opt.folds, opt.train_cfg.seed);

  if (opt.average_folds) {
    std::vector<metrics::EvalReport> reports;
    for (std::size_t f = 0; f < opt.folds.k; ++f) {
      if (f == opt.folds.test_fold) {
        reports.push_back(report);
        continue;
      }
      auto r = run_fold(f);
      train::FoldSpec fspec = opt.folds;
      fspec.test_fold = f;
      reports.push_back(metrics::evaluate_checkpoint(r.checkpoint, ds, fspec,
                                                     opt.train_cfg.seed));
    }
    report = metrics::average_reports(reports);
  }

  train::save_checkpoint(primary.checkpoint, dir / "checkpoint.ckpt");
  write_file(dir / "history.csv", primary.history.to_csv());
  write_file(dir / "eval.json", report.to_json().dump(2) + "\n");
  std::cout << "task " << opt.school << ": " << report.to_json().dump()
            << "\n";

  json config = model_train_json(opt);
  config["average_folds"] = opt.average_folds;
  config["school"] = opt.school;
  config["from_checkpoint"] = opt.checkpoint_path;
  write_manifest(dir, "train", config, opt);
  return 0;
}

void write_scenario_outputs(const fs::path& dir,
                            const continual::ScenarioResult& result) {
  write_file(dir / "scenario.json", result.to_json().dump(2) + "\n");
  write_file(dir / "reports.csv", result.to_csv());
  write_file(
      dir / "forgetting.csv",
      continual::forgetting_to_csv(continual::forgetting_summary(result)));

  const auto& tasks = result.spec.tasks;
  std::vector<std::string> stage_labels;
  for (std::size_t i = 0; i < tasks.size(); ++i)
    stage_labels.push_back("stage " + std::to_string(i + 1) + " (" + tasks[i] +
                           ")");

  const std::vector<std::string> panels{"ACC", "AUROC", "AUPRC"};
  std::vector<std::vector<std::vector<std::optional<double>>>> bars(
      panels.size(),
      std::vector<std::vector<std::optional<double>>>(
          stage_labels.size(),
          std::vector<std::optional<double>>(tasks.size())));
  std::vector<std::vector<std::optional<double>>> lines(
      tasks.size(), std::vector<std::optional<double>>(stage_labels.size()));
  for (const auto& c : result.cells) {
    const std::size_t s = c.stage - 1;
    const std::size_t t = static_cast<std::size_t>(
        std::find(tasks.begin(), tasks.end(), c.eval_task) - tasks.begin());
    bars[0][s][t] = c.report.acc;
    bars[1][s][t] = c.report.auroc;
    bars[2][s][t] = c.report.auprc;
    lines[t][s] = c.report.auroc;
  }
  write_file(dir / "metrics_bars.svg",
             svg::grouped_bars("Metrics per task per stage", panels, tasks,
                               stage_labels, bars));
  write_file(dir / "auroc_lines.svg",
             svg::lines("AUROC across stages", stage_labels, tasks, lines));
}

continual::ScenarioSpec scenario_spec_from(const Options& opt,
                                           std::vector<std::string> tasks) {
  continual::ScenarioSpec spec;
  spec.tasks = std::move(tasks);
  spec.model = opt.model;
  spec.train_cfg = opt.train_cfg;
  spec.folds = opt.folds;
  return spec;
}

// Averages scenario evaluation cells over all k test folds; stages and
// checkpoints come from the configured fold's run.
continual::ScenarioResult run_scenario_maybe_averaged(
    const Options& opt, const continual::ScenarioSpec& spec,
    const std::map<std::string, ingest::TaskDataset>& sets) {
  auto primary = continual::run_scenario(spec, sets);
  if (!opt.average_folds) return primary;
  std::vector<continual::ScenarioResult> all{primary};
  for (std::size_t f = 0; f < spec.folds.k; ++f) {
    if (f == spec.folds.test_fold) continue;
    auto s2 = spec;
    s2.folds.test_fold = f;
    all.push_back(continual::run_scenario(s2, sets));
  }
  for (std::size_t c = 0; c < primary.cells.size(); ++c) {
    std::vector<metrics::EvalReport> reports;
    for (const auto& r : all) reports.push_back(r.cells[c].report);
    primary.cells[c].report = metrics::average_reports(reports);
  }
  return primary;
}

int cmd_scenario(Options& opt) {
  auto tasks = split_csv(opt.scenario_csv);
  if (tasks.empty())
    throw ConfigError("parameter", "--scenario a,b,c is required");
  auto dir = ensure_out_dir(opt);
  auto sets = load_cache(opt, tasks);
  auto spec = scenario_spec_from(opt, tasks);
  auto result = run_scenario_maybe_averaged(opt, spec, sets);

  write_scenario_outputs(dir, result);
  for (std::size_t i = 0; i < result.checkpoints.size(); ++i)
    train::save_checkpoint(
        result.checkpoints[i],
        dir / ("checkpoint_stage" + std::to_string(i + 1) + ".ckpt"));
  for (std::size_t i = 0; i < result.histories.size(); ++i)
    write_file(dir / ("history_stage" + std::to_string(i + 1) + ".csv"),
               result.histories[i].to_csv());
  std::cout << result.to_csv();

  json config = model_train_json(opt);
  config["average_folds"] = opt.average_folds;
  config["scenario"] = tasks;
  write_manifest(dir, "scenario", config, opt);
  return 0;
}

int cmd_disjoint(Options& opt) {
  auto tasks = split_csv(opt.schools_csv);
  auto dir = ensure_out_dir(opt);
  auto sets = load_cache(opt, tasks);
  if (tasks.empty()) tasks = cache_school_order(sets);

  auto run_once = [&](const train::FoldSpec& fspec) {
    return continual::run_disjoint(tasks, sets, opt.model, opt.train_cfg,
                                   fspec);
  };
  auto result = run_once(opt.folds);
  if (opt.average_folds) {
    std::vector<continual::DisjointResult> all{result};
    for (std::size_t f = 0; f < opt.folds.k; ++f) {
      if (f == opt.folds.test_fold) continue;
      train::FoldSpec fspec = opt.folds;
      fspec.test_fold = f;
      all.push_back(run_once(fspec));
    }
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
      std::vector<metrics::EvalReport> reports;
      for (const auto& r : all) reports.push_back(r.cells[c].report);
      result.cells[c].report = metrics::average_reports(reports);
    }
  }

  write_file(dir / "disjoint.csv", result.to_csv());
  write_file(dir / "disjoint.json",
             json{{"format", "ikt.disjoint.v1"},
                  {"reports", cells_json(result.cells)},
                  {"spec", model_train_json(opt)},
                  {"tasks", tasks}}
                     .dump(2) +
                 "\n");
  std::cout << result.to_csv();

  json config = model_train_json(opt);
  config["average_folds"] = opt.average_folds;
  config["schools"] = tasks;
  write_manifest(dir, "disjoint", config, opt);
  return 0;
}

int cmd_joint(Options& opt) {
  auto tasks = split_csv(opt.schools_csv);
  auto dir = ensure_out_dir(opt);
  auto sets = load_cache(opt, tasks);
  if (tasks.empty()) tasks = cache_school_order(sets);

  auto run_once = [&](const train::FoldSpec& fspec) {
    return continual::run_joint(tasks, sets, opt.model, opt.train_cfg, fspec);
  };
  auto result = run_once(opt.folds);
  if (opt.average_folds) {
    std::vector<continual::JointResult> all{result};
    for (std::size_t f = 0; f < opt.folds.k; ++f) {
      if (f == opt.folds.test_fold) continue;
      train::FoldSpec fspec = opt.folds;
      fspec.test_fold = f;
      all.push_back(run_once(fspec));
    }
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
      std::vector<metrics::EvalReport> reports;
      for (const auto& r : all) reports.push_back(r.cells[c].report);
      result.cells[c].report = metrics::average_reports(reports);
    }
  }

  write_file(dir / "joint.csv", result.to_csv());
  write_file(dir / "joint.json",
             json{{"format", "ikt.joint.v1"},
                  {"reports", cells_json(result.cells)},
                  {"spec", model_train_json(opt)},
                  {"tasks", tasks}}
                     .dump(2) +
                 "\n");
  train::save_checkpoint(result.checkpoint, dir / "checkpoint.ckpt");
  std::cout << result.to_csv();

  json config = model_train_json(opt);
  config["average_folds"] = opt.average_folds;
  config["schools"] = tasks;
  write_manifest(dir, "joint", config, opt);
  return 0;
}

int cmd_ablation(Options& opt) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& chunk : split_csv(opt.pairs_csv)) {
    auto parts = split_csv(chunk, ':');
    if (parts.size() != 2)
      throw ConfigError("parameter",
                        "--pairs wants entries like 1998:5049, got '" + chunk +
                            "'");
    pairs.emplace_back(parts[0], parts[1]);
  }
  if (pairs.empty())
    throw ConfigError("parameter", "--pairs a:b[,c:d] is required");

  auto dir = ensure_out_dir(opt);
  std::vector<std::string> involved;
  for (const auto& [a, b] : pairs) {
    involved.push_back(a);
    involved.push_back(b);
  }
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()),
                 involved.end());
  auto sets = load_cache(opt, involved);

  auto results = continual::run_ablation(pairs, sets, opt.model, opt.train_cfg,
                                         opt.folds);

  std::string csv = std::string("pair,") + continual::kReportCsvHeader + "\n";
  std::string deltas_csv =
      "pair,task,stage,delta_acc,delta_auroc,delta_auprc\n";
  json blocks = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string pair_name = pairs[i].first + ":" + pairs[i].second;
    for (const auto& c : results[i].cells)
      csv += pair_name + "," + c.eval_task + "," + c.trained_task + "," +
             c.report.csv_fields() + "\n";
    for (const auto& d : continual::forgetting_summary(results[i])) {
      auto optf = [](const std::optional<double>& v) {
        return v ? metrics::format_double(*v) : std::string{};
      };
      deltas_csv += pair_name + "," + d.task + "," + std::to_string(d.stage) +
                    "," + optf(d.d_acc) + "," + optf(d.d_auroc) + "," +
                    optf(d.d_auprc) + "\n";
    }
    blocks.push_back(
        {{"pair", pair_name}, {"reports", cells_json(results[i].cells)}});
  }
  write_file(dir / "ablation.csv", csv);
  write_file(dir / "ablation_deltas.csv", deltas_csv);
  write_file(dir / "ablation.json",
             json{{"format", "ikt.ablation.v1"},
                  {"pairs", blocks},
                  {"spec", model_train_json(opt)}}
                     .dump(2) +
                 "\n");
  std::cout << deltas_csv;

  json config = model_train_json(opt);
  config["pairs"] = opt.pairs_csv;
  write_manifest(dir, "ablation", config, opt);
  return 0;
}

int cmd_tsne(Options& opt) {
  auto dir = ensure_out_dir(opt);
  auto sets = load_cache(opt, split_csv(opt.schools_csv));

  std::size_t total_problems = 0;
  for (const auto& [_, ds] : sets)
    total_problems += ingest::dataset_stats(ds).num_unique_problems;
  seqgen::ProblemRegistry registry(std::max<std::size_t>(total_problems, 1));
  for (const auto& [_, ds] : sets) seqgen::extend_registry(registry, ds);

  auto features = drift::build_features(sets, registry);
  const std::size_t n = features.incidence.rows();
  opt.tsne.validate(n);

  const std::size_t pca_dim =
      std::min({opt.tsne.pca_dim, n, features.incidence.cols()});
  auto pca = drift::pca_reduce(features.incidence, pca_dim);
  if (pca.effective < pca.requested)
    std::cerr << "note: effective rank " << pca.effective << " < requested "
              << pca.requested << "\n";

  auto emb = drift::tsne_embed(pca.scores, opt.tsne, features.row_labels);

  std::string points_csv = "school_id,user_id,x,y\n";
  for (std::size_t i = 0; i < n; ++i)
    points_csv += emb.labels[i].first + "," + emb.labels[i].second + "," +
                  metrics::format_double(emb.points.at(i, 0)) + "," +
                  metrics::format_double(emb.points.at(i, 1)) + "\n";
  write_file(dir / "points.csv", points_csv);
  write_file(dir / "scatter.svg",
             svg::scatter(emb, "Problem-incidence embedding per school"));

  json pairs_mix = json::object();
  auto order = cache_school_order(sets);
  for (std::size_t a = 0; a < order.size(); ++a)
    for (std::size_t b = a + 1; b < order.size(); ++b)
      pairs_mix[order[a] + ":" + order[b]] =
          drift::school_mixing_rate(emb, order[a], order[b], 10);

  json meta{{"explained_ratio", pca.explained_ratio},
            {"final_kl", emb.kl_trace.back()},
            {"mixing_rate_10nn", pairs_mix},
            {"pca_dim_effective", pca.effective},
            {"pca_dim_requested", pca_dim},
            {"points", n},
            {"tsne",
             {{"early_exaggeration", opt.tsne.early_exaggeration},
              {"exaggeration_iters", opt.tsne.exaggeration_iters},
              {"iterations", opt.tsne.iterations},
              {"learning_rate", opt.tsne.learning_rate},
              {"momentum_late", opt.tsne.momentum_late},
              {"momentum_start", opt.tsne.momentum_start},
              {"momentum_switch", opt.tsne.momentum_switch},
              {"perplexity", opt.tsne.perplexity},
              {"seed", opt.tsne.seed}}}};
  write_file(dir / "tsne_meta.json", meta.dump(2) + "\n");
  std::cout << "embedded " << n
            << " learners; mixing rates: " << pairs_mix.dump() << "\n";

  write_manifest(dir, "tsne", meta, opt);
  return 0;
}

int cmd_report(Options& opt) {
  if (opt.scenario_json.empty())
    throw ConfigError("parameter", "--scenario-json is required");
  auto dir = ensure_out_dir(opt);
  std::ifstream in(opt.scenario_json, std::ios::binary);
  if (!in) throw IoError("io", "cannot open '" + opt.scenario_json + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("format", std::string("bad scenario json: ") + e.what());
  }
  auto result = continual::ScenarioResult::from_json(j);
  opt.input_hashes[opt.scenario_json] = file_digest(opt.scenario_json);
  write_scenario_outputs(dir, result);
  std::cout << result.to_csv();
  write_manifest(dir, "report", json{{"scenario_json", opt.scenario_json}},
                 opt);
  return 0;
}

void add_model_flags(CLI::App* sub, Options& opt) {
  sub->add_option("--seq-len", opt.model.max_seq_len, "Sequence window length");
  sub->add_option("--d-model", opt.model.d_model, "Embedding width");
  sub->add_option("--heads", opt.model.num_heads, "Attention heads");
  sub->add_option("--blocks", opt.model.num_blocks, "Attention blocks");
  sub->add_option("--dropout", opt.model.dropout_rate, "Dropout rate");
  sub->add_option("--v-cap", opt.model.v_cap,
                  "Fixed problem-id capacity (token stride)");
  sub->add_option("--ffn-hidden", opt.model.ffn_hidden,
                  "Feed-forward width (0 = d_model)");
}

void add_train_flags(CLI::App* sub, Options& opt) {
  sub->add_option("--epochs", opt.train_cfg.epochs, "Training epochs per task");
  sub->add_option("--batch-size", opt.train_cfg.batch_size, "Batch size");
  sub->add_option("--lr-start", opt.train_cfg.lr_start, "Warmup start rate");
  sub->add_option("--lr-peak", opt.train_cfg.lr_peak, "Post-warmup rate");
  sub->add_option("--warmup-steps", opt.train_cfg.warmup_steps,
                  "Linear warmup steps");
  sub->add_option("--momentum", opt.train_cfg.momentum, "SGD momentum");
  sub->add_flag("--no-shuffle", opt.no_shuffle, "Keep epoch order fixed");
  sub->add_flag("--per-task-warmup", opt.train_cfg.per_task_warmup,
                "Restart warmup at each task");
  sub->add_option("--folds", opt.folds.k, "Cross-validation fold count");
  sub->add_option("--test-fold", opt.folds.test_fold, "Held-out fold index");
  sub->add_flag("--average-folds", opt.average_folds,
                "Average metrics over all folds");
}

void add_cache_flags(CLI::App* sub, Options& opt) {
  sub->add_option("--cache", opt.cache_dir, "Dataset cache directory");
  sub->add_option("--out", opt.out_dir, "Output directory");
  sub->add_option("--seed", opt.seed, "Run seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental knowledge tracing workbench"};
  app.set_version_flag("--version", std::string("ikt ") + ikt::kVersion);
  app.set_config("--config", "", "Read options from an INI/TOML file");
  app.require_subcommand(1);

  Options opt;

  auto* sub_ingest = app.add_subcommand("ingest", "Parse data into the cache");
  sub_ingest->add_option("--data", opt.data_files, "Interaction CSV file(s)");
  sub_ingest->add_option("--schools", opt.schools_csv,
                         "Comma-separated school ids");
  sub_ingest->add_option("--delimiter", opt.delimiter, "Field delimiter");
  sub_ingest->add_flag("--lenient", opt.lenient,
                       "Skip malformed rows instead of failing");
  sub_ingest->add_option("--col-user", opt.columns.user, "User id column");
  sub_ingest->add_option("--col-problem", opt.columns.problem,
                         "Problem id column");
  sub_ingest->add_option("--col-school", opt.columns.school,
                         "School id column");
  sub_ingest->add_option("--col-correct", opt.columns.correct,
                         "Correctness column");
  sub_ingest->add_flag("--synthetic", opt.synthetic,
                       "Generate a synthetic fixture instead of parsing");
  sub_ingest->add_option("--num-schools", opt.synth.num_schools,
                         "Synthetic: school count");
  sub_ingest->add_option("--users", opt.synth.users_per_school,
                         "Synthetic: learners per school");
  sub_ingest->add_option("--problems", opt.synth.problems_per_school,
                         "Synthetic: problems per school");
  sub_ingest->add_option("--responses", opt.synth.responses_per_user,
                         "Synthetic: responses per learner");
  sub_ingest->add_option("--overlap", opt.synth.overlap_fraction,
                         "Synthetic: shared-vocabulary fraction");
  sub_ingest->add_option("--noise", opt.synth.noise_rate,
                         "Synthetic: label noise rate");
  sub_ingest->add_option("--rule", opt.synth.rule, "Synthetic: labeling rule");
  add_cache_flags(sub_ingest, opt);

  auto* sub_stats = app.add_subcommand("stats", "Dataset characteristics");
  sub_stats->add_option("--schools", opt.schools_csv,
                        "Comma-separated school ids (default: all cached)");
  add_cache_flags(sub_stats, opt);

  auto* sub_train = app.add_subcommand("train", "Train on a single task");
  sub_train->add_option("--school", opt.school, "Task (school id) to train on");
  sub_train->add_option("--checkpoint", opt.checkpoint_path,
                        "Continue from this checkpoint");
  add_cache_flags(sub_train, opt);
  add_model_flags(sub_train, opt);
  add_train_flags(sub_train, opt);

  auto* sub_scenario =
      app.add_subcommand("scenario", "Sequential continual-learning run");
  sub_scenario->add_option("--scenario", opt.scenario_csv,
                           "Ordered task list, e.g. 1998,5117,5049");
  add_cache_flags(sub_scenario, opt);
  add_model_flags(sub_scenario, opt);
  add_train_flags(sub_scenario, opt);

  auto* sub_disjoint = app.add_subcommand(
      "disjoint", "Per-task training, full cross-evaluation");
  sub_disjoint->add_option("--schools", opt.schools_csv,
                           "Comma-separated school ids (default: all cached)");
  add_cache_flags(sub_disjoint, opt);
  add_model_flags(sub_disjoint, opt);
  add_train_flags(sub_disjoint, opt);

  auto* sub_joint =
      app.add_subcommand("joint", "Pooled training over all tasks");
  sub_joint->add_option("--schools", opt.schools_csv,
                        "Comma-separated school ids (default: all cached)");
  add_cache_flags(sub_joint, opt);
  add_model_flags(sub_joint, opt);
  add_train_flags(sub_joint, opt);

  auto* sub_ablation =
      app.add_subcommand("ablation", "Two-task transfer probes");
  sub_ablation->add_option("--pairs", opt.pairs_csv,
                           "Pairs like 1998:5049,5117:5049");
  add_cache_flags(sub_ablation, opt);
  add_model_flags(sub_ablation, opt);
  add_train_flags(sub_ablation, opt);

  auto* sub_tsne =
      app.add_subcommand("tsne", "Problem-incidence drift embedding");
  sub_tsne->add_option("--schools", opt.schools_csv,
                       "Comma-separated school ids (default: all cached)");
  sub_tsne->add_option("--perplexity", opt.tsne.perplexity, "t-SNE perplexity");
  sub_tsne->add_option("--iterations", opt.tsne.iterations,
                       "t-SNE iterations");
  sub_tsne->add_option("--pca-dim", opt.tsne.pca_dim,
                       "PCA dimensions before t-SNE");
  sub_tsne->add_option("--tsne-lr", opt.tsne.learning_rate,
                       "t-SNE learning rate");
  add_cache_flags(sub_tsne, opt);

  auto* sub_report = app.add_subcommand(
      "report", "Re-render tables and charts from a result");
  sub_report->add_option("--scenario-json", opt.scenario_json,
                         "scenario.json produced by the scenario command");
  add_cache_flags(sub_report, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    opt.finalize();
    if (*sub_ingest) return cmd_ingest(opt);
    if (*sub_stats) return cmd_stats(opt);
    if (*sub_train) return cmd_train(opt);
    if (*sub_scenario) return cmd_scenario(opt);
    if (*sub_disjoint) return cmd_disjoint(opt);
    if (*sub_joint) return cmd_joint(opt);
    if (*sub_ablation) return cmd_ablation(opt);
    if (*sub_tsne) return cmd_tsne(opt);
    if (*sub_report) return cmd_report(opt);
    std::cerr << "error: no command\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error (" << e.kind() << "): " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
