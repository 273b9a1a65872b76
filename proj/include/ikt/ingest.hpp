#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikt/error.hpp"
#include "ikt/rng.hpp"

namespace ikt::ingest {

using json = nlohmann::json;

// One learner-problem attempt. Identifiers are opaque strings; order_index
// is the row's position within its (school, user) history, dense from 0.
struct InteractionRecord {
  std::string user_id;
  std::string problem_id;
  std::string school_id;
  int correct = 0;
  std::size_t order_index = 0;

  bool operator==(const InteractionRecord&) const = default;
};

// All records of one school, grouped per learner in chronological order.
struct TaskDataset {
  std::string school_id;
  std::map<std::string, std::vector<InteractionRecord>> users;

  std::size_t num_records() const {
    std::size_t n = 0;
    for (const auto& [_, recs] : users) n += recs.size();
    return n;
  }
};

struct DatasetStats {
  std::size_t num_learners = 0;
  std::size_t num_unique_problems = 0;
  std::size_t num_responses = 0;

  bool operator==(const DatasetStats&) const = default;
};

struct ColumnMap {
  std::string user = "user_id";
  std::string problem = "problem_id";
  std::string school = "school_id";
  std::string correct = "correct";
};

struct ParseOptions {
  char delimiter = ',';
  bool lenient = false;  // skip malformed rows instead of aborting
  ColumnMap columns;
};

struct ParseResult {
  std::vector<InteractionRecord> records;
  std::size_t skipped_rows = 0;
};

namespace detail {

// Splits delimited text into rows of fields. Handles quoted fields with ""
// escapes, embedded delimiters/newlines inside quotes, and CRLF endings.
inline std::vector<std::vector<std::string>> tokenize_delimited(
    const std::string& text, char delim) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;

  auto end_field = [&]() {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      in_quotes = true;
      row_has_content = true;
    } else if (c == delim) {
      end_field();
      row_has_content = true;
    } else if (c == '\n') {
      if (row_has_content || !field.empty()) end_row();
    } else if (c == '\r') {
      // swallowed; the following \n (if any) terminates the row
      if (i + 1 >= text.size() || text[i + 1] != '\n') {
        if (row_has_content || !field.empty()) end_row();
      }
    } else {
      field += c;
      row_has_content = true;
    }
  }
  if (row_has_content || !field.empty()) end_row();
  return rows;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Accepts "0"/"1" and trivial float spellings of them ("0.0", "1.0").
inline bool parse_binary(const std::string& raw, int& out) {
  std::string s = trim(raw);
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) return false;
    if (v == 0.0) {
      out = 0;
      return true;
    }
    if (v == 1.0) {
      out = 1;
      return true;
    }
    return false;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

inline ParseResult parse_records(const std::string& text,
                                 const ParseOptions& opt = {}) {
  ParseResult result;
  auto rows = detail::tokenize_delimited(text, opt.delimiter);
  if (rows.empty()) return result;  // empty stream: empty list, not an error

  const auto& header = rows.front();
  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (detail::trim(header[j]) == name) return j;
    throw ConfigError("schema", "required column '" + name +
                                    "' not found in header");
  };
  const std::size_t ci_user = find_col(opt.columns.user);
  const std::size_t ci_problem = find_col(opt.columns.problem);
  const std::size_t ci_school = find_col(opt.columns.school);
  const std::size_t ci_correct = find_col(opt.columns.correct);
  const std::size_t need =
      std::max({ci_user, ci_problem, ci_school, ci_correct}) + 1;

  std::map<std::pair<std::string, std::string>, std::size_t> next_order;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    std::string why;
    InteractionRecord rec;
    if (row.size() < need) {
      why = "expected at least " + std::to_string(need) + " fields, got " +
            std::to_string(row.size());
    } else {
      rec.user_id = detail::trim(row[ci_user]);
      rec.problem_id = detail::trim(row[ci_problem]);
      rec.school_id = detail::trim(row[ci_school]);
      if (rec.user_id.empty() || rec.problem_id.empty() ||
          rec.school_id.empty())
        why = "empty identifier field";
      else if (!detail::parse_binary(row[ci_correct], rec.correct))
        why = "correct value '" + detail::trim(row[ci_correct]) +
              "' is not binary";
    }
    if (!why.empty()) {
      if (opt.lenient) {
        ++result.skipped_rows;
        continue;
      }
      throw DataError("row", "row " + std::to_string(r + 1) + ": " + why);
    }
    rec.order_index = next_order[{rec.school_id, rec.user_id}]++;
    result.records.push_back(std::move(rec));
  }
  return result;
}

inline ParseResult parse_records(std::istream& in, const ParseOptions& opt = {}) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_records(buf.str(), opt);
}

inline ParseResult parse_records_file(const std::filesystem::path& path,
                                      const ParseOptions& opt = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("io", "cannot open '" + path.string() + "'");
  return parse_records(in, opt);
}

// Four-column serialization that parse_records reads back unchanged.
inline std::string records_to_csv(const std::vector<InteractionRecord>& records) {
  std::string out = "user_id,problem_id,school_id,correct\n";
  for (const auto& r : records) {
    out += r.user_id;
    out += ',';
    out += r.problem_id;
    out += ',';
    out += r.school_id;
    out += ',';
    out += r.correct ? '1' : '0';
    out += '\n';
  }
  return out;
}

inline std::map<std::string, TaskDataset> partition_by_school(
    const std::vector<InteractionRecord>& records,
    const std::vector<std::string>& selected_school_ids) {
  if (selected_school_ids.empty())
    throw ConfigError("parameter", "no schools selected");
  std::set<std::string> wanted(selected_school_ids.begin(),
                               selected_school_ids.end());

  std::map<std::string, TaskDataset> out;
  for (const auto& id : wanted) out[id].school_id = id;
  for (const auto& rec : records) {
    auto it = out.find(rec.school_id);
    if (it == out.end()) continue;
    it->second.users[rec.user_id].push_back(rec);
  }

  std::vector<std::string> missing;
  for (auto& [id, ds] : out) {
    if (ds.users.empty()) missing.push_back(id);
    for (auto& [_, recs] : ds.users)
      std::sort(recs.begin(), recs.end(),
                [](const InteractionRecord& a, const InteractionRecord& b) {
                  return a.order_index < b.order_index;
                });
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw DataError("missing-task",
                    "selected school(s) absent from data: " + names);
  }
  return out;
}

inline DatasetStats dataset_stats(const TaskDataset& ds) {
  DatasetStats s;
  s.num_learners = ds.users.size();
  std::set<std::string> problems;
  for (const auto& [_, recs] : ds.users) {
    s.num_responses += recs.size();
    for (const auto& r : recs) problems.insert(r.problem_id);
  }
  s.num_unique_problems = problems.size();
  return s;
}

// Synthetic fixture: users answer problems whose hidden class is the parity
// of an id hash; a per-user latent bit decides which class they get right.
// overlap_fraction of each school's vocabulary is shared across schools.
struct SyntheticSpec {
  std::size_t num_schools = 2;
  std::size_t users_per_school = 50;
  std::size_t problems_per_school = 100;
  std::size_t responses_per_user = 120;
  double overlap_fraction = 0.0;
  std::string rule = "parity";
  double noise_rate = 0.0;
  std::uint64_t seed = 1;
};

inline int problem_parity(const std::string& problem_id) {
  return static_cast<int>(fnv1a64(problem_id) & 1u);
}

inline std::map<std::string, TaskDataset> generate_synthetic(
    const SyntheticSpec& spec) {
  if (spec.overlap_fraction < 0.0 || spec.overlap_fraction > 1.0)
    throw ConfigError("parameter", "overlap_fraction must be in [0, 1]");
  if (spec.noise_rate < 0.0 || spec.noise_rate > 1.0)
    throw ConfigError("parameter", "noise_rate must be in [0, 1]");
  if (spec.rule != "parity")
    throw ConfigError("parameter", "unknown labeling rule '" + spec.rule + "'");
  if (spec.num_schools == 0 || spec.users_per_school == 0 ||
      spec.problems_per_school == 0 || spec.responses_per_user == 0)
    throw ConfigError("parameter", "synthetic sizes must be positive");

  auto pad4 = [](std::size_t n) {
    std::string s = std::to_string(n);
    return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
  };

  const std::size_t shared = static_cast<std::size_t>(
      std::llround(spec.overlap_fraction *
                   static_cast<double>(spec.problems_per_school)));
  const std::string tag = "g" + std::to_string(spec.seed);

  std::map<std::string, TaskDataset> out;
  for (std::size_t s = 0; s < spec.num_schools; ++s) {
    const std::string school = "syn" + std::to_string(s);
    std::vector<std::string> vocab;
    vocab.reserve(spec.problems_per_school);
    for (std::size_t i = 0; i < shared && i < spec.problems_per_school; ++i)
      vocab.push_back(tag + "_shared_" + pad4(i));
    for (std::size_t i = shared; i < spec.problems_per_school; ++i)
      vocab.push_back(tag + "_" + school + "_" + pad4(i));

    TaskDataset ds;
    ds.school_id = school;
    for (std::size_t u = 0; u < spec.users_per_school; ++u) {
      const std::string user = school + "_u" + pad4(u);
      Rng rng(spec.seed, fnv1a64(school + "/" + user));
      const int latent_bit = static_cast<int>(rng.next_u64() & 1u);
      std::vector<InteractionRecord> recs;
      recs.reserve(spec.responses_per_user);
      for (std::size_t t = 0; t < spec.responses_per_user; ++t) {
        const std::string& pid =
            vocab[static_cast<std::size_t>(rng.below(vocab.size()))];
        int correct = problem_parity(pid) == latent_bit ? 1 : 0;
        if (rng.uniform() < spec.noise_rate) correct = 1 - correct;
        recs.push_back({user, pid, school, correct, t});
      }
      ds.users.emplace(user, std::move(recs));
    }
    out.emplace(school, std::move(ds));
  }
  return out;
}

// Canonical JSON cache: object keys are sorted, record order carries the
// per-user chronology, so equal datasets serialize to identical bytes.
inline json dataset_to_json(const TaskDataset& ds) {
  json users = json::object();
  for (const auto& [user, recs] : ds.users) {
    json arr = json::array();
    for (const auto& r : recs) arr.push_back({{"c", r.correct}, {"p", r.problem_id}});
    users[user] = std::move(arr);
  }
  return json{{"format", "ikt.dataset.v1"},
              {"school_id", ds.school_id},
              {"users", std::move(users)}};
}

inline TaskDataset dataset_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "ikt.dataset.v1")
    throw IoError("format", "not an ikt.dataset.v1 document");
  TaskDataset ds;
  ds.school_id = j.at("school_id").get<std::string>();
  for (const auto& [user, arr] : j.at("users").items()) {
    std::vector<InteractionRecord> recs;
    recs.reserve(arr.size());
    std::size_t order = 0;
    for (const auto& e : arr) {
      InteractionRecord r;
      r.user_id = user;
      r.school_id = ds.school_id;
      r.problem_id = e.at("p").get<std::string>();
      r.correct = e.at("c").get<int>();
      if (r.correct != 0 && r.correct != 1)
        throw IoError("format", "non-binary correct value in dataset cache");
      r.order_index = order++;
      recs.push_back(std::move(r));
    }
    ds.users.emplace(user, std::move(recs));
  }
  return ds;
}

inline void save_dataset(const TaskDataset& ds, const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("io", "cannot write '" + p.string() + "'");
  out << dataset_to_json(ds).dump(2) << '\n';
}

inline TaskDataset load_dataset(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("io", "cannot open '" + p.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("format", "bad dataset cache '" + p.string() + "': " + e.what());
  }
  return dataset_from_json(j);
}

// Order-insensitive digest of a record multiset; used for the data-isolation
// assertions in the continual harness.
inline std::string records_digest(std::vector<std::string> lines) {
  std::sort(lines.begin(), lines.end());
  std::uint64_t h = kFnvOffset;
  for (const auto& l : lines) {
    h = fnv1a64(l, h);
    h = fnv1a64("\n", h);
  }
  return hash_hex(h);
}

inline std::string record_line(const InteractionRecord& r) {
  return r.school_id + "|" + r.user_id + "|" + r.problem_id + "|" +
         std::to_string(r.correct) + "|" + std::to_string(r.order_index);
}

}  // namespace ikt::ingest
