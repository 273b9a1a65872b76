#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikt/error.hpp"

namespace ikt::metrics {

using json = nlohmann::json;

// Shortest round-trip decimal form; keeps emitted CSV/JSON byte-stable.
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool operator==(const Confusion&) const = default;
};

struct EvalReport {
  std::size_t n = 0;
  double acc = 0.0;
  std::optional<double> auroc;
  std::optional<double> auprc;
  Confusion confusion;
  double positive_rate = 0.0;

  bool operator==(const EvalReport&) const = default;

  json to_json() const {
    json j{{"acc", acc},
           {"confusion",
            {{"fn", confusion.fn},
             {"fp", confusion.fp},
             {"tn", confusion.tn},
             {"tp", confusion.tp}}},
           {"n", n},
           {"positive_rate", positive_rate}};
    j["auroc"] = auroc ? json(*auroc) : json(nullptr);
    j["auprc"] = auprc ? json(*auprc) : json(nullptr);
    return j;
  }

  static EvalReport from_json(const json& j) {
    EvalReport r;
    r.n = j.at("n").get<std::size_t>();
    r.acc = j.at("acc").get<double>();
    if (!j.at("auroc").is_null()) r.auroc = j.at("auroc").get<double>();
    if (!j.at("auprc").is_null()) r.auprc = j.at("auprc").get<double>();
    r.confusion.tp = j.at("confusion").at("tp").get<std::size_t>();
    r.confusion.fp = j.at("confusion").at("fp").get<std::size_t>();
    r.confusion.tn = j.at("confusion").at("tn").get<std::size_t>();
    r.confusion.fn = j.at("confusion").at("fn").get<std::size_t>();
    r.positive_rate = j.at("positive_rate").get<double>();
    return r;
  }

  // Metric columns of the flat CSV row: acc,auroc,auprc,tp,fp,tn,fn,n.
  std::string csv_fields() const {
    auto opt = [](const std::optional<double>& v) {
      return v ? format_double(*v) : std::string{};
    };
    return format_double(acc) + "," + opt(auroc) + "," + opt(auprc) + "," +
           std::to_string(confusion.tp) + "," + std::to_string(confusion.fp) +
           "," + std::to_string(confusion.tn) + "," +
           std::to_string(confusion.fn) + "," + std::to_string(n);
  }
};

inline void check_scored_input(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw NumericError("input", "scores and labels differ in length");
  if (scores.empty())
    throw NumericError("input", "no scored positions");
}

// Ties at the threshold count as positive predictions.
inline Confusion confusion(const std::vector<double>& scores,
                           const std::vector<int>& labels,
                           double threshold = 0.5) {
  check_scored_input(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1)
      pred ? ++c.tp : ++c.fn;
    else
      pred ? ++c.fp : ++c.tn;
  }
  return c;
}

// Rank statistic with midrank tie correction: the probability that a random
// positive outranks a random negative, ties counting half. Undefined (nullopt)
// when either class is empty.
inline std::optional<double> auroc(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
  check_scored_input(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double pos = 0.0, neg = 0.0, rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        pos += 1.0;
        rank_sum_pos += midrank;
      } else {
        neg += 1.0;
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  const double u = rank_sum_pos - pos * (pos + 1.0) / 2.0;
  return u / (pos * neg);
}

// Average precision with step interpolation; a tie group enters as one block
// so the result matches the cutoff-semantics definition exactly. Undefined
// when there are no positives.
inline std::optional<double> auprc(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
  check_scored_input(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double total_pos = 0.0;
  for (int l : labels) total_pos += (l == 1);
  if (total_pos == 0.0) return std::nullopt;

  double ap = 0.0, cum_tp = 0.0, cum_fp = 0.0, prev_recall = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double block_tp = 0.0, block_fp = 0.0;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      labels[idx[j]] == 1 ? block_tp += 1.0 : block_fp += 1.0;
      ++j;
    }
    cum_tp += block_tp;
    cum_fp += block_fp;
    const double recall = cum_tp / total_pos;
    const double precision = cum_tp / (cum_tp + cum_fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

inline EvalReport score_predictions(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  EvalReport r;
  r.n = scores.size();
  r.confusion = confusion(scores, labels);
  r.acc = static_cast<double>(r.confusion.tp + r.confusion.tn) /
          static_cast<double>(r.n);
  r.auroc = auroc(scores, labels);
  r.auprc = auprc(scores, labels);
  r.positive_rate =
      static_cast<double>(r.confusion.tp + r.confusion.fn) /
      static_cast<double>(r.n);
  return r;
}

// Cross-validation aggregate: metrics averaged over folds where defined,
// counts summed.
inline EvalReport average_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty())
    throw NumericError("input", "cannot average zero reports");
  EvalReport out;
  double acc = 0.0, roc = 0.0, prc = 0.0, prate = 0.0;
  std::size_t roc_n = 0, prc_n = 0;
  for (const auto& r : reports) {
    out.n += r.n;
    out.confusion.tp += r.confusion.tp;
    out.confusion.fp += r.confusion.fp;
    out.confusion.tn += r.confusion.tn;
    out.confusion.fn += r.confusion.fn;
    acc += r.acc;
    prate += r.positive_rate;
    if (r.auroc) {
      roc += *r.auroc;
      ++roc_n;
    }
    if (r.auprc) {
      prc += *r.auprc;
      ++prc_n;
    }
  }
  const double k = static_cast<double>(reports.size());
  out.acc = acc / k;
  out.positive_rate = prate / k;
  if (roc_n) out.auroc = roc / static_cast<double>(roc_n);
  if (prc_n) out.auprc = prc / static_cast<double>(prc_n);
  return out;
}

}  // namespace ikt::metrics
