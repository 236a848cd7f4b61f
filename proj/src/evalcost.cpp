#include "fscd/evalcost.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fscd/errors.hpp"
#include "fscd/pipeline.hpp"
#include "json_util.hpp"

namespace fscd {

using nlohmann::json;

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const std::size_t n = scores.size();
  if (labels.size() != n) throw DimensionError("auc: score and label counts differ");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DomainError("auc undefined: labels contain a single class");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(k);
  return order;
}

}  // namespace

double recall_rate(std::span<const double> reference_scores, std::span<const double> preranking_scores,
                   std::size_t pass_k, std::size_t top_m) {
  if (reference_scores.size() != preranking_scores.size()) {
    throw DimensionError("recall_rate: score vectors cover different item lists");
  }
  if (top_m == 0) throw ConfigError("recall_rate: top_m must be >= 1");
  if (pass_k < top_m) {
    throw ConfigError("recall_rate: pass_k (" + std::to_string(pass_k) + ") must be >= top_m (" +
                      std::to_string(top_m) + ")");
  }
  if (reference_scores.size() < top_m) throw ConfigError("recall_rate: fewer items than top_m");
  const auto ref = top_indices(reference_scores, top_m);
  auto passed = top_indices(preranking_scores, pass_k);
  std::sort(passed.begin(), passed.end());
  std::size_t hit = 0;
  for (auto i : ref) hit += std::binary_search(passed.begin(), passed.end(), i) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(top_m);
}

double cascade_recall(std::span<const double> reference_scores, std::span<const double> preranking_scores,
                      std::size_t candidates, std::size_t pass_k, std::size_t top_m) {
  if (reference_scores.size() != preranking_scores.size()) {
    throw DimensionError("cascade_recall: score vectors cover different item lists");
  }
  if (candidates == 0) throw ConfigError("cascade_recall: candidates must be >= 1");
  const std::size_t groups = reference_scores.size() / candidates;
  if (groups == 0) throw ConfigError("cascade_recall: fewer items than one candidate group");
  double total = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    total += recall_rate(reference_scores.subspan(g * candidates, candidates),
                         preranking_scores.subspan(g * candidates, candidates), pass_k, top_m);
  }
  return total / static_cast<double>(groups);
}

double request_cost(const FeatureCatalog& catalog, std::span<const std::size_t> selected,
                    const CostModel& cost_model) {
  if (cost_model.n_items == 0) throw ConfigError("cost model needs n_items >= 1");
  if (selected.empty()) throw ConfigError("request_cost needs at least one selected field");
  double per_request = 0.0, per_item = 0.0;
  for (auto j : selected) {
    const auto& f = catalog.field(j);
    (f.scope == Scope::PerRequest ? per_request : per_item) += f.online_cost;
  }
  return per_request + static_cast<double>(cost_model.n_items) * per_item;
}

// --- SelectionReport ------------------------------------------------------------

void SelectionReport::validate() const {
  std::vector<bool> seen(fields.size() + 1, false);
  std::size_t n_sel = 0;
  for (const auto& f : fields) {
    if (f.rank < 1 || f.rank > fields.size() || seen[f.rank]) {
      throw FormatError("report ranks are not a permutation of 1.." + std::to_string(fields.size()));
    }
    seen[f.rank] = true;
    n_sel += f.selected ? 1 : 0;
  }
  if (n_sel != k) {
    throw FormatError("report marks " + std::to_string(n_sel) + " fields selected but K=" + std::to_string(k));
  }
}

SelectionReport build_report(const FeatureCatalog& catalog, const SelectionOutcome& outcome, PriorMode mode,
                             const CostModel& cost_model) {
  SelectionReport r;
  r.mode = std::string(to_string(mode));
  r.k = outcome.selected.kept_count();
  r.n_items = cost_model.n_items;
  std::vector<std::size_t> rank(catalog.size());
  for (std::size_t pos = 0; pos < outcome.ranking.size(); ++pos) rank[outcome.ranking[pos]] = pos + 1;
  for (const auto& f : catalog.fields()) {
    const auto j = f.index;
    r.fields.push_back({f.name, f.type, outcome.priors.complexity[j], outcome.priors.theta[j],
                        outcome.priors.alpha[j], outcome.delta[j], rank[j], outcome.selected.keeps(j)});
  }
  const auto kept = outcome.selected.kept_indices();
  r.request_cost = request_cost(catalog, kept, cost_model);
  std::vector<std::size_t> all(catalog.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  r.full_request_cost = request_cost(catalog, all, cost_model);
  r.validate();
  return r;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

json SelectionReport::to_json() const {
  json fj = json::array();
  for (const auto& f : fields) {
    fj.push_back({{"name", f.name},
                  {"feature_type", std::string(fscd::to_string(f.type))},
                  {"complexity", f.complexity},
                  {"theta", f.theta},
                  {"alpha", f.alpha},
                  {"delta", f.delta},
                  {"rank", f.rank},
                  {"selected", f.selected}});
  }
  return {{"format", "fscd-report"},
          {"version", 1},
          {"mode", mode},
          {"k", k},
          {"n_items", n_items},
          {"request_cost", request_cost},
          {"full_request_cost", full_request_cost},
          {"heldout_auc", optional_json(heldout_auc)},
          {"reference_auc", optional_json(reference_auc)},
          {"recall", optional_json(recall)},
          {"recall_pass_k", recall_pass_k},
          {"recall_top_m", recall_top_m},
          {"fields", fj}};
}

SelectionReport SelectionReport::from_json(const json& j) {
  SelectionReport r;
  try {
    if (j.at("format") != "fscd-report") throw FormatError("not an fscd report");
    r.mode = j.at("mode").get<std::string>();
    r.k = j.at("k").get<std::size_t>();
    r.n_items = j.at("n_items").get<std::size_t>();
    r.request_cost = j.at("request_cost").get<double>();
    r.full_request_cost = j.at("full_request_cost").get<double>();
    r.heldout_auc = optional_from(j, "heldout_auc");
    r.reference_auc = optional_from(j, "reference_auc");
    r.recall = optional_from(j, "recall");
    r.recall_pass_k = j.value("recall_pass_k", std::size_t{0});
    r.recall_top_m = j.value("recall_top_m", std::size_t{0});
    for (const auto& f : j.at("fields")) {
      r.fields.push_back({f.at("name").get<std::string>(),
                          parse_feature_type(f.at("feature_type").get<std::string>()),
                          f.at("complexity").get<double>(), f.at("theta").get<double>(),
                          f.at("alpha").get<double>(), f.at("delta").get<double>(),
                          f.at("rank").get<std::size_t>(), f.at("selected").get<bool>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
  r.validate();
  return r;
}

std::string SelectionReport::to_csv() const {
  std::ostringstream os;
  os << "name,feature_type,complexity,theta,alpha,delta,rank,selected\n";
  for (const auto& f : fields) {
    os << f.name << ',' << fscd::to_string(f.type) << ',' << fmt("%.17g", f.complexity) << ','
       << fmt("%.17g", f.theta) << ',' << fmt("%.17g", f.alpha) << ',' << fmt("%.17g", f.delta) << ','
       << f.rank << ',' << (f.selected ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string SelectionReport::summary() const {
  std::vector<const FieldReport*> by_rank;
  for (const auto& f : fields) by_rank.push_back(&f);
  std::sort(by_rank.begin(), by_rank.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
  std::ostringstream os;
  os << "mode: " << mode << "   K = " << k << " of " << fields.size() << " fields\n\n";
  os << "rank  sel  type  field                     c        alpha    delta\n";
  for (const auto* f : by_rank) {
    char line[160];
    std::snprintf(line, sizeof line, "%4zu  %-3s  %-4s  %-24s %7.4f  %7.4f  %.6f\n", f->rank,
                  f->selected ? "*" : "", std::string(fscd::to_string(f->type)).c_str(), f->name.c_str(),
                  f->complexity, f->alpha, f->delta);
    os << line;
  }
  os << "\nrequest cost (" << n_items << " items): " << fmt("%.4f", request_cost) << "  (all fields: "
     << fmt("%.4f", full_request_cost) << ")\n";
  if (heldout_auc) os << "held-out AUC (pre-ranking): " << fmt("%.4f", *heldout_auc) << '\n';
  if (reference_auc) os << "held-out AUC (reference):   " << fmt("%.4f", *reference_auc) << '\n';
  if (recall) {
    os << "recall of reference top-" << recall_top_m << " in pre-ranking top-" << recall_pass_k << ": "
       << fmt("%.4f", *recall) << '\n';
  }
  return os.str();
}

std::array<RankStats, 4> type_rank_summary(const SelectionReport& report) {
  std::array<std::vector<std::size_t>, 4> ranks;
  for (const auto& f : report.fields) ranks[static_cast<std::size_t>(f.type)].push_back(f.rank);
  std::array<RankStats, 4> out{};
  for (std::size_t t = 0; t < 4; ++t) {
    auto& r = ranks[t];
    if (r.empty()) continue;
    std::sort(r.begin(), r.end());
    out[t] = {r.size(), r.front(), r[(r.size() - 1) / 2], r.back()};
  }
  return out;
}

}  // namespace fscd
