#include "fscd/workflow.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "fscd/errors.hpp"
#include "json_util.hpp"

namespace fscd {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig RunConfig::from_json(const json& j, const std::string& base_dir) {
  const std::string where = "run config";
  detail::reject_unknown_keys(j, {"catalog", "train", "heldout", "out_dir", "train_config", "cost_model",
                                  "recall", "train_reference"},
                              where);
  auto resolve = [&](const char* key) -> std::string {
    const auto p = detail::required<std::string>(j, key, where);
    const fs::path path(p);
    return path.is_absolute() ? p : (fs::path(base_dir) / path).lexically_normal().string();
  };
  RunConfig c;
  c.catalog_path = resolve("catalog");
  c.train_path = resolve("train");
  c.heldout_path = resolve("heldout");
  c.out_dir = j.contains("out_dir") ? resolve("out_dir") : std::string("fscd-out");
  if (j.contains("train_config")) c.train = TrainConfig::from_json(j.at("train_config"));
  if (j.contains("cost_model")) {
    const auto& cm = j.at("cost_model");
    detail::reject_unknown_keys(cm, {"n_items"}, "cost_model");
    c.cost.n_items = detail::optional<std::size_t>(cm, "n_items", c.cost.n_items, "cost_model");
  }
  if (j.contains("recall")) {
    const auto& r = j.at("recall");
    detail::reject_unknown_keys(r, {"candidates", "pass_k", "top_m"}, "recall");
    c.recall.candidates = detail::optional<std::size_t>(r, "candidates", c.recall.candidates, "recall");
    c.recall.pass_k = detail::optional<std::size_t>(r, "pass_k", c.recall.pass_k, "recall");
    c.recall.top_m = detail::optional<std::size_t>(r, "top_m", c.recall.top_m, "recall");
  }
  c.train_reference = detail::optional<bool>(j, "train_reference", true, where);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  const auto base = fs::path(path).parent_path().string();
  return from_json(detail::read_json_file(path, "run config"), base.empty() ? "." : base);
}

json RunConfig::to_json() const {
  return {{"catalog", catalog_path},
          {"train", train_path},
          {"heldout", heldout_path},
          {"out_dir", out_dir},
          {"train_config", train.to_json()},
          {"cost_model", {{"n_items", cost.n_items}}},
          {"recall", {{"candidates", recall.candidates}, {"pass_k", recall.pass_k}, {"top_m", recall.top_m}}},
          {"train_reference", train_reference}};
}

void RunConfig::validate(std::size_t m) const {
  for (const auto* p : {&catalog_path, &train_path, &heldout_path}) {
    if (!fs::exists(*p)) throw ConfigError("input file does not exist: " + *p);
  }
  train.validate(m);
  if (cost.n_items == 0) throw ConfigError("cost_model.n_items must be >= 1");
  if (recall.top_m == 0 || recall.pass_k < recall.top_m || recall.candidates < recall.pass_k) {
    throw ConfigError("recall settings need 1 <= top_m <= pass_k <= candidates");
  }
}

double heldout_auc(const ModelParams& model, const Dataset& heldout) {
  const auto scores = predict(model, heldout.view());
  return auc(scores, heldout.labels);
}

RunArtifacts execute_run(const FeatureCatalog& catalog, const Dataset& train, const Dataset& heldout,
                         const TrainConfig& config, const CostModel& cost, const RecallConfig& recall,
                         bool with_reference) {
  auto [selection, pre] = run_algorithm1(catalog, train, config);
  SelectionReport report = build_report(catalog, selection, config.mode, cost);
  std::optional<ModelParams> reference;
  if (heldout.size() > 0) {
    const auto pre_scores = predict(pre, heldout.view());
    report.heldout_auc = auc(pre_scores, heldout.labels);
    if (with_reference) {
      reference = train_full(catalog, train, config, config.ranking_arch, config.steps_reference);
      const auto ref_scores = predict(*reference, heldout.view());
      report.reference_auc = auc(ref_scores, heldout.labels);
      if (heldout.size() >= recall.candidates) {
        report.recall = cascade_recall(ref_scores, pre_scores, recall.candidates, recall.pass_k, recall.top_m);
        report.recall_pass_k = recall.pass_k;
        report.recall_top_m = recall.top_m;
      }
    }
  }
  return {std::move(selection), std::move(pre), std::move(reference), std::move(report)};
}

std::vector<SweepRow> sweep(const FeatureCatalog& catalog, const SelectionOutcome& outcome,
                            const Dataset& train, const Dataset& heldout, const TrainConfig& config,
                            const CostModel& cost, std::span<const std::size_t> k_list) {
  if (k_list.empty()) throw ConfigError("sweep: k-list is empty");
  for (auto k : k_list) {
    if (k < 1 || k > catalog.size()) {
      throw ConfigError("sweep: K=" + std::to_string(k) + " outside [1, " + std::to_string(catalog.size()) + "]");
    }
  }
  std::vector<SweepRow> rows(k_list.size());
  parallel_for(k_list.size(), [&](std::size_t i) {
    const auto mask = select_top_k(outcome.delta, catalog, k_list[i]);
    const ModelParams model = finetune(outcome.warm_params, mask, train, config);
    const auto kept = mask.kept_indices();
    rows[i] = {k_list[i], heldout_auc(model, heldout), request_cost(catalog, kept, cost)};
  });
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "k,auc,request_cost\n";
  for (const auto& r : rows) {
    char line[96];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", r.k, r.auc, r.cost);
    os << line;
  }
  return os.str();
}

}  // namespace fscd
