#pragma once

// Effectiveness metrics (AUC, cascade recall) and the analytic request-cost
// model used as the efficiency proxy.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fscd/featuremodel.hpp"
#include "fscd/netmodel.hpp"

namespace fscd {

struct SelectionOutcome;

// Rank-statistic AUC with average ranks for ties. Throws DomainError when
// the labels contain a single class.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// |top pass_k by preranking  intersect  top top_m by reference| / top_m.
// Ties are broken by item index. Throws ConfigError if pass_k < top_m.
double recall_rate(std::span<const double> reference_scores, std::span<const double> preranking_scores,
                   std::size_t pass_k, std::size_t top_m = 5);

// Mean recall over consecutive groups of `candidates` items (one group per
// simulated request). A trailing partial group is ignored.
double cascade_recall(std::span<const double> reference_scores, std::span<const double> preranking_scores,
                      std::size_t candidates, std::size_t pass_k, std::size_t top_m = 5);

struct CostModel {
  std::size_t n_items = 200;
};

// Per-request fields are computed once, per-item fields once per candidate.
double request_cost(const FeatureCatalog& catalog, std::span<const std::size_t> selected,
                    const CostModel& cost_model);

struct FieldReport {
  std::string name;
  FeatureType type = FeatureType::I;
  double complexity = 0.0;
  double theta = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  std::size_t rank = 0;  // 1-based
  bool selected = false;
};

struct SelectionReport {
  std::string mode;
  std::vector<FieldReport> fields;  // catalog order
  std::size_t k = 0;
  std::size_t n_items = 0;
  double request_cost = 0.0;
  double full_request_cost = 0.0;
  std::optional<double> heldout_auc;
  std::optional<double> reference_auc;
  std::optional<double> recall;
  std::size_t recall_pass_k = 0;
  std::size_t recall_top_m = 0;

  // Throws FormatError if ranks are not a permutation or the selected count
  // differs from k.
  void validate() const;

  nlohmann::json to_json() const;
  static SelectionReport from_json(const nlohmann::json& j);
  std::string to_csv() const;
  // Human-readable ranking table plus aggregate metrics.
  std::string summary() const;
};

SelectionReport build_report(const FeatureCatalog& catalog, const SelectionOutcome& outcome,
                             PriorMode mode, const CostModel& cost_model);

struct RankStats {
  std::size_t count = 0;
  std::size_t min = 0;
  std::size_t median = 0;  // lower-middle for even counts
  std::size_t max = 0;
};

// Indexed by FeatureType (I..IV); count == 0 for absent types.
std::array<RankStats, 4> type_rank_summary(const SelectionReport& report);

}  // namespace fscd
