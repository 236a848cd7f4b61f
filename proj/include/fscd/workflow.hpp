#pragma once

// End-to-end runs shared by the command-line tool, the acceptance suite and
// the Python module: selection + fine-tuning + reference model + report.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fscd/evalcost.hpp"
#include "fscd/pipeline.hpp"
#include "fscd/synthdata.hpp"

namespace fscd {

struct RecallConfig {
  std::size_t candidates = 200;
  std::size_t pass_k = 20;
  std::size_t top_m = 5;
};

struct RunConfig {
  std::string catalog_path;
  std::string train_path;
  std::string heldout_path;
  std::string out_dir;
  TrainConfig train;
  CostModel cost;
  RecallConfig recall;
  bool train_reference = true;

  // Relative paths in the file resolve against the config file's directory.
  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  // Throws ConfigError for missing input files or invalid settings.
  void validate(std::size_t m) const;
};

struct RunArtifacts {
  SelectionOutcome selection;
  ModelParams preranking;
  std::optional<ModelParams> reference;
  SelectionReport report;
};

RunArtifacts execute_run(const FeatureCatalog& catalog, const Dataset& train, const Dataset& heldout,
                         const TrainConfig& config, const CostModel& cost, const RecallConfig& recall,
                         bool with_reference = true);

// Held-out AUC of a model.
double heldout_auc(const ModelParams& model, const Dataset& heldout);

struct SweepRow {
  std::size_t k = 0;
  double auc = 0.0;
  double cost = 0.0;
};

// Fine-tunes one pre-ranking model per K from the shared selection outcome.
std::vector<SweepRow> sweep(const FeatureCatalog& catalog, const SelectionOutcome& outcome,
                            const Dataset& train, const Dataset& heldout, const TrainConfig& config,
                            const CostModel& cost, std::span<const std::size_t> k_list);
std::string sweep_csv(std::span<const SweepRow> rows);

// Runs fn(0..n-1) on up to hardware_concurrency() threads. The first
// exception is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace fscd
