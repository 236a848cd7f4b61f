#pragma once

// Two-phase pre-ranking training:
//   1. complexity -> prior theta -> penalty weight alpha for every field;
//   2. a gated network trained jointly on embeddings, dense weights and gate
//      keep-logits under cross-entropy + l2 + sum_j alpha_j z_j / N;
//   3. top-K fields by learned keep-probability delta;
//   4. fine-tuning of the masked network, warm-started from phase 2, on plain
//      negative log-likelihood without gates or regularizers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fscd/diffcore.hpp"
#include "fscd/featuremodel.hpp"
#include "fscd/netmodel.hpp"
#include "fscd/synthdata.hpp"

namespace fscd {

enum class USampling { PerStep, PerSample };

std::string_view to_string(USampling s);
USampling parse_u_sampling(std::string_view s);

struct TrainConfig {
  double lambda = 1e-3;
  double learning_rate = 0.2;
  // Learning rate for gate keep-logits; <= 0 means "same as learning_rate".
  double gate_learning_rate = 0.0;
  double momentum = 0.9;
  std::size_t batch_size = 256;
  std::size_t steps_selection = 3000;
  std::size_t steps_finetune = 1000;
  std::size_t steps_reference = 2000;
  std::uint64_t seed = 1;
  USampling u_sampling = USampling::PerStep;
  std::size_t k = 8;
  double temperature = 0.1;
  double clip_norm = 10.0;
  PriorMode mode = PriorMode::Complexity;
  std::vector<std::size_t> preranking_arch = {64, 16};
  std::vector<std::size_t> ranking_arch = {64, 32, 16};

  // Throws ConfigError when a field is out of range for a catalog of size m.
  void validate(std::size_t m) const;
  double effective_gate_lr() const { return gate_learning_rate > 0 ? gate_learning_rate : learning_rate; }

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct SelectionOutcome {
  FieldPriors priors;
  std::vector<double> delta;
  std::vector<std::size_t> ranking;  // field indices by delta, descending
  FieldMask selected;
  ModelParams warm_params;
  std::vector<double> loss_history;  // one entry per selection step
};

// Cross-entropy + (lambda / n)(||w||^2 + ||v||^2) + sum_j alpha_j z_j / n.
diff::Value fscd_loss(diff::Tape& tape, const diff::Value& p, std::span<const std::uint8_t> labels,
                      const ModelParams& params, const diff::Value& z, std::span<const double> alphas,
                      double lambda, std::size_t n);

// Orders fields by delta descending; ties go to lower complexity, then lower index.
std::vector<std::size_t> rank_fields(std::span<const double> delta, std::span<const double> complexity);

FieldMask select_top_k(std::span<const double> delta, const FeatureCatalog& catalog, std::size_t k);

SelectionOutcome train_selection(const FeatureCatalog& catalog, const Dataset& data,
                                 const TrainConfig& config);

// Restricts `warm` to `mask` and trains it on negative log-likelihood for
// config.steps_finetune steps. `loss_history`, when given, receives one
// entry per step.
ModelParams finetune(const ModelParams& warm, const FieldMask& mask, const Dataset& data,
                     const TrainConfig& config, std::vector<double>* loss_history = nullptr);

// Ungated, unregularized model over every catalog field, trained from scratch
// for `steps` steps with architecture `arch`. Serves as the ranking-stage
// reference and as the from-scratch comparison for fine-tuning.
ModelParams train_full(const FeatureCatalog& catalog, const Dataset& data, const TrainConfig& config,
                       std::span<const std::size_t> arch, std::size_t steps,
                       std::vector<double>* loss_history = nullptr);

struct PipelineResult {
  SelectionOutcome selection;
  ModelParams preranking;
};

PipelineResult run_algorithm1(const FeatureCatalog& catalog, const Dataset& data,
                              const TrainConfig& config);

}  // namespace fscd
