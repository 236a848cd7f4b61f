#pragma once

// Interaction-style scoring network: one embedding table per feature field,
// concatenated embeddings feed a ReLU MLP with a sigmoid output.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fscd/diffcore.hpp"
#include "fscd/featuremodel.hpp"

namespace fscd {

// Row-major view of categorical keys for a batch. `num_fields` is the full
// catalog width; models pick the columns they consume.
struct BatchView {
  std::span<const std::uint32_t> keys;
  std::size_t num_fields = 0;

  std::size_t rows() const { return num_fields == 0 ? 0 : keys.size() / num_fields; }
};

class FieldMask {
 public:
  FieldMask() = default;
  // Throws ConfigError when no field is kept.
  explicit FieldMask(std::vector<bool> keep);
  static FieldMask all(std::size_t m);
  static FieldMask from_indices(std::size_t m, std::span<const std::size_t> kept);

  std::size_t size() const { return keep_.size(); }
  bool keeps(std::size_t j) const { return keep_.at(j); }
  std::size_t kept_count() const;
  std::vector<std::size_t> kept_indices() const;
  bool keeps_all() const { return kept_count() == size(); }
  const std::vector<bool>& flags() const { return keep_; }

 private:
  std::vector<bool> keep_;
};

struct DenseLayer {
  diff::Value weight;  // [in x out]
  diff::Value bias;    // [out]
};

// Parameters of one network. Value handles alias their storage, so copying is
// disabled; clone() produces an independent deep copy.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(ModelParams&&) = default;
  ModelParams& operator=(ModelParams&&) = default;
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;

  ModelParams clone() const;

  // Catalog indices consumed by this model, ascending.
  std::vector<std::size_t> field_ids;
  // One [n_j x e_j] table per entry of field_ids.
  std::vector<diff::Value> embeddings;
  // Hidden layers followed by the [h x 1] output layer.
  std::vector<DenseLayer> layers;
  std::vector<std::size_t> hidden;
  std::uint64_t catalog_hash = 0;

  std::size_t input_width() const;
  std::size_t parameter_count() const;
  // Handles to every trainable array: embeddings first, then weights and biases.
  std::vector<diff::Value> parameters() const;
  std::vector<diff::Value> dense_parameters() const;
  void zero_grad();

  nlohmann::json to_json() const;
  static ModelParams from_json(const nlohmann::json& j, const FeatureCatalog& catalog);
  void save(const std::string& path) const;
  static ModelParams load(const std::string& path, const FeatureCatalog& catalog);
};

// Uniform(-s, s) with s = 1/sqrt(fan_in) for embeddings (fan_in = e_j) and
// weights; biases start at zero.
ModelParams init_params(const FeatureCatalog& catalog, std::span<const std::size_t> hidden,
                        std::uint64_t seed);

// Copies kept embedding tables, drops the matching input rows of the first
// layer and copies the remaining layers verbatim. `mask` indexes the model's
// own fields (params.field_ids).
ModelParams restrict(const ModelParams& params, const FieldMask& mask);

// p = sigmoid(MLP(concat_j block_j)), clamped to [1e-7, 1 - 1e-7], shape [N x 1].
// A masked field contributes a zero block. `gates` (z of shape [1 x M] or
// [N x M]) scales each block; gating together with a non-trivial mask is a
// UsageError.
diff::Value forward(diff::Tape& tape, const ModelParams& params, const BatchView& batch,
                    const FieldMask* mask = nullptr, const diff::Value* gates = nullptr);

// Gradient-free scoring, processed in chunks.
std::vector<double> predict(const ModelParams& params, const BatchView& batch,
                            const FieldMask* mask = nullptr);

}  // namespace fscd
