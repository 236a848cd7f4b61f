#pragma once

// Deterministic CTR-style data with planted ground truth.
//
// Keys are drawn uniformly and independently per field. Each field j has a
// fixed key-to-effect map g_j (standardized to zero mean and unit variance
// over its keys). The label of a sample is Bernoulli(sigmoid(s)) with
//
//   s = logit(base_rate) + sum_{j informative} w_j g_j(key_j) + noise_scale * N(0, 1).
//
// A redundant pair (source, copy) gives `copy` the same key and the same
// effect map as `source` on every sample, so the two fields carry identical
// information. Only the source may carry a weight.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fscd/featuremodel.hpp"
#include "fscd/netmodel.hpp"

namespace fscd {

struct Dataset {
  std::size_t num_fields = 0;
  std::vector<std::uint32_t> keys;  // size() x num_fields, row-major
  std::vector<std::uint8_t> labels;
  // Noise-free planted logit per sample; empty for data read from disk.
  std::vector<double> latent;
  std::uint64_t catalog_hash = 0;

  std::size_t size() const { return labels.size(); }
  BatchView view() const { return {keys, num_fields}; }
  BatchView view(std::size_t start, std::size_t count) const;
  Dataset slice(std::size_t start, std::size_t count) const;
  double positive_rate() const;

  // Throws LookupError if any key falls outside its field's key range.
  void validate(const FeatureCatalog& catalog) const;

  // Length-prefixed little-endian binary encoding (see README).
  std::string to_binary() const;
  static Dataset from_binary(const std::string& bytes);
  std::string to_csv(const FeatureCatalog& catalog) const;
  static Dataset from_csv(const std::string& text, const FeatureCatalog& catalog);

  void save_binary(const std::string& path) const;
  void save_csv(const std::string& path, const FeatureCatalog& catalog) const;
  // Dispatches on extension: ".csv" is read as CSV, anything else as binary.
  static Dataset load(const std::string& path, const FeatureCatalog& catalog);

  // FNV-1a of the binary encoding.
  std::uint64_t hash() const;
};

struct InformativeField {
  std::size_t field = 0;
  double weight = 0.0;
};

struct GenSpec {
  std::vector<InformativeField> informative;
  std::vector<std::pair<std::size_t, std::size_t>> redundant_pairs;  // (source, copy)
  double base_rate = 0.5;
  double noise_scale = 0.0;
  std::size_t n_samples = 1;
  std::size_t n_heldout = 0;
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range fields, n_samples == 0, a copy that is
  // also informative or whose key count differs from its source, etc.
  void validate(const FeatureCatalog& catalog) const;
};

enum class Split { Train, Heldout };

// Effect map g_j over the keys of field j (identical maps for a redundant pair).
std::vector<double> effect_map(const FeatureCatalog& catalog, const GenSpec& spec, std::size_t field);

// Train split has spec.n_samples rows, held-out split spec.n_heldout rows.
// Both share the effect maps and use independent sample streams.
Dataset generate(const FeatureCatalog& catalog, const GenSpec& spec, Split split = Split::Train);

struct Benchmark {
  FeatureCatalog catalog;
  GenSpec spec;
};

// Canonical 20-field fixture: all four cost types, five informative fields,
// one redundant pair whose members cost o=0.4 (type I) and o=3.0 (type IV).
// 50,000 train and 10,000 held-out samples.
Benchmark standard_benchmark();

// The benchmark's redundant pair as (cheap source, costly copy).
std::pair<std::size_t, std::size_t> standard_redundant_pair();

// Generator spec files embed the catalog; fields are referenced by name.
nlohmann::json gen_spec_to_json(const Benchmark& b);
Benchmark gen_spec_from_json(const nlohmann::json& j);
Benchmark load_gen_spec(const std::string& path);

}  // namespace fscd
