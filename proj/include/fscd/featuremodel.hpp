#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace fscd {

// Cost taxonomy of feature fields. Simple/complex crossed with whether the
// field depends only on the request (query/user) or on each scored item.
enum class FeatureType { I, II, III, IV };

enum class Scope { PerRequest, PerItem };

std::string_view to_string(FeatureType t);
std::string_view to_string(Scope s);
FeatureType parse_feature_type(std::string_view s);
Scope parse_scope(std::string_view s);

// Default online cost o for each feature type.
double default_online_cost(FeatureType t);
// Types I and III are computed once per request, II and IV once per item.
Scope scope_of(FeatureType t);

struct FeatureField {
  std::size_t index = 0;
  std::string name;
  FeatureType type = FeatureType::I;
  Scope scope = Scope::PerRequest;
  double online_cost = 0.0;    // o
  std::uint32_t embed_dim = 1;  // e
  std::uint64_t num_keys = 1;   // n
};

// Weights of the linear complexity c = g1*o + g2*e + g3*n.
struct ComplexityParams {
  double gamma1 = 1.0;
  double gamma2 = 1e-2;
  double gamma3 = 1e-7;
};

double complexity(const FeatureField& field, const ComplexityParams& params);

// Prior keep-probability theta = 1 - sigmoid(c), evaluated as 1/(1+e^c) so the
// tail keeps full relative precision.
double prior_theta(double c);

// alpha = log(1 - theta) - log(theta). Throws DomainError unless 0 < theta < 1.
double reg_weight_alpha(double theta);

// How priors are assigned to fields. `Complexity` is the cost-aware scheme;
// `Constant` fixes theta = 0.5 (alpha = 0) for every field, the
// complexity-blind variational-dropout baseline.
enum class PriorMode { Complexity, Constant };

std::string_view to_string(PriorMode m);
PriorMode parse_prior_mode(std::string_view s);

struct FieldPriors {
  std::vector<double> complexity;
  std::vector<double> theta;
  std::vector<double> alpha;
};

class FeatureCatalog {
 public:
  FeatureCatalog() = default;
  // Validates names, dimensions and costs; reassigns indices 0..M-1 in order.
  FeatureCatalog(std::vector<FeatureField> fields, ComplexityParams params = {});

  std::size_t size() const { return fields_.size(); }
  const std::vector<FeatureField>& fields() const { return fields_; }
  const FeatureField& field(std::size_t j) const { return fields_.at(j); }
  const ComplexityParams& params() const { return params_; }
  std::size_t index_of(std::string_view name) const;

  std::vector<double> complexities() const;
  FieldPriors priors(PriorMode mode = PriorMode::Complexity) const;

  nlohmann::json to_json() const;
  static FeatureCatalog from_json(const nlohmann::json& j);
  static FeatureCatalog load(const std::string& path);
  void save(const std::string& path) const;

  // FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;

 private:
  std::vector<FeatureField> fields_;
  ComplexityParams params_;
};

}  // namespace fscd
