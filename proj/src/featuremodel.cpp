#include "fscd/featuremodel.hpp"

#include <cmath>
#include <set>

#include "fscd/errors.hpp"
#include "fscd/hash.hpp"
#include "json_util.hpp"

namespace fscd {

using nlohmann::json;

std::string_view to_string(FeatureType t) {
  switch (t) {
    case FeatureType::I: return "I";
    case FeatureType::II: return "II";
    case FeatureType::III: return "III";
    case FeatureType::IV: return "IV";
  }
  return "?";
}

std::string_view to_string(Scope s) {
  return s == Scope::PerRequest ? "per-request" : "per-item";
}

FeatureType parse_feature_type(std::string_view s) {
  if (s == "I") return FeatureType::I;
  if (s == "II") return FeatureType::II;
  if (s == "III") return FeatureType::III;
  if (s == "IV") return FeatureType::IV;
  throw ConfigError("unknown feature_type '" + std::string(s) + "' (expected I, II, III or IV)");
}

Scope parse_scope(std::string_view s) {
  if (s == "per-request") return Scope::PerRequest;
  if (s == "per-item") return Scope::PerItem;
  throw ConfigError("unknown scope '" + std::string(s) + "' (expected per-request or per-item)");
}

double default_online_cost(FeatureType t) {
  switch (t) {
    case FeatureType::I: return 0.4;
    case FeatureType::II: return 1.5;
    case FeatureType::III: return 1.0;
    case FeatureType::IV: return 3.0;
  }
  return 0.0;
}

Scope scope_of(FeatureType t) {
  return (t == FeatureType::I || t == FeatureType::III) ? Scope::PerRequest : Scope::PerItem;
}

double complexity(const FeatureField& f, const ComplexityParams& p) {
  return p.gamma1 * f.online_cost + p.gamma2 * static_cast<double>(f.embed_dim) +
         p.gamma3 * static_cast<double>(f.num_keys);
}

double prior_theta(double c) { return 1.0 / (1.0 + std::exp(c)); }

double reg_weight_alpha(double theta) {
  if (!(theta > 0.0 && theta < 1.0)) {
    throw DomainError("reg_weight_alpha: theta must lie in (0, 1), got " + std::to_string(theta));
  }
  return std::log1p(-theta) - std::log(theta);
}

std::string_view to_string(PriorMode m) {
  return m == PriorMode::Complexity ? "fscd" : "constant-alpha";
}

PriorMode parse_prior_mode(std::string_view s) {
  if (s == "fscd") return PriorMode::Complexity;
  if (s == "constant-alpha") return PriorMode::Constant;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected fscd or constant-alpha)");
}

FeatureCatalog::FeatureCatalog(std::vector<FeatureField> fields, ComplexityParams params)
    : fields_(std::move(fields)), params_(params) {
  if (fields_.empty()) throw ConfigError("feature catalog must contain at least one field");
  if (!(params_.gamma1 >= 0 && params_.gamma2 >= 0 && params_.gamma3 >= 0)) {
    throw ConfigError("complexity weights gamma1..3 must be non-negative");
  }
  std::set<std::string> names;
  for (std::size_t j = 0; j < fields_.size(); ++j) {
    auto& f = fields_[j];
    f.index = j;
    if (f.name.empty()) throw ConfigError("field " + std::to_string(j) + " has an empty name");
    if (!names.insert(f.name).second) throw ConfigError("duplicate field name '" + f.name + "'");
    if (f.scope != scope_of(f.type)) {
      throw ConfigError("field '" + f.name + "': scope " + std::string(to_string(f.scope)) +
                        " inconsistent with feature type " + std::string(to_string(f.type)));
    }
    if (!(std::isfinite(f.online_cost) && f.online_cost >= 0)) {
      throw ConfigError("field '" + f.name + "': online cost o must be finite and >= 0");
    }
    if (f.embed_dim == 0) throw ConfigError("field '" + f.name + "': embedding dim e must be > 0");
    if (f.num_keys == 0) throw ConfigError("field '" + f.name + "': key count n must be > 0");
  }
}

std::size_t FeatureCatalog::index_of(std::string_view name) const {
  for (const auto& f : fields_)
    if (f.name == name) return f.index;
  throw LookupError("no field named '" + std::string(name) + "' in catalog");
}

std::vector<double> FeatureCatalog::complexities() const {
  std::vector<double> c;
  c.reserve(fields_.size());
  for (const auto& f : fields_) c.push_back(complexity(f, params_));
  return c;
}

FieldPriors FeatureCatalog::priors(PriorMode mode) const {
  FieldPriors p;
  p.complexity = complexities();
  for (double c : p.complexity) {
    const double theta = mode == PriorMode::Complexity ? prior_theta(c) : 0.5;
    p.theta.push_back(theta);
    p.alpha.push_back(reg_weight_alpha(theta));
  }
  return p;
}

json FeatureCatalog::to_json() const {
  json fields = json::array();
  for (const auto& f : fields_) {
    fields.push_back({{"name", f.name},
                      {"feature_type", std::string(to_string(f.type))},
                      {"scope", std::string(to_string(f.scope))},
                      {"o", f.online_cost},
                      {"e", f.embed_dim},
                      {"n", f.num_keys}});
  }
  return {{"format", "fscd-catalog"},
          {"version", 1},
          {"params",
           {{"gamma1", params_.gamma1}, {"gamma2", params_.gamma2}, {"gamma3", params_.gamma3}}},
          {"fields", fields}};
}

using detail::reject_unknown_keys;
using detail::required;

FeatureCatalog FeatureCatalog::from_json(const json& j) {
  reject_unknown_keys(j, {"format", "version", "params", "fields"}, "catalog");
  if (j.contains("format") && j.at("format") != "fscd-catalog") {
    throw FormatError("catalog format tag must be 'fscd-catalog'");
  }
  if (j.contains("version") && j.at("version") != 1) {
    throw FormatError("unsupported catalog version " + j.at("version").dump());
  }
  ComplexityParams params;
  if (j.contains("params")) {
    const auto& p = j.at("params");
    reject_unknown_keys(p, {"gamma1", "gamma2", "gamma3"}, "catalog params");
    if (p.contains("gamma1")) params.gamma1 = required<double>(p, "gamma1", "catalog params");
    if (p.contains("gamma2")) params.gamma2 = required<double>(p, "gamma2", "catalog params");
    if (p.contains("gamma3")) params.gamma3 = required<double>(p, "gamma3", "catalog params");
  }
  if (!j.contains("fields") || !j.at("fields").is_array()) {
    throw ConfigError("catalog requires a 'fields' array");
  }
  std::vector<FeatureField> fields;
  for (const auto& jf : j.at("fields")) {
    const std::string where = "catalog field #" + std::to_string(fields.size());
    reject_unknown_keys(jf, {"name", "feature_type", "scope", "o", "e", "n"}, where);
    FeatureField f;
    f.name = required<std::string>(jf, "name", where);
    f.type = parse_feature_type(required<std::string>(jf, "feature_type", where));
    f.scope = jf.contains("scope") ? parse_scope(required<std::string>(jf, "scope", where))
                                   : scope_of(f.type);
    f.online_cost = jf.contains("o") ? required<double>(jf, "o", where) : default_online_cost(f.type);
    const auto e = required<std::int64_t>(jf, "e", where);
    const auto n = required<std::int64_t>(jf, "n", where);
    if (e <= 0 || e > (1 << 20)) throw ConfigError(where + ": e must be a positive integer");
    if (n <= 0) throw ConfigError(where + ": n must be a positive integer");
    f.embed_dim = static_cast<std::uint32_t>(e);
    f.num_keys = static_cast<std::uint64_t>(n);
    fields.push_back(std::move(f));
  }
  return FeatureCatalog(std::move(fields), params);
}

FeatureCatalog FeatureCatalog::load(const std::string& path) {
  return from_json(detail::read_json_file(path, "catalog"));
}

void FeatureCatalog::save(const std::string& path) const {
  detail::write_text_file(path, to_json().dump(2) + "\n");
}

std::uint64_t FeatureCatalog::hash() const { return fnv1a(to_json().dump()); }

}  // namespace fscd
