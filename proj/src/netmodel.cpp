#include "fscd/netmodel.hpp"

#include <algorithm>
#include <cmath>

#include "fscd/errors.hpp"
#include "fscd/gates.hpp"
#include "fscd/hash.hpp"
#include "fscd/random.hpp"
#include "json_util.hpp"

namespace fscd {

using diff::Value;
using nlohmann::json;

// --- FieldMask --------------------------------------------------------------

FieldMask::FieldMask(std::vector<bool> keep) : keep_(std::move(keep)) {
  if (kept_count() == 0) throw ConfigError("field mask must keep at least one field");
}

FieldMask FieldMask::all(std::size_t m) { return FieldMask(std::vector<bool>(m, true)); }

FieldMask FieldMask::from_indices(std::size_t m, std::span<const std::size_t> kept) {
  std::vector<bool> keep(m, false);
  for (auto j : kept) {
    if (j >= m) throw LookupError("mask index " + std::to_string(j) + " out of range");
    keep[j] = true;
  }
  return FieldMask(std::move(keep));
}

std::size_t FieldMask::kept_count() const {
  return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), true));
}

std::vector<std::size_t> FieldMask::kept_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < keep_.size(); ++j)
    if (keep_[j]) out.push_back(j);
  return out;
}

// --- ModelParams ------------------------------------------------------------

ModelParams ModelParams::clone() const {
  ModelParams p;
  p.field_ids = field_ids;
  for (const auto& e : embeddings) p.embeddings.push_back(e.clone());
  for (const auto& l : layers) p.layers.push_back({l.weight.clone(), l.bias.clone()});
  p.hidden = hidden;
  p.catalog_hash = catalog_hash;
  return p;
}

std::size_t ModelParams::input_width() const {
  std::size_t w = 0;
  for (const auto& e : embeddings) w += e.cols();
  return w;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : parameters()) n += v.size();
  return n;
}

std::vector<Value> ModelParams::parameters() const {
  std::vector<Value> out(embeddings.begin(), embeddings.end());
  for (const auto& v : dense_parameters()) out.push_back(v);
  return out;
}

std::vector<Value> ModelParams::dense_parameters() const {
  std::vector<Value> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

void ModelParams::zero_grad() {
  for (auto& v : parameters()) v.zero_grad();
}

namespace {

json array_json(const std::string& name, const Value& v) {
  return {{"name", name}, {"shape", v.shape()}, {"data", std::vector<double>(v.data().begin(), v.data().end())}};
}

Value array_from_json(const json& arrays, const std::string& name, const diff::Shape& expected) {
  for (const auto& a : arrays) {
    if (a.at("name") != name) continue;
    auto shape = a.at("shape").get<diff::Shape>();
    if (shape != expected) {
      throw FormatError("checkpoint array " + name + " has shape " + diff::shape_string(shape) +
                        ", expected " + diff::shape_string(expected));
    }
    return Value::parameter(std::move(shape), a.at("data").get<std::vector<double>>());
  }
  throw FormatError("checkpoint is missing array " + name);
}

}  // namespace

json ModelParams::to_json() const {
  json arrays = json::array();
  for (std::size_t k = 0; k < embeddings.size(); ++k)
    arrays.push_back(array_json("embedding/" + std::to_string(field_ids[k]), embeddings[k]));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    arrays.push_back(array_json("dense/" + std::to_string(l) + "/weight", layers[l].weight));
    arrays.push_back(array_json("dense/" + std::to_string(l) + "/bias", layers[l].bias));
  }
  return {{"format", "fscd-checkpoint"}, {"version", 1},
          {"catalog_hash", hex64(catalog_hash)}, {"arch", hidden},
          {"field_ids", field_ids}, {"arrays", arrays}};
}

ModelParams ModelParams::from_json(const json& j, const FeatureCatalog& catalog) {
  detail::reject_unknown_keys(j, {"format", "version", "catalog_hash", "arch", "field_ids", "arrays"},
                              "checkpoint");
  if (detail::required<std::string>(j, "format", "checkpoint") != "fscd-checkpoint") {
    throw FormatError("not an fscd checkpoint");
  }
  if (detail::required<int>(j, "version", "checkpoint") != 1) {
    throw FormatError("unsupported checkpoint version");
  }
  const auto hash = parse_hex64(detail::required<std::string>(j, "catalog_hash", "checkpoint"));
  if (hash != catalog.hash()) {
    throw FormatError("checkpoint catalog hash " + hex64(hash) + " does not match catalog " +
                      hex64(catalog.hash()));
  }
  ModelParams p;
  p.catalog_hash = hash;
  try {
    p.hidden = j.at("arch").get<std::vector<std::size_t>>();
    p.field_ids = j.at("field_ids").get<std::vector<std::size_t>>();
    const auto& arrays = j.at("arrays");
    std::size_t width = 0;
    for (auto id : p.field_ids) {
      if (id >= catalog.size()) throw FormatError("checkpoint field id out of range");
      const auto& f = catalog.field(id);
      p.embeddings.push_back(array_from_json(arrays, "embedding/" + std::to_string(id),
                                             {static_cast<std::size_t>(f.num_keys), f.embed_dim}));
      width += f.embed_dim;
    }
    std::size_t in = width;
    std::vector<std::size_t> outs = p.hidden;
    outs.push_back(1);
    for (std::size_t l = 0; l < outs.size(); ++l) {
      const std::string base = "dense/" + std::to_string(l);
      p.layers.push_back({array_from_json(arrays, base + "/weight", {in, outs[l]}),
                          array_from_json(arrays, base + "/bias", {outs[l]})});
      in = outs[l];
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
  return p;
}

void ModelParams::save(const std::string& path) const {
  detail::write_text_file(path, to_json().dump() + "\n");
}

ModelParams ModelParams::load(const std::string& path, const FeatureCatalog& catalog) {
  return from_json(detail::read_json_file(path, "checkpoint"), catalog);
}

// --- construction -----------------------------------------------------------

namespace {

Value uniform_param(Rng& rng, diff::Shape shape, double s) {
  std::vector<double> data(diff::element_count(shape));
  for (auto& x : data) x = (2.0 * rng.uniform() - 1.0) * s;
  return Value::parameter(std::move(shape), std::move(data));
}

}  // namespace

ModelParams init_params(const FeatureCatalog& catalog, std::span<const std::size_t> hidden,
                        std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1417));
  ModelParams p;
  p.catalog_hash = catalog.hash();
  p.hidden.assign(hidden.begin(), hidden.end());
  std::size_t width = 0;
  for (const auto& f : catalog.fields()) {
    p.field_ids.push_back(f.index);
    const double s = 1.0 / std::sqrt(static_cast<double>(f.embed_dim));
    p.embeddings.push_back(uniform_param(rng, {static_cast<std::size_t>(f.num_keys), f.embed_dim}, s));
    width += f.embed_dim;
  }
  std::size_t in = width;
  std::vector<std::size_t> outs(hidden.begin(), hidden.end());
  outs.push_back(1);
  for (auto out : outs) {
    if (out == 0) throw ConfigError("hidden layer sizes must be positive");
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    p.layers.push_back({uniform_param(rng, {in, out}, s), Value::zeros({out}, true)});
    in = out;
  }
  return p;
}

ModelParams restrict(const ModelParams& params, const FieldMask& mask) {
  if (mask.size() != params.field_ids.size()) {
    throw DimensionError("restrict: mask covers " + std::to_string(mask.size()) +
                         " fields but model has " + std::to_string(params.field_ids.size()));
  }
  if (params.layers.empty()) throw UsageError("restrict: model has no dense layers");
  ModelParams out;
  out.hidden = params.hidden;
  out.catalog_hash = params.catalog_hash;
  std::vector<std::size_t> kept_rows;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < params.field_ids.size(); ++k) {
    const std::size_t e = params.embeddings[k].cols();
    if (mask.keeps(k)) {
      out.field_ids.push_back(params.field_ids[k]);
      out.embeddings.push_back(params.embeddings[k].clone());
      for (std::size_t d = 0; d < e; ++d) kept_rows.push_back(offset + d);
    }
    offset += e;
  }
  const Value& w0 = params.layers[0].weight;
  const std::size_t cols = w0.cols();
  std::vector<double> rows;
  rows.reserve(kept_rows.size() * cols);
  const auto src = w0.data();
  for (auto r : kept_rows) rows.insert(rows.end(), src.begin() + r * cols, src.begin() + (r + 1) * cols);
  out.layers.push_back({Value::parameter({kept_rows.size(), cols}, std::move(rows)),
                        params.layers[0].bias.clone()});
  for (std::size_t l = 1; l < params.layers.size(); ++l)
    out.layers.push_back({params.layers[l].weight.clone(), params.layers[l].bias.clone()});
  return out;
}

// --- forward ----------------------------------------------------------------

Value forward(diff::Tape& tape, const ModelParams& params, const BatchView& batch,
              const FieldMask* mask, const Value* gates) {
  const std::size_t m = params.field_ids.size();
  if (mask && mask->size() != m) {
    throw DimensionError("forward: mask covers " + std::to_string(mask->size()) +
                         " fields but model has " + std::to_string(m));
  }
  const bool gated = gates && gates->defined();
  if (gated && mask && !mask->keeps_all()) {
    throw UsageError("forward: gates and a field mask cannot be combined");
  }
  const std::size_t n = batch.rows();
  std::vector<Value> blocks;
  blocks.reserve(m);
  std::vector<std::uint32_t> idx(n);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t col = params.field_ids[k];
    if (col >= batch.num_fields) {
      throw LookupError("forward: batch has no column for field " + std::to_string(col));
    }
    const std::size_t e = params.embeddings[k].cols();
    if (mask && !mask->keeps(k)) {
      blocks.push_back(Value::zeros({n, e}));
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) idx[i] = batch.keys[i * batch.num_fields + col];
    blocks.push_back(
        diff::embedding_gather(tape, params.embeddings[k], idx, "field " + std::to_string(col)));
  }
  if (gated) blocks = apply_gates(tape, blocks, *gates);
  Value h = diff::concat_cols(tape, blocks);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = diff::add_rows(tape, diff::matmul(tape, h, params.layers[l].weight), params.layers[l].bias);
    if (l + 1 < params.layers.size()) h = diff::relu(tape, h);
  }
  return diff::clamp(tape, diff::sigmoid(tape, h), diff::kProbFloor, diff::kProbCeil);
}

std::vector<double> predict(const ModelParams& params, const BatchView& batch, const FieldMask* mask) {
  // Constant copies keep the tape from recording backward rules.
  ModelParams frozen;
  frozen.field_ids = params.field_ids;
  frozen.hidden = params.hidden;
  auto freeze = [](const Value& v) {
    return Value::constant(v.shape(), {v.data().begin(), v.data().end()});
  };
  for (const auto& e : params.embeddings) frozen.embeddings.push_back(freeze(e));
  for (const auto& l : params.layers) frozen.layers.push_back({freeze(l.weight), freeze(l.bias)});

  constexpr std::size_t kChunk = 4096;
  const std::size_t n = batch.rows();
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t len = std::min(kChunk, n - start);
    BatchView chunk{batch.keys.subspan(start * batch.num_fields, len * batch.num_fields),
                    batch.num_fields};
    diff::Tape tape;
    const Value p = forward(tape, frozen, chunk, mask);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

}  // namespace fscd
