#include "fscd/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fscd/diffcore.hpp"
#include "fscd/errors.hpp"
#include "fscd/hash.hpp"
#include "fscd/random.hpp"
#include "json_util.hpp"

namespace fscd {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'S', 'C', 'D', 'D', 'S', '\0', '\1'};
constexpr std::uint32_t kBinaryVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t get(int width) {
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) {
      throw FormatError("dataset file truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  bool done() const { return pos_ == bytes_.size(); }
  void expect(std::string_view s) {
    if (bytes_.compare(pos_, s.size(), s) != 0) throw FormatError("not an fscd dataset file");
    pos_ += s.size();
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// --- Dataset ----------------------------------------------------------------

BatchView Dataset::view(std::size_t start, std::size_t count) const {
  if (start + count > size()) throw LookupError("dataset view out of range");
  return {std::span(keys).subspan(start * num_fields, count * num_fields), num_fields};
}

Dataset Dataset::slice(std::size_t start, std::size_t count) const {
  if (start + count > size()) throw LookupError("dataset slice out of range");
  Dataset d;
  d.num_fields = num_fields;
  d.catalog_hash = catalog_hash;
  d.keys.assign(keys.begin() + start * num_fields, keys.begin() + (start + count) * num_fields);
  d.labels.assign(labels.begin() + start, labels.begin() + start + count);
  if (!latent.empty()) d.latent.assign(latent.begin() + start, latent.begin() + start + count);
  return d;
}

double Dataset::positive_rate() const {
  if (labels.empty()) return 0.0;
  double pos = 0;
  for (auto y : labels) pos += y;
  return pos / static_cast<double>(labels.size());
}

void Dataset::validate(const FeatureCatalog& catalog) const {
  if (num_fields != catalog.size()) {
    throw FormatError("dataset has " + std::to_string(num_fields) + " fields, catalog has " +
                      std::to_string(catalog.size()));
  }
  if (keys.size() != labels.size() * num_fields) throw FormatError("dataset key/label count mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < num_fields; ++j) {
      const auto k = keys[i * num_fields + j];
      if (k >= catalog.field(j).num_keys) {
        throw LookupError("sample " + std::to_string(i) + ": key " + std::to_string(k) +
                          " out of range for field '" + catalog.field(j).name + "'");
      }
    }
    if (labels[i] > 1) throw FormatError("sample " + std::to_string(i) + ": label must be 0 or 1");
  }
}

std::string Dataset::to_binary() const {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kBinaryVersion);
  put_u64(out, catalog_hash);
  put_u64(out, size());
  put_u32(out, static_cast<std::uint32_t>(num_fields));
  out.reserve(out.size() + size() * (4 + 4 * num_fields + 1));
  for (std::size_t i = 0; i < size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(num_fields));
    for (std::size_t j = 0; j < num_fields; ++j) put_u32(out, keys[i * num_fields + j]);
    out.push_back(static_cast<char>(labels[i]));
  }
  return out;
}

Dataset Dataset::from_binary(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect(std::string_view(kMagic, sizeof kMagic));
  if (r.u32() != kBinaryVersion) throw FormatError("unsupported dataset version");
  Dataset d;
  d.catalog_hash = r.u64();
  const auto n = r.u64();
  d.num_fields = r.u32();
  d.keys.reserve(n * d.num_fields);
  d.labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (r.u32() != d.num_fields) throw FormatError("row " + std::to_string(i) + ": bad length prefix");
    for (std::size_t j = 0; j < d.num_fields; ++j) d.keys.push_back(r.u32());
    d.labels.push_back(r.u8());
  }
  if (!r.done()) throw FormatError("trailing bytes after dataset rows");
  return d;
}

std::string Dataset::to_csv(const FeatureCatalog& catalog) const {
  std::ostringstream os;
  os << "# fscd-dataset v1 catalog_hash=" << hex64(catalog_hash) << " n_samples=" << size()
     << " M=" << num_fields << '\n';
  for (const auto& f : catalog.fields()) os << f.name << ',';
  os << "label\n";
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < num_fields; ++j) os << keys[i * num_fields + j] << ',';
    os << static_cast<int>(labels[i]) << '\n';
  }
  return os.str();
}

Dataset Dataset::from_csv(const std::string& text, const FeatureCatalog& catalog) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# fscd-dataset v1 ", 0) != 0) {
    throw FormatError("missing fscd-dataset v1 header line");
  }
  Dataset d;
  std::size_t n_expected = 0;
  {
    std::istringstream hs(line.substr(18));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError("bad header token '" + tok + "'");
      const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "catalog_hash") d.catalog_hash = parse_hex64(val);
      else if (key == "n_samples") n_expected = std::stoull(val);
      else if (key == "M") d.num_fields = std::stoull(val);
      else throw FormatError("unknown header key '" + key + "'");
    }
  }
  if (d.num_fields != catalog.size()) throw FormatError("CSV field count does not match catalog");
  if (!std::getline(in, line)) throw FormatError("missing CSV column header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      const auto v = std::stoul(cell);
      if (col < d.num_fields) d.keys.push_back(static_cast<std::uint32_t>(v));
      else d.labels.push_back(static_cast<std::uint8_t>(v));
      ++col;
    }
    if (col != d.num_fields + 1) throw FormatError("CSV row has " + std::to_string(col) + " cells");
  }
  if (d.size() != n_expected) throw FormatError("CSV row count does not match header");
  return d;
}

void Dataset::save_binary(const std::string& path) const { detail::write_text_file(path, to_binary()); }

void Dataset::save_csv(const std::string& path, const FeatureCatalog& catalog) const {
  detail::write_text_file(path, to_csv(catalog));
}

Dataset Dataset::load(const std::string& path, const FeatureCatalog& catalog) {
  const std::string bytes = read_file(path);
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  Dataset d = csv ? from_csv(bytes, catalog) : from_binary(bytes);
  if (d.catalog_hash != catalog.hash()) {
    throw FormatError("dataset " + path + " was generated for catalog " + hex64(d.catalog_hash) +
                      ", not " + hex64(catalog.hash()));
  }
  d.validate(catalog);
  return d;
}

std::uint64_t Dataset::hash() const { return fnv1a(to_binary()); }

// --- generation ---------------------------------------------------------------

void GenSpec::validate(const FeatureCatalog& catalog) const {
  const std::size_t m = catalog.size();
  if (n_samples == 0) throw ConfigError("n_samples must be >= 1");
  if (!(base_rate > 0.0 && base_rate < 1.0)) throw ConfigError("base_rate must lie in (0, 1)");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw ConfigError("noise_scale must be finite and >= 0");
  }
  std::set<std::size_t> informative_set;
  for (const auto& f : informative) {
    if (f.field >= m) throw ConfigError("informative field index out of range");
    if (!std::isfinite(f.weight)) throw ConfigError("informative weights must be finite");
    if (!informative_set.insert(f.field).second) throw ConfigError("informative field listed twice");
  }
  std::set<std::size_t> copies;
  for (const auto& [src, dst] : redundant_pairs) {
    if (src >= m || dst >= m || src == dst) throw ConfigError("invalid redundant pair");
    if (catalog.field(src).num_keys != catalog.field(dst).num_keys) {
      throw ConfigError("redundant pair fields must have the same key count");
    }
    if (informative_set.count(dst)) throw ConfigError("the copy in a redundant pair cannot carry a weight");
    if (!copies.insert(dst).second) throw ConfigError("field copied by two redundant pairs");
  }
  for (const auto& [src, dst] : redundant_pairs) {
    if (copies.count(src)) throw ConfigError("redundant pair source cannot itself be a copy");
  }
}

namespace {

std::vector<std::size_t> source_of(const FeatureCatalog& catalog, const GenSpec& spec) {
  std::vector<std::size_t> src(catalog.size());
  for (std::size_t j = 0; j < src.size(); ++j) src[j] = j;
  for (const auto& [a, b] : spec.redundant_pairs) src[b] = a;
  return src;
}

}  // namespace

std::vector<double> effect_map(const FeatureCatalog& catalog, const GenSpec& spec, std::size_t field) {
  const std::size_t src = source_of(catalog, spec).at(field);
  const auto n = catalog.field(src).num_keys;
  Rng rng(derive_seed(spec.seed, 1000 + src));
  std::vector<double> g(n);
  for (auto& x : g) x = rng.normal();
  if (n > 1) {
    double mean = 0.0;
    for (double x : g) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : g) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (auto& x : g) x = sd > 0 ? (x - mean) / sd : 0.0;
  } else {
    g[0] = 0.0;
  }
  return g;
}

Dataset generate(const FeatureCatalog& catalog, const GenSpec& spec, Split split) {
  spec.validate(catalog);
  const std::size_t m = catalog.size();
  const std::size_t n = split == Split::Train ? spec.n_samples : spec.n_heldout;
  const auto src = source_of(catalog, spec);
  std::vector<std::vector<double>> g(m);
  for (const auto& f : spec.informative) g[f.field] = effect_map(catalog, spec, f.field);

  const double base = std::log(spec.base_rate) - std::log1p(-spec.base_rate);
  Rng rng(derive_seed(spec.seed, split == Split::Train ? 1 : 2));
  Dataset d;
  d.num_fields = m;
  d.catalog_hash = catalog.hash();
  d.keys.resize(n * m);
  d.labels.resize(n);
  d.latent.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t* row = d.keys.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      if (src[j] == j) row[j] = static_cast<std::uint32_t>(rng.below(catalog.field(j).num_keys));
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (src[j] != j) row[j] = row[src[j]];
    }
    double s = base;
    for (const auto& f : spec.informative) s += f.weight * g[f.field][row[f.field]];
    d.latent[i] = s;
    const double noisy = s + spec.noise_scale * rng.normal();
    d.labels[i] = rng.uniform() < diff::sigmoid(noisy) ? 1 : 0;
  }
  return d;
}

// --- standard benchmark ---------------------------------------------------------

namespace {

struct FieldDef {
  const char* name;
  FeatureType type;
  std::uint64_t keys;
};

// Type mix loosely follows a production catalog: mostly simple per-request
// fields, a sizeable block of complex per-request fields, few per-item ones.
constexpr FieldDef kBenchmarkFields[] = {
    {"user_segment", FeatureType::I, 24},        // 0  informative, pair source
    {"query_category", FeatureType::I, 40},      // 1  informative
    {"user_age_bucket", FeatureType::I, 12},     // 2
    {"user_gender", FeatureType::I, 4},          // 3
    {"user_city", FeatureType::I, 200},          // 4
    {"query_length", FeatureType::I, 16},        // 5
    {"user_device", FeatureType::I, 8},          // 6
    {"query_hour", FeatureType::I, 24},          // 7
    {"user_level", FeatureType::I, 10},          // 8
    {"item_brand_match", FeatureType::II, 60},   // 9  informative
    {"item_price_bucket", FeatureType::II, 32},  // 10
    {"user_click_seq", FeatureType::III, 50},    // 11 informative
    {"user_purchase_seq", FeatureType::III, 400},// 12
    {"query_rewrite", FeatureType::III, 150},    // 13
    {"user_long_term", FeatureType::III, 500},   // 14
    {"user_session", FeatureType::III, 100},     // 15
    {"user_pref_category", FeatureType::III, 80},// 16
    {"item_ctr_cross", FeatureType::IV, 30},     // 17 informative
    {"item_segment_cross", FeatureType::IV, 24}, // 18 pair copy of 0
    {"item_query_sim", FeatureType::IV, 250},    // 19
};

constexpr std::uint32_t kBenchmarkEmbedDim = 4;

}  // namespace

std::pair<std::size_t, std::size_t> standard_redundant_pair() { return {0, 18}; }

Benchmark standard_benchmark() {
  std::vector<FeatureField> fields;
  for (const auto& def : kBenchmarkFields) {
    FeatureField f;
    f.name = def.name;
    f.type = def.type;
    f.scope = scope_of(def.type);
    f.online_cost = default_online_cost(def.type);
    f.embed_dim = kBenchmarkEmbedDim;
    f.num_keys = def.keys;
    fields.push_back(std::move(f));
  }
  Benchmark b{FeatureCatalog(std::move(fields)), {}};
  b.spec.informative = {{0, 1.2}, {1, 1.0}, {9, 0.8}, {11, 0.7}, {17, 0.6}};
  b.spec.redundant_pairs = {standard_redundant_pair()};
  b.spec.base_rate = 0.3;
  b.spec.noise_scale = 0.5;
  b.spec.n_samples = 50000;
  b.spec.n_heldout = 10000;
  b.spec.seed = 20210711;
  return b;
}

// --- spec files -----------------------------------------------------------------

json gen_spec_to_json(const Benchmark& b) {
  json informative = json::array();
  for (const auto& f : b.spec.informative)
    informative.push_back({{"field", b.catalog.field(f.field).name}, {"weight", f.weight}});
  json pairs = json::array();
  for (const auto& [src, dst] : b.spec.redundant_pairs)
    pairs.push_back({b.catalog.field(src).name, b.catalog.field(dst).name});
  return {{"format", "fscd-genspec"},
          {"version", 1},
          {"catalog", b.catalog.to_json()},
          {"informative", informative},
          {"redundant_pairs", pairs},
          {"base_rate", b.spec.base_rate},
          {"noise_scale", b.spec.noise_scale},
          {"n_samples", b.spec.n_samples},
          {"n_heldout", b.spec.n_heldout},
          {"seed", b.spec.seed}};
}

Benchmark gen_spec_from_json(const json& j) {
  const std::string where = "generator spec";
  detail::reject_unknown_keys(j, {"format", "version", "catalog", "informative", "redundant_pairs",
                                  "base_rate", "noise_scale", "n_samples", "n_heldout", "seed"},
                              where);
  if (j.contains("format") && j.at("format") != "fscd-genspec") {
    throw FormatError("generator spec format tag must be 'fscd-genspec'");
  }
  if (!j.contains("catalog")) throw ConfigError("generator spec requires an embedded 'catalog'");
  Benchmark b{FeatureCatalog::from_json(j.at("catalog")), {}};
  for (const auto& jf : j.value("informative", json::array())) {
    detail::reject_unknown_keys(jf, {"field", "weight"}, "informative entry");
    b.spec.informative.push_back(
        {b.catalog.index_of(detail::required<std::string>(jf, "field", "informative entry")),
         detail::required<double>(jf, "weight", "informative entry")});
  }
  for (const auto& jp : j.value("redundant_pairs", json::array())) {
    if (!jp.is_array() || jp.size() != 2) throw ConfigError("redundant pair must be [source, copy]");
    b.spec.redundant_pairs.emplace_back(b.catalog.index_of(jp[0].get<std::string>()),
                                        b.catalog.index_of(jp[1].get<std::string>()));
  }
  b.spec.base_rate = detail::optional<double>(j, "base_rate", 0.5, where);
  b.spec.noise_scale = detail::optional<double>(j, "noise_scale", 0.0, where);
  const auto n = detail::required<std::int64_t>(j, "n_samples", where);
  const auto nh = detail::optional<std::int64_t>(j, "n_heldout", 0, where);
  if (n < 0 || nh < 0) throw ConfigError("sample counts must be non-negative");
  b.spec.n_samples = static_cast<std::size_t>(n);
  b.spec.n_heldout = static_cast<std::size_t>(nh);
  b.spec.seed = detail::optional<std::uint64_t>(j, "seed", 0, where);
  b.spec.validate(b.catalog);
  return b;
}

Benchmark load_gen_spec(const std::string& path) {
  return gen_spec_from_json(detail::read_json_file(path, "generator spec"));
}

}  // namespace fscd
