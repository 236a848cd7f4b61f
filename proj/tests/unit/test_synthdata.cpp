#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "fscd/errors.hpp"
#include "fscd/evalcost.hpp"
#include "fscd/pipeline.hpp"
#include "fscd/synthdata.hpp"

using namespace fscd;

namespace {

FeatureCatalog flat_catalog(std::size_t m, std::uint64_t keys) {
  std::vector<FeatureField> fields;
  for (std::size_t j = 0; j < m; ++j) {
    FeatureField f;
    f.name = "x" + std::to_string(j);
    f.online_cost = 0.4;
    f.embed_dim = 4;
    f.num_keys = keys;
    fields.push_back(f);
  }
  return FeatureCatalog(std::move(fields));
}

double trained_heldout_auc(const FeatureCatalog& cat, const GenSpec& spec, std::size_t steps) {
  const auto train = generate(cat, spec, Split::Train);
  const auto held = generate(cat, spec, Split::Heldout);
  TrainConfig cfg;
  cfg.seed = 3;
  const std::vector<std::size_t> arch = {16};
  const auto model = train_full(cat, train, cfg, arch, steps);
  return auc(predict(model, held.view()), held.labels);
}

}  // namespace

TEST_CASE("GenSpec validation") {
  const auto cat = flat_catalog(3, 10);
  GenSpec s;
  s.n_samples = 0;
  CHECK_THROWS_AS(s.validate(cat), ConfigError);
  s.n_samples = 10;
  s.informative = {{3, 1.0}};
  CHECK_THROWS_AS(s.validate(cat), ConfigError);
  s.informative = {{0, std::nan("")}};
  CHECK_THROWS_AS(s.validate(cat), ConfigError);
  s.informative = {{0, 1.0}};
  s.redundant_pairs = {{1, 0}};
  CHECK_THROWS_AS(s.validate(cat), ConfigError);
  s.redundant_pairs = {{0, 1}};
  CHECK_NOTHROW(s.validate(cat));
  s.base_rate = 1.0;
  CHECK_THROWS_AS(s.validate(cat), ConfigError);
  CHECK_THROWS_AS(generate(cat, s), ConfigError);
}

TEST_CASE("keys lie inside their field's range") {
  auto b = standard_benchmark();
  b.spec.n_samples = 2000;
  const auto d = generate(b.catalog, b.spec);
  CHECK(d.size() == 2000);
  CHECK(d.num_fields == 20);
  CHECK_NOTHROW(d.validate(b.catalog));
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.num_fields; ++j) CHECK(d.keys[i * 20 + j] < b.catalog.field(j).num_keys);
}

TEST_CASE("effect maps are standardized") {
  const auto b = standard_benchmark();
  for (std::size_t j : {0u, 9u, 17u}) {
    const auto g = effect_map(b.catalog, b.spec, j);
    REQUIRE(g.size() == b.catalog.field(j).num_keys);
    double mean = 0.0, sq = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(g.size());
    for (double v : g) sq += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(sq / static_cast<double>(g.size()) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("generation is byte-deterministic per seed") {
  auto b = standard_benchmark();
  b.spec.n_samples = 3000;
  b.spec.n_heldout = 500;
  CHECK(generate(b.catalog, b.spec).to_binary() == generate(b.catalog, b.spec).to_binary());
  CHECK(generate(b.catalog, b.spec, Split::Heldout).to_binary() ==
        generate(b.catalog, b.spec, Split::Heldout).to_binary());
  auto other = b.spec;
  other.seed += 1;
  CHECK(generate(b.catalog, other).to_binary() != generate(b.catalog, b.spec).to_binary());
  CHECK(generate(b.catalog, b.spec, Split::Heldout).keys != generate(b.catalog, b.spec).slice(0, 500).keys);
}

TEST_CASE("redundant pair members carry identical information") {
  auto b = standard_benchmark();
  b.spec.n_samples = 5000;
  const auto [src, dst] = standard_redundant_pair();
  CHECK(b.catalog.field(src).online_cost == 0.4);
  CHECK(b.catalog.field(dst).online_cost == 3.0);
  CHECK(effect_map(b.catalog, b.spec, src) == effect_map(b.catalog, b.spec, dst));
  const auto d = generate(b.catalog, b.spec);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.keys[i * 20 + src] == d.keys[i * 20 + dst]);
}

TEST_CASE("standard benchmark shape") {
  const auto b = standard_benchmark();
  CHECK(b.catalog.size() == 20);
  std::set<FeatureType> types;
  for (const auto& f : b.catalog.fields()) types.insert(f.type);
  CHECK(types.size() == 4);
  CHECK(b.spec.informative.size() == 5);
  CHECK(b.spec.redundant_pairs.size() == 1);
  CHECK(b.spec.n_samples == 50000);
  CHECK(b.spec.n_heldout == 10000);
  CHECK_NOTHROW(b.spec.validate(b.catalog));
}

TEST_CASE("label rate follows the base rate without signal") {
  const auto cat = flat_catalog(2, 10);
  GenSpec s;
  s.base_rate = 0.3;
  s.n_samples = 100000;
  const auto d = generate(cat, s);
  CHECK(std::abs(d.positive_rate() - 0.3) < 0.006);
}

TEST_CASE("binary and CSV round trips") {
  auto b = standard_benchmark();
  b.spec.n_samples = 257;
  const auto d = generate(b.catalog, b.spec);
  const auto fromb = Dataset::from_binary(d.to_binary());
  CHECK(fromb.keys == d.keys);
  CHECK(fromb.labels == d.labels);
  CHECK(fromb.catalog_hash == d.catalog_hash);
  const auto fromc = Dataset::from_csv(d.to_csv(b.catalog), b.catalog);
  CHECK(fromc.keys == d.keys);
  CHECK(fromc.labels == d.labels);
  CHECK(fromc.hash() == fromb.hash());

  const auto dir = std::filesystem::temp_directory_path();
  const auto bin = (dir / "fscd_rt.fscd").string(), csv = (dir / "fscd_rt.csv").string();
  d.save_binary(bin);
  d.save_csv(csv, b.catalog);
  CHECK(Dataset::load(bin, b.catalog).hash() == d.hash());
  CHECK(Dataset::load(csv, b.catalog).hash() == d.hash());
  std::filesystem::remove(bin);
  std::filesystem::remove(csv);

  auto bytes = d.to_binary();
  CHECK_THROWS_AS(Dataset::from_binary(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(Dataset::from_binary("garbage"), FormatError);
}

TEST_CASE("no informative fields gives chance-level held-out AUC") {
  const auto cat = flat_catalog(3, 20);
  GenSpec s;
  s.noise_scale = 0.5;
  s.n_samples = 20000;
  s.n_heldout = 10000;
  s.seed = 77;
  CHECK(std::abs(trained_heldout_auc(cat, s, 400) - 0.5) <= 0.02);
}

TEST_CASE("a single heavily weighted field is learnable") {
  const auto cat = flat_catalog(1, 50);
  GenSpec s;
  s.informative = {{0, 10.0}};
  s.n_samples = 20000;
  s.n_heldout = 5000;
  s.seed = 78;
  CHECK(trained_heldout_auc(cat, s, 600) > 0.95);
}
