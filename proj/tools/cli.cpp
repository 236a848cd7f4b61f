#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "fscd/errors.hpp"
#include "fscd/hash.hpp"
#include "fscd/version.hpp"
#include "fscd/workflow.hpp"
#include "json_util.hpp"

namespace fscd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct WouldOverwrite : Error {
  using Error::Error;
};

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_hash(const std::string& path) { return hex64(fnv1a(read_bytes(path))); }

// Refuses before any work is done, so a refused command leaves no partial output.
void guard_outputs(const fs::path& dir, const std::vector<std::string>& names, bool force) {
  if (force) return;
  for (const auto& n : names) {
    if (fs::exists(dir / n)) {
      throw WouldOverwrite((dir / n).string() + " already exists (pass --force to overwrite)");
    }
  }
}

void write_json(const fs::path& path, const json& j) { detail::write_text_file(path.string(), j.dump(2) + "\n"); }

json manifest_base(const char* command) {
  return {{"format", "fscd-manifest"}, {"version", 1}, {"command", command}, {"fscd_version", kVersion}};
}

json artifact_entries(const fs::path& dir, const std::vector<std::string>& names) {
  json a = json::object();
  for (const auto& n : names) a[n] = file_hash((dir / n).string());
  return a;
}

// Seed precedence: --seed, then train_config.seed in the file, then FSCD_SEED,
// then the built-in default.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const json& raw, std::uint64_t fallback) {
  if (flag) return *flag;
  if (raw.contains("train_config") && raw.at("train_config").contains("seed")) {
    return raw.at("train_config").at("seed").get<std::uint64_t>();
  }
  if (const char* env = std::getenv("FSCD_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("FSCD_SEED is not an unsigned integer: ") + env);
    return v;
  }
  return fallback;
}

struct RunOverrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  bool force = false;
  bool no_reference = false;
};

void add_run_overrides(CLI::App* sub, RunOverrides& o) {
  sub->add_option("-c,--config", o.config, "run config JSON")->required();
  sub->add_option("--seed", o.seed, "training seed (overrides config and FSCD_SEED)");
  sub->add_option("--mode", o.mode, "prior mode")->check(CLI::IsMember({"fscd", "constant-alpha"}));
  sub->add_option("-o,--out", o.out, "output directory (overrides config)");
  sub->add_flag("--force", o.force, "overwrite existing outputs");
}

struct Loaded {
  RunConfig config;
  FeatureCatalog catalog;
  Dataset train;
  Dataset heldout;
};

Loaded load_run(const RunOverrides& o) {
  const json raw = detail::read_json_file(o.config, "run config");
  const auto base = fs::path(o.config).parent_path().string();
  RunConfig rc = RunConfig::from_json(raw, base.empty() ? "." : base);
  rc.train.seed = resolve_seed(o.seed, raw, rc.train.seed);
  if (o.k) rc.train.k = *o.k;
  if (o.mode) rc.train.mode = parse_prior_mode(*o.mode);
  if (o.out) rc.out_dir = *o.out;
  if (o.no_reference) rc.train_reference = false;
  FeatureCatalog catalog = FeatureCatalog::load(rc.catalog_path);
  rc.validate(catalog.size());
  Dataset train = Dataset::load(rc.train_path, catalog);
  Dataset heldout = Dataset::load(rc.heldout_path, catalog);
  return {std::move(rc), std::move(catalog), std::move(train), std::move(heldout)};
}

json run_manifest(const char* command, const Loaded& l, const fs::path& dir, const std::vector<std::string>& files) {
  json m = manifest_base(command);
  m["seed"] = l.config.train.seed;
  m["config_hash"] = hex64(fnv1a(l.config.to_json().dump()));
  m["catalog_hash"] = hex64(l.catalog.hash());
  m["datasets"] = {{"train", hex64(l.train.hash())}, {"heldout", hex64(l.heldout.hash())}};
  m["artifacts"] = artifact_entries(dir, files);
  return m;
}

// --- gen ----------------------------------------------------------------------

struct GenOptions {
  std::string spec;
  bool standard = false;
  std::string out;
  std::string format = "bin";
  bool force = false;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
  const Benchmark b = o.standard ? standard_benchmark() : load_gen_spec(o.spec);
  b.spec.validate(b.catalog);
  const std::string ext = o.format == "csv" ? ".csv" : ".fscd";
  const fs::path dir(o.out);
  const std::vector<std::string> data_files = {"catalog.json", "genspec.json", "train" + ext, "heldout" + ext,
                                               "run.json"};
  auto all = data_files;
  all.push_back("manifest.json");
  guard_outputs(dir, all, o.force);
  fs::create_directories(dir);

  const Dataset train = generate(b.catalog, b.spec, Split::Train);
  const Dataset heldout = generate(b.catalog, b.spec, Split::Heldout);
  b.catalog.save((dir / "catalog.json").string());
  write_json(dir / "genspec.json", gen_spec_to_json(b));
  if (o.format == "csv") {
    train.save_csv((dir / ("train" + ext)).string(), b.catalog);
    heldout.save_csv((dir / ("heldout" + ext)).string(), b.catalog);
  } else {
    train.save_binary((dir / ("train" + ext)).string());
    heldout.save_binary((dir / ("heldout" + ext)).string());
  }
  RunConfig rc;
  rc.catalog_path = "catalog.json";
  rc.train_path = "train" + ext;
  rc.heldout_path = "heldout" + ext;
  rc.out_dir = "run";
  // No seed in the generated config, so FSCD_SEED can supply one.
  json run_json = rc.to_json();
  run_json["train_config"].erase("seed");
  write_json(dir / "run.json", run_json);

  json m = manifest_base("gen");
  m["seed"] = b.spec.seed;
  m["spec_hash"] = hex64(fnv1a(gen_spec_to_json(b).dump()));
  m["catalog_hash"] = hex64(b.catalog.hash());
  m["datasets"] = {{"train", hex64(train.hash())}, {"heldout", hex64(heldout.hash())}};
  m["artifacts"] = artifact_entries(dir, data_files);
  write_json(dir / "manifest.json", m);
  out << "wrote " << train.size() << " train and " << heldout.size() << " held-out samples to " << dir.string()
      << '\n';
  return kOk;
}

// --- run ----------------------------------------------------------------------

int cmd_run(const RunOverrides& o, std::ostream& out) {
  Loaded l = load_run(o);
  const fs::path dir(l.config.out_dir);
  std::vector<std::string> files = {"config.json",          "report.json",          "report.csv", "summary.txt",
                                    "selection.ckpt.json", "preranking.ckpt.json"};
  if (l.config.train_reference) files.push_back("reference.ckpt.json");
  auto all = files;
  all.push_back("manifest.json");
  guard_outputs(dir, all, o.force);

  RunArtifacts a = execute_run(l.catalog, l.train, l.heldout, l.config.train, l.config.cost, l.config.recall,
                               l.config.train_reference);
  fs::create_directories(dir);
  write_json(dir / "config.json", l.config.to_json());
  write_json(dir / "report.json", a.report.to_json());
  detail::write_text_file((dir / "report.csv").string(), a.report.to_csv());
  const std::string summary = a.report.summary();
  detail::write_text_file((dir / "summary.txt").string(), summary);
  a.selection.warm_params.save((dir / "selection.ckpt.json").string());
  a.preranking.save((dir / "preranking.ckpt.json").string());
  if (a.reference) a.reference->save((dir / "reference.ckpt.json").string());
  write_json(dir / "manifest.json", run_manifest("run", l, dir, files));
  out << summary;
  return kOk;
}

// --- sweep --------------------------------------------------------------------

int cmd_sweep(const RunOverrides& o, const std::vector<std::size_t>& k_list, std::ostream& out) {
  Loaded l = load_run(o);
  const fs::path dir(l.config.out_dir);
  guard_outputs(dir, {"sweep.csv", "sweep_manifest.json"}, o.force);
  for (auto k : k_list) {
    if (k < 1 || k > l.catalog.size()) {
      throw ConfigError("--k-list entry " + std::to_string(k) + " outside [1, " +
                        std::to_string(l.catalog.size()) + "]");
    }
  }
  const SelectionOutcome sel = train_selection(l.catalog, l.train, l.config.train);
  const auto rows = sweep(l.catalog, sel, l.train, l.heldout, l.config.train, l.config.cost, k_list);
  fs::create_directories(dir);
  const std::string csv = sweep_csv(rows);
  detail::write_text_file((dir / "sweep.csv").string(), csv);
  json m = run_manifest("sweep", l, dir, {"sweep.csv"});
  m["k_list"] = k_list;
  write_json(dir / "sweep_manifest.json", m);
  out << csv;
  return kOk;
}

// --- eval ---------------------------------------------------------------------

struct EvalOptions {
  std::string config;
  std::string checkpoint;
  std::optional<std::string> reference;
  std::optional<std::string> out;
  bool force = false;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const json raw = detail::read_json_file(o.config, "run config");
  const auto base = fs::path(o.config).parent_path().string();
  const RunConfig rc = RunConfig::from_json(raw, base.empty() ? "." : base);
  const FeatureCatalog catalog = FeatureCatalog::load(rc.catalog_path);
  rc.validate(catalog.size());
  if (o.out && !o.force && fs::exists(*o.out)) {
    throw WouldOverwrite(*o.out + " already exists (pass --force to overwrite)");
  }
  const Dataset heldout = Dataset::load(rc.heldout_path, catalog);
  const ModelParams pre = ModelParams::load(o.checkpoint, catalog);
  const auto pre_scores = predict(pre, heldout.view());
  std::vector<std::string> fields;
  for (auto id : pre.field_ids) fields.push_back(catalog.field(id).name);
  std::vector<std::size_t> ids(pre.field_ids.begin(), pre.field_ids.end());
  json result = {{"format", "fscd-eval"},
                 {"version", 1},
                 {"checkpoint", o.checkpoint},
                 {"fields", fields},
                 {"heldout_auc", auc(pre_scores, heldout.labels)},
                 {"request_cost", request_cost(catalog, ids, rc.cost)},
                 {"n_items", rc.cost.n_items}};
  if (o.reference) {
    const ModelParams ref = ModelParams::load(*o.reference, catalog);
    const auto ref_scores = predict(ref, heldout.view());
    result["reference_auc"] = auc(ref_scores, heldout.labels);
    result["recall"] =
        cascade_recall(ref_scores, pre_scores, rc.recall.candidates, rc.recall.pass_k, rc.recall.top_m);
    result["recall_pass_k"] = rc.recall.pass_k;
    result["recall_top_m"] = rc.recall.top_m;
  }
  const std::string text = result.dump(2) + "\n";
  if (o.out) detail::write_text_file(*o.out, text);
  out << text;
  return kOk;
}

// --- report -------------------------------------------------------------------

int cmd_report(const std::string& path, const std::string& format, std::ostream& out) {
  const SelectionReport r = SelectionReport::from_json(detail::read_json_file(path, "report"));
  if (format == "csv") {
    out << r.to_csv();
  } else if (format == "json") {
    out << r.to_json().dump(2) << '\n';
  } else {
    out << r.summary();
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature selection with complexity priors for pre-ranking models", "fscd"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic benchmark dataset");
  auto* spec_opt = g->add_option("--spec", gen.spec, "generator spec JSON");
  auto* std_opt = g->add_flag("--standard", gen.standard, "use the built-in 20-field benchmark");
  spec_opt->excludes(std_opt);
  g->add_option("-o,--out", gen.out, "output directory")->required();
  g->add_option("--format", gen.format, "dataset file format")->check(CLI::IsMember({"bin", "csv"}));
  g->add_flag("--force", gen.force, "overwrite existing outputs");

  RunOverrides run_o;
  auto* r = app.add_subcommand("run", "select fields, fine-tune and write the report");
  add_run_overrides(r, run_o);
  r->add_option("--k", run_o.k, "number of fields to keep");
  r->add_flag("--no-reference", run_o.no_reference, "skip the reference ranking model");

  RunOverrides sweep_o;
  std::vector<std::size_t> k_list;
  auto* s = app.add_subcommand("sweep", "fine-tune one model per K from a shared selection run");
  add_run_overrides(s, sweep_o);
  s->add_option("--k-list", k_list, "comma-separated K values")->required()->delimiter(',');

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "recompute metrics from checkpoints");
  e->add_option("-c,--config", ev.config, "run config JSON")->required();
  e->add_option("--checkpoint", ev.checkpoint, "pre-ranking checkpoint")->required();
  e->add_option("--reference", ev.reference, "reference checkpoint (enables recall)");
  e->add_option("-o,--out", ev.out, "also write the metrics JSON here");
  e->add_flag("--force", ev.force, "overwrite an existing --out file");

  std::string report_path, report_format = "summary";
  auto* rp = app.add_subcommand("report", "reprint a report file");
  rp->add_option("report", report_path, "report.json")->required();
  rp->add_option("--format", report_format, "output format")->check(CLI::IsMember({"summary", "csv", "json"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*g) {
      if (!gen.standard && gen.spec.empty()) throw ConfigError("gen needs --spec FILE or --standard");
      return cmd_gen(gen, out);
    }
    if (*r) return cmd_run(run_o, out);
    if (*s) return cmd_sweep(sweep_o, k_list, out);
    if (*e) return cmd_eval(ev, out);
    if (*rp) return cmd_report(report_path, report_format, out);
  } catch (const WouldOverwrite& ex) {
    err << "fscd: " << ex.what() << '\n';
    return kWouldOverwrite;
  } catch (const NumericError& ex) {
    err << "fscd: numeric failure: " << ex.what() << '\n';
    return kNumeric;
  } catch (const Error& ex) {
    err << "fscd: " << ex.what() << '\n';
    return kValidation;
  } catch (const nlohmann::json::exception& ex) {
    err << "fscd: malformed JSON value: " << ex.what() << '\n';
    return kValidation;
  } catch (const fs::filesystem_error& ex) {
    err << "fscd: " << ex.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace fscd::cli
