#include "fscd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fscd/errors.hpp"
#include "fscd/gates.hpp"
#include "fscd/random.hpp"
#include "json_util.hpp"

namespace fscd {

using diff::Value;
using nlohmann::json;

std::string_view to_string(USampling s) {
  return s == USampling::PerStep ? "per-step" : "per-batch-sample";
}

USampling parse_u_sampling(std::string_view s) {
  if (s == "per-step") return USampling::PerStep;
  if (s == "per-batch-sample") return USampling::PerSample;
  throw ConfigError("unknown u_sampling '" + std::string(s) + "' (expected per-step or per-batch-sample)");
}

// --- TrainConfig ------------------------------------------------------------

void TrainConfig::validate(std::size_t m) const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be finite and >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (!std::isfinite(gate_learning_rate)) fail("gate_learning_rate must be finite");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (steps_selection == 0) fail("steps_selection must be >= 1");
  if (k < 1 || k > m) fail("k must lie in [1, " + std::to_string(m) + "]");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
  for (auto h : preranking_arch)
    if (h == 0) fail("preranking_arch sizes must be positive");
  for (auto h : ranking_arch)
    if (h == 0) fail("ranking_arch sizes must be positive");
}

json TrainConfig::to_json() const {
  return {{"lambda", lambda},
          {"learning_rate", learning_rate},
          {"gate_learning_rate", gate_learning_rate},
          {"momentum", momentum},
          {"batch_size", batch_size},
          {"steps_selection", steps_selection},
          {"steps_finetune", steps_finetune},
          {"steps_reference", steps_reference},
          {"seed", seed},
          {"u_sampling", std::string(to_string(u_sampling))},
          {"k", k},
          {"temperature", temperature},
          {"clip_norm", clip_norm},
          {"mode", std::string(to_string(mode))},
          {"preranking_arch", preranking_arch},
          {"ranking_arch", ranking_arch}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  const std::string where = "train config";
  detail::reject_unknown_keys(
      j, {"lambda", "learning_rate", "gate_learning_rate", "momentum", "batch_size", "steps_selection",
          "steps_finetune", "steps_reference", "seed", "u_sampling", "k", "temperature", "clip_norm",
          "mode", "preranking_arch", "ranking_arch"},
      where);
  TrainConfig c;
  using detail::optional;
  c.lambda = optional<double>(j, "lambda", c.lambda, where);
  c.learning_rate = optional<double>(j, "learning_rate", c.learning_rate, where);
  c.gate_learning_rate = optional<double>(j, "gate_learning_rate", c.gate_learning_rate, where);
  c.momentum = optional<double>(j, "momentum", c.momentum, where);
  c.batch_size = optional<std::size_t>(j, "batch_size", c.batch_size, where);
  c.steps_selection = optional<std::size_t>(j, "steps_selection", c.steps_selection, where);
  c.steps_finetune = optional<std::size_t>(j, "steps_finetune", c.steps_finetune, where);
  c.steps_reference = optional<std::size_t>(j, "steps_reference", c.steps_reference, where);
  c.seed = optional<std::uint64_t>(j, "seed", c.seed, where);
  if (j.contains("u_sampling")) c.u_sampling = parse_u_sampling(detail::required<std::string>(j, "u_sampling", where));
  c.k = optional<std::size_t>(j, "k", c.k, where);
  c.temperature = optional<double>(j, "temperature", c.temperature, where);
  c.clip_norm = optional<double>(j, "clip_norm", c.clip_norm, where);
  if (j.contains("mode")) c.mode = parse_prior_mode(detail::required<std::string>(j, "mode", where));
  c.preranking_arch = optional<std::vector<std::size_t>>(j, "preranking_arch", c.preranking_arch, where);
  c.ranking_arch = optional<std::vector<std::size_t>>(j, "ranking_arch", c.ranking_arch, where);
  return c;
}

// --- training machinery -------------------------------------------------------

namespace {

// Epoch-wise shuffled mini-batches, copied into contiguous buffers.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, std::uint64_t seed) : data_(data), rng_(seed) {
    if (data.size() == 0) throw ConfigError("training data is empty");
    order_.resize(data.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = order_.size();
  }

  void next(std::size_t batch_size) {
    const std::size_t m = data_.num_fields;
    keys_.resize(batch_size * m);
    labels_.resize(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (pos_ == order_.size()) reshuffle();
      const std::size_t i = order_[pos_++];
      std::copy_n(data_.keys.begin() + i * m, m, keys_.begin() + b * m);
      labels_[b] = data_.labels[i];
    }
  }

  BatchView view() const { return {keys_, data_.num_fields}; }
  std::span<const std::uint8_t> labels() const { return labels_; }

 private:
  void reshuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    pos_ = 0;
  }

  const Dataset& data_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::vector<std::uint32_t> keys_;
  std::vector<std::uint8_t> labels_;
};

// SGD with heavy-ball momentum: v <- mu v + g; p <- p - lr v.
class MomentumSgd {
 public:
  void add(const Value& param, double lr) {
    groups_.push_back({param, std::vector<double>(param.size(), 0.0), lr});
  }

  void zero_grad() {
    for (auto& g : groups_) g.param.zero_grad();
  }

  // Rescales all gradients so their joint l2 norm is at most max_norm.
  void clip(double max_norm) {
    double sq = 0.0;
    for (const auto& g : groups_)
      for (double x : g.param.grad()) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm > max_norm)) return;
    const double f = max_norm / norm;
    for (auto& g : groups_)
      for (auto& x : g.param.grad_buffer()) x *= f;
  }

  void step(double momentum) {
    for (auto& g : groups_) {
      auto data = g.param.mutable_data();
      const auto grad = g.param.grad();
      for (std::size_t i = 0; i < data.size(); ++i) {
        g.velocity[i] = momentum * g.velocity[i] + grad[i];
        data[i] -= g.lr * g.velocity[i];
      }
    }
  }

 private:
  struct Group {
    Value param;
    std::vector<double> velocity;
    double lr;
  };
  std::vector<Group> groups_;
};

[[noreturn]] void diverged(const char* phase, std::size_t step, double lr, const std::string& cause) {
  std::ostringstream os;
  os << phase << " diverged at step " << step << " (learning rate " << lr << "): " << cause;
  throw NumericError(os.str());
}

// Forward-pass failures (e.g. NaN probabilities) are reported as divergence
// of the step that produced them.
template <typename Fn>
double guarded_loss(const char* phase, std::size_t step, double lr, Fn build) {
  double lv = 0.0;
  try {
    lv = build();
  } catch (const NumericError& e) {
    diverged(phase, step, lr, e.what());
  }
  if (!std::isfinite(lv)) {
    std::ostringstream os;
    os << "loss " << lv;
    diverged(phase, step, lr, os.str());
  }
  return lv;
}

// Plain negative log-likelihood training used by fine-tuning and reference models.
void train_nll(ModelParams& params, const Dataset& data, const TrainConfig& config, std::size_t steps,
               std::uint64_t stream, const char* phase, std::vector<double>* history) {
  BatchSampler sampler(data, derive_seed(config.seed, stream));
  MomentumSgd opt;
  for (const auto& p : params.parameters()) opt.add(p, config.learning_rate);
  for (std::size_t step = 0; step < steps; ++step) {
    sampler.next(config.batch_size);
    diff::Tape tape;
    Value loss;
    const double lv = guarded_loss(phase, step, config.learning_rate, [&] {
      const Value p = forward(tape, params, sampler.view());
      loss = diff::binary_cross_entropy(tape, p, sampler.labels());
      return loss.item();
    });
    if (history) history->push_back(lv);
    opt.zero_grad();
    tape.backward(loss);
    opt.clip(config.clip_norm);
    opt.step(config.momentum);
  }
}

}  // namespace

// --- public operations ---------------------------------------------------------

Value fscd_loss(diff::Tape& tape, const Value& p, std::span<const std::uint8_t> labels,
                const ModelParams& params, const Value& z, std::span<const double> alphas, double lambda,
                std::size_t n) {
  if (n == 0) throw ConfigError("fscd_loss: batch size must be >= 1");
  Value loss = diff::binary_cross_entropy(tape, p, labels);
  if (lambda != 0.0) {
    Value l2 = Value::scalar(0.0);
    for (const auto& v : params.parameters()) l2 = diff::add(tape, l2, diff::sum_squares(tape, v));
    loss = diff::add(tape, loss, diff::scale(tape, l2, lambda / static_cast<double>(n)));
  }
  if (z.defined()) loss = diff::add(tape, loss, gate_penalty(tape, z, alphas, n));
  return loss;
}

std::vector<std::size_t> rank_fields(std::span<const double> delta, std::span<const double> complexity) {
  if (delta.size() != complexity.size()) throw DimensionError("rank_fields: length mismatch");
  std::vector<std::size_t> order(delta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (delta[a] != delta[b]) return delta[a] > delta[b];
    if (complexity[a] != complexity[b]) return complexity[a] < complexity[b];
    return a < b;
  });
  return order;
}

FieldMask select_top_k(std::span<const double> delta, const FeatureCatalog& catalog, std::size_t k) {
  const std::size_t m = catalog.size();
  if (delta.size() != m) throw DimensionError("select_top_k: delta length does not match catalog");
  if (k < 1 || k > m) {
    throw ConfigError("select_top_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
  }
  const auto c = catalog.complexities();
  const auto order = rank_fields(delta, c);
  return FieldMask::from_indices(m, std::span(order).first(k));
}

SelectionOutcome train_selection(const FeatureCatalog& catalog, const Dataset& data,
                                 const TrainConfig& config) {
  config.validate(catalog.size());
  if (data.num_fields != catalog.size()) throw ConfigError("dataset does not match catalog width");
  SelectionOutcome out;
  out.priors = catalog.priors(config.mode);
  out.warm_params = init_params(catalog, config.preranking_arch, config.seed);
  GateState gates(out.priors.theta, config.temperature);

  BatchSampler sampler(data, derive_seed(config.seed, 1));
  Rng gate_rng(derive_seed(config.seed, 2));
  MomentumSgd opt;
  for (const auto& p : out.warm_params.parameters()) opt.add(p, config.learning_rate);
  opt.add(gates.keep_logit(), config.effective_gate_lr());

  const std::size_t rows_per_gate = config.u_sampling == USampling::PerStep ? 1 : config.batch_size;
  out.loss_history.reserve(config.steps_selection);
  for (std::size_t step = 0; step < config.steps_selection; ++step) {
    sampler.next(config.batch_size);
    diff::Tape tape;
    Value loss;
    const double lv = guarded_loss("selection training", step, config.learning_rate, [&] {
      const Value z = gates.sample(tape, gate_rng, rows_per_gate);
      const Value p = forward(tape, out.warm_params, sampler.view(), nullptr, &z);
      loss = fscd_loss(tape, p, sampler.labels(), out.warm_params, z, out.priors.alpha, config.lambda,
                       config.batch_size);
      return loss.item();
    });
    out.loss_history.push_back(lv);
    opt.zero_grad();
    tape.backward(loss);
    opt.clip(config.clip_norm);
    opt.step(config.momentum);
  }
  out.delta = gates.deltas();
  out.ranking = rank_fields(out.delta, out.priors.complexity);
  out.selected = select_top_k(out.delta, catalog, config.k);
  return out;
}

ModelParams finetune(const ModelParams& warm, const FieldMask& mask, const Dataset& data,
                     const TrainConfig& config, std::vector<double>* loss_history) {
  ModelParams model = restrict(warm, mask);
  if (config.steps_finetune > 0) {
    train_nll(model, data, config, config.steps_finetune, 3, "fine-tuning", loss_history);
  }
  return model;
}

ModelParams train_full(const FeatureCatalog& catalog, const Dataset& data, const TrainConfig& config,
                       std::span<const std::size_t> arch, std::size_t steps,
                       std::vector<double>* loss_history) {
  if (data.num_fields != catalog.size()) throw ConfigError("dataset does not match catalog width");
  ModelParams model = init_params(catalog, arch, derive_seed(config.seed, 4));
  train_nll(model, data, config, steps, 5, "reference training", loss_history);
  return model;
}

PipelineResult run_algorithm1(const FeatureCatalog& catalog, const Dataset& data,
                              const TrainConfig& config) {
  SelectionOutcome selection = train_selection(catalog, data, config);
  ModelParams pre = finetune(selection.warm_params, selection.selected, data, config);
  return {std::move(selection), std::move(pre)};
}

}  // namespace fscd
