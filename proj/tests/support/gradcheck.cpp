#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fscd/gates.hpp"
#include "fscd/netmodel.hpp"
#include "fscd/pipeline.hpp"
#include "fscd/random.hpp"

namespace fscd::testing {

using diff::Tape;
using diff::Value;

GradCheckResult check_gradients(const std::vector<Value>& params, const LossBuilder& build, double h,
                                 double floor) {
  for (const auto& p : params) p.zero_grad();
  {
    Tape tape;
    const Value loss = build(tape);
    tape.backward(loss);
  }
  GradCheckResult r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Value handle = params[k];  // aliases the parameter's storage
    auto data = handle.mutable_data();
    const std::vector<double> analytic(params[k].grad().begin(), params[k].grad().end());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      Tape t1;
      const double up = build(t1).item();
      data[i] = saved - h;
      Tape t2;
      const double down = build(t2).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = i < analytic.size() ? analytic[i] : 0.0;
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++r.entries;
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = "param" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

namespace {

double in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

// Uniform in [lo, hi] with a random sign.
double away_from_zero(Rng& rng, double lo, double hi) {
  return (rng.uniform() < 0.5 ? -1.0 : 1.0) * in(rng, lo, hi);
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Value random_param(Rng& rng, diff::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(diff::element_count(shape));
  for (auto& x : v) x = in(rng, lo, hi);
  return Value::parameter(std::move(shape), std::move(v));
}

Value signed_param(Rng& rng, diff::Shape shape, double lo, double hi) {
  std::vector<double> v(diff::element_count(shape));
  for (auto& x : v) x = away_from_zero(rng, lo, hi);
  return Value::parameter(std::move(shape), std::move(v));
}

// Projects a non-scalar output onto fixed random weights so every output
// element contributes to the scalar loss with a distinct coefficient.
struct Projector {
  Value weights;
  explicit Projector(Rng& rng, const diff::Shape& shape) {
    std::vector<double> w(diff::element_count(shape));
    for (auto& x : w) x = away_from_zero(rng, 0.5, 1.5);
    weights = Value::constant(shape, std::move(w));
  }
  Value operator()(Tape& t, const Value& out) const { return diff::sum(t, diff::mul(t, out, weights)); }
};

// u values that keep (keep_logit + logit u) / t in a non-saturated band.
std::vector<double> gentle_uniforms(Rng& rng, const Value& keep_logit, std::size_t rows, double t) {
  const auto l = keep_logit.data();
  std::vector<double> u(rows * l.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < l.size(); ++j) {
      const double target = in(rng, -1.5, 1.5) * t;  // (l + logit u) / t in [-1.5, 1.5]
      u[r * l.size() + j] = diff::sigmoid(target - l[j]);
    }
  }
  return u;
}

FeatureCatalog tiny_catalog(Rng& rng) {
  std::vector<FeatureField> fields;
  const FeatureType types[] = {FeatureType::I, FeatureType::II, FeatureType::III, FeatureType::IV};
  const std::size_t m = dim(rng, 2, 4);
  for (std::size_t j = 0; j < m; ++j) {
    FeatureField f;
    f.name = "f" + std::to_string(j);
    f.type = types[j % 4];
    f.scope = scope_of(f.type);
    f.online_cost = default_online_cost(f.type);
    f.embed_dim = static_cast<std::uint32_t>(dim(rng, 1, 3));
    f.num_keys = dim(rng, 2, 5);
    fields.push_back(std::move(f));
  }
  return FeatureCatalog(std::move(fields));
}

struct TinyProblem {
  FeatureCatalog catalog;
  ModelParams params;
  std::vector<std::uint32_t> keys;
  std::vector<std::uint8_t> labels;
};

std::shared_ptr<TinyProblem> tiny_problem(Rng& rng, std::uint64_t seed) {
  auto p = std::make_shared<TinyProblem>();
  p->catalog = tiny_catalog(rng);
  const std::vector<std::size_t> arch = {dim(rng, 2, 4)};
  p->params = init_params(p->catalog, arch, seed);
  // Biases away from zero so no hidden unit sits exactly on the relu kink.
  for (auto& layer : p->params.layers) {
    for (auto& b : layer.bias.mutable_data()) b = away_from_zero(rng, 0.05, 0.3);
  }
  const std::size_t n = dim(rng, 2, 5);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& f : p->catalog.fields()) p->keys.push_back(static_cast<std::uint32_t>(rng.below(f.num_keys)));
    p->labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
  }
  return p;
}

}  // namespace

std::vector<GradCase> gradient_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;

  {
    const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
    Value a = random_param(rng, {m, k}), b = random_param(rng, {k, n});
    Projector proj(rng, {m, n});
    cases.push_back({"matmul", {a, b}, [=](Tape& t) { return proj(t, diff::matmul(t, a, b)); }});
  }
  {
    const std::size_t n = dim(rng, 1, 6);
    Value a = random_param(rng, {n}), b = random_param(rng, {n}), s = random_param(rng, {1});
    Projector proj(rng, {n});
    cases.push_back({"add/sub/mul", {a, b, s}, [=](Tape& t) {
                       const Value x = diff::add(t, a, s);
                       const Value y = diff::sub(t, b, s);
                       return proj(t, diff::mul(t, x, y));
                     }});
  }
  {
    const std::size_t n = dim(rng, 1, 6);
    Value a = signed_param(rng, {n}, 0.05, 1.0);
    Projector proj(rng, {n});
    cases.push_back({"relu", {a}, [=](Tape& t) { return proj(t, diff::relu(t, a)); }});
  }
  {
    const std::size_t n = dim(rng, 1, 6);
    Value a = random_param(rng, {n}, -3.0, 3.0);
    Projector proj(rng, {n});
    cases.push_back({"sigmoid", {a}, [=](Tape& t) { return proj(t, diff::sigmoid(t, a)); }});
  }
  {
    const std::size_t n = dim(rng, 1, 6);
    Value a = random_param(rng, {n}, 0.2, 2.0);
    Projector proj(rng, {n});
    cases.push_back({"log", {a}, [=](Tape& t) { return proj(t, diff::log(t, a)); }});
  }
  {
    const std::size_t n = dim(rng, 1, 6);
    Value a = random_param(rng, {n});
    const double f = away_from_zero(rng, 0.5, 2.0), o = in(rng, -1.0, 1.0);
    Projector proj(rng, {n});
    cases.push_back({"scale/shift", {a}, [=](Tape& t) { return proj(t, diff::shift(t, diff::scale(t, a, f), o)); }});
  }
  {
    const std::size_t n = dim(rng, 2, 6);
    // Half the entries inside [-0.5, 0.5], half clearly outside.
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i % 2 ? in(rng, -0.4, 0.4) : away_from_zero(rng, 0.6, 1.0);
    Value a = Value::parameter({n}, v);
    Projector proj(rng, {n});
    cases.push_back({"clamp", {a}, [=](Tape& t) { return proj(t, diff::clamp(t, a, -0.5, 0.5)); }});
  }
  {
    const std::size_t m = dim(rng, 1, 4), n = dim(rng, 1, 4);
    Value a = random_param(rng, {m, n});
    const std::size_t idx = static_cast<std::size_t>(rng.below(m * n));
    cases.push_back({"sum_squares/element", {a}, [=](Tape& t) {
                       return diff::add(t, diff::sum_squares(t, a), diff::scale(t, diff::element(t, a, idx), 3.0));
                     }});
  }
  {
    const std::size_t m = dim(rng, 1, 4), n = dim(rng, 1, 4);
    Value a = random_param(rng, {m, n}), bias = random_param(rng, {n});
    Projector proj(rng, {m, n});
    cases.push_back({"add_rows", {a, bias}, [=](Tape& t) { return proj(t, diff::add_rows(t, a, bias)); }});
  }
  {
    const std::size_t m = dim(rng, 1, 4);
    Value a = random_param(rng, {m, dim(rng, 1, 3)}), b = random_param(rng, {m, dim(rng, 1, 3)});
    Projector proj(rng, {m, a.cols() + b.cols()});
    cases.push_back({"concat_cols", {a, b}, [=](Tape& t) {
                       const std::vector<Value> blocks = {a, b};
                       return proj(t, diff::concat_cols(t, blocks));
                     }});
  }
  {
    const std::size_t keys = dim(rng, 2, 5), e = dim(rng, 1, 3), n = dim(rng, 1, 6);
    Value table = random_param(rng, {keys, e});
    std::vector<std::uint32_t> idx(n);
    for (auto& i : idx) i = static_cast<std::uint32_t>(rng.below(keys));
    Projector proj(rng, {n, e});
    cases.push_back({"embedding_gather", {table}, [=](Tape& t) { return proj(t, diff::embedding_gather(t, table, idx)); }});
  }
  {
    const std::size_t n = dim(rng, 1, 6);
    Value p = random_param(rng, {n}, 0.05, 0.95);
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = rng.uniform() < 0.5 ? 1 : 0;
    cases.push_back({"binary_cross_entropy", {p}, [=](Tape& t) { return diff::binary_cross_entropy(t, p, y); }});
  }
  {
    const std::size_t m = dim(rng, 1, 5), rows = rng.uniform() < 0.5 ? 1 : dim(rng, 2, 4);
    Value logit = random_param(rng, {m}, -2.0, 2.0);
    const auto u = gentle_uniforms(rng, logit, rows, kDefaultTemperature);
    Projector proj(rng, {rows, m});
    cases.push_back({"relaxed_gates", {logit}, [=](Tape& t) {
                       return proj(t, relaxed_gates(t, logit, u, rows, kDefaultTemperature));
                     }});
  }
  {
    const std::size_t m = dim(rng, 1, 3), n = dim(rng, 1, 4);
    const std::size_t zrows = rng.uniform() < 0.5 ? 1 : n;
    std::vector<Value> blocks;
    std::vector<Value> params;
    for (std::size_t j = 0; j < m; ++j) {
      blocks.push_back(random_param(rng, {n, dim(rng, 1, 3)}));
      params.push_back(blocks.back());
    }
    Value z = random_param(rng, {zrows, m}, 0.05, 0.95);
    params.push_back(z);
    std::vector<Projector> projs;
    for (const auto& b : blocks) projs.emplace_back(rng, b.shape());
    const std::vector<double> alphas = [&] {
      std::vector<double> a(m);
      for (auto& x : a) x = in(rng, 0.0, 3.0);
      return a;
    }();
    cases.push_back({"apply_gates/gate_penalty", params, [=](Tape& t) {
                       const auto gated = apply_gates(t, blocks, z);
                       Value total = gate_penalty(t, z, alphas, n);
                       for (std::size_t j = 0; j < gated.size(); ++j) total = diff::add(t, total, projs[j](t, gated[j]));
                       return total;
                     }});
  }
  {
    auto prob = tiny_problem(rng, seed);
    GateState gates(prob->catalog.priors().theta);
    const auto u = gentle_uniforms(rng, gates.keep_logit(), 1, gates.temperature());
    const auto alphas = prob->catalog.priors().alpha;
    auto params = prob->params.parameters();
    Value logit = gates.keep_logit();
    params.push_back(logit);
    const double lambda = in(rng, 0.1, 1.0);
    cases.push_back({"gated selection loss", params, [=](Tape& t) {
                       const BatchView batch{prob->keys, prob->catalog.size()};
                       const Value z = relaxed_gates(t, logit, u, 1, kDefaultTemperature);
                       const Value p = forward(t, prob->params, batch, nullptr, &z);
                       return fscd_loss(t, p, prob->labels, prob->params, z, alphas, lambda, prob->labels.size());
                     }});
  }
  {
    auto prob = tiny_problem(rng, seed ^ 0x5eedULL);
    cases.push_back({"fine-tune loss", prob->params.parameters(), [=](Tape& t) {
                       const BatchView batch{prob->keys, prob->catalog.size()};
                       return diff::binary_cross_entropy(t, forward(t, prob->params, batch), prob->labels);
                     }});
  }
  return cases;
}

}  // namespace fscd::testing
