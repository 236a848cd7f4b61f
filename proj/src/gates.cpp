#include "fscd/gates.hpp"

#include <algorithm>
#include <cmath>

#include "fscd/errors.hpp"

namespace fscd {

using diff::Value;

double clamp_prob(double p) { return std::clamp(p, diff::kProbFloor, diff::kProbCeil); }

double symmetric_logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  // 1 - s is exact for s in [0.5, 1], so 1 - symmetric_logistic(-x) recovers s.
  return 1.0 - 1.0 / (1.0 + std::exp(x));
}

namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw ConfigError("gate temperature must be positive, got " + std::to_string(t));
  }
}

}  // namespace

double sample_gate(double delta, double u, double t) {
  check_temperature(t);
  const double d = clamp_prob(delta);
  const double v = clamp_prob(u);
  const double a = std::log(d) - std::log(1.0 - d);
  const double b = std::log(v) - std::log(1.0 - v);
  return symmetric_logistic((a + b) / t);
}

std::vector<double> draw_uniforms(Rng& rng, std::size_t count) {
  std::vector<double> u(count);
  for (auto& x : u) x = clamp_prob(rng.uniform());
  return u;
}

Value relaxed_gates(diff::Tape& tape, const Value& keep_logit, std::span<const double> u,
                    std::size_t rows, double t) {
  check_temperature(t);
  const std::size_t m = keep_logit.size();
  if (rows == 0 || u.size() != rows * m) {
    throw DimensionError("relaxed_gates: expected " + std::to_string(rows) + "x" +
                         std::to_string(m) + " uniforms, got " + std::to_string(u.size()));
  }
  const auto logits = keep_logit.data();
  std::vector<double> delta(m);
  std::vector<bool> clamped(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double d = diff::sigmoid(logits[j]);
    delta[j] = d;
    clamped[j] = d < diff::kProbFloor || d > diff::kProbCeil;
  }
  std::vector<double> z(rows * m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) z[r * m + j] = sample_gate(delta[j], u[r * m + j], t);

  const bool rg = keep_logit.requires_grad();
  Value out = rg ? Value::parameter({rows, m}, std::move(z)) : Value::constant({rows, m}, std::move(z));
  if (rg) {
    tape.record(out, [keep_logit, out, clamped = std::move(clamped), rows, m, t]() mutable {
      const auto g = out.grad();
      const auto zv = out.data();
      auto gl = keep_logit.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < m; ++j) {
          if (clamped[j]) continue;
          const double zz = zv[r * m + j];
          gl[j] += g[r * m + j] * zz * (1.0 - zz) / t;
        }
      }
    });
  }
  return out;
}

std::vector<Value> apply_gates(diff::Tape& tape, std::span<const Value> blocks, const Value& z) {
  const std::size_t m = blocks.size();
  if (z.cols() != m) {
    throw DimensionError("apply_gates: " + std::to_string(m) + " field blocks but gate shape " +
                         diff::shape_string(z.shape()));
  }
  const std::size_t zrows = z.rows();
  std::vector<Value> out;
  out.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const Value& x = blocks[j];
    const std::size_t n = x.rows(), e = x.cols();
    if (zrows != 1 && zrows != n) {
      throw DimensionError("apply_gates: gate rows " + std::to_string(zrows) +
                           " incompatible with block " + diff::shape_string(x.shape()));
    }
    const auto X = x.data();
    const auto Z = z.data();
    std::vector<double> y(n * e);
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = Z[(zrows == 1 ? 0 : i) * m + j];
      for (std::size_t d = 0; d < e; ++d) y[i * e + d] = X[i * e + d] * zi;
    }
    const bool rg = x.requires_grad() || z.requires_grad();
    Value yv = rg ? Value::parameter(x.shape(), std::move(y)) : Value::constant(x.shape(), std::move(y));
    if (rg) {
      tape.record(yv, [x, z, yv, j, m, n, e, zrows]() mutable {
        const auto G = yv.grad();
        const auto Z = z.data();
        const auto X = x.data();
        if (x.requires_grad()) {
          auto GX = x.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            const double zi = Z[(zrows == 1 ? 0 : i) * m + j];
            for (std::size_t d = 0; d < e; ++d) GX[i * e + d] += G[i * e + d] * zi;
          }
        }
        if (z.requires_grad()) {
          auto GZ = z.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t d = 0; d < e; ++d) acc += G[i * e + d] * X[i * e + d];
            GZ[(zrows == 1 ? 0 : i) * m + j] += acc;
          }
        }
      });
    }
    out.push_back(std::move(yv));
  }
  return out;
}

Value gate_penalty(diff::Tape& tape, const Value& z, std::span<const double> alphas,
                   std::size_t n) {
  const std::size_t m = z.cols();
  if (alphas.size() != m) {
    throw DimensionError("gate_penalty: " + std::to_string(alphas.size()) + " alphas for " +
                         std::to_string(m) + " gates");
  }
  if (n == 0) throw ConfigError("gate_penalty: batch size must be >= 1");
  const std::size_t rows = z.rows();
  const double scale = 1.0 / (static_cast<double>(rows) * static_cast<double>(n));
  const auto Z = z.data();
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double col = 0.0;
    for (std::size_t r = 0; r < rows; ++r) col += Z[r * m + j];
    total += alphas[j] * col;
  }
  total *= scale;
  Value out = z.requires_grad() ? Value::scalar(total, true) : Value::scalar(total);
  if (z.requires_grad()) {
    std::vector<double> a(alphas.begin(), alphas.end());
    tape.record(out, [z, out, a = std::move(a), rows, m, scale]() mutable {
      const double g = out.grad()[0] * scale;
      auto GZ = z.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) GZ[r * m + j] += g * a[j];
    });
  }
  return out;
}

GateState::GateState(std::span<const double> prior_theta, double temperature)
    : temperature_(temperature) {
  check_temperature(temperature);
  std::vector<double> logits;
  logits.reserve(prior_theta.size());
  for (double theta : prior_theta) {
    if (!(theta > 0.0 && theta < 1.0)) {
      throw DomainError("gate prior must lie in (0, 1), got " + std::to_string(theta));
    }
    logits.push_back(logit(theta));
  }
  const std::size_t m = logits.size();
  keep_logit_ = Value::parameter({m}, std::move(logits));
}

std::vector<double> GateState::deltas() const {
  std::vector<double> d;
  for (double l : keep_logit_.data()) d.push_back(diff::sigmoid(l));
  return d;
}

Value GateState::sample(diff::Tape& tape, Rng& rng, std::size_t rows) {
  const auto u = draw_uniforms(rng, rows * size());
  Value z = relaxed_gates(tape, keep_logit_, u, rows, temperature_);
  last_z_.assign(z.data().begin(), z.data().end());
  return z;
}

}  // namespace fscd
