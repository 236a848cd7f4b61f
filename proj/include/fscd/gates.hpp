#pragma once

// Relaxed Bernoulli feature-field gates.
//
// Each field j owns an unconstrained keep-logit; delta_j = sigmoid(keep_logit)
// is the learned keep-probability. A training step draws u_j ~ U(0,1) and
// forms the concrete relaxation
//
//   z_j = sigmoid((logit(delta_j) + logit(u_j)) / t)
//
// which is close to 0 or 1 for small t and differentiable in delta_j. All
// embedding dimensions of field j are multiplied by the same scalar z_j.

#include <cstddef>
#include <span>
#include <vector>

#include "fscd/diffcore.hpp"
#include "fscd/random.hpp"

namespace fscd {

inline constexpr double kDefaultTemperature = 0.1;

double clamp_prob(double p);

// Logistic function built so that logistic(-x) == 1 - logistic(x) holds
// bitwise, which makes sample_gate exactly symmetric.
double symmetric_logistic(double x);

// Scalar relaxed gate. delta and u are clamped to [1e-7, 1 - 1e-7].
// Throws ConfigError if t <= 0.
double sample_gate(double delta, double u, double t);

// `count` fresh uniforms, each clamped away from 0 and 1.
std::vector<double> draw_uniforms(Rng& rng, std::size_t count);

// Relaxed gates as a tape operation. `u` holds rows x M uniforms (rows == 1
// shares one draw per field across the batch). Returns z with shape
// [rows x M]; dz/d keep_logit = z (1 - z) / t where delta is not clamped.
diff::Value relaxed_gates(diff::Tape& tape, const diff::Value& keep_logit,
                          std::span<const double> u, std::size_t rows, double t);

// Multiplies every column of blocks[j] by z[r, j], where r is the sample row
// when z has one row per sample and 0 otherwise.
std::vector<diff::Value> apply_gates(diff::Tape& tape, std::span<const diff::Value> blocks,
                                     const diff::Value& z);

// sum_j alpha_j * zbar_j / n, where zbar_j averages column j of z over rows.
diff::Value gate_penalty(diff::Tape& tape, const diff::Value& z, std::span<const double> alphas,
                         std::size_t n);

class GateState {
 public:
  GateState() = default;
  // keep_logit starts at logit(theta_j) so the posterior begins at the prior.
  explicit GateState(std::span<const double> prior_theta, double temperature = kDefaultTemperature);

  std::size_t size() const { return keep_logit_.size(); }
  double temperature() const { return temperature_; }

  diff::Value& keep_logit() { return keep_logit_; }
  const diff::Value& keep_logit() const { return keep_logit_; }
  std::vector<double> deltas() const;

  // Draws u, builds z on the tape and remembers its values in last_z().
  diff::Value sample(diff::Tape& tape, Rng& rng, std::size_t rows);
  const std::vector<double>& last_z() const { return last_z_; }

 private:
  diff::Value keep_logit_;
  double temperature_ = kDefaultTemperature;
  std::vector<double> last_z_;
};

}  // namespace fscd
