#pragma once

// Minimal reverse-mode differentiation over dense row-major double arrays.
//
// A Value is a shared handle: copies alias the same buffer, the way tensor
// handles behave in larger frameworks. Operations take a Tape, compute their
// result eagerly and, when any input requires a gradient, record a backward
// rule. Tape::backward replays the rules in reverse order. Leaf gradients
// accumulate across calls; callers zero them once per optimization step.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fscd::diff {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Shared handle: copies alias the same storage, and const applies to the
// handle, so gradient buffers stay writable through const handles.
class Value {
 public:
  Value() = default;

  static Value constant(Shape shape, std::vector<double> data);
  static Value parameter(Shape shape, std::vector<double> data);
  static Value scalar(double v, bool requires_grad = false);
  static Value zeros(Shape shape, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero buffer on first use.
  std::span<double> grad_buffer() const;
  void zero_grad() const;

  // Deep copy with independent storage; preserves requires_grad, drops grad.
  Value clone() const;

  bool same_storage(const Value& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  explicit Value(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
  Storage& storage() const;

  std::shared_ptr<Storage> s_;
};

class Tape {
 public:
  using BackwardRule = std::function<void()>;

  // Registers `output` as produced by an operation whose gradient
  // contribution to its inputs is `rule`. Must be called in execution order.
  void record(const Value& output, BackwardRule rule);

  // Seeds d loss / d loss = 1 and replays every recorded rule in reverse.
  // Intermediate gradients are reset first, so repeated calls add exactly one
  // more copy of the gradient into the leaves.
  void backward(const Value& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Value output;
    BackwardRule rule;
  };
  std::vector<Entry> entries_;
};

// Clamp bounds applied to every probability before a log is taken.
inline constexpr double kProbFloor = 1e-7;
inline constexpr double kProbCeil = 1.0 - 1e-7;

// Numerically stable logistic function.
double sigmoid(double x);

// --- primitive operations -------------------------------------------------

Value matmul(Tape& tape, const Value& a, const Value& b);

// Elementwise binary ops. Shapes must agree, or one side must hold a single
// element that is broadcast over the other.
Value add(Tape& tape, const Value& a, const Value& b);
Value sub(Tape& tape, const Value& a, const Value& b);
Value mul(Tape& tape, const Value& a, const Value& b);

Value relu(Tape& tape, const Value& a);
Value sigmoid(Tape& tape, const Value& a);
// Throws DomainError on any non-positive input; callers clamp first.
Value log(Tape& tape, const Value& a);
Value scale(Tape& tape, const Value& a, double factor);
Value shift(Tape& tape, const Value& a, double offset);
// Gradient passes where lo <= a <= hi and is zero where the clamp is active.
Value clamp(Tape& tape, const Value& a, double lo, double hi);

Value sum(Tape& tape, const Value& a);
// Sum of squared elements, used by the l2 regularizer.
Value sum_squares(Tape& tape, const Value& a);
// Single element as a 1-element Value.
Value element(Tape& tape, const Value& a, std::size_t index);

// a[m x n] + bias[n] broadcast over rows.
Value add_rows(Tape& tape, const Value& a, const Value& bias);
// Horizontal concatenation of [m x n_i] blocks.
Value concat_cols(Tape& tape, std::span<const Value> blocks);

// Row gather; backward scatter-adds into the table gradient. `label` names
// the owning field in lookup errors.
Value embedding_gather(Tape& tape, const Value& table, std::span<const std::uint32_t> indices,
                       const std::string& label = "table");

// Mean binary cross-entropy. p is clamped to [kProbFloor, kProbCeil]; values
// outside [0, 1] or NaN raise NumericError. Labels must be 0 or 1.
Value binary_cross_entropy(Tape& tape, const Value& p, std::span<const std::uint8_t> labels);

}  // namespace fscd::diff
