#include "fscd/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fscd/errors.hpp"

namespace fscd::diff {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// --- Value ----------------------------------------------------------------

Value Value::constant(Shape shape, std::vector<double> data) {
  if (element_count(shape) != data.size()) {
    throw DimensionError("value data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->data = std::move(data);
  return Value(std::move(s));
}

Value Value::parameter(Shape shape, std::vector<double> data) {
  Value v = constant(std::move(shape), std::move(data));
  v.s_->requires_grad = true;
  v.s_->grad.assign(v.s_->data.size(), 0.0);
  return v;
}

Value Value::scalar(double v, bool requires_grad) {
  return requires_grad ? parameter({1}, {v}) : constant({1}, {v});
}

Value Value::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(element_count(shape), 0.0);
  return requires_grad ? parameter(std::move(shape), std::move(data))
                       : constant(std::move(shape), std::move(data));
}

Value::Storage& Value::storage() const {
  if (!s_) throw UsageError("access to an undefined Value");
  return *s_;
}

const Shape& Value::shape() const { return storage().shape; }
std::size_t Value::size() const { return storage().data.size(); }

std::size_t Value::rows() const {
  const auto& sh = shape();
  return sh.empty() ? 1 : sh[0];
}

std::size_t Value::cols() const {
  const auto& sh = shape();
  std::size_t c = 1;
  for (std::size_t i = 1; i < sh.size(); ++i) c *= sh[i];
  return c;
}

bool Value::requires_grad() const { return storage().requires_grad; }
std::span<const double> Value::data() const { return storage().data; }
std::span<double> Value::mutable_data() { return storage().data; }

double Value::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar value " + shape_string(shape()));
  return storage().data[0];
}

bool Value::has_grad() const { return !storage().grad.empty(); }
std::span<const double> Value::grad() const { return storage().grad; }

std::span<double> Value::grad_buffer() const {
  auto& s = storage();
  if (s.grad.size() != s.data.size()) s.grad.assign(s.data.size(), 0.0);
  return s.grad;
}

void Value::zero_grad() const {
  auto& s = storage();
  std::fill(s.grad.begin(), s.grad.end(), 0.0);
}

Value Value::clone() const {
  const auto& s = storage();
  return s.requires_grad ? parameter(s.shape, s.data) : constant(s.shape, s.data);
}

// --- Tape -----------------------------------------------------------------

void Tape::record(const Value& output, BackwardRule rule) {
  entries_.push_back({output, std::move(rule)});
}

void Tape::backward(const Value& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  for (auto& e : entries_) e.output.zero_grad();
  Value seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->rule();
}

// --- helpers --------------------------------------------------------------

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// Output of an op. Intermediate results carry requires_grad when any input
// does, so gradients can flow through them.
Value result(Shape shape, std::vector<double>&& data, bool requires_grad) {
  return requires_grad ? Value::parameter(std::move(shape), std::move(data))
                       : Value::constant(std::move(shape), std::move(data));
}

// Broadcasting rule for binary elementwise ops.
Shape binary_shape(const Value& a, const Value& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.size() == 1) return b.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == b.size() && a.size() > 0) {
    // [n] and [n x 1] style shapes are treated as equal.
    return a.shape();
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

template <typename Fwd>
Value unary(Tape& tape, const Value& a, Fwd fwd, std::function<double(double x, double y)> dydx) {
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Value y = result(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    tape.record(y, [a, y, dydx = std::move(dydx)]() mutable {
      const auto g = y.grad();
      const auto x = a.data();
      const auto yv = y.data();
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dydx(x[i], yv[i]);
    });
  }
  return y;
}

}  // namespace

// --- operations -----------------------------------------------------------

Value matmul(Tape& tape, const Value& a, const Value& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> C(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  const bool rg = a.requires_grad() || b.requires_grad();
  Value c = result({m, n}, std::move(C), rg);
  if (rg) {
    tape.record(c, [a, b, c, m, k, n]() mutable {
      const auto G = c.grad();
      if (a.requires_grad()) {
        const auto Bv = b.data();
        auto GA = a.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = G.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = Bv.data() + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            GA[i * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        const auto Av = a.data();
        auto GB = b.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = G.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = Av[i * k + p];
            if (aip == 0.0) continue;
            double* gbrow = GB.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    });
  }
  return c;
}

namespace {

enum class BinaryKind { Add, Sub, Mul };

Value binary(Tape& tape, const Value& a, const Value& b, BinaryKind kind, const char* name) {
  const Shape shape = binary_shape(a, b, name);
  const std::size_t n = element_count(shape);
  const auto A = a.data();
  const auto B = b.data();
  const bool abcast = A.size() == 1 && n != 1;
  const bool bbcast = B.size() == 1 && n != 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = A[abcast ? 0 : i];
    const double y = B[bbcast ? 0 : i];
    switch (kind) {
      case BinaryKind::Add: out[i] = x + y; break;
      case BinaryKind::Sub: out[i] = x - y; break;
      case BinaryKind::Mul: out[i] = x * y; break;
    }
  }
  const bool rg = a.requires_grad() || b.requires_grad();
  Value c = result(shape, std::move(out), rg);
  if (rg) {
    tape.record(c, [a, b, c, kind, n, abcast, bbcast]() mutable {
      const auto G = c.grad();
      if (a.requires_grad()) {
        auto GA = a.grad_buffer();
        const auto Bv = b.data();
        for (std::size_t i = 0; i < n; ++i) {
          double d = G[i];
          if (kind == BinaryKind::Mul) d *= Bv[bbcast ? 0 : i];
          GA[abcast ? 0 : i] += d;
        }
      }
      if (b.requires_grad()) {
        auto GB = b.grad_buffer();
        const auto Av = a.data();
        for (std::size_t i = 0; i < n; ++i) {
          double d = G[i];
          if (kind == BinaryKind::Sub) d = -d;
          if (kind == BinaryKind::Mul) d *= Av[abcast ? 0 : i];
          GB[bbcast ? 0 : i] += d;
        }
      }
    });
  }
  return c;
}

}  // namespace

Value add(Tape& tape, const Value& a, const Value& b) {
  return binary(tape, a, b, BinaryKind::Add, "add");
}
Value sub(Tape& tape, const Value& a, const Value& b) {
  return binary(tape, a, b, BinaryKind::Sub, "sub");
}
Value mul(Tape& tape, const Value& a, const Value& b) {
  return binary(tape, a, b, BinaryKind::Mul, "mul");
}

Value relu(Tape& tape, const Value& a) {
  return unary(
      tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Value sigmoid(Tape& tape, const Value& a) {
  return unary(
      tape, a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Value log(Tape& tape, const Value& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
  }
  return unary(
      tape, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Value scale(Tape& tape, const Value& a, double factor) {
  return unary(
      tape, a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Value shift(Tape& tape, const Value& a, double offset) {
  return unary(
      tape, a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Value clamp(Tape& tape, const Value& a, double lo, double hi) {
  return unary(
      tape, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Value sum(Tape& tape, const Value& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  Value out = result({1}, {s}, a.requires_grad());
  if (a.requires_grad()) {
    tape.record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (auto& ga : a.grad_buffer()) ga += g;
    });
  }
  return out;
}

Value sum_squares(Tape& tape, const Value& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  Value out = result({1}, {s}, a.requires_grad());
  if (a.requires_grad()) {
    tape.record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      const auto x = a.data();
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * x[i] * g;
    });
  }
  return out;
}

Value element(Tape& tape, const Value& a, std::size_t index) {
  if (index >= a.size()) {
    throw LookupError("element index " + std::to_string(index) + " out of range for shape " +
                      shape_string(a.shape()));
  }
  Value out = result({1}, {a.data()[index]}, a.requires_grad());
  if (a.requires_grad()) {
    tape.record(out, [a, out, index]() mutable { a.grad_buffer()[index] += out.grad()[0]; });
  }
  return out;
}

Value add_rows(Tape& tape, const Value& a, const Value& bias) {
  if (a.shape().size() != 2 || bias.size() != a.shape()[1]) {
    throw DimensionError("add_rows: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(bias.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const auto A = a.data();
  const auto Bv = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i * n + j] + Bv[j];
  const bool rg = a.requires_grad() || bias.requires_grad();
  Value c = result({m, n}, std::move(out), rg);
  if (rg) {
    tape.record(c, [a, bias, c, m, n]() mutable {
      const auto G = c.grad();
      if (a.requires_grad()) {
        auto GA = a.grad_buffer();
        for (std::size_t i = 0; i < m * n; ++i) GA[i] += G[i];
      }
      if (bias.requires_grad()) {
        auto GB = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) GB[j] += G[i * n + j];
      }
    });
  }
  return c;
}

Value concat_cols(Tape& tape, std::span<const Value> blocks) {
  if (blocks.empty()) throw DimensionError("concat_cols: no blocks");
  const std::size_t m = blocks[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool rg = false;
  for (const auto& b : blocks) {
    if (b.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(blocks[0].shape()) +
                           " and " + shape_string(b.shape()));
    }
    widths.push_back(b.cols());
    total += b.cols();
    rg = rg || b.requires_grad();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto src = blocks[k].data();
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.data() + i * w, w, out.data() + i * total + off);
    off += w;
  }
  Value c = result({m, total}, std::move(out), rg);
  if (rg) {
    std::vector<Value> inputs(blocks.begin(), blocks.end());
    tape.record(c, [inputs, widths, c, m, total]() mutable {
      const auto G = c.grad();
      std::size_t off = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::size_t w = widths[k];
        if (inputs[k].requires_grad()) {
          auto GB = inputs[k].grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t d = 0; d < w; ++d) GB[i * w + d] += G[i * total + off + d];
        }
        off += w;
      }
    });
  }
  return c;
}

Value embedding_gather(Tape& tape, const Value& table, std::span<const std::uint32_t> indices,
                       const std::string& label) {
  if (table.shape().size() != 2) {
    throw DimensionError("embedding_gather: table must be 2-D, got " + shape_string(table.shape()));
  }
  const std::size_t n_keys = table.shape()[0], e = table.shape()[1];
  const auto T = table.data();
  std::vector<double> out(indices.size() * e);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto key = indices[r];
    if (key >= n_keys) {
      throw LookupError("embedding lookup for " + label + ": key " + std::to_string(key) +
                        " out of range [0, " + std::to_string(n_keys) + ")");
    }
    std::copy_n(T.data() + key * e, e, out.data() + r * e);
  }
  Value c = result({indices.size(), e}, std::move(out), table.requires_grad());
  if (table.requires_grad()) {
    std::vector<std::uint32_t> idx(indices.begin(), indices.end());
    tape.record(c, [table, c, idx = std::move(idx), e]() mutable {
      const auto G = c.grad();
      auto GT = table.grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t d = 0; d < e; ++d) GT[idx[r] * e + d] += G[r * e + d];
    });
  }
  return c;
}

Value binary_cross_entropy(Tape& tape, const Value& p, std::span<const std::uint8_t> labels) {
  const std::size_t n = p.size();
  if (n == 0) throw DimensionError("binary_cross_entropy: empty batch");
  if (labels.size() != n) {
    throw DimensionError("binary_cross_entropy: " + std::to_string(n) + " predictions but " +
                         std::to_string(labels.size()) + " labels");
  }
  const auto P = p.data();
  std::vector<double> clamped(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(P[i] >= 0.0 && P[i] <= 1.0)) {
      throw NumericError("binary_cross_entropy: probability " + std::to_string(P[i]) +
                         " outside [0, 1] at index " + std::to_string(i));
    }
    if (labels[i] > 1) throw ConfigError("binary_cross_entropy: label must be 0 or 1");
    const double q = std::clamp(P[i], kProbFloor, kProbCeil);
    clamped[i] = q;
    loss -= labels[i] ? std::log(q) : std::log1p(-q);
  }
  loss /= static_cast<double>(n);
  Value out = result({1}, {loss}, p.requires_grad());
  if (p.requires_grad()) {
    std::vector<std::uint8_t> y(labels.begin(), labels.end());
    tape.record(out, [p, out, y = std::move(y), clamped = std::move(clamped), n]() mutable {
      const double g = out.grad()[0] / static_cast<double>(n);
      const auto P = p.data();
      auto GP = p.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        if (P[i] < kProbFloor || P[i] > kProbCeil) continue;
        const double q = clamped[i];
        GP[i] += g * (y[i] ? -1.0 / q : 1.0 / (1.0 - q));
      }
    });
  }
  return out;
}

}  // namespace fscd::diff
