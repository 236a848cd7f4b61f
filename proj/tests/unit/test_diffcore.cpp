#include <cmath>

#include "doctest.h"
#include "fscd/diffcore.hpp"
#include "fscd/errors.hpp"
#include "gradcheck.hpp"

using namespace fscd;
using diff::Tape;
using diff::Value;

TEST_CASE("matmul forward") {
  Tape t;
  const auto id = Value::constant({2, 2}, {1, 0, 0, 1});
  const auto col = Value::constant({2, 1}, {3, 4});
  const auto r = diff::matmul(t, id, col);
  CHECK(r.shape() == diff::Shape{2, 1});
  CHECK(r.data()[0] == 3.0);
  CHECK(r.data()[1] == 4.0);
  const auto row = Value::constant({1, 2}, {1, 2});
  CHECK(diff::matmul(t, row, col).item() == 11.0);
}

TEST_CASE("matmul gradient of sum w.r.t. a") {
  auto a = Value::parameter({1, 2}, {1, 2});
  const auto b = Value::constant({2, 1}, {3, 4});
  Tape t;
  t.backward(diff::sum(t, diff::matmul(t, a, b)));
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  CHECK(a.grad()[1] == doctest::Approx(4.0));
  // Oracle: central differences.
  const auto r = testing::check_gradients({a}, [&](Tape& tt) { return diff::sum(tt, diff::matmul(tt, a, b)); });
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  const auto a = Value::zeros({2, 3}), b = Value::zeros({2, 2});
  try {
    diff::matmul(t, a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("elementwise values") {
  Tape t;
  CHECK(diff::sigmoid(t, Value::scalar(0.0)).item() == 0.5);
  const auto r = diff::relu(t, Value::constant({2}, {-3, 2}));
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 2.0);
  CHECK_THROWS_AS(diff::log(t, Value::constant({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(diff::log(t, Value::scalar(-1.0)), DomainError);
  CHECK_THROWS_AS(diff::add(t, Value::zeros({2}), Value::zeros({3})), DimensionError);
}

TEST_CASE("sigmoid derivative at zero is a quarter") {
  auto x = Value::parameter({1}, {0.0});
  Tape t;
  t.backward(diff::sigmoid(t, x));
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
  // Finite-difference oracle at tolerance 1e-6.
  const double h = 1e-5;
  const double fd = (diff::sigmoid(h) - diff::sigmoid(-h)) / (2 * h);
  CHECK(std::abs(fd - 0.25) < 1e-6);
}

TEST_CASE("stable sigmoid tails") {
  CHECK(diff::sigmoid(-800.0) >= 0.0);
  CHECK(diff::sigmoid(800.0) == 1.0);
  CHECK(diff::sigmoid(-40.0) == doctest::Approx(std::exp(-40.0)).epsilon(1e-12));
}

TEST_CASE("embedding gather and scatter-add") {
  auto table = Value::parameter({2, 2}, {1, 2, 3, 4});
  Tape t;
  const std::vector<std::uint32_t> one = {1};
  const auto r = diff::embedding_gather(t, table, one);
  CHECK(r.data()[0] == 3.0);
  CHECK(r.data()[1] == 4.0);

  Tape t2;
  const std::vector<std::uint32_t> twice = {0, 0};
  const auto g = diff::embedding_gather(t2, table, twice);
  CHECK(std::vector<double>(g.data().begin(), g.data().end()) == std::vector<double>{1, 2, 1, 2});
  table.zero_grad();
  t2.backward(diff::sum(t2, g));  // upstream all ones
  CHECK(std::vector<double>(table.grad().begin(), table.grad().end()) == std::vector<double>{2, 2, 0, 0});

  Tape t3;
  const auto empty = diff::embedding_gather(t3, table, std::span<const std::uint32_t>{});
  CHECK(empty.shape() == diff::Shape{0, 2});

  const std::vector<std::uint32_t> bad = {5};
  try {
    diff::embedding_gather(t3, table, bad, "user_city");
    FAIL("expected LookupError");
  } catch (const LookupError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("user_city") != std::string::npos);
    CHECK(msg.find('5') != std::string::npos);
  }
}

TEST_CASE("binary cross-entropy") {
  Tape t;
  const std::vector<std::uint8_t> y1 = {1};
  CHECK(diff::binary_cross_entropy(t, Value::constant({1}, {0.5}), y1).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Near-perfect prediction at the clamp floor.
  const double eps = diff::kProbFloor;
  CHECK(diff::binary_cross_entropy(t, Value::constant({1}, {1.0}), y1).item() ==
        doctest::Approx(eps).epsilon(1e-6));
  // Independent high-precision value: -(log 0.9 + log 0.8) / 2.
  const std::vector<std::uint8_t> y2 = {1, 0};
  CHECK(diff::binary_cross_entropy(t, Value::constant({2}, {0.9, 0.2}), y2).item() ==
        doctest::Approx(0.16425203348601).epsilon(1e-12));
  CHECK_THROWS_AS(diff::binary_cross_entropy(t, Value::constant({0}, {}), {}), DimensionError);
  CHECK_THROWS_AS(diff::binary_cross_entropy(t, Value::constant({1}, {1.5}), y1), NumericError);
  CHECK_THROWS_AS(diff::binary_cross_entropy(t, Value::constant({1}, {std::nan("")}), y1), NumericError);
}

TEST_CASE("backward contract") {
  auto x = Value::parameter({1}, {3.0});
  {
    Tape t;
    t.backward(diff::mul(t, x, x));
    CHECK(x.grad()[0] == 6.0);
  }
  Tape t;
  const auto v = diff::scale(t, x, 2.0);
  CHECK_THROWS_AS(t.backward(diff::add(t, v, Value::zeros({2}))), DimensionError);
}

TEST_CASE("two backward calls double the gradient exactly") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (auto& c : testing::gradient_cases(seed)) {
      for (auto& p : c.params) p.zero_grad();
      Tape t;
      const auto loss = c.build(t);
      t.backward(loss);
      std::vector<std::vector<double>> once;
      for (auto& p : c.params) once.emplace_back(p.grad().begin(), p.grad().end());
      t.backward(loss);
      for (std::size_t k = 0; k < c.params.size(); ++k) {
        for (std::size_t i = 0; i < once[k].size(); ++i) {
          INFO(c.name);
          // Summation order differs between the passes, so allow rounding.
          CHECK(c.params[k].grad()[i] == doctest::Approx(2.0 * once[k][i]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("finite-difference agreement on random graphs") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    for (auto& c : testing::gradient_cases(seed)) {
      const auto r = testing::check_gradients(c.params, c.build);
      INFO(c.name << " seed " << seed << " worst " << r.worst);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("determinism: identical inputs give bit-identical gradients") {
  auto a = testing::gradient_cases(7), b = testing::gradient_cases(7);
  REQUIRE(a.size() == b.size());
  for (std::size_t c = 0; c < a.size(); ++c) {
    Tape ta, tb;
    const double la = a[c].build(ta).item(), lb = b[c].build(tb).item();
    CHECK(la == lb);
  }
}
