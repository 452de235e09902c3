#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mrt/gradcheck.hpp"
#include "mrt/rng.hpp"
#include "mrt/tensor.hpp"

using namespace mrt;

namespace {

Tensor<double> rand_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  Tensor<double> a = Tensor<double>::from({3}, {-1, 0, 2});
  Tensor<double> r = relu<double>(nullptr, a);
  CHECK(r.values() == std::vector<double>{0, 0, 2});

  Tensor<double> x = Tensor<double>::from({2}, {1, 2});
  Tensor<double> y = Tensor<double>::from({2}, {3, 4});
  CHECK(add<double>(nullptr, x, y).values() == std::vector<double>{4, 6});
  CHECK(sub<double>(nullptr, y, x).values() == std::vector<double>{2, 2});
  CHECK(mul<double>(nullptr, x, y).values() == std::vector<double>{3, 8});
  CHECK(scale<double>(nullptr, x, 2.5).values() == std::vector<double>{2.5, 5.0});
}

TEST_CASE("elementwise shape mismatch rejected with both shapes named") {
  Tensor<double> a = Tensor<double>::zeros({2, 3});
  Tensor<double> b = Tensor<double>::zeros({3, 2});
  try {
    add<double>(nullptr, a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
}

TEST_CASE("tanh at zero has unit gradient") {
  Tensor<double> x = Tensor<double>::from({1}, {0.0}, true);
  Tape<double> tape;
  Tensor<double> y = tanh_op(&tape, x);
  CHECK(y.item() == 0.0);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("reductions") {
  Tensor<double> a = Tensor<double>::from({3}, {1, 2, 3});
  CHECK(sum<double>(nullptr, a).item() == 6.0);
  Tensor<double> b = Tensor<double>::from({2}, {2, 4});
  CHECK(mean<double>(nullptr, b).item() == 3.0);

  Tensor<double> c = Tensor<double>::from({3}, {5, 1, 3});
  auto m = reduce_min<double>(nullptr, c);
  CHECK(m.values.item() == 1.0);
  CHECK(m.argmin[0] == 1);

  // axis reduction on [2,3]
  Tensor<double> d = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto s1 = sum_axis<double>(nullptr, d, 1);
  CHECK(s1.shape() == std::vector<std::size_t>{2});
  CHECK(s1.values() == std::vector<double>{6, 15});
  auto s0 = sum_axis<double>(nullptr, d, 0);
  CHECK(s0.values() == std::vector<double>{5, 7, 9});
  auto m1 = reduce_min<double>(nullptr, d, 1);
  CHECK(m1.values.values() == std::vector<double>{1, 4});
  CHECK(m1.argmin == std::vector<std::size_t>{0, 0});

  CHECK_THROWS_AS(sum_axis<double>(nullptr, d, 2), std::invalid_argument);
}

TEST_CASE("min ties break to lowest index") {
  Tensor<double> a = Tensor<double>::from({4}, {2, 1, 1, 1});
  auto m = reduce_min<double>(nullptr, a);
  CHECK(m.argmin[0] == 1);
}

TEST_CASE("min backward routes gradient to argmin only") {
  Tensor<double> a = Tensor<double>::from({3}, {5, 1, 3}, true);
  Tape<double> tape;
  auto m = reduce_min(&tape, a);
  tape.backward(m.values);
  CHECK(a.grad() == std::vector<double>{0, 1, 0});
}

TEST_CASE("concat_channels shapes and backward split") {
  Tensor<double> a = Tensor<double>::zeros({4, 8});
  Tensor<double> b = Tensor<double>::zeros({2, 8});
  Tensor<double> cat = concat_channels<double>(nullptr, {a, b});
  CHECK(cat.shape() == std::vector<std::size_t>{6, 8});

  // single part is the identity
  Tensor<double> one = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  CHECK(concat_channels<double>(nullptr, {one}).values() == one.values());

  // backward splits at recorded offsets
  Tensor<double> x = Tensor<double>::from({1, 2, 2}, {1, 2, 3, 4}, true);
  Tensor<double> y = Tensor<double>::from({1, 1, 2}, {5, 6}, true);
  Tape<double> tape;
  Tensor<double> c = concat_channels(&tape, {x, y});
  CHECK(c.shape() == std::vector<std::size_t>{1, 3, 2});
  // loss = sum(c * w) with distinct weights so the split is visible
  Tensor<double> w = Tensor<double>::from({1, 3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor<double> loss = sum(&tape, mul(&tape, c, w));
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{1, 2, 3, 4});
  CHECK(y.grad() == std::vector<double>{5, 6});

  Tensor<double> bad = Tensor<double>::zeros({1, 1, 3});
  CHECK_THROWS_AS(concat_channels<double>(nullptr, {x, bad}), std::invalid_argument);
}

TEST_CASE("concat then split at offsets reproduces inputs exactly") {
  Rng rng(7);
  std::vector<Tensor<double>> parts;
  std::vector<std::size_t> chans = {3, 1, 5};
  for (std::size_t c : chans) parts.push_back(rand_tensor({2, c, 4}, rng));
  Tensor<double> cat = concat_channels<double>(nullptr, parts);
  std::size_t coff = 0;
  for (const auto& p : parts) {
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < p.dim(1); ++c)
        for (std::size_t l = 0; l < 4; ++l) CHECK(cat.at(b, coff + c, l) == p.at(b, c, l));
    coff += p.dim(1);
  }
}

TEST_CASE("backward analytic examples") {
  // loss = sum(x^2)
  {
    Tensor<double> x = Tensor<double>::from({3}, {1, 2, 3}, true);
    Tape<double> tape;
    Tensor<double> loss = sum(&tape, mul(&tape, x, x));
    tape.backward(loss);
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
  }
  // loss = sum(x*y)
  {
    Tensor<double> x = Tensor<double>::from({1}, {2}, true);
    Tensor<double> y = Tensor<double>::from({1}, {5}, true);
    Tape<double> tape;
    Tensor<double> loss = sum(&tape, mul(&tape, x, y));
    tape.backward(loss);
    CHECK(x.grad()[0] == 5.0);
    CHECK(y.grad()[0] == 2.0);
  }
  // tensor used twice accumulates
  {
    Tensor<double> x = Tensor<double>::from({1}, {1}, true);
    Tape<double> tape;
    Tensor<double> loss = add(&tape, sum(&tape, x), sum(&tape, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == 2.0);
  }
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor<double> x = Tensor<double>::from({2}, {1, 2}, true);
  Tape<double> tape;
  Tensor<double> y = mul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("finite_diff_check on sum of squares") {
  Rng rng(11);
  Tensor<double> x = rand_tensor({10}, rng);
  auto f = [](Tape<double>* t, Tensor<double>& v) { return sum(t, mul(t, v, v)); };
  CHECK(finite_diff_check<double>(f, x) < 1e-7);
}

TEST_CASE("finite_diff_check on relu away from the kink") {
  Rng rng(13);
  Tensor<double> x = Tensor<double>::zeros({12});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double v = rng.uniform(0.1, 1.0);
    x.at(i) = rng.uniform() < 0.5 ? v : -v;  // keep away from 0
  }
  auto f = [](Tape<double>* t, Tensor<double>& v) { return sum(t, relu(t, v)); };
  CHECK(finite_diff_check<double>(f, x) < 1e-6);
}

TEST_CASE("every differentiable primitive passes gradient check at random points") {
  Rng rng(17);
  using F = std::function<Tensor<double>(Tape<double>*, Tensor<double>&)>;
  std::vector<std::pair<const char*, F>> fns;
  Tensor<double> other = rand_tensor({2, 3, 4}, rng);
  fns.emplace_back("add", [other](Tape<double>* t, Tensor<double>& v) {
    return sum(t, mul(t, add(t, v, other), add(t, v, other)));
  });
  fns.emplace_back("sub", [other](Tape<double>* t, Tensor<double>& v) {
    return sum(t, mul(t, sub(t, v, other), sub(t, v, other)));
  });
  fns.emplace_back("mul", [other](Tape<double>* t, Tensor<double>& v) {
    return sum(t, mul(t, mul(t, v, other), v));
  });
  fns.emplace_back("tanh", [](Tape<double>* t, Tensor<double>& v) {
    return sum(t, tanh_op(t, v));
  });
  fns.emplace_back("scale", [](Tape<double>* t, Tensor<double>& v) {
    return sum(t, scale(t, v, 3.25));
  });
  fns.emplace_back("mean", [](Tape<double>* t, Tensor<double>& v) {
    return mean(t, mul(t, v, v));
  });
  fns.emplace_back("sum_axis", [](Tape<double>* t, Tensor<double>& v) {
    auto s = sum_axis(t, v, 1);
    return sum(t, mul(t, s, s));
  });
  fns.emplace_back("mean_axis", [](Tape<double>* t, Tensor<double>& v) {
    auto s = mean_axis(t, v, 2);
    return sum(t, mul(t, s, s));
  });
  fns.emplace_back("concat", [other](Tape<double>* t, Tensor<double>& v) {
    auto c = concat_channels(t, std::vector<Tensor<double>>{v, other, v});
    return sum(t, mul(t, c, c));
  });
  fns.emplace_back("reshape", [](Tape<double>* t, Tensor<double>& v) {
    auto r = reshape(t, v, {4, 6});
    return sum(t, mul(t, r, r));
  });
  fns.emplace_back("transpose", [](Tape<double>* t, Tensor<double>& v) {
    auto r = transpose_cl(t, v);
    return sum(t, mul(t, r, r));
  });

  // 100 random points spread over the primitive set
  int points = 0;
  for (int trial = 0; points < 100; ++trial) {
    for (auto& [name, f] : fns) {
      Tensor<double> x = rand_tensor({2, 3, 4}, rng, -2.0, 2.0);
      const double err = finite_diff_check<double>(f, x);
      INFO(name << " trial " << trial);
      CHECK(err < 1e-4);
      ++points;
      if (points >= 100) break;
    }
  }

  // relu checked separately away from its kink
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> x = Tensor<double>::zeros({24});
    for (std::size_t i = 0; i < x.numel(); ++i) {
      double v = rng.uniform(0.05, 2.0);
      x.at(i) = rng.uniform() < 0.5 ? v : -v;
    }
    auto f = [](Tape<double>* t, Tensor<double>& v) { return sum(t, mul(t, relu(t, v), v)); };
    CHECK(finite_diff_check<double>(f, x) < 1e-4);
  }

  // min: gradient exact where the argmin is unique
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> x = rand_tensor({3, 5}, rng, -2.0, 2.0);
    auto f = [](Tape<double>* t, Tensor<double>& v) {
      auto m = reduce_min(t, v, 1);
      return sum(t, mul(t, m.values, m.values));
    };
    CHECK(finite_diff_check<double>(f, x) < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(19);
  Tensor<double> x = rand_tensor({6}, rng);
  const double a = 2.25, b = -0.75;

  auto loss1 = [](Tape<double>* t, Tensor<double>& v) { return sum(t, mul(t, v, v)); };
  auto loss2 = [](Tape<double>* t, Tensor<double>& v) { return sum(t, tanh_op(t, v)); };

  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape<double> t;
    Tensor<double> l1 = loss1(&t, x);
    t.backward(l1);
  }
  std::vector<double> g1 = x.grad();
  x.zero_grad();
  {
    Tape<double> t;
    Tensor<double> l2 = loss2(&t, x);
    t.backward(l2);
  }
  std::vector<double> g2 = x.grad();
  x.zero_grad();
  {
    Tape<double> t;
    Tensor<double> combo = add(&t, scale(&t, loss1(&t, x), a), scale(&t, loss2(&t, x), b));
    t.backward(combo);
  }
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(std::abs(x.grad()[i] - (a * g1[i] + b * g2[i])) < 1e-12);
}

TEST_CASE("no recording without a tape or grad-requiring inputs") {
  Tensor<double> a = Tensor<double>::from({2}, {1, 2});
  Tape<double> tape;
  Tensor<double> out = mul(&tape, a, a);
  CHECK(tape.size() == 0);  // a does not require grad
  CHECK_FALSE(out.requires_grad());

  a.set_requires_grad(true);
  Tensor<double> out2 = mul(&tape, a, a);
  CHECK(tape.size() == 1);
  CHECK(out2.requires_grad());
}

TEST_CASE("finite check rejects NaN in debug-checked ops") {
  Tensor<double> nan_t = Tensor<double>::from({1}, {std::nan("")});
  CHECK_THROWS_AS(check_finite(nan_t, "test"), std::runtime_error);
}
