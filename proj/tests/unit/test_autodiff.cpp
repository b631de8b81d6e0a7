#include <cmath>
#include <limits>

#include "autodiff.hpp"
#include "doctest.h"
#include "error.hpp"
#include "fd_check.hpp"

using namespace sculpt;
using namespace sculpt::testing;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

namespace {

constexpr double kTol = 1e-6;

// Values bounded away from the kink of leaky_relu.
Input away_from_zero(Shape shape, std::uint64_t seed) {
  auto in = random_input(std::move(shape), seed);
  for (auto& x : in.second) x += x >= 0.0 ? 0.1 : -0.1;
  return in;
}

std::shared_ptr<ad::SparseRows> random_map(std::int64_t in_rows, std::int64_t out_rows, std::uint64_t seed) {
  Rng rng(seed);
  auto m = std::make_shared<ad::SparseRows>();
  m->in_rows = in_rows;
  m->out_rows = out_rows;
  for (std::int64_t r = 0; r < out_rows; ++r) {
    m->offsets.push_back(static_cast<std::uint32_t>(m->index.size()));
    const auto taps = rng.below(4);
    for (std::uint64_t t = 0; t < taps; ++t) {
      m->index.push_back(static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(in_rows))));
      m->weight.push_back(rng.uniform(-1.0, 1.0));
    }
  }
  m->offsets.push_back(static_cast<std::uint32_t>(m->index.size()));
  return m;
}

}  // namespace

TEST_SUITE("autodiff primitives pass finite differences") {
  TEST_CASE("elementwise arithmetic with broadcasting") {
    const std::vector<Input> in{random_input({2, 3}, 1), random_input({1, 3}, 2)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::add(x[0], x[1])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::sub(x[1], x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::mul(x[0], x[1])); }, in) < kTol);
    const std::vector<Input> col{random_input({2, 3}, 3), random_input({2, 1}, 4)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::mul(x[0], x[1])); }, col) < kTol);
  }

  TEST_CASE("unary maps") {
    const std::vector<Input> in{random_input({3, 4}, 5)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::affine(x[0], 2.5, -1.0)); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::neg(x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::square(x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::sigmoid(x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::softplus(x[0])); }, in) < kTol);
    const std::vector<Input> kinked{away_from_zero({3, 4}, 6)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::leaky_relu(x[0], 0.2)); }, kinked) <
          kTol);
  }

  TEST_CASE("reductions and shape ops") {
    const std::vector<Input> in{random_input({2, 3, 4}, 7)};
    CHECK(fd_relative_error([](Tape&, auto& x) { return ad::sum(ad::square(x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape&, auto& x) { return ad::mean(ad::square(x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::sum_to(x[0], {1, 3, 1})); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::reshape(x[0], {4, 6})); }, in) < kTol);
    const std::vector<Input> small{random_input({1, 3, 1}, 8)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::broadcast_to(x[0], {2, 3, 4})); },
                            small) < kTol);
  }

  TEST_CASE("matmul in all transpose combinations") {
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb) {
        CAPTURE(ta);
        CAPTURE(tb);
        const Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
        const Shape sb = tb ? Shape{5, 4} : Shape{4, 5};
        const std::vector<Input> in{random_input(sa, 10), random_input(sb, 11)};
        CHECK(fd_relative_error([&](Tape& t, auto& x) { return weighted_sum(t, ad::matmul(x[0], x[1], ta, tb)); },
                                in) < kTol);
      }
  }

  TEST_CASE("convolution column maps") {
    const std::vector<Input> img{random_input({2, 4, 3, 2}, 12)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::im2col(x[0], 3)); }, img) < kTol);
    const std::vector<Input> cols{random_input({2 * 4 * 3, 9 * 2}, 13)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::col2im(x[0], {2, 4, 3, 2}, 3)); },
                            cols) < kTol);
  }

  TEST_CASE("direct convolution and its gradient maps") {
    for (int k : {1, 3}) {
      CAPTURE(k);
      const std::vector<Input> xw{random_input({2, 4, 5, 3}, 14), random_input({k * k * 3, 2}, 15)};
      CHECK(fd_relative_error([&](Tape& t, auto& x) { return weighted_sum(t, ad::conv(x[0], x[1], k)); }, xw) < kTol);
      const std::vector<Input> gw{random_input({2, 4, 5, 2}, 16), random_input({k * k * 3, 2}, 17)};
      CHECK(fd_relative_error([&](Tape& t, auto& x) { return weighted_sum(t, ad::conv_input_grad(x[0], x[1], k)); },
                              gw) < kTol);
      const std::vector<Input> xg{random_input({2, 4, 5, 3}, 18), random_input({2, 4, 5, 2}, 19)};
      CHECK(fd_relative_error([&](Tape& t, auto& x) { return weighted_sum(t, ad::conv_weight_grad(x[0], x[1], k)); },
                              xg) < kTol);
    }
  }

  TEST_CASE("resampling") {
    const std::vector<Input> in{random_input({2, 4, 6, 3}, 20)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::upsample2(x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::sumpool2(x[0])); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::avgpool2(x[0])); }, in) < kTol);
  }

  TEST_CASE("concat, slice and pad") {
    const std::vector<Input> in{random_input({2, 3, 2}, 21), random_input({2, 1, 2}, 22)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::concat({x[0], x[1]}, 1)); }, in) <
          kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::slice(x[0], 1, 1, 3)); }, in) < kTol);
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::pad(x[1], 1, 2, 5)); }, in) < kTol);
    const std::vector<Input> last{random_input({2, 2, 2, 3}, 23), random_input({2, 2, 2, 1}, 24)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::concat({x[0], x[1]}, 3)); }, last) <
          kTol);
  }

  TEST_CASE("sparse row gather and scatter") {
    const auto map = random_map(5, 7, 25);
    const std::vector<Input> in{random_input({5, 3}, 26)};
    CHECK(fd_relative_error([&](Tape& t, auto& x) { return weighted_sum(t, ad::gather_rows(x[0], map)); }, in) < kTol);
    const std::vector<Input> out{random_input({7, 3}, 27)};
    CHECK(fd_relative_error([&](Tape& t, auto& x) { return weighted_sum(t, ad::scatter_rows(x[0], map)); }, out) <
          kTol);
  }

  TEST_CASE("composite layers") {
    const std::vector<Input> conv{random_input({2, 4, 4, 3}, 28), random_input({27, 2}, 29), random_input({2}, 30)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::conv2d(x[0], x[1], x[2], 3)); }, conv) <
          kTol);
    const std::vector<Input> lin{random_input({3, 4}, 31), random_input({4, 2}, 32), random_input({2}, 33)};
    CHECK(fd_relative_error([](Tape& t, auto& x) { return weighted_sum(t, ad::linear(x[0], x[1], x[2])); }, lin) <
          kTol);
  }
}

TEST_SUITE("autodiff engine") {
  TEST_CASE("direct convolution equals im2col followed by matmul") {
    for (int k : {1, 3, 5}) {
      Tape t;
      const Tensor x = t.constant({2, 5, 4, 3}, random_values(120, 40));
      const Tensor w = t.constant({k * k * 3, 4}, random_values(k * k * 12, 41));
      const auto& a = ad::conv(x, w, k).value();
      const auto& b = ad::matmul(ad::im2col(x, k), w).value();
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("second-order gradients through every convolution map") {
    // h = ‖∂f/∂x‖² + ‖∂f/∂w‖² with f = Σ (c ⊙ conv(x, w))²
    const std::vector<Input> in{random_input({1, 4, 3, 2}, 42), random_input({18, 2}, 43)};
    const double err = fd_relative_error(
        [](Tape& t, auto& x) {
          const Tensor f = ad::sum(ad::square(ad::mul(ad::conv(x[0], x[1], 3), t.constant({1, 4, 3, 2}, random_values(24, 44)))));
          const auto g = t.grad(f, {x[0], x[1]}, true);
          return ad::add(ad::sum(ad::square(g[0])), ad::sum(ad::square(g[1])));
        },
        in, 1e-5);
    CHECK(err < 1e-6);
  }

  TEST_CASE("R1 on a two-layer discriminator matches finite differences") {
    // D(x) = w2ᵀ lrelu(W1 x + b1) + b2; R1 = (γ/2) mean_n ‖∂D/∂x_n‖².
    const std::vector<Input> in{random_input({4, 6}, 45), random_input({6, 8}, 46, 0.5), random_input({8}, 47, 0.1),
                                random_input({8, 1}, 48, 0.5), random_input({1}, 49)};
    const double err = fd_relative_error(
        [](Tape& t, auto& x) {
          const Tensor h = ad::leaky_relu(ad::linear(x[0], x[1], x[2]), 0.2);
          const Tensor d = ad::linear(h, x[3], x[4]);
          const Tensor g = t.grad(ad::sum(d), {x[0]}, true)[0];
          return ad::affine(ad::mean(ad::sum_to(ad::square(g), {4, 1})), 0.5 * 10.0, 0.0);
        },
        in, 1e-6);
    CHECK(err < 1e-4);
  }

  TEST_CASE("unreachable inputs receive zero gradients") {
    Tape t;
    const Tensor a = t.variable({2}, {1.0, 2.0});
    const Tensor b = t.variable({3}, {1.0, 2.0, 3.0});
    const auto g = t.grad(ad::sum(ad::square(a)), {a, b});
    CHECK(g[0].value() == std::vector<double>{2.0, 4.0});
    CHECK(g[1].value() == std::vector<double>{0.0, 0.0, 0.0});
  }

  TEST_CASE("gradients accumulate over repeated uses") {
    Tape t;
    const Tensor a = t.variable({1}, {3.0});
    const Tensor y = ad::add(ad::mul(a, a), a);  // a² + a
    CHECK(t.grad(ad::sum(y), {a})[0].item() == 7.0);
  }

  TEST_CASE("no-grad scope records no history") {
    Tape t;
    const Tensor a = t.variable({1}, {3.0});
    Tensor y;
    {
      Tape::NoGradGuard guard(t);
      y = ad::square(a);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(t.grad(ad::sum(y), {a})[0].item() == 0.0);
  }

  TEST_CASE("shape errors name the offending shapes") {
    Tape t;
    const Tensor a = t.constant({2, 3}, std::vector<double>(6, 1.0));
    const Tensor b = t.constant({3, 2}, std::vector<double>(6, 1.0));
    try {
      (void)ad::add(a, b);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::invalid_argument);
      CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    }
    CHECK_THROWS_AS((void)ad::matmul(a, a), Error);
    CHECK_THROWS_AS((void)ad::reshape(a, {4}), Error);
  }

  TEST_CASE("Adam first step moves each parameter by about lr against the gradient sign") {
    ad::ParamSet p;
    p.add("w", {3}, {1.0, -2.0, 0.5});
    ad::AdamState st;
    const ad::AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    CHECK(ad::adam_step(p, {{"w", {4.0, -0.5, 1e-3}}}, st, cfg));
    CHECK(p.at("w").value[0] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(p.at("w").value[1] == doctest::Approx(-1.99).epsilon(1e-6));
    CHECK(p.at("w").value[2] == doctest::Approx(0.49).epsilon(1e-4));
    CHECK(st.step == 1);
  }

  TEST_CASE("Adam skips non-finite gradients without touching parameters") {
    ad::ParamSet p;
    p.add("w", {2}, {1.0, 2.0});
    const auto before = p.hash();
    ad::AdamState st;
    CHECK_FALSE(ad::adam_step(p, {{"w", {std::numeric_limits<double>::quiet_NaN(), 1.0}}}, st));
    CHECK(st.skipped == 1);
    CHECK(p.hash() == before);
  }

  TEST_CASE("parameter hash tracks values") {
    ad::ParamSet p;
    p.add("a", {2}, {1.0, 2.0});
    const auto h = p.hash();
    p.at("a").value[1] = 2.0000001;
    CHECK(p.hash() != h);
  }
}
