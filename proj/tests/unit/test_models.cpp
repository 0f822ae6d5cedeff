#include <doctest.h>

#include <set>

#include "liquiform/error.hpp"
#include "liquiform/gradcheck.hpp"
#include "liquiform/models.hpp"
#include "liquiform/rng.hpp"

using namespace liquiform;

namespace {

template <typename T = float>
Tensor<T> random_input(Rng& rng, Shape s) {
  std::vector<T> v(static_cast<std::size_t>(element_count(s)));
  for (auto& x : v) x = static_cast<T>(rng.uniform());
  return Tensor<T>(s, std::move(v));
}

NetworkConfig config(int base, int h, int w, std::uint64_t seed = 1) {
  NetworkConfig c;
  c.base_channels = base;
  c.height = h;
  c.width = w;
  c.seed = seed;
  return c;
}

Shape tap(const std::vector<std::pair<std::string, Shape>>& taps, const std::string& name) {
  for (const auto& [n, s] : taps) {
    if (n == name) return s;
  }
  FAIL("no tap named " << name);
  return {};
}

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

template <typename T>
void check_range(const Tensor<T>& t, T lo, T hi, bool open) {
  for (T v : t.data()) {
    if (open) {
      CHECK((v > lo && v < hi));
    } else {
      CHECK((v >= lo && v <= hi));
    }
  }
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("rectification shapes at 64x64 and 224x224") {
    Rng rng(1);
    auto net = build_rectification<float>(config(64, 64, 64));
    const auto x = random_input(rng, {1, 3, 64, 64});
    const auto taps = net->trace_shapes(x, Mode::eval);
    CHECK(tap(taps, "bottleneck") == Shape{1, 512, 4, 4});
    const auto y = net->forward(x, Mode::eval);
    CHECK(y.shape() == Shape{1, 3, 64, 64});
    check_range(y, 0.0f, 1.0f, true);

    auto big = build_rectification<float>(config(8, 224, 224));
    const auto xb = random_input(rng, {1, 3, 224, 224});
    CHECK(tap(big->trace_shapes(xb, Mode::eval), "bottleneck") == Shape{1, 64, 14, 14});
    CHECK(big->forward(xb, Mode::eval).shape() == Shape{1, 3, 224, 224});
  }

  TEST_CASE("refinement shapes at 64x64") {
    Rng rng(2);
    auto net = build_refinement<float>(config(64, 64, 64));
    const auto x = random_input(rng, {1, 3, 64, 64});
    CHECK(tap(net->trace_shapes(x, Mode::eval), "trunk") == Shape{1, 256, 16, 16});
    const auto y = net->forward(x, Mode::eval);
    CHECK(y.shape() == Shape{1, 3, 64, 64});
    check_range(y, 0.0f, 1.0f, false);
  }

  TEST_CASE("discriminator shapes at 64x64") {
    Rng rng(3);
    auto net = build_discriminator<float>(config(64, 64, 64));
    const auto x = random_input(rng, {2, 3, 64, 64});
    CHECK(tap(net->trace_shapes(x, Mode::eval), "features") == Shape{2, 512, 8, 8});
    const auto y = net->forward(x, Mode::eval);
    CHECK(y.shape() == Shape{2, 1});
    check_range(y, 0.0f, 1.0f, true);
  }

  TEST_CASE("property: shape contracts hold for every size divisible by 16 up to 256") {
    Rng rng(4);
    for (int h : {32, 48, 64, 96, 128, 176, 256}) {
      const int w = h == 256 ? 32 : (h == 48 ? 80 : h);
      const auto x = random_input(rng, {1, 3, h, w});
      auto rect = build_rectification<float>(config(2, h, w));
      CHECK(tap(rect->trace_shapes(x, Mode::eval), "bottleneck") == Shape{1, 16, h / 16, w / 16});
      const auto yr = rect->forward(x, Mode::eval);
      CHECK(yr.shape() == x.shape());
      check_range(yr, 0.0f, 1.0f, false);
      auto ref = build_refinement<float>(config(2, h, w));
      CHECK(tap(ref->trace_shapes(x, Mode::eval), "trunk") == Shape{1, 8, h / 4, w / 4});
      const auto yf = ref->forward(x, Mode::eval);
      CHECK(yf.shape() == x.shape());
      check_range(yf, 0.0f, 1.0f, false);
      auto disc = build_discriminator<float>(config(2, h, w));
      CHECK(tap(disc->trace_shapes(x, Mode::eval), "features") == Shape{1, 16, h / 8, w / 8});
      check_range(disc->forward(x, Mode::eval), 0.0f, 1.0f, true);
    }
  }

  TEST_CASE("sizes that the networks cannot reach are rejected") {
    CHECK_THROWS_AS(build_rectification<float>(config(8, 40, 64)), ContractError);
    CHECK_THROWS_AS(build_refinement<float>(config(8, 62, 64)), ContractError);
    CHECK_THROWS_AS(build_discriminator<float>(config(8, 64, 60)), ContractError);
    CHECK_THROWS_AS(build_rectification<float>(config(1, 64, 64)), ContractError);
    auto net = build_rectification<float>(config(4, 32, 32));
    Rng rng(5);
    CHECK_THROWS_AS(net->forward(random_input(rng, {1, 3, 64, 64}), Mode::eval), DimensionError);
    CHECK_THROWS_AS(net->forward(random_input(rng, {1, 1, 32, 32}), Mode::eval), DimensionError);
  }

  TEST_CASE("parameter counts match the per-layer arithmetic") {
    // tests/oracles/param_count.py
    CHECK(build_rectification<float>(config(16, 64, 64))->parameter_count() == 981747);
    CHECK(build_refinement<float>(config(16, 64, 64))->parameter_count() == 424675);
    CHECK(build_discriminator<float>(config(16, 64, 64))->parameter_count() == 2392113);
    CHECK(build_rectification<float>(config(8, 64, 64))->parameter_count() == 246363);
    CHECK(build_refinement<float>(config(8, 64, 64))->parameter_count() == 108083);
    CHECK(build_discriminator<float>(config(8, 64, 64))->parameter_count() == 598617);
  }

  TEST_CASE("parameter names are unique and initialization is seeded") {
    for (auto kind : {NetworkKind::rectification, NetworkKind::refinement, NetworkKind::discriminator}) {
      auto a = build_network<float>(kind, config(4, 32, 32, 9));
      auto b = build_network<float>(kind, config(4, 32, 32, 9));
      auto c = build_network<float>(kind, config(4, 32, 32, 10));
      std::set<std::string> names;
      bool differs = false;
      for (const auto& s : a->state()) CHECK(names.insert(s.name).second);
      for (std::size_t i = 0; i < a->parameters().size(); ++i) {
        CHECK(values(a->parameters()[i].tensor) == values(b->parameters()[i].tensor));
        differs = differs || values(a->parameters()[i].tensor) != values(c->parameters()[i].tensor);
      }
      CHECK(differs);
    }
  }

  TEST_CASE("refinement with a zero output layer is the identity") {
    Rng rng(6);
    auto net = build_refinement<float>(config(4, 32, 32));
    const auto x = random_input(rng, {2, 3, 32, 32});
    CHECK(values(net->forward(x, Mode::train)) == values(x));
    auto [w, b] = refinement_output_layer(*net);
    for (auto& v : w.mutable_data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    CHECK(values(net->forward(x, Mode::eval)) != values(x));
    for (auto& v : w.mutable_data()) v = 0.0f;
    for (auto& v : b.mutable_data()) v = 0.0f;
    CHECK(values(net->forward(x, Mode::eval)) == values(x));
    CHECK(values(net->forward(x, Mode::train)) == values(x));
  }

  TEST_CASE("identical inputs get identical discriminator scores") {
    Rng rng(7);
    auto net = build_discriminator<float>(config(8, 32, 32));
    const auto one = random_input(rng, {1, 3, 32, 32});
    std::vector<float> two(one.data().begin(), one.data().end());
    two.insert(two.end(), one.data().begin(), one.data().end());
    const auto y = net->forward(Tensor<float>({2, 3, 32, 32}, two), Mode::eval);
    CHECK(y[0] == y[1]);
    CHECK(net->forward(one, Mode::eval)[0] == y[0]);
  }

  TEST_CASE("end-to-end gradients match finite differences on 10 parameters per network") {
    Rng rng(8);
    for (auto kind : {NetworkKind::rectification, NetworkKind::refinement, NetworkKind::discriminator}) {
      auto net = build_network<double>(kind, config(2, 16, 16, 3));
      if (kind == NetworkKind::refinement) {
        // Give the output layer weights so gradients reach the rest.
        for (auto& v : refinement_output_layer(*net).first.mutable_data()) v = rng.uniform(-0.05, 0.05);
      }
      const auto x = random_input<double>(rng, {2, 3, 16, 16});
      auto probe = random_input<double>(rng, net->forward(x, Mode::eval).shape());
      // Zero-mean weights keep the loss small, which keeps the difference quotient's roundoff small.
      for (auto& v : probe.mutable_data()) v = 2.0 * v - 1.0;
      auto loss = [&] { return sum(mul(net->forward(x, Mode::eval), probe)); };
      const auto& params = net->parameters();
      std::vector<std::pair<Tensor<double>, Index>> picks;
      for (int i = 0; i < 10; ++i) {
        const auto& p = params[static_cast<std::size_t>(rng.below(params.size()))];
        const Index e = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p.tensor.numel())));
        picks.emplace_back(p.tensor, e);
      }
      const double err = gradient_relative_error_at<double>(loss, picks, 1e-5);
      INFO(to_string(kind) << " relative error " << err);
      CHECK(err < 1e-4);
    }
  }
}
