#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "liquiform/error.hpp"
#include "liquiform/io.hpp"
#include "liquiform/metrics.hpp"
#include "liquiform/rng.hpp"
#include "liquiform/warp.hpp"

using namespace liquiform;

namespace {

Image random_image(Rng& rng, int h, int w, int c) {
  Image img(h, w, c);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

Image bullseye_fixture() { return read_image(std::string(LIQUIFORM_SOURCE_DIR) + "/tests/fixtures/bullseye.png"); }

WarpSpec with_k(double k) {
  WarpSpec s;
  s.k = k;
  return s;
}

}  // namespace

TEST_SUITE("warp") {
  TEST_CASE("to_polar examples") {
    const Point c{10.5, 7.0};
    auto p = to_polar(c.x + 3, c.y + 4, c);
    CHECK(p.r == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(p.theta == doctest::Approx(std::atan2(4.0, 3.0)).epsilon(1e-15));
    p = to_polar(c.x, c.y, c);
    CHECK(p.r == 0.0);
    CHECK(p.theta == 0.0);
    p = to_polar(c.x - 1, c.y, c);
    CHECK(p.r == 1.0);
    CHECK(p.theta == std::numbers::pi);
  }

  TEST_CASE("bilinear_sample examples") {
    Rng rng(3);
    const Image img = random_image(rng, 5, 6, 3);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        const auto v = bilinear_sample(img, x, y);
        for (int c = 0; c < 3; ++c) CHECK(v[c] == img.at(y, x, c));
      }
    Image step(2, 2, 1);
    step.at(0, 1) = 1.0f;
    step.at(1, 1) = 1.0f;
    CHECK(bilinear_sample(step, 0.5, 0.0)[0] == 0.5f);
    CHECK(bilinear_sample(step, 0.5, 0.7)[0] == 0.5f);
    const auto clamped = bilinear_sample(img, -5.0, 0.0);
    for (int c = 0; c < 3; ++c) CHECK(clamped[c] == img.at(0, 0, c));
  }

  TEST_CASE("k = 1 is bit-exact identity") {
    const Image b = bullseye_fixture();
    CHECK(distort(b, with_k(1.0)) == b);
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
      const int h = 2 + static_cast<int>(rng.below(60)), w = 2 + static_cast<int>(rng.below(60));
      const Image img = random_image(rng, h, w, rng.below(2) ? 3 : 1);
      WarpSpec s = with_k(1.0);
      if (i % 2) s.center = Point{rng.uniform(0, w - 1), rng.uniform(0, h - 1)};
      CHECK(distort(img, s) == img);
    }
  }

  TEST_CASE("k = 0.5 reads from twice the radius along the same angle") {
    Rng rng(5);
    const Image img = random_image(rng, 65, 65, 1);  // centre (32, 32)
    const WarpSpec s = with_k(0.5);
    const Point src = source_coordinate(s, img, 42, 32);
    CHECK(src.x == 52.0);
    CHECK(src.y == 32.0);
    const Image out = distort(img, s);
    CHECK(out.at(32, 42) == img.at(32, 52));
    CHECK(out.at(26, 24) == img.at(20, 16));  // offset (-8, -6) -> (-16, -12)
  }

  TEST_CASE("k = 2.7 scales bullseye ring radii") {
    const Image b = bullseye_fixture();
    const Image d = distort(b, with_k(2.7));
    const double region = resolved_radius(with_k(2.7), b);
    const auto before = ring_crossings(b, region / 2.7 - 1.0);
    const auto after = ring_crossings(d, region - 1.0);
    REQUIRE(before.size() == 3);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(after[i] - 2.7 * before[i]) < 1.0);
  }

  TEST_CASE("analytic_restore undoes k = 1 exactly") {
    Rng rng(8);
    const Image img = random_image(rng, 20, 31, 3);
    CHECK(analytic_restore(distort(img, with_k(1.0)), with_k(1.0)) == img);
  }

  TEST_CASE("round trip on the bullseye fixture stays above its calibrated floor") {
    // Frozen from tests/oracles/warp_roundtrip.py (interior disk of radius
    // min(k, 1/k) * R); the regression tolerance is 0.1 dB.
    struct Case {
      double k, psnr;
    };
    const Case cases[] = {{0.5, 40.8359}, {0.8, 47.4765}, {1.5, 31.5776}, {2.7, 32.3483}};
    const Image b = bullseye_fixture();
    for (const auto& c : cases) {
      const WarpSpec s = with_k(c.k);
      const Image r = analytic_restore(distort(b, s), s);
      const double radius = std::min(c.k, 1.0 / c.k) * resolved_radius(s, b);
      const double got = psnr_in_disk(r, b, resolved_center(s, b), radius);
      INFO("k = " << c.k << " psnr = " << got);
      CHECK(got >= 30.0);
      CHECK(got >= c.psnr - 0.1);
    }
  }

  TEST_CASE("round trip with k = 2.7 returns rings to their radii") {
    const Image b = bullseye_fixture();
    const WarpSpec s = with_k(2.7);
    const Image r = analytic_restore(distort(b, s), s);
    const double interior = resolved_radius(s, b) / 2.7 - 1.0;
    const auto before = ring_crossings(b, interior);
    const auto after = ring_crossings(r, interior);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(after[i] - before[i]) < 1.0);
  }

  TEST_CASE("compose") {
    Rng rng(21);
    const Image img = random_image(rng, 40, 48, 3);
    CHECK(compose(img, {}) == img);
    CHECK(compose(img, {with_k(1.0), with_k(1.0)}) == img);
    CHECK(compose(img, {with_k(0.8)}) == distort(img, with_k(0.8)));

    WarpSpec a = with_k(0.5), b = with_k(2.7);
    a.center = Point{10, 10};
    a.region_radius = 7;
    b.center = Point{36, 28};
    b.region_radius = 9;
    const Image both = compose(img, {a, b});
    CHECK(both == distort(distort(img, a), b));
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const bool in_a = std::hypot(x - 10.0, y - 10.0) <= 7.0;
        const bool in_b = std::hypot(x - 36.0, y - 28.0) <= 9.0;
        for (int c = 0; c < 3; ++c) {
          if (in_a) {
            CHECK(both.at(y, x, c) == distort(img, a).at(y, x, c));
          } else if (in_b) {
            CHECK(both.at(y, x, c) == distort(img, b).at(y, x, c));
          } else {
            CHECK(both.at(y, x, c) == img.at(y, x, c));
          }
        }
      }
  }

  TEST_CASE("compose k = 2 then k = 0.5 approximates identity inside") {
    const Image b = bullseye_fixture();
    const Image r = compose(b, {with_k(2.0), with_k(0.5)});
    const double radius = 0.5 * resolved_radius(with_k(2.0), b);
    CHECK(psnr_in_disk(r, b, resolved_center(with_k(2.0), b), radius) >= 50.0);
  }

  TEST_CASE("property: source lies on the ray through the destination") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const int h = 8 + static_cast<int>(rng.below(60)), w = 8 + static_cast<int>(rng.below(60));
      const Image img(h, w, 1);
      WarpSpec s = with_k(rng.uniform(0.2, 4.0));
      s.center = Point{rng.uniform(0, w - 1), rng.uniform(0, h - 1)};
      s.region_radius = rng.uniform(2.0, std::hypot(h, w));
      const double x = static_cast<double>(rng.below(static_cast<std::uint64_t>(w)));
      const double y = static_cast<double>(rng.below(static_cast<std::uint64_t>(h)));
      const Point src = source_coordinate(s, img, x, y);
      const double ux = x - s.center->x, uy = y - s.center->y;
      const double vx = src.x - s.center->x, vy = src.y - s.center->y;
      CHECK(std::abs(ux * vy - uy * vx) <= 1e-9);
      CHECK(ux * vx + uy * vy >= 0.0);
    }
  }

  TEST_CASE("property: rotating by 90 degrees commutes with distort") {
    Rng rng(41);
    for (int trial = 0; trial < 12; ++trial) {
      const int n = 9 + static_cast<int>(rng.below(40));
      const Image img = random_image(rng, n, n, trial % 2 ? 3 : 1);
      WarpSpec s = with_k(rng.uniform(0.3, 3.0));
      if (trial % 3 == 0) s.region_radius = rng.uniform(2.0, n * 0.7);
      CHECK(rotate90(distort(img, s)) == distort(rotate90(img), s));
    }
  }

  TEST_CASE("property: pixels outside the region are untouched") {
    Rng rng(51);
    for (int trial = 0; trial < 20; ++trial) {
      const int h = 10 + static_cast<int>(rng.below(40)), w = 10 + static_cast<int>(rng.below(40));
      const Image img = random_image(rng, h, w, 3);
      WarpSpec s = with_k(rng.uniform(0.3, 3.0));
      s.center = Point{rng.uniform(0, w - 1), rng.uniform(0, h - 1)};
      s.region_radius = rng.uniform(1.0, std::min(h, w) * 0.6);
      const Image out = distort(img, s);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (std::hypot(x - s.center->x, y - s.center->y) <= *s.region_radius) continue;
          for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == img.at(y, x, c));
        }
    }
  }

  TEST_CASE("property: k > 1 maps a centred disk of radius rho to radius k * rho") {
    const int n = 129;
    const double c = (n - 1) / 2.0;
    for (double k : {1.3, 1.5, 2.0, 2.7}) {
      for (double rho : {5.0, 9.5, 17.0}) {
        if (rho >= 64.0 / k) continue;
        // One-pixel linear ramp, so the 0.5 level sits at radius rho.
        Image disk(n, n, 1);
        for (int y = 0; y < n; ++y)
          for (int x = 0; x < n; ++x) {
            disk.at(y, x) = static_cast<float>(std::clamp(rho + 0.5 - std::hypot(x - c, y - c), 0.0, 1.0));
          }
        const auto edge = ring_crossings(distort(disk, with_k(k)), 63.0);
        INFO("k = " << k << " rho = " << rho);
        REQUIRE(edge.size() == 1);
        CHECK(std::abs(edge[0] - k * rho) <= 1.0);
      }
    }
  }

  TEST_CASE("invalid specs are rejected") {
    const Image img(16, 16, 1);
    CHECK_THROWS_AS(distort(img, with_k(0.0)), ContractError);
    CHECK_THROWS_AS(distort(img, with_k(-1.0)), ContractError);
    WarpSpec s = with_k(2.0);
    s.region_radius = 0.0;
    CHECK_THROWS_AS(distort(img, s), ContractError);
    s.region_radius = 100.0;
    CHECK_THROWS_AS(distort(img, s), ContractError);
  }

  TEST_CASE("warp spec text round-trips") {
    std::vector<WarpSpec> specs(3);
    specs[0].k = 0.5;
    specs[1].k = 2.7;
    specs[1].center = Point{12.25, 40};
    specs[1].region_radius = 30.5;
    specs[2].k = 1.0 / 3.0;
    specs[2].region_radius = 7;
    CHECK(parse_warp_specs(format_warp_specs(specs)) == specs);

    const auto parsed = parse_warp_specs("# effects\n\nk=1.5 center=3,4 region=full\n  k=0.8  # convex\n");
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].k == 1.5);
    CHECK(parsed[0].center == Point{3, 4});
    CHECK_FALSE(parsed[0].region_radius.has_value());
    CHECK(parsed[1].k == 0.8);

    CHECK_THROWS_AS(parse_warp_spec_line("center=1,2"), ContractError);
    CHECK_THROWS_AS(parse_warp_spec_line("k=abc"), ContractError);
    CHECK_THROWS_AS(parse_warp_spec_line("k=1 size=3"), ContractError);
    CHECK_THROWS_AS(parse_warp_spec_line("k=0"), ContractError);
  }
}
