#include <doctest.h>

#include <chrono>
#include <cmath>

#include "liquiform/error.hpp"
#include "liquiform/losses.hpp"
#include "liquiform/ops.hpp"
#include "liquiform/training.hpp"
#include "temp_dir.hpp"

using namespace liquiform;

namespace {

NetworkConfig config(int base, int size, std::uint64_t seed) {
  NetworkConfig c;
  c.base_channels = base;
  c.height = c.width = size;
  c.seed = seed;
  return c;
}

std::shared_ptr<PairCache> tiny_dataset(const testing::TempDir& tmp, int sources, int size) {
  make_source_images(tmp / "src", sources, size + size / 2, 21);
  GenerateOptions o;
  o.height = o.width = size;
  o.seed = 4;
  return std::make_shared<PairCache>(generate(tmp / "src", tmp / "pairs", o));
}

Batch first_batch(std::shared_ptr<PairCache> data, int n) {
  BatchIterator it(std::move(data), Split::train, n, 1);
  it.start_epoch(0);
  Batch b;
  it.next(b);
  return b;
}

std::vector<std::vector<float>> snapshot(const Network<float>& net) {
  std::vector<std::vector<float>> out;
  for (const auto& p : net.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("defaults and validation") {
    const TrainConfig c;
    CHECK(c.lambda_adv == 0.001);
    CHECK(c.learning_rate == 0.01);
    CHECK(c.momentum == 0.9);
    CHECK(c.pretrain_epochs == 10);
    CHECK(c.d_steps_per_g_step == 1);
    CHECK(c.optimizer == OptimizerKind::sgd);
    CHECK_NOTHROW(c.validate());
    TrainConfig bad = c;
    bad.lambda_adv = -0.1;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = c;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = c;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }

  TEST_CASE("single-batch overfit drives the content loss below a tenth of its start") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 4, 32);
    auto g = build_rectification<float>(config(8, 32, 1));
    auto d = build_discriminator<float>(config(8, 32, 2));
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.pretrain_epochs = 300;
    cfg.epochs = 0;
    cfg.seed = 3;
    // At the default rate SGD only reaches about half the starting loss in 300 steps.
    cfg.learning_rate = 0.2;
    TrainLog log;
    const auto start = std::chrono::steady_clock::now();
    train_stage(*g, *d, data, cfg, StageInput{}, 1, log);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE(log.rows.size() == 300);
    const Batch b = first_batch(data, 4);
    NoGradGuard no_grad;
    const double first = log.rows.front().l_mse;
    const double last = content_loss(g->forward(b.distorted, Mode::train), b.original).item();
    MESSAGE("L_mse " << first << " -> " << last << " in " << seconds << " s");
    CHECK(last < 0.1 * first);
    CHECK(seconds < 300.0);
  }

  TEST_CASE("a zero adversarial weight leaves the update identical to pure regression") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 2, 16);
    const Batch b = first_batch(data, 2);
    auto step = [&](bool with_adv_term) {
      auto g = build_rectification<float>(config(4, 16, 5));
      auto d = build_discriminator<float>(config(4, 16, 6));
      Optimizer opt(g->parameters(), OptimizerConfig{});
      opt.zero_grad();
      const Tensor<float> fake = g->forward(b.distorted, Mode::train);
      const Tensor<float> mse = content_loss(fake, b.original);
      if (with_adv_term) {
        const Tensor<float> adv = adversarial_loss(d->forward(fake, Mode::train));
        total_loss(mse, adv, 0.0).backward();
      } else {
        mse.backward();
      }
      opt.step();
      return snapshot(*g);
    };
    CHECK(step(true) == step(false));
  }

  TEST_CASE("pretraining rows record L_adv without it touching the generator") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 4, 16);
    auto run = [&](double lambda) {
      auto g = build_rectification<float>(config(4, 16, 5));
      auto d = build_discriminator<float>(config(4, 16, 6));
      TrainConfig cfg;
      cfg.batch_size = 2;
      cfg.pretrain_epochs = 2;
      cfg.epochs = 0;
      cfg.lambda_adv = lambda;
      TrainLog log;
      train_stage(*g, *d, data, cfg, StageInput{}, 1, log);
      for (const auto& r : log.rows) CHECK(r.l_adv > 0.0);
      return std::make_pair(snapshot(*g), snapshot(*d));
    };
    const auto a = run(0.001), b = run(0.5);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }

  TEST_CASE("a discriminator step sends no gradient to the generator") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 2, 16);
    const Batch b = first_batch(data, 2);
    auto g = build_rectification<float>(config(4, 16, 5));
    auto d = build_discriminator<float>(config(4, 16, 6));
    for (auto p : g->parameters()) p.tensor.zero_grad();
    Optimizer opt_d(d->parameters(), OptimizerConfig{});
    const auto before = snapshot(*d);
    const Tensor<float> fake = g->forward(b.distorted, Mode::train);
    discriminator_step(*d, opt_d, b.original, fake);
    for (auto& p : g->parameters()) {
      INFO(p.name);
      if (p.tensor.has_grad()) {
        for (float v : p.tensor.grad()) CHECK(v == 0.0f);
      }
    }
    CHECK(snapshot(*d) != before);
  }

  TEST_CASE("one regression step lowers the content loss for a small enough rate") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 4, 16);
    const Batch b = first_batch(data, 4);
    const double base_lr = TrainConfig{}.learning_rate;
    std::vector<double> deltas;
    for (double div : {1.0, 10.0, 100.0}) {
      auto g = build_rectification<float>(config(4, 16, 8));
      OptimizerConfig oc;
      oc.learning_rate = base_lr / div;
      Optimizer opt(g->parameters(), oc);
      opt.zero_grad();
      const Tensor<float> before = content_loss(g->forward(b.distorted, Mode::train), b.original);
      before.backward();
      opt.step();
      NoGradGuard no_grad;
      const double after = content_loss(g->forward(b.distorted, Mode::train), b.original).item();
      deltas.push_back(after - before.item());
    }
    MESSAGE("loss change at lr/1, lr/10, lr/100: " << deltas[0] << " " << deltas[1] << " " << deltas[2]);
    CHECK(deltas[2] < 0.0);
    CHECK(deltas[1] < 0.0);
  }

  TEST_CASE("identical seeds give byte-identical logs and parameters") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 6, 16);
    auto run = [&] {
      PipelineConfig pc;
      pc.network = config(4, 16, 12);
      pc.stage1.batch_size = pc.stage2.batch_size = 2;
      pc.stage1.pretrain_epochs = pc.stage2.pretrain_epochs = 1;
      pc.stage1.epochs = pc.stage2.epochs = 1;
      pc.stage1.seed = pc.stage2.seed = 2;
      Pipeline p = train_pipeline(data, pc);
      return std::make_tuple(p.log1.format() + p.log2.format(), snapshot(*p.g1), snapshot(*p.g2), snapshot(*p.d2));
    };
    const auto a = run(), b = run();
    CHECK(std::get<0>(a) == std::get<0>(b));
    CHECK(std::get<1>(a) == std::get<1>(b));
    CHECK(std::get<2>(a) == std::get<2>(b));
    CHECK(std::get<3>(a) == std::get<3>(b));
  }

  TEST_CASE("a non-finite loss aborts with the step recorded") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 4, 16);
    auto g = build_rectification<float>(config(4, 16, 1));
    auto d = build_discriminator<float>(config(4, 16, 2));
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.pretrain_epochs = 1;
    cfg.epochs = 1;
    TrainLog log;
    train_stage(*g, *d, data, cfg, StageInput{}, 1, log);
    REQUIRE(log.rows.size() == 4);
    auto first = g->parameters().front().tensor;
    first.mutable_data()[0] = std::nanf("");
    try {
      train_stage(*g, *d, data, cfg, StageInput{}, 1, log);
      FAIL("expected a numerical abort");
    } catch (const NumericalError& e) {
      CHECK(e.step() == 4);
      CHECK(log.rows.size() == 5);
      CHECK(log.rows.back().step == 4);
      CHECK(std::isnan(log.rows.back().l_mse));
    }
  }

  TEST_CASE("pipeline wiring and restore contract") {
    testing::TempDir tmp;
    auto data = tiny_dataset(tmp, 4, 16);
    PipelineConfig pc;
    pc.network = config(4, 16, 3);
    pc.stage1.batch_size = 2;
    pc.stage2.batch_size = 2;
    pc.stage1.pretrain_epochs = 1;
    pc.stage1.epochs = 1;
    pc.stage2.pretrain_epochs = 0;
    pc.stage2.epochs = 0;
    Pipeline only = train_pipeline(data, pc);
    CHECK_FALSE(only.has_stage2());
    CHECK(only.log2.rows.empty());
    const Image x = data->get(0).first;
    const Image y = only.restore(x);
    CHECK(y == restore_image(only.g1.get(), nullptr, x));
    CHECK(y.same_shape(x));
    for (float v : y.data()) CHECK((v >= 0.0f && v <= 1.0f));

    pc.stage2.pretrain_epochs = 1;
    Pipeline both = train_pipeline(data, pc);
    REQUIRE(both.has_stage2());
    CHECK(snapshot(*both.g1) == snapshot(*only.g1));
    CHECK(both.log1.format() == only.log1.format());
    CHECK(both.log2.rows.front().stage == 2);
    CHECK(both.log2.rows.front().step == 0);
    CHECK(both.restore(x) == restore_image(both.g1.get(), both.g2.get(), x));
  }

  TEST_CASE("train log text round-trips") {
    TrainLog log;
    log.rows.push_back({0, 1, 0.25, 0.6931471805599453, 0.2506931, 1.386, 0.5, 0.5});
    log.rows.push_back({1, 2, 1e-9, 3.0, 0.003, 0.0, 1.0, 0.0});
    const std::string text = log.format();
    CHECK(text.rfind("liquiform-log v1\n", 0) == 0);
    const TrainLog back = TrainLog::parse(text);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.format() == text);
    CHECK(back.rows[1].stage == 2);
    CHECK(back.rows[0].l_adv == doctest::Approx(0.693147181).epsilon(1e-9));
    CHECK_THROWS_AS(TrainLog::parse("liquiform-log v2\n"), FormatError);
    CHECK_THROWS_AS(TrainLog::parse(text + "2\t1\tx\n"), FormatError);
  }
}
