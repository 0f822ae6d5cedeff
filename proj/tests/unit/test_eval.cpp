#include <doctest.h>

#include <cmath>
#include <sstream>

#include "liquiform/error.hpp"
#include "liquiform/eval.hpp"
#include "liquiform/metrics.hpp"
#include "temp_dir.hpp"

using namespace liquiform;

namespace {

std::shared_ptr<PairCache> dataset(const testing::TempDir& tmp, int sources, int size, std::vector<double> ks,
                                   bool all_k, double test_fraction) {
  make_source_images(tmp / "src", sources, size + size / 2, 33);
  GenerateOptions o;
  o.height = o.width = size;
  o.ks = std::move(ks);
  o.all_k = all_k;
  o.seed = 8;
  o.test_fraction = test_fraction;
  return std::make_shared<PairCache>(generate(tmp / "src", tmp / "pairs", o));
}

void check_aggregation(const EvalRow& row) {
  std::size_t count = 0;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t c = 1; c < 5; ++c) {
    count += row.cells[c].count;
    psnr_sum += row.cells[c].psnr * static_cast<double>(row.cells[c].count);
    ssim_sum += row.cells[c].ssim * static_cast<double>(row.cells[c].count);
  }
  CHECK(row.cells[0].count == count);
  CHECK(std::abs(row.cells[0].psnr - psnr_sum / static_cast<double>(count)) <= 1e-9);
  CHECK(std::abs(row.cells[0].ssim - ssim_sum / static_cast<double>(count)) <= 1e-9);
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("identity on undistorted pairs scores the cap everywhere") {
    testing::TempDir tmp;
    auto data = dataset(tmp, 6, 32, {1.0}, false, 0.5);
    const EvalRow row = evaluate("identity", identity_restorer(), *data);
    CHECK(row.cells[0].count == 3);
    CHECK(row.cells[0].psnr == kPsnrCap);
    CHECK(row.cells[0].ssim == 1.0);
    for (std::size_t c = 1; c < 5; ++c) CHECK(row.cells[c].count == 0);
  }

  TEST_CASE("the analytic inverse beats doing nothing in every category") {
    testing::TempDir tmp;
    auto data = dataset(tmp, 8, 48, kDefaultKs, true, 0.5);
    const EvalRow identity = evaluate("identity", identity_restorer(), *data);
    const EvalRow oracle = evaluate("oracle", oracle_restorer(), *data);
    for (std::size_t c = 0; c < 5; ++c) {
      INFO(kCategories[c]);
      CHECK(identity.cells[c].count == (c == 0 ? 16u : 4u));
      CHECK(oracle.cells[c].psnr > identity.cells[c].psnr);
      CHECK(oracle.cells[c].ssim > identity.cells[c].ssim);
    }
    check_aggregation(identity);
    check_aggregation(oracle);
  }

  TEST_CASE("evaluation is repeatable byte for byte") {
    testing::TempDir tmp;
    auto data = dataset(tmp, 6, 32, kDefaultKs, false, 0.5);
    EvalReport a, b;
    a.rows.push_back(evaluate("oracle", oracle_restorer(), *data));
    b.rows.push_back(evaluate("oracle", oracle_restorer(), *data));
    CHECK(a.format_records() == b.format_records());
    CHECK(a.format_table() == b.format_table());
  }

  TEST_CASE("a restorer that changes the shape is reported with the pair") {
    testing::TempDir tmp;
    auto data = dataset(tmp, 2, 32, {0.5}, false, 0.5);
    const Restorer shrink = [](const Image& img, const PairRecord&) { return resize_bilinear(img, 16, 16); };
    try {
      evaluate("shrink", shrink, *data);
      FAIL("expected a shape error");
    } catch (const DimensionError& e) {
      std::string test_pair;
      for (const auto& r : data->manifest().records)
        if (r.split == Split::test) test_pair = r.distorted_path;
      CHECK(std::string(e.what()).find(test_pair) != std::string::npos);
    }
  }

  TEST_CASE("report formats") {
    EvalReport report;
    EvalRow r;
    r.config = "full";
    r.cells[0] = {21.5, 0.61, 3};
    r.cells[2] = {21.5, 0.61, 3};
    report.rows.push_back(r);
    const std::string records = report.format_records();
    CHECK(records.find("full\tS0\t21.500000\t0.610000\t3\n") != std::string::npos);
    CHECK(records.find("full\tS1\t-\t-\t0\n") != std::string::npos);
    std::istringstream lines(records);
    int n = 0;
    for (std::string line; std::getline(lines, line);) ++n;
    CHECK(n == 5);
    const std::string table = report.format_table();
    for (const char* c : kCategories) CHECK(table.find(std::string(c) + " PSNR") != std::string::npos);
    CHECK(table.find("21.500") != std::string::npos);
    CHECK(&report.row("full") == &report.rows[0]);
    CHECK_THROWS_AS(report.row("missing"), ContractError);
  }

  TEST_CASE("an ablation with no training collapses to the initial networks") {
    testing::TempDir tmp;
    auto data = dataset(tmp, 8, 32, kDefaultKs, false, 0.25);
    PipelineConfig cfg;
    cfg.network.base_channels = 2;
    cfg.network.height = cfg.network.width = 32;
    for (TrainConfig* t : {&cfg.stage1, &cfg.stage2}) {
      t->pretrain_epochs = 0;
      t->epochs = 0;
      t->batch_size = 2;
    }
    const AblationResult res = ablation_suite(data, cfg);
    REQUIRE(res.report.rows.size() == kAblationConfigs.size());
    for (std::size_t i = 0; i < kAblationConfigs.size(); ++i) {
      const EvalRow& row = res.report.rows[i];
      CHECK(row.config == kAblationConfigs[i]);
      CHECK(row.cells[0].count == 2);
      check_aggregation(row);
      CHECK((row.cells[0].ssim >= -1.0 && row.cells[0].ssim <= 1.0));
    }
    CHECK(res.logs.size() == kAblationConfigs.size());
    for (const auto& [name, log] : res.logs) CHECK(log.rows.empty());

    auto same = [&](const std::string& a, const std::string& b) {
      const EvalRow &x = res.report.row(a), &y = res.report.row(b);
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(x.cells[c].psnr == y.cells[c].psnr);
        CHECK(x.cells[c].ssim == y.cells[c].ssim);
      }
    };
    same("full", "only_rectification");
    same("rectification_wo_adv", "only_rectification");
    same("rectification_wo_mse", "only_rectification");
    // An untrained refinement network is the identity.
    for (const char* name : {"only_refinement", "refinement_wo_adv", "refinement_wo_mse"}) {
      const EvalRow& row = res.report.row(name);
      CHECK(row.cells[0].psnr == res.baseline.cells[0].psnr);
      CHECK(row.cells[0].ssim == res.baseline.cells[0].ssim);
    }
  }

  TEST_CASE("toy benchmark presets") {
    const ToyBenchmark full = toy_benchmark(), fast = toy_benchmark(true);
    CHECK(full.sources >= 400);
    CHECK(full.size == 64);
    CHECK(full.pipeline.network.height == 64);
    CHECK(fast.pipeline.stage1.pretrain_epochs + fast.pipeline.stage1.epochs <
          full.pipeline.stage1.pretrain_epochs + full.pipeline.stage1.epochs);
    CHECK(fast.pipeline.stage2.pretrain_epochs + fast.pipeline.stage2.epochs <
          full.pipeline.stage2.pretrain_epochs + full.pipeline.stage2.epochs);
    CHECK_NOTHROW(full.pipeline.stage1.validate());
    CHECK_NOTHROW(full.pipeline.stage2.validate());
  }
}
