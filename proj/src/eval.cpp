#include "liquiform/eval.hpp"

#include <cmath>
#include <cstdio>

#include "liquiform/error.hpp"
#include "liquiform/metrics.hpp"
#include "liquiform/parallel.hpp"
#include "liquiform/rng.hpp"
#include "liquiform/warp.hpp"

namespace liquiform {

const EvalRow& EvalReport::row(const std::string& config) const {
  for (const auto& r : rows) {
    if (r.config == config) return r;
  }
  throw ContractError("report has no row '" + config + "'");
}

namespace {

std::string num(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string EvalReport::format_table() const {
  std::size_t name_w = 6;
  for (const auto& r : rows) name_w = std::max(name_w, r.config.size());
  std::string out = pad("config", name_w, true);
  for (const char* c : kCategories) out += " | " + pad(std::string(c) + " PSNR", 9) + " " + pad(std::string(c) + " SSIM", 8);
  out += " | " + pad("pairs", 5) + "\n";
  out += std::string(out.size() - 1, '-') + "\n";
  for (const auto& r : rows) {
    out += pad(r.config, name_w, true);
    for (const auto& cell : r.cells) {
      if (cell.count == 0) {
        out += " | " + pad("-", 9) + " " + pad("-", 8);
      } else {
        out += " | " + pad(num("%.3f", cell.psnr), 9) + " " + pad(num("%.4f", cell.ssim), 8);
      }
    }
    out += " | " + pad(std::to_string(r.cells[0].count), 5) + "\n";
  }
  return out;
}

std::string EvalReport::format_records() const {
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < kCategories.size(); ++c) {
      const EvalCell& cell = r.cells[c];
      out += r.config + "\t" + kCategories[c] + "\t";
      if (cell.count == 0) {
        out += "-\t-\t0\n";
      } else {
        out += num("%.6f", cell.psnr) + "\t" + num("%.6f", cell.ssim) + "\t" + std::to_string(cell.count) + "\n";
      }
    }
  }
  return out;
}

EvalRow evaluate(const std::string& config, const Restorer& restorer, PairCache& data, Split split) {
  const auto& records = data.manifest().records;
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) selected.push_back(i);
  }
  for (std::size_t i : selected) data.get(i);  // load serially; the cache is single-consumer

  std::vector<std::pair<double, double>> scores(selected.size());
  for (std::size_t j = 0; j < selected.size(); ++j) {
    const auto& pair = data.get(selected[j]);
    const PairRecord& rec = records[selected[j]];
    const Image restored = restorer(pair.first, rec);
    if (!restored.same_shape(pair.second)) {
      throw DimensionError("restorer output for pair " + rec.distorted_path + " has shape " +
                           std::to_string(restored.height()) + "x" + std::to_string(restored.width()) + "x" +
                           std::to_string(restored.channels()) + ", original is " +
                           std::to_string(pair.second.height()) + "x" + std::to_string(pair.second.width()) + "x" +
                           std::to_string(pair.second.channels()));
    }
    scores[j] = {psnr(restored, pair.second), ssim(restored, pair.second)};
  }

  EvalRow row;
  row.config = config;
  std::array<double, 5> psnr_sum{}, ssim_sum{};
  for (std::size_t j = 0; j < selected.size(); ++j) {
    const std::string& cat = records[selected[j]].category;
    std::size_t c = 0;
    if (cat.size() == 2 && cat[0] == 'S' && cat[1] >= '1' && cat[1] <= '4') c = static_cast<std::size_t>(cat[1] - '0');
    psnr_sum[0] += scores[j].first;
    ssim_sum[0] += scores[j].second;
    ++row.cells[0].count;
    if (c != 0) {
      psnr_sum[c] += scores[j].first;
      ssim_sum[c] += scores[j].second;
      ++row.cells[c].count;
    }
  }
  for (std::size_t c = 0; c < 5; ++c) {
    if (row.cells[c].count == 0) continue;
    row.cells[c].psnr = psnr_sum[c] / static_cast<double>(row.cells[c].count);
    row.cells[c].ssim = ssim_sum[c] / static_cast<double>(row.cells[c].count);
  }
  return row;
}

Restorer identity_restorer() {
  return [](const Image& img, const PairRecord&) { return img; };
}

Restorer oracle_restorer() {
  return [](const Image& img, const PairRecord& rec) {
    WarpSpec spec;
    spec.k = rec.k;
    return analytic_restore(img, spec);
  };
}

Restorer network_restorer(Network<float>* stage1, Network<float>* stage2) {
  return [stage1, stage2](const Image& img, const PairRecord&) { return restore_image(stage1, stage2, img); };
}

AblationResult ablation_suite(std::shared_ptr<PairCache> data, const PipelineConfig& cfg,
                              const std::function<void(const std::string&)>& progress) {
  AblationResult out;
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  // Single-stage run with the given schedule; returns the trained generator.
  auto run = [&](const std::string& name, NetworkKind kind, const TrainConfig& tc, Network<float>* frozen,
                 int stage) {
    say("training " + name);
    const int slot = kind == NetworkKind::rectification ? 1 : 2;
    auto g = build_network<float>(kind, stage_network_config(cfg, slot, false));
    auto d = build_discriminator<float>(stage_network_config(cfg, slot, true));
    TrainLog log;
    train_stage(*g, *d, data, tc, StageInput{frozen}, stage, log, progress);
    out.logs.emplace_back(name + ".stage" + std::to_string(stage), std::move(log));
    return g;
  };
  auto score = [&](const std::string& name, Network<float>* s1, Network<float>* s2) {
    out.report.rows.push_back(evaluate(name, network_restorer(s1, s2), *data));
  };

  out.baseline = evaluate("distorted_input", identity_restorer(), *data);

  TrainConfig wo_adv1 = cfg.stage1, wo_mse1 = cfg.stage1, wo_adv2 = cfg.stage2, wo_mse2 = cfg.stage2;
  wo_adv1.lambda_adv = 0.0;
  wo_adv2.lambda_adv = 0.0;
  wo_mse1.content_weight = 0.0;
  wo_mse2.content_weight = 0.0;

  auto g1 = run("only_rectification", NetworkKind::rectification, cfg.stage1, nullptr, 1);
  auto g2 = run("full", NetworkKind::refinement, cfg.stage2, g1.get(), 2);
  score("full", g1.get(), g2.get());
  score("only_rectification", g1.get(), nullptr);
  {
    auto r = run("only_refinement", NetworkKind::refinement, cfg.stage2, nullptr, 1);
    score("only_refinement", r.get(), nullptr);
  }
  {
    auto r = run("refinement_wo_adv", NetworkKind::refinement, wo_adv2, nullptr, 1);
    score("refinement_wo_adv", r.get(), nullptr);
  }
  {
    auto r = run("refinement_wo_mse", NetworkKind::refinement, wo_mse2, nullptr, 1);
    score("refinement_wo_mse", r.get(), nullptr);
  }
  {
    auto r = run("rectification_wo_adv", NetworkKind::rectification, wo_adv1, nullptr, 1);
    score("rectification_wo_adv", r.get(), nullptr);
  }
  {
    auto r = run("rectification_wo_mse", NetworkKind::rectification, wo_mse1, nullptr, 1);
    score("rectification_wo_mse", r.get(), nullptr);
  }
  return out;
}

ToyBenchmark toy_benchmark(bool fast) {
  ToyBenchmark b;
  PipelineConfig& p = b.pipeline;
  p.network.base_channels = 8;
  p.network.height = p.network.width = b.size;
  p.network.seed = 1;
  TrainConfig t;
  t.learning_rate = 0.05;
  t.lambda_adv = 1e-4;
  t.batch_size = 8;
  t.seed = 1;
  p.stage1 = t;
  p.stage2 = t;
  p.stage1.pretrain_epochs = fast ? 6 : 10;
  p.stage1.epochs = fast ? 2 : 4;
  p.stage2.pretrain_epochs = fast ? 3 : 6;
  p.stage2.epochs = fast ? 2 : 3;
  return b;
}

std::shared_ptr<PairCache> prepare_toy_benchmark(const ToyBenchmark& bench, const std::filesystem::path& dir) {
  const auto manifest = dir / "pairs" / kManifestFileName;
  if (!std::filesystem::exists(manifest)) {
    make_source_images(dir / "sources", bench.sources, bench.source_size, bench.seed);
    GenerateOptions o;
    o.height = o.width = bench.size;
    o.seed = bench.seed;
    o.test_fraction = bench.test_fraction;
    generate(dir / "sources", dir / "pairs", o);
  }
  return std::make_shared<PairCache>(read_manifest(manifest));
}

}  // namespace liquiform
