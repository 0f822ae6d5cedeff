#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "liquiform/dataset.hpp"
#include "liquiform/image.hpp"
#include "liquiform/training.hpp"

namespace liquiform {

using Restorer = std::function<Image(const Image& distorted, const PairRecord& record)>;

struct EvalCell {
  double psnr = 0.0;  // mean over the cell's pairs
  double ssim = 0.0;
  std::size_t count = 0;
};

inline constexpr std::array<const char*, 5> kCategories = {"S0", "S1", "S2", "S3", "S4"};

struct EvalRow {
  std::string config;
  std::array<EvalCell, 5> cells;  // S0 (overall), S1..S4
};

struct EvalReport {
  std::vector<EvalRow> rows;

  const EvalRow& row(const std::string& config) const;
  // Aligned table: one line per configuration, PSNR/SSIM per category.
  std::string format_table() const;
  // One record per (config, category): config, category, psnr, ssim, count
  // separated by tabs. Empty cells print '-'.
  std::string format_records() const;
};

// Scores restorer(distorted) against the original for every pair in the
// split. Pairs whose k is off the grid count towards S0 only.
EvalRow evaluate(const std::string& config, const Restorer& restorer, PairCache& data, Split split = Split::test);

Restorer identity_restorer();
Restorer oracle_restorer();  // analytic inverse warp with the record's k
Restorer network_restorer(Network<float>* stage1, Network<float>* stage2);

// Names of the seven configurations, in report order.
inline const std::vector<std::string> kAblationConfigs = {
    "full",           "only_rectification", "only_refinement",     "refinement_wo_adv",
    "refinement_wo_mse", "rectification_wo_adv", "rectification_wo_mse"};

struct AblationResult {
  EvalReport report;
  std::vector<std::pair<std::string, TrainLog>> logs;  // "<config>.stage<n>"
  EvalRow baseline;  // distorted input scored against the original
};

// Trains and evaluates the seven configurations:
//   full                 stage 1 + stage 2
//   only_rectification   stage 1
//   only_refinement      refinement network trained directly on distorted input
//   *_wo_adv             that single stage with lambda = 0
//   *_wo_mse             that single stage with content weight 0 (adversarial only)
// full reuses the stage-1 network of only_rectification.
AblationResult ablation_suite(std::shared_ptr<PairCache> data, const PipelineConfig& cfg,
                              const std::function<void(const std::string&)>& progress = {});

// Desk-scale benchmark: synthetic faces, 64x64 pairs, base width 8.
struct ToyBenchmark {
  int sources = 400;  // one pair per source image
  int source_size = 96;
  int size = 64;
  std::uint64_t seed = 7;
  double test_fraction = 0.1;
  PipelineConfig pipeline;
};

// The full preset, or the --fast one with shorter schedules.
ToyBenchmark toy_benchmark(bool fast = false);

// Creates <dir>/sources and <dir>/pairs unless a manifest is already there,
// then returns a cache over the pairs.
std::shared_ptr<PairCache> prepare_toy_benchmark(const ToyBenchmark& bench, const std::filesystem::path& dir);

}  // namespace liquiform
