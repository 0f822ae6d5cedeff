#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "liquiform/dataset.hpp"
#include "liquiform/image.hpp"
#include "liquiform/models.hpp"
#include "liquiform/optim.hpp"

namespace liquiform {

struct TrainConfig {
  double lambda_adv = 0.001;
  double learning_rate = 0.01;
  // Weight of the content term. 0 trains on the adversarial term alone and
  // skips the content-only warm-up, which would have nothing to minimize.
  double content_weight = 1.0;
  int pretrain_epochs = 10;  // content-only warm-up (adversarial weight forced to 0)
  int epochs = 30;           // adversarial epochs after the warm-up
  int batch_size = 8;
  int d_steps_per_g_step = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  OptimizerConfig optimizer_config() const;
  void validate() const;
};

struct TrainLogRow {
  long step = 0;
  int stage = 1;
  double l_mse = 0, l_adv = 0, l_total = 0, d_loss = 0, d_real = 0, d_fake = 0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  // "liquiform-log v1", a column-name line, then one tab-separated row per
  // generator step with values printed to 9 significant digits.
  std::string format() const;
  static TrainLog parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
};

// What a stage feeds its generator: the distorted images themselves, or the
// output of a frozen stage-1 generator (eval mode, no gradient).
struct StageInput {
  Network<float>* frozen_stage1 = nullptr;
};

struct DiscriminatorStats {
  double loss = 0, real_mean = 0, fake_mean = 0;
};

// One optimizer step of D on (real, fake); fake is detached first, so no
// gradient can reach the generator that produced it.
DiscriminatorStats discriminator_step(Network<float>& discriminator, Optimizer& optimizer,
                                      const Tensor<float>& real, const Tensor<float>& fake);

// D's scores in eval mode without recording a graph; used for logging.
DiscriminatorStats discriminator_scores(Network<float>& discriminator, const Tensor<float>& real,
                                        const Tensor<float>& fake);

struct GeneratorLosses {
  Tensor<float> mse, adv, total;
};

// content_weight * L_mse + lambda * L_adv for a generator output. With lambda
// == 0 the adversarial term is evaluated without a graph (for the log only),
// so it cannot influence any parameter.
GeneratorLosses generator_losses(Network<float>& discriminator, const Tensor<float>& fake,
                                 const Tensor<float>& target, double lambda_adv, double content_weight);

// Resume support: skip finished epochs, seed the optimizers with saved
// state, and observe the run after every epoch.
struct StageHooks {
  std::function<void(const std::string&)> progress;
  int start_epoch = 0;  // epochs (warm-up included) already completed
  const OptimizerState* generator_state = nullptr;
  const OptimizerState* discriminator_state = nullptr;
  // Called with the number of completed epochs and both optimizers.
  std::function<void(int, const Optimizer&, const Optimizer&)> epoch_end;
};

// Epochs train_stage runs in total, warm-up included.
int stage_epochs(const TrainConfig& cfg);

// Trains G (and D when the adversarial term is active) on the training split.
// Each generator step appends one row to log. D is updated once per batch
// (d_steps_per_g_step times) on (originals, detached G outputs) before the
// generator step; with lambda_adv == 0 D is left untouched and its scores are
// only evaluated for the log. Throws NumericalError if a loss is not finite;
// the offending row is already in log.
void train_stage(Network<float>& generator, Network<float>& discriminator, std::shared_ptr<PairCache> data,
                 const TrainConfig& cfg, StageInput input, int stage, TrainLog& log,
                 const std::function<void(const std::string&)>& progress = {});
void train_stage(Network<float>& generator, Network<float>& discriminator, std::shared_ptr<PairCache> data,
                 const TrainConfig& cfg, StageInput input, int stage, TrainLog& log, const StageHooks& hooks);

// Generator restoration of one image: G1, then G2 when present.
Image restore_image(Network<float>* stage1, Network<float>* stage2, const Image& image);

struct Pipeline {
  std::unique_ptr<Network<float>> g1, d1, g2, d2;
  TrainLog log1, log2;
  bool has_stage2() const { return static_cast<bool>(g2); }
  Image restore(const Image& image) const;
};

struct PipelineConfig {
  NetworkConfig network;  // generator config; the discriminators share its size
  int disc_base_channels = 0;  // 0: same as network.base_channels
  TrainConfig stage1;
  TrainConfig stage2;
};

// Stage 1 maps distorted -> original; stage 2 maps frozen stage-1 outputs ->
// original. A stage-2 schedule with no epochs at all yields a stage-1-only
// pipeline.
Pipeline train_pipeline(std::shared_ptr<PairCache> data, const PipelineConfig& cfg,
                        const std::function<void(const std::string&)>& progress = {});

NetworkConfig discriminator_config(const PipelineConfig& cfg);

// Size and seed of one of the four pipeline networks. Every entry point
// (pipeline, ablation, command line) builds its networks through this, so
// the same configuration always starts from the same weights.
NetworkConfig stage_network_config(const PipelineConfig& cfg, int stage, bool discriminator);

}  // namespace liquiform
