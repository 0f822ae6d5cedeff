#include "liquiform/training.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "liquiform/error.hpp"
#include "liquiform/io.hpp"
#include "liquiform/losses.hpp"
#include "liquiform/parallel.hpp"
#include "liquiform/rng.hpp"

namespace liquiform {

OptimizerConfig TrainConfig::optimizer_config() const {
  OptimizerConfig o;
  o.kind = optimizer;
  o.learning_rate = learning_rate;
  o.momentum = momentum;
  o.beta1 = adam_beta1;
  o.beta2 = adam_beta2;
  return o;
}

void TrainConfig::validate() const {
  if (!(lambda_adv >= 0.0) || !std::isfinite(lambda_adv)) throw ContractError("lambda must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning rate must be > 0");
  if (!(content_weight >= 0.0)) throw ContractError("content weight must be >= 0");
  if (content_weight == 0.0 && lambda_adv == 0.0) {
    throw ContractError("content weight and lambda are both 0; nothing to train");
  }
  if (pretrain_epochs < 0 || epochs < 0) throw ContractError("epoch counts must be >= 0");
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  if (d_steps_per_g_step < 1) throw ContractError("d_steps_per_g_step must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
}

namespace {

const char* kLogHeader = "liquiform-log v1";
const char* kLogColumns = "step\tstage\tL_mse\tL_adv\tL_total\tD_loss\tD_real\tD_fake";

double mean_of(const Tensor<float>& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s / static_cast<double>(t.numel());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";  // printf may add a sign
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string TrainLog::format() const {
  std::string out = std::string(kLogHeader) + "\n" + kLogColumns + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "\t" + std::to_string(r.stage) + "\t" + fmt(r.l_mse) + "\t" + fmt(r.l_adv) +
           "\t" + fmt(r.l_total) + "\t" + fmt(r.d_loss) + "\t" + fmt(r.d_real) + "\t" + fmt(r.d_fake) + "\n";
  }
  return out;
}

TrainLog TrainLog::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader) throw FormatError("not a training log");
  if (!std::getline(in, line) || line != kLogColumns) throw FormatError("training log column line missing");
  TrainLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    TrainLogRow r;
    std::string s[8];
    for (auto& f : s) {
      if (!std::getline(fields, f, '\t')) throw FormatError("short training log row");
    }
    try {
      r.step = std::stol(s[0]);
      r.stage = std::stoi(s[1]);
      r.l_mse = std::stod(s[2]);
      r.l_adv = std::stod(s[3]);
      r.l_total = std::stod(s[4]);
      r.d_loss = std::stod(s[5]);
      r.d_real = std::stod(s[6]);
      r.d_fake = std::stod(s[7]);
    } catch (const std::exception&) {
      throw FormatError("malformed training log row: " + line);
    }
    log.rows.push_back(r);
  }
  return log;
}

void TrainLog::save(const std::filesystem::path& path) const { write_file_atomic(path, format()); }

DiscriminatorStats discriminator_step(Network<float>& discriminator, Optimizer& optimizer,
                                      const Tensor<float>& real, const Tensor<float>& fake) {
  optimizer.zero_grad();
  Tensor<float> d_real = discriminator.forward(real, Mode::train);
  Tensor<float> d_fake = discriminator.forward(fake.detach(), Mode::train);
  Tensor<float> loss = discriminator_loss(d_real, d_fake);
  loss.backward();
  optimizer.step();
  return {loss.item(), mean_of(d_real), mean_of(d_fake)};
}

DiscriminatorStats discriminator_scores(Network<float>& discriminator, const Tensor<float>& real,
                                        const Tensor<float>& fake) {
  NoGradGuard no_grad;
  Tensor<float> d_real = discriminator.forward(real, Mode::eval);
  Tensor<float> d_fake = discriminator.forward(fake, Mode::eval);
  return {discriminator_loss(d_real, d_fake).item(), mean_of(d_real), mean_of(d_fake)};
}

GeneratorLosses generator_losses(Network<float>& discriminator, const Tensor<float>& fake,
                                 const Tensor<float>& target, double lambda_adv, double content_weight) {
  GeneratorLosses g;
  g.mse = content_loss(fake, target);
  if (lambda_adv > 0.0) {
    g.adv = adversarial_loss(discriminator.forward(fake, Mode::train));
  } else {
    NoGradGuard no_grad;
    g.adv = adversarial_loss(discriminator.forward(fake, Mode::eval));
  }
  g.total = total_loss(g.mse, g.adv, lambda_adv, content_weight);
  return g;
}

int stage_epochs(const TrainConfig& cfg) { return (cfg.content_weight > 0.0 ? cfg.pretrain_epochs : 0) + cfg.epochs; }

void train_stage(Network<float>& generator, Network<float>& discriminator, std::shared_ptr<PairCache> data,
                 const TrainConfig& cfg, StageInput input, int stage, TrainLog& log,
                 const std::function<void(const std::string&)>& progress) {
  StageHooks hooks;
  hooks.progress = progress;
  train_stage(generator, discriminator, std::move(data), cfg, input, stage, log, hooks);
}

void train_stage(Network<float>& generator, Network<float>& discriminator, std::shared_ptr<PairCache> data,
                 const TrainConfig& cfg, StageInput input, int stage, TrainLog& log, const StageHooks& hooks) {
  cfg.validate();
  const auto& progress = hooks.progress;
  FlushDenormals ftz;
  BatchIterator batches(std::move(data), Split::train, cfg.batch_size,
                        mix_seed(cfg.seed, 0x5354414745ULL + static_cast<std::uint64_t>(stage)));
  if (batches.size() == 0) throw ContractError("training split is empty");
  Optimizer opt_g(generator.parameters(), cfg.optimizer_config());
  Optimizer opt_d(discriminator.parameters(), cfg.optimizer_config());
  if (hooks.generator_state) opt_g.load_state(*hooks.generator_state);
  if (hooks.discriminator_state) opt_d.load_state(*hooks.discriminator_state);

  long step = log.rows.empty() ? 0 : log.rows.back().step + 1;
  const int warmup = cfg.content_weight > 0.0 ? cfg.pretrain_epochs : 0;
  const int total_epochs = stage_epochs(cfg);
  if (hooks.start_epoch < 0 || hooks.start_epoch > total_epochs) throw ContractError("start epoch out of range");
  for (int epoch = hooks.start_epoch; epoch < total_epochs; ++epoch) {
    const bool pretraining = epoch < warmup;
    const double lambda = pretraining ? 0.0 : cfg.lambda_adv;
    batches.start_epoch(epoch);
    Batch batch;
    double epoch_mse = 0.0;
    int count = 0;
    while (batches.next(batch)) {
      Tensor<float> x = batch.distorted;
      if (input.frozen_stage1) {
        NoGradGuard no_grad;
        x = input.frozen_stage1->forward(x, Mode::eval).detach();
      }
      Tensor<float> fake = generator.forward(x, Mode::train);

      DiscriminatorStats d;
      if (lambda > 0.0) {
        for (int k = 0; k < cfg.d_steps_per_g_step; ++k) d = discriminator_step(discriminator, opt_d, batch.original, fake);
      } else {
        d = discriminator_scores(discriminator, batch.original, fake);
      }

      GeneratorLosses g = generator_losses(discriminator, fake, batch.original, lambda, cfg.content_weight);
      TrainLogRow row{step, stage, g.mse.item(), g.adv.item(), g.total.item(), d.loss, d.real_mean, d.fake_mean};
      log.rows.push_back(row);
      for (double v : {row.l_mse, row.l_adv, row.l_total, row.d_loss, row.d_real, row.d_fake}) {
        if (!std::isfinite(v)) {
          throw NumericalError("non-finite loss at step " + std::to_string(step) + " (stage " + std::to_string(stage) + ")",
                               step);
        }
      }
      opt_g.zero_grad();
      g.total.backward();
      opt_g.step();
      epoch_mse += row.l_mse;
      ++count;
      ++step;
    }
    if (progress) {
      char msg[160];
      std::snprintf(msg, sizeof(msg), "stage %d epoch %d/%d%s mean L_mse %.6f", stage, epoch + 1, total_epochs,
                    pretraining ? " (warm-up)" : "", epoch_mse / std::max(count, 1));
      progress(msg);
    }
    if (hooks.epoch_end) hooks.epoch_end(epoch + 1, opt_g, opt_d);
  }
}

Image restore_image(Network<float>* stage1, Network<float>* stage2, const Image& image) {
  NoGradGuard no_grad;
  FlushDenormals ftz;
  const Image rgb = to_rgb(image);
  std::vector<Image> one{rgb};
  Tensor<float> x = images_to_tensor<float>(one);
  if (stage1) x = stage1->forward(x, Mode::eval);
  if (stage2) x = stage2->forward(x, Mode::eval);
  return tensor_to_image(x, 0);
}

Image Pipeline::restore(const Image& image) const { return restore_image(g1.get(), g2.get(), image); }

NetworkConfig discriminator_config(const PipelineConfig& cfg) {
  NetworkConfig d = cfg.network;
  if (cfg.disc_base_channels > 0) d.base_channels = cfg.disc_base_channels;
  return d;
}

NetworkConfig stage_network_config(const PipelineConfig& cfg, int stage, bool discriminator) {
  if (stage != 1 && stage != 2) throw ContractError("stage must be 1 or 2");
  NetworkConfig c = discriminator ? discriminator_config(cfg) : cfg.network;
  c.seed = mix_seed(cfg.network.seed, static_cast<std::uint64_t>(2 * (stage - 1) + (discriminator ? 2 : 1)));
  return c;
}

Pipeline train_pipeline(std::shared_ptr<PairCache> data, const PipelineConfig& cfg,
                        const std::function<void(const std::string&)>& progress) {
  Pipeline p;
  p.g1 = build_rectification<float>(stage_network_config(cfg, 1, false));
  p.d1 = build_discriminator<float>(stage_network_config(cfg, 1, true));
  train_stage(*p.g1, *p.d1, data, cfg.stage1, StageInput{}, 1, p.log1, progress);
  if (cfg.stage2.pretrain_epochs + cfg.stage2.epochs > 0) {
    p.g2 = build_refinement<float>(stage_network_config(cfg, 2, false));
    p.d2 = build_discriminator<float>(stage_network_config(cfg, 2, true));
    train_stage(*p.g2, *p.d2, data, cfg.stage2, StageInput{p.g1.get()}, 2, p.log2, progress);
  }
  return p;
}

}  // namespace liquiform
