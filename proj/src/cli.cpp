#include "liquiform/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>

#include "liquiform/checkpoint.hpp"
#include "liquiform/config.hpp"
#include "liquiform/error.hpp"
#include "liquiform/eval.hpp"
#include "liquiform/io.hpp"
#include "liquiform/selfcheck.hpp"

namespace liquiform {

namespace {

namespace fs = std::filesystem;

// Config keys as flags: --<section>.<key> for every key of the listed
// sections, plus short aliases for the common ones.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> dotted;
  std::map<std::string, std::string> aliased;

  void attach(CLI::App* cmd, const std::vector<std::string>& sections,
              const std::vector<std::pair<std::string, std::string>>& aliases) {
    cmd->add_option("--config", file, "INI file with [warp] [data] [model] [train] sections");
    for (const auto& k : config_keys()) {
      if (std::find(sections.begin(), sections.end(), k.section) == sections.end()) continue;
      cmd->add_option("--" + k.full_name(), dotted[k.full_name()], k.help + " (default " + k.default_value + ")")
          ->group("Config keys");
    }
    for (const auto& [alias, key] : aliases) {
      if (Config().get(key) == "false") {
        std::string* slot = &aliased[key];
        cmd->add_flag_callback(alias, [slot] { *slot = "true"; }, "same as --" + key + " true");
      } else {
        cmd->add_option(alias, aliased[key], "same as --" + key);
      }
    }
  }

  Config build() const {
    Config cfg;
    if (!file.empty()) cfg.load_file(file);
    for (const auto* m : {&dotted, &aliased}) {
      for (const auto& [key, value] : *m) {
        if (!value.empty()) cfg.set(key, value);
      }
    }
    return cfg;
  }

  bool any() const {
    if (!file.empty()) return true;
    for (const auto* m : {&dotted, &aliased})
      for (const auto& [key, value] : *m)
        if (!value.empty()) return true;
    return false;
  }
};

void check_thread_env() {
  const char* env = std::getenv("LIQUIFORM_THREADS");
  if (!env) return;
  const std::string v = env;
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ContractError("LIQUIFORM_THREADS must be a non-negative integer, got '" + v + "'");
  }
}

// Files that let a stage resume after an interruption.
struct StageFiles {
  fs::path generator, discriminator, log, state;
  StageFiles(const fs::path& dir, int stage) {
    const std::string s = "stage" + std::to_string(stage);
    generator = dir / (s + ".ckpt");
    discriminator = dir / (s + ".disc.ckpt");
    log = dir / (s + ".log");
    state = dir / (s + ".state");
  }
};

float exact_count(long v, const char* what) {
  if (v < 0 || v > (1L << 24)) throw ContractError(std::string(what) + " too large to record");
  return static_cast<float>(v);
}

void append_optimizer(std::vector<CheckpointRecord>& out, const std::string& prefix, const OptimizerState& s) {
  out.push_back({prefix + ".steps", {1}, {exact_count(s.steps, "optimizer step count")}});
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.push_back({prefix + ".m." + std::to_string(i), {static_cast<Index>(s.m[i].size())}, s.m[i]});
  }
  for (std::size_t i = 0; i < s.v.size(); ++i) {
    out.push_back({prefix + ".v." + std::to_string(i), {static_cast<Index>(s.v[i].size())}, s.v[i]});
  }
}

struct TrainingState {
  int epochs_done = 0;
  std::size_t log_rows = 0;
  std::vector<CheckpointRecord> generator, discriminator;
  OptimizerState opt_g, opt_d;
};

std::string encode_state(const TrainingState& s) {
  std::vector<CheckpointRecord> r;
  r.push_back({"state.epochs_done", {1}, {exact_count(s.epochs_done, "epoch count")}});
  r.push_back({"state.log_rows", {1}, {exact_count(static_cast<long>(s.log_rows), "log length")}});
  for (const auto& g : s.generator) r.push_back({"g." + g.name, g.shape, g.values});
  for (const auto& d : s.discriminator) r.push_back({"d." + d.name, d.shape, d.values});
  append_optimizer(r, "opt.g", s.opt_g);
  append_optimizer(r, "opt.d", s.opt_d);
  return encode_checkpoint(r);
}

TrainingState decode_state(const fs::path& path) {
  TrainingState s;
  bool epochs = false, rows = false;
  for (auto& r : load_checkpoint(path)) {
    auto tail = [&](const std::string& prefix) { return r.name.substr(prefix.size()); };
    auto starts = [&](const std::string& prefix) { return r.name.rfind(prefix, 0) == 0; };
    auto scalar = [&] {
      if (r.values.size() != 1) throw FormatError(path.string() + ": record " + r.name + " is not a scalar");
      return static_cast<long>(r.values[0]);
    };
    auto buffer = [&](std::vector<std::vector<float>>& list, const std::string& prefix) {
      if (tail(prefix) != std::to_string(list.size())) throw FormatError(path.string() + ": records out of order");
      list.push_back(std::move(r.values));
    };
    if (r.name == "state.epochs_done") {
      s.epochs_done = static_cast<int>(scalar());
      epochs = true;
    } else if (r.name == "state.log_rows") {
      s.log_rows = static_cast<std::size_t>(scalar());
      rows = true;
    } else if (starts("g.")) {
      r.name = tail("g.");
      s.generator.push_back(std::move(r));
    } else if (starts("d.")) {
      r.name = tail("d.");
      s.discriminator.push_back(std::move(r));
    } else if (r.name == "opt.g.steps") {
      s.opt_g.steps = scalar();
    } else if (r.name == "opt.d.steps") {
      s.opt_d.steps = scalar();
    } else if (starts("opt.g.m.")) {
      buffer(s.opt_g.m, "opt.g.m.");
    } else if (starts("opt.g.v.")) {
      buffer(s.opt_g.v, "opt.g.v.");
    } else if (starts("opt.d.m.")) {
      buffer(s.opt_d.m, "opt.d.m.");
    } else if (starts("opt.d.v.")) {
      buffer(s.opt_d.v, "opt.d.v.");
    } else {
      throw FormatError(path.string() + ": unexpected record " + r.name);
    }
  }
  if (!epochs || !rows) throw FormatError(path.string() + ": not a training state file");
  return s;
}

struct ImageSize {
  int height, width;
};

ImageSize pair_size(PairCache& data) {
  if (data.manifest().records.empty()) throw ContractError("manifest has no pairs");
  const Image& first = data.get(0).second;
  return {first.height(), first.width()};
}

// Thrown once an invocation has used up its --max-epochs budget.
struct Paused {};

// Trains one stage into dir, picking up from a saved state when asked.
// budget counts the epochs this invocation may still run; negative = no limit.
std::unique_ptr<Network<float>> run_stage(int stage, const PipelineConfig& pc, std::shared_ptr<PairCache> data,
                                          Network<float>* frozen, const fs::path& dir, bool resume, int& budget,
                                          std::ostream& out) {
  const StageFiles files(dir, stage);
  const TrainConfig& tc = stage == 1 ? pc.stage1 : pc.stage2;
  auto g = build_network<float>(stage == 1 ? NetworkKind::rectification : NetworkKind::refinement,
                                stage_network_config(pc, stage, false));
  auto d = build_discriminator<float>(stage_network_config(pc, stage, true));
  TrainLog log;
  StageHooks hooks;
  hooks.progress = [&](const std::string& msg) { out << msg << std::endl; };
  TrainingState saved;
  if (resume && fs::exists(files.state)) {
    saved = decode_state(files.state);
    load_into(*g, saved.generator);
    load_into(*d, saved.discriminator);
    log = TrainLog::parse(read_file(files.log));
    if (log.rows.size() < saved.log_rows) throw FormatError(files.log.string() + " is shorter than its saved state");
    log.rows.resize(saved.log_rows);
    hooks.start_epoch = saved.epochs_done;
    hooks.generator_state = &saved.opt_g;
    hooks.discriminator_state = &saved.opt_d;
    out << "stage " << stage << ": resuming after epoch " << saved.epochs_done << std::endl;
  }
  hooks.epoch_end = [&](int done, const Optimizer& og, const Optimizer& od) {
    TrainingState s;
    s.epochs_done = done;
    s.log_rows = log.rows.size();
    s.generator = checkpoint_records(*g);
    s.discriminator = checkpoint_records(*d);
    s.opt_g = og.state();
    s.opt_d = od.state();
    log.save(files.log);
    write_file_atomic(files.state, encode_state(s));
    save_checkpoint(*g, files.generator);
    save_checkpoint(*d, files.discriminator);
    if (budget > 0 && --budget == 0 && done < stage_epochs(tc)) throw Paused{};
  };
  if (budget == 0 && hooks.start_epoch < stage_epochs(tc)) throw Paused{};
  try {
    train_stage(*g, *d, std::move(data), tc, StageInput{frozen}, stage, log, hooks);
  } catch (const NumericalError&) {
    log.save(files.log);
    throw;
  }
  log.save(files.log);
  save_checkpoint(*g, files.generator);
  save_checkpoint(*d, files.discriminator);
  return g;
}

void require_multiple_of_16(const Image& img) {
  if (img.height() % 16 != 0 || img.width() % 16 != 0) {
    throw ContractError("image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                        "; width and height must be multiples of 16 (pad or resize it first)");
  }
}

std::unique_ptr<Network<float>> load_generator(const fs::path& path, NetworkKind expected, int h, int w) {
  const auto records = load_checkpoint(path);
  auto net = network_from_checkpoint(records, h, w);
  if (net->kind() != expected) {
    throw ContractError(path.string() + " holds a " + to_string(net->kind()) + " network, expected " +
                        to_string(expected));
  }
  return net;
}

void write_report(const EvalReport& report, const std::string& out_dir, std::ostream& out) {
  out << report.format_table();
  if (out_dir.empty()) return;
  write_file_atomic(fs::path(out_dir) / "report.txt", report.format_table());
  write_file_atomic(fs::path(out_dir) / "report.tsv", report.format_records());
  out << "wrote " << (fs::path(out_dir) / "report.txt").string() << " and report.tsv" << std::endl;
}

std::string config_footer() { return "\nConfig keys (section.key, default, meaning):\n" + config_reference(); }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Radial liquify distortion: synthesis, learned restoration and evaluation.", "liquiform"};
  app.require_subcommand(1);
  app.footer(config_footer());

  // distort
  auto* distort_cmd = app.add_subcommand("distort", "apply a radial scaling effect to an image");
  std::string in, out_path, compose_file;
  ConfigFlags distort_flags;
  distort_cmd->add_option("--in", in, "input image (.png, .ppm, .pgm)")->required();
  distort_cmd->add_option("--out", out_path, "output image")->required();
  distort_cmd->add_option("--compose", compose_file, "file of effects, one 'k=.. [center=x,y] [region=r]' per line");
  distort_flags.attach(distort_cmd, {"warp"}, {{"--k", "warp.k"}, {"--center", "warp.center"}, {"--region", "warp.region"}});

  // make-sources
  auto* sources_cmd = app.add_subcommand("make-sources", "write synthetic face images to use as a source corpus");
  std::string sources_out;
  int sources_count = 400, sources_size = 96;
  std::uint64_t sources_seed = 7;
  sources_cmd->add_option("--out", sources_out, "output directory")->required();
  sources_cmd->add_option("--count", sources_count, "number of images")->capture_default_str();
  sources_cmd->add_option("--size", sources_size, "image side in pixels")->capture_default_str();
  sources_cmd->add_option("--seed", sources_seed, "generator seed")->capture_default_str();

  // make-fixture
  auto* fixture_cmd = app.add_subcommand("make-fixture", "write the bullseye test image");
  std::string fixture_out;
  int fixture_size = 224;
  double fixture_period = 28.0;
  fixture_cmd->add_option("--out", fixture_out, "output image")->required();
  fixture_cmd->add_option("--size", fixture_size, "image side in pixels")->capture_default_str();
  fixture_cmd->add_option("--period", fixture_period, "ring period in pixels")->capture_default_str();

  // gen-dataset
  auto* gen_cmd = app.add_subcommand("gen-dataset", "build distorted/original pairs and a manifest");
  std::string gen_src, gen_out;
  ConfigFlags gen_flags;
  gen_cmd->add_option("--src", gen_src, "directory of source images")->required();
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_flags.attach(gen_cmd, {"data"},
                   {{"--ks", "data.ks"}, {"--size", "data.size"}, {"--test-frac", "data.test_frac"},
                    {"--seed", "data.seed"}, {"--all-k", "data.all_k"}});
  gen_cmd->footer(config_footer());

  // train
  auto* train_cmd = app.add_subcommand("train", "train stage 1, stage 2 or both");
  std::string train_manifest, train_dir, train_stage_arg = "all", train_ckpt1;
  bool train_resume = false;
  int train_max_epochs = -1;
  ConfigFlags train_flags;
  train_cmd->add_option("--manifest", train_manifest, "dataset manifest.tsv")->required();
  train_cmd->add_option("--out-dir", train_dir, "directory for checkpoints, logs and resume state")->required();
  train_cmd->add_option("--stage", train_stage_arg, "1, 2 or all")
      ->check(CLI::IsMember({"1", "2", "all"}))
      ->capture_default_str();
  train_cmd->add_option("--ckpt1", train_ckpt1, "stage-1 checkpoint for --stage 2 (default <out-dir>/stage1.ckpt)");
  train_cmd->add_flag("--resume", train_resume, "continue from the state saved after the last finished epoch");
  train_cmd->add_option("--max-epochs", train_max_epochs, "stop after this many epochs; continue later with --resume")
      ->check(CLI::PositiveNumber);
  train_flags.attach(train_cmd, {"model", "train"},
                     {{"--lambda", "train.lambda"}, {"--lr", "train.lr"}, {"--seed", "train.seed"},
                      {"--epochs", "train.epochs"}, {"--pretrain-epochs", "train.pretrain_epochs"},
                      {"--batch-size", "train.batch_size"}, {"--base-channels", "model.base_channels"}});
  train_cmd->footer(config_footer());

  // restore
  auto* restore_cmd = app.add_subcommand("restore", "undo a distortion with trained networks");
  std::string restore_in, restore_out, restore_ckpt1, restore_ckpt2;
  restore_cmd->add_option("--in", restore_in, "distorted image; sides must be multiples of 16")->required();
  restore_cmd->add_option("--ckpt1", restore_ckpt1, "rectification checkpoint")->required();
  restore_cmd->add_option("--ckpt2", restore_ckpt2, "refinement checkpoint (omit for rectification only)");
  restore_cmd->add_option("--out", restore_out, "output image")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a restorer on a manifest split, per category");
  std::string eval_manifest, eval_ckpt1, eval_ckpt2, eval_dir, eval_split = "test", eval_name;
  bool eval_oracle = false, eval_identity = false;
  eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest.tsv")->required();
  auto* ck1 = eval_cmd->add_option("--ckpt1", eval_ckpt1, "rectification checkpoint");
  eval_cmd->add_option("--ckpt2", eval_ckpt2, "refinement checkpoint")->needs(ck1);
  auto* oracle = eval_cmd->add_flag("--oracle-k", eval_oracle, "analytic inverse with each pair's k");
  auto* identity = eval_cmd->add_flag("--identity", eval_identity, "score the distorted input itself");
  ck1->excludes(oracle)->excludes(identity);
  oracle->excludes(identity);
  eval_cmd->add_option("--split", eval_split, "test or train")->check(CLI::IsMember({"test", "train"}))->capture_default_str();
  eval_cmd->add_option("--name", eval_name, "row label (default from the restorer)");
  eval_cmd->add_option("--out-dir", eval_dir, "write report.txt and report.tsv here");

  // selfcheck
  auto* check_cmd = app.add_subcommand("selfcheck", "gradient, warp and metric checks");
  std::string check_fault;
  check_cmd->add_option("--inject-fault", check_fault, "corrupt one operator's gradient (tests the checker)");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score the seven ablation configurations");
  std::string ablate_manifest, ablate_toy, ablate_dir;
  bool ablate_fast = false;
  ConfigFlags ablate_flags;
  auto* man = ablate_cmd->add_option("--manifest", ablate_manifest, "dataset manifest.tsv");
  auto* toy = ablate_cmd->add_option("--toy", ablate_toy, "toy benchmark directory (created when missing)");
  man->excludes(toy);
  ablate_cmd->add_flag("--fast", ablate_fast, "shorter toy schedules")->needs(toy);
  ablate_cmd->add_option("--out-dir", ablate_dir, "reports and logs")->required();
  ablate_flags.attach(ablate_cmd, {"model", "train"}, {});
  ablate_cmd->footer(config_footer());

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  check_thread_env();

  if (*distort_cmd) {
    const Config cfg = distort_flags.build();
    const Image img = read_image(in);
    const std::vector<WarpSpec> specs =
        compose_file.empty() ? std::vector<WarpSpec>{cfg.warp()} : parse_warp_specs(read_file(compose_file));
    for (const auto& s : specs) validate(s, img);
    write_image(out_path, compose(img, specs));
    out << "wrote " << out_path << " (" << specs.size() << " effect" << (specs.size() == 1 ? "" : "s") << ")\n";
  } else if (*sources_cmd) {
    make_source_images(sources_out, sources_count, sources_size, sources_seed);
    out << "wrote " << sources_count << " images to " << sources_out << "\n";
  } else if (*fixture_cmd) {
    write_image(fixture_out, make_bullseye(fixture_size, fixture_period));
    out << "wrote " << fixture_out << "\n";
  } else if (*gen_cmd) {
    const Config cfg = gen_flags.build();
    const auto m = generate(gen_src, gen_out, cfg.generate_options(), [&](const std::string& w) { err << "warning: " << w << "\n"; });
    out << m.records.size() << " pairs (" << m.count(Split::train) << " train, " << m.count(Split::test) << " test) -> "
        << (fs::path(gen_out) / kManifestFileName).string() << "\n";
  } else if (*train_cmd) {
    const Config cfg = train_flags.build();
    auto data = std::make_shared<PairCache>(read_manifest(train_manifest));
    const ImageSize size = pair_size(*data);
    const PipelineConfig pc = cfg.pipeline(size.height, size.width);
    fs::create_directories(train_dir);
    const fs::path settings = fs::path(train_dir) / "config.ini";
    if (train_resume && fs::exists(settings) && read_file(settings) != cfg.to_ini()) {
      throw ContractError("--resume with settings that differ from " + settings.string());
    }
    write_file_atomic(settings, cfg.to_ini());
    std::unique_ptr<Network<float>> g1;
    int budget = train_max_epochs;
    try {
      if (train_stage_arg != "2") g1 = run_stage(1, pc, data, nullptr, train_dir, train_resume, budget, out);
      if (train_stage_arg != "1") {
        if (!g1) {
          const fs::path p = train_ckpt1.empty() ? StageFiles(train_dir, 1).generator : fs::path(train_ckpt1);
          g1 = load_generator(p, NetworkKind::rectification, size.height, size.width);
        }
        run_stage(2, pc, data, g1.get(), train_dir, train_resume, budget, out);
      }
    } catch (const Paused&) {
      out << "stopped after " << train_max_epochs << " epochs; continue with --resume\n";
      return kExitOk;
    }
    out << "checkpoints and logs in " << train_dir << "\n";
  } else if (*restore_cmd) {
    const Image img = to_rgb(read_image(restore_in));
    require_multiple_of_16(img);
    auto g1 = load_generator(restore_ckpt1, NetworkKind::rectification, img.height(), img.width());
    std::unique_ptr<Network<float>> g2;
    if (!restore_ckpt2.empty()) g2 = load_generator(restore_ckpt2, NetworkKind::refinement, img.height(), img.width());
    write_image(restore_out, restore_image(g1.get(), g2.get(), img));
    out << "wrote " << restore_out << "\n";
  } else if (*eval_cmd) {
    if (eval_ckpt1.empty() && !eval_oracle && !eval_identity) {
      throw ContractError("eval needs --ckpt1, --oracle-k or --identity");
    }
    PairCache data(read_manifest(eval_manifest));
    const Split split = eval_split == "test" ? Split::test : Split::train;
    std::unique_ptr<Network<float>> g1, g2;
    Restorer restorer;
    std::string name;
    if (eval_oracle) {
      restorer = oracle_restorer();
      name = "oracle";
    } else if (eval_identity) {
      restorer = identity_restorer();
      name = "identity";
    } else {
      const ImageSize size = pair_size(data);
      g1 = load_generator(eval_ckpt1, NetworkKind::rectification, size.height, size.width);
      if (!eval_ckpt2.empty()) g2 = load_generator(eval_ckpt2, NetworkKind::refinement, size.height, size.width);
      restorer = network_restorer(g1.get(), g2.get());
      name = g2 ? "full" : "only_rectification";
    }
    if (data.manifest().count(split) == 0) throw ContractError("the " + eval_split + " split is empty");
    EvalReport report;
    report.rows.push_back(evaluate(eval_name.empty() ? name : eval_name, restorer, data, split));
    write_report(report, eval_dir, out);
  } else if (*check_cmd) {
    std::vector<std::string> failed;
    for (const auto& r : run_selfcheck(check_fault)) {
      out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
      if (!r.passed) failed.push_back(r.name);
    }
    if (!failed.empty()) {
      std::string names;
      for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
      err << "selfcheck failed: " << names << "\n";
      return kExitSelfcheck;
    }
    out << "selfcheck passed\n";
  } else if (*ablate_cmd) {
    std::shared_ptr<PairCache> data;
    PipelineConfig pc;
    if (!ablate_toy.empty()) {
      if (ablate_flags.any()) throw ContractError("--toy runs a fixed preset; drop --config and config keys");
      const ToyBenchmark bench = toy_benchmark(ablate_fast);
      data = prepare_toy_benchmark(bench, ablate_toy);
      pc = bench.pipeline;
    } else if (!ablate_manifest.empty()) {
      data = std::make_shared<PairCache>(read_manifest(ablate_manifest));
      const ImageSize size = pair_size(*data);
      pc = ablate_flags.build().pipeline(size.height, size.width);
    } else {
      throw ContractError("ablate needs --manifest or --toy");
    }
    const AblationResult res = ablation_suite(data, pc, [&](const std::string& m) { out << m << std::endl; });
    const fs::path dir = ablate_dir;
    for (const auto& [name, log] : res.logs) log.save(dir / "logs" / (name + ".log"));
    EvalReport with_baseline = res.report;
    with_baseline.rows.push_back(res.baseline);
    write_report(with_baseline, ablate_dir, out);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    // ContractError and DimensionError: the request itself is wrong.
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace liquiform
