#include "liquiform/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "liquiform/error.hpp"
#include "liquiform/io.hpp"

namespace liquiform {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"warp", "k", "1", "radial scaling factor; < 1 bulges, > 1 pinches"},
      {"warp", "center", "auto", "effect centre x,y in pixels; auto = image centre"},
      {"warp", "region", "full", "effect radius in pixels; full = min(W, H) / 2"},
      {"data", "ks", "0.5,0.8,1.5,2.7", "scaling factors drawn per source image"},
      {"data", "size", "224", "side of the square training pairs"},
      {"data", "test_frac", "0.02", "share of source images held out for testing"},
      {"data", "seed", "0", "k draws and split hashing"},
      {"data", "all_k", "false", "one pair per k for every source"},
      {"model", "base_channels", "64", "width multiplier; 64 gives the full-size networks"},
      {"model", "disc_base_channels", "0", "discriminator width; 0 = base_channels"},
      {"model", "seed", "0", "weight initialization"},
      {"train", "lambda", "0.001", "adversarial weight"},
      {"train", "lr", "0.01", "learning rate"},
      {"train", "content_weight", "1", "MSE weight; 0 trains on the adversarial term alone"},
      {"train", "pretrain_epochs", "10", "MSE-only warm-up epochs"},
      {"train", "epochs", "30", "adversarial epochs after the warm-up"},
      {"train", "stage2_pretrain_epochs", "same", "stage-2 warm-up; same = pretrain_epochs"},
      {"train", "stage2_epochs", "same", "stage-2 adversarial epochs; same = epochs"},
      {"train", "batch_size", "8", "pairs per step"},
      {"train", "d_steps", "1", "discriminator steps per generator step"},
      {"train", "seed", "0", "batch order"},
      {"train", "optimizer", "sgd", "sgd or adam"},
      {"train", "momentum", "0.9", "sgd momentum"},
      {"train", "adam_beta1", "0.9", "adam first-moment decay"},
      {"train", "adam_beta2", "0.999", "adam second-moment decay"},
  };
  return keys;
}

std::string config_reference() {
  std::size_t name_w = 0, default_w = 0;
  for (const auto& k : config_keys()) {
    name_w = std::max(name_w, k.full_name().size());
    default_w = std::max(default_w, k.default_value.size());
  }
  std::string out;
  for (const auto& k : config_keys()) {
    std::string line = k.full_name();
    line.resize(name_w + 2, ' ');
    line += k.default_value;
    line.resize(name_w + 2 + default_w + 2, ' ');
    out += line + k.help + "\n";
  }
  return out;
}

Config::Config() {
  for (const auto& k : config_keys()) values_[k.full_name()] = k.default_value;
}

void Config::load_text(const std::string& text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ContractError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ContractError(origin + ": key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      try {
        set(section + "." + key, value.get_value<std::string>());
      } catch (const ContractError& e) {
        throw ContractError(origin + ": " + e.what());
      }
    }
  }
}

void Config::load_file(const std::filesystem::path& path) { load_text(read_file(path), path.string()); }

void Config::set(const std::string& full_name, const std::string& value) {
  auto it = values_.find(full_name);
  if (it == values_.end()) throw ContractError("unknown config key '" + full_name + "'");
  it->second = value;
}

const std::string& Config::get(const std::string& full_name) const {
  auto it = values_.find(full_name);
  if (it == values_.end()) throw ContractError("unknown config key '" + full_name + "'");
  return it->second;
}

namespace {

template <typename T>
T parse_whole(const std::string& key, const std::string& text, const char* what) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ContractError(key + ": expected " + what + ", got '" + text + "'");
  return v;
}

}  // namespace

double Config::number(const std::string& full_name) const {
  const double v = parse_whole<double>(full_name, get(full_name), "a number");
  if (!std::isfinite(v)) throw ContractError(full_name + ": must be finite");
  return v;
}

int Config::integer(const std::string& full_name) const {
  return parse_whole<int>(full_name, get(full_name), "an integer");
}

std::uint64_t Config::seed(const std::string& full_name) const {
  return parse_whole<std::uint64_t>(full_name, get(full_name), "a non-negative integer");
}

bool Config::flag(const std::string& full_name) const {
  const std::string& v = get(full_name);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ContractError(full_name + ": expected true or false, got '" + v + "'");
}

std::vector<double> Config::numbers(const std::string& full_name) const {
  std::vector<double> out;
  std::istringstream in(get(full_name));
  for (std::string item; std::getline(in, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(parse_whole<double>(full_name, item, "a comma-separated list of numbers"));
  }
  if (out.empty()) throw ContractError(full_name + ": list is empty");
  return out;
}

std::string Config::to_ini() const {
  std::string out, section;
  for (const auto& k : config_keys()) {
    if (k.section != section) {
      if (!section.empty()) out += "\n";
      section = k.section;
      out += "[" + section + "]\n";
    }
    out += k.name + " = " + get(k.full_name()) + "\n";
  }
  return out;
}

WarpSpec Config::warp() const {
  return parse_warp_spec_line("k=" + get("warp.k") + " center=" + get("warp.center") + " region=" + get("warp.region"));
}

GenerateOptions Config::generate_options() const {
  GenerateOptions o;
  o.ks = numbers("data.ks");
  o.height = o.width = integer("data.size");
  o.test_fraction = number("data.test_frac");
  o.seed = seed("data.seed");
  o.all_k = flag("data.all_k");
  return o;
}

TrainConfig Config::train(int stage) const {
  TrainConfig t;
  t.lambda_adv = number("train.lambda");
  t.learning_rate = number("train.lr");
  t.content_weight = number("train.content_weight");
  t.pretrain_epochs = integer("train.pretrain_epochs");
  t.epochs = integer("train.epochs");
  if (stage == 2) {
    if (get("train.stage2_pretrain_epochs") != "same") t.pretrain_epochs = integer("train.stage2_pretrain_epochs");
    if (get("train.stage2_epochs") != "same") t.epochs = integer("train.stage2_epochs");
  }
  t.batch_size = integer("train.batch_size");
  t.d_steps_per_g_step = integer("train.d_steps");
  t.seed = seed("train.seed");
  t.optimizer = parse_optimizer(get("train.optimizer"));
  t.momentum = number("train.momentum");
  t.adam_beta1 = number("train.adam_beta1");
  t.adam_beta2 = number("train.adam_beta2");
  t.validate();
  return t;
}

PipelineConfig Config::pipeline(int height, int width) const {
  PipelineConfig p;
  p.network.base_channels = integer("model.base_channels");
  p.network.height = height;
  p.network.width = width;
  p.network.seed = seed("model.seed");
  p.disc_base_channels = integer("model.disc_base_channels");
  if (p.disc_base_channels < 0) throw ContractError("model.disc_base_channels: must be >= 0");
  p.stage1 = train(1);
  p.stage2 = train(2);
  return p;
}

}  // namespace liquiform
