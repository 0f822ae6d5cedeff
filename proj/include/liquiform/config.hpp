#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "liquiform/dataset.hpp"
#include "liquiform/training.hpp"
#include "liquiform/warp.hpp"

namespace liquiform {

struct ConfigKey {
  std::string section;
  std::string name;
  std::string default_value;
  std::string help;
  std::string full_name() const { return section + "." + name; }
};

// Every recognised key, grouped by section in [warp], [data], [model], [train]
// order.
const std::vector<ConfigKey>& config_keys();

// Aligned "section.key  default  description" table of config_keys().
std::string config_reference();

// Flat key=value settings with sections. Values start at their defaults;
// a file overrides defaults and set() overrides both. Unknown sections or
// keys, and values that do not parse, throw ContractError naming the key.
class Config {
 public:
  Config();

  // INI text: "[section]" headers, "key = value" lines, ';' or '#' comments.
  void load_text(const std::string& text, const std::string& origin = "config");
  void load_file(const std::filesystem::path& path);
  void set(const std::string& full_name, const std::string& value);
  const std::string& get(const std::string& full_name) const;

  double number(const std::string& full_name) const;
  int integer(const std::string& full_name) const;
  std::uint64_t seed(const std::string& full_name) const;
  bool flag(const std::string& full_name) const;
  std::vector<double> numbers(const std::string& full_name) const;

  // The effective settings as INI text, every key included.
  std::string to_ini() const;

  WarpSpec warp() const;
  GenerateOptions generate_options() const;
  TrainConfig train(int stage) const;
  // Networks sized height x width; both stages' schedules filled in.
  PipelineConfig pipeline(int height, int width) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace liquiform
