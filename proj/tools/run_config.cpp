#include "run_config.hpp"

#include <fstream>
#include <sstream>

namespace hcal::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void set_value(RunConfig& config, const std::string& key, const std::string& value) {
  if (key == "taxonomy") {
    config.taxonomy = value;
  } else if (key == "train") {
    config.train_data = value;
  } else if (key == "test") {
    config.test_data = value;
  } else if (key == "out") {
    config.out = value;
  } else if (!set_train_config_value(config.train, key, value)) {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    set_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out{
      {"taxonomy", config.taxonomy}, {"train", config.train_data}, {"test", config.test_data}, {"out", config.out}};
  for (auto& e : train_config_entries(config.train)) out.push_back(std::move(e));
  return out;
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [key, value] : entries(config)) out += key + " = " + value + "\n";
  return out;
}

}  // namespace hcal::cli
