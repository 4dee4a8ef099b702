#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace butter {

// rejected configuration; the CLI maps this to its config exit code
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat run configuration. Files are key=value lines ('#' comments); command
// line flags override file values, which override these defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  int f = 3;         // damping stencil extent
  int fhat = 3;      // amplifier stencil extent
  int channels = 8;  // channel count for seeded parameters
  double lambda_iou = 7.5;
  double lambda_cls = 0.5;
  double lambda_dfl = 1.5;
  double alpha = 0.25;
  double gamma = 2.0;
  std::string precision = "double";

  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "seed")
        seed = std::stoull(value);
      else if (key == "f")
        f = std::stoi(value);
      else if (key == "fhat")
        fhat = std::stoi(value);
      else if (key == "channels")
        channels = std::stoi(value);
      else if (key == "lambda_iou")
        lambda_iou = std::stod(value);
      else if (key == "lambda_cls")
        lambda_cls = std::stod(value);
      else if (key == "lambda_dfl")
        lambda_dfl = std::stod(value);
      else if (key == "alpha")
        alpha = std::stod(value);
      else if (key == "gamma")
        gamma = std::stod(value);
      else if (key == "precision")
        precision = value;
      else
        throw ConfigError("config: unknown key: " + key);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config: bad value for " + key + ": " + value);
    }
  }

  void validate() const {
    if (f < 1 || f % 2 == 0) throw ConfigError("config: f must be an odd positive kernel extent");
    if (fhat < 1 || fhat % 2 == 0) throw ConfigError("config: fhat must be an odd positive kernel extent");
    if (channels < 1) throw ConfigError("config: channels must be positive");
    if (lambda_iou < 0 || lambda_cls < 0 || lambda_dfl < 0) throw ConfigError("config: loss weights must be nonnegative");
    if (alpha < 0 || alpha > 1) throw ConfigError("config: alpha must lie in [0,1]");
    if (gamma < 0) throw ConfigError("config: gamma must be nonnegative");
    if (precision != "single" && precision != "double") throw ConfigError("config: precision must be single or double");
  }
};

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string trimmed;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) trimmed += c;
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 > trimmed.size())
      throw ConfigError("config: expected key=value at " + path + ":" + std::to_string(lineno));
    cfg.set(trimmed.substr(0, eq), trimmed.substr(eq + 1));
  }
  return cfg;
}

}  // namespace butter
