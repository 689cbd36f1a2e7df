#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "f2net/checkpoint.hpp"
#include "f2net/train.hpp"

namespace f2net {

inline std::string to_string(Precision p) { return p == Precision::kFloat ? "float" : "double"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "float") return Precision::kFloat;
  if (s == "double") return Precision::kDouble;
  throw std::invalid_argument("unknown precision '" + s + "'");
}

inline std::string to_string(StaticLoss s) { return s == StaticLoss::kFull ? "full" : "lf_only"; }

inline StaticLoss parse_static_loss(const std::string& s) {
  if (s == "full") return StaticLoss::kFull;
  if (s == "lf_only") return StaticLoss::kFocalOnly;
  throw std::invalid_argument("unknown static_loss '" + s + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped;
/// unknown keys are errors.
inline TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };
      if (key == "lr") cfg.lr = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = as_size();
      else if (key == "epochs") cfg.epochs = as_size();
      else if (key == "gt_center_epochs") cfg.gt_center_epochs = as_size();
      else if (key == "static_per_dynamic") cfg.static_per_dynamic = as_size();
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "precision") cfg.precision = parse_precision(value);
      else if (key == "static_loss") cfg.static_loss = parse_static_loss(value);
      else if (key == "focal_alpha") cfg.focal_alpha = std::stod(value);
      else if (key == "focal_beta") cfg.focal_beta = std::stod(value);
      else if (key == "val_every") cfg.val_every = as_size();
      else if (key == "grad_clip") cfg.grad_clip = std::stod(value);
      else detail::parse_model_config_line(cfg.model, key, value);
    } catch (const DataError& e) {
      throw DataError("config line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw DataError("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  return cfg;
}

/// Reads a config file and applies the F2NET_SEED override.
inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig cfg = parse_train_config(ss.str());
  if (const char* env = std::getenv("F2NET_SEED"); env && *env) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw DataError(std::string("F2NET_SEED is not an integer: ") + env);
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace f2net
