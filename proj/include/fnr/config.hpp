#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fnr/data.hpp"
#include "fnr/errors.hpp"
#include "fnr/model.hpp"
#include "fnr/optimizer.hpp"

namespace fnr {

/// Flat key=value run configuration. Defaults follow the published training
/// setup; unknown keys are errors.
struct RunConfig {
  std::string dataset;  // manifest path, or "xor:..." / "clusters:..."
  std::string mode = "fused_s";
  std::size_t k = 64;
  std::size_t h = 64;
  double dropout = 0.3;
  double lambda = 1.0;
  std::uint64_t seed = 42;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  double val_fraction = 0.1;
  double classifier_lr = 0.005;
  double classifier_wd = 0.07;
  double projector_lr = 1e-3;
  double projector_wd = 1e-3;
  std::string out = "run";

  ModelConfig model_config(std::size_t d_in) const {
    ModelConfig mc;
    mc.d_in = d_in;
    mc.k = k;
    mc.h = h;
    mc.dropout_rate = dropout;
    mc.lambda = lambda;
    mc.mode = mode_from_name(mode);
    mc.seed = seed;
    return mc;
  }

  std::vector<ParamGroupConfig> groups() const {
    auto cls = classifier_group_defaults();
    cls.lr = classifier_lr;
    cls.weight_decay = classifier_wd;
    auto proj = projector_group_defaults();
    proj.lr = projector_lr;
    proj.weight_decay = projector_wd;
    return {cls, proj};
  }
};

namespace detail {

template <typename F>
void apply_config_key(RunConfig& rc, const std::string& key,
                      const std::string& value, F parse_fail) {
  auto num = [&](auto& field) {
    std::istringstream ss(value);
    ss >> field;
    if (ss.fail() || !ss.eof()) parse_fail();
  };
  if (key == "dataset") rc.dataset = value;
  else if (key == "mode") rc.mode = value;
  else if (key == "k") num(rc.k);
  else if (key == "h") num(rc.h);
  else if (key == "dropout") num(rc.dropout);
  else if (key == "lambda") num(rc.lambda);
  else if (key == "seed") num(rc.seed);
  else if (key == "batch_size") num(rc.batch_size);
  else if (key == "max_epochs") num(rc.max_epochs);
  else if (key == "val_fraction") num(rc.val_fraction);
  else if (key == "classifier_lr") num(rc.classifier_lr);
  else if (key == "classifier_wd") num(rc.classifier_wd);
  else if (key == "projector_lr") num(rc.projector_lr);
  else if (key == "projector_wd") num(rc.projector_wd);
  else if (key == "out") rc.out = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace detail

inline RunConfig parse_config_text(std::istream& is, const std::string& name) {
  RunConfig rc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    detail::apply_config_key(rc, key, value, [&] {
      throw ConfigError(name + ":" + std::to_string(lineno) +
                        ": bad value '" + value + "' for key '" + key + "'");
    });
  }
  if (rc.dataset.empty())
    throw ConfigError(name + ": missing required key 'dataset'");
  return rc;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  return parse_config_text(is, path.string());
}

/// Echoes the resolved configuration in the same key=value format.
inline std::string config_to_text(const RunConfig& rc) {
  std::ostringstream os;
  os.precision(17);
  os << "dataset = " << rc.dataset << "\n"
     << "mode = " << rc.mode << "\n"
     << "k = " << rc.k << "\n"
     << "h = " << rc.h << "\n"
     << "dropout = " << rc.dropout << "\n"
     << "lambda = " << rc.lambda << "\n"
     << "seed = " << rc.seed << "\n"
     << "batch_size = " << rc.batch_size << "\n"
     << "max_epochs = " << rc.max_epochs << "\n"
     << "val_fraction = " << rc.val_fraction << "\n"
     << "classifier_lr = " << rc.classifier_lr << "\n"
     << "classifier_wd = " << rc.classifier_wd << "\n"
     << "projector_lr = " << rc.projector_lr << "\n"
     << "projector_wd = " << rc.projector_wd << "\n"
     << "out = " << rc.out << "\n";
  return os.str();
}

/// Resolves the dataset field: either a manifest path or a synthetic spec of
/// the form "xor:n=4000,d=16,seed=1" / "clusters:n=2000,d=16,seed=1,sep=6".
inline Dataset resolve_dataset(const std::string& spec) {
  auto parse_args = [&](const std::string& args) {
    std::map<std::string, double> kv;
    std::istringstream ss(args);
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos)
        throw ConfigError("bad synthetic dataset argument '" + item + "'");
      kv[detail::trim(item.substr(0, eq))] =
          std::stod(detail::trim(item.substr(eq + 1)));
    }
    return kv;
  };
  auto get = [](std::map<std::string, double>& kv, const std::string& key,
                double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    double v = it->second;
    kv.erase(it);
    return v;
  };
  auto check_empty = [&](const std::map<std::string, double>& kv) {
    if (!kv.empty())
      throw ConfigError("unknown synthetic dataset argument '" +
                        kv.begin()->first + "'");
  };
  if (spec.rfind("xor:", 0) == 0) {
    auto kv = parse_args(spec.substr(4));
    auto n = std::size_t(get(kv, "n", 4000));
    auto d = std::size_t(get(kv, "d", 16));
    auto seed = std::uint64_t(get(kv, "seed", 1));
    check_empty(kv);
    return gen_synthetic_xor(n, d, seed);
  }
  if (spec.rfind("clusters:", 0) == 0) {
    auto kv = parse_args(spec.substr(9));
    auto n = std::size_t(get(kv, "n", 2000));
    auto d = std::size_t(get(kv, "d", 16));
    auto seed = std::uint64_t(get(kv, "seed", 1));
    double sep = get(kv, "sep", 6.0);
    check_empty(kv);
    return gen_synthetic_clusters(n, d, seed, sep);
  }
  return load_dataset(spec);
}

}  // namespace fnr
