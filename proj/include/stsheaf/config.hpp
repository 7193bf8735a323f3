// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stsheaf/data_io.hpp"
#include "stsheaf/model.hpp"
#include "stsheaf/training.hpp"

namespace stsheaf {

using nlohmann::json;

namespace cfgdetail {

inline void reject_unknown(const json& j, const std::vector<std::string>& allowed,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const std::string& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

inline void expect_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
}

template <typename T>
inline T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad type for key '" + key + "'");
  }
}

template <typename T>
inline T get_req(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("config: missing key '" + key + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad type for key '" + key + "' in " + where);
  }
}

}  // namespace cfgdetail

// Schema-validated run configuration. Unknown keys are rejected everywhere.
struct RunConfig {
  json raw;
  uint64_t seed = 42;
  std::string out_dir = "out";
  double eps = 0.0;

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open file: " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return from_json(j);
  }

  static RunConfig from_json(const json& j) {
    cfgdetail::expect_object(j, "top level");
    cfgdetail::reject_unknown(j,
                              {"seed", "out_dir", "eps", "graph", "series", "model", "train",
                               "spectrum", "diffuse", "oversmooth", "ablate", "eval"},
                              "top level");
    RunConfig c;
    c.raw = j;
    c.seed = cfgdetail::get_or<uint64_t>(j, "seed", 42);
    c.out_dir = cfgdetail::get_or<std::string>(j, "out_dir", "out");
    c.eps = cfgdetail::get_or<double>(j, "eps", 0.0);
    if (c.eps < 0.0) throw ConfigError("config: eps must be nonnegative");
    if (j.contains("graph")) validate_graph_section(j.at("graph"));
    if (j.contains("series")) validate_series_section(j.at("series"));
    if (j.contains("model")) validate_model_section(j.at("model"));
    if (j.contains("train")) validate_train_section(j.at("train"));
    if (j.contains("spectrum")) validate_spectrum_section(j.at("spectrum"));
    if (j.contains("diffuse")) validate_diffuse_section(j.at("diffuse"));
    if (j.contains("oversmooth")) validate_oversmooth_section(j.at("oversmooth"));
    if (j.contains("ablate")) validate_ablate_section(j.at("ablate"));
    if (j.contains("eval")) validate_eval_section(j.at("eval"));
    return c;
  }

  static void validate_graph_section(const json& j) {
    cfgdetail::expect_object(j, "graph");
    cfgdetail::reject_unknown(j, {"path", "num_nodes", "generator"}, "graph");
    if (j.contains("path") == j.contains("generator"))
      throw ConfigError("config: graph needs exactly one of 'path' or 'generator'");
    if (j.contains("path") && !j.contains("num_nodes"))
      throw ConfigError("config: graph.path requires graph.num_nodes");
    if (j.contains("generator")) {
      const json& g = j.at("generator");
      cfgdetail::expect_object(g, "graph.generator");
      cfgdetail::reject_unknown(g, {"type", "n", "k", "p", "seed", "degree_preserving"},
                               "graph.generator");
      if (cfgdetail::get_req<std::string>(g, "type", "graph.generator") != "watts_strogatz")
        throw ConfigError("config: unknown graph generator type");
    }
  }

  static void validate_series_section(const json& j) {
    cfgdetail::expect_object(j, "series");
    cfgdetail::reject_unknown(j, {"path", "generator"}, "series");
    if (j.contains("path") == j.contains("generator"))
      throw ConfigError("config: series needs exactly one of 'path' or 'generator'");
    if (j.contains("generator")) {
      const json& g = j.at("generator");
      cfgdetail::expect_object(g, "series.generator");
      cfgdetail::reject_unknown(
          g, {"type", "t_total", "noise_std", "seed", "event_rate", "affected_fraction", "lag"},
          "series.generator");
      std::string type = cfgdetail::get_req<std::string>(g, "type", "series.generator");
      if (type != "heat" && type != "cascade")
        throw ConfigError("config: unknown series generator type: " + type);
    }
  }

  static void validate_model_section(const json& j) {
    cfgdetail::expect_object(j, "model");
    cfgdetail::reject_unknown(j,
                              {"f_in", "f_out", "embed_dim", "stalk_dim", "num_heads",
                               "num_layers", "horizon", "window", "residual_scale", "variant"},
                              "model");
  }

  static void validate_train_section(const json& j) {
    cfgdetail::expect_object(j, "train");
    cfgdetail::reject_unknown(j,
                              {"learning_rate", "batch_size", "patience", "max_epochs", "seed",
                               "split", "adam_beta1", "adam_beta2", "adam_eps"},
                              "train");
    if (j.contains("split")) {
      const json& s = j.at("split");
      if (!s.is_array() || s.size() != 3)
        throw ConfigError("config: train.split must be an array of three fractions");
    }
  }

  static void validate_sheaf_source(const json& j, const std::string& where) {
    cfgdetail::expect_object(j, where);
    cfgdetail::reject_unknown(j, {"path", "random"}, where);
    if (j.contains("path") == j.contains("random"))
      throw ConfigError("config: " + where + " needs exactly one of 'path' or 'random'");
    if (j.contains("random")) {
      const json& r = j.at("random");
      cfgdetail::expect_object(r, where + ".random");
      cfgdetail::reject_unknown(r, {"stalk_dim", "lo", "hi", "signed"}, where + ".random");
      if (!r.contains("stalk_dim"))
        throw ConfigError("config: " + where + ".random requires stalk_dim");
    }
  }

  static void validate_spectrum_section(const json& j) {
    cfgdetail::expect_object(j, "spectrum");
    cfgdetail::reject_unknown(j, {"method", "rank_tol", "dense_cap", "sheaf", "weights"},
                              "spectrum");
    if (j.contains("method")) {
      std::string m = j.at("method").get<std::string>();
      if (m != "dense" && m != "power")
        throw ConfigError("config: spectrum.method must be 'dense' or 'power'");
    }
    if (j.contains("weights")) {
      std::string w = j.at("weights").get<std::string>();
      if (w != "norm" && w != "ones")
        throw ConfigError("config: spectrum.weights must be 'norm' or 'ones'");
    }
    if (j.contains("sheaf")) validate_sheaf_source(j.at("sheaf"), "spectrum.sheaf");
  }

  static void validate_diffuse_section(const json& j) {
    cfgdetail::expect_object(j, "diffuse");
    cfgdetail::reject_unknown(j, {"step", "steps", "dump_states", "sheaf", "weights"}, "diffuse");
    if (j.contains("step") && !j.at("step").is_number() &&
        !(j.at("step").is_string() && j.at("step").get<std::string>() == "auto"))
      throw ConfigError("config: diffuse.step must be a number or \"auto\"");
    if (j.contains("sheaf")) validate_sheaf_source(j.at("sheaf"), "diffuse.sheaf");
  }

  static void validate_oversmooth_section(const json& j) {
    cfgdetail::expect_object(j, "oversmooth");
    cfgdetail::reject_unknown(j, {"num_layers", "num_seeds", "stalk_dim"}, "oversmooth");
  }

  static void validate_ablate_section(const json& j) {
    cfgdetail::expect_object(j, "ablate");
    cfgdetail::reject_unknown(j, {"seeds", "sweep_dims", "sweep_mae_dims", "max_epochs"},
                              "ablate");
  }

  static void validate_eval_section(const json& j) {
    cfgdetail::expect_object(j, "eval");
    cfgdetail::reject_unknown(j, {"checkpoint"}, "eval");
    if (!j.contains("checkpoint")) throw ConfigError("config: eval.checkpoint is required");
  }

  // ---- section builders ----

  bool has(const std::string& key) const { return raw.contains(key); }

  const json& section(const std::string& key) const {
    if (!raw.contains(key)) throw ConfigError("config: missing required section '" + key + "'");
    return raw.at(key);
  }

  Graph build_graph() const {
    const json& j = section("graph");
    if (j.contains("path"))
      return load_edge_list(j.at("path").get<std::string>(), j.at("num_nodes").get<int>(), eps);
    const json& g = j.at("generator");
    return watts_strogatz(cfgdetail::get_or<int>(g, "n", 30), cfgdetail::get_or<int>(g, "k", 4),
                          cfgdetail::get_or<double>(g, "p", 0.2),
                          cfgdetail::get_or<uint64_t>(g, "seed", seed), eps,
                          cfgdetail::get_or<bool>(g, "degree_preserving", false));
  }

  SeriesFile build_series(const Graph& g) const {
    const json& j = section("series");
    if (j.contains("path")) return load_series_csv(j.at("path").get<std::string>());
    const json& gen = j.at("generator");
    std::string type = gen.at("type").get<std::string>();
    uint64_t gseed = cfgdetail::get_or<uint64_t>(gen, "seed", seed);
    if (type == "heat")
      return gen_heat_series(g, cfgdetail::get_or<int>(gen, "t_total", 500),
                             cfgdetail::get_or<double>(gen, "noise_std", 0.01), gseed);
    return gen_cascade_series(g, cfgdetail::get_or<int>(gen, "t_total", 2000),
                              cfgdetail::get_or<double>(gen, "event_rate", 0.05),
                              cfgdetail::get_or<double>(gen, "affected_fraction", 0.5),
                              cfgdetail::get_or<int>(gen, "lag", 2), gseed,
                              cfgdetail::get_or<double>(gen, "noise_std", kCascadeNoiseStd));
  }

  ModelConfig build_model_config() const {
    ModelConfig c;
    if (!has("model")) {
      validate_model_config(c);
      return c;
    }
    const json& j = section("model");
    c.f_in = cfgdetail::get_or<int>(j, "f_in", c.f_in);
    c.f_out = cfgdetail::get_or<int>(j, "f_out", c.f_out);
    c.embed_dim = cfgdetail::get_or<int>(j, "embed_dim", c.embed_dim);
    c.stalk_dim = cfgdetail::get_or<int>(j, "stalk_dim", c.stalk_dim);
    c.num_heads = cfgdetail::get_or<int>(j, "num_heads", c.num_heads);
    c.num_layers = cfgdetail::get_or<int>(j, "num_layers", c.num_layers);
    c.horizon = cfgdetail::get_or<int>(j, "horizon", c.horizon);
    c.window = cfgdetail::get_or<int>(j, "window", c.window);
    c.residual_scale = cfgdetail::get_or<double>(j, "residual_scale", c.residual_scale);
    if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
    validate_model_config(c);
    return c;
  }

  TrainConfig build_train_config() const {
    TrainConfig c;
    c.seed = seed;
    if (!has("train")) return c;
    const json& j = section("train");
    c.learning_rate = cfgdetail::get_or<double>(j, "learning_rate", c.learning_rate);
    c.batch_size = cfgdetail::get_or<int>(j, "batch_size", c.batch_size);
    c.patience = cfgdetail::get_or<int>(j, "patience", c.patience);
    c.max_epochs = cfgdetail::get_or<int>(j, "max_epochs", c.max_epochs);
    c.seed = cfgdetail::get_or<uint64_t>(j, "seed", c.seed);
    c.adam_beta1 = cfgdetail::get_or<double>(j, "adam_beta1", c.adam_beta1);
    c.adam_beta2 = cfgdetail::get_or<double>(j, "adam_beta2", c.adam_beta2);
    c.adam_eps = cfgdetail::get_or<double>(j, "adam_eps", c.adam_eps);
    validate_train_config(c);
    return c;
  }

  std::array<double, 3> build_split() const {
    std::array<double, 3> split{0.6, 0.2, 0.2};
    if (has("train") && section("train").contains("split")) {
      const json& s = section("train").at("split");
      for (int i = 0; i < 3; ++i) split[i] = s.at(i).get<double>();
    }
    return split;
  }

  Sheaf build_sheaf(const Graph& g, const json& j) const {
    if (j.contains("path")) {
      std::ifstream in(j.at("path").get<std::string>());
      if (!in) throw ConfigError("config: cannot open sheaf file");
      json sj;
      try {
        in >> sj;
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid sheaf JSON: ") + e.what());
      }
      return sheaf_from_json(g, sj);
    }
    const json& r = j.at("random");
    Rng rng(seed ^ 0x5eafull);
    return make_random_sheaf(g, r.at("stalk_dim").get<int>(), rng,
                             cfgdetail::get_or<double>(r, "lo", 0.5),
                             cfgdetail::get_or<double>(r, "hi", 1.5),
                             cfgdetail::get_or<bool>(r, "signed", true));
  }
};

}  // namespace stsheaf
