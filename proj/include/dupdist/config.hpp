#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "numeric_core.hpp"

namespace dupdist {

// corrected: duplicates pull topic vectors together, topic-disjoint
// non-duplicates push them apart. literal: the opposite signs.
enum class SimSign { corrected, literal };

// per_dim: one softmax over positions per attention dimension.
// scalar_dot: one score per position, <tanh(W1 g_i), tanh(W2 phi)>.
enum class CondAttentionMode { per_dim, scalar_dot };

inline std::string to_string(SimSign s) { return s == SimSign::corrected ? "corrected" : "literal"; }
inline std::string to_string(CondAttentionMode m) {
  return m == CondAttentionMode::per_dim ? "per_dim" : "scalar_dot";
}
inline SimSign parse_sim_sign(std::string_view s) {
  if (s == "corrected") return SimSign::corrected;
  if (s == "literal") return SimSign::literal;
  throw Error("unknown sim_sign '" + std::string(s) + "' (expected corrected|literal)");
}
inline CondAttentionMode parse_cond_attention(std::string_view s) {
  if (s == "per_dim") return CondAttentionMode::per_dim;
  if (s == "scalar_dot") return CondAttentionMode::scalar_dot;
  throw Error("unknown cond_attn '" + std::string(s) + "' (expected per_dim|scalar_dot)");
}

struct HyperConfig {
  std::size_t d = 300;            // word embedding width
  std::size_t g = 150;            // GRU state width per direction
  std::size_t k = 20;             // topic dims per direction
  std::size_t a = 300;            // conditional attention width
  std::size_t mlp_hidden = 100;
  double dropout = 0.2;
  double lr = 0.003;
  std::size_t batch = 128;
  double lambda = 0.5;
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double target_dup_fraction = 0.14;
  SimSign sim_sign = SimSign::corrected;
  CondAttentionMode cond_attn = CondAttentionMode::per_dim;
  bool memory_normalize = false;
  double grad_clip = 0.0;  // global L2 norm cap; 0 disables
  std::size_t min_freq = 1;
  bool freeze_embeddings = false;
  std::string embeddings_path;

  void validate() const {
    if (d == 0 || g == 0 || k == 0 || a == 0 || mlp_hidden == 0 || batch == 0) {
      throw Error("config: all dimensions must be positive");
    }
    if (k > g) throw Error("config: k must satisfy 0 < k <= g");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("config: lambda must lie in [0, 1]");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("config: dropout must lie in [0, 1)");
    if (!(lr > 0.0)) throw Error("config: lr must be positive");
    if (seeds.empty()) throw Error("config: at least one seed required");
    if (!(target_dup_fraction > 0.0 && target_dup_fraction < 1.0)) {
      throw Error("config: target_dup_fraction must lie in (0, 1)");
    }
    if (grad_clip < 0.0) throw Error("config: grad_clip must be >= 0");
    if (min_freq == 0) throw Error("config: min_freq must be >= 1");
  }

  // Fields that change the shape or meaning of a trained model.
  nlohmann::json model_identity() const {
    return {{"d", d},
            {"g", g},
            {"k", k},
            {"a", a},
            {"mlp_hidden", mlp_hidden},
            {"sim_sign", to_string(sim_sign)},
            {"cond_attn", to_string(cond_attn)},
            {"memory_normalize", memory_normalize}};
  }
};

inline void to_json(nlohmann::json& j, const HyperConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"g", c.g},
                     {"k", c.k},
                     {"a", c.a},
                     {"mlp_hidden", c.mlp_hidden},
                     {"dropout", c.dropout},
                     {"lr", c.lr},
                     {"batch", c.batch},
                     {"lambda", c.lambda},
                     {"epochs", c.epochs},
                     {"patience", c.patience},
                     {"seeds", c.seeds},
                     {"target_dup_fraction", c.target_dup_fraction},
                     {"sim_sign", to_string(c.sim_sign)},
                     {"cond_attn", to_string(c.cond_attn)},
                     {"memory_normalize", c.memory_normalize},
                     {"grad_clip", c.grad_clip},
                     {"min_freq", c.min_freq},
                     {"freeze_embeddings", c.freeze_embeddings},
                     {"embeddings_path", c.embeddings_path}};
}

// Flat document; absent keys keep defaults, unknown keys are rejected.
inline void from_json(const nlohmann::json& j, HyperConfig& c) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    try {
      if (key == "d") c.d = v.get<std::size_t>();
      else if (key == "g") c.g = v.get<std::size_t>();
      else if (key == "k") c.k = v.get<std::size_t>();
      else if (key == "a") c.a = v.get<std::size_t>();
      else if (key == "mlp_hidden") c.mlp_hidden = v.get<std::size_t>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch") c.batch = v.get<std::size_t>();
      else if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "patience") c.patience = v.get<std::size_t>();
      else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
      else if (key == "target_dup_fraction") c.target_dup_fraction = v.get<double>();
      else if (key == "sim_sign") c.sim_sign = parse_sim_sign(v.get<std::string>());
      else if (key == "cond_attn") c.cond_attn = parse_cond_attention(v.get<std::string>());
      else if (key == "memory_normalize") c.memory_normalize = v.get<bool>();
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "min_freq") c.min_freq = v.get<std::size_t>();
      else if (key == "freeze_embeddings") c.freeze_embeddings = v.get<bool>();
      else if (key == "embeddings_path") c.embeddings_path = v.get<std::string>();
      else throw Error("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error("config: bad value for '" + key + "': " + e.what());
    }
  }
}

inline HyperConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config '" + path + "': " + e.what());
  }
  HyperConfig c = j.get<HyperConfig>();
  c.validate();
  return c;
}

}  // namespace dupdist
