#pragma once

// Versioned JSON checkpoints. Doubles are written in shortest round-trip
// form, so save/load reproduces every weight bit for bit.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rlstop/error.hpp"
#include "rlstop/nn.hpp"
#include "rlstop/ppo.hpp"

namespace rlstop::checkpoint {

using nlohmann::json;

inline json mlp_to_json(const nn::MlpParams& p) {
  json layers = json::array();
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const auto& w = p.weights[l];
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) row_major.push_back(w(i, j));
    }
    std::vector<double> bias(p.biases[l].data(), p.biases[l].data() + p.biases[l].size());
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"weight", row_major}, {"bias", bias}});
  }
  return layers;
}

inline nn::MlpParams mlp_from_json(const json& layers) {
  nn::MlpParams p;
  for (const auto& layer : layers) {
    const auto rows = layer.at("rows").get<Eigen::Index>();
    const auto cols = layer.at("cols").get<Eigen::Index>();
    const auto w = layer.at("weight").get<std::vector<double>>();
    const auto b = layer.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
      throw ParseError("checkpoint layer has inconsistent dimensions");
    }
    if (!p.weights.empty() && p.weights.back().rows() != cols) throw ParseError("checkpoint layers do not chain");
    nn::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = w[static_cast<std::size_t>(i * cols + j)];
    }
    p.weights.push_back(std::move(m));
    p.biases.push_back(Eigen::Map<const nn::Vector>(b.data(), rows));
  }
  if (p.weights.empty()) throw ParseError("checkpoint network has no layers");
  if (!p.finite()) throw ParseError("checkpoint contains non-finite parameters");
  return p;
}

inline json hyper_to_json(const ppo::Hyperparams& h) {
  return {{"total_timesteps", h.total_timesteps},
          {"n_steps", h.n_steps},
          {"minibatch_size", h.minibatch_size},
          {"learning_rate", h.learning_rate},
          {"n_epochs", h.n_epochs},
          {"entropy_coef", h.entropy_coef},
          {"gamma", h.gamma},
          {"clip_range", h.clip_range},
          {"gae_lambda", h.gae_lambda},
          {"value_coef", h.value_coef},
          {"n_envs", h.n_envs},
          {"max_grad_norm", h.max_grad_norm},
          {"normalize_advantage", h.normalize_advantage},
          {"seed", h.seed}};
}

inline ppo::Hyperparams hyper_from_json(const json& j) {
  ppo::Hyperparams h;
  h.total_timesteps = j.at("total_timesteps").get<std::size_t>();
  h.n_steps = j.at("n_steps").get<std::size_t>();
  h.minibatch_size = j.at("minibatch_size").get<std::size_t>();
  h.learning_rate = j.at("learning_rate").get<double>();
  h.n_epochs = j.at("n_epochs").get<std::size_t>();
  h.entropy_coef = j.at("entropy_coef").get<double>();
  h.gamma = j.at("gamma").get<double>();
  h.clip_range = j.at("clip_range").get<double>();
  h.gae_lambda = j.at("gae_lambda").get<double>();
  h.value_coef = j.at("value_coef").get<double>();
  h.n_envs = j.at("n_envs").get<std::size_t>();
  h.max_grad_norm = j.at("max_grad_norm").get<double>();
  h.normalize_advantage = j.at("normalize_advantage").get<bool>();
  h.seed = j.at("seed").get<std::uint64_t>();
  return h;
}

inline json to_json(const ppo::Checkpoint& ck) {
  auto dims = [](const nn::MlpParams& p) {
    auto a = p.architecture();
    return json{{"input", a.input}, {"hidden", a.hidden}, {"output", a.output}};
  };
  return {{"format", "rlstop-checkpoint"},
          {"version", ck.version},
          {"architecture", {{"actor", dims(ck.actor)}, {"critic", dims(ck.critic)}}},
          {"activation", ck.activation},
          {"initializer", ck.initializer},
          {"target_recall", ck.target_recall},
          {"batches", ck.batches},
          {"obs_mode", env::to_string(ck.obs_mode)},
          {"timesteps", ck.timesteps},
          {"hyperparams", hyper_to_json(ck.hyperparams)},
          {"actor", mlp_to_json(ck.actor)},
          {"critic", mlp_to_json(ck.critic)}};
}

inline ppo::Checkpoint from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "rlstop-checkpoint") throw ParseError("not an rlstop checkpoint");
    ppo::Checkpoint ck;
    ck.version = j.at("version").get<int>();
    if (ck.version != ppo::kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + std::to_string(ck.version));
    }
    ck.activation = j.at("activation").get<std::string>();
    if (ck.activation != "tanh") throw ParseError("unsupported activation '" + ck.activation + "'");
    ck.initializer = j.at("initializer").get<std::string>();
    ck.target_recall = j.at("target_recall").get<double>();
    ck.batches = j.at("batches").get<std::size_t>();
    ck.obs_mode = env::obs_mode_from_string(j.at("obs_mode").get<std::string>());
    ck.timesteps = j.at("timesteps").get<std::size_t>();
    ck.hyperparams = hyper_from_json(j.at("hyperparams"));
    ck.actor = mlp_from_json(j.at("actor"));
    ck.critic = mlp_from_json(j.at("critic"));
    if (ck.actor.input_width() != ck.batches || ck.critic.input_width() != ck.batches) {
      throw ParseError("checkpoint network width does not match its batch count");
    }
    if (ck.actor.output_width() != 2 || ck.critic.output_width() != 1) {
      throw ParseError("checkpoint heads must have 2 (actor) and 1 (critic) outputs");
    }
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline std::string dump(const ppo::Checkpoint& ck) { return to_json(ck).dump(1) + "\n"; }

inline ppo::Checkpoint parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

inline void save(const ppo::Checkpoint& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  f << dump(ck);
  if (!f) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline ppo::Checkpoint load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace rlstop::checkpoint
