#include "trinet/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

namespace trinet {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string join_path(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

const json& require_object(const json& node, const std::string& path) {
  if (!node.is_object()) {
    throw ConfigError("config: " + path + " must be an object");
  }
  return node;
}

void reject_unknown_keys(const json& node, const std::string& section,
                         const std::set<std::string>& allowed) {
  for (const auto& item : node.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("config: unknown field '" + join_path(section, item.key()) +
                        "'");
    }
  }
}

std::uint64_t get_uint(const json& node, const std::string& section,
                       const std::string& key, std::uint64_t fallback) {
  if (!node.contains(key)) return fallback;
  const json& value = node.at(key);
  if (!value.is_number_unsigned()) {
    throw ConfigError("config: " + join_path(section, key) +
                      " must be a nonnegative integer");
  }
  return value.get<std::uint64_t>();
}

double get_double(const json& node, const std::string& section, const std::string& key,
                  double fallback) {
  if (!node.contains(key)) return fallback;
  const json& value = node.at(key);
  if (!value.is_number()) {
    throw ConfigError("config: " + join_path(section, key) + " must be a number");
  }
  return value.get<double>();
}

bool get_bool(const json& node, const std::string& section, const std::string& key,
              bool fallback) {
  if (!node.contains(key)) return fallback;
  const json& value = node.at(key);
  if (!value.is_boolean()) {
    throw ConfigError("config: " + join_path(section, key) + " must be a boolean");
  }
  return value.get<bool>();
}

std::string get_string(const json& node, const std::string& section,
                       const std::string& key, const std::string& fallback) {
  if (!node.contains(key)) return fallback;
  const json& value = node.at(key);
  if (!value.is_string()) {
    throw ConfigError("config: " + join_path(section, key) + " must be a string");
  }
  return value.get<std::string>();
}

std::vector<double> get_double_array(const json& node, const std::string& section,
                                     const std::string& key) {
  if (!node.contains(key)) return {};
  const json& value = node.at(key);
  if (!value.is_array()) {
    throw ConfigError("config: " + join_path(section, key) +
                      " must be a flat array of numbers");
  }
  std::vector<double> result;
  result.reserve(value.size());
  for (const json& entry : value) {
    if (!entry.is_number()) {
      throw ConfigError("config: " + join_path(section, key) +
                        " must be a flat array of numbers");
    }
    result.push_back(entry.get<double>());
  }
  return result;
}

void parse_encoder(const json& node, ExperimentConfig& config) {
  require_object(node, "encoder");
  reject_unknown_keys(node, "encoder",
                      {"hidden_dim", "num_blocks", "num_heads", "ffn_multiplier",
                       "downsample_stride", "dropout_rate"});
  EncoderConfig& enc = config.encoder;
  enc.hidden_dim = get_uint(node, "encoder", "hidden_dim", enc.hidden_dim);
  enc.num_blocks = get_uint(node, "encoder", "num_blocks", enc.num_blocks);
  enc.num_heads = get_uint(node, "encoder", "num_heads", enc.num_heads);
  enc.ffn_multiplier = get_uint(node, "encoder", "ffn_multiplier", enc.ffn_multiplier);
  enc.downsample_stride =
      get_uint(node, "encoder", "downsample_stride", enc.downsample_stride);
  enc.dropout_rate = get_double(node, "encoder", "dropout_rate", enc.dropout_rate);
}

void parse_data(const json& node, ExperimentConfig& config) {
  require_object(node, "data");
  reject_unknown_keys(node, "data",
                      {"num_classes", "feature_dim", "seq_len", "num_sequences",
                       "emission_noise_std", "transition_stickiness", "seed",
                       "transition_matrix", "class_means", "pretrain_fraction",
                       "finetune_fraction", "eval_fraction"});
  SynthConfig& data = config.data;
  data.num_classes = get_uint(node, "data", "num_classes", data.num_classes);
  data.feature_dim = get_uint(node, "data", "feature_dim", data.feature_dim);
  data.seq_len = get_uint(node, "data", "seq_len", data.seq_len);
  data.num_sequences = get_uint(node, "data", "num_sequences", data.num_sequences);
  data.emission_noise_std =
      get_double(node, "data", "emission_noise_std", data.emission_noise_std);
  data.transition_stickiness =
      get_double(node, "data", "transition_stickiness", data.transition_stickiness);
  data.seed = get_uint(node, "data", "seed", data.seed);
  data.transition_matrix = get_double_array(node, "data", "transition_matrix");
  data.class_means = get_double_array(node, "data", "class_means");
  config.pretrain_fraction =
      get_double(node, "data", "pretrain_fraction", config.pretrain_fraction);
  config.finetune_fraction =
      get_double(node, "data", "finetune_fraction", config.finetune_fraction);
  config.eval_fraction = get_double(node, "data", "eval_fraction", config.eval_fraction);
}

void parse_loss(const json& node, ExperimentConfig& config) {
  require_object(node, "loss");
  reject_unknown_keys(node, "loss", {"positions", "regul_temperature"});
  const std::string positions =
      get_string(node, "loss", "positions", to_string(config.loss.positions));
  try {
    config.loss.positions = loss_positions_from_string(positions);
  } catch (const std::invalid_argument& error) {
    throw ConfigError(std::string("config: loss.positions: ") + error.what());
  }
  config.loss.regul_temperature =
      get_double(node, "loss", "regul_temperature", config.loss.regul_temperature);
}

void parse_model(const json& node, ExperimentConfig& config) {
  require_object(node, "model");
  reject_unknown_keys(node, "model",
                      {"ablate_high_block", "disable_stop_gradient", "mask_fill"});
  config.model.ablate_high_block =
      get_bool(node, "model", "ablate_high_block", config.model.ablate_high_block);
  config.model.disable_stop_gradient = get_bool(node, "model", "disable_stop_gradient",
                                                config.model.disable_stop_gradient);
  const std::string fill =
      get_string(node, "model", "mask_fill",
                 config.model.mask_fill == MaskFill::zeros ? "zeros"
                                                           : "learned_embedding");
  if (fill == "learned_embedding") {
    config.model.mask_fill = MaskFill::learned_embedding;
  } else if (fill == "zeros") {
    config.model.mask_fill = MaskFill::zeros;
  } else {
    throw ConfigError("config: model.mask_fill: unknown value '" + fill + "'");
  }
}

void parse_training(const json& node, ExperimentConfig& config) {
  require_object(node, "training");
  reject_unknown_keys(
      node, "training",
      {"frozen_teacher_steps", "pretrain_steps", "probe_steps", "batch_size",
       "learning_rate", "warmup_steps", "frozen_learning_rate", "probe_learning_rate",
       "mask_start_prob", "mask_span", "tau_start", "tau_end", "tau_anneal_steps",
       "top_k", "pseudo_classes", "diag_interval", "checkpoint_interval", "probe_tap"});
  TrainingConfig& train = config.training;
  train.frozen_teacher_steps =
      get_uint(node, "training", "frozen_teacher_steps", train.frozen_teacher_steps);
  train.pretrain_steps = get_uint(node, "training", "pretrain_steps", train.pretrain_steps);
  train.probe_steps = get_uint(node, "training", "probe_steps", train.probe_steps);
  train.batch_size = get_uint(node, "training", "batch_size", train.batch_size);
  train.learning_rate = get_double(node, "training", "learning_rate", train.learning_rate);
  train.warmup_steps = get_uint(node, "training", "warmup_steps", train.warmup_steps);
  train.frozen_learning_rate =
      get_double(node, "training", "frozen_learning_rate", train.frozen_learning_rate);
  train.probe_learning_rate =
      get_double(node, "training", "probe_learning_rate", train.probe_learning_rate);
  train.mask_start_prob =
      get_double(node, "training", "mask_start_prob", train.mask_start_prob);
  train.mask_span = get_uint(node, "training", "mask_span", train.mask_span);
  train.tau_start = get_double(node, "training", "tau_start", train.tau_start);
  train.tau_end = get_double(node, "training", "tau_end", train.tau_end);
  train.tau_anneal_steps =
      get_uint(node, "training", "tau_anneal_steps", train.tau_anneal_steps);
  train.top_k = get_uint(node, "training", "top_k", train.top_k);
  train.pseudo_classes = get_uint(node, "training", "pseudo_classes", train.pseudo_classes);
  train.diag_interval = get_uint(node, "training", "diag_interval", train.diag_interval);
  train.checkpoint_interval =
      get_uint(node, "training", "checkpoint_interval", train.checkpoint_interval);
  train.probe_tap = get_uint(node, "training", "probe_tap", train.probe_tap);
}

}  // namespace

std::size_t ExperimentConfig::resolved_tau_anneal_steps() const {
  return training.tau_anneal_steps != 0 ? training.tau_anneal_steps
                                        : training.pretrain_steps / 2;
}

std::size_t ExperimentConfig::resolved_top_k() const {
  if (training.top_k != 0) return training.top_k;
  return (encoder.num_blocks - 1 + 1) / 2;
}

std::size_t ExperimentConfig::resolved_pseudo_classes() const {
  return training.pseudo_classes != 0 ? training.pseudo_classes : data.num_classes;
}

std::size_t ExperimentConfig::resolved_probe_tap() const {
  return training.probe_tap != 0 ? training.probe_tap : encoder.num_blocks - 1;
}

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) {
    throw ConfigError("config: version must be " + std::to_string(kConfigVersion) +
                      ", got " + std::to_string(version));
  }
  if (output_dir.empty()) {
    throw ConfigError("config: output_dir must not be empty");
  }
  try {
    encoder.validate();
    data.validate();
  } catch (const std::invalid_argument& error) {
    throw ConfigError(std::string("config: ") + error.what());
  }
  if (encoder.input_dim != data.feature_dim) {
    throw ConfigError("config: encoder input width is data.feature_dim; do not set it");
  }

  const double fraction_sum = pretrain_fraction + finetune_fraction + eval_fraction;
  if (pretrain_fraction < 0 || finetune_fraction < 0 || eval_fraction < 0) {
    throw ConfigError("config: data split fractions must be nonnegative");
  }
  if (std::abs(fraction_sum - 1.0) > 1e-9) {
    throw ConfigError("config: data split fractions must sum to 1");
  }

  if (training.batch_size == 0) {
    throw ConfigError("config: training.batch_size must be positive");
  }
  if (training.learning_rate <= 0 || training.frozen_learning_rate <= 0 ||
      training.probe_learning_rate <= 0) {
    throw ConfigError("config: training learning rates must be positive");
  }
  if (training.mask_start_prob <= 0 || training.mask_start_prob >= 1) {
    throw ConfigError("config: training.mask_start_prob must lie in (0, 1)");
  }
  if (training.mask_span == 0 || training.mask_span > data.seq_len) {
    throw ConfigError("config: training.mask_span must lie in [1, data.seq_len]");
  }
  if (training.mask_start_prob * static_cast<double>(training.mask_span) >= 1.0) {
    throw ConfigError(
        "config: training.mask_start_prob * training.mask_span must stay below 1");
  }
  if (!(training.tau_start >= 0 && training.tau_start <= training.tau_end &&
        training.tau_end <= 1)) {
    throw ConfigError("config: need 0 <= training.tau_start <= training.tau_end <= 1");
  }
  if (resolved_top_k() < 1 || resolved_top_k() > encoder.num_blocks - 1) {
    throw ConfigError("config: training.top_k must lie in [1, encoder.num_blocks - 1]");
  }
  if (resolved_pseudo_classes() < 2) {
    throw ConfigError("config: training.pseudo_classes must be at least 2");
  }
  if (resolved_pseudo_classes() < data.num_classes) {
    throw ConfigError(
        "config: training.pseudo_classes must cover data.num_classes labels");
  }
  if (training.diag_interval == 0) {
    throw ConfigError("config: training.diag_interval must be positive");
  }
  if (resolved_probe_tap() < 1 || resolved_probe_tap() > encoder.num_blocks) {
    throw ConfigError("config: training.probe_tap must lie in [1, encoder.num_blocks]");
  }
  if (loss.regul_temperature <= 0) {
    throw ConfigError("config: loss.regul_temperature must be positive");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& error) {
    throw ConfigError(std::string("config: not valid JSON: ") + error.what());
  }
  require_object(root, "root");
  reject_unknown_keys(root, "",
                      {"version", "seed", "output_dir", "mode", "encoder", "data",
                       "loss", "model", "training"});
  for (const char* field : {"version", "seed", "output_dir"}) {
    if (!root.contains(field)) {
      throw ConfigError("config: missing mandatory field '" + std::string(field) + "'");
    }
  }

  ExperimentConfig config;
  config.version = static_cast<std::uint32_t>(get_uint(root, "", "version", 0));
  config.seed = get_uint(root, "", "seed", 0);
  config.output_dir = get_string(root, "", "output_dir", "");

  const std::string mode = get_string(root, "", "mode", to_string(config.loss.mode));
  try {
    config.loss.mode = loss_mode_from_string(mode);
  } catch (const std::invalid_argument& error) {
    throw ConfigError(std::string("config: mode: ") + error.what());
  }

  config.data.seed = config.seed;
  if (root.contains("data")) parse_data(root.at("data"), config);
  config.encoder.input_dim = config.data.feature_dim;
  if (root.contains("encoder")) parse_encoder(root.at("encoder"), config);
  if (root.contains("loss")) parse_loss(root.at("loss"), config);
  if (root.contains("model")) parse_model(root.at("model"), config);
  if (root.contains("training")) parse_training(root.at("training"), config);

  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string to_json_text(const ExperimentConfig& config) {
  ordered_json root;
  root["version"] = config.version;
  root["seed"] = config.seed;
  root["output_dir"] = config.output_dir;
  root["mode"] = to_string(config.loss.mode);

  ordered_json encoder;
  encoder["hidden_dim"] = config.encoder.hidden_dim;
  encoder["num_blocks"] = config.encoder.num_blocks;
  encoder["num_heads"] = config.encoder.num_heads;
  encoder["ffn_multiplier"] = config.encoder.ffn_multiplier;
  encoder["downsample_stride"] = config.encoder.downsample_stride;
  encoder["dropout_rate"] = config.encoder.dropout_rate;
  root["encoder"] = encoder;

  ordered_json data;
  data["num_classes"] = config.data.num_classes;
  data["feature_dim"] = config.data.feature_dim;
  data["seq_len"] = config.data.seq_len;
  data["num_sequences"] = config.data.num_sequences;
  data["emission_noise_std"] = config.data.emission_noise_std;
  data["transition_stickiness"] = config.data.transition_stickiness;
  data["seed"] = config.data.seed;
  if (!config.data.transition_matrix.empty()) {
    data["transition_matrix"] = config.data.transition_matrix;
  }
  if (!config.data.class_means.empty()) {
    data["class_means"] = config.data.class_means;
  }
  data["pretrain_fraction"] = config.pretrain_fraction;
  data["finetune_fraction"] = config.finetune_fraction;
  data["eval_fraction"] = config.eval_fraction;
  root["data"] = data;

  ordered_json loss;
  loss["positions"] = to_string(config.loss.positions);
  loss["regul_temperature"] = config.loss.regul_temperature;
  root["loss"] = loss;

  ordered_json model;
  model["ablate_high_block"] = config.model.ablate_high_block;
  model["disable_stop_gradient"] = config.model.disable_stop_gradient;
  model["mask_fill"] =
      config.model.mask_fill == MaskFill::zeros ? "zeros" : "learned_embedding";
  root["model"] = model;

  ordered_json training;
  training["frozen_teacher_steps"] = config.training.frozen_teacher_steps;
  training["pretrain_steps"] = config.training.pretrain_steps;
  training["probe_steps"] = config.training.probe_steps;
  training["batch_size"] = config.training.batch_size;
  training["learning_rate"] = config.training.learning_rate;
  training["warmup_steps"] = config.training.warmup_steps;
  training["frozen_learning_rate"] = config.training.frozen_learning_rate;
  training["probe_learning_rate"] = config.training.probe_learning_rate;
  training["mask_start_prob"] = config.training.mask_start_prob;
  training["mask_span"] = config.training.mask_span;
  training["tau_start"] = config.training.tau_start;
  training["tau_end"] = config.training.tau_end;
  training["tau_anneal_steps"] = config.resolved_tau_anneal_steps();
  training["top_k"] = config.resolved_top_k();
  training["pseudo_classes"] = config.resolved_pseudo_classes();
  training["diag_interval"] = config.training.diag_interval;
  training["checkpoint_interval"] = config.training.checkpoint_interval;
  training["probe_tap"] = config.resolved_probe_tap();
  root["training"] = training;

  return root.dump(2) + "\n";
}

}  // namespace trinet
