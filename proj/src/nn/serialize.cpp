#include "gpca/nn/serialize.hpp"

#include <fstream>
#include <set>

namespace gpca::nn {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read_if(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": bad value for '" + key + "'");
  }
}

}  // namespace

json config_to_json(const TinyCnnConfig& c) {
  json layers = json::array();
  for (const ConvSpec& l : c.conv_layers) {
    layers.push_back({{"out_channels", l.out_channels}, {"kernel_size", l.kernel_size}, {"stride", l.stride}});
  }
  return {{"conv_layers", layers},
          {"attention_slot", to_string(c.attention_slot)},
          {"num_classes", c.num_classes},
          {"input_shape", {c.input_shape[0], c.input_shape[1], c.input_shape[2]}},
          {"input_shift", c.input_shift},
          {"delta", c.delta},
          {"mha_group_size", c.mha_group_size},
          {"local_gamma", c.local_gamma},
          {"local_b", c.local_b},
          {"fixed_theta1", c.fixed_theta1},
          {"noprior_scale", c.noprior_scale}};
}

TinyCnnConfig config_from_json(const json& j) {
  const std::string where = "model config";
  reject_unknown(j,
                 {"conv_layers", "attention_slot", "num_classes", "input_shape", "input_shift", "delta", "mha_group_size",
                  "local_gamma", "local_b", "fixed_theta1", "noprior_scale"},
                 where);
  TinyCnnConfig c;
  if (j.contains("conv_layers")) {
    if (!j["conv_layers"].is_array()) throw ConfigError(where + ": conv_layers must be an array");
    c.conv_layers.clear();
    for (const json& l : j["conv_layers"]) {
      reject_unknown(l, {"out_channels", "kernel_size", "stride"}, where + ".conv_layers");
      ConvSpec s;
      read_if(l, "out_channels", s.out_channels, where);
      read_if(l, "kernel_size", s.kernel_size, where);
      read_if(l, "stride", s.stride, where);
      c.conv_layers.push_back(s);
    }
  }
  if (j.contains("attention_slot")) {
    std::string name;
    read_if(j, "attention_slot", name, where);
    c.attention_slot = parse_slot(name);
  }
  read_if(j, "num_classes", c.num_classes, where);
  if (j.contains("input_shape")) {
    std::vector<Index> shape;
    read_if(j, "input_shape", shape, where);
    if (shape.size() != 3) throw ConfigError(where + ": input_shape needs 3 entries");
    c.input_shape = {shape[0], shape[1], shape[2]};
  }
  read_if(j, "input_shift", c.input_shift, where);
  read_if(j, "delta", c.delta, where);
  read_if(j, "mha_group_size", c.mha_group_size, where);
  read_if(j, "local_gamma", c.local_gamma, where);
  read_if(j, "local_b", c.local_b, where);
  read_if(j, "fixed_theta1", c.fixed_theta1, where);
  read_if(j, "noprior_scale", c.noprior_scale, where);
  c.validate();
  return c;
}

json sgd_to_json(const SgdConfig& s) {
  return {{"learning_rate", s.learning_rate}, {"momentum", s.momentum},
          {"weight_decay", s.weight_decay},   {"epochs", s.epochs},
          {"batch_size", s.batch_size},       {"lr_decay_epochs", s.lr_decay_epochs},
          {"lr_decay_factor", s.lr_decay_factor}};
}

SgdConfig sgd_from_json(const json& j) {
  const std::string where = "sgd config";
  reject_unknown(j,
                 {"learning_rate", "momentum", "weight_decay", "epochs", "batch_size", "lr_decay_epochs",
                  "lr_decay_factor"},
                 where);
  SgdConfig s;
  read_if(j, "learning_rate", s.learning_rate, where);
  read_if(j, "momentum", s.momentum, where);
  read_if(j, "weight_decay", s.weight_decay, where);
  read_if(j, "epochs", s.epochs, where);
  read_if(j, "batch_size", s.batch_size, where);
  read_if(j, "lr_decay_epochs", s.lr_decay_epochs, where);
  read_if(j, "lr_decay_factor", s.lr_decay_factor, where);
  s.validate();
  return s;
}

void save_model(const Model& model, const std::string& path) {
  if (!model.params.allFinite()) throw ConfigError("save_model: parameters are not finite");
  std::vector<double> values(model.params.data(), model.params.data() + model.params.size());
  const json j = {{"format", "gpca-model-1"}, {"config", config_to_json(model.config)}, {"params", values}};
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file: " + path);
  out << j.dump(1) << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  reject_unknown(j, {"format", "config", "params"}, path);
  if (j.value("format", "") != "gpca-model-1") throw ConfigError(path + ": not a gpca model file");
  Model m = build_model(config_from_json(j.at("config")), 0);
  const auto values = j.at("params").get<std::vector<double>>();
  if (static_cast<Index>(values.size()) != m.params.size()) {
    throw ConfigError(path + ": parameter count does not match the config");
  }
  m.params = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  return m;
}

}  // namespace gpca::nn
