#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "isap/cli.hpp"
#include "isap/errors.hpp"

namespace isap::cli {

namespace pt = boost::property_tree;

ExperimentConfig default_config(scene::Experiment e) {
  ExperimentConfig cfg;
  cfg.data.experiment = e;
  return cfg;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof())
    throw ValidationError("config: bad value '" + text + "' for " + key);
  if constexpr (std::is_unsigned_v<T>)
    if (text.find('-') != std::string::npos)
      throw ValidationError("config: negative value for " + key);
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ValidationError("config: empty list element");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw ValidationError("config: empty list");
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  scene::Experiment e = scene::Experiment::speed;
  for (const auto& [section, body] : tree)
    if (section == "experiment")
      for (const auto& [k, v] : body)
        if (k == "name") e = scene::parse_experiment(v.data());
  ExperimentConfig cfg = default_config(e);

  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ValidationError("config: key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const std::string& v = node.data();
      const std::string full = section + "." + key;
      auto size = [&] { return parse_number<std::size_t>(full, v); };
      auto real = [&] { return parse_number<double>(full, v); };
      bool known = true;
      if (section == "experiment") {
        if (key == "name") {
        } else if (key == "scale") cfg.data.scale = real();
        else if (key == "seed") cfg.data.seed = parse_number<std::uint64_t>(full, v);
        else if (key == "speed_threshold") cfg.data.speed_threshold = real();
        else if (key == "leak_fraction") cfg.data.leak_fraction = real();
        else known = false;
      } else if (section == "models") {
        if (key == "kinds") {
          cfg.models.clear();
          for (const auto& s : split_list(v)) cfg.models.push_back(model::parse_model_kind(s));
        } else if (key == "seeds") {
          cfg.seeds.clear();
          for (const auto& s : split_list(v)) cfg.seeds.push_back(parse_number<std::uint64_t>(full, s));
        } else if (key == "ensemble_size") cfg.net.ensemble_size = size();
        else known = false;
      } else if (section == "anchors") {
        if (key == "count") cfg.anchor_count = size();
        else if (key == "seed") cfg.anchor_seed = parse_number<std::uint64_t>(full, v);
        else known = false;
      } else if (section == "model") {
        if (key == "raster") cfg.net.raster = size();
        else if (key == "latent") cfg.net.latent = size();
        else if (key == "flow_layers") cfg.net.flow_layers = size();
        else if (key == "feature") cfg.net.feature = size();
        else if (key == "classifier_hidden") cfg.net.classifier_hidden = size();
        else if (key == "postcovernet_hidden") cfg.net.postcovernet_hidden = size();
        else known = false;
      } else if (section == "train") {
        if (key == "epochs") cfg.train.epochs = size();
        else if (key == "isap_epochs") cfg.isap_epochs = size();
        else if (key == "batch_size") cfg.train.batch_size = size();
        else if (key == "lr") cfg.train.lr = real();
        else if (key == "weight_decay") cfg.train.weight_decay = real();
        else if (key == "lambda_agent") cfg.train.loss.lambda_agent = real();
        else if (key == "lambda_map") cfg.train.loss.lambda_map = real();
        else if (key == "lambda_sc") cfg.train.loss.lambda_sc = real();
        else if (key == "kl_scale") cfg.train.loss.kl_scale = real();
        else if (key == "budget") cfg.train.loss.budget = real();
        else known = false;
      } else {
        throw ValidationError("config: unknown section [" + section + "]");
      }
      if (!known) throw ValidationError("config: unknown key " + full);
    }
  }
  if (cfg.seeds.empty() || cfg.models.empty()) throw ValidationError("config: empty model list");
  if (cfg.net.ensemble_size < 2) throw ValidationError("config: ensemble_size must be at least 2");
  if (cfg.anchor_count < 2) throw ValidationError("config: anchor count must be at least 2");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  return parse_config(in);
}

io::KeyValues data_echo(const scene::DatasetConfig& data) {
  io::KeyValues kv;
  for (auto& [k, v] : scene::echo(data))
    kv.emplace_back(k == "experiment" ? "experiment.name" : "experiment." + k, v);
  return kv;
}

io::KeyValues echo(const ExperimentConfig& cfg) {
  io::KeyValues kv = data_echo(cfg.data);
  std::string kinds, seeds;
  for (auto k : cfg.models) kinds += (kinds.empty() ? "" : ",") + std::string(model::to_string(k));
  for (auto s : cfg.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  kv.emplace_back("models.kinds", kinds);
  kv.emplace_back("models.seeds", seeds);
  kv.emplace_back("anchors.count", std::to_string(cfg.anchor_count));
  kv.emplace_back("anchors.seed", std::to_string(cfg.anchor_seed));
  model::ModelConfig net = cfg.net;
  net.classes = cfg.anchor_count;
  for (auto& p : model::echo(net))
    if (p.first != "model.kind") kv.push_back(p);
  for (auto& p : model::echo(cfg.train))
    if (p.first != "train.seed" && p.first != "train.select_best") kv.push_back(p);
  kv.emplace_back("train.isap_epochs", std::to_string(cfg.isap_epochs));
  return kv;
}

model::TrainConfig train_config_for(const ExperimentConfig& cfg, model::ModelKind kind,
                                    std::uint64_t seed) {
  model::TrainConfig tc = cfg.train;
  tc.seed = seed;
  const bool map = cfg.data.experiment == scene::Experiment::map;
  if (kind == model::ModelKind::isap) {
    tc.epochs = cfg.isap_epochs ? cfg.isap_epochs : (map ? 50 : 25);
    tc.select_best = map;
  } else {
    tc.select_best = true;
  }
  return tc;
}

std::filesystem::path dataset_path(const ExperimentConfig& cfg) { return cfg.out / "data" / "dataset.ini"; }
std::filesystem::path anchors_path(const ExperimentConfig& cfg) { return cfg.out / "anchors" / "anchors.ini"; }

namespace {
std::string stem(model::ModelKind kind, std::uint64_t seed) {
  return std::string(model::to_string(kind)) + "_seed" + std::to_string(seed);
}
}  // namespace

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, model::ModelKind kind,
                                      std::uint64_t seed) {
  return cfg.out / "models" / (stem(kind, seed) + ".ini");
}
std::filesystem::path report_path(const ExperimentConfig& cfg, model::ModelKind kind,
                                  std::uint64_t seed) {
  return cfg.out / "eval" / (stem(kind, seed) + ".csv");
}
std::filesystem::path samples_path(const ExperimentConfig& cfg, model::ModelKind kind,
                                   std::uint64_t seed) {
  return cfg.out / "eval" / (stem(kind, seed) + ".samples.csv");
}

}  // namespace isap::cli
