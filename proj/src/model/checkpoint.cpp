#include <sstream>

#include "isap/errors.hpp"
#include "isap/model.hpp"

namespace isap::model {

namespace {

std::string num(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

std::size_t get_size(const io::KeyValues& kv, std::string_view key) {
  try {
    return std::stoull(io::lookup(kv, key));
  } catch (const std::logic_error&) {
    throw ValidationError("checkpoint: bad integer for " + std::string(key));
  }
}

}  // namespace

io::KeyValues echo(const ModelConfig& cfg) {
  return {{"model.kind", std::string(to_string(cfg.kind))},
          {"model.raster", std::to_string(cfg.raster)},
          {"model.classes", std::to_string(cfg.classes)},
          {"model.latent", std::to_string(cfg.latent)},
          {"model.flow_layers", std::to_string(cfg.flow_layers)},
          {"model.feature", std::to_string(cfg.feature)},
          {"model.classifier_hidden", std::to_string(cfg.classifier_hidden)},
          {"model.postcovernet_hidden", std::to_string(cfg.postcovernet_hidden)},
          {"model.ensemble_size", std::to_string(cfg.ensemble_size)}};
}

io::KeyValues echo(const TrainConfig& cfg) {
  return {{"train.epochs", std::to_string(cfg.epochs)},
          {"train.batch_size", std::to_string(cfg.batch_size)},
          {"train.lr", num(cfg.lr)},
          {"train.weight_decay", num(cfg.weight_decay)},
          {"train.seed", std::to_string(cfg.seed)},
          {"train.select_best", cfg.select_best ? "1" : "0"},
          {"train.lambda_agent", num(cfg.loss.lambda_agent)},
          {"train.lambda_map", num(cfg.loss.lambda_map)},
          {"train.lambda_sc", num(cfg.loss.lambda_sc)},
          {"train.kl_scale", num(cfg.loss.kl_scale)},
          {"train.budget", num(cfg.loss.budget)}};
}

ModelConfig model_config_from(const io::KeyValues& kv) {
  ModelConfig cfg;
  cfg.kind = parse_model_kind(io::lookup(kv, "model.kind"));
  cfg.raster = get_size(kv, "model.raster");
  cfg.classes = get_size(kv, "model.classes");
  cfg.latent = get_size(kv, "model.latent");
  cfg.flow_layers = get_size(kv, "model.flow_layers");
  cfg.feature = get_size(kv, "model.feature");
  cfg.classifier_hidden = get_size(kv, "model.classifier_hidden");
  cfg.postcovernet_hidden = get_size(kv, "model.postcovernet_hidden");
  cfg.ensemble_size = get_size(kv, "model.ensemble_size");
  return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (ckpt.members.empty()) throw ValidationError("checkpoint: no members");
  io::PayloadWriter w;
  io::KeyValues meta{{"kind", std::string(to_string(ckpt.kind))},
                     {"members", std::to_string(ckpt.members.size())},
                     {"anchor_hash", io::hex64(ckpt.anchor_hash)},
                     {"epoch", std::to_string(ckpt.epoch)}};
  std::size_t words = 0;
  for (std::size_t m = 0; m < ckpt.members.size(); ++m) {
    Model& model = *ckpt.members[m];
    const std::string prefix = "member" + std::to_string(m) + ".";
    meta.emplace_back(prefix + "seed", std::to_string(model.seed()));
    meta.emplace_back(prefix + "hidden", std::to_string(model.config().postcovernet_hidden));
    std::size_t t = 0;
    for (const diff::Parameter* p : model.parameters()) {
      meta.emplace_back(prefix + "tensor" + std::to_string(t++),
                        p->name + " " + diff::to_string(p->value.shape()));
      for (double v : p->value.data()) w.f64(v);
      words += p->value.size();
    }
    for (const diff::BatchNormStats* s : model.batch_norm_stats()) {
      for (double v : s->running_mean.data()) w.f64(v);
      for (double v : s->running_var.data()) w.f64(v);
      words += 2 * s->running_mean.size();
    }
    w.f64(model.budget().total);
    for (double v : model.budget().per_class) w.f64(v);
    words += 1 + model.budget().per_class.size();
  }
  meta.emplace_back("words", std::to_string(words));
  meta.emplace_back("record_layout",
                    "per member: f64 parameters in tensor order, batch-norm running mean/var "
                    "per flow bank, budget total, budget per class");
  io::save(path, "checkpoint", io::DType::f64, ckpt.config, meta, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Container c = io::load(path, "checkpoint");
  const io::KeyValues& meta = c.manifest.meta;
  Checkpoint ck;
  ck.kind = parse_model_kind(io::lookup(meta, "kind"));
  ck.anchor_hash = io::parse_hex64(io::lookup(meta, "anchor_hash"));
  ck.epoch = get_size(meta, "epoch");
  ck.config = c.manifest.config;
  ModelConfig cfg = model_config_from(ck.config);
  if (ck.kind == ModelKind::ensemble) cfg.kind = ModelKind::covernet;
  const std::size_t members = get_size(meta, "members");
  if (members == 0) throw ValidationError("checkpoint: no members");
  io::PayloadReader r(c.payload);
  for (std::size_t m = 0; m < members; ++m) {
    const std::string prefix = "member" + std::to_string(m) + ".";
    ModelConfig mc = cfg;
    mc.postcovernet_hidden = get_size(meta, prefix + "hidden");
    if (mc.kind == ModelKind::postcovernet && mc.postcovernet_hidden == 0)
      mc.postcovernet_hidden = parity_hidden(mc);
    auto model = std::make_unique<Model>(mc, get_size(meta, prefix + "seed"));
    std::size_t t = 0;
    for (diff::Parameter* p : model->parameters()) {
      const std::string expected = p->name + " " + diff::to_string(p->value.shape());
      if (io::lookup(meta, prefix + "tensor" + std::to_string(t++)) != expected)
        throw ValidationError("checkpoint: tensor layout mismatch at " + p->name);
      for (double& v : p->value.data()) v = r.f64();
    }
    for (diff::BatchNormStats* s : model->batch_norm_stats()) {
      for (double& v : s->running_mean.data()) v = r.f64();
      for (double& v : s->running_var.data()) v = r.f64();
    }
    evidential::CertaintyBudget b;
    b.total = r.f64();
    b.per_class.resize(mc.classes);
    for (double& v : b.per_class) v = r.f64();
    model->set_budget(std::move(b));
    ck.members.push_back(std::move(model));
  }
  if (r.remaining() != 0) throw ValidationError("checkpoint: trailing payload bytes");
  return ck;
}

}  // namespace isap::model
