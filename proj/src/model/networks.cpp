#include <cmath>

#include "isap/errors.hpp"
#include "isap/model.hpp"

namespace isap::model {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::covernet: return "covernet";
    case ModelKind::postcovernet: return "postcovernet";
    case ModelKind::isap: return "isap";
    case ModelKind::ensemble: return "ensemble";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  for (ModelKind k : {ModelKind::covernet, ModelKind::postcovernet, ModelKind::isap,
                      ModelKind::ensemble})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

bool is_evidential(ModelKind k) { return k == ModelKind::postcovernet || k == ModelKind::isap; }

namespace {
constexpr std::array<std::size_t, 5> kChannels{3, 8, 16, 32, 64};
constexpr std::size_t kDecoderSeedChannels = 32;
constexpr std::array<std::size_t, 5> kDecoderChannels{32, 16, 8, 4, 1};
constexpr std::size_t kAgentHidden = 64;
}  // namespace

Backbone::Backbone(const std::string& name, std::size_t raster, std::size_t feature, Rng& rng) {
  if (raster == 0 || raster % 16 != 0) throw ValidationError("raster size must be a multiple of 16");
  for (std::size_t i = 0; i < 4; ++i)
    conv_[i] = diff::Conv2d(name + ".conv" + std::to_string(i), kChannels[i], kChannels[i + 1], 3,
                            2, 1, rng);
  const std::size_t s = raster / 16;
  fc_ = diff::Linear(name + ".fc", kChannels[4] * s * s, feature, rng);
}

Var Backbone::operator()(Graph& g, Var x) {
  for (auto& c : conv_) x = diff::relu(c(g, x));
  const std::size_t b = x.shape()[0];
  return diff::relu(fc_(g, diff::reshape(x, {b, x.value().size() / b})));
}

void Backbone::collect(diff::ParamList& out) {
  for (auto& c : conv_) c.collect(out);
  fc_.collect(out);
}

Head::Head(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
           double out_gain)
    : l1_(name + ".l1", in + 3, hidden, rng), l2_(name + ".l2", hidden, out, rng, out_gain) {}

Head::Output Head::operator()(Graph& g, Var feature, Var state) {
  Var h = diff::relu(l1_(g, diff::concat({feature, state}, 1)));
  return {h, l2_(g, h)};
}

void Head::collect(diff::ParamList& out) {
  l1_.collect(out);
  l2_.collect(out);
}

RasterDecoder::RasterDecoder(const std::string& name, std::size_t in, std::size_t raster, Rng& rng)
    : seed_size_(raster / 16),
      fc_(name + ".fc", in, kDecoderSeedChannels * (raster / 16) * (raster / 16), rng) {
  for (std::size_t i = 0; i < 4; ++i)
    up_[i] = diff::ConvTranspose2d(name + ".up" + std::to_string(i), kDecoderChannels[i],
                                   kDecoderChannels[i + 1], 4, 2, 1, rng);
}

Var RasterDecoder::operator()(Graph& g, Var feature) {
  const std::size_t b = feature.shape()[0];
  Var x = diff::relu(fc_(g, feature));
  x = diff::reshape(x, {b, kDecoderSeedChannels, seed_size_, seed_size_});
  for (std::size_t i = 0; i < 4; ++i) {
    x = up_[i](g, x);
    x = i + 1 < 4 ? diff::relu(x) : diff::sigmoid(x);
  }
  return x;
}

void RasterDecoder::collect(diff::ParamList& out) {
  fc_.collect(out);
  for (auto& u : up_) u.collect(out);
}

AgentDecoder::AgentDecoder(const std::string& name, std::size_t latent, Rng& rng)
    : l1_(name + ".l1", latent, kAgentHidden, rng), l2_(name + ".l2", kAgentHidden, kAgentTarget, rng) {}

Var AgentDecoder::operator()(Graph& g, Var z) { return l2_(g, diff::relu(l1_(g, z))); }

void AgentDecoder::collect(diff::ParamList& out) {
  l1_.collect(out);
  l2_.collect(out);
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  if (cfg.kind == ModelKind::ensemble)
    throw ValidationError("an ensemble is a set of covernet models, not a single network");
  if (cfg.classes < 2) throw ValidationError("need at least 2 anchor classes");
  Rng rng(seed);
  std::vector<std::size_t> uniform(cfg.classes, 1);
  budget_ = evidential::certainty_budget(uniform, evidential::kDefaultBudget);
  backbone_ = Backbone("backbone", cfg.raster, cfg.feature, rng);
  switch (cfg.kind) {
    case ModelKind::covernet:
      // Small output gain so untrained logits give a near-uniform softmax.
      classifier_ = Head("classifier", cfg.feature, cfg.classifier_hidden, cfg.classes, rng, 0.01);
      break;
    case ModelKind::postcovernet: {
      const std::size_t hidden = cfg.postcovernet_hidden ? cfg.postcovernet_hidden : parity_hidden(cfg);
      cfg_.postcovernet_hidden = hidden;
      heads_[0] = Head("head", cfg.feature, hidden, cfg.latent, rng);
      banks_[0] = flows::FlowBank("bank", cfg.classes, cfg.latent, cfg.flow_layers, rng);
      break;
    }
    case ModelKind::isap: {
      static const std::array<std::string, 3> names{"agent", "map", "sc"};
      for (std::size_t i = 0; i < 3; ++i) {
        heads_[i] = Head("head_" + names[i], cfg.feature, cfg.feature, cfg.latent, rng);
        banks_[i] = flows::FlowBank("bank_" + names[i], cfg.classes, cfg.latent, cfg.flow_layers, rng);
      }
      agent_dec_ = AgentDecoder("dec_agent", cfg.latent, rng);
      map_dec_ = RasterDecoder("dec_map", cfg.feature, cfg.raster, rng);
      sc_dec_ = RasterDecoder("dec_sc", cfg.feature, cfg.raster, rng);
      break;
    }
    case ModelKind::ensemble: break;
  }
}

Var Model::evidence(Graph& g, flows::FlowBank& bank, Var z, bool train) {
  Var log_r = bank.log_densities(g, z, train);
  return evidential::ops::posterior(evidential::ops::pseudo_counts(g, log_r, budget_));
}

Forward Model::forward(Graph& g, const Batch& batch, bool train) {
  if (batch.raster.shape().size() != 4 || batch.raster.dim(2) != cfg_.raster)
    throw ShapeError("model: raster batch does not match configured size");
  Forward f;
  Var x = g.constant(batch.raster);
  Var state = g.constant(batch.state);
  Var feat = backbone_(g, x);
  switch (cfg_.kind) {
    case ModelKind::covernet:
      f.logits = classifier_(g, feat, state).out;
      break;
    case ModelKind::postcovernet:
      f.latent[0] = heads_[0](g, feat, state).out;
      f.alpha = evidence(g, banks_[0], f.latent[0], train);
      break;
    case ModelKind::isap: {
      std::array<Var, 3> hidden;
      for (std::size_t i = 0; i < 3; ++i) {
        Head::Output o = heads_[i](g, feat, state);
        hidden[i] = o.hidden;
        f.latent[i] = o.out;
        f.concept_alpha[i] = evidence(g, banks_[i], o.out, train);
      }
      f.alpha = evidential::ops::aggregate(f.concept_alpha[0], f.concept_alpha[1],
                                           f.concept_alpha[2]);
      f.agent_rec = agent_dec_(g, f.latent[0]);
      f.map_rec = map_dec_(g, hidden[1]);
      f.sc_rec = sc_dec_(g, hidden[2]);
      break;
    }
    case ModelKind::ensemble: break;
  }
  return f;
}

std::vector<std::pair<std::string, diff::ParamList>> Model::parameter_groups() {
  std::vector<std::pair<std::string, diff::ParamList>> groups;
  auto add = [&](std::string name, auto& part) {
    diff::ParamList l;
    part.collect(l);
    groups.emplace_back(std::move(name), std::move(l));
  };
  add("backbone", backbone_);
  switch (cfg_.kind) {
    case ModelKind::covernet: add("classifier", classifier_); break;
    case ModelKind::postcovernet:
      add("head", heads_[0]);
      add("bank", banks_[0]);
      break;
    case ModelKind::isap:
      add("head_agent", heads_[0]);
      add("head_map", heads_[1]);
      add("head_sc", heads_[2]);
      add("bank_agent", banks_[0]);
      add("bank_map", banks_[1]);
      add("bank_sc", banks_[2]);
      add("dec_agent", agent_dec_);
      add("dec_map", map_dec_);
      add("dec_sc", sc_dec_);
      break;
    case ModelKind::ensemble: break;
  }
  return groups;
}

diff::ParamList Model::parameters() {
  diff::ParamList all;
  for (auto& [name, group] : parameter_groups()) all.insert(all.end(), group.begin(), group.end());
  return all;
}

std::vector<flows::FlowBank*> Model::flow_banks() {
  switch (cfg_.kind) {
    case ModelKind::postcovernet: return {&banks_[0]};
    case ModelKind::isap: return {&banks_[0], &banks_[1], &banks_[2]};
    default: return {};
  }
}

std::vector<diff::BatchNormStats*> Model::batch_norm_stats() {
  std::vector<diff::BatchNormStats*> out;
  for (flows::FlowBank* b : flow_banks()) out.push_back(&b->norm().stats());
  return out;
}

std::size_t parity_hidden(const ModelConfig& cfg) {
  ModelConfig isap_cfg = cfg;
  isap_cfg.kind = ModelKind::isap;
  Model isap(isap_cfg, 0);
  const std::size_t target = diff::count_parameters(isap.parameters());
  ModelConfig probe = cfg;
  probe.kind = ModelKind::postcovernet;
  probe.postcovernet_hidden = 1;
  Model small(probe, 0);
  const std::size_t per_unit = cfg.feature + 3 + 1 + cfg.latent;
  const std::size_t rest = diff::count_parameters(small.parameters()) - per_unit;
  return std::max<std::size_t>(1, std::size_t(std::llround(double(target - rest) / double(per_unit))));
}

// ---------------------------------------------------------------------------

Var sse(Var prediction, const Tensor& target) {
  const std::size_t b = prediction.shape()[0];
  if (prediction.value().size() != target.size())
    throw ShapeError("sse: prediction/target size mismatch");
  Var t = prediction.graph->constant(target.reshaped(prediction.shape()));
  Var d = diff::square(diff::sub(prediction, t));
  return diff::sum(diff::reshape(d, {b, d.value().size() / b}), 1);
}

LossParts compute_loss(Graph& g, const Model& model, const Forward& f, const Batch& batch,
                       const evidential::LossConfig& cfg) {
  (void)g;
  LossParts p;
  switch (model.kind()) {
    case ModelKind::covernet: {
      Var lp = diff::pick(diff::log_softmax(f.logits, 1), batch.labels);
      p.primary = diff::neg(diff::mean(lp));
      p.total = p.primary;
      break;
    }
    case ModelKind::postcovernet:
      p.primary = diff::mean(evidential::ops::elbo_loss(f.alpha, batch.labels, cfg.kl_scale));
      p.total = p.primary;
      break;
    case ModelKind::isap: {
      p.primary = diff::mean(evidential::ops::elbo_loss(f.alpha, batch.labels, cfg.kl_scale));
      p.rec_agent = diff::mean(sse(f.agent_rec, batch.agent_target));
      p.rec_map = diff::mean(sse(f.map_rec, batch.map_target));
      p.rec_sc = diff::mean(sse(f.sc_rec, batch.sc_target));
      p.total = diff::add(
          diff::add(p.primary, diff::scale(p.rec_agent, cfg.lambda_agent)),
          diff::add(diff::scale(p.rec_map, cfg.lambda_map), diff::scale(p.rec_sc, cfg.lambda_sc)));
      break;
    }
    case ModelKind::ensemble: throw ValidationError("compute_loss: ensemble has no single loss");
  }
  return p;
}

}  // namespace isap::model
