#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "isap/dataset.hpp"
#include "isap/errors.hpp"
#include "isap/model.hpp"

namespace isap::model {

namespace {

struct Snapshot {
  std::vector<Tensor> params;
  std::vector<diff::BatchNormStats> stats;
};

Snapshot take(Model& m) {
  Snapshot s;
  for (diff::Parameter* p : m.parameters()) s.params.push_back(p->value);
  for (diff::BatchNormStats* b : m.batch_norm_stats()) s.stats.push_back(*b);
  return s;
}

void restore(Model& m, const Snapshot& s) {
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.params[i];
  auto stats = m.batch_norm_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) *stats[i] = s.stats[i];
}

std::vector<std::size_t> gather(const std::vector<std::size_t>& labels,
                                std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace

double validation_loss(Model& model, const std::vector<scene::Scene>& scenes,
                       std::span<const std::size_t> indices, const std::vector<std::size_t>& labels,
                       const evidential::LossConfig& loss, std::size_t batch_size) {
  if (indices.empty()) throw ValidationError("validation_loss: empty validation split");
  double total = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto idx = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const auto lab = gather(labels, idx);
    const Batch batch = make_batch(scenes, idx, lab, model.config().raster);
    Graph g(false);
    const Forward f = model.forward(g, batch, false);
    const LossParts parts = compute_loss(g, model, f, batch, loss);
    total += parts.primary.item() * double(idx.size());
  }
  return total / double(indices.size());
}

TrainedModel train_model(const ModelConfig& cfg, const TrainConfig& tc,
                         const std::vector<scene::Scene>& scenes,
                         const std::vector<std::size_t>& labels) {
  if (labels.size() != scenes.size()) throw ValidationError("train: one label per scene required");
  if (tc.batch_size < 2) throw ValidationError("train: batch size must be at least 2");
  if (tc.epochs == 0) throw ValidationError("train: epochs must be positive");
  const std::vector<std::size_t> train_idx = scene::select(scenes, scene::Split::train);
  const std::vector<std::size_t> val_idx = scene::select(scenes, scene::Split::val_id);
  if (train_idx.size() < 2) throw ValidationError("train: fewer than 2 training scenes");

  TrainedModel out;
  out.model = std::make_unique<Model>(cfg, tc.seed);
  Model& model = *out.model;
  if (is_evidential(cfg.kind)) {
    std::vector<std::size_t> counts(cfg.classes, 0);
    for (std::size_t i : train_idx) ++counts.at(labels[i]);
    model.set_budget(evidential::certainty_budget(counts, tc.loss.budget));
  }

  diff::AdamConfig ac;
  ac.lr = tc.lr;
  ac.weight_decay = tc.weight_decay;
  diff::Adam opt(model.parameters(), ac);
  Rng shuffle_rng(derive_seed(tc.seed, 0x5F0F));

  Snapshot best;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Fisher-Yates with the project RNG so orderings are portable.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t n = std::min(tc.batch_size, order.size() - start);
      if (n < 2) break;  // batch norm needs two samples
      const std::span<const std::size_t> idx(order.data() + start, n);
      for (std::size_t i : idx)
        if (scene::is_ood(scenes[i].split)) throw ValidationError("train: OOD scene in batch");
      const auto lab = gather(labels, idx);
      const Batch batch = make_batch(scenes, idx, lab, cfg.raster);
      opt.zero_grad();
      Graph g;
      const Forward f = model.forward(g, batch, true);
      const LossParts parts = compute_loss(g, model, f, batch, tc.loss);
      const double value = parts.total.item();
      if (!std::isfinite(value))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch));
      g.backward(parts.total);
      opt.step();
      loss_sum += value * double(n);
      seen += n;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / double(seen);
    log.val_loss = val_idx.empty() ? std::nan("")
                                   : validation_loss(model, scenes, val_idx, labels, tc.loss, 64);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (tc.verbose)
      std::cerr << to_string(cfg.kind) << " seed " << tc.seed << " epoch " << epoch << "/"
                << tc.epochs << " train " << log.train_loss << " val " << log.val_loss << " ("
                << log.seconds << " s)\n";
    out.log.push_back(log);
    if (tc.select_best && log.val_loss < best_val) {
      best_val = log.val_loss;
      best = take(model);
      out.selected_epoch = epoch;
    }
  }
  if (tc.select_best && out.selected_epoch > 0) {
    restore(model, best);
  } else {
    out.selected_epoch = tc.epochs;
  }
  return out;
}

}  // namespace isap::model
