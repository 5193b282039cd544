#include <algorithm>
#include <cmath>

#include "isap/cli.hpp"
#include "isap/errors.hpp"

namespace isap::cli {

namespace {
constexpr std::size_t kEvalBatch = 64;

std::vector<double> row(const diff::Tensor& t, std::size_t r) {
  const std::size_t c = t.dim(1);
  return std::vector<double>(t.ptr() + r * c, t.ptr() + (r + 1) * c);
}

std::vector<double> softmax_row(const diff::Tensor& logits, std::size_t r) {
  std::vector<double> p = row(logits, r);
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) z += (v = std::exp(v - m));
  for (double& v : p) v /= z;
  return p;
}

std::size_t argmax(const std::vector<double>& v) {
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}
}  // namespace

std::vector<std::size_t> label_scenes(const std::vector<scene::Scene>& scenes,
                                      const anchors::AnchorSet& anchors) {
  std::vector<std::size_t> labels;
  labels.reserve(scenes.size());
  for (const scene::Scene& s : scenes) labels.push_back(anchors::label(s.future, anchors));
  return labels;
}

std::vector<metrics::SamplePrediction> predict(model::Checkpoint& ckpt,
                                               const std::vector<scene::Scene>& scenes,
                                               std::span<const std::size_t> indices,
                                               const std::vector<std::size_t>& labels) {
  std::vector<metrics::SamplePrediction> out;
  out.reserve(indices.size());
  const std::size_t raster = ckpt.members.at(0)->config().raster;
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const auto idx = indices.subspan(start, std::min(kEvalBatch, indices.size() - start));
    std::vector<std::size_t> lab;
    for (std::size_t i : idx) lab.push_back(labels.at(i));
    const model::Batch batch = model::make_batch(scenes, idx, lab, raster);

    std::vector<std::vector<std::vector<double>>> member_probs(idx.size());
    std::vector<metrics::SamplePrediction> preds(idx.size());
    for (auto& m : ckpt.members) {
      diff::Graph g(false);
      const model::Forward f = m->forward(g, batch, false);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        metrics::SamplePrediction& p = preds[r];
        switch (m->kind()) {
          case model::ModelKind::covernet:
            member_probs[r].push_back(softmax_row(f.logits.value(), r));
            break;
          case model::ModelKind::postcovernet:
          case model::ModelKind::isap: {
            evidential::DirichletParams d{row(f.alpha.value(), r)};
            p.probs = evidential::categorical_mean(d).xi_bar;
            p.predicted = evidential::predict(d);
            p.alpha = std::move(d.alpha);
            if (m->kind() == model::ModelKind::isap) {
              std::array<double, 3> a0{};
              for (std::size_t c = 0; c < 3; ++c) {
                const auto v = row(f.concept_alpha[c].value(), r);
                for (double x : v) a0[c] += x;
              }
              p.concept_alpha0 = a0;
            }
            break;
          }
          case model::ModelKind::ensemble: break;
        }
      }
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      metrics::SamplePrediction& p = preds[r];
      if (ckpt.kind == model::ModelKind::covernet) {
        p.probs = member_probs[r].at(0);
        p.predicted = argmax(p.probs);
      } else if (ckpt.kind == model::ModelKind::ensemble) {
        const model::EnsembleScores es = model::ensemble_scores(member_probs[r]);
        p.probs = es.mean_probs;
        p.predicted = es.predicted;
        p.ensemble_score = es.score;
      }
      const scene::Scene& s = scenes[idx[r]];
      p.label = lab[r];
      p.ood = scene::is_ood(s.split);
      p.speed_heuristic = scene::speed_heuristic(s);
      out.push_back(std::move(p));
    }
  }
  return out;
}

Evaluation evaluate(model::Checkpoint& ckpt, const std::vector<scene::Scene>& scenes,
                    const anchors::AnchorSet& anchors) {
  if (ckpt.anchor_hash != anchors.hash())
    throw ValidationError("evaluate: checkpoint was trained against a different anchor set");
  const std::vector<std::size_t> labels = label_scenes(scenes, anchors);
  const auto id_idx = scene::select(scenes, scene::Split::test_id);
  const auto ood_idx = scene::select(scenes, scene::Split::test_ood);
  Evaluation ev;
  ev.id = predict(ckpt, scenes, id_idx, labels);
  ev.ood = predict(ckpt, scenes, ood_idx, labels);
  std::vector<anchors::FutureTrack> id_truth, ood_truth;
  for (std::size_t i : id_idx) id_truth.push_back(scenes[i].future);
  for (std::size_t i : ood_idx) ood_truth.push_back(scenes[i].future);
  ev.report = metrics::build_report(ev.id, ev.ood, anchors, id_truth, ood_truth);
  return ev;
}

}  // namespace isap::cli
