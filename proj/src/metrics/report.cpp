#include <algorithm>
#include <limits>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "isap/errors.hpp"
#include "isap/evidential.hpp"
#include "isap/metrics.hpp"

namespace isap::metrics {

const ReportRow* EvalReport::find(std::string_view name) const {
  for (const ReportRow& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

double EvalReport::id(std::string_view name) const {
  const ReportRow* r = find(name);
  if (!r || !r->id_value) throw ValidationError("report: no ID value for " + std::string(name));
  return *r->id_value;
}

double EvalReport::ood(std::string_view name) const {
  const ReportRow* r = find(name);
  if (!r || !r->ood_value) throw ValidationError("report: no OOD value for " + std::string(name));
  return *r->ood_value;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace {

using Opt = std::optional<double>;

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / double(v.size());
}

Opt opt_mean(const std::vector<double>& v) { return v.empty() ? Opt{} : Opt{mean(v)}; }

// Ranking metrics are undefined when one label value is missing.
template <class F>
Opt ranking(const std::vector<ScoredSample>& s, F f) {
  bool pos = false, neg = false;
  for (const ScoredSample& x : s) (x.label ? pos : neg) = true;
  if (!pos || !neg) return std::nullopt;
  return f(std::span<const ScoredSample>(s));
}

double categorical_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

struct Side {
  std::array<std::vector<double>, kMinAdeKs.size()> ade;
  std::vector<double> fde, correct, brier, cat_entropy, dir_entropy, a0;
  std::array<std::vector<double>, 3> concept_a0;
  std::vector<Confidence> conf;
};

Side collect(std::span<const SamplePrediction> preds, const anchors::AnchorSet& anchors,
             std::span<const anchors::FutureTrack> truth) {
  if (preds.size() != truth.size()) throw ValidationError("report: prediction/truth count mismatch");
  Side s;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const SamplePrediction& p = preds[i];
    for (std::size_t j = 0; j < kMinAdeKs.size(); ++j)
      if (kMinAdeKs[j] <= p.probs.size())
        s.ade[j].push_back(min_ade_k(p.probs, anchors, truth[i], kMinAdeKs[j]));
    s.fde.push_back(fde(p.probs, anchors, truth[i]));
    const bool ok = p.predicted == p.label;
    s.correct.push_back(ok ? 1.0 : 0.0);
    s.brier.push_back(brier(p.probs, p.label));
    s.conf.push_back({std::clamp(*std::max_element(p.probs.begin(), p.probs.end()), 0.0, 1.0), ok});
    s.cat_entropy.push_back(categorical_entropy(p.probs));
    if (p.alpha) {
      s.a0.push_back(alpha0(p));
      s.dir_entropy.push_back(evidential::dirichlet_entropy({*p.alpha}));
    }
    if (p.concept_alpha0)
      for (std::size_t c = 0; c < 3; ++c) s.concept_a0[c].push_back((*p.concept_alpha0)[c]);
  }
  return s;
}

void add_histogram(EvalReport& r, const std::string& name, const std::vector<double>& id,
                   const std::vector<double>& ood, double lo, double hi) {
  if (id.empty() && ood.empty()) return;
  if (!(hi > lo)) hi = lo + 1.0;
  const Histogram hi_id = histogram(id, kEntropyBins, lo, hi);
  const Histogram hi_ood = histogram(ood, kEntropyBins, lo, hi);
  r.rows.push_back({"hist." + name + ".lo", lo, lo});
  r.rows.push_back({"hist." + name + ".hi", hi, hi});
  for (std::size_t b = 0; b < kEntropyBins; ++b) {
    char key[16];
    std::snprintf(key, sizeof key, "%02zu", b);
    r.rows.push_back({"hist." + name + ".bin" + key, double(hi_id.counts[b]),
                      double(hi_ood.counts[b])});
  }
}

}  // namespace

EvalReport build_report(std::span<const SamplePrediction> id_preds,
                        std::span<const SamplePrediction> ood_preds,
                        const anchors::AnchorSet& anchors,
                        std::span<const anchors::FutureTrack> id_truth,
                        std::span<const anchors::FutureTrack> ood_truth) {
  if (id_preds.empty() || ood_preds.empty())
    throw ValidationError("report: need ID and OOD predictions");
  const Side id = collect(id_preds, anchors, id_truth);
  const Side ood = collect(ood_preds, anchors, ood_truth);
  EvalReport r;
  auto both = [&](std::string name, Opt a, Opt b) { r.rows.push_back({std::move(name), a, b}); };

  for (std::size_t j = 0; j < kMinAdeKs.size(); ++j)
    both("minADE_" + std::to_string(kMinAdeKs[j]), opt_mean(id.ade[j]), opt_mean(ood.ade[j]));
  both("FDE", mean(id.fde), mean(ood.fde));
  both("accuracy", mean(id.correct), mean(ood.correct));

  const ScoreSets cid = confidence_scores(id_preds);
  const ScoreSets cood = confidence_scores(ood_preds);
  both("conf_aleatoric_auroc", ranking(cid.aleatoric, auroc), ranking(cood.aleatoric, auroc));
  both("conf_aleatoric_apr", ranking(cid.aleatoric, apr), ranking(cood.aleatoric, apr));
  if (cid.epistemic && cood.epistemic) {
    both("conf_epistemic_auroc", ranking(*cid.epistemic, auroc), ranking(*cood.epistemic, auroc));
    both("conf_epistemic_apr", ranking(*cid.epistemic, apr), ranking(*cood.epistemic, apr));
  } else {
    both("conf_epistemic_auroc", {}, {});
    both("conf_epistemic_apr", {}, {});
  }
  both("ece", ece(id.conf), ece(ood.conf));
  both("brier", mean(id.brier), mean(ood.brier));

  std::vector<SamplePrediction> pooled(id_preds.begin(), id_preds.end());
  pooled.insert(pooled.end(), ood_preds.begin(), ood_preds.end());
  for (std::size_t i = 0; i < id_preds.size(); ++i) pooled[i].ood = false;
  for (std::size_t i = id_preds.size(); i < pooled.size(); ++i) pooled[i].ood = true;
  const ScoreSets os = ood_scores(pooled);
  both("ood_aleatoric_auroc", ranking(os.aleatoric, auroc), {});
  both("ood_aleatoric_apr", ranking(os.aleatoric, apr), {});
  if (os.epistemic) {
    both("ood_epistemic_auroc", ranking(*os.epistemic, auroc), {});
    both("ood_epistemic_apr", ranking(*os.epistemic, apr), {});
  } else {
    both("ood_epistemic_auroc", {}, {});
    both("ood_epistemic_apr", {}, {});
  }

  const bool evidential = id_preds[0].alpha.has_value();
  both("alpha0_mean", opt_mean(id.a0), opt_mean(ood.a0));
  both("alpha0_ratio", evidential ? Opt{alpha0_ratio(pooled)} : Opt{}, {});
  static const std::array<const char*, 3> concept_names{"agent", "map", "sc"};
  for (std::size_t c = 0; c < 3; ++c)
    both(std::string("alpha0_") + concept_names[c], opt_mean(id.concept_a0[c]),
         opt_mean(ood.concept_a0[c]));
  both("categorical_entropy_mean", mean(id.cat_entropy), mean(ood.cat_entropy));
  both("dirichlet_entropy_mean", opt_mean(id.dir_entropy), opt_mean(ood.dir_entropy));

  add_histogram(r, "categorical_entropy", id.cat_entropy, ood.cat_entropy, 0.0,
                std::log(double(anchors.size())));
  if (evidential) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* v : {&id.dir_entropy, &ood.dir_entropy})
      for (double x : *v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    add_histogram(r, "dirichlet_entropy", id.dir_entropy, ood.dir_entropy, lo, hi);
  }
  return r;
}

void write_csv(const EvalReport& report, std::ostream& out) {
  for (const auto& [k, v] : report.header) out << "# " << k << "=" << v << "\n";
  out << "name,id_value,ood_value\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_value(*v) : std::string("--"); };
  for (const ReportRow& r : report.rows)
    out << r.name << "," << cell(r.id_value) << "," << cell(r.ood_value) << "\n";
}

EvalReport read_csv(std::istream& in) {
  EvalReport r;
  std::string line;
  bool header_seen = false;
  auto parse = [](const std::string& s) -> std::optional<double> {
    if (s == "--") return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw ValidationError("report: bad number '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      throw ValidationError("report: bad number '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ValidationError("report: bad header line");
      r.header.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
      continue;
    }
    if (!header_seen) {
      if (line != "name,id_value,ood_value") throw ValidationError("report: missing column header");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string name, a, b;
    if (!std::getline(ss, name, ',') || !std::getline(ss, a, ',') || !std::getline(ss, b))
      throw ValidationError("report: malformed row '" + line + "'");
    r.rows.push_back({name, parse(a), parse(b)});
  }
  if (!header_seen) throw ValidationError("report: empty file");
  return r;
}

}  // namespace isap::metrics
