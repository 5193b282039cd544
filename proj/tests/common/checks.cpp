#include "checks.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "isap/dataset.hpp"
#include "isap/diff/grad_check.hpp"
#include "isap/diff/nn.hpp"
#include "isap/diff/ops.hpp"
#include "isap/evidential.hpp"
#include "isap/model.hpp"

namespace isap::testing {

using namespace isap::diff;

Tensor random_tensor(Rng& rng, Shape s, double lo, double hi) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Var contract(Graph& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, g.constant(random_tensor(rng, y.shape()))));
}

std::vector<OpCase> op_cases() {
  auto pos = [](Shape s) { return [s](Rng& r) { return random_tensor(r, s, 0.3, 2.5); }; };
  auto any = [](Shape s) { return [s](Rng& r) { return random_tensor(r, s); }; };
  auto away = [](Shape s) {
    return [s](Rng& r) {
      Tensor t = random_tensor(r, s);
      for (double& v : t.data()) v += v < 0 ? -0.1 : 0.1;
      return t;
    };
  };
  Rng crng(11);
  const Tensor cb = random_tensor(crng, {3, 4});
  const Tensor cd = random_tensor(crng, {4}, 0.5, 1.5);
  const Tensor cw = random_tensor(crng, {4, 2});
  const Tensor cbias = random_tensor(crng, {2});
  const Tensor kernel = random_tensor(crng, {2, 2, 3, 3});
  const Tensor kbias = random_tensor(crng, {2});
  const Tensor bound_t = Tensor(Shape{4}, 0.2);
  const Tensor bn_input = random_tensor(crng, {5, 4});

  return {
      {"add", any({3, 4}), [=](Graph& g, Var x) { return add(x, g.constant(cd)); }},
      {"add_lhs_broadcast", any({4}), [=](Graph& g, Var x) { return add(x, g.constant(cb)); }},
      {"sub", any({3, 4}), [=](Graph& g, Var x) { return sub(g.constant(cb), x); }},
      {"mul", any({3, 4}), [=](Graph& g, Var x) { return mul(x, x * g.constant(cd)); }},
      {"div_num", any({3, 4}), [=](Graph& g, Var x) { return div(x, g.constant(cd)); }},
      {"div_den", pos({3, 4}), [=](Graph& g, Var x) { return div(g.constant(cb), x); }},
      {"scalar_forms", any({3, 4}), [](Graph&, Var x) { return reciprocal(add(scale(neg(x), 0.5), 3.0)); }},
      {"matmul_lhs", any({3, 4}), [=](Graph& g, Var x) { return matmul(x, g.constant(cw)); }},
      {"matmul_rhs", any({4, 2}), [=](Graph& g, Var x) { return matmul(g.constant(cb), x); }},
      {"affine_x", any({3, 4}), [=](Graph& g, Var x) { return affine(x, g.constant(cw), g.constant(cbias)); }},
      {"affine_w", any({4, 2}), [=](Graph& g, Var x) { return affine(g.constant(cb), x, g.constant(cbias)); }},
      {"affine_b", any({2}), [=](Graph& g, Var x) { return affine(g.constant(cb), g.constant(cw), x); }},
      {"relu", away({3, 4}), [](Graph&, Var x) { return relu(x); }},
      {"tanh", any({3, 4}), [](Graph&, Var x) { return tanh(x); }},
      {"sigmoid", any({3, 4}), [](Graph&, Var x) { return sigmoid(x); }},
      {"softplus", any({3, 4}), [](Graph&, Var x) { return softplus(x); }},
      {"exp", any({3, 4}), [](Graph&, Var x) { return exp(x); }},
      {"log", pos({3, 4}), [](Graph&, Var x) { return log(x); }},
      {"square", any({3, 4}), [](Graph&, Var x) { return square(x); }},
      {"sqrt", pos({3, 4}), [](Graph&, Var x) { return sqrt(x); }},
      {"digamma", pos({3, 4}), [](Graph&, Var x) { return digamma(x); }},
      {"lgamma", pos({3, 4}), [](Graph&, Var x) { return lgamma(x); }},
      {"minimum", away({3, 4}), [=](Graph&, Var x) { return minimum(x, bound_t); }},
      {"sum", any({3, 4}), [](Graph&, Var x) { return sum(x); }},
      {"sum_axis", any({3, 4}), [](Graph&, Var x) { return sum(x, 1, true); }},
      {"mean", any({3, 4}), [](Graph&, Var x) { return mean(x); }},
      {"mean_axis", any({3, 4}), [](Graph&, Var x) { return mean(x, 0); }},
      {"norm", away({3, 4}), [](Graph&, Var x) { return norm(x, 1); }},
      {"logsumexp", any({3, 4}), [](Graph&, Var x) { return logsumexp(x, 1); }},
      {"log_softmax", any({3, 4}), [](Graph&, Var x) { return log_softmax(x, 1); }},
      {"softmax", any({3, 4}), [](Graph&, Var x) { return softmax(x, 0); }},
      {"reshape", any({3, 4}), [](Graph&, Var x) { return square(reshape(x, {2, 6})); }},
      {"concat", any({3, 4}), [=](Graph& g, Var x) { return concat({x, g.constant(cb), square(x)}, 1); }},
      {"index_select", any({3, 4}), [](Graph&, Var x) { return square(index_select(x, 1, {3, 0, 3})); }},
      {"pick", any({3, 4}), [](Graph&, Var x) {
         static const std::vector<std::size_t> idx{2, 0, 3};
         return square(pick(x, idx));
       }},
      {"batch_norm_train", any({5, 4}), [=](Graph& g, Var x) {
         static BatchNormStats st(4);
         return batch_norm(x, g.constant(cd), g.constant(Tensor(Shape{4}, 0.1)), st, true);
       }},
      {"batch_norm_train_gamma", pos({4}), [=](Graph& g, Var x) {
         static BatchNormStats st(4);
         return batch_norm(g.constant(bn_input), x, g.constant(cd), st, true);
       }},
      {"batch_norm_eval", any({5, 4}), [=](Graph& g, Var x) {
         BatchNormStats st(4);
         st.running_mean = cd;
         st.running_var = Tensor(Shape{4}, 2.0);
         return batch_norm(x, g.constant(cd), g.constant(cd), st, false);
       }},
      {"conv2d_x", any({1, 2, 5, 5}), [=](Graph& g, Var x) { return conv2d(x, g.constant(kernel), g.constant(kbias), 2, 1); }},
      {"conv2d_w", any({2, 2, 3, 3}), [=](Graph& g, Var x) {
         Rng r(5);
         return conv2d(g.constant(random_tensor(r, {2, 2, 6, 6})), x, g.constant(kbias), 1, 0);
       }},
      {"conv_t_x", any({1, 2, 3, 3}), [=](Graph& g, Var x) { return conv_transpose2d(x, g.constant(kernel), g.constant(kbias), 2, 1); }},
      {"conv_t_w", any({2, 2, 3, 3}), [=](Graph& g, Var x) {
         Rng r(6);
         return conv_transpose2d(g.constant(random_tensor(r, {1, 2, 3, 3})), x, g.constant(kbias), 2, 0);
       }},
  };
}

double op_case_error(const OpCase& c, Rng& rng, int trials) {
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const Tensor x = c.input(rng);
    worst = std::max(worst, grad_check([&](Graph& g, Var v) { return contract(g, c.f(g, v), 99); }, x));
  }
  return worst;
}

double isap_loss_grad_error(std::uint64_t seed, std::size_t samples, std::size_t per_tensor) {
  const auto scenes = scene::build_dataset({.scale = 0.002, .seed = seed});
  const auto train = scene::select(scenes, scene::Split::train);
  std::vector<anchors::FutureTrack> futures;
  for (std::size_t i : train) futures.push_back(scenes[i].future);
  const std::size_t classes = 8;
  const anchors::AnchorSet set = anchors::fit_covering(futures, classes, seed);
  std::vector<std::size_t> labels;
  for (const auto& s : scenes) labels.push_back(anchors::label(s.future, set));

  model::ModelConfig cfg;
  cfg.kind = model::ModelKind::isap;
  cfg.raster = 16;
  cfg.classes = classes;
  cfg.feature = 16;
  cfg.classifier_hidden = 16;
  model::Model m(cfg, seed);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i : train) ++counts[labels[i]];
  m.set_budget(evidential::certainty_budget(counts, evidential::kDefaultBudget));
  const evidential::LossConfig loss;

  Rng rng(derive_seed(seed, 0x6C));
  // Zero-initialized biases over an empty raster put pre-activations exactly
  // on relu kinks; probe at a generic point instead.
  for (Parameter* p : m.parameters())
    for (double& v : p->value.data()) v += rng.normal(0.0, 0.02);
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t n = 0; n < samples; ++n) {
    const std::size_t pick = train[std::size_t(rng.below(train.size()))];
    const std::vector<std::size_t> idx{pick}, lab{labels[pick]};
    const model::Batch batch = model::make_batch(scenes, idx, lab, cfg.raster);
    auto value = [&] {
      Graph g(false);
      return model::compute_loss(g, m, m.forward(g, batch, false), batch, loss).total.item();
    };
    ParamList params = m.parameters();
    for (Parameter* p : params) p->zero_grad();
    {
      Graph g;
      g.backward(model::compute_loss(g, m, m.forward(g, batch, false), batch, loss).total);
    }
    for (Parameter* p : params) {
      for (std::size_t t = 0; t < per_tensor; ++t) {
        const std::size_t i = std::size_t(rng.below(p->value.size()));
        const double orig = p->value[i];
        p->value[i] = orig + h;
        const double up = value();
        p->value[i] = orig - h;
        const double down = value();
        p->value[i] = orig;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(p->grad[i] - fd) / std::max(1.0, std::abs(fd)));
      }
    }
  }
  return worst;
}

void randomize(flows::RadialFlowStack& s, Rng& rng, double center_sd) {
  for (std::size_t k = 0; k < s.layers(); ++k) {
    for (double& v : s.center(k).value.data()) v = rng.normal(0, center_sd);
    for (std::size_t c = 0; c < s.classes(); ++c) {
      const double a = rng.uniform(0.2, 2.0);
      const double b = rng.uniform(-a * 0.95, 1.5);
      s.alpha_raw(k).value[c] = flows::alpha_raw_for(a);
      s.beta_raw(k).value[c] = flows::beta_raw_for(a, b);
    }
  }
}

Tensor points(const std::vector<std::vector<double>>& rows) {
  Tensor t(Shape{rows.size(), rows[0].size()});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[0].size(); ++c) t.at(r, c) = rows[r][c];
  return t;
}

std::vector<double> stack_density(flows::RadialFlowStack& s, const Tensor& z) {
  Graph g(false);
  const Var v = s.log_density(g, g.constant(z));
  return {v.value().data().begin(), v.value().data().end()};
}

std::pair<std::vector<double>, double> forward_map(flows::RadialFlowStack& s, const std::vector<double>& z) {
  Graph g(false);
  Var cur = g.constant(Tensor(Shape{1, z.size()}, z));
  Var total = g.constant(Tensor(Shape{1}, 0.0));
  for (std::size_t k = 0; k < s.layers(); ++k) {
    const Tensor& c = s.center(k).value;
    Var z0 = g.constant(Tensor(Shape{1, z.size()}, std::vector<double>(c.ptr(), c.ptr() + z.size())));
    auto out = flows::radial_apply(cur, z0, g.constant(Tensor(Shape{1}, {s.alpha_raw(k).value[0]})),
                                   g.constant(Tensor(Shape{1}, {s.beta_raw(k).value[0]})));
    cur = out.y;
    total = add(total, out.logdet);
  }
  return {std::vector<double>(cur.value().data().begin(), cur.value().data().end()), total.item()};
}

double log_abs_det(std::vector<std::vector<double>> m) {
  const std::size_t n = m.size();
  double ld = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t p = i;
    for (std::size_t r = i + 1; r < n; ++r)
      if (std::abs(m[r][i]) > std::abs(m[p][i])) p = r;
    std::swap(m[i], m[p]);
    ld += std::log(std::abs(m[i][i]));
    for (std::size_t r = i + 1; r < n; ++r) {
      const double f = m[r][i] / m[i][i];
      for (std::size_t c = i; c < n; ++c) m[r][c] -= f * m[i][c];
    }
  }
  return ld;
}

double numerical_logdet(flows::RadialFlowStack& s, const std::vector<double>& z) {
  const std::size_t d = z.size();
  const double h = 1e-5;
  std::vector<std::vector<double>> jac(d, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    auto zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const auto yp = forward_map(s, zp).first, ym = forward_map(s, zm).first;
    for (std::size_t i = 0; i < d; ++i) jac[i][j] = (yp[i] - ym[i]) / (2 * h);
  }
  return log_abs_det(jac);
}

double flow_mass(flows::RadialFlowStack& s, double step) {
  const std::size_t n = std::size_t(std::lround(16.0 / step));
  Tensor grid(Shape{n * n, 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      grid.at(i * n + j, 0) = -8 + (double(i) + 0.5) * step;
      grid.at(i * n + j, 1) = -8 + (double(j) + 0.5) * step;
    }
  double mass = 0;
  for (double ld : stack_density(s, grid)) mass += std::exp(ld) * step * step;
  return mass;
}

anchors::FutureTrack random_track(Rng& rng) {
  anchors::FutureTrack t;
  for (auto& p : t) p = {rng.normal(0, 3), rng.normal(5, 5)};
  return t;
}

anchors::AnchorSet random_anchors(Rng& rng, std::size_t c) {
  anchors::AnchorSet s;
  for (std::size_t i = 0; i < c; ++i) s.anchors.push_back(random_track(rng));
  return s;
}

std::vector<double> random_probs(Rng& rng, std::size_t c, bool ties) {
  std::vector<double> p(c);
  for (double& v : p) v = ties ? double(rng.below(4)) + 0.5 : rng.uniform(0.01, 1);
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= s;
  return p;
}

double oracle_ade(const anchors::FutureTrack& a, const anchors::FutureTrack& b) {
  double s = 0;
  for (std::size_t t = 0; t < a.size(); ++t) s += std::hypot(a[t][0] - b[t][0], a[t][1] - b[t][1]);
  return s / double(a.size());
}

double oracle_min_ade(const std::vector<double>& p, const anchors::AnchorSet& s, const anchors::FutureTrack& gt,
                      std::size_t k) {
  std::vector<double> all;
  for (const auto& a : s.anchors) all.push_back(oracle_ade(a, gt));
  // rank of class c = number of classes strictly ahead of it
  double best = 1e300;
  for (std::size_t c = 0; c < p.size(); ++c) {
    std::size_t ahead = 0;
    for (std::size_t o = 0; o < p.size(); ++o)
      if (p[o] > p[c] || (p[o] == p[c] && o < c)) ++ahead;
    if (ahead < k) best = std::min(best, all[c]);
  }
  return best;
}

double oracle_auroc(const std::vector<metrics::ScoredSample>& s) {
  double num = 0, pairs = 0;
  for (const auto& a : s)
    for (const auto& b : s)
      if (a.label == 1 && b.label == 0) {
        pairs += 1;
        num += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
      }
  return num / pairs;
}

double oracle_apr(const std::vector<metrics::ScoredSample>& s) {
  double total = 0;
  std::size_t npos = 0;
  for (const auto& a : s) {
    if (a.label != 1) continue;
    ++npos;
    double tp = 0, all = 0;
    for (const auto& b : s)
      if (b.score >= a.score) {
        all += 1;
        tp += b.label;
      }
    total += tp / all;
  }
  return total / double(npos);
}

double oracle_ece(const std::vector<metrics::Confidence>& c, std::size_t bins) {
  double e = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = double(b) / double(bins), hi = double(b + 1) / double(bins);
    double n = 0, acc = 0, conf = 0;
    for (const auto& x : c)
      if ((x.confidence > lo || (b == 0 && x.confidence >= 0)) && x.confidence <= hi) {
        n += 1;
        acc += x.correct;
        conf += x.confidence;
      }
    if (n > 0) e += n / double(c.size()) * std::abs(acc / n - conf / n);
  }
  return e;
}

std::vector<metrics::ScoredSample> random_scored(Rng& rng, std::size_t n, bool ties) {
  std::vector<metrics::ScoredSample> s(n);
  for (auto& x : s) {
    x.label = int(rng.below(2));
    x.score = ties ? double(rng.below(6)) : rng.normal(x.label * 0.8, 1);
  }
  s[0].label = 1;
  s[1].label = 0;
  return s;
}

double oracle_fde(const std::vector<double>& p, const anchors::AnchorSet& s,
                  const anchors::FutureTrack& gt) {
  std::size_t top = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[top]) top = i;
  return std::hypot(s.anchors[top].back()[0] - gt.back()[0], s.anchors[top].back()[1] - gt.back()[1]);
}

double oracle_brier(const std::vector<double>& p, std::size_t label) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - (i == label ? 1.0 : 0.0);
    s += d * d;
  }
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

namespace {
std::size_t count_plots(const boost::property_tree::ptree& t) {
  std::size_t n = 0;
  for (const auto& [k, v] : t) {
    if (k == "g" && v.get<std::string>("<xmlattr>.class", "") == "plot") ++n;
    n += count_plots(v);
  }
  return n;
}
}  // namespace

std::size_t svg_plot_count(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree t;
  boost::property_tree::read_xml(in, t);
  return count_plots(t.get_child("svg"));
}

}  // namespace isap::testing
