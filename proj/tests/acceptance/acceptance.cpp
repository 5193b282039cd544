// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero unless every criterion passes.
//
//   isap_acceptance --work DIR [--scale 0.1] [--seeds 3] [--reuse]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "isap/cli.hpp"
#include "isap/diff/grad_check.hpp"
#include "isap/evidential.hpp"
#include "isap/flows.hpp"
#include "isap/metrics.hpp"

#include "../common/checks.hpp"

namespace fs = std::filesystem;
using namespace isap;
using namespace isap::testing;
using model::ModelKind;

namespace {

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, bool pass, const std::string& detail) {
  outcomes.push_back({id, pass, detail});
  std::cout << "criterion " << std::setw(2) << id << ": " << (pass ? "PASS" : "FAIL") << "  "
            << detail << std::endl;
}

std::string num(double v, int prec = 6) {
  std::ostringstream o;
  o << std::setprecision(prec) << v;
  return o.str();
}

double harmonic(std::size_t n) {
  double h = 0;
  for (std::size_t k = 1; k <= n; ++k) h += 1.0 / double(k);
  return h;
}

double wall_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Property criteria

void autodiff() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(12);
  double worst = 0;
  std::string worst_op;
  for (const OpCase& c : op_cases()) {
    const double e = op_case_error(c, rng, 100);
    if (e > worst) {
      worst = e;
      worst_op = c.name;
    }
  }
  const double loss = isap_loss_grad_error(7, 4, 3);
  const double secs = wall_seconds(t0);
  report(1, worst < 1e-5 && loss < 1e-5 && secs < 60,
         "ops max rel err " + num(worst, 3) + " (" + worst_op + "), ISAP loss " + num(loss, 3) +
             ", " + num(secs, 3) + " s");
}

void flow_normalization() {
  Rng rng(2024);
  flows::RadialFlowStack s("acceptance", 1, 2, 8, rng);
  randomize(s, rng);
  const double mass = flow_mass(s);
  double worst = 0;
  for (int p = 0; p < 100; ++p) {
    const std::vector<double> z{rng.normal(0, 2), rng.normal(0, 2)};
    worst = std::max(worst, std::abs(forward_map(s, z).second - numerical_logdet(s, z)));
  }
  report(2, mass >= 0.99 && mass <= 1.01 && worst < 1e-5,
         "mass " + num(mass, 8) + ", logdet max abs err " + num(worst, 3));
}

void evidential_identities() {
  using namespace evidential;
  const std::size_t c = 64;
  const double kl = kl_to_uniform(DirichletParams{std::vector<double>(c, 1.0)});
  const double ell = expected_loglik(DirichletParams{{1.0, 1.0}}, 0);
  const auto budget = certainty_budget(std::vector<std::size_t>(c, 3), kDefaultBudget);
  const auto collapsed = posterior(pseudo_counts(std::vector<double>(c, -1e4), budget));
  const bool ones = collapsed.alpha == std::vector<double>(c, 1.0);
  const double elbo = elbo_loss(aggregate(collapsed, collapsed, collapsed), 17, 1e-5);
  auto with_alpha0 = [&](double a0) {
    std::vector<double> a(c, 1.0);
    a[5] = a0 - double(c - 1);
    return DirichletParams{a};
  };
  const double agg = aggregate(with_alpha0(8137), with_alpha0(1060), with_alpha0(1883)).alpha0();
  const double elbo_err = std::abs(elbo - harmonic(c - 1));
  const double agg_err = std::abs(agg - 11080.0 / 3.0);
  report(3, kl == 0.0 && std::abs(ell + 1) < 1e-10 && ones && elbo_err < 1e-8 && agg_err < 1e-6,
         "KL " + num(kl) + ", E[log p] " + num(ell, 12) + ", collapse ELBO err " + num(elbo_err, 3) +
             ", aggregate alpha0 " + num(agg, 12));
}

void metric_oracles() {
  Rng rng(31);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 5 + rng.below(40);
    const auto set = random_anchors(rng, c);
    const auto p = random_probs(rng, c, t % 2 == 0);
    const auto gt = random_track(rng);
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, c})
      worst = std::max(worst, std::abs(metrics::min_ade_k(p, set, gt, k) - oracle_min_ade(p, set, gt, k)));
    worst = std::max(worst, std::abs(metrics::fde(p, set, gt) - oracle_fde(p, set, gt)));

    const auto s = random_scored(rng, 20 + rng.below(200), t % 3 == 0);
    worst = std::max(worst, std::abs(metrics::auroc(s) - oracle_auroc(s)));
    worst = std::max(worst, std::abs(metrics::apr(s) - oracle_apr(s)));

    std::vector<metrics::Confidence> conf(50 + rng.below(200));
    for (auto& x : conf) {
      x.confidence = t % 4 == 0 ? double(rng.below(11)) / 10 : rng.uniform();
      x.correct = rng.uniform() < x.confidence;
    }
    worst = std::max(worst, std::abs(metrics::ece(conf) - oracle_ece(conf, 10)));

    const auto q = random_probs(rng, c, false);
    const std::size_t y = rng.below(c);
    worst = std::max(worst, std::abs(metrics::brier(q, y) - oracle_brier(q, y)));
  }
  const double uniform = metrics::brier(std::vector<double>(64, 1.0 / 64), 0);
  report(4, worst < 1e-9 && std::abs(uniform - 0.984375) < 1e-12,
         "max abs err " + num(worst, 3) + ", uniform Brier " + num(uniform, 10));
}

// ---------------------------------------------------------------------------
// Pipeline

struct Run {
  cli::ExperimentConfig cfg;
  std::map<std::pair<ModelKind, std::uint64_t>, double> cpu_seconds;

  metrics::EvalReport eval(ModelKind k, std::uint64_t seed) const {
    std::ifstream in(cli::report_path(cfg, k, seed));
    return metrics::read_csv(in);
  }
};

/// gen-data, fit-anchors, then train / eval / report for each model kind.
Run pipeline(cli::ExperimentConfig cfg, bool reuse, std::ostream& log) {
  Run run{cfg, {}};
  cli::CommandOptions opt;
  opt.force = true;
  const bool have_data = fs::exists(cli::dataset_path(cfg)) && fs::exists(cli::anchors_path(cfg));
  if (!(reuse && have_data)) {
    cli::cmd_gen_data(cfg, opt, log);
    cli::cmd_fit_anchors(cfg, opt, log);
  }
  for (ModelKind k : cfg.models) {
    opt.model = k;
    for (std::uint64_t s : cfg.seeds) {
      if (reuse && fs::exists(cli::checkpoint_path(cfg, k, s))) continue;
      cli::ExperimentConfig one = cfg;
      one.seeds = {s};
      const std::clock_t c0 = std::clock();
      cli::cmd_train(one, opt, log);
      run.cpu_seconds[{k, s}] = double(std::clock() - c0) / CLOCKS_PER_SEC;
    }
    cli::cmd_eval(cfg, opt, log);
  }
  opt.model.reset();
  cli::cmd_report(cfg, opt, log);
  return run;
}

/// Evaluates an existing checkpoint on another dataset whose ID splits match
/// the one it was trained on.
metrics::EvalReport evaluate_on(const cli::ExperimentConfig& trained, ModelKind k, std::uint64_t seed,
                                const std::vector<scene::Scene>& scenes) {
  model::Checkpoint ck = model::load_checkpoint(cli::checkpoint_path(trained, k, seed));
  const anchors::AnchorSet set = anchors::load(cli::anchors_path(trained));
  return cli::evaluate(ck, scenes, set).report;
}

bool same_id_splits(const std::vector<scene::Scene>& a, const std::vector<scene::Scene>& b) {
  for (scene::Split sp : {scene::Split::train, scene::Split::val_id, scene::Split::test_id}) {
    const auto ia = scene::select(a, sp), ib = scene::select(b, sp);
    if (ia.size() != ib.size()) return false;
    for (std::size_t i = 0; i < ia.size(); ++i)
      if (!(a[ia[i]] == b[ib[i]])) return false;
  }
  return true;
}

bool svg_valid(const fs::path& p) {
  try {
    return fs::exists(p) && svg_plot_count(slurp(p)) == 1;
  } catch (const std::exception&) {
    return false;
  }
}

std::string seed_stem(ModelKind k, std::uint64_t s) {
  return std::string(model::to_string(k)) + "_seed" + std::to_string(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISAP acceptance run"};
  fs::path work;
  double scale = 0.1;
  std::size_t n_seeds = 3;
  bool reuse = false;
  app.add_option("--work", work, "scratch directory for pipeline artifacts")->required();
  app.add_option("--scale", scale, "dataset scale for the speed and map experiments");
  app.add_option("--seeds", n_seeds, "speed-split seeds")->check(CLI::Range(1, 10));
  app.add_flag("--reuse", reuse, "keep datasets and checkpoints already in --work");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  std::ofstream log(work / "pipeline.log");
  const auto t_all = std::chrono::steady_clock::now();

  autodiff();
  flow_normalization();
  evidential_identities();
  metric_oracles();

  try {
    // Speed split.
    cli::ExperimentConfig speed = cli::default_config(scene::Experiment::speed);
    speed.data.scale = scale;
    speed.models = {ModelKind::covernet, ModelKind::postcovernet, ModelKind::isap};
    speed.seeds.clear();
    for (std::size_t s = 0; s < n_seeds; ++s) speed.seeds.push_back(s);
    speed.out = work / "speed";
    const Run sr = pipeline(speed, reuse, log);

    // Map split with the default leak fraction, plus leak 0 on the same seed.
    cli::ExperimentConfig map = cli::default_config(scene::Experiment::map);
    map.data.scale = scale;
    map.models = {ModelKind::covernet, ModelKind::isap};
    map.seeds = {0};
    map.out = work / "map";
    const Run mr = pipeline(map, reuse, log);

    scene::DatasetConfig no_leak = map.data;
    no_leak.leak_fraction = 0.0;
    const auto leak_scenes = scene::load_dataset(cli::dataset_path(map)).scenes;
    const auto clean_scenes = scene::build_dataset(no_leak);
    const bool reusable = same_id_splits(leak_scenes, clean_scenes);
    const metrics::EvalReport clean = evaluate_on(map, ModelKind::isap, 0, clean_scenes);

    // 5: speed split.
    {
      const auto isap0 = sr.eval(ModelKind::isap, 0);
      const double auc = isap0.id("ood_epistemic_auroc"), ratio = isap0.id("alpha0_ratio");
      std::size_t wins = 0;
      std::string per_seed;
      for (std::uint64_t s : speed.seeds) {
        const double a = sr.eval(ModelKind::isap, s).id("ood_epistemic_auroc");
        const double b = sr.eval(ModelKind::postcovernet, s).id("ood_epistemic_auroc");
        if (a >= b) ++wins;
        per_seed += " s" + std::to_string(s) + ":" + num(a, 4) + "/" + num(b, 4);
      }
      double max_cpu = 0;
      for (const auto& [key, secs] : sr.cpu_seconds) max_cpu = std::max(max_cpu, secs);
      const std::size_t need = std::min<std::size_t>(2, speed.seeds.size());
      report(5, auc >= 0.80 && ratio <= 0.5 && wins >= need && max_cpu <= 1800,
             "ISAP AUROC " + num(auc, 4) + ", alpha0 ratio " + num(ratio, 4) + ", ISAP>=PCN in " +
                 std::to_string(wins) + "/" + std::to_string(speed.seeds.size()) + " (ISAP/PCN" +
                 per_seed + "), max train CPU " + num(max_cpu, 4) + " s");
    }

    // 6: map split.
    {
      const auto isap0 = mr.eval(ModelKind::isap, 0);
      const double auc = isap0.id("ood_epistemic_auroc"), ratio = isap0.id("alpha0_ratio");
      const double auc0 = clean.id("ood_epistemic_auroc");
      report(6, auc >= 0.70 && ratio <= 0.6 && auc0 > auc && reusable,
             "ISAP AUROC " + num(auc, 4) + ", alpha0 ratio " + num(ratio, 4) + ", leak 0 AUROC " +
                 num(auc0, 4) + (reusable ? "" : " (ID splits differ; model reuse invalid)"));
    }

    // 7: baseline errors grow out of distribution on both splits.
    {
      bool ok = true;
      std::string d;
      for (const Run* r : {&sr, &mr}) {
        const auto b = r->eval(ModelKind::covernet, 0);
        const bool split_ok = b.ood("minADE_1") > b.id("minADE_1") && b.ood("FDE") > b.id("FDE");
        ok = ok && split_ok;
        d += std::string(r == &sr ? "speed" : "map") + " minADE_1 " + num(b.id("minADE_1"), 4) + "->" +
             num(b.ood("minADE_1"), 4) + " FDE " + num(b.id("FDE"), 4) + "->" + num(b.ood("FDE"), 4) + "; ";
      }
      report(7, ok, d);
    }

    // 8: ISAP minADE_5 near the baseline on ID test data.
    {
      bool ok = true;
      std::string d;
      for (const Run* r : {&sr, &mr}) {
        const double i5 = r->eval(ModelKind::isap, 0).id("minADE_5");
        const double b5 = r->eval(ModelKind::covernet, 0).id("minADE_5");
        const double gap = std::abs(i5 - b5) / b5;
        ok = ok && gap <= 0.25;
        d += std::string(r == &sr ? "speed" : "map") + " ISAP " + num(i5, 4) + " vs baseline " +
             num(b5, 4) + " (" + num(100 * gap, 3) + "%); ";
      }
      report(8, ok, d);
    }

    // 9: Dirichlet entropy higher out of distribution; figure valid.
    {
      bool ok = true;
      std::string d;
      for (const Run* r : {&sr, &mr}) {
        const auto e = r->eval(ModelKind::isap, 0);
        const double id = e.id("dirichlet_entropy_mean"), ood = e.ood("dirichlet_entropy_mean");
        const bool svg = svg_valid(r->cfg.out / "report" / "fig_entropy.svg");
        ok = ok && ood > id && svg;
        d += std::string(r == &sr ? "speed" : "map") + " ID " + num(id, 5) + " OOD " + num(ood, 5) +
             (svg ? " svg ok; " : " svg INVALID; ");
      }
      report(9, ok, d);
    }
  } catch (const std::exception& e) {
    for (int id = 5; id <= 9; ++id) report(id, false, std::string("pipeline error: ") + e.what());
  }

  // 10: two identical runs of the whole pipeline.
  try {
    std::vector<std::string> digests;
    std::size_t compared = 0;
    bool same = true;
    std::vector<fs::path> roots{work / "determinism_a", work / "determinism_b"};
    for (const fs::path& root : roots) {
      fs::remove_all(root);
      cli::ExperimentConfig cfg = cli::default_config(scene::Experiment::speed);
      cfg.data.scale = 0.01;
      cfg.anchor_count = 16;
      cfg.net.raster = 32;
      cfg.net.ensemble_size = 2;
      cfg.train.epochs = 2;
      cfg.isap_epochs = 2;
      cfg.out = root;
      pipeline(cfg, false, log);
    }
    for (ModelKind k : {ModelKind::covernet, ModelKind::postcovernet, ModelKind::isap, ModelKind::ensemble}) {
      const fs::path rel = fs::path("eval") / (seed_stem(k, 0) + ".csv");
      const std::string a = slurp(roots[0] / rel), b = slurp(roots[1] / rel);
      same = same && !a.empty() && a == b;
      ++compared;
    }
    report(10, same, std::to_string(compared) + " EvalReport CSVs compared byte-for-byte");
  } catch (const std::exception& e) {
    report(10, false, std::string("pipeline error: ") + e.what());
  }

  const bool all = std::all_of(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return o.pass; });
  std::cout << "acceptance: " << (all ? "PASS" : "FAIL") << " ("
            << std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return o.pass; })
            << "/" << outcomes.size() << " criteria, " << num(wall_seconds(t_all), 5) << " s)" << std::endl;
  return all ? 0 : 1;
}
