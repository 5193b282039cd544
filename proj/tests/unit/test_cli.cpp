#include <doctest.h>

#include <fstream>
#include <sstream>

#include "isap/cli.hpp"
#include "isap/errors.hpp"
#include "test_util.hpp"

#include "../common/checks.hpp"

using namespace isap;
using namespace isap::cli;
using isap::testing::slurp;
using isap::testing::svg_plot_count;

namespace {

int run_args(std::vector<std::string> args) {
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(int(argv.size()), argv.data());
}

ExperimentConfig tiny(const std::filesystem::path& out) {
  std::istringstream in(R"(
[experiment]
name = speed
scale = 0.004
seed = 3
[models]
kinds = covernet, postcovernet, isap, ensemble
ensemble_size = 2
[anchors]
count = 8
[model]
raster = 32
feature = 32
classifier_hidden = 32
[train]
epochs = 1
isap_epochs = 1
)");
  ExperimentConfig cfg = parse_config(in);
  cfg.out = out;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in("[experiment]\nname = map\nscale = 0.2\n[models]\nkinds = isap, covernet\nseeds = 0, 1, 2\n");
  const ExperimentConfig c = parse_config(in);
  CHECK(c.data.experiment == scene::Experiment::map);
  CHECK(c.data.scale == 0.2);
  CHECK(c.models == std::vector<model::ModelKind>{model::ModelKind::isap, model::ModelKind::covernet});
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(train_config_for(c, model::ModelKind::isap, 0).epochs == 50);
  CHECK(train_config_for(c, model::ModelKind::isap, 0).select_best);
  CHECK(train_config_for(default_config(scene::Experiment::speed), model::ModelKind::isap, 0).epochs == 25);
  CHECK_FALSE(train_config_for(default_config(scene::Experiment::speed), model::ModelKind::isap, 0).select_best);
  CHECK(train_config_for(c, model::ModelKind::covernet, 0).select_best);

  for (const char* bad : {"[experiment]\ncolour = red\n", "[nonsense]\na = 1\n", "[train]\nlr = fast\n",
                          "[anchors]\ncount = -3\n", "[models]\nkinds = resnet\n", "[models]\nensemble_size = 1\n",
                          "stray = 1\n"}) {
    std::istringstream b(bad);
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_config(b), ValidationError);
  }
}

TEST_CASE("config echo is complete and stable") {
  const auto e = echo(default_config(scene::Experiment::speed));
  for (const char* key : {"experiment.name", "experiment.scale", "experiment.seed", "models.kinds", "anchors.count",
                          "model.latent", "model.flow_layers", "train.lr", "train.lambda_sc", "train.kl_scale",
                          "train.isap_epochs"})
    CHECK_NOTHROW(io::lookup(e, key));
  CHECK(e == echo(default_config(scene::Experiment::speed)));
  auto other = default_config(scene::Experiment::speed);
  other.out = "elsewhere";
  CHECK(echo(other) == e);
}

TEST_CASE("svg output is valid XML with one plot") {
  std::vector<Series> s{{"ID <a&b>", "#123456", {{1, 10}, {2, 100}, {3, 1000}}}, {"OOD", "#ff0000", {{4, 5}}}};
  CHECK(svg_plot_count(scatter_svg("t", "x", "y", s, true, false)) == 1);
  CHECK(svg_plot_count(scatter_svg("empty", "x", "y", {}, false, true)) == 1);
  std::vector<HistogramSeries> h{{"ID", "#00f", {1, 2, 3, 0}}, {"OOD", "#f00", {0, 0, 5, 5}}};
  CHECK(svg_plot_count(histogram_svg("h", "entropy", -2, 3, h)) == 1);
}

TEST_CASE("exit codes") {
  TempDir dir;
  CHECK(run_args({"isap", "--help"}) == 0);
  CHECK(run_args({"isap"}) == 1);
  CHECK(run_args({"isap", "train", "--bogus"}) == 1);
  CHECK(run_args({"isap", "train", "--out", dir.path.string()}) == 1);  // no dataset yet
  CHECK(run_args({"isap", "gen-data", "--experiment", "moon"}) == 1);
  CHECK(run_args({"isap", "gen-data", "--scale", "0.002", "--out", dir.path.string()}) == 0);
  CHECK(run_args({"isap", "gen-data", "--scale", "0.002", "--out", dir.path.string()}) == 1);  // exists
  CHECK(run_args({"isap", "gen-data", "--scale", "0.002", "--out", dir.path.string(), "--force"}) == 0);
  CHECK(run_args({"isap", "fit-anchors", "--scale", "0.003", "--out", dir.path.string()}) == 1);  // config mismatch
}

TEST_CASE("pipeline: provenance, determinism, prior-collapsed report") {
  TempDir dir;
  const ExperimentConfig cfg = tiny(dir.path);
  std::ostringstream log;
  CommandOptions opt;
  cmd_gen_data(cfg, opt, log);
  CHECK(log.str().find("train") != std::string::npos);
  cmd_fit_anchors(cfg, opt, log);
  cmd_train(cfg, opt, log);
  cmd_eval(cfg, opt, log);
  cmd_report(cfg, opt, log);

  const auto report = report_path(cfg, model::ModelKind::isap, 0);
  const std::string first = slurp(report);
  CHECK(first.find("# input.dataset_hash=") != std::string::npos);
  CHECK(first.find("# input.anchor_hash=") != std::string::npos);
  CHECK(first.find("# input.checkpoint_hash=") != std::string::npos);
  CHECK(first.find("# experiment.scale=0.004") != std::string::npos);
  const std::string table = slurp(cfg.out / "report" / "table.csv");
  CHECK(table.find("ood_epistemic_auroc,isap_seed0") != std::string::npos);
  CHECK(svg_plot_count(slurp(cfg.out / "report" / "fig_entropy.svg")) == 1);
  CHECK(svg_plot_count(slurp(cfg.out / "report" / "fig_alpha0_speed.svg")) == 1);

  cmd_eval(cfg, opt, log);
  CHECK(slurp(report) == first);

  // Overwrite the ISAP checkpoint with one whose flows cannot produce evidence.
  auto ck = model::load_checkpoint(checkpoint_path(cfg, model::ModelKind::isap, 0));
  for (flows::FlowBank* b : ck.members[0]->flow_banks()) b->norm().gamma().value.fill(1e6);
  model::save_checkpoint(ck, checkpoint_path(cfg, model::ModelKind::isap, 0));
  CommandOptions only_isap;
  only_isap.model = model::ModelKind::isap;
  cmd_eval(cfg, only_isap, log);
  std::ifstream in(report);
  const auto r = metrics::read_csv(in);
  CHECK(r.id("alpha0_mean") == 8.0);
  CHECK(r.ood("alpha0_mean") == 8.0);
  CHECK(r.id("alpha0_ratio") == 1.0);

  // a training run on a different dataset is refused at evaluation
  ExperimentConfig moved = cfg;
  moved.data.seed = 4;
  CHECK_THROWS_AS(cmd_eval(moved, opt, log), ValidationError);
}
