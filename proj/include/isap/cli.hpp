#pragma once

// End-to-end experiment orchestration behind the `isap` command.
//
// Artifact layout under the output directory:
//   data/dataset.ini(.bin)          gen-data
//   anchors/anchors.ini(.bin)       fit-anchors
//   models/<kind>_seed<N>.ini(.bin) train
//   eval/<kind>_seed<N>.csv         eval: EvalReport
//   eval/<kind>_seed<N>.samples.csv eval: per-sample scores for figures
//   report/table.csv, table.txt, fig_alpha0_speed.svg, fig_entropy.svg

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "isap/container.hpp"
#include "isap/dataset.hpp"
#include "isap/metrics.hpp"
#include "isap/model.hpp"

namespace isap::cli {

struct ExperimentConfig {
  scene::DatasetConfig data;
  std::vector<model::ModelKind> models{model::ModelKind::covernet, model::ModelKind::postcovernet,
                                       model::ModelKind::isap, model::ModelKind::ensemble};
  std::vector<std::uint64_t> seeds{0};
  std::size_t anchor_count = anchors::kDefaultAnchors;
  std::uint64_t anchor_seed = 0;
  model::ModelConfig net;
  model::TrainConfig train;
  /// ISAP epochs; 0 = 25 on the speed split, 50 on the map split.
  std::size_t isap_epochs = 0;
  std::filesystem::path out = "runs";
};

/// Experiment defaults (map split: ISAP keeps the best validation ELBO).
ExperimentConfig default_config(scene::Experiment e);

/// key = value lines under [experiment], [models], [anchors], [model],
/// [train] sections. Unknown sections or keys are rejected.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Dataset settings under the experiment.* keys used in config files.
io::KeyValues data_echo(const scene::DatasetConfig& data);
/// Everything except the output location, in a fixed order.
io::KeyValues echo(const ExperimentConfig& cfg);

/// Training settings for one model kind under this experiment.
model::TrainConfig train_config_for(const ExperimentConfig& cfg, model::ModelKind kind,
                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Paths

std::filesystem::path dataset_path(const ExperimentConfig& cfg);
std::filesystem::path anchors_path(const ExperimentConfig& cfg);
std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, model::ModelKind kind,
                                      std::uint64_t seed);
std::filesystem::path report_path(const ExperimentConfig& cfg, model::ModelKind kind,
                                  std::uint64_t seed);
std::filesystem::path samples_path(const ExperimentConfig& cfg, model::ModelKind kind,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation

/// Labels every scene against the anchor set.
std::vector<std::size_t> label_scenes(const std::vector<scene::Scene>& scenes,
                                      const anchors::AnchorSet& anchors);

/// Eval-mode predictions for the given scenes.
std::vector<metrics::SamplePrediction> predict(model::Checkpoint& ckpt,
                                               const std::vector<scene::Scene>& scenes,
                                               std::span<const std::size_t> indices,
                                               const std::vector<std::size_t>& labels);

/// Predictions on test_id and test_ood plus the report built from them.
struct Evaluation {
  std::vector<metrics::SamplePrediction> id, ood;
  metrics::EvalReport report;
};

Evaluation evaluate(model::Checkpoint& ckpt, const std::vector<scene::Scene>& scenes,
                    const anchors::AnchorSet& anchors);

// ---------------------------------------------------------------------------
// Figures

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

/// Scatter of points with optional connecting line per series.
std::string scatter_svg(const std::string& title, const std::string& x_label,
                        const std::string& y_label, const std::vector<Series>& series,
                        bool log_y, bool lines);

struct HistogramSeries {
  std::string label;
  std::string color;
  std::vector<std::size_t> counts;
};

/// Overlaid step histograms sharing bin edges on [lo, hi], normalized to
/// densities so sets of different sizes compare.
std::string histogram_svg(const std::string& title, const std::string& x_label, double lo,
                          double hi, const std::vector<HistogramSeries>& series);

std::string escape_xml(std::string_view s);

// ---------------------------------------------------------------------------
// Commands. Each returns normally on success and throws ValidationError /
// NumericalError otherwise; run() maps those to exit codes 1 / 2.

struct CommandOptions {
  bool force = false;
  std::optional<model::ModelKind> model;  // restrict train/eval to one kind
  bool verbose = false;
};

void cmd_gen_data(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out);
void cmd_fit_anchors(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out);
void cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out);
void cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out);
void cmd_report(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, char** argv);

}  // namespace isap::cli
