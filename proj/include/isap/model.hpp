#pragma once

// The four systems compared in the experiments:
//   covernet      backbone -> classifier over the anchor set
//   postcovernet  backbone -> one latent -> one flow bank -> Dirichlet
//   isap          backbone -> agent / map / social heads -> three flow banks,
//                 aggregated Dirichlet, plus three reconstruction decoders
//   ensemble      N covernet members with independent seeds

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isap/anchors.hpp"
#include "isap/container.hpp"
#include "isap/diff/adam.hpp"
#include "isap/diff/nn.hpp"
#include "isap/evidential.hpp"
#include "isap/flows.hpp"
#include "isap/scene.hpp"

namespace isap::model {

using diff::Graph;
using diff::Tensor;
using diff::Var;

enum class ModelKind { covernet, postcovernet, isap, ensemble };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);
bool is_evidential(ModelKind k);

// ---------------------------------------------------------------------------
// Batches

/// Fixed input scales for [v, a, h].
inline constexpr std::array<double, 3> kStateScale{10.0, 3.0, 0.5};
/// Past waypoint scale for the agent reconstruction target.
inline constexpr double kPastScale = 10.0;
inline constexpr std::size_t kAgentTarget = 2 * scene::kPastLen + 3;

struct Batch {
  Tensor raster;        // [B, 3, H, W]
  Tensor state;         // [B, 3], scaled
  Tensor agent_target;  // [B, 13]: past / kPastScale, scaled state
  Tensor map_target;    // [B, 1, H, W] raster channel 0
  Tensor sc_target;     // [B, 1, H, W] raster channel 1
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

/// Rasterizes the selected scenes. labels[i] pairs with scenes[indices[i]].
Batch make_batch(const std::vector<scene::Scene>& scenes, std::span<const std::size_t> indices,
                 std::span<const std::size_t> labels, std::size_t raster_size);

// ---------------------------------------------------------------------------
// Networks

struct ModelConfig {
  ModelKind kind = ModelKind::isap;
  std::size_t raster = 64;       // multiple of 16
  std::size_t classes = anchors::kDefaultAnchors;
  std::size_t latent = flows::kDefaultLatentDim;
  std::size_t flow_layers = flows::kDefaultLayers;
  std::size_t feature = 256;     // backbone output and pre-latent width
  std::size_t classifier_hidden = 256;
  /// Post-CoverNet head width; 0 picks the width that matches the ISAP
  /// parameter count.
  std::size_t postcovernet_hidden = 0;
  std::size_t ensemble_size = 5;
};

/// Four stride-2 3x3 conv blocks (3 -> 8 -> 16 -> 32 -> 64 channels), then a
/// dense layer from the flattened map to `feature` units.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const std::string& name, std::size_t raster, std::size_t feature, Rng& rng);
  Var operator()(Graph& g, Var raster);
  void collect(diff::ParamList& out);

 private:
  std::array<diff::Conv2d, 4> conv_;
  diff::Linear fc_;
};

/// [feature, state] -> hidden (relu) -> out.
class Head {
 public:
  Head() = default;
  Head(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
       double out_gain = 1.0);
  struct Output {
    Var hidden;  // pre-latent feature
    Var out;
  };
  Output operator()(Graph& g, Var feature, Var state);
  void collect(diff::ParamList& out);

 private:
  diff::Linear l1_, l2_;
};

/// Dense -> [32, s, s] -> four stride-2 transposed convs -> sigmoid.
class RasterDecoder {
 public:
  RasterDecoder() = default;
  RasterDecoder(const std::string& name, std::size_t in, std::size_t raster, Rng& rng);
  Var operator()(Graph& g, Var feature);  // [B, 1, H, W]
  void collect(diff::ParamList& out);

 private:
  std::size_t seed_size_ = 4;
  diff::Linear fc_;
  std::array<diff::ConvTranspose2d, 4> up_;
};

/// z -> 64 (relu) -> past waypoints and state.
class AgentDecoder {
 public:
  AgentDecoder() = default;
  AgentDecoder(const std::string& name, std::size_t latent, Rng& rng);
  Var operator()(Graph& g, Var z);
  void collect(diff::ParamList& out);

 private:
  diff::Linear l1_, l2_;
};

struct Forward {
  Var logits;                    // covernet
  Var alpha;                     // evidential: aggregated (isap) or single
  std::array<Var, 3> concept_alpha{};  // isap: agent, map, social
  std::array<Var, 3> latent{};         // isap: z_agent, z_map, z_sc; postcovernet: [0]
  Var agent_rec, map_rec, sc_rec;      // isap decoders
};

/// A single network (not an ensemble). Parameters are owned and must not
/// move while a Graph references them, so Model is non-copyable.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  std::uint64_t seed() const { return seed_; }

  Forward forward(Graph& g, const Batch& batch, bool train);

  diff::ParamList parameters();
  /// Parameter groups for gradient-flow checks: name -> members.
  std::vector<std::pair<std::string, diff::ParamList>> parameter_groups();
  std::vector<diff::BatchNormStats*> batch_norm_stats();
  std::vector<flows::FlowBank*> flow_banks();

  void set_budget(evidential::CertaintyBudget b) { budget_ = std::move(b); }
  const evidential::CertaintyBudget& budget() const { return budget_; }

 private:
  Var evidence(Graph& g, flows::FlowBank& bank, Var z, bool train);

  ModelConfig cfg_;
  std::uint64_t seed_;
  evidential::CertaintyBudget budget_;
  Backbone backbone_;
  Head classifier_;                 // covernet
  std::array<Head, 3> heads_;       // isap; postcovernet uses heads_[0]
  std::array<flows::FlowBank, 3> banks_;
  AgentDecoder agent_dec_;
  RasterDecoder map_dec_, sc_dec_;
};

/// Post-CoverNet head width giving the same total parameter count as ISAP.
std::size_t parity_hidden(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Losses

struct LossParts {
  Var total;      // batch mean of the training objective
  Var primary;    // batch mean ELBO (evidential) or cross-entropy (covernet)
  Var rec_agent;  // isap only, batch means of per-sample SSE
  Var rec_map;
  Var rec_sc;
};

LossParts compute_loss(Graph& g, const Model& model, const Forward& f, const Batch& batch,
                       const evidential::LossConfig& cfg);

/// Per-sample sum of squared errors, [B].
Var sse(Var prediction, const Tensor& target);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  /// Keep the checkpoint with the lowest validation loss (ELBO for the
  /// evidential models, cross-entropy for classifiers) instead of the last.
  bool select_best = false;
  evidential::LossConfig loss;
  /// Per-epoch progress lines on stderr.
  bool verbose = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double seconds = 0;
};

struct TrainedModel {
  std::unique_ptr<Model> model;
  std::vector<EpochLog> log;
  std::size_t selected_epoch = 0;
};

/// Trains one network on the train split, validating on val_id. Scenes in
/// OOD splits are never batched. Throws NumericalError on divergence.
TrainedModel train_model(const ModelConfig& cfg, const TrainConfig& tc,
                         const std::vector<scene::Scene>& scenes,
                         const std::vector<std::size_t>& labels);

/// Evaluation-mode validation loss over the given scenes.
double validation_loss(Model& model, const std::vector<scene::Scene>& scenes,
                       std::span<const std::size_t> indices, const std::vector<std::size_t>& labels,
                       const evidential::LossConfig& loss, std::size_t batch_size);

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleScores {
  std::vector<double> mean_probs;
  std::size_t predicted = 0;
  double variance = 0;  // population variance of the predicted class prob
  double score = 0;     // 1 / (variance + 1e-12)
};

inline constexpr double kVarianceFloor = 1e-12;

/// Throws ValidationError with fewer than 2 members.
EnsembleScores ensemble_scores(const std::vector<std::vector<double>>& member_probs);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  std::vector<std::unique_ptr<Model>> members;  // one unless ensemble
  ModelKind kind = ModelKind::isap;
  std::uint64_t anchor_hash = 0;
  std::size_t epoch = 0;
  io::KeyValues config;
};

io::KeyValues echo(const ModelConfig& cfg);
io::KeyValues echo(const TrainConfig& cfg);

/// Stores every parameter, batch-norm running statistics and the certainty
/// budget as f64.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a ModelConfig from a checkpoint's config echo.
ModelConfig model_config_from(const io::KeyValues& kv);

}  // namespace isap::model
