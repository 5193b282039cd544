#pragma once

// Oracles and fixtures shared by the unit suites and the acceptance binary.

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "isap/anchors.hpp"
#include "isap/diff/graph.hpp"
#include "isap/diff/tensor.hpp"
#include "isap/flows.hpp"
#include "isap/metrics.hpp"
#include "isap/rng.hpp"

namespace isap::testing {

using diff::Graph;
using diff::Shape;
using diff::Tensor;
using diff::Var;

// ---------------------------------------------------------------------------
// Autodiff

Tensor random_tensor(Rng& rng, Shape s, double lo = -1, double hi = 1);

/// Contracts an arbitrary-shaped output with fixed random weights.
Var contract(Graph& g, Var y, std::uint64_t seed);

struct OpCase {
  std::string name;
  std::function<Tensor(Rng&)> input;
  std::function<Var(Graph&, Var)> f;
};

/// One entry per differentiable op (and per differentiable argument).
std::vector<OpCase> op_cases();

/// Worst grad_check error of one case over `trials` random inputs.
double op_case_error(const OpCase& c, Rng& rng, int trials);

/// Worst relative error between reverse-mode and central-difference
/// gradients of the per-sample ISAP training loss, probing `per_tensor`
/// random entries of every parameter tensor of a small randomly initialized
/// model on each of `samples` single-scene batches.
double isap_loss_grad_error(std::uint64_t seed, std::size_t samples, std::size_t per_tensor);

// ---------------------------------------------------------------------------
// Flows

/// Random but valid parameters: alpha in [0.2, 2], beta in [-0.95 alpha, 1.5].
void randomize(flows::RadialFlowStack& s, Rng& rng, double center_sd = 1.0);

Tensor points(const std::vector<std::vector<double>>& rows);
std::vector<double> stack_density(flows::RadialFlowStack& s, const Tensor& z);

/// Class-0 forward map through every layer, plus the accumulated logdet.
std::pair<std::vector<double>, double> forward_map(flows::RadialFlowStack& s,
                                                   const std::vector<double>& z);
double log_abs_det(std::vector<std::vector<double>> m);
/// log|det J| of forward_map by central differences and pivoted LU.
double numerical_logdet(flows::RadialFlowStack& s, const std::vector<double>& z);

/// Midpoint-rule mass of exp(log_density) over [-8, 8]^2 (D = 2 only).
double flow_mass(flows::RadialFlowStack& s, double step = 0.05);

// ---------------------------------------------------------------------------
// Metrics

anchors::FutureTrack random_track(Rng& rng);
anchors::AnchorSet random_anchors(Rng& rng, std::size_t c);
std::vector<double> random_probs(Rng& rng, std::size_t c, bool ties);
std::vector<metrics::ScoredSample> random_scored(Rng& rng, std::size_t n, bool ties);

double oracle_ade(const anchors::FutureTrack& a, const anchors::FutureTrack& b);
double oracle_min_ade(const std::vector<double>& p, const anchors::AnchorSet& s,
                      const anchors::FutureTrack& gt, std::size_t k);
double oracle_fde(const std::vector<double>& p, const anchors::AnchorSet& s,
                  const anchors::FutureTrack& gt);
double oracle_auroc(const std::vector<metrics::ScoredSample>& s);
double oracle_apr(const std::vector<metrics::ScoredSample>& s);
double oracle_ece(const std::vector<metrics::Confidence>& c, std::size_t bins);
double oracle_brier(const std::vector<double>& p, std::size_t label);

// ---------------------------------------------------------------------------
// Files

std::string slurp(const std::filesystem::path& p);

/// Number of <g class="plot"> groups; throws on malformed XML or a missing
/// <svg> root.
std::size_t svg_plot_count(const std::string& text);

}  // namespace isap::testing
