#pragma once

// Small trainable layers over the op suite. Layers own their Parameters and
// must not move while a Graph referencing them is alive.

#include <string>
#include <vector>

#include "isap/diff/graph.hpp"
#include "isap/diff/ops.hpp"
#include "isap/rng.hpp"

namespace isap::diff {

using ParamList = std::vector<Parameter*>;

class Linear {
 public:
  Linear() = default;
  /// He-normal weights scaled by gain, zero bias.
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
  Var operator()(Graph& g, Var x);
  void collect(ParamList& out) { out.push_back(&weight_); out.push_back(&bias_); }
  std::size_t in_features() const { return weight_.value.dim(0); }
  std::size_t out_features() const { return weight_.value.dim(1); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;  // [in, out]
  Parameter bias_;    // [out]
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch,
         std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Var operator()(Graph& g, Var x);
  void collect(ParamList& out) { out.push_back(&weight_); out.push_back(&bias_); }

 private:
  Parameter weight_;  // [out, in, k, k]
  Parameter bias_;
  std::size_t stride_ = 1, pad_ = 0;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, std::size_t in_ch, std::size_t out_ch,
                  std::size_t kernel, std::size_t stride, std::size_t pad,
                  Rng& rng);
  Var operator()(Graph& g, Var x);
  void collect(ParamList& out) { out.push_back(&weight_); out.push_back(&bias_); }

 private:
  Parameter weight_;  // [in, out, k, k]
  Parameter bias_;
  std::size_t stride_ = 1, pad_ = 0;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(std::string name, std::size_t features);
  Var operator()(Graph& g, Var x, bool train);
  void collect(ParamList& out) { out.push_back(&gamma_); out.push_back(&beta_); }
  BatchNormStats& stats() { return stats_; }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  const BatchNormStats& stats() const { return stats_; }

 private:
  Parameter gamma_;
  Parameter beta_;
  BatchNormStats stats_;
};

std::size_t count_parameters(const ParamList& params);

}  // namespace isap::diff
